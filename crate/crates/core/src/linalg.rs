//! Small dense kernels over `f32` storage.

/// Inner product accumulated in `f64`.
///
/// Products of two `f32` values are exact in `f64`, so results only differ
/// from a sequential sum by a few ulps of `f64`. Rankings built on these
/// scores are therefore stable against summation order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    let mut tail = 0f64;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += f64::from(*x) * f64::from(*y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = a · bᵀ` for row-major `a` (`n × dim`) and `b` (`m × dim`); `out` is `n × m`.
pub fn gemm_abt(a: &[f32], b: &[f32], dim: usize, out: &mut [f32]) {
    let n = a.len() / dim;
    let m = b.len() / dim;
    assert_eq!(out.len(), n * m);
    if n == 0 || m == 0 {
        return;
    }
    // SAFETY: the slices cover n×dim, m×dim and n×m elements with the
    // strides passed below, and `out` does not alias the inputs.
    unsafe {
        matrixmultiply::sgemm(
            n,
            dim,
            m,
            1.0,
            a.as_ptr(),
            dim as isize,
            1,
            b.as_ptr(),
            1,
            dim as isize,
            0.0,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
}
