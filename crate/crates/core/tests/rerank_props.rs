mod common;

use proptest::prelude::*;
use volret::corpus::{Corpus, Task, VolumeRecord};
use volret::rerank::{cmir_rerank, cmir_score, rrf_fuse, EmbeddingMatrix, DEFAULT_RRF_K};
use volret::retrieval::{Method, RankedEntry, RankedList};

use common::{cmir_oracle, rrf_oracle};

fn matrix(dim: usize) -> impl Strategy<Value = EmbeddingMatrix<'static>> {
    (1usize..8).prop_flat_map(move |n| {
        prop::collection::vec(-1.0f32..1.0, n * dim).prop_map(move |mut v| {
            for row in v.chunks_exact_mut(dim) {
                row[0] += 2.5;
            }
            EmbeddingMatrix::new(dim, v).unwrap()
        })
    })
}

fn list(method: Method, ids: &[String]) -> RankedList {
    let n = ids.len();
    RankedList::new(
        method,
        ids.iter()
            .enumerate()
            .map(|(i, id)| RankedEntry {
                volume_id: id.clone(),
                score: (n - i) as f64,
            })
            .collect(),
    )
    .unwrap()
}

fn id_lists() -> impl Strategy<Value = [Vec<String>; 3]> {
    let one = prop::sample::subsequence((0..30).map(|i| format!("v{i:02}")).collect::<Vec<_>>(), 0..20).prop_shuffle();
    [one.clone(), one.clone(), one]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cmir_matches_scalar_oracle(q in matrix(6), c in matrix(6)) {
        let got = cmir_score(&q, &c).unwrap();
        let want = cmir_oracle(q.as_slice(), c.as_slice(), 6);
        prop_assert!((got - want).abs() < 1e-5, "{got} vs {want}");
    }

    #[test]
    fn cmir_self_score_is_row_count(q in matrix(5)) {
        let n = q.n_rows() as f64;
        prop_assert!((cmir_score(&q, &q).unwrap() - n).abs() <= n * 1e-6);
    }

    #[test]
    fn cmir_ignores_candidate_row_order(q in matrix(4), c in matrix(4), rot in 0usize..8) {
        let rows: Vec<&[f32]> = (0..c.n_rows()).map(|i| c.row(i)).collect();
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rot % rows.len());
        shuffled.reverse();
        let p = EmbeddingMatrix::new(4, shuffled.concat()).unwrap();
        let a = cmir_score(&q, &c).unwrap();
        let b = cmir_score(&q, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn appending_a_slice_never_lowers_cmir(q in matrix(4), c in matrix(4), extra in prop::collection::vec(-1.0f32..1.0, 4)) {
        let mut rows = c.as_slice().to_vec();
        let mut e = extra;
        e[0] += 2.5;
        rows.extend(e);
        let bigger = EmbeddingMatrix::new(4, rows).unwrap();
        prop_assert!(cmir_score(&q, &bigger).unwrap() >= cmir_score(&q, &c).unwrap() - 1e-6);
    }

    #[test]
    fn rrf_matches_enumeration(lists in id_lists()) {
        let ranked = [
            list(Method::CountBase, &lists[0]),
            list(Method::MaxScore, &lists[1]),
            list(Method::SumSim, &lists[2]),
        ];
        let got = rrf_fuse([&ranked[0], &ranked[1], &ranked[2]], DEFAULT_RRF_K).unwrap();
        let want = rrf_oracle(&lists, DEFAULT_RRF_K);
        prop_assert_eq!(got.len(), want.len());
        for (e, (id, s)) in got.entries().iter().zip(&want) {
            prop_assert_eq!(&e.volume_id, id);
            prop_assert!((e.score - s).abs() < 1e-12);
            prop_assert!(e.score > 0.0 && e.score <= 3.0 / 61.0 + 1e-15);
        }
        let swapped = rrf_fuse([&ranked[2], &ranked[0], &ranked[1]], DEFAULT_RRF_K).unwrap();
        prop_assert_eq!(got, swapped);
    }
}

#[test]
fn query_inside_candidates_ranks_first() {
    let mut corpus = Corpus::new(3).unwrap();
    let rows = [
        ("a", vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        ("b", vec![0.0, 0.0, 1.0, 0.7, 0.7, 0.0]),
        ("c", vec![0.5, 0.5, 0.5, 0.0, 0.1, 1.0]),
    ];
    for (id, emb) in rows {
        corpus
            .insert(VolumeRecord::new(id, Task::Colon, 0, Default::default(), 3, emb).unwrap())
            .unwrap();
    }
    let q = EmbeddingMatrix::from_volume(corpus.get("a").unwrap());
    let candidates = list(Method::CountBase, &["c".into(), "b".into(), "a".into()]);
    let out = cmir_rerank(&q, &candidates, &corpus).unwrap();
    assert_eq!(out.entries()[0].volume_id, "a");
    assert!((out.entries()[0].score - 2.0).abs() < 2e-6);
    assert_eq!(out.method(), Method::Cmir);
}

#[test]
fn unknown_candidate_is_consistency_error() {
    let mut corpus = Corpus::new(2).unwrap();
    corpus
        .insert(VolumeRecord::new("a", Task::Lung, 0, Default::default(), 2, vec![1.0, 0.0]).unwrap())
        .unwrap();
    let q = EmbeddingMatrix::from_volume(corpus.get("a").unwrap());
    let candidates = list(Method::CountBase, &["zz".into()]);
    assert!(matches!(
        cmir_rerank(&q, &candidates, &corpus),
        Err(volret::Error::Consistency(_))
    ));
}
