//! Seeded synthetic corpora with planted structure.
//!
//! Every slice is a noisy copy of one latent center. Centers come in three
//! kinds: background anatomy shared across all tasks, one healthy center per
//! organ, and one tumor center per (organ, stage). Tumor centers of an organ
//! share a common lesion direction, so stages differ but stay closer to each
//! other than to healthy tissue. A volume is laid out along
//! its axis as background runs interleaved with organ regions; tumor volumes
//! replace the middle of their own organ region with tumor slices.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, Task, VolumeRecord, MAX_STAGE};
use crate::error::{Error, Result};

/// How many volumes one task contributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub task: Task,
    pub volumes: usize,
    /// Share of the task's volumes without tumor (stage 0). Tumor volumes
    /// cycle through stages 1..=4.
    #[serde(default = "default_negative_fraction")]
    pub negative_fraction: f64,
}

fn default_negative_fraction() -> f64 {
    0.2
}

/// Parameters of [`generate_synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub dimension: usize,
    pub min_slices: usize,
    pub max_slices: usize,
    /// Standard deviation σ of the noise added to a center (norm of the noise ≈ σ).
    pub noise: f64,
    pub background_centers: usize,
    /// Background centers each volume draws from; 0 means all of them.
    pub background_per_volume: usize,
    pub organ_fraction: f64,
    pub tumor_fraction: f64,
    pub other_organ_probability: f64,
    pub other_organ_fraction: f64,
    pub tasks: Vec<TaskCounts>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dimension: 32,
            min_slices: 10,
            max_slices: 30,
            noise: 0.3,
            background_centers: 6,
            background_per_volume: 0,
            organ_fraction: 0.3,
            tumor_fraction: 0.5,
            other_organ_probability: 0.5,
            other_organ_fraction: 0.15,
            tasks: Task::ALL
                .iter()
                .map(|&task| TaskCounts {
                    task,
                    volumes: 5,
                    negative_fraction: default_negative_fraction(),
                })
                .collect(),
        }
    }
}

impl SyntheticSpec {
    /// `volumes_per_task` volumes for each of the four tasks.
    pub fn uniform(volumes_per_task: usize, min_slices: usize, max_slices: usize, dimension: usize) -> Self {
        let mut spec = SyntheticSpec {
            dimension,
            min_slices,
            max_slices,
            ..SyntheticSpec::default()
        };
        for t in &mut spec.tasks {
            t.volumes = volumes_per_task;
        }
        spec
    }

    /// Task proportions of the public four-task dataset (126 colon, 131
    /// liver, 63 lung, 281 pancreas volumes), divided by `divisor`.
    pub fn four_task_scaled(divisor: usize) -> Self {
        let divisor = divisor.max(1);
        let counts = [
            (Task::Colon, 126),
            (Task::Liver, 131),
            (Task::Lung, 63),
            (Task::Pancreas, 281),
        ];
        SyntheticSpec {
            tasks: counts
                .iter()
                .map(|&(task, n)| TaskCounts {
                    task,
                    volumes: (n as f64 / divisor as f64).round() as usize,
                    negative_fraction: default_negative_fraction(),
                })
                .collect(),
            ..SyntheticSpec::default()
        }
    }

    pub fn total_volumes(&self) -> usize {
        self.tasks.iter().map(|t| t.volumes).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_owned()));
        if self.dimension == 0 {
            return bad("dimension must be positive");
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return bad("noise sigma must be finite and non-negative");
        }
        if self.min_slices == 0 || self.min_slices > self.max_slices {
            return bad("slice range must satisfy 1 <= min_slices <= max_slices");
        }
        if self.background_centers == 0 {
            return bad("need at least one background center");
        }
        for (name, f) in [
            ("organ_fraction", self.organ_fraction),
            ("tumor_fraction", self.tumor_fraction),
            ("other_organ_probability", self.other_organ_probability),
            ("other_organ_fraction", self.other_organ_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidSpec(format!("{name} must lie in [0, 1]")));
            }
        }
        let mut seen = BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(t.task) {
                return Err(Error::InvalidSpec(format!("task {} listed twice", t.task)));
            }
            if !(0.0..=1.0).contains(&t.negative_fraction) {
                return bad("negative_fraction must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

struct Centers {
    background: Vec<Vec<f64>>,
    healthy: BTreeMap<Task, Vec<f64>>,
    tumor: BTreeMap<(Task, u8), Vec<f64>>,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn blend(a: &[f64], b: &[f64], wa: f64, wb: f64) -> Vec<f64> {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

impl Centers {
    fn draw(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let dim = spec.dimension;
        let background = (0..spec.background_centers).map(|_| random_unit(rng, dim)).collect();
        let mut healthy = BTreeMap::new();
        let mut tumor = BTreeMap::new();
        for organ in Task::ALL {
            let h = random_unit(rng, dim);
            let lesion = random_unit(rng, dim);
            for stage in 1..=MAX_STAGE {
                let r = random_unit(rng, dim);
                // Organ part, lesion part shared by all stages, stage part.
                let mixed = blend(&blend(&h, &lesion, 0.5, 0.6), &r, 0.78, 0.6);
                tumor.insert((organ, stage), mixed);
            }
            healthy.insert(organ, h);
        }
        Centers {
            background,
            healthy,
            tumor,
        }
    }
}

fn noisy_copy(center: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let scale = sigma / (center.len() as f64).sqrt();
    center
        .iter()
        .map(|&c| {
            let z: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            (c + scale * z) as f32
        })
        .collect()
}

/// Generates a corpus that is a pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = Centers::draw(spec, &mut rng);
    let mut corpus = Corpus::new(spec.dimension)?;

    for counts in &spec.tasks {
        let negatives = (counts.volumes as f64 * counts.negative_fraction).round() as usize;
        for i in 0..counts.volumes {
            let stage = if i < negatives {
                0
            } else {
                ((i - negatives) % MAX_STAGE as usize) as u8 + 1
            };
            let id = format!("{}_{:04}", counts.task, i);
            let volume = generate_volume(spec, &centers, &mut rng, id, counts.task, stage)?;
            corpus.insert(volume)?;
        }
    }
    Ok(corpus)
}

fn generate_volume(
    spec: &SyntheticSpec,
    centers: &Centers,
    rng: &mut ChaCha8Rng,
    id: String,
    task: Task,
    stage: u8,
) -> Result<VolumeRecord> {
    let n = rng.random_range(spec.min_slices..=spec.max_slices);

    // Organ regions and their lengths; each slice shows at most one organ.
    let own_len = ((spec.organ_fraction * n as f64).round() as usize).clamp(1, n);
    let mut regions: Vec<(Task, usize)> = vec![(task, own_len)];
    let mut used = own_len;
    for organ in Task::ALL.into_iter().filter(|&o| o != task) {
        if rng.random_bool(spec.other_organ_probability) {
            let len = ((spec.other_organ_fraction * n as f64).round() as usize).max(1);
            if used + len <= n {
                regions.push((organ, len));
                used += len;
            }
        }
    }
    regions.shuffle(rng);

    // Scatter the background slices into the gaps around the regions.
    let mut gaps = vec![0usize; regions.len() + 1];
    for _ in 0..n - used {
        let g = rng.random_range(0..gaps.len());
        gaps[g] += 1;
    }

    let palette: Vec<usize> = {
        let mut all: Vec<usize> = (0..centers.background.len()).collect();
        if spec.background_per_volume > 0 && spec.background_per_volume < all.len() {
            all.shuffle(rng);
            all.truncate(spec.background_per_volume);
            all.sort_unstable();
        }
        all
    };

    let mut embeddings = Vec::with_capacity(n * spec.dimension);
    let mut own_slices = BTreeSet::new();
    let mut other_slices: BTreeMap<Task, BTreeSet<u32>> = BTreeMap::new();
    let mut slice = 0u32;
    let push_background = |count: usize, embeddings: &mut Vec<f32>, rng: &mut ChaCha8Rng, slice: &mut u32| {
        for _ in 0..count {
            let c = &centers.background[palette[rng.random_range(0..palette.len())]];
            embeddings.extend(noisy_copy(c, spec.noise, rng));
            *slice += 1;
        }
    };
    push_background(gaps[0], &mut embeddings, rng, &mut slice);
    for (k, &(organ, len)) in regions.iter().enumerate() {
        let tumor_span = if organ == task && stage > 0 {
            let t = ((spec.tumor_fraction * len as f64).round() as usize).clamp(1, len);
            let start = (len - t) / 2;
            start..start + t
        } else {
            0..0
        };
        for offset in 0..len {
            let center = if tumor_span.contains(&offset) {
                &centers.tumor[&(organ, stage)]
            } else {
                &centers.healthy[&organ]
            };
            embeddings.extend(noisy_copy(center, spec.noise, rng));
            if organ == task {
                own_slices.insert(slice);
            } else {
                other_slices.entry(organ).or_default().insert(slice);
            }
            slice += 1;
        }
        push_background(gaps[k + 1], &mut embeddings, rng, &mut slice);
    }
    debug_assert_eq!(slice as usize, n);

    VolumeRecord::new(id, task, stage, own_slices, spec.dimension, embeddings)?.with_other_organ_slices(other_slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn same_seed_same_corpus() {
        let spec = SyntheticSpec::uniform(5, 10, 20, 32);
        let a = generate_synthetic_corpus(&spec, 7).unwrap();
        let b = generate_synthetic_corpus(&spec, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        let c = generate_synthetic_corpus(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn slice_counts_in_range() {
        let spec = SyntheticSpec::uniform(5, 10, 20, 32);
        let c = generate_synthetic_corpus(&spec, 1).unwrap();
        for v in c.volumes() {
            assert!((10..=20).contains(&v.num_slices()), "{}", v.num_slices());
            assert!(!v.organ_slice_indices.is_empty());
        }
    }

    #[test]
    fn zero_noise_gives_identical_vectors_per_center() {
        let spec = SyntheticSpec {
            noise: 0.0,
            ..SyntheticSpec::uniform(3, 10, 12, 16)
        };
        let c = generate_synthetic_corpus(&spec, 3).unwrap();
        // Healthy slices of the same organ come from one center.
        let mut rows: Vec<&[f32]> = Vec::new();
        for v in c.volumes().filter(|v| v.task == Task::Lung && v.tumor_stage == 0) {
            for &s in &v.organ_slice_indices {
                rows.push(v.slice_embedding(s as usize));
            }
        }
        assert!(rows.len() > 1);
        for r in &rows {
            assert!((dot(rows[0], r) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn four_task_scaled_has_sixty_volumes() {
        let spec = SyntheticSpec::four_task_scaled(10);
        let counts: Vec<usize> = spec.tasks.iter().map(|t| t.volumes).collect();
        assert_eq!(counts, vec![13, 13, 6, 28]);
        let c = generate_synthetic_corpus(&spec, 0).unwrap();
        assert_eq!(c.len(), 60);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let neg = SyntheticSpec {
            noise: -0.1,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic_corpus(&neg, 0), Err(Error::InvalidSpec(_))));
        let zero_dim = SyntheticSpec {
            dimension: 0,
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_synthetic_corpus(&zero_dim, 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn labels_are_consistent() {
        let c = generate_synthetic_corpus(&SyntheticSpec::four_task_scaled(5), 2).unwrap();
        for v in c.volumes() {
            assert!(v.tumor_stage <= 4);
            let own: BTreeSet<u32> = v.organ_slice_indices.clone();
            for other in v.other_organ_slices.values() {
                assert!(own.is_disjoint(other));
            }
        }
        // Every tumor stage is populated for every task.
        for t in Task::ALL {
            for s in 1..=4 {
                assert!(c.volumes().any(|v| v.task == t && v.tumor_stage == s), "{t} stage {s}");
            }
        }
    }
}
