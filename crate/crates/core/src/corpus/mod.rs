//! Volumes, slice embeddings and the corpus container.
//!
//! A volume is an ordered stack of axial slices; each slice is represented by
//! one L2-normalized embedding of the corpus-wide dimension. Labels (task,
//! tumor stage, organ membership per slice) travel with the volume so every
//! downstream stage can filter and judge without touching pixel data.

mod synth;
mod vemb;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{generate_synthetic_corpus, SyntheticSpec, TaskCounts};
pub use vemb::{
    load_corpus, load_embeddings, metadata_path_for, read_metadata, write_corpus, write_embeddings, write_metadata,
    VolumeMeta, VEMB_MAGIC, VEMB_VERSION,
};

/// Allowed deviation of a stored vector's norm from 1 before it is re-normalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Highest tumor stage; stage 0 means no tumor.
pub const MAX_STAGE: u8 = 4;

/// The four segmentation tasks a volume can originate from. Each task names
/// the organ whose tumor it was collected for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Colon,
    Liver,
    Lung,
    Pancreas,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Colon, Task::Liver, Task::Lung, Task::Pancreas];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Colon => "colon",
            Task::Liver => "liver",
            Task::Lung => "lung",
            Task::Pancreas => "pancreas",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "colon" => Ok(Task::Colon),
            "liver" => Ok(Task::Liver),
            "lung" => Ok(Task::Lung),
            "pancreas" => Ok(Task::Pancreas),
            other => Err(Error::Input(format!("unknown task `{other}`"))),
        }
    }
}

/// A single L2-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Rejects empty, zero and non-finite input.
    pub fn new(mut values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("embedding must have positive dimension".into()));
        }
        normalize_in_place(&mut values)?;
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub(crate) fn l2_norm(values: &[f32]) -> f64 {
    values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

/// Scales `values` to unit norm unless it is already within [`NORM_TOLERANCE`].
pub(crate) fn normalize_in_place(values: &mut [f32]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::CorruptCorpus("embedding contains NaN or Inf".into()));
    }
    let norm = l2_norm(values);
    if norm == 0.0 {
        return Err(Error::CorruptCorpus("embedding has zero norm".into()));
    }
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        for v in values.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(())
}

/// Position of one slice inside the corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceKey {
    pub volume_id: String,
    pub slice_index: u32,
}

impl fmt::Display for SliceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.volume_id, self.slice_index)
    }
}

/// One volume: its slice embeddings (row-major, `num_slices × dim`) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeRecord {
    pub volume_id: String,
    pub task: Task,
    /// 0 = no tumor, 1..=4 = T stage of the task's tumor.
    pub tumor_stage: u8,
    /// Slices that show the task's own organ.
    pub organ_slice_indices: BTreeSet<u32>,
    /// Slices that show organs other than the task's own. Used when another
    /// organ is probed, e.g. lung slices inside a liver scan.
    pub other_organ_slices: BTreeMap<Task, BTreeSet<u32>>,
    dim: usize,
    embeddings: Vec<f32>,
}

impl VolumeRecord {
    /// Builds a record, normalizing every row and validating the labels.
    pub fn new(
        volume_id: impl Into<String>,
        task: Task,
        tumor_stage: u8,
        organ_slice_indices: BTreeSet<u32>,
        dim: usize,
        mut embeddings: Vec<f32>,
    ) -> Result<Self> {
        let volume_id = volume_id.into();
        if dim == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        if embeddings.is_empty() || embeddings.len() % dim != 0 {
            return Err(Error::CorruptCorpus(format!(
                "volume {volume_id}: {} values is not a positive multiple of dim {dim}",
                embeddings.len()
            )));
        }
        if tumor_stage > MAX_STAGE {
            return Err(Error::Consistency(format!(
                "volume {volume_id}: tumor stage {tumor_stage} outside 0..=4"
            )));
        }
        for row in embeddings.chunks_exact_mut(dim) {
            normalize_in_place(row)?;
        }
        let record = VolumeRecord {
            volume_id,
            task,
            tumor_stage,
            organ_slice_indices,
            other_organ_slices: BTreeMap::new(),
            dim,
            embeddings,
        };
        record.check_slice_set(&record.organ_slice_indices)?;
        Ok(record)
    }

    /// Attaches membership for organs other than the task's own.
    pub fn with_other_organ_slices(mut self, other: BTreeMap<Task, BTreeSet<u32>>) -> Result<Self> {
        for (organ, slices) in &other {
            if *organ == self.task {
                return Err(Error::Consistency(format!(
                    "volume {}: own organ {organ} listed among other organs",
                    self.volume_id
                )));
            }
            self.check_slice_set(slices)?;
        }
        self.other_organ_slices = other.into_iter().filter(|(_, s)| !s.is_empty()).collect();
        Ok(self)
    }

    fn check_slice_set(&self, set: &BTreeSet<u32>) -> Result<()> {
        match set.iter().next_back() {
            Some(&last) if last as usize >= self.num_slices() => Err(Error::Consistency(format!(
                "volume {}: organ slice {last} outside 0..{}",
                self.volume_id,
                self.num_slices()
            ))),
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_slices(&self) -> usize {
        self.embeddings.len() / self.dim
    }

    /// Row-major `num_slices × dim` embedding block.
    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn slice_embedding(&self, slice: usize) -> &[f32] {
        &self.embeddings[slice * self.dim..(slice + 1) * self.dim]
    }

    /// Slices of this volume that contain `organ`. Empty when the organ is absent.
    pub fn organ_slices(&self, organ: Task) -> Option<&BTreeSet<u32>> {
        if organ == self.task {
            Some(&self.organ_slice_indices)
        } else {
            self.other_organ_slices.get(&organ)
        }
    }

    pub fn contains_organ(&self, organ: Task) -> bool {
        self.organ_slices(organ).is_some_and(|s| !s.is_empty())
    }

    pub fn slice_contains_organ(&self, organ: Task, slice: usize) -> bool {
        self.organ_slices(organ).is_some_and(|s| s.contains(&(slice as u32)))
    }

    /// Tumor stage as seen when probing `organ`: a volume collected for a
    /// different organ counts as tumor-free for the probed one. `None` means
    /// the volume's own label applies.
    pub fn stage_for(&self, organ: Option<Task>) -> u8 {
        match organ {
            Some(o) if o != self.task => 0,
            _ => self.tumor_stage,
        }
    }
}

/// All volumes of one embedding space, keyed by volume id.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    volumes: BTreeMap<String, VolumeRecord>,
}

impl Corpus {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        Ok(Corpus {
            dim,
            volumes: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, volume: VolumeRecord) -> Result<()> {
        if volume.dim() != self.dim {
            return Err(Error::CorruptCorpus(format!(
                "volume {} has dim {}, corpus has {}",
                volume.volume_id,
                volume.dim(),
                self.dim
            )));
        }
        if self.volumes.contains_key(&volume.volume_id) {
            return Err(Error::Consistency(format!("duplicate volume id {}", volume.volume_id)));
        }
        self.volumes.insert(volume.volume_id.clone(), volume);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn get(&self, volume_id: &str) -> Option<&VolumeRecord> {
        self.volumes.get(volume_id)
    }

    /// Like [`Corpus::get`] but reports a consistency error for unknown ids.
    pub fn require(&self, volume_id: &str) -> Result<&VolumeRecord> {
        self.get(volume_id)
            .ok_or_else(|| Error::Consistency(format!("unknown volume id {volume_id}")))
    }

    /// Volumes in ascending id order.
    pub fn volumes(&self) -> impl Iterator<Item = &VolumeRecord> {
        self.volumes.values()
    }

    pub fn total_slices(&self) -> usize {
        self.volumes.values().map(VolumeRecord::num_slices).sum()
    }

    /// Largest `| ‖v‖₂ − 1 |` across all stored vectors.
    pub fn max_norm_deviation(&self) -> f64 {
        self.volumes()
            .flat_map(|v| v.embeddings().chunks_exact(self.dim))
            .map(|row| (l2_norm(row) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Per-task `(volumes, slices)` counts.
    pub fn summary(&self) -> BTreeMap<Task, (usize, usize)> {
        let mut out: BTreeMap<Task, (usize, usize)> = Task::ALL.iter().map(|&t| (t, (0, 0))).collect();
        for v in self.volumes() {
            let entry = out.entry(v.task).or_default();
            entry.0 += 1;
            entry.1 += v.num_slices();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, axis: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    #[test]
    fn embedding_vector_is_normalized() {
        let v = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        assert!((l2_norm(v.as_slice()) - 1.0).abs() < 1e-6);
        assert!((v.as_slice()[0] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn embedding_vector_rejects_bad_values() {
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::new(vec![f32::NAN, 1.0]).is_err());
        assert!(EmbeddingVector::new(vec![f32::INFINITY, 1.0]).is_err());
    }

    #[test]
    fn volume_rejects_out_of_range_organ_slice() {
        let emb = [unit(2, 0), unit(2, 1)].concat();
        let err = VolumeRecord::new("a", Task::Lung, 1, [2].into(), 2, emb).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn volume_rejects_stage_above_four() {
        let err = VolumeRecord::new("a", Task::Lung, 5, BTreeSet::new(), 2, unit(2, 0)).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn volume_rejects_ragged_embeddings() {
        let err = VolumeRecord::new("a", Task::Lung, 0, BTreeSet::new(), 3, vec![1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::CorruptCorpus(_)));
    }

    #[test]
    fn stage_is_zero_for_foreign_organ() {
        let v = VolumeRecord::new("a", Task::Liver, 3, [0].into(), 2, unit(2, 0))
            .unwrap()
            .with_other_organ_slices([(Task::Lung, [0].into())].into())
            .unwrap();
        assert_eq!(v.stage_for(None), 3);
        assert_eq!(v.stage_for(Some(Task::Liver)), 3);
        assert_eq!(v.stage_for(Some(Task::Lung)), 0);
        assert!(v.contains_organ(Task::Lung));
        assert!(!v.contains_organ(Task::Colon));
        assert!(v.slice_contains_organ(Task::Lung, 0));
    }

    #[test]
    fn corpus_rejects_duplicate_and_mismatched_volumes() {
        let mut c = Corpus::new(2).unwrap();
        c.insert(VolumeRecord::new("a", Task::Lung, 0, BTreeSet::new(), 2, unit(2, 0)).unwrap())
            .unwrap();
        let dup = VolumeRecord::new("a", Task::Lung, 0, BTreeSet::new(), 2, unit(2, 1)).unwrap();
        assert!(matches!(c.insert(dup), Err(Error::Consistency(_))));
        let wrong = VolumeRecord::new("b", Task::Lung, 0, BTreeSet::new(), 3, unit(3, 1)).unwrap();
        assert!(matches!(c.insert(wrong), Err(Error::CorruptCorpus(_))));
    }

    #[test]
    fn task_parses_case_insensitively() {
        assert_eq!("Lung".parse::<Task>().unwrap(), Task::Lung);
        assert!("kidney".parse::<Task>().is_err());
    }
}
