//! Seeded query/database splits and the three database setups.
//!
//! Organ-specific plans draw tumor volumes of one task per stage as positive
//! queries and an equal number of tumor-free volumes from the other tasks
//! that show the same organ as negatives; every other volume forms the
//! database. The organ-agnostic plan samples positives and negatives per task
//! and keeps a single database for all organs. Splits are always at volume
//! level.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ann::{IndexConfig, SliceFilter, SliceIndex};
use crate::corpus::{Corpus, Task, VolumeRecord, MAX_STAGE};
use crate::error::{Error, Result};
use crate::fsutil::write_bytes_atomic;

pub const DEFAULT_SAMPLING_FRACTION: f64 = 0.25;

/// Database setup of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One organ; the index holds only slices showing that organ.
    OrganSpecificSeg,
    /// Same volumes as the segmented setup, all slices indexed.
    OrganSpecificNoseg,
    /// All tasks in one database, all slices indexed.
    OrganAgnostic,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::OrganSpecificSeg, Mode::OrganSpecificNoseg, Mode::OrganAgnostic];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OrganSpecificSeg => "organ_specific_seg",
            Mode::OrganSpecificNoseg => "organ_specific_noseg",
            Mode::OrganAgnostic => "organ_agnostic",
        }
    }

    pub fn is_organ_specific(self) -> bool {
        !matches!(self, Mode::OrganAgnostic)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown mode `{s}`")))
    }
}

/// A seeded query/database split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub mode: Mode,
    pub organ: Option<Task>,
    pub p: f64,
    pub seed: u64,
    pub query_ids: BTreeSet<String>,
    pub database_ids: BTreeSet<String>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

fn check_fraction(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("sampling fraction {p} outside (0, 1]")))
    }
}

/// `count` draws with replacement from `pool`, de-duplicated.
fn draw_with_replacement(pool: &[&str], count: usize, rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    (0..count)
        .map(|_| pool[rng.random_range(0..pool.len())].to_owned())
        .collect()
}

/// `count` distinct items of `pool`.
fn draw_distinct(pool: &[&str], count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i].to_owned())
        .collect()
}

fn complement(corpus: &Corpus, query: &BTreeSet<String>) -> BTreeSet<String> {
    corpus
        .volumes()
        .map(|v| v.volume_id.clone())
        .filter(|id| !query.contains(id))
        .collect()
}

/// Organ-specific split. The returned plan uses [`Mode::OrganSpecificSeg`];
/// the unsegmented setup shares it via [`ExperimentPlan::with_mode`].
pub fn sample_organ_specific(corpus: &Corpus, organ: Task, p: f64, seed: u64) -> Result<ExperimentPlan> {
    check_fraction(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut positives = BTreeSet::new();
    for stage in 1..=MAX_STAGE {
        let group: Vec<&str> = corpus
            .volumes()
            .filter(|v| v.task == organ && v.tumor_stage == stage)
            .map(|v| v.volume_id.as_str())
            .collect();
        if group.is_empty() {
            return Err(Error::Sampling(format!("no {organ} volumes with tumor stage {stage}")));
        }
        let draws = round_half_up(group.len() as f64 * p);
        positives.extend(draw_with_replacement(&group, draws, &mut rng));
    }
    if positives.is_empty() {
        return Err(Error::Sampling(format!(
            "fraction {p} selects no positive {organ} queries"
        )));
    }

    let pool: Vec<&str> = corpus
        .volumes()
        .filter(|v| v.task != organ && v.contains_organ(organ))
        .map(|v| v.volume_id.as_str())
        .collect();
    if pool.len() < positives.len() {
        return Err(Error::Sampling(format!(
            "{} positive {organ} queries but only {} negative candidates",
            positives.len(),
            pool.len()
        )));
    }
    let negatives = draw_distinct(&pool, positives.len(), &mut rng);

    let mut query_ids = positives;
    query_ids.extend(negatives);
    let database_ids = complement(corpus, &query_ids);
    Ok(ExperimentPlan {
        mode: Mode::OrganSpecificSeg,
        organ: Some(organ),
        p,
        seed,
        query_ids,
        database_ids,
    })
}

/// Organ-agnostic split: per task, positives drawn from tumor volumes and the
/// same number of tumor-free volumes from that task. A task short of
/// tumor-free volumes borrows from the other tasks' leftovers.
pub fn sample_organ_agnostic(corpus: &Corpus, p: f64, seed: u64) -> Result<ExperimentPlan> {
    check_fraction(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut query_ids = BTreeSet::new();
    let mut shortfall = 0usize;
    let mut total_pos = 0usize;

    for task in Task::ALL {
        let of_task = |tumor: bool| -> Vec<&str> {
            corpus
                .volumes()
                .filter(|v| v.task == task && (v.tumor_stage > 0) == tumor)
                .map(|v| v.volume_id.as_str())
                .collect()
        };
        let tumor = of_task(true);
        if tumor.is_empty() {
            continue;
        }
        let positives = draw_with_replacement(&tumor, round_half_up(tumor.len() as f64 * p), &mut rng);
        let healthy = of_task(false);
        let take = positives.len().min(healthy.len());
        shortfall += positives.len() - take;
        total_pos += positives.len();
        query_ids.extend(positives);
        query_ids.extend(draw_distinct(&healthy, take, &mut rng));
    }
    if total_pos == 0 {
        return Err(Error::Sampling(format!("fraction {p} selects no positive queries")));
    }
    if shortfall > 0 {
        let leftover: Vec<&str> = corpus
            .volumes()
            .filter(|v| v.tumor_stage == 0 && !query_ids.contains(&v.volume_id))
            .map(|v| v.volume_id.as_str())
            .collect();
        if leftover.len() < shortfall {
            return Err(Error::Sampling(format!(
                "need {shortfall} more tumor-free volumes, only {} left",
                leftover.len()
            )));
        }
        let extra = draw_distinct(&leftover, shortfall, &mut rng);
        query_ids.extend(extra);
    }
    let database_ids = complement(corpus, &query_ids);
    Ok(ExperimentPlan {
        mode: Mode::OrganAgnostic,
        organ: None,
        p,
        seed,
        query_ids,
        database_ids,
    })
}

/// Samples the plan for `mode` (organ is required for organ-specific modes).
pub fn sample_plan(corpus: &Corpus, mode: Mode, organ: Option<Task>, p: f64, seed: u64) -> Result<ExperimentPlan> {
    match (mode, organ) {
        (Mode::OrganAgnostic, _) => sample_organ_agnostic(corpus, p, seed),
        (m, Some(o)) => Ok(sample_organ_specific(corpus, o, p, seed)?.with_mode(m)),
        (m, None) => Err(Error::Input(format!("mode {m} needs an organ"))),
    }
}

/// An index built for a plan plus the query volumes to run against it.
#[derive(Debug)]
pub struct Materialized<'c> {
    pub index: SliceIndex,
    pub queries: Vec<&'c VolumeRecord>,
    /// Slice selection applied to query volumes.
    pub query_filter: SliceFilter,
}

impl ExperimentPlan {
    /// Same split under another organ-specific setup.
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Organ whose stage decides relevance; `None` uses each volume's own label.
    pub fn relevance_organ(&self) -> Option<Task> {
        if self.mode.is_organ_specific() {
            self.organ
        } else {
            None
        }
    }

    /// Whether `volume` is a positive (tumor-bearing) case under this plan.
    pub fn is_positive(&self, volume: &VolumeRecord) -> bool {
        volume.stage_for(self.relevance_organ()) > 0
    }

    /// Checks the plan against `corpus`: known ids, disjoint sets, 1:1 positives to negatives.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        check_fraction(self.p)?;
        if self.mode.is_organ_specific() && self.organ.is_none() {
            return Err(Error::Consistency(format!("{} plan without organ", self.mode)));
        }
        if let Some(id) = self.query_ids.intersection(&self.database_ids).next() {
            return Err(Error::Consistency(format!("volume {id} is both query and database")));
        }
        let mut pos = 0usize;
        for id in &self.query_ids {
            if self.is_positive(corpus.require(id)?) {
                pos += 1;
            }
        }
        for id in &self.database_ids {
            corpus.require(id)?;
        }
        let neg = self.query_ids.len() - pos;
        if pos != neg {
            return Err(Error::Consistency(format!(
                "plan has {pos} positive and {neg} negative queries"
            )));
        }
        Ok(())
    }

    /// Builds the index and query set this plan describes.
    pub fn materialize<'c>(&self, corpus: &'c Corpus, config: &IndexConfig) -> Result<Materialized<'c>> {
        self.validate(corpus)?;
        let (index_filter, query_filter) = match (self.mode, self.organ) {
            (Mode::OrganSpecificSeg, Some(o)) => (SliceFilter::Organ(o), SliceFilter::Organ(o)),
            (Mode::OrganSpecificNoseg, Some(o)) => (SliceFilter::All, SliceFilter::Organ(o)),
            _ => (SliceFilter::All, SliceFilter::All),
        };
        let database = self
            .database_ids
            .iter()
            .map(|id| corpus.require(id))
            .collect::<Result<Vec<_>>>()?;
        let index = SliceIndex::build(corpus.dim(), database, config, &index_filter)?;
        let queries = self
            .query_ids
            .iter()
            .map(|id| corpus.require(id))
            .collect::<Result<_>>()?;
        Ok(Materialized {
            index,
            queries,
            query_filter,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Free-function form of [`ExperimentPlan::materialize`].
pub fn materialize<'c>(plan: &ExperimentPlan, corpus: &'c Corpus, config: &IndexConfig) -> Result<Materialized<'c>> {
    plan.materialize(corpus, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::VolumeRecord;
    use std::collections::BTreeMap;

    /// Four stages × four lung tumor volumes, plus tumor-free volumes of the
    /// other tasks that show lung.
    fn toy() -> Corpus {
        let mut c = Corpus::new(2).unwrap();
        let emb = vec![1.0, 0.0, 0.0, 1.0];
        for stage in 1..=4u8 {
            for i in 0..4 {
                c.insert(
                    VolumeRecord::new(
                        format!("lung_s{stage}_{i}"),
                        Task::Lung,
                        stage,
                        [0].into(),
                        2,
                        emb.clone(),
                    )
                    .unwrap(),
                )
                .unwrap();
            }
        }
        for (t, n) in [(Task::Liver, 3), (Task::Colon, 3), (Task::Pancreas, 3)] {
            for i in 0..n {
                let other: BTreeMap<Task, BTreeSet<u32>> = [(Task::Lung, [1].into())].into();
                c.insert(
                    VolumeRecord::new(format!("{t}_{i}"), t, 0, [0].into(), 2, emb.clone())
                        .unwrap()
                        .with_other_organ_slices(other)
                        .unwrap(),
                )
                .unwrap();
            }
        }
        c
    }

    #[test]
    fn quarter_fraction_gives_one_positive_per_stage() {
        let c = toy();
        let plan = sample_organ_specific(&c, Task::Lung, 0.25, 3).unwrap();
        let pos: Vec<_> = plan.query_ids.iter().filter(|id| id.starts_with("lung")).collect();
        assert_eq!(pos.len(), 4);
        for s in 1..=4 {
            assert_eq!(pos.iter().filter(|id| id.starts_with(&format!("lung_s{s}"))).count(), 1);
        }
        assert_eq!(plan.query_ids.len(), 8);
        plan.validate(&c).unwrap();
        assert_eq!(plan.query_ids.len() + plan.database_ids.len(), c.len());
    }

    #[test]
    fn full_fraction_keeps_only_unsampled_in_database() {
        let mut c = toy();
        // Enough negatives for any de-duplicated positive count.
        for i in 3..20 {
            let other: BTreeMap<Task, BTreeSet<u32>> = [(Task::Lung, [1].into())].into();
            c.insert(
                VolumeRecord::new(
                    format!("liver_x{i}"),
                    Task::Liver,
                    0,
                    [0].into(),
                    2,
                    vec![1.0, 0.0, 0.0, 1.0],
                )
                .unwrap()
                .with_other_organ_slices(other)
                .unwrap(),
            )
            .unwrap();
        }
        let plan = sample_organ_specific(&c, Task::Lung, 1.0, 0).unwrap();
        plan.validate(&c).unwrap();
        for id in &plan.database_ids {
            assert!(!plan.query_ids.contains(id));
        }
        let pos = plan.query_ids.iter().filter(|id| id.starts_with("lung")).count();
        assert!((4..=16).contains(&pos));
    }

    #[test]
    fn insufficient_negatives_is_a_sampling_error() {
        let c = toy();
        // p = 1 draws ~10 unique positives; only 9 negatives exist.
        let err = (0..20)
            .map(|seed| sample_organ_specific(&c, Task::Lung, 1.0, seed))
            .find(|r| r.is_err())
            .expect("some seed oversamples");
        assert!(matches!(err, Err(Error::Sampling(_))));
    }

    #[test]
    fn missing_stage_group_is_a_sampling_error() {
        let c = toy();
        assert!(matches!(
            sample_organ_specific(&c, Task::Liver, 0.25, 0),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let c = toy();
        assert!(sample_organ_specific(&c, Task::Lung, 0.0, 0).is_err());
        assert!(sample_organ_specific(&c, Task::Lung, 1.5, 0).is_err());
    }

    #[test]
    fn agnostic_toy_counts() {
        let mut c = Corpus::new(2).unwrap();
        for t in Task::ALL {
            for i in 0..4 {
                c.insert(
                    VolumeRecord::new(format!("{t}_t{i}"), t, (i % 4 + 1) as u8, [0].into(), 2, vec![1.0, 0.0])
                        .unwrap(),
                )
                .unwrap();
                c.insert(VolumeRecord::new(format!("{t}_h{i}"), t, 0, [0].into(), 2, vec![0.0, 1.0]).unwrap())
                    .unwrap();
            }
        }
        let plan = sample_organ_agnostic(&c, 0.25, 11).unwrap();
        let pos = plan.query_ids.iter().filter(|id| id.contains("_t")).count();
        assert_eq!(pos, 4);
        assert_eq!(plan.query_ids.len(), 8);
        plan.validate(&c).unwrap();
        assert_eq!(plan, sample_organ_agnostic(&c, 0.25, 11).unwrap());
    }

    #[test]
    fn plan_json_round_trip_and_field_order() {
        let c = toy();
        let plan = sample_organ_specific(&c, Task::Lung, 0.25, 1).unwrap();
        let json = plan.to_json().unwrap();
        let keys: Vec<usize> = [
            "\"mode\"",
            "\"organ\"",
            "\"p\"",
            "\"seed\"",
            "\"query_ids\"",
            "\"database_ids\"",
        ]
        .iter()
        .map(|k| json.find(k).unwrap())
        .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back: ExperimentPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn seg_index_is_subset_of_noseg_index() {
        let c = toy();
        let plan = sample_organ_specific(&c, Task::Lung, 0.25, 2).unwrap();
        let cfg = IndexConfig::exact();
        let seg = plan.materialize(&c, &cfg).unwrap();
        let noseg = plan
            .clone()
            .with_mode(Mode::OrganSpecificNoseg)
            .materialize(&c, &cfg)
            .unwrap();
        let seg_keys: BTreeSet<_> = seg.index.keys().collect();
        let noseg_keys: BTreeSet<_> = noseg.index.keys().collect();
        assert!(seg_keys.is_subset(&noseg_keys));
        assert!(seg.index.len() < noseg.index.len());
        assert_eq!(seg.queries.len(), 8);
    }

    #[test]
    fn materialize_rejects_unknown_ids() {
        let c = toy();
        let mut plan = sample_organ_specific(&c, Task::Lung, 0.25, 2).unwrap();
        plan.database_ids.insert("ghost".into());
        assert!(matches!(
            plan.materialize(&c, &IndexConfig::exact()),
            Err(Error::Consistency(_))
        ));
    }
}
