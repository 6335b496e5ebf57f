use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::IndexConfig;
use crate::corpus::{Corpus, Task};
use crate::error::{Error, Result};
use crate::experiments::{sample_plan, ExperimentPlan, Mode};
use crate::pipeline::{run_query, PipelineConfig, QueryOutcome};
use crate::retrieval::Method;

use super::precision::{relevance_vector, MetricReport};
use super::relevance::RelevanceTask;
use super::wilcoxon::{wilcoxon_signed_rank_two_sided, WilcoxonResult};

/// Group label pooling every query of an organ-agnostic run.
pub const ALL_GROUP: &str = "all";

/// Everything needed to turn a plan into ranked lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub index: IndexConfig,
    pub pipeline: PipelineConfig,
    pub methods: BTreeSet<Method>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            index: IndexConfig::default(),
            pipeline: PipelineConfig::default(),
            methods: Method::ALL.into_iter().collect(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        self.index.validate()?;
        self.pipeline.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Input("no retrieval methods selected".into()));
        }
        Ok(())
    }
}

/// Ranked lists of every query of one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRun {
    pub plan: ExperimentPlan,
    pub outcomes: Vec<QueryOutcome>,
}

/// Materializes `plan` and runs each of its queries.
pub fn run_plan(plan: &ExperimentPlan, corpus: &Corpus, config: &EvaluationConfig) -> Result<PlanRun> {
    config.validate()?;
    let m = plan.materialize(corpus, &config.index)?;
    let outcomes = m
        .queries
        .par_iter()
        .map(|q| run_query(&m.index, corpus, q, &m.query_filter, &config.methods, &config.pipeline))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlanRun {
        plan: plan.clone(),
        outcomes,
    })
}

/// Mean metrics of one cell. `seed` is `None` for the mean over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mode: Mode,
    pub group: String,
    pub method: Method,
    pub relevance: RelevanceTask,
    pub seed: Option<u64>,
    pub queries: usize,
    pub report: MetricReport,
}

/// Paired test on per-seed AP between two (mode, method) cells of a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonRow {
    pub group: String,
    pub relevance: RelevanceTask,
    pub left_mode: Mode,
    pub left_method: Method,
    pub right_mode: Mode,
    pub right_method: Method,
    pub mean_left: f64,
    pub mean_right: f64,
    pub test: WilcoxonResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTables {
    pub per_seed: Vec<MetricRow>,
    pub summary: Vec<MetricRow>,
    pub wilcoxon: Vec<WilcoxonRow>,
}

type CellKey = (Mode, String, Method, RelevanceTask);

/// Scores every run and aggregates per seed, then across seeds, and tests
/// method pairs (and segmented against unsegmented setups) on per-seed AP.
pub fn evaluate_runs(runs: &[PlanRun], corpus: &Corpus, methods: &BTreeSet<Method>) -> Result<EvaluationTables> {
    // (cell, seed) -> per-query reports
    let mut cells: BTreeMap<(CellKey, u64), Vec<MetricReport>> = BTreeMap::new();
    for run in runs {
        let plan = &run.plan;
        let organ = plan.relevance_organ();
        for outcome in &run.outcomes {
            let query = corpus.require(&outcome.query_id)?;
            let stage = query.stage_for(organ);
            let groups = query_groups(plan, query.task)?;
            for &method in methods {
                let list = outcome.lists.get(&method).ok_or_else(|| {
                    Error::Report(format!(
                        "no {method} output for query {} (seed {})",
                        outcome.query_id, plan.seed
                    ))
                })?;
                for task in RelevanceTask::ALL {
                    let rel = relevance_vector(list, corpus, stage, organ, task)?;
                    let report = MetricReport::from_relevance(&rel);
                    for g in &groups {
                        cells
                            .entry(((plan.mode, g.clone(), method, task), plan.seed))
                            .or_default()
                            .push(report);
                    }
                }
            }
        }
    }

    let mut per_seed = Vec::new();
    let mut by_cell: BTreeMap<CellKey, Vec<(u64, MetricReport, usize)>> = BTreeMap::new();
    for ((cell, seed), reports) in &cells {
        let mean = MetricReport::mean(reports);
        per_seed.push(row(cell, Some(*seed), reports.len(), mean));
        by_cell
            .entry(cell.clone())
            .or_default()
            .push((*seed, mean, reports.len()));
    }

    let mut summary = Vec::new();
    for (cell, seeds) in &by_cell {
        let mean = MetricReport::mean(seeds.iter().map(|(_, r, _)| r));
        let queries = seeds.iter().map(|(_, _, n)| n).sum();
        summary.push(row(cell, None, queries, mean));
    }

    let wilcoxon = pairwise_tests(&by_cell)?;
    Ok(EvaluationTables {
        per_seed,
        summary,
        wilcoxon,
    })
}

fn row(cell: &CellKey, seed: Option<u64>, queries: usize, report: MetricReport) -> MetricRow {
    MetricRow {
        mode: cell.0,
        group: cell.1.clone(),
        method: cell.2,
        relevance: cell.3,
        seed,
        queries,
        report,
    }
}

fn query_groups(plan: &ExperimentPlan, query_task: Task) -> Result<Vec<String>> {
    if plan.mode.is_organ_specific() {
        let organ = plan
            .organ
            .ok_or_else(|| Error::Consistency(format!("{} plan without organ", plan.mode)))?;
        Ok(vec![organ.to_string()])
    } else {
        Ok(vec![query_task.to_string(), ALL_GROUP.to_owned()])
    }
}

fn pairwise_tests(by_cell: &BTreeMap<CellKey, Vec<(u64, MetricReport, usize)>>) -> Result<Vec<WilcoxonRow>> {
    let ap_by_seed =
        |cell: &CellKey| -> BTreeMap<u64, f64> { by_cell[cell].iter().map(|(s, r, _)| (*s, r.ap)).collect() };
    let mut rows = Vec::new();
    let keys: Vec<&CellKey> = by_cell.keys().collect();
    for (i, a) in keys.iter().enumerate() {
        for b in &keys[i + 1..] {
            let same_setup = a.0 == b.0 && a.1 == b.1 && a.3 == b.3;
            let seg_vs_noseg = a.0 == Mode::OrganSpecificSeg
                && b.0 == Mode::OrganSpecificNoseg
                && a.1 == b.1
                && a.2 == b.2
                && a.3 == b.3;
            if !(same_setup || seg_vs_noseg) {
                continue;
            }
            let left = ap_by_seed(a);
            let right = ap_by_seed(b);
            if left.keys().ne(right.keys()) {
                return Err(Error::Report(format!(
                    "seeds of {}/{} and {}/{} differ in group {}",
                    a.0, a.2, b.0, b.2, a.1
                )));
            }
            let l: Vec<f64> = left.values().copied().collect();
            let r: Vec<f64> = right.values().copied().collect();
            let test = wilcoxon_signed_rank_two_sided(&l, &r)?;
            rows.push(WilcoxonRow {
                group: a.1.clone(),
                relevance: a.3,
                left_mode: a.0,
                left_method: a.2,
                right_mode: b.0,
                right_method: b.2,
                mean_left: mean(&l),
                mean_right: mean(&r),
                test,
            });
        }
    }
    Ok(rows)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Runs and ranked lists plus the aggregated tables of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<PlanRun>,
    pub tables: EvaluationTables,
}

/// Evaluates a sweep of plans that share mode, organ and fraction and differ by seed.
pub fn evaluate_experiment(
    plans: &[ExperimentPlan],
    corpus: &Corpus,
    config: &EvaluationConfig,
) -> Result<ExperimentReport> {
    let first = plans.first().ok_or_else(|| Error::Input("empty plan sweep".into()))?;
    let mut seeds = BTreeSet::new();
    for p in plans {
        if p.mode != first.mode || p.organ != first.organ || p.p != first.p {
            return Err(Error::Input(
                "plans in one sweep must share mode, organ and fraction".into(),
            ));
        }
        if !seeds.insert(p.seed) {
            return Err(Error::Input(format!("seed {} appears twice in the sweep", p.seed)));
        }
    }
    let runs = plans
        .iter()
        .map(|p| run_plan(p, corpus, config))
        .collect::<Result<Vec<_>>>()?;
    let tables = evaluate_runs(&runs, corpus, &config.methods)?;
    Ok(ExperimentReport { runs, tables })
}

/// Which setups, organs and seeds a sweep covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub modes: BTreeSet<Mode>,
    pub organs: BTreeSet<Task>,
    pub p: f64,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            modes: Mode::ALL.into_iter().collect(),
            organs: Task::ALL.into_iter().collect(),
            p: crate::experiments::DEFAULT_SAMPLING_FRACTION,
            seeds: (0..10).collect(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Input("sweep has no modes".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Input("sweep has no seeds".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Input("sweep seeds must be distinct".into()));
        }
        if self.modes.iter().any(|m| m.is_organ_specific()) && self.organs.is_empty() {
            return Err(Error::Input("organ-specific sweep has no organs".into()));
        }
        Ok(())
    }

    /// Plans in a fixed order: mode, then organ, then seed. Segmented and
    /// unsegmented setups share their split.
    pub fn plans(&self, corpus: &Corpus) -> Result<Vec<ExperimentPlan>> {
        self.validate()?;
        let mut plans = Vec::new();
        for &mode in &self.modes {
            if mode.is_organ_specific() {
                for &organ in &self.organs {
                    for &seed in &self.seeds {
                        plans.push(sample_plan(corpus, mode, Some(organ), self.p, seed)?);
                    }
                }
            } else {
                for &seed in &self.seeds {
                    plans.push(sample_plan(corpus, mode, None, self.p, seed)?);
                }
            }
        }
        Ok(plans)
    }
}

/// Samples, runs and evaluates every plan of `spec`.
pub fn run_sweep(corpus: &Corpus, spec: &SweepSpec, config: &EvaluationConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let plans = spec.plans(corpus)?;
    let runs = plans
        .iter()
        .map(|p| run_plan(p, corpus, config))
        .collect::<Result<Vec<_>>>()?;
    let tables = evaluate_runs(&runs, corpus, &config.methods)?;
    Ok(ExperimentReport { runs, tables })
}
