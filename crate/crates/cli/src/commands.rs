use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use volret::ann::{build_index as build_slice_index, save_index, IndexConfig, SliceFilter};
use volret::corpus::{
    generate_synthetic_corpus, load_corpus, metadata_path_for, write_corpus, Corpus, SyntheticSpec, Task,
};
use volret::experiments::ExperimentPlan;
use volret::metrics::{
    evaluate_runs, format_summary_table, run_plan, write_metrics_csv, write_wilcoxon_csv, EvaluationTables, PlanRun,
};
use volret::pipeline::QueryOutcome;
use volret::rerank::{cmir_rerank, rrf_fuse, EmbeddingMatrix};
use volret::retrieval::{read_ranked_csv, write_ranked_csv, Method, RankedList};
use volret::{write_atomic, write_bytes_atomic, Error, Result};

use crate::config::RunConfig;
use crate::{BuildIndexArgs, CorpusArgs, EvaluateArgs, IndexArgs, IngestArgs, RerankArgs, RunArgs, SynthArgs};

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Input(format!("input file {} does not exist", path.display())))
    }
}

fn open_corpus(args: &CorpusArgs) -> Result<Corpus> {
    require_file(&args.embeddings)?;
    let meta = args
        .metadata
        .clone()
        .unwrap_or_else(|| metadata_path_for(&args.embeddings));
    load_corpus(&args.embeddings, &meta)
}

fn apply_index_args(mut cfg: IndexConfig, args: &IndexArgs) -> IndexConfig {
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(e) = args.ef_construction {
        cfg.ef_construction = e;
    }
    if let Some(e) = args.ef_search {
        cfg.ef_search = e;
    }
    if args.exact {
        cfg.exact = true;
    }
    if let Some(s) = args.index_seed {
        cfg.seed = s;
    }
    cfg
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let summary = corpus.summary();
    let (vols, slices) = summary.values().fold((0, 0), |(v, s), &(dv, ds)| (v + dv, s + ds));
    if args.json {
        let tasks: BTreeMap<&str, serde_json::Value> = summary
            .iter()
            .map(|(t, &(v, s))| (t.as_str(), serde_json::json!({"volumes": v, "slices": s})))
            .collect();
        let doc = serde_json::json!({
            "dimension": corpus.dim(),
            "tasks": tasks,
            "total": {"volumes": vols, "slices": slices},
            "max_norm_deviation": corpus.max_norm_deviation(),
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("{:<10} {:>8} {:>8}", "task", "volumes", "slices");
        for (task, (v, s)) in &summary {
            println!("{:<10} {:>8} {:>8}", task.as_str(), v, s);
        }
        println!("{:<10} {:>8} {:>8}", "total", vols, slices);
        println!(
            "dimension {}, max |norm - 1| = {:.2e}",
            corpus.dim(),
            corpus.max_norm_deviation()
        );
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let spec = match (&args.spec, args.scale) {
        (Some(path), _) => {
            require_file(path)?;
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?
        }
        (None, Some(d)) => SyntheticSpec::four_task_scaled(d),
        (None, None) => SyntheticSpec::default(),
    };
    let corpus = generate_synthetic_corpus(&spec, args.seed)?;
    let meta = args.metadata.unwrap_or_else(|| metadata_path_for(&args.out));
    create_parent(&args.out)?;
    create_parent(&meta)?;
    write_corpus(&corpus, &args.out, &meta)?;
    eprintln!(
        "wrote {} volumes, {} slices to {}",
        corpus.len(),
        corpus.total_slices(),
        args.out.display()
    );
    Ok(())
}

pub fn build_index(args: BuildIndexArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let cfg = apply_index_args(IndexConfig::default(), &args.index);
    cfg.validate()?;
    let index = match &args.plan {
        Some(path) => {
            require_file(path)?;
            ExperimentPlan::load(path)?.materialize(&corpus, &cfg)?.index
        }
        None => {
            let filter = args.organ.map_or(SliceFilter::All, SliceFilter::Organ);
            build_slice_index(&corpus, &cfg, &filter)?
        }
    };
    create_parent(&args.out)?;
    save_index(&index, &args.out)?;
    eprintln!("indexed {} slices to {}", index.len(), args.out.display());
    Ok(())
}

fn plan_name(plan: &ExperimentPlan) -> String {
    let organ = plan.organ.map_or("all", Task::as_str);
    format!("{}_{}_seed{}", plan.mode, organ, plan.seed)
}

/// Prints which step of which plan failed before passing the error on.
fn in_stage<T>(stage: &str, plan: &ExperimentPlan, r: Result<T>) -> Result<T> {
    r.inspect_err(|e| eprintln!("stage `{stage}` failed for {}: {e}", plan_name(plan)))
}

pub fn run(args: RunArgs) -> Result<()> {
    require_file(&args.config)?;
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(d) = args.output_dir {
        cfg.output_dir = d;
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(m) = args.modes {
        cfg.modes = m.into_iter().collect();
    }
    if let Some(o) = args.organs {
        cfg.organs = o.into_iter().collect();
    }
    if let Some(m) = args.methods {
        cfg.methods = m.into_iter().collect();
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(k) = args.slices_per_query {
        cfg.pipeline.slices_per_query = k;
    }
    if let Some(m) = args.top_m {
        cfg.pipeline.top_m = m;
    }
    cfg.index = apply_index_args(cfg.index, &args.index);
    cfg.validate()?;

    let corpus = load_corpus(&cfg.embeddings, &cfg.metadata_path())?;
    let plans = if args.plans.is_empty() {
        cfg.sweep().plans(&corpus)?
    } else {
        args.plans
            .iter()
            .map(|p| {
                require_file(p)?;
                ExperimentPlan::load(p)
            })
            .collect::<Result<Vec<_>>>()?
    };
    let eval = cfg.evaluation();

    let mut runs = Vec::with_capacity(plans.len());
    for plan in &plans {
        eprintln!("running {}", plan_name(plan));
        runs.push(in_stage("retrieve", plan, run_plan(plan, &corpus, &eval))?);
    }
    let tables = evaluate_runs(&runs, &corpus, &cfg.methods)?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out.join("plans"))?;
    fs::create_dir_all(out.join("ranked"))?;
    for run in &runs {
        let name = plan_name(&run.plan);
        run.plan.save(&out.join("plans").join(format!("{name}.json")))?;
        write_run_lists(run, &out.join("ranked").join(format!("{name}.csv")))?;
    }
    let mut resolved = serde_json::to_string_pretty(&cfg)?;
    resolved.push('\n');
    write_bytes_atomic(&out.join("run_config.json"), resolved.as_bytes())?;
    write_tables(&tables, out)?;
    print!("{}", format_summary_table(&tables.summary));
    Ok(())
}

fn write_run_lists(run: &PlanRun, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        write_ranked_csv(
            w,
            run.outcomes
                .iter()
                .flat_map(|o| o.lists.values().map(move |l| (o.query_id.as_str(), l))),
        )
    })
}

fn write_tables(tables: &EvaluationTables, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("metrics.csv"), |w| write_metrics_csv(w, &tables.summary))?;
    write_atomic(&dir.join("per_seed.csv"), |w| write_metrics_csv(w, &tables.per_seed))?;
    write_atomic(&dir.join("wilcoxon.csv"), |w| write_wilcoxon_csv(w, &tables.wilcoxon))?;
    write_bytes_atomic(
        &dir.join("summary.txt"),
        format_summary_table(&tables.summary).as_bytes(),
    )
}

fn read_lists(path: &Path) -> Result<BTreeMap<(String, Method), RankedList>> {
    require_file(path)?;
    read_ranked_csv(fs::File::open(path)?)
}

pub fn rerank(args: RerankArgs) -> Result<()> {
    let corpus = open_corpus(&args.corpus)?;
    let lists = read_lists(&args.candidates)?;
    let queries: BTreeSet<&str> = lists.keys().map(|(q, _)| q.as_str()).collect();
    let get = |q: &str, m: Method| {
        lists
            .get(&(q.to_owned(), m))
            .ok_or_else(|| Error::Input(format!("no {m} list for query {q} in {}", args.candidates.display())))
    };
    let mut out: Vec<(String, RankedList)> = Vec::new();
    for q in queries {
        let list = match args.method {
            Method::Cmir => {
                let query = corpus.require(q)?;
                cmir_rerank(&EmbeddingMatrix::from_volume(query), get(q, args.source)?, &corpus)?
            }
            Method::Rrf => rrf_fuse(
                [
                    get(q, Method::CountBase)?,
                    get(q, Method::MaxScore)?,
                    get(q, Method::SumSim)?,
                ],
                args.rrf_k,
            )?,
            other => return Err(Error::Input(format!("{other} is not a re-ranking method"))),
        };
        out.push((q.to_owned(), list));
    }
    create_parent(&args.out)?;
    write_atomic(&args.out, |w| {
        write_ranked_csv(w, out.iter().map(|(q, l)| (q.as_str(), l)))
    })
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    if args.plans.len() != args.ranked.len() {
        return Err(Error::Input(format!(
            "{} plans but {} ranked-list files",
            args.plans.len(),
            args.ranked.len()
        )));
    }
    let corpus = open_corpus(&args.corpus)?;
    let mut runs = Vec::new();
    let mut found = BTreeSet::new();
    for (plan_path, ranked_path) in args.plans.iter().zip(&args.ranked) {
        require_file(plan_path)?;
        let plan = ExperimentPlan::load(plan_path)?;
        let mut lists = read_lists(ranked_path)?;
        let mut outcomes = Vec::new();
        for q in &plan.query_ids {
            let mut per_query = BTreeMap::new();
            let keys: Vec<(String, Method)> = lists.keys().filter(|(id, _)| id == q).cloned().collect();
            for key in keys {
                if let Some(list) = lists.remove(&key) {
                    found.insert(key.1);
                    per_query.insert(key.1, list);
                }
            }
            outcomes.push(QueryOutcome {
                query_id: q.clone(),
                lists: per_query,
            });
        }
        if let Some((q, _)) = lists.keys().next() {
            return Err(Error::Consistency(format!(
                "{} lists query {q}, which is not a query of {}",
                ranked_path.display(),
                plan_path.display()
            )));
        }
        runs.push(PlanRun { plan, outcomes });
    }
    let methods = args.methods.map_or(found, |m| m.into_iter().collect());
    let tables = evaluate_runs(&runs, &corpus, &methods)?;
    fs::create_dir_all(&args.output_dir)?;
    write_tables(&tables, &args.output_dir)?;
    print!("{}", format_summary_table(&tables.summary));
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => Ok(fs::create_dir_all(p)?),
        _ => Ok(()),
    }
}
