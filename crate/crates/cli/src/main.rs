//! `subsetsearch` command-line interface.
//!
//! Exit codes: 0 on success, 1 for configuration or usage errors, 2 for
//! runtime failures (including any failed trial of `search`).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use subsetsearch::acquisition::AcquisitionFunction;
use subsetsearch::analysis::{
    consensus_counts, duplication_histogram, evaluate, selected_unselected_gap, ConsensusReport, DuplicationHistogram,
    EvalReport,
};
use subsetsearch::experiment::{
    export_plot_data, generate_pool, run_experiment_with_outputs, ExperimentConfig, ExportKind, GeneratorSpec,
    PoolSource, ResultsFile, RunDocument,
};
use subsetsearch::learner::{build_ensemble, predict_pool, CheckpointStore, EnsembleConfig, EnsembleMode};
use subsetsearch::subset::{acquire, SubsetState};
use subsetsearch::{seed, Error, LabeledPool, Result};

#[derive(Parser, Debug)]
#[command(name = "subsetsearch", version, about = "Training-data subset search with ensemble active learning")]
struct Cli {
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's trial seeds with a single seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    jobs: usize,
    /// Output directory; defaults to the config's `output.dir`, else `results`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic pool and clean test set.
    GenData,
    /// Score a pool with an ensemble assembled from a checkpoint store.
    Score(ScoreArgs),
    /// Run the configured search scheme over every trial seed.
    Search,
    /// Consensus, duplication and accuracy diagnostics on stored artifacts.
    Analyze(AnalyzeArgs),
    /// Write plot-ready CSV tables from results files.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct EnsembleArgs {
    /// Ensemble mode (single, seeds, checkpoints, combined); defaults to the
    /// config's acquisition ensemble, else single.
    #[arg(long)]
    ensemble: Option<EnsembleMode>,
    #[arg(long)]
    runs: Option<usize>,
    /// Checkpoints per run.
    #[arg(long = "members-per-run")]
    members_per_run: Option<usize>,
    #[arg(long)]
    stride: Option<u32>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Checkpoint store directory.
    #[arg(long)]
    store: PathBuf,
    /// Defaults to the config's `search.function`, else variation_ratios.
    #[arg(long)]
    function: Option<AcquisitionFunction>,
    #[command(flatten)]
    ensemble: EnsembleArgs,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Subset CSV (`sample_id,multiplicity`).
    #[arg(long)]
    subset: Option<PathBuf>,
    /// Consensus group size over the trailing checkpoints of the first stored run.
    #[arg(long)]
    consensus: Option<usize>,
    /// Also write consensus.csv and histogram.csv.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    ensemble: EnsembleArgs,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Results files written by `search`.
    #[arg(long, required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    /// learning_curve, consensus, histogram, scheme_comparison or all.
    #[arg(long, default_value = "all")]
    kind: String,
}

struct Context {
    config: Option<ExperimentConfig>,
    seed: Option<u64>,
    jobs: usize,
    out: PathBuf,
}

fn load_config(path: Option<&Path>) -> Result<Option<ExperimentConfig>> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map(Some)
}

fn read_pool(path: &Path) -> Result<LabeledPool> {
    LabeledPool::read_csv(BufReader::new(File::open(path)?), None)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn ensemble_config(ctx: &Context, args: &EnsembleArgs) -> Result<EnsembleConfig> {
    let base = ctx.config.as_ref().map(|c| c.acquisition.ensemble).unwrap_or_else(EnsembleConfig::single);
    let cfg = EnsembleConfig {
        mode: args.ensemble.unwrap_or(base.mode),
        runs: args.runs.unwrap_or(base.runs),
        checkpoints: args.members_per_run.unwrap_or(base.checkpoints),
        stride: args.stride.unwrap_or(base.stride),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn gen_data(ctx: &Context) -> Result<()> {
    let spec = match ctx.config.as_ref().map(|c| &c.pool) {
        None => GeneratorSpec::default(),
        Some(PoolSource::Generated(spec)) => spec.clone(),
        Some(PoolSource::File { .. }) => {
            return Err(Error::Config("gen-data needs a generated pool, the config names a pool file".into()))
        }
    };
    let trial_seed = ctx.seed.or_else(|| ctx.config.as_ref().map(|c| c.seeds[0])).unwrap_or(0);
    // same derivation as the trial runner, so `--seed s` reproduces trial s's pool
    let spec = GeneratorSpec { seed: seed::derive_named(trial_seed, "generator"), ..spec };
    let g = generate_pool(&spec)?;
    g.pool.write_csv(create(&ctx.out.join("pool.csv"))?)?;
    g.test.write_csv(create(&ctx.out.join("test.csv"))?)?;
    let mut meta = create(&ctx.out.join("meta.csv"))?;
    writeln!(meta, "sample_id,cluster,true_label,copy_of,noisy")?;
    for m in &g.meta {
        let copy = m.copy_of.map(|id| id.to_string()).unwrap_or_default();
        writeln!(meta, "{},{},{},{copy},{}", m.id, m.cluster, m.true_label, m.noisy as u8)?;
    }
    meta.flush()?;
    println!(
        "wrote {} pool samples ({} copies, {} noisy) and {} test samples to {}",
        g.pool.len(),
        g.copies(),
        g.noisy_ids().len(),
        g.test.len(),
        ctx.out.display()
    );
    Ok(())
}

fn score(ctx: &Context, args: &ScoreArgs) -> Result<()> {
    let pool = read_pool(&args.pool)?;
    let store = CheckpointStore::load_dir(&args.store)?;
    let members = build_ensemble(&store, &ensemble_config(ctx, &args.ensemble)?)?;
    let function = args
        .function
        .or_else(|| ctx.config.as_ref().map(|c| c.search.function))
        .unwrap_or(AcquisitionFunction::VariationRatios);
    let scores = acquire(&pool, &members, function, ctx.seed.unwrap_or(0))?;
    predict_pool(&members, &pool, &pool.sorted_ids())?.write_alpt(create(&ctx.out.join("predictions.alpt"))?)?;
    scores.write_csv(create(&ctx.out.join("scores.csv"))?)?;
    let s = scores.summary();
    println!(
        "scored {} samples with {function} over {} members: min {:.6} max {:.6} mean {:.6}",
        scores.len(),
        members.len(),
        s.min,
        s.max,
        s.mean
    );
    Ok(())
}

fn search(ctx: &Context) -> Result<bool> {
    let config = ctx
        .config
        .clone()
        .ok_or_else(|| Error::Config("search needs --config".into()))?;
    let config = match ctx.seed {
        Some(s) => config.with_seed(s),
        None => config,
    };
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).ok();
    let outputs = run_experiment_with_outputs(&config, ctx.jobs)?;
    let hash = config.hash();

    let artifacts = ctx.out.join(format!("artifacts-{hash}"));
    for o in &outputs {
        if let Some(result) = &o.result {
            let dir = artifacts.join(format!("seed-{}", o.record.seed));
            result.state.write_csv(create(&dir.join("subset.csv"))?)?;
            result.subset_store.save_dir(&dir.join("store"))?;
        }
    }
    let mut run = RunDocument::from_trials(outputs.into_iter().map(|o| o.record).collect());
    run.started_at_unix = started;
    let failed: Vec<_> = run.trials.iter().filter(|t| t.failed()).map(|t| (t.seed, t.error.clone())).collect();
    for row in &run.aggregate {
        println!(
            "{:<22} size {:>7}  trials {}  accuracy {:.4} ± {:.4}",
            row.name, row.target_size, row.trials, row.mean_accuracy, row.std_accuracy
        );
    }
    let path = ResultsFile::append(&ctx.out, &hash, &config.name, &config.canonical_text(), run)?;
    println!("results appended to {}", path.display());
    for (seed, err) in &failed {
        eprintln!("trial {seed} failed: {}", err.as_deref().unwrap_or("unknown error"));
    }
    Ok(failed.is_empty())
}

#[derive(Serialize)]
struct AnalysisReport {
    pool_size: usize,
    histogram: Option<DuplicationHistogram>,
    evaluation: Option<EvalReport>,
    selected: Option<EvalReport>,
    unselected: Option<EvalReport>,
    consensus: Option<ConsensusReport>,
}

fn analyze(ctx: &Context, args: &AnalyzeArgs) -> Result<()> {
    let pool = read_pool(&args.pool)?;
    let subset = match &args.subset {
        Some(p) => {
            let s = SubsetState::read_csv(BufReader::new(File::open(p)?))?;
            s.validate_against(&pool)?;
            Some(s)
        }
        None => None,
    };
    let mut report = AnalysisReport {
        pool_size: pool.len(),
        histogram: subset.as_ref().map(duplication_histogram),
        evaluation: None,
        selected: None,
        unselected: None,
        consensus: None,
    };
    if args.consensus.is_some() && args.store.is_none() {
        return Err(Error::Config("--consensus needs --store".into()));
    }
    if let Some(dir) = &args.store {
        let store = CheckpointStore::load_dir(dir)?;
        let members = build_ensemble(&store, &ensemble_config(ctx, &args.ensemble)?)?;
        report.evaluation = Some(evaluate(&members, &pool, &pool.sorted_ids())?);
        if let Some(s) = &subset {
            let (sel, unsel) = selected_unselected_gap(&members, &pool, s)?;
            report.selected = Some(sel);
            report.unselected = Some(unsel);
        }
        if let Some(n) = args.consensus {
            let trailing = build_ensemble(&store, &EnsembleConfig::checkpoints(n, 1))?;
            let ids = match &subset {
                Some(s) if s.unique_count() < pool.len() => s.complement(&pool),
                _ => pool.sorted_ids(),
            };
            report.consensus = Some(consensus_counts(&predict_pool(&trailing, &pool, &ids)?, n)?);
        }
    }
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("analysis.json");
    fs::write(&path, serde_json::to_vec_pretty(&report).map_err(Error::from)?)?;
    if args.csv {
        if let Some(c) = &report.consensus {
            let mut w = create(&ctx.out.join("consensus.csv"))?;
            writeln!(w, "# n: group size (cumulative) or later checkpoint index (pairwise)")?;
            writeln!(w, "measure,n,count,eval_size")?;
            for (i, count) in c.cumulative.iter().enumerate() {
                writeln!(w, "cumulative,{},{count},{}", i + 1, c.eval_size)?;
            }
            for (i, count) in c.pairwise.iter().enumerate() {
                writeln!(w, "pairwise,{},{count},{}", i + 2, c.eval_size)?;
            }
            w.flush()?;
        }
        if let Some(h) = &report.histogram {
            let mut w = create(&ctx.out.join("histogram.csv"))?;
            writeln!(w, "# count: ids occurring exactly `multiplicity` times")?;
            writeln!(w, "multiplicity,count")?;
            for (m, count) in &h.counts {
                writeln!(w, "{m},{count}")?;
            }
            w.flush()?;
        }
    }
    if let Some(e) = &report.evaluation {
        println!("ensemble accuracy on the pool: {:.4} ({}/{})", e.accuracy, e.correct, e.size);
    }
    if let (Some(s), Some(u)) = (&report.selected, &report.unselected) {
        println!("selected {:.4} ({} ids), unselected {:.4} ({} ids)", s.accuracy, s.size, u.accuracy, u.size);
    }
    if let Some(h) = &report.histogram {
        println!("subset: {} unique, {} total", h.unique_count(), h.total_count());
    }
    if let Some(c) = &report.consensus {
        println!("consensus over {} samples: {:?}", c.eval_size, c.cumulative);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn export(ctx: &Context, args: &ExportArgs) -> Result<()> {
    let kinds = if args.kind == "all" { ExportKind::ALL.to_vec() } else { vec![args.kind.parse()?] };
    let files = args.results.iter().map(|p| ResultsFile::read(p)).collect::<Result<Vec<_>>>()?;
    for kind in kinds {
        let path = ctx.out.join(format!("{kind}.csv"));
        let rows = export_plot_data(&files, kind, create(&path)?)?;
        println!("{}: {rows} rows", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let config = load_config(cli.config.as_deref())?;
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("results"));
    let ctx = Context { config, seed: cli.seed, jobs: cli.jobs, out };
    match &cli.command {
        Command::GenData => gen_data(&ctx).map(|_| true),
        Command::Score(args) => score(&ctx, args).map(|_| true),
        Command::Search => search(&ctx),
        Command::Analyze(args) => analyze(&ctx, args).map(|_| true),
        Command::Export(args) => export(&ctx, args).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
