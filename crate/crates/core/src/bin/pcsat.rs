use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use pcsat::config::{parse_thresholds_list, RunConfig};
use pcsat::experiment::{aggregate_bins, evaluate, run_trials, TrialWindows};
use pcsat::io::{self, GroupEntry, GroupThresholdsFile, RunMetadata, ThresholdsFile, THRESHOLDS_SCHEMA};
use pcsat::loss::{LossOptions, PctUnit};
use pcsat::optimizer::{fit_random_search, DEFAULT_ITERATIONS};
use pcsat::strategy::{assign_thresholds, eligibility, Eligibility, StrategyMode};
use pcsat::synth::generate;
use pcsat::{
    rng, BoundaryMode, Error, GroupId, GroupTrainingStats, LabeledPool, Result, ScoredCall, SearchOptions,
    StrategyConfig,
};

#[derive(Debug, Parser)]
#[command(name = "pcsat", version, about = "Fit and evaluate pCSAT decision thresholds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic call CSV
    Synth(SynthArgs),
    /// Fit thresholds on a labeled call CSV
    Fit(FitArgs),
    /// Append a pcsat column to a call CSV
    Apply(ApplyArgs),
    /// Loss of given thresholds on a labeled call CSV
    Evaluate(EvaluateArgs),
    /// Run the five-condition rolling-trial experiment
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct MappingArgs {
    /// Class of a proba equal to a threshold: `higher` (more satisfied) or `lower`
    #[arg(long, default_value = "higher")]
    boundary_mode: BoundaryMode,
    /// Units of the satisfied-share loss term: `fraction` or `points`
    #[arg(long, default_value = "fraction")]
    pct_unit: PctUnit,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Optional key = value config; uses the synth_* keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    calls_per_day: Option<f64>,
    #[arg(long)]
    start: Option<NaiveDate>,
    #[arg(long)]
    end: Option<NaiveDate>,
    #[arg(long)]
    response_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// global | per_group | hybrid
    #[arg(long, default_value = "global")]
    mode: StrategyMode,
    /// Baseline thresholds t12,t23,t34,t45 (warm start and fallback)
    #[arg(long, default_value = "0.8,0.6,0.4,0.2")]
    baseline: String,
    /// Do not evaluate the baseline as iteration 0
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long, default_value_t = pcsat::strategy::DEFAULT_HYBRID_CUTOFF)]
    hybrid_cutoff: u64,
    #[arg(long, default_value_t = pcsat::strategy::DEFAULT_MIN_HIGH)]
    min_high: u64,
    #[arg(long, default_value_t = pcsat::strategy::DEFAULT_MIN_LOW)]
    min_low: u64,
    #[command(flatten)]
    mapping: MappingArgs,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    thresholds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "higher")]
    boundary_mode: BoundaryMode,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    thresholds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    mapping: MappingArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's `workers`
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's `seed`
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => synth(args),
        Command::Fit(args) => fit(args),
        Command::Apply(args) => apply(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

fn read_labeled_input(path: &Path, meta: &mut RunMetadata) -> Result<Vec<ScoredCall>> {
    let read = io::read_calls(path)?;
    meta.add_input(path)?;
    meta.rejected_rows = read.rejections.len();
    for r in &read.rejections {
        warn!("{}: {r}", path.display());
    }
    Ok(read.calls)
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::parse(&read_text(path)?)?.synth,
        None => RunConfig::default().synth,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.groups {
        let rate = args.calls_per_day.unwrap_or(cfg.tiers[0].calls_per_day);
        cfg.tiers = vec![pcsat::synth::VolumeTier {
            n_groups: n,
            calls_per_day: rate,
        }];
    } else if let Some(rate) = args.calls_per_day {
        cfg.tiers.iter_mut().for_each(|t| t.calls_per_day = rate);
    }
    if let Some(d) = args.start {
        cfg.start = d;
    }
    if let Some(d) = args.end {
        cfg.end = d;
    }
    if let Some(r) = args.response_rate {
        cfg.survey_response_rate = r;
    }
    let calls = generate::<f64>(&cfg)?;
    io::write_calls(&args.out, &calls)?;

    let mut meta = RunMetadata::new("synth", cfg.seed, serde_json::to_value(&cfg)?);
    if let Some(path) = &args.config {
        meta.add_input(path)?;
    }
    meta.notes.push(format!("{} calls written", calls.len()));
    io::write_json(&meta_path(&args.out), &meta)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fit(args: FitArgs) -> Result<()> {
    let baseline = parse_thresholds_list(&args.baseline)?;
    let loss = LossOptions {
        pct_unit: args.mapping.pct_unit,
    };
    let options = |seed: u64| {
        let opts = SearchOptions::new(args.iterations, seed)
            .with_boundary(args.mapping.boundary_mode)
            .with_loss(loss);
        if args.no_warm_start {
            opts
        } else {
            opts.with_warm_start(baseline)
        }
    };
    let config = json!({
        "iterations": args.iterations,
        "mode": args.mode,
        "baseline": baseline.as_array(),
        "warm_start": !args.no_warm_start,
        "hybrid_cutoff": args.hybrid_cutoff,
        "min_high": args.min_high,
        "min_low": args.min_low,
        "boundary_mode": args.mapping.boundary_mode,
        "pct_unit": args.mapping.pct_unit,
    });
    let mut meta = RunMetadata::new("fit", args.seed, config);
    let calls = read_labeled_input(&args.input, &mut meta)?;

    if args.mode == StrategyMode::Global {
        let pool = LabeledPool::from_calls(&calls)?;
        let fit = fit_random_search(&pool, &options(args.seed))?;
        if fit.warm_start_selected {
            meta.notes.push("baseline warm start was not improved upon".into());
        }
        let [t12, t23, t34, t45] = fit.thresholds.as_array();
        let file = ThresholdsFile {
            schema: THRESHOLDS_SCHEMA,
            t12,
            t23,
            t34,
            t45,
            fitted_on: format!("{} ({} labeled calls)", args.input.display(), pool.len()),
            loss: fit.loss,
            seed: args.seed,
            iterations: Some(args.iterations),
            warm_start_selected: fit.warm_start_selected,
        };
        io::write_json(&args.out, &file)?;
        info!("fitted {:?} with loss {}", fit.thresholds.as_array(), fit.loss.total);
        return io::write_json(&meta_path(&args.out), &meta);
    }

    let mut strategy = StrategyConfig::new(args.mode, baseline);
    strategy.hybrid_cutoff = args.hybrid_cutoff;
    strategy.min_high = args.min_high;
    strategy.min_low = args.min_low;
    strategy.validate()?;

    let mut by_group: BTreeMap<GroupId, Vec<&ScoredCall>> = BTreeMap::new();
    for call in calls.iter().filter(|c| c.is_labeled()) {
        by_group.entry(call.group_id.clone()).or_default().push(call);
    }
    let stats: BTreeMap<GroupId, GroupTrainingStats> = by_group
        .iter()
        .map(|(id, cs)| (id.clone(), GroupTrainingStats::from_calls(id.clone(), cs.iter().copied())))
        .collect();
    let eligible: Vec<&GroupId> = stats
        .iter()
        .filter(|(_, s)| eligibility(s, &strategy) == Eligibility::Eligible)
        .map(|(id, _)| id)
        .collect();
    if eligible.is_empty() {
        return Err(Error::InsufficientData("no group meets the eligibility minimums".into()));
    }
    let global_pool = LabeledPool::from_calls(eligible.iter().flat_map(|id| by_group[*id].iter().copied()))?;
    let global_fit = fit_random_search(&global_pool, &options(rng::derive_seed(args.seed, &["fit", "global"])))?;
    let per_group = eligible
        .iter()
        .map(|id| {
            let pool = LabeledPool::from_calls(by_group[*id].iter().copied())?;
            let fit = fit_random_search(&pool, &options(rng::derive_seed(args.seed, &["fit", id.as_str()])))?;
            Ok(((*id).clone(), fit))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let assigned = assign_thresholds(&stats, &global_fit, &per_group, &strategy)?;

    let file = GroupThresholdsFile {
        schema: THRESHOLDS_SCHEMA,
        mode: serde_json::to_value(args.mode)?.as_str().unwrap_or_default().to_string(),
        default: GroupEntry::new(&baseline, pcsat::strategy::Provenance::Baseline),
        groups: assigned
            .iter()
            .map(|(id, a)| (id.to_string(), GroupEntry::new(&a.thresholds, a.provenance)))
            .collect(),
        seed: args.seed,
    };
    meta.notes.push(format!(
        "{} groups, {} eligible; baseline thresholds are a configured constant",
        stats.len(),
        eligible.len()
    ));
    io::write_json(&args.out, &file)?;
    io::write_json(&meta_path(&args.out), &meta)
}

fn apply(args: ApplyArgs) -> Result<()> {
    let table = io::read_thresholds(&args.thresholds)?.table()?;
    let input = File::open(&args.input).map_err(|e| Error::Io {
        path: args.input.clone(),
        source: e,
    })?;
    let out = File::create(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let mut writer = BufWriter::new(out);
    let rows = io::apply_thresholds(BufReader::new(input), &mut writer, &table, args.boundary_mode)?;
    writer.flush().map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;

    let mut meta = RunMetadata::new("apply", 0, json!({ "boundary_mode": args.boundary_mode }));
    meta.add_input(&args.input)?;
    meta.add_input(&args.thresholds)?;
    meta.notes.push(format!("{rows} rows scored"));
    io::write_json(&meta_path(&args.out), &meta)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let loss = LossOptions {
        pct_unit: args.mapping.pct_unit,
    };
    let mut meta = RunMetadata::new(
        "evaluate",
        0,
        json!({ "boundary_mode": args.mapping.boundary_mode, "pct_unit": args.mapping.pct_unit }),
    );
    let calls = read_labeled_input(&args.input, &mut meta)?;
    meta.add_input(&args.thresholds)?;
    let table = io::read_thresholds(&args.thresholds)?.table()?;

    let labeled: Vec<&ScoredCall> = calls.iter().filter(|c| c.is_labeled()).collect();
    if labeled.is_empty() {
        return Err(Error::EmptyInput);
    }
    // Map each call with its own group's thresholds, then compare overall.
    let mut pred = pcsat::OrdinalDistribution::default();
    let mut obs = pcsat::OrdinalDistribution::default();
    let mut by_group: BTreeMap<GroupId, Vec<&ScoredCall>> = BTreeMap::new();
    for call in &labeled {
        pred.add(pcsat::mapping::map_proba_with(
            call.proba(),
            table.get(&call.group_id),
            args.mapping.boundary_mode,
        ));
        obs.add(call.survey_csat.expect("filtered to labeled calls"));
        by_group.entry(call.group_id.clone()).or_default().push(call);
    }
    let overall = pcsat::loss::loss_between_with::<f64>(&pred, &obs, loss)?;
    let signed = pcsat::loss::signed_mean_delta::<f64>(&pred, &obs)?;

    let mut groups = serde_json::Map::new();
    for (id, cs) in &by_group {
        let (metrics, signed) = evaluate(cs, table.get(id), args.mapping.boundary_mode, loss)?;
        groups.insert(
            id.to_string(),
            json!({ "n": cs.len(), "loss": metrics, "delta_mean_signed": signed }),
        );
    }
    let report = json!({
        "n": labeled.len(),
        "loss": overall,
        "delta_mean_signed": signed,
        "groups": groups,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    io::write_json(&args.out, &report)?;
    io::write_json(&meta_path(&args.out), &meta)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::parse(&read_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    let mut meta = RunMetadata::new("simulate", cfg.experiment.seed, serde_json::to_value(&cfg)?);
    meta.add_input(&args.config)?;

    let calls = match &cfg.input {
        Some(path) => read_labeled_input(path, &mut meta)?,
        None => generate::<f64>(&cfg.synth)?,
    };
    let start = match cfg.start_date {
        Some(d) => d,
        None => calls.iter().map(|c| c.date).min().ok_or(Error::EmptyInput)?,
    };
    cfg.experiment.windows = TrialWindows {
        start_date: start,
        ..cfg.experiment.windows
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let outcome = pool.install(|| run_trials(&calls, &cfg.experiment))?;
    let cells = aggregate_bins(&outcome.reports, &cfg.experiment.bins);

    std::fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    io::write_cells(&args.out.join("cells.csv"), &outcome.reports)?;
    io::write_bins(&args.out.join("bins.csv"), &cells)?;
    io::write_skips(&args.out.join("skips.csv"), &outcome.skips)?;

    let warm = outcome.fits.iter().filter(|f| f.warm_start_selected).count();
    meta.notes.push(format!(
        "baseline thresholds {:?} are a configured constant, not a fitted value",
        cfg.experiment.strategy.baseline_thresholds.as_array()
    ));
    meta.notes.push(format!(
        "{} fits, {warm} kept the baseline warm start; {} report rows; {} skip records",
        outcome.fits.len(),
        outcome.reports.len(),
        outcome.skips.len()
    ));
    io::write_json(&args.out.join("metadata.json"), &meta)?;

    println!("{:<10} {:<18} {:>5} {:>10} {:>10} {:>10} {:>10}", "bin", "condition", "n", "d_pct", "d_mean", "mse", "loss");
    for c in &cells {
        println!(
            "{:<10} {:<18} {:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            c.bin, c.condition.as_str(), c.n, c.delta_pct_satisfied, c.delta_mean_abs, c.mse, c.loss_total
        );
    }
    Ok(())
}
