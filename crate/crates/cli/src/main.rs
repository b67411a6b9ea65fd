use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ccrl::env::EnvId;
use ccrl::harness::{
    self, emit_plot, evaluate_policy, load_checkpoint, load_sweep, moving_average, parse_override,
    read_curve, run_experiment, run_sweep, series_label, Aggregate, DealSet, Method, Policy,
    RunConfig, MOVING_WINDOW,
};

#[derive(Parser)]
#[command(name = "ccrl", version, about = "Train and evaluate cooperative multi-agent learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train independent runs of one method and aggregate their curves.
    Train(TrainArgs),
    /// Evaluate a checkpoint or the scripted oracle greedily.
    Eval(EvalArgs),
    /// Train every point of a hyperparameter grid and rank the results.
    Sweep(SweepArgs),
    /// Render learning curves to SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: EnvId,
    #[arg(long)]
    method: Method,
    /// Hyperparameter preset; defaults to the method name.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(harness::PRESETS))]
    preset: Option<String>,
    #[arg(long, default_value_t = 50_000)]
    episodes: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// Base seed; run k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to runs/<method>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hyperparameter override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Skip writing final policies.
    #[arg(long)]
    no_checkpoints: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    checkpoint: Option<PathBuf>,
    /// Hint-then-play rule; colourless Hanabi only.
    #[arg(long)]
    oracle: bool,
    /// Defaults to the checkpoint's environment.
    #[arg(long)]
    env: Option<EnvId>,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Hanabi deals where player 1 holds every rank once.
    #[arg(long, conflicts_with = "unique_match")]
    best_case_deals: bool,
    /// Hint-match deals where player 1 holds exactly one matching card.
    #[arg(long)]
    unique_match: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep file.
    #[arg(long)]
    grid: PathBuf,
    /// Output directory; defaults to sweeps/<grid file stem>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Curve files: aggregates (episode,mean,std) or single runs (episode,score).
    #[arg(long = "in", value_name = "FILE", num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn train(args: TrainArgs) -> Result<()> {
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(args.method.as_str()));
    let mut config = RunConfig::new(args.env, args.method, args.episodes, args.runs, out);
    config.preset = args.preset;
    config.seed = args.seed;
    config.checkpoints = !args.no_checkpoints;
    let mut overrides = BTreeMap::new();
    for text in &args.overrides {
        let (key, value) = parse_override(text)?;
        overrides.insert(key, value);
    }
    config.overrides = overrides;

    let result = run_experiment(&config)?;
    let (mean, std) = result.aggregate.last().context("no episodes were trained")?;
    println!("method: {}", config.method);
    println!("env: {}", config.env);
    println!("preset: {}", config.preset_name());
    println!("runs: {}", config.runs);
    println!("episodes: {}", config.episodes);
    println!("final_moving_average: {mean:.4}");
    println!("final_std: {std:.4}");
    for run in &result.runs {
        let last = moving_average(&run.curve, MOVING_WINDOW).last().copied().unwrap_or(f64::NAN);
        println!("run_seed_{}: {last:.4}", run.seed);
    }
    println!("aggregate: {}", result.aggregate_file.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let (policy, env) = match (&args.checkpoint, args.oracle) {
        (Some(path), false) => {
            let (meta, policy) = load_checkpoint(path)
                .with_context(|| format!("loading checkpoint {}", path.display()))?;
            if let Some(env) = args.env.filter(|&e| e != meta.env) {
                bail!("checkpoint was trained on {} but --env is {env}", meta.env);
            }
            (policy, meta.env)
        }
        (None, true) => (Policy::Oracle, args.env.unwrap_or(EnvId::HanabiColourless)),
        _ => bail!("pass exactly one of --checkpoint or --oracle"),
    };
    let deals = if args.best_case_deals {
        DealSet::BestCase
    } else if args.unique_match {
        DealSet::UniqueMatch
    } else {
        DealSet::Uniform
    };
    let report = evaluate_policy(&policy, env, args.episodes, deals, args.seed)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let config = load_sweep(&args.grid)?;
    let out = args.out.unwrap_or_else(|| {
        let stem = args.grid.file_stem().map(|s| s.to_string_lossy().into_owned());
        PathBuf::from("sweeps").join(stem.unwrap_or_else(|| "sweep".into()))
    });
    let rows = run_sweep(&config, &out)?;
    for (rank, row) in rows.iter().enumerate() {
        let values: Vec<String> = row.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{}. {} final {:.4} ± {:.4} ({})",
            rank + 1,
            values.join(" "),
            row.final_mean,
            row.final_std,
            row.out.display()
        );
    }
    println!("ranking: {}", out.join("sweep.csv").display());
    Ok(())
}

/// Aggregate files are used as-is; single-run curves are smoothed with the
/// same moving window and drawn without a band.
fn read_series(path: &PathBuf) -> Result<Aggregate> {
    if let Ok(agg) = Aggregate::read(path) {
        return Ok(agg);
    }
    let curve = read_curve(path).with_context(|| format!("reading {}", path.display()))?;
    let mean = moving_average(&curve, MOVING_WINDOW);
    let std = vec![0.0; mean.len()];
    Ok(Aggregate { mean, std })
}

fn plot(args: PlotArgs) -> Result<()> {
    let series = args
        .inputs
        .iter()
        .map(|path| Ok((series_label(path), read_series(path)?)))
        .collect::<Result<Vec<_>>>()?;
    let svg = emit_plot(&series)?;
    fs::write(&args.out, svg).with_context(|| format!("writing {}", args.out.display()))?;
    println!("plot: {}", args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    log::debug!("parallel execution: {}", ccrl::par::is_parallel());
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Eval(args) => eval(args),
        Command::Sweep(args) => sweep(args),
        Command::Plot(args) => plot(args),
    }
}
