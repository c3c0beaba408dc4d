use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use spaceconn::analysis::{analyze_plan, AnalysisOptions};
use spaceconn::dataset::{
    build_dataset, default_direction, remap_to_gray, DatasetOptions, SplitSpec,
};
use spaceconn::farm::{
    run_local, run_worker, serve_coordinator, CoordinatorConfig, FarmStats, TaskManifest,
    WorkerConfig,
};
use spaceconn::pgm::write_pgm;
use spaceconn::synth::{generate_batch, PlanStyle, PlanSynthParams};
use spaceconn::{load_occupancy, FieldKind, VisibilityBackend};

/// Floor-plan connectivity analysis: plan synthesis, analysis, batch farm
/// and dataset assembly.
#[derive(Parser, Debug)]
#[command(name = "spaceconn", version)]
struct Cli {
    /// Log more (repeat for debug output). `RUST_LOG` overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a batch of seeded floor plans and a task manifest.
    Generate(GenerateArgs),
    /// Plan synthesis commands.
    #[command(name = "plan-synth", subcommand)]
    PlanSynth(PlanSynthCommand),
    /// Prune a plan to its largest free component and analyse it.
    Analyze(AnalyzeArgs),
    /// Run task manifests locally or across machines.
    #[command(subcommand)]
    Farm(FarmCommand),
    /// Assemble training datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Time analyses on one plan and print JSON.
    Bench(BenchArgs),
}

#[derive(Subcommand, Debug)]
enum PlanSynthCommand {
    /// Same as the top-level `generate`.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value = "corridors")]
    style: PlanStyle,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plan size as WIDTHxHEIGHT.
    #[arg(long, default_value = "100x100", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long)]
    out: PathBuf,
    /// Analyses listed in the manifest, one task per plan and analysis.
    #[arg(long, value_delimiter = ',', default_value = "spatial,visual")]
    analyses: Vec<FieldKind>,
    /// Blocked share of the interior for open plans.
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Room count range for corridor plans, as MIN-MAX.
    #[arg(long, default_value = "4-8", value_parser = parse_range)]
    rooms: (usize, usize),
    #[arg(long, default_value = "2-4", value_parser = parse_range)]
    corridor_width: (usize, usize),
    #[arg(long, default_value_t = 2)]
    door_width: usize,
    #[arg(long, default_value_t = 2)]
    wall_thickness: usize,
    /// Metres per cell.
    #[arg(long, default_value_t = 1.0)]
    cell_size: f64,
}

#[derive(Args, Debug)]
struct AnalysisFlags {
    /// Metres per cell.
    #[arg(long, default_value_t = 1.0)]
    cell_size: f64,
    #[arg(long, default_value = "shadowcast")]
    visibility: VisibilityBackend,
    /// Spread the analysis over all cores. Output is identical.
    #[arg(long)]
    parallel: bool,
}

impl AnalysisFlags {
    fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            visibility: self.visibility,
            parallel: self.parallel,
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    analysis: FieldKind,
    /// Grayscale PGM rendering of the field.
    #[arg(long)]
    out: PathBuf,
    /// Also write the raw field as a `.f32` sidecar.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[command(flatten)]
    flags: AnalysisFlags,
}

#[derive(Subcommand, Debug)]
enum FarmCommand {
    /// Run a manifest on a local thread pool.
    Local {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Print stats as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve a manifest to TCP workers until every task finishes.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bind: String,
        /// Seconds of silence before a worker's tasks are reassigned.
        #[arg(long, default_value_t = 10.0)]
        heartbeat_timeout: f64,
        #[arg(long)]
        json: bool,
    },
    /// Execute tasks for a coordinator.
    Worker {
        #[arg(long)]
        connect: String,
        #[arg(long, default_value_t = 1)]
        slots: usize,
        /// Worker id; defaults to host name and process id.
        #[arg(long)]
        id: Option<String>,
        /// Seconds between heartbeats.
        #[arg(long, default_value_t = 2.0)]
        heartbeat: f64,
        #[arg(long, default_value_t = 5)]
        connect_attempts: u32,
    },
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    /// Pair plans with grayscale analysis targets and split them.
    Build {
        #[arg(long)]
        plans: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "spatial,visual")]
        analyses: Vec<FieldKind>,
        /// Train, validation and test ratios.
        #[arg(long, default_value = "0.7,0.2,0.1")]
        split: SplitSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Threads used to compute missing fields.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Fail on missing fields instead of computing them.
        #[arg(long)]
        no_farm: bool,
    },
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    analysis: Vec<FieldKind>,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    #[command(flatten)]
    flags: AnalysisFlags,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(w)?, num(h)?))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once('-').unwrap_or((s, s));
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn seconds(value: f64, flag: &str) -> anyhow::Result<Duration> {
    if !(value.is_finite() && value > 0.0) {
        bail!("--{flag} must be a positive number of seconds");
    }
    Ok(Duration::from_secs_f64(value))
}

fn print_stats(stats: &FarmStats, json: bool) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string(stats)?);
    } else {
        print!("{}", stats.table());
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let params = PlanSynthParams {
        width: args.size.0,
        height: args.size.1,
        style: args.style,
        seed: args.seed,
        room_count_range: args.rooms.0..=args.rooms.1,
        corridor_width_range: args.corridor_width.0..=args.corridor_width.1,
        furniture_density: args.density,
        door_width: args.door_width,
        wall_thickness: args.wall_thickness,
        cell_size: args.cell_size,
        ..Default::default()
    };
    let manifest = generate_batch(&params, args.count, &args.out, &args.analyses)?;
    let failed = manifest
        .tasks
        .iter()
        .filter(|t| t.message.is_some())
        .count();
    info!(
        "wrote {} plans and {} tasks",
        args.count,
        manifest.tasks.len()
    );
    if failed > 0 {
        bail!("{failed} tasks belong to plans that could not be generated");
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    let grid = load_occupancy(&args.input, args.flags.cell_size)?;
    let (pruned, field) = analyze_plan(&grid, args.analysis, args.flags.options())?;
    let image = remap_to_gray(&field, &pruned, default_direction(args.analysis))?;
    write_pgm(&image, &args.out)?;
    if let Some(path) = &args.sidecar {
        field.write_sidecar(path)?;
    }
    Ok(())
}

fn load_manifest(path: &Path) -> anyhow::Result<TaskManifest> {
    Ok(TaskManifest::load(path)?)
}

fn farm(cmd: &FarmCommand) -> anyhow::Result<()> {
    match cmd {
        FarmCommand::Local {
            manifest,
            workers,
            json,
        } => {
            let mut m = load_manifest(manifest)?;
            let stats = run_local(&mut m, *workers)?;
            print_stats(&stats, *json)
        }
        FarmCommand::Serve {
            manifest,
            bind,
            heartbeat_timeout,
            json,
        } => {
            let mut m = load_manifest(manifest)?;
            let config = CoordinatorConfig {
                heartbeat_timeout: seconds(*heartbeat_timeout, "heartbeat-timeout")?,
                ..Default::default()
            };
            let report = serve_coordinator(&mut m, bind, config)?;
            info!(
                "{} reassignments, {} duplicate results, {} protocol violations",
                report.reassignments, report.duplicate_results, report.protocol_violations
            );
            print_stats(&report.stats, *json)
        }
        FarmCommand::Worker {
            connect,
            slots,
            id,
            heartbeat,
            connect_attempts,
        } => {
            let mut config = WorkerConfig::new(*slots);
            if let Some(id) = id {
                config.worker_id = id.clone();
            }
            config.heartbeat_interval = seconds(*heartbeat, "heartbeat")?;
            config.connect_attempts = *connect_attempts;
            let report = run_worker(connect, &config)?;
            info!("executed {} tasks", report.tasks_executed);
            Ok(())
        }
    }
}

fn dataset(cmd: &DatasetCommand) -> anyhow::Result<()> {
    let DatasetCommand::Build {
        plans,
        analyses,
        split,
        seed,
        out,
        workers,
        no_farm,
    } = cmd;
    let options = DatasetOptions {
        analyses: analyses.clone(),
        split: SplitSpec {
            seed: *seed,
            ..split.clone()
        },
        farm_workers: (!no_farm).then_some(*workers),
        ..Default::default()
    };
    let entries = build_dataset(plans, out, &options)?;
    info!("wrote {} records to {}", entries.len(), out.display());
    Ok(())
}

fn bench(args: &BenchArgs) -> anyhow::Result<()> {
    if args.repeat == 0 {
        bail!("--repeat must be at least 1");
    }
    let grid = load_occupancy(&args.input, args.flags.cell_size)?;
    let mut results = Vec::new();
    for &kind in &args.analysis {
        let timings: Vec<f64> = (0..args.repeat)
            .map(|_| {
                let start = Instant::now();
                analyze_plan(&grid, kind, args.flags.options())
                    .map(|_| start.elapsed().as_secs_f64())
            })
            .collect::<Result<_, _>>()?;
        let mean = timings.iter().sum::<f64>() / timings.len() as f64;
        results.push(json!({
            "analysis": kind.slug(),
            "timings_seconds": timings,
            "mean_seconds": mean,
        }));
    }
    let report = json!({
        "input": args.input.display().to_string(),
        "width": grid.width(),
        "height": grid.height(),
        "repeat": args.repeat,
        "parallel": args.flags.parallel,
        "results": results,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Generate(args) | Command::PlanSynth(PlanSynthCommand::Generate(args)) => {
            generate(args).context("generate")
        }
        Command::Analyze(args) => {
            analyze(args).with_context(|| format!("analyze {}", args.input.display()))
        }
        Command::Farm(cmd) => farm(cmd),
        Command::Dataset(cmd) => dataset(cmd),
        Command::Bench(args) => bench(args),
    }
}

fn main() -> ExitCode {
    // Clap exits with status 2 on usage errors and 0 for --help.
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
