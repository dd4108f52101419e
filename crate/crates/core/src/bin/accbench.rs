use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use accbench::drl::{train_multi, Checkpoint, Policy};
use accbench::harness::config::GridChoice;
use accbench::harness::experiments::{self, grid_eval, training_curve_series, Context, ExperimentOutput};
use accbench::harness::grid::parse_ic;
use accbench::harness::{ControllerSpec, ExperimentConfig, ExperimentSummary, IcGrid};
use accbench::{Error, KinematicState, ModelSpec};

#[derive(Parser, Debug)]
#[command(
    name = "accbench",
    version,
    about = "ACC benchmark: DDPG policy vs interior-point MPC"
)]
struct Cli {
    /// RNG seed; for `train` it replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel episodes (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Policy checkpoint (written by `train`, read by the others).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train DDPG policies and keep the best seed.
    Train {
        /// Environment steps per seed.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the loaded policy over both IC grids on the configured plant.
    Evaluate,
    /// MPC over a list of horizons from one initial state, against IPO.
    HorizonSweep {
        /// Initial state as `e,ev,a`.
        #[arg(long, allow_hyphen_values = true)]
        ic: Option<String>,
        #[arg(long, value_delimiter = ',')]
        horizons: Option<Vec<usize>>,
    },
    /// All selected methods over an IC grid.
    Grid {
        /// `in` or `cut-in`.
        #[arg(long)]
        range: Option<String>,
    },
    /// DRL and MPC with transport delays.
    DelaySweep {
        #[arg(long)]
        range: Option<String>,
        /// Delays in seconds.
        #[arg(long, value_delimiter = ',')]
        delays: Option<Vec<f64>>,
    },
    /// Constant-speed following on the surrogate vehicle.
    Shfm {
        #[arg(long, allow_hyphen_values = true)]
        ic: Option<String>,
        /// Initial ego speeds in m/s.
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
    },
    /// Drive-cycle following on the surrogate vehicle.
    Cycle {
        /// Built-in cycle name or CSV path; repeatable.
        #[arg(long = "cycle")]
        cycles: Vec<String>,
    },
    /// Print every saved summary in the output directory.
    Report,
}

#[derive(Debug)]
enum Failure {
    Config(Error),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;

    if let Command::Train { steps } = &cli.cmd {
        return train(&cli, cfg, *steps);
    }
    if let Command::Report = &cli.cmd {
        return report(&cli.out);
    }

    let policy = cli.checkpoint.as_deref().map(load_policy).transpose()?;
    let ctx = cfg.context(policy.as_ref());
    let outputs = match &cli.cmd {
        Command::Evaluate => {
            let pol = policy
                .as_ref()
                .ok_or_else(|| Error::Config("evaluate needs --checkpoint".into()))?;
            let specs = [ControllerSpec::Drl(pol)];
            let mut out = ExperimentOutput {
                summary: ExperimentSummary::new("evaluate"),
                ..Default::default()
            };
            for grid in [IcGrid::in_range(), IcGrid::cut_in()] {
                let res = grid_eval(&ctx, &grid, &specs, &cfg.experiment.model)?;
                out.summary.rows.extend(res.rows(None)?);
                out.timing.extend(res.timing());
            }
            vec![out]
        }
        Command::HorizonSweep { ic, horizons } => {
            let ic = resolve_ic(ic.as_deref(), &cfg)?;
            let horizons = horizons.clone().unwrap_or_else(|| cfg.experiment.horizons.clone());
            vec![experiments::horizon_sweep(&ctx, ic, &horizons)?]
        }
        Command::Grid { range } => {
            let grid = resolve_grid(range.as_deref(), &cfg)?;
            vec![experiments::grid_experiment(&ctx, &grid, &cfg.experiment.model, &cfg.experiment.methods)?.0]
        }
        Command::DelaySweep { range, delays } => {
            let grid = resolve_grid(range.as_deref(), &cfg)?;
            let delays = delays.clone().unwrap_or_else(|| cfg.experiment.delays.clone());
            vec![experiments::delay_sweep(&ctx, &grid, &delays)?.0]
        }
        Command::Shfm { ic, speeds } => {
            let ic = resolve_ic(ic.as_deref(), &cfg)?;
            let speeds = speeds.clone().unwrap_or_else(|| cfg.experiment.speeds.clone());
            vec![experiments::shfm_constant_speed(&ctx, ic, &speeds)?.0]
        }
        Command::Cycle { cycles } => {
            let names = if cycles.is_empty() {
                &cfg.experiment.cycles
            } else {
                cycles
            };
            names
                .iter()
                .map(|n| experiments::drive_cycle_eval(&ctx, &cfg.cycle(n)?))
                .collect::<accbench::Result<Vec<_>>>()?
        }
        Command::Train { .. } | Command::Report => unreachable!(),
    };

    let mut failures = 0;
    for out in &outputs {
        write_output(&cli.out, out)?;
        print_summary(&out.summary, cli.format)?;
        failures += out.summary.rows.iter().map(|r| r.solver_failures).sum::<usize>();
    }
    if failures > 0 {
        return Err(Failure::Run(format!("{failures} solver calls hit their iteration cap")));
    }
    Ok(())
}

fn load_policy(path: &Path) -> Result<Policy, Failure> {
    Ok(Checkpoint::load(path)?.policy()?)
}

fn resolve_ic(arg: Option<&str>, cfg: &ExperimentConfig) -> Result<KinematicState, Failure> {
    Ok(match arg {
        Some(text) => parse_ic(text)?,
        None => cfg.ic(),
    })
}

fn resolve_grid(arg: Option<&str>, cfg: &ExperimentConfig) -> Result<IcGrid, Failure> {
    Ok(match arg {
        Some(name) => GridChoice::Named(name.into()).resolve()?,
        None => cfg.experiment.grid.resolve()?,
    })
}

#[derive(Serialize)]
struct SeedLine {
    seed: u64,
    failed: bool,
    eval_cost: Option<f64>,
    final_reward_mean: f64,
}

#[derive(Serialize)]
struct TrainReport {
    best_seed: u64,
    steps: usize,
    selection: &'static str,
    seeds: Vec<SeedLine>,
}

fn train(cli: &Cli, mut cfg: ExperimentConfig, steps: Option<usize>) -> Result<(), Failure> {
    if let Some(s) = steps {
        cfg.train.total_steps = s;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seeds = vec![seed];
    }
    cfg.train.validate()?;
    let ctx: Context<'_> = cfg.context(None);
    let grid = IcGrid::in_range();
    let evaluate = |pol: &Policy| -> accbench::Result<f64> {
        grid_eval(&ctx, &grid, &[ControllerSpec::Drl(pol)], &ModelSpec::Com)?.average_cost("DRL")
    };
    let outcome = train_multi(&cfg.train, &cfg.acc, evaluate)?;

    let ckpt_path = cli.checkpoint.clone().unwrap_or_else(|| cli.out.join("policy.ckpt"));
    Checkpoint::from_nets(&outcome.best, outcome.best_seed, cfg.train.total_steps as u64).save(&ckpt_path)?;
    let series_dir = cli.out.join("series");
    std::fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;
    for s in &outcome.seeds {
        training_curve_series(&format!("training_reward_seed{}", s.seed), &s.curve).write(&series_dir)?;
    }
    let report = TrainReport {
        best_seed: outcome.best_seed,
        steps: cfg.train.total_steps,
        selection: "average DRL episode cost over the in-range grid",
        seeds: outcome
            .seeds
            .iter()
            .map(|s| SeedLine {
                seed: s.seed,
                failed: s.failed,
                eval_cost: s.eval_cost.is_finite().then_some(s.eval_cost),
                final_reward_mean: s.final_reward_mean,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    write_file(&cli.out.join("train_report.json"), &text)?;
    println!("{text}");
    log::info!("best seed {} saved to {}", outcome.best_seed, ckpt_path.display());
    if outcome.all_failed() {
        return Err(Failure::Run("every training seed diverged".into()));
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn write_output(dir: &Path, out: &ExperimentOutput) -> Result<(), Failure> {
    let name = &out.summary.experiment;
    write_file(&dir.join(format!("{name}_summary.json")), &out.summary.to_json()?)?;
    write_file(&dir.join(format!("{name}_summary.csv")), &out.summary.to_csv())?;
    let timing = serde_json::to_string_pretty(&out.timing).map_err(Error::from)?;
    write_file(&dir.join(format!("{name}_timing.json")), &timing)?;
    if !out.series.is_empty() {
        let series_dir = dir.join("series");
        std::fs::create_dir_all(&series_dir).map_err(|e| Error::io(&series_dir, e))?;
        for s in &out.series {
            s.write(&series_dir)?;
        }
    }
    if !out.traces.is_empty() {
        let trace_dir = dir.join("traces");
        std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
        for (stem, trace) in &out.traces {
            let path = trace_dir.join(format!("{stem}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            trace
                .write_csv(std::io::BufWriter::new(file))
                .map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

fn print_summary(summary: &ExperimentSummary, format: Format) -> Result<(), Failure> {
    match format {
        Format::Csv => print!("{}", summary.to_csv()),
        Format::Json => println!("{}", summary.to_json()?),
    }
    Ok(())
}

/// Prints every `*_summary.json` in `dir`, in file-name order.
fn report(dir: &Path) -> Result<(), Failure> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_summary.json"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no summaries found in {}", dir.display())).into());
    }
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let summary = ExperimentSummary::from_json(&text)?;
        println!("{}", summary.render());
    }
    Ok(())
}
