use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feddual::config::{self, Overrides, SweepSummary};
use feddual::diagnostics::{self, NormTrace};
use feddual::runtime::{self, ExperimentConfig, LayerSelection, Simulation};
use feddual::{checkpoint, Algorithm, Error};

/// Relative output directories are placed under this root when it is set.
const OUT_ROOT_ENV: &str = "FEDDUAL_OUT_ROOT";

#[derive(Parser)]
#[command(name = "feddual", version, about = "Federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Dirichlet concentration of the label partition.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Barycenter layers: "none", "all", "last N" or a list like "0,1".
    #[arg(long)]
    mask: Option<LayerSelection>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment per seed and summarize final accuracy.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds (defaults to experiment.seeds).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Run seeds concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Print or run a named experiment bundle.
    Preset {
        name: String,
        #[command(flatten)]
        common: Common,
        /// Run every config instead of printing them.
        #[arg(long)]
        execute: bool,
    },
    /// Evaluate the loss surface around a run's final checkpoint.
    Landscape {
        /// Run directory holding config.toml and checkpoint.bin.
        run: PathBuf,
        #[arg(long, default_value_t = 5)]
        grid: usize,
        #[arg(long, default_value_t = 0.5)]
        span: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished run directory.
    Report {
        run: PathBuf,
        /// Target accuracy for rounds-to-target.
        #[arg(long)]
        target: Option<f64>,
    },
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_config(common: &Common) -> feddual::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => config::parse_config(p)?,
        None => ExperimentConfig::default(),
    };
    overrides(common).apply(&mut cfg)?;
    cfg.output.dir = resolve_out(&cfg.output.dir);
    Ok(cfg)
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        seed: common.seed,
        algorithm: common.algorithm,
        alpha: common.alpha,
        rounds: common.rounds,
        mask: common.mask.clone(),
        out: common.out.clone(),
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn write(path: &Path, text: &str) -> feddual::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_one(cfg: &ExperimentConfig) -> feddual::Result<Vec<feddual::RoundReport>> {
    log::info!(
        "running {} ({}) for {} rounds into {}",
        cfg.experiment.name,
        cfg.experiment.algorithm,
        cfg.experiment.rounds,
        cfg.output.dir.display()
    );
    let reports = runtime::run_experiment(cfg)?;
    if let Some(last) = reports.last() {
        log::info!("final accuracy {:.4}", last.test_accuracy);
    }
    Ok(reports)
}

fn sweep(base: &ExperimentConfig, seeds: &[u64], parallel: bool) -> feddual::Result<SweepSummary> {
    let configs: Vec<ExperimentConfig> = seeds
        .iter()
        .map(|&s| {
            let mut c = base.clone();
            c.experiment.seed = s;
            c.output.dir = base.output.dir.join(format!("seed-{s}"));
            c
        })
        .collect();
    let runs = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run_one(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect::<feddual::Result<Vec<_>>>()
        })?
    } else {
        configs.iter().map(run_one).collect::<feddual::Result<Vec<_>>>()?
    };
    let summary = config::summarize_sweep(seeds, &runs, base.experiment.target_accuracy);
    std::fs::create_dir_all(&base.output.dir).map_err(|e| Error::Io {
        path: base.output.dir.clone(),
        source: e,
    })?;
    write(
        &base.output.dir.join("sweep.json"),
        &serde_json::to_string_pretty(&summary).expect("serializable"),
    )?;
    Ok(summary)
}

fn landscape(run: &Path, grid: usize, span: f64, seed: u64, out: Option<PathBuf>) -> feddual::Result<()> {
    let cfg = config::parse_config(&run.join(runtime::CONFIG_ECHO_FILE))?;
    let ck = checkpoint::load(&run.join(runtime::CHECKPOINT_FILE))?;
    let (train, test) = runtime::load_data(&cfg.data)?;
    let sim = Simulation::from_data(&cfg, train, test)?;
    if !ck.params.matches_spec(&sim.spec) {
        return Err(Error::Input("checkpoint does not match the configured model".into()));
    }
    let g = diagnostics::loss_landscape_grid(&sim.spec, &ck.params, &sim.test, grid, span, seed)?;
    let out = resolve_out(&out.unwrap_or_else(|| run.to_path_buf()));
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    write(&out.join("landscape.csv"), &g.to_csv())?;
    write(
        &out.join("landscape.json"),
        &serde_json::to_string_pretty(&g).expect("serializable"),
    )?;
    println!(
        "center {:.6} flatness {:.6} written to {}",
        g.center(),
        g.flatness(),
        out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct RunReport {
    complete: bool,
    rounds: usize,
    final_accuracy: Option<f64>,
    best_accuracy: Option<f64>,
    rounds_to_target: Option<usize>,
    decay_slope: Option<f64>,
    decay_residual: Option<f64>,
}

fn report(run: &Path, target: Option<f64>) -> feddual::Result<()> {
    let m = config::load_metrics(&run.join(runtime::METRICS_FILE))?;
    write(&run.join("norms.csv"), &NormTrace::from_reports(&m.reports).to_csv())?;
    let fit = diagnostics::decay_from_reports(&m.reports).ok();
    print_json(&RunReport {
        complete: m.is_complete(),
        rounds: m.reports.len(),
        final_accuracy: m.reports.last().map(|r| r.test_accuracy),
        best_accuracy: m.reports.iter().map(|r| r.test_accuracy).reduce(f64::max),
        rounds_to_target: target.and_then(|t| diagnostics::rounds_to_target(&m.reports, t)),
        decay_slope: fit.as_ref().map(|f| f.slope),
        decay_residual: fit.as_ref().map(|f| f.residual),
    });
    Ok(())
}

fn execute(cli: Cli) -> feddual::Result<()> {
    match cli.command {
        Command::Run { common } => {
            let cfg = load_config(&common)?;
            let reports = run_one(&cfg)?;
            print_json(&config::RunSummary::from_reports(&reports, &config::config_hash(&cfg)));
        }
        Command::Sweep { common, seeds, parallel } => {
            let cfg = load_config(&common)?;
            let seeds = seeds.unwrap_or_else(|| cfg.experiment.seeds.clone());
            if seeds.is_empty() {
                return Err(Error::Config("sweep: no seeds given".into()));
            }
            print_json(&sweep(&cfg, &seeds, parallel)?);
        }
        Command::Preset { name, common, execute } => {
            let ov = overrides(&Common { config: None, ..common.clone() });
            for mut named in config::preset(&name)? {
                ov.apply(&mut named.config)?;
                if common.out.is_some() {
                    named.config.output.dir = named.config.output.dir.join(&named.label);
                }
                named.config.output.dir = resolve_out(&named.config.output.dir);
                if execute {
                    let reports = run_one(&named.config)?;
                    let acc = reports.last().map_or(f64::NAN, |r| r.test_accuracy);
                    println!("{}\t{acc:.4}", named.label);
                } else {
                    println!("# {}\n{}", named.label, config::serialize_config(&named.config)?);
                }
            }
        }
        Command::Landscape {
            run,
            grid,
            span,
            seed,
            out,
        } => landscape(&run, grid, span, seed, out)?,
        Command::Report { run, target } => report(&run, target)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
