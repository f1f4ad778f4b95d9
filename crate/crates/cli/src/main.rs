use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndct_cli::commands::{evaluate, generate, identify, load_datasets, load_theta, simulate};
use ndct_cli::config::{DatasetSpec, ProfileSource, RunConfig};
use ndct_cli::CliError;
use ndct_core::battery::State;
use ndct_core::simulator::SynthKind;

#[derive(Parser)]
#[command(
    name = "ndct",
    version,
    about = "Electro-thermal cell model identification by Bayesian optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize noisy datasets from the config's true parameters.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Maximize the log-likelihood of the datasets over the search box.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Manifest (.json) or dataset CSV; repeatable. Defaults to `<out>/manifest.json`.
        #[arg(long)]
        data: Vec<PathBuf>,
        /// Keep the full box for every round.
        #[arg(long)]
        no_shrink: bool,
        /// Iterations per round.
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Compare predictions under given parameters with measured data.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Parameter JSON, or a `result.json` from `identify`.
        #[arg(long)]
        theta: PathBuf,
        /// Manifest (.json) or dataset CSV; repeatable.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
    },
    /// Simulate the state trajectory for one current profile.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Parameter JSON, or a `result.json` from `identify`.
        #[arg(long)]
        theta: PathBuf,
        /// Profile CSV with header `time_s,value`.
        #[arg(long, conflicts_with = "synth")]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        scale_min: f64,
        #[arg(long, default_value_t = 4.0)]
        scale_max: f64,
        /// Synthetic profile instead of a file.
        #[arg(long, value_parser = parse_synth)]
        synth: Option<SynthKind>,
        #[arg(long, default_value_t = 1800)]
        duration: usize,
        #[arg(long, default_value_t = 0)]
        profile_seed: u64,
        /// Ambient temperature [K].
        #[arg(long, default_value_t = 298.0)]
        t_amb: f64,
        /// Initial state `V_b,V_s,T_c,T_s`; rest at full charge and ambient temperature by default.
        #[arg(long, value_delimiter = ',')]
        x0: Option<Vec<f64>>,
        /// RK4 substeps per sample; the config's generation substeps by default.
        #[arg(long)]
        substeps: Option<usize>,
    },
}

fn parse_synth(s: &str) -> Result<SynthKind, String> {
    match s {
        "pulse" => Ok(SynthKind::Pulse),
        "random-walk" => Ok(SynthKind::RandomWalk),
        other => Err(format!(
            "unknown profile kind {other}; expected pulse or random-walk"
        )),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load_config(&common)?;
            let manifest = generate(&cfg, &cfg.out_dir)?;
            println!(
                "wrote {} datasets to {}",
                manifest.datasets.len(),
                cfg.out_dir.display()
            );
        }
        Command::Identify {
            common,
            data,
            no_shrink,
            iterations,
            rounds,
        } => {
            let mut cfg = load_config(&common)?;
            if no_shrink {
                cfg.schedule.shrink = false;
            }
            if let Some(n) = iterations {
                cfg.schedule.iterations_per_round = n;
                cfg.schedule.n_initial = cfg.schedule.n_initial.min(n);
                cfg.schedule.tau = cfg.schedule.tau.min(n);
            }
            if let Some(n) = rounds {
                cfg.schedule.n_rounds = n;
            }
            let paths = if data.is_empty() {
                vec![cfg.out_dir.join("manifest.json")]
            } else {
                data
            };
            let datasets = load_datasets(&paths, &cfg)?;
            let result = identify(&cfg, &datasets, &cfg.out_dir, cfg.seed)?;
            println!(
                "L(theta_hat) = {} after {} evaluations",
                result.log_likelihood, result.evaluations
            );
        }
        Command::Evaluate {
            common,
            theta,
            data,
        } => {
            let cfg = load_config(&common)?;
            let params = load_theta(&theta)?;
            let datasets = load_datasets(&data, &cfg)?;
            let summary = evaluate(&cfg, &params, &datasets, &cfg.out_dir)?;
            println!(
                "L = {}, max |voltage error| = {:.6} V, max |temperature error| = {:.6} K",
                summary.log_likelihood,
                summary.max_abs_voltage_error,
                summary.max_abs_temperature_error
            );
        }
        Command::Simulate {
            common,
            theta,
            profile,
            scale_min,
            scale_max,
            synth,
            duration,
            profile_seed,
            t_amb,
            x0,
            substeps,
        } => {
            let cfg = load_config(&common)?;
            let params = load_theta(&theta)?;
            let source = match (profile, synth) {
                (Some(path), _) => ProfileSource::File {
                    path,
                    scale_min,
                    scale_max,
                },
                (None, Some(kind)) => ProfileSource::Synth {
                    synth: kind,
                    duration_s: duration,
                    seed: profile_seed,
                },
                (None, None) => {
                    return Err(CliError::Input("give either --profile or --synth".into()))
                }
            };
            let spec = DatasetSpec {
                name: "simulation".into(),
                profile: source,
                t_amb,
                seed: None,
                initial_level: 1.0,
            };
            let current = spec.load_profile()?;
            let x0 = match x0 {
                Some(v) if v.len() == 4 => State::new(v[0], v[1], v[2], v[3]),
                Some(v) => {
                    return Err(CliError::Input(format!(
                        "--x0 needs 4 comma-separated values, got {}",
                        v.len()
                    )))
                }
                None => spec.x0(),
            };
            let out = if cfg.out_dir.extension().is_some_and(|e| e == "csv") {
                cfg.out_dir.clone()
            } else {
                cfg.out_dir.join("trajectory.csv")
            };
            let rows = simulate(
                &params,
                &cfg.ocv()?,
                cfg.likelihood.t_ref,
                &current,
                &x0,
                substeps.unwrap_or(cfg.generation_substeps),
                Path::new(&out),
            )?;
            println!("wrote {rows} rows to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
