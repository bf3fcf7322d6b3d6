use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use esc_core::cli::{
    cmd_bound_check, cmd_compare, cmd_run, cmd_sweep, BoundCheckOptions, SweepParam, EXIT_CONFIG,
};
use esc_core::config::{Config, PRESETS};
use esc_core::gekf::MeasurementModel;

#[derive(Parser)]
#[command(name = "esc", version, about = "Extremum-seeking scenario runner")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled config to use instead of a file.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides every scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    measurement_model: Option<Model>,
    /// Run scenarios that fail validation anyway.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Derived,
    PaperLiteral,
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Omega,
    Lambda,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run { name: String },
    /// Run two scenarios on the same field and compare their metrics.
    Compare { a: String, b: String },
    /// Fit a power-law decay bound to the recorded J.
    BoundCheck {
        name: String,
        #[arg(long, hide = true)]
        inject_constant_j: Option<f64>,
    },
    /// Rerun a scenario over a grid of dither frequencies or adaptation rates.
    Sweep {
        name: String,
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// List bundled configs and their scenarios.
    Presets,
}

impl Command {
    fn scenario_name(&self) -> Option<&str> {
        match self {
            Command::Run { name }
            | Command::BoundCheck { name, .. }
            | Command::Sweep { name, .. } => Some(name),
            Command::Compare { a, .. } => Some(a),
            Command::Presets => None,
        }
    }
}

fn load(cli: &Cli) -> esc_core::Result<Config> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => Config::load(path, cli.force)?,
        (None, Some(p)) => Config::preset(p)?,
        (None, None) => {
            let name = cli.command.scenario_name().unwrap_or_default();
            Config::preset_with_scenario(name).ok_or_else(|| {
                esc_core::Error::Config(format!(
                    "no --config given and no bundled scenario named `{name}`"
                ))
            })?
        }
    };
    cfg.forced |= cli.force;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(m) = cli.measurement_model {
        cfg.override_measurement_model(match m {
            Model::Derived => MeasurementModel::Derived,
            Model::PaperLiteral => MeasurementModel::PaperLiteral,
        });
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::Presets = cli.command {
        for (name, _) in PRESETS {
            let cfg = Config::preset(name).expect("bundled presets parse");
            let scenarios: Vec<_> = cfg.scenarios.keys().map(String::as_str).collect();
            println!("{name}: {}", scenarios.join(", "));
        }
        return ExitCode::SUCCESS;
    }
    let result = load(&cli).and_then(|cfg| {
        let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
        match &cli.command {
            Command::Run { name } => cmd_run(&cfg, name, &out),
            Command::Compare { a, b } => cmd_compare(&cfg, a, b, &out),
            Command::BoundCheck {
                name,
                inject_constant_j,
            } => cmd_bound_check(
                &cfg,
                name,
                &out,
                BoundCheckOptions {
                    inject_constant_j: *inject_constant_j,
                },
            ),
            Command::Sweep {
                name,
                param,
                values,
            } => {
                let p = match param {
                    Param::Omega => SweepParam::Omega,
                    Param::Lambda => SweepParam::Lambda,
                };
                cmd_sweep(&cfg, name, p, values, &out)
            }
            Command::Presets => unreachable!(),
        }
    });
    match result {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}
