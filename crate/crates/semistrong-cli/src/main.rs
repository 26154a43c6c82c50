use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use semistrong::dynamics::Backend;
use semistrong::ModelParams;
use semistrong_cli::commands::{self, Run};
use semistrong_cli::scenario::{run_batch, run_scenario, thread_cap};
use semistrong_cli::{exit_code, plots, ConfigError, ScenarioConfig};

/// Semi-strong pulse experiments: profiles, stability, reduced dynamics and direct simulation.
#[derive(Parser, Debug)]
#[command(name = "semistrong", version)]
struct Cli {
    /// Model parameters as a JSON file or inline JSON object (overrides the config).
    #[arg(long, global = true)]
    params: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Input {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pulse positions: comma-separated list or a CSV file.
    #[arg(long)]
    positions: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assemble the N-pulse profile and its residual.
    Profile(Input),
    /// Solve the mean-field amplitude equations.
    Meanfield(Input),
    /// Count and locate dispersion roots; optionally cross-check with the dense oracle.
    Spectrum {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        oracle: bool,
        /// Write the dispersion trace and Nyquist plot.
        #[arg(long)]
        trace: bool,
    },
    /// Print the admissibility verdict.
    Admissible(Input),
    /// Integrate the reduced pulse ODE.
    Evolve {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, value_parser = parse_backend)]
        backend: Option<Backend>,
    },
    /// Direct simulation of the full system.
    Simulate {
        #[command(flatten)]
        input: Input,
        /// Continue from a saved state up to the configured end time.
        #[arg(long)]
        restart: Option<PathBuf>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Compare a DNS run with an ODE trajectory.
    Compare {
        #[command(flatten)]
        input: Input,
        /// DNS directory holding series.csv.
        #[arg(long)]
        dns: PathBuf,
        #[arg(long)]
        ode: PathBuf,
    },
    /// Run the full pipeline for one or more configurations.
    Scenario {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Render plots from the artifacts in a run directory.
    Plots {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "matrix" => Ok(Backend::Matrix),
        "gradient" => Ok(Backend::Gradient),
        _ => Err(format!("unknown backend `{s}` (matrix | gradient)")),
    }
}

fn parse_positions(arg: &str) -> Result<Vec<f64>> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?
    } else {
        arg.to_string()
    };
    let mut out = Vec::new();
    for tok in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        match tok.parse::<f64>() {
            Ok(v) => out.push(v),
            // tolerate a header line in a CSV file
            Err(_) if out.is_empty() && path.is_file() => continue,
            Err(e) => return Err(ConfigError(format!("position `{tok}`: {e}")).into()),
        }
    }
    Ok(out)
}

fn parse_params(arg: &str) -> Result<ModelParams> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| ConfigError(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("params: {e}")).into())
}

impl Cli {
    fn overrides(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
        if let Some(p) = &self.params {
            cfg.params = parse_params(p)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn resolve(&self, input: &Input) -> Result<ScenarioConfig> {
        let mut cfg = match &input.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(p) = &input.positions {
            cfg.positions = parse_positions(p)?;
        }
        self.overrides(cfg)
    }

    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.outputs.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn run_for(&self, input: &Input) -> Result<Run> {
        let cfg = self.resolve(input)?;
        let out = self.out_dir(&cfg);
        let run = Run::new(cfg, out)?;
        run.write_config_echo()?;
        Ok(run)
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Profile(input) => print_json(&commands::profile(&cli.run_for(input)?)?),
        Command::Meanfield(input) => print_json(&commands::meanfield(&cli.run_for(input)?)?.1),
        Command::Spectrum { input, oracle, trace } => {
            let s = commands::spectrum(&cli.run_for(input)?, *oracle, *trace)?;
            print_json(&serde_json::json!({
                "verdict": s.report.verdict,
                "winding": s.report.winding,
                "zero_count": s.report.zero_count,
                "roots": s.report.roots,
            }))
        }
        Command::Admissible(input) => {
            let s = commands::spectrum(&cli.run_for(input)?, false, false)?;
            print_json(&serde_json::json!({
                "verdict": s.report.verdict,
                "spectrum_ok": s.report.spectrum_ok,
                "resolvent_ok": s.report.resolvent_ok,
                "spacing_ok": s.report.spacing_ok,
                "notes": s.report.notes,
            }))
        }
        Command::Evolve { input, t_end, backend } => {
            let mut cfg = cli.resolve(input)?;
            if let Some(t) = t_end {
                cfg.dynamics.t_end = *t;
            }
            if let Some(b) = backend {
                cfg.dynamics.backend = *b;
            }
            let out = cli.out_dir(&cfg);
            let run = Run::new(cfg, out)?;
            run.write_config_echo()?;
            let traj = commands::evolve(&run)?;
            print_json(&serde_json::json!({
                "final_positions": traj.last().p,
                "events": traj.events,
                "breakdown_time": traj.breakdown_time,
            }))
        }
        Command::Simulate { input, restart, t_end } => {
            let mut cfg = cli.resolve(input)?;
            if let Some(t) = t_end {
                cfg.dns.t_end = *t;
            }
            let out = cli.out_dir(&cfg);
            let run = Run::new(cfg, out)?;
            run.write_config_echo()?;
            let m = commands::simulate(&run, restart.as_deref())?;
            print_json(&serde_json::json!({
                "t_final": m.t_final,
                "steps": m.steps,
                "seed": m.seed,
                "warnings": m.warnings,
            }))
        }
        Command::Compare { input, dns, ode } => {
            let run = cli.run_for(input)?;
            let report = commands::compare_runs(&run, dns, ode)?;
            print_json(&report.to_json())
        }
        Command::Scenario { configs } => {
            let loaded = configs
                .iter()
                .map(|p| ScenarioConfig::load(p).map_err(anyhow::Error::from).and_then(|c| cli.overrides(c)))
                .collect::<Result<Vec<_>>>()?;
            if loaded.len() == 1 {
                let cfg = loaded.into_iter().next().expect("one config");
                let out = cli.out_dir(&cfg);
                let m = run_scenario(cfg, &out)?;
                return print_json(&m.stages);
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let results = run_batch(loaded, &out, thread_cap())?;
            let mut first_err = None;
            for (path, r) in configs.iter().zip(results) {
                match r {
                    Ok(m) => println!("{}: ok (admissible: {:?})", path.display(), m.admissible),
                    Err(e) => {
                        println!("{}: failed: {e:#}", path.display());
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Plots { dir } => {
            let cfg_path = dir.join("config.json");
            let cfg = if cfg_path.exists() {
                ScenarioConfig::load(&cfg_path)?
            } else {
                ScenarioConfig::default()
            };
            let cfg = cli.overrides(cfg)?;
            for note in plots::emit_plots(dir, &cfg)? {
                println!("{note}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(n) = std::env::var("SEMISTRONG_THREADS") {
        if std::env::var_os("RAYON_NUM_THREADS").is_none() {
            std::env::set_var("RAYON_NUM_THREADS", n);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
