use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod svg;

use commands::Failure;
use config::RunConfig;

/// Delayed switching control of an inverted pendulum.
#[derive(Parser)]
#[command(name = "delayswitch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the delayed system from one or more start points.
    Simulate(Common),
    /// Integrate the undelayed Filippov system.
    ZeroDelay(Common),
    /// Tabulate a closed-form small-amplitude curve.
    Asymptote(Common),
    /// Locate bifurcations (kind = curves, plane or diagram).
    Scan(Common),
    /// Bursting diagnostics for the delayed system.
    Burst(Common),
    /// Run whichever command the config file names in its `command` key.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rule: Option<String>,
    /// Gain profile: `one` or `cos`.
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi0: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, applied last. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

impl Common {
    fn merged(&self) -> Result<RunConfig, config::ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let text = [
            ("rule", self.rule.clone()),
            ("g", self.g.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in text {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        let nums = [
            ("a", self.a),
            ("b", self.b),
            ("tau", self.tau),
            ("s", self.s),
            ("sigma", self.sigma),
            ("theta0", self.theta0),
            ("phi0", self.phi0),
            ("tmax", self.tmax),
            ("dt", self.dt),
        ];
        for (k, v) in nums {
            if let Some(v) = v {
                cfg.set(k, &v.to_string())?;
            }
        }
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        Ok(cfg)
    }
}

fn dispatch(name: &str, cfg: &RunConfig) -> Result<(), Failure> {
    let named = cfg.get("command");
    let name = match (name, named) {
        ("run", Some(n)) => n,
        ("run", None) => return Err(config::ConfigError("`run` needs a config with a `command` key".into()).into()),
        (n, Some(c)) if c != n => {
            return Err(config::ConfigError(format!("config is for `{c}` but `{n}` was invoked")).into());
        }
        (n, _) => n,
    };
    match name {
        "simulate" => commands::simulate(cfg),
        "zero-delay" => commands::zero_delay(cfg),
        "asymptote" => commands::asymptote(cfg),
        "scan" => commands::scan(cfg),
        "burst" => commands::burst(cfg),
        other => Err(config::ConfigError(format!("unknown command `{other}`")).into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (common, name) = match &cli.command {
        Command::Simulate(c) => (c, "simulate"),
        Command::ZeroDelay(c) => (c, "zero-delay"),
        Command::Asymptote(c) => (c, "asymptote"),
        Command::Scan(c) => (c, "scan"),
        Command::Burst(c) => (c, "burst"),
        Command::Run(c) => (c, "run"),
    };
    let result = common.merged().map_err(Failure::from).and_then(|cfg| dispatch(name, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
