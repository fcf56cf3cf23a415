//! `heavywalk`: experiment runner for heavy-tailed lattice walks.
//!
//! Every subcommand reads an optional config file (`--config`) and flags that
//! override it. Artifacts go to `HEAVYWALK_OUT`, else `output.dir`, else the
//! working directory. Exit status: 0 on success or a passed check, 2 on a
//! failed or inconclusive check, 1 on error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(name = "heavywalk", version, about = "Green functions and local probabilities of heavy-tailed lattice walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-step probabilities. CSV columns: x_1..x_d, p.
    Pmf(Common),
    /// Normalizing sequences. CSV columns: n, a_1..a_d, b_1..b_d.
    Scaling(Common),
    /// Law of S_n on a box. Binary dump (header: d, corners; payload:
    /// little-endian f64, row-major) or CSV columns x_1..x_d, p.
    Nstep(Common),
    /// Exact Green function at targets. JSON values with remainders.
    Green(Common),
    /// Monte Carlo Green function at targets. JSON estimates with 95% intervals.
    GreenMc(Common),
    /// P(S_n^(i) - b_n >= x, max step <= cap). JSON estimates.
    Tailprob(Common),
    /// Rescaled sums (S_n - b_n)/a_n. CSV columns z_1..z_d, JSON summary.
    Rescale(Common),
    /// Limit density on a grid. CSV columns z_1..z_d, g.
    StableDensity(Common),
    /// Renewal limit constant by quadrature. JSON value and achieved error.
    SrtConstant(Common),
    /// Numerical check of a limit theorem or bound. JSON report.
    Check(CheckArgs),
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: Common,
    /// Recompute the verdict of a stored JSON report instead of running.
    #[arg(long, value_name = "FILE")]
    verify_report: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets any config key, e.g. `--set grid.window=6`.
    #[arg(long, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    targets: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<String>,
    #[arg(long)]
    coordinate: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    levels: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lower: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    upper: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    conv: Option<String>,
    #[arg(long)]
    walks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n_cap: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    theorem: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
}

impl Common {
    fn config(&self) -> Result<Config, heavywalk::Error> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let flags = [
            ("law.spec", &self.law),
            ("grid.n", &self.n),
            ("grid.n_grid", &self.n_grid),
            ("grid.n_max", &self.n_max),
            ("grid.targets", &self.targets),
            ("grid.t", &self.t),
            ("grid.coordinate", &self.coordinate),
            ("grid.levels", &self.levels),
            ("grid.lower", &self.lower),
            ("grid.upper", &self.upper),
            ("method.kind", &self.method),
            ("method.conv", &self.conv),
            ("method.walks", &self.walks),
            ("method.seed", &self.seed),
            ("method.n_cap", &self.n_cap),
            ("method.samples", &self.samples),
            ("check.theorem", &self.theorem),
            ("output.dir", &self.out),
            ("output.format", &self.format),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v.as_str())?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| heavywalk::Error::Parse(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<commands::Outcome, heavywalk::Error> {
    let (name, common) = match &cli.command {
        Command::Pmf(c) => ("pmf", c),
        Command::Scaling(c) => ("scaling", c),
        Command::Nstep(c) => ("nstep", c),
        Command::Green(c) => ("green", c),
        Command::GreenMc(c) => ("green-mc", c),
        Command::Tailprob(c) => ("tailprob", c),
        Command::Rescale(c) => ("rescale", c),
        Command::StableDensity(c) => ("stable-density", c),
        Command::SrtConstant(c) => ("srt-constant", c),
        Command::Check(c) => ("check", &c.common),
    };
    if let Command::Check(CheckArgs {
        verify_report: Some(path),
        ..
    }) = &cli.command
    {
        return commands::verify_report(path);
    }
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| heavywalk::Error::Resource(e.to_string()))?;
    }
    let cfg = common.config()?;
    commands::run(name, &cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            match outcome.verdict {
                None | Some(Some(true)) => ExitCode::SUCCESS,
                Some(_) => ExitCode::from(2),
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
