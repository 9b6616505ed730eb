//! `mcre` command-line harness: config parsing, experiment dispatch and artifact output.

pub mod build;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::Output;

#[derive(Debug, Parser)]
#[command(name = "mcre", version, about = "Markov chains in random environments: experiments and certificates")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Experiment configuration (INI format).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; affects speed only.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override a config entry, `section.key=value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Simulate,
    Certify,
    Couple,
    MixingBounds,
    Oracle,
    Sgld(SgldArgs),
    #[command(subcommand)]
    Econ(EconCommand),
}

#[derive(Debug, Args)]
pub struct SgldArgs {
    #[arg(long)]
    pub c: Option<String>,
    #[arg(long, conflicts_with = "lambda_star")]
    pub lambda: Option<f64>,
    /// Use the optimal step `lambda*(c)`.
    #[arg(long)]
    pub lambda_star: bool,
    /// Inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Config file whose `[stream]` section defines the feature stream.
    #[arg(long)]
    pub env: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EconCommand {
    Simulate,
    Nw,
    Mle,
    Clt,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Certify => "certify",
            Command::Couple => "couple",
            Command::MixingBounds => "mixing-bounds",
            Command::Oracle => "oracle",
            Command::Sgld(_) => "sgld",
            Command::Econ(EconCommand::Simulate) => "econ-simulate",
            Command::Econ(EconCommand::Nw) => "econ-nw",
            Command::Econ(EconCommand::Mle) => "econ-mle",
            Command::Econ(EconCommand::Clt) => "econ-clt",
        }
    }
}

/// The effective configuration: file contents, then CLI overrides.
pub fn effective_config(cli: &Cli) -> CliResult<Config> {
    let mut cfg = match &cli.global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(e) = cfg.get("experiment") {
        if e != cli.command.name() {
            return Err(CliError::invalid(
                "experiment",
                format!("config is for `{e}`, subcommand is `{}`", cli.command.name()),
            ));
        }
    }
    let g = &cli.global;
    if let Some(s) = g.seed {
        cfg.set("run.seed", s.to_string());
    }
    if let Some(r) = g.reps {
        cfg.set("run.reps", r.to_string());
    }
    if let Some(h) = g.horizon {
        cfg.set("run.horizon", h.to_string());
    }
    for s in &g.set {
        cfg.apply_override(s)?;
    }
    if let Command::Sgld(a) = &cli.command {
        if let Some(p) = &a.env {
            let extra = Config::load(p)?;
            let mut found = false;
            for key in ["kind", "mean", "switch", "sd", "theta_true"] {
                if let Some(v) = extra.get(&format!("stream.{key}")) {
                    cfg.set(&format!("stream.{key}"), v);
                    found = true;
                }
            }
            if !found {
                return Err(CliError::invalid("--env", "file has no [stream] entries"));
            }
        }
        if let Some(c) = &a.c {
            cfg.set("sgld.c", c.clone());
        }
        if let Some(l) = a.lambda {
            cfg.set("sgld.lambda", l.to_string());
        }
        if a.lambda_star {
            cfg.set("sgld.lambda", "star");
        }
        if let Some(b) = a.beta {
            cfg.set("sgld.beta", b.to_string());
        }
        if let Some(d) = a.dim {
            cfg.set("sgld.dim", d.to_string());
        }
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> CliResult<PathBuf> {
    let cfg = effective_config(cli)?;
    let name = cli.command.name();
    let mut out = Output::new(&cli.global.out, cfg.hash(), name)?;
    let res = match &cli.command {
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Certify => commands::certify(&cfg, &mut out),
        Command::Couple => commands::couple(&cfg, &mut out),
        Command::MixingBounds => commands::mixing_bounds(&cfg, &mut out),
        Command::Oracle => commands::oracle_cmd(&cfg, &mut out),
        Command::Sgld(_) => commands::sgld(&cfg, &mut out),
        Command::Econ(EconCommand::Simulate) => commands::econ_simulate(&cfg, &mut out),
        Command::Econ(EconCommand::Nw) => commands::econ_nw(&cfg, &mut out),
        Command::Econ(EconCommand::Mle) => commands::econ_mle(&cfg, &mut out),
        Command::Econ(EconCommand::Clt) => commands::econ_clt(&cfg, &mut out),
    };
    res?;
    out.finish()
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    match execute(&cli) {
        Ok(dir) => {
            println!("{}", dir.join("manifest.json").display());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
