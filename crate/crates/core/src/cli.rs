//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::experiments::{self, checks, ExperimentError, ExperimentSpec, FieldKind};
use crate::pde;
use crate::train::checkpoint::to_precise_json;
use crate::train::Checkpoint;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "poupinn", version, about = "Partition-of-unity physics-informed neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List registered experiments.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Train one experiment into a run directory.
    Run {
        /// Registered name (ignored with --config).
        name: Option<String>,
        /// Override a training setting, e.g. `--set epochs=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Rerun from a `config.json` written by a previous run.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Run warm-started links, each initialised from the previous checkpoint.
    Chain {
        name: String,
        #[arg(long)]
        links: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against a registered experiment.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        experiment: String,
    },
    /// Export a field of a checkpoint on a grid as CSV.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        kind: FieldKind,
        /// Grid resolution `NX,NY`.
        #[arg(long, default_value = "101,101", value_parser = parse_res)]
        res: (usize, usize),
        /// Output file (stdout when absent).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run the numerical self-checks.
    Check,
}

fn parse_res(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected NX,NY")?;
    let nx: usize = a.trim().parse().map_err(|_| format!("bad NX '{a}'"))?;
    let ny: usize = b.trim().parse().map_err(|_| format!("bad NY '{b}'"))?;
    if nx < 2 || ny < 2 {
        return Err("resolution must be at least 2 per axis".into());
    }
    Ok((nx, ny))
}

fn resolve(name: &str, set: &[String]) -> Result<ExperimentSpec, ExperimentError> {
    let mut spec = experiments::lookup(name)?;
    let overrides = set
        .iter()
        .map(|s| experiments::parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    spec.train = experiments::apply_overrides(&spec.train, &overrides)?;
    Ok(spec)
}

fn report(code: &mut i32, e: ExperimentError) {
    eprintln!("error: {e}");
    *code = if e.is_usage() { EXIT_USAGE } else { EXIT_FAILURE };
}

fn print_metrics(m: &experiments::Metrics) {
    println!(
        "loss {:.6e} -> {:.6e} ({:.2} orders)",
        m.initial_loss.total, m.final_loss.total, m.loss_reduction_orders
    );
    if let Some(r) = m.relative_l2 {
        println!("relative L2 error {r:.4e}");
    }
    if let Some(p) = &m.partition {
        let levels: Vec<String> = p.levels.iter().map(|l| format!("{l:.4}")).collect();
        println!(
            "partition accuracy {:.4}, levels [{}], conductivity errors {:?}",
            p.accuracy,
            levels.join(", "),
            p.conductivity_errors
        );
    }
    if let Some(r) = m.level_ratio {
        println!("dominant level ratio {r:.4}");
    }
    for c in &m.checks {
        println!(
            "{} {}: {:.4e} (threshold {:.4e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.metric,
            c.value,
            c.threshold
        );
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let mut code = EXIT_OK;
    match cli.command {
        Command::List { json } => {
            let reg = experiments::registry();
            if json {
                match to_precise_json(&reg) {
                    Ok(s) => print!("{s}"),
                    Err(e) => report(&mut code, e.into()),
                }
            } else {
                println!(
                    "{:<12} {:<15} {:>6} {:>10} {:>8} {:<24} {:>5}",
                    "name", "mode", "epochs", "lr", "l2", "hidden (u | pou)", "links"
                );
                for e in reg {
                    let hidden = |h: &Option<Vec<usize>>| {
                        h.as_ref().map_or("-".to_string(), |v| {
                            v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("x")
                        })
                    };
                    println!(
                        "{:<12} {:<15} {:>6} {:>10} {:>8} {:<24} {:>5}",
                        e.name,
                        e.mode.name(),
                        e.train.epochs,
                        e.train.lr,
                        e.train.l2_lambda,
                        format!("{} | {}", hidden(&e.u_hidden), hidden(&e.pou_hidden)),
                        e.chain_links
                    );
                }
            }
        }
        Command::Run {
            name,
            set,
            out,
            config,
        } => {
            let spec = match (config, name) {
                (Some(path), _) => std::fs::read_to_string(&path)
                    .map_err(ExperimentError::from)
                    .and_then(|t| serde_json::from_str::<ExperimentSpec>(&t).map_err(|e| ExperimentError::Usage(e.to_string())))
                    .and_then(|mut s| {
                        let o = set
                            .iter()
                            .map(|x| experiments::parse_override(x))
                            .collect::<Result<Vec<_>, _>>()?;
                        s.train = experiments::apply_overrides(&s.train, &o)?;
                        Ok(s)
                    }),
                (None, Some(n)) => resolve(&n, &set),
                (None, None) => Err(ExperimentError::Usage(format!(
                    "missing experiment name; valid names: {}",
                    experiments::names().join(", ")
                ))),
            };
            match spec {
                Err(e) => report(&mut code, e),
                Ok(spec) => {
                    let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&spec.name));
                    let t0 = Instant::now();
                    match experiments::run_experiment(&spec, &dir) {
                        Ok(run) => {
                            println!("{} -> {}", spec.name, dir.display());
                            print_metrics(&run.metrics);
                            println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
                        }
                        Err(e) => report(&mut code, e),
                    }
                }
            }
        }
        Command::Chain {
            name,
            links,
            set,
            out,
        } => match resolve(&name, &set) {
            Err(e) => report(&mut code, e),
            Ok(spec) => {
                let n = links.unwrap_or(spec.chain_links);
                let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-chain", spec.name)));
                match experiments::run_chain(&spec, n, &dir) {
                    Ok(s) => {
                        println!("{:>5} {:>24} {:>24} {:>12}", "link", "initial loss", "final loss", "gap");
                        for l in &s.links {
                            println!(
                                "{:>5} {:>24.16e} {:>24.16e} {:>12.3e}",
                                l.link, l.initial_loss, l.final_loss, l.warm_start_gap
                            );
                        }
                    }
                    Err(e) => report(&mut code, e),
                }
            }
        },
        Command::Eval { checkpoint, experiment } => {
            let r = experiments::lookup(&experiment).and_then(|spec| {
                let ck = Checkpoint::load(&checkpoint)?;
                experiments::evaluate_checkpoint(&spec, &ck)
            });
            match r.and_then(|m| Ok(to_precise_json(&m)?)) {
                Ok(s) => print!("{s}"),
                Err(e) => report(&mut code, e),
            }
        }
        Command::Export {
            checkpoint,
            kind,
            res,
            out,
        } => {
            let r = (|| -> Result<String, ExperimentError> {
                let ck = Checkpoint::load(&checkpoint)?;
                let case = pde::case(&ck.case)?;
                let f = experiments::field_fn(&ck.models, &case, kind)?;
                Ok(experiments::export_grid(f.as_ref(), kind, res.0, res.1)?.to_csv())
            })();
            match r {
                Ok(csv) => {
                    let written = match &out {
                        Some(p) => std::fs::write(p, csv),
                        None => std::io::stdout().write_all(csv.as_bytes()),
                    };
                    if let Err(e) = written {
                        report(&mut code, e.into());
                    }
                }
                Err(e) => report(&mut code, e),
            }
        }
        Command::Check => {
            let results = checks::run_all();
            for r in &results {
                println!(
                    "{} {:<44} {:.3e} (threshold {:.1e})",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.value,
                    r.threshold
                );
                if let Some(n) = &r.note {
                    println!("     note: {n}");
                }
            }
            if results.iter().any(|r| !r.pass) {
                code = EXIT_FAILURE;
            }
        }
    }
    code
}

/// Parses `args` and runs; clap usage errors exit with 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            }
        }
    }
}
