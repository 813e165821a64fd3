use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leach_rlc::clustering::{solve_bruteforce, solve_exact, MilpWeights};
use leach_rlc::config::Config;
use leach_rlc::experiment::{self, GridSpec, ProtocolKind};
use leach_rlc::network::load_state_csv;
use leach_rlc::surrogate::SolutionDataset;
use leach_rlc::Error;

#[derive(Parser)]
#[command(name = "leach-rlc", version, about = "Energy-aware clustering experiments for wireless sensor networks")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[paths] out_dir`).
    #[arg(long, global = true, env = "LEACH_RLC_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one protocol to the last node death.
    Simulate {
        #[arg(long, default_value = "leach")]
        protocol: String,
        /// Topology and protocol seed (defaults to `[network] seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run all three protocols over several seeds.
    Compare {
        /// Seeds as `a-b` or a comma list.
        #[arg(long, default_value = "1-10")]
        seeds: String,
    },
    /// FND over a lattice of objective weights.
    Sweep {
        /// `lo:hi:count` for all axes, or `a=..;b=..;g=..`.
        #[arg(long, default_value = "0:100:5")]
        grid: String,
        /// Only `fnd` is supported.
        #[arg(long, default_value = "fnd")]
        metric: String,
        /// Rounds between re-clustering.
        #[arg(long, default_value_t = 1)]
        period: u32,
    },
    /// Train the re-clustering policy.
    TrainAgent {
        /// Override `[dqn] total_steps`.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Build a solver-labelled dataset and train the surrogate networks.
    TrainSurrogate {
        /// Train on an existing dataset CSV (with its `.schema.json` sidecar).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Solve the clustering problem for a node state file.
    Solve {
        /// CSV with `id,x,y[,energy]`.
        state: PathBuf,
        /// `alpha,beta,gamma`; the reference weights when omitted.
        #[arg(long)]
        weights: Option<String>,
        /// Number of cluster heads (defaults to the configured fraction).
        #[arg(long)]
        k: Option<usize>,
        /// Use exhaustive enumeration instead of branch and bound.
        #[arg(long)]
        bruteforce: bool,
    },
    /// Validate emitted CSV files against their schemas.
    SchemaCheck { files: Vec<PathBuf> },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::param("seeds", format!("{text:?} is not `a-b` or a comma list"));
    if let Some((a, b)) = text.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

fn parse_weights(text: &str) -> Result<MilpWeights, Error> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::param("weights", e.to_string()))?;
    match v[..] {
        [a, b, g] => MilpWeights::new(a, b, g),
        _ => Err(Error::param("weights", "expected alpha,beta,gamma")),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let out = cli.out_dir.clone().or_else(|| cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Simulate { protocol, seed } => {
            let kind: ProtocolKind = protocol.parse()?;
            let seed = seed.unwrap_or(cfg.network.seed);
            let policy = match kind {
                ProtocolKind::LeachRlc => Some(experiment::load_policy(&cfg.paths.policy(&out))?),
                _ => None,
            };
            let r = experiment::run_protocol(kind, &cfg, seed, policy.as_ref())?;
            for f in experiment::write_simulation(&out, &r, seed)? {
                println!("{}", f.display());
            }
            eprintln!(
                "{}: fnd {:?} hnd {:?} lnd {:?} control {}",
                kind.name(),
                r.fnd,
                r.hnd,
                r.lnd,
                r.total_control_packets
            );
        }
        Command::Compare { seeds } => {
            let seeds = parse_seeds(&seeds)?;
            let policy = experiment::load_policy(&cfg.paths.policy(&out))?;
            let c = experiment::compare(&cfg, &seeds, &policy)?;
            for f in experiment::write_comparison(&out, &cfg, &c)? {
                println!("{}", f.display());
            }
            for p in &c.report.protocols {
                eprintln!(
                    "{:<10} median fnd {:?} hnd {:?} control {}",
                    p.protocol, p.median_fnd, p.median_hnd, p.total_control_packets
                );
            }
        }
        Command::Sweep { grid, metric, period } => {
            if metric != "fnd" {
                return Err(Error::param("metric", format!("unsupported metric {metric:?}; only fnd")));
            }
            let grid = GridSpec::parse(&grid)?;
            let points = experiment::sweep(&cfg, &grid, period)?;
            for f in experiment::write_sweep(&out, &grid, &points)? {
                println!("{}", f.display());
            }
        }
        Command::TrainAgent { steps } => {
            let mut cfg = cfg;
            if let Some(s) = steps {
                cfg.dqn.total_steps = s;
            }
            let total = cfg.dqn.total_steps;
            let every = (total / 20).max(1);
            let summary = experiment::train_agent(&cfg, &out, |e| {
                if e.step % every == 0 {
                    eprintln!("step {}/{total} episode {} epsilon {:.3} loss {:?}", e.step, e.episode, e.epsilon, e.loss);
                }
            })?;
            println!("{}", summary.policy.display());
            println!("{}", summary.log.display());
        }
        Command::TrainSurrogate { dataset } => {
            let ds = match dataset {
                Some(path) => {
                    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
                    if !path.exists() {
                        return Err(Error::MissingArtifact { what: "dataset", path: path.display().to_string(), command: "train-surrogate" });
                    }
                    Some(SolutionDataset::load(dir, stem)?)
                }
                None => None,
            };
            let report = experiment::train_surrogate(&cfg, &out, ds)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Solve { state, weights, k, bruteforce } => {
            let w = match weights {
                Some(t) => parse_weights(&t)?,
                None => cfg.weights,
            };
            let s = load_state_csv(&state, cfg.network.e0, (cfg.network.bs_x, cfg.network.bs_y))?;
            let k = k.unwrap_or_else(|| leach_rlc::network::cluster_head_target(cfg.network.k_fraction, s.alive_count()));
            let sol = if bruteforce { solve_bruteforce(&s, &cfg.radio, &w, k)? } else { solve_exact(&s, &cfg.radio, &w, k)? };
            write_json(&out.join("solution.json"), &sol)?;
            println!("{}", serde_json::to_string_pretty(&sol)?);
        }
        Command::SchemaCheck { files } => {
            if files.is_empty() {
                return Err(Error::param("files", "nothing to check"));
            }
            for f in files {
                let c = experiment::schema_check(&f)?;
                println!("{}: {} ok ({} rows)", c.path.display(), c.schema, c.rows);
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParam { .. } => 2,
        Error::MissingArtifact { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("1-3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("3-1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn weight_triples() {
        assert_eq!(parse_weights("1,2,3").unwrap(), MilpWeights { alpha: 1.0, beta: 2.0, gamma: 3.0 });
        assert!(parse_weights("1,2").is_err());
        assert!(parse_weights("1,-2,3").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::MissingArtifact { what: "policy", path: "p".into(), command: "train-agent" }), 3);
        assert_eq!(exit_code(&Error::EmptyDataset), 1);
    }
}
