//! `curvlab`: scenario runner for curvature-dimension experiments on finite
//! metric measure spaces.
//!
//! Exit codes: 0 all checks passed, 1 a check failed (reports still
//! written), 2 configuration/usage errors, 3 numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use curvlab::entropy::{green_weight, mccann_check, sigma_coeff, EntropyModel};
use curvlab::error::Error;
use curvlab::gamma2::{be_check, optimal_curvature};
use curvlab::space::{gen, io as space_io};

mod config;
mod scenario;

#[derive(Parser)]
#[command(name = "curvlab", version, about = "Curvature-dimension laboratory on finite spaces")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario config (INI format; see README for the schema).
    Run { config: PathBuf },
    /// Space helpers.
    Space {
        #[command(subcommand)]
        cmd: SpaceCmd,
    },
    /// One-off scalar checks.
    Check {
        #[command(subcommand)]
        cmd: CheckCmd,
    },
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Generate a space and print (or save) its edge-list file.
    Gen {
        /// circle | path | complete | two-point | erdos
        kind: String,
        /// point count
        n: usize,
        /// edge probability (erdos)
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// output path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CheckCmd {
    /// McCann-class membership R >= -P/N on a density grid.
    Mccann {
        /// linear | power | regularized-power
        #[arg(long, default_value = "power")]
        family: String,
        /// family exponent N (power families)
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        m: Option<f64>,
        /// dimension to test against
        #[arg(long)]
        against: f64,
    },
    /// Distortion coefficient σ_κ^{(t)}(δ).
    Sigma {
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Green kernel g(t, s).
    Green {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        s: f64,
    },
    /// Bakry-Émery check on a space file (prints the optimal K as well).
    Be {
        space: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        k: f64,
        /// dimension upper bound; `inf` for none
        #[arg(long, default_value = "inf")]
        n_dim: String,
    },
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Cmd::Run { config } => {
            let ini = config::Ini::load(&config)?;
            let outcome = scenario::run_scenario(&ini)?;
            for artifact in &outcome.artifacts {
                println!("wrote {}", artifact.display());
            }
            Ok(outcome.all_passed())
        }
        Cmd::Space { cmd: SpaceCmd::Gen { kind, n, p, seed, out } } => {
            let space = match kind.as_str() {
                "circle" => gen::circle(n)?,
                "path" => gen::path(n)?,
                "complete" => gen::complete(n)?,
                "two-point" => gen::two_point(),
                "erdos" => gen::erdos(n, p, seed)?,
                other => return Err(Error::Parse(format!("unknown space kind `{other}`"))),
            };
            let text = space_io::format(&space);
            match out {
                Some(path) => {
                    scenario::atomic_write(&path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(true)
        }
        Cmd::Check { cmd } => run_check(cmd),
    }
}

fn run_check(cmd: CheckCmd) -> Result<bool, Error> {
    match cmd {
        CheckCmd::Mccann { family, n, eps, m, against } => {
            let model = match family.as_str() {
                "linear" => EntropyModel::linear(),
                "power" => EntropyModel::power(
                    n.ok_or_else(|| Error::Parse("power family needs --n".into()))?,
                )?,
                "regularized-power" => EntropyModel::regularized_power(
                    n.ok_or_else(|| Error::Parse("regularized-power needs --n".into()))?,
                    eps.unwrap_or(0.01),
                    m.unwrap_or(10.0),
                )?,
                other => return Err(Error::Parse(format!("unknown family `{other}`"))),
            };
            let grid: Vec<f64> = (1..=1000).map(|k| k as f64 * 0.01).collect();
            let rep = mccann_check(&model, against, &grid)?;
            println!(
                "[{}] mccann: margin={:.6e}",
                if rep.passed() { "PASS" } else { "FAIL" },
                rep.margin.0
            );
            Ok(rep.passed())
        }
        CheckCmd::Sigma { kappa, t, delta } => {
            let s = sigma_coeff(kappa, t, delta)?;
            match s.value {
                Some(v) => println!("sigma = {v:.17}"),
                None => println!("sigma = +inf"),
            }
            Ok(true)
        }
        CheckCmd::Green { t, s } => {
            println!("g({t}, {s}) = {:.17}", green_weight(t, s)?);
            Ok(true)
        }
        CheckCmd::Be { space, k, n_dim } => {
            let sp = space_io::load(&space)?;
            let nd = if n_dim == "inf" {
                f64::INFINITY
            } else {
                n_dim.parse::<f64>().map_err(|_| Error::Parse("bad --n-dim".into()))?
            };
            let rep = be_check(&sp, k, nd)?;
            let k_opt = optimal_curvature(&sp, nd)?;
            println!(
                "[{}] bakry-emery K={k} N={n_dim}: margin={:.6e}, optimal K={k_opt:.12}",
                if rep.passed() { "PASS" } else { "FAIL" },
                rep.margin
            );
            Ok(rep.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Parse(_) | Error::InvalidInput(_) | Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
