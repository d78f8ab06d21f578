//! Command-line front end. Exit codes: 0 success, 1 validation or I/O
//! failure, 2 bad arguments or configuration.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::pilots::{
    imp_all_pilot_collision_exact, imp_pairwise_collision_probability, simulate_collision_probability,
    tsp_collision_probability, CollisionEvent, PilotLayout, Scheme,
};
use crate::sim::{run_campaign, write_results, SimConfig};
use crate::validate::{run_criterion, CRITERIA};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "impsim", version, about = "Grant-free multi-pilot access link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a campaign from a config file and write CSV results.
    Simulate(SimulateArgs),
    /// Print closed-form and Monte Carlo pilot collision probabilities.
    Collision(CollisionArgs),
    /// Run the built-in acceptance checks.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH", default_value = "results.csv")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Overrides base_seed from the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CollisionArgs {
    /// Pool sizes per pilot, e.g. `24` or `8,12,24` or `8-12`.
    #[arg(long, value_name = "LIST", value_parser = parse_list)]
    n: List,
    /// Pilots per UE.
    #[arg(long, value_name = "LIST", value_parser = parse_list, default_value = "1")]
    w: List,
    /// Active UEs.
    #[arg(long, value_name = "LIST", value_parser = parse_list)]
    k: List,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Run only these checks, e.g. `1,2,9`.
    #[arg(long, value_name = "LIST", value_parser = parse_list)]
    only: Option<List>,
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

/// A parsed integer list; a newtype so clap takes it as one value.
#[derive(Debug, Clone)]
struct List(Vec<usize>);

/// Parses `a`, `a,b,c` and inclusive ranges `a-b`, freely combined.
fn parse_list(text: &str) -> Result<List, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{s}` is not a non-negative integer"))
        };
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(List(out))
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Collision(a) => collision(a),
        Command::Validate(a) => validate(a),
    }
}

fn usage_or_failure(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Config { .. } => EXIT_USAGE,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn simulate(a: SimulateArgs) -> i32 {
    let mut config = match SimConfig::from_file(&a.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return usage_or_failure(&e);
        }
    };
    if let Some(seed) = a.seed {
        config.base_seed = seed;
    }
    let rows = match run_campaign(&config, a.threads.map(|t| t as usize)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return usage_or_failure(&e);
        }
    };
    if let Err(e) = write_results(&rows, &a.out) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    let flagged = rows.iter().filter(|r| r.low_confidence()).count();
    eprintln!("wrote {} rows to {}", rows.len(), a.out.display());
    if flagged > 0 {
        eprintln!("{flagged} rows rest on fewer than 20 block errors");
    }
    EXIT_OK
}

fn collision(a: CollisionArgs) -> i32 {
    if a.n.0.is_empty() || a.k.0.is_empty() || a.trials == 0 {
        eprintln!("error: --n, --k and --trials must be non-empty and positive");
        return EXIT_USAGE;
    }
    println!(
        "{:>4} {:>2} {:>3}  {:>12} {:>12} {:>12} {:>10}",
        "N", "w", "K", "closed_form", "exact", "monte_carlo", "std_err"
    );
    for &n in &a.n.0 {
        for &w in &a.w.0 {
            let scheme = if w == 1 { Scheme::Tsp } else { Scheme::Imp };
            let layout = match PilotLayout::new(scheme, n * w, w) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            for &k in &a.k.0 {
                let (closed, exact, event) = if w == 1 {
                    let p = tsp_collision_probability(n, k);
                    (p, p, CollisionEvent::AnyTspCollision)
                } else {
                    (
                        imp_pairwise_collision_probability(n, w, k),
                        imp_all_pilot_collision_exact(n, w, k),
                        CollisionEvent::AnyPairAllPilots,
                    )
                };
                let seed = crate::sim::mix(&[a.seed, n as u64, w as u64, k as u64]);
                match simulate_collision_probability(&layout, k, event, a.trials, seed) {
                    Ok(est) => println!(
                        "{n:>4} {w:>2} {k:>3}  {closed:>12.6} {exact:>12.6} {:>12.6} {:>10.2e}",
                        est.estimate, est.std_error
                    ),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_USAGE;
                    }
                }
            }
        }
    }
    EXIT_OK
}

fn validate(a: ValidateArgs) -> i32 {
    let ids: Vec<u32> = match a.only {
        Some(List(list)) => list.into_iter().map(|i| i as u32).collect(),
        None => CRITERIA.iter().map(|(i, _)| *i).collect(),
    };
    let threads = a.threads.map(|t| t as usize);
    let mut failed = 0;
    for id in ids {
        match run_criterion(id, threads) {
            Ok(o) => {
                println!(
                    "[{}] {:>2} {}: {}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.id,
                    o.name,
                    o.detail
                );
                failed += usize::from(!o.passed);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return usage_or_failure(&e);
            }
        }
    }
    if failed > 0 {
        EXIT_FAILURE
    } else {
        EXIT_OK
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_syntax() {
        assert_eq!(parse_list("24").unwrap().0, vec![24]);
        assert_eq!(parse_list("2,4, 6").unwrap().0, vec![2, 4, 6]);
        assert_eq!(parse_list("2-4,8").unwrap().0, vec![2, 3, 4, 8]);
        assert!(parse_list("4-2").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(cli_main(["impsim"]), EXIT_USAGE);
        assert_eq!(cli_main(["impsim", "--help"]), EXIT_OK);
        assert_eq!(
            cli_main(["impsim", "simulate", "--config", "/no/such/file.cfg"]),
            EXIT_USAGE
        );
        assert_eq!(
            cli_main(["impsim", "collision", "--n", "24", "--k", "3", "--trials", "1000"]),
            EXIT_OK
        );
        assert_eq!(
            cli_main(["impsim", "collision", "--n", "24", "--w", "0", "--k", "3"]),
            EXIT_USAGE
        );
        assert_eq!(cli_main(["impsim", "validate", "--only", "1,2"]), EXIT_OK);
        assert_eq!(cli_main(["impsim", "validate", "--only", "99"]), EXIT_USAGE);
    }
}
