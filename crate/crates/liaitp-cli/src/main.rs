//! `liaitp`: solve and interpolate QF_LIA problems from the command line.
//!
//! Exit status: 0 sat, 20 unsat, 1 error (including a failed check or an
//! undecided run), 2 usage.

use clap::{Parser, Subcommand, ValueEnum};
use liaitp::frontend::{parse_problem, print_formula, read_proof, show_model, write_proof};
use liaitp::interp::Engine;
use liaitp::proofs::check_refutation;
use liaitp::smt::{check_groups, solve_and_interpolate, ItpOutcome, SmtConfig, SmtResult, SmtStats};
use liaitp::verify::{bench, brute_force_check, verify_interpolant, write_bench_csv, BruteError};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

const EXIT_SAT: u8 = 0;
const EXIT_UNSAT: u8 = 20;
const EXIT_ERROR: u8 = 1;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Ceil,
    Modeq,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Ceil => Engine::Ceil,
            EngineArg::Modeq => Engine::ModEq,
        }
    }
}

#[derive(Parser)]
#[command(name = "liaitp", version, about = "Interpolating solver for quantifier-free linear integer arithmetic")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide a problem; on unsat answer its interpolation query.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "ceil")]
        engine: EngineArg,
        /// Verify every interpolant with the solver.
        #[arg(long)]
        check: bool,
        /// Also verify by enumerating the box [-N, N].
        #[arg(long, value_name = "N")]
        check_brute: Option<i64>,
        /// Write the refutation to FILE.
        #[arg(long, value_name = "FILE")]
        dump_proof: Option<PathBuf>,
        /// Answer every prefix cut of the group order from one proof.
        #[arg(long)]
        seq: bool,
        #[arg(long)]
        stats: bool,
        /// Perturbs the initial branching order.
        #[arg(long)]
        seed: Option<u64>,
        /// Print a model on sat.
        #[arg(long)]
        model: bool,
    },
    /// Check a refutation written by `solve --dump-proof`.
    CheckProof { file: PathBuf },
    /// Run the seeded random benchmark and write CSV.
    Bench {
        #[arg(long, default_value_t = 500)]
        seeds: u64,
        #[arg(long, value_enum, default_value = "ceil")]
        engine: EngineArg,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-instance limit in seconds.
        #[arg(long, default_value_t = 10.0)]
        timeout: f64,
    },
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_ERROR)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    file: PathBuf,
    engine: Engine,
    check: bool,
    check_brute: Option<i64>,
    dump_proof: Option<PathBuf>,
    seq: bool,
    show_stats: bool,
    seed: Option<u64>,
    model: bool,
) -> ExitCode {
    let text = match std::fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", file.display())),
    };
    let prob = match parse_problem(&text) {
        Ok(p) => p,
        Err(e) => return fail(format!("{}:{e}", file.display())),
    };
    let mut cfg = SmtConfig::default();
    cfg.sat.seed = seed;
    let mut stats = SmtStats::default();

    // Interpolation query: the listed groups form A. With --seq every prefix
    // of the declared order is a cut.
    let (groups, cuts) = if seq && prob.groups.len() >= 2 {
        (prob.groups.clone(), (1..prob.groups.len()).collect())
    } else {
        match prob.query_split() {
            Some((g, cut)) if cut > 0 && cut < g.len() => (g, vec![cut]),
            Some(_) => return fail("interpolation query needs non-empty A and B sides"),
            None => (prob.groups.clone(), Vec::new()),
        }
    };

    let outcome = if cuts.is_empty() {
        check_groups(&groups, None, &cfg, &mut stats).map(|r| match r {
            SmtResult::Sat { model, bools } => ItpOutcome::Sat { model, bools },
            SmtResult::Unsat(proof) => ItpOutcome::Unsat { proof, interpolants: Vec::new() },
            SmtResult::Unknown => ItpOutcome::Unknown,
        })
    } else {
        solve_and_interpolate(&groups, &cuts, engine, &cfg, &mut stats)
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    if show_stats {
        eprintln!("{stats:#?}");
    }
    match outcome {
        ItpOutcome::Unknown => {
            println!("unknown");
            ExitCode::from(EXIT_ERROR)
        }
        ItpOutcome::Sat { model: m, bools } => {
            println!("sat");
            if model {
                println!("{}", show_model(&m, &bools));
            }
            ExitCode::from(EXIT_SAT)
        }
        ItpOutcome::Unsat { proof, interpolants } => {
            println!("unsat");
            if let Some(path) = dump_proof {
                if let Err(e) = std::fs::write(&path, write_proof(&proof)) {
                    return fail(format!("{}: {e}", path.display()));
                }
            }
            for (itp, &cut) in interpolants.iter().zip(&cuts) {
                println!("{}", print_formula(itp));
                let (a, b) = groups.split_at(cut);
                if check {
                    match verify_interpolant(a, b, itp) {
                        Ok(r) if r.pass() => eprintln!("; cut {cut}: verified"),
                        Ok(r) => return fail(format!("cut {cut}: interpolant check failed: {r:?}")),
                        Err(e) => return fail(format!("cut {cut}: {e}")),
                    }
                }
                if let Some(n) = check_brute {
                    match brute_force_check(a, b, itp, n) {
                        Ok(None) => eprintln!("; cut {cut}: no counterexample in box {n}"),
                        Ok(Some(c)) => return fail(format!("cut {cut}: counterexample {c:?}")),
                        Err(BruteError::TooLarge(p)) => return fail(format!("box has {p} points")),
                        Err(e) => return fail(e),
                    }
                }
            }
            ExitCode::from(EXIT_UNSAT)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Solve { file, engine, check, check_brute, dump_proof, seq, stats, seed, model } => {
            solve(file, engine.into(), check, check_brute, dump_proof, seq, stats, seed, model)
        }
        Cmd::CheckProof { file } => {
            let text = match std::fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => return fail(format!("{}: {e}", file.display())),
            };
            let proof = match read_proof(&text) {
                Ok(p) => p,
                Err(e) => return fail(e),
            };
            match check_refutation(&proof) {
                Ok(()) => {
                    println!("ok");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(format!("proof rejected: {e}")),
            }
        }
        Cmd::Bench { seeds, engine, workers, out, timeout } => {
            let rows = bench(0..seeds, engine.into(), workers, Duration::from_secs_f64(timeout));
            let res = match out {
                Some(p) => std::fs::File::create(&p).map_err(|e| e.to_string()).and_then(|f| {
                    write_bench_csv(&rows, f).map_err(|e| e.to_string())
                }),
                None => write_bench_csv(&rows, std::io::stdout()).map_err(|e| e.to_string()),
            };
            match res {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}
