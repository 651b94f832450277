//! Command-line interface of `ids-bench`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::aggregate::aggregate_dir;
use super::config::ExperimentConfig;
use super::run::{run_experiment, RunOptions, MANIFEST_FILE};
use super::selftest::selftest;
use super::sweep::{parse_grid_value, sweep_to_dir};
use super::trace::format_g12;
use crate::environment::{make_eoo_instance, make_orthonormal_instance, make_random_instance, Instance, InstanceFile};
use crate::error::{invalid, Error, Result};
use crate::lowerbound::{
    brute_force_cstar, oracle_primal_dual, solve_cstar, AllocationSolution, GridSpec, SolverMethod,
    EOO_REFERENCE_CSTAR, GAME_BETA, GAME_ROUNDS, MAX_BRUTE_FORCE_ARMS, SUBGRADIENT_ITERATIONS,
};
use crate::rng::{RngStream, StreamPurpose};

#[derive(Debug, Parser)]
#[command(name = "ids-bench", version, about = "Linear bandit simulations and lower-bound solvers")]
struct Cli {
    /// Check algorithm invariants every round (slow).
    #[arg(long = "assert", global = true)]
    assert_invariants: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write traces plus a manifest.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average the traces in a result directory into aggregate.csv.
    Aggregate { dir: PathBuf },
    /// Final regret over a grid of confidence coefficients and learning rates.
    Sweep {
        config: PathBuf,
        /// Comma separated values or `auto`.
        #[arg(long, value_delimiter = ',', default_value = "auto")]
        beta: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "auto")]
        eta: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lower-bound constant of an instance.
    ///
    /// INSTANCE is `eoo[:eps[:sigma]]`, `random:d:k[:seed]`, `ortho[:gap]`
    /// or a path to an instance JSON file.
    Lb {
        instance: String,
        #[arg(long, value_enum, default_value = "all")]
        method: LbMethod,
        /// Iterations (subgradient) or rounds (game).
        #[arg(long)]
        budget: Option<usize>,
        /// Target level of the game.
        #[arg(long, default_value_t = GAME_BETA)]
        beta_n: f64,
    },
    /// Quick invariant suite; exits 0 when healthy.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LbMethod {
    Subgradient,
    Game,
    Brute,
    All,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on runtime failure, 2 on usage
/// errors.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let opts = RunOptions {
        threads: cli.threads,
        assert_invariants: cli.assert_invariants,
    };
    match cli.command {
        Command::Run { config, out: dir } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(dir) = dir {
                cfg.output_dir = dir;
            }
            let res = run_experiment(&cfg, opts)?;
            for r in res.manifest.runs.iter().filter(|r| r.status != "ok") {
                writeln!(
                    err,
                    "run {} rep {} failed: {}",
                    r.algo,
                    r.rep,
                    r.error.as_deref().unwrap_or("")
                )?;
            }
            if !res.traces.is_empty() {
                for s in super::aggregate::aggregate(&res.traces)? {
                    if let Some(p) = s.final_point() {
                        writeln!(
                            out,
                            "{} on {}: regret {} +- {} at t={} ({} reps)",
                            s.algo,
                            s.instance,
                            format_g12(p.mean),
                            format_g12(p.stderr),
                            p.t,
                            p.reps
                        )?;
                    }
                }
            }
            writeln!(out, "wrote {}", res.output_dir.join(MANIFEST_FILE).display())?;
            Ok(if res.failures() > 0 { 1 } else { 0 })
        }
        Command::Aggregate { dir } => {
            let summaries = aggregate_dir(&dir)?;
            for s in &summaries {
                if let Some(p) = s.final_point() {
                    writeln!(
                        out,
                        "{} on {}: regret {} +- {} at t={} ({} reps)",
                        s.algo,
                        s.instance,
                        format_g12(p.mean),
                        format_g12(p.stderr),
                        p.t,
                        p.reps
                    )?;
                }
            }
            Ok(0)
        }
        Command::Sweep { config, beta, eta, out: dir } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(dir) = dir {
                cfg.output_dir = dir;
            }
            let betas = beta.iter().map(|s| parse_grid_value(s)).collect::<Result<Vec<_>>>()?;
            let etas = eta.iter().map(|s| parse_grid_value(s)).collect::<Result<Vec<_>>>()?;
            let (matrices, files) = sweep_to_dir(&cfg, &betas, &etas, opts)?;
            for (m, f) in matrices.iter().zip(&files) {
                writeln!(out, "{}: {}", m.algo, f.display())?;
                write!(out, "{}", m.to_csv()?)?;
            }
            Ok(0)
        }
        Command::Lb {
            instance,
            method,
            budget,
            beta_n,
        } => {
            let inst = parse_instance(&instance)?;
            let ok = lower_bound_report(&inst, method, budget, beta_n, out, err)?;
            Ok(if ok { 0 } else { 1 })
        }
        Command::Selftest => {
            let mut failed = 0;
            for (name, outcome) in selftest() {
                match outcome {
                    Ok(()) => writeln!(out, "ok   {name}")?,
                    Err(e) => {
                        failed += 1;
                        writeln!(out, "FAIL {name}: {e}")?;
                    }
                }
            }
            Ok(if failed > 0 { 1 } else { 0 })
        }
    }
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse {what} from '{s}'")))
}

/// Parses the instance argument of `lb`.
fn parse_instance(spec: &str) -> Result<Instance> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[0] {
        "eoo" if parts.len() <= 3 => {
            let eps = parts.get(1).map_or(Ok(0.01), |s| num(s, "epsilon"))?;
            let sigma = parts.get(2).map_or(Ok(1.0), |s| num(s, "noise std"))?;
            make_eoo_instance(eps, sigma)
        }
        "ortho" if parts.len() <= 2 => {
            let gap = parts.get(1).map_or(Ok(0.5), |s| num(s, "gap"))?;
            make_orthonormal_instance(gap, 1.0)
        }
        "random" if (3..=4).contains(&parts.len()) => {
            let d: usize = num(parts[1], "dimension")?;
            let k: usize = num(parts[2], "number of actions")?;
            let seed: u64 = parts.get(3).map_or(Ok(0), |s| num(s, "seed"))?;
            let mut rng = RngStream::for_run(seed, 0, StreamPurpose::Instance);
            Ok(make_random_instance(d, k, 1.0, &mut rng)?.with_label(format!("random-d{d}-k{k}")))
        }
        _ => {
            let path = PathBuf::from(spec);
            if !path.exists() {
                return invalid(format!(
                    "unknown instance '{spec}': expected eoo[:eps[:sigma]], ortho[:gap], random:d:k[:seed] or a JSON file"
                ));
            }
            let repr: InstanceFile = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            Instance::from_file_repr(&repr)
        }
    }
}

fn solution_row(inst: &Instance, tag: &str, sol: &AllocationSolution) -> String {
    let alpha: Vec<String> = sol.alpha.iter().map(|a| format_g12(*a)).collect();
    format!(
        "{},{},{},{},{},{}",
        inst.label(),
        tag,
        format_g12(sol.cost),
        format_g12(sol.min_constraint),
        sol.iterations,
        alpha.join(";")
    )
}

/// Writes one CSV row per solver; returns whether every solver succeeded.
fn lower_bound_report(
    inst: &Instance,
    method: LbMethod,
    budget: Option<usize>,
    beta_n: f64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<bool> {
    writeln!(out, "instance,method,cstar,min_constraint,iterations,alpha")?;
    let all = method == LbMethod::All;
    let mut ok = true;
    let mut report = |tag: &str, sol: Result<AllocationSolution>, out: &mut dyn Write| -> Result<()> {
        match sol {
            Ok(sol) => writeln!(out, "{}", solution_row(inst, tag, &sol))?,
            Err(e) => {
                ok = false;
                writeln!(err, "{tag} solver failed: {e}")?;
            }
        }
        Ok(())
    };
    if all || method == LbMethod::Subgradient {
        let sol = solve_cstar(inst, SolverMethod::Subgradient, budget.unwrap_or(SUBGRADIENT_ITERATIONS));
        report("subgradient", sol, out)?;
    }
    if all || method == LbMethod::Game {
        let sol = oracle_primal_dual(inst, beta_n, budget.unwrap_or(GAME_ROUNDS)).map(|(s, _)| s);
        report("game", sol, out)?;
    }
    if all || method == LbMethod::Brute {
        if inst.num_actions() - 1 > MAX_BRUTE_FORCE_ARMS && all {
            writeln!(err, "skipping grid search: more than {MAX_BRUTE_FORCE_ARMS} suboptimal actions")?;
        } else {
            report("brute", brute_force_cstar(inst, GridSpec::default()), out)?;
        }
    }
    if inst.label().starts_with("eoo") {
        writeln!(out, "{},reference,{},,,", inst.label(), format_g12(EOO_REFERENCE_CSTAR))?;
    }
    Ok(ok)
}
