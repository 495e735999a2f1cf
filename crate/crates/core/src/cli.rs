//! Command-line interface. `run` returns the process exit code: 0 on
//! success, 1 on usage or input errors, 2 when a verification fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dropout::MaskFamily;
use crate::error::{Error, Result};
use crate::harness::{
    dropout_verify, duality_check, load_problem, penalty_curve, run_solver, sparse_curve, synthetic_problem,
    trace_table, verify_table, write_synthetic, CurveItem, Grid, SolveTarget, SyntheticSpec, Table,
    VerifyConfig,
};
use crate::lf::DualTolerance;
use crate::penalty::PenaltySpec;
use crate::solvers::{Init, KSchedule, SolverConfig, SolverKind, StepSchedule};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "adadrop", version, about = "Adaptive dropout penalties, duals and sparse solvers")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Regularization strength (default lambda for dropout methods in curves)
    #[arg(long, global = true, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (directory for gen-data); stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat key=value file of flag defaults; explicit flags win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Append wall-clock timing to the output
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KMode {
    Fixed,
    Cubic,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Separable penalties as a function of |w|
    PenaltyCurve {
        #[arg(required = true)]
        items: Vec<String>,
        #[arg(long, default_value = "0:5:0.01")]
        grid: Grid,
    },
    /// Penalties of unit-norm k-sparse vectors, k = 1..d
    SparseCurve {
        #[arg(required = true)]
        items: Vec<String>,
        #[arg(long, default_value_t = 32)]
        d: usize,
    },
    /// Numerical check of the penalty / dual pairs (all closed forms by default)
    DualityCheck {
        penalties: Vec<String>,
        #[arg(long, default_value_t = 1e-6)]
        value_tol: f64,
        #[arg(long, default_value_t = 1e-4)]
        argmin_tol: f64,
        #[arg(long, hide = true)]
        perturb_f: Option<f64>,
    },
    /// Run a solver and write its trace
    Solve(SolveArgs),
    /// Monte Carlo check of the expected dropout loss against its closed form
    DropoutVerify {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value = "gaussian")]
        mask: MaskFamily,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Write a synthetic sparse regression problem as X.csv, y.csv, w_true.csv
    GenData {
        /// n=..,d=..,k=..[,noise=..]
        #[arg(long)]
        synthetic: SyntheticSpec,
    },
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// n=..,d=..,k=..[,noise=..]
    #[arg(long, conflicts_with_all = ["x", "y"])]
    synthetic: Option<SyntheticSpec>,
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long)]
    w_true: Option<PathBuf>,
    #[arg(long)]
    solver: SolverKind,
    /// Penalty or vardrop method
    #[arg(long)]
    penalty: Option<String>,
    /// Sparsity level for iht
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "fixed")]
    k_schedule: KMode,
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value = "constant")]
    step_schedule: StepSchedule,
    #[arg(long)]
    mask: Option<MaskFamily>,
    #[arg(long, default_value_t = 1)]
    log_every: usize,
    /// Gaussian initialization scale (zeros when absent)
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    zero_tol: f64,
}

const SUBCOMMANDS: [&str; 6] = [
    "penalty-curve",
    "sparse-curve",
    "duality-check",
    "solve",
    "dropout-verify",
    "gen-data",
];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Turns `key = value` lines into flags placed right after the subcommand,
/// so that flags given on the command line override them.
fn expand_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::parse(&path.display().to_string(), format!("line {}: expected key=value", i + 1))
        })?;
        let key = format!("--{}", k.trim().replace('_', "-"));
        match v.trim() {
            "true" => flags.push(OsString::from(key)),
            "false" => {}
            v => {
                flags.push(OsString::from(key));
                flags.push(OsString::from(v));
            }
        }
    }
    let pos = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|p| p + 1)
        .unwrap_or(args.len());
    args.splice(pos..pos, flags);
    Ok(args)
}

fn parse_items(items: &[String], lambda: f64) -> Result<Vec<CurveItem>> {
    items.iter().map(|s| CurveItem::parse(s, lambda)).collect()
}

fn emit(table: &mut Table, out: Option<&Path>, started: Option<Instant>) -> Result<()> {
    if let Some(t0) = started {
        table.note("elapsed_s", t0.elapsed().as_secs_f64());
    }
    match out {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let mut w = std::io::BufWriter::new(f);
            table.write_to(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write_to(&mut lock)?;
        }
    }
    Ok(())
}

fn solve_target(a: &SolveArgs, lambda: f64) -> Result<SolveTarget> {
    match (&a.penalty, a.k) {
        (Some(_), Some(_)) => Err(Error::InvalidCombination("give either --penalty or --k, not both".into())),
        (None, Some(k)) => Ok(SolveTarget::Sparsity(match a.k_schedule {
            KMode::Fixed => KSchedule::Fixed(k),
            KMode::Cubic => KSchedule::Cubic { k_final: k },
        })),
        (Some(p), None) => {
            let item = CurveItem::parse(p, lambda)?;
            if item.scale != 1.0 {
                return Err(Error::InvalidCombination("scale= is only meaningful for curves".into()));
            }
            Ok(SolveTarget::Penalty(item.reg))
        }
        (None, None) => Err(Error::InvalidCombination(format!("{} needs --penalty or --k", a.solver))),
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let g = &cli.global;
    let started = g.timing.then(Instant::now);
    let out = g.out.as_deref();
    match &cli.command {
        Command::PenaltyCurve { items, grid } => {
            let items = parse_items(items, g.lambda)?;
            let mut t = penalty_curve(&items, grid, g.lambda)?;
            emit(&mut t, out, started)?;
            Ok(EXIT_OK)
        }
        Command::SparseCurve { items, d } => {
            let items = parse_items(items, g.lambda)?;
            let mut t = sparse_curve(&items, *d)?;
            emit(&mut t, out, started)?;
            Ok(EXIT_OK)
        }
        Command::DualityCheck {
            penalties,
            value_tol,
            argmin_tol,
            perturb_f,
        } => {
            let specs = penalties
                .iter()
                .map(|s| s.parse::<PenaltySpec>())
                .collect::<Result<Vec<_>>>()?;
            let tol = DualTolerance {
                value: *value_tol,
                argmin_rel: *argmin_tol,
            };
            let (mut t, pass) = duality_check(&specs, &tol, *perturb_f)?;
            emit(&mut t, out, started)?;
            Ok(if pass { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::Solve(a) => {
            let loaded = match (&a.synthetic, &a.x, &a.y) {
                (Some(s), _, _) => synthetic_problem(*s, g.seed)?,
                (None, Some(x), Some(y)) => load_problem(x, y, a.w_true.as_deref())?,
                _ => return Err(Error::InvalidCombination("solve needs --synthetic or --x/--y".into())),
            };
            let target = solve_target(a, g.lambda)?;
            let config = SolverConfig {
                lambda: g.lambda,
                step: a.step,
                schedule: a.step_schedule,
                iters: a.iters,
                seed: g.seed,
                mask: a.mask,
                log_every: a.log_every,
                init: a.init_scale.map(|scale| Init::Gaussian { scale }).unwrap_or(Init::Zeros),
                zero_tol: a.zero_tol,
            };
            let trace = run_solver(a.solver, &target, &loaded.problem, &config)?;
            let mut t = trace_table(&trace, &loaded, &config, g.timing);
            for (k, v) in &t.summary {
                eprintln!("{k} = {v}");
            }
            emit(&mut t, out, started)?;
            Ok(EXIT_OK)
        }
        Command::DropoutVerify {
            n,
            d,
            mask,
            alpha,
            samples,
        } => {
            let cfg = VerifyConfig {
                n: *n,
                d: *d,
                family: *mask,
                alpha: *alpha,
                samples: *samples,
                seed: g.seed,
            };
            let r = dropout_verify(&cfg)?;
            let mut t = verify_table(&cfg, &r);
            emit(&mut t, out, started)?;
            Ok(if r.pass { EXIT_OK } else { EXIT_VERIFY })
        }
        Command::GenData { synthetic } => {
            let dir = out.ok_or_else(|| Error::InvalidParameter("gen-data needs --out <dir>".into()))?;
            write_synthetic(dir, *synthetic, g.seed)?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn config_flags_go_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        std::fs::write(&p, "# defaults\nlambda = 2\ntiming = true\nseed=7\n").unwrap();
        let args: Vec<OsString> = ["adadrop", "--config", p.to_str().unwrap(), "solve", "--seed", "3"]
            .iter()
            .map(OsString::from)
            .collect();
        let out = expand_config(args).unwrap();
        let out: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(&out[3..], ["solve", "--lambda", "2", "--timing", "--seed", "7", "--seed", "3"]);
    }
}
