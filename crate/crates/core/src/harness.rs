//! Experiment drivers behind the command line: penalty curves, duality
//! reports, solver runs, Monte Carlo checks and synthetic data, all as
//! CSV tables.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dropout::{expected_linear_loss, DesignRef, EffectivePenalty, MaskFamily, MethodSpec};
use crate::error::{Error, Result};
use crate::grammar::SpecString;
use crate::lf::{check_dual_pair, check_dual_pair_with, log_grid, DualReport, DualTolerance, ScalarFn};
use crate::penalty::{closed_form_zoo, PenaltyKind, PenaltySpec};
use crate::solvers::{
    gen_synthetic, iht, solution_metrics, standardize, DualPenalty, KSchedule, Problem, SolverConfig, SolverKind,
    Trace, VarDropPenalty,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Either a closed-form penalty or a dropout method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    Penalty(PenaltySpec),
    Method(MethodSpec),
}

impl Regularizer {
    pub fn is_separable(&self) -> bool {
        match self {
            Regularizer::Penalty(p) => p.is_separable(),
            Regularizer::Method(m) => m.is_separable(),
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::Penalty(p) => p.fmt(f),
            Regularizer::Method(m) => m.fmt(f),
        }
    }
}

/// A curve column: a regularizer, an optional multiplier (`scale=`) and the
/// label it was requested under.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveItem {
    pub label: String,
    pub reg: Regularizer,
    pub scale: f64,
}

impl CurveItem {
    /// Parses `name:key=value,...`. Methods without an explicit `lambda`
    /// take `default_lambda`.
    pub fn parse(input: &str, default_lambda: f64) -> Result<Self> {
        let mut s = SpecString::parse(input)?;
        let scale = s.take_f64("scale")?.unwrap_or(1.0);
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::parse(input, "scale must be finite and non-negative"));
        }
        let reg = if let Some(p) = PenaltySpec::from_spec_string(&mut s)? {
            Regularizer::Penalty(p)
        } else {
            let takes_lambda = !matches!(s.name.as_str(), "magprune" | "magnitudepruning");
            if takes_lambda && !s.has("lambda") {
                s.set("lambda", default_lambda.to_string());
            }
            match MethodSpec::from_spec_string(&mut s)? {
                Some(m) => Regularizer::Method(m),
                None => return Err(Error::parse(input, format!("unknown penalty or method `{}`", s.name))),
            }
        };
        s.finish()?;
        Ok(Self {
            label: input.trim().to_string(),
            reg,
            scale,
        })
    }
}

enum Evaluator {
    Closed(PenaltySpec),
    Effective(Box<EffectivePenalty>),
}

impl Evaluator {
    fn new(reg: Regularizer) -> Result<Self> {
        Ok(match reg {
            Regularizer::Penalty(p) => Evaluator::Closed(p),
            Regularizer::Method(m) => Evaluator::Effective(Box::new(m.effective_penalty_fn()?)),
        })
    }

    fn scalar(&self, w: f64) -> f64 {
        match self {
            Evaluator::Closed(p) => p.omega_scalar(w),
            Evaluator::Effective(e) => e.eval(w),
        }
    }

    /// Coordinate-wise sum for the dropout methods, evaluating each
    /// distinct magnitude once.
    fn vector(&self, w: &[f64]) -> f64 {
        match self {
            Evaluator::Closed(p) => p.omega(w),
            Evaluator::Effective(e) => {
                let mut seen: HashMap<u64, f64> = HashMap::new();
                w.iter()
                    .map(|&x| *seen.entry(x.abs().to_bits()).or_insert_with(|| e.eval(x)))
                    .sum()
            }
        }
    }
}

fn scaled(scale: f64, v: f64) -> f64 {
    // keeps 0 * inf at 0 for a zero multiplier
    if scale == 0.0 {
        0.0
    } else {
        scale * v
    }
}

/// `lo:hi:step` grid of magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 5.0,
            step: 0.01,
        }
    }
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        let inv = 1.0 / self.step;
        // integer reciprocal steps divide instead of multiply, so 0.07 prints
        // as 0.07
        let exact = (inv - inv.round()).abs() < 1e-9 * inv && inv.round() >= 1.0;
        (0..n)
            .map(|i| {
                if exact {
                    self.lo + i as f64 / inv.round()
                } else {
                    self.lo + i as f64 * self.step
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::parse(s, "expected lo:hi:step"));
        }
        let num = |p: &str| p.parse::<f64>().map_err(|_| Error::parse(s, format!("`{p}` is not a number")));
        let g = Grid {
            lo: num(parts[0])?,
            hi: num(parts[1])?,
            step: num(parts[2])?,
        };
        if !(g.lo >= 0.0 && g.hi >= g.lo && g.hi.is_finite()) {
            return Err(Error::parse(s, "need 0 <= lo <= hi < inf"));
        }
        if !(g.step > 0.0) || (g.hi - g.lo) / g.step > 1e7 {
            return Err(Error::parse(s, "step must be positive and give at most 1e7 points"));
        }
        Ok(g)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(x) if x.is_nan() => f.write_str("nan"),
            Cell::Num(x) if x.is_infinite() => f.write_str(if *x > 0.0 { "inf" } else { "-inf" }),
            Cell::Num(x) if *x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e16) => write!(f, "{x:e}"),
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Int(k) => write!(f, "{k}"),
            Cell::Text(t) => f.write_str(t),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k)
    }
}

impl From<&str> for Cell {
    fn from(t: &str) -> Self {
        Cell::Text(t.to_string())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Text(if b { "true" } else { "false" }.into())
    }
}

/// CSV table with `#` comment lines before (config echo) and after
/// (summary) the data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(String, String)>,
}

impl Table {
    pub fn new(command: &str, columns: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            columns,
            ..Default::default()
        }
    }

    pub fn echo(&mut self, key: &str, value: impl fmt::Display) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# adadrop {VERSION}")?;
        writeln!(out, "# command = {}", self.command)?;
        for (k, v) in &self.config {
            writeln!(out, "# {k} = {v}")?;
        }
        {
            let mut w = csv::WriterBuilder::new().from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::to_string))?;
            }
            w.flush()?;
        }
        for (k, v) in &self.summary {
            writeln!(out, "# {k} = {v}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn parallel_map(xs: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(16);
    if threads <= 1 || xs.len() < 64 {
        return xs.iter().map(|&x| f(x)).collect();
    }
    let chunk = xs.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = xs
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&x| f(x)).collect::<Vec<f64>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("curve worker panicked"))
            .collect()
    })
}

/// Separable penalties against `|w|`, one column per item.
///
/// HardConcrete columns are indexed by the reparameterized magnitude `|w~|`.
pub fn penalty_curve(items: &[CurveItem], grid: &Grid, lambda: f64) -> Result<Table> {
    if items.is_empty() {
        return Err(Error::InvalidParameter("penalty-curve needs at least one penalty or method".into()));
    }
    for it in items {
        if !it.reg.is_separable() {
            return Err(Error::InvalidCombination(format!(
                "`{}` is not separable and has no scalar curve",
                it.label
            )));
        }
    }
    let xs = grid.points();
    let mut columns = vec!["w".to_string()];
    columns.extend(items.iter().map(|i| i.label.clone()));
    let mut table = Table::new("penalty-curve", columns);
    table.echo("grid", grid);
    table.echo("lambda", lambda);
    for it in items {
        table.echo("item", format!("{} -> {} x{}", it.label, it.reg, it.scale));
    }
    let mut cols = Vec::with_capacity(items.len());
    for it in items {
        let ev = Evaluator::new(it.reg)?;
        cols.push(parallel_map(&xs, |w| scaled(it.scale, ev.scalar(w))));
    }
    for (i, &w) in xs.iter().enumerate() {
        let mut row = vec![Cell::Num(w)];
        row.extend(cols.iter().map(|c| Cell::Num(c[i])));
        table.rows.push(row);
    }
    Ok(table)
}

/// Penalties of the unit-norm `k`-sparse vectors `w_j = 1{j <= k} / sqrt(k)`
/// in dimension `d`, for `k = 1..=d`.
pub fn sparse_curve(items: &[CurveItem], d: usize) -> Result<Table> {
    if items.is_empty() {
        return Err(Error::InvalidParameter("sparse-curve needs at least one penalty or method".into()));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be positive".into()));
    }
    let mut columns = vec!["k".to_string()];
    columns.extend(items.iter().map(|i| i.label.clone()));
    let mut table = Table::new("sparse-curve", columns);
    table.echo("d", d);
    for it in items {
        table.echo("item", format!("{} -> {} x{}", it.label, it.reg, it.scale));
    }
    let evs = items
        .iter()
        .map(|it| match it.reg {
            Regularizer::Method(m @ MethodSpec::MagnitudePruning { .. }) => Err(Error::ScalarUnsupported(m.to_string())),
            r => Evaluator::new(r),
        })
        .collect::<Result<Vec<_>>>()?;
    for k in 1..=d {
        let v = 1.0 / (k as f64).sqrt();
        let w: Vec<f64> = (0..d).map(|j| if j < k { v } else { 0.0 }).collect();
        let mut row = vec![Cell::Int(k)];
        for (it, ev) in items.iter().zip(&evs) {
            row.push(Cell::Num(scaled(it.scale, ev.vector(&w))));
        }
        table.rows.push(row);
    }
    Ok(table)
}

/// Duality report over `specs` (the closed-form zoo when empty). `perturb`
/// adds a constant to every `f`, which must make the check fail.
pub fn duality_check(specs: &[PenaltySpec], tol: &DualTolerance, perturb: Option<f64>) -> Result<(Table, bool)> {
    let specs = if specs.is_empty() { closed_form_zoo() } else { specs.to_vec() };
    let grid = log_grid(1e-3, 10.0, 64);
    let mut table = Table::new(
        "duality-check",
        ["penalty", "points", "max_value_dev", "max_argmin_rel_dev", "pass"]
            .map(String::from)
            .to_vec(),
    );
    table.echo("w_grid", "log 1e-3..10 (64)");
    table.echo("value_tol", Cell::from(tol.value));
    table.echo("argmin_rel_tol", Cell::from(tol.argmin_rel));
    if let Some(c) = perturb {
        table.echo("perturb_f", c);
    }
    let mut all = true;
    for spec in &specs {
        let report: DualReport = match perturb {
            None => check_dual_pair(spec, &grid, tol)?,
            Some(c) => {
                let base = ScalarFn::penalty_f(*spec);
                let f = ScalarFn::new(format!("{}+{c}", base.name()), base.domain(), move |e| base.eval(e) + c);
                check_dual_pair_with(spec, &f, &grid, tol)?
            }
        };
        all &= report.pass;
        table.rows.push(vec![
            Cell::Text(spec.to_string()),
            Cell::Int(report.points),
            Cell::Num(report.max_value_dev),
            Cell::Num(report.max_argmin_rel_dev),
            report.pass.into(),
        ]);
    }
    table.note("all_pass", all);
    Ok((table, all))
}

/// A problem for `solve`: synthetic or loaded from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProblem {
    pub problem: Problem,
    pub w_true: Option<Vec<f64>>,
    /// Column scales applied to raw data (all 1 for synthetic data).
    pub scales: Vec<f64>,
    pub source: String,
}

/// `n=..,d=..,k=..,noise=..` for the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub noise: f64,
}

impl FromStr for SyntheticSpec {
    type Err = Error;
    fn from_str(input: &str) -> Result<Self> {
        let mut s = SpecString::parse(&format!("synthetic:{input}"))?;
        let spec = SyntheticSpec {
            n: s.require_usize("n")?,
            d: s.require_usize("d")?,
            k: s.require_usize("k")?,
            noise: s.take_f64("noise")?.unwrap_or(0.0),
        };
        s.finish()?;
        Ok(spec)
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={},d={},k={},noise={}", self.n, self.d, self.k, self.noise)
    }
}

pub fn synthetic_problem(spec: SyntheticSpec, seed: u64) -> Result<LoadedProblem> {
    let s = gen_synthetic(spec.n, spec.d, spec.k, spec.noise, seed)?;
    Ok(LoadedProblem {
        scales: vec![1.0; spec.d],
        problem: s.problem,
        w_true: Some(s.w_true),
        source: format!("synthetic {spec} seed={seed}"),
    })
}

/// Reads a numeric CSV (no header or one non-numeric header row, `#`
/// comments) into rows.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::parse(
                    &path.display().to_string(),
                    format!("non-numeric entry on data row {}", i + 1),
                ))
            }
        }
    }
    if let Some(w) = rows.first().map(Vec::len) {
        if let Some(bad) = rows.iter().find(|r| r.len() != w) {
            return Err(Error::DimensionMismatch { expected: w, got: bad.len() });
        }
    }
    Ok(rows)
}

/// Loads `X` and `y` CSVs and standardizes the columns of `X`.
pub fn load_problem(x_path: &Path, y_path: &Path, w_true: Option<&Path>) -> Result<LoadedProblem> {
    let xr = read_numeric_csv(x_path)?;
    let yr = read_numeric_csv(y_path)?;
    let n = xr.len();
    let d = xr.first().map(Vec::len).unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("{} holds no data", x_path.display())));
    }
    let y: Vec<f64> = yr.into_iter().flatten().collect();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let raw = DMatrix::from_row_iterator(n, d, xr.into_iter().flatten());
    let (x, scales) = standardize(&raw)?;
    let w_true = match w_true {
        None => None,
        Some(p) => {
            let w: Vec<f64> = read_numeric_csv(p)?.into_iter().flatten().collect();
            if w.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: w.len() });
            }
            // truth on the standardized scale
            Some(w.iter().zip(&scales).map(|(w, s)| w * s).collect())
        }
    };
    Ok(LoadedProblem {
        problem: Problem::new(x, DVector::from_vec(y))?,
        w_true,
        scales,
        source: format!("{} {}", x_path.display(), y_path.display()),
    })
}

/// What `solve` regularizes with.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveTarget {
    Penalty(Regularizer),
    Sparsity(KSchedule),
}

/// Runs a named solver.
pub fn run_solver(kind: SolverKind, target: &SolveTarget, problem: &Problem, config: &SolverConfig) -> Result<Trace> {
    match (kind, target) {
        (SolverKind::Iht, SolveTarget::Sparsity(k)) => iht(problem, *k, config),
        (SolverKind::Iht, SolveTarget::Penalty(Regularizer::Penalty(p))) => match p.kind() {
            PenaltyKind::HardThresh { k } => iht(problem, KSchedule::Fixed(k), config),
            _ => Err(Error::InvalidCombination("iht needs --k or a hardthresh penalty".into())),
        },
        (_, SolveTarget::Sparsity(_)) => Err(Error::InvalidCombination(format!(
            "{kind} needs a penalty, not a sparsity level"
        ))),
        (_, SolveTarget::Penalty(reg)) => {
            let pen: Box<dyn DualPenalty> = match *reg {
                Regularizer::Penalty(p) => Box::new(p),
                Regularizer::Method(MethodSpec::VariationalDropout { lambda }) => Box::new(VarDropPenalty::new(lambda)?),
                Regularizer::Method(m) => {
                    return Err(Error::InvalidCombination(format!("`{m}` is not available as a solver penalty")))
                }
            };
            kind.run(problem, pen.as_ref(), config)
        }
    }
}

/// Trace as a table: one row per logged iteration with the iterate.
pub fn trace_table(trace: &Trace, loaded: &LoadedProblem, config: &SolverConfig, timing: bool) -> Table {
    let d = loaded.problem.d();
    let mut columns: Vec<String> = ["iter", "risk", "objective", "nnz"].map(String::from).to_vec();
    if timing {
        columns.push("elapsed_s".into());
    }
    columns.extend((0..d).map(|j| format!("w{j}")));
    let mut table = Table::new("solve", columns);
    table.echo("problem", &loaded.source);
    table.echo("solver", &trace.solver);
    table.echo("penalty", &trace.penalty);
    table.echo("lambda", config.lambda);
    table.echo("step", config.step);
    table.echo("schedule", config.schedule);
    table.echo("iters", config.iters);
    table.echo("seed", config.seed);
    table.echo("mask", config.mask.map(|m| m.to_string()).unwrap_or_else(|| "none".into()));
    table.echo("log_every", config.log_every);
    table.echo("zero_tol", Cell::from(config.zero_tol));
    for r in &trace.records {
        let mut row: Vec<Cell> = vec![r.iter.into(), r.risk.into(), r.objective.into(), r.nnz.into()];
        if timing {
            row.push(r.elapsed.into());
        }
        row.extend(r.w.iter().map(|&x| Cell::Num(x)));
        table.rows.push(row);
    }
    let m = solution_metrics(trace.final_w(), loaded.w_true.as_deref(), config.zero_tol);
    table.note("final_nnz", m.nnz);
    table.note("final_nnz_fraction", Cell::from(m.nnz_fraction));
    if let Some(last) = trace.last() {
        table.note("final_objective", Cell::from(last.objective));
    }
    if let (Some(p), Some(r), Some(e), Some(x)) = (m.precision, m.recall, m.nmse, m.exact_support) {
        table.note("precision", Cell::from(p));
        table.note("recall", Cell::from(r));
        table.note("nmse", Cell::from(e));
        table.note("exact_support", x);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub n: usize,
    pub d: usize,
    pub family: MaskFamily,
    pub alpha: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n: 200,
            d: 10,
            family: MaskFamily::Gaussian,
            alpha: 0.5,
            samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyReport {
    pub closed_form: f64,
    pub mc_mean: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
}

/// Z-score beyond which the Monte Carlo check fails.
pub const VERIFY_Z_LIMIT: f64 = 4.0;

/// Monte Carlo expected masked loss against the closed form on a seeded
/// standardized problem with Gaussian `w`.
pub fn dropout_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let s = gen_synthetic(cfg.n, cfg.d, cfg.d.min(5), 0.5, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let w: Vec<f64> = (0..cfg.d).map(|_| rng.sample(StandardNormal)).collect();
    let x = s.problem.x_row_major();
    let y: Vec<f64> = s.problem.y().iter().copied().collect();
    let data = DesignRef {
        x: &x,
        y: &y,
        n: cfg.n,
        d: cfg.d,
    };
    let alpha = vec![cfg.alpha; cfg.d];
    let cf = expected_linear_loss(&data, &w, &alpha, cfg.family, None, cfg.seed)?;
    let mc = expected_linear_loss(&data, &w, &alpha, cfg.family, Some(cfg.samples), cfg.seed.wrapping_add(2))?;
    let diff = mc.mean - cf.mean;
    let z = if mc.std_error > 0.0 {
        diff / mc.std_error
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(VerifyReport {
        closed_form: cf.mean,
        mc_mean: mc.mean,
        std_error: mc.std_error,
        z,
        pass: z.abs() <= VERIFY_Z_LIMIT,
    })
}

pub fn verify_table(cfg: &VerifyConfig, r: &VerifyReport) -> Table {
    let mut t = Table::new(
        "dropout-verify",
        ["closed_form", "mc_mean", "std_error", "z", "pass"].map(String::from).to_vec(),
    );
    t.echo("n", cfg.n);
    t.echo("d", cfg.d);
    t.echo("mask", cfg.family);
    t.echo("alpha", cfg.alpha);
    t.echo("samples", cfg.samples);
    t.echo("seed", cfg.seed);
    t.echo("z_limit", VERIFY_Z_LIMIT);
    t.rows.push(vec![
        r.closed_form.into(),
        r.mc_mean.into(),
        r.std_error.into(),
        r.z.into(),
        r.pass.into(),
    ]);
    t
}

/// Writes `X.csv`, `y.csv` and `w_true.csv` for a synthetic problem into
/// `dir`.
pub fn write_synthetic(dir: &Path, spec: SyntheticSpec, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let lp = synthetic_problem(spec, seed)?;
    let p = &lp.problem;
    let mut xt = Table::new("gen-data", (0..p.d()).map(|j| format!("x{j}")).collect());
    xt.echo("spec", spec);
    xt.echo("seed", seed);
    for i in 0..p.n() {
        xt.rows.push((0..p.d()).map(|j| Cell::Num(p.x()[(i, j)])).collect());
    }
    let mut yt = Table::new("gen-data", vec!["y".into()]);
    yt.config = xt.config.clone();
    yt.rows = p.y().iter().map(|&v| vec![Cell::Num(v)]).collect();
    let mut wt = Table::new("gen-data", vec!["w_true".into()]);
    wt.config = xt.config.clone();
    wt.rows = lp.w_true.unwrap_or_default().into_iter().map(|v| vec![Cell::Num(v)]).collect();
    for (name, t) in [("X.csv", xt), ("y.csv", yt), ("w_true.csv", wt)] {
        t.write_to(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_are_clean() {
        let g: Grid = "0:5:0.01".parse().unwrap();
        let p = g.points();
        assert_eq!(p.len(), 501);
        assert_eq!(p[7], 0.07);
        assert_eq!(p[500], 5.0);
        assert!("0:5".parse::<Grid>().is_err());
        assert!("0:5:0".parse::<Grid>().is_err());
        assert!("3:1:0.1".parse::<Grid>().is_err());
    }

    #[test]
    fn items_parse_with_scale_and_default_lambda() {
        let it = CurveItem::parse("logsum:eps=2,scale=2", 1.0).unwrap();
        assert_eq!(it.scale, 2.0);
        assert_eq!(it.reg, Regularizer::Penalty(PenaltySpec::log_sum(2.0).unwrap()));
        let it = CurveItem::parse("vardrop", 3.0).unwrap();
        assert_eq!(it.reg, Regularizer::Method(MethodSpec::VariationalDropout { lambda: 3.0 }));
        assert!(CurveItem::parse("nope", 1.0).is_err());
        assert!(CurveItem::parse("l1:scale=-1", 1.0).is_err());
    }

    #[test]
    fn l1_curve_is_identity() {
        let it = CurveItem::parse("l1", 1.0).unwrap();
        let t = penalty_curve(&[it], &"0:5:0.1".parse().unwrap(), 1.0).unwrap();
        for r in &t.rows {
            assert_eq!(r[0], r[1]);
        }
    }

    #[test]
    fn curve_rejects_non_separable() {
        for s in ["hardthresh:k=2", "magprune:k=2", "lp:p=0.5"] {
            let it = CurveItem::parse(s, 1.0).unwrap();
            assert!(matches!(
                penalty_curve(&[it], &Grid::default(), 1.0),
                Err(Error::InvalidCombination(_))
            ));
        }
        assert!(penalty_curve(&[], &Grid::default(), 1.0).is_err());
    }

    #[test]
    fn sparse_curve_simple_columns() {
        let items: Vec<CurveItem> = ["l1", "l0", "hardthresh:k=8"]
            .iter()
            .map(|s| CurveItem::parse(s, 1.0).unwrap())
            .collect();
        let t = sparse_curve(&items, 32).unwrap();
        for (i, r) in t.rows.iter().enumerate() {
            let k = (i + 1) as f64;
            let Cell::Num(l1) = r[1] else { panic!() };
            assert!((l1 - k.sqrt()).abs() < 1e-12);
            assert_eq!(r[2], Cell::Num(k));
            assert_eq!(r[3], Cell::Num(if i < 8 { 0.0 } else { f64::INFINITY }));
        }
        assert!(t.to_csv_string().unwrap().contains(",inf\n"));
    }

    #[test]
    fn alpha_one_verify_is_exact() {
        for family in [MaskFamily::UnbiasedBinary, MaskFamily::Gaussian] {
            let cfg = VerifyConfig {
                family,
                alpha: 1.0,
                samples: 10,
                ..Default::default()
            };
            let r = dropout_verify(&cfg).unwrap();
            assert_eq!(r.closed_form, r.mc_mean);
            assert!(r.pass);
        }
    }
}
