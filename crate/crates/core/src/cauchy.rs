//! Cauchy problems for the reflected equation, solved with an assembled
//! fundamental solution:
//!
//! * homogeneous: `u(t,x) = ∫ p̂(t,x,s,y) f(y) dy`,
//! * inhomogeneous with zero initial value: `u(t,x) = ∫_s^t dθ ∫ p̂(t,x,θ,y) g(θ,y) dy`.
//!
//! Data may grow like `exp((1-Δ) y²/2)`. Against the Gaussian decay of `p̂`
//! this is integrable only while `(1-Δ)(t-s) < 1`; the solvers insist on a
//! margin and size the truncation of the `y` integral accordingly.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::kernels::p_bessel;
use crate::parametrix::FundamentalSolutionApprox;
use crate::quad::{grading_exponent, GaussLegendre};

type DataFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("growth margin Delta = {delta} must lie in (0, 1)")))
    }
}

/// Initial value `f` with its growth margin `Δ`.
#[derive(Clone)]
pub struct InitialData {
    label: String,
    f: DataFn,
    delta: f64,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InitialData({}, Delta = {})", self.label, self.delta)
    }
}

impl InitialData {
    pub fn new(label: &str, delta: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            label: label.to_string(),
            f: Arc::new(f),
            delta,
        })
    }

    /// Expression in `x` (and `t`, evaluated at 0).
    pub fn from_expr(src: &str, delta: f64) -> Result<Self> {
        let e: Expr = expr::parse(src)?;
        Self::new(src, delta, move |x| e.eval(0.0, x))
    }

    /// Named presets: `one`, `zero`, `gaussian` (`e^{-x²}`), `bump` (`e^{-(x-2)²}`).
    pub fn preset(name: &str, delta: f64) -> Result<Self> {
        match name {
            "one" => Self::new(name, delta, |_| 1.0),
            "zero" => Self::new(name, delta, |_| 0.0),
            "gaussian" => Self::new(name, delta, |x| (-x * x).exp()),
            "bump" => Self::new(name, delta, |x| (-(x - 2.0) * (x - 2.0)).exp()),
            other => Err(Error::Config(format!("unknown initial data preset '{other}'"))),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

/// Source term `g(t,x)` with its growth margin `Δ`.
#[derive(Clone)]
pub struct SourceTerm {
    label: String,
    g: SourceFn,
    delta: f64,
    window: (f64, f64),
}

impl std::fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SourceTerm({}, Delta = {})", self.label, self.delta)
    }
}

impl SourceTerm {
    pub fn new(label: &str, delta: f64, g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self {
            label: label.to_string(),
            g: Arc::new(g),
            delta,
            window: (0.0, 1.0),
        })
    }

    pub fn from_expr(src: &str, delta: f64) -> Result<Self> {
        let e: Expr = expr::parse(src)?;
        Self::new(src, delta, move |t, x| e.eval(t, x))
    }

    /// Time window sampled by the growth check.
    pub fn with_window(mut self, t0: f64, t1: f64) -> Self {
        self.window = (t0.min(t1), t0.max(t1));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.g)(t, x)
    }
}

/// Anything whose growth in `x` is checked against `exp((1-Δ)x²/2)`.
pub trait GrowthSample {
    fn delta(&self) -> f64;
    /// Largest `|value|` at `x` over the sampled times.
    fn sup_abs(&self, x: f64) -> f64;
}

impl GrowthSample for InitialData {
    fn delta(&self) -> f64 {
        self.delta
    }

    fn sup_abs(&self, x: f64) -> f64 {
        self.eval(x).abs()
    }
}

impl GrowthSample for SourceTerm {
    fn delta(&self) -> f64 {
        self.delta
    }

    fn sup_abs(&self, x: f64) -> f64 {
        let (a, b) = self.window;
        (0..=10).map(|k| self.eval(a + (b - a) * k as f64 / 10.0, x).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub max_ratio: f64,
    pub worst_x: f64,
    pub ok: bool,
}

/// Sample `|f(x)| exp(-(1-Δ)x²/2)` on a log grid of `x ∈ [1e-3, 20]`.
pub fn check_growth(data: &impl GrowthSample) -> GrowthReport {
    let gamma = 1.0 - data.delta();
    let n = 400;
    let (l0, l1) = (1e-3f64.ln(), 20f64.ln());
    let mut worst = (0.0, 0.0);
    for k in 0..=n {
        let x = (l0 + (l1 - l0) * k as f64 / n as f64).exp();
        let v = data.sup_abs(x);
        let r = if v == 0.0 { 0.0 } else { (v.ln() - 0.5 * gamma * x * x).exp() };
        if !(r <= worst.0) {
            worst = (r, x);
        }
    }
    GrowthReport {
        max_ratio: worst.0,
        worst_x: worst.1,
        ok: worst.0 <= 1.0 + 1e-12,
    }
}

/// Growth rate `γ <= 1-Δ` such that `|f(y)| <= exp(γ y²/2)` for large `y`,
/// estimated from samples on `[10, 20]`.
fn effective_growth(data: &impl GrowthSample) -> f64 {
    let cap = 1.0 - data.delta();
    let mut g = 0.0f64;
    for k in 0..=50 {
        let x = 10.0 + 0.2 * k as f64;
        let v = data.sup_abs(x);
        if v > 1.0 {
            g = g.max(2.0 * v.ln() / (x * x));
        }
    }
    g.min(cap)
}

/// Quadrature settings for the `y` and `θ` integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub nodes_per_panel: usize,
    /// Panel width in units of the narrowest kernel width `√(t-s)`.
    pub panel_sigmas: f64,
    /// Truncation radius in kernel widths, after the growth factor is absorbed.
    pub tail_sigmas: f64,
    /// Gauss-Legendre nodes for the `θ` integral.
    pub time_nodes: usize,
    /// Required margin in `1 - (1-Δ)(t-s)`.
    pub min_margin: f64,
    /// Nodes per panel for the parametrix correction.
    pub correction_nodes: usize,
    /// Truncation radius of the correction windows, in kernel widths.
    pub correction_tail_sigmas: f64,
    /// Gauss-Legendre nodes in `θ` for the correction.
    pub correction_time_nodes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            nodes_per_panel: 8,
            panel_sigmas: 2.0,
            tail_sigmas: 8.0,
            time_nodes: 12,
            min_margin: 0.1,
            correction_nodes: 5,
            correction_tail_sigmas: 6.0,
            correction_time_nodes: 6,
        }
    }
}

/// One row of a solution table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionPoint {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Solution {
    pub points: Vec<SolutionPoint>,
}

impl Solution {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.u).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,u\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.t, p.x, p.u);
        }
        out
    }
}

/// Effective centre and width of `p(τ; x, ·) · exp(γ y²/2)`.
fn tilted(x: f64, tau: f64, gamma: f64) -> (f64, f64) {
    let m = 1.0 - gamma * tau;
    (x / m, (tau / m).sqrt())
}

fn margin_check(gamma: f64, tau: f64, opts: &SolverOptions) -> Result<()> {
    if 1.0 - gamma * tau < opts.min_margin {
        return Err(Error::Growth(format!(
            "duration {tau} too long for data growing like exp({gamma} y²/2): need (1-Delta)(t-s) <= {}",
            1.0 - opts.min_margin
        )));
    }
    Ok(())
}

fn y_rule(lo_raw: f64, hi: f64, width: f64, nodes: usize, q0: f64) -> Vec<(f64, f64)> {
    let lo = lo_raw.max(0.0);
    let mut out = Vec::new();
    if hi <= lo {
        return out;
    }
    let gl = GaussLegendre::new(nodes);
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    for k in 0..n {
        let a = lo + k as f64 * h;
        let b = if k + 1 == n { hi } else { a + h };
        if k == 0 && lo_raw <= 0.0 {
            gl.push_graded_left(a, b, q0, &mut out);
        } else {
            gl.push_mapped(a, b, &mut out);
        }
    }
    out
}

fn check_grid(s: f64, grid: &[(f64, f64)]) -> Result<()> {
    for &(t, x) in grid {
        if !(t > s && x > 0.0 && t.is_finite() && x.is_finite()) {
            return Err(Error::Domain(format!("evaluation point ({t}, {x}) needs t > s = {s} and x > 0")));
        }
    }
    Ok(())
}

/// Points of `grid` grouped by time, in first-seen order.
fn by_time(grid: &[(f64, f64)]) -> Vec<(f64, Vec<usize>)> {
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &(t, _)) in grid.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == t) {
            Some(g) => g.1.push(i),
            None => groups.push((t, vec![i])),
        }
    }
    groups
}

/// `y` rule over the union of the windows `[x - k w, c + k w]` of the
/// points `xs`, all at duration `tau`, with the correction settings.
fn correction_rule(xs: &[f64], tau: f64, gamma: f64, opts: &SolverOptions, q0: f64) -> Vec<(f64, f64)> {
    let mut windows: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| {
            let (c, w) = tilted(x, tau, gamma);
            (x.min(c) - opts.correction_tail_sigmas * w, c + opts.correction_tail_sigmas * w)
        })
        .collect();
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in windows {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let width = opts.panel_sigmas * tilted(0.0, tau, gamma).1;
    merged
        .into_iter()
        .flat_map(|(lo, hi)| y_rule(lo, hi, width, opts.correction_nodes, q0))
        .collect()
}

/// Frozen kernel `p_{b(s,y)}(t-s; x, y)`.
fn frozen(fs: &FundamentalSolutionApprox, t: f64, x: f64, s: f64, y: f64) -> f64 {
    p_bessel(fs.field().eval(s, y), t - s, x, y)
}

pub fn solve_homogeneous(fs: &FundamentalSolutionApprox, data: &InitialData, s: f64, grid: &[(f64, f64)]) -> Result<Solution> {
    solve_homogeneous_with(fs, data, s, grid, &SolverOptions::default())
}

/// `u(t,x) = ∫ p̂(t,x,s,y) f(y) dy` on `grid`.
///
/// The frozen kernel is integrated on a fine rule shared by all points. The
/// parametrix correction, which needs one cached source per node, uses a
/// coarser rule shared by the points of each time.
pub fn solve_homogeneous_with(
    fs: &FundamentalSolutionApprox,
    data: &InitialData,
    s: f64,
    grid: &[(f64, f64)],
    opts: &SolverOptions,
) -> Result<Solution> {
    check_grid(s, grid)?;
    let report = check_growth(data);
    if !report.ok {
        return Err(Error::Growth(format!(
            "|f| exp(-(1-Delta)x²/2) reaches {:.3e} at x = {:.3}",
            report.max_ratio, report.worst_x
        )));
    }
    if grid.is_empty() {
        return Ok(Solution::default());
    }
    let gamma = effective_growth(data);
    let (mut lo, mut hi, mut tau_min) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    for &(t, x) in grid {
        let tau = t - s;
        margin_check(gamma, tau, opts)?;
        let (c, w) = tilted(x, tau, gamma);
        lo = lo.min(x.min(c) - opts.tail_sigmas * w);
        hi = hi.max(c + opts.tail_sigmas * w);
        tau_min = tau_min.min(tau);
    }
    let q0 = grading_exponent(2.0 * fs.field().beta() + 1.0);
    let weighted = |rule: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        rule.into_iter()
            .map(|(y, w)| (y, w * data.eval(y)))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    };
    let fine = weighted(y_rule(lo, hi, opts.panel_sigmas * tau_min.sqrt(), opts.nodes_per_panel, q0));
    let mut values: Vec<f64> = grid
        .par_iter()
        .map(|&(t, x)| fine.iter().map(|&(y, w)| w * frozen(fs, t, x, s, y)).sum())
        .collect();

    if fs.field().constant_value().is_none() {
        let groups: Vec<(Vec<usize>, Vec<(f64, f64)>)> = by_time(grid)
            .into_iter()
            .map(|(t, idx)| {
                let xs: Vec<f64> = idx.iter().map(|&i| grid[i].1).collect();
                let rule = weighted(correction_rule(&xs, t - s, gamma, opts, q0));
                (idx, rule)
            })
            .collect();
        let sources: Vec<(f64, f64)> = groups.iter().flat_map(|g| g.1.iter().map(|&(y, _)| (s, y))).collect();
        fs.prebuild(&sources)?;
        let jobs: Vec<(usize, &[(f64, f64)])> = groups
            .iter()
            .flat_map(|(idx, rule)| idx.iter().map(move |&i| (i, rule.as_slice())))
            .collect();
        let corr: Vec<(usize, f64)> = jobs
            .par_iter()
            .map(|&(i, rule)| {
                let (t, x) = grid[i];
                let mut acc = 0.0;
                for &(y, w) in rule {
                    acc += w * fs.correction(t, x, s, y)?;
                }
                Ok((i, acc))
            })
            .collect::<Result<_>>()?;
        for (i, c) in corr {
            values[i] += c;
        }
    }
    Ok(Solution {
        points: grid.iter().zip(values).map(|(&(t, x), u)| SolutionPoint { t, x, u }).collect(),
    })
}

pub fn solve_inhomogeneous(fs: &FundamentalSolutionApprox, src: &SourceTerm, s: f64, grid: &[(f64, f64)]) -> Result<Solution> {
    solve_inhomogeneous_with(fs, src, s, grid, &SolverOptions::default())
}

/// `u(t,x) = ∫_s^t dθ ∫ p̂(t,x,θ,y) g(θ,y) dy` with zero initial value.
///
/// Split as in [`solve_homogeneous_with`]: a fine per-point rule for the
/// frozen kernel, a coarse rule shared by the points of each time for the
/// correction.
pub fn solve_inhomogeneous_with(
    fs: &FundamentalSolutionApprox,
    src: &SourceTerm,
    s: f64,
    grid: &[(f64, f64)],
    opts: &SolverOptions,
) -> Result<Solution> {
    check_grid(s, grid)?;
    let t_max = grid.iter().map(|p| p.0).fold(s, f64::max);
    let report = check_growth(&src.clone().with_window(s, t_max));
    if !report.ok {
        return Err(Error::Growth(format!(
            "|g| exp(-(1-Delta)x²/2) reaches {:.3e} at x = {:.3}",
            report.max_ratio, report.worst_x
        )));
    }
    let gamma = effective_growth(&src.clone().with_window(s, t_max));
    let q0 = grading_exponent(2.0 * fs.field().beta() + 1.0);
    for &(t, _) in grid {
        margin_check(gamma, t - s, opts)?;
    }

    let gl = GaussLegendre::new(opts.time_nodes);
    let mut values: Vec<f64> = grid
        .par_iter()
        .map(|&(t, x)| {
            let mut tn = Vec::new();
            gl.push_mapped(s, t, &mut tn);
            let mut acc = 0.0;
            for (th, wt) in tn {
                let (c, w) = tilted(x, t - th, gamma);
                let (lo, hi) = (x.min(c) - opts.tail_sigmas * w, c + opts.tail_sigmas * w);
                for (y, wy) in y_rule(lo, hi, opts.panel_sigmas * (t - th).sqrt(), opts.nodes_per_panel, q0) {
                    let g = src.eval(th, y);
                    if g != 0.0 {
                        acc += wt * wy * g * frozen(fs, t, x, th, y);
                    }
                }
            }
            acc
        })
        .collect();

    if fs.field().constant_value().is_none() {
        let gl = GaussLegendre::new(opts.correction_time_nodes);
        // per time: the points and the nodes (θ, y, weight · g)
        let mut groups: Vec<(Vec<usize>, Vec<(f64, f64, f64)>)> = Vec::new();
        for (t, idx) in by_time(grid) {
            let xs: Vec<f64> = idx.iter().map(|&i| grid[i].1).collect();
            let mut tn = Vec::new();
            gl.push_mapped(s, t, &mut tn);
            let mut rule = Vec::new();
            for (th, wt) in tn {
                for (y, wy) in correction_rule(&xs, t - th, gamma, opts, q0) {
                    let g = src.eval(th, y);
                    if g != 0.0 {
                        rule.push((th, y, wt * wy * g));
                    }
                }
            }
            groups.push((idx, rule));
        }
        let sources: Vec<(f64, f64)> = groups.iter().flat_map(|g| g.1.iter().map(|&(th, y, _)| (th, y))).collect();
        fs.prebuild(&sources)?;
        let jobs: Vec<(usize, &[(f64, f64, f64)])> = groups
            .iter()
            .flat_map(|(idx, rule)| idx.iter().map(move |&i| (i, rule.as_slice())))
            .collect();
        let corr: Vec<(usize, f64)> = jobs
            .par_iter()
            .map(|&(i, rule)| {
                let (t, x) = grid[i];
                let mut acc = 0.0;
                for &(th, y, w) in rule {
                    acc += w * fs.correction(t, x, th, y)?;
                }
                Ok((i, acc))
            })
            .collect::<Result<_>>()?;
        for (i, c) in corr {
            values[i] += c;
        }
    }
    Ok(Solution {
        points: grid.iter().zip(values).map(|(&(t, x), u)| SolutionPoint { t, x, u }).collect(),
    })
}
