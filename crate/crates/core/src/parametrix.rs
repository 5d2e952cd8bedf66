//! Levi parametrix for `∂_t u = ½ ∂²_x u + ((1+2b(t,x))/(2x)) ∂_x u` on `x > 0`
//! with reflection at the origin.
//!
//! For a source point `(τ, ξ)` the fundamental solution is assembled as
//! `p = w + w * Φ` with the frozen kernel `w(t,x,τ,ξ) = p_{b(τ,ξ)}(t,x,τ,ξ)`,
//! where `Φ` solves the Volterra equation `Φ = K + K * Φ` for the Levi kernel
//! `K(t,x,s,y) = (b(t,x) - b(s,y)) x⁻¹ ∂_x p_{b(s,y)}(t,x,s,y)` and `*` is the
//! space-time convolution `(f * g)(t,x,s,y) = ∫_s^t dr ∫_0^∞ f(t,x,r,z) g(r,z,s,y) dz`.
//!
//! `Φ` is split as `K + Ψ` with `Ψ = Σ_{m≥1} K^{*(m+1)}`. The first term
//! `K * K` is computed from the closed-form kernels, and the remaining ones by
//! repeated application of a sparse matrix that discretizes `K *` on a per-source
//! cache grid in `(u, ζ)`, `θ - τ = S u^{2/α}`, with a sinh-graded space axis
//! centred at `ξ`. Between grid nodes `Ψ` is interpolated by tensor cubic
//! Lagrange polynomials. Time quadratures that touch the cache are aligned
//! with its cells, so the interpolant is smooth inside every quadrature panel.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientField, FieldSpec};
use crate::error::{Error, Result};
use crate::kernels::{p_bessel, p_bessel_dx_over_x, BoundParams, KernelArgs};
use crate::quad::{grading_exponent, GaussLegendre};
use crate::specfun::{gamma, ln_gamma, ln_g_alpha};

/// Artifact format tag and version.
pub const ARTIFACT_FORMAT: &str = "singular-heat/fundamental-solution";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceRule {
    /// Gauss-Legendre nodes per spatial window, split evenly over `panels`.
    pub nodes: usize,
    pub panels: usize,
    /// Windows are truncated at this many standard deviations of the Gaussian factors.
    pub cutoff_sigmas: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeRule {
    /// Nodes per half interval, and for the final partial cell of cached integrals.
    pub nodes: usize,
    /// Nodes per full cell of the cache grid.
    pub cell_nodes: usize,
    /// Grade towards the source time to absorb the `(r-s)^{α/2-1}` factor.
    pub grade_left: bool,
    /// Grade towards the target time to absorb the `(t-r)^{α/2-1}` factor.
    pub grade_right: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheGrid {
    pub time_cells: usize,
    pub space_cells: usize,
    /// Width of the fine core of the sinh-graded space axis, relative to `√S`.
    pub core_width: f64,
}

/// Discretization parameters for convolutions and the `Ψ` cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub space: SpaceRule,
    pub time: TimeRule,
    pub grid: CacheGrid,
    pub tol: f64,
}

impl Default for SpaceRule {
    fn default() -> Self {
        Self {
            nodes: 24,
            panels: 4,
            cutoff_sigmas: 7.0,
        }
    }
}

impl Default for TimeRule {
    fn default() -> Self {
        Self {
            nodes: 8,
            cell_nodes: 2,
            grade_left: true,
            grade_right: true,
        }
    }
}

impl Default for CacheGrid {
    fn default() -> Self {
        Self {
            time_cells: 16,
            space_cells: 48,
            core_width: 0.05,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            space: SpaceRule::default(),
            time: TimeRule::default(),
            grid: CacheGrid::default(),
            tol: 2e-3,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.space.nodes < 8 || self.time.nodes < 8 {
            return bad(format!("need at least 8 nodes, got space {} / time {}", self.space.nodes, self.time.nodes));
        }
        if self.space.panels == 0 || self.time.cell_nodes < 2 {
            return bad("space panels must be >= 1 and cell nodes >= 2".into());
        }
        if !(self.space.cutoff_sigmas >= 6.0) {
            return bad(format!("cutoff {} must be >= 6 sigmas", self.space.cutoff_sigmas));
        }
        if self.grid.time_cells < 4 || self.grid.space_cells < 8 || !(self.grid.core_width > 0.0) {
            return bad("cache grid needs >= 4 time cells, >= 8 space cells and a positive core width".into());
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return bad(format!("tol {} must lie in (0, 1e-2]", self.tol));
        }
        Ok(())
    }

    /// The same rule at doubled resolution.
    pub fn refined(&self) -> Self {
        let mut q = *self;
        q.space.nodes *= 2;
        q.space.panels *= 2;
        q.time.nodes *= 2;
        q.time.cell_nodes += 1;
        q.grid.time_cells *= 2;
        q.grid.space_cells *= 2;
        q
    }

    fn panel_nodes(&self) -> usize {
        self.space.nodes.div_ceil(self.space.panels)
    }
}

/// Truncation control for the series `Φ = Σ Φ_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesControl {
    pub max_terms: usize,
    pub term_tol: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            max_terms: 20,
            term_tol: 1e-8,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if self.max_terms < 1 || !(self.term_tol > 0.0) {
            return Err(Error::Config("need max_terms >= 1 and term_tol > 0".into()));
        }
        Ok(())
    }
}

/// Constants of the two-sided estimates, fitted per field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    /// Stand-in for `C(β, β₊)` in the majorant of `Φ`.
    pub cal_const: f64,
    /// Prefactor of the upper estimate.
    pub c_upper: f64,
    /// Prefactor of the lower estimate.
    pub c_lower: f64,
}

impl Default for FittedConstants {
    fn default() -> Self {
        Self {
            cal_const: 1.0,
            c_upper: 1.0,
            c_lower: 1.0,
        }
    }
}

/// Levi kernel without argument checks; `x = 0` is allowed.
#[inline]
pub(crate) fn levi(field: &CoefficientField, t: f64, x: f64, s: f64, y: f64) -> f64 {
    levi_over(field, t, x, s, y, t - s)
}

/// Levi kernel with the duration given separately, so that a duration known
/// to be positive is not recomputed as a difference of nearby times.
#[inline]
fn levi_over(field: &CoefficientField, t: f64, x: f64, s: f64, y: f64, dur: f64) -> f64 {
    let bs = field.eval(s, y);
    let d = field.eval(t, x) - bs;
    if d == 0.0 {
        0.0
    } else {
        d * p_bessel_dx_over_x(bs, dur, x, y)
    }
}

pub fn levi_kernel(field: &CoefficientField, args: KernelArgs) -> Result<f64> {
    Ok(levi(field, args.t, args.x, args.s, args.y))
}

/// `v_δ(τ) = H C Γ(α/2) (1-δ)⁻¹ (eδ)⁻¹ τ^{α/2}`.
pub fn v_delta(field: &CoefficientField, cal_const: f64, delta: f64, tau: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("duration {tau} must be > 0")));
    }
    let a = field.alpha();
    Ok(field.holder() * cal_const * gamma(a / 2.0)? / ((1.0 - delta) * std::f64::consts::E * delta) * tau.powf(a / 2.0))
}

/// `H τ^{α/2-1} Γ(α/2) p_β(t,(1-δ)x,s,(1-δ)y) g_α(v_δ(τ))`, the common shape
/// of the majorant of `Φ` and of the corrections in the two-sided estimates.
fn estimate_shape(field: &CoefficientField, bound: &BoundParams, args: KernelArgs) -> Result<f64> {
    let a = field.alpha();
    let tau = args.tau();
    let h = field.holder();
    if h == 0.0 {
        return Ok(0.0);
    }
    let v = v_delta(field, bound.cal_const, bound.delta, tau)?;
    let c = 1.0 - bound.delta;
    let kernel = p_bessel(bound.beta, tau, c * args.x, c * args.y);
    let lg = ln_g_alpha(a, v)?;
    Ok(h * tau.powf(a / 2.0 - 1.0) * gamma(a / 2.0)? * kernel * lg.exp())
}

/// Majorant `C H τ^{α/2-1} Γ(α/2) p_β g_α(v_δ(τ))` of `|Φ|`, with `C = bound.cal_const`.
pub fn phi_majorant(field: &CoefficientField, bound: &BoundParams, args: KernelArgs) -> Result<f64> {
    Ok(bound.cal_const * estimate_shape(field, bound, args)?)
}

/// Upper estimate `p_{b(s,y)} + c_upper · shape`.
pub fn upper_bound(field: &CoefficientField, bound: &BoundParams, c_upper: f64, args: KernelArgs) -> Result<f64> {
    let base = p_bessel(field.eval(args.s, args.y), args.tau(), args.x, args.y);
    Ok(base + c_upper * estimate_shape(field, bound, args)?)
}

/// Lower estimate `p_{b(s,y)} - c_lower · shape`; may be negative.
pub fn lower_bound(field: &CoefficientField, bound: &BoundParams, c_lower: f64, args: KernelArgs) -> Result<f64> {
    let base = p_bessel(field.eval(args.s, args.y), args.tau(), args.x, args.y);
    Ok(base - c_lower * estimate_shape(field, bound, args)?)
}

/// Fit the estimate constants on `points`: the smallest `cal_const` with
/// `|Φ| <= majorant`, then the smallest prefactors with `lower <= p̂ <= upper`,
/// each multiplied by `safety`.
pub fn fit_constants(fs: &FundamentalSolutionApprox, points: &[KernelArgs], delta: f64, safety: f64) -> Result<FittedConstants> {
    let field = fs.field();
    if field.holder() == 0.0 || points.is_empty() {
        return Ok(FittedConstants::default());
    }
    let beta = field.beta();
    let bound = |c: f64| BoundParams::new(delta, beta, c);
    let mut cal = 1e-6f64;
    for a in points {
        let phi = fs.phi(a.t, a.x, a.s, a.y)?.abs();
        if phi == 0.0 || phi <= phi_majorant(field, &bound(cal)?, *a)? {
            continue;
        }
        // C g_α(v(C)) grows with C, so bisect in log scale
        let (mut lo, mut hi) = (cal.ln(), cal.ln() + 1.0);
        while phi > phi_majorant(field, &bound(hi.exp())?, *a)? {
            hi += 1.0;
            if hi > 60.0 {
                return Err(Error::Divergence(format!("no calibration constant bounds Φ at {a:?}")));
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if phi > phi_majorant(field, &bound(mid.exp())?, *a)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        cal = hi.exp();
    }
    let cal = safety * cal;
    let b = bound(cal)?;
    let (mut up, mut low) = (0.0f64, 0.0f64);
    for a in points {
        let base = p_bessel(field.eval(a.s, a.y), a.tau(), a.x, a.y);
        let shape = estimate_shape(field, &b, *a)?;
        if shape > 0.0 {
            let d = (fs.evaluate(a.t, a.x, a.s, a.y)? - base) / shape;
            up = up.max(d);
            low = low.max(-d);
        }
    }
    Ok(FittedConstants {
        cal_const: cal,
        c_upper: safety * up.max(1e-3),
        c_lower: safety * low.max(1e-3),
    })
}

#[derive(Debug)]
struct Rules {
    half: Arc<GaussLegendre>,
    cell: Arc<GaussLegendre>,
    panel: Arc<GaussLegendre>,
    /// time grading exponent, `2/α`
    qt: f64,
    /// space grading exponent at the origin, tied to `β`
    qz: f64,
    cut: f64,
    panels: usize,
}

impl Rules {
    fn new(field: &CoefficientField, quad: &QuadratureSpec) -> Self {
        Self {
            half: GaussLegendre::new(quad.time.nodes),
            cell: GaussLegendre::new(quad.time.cell_nodes),
            panel: GaussLegendre::new(quad.panel_nodes()),
            qt: 2.0 / field.alpha(),
            qz: grading_exponent(2.0 * field.beta() + 1.0),
            cut: quad.space.cutoff_sigmas,
            panels: quad.space.panels,
        }
    }

    fn push_window(&self, lo_raw: f64, hi: f64, out: &mut Vec<(f64, f64)>) {
        let lo = lo_raw.max(0.0);
        if hi <= lo {
            return;
        }
        let h = (hi - lo) / self.panels as f64;
        for k in 0..self.panels {
            let a = lo + k as f64 * h;
            let b = if k + 1 == self.panels { hi } else { a + h };
            if k == 0 && lo_raw <= 0.0 {
                self.panel.push_graded_left(a, b, self.qz, out);
            } else {
                self.panel.push_mapped(a, b, out);
            }
        }
    }

    fn push_halves(&self, s: f64, t: f64, grade_left: bool, grade_right: bool, out: &mut Vec<(f64, f64)>) {
        let m = 0.5 * (s + t);
        if grade_left {
            self.half.push_graded_left(s, m, self.qt, out);
        } else {
            self.half.push_mapped(s, m, out);
        }
        if grade_right {
            self.half.push_graded_right(m, t, self.qt, out);
        } else {
            self.half.push_mapped(m, t, out);
        }
    }

    /// `∫_s^t dr ∫ outer(r,z) inner(r,z) dz` for kernels concentrated within the
    /// cutoff of `x` (width `√(t-r)`) and of `y` (width `√(r-s)`).
    fn conv_analytic(
        &self,
        time: &TimeRule,
        (t, x, s, y): (f64, f64, f64, f64),
        outer: impl Fn(f64, f64) -> f64,
        inner: impl Fn(f64, f64) -> f64,
    ) -> f64 {
        let mut tn = Vec::with_capacity(2 * self.half.len());
        self.push_halves(s, t, time.grade_left, time.grade_right, &mut tn);
        let mut zn = Vec::with_capacity(self.panels * self.panel.len());
        let mut acc = 0.0;
        for &(r, wr) in &tn {
            let (d1, d2) = (t - r, r - s);
            if d1 <= 0.0 || d2 <= 0.0 {
                continue;
            }
            let lo = (x - self.cut * d1.sqrt()).max(y - self.cut * d2.sqrt());
            let hi = (x + self.cut * d1.sqrt()).min(y + self.cut * d2.sqrt());
            zn.clear();
            self.push_window(lo, hi, &mut zn);
            let mut part = 0.0;
            for &(z, wz) in &zn {
                part += wz * outer(r, z) * inner(r, z);
            }
            acc += wr * part;
        }
        acc
    }
}

/// Per-source cache grid in `(u, ζ)`.
#[derive(Debug, Clone)]
struct Grid {
    tau: f64,
    xi: f64,
    span: f64,
    q: f64,
    nt: usize,
    nz: usize,
    w0: f64,
    eta0: f64,
    deta: f64,
    zmax: f64,
    zeta: Vec<f64>,
}

fn lagrange4(nodes: &[f64], p: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for a in 0..4 {
        for b in 0..4 {
            if a != b {
                w[a] *= (p - nodes[b]) / (nodes[a] - nodes[b]);
            }
        }
    }
    w
}

impl Grid {
    fn new(tau: f64, xi: f64, span: f64, alpha: f64, quad: &QuadratureSpec) -> Self {
        let nt = quad.grid.time_cells;
        let nz = quad.grid.space_cells;
        let sq = span.sqrt();
        let w0 = quad.grid.core_width * sq;
        let zmax = xi + quad.space.cutoff_sigmas * sq;
        let eta0 = (-xi / w0).asinh();
        let eta1 = ((zmax - xi) / w0).asinh();
        let deta = (eta1 - eta0) / nz as f64;
        let mut zeta: Vec<f64> = (0..=nz).map(|j| xi + w0 * (eta0 + j as f64 * deta).sinh()).collect();
        zeta[0] = 0.0;
        zeta[nz] = zmax;
        Self {
            tau,
            xi,
            span,
            q: 2.0 / alpha,
            nt,
            nz,
            w0,
            eta0,
            deta,
            zmax,
            zeta,
        }
    }

    fn len(&self) -> usize {
        (self.nt + 1) * (self.nz + 1)
    }

    fn sigma_of_u(&self, u: f64) -> f64 {
        self.span * u.powf(self.q)
    }

    fn dsigma_du(&self, u: f64) -> f64 {
        self.span * self.q * u.powf(self.q - 1.0)
    }

    fn u_of_sigma(&self, sigma: f64) -> f64 {
        (sigma / self.span).powf(1.0 / self.q)
    }

    fn time_weights(&self, cell: usize, u: f64) -> (usize, [f64; 4]) {
        let i0 = cell.saturating_sub(1).min(self.nt - 3);
        let h = 1.0 / self.nt as f64;
        let nodes = [i0 as f64 * h, (i0 + 1) as f64 * h, (i0 + 2) as f64 * h, (i0 + 3) as f64 * h];
        (i0, lagrange4(&nodes, u))
    }

    fn space_weights(&self, z: f64) -> Option<(usize, [f64; 4])> {
        if !(z >= 0.0 && z <= self.zmax) {
            return None;
        }
        let eta = ((z - self.xi) / self.w0).asinh();
        let j = (((eta - self.eta0) / self.deta).floor().max(0.0) as usize).min(self.nz - 1);
        let j0 = j.saturating_sub(1).min(self.nz - 3);
        Some((j0, lagrange4(&self.zeta[j0..j0 + 4], z)))
    }

    fn interp(&self, psi: &[f64], sigma: f64, z: f64) -> f64 {
        let Some((j0, lz)) = self.space_weights(z) else {
            return 0.0;
        };
        let u = self.u_of_sigma(sigma).min(1.0);
        let cell = ((u * self.nt as f64).floor() as usize).min(self.nt - 1);
        let (i0, lt) = self.time_weights(cell, u);
        let stride = self.nz + 1;
        let mut acc = 0.0;
        for (a, la) in lt.iter().enumerate() {
            let row = &psi[(i0 + a) * stride + j0..(i0 + a) * stride + j0 + 4];
            acc += la * (lz[0] * row[0] + lz[1] * row[1] + lz[2] * row[2] + lz[3] * row[3]);
        }
        acc
    }

    /// Quadrature nodes `(cell, u, σ, σ_t - σ, z, weight)` for `∫_0^{σ_t} dσ ∫ f(σ,z) g(σ,z) dz`
    /// where `f` is the kernel from `(τ+σ, z)` to `(τ+σ_t, x)` and `g` lives on the cache.
    fn visit_cached(&self, rules: &Rules, sigma_t: f64, x: f64, singular: bool, mut f: impl FnMut(usize, f64, f64, f64, f64, f64)) {
        let ut = self.u_of_sigma(sigma_t).min(1.0);
        if ut <= 0.0 {
            return;
        }
        let nt = self.nt as f64;
        let k_end = ((ut * nt).ceil() as usize).clamp(1, self.nt) - 1;
        let cut = rules.cut;
        let mut un = Vec::with_capacity(rules.half.len());
        let mut zn = Vec::with_capacity(rules.panels * rules.panel.len());
        for k in 0..=k_end {
            let ua = k as f64 / nt;
            let ub = ((k + 1) as f64 / nt).min(ut);
            if ub <= ua {
                continue;
            }
            un.clear();
            if k == k_end {
                if singular {
                    rules.half.push_graded_right(ua, ub, rules.qt, &mut un);
                } else {
                    rules.half.push_mapped(ua, ub, &mut un);
                }
            } else {
                rules.cell.push_mapped(ua, ub, &mut un);
            }
            for &(u, wu) in &un {
                let sigma = self.sigma_of_u(u);
                let d1 = sigma_t - sigma;
                if d1 <= 0.0 || sigma <= 0.0 {
                    continue;
                }
                let ws = wu * self.dsigma_du(u);
                let lo = (x - cut * d1.sqrt()).max(self.xi - cut * sigma.sqrt());
                let hi = (x + cut * d1.sqrt()).min(self.xi + cut * sigma.sqrt()).min(self.zmax);
                zn.clear();
                rules.push_window(lo, hi, &mut zn);
                for &(z, wz) in &zn {
                    f(k, u, sigma, d1, z, ws * wz);
                }
            }
        }
    }
}

/// Cached `Ψ = Φ - K` for one source point.
#[derive(Debug, Clone)]
pub struct SourceCache {
    grid: Option<Grid>,
    psi: Vec<f64>,
    terms_used: usize,
    term_norms: Vec<f64>,
}

impl SourceCache {
    pub fn tau(&self) -> Option<f64> {
        self.grid.as_ref().map(|g| g.tau)
    }

    /// Number of series terms `Φ_0, ..., Φ_M` retained.
    pub fn terms_used(&self) -> usize {
        self.terms_used
    }

    /// Sup norms of `Φ_m` on the cache grid.
    pub fn term_norms(&self) -> &[f64] {
        &self.term_norms
    }

    pub fn zeta(&self) -> &[f64] {
        self.grid.as_ref().map(|g| g.zeta.as_slice()).unwrap_or(&[])
    }

    fn psi_at(&self, sigma: f64, z: f64) -> f64 {
        match &self.grid {
            Some(g) => g.interp(&self.psi, sigma, z),
            None => 0.0,
        }
    }
}

/// Output of [`phi_series`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue {
    pub value: f64,
    pub terms_used: usize,
    pub tail_estimate: f64,
}

/// Terms entering the Volterra self-consistency check at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolterraResidual {
    pub phi: f64,
    pub kernel: f64,
    pub k_star_phi: f64,
    pub residual: f64,
    pub relative: f64,
}

/// Parametrix approximation `p̂` of the fundamental solution for one field.
///
/// Source caches are built lazily on first use and shared between threads.
pub struct FundamentalSolutionApprox {
    field: CoefficientField,
    quad: QuadratureSpec,
    ctrl: SeriesControl,
    horizon: f64,
    rules: Rules,
    constants: RwLock<FittedConstants>,
    cache: RwLock<HashMap<(u64, u64), Arc<SourceCache>>>,
}

impl std::fmt::Debug for FundamentalSolutionApprox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FundamentalSolutionApprox")
            .field("field", &self.field)
            .field("horizon", &self.horizon)
            .field("sources", &self.cache.read().map(|c| c.len()).unwrap_or(0))
            .finish()
    }
}

/// Set up the parametrix for `field` on durations `t - s <= horizon`.
pub fn assemble_fs(field: &CoefficientField, quad: QuadratureSpec, ctrl: SeriesControl, horizon: f64) -> Result<FundamentalSolutionApprox> {
    quad.validate()?;
    ctrl.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!("horizon {horizon} must be finite and > 0")));
    }
    Ok(FundamentalSolutionApprox {
        rules: Rules::new(field, &quad),
        field: field.clone(),
        quad,
        ctrl,
        horizon,
        constants: RwLock::new(FittedConstants::default()),
        cache: RwLock::new(HashMap::new()),
    })
}

/// `Φ(t,x,s,y)` by the truncated series, with a one-off cache over `[s, t]`.
pub fn phi_series(field: &CoefficientField, args: KernelArgs, quad: QuadratureSpec, ctrl: SeriesControl) -> Result<PhiValue> {
    let fs = assemble_fs(field, quad, ctrl, args.tau())?;
    let src = fs.source(args.s, args.y)?;
    Ok(PhiValue {
        value: fs.phi_with(&src, args.t, args.x, args.s, args.y),
        terms_used: src.terms_used,
        tail_estimate: fs.tail_for(&src),
    })
}

/// Generalized convolution `∫_s^t dr ∫_0^∞ f(t,x,r,z) g(r,z,s,y) dz`.
///
/// Both kernels are assumed to be concentrated within the spatial cutoff of
/// their Gaussian factors; endpoint singularities up to `(·)^{-1/2}` in time are
/// absorbed by graded rules.
pub fn convolve(
    f: impl Fn(f64, f64, f64, f64) -> f64,
    g: impl Fn(f64, f64, f64, f64) -> f64,
    args: KernelArgs,
    quad: &QuadratureSpec,
) -> Result<f64> {
    quad.validate()?;
    let rules = Rules {
        half: GaussLegendre::new(quad.time.nodes),
        cell: GaussLegendre::new(quad.time.cell_nodes),
        panel: GaussLegendre::new(quad.panel_nodes()),
        qt: 2.0,
        qz: 2.0,
        cut: quad.space.cutoff_sigmas,
        panels: quad.space.panels,
    };
    let KernelArgs { t, x, s, y } = args;
    let v = rules.conv_analytic(&quad.time, (t, x, s, y), |r, z| f(t, x, r, z), |r, z| g(r, z, s, y));
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature("non-finite convolution".into()))
    }
}

fn key(s: f64, y: f64) -> (u64, u64) {
    (s.to_bits(), y.to_bits())
}

impl FundamentalSolutionApprox {
    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn quad(&self) -> &QuadratureSpec {
        &self.quad
    }

    pub fn ctrl(&self) -> &SeriesControl {
        &self.ctrl
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn constants(&self) -> FittedConstants {
        *self.constants.read().expect("constants lock")
    }

    pub fn set_constants(&self, c: FittedConstants) {
        *self.constants.write().expect("constants lock") = c;
    }

    /// Number of cached source points.
    pub fn cached_sources(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// Largest number of series terms used by any cached source.
    pub fn terms_used(&self) -> usize {
        self.cache.read().expect("cache lock").values().map(|c| c.terms_used).max().unwrap_or(1)
    }

    /// Largest majorant of the neglected series tail over cached sources,
    /// as a multiple of `p_β`.
    pub fn tail_estimate(&self) -> f64 {
        let cache = self.cache.read().expect("cache lock");
        cache.values().map(|c| self.tail_for(c)).fold(0.0, f64::max)
    }

    fn tail_for(&self, src: &SourceCache) -> f64 {
        let h = self.field.holder();
        if src.grid.is_none() || h == 0.0 {
            return 0.0;
        }
        let a = self.field.alpha();
        let c = self.constants().cal_const;
        let Ok(v) = v_delta(&self.field, c, 0.5, self.horizon) else {
            return f64::INFINITY;
        };
        let Ok(g) = gamma(a / 2.0) else {
            return f64::INFINITY;
        };
        let lv = v.ln();
        let m0 = src.terms_used;
        let mut tail = 0.0;
        for m in m0..m0 + 200 {
            let term = (m as f64 * lv - ln_gamma((m + 1) as f64 * a / 2.0)).exp();
            tail += term;
            if term < 1e-300 || (m > m0 + 5 && term < 1e-17 * tail) {
                break;
            }
        }
        c * h * g * self.horizon.powf(a / 2.0 - 1.0) * tail
    }

    fn check_point(&self, t: f64, x: f64, s: f64, y: f64) -> Result<()> {
        KernelArgs::new(t, x, s, y)?;
        if t - s > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "duration {} exceeds the horizon {} of this approximation",
                t - s,
                self.horizon
            )));
        }
        Ok(())
    }

    /// The cache for source `(s, y)`, built on first use.
    pub fn source(&self, s: f64, y: f64) -> Result<Arc<SourceCache>> {
        if let Some(c) = self.cache.read().expect("cache lock").get(&key(s, y)) {
            return Ok(c.clone());
        }
        let built = Arc::new(self.build_source(s, y)?);
        let mut w = self.cache.write().expect("cache lock");
        Ok(w.entry(key(s, y)).or_insert(built).clone())
    }

    /// Build caches for many sources in parallel.
    pub fn prebuild(&self, sources: &[(f64, f64)]) -> Result<()> {
        sources.par_iter().try_for_each(|&(s, y)| self.source(s, y).map(|_| ()))
    }

    fn build_source(&self, tau: f64, xi: f64) -> Result<SourceCache> {
        if !(tau >= 0.0 && xi > 0.0 && xi.is_finite()) {
            return Err(Error::Domain(format!("source ({tau}, {xi}) needs tau >= 0 and xi > 0")));
        }
        if self.field.constant_value().is_some() {
            return Ok(SourceCache {
                grid: None,
                psi: Vec::new(),
                terms_used: 1,
                term_norms: vec![0.0],
            });
        }
        let field = &self.field;
        let rules = &self.rules;
        let g = Grid::new(tau, xi, self.horizon, field.alpha(), &self.quad);
        let stride = g.nz + 1;
        let rows: Vec<usize> = (stride..g.len()).collect();
        let node = |row: usize| (tau + g.sigma_of_u((row / stride) as f64 / g.nt as f64), g.zeta[row % stride]);

        let k_norm = rows
            .par_iter()
            .map(|&row| {
                let (th, ze) = node(row);
                levi(field, th, ze, tau, xi).abs()
            })
            .reduce(|| 0.0, f64::max);

        // Φ_1 = K * K from the closed-form kernels
        let mut term = vec![0.0; g.len()];
        let first: Vec<f64> = rows
            .par_iter()
            .map(|&row| {
                let (th, ze) = node(row);
                rules.conv_analytic(&self.quad.time, (th, ze, tau, xi), |r, z| levi(field, th, ze, r, z), |r, z| levi(field, r, z, tau, xi))
            })
            .collect();
        term[stride..].copy_from_slice(&first);

        // sparse discretization of Ψ ↦ K * Ψ on the grid
        let matrix: Vec<Vec<(u32, f64)>> = rows
            .par_iter()
            .map(|&row| {
                let (th, ze) = node(row);
                let mut dense = vec![0.0; g.len()];
                g.visit_cached(rules, th - tau, ze, true, |cell, u, sigma, d1, z, w| {
                    let kv = w * levi_over(field, th, ze, tau + sigma, z, d1);
                    if kv == 0.0 {
                        return;
                    }
                    let Some((j0, lz)) = g.space_weights(z) else {
                        return;
                    };
                    let (i0, lt) = g.time_weights(cell, u);
                    for (a, la) in lt.iter().enumerate() {
                        let base = (i0 + a) * stride + j0;
                        for (b, lb) in lz.iter().enumerate() {
                            dense[base + b] += kv * la * lb;
                        }
                    }
                });
                dense
                    .iter()
                    .enumerate()
                    .skip(stride)
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i as u32, *v))
                    .collect()
            })
            .collect();

        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| if m.is_nan() || x.is_nan() { f64::NAN } else { m.max(x.abs()) });
        let mut norms = vec![k_norm, sup(&term)];
        let mut psi = term.clone();
        let mut converged = norms[1] <= self.ctrl.term_tol * (k_norm + sup(&psi));
        while !converged && norms.len() < self.ctrl.max_terms {
            let next: Vec<f64> = matrix.par_iter().map(|r| r.iter().map(|&(c, v)| v * term[c as usize]).sum()).collect();
            term[stride..].copy_from_slice(&next);
            let n = sup(&term);
            norms.push(n);
            for (p, v) in psi.iter_mut().zip(&term) {
                *p += v;
            }
            if !n.is_finite() {
                break;
            }
            converged = n <= self.ctrl.term_tol * (k_norm + sup(&psi));
        }
        if !converged || norms.iter().any(|n| !n.is_finite()) {
            return Err(Error::Series(format!(
                "source ({tau}, {xi}): last term norm {:.3e} after {} terms",
                norms.last().copied().unwrap_or(f64::NAN),
                norms.len()
            )));
        }
        Ok(SourceCache {
            terms_used: norms.len(),
            term_norms: norms,
            grid: Some(g),
            psi,
        })
    }

    fn phi_with(&self, src: &SourceCache, t: f64, x: f64, s: f64, y: f64) -> f64 {
        levi(&self.field, t, x, s, y) + src.psi_at(t - s, x)
    }

    /// `Φ(t,x,s,y) = K + Ψ`.
    pub fn phi(&self, t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
        self.check_point(t, x, s, y)?;
        let src = self.source(s, y)?;
        Ok(self.phi_with(&src, t, x, s, y))
    }

    fn evaluate_with(&self, src: &SourceCache, t: f64, x: f64, s: f64, y: f64) -> f64 {
        p_bessel(self.field.eval(s, y), t - s, x, y) + self.correction_with(src, t, x, s, y)
    }

    /// `(w * Φ)(t,x,s,y)`; zero for a constant field.
    fn correction_with(&self, src: &SourceCache, t: f64, x: f64, s: f64, y: f64) -> f64 {
        let field = &self.field;
        let Some(g) = &src.grid else {
            return 0.0;
        };
        let outer = |r: f64, z: f64| p_bessel(field.eval(r, z), t - r, x, z);
        let wk = self.rules.conv_analytic(&self.quad.time, (t, x, s, y), outer, |r, z| levi(field, r, z, s, y));
        let mut wpsi = 0.0;
        g.visit_cached(&self.rules, t - s, x, false, |_, _, sigma, d1, z, wt| {
            let ps = src.psi_at(sigma, z);
            if ps != 0.0 {
                wpsi += wt * p_bessel(field.eval(s + sigma, z), d1, x, z) * ps;
            }
        });
        wk + wpsi
    }

    /// `p̂(t,x,s,y) - p_{b(s,y)}(t-s; x, y)`, the part of `p̂` carried by `Φ`.
    pub fn correction(&self, t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
        self.check_point(t, x, s, y)?;
        let src = self.source(s, y)?;
        let v = self.correction_with(&src, t, x, s, y);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("non-finite correction at ({t}, {x}, {s}, {y})")));
        }
        Ok(v)
    }

    /// `p̂(t,x,s,y)`.
    pub fn evaluate(&self, t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
        self.check_point(t, x, s, y)?;
        let src = self.source(s, y)?;
        let v = self.evaluate_with(&src, t, x, s, y);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("non-finite p̂ at ({t}, {x}, {s}, {y})")));
        }
        if v < -self.quad.tol * p_bessel(self.field.beta(), t - s, x, y).max(1.0) {
            return Err(Error::Quadrature(format!("p̂ = {v:.3e} is negative beyond tolerance at ({t}, {x}, {s}, {y})")));
        }
        Ok(v)
    }

    /// `p̂` at many points; sources are built in parallel first.
    pub fn evaluate_many(&self, points: &[(f64, f64, f64, f64)]) -> Result<Vec<f64>> {
        let mut srcs: Vec<(f64, f64)> = points.iter().map(|p| (p.2, p.3)).collect();
        srcs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        srcs.dedup();
        self.prebuild(&srcs)?;
        points.par_iter().map(|&(t, x, s, y)| self.evaluate(t, x, s, y)).collect()
    }

    /// Plug the cached `Φ` back into `Φ = K + K * Φ` at one point.
    pub fn volterra_residual(&self, t: f64, x: f64, s: f64, y: f64) -> Result<VolterraResidual> {
        self.check_point(t, x, s, y)?;
        let src = self.source(s, y)?;
        let field = &self.field;
        let k = levi(field, t, x, s, y);
        let phi = k + src.psi_at(t - s, x);
        let (kk, kpsi) = match &src.grid {
            None => (0.0, 0.0),
            Some(g) => {
                let kk = self.rules.conv_analytic(&self.quad.time, (t, x, s, y), |r, z| levi(field, t, x, r, z), |r, z| levi(field, r, z, s, y));
                let mut kpsi = 0.0;
                g.visit_cached(&self.rules, t - s, x, true, |_, _, sigma, d1, z, w| {
                    let ps = src.psi_at(sigma, z);
                    if ps != 0.0 {
                        kpsi += w * levi_over(field, t, x, s + sigma, z, d1) * ps;
                    }
                });
                (kk, kpsi)
            }
        };
        let k_star_phi = kk + kpsi;
        let residual = phi - k - k_star_phi;
        Ok(VolterraResidual {
            phi,
            kernel: k,
            k_star_phi,
            residual,
            relative: residual.abs() / (k.abs() + k_star_phi.abs() + 1e-6),
        })
    }

    /// Serializable snapshot of the field, settings, constants and all caches.
    pub fn to_artifact(&self) -> Result<FsArtifact> {
        let field = self
            .field
            .spec()
            .cloned()
            .ok_or_else(|| Error::Artifact(format!("field '{}' has no serializable description", self.field.name())))?;
        let cache = self.cache.read().expect("cache lock");
        let mut sources: Vec<SourceRecord> = cache
            .iter()
            .map(|(&(s, y), c)| SourceRecord {
                tau: f64::from_bits(s),
                xi: f64::from_bits(y),
                terms_used: c.terms_used,
                term_norms: c.term_norms.clone(),
                zeta: c.zeta().to_vec(),
                psi: c.psi.clone(),
            })
            .collect();
        sources.sort_by(|a, b| a.tau.total_cmp(&b.tau).then(a.xi.total_cmp(&b.xi)));
        Ok(FsArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            field_name: self.field.name().to_string(),
            field,
            quad: self.quad,
            ctrl: self.ctrl,
            horizon: self.horizon,
            constants: self.constants(),
            terms_used: self.terms_used(),
            tail_estimate: self.tail_estimate(),
            sources,
        })
    }

    /// Rebuild from an artifact without recomputing any cache.
    pub fn from_artifact(art: &FsArtifact) -> Result<Self> {
        if art.format != ARTIFACT_FORMAT || art.version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!("unsupported artifact {} v{}", art.format, art.version)));
        }
        let field = CoefficientField::from_spec(&art.field)?;
        let fs = assemble_fs(&field, art.quad, art.ctrl, art.horizon)?;
        fs.set_constants(art.constants);
        {
            let mut cache = fs.cache.write().expect("cache lock");
            for rec in &art.sources {
                let entry = if rec.psi.is_empty() {
                    SourceCache {
                        grid: None,
                        psi: Vec::new(),
                        terms_used: rec.terms_used,
                        term_norms: rec.term_norms.clone(),
                    }
                } else {
                    let g = Grid::new(rec.tau, rec.xi, art.horizon, field.alpha(), &art.quad);
                    if g.len() != rec.psi.len() || g.zeta.len() != rec.zeta.len() || g.zeta.iter().zip(&rec.zeta).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
                        return Err(Error::Artifact(format!("grid mismatch for source ({}, {})", rec.tau, rec.xi)));
                    }
                    SourceCache {
                        grid: Some(g),
                        psi: rec.psi.clone(),
                        terms_used: rec.terms_used,
                        term_norms: rec.term_norms.clone(),
                    }
                };
                cache.insert(key(rec.tau, rec.xi), Arc::new(entry));
            }
        }
        Ok(fs)
    }

    /// Write the artifact as JSON, atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        let art = self.to_artifact()?;
        let text = serde_json::to_string(&art).map_err(|e| Error::Artifact(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let art: FsArtifact = serde_json::from_str(&text).map_err(|e| Error::Artifact(e.to_string()))?;
        Self::from_artifact(&art)
    }
}

/// Write through a temporary file in the same directory and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub tau: f64,
    pub xi: f64,
    pub terms_used: usize,
    pub term_norms: Vec<f64>,
    pub zeta: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Persisted form of a [`FundamentalSolutionApprox`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsArtifact {
    pub format: String,
    pub version: u32,
    pub field_name: String,
    pub field: FieldSpec,
    pub quad: QuadratureSpec,
    pub ctrl: SeriesControl,
    pub horizon: f64,
    pub constants: FittedConstants,
    pub terms_used: usize,
    pub tail_estimate: f64,
    pub sources: Vec<SourceRecord>,
}
