//! Named verification checks with machine-readable reports.
//!
//! Every check returns a [`CheckReport`]; `pass` holds exactly when every
//! residual is at most its tolerance. Tolerances and sample sizes come from a
//! [`ToleranceTable`].

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cauchy::{solve_homogeneous, solve_inhomogeneous, InitialData, SourceTerm};
use crate::coeff::CoefficientField;
use crate::config::{RunConfig, ToleranceTable};
use crate::error::{Error, Result};
use crate::kernels::{bessel_kernel, gauss_kernel, p_bessel, reflected_bm_kernel, BoundParams, KernelArgs};
use crate::montecarlo::{
    ks_one_sample, ks_two_sample, modulus_stat, reflected_bm_cdf, running_max_stat, increment_stat, sample_bm_norm,
    simulate, subgaussian_norm, DriftForm, SimConfig, TabulatedCdf,
};
use crate::parametrix::{
    assemble_fs, fit_constants, levi_kernel, lower_bound, phi_majorant, phi_series, upper_bound, FundamentalSolutionApprox,
    QuadratureSpec, SeriesControl,
};
use crate::quad::{grading_exponent, integrate_adaptive, integrate_from_origin, GaussLegendre};
use crate::specfun::{bessel_i_scaled, ln_g_alpha, mittag_leffler, BesselOrder, MittagLefflerParams};

/// Battery names in report order.
pub const BATTERY: &[&str] = &[
    "constant-exactness",
    "normalization",
    "bessel-identity",
    "chapman-kolmogorov",
    "reflected-bm",
    "mittag-leffler",
    "pde-residual",
    "reflection",
    "volterra",
    "bound-sandwich",
    "monte-carlo",
    "path-statistics",
    "cauchy",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub label: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Residual {
    pub fn ok(&self) -> bool {
        self.value <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_name: String,
    /// SHA-256 of the check name and its canonical inputs.
    pub inputs_digest: String,
    pub residuals: Vec<Residual>,
    pub pass: bool,
    pub runtime_s: f64,
}

impl CheckReport {
    /// Residual table with columns `label,value,tolerance,pass`.
    pub fn residual_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["label", "value", "tolerance", "pass"]).map_err(io)?;
        for r in &self.residuals {
            w.write_record([r.label.clone(), r.value.to_string(), r.tolerance.to_string(), r.ok().to_string()])
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn worst(&self) -> Option<&Residual> {
        self.residuals
            .iter()
            .max_by(|a, b| (a.value / a.tolerance).total_cmp(&(b.value / b.tolerance)))
    }
}

struct Recorder {
    name: String,
    digest: String,
    residuals: Vec<Residual>,
    start: Instant,
}

impl Recorder {
    fn new(name: &str, inputs: String) -> Self {
        let mut h = Sha256::new();
        h.update(name.as_bytes());
        h.update(b"\n");
        h.update(inputs.as_bytes());
        let digest = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Self {
            name: name.into(),
            digest,
            residuals: Vec::new(),
            start: Instant::now(),
        }
    }

    fn push(&mut self, label: impl Into<String>, value: f64, tolerance: f64) {
        self.residuals.push(Residual {
            label: label.into(),
            value,
            tolerance,
        });
    }

    fn finish(self) -> CheckReport {
        let pass = !self.residuals.is_empty() && self.residuals.iter().all(Residual::ok);
        CheckReport {
            check_name: self.name,
            inputs_digest: self.digest,
            residuals: self.residuals,
            pass,
            runtime_s: self.start.elapsed().as_secs_f64(),
        }
    }
}

type KernelFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

/// A transition density under test.
#[derive(Clone)]
pub enum Density {
    /// Closed-form kernel `p_a`.
    Bessel(f64),
    /// Parametrix approximation.
    Fs(Arc<FundamentalSolutionApprox>),
    /// Any other kernel, paired with the field whose operator it should solve.
    Custom {
        label: String,
        field: CoefficientField,
        f: KernelFn,
    },
}

impl std::fmt::Debug for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Density {
    /// The closed form for constant fields, the parametrix otherwise.
    pub fn for_fs(fs: Arc<FundamentalSolutionApprox>) -> Self {
        match fs.field().constant_value() {
            Some(a) => Density::Bessel(a),
            None => Density::Fs(fs),
        }
    }

    pub fn custom(label: &str, field: CoefficientField, f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Density::Custom {
            label: label.into(),
            field,
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Density::Bessel(a) => format!("bessel({a})"),
            Density::Fs(fs) => format!("fs({})", fs.field().name()),
            Density::Custom { label, .. } => label.clone(),
        }
    }

    pub fn field(&self) -> CoefficientField {
        match self {
            Density::Bessel(a) => CoefficientField::constant(*a).expect("order checked on construction"),
            Density::Fs(fs) => fs.field().clone(),
            Density::Custom { field, .. } => field.clone(),
        }
    }

    pub fn eval(&self, t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
        match self {
            Density::Bessel(a) => bessel_kernel(BesselOrder::new(*a)?, KernelArgs::new(t, x, s, y)?),
            Density::Fs(fs) => fs.evaluate(t, x, s, y),
            Density::Custom { f, .. } => Ok(f(t, x, s, y)),
        }
    }

    fn is_fs(&self) -> bool {
        matches!(self, Density::Fs(_))
    }

    /// Exponent `e` of the `y^e` behaviour at the origin.
    fn origin_exponent(&self) -> f64 {
        2.0 * self.field().beta() + 1.0
    }

    fn prebuild(&self, sources: &[(f64, f64)]) -> Result<()> {
        match self {
            Density::Fs(fs) => fs.prebuild(sources),
            _ => Ok(()),
        }
    }
}

/// Composite Gauss-Legendre rule on `[lo, hi]` with panels of about `width`;
/// the first panel is graded when `lo = 0`.
fn panel_rule(lo: f64, hi: f64, width: f64, nodes: usize, e: f64) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(nodes);
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    let mut out = Vec::with_capacity(n * nodes);
    for k in 0..n {
        let (a, b) = (lo + k as f64 * h, lo + (k + 1) as f64 * h);
        if k == 0 && lo == 0.0 {
            gl.push_graded_left(a, b, grading_exponent(e), &mut out);
        } else {
            gl.push_mapped(a, b, &mut out);
        }
    }
    out
}

/// `∫₀^∞ f(y) dy` for a density-like `f` peaked near `x` with width `√tau`.
fn adaptive_mass(f: impl Fn(f64) -> f64, e: f64, x: f64, tau: f64) -> Result<f64> {
    let split = 0.5 * x.min(tau.sqrt());
    let hi = x + 14.0 * tau.sqrt();
    let head = integrate_from_origin(&f, e, split, 1e-15, 1e-13)?;
    let body = integrate_adaptive(&f, split, hi, 1e-15, 1e-13, 4000)?;
    Ok(head.value + body.value)
}

/// `∫₀^∞ p(t,x,s,y) dy`.
pub fn density_mass(d: &Density, t: f64, x: f64, s: f64) -> Result<f64> {
    let tau = t - s;
    if d.is_fs() {
        let rule = panel_rule(0.0, x + 8.0 * tau.sqrt(), tau.sqrt(), 6, d.origin_exponent());
        d.prebuild(&rule.iter().map(|&(y, _)| (s, y)).collect::<Vec<_>>())?;
        let mut m = 0.0;
        for &(y, w) in &rule {
            m += w * d.eval(t, x, s, y)?;
        }
        return Ok(m);
    }
    let err = std::cell::RefCell::new(None);
    let v = adaptive_mass(
        |y| match d.eval(t, x, s, y) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        d.origin_exponent(),
        x,
        tau,
    )?;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Tabulated CDF in `y` of `p(t,x,s,·)` at panel ends.
pub fn density_cdf(d: &Density, t: f64, x: f64, s: f64, width: f64) -> Result<TabulatedCdf> {
    let tau = t - s;
    let hi = x + 8.0 * tau.sqrt();
    let n = (hi / width).ceil() as usize;
    let h = hi / n as f64;
    let gl = GaussLegendre::new(4);
    let mut panels = Vec::with_capacity(n);
    for k in 0..n {
        let mut rule = Vec::new();
        let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
        if k == 0 {
            gl.push_graded_left(a, b, grading_exponent(d.origin_exponent()), &mut rule);
        } else {
            gl.push_mapped(a, b, &mut rule);
        }
        panels.push((b, rule));
    }
    let sources: Vec<(f64, f64)> = panels.iter().flat_map(|(_, r)| r.iter().map(|&(y, _)| (s, y))).collect();
    d.prebuild(&sources)?;
    let mut nodes = vec![(0.0, 0.0)];
    let mut acc = 0.0;
    for (end, rule) in &panels {
        for &(y, w) in rule {
            acc += w * d.eval(t, x, s, y)?;
        }
        nodes.push((*end, acc));
    }
    Ok(TabulatedCdf { nodes })
}

/// Uniform random arguments with `tau ∈ [0.05, 2]`, `x, y ∈ [0.05, 4]`.
fn random_args(rng: &mut ChaCha8Rng, n: usize) -> Vec<KernelArgs> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(0.0..1.0);
            let tau = rng.random_range(0.05..2.0);
            KernelArgs::new(s + tau, rng.random_range(0.05..4.0), s, rng.random_range(0.05..4.0)).expect("valid")
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Constant fields: zero Levi kernel, a one-term series and an exact `p̂`.
pub fn check_constant_exactness(a_values: &[f64], n_args: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("constant-exactness", format!("{a_values:?} {n_args} {seed} {tol:e}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &a in a_values {
        let field = CoefficientField::constant(a)?;
        let args = random_args(&mut rng, n_args);
        let fs = assemble_fs(&field, QuadratureSpec::default(), SeriesControl::default(), 2.0)?;
        let (mut k_max, mut phi_bad, mut worst) = (0.0f64, 0.0f64, 0.0f64);
        for g in &args {
            k_max = k_max.max(levi_kernel(&field, *g)?.abs());
            let phi = phi_series(&field, *g, QuadratureSpec::default(), SeriesControl::default())?;
            phi_bad = phi_bad.max(phi.value.abs() + (phi.terms_used as f64 - 1.0).abs());
            let exact = bessel_kernel(BesselOrder::new(a)?, *g)?;
            worst = worst.max(rel(fs.evaluate(g.t, g.x, g.s, g.y)?, exact));
        }
        rec.push(format!("a={a}: max |K|"), k_max, 0.0);
        rec.push(format!("a={a}: |Φ| + |terms - 1|"), phi_bad, 0.0);
        rec.push(format!("a={a}: p̂ vs p_a relative"), worst, tol);
    }
    Ok(rec.finish())
}

/// `|∫ p dy - 1|` over `(t - s, x)` pairs with `s = 0`.
pub fn check_normalization(d: &Density, grid: &[(f64, f64)], tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("normalization", format!("{} {grid:?} {tol:e}", d.label()));
    for &(tau, x) in grid {
        let m = density_mass(d, tau, x, 0.0)?;
        rec.push(format!("tau={tau} x={x}"), (m - 1.0).abs(), tol);
    }
    Ok(rec.finish())
}

/// `∫₀^∞ z^{a+1} e^{-wz²/2} I_a(z) dz = w^{-a-1} e^{1/(2w)}`.
pub fn bessel_identity_lhs(a: f64, w: f64) -> Result<f64> {
    let ord = BesselOrder::new(a)?;
    let f = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        let ln = (a + 1.0) * z.ln() - 0.5 * w * z * z + z;
        ln.exp() * bessel_i_scaled(ord, z).unwrap_or(f64::NAN)
    };
    let peak = 1.0 / w;
    let hi = peak + 40.0 / w.sqrt();
    let split = 0.5 * peak.min(1.0);
    let head = integrate_from_origin(f, 2.0 * a + 1.0, split, 1e-16, 1e-14)?;
    let body = integrate_adaptive(f, split, hi, 1e-16, 1e-14, 4000)?;
    Ok(head.value + body.value)
}

pub fn check_bessel_identity(a_grid: &[f64], w_grid: &[f64], tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("bessel-identity", format!("{a_grid:?} {w_grid:?} {tol:e}"));
    for &a in a_grid {
        for &w in w_grid {
            let rhs = w.powf(-a - 1.0) * (0.5 / w).exp();
            rec.push(format!("a={a} w={w}"), rel(bessel_identity_lhs(a, w)?, rhs), tol);
        }
    }
    // as a -> 0- the right side tends to e^{1/2} at w = 1
    let near = bessel_identity_lhs(-1e-9, 1.0)?;
    rec.push("a->0- w=1 vs e^(1/2)", rel(near, 0.5f64.exp()), tol);
    Ok(rec.finish())
}

/// One Chapman-Kolmogorov configuration `(t, v, s, x, y)`, `t > v > s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CkConfig {
    pub t: f64,
    pub v: f64,
    pub s: f64,
    pub x: f64,
    pub y: f64,
}

pub fn random_ck_configs(n: usize, seed: u64) -> Vec<CkConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = rng.random_range(0.0..0.5);
            let v = s + rng.random_range(0.2..0.9);
            let t = v + rng.random_range(0.2..0.9);
            CkConfig {
                t,
                v,
                s,
                x: rng.random_range(0.2..3.0),
                y: rng.random_range(0.2..3.0),
            }
        })
        .collect()
}

/// `∫ p(t,x,v,z) p(v,z,s,y) dz` on a composite rule, `per_panel` nodes on
/// panels of width `√min(t-v, v-s)`, restricted to where both factors live.
fn ck_composite(d: &Density, c: CkConfig, per_panel: usize) -> Result<f64> {
    let (s1, s2) = ((c.t - c.v).sqrt(), (c.v - c.s).sqrt());
    let reach = 7.0;
    let lo = (c.x - reach * s1).max(c.y - reach * s2).max(0.0);
    let hi = (c.x + reach * s1).min(c.y + reach * s2);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let rule = panel_rule(lo, hi, s1.min(s2), per_panel, d.origin_exponent());
    let mut src: Vec<(f64, f64)> = rule.iter().map(|&(z, _)| (c.v, z)).collect();
    src.push((c.s, c.y));
    d.prebuild(&src)?;
    let mut acc = 0.0;
    for &(z, w) in &rule {
        acc += w * d.eval(c.t, c.x, c.v, z)? * d.eval(c.v, z, c.s, c.y)?;
    }
    Ok(acc)
}

/// Closed-form kernels: adaptive quadrature of the composition.
fn ck_adaptive(d: &Density, c: CkConfig) -> Result<f64> {
    let f = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        let a = d.eval(c.t, c.x, c.v, z).unwrap_or(f64::NAN);
        let b = d.eval(c.v, z, c.s, c.y).unwrap_or(f64::NAN);
        a * b
    };
    let wide = (c.t - c.s).sqrt();
    let split = 0.5 * c.x.min(c.y).min(wide);
    let hi = c.x.max(c.y) + 14.0 * wide;
    let head = integrate_from_origin(f, d.origin_exponent(), split, 1e-16, 1e-12)?;
    let body = integrate_adaptive(f, split, hi, 1e-16, 1e-12, 4000)?;
    Ok(head.value + body.value)
}

/// Left side of the rescaled composition identity for the Bessel kernel.
pub fn kol_chap2_lhs(a: f64, t: f64, s: f64, x: f64, y: f64) -> Result<f64> {
    let ord = BesselOrder::new(a)?;
    let f = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        let g = (-(x - z).powi(2) / (2.0 * t) - (z - y).powi(2) / (2.0 * s)).exp();
        let i1 = bessel_i_scaled(ord, x * z / t).unwrap_or(f64::NAN);
        let i2 = bessel_i_scaled(ord, z * y / s).unwrap_or(f64::NAN);
        z * g * i1 * i2 / (t * s)
    };
    let wide = (t + s).sqrt();
    let split = 0.5 * x.min(y).min(wide);
    let hi = x.max(y) + 14.0 * wide;
    let head = integrate_from_origin(f, 2.0 * a + 1.0, split, 1e-16, 1e-13)?;
    let body = integrate_adaptive(f, split, hi, 1e-16, 1e-13, 4000)?;
    Ok(head.value + body.value)
}

pub fn kol_chap2_rhs(a: f64, t: f64, s: f64, x: f64, y: f64) -> Result<f64> {
    let u = t + s;
    Ok((-(x - y).powi(2) / (2.0 * u)).exp() * bessel_i_scaled(BesselOrder::new(a)?, x * y / u)? / u)
}

/// Composition residuals; closed forms use adaptive quadrature, the
/// parametrix is compared with itself at doubled resolution.
pub fn check_chapman_kolmogorov(d: &Density, configs: &[CkConfig], tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("chapman-kolmogorov", format!("{} {configs:?} {tol:e}", d.label()));
    for (i, c) in configs.iter().enumerate() {
        let direct = d.eval(c.t, c.x, c.s, c.y)?;
        if d.is_fs() {
            let coarse = ck_composite(d, *c, 4)?;
            let fine = ck_composite(d, *c, 8)?;
            rec.push(format!("#{i} relative residual"), rel(fine, direct), tol);
            rec.push(format!("#{i} resolution change"), rel(coarse, fine), tol);
        } else {
            rec.push(format!("#{i} relative residual"), rel(ck_adaptive(d, *c)?, direct), tol);
        }
    }
    Ok(rec.finish())
}

/// Composite check for one field: composition residuals, the rescaled
/// Bessel identity and the short-time limit acting on smooth data.
pub fn check_chapman_kolmogorov_battery(d: &Density, seed: u64, tol: &ToleranceTable) -> Result<CheckReport> {
    let (configs, ck_tol) = if d.is_fs() {
        (random_ck_configs(3, seed), tol.get("ck_fs")?)
    } else {
        (random_ck_configs(5, seed), tol.get("ck_const")?)
    };
    let mut rep = check_chapman_kolmogorov(d, &configs, ck_tol)?;
    let a = d.field().constant_value().unwrap_or(-0.5);
    let kol = rel(kol_chap2_lhs(a, 1.0, 1.0, 1.0, 1.0)?, kol_chap2_rhs(a, 1.0, 1.0, 1.0, 1.0)?);
    rep.residuals.push(Residual {
        label: format!("rescaled identity a={a} (t,s)=(1,1)"),
        value: kol,
        tolerance: tol.get("ck_kol")?,
    });
    let lim = short_time_limit(d, 1.0, 1e-4)?;
    rep.residuals.push(Residual {
        label: "short-time limit x=1 eps=1e-4".into(),
        value: lim,
        tolerance: tol.get("ck_limit")?,
    });
    rep.pass = rep.residuals.iter().all(Residual::ok);
    Ok(rep)
}

/// `|∫ p(s+ε, x, s, y) f(y) dy - f(x)|` with `f(y) = e^{-(y-1)²}`.
pub fn short_time_limit(d: &Density, x: f64, eps: f64) -> Result<f64> {
    let f = |y: f64| (-(y - 1.0) * (y - 1.0)).exp();
    let s = 0.5;
    let sig = eps.sqrt();
    let rule = panel_rule((x - 9.0 * sig).max(0.0), x + 9.0 * sig, 2.0 * sig, 8, d.origin_exponent());
    d.prebuild(&rule.iter().map(|&(y, _)| (s, y)).collect::<Vec<_>>())?;
    let mut acc = 0.0;
    for &(y, w) in &rule {
        acc += w * d.eval(s + eps, x, s, y)? * f(y);
    }
    Ok((acc - f(x)).abs())
}

pub fn check_reflected_bm(n: usize, seed: u64, tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("reflected-bm", format!("{n} {seed} {tol:e}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ord = BesselOrder::new(-0.5)?;
    let mut worst = 0.0f64;
    for g in random_args(&mut rng, n) {
        worst = worst.max(rel(bessel_kernel(ord, g)?, reflected_bm_kernel(g)?));
    }
    rec.push(format!("max relative over {n} args"), worst, tol);
    Ok(rec.finish())
}

pub fn check_mittag_leffler(tol: f64, asym_tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("mittag-leffler", format!("{tol:e} {asym_tol:e}"));
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    let p11 = MittagLefflerParams::new(1.0, 1.0)?;
    let p21 = MittagLefflerParams::new(2.0, 1.0)?;
    for k in 0..=100 {
        let z = 0.1 * k as f64;
        e1 = e1.max(rel(mittag_leffler(p11, z)?, z.exp()));
        e2 = e2.max(rel(mittag_leffler(p21, z * z)?, z.cosh()));
    }
    rec.push("E_{1,1}(z) vs exp z on [0,10]", e1, tol);
    rec.push("E_{2,1}(z^2) vs cosh z on [0,10]", e2, tol);
    let lg = ln_g_alpha(1.0, 25.0)?;
    rec.push("ln g_1(25) / (ln 2 + 625) - 1", (lg / (2f64.ln() + 625.0) - 1.0).abs(), asym_tol);
    Ok(rec.finish())
}

/// Operator applied by [`check_pde_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    /// `∂_t - ½∂² - (1+2b)/(2x) ∂`.
    Singular,
    /// `∂_t - ½∂²`.
    Heat,
}

/// Pass criterion for [`check_pde_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdeCriterion {
    /// Observed order between successive `h` levels lies in `[lo, hi]`.
    Order { lo: f64, hi: f64 },
    /// `R(h) <= c (h² + tol)` on every level.
    Bound { c: f64, tol: f64 },
}

/// `max |L p|` over `points` by finite differences with step `h`: forward
/// second-order in `t`, central in `x`.
pub fn fd_residual(d: &Density, op: Operator, points: &[(f64, f64)], source: (f64, f64), h: f64) -> Result<f64> {
    let (s, y) = source;
    let field = d.field();
    d.prebuild(&[source])?;
    let mut worst = 0.0f64;
    for &(t, x) in points {
        let p = |tt: f64, xx: f64| d.eval(tt, xx, s, y);
        let p0 = p(t, x)?;
        let dt = (-3.0 * p0 + 4.0 * p(t + h, x)? - p(t + 2.0 * h, x)?) / (2.0 * h);
        let (pl, pr) = (p(t, x - h)?, p(t, x + h)?);
        let dx = (pr - pl) / (2.0 * h);
        let dxx = (pr - 2.0 * p0 + pl) / (h * h);
        let drift = match op {
            Operator::Singular => (1.0 + 2.0 * field.eval(t, x)) / (2.0 * x),
            Operator::Heat => 0.0,
        };
        worst = worst.max((dt - 0.5 * dxx - drift * dx).abs());
    }
    Ok(worst)
}

pub fn check_pde_residual(
    d: &Density,
    op: Operator,
    points: &[(f64, f64)],
    source: (f64, f64),
    h_levels: &[f64],
    criterion: PdeCriterion,
) -> Result<CheckReport> {
    let mut rec = Recorder::new(
        "pde-residual",
        format!("{} {op:?} {points:?} {source:?} {h_levels:?} {criterion:?}", d.label()),
    );
    let r: Vec<f64> = h_levels
        .iter()
        .map(|&h| fd_residual(d, op, points, source, h))
        .collect::<Result<_>>()?;
    match criterion {
        PdeCriterion::Order { lo, hi } => {
            if r.len() < 2 {
                return Err(Error::Parameter("an order needs at least two h levels".into()));
            }
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for k in 0..r.len() - 1 {
                let order = (r[k] / r[k + 1]).ln() / (h_levels[k] / h_levels[k + 1]).ln();
                rec.push(
                    format!("{} {op:?}: |order - {mid}| for h={} -> {}", d.label(), h_levels[k], h_levels[k + 1]),
                    (order - mid).abs(),
                    half,
                );
            }
        }
        PdeCriterion::Bound { c, tol } => {
            for (h, v) in h_levels.iter().zip(&r) {
                rec.push(format!("{} {op:?}: R(h={h})", d.label()), *v, c * (h * h + tol));
            }
        }
    }
    Ok(rec.finish())
}

/// Interior grid away from the origin and from `t = s`.
pub const PDE_POINTS: [(f64, f64); 12] = [
    (0.4, 0.4),
    (0.4, 0.9),
    (0.4, 1.5),
    (0.4, 2.2),
    (0.8, 0.4),
    (0.8, 0.9),
    (0.8, 1.5),
    (0.8, 2.2),
    (1.2, 0.4),
    (1.2, 0.9),
    (1.2, 1.5),
    (1.2, 2.2),
];

/// `x^{1-2b} ∂_x p` along `ladder`; the check asks for monotone decay.
pub fn reflection_values(d: &Density, t: f64, source: (f64, f64), ladder: &[f64]) -> Result<Vec<f64>> {
    let (s, y) = source;
    let field = d.field();
    d.prebuild(&[source])?;
    ladder
        .iter()
        .map(|&x| {
            let h = 0.25 * x;
            let dp = (d.eval(t, x + h, s, y)? - d.eval(t, x - h, s, y)?) / (2.0 * h);
            Ok(x.powf(1.0 - 2.0 * field.eval(t, x)) * dp)
        })
        .collect()
}

pub fn check_reflection(d: &Density, t: f64, source: (f64, f64), ladder: &[f64], ratio_tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new("reflection", format!("{} {t} {source:?} {ladder:?} {ratio_tol:e}", d.label()));
    let v = reflection_values(d, t, source, ladder)?;
    for k in 0..v.len().saturating_sub(1) {
        let r = if v[k] == 0.0 { 0.0 } else { v[k + 1].abs() / v[k].abs() };
        rec.push(format!("|v({})| / |v({})|", ladder[k + 1], ladder[k]), r, ratio_tol);
    }
    Ok(rec.finish())
}

/// `Φ = K + K*Φ` at random interior arguments.
pub fn check_volterra(fs: &FundamentalSolutionApprox, n: usize, seed: u64, factor: f64) -> Result<CheckReport> {
    let tol = factor * fs.quad().tol;
    let mut rec = Recorder::new("volterra", format!("{} {:?} {n} {seed} {factor:e}", fs.field().name(), fs.quad()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = fs.horizon();
    let args: Vec<KernelArgs> = (0..n)
        .map(|_| {
            let s = rng.random_range(0.0..0.5);
            let tau = rng.random_range(0.2..(0.9 * horizon).max(0.3));
            KernelArgs::new(s + tau, rng.random_range(0.3..2.5), s, rng.random_range(0.3..2.5)).expect("valid")
        })
        .collect();
    fs.prebuild(&args.iter().map(|a| (a.s, a.y)).collect::<Vec<_>>())?;
    for a in &args {
        let r = fs.volterra_residual(a.t, a.x, a.s, a.y)?;
        rec.push(format!("t={:.4} x={:.4} s={:.4} y={:.4}", a.t, a.x, a.s, a.y), r.relative, tol);
    }
    Ok(rec.finish())
}

/// Tensor grid `(t, x, 0, y)`.
pub fn tensor_args(ts: &[f64], xs: &[f64], ys: &[f64]) -> Vec<KernelArgs> {
    let mut out = Vec::new();
    for &y in ys {
        for &t in ts {
            for &x in xs {
                out.push(KernelArgs::new(t, x, 0.0, y).expect("valid"));
            }
        }
    }
    out
}

/// Fit on grid A, assert the two-sided estimates and the majorant of `Φ` on B.
pub fn check_bound_sandwich(
    fs: &FundamentalSolutionApprox,
    grid_a: &[KernelArgs],
    grid_b: &[KernelArgs],
    delta: f64,
    safety: f64,
    collapse_tol: f64,
) -> Result<CheckReport> {
    let field = fs.field();
    let mut rec = Recorder::new(
        "bound-sandwich",
        format!("{} {:?} {grid_a:?} {grid_b:?} {delta:e} {safety:e} {collapse_tol:e}", field.name(), fs.quad()),
    );
    let src = |g: &[KernelArgs]| g.iter().map(|a| (a.s, a.y)).collect::<Vec<_>>();
    fs.prebuild(&src(grid_a))?;
    fs.prebuild(&src(grid_b))?;
    let c = fit_constants(fs, grid_a, delta, safety)?;
    fs.set_constants(c);
    let beta = field.beta();
    let bp = BoundParams::new(delta, beta, c.cal_const)?;
    let (mut lo_ratio, mut hi_ratio, mut phi_ratio) = (0.0f64, 0.0f64, 0.0f64);
    for a in grid_b {
        let p = fs.evaluate(a.t, a.x, a.s, a.y)?;
        lo_ratio = lo_ratio.max(lower_bound(field, &bp, c.c_lower, *a)? / p);
        hi_ratio = hi_ratio.max(p / upper_bound(field, &bp, c.c_upper, *a)?);
        let m = phi_majorant(field, &bp, *a)?;
        let phi = fs.phi(a.t, a.x, a.s, a.y)?.abs();
        phi_ratio = phi_ratio.max(if phi == 0.0 { 0.0 } else { phi / m });
    }
    rec.push("max lower / p̂ on B", lo_ratio, 1.0);
    rec.push("max p̂ / upper on B", hi_ratio, 1.0);
    rec.push("max |Φ| / majorant on B", phi_ratio, 1.0);

    // H = 0: both estimates reduce to the frozen kernel
    let frozen = CoefficientField::constant(field.eval(0.0, 1.0))?;
    let fbp = BoundParams::new(delta, frozen.beta(), 1.0)?;
    let mut collapse = 0.0f64;
    for a in grid_b {
        let p = p_bessel(frozen.eval(a.s, a.y), a.tau(), a.x, a.y);
        collapse = collapse.max(rel(upper_bound(&frozen, &fbp, 1.0, *a)?, p));
        collapse = collapse.max(rel(lower_bound(&frozen, &fbp, 1.0, *a)?, p));
    }
    rec.push("H=0 estimates vs p_a", collapse, collapse_tol);

    // the infimum over δ cannot exceed the value at δ = 1/2
    let mut inf_ratio = 0.0f64;
    for a in grid_b {
        let half = upper_bound(field, &BoundParams::new(0.5, beta, c.cal_const)?, c.c_upper, *a)?;
        let mut best = f64::INFINITY;
        for k in 1..10 {
            let bd = BoundParams::new(0.1 * k as f64, beta, c.cal_const)?;
            best = best.min(upper_bound(field, &bd, c.c_upper, *a)?);
        }
        inf_ratio = inf_ratio.max(best / half);
    }
    rec.push("min over δ grid / value at δ=1/2", inf_ratio, 1.0);
    Ok(rec.finish())
}

/// Fitting and held-out grids used by the battery.
pub fn sandwich_grids() -> (Vec<KernelArgs>, Vec<KernelArgs>) {
    let a = tensor_args(&[0.4, 0.9, 1.5], &[0.4, 0.8, 1.3, 1.9, 2.6], &[0.5, 1.0, 1.5, 2.0]);
    let b = tensor_args(&[0.6, 1.2], &[0.6, 1.1, 1.6, 2.2], &[0.75, 1.25, 1.75]);
    (a, b)
}

/// Monte Carlo settings shared by the stochastic checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// KS distances: reflected Brownian motion, the two-dimensional Bessel case
/// and the field under test against `density`.
pub fn check_monte_carlo(d: &Density, mc: McSettings, ks_tol: f64, ks_field_tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new(
        "monte-carlo",
        format!("{} {mc:?} {ks_tol:e} {ks_field_tol:e}", d.label()),
    );
    let cfg = SimConfig::new(CoefficientField::constant(-0.5)?, 1.0, 0.0, 1.0, mc.dt, mc.n_paths, mc.seed);
    let ens = simulate(&cfg)?;
    let ks = ks_one_sample(&ens.final_positions(), |y| reflected_bm_cdf(1.0, 1.0, y));
    rec.push("b=-1/2 vs reflected BM", ks, ks_tol);

    let mut cfg = SimConfig::new(CoefficientField::constant(-0.25)?, 1.0, 0.0, 1.0, mc.dt, mc.n_paths, mc.seed + 1);
    cfg.drift = DriftForm::Doubled;
    let ens = simulate(&cfg)?;
    let norm = sample_bm_norm(2, 1.0, 1.0, mc.n_paths, mc.seed + 2);
    rec.push("b=-1/4 vs |2-D BM|", ks_two_sample(&ens.final_positions(), &norm), ks_tol);

    let (t, x) = (1.0, 1.0);
    let field = d.field();
    let cfg = SimConfig::new(field.time_reversed(t), x, 0.0, t, mc.dt, mc.n_paths, mc.seed + 3);
    let ens = simulate(&cfg)?;
    let cdf = density_cdf(d, t, x, 0.0, 0.25)?;
    let ks = ks_one_sample(&ens.final_positions(), |y| cdf.eval(y));
    rec.push(format!("{} vs simulation", d.label()), ks, ks_field_tol);
    Ok(rec.finish())
}

/// Spread `max/min` of a list of positive numbers.
fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn percentile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[((s.len() - 1) as f64 * q).round() as usize]
}

/// Path statistics: refinement stability of `ν̂` and `τ̂`, boundedness of
/// `τ̂` as the horizon grows, and the increment scaling over random pairs.
pub fn check_path_statistics(field: &CoefficientField, n_paths: usize, seed: u64, drift_tol: f64, horizon_tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new(
        "path-statistics",
        format!("{} {n_paths} {seed} {drift_tol:e} {horizon_tol:e}", field.name()),
    );
    let run = |t_end: f64, dt: f64, stride: usize, seed: u64| {
        let mut c = SimConfig::new(field.clone(), 1.0, 0.0, t_end, dt, n_paths, seed);
        c.record_stride = stride;
        simulate(&c)
    };
    // ν̂ on [0, 1] with 101 recorded times, at dt and dt/2
    let coarse = run(1.0, 1e-3, 10, seed)?;
    let fine = run(1.0, 5e-4, 20, seed + 1)?;
    let (nc, nf) = (modulus_stat(&coarse)?, modulus_stat(&fine)?);
    let (gc, gf) = (subgaussian_norm(&nc)?, subgaussian_norm(&nf)?);
    rec.push("ν̂ norm change dt -> dt/2", spread(&[gc, gf]), drift_tol);
    rec.push("ν̂ 99th percentile change dt -> dt/2", spread(&[percentile(&nc, 0.99), percentile(&nf, 0.99)]), drift_tol);

    // τ̂ at T = 5 under refinement, and across horizons
    let tau_norm = |t_end: f64, dt: f64, seed: u64| -> Result<f64> {
        let ens = run(t_end, dt, ((t_end / dt) as usize).max(1), seed)?;
        subgaussian_norm(&running_max_stat(&ens)?)
    };
    let t5 = tau_norm(5.0, 2e-3, seed + 2)?;
    let t5f = tau_norm(5.0, 1e-3, seed + 3)?;
    rec.push("τ̂ norm change dt -> dt/2 at T=5", spread(&[t5, t5f]), drift_tol);
    let t20 = tau_norm(20.0, 4e-3, seed + 4)?;
    let t80 = tau_norm(80.0, 1e-2, seed + 5)?;
    rec.push("τ̂ norm growth max(T=20,80) / T=5", t20.max(t80) / t5 - 1.0, horizon_tol);

    // increments over 10 random pairs on the recorded grid of `fine`
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 6);
    let mut norms = Vec::new();
    for _ in 0..10 {
        let i = rng.random_range(0..90usize);
        let j = rng.random_range(i + 5..=100usize);
        let inc = increment_stat(&fine, fine.times[i], fine.times[j])?;
        norms.push(subgaussian_norm(&inc)?);
    }
    rec.push("increment norm spread over 10 pairs", spread(&norms) - 1.0, horizon_tol);
    Ok(rec.finish())
}

/// Initial trace, conservation and the Duhamel term with unit data.
pub fn check_cauchy(fs: &FundamentalSolutionApprox, mass_tol: f64, duhamel_tol: f64) -> Result<CheckReport> {
    let mut rec = Recorder::new(
        "cauchy",
        format!("{} {:?} {mass_tol:e} {duhamel_tol:e}", fs.field().name(), fs.quad()),
    );
    let s = 0.0;
    let gauss = InitialData::preset("gaussian", 0.5)?;
    let x = 0.8;
    let mut errs = Vec::new();
    for eps in [0.1, 0.03, 0.01, 0.003] {
        let u = solve_homogeneous(fs, &gauss, s, &[(s + eps, x)])?.values()[0];
        errs.push((u - gauss.eval(x)).abs());
    }
    let worst_step = errs.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    rec.push("initial trace error ratio (monotone decay)", worst_step, 1.0);

    let grid = [(0.5, 0.5), (0.5, 1.0), (0.5, 2.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0)];
    let one = InitialData::preset("one", 0.5)?;
    let u = solve_homogeneous(fs, &one, s, &grid)?;
    let worst = u.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    rec.push("f=1: max |u - 1|", worst, mass_tol);

    let g = SourceTerm::new("one", 0.5, |_, _| 1.0)?;
    let u = solve_inhomogeneous(fs, &g, s, &grid)?;
    let worst = u.points.iter().map(|p| (p.u - (p.t - s)).abs()).fold(0.0, f64::max);
    rec.push("g=1: max |u - (t-s)|", worst, duhamel_tol);
    Ok(rec.finish())
}

/// Field, discretization and tolerances for a battery run.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub field: CoefficientField,
    pub quad: QuadratureSpec,
    pub ctrl: SeriesControl,
    pub horizon: f64,
    pub tolerances: ToleranceTable,
    pub seed: u64,
}

impl VerifyContext {
    pub fn new(field: CoefficientField) -> Self {
        Self {
            field,
            quad: QuadratureSpec::default(),
            ctrl: SeriesControl::default(),
            horizon: 2.0,
            tolerances: ToleranceTable::default(),
            seed: 1,
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            field: cfg.build_field()?,
            quad: cfg.quad,
            ctrl: cfg.series,
            horizon: cfg.fs.horizon,
            tolerances: cfg.tolerance_table()?,
            seed: cfg.seed,
        })
    }
}

/// Expand `all`, reject unknown names and order by the battery list.
pub fn resolve_battery(names: &[String]) -> Result<Vec<&'static str>> {
    let mut chosen = vec![false; BATTERY.len()];
    for n in names {
        if n == "all" {
            chosen.iter_mut().for_each(|c| *c = true);
            continue;
        }
        match BATTERY.iter().position(|b| b == n) {
            Some(i) => chosen[i] = true,
            None => {
                return Err(Error::Config(format!(
                    "unknown check '{n}'; known: all, {}",
                    BATTERY.join(", ")
                )))
            }
        }
    }
    Ok(BATTERY.iter().zip(chosen).filter(|(_, c)| *c).map(|(b, _)| *b).collect())
}

/// Run the named checks in battery order.
pub fn run_battery(names: &[String], ctx: &VerifyContext) -> Result<Vec<CheckReport>> {
    let selected = resolve_battery(names)?;
    if selected.is_empty() {
        return Ok(Vec::new());
    }
    let fs = Arc::new(assemble_fs(&ctx.field, ctx.quad, ctx.ctrl, ctx.horizon)?);
    selected.into_iter().map(|name| run_check(name, ctx, &fs)).collect()
}

fn run_check(name: &str, ctx: &VerifyContext, fs: &Arc<FundamentalSolutionApprox>) -> Result<CheckReport> {
    let tol = &ctx.tolerances;
    let d = Density::for_fs(fs.clone());
    let seed = ctx.seed;
    match name {
        "constant-exactness" => check_constant_exactness(&[-0.9, -0.5, -0.25, -0.1], 100, seed, tol.get("constant_exact")?),
        "normalization" => {
            if d.is_fs() {
                check_normalization(&d, &[(1.0, 1.0)], tol.get("normalization_fs")?)
            } else {
                let grid: Vec<(f64, f64)> = [0.1, 1.0, 10.0]
                    .iter()
                    .flat_map(|&t| [0.1, 1.0, 5.0].map(|x| (t, x)))
                    .collect();
                check_normalization(&d, &grid, tol.get("normalization_const")?)
            }
        }
        "bessel-identity" => check_bessel_identity(&[-0.9, -0.5, -0.1], &[0.5, 1.0, 2.0], tol.get("bessel_identity")?),
        "chapman-kolmogorov" => check_chapman_kolmogorov_battery(&d, seed, tol),
        "reflected-bm" => check_reflected_bm(1000, seed, tol.get("reflected_bm")?),
        "mittag-leffler" => check_mittag_leffler(tol.get("mittag")?, tol.get("mittag_asym")?),
        "pde-residual" => {
            let h = [0.04, 0.02, 0.01];
            let order = PdeCriterion::Order {
                lo: tol.get("pde_order_lo")?,
                hi: tol.get("pde_order_hi")?,
            };
            let mut rep = if d.is_fs() {
                let bound = PdeCriterion::Bound {
                    c: tol.get("pde_c")?,
                    tol: ctx.quad.tol,
                };
                check_pde_residual(&d, Operator::Singular, &PDE_POINTS, (0.0, 1.0), &h, bound)?
            } else {
                check_pde_residual(&d, Operator::Singular, &PDE_POINTS, (0.0, 1.0), &h, order)?
            };
            let gauss = Density::custom("gauss", CoefficientField::constant(-0.5)?, |t, x, s, y| {
                gauss_kernel(t, x, s, y).unwrap_or(f64::NAN)
            });
            let heat = check_pde_residual(&gauss, Operator::Heat, &PDE_POINTS, (0.0, 1.0), &h, order)?;
            rep.residuals.extend(heat.residuals);
            rep.pass = rep.residuals.iter().all(Residual::ok);
            Ok(rep)
        }
        "reflection" => check_reflection(&d, 1.0, (0.0, 1.0), &[1e-2, 1e-3, 1e-4], tol.get("reflection_ratio")?),
        "volterra" => check_volterra(fs, 10, seed, tol.get("volterra_factor")?),
        "bound-sandwich" => {
            let (a, b) = sandwich_grids();
            check_bound_sandwich(
                fs,
                &a,
                &b,
                tol.get("sandwich_delta")?,
                tol.get("sandwich_safety")?,
                tol.get("sandwich_collapse")?,
            )
        }
        "monte-carlo" => {
            let mc = McSettings {
                n_paths: tol.get("mc_paths")? as usize,
                dt: tol.get("mc_dt")?,
                seed,
            };
            check_monte_carlo(&d, mc, tol.get("mc_ks")?, tol.get("mc_ks_fs")?)
        }
        "path-statistics" => check_path_statistics(
            &ctx.field,
            tol.get("stat_paths")? as usize,
            seed,
            tol.get("stat_drift")?,
            tol.get("stat_horizon")?,
        ),
        "cauchy" => check_cauchy(fs, tol.get("cauchy_mass")?, tol.get("cauchy_duhamel")?),
        other => Err(Error::Config(format!("unknown check '{other}'"))),
    }
}

/// Whole-line Gauss kernel normalization, used as a sanity baseline.
pub fn gauss_mass(tau: f64) -> Result<f64> {
    let f = |y: f64| (-(y * y) / (2.0 * tau)).exp() / (2.0 * PI * tau).sqrt();
    Ok(integrate_adaptive(f, -14.0 * tau.sqrt(), 14.0 * tau.sqrt(), 1e-15, 1e-13, 1000)?.value)
}
