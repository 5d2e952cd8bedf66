//! Monte Carlo oracle: simulation of the variable Bessel process by a
//! reflected Euler scheme, empirical densities, and sample statistics for
//! the path regularity estimates.
//!
//! Each path owns a ChaCha8 stream selected by its index, so an ensemble is a
//! pure function of `(config, seed)` whatever the thread count.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};

/// Which drift the simulated process carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftForm {
    /// `(1+2b)/(2x)`: the process whose transition density is `p_b` for constant `b`.
    #[default]
    Bessel,
    /// `(1+2b)/x`.
    Doubled,
    /// No drift; plain reflected Brownian motion.
    Off,
}

impl DriftForm {
    #[inline]
    fn drift(self, b: f64, x: f64) -> f64 {
        match self {
            DriftForm::Bessel => (1.0 + 2.0 * b) / (2.0 * x),
            DriftForm::Doubled => (1.0 + 2.0 * b) / x,
            DriftForm::Off => 0.0,
        }
    }
}

/// Law of the starting point.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Point(f64),
    /// `|N(mean, sd²)|`, a subgaussian start.
    AbsNormal { mean: f64, sd: f64 },
    /// Path `i` starts from `samples[i % len]`.
    Samples(Arc<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub field: CoefficientField,
    pub start: Start,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub drift: DriftForm,
    /// Multiplier on the Brownian increments.
    pub noise_scale: f64,
    /// Record every `record_stride`-th step (the final time is always kept).
    pub record_stride: usize,
    /// Below this level a step is split into `substeps`; defaults to `10 √dt`.
    pub x_floor: Option<f64>,
    pub substeps: usize,
}

impl SimConfig {
    pub fn new(field: CoefficientField, x0: f64, t_start: f64, t_end: f64, dt: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            field,
            start: Start::Point(x0),
            t_start,
            t_end,
            dt,
            n_paths,
            seed,
            drift: DriftForm::Bessel,
            noise_scale: 1.0,
            record_stride: 1,
            x_floor: None,
            substeps: 10,
        }
    }

    pub fn x_floor(&self) -> f64 {
        self.x_floor.unwrap_or(10.0 * self.dt.sqrt())
    }

    fn n_steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let span = self.t_end - self.t_start;
        if !(span > 0.0 && self.t_start >= 0.0 && span.is_finite()) {
            return Err(Error::Parameter(format!("need 0 <= t_start < t_end, got [{}, {}]", self.t_start, self.t_end)));
        }
        if !(self.dt > 0.0 && self.dt <= span / 10.0) {
            return Err(Error::Parameter(format!("dt = {} must lie in (0, {}]", self.dt, span / 10.0)));
        }
        if self.n_paths == 0 || self.record_stride == 0 || self.substeps == 0 {
            return Err(Error::Parameter("n_paths, record_stride and substeps must be >= 1".into()));
        }
        match &self.start {
            Start::Point(x) if !(*x > 0.0 && x.is_finite()) => return Err(Error::Parameter(format!("x0 = {x} must be > 0"))),
            Start::AbsNormal { sd, .. } if !(*sd > 0.0) => return Err(Error::Parameter("start sd must be > 0".into())),
            Start::Samples(s) if s.is_empty() || s.iter().any(|v| !(*v >= 0.0)) => {
                return Err(Error::Parameter("start samples must be non-empty and >= 0".into()))
            }
            _ => {}
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Parameter("noise_scale must be >= 0".into()));
        }
        let floor = self.x_floor();
        if self.dt > floor * floor / 4.0 {
            return Err(Error::Stability(format!("dt = {} exceeds x_floor²/4 = {}", self.dt, floor * floor / 4.0)));
        }
        Ok(())
    }
}

/// Recorded positions, row-major `n_paths × times.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub scheme: String,
    /// `max |θ|` over every simulated step, per path.
    pub running_max: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.positions[i * n..(i + 1) * n]
    }

    fn time_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * (1.0 + t.abs());
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .ok_or_else(|| Error::Domain(format!("time {t} is not on the recorded grid")))
    }

    /// Positions of all paths at a recorded time.
    pub fn at(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.time_index(t)?;
        Ok((0..self.n_paths).map(|i| self.path(i)[k]).collect())
    }

    pub fn final_positions(&self) -> Vec<f64> {
        (0..self.n_paths).map(|i| *self.path(i).last().expect("non-empty path")).collect()
    }

    /// Little-endian dump: `n_paths: u64`, `n_times: u64`, `dt: f64`, then
    /// positions row-major as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.positions.len());
        out.extend_from_slice(&(self.n_paths as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_times() as u64).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        for v in &self.positions {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Header and positions from a dump written by [`PathEnsemble::to_bytes`].
    pub fn read_binary(bytes: &[u8]) -> Result<(usize, usize, f64, Vec<f64>)> {
        let bad = || Error::Artifact("truncated path dump".into());
        let word = |k: usize| -> Result<[u8; 8]> { bytes.get(8 * k..8 * k + 8).and_then(|b| b.try_into().ok()).ok_or_else(bad) };
        let n_paths = u64::from_le_bytes(word(0)?) as usize;
        let n_times = u64::from_le_bytes(word(1)?) as usize;
        let dt = f64::from_le_bytes(word(2)?);
        let n = n_paths.checked_mul(n_times).ok_or_else(bad)?;
        let pos = (0..n).map(|k| word(3 + k).map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        Ok((n_paths, n_times, dt, pos))
    }
}

/// Reflected Euler simulation.
pub fn simulate(cfg: &SimConfig) -> Result<PathEnsemble> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    let dt = (cfg.t_end - cfg.t_start) / n_steps as f64;
    let floor = cfg.x_floor();
    let sub = cfg.substeps;
    let h = dt / sub as f64;
    let (sq, sqh) = (cfg.noise_scale * dt.sqrt(), cfg.noise_scale * h.sqrt());
    let mut rec: Vec<usize> = (0..=n_steps).step_by(cfg.record_stride).collect();
    if *rec.last().expect("non-empty") != n_steps {
        rec.push(n_steps);
    }
    let times: Vec<f64> = rec.iter().map(|&k| cfg.t_start + k as f64 * dt).collect();
    let n_rec = rec.len();
    let field = &cfg.field;
    let form = cfg.drift;

    let rows: Vec<(Vec<f64>, f64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let mut x = match &cfg.start {
                Start::Point(x0) => *x0,
                Start::AbsNormal { mean, sd } => (mean + sd * rng.sample::<f64, _>(StandardNormal)).abs(),
                Start::Samples(s) => s[i % s.len()],
            };
            let mut row = Vec::with_capacity(n_rec);
            let mut next = 0;
            let mut vmax = x.abs();
            for k in 0..=n_steps {
                if next < n_rec && rec[next] == k {
                    row.push(x);
                    next += 1;
                }
                if k == n_steps {
                    break;
                }
                let t = cfg.t_start + k as f64 * dt;
                if x >= floor {
                    let z: f64 = rng.sample(StandardNormal);
                    x = (x + form.drift(field.eval(t, x), x) * dt + sq * z).abs();
                } else {
                    for j in 0..sub {
                        let tj = t + j as f64 * h;
                        let xe = x.max(floor);
                        let z: f64 = rng.sample(StandardNormal);
                        x = (x + form.drift(field.eval(tj, xe), xe) * h + sqh * z).abs();
                    }
                }
                vmax = vmax.max(x);
            }
            (row, vmax)
        })
        .collect();

    let mut positions = Vec::with_capacity(cfg.n_paths * n_rec);
    let mut running_max = Vec::with_capacity(cfg.n_paths);
    for (row, m) in rows {
        positions.extend_from_slice(&row);
        running_max.push(m);
    }
    Ok(PathEnsemble {
        times,
        positions,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        dt,
        scheme: format!("reflected-euler/{form:?}/floor={floor}/substeps={sub}"),
        running_max,
    })
}

/// Exact samples of `|x0 e₁ + W_t|` for a `dim`-dimensional Brownian motion `W`.
pub fn sample_bm_norm(dim: usize, x0: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let st = t.sqrt();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut r2 = 0.0;
            for d in 0..dim {
                let z: f64 = rng.sample(StandardNormal);
                let c = if d == 0 { x0 + st * z } else { st * z };
                r2 += c * c;
            }
            r2.sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Normalized histogram with binomial standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub std_err: Vec<f64>,
    pub n_samples: usize,
}

impl DensityTable {
    pub fn mass(&self) -> f64 {
        self.density.iter().zip(self.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum()
    }

    /// `(p̂_bin - p_bin) / sd_bin` for bin probabilities `p_bin` from a CDF.
    pub fn z_scores(&self, cdf: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.n_samples as f64;
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(e, &c)| {
                let p = (cdf(e[1]) - cdf(e[0])).max(1e-300);
                (c as f64 / n - p) / (p * (1.0 - p) / n).sqrt()
            })
            .collect()
    }
}

pub fn histogram(samples: &[f64], bins: BinSpec) -> Result<DensityTable> {
    if samples.is_empty() {
        return Err(Error::Parameter("empty sample".into()));
    }
    if !(bins.hi > bins.lo && bins.n > 0) {
        return Err(Error::Parameter("histogram needs hi > lo and n > 0".into()));
    }
    let w = (bins.hi - bins.lo) / bins.n as f64;
    let mut counts = vec![0u64; bins.n];
    for &v in samples {
        if v >= bins.lo && v <= bins.hi {
            let k = (((v - bins.lo) / w) as usize).min(bins.n - 1);
            counts[k] += 1;
        }
    }
    let n = samples.len() as f64;
    let edges = (0..=bins.n).map(|k| bins.lo + k as f64 * w).collect();
    let density = counts.iter().map(|&c| c as f64 / (n * w)).collect();
    let std_err = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            (p * (1.0 - p) / n).sqrt() / w
        })
        .collect();
    Ok(DensityTable {
        edges,
        counts,
        density,
        std_err,
        n_samples: samples.len(),
    })
}

/// Histogram of the ensemble at recorded time `t`.
pub fn empirical_density(ens: &PathEnsemble, t: f64, bins: BinSpec) -> Result<DensityTable> {
    if ens.n_paths == 0 {
        return Err(Error::Parameter("empty ensemble".into()));
    }
    histogram(&ens.at(t)?, bins)
}

/// `sup_{p ∈ {1,2,4,8,16}} (mean |X|^p)^{1/p} / √p`.
pub fn subgaussian_norm(samples: &[f64]) -> Result<f64> {
    if samples.len() < 1000 {
        return Err(Error::Parameter(format!("need at least 1000 samples, got {}", samples.len())));
    }
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let n = samples.len() as f64;
    let mut best = 0.0f64;
    for p in [1i32, 2, 4, 8, 16] {
        let m: f64 = samples.iter().map(|v| (v.abs() / scale).powi(p)).sum::<f64>() / n;
        best = best.max(scale * m.powf(1.0 / p as f64) / (p as f64).sqrt());
    }
    Ok(best)
}

/// Per path `max_{s<t} |θ(t)-θ(s)| / √(|t-s| ln(2 + 1/|t-s|))` over recorded times.
pub fn modulus_stat(ens: &PathEnsemble) -> Result<Vec<f64>> {
    let n = ens.n_times();
    if n < 2 {
        return Err(Error::Domain("need at least two recorded times".into()));
    }
    if ens.times[n - 1] - ens.times[0] > 1.0 + 1e-12 {
        return Err(Error::Domain("the modulus statistic needs a time window of length <= 1".into()));
    }
    let mut norm = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let d = ens.times[b] - ens.times[a];
            norm.push(1.0 / (d * (2.0 + 1.0 / d).ln()).sqrt());
        }
    }
    Ok((0..ens.n_paths)
        .into_par_iter()
        .map(|i| {
            let p = ens.path(i);
            let mut best = 0.0f64;
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    best = best.max((p[b] - p[a]).abs() * norm[k]);
                    k += 1;
                }
            }
            best
        })
        .collect())
}

/// Per path `max_{t<=T} |θ(t)| / √(T ln T)` with `T = t_end - t_start > e`.
pub fn running_max_stat(ens: &PathEnsemble) -> Result<Vec<f64>> {
    let t = ens.times.last().copied().unwrap_or(0.0) - ens.times.first().copied().unwrap_or(0.0);
    if !(t > std::f64::consts::E) {
        return Err(Error::Domain(format!("horizon T = {t} must exceed e")));
    }
    let c = (t * t.ln()).sqrt();
    Ok(ens.running_max.iter().map(|m| m / c).collect())
}

/// Samples of `(θ(t)-θ(s)) / √(t-s)` for recorded `s < t`.
pub fn increment_stat(ens: &PathEnsemble, s: f64, t: f64) -> Result<Vec<f64>> {
    if !(t > s) {
        return Err(Error::Domain(format!("need s < t, got {s}, {t}")));
    }
    let (a, b) = (ens.time_index(s)?, ens.time_index(t)?);
    let c = 1.0 / (ens.times[b] - ens.times[a]).sqrt();
    Ok((0..ens.n_paths).map(|i| (ens.path(i)[b] - ens.path(i)[a]) * c).collect())
}

/// `sup |F_n - F|` against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// CDF of reflected Brownian motion started at `x` after time `tau`.
pub fn reflected_bm_cdf(tau: f64, x: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let s = (2.0 * tau).sqrt();
    0.5 * (statrs::function::erf::erf((y - x) / s) + statrs::function::erf::erf((y + x) / s))
}

/// Piecewise linear CDF through `(y_k, F_k)` with `F = 0` left of the table
/// and `F = F_last` right of it.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    pub nodes: Vec<(f64, f64)>,
}

impl TabulatedCdf {
    pub fn eval(&self, y: f64) -> f64 {
        let k = self.nodes.partition_point(|n| n.0 <= y);
        if k == 0 {
            return 0.0;
        }
        if k == self.nodes.len() {
            return self.nodes[k - 1].1;
        }
        let ((y0, f0), (y1, f1)) = (self.nodes[k - 1], self.nodes[k]);
        f0 + (f1 - f0) * (y - y0) / (y1 - y0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::gamma;

    fn cfg(a: f64, n: usize, dt: f64) -> SimConfig {
        SimConfig::new(CoefficientField::constant(a).unwrap(), 1.0, 0.0, 1.0, dt, n, 7)
    }

    #[test]
    fn zero_time_and_positivity() {
        let mut c = cfg(-0.3, 200, 0.01);
        c.record_stride = 10;
        let e = simulate(&c).unwrap();
        assert!(e.at(0.0).unwrap().iter().all(|&v| v == 1.0));
        assert!(e.positions.iter().all(|&v| v >= 0.0));
        assert_eq!(e.times.len(), 11);
        assert!((e.times[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cfg(-0.6, 300, 0.01);
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let p = pool.install(|| simulate(&c).unwrap());
        assert_eq!(a.positions, p.positions);
        let mut d = c.clone();
        d.seed = 8;
        assert_ne!(simulate(&d).unwrap().positions, a.positions);
    }

    #[test]
    fn config_validation() {
        assert!(simulate(&cfg(-0.5, 10, 0.2)).is_err());
        let mut c = cfg(-0.5, 10, 0.01);
        c.x_floor = Some(0.1);
        assert!(matches!(simulate(&c), Err(Error::Stability(_))));
        let mut c = cfg(-0.5, 10, 0.01);
        c.start = Start::Point(0.0);
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn frozen_path_has_zero_modulus() {
        let mut c = cfg(-0.5, 20, 0.01);
        c.noise_scale = 0.0;
        c.drift = DriftForm::Off;
        c.record_stride = 5;
        let e = simulate(&c).unwrap();
        assert!(modulus_stat(&e).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflected_bm_marginal() {
        let mut c = cfg(-0.5, 20_000, 0.01);
        c.record_stride = 100;
        let e = simulate(&c).unwrap();
        let fin = e.final_positions();
        let ks = ks_one_sample(&fin, |y| reflected_bm_cdf(1.0, 1.0, y));
        assert!(ks < 0.02, "{ks}");
        let h = histogram(&fin, BinSpec { lo: 0.0, hi: 10.0, n: 40 }).unwrap();
        assert!((h.mass() - 1.0).abs() < 1e-12);
        let z = h.z_scores(|y| reflected_bm_cdf(1.0, 1.0, y));
        assert!(z.iter().filter(|v| v.abs() > 4.0).count() <= 1);
    }

    #[test]
    fn subgaussian_norm_examples() {
        let c = vec![2.5; 1000];
        assert!((subgaussian_norm(&c).unwrap() - 2.5).abs() < 1e-12);
        assert!(subgaussian_norm(&c[..999]).is_err());
        let normals = sample_bm_norm(1, 0.0, 1.0, 100_000, 3);
        let s = subgaussian_norm(&normals).unwrap();
        // moment oracle: sup_p (E|X|^p)^{1/p}/√p with E|X|^p = 2^{p/2} Γ((p+1)/2)/√π
        let exact = [1.0f64, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&p| (2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0).unwrap() / std::f64::consts::PI.sqrt()).powf(1.0 / p) / p.sqrt())
            .fold(0.0, f64::max);
        assert!((0.7..=1.1).contains(&s));
        assert!((s - exact).abs() < 0.02, "{s} vs {exact}");
        let doubled: Vec<f64> = normals.iter().map(|v| 2.0 * v).collect();
        assert_eq!(subgaussian_norm(&doubled).unwrap(), 2.0 * s);
    }

    #[test]
    fn ks_helpers() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&a, |y| y.clamp(0.0, 1.0)) <= 1e-3 + 1e-12);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        assert!((ks_two_sample(&a, &b) - 0.5).abs() < 2e-3);
        let t = TabulatedCdf { nodes: vec![(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)] };
        assert_eq!(t.eval(0.5), 0.25);
        assert_eq!(t.eval(3.0), 1.0);
        assert_eq!(t.eval(-1.0), 0.0);
    }

    #[test]
    fn dump_round_trip() {
        let mut c = cfg(-0.4, 5, 0.05);
        c.record_stride = 4;
        let e = simulate(&c).unwrap();
        let (np, nt, dt, pos) = PathEnsemble::read_binary(&e.to_bytes()).unwrap();
        assert_eq!((np, nt, dt), (5, e.n_times(), e.dt));
        assert_eq!(pos, e.positions);
        assert!(PathEnsemble::read_binary(&e.to_bytes()[..30]).is_err());
    }

    #[test]
    fn running_max_needs_long_horizon() {
        let mut c = cfg(-0.5, 10, 0.01);
        c.t_end = 2.0;
        assert!(running_max_stat(&simulate(&c).unwrap()).is_err());
        c.t_end = 3.0;
        c.start = Start::Point(0.05);
        let v = running_max_stat(&simulate(&c).unwrap()).unwrap();
        assert!(v.iter().all(|m| m.is_finite() && *m > 0.0));
    }
}
