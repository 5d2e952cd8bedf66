//! Acceptance run: twelve criteria, one line each.
//!
//! Reference values are computed here from series, closed forms and a
//! local tanh-sinh rule rather than from the library's own helpers.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use singular_heat::cauchy::{solve_homogeneous, solve_inhomogeneous, InitialData, SourceTerm};
use singular_heat::coeff::{builtin_fields, CoefficientField};
use singular_heat::kernels::{bessel_kernel, KernelArgs};
use singular_heat::montecarlo::{
    increment_stat, modulus_stat, running_max_stat, simulate, subgaussian_norm, DriftForm, SimConfig,
};
use singular_heat::parametrix::{assemble_fs, levi_kernel, phi_series, FundamentalSolutionApprox, QuadratureSpec, SeriesControl};
use singular_heat::specfun::{ln_g_alpha, mittag_leffler, BesselOrder, MittagLefflerParams};
use singular_heat::verify::{
    check_bound_sandwich, check_chapman_kolmogorov, check_volterra, density_cdf, bessel_identity_lhs, random_ck_configs,
    sandwich_grids, CheckReport, Density,
};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Tanh-sinh rule on `[a, b]`; copes with integrable endpoint singularities.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 1.0 / 64.0;
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    // run until the nodes underflow so endpoint singularities lose no mass
    for k in 0..=(7.0 / h) as i32 {
        let t = k as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let e = (-2.0 * u).exp();
        let w = h * half * 0.5 * PI * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        // distance from either endpoint, free of cancellation
        let d = (b - a) * e / (1.0 + e);
        if d <= 0.0 || w == 0.0 {
            break;
        }
        acc += w * f(b - d);
        if k > 0 {
            acc += w * f(a + d);
        }
    }
    acc
}

/// `∫_a^b` over panels of width at most `width`.
fn panels(f: &dyn Fn(f64) -> f64, a: f64, b: f64, width: f64) -> f64 {
    let n = ((b - a) / width).ceil().max(1.0) as usize;
    let step = (b - a) / n as f64;
    (0..n).map(|k| tanh_sinh(f, a + k as f64 * step, a + (k + 1) as f64 * step)).sum()
}

/// `e^{-z} I_ν(z)` from the power series, with the leading term taken in log space.
fn scaled_bessel_i(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    let q = 0.25 * z * z;
    let mut term = (nu * (0.5 * z).ln() - ln_gamma(nu + 1.0) - z).exp();
    let mut acc = term;
    let mut k = 0.0;
    while term > 0.0 && (k <= z || term > 1e-18 * acc) {
        k += 1.0;
        term *= q / (k * (k + nu));
        acc += term;
    }
    acc
}

/// `p_a(τ; x, y) = y^{2a+1} (xy)^{-a} τ^{-1} e^{-(x²+y²)/(2τ)} I_a(xy/τ)`.
fn p_oracle(a: f64, tau: f64, x: f64, y: f64) -> f64 {
    let z = x * y / tau;
    let ln = (2.0 * a + 1.0) * y.ln() - a * (x * y).ln() - tau.ln() - (x - y).powi(2) / (2.0 * tau);
    ln.exp() * scaled_bessel_i(a, z)
}

fn p_oracle_args(a: f64, g: KernelArgs) -> f64 {
    p_oracle(a, g.t - g.s, g.x, g.y)
}

fn random_args(rng: &mut ChaCha8Rng, n: usize) -> Vec<KernelArgs> {
    (0..n)
        .map(|_| {
            let s = rng.random_range(0.0..1.0);
            let tau = rng.random_range(0.05..3.0);
            KernelArgs::new(s + tau, rng.random_range(0.05..4.0), s, rng.random_range(0.05..4.0)).unwrap()
        })
        .collect()
}

fn report_line(r: &CheckReport) -> String {
    r.worst()
        .map(|w| format!("{}: {:.2e} (tol {:.1e})", w.label, w.value, w.tolerance))
        .unwrap_or_default()
}

fn fs_for(field: &CoefficientField, horizon: f64) -> singular_heat::Result<FundamentalSolutionApprox> {
    assemble_fs(field, QuadratureSpec::default(), SeriesControl::default(), horizon)
}

fn constant_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_fs, mut worst_oracle) = (0.0f64, 0.0f64);
    let mut structural = true;
    for a in [-0.9, -0.5, -0.25, -0.1] {
        let field = CoefficientField::constant(a)?;
        let fs = fs_for(&field, 4.5)?;
        for g in random_args(&mut rng, 100) {
            structural &= levi_kernel(&field, g)? == 0.0;
            let phi = phi_series(&field, g, QuadratureSpec::default(), SeriesControl::default())?;
            structural &= phi.value == 0.0 && phi.terms_used == 1;
            let pa = bessel_kernel(BesselOrder::new(a)?, g)?;
            worst_fs = worst_fs.max(rel(fs.evaluate(g.t, g.x, g.s, g.y)?, pa));
            worst_oracle = worst_oracle.max(rel(pa, p_oracle_args(a, g)));
        }
    }
    let ok = structural && worst_fs <= 1e-12 && worst_oracle <= 1e-10;
    Ok((ok, format!("K=0,Φ=0,1 term: {structural}; p̂ vs p_a {worst_fs:.1e}; p_a vs series {worst_oracle:.1e}")))
}

fn unit_mass() -> Outcome {
    let mut worst = 0.0f64;
    for a in [-0.9, -0.5, -0.25, -0.1] {
        let ord = BesselOrder::new(a)?;
        for tau in [0.1, 1.0, 10.0] {
            for x in [0.1, 1.0, 5.0] {
                let f = |y: f64| bessel_kernel(ord, KernelArgs::new(tau, x, 0.0, y).unwrap()).unwrap();
                let sd = tau.sqrt();
                let m = panels(&f, 0.0, x + 14.0 * sd, 0.5 * sd);
                worst = worst.max((m - 1.0).abs());
            }
        }
    }
    Ok((worst <= 1e-8, format!("max |mass - 1| over 36 cases {worst:.2e}")))
}

fn bessel_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut cross = 0.0f64;
    for a in [-0.9, -0.5, -0.1] {
        for w in [0.5f64, 1.0, 2.0] {
            let rhs = w.powf(-a - 1.0) * (0.5 / w).exp();
            let lhs = bessel_identity_lhs(a, w)?;
            worst = worst.max(rel(lhs, rhs));
            let f = |z: f64| {
                if z <= 0.0 {
                    0.0
                } else {
                    ((a + 1.0) * z.ln() - 0.5 * w * z * z + z).exp() * scaled_bessel_i(a, z)
                }
            };
            let own = panels(&f, 0.0, 1.0 / w + 40.0 / w.sqrt(), 1.0);
            cross = cross.max(rel(own, rhs));
        }
    }
    let closed = (bessel_identity_lhs(-0.5, 1.0)? - 1.64872127070013).abs();
    let ok = worst <= 1e-8 && cross <= 1e-8 && closed <= 1e-12;
    Ok((ok, format!("library {worst:.1e}, series {cross:.1e}, |I(-1/2,1) - 1.64872127070013| {closed:.1e}")))
}

fn chapman_kolmogorov() -> Outcome {
    let configs = random_ck_configs(15, 21);
    let mut worst = 0.0f64;
    for (i, c) in configs.iter().enumerate() {
        let a = [-0.9, -0.5, -0.25, -0.1][i % 4];
        let ord = BesselOrder::new(a)?;
        let p = |t: f64, x: f64, s: f64, y: f64| bessel_kernel(ord, KernelArgs::new(t, x, s, y).unwrap()).unwrap();
        let f = |z: f64| if z <= 0.0 { 0.0 } else { p(c.t, c.x, c.v, z) * p(c.v, z, c.s, c.y) };
        let wide = (c.t - c.s).sqrt();
        let comp = panels(&f, 0.0, c.x.max(c.y) + 14.0 * wide, 0.25 * (c.t - c.v).min(c.v - c.s).sqrt());
        worst = worst.max(rel(comp, p_oracle(a, c.t - c.s, c.x, c.y)));
    }
    let fs = Arc::new(fs_for(&CoefficientField::sin_tx(), 2.0)?);
    let interior = random_ck_configs(3, 22);
    let rep = check_chapman_kolmogorov(&Density::for_fs(fs), &interior, 1e-2)?;
    let ok = worst <= 1e-6 && rep.pass;
    Ok((ok, format!("constant a, 15 configs {worst:.1e}; SIN_TX worst {}", report_line(&rep))))
}

fn reflected_bm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ord = BesselOrder::new(-0.5)?;
    let mut worst = 0.0f64;
    for g in random_args(&mut rng, 1000) {
        let tau = g.t - g.s;
        let closed = ((-(g.x - g.y).powi(2) / (2.0 * tau)).exp() + (-(g.x + g.y).powi(2) / (2.0 * tau)).exp())
            / (2.0 * PI * tau).sqrt();
        worst = worst.max(rel(bessel_kernel(ord, g)?, closed));
    }
    Ok((worst <= 1e-12, format!("max relative over 1000 args {worst:.2e}")))
}

/// `max |∂_t p - ½ p'' - (1+2b)/(2x) p'|` by finite differences.
fn fd_residual(p: &dyn Fn(f64, f64) -> f64, field: &CoefficientField, pts: &[(f64, f64)], h: f64) -> f64 {
    pts.iter()
        .map(|&(t, x)| {
            let p0 = p(t, x);
            let dt = (-3.0 * p0 + 4.0 * p(t + h, x) - p(t + 2.0 * h, x)) / (2.0 * h);
            let (l, r) = (p(t, x - h), p(t, x + h));
            let drift = (1.0 + 2.0 * field.eval(t, x)) / (2.0 * x);
            (dt - 0.5 * (r - 2.0 * p0 + l) / (h * h) - drift * (r - l) / (2.0 * h)).abs()
        })
        .fold(0.0, f64::max)
}

fn pde_residual() -> Outcome {
    let pts: Vec<(f64, f64)> = [0.4, 0.8, 1.2]
        .iter()
        .flat_map(|&t| [0.4, 0.9, 1.5, 2.2].map(|x| (t, x)))
        .collect();
    let hs = [0.04, 0.02, 0.01];

    let cfield = CoefficientField::constant(-0.5)?;
    let cfs = fs_for(&cfield, 2.0)?;
    let r: Vec<f64> = hs
        .iter()
        .map(|&h| fd_residual(&|t, x| cfs.evaluate(t, x, 0.0, 1.0).unwrap(), &cfield, &pts, h))
        .collect();
    let orders: Vec<f64> = r.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let orders_ok = orders.iter().all(|o| (1.7..=2.3).contains(o));

    let sfield = CoefficientField::sin_tx();
    let sfs = fs_for(&sfield, 2.0)?;
    let tol = sfs.quad().tol;
    let mut ratio = 0.0f64;
    for &h in &hs {
        let v = fd_residual(&|t, x| sfs.evaluate(t, x, 0.0, 1.0).unwrap(), &sfield, &pts, h);
        ratio = ratio.max(v / (h * h + tol));
    }
    let ok = orders_ok && ratio <= 5.0;
    Ok((ok, format!("CONST(-1/2) orders {orders:.3?}; SIN_TX max R/(h²+tol) {ratio:.2} (C = 5)")))
}

fn volterra() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for field in builtin_fields() {
        let fs = fs_for(&field, 2.0)?;
        let rep = check_volterra(&fs, 10, 31, 5.0)?;
        ok &= rep.pass && rep.residuals.len() == 10;
        let worst = rep.residuals.iter().map(|r| r.value).fold(0.0, f64::max);
        parts.push(format!("{} {worst:.1e}", field.name()));
    }
    Ok((ok, format!("max relative residual (tol 5·tol = 1e-2): {}", parts.join(", "))))
}

fn bound_sandwich() -> Outcome {
    let (a, b) = sandwich_grids();
    let disjoint = b.iter().all(|p| !a.contains(p));
    let mut ok = disjoint;
    let mut parts = Vec::new();
    for field in builtin_fields() {
        let fs = fs_for(&field, 2.0)?;
        let rep = check_bound_sandwich(&fs, &a, &b, 0.5, 2.0, 1e-12)?;
        ok &= rep.pass;
        let get = |pre: &str| rep.residuals.iter().find(|r| r.label.starts_with(pre)).map_or(f64::NAN, |r| r.value);
        parts.push(format!(
            "{} lo {:.2} hi {:.2} H0 {:.0e}",
            field.name(),
            get("max lower"),
            get("max p̂"),
            get("H=0")
        ));
    }
    Ok((ok, format!("disjoint grids {disjoint}; {}", parts.join("; "))))
}

fn mittag_leffler_machinery() -> Outcome {
    let p11 = MittagLefflerParams::new(1.0, 1.0)?;
    let p21 = MittagLefflerParams::new(2.0, 1.0)?;
    let mut worst = 0.0f64;
    for k in 0..=200 {
        let z = 0.05 * k as f64;
        worst = worst.max(rel(mittag_leffler(p11, z)?, z.exp()));
        worst = worst.max(rel(mittag_leffler(p21, z * z)?, z.cosh()));
    }
    // g_1(z) = E_{1/2,1/2}(z) = 1/√π + z e^{z²} erfc(-z); at z = 25 erfc(-z) = 2 in f64
    let z: f64 = 25.0;
    let lg = ln_g_alpha(1.0, z)?;
    let closed = (lg - ((2.0 * z).ln() + z * z)).abs();
    // leading-order growth 2 e^{z²}, compared in log space
    let asym = (lg / (2f64.ln() + z * z) - 1.0).abs();
    let ok = worst <= 1e-10 && closed <= 1e-9 && asym <= 0.05;
    Ok((ok, format!("E11/E21 max relative {worst:.1e}; ln g_1(25) vs closed form {closed:.1e}, log ratio to 2e^625 off by {asym:.1e}")))
}

fn ks_one(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |m, (i, &y)| {
        let f = cdf(y);
        m.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn monte_carlo() -> Outcome {
    let (n, dt) = (100_000, 1e-3);
    let normal = Normal::standard();

    let cfg = SimConfig::new(CoefficientField::constant(-0.5)?, 1.0, 0.0, 1.0, dt, n, 101);
    let mut fin = simulate(&cfg)?.final_positions();
    let ks_rbm = ks_one(&mut fin, |y| normal.cdf(y - 1.0) + normal.cdf(y + 1.0) - 1.0);

    // |W| for planar W started at distance 1: Rice law with unit scale
    let mut cfg = SimConfig::new(CoefficientField::constant(-0.25)?, 1.0, 0.0, 1.0, dt, n, 102);
    cfg.drift = DriftForm::Doubled;
    let mut fin = simulate(&cfg)?.final_positions();
    let rice = |r: f64| r * (-(r - 1.0).powi(2) / 2.0).exp() * scaled_bessel_i(0.0, r);
    let grid: Vec<f64> = (0..=240).map(|k| 0.025 * k as f64).collect();
    let mut table = vec![0.0];
    for w in grid.windows(2) {
        table.push(table.last().unwrap() + tanh_sinh(&rice, w[0], w[1]));
    }
    let rice_cdf = |y: f64| {
        if y >= 6.0 {
            return 1.0;
        }
        let k = ((y / 0.025) as usize).min(239);
        table[k] + tanh_sinh(&rice, grid[k], y)
    };
    let ks_2d = ks_one(&mut fin, rice_cdf);

    let field = CoefficientField::sin_tx();
    let fs = Arc::new(fs_for(&field, 2.0)?);
    let cdf = density_cdf(&Density::for_fs(fs), 1.0, 1.0, 0.0, 0.25)?;
    let cfg = SimConfig::new(field.time_reversed(1.0), 1.0, 0.0, 1.0, dt, n, 103);
    let mut fin = simulate(&cfg)?.final_positions();
    let ks_fs = ks_one(&mut fin, |y| cdf.eval(y));

    let ok = ks_rbm <= 0.02 && ks_2d <= 0.02 && ks_fs <= 0.05;
    Ok((ok, format!("KS reflected BM {ks_rbm:.4}, |2-D BM| {ks_2d:.4}, SIN_TX p̂ {ks_fs:.4}")))
}

fn path_statistics() -> Outcome {
    let field = CoefficientField::constant(-0.5)?;
    let n = 4000;
    let run = |t_end: f64, dt: f64, stride: usize, seed: u64| {
        let mut c = SimConfig::new(field.clone(), 1.0, 0.0, t_end, dt, n, seed);
        c.record_stride = stride;
        simulate(&c)
    };
    let ratio = |a: f64, b: f64| a.max(b) / a.min(b);

    let coarse = run(1.0, 1e-3, 10, 201)?;
    let fine = run(1.0, 5e-4, 20, 202)?;
    let nu = (subgaussian_norm(&modulus_stat(&coarse)?)?, subgaussian_norm(&modulus_stat(&fine)?)?);

    let tau_norm = |dt: f64, seed: u64| -> singular_heat::Result<f64> {
        let ens = run(5.0, dt, (5.0 / dt) as usize, seed)?;
        subgaussian_norm(&running_max_stat(&ens)?)
    };
    let tau = (tau_norm(2e-3, 203)?, tau_norm(1e-3, 204)?);

    // (θ(t) - θ(s)) / √(t - s) over pairs with lags from 0.05 to 0.95
    let mut rng = ChaCha8Rng::seed_from_u64(205);
    let mut norms = Vec::new();
    for _ in 0..10 {
        let i = rng.random_range(0..90usize);
        let j = rng.random_range(i + 5..=100usize);
        norms.push(subgaussian_norm(&increment_stat(&fine, fine.times[i], fine.times[j])?)?);
    }
    let hi = norms.iter().cloned().fold(f64::MIN, f64::max);
    let lo = norms.iter().cloned().fold(f64::MAX, f64::min);
    let spread = hi / lo - 1.0;

    let finite = [nu.0, nu.1, tau.0, tau.1].iter().all(|v| v.is_finite() && *v > 0.0);
    let ok = finite && ratio(nu.0, nu.1) < 2.0 && ratio(tau.0, tau.1) < 2.0 && spread <= 0.3;
    Ok((
        ok,
        format!(
            "ν̂ {:.3}/{:.3}, τ̂ {:.3}/{:.3} (dt, dt/2); increment spread {spread:.3}",
            nu.0, nu.1, tau.0, tau.1
        ),
    ))
}

fn cauchy() -> Outcome {
    let fs = fs_for(&CoefficientField::sin_tx(), 2.0)?;
    let data = InitialData::new("bump", 0.5, |y| (-(y - 1.0) * (y - 1.0)).exp())?;
    let x = 0.8;
    let mut errs = Vec::new();
    for eps in [0.1, 0.03, 0.01, 0.003] {
        let u = solve_homogeneous(&fs, &data, 0.0, &[(eps, x)])?.values()[0];
        errs.push((u - data.eval(x)).abs());
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);

    let grid = [(0.5, 0.5), (0.5, 1.0), (0.5, 2.0), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0)];
    let one = InitialData::new("one", 0.5, |_| 1.0)?;
    let mass = solve_homogeneous(&fs, &one, 0.0, &grid)?
        .values()
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    let g = SourceTerm::new("one", 0.5, |_, _| 1.0)?;
    let duhamel = solve_inhomogeneous(&fs, &g, 0.0, &grid)?
        .points
        .iter()
        .map(|p| (p.u - p.t).abs())
        .fold(0.0, f64::max);
    let ok = monotone && mass <= 5e-3 && duhamel <= 5e-3;
    Ok((
        ok,
        format!("trace errors {}; f=1 max |u-1| {mass:.1e}; g=1 max |u-t| {duhamel:.1e}", errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>().join(" > ")),
    ))
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 12] = [
        ("constant-coefficient exactness", 10.0, constant_exactness),
        ("unit mass", 30.0, unit_mass),
        ("Bessel integral identity", 10.0, bessel_identity),
        ("Chapman-Kolmogorov", 300.0, chapman_kolmogorov),
        ("reflected Brownian reduction", 5.0, reflected_bm),
        ("PDE residual", 300.0, pde_residual),
        ("Volterra fixed point", 600.0, volterra),
        ("bound sandwich", 300.0, bound_sandwich),
        ("Mittag-Leffler machinery", 5.0, mittag_leffler_machinery),
        ("Monte Carlo oracle", 900.0, monte_carlo),
        ("path statistics", 600.0, path_statistics),
        ("delta family and Cauchy solvers", 300.0, cauchy),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.to_lowercase().contains(&f.to_lowercase())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && secs < *limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<32} {:>7.1}s / {:>4.0}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            name,
            secs,
            limit
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
