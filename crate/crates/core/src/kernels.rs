//! Closed-form transition kernels.
//!
//! `p_a(t,x,s,y) = τ⁻¹ x^{-a} y^{a+1} e^{-(x²+y²)/2τ} I_a(xy/τ)`, `τ = t - s`, is the
//! transition density of the Bessel process of index `a ∈ (-1, 0)` reflected
//! at the origin, i.e. the fundamental solution of
//! `∂_t u = ½ ∂²_x u + ((1+2a)/(2x)) ∂_x u`.
//!
//! Two evaluation regimes are used. For `z = xy/τ <= 20` the kernel is written
//! through the entire function `Λ_a(z) = (z/2)^{-a} I_a(z)`, which stays finite
//! down to `x = 0`. Above that the exponentially scaled Bessel function absorbs
//! the growth of `I_a`, and the Gaussian factor becomes `e^{-(x-y)²/2τ}`.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::specfun::{bessel_reduced, bessel_reduced_pair, bessel_scaled_pair_raw, bessel_scaled_raw, BesselOrder, BESSEL_SWITCH};

/// Time-space arguments `(t, x, s, y)` of a transition kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelArgs {
    pub t: f64,
    pub x: f64,
    pub s: f64,
    pub y: f64,
}

impl KernelArgs {
    pub fn new(t: f64, x: f64, s: f64, y: f64) -> Result<Self> {
        if !(t > s && s >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("need t > s >= 0, got t = {t}, s = {s}")));
        }
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::Domain(format!("need x, y > 0, got x = {x}, y = {y}")));
        }
        Ok(Self { t, x, s, y })
    }

    pub fn tau(&self) -> f64 {
        self.t - self.s
    }
}

/// Parameters of the bound kernel `p_β(t, (1-δ)x, s, (1-δ)y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub delta: f64,
    pub beta: f64,
    pub cal_const: f64,
}

impl BoundParams {
    pub fn new(delta: f64, beta: f64, cal_const: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("delta = {delta} must lie in (0, 1)")));
        }
        if !(beta > -1.0 && beta < 0.0) {
            return Err(Error::Parameter(format!("beta = {beta} must lie in (-1, 0)")));
        }
        if !(cal_const > 0.0 && cal_const.is_finite()) {
            return Err(Error::Parameter(format!("cal_const = {cal_const} must be finite and > 0")));
        }
        Ok(Self { delta, beta, cal_const })
    }
}

fn kernel_order(a: BesselOrder) -> Result<f64> {
    let v = a.value();
    if v < 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!("kernel order a = {v} must lie in (-1, 0)")))
    }
}

/// Gauss kernel `(2πτ)^{-1/2} e^{-(x-y)²/2τ}` on the whole line.
pub fn gauss_kernel(t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
    if !(t > s) {
        return Err(Error::Domain(format!("need t > s, got t = {t}, s = {s}")));
    }
    let tau = t - s;
    let d = x - y;
    Ok((-d * d / (2.0 * tau)).exp() / (2.0 * PI * tau).sqrt())
}

/// `p_a(τ; x, y)` without argument checks. Valid for `x >= 0`, `y > 0`, `τ > 0`.
#[inline]
pub(crate) fn p_bessel(a: f64, tau: f64, x: f64, y: f64) -> f64 {
    let z = x * y / tau;
    if z <= BESSEL_SWITCH {
        let ln_pref = (2.0 * a + 1.0) * y.ln() - a * LN_2 - (a + 1.0) * tau.ln() - (x * x + y * y) / (2.0 * tau);
        ln_pref.exp() * bessel_reduced(a, z)
    } else {
        let d = x - y;
        let ln_pref = -d * d / (2.0 * tau) - tau.ln() - a * x.ln() + (a + 1.0) * y.ln();
        ln_pref.exp() * bessel_scaled_raw(a, z)
    }
}

/// `x⁻¹ ∂_x p_a(τ; x, y)` without argument checks; finite at `x = 0`.
#[inline]
pub(crate) fn p_bessel_dx_over_x(a: f64, tau: f64, x: f64, y: f64) -> f64 {
    let z = x * y / tau;
    if z <= BESSEL_SWITCH {
        let (l0, l1) = bessel_reduced_pair(a, z);
        let ln_pref = (2.0 * a + 1.0) * y.ln() - a * LN_2 - (a + 2.0) * tau.ln() - (x * x + y * y) / (2.0 * tau);
        ln_pref.exp() * (y * y / (2.0 * tau) * l1 - l0)
    } else {
        p_bessel_dx(a, tau, x, y) / x
    }
}

/// `∂_x p_a(τ; x, y)` without argument checks.
#[inline]
pub(crate) fn p_bessel_dx(a: f64, tau: f64, x: f64, y: f64) -> f64 {
    let z = x * y / tau;
    if z <= BESSEL_SWITCH {
        x * p_bessel_dx_over_x(a, tau, x, y)
    } else {
        let (s0, s1) = bessel_scaled_pair_raw(a, z);
        let d = x - y;
        let ln_pref = -d * d / (2.0 * tau) - tau.ln() - a * x.ln() + (a + 1.0) * y.ln();
        ln_pref.exp() * (y * s1 - x * s0) / tau
    }
}

/// Reflected Bessel kernel `p_a(t,x,s,y)` for `a ∈ (-1, 0)`.
pub fn bessel_kernel(a: BesselOrder, args: KernelArgs) -> Result<f64> {
    let a = kernel_order(a)?;
    Ok(p_bessel(a, args.tau(), args.x, args.y))
}

/// Spatial derivative `∂_x p_a(t,x,s,y)`.
pub fn bessel_kernel_dx(a: BesselOrder, args: KernelArgs) -> Result<f64> {
    let a = kernel_order(a)?;
    Ok(p_bessel_dx(a, args.tau(), args.x, args.y))
}

/// Reflected Brownian kernel, the case `a = -1/2`.
pub fn reflected_bm_kernel(args: KernelArgs) -> Result<f64> {
    let tau = args.tau();
    let (m, p) = (args.x - args.y, args.x + args.y);
    Ok(((-m * m / (2.0 * tau)).exp() + (-p * p / (2.0 * tau)).exp()) / (2.0 * PI * tau).sqrt())
}

/// Bound kernel `p_β(t, (1-δ)x, s, (1-δ)y)`.
pub fn bound_kernel(params: &BoundParams, args: KernelArgs) -> Result<f64> {
    let c = 1.0 - params.delta;
    Ok(p_bessel(params.beta, args.tau(), c * args.x, c * args.y))
}

/// Cumulative distribution `∫_0^y p_a(τ; x, y') dy'` by adaptive quadrature.
pub fn bessel_kernel_cdf(a: f64, tau: f64, x: f64, y: f64) -> Result<f64> {
    if y <= 0.0 {
        return Ok(0.0);
    }
    let v = crate::quad::integrate_from_origin(|u| p_bessel(a, tau, x, u), 2.0 * a + 1.0, y, 1e-13, 1e-11)?;
    Ok(v.value.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_adaptive, integrate_from_origin};
    use crate::specfun::bessel_i_scaled;
    use proptest::prelude::*;

    fn ord(a: f64) -> BesselOrder {
        BesselOrder::new(a).unwrap()
    }

    fn args(t: f64, x: f64, s: f64, y: f64) -> KernelArgs {
        KernelArgs::new(t, x, s, y).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn mass(a: f64, tau: f64, x: f64) -> f64 {
        let l = x + 12.0 * tau.sqrt() + 1.0;
        integrate_from_origin(|y| p_bessel(a, tau, x, y), 2.0 * a + 1.0, l, 1e-14, 1e-12)
            .unwrap()
            .value
    }

    #[test]
    fn gauss_examples() {
        assert!(rel(gauss_kernel(1.0, 0.0, 0.0, 0.0).unwrap(), 0.398_942_280_401_43) < 1e-13);
        assert!(rel(gauss_kernel(2.0, 0.3, 0.0, 0.3).unwrap(), 0.282_094_791_773_88) < 1e-13);
        let m = integrate_adaptive(|y| gauss_kernel(1.0, 0.0, 0.0, y).unwrap(), -15.0, 15.0, 1e-14, 1e-13, 100).unwrap();
        assert!((m.value - 1.0).abs() < 1e-10);
        assert!(gauss_kernel(1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn reflected_examples() {
        let closed = (1.0 + (-2f64).exp()) / (2.0 * PI).sqrt();
        assert!(rel(reflected_bm_kernel(args(1.0, 1.0, 0.0, 1.0)).unwrap(), closed) < 1e-14);
        assert!(rel(bessel_kernel(ord(-0.5), args(1.0, 1.0, 0.0, 1.0)).unwrap(), closed) < 1e-13);
        assert!(reflected_bm_kernel(args(1.0, 1.0, 0.0, 60.0)).unwrap() < 1e-300);
        let m = integrate_adaptive(|y| reflected_bm_kernel(args(1.0, 0.5, 0.0, y)).unwrap(), 1e-300, 14.0, 1e-14, 1e-13, 200).unwrap();
        assert!((m.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn argument_errors() {
        assert!(KernelArgs::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(KernelArgs::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(KernelArgs::new(1.0, 1.0, 0.0, -1.0).is_err());
        assert!(bessel_kernel(ord(0.0), args(1.0, 1.0, 0.0, 1.0)).is_err());
        assert!(bessel_kernel(ord(0.3), args(1.0, 1.0, 0.0, 1.0)).is_err());
        assert!(BoundParams::new(0.0, -0.5, 1.0).is_err());
        assert!(BoundParams::new(0.5, 0.0, 1.0).is_err());
        assert!(BoundParams::new(0.5, -0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn unit_mass_grid() {
        for &a in &[-0.9, -0.5, -0.25, -0.1] {
            for &tau in &[0.1, 1.0, 10.0] {
                for &x in &[0.1, 1.0, 5.0] {
                    let m = mass(a, tau, x);
                    assert!((m - 1.0).abs() < 1e-8, "a={a} tau={tau} x={x}: {m}");
                }
            }
        }
    }

    #[test]
    fn bessel_integral_identity() {
        for &w in &[0.5f64, 1.0, 2.0] {
            for &a in &[-0.9, -0.5, -0.1] {
                let l = 2.0 / w + 14.0 / w.sqrt();
                let f = |z: f64| z.powf(a + 1.0) * (z - w * z * z / 2.0).exp() * bessel_i_scaled(ord(a), z).unwrap();
                let v = integrate_from_origin(f, 2.0 * a + 1.0, l, 1e-14, 1e-12).unwrap().value;
                let exact = w.powf(-a - 1.0) * (0.5 / w).exp();
                assert!(rel(v, exact) < 1e-8, "w={w} a={a}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        let cases: [(f64, f64, f64, f64, f64); 5] = [(2.0, 1.1, 0.3, 0.8, 1.4), (1.0, 0.5, 0.0, 0.2, 2.0), (3.0, 0.4, 0.1, 2.5, 0.6), (1.5, 1.0, 0.5, 0.05, 0.05), (4.0, 2.0, 0.0, 3.0, 1.0)];
        for &a in &[-0.9, -0.5, -0.1] {
            for &(t, v, s, x, y) in &cases {
                let l = x + y + 12.0 * (t - s).sqrt();
                let f = |z: f64| p_bessel(a, t - v, x, z) * p_bessel(a, v - s, z, y);
                let lhs = integrate_from_origin(f, 2.0 * a + 1.0, l, 1e-15, 1e-10).unwrap().value;
                let rhs = p_bessel(a, t - s, x, y);
                assert!(rel(lhs, rhs) < 1e-6, "a={a} {:?}: {lhs} vs {rhs}", (t, v, s, x, y));
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let d = bessel_kernel_dx(ord(-0.5), args(1.0, 1.0, 0.0, 1.0)).unwrap();
        let closed = -2.0 * (-2f64).exp() / (2.0 * PI).sqrt();
        assert!(rel(d, closed) < 1e-12);
        let (a, tau, x, y) = (-0.3, 0.5, 0.7, 1.2);
        let h = 1e-5;
        let fd = (p_bessel(a, tau, x + h, y) - p_bessel(a, tau, x - h, y)) / (2.0 * h);
        assert!(rel(p_bessel_dx(a, tau, x, y), fd) < 1e-6);
    }

    #[test]
    fn derivative_fd_grid_both_regimes() {
        for &a in &[-0.9, -0.5, -0.1] {
            for &(tau, x, y) in &[(1.0, 0.3, 0.5), (0.05, 1.0, 1.1), (0.02, 1.0, 0.95), (2.0, 4.0, 3.0), (0.1, 3.0, 3.2)] {
                let h = 1e-5 * x;
                let fd = (p_bessel(a, tau, x + h, y) - p_bessel(a, tau, x - h, y)) / (2.0 * h);
                let an = p_bessel_dx(a, tau, x, y);
                assert!((an - fd).abs() <= 1e-6 * fd.abs().max(1e-3 * p_bessel(a, tau, x, y)), "a={a} {:?}", (tau, x, y));
            }
        }
    }

    #[test]
    fn reflection_at_origin() {
        for &a in &[-0.9, -0.5, -0.25, -0.1] {
            let mut prev = f64::INFINITY;
            for k in 2..=5 {
                let x = 10f64.powi(-k);
                let v = (x.powf(1.0 - 2.0 * a) * p_bessel_dx(a, 1.0, x, 1.0)).abs();
                assert!(v < prev, "a={a} k={k}");
                prev = v;
            }
            assert!(prev < 1e-5);
        }
    }

    #[test]
    fn pde_residual_is_second_order() {
        let a = -0.3;
        let res = |h: f64| {
            let mut worst: f64 = 0.0;
            for &(tau, x) in &[(0.3, 0.4), (0.5, 1.0), (1.0, 2.0), (2.0, 0.7)] {
                let y = 1.0;
                let p = |t: f64, x: f64| p_bessel(a, t, x, y);
                let pt = (p(tau + h, x) - p(tau - h, x)) / (2.0 * h);
                let px = (p(tau, x + h) - p(tau, x - h)) / (2.0 * h);
                let pxx = (p(tau, x + h) - 2.0 * p(tau, x) + p(tau, x - h)) / (h * h);
                worst = worst.max((pt - 0.5 * pxx - (1.0 + 2.0 * a) / (2.0 * x) * px).abs());
            }
            worst
        };
        let (r1, r2) = (res(0.02), res(0.01));
        assert!(r1 < 0.05 && (r1 / r2).log2() > 1.8, "{r1} {r2}");
    }

    #[test]
    fn bound_kernel_examples() {
        let p = BoundParams::new(0.5, -0.5, 1.0).unwrap();
        let v = bound_kernel(&p, args(1.0, 2.0, 0.0, 2.0)).unwrap();
        assert!(rel(v, reflected_bm_kernel(args(1.0, 1.0, 0.0, 1.0)).unwrap()) < 1e-13);
        let p = BoundParams::new(1e-9, -0.4, 1.0).unwrap();
        let a = args(1.3, 0.8, 0.2, 1.1);
        assert!(rel(bound_kernel(&p, a).unwrap(), bessel_kernel(ord(-0.4), a).unwrap()) < 1e-6);
    }

    #[test]
    fn cdf_reaches_one() {
        assert!((bessel_kernel_cdf(-0.3, 1.0, 1.0, 20.0).unwrap() - 1.0).abs() < 1e-10);
        let c = bessel_kernel_cdf(-0.5, 1.0, 1.0, 1.0).unwrap();
        let erf = statrs::function::erf::erf;
        let closed = 0.5 * (erf(0.0) + erf(2.0 / 2f64.sqrt()));
        assert!((c - closed).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn diffusive_scaling(a in -0.95f64..-0.05, tau in 0.01f64..5.0, x in 0.01f64..5.0, y in 0.01f64..5.0) {
            let c: f64 = 4.0;
            let lhs = p_bessel(a, c * tau, c.sqrt() * x, c.sqrt() * y) * c.sqrt();
            let rhs = p_bessel(a, tau, x, y);
            prop_assert!((lhs - rhs).abs() <= 1e-11 * rhs.max(1e-300));
        }

        #[test]
        fn positive_and_finite(a in -0.99f64..-0.01, tau in 1e-3f64..50.0, x in 1e-4f64..50.0, y in 1e-4f64..50.0) {
            let v = p_bessel(a, tau, x, y);
            prop_assert!(v.is_finite() && v >= 0.0);
            prop_assert!(p_bessel_dx(a, tau, x, y).is_finite());
        }

        #[test]
        fn bound_kernel_positive(d in 0.01f64..0.99, b in -0.99f64..-0.01, tau in 0.01f64..5.0, x in 0.01f64..5.0, y in 0.01f64..5.0) {
            let p = BoundParams::new(d, b, 1.0).unwrap();
            prop_assert!(bound_kernel(&p, args(tau, x, 0.0, y)).unwrap() > 0.0);
        }

        #[test]
        fn regimes_agree_at_switch(a in -0.95f64..-0.05, tau in 0.1f64..3.0) {
            let x = 2.0;
            let y = BESSEL_SWITCH * tau / x;
            let lo = p_bessel(a, tau, x, y * (1.0 - 1e-12));
            let hi = p_bessel(a, tau, x, y * (1.0 + 1e-12));
            prop_assert!((lo - hi).abs() <= 1e-9 * lo);
        }

        #[test]
        fn matches_reflected_closed_form(tau in 0.01f64..10.0, x in 0.01f64..10.0, y in 0.01f64..10.0) {
            let a = args(tau, x, 0.0, y);
            let r = reflected_bm_kernel(a).unwrap();
            let b = bessel_kernel(ord(-0.5), a).unwrap();
            prop_assert!((r - b).abs() <= 1e-12 * r.max(1e-300));
        }
    }
}
