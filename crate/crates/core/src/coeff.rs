//! Variable coefficients `b(t, x)` together with their declared constants:
//! Hölder constant `H` and exponent `α`, and bounds `β <= b <= β₊`.
//!
//! Fields are evaluated as black boxes; the engine only ever needs values of
//! `b`. At `x = 0` the continuous extension of the formula is used.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr};

/// Serializable description of a field, stored in artifacts and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FieldSpec {
    Const { a: f64 },
    SinTx,
    SpaceBump,
    TimeRamp,
    Expr {
        expr: String,
        holder: f64,
        alpha: f64,
        beta: f64,
        beta_plus: f64,
    },
    TimeReversed { inner: Box<FieldSpec>, t_ref: f64 },
}

type CustomFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum FieldFn {
    Const(f64),
    SinTx,
    SpaceBump,
    TimeRamp,
    Expr(Expr),
    TimeReversed(Box<FieldFn>, f64),
    Custom(CustomFn),
}

impl FieldFn {
    fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            FieldFn::Const(a) => *a,
            FieldFn::SinTx => -0.5 + 0.2 * (t + x).sin(),
            FieldFn::SpaceBump => -0.5 + 0.3 * (-x * x).exp(),
            FieldFn::TimeRamp => -0.6 + 0.2 * t / (1.0 + t),
            FieldFn::Expr(e) => e.eval(t, x),
            FieldFn::TimeReversed(inner, t_ref) => inner.eval((t_ref - t).max(0.0), x),
            FieldFn::Custom(f) => f(t, x),
        }
    }
}

/// A coefficient `b(t, x)` with its declared regularity and bounds.
#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    spec: Option<FieldSpec>,
    func: FieldFn,
    holder: f64,
    alpha: f64,
    beta: f64,
    beta_plus: f64,
    growth_margin: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("holder", &self.holder)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("beta_plus", &self.beta_plus)
            .field("growth_margin", &self.growth_margin)
            .finish()
    }
}

/// Default growth margin `Δ` for Cauchy data.
pub const DEFAULT_GROWTH_MARGIN: f64 = 0.5;

fn check_constants(holder: f64, alpha: f64, beta: f64, beta_plus: f64) -> Result<()> {
    if !(holder >= 0.0 && holder.is_finite()) {
        return Err(Error::Parameter(format!("Hölder constant {holder} must be finite and >= 0")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("Hölder exponent {alpha} must lie in (0, 1]")));
    }
    if !(beta > -1.0 && beta <= beta_plus && beta_plus < 0.0) {
        return Err(Error::Parameter(format!(
            "bounds must satisfy -1 < beta <= beta_plus < 0, got [{beta}, {beta_plus}]"
        )));
    }
    Ok(())
}

impl CoefficientField {
    fn build(name: &str, spec: Option<FieldSpec>, func: FieldFn, holder: f64, alpha: f64, beta: f64, beta_plus: f64) -> Result<Self> {
        check_constants(holder, alpha, beta, beta_plus)?;
        Ok(Self {
            name: name.to_string(),
            spec,
            func,
            holder,
            alpha,
            beta,
            beta_plus,
            growth_margin: DEFAULT_GROWTH_MARGIN,
        })
    }

    /// `b ≡ a` for `a ∈ (-1, 0)`.
    pub fn constant(a: f64) -> Result<Self> {
        Self::build(&format!("CONST({a})"), Some(FieldSpec::Const { a }), FieldFn::Const(a), 0.0, 1.0, a, a)
    }

    /// `b(t,x) = -0.5 + 0.2 sin(t + x)`.
    pub fn sin_tx() -> Self {
        Self::build("SIN_TX", Some(FieldSpec::SinTx), FieldFn::SinTx, 0.2, 1.0, -0.7, -0.3).expect("valid constants")
    }

    /// `b(t,x) = -0.5 + 0.3 e^{-x²}`; Lipschitz constant `0.3 √2 e^{-1/2}`.
    pub fn space_bump() -> Self {
        let h = 0.3 * 2f64.sqrt() * (-0.5f64).exp();
        Self::build("SPACE_BUMP", Some(FieldSpec::SpaceBump), FieldFn::SpaceBump, h, 1.0, -0.5, -0.2).expect("valid constants")
    }

    /// `b(t,x) = -0.6 + 0.2 t / (1 + t)`.
    pub fn time_ramp() -> Self {
        Self::build("TIME_RAMP", Some(FieldSpec::TimeRamp), FieldFn::TimeRamp, 0.2, 1.0, -0.6, -0.4).expect("valid constants")
    }

    /// Field given by an expression over `t` and `x` with user-declared constants.
    pub fn from_expr(src: &str, holder: f64, alpha: f64, beta: f64, beta_plus: f64) -> Result<Self> {
        let e = expr::parse(src)?;
        let spec = FieldSpec::Expr {
            expr: src.to_string(),
            holder,
            alpha,
            beta,
            beta_plus,
        };
        Self::build(src, Some(spec), FieldFn::Expr(e), holder, alpha, beta, beta_plus)
    }

    /// Field given by an arbitrary closure. Such fields cannot be serialized.
    pub fn custom(
        name: &str,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        holder: f64,
        alpha: f64,
        beta: f64,
        beta_plus: f64,
    ) -> Result<Self> {
        Self::build(name, None, FieldFn::Custom(Arc::new(f)), holder, alpha, beta, beta_plus)
    }

    pub fn from_spec(spec: &FieldSpec) -> Result<Self> {
        match spec {
            FieldSpec::Const { a } => Self::constant(*a),
            FieldSpec::SinTx => Ok(Self::sin_tx()),
            FieldSpec::SpaceBump => Ok(Self::space_bump()),
            FieldSpec::TimeRamp => Ok(Self::time_ramp()),
            FieldSpec::Expr {
                expr,
                holder,
                alpha,
                beta,
                beta_plus,
            } => Self::from_expr(expr, *holder, *alpha, *beta, *beta_plus),
            FieldSpec::TimeReversed { inner, t_ref } => Ok(Self::from_spec(inner)?.time_reversed(*t_ref)),
        }
    }

    /// `(r, x) ↦ b(t_ref - r, x)`, the coefficient seen by a path simulated
    /// forward from time `t_ref` down to earlier source times.
    pub fn time_reversed(&self, t_ref: f64) -> Self {
        let mut out = self.clone();
        out.name = format!("{}@rev({t_ref})", self.name);
        out.func = FieldFn::TimeReversed(Box::new(self.func.clone()), t_ref);
        out.spec = self.spec.clone().map(|s| FieldSpec::TimeReversed { inner: Box::new(s), t_ref });
        out
    }

    pub fn with_growth_margin(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("growth margin {delta} must lie in (0, 1)")));
        }
        self.growth_margin = delta;
        Ok(self)
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.func.eval(t, x)
    }

    /// `Some(a)` when the field is identically `a`.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.func {
            FieldFn::Const(a) => Some(*a),
            FieldFn::Expr(e) if e.is_constant() => Some(e.eval(0.0, 0.0)),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> Option<&FieldSpec> {
        self.spec.as_ref()
    }

    pub fn holder(&self) -> f64 {
        self.holder
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn beta_plus(&self) -> f64 {
        self.beta_plus
    }

    pub fn growth_margin(&self) -> f64 {
        self.growth_margin
    }
}

/// Catalog lookup. `CONST` needs the parameter `a`.
pub fn builtin_field(name: &str, a: Option<f64>) -> Result<CoefficientField> {
    match name.to_ascii_uppercase().as_str() {
        "CONST" => {
            let a = a.ok_or_else(|| Error::Parameter("CONST needs a value for a".into()))?;
            CoefficientField::constant(a)
        }
        "SIN_TX" => Ok(CoefficientField::sin_tx()),
        "SPACE_BUMP" => Ok(CoefficientField::space_bump()),
        "TIME_RAMP" => Ok(CoefficientField::time_ramp()),
        other => Err(Error::Parameter(format!("unknown field '{other}'"))),
    }
}

/// The built-in test fields, with `CONST` instantiated at `a = -1/2`.
pub fn builtin_fields() -> Vec<CoefficientField> {
    vec![
        CoefficientField::constant(-0.5).expect("valid"),
        CoefficientField::sin_tx(),
        CoefficientField::space_bump(),
        CoefficientField::time_ramp(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub ok: bool,
    pub worst_low: f64,
    pub worst_high: f64,
}

/// Check `β <= b <= β₊` on the sampled points.
pub fn validate_bounds(field: &CoefficientField, grid: &[(f64, f64)]) -> BoundsReport {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &(t, x) in grid {
        let v = field.eval(t, x);
        lo = lo.min(v);
        hi = hi.max(v);
        if v.is_nan() {
            return BoundsReport {
                ok: false,
                worst_low: f64::NAN,
                worst_high: f64::NAN,
            };
        }
    }
    let ok = !grid.is_empty() && lo >= field.beta && hi <= field.beta_plus && field.beta > -1.0 && field.beta_plus < 0.0;
    BoundsReport {
        ok,
        worst_low: lo,
        worst_high: hi,
    }
}

/// Empirical Hölder constant `max |b(t,x) - b(s,y)| / (|t-s| + |x-y|)^α`.
pub fn estimate_holder(field: &CoefficientField, pairs: &[((f64, f64), (f64, f64))]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &((t, x), (s, y)) in pairs {
        let d = (t - s).abs() + (x - y).abs();
        if d == 0.0 {
            return Err(Error::Domain(format!("degenerate pair at ({t}, {x})")));
        }
        let r = (field.eval(t, x) - field.eval(s, y)).abs() / d.powf(field.alpha);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Tensor grid of `nt × nx` points over `[t0, t1] × (0, x1]`.
pub fn sample_grid(t1: f64, x1: f64, nt: usize, nx: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(nt * nx);
    for i in 0..nt {
        let t = t1 * i as f64 / (nt.max(2) - 1) as f64;
        for j in 1..=nx {
            out.push((t, x1 * j as f64 / nx as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn catalog_examples() {
        assert_eq!(CoefficientField::constant(-0.5).unwrap().eval(3.0, 7.0), -0.5);
        assert!((CoefficientField::space_bump().eval(1.0, 1e-12) + 0.2).abs() < 1e-12);
        let r = validate_bounds(&CoefficientField::time_ramp(), &sample_grid(5.0, 5.0, 100, 100));
        assert!(r.ok);
        assert!(CoefficientField::constant(0.1).is_err());
        assert!(builtin_field("NOPE", None).is_err());
        assert!(builtin_field("CONST", None).is_err());
        assert_eq!(builtin_field("const", Some(-0.3)).unwrap().constant_value(), Some(-0.3));
    }

    #[test]
    fn bounds_validation() {
        let c = CoefficientField::constant(-0.5).unwrap();
        assert!(validate_bounds(&c, &sample_grid(1.0, 1.0, 3, 3)).ok);
        let bad = CoefficientField::from_expr("-0.5 + 0.6 * sin(x)", 0.6, 1.0, -0.9, -0.1).unwrap();
        let r = validate_bounds(&bad, &sample_grid(5.0, 5.0, 50, 50));
        assert!(!r.ok && r.worst_high > 0.09);
        assert!(validate_bounds(&CoefficientField::sin_tx(), &sample_grid(5.0, 5.0, 50, 50)).ok);
        assert!(!validate_bounds(&c, &[]).ok);
    }

    #[test]
    fn catalog_fields_on_dense_grid() {
        let g = sample_grid(5.0, 5.0, 200, 200);
        for f in builtin_fields() {
            assert!(validate_bounds(&f, &g).ok, "{}", f.name());
        }
    }

    #[test]
    fn holder_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<_> = (0..10_000)
            .map(|_| {
                (
                    (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)),
                    (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)),
                )
            })
            .collect();
        for f in builtin_fields() {
            let h = estimate_holder(&f, &pairs).unwrap();
            assert!(h <= f.holder() + 1e-12, "{}: {h} > {}", f.name(), f.holder());
        }
        assert_eq!(estimate_holder(&CoefficientField::constant(-0.4).unwrap(), &pairs).unwrap(), 0.0);
        let half = CoefficientField::from_expr("-0.5 + 0.2 * sin(t + x)", 0.283, 0.5, -0.7, -0.3).unwrap();
        let near: Vec<_> = pairs
            .iter()
            .map(|&((t, x), (s, y))| ((t, x), (t + (s - t) / 10.0, x + (y - x) / 10.0)))
            .collect();
        assert!(estimate_holder(&half, &near).unwrap() <= 0.283);
        assert!(estimate_holder(&half, &[((1.0, 1.0), (1.0, 1.0))]).is_err());
    }

    #[test]
    fn spec_round_trip_and_reversal() {
        for f in builtin_fields() {
            let spec = f.spec().unwrap().clone();
            let json = serde_json::to_string(&spec).unwrap();
            let back: FieldSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
            let g = CoefficientField::from_spec(&back).unwrap();
            assert_eq!(g.eval(0.3, 1.7), f.eval(0.3, 1.7));
        }
        let r = CoefficientField::sin_tx().time_reversed(2.0);
        assert_eq!(r.eval(0.5, 1.0), CoefficientField::sin_tx().eval(1.5, 1.0));
        let r2 = CoefficientField::from_spec(r.spec().unwrap()).unwrap();
        assert_eq!(r2.eval(0.5, 1.0), r.eval(0.5, 1.0));
        let c = CoefficientField::custom("c", |_, x| -0.5 + 0.0 * x, 0.0, 1.0, -0.5, -0.5).unwrap();
        assert!(c.spec().is_none());
    }
}
