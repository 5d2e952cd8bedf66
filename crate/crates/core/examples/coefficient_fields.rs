//! The catalog fields, a user expression and their declared bounds.

use singular_heat::coeff::{builtin_fields, estimate_holder, sample_grid, validate_bounds, CoefficientField};

fn main() -> singular_heat::Result<()> {
    let grid = sample_grid(5.0, 10.0, 100, 100);
    let mut fields = builtin_fields();
    fields.push(CoefficientField::from_expr("-0.5 + 0.15*exp(-x)*cos(3*t)", 1.0, 1.0, -0.65, -0.35)?);

    for f in &fields {
        let rep = validate_bounds(f, &grid);
        println!(
            "{:<12} b(0,1) = {:+.4}  β = {:+.2}  β₊ = {:+.2}  bounds ok: {}  (min {:+.4}, max {:+.4})",
            f.name(),
            f.eval(0.0, 1.0),
            f.beta(),
            f.beta_plus(),
            rep.ok,
            rep.worst_low,
            rep.worst_high
        );
    }

    // empirical Hölder constant from nearby pairs
    let pairs: Vec<_> = (1..40)
        .map(|k| {
            let x = 0.1 * k as f64;
            ((0.3, x), (0.31, x + 0.01))
        })
        .collect();
    let sin = CoefficientField::sin_tx();
    println!("SIN_TX: declared H = {}, sampled H ≈ {:.4}", sin.holder(), estimate_holder(&sin, &pairs)?);
    Ok(())
}
