//! Gamma, modified Bessel and Mittag-Leffler functions at a few points.

use singular_heat::specfun::{bessel_i, bessel_i_scaled, g_alpha, gamma, mittag_leffler, BesselOrder, MittagLefflerParams};

fn main() -> singular_heat::Result<()> {
    println!("Γ(1/2) = {:.15}  (√π = {:.15})", gamma(0.5)?, std::f64::consts::PI.sqrt());

    for a in [-0.9, -0.5, -0.1] {
        let ord = BesselOrder::new(a)?;
        println!(
            "a = {a:>5}: I_a(1) = {:.12e}  e^-30 I_a(30) = {:.12e}",
            bessel_i(ord, 1.0)?,
            bessel_i_scaled(ord, 30.0)?
        );
    }

    let e21 = MittagLefflerParams::new(2.0, 1.0)?;
    for z in [0.5f64, 2.0, 5.0] {
        println!("E_2,1({:>5}) = {:.12}  cosh({z}) = {:.12}", z * z, mittag_leffler(e21, z * z)?, z.cosh());
    }
    // the series majorant grows like exp(z^{2/α})
    for z in [1.0, 3.0, 10.0] {
        println!("g_1({z:>4}) = {:.6e}", g_alpha(1.0, z)?);
    }
    Ok(())
}
