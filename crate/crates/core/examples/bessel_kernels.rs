//! The reflected Bessel kernels: a density profile, its mass and the
//! reflected Brownian special case.

use singular_heat::kernels::{bessel_kernel, bessel_kernel_cdf, reflected_bm_kernel, KernelArgs};
use singular_heat::specfun::BesselOrder;

fn main() -> singular_heat::Result<()> {
    let (t, x) = (1.0, 0.8);
    println!("{:>6} {:>12} {:>12} {:>12}", "y", "a=-0.9", "a=-0.5", "a=-0.1");
    for k in 1..=12 {
        let y = 0.25 * k as f64;
        let row: Vec<String> = [-0.9, -0.5, -0.1]
            .iter()
            .map(|&a| Ok(format!("{:12.6}", bessel_kernel(BesselOrder::new(a)?, KernelArgs::new(t, x, 0.0, y)?)?)))
            .collect::<singular_heat::Result<_>>()?;
        println!("{y:>6.2} {}", row.join(" "));
    }

    for a in [-0.9, -0.5, -0.1] {
        println!("a = {a:>5}: mass on [0, 12] = {:.12}", bessel_kernel_cdf(a, t, x, 12.0)?);
    }

    let g = KernelArgs::new(1.3, 0.7, 0.2, 1.1)?;
    println!(
        "a = -1/2 vs reflected BM: {:.15e} {:.15e}",
        bessel_kernel(BesselOrder::new(-0.5)?, g)?,
        reflected_bm_kernel(g)?
    );
    Ok(())
}
