//! Simulate the reflected process, compare its marginal with the closed
//! form and report the path statistics.

use singular_heat::coeff::CoefficientField;
use singular_heat::montecarlo::{
    empirical_density, ks_one_sample, modulus_stat, reflected_bm_cdf, running_max_stat, simulate, subgaussian_norm,
    BinSpec, SimConfig,
};

fn main() -> singular_heat::Result<()> {
    let mut cfg = SimConfig::new(CoefficientField::constant(-0.5)?, 1.0, 0.0, 1.0, 1e-3, 20_000, 7);
    cfg.record_stride = 10;
    let ens = simulate(&cfg)?;

    let fin = ens.final_positions();
    println!("KS vs reflected BM: {:.4}", ks_one_sample(&fin, |y| reflected_bm_cdf(1.0, 1.0, y)));

    let table = empirical_density(&ens, 1.0, BinSpec { lo: 0.0, hi: 4.0, n: 8 })?;
    for k in 0..table.density.len() {
        println!(
            "[{:.1}, {:.1})  {:.4} ± {:.4}",
            table.edges[k],
            table.edges[k + 1],
            table.density[k],
            table.std_err[k]
        );
    }

    println!("ν̂ subgaussian norm: {:.4}", subgaussian_norm(&modulus_stat(&ens)?)?);
    println!("τ̂ subgaussian norm: {:.4}", subgaussian_norm(&running_max_stat(&ens)?)?);
    Ok(())
}
