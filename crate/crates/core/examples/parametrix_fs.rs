//! Assemble the parametrix for SIN_TX, compare it with the frozen kernel,
//! check the fixed-point equation and round-trip the artifact.

use singular_heat::coeff::CoefficientField;
use singular_heat::kernels::{bessel_kernel, KernelArgs};
use singular_heat::parametrix::{assemble_fs, FundamentalSolutionApprox, QuadratureSpec, SeriesControl};
use singular_heat::specfun::BesselOrder;

fn main() -> singular_heat::Result<()> {
    let field = CoefficientField::sin_tx();
    let fs = assemble_fs(&field, QuadratureSpec::default(), SeriesControl::default(), 2.0)?;
    let (s, y) = (0.0, 1.0);
    let frozen = BesselOrder::new(field.eval(s, y))?;

    println!("{:>5} {:>5} {:>12} {:>12} {:>12}", "t", "x", "p̂", "p_frozen", "Φ");
    for t in [0.3, 0.8, 1.5] {
        for x in [0.5, 1.0, 2.0] {
            println!(
                "{t:>5} {x:>5} {:12.6} {:12.6} {:12.3e}",
                fs.evaluate(t, x, s, y)?,
                bessel_kernel(frozen, KernelArgs::new(t, x, s, y)?)?,
                fs.phi(t, x, s, y)?
            );
        }
    }
    println!("series terms {}, tail {:.2e}", fs.terms_used(), fs.tail_estimate());

    let r = fs.volterra_residual(1.0, 1.2, s, y)?;
    println!("Φ = K + K*Φ at (1, 1.2): Φ = {:.6e}, relative residual {:.2e}", r.phi, r.relative);

    let path = std::env::temp_dir().join("sin_tx_fs.json");
    fs.save(&path)?;
    let back = FundamentalSolutionApprox::load(&path)?;
    let same = back.evaluate(0.8, 1.0, s, y)?.to_bits() == fs.evaluate(0.8, 1.0, s, y)?.to_bits();
    println!("artifact {} reloads bit-exactly: {same}", path.display());
    Ok(())
}
