//! Cauchy problems with the assembled fundamental solution: unit data,
//! a Gaussian bump, and a unit source term.

use singular_heat::cauchy::{solve_homogeneous, solve_inhomogeneous, InitialData, SourceTerm};
use singular_heat::coeff::CoefficientField;
use singular_heat::parametrix::{assemble_fs, QuadratureSpec, SeriesControl};

fn main() -> singular_heat::Result<()> {
    let fs = assemble_fs(&CoefficientField::sin_tx(), QuadratureSpec::default(), SeriesControl::default(), 2.0)?;
    let grid: Vec<(f64, f64)> = [0.25, 0.5, 1.0]
        .iter()
        .flat_map(|&t| [0.5, 1.0, 2.0].map(|x| (t, x)))
        .collect();

    let one = solve_homogeneous(&fs, &InitialData::preset("one", 0.5)?, 0.0, &grid)?;
    let bump = solve_homogeneous(&fs, &InitialData::preset("bump", 0.5)?, 0.0, &grid)?;
    let duhamel = solve_inhomogeneous(&fs, &SourceTerm::new("one", 0.5, |_, _| 1.0)?, 0.0, &grid)?;

    println!("{:>5} {:>5} {:>10} {:>10} {:>10}", "t", "x", "f=1", "bump", "g=1");
    for k in 0..grid.len() {
        let (t, x) = grid[k];
        println!(
            "{t:>5} {x:>5} {:10.6} {:10.6} {:10.6}",
            one.points[k].u, bump.points[k].u, duhamel.points[k].u
        );
    }
    println!("(f=1 should stay at 1, g=1 should equal t)");
    Ok(())
}
