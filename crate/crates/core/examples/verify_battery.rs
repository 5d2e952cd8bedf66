//! Run verification checks on a catalog field and print one line per check.
//!
//! ```text
//! cargo run --release --example verify_battery -- CONST all
//! cargo run --release --example verify_battery -- SIN_TX volterra bound-sandwich
//! ```

use singular_heat::coeff::builtin_field;
use singular_heat::verify::{run_battery, VerifyContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "CONST".into());
    let mut checks: Vec<String> = args.collect();
    if checks.is_empty() {
        checks.push("all".into());
    }
    let field = builtin_field(&name, Some(-0.5))?;
    let ctx = VerifyContext::new(field);
    let mut failed = 0;
    for rep in run_battery(&checks, &ctx)? {
        let worst = rep
            .worst()
            .map(|r| format!("{} = {:.3e} (tol {:.1e})", r.label, r.value, r.tolerance))
            .unwrap_or_default();
        println!(
            "{:<20} {} {:>7.2}s  worst: {worst}",
            rep.check_name,
            if rep.pass { "PASS" } else { "FAIL" },
            rep.runtime_s
        );
        if !rep.pass {
            failed += 1;
            for r in &rep.residuals {
                println!("    {:<60} {:.3e} <= {:.1e} {}", r.label, r.value, r.tolerance, r.ok());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
