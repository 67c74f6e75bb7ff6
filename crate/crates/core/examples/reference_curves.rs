//! Writes the reference scaling functions used as overlays: Gaussian limits
//! for `r <= 1/2` and the rate-equation curve for `r > 1/2`.
//!
//! ```text
//! cargo run --release --example reference_curves -- out/reference
//! ```

use std::path::PathBuf;

use wealthsim::analytics::ScalingRegime;
use wealthsim::experiment::emit_reference_curves;
use wealthsim::meanfield::{default_t_grid, ln_asymptotic_f, parametric_scaling_curve};

fn main() -> wealthsim::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(
        || std::env::temp_dir().join("wealthsim-reference"),
        PathBuf::from,
    );
    let agents = 1000;
    for r in [0.25, 0.5, 0.75] {
        let regime = ScalingRegime::for_r(r)?;
        let path = emit_reference_curves(
            r,
            agents,
            800_000,
            &regime,
            &dir.join(format!("reference_r{r}.csv")),
        )?;
        println!("wrote {}", path.display());
    }

    let curve = parametric_scaling_curve(agents, 0.75, &default_t_grid(agents, 0.75)?)?;
    println!("rate-equation curve against its asymptotes (r = 0.75):");
    for p in curve.points.iter().step_by(111) {
        println!(
            "  x = {:>10.5}  ln f = {:>9.3}  asymptote {:>9.3}",
            p.x,
            p.ln_f,
            ln_asymptotic_f(agents, 0.75, p.x)?
        );
    }
    Ok(())
}
