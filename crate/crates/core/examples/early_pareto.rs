//! Early-time power law: while most agents are still empty, the wealth of
//! those already reached follows `k^-(1 + 1/r)`.
//!
//! ```text
//! cargo run --release --example early_pareto
//! ```

use wealthsim::analytics::{hill_sensitivity_sweep, HILL_SWEEP};
use wealthsim::meanfield::pareto_exponent;
use wealthsim::{run, ModelParams};

fn main() -> wealthsim::Result<()> {
    let (agents, t) = (2_000_000, 100_000);
    for r in [0.5, 0.75] {
        let params = ModelParams::new(agents, r, 11)?;
        let hist = run(&params, t, &[t])?.remove(0);
        let reached: Vec<f64> = hist.samples().into_iter().filter(|&k| k >= 1.0).collect();
        println!(
            "r = {r}: {} of {agents} agents reached, expected exponent {:.3}",
            reached.len(),
            pareto_exponent(r)?
        );
        for (q, fit) in hill_sensitivity_sweep(&reached, &HILL_SWEEP)? {
            match fit {
                Ok(f) => println!(
                    "  top {:>4.1}%: lambda = {:.3} +/- {:.3}",
                    q * 100.0,
                    f.estimate,
                    f.stderr
                ),
                Err(e) => println!("  top {:>4.1}%: {e}", q * 100.0),
            }
        }
    }
    Ok(())
}
