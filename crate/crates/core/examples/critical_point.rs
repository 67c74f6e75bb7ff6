//! At `r = 1/2` the width is `(t ln t)^(1/2)` and the approach to the
//! Gaussian limit is only logarithmic.

use wealthsim::analytics::{collapse, CollapseOptions, ScalingRegime};
use wealthsim::{run, ModelParams};

fn main() -> wealthsim::Result<()> {
    let agents = 1000usize;
    let params = ModelParams::new(agents, 0.5, 2)?;
    let regime = ScalingRegime::for_r(0.5)?;
    let checkpoints = [1_000_000, 4_000_000, 16_000_000];
    let limit = (agents as f64 / std::f64::consts::TAU).sqrt();
    for hist in run(&params, 16_000_000, &checkpoints)? {
        let t = hist.t as f64;
        let sd = collapse(&hist, &regime, &CollapseOptions::default())?
            .rebin(0.5 / (agents as f64).sqrt())?;
        let var_ratio = hist.variance() * agents as f64 / (t * t.ln());
        println!(
            "t = {:>9}: scaled peak {:.3} (limit {limit:.3}), variance / (t ln t / A) = {var_ratio:.3}",
            hist.t,
            sd.peak().map_or(0.0, |p| p.1)
        );
    }
    Ok(())
}
