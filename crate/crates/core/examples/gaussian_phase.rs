//! Below `r = 1/2` the distribution is Gaussian around `t/A` with variance
//! `t / (A (1 - 2r))`.

use wealthsim::analytics::{collapse, gaussian_moment_test, CollapseOptions, ScalingRegime};
use wealthsim::{ensemble_run, ModelParams};

fn main() -> wealthsim::Result<()> {
    let (agents, t) = (100usize, 1_000_000u64);
    for r in [0.0, 0.25, 0.4] {
        let params = ModelParams::new(agents, r, 21)?;
        let ens = ensemble_run(&params, t, &[t], 40)?.remove(0);
        let (mean_err, var_ratio) = gaussian_moment_test(&ens.pooled, r)?;
        let regime = ScalingRegime::for_r(r)?;
        let sd = collapse(&ens.pooled, &regime, &CollapseOptions::default())?
            .rebin(0.25 / (agents as f64 * (1.0 - 2.0 * r)).sqrt())?;
        let peak = sd.peak().map_or(0.0, |p| p.1);
        let limit = (agents as f64 * (1.0 - 2.0 * r) / std::f64::consts::TAU).sqrt();
        println!(
            "r = {r}: mean error {mean_err:.1e}, variance ratio {var_ratio:.3}, scaled peak {peak:.3} (limit {limit:.3})"
        );
    }
    Ok(())
}
