//! Above `r = 1/2`: the width grows as `t^r`, curves at successive times
//! collapse onto one scaling function, and its positive tail decays as
//! `x^-(1 + 1/r)`.

use wealthsim::analytics::{
    collapse, collapse_distance, hill_tail_exponent, robust_width, width_exponent_fit,
    CollapseOptions, ScalingRegime,
};
use wealthsim::experiment::{positive_scaled_samples, stretched_fit_in_mad_units, MadWindow};
use wealthsim::{ensemble_run, ModelParams};

fn main() -> wealthsim::Result<()> {
    let r = 0.75;
    let checkpoints = [100_000, 200_000, 400_000, 800_000];
    let params = ModelParams::new(1000, r, 4)?;
    let ens = ensemble_run(&params, 800_000, &checkpoints, 40)?;
    let regime = ScalingRegime::for_r(r)?;

    let scaled = ens
        .iter()
        .map(|e| collapse(&e.pooled, &regime, &CollapseOptions::default()))
        .collect::<wealthsim::Result<Vec<_>>>()?;
    for pair in scaled.windows(2) {
        println!(
            "collapse distance t={} vs t={}: {:.2e}",
            pair[0].t,
            pair[1].t,
            collapse_distance(&pair[0], &pair[1])?
        );
    }

    let last = &ens.last().unwrap().pooled;
    let tail = hill_tail_exponent(&positive_scaled_samples(last, &regime)?, 0.01)?;
    println!(
        "positive tail exponent {:.3} +/- {:.3} (expected {:.3})",
        tail.estimate,
        tail.stderr,
        1.0 + 1.0 / r
    );

    match stretched_fit_in_mad_units(last, &regime, MadWindow(-3.0, -1.0)) {
        Ok((fit, _, _)) => println!(
            "negative wing power {:.3} (expected {:.3})",
            fit.estimate,
            1.0 / (1.0 - r)
        ),
        Err(e) => println!("negative wing fit unavailable: {e}"),
    }

    let times = [10_000, 31_623, 100_000, 316_228, 1_000_000];
    let widths: Vec<(f64, f64)> = ensemble_run(&params, 1_000_000, &times, 20)?
        .iter()
        .map(|e| (e.t as f64, robust_width(&e.pooled)))
        .collect();
    let alpha = width_exponent_fit(&widths)?;
    println!(
        "width exponent {:.3} +/- {:.3} (asymptotically {r})",
        alpha.estimate, alpha.stderr
    );
    Ok(())
}
