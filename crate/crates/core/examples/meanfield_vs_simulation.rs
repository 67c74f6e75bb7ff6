//! Compares the expected occupancy recursion with a Monte Carlo ensemble
//! bin by bin.

use wealthsim::{ensemble_run, evolve_expected, ModelParams};

fn main() -> wealthsim::Result<()> {
    let t = 1000u64;
    let params = ModelParams::new(10, 0.6, 17)?;
    let ens = ensemble_run(&params, t, &[t], 10_000)?.remove(0);
    let occ = evolve_expected(&params, t, Some(t as usize), &[t])?.remove(0);
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>7}",
        "k", "recursion", "ensemble", "stderr", "z"
    );
    for &(k, mean, se) in ens.mean.iter().take(25) {
        let expected = occ.count(k as usize);
        let z = if se > 0.0 {
            (mean - expected) / se
        } else {
            0.0
        };
        println!("{k:>5} {expected:>10.5} {mean:>10.5} {se:>10.5} {z:>7.2}");
    }
    Ok(())
}
