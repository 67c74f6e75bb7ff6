//! Fraction of agents never selected, against `exp(-(1 - r) t / A)`.

use wealthsim::meanfield::zero_wealth_fraction;
use wealthsim::{ModelParams, Simulation};

fn main() -> wealthsim::Result<()> {
    let (agents, r, replicas) = (1000usize, 0.75, 50u64);
    let params = ModelParams::new(agents, r, 9)?;
    let times: Vec<u64> = (1..=10).map(|i| i * 500).collect();
    let mut zero = vec![0usize; times.len()];
    for rep in 0..replicas {
        let mut sim = Simulation::replica(&params, rep)?;
        for (slot, &t) in zero.iter_mut().zip(&times) {
            sim.advance_to(t);
            *slot += sim.state().zero_count();
        }
    }
    for (&t, &z) in times.iter().zip(&zero) {
        let observed = z as f64 / (replicas as usize * agents) as f64;
        let predicted = zero_wealth_fraction(agents, r, t as f64);
        println!("t = {t:>5}: observed {observed:.4}, predicted {predicted:.4}");
    }
    Ok(())
}
