//! Exact simulation of the disbursement process.
//!
//! One unit of wealth is handed out per step. With probability `r` the
//! recipient is drawn in proportion to current wealth, otherwise uniformly
//! from all `A` agents.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fenwick::FenwickTree;
use crate::rng::{replica_rng, SimRng};

/// What a preferential draw does when no wealth has been disbursed yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BootstrapPolicy {
    /// Draw uniformly instead.
    #[default]
    UniformFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub agents: usize,
    /// Probability that a step uses the preferential rule.
    pub r: f64,
    pub seed: u64,
    #[serde(default)]
    pub bootstrap: BootstrapPolicy,
}

impl ModelParams {
    pub fn new(agents: usize, r: f64, seed: u64) -> Result<Self> {
        let params = Self {
            agents,
            r,
            seed,
            bootstrap: BootstrapPolicy::UniformFallback,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::invalid("agents", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::invalid("r", format!("{} is outside [0, 1]", self.r)));
        }
        Ok(())
    }
}

/// Per-agent wealth plus the prefix-sum tree used for preferential draws.
#[derive(Debug, Clone)]
pub struct WealthState {
    wealth: Vec<u64>,
    total: u64,
    weights: FenwickTree,
    zero_count: usize,
}

impl WealthState {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            wealth: vec![0; params.agents],
            total: 0,
            weights: FenwickTree::new(params.agents),
            zero_count: params.agents,
        })
    }

    pub fn wealth(&self) -> &[u64] {
        &self.wealth
    }

    /// Units disbursed so far, which is also the number of steps taken.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn zero_count(&self) -> usize {
        self.zero_count
    }

    pub fn agents(&self) -> usize {
        self.wealth.len()
    }

    pub fn weights(&self) -> &FenwickTree {
        &self.weights
    }

    /// Probability that the next step selects `agent`.
    pub fn selection_probability(&self, params: &ModelParams, agent: usize) -> Result<f64> {
        let a = self.wealth.len();
        let k = *self.wealth.get(agent).ok_or(Error::AgentOutOfRange {
            index: agent,
            agents: a,
        })?;
        let uniform = 1.0 / a as f64;
        if self.total == 0 {
            // Bootstrap: the preferential branch also lands uniformly.
            return Ok(uniform);
        }
        Ok((1.0 - params.r) * uniform + params.r * k as f64 / self.total as f64)
    }

    /// Disburses one unit and returns the recipient.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, params: &ModelParams, rng: &mut R) -> usize {
        let r = params.r;
        let preferential = if r <= 0.0 {
            false
        } else if r >= 1.0 {
            true
        } else {
            rng.random::<f64>() < r
        };
        let agent = if preferential && self.total > 0 {
            self.weights.find(rng.random_range(0..self.total))
        } else {
            rng.random_range(0..self.wealth.len())
        };
        self.credit(agent);
        agent
    }

    #[inline]
    fn credit(&mut self, agent: usize) {
        let k = &mut self.wealth[agent];
        if *k == 0 {
            self.zero_count -= 1;
        }
        *k += 1;
        self.total += 1;
        self.weights.add(agent, 1);
    }

    pub fn histogram(&self) -> WealthHistogram {
        WealthHistogram::from_wealth(self.total, &self.wealth)
    }
}

/// Occupancy counts `N_k` at one time, stored sparsely as sorted `(k, count)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WealthHistogram {
    pub t: u64,
    /// Agents per run. Pooled histograms hold `agents * replicas` samples.
    pub agents: u64,
    pub counts: Vec<(u64, u64)>,
}

impl WealthHistogram {
    pub fn from_wealth(t: u64, wealth: &[u64]) -> Self {
        let mut sorted = wealth.to_vec();
        sorted.sort_unstable();
        let mut counts: Vec<(u64, u64)> = Vec::new();
        for k in sorted {
            match counts.last_mut() {
                Some((last, c)) if *last == k => *c += 1,
                _ => counts.push((k, 1)),
            }
        }
        Self {
            t,
            agents: wealth.len() as u64,
            counts,
        }
    }

    /// Builds from arbitrary `(k, count)` pairs; zero counts are dropped.
    pub fn from_pairs(t: u64, agents: u64, pairs: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut map = BTreeMap::new();
        for (k, c) in pairs {
            if c > 0 {
                *map.entry(k).or_insert(0) += c;
            }
        }
        Self {
            t,
            agents,
            counts: map.into_iter().collect(),
        }
    }

    /// Sums histograms taken at the same time from independent replicas.
    pub fn pool<'a>(hists: impl IntoIterator<Item = &'a WealthHistogram>) -> Result<Self> {
        let mut iter = hists.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InsufficientData("no histograms to pool".into()))?;
        let mut map: BTreeMap<u64, u64> = first.counts.iter().copied().collect();
        for h in iter {
            if h.t != first.t || h.agents != first.agents {
                return Err(Error::invalid(
                    "histograms",
                    "pooled histograms must share t and agent count",
                ));
            }
            for &(k, c) in &h.counts {
                *map.entry(k).or_insert(0) += c;
            }
        }
        Ok(Self {
            t: first.t,
            agents: first.agents,
            counts: map.into_iter().collect(),
        })
    }

    /// Number of samples (agents, summed over pooled replicas).
    pub fn mass(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    /// `Σ k N_k`.
    pub fn total_wealth(&self) -> u64 {
        self.counts.iter().map(|&(k, c)| k * c).sum()
    }

    pub fn count(&self, k: u64) -> u64 {
        self.counts
            .binary_search_by_key(&k, |&(kk, _)| kk)
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    pub fn max_wealth(&self) -> Option<u64> {
        self.counts.last().map(|&(k, _)| k)
    }

    pub fn mean(&self) -> f64 {
        self.total_wealth() as f64 / self.mass() as f64
    }

    /// Population variance of the wealth distribution.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let n = self.mass() as f64;
        self.counts
            .iter()
            .map(|&(k, c)| c as f64 * (k as f64 - mean).powi(2))
            .sum::<f64>()
            / n
    }

    /// One value per agent, in ascending order.
    pub fn samples(&self) -> Vec<f64> {
        self.counts
            .iter()
            .flat_map(|&(k, c)| std::iter::repeat_n(k as f64, c as usize))
            .collect()
    }
}

/// Drives one replica: the state together with its random stream.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ModelParams,
    state: WealthState,
    rng: SimRng,
}

impl Simulation {
    pub fn new(params: &ModelParams) -> Result<Self> {
        Self::replica(params, 0)
    }

    pub fn replica(params: &ModelParams, replica: u64) -> Result<Self> {
        Ok(Self {
            state: WealthState::new(params)?,
            rng: replica_rng(params.seed, replica),
            params: params.clone(),
        })
    }

    pub fn state(&self) -> &WealthState {
        &self.state
    }

    pub fn step(&mut self) -> usize {
        self.state.step(&self.params, &mut self.rng)
    }

    /// Steps until `total == t`. Does nothing if already past `t`.
    pub fn advance_to(&mut self, t: u64) {
        while self.state.total < t {
            self.state.step(&self.params, &mut self.rng);
        }
    }
}

fn check_checkpoints(t_max: u64, checkpoints: &[u64]) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("checkpoints", "must be sorted ascending"));
    }
    if let Some(&last) = checkpoints.last() {
        if last > t_max {
            return Err(Error::invalid(
                "checkpoints",
                format!("checkpoint {last} exceeds t_max {t_max}"),
            ));
        }
    }
    Ok(())
}

fn run_replica(
    params: &ModelParams,
    replica: u64,
    t_max: u64,
    checkpoints: &[u64],
) -> Result<Vec<WealthHistogram>> {
    let mut sim = Simulation::replica(params, replica)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        sim.advance_to(cp);
        out.push(sim.state.histogram());
    }
    sim.advance_to(t_max);
    Ok(out)
}

/// Runs `t_max` steps and records the occupancy histogram at each checkpoint.
pub fn run(params: &ModelParams, t_max: u64, checkpoints: &[u64]) -> Result<Vec<WealthHistogram>> {
    params.validate()?;
    check_checkpoints(t_max, checkpoints)?;
    run_replica(params, 0, t_max, checkpoints)
}

/// Mean occupancy over replicas at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleHistogram {
    pub t: u64,
    pub agents: u64,
    pub replicas: u64,
    /// `(k, mean N_k, standard error of the mean)` for every k seen in any replica.
    pub mean: Vec<(u64, f64, f64)>,
    /// All replicas' counts summed.
    pub pooled: WealthHistogram,
}

impl EnsembleHistogram {
    fn aggregate(hists: &[&WealthHistogram]) -> Result<Self> {
        let replicas = hists.len() as u64;
        let mut sums: BTreeMap<u64, (u64, u128)> = BTreeMap::new();
        for h in hists {
            for &(k, c) in &h.counts {
                let e = sums.entry(k).or_insert((0, 0));
                e.0 += c;
                e.1 += (c as u128) * (c as u128);
            }
        }
        let n = replicas as f64;
        let mean = sums
            .iter()
            .map(|(&k, &(s, sq))| {
                let m = s as f64 / n;
                let se = if replicas > 1 {
                    // Exact integer numerator of the sample variance.
                    let num = sq * replicas as u128 - (s as u128) * (s as u128);
                    (num as f64 / (n * (n - 1.0)) / n).sqrt()
                } else {
                    0.0
                };
                (k, m, se)
            })
            .collect();
        Ok(Self {
            t: hists[0].t,
            agents: hists[0].agents,
            replicas,
            mean,
            pooled: WealthHistogram::pool(hists.iter().copied())?,
        })
    }

    pub fn mean_at(&self, k: u64) -> (f64, f64) {
        self.mean
            .binary_search_by_key(&k, |e| e.0)
            .map(|i| (self.mean[i].1, self.mean[i].2))
            .unwrap_or((0.0, 0.0))
    }
}

/// Runs independent replicas (possibly in parallel) and averages per checkpoint.
///
/// Replica `i` uses stream `i` of the seed; aggregation happens in replica
/// order so the result does not depend on scheduling.
pub fn ensemble_run(
    params: &ModelParams,
    t_max: u64,
    checkpoints: &[u64],
    replicas: u64,
) -> Result<Vec<EnsembleHistogram>> {
    params.validate()?;
    check_checkpoints(t_max, checkpoints)?;
    if replicas == 0 {
        return Err(Error::invalid("replicas", "must be at least 1"));
    }
    let per_replica: Vec<Vec<WealthHistogram>> = (0..replicas)
        .into_par_iter()
        .map(|i| run_replica(params, i, t_max, checkpoints))
        .collect::<Result<_>>()?;
    (0..checkpoints.len())
        .map(|c| {
            let hs: Vec<&WealthHistogram> = per_replica.iter().map(|h| &h[c]).collect();
            EnsembleHistogram::aggregate(&hs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: usize, r: f64) -> ModelParams {
        ModelParams::new(a, r, 11).unwrap()
    }

    /// Exhaustive enumeration of every step sequence, returning `E[N_k]`.
    fn enumerate_expected(a: usize, r: f64, steps: u32) -> Vec<f64> {
        fn go(w: &mut Vec<u64>, r: f64, left: u32, p: f64, acc: &mut Vec<f64>) {
            if left == 0 {
                for &k in w.iter() {
                    acc[k as usize] += p;
                }
                return;
            }
            let a = w.len() as f64;
            let t: u64 = w.iter().sum();
            for i in 0..w.len() {
                let q = if t == 0 {
                    1.0 / a
                } else {
                    (1.0 - r) / a + r * w[i] as f64 / t as f64
                };
                if q == 0.0 {
                    continue;
                }
                w[i] += 1;
                go(w, r, left - 1, p * q, acc);
                w[i] -= 1;
            }
        }
        let mut acc = vec![0.0; steps as usize + 1];
        go(&mut vec![0; a], r, steps, 1.0, &mut acc);
        acc
    }

    #[test]
    fn new_state_is_all_zero() {
        let s = WealthState::new(&params(3, 0.5)).unwrap();
        assert_eq!(s.wealth(), &[0, 0, 0]);
        assert_eq!(s.total(), 0);
        assert_eq!(s.zero_count(), 3);
        let s = WealthState::new(&params(1, 0.0)).unwrap();
        assert_eq!(s.wealth(), &[0]);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0, 0.5, 1).is_err());
        assert!(ModelParams::new(5, 1.5, 1).is_err());
        assert!(ModelParams::new(5, -0.1, 1).is_err());
        assert!(ModelParams::new(5, f64::NAN, 1).is_err());
    }

    #[test]
    fn large_state_construction() {
        let s = WealthState::new(&params(1_000_000, 0.75)).unwrap();
        assert_eq!(s.zero_count(), 1_000_000);
        assert_eq!(s.weights().total(), 0);
    }

    #[test]
    fn selection_probability_examples() {
        let p = params(3, 0.5);
        let mut s = WealthState::new(&p).unwrap();
        for (i, k) in [2, 1, 1].into_iter().enumerate() {
            for _ in 0..k {
                s.credit(i);
            }
        }
        let got = s.selection_probability(&p, 0).unwrap();
        assert!((got - 5.0 / 12.0).abs() < 1e-15);
        assert!(s.selection_probability(&p, 3).is_err());

        let p0 = params(3, 0.0);
        for i in 0..3 {
            assert_eq!(s.selection_probability(&p0, i).unwrap(), 1.0 / 3.0);
        }

        let p1 = params(2, 1.0);
        let mut s = WealthState::new(&p1).unwrap();
        for _ in 0..4 {
            s.credit(0);
        }
        assert_eq!(s.selection_probability(&p1, 1).unwrap(), 0.0);
        assert_eq!(s.selection_probability(&p1, 0).unwrap(), 1.0);
    }

    #[test]
    fn bootstrap_probability_is_uniform() {
        let p = params(4, 1.0);
        let s = WealthState::new(&p).unwrap();
        assert_eq!(s.selection_probability(&p, 2).unwrap(), 0.25);
    }

    #[test]
    fn first_step_from_fresh_state() {
        for r in [0.0, 0.3, 1.0] {
            let mut sim = Simulation::new(&params(5, r)).unwrap();
            let i = sim.step();
            assert_eq!(sim.state().wealth()[i], 1);
            assert_eq!(sim.state().total(), 1);
            assert_eq!(sim.state().zero_count(), 4);
        }
    }

    #[test]
    fn single_agent_absorbs_everything() {
        let mut sim = Simulation::new(&params(1, 0.4)).unwrap();
        sim.advance_to(37);
        assert_eq!(sim.state().wealth(), &[37]);
    }

    #[test]
    fn enumeration_oracle_two_agents_two_steps() {
        let e = enumerate_expected(2, 0.5, 2);
        assert!((e[0] - 0.75).abs() < 1e-15);
        assert!((e[1] - 0.5).abs() < 1e-15);
        assert!((e[2] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn step_frequencies_match_selection_probability() {
        let p = params(3, 0.5);
        let mut base = WealthState::new(&p).unwrap();
        for (i, k) in [2, 1, 1].into_iter().enumerate() {
            for _ in 0..k {
                base.credit(i);
            }
        }
        let mut rng = replica_rng(3, 0);
        let n = 200_000;
        let mut hits = [0u64; 3];
        for _ in 0..n {
            let mut s = base.clone();
            hits[s.step(&p, &mut rng)] += 1;
        }
        for (i, &h) in hits.iter().enumerate() {
            let q = base.selection_probability(&p, i).unwrap();
            let se = (q * (1.0 - q) / n as f64).sqrt();
            assert!((h as f64 / n as f64 - q).abs() < 4.0 * se, "agent {i}");
        }
    }

    #[test]
    fn two_step_ensemble_matches_enumeration() {
        let p = params(2, 0.5);
        let out = ensemble_run(&p, 2, &[2], 100_000).unwrap();
        let oracle = enumerate_expected(2, 0.5, 2);
        for k in 0..=2u64 {
            let (m, se) = out[0].mean_at(k);
            assert!(
                (m - oracle[k as usize]).abs() < 3.0 * se,
                "k={k}: {m} vs {}",
                oracle[k as usize]
            );
        }
    }

    #[test]
    fn three_agents_four_steps_match_enumeration() {
        let p = params(3, 0.7);
        let out = ensemble_run(&p, 4, &[4], 50_000).unwrap();
        let oracle = enumerate_expected(3, 0.7, 4);
        for (k, &o) in oracle.iter().enumerate() {
            let (m, se) = out[0].mean_at(k as u64);
            assert!((m - o).abs() < 4.0 * se.max(1e-3), "k={k}");
        }
    }

    #[test]
    fn run_conserves_and_validates() {
        let p = params(1000, 0.0);
        let h = run(&p, 100_000, &[100_000]).unwrap();
        assert_eq!(h[0].mass(), 1000);
        assert_eq!(h[0].total_wealth(), 100_000);
        assert!(run(&p, 10, &[5, 3]).is_err());
        assert!(run(&p, 10, &[11]).is_err());
        let h = run(&p, 10, &[0, 10]).unwrap();
        assert_eq!(h[0].counts, vec![(0, 1000)]);
    }

    #[test]
    fn run_is_deterministic() {
        let p = params(50, 0.6);
        assert_eq!(
            run(&p, 5000, &[100, 5000]).unwrap(),
            run(&p, 5000, &[100, 5000]).unwrap()
        );
    }

    #[test]
    fn single_replica_ensemble_equals_run() {
        let p = params(20, 0.75);
        let single = run(&p, 3000, &[1000, 3000]).unwrap();
        let ens = ensemble_run(&p, 3000, &[1000, 3000], 1).unwrap();
        for (h, e) in single.iter().zip(&ens) {
            assert_eq!(h, &e.pooled);
            for &(k, c) in &h.counts {
                assert_eq!(e.mean_at(k), (c as f64, 0.0));
            }
        }
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let p = params(30, 0.4);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| ensemble_run(&p, 2000, &[500, 2000], 16).unwrap());
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| ensemble_run(&p, 2000, &[500, 2000], 16).unwrap());
        assert_eq!(serial, parallel);
        assert!(ensemble_run(&p, 10, &[10], 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn state_invariants_hold(
                a in 1usize..40,
                r in 0.0f64..=1.0,
                seed in any::<u64>(),
                steps in 0u64..400,
            ) {
                let p = ModelParams::new(a, r, seed).unwrap();
                let mut sim = Simulation::new(&p).unwrap();
                let mut prev_zero = sim.state().zero_count();
                for n in 1..=steps {
                    sim.step();
                    let s = sim.state();
                    prop_assert_eq!(s.total(), n);
                    prop_assert_eq!(s.wealth().iter().sum::<u64>(), n);
                    let zeros = s.wealth().iter().filter(|&&k| k == 0).count();
                    prop_assert_eq!(s.zero_count(), zeros);
                    prop_assert!(s.zero_count() <= prev_zero);
                    prev_zero = s.zero_count();
                }
                let s = sim.state();
                prop_assert_eq!(s.weights(), &FenwickTree::from_weights(s.wealth()));
                let h = s.histogram();
                prop_assert_eq!(h.mass(), a as u64);
                prop_assert_eq!(h.total_wealth(), steps);
                if steps > 0 {
                    let sum: f64 = (0..a).map(|i| s.selection_probability(&p, i).unwrap()).sum();
                    prop_assert!((sum - 1.0).abs() <= 8.0 * f64::EPSILON * a as f64);
                }
            }
        }
    }
}
