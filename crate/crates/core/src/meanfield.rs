//! Deterministic counterparts of the simulation.
//!
//! [`OccupancyVector`] evolves the expected occupancies `N_k` one unit of
//! wealth at a time. Because exactly one unit is disbursed per step, the
//! expected dynamics is a discrete linear map with no integrator error. The
//! free functions evaluate the closed-form results: the Pareto law, the
//! homogeneous (Poisson) solution, the Gaussian limits, the rate-equation
//! solution and the parametric scaling curve.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::analytics::ScalingRegime;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Bins at the edge of the support are dropped once they fall below this
/// fraction of the population.
pub const PRUNE_FLOOR: f64 = 1e-30;

/// Clipped mass above which an evolution carries a truncation warning.
pub const LEAK_TOLERANCE: f64 = 1e-9;

/// Expected occupancies `N_k` for `k = 0..=k_max` at integer time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    counts: Vec<f64>,
    t: u64,
    agents: usize,
    /// Mass pushed past `k_max`.
    leaked_mass: f64,
    /// Mass dropped from negligible bins at the edges of the support.
    pruned_mass: f64,
    lo: usize,
    hi: usize,
}

/// Attached to an evolution whose `k_max` clipped a measurable amount of mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationWarning {
    pub t: u64,
    pub k_max: usize,
    pub leaked_mass: f64,
}

impl std::fmt::Display for TruncationWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "k_max = {} clipped {:.3e} agents of mass by t = {}",
            self.k_max, self.leaked_mass, self.t
        )
    }
}

impl OccupancyVector {
    /// All agents at zero wealth.
    pub fn initial(agents: usize, k_max: usize) -> Result<Self> {
        if agents == 0 {
            return Err(Error::invalid("agents", "must be at least 1"));
        }
        if k_max == 0 {
            return Err(Error::invalid("k_max", "must be at least 1"));
        }
        let mut counts = vec![0.0; k_max + 1];
        counts[0] = agents as f64;
        Ok(Self {
            counts,
            t: 0,
            agents,
            leaked_mass: 0.0,
            pruned_mass: 0.0,
            lo: 0,
            hi: 0,
        })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn count(&self, k: usize) -> f64 {
        self.counts.get(k).copied().unwrap_or(0.0)
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn k_max(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn leaked_mass(&self) -> f64 {
        self.leaked_mass
    }

    pub fn pruned_mass(&self) -> f64 {
        self.pruned_mass
    }

    /// Occupied index range `[lo, hi]`; all counts outside it are zero.
    pub fn support(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn mass(&self) -> f64 {
        self.counts[self.lo..=self.hi].iter().sum()
    }

    pub fn total_wealth(&self) -> f64 {
        (self.lo..=self.hi).map(|k| k as f64 * self.counts[k]).sum()
    }

    pub fn truncation_warning(&self) -> Option<TruncationWarning> {
        (self.leaked_mass >= LEAK_TOLERANCE * self.agents as f64).then_some(TruncationWarning {
            t: self.t,
            k_max: self.k_max(),
            leaked_mass: self.leaked_mass,
        })
    }

    /// Sparse `(k, N_k)` pairs over the support.
    pub fn nonzero(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (self.lo..=self.hi)
            .map(|k| (k as u64, self.counts[k]))
            .filter(|&(_, c)| c > 0.0)
    }

    /// Advances one unit of wealth in place.
    ///
    /// Bin `k` loses `p_k = [(1-r)/A + r k/t] N_k` to bin `k+1`. At `t = 0`
    /// the preferential branch falls back to uniform, so `p_k = N_k / A`.
    pub fn advance(&mut self, r: f64) {
        let a = self.agents as f64;
        let (base, slope) = if self.t == 0 {
            (1.0 / a, 0.0)
        } else {
            ((1.0 - r) / a, r / self.t as f64)
        };
        let k_max = self.k_max();
        let hi = self.hi;
        if hi == k_max {
            let p = (base + slope * hi as f64) * self.counts[hi];
            self.counts[hi] -= p;
            self.leaked_mass += p;
        } else {
            let p = (base + slope * hi as f64) * self.counts[hi];
            self.counts[hi + 1] = p;
            self.counts[hi] -= p;
            self.hi = hi + 1;
        }
        // Descending so each outflow uses the pre-step value of its bin.
        for k in (self.lo..hi).rev() {
            let p = (base + slope * k as f64) * self.counts[k];
            self.counts[k + 1] += p;
            self.counts[k] -= p;
        }
        self.t += 1;
        self.prune();
    }

    fn prune(&mut self) {
        let floor = PRUNE_FLOOR * self.agents as f64;
        while self.hi > self.lo && self.counts[self.hi] < floor {
            self.pruned_mass += self.counts[self.hi];
            self.counts[self.hi] = 0.0;
            self.hi -= 1;
        }
        while self.lo < self.hi && self.counts[self.lo] < floor {
            self.pruned_mass += self.counts[self.lo];
            self.counts[self.lo] = 0.0;
            self.lo += 1;
        }
    }

    pub fn mean(&self) -> f64 {
        self.total_wealth() / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.lo..=self.hi)
            .map(|k| self.counts[k] * (k as f64 - m).powi(2))
            .sum::<f64>()
            / self.mass()
    }
}

/// One step of the expected dynamics, returning the new occupancies.
pub fn expected_step(occ: &OccupancyVector, params: &ModelParams) -> Result<OccupancyVector> {
    params.validate()?;
    if params.agents != occ.agents {
        return Err(Error::invalid(
            "agents",
            "does not match the occupancy vector",
        ));
    }
    let mut next = occ.clone();
    next.advance(params.r);
    Ok(next)
}

/// `k_max = ceil(t/A + 12 w(t))`, at least 64, and never beyond `t_max`
/// when that is already at least 64 (wealth cannot exceed `t`).
pub fn default_k_max(agents: usize, r: f64, t_max: u64) -> Result<usize> {
    let regime = ScalingRegime::for_r(r)?;
    let t = t_max as f64;
    let width = if t >= 2.0 { regime.width(t)? } else { 1.0 };
    let k = (t / agents as f64 + 12.0 * width).ceil() as u64;
    Ok(k.min(t_max).max(64) as usize)
}

/// Iterates the expected dynamics to `t_max`, snapshotting at each checkpoint.
pub fn evolve_expected(
    params: &ModelParams,
    t_max: u64,
    k_max: Option<usize>,
    checkpoints: &[u64],
) -> Result<Vec<OccupancyVector>> {
    params.validate()?;
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("checkpoints", "must be sorted ascending"));
    }
    if checkpoints.last().is_some_and(|&c| c > t_max) {
        return Err(Error::invalid("checkpoints", "must not exceed t_max"));
    }
    let k_max = match k_max {
        Some(k) => k,
        None => default_k_max(params.agents, params.r, t_max)?,
    };
    let mut occ = OccupancyVector::initial(params.agents, k_max)?;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &cp in checkpoints {
        while occ.t < cp {
            occ.advance(params.r);
        }
        out.push(occ.clone());
    }
    Ok(out)
}

fn check_r_positive(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::invalid("r", format!("{r} must lie in (0, 1]")));
    }
    Ok(())
}

/// Pareto density `(1/r) k^(-1-1/r)` on `k >= 1`.
pub fn pareto_density(r: f64, k: f64) -> Result<f64> {
    check_r_positive(r)?;
    if k < 1.0 {
        return Err(Error::invalid("k", "Pareto density is defined for k >= 1"));
    }
    Ok(k.powf(-pareto_exponent(r)?) / r)
}

/// Tail exponent `1 + 1/r`.
pub fn pareto_exponent(r: f64) -> Result<f64> {
    check_r_positive(r)?;
    Ok(1.0 + 1.0 / r)
}

/// Expected number of agents at wealth `k` under purely uniform disbursement.
pub fn poisson_occupancy(agents: usize, t: f64, k: u64) -> f64 {
    let a = agents as f64;
    let lambda = t / a;
    if lambda == 0.0 {
        return if k == 0 { a } else { 0.0 };
    }
    let kf = k as f64;
    a * (kf * lambda.ln() - lambda - ln_gamma(kf + 1.0)).exp()
}

/// Normal density of the long-time wealth distribution for `r <= 1/2`.
///
/// For `r < 1/2` the variance is `t / (A (1 - 2r))`; at `r = 1/2` it is
/// `t ln t / A`. Both are centred on `t/A`.
pub fn gaussian_limit(agents: usize, r: f64, t: f64, k: f64) -> Result<f64> {
    let var = gaussian_variance(agents, r, t)?;
    let d = k - t / agents as f64;
    Ok((-0.5 * d * d / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
}

pub fn gaussian_variance(agents: usize, r: f64, t: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&r) {
        return Err(Error::invalid(
            "r",
            format!("{r} > 1/2 has no Gaussian limit"),
        ));
    }
    if !(t > 1.0) {
        return Err(Error::invalid("t", "must exceed 1"));
    }
    let a = agents as f64;
    Ok(if r == 0.5 {
        t * t.ln() / a
    } else {
        t / (a * (1.0 - 2.0 * r))
    })
}

/// Probability that an agent has not received any wealth by time `t`.
pub fn zero_wealth_fraction(agents: usize, r: f64, t: f64) -> f64 {
    (-(1.0 - r) * t / agents as f64).exp()
}

/// Probability an agent was introduced by time `T`, given it was by `t`.
pub fn introduction_cdf(agents: usize, r: f64, big_t: f64, t: f64) -> Result<f64> {
    if r >= 1.0 {
        return Err(Error::invalid("r", "introduction CDF is 0/0 at r = 1"));
    }
    if !(t > 0.0) || !(0.0..=t).contains(&big_t) {
        return Err(Error::invalid("T", "requires 0 <= T <= t and t > 0"));
    }
    let c = (1.0 - r) / agents as f64;
    Ok((-c * big_t).exp_m1() / (-c * t).exp_m1())
}

/// Rate-equation wealth at time `t` of an agent first paid at `t_i`.
pub fn agent_wealth(agents: usize, r: f64, t_i: f64, t: f64) -> Result<f64> {
    if !(t_i > 0.0) {
        return Err(Error::invalid("t_i", "introduction time must be positive"));
    }
    if t_i > t {
        return Err(Error::invalid("t_i", "introduction time must not exceed t"));
    }
    let a = agents as f64;
    Ok((1.0 - t_i / a) * (t / t_i).powf(r) + t / a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Introduction time parametrising the curve.
    pub big_t: f64,
    pub x: f64,
    pub f: f64,
    /// `ln f`, finite even where `f` underflows.
    pub ln_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub r: f64,
    pub agents: usize,
    pub points: Vec<CurvePoint>,
}

/// Geometric grid of 1000 points over `[1e-3 A^(1/(1+r)), 20 A/(1-r)]`.
pub fn default_t_grid(agents: usize, r: f64) -> Result<Vec<f64>> {
    if !(r > 0.5 && r < 1.0) {
        return Err(Error::invalid("r", "default T grid needs 1/2 < r < 1"));
    }
    let a = agents as f64;
    Ok(geometric_grid(
        1e-3 * a.powf(1.0 / (1.0 + r)),
        20.0 * a / (1.0 - r),
        1000,
    ))
}

pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Rate-equation wealth distribution in scaled variables, parametrised by
/// introduction time `T`:
/// `x = (1 - T/A) T^(-r)`, `f = (1-r) T^(1+r) / (A r + (1-r) T) e^(-(1-r)T/A)`.
pub fn parametric_scaling_curve(agents: usize, r: f64, t_grid: &[f64]) -> Result<ScalingCurve> {
    if !(r > 0.5 && r <= 1.0) {
        return Err(Error::invalid(
            "r",
            "parametric curve applies only for r > 1/2",
        ));
    }
    if t_grid.iter().any(|&v| !(v > 0.0)) || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "T_grid",
            "must be positive and strictly increasing",
        ));
    }
    let a = agents as f64;
    let points = t_grid
        .iter()
        .map(|&big_t| {
            let x = (1.0 - big_t / a) * big_t.powf(-r);
            let ln_f = (1.0 - r).ln() + (1.0 + r) * big_t.ln()
                - (a * r + (1.0 - r) * big_t).ln()
                - (1.0 - r) * big_t / a;
            CurvePoint {
                big_t,
                x,
                f: ln_f.exp(),
                ln_f,
            }
        })
        .collect();
    Ok(ScalingCurve { r, agents, points })
}

/// Logarithm of [`asymptotic_f`].
pub fn ln_asymptotic_f(agents: usize, r: f64, x: f64) -> Result<f64> {
    if !(r > 0.5 && r < 1.0) {
        return Err(Error::invalid(
            "r",
            "asymptotic shapes apply for 1/2 < r < 1",
        ));
    }
    if x == 0.0 || !x.is_finite() {
        return Err(Error::invalid(
            "x",
            "asymptotic branches need finite nonzero x",
        ));
    }
    Ok(if x > 0.0 {
        -(1.0 + 1.0 / r) * x.ln()
    } else {
        let a = agents as f64;
        -(1.0 - r) * (a.powf(r) * -x).powf(1.0 / (1.0 - r))
    })
}

/// Unnormalised asymptotic shapes of the scaling function for `r > 1/2`:
/// `x^(-1-1/r)` as `x -> +inf` and `exp[-(1-r)(A^r |x|)^(1/(1-r))]` as
/// `x -> -inf`. Only meaningful for large `|x|`.
pub fn asymptotic_f(agents: usize, r: f64, x: f64) -> Result<f64> {
    ln_asymptotic_f(agents, r, x).map(f64::exp)
}
