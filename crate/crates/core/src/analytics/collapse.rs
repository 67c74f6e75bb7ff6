use serde::{Deserialize, Serialize};

use super::regime::ScalingRegime;
use crate::error::{Error, Result};
use crate::meanfield::OccupancyVector;
use crate::model::WealthHistogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    /// One bin per integer wealth.
    Unit,
    /// Unit bins below `start_x`, then bins whose wealth span grows
    /// geometrically by `ratio`.
    LogTail { ratio: f64, start_x: f64 },
}

impl Binning {
    pub fn default_log_tail(start_x: f64) -> Self {
        Binning::LogTail {
            ratio: 1.25,
            start_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseOptions {
    pub binning: Binning,
    /// Emit empty unit bins between the smallest and largest occupied wealth.
    pub include_empty: bool,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self {
            binning: Binning::Unit,
            include_empty: false,
        }
    }
}

/// Histogram replotted as `f = w(t) P` against `x = (k - t/A) / w(t)`.
///
/// Agents with zero wealth are kept out of `(x, f)` and reported as
/// `zero_atom`, so `sum(f * dx) = 1 - zero_atom`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledDistribution {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    /// Bin widths in scaled units.
    pub dx: Vec<f64>,
    pub zero_atom: f64,
    pub t: u64,
    pub agents: u64,
    /// Number of samples behind the histogram (agents times replicas).
    pub mass: f64,
    pub width: f64,
    pub regime: ScalingRegime,
    pub binning: Binning,
}

impl ScaledDistribution {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Total probability in the scaled bins.
    pub fn integral(&self) -> f64 {
        self.f.iter().zip(&self.dx).map(|(f, d)| f * d).sum()
    }

    /// Cumulative distribution at each bin, counting the zero atom and the
    /// whole of the bin itself.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = self.zero_atom;
        self.f
            .iter()
            .zip(&self.dx)
            .map(|(f, d)| {
                acc += f * d;
                acc
            })
            .collect()
    }

    /// Point of maximal density.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.x
            .iter()
            .zip(&self.f)
            .map(|(&x, &f)| (x, f))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Re-bins onto a uniform grid of width `h` in `x` aligned on `x = 0`.
    /// Intended for unit-binned input whose bins are narrower than `h`.
    pub fn rebin(&self, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::invalid("bin width", "must be positive"));
        }
        let mut bins: Vec<(i64, f64)> = Vec::new();
        for i in 0..self.len() {
            let idx = (self.x[i] / h).floor() as i64;
            let m = self.f[i] * self.dx[i];
            match bins.last_mut() {
                Some((j, acc)) if *j == idx => *acc += m,
                _ => bins.push((idx, m)),
            }
        }
        Ok(Self {
            x: bins.iter().map(|&(j, _)| (j as f64 + 0.5) * h).collect(),
            f: bins.iter().map(|&(_, m)| m / h).collect(),
            dx: vec![h; bins.len()],
            ..self.clone()
        })
    }
}

fn collapse_pairs(
    t: u64,
    agents: u64,
    mass: f64,
    pairs: &[(u64, f64)],
    regime: &ScalingRegime,
    opts: &CollapseOptions,
) -> Result<ScaledDistribution> {
    if t == 0 {
        return Err(Error::invalid("t", "cannot collapse the t = 0 histogram"));
    }
    if !(mass > 0.0) {
        return Err(Error::InsufficientData("empty histogram".into()));
    }
    let w = regime.width(t as f64)?;
    let mean = t as f64 / agents as f64;
    let zero = pairs.iter().find(|p| p.0 == 0).map_or(0.0, |p| p.1);

    let mut positive: Vec<(u64, f64)> = pairs.iter().copied().filter(|p| p.0 > 0).collect();
    if opts.include_empty && !positive.is_empty() {
        let (lo, hi) = (positive[0].0, positive[positive.len() - 1].0);
        let mut dense = Vec::with_capacity((hi - lo + 1) as usize);
        let mut it = positive.iter().peekable();
        for k in lo..=hi {
            match it.peek() {
                Some(&&(kk, c)) if kk == k => {
                    dense.push((k, c));
                    it.next();
                }
                _ => dense.push((k, 0.0)),
            }
        }
        positive = dense;
    }

    let mut out = ScaledDistribution {
        x: Vec::new(),
        f: Vec::new(),
        dx: Vec::new(),
        zero_atom: zero / mass,
        t,
        agents,
        mass,
        width: w,
        regime: *regime,
        binning: opts.binning,
    };
    let mut push = |lo: u64, hi: u64, c: f64| {
        let span = (hi - lo) as f64;
        let centre = (lo + hi - 1) as f64 / 2.0;
        out.x.push((centre - mean) / w);
        out.f.push(w * c / (mass * span));
        out.dx.push(span / w);
    };
    match opts.binning {
        Binning::Unit => {
            for &(k, c) in &positive {
                push(k, k + 1, c);
            }
        }
        Binning::LogTail { ratio, start_x } => {
            if !(ratio > 1.0) {
                return Err(Error::invalid("binning", "log ratio must exceed 1"));
            }
            let k0 = ((mean + start_x * w).ceil() as u64).max(1);
            let mut i = 0;
            while i < positive.len() && positive[i].0 < k0 {
                push(positive[i].0, positive[i].0 + 1, positive[i].1);
                i += 1;
            }
            let mut lo = k0;
            while i < positive.len() {
                let hi = ((lo as f64 * ratio).ceil() as u64).max(lo + 1);
                let mut c = 0.0;
                while i < positive.len() && positive[i].0 < hi {
                    c += positive[i].1;
                    i += 1;
                }
                if c > 0.0 || opts.include_empty {
                    push(lo, hi, c);
                }
                lo = hi;
            }
        }
    }
    Ok(out)
}

/// Scales a histogram by the regime's width function.
pub fn collapse(
    hist: &WealthHistogram,
    regime: &ScalingRegime,
    opts: &CollapseOptions,
) -> Result<ScaledDistribution> {
    let pairs: Vec<(u64, f64)> = hist.counts.iter().map(|&(k, c)| (k, c as f64)).collect();
    collapse_pairs(
        hist.t,
        hist.agents,
        hist.mass() as f64,
        &pairs,
        regime,
        opts,
    )
}

/// Scales expected occupancies from the mean-field recursion.
pub fn collapse_occupancy(
    occ: &OccupancyVector,
    regime: &ScalingRegime,
    opts: &CollapseOptions,
) -> Result<ScaledDistribution> {
    let pairs: Vec<(u64, f64)> = occ.nonzero().collect();
    collapse_pairs(
        occ.t(),
        occ.agents() as u64,
        occ.mass(),
        &pairs,
        regime,
        opts,
    )
}

/// Inverse of [`collapse`] for unit-binned distributions.
pub fn uncollapse(sd: &ScaledDistribution) -> Result<WealthHistogram> {
    if sd.binning != Binning::Unit {
        return Err(Error::invalid("binning", "only unit bins can be inverted"));
    }
    let mean = sd.t as f64 / sd.agents as f64;
    let mut pairs = vec![(0, (sd.zero_atom * sd.mass).round() as u64)];
    for i in 0..sd.len() {
        let k = (sd.x[i] * sd.width + mean).round() as u64;
        let c = (sd.f[i] * sd.mass / sd.width).round() as u64;
        pairs.push((k, c));
    }
    Ok(WealthHistogram::from_pairs(sd.t, sd.agents, pairs))
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return ys[0];
    }
    if i == xs.len() {
        return ys[xs.len() - 1];
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
}

/// L1 distance between the two cumulative distributions over the overlap of
/// their x-ranges.
///
/// Both CDFs are linearly interpolated onto the union of their grid points
/// inside the overlap and integrated with the trapezoid rule.
pub fn collapse_distance(a: &ScaledDistribution, b: &ScaledDistribution) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty scaled distribution".into()));
    }
    let lo = a.x[0].max(b.x[0]);
    let hi = a.x[a.len() - 1].min(b.x[b.len() - 1]);
    if !(lo < hi) {
        return Err(Error::InsufficientData("x-ranges do not overlap".into()));
    }
    let mut grid: Vec<f64> =
        a.x.iter()
            .chain(&b.x)
            .copied()
            .filter(|&x| x > lo && x < hi)
            .chain([lo, hi])
            .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let (fa, fb) = (a.cdf(), b.cdf());
    let diff: Vec<f64> = grid
        .iter()
        .map(|&x| (interp(&a.x, &fa, x) - interp(&b.x, &fb, x)).abs())
        .collect();
    Ok(grid
        .windows(2)
        .zip(diff.windows(2))
        .map(|(g, d)| 0.5 * (d[0] + d[1]) * (g[1] - g[0]))
        .sum())
}
