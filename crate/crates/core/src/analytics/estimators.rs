use serde::{Deserialize, Serialize};

use super::collapse::ScaledDistribution;
use crate::error::{Error, Result};
use crate::model::WealthHistogram;

/// Tail fractions reported alongside every Hill estimate.
pub const HILL_SWEEP: [f64; 3] = [0.005, 0.01, 0.02];

const MIN_TAIL_POINTS: usize = 50;
const MIN_STRETCHED_POINTS: usize = 10;
const MIN_WIDTH_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimate: f64,
    pub stderr: f64,
    /// Range of the data used, in the fitted variable.
    pub window: (f64, f64),
    pub n_points: usize,
    /// Goodness-of-fit or stability figure; meaning depends on the estimator.
    pub diagnostics: f64,
}

struct LineFit {
    slope: f64,
    slope_se: f64,
    rms: f64,
}

fn least_squares(points: &[(f64, f64)]) -> LineFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - icpt - slope * p.0).powi(2))
        .sum();
    let dof = (points.len() as f64 - 2.0).max(1.0);
    LineFit {
        slope,
        slope_se: (sse / dof / sxx).sqrt(),
        rms: (sse / n).sqrt(),
    }
}

fn hill_core(sorted_desc: &[f64], tail_fraction: f64) -> Result<FitResult> {
    let n = sorted_desc.len();
    let m = (tail_fraction * n as f64).floor() as usize;
    if m < MIN_TAIL_POINTS || m >= n {
        return Err(Error::InsufficientData(format!(
            "tail fraction {tail_fraction} of {n} samples leaves {m} tail points (need {MIN_TAIL_POINTS})"
        )));
    }
    let threshold = sorted_desc[m];
    let sum: f64 = sorted_desc[..m].iter().map(|&x| (x / threshold).ln()).sum();
    if !(sum > 0.0) {
        return Err(Error::Degenerate("no variation in the tail".into()));
    }
    let lambda = 1.0 + m as f64 / sum;
    Ok(FitResult {
        estimate: lambda,
        stderr: (lambda - 1.0) / (m as f64).sqrt(),
        window: (threshold, sorted_desc[0]),
        n_points: m,
        diagnostics: 0.0,
    })
}

fn sorted_positive(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid(
            "samples",
            "Hill estimation needs finite positive samples",
        ));
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

/// Hill estimate of the density exponent `lambda` in `P(k) ~ k^(-lambda)`.
///
/// Uses the top `m = floor(tail_fraction * n)` order statistics:
/// `lambda = 1 + m / sum_i ln(k_(i) / k_(m+1))`, `stderr = (lambda - 1)/sqrt(m)`.
/// `diagnostics` holds the largest deviation of the estimate across the
/// [`HILL_SWEEP`] fractions that have enough tail points.
pub fn hill_tail_exponent(samples: &[f64], tail_fraction: f64) -> Result<FitResult> {
    let sorted = sorted_positive(samples)?;
    let mut fit = hill_core(&sorted, tail_fraction)?;
    fit.diagnostics = HILL_SWEEP
        .iter()
        .filter_map(|&q| hill_core(&sorted, q).ok())
        .map(|f| (f.estimate - fit.estimate).abs())
        .fold(0.0, f64::max);
    Ok(fit)
}

/// Hill estimates at each sweep fraction; fractions without enough tail
/// points map to an error.
pub fn hill_sensitivity_sweep(
    samples: &[f64],
    fractions: &[f64],
) -> Result<Vec<(f64, Result<FitResult>)>> {
    let sorted = sorted_positive(samples)?;
    Ok(fractions
        .iter()
        .map(|&q| (q, hill_core(&sorted, q)))
        .collect())
}

/// Slope of `ln(-ln f)` against `ln|x|` over a window on the negative side,
/// estimating the stretched-exponential power. `diagnostics` is the residual RMS.
pub fn stretched_exponential_fit(sd: &ScaledDistribution, window: (f64, f64)) -> Result<FitResult> {
    let (lo, hi) = window;
    if !(lo < hi && hi < 0.0) {
        return Err(Error::invalid(
            "window",
            "must be a nonempty range of negative x",
        ));
    }
    let pts: Vec<(f64, f64)> =
        sd.x.iter()
            .zip(&sd.f)
            .filter(|&(&x, &f)| x >= lo && x <= hi && f > 0.0)
            .map(|(&x, &f)| (x, f.ln()))
            .collect();
    if let Some(&(x, ln_f)) = pts.iter().find(|p| p.1 >= 0.0) {
        return Err(Error::Degenerate(format!(
            "f = {:.4} >= 1 at x = {x:.5}; ln(-ln f) is undefined",
            ln_f.exp()
        )));
    }
    stretched_exponent_from_log_density(&pts)
}

/// As [`stretched_exponential_fit`], from `(x, ln f)` pairs with `x < 0` and
/// `ln f < 0`. Working with `ln f` keeps far-tail points whose `f` underflows.
pub fn stretched_exponent_from_log_density(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < MIN_STRETCHED_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points in window (need {MIN_STRETCHED_POINTS})",
            points.len()
        )));
    }
    if points.iter().any(|&(x, lf)| !(x < 0.0) || !(lf < 0.0)) {
        return Err(Error::Degenerate("points need x < 0 and f < 1".into()));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, lf)| ((-x).ln(), (-lf).ln()))
        .collect();
    let line = least_squares(&xy);
    let xs = points.iter().map(|p| p.0);
    Ok(FitResult {
        estimate: line.slope,
        stderr: line.slope_se,
        window: (
            xs.clone().fold(f64::INFINITY, f64::min),
            xs.fold(f64::NEG_INFINITY, f64::max),
        ),
        n_points: points.len(),
        diagnostics: line.rms,
    })
}

/// Growth exponent of the width: slope of `ln w` against `ln t`.
pub fn width_exponent_fit(widths: &[(f64, f64)]) -> Result<FitResult> {
    if widths.len() < MIN_WIDTH_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} time points (need {MIN_WIDTH_POINTS})",
            widths.len()
        )));
    }
    if widths.iter().any(|&(t, w)| !(t > 0.0) || !(w > 0.0)) {
        return Err(Error::invalid(
            "widths",
            "times and widths must be positive",
        ));
    }
    let t_lo = widths.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = widths.iter().map(|p| p.0).fold(0.0, f64::max);
    if t_hi / t_lo < 100.0 {
        return Err(Error::InsufficientData(
            "time points must span two decades".into(),
        ));
    }
    let xy: Vec<(f64, f64)> = widths.iter().map(|&(t, w)| (t.ln(), w.ln())).collect();
    let line = least_squares(&xy);
    Ok(FitResult {
        estimate: line.slope,
        stderr: line.slope_se,
        window: (t_lo, t_hi),
        n_points: widths.len(),
        diagnostics: line.rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WidthEstimator {
    /// Median absolute deviation about the median.
    #[default]
    Mad,
    /// Half the interquartile range.
    Iqr,
}

/// Value at 0-based `rank` of the sorted expansion of `(value, count)` pairs
/// already sorted by value.
fn ranked(pairs: &[(f64, u64)], rank: u64) -> f64 {
    let mut seen = 0;
    for &(v, c) in pairs {
        seen += c;
        if seen > rank {
            return v;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

/// Median absolute deviation of the wealth distribution, exact from counts.
/// Medians take the lower middle element.
pub fn robust_width(hist: &WealthHistogram) -> f64 {
    robust_width_with(hist, WidthEstimator::Mad)
}

pub fn robust_width_with(hist: &WealthHistogram, estimator: WidthEstimator) -> f64 {
    let n = hist.mass();
    if n == 0 {
        return 0.0;
    }
    let pairs: Vec<(f64, u64)> = hist.counts.iter().map(|&(k, c)| (k as f64, c)).collect();
    match estimator {
        WidthEstimator::Mad => {
            let med = ranked(&pairs, (n - 1) / 2);
            let mut dev: Vec<(f64, u64)> =
                pairs.iter().map(|&(k, c)| ((k - med).abs(), c)).collect();
            dev.sort_by(|a, b| a.0.total_cmp(&b.0));
            ranked(&dev, (n - 1) / 2)
        }
        WidthEstimator::Iqr => {
            let q1 = ranked(&pairs, (n - 1) / 4);
            let q3 = ranked(&pairs, 3 * (n - 1) / 4);
            (q3 - q1) / 2.0
        }
    }
}

/// Compares a histogram with the Gaussian limit for `r < 1/2`.
///
/// Returns `(|mean - t/A| / (t/A), variance / [t / (A (1 - 2r))])`.
pub fn gaussian_moment_test(hist: &WealthHistogram, r: f64) -> Result<(f64, f64)> {
    if !(0.0..0.5).contains(&r) {
        return Err(Error::invalid(
            "r",
            "Gaussian moment test applies for 0 <= r < 1/2",
        ));
    }
    if hist.t == 0 || hist.mass() == 0 {
        return Err(Error::InsufficientData(
            "need t > 0 and a nonempty histogram".into(),
        ));
    }
    let t = hist.t as f64;
    let a = hist.agents as f64;
    let expected_mean = t / a;
    let expected_var = t / (a * (1.0 - 2.0 * r));
    Ok((
        (hist.mean() - expected_mean).abs() / expected_mean,
        hist.variance() / expected_var,
    ))
}
