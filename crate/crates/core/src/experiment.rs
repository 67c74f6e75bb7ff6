//! Experiment runner behind the `wealthsim` binary.
//!
//! Every option is a long flag; the same keys may be given in a flat
//! `key = value` file passed with `--config`, and flags on the command line
//! take precedence over the file. Artifacts are written under `--output`:
//!
//! | mode        | files |
//! |-------------|-------|
//! | `simulate`  | `hist_t<T>.csv` (`t,k,count`), plus `ensemble_t<T>.csv` (`t,k,mean,stderr`) when `replicas > 1` |
//! | `collapse`  | as `simulate`, plus `scaled_t<T>.csv` (`x,f`) and `distances.csv` (`t_a,t_b,distance`) |
//! | `meanfield` | `meanfield_t<T>.csv` (`t,k,count`, real-valued expected counts) and `scaled_t<T>.csv` |
//! | `fit`       | `fit_<target>.json` |
//! | `figure1`   | one directory per panel with collapse artifacts and `reference.csv` |
//! | `reference` | `reference.csv` (`x,f`) |
//!
//! CSV files open with `#` comment lines carrying the tool version, the
//! canonical command that reproduces the file, the RNG algorithm and every
//! resolved option as `# key = value`. Output is deterministic, so rerunning
//! the recorded command yields byte-identical files.
//!
//! Fit reports always carry `target`, `command`, `rng`, `config` and `inputs`.
//! The `tail`, `scaled-tail`, `width` and `stretched` targets add `estimate`,
//! `stderr`, `window`, `n_points` and `diagnostics`; `tail` and `scaled-tail`
//! add `sweep`, `width` adds `widths`, `stretched` adds `mad_x` and
//! `x_window`. The `gaussian` target reports `mean_error` and
//! `variance_ratio`.

use std::collections::{BTreeMap, HashSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::{json, Value};

use crate::analytics::{
    collapse, collapse_distance, collapse_occupancy, gaussian_moment_test, hill_sensitivity_sweep,
    hill_tail_exponent, robust_width_with, stretched_exponential_fit, width_exponent_fit, Binning,
    CollapseOptions, FitResult, ScaledDistribution, ScalingRegime, WidthEstimator, HILL_SWEEP,
};
use crate::error::{Error, Result};
use crate::meanfield::{default_t_grid, evolve_expected, parametric_scaling_curve};
use crate::model::{ensemble_run, run, ModelParams, WealthHistogram};
use crate::rng::RNG_ALGORITHM;

const TOOL: &str = concat!("wealthsim ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Simulate,
    Meanfield,
    Collapse,
    Fit,
    Figure1,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Panel {
    /// r = 1/4.
    TopLeft,
    /// r = 3/4.
    TopRight,
    /// r = 1/2.
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitTarget {
    /// Hill exponent of the wealth of agents with k >= 1.
    Tail,
    /// Hill exponent of the positive scaled deviations x > 0.
    ScaledTail,
    /// Growth exponent of the robust width across input times.
    Width,
    /// Stretched-exponential power on the negative side.
    Stretched,
    /// Mean and variance against the Gaussian limit.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BinningKind {
    Unit,
    LogTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WidthKind {
    Mad,
    Iqr,
}

/// Comma-separated times; scientific notation such as `1e5` is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Checkpoints(pub Vec<u64>);

/// Negative-side fit window `lo,hi` in units of the empirical MAD of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MadWindow(pub f64, pub f64);

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(
    name = "wealthsim",
    version,
    about = "Wealth concentration by mixed uniform and preferential disbursement"
)]
pub struct ExperimentConfig {
    #[arg(value_enum)]
    pub mode: Mode,

    /// Number of agents A.
    #[arg(long, default_value_t = 1000, value_parser = parse_usize)]
    pub agents: usize,

    /// Probability that a step is preferential.
    #[arg(long, default_value_t = 0.75)]
    pub r: f64,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Final time; defaults to the last checkpoint.
    #[arg(long, value_parser = parse_u64)]
    pub t_max: Option<u64>,

    /// Times at which histograms are recorded; defaults to `t-max`.
    #[arg(long, default_value = "", value_parser = parse_checkpoints)]
    pub checkpoints: Checkpoints,

    #[arg(long, default_value_t = 1, value_parser = parse_u64)]
    pub replicas: u64,

    /// Truncation index for the mean-field recursion; chosen automatically if absent.
    #[arg(long, value_parser = parse_usize)]
    pub k_max: Option<usize>,

    #[arg(long, value_enum, default_value_t = BinningKind::Unit)]
    pub binning: BinningKind,

    /// Scaled position where logarithmic bins start.
    #[arg(long, default_value_t = 2.0)]
    pub log_tail_start: f64,

    #[arg(long, default_value_t = 0.01)]
    pub tail_fraction: f64,

    #[arg(long, default_value = "-3,-1", allow_hyphen_values = true, value_parser = parse_window)]
    pub stretched_window: MadWindow,

    #[arg(long, value_enum, default_value_t = WidthKind::Mad)]
    pub width_estimator: WidthKind,

    #[arg(long, value_enum, default_value_t = FitTarget::Tail)]
    pub what: FitTarget,

    /// Histogram files to analyse (`fit` mode).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub input: Vec<PathBuf>,

    /// Panel to reproduce in `figure1` mode; all three if absent.
    #[arg(long, value_enum)]
    pub panel: Option<Panel>,

    #[arg(long, default_value = "out")]
    pub output: PathBuf,

    /// Flat `key = value` file of defaults for any of the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.fract() != 0.0 || !(0.0..=u64::MAX as f64).contains(&v) {
        return Err(format!("`{s}` is not a nonnegative integer"));
    }
    Ok(v as u64)
}

fn parse_usize(s: &str) -> Result<usize, String> {
    parse_u64(s).and_then(|v| usize::try_from(v).map_err(|e| e.to_string()))
}

fn parse_checkpoints(s: &str) -> Result<Checkpoints, String> {
    if s.trim().is_empty() {
        return Ok(Checkpoints::default());
    }
    s.split(',')
        .map(parse_u64)
        .collect::<Result<_, _>>()
        .map(Checkpoints)
}

fn parse_window(s: &str) -> Result<MadWindow, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [lo, hi] = parts[..] else {
        return Err("expected `lo,hi`".into());
    };
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{v}` is not a number"))
    };
    Ok(MadWindow(num(lo)?, num(hi)?))
}

fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

/// Reads a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            reason: format!("line {}: expected `key = value`", n + 1),
        })?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts config-file entries ahead of the command-line arguments, skipping
/// keys already given as flags so that the command line wins.
fn merge_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let given: HashSet<String> = args
        .iter()
        .skip(1)
        .filter_map(|a| {
            a.to_str()?
                .strip_prefix("--")
                .map(|f| f.split('=').next().unwrap_or(f).to_string())
        })
        .collect();
    let has_mode = args.iter().skip(1).any(|a| {
        a.to_str()
            .is_some_and(|s| Mode::value_variants().iter().any(|m| value_name(m) == s))
    });
    let mut merged = vec![args[0].clone()];
    for (key, value) in read_config_file(&path)? {
        if key == "mode" {
            if !has_mode {
                merged.push(value.into());
            }
        } else if !given.contains(&key) {
            merged.push(format!("--{key}={value}").into());
        }
    }
    merged.extend(args.into_iter().skip(1));
    Ok(merged)
}

/// Failure of [`parse_args`]: either a clap message (including help and
/// version output) or a library error.
#[derive(Debug)]
pub enum ArgsError {
    Clap(clap::Error),
    Config(Error),
}

/// Parses command-line arguments (including the program name), applying any
/// `--config` file, then validates and resolves defaults.
pub fn parse_args<I, T>(args: I) -> Result<ExperimentConfig, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = merge_config_file(args).map_err(ArgsError::Config)?;
    let mut cfg = ExperimentConfig::try_parse_from(args).map_err(ArgsError::Clap)?;
    cfg.resolve().map_err(ArgsError::Config)?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Applies presets and defaults, then validates.
    pub fn resolve(&mut self) -> Result<()> {
        if self.mode == Mode::Figure1 {
            // figure1 runs every requested panel with its own preset, so only
            // a single-panel run has a well-defined resolved configuration.
            if let Some(p) = self.panel {
                self.apply_panel(p);
            }
        }
        match (self.t_max, self.checkpoints.0.last()) {
            (None, Some(&last)) => self.t_max = Some(last),
            (Some(t), None) => self.checkpoints = Checkpoints(vec![t]),
            _ => {}
        }
        self.validate()
    }

    fn apply_panel(&mut self, panel: Panel) {
        let (r, cps): (f64, &[u64]) = match panel {
            Panel::TopLeft => (0.25, &[100_000, 200_000, 400_000, 800_000]),
            Panel::TopRight => (0.75, &[100_000, 200_000, 400_000, 800_000]),
            Panel::Bottom => (0.5, &[10_000_000, 40_000_000, 160_000_000]),
        };
        self.agents = 1000;
        self.r = r;
        self.checkpoints = Checkpoints(cps.to_vec());
        self.t_max = cps.last().copied();
        self.panel = Some(panel);
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        let cps = &self.checkpoints.0;
        if cps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("checkpoints", "must be sorted ascending"));
        }
        if let (Some(t), Some(&last)) = (self.t_max, cps.last()) {
            if last > t {
                return Err(Error::invalid(
                    "checkpoints",
                    format!("{last} exceeds t-max {t}"),
                ));
            }
        }
        let needs_time = matches!(
            self.mode,
            Mode::Simulate | Mode::Collapse | Mode::Meanfield | Mode::Reference
        );
        if needs_time && self.t_max.is_none() {
            return Err(Error::invalid("t-max", "give t-max or checkpoints"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(Error::invalid("tail-fraction", "must lie in (0, 1)"));
        }
        let MadWindow(lo, hi) = self.stretched_window;
        if !(lo < hi && hi < 0.0) {
            return Err(Error::invalid("stretched-window", "needs lo < hi < 0"));
        }
        if !(self.log_tail_start.is_finite()) {
            return Err(Error::invalid("log-tail-start", "must be finite"));
        }
        if self.mode == Mode::Fit && self.input.is_empty() {
            return Err(Error::invalid(
                "input",
                "fit needs at least one histogram file",
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            agents: self.agents,
            r: self.r,
            seed: self.seed,
            bootstrap: Default::default(),
        }
    }

    pub fn collapse_options(&self) -> CollapseOptions {
        CollapseOptions {
            binning: match self.binning {
                BinningKind::Unit => Binning::Unit,
                BinningKind::LogTail => Binning::default_log_tail(self.log_tail_start),
            },
            include_empty: false,
        }
    }

    fn width_estimator(&self) -> WidthEstimator {
        match self.width_estimator {
            WidthKind::Mad => WidthEstimator::Mad,
            WidthKind::Iqr => WidthEstimator::Iqr,
        }
    }

    /// Every resolved option except the output location, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            ("mode", value_name(&self.mode)),
            ("agents", self.agents.to_string()),
            ("r", self.r.to_string()),
            ("seed", self.seed.to_string()),
            ("t-max", opt(self.t_max.map(|t| t.to_string()))),
            ("checkpoints", join(&self.checkpoints.0)),
            ("replicas", self.replicas.to_string()),
            ("k-max", opt(self.k_max.map(|k| k.to_string()))),
            ("binning", value_name(&self.binning)),
            ("log-tail-start", self.log_tail_start.to_string()),
            ("tail-fraction", self.tail_fraction.to_string()),
            (
                "stretched-window",
                format!("{},{}", self.stretched_window.0, self.stretched_window.1),
            ),
            ("width-estimator", value_name(&self.width_estimator)),
            ("what", value_name(&self.what)),
            (
                "input",
                self.input
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("panel", opt(self.panel.map(|p| value_name(&p)))),
        ]
    }

    /// Command line that reproduces this configuration (without `--output`).
    pub fn command_line(&self) -> String {
        let mut cmd = format!("wealthsim {}", value_name(&self.mode));
        for (k, v) in self.entries().into_iter().skip(1) {
            if !v.is_empty() {
                let _ = write!(cmd, " --{k}={v}");
            }
        }
        cmd
    }

    fn header(&self) -> Vec<String> {
        let mut lines = vec![
            TOOL.to_string(),
            format!("command: {}", self.command_line()),
            format!("rng: {RNG_ALGORITHM}"),
        ];
        lines.extend(
            self.entries()
                .into_iter()
                .map(|(k, v)| format!("{k} = {v}")),
        );
        lines
    }
}

fn join(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

/// Formats floats so they parse back exactly, switching to exponent form
/// for very small or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv(
    header: &[String],
    extra: &[String],
    columns: &str,
    rows: impl IntoIterator<Item = String>,
) -> String {
    let mut s = String::new();
    for line in header.iter().chain(extra) {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(columns);
    s.push('\n');
    for row in rows {
        s.push_str(&row);
        s.push('\n');
    }
    s
}

fn histogram_csv(header: &[String], extra: &[String], h: &WealthHistogram) -> String {
    csv(
        header,
        extra,
        "t,k,count",
        h.counts.iter().map(|&(k, c)| format!("{},{k},{c}", h.t)),
    )
}

fn scaled_csv(header: &[String], sd: &ScaledDistribution) -> String {
    let extra = [
        format!("t = {}", sd.t),
        format!("width = {}", num(sd.width)),
        format!("zero_atom = {}", num(sd.zero_atom)),
        format!("samples = {}", num(sd.mass)),
    ];
    csv(
        header,
        &extra,
        "x,f",
        sd.x.iter()
            .zip(&sd.f)
            .map(|(&x, &f)| format!("{},{}", num(x), num(f))),
    )
}

/// Reference scaling function in the same `(x, f)` convention as collapsed
/// data: the Gaussian limit for `r <= 1/2` and the rate-equation curve for
/// `r > 1/2`.
pub fn reference_curve(
    r: f64,
    agents: usize,
    t: u64,
    regime: &ScalingRegime,
) -> Result<Vec<(f64, f64)>> {
    if regime.r != r {
        return Err(Error::invalid("regime", "does not match r"));
    }
    let a = agents as f64;
    if r <= 0.5 {
        if t < 2 {
            return Err(Error::invalid("t", "reference curve needs t >= 2"));
        }
        // Scaled variance per agent: (1 - 2r)/A below the critical point,
        // 1/A at it (the (t ln t) width already absorbs the logarithm).
        let inv_var = if r < 0.5 { a * (1.0 - 2.0 * r) } else { a };
        let sigma = inv_var.recip().sqrt();
        let w = regime.width(t as f64)?;
        let mean = t as f64 / a;
        let lo = (mean - 8.0 * sigma * w).floor().max(0.0) as u64;
        let hi = (mean + 8.0 * sigma * w).ceil() as u64;
        let stride = ((hi - lo) / 2000).max(1);
        let peak = (inv_var / (2.0 * std::f64::consts::PI)).sqrt();
        Ok((lo..=hi)
            .step_by(stride as usize)
            .map(|k| {
                let x = (k as f64 - mean) / w;
                (x, peak * (-0.5 * inv_var * x * x).exp())
            })
            .collect())
    } else if r < 1.0 {
        let curve = parametric_scaling_curve(agents, r, &default_t_grid(agents, r)?)?;
        Ok(curve.points.iter().rev().map(|p| (p.x, p.f)).collect())
    } else {
        Err(Error::invalid("r", "no finite reference curve at r = 1"))
    }
}

/// Writes [`reference_curve`] to `output` as an `x,f` CSV.
pub fn emit_reference_curves(
    r: f64,
    agents: usize,
    t: u64,
    regime: &ScalingRegime,
    output: &Path,
) -> Result<PathBuf> {
    let header = vec![
        TOOL.to_string(),
        format!("r = {r}"),
        format!("agents = {agents}"),
        format!("t = {t}"),
    ];
    write_reference(&header, r, agents, t, regime, output)
}

fn write_reference(
    header: &[String],
    r: f64,
    agents: usize,
    t: u64,
    regime: &ScalingRegime,
    output: &Path,
) -> Result<PathBuf> {
    let pts = reference_curve(r, agents, t, regime)?;
    let kind = if r <= 0.5 {
        "gaussian"
    } else {
        "rate-equation"
    };
    let body = csv(
        header,
        &[format!("reference = {kind}"), format!("t = {t}")],
        "x,f",
        pts.iter().map(|&(x, f)| format!("{},{}", num(x), num(f))),
    );
    write_file(output, &body)?;
    Ok(output.to_path_buf())
}

/// Runs the configured experiment and returns the paths written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Simulate => simulate(cfg, &cfg.output, false),
        Mode::Collapse => simulate(cfg, &cfg.output, true),
        Mode::Meanfield => meanfield(cfg),
        Mode::Fit => fit(cfg),
        Mode::Reference => {
            let regime = ScalingRegime::for_r(cfg.r)?;
            let t = cfg.t_max.expect("validated");
            let path = cfg.output.join("reference.csv");
            write_reference(&cfg.header(), cfg.r, cfg.agents, t, &regime, &path).map(|p| vec![p])
        }
        Mode::Figure1 => {
            let panels = match cfg.panel {
                Some(p) => vec![p],
                None => vec![Panel::TopLeft, Panel::TopRight, Panel::Bottom],
            };
            let mut out = Vec::new();
            for p in panels {
                let mut panel_cfg = cfg.clone();
                panel_cfg.apply_panel(p);
                panel_cfg.validate()?;
                let dir = cfg.output.join(value_name(&p));
                out.extend(simulate(&panel_cfg, &dir, true)?);
                let regime = ScalingRegime::for_r(panel_cfg.r)?;
                let t = *panel_cfg.checkpoints.0.last().unwrap_or(&2);
                out.push(write_reference(
                    &panel_cfg.header(),
                    panel_cfg.r,
                    panel_cfg.agents,
                    t,
                    &regime,
                    &dir.join("reference.csv"),
                )?);
            }
            Ok(out)
        }
    }
}

fn simulate(cfg: &ExperimentConfig, dir: &Path, scaled: bool) -> Result<Vec<PathBuf>> {
    let params = cfg.params();
    let t_max = cfg.t_max.expect("validated");
    let cps = &cfg.checkpoints.0;
    let header = cfg.header();
    let mut out = Vec::new();
    let pooled: Vec<WealthHistogram> = if cfg.replicas == 1 {
        run(&params, t_max, cps)?
    } else {
        let ens = ensemble_run(&params, t_max, cps, cfg.replicas)?;
        for e in &ens {
            let path = dir.join(format!("ensemble_t{}.csv", e.t));
            let rows = e
                .mean
                .iter()
                .map(|&(k, m, se)| format!("{},{k},{},{}", e.t, num(m), num(se)));
            write_file(&path, &csv(&header, &[], "t,k,mean,stderr", rows))?;
            out.push(path);
        }
        ens.into_iter().map(|e| e.pooled).collect()
    };
    let extra = [format!("pooled_replicas = {}", cfg.replicas)];
    for h in &pooled {
        let path = dir.join(format!("hist_t{}.csv", h.t));
        write_file(&path, &histogram_csv(&header, &extra, h))?;
        out.push(path);
    }
    if scaled {
        let regime = ScalingRegime::for_r(cfg.r)?;
        let opts = cfg.collapse_options();
        let sds: Vec<ScaledDistribution> = pooled
            .iter()
            .map(|h| collapse(h, &regime, &opts))
            .collect::<Result<_>>()?;
        for sd in &sds {
            let path = dir.join(format!("scaled_t{}.csv", sd.t));
            write_file(&path, &scaled_csv(&header, sd))?;
            out.push(path);
        }
        let rows = sds
            .windows(2)
            .map(|p| {
                collapse_distance(&p[0], &p[1]).map(|d| format!("{},{},{}", p[0].t, p[1].t, num(d)))
            })
            .collect::<Result<Vec<_>>>()?;
        let path = dir.join("distances.csv");
        write_file(&path, &csv(&header, &[], "t_a,t_b,distance", rows))?;
        out.push(path);
    }
    Ok(out)
}

fn meanfield(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let params = cfg.params();
    let occs = evolve_expected(
        &params,
        cfg.t_max.expect("validated"),
        cfg.k_max,
        &cfg.checkpoints.0,
    )?;
    let header = cfg.header();
    let regime = ScalingRegime::for_r(cfg.r)?;
    let mut out = Vec::new();
    for occ in &occs {
        if let Some(w) = occ.truncation_warning() {
            eprintln!("warning: {w}");
        }
        let extra = [
            format!("k_max = {}", occ.k_max()),
            format!("leaked_mass = {}", num(occ.leaked_mass())),
            format!("pruned_mass = {}", num(occ.pruned_mass())),
        ];
        let rows = occ
            .nonzero()
            .map(|(k, n)| format!("{},{k},{}", occ.t(), num(n)));
        let path = cfg.output.join(format!("meanfield_t{}.csv", occ.t()));
        write_file(&path, &csv(&header, &extra, "t,k,count", rows))?;
        out.push(path);
        if occ.t() >= 2 {
            let sd = collapse_occupancy(occ, &regime, &cfg.collapse_options())?;
            let path = cfg.output.join(format!("scaled_t{}.csv", occ.t()));
            write_file(&path, &scaled_csv(&header, &sd))?;
            out.push(path);
        }
    }
    Ok(out)
}

/// Histogram CSV as written by `simulate`, with its `# key = value` header.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramFile {
    pub histogram: WealthHistogram,
    pub meta: BTreeMap<String, String>,
}

/// Reads a `t,k,count` file. The agent count comes from the `agents` header
/// entry when present, otherwise from the total count.
pub fn read_histogram(path: &Path) -> Result<HistogramFile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let mut meta = BTreeMap::new();
    let mut t = None;
    let mut pairs = Vec::new();
    let mut seen_columns = false;
    for (n, line) in text.lines().enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !seen_columns {
            if line.trim() != "t,k,count" {
                return Err(bad(format!("expected `t,k,count` columns, found `{line}`")));
            }
            seen_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parsed = match f[..] {
            [a, b, c] => a
                .parse::<u64>()
                .ok()
                .zip(b.parse::<u64>().ok())
                .zip(c.parse::<u64>().ok()),
            _ => None,
        };
        let ((row_t, k), c) =
            parsed.ok_or_else(|| bad(format!("line {}: expected three integers", n + 1)))?;
        if t.is_some_and(|t0| t0 != row_t) {
            return Err(bad("rows carry different t".into()));
        }
        t = Some(row_t);
        pairs.push((k, c));
    }
    let t = t.ok_or_else(|| bad("no data rows".into()))?;
    let mass: u64 = pairs.iter().map(|p| p.1).sum();
    let agents = match meta.get("agents") {
        Some(a) => a
            .parse()
            .map_err(|_| bad(format!("bad agents entry `{a}`")))?,
        None => mass,
    };
    Ok(HistogramFile {
        histogram: WealthHistogram::from_pairs(t, agents, pairs),
        meta,
    })
}

fn fit_json(fit: &FitResult) -> Value {
    json!({
        "estimate": fit.estimate,
        "stderr": fit.stderr,
        "window": [fit.window.0, fit.window.1],
        "n_points": fit.n_points,
        "diagnostics": fit.diagnostics,
    })
}

fn sweep_json(samples: &[f64]) -> Result<Value> {
    let rows = hill_sensitivity_sweep(samples, &HILL_SWEEP)?
        .into_iter()
        .map(|(q, res)| match res {
            Ok(f) => json!({"tail_fraction": q, "estimate": f.estimate, "stderr": f.stderr, "n_points": f.n_points}),
            Err(e) => json!({"tail_fraction": q, "error": e.to_string()}),
        })
        .collect();
    Ok(Value::Array(rows))
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

fn fit(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let files: Vec<HistogramFile> = cfg
        .input
        .iter()
        .map(|p| read_histogram(p))
        .collect::<Result<_>>()?;
    let r = match files[0].meta.get("r") {
        Some(v) => v.parse().map_err(|_| Error::Parse {
            path: cfg.input[0].clone(),
            reason: format!("bad r entry `{v}`"),
        })?,
        None => cfg.r,
    };
    // Parameters recorded in the input take precedence over the flags.
    let cfg = &ExperimentConfig {
        r,
        agents: files[0].histogram.agents as usize,
        ..cfg.clone()
    };
    let mut by_t: BTreeMap<u64, Vec<&WealthHistogram>> = BTreeMap::new();
    for f in &files {
        by_t.entry(f.histogram.t).or_default().push(&f.histogram);
    }
    let pooled: Vec<WealthHistogram> = by_t
        .values()
        .map(|hs| WealthHistogram::pool(hs.iter().copied()))
        .collect::<Result<_>>()?;
    let single = || -> Result<&WealthHistogram> {
        match &pooled[..] {
            [h] => Ok(h),
            _ => Err(Error::invalid(
                "input",
                "this fit needs histograms at a single t",
            )),
        }
    };
    let regime = ScalingRegime::for_r(r)?;
    let mut report = match cfg.what {
        FitTarget::Tail => {
            let samples: Vec<f64> = single()?
                .samples()
                .into_iter()
                .filter(|&k| k >= 1.0)
                .collect();
            let mut v = fit_json(&hill_tail_exponent(&samples, cfg.tail_fraction)?);
            merge(&mut v, json!({"sweep": sweep_json(&samples)?}));
            v
        }
        FitTarget::ScaledTail => {
            let samples = positive_scaled_samples(single()?, &regime)?;
            let mut v = fit_json(&hill_tail_exponent(&samples, cfg.tail_fraction)?);
            merge(&mut v, json!({"sweep": sweep_json(&samples)?}));
            v
        }
        FitTarget::Width => {
            let widths: Vec<(f64, f64)> = pooled
                .iter()
                .map(|h| (h.t as f64, robust_width_with(h, cfg.width_estimator())))
                .collect();
            let mut v = fit_json(&width_exponent_fit(&widths)?);
            merge(&mut v, json!({"widths": widths}));
            v
        }
        FitTarget::Stretched => {
            let (fit, mad_x, window) =
                stretched_fit_in_mad_units(single()?, &regime, cfg.stretched_window)?;
            let mut v = fit_json(&fit);
            merge(
                &mut v,
                json!({"mad_x": mad_x, "x_window": [window.0, window.1]}),
            );
            v
        }
        FitTarget::Gaussian => {
            let (mean_error, variance_ratio) = gaussian_moment_test(single()?, r)?;
            json!({"mean_error": mean_error, "variance_ratio": variance_ratio})
        }
    };
    let config: serde_json::Map<String, Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    let inputs: Vec<Value> = cfg
        .input
        .iter()
        .zip(&files)
        .map(|(p, f)| json!({"path": p.display().to_string(), "t": f.histogram.t, "samples": f.histogram.mass()}))
        .collect();
    merge(
        &mut report,
        json!({
            "target": value_name(&cfg.what),
            "command": cfg.command_line(),
            "rng": RNG_ALGORITHM,
            "config": config,
            "inputs": inputs,
        }),
    );
    let path = cfg
        .output
        .join(format!("fit_{}.json", value_name(&cfg.what)));
    let mut body = serde_json::to_string_pretty(&report).expect("JSON values serialize");
    body.push('\n');
    write_file(&path, &body)?;
    Ok(vec![path])
}

/// Scaled deviations `x = (k - t/A)/w(t)` of every agent with `x > 0`.
pub fn positive_scaled_samples(hist: &WealthHistogram, regime: &ScalingRegime) -> Result<Vec<f64>> {
    let w = regime.width(hist.t as f64)?;
    let mean = hist.t as f64 / hist.agents as f64;
    Ok(hist
        .counts
        .iter()
        .map(|&(k, c)| ((k as f64 - mean) / w, c))
        .filter(|&(x, _)| x > 0.0)
        .flat_map(|(x, c)| std::iter::repeat_n(x, c as usize))
        .collect())
}

/// Stretched-exponential fit with the window given in units of the
/// empirical MAD of `x`. Returns the fit, the MAD and the window in `x`.
pub fn stretched_fit_in_mad_units(
    hist: &WealthHistogram,
    regime: &ScalingRegime,
    window: MadWindow,
) -> Result<(FitResult, f64, (f64, f64))> {
    let w = regime.width(hist.t as f64)?;
    let mad_x = robust_width_with(hist, WidthEstimator::Mad) / w;
    if !(mad_x > 0.0) {
        return Err(Error::Degenerate("zero MAD; window is empty".into()));
    }
    let x_window = (window.0 * mad_x, window.1 * mad_x);
    let sd = collapse(hist, regime, &CollapseOptions::default())?;
    Ok((stretched_exponential_fit(&sd, x_window)?, mad_x, x_window))
}

/// Entry point for the binary: parses `args`, runs, and returns the process
/// exit code (0 success, 1 configuration error, 2 runtime or I/O error).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cfg = match parse_args(args) {
        Ok(cfg) => cfg,
        Err(ArgsError::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
        Err(ArgsError::Config(e)) => {
            eprintln!("error: {e}");
            return if e.is_config_error() { 1 } else { 2 };
        }
    };
    match run_experiment(&cfg) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn parse(args: &[&str]) -> Result<ExperimentConfig, ArgsError> {
        parse_args(std::iter::once("wealthsim").chain(args.iter().copied()))
    }

    #[test]
    fn scientific_checkpoints() {
        let cfg = parse(&["simulate", "--checkpoints", "1e5,2e5,4E5,800000"]).unwrap();
        assert_eq!(cfg.checkpoints.0, vec![100_000, 200_000, 400_000, 800_000]);
        assert_eq!(cfg.t_max, Some(800_000));
        assert!(matches!(
            parse(&["simulate", "--checkpoints", "1.5e0"]),
            Err(ArgsError::Clap(_))
        ));
        assert!(matches!(
            parse(&["simulate", "--t-max", "-3"]),
            Err(ArgsError::Clap(_))
        ));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cases = [
            (vec!["simulate", "--t-max", "10", "--r", "1.5"], "`r`"),
            (
                vec!["simulate", "--t-max", "10", "--agents", "0"],
                "`agents`",
            ),
            (
                vec!["simulate", "--t-max", "10", "--replicas", "0"],
                "`replicas`",
            ),
            (
                vec!["simulate", "--t-max", "10", "--checkpoints", "5,3"],
                "`checkpoints`",
            ),
            (
                vec!["simulate", "--t-max", "10", "--checkpoints", "20"],
                "`checkpoints`",
            ),
            (vec!["simulate"], "`t-max`"),
            (vec!["fit"], "`input`"),
        ];
        for (args, field) in cases {
            match parse(&args) {
                Err(ArgsError::Config(e)) => {
                    assert!(e.is_config_error());
                    assert!(e.to_string().contains(field), "{e} lacks {field}");
                }
                other => panic!("{args:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# comment\nmode = simulate\nagents = 50\nr = 0.3\nt_max = 1e3\nseed = 9\n\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["--config", p, "--seed", "4"]).unwrap();
        assert_eq!(
            (cfg.mode, cfg.agents, cfg.r, cfg.seed),
            (Mode::Simulate, 50, 0.3, 4)
        );
        assert_eq!(cfg.checkpoints.0, vec![1000]);
        let cfg = parse(&["collapse", "--config", p]).unwrap();
        assert_eq!(cfg.mode, Mode::Collapse);
        assert_eq!(cfg.seed, 9);

        fs::write(&path, "agents 50\n").unwrap();
        assert!(matches!(
            parse(&["simulate", "--config", p]),
            Err(ArgsError::Config(Error::Parse { .. }))
        ));
        fs::write(&path, "colour = blue\n").unwrap();
        assert!(matches!(
            parse(&["simulate", "--config", p]),
            Err(ArgsError::Clap(_))
        ));
    }

    #[test]
    fn figure_presets() {
        let cfg = parse(&["figure1", "--panel", "bottom", "--agents", "7"]).unwrap();
        assert_eq!(cfg.agents, 1000);
        assert_eq!(cfg.r, 0.5);
        assert_eq!(cfg.checkpoints.0, vec![10_000_000, 40_000_000, 160_000_000]);
        let cfg = parse(&["figure1", "--panel", "top-left"]).unwrap();
        assert_eq!((cfg.r, cfg.t_max), (0.25, Some(800_000)));
    }

    #[test]
    fn simulate_is_reproducible() {
        let a = tempdir().unwrap();
        let b = tempdir().unwrap();
        for dir in [&a, &b] {
            let cfg = parse(&[
                "collapse",
                "--agents",
                "40",
                "--r",
                "0.75",
                "--checkpoints",
                "2e3,4e3",
                "--replicas",
                "3",
                "--output",
                dir.path().to_str().unwrap(),
            ])
            .unwrap();
            let paths = run_experiment(&cfg).unwrap();
            assert_eq!(paths.len(), 2 + 2 + 2 + 1);
        }
        for name in [
            "hist_t2000.csv",
            "ensemble_t4000.csv",
            "scaled_t4000.csv",
            "distances.csv",
        ] {
            let x = fs::read(a.path().join(name)).unwrap();
            let y = fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        let text = fs::read_to_string(a.path().join("hist_t2000.csv")).unwrap();
        assert!(text.contains("# rng: ChaCha8Rng"));
        assert!(text.contains("# seed = 1\n"));
        assert!(text.contains("\nt,k,count\n2000,"));
    }

    #[test]
    fn histogram_roundtrip_and_fit() {
        let dir = tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let cfg = parse(&[
            "simulate", "--agents", "200", "--r", "0.25", "--t-max", "1e4", "--output", out,
        ])
        .unwrap();
        let paths = run_experiment(&cfg).unwrap();
        let file = read_histogram(&paths[0]).unwrap();
        let direct = run(&cfg.params(), 10_000, &[10_000]).unwrap();
        assert_eq!(file.histogram, direct[0]);
        assert_eq!(file.meta["r"], "0.25");

        let cfg = parse(&[
            "fit",
            "--what",
            "gaussian",
            "--input",
            paths[0].to_str().unwrap(),
            "--output",
            out,
        ])
        .unwrap();
        let json: Value =
            serde_json::from_str(&fs::read_to_string(&run_experiment(&cfg).unwrap()[0]).unwrap())
                .unwrap();
        let (me, vr) = gaussian_moment_test(&direct[0], 0.25).unwrap();
        assert_eq!(json["mean_error"], me);
        assert_eq!(json["variance_ratio"], vr);
        assert_eq!(json["config"]["seed"], "1");
        assert_eq!(json["rng"], RNG_ALGORITHM);
    }

    #[test]
    fn reference_gaussian_peak() {
        for (r, expected) in [
            (0.25, (1000.0 * 0.5 / std::f64::consts::TAU).sqrt()),
            (0.5, (1000.0 / std::f64::consts::TAU).sqrt()),
        ] {
            let regime = ScalingRegime::for_r(r).unwrap();
            let pts = reference_curve(r, 1000, 100_000, &regime).unwrap();
            let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
            assert!(
                (peak - expected).abs() < 1e-6 * expected,
                "{peak} vs {expected}"
            );
            assert!(pts.windows(2).all(|w| w[0].0 < w[1].0));
        }
        let regime = ScalingRegime::for_r(0.75).unwrap();
        let pts = reference_curve(0.75, 1000, 100_000, &regime).unwrap();
        assert_eq!(pts.len(), 1000);
        assert!(pts.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(reference_curve(0.25, 1000, 100, &regime).is_err());
    }

    #[test]
    fn number_format_roundtrips() {
        for v in [0.0, 1.5, -2.25e-9, 3.3e-300, 1e20, 0.1, 123456.789] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
