//! Saturation models of coverage growth.
//!
//! For randomly ordered scenarios the covered volume after `x` inputs follows
//! a cumulative Weibull curve offset by the initially covered volume:
//!
//! ```text
//! V(x) = a * (1 - exp(-b * x^c)) + v_pre
//! ```
//!
//! The coverage coefficient relates a volume to the saturation level,
//! `C = V / (a + v_pre)`.

mod bootstrap;
mod lm;

pub use bootstrap::{bootstrap_fit, thin_curve, BootstrapConfig, BootstrapFit, FitDiagnostics, ParamTriple};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use lm::{LmOptions, SaturationProblem};

/// Fewest curve points accepted by [`fit_weibull`].
pub const MIN_FIT_POINTS: usize = 8;

/// Slack allowed on volumes at the ends of a model's range.
const VOLUME_SLACK: f64 = 1e-9;

/// Cumulative Weibull saturation model of covered volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct WeibullCoverageModel {
    a: f64,
    b: f64,
    c: f64,
    v_pre: f64,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    a: f64,
    b: f64,
    c: f64,
    v_pre: f64,
}

impl TryFrom<RawModel> for WeibullCoverageModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        WeibullCoverageModel::new(raw.a, raw.b, raw.c, raw.v_pre)
    }
}

impl From<WeibullCoverageModel> for RawModel {
    fn from(m: WeibullCoverageModel) -> Self {
        RawModel {
            a: m.a,
            b: m.b,
            c: m.c,
            v_pre: m.v_pre,
        }
    }
}

impl WeibullCoverageModel {
    pub fn new(a: f64, b: f64, c: f64, v_pre: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::contract(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(v_pre.is_finite() && v_pre >= 0.0) {
            return Err(Error::contract(format!("v_pre must be non-negative, got {v_pre}")));
        }
        Ok(WeibullCoverageModel { a, b, c, v_pre })
    }

    /// Saturation limit above the initial coverage.
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn v_pre(&self) -> f64 {
        self.v_pre
    }

    /// `a + v_pre`, approached but never attained.
    pub fn asymptote(&self) -> f64 {
        self.a + self.v_pre
    }

    /// Predicted covered volume after `x` inputs.
    pub fn value(&self, x: f64) -> f64 {
        lm::saturation(self.a, self.b.ln(), self.c, x) + self.v_pre
    }

    /// Prediction capped by the straight line of non-overlapping kernels,
    /// `v_pre + x * single_kernel_volume`.
    pub fn bounded_value(&self, x: f64, single_kernel_volume: f64) -> f64 {
        self.value(x).min(self.v_pre + x.max(0.0) * single_kernel_volume)
    }

    /// Smallest input count whose predicted volume reaches `target_volume`.
    ///
    /// Targets at or below `v_pre` need no inputs; targets at or above the
    /// asymptote are unreachable.
    pub fn required_count_for_volume(&self, target_volume: f64) -> Result<u64> {
        if target_volume.is_nan() {
            return Err(Error::Domain("target volume is NaN".into()));
        }
        if target_volume <= self.v_pre {
            return Ok(0);
        }
        if target_volume >= self.asymptote() {
            return Err(Error::Unreachable(format!(
                "target volume {target_volume} is not below the asymptote {}",
                self.asymptote()
            )));
        }
        let q = (target_volume - self.v_pre) / self.a;
        let x = (-(-q).ln_1p() / self.b).powf(1.0 / self.c).ceil();
        // 2^53: beyond this integer counts are no longer exact in f64
        if !(x.is_finite() && x < 9.007_199_254_740_992e15) {
            return Err(Error::Unreachable(format!(
                "target volume {target_volume} needs more than 2^53 inputs"
            )));
        }
        let mut n = x.max(0.0) as u64;
        while n > 0 && self.value((n - 1) as f64) >= target_volume {
            n -= 1;
        }
        while self.value(n as f64) < target_volume {
            n += 1;
        }
        Ok(n)
    }
}

/// `volume / (a + v_pre)`.
///
/// Volumes outside `[v_pre, a + v_pre]` beyond a relative slack of 1e-9 are a
/// domain error; values inside the slack are clamped into `[0, 1]`.
pub fn coverage_coefficient(model: &WeibullCoverageModel, volume: f64) -> Result<f64> {
    let top = model.asymptote();
    let slack = VOLUME_SLACK * top.max(1.0);
    if !(volume >= model.v_pre - slack && volume <= top + slack) {
        return Err(Error::Domain(format!(
            "volume {volume} outside [{}, {top}]",
            model.v_pre
        )));
    }
    Ok((volume / top).clamp(0.0, 1.0))
}

/// Smallest input count reaching coverage coefficient `target_c`.
pub fn required_count(model: &WeibullCoverageModel, target_c: f64) -> Result<u64> {
    if target_c.is_nan() {
        return Err(Error::Domain("target coverage is NaN".into()));
    }
    if target_c >= 1.0 {
        return Err(Error::Unreachable(format!(
            "coverage {target_c} >= 1 is never attained"
        )));
    }
    model.required_count_for_volume(target_c * model.asymptote())
}

/// Solver settings of [`fit_weibull_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative parameter change at which a start is considered converged.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            tolerance: 1e-9,
        }
    }
}

/// Result of a multi-start fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullFit {
    pub model: WeibullCoverageModel,
    pub rss: f64,
    /// Index of the winning start in the start list.
    pub start: usize,
}

/// Least-squares fit of `(a, b, c)` with `v_pre` held fixed.
pub fn fit_weibull(curve: &[(usize, f64)], v_pre: f64) -> Result<WeibullCoverageModel> {
    fit_weibull_with(curve, v_pre, &FitOptions::default()).map(|f| f.model)
}

/// [`fit_weibull`] with explicit solver options, returning the residual sum of
/// squares as well.
///
/// Starts: `a` in `{span, 1.5 span}` with `span = max(V) - v_pre`, `b`
/// log-spaced over `1e-5 ..= 1`, `c` in `{0.5, 1, 2}`, plus one start per `c`
/// whose `b` puts the half-saturation point where the curve crosses half its
/// span. The lowest-RSS result wins; ties keep the earlier start.
pub fn fit_weibull_with(curve: &[(usize, f64)], v_pre: f64, opts: &FitOptions) -> Result<WeibullFit> {
    if curve.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_POINTS,
            got: curve.len(),
        });
    }
    if !(v_pre.is_finite() && v_pre >= 0.0) {
        return Err(Error::contract(format!("v_pre must be non-negative, got {v_pre}")));
    }
    let mut last_count = None;
    let mut last_volume = f64::NEG_INFINITY;
    let slack = VOLUME_SLACK * v_pre.abs().max(1.0);
    for &(count, volume) in curve {
        if last_count.is_some_and(|c| count <= c) {
            return Err(Error::contract("curve counts must be strictly increasing"));
        }
        if !volume.is_finite() || volume < v_pre - slack {
            return Err(Error::contract(format!(
                "curve volume {volume} at count {count} is below v_pre {v_pre}"
            )));
        }
        if volume < last_volume {
            return Err(Error::contract(format!("coverage curve decreases at count {count}")));
        }
        last_count = Some(count);
        last_volume = volume;
    }

    let xs: Vec<f64> = curve.iter().map(|&(c, _)| c as f64).collect();
    let ys: Vec<f64> = curve.iter().map(|&(_, v)| (v - v_pre).max(0.0)).collect();
    let span = ys.iter().copied().fold(0.0, f64::max);
    let growth = span - ys.iter().copied().fold(f64::INFINITY, f64::min);
    if span <= 1e-12 * v_pre.max(1.0) || growth <= 1e-12 * span.max(v_pre).max(1.0) {
        return Err(Error::InsufficientSignal(format!(
            "curve shows no growth over its counts (v_pre = {v_pre})"
        )));
    }

    let starts = start_points(&xs, &ys, span);
    let lm_opts = LmOptions {
        max_iterations: opts.max_iterations,
        step_tolerance: opts.tolerance,
        lower: [(span * 1e-9).ln(), -200.0, 0.01f64.ln()],
        upper: [(span * 1e6).ln(), 50.0, 50.0f64.ln()],
    };
    let problem = SaturationProblem { xs: &xs, ys: &ys };
    let outcomes: Vec<_> = starts.par_iter().map(|s| problem.solve(*s, &lm_opts)).collect();

    let mut best: Option<(usize, f64, [f64; 3])> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.rss.is_finite() && best.is_none_or(|(_, rss, _)| o.rss < rss) {
            best = Some((i, o.rss, o.theta));
        }
    }
    let (start, rss, theta) = best.ok_or_else(|| Error::FitFailed("no start produced a finite residual".into()))?;
    let model = WeibullCoverageModel::new(theta[0].exp(), theta[1].exp(), theta[2].exp(), v_pre)
        .map_err(|e| Error::FitFailed(e.to_string()))?;
    Ok(WeibullFit { model, rss, start })
}

fn start_points(xs: &[f64], ys: &[f64], span: f64) -> Vec<[f64; 3]> {
    let shapes = [0.5f64, 1.0, 2.0];
    let mut starts = Vec::with_capacity(39);
    for a in [span, 1.5 * span] {
        for exp in -5..=0 {
            let b = 10f64.powi(exp);
            for c in shapes {
                starts.push([a.ln(), b.ln(), c.ln()]);
            }
        }
    }
    let half = xs
        .iter()
        .zip(ys)
        .find(|(_, &y)| y >= 0.5 * span)
        .map(|(&x, _)| x.max(1.0))
        .unwrap_or(1.0);
    for c in shapes {
        // b * half^c = ln 2
        let ln_b = std::f64::consts::LN_2.ln() - c * half.ln();
        starts.push([span.ln(), ln_b, c.ln()]);
    }
    starts
}
