//! Bootstrap over input orderings.
//!
//! Each replicate shuffles the scenario set, traces its coverage curve on the
//! shared sample cloud and fits a saturation model. Stable parameters across
//! replicates indicate the input set is large enough for the saturation level
//! to be identified.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_weibull_with, FitOptions, WeibullCoverageModel, WeibullFit};
use crate::error::{Error, Result};
use crate::geometry::{coverage_curve, ParameterPoint, SampleCloud, SemiAxes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// `converged` holds when the coefficient of variation of `a` is at most
    /// this.
    pub cv_threshold: f64,
    /// Curves longer than this are thinned before fitting.
    pub max_curve_points: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 32,
            seed: 0,
            cv_threshold: 0.05,
            max_curve_points: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub replicates: usize,
    pub failures: usize,
    pub param_mean: ParamTriple,
    pub param_cv: ParamTriple,
    /// Residual sum of squares of the central fit.
    pub rss: f64,
    pub cv_threshold: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Aggregated bootstrap output.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapFit {
    pub diagnostics: FitDiagnostics,
    /// Fit to the pointwise mean curve of the successful replicates.
    pub model: WeibullCoverageModel,
    pub mean_curve: Vec<(usize, f64)>,
}

const NON_CONVERGENCE_NOTE: &str = "saturation parameters vary across input orderings; more \
     inputs are needed, or the set mixes valid scenarios with scattered outliers whose \
     coverage grows at a different rate";

/// Runs `config.replicates` shuffled coverage fits and aggregates them.
///
/// Replicate `r` shuffles with ChaCha8 seeded by `config.seed` on stream `r`,
/// so the outcome is independent of how replicates are scheduled. A failed
/// replicate is counted; the whole run fails when more than half fail.
pub fn bootstrap_fit(
    points: &[ParameterPoint],
    semi_axes: &SemiAxes,
    cloud: &SampleCloud,
    config: &BootstrapConfig,
) -> Result<BootstrapFit> {
    if config.replicates < 2 {
        return Err(Error::contract("bootstrap needs at least two replicates"));
    }
    if points.is_empty() {
        return Err(Error::contract("bootstrap needs at least one point"));
    }
    if !(config.cv_threshold.is_finite() && config.cv_threshold >= 0.0) {
        return Err(Error::contract("cv threshold must be non-negative"));
    }
    let opts = FitOptions::default();

    let replicates: Vec<Result<(WeibullFit, Vec<(usize, f64)>)>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let mut order = points.to_vec();
            order.shuffle(&mut rng);
            let curve = coverage_curve(&order, semi_axes, cloud)?;
            let fit = fit_weibull_with(&thin_curve(&curve, config.max_curve_points), 0.0, &opts)?;
            Ok((fit, curve))
        })
        .collect();

    let mut fits = Vec::new();
    let mut curves = Vec::new();
    let mut failures = 0;
    for outcome in replicates {
        match outcome {
            Ok((fit, curve)) => {
                fits.push(fit.model);
                curves.push(curve);
            }
            Err(err @ Error::DimensionMismatch { .. }) => return Err(err),
            Err(err) => {
                tracing::debug!(%err, "bootstrap replicate failed");
                failures += 1;
            }
        }
    }
    if 2 * failures > config.replicates || fits.len() < 2 {
        return Err(Error::BootstrapFailed {
            failed: failures,
            replicates: config.replicates,
        });
    }

    let mean_curve: Vec<(usize, f64)> = (0..curves[0].len())
        .map(|i| {
            let sum: f64 = curves.iter().map(|c| c[i].1).sum();
            (curves[0][i].0, sum / curves.len() as f64)
        })
        .collect();
    let central = fit_weibull_with(&thin_curve(&mean_curve, config.max_curve_points), 0.0, &opts)?;

    let (mean_a, cv_a) = mean_cv(fits.iter().map(|m| m.a()));
    let (mean_b, cv_b) = mean_cv(fits.iter().map(|m| m.b()));
    let (mean_c, cv_c) = mean_cv(fits.iter().map(|m| m.c()));
    let converged = cv_a <= config.cv_threshold;
    let diagnostics = FitDiagnostics {
        replicates: config.replicates,
        failures,
        param_mean: ParamTriple {
            a: mean_a,
            b: mean_b,
            c: mean_c,
        },
        param_cv: ParamTriple {
            a: cv_a,
            b: cv_b,
            c: cv_c,
        },
        rss: central.rss,
        cv_threshold: config.cv_threshold,
        converged,
        note: (!converged).then(|| NON_CONVERGENCE_NOTE.to_string()),
    };
    Ok(BootstrapFit {
        diagnostics,
        model: central.model,
        mean_curve,
    })
}

/// Mean and coefficient of variation (sample standard deviation over the
/// absolute mean).
fn mean_cv(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let cv = if mean == 0.0 { 0.0 } else { var.sqrt() / mean.abs() };
    (mean, cv)
}

/// Keeps at most `max_points` entries: half evenly spaced by index, half
/// log-spaced so the early rise stays resolved. First and last entries are
/// always kept.
pub fn thin_curve(curve: &[(usize, f64)], max_points: usize) -> Vec<(usize, f64)> {
    let n = curve.len();
    if n <= max_points.max(2) {
        return curve.to_vec();
    }
    let half = (max_points / 2).max(2);
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let last = (n - 1) as f64;
    for k in 0..half {
        let t = k as f64 / (half - 1) as f64;
        keep[(t * last).round() as usize] = true;
        keep[((last + 1.0).powf(t) - 1.0).round().min(last) as usize] = true;
    }
    curve.iter().zip(keep).filter_map(|(e, k)| k.then_some(*e)).collect()
}
