//! Method-agnostic description of a scenario acquisition method.
//!
//! A meta model bundles what the economics need to know about a method: how
//! its coverage grows (a family of saturation models indexed by how much mined
//! data seeded it), its error rate as a function of that seed size, and its
//! costs.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit_weibull, thin_curve, WeibullCoverageModel};
use crate::geometry::{coverage_curve_from, ParameterPoint, ReferenceVolume, SampleCloud, SemiAxes};
use crate::synthetic::ScenarioGenerator;

/// Below this many generated points the error estimate is logged as noisy.
const SMALL_SAMPLE_WARNING: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCosts")]
pub struct CostAttributes {
    /// One-off cost of making the method available.
    pub setup: f64,
    /// Cost per acquired scenario.
    pub gaining: f64,
    /// Cost per checked scenario.
    pub validation: f64,
}

#[derive(Deserialize)]
struct RawCosts {
    setup: f64,
    gaining: f64,
    validation: f64,
}

impl TryFrom<RawCosts> for CostAttributes {
    type Error = Error;

    fn try_from(raw: RawCosts) -> Result<Self> {
        CostAttributes::new(raw.setup, raw.gaining, raw.validation)
    }
}

impl CostAttributes {
    pub fn new(setup: f64, gaining: f64, validation: f64) -> Result<Self> {
        for (name, v) in [("setup", setup), ("gaining", gaining), ("validation", validation)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::contract(format!("{name} cost must be finite and >= 0, got {v}")));
            }
        }
        Ok(CostAttributes {
            setup,
            gaining,
            validation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Mining,
    Generation,
}

/// Error rate against seed size: measured samples, made non-increasing by
/// isotonic regression and interpolated linearly in `ln k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRateFunction {
    samples: Vec<(u64, f64)>,
    regressed: Vec<f64>,
}

impl ErrorRateFunction {
    /// Counts must be strictly increasing and at least 1; a single sample may
    /// sit at count 0. Rates must lie in `[0, 1]`.
    pub fn new(samples: Vec<(u64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("error rate needs at least one sample"));
        }
        if samples.len() > 1 && samples[0].0 == 0 {
            return Err(Error::contract("error rate sample counts must be >= 1"));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::contract("error rate sample counts must be strictly increasing"));
            }
        }
        if let Some((k, e)) = samples.iter().find(|(_, e)| !(0.0..=1.0).contains(e)) {
            return Err(Error::contract(format!(
                "error rate {e} at count {k} is outside [0, 1]"
            )));
        }
        let rates: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let regressed = isotonic_non_increasing(&rates);
        Ok(ErrorRateFunction { samples, regressed })
    }

    /// A function that is 0 everywhere.
    pub fn zero() -> Self {
        ErrorRateFunction {
            samples: vec![(0, 0.0)],
            regressed: vec![0.0],
        }
    }

    /// Measured `(count, rate)` pairs as given.
    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    /// Rates after isotonic regression, aligned with [`Self::samples`].
    pub fn regressed(&self) -> &[f64] {
        &self.regressed
    }

    pub fn evaluate(&self, input_count: u64) -> Result<f64> {
        let first = self.samples[0].0;
        if input_count < first {
            return Err(Error::Extrapolation {
                query: input_count,
                min: first,
            });
        }
        let i = self.samples.partition_point(|s| s.0 <= input_count) - 1;
        if i + 1 == self.samples.len() || self.samples[i].0 == input_count {
            return Ok(self.regressed[i]);
        }
        let (k0, k1) = (self.samples[i].0 as f64, self.samples[i + 1].0 as f64);
        let t = ((input_count as f64).ln() - k0.ln()) / (k1.ln() - k0.ln());
        let (e0, e1) = (self.regressed[i], self.regressed[i + 1]);
        Ok((e0 + t * (e1 - e0)).clamp(e1, e0))
    }
}

/// Pool-adjacent-violators fit of a non-increasing sequence with equal
/// weights.
pub fn isotonic_non_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, size)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m1, n1) = blocks[blocks.len() - 1];
            let (m0, n0) = blocks[blocks.len() - 2];
            if m0 >= m1 {
                break;
            }
            blocks.pop();
            let n = n0 + n1;
            *blocks.last_mut().expect("two blocks") = ((m0 * n0 as f64 + m1 * n1 as f64) / n as f64, n);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Coverage behavior, error rate and costs of one acquisition method.
///
/// Mining models carry a single coverage model at entry 0 and a zero error
/// rate (mined scenarios are labeled). Generation models carry one coverage
/// model per seed size; the family may be empty when no seed size produced a
/// fittable curve, in which case the model cannot be planned with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMetaModel", into = "RawMetaModel")]
pub struct AcquisitionMetaModel {
    name: String,
    kind: MethodKind,
    costs: CostAttributes,
    error_rate: ErrorRateFunction,
    coverage_models: Vec<(u64, WeibullCoverageModel)>,
}

#[derive(Serialize, Deserialize)]
struct RawMetaModel {
    name: String,
    kind: MethodKind,
    costs: CostAttributes,
    error_samples: Vec<(u64, f64)>,
    coverage_models: Vec<(u64, WeibullCoverageModel)>,
}

impl TryFrom<RawMetaModel> for AcquisitionMetaModel {
    type Error = Error;

    fn try_from(raw: RawMetaModel) -> Result<Self> {
        match raw.kind {
            MethodKind::Mining => {
                if raw.error_samples.iter().any(|s| s.1 != 0.0) {
                    return Err(Error::contract("mining error rate must be 0"));
                }
                match raw.coverage_models.as_slice() {
                    [(0, model)] => Ok(AcquisitionMetaModel::mining(raw.name, raw.costs, *model)),
                    _ => Err(Error::contract("mining needs exactly one coverage model at entry 0")),
                }
            }
            MethodKind::Generation => {
                AcquisitionMetaModel::generation(raw.name, raw.costs, raw.error_samples, raw.coverage_models)
            }
        }
    }
}

impl From<AcquisitionMetaModel> for RawMetaModel {
    fn from(m: AcquisitionMetaModel) -> Self {
        RawMetaModel {
            name: m.name,
            kind: m.kind,
            costs: m.costs,
            error_samples: m.error_rate.samples,
            coverage_models: m.coverage_models,
        }
    }
}

impl AcquisitionMetaModel {
    pub fn mining(name: impl Into<String>, costs: CostAttributes, coverage: WeibullCoverageModel) -> Self {
        AcquisitionMetaModel {
            name: name.into(),
            kind: MethodKind::Mining,
            costs,
            error_rate: ErrorRateFunction::zero(),
            coverage_models: vec![(0, coverage)],
        }
    }

    /// Entry counts must be strictly increasing.
    pub fn generation(
        name: impl Into<String>,
        costs: CostAttributes,
        error_samples: Vec<(u64, f64)>,
        coverage_models: Vec<(u64, WeibullCoverageModel)>,
    ) -> Result<Self> {
        for w in coverage_models.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::contract("coverage entry counts must be strictly increasing"));
            }
        }
        Ok(AcquisitionMetaModel {
            name: name.into(),
            kind: MethodKind::Generation,
            costs,
            error_rate: ErrorRateFunction::new(error_samples)?,
            coverage_models,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> MethodKind {
        self.kind
    }

    pub fn costs(&self) -> &CostAttributes {
        &self.costs
    }

    /// Copy with different costs.
    pub fn with_costs(&self, costs: CostAttributes) -> Self {
        AcquisitionMetaModel { costs, ..self.clone() }
    }

    pub fn error_rate(&self) -> &ErrorRateFunction {
        &self.error_rate
    }

    pub fn coverage_models(&self) -> &[(u64, WeibullCoverageModel)] {
        &self.coverage_models
    }

    /// Coverage model seeded with exactly `entry` mined scenarios.
    pub fn coverage_model_at(&self, entry: u64) -> Option<&WeibullCoverageModel> {
        self.coverage_models.iter().find(|(k, _)| *k == entry).map(|(_, m)| m)
    }
}

/// Error rate of `model` at seed size `input_count`.
pub fn evaluate_error_rate(model: &AcquisitionMetaModel, input_count: u64) -> Result<f64> {
    model.error_rate.evaluate(input_count)
}

/// Fraction of `generated` outside the reference volume.
pub fn measure_error_rate(generated: &[ParameterPoint], reference: &ReferenceVolume) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::contract("cannot measure the error rate of an empty set"));
    }
    for p in generated {
        reference.space().check_dims(p.dims())?;
    }
    if generated.len() < SMALL_SAMPLE_WARNING {
        tracing::warn!(
            n = generated.len(),
            "error rate measured on fewer than {SMALL_SAMPLE_WARNING} points"
        );
    }
    Ok(reference.outside_count(generated) as f64 / generated.len() as f64)
}

/// Settings of [`fit_generation_metamodel`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationFitConfig {
    pub name: String,
    pub costs: CostAttributes,
    pub semi_axes: SemiAxes,
    /// Points drawn from the generator per grid value.
    pub per_grid_sample: usize,
    pub seed: u64,
    /// Coverage curves longer than this are thinned before fitting.
    pub max_curve_points: usize,
}

/// Measurements at one grid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub input_count: u64,
    pub generated: usize,
    pub valid: usize,
    pub error_rate: f64,
    /// Volume covered by the seeding mined scenarios.
    pub v_pre: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<WeibullCoverageModel>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationFit {
    pub model: AcquisitionMetaModel,
    pub grid: Vec<GridReport>,
}

/// A meta model fit aborted by a generator failure; `partial` holds the grid
/// values measured before the failing one.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct GenerationFitFailure {
    pub error: Error,
    pub partial: Vec<GridReport>,
}

impl From<Error> for GenerationFitFailure {
    fn from(error: Error) -> Self {
        GenerationFitFailure {
            error,
            partial: Vec::new(),
        }
    }
}

/// Fits a generation meta model over a grid of seed sizes.
///
/// For each grid value `k`: the generator is seeded with the first `k` mined
/// points, `per_grid_sample` points are drawn, the error rate is measured
/// against `reference`, and a saturation model is fitted to the coverage
/// curve of the valid points on top of the `k` mined points. Grid values whose
/// coverage fit fails keep their error sample but get no coverage model; the
/// reason is in the report.
pub fn fit_generation_metamodel(
    input_grid: &[u64],
    mined_points: &[ParameterPoint],
    generator: &dyn ScenarioGenerator,
    reference: &ReferenceVolume,
    cloud: &SampleCloud,
    config: &GenerationFitConfig,
) -> std::result::Result<GenerationFit, GenerationFitFailure> {
    if input_grid.is_empty() {
        return Err(Error::contract("input grid is empty").into());
    }
    if input_grid[0] == 0 || input_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::contract("input grid must be strictly increasing and start at >= 1").into());
    }
    let largest = *input_grid.last().expect("non-empty");
    if largest > mined_points.len() as u64 {
        return Err(Error::contract(format!(
            "grid value {largest} exceeds the {} mined points",
            mined_points.len()
        ))
        .into());
    }
    if config.per_grid_sample == 0 {
        return Err(Error::contract("per-grid sample size must be positive").into());
    }
    if cloud.space() != reference.space() {
        return Err(Error::contract("cloud and reference volume must share a parameter space").into());
    }

    let outcomes: Vec<Result<GridReport>> = input_grid
        .par_iter()
        .enumerate()
        .map(|(i, &k)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            let seed_data = &mined_points[..k as usize];
            let generated = generator
                .generate(seed_data, config.per_grid_sample, rng.next_u64())
                .map_err(|e| Error::Generator {
                    input_count: k,
                    message: e.to_string(),
                })?;
            if generated.len() != config.per_grid_sample {
                return Err(Error::Generator {
                    input_count: k,
                    message: format!("asked for {} points, got {}", config.per_grid_sample, generated.len()),
                });
            }
            let error_rate = measure_error_rate(&generated, reference)?;
            let valid: Vec<ParameterPoint> = generated
                .into_iter()
                .filter(|p| reference.contains_coords(p.coords()))
                .collect();
            let (v_pre, curve) = coverage_curve_from(seed_data, &valid, &config.semi_axes, cloud)?;
            let (model, fit_error) = match fit_weibull(&thin_curve(&curve, config.max_curve_points), v_pre) {
                Ok(m) => (Some(m), None),
                Err(e @ Error::DimensionMismatch { .. }) => return Err(e),
                Err(e) => {
                    tracing::warn!(input_count = k, %e, "coverage fit failed");
                    (None, Some(e.to_string()))
                }
            };
            Ok(GridReport {
                input_count: k,
                generated: config.per_grid_sample,
                valid: valid.len(),
                error_rate,
                v_pre,
                model,
                fit_error,
            })
        })
        .collect();

    let mut grid = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(report) => grid.push(report),
            Err(error) => return Err(GenerationFitFailure { error, partial: grid }),
        }
    }
    let error_samples = grid.iter().map(|g| (g.input_count, g.error_rate)).collect();
    let coverage_models = grid
        .iter()
        .filter_map(|g| g.model.map(|m| (g.input_count, m)))
        .collect();
    let model = AcquisitionMetaModel::generation(config.name.clone(), config.costs, error_samples, coverage_models)
        .map_err(|error| GenerationFitFailure {
            error,
            partial: grid.clone(),
        })?;
    Ok(GenerationFit { model, grid })
}
