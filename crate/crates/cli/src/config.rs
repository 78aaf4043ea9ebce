//! TOML run configuration.
//!
//! The file is parsed into [`RunConfig`], the seed override applied, and the
//! result validated into domain types before any command does work. The hash
//! of the resolved config (re-serialized as TOML) tags every output file.

use std::path::{Path, PathBuf};

use scenario_coverage::economics::{ImprovementScaling, QualityRequirements, SweepAxis};
use scenario_coverage::geometry::{ParameterSpace, SemiAxes};
use scenario_coverage::metamodel::CostAttributes;
use scenario_coverage::synthetic::MixtureComponent;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSection,
    pub kernel: KernelSection,
    #[serde(default)]
    pub cloud: CloudSection,
    #[serde(default)]
    pub fitting: FittingSection,
    pub quality: Option<QualitySection>,
    #[serde(default)]
    pub costs: CostsSection,
    pub metamodel: Option<MetamodelSection>,
    #[serde(default)]
    pub plan: PlanSection,
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// Dimension names; defaults to `x1, x2, ...`.
    pub names: Option<Vec<String>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub semi_axes: Vec<f64>,
    /// Semi-axis scale of the reference volume.
    #[serde(default = "default_dilation")]
    pub dilation: f64,
}

fn default_dilation() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudSection {
    pub samples: usize,
    /// Overrides the run seed for the sample cloud.
    pub seed: Option<u64>,
}

impl Default for CloudSection {
    fn default() -> Self {
        CloudSection {
            samples: 200_000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FittingSection {
    pub replicates: usize,
    pub cv_threshold: f64,
    pub max_curve_points: usize,
}

impl Default for FittingSection {
    fn default() -> Self {
        FittingSection {
            replicates: 32,
            cv_threshold: 0.05,
            max_curve_points: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitySection {
    pub allowed_error: f64,
    #[serde(default = "default_z")]
    pub confidence_z: f64,
    pub target_coverage: f64,
    /// Report at least one spot check even when the Cochran size is 0.
    #[serde(default)]
    pub min_audit: bool,
}

fn default_z() -> f64 {
    1.96
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    pub mining: Option<CostSection>,
    pub generation: Option<CostSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default)]
    pub setup: f64,
    pub gaining: f64,
    #[serde(default)]
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetamodelSection {
    #[serde(default = "default_grid")]
    pub grid: Vec<u64>,
    #[serde(default = "default_per_grid_sample")]
    pub per_grid_sample: usize,
    pub generator: Option<GeneratorSpec>,
}

fn default_grid() -> Vec<u64> {
    vec![500, 1000, 2000, 5000]
}

fn default_per_grid_sample() -> usize {
    50_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Replays the mined points.
    Replay,
    /// Kernel resampling with a uniform leak of `leak / sqrt(k)`.
    Degradable { leak: f64 },
    /// Gaussian kernels on the mined points, bandwidth per dimension.
    KernelMixture { bandwidth: Vec<f64> },
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Replay => "replay",
            GeneratorSpec::Degradable { .. } => "degradable",
            GeneratorSpec::KernelMixture { .. } => "kernel_mixture",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    /// Volume the target coverage refers to; defaults to the mining model's
    /// saturation level.
    pub reference_volume: Option<f64>,
    #[serde(default)]
    pub improvement_scaling: ImprovementScaling,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub count: usize,
    #[serde(flatten)]
    pub source: SynthSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSource {
    UniformBox,
    GaussianMixture {
        components: Vec<MixtureComponent>,
    },
    /// Needs seed data via `--input`.
    Degradable {
        leak: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub input: Option<PathBuf>,
    pub mining: Option<PathBuf>,
    pub generation: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// A parsed config with its validated core pieces.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub names: Vec<String>,
    pub space: ParameterSpace,
    pub semi_axes: SemiAxes,
    pub quality: Option<QualityRequirements>,
    pub mining_costs: Option<CostAttributes>,
    pub generation_costs: Option<CostAttributes>,
    /// Hex SHA-256 of the resolved config.
    pub hash: String,
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn cloud_seed(&self) -> u64 {
        self.raw.cloud.seed.unwrap_or(self.raw.seed)
    }

    pub fn dims(&self) -> usize {
        self.space.dims()
    }

    pub fn require_quality(&self) -> Result<QualityRequirements, CliError> {
        self.quality
            .ok_or_else(|| CliError::input("config has no [quality] section"))
    }
}

/// Reads, overrides and validates the config file.
pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    let mut raw: RunConfig =
        toml::from_str(&text).map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        raw.seed = seed;
    }
    resolve(raw)
}

pub fn resolve(raw: RunConfig) -> Result<Resolved, CliError> {
    let canonical = toml::to_string(&raw).map_err(|e| CliError::input(format!("config does not serialize: {e}")))?;
    tracing::info!("resolved config:\n{canonical}");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));

    let bad = |section: &str, e: scenario_coverage::Error| CliError::input(format!("[{section}]: {e}"));
    let space = ParameterSpace::new(raw.space.lower.clone(), raw.space.upper.clone()).map_err(|e| bad("space", e))?;
    let m = space.dims();
    let names = match &raw.space.names {
        Some(n) if n.len() != m => {
            return Err(CliError::input(format!(
                "[space]: {} names for {m} dimensions",
                n.len()
            )));
        }
        Some(n) => n.clone(),
        None => (1..=m).map(|i| format!("x{i}")).collect(),
    };
    let semi_axes = SemiAxes::new(raw.kernel.semi_axes.clone()).map_err(|e| bad("kernel", e))?;
    if semi_axes.dims() != m {
        return Err(CliError::input(format!(
            "[kernel]: {} semi-axes for {m} dimensions",
            semi_axes.dims()
        )));
    }
    if !(raw.kernel.dilation.is_finite() && raw.kernel.dilation >= 1.0) {
        return Err(CliError::input("[kernel]: dilation must be >= 1"));
    }
    if raw.cloud.samples == 0 {
        return Err(CliError::input("[cloud]: samples must be positive"));
    }
    let f = &raw.fitting;
    if f.replicates < 2 || !(f.cv_threshold >= 0.0) || f.max_curve_points < 8 {
        return Err(CliError::input(
            "[fitting]: need replicates >= 2, cv_threshold >= 0 and max_curve_points >= 8",
        ));
    }
    let quality = raw
        .quality
        .as_ref()
        .map(|q| QualityRequirements::new(q.allowed_error, q.confidence_z, q.target_coverage))
        .transpose()
        .map_err(|e| bad("quality", e))?;
    let costs = |c: &Option<CostSection>, name: &str| {
        c.as_ref()
            .map(|c| CostAttributes::new(c.setup, c.gaining, c.validation))
            .transpose()
            .map_err(|e| bad(name, e))
    };
    let mining_costs = costs(&raw.costs.mining, "costs.mining")?;
    let generation_costs = costs(&raw.costs.generation, "costs.generation")?;
    if let Some(mm) = &raw.metamodel {
        if mm.grid.is_empty() || mm.grid[0] == 0 || mm.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::input(
                "[metamodel]: grid must be strictly increasing and start at >= 1",
            ));
        }
        if mm.per_grid_sample == 0 {
            return Err(CliError::input("[metamodel]: per_grid_sample must be positive"));
        }
        match &mm.generator {
            Some(GeneratorSpec::Degradable { leak }) if !(0.0..=1.0).contains(leak) => {
                return Err(CliError::input("[metamodel.generator]: leak must lie in [0, 1]"));
            }
            Some(GeneratorSpec::KernelMixture { bandwidth })
                if bandwidth.len() != m || bandwidth.iter().any(|h| !(h.is_finite() && *h >= 0.0)) =>
            {
                return Err(CliError::input(format!(
                    "[metamodel.generator]: bandwidth needs {m} non-negative values"
                )));
            }
            _ => {}
        }
    }
    if let Some(r) = raw.plan.reference_volume {
        if !(r.is_finite() && r > 0.0) {
            return Err(CliError::input("[plan]: reference_volume must be positive"));
        }
    }
    if let Some(sweep) = &raw.plan.sweep {
        if sweep.values.is_empty() {
            return Err(CliError::input("[plan.sweep]: values must not be empty"));
        }
        let in_domain = |v: f64| match sweep.axis {
            SweepAxis::MiningCost | SweepAxis::ValidationCost => v.is_finite() && v >= 0.0,
            SweepAxis::AllowedError => (0.0..1.0).contains(&v),
            SweepAxis::TargetCoverage => v > 0.0 && v < 1.0,
        };
        if let Some(v) = sweep.values.iter().find(|v| !in_domain(**v)) {
            return Err(CliError::input(format!(
                "[plan.sweep]: value {v} is outside the domain of the axis"
            )));
        }
    }
    if let Some(s) = &raw.synth {
        if let SynthSource::Degradable { leak } = s.source {
            if !(0.0..=1.0).contains(&leak) {
                return Err(CliError::input("[synth]: leak must lie in [0, 1]"));
            }
        }
    }
    Ok(Resolved {
        raw,
        names,
        space,
        semi_axes,
        quality,
        mining_costs,
        generation_costs,
        hash,
    })
}
