use std::fmt::Write as _;
use std::path::Path;

use scenario_coverage::economics::{
    optimize_acquisition, sensitivity_sweep, AcquisitionPlan, BaseScenario, CheckOptions, PlanOptions,
};
use scenario_coverage::fitting::{bootstrap_fit, BootstrapConfig, FitDiagnostics, WeibullCoverageModel};
use scenario_coverage::geometry::{build_reference_volume, SampleCloud};
use scenario_coverage::metamodel::{
    fit_generation_metamodel, AcquisitionMetaModel, GenerationFitConfig, GridReport, MethodKind,
};
use scenario_coverage::synthetic::{
    degradable_generator, DegradableGenerator, KernelMixtureGenerator, ReplayGenerator, ScenarioGenerator,
    SyntheticSource,
};
use scenario_coverage::Error;
use serde::Serialize;

use crate::config::{GeneratorSpec, Resolved, SynthSource};
use crate::io::{read_json, read_points, write_json, write_points, write_records, write_rows, Provenance};
use crate::{CliError, Outcome};

pub const CURVE_FILE: &str = "coverage_curve.csv";
pub const MODEL_FILE: &str = "coverage_model.json";
pub const MINING_FILE: &str = "mining_metamodel.json";
pub const GENERATION_FILE: &str = "generation_metamodel.json";
pub const PARTIAL_FILE: &str = "generation_metamodel.partial.json";
pub const PLAN_FILE: &str = "plan.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SYNTH_FILE: &str = "synthetic.csv";

fn provenance(cfg: &Resolved) -> Provenance {
    Provenance::new(&cfg.hash, cfg.seed(), Some(cfg.dims()))
}

fn cloud(cfg: &Resolved) -> Result<SampleCloud, CliError> {
    Ok(SampleCloud::new(
        cfg.space.clone(),
        cfg.cloud_seed(),
        cfg.raw.cloud.samples,
    )?)
}

#[derive(Serialize)]
struct CoverageReport<'a> {
    input_count: usize,
    cloud_samples: usize,
    model: &'a WeibullCoverageModel,
    /// Mean covered volume after all inputs.
    final_volume: f64,
    /// `final_volume / (a + v_pre)`, capped at 1.
    coverage: f64,
    kernel_volume: f64,
    diagnostics: &'a FitDiagnostics,
}

/// Bootstrap coverage fit; writes the mean curve, the model with its
/// diagnostics and, when mining costs are configured, a mining meta model.
pub fn coverage(cfg: &Resolved, input: &Path, out: &Path) -> Result<Outcome, CliError> {
    let points = read_points(input, &cfg.names)?;
    let cloud = cloud(cfg)?;
    let f = &cfg.raw.fitting;
    let boot = BootstrapConfig {
        replicates: f.replicates,
        seed: cfg.seed(),
        cv_threshold: f.cv_threshold,
        max_curve_points: f.max_curve_points,
    };
    tracing::info!(points = points.len(), replicates = boot.replicates, "fitting coverage");
    let fit = bootstrap_fit(&points, &cfg.semi_axes, &cloud, &boot).map_err(|e| match e {
        Error::BootstrapFailed { .. } => CliError::NotConverged(e.to_string()),
        other => other.into(),
    })?;
    let prov = provenance(cfg);
    let kernel_volume = cfg.semi_axes.ellipsoid_volume();

    let mut rows = vec![vec![
        "count".to_string(),
        "volume".to_string(),
        "model".to_string(),
        "model_bounded".to_string(),
    ]];
    rows.extend(fit.mean_curve.iter().map(|&(count, volume)| {
        let x = count as f64;
        vec![
            count.to_string(),
            volume.to_string(),
            fit.model.value(x).to_string(),
            fit.model.bounded_value(x, kernel_volume).to_string(),
        ]
    }));
    write_rows(&out.join(CURVE_FILE), &rows, &prov)?;

    let final_volume = fit.mean_curve.last().map_or(0.0, |e| e.1);
    let report = CoverageReport {
        input_count: points.len(),
        cloud_samples: cloud.len(),
        model: &fit.model,
        final_volume,
        coverage: (final_volume / fit.model.asymptote()).clamp(0.0, 1.0),
        kernel_volume,
        diagnostics: &fit.diagnostics,
    };
    write_json(&out.join(MODEL_FILE), &report, &prov)?;

    match cfg.mining_costs {
        Some(costs) => {
            let mining = AcquisitionMetaModel::mining("mining", costs, fit.model);
            write_json(&out.join(MINING_FILE), &mining, &prov)?;
        }
        None => tracing::info!("no [costs.mining] section; mining meta model not written"),
    }

    let d = &fit.diagnostics;
    if d.converged {
        tracing::info!(cv_a = d.param_cv.a, "coverage fit converged");
        Ok(Outcome::Success)
    } else {
        tracing::warn!(cv_a = d.param_cv.a, threshold = d.cv_threshold, note = ?d.note, "coverage fit did not converge");
        Ok(Outcome::NotConverged)
    }
}

#[derive(Serialize)]
struct GenerationDocument<'a> {
    #[serde(flatten)]
    model: &'a AcquisitionMetaModel,
    grid: &'a [GridReport],
}

#[derive(Serialize)]
struct PartialDocument<'a> {
    error: String,
    grid: &'a [GridReport],
}

/// Fits the generation meta model over the configured grid of seed sizes.
pub fn metamodel(cfg: &Resolved, input: &Path, out: &Path) -> Result<Outcome, CliError> {
    let mm = cfg
        .raw
        .metamodel
        .as_ref()
        .ok_or_else(|| CliError::input("config has no [metamodel] section"))?;
    let spec = mm
        .generator
        .as_ref()
        .ok_or_else(|| CliError::input("missing generator spec: add a [metamodel.generator] section"))?;
    let costs = cfg
        .generation_costs
        .ok_or_else(|| CliError::input("config has no [costs.generation] section"))?;
    let mined = read_points(input, &cfg.names)?;
    let reference = build_reference_volume(&mined, &cfg.semi_axes, cfg.raw.kernel.dilation, &cfg.space)?;
    let cloud = cloud(cfg)?;
    let generator: Box<dyn ScenarioGenerator> = match spec {
        GeneratorSpec::Replay => Box::new(ReplayGenerator),
        GeneratorSpec::Degradable { leak } => Box::new(DegradableGenerator {
            leak: *leak,
            semi_axes: cfg.semi_axes.clone(),
            space: cfg.space.clone(),
        }),
        GeneratorSpec::KernelMixture { bandwidth } => Box::new(KernelMixtureGenerator {
            bandwidth: bandwidth.clone(),
        }),
    };
    let fit_cfg = GenerationFitConfig {
        name: spec.name().to_string(),
        costs,
        semi_axes: cfg.semi_axes.clone(),
        per_grid_sample: mm.per_grid_sample,
        seed: cfg.seed(),
        max_curve_points: cfg.raw.fitting.max_curve_points,
    };
    tracing::info!(grid = ?mm.grid, per_grid_sample = mm.per_grid_sample, generator = spec.name(), "fitting meta model");
    let prov = provenance(cfg);
    match fit_generation_metamodel(&mm.grid, &mined, generator.as_ref(), &reference, &cloud, &fit_cfg) {
        Ok(fit) => {
            let doc = GenerationDocument {
                model: &fit.model,
                grid: &fit.grid,
            };
            write_json(&out.join(GENERATION_FILE), &doc, &prov)?;
            let failed: Vec<u64> = fit
                .grid
                .iter()
                .filter(|g| g.fit_error.is_some())
                .map(|g| g.input_count)
                .collect();
            if failed.is_empty() {
                Ok(Outcome::Success)
            } else {
                tracing::warn!(?failed, "coverage fits failed at these grid values");
                Ok(Outcome::NotConverged)
            }
        }
        Err(failure) => {
            let doc = PartialDocument {
                error: failure.error.to_string(),
                grid: &failure.partial,
            };
            write_json(&out.join(PARTIAL_FILE), &doc, &prov)?;
            Err(CliError::input(failure.error.to_string()))
        }
    }
}

#[derive(Serialize)]
struct PlanDocument<'a> {
    mining: &'a str,
    generation: &'a str,
    #[serde(flatten)]
    plan: &'a AcquisitionPlan,
}

/// Optimal acquisition plan, printed and written as JSON, plus the configured
/// sweep as CSV.
pub fn plan(cfg: &Resolved, mining_path: &Path, generation_path: &Path, out: &Path) -> Result<Outcome, CliError> {
    let req = cfg.require_quality()?;
    let (mining, mining_prov) = read_json::<AcquisitionMetaModel>(mining_path)?;
    let (generation, generation_prov) = read_json::<AcquisitionMetaModel>(generation_path)?;
    let dims: Vec<(String, usize)> = [(mining_path, &mining_prov), (generation_path, &generation_prov)]
        .into_iter()
        .filter_map(|(p, prov)| prov.as_ref().and_then(|p| p.dims).map(|d| (p.display().to_string(), d)))
        .collect();
    if let Some((path, d)) = dims.iter().find(|(_, d)| *d != cfg.dims()) {
        return Err(CliError::input(format!(
            "{path} was fitted in {d} dimensions, the config has {}",
            cfg.dims()
        )));
    }
    if mining.kind() != MethodKind::Mining {
        return Err(CliError::input(format!(
            "{} is not a mining meta model",
            mining_path.display()
        )));
    }
    if generation.kind() != MethodKind::Generation {
        return Err(CliError::input(format!(
            "{} is not a generation meta model",
            generation_path.display()
        )));
    }
    let quality = cfg.raw.quality.as_ref().expect("validated with requirements");
    let options = PlanOptions {
        check: CheckOptions {
            min_audit: quality.min_audit,
            scaling: cfg.raw.plan.improvement_scaling,
            ..CheckOptions::default()
        },
        reference_volume: cfg.raw.plan.reference_volume,
    };
    let plan = optimize_acquisition(&mining, &generation, &req, &options)?;
    let prov = provenance(cfg);
    let doc = PlanDocument {
        mining: mining.name(),
        generation: generation.name(),
        plan: &plan,
    };
    write_json(&out.join(PLAN_FILE), &doc, &prov)?;
    print!("{}", render_plan(&plan));

    if let Some(sweep) = &cfg.raw.plan.sweep {
        let base = BaseScenario {
            mining,
            generation,
            requirements: req,
            options,
        };
        let rows = sensitivity_sweep(sweep.axis, &sweep.values, &base)?;
        write_records(&out.join(SWEEP_FILE), &rows, &prov)?;
        tracing::info!(rows = rows.len(), axis = ?sweep.axis, "sweep written");
    }
    Ok(if plan.feasible {
        Outcome::Success
    } else {
        Outcome::Infeasible
    })
}

/// Human-readable plan summary.
pub fn render_plan(plan: &AcquisitionPlan) -> String {
    let mut s = String::new();
    let status = if plan.feasible { "feasible" } else { "INFEASIBLE" };
    let _ = writeln!(s, "acquisition plan: {status}");
    let _ = writeln!(
        s,
        "  target coverage {:.4} of volume {:.6} (target volume {:.6})",
        plan.target_coverage, plan.reference_volume, plan.target_volume
    );
    let entry = plan
        .generation_entry
        .map_or("mining only".to_string(), |k| k.to_string());
    let rows = [
        ("generation entry", entry),
        ("scenarios mined", plan.n_mine.to_string()),
        ("scenarios generated", plan.n_gen.to_string()),
        ("improvement checks", plan.check.n_improv.to_string()),
        ("spot checks", plan.check.n_rand_corr.to_string()),
        ("total checks", plan.check.n_check.to_string()),
        ("error after checks", format!("{:.6}", plan.final_error)),
        ("achieved coverage", format!("{:.6}", plan.achieved_coverage)),
        ("setup cost", format!("{:.2}", plan.setup_cost)),
        ("mining cost", format!("{:.2}", plan.mining_cost)),
        ("generation cost", format!("{:.2}", plan.generation_cost)),
        ("checking cost", format!("{:.2}", plan.checking_cost)),
        ("total cost", format!("{:.2}", plan.total_cost)),
    ];
    for (label, value) in rows {
        let _ = writeln!(s, "  {label:<22}{value:>18}");
    }
    let _ = writeln!(s, "  candidates:");
    for c in &plan.candidates {
        let name = c.entry.map_or("mining only".to_string(), |k| format!("entry {k}"));
        match (c.total_cost, &c.reason) {
            (Some(cost), _) => {
                let _ = writeln!(s, "    {name:<16}{cost:>18.2}");
            }
            (None, reason) => {
                let _ = writeln!(
                    s,
                    "    {name:<16}{:>18}  {}",
                    "infeasible",
                    reason.as_deref().unwrap_or("")
                );
            }
        }
    }
    s
}

/// Draws synthetic parameter sets.
pub fn synth(cfg: &Resolved, input: Option<&Path>, count: Option<usize>, out: &Path) -> Result<Outcome, CliError> {
    let section = cfg
        .raw
        .synth
        .as_ref()
        .ok_or_else(|| CliError::input("config has no [synth] section"))?;
    let count = count.unwrap_or(section.count);
    let mut source = match &section.source {
        SynthSource::UniformBox => SyntheticSource::uniform_box(cfg.space.clone(), cfg.seed()),
        SynthSource::GaussianMixture { components } => {
            if let Some(c) = components.iter().find(|c| c.mean.len() != cfg.dims()) {
                return Err(CliError::input(format!(
                    "[synth]: component with {} dimensions, the space has {}",
                    c.mean.len(),
                    cfg.dims()
                )));
            }
            SyntheticSource::gaussian_mixture(components.clone(), cfg.seed())?
        }
        SynthSource::Degradable { leak } => {
            let input = input.ok_or_else(|| CliError::input("the degradable source needs seed data via --input"))?;
            let seed_data = read_points(input, &cfg.names)?;
            degradable_generator(&seed_data, *leak, &cfg.semi_axes, &cfg.space, cfg.seed())?
        }
    };
    let points = source.draw(count);
    write_points(&out.join(SYNTH_FILE), &cfg.names, &points, &provenance(cfg))?;
    tracing::info!(count, "synthetic points written");
    Ok(Outcome::Success)
}
