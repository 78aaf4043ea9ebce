//! Quality-assurance check sizes and the cost-optimal acquisition mix.
//!
//! A generated dataset of `n` scenarios starts with error rate `e_initial`.
//! Checking `n_improv` of them and replacing the invalid ones lowers the rate
//! to `e_opt`; a random spot check of `n_rand` scenarios then certifies it at
//! tolerance `e_tol = allowed_error - e_opt`, shrunk to `n_rand_corr` because
//! part of the dataset is already checked. The check size
//! `n_check = n_improv + n_rand_corr` is minimized over `e_opt`.
//!
//! All counts are ceilings of real intermediates. Ceilings snap values within
//! a relative 1e-9 of an integer down to it, so `4 * 0.25 / 0.01` counts as
//! exactly 100.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::WeibullCoverageModel;
use crate::metamodel::{AcquisitionMetaModel, CostAttributes, MethodKind};

const CEIL_SNAP: f64 = 1e-9;

/// `ceil(x)`, treating values within a relative `1e-9` above an integer as
/// that integer. Negative results clamp to 0.
fn ceil_count(x: f64) -> u64 {
    (x - CEIL_SNAP * x.abs().max(1.0)).ceil().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRequirements")]
pub struct QualityRequirements {
    /// Largest acceptable error rate of the final dataset, in `[0, 1)`.
    /// Zero forces a check of every generated scenario.
    pub allowed_error: f64,
    /// Standard-normal quantile of the spot check confidence.
    pub confidence_z: f64,
    /// Required coverage coefficient, in `(0, 1)`.
    pub target_coverage: f64,
}

#[derive(Deserialize)]
struct RawRequirements {
    allowed_error: f64,
    confidence_z: f64,
    target_coverage: f64,
}

impl TryFrom<RawRequirements> for QualityRequirements {
    type Error = Error;

    fn try_from(r: RawRequirements) -> Result<Self> {
        QualityRequirements::new(r.allowed_error, r.confidence_z, r.target_coverage)
    }
}

impl QualityRequirements {
    pub fn new(allowed_error: f64, confidence_z: f64, target_coverage: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&allowed_error) {
            return Err(Error::contract(format!(
                "allowed error must lie in [0, 1), got {allowed_error}"
            )));
        }
        if !(confidence_z.is_finite() && confidence_z > 0.0) {
            return Err(Error::contract(format!("z must be positive, got {confidence_z}")));
        }
        if !(target_coverage > 0.0 && target_coverage < 1.0) {
            return Err(Error::contract(format!(
                "target coverage must lie in (0, 1), got {target_coverage}"
            )));
        }
        Ok(QualityRequirements {
            allowed_error,
            confidence_z,
            target_coverage,
        })
    }
}

/// How the improvement count scales with the dataset size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprovementScaling {
    /// `ceil(n (1 - e_opt / e_initial))`.
    #[default]
    Restored,
    /// `ceil(1 - e_opt / e_initial)`, which is only ever 0 or 1. Kept for
    /// comparison runs.
    AsPrinted,
}

/// Search and counting settings of the check optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckOptions {
    /// Coarse grid intervals over `[0, e_max]`.
    pub grid_points: usize,
    /// Each coarse interval is split this many times during refinement.
    pub refinement: usize,
    /// `e_opt` stays below `allowed_error * (1 - epsilon)`.
    pub epsilon: f64,
    /// Report a spot check of at least one scenario even when the Cochran
    /// size is 0.
    pub min_audit: bool,
    pub scaling: ImprovementScaling,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            grid_points: 1000,
            refinement: 10,
            epsilon: 1e-6,
            min_audit: false,
            scaling: ImprovementScaling::Restored,
        }
    }
}

/// Prices of the two quantities the check optimizer trades off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckWeights {
    pub per_check: f64,
    /// Cost of replacing one scenario found invalid during improvement.
    pub per_replacement: f64,
}

impl CheckWeights {
    /// Minimizes the number of checks alone.
    pub const UNIT: CheckWeights = CheckWeights {
        per_check: 1.0,
        per_replacement: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckPlan {
    pub n: u64,
    pub e_initial: f64,
    pub e_opt: f64,
    pub e_tol: f64,
    pub n_improv: u64,
    pub n_rand: u64,
    pub n_rand_corr: u64,
    pub n_check: u64,
    /// Expected invalid scenarios found while improving, `ceil(n_improv e_initial)`.
    pub replacements: u64,
    pub check_cost: f64,
    /// Every scenario is checked because no error is allowed.
    pub full_sweep: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CheckPlan {
    /// Plan for an empty dataset.
    pub fn empty(e_initial: f64, allowed_error: f64) -> Self {
        CheckPlan {
            n: 0,
            e_initial,
            e_opt: 0.0,
            e_tol: allowed_error,
            n_improv: 0,
            n_rand: 0,
            n_rand_corr: 0,
            n_check: 0,
            replacements: 0,
            check_cost: 0.0,
            full_sweep: false,
            note: None,
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::contract(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Scenarios to check so the error rate drops from `e_initial` to `e_opt`:
/// `ceil(n (1 - e_opt / e_initial))`, and 0 when `e_initial` is 0.
pub fn improvement_count(n: u64, e_initial: f64, e_opt: f64) -> Result<u64> {
    improvement_count_scaled(n, e_initial, e_opt, ImprovementScaling::Restored)
}

pub fn improvement_count_scaled(n: u64, e_initial: f64, e_opt: f64, scaling: ImprovementScaling) -> Result<u64> {
    check_rate("e_initial", e_initial)?;
    check_rate("e_opt", e_opt)?;
    if e_opt > e_initial {
        return Err(Error::contract(format!(
            "e_opt {e_opt} exceeds e_initial {e_initial}; checking cannot raise the error"
        )));
    }
    if e_initial == 0.0 {
        return Ok(0);
    }
    let share = 1.0 - e_opt / e_initial;
    Ok(match scaling {
        ImprovementScaling::Restored => ceil_count(n as f64 * share).min(n),
        ImprovementScaling::AsPrinted => ceil_count(share).min(n),
    })
}

/// Cochran sample size `ceil(z^2 e (1 - e) / e_tol^2)`; 0 for `e` in `{0, 1}`.
pub fn cochran_sample(e_model: f64, e_tol: f64, z: f64) -> Result<u64> {
    check_rate("e_model", e_model)?;
    if !(e_tol > 0.0 && e_tol.is_finite()) {
        return Err(Error::contract(format!("e_tol must be positive, got {e_tol}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::contract(format!("z must be positive, got {z}")));
    }
    if e_model == 0.0 || e_model == 1.0 {
        return Ok(0);
    }
    Ok(ceil_count(z * z * e_model * (1.0 - e_model) / (e_tol * e_tol)))
}

/// Spot check size left after `n_improv` of `n` scenarios were checked:
/// `ceil(n_rand - n_improv n_rand / n)`.
pub fn corrected_sample(n_rand: u64, n_improv: u64, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::contract("dataset size must be at least 1"));
    }
    if n_improv > n {
        return Err(Error::contract(format!("n_improv {n_improv} exceeds n {n}")));
    }
    let r = n_rand as f64;
    Ok(ceil_count(r - n_improv as f64 * r / n as f64))
}

/// Check-size minimizing plan for `n` scenarios at initial error `e_initial`.
pub fn optimize_check(n: u64, e_initial: f64, req: &QualityRequirements) -> Result<CheckPlan> {
    optimize_check_with(n, e_initial, req, &CheckOptions::default(), CheckWeights::UNIT)
}

/// Plan at one given `e_opt`.
pub fn check_plan_at(
    n: u64,
    e_initial: f64,
    e_opt: f64,
    req: &QualityRequirements,
    opts: &CheckOptions,
    weights: CheckWeights,
) -> Result<CheckPlan> {
    if e_opt >= req.allowed_error {
        return Err(Error::contract(format!(
            "e_opt {e_opt} must be below the allowed error {}",
            req.allowed_error
        )));
    }
    let n_improv = improvement_count_scaled(n, e_initial, e_opt, opts.scaling)?;
    let e_tol = req.allowed_error - e_opt;
    let mut n_rand = cochran_sample(e_opt, e_tol, req.confidence_z)?;
    if opts.min_audit {
        n_rand = n_rand.max(1);
    }
    let n_rand = n_rand.min(n);
    let n_rand_corr = if n == 0 {
        0
    } else {
        corrected_sample(n_rand, n_improv, n)?
    };
    let n_check = n_improv + n_rand_corr;
    let replacements = ceil_count(n_improv as f64 * e_initial);
    Ok(CheckPlan {
        n,
        e_initial,
        e_opt,
        e_tol,
        n_improv,
        n_rand,
        n_rand_corr,
        n_check,
        replacements,
        check_cost: weights.per_check * n_check as f64,
        full_sweep: false,
        note: None,
    })
}

/// Minimizes `per_check * n_check + per_replacement * replacements` over
/// `e_opt` on the grid `e_max * j / (grid_points * refinement)`, with
/// `e_max = min(e_initial, allowed_error (1 - epsilon))`.
///
/// The coarse grid (every `refinement`-th point) is evaluated first. A coarse
/// interval is then refined only if a lower bound of the objective over it
/// does not exceed the best value so far; the bound uses that the
/// improvement count falls and the Cochran size rises with `e_opt`. The
/// result equals the minimum over the full fine grid; ties go to the largest
/// `e_opt`.
pub fn optimize_check_with(
    n: u64,
    e_initial: f64,
    req: &QualityRequirements,
    opts: &CheckOptions,
    weights: CheckWeights,
) -> Result<CheckPlan> {
    if !(0.0..1.0).contains(&e_initial) {
        return Err(Error::contract(format!(
            "e_initial must lie in [0, 1), got {e_initial}"
        )));
    }
    if opts.grid_points == 0 || opts.refinement == 0 {
        return Err(Error::contract("grid and refinement sizes must be positive"));
    }
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0) {
        return Err(Error::contract("epsilon must lie in (0, 1)"));
    }
    if req.allowed_error == 0.0 {
        return Ok(full_sweep_plan(n, e_initial, weights));
    }

    let e_max = e_initial.min(req.allowed_error * (1.0 - opts.epsilon));
    let fine = opts.grid_points * opts.refinement;
    let e_at = |j: usize| e_max * (j as f64 / fine as f64);
    let objective =
        |p: &CheckPlan| weights.per_check * p.n_check as f64 + weights.per_replacement * p.replacements as f64;
    let eval = |j: usize| -> Result<(f64, CheckPlan)> {
        let plan = check_plan_at(n, e_initial, e_at(j), req, opts, weights)?;
        Ok((objective(&plan), plan))
    };

    let coarse: Vec<(f64, CheckPlan)> = (0..=opts.grid_points)
        .map(|i| eval(i * opts.refinement))
        .collect::<Result<_>>()?;
    let mut best_j = 0;
    let mut best = coarse[0].clone();
    let consider = |j: usize, cand: (f64, CheckPlan), best_j: &mut usize, best: &mut (f64, CheckPlan)| {
        if cand.0 < best.0 || (cand.0 == best.0 && j > *best_j) {
            *best_j = j;
            *best = cand;
        }
    };
    for (i, cand) in coarse.iter().enumerate().skip(1) {
        consider(i * opts.refinement, cand.clone(), &mut best_j, &mut best);
    }
    if opts.refinement > 1 {
        for i in 0..opts.grid_points {
            let (lo, hi) = (&coarse[i].1, &coarse[i + 1].1);
            let spot_floor = if n == 0 {
                0
            } else {
                corrected_sample(lo.n_rand, lo.n_improv, n)?.saturating_sub(2)
            };
            let bound = weights.per_check * (hi.n_improv + spot_floor) as f64
                + weights.per_replacement * hi.replacements as f64;
            if bound > best.0 {
                continue;
            }
            for j in i * opts.refinement + 1..(i + 1) * opts.refinement {
                let cand = eval(j)?;
                consider(j, cand, &mut best_j, &mut best);
            }
        }
    }
    Ok(best.1)
}

fn full_sweep_plan(n: u64, e_initial: f64, weights: CheckWeights) -> CheckPlan {
    if e_initial == 0.0 {
        return CheckPlan {
            n,
            ..CheckPlan::empty(0.0, 0.0)
        };
    }
    let replacements = ceil_count(n as f64 * e_initial);
    CheckPlan {
        n,
        e_initial,
        e_opt: 0.0,
        e_tol: 0.0,
        n_improv: n,
        n_rand: 0,
        n_rand_corr: 0,
        n_check: n,
        replacements,
        check_cost: weights.per_check * n as f64,
        full_sweep: true,
        note: Some("allowed error is 0: a spot check cannot certify it, every scenario is checked".into()),
    }
}

/// Settings of [`optimize_acquisition`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    pub check: CheckOptions,
    /// Volume the target coverage refers to. Defaults to the saturation level
    /// `a + v_pre` of the mining model.
    pub reference_volume: Option<f64>,
}

/// Outcome of one candidate strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    /// Mined scenarios at which generation starts; `None` for mining only.
    pub entry: Option<u64>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub total_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionPlan {
    pub feasible: bool,
    /// Entry point of the chosen plan; `None` when only mining is used.
    pub generation_entry: Option<u64>,
    pub n_mine: u64,
    pub n_gen: u64,
    pub check: CheckPlan,
    pub setup_cost: f64,
    pub mining_cost: f64,
    /// Generated scenarios plus replacements of those found invalid.
    pub generation_cost: f64,
    pub checking_cost: f64,
    pub total_cost: f64,
    pub target_coverage: f64,
    pub reference_volume: f64,
    pub target_volume: f64,
    /// Coverage of the chosen plan; for an infeasible result the highest
    /// coverage any candidate can approach.
    pub achieved_coverage: f64,
    pub final_error: f64,
    pub candidates: Vec<CandidateReport>,
}

/// Cost-optimal mix of mining and generation.
///
/// Candidates are every entry point `k` of the generation model's coverage
/// family (mine `k`, then generate until the target volume
/// `target_coverage * reference_volume` is reached) and mining alone.
/// An entry point whose asymptote does not exceed the target volume is
/// infeasible. The cheapest feasible candidate wins; ties keep the smaller
/// entry point, and mining alone ranks last.
pub fn optimize_acquisition(
    mining: &AcquisitionMetaModel,
    generation: &AcquisitionMetaModel,
    req: &QualityRequirements,
    opts: &PlanOptions,
) -> Result<AcquisitionPlan> {
    if mining.kind() != MethodKind::Mining {
        return Err(Error::contract(format!("'{}' is not a mining model", mining.name())));
    }
    if generation.kind() != MethodKind::Generation {
        return Err(Error::contract(format!(
            "'{}' is not a generation model",
            generation.name()
        )));
    }
    if generation.coverage_models().is_empty() {
        return Err(Error::contract(format!(
            "generation model '{}' has no coverage models",
            generation.name()
        )));
    }
    let mining_model = *mining.coverage_model_at(0).expect("mining models carry entry 0");
    let reference_volume = opts.reference_volume.unwrap_or_else(|| mining_model.asymptote());
    if !(reference_volume.is_finite() && reference_volume > 0.0) {
        return Err(Error::contract(format!(
            "reference volume must be positive, got {reference_volume}"
        )));
    }
    let target_volume = req.target_coverage * reference_volume;
    let mc = mining.costs();
    let gc = generation.costs();

    let mut candidates = Vec::new();
    let mut best: Option<AcquisitionPlan> = None;
    let mut best_reachable = 0.0f64;
    let mut best_reachable_entry = 0u64;

    let mut offer = |plan: std::result::Result<AcquisitionPlan, String>,
                     entry: Option<u64>,
                     asymptote: f64,
                     candidates: &mut Vec<CandidateReport>| {
        if asymptote > best_reachable {
            best_reachable = asymptote;
            best_reachable_entry = entry.unwrap_or(0);
        }
        match plan {
            Ok(plan) => {
                candidates.push(CandidateReport {
                    entry,
                    feasible: true,
                    total_cost: Some(plan.total_cost),
                    reason: None,
                });
                if best.as_ref().is_none_or(|b| plan.total_cost < b.total_cost) {
                    best = Some(plan);
                }
            }
            Err(reason) => candidates.push(CandidateReport {
                entry,
                feasible: false,
                total_cost: None,
                reason: Some(reason),
            }),
        }
    };

    let base = AcquisitionPlan {
        feasible: true,
        generation_entry: None,
        n_mine: 0,
        n_gen: 0,
        check: CheckPlan::empty(0.0, req.allowed_error),
        setup_cost: 0.0,
        mining_cost: 0.0,
        generation_cost: 0.0,
        checking_cost: 0.0,
        total_cost: 0.0,
        target_coverage: req.target_coverage,
        reference_volume,
        target_volume,
        achieved_coverage: 0.0,
        final_error: 0.0,
        candidates: Vec::new(),
    };

    for &(k, model) in generation.coverage_models() {
        let plan = entry_plan(k, &model, generation, mc, gc, req, opts, target_volume, &base);
        offer(plan, Some(k), model.asymptote(), &mut candidates);
    }

    let mining_only = match mining_model.required_count_for_volume(target_volume) {
        Ok(n_mine) => {
            let setup_cost = mc.setup;
            let mining_cost = n_mine as f64 * mc.gaining;
            Ok(AcquisitionPlan {
                n_mine,
                setup_cost,
                mining_cost,
                total_cost: setup_cost + mining_cost,
                achieved_coverage: mining_model.value(n_mine as f64) / reference_volume,
                ..base.clone()
            })
        }
        Err(e) => Err(e.to_string()),
    };
    offer(mining_only, None, mining_model.asymptote(), &mut candidates);

    let mut plan = best.unwrap_or_else(|| AcquisitionPlan {
        feasible: false,
        n_mine: best_reachable_entry,
        achieved_coverage: best_reachable / reference_volume,
        ..base.clone()
    });
    plan.candidates = candidates;
    Ok(plan)
}

#[allow(clippy::too_many_arguments)]
fn entry_plan(
    k: u64,
    model: &WeibullCoverageModel,
    generation: &AcquisitionMetaModel,
    mc: &CostAttributes,
    gc: &CostAttributes,
    req: &QualityRequirements,
    opts: &PlanOptions,
    target_volume: f64,
    base: &AcquisitionPlan,
) -> std::result::Result<AcquisitionPlan, String> {
    let n_gen = model.required_count_for_volume(target_volume).map_err(|e| match e {
        Error::Unreachable(_) => format!(
            "asymptote {} does not exceed the target volume {target_volume}",
            model.asymptote()
        ),
        other => other.to_string(),
    })?;
    let reference_volume = base.reference_volume;
    let mining_cost = k as f64 * mc.gaining;
    if n_gen == 0 {
        let setup_cost = mc.setup;
        return Ok(AcquisitionPlan {
            generation_entry: Some(k),
            n_mine: k,
            setup_cost,
            mining_cost,
            total_cost: setup_cost + mining_cost,
            achieved_coverage: model.v_pre() / reference_volume,
            ..base.clone()
        });
    }
    let e_initial = generation.error_rate().evaluate(k).map_err(|e| e.to_string())?;
    let weights = CheckWeights {
        per_check: gc.validation,
        per_replacement: gc.gaining,
    };
    let check = optimize_check_with(n_gen, e_initial, req, &opts.check, weights).map_err(|e| e.to_string())?;
    let setup_cost = mc.setup + gc.setup;
    let generation_cost = (n_gen + check.replacements) as f64 * gc.gaining;
    let checking_cost = check.n_check as f64 * gc.validation;
    Ok(AcquisitionPlan {
        generation_entry: Some(k),
        n_mine: k,
        n_gen,
        setup_cost,
        mining_cost,
        generation_cost,
        checking_cost,
        total_cost: setup_cost + mining_cost + generation_cost + checking_cost,
        achieved_coverage: model.value(n_gen as f64) / reference_volume,
        final_error: check.e_opt,
        check,
        ..base.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Mining gaining cost per scenario.
    MiningCost,
    AllowedError,
    TargetCoverage,
    /// Generation validation cost per checked scenario.
    ValidationCost,
}

/// Inputs shared by every row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseScenario {
    pub mining: AcquisitionMetaModel,
    pub generation: AcquisitionMetaModel,
    pub requirements: QualityRequirements,
    pub options: PlanOptions,
}

/// One sweep row; serializes to the CSV columns
/// `axis_value,total_cost,n_mine,n_gen,n_check,feasible`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub total_cost: f64,
    pub n_mine: u64,
    pub n_gen: u64,
    pub n_check: u64,
    pub feasible: bool,
    #[serde(skip)]
    pub plan: AcquisitionPlan,
}

/// Reruns [`optimize_acquisition`] with `axis` set to each of `values`.
///
/// All values are validated before any row is computed. Infeasible rows are
/// kept and marked.
pub fn sensitivity_sweep(axis: SweepAxis, values: &[f64], base: &BaseScenario) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::contract("sweep needs at least one value"));
    }
    let scenarios = values
        .iter()
        .map(|&v| substitute(axis, v, base))
        .collect::<Result<Vec<_>>>()?;
    scenarios
        .into_par_iter()
        .zip(values.par_iter())
        .map(|(s, &v)| {
            let plan = optimize_acquisition(&s.mining, &s.generation, &s.requirements, &s.options)?;
            Ok(SweepRow {
                axis_value: v,
                total_cost: plan.total_cost,
                n_mine: plan.n_mine,
                n_gen: plan.n_gen,
                n_check: plan.check.n_check,
                feasible: plan.feasible,
                plan,
            })
        })
        .collect()
}

fn substitute(axis: SweepAxis, v: f64, base: &BaseScenario) -> Result<BaseScenario> {
    let mut s = base.clone();
    match axis {
        SweepAxis::MiningCost => {
            let c = base.mining.costs();
            s.mining = base.mining.with_costs(CostAttributes::new(c.setup, v, c.validation)?);
        }
        SweepAxis::ValidationCost => {
            let c = base.generation.costs();
            s.generation = base.generation.with_costs(CostAttributes::new(c.setup, c.gaining, v)?);
        }
        SweepAxis::AllowedError => {
            let r = &base.requirements;
            s.requirements = QualityRequirements::new(v, r.confidence_z, r.target_coverage)?;
        }
        SweepAxis::TargetCoverage => {
            let r = &base.requirements;
            s.requirements = QualityRequirements::new(r.allowed_error, r.confidence_z, v)?;
        }
    }
    Ok(s)
}
