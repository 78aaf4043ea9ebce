#![allow(dead_code)]

use scenario_coverage::fitting::WeibullCoverageModel;
use scenario_coverage::geometry::ParameterPoint;
use scenario_coverage::metamodel::{AcquisitionMetaModel, CostAttributes};

pub fn pt(v: &[f64]) -> ParameterPoint {
    ParameterPoint::new(v.to_vec()).unwrap()
}

pub fn in_ellipse(center: &[f64], axes: &[f64], x: &[f64]) -> bool {
    center
        .iter()
        .zip(axes)
        .zip(x)
        .map(|((c, p), v)| ((v - c) / p).powi(2))
        .sum::<f64>()
        <= 1.0
}

pub fn snap_ceil(x: f64) -> u64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as u64
}

/// Check counts at one `e_opt`: `(n_check, replacements)`.
pub fn brute_check(n: u64, e0: f64, allowed: f64, z: f64, e: f64) -> (u64, u64) {
    let nimp = if e0 == 0.0 {
        0
    } else {
        snap_ceil(n as f64 * (1.0 - e / e0)).min(n)
    };
    let tol = allowed - e;
    let nr = if e == 0.0 {
        0
    } else {
        snap_ceil(z * z * e * (1.0 - e) / (tol * tol)).min(n)
    };
    let r = nr as f64;
    let corr = if n == 0 {
        0
    } else {
        snap_ceil(r - nimp as f64 * r / n as f64)
    };
    (nimp + corr, snap_ceil(nimp as f64 * e0))
}

/// Exhaustive minimum of `wc * n_check + wr * replacements` over the 10,001
/// point grid; ties go to the largest `e_opt`. Returns `(objective, e_opt, n_check)`.
pub fn brute_optimum(n: u64, e0: f64, allowed: f64, z: f64, wc: f64, wr: f64) -> (f64, f64, u64) {
    let e_max = e0.min(allowed * (1.0 - 1e-6));
    let mut best = (f64::INFINITY, 0.0, 0);
    for j in 0..=10_000usize {
        let e = e_max * (j as f64 / 10_000.0);
        let (nc, rep) = brute_check(n, e0, allowed, z, e);
        let obj = wc * nc as f64 + wr * rep as f64;
        if obj <= best.0 {
            best = (obj, e, nc);
        }
    }
    best
}

pub fn weibull(a: f64, b: f64, c: f64, v_pre: f64, x: f64) -> f64 {
    a * (1.0 - (-b * x.powf(c)).exp()) + v_pre
}

/// Smallest integer `n` with `f(n) >= target` for increasing `f`, by
/// doubling and bisection.
pub fn smallest_reaching(f: impl Fn(f64) -> f64, target: f64) -> Option<u64> {
    if f(0.0) >= target {
        return Some(0);
    }
    let mut hi = 1u64;
    while f(hi as f64) < target {
        hi *= 2;
        if hi > 1 << 53 {
            return None;
        }
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid as f64) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Mining plus generation meta models with four entry points; entry 500 can
/// never reach coverage 0.8 of the mining saturation level (100).
pub fn fixture_models(mining_gaining: f64) -> (AcquisitionMetaModel, AcquisitionMetaModel) {
    let mine = WeibullCoverageModel::new(100.0, 3e-4, 1.0, 0.0).unwrap();
    let mining = AcquisitionMetaModel::mining(
        "mining",
        CostAttributes::new(2000.0, mining_gaining, 0.0).unwrap(),
        mine,
    );
    let asymptotes = [60.0, 85.0, 95.0, 99.0];
    let grid = [500u64, 1000, 2000, 5000];
    let coverage = grid
        .iter()
        .zip(asymptotes)
        .map(|(&k, top)| {
            let v_pre = mine.value(k as f64);
            (k, WeibullCoverageModel::new(top - v_pre, 2e-4, 0.9, v_pre).unwrap())
        })
        .collect();
    let generation = AcquisitionMetaModel::generation(
        "generation",
        CostAttributes::new(500.0, 1.0, 5.0).unwrap(),
        vec![(500, 0.2), (1000, 0.12), (2000, 0.08), (5000, 0.05)],
        coverage,
    )
    .unwrap();
    (mining, generation)
}

/// Brute-force cheapest total cost over entry points and the `e_opt` grid,
/// with mining alone as a candidate. `None` when nothing is feasible.
pub fn brute_plan(
    mining: &AcquisitionMetaModel,
    generation: &AcquisitionMetaModel,
    allowed: f64,
    z: f64,
    target: f64,
) -> Option<(Option<u64>, f64)> {
    let m = mining.coverage_models()[0].1;
    let reference = m.a() + m.v_pre();
    let t = target * reference;
    let (mc, gc) = (mining.costs(), generation.costs());
    let mut best: Option<(Option<u64>, f64)> = None;
    let mut offer = |entry, cost: f64| {
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((entry, cost));
        }
    };
    let samples = generation.error_rate().samples();
    for &(k, w) in generation.coverage_models() {
        if w.a() + w.v_pre() <= t {
            continue;
        }
        let Some(n_gen) = smallest_reaching(|x| weibull(w.a(), w.b(), w.c(), w.v_pre(), x), t) else {
            continue;
        };
        let mining_part = k as f64 * mc.gaining;
        if n_gen == 0 {
            offer(Some(k), mc.setup + mining_part);
            continue;
        }
        let e0 = samples.iter().find(|s| s.0 == k).unwrap().1;
        let (obj, _, _) = brute_optimum(n_gen, e0, allowed, z, gc.validation, gc.gaining);
        offer(
            Some(k),
            mc.setup + gc.setup + mining_part + n_gen as f64 * gc.gaining + obj,
        );
    }
    if let Some(n) = smallest_reaching(|x| weibull(m.a(), m.b(), m.c(), m.v_pre(), x), t) {
        if t < reference {
            offer(None, mc.setup + n as f64 * mc.gaining);
        }
    }
    best
}
