//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scenario_coverage::economics::{
    cochran_sample, optimize_acquisition, optimize_check, sensitivity_sweep, BaseScenario, PlanOptions,
    QualityRequirements, SweepAxis,
};
use scenario_coverage::fitting::{bootstrap_fit, fit_weibull, BootstrapConfig, WeibullCoverageModel};
use scenario_coverage::geometry::{
    build_reference_volume, kernels_for, union_volume, ParameterPoint, ParameterSpace, SampleCloud, SemiAxes,
};
use scenario_coverage::metamodel::{
    fit_generation_metamodel, AcquisitionMetaModel, CostAttributes, GenerationFitConfig,
};
use scenario_coverage::synthetic::{DegradableGenerator, MixtureComponent, SyntheticSource};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn pt(v: &[f64]) -> ParameterPoint {
    ParameterPoint::new(v.to_vec()).unwrap()
}

fn square(lo: f64, hi: f64) -> ParameterSpace {
    ParameterSpace::new(vec![lo, lo], vec![hi, hi]).unwrap()
}

fn within(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs()
}

fn snap_ceil(x: f64) -> u64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as u64
}

fn weibull(a: f64, b: f64, c: f64, v_pre: f64, x: f64) -> f64 {
    a * (1.0 - (-b * x.powf(c)).exp()) + v_pre
}

// ---------------------------------------------------------------- 1

fn geometry_oracle() -> Outcome {
    let start = Instant::now();
    let cloud = SampleCloud::new(square(-3.0, 3.0), 101, 1 << 20).map_err(|e| e.to_string())?;
    let axes = SemiAxes::new(vec![1.5, 0.8]).unwrap();
    let v = union_volume(&kernels_for(&[pt(&[0.3, -0.2])], &axes).unwrap(), &cloud)
        .map_err(|e| e.to_string())?
        .volume;
    let elapsed = start.elapsed();
    let exact = PI * 1.5 * 0.8;
    ensure!(within(v, exact, 0.01), "ellipse {v} vs {exact}");
    ensure!(elapsed < Duration::from_secs(1), "ellipse took {elapsed:?}");

    let d: f64 = 1.0;
    let lens = 2.0 * (d / 2.0).acos() - (d / 2.0) * (4.0 - d * d).sqrt();
    let union = 2.0 * PI - lens;
    ensure!((union - 5.0548).abs() < 1e-4, "analytic union {union}");
    let cloud = SampleCloud::new(square(-2.0, 3.0), 102, 1 << 20).unwrap();
    let circles = kernels_for(
        &[pt(&[0.0, 0.0]), pt(&[d, 0.0])],
        &SemiAxes::new(vec![1.0, 1.0]).unwrap(),
    )
    .unwrap();
    let u = union_volume(&circles, &cloud).unwrap().volume;
    ensure!(within(u, 5.0548, 0.01), "two circles {u} vs 5.0548");
    Ok(format!(
        "ellipse {v:.4} vs {exact:.4} in {elapsed:.2?}; two circles {u:.4} vs 5.0548"
    ))
}

// ---------------------------------------------------------------- 2

fn weibull_recovery() -> Outcome {
    let start = Instant::now();
    let (a, b, c) = (10.0, 0.01, 1.2);
    let clean: Vec<(usize, f64)> = (1..=400).map(|x| (x, weibull(a, b, c, 0.0, x as f64))).collect();
    // Multiplicative noise, then the running maximum: measured coverage
    // curves never decrease.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut top = 0.0_f64;
    let noisy: Vec<(usize, f64)> = clean
        .iter()
        .map(|&(x, v)| {
            let eps: f64 = rng.sample(StandardNormal);
            top = top.max(v * (1.0 + 0.01 * eps));
            (x, top)
        })
        .collect();
    let params = |m: &WeibullCoverageModel| [m.a(), m.b(), m.c()];
    let exact = fit_weibull(&clean, 0.0).map_err(|e| e.to_string())?;
    let rough = fit_weibull(&noisy, 0.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    for (got, want) in params(&exact).into_iter().zip([a, b, c]) {
        ensure!(within(got, want, 0.01), "noiseless {got} vs {want}");
    }
    for (got, want) in params(&rough).into_iter().zip([a, b, c]) {
        ensure!(within(got, want, 0.05), "noisy {got} vs {want}");
    }
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!(
        "noiseless ({:.4}, {:.5}, {:.4}); 1% noise ({:.4}, {:.5}, {:.4}) in {elapsed:.2?}",
        exact.a(),
        exact.b(),
        exact.c(),
        rough.a(),
        rough.b(),
        rough.c()
    ))
}

// ---------------------------------------------------------------- 3

fn convergence() -> Outcome {
    let space = square(0.0, 20.0);
    let axes = SemiAxes::new(vec![0.3, 0.3]).unwrap();
    let cloud = SampleCloud::new(space.clone(), 31, 200_000).unwrap();
    let cfg = BootstrapConfig {
        replicates: 32,
        seed: 32,
        cv_threshold: 0.05,
        max_curve_points: 1000,
    };
    let points = SyntheticSource::uniform_box(space, 33).draw(5000);
    let cv = |n: usize| {
        bootstrap_fit(&points[..n], &axes, &cloud, &cfg)
            .map(|f| f.diagnostics.param_cv.a)
            .map_err(|e| e.to_string())
    };
    let (large, small) = (cv(5000)?, cv(500)?);
    ensure!(large < 0.05, "CV(a) at 5000 is {large}");
    ensure!(small > large, "CV(a) at 500 is {small}, at 5000 {large}");
    Ok(format!("CV(a) {large:.4} at 5000 points, {small:.4} at 500"))
}

// ---------------------------------------------------------------- 4

fn error_rate_trend() -> Outcome {
    let start = Instant::now();
    let space = square(0.0, 20.0);
    let axes = SemiAxes::new(vec![0.5, 0.5]).unwrap();
    let components = vec![
        MixtureComponent {
            weight: 0.6,
            mean: vec![6.0, 6.0],
            std: vec![1.2, 1.2],
        },
        MixtureComponent {
            weight: 0.4,
            mean: vec![14.0, 13.0],
            std: vec![1.5, 1.0],
        },
    ];
    let mined = SyntheticSource::gaussian_mixture(components, 41).unwrap().draw(5000);
    ensure!(
        mined.iter().all(|p| space.contains(p.coords())),
        "mined point outside the space"
    );
    let reference = build_reference_volume(&mined, &axes, 1.5, &space).unwrap();
    let cloud = SampleCloud::new(space.clone(), 42, 1 << 20).unwrap();
    let p_out = 1.0 - reference.volume(&cloud).unwrap().fraction();
    let leak = 1.0;
    let generator = DegradableGenerator {
        leak,
        semi_axes: axes.clone(),
        space: space.clone(),
    };
    let per_grid = 50_000;
    let cfg = GenerationFitConfig {
        name: "degradable".into(),
        costs: CostAttributes::new(0.0, 1.0, 1.0).unwrap(),
        semi_axes: axes,
        per_grid_sample: per_grid,
        seed: 43,
        max_curve_points: 500,
    };
    let fit = fit_generation_metamodel(&[500, 1000, 2000, 5000], &mined, &generator, &reference, &cloud, &cfg)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let rates: Vec<f64> = fit.grid.iter().map(|g| g.error_rate).collect();
    ensure!(
        rates.windows(2).all(|w| w[1] < w[0]),
        "not strictly decreasing: {rates:?}"
    );
    let mut detail = Vec::new();
    for g in &fit.grid {
        let expected = leak / (g.input_count as f64).sqrt() * p_out;
        let sigma = (expected * (1.0 - expected) / per_grid as f64).sqrt();
        let z = (g.error_rate - expected) / sigma;
        ensure!(
            z.abs() <= 3.0,
            "k={}: {} vs {expected} ({z:.2} sigma)",
            g.input_count,
            g.error_rate
        );
        detail.push(format!("{}:{:.5}({z:+.1}s)", g.input_count, g.error_rate));
    }
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} in {elapsed:.2?}", detail.join(" ")))
}

// ---------------------------------------------------------------- 5

fn cochran_exact() -> Outcome {
    let first = cochran_sample(0.05, 0.02, 1.96).map_err(|e| e.to_string())?;
    let second = cochran_sample(0.5, 0.1, 2.0).map_err(|e| e.to_string())?;
    ensure!(first == 457, "cochran(0.05, 0.02, 1.96) = {first}");
    ensure!(second == 100, "cochran(0.5, 0.1, 2) = {second}");
    Ok(format!("{first} and {second}"))
}

// ---------------------------------------------------------------- 6

/// `(n_check, e_opt)` minimizing the number of checks over the 10,001 point
/// grid below `min(e0, allowed)`; ties go to the largest `e_opt`.
fn exhaustive_check(n: u64, e0: f64, allowed: f64, z: f64) -> (u64, f64) {
    let e_max = e0.min(allowed * (1.0 - 1e-6));
    let mut best = (u64::MAX, 0.0);
    for j in 0..=10_000usize {
        let e = e_max * (j as f64 / 10_000.0);
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
        } as f64;
        let corr = snap_ceil(nr - nimp as f64 * nr / n as f64);
        if nimp + corr <= best.0 {
            best = (nimp + corr, e);
        }
    }
    best
}

fn check_optimizer() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for _ in 0..25 {
        let n = rng.random_range(1..=100_000u64);
        let e0 = rng.random_range(0.0..0.5);
        let allowed = rng.random_range(0.001..0.3);
        let z = rng.random_range(1.0..3.0);
        let req = QualityRequirements::new(allowed, z, 0.5).unwrap();
        let plan = optimize_check(n, e0, &req).map_err(|e| e.to_string())?;
        let (nc, e) = exhaustive_check(n, e0, allowed, z);
        ensure!(
            (plan.n_check, plan.e_opt) == (nc, e),
            "n={n} e0={e0} allowed={allowed} z={z}: got ({}, {}) want ({nc}, {e})",
            plan.n_check,
            plan.e_opt
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("25 fixtures equal to the exhaustive grid in {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 7

/// Mining plus generation with four entry points; entry 500 saturates at 60,
/// below coverage 0.8 of the mining saturation level 100.
fn fixture(mining_gaining: f64) -> (AcquisitionMetaModel, AcquisitionMetaModel) {
    let mine = WeibullCoverageModel::new(100.0, 3e-4, 1.0, 0.0).unwrap();
    let mining = AcquisitionMetaModel::mining(
        "mining",
        CostAttributes::new(2000.0, mining_gaining, 0.0).unwrap(),
        mine,
    );
    let coverage = [500u64, 1000, 2000, 5000]
        .into_iter()
        .zip([60.0, 85.0, 95.0, 99.0])
        .map(|(k, top)| {
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

fn smallest_reaching(f: impl Fn(f64) -> f64, target: f64) -> Option<u64> {
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

/// Cheapest `(entry, total cost)` by enumeration, with the entries that can
/// reach the target listed separately.
fn brute_plan(
    mining: &AcquisitionMetaModel,
    generation: &AcquisitionMetaModel,
    allowed: f64,
    z: f64,
    target: f64,
) -> (Option<(Option<u64>, f64)>, Vec<u64>) {
    let m = mining.coverage_models()[0].1;
    let t = target * (m.a() + m.v_pre());
    let (mc, gc) = (mining.costs(), generation.costs());
    let mut best: Option<(Option<u64>, f64)> = None;
    let mut reachable = Vec::new();
    let mut offer = |entry, cost: f64| {
        if best.is_none_or(|(_, c)| cost < c) {
            best = Some((entry, cost));
        }
    };
    for &(k, w) in generation.coverage_models() {
        if w.a() + w.v_pre() <= t {
            continue;
        }
        let Some(n_gen) = smallest_reaching(|x| weibull(w.a(), w.b(), w.c(), w.v_pre(), x), t) else {
            continue;
        };
        reachable.push(k);
        let e0 = generation.error_rate().samples().iter().find(|s| s.0 == k).unwrap().1;
        let e_max = e0.min(allowed * (1.0 - 1e-6));
        let mut check = f64::INFINITY;
        for j in 0..=10_000usize {
            let e = e_max * (j as f64 / 10_000.0);
            let nimp = snap_ceil(n_gen as f64 * (1.0 - e / e0)).min(n_gen);
            let tol = allowed - e;
            let nr = if e == 0.0 {
                0
            } else {
                snap_ceil(z * z * e * (1.0 - e) / (tol * tol)).min(n_gen)
            } as f64;
            let nc = nimp + snap_ceil(nr - nimp as f64 * nr / n_gen as f64);
            let replaced = snap_ceil(nimp as f64 * e0);
            check = check.min(gc.validation * nc as f64 + gc.gaining * replaced as f64);
        }
        offer(
            Some(k),
            mc.setup + gc.setup + k as f64 * mc.gaining + n_gen as f64 * gc.gaining + check,
        );
    }
    if let Some(n) = smallest_reaching(|x| weibull(m.a(), m.b(), m.c(), m.v_pre(), x), t) {
        offer(None, mc.setup + n as f64 * mc.gaining);
    }
    (best, reachable)
}

fn plan_optimality() -> Outcome {
    let mut detail = Vec::new();
    for (gaining, allowed, target) in [
        (240.0, 0.03, 0.8),
        (90.0, 0.05, 0.8),
        (740.0, 0.02, 0.9),
        (240.0, 0.08, 0.7),
    ] {
        let (mining, generation) = fixture(gaining);
        let req = QualityRequirements::new(allowed, 1.96, target).unwrap();
        let plan =
            optimize_acquisition(&mining, &generation, &req, &PlanOptions::default()).map_err(|e| e.to_string())?;
        let (best, reachable) = brute_plan(&mining, &generation, allowed, 1.96, target);
        let (entry, cost) = best.ok_or("brute force found nothing feasible")?;
        ensure!(plan.feasible, "plan infeasible at gaining {gaining}");
        ensure!(
            plan.generation_entry == entry && within(plan.total_cost, cost, 1e-9),
            "gaining {gaining}: got {:?} {} want {entry:?} {cost}",
            plan.generation_entry,
            plan.total_cost
        );
        for c in plan.candidates.iter().filter(|c| c.entry.is_some()) {
            let k = c.entry.unwrap();
            ensure!(
                c.feasible == reachable.contains(&k),
                "entry {k}: feasible={} disagrees",
                c.feasible
            );
        }
        detail.push(format!(
            "{:?}@{cost:.0}",
            entry.map_or("mining".to_string(), |k| k.to_string())
        ));
    }
    let (mining, generation) = fixture(240.0);
    let req = QualityRequirements::new(0.03, 1.96, 0.8).unwrap();
    let plan = optimize_acquisition(&mining, &generation, &req, &PlanOptions::default()).unwrap();
    let first = plan
        .candidates
        .iter()
        .find(|c| c.entry == Some(500))
        .ok_or("entry 500 not reported")?;
    ensure!(!first.feasible && first.total_cost.is_none(), "entry 500 not excluded");
    Ok(format!("{}; entry 500 excluded", detail.join(" ")))
}

// ---------------------------------------------------------------- 8

fn sensitivity_trends() -> Outcome {
    let (mining, generation) = fixture(240.0);
    let base = BaseScenario {
        mining,
        generation,
        requirements: QualityRequirements::new(0.03, 1.96, 0.8).unwrap(),
        options: PlanOptions::default(),
    };
    let costs = sensitivity_sweep(SweepAxis::MiningCost, &[90.0, 240.0, 740.0], &base).map_err(|e| e.to_string())?;
    let totals: Vec<f64> = costs.iter().map(|r| r.total_cost).collect();
    ensure!(
        totals.windows(2).all(|w| w[0] <= w[1]),
        "total over mining cost {totals:?}"
    );

    let errors = [0.01, 0.02, 0.03, 0.05, 0.08];
    let rows = sensitivity_sweep(SweepAxis::AllowedError, &errors, &base).map_err(|e| e.to_string())?;
    let totals: Vec<f64> = rows.iter().map(|r| r.total_cost).collect();
    let checking: Vec<f64> = rows.iter().map(|r| r.plan.checking_cost).collect();
    ensure!(rows.iter().all(|r| r.feasible), "infeasible sweep row");
    ensure!(
        totals.windows(2).all(|w| w[0] >= w[1]),
        "total over allowed error {totals:?}"
    );
    ensure!(
        checking.windows(2).all(|w| w[0] >= w[1]),
        "checking over allowed error {checking:?}"
    );
    ensure!(
        checking[0] > checking[checking.len() - 1],
        "checking cost flat {checking:?}"
    );
    Ok(format!(
        "totals {:?} over mining cost; checking {:?} over allowed error {errors:?}",
        costs.iter().map(|r| r.total_cost).collect::<Vec<_>>(),
        checking
    ))
}

// ---------------------------------------------------------------- 9

const CONFIG: &str = r#"
seed = 11

[space]
names = ["x", "y"]
lower = [0.0, 0.0]
upper = [20.0, 20.0]

[kernel]
semi_axes = [0.5, 0.5]

[cloud]
samples = 50000

[fitting]
replicates = 8

[quality]
allowed_error = 0.03
target_coverage = 0.8

[costs.mining]
setup = 2000
gaining = 240

[costs.generation]
setup = 500
gaining = 1
validation = 5

[metamodel]
grid = [200, 400, 800]
per_grid_sample = 5000

[metamodel.generator]
kind = "degradable"
leak = 1.0

[plan.sweep]
axis = "allowed_error"
values = [0.02, 0.03, 0.05]

[synth]
count = 5000
kind = "gaussian_mixture"
components = [
    { weight = 0.6, mean = [6.0, 6.0], std = [1.5, 1.5] },
    { weight = 0.4, mean = [14.0, 12.0], std = [2.0, 1.0] },
]
"#;

/// Runs the whole pipeline in `dir`; returns the captured stdout of each step.
fn pipeline(dir: &Path, threads: &str) -> Result<Vec<Vec<u8>>, String> {
    let config = dir.join("run.toml");
    std::fs::write(&config, CONFIG).map_err(|e| e.to_string())?;
    let out = dir.join("out");
    let o = |f: &str| out.join(f).display().to_string();
    let steps: [Vec<String>; 4] = [
        vec!["synth".into()],
        vec!["coverage".into(), "--input".into(), o("synthetic.csv")],
        vec!["metamodel".into(), "--input".into(), o("synthetic.csv")],
        vec![
            "plan".into(),
            "--mining".into(),
            o("mining_metamodel.json"),
            "--generation".into(),
            o("generation_metamodel.json"),
        ],
    ];
    let mut stdout = Vec::new();
    for step in steps {
        let run = Command::new(env!("CARGO_BIN_EXE_scencov"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .args(&step)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            run.status.success(),
            "{} exited with {}: {}",
            step[0],
            run.status,
            String::from_utf8_lossy(&run.stderr)
        );
        stdout.push(run.stdout);
    }
    Ok(stdout)
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let (first, second) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = pipeline(first.path(), "4")?;
    let out_b = pipeline(second.path(), "1")?;
    ensure!(out_a == out_b, "stdout differs");
    let (a, b) = (outputs(first.path()), outputs(second.path()));
    ensure!(a.len() == 7, "expected 7 output files, found {}", a.len());
    let names_a: Vec<&String> = a.iter().map(|f| &f.0).collect();
    let names_b: Vec<&String> = b.iter().map(|f| &f.0).collect();
    ensure!(names_a == names_b, "file sets differ: {names_a:?} vs {names_b:?}");
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure!(x == y, "{name} differs between runs");
    }
    Ok(format!(
        "{} files byte-identical across runs on 4 and 1 threads",
        a.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("geometry oracle", geometry_oracle),
        ("weibull recovery", weibull_recovery),
        ("bootstrap convergence", convergence),
        ("error-rate trend", error_rate_trend),
        ("cochran sample size", cochran_exact),
        ("check optimizer", check_optimizer),
        ("plan optimality", plan_optimality),
        ("sensitivity trends", sensitivity_trends),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let result = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
