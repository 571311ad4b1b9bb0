//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use covertime::asymptotics::{
    inclusion_exclusion_max, subdiffusive_formula, theorem1_moment, theorem2_moment,
};
use covertime::dynamics::{DynamicsSpec, EmKernel};
use covertime::estimator::{run_prepared, ExperimentOptions, MomentReport};
use covertime::geometry::{Domain, StartSet, Target};
use covertime::scenario::{CoverMethod, Motion, Scenario, StepOverrides};
use covertime::subordination::{
    inverse_subordinator_extending, sample_time_changed_path, subordinator_path, SubdiffusionSpec,
    SubordinatorPath,
};
use covertime_cli::commands::random_multiset;
use covertime_cli::presets::PRESET_NAMES;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

const SEED: u64 = 20_240_601;

struct Gate {
    failures: usize,
}

impl Gate {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String, elapsed: Duration) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {id:>2} {name}: {detail} [{:.1} s]",
            elapsed.as_secs_f64()
        );
        self.failures += usize::from(!pass);
    }
}

fn rng(stream: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(SEED ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn slope(ts: &[f64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn run(sc: &Scenario<f64>, n: u64, replicas: usize, seed: u64) -> MomentReport<f64> {
    let prepared = sc.prepare().expect("valid scenario");
    let options = ExperimentOptions {
        threads: None,
        max_moment: 2,
        keep_samples: false,
    };
    run_prepared(&prepared, &[n], replicas, seed, &options)
        .expect("run succeeds")
        .remove(0)
}

/// d = 1 torus of diameter 1.3 with r = 0.3, so L = 1.
fn line_torus(motion: Motion<f64>, method: CoverMethod) -> Scenario<f64> {
    Scenario::torus_full_cover(1, 1.3, 0.3, motion)
        .unwrap()
        .with_method(method)
        .with_steps(StepOverrides {
            dt: Some(1e-5),
            ds: None,
            dx: None,
        })
}

fn lemma(gate: &mut Gate) {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..1000 {
        let v = random_multiset(&mut r);
        let oracle = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = v
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        match inclusion_exclusion_max(&v) {
            Ok(ie) => worst = worst.max((ie - oracle).abs() / scale),
            Err(_) => ok = false,
        }
    }
    let elapsed = start.elapsed();
    let pass = ok && worst <= 1e-9 && elapsed < Duration::from_secs(1);
    gate.record(
        1,
        "inclusion-exclusion equals max",
        pass,
        format!("1000 multisets, worst relative error {worst:.2e}"),
        elapsed,
    );
}

fn laplace(gate: &mut Gate) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, alpha) in [0.3, 0.5, 0.8].into_iter().enumerate() {
        let spec = SubdiffusionSpec {
            alpha,
            diffusivity: 1.0,
            ds: 1.0,
            dt: 1.0,
        };
        let mut r = rng(10 + i as u64);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| subordinator_path(&spec, 1.0, &mut r)[1])
            .collect();
        for lambda in [0.5f64, 1.0, 2.0] {
            let vals: Vec<f64> = draws.iter().map(|t| (-lambda * t).exp()).collect();
            let (m, se) = mean_se(&vals);
            let exact = (-lambda.powf(alpha)).exp();
            worst = worst.max((m - exact).abs() / se);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 3.0 && elapsed < Duration::from_secs(10);
    gate.record(
        2,
        "subordinator Laplace transform",
        pass,
        format!("9 cells, worst deviation {worst:.2} s.e."),
        elapsed,
    );
}

fn inverse_mean(gate: &mut Gate) {
    let start = Instant::now();
    let spec = SubdiffusionSpec {
        alpha: 0.5,
        diffusivity: 1.0,
        ds: 1e-3,
        dt: 1e-3,
    };
    let mut r = rng(20);
    let s1: Vec<f64> = (0..10_000)
        .map(|_| {
            let mut path = SubordinatorPath::new(&spec);
            inverse_subordinator_extending(&mut path, &[1.0], &mut r).unwrap()[0]
        })
        .collect();
    let (m, se) = mean_se(&s1);
    // 1/Γ(3/2)
    let exact = 2.0 / PI.sqrt();
    let z = (m - exact).abs() / se;
    let elapsed = start.elapsed();
    let pass = z <= 3.0 && elapsed < Duration::from_secs(30);
    gate.record(
        3,
        "inverse subordinator mean",
        pass,
        format!("E[S(1)] = {m:.5} ± {se:.5} vs {exact:.5} ({z:.2} s.e.)"),
        elapsed,
    );
}

fn msd(gate: &mut Gate) {
    let start = Instant::now();
    let times: Vec<f64> = (0..=20)
        .map(|k| 0.1 * 10f64.powf(k as f64 / 10.0))
        .collect();
    let paths = 10_000;

    let dt = 1e-3;
    let domain = Domain::free_space(1).unwrap();
    let mut kernel = EmKernel::new(&DynamicsSpec::brownian(1.0, dt), 1);
    let mut r = rng(30);
    let mut diffusive = vec![0.0; times.len()];
    for _ in 0..paths {
        let mut x = [0.0];
        let mut steps = 0usize;
        for (i, t) in times.iter().enumerate() {
            let target = (t / dt).round() as usize;
            while steps < target {
                kernel.step(&mut x, &domain, &mut r).unwrap();
                steps += 1;
            }
            diffusive[i] += x[0] * x[0] / paths as f64;
        }
    }

    let spec = SubdiffusionSpec {
        alpha: 0.5,
        diffusivity: 1.0,
        ds: 1e-3,
        dt: 1e-3,
    };
    let mut r = rng(31);
    let mut sub = vec![0.0; times.len()];
    for _ in 0..paths {
        let path = sample_time_changed_path(&spec, &[0.0], &times, &mut r).unwrap();
        for (acc, y) in sub.iter_mut().zip(&path) {
            *acc += y[0] * y[0] / paths as f64;
        }
    }
    let (a, b) = (slope(&times, &diffusive), slope(&times, &sub));
    let pass = (a - 1.0).abs() <= 0.05 && (b - 0.5).abs() <= 0.05;
    gate.record(
        4,
        "MSD laws",
        pass,
        format!("diffusive slope {a:.4}, subdiffusive (alpha = 0.5) slope {b:.4}"),
        start.elapsed(),
    );
}

fn ratio_to_theory(report: &MomentReport<f64>) -> f64 {
    let n = report.searchers as f64;
    report.mean() * 4.0 * n.ln()
}

fn theorem1_trend(
    gate: &mut Gate,
    r100: &MomentReport<f64>,
    r1e4: &MomentReport<f64>,
    elapsed: Duration,
) {
    let (a, b) = (ratio_to_theory(r100), ratio_to_theory(r1e4));
    let pass =
        r100.valid && r1e4.valid && (0.75..=1.25).contains(&b) && (b - 1.0).abs() < (a - 1.0).abs();
    gate.record(
        5,
        "large-N mean trend (d = 1)",
        pass,
        format!("ratio {a:.4} at N = 100, {b:.4} at N = 1e4"),
        elapsed,
    );
}

fn cv_vanishing(
    gate: &mut Gate,
    r10: &MomentReport<f64>,
    r1e4: &MomentReport<f64>,
    elapsed: Duration,
) {
    let (a, b) = (r10.cv.unwrap_or(f64::NAN), r1e4.cv.unwrap_or(f64::NAN));
    let pass = r10.valid && b < 0.5 * a;
    gate.record(
        6,
        "CV vanishes",
        pass,
        format!("CV {a:.4} at N = 10, {b:.4} at N = 1e4"),
        elapsed,
    );
}

fn target_size(gate: &mut Gate) {
    let start = Instant::now();
    let motion = Motion::brownian(1.0);
    let full = Scenario::torus_full_cover(2, FRAC_1_SQRT_2, 0.3, motion.clone()).unwrap();
    let domain = full.domain.clone();
    let corner = Scenario::new(
        domain.clone(),
        Target::SinglePoint(vec![0.0, 0.0]),
        StartSet::Point(domain.center()),
        motion,
        0.3,
    );
    let a = run(&full, 1000, 200, SEED + 7);
    let b = run(&corner, 1000, 200, SEED + 7);
    let rel = (a.mean() - b.mean()).abs() / a.mean().max(b.mean());
    let pass = a.valid && b.valid && rel <= 0.15;
    gate.record(
        7,
        "target-size independence",
        pass,
        format!(
            "full {:.5}, corner point {:.5}, {:.1}% apart",
            a.mean(),
            b.mean(),
            100.0 * rel
        ),
        start.elapsed(),
    );
}

fn dimension(gate: &mut Gate, d1_100: &MomentReport<f64>, d1_1e4: &MomentReport<f64>) {
    let start = Instant::now();
    let sc = Scenario::torus_full_cover(2, 1.3, 0.3, Motion::brownian(1.0)).unwrap();
    let d2_100 = run(&sc, 100, 200, SEED + 8);
    let d2_1e4 = run(&sc, 10_000, 200, SEED + 8);
    let (a, b) = (d1_100.mean() / d2_100.mean(), d1_1e4.mean() / d2_1e4.mean());
    let pass = d2_100.valid
        && d2_1e4.valid
        && (0.8..=1.25).contains(&b)
        && (b - 1.0).abs() < (a - 1.0).abs();
    gate.record(
        8,
        "dimension independence",
        pass,
        format!("m1(d=1)/m1(d=2) = {a:.4} at N = 100, {b:.4} at N = 1e4"),
        start.elapsed(),
    );
}

fn subdiffusion(gate: &mut Gate, diffusive: &MomentReport<f64>) {
    let start = Instant::now();
    let sc = line_torus(Motion::subdiffusive(0.5, 1.0), CoverMethod::Auto);
    let sc = sc.with_steps(StepOverrides::default());
    let sub = run(&sc, 10_000, 200, SEED + 9);
    let gap = diffusive.mean() - sub.mean();
    let se = (diffusive.mean_stderr().powi(2) + sub.mean_stderr().powi(2)).sqrt();
    let n = 1e4;
    let th1 = theorem1_moment(1.0, 1.0, n, 1).unwrap();
    let th2 = theorem2_moment(1.0, 1.0, 0.5, n, 1).unwrap();
    let pass = sub.valid && gap > 2.0 * se && th2 < th1;
    gate.record(
        9,
        "subdiffusion speed-up",
        pass,
        format!(
            "m1 {:.3e} (alpha = 0.5) vs {:.3e} (diffusive), gap {:.1} s.e.; formulas {th2:.3e} < {th1:.3e}",
            sub.mean(),
            diffusive.mean(),
            gap / se
        ),
        start.elapsed(),
    );
}

fn determinism(gate: &mut Gate) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_covertime");
    let mut mismatched = Vec::new();
    for name in PRESET_NAMES {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out = dir.path().join(format!("{name}-{threads}"));
            let status = Command::new(bin)
                .args([
                    "--preset",
                    name,
                    "--n-list",
                    "10,100",
                    "--replicas",
                    "20",
                    "--threads",
                    threads,
                ])
                .arg("--out-dir")
                .arg(&out)
                .output()
                .expect("binary runs");
            let read = |f: &str| std::fs::read(Path::new(&out).join(f)).ok();
            outputs.push((
                status.status.success(),
                read("moments.csv"),
                read("samples.csv"),
                read("summary.csv"),
            ));
        }
        let same = outputs[0].0 && outputs[0].1.is_some() && outputs[0] == outputs[1];
        if !same {
            mismatched.push(*name);
        }
    }
    let pass = mismatched.is_empty();
    let detail = if pass {
        format!(
            "{} presets byte-identical at 1 and 4 threads",
            PRESET_NAMES.len()
        )
    } else {
        format!("differences in {mismatched:?}")
    };
    gate.record(10, "determinism", pass, detail, start.elapsed());
}

fn cross_validation(gate: &mut Gate, range: &MomentReport<f64>) {
    let start = Instant::now();
    let lattice =
        line_torus(Motion::brownian(1.0), CoverMethod::Lattice).with_steps(StepOverrides {
            dt: Some(1e-5),
            ds: None,
            dx: Some(0.003),
        });
    let lat = run(&lattice, 100, 200, SEED + 5);
    let se = (range.mean_stderr().powi(2) + lat.mean_stderr().powi(2)).sqrt();
    let z = (range.mean() - lat.mean()).abs() / se;
    let pass = lat.valid && z <= 3.0;
    gate.record(
        11,
        "d = 1 lattice vs range",
        pass,
        format!(
            "range {:.5}, lattice {:.5}, {z:.2} s.e.",
            range.mean(),
            lat.mean()
        ),
        start.elapsed(),
    );
}

fn formula_consistency(gate: &mut Gate) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let length = 0.2 + 0.3 * (i % 5) as f64;
        let d = 0.5 + 0.75 * ((i / 5) % 4) as f64;
        let n = 10f64.powi(1 + i / 20);
        let m = 1 + (i % 3) as u32;
        let a = subdiffusive_formula(length, d, 1.0, n, m).unwrap();
        let b = theorem1_moment(length, d, n, m).unwrap();
        worst = worst.max((a - b).abs() / b / f64::EPSILON);
    }
    let pass = worst <= 8.0;
    gate.record(
        12,
        "alpha = 1 reduces to the diffusive formula",
        pass,
        format!("100 points, worst {worst:.1} ulp"),
        start.elapsed(),
    );
}

fn main() {
    let mut gate = Gate { failures: 0 };
    lemma(&mut gate);
    laplace(&mut gate);
    inverse_mean(&mut gate);
    msd(&mut gate);

    let start = Instant::now();
    let range = line_torus(Motion::brownian(1.0), CoverMethod::Range);
    let r10 = run(&range, 10, 400, SEED + 5);
    let r100 = run(&range, 100, 400, SEED + 5);
    let r1e4 = run(&range, 10_000, 400, SEED + 5);
    let shared = start.elapsed();
    theorem1_trend(&mut gate, &r100, &r1e4, shared);
    cv_vanishing(&mut gate, &r10, &r1e4, shared);
    target_size(&mut gate);
    dimension(&mut gate, &r100, &r1e4);
    subdiffusion(&mut gate, &r1e4);
    determinism(&mut gate);
    let r100_200 = run(&range, 100, 200, SEED + 5);
    cross_validation(&mut gate, &r100_200);
    formula_consistency(&mut gate);

    println!("{} of 12 criteria passed", 12 - gate.failures);
    if gate.failures > 0 {
        std::process::exit(1);
    }
}
