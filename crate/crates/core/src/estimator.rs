//! Monte Carlo orchestration: deterministic per-replica seeding, a parallel
//! replica pool and moment estimates with standard errors.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::run_replica;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::scenario::{PreparedScenario, RunPlan, Scenario};

/// Moments `m = 1..=DEFAULT_MAX_MOMENT` are reported unless asked otherwise.
pub const DEFAULT_MAX_MOMENT: u32 = 3;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function (a bijection of `u64`).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` at `searchers` searchers:
///
/// ```text
/// h0 = mix(master + γ)
/// h1 = mix(h0 ^ searchers + 2γ)
/// seed = mix(h1 ^ index + 3γ)
/// ```
///
/// where `mix` is the SplitMix64 finalizer and `γ = 0x9E3779B97F4A7C15`
/// (wrapping arithmetic). Each stage is a bijection of its last input, so
/// for fixed `(master, searchers)` distinct indices never collide.
pub fn derive_replica_seed(master: u64, searchers: u64, index: u64) -> u64 {
    let h0 = mix64(master.wrapping_add(GOLDEN_GAMMA));
    let h1 = mix64((h0 ^ searchers).wrapping_add(GOLDEN_GAMMA.wrapping_mul(2)));
    mix64((h1 ^ index).wrapping_add(GOLDEN_GAMMA.wrapping_mul(3)))
}

/// Generator of one replica.
pub fn replica_rng(master: u64, searchers: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(derive_replica_seed(master, searchers, index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaResult<T> {
    pub index: u64,
    /// Cover time `σ_N` (the cap when censored).
    pub sigma: T,
    pub censored: bool,
    pub trivially_covered: bool,
    pub steps: u64,
    pub wall_time: Duration,
}

/// Estimate of `E[σ_N^m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate<T> {
    pub order: u32,
    pub estimate: T,
    pub stderr: T,
    pub replicas: usize,
    /// Asymptotic prediction of the same moment, when defined.
    pub prediction: Option<T>,
}

impl<T: Real> MomentEstimate<T> {
    /// Simulated ÷ predicted.
    pub fn ratio(&self) -> Option<T> {
        self.prediction.map(|p| self.estimate / p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport<T> {
    pub searchers: u64,
    pub replicas: usize,
    pub moments: Vec<MomentEstimate<T>>,
    /// Sample coefficient of variation `√(m₂ − m₁²)/m₁`, if `m₁ > 0`.
    pub cv: Option<T>,
    /// Delta-method standard error of `cv`.
    pub cv_stderr: Option<T>,
    pub censored: usize,
    pub trivially_covered: usize,
    /// False when any replica was censored.
    pub valid: bool,
    /// Physical time step used.
    pub dt: T,
    pub samples: Option<Vec<T>>,
}

impl<T: Real> MomentReport<T> {
    /// Moments `1..=max_moment` of `samples` by plain sample means.
    pub fn from_samples(searchers: u64, samples: &[T], max_moment: u32) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 replicas, got {}",
                samples.len()
            )));
        }
        if max_moment < 2 {
            return Err(Error::InvalidArgument(
                "max_moment must be at least 2".into(),
            ));
        }
        if let Some(bad) = samples.iter().find(|s| !(**s >= T::zero())) {
            return Err(Error::InvalidArgument(format!(
                "cover time samples must be >= 0, got {bad}"
            )));
        }
        let r = samples.len();
        let rt = T::from_count(r);
        let m1 = mean(samples);
        let mut moments = Vec::with_capacity(max_moment as usize);
        for order in 1..=max_moment {
            let powered: Vec<T> = samples.iter().map(|s| s.powi(order as i32)).collect();
            let estimate = if order == 2 {
                // identical to mean(σ²), written so that m₂ >= m₁² survives rounding
                m1 * m1
                    + samples
                        .iter()
                        .fold(T::zero(), |a, &s| a + (s - m1) * (s - m1))
                        / rt
            } else {
                mean(&powered)
            };
            let stderr = (sample_variance(&powered) / rt).sqrt();
            moments.push(MomentEstimate {
                order,
                estimate,
                stderr,
                replicas: r,
                prediction: None,
            });
        }
        let m2 = moments[1].estimate;
        let spread = (m2 - m1 * m1).max(T::zero()).sqrt();
        let (cv, cv_stderr) = if m1 > T::zero() {
            (Some(spread / m1), cv_delta_stderr(samples, m1, m2))
        } else {
            (None, None)
        };
        Ok(Self {
            searchers,
            replicas: r,
            moments,
            cv,
            cv_stderr,
            censored: 0,
            trivially_covered: 0,
            valid: true,
            dt: T::zero(),
            samples: None,
        })
    }

    pub fn moment(&self, order: u32) -> Option<&MomentEstimate<T>> {
        self.moments.iter().find(|m| m.order == order)
    }

    /// `E[σ_N]` estimate.
    pub fn mean(&self) -> T {
        self.moments[0].estimate
    }

    pub fn mean_stderr(&self) -> T {
        self.moments[0].stderr
    }
}

fn mean<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, &x| a + x) / T::from_count(xs.len())
}

fn sample_variance<T: Real>(xs: &[T]) -> T {
    let m = mean(xs);
    xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m)) / T::from_count(xs.len() - 1)
}

/// Delta method for `g(a, b) = √(b − a²)/a` at the sample moments, with the
/// sample covariance of `(σ, σ²)`.
fn cv_delta_stderr<T: Real>(samples: &[T], m1: T, m2: T) -> Option<T> {
    let s = (m2 - m1 * m1).sqrt();
    if !(s > T::zero()) {
        return None;
    }
    let n = T::from_count(samples.len());
    let sq: Vec<T> = samples.iter().map(|x| *x * *x).collect();
    let sq_mean = mean(&sq);
    let denom = T::from_count(samples.len() - 1);
    let mut c11 = T::zero();
    let mut c12 = T::zero();
    let mut c22 = T::zero();
    for (&x, &x2) in samples.iter().zip(&sq) {
        let (u, v) = (x - m1, x2 - sq_mean);
        c11 = c11 + u * u;
        c12 = c12 + u * v;
        c22 = c22 + v * v;
    }
    let (c11, c12, c22) = (c11 / denom, c12 / denom, c22 / denom);
    let ga = -T::one() / s - s / (m1 * m1);
    let gb = T::one() / (T::lit(2.0) * s * m1);
    let var = (ga * ga * c11 + T::lit(2.0) * ga * gb * c12 + gb * gb * c22) / n;
    Some(var.max(T::zero()).sqrt())
}

/// Bootstrap standard error of the `order`-th sample moment from
/// `resamples` resamples drawn with a generator seeded by `seed`.
pub fn bootstrap_moment_stderr<T: Real>(
    samples: &[T],
    order: u32,
    resamples: usize,
    seed: u64,
) -> Result<T> {
    if samples.len() < 2 || resamples < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs >= 2 samples and >= 2 resamples".into(),
        ));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let powered: Vec<T> = samples.iter().map(|s| s.powi(order as i32)).collect();
    let estimates: Vec<T> = (0..resamples)
        .map(|_| {
            let total = (0..powered.len()).fold(T::zero(), |a, _| {
                a + powered[rng.random_range(0..powered.len())]
            });
            total / T::from_count(powered.len())
        })
        .collect();
    Ok(sample_variance(&estimates).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub max_moment: u32,
    pub keep_samples: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            threads: None,
            max_moment: DEFAULT_MAX_MOMENT,
            keep_samples: false,
        }
    }
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Run `replicas` independent replicas of `plan`; results are in index
/// order whatever the scheduling.
pub fn run_replicas<T: Real>(
    plan: &RunPlan<'_, T>,
    replicas: usize,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<ReplicaResult<T>>> {
    let one = |index: u64| -> Result<ReplicaResult<T>> {
        let started = Instant::now();
        let mut rng = replica_rng(master_seed, plan.searchers, index);
        let out = run_replica(plan, &mut rng).map_err(|e| match e {
            Error::Numeric(m) => {
                Error::Numeric(format!("{m} (N = {}, replica {index})", plan.searchers))
            }
            other => other,
        })?;
        Ok(ReplicaResult {
            index,
            sigma: out.time,
            censored: out.censored,
            trivially_covered: out.trivially_covered,
            steps: out.steps,
            wall_time: started.elapsed(),
        })
    };
    let results: Vec<Result<ReplicaResult<T>>> =
        pool(threads)?.install(|| (0..replicas as u64).into_par_iter().map(one).collect());
    results.into_iter().collect()
}

/// Report for one `N` from already computed replicas.
pub fn summarize<T: Real>(
    prepared: &PreparedScenario<T>,
    plan: &RunPlan<'_, T>,
    results: &[ReplicaResult<T>],
    options: &ExperimentOptions,
) -> Result<MomentReport<T>> {
    let samples: Vec<T> = results.iter().map(|r| r.sigma).collect();
    let mut report = MomentReport::from_samples(plan.searchers, &samples, options.max_moment)?;
    for m in report.moments.iter_mut() {
        m.prediction = prepared.prediction(plan.searchers, m.order);
    }
    report.censored = results.iter().filter(|r| r.censored).count();
    report.trivially_covered = results.iter().filter(|r| r.trivially_covered).count();
    report.valid = report.censored == 0;
    report.dt = plan.dt();
    if options.keep_samples {
        report.samples = Some(samples);
    }
    Ok(report)
}

/// One [`MomentReport`] per entry of `searchers`.
pub fn run_experiment<T: Real>(
    scenario: &Scenario<T>,
    searchers: &[u64],
    replicas: usize,
    master_seed: u64,
    options: &ExperimentOptions,
) -> Result<Vec<MomentReport<T>>> {
    let prepared = scenario.prepare()?;
    run_prepared(&prepared, searchers, replicas, master_seed, options)
}

/// [`run_experiment`] on a scenario prepared beforehand.
pub fn run_prepared<T: Real>(
    prepared: &PreparedScenario<T>,
    searchers: &[u64],
    replicas: usize,
    master_seed: u64,
    options: &ExperimentOptions,
) -> Result<Vec<MomentReport<T>>> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    searchers
        .iter()
        .map(|&n| {
            let plan = prepared.plan(n)?;
            let results = run_replicas(&plan, replicas, master_seed, options.threads)?;
            summarize(prepared, &plan, &results, options)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Motion;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn seed_is_a_pure_function() {
        assert_eq!(
            derive_replica_seed(7, 100, 3),
            derive_replica_seed(7, 100, 3)
        );
        assert_ne!(
            derive_replica_seed(7, 100, 3),
            derive_replica_seed(7, 100, 4)
        );
        assert_ne!(
            derive_replica_seed(7, 100, 3),
            derive_replica_seed(7, 101, 3)
        );
    }

    #[test]
    fn no_collisions_over_a_million_tuples() {
        let mut seen = HashSet::with_capacity(1 << 21);
        for n in [1u64, 10, 100, 1000] {
            for i in 0..250_000u64 {
                assert!(
                    seen.insert(derive_replica_seed(42, n, i)),
                    "collision at N={n}, i={i}"
                );
            }
        }
        assert_eq!(seen.len(), 1_000_000);
    }

    #[test]
    fn master_seed_avalanche() {
        let mut flips = 0u64;
        let mut total = 0u64;
        for master in 0..2000u64 {
            for bit in [0, 17, 63] {
                let a = derive_replica_seed(master, 10, 5);
                let b = derive_replica_seed(master ^ (1 << bit), 10, 5);
                assert_ne!(a, b);
                flips += (a ^ b).count_ones() as u64;
                total += 64;
            }
        }
        let frac = flips as f64 / total as f64;
        assert!(frac > 0.3, "{frac}");
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn trivially_covered_scenario_has_zero_moments() {
        let sc = Scenario::torus_full_cover(2, 0.5f64, 0.6, Motion::brownian(1.0)).unwrap();
        let reports = run_experiment(&sc, &[1, 5], 8, 1, &ExperimentOptions::default()).unwrap();
        for r in reports {
            assert!(r.valid);
            assert_eq!(r.trivially_covered, 8);
            for m in &r.moments {
                assert_eq!(m.estimate, 0.0);
                assert_eq!(m.stderr, 0.0);
            }
            assert_eq!(r.cv, None);
        }
    }

    #[test]
    fn report_is_independent_of_thread_count() {
        let sc = Scenario::torus_full_cover(
            2,
            std::f64::consts::FRAC_1_SQRT_2,
            0.3,
            Motion::brownian(1.0),
        )
        .unwrap();
        let opts = |t| ExperimentOptions {
            threads: Some(t),
            keep_samples: true,
            ..Default::default()
        };
        let a = run_experiment(&sc, &[3, 30], 12, 99, &opts(1)).unwrap();
        let b = run_experiment(&sc, &[3, 30], 12, 99, &opts(4)).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&sc, &[3, 30], 12, 100, &opts(1)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn censoring_invalidates_report() {
        use crate::scenario::{StepOverrides, TimeCap};
        let sc = Scenario::torus_full_cover(1, 1.3f64, 0.3, Motion::brownian(1.0))
            .unwrap()
            .with_steps(StepOverrides {
                dt: Some(1e-3),
                ..Default::default()
            })
            .with_time_cap(TimeCap::Absolute(0.002));
        let r = &run_experiment(&sc, &[2], 5, 0, &ExperimentOptions::default()).unwrap()[0];
        assert!(!r.valid);
        assert_eq!(r.censored, 5);
    }

    #[test]
    fn known_sample_moments() {
        let r = MomentReport::from_samples(4, &[1.0f64, 2.0, 3.0, 4.0], 3).unwrap();
        assert_eq!(r.mean(), 2.5);
        assert!((r.moment(2).unwrap().estimate - 7.5).abs() < 1e-15);
        assert_eq!(r.moment(3).unwrap().estimate, 25.0);
        // sd of {1,2,3,4} is √(5/3)
        assert!((r.mean_stderr() - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert!((r.cv.unwrap() - 1.25f64.sqrt() / 2.5).abs() < 1e-15);
        assert!(MomentReport::from_samples(4, &[1.0f64], 3).is_err());
        assert!(MomentReport::from_samples(4, &[1.0f64, -1.0], 3).is_err());
    }

    #[test]
    fn cv_delta_method_matches_bootstrap_scale() {
        use rand_distr::{Distribution, Exp1};
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
        let xs: Vec<f64> = (0..4000).map(|_| Exp1.sample(&mut rng)).collect();
        let r = MomentReport::from_samples(1, &xs, 3).unwrap();
        // exponential: CV = 1
        assert!((r.cv.unwrap() - 1.0).abs() < 4.0 * r.cv_stderr.unwrap());
        let boot = bootstrap_moment_stderr(&xs, 1, 400, 3).unwrap();
        assert!((boot / r.mean_stderr() - 1.0).abs() < 0.2);
    }

    proptest! {
        #[test]
        fn jensen_holds_in_sample(xs in prop::collection::vec(0.0f64..1e3, 2..60)) {
            let r = MomentReport::from_samples(1, &xs, 3).unwrap();
            let m1 = r.mean();
            prop_assert!(r.moment(2).unwrap().estimate >= m1 * m1);
        }

        #[test]
        fn jensen_holds_for_constant_samples(c in 0.0f64..1e6, n in 2usize..50) {
            let xs = vec![c; n];
            let r = MomentReport::from_samples(1, &xs, 3).unwrap();
            prop_assert!(r.moment(2).unwrap().estimate >= r.mean() * r.mean());
        }
    }
}
