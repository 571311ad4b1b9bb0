//! Subdiffusion by random time change: `Y(t) = X(S(t))` with `S` the inverse
//! of an α-stable subordinator `T`, itself simulated exactly on a grid of
//! operational times `s_k = kΔs` through
//! `T(s_{k+1}) = T(s_k) + Δs^{1/α} Θ_k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::EmKernel;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::real::Real;

/// Clearance of the uniform angle from `±π/2`.
const ANGLE_CLEARANCE: f64 = 1e-12;
/// Floor of the exponential variate.
const EXP_FLOOR: f64 = 1e-300;

/// Parameters of a time-changed searcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdiffusionSpec<T> {
    /// Subdiffusion exponent, `0 < α < 1`.
    pub alpha: T,
    /// Subdiffusion coefficient (length²/time^α).
    pub diffusivity: T,
    /// Operational-time step `Δs`.
    pub ds: T,
    /// Physical-time grid step `Δt`.
    pub dt: T,
}

impl<T: Real> SubdiffusionSpec<T> {
    /// Parameters with `Δs = Δt = 10⁻²/(4 ln N)` (`N` floored at 2).
    pub fn with_default_steps(alpha: T, diffusivity: T, searchers: u64) -> Self {
        let step = default_step::<T>(searchers);
        Self {
            alpha,
            diffusivity,
            ds: step,
            dt: step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "subdiffusion exponent must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        for (name, v) in [
            ("diffusivity", self.diffusivity),
            ("ds", self.ds),
            ("dt", self.dt),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `Δs^{1/α}`, the scale of one subordinator increment.
    pub fn increment_scale(&self) -> T {
        self.ds.powf(T::one() / self.alpha)
    }
}

/// `10⁻²/(4 ln max(N, 2))`.
pub fn default_step<T: Real>(searchers: u64) -> T {
    T::lit(1e-2) / (T::lit(4.0) * T::from_u64(searchers.max(2)).unwrap().ln())
}

/// One draw of the standardized positive α-stable variable `Θ`, whose
/// Laplace transform is `E e^{-λΘ} = e^{-λ^α}`.
#[inline]
pub fn sample_theta<T: Real, R: Rng + ?Sized>(alpha: T, rng: &mut R) -> T {
    let half_pi = T::FRAC_PI_2();
    let clearance = T::lit(ANGLE_CLEARANCE);
    let v = -half_pi + clearance + (T::PI() - clearance - clearance) * T::open01(rng);
    let e = T::unit_exponential(rng).max(T::lit(EXP_FLOOR).max(T::min_positive_value()));
    let shifted = alpha * (v + half_pi);
    let lead = shifted.sin() / v.cos().powf(T::one() / alpha);
    let tail = ((v - shifted).cos() / e).powf((T::one() - alpha) / alpha);
    lead * tail
}

/// Subordinator values `T(s_k)` on the grid `s_k = kΔs`, starting at
/// `T(0) = 0` and extended on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorPath<T> {
    alpha: T,
    ds: T,
    scale: T,
    values: Vec<T>,
}

impl<T: Real> SubordinatorPath<T> {
    pub fn new(spec: &SubdiffusionSpec<T>) -> Self {
        Self {
            alpha: spec.alpha,
            ds: spec.ds,
            scale: spec.increment_scale(),
            values: vec![T::zero()],
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn ds(&self) -> T {
        self.ds
    }

    /// Operational time covered so far.
    pub fn horizon(&self) -> T {
        T::from_count(self.values.len() - 1) * self.ds
    }

    pub fn extend_steps<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        self.values.reserve(steps);
        let mut last = *self.values.last().unwrap();
        for _ in 0..steps {
            last = last + self.scale * sample_theta(self.alpha, rng);
            self.values.push(last);
        }
    }

    /// Double the grid until `T(s_max) >= t`.
    pub fn cover<R: Rng + ?Sized>(&mut self, t: T, rng: &mut R) {
        while *self.values.last().unwrap() < t {
            let steps = self.values.len();
            self.extend_steps(steps, rng);
        }
    }
}

/// `T(s_k)` for `s_k = kΔs ≤ s_max`.
pub fn subordinator_path<T: Real, R: Rng + ?Sized>(
    spec: &SubdiffusionSpec<T>,
    s_max: T,
    rng: &mut R,
) -> Vec<T> {
    let steps = (s_max / spec.ds).floor().to_usize().unwrap_or(0);
    let mut path = SubordinatorPath::new(spec);
    path.extend_steps(steps, rng);
    path.values
}

/// `S(t_m) = s_k` with `k` the unique index such that
/// `T(s_{k-1}) < t_m <= T(s_k)`.
pub fn inverse_subordinator<T: Real>(path: &[T], ds: T, t_grid: &[T]) -> Result<Vec<T>> {
    t_grid
        .iter()
        .map(|&t| {
            let k = path.partition_point(|&v| v < t);
            if k == path.len() {
                Err(Error::Range(format!(
                    "subordinator path ends at T = {} before t = {t}",
                    path.last().map_or(T::zero(), |v| *v)
                )))
            } else {
                Ok(T::from_count(k) * ds)
            }
        })
        .collect()
}

/// Same as [`inverse_subordinator`], extending the path as needed.
pub fn inverse_subordinator_extending<T: Real, R: Rng + ?Sized>(
    path: &mut SubordinatorPath<T>,
    t_grid: &[T],
    rng: &mut R,
) -> Result<Vec<T>> {
    if let Some(t_max) = t_grid.iter().copied().reduce(T::max) {
        path.cover(t_max, rng);
    }
    inverse_subordinator(&path.values, path.ds, t_grid)
}

/// `Y = X(S)` by linear interpolation between the operational-grid nodes
/// `s_k <= S <= s_{k+1}` of the path `x_path[k] = X(s_k)`.
pub fn subdiffusive_position<T: Real>(x_path: &[Vec<T>], ds: T, s: T) -> Result<Vec<T>> {
    let not_found = || Error::Range(format!("no grid interval brackets S = {s}"));
    if x_path.is_empty() || !(s >= T::zero()) {
        return Err(not_found());
    }
    let last = x_path.len() - 1;
    let k = (s / ds).floor().to_usize().ok_or_else(not_found)?;
    let s_k = T::from_count(k) * ds;
    if k > last || (k == last && s > s_k) {
        return Err(not_found());
    }
    if k == last || s == s_k {
        return Ok(x_path[k].clone());
    }
    let w = (s - s_k) / ds;
    Ok(x_path[k]
        .iter()
        .zip(&x_path[k + 1])
        .map(|(&a, &b)| w * b + (T::one() - w) * a)
        .collect())
}

/// Streaming subordinator state of one searcher: `T(s_k)` and the spatial
/// process `X(s_k)` advance together, so `X(S(t_m))` is read off directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperationalClock<T> {
    pub subordinator: T,
    pub steps: u64,
}

impl<T: Real> Default for OperationalClock<T> {
    fn default() -> Self {
        Self {
            subordinator: T::zero(),
            steps: 0,
        }
    }
}

impl<T: Real> OperationalClock<T> {
    /// Advance `T` and `X` together until `T(s_k) >= t`; `x` then holds
    /// `X(s_k) = Y(t)`.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    pub fn advance_to<R: Rng + ?Sized>(
        &mut self,
        t: T,
        alpha: T,
        increment_scale: T,
        x: &mut [T],
        kernel: &mut EmKernel<T>,
        domain: &Domain<T>,
        rng: &mut R,
    ) -> Result<()> {
        while self.subordinator < t {
            self.subordinator = self.subordinator + increment_scale * sample_theta(alpha, rng);
            kernel.step(x, domain, rng)?;
            self.steps += 1;
        }
        Ok(())
    }
}

/// One time-changed path sampled at increasing physical `times`, started at
/// `x0` with pure diffusion `dX = √(2D) dW(s)` in free space.
pub fn sample_time_changed_path<T: Real, R: Rng + ?Sized>(
    spec: &SubdiffusionSpec<T>,
    x0: &[T],
    times: &[T],
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    spec.validate()?;
    let domain = Domain::free_space(x0.len())?;
    let mut kernel = EmKernel::new(
        &crate::dynamics::DynamicsSpec::brownian(spec.diffusivity, spec.ds),
        x0.len(),
    );
    let mut clock = OperationalClock::default();
    let scale = spec.increment_scale();
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        clock.advance_to(t, spec.alpha, scale, &mut x, &mut kernel, &domain, rng)?;
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    /// Mean and standard error of `e^{-λ Θ}` over `n` draws.
    fn laplace(alpha: f64, lambda: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut r = rng(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v = (-lambda * sample_theta(alpha, &mut r)).exp();
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        (mean, (var / n as f64).sqrt())
    }

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    /// Critical value at the 1% level.
    fn ks_critical(n: usize, m: usize) -> f64 {
        1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
    }

    #[test]
    fn theta_is_positive_and_finite() {
        let mut r = rng(1);
        for alpha in [0.1f64, 0.5, 0.9] {
            for _ in 0..100_000 {
                let th = sample_theta(alpha, &mut r);
                assert!(th > 0.0 && th.is_finite(), "alpha={alpha}: {th}");
            }
        }
    }

    #[test]
    fn theta_laplace_transform_half() {
        let (mean, se) = laplace(0.5, 1.0, 100_000, 2);
        assert!((mean - (-1.0f64).exp()).abs() < 3.0 * se, "{mean} ± {se}");
        assert!((mean - 0.36788).abs() < 0.01);
    }

    #[test]
    fn theta_laplace_transform_alpha_08_lambda_2() {
        let (mean, se) = laplace(0.8, 2.0, 100_000, 3);
        let exact = (-(2.0f64).powf(0.8)).exp();
        assert!((exact - 0.1754).abs() < 1e-4);
        assert!((mean - exact).abs() < 3.0 * se, "{mean} ± {se} vs {exact}");
    }

    #[test]
    fn theta_in_single_precision() {
        let mut r = rng(5);
        let n = 50_000;
        let mean: f64 = (0..n)
            .map(|_| (-sample_theta(0.5f32, &mut r)).exp() as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - (-1.0f64).exp()).abs() < 0.01);
    }

    #[test]
    fn path_starts_at_zero_and_increases() {
        let spec = SubdiffusionSpec {
            alpha: 0.6,
            diffusivity: 1.0,
            ds: 0.01,
            dt: 0.01,
        };
        let path = subordinator_path(&spec, 5.0, &mut rng(4));
        assert_eq!(path[0], 0.0);
        assert_eq!(path.len(), 501);
        assert!(path.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn increments_are_identically_distributed() {
        let spec = SubdiffusionSpec {
            alpha: 0.5,
            diffusivity: 1.0,
            ds: 0.05,
            dt: 0.05,
        };
        let path = subordinator_path(&spec, 1000.0, &mut rng(6));
        let inc: Vec<f64> = path.windows(2).map(|w| w[1] - w[0]).collect();
        let (a, b) = inc.split_at(inc.len() / 2);
        let (mut a, mut b) = (a.to_vec(), b.to_vec());
        let d = ks_statistic(&mut a, &mut b);
        assert!(d < ks_critical(a.len(), b.len()), "KS {d}");
    }

    #[test]
    fn self_similarity_t_of_2s_vs_t_of_s() {
        let alpha = 0.7;
        let spec = SubdiffusionSpec {
            alpha,
            diffusivity: 1.0,
            ds: 0.1,
            dt: 0.1,
        };
        let mut r = rng(8);
        let n = 10_000;
        let mut at_one = Vec::with_capacity(n);
        let mut at_two = Vec::with_capacity(n);
        for _ in 0..n {
            at_one.push(
                *subordinator_path(&spec, 1.0, &mut r).last().unwrap() * 2f64.powf(1.0 / alpha),
            );
            at_two.push(*subordinator_path(&spec, 2.0, &mut r).last().unwrap());
        }
        let d = ks_statistic(&mut at_one, &mut at_two);
        assert!(d < ks_critical(n, n), "KS {d}");
    }

    #[test]
    fn inverse_basic_properties() {
        let spec = SubdiffusionSpec {
            alpha: 0.5,
            diffusivity: 1.0,
            ds: 0.01,
            dt: 0.01,
        };
        let mut r = rng(10);
        let grid: Vec<f64> = (0..200).map(|m| m as f64 * 0.01).collect();
        for _ in 0..50 {
            let mut path = SubordinatorPath::new(&spec);
            let s = inverse_subordinator_extending(&mut path, &grid, &mut r).unwrap();
            assert_eq!(s[0], 0.0);
            assert!(s.windows(2).all(|w| w[0] <= w[1]));
            // bracketing condition
            for (&t, &sv) in grid.iter().zip(&s) {
                let k = (sv / spec.ds).round() as usize;
                assert!(path.values()[k] >= t);
                if k > 0 {
                    assert!(path.values()[k - 1] < t);
                }
            }
        }
    }

    #[test]
    fn inverse_on_short_path_is_range_error() {
        let path = [0.0, 0.1, 0.2];
        assert!(matches!(
            inverse_subordinator(&path, 0.5, &[0.15, 0.3]),
            Err(Error::Range(_))
        ));
        assert_eq!(
            inverse_subordinator(&path, 0.5, &[0.0, 0.1, 0.15]).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn inverse_mean_at_one_for_half() {
        // E S(t) = t^α / Γ(1 + α); Γ(1.5) = √π / 2
        let spec = SubdiffusionSpec {
            alpha: 0.5,
            diffusivity: 1.0,
            ds: 1e-3,
            dt: 1e-3,
        };
        let mut r = rng(12);
        let n = 10_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut path = SubordinatorPath::new(&spec);
            let s = inverse_subordinator_extending(&mut path, &[1.0], &mut r).unwrap()[0];
            s1 += s;
            s2 += s * s;
        }
        let mean = s1 / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = 2.0 / std::f64::consts::PI.sqrt();
        assert!((exact - 1.1284).abs() < 1e-4);
        assert!((mean - exact).abs() < 3.0 * se, "{mean} ± {se} vs {exact}");
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let xs = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        assert_eq!(
            subdiffusive_position(&xs, 0.5, 0.5).unwrap(),
            vec![2.0, 3.0]
        );
        assert_eq!(
            subdiffusive_position(&xs, 0.5, 1.0).unwrap(),
            vec![4.0, -1.0]
        );
        assert_eq!(
            subdiffusive_position(&xs, 0.5, 0.75).unwrap(),
            vec![3.0, 1.0]
        );
        assert!(subdiffusive_position(&xs, 0.5, 1.2).is_err());
        assert!(subdiffusive_position(&xs, 0.5, -0.1).is_err());
    }

    #[test]
    fn near_unit_alpha_is_nearly_linear_msd() {
        let spec = SubdiffusionSpec {
            alpha: 0.999,
            diffusivity: 1.0,
            ds: 0.01,
            dt: 0.01,
        };
        let times = [0.5, 8.0];
        let mut r = rng(14);
        let n = 4000;
        let mut msd = [0.0; 2];
        for _ in 0..n {
            let ys = sample_time_changed_path(&spec, &[0.0], &times, &mut r).unwrap();
            for k in 0..2 {
                msd[k] += ys[k][0] * ys[k][0] / n as f64;
            }
        }
        let slope = (msd[1] / msd[0]).ln() / (times[1] / times[0]).ln();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn default_step_follows_log_rule() {
        let s: f64 = default_step(10_000);
        assert!((s - 1e-2 / (4.0 * 10_000f64.ln())).abs() < 1e-18);
        assert_eq!(default_step::<f64>(1), default_step::<f64>(2));
    }

    #[test]
    fn spec_validation() {
        let good = SubdiffusionSpec {
            alpha: 0.5,
            diffusivity: 1.0,
            ds: 0.1,
            dt: 0.1,
        };
        assert!(good.validate().is_ok());
        for alpha in [0.0, 1.0, 1.5, -0.2] {
            assert!(SubdiffusionSpec {
                alpha,
                ..good.clone()
            }
            .validate()
            .is_err());
        }
        assert!(SubdiffusionSpec {
            ds: 0.0,
            ..good.clone()
        }
        .validate()
        .is_err());
    }
}
