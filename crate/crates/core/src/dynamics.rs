//! Euler–Maruyama stepping of `dX = μ(X) dt + √(2D) σ(X) dW`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclidean, DiffusivityField, Domain, StartSet};
use crate::real::Real;

/// Deterministic drift `μ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DriftField<T> {
    Zero,
    Constant(Vec<T>),
    /// Constant-magnitude pull towards `center` outside `radius`, zero inside.
    InwardBeyond {
        center: Vec<T>,
        radius: T,
        strength: T,
    },
}

impl<T: Real> DriftField<T> {
    pub fn is_zero(&self) -> bool {
        match self {
            DriftField::Zero => true,
            DriftField::Constant(v) => v.iter().all(|c| *c == T::zero()),
            DriftField::InwardBeyond { strength, .. } => *strength == T::zero(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[T], out: &mut [T]) {
        match self {
            DriftField::Zero => out.iter_mut().for_each(|o| *o = T::zero()),
            DriftField::Constant(v) => out.copy_from_slice(v),
            DriftField::InwardBeyond {
                center,
                radius,
                strength,
            } => {
                let r = euclidean(x, center);
                if r <= *radius || r == T::zero() {
                    out.iter_mut().for_each(|o| *o = T::zero());
                } else {
                    for ((o, &xi), &ci) in out.iter_mut().zip(x).zip(center) {
                        *o = -*strength * (xi - ci) / r;
                    }
                }
            }
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let len = match self {
            DriftField::Zero => return Ok(()),
            DriftField::Constant(v) => v.len(),
            DriftField::InwardBeyond { center, .. } => center.len(),
        };
        if len != dim {
            return Err(Error::InvalidArgument(format!(
                "drift has dimension {len}, domain has {dim}"
            )));
        }
        Ok(())
    }
}

/// Dimensionless dispersion matrix `σ(x)`; every variant is diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DispersionField<T> {
    Identity,
    Scalar(T),
    Diagonal(Vec<T>),
    /// `σ(x) = s(x) I` with `s` moving from `base` far away to `peak` at
    /// `center` as a Gaussian of width `width`.
    Bump {
        center: Vec<T>,
        width: T,
        base: T,
        peak: T,
    },
}

impl<T: Real> DispersionField<T> {
    pub fn is_identity(&self) -> bool {
        match self {
            DispersionField::Identity => true,
            DispersionField::Scalar(s) => *s == T::one(),
            DispersionField::Diagonal(v) => v.iter().all(|c| *c == T::one()),
            DispersionField::Bump { base, peak, .. } => *base == T::one() && *peak == T::one(),
        }
    }

    /// Diagonal entry `σ_kk(x)`.
    #[inline]
    pub fn diagonal(&self, x: &[T], k: usize) -> T {
        match self {
            DispersionField::Identity => T::one(),
            DispersionField::Scalar(s) => *s,
            DispersionField::Diagonal(v) => v[k],
            DispersionField::Bump {
                center,
                width,
                base,
                peak,
            } => {
                let r2 = x
                    .iter()
                    .zip(center)
                    .fold(T::zero(), |a, (&xi, &ci)| a + (xi - ci) * (xi - ci));
                *base + (*peak - *base) * (-r2 / (T::lit(2.0) * *width * *width)).exp()
            }
        }
    }

    /// Smallest and largest eigenvalue of `a(x) = σ(x)σ(x)ᵀ`.
    pub fn eigenvalue_range(&self, x: &[T]) -> (T, T) {
        (0..x.len()).fold((T::infinity(), T::neg_infinity()), |(lo, hi), k| {
            let s = self.diagonal(x, k);
            (lo.min(s * s), hi.max(s * s))
        })
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let len = match self {
            DispersionField::Identity | DispersionField::Scalar(_) => return Ok(()),
            DispersionField::Diagonal(v) => v.len(),
            DispersionField::Bump { center, .. } => center.len(),
        };
        if len != dim {
            return Err(Error::InvalidArgument(format!(
                "dispersion has dimension {len}, domain has {dim}"
            )));
        }
        Ok(())
    }
}

/// `a(x) = σ(x)σ(x)ᵀ` for a dispersion field of fixed dimension.
#[derive(Debug, Clone)]
pub struct DispersionDiffusivity<T> {
    pub dim: usize,
    pub dispersion: DispersionField<T>,
}

impl<T: Real> DiffusivityField<T> for DispersionDiffusivity<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn diffusivity(&self, x: &[T], out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (i, j) = (k / self.dim, k % self.dim);
            *o = if i == j {
                let s = self.dispersion.diagonal(x, i);
                s * s
            } else {
                T::zero()
            };
        }
    }
}

/// Parameters of the diffusive searcher SDE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSpec<T> {
    /// Characteristic diffusivity `D` (length²/time).
    pub diffusivity: T,
    pub drift: DriftField<T>,
    pub dispersion: DispersionField<T>,
    /// Time step `Δt`.
    pub dt: T,
}

impl<T: Real> DynamicsSpec<T> {
    pub fn brownian(diffusivity: T, dt: T) -> Self {
        Self {
            diffusivity,
            drift: DriftField::Zero,
            dispersion: DispersionField::Identity,
            dt,
        }
    }

    pub fn is_pure_diffusion(&self) -> bool {
        self.drift.is_zero() && self.dispersion.is_identity()
    }

    /// Check positivity of `D` and `Δt`, field dimensions, and that the
    /// eigenvalues of `σσᵀ` stay in `[eig_lo, eig_hi]` at `probe` points.
    pub fn validate(&self, dim: usize, probe: &[Vec<T>], eig_lo: T, eig_hi: T) -> Result<()> {
        if !(self.diffusivity > T::zero()) || !self.diffusivity.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "diffusivity must be > 0, got {}",
                self.diffusivity
            )));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time step must be > 0, got {}",
                self.dt
            )));
        }
        self.drift.check_dim(dim)?;
        self.dispersion.check_dim(dim)?;
        for x in probe {
            let (lo, hi) = self.dispersion.eigenvalue_range(x);
            if lo < eig_lo || hi > eig_hi {
                return Err(Error::InvalidArgument(format!(
                    "eigenvalues of σσᵀ in [{lo}, {hi}] at {:?} leave the bounds [{eig_lo}, {eig_hi}]",
                    x.iter().map(|c| c.to_f64_lossy()).collect::<Vec<_>>()
                )));
            }
        }
        Ok(())
    }
}

/// Precomputed Euler–Maruyama update for one [`DynamicsSpec`].
#[derive(Debug, Clone)]
pub struct EmKernel<T> {
    spec: DynamicsSpec<T>,
    noise_scale: T,
    pure: bool,
    drift_buf: Vec<T>,
}

impl<T: Real> EmKernel<T> {
    pub fn new(spec: &DynamicsSpec<T>, dim: usize) -> Self {
        Self {
            noise_scale: (T::lit(2.0) * spec.diffusivity * spec.dt).sqrt(),
            pure: spec.is_pure_diffusion(),
            spec: spec.clone(),
            drift_buf: vec![T::zero(); dim],
        }
    }

    pub fn dt(&self) -> T {
        self.spec.dt
    }

    /// `√(2DΔt)`, the per-axis standard deviation of a pure-diffusion step.
    pub fn noise_scale(&self) -> T {
        self.noise_scale
    }

    /// Advance `x` by one step in place; wraps on a torus.
    #[inline]
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        x: &mut [T],
        domain: &Domain<T>,
        rng: &mut R,
    ) -> Result<()> {
        if self.pure {
            for c in x.iter_mut() {
                *c = *c + self.noise_scale * T::standard_normal(rng);
            }
        } else {
            self.spec.drift.eval(x, &mut self.drift_buf);
            for k in 0..x.len() {
                let s = self.spec.dispersion.diagonal(x, k);
                // σ is evaluated at the pre-step position for every axis
                self.drift_buf[k] = self.drift_buf[k] * self.spec.dt
                    + self.noise_scale * s * T::standard_normal(rng);
            }
            for (c, &inc) in x.iter_mut().zip(&self.drift_buf) {
                *c = *c + inc;
            }
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite searcher position".into()));
        }
        domain.wrap(x);
        Ok(())
    }
}

/// Incremental trajectory of one searcher.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStepper<T> {
    pub position: Vec<T>,
    pub steps: u64,
    dt: T,
}

impl<T: Real> PathStepper<T> {
    pub fn new(position: Vec<T>, dt: T) -> Self {
        Self {
            position,
            steps: 0,
            dt,
        }
    }

    pub fn time(&self) -> T {
        T::from_u64(self.steps).unwrap() * self.dt
    }
}

/// One Euler–Maruyama step of `stepper` under `spec`.
pub fn em_step<T: Real, R: Rng + ?Sized>(
    stepper: &mut PathStepper<T>,
    spec: &DynamicsSpec<T>,
    domain: &Domain<T>,
    rng: &mut R,
) -> Result<()> {
    let mut kernel = EmKernel::new(spec, domain.dim());
    kernel
        .step(&mut stepper.position, domain, rng)
        .map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("{m} at step {}", stepper.steps + 1)),
            other => other,
        })?;
    stepper.steps += 1;
    stepper.dt = spec.dt;
    Ok(())
}

/// Initial searcher position drawn uniformly from the start set.
pub fn sample_initial<T: Real, R: Rng + ?Sized>(
    start: &StartSet<T>,
    domain: &Domain<T>,
    rng: &mut R,
) -> Vec<T> {
    match start {
        StartSet::Point(p) => p.clone(),
        StartSet::BallUnion { centers, radius } => {
            if *radius == T::zero() {
                let i = if centers.len() == 1 {
                    0
                } else {
                    rng.random_range(0..centers.len())
                };
                return centers[i].clone();
            }
            let dim = centers[0].len();
            let mut lo = vec![T::infinity(); dim];
            let mut hi = vec![T::neg_infinity(); dim];
            for c in centers {
                for k in 0..dim {
                    lo[k] = lo[k].min(c[k] - *radius);
                    hi[k] = hi[k].max(c[k] + *radius);
                }
            }
            let mut x = vec![T::zero(); dim];
            loop {
                for k in 0..dim {
                    x[k] = lo[k] + (hi[k] - lo[k]) * T::open01(rng);
                }
                if centers.iter().any(|c| euclidean(&x, c) <= *radius) {
                    domain.wrap(&mut x);
                    return x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    #[test]
    fn increments_have_variance_two_d_dt() {
        let domain = Domain::free_space(1).unwrap();
        let spec = DynamicsSpec::brownian(0.7, 1e-3);
        let mut r = rng(1);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let mut s = PathStepper::new(vec![0.0], spec.dt);
            em_step(&mut s, &spec, &domain, &mut r).unwrap();
            sum += s.position[0];
            sum2 += s.position[0] * s.position[0];
        }
        let var_true = 2.0 * 0.7 * 1e-3;
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (var_true / n as f64).sqrt());
        // s.e. of a sample variance is var·√(2/n)
        assert!((var - var_true).abs() < 4.0 * var_true * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn zero_noise_advances_by_drift_exactly() {
        let domain = Domain::free_space(2).unwrap();
        let spec = DynamicsSpec {
            diffusivity: 1.0,
            drift: DriftField::Constant(vec![0.5, -2.0]),
            dispersion: DispersionField::Scalar(0.0),
            dt: 0.25,
        };
        let mut s = PathStepper::new(vec![1.0, 1.0], spec.dt);
        em_step(&mut s, &spec, &domain, &mut rng(2)).unwrap();
        assert_eq!(s.position, vec![1.125, 0.5]);
        assert_eq!(s.time(), 0.25);
    }

    #[test]
    fn inward_drift_points_to_center_outside_radius() {
        let f = DriftField::InwardBeyond {
            center: vec![0.0, 0.0],
            radius: 1.0,
            strength: 2.0,
        };
        let mut out = [0.0; 2];
        f.eval(&[0.5, 0.0], &mut out);
        assert_eq!(out, [0.0, 0.0]);
        f.eval(&[0.0, 3.0], &mut out);
        assert_eq!(out, [0.0, -2.0]);
    }

    #[test]
    fn overflowing_drift_is_a_numeric_error() {
        let domain = Domain::free_space(1).unwrap();
        let spec = DynamicsSpec {
            diffusivity: 1.0,
            drift: DriftField::Constant(vec![f64::MAX]),
            dispersion: DispersionField::Scalar(0.0),
            dt: 10.0,
        };
        let mut s = PathStepper::new(vec![0.0], spec.dt);
        let err = em_step(&mut s, &spec, &domain, &mut rng(0)).unwrap_err();
        assert!(
            matches!(err, Error::Numeric(ref m) if m.contains("step 1")),
            "{err}"
        );
    }

    #[test]
    fn torus_positions_stay_in_box() {
        let domain = Domain::torus(2, 0.5).unwrap();
        let spec = DynamicsSpec::brownian(5.0, 0.01);
        let mut s = PathStepper::new(domain.center(), spec.dt);
        let mut r = rng(4);
        for _ in 0..10_000 {
            em_step(&mut s, &spec, &domain, &mut r).unwrap();
            assert!(domain.contains(&s.position), "{:?}", s.position);
        }
    }

    #[test]
    fn mean_squared_displacement_in_two_dimensions() {
        // E|X(t) - X(0)|² = 2dDt with d = 2, D = 1, t = 1
        let domain = Domain::free_space(2).unwrap();
        let spec = DynamicsSpec::brownian(1.0, 1e-4);
        let mut kernel = EmKernel::new(&spec, 2);
        let mut r = rng(9);
        let paths = 10_000;
        let mut msd = 0.0;
        for _ in 0..paths {
            let mut x = [0.0, 0.0];
            for _ in 0..10_000 {
                kernel.step(&mut x, &domain, &mut r).unwrap();
            }
            msd += x[0] * x[0] + x[1] * x[1];
        }
        msd /= paths as f64;
        assert!((msd / 4.0 - 1.0).abs() < 0.05, "{msd}");
    }

    #[test]
    fn sample_initial_cases() {
        let domain = Domain::torus(2, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        let mut r = rng(7);
        assert_eq!(
            sample_initial(&StartSet::Point(vec![0.5, 0.5]), &domain, &mut r),
            vec![0.5, 0.5]
        );
        let degenerate = StartSet::BallUnion {
            centers: vec![vec![0.2, 0.3]],
            radius: 0.0,
        };
        assert_eq!(sample_initial(&degenerate, &domain, &mut r), vec![0.2, 0.3]);

        let ball = StartSet::BallUnion {
            centers: vec![vec![0.5, 0.5]],
            radius: 0.1,
        };
        let metric = domain.ball_metric();
        for _ in 0..10_000 {
            let x = sample_initial(&ball, &domain, &mut r);
            assert!(crate::geometry::distance(&metric, &x, &[0.5, 0.5]).unwrap() <= 0.1);
        }
    }

    #[test]
    fn validate_rejects_bad_specs() {
        let probe = vec![vec![0.0, 0.0]];
        assert!(DynamicsSpec::brownian(0.0, 0.1)
            .validate(2, &probe, 0.1, 10.0)
            .is_err());
        assert!(DynamicsSpec::brownian(1.0, -0.1)
            .validate(2, &probe, 0.1, 10.0)
            .is_err());
        let mut s = DynamicsSpec::brownian(1.0, 0.1);
        s.dispersion = DispersionField::Bump {
            center: vec![0.0, 0.0],
            width: 0.1,
            base: 1.0,
            peak: 5.0,
        };
        assert!(s.validate(2, &probe, 0.1, 10.0).is_err());
        assert!(s.validate(2, &probe, 0.1, 30.0).is_ok());
    }
}
