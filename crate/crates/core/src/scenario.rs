//! Full experiment description and its resolved, shareable precomputation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{subdiffusive_formula, theorem1_moment};
use crate::coverage::CoverageGrid;
use crate::dynamics::{DispersionDiffusivity, DispersionField, DriftField, DynamicsSpec};
use crate::error::{Error, Result};
use crate::geometry::{
    geodesic_length, Domain, GeodesicLength, Metric, RiemannianLattice, StartSet, Target,
};
use crate::real::Real;
use crate::subordination::{default_step, SubdiffusionSpec};

/// Default time step of the one-dimensional range method.
pub const RANGE_DEFAULT_DT: f64 = 1e-6;
/// Default censoring cap in units of the predicted mean cover time.
pub const DEFAULT_T_MAX_FACTOR: f64 = 50.0;

/// How searchers move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Motion<T> {
    /// `dX = b(X) dt + √(2D) σ(X) dW`.
    Diffusive {
        diffusivity: T,
        drift: DriftField<T>,
        dispersion: DispersionField<T>,
    },
    /// Brownian motion with coefficient `D_sub` run on the clock of an
    /// inverse α-stable subordinator.
    Subdiffusive { alpha: T, diffusivity: T },
}

impl<T: Real> Motion<T> {
    pub fn brownian(diffusivity: T) -> Self {
        Motion::Diffusive {
            diffusivity,
            drift: DriftField::Zero,
            dispersion: DispersionField::Identity,
        }
    }

    pub fn subdiffusive(alpha: T, diffusivity: T) -> Self {
        Motion::Subdiffusive { alpha, diffusivity }
    }

    /// `D` or `D_sub`.
    pub fn diffusivity(&self) -> T {
        match self {
            Motion::Diffusive { diffusivity, .. } | Motion::Subdiffusive { diffusivity, .. } => {
                *diffusivity
            }
        }
    }

    /// Brownian (possibly time-changed) with identity dispersion and no drift.
    pub fn is_pure(&self) -> bool {
        match self {
            Motion::Diffusive {
                drift, dispersion, ..
            } => drift.is_zero() && dispersion.is_identity(),
            Motion::Subdiffusive { .. } => true,
        }
    }
}

/// Cover detection algorithm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverMethod {
    /// Range method when its preconditions hold, lattice otherwise.
    #[default]
    Auto,
    Lattice,
    Range,
}

/// Explicit step sizes; `None` selects the default rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOverrides<T> {
    /// Physical time step `Δt`.
    pub dt: Option<T>,
    /// Operational time step `Δs` of subdiffusive runs.
    pub ds: Option<T>,
    /// Maximal lattice spacing `Δx`.
    pub dx: Option<T>,
}

/// Censoring cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimeCap<T> {
    /// Multiple of the predicted mean cover time (with `N` floored at 2).
    Factor(T),
    Absolute(T),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario<T> {
    pub domain: Domain<T>,
    pub target: Target<T>,
    pub start: StartSet<T>,
    pub motion: Motion<T>,
    /// Detection radius `r`.
    pub detection_radius: T,
    pub method: CoverMethod,
    pub steps: StepOverrides<T>,
    pub time_cap: TimeCap<T>,
}

impl<T: Real> Scenario<T> {
    pub fn new(
        domain: Domain<T>,
        target: Target<T>,
        start: StartSet<T>,
        motion: Motion<T>,
        detection_radius: T,
    ) -> Self {
        Self {
            domain,
            target,
            start,
            motion,
            detection_radius,
            method: CoverMethod::Auto,
            steps: StepOverrides::default(),
            time_cap: TimeCap::Factor(T::lit(DEFAULT_T_MAX_FACTOR)),
        }
    }

    /// Searchers starting at the center of a torus with diameter `l`,
    /// covering the whole torus.
    pub fn torus_full_cover(
        dim: usize,
        diameter: T,
        detection_radius: T,
        motion: Motion<T>,
    ) -> Result<Self> {
        let domain = Domain::torus(dim, diameter)?;
        let start = StartSet::Point(domain.center());
        Ok(Self::new(
            domain,
            Target::FullDomain,
            start,
            motion,
            detection_radius,
        ))
    }

    pub fn with_method(mut self, method: CoverMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_steps(mut self, steps: StepOverrides<T>) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_time_cap(mut self, cap: TimeCap<T>) -> Self {
        self.time_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.detection_radius;
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "detection radius must be > 0, got {r}"
            )));
        }
        self.target.validate(&self.domain)?;
        self.start.validate(&self.domain)?;
        let dim = self.domain.dim();
        match &self.motion {
            Motion::Diffusive {
                diffusivity,
                drift,
                dispersion,
            } => {
                let spec = DynamicsSpec {
                    diffusivity: *diffusivity,
                    drift: drift.clone(),
                    dispersion: dispersion.clone(),
                    dt: T::one(),
                };
                let probe = vec![self.domain.center()];
                spec.validate(dim, &probe, T::min_positive_value(), T::max_value())?;
            }
            Motion::Subdiffusive { alpha, diffusivity } => {
                SubdiffusionSpec {
                    alpha: *alpha,
                    diffusivity: *diffusivity,
                    ds: T::one(),
                    dt: T::one(),
                }
                .validate()?;
            }
        }
        for (name, v) in [
            ("dt", self.steps.dt),
            ("ds", self.steps.ds),
            ("dx", self.steps.dx),
        ] {
            if let Some(v) = v {
                if !(v > T::zero()) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "{name} must be > 0, got {v}"
                    )));
                }
            }
        }
        match self.time_cap {
            TimeCap::Factor(v) | TimeCap::Absolute(v) if !(v > T::zero()) => Err(
                Error::InvalidArgument(format!("time cap must be > 0, got {v}")),
            ),
            _ => Ok(()),
        }
    }

    /// Whether the one-dimensional range reduction applies.
    pub fn range_method_applies(&self) -> bool {
        self.domain.dim() == 1
            && self.domain.is_periodic()
            && matches!(self.start, StartSet::Point(_))
            && matches!(self.target, Target::FullDomain)
            && self.motion.is_pure()
    }

    /// Metric in which the geodesic length is measured: the flat metric of
    /// the domain, or the Riemannian metric `a⁻¹` of a nonconstant
    /// dispersion in free space.
    pub fn length_metric(&self) -> Result<Metric<T>> {
        let Motion::Diffusive { dispersion, .. } = &self.motion else {
            return Ok(self.domain.ball_metric());
        };
        if dispersion.is_identity() {
            return Ok(self.domain.ball_metric());
        }
        if self.domain.is_periodic() {
            return Err(Error::NotSupported(
                "position-dependent dispersion is only supported in free space".into(),
            ));
        }
        let field = DispersionDiffusivity {
            dim: self.domain.dim(),
            dispersion: dispersion.clone(),
        };
        let lattice =
            RiemannianLattice::new(Arc::new(field), self.detection_radius / T::lit(10.0))?;
        Ok(Metric::RiemannianLattice(lattice))
    }

    pub fn geodesic_length(&self) -> Result<GeodesicLength<T>> {
        geodesic_length(
            &self.length_metric()?,
            &self.domain,
            &self.start,
            &self.target,
            self.detection_radius,
        )
    }

    /// Resolve the method, compute `L` and build the coverage lattice.
    pub fn prepare(&self) -> Result<PreparedScenario<T>> {
        self.validate()?;
        let method = match self.method {
            CoverMethod::Auto if self.range_method_applies() => CoverMethod::Range,
            CoverMethod::Auto => CoverMethod::Lattice,
            CoverMethod::Range if !self.range_method_applies() => {
                return Err(Error::NotSupported(
                    "the range method needs a 1-d torus, a point start, a full-domain target and \
                     driftless identity-dispersion motion; use the lattice method"
                        .into(),
                ))
            }
            m => m,
        };
        let geodesic = self.geodesic_length()?;
        let grid = match method {
            CoverMethod::Lattice => {
                let dx = self
                    .steps
                    .dx
                    .unwrap_or(self.detection_radius / T::lit(10.0));
                Some(Arc::new(CoverageGrid::new(
                    &self.domain,
                    &self.target,
                    self.detection_radius,
                    dx,
                )?))
            }
            _ => None,
        };
        Ok(PreparedScenario {
            scenario: self.clone(),
            method,
            geodesic,
            grid,
        })
    }
}

/// A validated scenario with its `N`-independent precomputations, shared
/// read-only across replicas.
#[derive(Debug, Clone)]
pub struct PreparedScenario<T> {
    scenario: Scenario<T>,
    method: CoverMethod,
    geodesic: GeodesicLength<T>,
    grid: Option<Arc<CoverageGrid<T>>>,
}

impl<T: Real> PreparedScenario<T> {
    pub fn scenario(&self) -> &Scenario<T> {
        &self.scenario
    }

    /// Either [`CoverMethod::Lattice`] or [`CoverMethod::Range`].
    pub fn method(&self) -> CoverMethod {
        self.method
    }

    pub fn geodesic(&self) -> GeodesicLength<T> {
        self.geodesic
    }

    pub fn grid(&self) -> Option<&CoverageGrid<T>> {
        self.grid.as_deref()
    }

    /// `2(l - r)`, the range at which a 1-d torus is covered.
    pub fn range_threshold(&self) -> Option<T> {
        let l = self.scenario.domain.diameter()?;
        Some(T::lit(2.0) * (l - self.scenario.detection_radius))
    }

    /// Asymptotic `m`-th moment for `searchers`, `None` below `N = 2` or
    /// when `L = 0`.
    pub fn prediction(&self, searchers: u64, m: u32) -> Option<T> {
        if searchers < 2 || self.geodesic.trivially_covered {
            return None;
        }
        self.formula(T::from_u64(searchers).unwrap(), m).ok()
    }

    fn formula(&self, n: T, m: u32) -> Result<T> {
        let l = self.geodesic.value;
        match &self.scenario.motion {
            Motion::Diffusive { diffusivity, .. } => theorem1_moment(l, *diffusivity, n, m),
            Motion::Subdiffusive { alpha, diffusivity } => {
                subdiffusive_formula(l, *diffusivity, *alpha, n, m)
            }
        }
    }

    /// Step sizes, motion and censoring cap for `searchers` searchers.
    pub fn plan(&self, searchers: u64) -> Result<RunPlan<'_, T>> {
        if searchers == 0 {
            return Err(Error::InvalidArgument("need at least one searcher".into()));
        }
        let sc = &self.scenario;
        let dim = sc.domain.dim();
        let motion = match &sc.motion {
            Motion::Diffusive {
                diffusivity,
                drift,
                dispersion,
            } => {
                let dt = sc
                    .steps
                    .dt
                    .unwrap_or_else(|| match (&self.grid, self.method) {
                        (Some(grid), _) => {
                            let h = grid.spacing();
                            h * h / (T::lit(8.0) * *diffusivity)
                        }
                        _ => T::lit(RANGE_DEFAULT_DT),
                    });
                PlannedMotion::Diffusive(DynamicsSpec {
                    diffusivity: *diffusivity,
                    drift: drift.clone(),
                    dispersion: dispersion.clone(),
                    dt,
                })
            }
            Motion::Subdiffusive { alpha, diffusivity } => {
                let step = default_step::<T>(searchers);
                PlannedMotion::Subdiffusive(SubdiffusionSpec {
                    alpha: *alpha,
                    diffusivity: *diffusivity,
                    ds: sc.steps.ds.unwrap_or(step),
                    dt: sc.steps.dt.unwrap_or(step),
                })
            }
        };
        let dt = motion.dt();
        let t_max = match sc.time_cap {
            TimeCap::Absolute(t) => t,
            TimeCap::Factor(f) if self.geodesic.trivially_covered => f * dt,
            TimeCap::Factor(f) => f * self.formula(T::from_u64(searchers.max(2)).unwrap(), 1)?,
        };
        let max_steps = (t_max / dt).ceil().to_u64().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "time cap {t_max} with step {dt} gives too many steps"
            ))
        })?;
        Ok(RunPlan {
            prepared: self,
            searchers,
            dim,
            motion,
            t_max,
            max_steps: max_steps.max(1),
        })
    }
}

/// Motion with every step size fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum PlannedMotion<T> {
    Diffusive(DynamicsSpec<T>),
    Subdiffusive(SubdiffusionSpec<T>),
}

impl<T: Real> PlannedMotion<T> {
    /// Physical time step.
    pub fn dt(&self) -> T {
        match self {
            PlannedMotion::Diffusive(s) => s.dt,
            PlannedMotion::Subdiffusive(s) => s.dt,
        }
    }
}

/// Everything one replica needs for a given `N`.
#[derive(Debug, Clone)]
pub struct RunPlan<'a, T> {
    pub prepared: &'a PreparedScenario<T>,
    pub searchers: u64,
    pub dim: usize,
    pub motion: PlannedMotion<T>,
    /// Censoring cap.
    pub t_max: T,
    /// `ceil(t_max / Δt)`.
    pub max_steps: u64,
}

impl<T: Real> RunPlan<'_, T> {
    pub fn dt(&self) -> T {
        self.motion.dt()
    }

    pub fn scenario(&self) -> &Scenario<T> {
        self.prepared.scenario()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> Scenario<f64> {
        Scenario::torus_full_cover(
            2,
            std::f64::consts::FRAC_1_SQRT_2,
            0.3,
            Motion::brownian(1.0),
        )
        .unwrap()
    }

    #[test]
    fn torus_scenario_prepares_lattice() {
        let p = fig2().prepare().unwrap();
        assert_eq!(p.method(), CoverMethod::Lattice);
        assert!((p.geodesic().value - 0.40711).abs() < 1e-5);
        let grid = p.grid().unwrap();
        assert_eq!(grid.lattice().nodes_per_axis(), Some(34));
        let plan = p.plan(100).unwrap();
        let h = 1.0 / 34.0;
        assert!((plan.dt() - h * h / 8.0).abs() < 1e-15);
        let scale = 0.40711f64.powi(2) / (4.0 * 100f64.ln());
        assert!((plan.t_max / (50.0 * scale) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn one_dimensional_torus_uses_range() {
        let sc = Scenario::torus_full_cover(1, 1.3f64, 0.3, Motion::brownian(1.0)).unwrap();
        let p = sc.prepare().unwrap();
        assert_eq!(p.method(), CoverMethod::Range);
        assert!((p.range_threshold().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(p.plan(10).unwrap().dt(), RANGE_DEFAULT_DT);
        let forced = sc.with_method(CoverMethod::Lattice).prepare().unwrap();
        assert_eq!(forced.method(), CoverMethod::Lattice);
    }

    #[test]
    fn range_method_rejected_off_its_domain() {
        let sc = fig2().with_method(CoverMethod::Range);
        assert!(matches!(sc.prepare(), Err(Error::NotSupported(_))));
    }

    #[test]
    fn subdiffusive_plan_uses_log_rule() {
        let sc = Scenario::torus_full_cover(1, 1.3, 0.3, Motion::subdiffusive(0.5, 1.0)).unwrap();
        let p = sc.prepare().unwrap();
        let plan = p.plan(10_000).unwrap();
        let step = 1e-2 / (4.0 * 10_000f64.ln());
        match plan.motion {
            PlannedMotion::Subdiffusive(s) => {
                assert!((s.ds - step).abs() < 1e-18);
                assert!((s.dt - step).abs() < 1e-18);
            }
            _ => panic!("expected subdiffusion"),
        }
        assert!(p.prediction(1, 1).is_none());
        assert!(p.prediction(10_000, 1).unwrap() > 0.0);
    }

    #[test]
    fn overrides_and_validation() {
        let sc = fig2().with_steps(StepOverrides {
            dt: Some(1e-4),
            ds: None,
            dx: Some(0.02),
        });
        let p = sc.prepare().unwrap();
        assert_eq!(p.plan(5).unwrap().dt(), 1e-4);
        assert!(p.grid().unwrap().spacing() <= 0.02);
        let bad = fig2().with_steps(StepOverrides {
            dx: Some(0.05),
            ..Default::default()
        });
        assert!(bad.prepare().is_err());
        let mut bad = fig2();
        bad.detection_radius = -1.0;
        assert!(bad.prepare().is_err());
        assert!(fig2().prepare().unwrap().plan(0).is_err());
    }

    #[test]
    fn dispersion_on_torus_is_not_supported() {
        let mut sc = fig2();
        sc.motion = Motion::Diffusive {
            diffusivity: 1.0,
            drift: DriftField::Zero,
            dispersion: DispersionField::Scalar(2.0),
        };
        assert!(matches!(sc.prepare(), Err(Error::NotSupported(_))));
    }

    #[test]
    fn trivially_covered_scenario() {
        let sc = Scenario::torus_full_cover(2, 0.5, 0.6, Motion::brownian(1.0)).unwrap();
        let p = sc.prepare().unwrap();
        assert!(p.geodesic().trivially_covered);
        assert!(p.prediction(10, 1).is_none());
        assert!(p.plan(10).is_ok());
    }
}
