//! Cover detection for a swarm of `N` searchers: a lattice tracker for any
//! dimension and the exact range reduction on a one-dimensional torus.
//!
//! Detections happen at grid times `t_m = mΔt` only, including `t_0 = 0`.

mod grid;

pub use grid::{CoverageGrid, CoverageTracker};

use rand::Rng;

use crate::dynamics::{sample_initial, DynamicsSpec, EmKernel};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::real::Real;
use crate::scenario::{CoverMethod, PlannedMotion, RunPlan};
use crate::subordination::OperationalClock;

/// Running extremes of unwrapped one-dimensional paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeState<T> {
    pub max: T,
    pub min: T,
    /// `2(l - r)`.
    pub threshold: T,
}

impl<T: Real> RangeState<T> {
    pub fn new(threshold: T, origin: T) -> Self {
        Self {
            max: origin,
            min: origin,
            threshold,
        }
    }

    #[inline]
    pub fn observe(&mut self, x: T) {
        self.max = self.max.max(x);
        self.min = self.min.min(x);
    }

    pub fn range(&self) -> T {
        self.max - self.min
    }

    /// `max - min > 2(l - r)`.
    pub fn is_covered(&self) -> bool {
        self.range() > self.threshold
    }
}

/// Result of one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverOutcome<T> {
    /// Cover time, or the cap when censored.
    pub time: T,
    /// Grid steps taken.
    pub steps: u64,
    pub censored: bool,
    /// The target lies inside the initial detection balls.
    pub trivially_covered: bool,
}

impl<T: Real> CoverOutcome<T> {
    fn trivial() -> Self {
        Self {
            time: T::zero(),
            steps: 0,
            censored: false,
            trivially_covered: true,
        }
    }

    fn covered(steps: u64, dt: T) -> Self {
        Self {
            time: T::from_u64(steps).unwrap() * dt,
            steps,
            censored: false,
            trivially_covered: false,
        }
    }

    fn censored(steps: u64, t_max: T) -> Self {
        Self {
            time: t_max,
            steps,
            censored: true,
            trivially_covered: false,
        }
    }
}

/// Run one replica with the method resolved for the scenario.
pub fn run_replica<T: Real, R: Rng + ?Sized>(
    plan: &RunPlan<'_, T>,
    rng: &mut R,
) -> Result<CoverOutcome<T>> {
    match plan.prepared.method() {
        CoverMethod::Range => run_replica_range(plan, rng),
        _ => run_replica_lattice(plan, rng),
    }
}

fn at_step(e: Error, step: u64) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{m} at step {step}")),
        other => other,
    }
}

/// Positions of all searchers plus the state that moves them.
struct Swarm<T> {
    dim: usize,
    positions: Vec<T>,
    kernel: EmKernel<T>,
    subordinated: Option<Subordinated<T>>,
}

struct Subordinated<T> {
    alpha: T,
    increment_scale: T,
    clocks: Vec<OperationalClock<T>>,
}

impl<T: Real> Swarm<T> {
    fn new(motion: &PlannedMotion<T>, dim: usize, positions: Vec<T>) -> Self {
        let count = positions.len() / dim;
        let (kernel, subordinated) = match motion {
            PlannedMotion::Diffusive(spec) => (EmKernel::new(spec, dim), None),
            PlannedMotion::Subdiffusive(spec) => (
                EmKernel::new(&DynamicsSpec::brownian(spec.diffusivity, spec.ds), dim),
                Some(Subordinated {
                    alpha: spec.alpha,
                    increment_scale: spec.increment_scale(),
                    clocks: vec![OperationalClock::default(); count],
                }),
            ),
        };
        Self {
            dim,
            positions,
            kernel,
            subordinated,
        }
    }

    /// Move searcher `i` to physical time `t` (one Euler–Maruyama step for
    /// diffusion; as many operational steps as the clock needs otherwise).
    #[inline]
    fn advance<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        t: T,
        domain: &Domain<T>,
        rng: &mut R,
    ) -> Result<&[T]> {
        let x = &mut self.positions[i * self.dim..(i + 1) * self.dim];
        match &mut self.subordinated {
            None => self.kernel.step(x, domain, rng)?,
            Some(sub) => sub.clocks[i].advance_to(
                t,
                sub.alpha,
                sub.increment_scale,
                x,
                &mut self.kernel,
                domain,
                rng,
            )?,
        }
        Ok(x)
    }
}

/// Cover time on the target lattice: all searchers step on the shared time
/// grid, each position stamps the detection stencil at its nearest lattice
/// node, and the first grid time with every target site covered is
/// returned.
pub fn run_replica_lattice<T: Real, R: Rng + ?Sized>(
    plan: &RunPlan<'_, T>,
    rng: &mut R,
) -> Result<CoverOutcome<T>> {
    let grid = plan.prepared.grid().ok_or_else(|| {
        Error::NotSupported("scenario was prepared without a coverage lattice".into())
    })?;
    if plan.prepared.geodesic().trivially_covered {
        return Ok(CoverOutcome::trivial());
    }
    let scenario = plan.scenario();
    let domain = &scenario.domain;
    let dim = plan.dim;
    let n = plan.searchers as usize;
    let dt = plan.dt();

    let mut tracker = grid.tracker();
    let mut scratch = vec![0i64; dim];
    let mut positions = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let x = sample_initial(&scenario.start, domain, rng);
        grid.mark_nearest(&mut tracker, &x, &mut scratch);
        positions.extend_from_slice(&x);
    }
    if tracker.is_complete() {
        return Ok(CoverOutcome::covered(0, dt));
    }

    let mut swarm = Swarm::new(&plan.motion, dim, positions);
    for step in 1..=plan.max_steps {
        let t = T::from_u64(step).unwrap() * dt;
        for i in 0..n {
            let x = swarm
                .advance(i, t, domain, rng)
                .map_err(|e| at_step(e, step))?;
            grid.mark_nearest(&mut tracker, x, &mut scratch);
            if tracker.is_complete() {
                return Ok(CoverOutcome::covered(step, dt));
            }
        }
    }
    Ok(CoverOutcome::censored(plan.max_steps, plan.t_max))
}

/// Cover time of a one-dimensional torus from the range of the unwrapped
/// paths: the first grid time with `max - min > 2(l - r)`. All searchers
/// start at the origin.
pub fn run_replica_range<T: Real, R: Rng + ?Sized>(
    plan: &RunPlan<'_, T>,
    rng: &mut R,
) -> Result<CoverOutcome<T>> {
    if !plan.scenario().range_method_applies() {
        return Err(Error::NotSupported(
            "the range method needs a 1-d torus, a point start, a full-domain target and \
             driftless identity-dispersion motion; use the lattice method"
                .into(),
        ));
    }
    let threshold = plan
        .prepared
        .range_threshold()
        .expect("torus has a diameter");
    if threshold <= T::zero() {
        return Ok(CoverOutcome::trivial());
    }
    let n = plan.searchers as usize;
    let dt = plan.dt();
    let mut range = RangeState::new(threshold, T::zero());
    let mut xs = vec![T::zero(); n];

    match &plan.motion {
        PlannedMotion::Diffusive(spec) => {
            let scale = (T::lit(2.0) * spec.diffusivity * spec.dt).sqrt();
            for step in 1..=plan.max_steps {
                let (mut hi, mut lo) = (range.max, range.min);
                for x in xs.iter_mut() {
                    *x = *x + scale * T::standard_normal(rng);
                    if *x > hi {
                        hi = *x;
                    }
                    if *x < lo {
                        lo = *x;
                    }
                }
                if !(hi - lo).is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite searcher position at step {step}"
                    )));
                }
                range.max = hi;
                range.min = lo;
                if range.is_covered() {
                    return Ok(CoverOutcome::covered(step, dt));
                }
            }
        }
        PlannedMotion::Subdiffusive(_) => {
            let line = Domain::free_space(1)?;
            let mut swarm = Swarm::new(&plan.motion, 1, xs);
            for step in 1..=plan.max_steps {
                let t = T::from_u64(step).unwrap() * dt;
                for i in 0..n {
                    let x = swarm
                        .advance(i, t, &line, rng)
                        .map_err(|e| at_step(e, step))?[0];
                    range.observe(x);
                }
                if range.is_covered() {
                    return Ok(CoverOutcome::covered(step, dt));
                }
            }
        }
    }
    Ok(CoverOutcome::censored(plan.max_steps, plan.t_max))
}
