//! Domains, metrics, targets, start sets and the geodesic length `L` that
//! sets the many-searcher cover-time scale.
//!
//! Points are plain coordinate slices `&[T]` whose length must equal the
//! domain dimension. On a torus the fundamental box is `[0, 2l/√d)^d`, where
//! `l` is the diameter (the largest wrapped distance between two points).

mod lattice_geodesic;

pub use lattice_geodesic::{
    lattice_geodesic, DiffusivityField, DistanceMap, FnField, RiemannianLattice, ScaledIdentity,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Spatial domain the searchers move in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain<T> {
    /// Flat torus `[0, 2l/√d)^d` with periodic wrap; `diameter` is `l`.
    Torus { dim: usize, diameter: T },
    /// Unbounded `R^d`.
    FreeSpace { dim: usize },
}

impl<T: Real> Domain<T> {
    pub fn torus(dim: usize, diameter: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "torus dimension must be >= 1".into(),
            ));
        }
        if !(diameter > T::zero()) || !diameter.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "torus diameter must be positive and finite, got {diameter}"
            )));
        }
        Ok(Domain::Torus { dim, diameter })
    }

    pub fn free_space(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        Ok(Domain::FreeSpace { dim })
    }

    pub fn dim(&self) -> usize {
        match *self {
            Domain::Torus { dim, .. } | Domain::FreeSpace { dim } => dim,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::Torus { .. })
    }

    /// Side length `2l/√d` of the torus box.
    pub fn side(&self) -> Option<T> {
        match *self {
            Domain::Torus { dim, diameter } => {
                Some(T::lit(2.0) * diameter / T::from_count(dim).sqrt())
            }
            Domain::FreeSpace { .. } => None,
        }
    }

    pub fn diameter(&self) -> Option<T> {
        match *self {
            Domain::Torus { diameter, .. } => Some(diameter),
            Domain::FreeSpace { .. } => None,
        }
    }

    /// d-dimensional volume `|M|`.
    pub fn volume(&self) -> Option<T> {
        self.side().map(|s| s.powi(self.dim() as i32))
    }

    /// Torus "center" `(l/√d, ..., l/√d)`, or the origin in free space.
    pub fn center(&self) -> Vec<T> {
        match self.side() {
            Some(side) => vec![side * T::lit(0.5); self.dim()],
            None => vec![T::zero(); self.dim()],
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self.side() {
            Some(side) => x.iter().all(|&c| c >= T::zero() && c < side),
            None => x.iter().all(|c| c.is_finite()),
        }
    }

    pub fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, domain dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                point: x.iter().map(|c| c.to_f64_lossy()).collect(),
                side: self.side().map_or(f64::INFINITY, |s| s.to_f64_lossy()),
                dim: self.dim(),
            })
        }
    }

    /// Map coordinates back into the fundamental box (no-op in free space).
    #[inline]
    pub fn wrap(&self, x: &mut [T]) {
        if let Some(side) = self.side() {
            for c in x.iter_mut() {
                *c = wrap_coordinate(*c, side);
            }
        }
    }

    /// The metric the detection balls are measured in.
    pub fn ball_metric(&self) -> Metric<T> {
        match self.side() {
            Some(side) => Metric::TorusWrapped { side },
            None => Metric::Euclidean,
        }
    }
}

#[inline]
pub(crate) fn wrap_coordinate<T: Real>(c: T, side: T) -> T {
    if c >= T::zero() && c < side {
        return c;
    }
    let mut y = c % side;
    if y < T::zero() {
        y = y + side;
    }
    if y >= side {
        y = T::zero();
    }
    y
}

/// Distance function on a domain.
#[derive(Debug, Clone)]
pub enum Metric<T> {
    Euclidean,
    /// Componentwise minimum-image distance on the box `[0, side)^d`.
    TorusWrapped {
        side: T,
    },
    /// Length in the metric induced by a diffusivity field, approximated by
    /// shortest paths on a lattice graph.
    RiemannianLattice(RiemannianLattice<T>),
}

/// Distance between two points.
pub fn distance<T: Real>(metric: &Metric<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    match metric {
        Metric::Euclidean => Ok(euclidean(x, y)),
        Metric::TorusWrapped { side } => {
            let side = *side;
            for p in [x, y] {
                if !p.iter().all(|&c| c >= T::zero() && c < side) {
                    return Err(Error::OutsideDomain {
                        point: p.iter().map(|c| c.to_f64_lossy()).collect(),
                        side: side.to_f64_lossy(),
                        dim: p.len(),
                    });
                }
            }
            Ok(torus_distance(x, y, side))
        }
        Metric::RiemannianLattice(lattice) => lattice.distance(x, y),
    }
}

#[inline]
pub(crate) fn euclidean<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter()
        .zip(y)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
        .sqrt()
}

#[inline]
pub(crate) fn torus_distance<T: Real>(x: &[T], y: &[T], side: T) -> T {
    x.iter()
        .zip(y)
        .fold(T::zero(), |acc, (&a, &b)| {
            let mut d = (a - b).abs();
            if d > side - d {
                d = side - d;
            }
            acc + d * d
        })
        .sqrt()
}

/// A point or a union of closed balls of common radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region<T> {
    Point(Vec<T>),
    Balls { centers: Vec<Vec<T>>, radius: T },
}

impl<T: Real> Region<T> {
    pub fn ball(center: Vec<T>, radius: T) -> Self {
        Region::Balls {
            centers: vec![center],
            radius,
        }
    }

    fn centers_and_radius(&self) -> (&[Vec<T>], T) {
        match self {
            Region::Point(p) => (std::slice::from_ref(p), T::zero()),
            Region::Balls { centers, radius } => (centers.as_slice(), *radius),
        }
    }

    fn validate(&self) -> Result<()> {
        let (centers, radius) = self.centers_and_radius();
        if centers.is_empty() {
            return Err(Error::InvalidArgument("point set is empty".into()));
        }
        if !(radius >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "negative ball radius {radius}"
            )));
        }
        Ok(())
    }
}

/// `inf_{u∈U, v∈V} dist(u, v)`.
///
/// For the Euclidean and wrapped metrics balls are handled exactly as
/// center distance minus both radii, clamped at zero. The lattice metric
/// discretizes both sets on its node grid.
pub fn set_distance<T: Real>(metric: &Metric<T>, u: &Region<T>, v: &Region<T>) -> Result<T> {
    u.validate()?;
    v.validate()?;
    match metric {
        Metric::RiemannianLattice(lattice) => lattice.set_distance(u, v),
        _ => {
            let (cu, ru) = u.centers_and_radius();
            let (cv, rv) = v.centers_and_radius();
            let mut best = T::infinity();
            for a in cu {
                for b in cv {
                    let d = distance(metric, a, b)? - ru - rv;
                    best = best.min(d.max(T::zero()));
                }
            }
            Ok(best)
        }
    }
}

/// Region to be covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target<T> {
    FullDomain,
    BallUnion { centers: Vec<Vec<T>>, radius: T },
    SinglePoint(Vec<T>),
}

impl<T: Real> Target<T> {
    pub fn validate(&self, domain: &Domain<T>) -> Result<()> {
        match self {
            Target::FullDomain => {
                if !domain.is_periodic() {
                    return Err(Error::InvalidArgument(
                        "a full-domain target needs a bounded (torus) domain".into(),
                    ));
                }
            }
            Target::BallUnion { centers, radius } => {
                if centers.is_empty() {
                    return Err(Error::InvalidArgument(
                        "ball-union target has no centers".into(),
                    ));
                }
                if !(*radius >= T::zero()) {
                    return Err(Error::InvalidArgument(format!(
                        "target radius must be >= 0, got {radius}"
                    )));
                }
                for c in centers {
                    domain.check_point(c)?;
                }
            }
            Target::SinglePoint(p) => domain.check_point(p)?,
        }
        Ok(())
    }
}

/// Support of the initial searcher distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StartSet<T> {
    Point(Vec<T>),
    BallUnion { centers: Vec<Vec<T>>, radius: T },
}

impl<T: Real> StartSet<T> {
    pub fn validate(&self, domain: &Domain<T>) -> Result<()> {
        match self {
            StartSet::Point(p) => domain.check_point(p),
            StartSet::BallUnion { centers, radius } => {
                if centers.is_empty() {
                    return Err(Error::InvalidArgument(
                        "start ball union has no centers".into(),
                    ));
                }
                if !(*radius >= T::zero()) {
                    return Err(Error::InvalidArgument(format!(
                        "start radius must be >= 0, got {radius}"
                    )));
                }
                centers.iter().try_for_each(|c| domain.check_point(c))
            }
        }
    }

    pub fn region(&self) -> Region<T> {
        match self {
            StartSet::Point(p) => Region::Point(p.clone()),
            StartSet::BallUnion { centers, radius } => Region::Balls {
                centers: centers.clone(),
                radius: *radius,
            },
        }
    }
}

/// Square node lattice over a domain; periodic with `nodes_per_axis` nodes
/// on a torus, unbounded with origin at zero in free space.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLattice<T> {
    dim: usize,
    spacing: T,
    nodes_per_axis: Option<usize>,
}

impl<T: Real> NodeLattice<T> {
    /// Lattice with spacing at most `max_spacing`. On a torus the spacing is
    /// shrunk so that an integer number of nodes tiles each side.
    pub fn for_domain(domain: &Domain<T>, max_spacing: T) -> Result<Self> {
        if !(max_spacing > T::zero()) || !max_spacing.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lattice spacing must be positive, got {max_spacing}"
            )));
        }
        match domain.side() {
            Some(side) => {
                let n = (side / max_spacing)
                    .ceil()
                    .to_usize()
                    .unwrap_or(usize::MAX)
                    .max(1);
                if n.checked_pow(domain.dim() as u32)
                    .is_none_or(|total| total > 1 << 28)
                {
                    return Err(Error::InvalidArgument(format!(
                        "lattice with {n} nodes per axis in d={} is too large",
                        domain.dim()
                    )));
                }
                Ok(Self {
                    dim: domain.dim(),
                    spacing: side / T::from_count(n),
                    nodes_per_axis: Some(n),
                })
            }
            None => Ok(Self {
                dim: domain.dim(),
                spacing: max_spacing,
                nodes_per_axis: None,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn nodes_per_axis(&self) -> Option<usize> {
        self.nodes_per_axis
    }

    #[inline]
    pub fn nearest_node(&self, x: &[T], out: &mut [i64]) {
        for (o, &c) in out.iter_mut().zip(x) {
            let mut i = (c / self.spacing).round().to_i64().unwrap_or(i64::MAX);
            if let Some(n) = self.nodes_per_axis {
                i = i.rem_euclid(n as i64);
            }
            *o = i;
        }
    }

    pub fn coords(&self, node: &[i64]) -> Vec<T> {
        node.iter()
            .map(|&i| T::from_i64(i).unwrap() * self.spacing)
            .collect()
    }

    /// Canonical representative of a node (wrapped on a torus).
    #[inline]
    pub fn canonical(&self, node: &mut [i64]) {
        if let Some(n) = self.nodes_per_axis {
            for i in node.iter_mut() {
                *i = i.rem_euclid(n as i64);
            }
        }
    }

    /// Nodes whose distance (wrapped on a torus) to `center` is at most
    /// `radius`, each listed once.
    pub fn nodes_within(&self, center: &[T], radius: T, metric: &Metric<T>) -> Vec<Vec<i64>> {
        let reach = (radius / self.spacing).ceil().to_i64().unwrap_or(0) + 1;
        let mut base = vec![0i64; self.dim];
        for (b, &c) in base.iter_mut().zip(center) {
            *b = (c / self.spacing).round().to_i64().unwrap_or(0);
        }
        let mut out = Vec::new();
        let mut offset = vec![-reach; self.dim];
        let mut node = vec![0i64; self.dim];
        loop {
            for k in 0..self.dim {
                node[k] = base[k] + offset[k];
            }
            self.canonical(&mut node);
            let p = self.coords(&node);
            let within = match metric {
                Metric::TorusWrapped { side } => torus_distance(&p, center, *side) <= radius,
                _ => euclidean(&p, center) <= radius,
            };
            if within {
                out.push(node.clone());
            }
            if !advance_offset(&mut offset, reach) {
                break;
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Lattice nodes representing a target: every node for a full domain,
    /// the nodes inside the balls (plus the node nearest each center) for a
    /// ball union, and the nearest node for a single point.
    pub fn target_nodes(&self, domain: &Domain<T>, target: &Target<T>) -> Result<Vec<Vec<i64>>> {
        target.validate(domain)?;
        let metric = domain.ball_metric();
        let mut nodes = match target {
            Target::FullDomain => {
                let n = self.nodes_per_axis.ok_or_else(|| {
                    Error::InvalidArgument("full-domain target needs a torus".into())
                })? as i64;
                let mut all = Vec::with_capacity((n as usize).pow(self.dim as u32));
                let mut node = vec![0i64; self.dim];
                loop {
                    all.push(node.clone());
                    let mut k = 0;
                    loop {
                        if k == self.dim {
                            return Ok(all);
                        }
                        node[k] += 1;
                        if node[k] < n {
                            break;
                        }
                        node[k] = 0;
                        k += 1;
                    }
                }
            }
            Target::BallUnion { centers, radius } => {
                let mut v = Vec::new();
                let mut near = vec![0i64; self.dim];
                for c in centers {
                    v.extend(self.nodes_within(c, *radius, &metric));
                    self.nearest_node(c, &mut near);
                    v.push(near.clone());
                }
                v
            }
            Target::SinglePoint(p) => {
                let mut near = vec![0i64; self.dim];
                self.nearest_node(p, &mut near);
                vec![near]
            }
        };
        nodes.sort();
        nodes.dedup();
        Ok(nodes)
    }
}

/// Odometer over the cube `[-reach, reach]^d`; false once exhausted.
pub(crate) fn advance_offset(offset: &mut [i64], reach: i64) -> bool {
    for o in offset.iter_mut() {
        *o += 1;
        if *o <= reach {
            return true;
        }
        *o = -reach;
    }
    false
}

/// Outcome of [`geodesic_length`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicLength<T> {
    pub value: T,
    /// The detection balls around the start set already cover the target.
    pub trivially_covered: bool,
}

/// `L = sup_{y∈U_T} dist(U_0, B(y, r))`.
///
/// Torus + full target + point start uses the closed form `max(l - r, 0)`.
/// Otherwise the target is sampled on a lattice of spacing at most
/// `r / 10` (plus exact ball centers and single points) and the supremum is
/// taken over those samples.
pub fn geodesic_length<T: Real>(
    metric: &Metric<T>,
    domain: &Domain<T>,
    start: &StartSet<T>,
    target: &Target<T>,
    r: T,
) -> Result<GeodesicLength<T>> {
    if !(r > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "detection radius must be > 0, got {r}"
        )));
    }
    start.validate(domain)?;
    target.validate(domain)?;

    if let (Domain::Torus { diameter, .. }, Target::FullDomain, StartSet::Point(_), false) = (
        domain,
        target,
        start,
        matches!(metric, Metric::RiemannianLattice(_)),
    ) {
        let value = (*diameter - r).max(T::zero());
        return Ok(GeodesicLength {
            value,
            trivially_covered: value <= T::zero(),
        });
    }

    let samples = target_samples(domain, target, r)?;
    let value = match metric {
        Metric::RiemannianLattice(lattice) => {
            let ball_r = r;
            lattice.sup_distance_to_balls(&start.region(), &samples, ball_r)?
        }
        _ => {
            let u = start.region();
            let mut sup = T::zero();
            for y in samples {
                let d = set_distance(metric, &u, &Region::ball(y, r))?;
                sup = sup.max(d);
            }
            sup
        }
    };
    Ok(GeodesicLength {
        value,
        trivially_covered: value <= T::zero(),
    })
}

/// Nontriviality condition `sup_y dist_B(U_0, B(y, r)) > 0` in the ball
/// metric of the domain.
pub fn is_nontrivial<T: Real>(
    domain: &Domain<T>,
    start: &StartSet<T>,
    target: &Target<T>,
    r: T,
) -> Result<bool> {
    let l = geodesic_length(&domain.ball_metric(), domain, start, target, r)?;
    Ok(!l.trivially_covered)
}

fn target_samples<T: Real>(domain: &Domain<T>, target: &Target<T>, r: T) -> Result<Vec<Vec<T>>> {
    match target {
        Target::SinglePoint(p) => Ok(vec![p.clone()]),
        Target::FullDomain | Target::BallUnion { .. } => {
            let lattice = NodeLattice::for_domain(domain, r / T::lit(10.0))?;
            let mut pts: Vec<Vec<T>> = lattice
                .target_nodes(domain, target)?
                .iter()
                .map(|n| lattice.coords(n))
                .collect();
            if let Target::BallUnion { centers, .. } = target {
                pts.extend(centers.iter().cloned());
            }
            Ok(pts)
        }
    }
}
