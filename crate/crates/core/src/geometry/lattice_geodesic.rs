//! Shortest paths in the metric `ds² = dxᵀ a(x)⁻¹ dx` induced by a
//! diffusivity field, on a square lattice graph.
//!
//! Edges follow the 16-neighbor stencil in two dimensions (axis, diagonal
//! and knight moves), which bounds the direction-discretization error by
//! `1/cos(atan(1/2)/2) - 1 ≈ 2.8%`. Each edge costs its Euclidean length
//! times `√(ŝᵀ a⁻¹ ŝ)` evaluated at the edge midpoint.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Debug;
use std::sync::Arc;

use super::{euclidean, Region};
use crate::error::{Error, Result};
use crate::real::Real;

const MAX_NODES: usize = 1 << 24;

/// Off-lattice points connect by straight segments to every node within
/// this many cells.
const CONNECT_CELLS: f64 = 3.0;

const STENCIL_1D: &[[i64; 2]] = &[[1, 0], [-1, 0]];
const STENCIL_2D: &[[i64; 2]] = &[
    [1, 0],
    [-1, 0],
    [0, 1],
    [0, -1],
    [1, 1],
    [1, -1],
    [-1, 1],
    [-1, -1],
    [1, 2],
    [2, 1],
    [-1, 2],
    [-2, 1],
    [1, -2],
    [2, -1],
    [-1, -2],
    [-2, -1],
];

/// Symmetric positive definite diffusivity matrix `a(x) = σ(x)σ(x)ᵀ`.
pub trait DiffusivityField<T: Real>: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// Write `a(x)` in row-major order into `out` (length `dim²`).
    fn diffusivity(&self, x: &[T], out: &mut [T]);
}

/// `a(x) = scale · I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity<T> {
    pub dim: usize,
    pub scale: T,
}

impl<T: Real> DiffusivityField<T> for ScaledIdentity<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn diffusivity(&self, _x: &[T], out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = if k % (self.dim + 1) == 0 {
                self.scale
            } else {
                T::zero()
            };
        }
    }
}

/// Diffusivity given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Debug for FnField<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnField")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl<T: Real, F: Fn(&[T], &mut [T]) + Send + Sync> DiffusivityField<T> for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn diffusivity(&self, x: &[T], out: &mut [T]) {
        (self.f)(x, out)
    }
}

/// `√(ŝᵀ a(x)⁻¹ ŝ)` for a unit direction `s`.
fn inverse_norm<T: Real>(field: &dyn DiffusivityField<T>, x: &[T], s: &[T]) -> Result<T> {
    let mut a = [T::zero(); 4];
    let not_spd = || {
        Error::Numeric(format!(
            "diffusivity is not positive definite at {:?}",
            x.iter().map(|c| c.to_f64_lossy()).collect::<Vec<_>>()
        ))
    };
    match s.len() {
        1 => {
            field.diffusivity(x, &mut a[..1]);
            if !(a[0] > T::zero()) {
                return Err(not_spd());
            }
            Ok((s[0] * s[0] / a[0]).sqrt())
        }
        2 => {
            field.diffusivity(x, &mut a);
            let det = a[0] * a[3] - a[1] * a[2];
            if !(a[0] > T::zero()) || !(det > T::zero()) {
                return Err(not_spd());
            }
            // a⁻¹ = [[a3, -a1], [-a2, a0]] / det
            let q = (a[3] * s[0] * s[0] - (a[1] + a[2]) * s[0] * s[1] + a[0] * s[1] * s[1]) / det;
            if !(q > T::zero()) {
                return Err(not_spd());
            }
            Ok(q.sqrt())
        }
        d => Err(Error::NotSupported(format!(
            "lattice geodesics are implemented for d <= 2, got d = {d}"
        ))),
    }
}

/// Metric length of the straight segment `from → to`, with the field
/// sampled at the midpoint.
fn segment_cost<T: Real>(field: &dyn DiffusivityField<T>, from: &[T], to: &[T]) -> Result<T> {
    let len = euclidean(from, to);
    if len == T::zero() {
        return Ok(T::zero());
    }
    let half = T::lit(0.5);
    let mid: Vec<T> = from.iter().zip(to).map(|(&a, &b)| (a + b) * half).collect();
    let dir: Vec<T> = from.iter().zip(to).map(|(&a, &b)| (b - a) / len).collect();
    Ok(len * inverse_norm(field, &mid, &dir)?)
}

#[derive(Debug, Clone, Copy)]
struct Entry<T> {
    cost: T,
    node: usize,
}

impl<T: PartialOrd> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: PartialOrd> Eq for Entry<T> {}

impl<T: PartialOrd> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for Entry<T> {
    // min-heap on cost
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Single- or multi-source shortest-path distances over a rectangular block
/// of lattice nodes.
#[derive(Debug, Clone)]
pub struct DistanceMap<T> {
    origin: Vec<T>,
    spacing: T,
    shape: Vec<usize>,
    dist: Vec<T>,
    sources: Vec<Vec<T>>,
}

impl<T: Real> DistanceMap<T> {
    /// Run Dijkstra from `sources` over the block spanning `[lo, hi]`.
    pub fn compute(
        field: &dyn DiffusivityField<T>,
        spacing: T,
        lo: &[T],
        hi: &[T],
        sources: &Region<T>,
    ) -> Result<Self> {
        let dim = field.dim();
        if dim == 0 || dim > 2 {
            return Err(Error::NotSupported(format!(
                "lattice geodesics are implemented for d <= 2, got d = {dim}"
            )));
        }
        if !(spacing > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "lattice spacing must be > 0, got {spacing}"
            )));
        }
        let shape: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| {
                ((b - a) / spacing)
                    .ceil()
                    .to_usize()
                    .unwrap_or(usize::MAX)
                    .saturating_add(1)
            })
            .collect();
        let total = shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        if total.is_none_or(|t| t > MAX_NODES) {
            return Err(Error::InvalidArgument(format!(
                "lattice block {shape:?} exceeds {MAX_NODES} nodes; increase the spacing"
            )));
        }
        // align the block so the first source point is a node
        let anchor = &sources.centers_and_radius().0[0];
        let origin: Vec<T> = lo
            .iter()
            .zip(anchor)
            .map(|(&l, &a)| a - ((a - l) / spacing).ceil() * spacing)
            .collect();
        let shape: Vec<usize> = shape.iter().map(|&n| n + 1).collect();
        let total: usize = shape.iter().product();
        let mut map = Self {
            origin,
            spacing,
            shape,
            dist: vec![T::infinity(); total],
            sources: Vec::new(),
        };
        map.run(field, sources)?;
        Ok(map)
    }

    fn node_coords(&self, idx: usize, out: &mut [T]) {
        let mut rem = idx;
        for (k, o) in out.iter_mut().enumerate() {
            let i = rem % self.shape[k];
            rem /= self.shape[k];
            *o = self.origin[k] + T::from_count(i) * self.spacing;
        }
    }

    fn index_of(&self, cell: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for (k, &i) in cell.iter().enumerate() {
            if i < 0 || i as usize >= self.shape[k] {
                return None;
            }
            idx += i as usize * stride;
            stride *= self.shape[k];
        }
        Some(idx)
    }

    fn nodes_in_ball(&self, center: &[T], radius: T) -> Vec<usize> {
        let dim = center.len();
        let reach = (radius / self.spacing).ceil().to_i64().unwrap_or(0) + 1;
        let base: Vec<i64> = center
            .iter()
            .zip(&self.origin)
            .map(|(&c, &o)| {
                ((c - o) / self.spacing)
                    .round()
                    .to_i64()
                    .unwrap_or(i64::MIN)
            })
            .collect();
        let mut offset = vec![-reach; dim];
        let mut cell = vec![0i64; dim];
        let mut p = vec![T::zero(); dim];
        let mut out = Vec::new();
        loop {
            for k in 0..dim {
                cell[k] = base[k] + offset[k];
            }
            if let Some(i) = self.index_of(&cell) {
                self.node_coords(i, &mut p);
                if euclidean(&p, center) <= radius {
                    out.push(i);
                }
            }
            if !super::advance_offset(&mut offset, reach) {
                break;
            }
        }
        out
    }

    fn run(&mut self, field: &dyn DiffusivityField<T>, sources: &Region<T>) -> Result<()> {
        let dim = self.shape.len();
        let mut heap = BinaryHeap::new();
        let mut p = vec![T::zero(); dim];
        let (centers, radius) = sources.centers_and_radius();
        for c in centers {
            self.sources.push(c.clone());
            for i in self.nodes_in_ball(c, radius) {
                self.dist[i] = T::zero();
                heap.push(Entry {
                    cost: T::zero(),
                    node: i,
                });
            }
            for i in self.nodes_in_ball(c, radius + self.spacing * T::lit(CONNECT_CELLS)) {
                self.node_coords(i, &mut p);
                let cost = (segment_cost(field, c, &p)? - radius).max(T::zero());
                if cost < self.dist[i] {
                    self.dist[i] = cost;
                    heap.push(Entry { cost, node: i });
                }
            }
        }
        if heap.is_empty() {
            return Err(Error::InvalidArgument(
                "source set does not touch the lattice block".into(),
            ));
        }

        let stencil = if dim == 1 { STENCIL_1D } else { STENCIL_2D };
        // per-offset unit directions and Euclidean lengths
        let steps: Vec<(Vec<T>, T)> = stencil
            .iter()
            .map(|o| {
                let v: Vec<T> = o[..dim].iter().map(|&c| T::from_i64(c).unwrap()).collect();
                let n = v.iter().fold(T::zero(), |a, &c| a + c * c).sqrt();
                (v.iter().map(|&c| c / n).collect(), n * self.spacing)
            })
            .collect();
        let half = T::lit(0.5);
        let mut cell = vec![0i64; dim];
        let mut mid = vec![T::zero(); dim];

        while let Some(Entry { cost, node }) = heap.pop() {
            if cost > self.dist[node] {
                continue;
            }
            let mut rem = node;
            let mut here = [0i64; 2];
            for (h, &n) in here.iter_mut().zip(&self.shape).take(dim) {
                *h = (rem % n) as i64;
                rem /= n;
            }
            self.node_coords(node, &mut p);
            for (o, (dir, len)) in stencil.iter().zip(&steps) {
                for k in 0..dim {
                    cell[k] = here[k] + o[k];
                }
                let Some(next) = self.index_of(&cell) else {
                    continue;
                };
                for k in 0..dim {
                    mid[k] = p[k] + T::from_i64(o[k]).unwrap() * self.spacing * half;
                }
                let w = *len * inverse_norm(field, &mid, dir)?;
                let c = cost + w;
                if c < self.dist[next] {
                    self.dist[next] = c;
                    heap.push(Entry {
                        cost: c,
                        node: next,
                    });
                }
            }
        }
        Ok(())
    }

    /// Distance from the sources to a point.
    pub fn query(&self, field: &dyn DiffusivityField<T>, y: &[T]) -> Result<T> {
        let dim = y.len();
        let mut best = T::infinity();
        let reach = self.spacing * T::lit(CONNECT_CELLS);
        for s in &self.sources {
            if euclidean(s, y) <= reach {
                best = best.min(segment_cost(field, s, y)?);
            }
        }
        let mut p = vec![T::zero(); dim];
        for i in self.nodes_in_ball(y, self.spacing * T::lit(CONNECT_CELLS)) {
            if self.dist[i].is_finite() {
                self.node_coords(i, &mut p);
                best = best.min(self.dist[i] + segment_cost(field, &p, y)?);
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::Range(format!(
                "point {:?} lies outside the lattice block",
                y.iter().map(|c| c.to_f64_lossy()).collect::<Vec<_>>()
            )))
        }
    }

    /// Distance from the sources to the closed Euclidean ball `B(y, r)`.
    pub fn query_ball(&self, field: &dyn DiffusivityField<T>, y: &[T], r: T) -> Result<T> {
        let mut best = self.query(field, y)?;
        for i in self.nodes_in_ball(y, r) {
            best = best.min(self.dist[i]);
        }
        Ok(best)
    }
}

/// Lattice approximation of the Riemannian distance of a diffusivity field.
#[derive(Debug, Clone)]
pub struct RiemannianLattice<T> {
    field: Arc<dyn DiffusivityField<T>>,
    spacing: T,
    /// Padding around the bounding box of the query, as a fraction of its
    /// diagonal, so that geodesics may bend outside it.
    margin_fraction: T,
}

impl<T: Real> RiemannianLattice<T> {
    pub fn new(field: Arc<dyn DiffusivityField<T>>, spacing: T) -> Result<Self> {
        if field.dim() == 0 || field.dim() > 2 {
            return Err(Error::NotSupported(format!(
                "lattice geodesics are implemented for d <= 2, got d = {}",
                field.dim()
            )));
        }
        if !(spacing > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "lattice spacing must be > 0, got {spacing}"
            )));
        }
        Ok(Self {
            field,
            spacing,
            margin_fraction: T::lit(0.25),
        })
    }

    pub fn with_margin_fraction(mut self, margin_fraction: T) -> Self {
        self.margin_fraction = margin_fraction;
        self
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn field(&self) -> &dyn DiffusivityField<T> {
        self.field.as_ref()
    }

    fn block(&self, points: &[&[T]], pad: T) -> (Vec<T>, Vec<T>) {
        let dim = self.field.dim();
        let mut lo = vec![T::infinity(); dim];
        let mut hi = vec![T::neg_infinity(); dim];
        for p in points {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diag = euclidean(&lo, &hi);
        let m = diag * self.margin_fraction + pad + self.spacing * T::lit(2.0);
        for k in 0..dim {
            lo[k] = lo[k] - m;
            hi[k] = hi[k] + m;
        }
        (lo, hi)
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.field.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, field dimension is {}",
                x.len(),
                self.field.dim()
            )));
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn distance(&self, x: &[T], y: &[T]) -> Result<T> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        if x == y {
            return Ok(T::zero());
        }
        let (lo, hi) = self.block(&[x, y], T::zero());
        let map = DistanceMap::compute(
            self.field(),
            self.spacing,
            &lo,
            &hi,
            &Region::Point(x.to_vec()),
        )?;
        map.query(self.field(), y)
    }

    pub fn set_distance(&self, u: &Region<T>, v: &Region<T>) -> Result<T> {
        let (cu, ru) = u.centers_and_radius();
        let (cv, rv) = v.centers_and_radius();
        for p in cu.iter().chain(cv) {
            self.check_dim(p)?;
        }
        // overlapping sets are at distance zero
        if cu
            .iter()
            .any(|a| cv.iter().any(|b| euclidean(a, b) <= ru + rv))
        {
            return Ok(T::zero());
        }
        let pts: Vec<&[T]> = cu.iter().chain(cv).map(|p| p.as_slice()).collect();
        let (lo, hi) = self.block(&pts, ru.max(rv));
        let map = DistanceMap::compute(self.field(), self.spacing, &lo, &hi, u)?;
        let mut best = T::infinity();
        for c in cv {
            best = best.min(map.query_ball(self.field(), c, rv)?);
        }
        Ok(best)
    }

    /// `sup_y dist(U, B(y, r))` over the sample points `ys`.
    pub fn sup_distance_to_balls(&self, u: &Region<T>, ys: &[Vec<T>], r: T) -> Result<T> {
        let (cu, ru) = u.centers_and_radius();
        let pts: Vec<&[T]> = cu.iter().chain(ys).map(|p| p.as_slice()).collect();
        for p in &pts {
            self.check_dim(p)?;
        }
        let (lo, hi) = self.block(&pts, ru.max(r));
        let map = DistanceMap::compute(self.field(), self.spacing, &lo, &hi, u)?;
        let mut sup = T::zero();
        for y in ys {
            let touching = cu.iter().any(|c| euclidean(c, y) <= ru + r);
            if !touching {
                sup = sup.max(map.query_ball(self.field(), y, r)?);
            }
        }
        Ok(sup)
    }
}

/// Riemannian distance between `x` and `y` for the diffusivity field,
/// approximated on a lattice of spacing `h`.
pub fn lattice_geodesic<T: Real>(
    field: Arc<dyn DiffusivityField<T>>,
    x: &[T],
    y: &[T],
    h: T,
) -> Result<T> {
    RiemannianLattice::new(field, h)?.distance(x, y)
}
