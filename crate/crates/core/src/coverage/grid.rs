use crate::error::{Error, Result};
use crate::geometry::{Domain, NodeLattice, Target};
use crate::real::Real;

/// Relative slack on `Δx <= r/10` and on stencil membership, so that
/// spacings and radii that are exact in decimal survive rounding.
const RELATIVE_SLACK: f64 = 1e-9;

/// Integer box of lattice nodes with row-major linear indexing.
#[derive(Debug, Clone, PartialEq)]
struct NodeBox {
    lo: Vec<i64>,
    extent: Vec<usize>,
    strides: Vec<usize>,
    /// Nodes per axis on a torus; indices wrap instead of being clipped.
    period: Option<i64>,
}

impl NodeBox {
    fn new(lo: Vec<i64>, extent: Vec<usize>, period: Option<i64>) -> Result<Self> {
        let mut strides = vec![0; extent.len()];
        let mut total: usize = 1;
        for (s, &e) in strides.iter_mut().zip(&extent) {
            *s = total;
            total = total
                .checked_mul(e)
                .filter(|&t| t <= 1 << 30)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("coverage lattice box {extent:?} is too large"))
                })?;
        }
        Ok(Self {
            lo,
            extent,
            strides,
            period,
        })
    }

    fn len(&self) -> usize {
        self.extent.iter().product()
    }

    #[inline]
    fn index(&self, node: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for (k, &c) in node.iter().enumerate() {
            let mut i = c - self.lo[k];
            if let Some(n) = self.period {
                i = i.rem_euclid(n);
            } else if i < 0 || i >= self.extent[k] as i64 {
                return None;
            }
            idx += i as usize * self.strides[k];
        }
        Some(idx)
    }

    fn node(&self, mut idx: usize) -> Vec<i64> {
        let mut node = vec![0; self.extent.len()];
        for ((c, &lo), &n) in node.iter_mut().zip(&self.lo).zip(&self.extent) {
            *c = lo + (idx % n) as i64;
            idx /= n;
        }
        node
    }
}

#[inline]
fn bit(words: &[u64], i: usize) -> bool {
    words[i >> 6] >> (i & 63) & 1 == 1
}

#[inline]
fn set_bit(words: &mut [u64], i: usize) {
    words[i >> 6] |= 1 << (i & 63);
}

fn bitset(len: usize) -> Vec<u64> {
    vec![0; len.div_ceil(64)]
}

/// Target sites on a square lattice of spacing `Δx <= r/10`, with the
/// stencil of lattice offsets within the detection radius.
///
/// The grid is immutable and shared by all replicas; each replica keeps its
/// own [`CoverageTracker`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid<T> {
    lattice: NodeLattice<T>,
    radius: T,
    sites: NodeBox,
    is_site: Vec<u64>,
    site_count: usize,
    /// Nodes whose stencil can reach a site.
    centers: NodeBox,
    /// Flat `dim`-tuples of offsets.
    stencil: Vec<i64>,
}

/// Per-replica coverage state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageTracker {
    covered: Vec<u64>,
    stamped: Vec<u64>,
    remaining: usize,
}

impl CoverageTracker {
    /// Target sites not yet covered.
    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_complete(&self) -> bool {
        self.remaining == 0
    }
}

impl<T: Real> CoverageGrid<T> {
    /// Grid for `target` with spacing at most `max_spacing`, which must not
    /// exceed `r / 10`.
    pub fn new(domain: &Domain<T>, target: &Target<T>, radius: T, max_spacing: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "detection radius must be > 0, got {radius}"
            )));
        }
        let limit = radius / T::lit(10.0) * (T::one() + T::lit(RELATIVE_SLACK));
        if !(max_spacing <= limit) {
            return Err(Error::InvalidArgument(format!(
                "lattice spacing {max_spacing} exceeds r/10 = {}",
                radius / T::lit(10.0)
            )));
        }
        let lattice = NodeLattice::for_domain(domain, max_spacing)?;
        let dim = domain.dim();
        let h = lattice.spacing();

        let reach_f = radius / h * (T::one() + T::lit(RELATIVE_SLACK));
        let reach = reach_f.floor().to_i64().unwrap_or(0);
        let r2 = reach_f * reach_f;
        let mut stencil = Vec::new();
        let mut offset = vec![-reach; dim];
        loop {
            let norm2 = offset
                .iter()
                .fold(T::zero(), |acc, &o| acc + T::from_i64(o * o).unwrap());
            if norm2 <= r2 {
                stencil.extend_from_slice(&offset);
            }
            if !crate::geometry::advance_offset(&mut offset, reach) {
                break;
            }
        }

        let nodes = lattice.target_nodes(domain, target)?;
        let (sites, centers) = match lattice.nodes_per_axis() {
            Some(n) => {
                let b = NodeBox::new(vec![0; dim], vec![n; dim], Some(n as i64))?;
                (b.clone(), b)
            }
            None => {
                let mut lo = nodes[0].clone();
                let mut hi = nodes[0].clone();
                for node in &nodes {
                    for k in 0..dim {
                        lo[k] = lo[k].min(node[k]);
                        hi[k] = hi[k].max(node[k]);
                    }
                }
                let extent: Vec<usize> = (0..dim).map(|k| (hi[k] - lo[k] + 1) as usize).collect();
                let c_lo: Vec<i64> = lo.iter().map(|&v| v - reach).collect();
                let c_extent: Vec<usize> = extent.iter().map(|&e| e + 2 * reach as usize).collect();
                (
                    NodeBox::new(lo, extent, None)?,
                    NodeBox::new(c_lo, c_extent, None)?,
                )
            }
        };
        let mut is_site = bitset(sites.len());
        for node in &nodes {
            set_bit(
                &mut is_site,
                sites.index(node).expect("site inside its bounding box"),
            );
        }
        Ok(Self {
            lattice,
            radius,
            site_count: nodes.len(),
            sites,
            is_site,
            centers,
            stencil,
        })
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// Lattice spacing `Δx`.
    pub fn spacing(&self) -> T {
        self.lattice.spacing()
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn lattice(&self) -> &NodeLattice<T> {
        &self.lattice
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    /// Number of offsets in the detection stencil.
    pub fn stencil_len(&self) -> usize {
        self.stencil.len() / self.dim()
    }

    /// Coordinates of every target site.
    pub fn site_coords(&self) -> Vec<Vec<T>> {
        (0..self.sites.len())
            .filter(|&i| bit(&self.is_site, i))
            .map(|i| self.lattice.coords(&self.sites.node(i)))
            .collect()
    }

    /// Fresh tracker with every site uncovered.
    pub fn tracker(&self) -> CoverageTracker {
        CoverageTracker {
            covered: bitset(self.sites.len()),
            stamped: bitset(self.centers.len()),
            remaining: self.site_count,
        }
    }

    /// Whether the site at lattice node `node` is covered. `None` if the
    /// node is not a target site.
    pub fn is_covered(&self, tracker: &CoverageTracker, node: &[i64]) -> Option<bool> {
        let i = self.sites.index(node)?;
        bit(&self.is_site, i).then(|| bit(&tracker.covered, i))
    }

    #[inline]
    fn cover(&self, tracker: &mut CoverageTracker, node: &[i64]) -> bool {
        if let Some(i) = self.sites.index(node) {
            if bit(&self.is_site, i) && !bit(&tracker.covered, i) {
                set_bit(&mut tracker.covered, i);
                tracker.remaining -= 1;
                return true;
            }
        }
        false
    }

    /// Mark every target site within distance `r` (wrapped on a torus) of
    /// `position`. Returns the number of newly covered sites.
    pub fn mark_detection(&self, tracker: &mut CoverageTracker, position: &[T]) -> usize {
        let dim = self.dim();
        let h = self.spacing();
        let reach = (self.radius / h).ceil().to_i64().unwrap_or(0) + 1;
        let base: Vec<i64> = position
            .iter()
            .map(|&c| (c / h).round().to_i64().unwrap_or(0))
            .collect();
        let r2 = self.radius * self.radius;
        let mut offset = vec![-reach; dim];
        let mut node = vec![0i64; dim];
        let mut fresh = 0;
        loop {
            let mut d2 = T::zero();
            for k in 0..dim {
                node[k] = base[k] + offset[k];
                let diff = T::from_i64(node[k]).unwrap() * h - position[k];
                d2 = d2 + diff * diff;
            }
            if d2 <= r2 && self.cover(tracker, &node) {
                fresh += 1;
            }
            if !crate::geometry::advance_offset(&mut offset, reach) {
                break;
            }
        }
        fresh
    }

    /// Stencil marking at the lattice node nearest to `position`: covers the
    /// sites within `r` of that node, which agrees with
    /// [`mark_detection`](Self::mark_detection) up to one lattice spacing.
    /// A node already stamped in this replica is skipped. `scratch` must
    /// hold `dim` entries.
    #[inline]
    pub fn mark_nearest(
        &self,
        tracker: &mut CoverageTracker,
        position: &[T],
        scratch: &mut [i64],
    ) -> usize {
        self.lattice.nearest_node(position, scratch);
        let Some(c) = self.centers.index(scratch) else {
            return 0;
        };
        if bit(&tracker.stamped, c) {
            return 0;
        }
        set_bit(&mut tracker.stamped, c);
        let dim = self.dim();
        let mut node = [0i64; 8];
        let mut fresh = 0;
        if dim <= node.len() {
            for off in self.stencil.chunks_exact(dim) {
                for k in 0..dim {
                    node[k] = scratch[k] + off[k];
                }
                if self.cover(tracker, &node[..dim]) {
                    fresh += 1;
                }
            }
        } else {
            let mut node = vec![0i64; dim];
            for off in self.stencil.chunks_exact(dim) {
                for k in 0..dim {
                    node[k] = scratch[k] + off[k];
                }
                if self.cover(tracker, &node) {
                    fresh += 1;
                }
            }
        }
        fresh
    }
}
