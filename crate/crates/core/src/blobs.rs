//! The particle measure, its Gaussian mollification and the cell list used to
//! restrict kernel sums to local neighborhoods.

use log::warn;

use crate::error::{Error, Result};
use crate::{Real, Vec3};

/// Equal-mass particles with stable ids and insertion times.
///
/// Removal preserves the relative order of survivors and new particles are
/// appended with increasing ids, so storage order is always ascending id.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet<T> {
    positions: Vec<Vec3<T>>,
    ids: Vec<u64>,
    insert_times: Vec<T>,
    mass: T,
    next_id: u64,
}

impl<T: Real> ParticleSet<T> {
    pub fn new(mass: T) -> Result<Self> {
        if !(mass > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "particle mass {mass} must be positive"
            )));
        }
        Ok(Self {
            positions: Vec::new(),
            ids: Vec::new(),
            insert_times: Vec::new(),
            mass,
            next_id: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Mass carried by each particle.
    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn total_mass(&self) -> T {
        T::lit(self.len() as f64) * self.mass
    }

    pub fn positions(&self) -> &[Vec3<T>] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [Vec3<T>] {
        &mut self.positions
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn insert_times(&self) -> &[T] {
        &self.insert_times
    }

    /// Appends a particle and returns its id.
    pub fn push(&mut self, x: Vec3<T>, time: T) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.positions.push(x);
        self.ids.push(id);
        self.insert_times.push(time);
        id
    }

    /// Removes the particles at `indices` (any order, duplicates ignored).
    pub fn remove(&mut self, indices: &[usize]) {
        if indices.is_empty() {
            return;
        }
        let mut doomed = vec![false; self.len()];
        for &i in indices {
            doomed[i] = true;
        }
        let mut keep = doomed.iter().map(|d| !d);
        self.positions.retain(|_| keep.next().unwrap());
        let mut keep = doomed.iter().map(|d| !d);
        self.ids.retain(|_| keep.next().unwrap());
        let mut keep = doomed.iter().map(|d| !d);
        self.insert_times.retain(|_| keep.next().unwrap());
    }
}

/// Width and truncation of the Gaussian blob `N(x, beta) = (beta/pi)^{3/2} exp(-beta |x|^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams<T> {
    pub beta: T,
    /// Neighborhood radius in units of `1/sqrt(beta)`.
    pub cutoff: T,
}

impl<T: Real> KernelParams<T> {
    pub const DEFAULT_CUTOFF: f64 = 6.0;

    pub fn new(beta: T, cutoff: T) -> Result<Self> {
        if !(beta > T::zero()) || !(cutoff > T::zero()) {
            return Err(Error::InvalidParams(format!(
                "kernel needs beta > 0 and cutoff > 0 (got {beta}, {cutoff})"
            )));
        }
        if cutoff < T::lit(3.0) {
            warn!("kernel cutoff {cutoff} below 3 widths; truncation error exceeds e^-9");
        }
        Ok(Self { beta, cutoff })
    }

    pub fn with_default_cutoff(beta: T) -> Result<Self> {
        Self::new(beta, T::lit(Self::DEFAULT_CUTOFF))
    }

    /// Neighborhood radius `cutoff / sqrt(beta)`.
    pub fn radius(&self) -> T {
        self.cutoff / self.beta.sqrt()
    }

    /// Peak value `(beta/pi)^{3/2}` of the unit-mass blob.
    pub fn peak(&self) -> T {
        (self.beta / T::PI()).powf(T::lit(1.5))
    }

    #[inline]
    pub fn value(&self, r2: T) -> T {
        self.peak() * (-self.beta * r2).exp()
    }

    /// Worst-case error of a truncated density sum over `n` particles of mass `mass`.
    pub fn truncation_bound(&self, n: usize, mass: T) -> T {
        T::lit(n as f64) * mass * self.peak() * (-self.cutoff * self.cutoff).exp()
    }
}

/// Source of candidate neighbors for kernel sums.
pub trait Neighborhood<T: Real> {
    /// Calls `f(j)` for a superset of the particles within `radius_sq` of `x`.
    fn for_each_candidate(&self, x: Vec3<T>, f: impl FnMut(usize));

    /// Calls `f(i, j)` once for every unordered candidate pair `i != j`.
    fn for_each_pair(&self, f: impl FnMut(usize, usize));

    /// Squared interaction radius; pairs farther apart contribute nothing.
    fn radius_sq(&self) -> T;
}

/// The O(n^2) reference: every particle interacts with every other, no cutoff.
#[derive(Clone, Copy, Debug)]
pub struct AllPairs {
    pub n: usize,
}

impl<T: Real> Neighborhood<T> for AllPairs {
    fn for_each_candidate(&self, _x: Vec3<T>, mut f: impl FnMut(usize)) {
        (0..self.n).for_each(&mut f);
    }

    fn for_each_pair(&self, mut f: impl FnMut(usize, usize)) {
        for i in 0..self.n {
            for j in i + 1..self.n {
                f(i, j);
            }
        }
    }

    fn radius_sq(&self) -> T {
        T::infinity()
    }
}

const MAX_CELLS: usize = 1 << 26;

/// Uniform cell list over an axis-aligned bounding box.
///
/// Cells have edge `h >= radius`, so the 27 cells around a point hold every
/// particle within `radius` of it.
#[derive(Clone, Debug)]
pub struct CellGrid<T> {
    origin: Vec3<T>,
    h: T,
    radius: T,
    dims: [usize; 3],
    /// `start[c]..start[c + 1]` indexes `order` for cell `c`.
    start: Vec<u32>,
    order: Vec<u32>,
}

impl<T: Real> CellGrid<T> {
    /// Bins `positions` into cells of edge `kernel.radius()` over `bounds`,
    /// growing the bounds to cover any particle outside them.
    pub fn build(
        positions: &[Vec3<T>],
        kernel: &KernelParams<T>,
        bounds: (Vec3<T>, Vec3<T>),
    ) -> Self {
        let radius = kernel.radius();
        let (mut lo, mut hi) = bounds;
        let (plo, phi) = positions
            .iter()
            .fold((lo, hi), |(a, b), &p| (a.min(p), b.max(p)));
        if plo != lo || phi != hi {
            warn!("particles outside grid bounds; growing grid to {plo:?}..{phi:?}");
            lo = plo;
            hi = phi;
        }
        let mut h = radius;
        let cells = |h: T| {
            ((hi - lo) / h)
                .map(|e| e.floor() + T::one())
                .0
                .map(|e| e.to_usize().unwrap_or(usize::MAX).max(1))
        };
        let mut dims = cells(h);
        while dims.iter().fold(1usize, |a, &d| a.saturating_mul(d)) > MAX_CELLS {
            h = h * T::two();
            dims = cells(h);
        }
        let ncell = dims[0] * dims[1] * dims[2];
        let mut grid = Self {
            origin: lo,
            h,
            radius,
            dims,
            start: vec![0; ncell + 1],
            order: vec![0; positions.len()],
        };
        let idx: Vec<usize> = positions
            .iter()
            .map(|&p| grid.linear(grid.cell_of(p)))
            .collect();
        for &c in &idx {
            grid.start[c + 1] += 1;
        }
        for c in 0..ncell {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (i, &c) in idx.iter().enumerate() {
            grid.order[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    pub fn cell_size(&self) -> T {
        self.h
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Particle indices binned in the cell with linear index `c`.
    pub fn cell_members(&self, c: usize) -> &[u32] {
        &self.order[self.start[c] as usize..self.start[c + 1] as usize]
    }

    #[inline]
    fn cell_of(&self, x: Vec3<T>) -> [usize; 3] {
        std::array::from_fn(|i| {
            let c = ((x[i] - self.origin[i]) / self.h).floor();
            c.to_usize().unwrap_or(0).min(self.dims[i] - 1)
        })
    }

    #[inline]
    fn linear(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Indices of all particles in the 27 cells around `x`.
    pub fn neighbor_query(&self, x: Vec3<T>) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_candidate(x, |j| out.push(j));
        out
    }
}

impl<T: Real> Neighborhood<T> for CellGrid<T> {
    fn for_each_candidate(&self, x: Vec3<T>, mut f: impl FnMut(usize)) {
        // Signed cell coordinates: points far outside the grid see no cells.
        let c: [i64; 3] = std::array::from_fn(|i| {
            ((x[i] - self.origin[i]) / self.h)
                .floor()
                .to_i64()
                .unwrap_or(i64::MIN / 2)
        });
        let range = |i: usize| {
            let lo = (c[i] - 1).max(0);
            let hi = (c[i] + 1).min(self.dims[i] as i64 - 1);
            lo..=hi
        };
        for z in range(2) {
            for y in range(1) {
                for xx in range(0) {
                    let cell = self.linear([xx as usize, y as usize, z as usize]);
                    for &j in self.cell_members(cell) {
                        f(j as usize);
                    }
                }
            }
        }
    }

    fn for_each_pair(&self, mut f: impl FnMut(usize, usize)) {
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let here = self.cell_members(self.linear([x, y, z]));
                    if here.is_empty() {
                        continue;
                    }
                    for (a, &i) in here.iter().enumerate() {
                        for &j in &here[a + 1..] {
                            f(i as usize, j as usize);
                        }
                    }
                    // Forward half of the 26-cell stencil, so each cell pair is visited once.
                    for (dx, dy, dz) in HALF_STENCIL {
                        let (ox, oy, oz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if ox < 0 || oy < 0 || ox >= nx as i64 || oy >= ny as i64 || oz >= nz as i64
                        {
                            continue;
                        }
                        let there =
                            self.cell_members(self.linear([ox as usize, oy as usize, oz as usize]));
                        for &i in here {
                            for &j in there {
                                f(i as usize, j as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    fn radius_sq(&self) -> T {
        self.radius * self.radius
    }
}

const HALF_STENCIL: [(i64, i64, i64); 13] = [
    (1, 0, 0),
    (-1, 1, 0),
    (0, 1, 0),
    (1, 1, 0),
    (-1, -1, 1),
    (0, -1, 1),
    (1, -1, 1),
    (-1, 0, 1),
    (0, 0, 1),
    (1, 0, 1),
    (-1, 1, 1),
    (0, 1, 1),
    (1, 1, 1),
];

/// Mollified density `sum_p m_p N(x - x_p, beta)` at an arbitrary point.
pub fn density_at<T: Real, N: Neighborhood<T>>(
    x: Vec3<T>,
    ps: &ParticleSet<T>,
    k: &KernelParams<T>,
    nb: &N,
) -> T {
    let r2max = nb.radius_sq();
    let pos = ps.positions();
    let mut acc = T::zero();
    nb.for_each_candidate(x, |j| {
        let r2 = (x - pos[j]).norm_squared();
        if r2 <= r2max {
            acc = acc + (-k.beta * r2).exp();
        }
    });
    acc * k.peak() * ps.mass()
}

/// Spatial gradient of [`density_at`].
pub fn grad_density_at<T: Real, N: Neighborhood<T>>(
    x: Vec3<T>,
    ps: &ParticleSet<T>,
    k: &KernelParams<T>,
    nb: &N,
) -> Vec3<T> {
    let r2max = nb.radius_sq();
    let pos = ps.positions();
    let mut acc = Vec3::zero();
    nb.for_each_candidate(x, |j| {
        let d = x - pos[j];
        let r2 = d.norm_squared();
        if r2 <= r2max {
            acc += d * (-k.beta * r2).exp();
        }
    });
    acc * (-T::two() * k.beta * k.peak() * ps.mass())
}

/// Density and its gradient evaluated at every particle, self term included.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleDensities<T> {
    pub rho: Vec<T>,
    pub grad: Vec<Vec3<T>>,
}

/// Evaluates the density and its gradient at each particle position with one
/// symmetric sweep over neighbor pairs.
pub fn particle_densities<T: Real, N: Neighborhood<T>>(
    ps: &ParticleSet<T>,
    k: &KernelParams<T>,
    nb: &N,
) -> ParticleDensities<T> {
    let n = ps.len();
    let pos = ps.positions();
    let r2max = nb.radius_sq();
    // Accumulate unscaled sums; scale once at the end.
    let mut rho = vec![T::one(); n];
    let mut grad = vec![Vec3::zero(); n];
    let beta = k.beta;
    nb.for_each_pair(|i, j| {
        let d = pos[i] - pos[j];
        let r2 = d.norm_squared();
        if r2 <= r2max {
            let w = (-beta * r2).exp();
            rho[i] = rho[i] + w;
            rho[j] = rho[j] + w;
            let g = d * w;
            grad[i] += g;
            grad[j] -= g;
        }
    });
    let scale = k.peak() * ps.mass();
    let gscale = -T::two() * beta * scale;
    ParticleDensities {
        rho: rho.into_iter().map(|r| r * scale).collect(),
        grad: grad.into_iter().map(|g| g * gscale).collect(),
    }
}
