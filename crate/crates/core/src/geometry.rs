//! Analytic domains, boundary patches and the boundary-layer cells used by the
//! projection step.
//!
//! All three shapes are convex, so the nearest-point projection is unique and
//! never needs a tie-break; `project` is a plain clamp in the shape's natural
//! coordinates.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::{Real, Vec3};

/// Radial/axial decomposition of `x` relative to an axis through `base`.
/// Returns the axial coordinate and the radial offset vector.
#[inline]
fn axial_split<T: Real>(base: Vec3<T>, axis: Vec3<T>, x: Vec3<T>) -> (T, Vec3<T>) {
    let d = x - base;
    let h = d.dot(axis);
    (h, d - axis * h)
}

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
pub fn orthonormal_frame<T: Real>(axis: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    // Pick the coordinate axis least aligned with `axis`; first index wins ties.
    let mut k = 0;
    for i in 1..3 {
        if axis[i].abs() < axis[k].abs() {
            k = i;
        }
    }
    let e1 = axis.cross(Vec3::unit(k)).normalized();
    let e2 = axis.cross(e1);
    (e1, e2)
}

/// The analytic shapes a [`Domain`] can take.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape<T> {
    Sphere {
        center: Vec3<T>,
        radius: T,
    },
    Box {
        min: Vec3<T>,
        max: Vec3<T>,
    },
    /// Solid circular cylinder from `base` to `base + length * axis`.
    Cylinder {
        base: Vec3<T>,
        axis: Vec3<T>,
        length: T,
        radius: T,
    },
}

/// A closed region of space with distance and projection queries.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain<T> {
    shape: Shape<T>,
}

impl<T: Real> Domain<T> {
    pub fn sphere(center: Vec3<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidGeometry(format!(
                "sphere radius {radius} must be positive"
            )));
        }
        Ok(Self {
            shape: Shape::Sphere { center, radius },
        })
    }

    pub fn aabb(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        if (0..3).any(|i| !(max[i] > min[i])) {
            return Err(Error::InvalidGeometry(format!(
                "box max {max:?} must exceed min {min:?} componentwise"
            )));
        }
        Ok(Self {
            shape: Shape::Box { min, max },
        })
    }

    pub fn cylinder(base: Vec3<T>, axis: Vec3<T>, length: T, radius: T) -> Result<Self> {
        let n = axis.norm();
        if !(n > T::zero()) || !(length > T::zero()) || !(radius > T::zero()) {
            return Err(Error::InvalidGeometry(format!(
                "cylinder needs a nonzero axis and positive length/radius (got L={length}, R={radius})"
            )));
        }
        Ok(Self {
            shape: Shape::Cylinder {
                base,
                axis: axis / n,
                length,
                radius,
            },
        })
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    /// Spatial dimension. Every supported shape is three-dimensional.
    pub fn dimension(&self) -> usize {
        3
    }

    /// Membership predicate; agrees exactly with `dist(x) == 0`.
    pub fn contains(&self, x: Vec3<T>) -> bool {
        match self.shape {
            Shape::Sphere { center, radius } => (x - center).norm() <= radius,
            Shape::Box { min, max } => (0..3).all(|i| x[i] >= min[i] && x[i] <= max[i]),
            Shape::Cylinder {
                base,
                axis,
                length,
                radius,
            } => {
                let (h, r) = axial_split(base, axis, x);
                h >= T::zero() && h <= length && r.norm() <= radius
            }
        }
    }

    /// Euclidean distance from `x` to the domain; zero inside.
    pub fn dist(&self, x: Vec3<T>) -> T {
        let zero = T::zero();
        match self.shape {
            Shape::Sphere { center, radius } => ((x - center).norm() - radius).max(zero),
            Shape::Box { min, max } => {
                let gap = (min - x).max(x - max).max(Vec3::zero());
                gap.norm()
            }
            Shape::Cylinder {
                base,
                axis,
                length,
                radius,
            } => {
                let (h, r) = axial_split(base, axis, x);
                let dh = (-h).max(h - length).max(zero);
                let dr = (r.norm() - radius).max(zero);
                (dh * dh + dr * dr).sqrt()
            }
        }
    }

    /// Nearest point of the domain; the identity on the domain.
    pub fn project(&self, x: Vec3<T>) -> Vec3<T> {
        match self.shape {
            Shape::Sphere { center, radius } => {
                let d = x - center;
                let r = d.norm();
                if r <= radius {
                    x
                } else {
                    center + d * (radius / r)
                }
            }
            Shape::Box { min, max } => {
                if self.contains(x) {
                    x
                } else {
                    x.max(min).min(max)
                }
            }
            Shape::Cylinder {
                base,
                axis,
                length,
                radius,
            } => {
                let (h, r) = axial_split(base, axis, x);
                let rn = r.norm();
                let inside_h = h >= T::zero() && h <= length;
                if inside_h && rn <= radius {
                    return x;
                }
                let hc = h.max(T::zero()).min(length);
                let rc = if rn > radius { r * (radius / rn) } else { r };
                base + axis * hc + rc
            }
        }
    }

    pub fn volume(&self) -> T {
        match self.shape {
            Shape::Sphere { radius, .. } => T::lit(4.0 / 3.0) * T::PI() * radius.powi(3),
            Shape::Box { min, max } => {
                let e = max - min;
                e[0] * e[1] * e[2]
            }
            Shape::Cylinder { length, radius, .. } => T::PI() * radius * radius * length,
        }
    }

    pub fn surface_area(&self) -> T {
        let two = T::two();
        match self.shape {
            Shape::Sphere { radius, .. } => T::lit(4.0) * T::PI() * radius * radius,
            Shape::Box { min, max } => {
                let e = max - min;
                two * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2])
            }
            Shape::Cylinder { length, radius, .. } => {
                two * T::PI() * radius * length + two * T::PI() * radius * radius
            }
        }
    }

    /// Radius of the largest inscribed ball.
    pub fn inradius(&self) -> T {
        match self.shape {
            Shape::Sphere { radius, .. } => radius,
            Shape::Box { min, max } => {
                let e = (max - min) * T::half();
                e[0].min(e[1]).min(e[2])
            }
            Shape::Cylinder { length, radius, .. } => radius.min(length * T::half()),
        }
    }

    /// Largest distance between two points of the domain.
    pub fn diameter(&self) -> T {
        match self.shape {
            Shape::Sphere { radius, .. } => T::two() * radius,
            Shape::Box { min, max } => (max - min).norm(),
            Shape::Cylinder { length, radius, .. } => {
                (length * length + T::lit(4.0) * radius * radius).sqrt()
            }
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3<T>, Vec3<T>) {
        match self.shape {
            Shape::Sphere { center, radius } => {
                (center - Vec3::splat(radius), center + Vec3::splat(radius))
            }
            Shape::Box { min, max } => (min, max),
            Shape::Cylinder {
                base,
                axis,
                length,
                radius,
            } => {
                let top = base + axis * length;
                // Extent of a disc of radius R with normal a along axis i is R*sqrt(1 - a_i^2).
                let ext = axis.map(|a| radius * (T::one() - a * a).max(T::zero()).sqrt());
                (base.min(top) - ext, base.max(top) + ext)
            }
        }
    }

    pub fn centroid(&self) -> Vec3<T> {
        match self.shape {
            Shape::Sphere { center, .. } => center,
            Shape::Box { min, max } => (min + max) * T::half(),
            Shape::Cylinder {
                base, axis, length, ..
            } => base + axis * (length * T::half()),
        }
    }

    /// The same shape grown outward by `by` over the given surfaces. Used to
    /// place the penalty barrier behind Dirichlet layers.
    fn extended(&self, surfaces: &[&Surface<T>], by: T) -> Result<Self> {
        if surfaces.is_empty() {
            return Ok(self.clone());
        }
        match self.shape {
            Shape::Sphere { center, radius } => Self::sphere(center, radius + by),
            Shape::Box { mut min, mut max } => {
                for s in surfaces {
                    match s {
                        Surface::BoxFace { axis, upper: false } => min[*axis] = min[*axis] - by,
                        Surface::BoxFace { axis, upper: true } => max[*axis] = max[*axis] + by,
                        other => {
                            return Err(Error::InvalidGeometry(format!(
                                "surface {other:?} does not belong to a box"
                            )))
                        }
                    }
                }
                Self::aabb(min, max)
            }
            Shape::Cylinder {
                mut base,
                axis,
                mut length,
                mut radius,
            } => {
                for s in surfaces {
                    match s {
                        Surface::CylinderLateral => radius = self.cyl_radius() + by,
                        Surface::CapDisc { top, radius: r } if *r == self.cyl_radius() => {
                            length = length + by;
                            if !*top {
                                base -= axis * by;
                            }
                        }
                        other => {
                            return Err(Error::InvalidGeometry(format!(
                                "cannot extend the barrier over partial cap {other:?}"
                            )))
                        }
                    }
                }
                Self::cylinder(base, axis, length, radius)
            }
        }
    }

    fn cyl_radius(&self) -> T {
        match self.shape {
            Shape::Cylinder { radius, .. } => radius,
            _ => T::nan(),
        }
    }
}

/// Analytic descriptor of one boundary patch.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface<T> {
    /// The full surface of a sphere.
    SphereShell,
    /// The box face normal to `axis`, at `max` when `upper`, at `min` otherwise.
    BoxFace { axis: usize, upper: bool },
    /// The curved side of a cylinder.
    CylinderLateral,
    /// Central disc of an end cap (at `base + length*axis` when `top`).
    CapDisc { top: bool, radius: T },
    /// Annulus of an end cap between `inner` and the cylinder radius.
    CapAnnulus { top: bool, inner: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatchKind {
    Dirichlet,
    Neumann,
    Wall,
}

impl PatchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatchKind::Dirichlet => "dirichlet",
            PatchKind::Neumann => "neumann",
            PatchKind::Wall => "wall",
        }
    }
}

/// One element of the boundary partition.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPatch<T> {
    pub id: usize,
    pub surface: Surface<T>,
    pub area: T,
    pub kind: PatchKind,
}

impl<T: Real> BoundaryPatch<T> {
    pub fn new(
        id: usize,
        surface: Surface<T>,
        kind: PatchKind,
        domain: &Domain<T>,
    ) -> Result<Self> {
        let pi = T::PI();
        let area = match (&surface, domain.shape()) {
            (Surface::SphereShell, Shape::Sphere { radius, .. }) => {
                T::lit(4.0) * pi * *radius * *radius
            }
            (Surface::BoxFace { axis, upper: _ }, Shape::Box { min, max }) if *axis < 3 => {
                let e = *max - *min;
                e[(axis + 1) % 3] * e[(axis + 2) % 3]
            }
            (Surface::CylinderLateral, Shape::Cylinder { length, radius, .. }) => {
                T::two() * pi * *radius * *length
            }
            (Surface::CapDisc { radius: r, .. }, Shape::Cylinder { radius, .. })
                if *r > T::zero() && *r <= *radius =>
            {
                pi * *r * *r
            }
            (Surface::CapAnnulus { inner, .. }, Shape::Cylinder { radius, .. })
                if *inner > T::zero() && *inner < *radius =>
            {
                pi * (*radius * *radius - *inner * *inner)
            }
            (s, shape) => {
                return Err(Error::InvalidGeometry(format!(
                    "surface {s:?} is not a valid patch of {shape:?}"
                )))
            }
        };
        Ok(Self {
            id,
            surface,
            area,
            kind,
        })
    }

    /// Outward unit normal at a point of the patch.
    pub fn normal(&self, domain: &Domain<T>, x: Vec3<T>) -> Vec3<T> {
        match (&self.surface, domain.shape()) {
            (Surface::SphereShell, Shape::Sphere { center, .. }) => (x - *center).normalized(),
            (Surface::BoxFace { axis, upper }, _) => {
                let n = Vec3::unit(*axis);
                if *upper {
                    n
                } else {
                    -n
                }
            }
            (Surface::CylinderLateral, Shape::Cylinder { base, axis, .. }) => {
                axial_split(*base, *axis, x).1.normalized()
            }
            (
                Surface::CapDisc { top, .. } | Surface::CapAnnulus { top, .. },
                Shape::Cylinder { axis, .. },
            ) => {
                if *top {
                    *axis
                } else {
                    -*axis
                }
            }
            _ => Vec3::splat(T::nan()),
        }
    }

    /// Calls `f(point, weight)` for the nodes of a tensor-product midpoint
    /// rule with `res` nodes per parametric direction. Weights sum to the
    /// patch area up to the rule's discretization error.
    fn for_each_node(&self, domain: &Domain<T>, res: usize, mut f: impl FnMut(Vec3<T>, T)) {
        let nf = T::lit(res as f64);
        let mid = |i: usize| (T::lit(i as f64) + T::half()) / nf;
        let two_pi = T::two() * T::PI();
        match (&self.surface, domain.shape()) {
            (Surface::SphereShell, Shape::Sphere { center, radius }) => {
                for i in 0..res {
                    let theta = T::PI() * mid(i);
                    for j in 0..res {
                        let phi = two_pi * mid(j);
                        let dir = Vec3::new(
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        );
                        let w = *radius * *radius * theta.sin() * (T::PI() / nf) * (two_pi / nf);
                        f(*center + dir * *radius, w);
                    }
                }
            }
            (Surface::BoxFace { axis, upper }, Shape::Box { min, max }) => {
                let (j, k) = ((axis + 1) % 3, (axis + 2) % 3);
                let e = *max - *min;
                let w = e[j] * e[k] / (nf * nf);
                for a in 0..res {
                    for c in 0..res {
                        let mut p = *min;
                        p[*axis] = if *upper { max[*axis] } else { min[*axis] };
                        p[j] = min[j] + e[j] * mid(a);
                        p[k] = min[k] + e[k] * mid(c);
                        f(p, w);
                    }
                }
            }
            (
                surface,
                Shape::Cylinder {
                    base,
                    axis,
                    length,
                    radius,
                },
            ) => {
                let (e1, e2) = orthonormal_frame(*axis);
                let ring =
                    |h: T, r: T, th: T| *base + *axis * h + (e1 * th.cos() + e2 * th.sin()) * r;
                match surface {
                    Surface::CylinderLateral => {
                        let w = *radius * (two_pi / nf) * (*length / nf);
                        for a in 0..res {
                            for c in 0..res {
                                f(ring(*length * mid(a), *radius, two_pi * mid(c)), w);
                            }
                        }
                    }
                    Surface::CapDisc { top, radius: r } | Surface::CapAnnulus { top, inner: r } => {
                        let (r0, r1) = match surface {
                            Surface::CapDisc { .. } => (T::zero(), *r),
                            _ => (*r, *radius),
                        };
                        let h = if *top { *length } else { T::zero() };
                        let dr = (r1 - r0) / nf;
                        for a in 0..res {
                            let rr = r0 + (r1 - r0) * mid(a);
                            for c in 0..res {
                                f(ring(h, rr, two_pi * mid(c)), rr * dr * (two_pi / nf));
                            }
                        }
                    }
                    _ => {}
                }
            }
            _ => {}
        }
    }

    /// Surface integral of `g` over the patch by tensor-product midpoint quadrature.
    pub fn integrate(&self, domain: &Domain<T>, res: usize, g: impl Fn(Vec3<T>) -> T) -> T {
        let mut acc = T::zero();
        self.for_each_node(domain, res, |p, w| acc = acc + g(p) * w);
        acc
    }

    /// Uniformly distributed point on the patch.
    pub fn sample_point<R: Rng + ?Sized>(&self, domain: &Domain<T>, rng: &mut R) -> Vec3<T> {
        let u = |rng: &mut R| T::lit(rng.random::<f64>());
        let two_pi = T::two() * T::PI();
        match (&self.surface, domain.shape()) {
            (Surface::SphereShell, Shape::Sphere { center, radius }) => {
                let d: [f64; 3] = UnitSphere.sample(rng);
                *center + Vec3::from_f64(d) * *radius
            }
            (Surface::BoxFace { axis, upper }, Shape::Box { min, max }) => {
                let w = Vec3::new(u(rng), u(rng), u(rng));
                let mut p = *min + (*max - *min).zip(w, |e, f| e * f);
                p[*axis] = if *upper { max[*axis] } else { min[*axis] };
                p
            }
            (
                surface,
                Shape::Cylinder {
                    base,
                    axis,
                    length,
                    radius,
                },
            ) => {
                let (e1, e2) = orthonormal_frame(*axis);
                let th = two_pi * u(rng);
                let dir = e1 * th.cos() + e2 * th.sin();
                match surface {
                    Surface::CylinderLateral => *base + *axis * (*length * u(rng)) + dir * *radius,
                    Surface::CapDisc { top, radius: r } | Surface::CapAnnulus { top, inner: r } => {
                        let (r0, r1) = match surface {
                            Surface::CapDisc { .. } => (T::zero(), *r),
                            _ => (*r, *radius),
                        };
                        let rr = (r0 * r0 + (r1 * r1 - r0 * r0) * u(rng)).sqrt();
                        let h = if *top { *length } else { T::zero() };
                        *base + *axis * h + dir * rr
                    }
                    _ => domain.centroid(),
                }
            }
            _ => domain.centroid(),
        }
    }
}

/// Checks that `patches` partition the boundary of `domain`: unique ids,
/// surfaces of the right shape, no duplicates, and areas summing to the
/// analytic surface area.
pub fn validate_partition<T: Real>(domain: &Domain<T>, patches: &[BoundaryPatch<T>]) -> Result<()> {
    for (i, p) in patches.iter().enumerate() {
        if patches[..i].iter().any(|q| q.id == p.id) {
            return Err(Error::InvalidGeometry(format!(
                "duplicate patch id {}",
                p.id
            )));
        }
        if patches[..i].iter().any(|q| q.surface == p.surface) {
            return Err(Error::InvalidGeometry(format!(
                "patch {} repeats a surface",
                p.id
            )));
        }
        // Re-derive the area; this also checks the surface matches the shape.
        let fresh = BoundaryPatch::new(p.id, p.surface.clone(), p.kind, domain)?;
        if fresh.area != p.area {
            return Err(Error::InvalidGeometry(format!(
                "patch {} has a stale area",
                p.id
            )));
        }
    }
    if let Shape::Cylinder { radius, .. } = domain.shape() {
        for end in [false, true] {
            let disc = patches.iter().find_map(|p| match p.surface {
                Surface::CapDisc { top, radius } if top == end => Some(radius),
                _ => None,
            });
            let annulus = patches.iter().find_map(|p| match p.surface {
                Surface::CapAnnulus { top, inner } if top == end => Some(inner),
                _ => None,
            });
            let ok = match (disc, annulus) {
                (Some(r), None) => r == *radius,
                (Some(r), Some(inner)) => r == inner,
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidGeometry(format!(
                    "{} cap is not covered by a disc (plus matching annulus)",
                    if end { "top" } else { "base" }
                )));
            }
        }
    }
    let total: T = patches.iter().map(|p| p.area).sum();
    let expected = domain.surface_area();
    if ((total - expected) / expected).abs() > T::epsilon() * T::lit(64.0) {
        return Err(Error::InvalidGeometry(format!(
            "patch areas sum to {total}, boundary area is {expected}"
        )));
    }
    Ok(())
}

/// Interval of a coordinate with per-end openness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
    pub lo_open: bool,
    pub hi_open: bool,
}

impl<T: Real> Interval<T> {
    pub fn closed(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            lo_open: false,
            hi_open: false,
        }
    }

    /// `(lo, hi]`
    pub fn open_closed(lo: T, hi: T) -> Self {
        Self {
            lo_open: true,
            ..Self::closed(lo, hi)
        }
    }

    /// `[lo, hi)`
    pub fn closed_open(lo: T, hi: T) -> Self {
        Self {
            hi_open: true,
            ..Self::closed(lo, hi)
        }
    }

    #[inline]
    pub fn contains(&self, v: T) -> bool {
        let above = if self.lo_open {
            v > self.lo
        } else {
            v >= self.lo
        };
        let below = if self.hi_open {
            v < self.hi
        } else {
            v <= self.hi
        };
        above && below
    }

    pub fn len(&self) -> T {
        self.hi - self.lo
    }
}

/// A sampleable volume: one half of a boundary-layer cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Region<T> {
    /// Points whose distance from `center` lies in `radial`.
    Shell {
        center: Vec3<T>,
        radial: Interval<T>,
    },
    /// Axis-aligned box with per-axis intervals.
    Slab { axes: [Interval<T>; 3] },
    /// Cylindrical coordinates about an axis through `base`.
    Sector {
        base: Vec3<T>,
        axis: Vec3<T>,
        radial: Interval<T>,
        axial: Interval<T>,
    },
}

impl<T: Real> Region<T> {
    pub fn contains(&self, x: Vec3<T>) -> bool {
        match self {
            Region::Shell { center, radial } => radial.contains((x - *center).norm()),
            Region::Slab { axes } => (0..3).all(|i| axes[i].contains(x[i])),
            Region::Sector {
                base,
                axis,
                radial,
                axial,
            } => {
                let (h, r) = axial_split(*base, *axis, x);
                axial.contains(h) && radial.contains(r.norm())
            }
        }
    }

    /// Exact volume (curvature included).
    pub fn volume(&self) -> T {
        match self {
            Region::Shell { radial, .. } => {
                T::lit(4.0 / 3.0) * T::PI() * (radial.hi.powi(3) - radial.lo.powi(3))
            }
            Region::Slab { axes } => axes.iter().map(Interval::len).fold(T::one(), |a, b| a * b),
            Region::Sector { radial, axial, .. } => {
                T::PI() * (radial.hi * radial.hi - radial.lo * radial.lo) * axial.len()
            }
        }
    }

    /// Uniform sample by inverse-CDF in the region's natural coordinates.
    /// Draws that land exactly on an open face through rounding are redrawn,
    /// so the acceptance rate is one up to floating-point ties.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3<T>> {
        if !(self.volume() > T::zero()) {
            return Err(Error::DegenerateRegion);
        }
        let u = |rng: &mut R| T::lit(rng.random::<f64>());
        for _ in 0..1000 {
            let p = match self {
                Region::Shell { center, radial } => {
                    let (a, b) = (radial.lo.powi(3), radial.hi.powi(3));
                    let r = (a + (b - a) * u(rng)).cbrt();
                    let d: [f64; 3] = UnitSphere.sample(rng);
                    *center + Vec3::from_f64(d) * r
                }
                Region::Slab { axes } => {
                    Vec3(std::array::from_fn(|i| axes[i].lo + axes[i].len() * u(rng)))
                }
                Region::Sector {
                    base,
                    axis,
                    radial,
                    axial,
                } => {
                    let (e1, e2) = orthonormal_frame(*axis);
                    let (a, b) = (radial.lo * radial.lo, radial.hi * radial.hi);
                    let r = (a + (b - a) * u(rng)).sqrt();
                    let th = T::two() * T::PI() * u(rng);
                    let h = axial.lo + axial.len() * u(rng);
                    *base + *axis * h + (e1 * th.cos() + e2 * th.sin()) * r
                }
            };
            if self.contains(p) {
                return Ok(p);
            }
        }
        Err(Error::DegenerateRegion)
    }
}

/// The two halves of the boundary layer over one patch.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLayerCell<T> {
    pub patch_id: usize,
    /// Half-thickness of the layer.
    pub b: T,
    /// `A_l x [-b, 0]`, inside the domain.
    pub interior: Region<T>,
    /// `A_l x (0, b]`, outside the domain.
    pub exterior: Region<T>,
}

fn patch_feature_size<T: Real>(patch: &BoundaryPatch<T>, domain: &Domain<T>) -> T {
    match (&patch.surface, domain.shape()) {
        (Surface::BoxFace { axis, .. }, Shape::Box { min, max }) => {
            let e = *max - *min;
            e[(axis + 1) % 3].min(e[(axis + 2) % 3])
        }
        (Surface::CapDisc { radius, .. }, _) => *radius,
        (Surface::CapAnnulus { inner, .. }, Shape::Cylinder { radius, .. }) => *radius - *inner,
        _ => domain.inradius(),
    }
}

/// Builds one boundary-layer cell of half-thickness `b` per patch.
pub fn build_layers<T: Real>(
    domain: &Domain<T>,
    patches: &[BoundaryPatch<T>],
    b: T,
) -> Result<Vec<BoundaryLayerCell<T>>> {
    if !(b > T::zero()) {
        return Err(Error::InvalidParams(format!(
            "layer thickness b = {b} must be positive"
        )));
    }
    let inradius = domain.inradius();
    if b >= inradius {
        return Err(Error::LayerTooThick {
            b: b.as_f64(),
            inradius: inradius.as_f64(),
        });
    }
    patches
        .iter()
        .map(|patch| {
            if b > patch_feature_size(patch, domain) {
                warn!("layer thickness {b} exceeds the size of patch {}", patch.id);
            }
            let (interior, exterior) = match (&patch.surface, domain.shape()) {
                (Surface::SphereShell, Shape::Sphere { center, radius }) => (
                    Region::Shell {
                        center: *center,
                        radial: Interval::closed(*radius - b, *radius),
                    },
                    Region::Shell {
                        center: *center,
                        radial: Interval::open_closed(*radius, *radius + b),
                    },
                ),
                (Surface::BoxFace { axis, upper }, Shape::Box { min, max }) => {
                    let full: [Interval<T>; 3] =
                        std::array::from_fn(|i| Interval::closed(min[i], max[i]));
                    let (mut inner, mut outer) = (full, full);
                    let a = *axis;
                    if *upper {
                        inner[a] = Interval::closed(max[a] - b, max[a]);
                        outer[a] = Interval::open_closed(max[a], max[a] + b);
                    } else {
                        inner[a] = Interval::closed(min[a], min[a] + b);
                        outer[a] = Interval::closed_open(min[a] - b, min[a]);
                    }
                    (Region::Slab { axes: inner }, Region::Slab { axes: outer })
                }
                (
                    surface,
                    Shape::Cylinder {
                        base,
                        axis,
                        length,
                        radius,
                    },
                ) => {
                    let sector = |radial, axial| Region::Sector {
                        base: *base,
                        axis: *axis,
                        radial,
                        axial,
                    };
                    let zero = T::zero();
                    match surface {
                        Surface::CylinderLateral => (
                            sector(
                                Interval::closed(*radius - b, *radius),
                                Interval::closed(zero, *length),
                            ),
                            sector(
                                Interval::open_closed(*radius, *radius + b),
                                Interval::closed(zero, *length),
                            ),
                        ),
                        Surface::CapDisc { top, .. } | Surface::CapAnnulus { top, .. } => {
                            let radial = match surface {
                                Surface::CapDisc { radius: r, .. } => Interval::closed(zero, *r),
                                Surface::CapAnnulus { inner, .. } => {
                                    Interval::open_closed(*inner, *radius)
                                }
                                _ => unreachable!(),
                            };
                            if *top {
                                (
                                    sector(radial, Interval::closed(*length - b, *length)),
                                    sector(radial, Interval::open_closed(*length, *length + b)),
                                )
                            } else {
                                (
                                    sector(radial, Interval::closed(zero, b)),
                                    sector(radial, Interval::closed_open(-b, zero)),
                                )
                            }
                        }
                        other => {
                            return Err(Error::InvalidGeometry(format!(
                                "surface {other:?} is not a cylinder patch"
                            )))
                        }
                    }
                }
                (s, shape) => {
                    return Err(Error::InvalidGeometry(format!(
                        "surface {s:?} is not a valid patch of {shape:?}"
                    )))
                }
            };
            Ok(BoundaryLayerCell {
                patch_id: patch.id,
                b,
                interior,
                exterior,
            })
        })
        .collect()
}

/// The region confining particles through the penalty potential: the domain
/// grown by `b` over its Dirichlet patches, and the domain itself elsewhere.
pub fn penalty_domain<T: Real>(
    domain: &Domain<T>,
    patches: &[BoundaryPatch<T>],
    b: T,
) -> Result<Domain<T>> {
    let dirichlet: Vec<&Surface<T>> = patches
        .iter()
        .filter(|p| p.kind == PatchKind::Dirichlet)
        .map(|p| &p.surface)
        .collect();
    domain.extended(&dirichlet, b)
}
