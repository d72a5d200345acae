//! Projection step: restoring Dirichlet and Neumann conditions by inserting
//! and removing particles in the boundary layer.

use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blobs::ParticleSet;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryLayerCell, BoundaryPatch, Domain, PatchKind};
use crate::{Real, Vec3};

/// Nodes per parametric direction for patch quadrature of varying data.
const QUADRATURE_NODES: usize = 64;

/// Boundary data: a constant, or a function of position and time.
#[derive(Clone)]
pub enum Profile<T> {
    Constant(T),
    Field(Arc<dyn Fn(Vec3<T>, T) -> T + Send + Sync>),
}

impl<T: Real> Profile<T> {
    pub fn eval(&self, x: Vec3<T>, t: T) -> T {
        match self {
            Profile::Constant(v) => *v,
            Profile::Field(f) => f(x, t),
        }
    }

    /// `int_A g(x, t) dA` over the patch.
    pub fn integrate(&self, patch: &BoundaryPatch<T>, domain: &Domain<T>, t: T) -> T {
        match self {
            Profile::Constant(v) => *v * patch.area,
            Profile::Field(f) => patch.integrate(domain, QUADRATURE_NODES, |x| f(x, t)),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Profile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Profile::Field(_) => f.write_str("Field(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Condition<T> {
    /// Prescribed density `g >= 0`.
    Dirichlet(Profile<T>),
    /// Prescribed normal flux (mass/area/time), positive into the domain.
    Neumann(Profile<T>),
    /// Impermeable; enforced by the barrier alone.
    Wall,
}

impl<T> Condition<T> {
    pub fn kind(&self) -> PatchKind {
        match self {
            Condition::Dirichlet(_) => PatchKind::Dirichlet,
            Condition::Neumann(_) => PatchKind::Neumann,
            Condition::Wall => PatchKind::Wall,
        }
    }
}

/// Layer mass a Dirichlet corrector aims for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletTarget {
    /// `b * int_A g dA`, the flat-layer formula.
    #[default]
    AreaTimesB,
    /// `int_A g dA * |B_int| / |A|`: the same integral weighted by the exact
    /// volume of the interior layer, which differs from `b |A|` on curved
    /// patches.
    LayerVolume,
}

/// How Neumann corrections round to whole particles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NeumannPolicy {
    /// Carry the sub-particle part of each step's flux to the next step.
    pub carry_remainder: bool,
    /// Remove particles owed from starved steps once residents reappear.
    pub carry_deficit: bool,
    /// Consecutive starved steps tolerated before failing.
    pub starvation_limit: Option<usize>,
}

impl Default for NeumannPolicy {
    fn default() -> Self {
        Self {
            carry_remainder: true,
            carry_deficit: true,
            starvation_limit: None,
        }
    }
}

/// Condition, layer cell and bookkeeping for one boundary patch.
#[derive(Clone, Debug)]
pub struct BoundaryCondition<T> {
    pub patch: BoundaryPatch<T>,
    pub condition: Condition<T>,
    pub cell: BoundaryLayerCell<T>,
    pub policy: NeumannPolicy,
    pub target: DirichletTarget,
    /// Upper bound on the density a Dirichlet target may demand in its layer.
    pub density_ceiling: Option<T>,
    /// Flux mass not yet turned into particles; `|mass_remainder| < m_p`.
    pub mass_remainder: T,
    /// Removals owed because the layer ran dry.
    pub deficit: usize,
    starved_steps: usize,
}

impl<T: Real> BoundaryCondition<T> {
    pub fn new(
        patch: BoundaryPatch<T>,
        condition: Condition<T>,
        cell: BoundaryLayerCell<T>,
    ) -> Result<Self> {
        if cell.patch_id != patch.id {
            return Err(Error::InvalidParams(format!(
                "layer cell of patch {} attached to patch {}",
                cell.patch_id, patch.id
            )));
        }
        if let Condition::Dirichlet(Profile::Constant(g)) = &condition {
            if *g < T::zero() {
                return Err(Error::InvalidParams(format!(
                    "Dirichlet density {g} is negative"
                )));
            }
        }
        Ok(Self {
            patch,
            condition,
            cell,
            policy: NeumannPolicy::default(),
            target: DirichletTarget::default(),
            density_ceiling: None,
            mass_remainder: T::zero(),
            deficit: 0,
            starved_steps: 0,
        })
    }

    pub fn with_policy(mut self, policy: NeumannPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_target(mut self, target: DirichletTarget) -> Self {
        self.target = target;
        self
    }

    pub fn with_density_ceiling(mut self, ceiling: Option<T>) -> Self {
        self.density_ceiling = ceiling;
        self
    }

    pub fn kind(&self) -> PatchKind {
        self.condition.kind()
    }

    /// Indices of particles inside the interior half of the layer.
    pub fn residents(&self, ps: &ParticleSet<T>) -> Vec<usize> {
        ps.positions()
            .iter()
            .enumerate()
            .filter(|(_, &x)| self.cell.interior.contains(x))
            .map(|(i, _)| i)
            .collect()
    }
}

/// One line of the corrector log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrectorRecord {
    pub patch_id: usize,
    pub kind: PatchKind,
    /// Dirichlet: particles required in the layer. Neumann: signed particle
    /// flux requested this step (owed removals included).
    pub target_count: i64,
    /// Residents of the interior layer before correction.
    pub actual_count: usize,
    pub inserted: usize,
    pub removed: usize,
}

/// Target layer mass, `b * int_A g(x, t) dA` by default.
pub fn dirichlet_target<T: Real>(bc: &BoundaryCondition<T>, domain: &Domain<T>, t: T) -> Result<T> {
    match &bc.condition {
        Condition::Dirichlet(g) => {
            let depth = match bc.target {
                DirichletTarget::AreaTimesB => bc.cell.b,
                DirichletTarget::LayerVolume => bc.cell.interior.volume() / bc.patch.area,
            };
            Ok(depth * g.integrate(&bc.patch, domain, t))
        }
        other => Err(Error::InvalidParams(format!(
            "patch {} is {:?}, not Dirichlet",
            bc.patch.id,
            other.kind()
        ))),
    }
}

fn floor_count<T: Real>(mass: T, m_p: T) -> usize {
    // A hair of slack so exact multiples are not lost to rounding.
    let q = mass / m_p;
    let f = q.floor();
    let f = if q - f > T::one() - T::epsilon() * T::lit(8.0) {
        f + T::one()
    } else {
        f
    };
    f.max(T::zero()).to_usize().unwrap_or(0)
}

fn insert_into<T: Real, R: Rng + ?Sized>(
    ps: &mut ParticleSet<T>,
    bc: &BoundaryCondition<T>,
    count: usize,
    t: T,
    rng: &mut R,
) -> Result<()> {
    for _ in 0..count {
        let x = bc.cell.interior.sample(rng)?;
        ps.push(x, t);
    }
    Ok(())
}

fn remove_from<T: Real, R: Rng + ?Sized>(
    ps: &mut ParticleSet<T>,
    residents: &[usize],
    count: usize,
    rng: &mut R,
) {
    let chosen: Vec<usize> = index::sample(rng, residents.len(), count)
        .into_iter()
        .map(|k| residents[k])
        .collect();
    ps.remove(&chosen);
}

/// Sets the population of the interior layer to `floor(target / m_p)` by
/// random insertion or removal; the exterior buffer is left alone.
pub fn dirichlet_correct<T: Real, R: Rng + ?Sized>(
    ps: &mut ParticleSet<T>,
    bc: &BoundaryCondition<T>,
    domain: &Domain<T>,
    t: T,
    rng: &mut R,
) -> Result<CorrectorRecord> {
    let target = dirichlet_target(bc, domain, t)?;
    let wanted = floor_count(target, ps.mass());
    if let Some(ceiling) = bc.density_ceiling {
        let density = T::lit(wanted as f64) * ps.mass() / bc.cell.interior.volume();
        if density > ceiling {
            return Err(Error::DensityCeiling {
                patch_id: bc.patch.id,
                density: density.as_f64(),
                ceiling: ceiling.as_f64(),
            });
        }
    }
    let residents = bc.residents(ps);
    let have = residents.len();
    let mut rec = CorrectorRecord {
        patch_id: bc.patch.id,
        kind: PatchKind::Dirichlet,
        target_count: wanted as i64,
        actual_count: have,
        inserted: 0,
        removed: 0,
    };
    if have < wanted {
        rec.inserted = wanted - have;
        insert_into(ps, bc, rec.inserted, t, rng)?;
    } else if have > wanted {
        rec.removed = have - wanted;
        remove_from(ps, &residents, rec.removed, rng);
    }
    Ok(rec)
}

/// Mass entering through the patch over `[t0, t1]`, `int int f dA dt`
/// (midpoint rule in time).
pub fn neumann_target<T: Real>(
    bc: &BoundaryCondition<T>,
    domain: &Domain<T>,
    t0: T,
    t1: T,
) -> Result<T> {
    match &bc.condition {
        Condition::Neumann(f) => {
            Ok(f.integrate(&bc.patch, domain, (t0 + t1) * T::half()) * (t1 - t0))
        }
        other => Err(Error::InvalidParams(format!(
            "patch {} is {:?}, not Neumann",
            bc.patch.id,
            other.kind()
        ))),
    }
}

/// Inserts (inflow) or removes (outflow) the particles carrying this step's
/// flux, inside the interior layer.
pub fn neumann_correct<T: Real, R: Rng + ?Sized>(
    ps: &mut ParticleSet<T>,
    bc: &mut BoundaryCondition<T>,
    domain: &Domain<T>,
    t0: T,
    t1: T,
    rng: &mut R,
) -> Result<CorrectorRecord> {
    let m_p = ps.mass();
    let mut delta = neumann_target(bc, domain, t0, t1)?;
    if bc.policy.carry_remainder {
        delta = delta + bc.mass_remainder;
    }
    let count = floor_count(delta.abs(), m_p);
    if bc.policy.carry_remainder {
        let moved = T::lit(count as f64) * m_p;
        bc.mass_remainder = if delta >= T::zero() {
            delta - moved
        } else {
            delta + moved
        };
    }
    let residents = bc.residents(ps);
    let mut rec = CorrectorRecord {
        patch_id: bc.patch.id,
        kind: PatchKind::Neumann,
        target_count: if delta >= T::zero() {
            count as i64
        } else {
            -(count as i64)
        },
        actual_count: residents.len(),
        inserted: 0,
        removed: 0,
    };
    if delta >= T::zero() {
        rec.inserted = count;
        insert_into(ps, bc, count, t1, rng)?;
        return Ok(rec);
    }
    let owed = count + bc.deficit;
    rec.target_count = -(owed as i64);
    rec.removed = owed.min(residents.len());
    remove_from(ps, &residents, rec.removed, rng);
    let short = owed - rec.removed;
    bc.deficit = if bc.policy.carry_deficit { short } else { 0 };
    if short > 0 {
        bc.starved_steps += 1;
        if let Some(limit) = bc.policy.starvation_limit {
            if bc.starved_steps > limit {
                return Err(Error::Starvation {
                    patch_id: bc.patch.id,
                    steps: bc.starved_steps,
                });
            }
        }
    } else {
        bc.starved_steps = 0;
    }
    Ok(rec)
}
