//! The unconstrained fractional steps: advection, sources and the explicit
//! diffusion update driven by entropic and penalty forces.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::blobs::{
    particle_densities, KernelParams, Neighborhood, ParticleDensities, ParticleSet,
};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryPatch, Domain};
use crate::{Real, Vec3};

/// Which gradient drives the diffusion update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceModel {
    /// Self term only: `-kappa * grad(rho)(x_r) / rho(x_r)`.
    #[default]
    AlgorithmOne,
    /// Exact minus-gradient of the discrete entropy `kappa * sum_p m_p log rho(x_p)`.
    FullGradient,
}

/// Numerical parameters of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimParams<T> {
    /// Diffusivity.
    pub kappa: T,
    pub dt: T,
    pub t_end: T,
    /// Penalty stiffness `C` of `Psi = C/2 dist^2`.
    pub penalty: T,
    pub beta: T,
    /// Boundary-layer half-thickness.
    pub b: T,
    /// Mean interparticle spacing used by the stability bound.
    pub spacing: T,
    pub rho_ref: T,
    pub seed: u64,
    pub force_model: ForceModel,
    /// Mass per particle.
    pub mass: T,
    /// Kernel cutoff in units of `1/sqrt(beta)`.
    pub cutoff: T,
}

impl<T: Real> SimParams<T> {
    /// Largest stable step `spacing^2 / kappa`.
    pub fn dt_stable(&self) -> T {
        self.spacing * self.spacing / self.kappa
    }

    /// Number of steps `ceil(t_end / dt)`.
    pub fn steps(&self) -> usize {
        let k = (self.t_end / self.dt).ceil();
        // Absorb rounding when t_end is an exact multiple of dt.
        let k1 = k - T::one();
        let k = if (k1 * self.dt - self.t_end).abs() <= T::epsilon() * T::lit(16.0) * self.t_end {
            k1
        } else {
            k
        };
        k.to_usize().unwrap_or(0)
    }

    pub fn kernel(&self) -> Result<KernelParams<T>> {
        KernelParams::new(self.beta, self.cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("penalty", self.penalty),
            ("beta", self.beta),
            ("b", self.b),
            ("spacing", self.spacing),
            ("rho_ref", self.rho_ref),
            ("mass", self.mass),
            ("cutoff", self.cutoff),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{name} = {v} must be positive and finite"
                )));
            }
        }
        let limit = self.dt_stable() * (T::one() + T::lit(1e-9));
        if self.dt > limit {
            return Err(Error::InvalidParams(format!(
                "dt = {} exceeds the stability bound spacing^2/kappa = {}",
                self.dt,
                self.dt_stable()
            )));
        }
        Ok(())
    }
}

/// Prescribed advection velocity `u(x, t)`.
pub trait VelocityField<T: Real>: Send + Sync {
    fn velocity(&self, x: Vec3<T>, t: T) -> Vec3<T>;

    /// Exact flow map over `[t, t + dt]`, when known.
    fn flow(&self, _x: Vec3<T>, _t: T, _dt: T) -> Option<Vec3<T>> {
        None
    }

    fn is_zero(&self) -> bool {
        false
    }
}

/// Specific source rate `s(x, t)` (1/time).
pub trait SourceField<T: Real>: Send + Sync {
    fn rate(&self, x: Vec3<T>, t: T) -> T;

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroVelocity;

impl<T: Real> VelocityField<T> for ZeroVelocity {
    fn velocity(&self, _x: Vec3<T>, _t: T) -> Vec3<T> {
        Vec3::zero()
    }

    fn flow(&self, x: Vec3<T>, _t: T, _dt: T) -> Option<Vec3<T>> {
        Some(x)
    }

    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UniformVelocity<T>(pub Vec3<T>);

impl<T: Real> VelocityField<T> for UniformVelocity<T> {
    fn velocity(&self, _x: Vec3<T>, _t: T) -> Vec3<T> {
        self.0
    }

    fn flow(&self, x: Vec3<T>, _t: T, dt: T) -> Option<Vec3<T>> {
        Some(x + self.0 * dt)
    }
}

/// Rigid rotation with angular speed `omega` about an axis through `center`.
#[derive(Clone, Copy, Debug)]
pub struct RigidRotation<T> {
    pub center: Vec3<T>,
    axis: Vec3<T>,
    pub omega: T,
}

impl<T: Real> RigidRotation<T> {
    pub fn new(center: Vec3<T>, axis: Vec3<T>, omega: T) -> Self {
        Self {
            center,
            axis: axis.normalized(),
            omega,
        }
    }
}

impl<T: Real> VelocityField<T> for RigidRotation<T> {
    fn velocity(&self, x: Vec3<T>, _t: T) -> Vec3<T> {
        self.axis.cross(x - self.center) * self.omega
    }

    fn flow(&self, x: Vec3<T>, _t: T, dt: T) -> Option<Vec3<T>> {
        // Rodrigues rotation by omega*dt.
        let v = x - self.center;
        let (s, c) = (self.omega * dt).sin_cos();
        let k = self.axis;
        let rotated = v * c + k.cross(v) * s + k * (k.dot(v) * (T::one() - c));
        Some(self.center + rotated)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroSource;

impl<T: Real> SourceField<T> for ZeroSource {
    fn rate(&self, _x: Vec3<T>, _t: T) -> T {
        T::zero()
    }

    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UniformSource<T>(pub T);

impl<T: Real> SourceField<T> for UniformSource<T> {
    fn rate(&self, _x: Vec3<T>, _t: T) -> T {
        self.0
    }

    fn is_zero(&self) -> bool {
        self.0 == T::zero()
    }
}

/// Checks `u . nu = 0` at `samples` random points of every patch.
pub fn check_tangency<T: Real, U: VelocityField<T> + ?Sized, R: Rng + ?Sized>(
    u: &U,
    domain: &Domain<T>,
    patches: &[BoundaryPatch<T>],
    t: T,
    samples: usize,
    rng: &mut R,
) -> Result<()> {
    if u.is_zero() {
        return Ok(());
    }
    let tol = T::lit(1e-8);
    for patch in patches {
        for _ in 0..samples {
            let x = patch.sample_point(domain, rng);
            let un = u.velocity(x, t).dot(patch.normal(domain, x));
            if un.abs() > tol {
                return Err(Error::InvalidParams(format!(
                    "velocity is not tangent to patch {} at {x:?} (u.n = {un})",
                    patch.id
                )));
            }
        }
    }
    Ok(())
}

/// Moves every particle along `u` over `[t, t + dt]`: the exact flow map when
/// the field provides one, forward Euler otherwise.
pub fn advect_step<T: Real, U: VelocityField<T> + ?Sized>(
    ps: &mut ParticleSet<T>,
    u: &U,
    t: T,
    dt: T,
) {
    if u.is_zero() {
        return;
    }
    for x in ps.positions_mut() {
        *x = u
            .flow(*x, t, dt)
            .unwrap_or_else(|| *x + u.velocity(*x, t) * dt);
    }
}

/// Carry-over of the source step: expected minus realized particle events,
/// accumulated over the run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SourceState<T> {
    pub discrepancy: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceOutcome {
    pub born: usize,
    pub died: usize,
}

/// Scales the local mass by `exp(s dt)` through random duplication (`s > 0`)
/// or removal (`s < 0`). Duplicates are displaced by a draw from the blob
/// profile. Whole-particle corrections keep the realized count within one
/// particle of its running expectation.
pub fn source_step<T: Real, S: SourceField<T> + ?Sized, R: Rng + ?Sized>(
    ps: &mut ParticleSet<T>,
    s: &S,
    t: T,
    dt: T,
    kernel: &KernelParams<T>,
    state: &mut SourceState<T>,
    rng: &mut R,
) -> Result<SourceOutcome> {
    if s.is_zero() || ps.is_empty() {
        return Ok(SourceOutcome::default());
    }
    // Signed per-particle event probability: growth > 0 duplicates, < 0 removes.
    let growth: Vec<f64> = ps
        .positions()
        .iter()
        .map(|&x| ((s.rate(x, t) * dt).exp() - T::one()).as_f64())
        .collect();
    if let Some(&g) = growth.iter().find(|&&g| g > 1.0) {
        return Err(Error::SourceTooStrong { growth: g });
    }
    let expected: f64 = growth.iter().sum();
    let mut dup = vec![false; ps.len()];
    let mut kill = vec![false; ps.len()];
    for (i, &g) in growth.iter().enumerate() {
        let u: f64 = rng.random();
        if g > 0.0 && u < g {
            dup[i] = true;
        } else if g < 0.0 && u < -g {
            kill[i] = true;
        }
    }
    let realized = |d: &[bool], k: &[bool]| {
        d.iter().filter(|&&b| b).count() as f64 - k.iter().filter(|&&b| b).count() as f64
    };
    let mut disc = state.discrepancy.as_f64() + expected - realized(&dup, &kill);
    // Pull the running total back within one particle of expectation.
    while disc >= 1.0 {
        let pick = pick_weighted(rng, &growth, |i| growth[i] > 0.0 && !dup[i])
            .or_else(|| pick_weighted(rng, &growth, |i| kill[i]));
        match pick {
            Some(i) if kill[i] => kill[i] = false,
            Some(i) => dup[i] = true,
            None => break,
        }
        disc -= 1.0;
    }
    while disc <= -1.0 {
        let pick = pick_weighted(rng, &growth, |i| growth[i] < 0.0 && !kill[i])
            .or_else(|| pick_weighted(rng, &growth, |i| dup[i]));
        match pick {
            Some(i) if dup[i] => dup[i] = false,
            Some(i) => kill[i] = true,
            None => break,
        }
        disc += 1.0;
    }
    state.discrepancy = T::lit(disc);

    let jitter =
        Normal::new(0.0, (0.5 / kernel.beta.as_f64()).sqrt()).expect("finite jitter scale");
    let parents: Vec<Vec3<T>> = dup
        .iter()
        .zip(ps.positions())
        .filter(|(d, _)| **d)
        .map(|(_, &x)| x)
        .collect();
    let doomed: Vec<usize> = kill
        .iter()
        .enumerate()
        .filter(|(_, k)| **k)
        .map(|(i, _)| i)
        .collect();
    ps.remove(&doomed);
    for x in &parents {
        let off = Vec3::from_f64(std::array::from_fn(|_| jitter.sample(rng)));
        ps.push(*x + off, t + dt);
    }
    Ok(SourceOutcome {
        born: parents.len(),
        died: doomed.len(),
    })
}

/// Index drawn with probability proportional to `|weights[i]|` among those
/// passing `eligible`.
fn pick_weighted<R: Rng + ?Sized>(
    rng: &mut R,
    weights: &[f64],
    eligible: impl Fn(usize) -> bool,
) -> Option<usize> {
    let total: f64 = (0..weights.len())
        .filter(|&i| eligible(i))
        .map(|i| weights[i].abs())
        .sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    let mut last = None;
    for i in (0..weights.len()).filter(|&i| eligible(i)) {
        last = Some(i);
        target -= weights[i].abs();
        if target < 0.0 {
            return Some(i);
        }
    }
    last
}

/// Entropic velocities of all particles, with the densities they were built from.
#[derive(Clone, Debug, Default)]
pub struct EntropicForces<T> {
    pub forces: Vec<Vec3<T>>,
    pub densities: ParticleDensities<T>,
}

/// Entropic force on every particle under `model`, one frozen position snapshot.
pub fn entropic_forces<T: Real, N: Neighborhood<T>>(
    ps: &ParticleSet<T>,
    k: &KernelParams<T>,
    nb: &N,
    kappa: T,
    model: ForceModel,
) -> EntropicForces<T> {
    let densities = particle_densities(ps, k, nb);
    let mut forces: Vec<Vec3<T>> = densities
        .rho
        .iter()
        .zip(&densities.grad)
        .map(|(&r, &g)| g * (-kappa / r))
        .collect();
    if model == ForceModel::FullGradient {
        // Cross term: sum_p m_p grad N(x_r - x_p) / rho(x_p).
        let pos = ps.positions();
        let rho = &densities.rho;
        let r2max = nb.radius_sq();
        let beta = k.beta;
        let mut cross = vec![Vec3::zero(); ps.len()];
        nb.for_each_pair(|i, j| {
            let d = pos[i] - pos[j];
            let r2 = d.norm_squared();
            if r2 <= r2max {
                let g = d * (-beta * r2).exp();
                cross[i] += g / rho[j];
                cross[j] -= g / rho[i];
            }
        });
        let scale = kappa * T::two() * beta * k.peak() * ps.mass();
        for (f, c) in forces.iter_mut().zip(cross) {
            *f += c * scale;
        }
    }
    EntropicForces { forces, densities }
}

/// Entropic force on particle `r` alone, evaluated point by point.
pub fn entropic_force<T: Real, N: Neighborhood<T>>(
    r: usize,
    ps: &ParticleSet<T>,
    k: &KernelParams<T>,
    nb: &N,
    kappa: T,
    model: ForceModel,
) -> Vec3<T> {
    use crate::blobs::{density_at, grad_density_at};
    let pos = ps.positions();
    let xr = pos[r];
    let mut f = grad_density_at(xr, ps, k, nb) * (-kappa / density_at(xr, ps, k, nb));
    if model == ForceModel::FullGradient {
        let r2max = nb.radius_sq();
        let mut cross = Vec3::zero();
        nb.for_each_candidate(xr, |p| {
            let d = xr - pos[p];
            let r2 = d.norm_squared();
            if p != r && r2 <= r2max {
                cross += d * ((-k.beta * r2).exp() / density_at(pos[p], ps, k, nb));
            }
        });
        f += cross * (kappa * T::two() * k.beta * k.peak() * ps.mass());
    }
    f
}

/// Gradient of the barrier `Psi = C/2 dist^2(x, confining)`.
#[inline]
pub fn penalty_force<T: Real>(x: Vec3<T>, confining: &Domain<T>, stiffness: T) -> Vec3<T> {
    (x - confining.project(x)) * stiffness
}

/// Diagnostics of one diffusion step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiffusionStats<T> {
    pub max_entropic_speed: T,
    pub max_displacement: T,
}

/// Explicit update `x_r += dt * (F_entropic(x_r) - grad Psi(x_r))` for all
/// particles from one snapshot. Aborts when any displacement exceeds the
/// diameter of the confining domain.
pub fn diffusion_step<T: Real, N: Neighborhood<T>>(
    ps: &mut ParticleSet<T>,
    params: &SimParams<T>,
    k: &KernelParams<T>,
    nb: &N,
    confining: &Domain<T>,
    time: T,
) -> Result<DiffusionStats<T>> {
    let mut stats = DiffusionStats::default();
    if ps.is_empty() {
        return Ok(stats);
    }
    let EntropicForces { forces, .. } =
        entropic_forces(ps, k, nb, params.kappa, params.force_model);
    let diameter = confining.diameter();
    let dt = params.dt;
    let moves: Vec<Vec3<T>> = ps
        .positions()
        .iter()
        .zip(&forces)
        .map(|(&x, &f)| (f - penalty_force(x, confining, params.penalty)) * dt)
        .collect();
    for (i, (m, f)) in moves.iter().zip(&forces).enumerate() {
        let len = m.norm();
        if !(len <= diameter) {
            return Err(Error::Instability {
                time: time.as_f64(),
                id: ps.ids()[i],
                displacement: len.as_f64(),
                diameter: diameter.as_f64(),
            });
        }
        stats.max_displacement = stats.max_displacement.max(len);
        stats.max_entropic_speed = stats.max_entropic_speed.max(f.norm());
    }
    for (x, m) in ps.positions_mut().iter_mut().zip(moves) {
        *x += m;
    }
    Ok(stats)
}

/// Terms of the reduced incremental functional at the current positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalTerms<T> {
    /// `sum_p kappa m_p log(rho(x_p) / rho_ref)`
    pub entropy: T,
    /// `sum_p m_p Psi(x_p)`
    pub penalty: T,
}

impl<T: Real> FunctionalTerms<T> {
    pub fn total(&self) -> T {
        self.entropy + self.penalty
    }
}

pub fn functional_terms<T: Real, N: Neighborhood<T>>(
    ps: &ParticleSet<T>,
    k: &KernelParams<T>,
    nb: &N,
    params: &SimParams<T>,
    confining: &Domain<T>,
) -> FunctionalTerms<T> {
    let rho = particle_densities(ps, k, nb).rho;
    let m = ps.mass();
    let entropy = rho
        .iter()
        .map(|&r| params.kappa * m * (r / params.rho_ref).ln())
        .sum();
    let penalty = ps
        .positions()
        .iter()
        .map(|&x| {
            let d = confining.dist(x);
            T::half() * params.penalty * d * d * m
        })
        .sum();
    FunctionalTerms { entropy, penalty }
}

/// Transport cost `sum_p m_p |x_p' - x_p|^2 / (2 dt)` between two configurations
/// of the same particles.
pub fn transport_cost<T: Real>(before: &[Vec3<T>], after: &[Vec3<T>], mass: T, dt: T) -> T {
    before
        .iter()
        .zip(after)
        .map(|(&a, &b)| (b - a).norm_squared())
        .sum::<T>()
        * mass
        / (T::two() * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blobs::AllPairs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(dt: f64, penalty: f64) -> SimParams<f64> {
        SimParams {
            kappa: 1.0,
            dt,
            t_end: 1.0,
            penalty,
            beta: 50.0,
            b: 0.1,
            spacing: 0.1,
            rho_ref: 1.0,
            seed: 0,
            force_model: ForceModel::AlgorithmOne,
            mass: 1.0,
            cutoff: 6.0,
        }
    }

    fn two_particles() -> ParticleSet<f64> {
        let mut ps = ParticleSet::new(1.0).unwrap();
        ps.push(Vec3::new(-0.05, 0.02, 0.0), 0.0);
        ps.push(Vec3::new(0.07, -0.01, 0.03), 0.0);
        ps
    }

    #[test]
    fn zero_velocity_leaves_positions() {
        let mut ps = two_particles();
        let before = ps.clone();
        advect_step(&mut ps, &ZeroVelocity, 0.0, 0.1);
        assert_eq!(ps, before);
    }

    #[test]
    fn uniform_velocity_shifts_everything() {
        let mut ps = two_particles();
        let before = ps.clone();
        advect_step(
            &mut ps,
            &UniformVelocity(Vec3::new(1.0, 0.0, 0.0)),
            0.0,
            0.1,
        );
        for (a, b) in before.positions().iter().zip(ps.positions()) {
            assert!((b.x() - a.x() - 0.1).abs() < 1e-15);
            assert_eq!((a.y(), a.z()), (b.y(), b.z()));
        }
    }

    #[test]
    fn rigid_rotation_conserves_radii() {
        let rot = RigidRotation::new(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0), 2.5);
        let mut ps = ParticleSet::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            ps.push(Vec3::new(rng.random(), rng.random(), rng.random()), 0.0);
        }
        let r0: Vec<f64> = ps.positions().iter().map(|x| x.norm()).collect();
        for k in 0..1000 {
            advect_step(&mut ps, &rot, k as f64 * 0.01, 0.01);
        }
        for (x, r) in ps.positions().iter().zip(r0) {
            assert!((x.norm() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn tangency_check_accepts_rotation_in_sphere() {
        use crate::geometry::{PatchKind, Surface};
        let d = Domain::sphere(Vec3::zero(), 1.0).unwrap();
        let patches =
            [BoundaryPatch::new(0, Surface::SphereShell, PatchKind::Dirichlet, &d).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rot = RigidRotation::new(Vec3::zero(), Vec3::new(1.0, 1.0, 0.0), 3.0);
        check_tangency(&rot, &d, &patches, 0.0, 200, &mut rng).unwrap();
        let push = UniformVelocity(Vec3::new(1.0, 0.0, 0.0));
        assert!(check_tangency(&push, &d, &patches, 0.0, 200, &mut rng).is_err());
    }

    #[test]
    fn zero_source_and_empty_set_are_noops() {
        let k = KernelParams::with_default_cutoff(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = SourceState::default();
        let mut ps = two_particles();
        let before = ps.clone();
        let out = source_step(&mut ps, &ZeroSource, 0.0, 0.1, &k, &mut st, &mut rng).unwrap();
        assert_eq!(out, SourceOutcome::default());
        assert_eq!(ps, before);
        let mut empty = ParticleSet::<f64>::new(1.0).unwrap();
        source_step(
            &mut empty,
            &UniformSource(-1.0),
            0.0,
            0.1,
            &k,
            &mut st,
            &mut rng,
        )
        .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn decay_survival_within_binomial_band() {
        let k = KernelParams::with_default_cutoff(10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 20_000;
        let mut ps = ParticleSet::new(1.0).unwrap();
        for i in 0..n {
            ps.push(Vec3::new(i as f64, 0.0, 0.0), 0.0);
        }
        let (s, dt) = (-2.0, 0.1);
        let mut st = SourceState::default();
        source_step(&mut ps, &UniformSource(s), 0.0, dt, &k, &mut st, &mut rng).unwrap();
        let p = f64::exp(s * dt);
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((ps.len() as f64 - n as f64 * p).abs() < 3.0 * sigma);
        assert!(st.discrepancy.abs() < 1.0);
    }

    #[test]
    fn growth_tracks_expectation_across_steps() {
        let k = KernelParams::with_default_cutoff(100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParticleSet::new(1.0).unwrap();
        for _ in 0..200 {
            ps.push(Vec3::zero(), 0.0);
        }
        let mut st = SourceState::default();
        let mut expected = 0.0;
        for step in 0..20 {
            let before = ps.len() as f64;
            let out = source_step(
                &mut ps,
                &UniformSource(0.5),
                step as f64 * 0.1,
                0.1,
                &k,
                &mut st,
                &mut rng,
            )
            .unwrap();
            assert_eq!(out.died, 0);
            expected += before * (f64::exp(0.05) - 1.0);
            let realized = ps.len() as f64 - 200.0;
            assert!(
                (expected - realized).abs() < 1.0,
                "step {step}: {expected} vs {realized}"
            );
        }
        assert!(ps.insert_times().iter().any(|&t| t > 0.0));
    }

    #[test]
    fn oversized_source_is_rejected() {
        let k = KernelParams::with_default_cutoff(10.0).unwrap();
        let mut ps = two_particles();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = source_step(
            &mut ps,
            &UniformSource(10.0),
            0.0,
            0.1,
            &k,
            &mut SourceState::default(),
            &mut rng,
        );
        assert!(matches!(r, Err(Error::SourceTooStrong { .. })));
    }

    #[test]
    fn isolated_particle_feels_no_entropic_force() {
        let mut ps = ParticleSet::new(0.3).unwrap();
        ps.push(Vec3::new(0.1, 0.2, 0.3), 0.0);
        let k = KernelParams::with_default_cutoff(40.0).unwrap();
        for model in [ForceModel::AlgorithmOne, ForceModel::FullGradient] {
            let f = entropic_forces(&ps, &k, &AllPairs { n: 1 }, 1.0, model).forces[0];
            assert_eq!(f, Vec3::zero());
            assert_eq!(
                entropic_force(0, &ps, &k, &AllPairs { n: 1 }, 1.0, model),
                Vec3::zero()
            );
        }
    }

    #[test]
    fn pair_forces_repel_along_the_joining_axis() {
        let ps = two_particles();
        let k = KernelParams::with_default_cutoff(50.0).unwrap();
        for model in [ForceModel::AlgorithmOne, ForceModel::FullGradient] {
            let f = entropic_forces(&ps, &k, &AllPairs { n: 2 }, 1.0, model).forces;
            assert!((f[0] + f[1]).norm() < 1e-12 * f[0].norm());
            let axis = (ps.positions()[0] - ps.positions()[1]).normalized();
            assert!(f[0].normalized().dot(axis) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn batch_and_pointwise_forces_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParticleSet::new(0.05).unwrap();
        for _ in 0..30 {
            ps.push(
                Vec3::new(rng.random(), rng.random(), rng.random()) * 0.4,
                0.0,
            );
        }
        let k = KernelParams::with_default_cutoff(60.0).unwrap();
        let nb = AllPairs { n: ps.len() };
        let batch = entropic_forces(&ps, &k, &nb, 1.3, ForceModel::FullGradient).forces;
        for (r, f) in batch.iter().enumerate() {
            let g = entropic_force(r, &ps, &k, &nb, 1.3, ForceModel::FullGradient);
            assert!((g - *f).norm() <= 1e-10 * f64::max(f.norm(), 1.0));
        }
    }

    #[test]
    fn penalty_pushes_back_toward_barrier() {
        let barrier = Domain::sphere(Vec3::zero(), 1.2924).unwrap();
        assert_eq!(
            penalty_force(Vec3::new(0.5, 0.0, 0.0), &barrier, 10.0),
            Vec3::zero()
        );
        let x = Vec3::new(0.0, 1.3924, 0.0);
        let g = penalty_force(x, &barrier, 10.0);
        assert!((g - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unit_penalty_rule_relaxes_onto_wall_in_one_step() {
        let dt = 0.01;
        let p = params(dt, 1.0 / dt);
        let barrier = Domain::aabb(Vec3::zero(), Vec3::splat(1.0)).unwrap();
        let mut ps = ParticleSet::new(1.0).unwrap();
        let depth = 0.2;
        ps.push(Vec3::new(1.0 + depth, 0.5, 0.5), 0.0);
        let k = p.kernel().unwrap();
        diffusion_step(&mut ps, &p, &k, &AllPairs { n: 1 }, &barrier, 0.0).unwrap();
        // Moves by C dt depth = depth, landing on the wall.
        assert!((ps.positions()[0].x() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diffusion_step_on_empty_set() {
        let p = params(0.01, 100.0);
        let k = p.kernel().unwrap();
        let barrier = Domain::aabb(Vec3::zero(), Vec3::splat(1.0)).unwrap();
        let mut ps = ParticleSet::new(1.0).unwrap();
        let s = diffusion_step(&mut ps, &p, &k, &AllPairs { n: 0 }, &barrier, 0.0).unwrap();
        assert_eq!(s, DiffusionStats::default());
    }

    #[test]
    fn runaway_step_is_reported() {
        let p = params(0.01, 1e6);
        let k = p.kernel().unwrap();
        let barrier = Domain::aabb(Vec3::zero(), Vec3::splat(1.0)).unwrap();
        let mut ps = ParticleSet::new(1.0).unwrap();
        ps.push(Vec3::new(3.0, 0.5, 0.5), 0.0);
        let r = diffusion_step(&mut ps, &p, &k, &AllPairs { n: 1 }, &barrier, 0.0);
        assert!(matches!(r, Err(Error::Instability { .. })));
    }

    #[test]
    fn params_validation() {
        let mut p = params(0.01, 100.0);
        p.validate().unwrap();
        p.dt = 0.011;
        assert!(p.validate().is_err());
        p.dt = 0.01;
        p.kappa = 0.0;
        assert!(p.validate().is_err());
        let p = SimParams {
            t_end: 1.0,
            ..params(0.1, 10.0)
        };
        assert_eq!(p.steps(), 10);
        let p = SimParams {
            t_end: 1.05,
            ..params(0.1, 10.0)
        };
        assert_eq!(p.steps(), 11);
    }
}
