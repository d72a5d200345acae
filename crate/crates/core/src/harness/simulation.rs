//! One simulation: the fractional-step loop over advection, source,
//! diffusion and boundary correction.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blobs::{CellGrid, KernelParams, ParticleSet};
use crate::boundary::{
    dirichlet_correct, neumann_correct, BoundaryCondition, Condition, CorrectorRecord, Profile,
};
use crate::error::Result;
use crate::geometry::{
    build_layers, penalty_domain, validate_partition, BoundaryPatch, Domain, PatchKind,
};
use crate::observables::{Sample, TimeSeries};
use crate::stepper::{
    advect_step, diffusion_step, source_step, DiffusionStats, RigidRotation, SimParams,
    SourceField, SourceState, UniformSource, UniformVelocity, VelocityField, ZeroSource,
    ZeroVelocity,
};
use crate::{Real, Vec3};

use super::config::{ConditionKind, RunConfig, VelocitySpec};

/// Sub-steps of one time step, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Advect,
    Source,
    Diffuse,
    Correct { patch_id: usize, kind: PatchKind },
    Record,
}

const FILL_STREAM: u64 = 0;
const SOURCE_STREAM: u64 = 1;
const PATCH_STREAM_BASE: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub struct Simulation<T: Real> {
    params: SimParams<T>,
    kernel: KernelParams<T>,
    domain: Domain<T>,
    confining: Domain<T>,
    grid_bounds: (Vec3<T>, Vec3<T>),
    patches: Vec<BoundaryPatch<T>>,
    /// Dirichlet conditions by patch id, then Neumann ones by patch id.
    correctors: Vec<(BoundaryCondition<T>, ChaCha8Rng)>,
    velocity: Box<dyn VelocityField<T>>,
    source: Box<dyn SourceField<T>>,
    source_state: SourceState<T>,
    source_rng: ChaCha8Rng,
    particles: ParticleSet<T>,
    center: Vec3<T>,
    step: usize,
    series: TimeSeries<T>,
    log: Vec<(usize, CorrectorRecord)>,
    last_diffusion: DiffusionStats<T>,
}

impl<T: Real> Simulation<T> {
    /// Builds the run, places the initial particles, applies the Dirichlet
    /// correctors once at `t = 0`, and records step 0.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let params: SimParams<T> = cfg.sim_params()?;
        let kernel = params.kernel()?;
        let domain = cfg.domain.build::<T>()?;
        let mut patches = cfg
            .patches
            .iter()
            .map(|p| {
                let kind = match p.condition {
                    ConditionKind::Dirichlet => PatchKind::Dirichlet,
                    ConditionKind::Neumann => PatchKind::Neumann,
                    ConditionKind::Wall => PatchKind::Wall,
                };
                BoundaryPatch::new(p.id, p.surface.build(), kind, &domain)
            })
            .collect::<Result<Vec<_>>>()?;
        patches.sort_by_key(|p| p.id);
        validate_partition(&domain, &patches)?;
        let confining = penalty_domain(&domain, &patches, params.b)?;
        let cells = build_layers(&domain, &patches, params.b)?;

        let policy = cfg.boundary.policy();
        let ceiling = cfg.boundary.density_ceiling.map(T::lit);
        let mut correctors = Vec::new();
        for kind in [PatchKind::Dirichlet, PatchKind::Neumann] {
            for (patch, cell) in patches.iter().zip(&cells) {
                if patch.kind != kind {
                    continue;
                }
                let value = cfg
                    .patches
                    .iter()
                    .find(|p| p.id == patch.id)
                    .map(|p| T::lit(p.value))
                    .unwrap_or_else(T::zero);
                let condition = match kind {
                    PatchKind::Dirichlet => Condition::Dirichlet(Profile::Constant(value)),
                    _ => Condition::Neumann(Profile::Constant(value)),
                };
                let bc = BoundaryCondition::new(patch.clone(), condition, cell.clone())?
                    .with_policy(policy)
                    .with_target(cfg.boundary.dirichlet_target)
                    .with_density_ceiling(ceiling);
                let rng = stream(params.seed, PATCH_STREAM_BASE + patch.id as u64);
                correctors.push((bc, rng));
            }
        }

        let velocity: Box<dyn VelocityField<T>> = match &cfg.fields.velocity {
            VelocitySpec::None => Box::new(ZeroVelocity),
            VelocitySpec::Uniform { value } => Box::new(UniformVelocity(Vec3::from_f64(*value))),
            VelocitySpec::Rotation {
                center,
                axis,
                omega,
            } => Box::new(RigidRotation::new(
                Vec3::from_f64(*center),
                Vec3::from_f64(*axis),
                T::lit(*omega),
            )),
        };
        let source: Box<dyn SourceField<T>> = if cfg.fields.source_rate == 0.0 {
            Box::new(ZeroSource)
        } else {
            Box::new(UniformSource(T::lit(cfg.fields.source_rate)))
        };

        let (lo, hi) = confining.bounds();
        let pad = Vec3::splat(kernel.radius());
        let mut sim = Self {
            kernel,
            center: domain.centroid(),
            grid_bounds: (lo - pad, hi + pad),
            domain,
            confining,
            patches,
            correctors,
            velocity,
            source,
            source_state: SourceState::default(),
            source_rng: stream(params.seed, SOURCE_STREAM),
            particles: ParticleSet::new(params.mass)?,
            step: 0,
            series: TimeSeries::new(params.dt),
            log: Vec::new(),
            last_diffusion: DiffusionStats::default(),
            params,
        };
        if cfg.run.initial_fill {
            sim.fill_uniform(cfg.run.n);
        }
        for (bc, rng) in sim.correctors.iter_mut() {
            if bc.kind() == PatchKind::Dirichlet {
                let rec = dirichlet_correct(&mut sim.particles, bc, &sim.domain, T::zero(), rng)?;
                sim.log.push((0, rec));
            }
        }
        let s = Sample::measure(0, T::zero(), &sim.particles, &sim.domain, sim.center);
        sim.series.push(s)?;
        Ok(sim)
    }

    fn fill_uniform(&mut self, n: usize) {
        let mut rng = stream(self.params.seed, FILL_STREAM);
        let (lo, hi) = self.domain.bounds();
        let mut placed = 0;
        while placed < n {
            let u = Vec3::new(
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random::<f64>(),
            );
            let x = lo + (hi - lo).zip(Vec3::from_f64(u.0), |e, f| e * f);
            if self.domain.contains(x) {
                self.particles.push(x, T::zero());
                placed += 1;
            }
        }
    }

    pub fn params(&self) -> &SimParams<T> {
        &self.params
    }

    pub fn kernel(&self) -> &KernelParams<T> {
        &self.kernel
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    /// The region the penalty barrier confines particles to.
    pub fn confining(&self) -> &Domain<T> {
        &self.confining
    }

    pub fn patches(&self) -> &[BoundaryPatch<T>] {
        &self.patches
    }

    pub fn particles(&self) -> &ParticleSet<T> {
        &self.particles
    }

    /// Point about which the polar inertia is measured.
    pub fn center(&self) -> Vec3<T> {
        self.center
    }

    /// Steps taken so far.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.params.steps()
    }

    pub fn time(&self) -> T {
        T::lit(self.step as f64) * self.params.dt
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.total_steps()
    }

    pub fn series(&self) -> &TimeSeries<T> {
        &self.series
    }

    /// `(step, record)` for every corrector application so far.
    pub fn corrector_log(&self) -> &[(usize, CorrectorRecord)] {
        &self.log
    }

    pub fn last_diffusion(&self) -> DiffusionStats<T> {
        self.last_diffusion
    }

    /// Advances one step and returns its observables.
    pub fn step(&mut self) -> Result<Sample<T>> {
        self.step_observed(&mut |_| {})
    }

    /// Advances one step, reporting each phase to `hook` before it runs.
    pub fn step_observed(&mut self, hook: &mut dyn FnMut(Phase)) -> Result<Sample<T>> {
        let dt = self.params.dt;
        let t0 = self.time();
        let t1 = T::lit((self.step + 1) as f64) * dt;
        let k = self.step + 1;

        hook(Phase::Advect);
        if !self.velocity.is_zero() {
            advect_step(&mut self.particles, self.velocity.as_ref(), t0, dt);
        }

        hook(Phase::Source);
        if !self.source.is_zero() {
            let out = source_step(
                &mut self.particles,
                self.source.as_ref(),
                t0,
                dt,
                &self.kernel,
                &mut self.source_state,
                &mut self.source_rng,
            )?;
            debug!("step {k}: source born {} died {}", out.born, out.died);
        }

        hook(Phase::Diffuse);
        let grid = CellGrid::build(self.particles.positions(), &self.kernel, self.grid_bounds);
        self.last_diffusion = diffusion_step(
            &mut self.particles,
            &self.params,
            &self.kernel,
            &grid,
            &self.confining,
            t0,
        )?;

        for (bc, rng) in self.correctors.iter_mut() {
            hook(Phase::Correct {
                patch_id: bc.patch.id,
                kind: bc.kind(),
            });
            let rec = match bc.kind() {
                PatchKind::Dirichlet => {
                    dirichlet_correct(&mut self.particles, bc, &self.domain, t1, rng)?
                }
                _ => neumann_correct(&mut self.particles, bc, &self.domain, t0, t1, rng)?,
            };
            self.log.push((k, rec));
        }

        hook(Phase::Record);
        self.step = k;
        let s = Sample::measure(k, t1, &self.particles, &self.domain, self.center);
        self.series.push(s)?;
        Ok(s)
    }

    /// Runs the remaining steps.
    pub fn run_to_end(&mut self) -> Result<()> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }
}
