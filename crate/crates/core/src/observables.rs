//! Diagnostics: interior mass and polar inertia, their time integrals,
//! parameter derivation for the reference experiments, and power-law fits of
//! convergence data.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blobs::ParticleSet;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::{Real, Vec3};

/// Mass of the particles inside `domain` (the exterior buffer is excluded).
pub fn mass_inside<T: Real>(ps: &ParticleSet<T>, domain: &Domain<T>) -> T {
    let n = ps
        .positions()
        .iter()
        .filter(|&&x| domain.contains(x))
        .count();
    T::lit(n as f64) * ps.mass()
}

/// `sum m_p |x_p - center|^2` over particles inside `domain`.
pub fn polar_inertia<T: Real>(ps: &ParticleSet<T>, domain: &Domain<T>, center: Vec3<T>) -> T {
    ps.positions()
        .iter()
        .filter(|&&x| domain.contains(x))
        .map(|&x| (x - center).norm_squared())
        .sum::<T>()
        * ps.mass()
}

/// Observables of one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample<T> {
    pub step: usize,
    pub time: T,
    pub n_total: usize,
    pub n_inside: usize,
    pub mass_inside: T,
    pub mass_total: T,
    pub inertia_inside: T,
    /// Inertia of every particle, buffer included.
    pub inertia_total: T,
}

impl<T: Real> Sample<T> {
    pub fn measure(
        step: usize,
        time: T,
        ps: &ParticleSet<T>,
        domain: &Domain<T>,
        center: Vec3<T>,
    ) -> Self {
        let m = ps.mass();
        let (mut n_inside, mut j_in, mut j_all) = (0usize, T::zero(), T::zero());
        for &x in ps.positions() {
            let r2 = (x - center).norm_squared();
            j_all = j_all + r2;
            if domain.contains(x) {
                n_inside += 1;
                j_in = j_in + r2;
            }
        }
        Self {
            step,
            time,
            n_total: ps.len(),
            n_inside,
            mass_inside: T::lit(n_inside as f64) * m,
            mass_total: ps.total_mass(),
            inertia_inside: j_in * m,
            inertia_total: j_all * m,
        }
    }
}

/// Observables at `t_0, t_1, ..., t_K` with a uniform step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    pub dt: T,
    records: Vec<Sample<T>>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            records: Vec::new(),
        }
    }

    /// Appends a record; times must increase strictly.
    pub fn push(&mut self, s: Sample<T>) -> Result<()> {
        if let Some(last) = self.records.last() {
            if !(s.time > last.time) {
                return Err(Error::InvalidParams(format!(
                    "time series must increase: {} after {}",
                    s.time, last.time
                )));
            }
        }
        self.records.push(s);
        Ok(())
    }

    pub fn records(&self) -> &[Sample<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&Sample<T>> {
        self.records.last()
    }

    /// Left-endpoint records: every sample but the final one.
    fn left(&self) -> &[Sample<T>] {
        &self.records[..self.records.len().saturating_sub(1)]
    }

    /// `int_0^T M dt` over all particles, buffer included.
    pub fn l1_mass(&self) -> T {
        l1_norm(
            &self.left().iter().map(|s| s.mass_total).collect::<Vec<_>>(),
            self.dt,
        )
    }

    /// `int_0^T J_G dt` over all particles, buffer included.
    pub fn l1_inertia(&self) -> T {
        l1_norm(
            &self
                .left()
                .iter()
                .map(|s| s.inertia_total)
                .collect::<Vec<_>>(),
            self.dt,
        )
    }

    /// Averages of (interior mass, interior inertia, total count) over the last
    /// `fraction` of the records.
    pub fn tail_means(&self, fraction: f64) -> (T, T, f64) {
        let n = self.records.len();
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
        let tail = &self.records[n - k..];
        let inv = T::one() / T::lit(k as f64);
        let m = tail.iter().map(|s| s.mass_inside).sum::<T>() * inv;
        let j = tail.iter().map(|s| s.inertia_inside).sum::<T>() * inv;
        let c = tail.iter().map(|s| s.n_total as f64).sum::<f64>() / k as f64;
        (m, j, c)
    }
}

/// Left Riemann sum `sum_k q_k dt`.
pub fn l1_norm<T: Real>(values: &[T], dt: T) -> T {
    values.iter().copied().sum::<T>() * dt
}

/// The three reference experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Unit sphere filled through a Dirichlet surface.
    Sphere,
    /// 2x1x1 box with one Dirichlet face and five walls.
    Box,
    /// Circular pipe with Neumann inlet and smaller outlet.
    Pipe,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Sphere, Experiment::Box, Experiment::Pipe];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Sphere => "sphere",
            Experiment::Box => "box",
            Experiment::Pipe => "pipe",
        }
    }

    /// Resolution rules the experiment uses.
    pub fn rules<T: Real>(&self) -> ParamRules<T> {
        match self {
            Experiment::Sphere => ParamRules {
                spacing: SpacingRule::SphereRadius { radius: T::one() },
                beta_prefactor: T::two(),
                layer_scale: T::one(),
                cfl: T::one(),
                kappa: T::one(),
                total_mass: T::one(),
            },
            Experiment::Box => ParamRules {
                spacing: SpacingRule::MassDensity {
                    density: T::lit(500.0),
                },
                beta_prefactor: T::two(),
                layer_scale: T::two(),
                cfl: T::one(),
                kappa: T::one(),
                total_mass: T::lit(1000.0),
            },
            Experiment::Pipe => ParamRules {
                spacing: SpacingRule::CylinderVolume {
                    radius: T::half(),
                    length: T::two(),
                },
                beta_prefactor: T::one(),
                layer_scale: T::half(),
                cfl: T::one(),
                kappa: T::one(),
                total_mass: T::lit(1000.0),
            },
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Experiment::Sphere),
            "box" => Ok(Experiment::Box),
            "pipe" => Ok(Experiment::Pipe),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// How the particle spacing follows from the particle count `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SpacingRule<T> {
    /// `(volume / n)^{1/3}`
    DomainVolume { volume: T },
    /// `radius * n^{-1/3}`
    SphereRadius { radius: T },
    /// `(3 m_p / (4 pi density))^{1/3}`
    MassDensity { density: T },
    /// `(3/4 radius^2 length / n)^{1/3}`
    CylinderVolume { radius: T, length: T },
}

/// Rules turning a particle count into numerical parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamRules<T> {
    pub spacing: SpacingRule<T>,
    /// `beta = beta_prefactor / spacing^2`
    pub beta_prefactor: T,
    /// Length `L` in `b = sqrt(L * spacing)`.
    pub layer_scale: T,
    /// `dt = cfl * spacing^2 / kappa`
    pub cfl: T,
    pub kappa: T,
    /// Mass represented by `n` particles.
    pub total_mass: T,
}

/// Parameters derived from a particle count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedParams<T> {
    pub mass: T,
    pub spacing: T,
    pub beta: T,
    pub b: T,
    pub dt: T,
    /// Penalty stiffness `1/dt`.
    pub penalty: T,
}

impl<T: Real> ParamRules<T> {
    pub fn derive(&self, n: usize) -> Result<DerivedParams<T>> {
        if n == 0 {
            return Err(Error::InvalidParams(
                "particle count must be positive".into(),
            ));
        }
        let nf = T::lit(n as f64);
        let third = T::one() / T::lit(3.0);
        let mass = self.total_mass / nf;
        let spacing = match self.spacing {
            SpacingRule::DomainVolume { volume } => (volume / nf).powf(third),
            SpacingRule::SphereRadius { radius } => radius * nf.powf(-third),
            SpacingRule::MassDensity { density } => {
                (T::lit(3.0) * mass / (T::lit(4.0) * T::PI() * density)).powf(third)
            }
            SpacingRule::CylinderVolume { radius, length } => {
                (T::lit(0.75) * radius * radius * length / nf).powf(third)
            }
        };
        let dt = self.cfl * spacing * spacing / self.kappa;
        Ok(DerivedParams {
            mass,
            spacing,
            beta: self.beta_prefactor / (spacing * spacing),
            b: (self.layer_scale * spacing).sqrt(),
            dt,
            penalty: T::one() / dt,
        })
    }
}

/// Parameters of `experiment` at particle count `n` (`n_inf` for the sphere
/// and box, `n_initial` for the pipe).
pub fn derive_params<T: Real>(experiment: Experiment, n: usize) -> Result<DerivedParams<T>> {
    experiment.rules::<T>().derive(n)
}

/// Fit of `Q(m) = q_inf + a * m^alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport<T> {
    pub q_inf: T,
    pub a: T,
    pub alpha: T,
    /// Root of the summed squared residuals.
    pub residual: T,
    /// `(m_i, |Q_i - q_inf|)`, sorted by decreasing `m`.
    pub errors: Vec<(T, T)>,
}

const ALPHA_RANGE: (f64, f64) = (0.05, 1.5);
const SCAN_POINTS: usize = 291;

/// Least squares for `(q_inf, a)` at fixed `alpha`; returns `(q_inf, a, sse)`.
fn linear_fit<T: Real>(points: &[(T, T)], alpha: T) -> (T, T, T) {
    let n = T::lit(points.len() as f64);
    let xs: Vec<T> = points.iter().map(|(m, _)| m.powf(alpha)).collect();
    let xm = xs.iter().copied().sum::<T>() / n;
    let ym = points.iter().map(|p| p.1).sum::<T>() / n;
    let (mut sxx, mut sxy) = (T::zero(), T::zero());
    for (x, (_, y)) in xs.iter().zip(points) {
        sxx = sxx + (*x - xm) * (*x - xm);
        sxy = sxy + (*x - xm) * (*y - ym);
    }
    let a = sxy / sxx;
    let q = ym - a * xm;
    let sse = xs
        .iter()
        .zip(points)
        .map(|(x, (_, y))| {
            let r = *y - q - a * *x;
            r * r
        })
        .sum();
    (q, a, sse)
}

/// Fits `Q = q_inf + a m^alpha` by scanning `alpha` over [0.05, 1.5],
/// refining with golden-section search, and solving the linear part exactly
/// at each trial exponent.
pub fn fit_power_law<T: Real>(points: &[(T, T)]) -> Result<FitReport<T>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite masses"));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() < 4 || pts.len() != points.len() || pts.iter().any(|(m, _)| !(*m > T::zero())) {
        return Err(Error::TooFewPoints(pts.len()));
    }
    let n = T::lit(pts.len() as f64);
    let mean = pts.iter().map(|p| p.1).sum::<T>() / n;
    let spread = pts
        .iter()
        .map(|p| (p.1 - mean).abs())
        .fold(T::zero(), T::max);
    let scale = pts.iter().map(|p| p.1.abs()).fold(T::zero(), T::max);
    if spread <= T::epsilon() * T::lit(1e3) * scale || spread == T::zero() {
        return Err(Error::Unidentifiable);
    }

    let (lo, hi) = (T::lit(ALPHA_RANGE.0), T::lit(ALPHA_RANGE.1));
    let grid = |i: usize| lo + (hi - lo) * T::lit(i as f64 / (SCAN_POINTS - 1) as f64);
    let sse = |alpha: T| linear_fit(&pts, alpha).2;
    let best =
        (0..SCAN_POINTS)
            .map(|i| (i, sse(grid(i))))
            .fold(
                (0, T::infinity()),
                |acc, (i, s)| if s < acc.1 { (i, s) } else { acc },
            );
    let (mut a, mut b) = (
        grid(best.0.saturating_sub(1)),
        grid((best.0 + 1).min(SCAN_POINTS - 1)),
    );
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..200 {
        if (b - a).abs() <= T::epsilon() * T::lit(4.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = sse(d);
        }
    }
    let alpha = (a + b) * T::half();
    let (q_inf, amp, sse) = linear_fit(&pts, alpha);
    if !q_inf.is_finite() || !amp.is_finite() {
        return Err(Error::Unidentifiable);
    }
    Ok(FitReport {
        q_inf,
        a: amp,
        alpha,
        residual: sse.sqrt(),
        errors: pts.iter().map(|&(m, q)| (m, (q - q_inf).abs())).collect(),
    })
}
