//! CSV and manifest writers, and the file-producing `run` and `sweep` drivers.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use csv::{Terminator, Writer, WriterBuilder};
use log::{error, info};

use crate::blobs::ParticleSet;
use crate::boundary::CorrectorRecord;
use crate::error::{Error, Result};
use crate::observables::{fit_power_law, FitReport, Sample, TimeSeries};
use crate::Real;

use super::config::RunConfig;
use super::simulation::Simulation;

pub const TIMESERIES_HEADER: [&str; 7] = [
    "step",
    "time",
    "n_total",
    "n_inside",
    "mass_inside",
    "mass_total",
    "polar_inertia",
];
pub const SNAPSHOT_HEADER: [&str; 7] = ["id", "x", "y", "z", "mass", "insert_time", "age"];
pub const CORRECTOR_HEADER: [&str; 7] = [
    "step",
    "patch_id",
    "kind",
    "target_count",
    "actual_count",
    "inserted",
    "removed",
];
pub const FIT_HEADER: [&str; 5] = ["quantity", "Q_inf", "a", "alpha", "residual"];
pub const SWEEP_HEADER: [&str; 4] = ["n", "particle_mass", "l1_mass", "l1_inertia"];

/// Scientific notation with the shortest digits that round-trip.
fn sci<T: Real>(v: T) -> String {
    format!("{:e}", v.as_f64())
}

fn csv_writer(path: &Path) -> Result<Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(WriterBuilder::new()
        .terminator(Terminator::CRLF)
        .from_writer(BufWriter::new(file)))
}

fn finish(mut w: Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn timeseries_row<T: Real>(s: &Sample<T>) -> [String; 7] {
    [
        s.step.to_string(),
        sci(s.time),
        s.n_total.to_string(),
        s.n_inside.to_string(),
        sci(s.mass_inside),
        sci(s.mass_total),
        sci(s.inertia_inside),
    ]
}

pub fn corrector_row(step: usize, r: &CorrectorRecord) -> [String; 7] {
    [
        step.to_string(),
        r.patch_id.to_string(),
        r.kind.as_str().to_string(),
        r.target_count.to_string(),
        r.actual_count.to_string(),
        r.inserted.to_string(),
        r.removed.to_string(),
    ]
}

pub fn write_timeseries<T: Real>(path: &Path, series: &TimeSeries<T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(TIMESERIES_HEADER)?;
    for s in series.records() {
        w.write_record(timeseries_row(s))?;
    }
    finish(w, path)
}

pub fn write_snapshot<T: Real>(path: &Path, ps: &ParticleSet<T>, time: T) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SNAPSHOT_HEADER)?;
    let m = sci(ps.mass());
    for ((id, x), t_in) in ps.ids().iter().zip(ps.positions()).zip(ps.insert_times()) {
        w.write_record([
            id.to_string(),
            sci(x.x()),
            sci(x.y()),
            sci(x.z()),
            m.clone(),
            sci(*t_in),
            sci(time - *t_in),
        ])?;
    }
    finish(w, path)
}

pub fn write_corrector_log(path: &Path, log: &[(usize, CorrectorRecord)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CORRECTOR_HEADER)?;
    for (step, r) in log {
        w.write_record(corrector_row(*step, r))?;
    }
    finish(w, path)
}

pub fn write_fit_report<T: Real>(path: &Path, fits: &[(&str, &FitReport<T>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(FIT_HEADER)?;
    for (name, f) in fits {
        w.write_record([
            name.to_string(),
            sci(f.q_inf),
            sci(f.a),
            sci(f.alpha),
            sci(f.residual),
        ])?;
    }
    finish(w, path)
}

/// `run_manifest.txt`: resolved config, derived parameters and versions.
pub fn write_manifest(path: &Path, cfg: &RunConfig) -> Result<()> {
    let d = cfg.derived()?;
    let mut text = String::new();
    text.push_str(&format!("# blobflow {}\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("# seed = {}\n", cfg.run.seed));
    text.push_str(&format!(
        "# derived: mass = {:e}, spacing = {:e}, beta = {:e}, b = {:e}, dt = {:e}, penalty = {:e}\n",
        d.mass, d.spacing, d.beta, d.b, d.dt, d.penalty
    ));
    text.push_str(&format!(
        "# steps = {}\n\n",
        cfg.sim_params::<f64>()?.steps()
    ));
    text.push_str(&cfg.to_toml());
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// What a finished run leaves behind in memory.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: Option<PathBuf>,
    pub series: TimeSeries<f64>,
    pub corrector_log: Vec<(usize, CorrectorRecord)>,
    pub particle_mass: f64,
    pub final_count: usize,
}

/// Runs `cfg` to the end. With `out_dir`, writes `timeseries.csv`,
/// `corrector_log.csv`, `snapshot_<step>.csv` and `run_manifest.txt` there;
/// files written before a failure are kept.
pub fn run(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    let mut sim = Simulation::<f64>::from_config(cfg)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_manifest(&dir.join("run_manifest.txt"), cfg)?;
    }
    let every = cfg.run.snapshot_every;
    let snapshot = |sim: &Simulation<f64>| -> Result<()> {
        if let Some(dir) = out_dir {
            let path = dir.join(format!("snapshot_{}.csv", sim.step_index()));
            write_snapshot(&path, sim.particles(), sim.time())?;
        }
        Ok(())
    };
    if every > 0 {
        snapshot(&sim)?;
    }
    info!(
        "{}: n = {}, {} steps of dt = {:e}",
        cfg.run.experiment,
        cfg.run.n,
        sim.total_steps(),
        sim.params().dt
    );
    let mut outcome = Ok(());
    while !sim.is_done() {
        if let Err(e) = sim.step() {
            outcome = Err(e);
            break;
        }
        let k = sim.step_index();
        if every > 0 && k % every == 0 {
            snapshot(&sim)?;
        }
    }
    if let Some(dir) = out_dir {
        write_timeseries(&dir.join("timeseries.csv"), sim.series())?;
        write_corrector_log(&dir.join("corrector_log.csv"), sim.corrector_log())?;
        if outcome.is_ok() && (every == 0 || sim.step_index() % every != 0) {
            snapshot(&sim)?;
        }
    }
    outcome?;
    Ok(RunSummary {
        out_dir: out_dir.map(Path::to_path_buf),
        series: sim.series().clone(),
        corrector_log: sim.corrector_log().to_vec(),
        particle_mass: sim.params().mass,
        final_count: sim.particles().len(),
    })
}

/// One completed point of a convergence sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub n: usize,
    pub particle_mass: f64,
    pub l1_mass: f64,
    pub l1_inertia: f64,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    /// Runs that failed, with their errors.
    pub failures: Vec<(usize, String)>,
    pub mass_fit: Option<FitReport<f64>>,
    pub inertia_fit: Option<FitReport<f64>>,
}

pub fn write_sweep_points(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_HEADER)?;
    for p in points {
        w.write_record([
            p.n.to_string(),
            sci(p.particle_mass),
            sci(p.l1_mass),
            sci(p.l1_inertia),
        ])?;
    }
    finish(w, path)
}

pub fn read_sweep_points(path: &Path) -> Result<Vec<SweepPoint>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Config(format!(
            "{}: expected header {}",
            path.display(),
            SWEEP_HEADER.join(",")
        )));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Config(format!("{}: bad number `{s}`", path.display())))
    };
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        points.push(SweepPoint {
            n: rec[0].parse().map_err(|_| {
                Error::Config(format!("{}: bad count `{}`", path.display(), &rec[0]))
            })?,
            particle_mass: parse(&rec[1])?,
            l1_mass: parse(&rec[2])?,
            l1_inertia: parse(&rec[3])?,
        });
    }
    Ok(points)
}

/// Fits `Q = Q_inf + a m_p^alpha` to the L1 norms of mass and inertia.
pub fn fit_points(points: &[SweepPoint]) -> (Result<FitReport<f64>>, Result<FitReport<f64>>) {
    let m: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.particle_mass, p.l1_mass))
        .collect();
    let j: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.particle_mass, p.l1_inertia))
        .collect();
    (fit_power_law(&m), fit_power_law(&j))
}

/// Writes `fit_report.csv` with whichever fits succeeded.
pub fn write_fits(
    path: &Path,
    mass: Option<&FitReport<f64>>,
    inertia: Option<&FitReport<f64>>,
) -> Result<()> {
    let mut rows = Vec::new();
    if let Some(f) = mass {
        rows.push(("M", f));
    }
    if let Some(f) = inertia {
        rows.push(("J_G", f));
    }
    write_fit_report(path, &rows)
}

/// Runs every `sweep.n` point of `cfg` (each in `out_dir/n_<n>`), then fits
/// the L1 norms. Failed points are logged and skipped.
pub fn sweep(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<SweepOutcome> {
    if cfg.sweep.n.len() < 4 {
        return Err(Error::TooFewPoints(cfg.sweep.n.len()));
    }
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.sweep.n {
        let mut c = cfg.clone();
        c.run.n = n;
        let dir = out_dir.map(|d| d.join(format!("n_{n}")));
        match run(&c, dir.as_deref()) {
            Ok(s) => {
                let p = SweepPoint {
                    n,
                    particle_mass: s.particle_mass,
                    l1_mass: s.series.l1_mass(),
                    l1_inertia: s.series.l1_inertia(),
                };
                info!(
                    "sweep n = {n}: |M|_1 = {:e}, |J|_1 = {:e}",
                    p.l1_mass, p.l1_inertia
                );
                points.push(p);
            }
            Err(e) => {
                error!("sweep n = {n} failed: {e}");
                failures.push((n, e.to_string()));
            }
        }
        if let Some(dir) = out_dir {
            write_sweep_points(&dir.join("sweep_points.csv"), &points)?;
        }
    }
    let (m, j) = fit_points(&points);
    let (mass_fit, inertia_fit) = (m.ok(), j.ok());
    if let Some(dir) = out_dir {
        write_fits(
            &dir.join("fit_report.csv"),
            mass_fit.as_ref(),
            inertia_fit.as_ref(),
        )?;
    }
    Ok(SweepOutcome {
        points,
        failures,
        mass_fit,
        inertia_fit,
    })
}
