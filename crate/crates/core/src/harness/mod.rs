//! Configuration, experiment presets, the time-stepping loop and file output.

mod config;
mod output;
mod presets;
mod simulation;

pub use config::{
    default_out_dir, BoundarySection, ConditionKind, DomainSpec, FieldsSection, ParamsSection,
    PatchSpec, RunConfig, RunSection, SurfaceSpec, SweepSection, VelocitySpec, OUT_DIR_ENV,
};
pub use output::{
    corrector_row, fit_points, read_sweep_points, run, sweep, timeseries_row, write_corrector_log,
    write_fit_report, write_fits, write_manifest, write_snapshot, write_sweep_points,
    write_timeseries, RunSummary, SweepOutcome, SweepPoint, CORRECTOR_HEADER, FIT_HEADER,
    SNAPSHOT_HEADER, SWEEP_HEADER, TIMESERIES_HEADER,
};
pub use presets::preset;
pub use simulation::{Phase, Simulation};
