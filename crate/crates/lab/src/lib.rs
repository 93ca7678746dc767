//! Experiment runner around `molrg-core`: named experiment specs, result
//! files, and SVG plots.

pub mod error;
pub mod experiments;
pub mod io;
pub mod plot;
pub mod spec;

use std::time::Instant;

pub use error::{LabError, LabResult};
pub use experiments::Ctx;
pub use spec::{ExperimentName, ExperimentSpec, Overrides};

use io::{Meta, RunStatus};

/// Outcome of [`run`]: files written and free-form notes.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub ctx: Ctx,
    pub wall_time_s: f64,
}

/// Execute `spec` and always write `meta.json` into its output directory.
/// On a mid-run error the files finished so far stay on disk and the meta
/// records `"status": "failed"`.
pub fn run(spec: &ExperimentSpec) -> LabResult<RunReport> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out)?;
    let start = Instant::now();
    let mut ctx = Ctx::new(&spec.out);
    let result = experiments::dispatch(spec, &mut ctx);
    let wall_time_s = start.elapsed().as_secs_f64();
    let meta = Meta {
        spec,
        version: env!("CARGO_PKG_VERSION"),
        seeds: &spec.seeds,
        wall_time_s,
        status: if result.is_ok() { RunStatus::Ok } else { RunStatus::Failed },
        error: result.as_ref().err().map(ToString::to_string),
        files: ctx.files.clone(),
        notes: ctx.notes.clone(),
    };
    io::write_json(&spec.out.join("meta.json"), &meta)?;
    result.map(|()| RunReport { ctx, wall_time_s })
}
