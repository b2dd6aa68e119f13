//! Layout of a simulate output directory.
//!
//! ```text
//! run.cfg            canonical copy of the run configuration
//! u_00000.bin ...    density checkpoints, one per snapshot
//! v_00000.bin ...    chemical checkpoints, one per snapshot
//! steps.csv          step reports
//! summary.json       run-level diagnostics
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chemolab::solver::{RunOutput, StepReport};
use chemolab::FieldSeries;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{io_at, CliError, CliResult};

pub const CONFIG_FILE: &str = "run.cfg";
pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub snapshots: usize,
    pub steps: usize,
    pub u_floor: f64,
    pub limited_steps: usize,
    pub clamped_cells: usize,
    pub max_mass_drift: f64,
    pub min_density: f64,
    pub max_u_growth: f64,
}

/// 17 significant digits, fixed exponent form.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn steps_csv(initial: &StepReport, reports: &[StepReport]) -> String {
    let mut s = String::from("step,t,dt,mass_u,mass_v,min_u,max_u\n");
    for r in std::iter::once(initial).chain(reports) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.step,
            fmt17(r.t),
            fmt17(r.dt_used),
            fmt17(r.mass_u),
            fmt17(r.mass_v),
            fmt17(r.min_u),
            fmt17(r.max_u)
        );
    }
    s
}

fn snapshot_path(dir: &Path, name: &str, i: usize) -> PathBuf {
    dir.join(format!("{name}_{i:05}.bin"))
}

pub fn write_run(dir: &Path, config: &RunConfig, out: &RunOutput) -> CliResult<RunSummary> {
    std::fs::create_dir_all(dir).map_err(io_at(dir))?;
    let write = |name: &str, contents: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, contents).map_err(io_at(&p))
    };
    write(CONFIG_FILE, config.to_text().as_bytes())?;
    for (name, series) in [("u", &out.u), ("v", &out.v)] {
        for (i, snap) in series.snapshots().iter().enumerate() {
            checkpoint::write(&snapshot_path(dir, name, i), name, snap)?;
        }
    }
    write(STEPS_FILE, steps_csv(&out.initial, &out.reports).as_bytes())?;
    let summary = RunSummary {
        seed: config.seed,
        snapshots: out.u.len(),
        steps: out.reports.len(),
        u_floor: out.u_floor,
        limited_steps: out.limited_steps,
        clamped_cells: out.clamped_cells,
        max_mass_drift: out.max_mass_drift(),
        min_density: out.min_density(),
        max_u_growth: out.max_u_growth,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write(SUMMARY_FILE, json.as_bytes())?;
    Ok(summary)
}

/// A completed run read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub u: FieldSeries,
    pub v: FieldSeries,
    pub summary: RunSummary,
}

fn load_series(dir: &Path, name: &str) -> CliResult<FieldSeries> {
    let mut snaps = Vec::new();
    for i in 0.. {
        let p = snapshot_path(dir, name, i);
        if !p.exists() {
            break;
        }
        snaps.push(checkpoint::read(&p)?.field);
    }
    if snaps.is_empty() {
        return Err(CliError::Io(format!("{}: no {name} checkpoints", dir.display())));
    }
    FieldSeries::new(snaps).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn load_run(dir: &Path) -> CliResult<LoadedRun> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&cfg_path).map_err(io_at(&cfg_path))?;
    let config = RunConfig::parse(&text, &cfg_path.display().to_string())?;
    let summary_path = dir.join(SUMMARY_FILE);
    let summary_text = std::fs::read_to_string(&summary_path).map_err(io_at(&summary_path))?;
    let summary =
        serde_json::from_str(&summary_text).map_err(|e| CliError::Io(format!("{}: {e}", summary_path.display())))?;
    Ok(LoadedRun {
        u: load_series(dir, "u")?,
        v: load_series(dir, "v")?,
        config,
        summary,
    })
}
