use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chemolab::oracles::{Barenblatt, BarenblattParams};
use chemolab::solver::run;
use chemolab::sweeps::{embedding_sweep, geometric_sweep, isoperimetric_sweep, SweepSummary};
use chemolab::Cube;

use crate::config::{InitialCondition, RunConfig};
use crate::diag::{load_requests, run_requests};
use crate::error::{io_at, CliError, CliResult};
use crate::run_dir::{fmt17, load_run, write_run, RunSummary};

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Run the solver and write a run directory. `out` and `seed` override the
/// config file.
pub fn simulate(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<(PathBuf, RunSummary)> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(o) = out {
        config.out = o.to_path_buf();
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let (u0, v0) = config.initial_fields(&base_dir(config_path))?;
    let output = run(&u0, &v0, &config.solver)?;
    let summary = write_run(&config.out, &config, &output)?;
    Ok((config.out.clone(), summary))
}

/// Evaluate a request file against a run directory; NDJSON goes to `out`
/// or stdout.
pub fn diagnose(run_dir: &Path, requests_path: &Path, out: Option<&Path>, seed: u64) -> CliResult<()> {
    let requests = load_requests(requests_path)?;
    let run = load_run(run_dir)?;
    let (lines, err) = run_requests(&requests, &run, seed);
    let mut text = String::new();
    for l in &lines {
        text.push_str(l);
        text.push('\n');
    }
    match out {
        Some(p) => std::fs::write(p, text).map_err(io_at(p))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    err.map_or(Ok(()), Err)
}

#[derive(Debug, Clone, Copy)]
pub struct LemmaCounts {
    pub geometric: usize,
    pub isoperimetric: usize,
    pub embedding: usize,
}

impl Default for LemmaCounts {
    fn default() -> Self {
        Self {
            geometric: 100,
            isoperimetric: 1000,
            embedding: 50,
        }
    }
}

pub fn lemma_sweeps(seed: u64, counts: LemmaCounts) -> CliResult<Vec<SweepSummary>> {
    Ok(vec![
        geometric_sweep(seed, counts.geometric),
        isoperimetric_sweep(seed, counts.isoperimetric)?,
        embedding_sweep(seed, counts.embedding)?,
    ])
}

pub fn lemma_report(summaries: &[SweepSummary]) -> String {
    let mut s = String::new();
    for x in summaries {
        let _ = writeln!(
            s,
            "{} seed={} count={} passed={} worst={} {}",
            x.name,
            x.seed,
            x.count,
            x.passed,
            fmt17(x.worst),
            if x.all_passed() { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub l1_error: f64,
    pub observed_order: Option<f64>,
}

/// Refine the base grid `refinements` times (doubling `cells`) and measure
/// the L¹ distance to the Barenblatt profile at `t_end` on the cube of
/// half-width `window` around the origin.
pub fn convergence_study(base: &RunConfig, refinements: usize, window: f64) -> CliResult<Vec<ConvergenceRow>> {
    if base.solver.params.chi != 0.0 {
        return Err(CliError::Config(format!(
            "chi = 0 required for the Barenblatt oracle (chi = {})",
            base.solver.params.chi
        )));
    }
    let InitialCondition::Barenblatt { mass, t_offset } = base.u0 else {
        return Err(CliError::Config("convergence needs u0 = barenblatt".into()));
    };
    if refinements == 0 {
        return Err(CliError::Config("refinements >= 1 violated".into()));
    }
    if !(window > 0.0 && window <= base.extent) {
        return Err(CliError::Config(format!(
            "0 < window <= extent violated (window = {window})"
        )));
    }
    let oracle = Barenblatt::new(BarenblattParams {
        m: base.solver.params.m,
        dim: base.dim,
        mass,
        t0: t_offset,
    })?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for level in 0..refinements {
        let config = RunConfig {
            cells: base.cells << level,
            u0_noise: 0.0,
            ..base.clone()
        };
        let (u0, v0) = config.initial_fields(Path::new("."))?;
        let output = run(&u0, &v0, &config.solver)?;
        let last = output.u.snapshots().last().expect("run stores t_end");
        let domain = config.domain();
        let exact = oracle.field(domain, last.time);
        let block = chemolab::grid::cube_cells(&domain, &Cube::new(vec![0.0; base.dim], window))?;
        let err = block
            .cells()
            .iter()
            .map(|&c| (last.values[c] - exact.values[c]).abs())
            .sum::<f64>()
            * domain.cell_volume();
        let observed_order = rows.last().map(|prev| (prev.l1_error / err).log2());
        rows.push(ConvergenceRow {
            h: domain.spacing(),
            l1_error: err,
            observed_order,
        });
    }
    Ok(rows)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("h,l1_error,observed_order\n");
    for r in rows {
        let order = r.observed_order.map(fmt17).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", fmt17(r.h), fmt17(r.l1_error), order);
    }
    s
}
