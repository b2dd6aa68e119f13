//! Time integration of the coupled system.
//!
//! Each step advances `u` explicitly in conservative form and then `v` by a
//! backward-Euler solve, both with the same `dt`. The step size comes from a
//! CFL bound in which the singular diffusivity is evaluated at
//! `max(u, u_floor)`; the floor never enters the fluxes.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Domain, FieldSeries, ScalarField};
use crate::operators::{diffusive_flux, divergence, drift_flux, gradient, ModelParams};

/// Relative size below which a negative density is treated as roundoff.
pub const ROUNDOFF_NEGATIVE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub params: ModelParams,
    /// Stability surrogate for the diffusivity near `u = 0`. `None` means
    /// `1e-4 · max(u0)`, resolved when a run starts.
    pub u_floor: Option<f64>,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub snapshot_interval: f64,
    pub v_solver_tol: f64,
    /// Runs abort when the stable step drops below this.
    pub min_dt: f64,
    pub max_cg_iterations: usize,
}

impl SolverConfig {
    pub fn new(params: ModelParams, t_end: f64, snapshot_interval: f64) -> Self {
        Self {
            params,
            u_floor: None,
            cfl_safety: 0.4,
            t_end,
            snapshot_interval,
            v_solver_tol: 1e-10,
            min_dt: 1e-14,
            max_cg_iterations: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Parameter(format!(
                "0 < cfl_safety <= 1 violated (cfl_safety = {})",
                self.cfl_safety
            )));
        }
        if let Some(floor) = self.u_floor {
            if !(floor > 0.0 && floor.is_finite()) {
                return Err(Error::Parameter(format!("u_floor > 0 violated (u_floor = {floor})")));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Parameter(format!(
                "t_end >= 0 violated (t_end = {})",
                self.t_end
            )));
        }
        if !(self.snapshot_interval > 0.0) {
            return Err(Error::Parameter(format!(
                "snapshot_interval > 0 violated (snapshot_interval = {})",
                self.snapshot_interval
            )));
        }
        if !(self.v_solver_tol > 0.0) {
            return Err(Error::Parameter(format!(
                "v_solver_tol > 0 violated (v_solver_tol = {})",
                self.v_solver_tol
            )));
        }
        if !(self.min_dt > 0.0) {
            return Err(Error::Parameter(format!(
                "min_dt > 0 violated (min_dt = {})",
                self.min_dt
            )));
        }
        Ok(())
    }

    fn floor_for(&self, u: &ScalarField) -> f64 {
        self.u_floor.unwrap_or_else(|| default_floor(u))
    }
}

/// `1e-4 · max(u)`, or `1e-4` for an identically zero field.
pub fn default_floor(u: &ScalarField) -> f64 {
    let max = u.max();
    if max > 0.0 {
        1e-4 * max
    } else {
        1e-4
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub dt_used: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub max_v_grad: f64,
}

impl StepReport {
    fn measure(step: usize, t: f64, dt: f64, u: &ScalarField, v: &ScalarField) -> Self {
        Self {
            step,
            t,
            dt_used: dt,
            mass_u: u.integral(),
            mass_v: v.integral(),
            min_u: u.min(),
            max_u: u.max(),
            max_v_grad: gradient(v).max_abs(),
        }
    }
}

/// Stable explicit step for the density update.
///
/// `dt = safety·h² / (2N·m·max(u_floor, min u)^{m-1} + N·h·χ·max|∇v|·max(u)^{q-1})`.
pub fn cfl_dt(u: &ScalarField, v: &ScalarField, config: &SolverConfig) -> Result<f64> {
    u.check_nonnegative()?;
    let p = &config.params;
    let domain = u.domain;
    let h = domain.spacing();
    let n = domain.dim() as f64;
    let floor = config.floor_for(u);
    let u_eff_min = u.min().max(floor);
    let diffusivity = p.m * u_eff_min.powf(p.m - 1.0);
    let grad_v = gradient(v).max_abs();
    let drift = if p.chi > 0.0 && grad_v > 0.0 {
        h * grad_v * p.chi * u.max().powf(p.q_exp - 1.0) * n
    } else {
        0.0
    };
    let dt = config.cfl_safety * h * h / (2.0 * n * diffusivity + drift);
    if !(dt >= config.min_dt) {
        return Err(Error::StepTooSmall {
            dt,
            min_dt: config.min_dt,
        });
    }
    Ok(dt)
}

/// Result of one density update.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityStep {
    pub field: ScalarField,
    /// Cells whose outgoing flux had to be scaled down to keep `u >= 0`.
    pub limited_cells: usize,
    /// Cells with roundoff-sized negative values reset to zero.
    pub clamped_cells: usize,
}

/// One explicit conservative update of `u`.
///
/// The face flux is `∇u^m − χ u^{q−1}∇v`. Where the floor-based step bound
/// is too weak for a nearly empty cell, the outgoing fluxes of that cell are
/// scaled so it drains at most to zero; every face is still shared by its two
/// cells, so mass is conserved exactly.
pub fn step_u(u: &ScalarField, v: &ScalarField, dt: f64, config: &SolverConfig) -> Result<DensityStep> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    let domain = u.domain;
    let h = domain.spacing();
    let dim = domain.dim();
    let diff = diffusive_flux(u, config.params.m)?;
    let drift = drift_flux(u, v, &config.params)?;
    // transport flux: positive means flow toward the forward neighbour
    let mut transport = drift.sub(&diff);

    let mut ratio = vec![1.0; domain.cell_count()];
    exec::fill(&mut ratio, |i| {
        let outflow: f64 = (0..dim)
            .map(|axis| {
                let back = domain.neighbor(i, axis, false);
                transport.axes[axis][i].max(0.0) + (-transport.axes[axis][back]).max(0.0)
            })
            .sum::<f64>()
            * dt
            / h;
        if outflow > u.values[i] {
            u.values[i] / outflow
        } else {
            1.0
        }
    });
    let limited_cells = ratio.iter().filter(|&&r| r < 1.0).count();
    if limited_cells > 0 {
        for axis in 0..dim {
            let faces = &mut transport.axes[axis];
            let mut limited = vec![0.0; faces.len()];
            exec::fill(&mut limited, |i| {
                let f = faces[i];
                let donor = if f > 0.0 { i } else { domain.neighbor(i, axis, true) };
                f * ratio[donor]
            });
            *faces = limited;
        }
    }

    transport.scale(-1.0);
    let div = divergence(&transport);
    let mut values: Vec<f64> = u.values.iter().zip(&div.values).map(|(a, d)| a + dt * d).collect();

    if let Some(cell) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { cell });
    }
    let threshold = -ROUNDOFF_NEGATIVE * u.max().max(f64::MIN_POSITIVE);
    let mut clamped_cells = 0;
    for (cell, x) in values.iter_mut().enumerate() {
        if *x < 0.0 {
            if *x < threshold {
                return Err(Error::PositivityViolation { cell, value: *x });
            }
            *x = 0.0;
            clamped_cells += 1;
        }
    }
    if clamped_cells > 0 {
        debug!("clamped {clamped_cells} roundoff-negative cells to zero");
    }
    Ok(DensityStep {
        field: ScalarField {
            domain,
            values,
            time: u.time + dt,
        },
        limited_cells,
        clamped_cells,
    })
}

fn apply_laplacian(domain: &Domain, x: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (domain.spacing() * domain.spacing());
    let dim = domain.dim();
    exec::fill(out, |i| {
        let mut acc = -2.0 * dim as f64 * x[i];
        for axis in 0..dim {
            acc += x[domain.neighbor(i, axis, true)] + x[domain.neighbor(i, axis, false)];
        }
        acc * inv_h2
    });
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backward-Euler step of `v_t = Δv − αv + u`:
/// `(1 + dt·α − dt·Δ_h) v_new = v + dt·u`, solved by conjugate gradients
/// to a residual of `v_solver_tol · ‖rhs‖`.
pub fn step_v(v: &ScalarField, u: &ScalarField, dt: f64, config: &SolverConfig) -> Result<ScalarField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    let domain = v.domain;
    let alpha = config.params.decay_rate;
    let n = domain.cell_count();
    let rhs: Vec<f64> = v.values.iter().zip(&u.values).map(|(a, b)| a + dt * b).collect();
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    let time = v.time + dt;
    if rhs_norm == 0.0 {
        return Ok(ScalarField::constant(domain, 0.0, time));
    }

    let mut lap = vec![0.0; n];
    let apply = |x: &[f64], lap: &mut Vec<f64>, out: &mut Vec<f64>| {
        apply_laplacian(&domain, x, lap);
        for i in 0..n {
            out[i] = (1.0 + dt * alpha) * x[i] - dt * lap[i];
        }
    };

    let mut x = v.values.clone();
    let mut ax = vec![0.0; n];
    apply(&x, &mut lap, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = config.v_solver_tol * rhs_norm;
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    while rr.sqrt() > target {
        if iterations == config.max_cg_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: rr.sqrt() / rhs_norm,
            });
        }
        apply(&p, &mut lap, &mut ap);
        let step = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    if let Some(cell) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { cell });
    }
    Ok(ScalarField {
        domain,
        values: x,
        time,
    })
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub u: FieldSeries,
    pub v: FieldSeries,
    pub reports: Vec<StepReport>,
    pub initial: StepReport,
    pub u_floor: f64,
    pub limited_steps: usize,
    pub clamped_cells: usize,
    /// Largest `max(u(t)) / max(u0)` seen; growth is monitored, not bounded.
    pub max_u_growth: f64,
}

impl RunOutput {
    /// Worst `|∫u(t) − ∫u0| / ∫u0` over all accepted steps.
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.initial.mass_u;
        self.reports
            .iter()
            .map(|r| (r.mass_u - m0).abs() / m0)
            .fold(0.0, f64::max)
    }

    pub fn min_density(&self) -> f64 {
        self.reports.iter().map(|r| r.min_u).fold(self.initial.min_u, f64::min)
    }
}

fn snapshot_targets(t_end: f64, interval: f64) -> Vec<f64> {
    let mut targets = Vec::new();
    let tol = 1e-9 * interval;
    let mut k = 1usize;
    loop {
        let t = k as f64 * interval;
        if t >= t_end - tol {
            break;
        }
        targets.push(t);
        k += 1;
    }
    if t_end > 0.0 {
        targets.push(t_end);
    }
    targets
}

/// Integrate from `(u0, v0)` to `t_end`, storing snapshots at multiples of
/// `snapshot_interval` and at `t = 0` and `t = t_end`.
pub fn run(u0: &ScalarField, v0: &ScalarField, config: &SolverConfig) -> Result<RunOutput> {
    config.validate()?;
    if u0.domain != v0.domain {
        return Err(Error::Domain("u0 and v0 live on different domains".into()));
    }
    for field in [u0, v0] {
        if let Some(cell) = field.values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { cell });
        }
        field.check_nonnegative()?;
    }
    let floor = config.floor_for(u0);
    let cfg = SolverConfig {
        u_floor: Some(floor),
        ..*config
    };

    let mut u = ScalarField {
        time: 0.0,
        ..u0.clone()
    };
    let mut v = ScalarField {
        time: 0.0,
        ..v0.clone()
    };
    let mut u_series = FieldSeries::new(vec![u.clone()])?;
    let mut v_series = FieldSeries::new(vec![v.clone()])?;
    let initial = StepReport::measure(0, 0.0, 0.0, &u, &v);
    let u0_max = initial.max_u.max(f64::MIN_POSITIVE);

    let mut reports = Vec::new();
    let mut limited_steps = 0;
    let mut clamped_cells = 0;
    let mut max_u_growth: f64 = 1.0;
    let mut warned = false;
    let mut t = 0.0;
    for target in snapshot_targets(config.t_end, config.snapshot_interval) {
        while t < target {
            let mut dt = cfl_dt(&u, &v, &cfg)?;
            let hit = t + 1.01 * dt >= target;
            if hit {
                dt = target - t;
            }
            let stepped = step_u(&u, &v, dt, &cfg)?;
            if stepped.limited_cells > 0 {
                limited_steps += 1;
            }
            clamped_cells += stepped.clamped_cells;
            let v_next = step_v(&v, &stepped.field, dt, &cfg)?;
            u = stepped.field;
            v = v_next;
            t = if hit { target } else { t + dt };
            u.time = t;
            v.time = t;
            u_series.dt_history.push(dt);
            v_series.dt_history.push(dt);
            let report = StepReport::measure(reports.len() + 1, t, dt, &u, &v);
            max_u_growth = max_u_growth.max(report.max_u / u0_max);
            if max_u_growth > 10.0 && !warned {
                warn!("max(u) grew by a factor {max_u_growth:.3} at t = {t}");
                warned = true;
            }
            reports.push(report);
        }
        u_series.push(u.clone())?;
        v_series.push(v.clone())?;
    }
    Ok(RunOutput {
        u: u_series,
        v: v_series,
        reports,
        initial,
        u_floor: floor,
        limited_steps,
        clamped_cells,
        max_u_growth,
    })
}
