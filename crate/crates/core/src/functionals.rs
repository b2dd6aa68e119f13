//! Level sets, truncations, cutoffs and the energy / logarithmic budgets.
//!
//! Every budget is itemized: each side of the inequality is evaluated by
//! quadrature on stored slices and the multiplicative constant is fitted as
//! the ratio of the two sides. Gradients of truncated, cutoff-multiplied
//! fields are taken after the cellwise product, never via the product rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cube_cells, cylinder_slices, CellBlock, Cube, CylinderSlices, Domain, FieldSeries, IntrinsicCylinder, ScalarField,
};
use crate::operators::ModelParams;
use crate::oracles::{heat_estimate_check, ParabolicNorms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelMode {
    /// `{u < k}`, paired with the truncation `(k − u)₊`.
    Below,
    /// `{u > k}`, paired with `(u − k)₊`.
    Above,
}

impl LevelMode {
    #[inline]
    pub fn truncation(self, u: f64, k: f64) -> f64 {
        match self {
            LevelMode::Below => (k - u).max(0.0),
            LevelMode::Above => (u - k).max(0.0),
        }
    }

    #[inline]
    pub fn contains(self, u: f64, k: f64) -> bool {
        match self {
            LevelMode::Below => u < k,
            LevelMode::Above => u > k,
        }
    }
}

/// Linear-in-time interpolation of a series at `t`, restricted to `cells`.
pub fn interpolate_at(series: &FieldSeries, t: f64, cells: &[usize]) -> Result<Vec<f64>> {
    let snaps = series.snapshots();
    let (first, last) = match (series.first_time(), series.last_time()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyWindow { start: t, end: t }),
    };
    let tol = 1e-12 * (1.0 + t.abs());
    if t < first - tol || t > last + tol {
        return Err(Error::WindowOutOfRange {
            start: t,
            end: t,
            first,
            last,
        });
    }
    let j = snaps.partition_point(|s| s.time < t - tol);
    if j < snaps.len() && (snaps[j].time - t).abs() <= tol {
        return Ok(cells.iter().map(|&c| snaps[j].values[c]).collect());
    }
    let (a, b) = (&snaps[j - 1], &snaps[j]);
    let w = (t - a.time) / (b.time - a.time);
    Ok(cells
        .iter()
        .map(|&c| (1.0 - w) * a.values[c] + w * b.values[c])
        .collect())
}

/// Forward Steklov average `(1/h) ∫_t^{t+h} u dτ` at every snapshot time
/// with `t + h` inside the series, integrating the piecewise-linear
/// interpolant exactly.
pub fn steklov_average(series: &FieldSeries, h_avg: f64) -> Result<FieldSeries> {
    let spacing = series.min_spacing().unwrap_or(0.0);
    if !(h_avg > 0.0 && h_avg >= spacing * (1.0 - 1e-12)) {
        return Err(Error::Precondition(format!(
            "averaging window {h_avg} is shorter than the snapshot spacing {spacing}"
        )));
    }
    let snaps = series.snapshots();
    let last = series.last_time().unwrap_or(0.0);
    let tol = 1e-12 * (1.0 + last.abs());
    let mut out = Vec::new();
    for (i, s) in snaps.iter().enumerate() {
        let (a, b) = (s.time, s.time + h_avg);
        if b > last + tol {
            break;
        }
        let b = b.min(last);
        let n = s.values.len();
        let mut acc = vec![0.0; n];
        for j in i..snaps.len() - 1 {
            let (t0, t1) = (snaps[j].time, snaps[j + 1].time);
            if t0 >= b {
                break;
            }
            let (s0, s1) = (t0.max(a), t1.min(b));
            if s1 <= s0 {
                continue;
            }
            let w0 = (s0 - t0) / (t1 - t0);
            let w1 = (s1 - t0) / (t1 - t0);
            for c in 0..n {
                let (u0, u1) = (snaps[j].values[c], snaps[j + 1].values[c]);
                let left = u0 + w0 * (u1 - u0);
                let right = u0 + w1 * (u1 - u0);
                acc[c] += 0.5 * (s1 - s0) * (left + right);
            }
        }
        for x in &mut acc {
            *x /= h_avg;
        }
        out.push(ScalarField {
            domain: s.domain,
            values: acc,
            time: a,
        });
    }
    if out.is_empty() {
        return Err(Error::WindowOutOfRange {
            start: series.first_time().unwrap_or(0.0),
            end: series.first_time().unwrap_or(0.0) + h_avg,
            first: series.first_time().unwrap_or(0.0),
            last,
        });
    }
    FieldSeries::new(out)
}

fn check_level(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("k > 0 violated (k = {k})")))
    }
}

fn block_level_measure(block: &CellBlock, values: &[f64], k: f64, mode: LevelMode) -> f64 {
    values.iter().filter(|&&u| mode.contains(u, k)).count() as f64 * block.cell_volume()
}

/// `|{u < k} ∩ K|` or `|{u > k} ∩ K|` by cell counting.
pub fn level_set_measure(field: &ScalarField, k: f64, cube: &Cube, mode: LevelMode) -> Result<f64> {
    check_level(k)?;
    let block = cube_cells(&field.domain, cube)?;
    let values = block.gather(&field.values);
    Ok(block_level_measure(&block, &values, k, mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub k: f64,
    pub mode: LevelMode,
    pub times: Vec<f64>,
    pub slice_measures: Vec<f64>,
    /// Space-time measure `∫|A(t)| dt`.
    pub total: f64,
    /// `∫|A(t)|^{r̃/l̃} dt`, the quantity entering the drift bound.
    pub drift_integral: f64,
}

fn level_set_report_on(cs: &CylinderSlices, k: f64, mode: LevelMode, exponents: &ParabolicNorms) -> LevelSetReport {
    let ratio = exponents.r_tilde / exponents.l_tilde;
    let measure = |s: &crate::grid::Slice| block_level_measure(&cs.block, &s.values, k, mode);
    LevelSetReport {
        k,
        mode,
        times: cs.slices.iter().map(|s| s.time).collect(),
        slice_measures: cs.slices.iter().map(measure).collect(),
        total: cs.time_integral(measure),
        drift_integral: cs.time_integral(|s| measure(s).powf(ratio)),
    }
}

pub fn level_set_report(
    series: &FieldSeries,
    cylinder: &IntrinsicCylinder,
    k: f64,
    mode: LevelMode,
    exponents: &ParabolicNorms,
) -> Result<LevelSetReport> {
    check_level(k)?;
    let cs = cylinder_slices(series, cylinder)?;
    Ok(level_set_report_on(&cs, k, mode, exponents))
}

/// Piecewise-linear cutoff `η(x, t) = η₁(x) η₂(t)`.
///
/// `η₁` is 1 where the sup-norm distance to `center` is below
/// `inner_radius` and falls linearly to 0 at `outer_radius`. `η₂` is 0 at
/// `t_far`, rises linearly and equals 1 from `t_plateau` to `t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFunction {
    pub center: Vec<f64>,
    pub t_end: f64,
    pub theta: f64,
    pub outer_radius: f64,
    pub inner_radius: f64,
    pub t_far: f64,
    pub t_plateau: f64,
    /// Declared bound on `|∇η₁|`.
    pub grad_bound: f64,
    /// Declared bound on `∂_t η₂`.
    pub time_derivative_bound: f64,
}

impl CutoffFunction {
    /// `η ≡ 1` on the whole cylinder; no ramps.
    pub fn flat(cylinder: &IntrinsicCylinder) -> Self {
        Self {
            center: cylinder.cube.center.clone(),
            t_end: cylinder.t_end,
            theta: cylinder.theta,
            outer_radius: cylinder.cube.radius,
            inner_radius: cylinder.cube.radius,
            t_far: cylinder.t_start(),
            t_plateau: cylinder.t_start(),
            grad_bound: 0.0,
            time_derivative_bound: 0.0,
        }
    }

    /// Support cylinder `K_outer × (t_far, t_end]`.
    pub fn cylinder(&self) -> IntrinsicCylinder {
        IntrinsicCylinder::new(
            Cube::new(self.center.clone(), self.outer_radius),
            self.t_end,
            self.theta,
        )
    }

    pub fn spatial(&self, sup_distance: f64) -> f64 {
        let width = self.outer_radius - self.inner_radius;
        if width <= 0.0 {
            return if sup_distance < self.outer_radius { 1.0 } else { 0.0 };
        }
        ((self.outer_radius - sup_distance) / width).clamp(0.0, 1.0)
    }

    pub fn temporal(&self, t: f64) -> f64 {
        let width = self.t_plateau - self.t_far;
        if width <= 0.0 {
            return 1.0;
        }
        ((t - self.t_far) / width).clamp(0.0, 1.0)
    }

    /// `∂_t η₂`, one-sided from the right at the kinks.
    pub fn temporal_derivative(&self, t: f64) -> f64 {
        let width = self.t_plateau - self.t_far;
        if width > 0.0 && t >= self.t_far && t < self.t_plateau {
            1.0 / width
        } else {
            0.0
        }
    }

    /// `η₁` on the cells of `block`, whose cube is centered at `block_center`.
    pub fn spatial_on(&self, domain: &Domain, block: &CellBlock, block_center: &[f64]) -> Vec<f64> {
        let dim = block.dim();
        (0..block.len())
            .map(|j| {
                let off = block.offset(j);
                let d = (0..dim)
                    .map(|a| domain.wrap(off[a] + block_center[a] - self.center[a]).abs())
                    .fold(0.0, f64::max);
                self.spatial(d)
            })
            .collect()
    }

    /// Largest face slope of `η₁` on the grid and largest `∂_t η₂`.
    pub fn measured_bounds(&self, domain: &Domain) -> Result<(f64, f64)> {
        let cube = Cube::new(self.center.clone(), self.outer_radius);
        let block = cube_cells(domain, &cube)?;
        let eta = self.spatial_on(domain, &block, &self.center);
        let h = block.spacing();
        let grad = block
            .faces()
            .map(|(lo, hi, _)| ((eta[hi] - eta[lo]) / h).abs())
            .fold(0.0, f64::max);
        let width = self.t_plateau - self.t_far;
        let dt = if width > 0.0 { 1.0 / width } else { 0.0 };
        Ok((grad, dt))
    }
}

/// The cutoff of level `n` in the shrinking family around a base cylinder
/// `K_R(center) × (t_end − θR², t_end]`: support radius `R_n = R + R/2ⁿ`,
/// plateau radius `R_{n+1}`, time ramp from `t_end − θR_n²` to
/// `t_end − θR_{n+1}²`.
pub fn make_cutoff(n: u32, base: &IntrinsicCylinder, spacing: f64) -> Result<CutoffFunction> {
    let r = base.cube.radius;
    let theta = base.theta;
    if !(r > 0.0 && theta > 0.0) {
        return Err(Error::Parameter(format!(
            "cutoff needs R > 0 and θ > 0 (R = {r}, θ = {theta})"
        )));
    }
    let radius = |j: u32| r + r / 2f64.powi(j as i32);
    let (outer, inner) = (radius(n), radius(n + 1));
    if outer - inner < spacing {
        return Err(Error::Precondition(format!(
            "cutoff ramp {} is narrower than one cell ({spacing}) at level {n}",
            outer - inner
        )));
    }
    if 2.0 * inner < 2.0 * spacing {
        return Err(Error::Precondition(format!(
            "inner cube of width {} spans fewer than 2 cells",
            2.0 * inner
        )));
    }
    let scale = 2f64.powi(n as i32 + 1);
    Ok(CutoffFunction {
        center: base.cube.center.clone(),
        t_end: base.t_end,
        theta,
        outer_radius: outer,
        inner_radius: inner,
        t_far: base.t_end - theta * outer * outer,
        t_plateau: base.t_end - theta * inner * inner,
        grad_bound: scale / r,
        time_derivative_bound: scale * scale / (theta * r * r),
    })
}

/// `[C₀ sup_t (∫_K |u|^{m+1})^{1/(m+1)} + (∫_K |∇v₀|^{2l})^{1/(2l)}]²`.
pub fn compute_id(
    u_series: &FieldSeries,
    v0: &ScalarField,
    cylinder: &IntrinsicCylinder,
    l_exp: f64,
    m: f64,
    c0: f64,
) -> Result<f64> {
    let n = v0.domain.dim() as f64;
    let gap = 1.0 / (m + 1.0) - 1.0 / (2.0 * l_exp);
    if !(gap < 1.0 / n) {
        return Err(Error::Parameter(format!(
            "1/(m+1) - 1/(2l) < 1/N violated (1/(m+1) - 1/(2l) = {gap}, 1/N = {})",
            1.0 / n
        )));
    }
    if !(c0 >= 0.0 && c0.is_finite()) {
        return Err(Error::Parameter(format!("C0 >= 0 violated (C0 = {c0})")));
    }
    let cs = cylinder_slices(u_series, cylinder)?;
    let vol = cs.block.cell_volume();
    let p0 = m + 1.0;
    let sup_u = cs.time_max(|s| (s.values.iter().map(|u| u.abs().powf(p0)).sum::<f64>() * vol).powf(1.0 / p0));
    let v_block = cs.block.gather(&v0.values);
    let p = 2.0 * l_exp;
    let grad_v = cs.block.gradient_power_sum(&v_block, p).powf(1.0 / p);
    Ok((c0 * sup_u + grad_v).powi(2))
}

/// What the drift terms of the budgets need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftBound {
    pub i_d: f64,
    pub chi: f64,
    pub q_exp: f64,
    pub m: f64,
    pub exponents: ParabolicNorms,
}

impl DriftBound {
    /// Fit `C₀` from the heat estimate with `p₀ = m+1`, `p = 2l`, then form
    /// `I_𝔡` on the cylinder.
    pub fn from_run(
        u_series: &FieldSeries,
        v_series: &FieldSeries,
        cylinder: &IntrinsicCylinder,
        params: &ModelParams,
        exponents: ParabolicNorms,
    ) -> Result<Self> {
        let heat = heat_estimate_check(v_series, u_series, 2.0 * exponents.l_exp, params.m + 1.0, params)?;
        let c0 = heat.c0_fit.unwrap_or(0.0);
        let v0 = v_series
            .snapshots()
            .first()
            .ok_or(Error::EmptyWindow { start: 0.0, end: 0.0 })?;
        let i_d = compute_id(u_series, v0, cylinder, exponents.l_exp, params.m, c0)?;
        Ok(Self {
            i_d,
            chi: params.chi,
            q_exp: params.q_exp,
            m: params.m,
            exponents,
        })
    }

    /// `χ² I_𝔡 level^{2q−m−1} (∫|A|^{r̃/l̃})^{2(1+κ)/r̃}`.
    pub fn term(&self, level: f64, drift_integral: f64) -> f64 {
        let e = &self.exponents;
        self.chi
            * self.chi
            * self.i_d
            * level.powf(2.0 * self.q_exp - self.m - 1.0)
            * drift_integral.powf(2.0 * (1.0 + e.kappa) / e.r_tilde)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub mode: LevelMode,
    pub k: f64,
    pub lhs_sup: f64,
    pub lhs_grad: f64,
    pub t_grad_eta: f64,
    pub t_drift: f64,
    pub t_initial: f64,
    pub t_time: f64,
    /// `(lhs_sup + lhs_grad) / Σ rhs`; `None` when the left side vanishes.
    pub fitted: Option<f64>,
    /// Floor used for the `u^{m−1}` weights (above mode only).
    pub u_floor: Option<f64>,
}

impl EnergyBudget {
    pub fn lhs(&self) -> f64 {
        self.lhs_sup + self.lhs_grad
    }

    pub fn rhs(&self) -> f64 {
        self.t_grad_eta + self.t_drift + self.t_initial + self.t_time
    }
}

fn fit_ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if lhs <= 0.0 {
        None
    } else if rhs > 0.0 {
        Some(lhs / rhs)
    } else {
        Some(f64::INFINITY)
    }
}

struct Prepared {
    cs: CylinderSlices,
    eta1: Vec<f64>,
    far: Vec<f64>,
}

fn prepare(u_series: &FieldSeries, cylinder: &IntrinsicCylinder, cutoff: &CutoffFunction) -> Result<Prepared> {
    if !(cutoff.outer_radius > 0.0) {
        return Err(Error::Precondition("degenerate cutoff with empty support".into()));
    }
    let cs = cylinder_slices(u_series, cylinder)?;
    let domain = u_series.domain().expect("non-empty series");
    let eta1 = cutoff.spatial_on(&domain, &cs.block, &cylinder.cube.center);
    if eta1.iter().all(|&e| e == 0.0) {
        return Err(Error::Precondition(
            "cutoff vanishes on every cell of the cylinder".into(),
        ));
    }
    let far = interpolate_at(u_series, cs.t_start, cs.block.cells())?;
    Ok(Prepared { cs, eta1, far })
}

/// Both sides of the energy inequality for the truncation `(k − u)₊`.
pub fn energy_budget_below(
    u_series: &FieldSeries,
    k: f64,
    cylinder: &IntrinsicCylinder,
    cutoff: &CutoffFunction,
    drift: &DriftBound,
) -> Result<EnergyBudget> {
    check_level(k)?;
    let Prepared { cs, eta1, far } = prepare(u_series, cylinder, cutoff)?;
    let m = drift.m;
    let vol = cs.block.cell_volume();
    let trunc = |u: f64| (k - u).max(0.0);

    let lhs_sup = cs.time_max(|s| {
        let e2 = cutoff.temporal(s.time).powi(2);
        s.values
            .iter()
            .zip(&eta1)
            .map(|(&u, &e)| e * e * e2 * trunc(u).powi(2))
            .sum::<f64>()
            * vol
    });
    let lhs_grad = 0.5
        * m
        * k.powf(m - 1.0)
        * cs.time_integral(|s| {
            let e2 = cutoff.temporal(s.time);
            let w: Vec<f64> = s.values.iter().zip(&eta1).map(|(&u, &e)| trunc(u) * e * e2).collect();
            cs.block.gradient_power_sum(&w, 2.0)
        });
    let grad_eta1 = cs.block.gradient_power_sum(&eta1, 2.0);
    let t_grad_eta = m * k.powf(m + 1.0) * cs.time_integral(|s| cutoff.temporal(s.time).powi(2) * grad_eta1);
    let levels = level_set_report_on(&cs, k, LevelMode::Below, &drift.exponents);
    let t_drift = drift.term(k, levels.drift_integral);
    let e_far = cutoff.temporal(cs.t_start).powi(2);
    let t_initial = k
        * far
            .iter()
            .zip(&eta1)
            .map(|(&u, &e)| e * e * e_far * trunc(u))
            .sum::<f64>()
        * vol;
    let eta1_sum: f64 = eta1.iter().map(|e| e * e).sum::<f64>() * vol;
    let t_time = k * k * cs.time_integral(|s| cutoff.temporal(s.time) * cutoff.temporal_derivative(s.time) * eta1_sum);

    let mut budget = EnergyBudget {
        mode: LevelMode::Below,
        k,
        lhs_sup,
        lhs_grad,
        t_grad_eta,
        t_drift,
        t_initial,
        t_time,
        fitted: None,
        u_floor: None,
    };
    budget.fitted = fit_ratio(budget.lhs(), budget.rhs());
    Ok(budget)
}

/// Both sides of the energy inequality for `(u − k)₊`. The weight `u^{m−1}`
/// is evaluated at `max(u, u_floor)` so it stays finite where `u = 0`; on
/// faces the larger of the two cell values is used.
pub fn energy_budget_above(
    u_series: &FieldSeries,
    k: f64,
    cylinder: &IntrinsicCylinder,
    cutoff: &CutoffFunction,
    drift: &DriftBound,
    mu_plus: f64,
    u_floor: f64,
) -> Result<EnergyBudget> {
    check_level(k)?;
    if !(u_floor > 0.0) {
        return Err(Error::Parameter(format!("u_floor > 0 violated (u_floor = {u_floor})")));
    }
    let Prepared { cs, eta1, far } = prepare(u_series, cylinder, cutoff)?;
    let m = drift.m;
    let vol = cs.block.cell_volume();
    let trunc = |u: f64| (u - k).max(0.0);
    let weight = |u: f64| u.max(u_floor).powf(m - 1.0);

    let lhs_sup = cs.time_max(|s| {
        let e2 = cutoff.temporal(s.time).powi(2);
        s.values
            .iter()
            .zip(&eta1)
            .map(|(&u, &e)| e * e * e2 * trunc(u).powi(2))
            .sum::<f64>()
            * vol
    });
    let lhs_grad = cs.time_integral(|s| {
        let e2 = cutoff.temporal(s.time);
        let w: Vec<f64> = s.values.iter().zip(&eta1).map(|(&u, &e)| trunc(u) * e * e2).collect();
        let u = &s.values;
        cs.block.weighted_gradient_sq(&w, |lo, hi| weight(u[lo].max(u[hi])))
    });
    let t_grad_eta = cs.time_integral(|s| {
        let u = &s.values;
        let cell = |j: usize| weight(u[j]) * trunc(u[j]).powi(2);
        cutoff.temporal(s.time).powi(2)
            * cs.block
                .weighted_gradient_sq(&eta1, |lo, hi| 0.5 * (cell(lo) + cell(hi)))
    });
    let levels = level_set_report_on(&cs, k, LevelMode::Above, &drift.exponents);
    let t_drift = drift.term(mu_plus.max(0.0), levels.drift_integral);
    let e_far = cutoff.temporal(cs.t_start).powi(2);
    let t_initial = far
        .iter()
        .zip(&eta1)
        .map(|(&u, &e)| e * e * e_far * trunc(u).powi(2))
        .sum::<f64>()
        * vol;
    let t_time = cs.time_integral(|s| {
        let factor = cutoff.temporal(s.time) * cutoff.temporal_derivative(s.time);
        factor
            * s.values
                .iter()
                .zip(&eta1)
                .map(|(&u, &e)| trunc(u).powi(2) * e * e)
                .sum::<f64>()
            * vol
    });

    let mut budget = EnergyBudget {
        mode: LevelMode::Above,
        k,
        lhs_sup,
        lhs_grad,
        t_grad_eta,
        t_drift,
        t_initial,
        t_time,
        fitted: None,
        u_floor: Some(u_floor),
    };
    budget.fitted = fit_ratio(budget.lhs(), budget.rhs());
    Ok(budget)
}

/// The three quantities of the primitive chain
/// `½ m k^{m−1}(k−u)² ≤ ∫_u^k (k^m − s^m) ds ≤ k^m (k−u) ≤ k^{m+1}`
/// for `0 ≤ u ≤ k`, in that order (four values).
pub fn primitive_chain(u: f64, k: f64, m: f64) -> [f64; 4] {
    let gap = k - u;
    let integral = k.powf(m) * gap - (k.powf(m + 1.0) - u.powf(m + 1.0)) / (m + 1.0);
    [
        0.5 * m * k.powf(m - 1.0) * gap * gap,
        integral,
        k.powf(m) * gap,
        k.powf(m + 1.0),
    ]
}

/// `ψ = log⁺(H / (H − (u−k)₊ + c))`.
#[inline]
pub fn log_psi(u: f64, k: f64, h: f64, c: f64) -> f64 {
    (h / (h - (u - k).max(0.0) + c)).ln().max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFunctionalReport {
    pub k: f64,
    /// `ess sup (u − k)₊` over the cylinder.
    pub h: f64,
    pub c: f64,
    pub psi_cap: f64,
    pub psi_max: f64,
    /// Largest `|Δψ/Δu|` between consecutive sorted `u` samples.
    pub max_slope: f64,
    pub lhs_sup: f64,
    pub t_initial: f64,
    pub t_drift: f64,
    pub t_grad_zeta: f64,
    /// `(lhs_sup − t_initial)₊ / (t_drift + t_grad_zeta)`.
    pub fitted: Option<f64>,
    /// The drift weight uses `μ = μ⁺` of the ambient cylinder.
    pub mu_is_mu_plus: bool,
    pub u_floor: f64,
}

/// The logarithmic estimate at level `k = μ⁺ − ω/4` with spatial cutoff `ζ`
/// (the spatial part of `cutoff`).
#[allow(clippy::too_many_arguments)]
pub fn log_budget(
    u_series: &FieldSeries,
    cylinder: &IntrinsicCylinder,
    omega: f64,
    mu_plus: f64,
    c: f64,
    cutoff: &CutoffFunction,
    drift: &DriftBound,
    u_floor: f64,
) -> Result<LogFunctionalReport> {
    if !(u_floor > 0.0) {
        return Err(Error::Parameter(format!("u_floor > 0 violated (u_floor = {u_floor})")));
    }
    let Prepared { cs, eta1: zeta, far } = prepare(u_series, cylinder, cutoff)?;
    let k = mu_plus - 0.25 * omega;
    let h = cs
        .slices
        .iter()
        .flat_map(|s| s.values.iter())
        .map(|&u| (u - k).max(0.0))
        .fold(0.0, f64::max);
    if h == 0.0 {
        return Ok(LogFunctionalReport {
            k,
            h,
            c,
            psi_cap: f64::NAN,
            psi_max: 0.0,
            max_slope: 0.0,
            lhs_sup: 0.0,
            t_initial: 0.0,
            t_drift: 0.0,
            t_grad_zeta: 0.0,
            fitted: None,
            mu_is_mu_plus: true,
            u_floor,
        });
    }
    if !(c > 0.0 && c < h.min(1.0)) {
        return Err(Error::Parameter(format!(
            "0 < c < min(1, H) violated (c = {c}, H = {h})"
        )));
    }
    let vol = cs.block.cell_volume();
    let psi = |u: f64| log_psi(u, k, h, c);
    let psi_cap = (h / c).ln();
    let psi_max = cs
        .slices
        .iter()
        .flat_map(|s| s.values.iter())
        .map(|&u| psi(u))
        .fold(0.0, f64::max);
    let mut samples: Vec<f64> = cs.slices.iter().flat_map(|s| s.values.iter().copied()).collect();
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    let max_slope = samples
        .windows(2)
        .map(|w| ((psi(w[1]) - psi(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max);

    let energy = |values: &[f64]| {
        values
            .iter()
            .zip(&zeta)
            .map(|(&u, &z)| psi(u).powi(2) * z * z)
            .sum::<f64>()
            * vol
    };
    let lhs_sup = cs.time_max(|s| energy(&s.values));
    let t_initial = energy(&far);
    let log_hc = psi_cap;
    let t_drift = (1.0 + log_hc) / (c * c)
        * drift.chi
        * drift.chi
        * drift.i_d
        * mu_plus.max(0.0).powf(2.0 * drift.q_exp - drift.m - 1.0)
        * cs.block.measure();
    let weight = |u: f64| u.max(u_floor).powf(drift.m - 1.0);
    let t_grad_zeta = log_hc
        * cs.time_integral(|s| {
            let u = &s.values;
            cs.block.weighted_gradient_sq(&zeta, |lo, hi| weight(u[lo].max(u[hi])))
        });
    let excess = (lhs_sup - t_initial).max(0.0);
    let denom = t_drift + t_grad_zeta;
    let fitted = if excess == 0.0 {
        Some(0.0)
    } else if denom > 0.0 {
        Some(excess / denom)
    } else {
        None
    };
    Ok(LogFunctionalReport {
        k,
        h,
        c,
        psi_cap,
        psi_max,
        max_slope,
        lhs_sup,
        t_initial,
        t_drift,
        t_grad_zeta,
        fitted,
        mu_is_mu_plus: true,
        u_floor,
    })
}
