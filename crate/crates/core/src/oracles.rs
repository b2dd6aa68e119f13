//! Reference solutions and parabolic norms.
//!
//! The Barenblatt profile solves `u_t = Δ(u^m)` exactly and is the yardstick
//! for the solver with `χ = 0`. The norm helpers are quadrature versions of
//! the Lebesgue and energy spaces the regularity argument lives in; ess sup
//! in time is always the maximum over stored slices.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{cube_cells, cylinder_slices, FieldSeries, IntrinsicCylinder, ScalarField};
use crate::operators::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarenblattParams {
    pub m: f64,
    pub dim: usize,
    pub mass: f64,
    pub t0: f64,
}

/// The self-similar fast-diffusion profile with its constants resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barenblatt {
    pub params: BarenblattParams,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    /// Additive constant fixed by the mass.
    pub c: f64,
}

impl Barenblatt {
    pub fn new(params: BarenblattParams) -> Result<Self> {
        let BarenblattParams { m, dim, mass, t0 } = params;
        if !(1..=3).contains(&dim) {
            return Err(Error::Parameter(format!("dimension {dim} outside 1..=3")));
        }
        let n = dim as f64;
        let finite_mass_bound = (n - 2.0).max(0.0) / n;
        if !(m > finite_mass_bound && m < 1.0) {
            return Err(Error::Parameter(format!(
                "(N-2)+/N < m < 1 violated (m = {m}, N = {dim})"
            )));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Parameter(format!("mass > 0 violated (mass = {mass})")));
        }
        if !(t0 > 0.0) {
            return Err(Error::Parameter(format!("t0 > 0 violated (t0 = {t0})")));
        }
        let alpha = n / (n * (m - 1.0) + 2.0);
        let beta = alpha / n;
        let k = (1.0 - m) * alpha / (2.0 * m * n);
        // ∫ (C + k|y|²)^{-p} dy = S_N · ½ k^{-N/2} C^{N/2-p} B(N/2, p-N/2)
        let p = 1.0 / (1.0 - m);
        let half_n = 0.5 * n;
        let ln_sphere = std::f64::consts::LN_2 + half_n * std::f64::consts::PI.ln() - ln_gamma(half_n);
        let ln_beta = ln_gamma(half_n) + ln_gamma(p - half_n) - ln_gamma(p);
        let ln_unit = ln_sphere - std::f64::consts::LN_2 - half_n * k.ln() + ln_beta;
        let c = ((mass.ln() - ln_unit) / (half_n - p)).exp();
        Ok(Self {
            params,
            alpha,
            beta,
            k,
            c,
        })
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        let s = t + self.params.t0;
        let r2: f64 = x.iter().map(|xi| xi * xi).sum();
        s.powf(-self.alpha) * (self.c + self.k * r2 * s.powf(-2.0 * self.beta)).powf(-1.0 / (1.0 - self.params.m))
    }

    /// Sample onto a field at time `t`.
    pub fn field(&self, domain: crate::grid::Domain, t: f64) -> ScalarField {
        let dim = domain.dim();
        ScalarField::from_fn(domain, t, |x| self.value(&x[..dim], t))
    }
}

/// `U(x, t)` for the given parameters.
pub fn barenblatt(params: &BarenblattParams, x: &[f64], t: f64) -> Result<f64> {
    if !(t + params.t0 > 0.0) {
        return Err(Error::Precondition(format!(
            "t + t0 = {} must be positive",
            t + params.t0
        )));
    }
    Ok(Barenblatt::new(*params)?.value(x, t))
}

fn check_exponent(name: &str, p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} >= 1 violated ({name} = {p})")))
    }
}

/// `(Σ |w|^p · vol)^{1/p}`, or `max |w|` for `p = ∞`.
pub fn lp_norm_values(values: &[f64], cell_volume: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |a, w| a.max(w.abs()));
    }
    let sum: f64 = values.iter().map(|w| w.abs().powf(p)).sum();
    (sum * cell_volume).powf(1.0 / p)
}

/// `‖w‖_{L^p}` over the whole box.
pub fn lp_norm(field: &ScalarField, p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    Ok(lp_norm_values(&field.values, field.domain.cell_volume(), p))
}

/// `‖w‖_{L^p(K)}` over the cells of a cube.
pub fn lp_norm_on(field: &ScalarField, cube: &crate::grid::Cube, p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    let block = cube_cells(&field.domain, cube)?;
    Ok(lp_norm_values(&block.gather(&field.values), block.cell_volume(), p))
}

/// `(∫ (∫_K |w|^q dx)^{r/q} dt)^{1/r}`; `r = ∞` takes the max over slices.
pub fn lqr_norm(series: &FieldSeries, cylinder: &IntrinsicCylinder, q: f64, r: f64) -> Result<f64> {
    check_exponent("q", q)?;
    check_exponent("r", r)?;
    let cs = cylinder_slices(series, cylinder)?;
    let vol = cs.block.cell_volume();
    let spatial = |s: &crate::grid::Slice| lp_norm_values(&s.values, vol, q);
    if r.is_infinite() {
        Ok(cs.time_max(spatial))
    } else {
        Ok(cs.time_integral(|s| spatial(s).powf(r)).powf(1.0 / r))
    }
}

/// `ess sup_t ‖w(t)‖_{L^p(K)} + ‖∇w‖_{L^p(Q)}`.
pub fn vp_norm(series: &FieldSeries, cylinder: &IntrinsicCylinder, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("1 <= p < inf violated (p = {p})")));
    }
    let cs = cylinder_slices(series, cylinder)?;
    let vol = cs.block.cell_volume();
    let sup = cs.time_max(|s| lp_norm_values(&s.values, vol, p));
    let grad = cs.time_integral(|s| cs.block.gradient_power_sum(&s.values, p));
    Ok(sup + grad.powf(1.0 / p))
}

/// The exponent bookkeeping shared by the energy estimates and the
/// embedding inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicNorms {
    pub l_exp: f64,
    pub r_exp: f64,
    pub l_tilde: f64,
    pub r_tilde: f64,
    pub kappa: f64,
    pub p: f64,
    pub s: f64,
    pub q_embed: f64,
}

impl ParabolicNorms {
    /// `1 − 1/l = 2(1+κ)/l̃`, `1 − 1/r = 2(1+κ)/r̃`, `q = p(N+s)/N`.
    pub fn new(l_exp: f64, r_exp: f64, kappa: f64, p: f64, s: f64, dim: usize) -> Result<Self> {
        if !(l_exp > 1.0 && r_exp > 1.0) {
            return Err(Error::Parameter(format!(
                "l, r > 1 violated (l = {l_exp}, r = {r_exp})"
            )));
        }
        if !(kappa > 0.0) {
            return Err(Error::Parameter(format!("kappa > 0 violated (kappa = {kappa})")));
        }
        check_exponent("p", p)?;
        check_exponent("s", s)?;
        let n = dim as f64;
        Ok(Self {
            l_exp,
            r_exp,
            l_tilde: tilde_from(l_exp, kappa),
            r_tilde: tilde_from(r_exp, kappa),
            kappa,
            p,
            s,
            q_embed: p * (n + s) / n,
        })
    }

    /// `κ = 2/N`, `l = r = 2`, `p = s = 2`.
    pub fn default_for(dim: usize) -> Self {
        Self::new(2.0, 2.0, 2.0 / dim as f64, 2.0, 2.0, dim).expect("default exponents are admissible")
    }

    /// Recover `(l, r)` from `(l̃, r̃, κ)`.
    pub fn recover_l_r(&self) -> (f64, f64) {
        (base_from(self.l_tilde, self.kappa), base_from(self.r_tilde, self.kappa))
    }
}

fn tilde_from(base: f64, kappa: f64) -> f64 {
    if base.is_infinite() {
        2.0 * (1.0 + kappa)
    } else {
        2.0 * (1.0 + kappa) / (1.0 - 1.0 / base)
    }
}

fn base_from(tilde: f64, kappa: f64) -> f64 {
    1.0 / (1.0 - 2.0 * (1.0 + kappa) / tilde)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub q: f64,
    pub lhs: f64,
    pub rhs_product: f64,
    pub gamma_estimate: Option<f64>,
}

/// Both sides of `∬|w|^q ≤ γ^q (∬|∇w|^p)(ess sup ∫|w|^s)^{p/N}`.
///
/// `w` should vanish on the cube boundary; multiply by a cutoff first.
pub fn embedding_check(series: &FieldSeries, cylinder: &IntrinsicCylinder, p: f64, s: f64) -> Result<EmbeddingReport> {
    check_exponent("p", p)?;
    check_exponent("s", s)?;
    let cs = cylinder_slices(series, cylinder)?;
    let n = cs.block.dim() as f64;
    let q = p * (n + s) / n;
    let vol = cs.block.cell_volume();
    let power_sum = |values: &[f64], e: f64| values.iter().map(|w| w.abs().powf(e)).sum::<f64>() * vol;
    let lhs = cs.time_integral(|sl| power_sum(&sl.values, q));
    let grad = cs.time_integral(|sl| cs.block.gradient_power_sum(&sl.values, p));
    let sup = cs.time_max(|sl| power_sum(&sl.values, s));
    let rhs_product = grad * sup.powf(p / n);
    if rhs_product == 0.0 && lhs > 0.0 {
        return Err(Error::Precondition(
            "embedding right-hand side vanishes while the left does not; w must vanish on the cube boundary".into(),
        ));
    }
    let gamma_estimate = (rhs_product > 0.0).then(|| (lhs / rhs_product).powf(1.0 / q));
    Ok(EmbeddingReport {
        q,
        lhs,
        rhs_product,
        gamma_estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatEstimateReport {
    pub times: Vec<f64>,
    /// `‖v(t)‖_p` per snapshot.
    pub lhs_series: Vec<f64>,
    pub v0_norm: f64,
    /// `sup_t ‖u(t)‖_{p0}`.
    pub forcing_norm: f64,
    /// Smallest `C₀` with `‖v(t)‖_p ≤ ‖v₀‖_p + C₀ sup‖u‖_{p0}` at every snapshot.
    pub c0_fit: Option<f64>,
    pub rhs_bound: Option<f64>,
    pub satisfied: bool,
}

/// Fit the constant of the heat-equation `L^p` bound on a stored run.
pub fn heat_estimate_check(
    v_series: &FieldSeries,
    u_series: &FieldSeries,
    p: f64,
    p0: f64,
    params: &ModelParams,
) -> Result<HeatEstimateReport> {
    check_exponent("p", p)?;
    check_exponent("p0", p0)?;
    let n = params.dim as f64;
    let gap = 1.0 / p0 - 1.0 / p;
    if !(gap < 1.0 / n) {
        return Err(Error::Parameter(format!(
            "1/p0 - 1/p < 1/N violated (1/p0 - 1/p = {gap}, 1/N = {})",
            1.0 / n
        )));
    }
    let v0 = v_series
        .snapshots()
        .first()
        .ok_or(Error::EmptyWindow { start: 0.0, end: 0.0 })?;
    let v0_norm = lp_norm(v0, p)?;
    let lhs_series: Vec<f64> = v_series
        .snapshots()
        .iter()
        .map(|s| lp_norm(s, p))
        .collect::<Result<_>>()?;
    let forcing_norm = u_series
        .snapshots()
        .iter()
        .map(|s| lp_norm(s, p0))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let excess = lhs_series.iter().map(|x| (x - v0_norm).max(0.0)).fold(0.0, f64::max);
    let roundoff = 1e-12 * v0_norm.max(1.0);
    let c0_fit = if excess <= roundoff {
        Some(0.0)
    } else if forcing_norm > 0.0 {
        Some(excess / forcing_norm)
    } else {
        None
    };
    Ok(HeatEstimateReport {
        times: v_series.times(),
        lhs_series,
        v0_norm,
        forcing_norm,
        c0_fit,
        rhs_bound: c0_fit.map(|c| v0_norm + c * forcing_norm),
        satisfied: c0_fit.is_some_and(f64::is_finite),
    })
}
