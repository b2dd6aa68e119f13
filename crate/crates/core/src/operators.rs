//! Face-centered differences and the two fluxes of the density equation.
//!
//! Diffusion is the difference of `u^m` across a face, so the singular
//! diffusivity `m u^{m-1}` is never evaluated. Drift is donor-cell upwinded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Domain, ScalarField};

/// Constants of the coupled system.
///
/// `decay_rate` is the damping of the chemoattractant equation; it is kept
/// distinct from the Hölder exponent reported by [`crate::holder`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub m: f64,
    pub q_exp: f64,
    pub chi: f64,
    pub decay_rate: f64,
    pub dim: usize,
}

impl ModelParams {
    /// Lower end of the admissible diffusion window, `(N-2)_+/(N+2)`.
    pub fn m_lower_bound(dim: usize) -> f64 {
        (dim as f64 - 2.0).max(0.0) / (dim as f64 + 2.0)
    }

    /// Upper end of the drift-exponent window, `(m+1)(N+2)/(2N)`.
    pub fn q_upper_bound(m: f64, dim: usize) -> f64 {
        let n = dim as f64;
        (m + 1.0) * (n + 2.0) / (2.0 * n)
    }

    /// Check every admissibility window. The error text names the
    /// violated inequality.
    ///
    /// `chi = 0` is accepted: it decouples the density from the
    /// chemoattractant and is the setting of the closed-form oracle.
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str, detail: String| Err(Error::Parameter(format!("{what} violated ({detail})")));
        if !(1..=3).contains(&self.dim) {
            return fail("1 <= N <= 3", format!("N = {}", self.dim));
        }
        let lower = Self::m_lower_bound(self.dim);
        if !(self.m > lower) {
            return fail("(N-2)+/(N+2) < m", format!("m = {}, bound = {lower}", self.m));
        }
        if !(self.m < 1.0) {
            return fail("m < 1", format!("m = {}", self.m));
        }
        if !(self.q_exp > 1.0) {
            return fail("1 < q", format!("q = {}", self.q_exp));
        }
        let upper = Self::q_upper_bound(self.m, self.dim);
        if !(self.q_exp < upper) {
            return fail("q < (m+1)(N+2)/(2N)", format!("q = {}, bound = {upper}", self.q_exp));
        }
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return fail("chi >= 0", format!("chi = {}", self.chi));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate.is_finite()) {
            return fail("decay_rate > 0", format!("decay_rate = {}", self.decay_rate));
        }
        Ok(())
    }
}

/// One value per cell face per axis. `axes[a][i]` lives on the face between
/// cell `i` and its forward neighbour along axis `a`, so every face is
/// stored exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    pub domain: Domain,
    pub axes: Vec<Vec<f64>>,
}

impl FluxField {
    pub fn zeros(domain: Domain) -> Self {
        Self {
            domain,
            axes: vec![vec![0.0; domain.cell_count()]; domain.dim()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `self - other`, face by face.
    pub fn sub(&self, other: &FluxField) -> FluxField {
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        FluxField {
            domain: self.domain,
            axes,
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for axis in &mut self.axes {
            for v in axis.iter_mut() {
                *v *= factor;
            }
        }
    }
}

fn face_map<F>(domain: &Domain, f: F) -> FluxField
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let axes = (0..domain.dim())
        .map(|axis| {
            let mut out = vec![0.0; domain.cell_count()];
            exec::fill(&mut out, |i| f(i, domain.neighbor(i, axis, true)));
            out
        })
        .collect();
    FluxField { domain: *domain, axes }
}

/// Forward differences `(w_{i+1} - w_i)/h` on every face, periodic.
pub fn gradient(field: &ScalarField) -> FluxField {
    let h = field.domain.spacing();
    let w = &field.values;
    face_map(&field.domain, |i, j| (w[j] - w[i]) / h)
}

/// Face flux of `∇u^m`: `((u_{i+1})^m - (u_i)^m)/h`.
pub fn diffusive_flux(u: &ScalarField, m: f64) -> Result<FluxField> {
    u.check_nonnegative()?;
    let powered = ScalarField {
        domain: u.domain,
        values: u.values.iter().map(|&x| x.powf(m)).collect(),
        time: u.time,
    };
    Ok(gradient(&powered))
}

/// Donor-cell drift flux across one face between a low and a high cell.
///
/// Cells move up the chemoattractant gradient, so the donor is the cell on
/// the low-`v` side. A zero gradient gives zero flux whatever the donor.
#[inline]
pub fn drift_face_flux(u_lo: f64, u_hi: f64, v_lo: f64, v_hi: f64, h: f64, chi: f64, q_exp: f64) -> f64 {
    let g = (v_hi - v_lo) / h;
    let donor = if g > 0.0 {
        u_lo
    } else if g < 0.0 {
        u_hi
    } else {
        return 0.0;
    };
    chi * (donor.powf(q_exp - 1.0) * g)
}

/// Face flux of `χ u^{q-1} ∇v`, upwinded.
pub fn drift_flux(u: &ScalarField, v: &ScalarField, params: &ModelParams) -> Result<FluxField> {
    u.check_nonnegative()?;
    if u.domain != v.domain {
        return Err(Error::Domain("u and v live on different domains".into()));
    }
    let h = u.domain.spacing();
    let (uu, vv) = (&u.values, &v.values);
    let (chi, q) = (params.chi, params.q_exp);
    Ok(face_map(&u.domain, |i, j| {
        drift_face_flux(uu[i], uu[j], vv[i], vv[j], h, chi, q)
    }))
}

/// Cell value `Σ_a (F_a(i) - F_a(i - e_a))/h`.
pub fn divergence(flux: &FluxField) -> ScalarField {
    let domain = flux.domain;
    let h = domain.spacing();
    let mut out = vec![0.0; domain.cell_count()];
    exec::fill(&mut out, |i| {
        (0..domain.dim())
            .map(|axis| {
                let back = domain.neighbor(i, axis, false);
                (flux.axes[axis][i] - flux.axes[axis][back]) / h
            })
            .sum()
    });
    ScalarField {
        domain,
        values: out,
        time: 0.0,
    }
}

/// Cell-centered `|∇w|`, averaging the two faces adjacent to each cell.
pub fn cell_gradient_magnitude(field: &ScalarField) -> Vec<f64> {
    let grad = gradient(field);
    let domain = field.domain;
    let mut out = vec![0.0; domain.cell_count()];
    exec::fill(&mut out, |i| {
        (0..domain.dim())
            .map(|axis| {
                let back = domain.neighbor(i, axis, false);
                (0.5 * (grad.axes[axis][i] + grad.axes[axis][back])).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_domain;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(chi: f64) -> ModelParams {
        ModelParams {
            m: 0.5,
            q_exp: 2.0,
            chi,
            decay_rate: 1.0,
            dim: 1,
        }
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let d = make_domain(2, 1.0, 8).unwrap();
        let c = ScalarField::constant(d, 3.0, 0.0);
        assert_eq!(gradient(&c).max_abs(), 0.0);

        let d = make_domain(1, 1.0, 16).unwrap();
        let lin = ScalarField::from_fn(d, 0.0, |x| x[0]);
        let g = gradient(&lin);
        for i in 0..15 {
            assert_relative_eq!(g.axes[0][i], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_second_order_on_sine() {
        // face midpoints x_{i+1/2}: error vs (π/L) cos(π x/L) scales like h²
        let mut errors = Vec::new();
        for n in [32usize, 64, 128, 256] {
            let d = make_domain(1, 1.0, n).unwrap();
            let w = ScalarField::from_fn(d, 0.0, |x| (std::f64::consts::PI * x[0]).sin());
            let g = gradient(&w);
            let err = (0..n)
                .map(|i| {
                    let xf = d.axis_center(i) + 0.5 * d.spacing();
                    let exact = std::f64::consts::PI * (std::f64::consts::PI * xf).cos();
                    (g.axes[0][i] - exact).abs()
                })
                .fold(0.0, f64::max);
            errors.push((d.spacing(), err));
        }
        for pair in errors.windows(2) {
            let order = (pair[0].1 / pair[1].1).ln() / (pair[0].0 / pair[1].0).ln();
            assert!(order > 1.9, "order {order}");
        }
        let (h, e) = errors[3];
        assert!(e <= std::f64::consts::PI.powi(3) / 24.0 * h * h * 1.01);
    }

    #[test]
    fn diffusive_flux_cases() {
        let d = make_domain(1, 1.0, 8).unwrap();
        assert_eq!(
            diffusive_flux(&ScalarField::constant(d, 0.7, 0.0), 0.5)
                .unwrap()
                .max_abs(),
            0.0
        );

        let mut u = ScalarField::constant(d, 0.0, 0.0);
        u.values[3] = 0.25;
        let f = diffusive_flux(&u, 0.5).unwrap();
        assert_relative_eq!(f.axes[0][2], 0.5 / 0.25);
        assert!(f.axes[0].iter().all(|v| v.is_finite()));

        u.values[0] = -1e-3;
        assert!(matches!(
            diffusive_flux(&u, 0.5),
            Err(Error::NegativeDensity { cell: 0, .. })
        ));
    }

    #[test]
    fn drift_two_cell_hand_case() {
        // u = (1, 2), v = (0, 1), χ = 1, q = 2, h = 1
        assert_relative_eq!(drift_face_flux(1.0, 2.0, 0.0, 1.0, 1.0, 1.0, 2.0), 1.0);
        // reversed gradient takes the other donor
        assert_relative_eq!(drift_face_flux(1.0, 2.0, 1.0, 0.0, 1.0, 1.0, 2.0), -2.0);
        assert_eq!(drift_face_flux(1.0, 2.0, 0.5, 0.5, 1.0, 1.0, 2.0), 0.0);
    }

    #[test]
    fn drift_zero_cases_and_embedded_grid() {
        let d = make_domain(1, 4.0, 8).unwrap(); // h = 1
        let u = ScalarField::from_fn(d, 0.0, |x| 2.0 + x[0].sin());
        let flat = ScalarField::constant(d, 1.0, 0.0);
        assert_eq!(drift_flux(&u, &flat, &params(1.0)).unwrap().max_abs(), 0.0);
        let zero = ScalarField::constant(d, 0.0, 0.0);
        let v = ScalarField::from_fn(d, 0.0, |x| x[0]);
        assert_eq!(drift_flux(&zero, &v, &params(1.0)).unwrap().max_abs(), 0.0);

        let mut u = ScalarField::constant(d, 0.0, 0.0);
        let mut v = ScalarField::constant(d, 0.0, 0.0);
        u.values[2] = 1.0;
        u.values[3] = 2.0;
        v.values[3] = 1.0;
        let f = drift_flux(&u, &v, &params(1.0)).unwrap();
        assert_relative_eq!(f.axes[0][2], 1.0);
    }

    #[test]
    fn divergence_of_linear_flux() {
        let d = make_domain(1, 1.0, 16).unwrap();
        let h = d.spacing();
        let mut f = FluxField::zeros(d);
        for i in 0..16 {
            f.axes[0][i] = d.axis_center(i) + 0.5 * h;
        }
        let div = divergence(&f);
        for i in 1..16 {
            assert_relative_eq!(div.values[i], 1.0, epsilon = 1e-12);
        }
        assert_eq!(divergence(&FluxField::zeros(d)).max(), 0.0);
    }

    #[test]
    fn validate_names_violated_inequality() {
        let mut p = ModelParams {
            m: 0.5,
            q_exp: 1.2,
            chi: 0.5,
            decay_rate: 1.0,
            dim: 1,
        };
        assert!(p.validate().is_ok());
        p.m = 1.5;
        assert!(p.validate().unwrap_err().to_string().contains("m < 1"));
        p.m = 0.1;
        p.dim = 3;
        assert!(p.validate().unwrap_err().to_string().contains("(N-2)+/(N+2) < m"));
        p.dim = 1;
        p.m = 0.5;
        p.q_exp = 2.5;
        assert!(p.validate().unwrap_err().to_string().contains("q < (m+1)(N+2)/(2N)"));
        p.q_exp = 1.0;
        assert!(p.validate().unwrap_err().to_string().contains("1 < q"));
        p.q_exp = 1.2;
        p.decay_rate = 0.0;
        assert!(p.validate().unwrap_err().to_string().contains("decay_rate > 0"));
    }

    fn random_field(d: Domain, seed: &[f64]) -> ScalarField {
        ScalarField::new(d, seed.to_vec(), 0.0).unwrap()
    }

    proptest! {
        #[test]
        fn divergence_sums_to_zero(vals in proptest::collection::vec(-5.0f64..5.0, 128)) {
            let d = make_domain(2, 1.0, 8).unwrap();
            let mut f = FluxField::zeros(d);
            f.axes[0].copy_from_slice(&vals[..64]);
            f.axes[1].copy_from_slice(&vals[64..]);
            let total: f64 = divergence(&f).values.iter().sum();
            prop_assert!(total.abs() <= 1e-12 * f.max_abs().max(1.0) * 64.0 / d.spacing());
        }

        #[test]
        fn diffusive_flux_monotone(u in proptest::collection::vec(0.0f64..3.0, 8), bump in 0.0f64..1.0, m in 0.1f64..0.99) {
            let d = make_domain(1, 1.0, 8).unwrap();
            let base = random_field(d, &u);
            let mut raised = base.clone();
            raised.values[4] += bump;
            let f0 = diffusive_flux(&base, m).unwrap();
            let f1 = diffusive_flux(&raised, m).unwrap();
            prop_assert!(f1.axes[0][3] >= f0.axes[0][3]);
        }

        #[test]
        fn drift_linear_in_chi(u in proptest::collection::vec(0.0f64..3.0, 8), v in proptest::collection::vec(-1.0f64..1.0, 8), chi in 0.0f64..10.0) {
            let d = make_domain(1, 1.0, 8).unwrap();
            let (u, v) = (random_field(d, &u), random_field(d, &v));
            let one = drift_flux(&u, &v, &params(1.0)).unwrap();
            let scaled = drift_flux(&u, &v, &params(chi)).unwrap();
            for (a, b) in one.axes[0].iter().zip(&scaled.axes[0]) {
                prop_assert_eq!(chi * a, *b);
            }
        }
    }
}
