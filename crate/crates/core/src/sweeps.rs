//! Randomised sweeps over the synthetic lemmas: fast geometric convergence,
//! the isoperimetric inequality and the parabolic embedding.
//!
//! Cases are drawn sequentially from one seeded ChaCha stream per sweep and
//! evaluated in parallel, so summaries depend only on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degiorgi::{fast_geometric_iterate, isoperimetric_check, GeoIterParams};
use crate::error::Result;
use crate::grid::{make_domain, Cube, Domain, FieldSeries, IntrinsicCylinder, ScalarField};
use crate::oracles::embedding_check;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub seed: u64,
    pub count: usize,
    pub passed: usize,
    /// Worst-case fitted constant (iterations, `γ_D` or embedding `γ`).
    pub worst: f64,
}

impl SweepSummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.count
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Random `(c, b, α, κ)` with `X₀ + Y₀^{1+κ} = 0.99 ν₀`; a case passes when
/// both sequences drop below `1e−10` within 200 steps. Worst = most steps.
pub fn geometric_sweep(seed: u64, count: usize) -> SweepSummary {
    let mut rng = stream(seed, 1);
    let cases: Vec<(GeoIterParams, f64, f64)> = (0..count)
        .map(|_| {
            let p = GeoIterParams {
                c: rng.random_range(1.0..4.0),
                b: rng.random_range(1.5..16.0),
                alpha: rng.random_range(0.2..2.0),
                kappa: rng.random_range(0.2..2.0),
            };
            let budget = 0.99 * p.threshold();
            let split: f64 = rng.random();
            let x0 = split * budget;
            let y0 = ((1.0 - split) * budget).powf(1.0 / (1.0 + p.kappa));
            (p, x0, y0)
        })
        .collect();
    let results = crate::exec::map_slice(&cases, |(p, x0, y0)| fast_geometric_iterate(p, *x0, *y0, 200));
    SweepSummary {
        name: "fast_geometric".into(),
        seed,
        count,
        passed: results.iter().filter(|r| r.converged).count(),
        worst: results.iter().map(|r| r.iterations as f64).fold(0.0, f64::max),
    }
}

/// Continuous piecewise-linear profile through `values` at evenly spaced
/// knots on `[-1, 1]`.
fn piecewise_linear(values: &[f64], x: f64) -> f64 {
    let segments = values.len() - 1;
    let s = ((x + 1.0) / 2.0 * segments as f64).clamp(0.0, segments as f64);
    let i = (s.floor() as usize).min(segments - 1);
    let f = s - i as f64;
    values[i] * (1.0 - f) + values[i + 1] * f
}

struct IsoCase {
    field: ScalarField,
    k: f64,
    l: f64,
}

fn iso_case(rng: &mut ChaCha8Rng, d1: Domain, d2: Domain) -> IsoCase {
    let profile = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let knots = rng.random_range(5..=9);
        (0..knots).map(|_| rng.random::<f64>()).collect()
    };
    let (field, min_gap): (ScalarField, f64) = if rng.random_bool(0.5) {
        let f = profile(rng);
        (ScalarField::from_fn(d1, 0.0, |x| piecewise_linear(&f, x[0])), 0.1)
    } else {
        let (f, g) = (profile(rng), profile(rng));
        (
            ScalarField::from_fn(d2, 0.0, |x| {
                0.5 * (piecewise_linear(&f, x[0]) + piecewise_linear(&g, x[1]))
            }),
            0.15,
        )
    };
    let (lo, hi) = (field.min(), field.max());
    let gap = rng.random_range(min_gap..min_gap.max(0.5 * (hi - lo)).max(min_gap + 1e-3));
    let k = lo + rng.random::<f64>() * (hi - lo - gap).max(0.0);
    IsoCase { field, k, l: k + gap }
}

/// Random 1D/2D piecewise-linear fields on the whole box with levels
/// `k < ℓ` whose gap exceeds the largest per-cell jump. A case passes when
/// its fitted `γ_D` is finite (or undefined because a level set is empty).
/// Worst = largest fitted `γ_D`.
pub fn isoperimetric_sweep(seed: u64, count: usize) -> Result<SweepSummary> {
    let d1 = make_domain(1, 1.0, 128)?;
    let d2 = make_domain(2, 1.0, 64)?;
    let mut rng = stream(seed, 2);
    let cases: Vec<IsoCase> = (0..count).map(|_| iso_case(&mut rng, d1, d2)).collect();
    let fits = crate::exec::map_slice(&cases, |c| {
        let cube = Cube::new(vec![0.0; c.field.domain.dim()], 1.0);
        isoperimetric_check(&c.field, &cube, c.k, c.l).map(|r| r.gamma_fit)
    });
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for fit in fits {
        match fit? {
            Some(g) if g.is_finite() => {
                passed += 1;
                worst = worst.max(g);
            }
            Some(_) => {}
            None => passed += 1,
        }
    }
    Ok(SweepSummary {
        name: "isoperimetric".into(),
        seed,
        count,
        passed,
        worst,
    })
}

/// Random compactly supported bumps in 1D/2D. A case passes when the
/// embedding constant is finite and unchanged (relative 1e−9) under
/// `w → λw`. Worst = largest fitted `γ`.
pub fn embedding_sweep(seed: u64, count: usize) -> Result<SweepSummary> {
    let mut rng = stream(seed, 3);
    let cases: Vec<(usize, f64, f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(1..=2usize),
                rng.random_range(0.2..0.5),
                rng.random_range(-0.2..0.2),
                rng.random_range(1.5..3.0),
                rng.random_range(1.2..3.0),
                rng.random_range(0.5..4.0),
            )
        })
        .collect();
    let times: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
    let results = crate::exec::map_slice(&cases, |&(dim, width, shift, p, s, lambda)| -> Result<Option<f64>> {
        let domain = make_domain(dim, 1.0, if dim == 1 { 128 } else { 32 })?;
        let bump = move |x: &[f64], t: f64, a: f64| {
            let mut v = a * (1.0 + t);
            for &xi in x {
                let r = (xi - shift) / width;
                if r.abs() >= 1.0 {
                    return 0.0;
                }
                v *= (0.5 * std::f64::consts::PI * r).cos().powi(2);
            }
            v
        };
        let cyl = IntrinsicCylinder::new(Cube::new(vec![0.0; dim], 0.9), 1.0, 1.0);
        let base = embedding_check(
            &FieldSeries::from_fn(domain, &times, |x, t| bump(x, t, 1.0))?,
            &cyl,
            p,
            s,
        )?;
        let scaled = embedding_check(
            &FieldSeries::from_fn(domain, &times, |x, t| bump(x, t, lambda))?,
            &cyl,
            p,
            s,
        )?;
        Ok(match (base.gamma_estimate, scaled.gamma_estimate) {
            (Some(a), Some(b)) if a.is_finite() && (a - b).abs() <= 1e-9 * a => Some(a),
            _ => None,
        })
    });
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for r in results {
        if let Some(g) = r? {
            passed += 1;
            worst = worst.max(g);
        }
    }
    Ok(SweepSummary {
        name: "embedding".into(),
        seed,
        count,
        passed,
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweeps_pass_vacuously() {
        assert!(geometric_sweep(0, 0).all_passed());
        assert!(isoperimetric_sweep(0, 0).unwrap().all_passed());
        assert!(embedding_sweep(0, 0).unwrap().all_passed());
    }

    #[test]
    fn sweeps_are_seed_deterministic() {
        assert_eq!(isoperimetric_sweep(4, 40).unwrap(), isoperimetric_sweep(4, 40).unwrap());
        assert_eq!(
            crate::exec::sequential(|| embedding_sweep(4, 10).unwrap()),
            embedding_sweep(4, 10).unwrap()
        );
    }

    #[test]
    fn piecewise_linear_hits_knots() {
        let v = [0.0, 1.0, 0.5];
        assert_eq!(piecewise_linear(&v, -1.0), 0.0);
        assert_eq!(piecewise_linear(&v, 0.0), 1.0);
        assert_eq!(piecewise_linear(&v, 1.0), 0.5);
        assert_eq!(piecewise_linear(&v, 0.5), 0.75);
    }

    #[test]
    fn default_sweeps_pass() {
        let g = geometric_sweep(0, 100);
        let i = isoperimetric_sweep(0, 200).unwrap();
        let e = embedding_sweep(0, 20).unwrap();
        assert!(g.all_passed() && i.all_passed() && e.all_passed());
    }
}
