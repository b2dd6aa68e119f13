use chemolab::grid::make_domain;
use chemolab::oracles::{lp_norm, Barenblatt, BarenblattParams};
use chemolab::solver::{run, SolverConfig};
use chemolab::{ModelParams, ScalarField};
use proptest::prelude::*;

fn bump(cells: usize, amp: f64, width: f64, shift: f64, floor: f64) -> ScalarField {
    let d = make_domain(1, 1.0, cells).unwrap();
    ScalarField::from_fn(d, 0.0, |x| floor + amp * (-((x[0] - shift) / width).powi(2)).exp())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_stay_nonnegative_and_conserve_mass(
        m in 0.35f64..0.95,
        chi in 0.0f64..1.0,
        amp in 0.2f64..2.0,
        width in 0.1f64..0.4,
        shift in -0.3f64..0.3,
    ) {
        let params = ModelParams { m, q_exp: 1.2, chi, decay_rate: 1.0, dim: 1 };
        let u0 = bump(48, amp, width, shift, 1e-3);
        let v0 = bump(48, 0.5, 0.3, -shift, 0.0);
        let out = run(&u0, &v0, &SolverConfig::new(params, 0.01, 0.005)).unwrap();
        prop_assert!(out.min_density() >= 0.0);
        prop_assert!(out.max_mass_drift() < 1e-10, "drift {}", out.max_mass_drift());
        prop_assert!(out.v.snapshots().iter().all(|s| s.min() >= 0.0));
    }

    #[test]
    fn chemical_l2_norm_obeys_duhamel_bound(
        m in 0.4f64..0.9,
        chi in 0.0f64..0.8,
        decay in 0.0f64..2.0,
        amp in 0.2f64..2.0,
    ) {
        let params = ModelParams { m, q_exp: 1.2, chi, decay_rate: decay, dim: 1 };
        let u0 = bump(48, amp, 0.25, 0.1, 1e-3);
        let v0 = bump(48, 0.8, 0.2, -0.2, 0.0);
        let out = run(&u0, &v0, &SolverConfig::new(params, 0.02, 0.004)).unwrap();
        let v_norm0 = lp_norm(&v0, 2.0).unwrap();
        let mut sup_u = 0.0f64;
        for (u, v) in out.u.snapshots().iter().zip(out.v.snapshots()) {
            sup_u = sup_u.max(lp_norm(u, 2.0).unwrap());
            let bound = v_norm0 + v.time * sup_u;
            prop_assert!(lp_norm(v, 2.0).unwrap() <= bound * (1.0 + 1e-12), "t = {}", v.time);
        }
    }
}

/// Interior L¹ error against the closed-form profile at three resolutions.
#[test]
fn barenblatt_error_at_least_halves_under_refinement() {
    let oracle = Barenblatt::new(BarenblattParams {
        m: 0.5,
        dim: 1,
        mass: 1.0,
        t0: 0.1,
    })
    .unwrap();
    let params = ModelParams {
        m: 0.5,
        q_exp: 1.2,
        chi: 0.0,
        decay_rate: 1.0,
        dim: 1,
    };
    let mut errors = Vec::new();
    for cells in [192, 384, 768] {
        let d = make_domain(1, 3.0, cells).unwrap();
        let u0 = oracle.field(d, 0.0);
        let v0 = ScalarField::constant(d, 0.0, 0.0);
        let mut cfg = SolverConfig::new(params, 0.05, 0.05);
        cfg.cfl_safety = 0.8;
        let out = run(&u0, &v0, &cfg).unwrap();
        let last = out.u.snapshots().last().unwrap();
        let exact = oracle.field(d, last.time);
        let err: f64 = (0..d.cell_count())
            .filter(|&c| d.cell_center(c)[0].abs() < 1.0)
            .map(|c| (last.values[c] - exact.values[c]).abs())
            .sum::<f64>()
            * d.cell_volume();
        errors.push(err);
    }
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 1.4, "errors {errors:?}");
    }
}
