use chemolab::degiorgi::{isoperimetric_check, oscillation_decay, AlternativeConfig};
use chemolab::grid::{cylinder_slices, make_domain, Cube};
use chemolab::oracles::{embedding_check, Barenblatt, BarenblattParams};
use chemolab::{FieldSeries, IntrinsicCylinder, ScalarField};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn passed_decay_trace_contracts_geometrically(
        mass in 0.5f64..2.0,
        t0 in 0.01f64..0.1,
        center in -0.15f64..0.15,
    ) {
        let m = 0.5;
        let oracle = Barenblatt::new(BarenblattParams { m, dim: 1, mass, t0 }).unwrap();
        let d = make_domain(1, 0.5, 16384).unwrap();
        let h = d.spacing();
        let center = (center / h).floor() * h + 0.5 * h;
        let (t_end, radius) = (0.05, 0.2);
        let probe = FieldSeries::from_fn(d, &[0.01, t_end], |x, t| oracle.value(x, t)).unwrap();
        let cs = cylinder_slices(&probe, &IntrinsicCylinder::new(Cube::new([center], radius), t_end, 1.0)).unwrap();
        let theta = (cs.max_value() - cs.min_value()).sqrt();
        let depth = theta * radius * radius;
        prop_assume!(depth < t_end);
        let mut times: Vec<f64> = (0..=48).map(|j| t_end - depth * 10f64.powf(-j as f64 / 5.0)).collect();
        times.push(t_end);
        let series = FieldSeries::from_fn(d, &times, |x, t| oracle.value(x, t)).unwrap();
        let cfg = AlternativeConfig::default();
        let trace = oscillation_decay(&series, &IntrinsicCylinder::new(Cube::new([center], radius), t_end, theta), &cfg, m).unwrap();
        prop_assert!(trace.passed);
        let q = trace.delta.max(0.75);
        for r in &trace.records {
            prop_assert!(r.measured_ratio.unwrap() < 1.0);
            prop_assert_eq!(r.nested_quarter, Some(true));
        }
        let last = trace.records.last().unwrap();
        let n = trace.records.len() as i32;
        let final_osc = last.measured_osc * last.measured_ratio.unwrap();
        prop_assert!(final_osc <= trace.omega0 * q.powi(n) * (1.0 + 1e-12));
    }
}

proptest! {
    #[test]
    fn isoperimetric_fit_is_shift_invariant(
        slope in 0.5f64..3.0,
        shift in -2.0f64..2.0,
        k in 0.1f64..0.4,
        gap in 0.1f64..0.4,
    ) {
        let d = make_domain(1, 0.5, 96).unwrap();
        let w = ScalarField::from_fn(d, 0.0, |x| slope * (x[0] + 0.5) + 0.1 * (7.0 * x[0]).sin());
        let ws = ScalarField::from_fn(d, 0.0, |x| slope * (x[0] + 0.5) + 0.1 * (7.0 * x[0]).sin() + shift);
        let cube = Cube::new([0.0], 0.5);
        let (kk, ll) = (k * slope, (k + gap) * slope);
        let a = isoperimetric_check(&w, &cube, kk, ll).unwrap();
        let b = isoperimetric_check(&ws, &cube, kk + shift, ll + shift).unwrap();
        prop_assert_eq!(a.measure_above, b.measure_above);
        prop_assert_eq!(a.measure_below, b.measure_below);
        match (a.gamma_fit, b.gamma_fit) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300)),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn embedding_ratio_is_scale_invariant(lambda in 0.1f64..10.0, freq in 1.0f64..4.0) {
        let d = make_domain(1, 1.0, 64).unwrap();
        let bump = |x: &[f64], t: f64| (1.0 + t) * (std::f64::consts::FRAC_PI_2 * x[0] / 0.5).cos().powi(2) * (1.0 + 0.3 * (freq * x[0]).sin());
        let f = |x: &[f64], t: f64| if x[0].abs() < 0.5 { bump(x, t) } else { 0.0 };
        let s = FieldSeries::from_fn(d, &[0.0, 0.1, 0.2], f).unwrap();
        let sl = FieldSeries::from_fn(d, &[0.0, 0.1, 0.2], |x, t| lambda * f(x, t)).unwrap();
        let cyl = IntrinsicCylinder::new(Cube::new([0.0], 0.5), 0.2, 0.8);
        let a = embedding_check(&s, &cyl, 2.0, 2.0).unwrap();
        let b = embedding_check(&sl, &cyl, 2.0, 2.0).unwrap();
        let (ga, gb) = (a.gamma_estimate.unwrap(), b.gamma_estimate.unwrap());
        prop_assert!((ga - gb).abs() <= 1e-9 * ga);
    }
}
