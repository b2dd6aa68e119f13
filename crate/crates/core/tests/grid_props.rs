use chemolab::grid::{cube_cells, make_domain, Cube};
use proptest::prelude::*;

proptest! {
    #[test]
    fn interior_cube_measure_error_is_first_order(
        dim in 1usize..=3,
        half in 4usize..24,
        radius in 0.2f64..0.9,
        cx in -0.5f64..0.5,
        cy in -0.5f64..0.5,
        cz in -0.5f64..0.5,
    ) {
        let d = make_domain(dim, 2.0, 2 * half).unwrap();
        let h = d.spacing();
        prop_assume!(radius > 2.0 * h);
        let center = [cx, cy, cz][..dim].to_vec();
        let cube = Cube::new(center, radius);
        let block = cube_cells(&d, &cube).unwrap();
        let nominal = (2.0 * radius).powi(dim as i32);
        let rel = (block.measure() - nominal).abs() / nominal;
        prop_assert!(rel <= 2.0 * dim as f64 * h / radius + 1e-12, "rel = {rel}, h = {h}");
    }
}
