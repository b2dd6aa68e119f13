use chemolab::grid::make_domain;
use chemolab::ScalarField;
use chemolab_cli::checkpoint::{decode, encode, read, write};
use proptest::prelude::*;

proptest! {
    #[test]
    fn round_trip_is_bit_exact(
        dim in 1usize..=2,
        half in 4usize..10,
        extent in 0.1f64..10.0,
        time in 0.0f64..5.0,
        bits in proptest::collection::vec(any::<u64>(), 256),
    ) {
        let d = make_domain(dim, extent, 2 * half).unwrap();
        let values: Vec<f64> = (0..d.cell_count())
            .map(|i| f64::from_bits(bits[i % bits.len()]))
            .map(|x| if x.is_finite() { x } else { 0.0 })
            .collect();
        let f = ScalarField::new(d, values, time).unwrap();
        let back = decode(&encode("u", &f), "mem").unwrap().field;
        prop_assert_eq!(back.domain, f.domain);
        prop_assert_eq!(back.time.to_bits(), f.time.to_bits());
        prop_assert!(back.values.iter().zip(&f.values).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn file_round_trip() {
    let tmp = tempfile::TempDir::new().unwrap();
    let d = make_domain(3, 1.0, 8).unwrap();
    let f = ScalarField::from_fn(d, 0.25, |x| x[0] - 2.0 * x[1] + x[2].exp());
    let p = tmp.path().join("v.bin");
    write(&p, "v", &f).unwrap();
    let c = read(&p).unwrap();
    assert_eq!(c.name, "v");
    assert_eq!(c.field, f);
}
