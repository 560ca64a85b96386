use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tileopt_core::density::{project_exact, DensityField, GridSpec};
use tileopt_core::energy::p_energy;
use tileopt_core::kernel::Kernel;
use tileopt_core::lattice::Lattice;
use tileopt_core::polygon2d::{random_hexagon, steiner_symmetrize, Axis};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn projection_is_feasible_idempotent_and_nonexpansive(
        (u, v) in (1usize..9).prop_flat_map(|k| (
            prop::collection::vec(-3.0f64..3.0, k),
            prop::collection::vec(-3.0f64..3.0, k),
        ))
    ) {
        let pu = project_exact(&u).unwrap();
        let pv = project_exact(&v).unwrap();
        prop_assert!((pu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pu.iter().all(|x| (-1e-15..=1.0 + 1e-15).contains(x)));
        let again = project_exact(&pu).unwrap();
        prop_assert!(pu.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-12));
        let dp: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
        let d: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&dp) <= norm(&d) + 1e-12);
    }

    #[test]
    fn kernels_are_even_and_monotone(x in -4.0f64..4.0, y in -4.0f64..4.0, t in 0.0f64..1.0) {
        let kernels = [
            Kernel::gaussian(1.3, 2).unwrap(),
            Kernel::exponential(0.7, 2).unwrap(),
            Kernel::indicator(1.5, 2).unwrap(),
            Kernel::fractional(1.0, 0.5, 2).unwrap().regularize_fractional(0.2).unwrap(),
        ];
        for k in &kernels {
            prop_assert_eq!(k.eval(&[x, y]).unwrap(), k.eval(&[-x, -y]).unwrap());
            let near = k.eval(&[t * x, t * y]).unwrap();
            prop_assert!(near >= k.eval(&[x, y]).unwrap());
        }
    }

    #[test]
    fn density_csv_round_trips(seed in any::<u64>(), n in 2usize..6) {
        let spec = GridSpec::new(Lattice::hexagonal(), n, 1).unwrap();
        let f = DensityField::random(&spec, seed);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = DensityField::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(f, g);
    }

    #[test]
    fn steiner_symmetrization_preserves_area(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::PI) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hex = random_hexagon(&mut rng).to_polygon().unwrap();
        let axis = Axis::new([0.1, -0.2], [angle.cos(), angle.sin()]).unwrap();
        let sym = steiner_symmetrize(&hex, &axis);
        prop_assert!((sym.area() - hex.area()).abs() <= 1e-12);
    }

    #[test]
    fn reduction_keeps_covolume_and_finds_shortest_vector(
        a in 0.3f64..2.0, b in -3.0f64..3.0, c in 0.3f64..2.0, k in -4i32..4,
    ) {
        let l = Lattice::new(vec![vec![a, 0.0], vec![b + f64::from(k) * a, c]]).unwrap();
        let r = l.reduce();
        prop_assert!((r.covolume() - l.covolume()).abs() <= 1e-12 * l.covolume());
        prop_assert!((norm(&r.basis()[0]) - l.min_distance()).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_identity_on_random_fields(seed in any::<u64>()) {
        let spec = GridSpec::new(Lattice::integer(2).unwrap(), 4, 1).unwrap();
        let k = Kernel::gaussian(1.0, 2).unwrap();
        let b = p_energy(&DensityField::random(&spec, seed), &k).unwrap();
        prop_assert!(b.identity_residual <= 1e-10 * b.p_value.abs().max(1.0));
        prop_assert!(b.j_value >= 0.0 && b.p_value >= -1e-14);
    }
}
