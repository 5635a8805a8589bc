use gammaflow::energy::Energy;
use gammaflow::profile::length_energy_min;
use gammaflow::sbv::Jump;
use gammaflow::{Grid, Profile, SbvSignal, Schedule, Signal};
use proptest::prelude::*;

proptest! {
    #[test]
    fn profile_is_point_symmetric(k in 1usize..=6, s in 0.0f64..=1.0) {
        let p = Profile::new(k).unwrap();
        prop_assert!((p.eval_unit(s) + p.eval_unit(1.0 - s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_is_monotone(k in 1usize..=6, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let p = Profile::new(k).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(p.eval_unit(lo) <= p.eval_unit(hi) + 1e-15);
    }

    #[test]
    fn jump_cost_scales_with_root_of_height(k in 1usize..=8, z in 1e-3f64..1e3) {
        let p = Profile::new(k).unwrap();
        let (t, m) = length_energy_min(k, p.c_k_real() * z * z);
        prop_assert!((m / p.jump_density(z) - 1.0).abs() < 1e-12);
        prop_assert!((t / p.optimal_length(z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_cost_nothing(c in -5.0f64..5.0, k in 1usize..=3, n in 10usize..80) {
        let s = Schedule::canonical(1e-6).unwrap();
        let u = Signal::from_fn(Grid::unit(n).unwrap(), |_| c);
        prop_assert_eq!(Energy::perona_malik(&s, k).unwrap().value(&u).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_reflection_invariant(seed in prop::collection::vec(-1.0f64..1.0, 12..40), k in 1usize..=3) {
        let grid = Grid::unit(seed.len()).unwrap();
        let s = Schedule::canonical(1e-4).unwrap();
        let e = Energy::perona_malik(&s, k).unwrap();
        let u = Signal::new(grid, seed.clone()).unwrap();
        let rev = Signal::new(grid, seed.iter().rev().copied().collect()).unwrap();
        let (a, b) = (e.value(&u).unwrap(), e.value(&rev).unwrap());
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn signal_csv_round_trip(values in prop::collection::vec(-1e6f64..1e6, 2..50)) {
        let u = Signal::new(Grid::unit(values.len()).unwrap(), values).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = Signal::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), u.values());
    }

    #[test]
    fn sbv_json_round_trip(t in 0.2f64..0.8, z in -3.0f64..3.0, eta in 0.01f64..0.15) {
        prop_assume!(z.abs() > 1e-3);
        let u = SbvSignal::piecewise_constant(vec![Jump { t, z, eta }]).unwrap();
        let back = SbvSignal::from_json_str(&u.to_json_string().unwrap()).unwrap();
        prop_assert_eq!(back.value(0.9), z);
        prop_assert_eq!(back, u);
    }
}
