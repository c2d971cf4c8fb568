#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use spmlab::analysis::{
    gubinelli_nu, k_functional_interpolation, renormalized_measure_identity, FieldView,
    SyntheticSplitCosts,
};
use spmlab::grid::{
    parabolic_norm, rescaled_test, wrap, Grid, Profile, SpaceTimePoint, TestFunction,
};
use spmlab::kernels::dyadic_partition;
use spmlab::kinetic::split_velocities;
use spmlab::model::{Symbol, WhiteModel};
use spmlab::noise::sample_space_white;
use spmlab::nonlinearity::{make_porous, regularize, Nonlinearity};
use spmlab::solver::{solve, Counterterm, SolverConfig, ZeroForcing};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn parabolic_norm_is_one_homogeneous(t in -1.0f64..1.0, x in -0.2f64..0.2, y in -0.2f64..0.2, l in 0.05f64..1.0) {
        let p = SpaceTimePoint::new(t, [x, y]);
        let q = SpaceTimePoint::new(l * l * t, [l * x, l * y]);
        prop_assert!((parabolic_norm(&q) - l * parabolic_norm(&p)).abs() < 1e-14);
    }

    #[test]
    fn test_functions_ignore_lattice_shifts(t in 0.2f64..0.8, x in 0.0f64..1.0, k in -3i32..3, l in 0.1f64..1.0) {
        let base = SpaceTimePoint::new(0.5, [0.3, 0.6]);
        let tf = TestFunction::new(Profile::new(2), base, l).unwrap();
        let z = SpaceTimePoint::new(t, [x, 0.55]);
        let zk = SpaceTimePoint::new(t, [x + k as f64, 0.55 - k as f64]);
        prop_assert!((rescaled_test(&tf, &z) - rescaled_test(&tf, &zk)).abs() < 1e-9 * (1.0 + rescaled_test(&tf, &z).abs()));
        prop_assert!((0.0..1.0).contains(&wrap(x + k as f64)));
    }

    #[test]
    fn dyadic_weights_sum_to_one(a in 1e-6f64..4.0) {
        let s: f64 = dyadic_partition(a).unwrap().iter().map(|w| w.1).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularized_diffusivity_dominates(m in 1.05f64..1.95, eps in 1e-3f64..0.5, v in -2.0f64..2.0) {
        let r = regularize(m, eps).unwrap();
        let p = make_porous(m).unwrap();
        prop_assert!(r.a(v) >= p.a(v) * (1.0 - 1e-12));
        prop_assert!(r.a(v) >= r.floor() * (1.0 - 1e-12));
        if v.abs() >= eps {
            prop_assert_eq!(r.a(v), p.a(v));
        }
    }

    #[test]
    fn noise_is_real_periodic_and_hermitian(seed in 0u64..1000, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let n = sample_space_white(2, 6, seed).unwrap();
        let z = n.eval_complex(0.0, [x, y]).unwrap();
        prop_assert!(z.im.abs() < 1e-12 * (1.0 + z.re.abs()));
        let shifted = n.evaluate(0.0, [x + 1.0, y - 2.0]).unwrap();
        prop_assert!((shifted - z.re).abs() < 1e-9);
        for i in 0..n.lattice.len() {
            prop_assert_eq!(n.coeffs[n.lattice.partner(i)], n.coeffs[i].conj());
        }
    }

    #[test]
    fn lolly_vanishes_at_its_base(seed in 0u64..200, t in 0.01f64..1.0, x in 0.0f64..1.0, a in 0.1f64..3.0) {
        let n = sample_space_white(2, 8, seed).unwrap();
        let m = WhiteModel::new(&n).unwrap();
        let p = SpaceTimePoint::new(t, [x, 1.0 - x]);
        prop_assert!(m.eval(Symbol::Lolly, a, &p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn split_partitions_the_solution(m in 1.1f64..1.9, k in 1i32..10, amp in 0.1f64..0.9) {
        let nl = Nonlinearity::standard(m, 0.01, 2.0).unwrap();
        let g = Grid::new(1, 16, 1e-4, 5).unwrap();
        let u0 = g.sample(|x| amp * (std::f64::consts::TAU * x[0]).sin());
        let sol = solve(&u0, &nl, &ZeroForcing, &Counterterm::None, &g, &SolverConfig::default()).unwrap();
        let u = sol.slice(5);
        let s = split_velocities(u, &nl, 2f64.powi(-k)).unwrap();
        for i in 0..u.len() {
            prop_assert!((u[i] - s.u_less[i] - s.u_greater[i]).abs() < 1e-10);
            prop_assert!(s.u_less[i].abs() <= u[i].abs() + 1e-15 && s.u_less[i] * u[i] >= 0.0);
        }
    }

    #[test]
    fn measure_identity_holds_on_random_fields(seed in 0u64..100, vals in prop::collection::vec(-1.5f64..1.5, 3 * 16)) {
        let g = Grid::new(1, 16, 1e-3, 2).unwrap();
        let n = sample_space_white(1, 4, seed).unwrap();
        let m = WhiteModel::new(&n).unwrap();
        let nl = Nonlinearity::standard(1.5, 0.05, 1.0).unwrap();
        let view = FieldView::new(g, &vals).unwrap();
        let nu = gubinelli_nu(view, &nl, Some(&m));
        let id = renormalized_measure_identity(view, &nl, Some(&m), &nu);
        prop_assert!(id.max_abs < 1e-10 * (1.0 + id.max_term));
    }

    #[test]
    fn k_functional_is_nondecreasing(m in 1.05f64..1.95, alpha in 0.5f64..0.99) {
        let lams: Vec<f64> = (1..30).map(|k| 1.5f64.powi(-k)).collect();
        let rep = k_functional_interpolation(&SyntheticSplitCosts { m, alpha, eps: 0.0 }, m, alpha, &lams, 0.0, 40).unwrap();
        prop_assert!(rep.nondecreasing);
    }
}
