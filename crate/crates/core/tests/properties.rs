use std::f64::consts::PI;

use kecone_core::abelian::{
    cocycle_residual, descent_check, lattice_embed, reference_period_data, validate_period_data,
};
use kecone_core::ball::{
    bundle_level, cusp_height, deck_apply, deck_closure_residual, deck_compose, deck_inverse, heisenberg_forward,
    heisenberg_identity_residual, heisenberg_inverse, point_at_level,
};
use kecone_core::calabi::{ode_residual, rho_closed};
use kecone_core::quasi::{
    chart_map, iota_shift, lattice_reduce, normalize_point, tau_scale, ReferenceDomains, EPSILON_1, TARGET_LEVEL,
};
use kecone_core::{Complex64, DeckElement, HeisenbergPoint, LatticeVector, UpstairsPoint};
use proptest::prelude::*;

fn complex(bound: f64) -> impl Strategy<Value = Complex64> {
    (-bound..bound, -bound..bound).prop_map(|(a, b)| Complex64::new(a, b))
}

fn pd_index() -> impl Strategy<Value = usize> {
    0..reference_period_data().len()
}

fn upstairs(n: usize) -> impl Strategy<Value = UpstairsPoint> {
    (complex(3.0), prop::collection::vec(complex(2.0), n)).prop_map(|(u, z)| UpstairsPoint::new(u, z))
}

fn deck(n: usize) -> impl Strategy<Value = DeckElement> {
    (
        prop::collection::vec(-5i64..=5, n),
        prop::collection::vec(-5i64..=5, n),
        -5i64..=5,
    )
        .prop_map(|(m, l, p)| DeckElement::new(m, l, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reference_data_validates(i in pd_index()) {
        let pd = &reference_period_data()[i];
        let rep = validate_period_data(pd).unwrap();
        prop_assert!(rep.relation_residual <= 1e-12);
        prop_assert!(rep.max_eigenvalue() < 0.0);
    }

    #[test]
    fn heisenberg_identity_and_round_trip(
        (i, x) in pd_index().prop_flat_map(|i| (Just(i), upstairs(reference_period_data()[i].n())))
    ) {
        let pd = &reference_period_data()[i];
        prop_assert!(heisenberg_identity_residual(pd, &x) <= 1e-11);
        let back = heisenberg_inverse(pd, &heisenberg_forward(pd, &x));
        prop_assert!((back.u - x.u).norm() <= 1e-12);
        for (a, b) in back.z.iter().zip(&x.z) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn deck_invariance_and_closure(
        (i, x, g1, g2) in pd_index().prop_flat_map(|i| {
            let n = reference_period_data()[i].n();
            (Just(i), upstairs(n), deck(n), deck(n))
        })
    ) {
        let pd = &reference_period_data()[i];
        let moved = deck_apply(pd, &g1, &x);
        let f = cusp_height(pd, &x);
        prop_assert!((cusp_height(pd, &moved) - f).abs() <= 1e-10 * (1.0 + f.abs()));
        prop_assert!(deck_closure_residual(pd, &g1, &g2) <= 1e-10);
        let g = deck_compose(pd, &g1, &g2).unwrap();
        let two = deck_apply(pd, &g2, &moved);
        let one = deck_apply(pd, &g, &x);
        prop_assert!((two.u - one.u).norm() <= 1e-9 * (1.0 + one.u.norm()));
        let inv = deck_apply(pd, &deck_inverse(pd, &g1), &moved);
        prop_assert!((inv.u - x.u).norm() <= 1e-9 * (1.0 + x.u.norm()));
    }

    #[test]
    fn bundle_descent_and_cocycle(
        (i, a, b, z) in pd_index().prop_flat_map(|i| {
            let n = reference_period_data()[i].n();
            (
                Just(i),
                prop::collection::vec(-3i64..=3, 2 * n),
                prop::collection::vec(-3i64..=3, 2 * n),
                prop::collection::vec(complex(1.5), n),
            )
        })
    ) {
        let pd = &reference_period_data()[i];
        let (a, b) = (LatticeVector::new(a), LatticeVector::new(b));
        prop_assert!(descent_check(pd, &a, &z) <= 1e-10);
        prop_assert!(cocycle_residual(pd, &a, &b, &z) <= 1e-10);
    }

    #[test]
    fn lattice_reduce_lands_in_cell(
        (i, z) in pd_index().prop_flat_map(|i| {
            let n = reference_period_data()[i].n();
            (Just(i), prop::collection::vec(complex(20.0), n))
        })
    ) {
        let pd = &reference_period_data()[i];
        let (g, z0) = lattice_reduce(pd, &z);
        for c in pd.lattice_coords(&z0) {
            prop_assert!((-0.5 - 1e-12..0.5 + 1e-12).contains(&c));
        }
        for ((a, b), c) in z0.iter().zip(lattice_embed(pd, &g)).zip(&z) {
            prop_assert!((a + b - c).norm() <= 1e-12 * (1.0 + c.norm()));
        }
    }

    #[test]
    fn iota_and_tau_act_on_the_level(
        u in complex(5.0), zt in complex(1.0), k in -100i64..100, a in 1.0f64..1e3
    ) {
        let y = HeisenbergPoint::new(u, vec![zt]);
        prop_assert_eq!(iota_shift(k, &y).level(), y.level());
        let s = tau_scale(a, &y).level();
        prop_assert!((s * a * a - y.level()).abs() <= 1e-12 * (1.0 + y.level().abs()));
    }

    #[test]
    fn closed_profile_solves_normalized_equation(n in 1usize..=3, s in -500.0f64..-0.05) {
        let p = rho_closed(n, s).unwrap();
        let c_norm = ((n + 2) as f64).powi(n as i32 + 1);
        prop_assert!(ode_residual(&p, s, n, c_norm).abs() <= 1e-12 * p.rho_ss.max(1.0));
    }

    #[test]
    fn normalization_round_trip(
        (i, depth, coeffs, theta) in pd_index().prop_flat_map(|i| {
            let n = reference_period_data()[i].n();
            (Just(i), 3.0f64.ln()..1e6f64.ln(), prop::collection::vec(-4.0f64..4.0, 2 * n), -PI..PI)
        })
    ) {
        let pd = &reference_period_data()[i];
        let z = pd.from_lattice_coords(&coeffs);
        let level = -depth.exp();
        let q = point_at_level(pd, &z, level, theta);
        prop_assert!((bundle_level(pd, &q) - level).abs() <= 1e-9 * level.abs());
        let (chart, big_q) = normalize_point(pd, &q).unwrap();
        prop_assert!((big_q.level() - TARGET_LEVEL).abs() <= 1e-9);
        let dom = ReferenceDomains::new(pd);
        prop_assert!(dom.margins(&ReferenceDomains::inner(), &big_q).min() >= EPSILON_1);
        prop_assert!(chart_map(pd, &chart, &big_q).unwrap().distance(&q) <= 1e-9);
    }
}
