//! Invariants checked over randomly drawn environments and inputs.

use std::f64::consts::PI;

use proptest::prelude::*;
use rcmhom_core::corrector::cell_a_hom;
use rcmhom_core::env::{sample_environment, Environment, Geometry, LawSpec};
use rcmhom_core::lattice::{apply, assemble_operator, dirichlet_energy, Epsilon, GridFunction};
use rcmhom_core::paths::{default_path_family, nu, nu_l, path_family, rho, DEFAULT_PATH_LENGTH};
use rcmhom_core::walker::{lattice_cumulant, local_times, simulate_vsrw};
use rcmhom_core::{EdgeId, Site};

fn law() -> impl Strategy<Value = LawSpec> {
    prop_oneof![
        (0.1f64..3.0).prop_map(LawSpec::Constant),
        (0.2f64..2.0).prop_map(|gamma| LawSpec::IidParetoLower { gamma }),
        (0.01f64..1.0, 0.0f64..1.0).prop_map(|(b, p)| LawSpec::IidTwoPoint { a: 1.0, b, p }),
        (0.2f64..2.0).prop_map(|gamma| LawSpec::LongRangePolynomial { base: Box::new(LawSpec::IidParetoLower { gamma }), alpha: 6.0 }),
    ]
}

fn site(d: usize, r: i64) -> impl Strategy<Value = Site> {
    proptest::collection::vec(-r..=r, d).prop_map(|c| Site::from_slice(&c))
}

fn boxed(law: LawSpec, d: usize, n: i64, seed: u64) -> Environment {
    sample_environment(law, Geometry::boxed(d, n).unwrap(), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conductance_is_symmetric_and_deterministic(law in law(), seed: u64, d in 1usize..=3, x in site(3, 50), z in site(3, 3)) {
        prop_assume!(!z.coords(d).iter().all(|&c| c == 0));
        let x = Site::from_slice(x.coords(d));
        let z = Site::from_slice(z.coords(d));
        let env = boxed(law.clone(), d, 64, seed);
        let w = env.conductance(x, z).unwrap();
        prop_assert_eq!(w.to_bits(), env.conductance(x + z, -z).unwrap().to_bits());
        prop_assert_eq!(w.to_bits(), boxed(law, d, 64, seed).conductance(x, z).unwrap().to_bits());
        prop_assert!(w >= 0.0);
        if z.is_unit_step() {
            prop_assert!(w > 0.0);
        }
    }

    #[test]
    fn operator_is_symmetric_and_matches_the_energy(law in law(), seed: u64, d in 1usize..=2, coeffs in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let env = boxed(law, d, 8, seed);
        let eps = Epsilon::inverse_of(8).unwrap();
        let op = assemble_operator(&env, eps, None).unwrap();
        prop_assert!(op.matrix().is_symmetric());
        let u = GridFunction::sample(eps, d, &|x: &[f64]| {
            coeffs.iter().enumerate().map(|(k, c)| c * x.iter().map(|&t| (PI * (k + 1) as f64 * (t + 1.0) / 2.0).sin()).product::<f64>()).sum()
        });
        let energy = dirichlet_energy(&env, eps, &u).unwrap();
        let form = u.inner(&apply(&op, &u).unwrap()).unwrap();
        prop_assert!((energy - form).abs() <= 1e-10 * energy.abs().max(1e-300));
        prop_assert!(energy >= 0.0);
    }

    #[test]
    fn path_families_are_edge_disjoint(d in 1usize..=4, base in site(4, 5), axis in 0usize..4, l in 1u32..=12) {
        let axis = axis % d;
        let e = EdgeId::new(Site::from_slice(base.coords(d)), Site::unit(axis)).unwrap();
        let family = path_family(d, e, l).unwrap();
        prop_assert!(family.is_edge_disjoint());
        prop_assert!(family.paths().iter().all(|p| p.len() as u32 - 1 <= l));
        prop_assert_eq!(default_path_family(d, e).unwrap().len(), if d == 1 { 1 } else { 2 * d });
    }

    #[test]
    fn optimized_measure_is_dominated(law in law(), seed: u64, d in 1usize..=3, x in site(3, 20), l in 1u32..=9) {
        let env = boxed(law, d, 32, seed);
        let x = Site::from_slice(x.coords(d));
        let plain = nu(&env, x);
        let optimized = nu_l(&env, x, l).unwrap();
        prop_assert!(optimized <= plain * (1.0 + 1e-12));
        prop_assert!(nu_l(&env, x, DEFAULT_PATH_LENGTH).unwrap() <= optimized * (1.0 + 1e-12));
    }

    #[test]
    fn rho_increases_with_q(d in 2usize..=6, q in 1.0f64..50.0, dq in 0.01f64..10.0) {
        let a = rho(d, q).unwrap();
        let b = rho(d, q + dq).unwrap();
        prop_assert!(b > a);
        prop_assert!(a >= 1.0 - 1e-15 || q < d as f64 / 2.0);
    }

    #[test]
    fn local_times_conserve_and_grow(seed: u64, d in 1usize..=3, t1 in 0.0f64..40.0, dt in 0.0f64..40.0) {
        let env = boxed(LawSpec::IidParetoLower { gamma: 1.0 }, d, 64, seed);
        let traj = simulate_vsrw(&env, Site::ORIGIN, 80.0, seed ^ 0x5eed).unwrap();
        let a = local_times(&traj, t1).unwrap();
        let b = local_times(&traj, t1 + dt).unwrap();
        prop_assert!((a.total() - t1).abs() <= 1e-12 * t1.max(1.0));
        prop_assert!((b.total() - (t1 + dt)).abs() <= 1e-12 * (t1 + dt).max(1.0));
        for (z, &v) in &a.times {
            prop_assert!(v >= 0.0);
            prop_assert!(b.get(z) >= v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn a_hom_is_translation_invariant(seed: u64, d in 1usize..=2, shift in site(2, 9)) {
        let env = sample_environment(LawSpec::IidParetoLower { gamma: 1.5 }, Geometry::torus(d, 4).unwrap(), seed).unwrap();
        let a = cell_a_hom(&env, 1e-12).unwrap();
        let b = cell_a_hom(&env.translated(Site::from_slice(shift.coords(d))), 1e-12).unwrap();
        prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-9 * a.matrix().amax());
    }

    #[test]
    fn cumulant_decreases_in_the_potential(seed: u64, c in 0.0f64..2.0, bump in 0.0f64..3.0, center in -0.8f64..0.8) {
        let env = boxed(LawSpec::IidParetoLower { gamma: 1.5 }, 1, 32, seed);
        let v = |x: &[f64]| (PI * x[0] / 2.0).cos();
        let raised = |x: &[f64]| v(x) + c + bump * (-(x[0] - center).powi(2) * 20.0).exp();
        let low = lattice_cumulant(&env, Some(&v), 1e3, 10.0).unwrap().value;
        let high = lattice_cumulant(&env, Some(&raised), 1e3, 10.0).unwrap().value;
        prop_assert!(high <= low + 1e-9);
    }
}
