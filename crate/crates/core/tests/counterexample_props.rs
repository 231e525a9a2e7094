use cbsim::counterexample::{build_scene, isometry_defect, lemma_rel_check, torus_grid, ut2_norm_closed_form, UTParams};
use cbsim::operator_space::cb_norm_estimate;
use cbsim::random::{complex_normal, rng};
use cbsim::{cr, C64, ComplexMatrix};
use proptest::prelude::*;

fn upper(r: &mut cbsim::random::SeededRng) -> ComplexMatrix {
    let d = |r: &mut cbsim::random::SeededRng| {
        let z = complex_normal(r);
        z / z.norm() * (0.5 + z.norm())
    };
    ComplexMatrix::from_rows(&[vec![d(r), complex_normal(r)], vec![cr(0.0), d(r)]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_form_matches_svd(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (a, b, d) = (complex_normal(&mut r), complex_normal(&mut r), complex_normal(&mut r));
        let m = ComplexMatrix::from_rows(&[vec![a, b], vec![cr(0.0), d]]);
        prop_assert!((ut2_norm_closed_form(a, b, d) - m.op_norm()).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn defect_is_nonnegative_and_phase_invariant(seed in any::<u64>(), phase in 0.0f64..std::f64::consts::TAU) {
        let scene = build_scene().unwrap();
        let mut r = rng(seed);
        let c = [upper(&mut r), upper(&mut r), upper(&mut r), upper(&mut r)];
        let d = isometry_defect(&scene, &c[0], &c[1], &c[2], &c[3], 8).unwrap();
        prop_assert!(d >= 0.0);
        let u = C64::from_polar(1.0, phase);
        for k in 0..4 {
            let mut moved = c.clone();
            moved[k] = moved[k].scale(u);
            let dm = isometry_defect(&scene, &moved[0], &moved[1], &moved[2], &moved[3], 8).unwrap();
            prop_assert!((dm - d).abs() <= 1e-12, "{dm} vs {d}");
        }
    }

    #[test]
    fn relation_check_only_asserts_under_the_hypothesis(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut z = || complex_normal(&mut r);
        let p = UTParams { alpha: z(), beta: z(), gamma: z(), alpha_p: z(), beta_p: z(), gamma_p: z(), delta_p: z() };
        let c = lemma_rel_check(&p, 1e-8, 8).unwrap();
        // generic parameters break the norm equality somewhere on the grid
        prop_assert!(!c.hypothesis_holds);
        prop_assert!(c.all_ok());
        prop_assert!(p.equality_gap(&torus_grid(8)) > 1e-8);
    }
}

#[test]
fn psi_and_its_inverse_are_unital_homomorphisms_with_finite_cb_norm() {
    let psi = build_scene().unwrap().psi;
    let inv = psi.inverse().unwrap();
    for f in [&psi, &inv] {
        assert!(f.is_unital() && f.is_multiplicative());
        let est = cb_norm_estimate(f, 8, 1).unwrap().lower;
        assert!(est.is_finite() && est >= 1.0 - 1e-9);
    }
}
