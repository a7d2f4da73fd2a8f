use deglap::grid::{make_rect_domain, DomainMask, ScalarField};
use deglap::lattice::RadiusLadder;
use deglap::maximal::{fractional_maximal, MaximalConfig, StepDistribution};
use deglap::solver::{psi, v_p_map};
use deglap::spaces::{generalized_lorentz_norm, lorentz_norm, LorentzIndices, SigmaFunction};
use deglap::verify::vphi_ratio;
use deglap::weights::{muckenhoupt_aq, ScalarWeight, Sym2, WeightRole};
use proptest::prelude::*;

fn small_square() -> DomainMask {
    make_rect_domain(12, 12, 1.0 / 11.0).unwrap()
}

fn field_from(mask: &DomainMask, v: &[f64]) -> ScalarField {
    ScalarField::new(*mask.grid(), v.to_vec()).unwrap()
}

fn vec2() -> impl Strategy<Value = [f64; 2]> {
    (-1e2f64..1e2, -1e2f64..1e2).prop_map(|(a, b)| [a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_power_ratio_is_one_half(z1 in vec2(), z2 in vec2()) {
        prop_assume!(z1 != z2);
        prop_assert!((vphi_ratio(z1, z2, 2.0) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn v_p_has_the_right_modulus(z in vec2(), p in 1.1f64..5.0) {
        let v = v_p_map(z, p);
        let n2 = v[0] * v[0] + v[1] * v[1];
        let t = z[0].hypot(z[1]);
        prop_assert!((n2 - p * psi(t, p)).abs() <= 1e-9 * n2.max(1.0));
    }

    #[test]
    fn log_exp_round_trip(a in 0.05f64..20.0, b in 0.05f64..20.0, theta in 0.0f64..3.2) {
        let m = Sym2::from_full([[a, 0.0], [0.0, b]]).unwrap().rotated(theta);
        let back = m.log().unwrap().exp();
        let (x, y) = (m.to_full(), back.to_full());
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((x[i][j] - y[i][j]).abs() <= 1e-10 * a.max(b));
            }
        }
    }

    #[test]
    fn maximal_is_homogeneous_and_monotone(
        vals in prop::collection::vec(0.0f64..10.0, 144),
        bump in prop::collection::vec(0.0f64..1.0, 144),
        c in 0.1f64..5.0,
        alpha in 0.0f64..1.5,
    ) {
        let mask = small_square();
        let cfg = MaximalConfig::new(alpha, RadiusLadder::default_for(&mask)).unwrap();
        let f = field_from(&mask, &vals);
        let bigger: Vec<f64> = vals.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let mf = fractional_maximal(&f, &mask, &cfg).unwrap();
        let mcf = fractional_maximal(&f.scaled(c), &mask, &cfg).unwrap();
        let mg = fractional_maximal(&field_from(&mask, &bigger), &mask, &cfg).unwrap();
        for k in 0..144 {
            prop_assert!((mcf.values()[k] - c * mf.values()[k]).abs() <= 1e-10 * (1.0 + c * mf.values()[k]));
            prop_assert!(mg.values()[k] >= mf.values()[k] - 1e-12);
        }
    }

    #[test]
    fn distribution_is_non_increasing(vals in prop::collection::vec(-5.0f64..5.0, 144), l1 in 0.0f64..6.0, l2 in 0.0f64..6.0) {
        let mask = small_square();
        let mu = ScalarWeight::unit(*mask.grid(), WeightRole::Mu);
        let d = StepDistribution::new(&field_from(&mask, &vals), &mu, &mask).unwrap();
        let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
        prop_assert!(d.eval(hi) <= d.eval(lo));
    }

    #[test]
    fn lorentz_norms_are_homogeneous(vals in prop::collection::vec(0.0f64..3.0, 144), c in 0.1f64..10.0, q in 0.5f64..4.0, s in 0.5f64..4.0) {
        let mask = small_square();
        let mu = ScalarWeight::unit(*mask.grid(), WeightRole::Mu);
        let f = field_from(&mask, &vals);
        let idx = LorentzIndices::new(q, s).unwrap();
        let a = lorentz_norm(&f, &mu, &mask, idx).unwrap();
        let b = lorentz_norm(&f.scaled(c), &mu, &mask, idx).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + c * a));
        let g = generalized_lorentz_norm(&f, &mu, &mask, &SigmaFunction::Identity, idx).unwrap();
        prop_assert_eq!(a.to_bits(), g.to_bits());
    }

    #[test]
    fn muckenhoupt_constant_is_at_least_one(vals in prop::collection::vec(0.1f64..10.0, 144), q in 1.2f64..4.0) {
        let mask = small_square();
        let w = ScalarWeight::new(field_from(&mask, &vals), WeightRole::Omega).unwrap();
        let a = muckenhoupt_aq(&w, &mask, q, &RadiusLadder::default_for(&mask)).unwrap();
        prop_assert!(a >= 1.0 - 1e-12);
    }
}
