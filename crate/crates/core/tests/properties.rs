use proptest::prelude::*;

use qkzlab::combinatorics::{all_nu, enumerate_z, lambda_invariants, partial_order_leq, NuVector};
use qkzlab::contours::{build_contour, validate_contour, Anchor, ContourConfig, PathSpec, PoleFamily, PoleSpec};
use qkzlab::integration::{integrate_path, Estimate, QuadratureConfig};
use qkzlab::qkz_operators::{det_k_closed, k_operator, Params, Step};
use qkzlab::scalar::{cx, log_rel_err, re, rel_err, Cx};
use qkzlab::special_functions::{DoubleSine, Periods};
use qkzlab::weights::{exchange_check, perm_tuples, GammaAssignment};

fn periods() -> impl Strategy<Value = Periods<f64>> {
    (3.0f64..12.0, 3.0f64..12.0).prop_filter_map("rational ratio", |(a, b)| Periods::new(a, b).ok())
}

fn nu_strategy() -> impl Strategy<Value = NuVector> {
    prop_oneof![
        (1usize..=3).prop_flat_map(|s| prop::sample::select(all_nu(2, s))),
        (1usize..=3).prop_flat_map(|s| prop::sample::select(all_nu(3, s))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn s2_shift_relations(p in periods(), xr in -10.0f64..25.0, xi in -10.0f64..10.0) {
        let ds = DoubleSine::new(p);
        let x = cx(xr, xi);
        let pi = std::f64::consts::PI;
        for (a, b) in [(p.omega1, p.omega2), (p.omega2, p.omega1)] {
            let lhs = ds.log_s2(x + re(a)).unwrap() - ds.log_s2(x).unwrap();
            let rhs = -(re(2.0) * (x * (pi / b)).sin()).ln();
            prop_assert!(log_rel_err(lhs, rhs) < 1e-9, "x={x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn s2_reflection(p in periods(), xr in -5.0f64..20.0, xi in -8.0f64..8.0) {
        let ds = DoubleSine::new(p);
        let x = cx(xr, xi);
        let s = ds.log_s2(x).unwrap() + ds.log_s2(re(p.sum()) - x).unwrap();
        prop_assert!(log_rel_err(s, re(0.0)) < 1e-9);
    }

    #[test]
    fn s2_conjugation(p in periods(), xr in -5.0f64..20.0, xi in -8.0f64..8.0) {
        let ds = DoubleSine::new(p);
        let x = cx(xr, xi);
        let a = ds.log_s2(x).unwrap();
        let b = ds.log_s2(x.conj()).unwrap().conj();
        prop_assert!(log_rel_err(a, b) < 1e-10);
    }

    #[test]
    fn partial_order_is_a_partial_order(nu in nu_strategy()) {
        let z = enumerate_z(&nu);
        for a in &z {
            prop_assert!(partial_order_leq(a, a).unwrap());
            for b in &z {
                let ab = partial_order_leq(a, b).unwrap();
                if ab && partial_order_leq(b, a).unwrap() {
                    prop_assert_eq!(a, b);
                }
                for c in &z {
                    if ab && partial_order_leq(b, c).unwrap() {
                        prop_assert!(partial_order_leq(a, c).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn index_set_counts(nu in nu_strategy()) {
        let z = enumerate_z(&nu);
        prop_assert_eq!(z.len() as u64, lambda_invariants(&nu.lambda()).lambda0);
        for jt in &z {
            for j in 1..nu.n() {
                let c = jt.entries().iter().filter(|&&e| e >= j).count();
                prop_assert_eq!(c, nu.get(j));
            }
        }
        for w in z.windows(2) {
            prop_assert!(w[0].entries() < w[1].entries());
        }
        let perms = perm_tuples(&nu).unwrap();
        prop_assert_eq!(perms.len() as u64, nu.permutation_count());
        prop_assert_eq!(perms.iter().map(|p| p.sign as i64).sum::<i64>(), if nu.permutation_count() == 1 { 1 } else { 0 });
    }

    #[test]
    fn detk_closed_form(nu in nu_strategy(), beta in prop::collection::vec(-3.0f64..3.0, 3), mu in prop::collection::vec(-2.0f64..2.0, 3)) {
        let (n, sites) = (nu.n(), nu.sites());
        let params = Params::new(n, sites, 7.3, 9.4, mu[..n].to_vec(), beta[..sites].to_vec()).unwrap();
        for m in 1..=sites {
            for step in [Step::Rho, Step::Lambda] {
                let d = k_operator(m, &params, &nu, step).unwrap().det();
                let c = det_k_closed(m, &params, &nu, step).unwrap();
                prop_assert!(rel_err(d, c) < 1e-11, "{d} vs {c}");
            }
        }
    }

    #[test]
    fn exchange_relation(nu in nu_strategy(), beta in prop::collection::vec(-3.0f64..3.0, 3), g in prop::collection::vec((-2.0f64..2.0, -0.5f64..0.5), 6)) {
        let (n, sites) = (nu.n(), nu.sites());
        prop_assume!(sites >= 2);
        let params = Params::new(n, sites, 7.3, 9.4, vec![0.0; n], beta[..sites].to_vec()).unwrap();
        let flat: Vec<Cx<f64>> = g[..nu.dimension()].iter().map(|&(a, b)| cx(a, b)).collect();
        let ga = GammaAssignment::from_flat(&nu, &flat, &params.beta).unwrap();
        for jt in enumerate_z(&nu) {
            for k in 1..sites {
                for step in [Step::Rho, Step::Lambda] {
                    prop_assert!(exchange_check(&jt, k, &ga, step, &params).unwrap() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn built_contours_validate(anchors in prop::collection::vec((-6.0f64..6.0, -0.8f64..0.8), 1..4), n in 2usize..4) {
        let params = Params::new(n, 1, 7.3, 9.4, vec![0.0; n], vec![0.0]).unwrap();
        let cfg = ContourConfig::for_params(&params);
        let c = std::f64::consts::PI / n as f64;
        let mut poles = Vec::new();
        for (i, &(a, b)) in anchors.iter().enumerate() {
            for (fam, base) in [(PoleFamily::Phi, c), (PoleFamily::Psi, 2.0 * c)] {
                for off in [-base, base] {
                    poles.push(PoleSpec::near(Anchor::Var(i), fam, cx(a, b), off, true));
                }
            }
        }
        if let Ok(path) = build_contour(&poles, &cfg) {
            let check = validate_contour(&path, &poles, 0.0);
            prop_assert!(check.valid, "{check:?}");
        }
    }

    #[test]
    fn line_integral_independent_of_height(a in -2.0f64..2.0, h in -1.0f64..1.0) {
        let f = move |z: Cx<f64>| Ok(Estimate { value: (-(z - re(a)) * (z - re(a))).exp(), err: 0.0 });
        let r = integrate_path(&f, &PathSpec::straight(h, 12.0), &QuadratureConfig::standard()).unwrap();
        prop_assert!(rel_err(r.value, re(std::f64::consts::PI.sqrt())) < 1e-10);
    }
}
