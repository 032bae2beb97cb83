//! Reference values from an independent 30-digit evaluation of the S₂ integral
//! representation (Gauss-Legendre on [0, 24] plus the exact algebraic tail),
//! and identities checked against direct arithmetic.

use qkzlab::combinatorics::{
    all_nu, binomial, enumerate_z, lambda_invariants, log_p_j_factor, shifted_mu_sum, NuVector,
};
use qkzlab::harness::default_mu;
use qkzlab::integration::{g_k_numeric, h_numeric, Measure, QuadratureConfig};
use qkzlab::qkz_operators::{g_k_closed, Params};
use qkzlab::scalar::{cx, im, log_rel_err, re, rel_err};
use qkzlab::special_functions::{s2_asymptotic, DoubleSine, Periods};

const REFERENCE: [((f64, f64), (f64, f64), (f64, f64)); 14] = [
    ((7.3, 9.4), (8.6, 0.0), (-0.030597863575508739906, 0.0)),
    ((7.3, 9.4), (3.1, 2.2), (0.56349581362083069216, 0.11597217566390974364)),
    ((7.3, 9.4), (12.0, -1.5), (-0.40693571495593819586, 0.066027002310235587926)),
    ((7.3, 9.4), (-4.2, 0.7), (1.0455433343910141506, 3.1690404478694830837)),
    ((7.3, 9.4), (20.5, 3.0), (-1.8067925995439399222, 2.8971183876388343295)),
    ((7.3, 9.4), (5.0, 9.0), (1.3817524780601628711, -1.8684102627666913317)),
    ((7.3, 9.4), (-3.0, -11.0), (5.7164359299991553795, 0.09096791039300165326)),
    ((8.1, 11.71), (8.6, 0.0), (0.13563122821592944234, 0.0)),
    ((8.1, 11.71), (3.1, 2.2), (0.50446026313168459837, 0.2171184934183284974)),
    ((8.1, 11.71), (12.0, -1.5), (-0.22812828709418313234, 0.13995837519911342429)),
    ((8.1, 11.71), (-4.2, 0.7), (0.96978549141768256448, 3.0968621036923986907)),
    ((8.1, 11.71), (20.5, 3.0), (-0.92753979162639175835, 1.556446709120856773)),
    ((7.3, 9.4), (8.35, 0.0), (0.0, 0.0)),
    ((8.1, 11.71), (9.905, 0.0), (0.0, 0.0)),
];

#[test]
fn log_s2_reference_values() {
    for ((w1, w2), (xr, xi), (lr, li)) in REFERENCE {
        let ds = DoubleSine::new(Periods::new(w1, w2).unwrap());
        let got = ds.log_s2(cx(xr, xi)).unwrap();
        let err = log_rel_err(got, cx(lr, li));
        assert!(err < 1e-10, "ω=({w1},{w2}) x={xr}{xi:+}i: {got} vs {lr}{li:+}i ({err:.2e})");
    }
}

#[test]
fn asymptote_difference_relation() {
    let p = Periods::new(7.3, 9.4).unwrap();
    let ds = DoubleSine::new(p);
    for a in [0.0, 2.5, 11.0] {
        for x in [cx(0.5, 30.0), cx(-3.0, 45.0), cx(0.5, -30.0)] {
            let upper = x.im > 0.0;
            let s = if upper { 1.0 } else { -1.0 };
            let want = im(s * std::f64::consts::PI) * x * ((2.0 * a - p.sum()) / (p.omega1 * p.omega2));
            let asym = s2_asymptotic(re(a) + x, upper, &p) + s2_asymptotic(re(a) - x, !upper, &p);
            assert!((asym - want).norm() < 1e-12 * want.norm().max(1.0));
            let full = ds.log_s2(re(a) + x).unwrap() + ds.log_s2(re(a) - x).unwrap();
            assert!(log_rel_err(full, want) < 1e-6, "a={a} x={x}: {full} vs {want}");
        }
    }
}

#[test]
fn product_of_p_j_over_z() {
    let (rho, lam) = (7.3, 9.4);
    for n in 2..=3 {
        for sites in 1..=3 {
            let mu: Vec<f64> = (0..n).map(|j| 0.3 + 1.7 * j as f64 - 0.2 * (j * j) as f64).collect();
            let beta: Vec<f64> = (0..sites).map(|r| -0.4 + 1.3 * r as f64 + 0.1 * (r * r) as f64).collect();
            for nu in all_nu(n, sites) {
                let lw = nu.lambda();
                let inv = lambda_invariants(&lw);
                let lhs: f64 = enumerate_z(&nu).iter().map(|jt| log_p_j_factor(jt, &beta, &mu, rho, lam)).sum();
                let pi = std::f64::consts::PI;
                let mut pairs = 0.0;
                for r in 0..sites {
                    for s in r + 1..sites {
                        pairs += beta[s] - beta[r];
                    }
                }
                let bsum: f64 = beta.iter().sum();
                let rhs = 4.0 * pi * pi / (n as f64 * rho * lam) * pairs * inv.lambda2 as f64
                    - 2.0 * pi / (rho * lam) * shifted_mu_sum(&lw, &mu) * bsum;
                assert!(
                    (lhs.exp() / rhs.exp() - 1.0).abs() < 1e-12,
                    "ν={:?}: {lhs} vs {rhs}",
                    nu.as_slice()
                );
            }
        }
    }
}

#[test]
fn binomial_exponents_are_integers() {
    for n in 2..=4 {
        for sites in 1..=5 {
            for nu in all_nu(n, sites) {
                let lw = nu.lambda();
                let l0 = lambda_invariants(&lw).lambda0;
                for r in 0..n {
                    for rp in 0..r {
                        let (a, b) = (lw.lambda[r] as i64, lw.lambda[rp] as i64);
                        let c = binomial(a + b, a);
                        assert!(c > 0 && l0 % c == 0 && l0 / c >= 1, "λ={:?}", lw.lambda);
                    }
                }
            }
        }
    }
}

#[test]
fn one_point_integral_on_real_points() {
    let p = Params::new(2, 1, 7.3, 9.4, default_mu(2, 7.3, 9.4), vec![0.0]).unwrap();
    let cfg = QuadratureConfig::standard().with_rel_tol(1e-10);
    let ds = p.double_sine();
    for x in [-1.0, 0.0, 0.5, 2.0] {
        let h = h_numeric(re(x), &p, &cfg).unwrap();
        let want = ds.h_closed(re(x), 2).unwrap();
        assert!(rel_err(h.value, want) < 1e-8, "x={x}");
    }
}

#[test]
fn one_point_integral_near_strip_edge() {
    let p = Params::new(3, 1, 7.3, 9.4, default_mu(3, 7.3, 9.4), vec![0.0]).unwrap();
    let edge = (7.3 + 9.4) / 2.0 + std::f64::consts::PI / 3.0;
    let x = re(0.95 * edge);
    let h = h_numeric(x, &p, &QuadratureConfig::standard().with_rel_tol(1e-8)).unwrap();
    let want = p.double_sine().h_closed(x, 3).unwrap();
    assert!(rel_err(h.value, want) < 1e-6, "{} vs {want}", h.value);
}

#[test]
fn two_fold_chain_factorizes() {
    let p = Params::new(3, 1, 7.3, 9.4, default_mu(3, 7.3, 9.4), vec![0.0]).unwrap();
    let cfg = QuadratureConfig::standard().with_rel_tol(1e-8);
    let mu = [0.0, 3.0, 7.0];
    let num = g_k_numeric(&mu, 2, &p, &cfg, Measure::Plain).unwrap();
    let closed = g_k_closed(&mu, 2, &p).unwrap();
    assert!(rel_err(num.value, closed) < 1e-6, "{} vs {closed}", num.value);
}

#[test]
fn nu_with_trivial_levels() {
    let nu = NuVector::new(3, &[0]).unwrap();
    assert_eq!(enumerate_z(&nu).len(), 1);
    assert_eq!(lambda_invariants(&nu.lambda()).lambda2, 0);
}
