//! Target-state values checked against oracles implemented here, independently
//! of the library code paths.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};
use proptest::prelude::*;
use trio_ion::fockspace::{self, Ion, Layout};
use trio_ion::tcs_state::{self, QuadratureConfig, TcsParams};
use trio_ion::C64;

fn big_factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// `N(p,q,r)⁻²` for integer `r²`, summed exactly to 80 terms.
fn exact_inverse_norm_sqr(p: usize, q: usize, r_sqr: u64) -> f64 {
    let mut sum = BigRational::zero();
    let mut power = BigInt::one();
    for n in 0..80 {
        let den = big_factorial(n + q) * big_factorial(n + p) * big_factorial(n);
        sum += BigRational::new(power.clone(), den);
        power *= BigInt::from(r_sqr);
    }
    sum.to_f64().unwrap()
}

#[test]
fn normalization_matches_exact_rational_series() {
    for (p, q, r_sqr) in [(3, 2, 4), (0, 0, 1), (1, 4, 9), (2, 2, 16)] {
        let exact = exact_inverse_norm_sqr(p, q, r_sqr);
        let n = tcs_state::normalization(p, q, (r_sqr as f64).sqrt());
        let rel = (n.powi(-2) - exact).abs() / exact;
        assert!(rel < 1e-14, "p={p} q={q} r²={r_sqr}: rel {rel:e}");
    }
    let exact = exact_inverse_norm_sqr(3, 2, 4);
    assert!((exact - 0.1140153).abs() < 1e-7, "{exact}");
    assert!((exact.sqrt().recip() - 2.9615).abs() < 5e-5);
}

#[test]
fn leading_populations() {
    let v = tcs_state::tcs_fock(TcsParams::new(C64::new(2.0, 0.0), 3, 2), 10);
    let c = v.coeffs();
    assert!((c[0].norm_sqr() - 0.7309).abs() < 5e-5);
    assert!((c[1].norm_sqr() - 0.2436).abs() < 5e-5);
    let n = v.norm_sqr();
    assert!((1.0 - 1e-12..=1.0).contains(&n), "{n}");
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `⟨k|β)` straight from the definition.
fn coherent(beta: C64, k: usize) -> C64 {
    (-beta.norm_sqr() / 2.0).exp() * beta.powu(k as u32) / factorial(k).sqrt()
}

/// Ladder amplitudes of the phase integral by brute-force double summation.
fn brute_force_integral(xi: C64, p: usize, q: usize, nodes: usize, n_max: usize) -> Vec<C64> {
    let r = xi.norm();
    let beta = xi.powf(1.0 / 3.0);
    let norm = tcs_state::normalization(p, q, r);
    let pref = norm * (1.5 * r.powf(2.0 / 3.0)).exp() / xi.powf((p + q) as f64 / 3.0);
    let step = std::f64::consts::TAU / nodes as f64;
    (0..=n_max)
        .map(|n| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..nodes {
                let t = j as f64 * step;
                for k in 0..nodes {
                    let tp = k as f64 * step;
                    let phase = C64::cis(-((q as f64) * t + (p as f64) * tp));
                    acc += phase
                        * coherent(beta * C64::cis(t), n + q)
                        * coherent(beta * C64::cis(tp), n + p)
                        * coherent(beta * C64::cis(-(t + tp)), n);
                }
            }
            pref * acc / (nodes * nodes) as f64
        })
        .collect()
}

#[test]
fn integral_matches_brute_force_and_closed_form() {
    for xi in [C64::new(2.0, 0.0), C64::new(3.0, 1.0), C64::new(-0.5, 0.7)] {
        let oracle = brute_force_integral(xi, 3, 2, 96, 10);
        let params = TcsParams::new(xi, 3, 2);
        let lib = tcs_state::tcs_integral(params, QuadratureConfig::uniform(96), 10).unwrap();
        let fock = tcs_state::tcs_fock(params, 10);
        for n in 0..=10 {
            let a = lib.vector.coeffs()[n];
            assert!((a - oracle[n]).norm() < 1e-12, "xi={xi} n={n}: {a} vs {}", oracle[n]);
            assert!((oracle[n] - fock.coeffs()[n]).norm() < 1e-10, "xi={xi} n={n}");
        }
    }
}

#[test]
fn coarse_quadrature_aliases_off_ladder() {
    // the integrand is constant on ladder entries, so any node count gets
    // those right; with too few nodes the off-ladder phases alias
    let params = TcsParams::new(C64::new(2.0, 0.0), 3, 2);
    let fock = tcs_state::tcs_fock(params, 6);
    for nodes in [1, 2, 4] {
        let lib = tcs_state::tcs_integral(params, QuadratureConfig::uniform(nodes), 6).unwrap();
        let dev = lib.vector.coeffs().iter().zip(fock.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev < 1e-14, "{nodes}: {dev}");
        assert!(lib.off_ladder_max > 1e-3, "{nodes}: {}", lib.off_ladder_max);
    }
}

proptest! {
    #[test]
    fn recurrence_relation(re in -4.0f64..4.0, im in -4.0f64..4.0, p in 0usize..5, q in 0usize..5) {
        let xi = C64::new(re, im);
        let v = tcs_state::tcs_fock(TcsParams::new(xi, p, q), 12);
        let c = v.coeffs();
        for n in 1..=12 {
            let lhs = c[n] * (((n + q) * (n + p) * n) as f64).sqrt();
            let rhs = xi * c[n - 1];
            prop_assert!((lhs - rhs).norm() <= 1e-13 * rhs.norm().max(1e-300));
        }
        prop_assert!(c[0].im == 0.0 && c[0].re > 0.0);
    }

    #[test]
    fn eigenrelations_hold(r in 0.0f64..3.0, phi in 0.0f64..std::f64::consts::TAU, p in 0usize..4, q in 0usize..4) {
        let params = TcsParams::from_polar(r, phi, p, q).unwrap();
        let v = tcs_state::tcs_fock(params, 8);
        let res = tcs_state::verify_eigenrelations(&v, 1e-12);
        prop_assert!(res.passed, "{res:?}");
        prop_assert!(res.p_charge < 1e-13 && res.q_charge < 1e-13);
    }

    #[test]
    fn exchanging_charges_swaps_modes(re in -3.0f64..3.0, im in -3.0f64..3.0, p in 0usize..4, q in 0usize..4) {
        let xi = C64::new(re, im);
        let n_max = 4;
        let full = fockspace::build_basis(n_max + p.max(q));
        let layout = Layout::Full(full);
        let a = tcs_state::tcs_fock(TcsParams::new(xi, p, q), n_max).embed(Ion::Ground, &layout).unwrap();
        let b = tcs_state::tcs_fock(TcsParams::new(xi, q, p), n_max).embed(Ion::Ground, &layout).unwrap();
        for (i, amp) in a.iter().enumerate() {
            let (ion, [l, m, n]) = full.unflatten(i);
            let j = full.flatten(ion, [m, l, n]).unwrap();
            prop_assert!((amp - b[j]).norm() < 1e-15);
        }
    }

    #[test]
    fn integral_agrees_for_random_xi(re in 0.2f64..3.0, im in -2.0f64..2.0, p in 0usize..3, q in 0usize..3) {
        let params = TcsParams::new(C64::new(re, im), p, q);
        let lib = tcs_state::tcs_integral(params, QuadratureConfig::uniform(128), 8).unwrap();
        let fock = tcs_state::tcs_fock(params, 8);
        for (a, b) in lib.vector.coeffs().iter().zip(fock.coeffs()) {
            prop_assert!((a - b).norm() < 1e-8);
        }
        prop_assert!(lib.off_ladder_max < 1e-10);
    }
}
