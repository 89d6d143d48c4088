//! Laser-scheme reductions against a polynomial-expansion oracle and the
//! forward/inverse parameter maps.

use std::collections::BTreeMap;

use proptest::prelude::*;
use trio_ion::dynamics::build_hamiltonian;
use trio_ion::fockspace::{self, Layout};
use trio_ion::laser_config::{self, IonParams, SignPattern};
use trio_ion::C64;

/// Axis signs of the four composite modes along `(1,±1,±1)`.
const DIRECTIONS: [[i64; 3]; 4] = [[1, 1, 1], [1, -1, 1], [1, 1, -1], [1, -1, -1]];

/// Coefficients of `Σ_l s_l (d_l·(x,y,z))³` by the multinomial theorem.
fn expand(signs: [i8; 4]) -> BTreeMap<[u32; 3], i64> {
    let fact = |k: u32| (1..=k as i64).product::<i64>();
    let mut poly = BTreeMap::new();
    for (l, dir) in DIRECTIONS.iter().enumerate() {
        for a in 0..=3u32 {
            for b in 0..=3 - a {
                let c = 3 - a - b;
                let multinomial = 6 / (fact(a) * fact(b) * fact(c));
                let coeff = signs[l] as i64 * multinomial * dir[0].pow(a) * dir[1].pow(b) * dir[2].pow(c);
                *poly.entry([a, b, c]).or_insert(0) += coeff;
            }
        }
    }
    poly.retain(|_, c| *c != 0);
    poly
}

/// Largest matrix element of `âₓᵃ â_yᵇ â_zᶜ` with every mode cut at `n_max`.
fn monomial_max_entry(powers: [u32; 3], n_max: usize) -> f64 {
    powers
        .iter()
        .map(|&k| ((n_max + 1 - k as usize)..=n_max).map(|j| j as f64).product::<f64>().sqrt())
        .product()
}

#[test]
fn expansion_oracle_examples() {
    assert_eq!(expand([1, -1, -1, 1]), BTreeMap::from([([1, 1, 1], 24)]));
    assert_eq!(expand([1, -1, 1, -1]), BTreeMap::from([([2, 1, 0], 12), ([0, 1, 2], 12), ([0, 3, 0], 4)]));
    assert_eq!(expand([1, 1, 1, 1])[&[3, 0, 0]], 4);
}

#[test]
fn reduction_matches_expansion_for_every_pattern() {
    let layout = fockspace::build_basis(5);
    for signs in SignPattern::all_up_to_global_sign() {
        let poly = expand(signs.0);
        let scalar = *poly.get(&[1, 1, 1]).unwrap_or(&0) as f64;
        // distinct monomials shift the occupations differently, so their
        // supports are disjoint and the scalar fit only sees âₓâ_yâ_z
        let residual = poly
            .iter()
            .filter(|(k, _)| **k != [1, 1, 1])
            .map(|(k, c)| c.abs() as f64 * monomial_max_entry(*k, 5))
            .fold(0.0, f64::max);
        let red = laser_config::verify_trilinear_reduction(signs, &layout).unwrap();
        assert!((red.scalar - C64::new(scalar, 0.0)).norm() < 1e-12, "{signs}: {:?}", red.scalar);
        assert!((red.residual - residual).abs() < 1e-12 * residual.max(1.0), "{signs}: {} vs {residual}", red.residual);
    }
}

#[test]
fn parameter_examples() {
    let zeta = laser_config::effective_zeta(1.0, 0.0, 0.1);
    assert!((zeta - C64::new(0.0, -5.9701e-3)).norm() < 1e-7);
    let ion = IonParams { eta: 0.1, gamma: 1.0, ..IonParams::default() };
    let set = laser_config::solve_lasers_for(C64::new(2.0, 0.0), 0.02, &ion).unwrap();
    assert!((set.lasers[0].rabi - 3.3500).abs() < 5e-5);
    let omega5 = laser_config::solve_lasers_for(C64::new(2.0, 0.0), 6e-3 * (-0.005f64).exp(), &ion).unwrap();
    assert!((omega5.lasers[4].rabi - 0.012).abs() < 1e-14);
    assert_eq!(laser_config::map_alpha_between_schemes(0.02).unwrap(), 6.0 * 0.02);
}

fn ion(eta: f64, gamma: f64) -> IonParams {
    IonParams { eta, gamma, ..IonParams::default() }
}

proptest! {
    #[test]
    fn solve_then_evaluate_round_trips(re in -4.0f64..4.0, im in -4.0f64..4.0, alpha in 1e-3f64..0.5,
                                       eta in 0.02f64..0.25, gamma in 0.1f64..3.0) {
        let xi = C64::new(re, im);
        let ion = ion(eta, gamma);
        let eff = laser_config::solve_lasers_for(xi, alpha, &ion).unwrap().effective(&ion).unwrap();
        prop_assert!((eff.xi - xi).norm() < 1e-12 * xi.norm().max(1.0));
        prop_assert!((eff.alpha - alpha).abs() < 1e-12 * alpha);
    }

    #[test]
    fn sideband_scaling_law(s in 0.1f64..10.0, omega in 0.1f64..5.0, omega5 in 0.0f64..0.1, phi in 0.0f64..std::f64::consts::TAU, phi5 in 0.0f64..std::f64::consts::TAU) {
        let eta = 0.1;
        let z1 = laser_config::effective_zeta(omega, phi, eta);
        let z2 = laser_config::effective_zeta(s * omega, phi, eta);
        let x1 = laser_config::effective_xi(omega5, omega, eta, phi, phi5).unwrap();
        let x2 = laser_config::effective_xi(omega5, s * omega, eta, phi, phi5).unwrap();
        prop_assert!((z2.norm() - s * z1.norm()).abs() < 1e-12 * z2.norm());
        prop_assert!((x2.norm() - x1.norm() / s).abs() < 1e-12 * x1.norm().max(1e-300));
    }

    #[test]
    fn full_interaction_is_hermitian(rabi in proptest::array::uniform5(0.0f64..2.0),
                                     phase in proptest::array::uniform5(0.0f64..std::f64::consts::TAU)) {
        let ion = ion(0.1, 1.0);
        let mut set = laser_config::solve_lasers_for(C64::new(1.0, 0.0), 0.02, &ion).unwrap();
        for l in 0..5 {
            set.lasers[l].rabi = rabi[l];
            set.lasers[l].phase = phase[l];
        }
        let h = laser_config::build_full_interaction(&set, &ion, &fockspace::build_basis(3)).unwrap();
        prop_assert!(h.is_hermitian(1e-15));
    }

    #[test]
    fn calibrated_interaction_matches_simplified(re in -3.0f64..3.0, im in -3.0f64..3.0, alpha in 0.005f64..0.1) {
        let ion = ion(0.1, 1.0);
        let basis = fockspace::build_basis(4);
        let set = laser_config::solve_lasers_for(C64::new(re, im), alpha, &ion).unwrap();
        let full = laser_config::build_full_interaction(&set, &ion, &basis).unwrap();
        let cal = laser_config::calibrated_effective(&set, &ion).unwrap();
        let simple = build_hamiltonian(cal.zeta, cal.xi, &Layout::Full(basis));
        prop_assert!(full.max_abs_diff(&simple) <= 1e-12 * full.max_abs());
    }
}
