mod common;

use std::f64::consts::PI;

use common::{arb_density, covariant_family};
use pacmet::bounds::{beta_h, helstrom, minimax_binary, TwoPointInstance};
use pacmet::family::{build_dephasing_family, Domain, Prior, Window};
use pacmet::opcore::{fidelity, trace_norm, DensityMatrix};
use pacmet::optimize::{per_t_acceptance, solve_bayesian_sdp, solve_minimax_sdp, success_probability, SolverConfig};
use pacmet::phase::{covariant_success_probability, probe_ghz, probe_plus_tensor, ProbeSpectrum};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn helstrom_beats_guessing(rho in arb_density(3), sigma in arb_density(3), p in 0.0f64..=1.0) {
        let v = helstrom(&TwoPointInstance::new(rho, sigma, p).unwrap());
        prop_assert!(v >= p.max(1.0 - p) - 1e-12);
        prop_assert!(v <= 1.0 + 1e-12);
    }

    #[test]
    fn minimax_binary_below_uniform_helstrom(rho in arb_density(2), sigma in arb_density(2)) {
        let mm = minimax_binary(&rho, &sigma).unwrap();
        let half = helstrom(&TwoPointInstance::new(rho.clone(), sigma.clone(), 0.5).unwrap());
        prop_assert!(mm <= half + 1e-9);
        prop_assert!(mm >= 0.5 - 1e-12);
    }

    #[test]
    fn fuchs_van_de_graaf(rho in arb_density(3), sigma in arb_density(3)) {
        let f = fidelity(&rho, &sigma).unwrap();
        let td = 0.5 * trace_norm(&(rho.op() - sigma.op()));
        prop_assert!((0.0..=1.0 + 1e-9).contains(&f));
        prop_assert!(1.0 - f <= td + 1e-7);
        prop_assert!(td <= (1.0 - f * f).max(0.0).sqrt() + 1e-7);
    }

    #[test]
    fn beta_h_monotone_in_eta(rho in arb_density(2), sigma in arb_density(2), a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let blo = beta_h(&rho, &sigma, lo).unwrap();
        let bhi = beta_h(&rho, &sigma, hi).unwrap();
        prop_assert!(blo <= bhi + 1e-7);
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&blo));
    }

    #[test]
    fn covariant_eta_monotone_in_delta(amps in prop::collection::vec(0.01f64..1.0, 1..6), d1 in 0.01f64..3.0, d2 in 0.01f64..3.0) {
        let probe = ProbeSpectrum::normalized(amps).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let elo = covariant_success_probability(&probe, lo).unwrap();
        let ehi = covariant_success_probability(&probe, hi).unwrap();
        prop_assert!(elo <= ehi + 1e-12);
        prop_assert!(ehi <= 1.0 + 1e-12);
        prop_assert!(elo >= lo / PI - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn minimax_below_any_bayesian(weights in prop::collection::vec(0.05f64..1.0, 16)) {
        let fam = build_dephasing_family(1.0, 16, Domain::Interval { length: PI }).unwrap();
        let window = Window::new(0.3).unwrap();
        let cfg = SolverConfig::with_tol(1e-7);
        let total: f64 = weights.iter().sum();
        let prior = Prior::tabulated(weights.iter().map(|w| w / total).collect()).unwrap();
        let bayes = solve_bayesian_sdp(&fam, &prior, &window, &cfg).unwrap();
        let mm = solve_minimax_sdp(&fam, &window, &cfg).unwrap();
        prop_assert!(mm.eta_bar_star <= bayes.eta_star + 1e-6);
        prop_assert!(mm.eta_bar_star <= mm.upper + 1e-9);
        // The Bayesian POVM is valid and achieves its reported value.
        prop_assert!(bayes.povm.completeness_error() < 1e-8);
        for e in bayes.povm.effects() {
            prop_assert!(e.lambda_min() > -1e-9);
        }
        let achieved = success_probability(&fam, &prior, &window, &bayes.povm).unwrap();
        prop_assert!((achieved - bayes.primal_value).abs() < 1e-8);
        prop_assert!(bayes.primal_value <= bayes.eta_star + 1e-9);
        prop_assert!(bayes.eta_star - bayes.primal_value <= 1e-6);
    }
}

#[test]
fn minimax_povm_certifies_its_value() {
    let fam = covariant_family(&probe_plus_tensor(2), 32);
    let window = Window::new(0.4).unwrap();
    let mm = solve_minimax_sdp(&fam, &window, &SolverConfig::with_tol(1e-7)).unwrap();
    let per_t = per_t_acceptance(&fam, &mm.window, &mm.povm).unwrap();
    let worst = per_t.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((worst - mm.eta_bar_star).abs() < 1e-9);
    assert!(mm.upper - mm.eta_bar_star <= 1e-6, "gap {}", mm.gap);
    // A covariant family has a flat least-favorable prior.
    let bayes = solve_bayesian_sdp(&fam, &Prior::uniform(fam.len()), &window, &SolverConfig::with_tol(1e-7)).unwrap();
    assert!((bayes.eta_star - mm.eta_bar_star).abs() < 2e-6);
}

#[test]
fn constant_family_is_blind_guessing() {
    let rho = DensityMatrix::maximally_mixed(2);
    let fam = pacmet::family::constant_family(&rho, 20, Domain::Periodic { period: 1.0 }).unwrap();
    let delta = 0.1;
    let sol = solve_bayesian_sdp(&fam, &Prior::uniform(20), &Window::new(delta).unwrap(), &SolverConfig::default()).unwrap();
    assert!((sol.eta_star - 2.0 * delta / 1.0).abs() < 1e-6);
}

#[test]
fn ghz_grid_converges_to_continuum() {
    let n = 2;
    let err = |grid: usize| {
        let step = 2.0 * PI / grid as f64;
        let delta = (grid / 12) as f64 * step;
        let fam = covariant_family(&probe_ghz(n), grid);
        let sol = solve_bayesian_sdp(&fam, &Prior::uniform(grid), &Window::new(delta).unwrap(), &SolverConfig::with_tol(1e-9)).unwrap();
        let closed = delta / PI + (n as f64 * delta).sin() / (n as f64 * PI);
        (sol.eta_star - closed).abs()
    };
    let coarse = err(48);
    let fine = err(192);
    // Trapezoid weights on the window: second-order convergence.
    assert!(fine < coarse / 10.0, "{coarse:.3e} -> {fine:.3e}");
    assert!(fine < 1e-4);
}
