use tsgame::choice::DEFAULT_TOL;
use tsgame::diagnostics::{decompose_path, drift_bound_check, min_pairwise_gap, separation_threshold};
use tsgame::dynamics::{
    advance, frozen_noise_samples, init_state, mean_field, noise_second_moment_bound, path_rng,
    sa_identity_residual, step, PlayerState, SystemState,
};
use tsgame::game::{builtin, check_payoff_stability, equilibrium_point, equilibrium_report, ActionPair, PayoffGame};
use tsgame::harness::{classify_outcome, run_ensemble, run_path, SimulationConfig};

fn reference_priors(key: &str) -> (Vec<f64>, Vec<f64>) {
    match builtin::priors(key).unwrap() {
        builtin::BuiltinPriors::Fixed(a, b) => (a, b),
        builtin::BuiltinPriors::StandardNormal => {
            let g = builtin::game(key).unwrap();
            (vec![0.0; g.n_rows()], vec![0.0; g.n_cols()])
        }
    }
}

#[test]
fn sa_identity_holds_on_every_builtin() {
    for key in builtin::KEYS {
        let game = builtin::game(key).unwrap();
        let (x0, y0) = reference_priors(key);
        let (mut p1, mut p2) = init_state(&x0, &y0).unwrap();
        let mut rng = path_rng(5, 0);
        for _ in 0..500 {
            let prev = SystemState::from_players(&p1, &p2);
            let rec = step(&mut p1, &mut p2, &game, &mut rng, DEFAULT_TOL).unwrap();
            let next = SystemState::from_players(&p1, &p2);
            assert!(sa_identity_residual(&prev, &next, &rec, &game) < 1e-12, "{key}");
        }
    }
}

#[test]
fn step_sizes_of_an_action_are_harmonic() {
    let game = builtin::a1b1();
    let (x0, y0) = reference_priors("a1b1");
    let (mut p1, mut p2) = init_state(&x0, &y0).unwrap();
    let mut rng = path_rng(6, 0);
    let mut seen = vec![Vec::new(); game.n_rows()];
    for _ in 0..3000 {
        let rec = step(&mut p1, &mut p2, &game, &mut rng, 1e-8).unwrap();
        assert_eq!(rec.step_alpha.iter().filter(|&&a| a != 0.0).count(), 1);
        assert_eq!(rec.step_beta.iter().filter(|&&b| b != 0.0).count(), 1);
        seen[rec.action_p1].push(rec.step_alpha[rec.action_p1]);
    }
    for steps in seen {
        for (m, a) in steps.iter().enumerate() {
            assert_eq!(*a, 1.0 / (m as f64 + 2.0));
        }
    }
}

#[test]
fn decomposition_identity_on_games_with_pure_equilibria() {
    for key in ["pd", "a1b1", "a2b2", "a3b3"] {
        let game = builtin::game(key).unwrap();
        let (x0, y0) = reference_priors(key);
        let (mut p1, mut p2) = init_state(&x0, &y0).unwrap();
        let s0 = SystemState::from_players(&p1, &p2);
        let mut rng = path_rng(7, 1);
        let records: Vec<_> =
            (0..1500).map(|_| step(&mut p1, &mut p2, &game, &mut rng, 1e-9).unwrap()).collect();
        for ne in equilibrium_report(&game).pure_ne {
            let sstar = equilibrium_point(&game, ne).unwrap();
            let dec = decompose_path(&records, &s0, &sstar, &game).unwrap();
            for d in &dec {
                assert!(d.max_relative_residual() < 1e-8, "{key} coordinate {}", d.coordinate);
            }
            let means = game.n_rows() + game.n_cols();
            assert!(dec[..means].iter().all(|d| drift_bound_check(d, &game, ne).unwrap()), "{key}");
        }
    }
    let a4 = builtin::a4b4();
    let s = SystemState { x: vec![0.0; 2], y: vec![0.0; 2], w: vec![1.0; 2], v: vec![1.0; 2] };
    assert!(decompose_path(&[], &s, &s, &a4).is_err());
}

#[test]
fn every_action_is_explored_and_means_stay_bounded() {
    let game = builtin::prisoners_dilemma();
    let (x0, y0) = reference_priors("pd");
    let (mut p1, mut p2) = init_state(&x0, &y0).unwrap();
    let mut rng = path_rng(8, 0);
    let cap = game.a().max_abs().max(game.b().max_abs()) + 5.0;
    let mut worst_excess = f64::NEG_INFINITY;
    for n in 0..1_000_000u64 {
        let d = advance(&mut p1, &mut p2, &game, &mut rng);
        if n >= 100 {
            let i = d.action_p1;
            let j = d.action_p2;
            worst_excess = worst_excess.max(p1.mean(i).abs() - x0[i].abs() - cap);
            worst_excess = worst_excess.max(p2.mean(j).abs() - y0[j].abs() - cap);
        }
    }
    assert!(p1.pull_counts.iter().chain(&p2.pull_counts).all(|&c| c >= 10));
    assert!(worst_excess <= 0.0);
}

#[test]
fn noise_is_centered_at_a_frozen_state() {
    // both players nearly deterministic, so each noise slot has variance at most 1
    let game = builtin::prisoners_dilemma();
    let mut p1 = PlayerState::new(vec![0.0, 0.0]).unwrap();
    p1.pull_counts = vec![9999, 9999];
    p1.payoff_sums = vec![100_000.0, -100_000.0];
    let p2 = p1.clone();
    let mut rng = path_rng(9, 0);
    let n = 100_000;
    let xs = frozen_noise_samples(&p1, &p2, &game, &mut rng, n, DEFAULT_TOL);
    for k in 0..8 {
        let mean = xs.iter().map(|x| x[k]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "slot {k}: {mean}");
    }
}

#[test]
fn noise_second_moment_respects_bound_over_windows() {
    let game = builtin::a1b1();
    let (x0, y0) = reference_priors("a1b1");
    let (mut p1, mut p2) = init_state(&x0, &y0).unwrap();
    let mut rng = path_rng(10, 0);
    let bound = noise_second_moment_bound(&game);
    let window = 2000;
    let sq: Vec<f64> = (0..5 * window)
        .map(|_| step(&mut p1, &mut p2, &game, &mut rng, 1e-8).unwrap().noise.iter().map(|v| v * v).sum())
        .collect();
    for w in sq.chunks(window) {
        let m = w.iter().sum::<f64>() / window as f64;
        let sd = (w.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (window as f64 - 1.0)).sqrt();
        assert!(m <= bound + 3.0 * sd / (window as f64).sqrt());
    }
}

#[test]
fn random_two_by_two_mean_field_matches_closed_form() {
    let game = PayoffGame::from_rows(
        &[vec![0.7, -1.2], vec![2.0, 0.4]],
        &[vec![1.0, 0.3], vec![-0.5, 0.9]],
        Default::default(),
    )
    .unwrap();
    let s = SystemState { x: vec![0.3, -0.4], y: vec![1.1, 0.2], w: vec![0.5, 0.25], v: vec![0.2, 1.0] };
    let f = mean_field(&s, &game, DEFAULT_TOL).unwrap();
    let psi1 = tsgame::normal::cdf((1.1 - 0.2) / 1.2f64.sqrt());
    for i in 0..2 {
        let expected = game.a().get(i, 0) * psi1 + game.a().get(i, 1) * (1.0 - psi1);
        assert!((f[i] - expected).abs() < 1e-9);
    }
}

#[test]
fn converged_a1b1_path_keeps_player_one_means_separated() {
    let mut cfg = SimulationConfig::builtin("a1b1").unwrap();
    cfg.horizon = 1_000_000;
    cfg.record_beliefs = true;
    let trace = run_path(&cfg, 0).unwrap();
    let game = builtin::a1b1();
    let ne = ActionPair { row: 0, col: 0 };
    let margin = check_payoff_stability(&game, ne).unwrap().worst_margin;
    let threshold = separation_threshold(&game, ne, margin);
    let start = trace.len() - trace.len() / 10;
    let gap = (start..trace.len()).map(|t| min_pairwise_gap(trace.x_at(t).unwrap())).fold(f64::INFINITY, f64::min);
    assert!(gap > threshold, "gap {gap} threshold {threshold}");
}

#[test]
fn pd_classification_is_stable_under_threshold_changes() {
    let mut cfg = SimulationConfig::builtin("pd").unwrap();
    cfg.horizon = 100_000;
    cfg.paths = 100;
    let (summary, traces) = run_ensemble(&cfg).unwrap();
    let report = equilibrium_report(&builtin::prisoners_dilemma());
    let stable = traces
        .iter()
        .zip(&summary.classes)
        .filter(|(t, c)| {
            [0.93, 0.97].iter().all(|&th| classify_outcome(t, &report, 0.1, th).unwrap() == **c)
        })
        .count();
    assert!(stable >= 95, "{stable}");
}
