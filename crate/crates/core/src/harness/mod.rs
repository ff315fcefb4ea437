//! Running experiments: single paths, parallel ensembles and outcome
//! classification.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::choice::{probabilities_unchecked, DEFAULT_TOL};
use crate::diagnostics::{Decomposer, SADecomposition};
use crate::dynamics::{advance, init_state, path_rng, step, PlayerState, SystemState};
use crate::error::{Error, Result};
use crate::game::{equilibrium_point, equilibrium_report, ActionPair, EquilibriumReport, PayoffGame};

pub use config::{GameSpec, Overrides, PriorSpec, RecordSchedule, SimulationConfig};

pub const DEFAULT_WINDOW_FRAC: f64 = 0.1;
pub const DEFAULT_THRESHOLD: f64 = 0.95;
/// Windowed swing of `φ₁` or `ψ₁` above which a path counts as oscillating.
pub const OSCILLATION_RANGE: f64 = 0.5;

/// One simulated path, sampled on the record schedule.
///
/// Choice distributions are stored flat: entry `t` of player 1 occupies
/// `phi[t * n_rows..(t + 1) * n_rows]`, and likewise for `psi`, `x`, `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub base_seed: u64,
    pub path_index: u64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub prior_means_p1: Vec<f64>,
    pub prior_means_p2: Vec<f64>,
    pub rounds: Vec<u64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// Posterior means, present when beliefs were recorded.
    pub x: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
    pub final_state: SystemState,
    pub pull_counts_p1: Vec<u64>,
    pub pull_counts_p2: Vec<u64>,
}

impl PathTrace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn phi_at(&self, t: usize) -> &[f64] {
        &self.phi[t * self.n_rows..(t + 1) * self.n_rows]
    }

    pub fn psi_at(&self, t: usize) -> &[f64] {
        &self.psi[t * self.n_cols..(t + 1) * self.n_cols]
    }

    pub fn x_at(&self, t: usize) -> Option<&[f64]> {
        self.x.as_ref().map(|x| &x[t * self.n_rows..(t + 1) * self.n_rows])
    }

    pub fn y_at(&self, t: usize) -> Option<&[f64]> {
        self.y.as_ref().map(|y| &y[t * self.n_cols..(t + 1) * self.n_cols])
    }

    /// `φ₁` at every recorded round.
    pub fn phi1(&self) -> Vec<f64> {
        self.phi.iter().step_by(self.n_rows).copied().collect()
    }

    pub fn psi1(&self) -> Vec<f64> {
        self.psi.iter().step_by(self.n_cols).copied().collect()
    }

    pub fn final_phi(&self) -> &[f64] {
        self.phi_at(self.len() - 1)
    }

    pub fn final_psi(&self) -> &[f64] {
        self.psi_at(self.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutcomeClass {
    /// Locked into a pure profile that is a Nash equilibrium.
    NashConvergent(ActionPair),
    /// Locked into a pure profile that is not a Nash equilibrium.
    PureProfile(ActionPair),
    Oscillating,
    Undetermined,
}

impl OutcomeClass {
    /// The locked-in profile, if any.
    pub fn profile(&self) -> Option<ActionPair> {
        match *self {
            OutcomeClass::NashConvergent(p) | OutcomeClass::PureProfile(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeClass::NashConvergent(p) => write!(f, "NashConvergent{p}"),
            OutcomeClass::PureProfile(p) => write!(f, "PureProfile{p}"),
            OutcomeClass::Oscillating => write!(f, "Oscillating"),
            OutcomeClass::Undetermined => write!(f, "Undetermined"),
        }
    }
}

/// Settled configuration shared by every path of an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: SimulationConfig,
    pub game: PayoffGame,
    pub prior_p1: PriorSpec,
    pub prior_p2: PriorSpec,
    pub schedule: Vec<u64>,
}

impl Experiment {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let game = config.game.resolve()?;
        let (prior_p1, prior_p2) = config.resolved_priors()?;
        let schedule = config.record.rounds(config.horizon);
        Ok(Self { config: config.clone(), game, prior_p1, prior_p2, schedule })
    }

    /// Prior means of path `path_index`, and the stream positioned after any
    /// prior draws (player 1 ascending, then player 2).
    pub fn initial_players(&self, path_index: u64) -> Result<(PlayerState, PlayerState, rand_chacha::ChaCha8Rng)> {
        let mut rng = path_rng(self.config.base_seed, path_index);
        let x0 = draw_prior(&self.prior_p1, self.game.n_rows(), &mut rng);
        let y0 = draw_prior(&self.prior_p2, self.game.n_cols(), &mut rng);
        let (p1, p2) = init_state(&x0, &y0)?;
        Ok((p1, p2, rng))
    }

    pub fn run_path(&self, path_index: u64) -> Result<PathTrace> {
        let (mut p1, mut p2, mut rng) = self.initial_players(path_index)?;
        let (n_rows, n_cols) = (self.game.n_rows(), self.game.n_cols());
        let points = self.schedule.len();
        let beliefs = self.config.record_beliefs;
        let mut trace = PathTrace {
            base_seed: self.config.base_seed,
            path_index,
            n_rows,
            n_cols,
            prior_means_p1: p1.prior_means.clone(),
            prior_means_p2: p2.prior_means.clone(),
            rounds: Vec::with_capacity(points),
            phi: Vec::with_capacity(points * n_rows),
            psi: Vec::with_capacity(points * n_cols),
            x: beliefs.then(|| Vec::with_capacity(points * n_rows)),
            y: beliefs.then(|| Vec::with_capacity(points * n_cols)),
            final_state: SystemState::from_players(&p1, &p2),
            pull_counts_p1: Vec::new(),
            pull_counts_p2: Vec::new(),
        };
        let mut n = 0u64;
        for &target in &self.schedule {
            while n < target {
                advance(&mut p1, &mut p2, &self.game, &mut rng);
                n += 1;
            }
            let (x, w, y, v) = (p1.means(), p1.variances(), p2.means(), p2.variances());
            trace.rounds.push(n);
            trace.phi.extend(probabilities_unchecked(&x, &w, DEFAULT_TOL));
            trace.psi.extend(probabilities_unchecked(&y, &v, DEFAULT_TOL));
            if let (Some(xs), Some(ys)) = (trace.x.as_mut(), trace.y.as_mut()) {
                xs.extend(x);
                ys.extend(y);
            }
        }
        trace.final_state = SystemState::from_players(&p1, &p2);
        trace.pull_counts_p1 = p1.pull_counts;
        trace.pull_counts_p2 = p2.pull_counts;
        Ok(trace)
    }
}

fn draw_prior<R: RngCore>(spec: &PriorSpec, len: usize, rng: &mut R) -> Vec<f64> {
    match spec {
        PriorSpec::Fixed(v) => v.clone(),
        PriorSpec::StandardNormal => vec![0.0; len],
        PriorSpec::RandomStandardNormal => (0..len).map(|_| StandardNormal.sample(rng)).collect(),
        PriorSpec::RandomUniform { lo, hi } => (0..len).map(|_| rng.random_range(*lo..*hi)).collect(),
    }
}

/// Simulates path `path_index` of `config` for `config.horizon` rounds.
pub fn run_path(config: &SimulationConfig, path_index: u64) -> Result<PathTrace> {
    Experiment::new(config)?.run_path(path_index)
}

/// Windowed classification of a path's final behavior.
///
/// The window is the last `ceil(window_frac · len)` recorded points. If both
/// players' windowed-mean probability of their most likely action exceeds
/// `threshold`, the path is a pure profile (Nash-convergent when the profile
/// is a pure equilibrium). Otherwise it oscillates when `φ₁` or `ψ₁` swings
/// by more than [`OSCILLATION_RANGE`] within the window.
pub fn classify_outcome(
    trace: &PathTrace,
    report: &EquilibriumReport,
    window_frac: f64,
    threshold: f64,
) -> Result<OutcomeClass> {
    if !(window_frac > 0.0 && window_frac <= 1.0) {
        return Err(Error::InvalidArgument(format!("window fraction must be in (0, 1], got {window_frac}")));
    }
    let len = trace.len();
    let width = ((window_frac * len as f64).ceil() as usize).min(len);
    if width == 0 {
        return Err(Error::InvalidArgument("empty classification window".into()));
    }
    let window = len - width..len;

    let windowed_mean = |flat: &[f64], n: usize| -> Vec<f64> {
        (0..n).map(|a| window.clone().map(|t| flat[t * n + a]).sum::<f64>() / width as f64).collect()
    };
    let mean_phi = windowed_mean(&trace.phi, trace.n_rows);
    let mean_psi = windowed_mean(&trace.psi, trace.n_cols);
    let best = |m: &[f64]| m.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (k, &p)| if p > b.1 { (k, p) } else { b });
    let (i, pi) = best(&mean_phi);
    let (j, pj) = best(&mean_psi);
    if pi > threshold && pj > threshold {
        let pair = ActionPair { row: i, col: j };
        return Ok(if report.pure_ne.contains(&pair) {
            OutcomeClass::NashConvergent(pair)
        } else {
            OutcomeClass::PureProfile(pair)
        });
    }

    let range = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let phi_range = range(&mut window.clone().map(|t| trace.phi[t * trace.n_rows]));
    let psi_range = range(&mut window.clone().map(|t| trace.psi[t * trace.n_cols]));
    if phi_range > OSCILLATION_RANGE || psi_range > OSCILLATION_RANGE {
        Ok(OutcomeClass::Oscillating)
    } else {
        Ok(OutcomeClass::Undetermined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub config: SimulationConfig,
    pub rounds: Vec<u64>,
    /// Path average of `φ₁` at each recorded round.
    pub mean_phi1: Vec<f64>,
    pub mean_psi1: Vec<f64>,
    /// Class of each path, in path-index order.
    pub classes: Vec<OutcomeClass>,
    pub counts: BTreeMap<OutcomeClass, usize>,
}

impl EnsembleSummary {
    pub fn paths(&self) -> usize {
        self.classes.len()
    }

    pub fn fraction(&self, class: OutcomeClass) -> f64 {
        self.counts.get(&class).copied().unwrap_or(0) as f64 / self.paths() as f64
    }

    /// Fraction of paths locked into `pair`, Nash or not.
    pub fn profile_fraction(&self, pair: ActionPair) -> f64 {
        self.classes.iter().filter(|c| c.profile() == Some(pair)).count() as f64 / self.paths() as f64
    }

    /// Fraction of paths not locked into any pure profile.
    pub fn non_pure_fraction(&self) -> f64 {
        self.classes.iter().filter(|c| c.profile().is_none()).count() as f64 / self.paths() as f64
    }

    pub fn fractions(&self) -> BTreeMap<OutcomeClass, f64> {
        self.counts.iter().map(|(c, &n)| (*c, n as f64 / self.paths() as f64)).collect()
    }
}

/// Runs every path of `config` in parallel and aggregates in path-index
/// order, so the result does not depend on the number of worker threads.
pub fn run_ensemble(config: &SimulationConfig) -> Result<(EnsembleSummary, Vec<PathTrace>)> {
    let exp = Experiment::new(config)?;
    let run = || (0..config.paths).into_par_iter().map(|p| exp.run_path(p)).collect::<Result<Vec<_>>>();
    let traces = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {t} worker threads: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let summary = summarize(config, &exp.game, &traces)?;
    Ok((summary, traces))
}

/// Aggregates traces (all on the same schedule) in the given order.
pub fn summarize(config: &SimulationConfig, game: &PayoffGame, traces: &[PathTrace]) -> Result<EnsembleSummary> {
    let first = traces.first().ok_or_else(|| Error::InvalidArgument("no traces to summarize".into()))?;
    if traces.iter().any(|t| t.rounds != first.rounds) {
        return Err(Error::InvalidArgument("traces are on different schedules".into()));
    }
    let report = equilibrium_report(game);
    let n = traces.len() as f64;
    let mut mean_phi1 = vec![0.0; first.len()];
    let mut mean_psi1 = vec![0.0; first.len()];
    let mut classes = Vec::with_capacity(traces.len());
    let mut counts = BTreeMap::new();
    for t in traces {
        for (acc, v) in mean_phi1.iter_mut().zip(t.phi1()) {
            *acc += v;
        }
        for (acc, v) in mean_psi1.iter_mut().zip(t.psi1()) {
            *acc += v;
        }
        let class = classify_outcome(t, &report, DEFAULT_WINDOW_FRAC, DEFAULT_THRESHOLD)?;
        classes.push(class);
        *counts.entry(class).or_insert(0) += 1;
    }
    mean_phi1.iter_mut().chain(mean_psi1.iter_mut()).for_each(|v| *v /= n);
    Ok(EnsembleSummary { config: config.clone(), rounds: first.rounds.clone(), mean_phi1, mean_psi1, classes, counts })
}

/// Runs path `path_index` with full per-round records and returns the error
/// decomposition around `ne`, sampled on the record schedule (plus round 0).
pub fn run_decomposition(config: &SimulationConfig, path_index: u64, ne: ActionPair) -> Result<Vec<SADecomposition>> {
    let exp = Experiment::new(config)?;
    let sstar = equilibrium_point(&exp.game, ne)?;
    let (mut p1, mut p2, mut rng) = exp.initial_players(path_index)?;
    let s0 = SystemState::from_players(&p1, &p2);
    let mut dec = Decomposer::new(&s0, &sstar, &exp.game)?;
    let mut out: Vec<SADecomposition> = (0..dec.dim())
        .map(|k| SADecomposition { coordinate: k, rounds: vec![], c: vec![], d: vec![], e: vec![], error: vec![] })
        .collect();
    let mut snapshot = |dec: &Decomposer| {
        let err = dec.error();
        for (k, s) in out.iter_mut().enumerate() {
            s.rounds.push(dec.round());
            s.c.push(dec.c()[k]);
            s.d.push(dec.d()[k]);
            s.e.push(dec.e()[k]);
            s.error.push(err[k]);
        }
    };
    snapshot(&dec);
    let mut next = exp.schedule.iter().peekable();
    for _ in 0..config.horizon {
        let record = step(&mut p1, &mut p2, &exp.game, &mut rng, DEFAULT_TOL)?;
        dec.push(&record)?;
        if next.peek() == Some(&&record.round) {
            next.next();
            snapshot(&dec);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::builtin;

    fn small(key: &str, horizon: u64, paths: u64) -> SimulationConfig {
        let mut cfg = SimulationConfig::builtin(key).unwrap();
        cfg.horizon = horizon;
        cfg.paths = paths;
        cfg.base_seed = 17;
        cfg
    }

    fn constant_trace(phi1: f64, psi1: f64, len: usize) -> PathTrace {
        PathTrace {
            base_seed: 0,
            path_index: 0,
            n_rows: 2,
            n_cols: 2,
            prior_means_p1: vec![0.0; 2],
            prior_means_p2: vec![0.0; 2],
            rounds: (1..=len as u64).collect(),
            phi: (0..len).flat_map(|_| [phi1, 1.0 - phi1]).collect(),
            psi: (0..len).flat_map(|_| [psi1, 1.0 - psi1]).collect(),
            x: None,
            y: None,
            final_state: SystemState { x: vec![0.0; 2], y: vec![0.0; 2], w: vec![1.0; 2], v: vec![1.0; 2] },
            pull_counts_p1: vec![0; 2],
            pull_counts_p2: vec![0; 2],
        }
    }

    #[test]
    fn classification_examples() {
        let pd = equilibrium_report(&builtin::prisoners_dilemma());
        let t = constant_trace(1.0, 1.0, 50);
        assert_eq!(
            classify_outcome(&t, &pd, 0.1, 0.95).unwrap(),
            OutcomeClass::NashConvergent(ActionPair { row: 0, col: 0 })
        );
        let t = constant_trace(0.001, 0.0, 50);
        assert_eq!(
            classify_outcome(&t, &pd, 0.1, 0.95).unwrap(),
            OutcomeClass::PureProfile(ActionPair { row: 1, col: 1 })
        );
        let t = constant_trace(0.5, 0.5, 50);
        assert_eq!(classify_outcome(&t, &pd, 0.1, 0.95).unwrap(), OutcomeClass::Undetermined);

        let mut t = constant_trace(0.5, 0.5, 50);
        for k in 45..50 {
            let p = if k % 2 == 0 { 0.05 } else { 0.95 };
            t.phi[2 * k] = p;
            t.phi[2 * k + 1] = 1.0 - p;
        }
        assert_eq!(classify_outcome(&t, &pd, 0.1, 0.95).unwrap(), OutcomeClass::Oscillating);
        assert!(classify_outcome(&t, &pd, 0.0, 0.95).is_err());
        let empty = PathTrace { rounds: vec![], phi: vec![], psi: vec![], ..t };
        assert!(classify_outcome(&empty, &pd, 0.1, 0.95).is_err());
    }

    #[test]
    fn path_is_deterministic_and_well_formed() {
        let cfg = small("a1b1", 2000, 1);
        let a = run_path(&cfg, 3).unwrap();
        let b = run_path(&cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rounds[0], 1);
        assert_eq!(*a.rounds.last().unwrap(), 2000);
        assert!(a.rounds.windows(2).all(|w| w[0] < w[1]));
        assert!(a.phi.iter().chain(&a.psi).all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(a.pull_counts_p1.iter().sum::<u64>(), 2000);
        assert_ne!(run_path(&cfg, 4).unwrap().phi, a.phi);
    }

    #[test]
    fn horizon_zero_rejected() {
        assert!(run_path(&small("pd", 0, 1), 0).is_err());
    }

    #[test]
    fn random_priors_are_per_path() {
        let mut cfg = small("a1b1", 10, 1);
        cfg.prior_p1 = Some(PriorSpec::RandomUniform { lo: 0.0, hi: 1.0 });
        cfg.prior_p2 = Some(PriorSpec::RandomStandardNormal);
        let a = run_path(&cfg, 0).unwrap();
        let b = run_path(&cfg, 1).unwrap();
        assert_ne!(a.prior_means_p1, b.prior_means_p1);
        assert!(a.prior_means_p1.iter().all(|m| (0.0..1.0).contains(m)));
    }

    #[test]
    fn ensemble_thread_invariance_and_single_path() {
        let mut cfg = small("pd", 3000, 6);
        cfg.threads = Some(1);
        let (one, _) = run_ensemble(&cfg).unwrap();
        cfg.threads = Some(4);
        let (many, _) = run_ensemble(&cfg).unwrap();
        assert_eq!(one.mean_phi1, many.mean_phi1);
        assert_eq!(one.classes, many.classes);
        assert!((one.fractions().values().sum::<f64>() - 1.0).abs() < 1e-12);

        let cfg = small("pd", 500, 1);
        let (s, traces) = run_ensemble(&cfg).unwrap();
        assert_eq!(s.mean_phi1, traces[0].phi1());
        assert_eq!(s.fractions().values().copied().collect::<Vec<_>>(), vec![1.0]);
    }

    #[test]
    fn decomposition_run() {
        let mut cfg = small("pd", 2000, 1);
        cfg.record = RecordSchedule::Every(100);
        let dec = run_decomposition(&cfg, 0, ActionPair { row: 0, col: 0 }).unwrap();
        assert_eq!(dec.len(), 8);
        assert_eq!(dec[0].rounds.len(), 1 + cfg.record.rounds(2000).len());
        assert!(dec.iter().all(|s| s.max_relative_residual() < 1e-8));
        assert!(run_decomposition(&small("a4b4", 10, 1), 0, ActionPair { row: 0, col: 0 }).is_err());
    }
}
