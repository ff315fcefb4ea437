//! Numerical checks of the stochastic-approximation error analysis along
//! simulated paths.
//!
//! The error of each state coordinate splits as `S_{k,n} − S*_k = C + D + E`:
//! `C` is the decayed initial error, `D` the accumulated mean-field drift and
//! `E` the accumulated martingale noise, all weighted by products of
//! `(1 − γ_{k,τ})`.

use twofloat::TwoFloat;

use crate::dynamics::{PlayerState, RoundRecord, SystemState};
use crate::error::{Error, Result};
use crate::game::{col_deviation, pure_nash_equilibria, row_deviation, ActionPair, PayoffGame};

/// Error decomposition of one coordinate (0-based index into `S.to_vec()`).
///
/// Entry 0 is the state before the first record; entry `t` follows the
/// `t`-th record.
#[derive(Debug, Clone, PartialEq)]
pub struct SADecomposition {
    pub coordinate: usize,
    pub rounds: Vec<u64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub error: Vec<f64>,
}

impl SADecomposition {
    /// Largest `|error − (C + D + E)|` relative to `max(|error|, |C|+|D|+|E|)`.
    pub fn max_relative_residual(&self) -> f64 {
        (0..self.error.len()).map(|t| self.relative_residual(t)).fold(0.0, f64::max)
    }

    pub fn relative_residual(&self, t: usize) -> f64 {
        let sum = self.c[t] + self.d[t] + self.e[t];
        let scale = self.error[t].abs().max(self.c[t].abs() + self.d[t].abs() + self.e[t].abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.error[t] - sum).abs() / scale
        }
    }
}

/// Name of a state coordinate, e.g. `x1`, `y2`, `w1`, `v3` (1-based).
pub fn coordinate_name(coordinate: usize, n_rows: usize, n_cols: usize) -> String {
    let block = n_rows + n_cols;
    let (prefix, idx) = match coordinate {
        k if k < n_rows => ("x", k),
        k if k < block => ("y", k - n_rows),
        k if k < block + n_rows => ("w", k - block),
        k => ("v", k - block - n_rows),
    };
    format!("{prefix}{}", idx + 1)
}

fn player_from_beliefs(means: &[f64], variances: &[f64], label: &str) -> Result<PlayerState> {
    let mut counts = Vec::with_capacity(means.len());
    for &w in variances {
        let inv = 1.0 / w;
        let n = inv.round();
        if !(w > 0.0 && w <= 1.0) || (inv - n).abs() > 1e-6 * inv {
            return Err(Error::InvalidArgument(format!(
                "{label} variance {w} is not the reciprocal of a positive integer"
            )));
        }
        counts.push(n as u64 - 1);
    }
    let sums = means.iter().zip(&counts).map(|(m, &n)| m * (n + 1) as f64).collect();
    Ok(PlayerState { pull_counts: counts, payoff_sums: sums, prior_means: means.to_vec() })
}

/// Streaming C/D/E recursion. Each pushed record costs O(dim) time and the
/// state is O(dim) memory.
///
/// The error term is rebuilt independently by replaying the recorded actions
/// and rewards through the posterior update, so `C + D + E = error` is a
/// genuine check rather than a restatement.
#[derive(Debug, Clone)]
pub struct Decomposer {
    game: PayoffGame,
    sstar: Vec<f64>,
    p1: PlayerState,
    p2: PlayerState,
    round: u64,
    c: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
}

impl Decomposer {
    pub fn new(s0: &SystemState, sstar: &SystemState, game: &PayoffGame) -> Result<Self> {
        let dims_ok = |s: &SystemState| {
            s.x.len() == game.n_rows()
                && s.w.len() == game.n_rows()
                && s.y.len() == game.n_cols()
                && s.v.len() == game.n_cols()
        };
        if !dims_ok(s0) || !dims_ok(sstar) {
            return Err(Error::InvalidArgument("state dimensions do not match the game".into()));
        }
        if pure_nash_equilibria(game).is_empty() {
            return Err(Error::InvalidGame("decomposition needs a game with a pure Nash equilibrium".into()));
        }
        let p1 = player_from_beliefs(&s0.x, &s0.w, "player 1")?;
        let p2 = player_from_beliefs(&s0.y, &s0.v, "player 2")?;
        let round = p1.rounds();
        let sstar = sstar.to_vec();
        let c: Vec<f64> = s0.to_vec().iter().zip(&sstar).map(|(s, t)| s - t).collect();
        let dim = c.len();
        Ok(Self { game: game.clone(), sstar, p1, p2, round, c, d: vec![0.0; dim], e: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Round index of the current state.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn push(&mut self, record: &RoundRecord) -> Result<()> {
        if record.round != self.round + 1 {
            return Err(Error::Records(format!(
                "expected round {}, got round {}",
                self.round + 1,
                record.round
            )));
        }
        if record.noise.len() != self.dim()
            || record.step_alpha.len() != self.game.n_rows()
            || record.step_beta.len() != self.game.n_cols()
        {
            return Err(Error::Records(format!("record for round {} has wrong dimensions", record.round)));
        }
        let gamma = record.gamma();
        let f = record.mean_field(&self.game);
        for k in 0..self.dim() {
            let g = gamma[k];
            self.c[k] *= 1.0 - g;
            self.d[k] = (1.0 - g) * self.d[k] + g * (f[k] - self.sstar[k]);
            self.e[k] = (1.0 - g) * self.e[k] + g * record.noise[k];
        }
        self.p1.observe(record.action_p1, record.reward_p1);
        self.p2.observe(record.action_p2, record.reward_p2);
        self.round = record.round;
        Ok(())
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    /// `S_n − S*` from the replayed posteriors.
    pub fn error(&self) -> Vec<f64> {
        SystemState::from_players(&self.p1, &self.p2)
            .to_vec()
            .iter()
            .zip(&self.sstar)
            .map(|(s, t)| s - t)
            .collect()
    }
}

/// C, D, E and the direct error for every coordinate after every record.
///
/// `records` must be consecutive rounds starting right after `s0`.
pub fn decompose_path(
    records: &[RoundRecord],
    s0: &SystemState,
    sstar: &SystemState,
    game: &PayoffGame,
) -> Result<Vec<SADecomposition>> {
    let mut dec = Decomposer::new(s0, sstar, game)?;
    let dim = dec.dim();
    let mut out: Vec<SADecomposition> = (0..dim)
        .map(|k| SADecomposition {
            coordinate: k,
            rounds: Vec::with_capacity(records.len() + 1),
            c: Vec::with_capacity(records.len() + 1),
            d: Vec::with_capacity(records.len() + 1),
            e: Vec::with_capacity(records.len() + 1),
            error: Vec::with_capacity(records.len() + 1),
        })
        .collect();
    let snapshot = |dec: &Decomposer, out: &mut [SADecomposition]| {
        let err = dec.error();
        for (k, s) in out.iter_mut().enumerate() {
            s.rounds.push(dec.round());
            s.c.push(dec.c()[k]);
            s.d.push(dec.d()[k]);
            s.e.push(dec.e()[k]);
            s.error.push(err[k]);
        }
    };
    snapshot(&dec, &mut out);
    for r in records {
        dec.push(r)?;
        snapshot(&dec, &mut out);
    }
    Ok(out)
}

fn gamma_series(records: &[RoundRecord], k: usize) -> Result<Vec<f64>> {
    let first = records.first().ok_or_else(|| Error::Records("no records".into()))?;
    let (n_rows, n_cols) = (first.step_alpha.len(), first.step_beta.len());
    let dim = 2 * (n_rows + n_cols);
    if k >= dim {
        return Err(Error::IndexOutOfRange { index: k, len: dim });
    }
    let block = n_rows + n_cols;
    let k = k % block;
    Ok(records
        .iter()
        .map(|r| if k < n_rows { r.step_alpha[k] } else { r.step_beta[k - n_rows] })
        .collect())
}

/// `|∏_{τ=m}^{n}(1−γ_τ) + Σ_{τ=m}^{n} [∏_{s=τ+1}^{n}(1−γ_s)] γ_τ − 1|` for
/// coordinate `k`, with `m ≤ n` given as round numbers present in `records`.
pub fn stepsize_identity_check(records: &[RoundRecord], k: usize, m: u64, n: u64) -> Result<f64> {
    let gamma = gamma_series(records, k)?;
    let start = records[0].round;
    let end = start + records.len() as u64 - 1;
    if m < start || n > end || m > n {
        return Err(Error::InvalidArgument(format!(
            "need {start} <= m <= n <= {end}, got m = {m}, n = {n}"
        )));
    }
    // Double-double accumulation keeps the rounding of up to `n` factors
    // far below the residual being measured.
    let mut tail = TwoFloat::from(1.0);
    let mut sum = TwoFloat::from(0.0);
    for tau in (m..=n).rev() {
        let g = gamma[(tau - start) as usize];
        sum += tail * g;
        tail *= TwoFloat::new_sub(1.0, g);
    }
    Ok((tail + sum - 1.0).hi().abs())
}

/// `∏_τ (1 − γ_{k,τ})` over all records.
///
/// For a path started from the prior this equals `1 / (P + 1)`, `P` being the
/// number of times the coordinate's action was played.
pub fn vanishing_product_check(records: &[RoundRecord], k: usize) -> Result<f64> {
    if records.is_empty() {
        return Ok(1.0);
    }
    let prod = gamma_series(records, k)?
        .iter()
        .fold(TwoFloat::from(1.0), |acc, &g| acc * TwoFloat::new_sub(1.0, g));
    Ok(prod.hi())
}

/// Bound on `|D|` for a posterior-mean coordinate: the largest payoff change
/// of that action when the opponent leaves its equilibrium action.
pub fn drift_bound(game: &PayoffGame, ne: ActionPair, coordinate: usize) -> Result<f64> {
    let (n_rows, n_cols) = (game.n_rows(), game.n_cols());
    if coordinate >= 2 * (n_rows + n_cols) {
        return Err(Error::IndexOutOfRange { index: coordinate, len: 2 * (n_rows + n_cols) });
    }
    if coordinate >= n_rows + n_cols {
        return Err(Error::InvalidArgument(format!(
            "coordinate {} is a variance; the drift bound applies to means",
            coordinate_name(coordinate, n_rows, n_cols)
        )));
    }
    if ne.row >= n_rows || ne.col >= n_cols {
        return Err(Error::InvalidArgument(format!("equilibrium {ne} is outside the game")));
    }
    Ok(if coordinate < n_rows {
        row_deviation(game, coordinate, ne.col)
    } else {
        col_deviation(game, coordinate - n_rows, ne.row)
    })
}

/// True iff `|D_n| ≤ bound + 1e-9` at every stored entry.
pub fn drift_bound_check(decomp: &SADecomposition, game: &PayoffGame, ne: ActionPair) -> Result<bool> {
    let bound = drift_bound(game, ne, decomp.coordinate)?;
    Ok(decomp.d.iter().all(|d| d.abs() <= bound + 1e-9))
}

/// Smallest `|m_i − m_k|` over distinct actions.
pub fn min_pairwise_gap(means: &[f64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..means.len() {
        for k in i + 1..means.len() {
            gap = gap.min((means[i] - means[k]).abs());
        }
    }
    gap
}

/// Separation threshold for player 1's posterior means near `ne`:
/// `(ε/2)·min_{i≠k} |A_{i,j*} − A_{k,j*}|`, where `ε` is the payoff-stability
/// margin (non-positive margins give 0).
pub fn separation_threshold(game: &PayoffGame, ne: ActionPair, stability_margin: f64) -> f64 {
    0.5 * stability_margin.max(0.0) * min_pairwise_gap(&game.a().column(ne.col))
}
