//! Payoff matrices, equilibrium enumeration and the two structural checks
//! (no ties + unique pure equilibrium, and payoff stability around it).
//!
//! Action indices are 0-based throughout the API; reports and the CLI print
//! them 1-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::SystemState;
use crate::error::{Error, Result};

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidGame("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::InvalidGame("ragged matrix rows".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGame("non-finite matrix entry".into()));
        }
        Ok(Self { rows: n_rows, cols: n_cols, data: rows.concat() })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RewardModel {
    /// Observed payoff is `Normal(mean, 1)`.
    #[default]
    GaussianUnitVariance,
    /// Observed payoff is `Bernoulli(mean)`; means must lie in `[0, 1]`.
    Bernoulli,
}

/// A pure action profile `(row action of player 1, column action of player 2)`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionPair {
    pub row: usize,
    pub col: usize,
}

impl ActionPair {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for ActionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row + 1, self.col + 1)
    }
}

/// Expected payoff matrices of both players plus the reward noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffGame {
    a: Matrix,
    b: Matrix,
    reward_model: RewardModel,
}

impl PayoffGame {
    pub fn new(a: Matrix, b: Matrix, reward_model: RewardModel) -> Result<Self> {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(Error::InvalidGame(format!(
                "A is {}x{} but B is {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        if a.rows() < 2 || a.cols() < 2 {
            return Err(Error::InvalidGame("each player needs at least two actions".into()));
        }
        if reward_model == RewardModel::Bernoulli {
            let inside = |m: &Matrix| m.data.iter().all(|v| (0.0..=1.0).contains(v));
            if !inside(&a) || !inside(&b) {
                return Err(Error::InvalidGame("Bernoulli rewards need means in [0, 1]".into()));
            }
        }
        Ok(Self { a, b, reward_model })
    }

    pub fn from_rows(a: &[Vec<f64>], b: &[Vec<f64>], reward_model: RewardModel) -> Result<Self> {
        Self::new(Matrix::from_rows(a)?, Matrix::from_rows(b)?, reward_model)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn reward_model(&self) -> RewardModel {
        self.reward_model
    }

    pub fn with_reward_model(self, reward_model: RewardModel) -> Result<Self> {
        Self::new(self.a, self.b, reward_model)
    }

    /// Number of player 1 actions (I).
    pub fn n_rows(&self) -> usize {
        self.a.rows()
    }

    /// Number of player 2 actions (J).
    pub fn n_cols(&self) -> usize {
        self.a.cols()
    }

    fn is_best_response_pair(&self, i: usize, j: usize) -> bool {
        let a_ij = self.a.get(i, j);
        let b_ij = self.b.get(i, j);
        (0..self.n_rows()).all(|k| self.a.get(k, j) <= a_ij)
            && (0..self.n_cols()).all(|k| self.b.get(i, k) <= b_ij)
    }

    fn require_pure_nash(&self, ne: ActionPair) -> Result<()> {
        if ne.row >= self.n_rows() || ne.col >= self.n_cols() || !self.is_best_response_pair(ne.row, ne.col) {
            return Err(Error::NotPureNash(ne.row + 1, ne.col + 1));
        }
        Ok(())
    }
}

/// All pure Nash equilibria in lexicographic order. Ties count as best responses.
pub fn pure_nash_equilibria(game: &PayoffGame) -> Vec<ActionPair> {
    let mut out = Vec::new();
    for i in 0..game.n_rows() {
        for j in 0..game.n_cols() {
            if game.is_best_response_pair(i, j) {
                out.push(ActionPair::new(i, j));
            }
        }
    }
    out
}

/// A tie that breaks the no-ties condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TieViolation {
    /// Player 1 payoffs `A[first][col] == A[second][col]`.
    Column { col: usize, first: usize, second: usize },
    /// Player 2 payoffs `B[row][first] == B[row][second]`.
    Row { row: usize, first: usize, second: usize },
}

impl fmt::Display for TieViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TieViolation::Column { col, first, second } => {
                write!(f, "A column {}: rows {} and {} tie", col + 1, first + 1, second + 1)
            }
            TieViolation::Row { row, first, second } => {
                write!(f, "B row {}: columns {} and {} tie", row + 1, first + 1, second + 1)
            }
        }
    }
}

/// Exact-equality scan: within each column of A and within each row of B.
pub fn check_no_ties(game: &PayoffGame) -> (bool, Vec<TieViolation>) {
    let (n_rows, n_cols) = (game.n_rows(), game.n_cols());
    let mut violations = Vec::new();
    for col in 0..n_cols {
        for first in 0..n_rows {
            for second in first + 1..n_rows {
                if game.a.get(first, col) == game.a.get(second, col) {
                    violations.push(TieViolation::Column { col, first, second });
                }
            }
        }
    }
    for row in 0..n_rows {
        for first in 0..n_cols {
            for second in first + 1..n_cols {
                if game.b.get(row, first) == game.b.get(row, second) {
                    violations.push(TieViolation::Row { row, first, second });
                }
            }
        }
    }
    (violations.is_empty(), violations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Player {
    One,
    Two,
}

/// One failed payoff-stability inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityViolation {
    pub player: Player,
    /// The two distinct actions of `player` being compared (0-based).
    pub pair: (usize, usize),
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub holds: bool,
    /// Minimum over all compared pairs of (right-hand side − left-hand side).
    pub worst_margin: f64,
    pub violating_pairs: Vec<StabilityViolation>,
}

/// Largest payoff change of player 1's action `i` when player 2 leaves `ne_col`.
pub(crate) fn row_deviation(game: &PayoffGame, i: usize, ne_col: usize) -> f64 {
    let anchor = game.a.get(i, ne_col);
    (0..game.n_cols())
        .filter(|&m| m != ne_col)
        .map(|m| (anchor - game.a.get(i, m)).abs())
        .fold(0.0, f64::max)
}

/// Largest payoff change of player 2's action `j` when player 1 leaves `ne_row`.
pub(crate) fn col_deviation(game: &PayoffGame, j: usize, ne_row: usize) -> f64 {
    let anchor = game.b.get(ne_row, j);
    (0..game.n_rows())
        .filter(|&m| m != ne_row)
        .map(|m| (anchor - game.b.get(m, j)).abs())
        .fold(0.0, f64::max)
}

/// Payoff-stability condition evaluated with `ne` playing the role of the
/// reference profile: for every pair of distinct actions, the summed
/// off-equilibrium payoff swings must be strictly smaller than the payoff gap
/// at the equilibrium.
pub fn check_payoff_stability(game: &PayoffGame, ne: ActionPair) -> Result<StabilityReport> {
    game.require_pure_nash(ne)?;
    let mut worst = f64::INFINITY;
    let mut violating = Vec::new();

    let row_dev: Vec<f64> = (0..game.n_rows()).map(|i| row_deviation(game, i, ne.col)).collect();
    for i in 0..game.n_rows() {
        for l in i + 1..game.n_rows() {
            let rhs = (game.a.get(i, ne.col) - game.a.get(l, ne.col)).abs();
            let margin = rhs - (row_dev[i] + row_dev[l]);
            worst = worst.min(margin);
            if margin <= 0.0 {
                violating.push(StabilityViolation { player: Player::One, pair: (i, l), margin });
            }
        }
    }

    let col_dev: Vec<f64> = (0..game.n_cols()).map(|j| col_deviation(game, j, ne.row)).collect();
    for j in 0..game.n_cols() {
        for k in j + 1..game.n_cols() {
            let rhs = (game.b.get(ne.row, j) - game.b.get(ne.row, k)).abs();
            let margin = rhs - (col_dev[j] + col_dev[k]);
            worst = worst.min(margin);
            if margin <= 0.0 {
                violating.push(StabilityViolation { player: Player::Two, pair: (j, k), margin });
            }
        }
    }

    Ok(StabilityReport { holds: violating.is_empty(), worst_margin: worst, violating_pairs: violating })
}

/// Interior mixed equilibrium of a 2×2 game as `(p, q)`: `p` is player 1's
/// probability of action 1 (making player 2 indifferent), `q` is player 2's.
pub fn mixed_ne_2x2(game: &PayoffGame) -> Result<Option<(f64, f64)>> {
    if game.n_rows() != 2 || game.n_cols() != 2 {
        return Err(Error::InvalidGame(format!(
            "mixed equilibrium solver needs a 2x2 game, got {}x{}",
            game.n_rows(),
            game.n_cols()
        )));
    }
    let (a, b) = (&game.a, &game.b);
    let p_den = (b.get(0, 0) - b.get(0, 1)) - (b.get(1, 0) - b.get(1, 1));
    let q_den = (a.get(0, 0) - a.get(1, 0)) - (a.get(0, 1) - a.get(1, 1));
    if p_den == 0.0 || q_den == 0.0 {
        return Ok(None);
    }
    let p = (b.get(1, 1) - b.get(1, 0)) / p_den;
    let q = (a.get(1, 1) - a.get(0, 1)) / q_den;
    let interior = |x: f64| x > 0.0 && x < 1.0;
    Ok((interior(p) && interior(q)).then_some((p, q)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub pure_ne: Vec<ActionPair>,
    pub mixed_ne_2x2: Option<(f64, f64)>,
    pub assumption1_holds: bool,
    pub no_ties_holds: bool,
}

pub fn equilibrium_report(game: &PayoffGame) -> EquilibriumReport {
    let pure_ne = pure_nash_equilibria(game);
    let (no_ties_holds, _) = check_no_ties(game);
    let mixed = if game.n_rows() == 2 && game.n_cols() == 2 {
        mixed_ne_2x2(game).ok().flatten()
    } else {
        None
    };
    EquilibriumReport {
        assumption1_holds: no_ties_holds && pure_ne.len() == 1,
        pure_ne,
        mixed_ne_2x2: mixed,
        no_ties_holds,
    }
}

/// The fixed point of the mean field associated with `ne`: each player's
/// beliefs equal its payoffs against the opponent's equilibrium action, with
/// zero posterior variance.
pub fn equilibrium_point(game: &PayoffGame, ne: ActionPair) -> Result<SystemState> {
    game.require_pure_nash(ne)?;
    Ok(SystemState {
        x: game.a.column(ne.col),
        y: game.b.row(ne.row).to_vec(),
        w: vec![0.0; game.n_rows()],
        v: vec![0.0; game.n_cols()],
    })
}

/// Built-in games with their reference prior means.
pub mod builtin {
    use super::*;

    /// Prior means for a builtin experiment.
    #[derive(Debug, Clone, PartialEq)]
    pub enum BuiltinPriors {
        Fixed(Vec<f64>, Vec<f64>),
        StandardNormal,
    }

    pub const KEYS: [&str; 5] = ["pd", "a1b1", "a2b2", "a3b3", "a4b4"];

    pub fn prisoners_dilemma() -> PayoffGame {
        PayoffGame::from_rows(
            &[vec![0.2, 5.0], vec![0.1, 4.0]],
            &[vec![0.2, 0.1], vec![5.0, 4.0]],
            RewardModel::GaussianUnitVariance,
        )
        .expect("valid builtin")
    }

    pub fn a1b1() -> PayoffGame {
        PayoffGame::from_rows(
            &[
                vec![2.5, 1.9, 2.0, 1.9, 1.9],
                vec![0.1, 0.2, 0.3, 0.3, 0.2],
                vec![1.6, 1.8, 1.7, 1.8, 1.8],
                vec![0.5, 0.5, 0.4, 0.4, 0.4],
                vec![0.9, 0.8, 0.9, 0.8, 0.8],
                vec![1.2, 1.1, 1.2, 1.2, 1.1],
            ],
            &[
                vec![2.0, 0.5, 0.1, 1.0, 1.4],
                vec![1.8, 0.3, 0.2, 1.2, 1.3],
                vec![2.2, 0.4, 0.1, 1.1, 1.3],
                vec![1.9, 0.5, 0.1, 1.1, 1.4],
                vec![1.8, 0.3, 0.2, 1.2, 1.3],
                vec![1.9, 0.4, 0.2, 1.2, 1.4],
            ],
            RewardModel::GaussianUnitVariance,
        )
        .expect("valid builtin")
    }

    pub fn a2b2() -> PayoffGame {
        PayoffGame::from_rows(
            &[vec![0.5, 0.4], vec![0.2, 0.3]],
            &[vec![0.7, 0.3], vec![0.6, 0.5]],
            RewardModel::Bernoulli,
        )
        .expect("valid builtin")
    }

    pub fn a3b3() -> PayoffGame {
        PayoffGame::from_rows(
            &[vec![0.3, 0.3], vec![0.4, 0.1]],
            &[vec![0.1, 0.3], vec![0.4, 0.3]],
            RewardModel::GaussianUnitVariance,
        )
        .expect("valid builtin")
    }

    pub fn a4b4() -> PayoffGame {
        PayoffGame::from_rows(
            &[vec![0.5, 0.2], vec![0.1, 0.3]],
            &[vec![0.3, 0.5], vec![0.7, 0.4]],
            RewardModel::GaussianUnitVariance,
        )
        .expect("valid builtin")
    }

    pub fn game(key: &str) -> Result<PayoffGame> {
        match key.to_ascii_lowercase().as_str() {
            "pd" => Ok(prisoners_dilemma()),
            "a1b1" => Ok(a1b1()),
            "a2b2" => Ok(a2b2()),
            "a3b3" => Ok(a3b3()),
            "a4b4" => Ok(a4b4()),
            other => Err(Error::InvalidGame(format!("unknown builtin game '{other}'"))),
        }
    }

    pub fn priors(key: &str) -> Result<BuiltinPriors> {
        match key.to_ascii_lowercase().as_str() {
            "pd" => Ok(BuiltinPriors::Fixed(vec![4.0736, 4.5290], vec![0.6349, 4.5669])),
            "a1b1" => Ok(BuiltinPriors::Fixed(
                vec![0.8147, 0.9058, 0.1270, 0.9134, 0.6324, 0.0975],
                vec![0.2785, 0.5469, 0.9575, 0.9649, 0.1576],
            )),
            "a2b2" => Ok(BuiltinPriors::Fixed(vec![0.8147, 0.9058], vec![0.1270, 0.9134])),
            "a3b3" | "a4b4" => Ok(BuiltinPriors::StandardNormal),
            other => Err(Error::InvalidGame(format!("unknown builtin game '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;

    fn pair(i: usize, j: usize) -> ActionPair {
        ActionPair::new(i - 1, j - 1)
    }

    #[test]
    fn pure_equilibria_of_builtins() {
        assert_eq!(pure_nash_equilibria(&prisoners_dilemma()), vec![pair(1, 1)]);
        assert_eq!(pure_nash_equilibria(&a1b1()), vec![pair(1, 1)]);
        assert_eq!(pure_nash_equilibria(&a2b2()), vec![pair(1, 1)]);
        assert_eq!(pure_nash_equilibria(&a3b3()), vec![pair(1, 2), pair(2, 1)]);
        assert!(pure_nash_equilibria(&a4b4()).is_empty());
    }

    #[test]
    fn dominant_entry_is_unique_equilibrium() {
        let g = PayoffGame::from_rows(
            &[vec![1.0, 0.0], vec![0.0, -1.0]],
            &[vec![1.0, 0.0], vec![0.0, -1.0]],
            RewardModel::GaussianUnitVariance,
        )
        .unwrap();
        assert_eq!(pure_nash_equilibria(&g), vec![pair(1, 1)]);
    }

    #[test]
    fn ties_count_as_best_responses() {
        let g = PayoffGame::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 0.0]],
            &[vec![1.0, 0.0], vec![0.0, 0.0]],
            RewardModel::GaussianUnitVariance,
        )
        .unwrap();
        assert_eq!(pure_nash_equilibria(&g), vec![pair(1, 1), pair(2, 2)]);
    }

    #[test]
    fn no_ties_scan() {
        assert!(check_no_ties(&a1b1()).0);
        assert!(check_no_ties(&prisoners_dilemma()).0);
        // A3 ties across a row, which is allowed.
        assert!(check_no_ties(&a3b3()).0);

        let g = PayoffGame::from_rows(
            &[vec![1.0, 2.0], vec![1.0, 3.0]],
            &[vec![0.1, 0.2], vec![0.3, 0.4]],
            RewardModel::GaussianUnitVariance,
        )
        .unwrap();
        let (ok, v) = check_no_ties(&g);
        assert!(!ok);
        assert_eq!(v, vec![TieViolation::Column { col: 0, first: 0, second: 1 }]);
    }

    #[test]
    fn stability_of_reference_games() {
        let r = check_payoff_stability(&a1b1(), pair(1, 1)).unwrap();
        assert!(r.holds);
        assert!(r.worst_margin > 0.0 && r.violating_pairs.is_empty());

        let r = check_payoff_stability(&prisoners_dilemma(), pair(1, 1)).unwrap();
        assert!(!r.holds);
        let rows = r.violating_pairs.iter().find(|v| v.player == Player::One).unwrap();
        assert_eq!(rows.pair, (0, 1));
        assert!((rows.margin - (0.1 - 8.7)).abs() < 1e-12);
        assert!(r.worst_margin <= rows.margin);
    }

    #[test]
    fn constant_rows_have_zero_deviation() {
        let g = PayoffGame::from_rows(
            &[vec![2.0, 2.0, 2.0], vec![1.0, 1.0, 1.0]],
            &[vec![3.0, 2.0, 1.0], vec![3.0, 2.0, 1.0]],
            RewardModel::GaussianUnitVariance,
        )
        .unwrap();
        let r = check_payoff_stability(&g, pair(1, 1)).unwrap();
        assert!(r.holds);
        assert!((0..2).all(|i| row_deviation(&g, i, 0) == 0.0));
        assert!((0..3).all(|j| col_deviation(&g, j, 0) == 0.0));
    }

    #[test]
    fn stability_rejects_non_equilibrium() {
        assert_eq!(
            check_payoff_stability(&prisoners_dilemma(), pair(2, 2)),
            Err(Error::NotPureNash(2, 2))
        );
    }

    #[test]
    fn mixed_equilibria() {
        let (p, q) = mixed_ne_2x2(&a3b3()).unwrap().unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-12 && (q - 2.0 / 3.0).abs() < 1e-12);
        let (p, q) = mixed_ne_2x2(&a4b4()).unwrap().unwrap();
        assert!((p - 0.6).abs() < 1e-12 && (q - 0.2).abs() < 1e-12);
        let pennies = PayoffGame::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            RewardModel::GaussianUnitVariance,
        )
        .unwrap();
        assert_eq!(mixed_ne_2x2(&pennies).unwrap(), Some((0.5, 0.5)));
        // dominant strategies: no interior solution
        assert_eq!(mixed_ne_2x2(&prisoners_dilemma()).unwrap(), None);
        assert!(mixed_ne_2x2(&a1b1()).is_err());
    }

    #[test]
    fn fixed_points() {
        let s = equilibrium_point(&prisoners_dilemma(), pair(1, 1)).unwrap();
        assert_eq!(s.x, vec![0.2, 0.1]);
        assert_eq!(s.y, vec![0.2, 0.1]);
        assert_eq!(s.w, vec![0.0, 0.0]);
        let s = equilibrium_point(&a2b2(), pair(1, 1)).unwrap();
        assert_eq!(s.x, vec![0.5, 0.2]);
        assert_eq!(s.y, vec![0.7, 0.3]);
        assert!(equilibrium_point(&a4b4(), pair(1, 1)).is_err());
    }

    #[test]
    fn reports() {
        let r = equilibrium_report(&prisoners_dilemma());
        assert!(r.assumption1_holds && r.no_ties_holds);
        let r = equilibrium_report(&a3b3());
        assert!(!r.assumption1_holds);
        assert_eq!(r.pure_ne.len(), 2);
    }

    #[test]
    fn bernoulli_range_enforced() {
        let bad = PayoffGame::from_rows(
            &[vec![0.2, 5.0], vec![0.1, 4.0]],
            &[vec![0.2, 0.1], vec![0.5, 0.4]],
            RewardModel::Bernoulli,
        );
        assert!(bad.is_err());
        assert!(PayoffGame::from_rows(&[vec![1.0]], &[vec![1.0]], RewardModel::GaussianUnitVariance).is_err());
    }
}
