//! One round of the two-player Thompson-sampling game, and the quantities
//! that express it as a stochastic-approximation update
//! `S_{n+1} − S_n = γ_{n+1} ∘ (F(S_n) − S_n + ξ_{n+1})`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::choice::{probabilities_unchecked, ChoiceDistribution};
use crate::error::{Error, Result};
use crate::game::{PayoffGame, RewardModel};

/// Sufficient statistics of one player: pulls and reward sums per action.
///
/// The prior mean enters the sum as a pseudo-observation, so the posterior
/// mean is `payoff_sums[k] / (pull_counts[k] + 1)` and the posterior variance
/// is `1 / (pull_counts[k] + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub pull_counts: Vec<u64>,
    pub payoff_sums: Vec<f64>,
    pub prior_means: Vec<f64>,
}

impl PlayerState {
    pub fn new(prior_means: Vec<f64>) -> Result<Self> {
        if prior_means.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two prior means, got {}",
                prior_means.len()
            )));
        }
        if prior_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("non-finite prior mean".into()));
        }
        Ok(Self {
            pull_counts: vec![0; prior_means.len()],
            payoff_sums: prior_means.clone(),
            prior_means,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.pull_counts.len()
    }

    #[inline]
    pub fn mean(&self, k: usize) -> f64 {
        self.payoff_sums[k] / (self.pull_counts[k] + 1) as f64
    }

    #[inline]
    pub fn variance(&self, k: usize) -> f64 {
        1.0 / (self.pull_counts[k] + 1) as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.n_actions()).map(|k| self.mean(k)).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.n_actions()).map(|k| self.variance(k)).collect()
    }

    /// Rounds played so far.
    pub fn rounds(&self) -> u64 {
        self.pull_counts.iter().sum()
    }

    /// Conjugate unit-variance Gaussian update of the chosen action.
    #[inline]
    pub fn observe(&mut self, k: usize, reward: f64) {
        self.pull_counts[k] += 1;
        self.payoff_sums[k] += reward;
    }

    /// Samples one posterior draw per action (ascending) and returns the argmax,
    /// ties going to the lowest index.
    #[inline]
    pub fn choose<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let mut best = 0;
        let mut best_draw = f64::NEG_INFINITY;
        for k in 0..self.n_actions() {
            let z: f64 = StandardNormal.sample(rng);
            let n1 = (self.pull_counts[k] + 1) as f64;
            let draw = self.payoff_sums[k] / n1 + z / n1.sqrt();
            if draw > best_draw {
                best_draw = draw;
                best = k;
            }
        }
        best
    }
}

/// Posterior means and variances of both players, `(x, y, w, v)`.
///
/// Zero variances are allowed only for analytical points such as the
/// equilibrium state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
}

impl SystemState {
    pub fn from_players(p1: &PlayerState, p2: &PlayerState) -> Self {
        Self { x: p1.means(), y: p2.means(), w: p1.variances(), v: p2.variances() }
    }

    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_cols(&self) -> usize {
        self.y.len()
    }

    /// Flattened `(x_1..x_I, y_1..y_J, w_1..w_I, v_1..v_J)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * (self.x.len() + self.y.len()));
        s.extend_from_slice(&self.x);
        s.extend_from_slice(&self.y);
        s.extend_from_slice(&self.w);
        s.extend_from_slice(&self.v);
        s
    }

    pub fn dim(&self) -> usize {
        2 * (self.x.len() + self.y.len())
    }
}

/// Everything that happened in one round, in stochastic-approximation terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index `n`.
    pub round: u64,
    pub action_p1: usize,
    pub action_p2: usize,
    pub reward_p1: f64,
    pub reward_p2: f64,
    /// `α_{i,n}`: the new posterior variance on the chosen action, zero elsewhere.
    pub step_alpha: Vec<f64>,
    pub step_beta: Vec<f64>,
    /// Martingale noise in the chosen slots, zeros elsewhere; length `2(I+J)`.
    pub noise: Vec<f64>,
    /// Choice probabilities under the state before this round.
    pub phi: ChoiceDistribution,
    pub psi: ChoiceDistribution,
}

impl RoundRecord {
    /// Step-size vector `γ = (α, β, α, β)`.
    pub fn gamma(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(2 * (self.step_alpha.len() + self.step_beta.len()));
        g.extend_from_slice(&self.step_alpha);
        g.extend_from_slice(&self.step_beta);
        g.extend_from_slice(&self.step_alpha);
        g.extend_from_slice(&self.step_beta);
        g
    }

    /// Mean field at the pre-round state, rebuilt from the stored choice
    /// probabilities.
    pub fn mean_field(&self, game: &PayoffGame) -> Vec<f64> {
        mean_field_from_probs(game, &self.phi.probs, &self.psi.probs)
    }
}

/// The random stream owned by path `path_index` of an experiment seeded with
/// `base_seed`. Distinct indices give independent ChaCha streams.
pub fn path_rng(base_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(path_index);
    rng
}

pub fn init_state(prior_means_p1: &[f64], prior_means_p2: &[f64]) -> Result<(PlayerState, PlayerState)> {
    Ok((PlayerState::new(prior_means_p1.to_vec())?, PlayerState::new(prior_means_p2.to_vec())?))
}

fn check_dims(p1: &PlayerState, p2: &PlayerState, game: &PayoffGame) -> Result<()> {
    if p1.n_actions() != game.n_rows() || p2.n_actions() != game.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "players have {}x{} actions but the game is {}x{}",
            p1.n_actions(),
            p2.n_actions(),
            game.n_rows(),
            game.n_cols()
        )));
    }
    Ok(())
}

#[inline]
fn draw_reward<R: RngCore + ?Sized>(mean: f64, model: RewardModel, rng: &mut R) -> f64 {
    match model {
        RewardModel::GaussianUnitVariance => {
            let z: f64 = StandardNormal.sample(rng);
            mean + z
        }
        RewardModel::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Outcome of the random part of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub action_p1: usize,
    pub action_p2: usize,
    pub reward_p1: f64,
    pub reward_p2: f64,
}

/// Draws one round in the fixed order (player 1 samples, player 2 samples,
/// player 1 reward, player 2 reward) without touching the states.
#[inline]
pub fn draw_round<R: RngCore + ?Sized>(
    p1: &PlayerState,
    p2: &PlayerState,
    game: &PayoffGame,
    rng: &mut R,
) -> Draw {
    let i = p1.choose(rng);
    let j = p2.choose(rng);
    let a = draw_reward(game.a().get(i, j), game.reward_model(), rng);
    let b = draw_reward(game.b().get(i, j), game.reward_model(), rng);
    Draw { action_p1: i, action_p2: j, reward_p1: a, reward_p2: b }
}

/// Plays one round and applies both posterior updates, without building a
/// record. Consumes randomness exactly like [`step`].
#[inline]
pub fn advance<R: RngCore + ?Sized>(
    p1: &mut PlayerState,
    p2: &mut PlayerState,
    game: &PayoffGame,
    rng: &mut R,
) -> Draw {
    let d = draw_round(p1, p2, game, rng);
    p1.observe(d.action_p1, d.reward_p1);
    p2.observe(d.action_p2, d.reward_p2);
    d
}

/// Plays one round, applies the updates and returns the full record.
pub fn step<R: RngCore + ?Sized>(
    p1: &mut PlayerState,
    p2: &mut PlayerState,
    game: &PayoffGame,
    rng: &mut R,
    tol: f64,
) -> Result<RoundRecord> {
    check_dims(p1, p2, game)?;
    let phi = ChoiceDistribution { probs: probabilities_unchecked(&p1.means(), &p1.variances(), tol) };
    let psi = ChoiceDistribution { probs: probabilities_unchecked(&p2.means(), &p2.variances(), tol) };
    let d = draw_round(p1, p2, game, rng);
    let noise = noise_vector(&d, &phi, &psi, game);
    p1.observe(d.action_p1, d.reward_p1);
    p2.observe(d.action_p2, d.reward_p2);

    let mut step_alpha = vec![0.0; p1.n_actions()];
    step_alpha[d.action_p1] = p1.variance(d.action_p1);
    let mut step_beta = vec![0.0; p2.n_actions()];
    step_beta[d.action_p2] = p2.variance(d.action_p2);

    Ok(RoundRecord {
        round: p1.rounds(),
        action_p1: d.action_p1,
        action_p2: d.action_p2,
        reward_p1: d.reward_p1,
        reward_p2: d.reward_p2,
        step_alpha,
        step_beta,
        noise,
        phi,
        psi,
    })
}

/// `F` assembled from choice probabilities: expected payoff of each action
/// against the opponent's current mixed play, then `I + J` zeros.
pub fn mean_field_from_probs(game: &PayoffGame, phi: &[f64], psi: &[f64]) -> Vec<f64> {
    let (n_rows, n_cols) = (game.n_rows(), game.n_cols());
    let mut f = Vec::with_capacity(2 * (n_rows + n_cols));
    f.extend((0..n_rows).map(|i| game.a().row(i).iter().zip(psi).map(|(a, p)| a * p).sum::<f64>()));
    f.extend((0..n_cols).map(|j| (0..n_rows).map(|i| game.b().get(i, j) * phi[i]).sum::<f64>()));
    f.resize(2 * (n_rows + n_cols), 0.0);
    f
}

/// Mean field `F(S)`. Variances may be zero (point-mass beliefs).
pub fn mean_field(state: &SystemState, game: &PayoffGame, tol: f64) -> Result<Vec<f64>> {
    if state.n_rows() != game.n_rows() || state.n_cols() != game.n_cols() {
        return Err(Error::InvalidArgument("state and game dimensions differ".into()));
    }
    if state.w.len() != state.n_rows() || state.v.len() != state.n_cols() {
        return Err(Error::InvalidArgument("variance vectors do not match means".into()));
    }
    if state.w.iter().chain(&state.v).any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("negative variance".into()));
    }
    let phi = probabilities_unchecked(&state.x, &state.w, tol);
    let psi = probabilities_unchecked(&state.y, &state.v, tol);
    Ok(mean_field_from_probs(game, &phi, &psi))
}

/// Martingale noise of one round: for the chosen actions,
/// `ā_i = a − Σ_j A_{i,j} ψ_j` and `b̄_j = b − Σ_i B_{i,j} φ_i`; every other
/// slot is zero.
pub fn noise_vector(draw: &Draw, phi: &ChoiceDistribution, psi: &ChoiceDistribution, game: &PayoffGame) -> Vec<f64> {
    let (n_rows, n_cols) = (game.n_rows(), game.n_cols());
    let (i, j) = (draw.action_p1, draw.action_p2);
    let expected_a: f64 = game.a().row(i).iter().zip(&psi.probs).map(|(a, p)| a * p).sum();
    let expected_b: f64 = (0..n_rows).map(|k| game.b().get(k, j) * phi.probs[k]).sum();
    let mut noise = vec![0.0; 2 * (n_rows + n_cols)];
    noise[i] = draw.reward_p1 - expected_a;
    noise[n_rows + j] = draw.reward_p2 - expected_b;
    noise
}

/// Largest coordinate of `S_{n+1} − S_n − γ ∘ (F(S_n) − S_n + ξ)`.
pub fn sa_identity_residual(prev: &SystemState, next: &SystemState, record: &RoundRecord, game: &PayoffGame) -> f64 {
    let s0 = prev.to_vec();
    let s1 = next.to_vec();
    let f = record.mean_field(game);
    let gamma = record.gamma();
    s0.iter()
        .zip(&s1)
        .zip(f.iter().zip(&gamma))
        .zip(&record.noise)
        .map(|(((a, b), (fk, g)), xi)| ((b - a) - g * (fk - a + xi)).abs())
        .fold(0.0, f64::max)
}

/// Lemma-3 style cap on `E‖ξ‖²`: `(I + J) + Σ (A² + B²) / 4`.
pub fn noise_second_moment_bound(game: &PayoffGame) -> f64 {
    (game.n_rows() + game.n_cols()) as f64 + (game.a().sum_squares() + game.b().sum_squares()) / 4.0
}

/// Draws `rounds` independent rounds from a frozen pair of states and returns
/// the noise vectors (the states are not updated).
pub fn frozen_noise_samples<R: Rng + ?Sized>(
    p1: &PlayerState,
    p2: &PlayerState,
    game: &PayoffGame,
    rng: &mut R,
    rounds: usize,
    tol: f64,
) -> Vec<Vec<f64>> {
    let phi = ChoiceDistribution { probs: probabilities_unchecked(&p1.means(), &p1.variances(), tol) };
    let psi = ChoiceDistribution { probs: probabilities_unchecked(&p2.means(), &p2.variances(), tol) };
    (0..rounds)
        .map(|_| {
            let d = draw_round(p1, p2, game, rng);
            noise_vector(&d, &phi, &psi, game)
        })
        .collect()
}
