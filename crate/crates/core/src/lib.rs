//! Simulation and analysis of two independent Gaussian Thompson samplers
//! playing a repeated two-player matrix game.

pub mod choice;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod harness;
pub mod normal;
pub mod quadrature;

pub use choice::{
    choice_gradients, choice_probabilities_exact, choice_probabilities_mc, slepian_lower_bound, BeliefVector,
    ChoiceDistribution, ChoiceGradient,
};
pub use dynamics::{init_state, mean_field, step, PlayerState, RoundRecord, SystemState};
pub use error::{Error, Result};
pub use game::{ActionPair, Matrix, PayoffGame, RewardModel};
pub use harness::{run_ensemble, run_path, OutcomeClass, PathTrace, SimulationConfig};
