//! Experiment configuration: TOML files plus command-line overrides.
//!
//! ```toml
//! game = "pd"                     # or an inline table, see below
//! prior_means_p1 = [4.0736, 4.5290]
//! prior_means_p2 = "random_uniform(0,1)"
//! horizon = 1000000
//! paths = 500
//! seed = 7
//! record = "log"                  # or "every:1000"
//! record_beliefs = false
//!
//! # [game]
//! # a = [[0.2, 5.0], [0.1, 4.0]]
//! # b = [[0.2, 0.1], [5.0, 4.0]]
//! # reward_model = "gaussian"     # or "bernoulli"
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::game::builtin::{self, BuiltinPriors};
use crate::game::{PayoffGame, RewardModel};

pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_LOG_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum GameSpec {
    Builtin(String),
    Inline(PayoffGame),
}

impl GameSpec {
    pub fn resolve(&self) -> Result<PayoffGame> {
        match self {
            GameSpec::Builtin(key) => builtin::game(key),
            GameSpec::Inline(g) => Ok(g.clone()),
        }
    }
}

/// How a player's prior means are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Fixed(Vec<f64>),
    /// Prior `N(0, 1)` on every action: all prior means zero.
    StandardNormal,
    /// Means drawn i.i.d. `N(0, 1)` per path.
    RandomStandardNormal,
    /// Means drawn i.i.d. uniform on `[lo, hi)` per path.
    RandomUniform { lo: f64, hi: f64 },
}

impl PriorSpec {
    pub fn is_random(&self) -> bool {
        matches!(self, PriorSpec::RandomStandardNormal | PriorSpec::RandomUniform { .. })
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace(' ', "");
        match t.as_str() {
            "standard_normal" | "zero" => return Ok(PriorSpec::StandardNormal),
            "random_standard_normal" => return Ok(PriorSpec::RandomStandardNormal),
            _ => {}
        }
        if let Some(args) = t.strip_prefix("random_uniform(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<&str> = args.split(',').collect();
            let bad = || Error::Config(format!("cannot parse prior '{s}'"));
            if parts.len() != 2 {
                return Err(bad());
            }
            let lo: f64 = parts[0].parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].parse().map_err(|_| bad())?;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("uniform prior needs finite lo < hi, got ({lo}, {hi})")));
            }
            return Ok(PriorSpec::RandomUniform { lo, hi });
        }
        let values: std::result::Result<Vec<f64>, _> = t.split(',').map(str::parse::<f64>).collect();
        match values {
            Ok(v) if !v.is_empty() => Ok(PriorSpec::Fixed(v)),
            _ => Err(Error::Config(format!("cannot parse prior '{s}'"))),
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            PriorSpec::StandardNormal => write!(f, "standard_normal"),
            PriorSpec::RandomStandardNormal => write!(f, "random_standard_normal"),
            PriorSpec::RandomUniform { lo, hi } => write!(f, "random_uniform({lo},{hi})"),
        }
    }
}

/// Rounds at which a path is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordSchedule {
    /// Roughly `points` geometrically spaced rounds from 1 to the horizon.
    Log { points: usize },
    /// Round 1, every multiple of `k`, and the horizon.
    Every(u64),
}

impl Default for RecordSchedule {
    fn default() -> Self {
        RecordSchedule::Log { points: DEFAULT_LOG_POINTS }
    }
}

impl RecordSchedule {
    /// Strictly increasing rounds in `1..=horizon`, always including both ends.
    pub fn rounds(&self, horizon: u64) -> Vec<u64> {
        let mut out = Vec::new();
        match *self {
            RecordSchedule::Log { points } => {
                // Smallest ratio whose grid fits in `points` entries.
                let (mut lo, mut hi) = (1.0f64, (horizon as f64).max(2.0));
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if geometric_grid(mid, horizon).len() > points.max(2) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out = geometric_grid(hi, horizon);
            }
            RecordSchedule::Every(k) => {
                out.push(1);
                out.extend((1..=horizon / k).map(|m| m * k).filter(|&r| r > 1));
            }
        }
        if out.last() != Some(&horizon) {
            out.push(horizon);
        }
        out
    }
}

/// `1, r₁, r₂, …` with `r_{k+1} = max(r_k + 1, round(r_k · ratio))`, capped at
/// `horizon`.
fn geometric_grid(ratio: f64, horizon: u64) -> Vec<u64> {
    let mut out = vec![1];
    let mut r = 1u64;
    while r < horizon {
        r = ((r as f64 * ratio).round() as u64).max(r + 1).min(horizon);
        out.push(r);
    }
    out
}

impl FromStr for RecordSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let bad = || Error::Config(format!("record schedule must be 'log', 'log:<points>' or 'every:<k>', got '{s}'"));
        if t == "log" {
            return Ok(RecordSchedule::default());
        }
        let (kind, arg) = if let Some(inner) = t.strip_suffix(')') {
            inner.split_once('(').ok_or_else(bad)?
        } else {
            t.split_once(':').ok_or_else(bad)?
        };
        match kind {
            "every" => match arg.parse::<u64>() {
                Ok(k) if k >= 1 => Ok(RecordSchedule::Every(k)),
                _ => Err(bad()),
            },
            "log" => match arg.parse::<usize>() {
                Ok(p) if p >= 2 => Ok(RecordSchedule::Log { points: p }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for RecordSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordSchedule::Log { points } if *points == DEFAULT_LOG_POINTS => write!(f, "log"),
            RecordSchedule::Log { points } => write!(f, "log:{points}"),
            RecordSchedule::Every(k) => write!(f, "every:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub game: GameSpec,
    /// `None` uses the builtin game's reference priors.
    pub prior_p1: Option<PriorSpec>,
    pub prior_p2: Option<PriorSpec>,
    pub horizon: u64,
    pub paths: u64,
    pub base_seed: u64,
    pub record: RecordSchedule,
    pub record_beliefs: bool,
    /// Worker threads for ensembles; `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl SimulationConfig {
    pub fn builtin(key: &str) -> Result<Self> {
        builtin::game(key)?;
        Ok(Self {
            game: GameSpec::Builtin(key.to_ascii_lowercase()),
            prior_p1: None,
            prior_p2: None,
            horizon: DEFAULT_HORIZON,
            paths: 1,
            base_seed: 0,
            record: RecordSchedule::default(),
            record_beliefs: false,
            threads: None,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.into_config()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn game_label(&self) -> String {
        match &self.game {
            GameSpec::Builtin(k) => k.clone(),
            GameSpec::Inline(g) => format!("inline {}x{}", g.n_rows(), g.n_cols()),
        }
    }

    /// Prior specs with builtin defaults filled in.
    pub fn resolved_priors(&self) -> Result<(PriorSpec, PriorSpec)> {
        let defaults = match &self.game {
            GameSpec::Builtin(key) => Some(match builtin::priors(key)? {
                BuiltinPriors::Fixed(a, b) => (PriorSpec::Fixed(a), PriorSpec::Fixed(b)),
                BuiltinPriors::StandardNormal => (PriorSpec::StandardNormal, PriorSpec::StandardNormal),
            }),
            GameSpec::Inline(_) => None,
        };
        let pick = |given: &Option<PriorSpec>, default: Option<PriorSpec>, who: &str| {
            given.clone().or(default).ok_or_else(|| Error::Config(format!("prior_means_{who} is required for an inline game")))
        };
        Ok((
            pick(&self.prior_p1, defaults.as_ref().map(|d| d.0.clone()), "p1")?,
            pick(&self.prior_p2, defaults.map(|d| d.1), "p2")?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.paths < 1 {
            return Err(Error::Config("paths must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let game = self.game.resolve()?;
        let (p1, p2) = self.resolved_priors()?;
        for (spec, len, who) in [(&p1, game.n_rows(), "p1"), (&p2, game.n_cols(), "p2")] {
            if let PriorSpec::Fixed(v) = spec {
                if v.len() != len {
                    return Err(Error::Config(format!(
                        "prior_means_{who} has {} entries but the player has {len} actions",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!("prior_means_{who} has a non-finite entry")));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(key) = &o.game {
            builtin::game(key)?;
            self.game = GameSpec::Builtin(key.to_ascii_lowercase());
        }
        if let Some(p) = &o.prior_p1 {
            self.prior_p1 = Some(p.parse()?);
        }
        if let Some(p) = &o.prior_p2 {
            self.prior_p2 = Some(p.parse()?);
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
        if let Some(p) = o.paths {
            self.paths = p;
        }
        if let Some(s) = o.seed {
            self.base_seed = s;
        }
        if let Some(r) = &o.record {
            self.record = r.parse()?;
        }
        if o.record_beliefs {
            self.record_beliefs = true;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        Ok(())
    }

    /// Config file (if any) with overrides applied on top, validated.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match (file, &overrides.game) {
            (Some(path), _) => Self::from_file(path)?,
            (None, Some(key)) => Self::builtin(key)?,
            (None, None) => return Err(Error::Config("either --game or --config is required".into())),
        };
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub game: Option<String>,
    pub prior_p1: Option<String>,
    pub prior_p2: Option<String>,
    pub horizon: Option<u64>,
    pub paths: Option<u64>,
    pub seed: Option<u64>,
    pub record: Option<String>,
    pub record_beliefs: bool,
    pub threads: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    game: Option<RawGame>,
    prior_means_p1: Option<RawPrior>,
    prior_means_p2: Option<RawPrior>,
    horizon: Option<u64>,
    paths: Option<u64>,
    seed: Option<u64>,
    record: Option<String>,
    record_beliefs: Option<bool>,
    threads: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawGame {
    Key(String),
    Inline { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, reward_model: Option<String> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawPrior {
    Values(Vec<f64>),
    Named(String),
}

impl RawPrior {
    fn into_spec(self) -> Result<PriorSpec> {
        match self {
            RawPrior::Values(v) => Ok(PriorSpec::Fixed(v)),
            RawPrior::Named(s) => s.parse(),
        }
    }
}

fn parse_reward_model(s: &str) -> Result<RewardModel> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" | "gaussian_unit_variance" | "normal" => Ok(RewardModel::GaussianUnitVariance),
        "bernoulli" => Ok(RewardModel::Bernoulli),
        other => Err(Error::Config(format!("unknown reward model '{other}'"))),
    }
}

impl RawConfig {
    fn into_config(self) -> Result<SimulationConfig> {
        let game = match self.game {
            None => return Err(Error::Config("missing 'game'".into())),
            Some(RawGame::Key(k)) => {
                builtin::game(&k)?;
                GameSpec::Builtin(k.to_ascii_lowercase())
            }
            Some(RawGame::Inline { a, b, reward_model }) => {
                let model = reward_model.as_deref().map(parse_reward_model).transpose()?.unwrap_or_default();
                GameSpec::Inline(PayoffGame::from_rows(&a, &b, model)?)
            }
        };
        Ok(SimulationConfig {
            game,
            prior_p1: self.prior_means_p1.map(RawPrior::into_spec).transpose()?,
            prior_p2: self.prior_means_p2.map(RawPrior::into_spec).transpose()?,
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            paths: self.paths.unwrap_or(1),
            base_seed: self.seed.unwrap_or(0),
            record: self.record.as_deref().map(str::parse).transpose()?.unwrap_or_default(),
            record_beliefs: self.record_beliefs.unwrap_or(false),
            threads: self.threads,
        })
    }
}
