use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsgame::choice::{
    choice_gradients, choice_probabilities_exact, choice_probabilities_mc, slepian_lower_bound, BeliefVector,
    DEFAULT_TOL,
};
use tsgame::diagnostics::{coordinate_name, drift_bound, drift_bound_check};
use tsgame::game::{
    check_no_ties, check_payoff_stability, equilibrium_report, ActionPair, Player, StabilityReport, TieViolation,
};
use tsgame::harness::output::{self, fmt_num};
use tsgame::harness::{run_decomposition, run_ensemble, Experiment, Overrides, SimulationConfig};
use tsgame::{Error, Result};

#[derive(Parser)]
#[command(name = "tsgame", version, about = "Thompson-sampling players in repeated matrix games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibria, tie check and payoff-stability report for a game.
    Analyze(GameArgs),
    /// Simulate one path and write its probability trace as CSV.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// 1-based index of the path to simulate.
        #[arg(long, default_value_t = 1)]
        path: u64,
    },
    /// Simulate many paths, classify each, and write a summary.
    Ensemble(SimArgs),
    /// Inspect choice probabilities for a belief vector.
    Probe(ProbeArgs),
    /// Error decomposition of one path around a pure equilibrium.
    Decompose {
        #[command(flatten)]
        sim: SimArgs,
        /// 1-based index of the path.
        #[arg(long, default_value_t = 1)]
        path: u64,
        /// Equilibrium as `i,j` (1-based); defaults to the first pure equilibrium.
        #[arg(long)]
        ne: Option<String>,
    },
}

#[derive(Args)]
struct GameArgs {
    /// Builtin game: pd, a1b1, a2b2, a3b3 or a4b4.
    #[arg(long)]
    game: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// Builtin game: pd, a1b1, a2b2, a3b3 or a4b4.
    #[arg(long)]
    game: Option<String>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rounds per path.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Player 1 prior means: `a,b,...`, `standard_normal`, `random_standard_normal` or `random_uniform(lo,hi)`.
    #[arg(long)]
    prior_p1: Option<String>,
    #[arg(long)]
    prior_p2: Option<String>,
    /// Output file, or directory for `ensemble` and `decompose`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `log`, `log:<points>` or `every:<k>`.
    #[arg(long)]
    record: Option<String>,
    /// Also record posterior means.
    #[arg(long)]
    record_beliefs: bool,
    #[arg(long)]
    threads: Option<usize>,
}

impl SimArgs {
    fn config(&self) -> Result<SimulationConfig> {
        let overrides = Overrides {
            game: self.game.clone(),
            prior_p1: self.prior_p1.clone(),
            prior_p2: self.prior_p2.clone(),
            horizon: self.horizon,
            paths: self.paths,
            seed: self.seed,
            record: self.record.clone(),
            record_beliefs: self.record_beliefs,
            threads: self.threads,
        };
        SimulationConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct ProbeArgs {
    /// Posterior means, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    means: Vec<f64>,
    /// Posterior variances in (0, 1], comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    variances: Vec<f64>,
    /// Monte Carlo samples (0 skips the Monte Carlo estimate).
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 1-based action whose gradient is reported.
    #[arg(long, default_value_t = 1)]
    action: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(output::create(p)?),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(",")
}

fn stability_lines(w: &mut dyn Write, ne: ActionPair, r: &StabilityReport) -> Result<()> {
    writeln!(w, "payoff_stability{ne} = {}", r.holds)?;
    writeln!(w, "payoff_stability{ne}.worst_margin = {}", fmt_num(r.worst_margin))?;
    for v in &r.violating_pairs {
        let who = match v.player {
            Player::One => "player1",
            Player::Two => "player2",
        };
        writeln!(
            w,
            "payoff_stability{ne}.violation = {who} actions ({},{}) margin {}",
            v.pair.0 + 1,
            v.pair.1 + 1,
            fmt_num(v.margin)
        )?;
    }
    Ok(())
}

fn analyze(args: &GameArgs) -> Result<()> {
    let overrides = Overrides { game: args.game.clone(), ..Default::default() };
    let cfg = SimulationConfig::load(args.config.as_deref(), &overrides)?;
    let game = cfg.game.resolve()?;
    let report = equilibrium_report(&game);
    let mut w = sink(args.out.as_deref())?;
    writeln!(w, "game = {}", cfg.game_label())?;
    writeln!(w, "size = {}x{}", game.n_rows(), game.n_cols())?;
    let ne: Vec<String> = report.pure_ne.iter().map(|p| p.to_string()).collect();
    writeln!(w, "pure_ne = {}", if ne.is_empty() { "none".into() } else { ne.join(" ") })?;
    writeln!(w, "no_ties = {}", report.no_ties_holds)?;
    for v in check_no_ties(&game).1 {
        match v {
            TieViolation::Column { col, first, second } => {
                writeln!(w, "tie = player1 column {} rows ({},{})", col + 1, first + 1, second + 1)?
            }
            TieViolation::Row { row, first, second } => {
                writeln!(w, "tie = player2 row {} columns ({},{})", row + 1, first + 1, second + 1)?
            }
        }
    }
    writeln!(w, "unique_ne_and_no_ties = {}", report.assumption1_holds)?;
    match report.mixed_ne_2x2 {
        Some((p, q)) => writeln!(w, "mixed_ne = ({},{})", fmt_num(p), fmt_num(q))?,
        None if game.n_rows() == 2 && game.n_cols() == 2 => writeln!(w, "mixed_ne = none")?,
        None => {}
    }
    for &pair in &report.pure_ne {
        stability_lines(&mut w, pair, &check_payoff_stability(&game, pair)?)?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(sim: &SimArgs, path: u64) -> Result<()> {
    let cfg = sim.config()?;
    if path < 1 {
        return Err(Error::InvalidArgument("--path is 1-based".into()));
    }
    let trace = Experiment::new(&cfg)?.run_path(path - 1)?;
    output::write_trace_csv(&trace, sink(sim.out.as_deref())?)
}

fn ensemble(sim: &SimArgs) -> Result<()> {
    let cfg = sim.config()?;
    let (summary, traces) = run_ensemble(&cfg)?;
    match &sim.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            output::write_summary(&summary, output::create(&dir.join("summary.txt"))?)?;
            output::write_average_csv(&summary, output::create(&dir.join("average.csv"))?)?;
            output::write_paths_csv(&summary, &traces, output::create(&dir.join("paths.csv"))?)?;
            eprintln!("wrote summary.txt, average.csv and paths.csv to {}", dir.display());
        }
        None => output::write_summary(&summary, io::stdout().lock())?,
    }
    Ok(())
}

fn probe(args: &ProbeArgs) -> Result<()> {
    let belief = BeliefVector::new(args.means.clone(), args.variances.clone())?;
    let exact = choice_probabilities_exact(&belief, args.tol)?;
    let mut w = io::stdout().lock();
    writeln!(w, "exact = {}", list(&exact.probs))?;
    writeln!(w, "sum = {}", fmt_num(exact.probs.iter().sum()))?;
    let slepian: Vec<f64> = (0..belief.len()).map(|i| slepian_lower_bound(&belief, i)).collect::<Result<_>>()?;
    writeln!(w, "slepian_lower_bound = {}", list(&slepian))?;
    if args.samples > 0 {
        let (mc, se) = choice_probabilities_mc(&belief, args.samples, args.seed)?;
        writeln!(w, "monte_carlo = {}", list(&mc.probs))?;
        writeln!(w, "monte_carlo_se = {}", list(&se))?;
    }
    if args.action < 1 || args.action > belief.len() {
        return Err(Error::IndexOutOfRange { index: args.action, len: belief.len() });
    }
    let g = choice_gradients(&belief, args.action - 1)?;
    writeln!(w, "gradient{}.means = {}", args.action, list(&g.d_means))?;
    writeln!(w, "gradient{}.variances = {}", args.action, list(&g.d_variances))?;
    Ok(())
}

fn parse_pair(s: &str) -> Result<ActionPair> {
    let bad = || Error::InvalidArgument(format!("expected 'i,j' with 1-based indices, got '{s}'"));
    let t = s.trim().trim_start_matches('(').trim_end_matches(')');
    let (i, j) = t.split_once(',').ok_or_else(bad)?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    let j: usize = j.trim().parse().map_err(|_| bad())?;
    if i < 1 || j < 1 {
        return Err(bad());
    }
    Ok(ActionPair { row: i - 1, col: j - 1 })
}

fn decompose(sim: &SimArgs, path: u64, ne: Option<&str>) -> Result<()> {
    let cfg = sim.config()?;
    let game = cfg.game.resolve()?;
    let ne = match ne {
        Some(s) => parse_pair(s)?,
        None => *equilibrium_report(&game)
            .pure_ne
            .first()
            .ok_or_else(|| Error::InvalidGame("no pure Nash equilibrium to decompose around".into()))?,
    };
    if path < 1 {
        return Err(Error::InvalidArgument("--path is 1-based".into()));
    }
    let dir = sim.out.clone().unwrap_or_else(|| PathBuf::from("decomposition"));
    std::fs::create_dir_all(&dir)?;
    let decomps = run_decomposition(&cfg, path - 1, ne)?;
    let (n_rows, n_cols) = (game.n_rows(), game.n_cols());
    let mut w = io::stdout().lock();
    writeln!(w, "equilibrium = {ne}")?;
    for d in &decomps {
        let name = coordinate_name(d.coordinate, n_rows, n_cols);
        let bound = drift_bound(&game, ne, d.coordinate).ok();
        let file = dir.join(output::decomposition_file_name(d.coordinate, n_rows, n_cols));
        output::write_decomposition_csv(d, bound, output::create(&file)?)?;
        write!(w, "{name}.max_relative_residual = {:.3e}", d.max_relative_residual())?;
        if bound.is_some() {
            write!(w, "  drift_bound_holds = {}", drift_bound_check(d, &game, ne)?)?;
        }
        writeln!(w)?;
    }
    writeln!(w, "csv_dir = {}", dir.display())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(args) => analyze(args),
        Command::Simulate { sim, path } => simulate(sim, *path),
        Command::Ensemble(sim) => ensemble(sim),
        Command::Probe(args) => probe(args),
        Command::Decompose { sim, path, ne } => decompose(sim, *path, ne.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
