use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anytime_cmdp::approx::{build_approx, make_config, Mode};
use anytime_cmdp::augment::build_augmented;
use anytime_cmdp::instances::{self, RandomOptions};
use anytime_cmdp::learn::{learn_policy, LearnerConfig, ProtocolEnv};
use anytime_cmdp::layered::LayeredMdp;
use anytime_cmdp::rational::{self, Rational};
use anytime_cmdp::simulate::monte_carlo_value;
use anytime_cmdp::solve::backward_induction;
use anytime_cmdp::verify::{self, Mutation};
use anytime_cmdp::{AugmentedPolicy, BuildLimits, CmdpSpec, Error, ProjectionConfig};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_RESOURCE: u8 = 4;
const EXIT_INTERNAL: u8 = 5;
const EXIT_PARSE: u8 = 6;

const SOLVE_HEADER: &str =
    "instance,mode,epsilon,value_rational,value_decimal,diversity,layer_entries,steps,runtime_ms,status";
const BENCH_HEADER: &str =
    "family,H,trial,seed,budget,mode,epsilon,value_rational,value_decimal,runtime_ms,grid_count,violations";
const SIMULATE_HEADER: &str = "instance,mode,epsilon,episodes,seed,mean,std_error,violations,bound_violations";
const LEARN_HEADER: &str = "episode,return,max_prefix_cost,violation";

#[derive(Parser)]
#[command(name = "anytime", version, about = "Plan, simulate and learn in anytime-constrained MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance to a JSON file.
    Generate(GenerateArgs),
    /// Solve an instance exactly or approximately and append a CSV summary row.
    Solve(SolveArgs),
    /// Run the seeded hard-family experiment grid.
    Bench(BenchArgs),
    /// Monte Carlo evaluation of a saved policy.
    Simulate(SimulateArgs),
    /// Cross-check the solver against the brute-force oracles.
    Verify(VerifyArgs),
    /// Learn a policy through the interaction protocol.
    Learn(LearnArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Hard,
    Knapsack,
    Partition,
    Gap,
    Random,
    Tiny,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long = "H", default_value_t = 10)]
    horizon: usize,
    #[arg(long, default_value = "1")]
    budget: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Denominator used to quantize uniform draws in the hard family.
    #[arg(long, default_value_t = instances::DEFAULT_QUANTUM)]
    quantum: i64,
    /// Comma-separated item values (knapsack).
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated item weights (knapsack) or items (partition).
    #[arg(long)]
    weights: Option<String>,
    /// Step whose cost the adaptive policy observes (gap family).
    #[arg(long, default_value_t = 1)]
    step: usize,
    /// Reward on the risky action (gap family).
    #[arg(long, default_value = "1")]
    reward: String,
    #[arg(long, default_value_t = 2)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "exact")]
    mode: String,
    #[arg(long)]
    epsilon: Option<String>,
    /// CSV file to append to; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write the optimal policy as JSON.
    #[arg(long)]
    emit_policy: Option<PathBuf>,
    #[arg(long, default_value_t = BuildLimits::default().max_layer_entries)]
    max_layer_entries: usize,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "hard")]
    family: BenchFamily,
    /// Horizons, as a comma list or `start..end:step` (inclusive).
    #[arg(long = "H-list", default_value = "10..50:10")]
    h_list: String,
    /// Comma-separated budgets.
    #[arg(long, default_value = "0.1,10")]
    budget: String,
    /// Comma-separated accuracies.
    #[arg(long, default_value = "0.1")]
    epsilon: String,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "relative,feasible-relative")]
    modes: String,
    #[arg(long, default_value_t = instances::DEFAULT_QUANTUM)]
    quantum: i64,
    /// Monte Carlo episodes per row for the violation count against the original budget.
    #[arg(long, default_value_t = 100)]
    episodes: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value_t = BuildLimits::default().max_layer_entries)]
    max_layer_entries: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFamily {
    Hard,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 1000)]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mode the policy was solved under.
    #[arg(long, default_value = "exact")]
    mode: String,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print every step of the first episode.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Tiny,
    Lemmas,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "tiny")]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    count: u64,
    #[arg(long, hide = true)]
    mutate: bool,
}

#[derive(clap::Args)]
struct LearnArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "exact")]
    mode: String,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    episodes: u64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    bonus_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Episode log CSV; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    emit_policy: Option<PathBuf>,
}

/// Failure carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse(_) => EXIT_PARSE,
            Error::Validation(_) => EXIT_VALIDATION,
            Error::Resource(_) => EXIT_RESOURCE,
            Error::Config(_) | Error::Protocol(_) | Error::Io(_) => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type CliResult<T> = Result<T, Failure>;

fn parse_rational(text: &str, what: &str) -> CliResult<Rational> {
    rational::parse(text).ok_or_else(|| usage(format!("{what}: cannot parse {text:?} as a number")))
}

fn parse_list<T>(text: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(s).ok_or_else(|| usage(format!("{what}: cannot parse {s:?}"))))
        .collect()
}

fn parse_horizons(text: &str) -> CliResult<Vec<usize>> {
    if let Some((range, step)) = text.split_once(':') {
        let (lo, hi) = range.split_once("..").ok_or_else(|| usage(format!("H-list: malformed range {text:?}")))?;
        let bad = || usage(format!("H-list: malformed range {text:?}"));
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        let step: usize = step.trim().parse().map_err(|_| bad())?;
        if step == 0 || lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    parse_list(text, "H-list", |s| s.parse().ok())
}

fn instance_id(spec: &CmdpSpec, path: &Path) -> String {
    spec.name.clone().unwrap_or_else(|| {
        path.file_stem().map_or_else(|| "instance".into(), |s| s.to_string_lossy().into_owned())
    })
}

fn projection(spec: &CmdpSpec, mode: &str, epsilon: Option<&str>) -> CliResult<(Mode, Option<ProjectionConfig>)> {
    let mode: Mode = mode.parse()?;
    if mode == Mode::Exact {
        return Ok((mode, None));
    }
    let eps = epsilon.ok_or_else(|| usage(format!("--epsilon is required for mode {mode}")))?;
    let eps = parse_rational(eps, "epsilon")?;
    Ok((mode, Some(make_config(spec, mode, &eps)?)))
}

fn build(spec: &CmdpSpec, cfg: Option<&ProjectionConfig>, limits: &BuildLimits) -> anytime_cmdp::Result<LayeredMdp> {
    match cfg {
        Some(cfg) => build_approx(spec, cfg, limits),
        None => build_augmented(spec, limits),
    }
}

fn show_value(v: Option<&Rational>) -> (String, String) {
    match v {
        Some(v) => (v.to_string(), rational::to_decimal(v, 6)),
        None => ("Infeasible".into(), "NaN".into()),
    }
}

/// Sink for CSV rows: a file (header written once) or stdout.
fn open_csv(out: Option<&Path>, header: &str, append: bool) -> CliResult<Box<dyn Write>> {
    match out {
        Some(path) => {
            let fresh = !append || std::fs::metadata(path).map_or(true, |m| m.len() == 0);
            let mut file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(path)?;
            if fresh {
                writeln!(file, "{header}")?;
            }
            Ok(Box::new(file))
        }
        None => {
            let mut stdout = std::io::stdout();
            writeln!(stdout, "{header}")?;
            Ok(Box::new(stdout))
        }
    }
}

fn generate(args: GenerateArgs) -> CliResult<()> {
    let budget = parse_rational(&args.budget, "budget")?;
    let ints = |text: &Option<String>, what: &str| -> CliResult<Vec<i64>> {
        let text = text.as_deref().ok_or_else(|| usage(format!("--{what} is required for this family")))?;
        parse_list(text, what, |s| s.parse().ok())
    };
    let integral_budget = || -> CliResult<i64> {
        if !budget.is_integer() {
            return Err(usage("knapsack budget must be an integer"));
        }
        rational::to_i64_pair(&budget).map(|(n, _)| n).ok_or_else(|| usage("budget out of range"))
    };
    let spec = match args.family {
        Family::Hard => instances::gen_hard_family(args.horizon, &budget, args.seed, args.quantum)?,
        Family::Knapsack => instances::gen_knapsack(&ints(&args.values, "values")?, &ints(&args.weights, "weights")?, integral_budget()?)?,
        Family::Partition => instances::gen_partition(&ints(&args.weights, "weights")?)?,
        Family::Gap => {
            let reward = parse_rational(&args.reward, "reward")?;
            instances::gen_markovian_gap(args.horizon, args.step, &reward, &budget)?
        }
        Family::Random => {
            let opts = RandomOptions {
                num_states: args.states,
                num_actions: args.actions,
                horizon: args.horizon,
                ..Default::default()
            };
            instances::gen_random(&opts, args.seed)?
        }
        Family::Tiny => instances::gen_tiny(args.seed)?,
    };
    instances::write_instance(&spec, &args.out)?;
    Ok(())
}

fn solve(args: SolveArgs) -> CliResult<()> {
    let spec = instances::read_instance(&args.instance)?;
    let (mode, cfg) = projection(&spec, &args.mode, args.epsilon.as_deref())?;
    let limits = BuildLimits { max_layer_entries: args.max_layer_entries };
    let start = Instant::now();
    let mdp = build(&spec, cfg.as_ref(), &limits)?;
    let solution = backward_induction(&mdp);
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let breaches = solution.policy().check_admissible(&mdp);
    if !breaches.is_empty() {
        return Err(Failure { code: EXIT_INTERNAL, message: format!("policy admissibility breach: {}", breaches.join("; ")) });
    }
    let (value, decimal) = show_value(solution.optimal_value());
    let status = if solution.is_feasible() { "feasible" } else { "Infeasible" };
    let eps = cfg.as_ref().map_or_else(String::new, |c| c.epsilon().to_string());
    let mut sink = open_csv(args.out.as_deref(), SOLVE_HEADER, true)?;
    writeln!(
        sink,
        "{},{},{},{},{},{},{},{},{:.3},{}",
        instance_id(&spec, &args.instance),
        mode,
        eps,
        value,
        decimal,
        mdp.diversity(),
        mdp.stats().layer_sizes.iter().sum::<usize>(),
        mdp.stats().steps + solution.steps(),
        runtime_ms,
        status
    )?;
    if let Some(path) = &args.emit_policy {
        solution.policy().write(path)?;
    }
    if solution.is_feasible() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_INFEASIBLE, message: "instance is infeasible".into() })
    }
}

struct BenchTask {
    horizon: usize,
    trial: u64,
    budget: Rational,
    mode: Mode,
    epsilon: Rational,
}

fn bench_row(args: &BenchArgs, task: &BenchTask, limits: &BuildLimits) -> (String, bool) {
    let seed = args.seed + task.trial;
    let prefix = format!("hard,{},{},{},{},{},{}", task.horizon, task.trial, seed, task.budget, task.mode, task.epsilon);
    let outcome = (|| -> anytime_cmdp::Result<String> {
        let spec = instances::gen_hard_family(task.horizon, &task.budget, seed, args.quantum)?;
        let cfg = match task.mode {
            Mode::Exact => None,
            m => Some(make_config(&spec, m, &task.epsilon)?),
        };
        let start = Instant::now();
        let mdp = build(&spec, cfg.as_ref(), limits)?;
        let solution = backward_induction(&mdp);
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        let grid = mdp.stats().distinct_keys.iter().copied().max().unwrap_or(0);
        let violations = if solution.is_feasible() && args.episodes > 0 {
            monte_carlo_value(&spec, solution.policy(), cfg.as_ref(), args.episodes, seed)?.violations.to_string()
        } else {
            String::new()
        };
        let (value, decimal) = show_value(solution.optimal_value());
        Ok(format!("{value},{decimal},{runtime_ms:.3},{grid},{violations}"))
    })();
    match outcome {
        Ok(rest) => (format!("{prefix},{rest}"), true),
        Err(e) => {
            eprintln!("H={} trial={} mode={}: {e}", task.horizon, task.trial, task.mode);
            (format!("{prefix},error,NaN,,,"), false)
        }
    }
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let horizons = parse_horizons(&args.h_list)?;
    let budgets = parse_list(&args.budget, "budget", rational::parse)?;
    let epsilons = parse_list(&args.epsilon, "epsilon", rational::parse)?;
    let modes = parse_list(&args.modes, "modes", |s| s.parse::<Mode>().ok())?;
    if horizons.is_empty() || budgets.is_empty() || epsilons.is_empty() || modes.is_empty() || args.trials == 0 {
        return Err(usage("bench needs at least one horizon, budget, epsilon, mode and trial"));
    }
    let mut tasks = Vec::new();
    for budget in &budgets {
        for &horizon in &horizons {
            for trial in 0..args.trials {
                for &mode in &modes {
                    let eps_list: &[Rational] = if mode == Mode::Exact { &epsilons[..1] } else { &epsilons };
                    for eps in eps_list {
                        let epsilon = if mode == Mode::Exact { rational::zero() } else { eps.clone() };
                        tasks.push(BenchTask { horizon, trial, budget: budget.clone(), mode, epsilon });
                    }
                }
            }
        }
    }
    let limits = BuildLimits { max_layer_entries: args.max_layer_entries };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    let rows: Vec<(String, bool)> = pool.install(|| tasks.par_iter().map(|t| bench_row(&args, t, &limits)).collect());
    let mut sink = open_csv(args.out.as_deref(), BENCH_HEADER, false)?;
    for (row, _) in &rows {
        writeln!(sink, "{row}")?;
    }
    let failed = rows.iter().filter(|(_, ok)| !ok).count();
    if failed > 0 {
        return Err(Failure { code: EXIT_RESOURCE, message: format!("{failed} bench rows failed") });
    }
    Ok(())
}

fn check_policy_shape(spec: &CmdpSpec, policy: &AugmentedPolicy) -> CliResult<()> {
    for (h, s, key, a) in policy.entries() {
        if s >= spec.num_states() || a >= spec.num_actions() || key.len() != spec.dim() {
            return Err(usage(format!(
                "policy does not match instance: entry (h={h}, s={s}, key={:?}, a={a}) is out of range",
                key.as_slice()
            )));
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let spec = instances::read_instance(&args.instance)?;
    let policy = AugmentedPolicy::read(&args.policy, spec.horizon())?;
    check_policy_shape(&spec, &policy)?;
    let (mode, cfg) = projection(&spec, &args.mode, args.epsilon.as_deref())?;
    if args.trace {
        let traj = anytime_cmdp::simulate::rollout(&spec, &policy, cfg.as_ref(), args.seed, 0)?;
        eprint!("{}", traj.dump());
    }
    let summary = monte_carlo_value(&spec, &policy, cfg.as_ref(), args.episodes, args.seed)?;
    let eps = cfg.as_ref().map_or_else(String::new, |c| c.epsilon().to_string());
    let mut sink = open_csv(args.out.as_deref(), SIMULATE_HEADER, true)?;
    writeln!(
        sink,
        "{},{},{},{},{},{:.6},{:.6},{},{}",
        instance_id(&spec, &args.instance),
        mode,
        eps,
        summary.episodes,
        args.seed,
        summary.mean,
        summary.std_error,
        summary.violations,
        summary.bound_violations
    )?;
    Ok(())
}

fn run_verify(args: VerifyArgs) -> CliResult<()> {
    let report = match args.suite {
        Suite::Tiny => {
            let mutation = if args.mutate { Mutation::PerturbValue } else { Mutation::None };
            verify::run_tiny_suite(args.seed, args.count, mutation)
        }
        Suite::Lemmas => verify::run_lemmas_suite(args.seed, args.count),
    };
    let failures: Vec<_> = report.failures().collect();
    for f in &failures {
        eprintln!("FAIL {} seed {}: {}", f.check, f.seed, f.failure.as_deref().unwrap_or_default());
    }
    println!("{} checks, {} failures", report.outcomes.len(), failures.len());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_INTERNAL, message: format!("{} checks failed", failures.len()) })
    }
}

fn learn(args: LearnArgs) -> CliResult<()> {
    let spec = instances::read_instance(&args.instance)?;
    let (_, cfg) = projection(&spec, &args.mode, args.epsilon.as_deref())?;
    let mut env = ProtocolEnv::new(spec, cfg, args.seed)?;
    let config = LearnerConfig {
        episodes: args.episodes,
        delta: args.delta,
        gamma: args.gamma,
        bonus_scale: args.bonus_scale,
        seed: args.seed,
    };
    let outcome = learn_policy(&mut env, &config)?;
    let mut sink = open_csv(args.out.as_deref(), LEARN_HEADER, false)?;
    for r in &outcome.log {
        let prefix: Vec<String> = r.max_prefix.iter().map(|c| format!("{c}")).collect();
        writeln!(sink, "{},{},{},{}", r.episode, r.ret, prefix.join(";"), u8::from(r.violation))?;
    }
    eprintln!("estimated value {:.6} after {} episodes", outcome.estimated_value, outcome.log.len());
    if let Some(path) = &args.emit_policy {
        outcome.policy.write(path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => run_verify(a),
        Command::Learn(a) => learn(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
