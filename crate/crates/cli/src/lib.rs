//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use treecast_core::adversary::{
    attack_bruteforce, attack_greedy, attack_signpush, sample_mask, Attack, Objective,
};
use treecast_core::broadcast::{sample_model_n, sample_tree, BroadcastParams};
use treecast_core::coupling::{couple_once, fraction_adversary_from, CouplingParams};
use treecast_core::inference::bp_root;
use treecast_core::{LeafChannel, Spin, SpinVector, TreeShape};
use treecast_harness::config::{apply_overrides, read_config_file, ExperimentConfig};
use treecast_harness::output::Report;
use treecast_harness::{run_experiment, HarnessError, RunOptions, Status};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "treecast", version, about = "Broadcast-on-trees inference, attacks and experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a broadcast tree and print its root and leaves.
    Simulate(SimulateArgs),
    /// Print the BP root bias for given leaves.
    Infer(InferArgs),
    /// Attack given or sampled leaves and report the damage.
    Attack(AttackArgs),
    /// Run the marking coupling once.
    Couple(CoupleArgs),
    /// Run an experiment from a config file.
    Experiment(ExperimentArgs),
    /// Quick correctness gate: oracle equivalence, inequality grids, coupling law.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[arg(long)]
    pub b: usize,
    #[arg(long)]
    pub t: usize,
    #[arg(long)]
    pub epsilon: f64,
}

impl TreeArgs {
    fn shape(&self) -> Result<TreeShape, CliError> {
        Ok(TreeShape::new(self.b, self.t)?)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Root spin, `+` or `-`; uniform when absent.
    #[arg(long)]
    pub root: Option<char>,
    /// Leaf channel fidelity; below 1 the leaves are passed through noise.
    #[arg(long, default_value_t = 1.0)]
    pub psi: f64,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Leaf spins as `+`/`-` characters.
    #[arg(long)]
    pub leaves: String,
    #[arg(long, default_value_t = 1.0)]
    pub psi: f64,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long)]
    pub leaves: String,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// signpush, greedy or bruteforce.
    #[arg(long, default_value = "signpush")]
    pub strategy: String,
    /// Spin pushed toward by signpush.
    #[arg(long, default_value_t = '-')]
    pub target: char,
}

#[derive(Debug, Args)]
pub struct CoupleArgs {
    #[arg(long)]
    pub b: usize,
    #[arg(long)]
    pub t: usize,
    /// Coupling half-bias in [0, 1/2); leaves are broadcast with copy bias twice this.
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input leaves; sampled under a `+` root when absent.
    #[arg(long)]
    pub leaves: Option<String>,
    /// Fraction budget applied to the coupled output.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Flat `key = value` config, or a JSON sidecar from an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory for `<experiment>.csv` when the config has no output.path.
    #[arg(long, default_value = "results")]
    pub out_dir: PathBuf,
    #[arg(long, env = "TREECAST_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit 1 when any check fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, env = "TREECAST_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Harness(HarnessError),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Harness(e)
    }
}

impl From<treecast_core::Error> for CliError {
    fn from(e: treecast_core::Error) -> Self {
        CliError::Harness(e.into())
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Harness(e) if e.is_config() => EXIT_USAGE,
            CliError::Harness(HarnessError::Core(_)) => EXIT_USAGE,
            CliError::Harness(_) => EXIT_RUNTIME,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Harness(e) => write!(f, "{e}"),
        }
    }
}

fn spin_arg(c: char) -> Result<Spin, CliError> {
    Spin::from_char(c).ok_or_else(|| CliError::Usage(format!("spin must be `+` or `-`, got {c:?}")))
}

fn leaves_arg(s: &str, shape: &TreeShape) -> Result<SpinVector, CliError> {
    let v: SpinVector = s
        .parse()
        .map_err(|e: treecast_core::Error| CliError::Usage(format!("--leaves: {e}")))?;
    if v.len() != shape.leaf_count() {
        return Err(CliError::Usage(format!(
            "--leaves has {} spins, the tree has {} leaves",
            v.len(),
            shape.leaf_count()
        )));
    }
    Ok(v)
}

/// Parses `argv` (program name first), runs the command, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let io = |e: std::io::Error| CliError::Harness(HarnessError::Runtime(format!("writing output: {e}")));
    match cmd {
        Command::Simulate(a) => {
            let shape = a.tree.shape()?;
            let params = BroadcastParams::new(shape, a.tree.epsilon, a.seed)?;
            let (root, leaves) = if a.psi < 1.0 {
                if a.root.is_some() {
                    return Err(CliError::Usage("--root cannot be combined with --psi below 1".into()));
                }
                sample_model_n(&params, a.psi)?
            } else {
                let root = a.root.map(spin_arg).transpose()?;
                let tree = sample_tree(&params, root);
                (tree.root(), tree.leaves())
            };
            writeln!(out, "root {root}").map_err(io)?;
            writeln!(out, "leaves {leaves}").map_err(io)?;
        }
        Command::Infer(a) => {
            let shape = a.tree.shape()?;
            let leaves = leaves_arg(&a.leaves, &shape)?;
            let belief = bp_root(&shape, &leaves, a.tree.epsilon, LeafChannel::new(a.psi)?)?;
            writeln!(out, "{}", belief.bias()).map_err(io)?;
        }
        Command::Attack(a) => {
            let shape = a.tree.shape()?;
            let leaves = leaves_arg(&a.leaves, &shape)?;
            let eps = a.tree.epsilon;
            let mask = sample_mask(a.rho, shape.leaf_count(), a.seed)?;
            let ch = LeafChannel::CLEAN;
            let attack: Attack = match a.strategy.as_str() {
                "signpush" => attack_signpush(&leaves, &mask, spin_arg(a.target)?),
                "greedy" => attack_greedy(&shape, &leaves, &mask, eps, ch, Objective::Damage, shape.leaf_count())?.0,
                "bruteforce" => attack_bruteforce(&shape, &leaves, &mask, eps, ch, Objective::Damage)?.0,
                other => return Err(CliError::Usage(format!("--strategy {other:?} is not one of signpush, greedy, bruteforce"))),
            };
            let x = bp_root(&shape, &leaves, eps, ch)?;
            let z = bp_root(&shape, &attack.leaves, eps, ch)?;
            writeln!(out, "permitted {}", mask.popcount()).map_err(io)?;
            writeln!(out, "flipped {:?}", attack.flipped).map_err(io)?;
            writeln!(out, "attacked {}", attack.leaves).map_err(io)?;
            writeln!(out, "clean_bias {}", x.bias()).map_err(io)?;
            writeln!(out, "attacked_bias {}", z.bias() + 0.0).map_err(io)?;
            writeln!(out, "tv {}", treecast_core::inference::tv_from_biases(x, z)).map_err(io)?;
        }
        Command::Couple(a) => {
            let shape = TreeShape::new(a.b, a.t)?;
            let params = CouplingParams::new(shape, a.epsilon, a.seed)?;
            let x = match &a.leaves {
                Some(s) => leaves_arg(s, &shape)?,
                None => {
                    let bp = BroadcastParams::new(shape, params.broadcast_epsilon(), a.seed)?;
                    sample_tree(&bp, Some(Spin::Plus)).leaves()
                }
            };
            let outcome = couple_once(&params, &x)?;
            outcome
                .check(&shape)
                .map_err(|m| CliError::Harness(HarnessError::Runtime(m)))?;
            let f = fraction_adversary_from(&outcome, a.rho)?;
            writeln!(out, "xi {}", params.xi()).map_err(io)?;
            writeln!(out, "input {x}").map_err(io)?;
            writeln!(out, "coupled {}", outcome.output).map_err(io)?;
            writeln!(out, "flipped {:?}", outcome.flipped).map_err(io)?;
            writeln!(out, "within_budget {} (limit {})", f.coupled, f.limit).map_err(io)?;
            writeln!(out, "output {}", f.leaves).map_err(io)?;
        }
        Command::Experiment(a) => {
            let mut map = read_config_file(&a.config)?;
            let mut overrides = a.overrides.clone();
            if let Some(seed) = a.seed {
                overrides.push(format!("run.seed={seed}"));
            }
            apply_overrides(&mut map, &overrides)?;
            let cfg = ExperimentConfig::from_map(map)?;
            let report = run_experiment(&cfg, &RunOptions { workers: a.workers })?;
            let path = cfg
                .output
                .as_ref()
                .map(PathBuf::from)
                .unwrap_or_else(|| a.out_dir.join(format!("{}.csv", cfg.id)));
            let side = report.write(&path, &cfg)?;
            print_checks(out, &report).map_err(io)?;
            writeln!(out, "wrote {} and {}", path.display(), side.display()).map_err(io)?;
            if a.strict && report.status() == Status::Fail {
                return Ok(EXIT_RUNTIME);
            }
        }
        Command::Verify(a) => {
            let mut failed = false;
            for text in verify_configs(a.seed) {
                let cfg = ExperimentConfig::parse(&text)?;
                let report = run_experiment(&cfg, &RunOptions { workers: a.workers })?;
                writeln!(out, "[{}]", cfg.id).map_err(io)?;
                print_checks(out, &report).map_err(io)?;
                failed |= report.status() == Status::Fail;
            }
            writeln!(out, "verify: {}", if failed { "FAILED" } else { "ok" }).map_err(io)?;
            return Ok(if failed { EXIT_RUNTIME } else { EXIT_OK });
        }
    }
    Ok(EXIT_OK)
}

fn print_checks(out: &mut dyn Write, report: &Report) -> std::io::Result<()> {
    for c in &report.checks {
        writeln!(out, "{:<12} {}: {}", c.status.to_string().to_uppercase(), c.name, c.detail)?;
    }
    Ok(())
}

/// Configs run by `verify`.
pub fn verify_configs(seed: u64) -> Vec<String> {
    vec![
        format!("experiment.id = bp_exactness\nmodel.psi = random\nrun.trials = 500\nrun.seed = {seed}\n"),
        format!("experiment.id = inequality_grid\nrun.trials = 2000\nrun.population = 20000\nrun.seed = {seed}\n"),
        format!(
            "experiment.id = lowerbound_tv\nrun.mode = exact\ntree.arity = 2\ntree.depth = 2\n\
             coupling.epsilon = 0.25\nadversary.rho = 1\nrun.trials = 50000\nrun.seed = {seed}\n"
        ),
    ]
}
