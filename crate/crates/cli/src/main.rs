use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gkpinn_core::diffnet::Activation;
use gkpinn_core::evaluation::L2Norm;
use gkpinn_core::experiment::{resolve_reference, run_experiment, run_matrix, ExperimentConfig, ReferenceKind, ResolvedReference};
use gkpinn_core::fdref::{ConvectionScheme, TimeScheme};
use gkpinn_core::layers::Mode;
use gkpinn_core::training::RbaStyle;
use gkpinn_core::Error;

/// Exit status for invalid flags or configuration.
const EXIT_USAGE: u8 = 2;
/// Exit status when training produced a non-finite loss.
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "gkpinn", version, about = "Physics-informed networks for singularly perturbed problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes history.csv, report.toml and grid.csv.
    Run(RunArgs),
    /// Sweep examples x modes x epsilons; writes summary.csv plus one
    /// directory per run.
    Matrix(MatrixArgs),
    /// Solve a finite-difference reference and write it as a grid CSV.
    Reference(ReferenceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Pinn,
    Gkpinn,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Pinn => Mode::Pinn,
            ModeArg::Gkpinn => Mode::Gkpinn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RefArg {
    Auto,
    Analytic,
    Fd,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Paper,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActArg {
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Squared,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Upwind,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum TimeArg {
    BackwardEuler,
    Bdf2,
}

#[derive(Args, Default)]
struct ProblemArgs {
    /// Built-in example, 1 to 8.
    #[arg(long, conflicts_with = "problem_file")]
    example: Option<usize>,
    /// TOML file describing a custom problem.
    #[arg(long)]
    problem_file: Option<PathBuf>,
}

/// Settings shared by `run` and `matrix`. Flags override `--config`.
#[derive(Args)]
struct Overrides {
    /// TOML configuration file with the same field names as the report's
    /// `[config]` table.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    reference: Option<RefArg>,
    /// Cells per axis of the finite-difference reference.
    #[arg(long)]
    fd_n: Option<usize>,
    #[arg(long, value_enum)]
    rba: Option<OnOff>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long)]
    n_interior: Option<usize>,
    #[arg(long)]
    n_boundary: Option<usize>,
    #[arg(long)]
    n_initial: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    activation: Option<ActArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    eps_hat: Option<f64>,
    #[arg(long)]
    eta_star: Option<f64>,
    #[arg(long)]
    rba_init: Option<f64>,
    #[arg(long, value_enum)]
    rba_style: Option<StyleArg>,
    #[arg(long)]
    history_stride: Option<usize>,
    #[arg(long)]
    eval_stride: Option<usize>,
    #[arg(long)]
    grid_resolution: Option<usize>,
    #[arg(long, value_enum)]
    fd_scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    fd_time_scheme: Option<TimeArg>,
    #[arg(long)]
    fd_omega: Option<f64>,
    #[arg(long)]
    fd_max_iter: Option<usize>,
    #[arg(long)]
    fd_tol: Option<f64>,
    /// Directory for cached finite-difference references.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    settings: Overrides,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    examples: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pinn,gkpinn")]
    modes: Vec<ModeArg>,
    #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-38")]
    epsilons: Vec<f64>,
    #[command(flatten)]
    settings: Overrides,
}

#[derive(Args)]
struct ReferenceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long)]
    fd_n: Option<usize>,
    #[arg(long, value_enum)]
    fd_scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    fd_time_scheme: Option<TimeArg>,
    #[arg(long)]
    fd_omega: Option<f64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_fd(cfg: &mut ExperimentConfig, scheme: Option<SchemeArg>, time: Option<TimeArg>, omega: Option<f64>) {
    let fd = &mut cfg.reference.fd;
    set(
        &mut fd.scheme,
        scheme.map(|s| match s {
            SchemeArg::Upwind => ConvectionScheme::Upwind,
            SchemeArg::Hybrid => ConvectionScheme::Hybrid,
        }),
    );
    set(
        &mut fd.time_scheme,
        time.map(|t| match t {
            TimeArg::BackwardEuler => TimeScheme::BackwardEuler,
            TimeArg::Bdf2 => TimeScheme::Bdf2,
        }),
    );
    set(&mut fd.sor_omega, omega);
}

impl Overrides {
    fn build(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        set(&mut c.mode, self.mode.map(Mode::from));
        set(&mut c.epsilon, self.epsilon);
        set(&mut c.iterations, self.iters);
        set(&mut c.seed, self.seed);
        set(&mut c.out_dir, self.out_dir.clone());
        set(
            &mut c.reference.kind,
            self.reference.map(|r| match r {
                RefArg::Auto => ReferenceKind::Auto,
                RefArg::Analytic => ReferenceKind::Analytic,
                RefArg::Fd => ReferenceKind::Fd,
                RefArg::None => ReferenceKind::None,
            }),
        );
        if self.fd_n.is_some() {
            c.reference.fd_n = self.fd_n;
        }
        set(&mut c.rba.enabled, self.rba.map(|r| matches!(r, OnOff::On)));
        set(
            &mut c.norm,
            self.norm.map(|n| match n {
                NormArg::Paper => L2Norm::Paper,
                NormArg::Exact => L2Norm::Exact,
            }),
        );
        let s = &mut c.sampling;
        if self.n_interior.is_some() {
            s.n_interior = self.n_interior;
        }
        if self.n_boundary.is_some() {
            s.n_boundary = self.n_boundary;
        }
        if self.n_initial.is_some() {
            s.n_initial = self.n_initial;
        }
        set(&mut s.n_test, self.n_test);
        set(&mut c.network.hidden, self.hidden.clone());
        if let Some(a) = self.activation {
            c.network.activation = Some(match a {
                ActArg::Sigmoid => Activation::Sigmoid,
                ActArg::Tanh => Activation::Tanh,
            });
        }
        set(&mut c.adam.lr, self.lr);
        set(&mut c.adam.beta1, self.beta1);
        set(&mut c.adam.beta2, self.beta2);
        set(&mut c.adam.eps_hat, self.eps_hat);
        set(&mut c.rba.eta_star, self.eta_star);
        set(&mut c.rba.init, self.rba_init);
        set(
            &mut c.rba.style,
            self.rba_style.map(|s| match s {
                StyleArg::Squared => RbaStyle::Squared,
                StyleArg::Linear => RbaStyle::Linear,
            }),
        );
        set(&mut c.history_stride, self.history_stride);
        set(&mut c.eval_stride, self.eval_stride);
        if self.grid_resolution.is_some() {
            c.grid_resolution = self.grid_resolution;
        }
        apply_fd(&mut c, self.fd_scheme, self.fd_time_scheme, self.fd_omega);
        set(&mut c.reference.fd.sor_max_iter, self.fd_max_iter);
        set(&mut c.reference.fd.tolerance, self.fd_tol);
        if self.cache_dir.is_some() {
            c.reference.cache_dir = self.cache_dir.clone();
        }
        Ok(c)
    }
}

fn apply_problem(c: &mut ExperimentConfig, p: &ProblemArgs) {
    if let Some(path) = &p.problem_file {
        c.problem_file = Some(path.clone());
        c.example = None;
    } else if let Some(id) = p.example {
        c.example = Some(id);
        c.problem_file = None;
    }
}

fn run(args: &RunArgs) -> Result<(), Error> {
    let mut cfg = args.settings.build()?;
    apply_problem(&mut cfg, &args.problem);
    let report = run_experiment(&cfg)?;
    print!("{}", report.to_toml()?);
    Ok(())
}

fn matrix(args: &MatrixArgs) -> Result<(), Error> {
    let template = args.settings.build()?;
    let modes: Vec<Mode> = args.modes.iter().copied().map(Mode::from).collect();
    let rows = run_matrix(&template, &args.examples, &modes, &args.epsilons)?;
    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    println!(
        "{} runs, {} failed; summary in {}",
        rows.len(),
        failed,
        template.out_dir.join(gkpinn_core::experiment::SUMMARY_FILE).display()
    );
    Ok(())
}

fn reference(args: &ReferenceArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig {
        epsilon: args.epsilon,
        ..ExperimentConfig::default()
    };
    apply_problem(&mut cfg, &args.problem);
    apply_fd(&mut cfg, args.fd_scheme, args.fd_time_scheme, args.fd_omega);
    cfg.reference.kind = ReferenceKind::Fd;
    cfg.reference.fd_n = args.fd_n;
    let problem = cfg.problem()?;
    match resolve_reference(&problem, &cfg.reference)? {
        ResolvedReference::Fd(sol) => {
            sol.write_csv(&args.out)?;
            println!(
                "{}: {} x {} grid written to {}",
                problem.name,
                sol.xs.len(),
                sol.ys.len(),
                args.out.display()
            );
            Ok(())
        }
        _ => unreachable!("finite differences were requested"),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } => EXIT_DIVERGED,
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Parse(_) | Error::MissingAnalytic(_) => EXIT_USAGE,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Matrix(a) => matrix(a),
        Command::Reference(a) => reference(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
