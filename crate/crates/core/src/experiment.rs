//! Experiment configuration and the run pipeline: sample, build, train,
//! evaluate, export.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffnet::Activation;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_run, export_solution_grid, L2Norm, Reference, RunReport};
use crate::fdref::{solve_reference, FdOptions, ReferenceSolution};
use crate::layers::{build_model, Mode};
use crate::problems::{builtin_example, load_problem_file, PerturbedProblem, ProblemKind};
use crate::sampling::{sample_problem_points, test_grid, DEFAULT_TEST_POINTS};
use crate::training::{train_with, AdamConfig, HistoryRow, RbaStyle, TrainConfig};

/// Below this the fitted mesh cannot resolve the layer in double precision,
/// so the automatic reference choice skips the finite-difference solve.
pub const FD_MIN_EPSILON: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    /// Closed form when available, otherwise finite differences when
    /// `epsilon >= FD_MIN_EPSILON`, otherwise none.
    #[default]
    Auto,
    Analytic,
    Fd,
    None,
}

impl std::str::FromStr for ReferenceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(ReferenceKind::Auto),
            "analytic" => Ok(ReferenceKind::Analytic),
            "fd" => Ok(ReferenceKind::Fd),
            "none" => Ok(ReferenceKind::None),
            _ => Err(Error::InvalidArgument(format!(
                "unknown reference `{s}` (auto | analytic | fd | none)"
            ))),
        }
    }
}

/// Point counts; `None` picks the default for the problem kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub n_interior: Option<usize>,
    pub n_boundary: Option<usize>,
    pub n_initial: Option<usize>,
    pub n_test: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_interior: None,
            n_boundary: None,
            n_initial: None,
            n_test: DEFAULT_TEST_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    /// `None` picks sigmoid in 1D and tanh otherwise.
    pub activation: Option<Activation>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            hidden: vec![100, 100],
            activation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbaConfig {
    pub enabled: bool,
    pub eta_star: f64,
    pub init: f64,
    pub style: RbaStyle,
}

impl Default for RbaConfig {
    fn default() -> Self {
        RbaConfig {
            enabled: true,
            eta_star: 1e-4,
            init: 1.0,
            style: RbaStyle::Squared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    /// Cells per axis; `None` picks 2048 in 1D and 512 otherwise.
    pub fd_n: Option<usize>,
    pub fd: FdOptions,
    /// Directory for cached finite-difference grids.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            kind: ReferenceKind::Auto,
            fd_n: None,
            fd: FdOptions::default(),
            cache_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub example: Option<usize>,
    pub problem_file: Option<PathBuf>,
    pub mode: Mode,
    pub epsilon: f64,
    pub iterations: usize,
    pub seed: u64,
    pub history_stride: usize,
    pub eval_stride: usize,
    /// Points per axis in the solution grid dump; `None` picks 401 in 1D and
    /// 101 otherwise.
    pub grid_resolution: Option<usize>,
    pub norm: L2Norm,
    pub out_dir: PathBuf,
    pub sampling: SamplingConfig,
    pub network: NetworkConfig,
    pub adam: AdamConfig,
    pub rba: RbaConfig,
    pub reference: ReferenceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            example: Some(1),
            problem_file: None,
            mode: Mode::Gkpinn,
            epsilon: 1e-3,
            iterations: 50_000,
            seed: 0,
            history_stride: 100,
            eval_stride: 1000,
            grid_resolution: None,
            norm: L2Norm::Paper,
            out_dir: PathBuf::from("runs"),
            sampling: SamplingConfig::default(),
            network: NetworkConfig::default(),
            adam: AdamConfig::default(),
            rba: RbaConfig::default(),
            reference: ReferenceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.example, &self.problem_file) {
            (Some(_), Some(_)) => {
                return Err(Error::config("example", "give either an example or a problem file, not both"))
            }
            (None, None) => return Err(Error::config("example", "no problem selected")),
            (Some(id), None) if !(1..=crate::problems::NUM_EXAMPLES).contains(id) => {
                return Err(Error::config("example", "must be between 1 and 8"))
            }
            _ => {}
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive and finite"));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::config("network.hidden", "need at least one non-empty hidden layer"));
        }
        if self.sampling.n_test < 2 {
            return Err(Error::config("sampling.n_test", "must be at least 2"));
        }
        if self.grid_resolution.is_some_and(|r| r < 2) {
            return Err(Error::config("grid_resolution", "must be at least 2"));
        }
        if let Some(n) = self.reference.fd_n {
            if n < 4 || n % 2 != 0 {
                return Err(Error::config("reference.fd_n", "must be even and at least 4"));
            }
        }
        self.train_config().validate()
    }

    pub fn problem(&self) -> Result<PerturbedProblem> {
        match (&self.example, &self.problem_file) {
            (Some(id), None) => builtin_example(*id, self.epsilon),
            (None, Some(path)) => load_problem_file(path, self.epsilon),
            _ => Err(Error::config("example", "give exactly one of example or problem file")),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            adam: self.adam,
            rba_enabled: self.rba.enabled,
            rba_style: self.rba.style,
            eta_star: self.rba.eta_star,
            rba_init: self.rba.init,
            seed: self.seed,
            history_stride: self.history_stride,
            eval_stride: self.eval_stride,
        }
    }

    /// Copy with every kind-dependent default filled in.
    pub fn resolved(&self, kind: ProblemKind) -> Self {
        let one_d = kind == ProblemKind::Steady1D;
        let mut c = self.clone();
        let s = &mut c.sampling;
        s.n_interior.get_or_insert(if one_d { 1000 } else { 10_000 });
        s.n_boundary.get_or_insert(if one_d { 50 } else { 100 });
        if kind.is_time() {
            s.n_initial.get_or_insert(100);
        } else {
            if s.n_initial.is_some_and(|n| n > 0) {
                log::warn!("ignoring initial points for a steady problem");
            }
            s.n_initial = Some(0);
        }
        c.network
            .activation
            .get_or_insert(if one_d { Activation::Sigmoid } else { Activation::Tanh });
        c.reference.fd_n.get_or_insert(if one_d { 2048 } else { 512 });
        c.grid_resolution.get_or_insert(if one_d { 401 } else { 101 });
        c
    }
}

/// A reference resolved for one problem.
pub enum ResolvedReference {
    Analytic,
    Fd(ReferenceSolution),
    None,
}

impl ResolvedReference {
    pub fn as_reference(&self) -> Reference<'_> {
        match self {
            ResolvedReference::Analytic => Reference::Analytic,
            ResolvedReference::Fd(r) => Reference::Fd(r),
            ResolvedReference::None => Reference::None,
        }
    }
}

fn cache_file(dir: &Path, problem: &PerturbedProblem, n: usize, fd: &FdOptions) -> PathBuf {
    let name: String = problem
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let scheme = format!("{:?}-{:?}", fd.scheme, fd.time_scheme).to_lowercase();
    dir.join(format!("ref_{name}_eps{:e}_n{n}_{scheme}.csv", problem.epsilon))
}

/// Picks and, for finite differences, computes (or loads) the reference.
pub fn resolve_reference(problem: &PerturbedProblem, config: &ReferenceConfig) -> Result<ResolvedReference> {
    let kind = match config.kind {
        ReferenceKind::Auto if problem.has_analytic() => ReferenceKind::Analytic,
        ReferenceKind::Auto if problem.epsilon >= FD_MIN_EPSILON => ReferenceKind::Fd,
        ReferenceKind::Auto => ReferenceKind::None,
        k => k,
    };
    match kind {
        ReferenceKind::Analytic => {
            if !problem.has_analytic() {
                return Err(Error::MissingAnalytic(problem.name.clone()));
            }
            Ok(ResolvedReference::Analytic)
        }
        ReferenceKind::Fd => {
            let n = config
                .fd_n
                .unwrap_or(if problem.kind == ProblemKind::Steady1D { 2048 } else { 512 });
            let cached = config.cache_dir.as_ref().map(|d| cache_file(d, problem, n, &config.fd));
            if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
                log::info!("loading reference from {}", path.display());
                return Ok(ResolvedReference::Fd(ReferenceSolution::read_csv(path, problem.kind)?));
            }
            let sol = solve_reference(problem, n, &config.fd)?;
            if let Some(path) = cached {
                if let Some(dir) = path.parent() {
                    fs::create_dir_all(dir)?;
                }
                sol.write_csv(&path)?;
            }
            Ok(ResolvedReference::Fd(sol))
        }
        _ => Ok(ResolvedReference::None),
    }
}

pub const HISTORY_HEADER: [&str; 6] = ["iter", "loss_ic", "loss_bc", "loss_r", "loss_total", "l2_test"];

pub fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for h in history {
        w.write_record([
            h.iter.to_string(),
            h.loss.l_ic.to_string(),
            h.loss.l_bc.to_string(),
            h.loss.l_r.to_string(),
            h.loss.total.to_string(),
            h.l2_test.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(HISTORY_HEADER) {
        return Err(Error::Parse(format!("{}: unexpected history header", path.display())));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let iter = rec[0].parse().map_err(|e| Error::Parse(format!("{}: {e}", &rec[0])))?;
        let l2 = if rec[5].is_empty() { None } else { Some(num(&rec[5])?) };
        rows.push(HistoryRow {
            iter,
            loss: crate::training::LossBreakdown {
                l_ic: num(&rec[1])?,
                l_bc: num(&rec[2])?,
                l_r: num(&rec[3])?,
                total: num(&rec[4])?,
            },
            l2_test: l2,
        });
    }
    Ok(rows)
}

pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const GRID_FILE: &str = "grid.csv";

/// Runs the full pipeline and writes `history.csv`, `report.toml` and
/// `grid.csv` into `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let problem = config.problem()?;
    let cfg = config.resolved(problem.kind);
    let s = &cfg.sampling;
    let mut points = sample_problem_points(
        &problem,
        s.n_interior.unwrap_or_default(),
        s.n_boundary.unwrap_or_default(),
        s.n_initial.unwrap_or_default(),
        cfg.seed,
    )?;
    points.test = test_grid(problem.kind, s.n_test);
    let activation = cfg.network.activation.unwrap_or(Activation::Tanh);
    let mut model = build_model(&problem, &cfg.network.hidden, activation, cfg.seed, cfg.mode)?;

    let reference = resolve_reference(&problem, &cfg.reference)?;
    let reference_values = reference.as_reference().values(&problem, &points.test)?;
    let norm = cfg.norm;
    let test = points.test.clone();
    let mut observe = |_k: usize, m: &crate::layers::CompositeModel| {
        let r = reference_values.as_ref()?;
        let pred = crate::diffnet::FieldEvaluator::values(m, &test);
        crate::evaluation::l2_relative_error_with(&pred, r, norm).ok()
    };
    log::info!(
        "{} {} eps={:e}: {} iterations, {} parameters",
        problem.name,
        cfg.mode,
        cfg.epsilon,
        cfg.iterations,
        model.num_params()
    );
    let outcome = train_with(&mut model, &problem, &points, &cfg.train_config(), &mut observe)?;

    fs::create_dir_all(&cfg.out_dir)?;
    write_history(&cfg.out_dir.join(HISTORY_FILE), &outcome.history)?;
    let mut report = evaluate_run(&model, &problem, cfg.mode, reference.as_reference(), &points.test, norm)?;
    report.iterations = cfg.iterations;
    report.wall_time_s = outcome.wall_time_s;
    report.loss = outcome.final_loss;
    report.history = Some(HISTORY_FILE.into());
    report.config = Some(cfg.clone());
    report.write(&cfg.out_dir.join(REPORT_FILE))?;
    let res = cfg.grid_resolution.unwrap_or(101);
    export_solution_grid(&model, &problem, reference.as_reference(), res)?.write_csv(&cfg.out_dir.join(GRID_FILE))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixRow {
    pub example: usize,
    pub mode: Mode,
    pub epsilon: f64,
    pub result: std::result::Result<RunReport, String>,
}

pub const SUMMARY_FILE: &str = "summary.csv";

/// Runs every (example, mode, epsilon) combination of `template` and writes
/// `summary.csv` into the template's output directory. Failed runs are
/// recorded in their row.
pub fn run_matrix(
    template: &ExperimentConfig,
    examples: &[usize],
    modes: &[Mode],
    epsilons: &[f64],
) -> Result<Vec<MatrixRow>> {
    let root = template.out_dir.clone();
    fs::create_dir_all(&root)?;
    let mut out = csv::Writer::from_path(root.join(SUMMARY_FILE))?;
    out.write_record(["example", "mode", "epsilon", "loss", "l2_test", "status"])?;
    out.flush()?;
    let mut rows = Vec::new();
    for &example in examples {
        for &mode in modes {
            for &epsilon in epsilons {
                let mut cfg = template.clone();
                cfg.example = Some(example);
                cfg.problem_file = None;
                cfg.mode = mode;
                cfg.epsilon = epsilon;
                cfg.out_dir = root.join(format!("example{example}_{mode}_eps{epsilon:e}"));
                let result = run_experiment(&cfg).map_err(|e| e.to_string());
                let (loss, l2, status) = match &result {
                    Ok(r) => (
                        format!("{:e}", r.loss.total),
                        r.l2_test.map_or("x".to_string(), |v| format!("{v:e}")),
                        "ok".to_string(),
                    ),
                    Err(e) => (String::new(), "x".to_string(), format!("error: {e}")),
                };
                out.write_record([
                    example.to_string(),
                    mode.to_string(),
                    format!("{epsilon:e}"),
                    loss,
                    l2,
                    status,
                ])?;
                out.flush()?;
                rows.push(MatrixRow {
                    example,
                    mode,
                    epsilon,
                    result,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path, example: usize) -> ExperimentConfig {
        ExperimentConfig {
            example: Some(example),
            iterations: 3,
            history_stride: 1,
            eval_stride: 2,
            out_dir: dir.to_path_buf(),
            sampling: SamplingConfig {
                n_interior: Some(40),
                n_boundary: Some(8),
                n_initial: None,
                n_test: 25,
            },
            network: NetworkConfig {
                hidden: vec![6],
                activation: None,
            },
            reference: ReferenceConfig {
                fd_n: Some(16),
                ..ReferenceConfig::default()
            },
            grid_resolution: Some(5),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_follow_the_published_settings() {
        let c = ExperimentConfig::default();
        assert_eq!(c.network.hidden, vec![100, 100]);
        assert_eq!(c.adam.lr, 1e-3);
        assert_eq!(c.adam.beta1, 0.9);
        assert_eq!(c.adam.beta2, 0.999);
        assert_eq!(c.adam.eps_hat, 1e-8);
        assert!(c.rba.enabled);
        assert_eq!(c.rba.eta_star, 1e-4);
        assert_eq!(c.rba.init, 1.0);
        assert_eq!(c.iterations, 50_000);
        assert_eq!(c.norm, L2Norm::Paper);
        assert_eq!(c.mode, Mode::Gkpinn);

        let one = c.resolved(ProblemKind::Steady1D);
        assert_eq!(one.network.activation, Some(Activation::Sigmoid));
        assert_eq!(one.sampling.n_interior, Some(1000));
        assert_eq!(one.sampling.n_boundary, Some(50));
        assert_eq!(one.sampling.n_initial, Some(0));
        for kind in [ProblemKind::Steady2D, ProblemKind::Time1D] {
            let r = c.resolved(kind);
            assert_eq!(r.network.activation, Some(Activation::Tanh));
            assert_eq!(r.sampling.n_interior, Some(10_000));
            assert_eq!(r.sampling.n_boundary, Some(100));
        }
        assert_eq!(c.resolved(ProblemKind::Time1D).sampling.n_initial, Some(100));
        assert_eq!(c.resolved(ProblemKind::Steady2D).sampling.n_initial, Some(0));
    }

    #[test]
    fn config_toml_round_trip_and_unknown_fields() {
        let c = ExperimentConfig::default().resolved(ProblemKind::Time1D);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let partial = ExperimentConfig::from_toml("epsilon = 0.01\n[network]\nhidden = [20]\n").unwrap();
        assert_eq!(partial.epsilon, 0.01);
        assert_eq!(partial.network.hidden, vec![20]);
        assert_eq!(partial.iterations, 50_000);
        assert!(ExperimentConfig::from_toml("epsilonn = 0.01").is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = ExperimentConfig::default();
        c.example = Some(9);
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "example"));
        let mut c = ExperimentConfig::default();
        c.epsilon = -1.0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "epsilon"));
        let mut c = ExperimentConfig::default();
        c.adam.lr = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.problem_file = Some("p.toml".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn automatic_reference_choice() {
        let rc = ReferenceConfig {
            fd_n: Some(16),
            ..ReferenceConfig::default()
        };
        let p = builtin_example(1, 1e-38).unwrap();
        assert!(matches!(resolve_reference(&p, &rc).unwrap(), ResolvedReference::Analytic));
        let p = builtin_example(4, 1e-3).unwrap();
        assert!(matches!(resolve_reference(&p, &rc).unwrap(), ResolvedReference::Fd(_)));
        let p = builtin_example(4, 1e-38).unwrap();
        assert!(matches!(resolve_reference(&p, &rc).unwrap(), ResolvedReference::None));
        let explicit = ReferenceConfig {
            kind: ReferenceKind::Analytic,
            ..rc
        };
        assert!(resolve_reference(&builtin_example(7, 0.1).unwrap(), &explicit).is_err());
    }

    #[test]
    fn reference_cache_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let rc = ReferenceConfig {
            fd_n: Some(16),
            cache_dir: Some(dir.path().to_path_buf()),
            ..ReferenceConfig::default()
        };
        let p = builtin_example(8, 1e-2).unwrap();
        let ResolvedReference::Fd(a) = resolve_reference(&p, &rc).unwrap() else { panic!() };
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
        let ResolvedReference::Fd(b) = resolve_reference(&p, &rc).unwrap() else { panic!() };
        assert_eq!(a.values, b.values);
        assert_eq!(b.mesh.scheme, "imported");
    }

    #[test]
    fn run_writes_all_outputs_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(&dir.path().join("a"), 2);
        let r = run_experiment(&cfg).unwrap();
        let a = dir.path().join("a");
        let hist = read_history(&a.join(HISTORY_FILE)).unwrap();
        assert_eq!(hist.iter().map(|h| h.iter).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(hist[0].l2_test.is_some() && hist[1].l2_test.is_none() && hist[3].l2_test.is_some());
        let text = fs::read_to_string(a.join(HISTORY_FILE)).unwrap();
        assert!(text.starts_with("iter,loss_ic,loss_bc,loss_r,loss_total,l2_test\n"));
        let back = RunReport::read(&a.join(REPORT_FILE)).unwrap();
        assert_eq!(back, r);
        let grid = crate::evaluation::GridDump::read_csv(&a.join(GRID_FILE)).unwrap();
        assert_eq!(grid.rows.len(), 5);

        // the echoed configuration reproduces the run bit for bit
        let mut again = back.config.clone().unwrap();
        again.out_dir = dir.path().join("b");
        let r2 = run_experiment(&again).unwrap();
        assert_eq!(r2.loss, r.loss);
        assert_eq!(r2.l2_test, r.l2_test);
        assert_eq!(
            fs::read(a.join(HISTORY_FILE)).unwrap(),
            fs::read(dir.path().join("b").join(HISTORY_FILE)).unwrap()
        );
    }

    #[test]
    fn matrix_rows_and_markers() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tiny(dir.path(), 1);
        t.iterations = 1;
        let rows = run_matrix(&t, &[1, 4], &[Mode::Pinn, Mode::Gkpinn], &[1e-38]).unwrap();
        assert_eq!(rows.len(), 4);
        let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "example,mode,epsilon,loss,l2_test,status");
        assert_eq!(lines.len(), 5);
        for line in &lines[3..] {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[0], "4");
            assert_eq!(cols[4], "x");
            assert_eq!(cols[5], "ok");
        }
        assert_ne!(lines[1].split(',').nth(4), Some("x"));

        let empty = run_matrix(&tiny(&dir.path().join("e"), 1), &[], &[Mode::Pinn], &[1e-3]).unwrap();
        assert!(empty.is_empty());
        let text = fs::read_to_string(dir.path().join("e").join(SUMMARY_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn failed_run_is_recorded_in_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = tiny(dir.path(), 1);
        t.reference.kind = ReferenceKind::Analytic;
        let rows = run_matrix(&t, &[7], &[Mode::Gkpinn], &[0.1]).unwrap();
        assert!(rows[0].result.is_err());
        let text = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("error:"));
    }
}
