//! Linear convection-diffusion problems on the unit interval, unit square
//! and the space-time slab `(0,1) x (0,1]`.
//!
//! A problem is stored in the form its equation is written in:
//!
//! ```text
//! steady:  s*eps*Lap(u) + b.grad(u) + c*u = f
//! time:    u_t + s*eps*u_xx + b*u_x + c*u = f
//! ```
//!
//! with `s = diffusion_sign` in `{-1, +1}`. Layer inference canonicalises the
//! sign elsewhere; here the printed form is kept.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables,
    DefaultNumericTypes, Function, HashMapContext, Node, Value,
};
use serde::{Deserialize, Serialize};

use crate::diffnet::{FieldEvaluator, FieldJet, Point};
use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type JetFn = Arc<dyn Fn(&Point) -> FieldJet + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Steady1D,
    Steady2D,
    Time1D,
}

impl ProblemKind {
    /// Number of independent variables.
    pub fn dim(self) -> usize {
        match self {
            ProblemKind::Steady1D => 1,
            _ => 2,
        }
    }

    /// Faces carrying Dirichlet data, in canonical order.
    pub fn faces(self) -> &'static [Face] {
        match self {
            ProblemKind::Steady2D => &[Face::Left, Face::Right, Face::Bottom, Face::Top],
            _ => &[Face::Left, Face::Right],
        }
    }

    /// Which pure second derivatives the residual uses.
    pub fn second_axes(self) -> [bool; 2] {
        match self {
            ProblemKind::Steady2D => [true, true],
            _ => [true, false],
        }
    }

    pub fn is_time(self) -> bool {
        self == ProblemKind::Time1D
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Steady1D => "steady1d",
            ProblemKind::Steady2D => "steady2d",
            ProblemKind::Time1D => "time1d",
        })
    }
}

/// A boundary face. `Left`/`Right` are `x = 0`/`x = 1`; `Bottom`/`Top` are
/// `y = 0`/`y = 1` and exist only for steady 2D problems. For time problems
/// `Left`/`Right` are the lines `x = 0`/`x = 1` for all `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

impl Face {
    /// Point on the face at tangential coordinate `s`.
    pub fn point(self, s: f64) -> Point {
        match self {
            Face::Left => [0.0, s],
            Face::Right => [1.0, s],
            Face::Bottom => [s, 0.0],
            Face::Top => [s, 1.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::Left => "left",
            Face::Right => "right",
            Face::Bottom => "bottom",
            Face::Top => "top",
        }
    }
}

/// Coefficients of the residual at one point:
/// `R = second . diag_hess + first . grad + reaction * u - forcing`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCoeffs {
    pub second: [f64; 2],
    pub first: [f64; 2],
    pub reaction: f64,
    pub forcing: f64,
}

impl PointCoeffs {
    pub fn homogeneous(&self, j: &FieldJet) -> f64 {
        self.second[0] * j.diag_hess[0]
            + self.second[1] * j.diag_hess[1]
            + self.first[0] * j.grad[0]
            + self.first[1] * j.grad[1]
            + self.reaction * j.value
    }

    pub fn apply(&self, j: &FieldJet) -> f64 {
        self.homogeneous(j) - self.forcing
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualSample {
    pub point: Point,
    pub residual_value: f64,
}

#[derive(Clone)]
pub struct PerturbedProblem {
    pub name: String,
    /// Index 1..=8 for the built-in benchmarks.
    pub example_id: Option<usize>,
    pub kind: ProblemKind,
    pub epsilon: f64,
    pub diffusion_sign: f64,
    /// One function per spatial axis (one for 1D and time problems).
    pub convection: Vec<ScalarFn>,
    pub reaction: ScalarFn,
    pub forcing: ScalarFn,
    pub boundary: Vec<(Face, ScalarFn)>,
    pub initial: Option<ScalarFn>,
    pub analytic: Option<JetFn>,
}

impl fmt::Debug for PerturbedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbedProblem")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("epsilon", &self.epsilon)
            .field("diffusion_sign", &self.diffusion_sign)
            .field("analytic", &self.analytic.is_some())
            .finish_non_exhaustive()
    }
}

fn constant(v: f64) -> ScalarFn {
    Arc::new(move |_| v)
}

impl PerturbedProblem {
    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn has_analytic(&self) -> bool {
        self.analytic.is_some()
    }

    pub fn convection_at(&self, p: &Point) -> [f64; 2] {
        let mut b = [0.0; 2];
        for (k, f) in self.convection.iter().enumerate().take(2) {
            b[k] = f(p);
        }
        b
    }

    pub fn coefficients(&self, p: &Point) -> PointCoeffs {
        let se = self.diffusion_sign * self.epsilon;
        let b = self.convection_at(p);
        let (second, first) = match self.kind {
            ProblemKind::Steady1D => ([se, 0.0], [b[0], 0.0]),
            ProblemKind::Steady2D => ([se, se], b),
            ProblemKind::Time1D => ([se, 0.0], [b[0], 1.0]),
        };
        PointCoeffs {
            second,
            first,
            reaction: (self.reaction)(p),
            forcing: (self.forcing)(p),
        }
    }

    pub fn boundary_fn(&self, face: Face) -> Option<&ScalarFn> {
        self.boundary.iter().find(|(f, _)| *f == face).map(|(_, g)| g)
    }

    pub fn boundary_value(&self, face: Face, p: &Point) -> Result<f64> {
        self.boundary_fn(face)
            .map(|g| g(p))
            .ok_or_else(|| Error::InvalidArgument(format!("no data on face {}", face.name())))
    }

    pub fn initial_value(&self, x: f64) -> Result<f64> {
        self.initial
            .as_ref()
            .map(|g| g(&[x, 0.0]))
            .ok_or_else(|| Error::InvalidArgument("problem has no initial data".into()))
    }

    pub fn analytic_jet(&self, p: &Point) -> Result<FieldJet> {
        self.analytic
            .as_ref()
            .map(|a| a(p))
            .ok_or_else(|| Error::MissingAnalytic(self.name.clone()))
    }

    /// The analytic solution as a field, if present.
    pub fn analytic_field(&self) -> Option<AnalyticField> {
        self.analytic.clone().map(|f| AnalyticField {
            dim: self.dim(),
            f,
        })
    }
}

/// Analytic solution wrapped as a [`FieldEvaluator`].
#[derive(Clone)]
pub struct AnalyticField {
    dim: usize,
    f: JetFn,
}

impl FieldEvaluator for AnalyticField {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: &Point) -> FieldJet {
        (self.f)(x)
    }
}

fn check_dim(problem: &PerturbedProblem, field: &dyn FieldEvaluator) -> Result<()> {
    if field.input_dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: field.input_dim(),
        });
    }
    Ok(())
}

/// Left-hand side minus right-hand side of the PDE at `x`.
pub fn residual(problem: &PerturbedProblem, field: &dyn FieldEvaluator, x: &Point) -> Result<f64> {
    check_dim(problem, field)?;
    Ok(problem.coefficients(x).apply(&field.jet(x)))
}

/// Residual without the forcing term.
pub fn residual_hom(
    problem: &PerturbedProblem,
    field: &dyn FieldEvaluator,
    x: &Point,
) -> Result<f64> {
    check_dim(problem, field)?;
    Ok(problem.coefficients(x).homogeneous(&field.jet(x)))
}

pub fn residual_samples(
    problem: &PerturbedProblem,
    field: &dyn FieldEvaluator,
    points: &[Point],
) -> Result<Vec<ResidualSample>> {
    check_dim(problem, field)?;
    points
        .iter()
        .map(|p| {
            let r = problem.coefficients(p).apply(&field.jet(p));
            if r.is_finite() {
                Ok(ResidualSample {
                    point: *p,
                    residual_value: r,
                })
            } else {
                Err(Error::NonFinite(format!("residual at {p:?}")))
            }
        })
        .collect()
}

pub fn analytic_on_grid(problem: &PerturbedProblem, points: &[Point]) -> Result<Vec<f64>> {
    let a = problem
        .analytic
        .as_ref()
        .ok_or_else(|| Error::MissingAnalytic(problem.name.clone()))?;
    Ok(points.iter().map(|p| a(p).value).collect())
}

pub const NUM_EXAMPLES: usize = 8;

/// Built-in benchmark `id` (1..=8) at perturbation `epsilon`.
pub fn builtin_example(id: usize, epsilon: f64) -> Result<PerturbedProblem> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let eps = epsilon;
    let zero = constant(0.0);
    let base = |kind, sign: f64, convection: Vec<ScalarFn>, reaction: ScalarFn| PerturbedProblem {
        name: format!("example{id}"),
        example_id: Some(id),
        kind,
        epsilon: eps,
        diffusion_sign: sign,
        convection,
        reaction,
        forcing: constant(0.0),
        boundary: Vec::new(),
        initial: None,
        analytic: None,
    };
    let p = match id {
        1 => {
            // -eps u'' + u' = eps pi^2 sin(pi x) + pi cos(pi x)
            let mut p = base(ProblemKind::Steady1D, -1.0, vec![constant(1.0)], zero);
            p.forcing = Arc::new(move |x| {
                eps * PI * PI * (PI * x[0]).sin() + PI * (PI * x[0]).cos()
            });
            p.boundary = vec![(Face::Left, constant(0.0)), (Face::Right, constant(1.0))];
            p.analytic = Some(Arc::new(move |p| {
                let x = p[0];
                let e1 = (-1.0 / eps).exp();
                let d = 1.0 - e1;
                let ex = ((x - 1.0) / eps).exp();
                let (s, c) = (PI * x).sin_cos();
                FieldJet {
                    value: s + (ex - e1) / d,
                    grad: [PI * c + ex / eps / d, 0.0],
                    diag_hess: [-PI * PI * s + ex / eps / eps / d, 0.0],
                }
            }));
            p
        }
        2 => {
            // -eps u'' + u' + (1 + eps) u = 0
            let mut p = base(
                ProblemKind::Steady1D,
                -1.0,
                vec![constant(1.0)],
                constant(1.0 + eps),
            );
            let k = (1.0 + eps) / eps;
            let left = 1.0 + (-(1.0 + eps) / eps).exp();
            p.boundary = vec![
                (Face::Left, constant(left)),
                (Face::Right, constant(1.0 + (-1.0f64).exp())),
            ];
            p.analytic = Some(Arc::new(move |p| {
                let x = p[0];
                let s = (-x).exp();
                let l = ((1.0 + eps) * (x - 1.0) / eps).exp();
                FieldJet {
                    value: s + l,
                    grad: [-s + k * l, 0.0],
                    diag_hess: [s + k * k * l, 0.0],
                }
            }));
            p
        }
        3 => {
            // eps u'' + (1 + eps) u' + u = 0
            let mut p = base(
                ProblemKind::Steady1D,
                1.0,
                vec![constant(1.0 + eps)],
                constant(1.0),
            );
            p.boundary = vec![(Face::Left, constant(0.0)), (Face::Right, constant(1.0))];
            p.analytic = Some(Arc::new(move |p| {
                let x = p[0];
                let d = (-1.0f64).exp() - (-1.0 / eps).exp();
                let s = (-x).exp();
                let l = (-x / eps).exp();
                FieldJet {
                    value: (s - l) / d,
                    grad: [(-s + l / eps) / d, 0.0],
                    diag_hess: [(s - l / eps / eps) / d, 0.0],
                }
            }));
            p
        }
        4 => {
            // -eps Lap(u) + u_x = 0
            let mut p = base(
                ProblemKind::Steady2D,
                -1.0,
                vec![constant(1.0), constant(0.0)],
                zero,
            );
            p.boundary = vec![
                (Face::Left, Arc::new(|p: &Point| (PI * p[1]).sin())),
                (Face::Right, Arc::new(|p: &Point| 2.0 * (PI * p[1]).sin())),
                (Face::Bottom, constant(0.0)),
                (Face::Top, constant(0.0)),
            ];
            p
        }
        5 | 6 => {
            // eps Lap(u) + u_y = 0  /  eps Lap(u) + u_x + u_y = 0
            let bx = if id == 6 { 1.0 } else { 0.0 };
            let mut p = base(
                ProblemKind::Steady2D,
                1.0,
                vec![constant(bx), constant(1.0)],
                zero,
            );
            p.boundary = vec![
                (Face::Left, constant(0.0)),
                (Face::Right, constant(0.0)),
                (Face::Bottom, Arc::new(|p: &Point| (PI * p[0]).sin())),
                (Face::Top, Arc::new(|p: &Point| 2.0 * (PI * p[0]).sin())),
            ];
            p
        }
        7 => {
            // u_t - eps u_xx - u_x - u = 0
            let mut p = base(
                ProblemKind::Time1D,
                -1.0,
                vec![constant(-1.0)],
                constant(-1.0),
            );
            p.boundary = vec![(Face::Left, constant(0.0)), (Face::Right, constant(1.0))];
            p.initial = Some(Arc::new(|p: &Point| (2.0 * PI * p[0]).cos()));
            p
        }
        8 => {
            // u_t - eps u_xx + u_x + 5u = 0
            let mut p = base(
                ProblemKind::Time1D,
                -1.0,
                vec![constant(1.0)],
                constant(5.0),
            );
            p.boundary = vec![(Face::Left, constant(0.0)), (Face::Right, constant(1.0))];
            p.initial = Some(Arc::new(|p: &Point| (2.0 * PI * p[0]).sin()));
            p
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "example index must be 1..={NUM_EXAMPLES}, got {id}"
            )))
        }
    };
    Ok(p)
}

pub fn builtin_examples(epsilon: f64) -> Result<Vec<PerturbedProblem>> {
    (1..=NUM_EXAMPLES)
        .map(|i| builtin_example(i, epsilon))
        .collect()
}

/// On-disk description of a custom problem.
///
/// Every coefficient is an expression in `x`, `y`, `t` and `eps` using
/// `+ - * / ^`, parentheses, the constants `pi` and `e`, and the functions
/// `sin cos tan exp ln sqrt abs tanh sinh cosh`. `y` and `t` both name the
/// second coordinate.
///
/// ```toml
/// name = "tilted"
/// kind = "steady1d"
/// diffusion_sign = -1
/// convection = ["1 + x"]
/// reaction = "0"
/// forcing = "1"
///
/// [boundary]
/// left = "0"
/// right = "0"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: ProblemKind,
    pub diffusion_sign: f64,
    pub convection: Vec<String>,
    #[serde(default = "zero_expr")]
    pub reaction: String,
    #[serde(default = "zero_expr")]
    pub forcing: String,
    pub boundary: BoundaryExprs,
    #[serde(default)]
    pub initial: Option<String>,
    /// Closed-form solution used as the test reference. Its derivatives are
    /// taken by central differences.
    #[serde(default)]
    pub analytic: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryExprs {
    pub left: Option<String>,
    pub right: Option<String>,
    pub bottom: Option<String>,
    pub top: Option<String>,
}

impl BoundaryExprs {
    fn get(&self, face: Face) -> Option<&String> {
        match face {
            Face::Left => self.left.as_ref(),
            Face::Right => self.right.as_ref(),
            Face::Bottom => self.bottom.as_ref(),
            Face::Top => self.top.as_ref(),
        }
    }
}

fn zero_expr() -> String {
    "0".into()
}

struct Expr {
    node: Node<DefaultNumericTypes>,
    ctx: Mutex<HashMapContext<DefaultNumericTypes>>,
}

/// Replaces numeric literals by named constants so that `1/2` is not integer
/// division. Returns the rewritten source and the literal values.
fn lift_literals(src: &str) -> Result<(String, Vec<f64>)> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut lits = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_ident = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        let starts_number =
            (c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())))
                && !prev_ident;
        if !starts_number {
            out.push(c);
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
            i += 1;
        }
        if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
            let mut j = i + 1;
            if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                j += 1;
            }
            if j < chars.len() && chars[j].is_ascii_digit() {
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text: String = chars[start..i].iter().collect();
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Parse(format!("bad number '{text}' in '{src}'")))?;
        out.push_str(&format!(" lit__{} ", lits.len()));
        lits.push(v);
    }
    Ok((out, lits))
}

fn unary_fn(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| {
        Ok(Value::from_float(f(arg.as_number()?)))
    })
}

impl Expr {
    fn compile(what: &str, src: &str, eps: f64) -> Result<Self> {
        let (rewritten, lits) = lift_literals(src)?;
        let node = build_operator_tree::<DefaultNumericTypes>(&rewritten)
            .map_err(|e| Error::Parse(format!("{what}: '{src}': {e}")))?;
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        let mut set = |name: &str, v: f64| {
            ctx.set_value(name.into(), Value::from_float(v))
                .map_err(|e| Error::Parse(format!("{what}: {e}")))
        };
        for (i, v) in lits.iter().enumerate() {
            set(&format!("lit__{i}"), *v)?;
        }
        set("eps", eps)?;
        set("pi", PI)?;
        set("e", std::f64::consts::E)?;
        set("x", 0.0)?;
        set("y", 0.0)?;
        set("t", 0.0)?;
        let funcs: [(&str, fn(f64) -> f64); 10] = [
            ("sin", f64::sin),
            ("cos", f64::cos),
            ("tan", f64::tan),
            ("exp", f64::exp),
            ("ln", f64::ln),
            ("sqrt", f64::sqrt),
            ("abs", f64::abs),
            ("tanh", f64::tanh),
            ("sinh", f64::sinh),
            ("cosh", f64::cosh),
        ];
        for (name, f) in funcs {
            ctx.set_function(name.into(), unary_fn(f))
                .map_err(|e| Error::Parse(format!("{what}: {e}")))?;
        }
        let expr = Expr {
            node,
            ctx: Mutex::new(ctx),
        };
        expr.eval(&[0.5, 0.5])
            .map_err(|e| Error::Parse(format!("{what}: '{src}': {e}")))?;
        Ok(expr)
    }

    fn eval(&self, p: &Point) -> Result<f64> {
        let mut ctx = self.ctx.lock().unwrap_or_else(|e| e.into_inner());
        for (name, v) in [("x", p[0]), ("y", p[1]), ("t", p[1])] {
            ctx.set_value(name.into(), Value::from_float(v))
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        self.node
            .eval_number_with_context(&*ctx)
            .map_err(|e| Error::Parse(e.to_string()))
    }

    fn into_fn(self) -> ScalarFn {
        Arc::new(move |p| self.eval(p).unwrap_or(f64::NAN))
    }
}

fn fd_jet(f: &ScalarFn, dim: usize, p: &Point) -> FieldJet {
    let (h1, h2) = (1e-5, 1e-4);
    let mut j = FieldJet::constant(f(p));
    for k in 0..dim {
        let shift = |h: f64| {
            let mut q = *p;
            q[k] += h;
            f(&q)
        };
        j.grad[k] = (shift(h1) - shift(-h1)) / (2.0 * h1);
        j.diag_hess[k] = (shift(h2) - 2.0 * j.value + shift(-h2)) / (h2 * h2);
    }
    j
}

impl ProblemFile {
    pub fn build(&self, epsilon: f64) -> Result<PerturbedProblem> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive and finite"));
        }
        if self.diffusion_sign != 1.0 && self.diffusion_sign != -1.0 {
            return Err(Error::config("diffusion_sign", "must be -1 or 1"));
        }
        let axes = if self.kind == ProblemKind::Steady2D { 2 } else { 1 };
        if self.convection.len() != axes {
            return Err(Error::config(
                "convection",
                format!("{} expects {axes} component(s)", self.kind),
            ));
        }
        let compile = |what: &str, src: &str| Expr::compile(what, src, epsilon).map(Expr::into_fn);
        let convection = self
            .convection
            .iter()
            .enumerate()
            .map(|(k, s)| compile(&format!("convection[{k}]"), s))
            .collect::<Result<Vec<_>>>()?;
        let mut boundary = Vec::new();
        for face in [Face::Left, Face::Right, Face::Bottom, Face::Top] {
            let wanted = self.kind.faces().contains(&face);
            match (self.boundary.get(face), wanted) {
                (Some(s), true) => boundary.push((face, compile(face.name(), s)?)),
                (None, true) => {
                    return Err(Error::config(
                        format!("boundary.{}", face.name()),
                        "missing",
                    ))
                }
                (Some(_), false) => {
                    return Err(Error::config(
                        format!("boundary.{}", face.name()),
                        format!("not a face of a {} problem", self.kind),
                    ))
                }
                (None, false) => {}
            }
        }
        let initial = match (&self.initial, self.kind.is_time()) {
            (Some(s), true) => Some(compile("initial", s)?),
            (None, true) => return Err(Error::config("initial", "required for time1d")),
            (Some(_), false) => return Err(Error::config("initial", "only valid for time1d")),
            (None, false) => None,
        };
        let dim = self.kind.dim();
        let analytic: Option<JetFn> = match &self.analytic {
            Some(s) => {
                let f = compile("analytic", s)?;
                Some(Arc::new(move |p: &Point| fd_jet(&f, dim, p)))
            }
            None => None,
        };
        Ok(PerturbedProblem {
            name: self.name.clone().unwrap_or_else(|| "custom".into()),
            example_id: None,
            kind: self.kind,
            epsilon,
            diffusion_sign: self.diffusion_sign,
            convection,
            reaction: compile("reaction", &self.reaction)?,
            forcing: compile("forcing", &self.forcing)?,
            boundary,
            initial,
            analytic,
        })
    }
}

pub fn parse_problem_toml(text: &str, epsilon: f64) -> Result<PerturbedProblem> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.build(epsilon)
}

pub fn load_problem_file(path: &Path, epsilon: f64) -> Result<PerturbedProblem> {
    parse_problem_toml(&std::fs::read_to_string(path)?, epsilon)
}
