//! Finite-difference reference solutions on piecewise-uniform fitted meshes.
//!
//! All solvers work on the canonical form `-eps*u'' + b*u' + z*u = r` along
//! each axis. Convection is discretised with a hybrid rule: central
//! differences where the local mesh resolves the layer (`h*|b| < eps`),
//! upwind differences elsewhere. In one dimension the upwind rows use the
//! midpoint form, which averages the zeroth-order terms and the right-hand
//! side with the upwind neighbour and is second order away from the layer.
//! The plain first-order upwind scheme is available as an option.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffnet::Point;
use crate::error::{Error, Result};
use crate::layers::{infer_layers, Axis, BoundaryLayerSpec, Side};
use crate::problems::{Face, PerturbedProblem, ProblemKind};

/// Constant in the transition point `tau = min(1/2, sigma*eps/beta*ln N)`.
pub const SHISHKIN_SIGMA: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ShishkinMesh1D {
    pub nodes: Vec<f64>,
    pub tau: f64,
    pub side: Option<Side>,
}

/// Piecewise-uniform mesh with `n/2` cells in the layer strip of width `tau`
/// next to `layer.side`, or a uniform mesh when `layer` is `None`.
pub fn shishkin_mesh(n: usize, epsilon: f64, layer: Option<&BoundaryLayerSpec>) -> Result<ShishkinMesh1D> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("mesh size must be even and >= 4, got {n}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let uniform = |a: f64, b: f64, m: usize| (0..m).map(move |i| a + (b - a) * i as f64 / m as f64);
    let half = n / 2;
    let Some(spec) = layer else {
        let mut nodes: Vec<f64> = uniform(0.0, 1.0, n).collect();
        nodes.push(1.0);
        return Ok(ShishkinMesh1D {
            nodes,
            tau: 0.5,
            side: None,
        });
    };
    let tau = (SHISHKIN_SIGMA * epsilon / spec.coeff * (n as f64).ln()).min(0.5);
    let mut nodes: Vec<f64> = match spec.side {
        Side::Left => uniform(0.0, tau, half).chain(uniform(tau, 1.0, half)).collect(),
        Side::Right => uniform(0.0, 1.0 - tau, half)
            .chain(uniform(1.0 - tau, 1.0, half))
            .collect(),
    };
    nodes.push(1.0);
    if nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "layer width {tau:e} is below the resolution of 64-bit coordinates"
        )));
    }
    Ok(ShishkinMesh1D {
        nodes,
        tau,
        side: Some(spec.side),
    })
}

/// Solves a tridiagonal system. `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::LengthMismatch(n, rhs.len()));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut prev_c = 0.0;
    let mut prev_d = 0.0;
    for i in 0..n {
        let l = if i == 0 { 0.0 } else { lower[i] };
        let m = diag[i] - l * prev_c;
        if m == 0.0 || !m.is_finite() {
            return Err(Error::SingularSystem(i));
        }
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - l * prev_d) / m;
        prev_c = c[i];
        prev_d = d[i];
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvectionScheme {
    /// First-order upwind everywhere.
    Upwind,
    /// Central where the mesh resolves the layer, upwind elsewhere.
    #[default]
    Hybrid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScheme {
    BackwardEuler,
    /// Second-order backward differences, started with one backward Euler
    /// step.
    #[default]
    Bdf2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdOptions {
    pub scheme: ConvectionScheme,
    pub time_scheme: TimeScheme,
    pub sor_omega: f64,
    pub sor_max_iter: usize,
    /// Bound on `max_i |r_i| / a_ii` for the 2D relaxation.
    pub tolerance: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            scheme: ConvectionScheme::Hybrid,
            time_scheme: TimeScheme::Bdf2,
            sor_omega: 1.0,
            sor_max_iter: 1_000_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshInfo {
    pub nx: usize,
    /// Cells along the second axis (time steps for time problems); 0 in 1D.
    pub ny: usize,
    pub scheme: String,
}

/// Grid values of a reference solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub kind: ProblemKind,
    pub xs: Vec<f64>,
    /// Second coordinate (`y` or `t`); `[0.0]` in 1D.
    pub ys: Vec<f64>,
    /// Row-major with the second coordinate outermost.
    pub values: Vec<f64>,
    pub descriptor: String,
    pub mesh: MeshInfo,
}

/// Tridiagonal rows of `-eps*u'' + b*u' + z*u = r` at interior nodes, with
/// identity rows at both ends.
struct Rows {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

fn assemble_rows(x: &[f64], eps: f64, b: &[f64], z: &[f64], r: &[f64], scheme: ConvectionScheme, midpoint: bool) -> Rows {
    let n = x.len();
    let mut rows = Rows {
        lower: vec![0.0; n],
        diag: vec![0.0; n],
        upper: vec![0.0; n],
        rhs: vec![0.0; n],
    };
    rows.diag[0] = 1.0;
    rows.diag[n - 1] = 1.0;
    for i in 1..n - 1 {
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        let hb = 0.5 * (hm + hp);
        let (dm, dp) = (eps / (hm * hb), eps / (hp * hb));
        let (mut lo, mut di, mut up) = (-dm, dm + dp, -dp);
        let bi = b[i];
        let central = scheme == ConvectionScheme::Hybrid && hm.max(hp) * bi.abs() < eps;
        let rhs;
        if central || bi == 0.0 {
            lo -= bi / (hm + hp);
            up += bi / (hm + hp);
            di += z[i];
            rhs = r[i];
        } else if !midpoint {
            if bi > 0.0 {
                di += bi / hm;
                lo -= bi / hm;
            } else {
                up += bi / hp;
                di -= bi / hp;
            }
            di += z[i];
            rhs = r[i];
        } else if bi > 0.0 {
            let bm = 0.5 * (b[i] + b[i - 1]);
            di += bm / hm + 0.5 * z[i];
            lo += -bm / hm + 0.5 * z[i - 1];
            rhs = 0.5 * (r[i] + r[i - 1]);
        } else {
            let bm = 0.5 * (b[i] + b[i + 1]);
            up += bm / hp + 0.5 * z[i + 1];
            di += -bm / hp + 0.5 * z[i];
            rhs = 0.5 * (r[i] + r[i + 1]);
        }
        rows.lower[i] = lo;
        rows.diag[i] = di;
        rows.upper[i] = up;
        rows.rhs[i] = rhs;
    }
    rows
}

/// `-1` flips the printed equation into the canonical sign.
fn canonical_flip(problem: &PerturbedProblem) -> f64 {
    if problem.diffusion_sign > 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn layer_on(layers: &[BoundaryLayerSpec], axis: Axis) -> Option<&BoundaryLayerSpec> {
    layers.iter().find(|l| l.axis == axis)
}

fn expect_kind(problem: &PerturbedProblem, kind: ProblemKind) -> Result<()> {
    if problem.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "{} solver called on a {} problem",
            kind, problem.kind
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("finite-difference solution".into()))
    }
}

fn scheme_name(options: &FdOptions, time: bool) -> String {
    let conv = match options.scheme {
        ConvectionScheme::Upwind => "upwind",
        ConvectionScheme::Hybrid => "hybrid",
    };
    if time {
        let t = match options.time_scheme {
            TimeScheme::BackwardEuler => "backward-euler",
            TimeScheme::Bdf2 => "bdf2",
        };
        format!("{conv}+{t}")
    } else {
        conv.to_string()
    }
}

pub fn solve_1d(problem: &PerturbedProblem, n: usize) -> Result<ReferenceSolution> {
    solve_1d_with(problem, n, &FdOptions::default())
}

pub fn solve_1d_with(problem: &PerturbedProblem, n: usize, options: &FdOptions) -> Result<ReferenceSolution> {
    expect_kind(problem, ProblemKind::Steady1D)?;
    let layers = infer_layers(problem)?;
    let mesh = shishkin_mesh(n, problem.epsilon, layer_on(&layers, Axis::X))?;
    let x = &mesh.nodes;
    let s = canonical_flip(problem);
    let pts: Vec<Point> = x.iter().map(|&xi| [xi, 0.0]).collect();
    let b: Vec<f64> = pts.iter().map(|p| s * problem.convection[0](p)).collect();
    let z: Vec<f64> = pts.iter().map(|p| s * (problem.reaction)(p)).collect();
    let r: Vec<f64> = pts.iter().map(|p| s * (problem.forcing)(p)).collect();
    let mut rows = assemble_rows(x, problem.epsilon, &b, &z, &r, options.scheme, true);
    rows.rhs[0] = problem.boundary_value(Face::Left, &pts[0])?;
    rows.rhs[n] = problem.boundary_value(Face::Right, &pts[n])?;
    let values = thomas(&rows.lower, &rows.diag, &rows.upper, &rows.rhs)?;
    check_finite(&values)?;
    Ok(ReferenceSolution {
        kind: problem.kind,
        xs: mesh.nodes,
        ys: vec![0.0],
        values,
        descriptor: problem.name.clone(),
        mesh: MeshInfo {
            nx: n,
            ny: 0,
            scheme: scheme_name(options, false),
        },
    })
}

pub fn solve_time(problem: &PerturbedProblem, nx: usize, nt: usize) -> Result<ReferenceSolution> {
    solve_time_with(problem, nx, nt, &FdOptions::default())
}

pub fn solve_time_with(
    problem: &PerturbedProblem,
    nx: usize,
    nt: usize,
    options: &FdOptions,
) -> Result<ReferenceSolution> {
    expect_kind(problem, ProblemKind::Time1D)?;
    if nt == 0 {
        return Err(Error::InvalidArgument("need at least one time step".into()));
    }
    let layers = infer_layers(problem)?;
    let mesh = shishkin_mesh(nx, problem.epsilon, layer_on(&layers, Axis::X))?;
    let x = &mesh.nodes;
    let dt = 1.0 / nt as f64;
    let init = problem
        .initial
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("time problem without initial data".into()))?;
    let mut u: Vec<f64> = x.iter().map(|&xi| init(&[xi, 0.0])).collect();
    u[0] = problem.boundary_value(Face::Left, &[0.0, 0.0])?;
    u[nx] = problem.boundary_value(Face::Right, &[1.0, 0.0])?;
    let mut values = Vec::with_capacity((nt + 1) * (nx + 1));
    values.extend_from_slice(&u);
    let mut prev: Option<Vec<f64>> = None;
    for step in 1..=nt {
        let t = step as f64 * dt;
        let pts: Vec<Point> = x.iter().map(|&xi| [xi, t]).collect();
        let b: Vec<f64> = pts.iter().map(|p| problem.convection[0](p)).collect();
        let bdf2 = options.time_scheme == TimeScheme::Bdf2 && prev.is_some();
        let (a, hist): (f64, Vec<f64>) = match (&prev, bdf2) {
            (Some(old), true) => (
                1.5,
                u.iter().zip(old).map(|(un, uo)| (2.0 * un - 0.5 * uo) / dt).collect(),
            ),
            _ => (1.0, u.iter().map(|un| un / dt).collect()),
        };
        let z: Vec<f64> = pts.iter().map(|p| (problem.reaction)(p) + a / dt).collect();
        let r: Vec<f64> = pts
            .iter()
            .zip(&hist)
            .map(|(p, h)| (problem.forcing)(p) + h)
            .collect();
        let mut rows = assemble_rows(x, problem.epsilon, &b, &z, &r, options.scheme, true);
        rows.rhs[0] = problem.boundary_value(Face::Left, &pts[0])?;
        rows.rhs[nx] = problem.boundary_value(Face::Right, &pts[nx])?;
        let next = thomas(&rows.lower, &rows.diag, &rows.upper, &rows.rhs)?;
        check_finite(&next)?;
        values.extend_from_slice(&next);
        prev = Some(std::mem::replace(&mut u, next));
    }
    Ok(ReferenceSolution {
        kind: problem.kind,
        xs: mesh.nodes,
        ys: (0..=nt).map(|k| k as f64 * dt).collect(),
        values,
        descriptor: problem.name.clone(),
        mesh: MeshInfo {
            nx,
            ny: nt,
            scheme: scheme_name(options, true),
        },
    })
}

/// Five-point operator on a tensor grid, stored per node.
struct Stencil {
    nx: usize,
    ny: usize,
    c: Vec<f64>,
    w: Vec<f64>,
    e: Vec<f64>,
    s: Vec<f64>,
    n: Vec<f64>,
    r: Vec<f64>,
}

impl Stencil {
    fn residual_scaled(&self, u: &[f64]) -> f64 {
        let row = self.nx + 1;
        let mut worst = 0.0f64;
        for j in 1..self.ny {
            for i in 1..self.nx {
                let k = j * row + i;
                let au = self.c[k] * u[k]
                    + self.w[k] * u[k - 1]
                    + self.e[k] * u[k + 1]
                    + self.s[k] * u[k - row]
                    + self.n[k] * u[k + row];
                worst = worst.max(((self.r[k] - au) / self.c[k]).abs());
            }
        }
        worst
    }
}

/// Axis order for line sweeps, following the flow.
fn sweep_order(count: usize, b: f64) -> Vec<usize> {
    let mut v: Vec<usize> = (1..count).collect();
    if b < 0.0 {
        v.reverse();
    }
    v
}

pub fn solve_2d(problem: &PerturbedProblem, n: usize) -> Result<ReferenceSolution> {
    solve_2d_with(problem, n, &FdOptions::default())
}

/// Steady 2D solve by alternating-direction line over-relaxation.
///
/// Corners take the data of the `x = 0` and `x = 1` faces. Upwind rows are
/// first-order (no midpoint averaging) in 2D.
pub fn solve_2d_with(problem: &PerturbedProblem, n: usize, options: &FdOptions) -> Result<ReferenceSolution> {
    expect_kind(problem, ProblemKind::Steady2D)?;
    let layers = infer_layers(problem)?;
    let eps = problem.epsilon;
    let xm = shishkin_mesh(n, eps, layer_on(&layers, Axis::X))?;
    let ym = shishkin_mesh(n, eps, layer_on(&layers, Axis::Y))?;
    let (xs, ys) = (&xm.nodes, &ym.nodes);
    let row = n + 1;
    let total = row * row;
    let flip = canonical_flip(problem);
    let mut st = Stencil {
        nx: n,
        ny: n,
        c: vec![1.0; total],
        w: vec![0.0; total],
        e: vec![0.0; total],
        s: vec![0.0; total],
        n: vec![0.0; total],
        r: vec![0.0; total],
    };
    let mut u = vec![0.0; total];
    for j in 0..=n {
        for i in 0..=n {
            let k = j * row + i;
            let p = [xs[i], ys[j]];
            let face = if i == 0 {
                Some(Face::Left)
            } else if i == n {
                Some(Face::Right)
            } else if j == 0 {
                Some(Face::Bottom)
            } else if j == n {
                Some(Face::Top)
            } else {
                None
            };
            if let Some(f) = face {
                u[k] = problem.boundary_value(f, &p)?;
                st.r[k] = u[k];
            }
        }
    }
    // one-dimensional rows along each axis, at every interior node
    let mut bx_sign = 0.0;
    let mut by_sign = 0.0;
    for j in 1..n {
        let pts: Vec<Point> = xs.iter().map(|&x| [x, ys[j]]).collect();
        let b: Vec<f64> = pts.iter().map(|p| flip * problem.convection[0](p)).collect();
        let zero = vec![0.0; row];
        let rx = assemble_rows(xs, eps, &b, &zero, &zero, options.scheme, false);
        for i in 1..n {
            let k = j * row + i;
            st.w[k] = rx.lower[i];
            st.e[k] = rx.upper[i];
            st.c[k] = rx.diag[i];
            let p = pts[i];
            st.c[k] += flip * (problem.reaction)(&p);
            st.r[k] = flip * (problem.forcing)(&p);
            bx_sign += b[i];
        }
    }
    for i in 1..n {
        let pts: Vec<Point> = ys.iter().map(|&y| [xs[i], y]).collect();
        let b: Vec<f64> = pts.iter().map(|p| flip * problem.convection[1](p)).collect();
        let zero = vec![0.0; row];
        let ry = assemble_rows(ys, eps, &b, &zero, &zero, options.scheme, false);
        for j in 1..n {
            let k = j * row + i;
            st.s[k] = ry.lower[j];
            st.n[k] = ry.upper[j];
            st.c[k] += ry.diag[j];
            by_sign += b[j];
        }
    }
    let omega = options.sor_omega;
    if !(omega > 0.0 && omega < 2.0) {
        return Err(Error::config("sor_omega", "must lie in (0, 2)"));
    }
    let x_lines = sweep_order(n, by_sign);
    let y_lines = sweep_order(n, bx_sign);
    let m = n - 1;
    let (mut lo, mut di, mut up, mut rhs) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut residual = st.residual_scaled(&u);
    let mut iterations = 0;
    while residual > options.tolerance {
        if iterations >= options.sor_max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
        for &j in &x_lines {
            for i in 1..n {
                let k = j * row + i;
                let q = i - 1;
                lo[q] = st.w[k];
                di[q] = st.c[k];
                up[q] = st.e[k];
                rhs[q] = st.r[k] - st.s[k] * u[k - row] - st.n[k] * u[k + row];
            }
            rhs[0] -= st.w[j * row + 1] * u[j * row];
            rhs[m - 1] -= st.e[j * row + n - 1] * u[j * row + n];
            let sol = thomas(&lo, &di, &up, &rhs)?;
            for i in 1..n {
                let k = j * row + i;
                u[k] += omega * (sol[i - 1] - u[k]);
            }
        }
        for &i in &y_lines {
            for j in 1..n {
                let k = j * row + i;
                let q = j - 1;
                lo[q] = st.s[k];
                di[q] = st.c[k];
                up[q] = st.n[k];
                rhs[q] = st.r[k] - st.w[k] * u[k - 1] - st.e[k] * u[k + 1];
            }
            rhs[0] -= st.s[row + i] * u[i];
            rhs[m - 1] -= st.n[(n - 1) * row + i] * u[n * row + i];
            let sol = thomas(&lo, &di, &up, &rhs)?;
            for j in 1..n {
                let k = j * row + i;
                u[k] += omega * (sol[j - 1] - u[k]);
            }
        }
        iterations += 1;
        residual = st.residual_scaled(&u);
        if !residual.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }
    }
    log::debug!("2D relaxation converged in {iterations} sweeps, residual {residual:e}");
    Ok(ReferenceSolution {
        kind: problem.kind,
        xs: xm.nodes,
        ys: ym.nodes,
        values: u,
        descriptor: problem.name.clone(),
        mesh: MeshInfo {
            nx: n,
            ny: n,
            scheme: scheme_name(options, false),
        },
    })
}

/// Dispatches on the problem kind. Time problems use `n` cells in both
/// space and time.
pub fn solve_reference(problem: &PerturbedProblem, n: usize, options: &FdOptions) -> Result<ReferenceSolution> {
    match problem.kind {
        ProblemKind::Steady1D => solve_1d_with(problem, n, options),
        ProblemKind::Steady2D => solve_2d_with(problem, n, options),
        ProblemKind::Time1D => solve_time_with(problem, n, n, options),
    }
}

/// Index `i` with `xs[i] <= v <= xs[i+1]`, clamped to the grid.
fn bracket(xs: &[f64], v: f64) -> (usize, f64) {
    if xs.len() == 1 {
        return (0, 0.0);
    }
    let i = xs.partition_point(|&x| x <= v).clamp(1, xs.len() - 1) - 1;
    let t = ((v - xs[i]) / (xs[i + 1] - xs[i])).clamp(0.0, 1.0);
    (i, t)
}

fn second_name(kind: ProblemKind) -> Option<&'static str> {
    match kind {
        ProblemKind::Steady1D => None,
        ProblemKind::Steady2D => Some("y"),
        ProblemKind::Time1D => Some("t"),
    }
}

impl ReferenceSolution {
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    /// Linear interpolation in 1D, bilinear otherwise.
    pub fn value_at(&self, p: &Point) -> f64 {
        let (i, tx) = bracket(&self.xs, p[0]);
        if self.ys.len() == 1 {
            return (1.0 - tx) * self.node(i, 0) + tx * self.node(i + 1, 0);
        }
        let (j, ty) = bracket(&self.ys, p[1]);
        let lower = (1.0 - tx) * self.node(i, j) + tx * self.node(i + 1, j);
        let upper = (1.0 - tx) * self.node(i, j + 1) + tx * self.node(i + 1, j + 1);
        (1.0 - ty) * lower + ty * upper
    }

    pub fn values_at(&self, points: &[Point]) -> Vec<f64> {
        points.iter().map(|p| self.value_at(p)).collect()
    }

    /// Writes the grid as CSV with columns `x[,y|t],u_ref`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        match second_name(self.kind) {
            Some(s) => w.write_record(["x", s, "u_ref"])?,
            None => w.write_record(["x", "u_ref"])?,
        }
        for (j, y) in self.ys.iter().enumerate() {
            for (i, x) in self.xs.iter().enumerate() {
                let v = self.node(i, j).to_string();
                match second_name(self.kind) {
                    Some(_) => w.write_record([x.to_string(), y.to_string(), v])?,
                    None => w.write_record([x.to_string(), v])?,
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a grid written by [`Self::write_csv`] or a solution grid dump
    /// that carries a `u_ref` column.
    pub fn read_csv(path: &Path, kind: ProblemKind) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("{}: missing column `{name}`", path.display())))
        };
        let cx = col("x")?;
        let cy = second_name(kind).map(&col).transpose()?;
        let cu = col("u_ref")?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number in row {rows:?}", rows = rec.position())))
            };
            rows.push((num(cx)?, cy.map(&num).transpose()?.unwrap_or(0.0), num(cu)?));
        }
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for &(x, y, _) in &rows {
            if ys.last() != Some(&y) && !ys.contains(&y) {
                ys.push(y);
            }
            if ys.len() == 1 {
                xs.push(x);
            }
        }
        if xs.is_empty() || xs.len() * ys.len() != rows.len() {
            return Err(Error::Parse(format!("{}: not a full tensor grid", path.display())));
        }
        for (k, &(x, y, _)) in rows.iter().enumerate() {
            if x != xs[k % xs.len()] || y != ys[k / xs.len()] {
                return Err(Error::Parse(format!(
                    "{}: row {k} out of grid order",
                    path.display()
                )));
            }
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse(format!("{}: coordinates not increasing", path.display())));
        }
        let values: Vec<f64> = rows.iter().map(|r| r.2).collect();
        check_finite(&values)?;
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        Ok(ReferenceSolution {
            kind,
            xs,
            ys,
            values,
            descriptor: path.display().to_string(),
            mesh: MeshInfo {
                nx,
                ny,
                scheme: "imported".into(),
            },
        })
    }
}
