//! Boundary-layer inference and the composite model
//! `u = u0 + sum_i u_i * exp(-alpha_i)`.
//!
//! Layer locations follow from the sign of the convection coefficient once the
//! equation is written as `-eps*Lap(u) + b.grad(u) + c*u = f`: positive `b`
//! pushes the layer to the outflow side `x = 1`, negative `b` to `x = 0`, and a
//! vanishing component gives no layer on that axis. The decay rate is
//! `|b| / eps` evaluated on the layer edge.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffnet::{batch, init_mlp, Activation, FieldEvaluator, FieldJet, MlpParams, Point};
use crate::error::{Error, Result};
use crate::problems::{PerturbedProblem, ProblemKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLayerSpec {
    pub axis: Axis,
    pub side: Side,
    pub coeff: f64,
}

impl BoundaryLayerSpec {
    /// Coordinate of the layer boundary along `axis`.
    pub fn location(&self) -> f64 {
        match self.side {
            Side::Left => 0.0,
            Side::Right => 1.0,
        }
    }

    pub fn distance(&self, p: &Point) -> f64 {
        let s = p[self.axis.index()];
        match self.side {
            Side::Left => s,
            Side::Right => 1.0 - s,
        }
    }
}

impl fmt::Display for BoundaryLayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.axis {
            Axis::X => "x",
            Axis::Y => "y",
        };
        write!(f, "{name}={} (rate {})", self.location(), self.coeff)
    }
}

/// Exponents above this give `exp(-alpha) = 0` in 64-bit arithmetic.
pub const ALPHA_CLAMP: f64 = 745.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFactor {
    pub spec: BoundaryLayerSpec,
    pub epsilon: f64,
}

impl ExponentialFactor {
    pub fn alpha(&self, p: &Point) -> f64 {
        self.spec.coeff * self.spec.distance(p) / self.epsilon
    }

    pub fn value(&self, p: &Point) -> f64 {
        let a = self.alpha(p);
        if a > ALPHA_CLAMP {
            0.0
        } else {
            (-a).exp()
        }
    }

    /// Value and exact derivatives of `exp(-alpha)`.
    pub fn jet(&self, p: &Point) -> FieldJet {
        let e = self.value(p);
        let mut j = FieldJet::constant(e);
        if e == 0.0 {
            return j;
        }
        let rate = self.spec.coeff / self.epsilon;
        let k = self.spec.axis.index();
        j.grad[k] = match self.spec.side {
            Side::Right => rate * e,
            Side::Left => -rate * e,
        };
        j.diag_hess[k] = rate * rate * e;
        j
    }
}

pub fn build_factor(spec: BoundaryLayerSpec, epsilon: f64) -> ExponentialFactor {
    ExponentialFactor { spec, epsilon }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pinn,
    Gkpinn,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pinn => "pinn",
            Mode::Gkpinn => "gkpinn",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pinn" => Ok(Mode::Pinn),
            "gkpinn" => Ok(Mode::Gkpinn),
            _ => Err(Error::Parse(format!("unknown mode '{s}' (pinn or gkpinn)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeModel {
    pub smooth: MlpParams,
    pub layer_terms: Vec<(MlpParams, ExponentialFactor)>,
}

impl CompositeModel {
    pub fn new(smooth: MlpParams, layer_terms: Vec<(MlpParams, ExponentialFactor)>) -> Result<Self> {
        let d = smooth.input_dim();
        if let Some((net, _)) = layer_terms.iter().find(|(n, _)| n.input_dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: net.input_dim(),
            });
        }
        Ok(CompositeModel { smooth, layer_terms })
    }

    pub fn mode(&self) -> Mode {
        if self.layer_terms.is_empty() {
            Mode::Pinn
        } else {
            Mode::Gkpinn
        }
    }

    /// Member networks, smooth network first.
    pub fn networks(&self) -> Vec<&MlpParams> {
        std::iter::once(&self.smooth)
            .chain(self.layer_terms.iter().map(|(n, _)| n))
            .collect()
    }

    pub fn networks_mut(&mut self) -> Vec<&mut MlpParams> {
        std::iter::once(&mut self.smooth)
            .chain(self.layer_terms.iter_mut().map(|(n, _)| n))
            .collect()
    }

    pub fn factors(&self) -> Vec<ExponentialFactor> {
        self.layer_terms.iter().map(|(_, f)| *f).collect()
    }

    pub fn num_params(&self) -> usize {
        self.networks().iter().map(|n| n.num_params()).sum()
    }
}

/// Product rule for `u * e`.
pub fn product_jet(u: &FieldJet, e: &FieldJet) -> FieldJet {
    let mut out = FieldJet::constant(u.value * e.value);
    for k in 0..2 {
        out.grad[k] = u.grad[k] * e.value + u.value * e.grad[k];
        out.diag_hess[k] =
            u.diag_hess[k] * e.value + 2.0 * u.grad[k] * e.grad[k] + u.value * e.diag_hess[k];
    }
    out
}

pub fn composite_jet(model: &CompositeModel, x: &Point) -> FieldJet {
    let mut j = model.smooth.jet(x);
    for (net, factor) in &model.layer_terms {
        let e = factor.jet(x);
        if e.value == 0.0 {
            continue;
        }
        let t = product_jet(&net.jet(x), &e);
        j = j.combine(1.0, &t, 1.0);
    }
    j
}

impl FieldEvaluator for CompositeModel {
    fn input_dim(&self) -> usize {
        self.smooth.input_dim()
    }

    fn jet(&self, x: &Point) -> FieldJet {
        composite_jet(self, x)
    }

    fn values(&self, points: &[Point]) -> Vec<f64> {
        let mut out = batch::values(&self.smooth, points);
        for (net, factor) in &self.layer_terms {
            let (idx, sub): (Vec<usize>, Vec<Point>) = points
                .iter()
                .enumerate()
                .filter(|(_, p)| factor.value(p) != 0.0)
                .map(|(i, p)| (i, *p))
                .unzip();
            if sub.is_empty() {
                continue;
            }
            for (i, v) in idx.into_iter().zip(batch::values(net, &sub)) {
                out[i] += v * factor.value(&points[i]);
            }
        }
        out
    }
}

const PROBE: usize = 101;

fn probe_points(kind: ProblemKind) -> Vec<Point> {
    let s = |i: usize| i as f64 / (PROBE - 1) as f64;
    match kind {
        ProblemKind::Steady1D => (0..PROBE).map(|i| [s(i), 0.0]).collect(),
        _ => (0..PROBE)
            .flat_map(|j| (0..PROBE).map(move |i| [s(i), s(j)]))
            .collect(),
    }
}

/// Point on the layer edge where the rate coefficient is read.
fn edge_point(kind: ProblemKind, axis: Axis, side: Side) -> Point {
    let at = match side {
        Side::Left => 0.0,
        Side::Right => 1.0,
    };
    let mid = if kind == ProblemKind::Steady1D { 0.0 } else { 0.5 };
    match axis {
        Axis::X => [at, mid],
        Axis::Y => [mid, at],
    }
}

pub fn infer_layers(problem: &PerturbedProblem) -> Result<Vec<BoundaryLayerSpec>> {
    if problem.kind == ProblemKind::Time1D && problem.diffusion_sign > 0.0 {
        return Err(Error::UnsupportedProblem(
            "time problem with anti-diffusive sign is ill-posed forward in time".into(),
        ));
    }
    // Canonical form has -eps on the diffusion term.
    let flip = if problem.diffusion_sign > 0.0 { -1.0 } else { 1.0 };
    let axes: &[Axis] = match problem.kind {
        ProblemKind::Steady2D => &[Axis::X, Axis::Y],
        _ => &[Axis::X],
    };
    let probe = probe_points(problem.kind);
    let mut layers = Vec::new();
    for &axis in axes {
        let (mut pos, mut neg) = (false, false);
        for p in &probe {
            let b = flip * problem.convection_at(p)[axis.index()];
            if !b.is_finite() {
                return Err(Error::NonFinite(format!("convection coefficient at {p:?}")));
            }
            pos |= b > 0.0;
            neg |= b < 0.0;
        }
        let side = match (pos, neg) {
            (true, true) => {
                return Err(Error::UnsupportedProblem(format!(
                    "convection component {axis:?} changes sign (turning point)"
                )))
            }
            (false, false) => continue,
            (true, false) => Side::Right,
            (false, true) => Side::Left,
        };
        let edge = edge_point(problem.kind, axis, side);
        let coeff = problem.convection_at(&edge)[axis.index()].abs();
        if coeff <= 0.0 {
            return Err(Error::UnsupportedProblem(format!(
                "convection vanishes on the layer edge {edge:?}"
            )));
        }
        layers.push(BoundaryLayerSpec { axis, side, coeff });
    }
    Ok(layers)
}

/// Network layout `[dim, hidden..., 1]`.
pub fn layer_sizes(problem: &PerturbedProblem, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![problem.dim()];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

pub fn build_model(
    problem: &PerturbedProblem,
    hidden: &[usize],
    activation: Activation,
    seed: u64,
    mode: Mode,
) -> Result<CompositeModel> {
    let sizes = layer_sizes(problem, hidden);
    let smooth = init_mlp(&sizes, activation, seed)?;
    let terms = match mode {
        Mode::Pinn => Vec::new(),
        Mode::Gkpinn => infer_layers(problem)?
            .into_iter()
            .enumerate()
            .map(|(i, spec)| {
                let net = init_mlp(&sizes, activation, seed.wrapping_add(1 + i as u64))?;
                Ok((net, build_factor(spec, problem.epsilon)))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    CompositeModel::new(smooth, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_example;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn right_x(coeff: f64) -> BoundaryLayerSpec {
        BoundaryLayerSpec {
            axis: Axis::X,
            side: Side::Right,
            coeff,
        }
    }

    #[test]
    fn golden_layer_locations() {
        let expect: [&[(Axis, Side)]; 8] = [
            &[(Axis::X, Side::Right)],
            &[(Axis::X, Side::Right)],
            &[(Axis::X, Side::Left)],
            &[(Axis::X, Side::Right)],
            &[(Axis::Y, Side::Left)],
            &[(Axis::X, Side::Left), (Axis::Y, Side::Left)],
            &[(Axis::X, Side::Left)],
            &[(Axis::X, Side::Right)],
        ];
        for (i, want) in expect.iter().enumerate() {
            let p = builtin_example(i + 1, 1e-3).unwrap();
            let got: Vec<_> = infer_layers(&p)
                .unwrap()
                .iter()
                .map(|s| (s.axis, s.side))
                .collect();
            assert_eq!(&got, want, "example {}", i + 1);
        }
    }

    #[test]
    fn layer_coefficients() {
        let l1 = infer_layers(&builtin_example(1, 1e-3).unwrap()).unwrap();
        assert_eq!(l1, vec![right_x(1.0)]);
        let l3 = infer_layers(&builtin_example(3, 1e-3).unwrap()).unwrap();
        assert_eq!(l3[0].coeff, 1.0 + 1e-3);
        let l6 = infer_layers(&builtin_example(6, 1e-3).unwrap()).unwrap();
        assert!(l6.iter().all(|s| s.coeff == 1.0 && s.side == Side::Left));
    }

    #[test]
    fn no_convection_means_no_layers() {
        let mut p = builtin_example(4, 0.1).unwrap();
        p.convection = vec![Arc::new(|_: &Point| 0.0), Arc::new(|_: &Point| 0.0)];
        assert!(infer_layers(&p).unwrap().is_empty());
    }

    #[test]
    fn turning_point_is_rejected() {
        let mut p = builtin_example(1, 0.1).unwrap();
        p.convection = vec![Arc::new(|q: &Point| q[0] - 0.5)];
        assert!(matches!(infer_layers(&p), Err(Error::UnsupportedProblem(_))));
    }

    #[test]
    fn factor_values() {
        let f = build_factor(right_x(1.0), 1e-3);
        assert_eq!(f.value(&[1.0, 0.0]), 1.0);
        assert_eq!(f.alpha(&[1.0, 0.0]), 0.0);
        let v = f.value(&[0.999, 0.0]);
        assert!((v - (-1.0f64).exp()).abs() < 1e-12, "{v}");
        let tiny = build_factor(right_x(1.0), 1e-38);
        assert_eq!(tiny.value(&[0.5, 0.0]), 0.0);
        assert_eq!(tiny.jet(&[0.5, 0.0]), FieldJet::constant(0.0));
    }

    #[test]
    fn model_structure() {
        let p4 = builtin_example(4, 1e-3).unwrap();
        let m = build_model(&p4, &[8, 8], Activation::Tanh, 0, Mode::Gkpinn).unwrap();
        assert_eq!(m.layer_terms.len(), 1);
        assert_eq!(m.layer_terms[0].1.spec.side, Side::Right);
        let p6 = builtin_example(6, 1e-3).unwrap();
        let m = build_model(&p6, &[8, 8], Activation::Tanh, 0, Mode::Gkpinn).unwrap();
        assert_eq!(m.layer_terms.len(), 2);
        assert_ne!(m.layer_terms[0].0, m.layer_terms[1].0);
        for id in 1..=8 {
            let p = builtin_example(id, 1e-3).unwrap();
            let m = build_model(&p, &[8], Activation::Tanh, 3, Mode::Pinn).unwrap();
            assert!(m.layer_terms.is_empty());
            assert_eq!(m.mode(), Mode::Pinn);
        }
    }

    #[test]
    fn zero_layer_nets_leave_smooth_part() {
        let p = builtin_example(1, 0.1).unwrap();
        let mut m = build_model(&p, &[6, 6], Activation::Sigmoid, 2, Mode::Gkpinn).unwrap();
        m.layer_terms[0].0.as_mut_slice().fill(0.0);
        for x in [0.0, 0.4, 0.95, 1.0] {
            assert_eq!(composite_jet(&m, &[x, 0.0]), m.smooth.jet(&[x, 0.0]));
        }
    }

    #[test]
    fn constant_layer_net_gives_scaled_factor() {
        let p = builtin_example(1, 0.1).unwrap();
        let mut m = build_model(&p, &[4], Activation::Sigmoid, 2, Mode::Gkpinn).unwrap();
        m.smooth.as_mut_slice().fill(0.0);
        let net = &mut m.layer_terms[0].0;
        net.as_mut_slice().fill(0.0);
        net.bias_mut(1)[0] = 3.0;
        let f = m.layer_terms[0].1;
        for x in [0.2, 0.9, 1.0] {
            let v = composite_jet(&m, &[x, 0.0]).value;
            assert!((v - 3.0 * f.value(&[x, 0.0])).abs() < 1e-15);
        }
    }

    fn fd_check(m: &CompositeModel, dim: usize, x: Point) {
        let j = composite_jet(m, &x);
        let f = |q: Point| composite_jet(m, &q).value;
        for k in 0..dim {
            let shifted = |h: f64| {
                let mut q = x;
                q[k] += h;
                f(q)
            };
            let h1 = 1e-6;
            let g = (shifted(h1) - shifted(-h1)) / (2.0 * h1);
            let h2 = 1e-4;
            let hh = (shifted(h2) - 2.0 * j.value + shifted(-h2)) / (h2 * h2);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            assert!(rel(g, j.grad[k]) < 1e-4, "grad {k}: {g} vs {}", j.grad[k]);
            assert!(rel(hh, j.diag_hess[k]) < 1e-4, "hess {k}: {hh} vs {}", j.diag_hess[k]);
        }
    }

    #[test]
    fn composite_matches_finite_differences() {
        for id in 1..=8 {
            let p = builtin_example(id, 0.1).unwrap();
            let act = if p.dim() == 1 { Activation::Sigmoid } else { Activation::Tanh };
            let m = build_model(&p, &[10, 10], act, id as u64, Mode::Gkpinn).unwrap();
            for x in [[0.13, 0.71], [0.5, 0.5], [0.93, 0.07]] {
                let x = if p.dim() == 1 { [x[0], 0.0] } else { x };
                fd_check(&m, p.dim(), x);
            }
        }
    }

    #[test]
    fn empty_composite_is_bit_identical_to_smooth_net() {
        let p = builtin_example(5, 1e-3).unwrap();
        let m = build_model(&p, &[12, 12], Activation::Tanh, 9, Mode::Pinn).unwrap();
        let pts = [[0.1, 0.2], [0.7, 0.3]];
        for x in &pts {
            assert_eq!(composite_jet(&m, x), m.smooth.jet(x));
        }
        assert_eq!(m.values(&pts), batch::values(&m.smooth, &pts));
    }

    #[test]
    fn extreme_epsilon_jets_are_finite() {
        for id in 1..=8 {
            let p = builtin_example(id, 1e-38).unwrap();
            let act = if p.dim() == 1 { Activation::Sigmoid } else { Activation::Tanh };
            let m = build_model(&p, &[16, 16], act, 1, Mode::Gkpinn).unwrap();
            for i in 0..=20 {
                for j in 0..=20 {
                    let x = [i as f64 / 20.0, j as f64 / 20.0];
                    assert!(composite_jet(&m, &x).is_finite(), "example {id} at {x:?}");
                }
            }
        }
    }

    #[test]
    fn batched_values_match_pointwise() {
        let p = builtin_example(6, 0.01).unwrap();
        let m = build_model(&p, &[7, 7], Activation::Tanh, 4, Mode::Gkpinn).unwrap();
        let pts: Vec<Point> = (0..50)
            .map(|i| [(i as f64 * 0.37) % 1.0, (i as f64 * 0.11) % 1.0])
            .collect();
        let batched = m.values(&pts);
        for (p, v) in pts.iter().zip(batched) {
            assert!((composite_jet(&m, p).value - v).abs() < 1e-13);
        }
    }

    fn any_spec() -> impl Strategy<Value = BoundaryLayerSpec> {
        (prop::bool::ANY, prop::bool::ANY, 0.1f64..10.0).prop_map(|(ax, sd, coeff)| {
            BoundaryLayerSpec {
                axis: if ax { Axis::X } else { Axis::Y },
                side: if sd { Side::Left } else { Side::Right },
                coeff,
            }
        })
    }

    proptest! {
        #[test]
        fn factor_in_unit_interval_and_one_on_edge(
            spec in any_spec(),
            log_eps in -38.0f64..0.0,
            p in prop::array::uniform2(0.0f64..=1.0),
        ) {
            let f = build_factor(spec, 10f64.powf(log_eps));
            let v = f.value(&p);
            prop_assert!((0.0..=1.0).contains(&v));
            let mut on_edge = p;
            on_edge[spec.axis.index()] = spec.location();
            prop_assert_eq!(f.value(&on_edge), 1.0);
            prop_assert!(f.jet(&p).is_finite());
        }

        #[test]
        fn factor_decays_away_from_edge(
            spec in any_spec(),
            log_eps in -6.0f64..0.0,
            d1 in 0.0f64..1.0,
            d2 in 0.0f64..1.0,
        ) {
            let f = build_factor(spec, 10f64.powf(log_eps));
            let at = |d: f64| {
                let mut p = [0.5, 0.5];
                p[spec.axis.index()] = match spec.side { Side::Left => d, Side::Right => 1.0 - d };
                f.value(&p)
            };
            let (near, far) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assume!(far - near > 1e-9);
            if at(near) > 0.0 {
                prop_assert!(at(far) < at(near));
            } else {
                prop_assert_eq!(at(far), 0.0);
            }
        }
    }
}
