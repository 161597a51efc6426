//! Scalar reverse-mode tape.
//!
//! Used to differentiate loss functionals written as ordinary arithmetic on
//! network jets. The tape records every operation with its local partials; a
//! single reverse sweep then yields the derivative of the final scalar with
//! respect to every recorded input. Network internals are not put on the
//! tape: jets enter as leaves and their adjoints are pushed through the
//! networks by [`super::batch::backward`].

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::batch::{self, BatchJets, JetLayout};
use super::{MlpParams, ParamGrad, Point};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Node {
    parents: [(usize, f64); 2],
    arity: u8,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
    val: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, parents: [(usize, f64); 2], arity: u8) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, arity });
        nodes.len() - 1
    }

    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.push([(0, 0.0); 2], 0);
        Var { tape: self, idx, val }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of every node with respect to `out`.
    pub fn gradient(&self, out: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[out.idx] = 1.0;
        for i in (0..=out.idx).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for &(p, d) in &node.parents[..node.arity as usize] {
                adj[p] += a * d;
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.val
    }

    pub fn index(&self) -> usize {
        self.idx
    }

    fn unary(self, val: f64, d: f64) -> Var<'t> {
        let idx = self.tape.push([(self.idx, d), (0, 0.0)], 1);
        Var { tape: self.tape, idx, val }
    }

    fn binary(self, other: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        let idx = self.tape.push([(self.idx, da), (other.idx, db)], 2);
        Var { tape: self.tape, idx, val }
    }

    pub fn constant(&self, val: f64) -> Var<'t> {
        self.tape.var(val)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.val * self.val, 2.0 * self.val)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn sqrt(self) -> Var<'t> {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(self.val.powi(n), n as f64 * self.val.powi(n - 1))
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.val.sin(), self.val.cos())
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let q = self.val / o.val;
        self.binary(o, q, 1.0 / o.val, -q / o.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.val - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.val * c, c)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, v: Var<'t>) -> Var<'t> {
        v * self
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.val / c, 1.0 / c)
    }
}

/// A network jet whose entries are tape leaves.
#[derive(Clone, Copy)]
pub struct JetVar<'t> {
    pub value: Var<'t>,
    pub grad: [Var<'t>; 2],
    pub diag_hess: [Var<'t>; 2],
}

/// One block of jet queries: a network and the points it is evaluated at.
pub struct JetQuery<'a> {
    pub net: &'a MlpParams,
    pub points: &'a [Point],
}

/// Value and exact parameter gradients of a scalar loss built from network
/// jets.
///
/// `loss` receives, for every query, the jets at its points as tape variables
/// and returns the loss as a tape variable. Constants such as exponential
/// layer factors enter through [`Var::constant`] or scalar multiplication.
/// One gradient is returned per query, congruent to that query's network; a
/// network queried twice gets two partial gradients that the caller sums.
pub fn loss_param_gradient<F>(queries: &[JetQuery<'_>], loss: F) -> Result<(f64, Vec<ParamGrad>)>
where
    F: for<'t> Fn(&'t Tape, &[Vec<JetVar<'t>>]) -> Var<'t>,
{
    let tape = Tape::new();
    let mut forwards = Vec::with_capacity(queries.len());
    let mut leaves: Vec<Vec<JetVar<'_>>> = Vec::with_capacity(queries.len());
    for q in queries {
        let layout = JetLayout::full(q.net.input_dim());
        let (jets, cache) = batch::forward(q.net, q.points, layout);
        if !jets.is_finite() {
            return Err(Error::NonFinite("network jets".into()));
        }
        let vars = (0..jets.n)
            .map(|p| {
                let j = jets.jet(p);
                JetVar {
                    value: tape.var(j.value),
                    grad: [tape.var(j.grad[0]), tape.var(j.grad[1])],
                    diag_hess: [tape.var(j.diag_hess[0]), tape.var(j.diag_hess[1])],
                }
            })
            .collect();
        leaves.push(vars);
        forwards.push((layout, cache));
    }
    let out = loss(&tape, &leaves);
    if !out.value().is_finite() {
        return Err(Error::NonFinite("loss value".into()));
    }
    let adj = tape.gradient(out);
    let mut grads = Vec::with_capacity(queries.len());
    for ((q, (layout, cache)), vars) in queries.iter().zip(&forwards).zip(&leaves) {
        let mut bar = BatchJets::zeros(*layout, vars.len());
        let n = vars.len();
        for (p, v) in vars.iter().enumerate() {
            bar.data[p] = adj[v.value.index()];
            for k in 0..layout.dim() {
                if let Some(ch) = layout.first(k) {
                    bar.data[ch * n + p] = adj[v.grad[k].index()];
                }
                if let Some(ch) = layout.second(k) {
                    bar.data[ch * n + p] = adj[v.diag_hess[k].index()];
                }
            }
        }
        let mut g = q.net.zero_grad();
        batch::backward(q.net, cache, &bar, &mut g);
        if !g.is_finite() {
            return Err(Error::NonFinite("parameter gradient".into()));
        }
        grads.push(g);
    }
    Ok((out.value(), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{eval_jet, init_mlp, Activation};

    #[test]
    fn tape_basic_rules() {
        let t = Tape::new();
        let x = t.var(3.0);
        let y = t.var(2.0);
        let f = (x * y + x.square()) / y - x.exp() * 0.5;
        let g = t.gradient(f);
        // f = x + x^2/y - e^x/2
        assert!((g[x.index()] - (1.0 + 2.0 * 3.0 / 2.0 - 3f64.exp() / 2.0)).abs() < 1e-12);
        assert!((g[y.index()] - (-9.0 / 4.0)).abs() < 1e-12);
    }

    fn fd_check<F>(net: &MlpParams, pts: &[Point], scalar: F, tol: f64)
    where
        F: for<'t> Fn(&'t Tape, &[Vec<JetVar<'t>>]) -> Var<'t> + Copy,
    {
        let q = [JetQuery { net, points: pts }];
        let (_, grads) = loss_param_gradient(&q, scalar).unwrap();
        let eval = |p: &MlpParams| {
            let q = [JetQuery { net: p, points: pts }];
            loss_param_gradient(&q, scalar).unwrap().0
        };
        let h = 1e-6;
        for i in 0..net.num_params() {
            let mut pp = net.clone();
            pp.as_mut_slice()[i] += h;
            let mut pm = net.clone();
            pm.as_mut_slice()[i] -= h;
            let fd = (eval(&pp) - eval(&pm)) / (2.0 * h);
            let an = grads[0].as_slice()[i];
            assert!(
                (fd - an).abs() <= tol * an.abs().max(1e-2),
                "param {i}: fd {fd} vs {an}"
            );
        }
    }

    #[test]
    fn value_squared_gradient() {
        let net = init_mlp(&[1, 8, 8, 1], Activation::Sigmoid, 5).unwrap();
        fd_check(&net, &[[0.37, 0.0]], |_, j| j[0][0].value.square(), 1e-5);
    }

    #[test]
    fn hessian_squared_gradient() {
        let net = init_mlp(&[2, 8, 8, 1], Activation::Tanh, 6).unwrap();
        fd_check(&net, &[[0.2, 0.8]], |_, j| j[0][0].diag_hess[1].square(), 1e-4);
    }

    #[test]
    fn bias_unreachable_through_zero_multiplier_has_zero_gradient() {
        // Output bias only shifts the value, and the loss only sees u_x.
        let net = init_mlp(&[1, 6, 6, 1], Activation::Sigmoid, 1).unwrap();
        let pts = [[0.4, 0.0], [0.9, 0.0]];
        let q = [JetQuery { net: &net, points: &pts }];
        let (_, g) = loss_param_gradient(&q, |_, j| {
            j[0][0].grad[0].square() + j[0][1].value * 0.0
        })
        .unwrap();
        assert_eq!(g[0].bias(2)[0], 0.0);
    }

    #[test]
    fn leaves_carry_pointwise_jets() {
        let net = init_mlp(&[2, 5, 5, 1], Activation::Tanh, 2).unwrap();
        let pts = [[0.1, 0.2]];
        let q = [JetQuery { net: &net, points: &pts }];
        let (v, _) = loss_param_gradient(&q, |_, j| j[0][0].diag_hess[0] * 1.0).unwrap();
        assert!((v - eval_jet(&net, &pts[0]).diag_hess[0]).abs() < 1e-12);
    }
}
