//! Scalar-field networks with exact input derivatives.
//!
//! A network maps a point of the unit interval or square to a scalar. Besides
//! the value we need the first partials and the pure second partials with
//! respect to the inputs, because every residual in this crate is built from
//! `u`, `u_x`, `u_y`/`u_t`, `u_xx` and `u_yy`. Mixed partials are never needed.
//!
//! Three evaluation paths live here:
//!
//! - [`eval_jet`]: per-point forward propagation of value, gradient and
//!   diagonal Hessian, written as plain loops.
//! - [`batch`]: the same propagation for many points at once, organised as
//!   matrix products, together with a hand-written reverse pass that yields
//!   parameter gradients of any loss that is a function of the jets.
//! - [`tape`]: a scalar reverse-mode tape for general loss functionals, used
//!   by [`loss_param_gradient`].

pub mod batch;
pub mod tape;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tape::{loss_param_gradient, JetVar, Tape, Var};

/// A point of the unit domain. One-dimensional problems use `p[0]` and leave
/// `p[1] = 0`; time-dependent problems store `(x, t)`.
pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Value and the first three derivatives at `z`.
    #[inline]
    pub fn derivatives(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s);
                [s, s1, s2, s3]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                let t3 = t1 * (6.0 * t * t - 2.0);
                [t, t1, t2, t3]
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config("activation", format!("unknown activation `{other}`"))),
        }
    }
}

/// Value, gradient and pure second partials of a scalar field at one point.
///
/// Components beyond the field's input dimension are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub grad: [f64; 2],
    pub diag_hess: [f64; 2],
}

impl FieldJet {
    pub fn constant(value: f64) -> Self {
        FieldJet {
            value,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad.iter().all(|g| g.is_finite())
            && self.diag_hess.iter().all(|h| h.is_finite())
    }

    /// Linear combination `a * self + b * other`, channel by channel.
    pub fn combine(&self, a: f64, other: &FieldJet, b: f64) -> FieldJet {
        FieldJet {
            value: a * self.value + b * other.value,
            grad: [
                a * self.grad[0] + b * other.grad[0],
                a * self.grad[1] + b * other.grad[1],
            ],
            diag_hess: [
                a * self.diag_hess[0] + b * other.diag_hess[0],
                a * self.diag_hess[1] + b * other.diag_hess[1],
            ],
        }
    }
}

/// Anything that can be evaluated to a [`FieldJet`] at a point.
///
/// Implementations must be deterministic: the same point and the same state
/// give bit-identical jets.
pub trait FieldEvaluator {
    fn input_dim(&self) -> usize;

    fn jet(&self, x: &Point) -> FieldJet;

    fn value(&self, x: &Point) -> f64 {
        self.jet(x).value
    }

    fn values(&self, points: &[Point]) -> Vec<f64> {
        points.iter().map(|p| self.value(p)).collect()
    }
}

/// Closed-form field, used for analytic solutions and test doubles.
pub struct ClosedForm<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Point) -> FieldJet> ClosedForm<F> {
    pub fn new(dim: usize, f: F) -> Self {
        ClosedForm { dim, f }
    }
}

impl<F: Fn(&Point) -> FieldJet> FieldEvaluator for ClosedForm<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: &Point) -> FieldJet {
        (self.f)(x)
    }
}

/// Weights and biases of a fully connected network with scalar output.
///
/// Parameters are stored in one flat buffer: for each layer the weight matrix
/// (row-major, `out x in`) followed by the bias vector. Hidden layers apply the
/// activation, the output layer is affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    sizes: Vec<usize>,
    activation: Activation,
    data: Vec<f64>,
}

/// Gradient with the same layout as [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::InvalidLayout(
            "need an input width, at least one hidden layer and an output width".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidLayout("layer widths must be positive".into()));
    }
    if !(1..=2).contains(&sizes[0]) {
        return Err(Error::InvalidLayout(format!(
            "input width must be 1 or 2, got {}",
            sizes[0]
        )));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::InvalidLayout(format!(
            "output width must be 1, got {}",
            sizes.last().unwrap()
        )));
    }
    Ok(())
}

fn layer_offsets(sizes: &[usize], layer: usize) -> (usize, usize, usize) {
    let mut off = 0;
    for l in 0..layer {
        off += sizes[l + 1] * sizes[l] + sizes[l + 1];
    }
    let (fan_in, fan_out) = (sizes[layer], sizes[layer + 1]);
    (off, off + fan_out * fan_in, fan_out)
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

macro_rules! layer_views {
    () => {
        pub fn num_layers(&self) -> usize {
            self.sizes.len() - 1
        }

        pub fn layer_sizes(&self) -> &[usize] {
            &self.sizes
        }

        pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
            let (w, b, out) = layer_offsets(&self.sizes, layer);
            ArrayView2::from_shape((out, self.sizes[layer]), &self.data[w..b]).unwrap()
        }

        pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
            let (_, b, out) = layer_offsets(&self.sizes, layer);
            ArrayView1::from(&self.data[b..b + out])
        }

        pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
            let (w, b, out) = layer_offsets(&self.sizes, layer);
            let fan_in = self.sizes[layer];
            ArrayViewMut2::from_shape((out, fan_in), &mut self.data[w..b]).unwrap()
        }

        pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
            let (_, b, out) = layer_offsets(&self.sizes, layer);
            ArrayViewMut1::from(&mut self.data[b..b + out])
        }

        pub fn as_slice(&self) -> &[f64] {
            &self.data
        }

        pub fn as_mut_slice(&mut self) -> &mut [f64] {
            &mut self.data
        }
    };
}

impl MlpParams {
    /// All-zero parameters for a validated layout.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(MlpParams {
            sizes: sizes.to_vec(),
            activation,
            data: vec![0.0; param_count(sizes)],
        })
    }

    /// Rebuild from a flat parameter buffer, e.g. after deserialising.
    pub fn from_flat(sizes: &[usize], activation: Activation, data: Vec<f64>) -> Result<Self> {
        validate_sizes(sizes)?;
        if data.len() != param_count(sizes) {
            return Err(Error::LengthMismatch(data.len(), param_count(sizes)));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(MlpParams {
            sizes: sizes.to_vec(),
            activation,
            data,
        })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn zero_grad(&self) -> ParamGrad {
        ParamGrad {
            sizes: self.sizes.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    layer_views!();
}

impl ParamGrad {
    layer_views!();

    pub fn add_assign(&mut self, other: &ParamGrad) {
        debug_assert_eq!(self.sizes, other.sizes);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Glorot-uniform weights, zero biases, reproducible from `seed`.
pub fn init_mlp(sizes: &[usize], activation: Activation, seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(sizes, activation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in 0..params.num_layers() {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in params.weight_mut(l).iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

/// Value, gradient and diagonal Hessian of the network at `x`.
pub fn eval_jet(params: &MlpParams, x: &Point) -> FieldJet {
    let dim = params.input_dim();
    let mut a: Vec<f64> = x[..dim].to_vec();
    // da[k][i] = d a_i / d x_k, dda[k][i] = d^2 a_i / d x_k^2
    let mut da: Vec<Vec<f64>> = (0..dim)
        .map(|k| (0..dim).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut dda: Vec<Vec<f64>> = vec![vec![0.0; dim]; dim];

    let last = params.num_layers() - 1;
    for l in 0..=last {
        let w = params.weight(l);
        let b = params.bias(l);
        let out = w.nrows();
        let mut z = vec![0.0; out];
        let mut dz = vec![vec![0.0; out]; dim];
        let mut ddz = vec![vec![0.0; out]; dim];
        for r in 0..out {
            let row = w.row(r);
            let mut acc = b[r];
            for (wi, ai) in row.iter().zip(&a) {
                acc += wi * ai;
            }
            z[r] = acc;
            for k in 0..dim {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for (i, wi) in row.iter().enumerate() {
                    d1 += wi * da[k][i];
                    d2 += wi * dda[k][i];
                }
                dz[k][r] = d1;
                ddz[k][r] = d2;
            }
        }
        if l == last {
            let mut jet = FieldJet::constant(z[0]);
            for k in 0..dim {
                jet.grad[k] = dz[k][0];
                jet.diag_hess[k] = ddz[k][0];
            }
            return jet;
        }
        for r in 0..out {
            let [s0, s1, s2, _] = params.activation.derivatives(z[r]);
            for k in 0..dim {
                let zk = dz[k][r];
                dz[k][r] = s1 * zk;
                ddz[k][r] = s2 * zk * zk + s1 * ddz[k][r];
            }
            z[r] = s0;
        }
        a = z;
        da = dz;
        dda = ddz;
    }
    unreachable!("network has at least one layer")
}

impl FieldEvaluator for MlpParams {
    fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    fn jet(&self, x: &Point) -> FieldJet {
        eval_jet(self, x)
    }

    fn values(&self, points: &[Point]) -> Vec<f64> {
        batch::values(self, points)
    }
}
