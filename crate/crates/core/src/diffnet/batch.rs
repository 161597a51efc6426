//! Batched jet propagation and its reverse pass.
//!
//! For a batch of `n` points the activations of a layer are stored as a
//! `width x (C * n)` matrix whose column blocks are the jet channels: block 0
//! holds values, then one block per first partial, then one block per
//! requested pure second partial. Every affine layer acts on all channels with
//! a single matrix product; the bias only touches the value block.
//!
//! Through an activation `s` the channels transform as
//!
//! ```text
//! a    = s(z)
//! a'   = s'(z) z'
//! a''  = s''(z) z'^2 + s'(z) z''
//! ```
//!
//! and [`backward`] runs the adjoint of exactly these relations, so the
//! parameter gradient of any loss that depends on the output channels is
//! exact, including the terms reached only through `u_x` and `u_xx`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2};

use super::{FieldJet, MlpParams, ParamGrad, Point};

/// Which channels a batched pass carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetLayout {
    dim: usize,
    derivs: bool,
    second: [bool; 2],
}

impl JetLayout {
    pub fn value_only(dim: usize) -> Self {
        JetLayout {
            dim,
            derivs: false,
            second: [false; 2],
        }
    }

    /// Value, all first partials and all pure second partials.
    pub fn full(dim: usize) -> Self {
        Self::with_second(dim, [true, dim == 2])
    }

    /// Value, all first partials and the second partials flagged in `second`.
    pub fn with_second(dim: usize, second: [bool; 2]) -> Self {
        JetLayout {
            dim,
            derivs: true,
            second: [second[0], second[1] && dim == 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        if self.derivs {
            1 + self.dim + self.second.iter().filter(|&&s| s).count()
        } else {
            1
        }
    }

    pub fn first(&self, axis: usize) -> Option<usize> {
        (self.derivs && axis < self.dim).then_some(1 + axis)
    }

    pub fn second(&self, axis: usize) -> Option<usize> {
        if !self.derivs || axis >= self.dim || !self.second[axis] {
            return None;
        }
        let before = self.second[..axis].iter().filter(|&&s| s).count();
        Some(1 + self.dim + before)
    }
}

/// Channel-major jets of a batch: `data[ch * n + p]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchJets {
    pub layout: JetLayout,
    pub n: usize,
    pub data: Vec<f64>,
}

impl BatchJets {
    pub fn zeros(layout: JetLayout, n: usize) -> Self {
        BatchJets {
            layout,
            n,
            data: vec![0.0; layout.channels() * n],
        }
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.n..(ch + 1) * self.n]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        &mut self.data[ch * self.n..(ch + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        self.channel(0)
    }

    pub fn jet(&self, p: usize) -> FieldJet {
        let mut jet = FieldJet::constant(self.data[p]);
        for k in 0..self.layout.dim {
            if let Some(ch) = self.layout.first(k) {
                jet.grad[k] = self.data[ch * self.n + p];
            }
            if let Some(ch) = self.layout.second(k) {
                jet.diag_hess[k] = self.data[ch * self.n + p];
            }
        }
        jet
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Intermediate state of a forward pass, consumed by [`backward`].
pub struct ForwardCache {
    layout: JetLayout,
    n: usize,
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer, all channels.
    pre: Vec<Array2<f64>>,
    /// `s'`, `s''`, `s'''` at the value channel of each hidden layer.
    sens: Vec<[Array2<f64>; 3]>,
}

fn encode_inputs(points: &[Point], layout: JetLayout) -> Array2<f64> {
    let n = points.len();
    let dim = layout.dim;
    let mut a = Array2::zeros((dim, layout.channels() * n));
    for (p, x) in points.iter().enumerate() {
        for k in 0..dim {
            a[(k, p)] = x[k];
        }
    }
    for k in 0..dim {
        if let Some(ch) = layout.first(k) {
            a.slice_mut(s![k, ch * n..(ch + 1) * n]).fill(1.0);
        }
    }
    a
}

fn activate(
    z: &Array2<f64>,
    params: &MlpParams,
    layout: JetLayout,
    n: usize,
) -> (Array2<f64>, [Array2<f64>; 3]) {
    let (rows, cols) = z.dim();
    let act = params.activation();
    let mut out = Array2::zeros((rows, cols));
    let mut s1 = Array2::zeros((rows, n));
    let mut s2 = Array2::zeros((rows, n));
    let mut s3 = Array2::zeros((rows, n));
    let zs = z.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    let (s1s, s2s, s3s) = (
        s1.as_slice_mut().unwrap(),
        s2.as_slice_mut().unwrap(),
        s3.as_slice_mut().unwrap(),
    );
    for r in 0..rows {
        let zr = &zs[r * cols..(r + 1) * cols];
        let or = &mut os[r * cols..(r + 1) * cols];
        for p in 0..n {
            let [d0, d1, d2, d3] = act.derivatives(zr[p]);
            or[p] = d0;
            s1s[r * n + p] = d1;
            s2s[r * n + p] = d2;
            s3s[r * n + p] = d3;
        }
        for k in 0..layout.dim {
            let Some(c1) = layout.first(k) else { continue };
            let b1 = c1 * n;
            for p in 0..n {
                or[b1 + p] = s1s[r * n + p] * zr[b1 + p];
            }
            if let Some(c2) = layout.second(k) {
                let b2 = c2 * n;
                for p in 0..n {
                    let zk = zr[b1 + p];
                    or[b2 + p] = s2s[r * n + p] * zk * zk + s1s[r * n + p] * zr[b2 + p];
                }
            }
        }
    }
    (out, [s1, s2, s3])
}

/// Turns the adjoint of a hidden layer's output into the adjoint of its
/// pre-activation, in place.
fn activate_backward(
    bar: &mut Array2<f64>,
    z: &Array2<f64>,
    sens: &[Array2<f64>; 3],
    layout: JetLayout,
    n: usize,
) {
    let (rows, cols) = z.dim();
    let zs = z.as_slice().unwrap();
    let bs = bar.as_slice_mut().unwrap();
    let (s1, s2, s3) = (
        sens[0].as_slice().unwrap(),
        sens[1].as_slice().unwrap(),
        sens[2].as_slice().unwrap(),
    );
    for r in 0..rows {
        let zr = &zs[r * cols..(r + 1) * cols];
        let br = &mut bs[r * cols..(r + 1) * cols];
        let (s1r, s2r, s3r) = (
            &s1[r * n..(r + 1) * n],
            &s2[r * n..(r + 1) * n],
            &s3[r * n..(r + 1) * n],
        );
        // value channel accumulates contributions from every other channel,
        // so compute it before the derivative channels are overwritten
        for p in 0..n {
            let mut acc = br[p] * s1r[p];
            for k in 0..layout.dim {
                let Some(c1) = layout.first(k) else { continue };
                let zk = zr[c1 * n + p];
                acc += br[c1 * n + p] * s2r[p] * zk;
                if let Some(c2) = layout.second(k) {
                    acc += br[c2 * n + p] * (s3r[p] * zk * zk + s2r[p] * zr[c2 * n + p]);
                }
            }
            br[p] = acc;
        }
        for k in 0..layout.dim {
            let Some(c1) = layout.first(k) else { continue };
            match layout.second(k) {
                Some(c2) => {
                    for p in 0..n {
                        let zk = zr[c1 * n + p];
                        let b2 = br[c2 * n + p];
                        br[c1 * n + p] = br[c1 * n + p] * s1r[p] + 2.0 * b2 * s2r[p] * zk;
                        br[c2 * n + p] = b2 * s1r[p];
                    }
                }
                None => {
                    for p in 0..n {
                        br[c1 * n + p] *= s1r[p];
                    }
                }
            }
        }
    }
}

/// Jets of the network at every point in `points`.
pub fn forward(params: &MlpParams, points: &[Point], layout: JetLayout) -> (BatchJets, ForwardCache) {
    assert_eq!(layout.dim, params.input_dim(), "layout dimension must match network input");
    let n = points.len();
    let cols = layout.channels() * n;
    let layers = params.num_layers();
    let mut cache = ForwardCache {
        layout,
        n,
        inputs: Vec::with_capacity(layers),
        pre: Vec::with_capacity(layers - 1),
        sens: Vec::with_capacity(layers - 1),
    };
    let mut a = encode_inputs(points, layout);
    for l in 0..layers {
        let w = params.weight(l);
        let b = params.bias(l);
        let mut z = Array2::zeros((w.nrows(), cols));
        general_mat_mul(1.0, &w, &a, 0.0, &mut z);
        for (r, &br) in b.iter().enumerate() {
            z.slice_mut(s![r, 0..n]).mapv_inplace(|v| v + br);
        }
        cache.inputs.push(a);
        if l + 1 == layers {
            let (data, _) = z.into_raw_vec_and_offset();
            return (BatchJets { layout, n, data }, cache);
        }
        let (next, sens) = activate(&z, params, layout, n);
        cache.pre.push(z);
        cache.sens.push(sens);
        a = next;
    }
    unreachable!("network has at least one layer")
}

/// Accumulates into `grad` the parameter gradient of a scalar loss whose
/// derivative with respect to the output channels is `adjoint`.
pub fn backward(params: &MlpParams, cache: &ForwardCache, adjoint: &BatchJets, grad: &mut ParamGrad) {
    assert_eq!(adjoint.layout, cache.layout);
    assert_eq!(adjoint.n, cache.n);
    let n = cache.n;
    let cols = cache.layout.channels() * n;
    let mut bar = Array2::from_shape_vec((1, cols), adjoint.data.clone()).unwrap();
    for l in (0..params.num_layers()).rev() {
        let a_prev = &cache.inputs[l];
        general_mat_mul(1.0, &bar, &a_prev.t(), 1.0, &mut grad.weight_mut(l));
        {
            let mut gb = grad.bias_mut(l);
            for r in 0..bar.nrows() {
                gb[r] += bar.slice(s![r, 0..n]).sum();
            }
        }
        if l == 0 {
            break;
        }
        let w = params.weight(l);
        let mut prev_bar = Array2::zeros((w.ncols(), cols));
        general_mat_mul(1.0, &w.t(), &bar, 0.0, &mut prev_bar);
        activate_backward(&mut prev_bar, &cache.pre[l - 1], &cache.sens[l - 1], cache.layout, n);
        bar = prev_bar;
    }
}

/// Points per chunk in batched evaluation. Chunking is fixed so that results
/// do not depend on the worker count.
pub const CHUNK: usize = 1024;

/// Network values at many points.
pub fn values(params: &MlpParams, points: &[Point]) -> Vec<f64> {
    let layout = JetLayout::value_only(params.input_dim());
    let parts = crate::parallel::map_chunks(points.len(), CHUNK, |range| {
        forward(params, &points[range], layout).0.data
    });
    parts.into_iter().flatten().collect()
}

/// Full jets at many points.
pub fn jets(params: &MlpParams, points: &[Point], layout: JetLayout) -> Vec<FieldJet> {
    let parts = crate::parallel::map_chunks(points.len(), CHUNK, |range| {
        let (b, _) = forward(params, &points[range], layout);
        (0..b.n).map(|p| b.jet(p)).collect::<Vec<_>>()
    });
    parts.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::{eval_jet, init_mlp, Activation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dim: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random(), if dim == 2 { rng.random() } else { 0.0 }])
            .collect()
    }

    #[test]
    fn layout_channel_indices() {
        let l = JetLayout::full(2);
        assert_eq!(l.channels(), 5);
        assert_eq!((l.first(0), l.first(1)), (Some(1), Some(2)));
        assert_eq!((l.second(0), l.second(1)), (Some(3), Some(4)));
        let t = JetLayout::with_second(2, [true, false]);
        assert_eq!(t.channels(), 4);
        assert_eq!(t.second(1), None);
        let v = JetLayout::value_only(1);
        assert_eq!(v.channels(), 1);
        assert_eq!(v.first(0), None);
        assert_eq!(JetLayout::full(1).channels(), 3);
    }

    #[test]
    fn batched_forward_matches_pointwise() {
        for (dim, act) in [(1, Activation::Sigmoid), (2, Activation::Tanh)] {
            let p = init_mlp(&[dim, 20, 20, 1], act, 3).unwrap();
            let pts = random_points(37, dim, 9);
            let (b, _) = forward(&p, &pts, JetLayout::full(dim));
            for (i, x) in pts.iter().enumerate() {
                let a = eval_jet(&p, x);
                let j = b.jet(i);
                assert!((a.value - j.value).abs() < 1e-13);
                for k in 0..dim {
                    assert!((a.grad[k] - j.grad[k]).abs() < 1e-12);
                    assert!((a.diag_hess[k] - j.diag_hess[k]).abs() < 1e-11);
                }
            }
        }
    }

    /// Loss = sum_p sum_ch w_ch[p] * channel_ch[p]^2 / 2, gradient checked
    /// against central differences on every parameter.
    #[test]
    fn backward_matches_finite_differences() {
        for (dim, act, second) in [
            (1, Activation::Sigmoid, [true, false]),
            (2, Activation::Tanh, [true, true]),
            (2, Activation::Tanh, [true, false]),
        ] {
            let layout = JetLayout::with_second(dim, second);
            let params = init_mlp(&[dim, 6, 5, 1], act, 11).unwrap();
            let pts = random_points(5, dim, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let weights: Vec<f64> = (0..layout.channels() * pts.len())
                .map(|_| rng.random_range(0.5..1.5))
                .collect();
            let loss = |p: &MlpParams| -> f64 {
                let (b, _) = forward(p, &pts, layout);
                b.data.iter().zip(&weights).map(|(v, w)| 0.5 * w * v * v).sum()
            };
            let (b, cache) = forward(&params, &pts, layout);
            let mut adj = b.clone();
            for (a, w) in adj.data.iter_mut().zip(&weights) {
                *a *= w;
            }
            let mut grad = params.zero_grad();
            backward(&params, &cache, &adj, &mut grad);
            let h = 1e-6;
            for i in 0..params.num_params() {
                let mut pp = params.clone();
                pp.as_mut_slice()[i] += h;
                let mut pm = params.clone();
                pm.as_mut_slice()[i] -= h;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let an = grad.as_slice()[i];
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1e-3) + 1e-9,
                    "param {i}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn chunked_values_agree_with_single_pass() {
        let p = init_mlp(&[2, 10, 10, 1], Activation::Tanh, 1).unwrap();
        let pts = random_points(2 * CHUNK + 17, 2, 5);
        let chunked = values(&p, &pts);
        let (whole, _) = forward(&p, &pts, JetLayout::value_only(2));
        for (a, b) in chunked.iter().zip(whole.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
