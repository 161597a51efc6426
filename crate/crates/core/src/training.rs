//! Loss assembly, residual-based attention, Adam, and the training loop.
//!
//! The loss is
//!
//! ```text
//! L = mean_r (w_i R_i)^2 + mean_bc (u - g)^2 + mean_ic (u - g0)^2
//! ```
//!
//! with `w_i = 1` when attention weighting is off. Two evaluation routes
//! exist. [`assemble_loss`] works pointwise through any [`FieldEvaluator`] and
//! is the reference. [`Objective`] is the fast route used for training: it
//! evaluates all member networks of a [`CompositeModel`] chunk by chunk,
//! pushes the residual adjoint through the product rule by hand, and skips
//! layer networks wherever their exponential factor is exactly zero.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffnet::batch::{self, BatchJets, JetLayout, CHUNK};
use crate::diffnet::{FieldEvaluator, FieldJet, MlpParams, ParamGrad, Point};
use crate::error::{Error, Result};
use crate::layers::{product_jet, CompositeModel};
use crate::parallel::map_chunks;
use crate::problems::{PerturbedProblem, PointCoeffs};
use crate::sampling::PointSets;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ic: f64,
    pub l_bc: f64,
    pub l_r: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_ic: f64, l_bc: f64, l_r: f64) -> Self {
        LossBreakdown {
            l_ic,
            l_bc,
            l_r,
            total: l_ic + l_bc + l_r,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_ic.is_finite() && self.l_bc.is_finite() && self.l_r.is_finite() && self.total.is_finite()
    }
}

/// How attention weights enter the residual loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RbaStyle {
    /// `(lambda_i R_i)^2`
    #[default]
    Squared,
    /// `lambda_i R_i^2`
    Linear,
}

impl RbaStyle {
    fn multiplier(self, lambda: f64) -> f64 {
        match self {
            RbaStyle::Squared => lambda * lambda,
            RbaStyle::Linear => lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbaWeights {
    pub lambda: Vec<f64>,
    pub eta_star: f64,
}

impl RbaWeights {
    pub fn new(n: usize, eta_star: f64, init: f64) -> Self {
        RbaWeights {
            lambda: vec![init; n],
            eta_star,
        }
    }

    /// In-place update `lambda <- (1 - eta) lambda + eta |e| / max|e|`.
    /// Returns `false`, leaving the weights untouched, when every residual is
    /// zero.
    pub fn update(&mut self, residuals: &[f64]) -> Result<bool> {
        if residuals.len() != self.lambda.len() {
            return Err(Error::LengthMismatch(self.lambda.len(), residuals.len()));
        }
        let max = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if !max.is_finite() {
            return Err(Error::NonFinite("attention residuals".into()));
        }
        if max == 0.0 {
            return Ok(false);
        }
        let eta = self.eta_star;
        for (l, r) in self.lambda.iter_mut().zip(residuals) {
            *l = (1.0 - eta) * *l + eta * (r.abs() / max);
        }
        Ok(true)
    }
}

pub fn rba_update(weights: &RbaWeights, residuals: &[f64]) -> Result<RbaWeights> {
    let mut w = weights.clone();
    w.update(residuals)?;
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("adam.lr", "must be positive"));
        }
        for (name, b) in [("adam.beta1", self.beta1), ("adam.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.eps_hat > 0.0) {
            return Err(Error::config("adam.eps_hat", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    b1t: f64,
    b2t: f64,
    pub steps: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            b1t: 1.0,
            b2t: 1.0,
            steps: 0,
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_step(params: &mut MlpParams, grad: &ParamGrad, state: &mut AdamState, hyper: &AdamConfig) {
    let theta = params.as_mut_slice();
    let g = grad.as_slice();
    assert_eq!(theta.len(), g.len(), "gradient must match parameters");
    assert_eq!(theta.len(), state.m.len(), "optimizer state must match parameters");
    state.steps += 1;
    state.b1t *= hyper.beta1;
    state.b2t *= hyper.beta2;
    let c1 = 1.0 - state.b1t;
    let c2 = 1.0 - state.b2t;
    for i in 0..theta.len() {
        let gi = g[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * gi;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * gi * gi;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps_hat);
    }
}

/// Loss terms together with the raw interior residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub loss: LossBreakdown,
    pub residuals: Vec<f64>,
}

fn mean_sq_mismatch<'a>(
    model: &dyn FieldEvaluator,
    items: impl ExactSizeIterator<Item = (&'a Point, f64)>,
) -> f64 {
    let n = items.len();
    if n == 0 {
        return 0.0;
    }
    items.map(|(p, g)| (model.value(p) - g).powi(2)).sum::<f64>() / n as f64
}

/// Pointwise loss through any field evaluator.
pub fn assemble_loss(
    model: &dyn FieldEvaluator,
    problem: &PerturbedProblem,
    points: &PointSets,
    rba: Option<&RbaWeights>,
) -> Result<LossResult> {
    assemble_loss_with(model, problem, points, rba, RbaStyle::Squared)
}

pub fn assemble_loss_with(
    model: &dyn FieldEvaluator,
    problem: &PerturbedProblem,
    points: &PointSets,
    rba: Option<&RbaWeights>,
    style: RbaStyle,
) -> Result<LossResult> {
    if model.input_dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: model.input_dim(),
        });
    }
    if let Some(w) = rba {
        if w.lambda.len() != points.interior.len() {
            return Err(Error::LengthMismatch(points.interior.len(), w.lambda.len()));
        }
    }
    let residuals: Vec<f64> = points
        .interior
        .iter()
        .map(|p| problem.coefficients(p).apply(&model.jet(p)))
        .collect();
    let nr = residuals.len().max(1) as f64;
    let l_r = residuals
        .iter()
        .enumerate()
        .map(|(i, r)| rba.map_or(1.0, |w| style.multiplier(w.lambda[i])) * r * r)
        .sum::<f64>()
        / nr;
    let targets = points
        .boundary
        .iter()
        .map(|b| problem.boundary_value(b.face, &b.point))
        .collect::<Result<Vec<_>>>()?;
    let l_bc = mean_sq_mismatch(model, points.boundary.iter().map(|b| &b.point).zip(targets));
    let l_ic = match &problem.initial {
        Some(g) => mean_sq_mismatch(model, points.initial.iter().map(|p| (p, g(p)))),
        None => 0.0,
    };
    let loss = LossBreakdown::new(l_ic, l_bc, l_r);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss terms {loss:?}")));
    }
    Ok(LossResult { loss, residuals })
}

/// Loss, residuals and, optionally, one gradient per member network.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub residuals: Vec<f64>,
    pub grads: Vec<ParamGrad>,
}

/// Factors below this are dropped from the batched layer passes: their
/// contribution is far below rounding, and subnormal products would stall
/// the matrix kernels.
pub const NEGLIGIBLE_FACTOR: f64 = 1e-200;

/// Per-layer exponential factor data on a point set.
struct FactorData {
    jets: Vec<FieldJet>,
    /// Active (nonzero factor) indices per chunk, relative to the chunk start.
    active: Vec<Vec<usize>>,
}

impl FactorData {
    fn new(model: &CompositeModel, k: usize, points: &[Point], chunks: &[Range<usize>]) -> Self {
        let f = model.layer_terms[k].1;
        let jets: Vec<FieldJet> = points.iter().map(|p| f.jet(p)).collect();
        let active = chunks
            .iter()
            .map(|r| r.clone().filter(|&i| jets[i].value >= NEGLIGIBLE_FACTOR).map(|i| i - r.start).collect())
            .collect();
        FactorData { jets, active }
    }
}

/// Fixed training data for one model structure on one point set.
pub struct Objective<'a> {
    problem: &'a PerturbedProblem,
    layout: JetLayout,
    interior: Vec<Point>,
    coeffs: Vec<PointCoeffs>,
    chunks: Vec<Range<usize>>,
    factors: Vec<FactorData>,
    /// Boundary points followed by initial points.
    fit_points: Vec<Point>,
    fit_targets: Vec<f64>,
    fit_weights: Vec<f64>,
    n_boundary: usize,
    fit_chunks: Vec<Range<usize>>,
    fit_factors: Vec<FactorData>,
    num_layers: usize,
    style: RbaStyle,
}

struct ChunkOut {
    sum_r: f64,
    sum_bc: f64,
    sum_ic: f64,
    residuals: Vec<f64>,
    grads: Vec<ParamGrad>,
}

/// Channel coefficient vector of the residual operator in a jet layout.
fn channel_coeffs(layout: &JetLayout, c: &PointCoeffs) -> Vec<f64> {
    let mut w = vec![0.0; layout.channels()];
    w[0] = c.reaction;
    for k in 0..layout.dim() {
        if let Some(ch) = layout.first(k) {
            w[ch] = c.first[k];
        }
        if let Some(ch) = layout.second(k) {
            w[ch] = c.second[k];
        }
    }
    w
}

fn add_jet(dst: &mut BatchJets, p: usize, j: &FieldJet) {
    let n = dst.n;
    let layout = dst.layout;
    dst.data[p] += j.value;
    for k in 0..layout.dim() {
        if let Some(ch) = layout.first(k) {
            dst.data[ch * n + p] += j.grad[k];
        }
        if let Some(ch) = layout.second(k) {
            dst.data[ch * n + p] += j.diag_hess[k];
        }
    }
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a PerturbedProblem, model: &CompositeModel, points: &PointSets) -> Result<Self> {
        let dim = problem.dim();
        if model.input_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: model.input_dim(),
            });
        }
        let layout = JetLayout::with_second(dim, problem.kind.second_axes());
        let interior = points.interior.clone();
        let coeffs = interior.iter().map(|p| problem.coefficients(p)).collect();
        let chunks = crate::parallel::chunk_ranges(interior.len(), CHUNK);

        let nb = points.boundary.len();
        let mut fit_points: Vec<Point> = points.boundary.iter().map(|b| b.point).collect();
        let mut fit_targets = points
            .boundary
            .iter()
            .map(|b| problem.boundary_value(b.face, &b.point))
            .collect::<Result<Vec<_>>>()?;
        let mut fit_weights = vec![1.0 / nb.max(1) as f64; nb];
        if let Some(g) = &problem.initial {
            let ni = points.initial.len();
            fit_points.extend_from_slice(&points.initial);
            fit_targets.extend(points.initial.iter().map(|p| g(p)));
            fit_weights.extend(std::iter::repeat_n(1.0 / ni.max(1) as f64, ni));
        }
        if fit_targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("boundary or initial data".into()));
        }
        let fit_chunks = crate::parallel::chunk_ranges(fit_points.len(), CHUNK);
        let num_layers = model.layer_terms.len();
        let factors = (0..num_layers)
            .map(|k| FactorData::new(model, k, &interior, &chunks))
            .collect();
        let fit_factors = (0..num_layers)
            .map(|k| FactorData::new(model, k, &fit_points, &fit_chunks))
            .collect();
        Ok(Objective {
            problem,
            layout,
            interior,
            coeffs,
            chunks,
            factors,
            fit_points,
            fit_targets,
            fit_weights,
            n_boundary: nb,
            fit_chunks,
            fit_factors,
            num_layers,
            style: RbaStyle::Squared,
        })
    }

    pub fn with_style(mut self, style: RbaStyle) -> Self {
        self.style = style;
        self
    }

    pub fn problem(&self) -> &PerturbedProblem {
        self.problem
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    /// Fraction of interior points at which each layer network is evaluated.
    pub fn active_fractions(&self) -> Vec<f64> {
        let n = self.interior.len().max(1) as f64;
        self.factors
            .iter()
            .map(|f| f.active.iter().map(Vec::len).sum::<usize>() as f64 / n)
            .collect()
    }

    fn check_model(&self, model: &CompositeModel) -> Result<()> {
        if model.layer_terms.len() != self.num_layers {
            return Err(Error::InvalidArgument(format!(
                "objective built for {} layer terms, model has {}",
                self.num_layers,
                model.layer_terms.len()
            )));
        }
        Ok(())
    }

    fn interior_chunk(
        &self,
        model: &CompositeModel,
        c: usize,
        lambda: Option<&[f64]>,
        with_grad: bool,
    ) -> ChunkOut {
        let range = self.chunks[c].clone();
        let pts = &self.interior[range.clone()];
        let n = pts.len();
        let layout = self.layout;
        let (j0, cache0) = batch::forward(&model.smooth, pts, layout);
        let mut total = j0;
        let mut layer_runs = Vec::with_capacity(self.num_layers);
        for (k, (net, _)) in model.layer_terms.iter().enumerate() {
            let active = &self.factors[k].active[c];
            if active.is_empty() {
                layer_runs.push(None);
                continue;
            }
            let sub: Vec<Point> = active.iter().map(|&p| pts[p]).collect();
            let (jk, ck) = batch::forward(net, &sub, layout);
            for (q, &p) in active.iter().enumerate() {
                let e = &self.factors[k].jets[range.start + p];
                add_jet(&mut total, p, &product_jet(&jk.jet(q), e));
            }
            layer_runs.push(Some((jk, ck)));
        }

        let nr = self.interior.len() as f64;
        let mut residuals = Vec::with_capacity(n);
        let mut sum_r = 0.0;
        let mut rbar = Vec::with_capacity(n);
        for p in 0..n {
            let i = range.start + p;
            let r = self.coeffs[i].apply(&total.jet(p));
            let m = lambda.map_or(1.0, |l| self.style.multiplier(l[i]));
            sum_r += m * r * r;
            residuals.push(r);
            rbar.push(2.0 * m * r / nr);
        }
        let mut grads = Vec::new();
        if with_grad {
            // adjoint of the composite jet channels
            let chn = layout.channels();
            let mut tbar = BatchJets::zeros(layout, n);
            for p in 0..n {
                let w = channel_coeffs(&layout, &self.coeffs[range.start + p]);
                for ch in 0..chn {
                    tbar.data[ch * n + p] = rbar[p] * w[ch];
                }
            }
            let mut g0 = model.smooth.zero_grad();
            batch::backward(&model.smooth, &cache0, &tbar, &mut g0);
            grads.push(g0);
            for (k, (net, _)) in model.layer_terms.iter().enumerate() {
                let mut gk = net.zero_grad();
                if let Some((jk, ck)) = &layer_runs[k] {
                    let active = &self.factors[k].active[c];
                    let m = active.len();
                    let mut ubar = BatchJets::zeros(layout, m);
                    for (q, &p) in active.iter().enumerate() {
                        let e = &self.factors[k].jets[range.start + p];
                        let tv = tbar.data[p];
                        let mut uv = tv * e.value;
                        for a in 0..layout.dim() {
                            let tg = layout.first(a).map_or(0.0, |ch| tbar.data[ch * n + p]);
                            let th = layout.second(a).map_or(0.0, |ch| tbar.data[ch * n + p]);
                            uv += tg * e.grad[a] + th * e.diag_hess[a];
                            if let Some(ch) = layout.first(a) {
                                ubar.data[ch * m + q] = tg * e.value + 2.0 * th * e.grad[a];
                            }
                            if let Some(ch) = layout.second(a) {
                                ubar.data[ch * m + q] = th * e.value;
                            }
                        }
                        ubar.data[q] = uv;
                    }
                    debug_assert_eq!(jk.n, m);
                    batch::backward(net, ck, &ubar, &mut gk);
                }
                grads.push(gk);
            }
        }
        ChunkOut {
            sum_r,
            sum_bc: 0.0,
            sum_ic: 0.0,
            residuals,
            grads,
        }
    }

    fn fit_chunk(&self, model: &CompositeModel, c: usize, with_grad: bool) -> ChunkOut {
        let range = self.fit_chunks[c].clone();
        let pts = &self.fit_points[range.clone()];
        let n = pts.len();
        let layout = JetLayout::value_only(self.problem.dim());
        let (j0, cache0) = batch::forward(&model.smooth, pts, layout);
        let mut u = j0.data.clone();
        let mut runs = Vec::with_capacity(self.num_layers);
        for (k, (net, _)) in model.layer_terms.iter().enumerate() {
            let active = &self.fit_factors[k].active[c];
            if active.is_empty() {
                runs.push(None);
                continue;
            }
            let sub: Vec<Point> = active.iter().map(|&p| pts[p]).collect();
            let (jk, ck) = batch::forward(net, &sub, layout);
            for (q, &p) in active.iter().enumerate() {
                u[p] += jk.data[q] * self.fit_factors[k].jets[range.start + p].value;
            }
            runs.push(Some(ck));
        }
        let (mut sum_bc, mut sum_ic) = (0.0, 0.0);
        let mut vbar = BatchJets::zeros(layout, n);
        for p in 0..n {
            let i = range.start + p;
            let d = u[p] - self.fit_targets[i];
            let term = self.fit_weights[i] * d * d;
            if i < self.n_boundary {
                sum_bc += term;
            } else {
                sum_ic += term;
            }
            vbar.data[p] = 2.0 * self.fit_weights[i] * d;
        }
        let mut grads = Vec::new();
        if with_grad {
            let mut g0 = model.smooth.zero_grad();
            batch::backward(&model.smooth, &cache0, &vbar, &mut g0);
            grads.push(g0);
            for (k, (net, _)) in model.layer_terms.iter().enumerate() {
                let mut gk = net.zero_grad();
                if let Some(ck) = &runs[k] {
                    let active = &self.fit_factors[k].active[c];
                    let mut ubar = BatchJets::zeros(layout, active.len());
                    for (q, &p) in active.iter().enumerate() {
                        ubar.data[q] = vbar.data[p] * self.fit_factors[k].jets[range.start + p].value;
                    }
                    batch::backward(net, ck, &ubar, &mut gk);
                }
                grads.push(gk);
            }
        }
        ChunkOut {
            sum_r: 0.0,
            sum_bc,
            sum_ic,
            residuals: Vec::new(),
            grads,
        }
    }

    /// Loss terms, raw residuals and (if `with_grad`) parameter gradients,
    /// smooth network first.
    pub fn evaluate(
        &self,
        model: &CompositeModel,
        rba: Option<&RbaWeights>,
        with_grad: bool,
    ) -> Result<Evaluation> {
        self.check_model(model)?;
        let lambda = match rba {
            Some(w) if w.lambda.len() != self.interior.len() => {
                return Err(Error::LengthMismatch(self.interior.len(), w.lambda.len()))
            }
            Some(w) => Some(w.lambda.as_slice()),
            None => None,
        };
        let interior = map_chunks(self.chunks.len(), 1, |r| {
            self.interior_chunk(model, r.start, lambda, with_grad)
        });
        let fit = map_chunks(self.fit_chunks.len(), 1, |r| self.fit_chunk(model, r.start, with_grad));

        let mut grads: Vec<ParamGrad> = if with_grad {
            model.networks().iter().map(|n| n.zero_grad()).collect()
        } else {
            Vec::new()
        };
        let (mut sum_r, mut l_bc, mut l_ic) = (0.0, 0.0, 0.0);
        let mut residuals = Vec::with_capacity(self.interior.len());
        for out in interior.into_iter().chain(fit) {
            sum_r += out.sum_r;
            l_bc += out.sum_bc;
            l_ic += out.sum_ic;
            residuals.extend(out.residuals);
            for (g, o) in grads.iter_mut().zip(&out.grads) {
                g.add_assign(o);
            }
        }
        let l_r = if self.interior.is_empty() {
            0.0
        } else {
            sum_r / self.interior.len() as f64
        };
        let loss = LossBreakdown::new(l_ic, l_bc, l_r);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss terms {loss:?}")));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("parameter gradient".into()));
        }
        Ok(Evaluation {
            loss,
            residuals,
            grads,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    pub rba_enabled: bool,
    pub rba_style: RbaStyle,
    pub eta_star: f64,
    pub rba_init: f64,
    pub seed: u64,
    /// Record a history row every this many iterations.
    pub history_stride: usize,
    /// Evaluate the test error every this many iterations; 0 means only at
    /// the end.
    pub eval_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50_000,
            adam: AdamConfig::default(),
            rba_enabled: true,
            rba_style: RbaStyle::Squared,
            eta_star: 1e-4,
            rba_init: 1.0,
            seed: 0,
            history_stride: 100,
            eval_stride: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.history_stride == 0 {
            return Err(Error::config("history_stride", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.eta_star) {
            return Err(Error::config("eta_star", "must lie in [0, 1]"));
        }
        if !self.rba_init.is_finite() {
            return Err(Error::config("rba_init", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: LossBreakdown,
    pub l2_test: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    pub final_loss: LossBreakdown,
    pub rba: Option<RbaWeights>,
    pub wall_time_s: f64,
}

/// Wall-clock timer; reads zero on targets without a monotonic clock.
struct Stopwatch(Option<Instant>);

impl Stopwatch {
    fn start() -> Self {
        Stopwatch((!cfg!(target_arch = "wasm32")).then(Instant::now))
    }

    fn seconds(&self) -> f64 {
        self.0.map_or(0.0, |t| t.elapsed().as_secs_f64())
    }
}

/// Trains `model` in place. `observe` is called at evaluation checkpoints
/// and may return a test error to record.
pub fn train_with(
    model: &mut CompositeModel,
    problem: &PerturbedProblem,
    points: &PointSets,
    config: &TrainConfig,
    observe: &mut dyn FnMut(usize, &CompositeModel) -> Option<f64>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Stopwatch::start();
    let objective = Objective::new(problem, model, points)?.with_style(config.rba_style);
    let mut rba = config
        .rba_enabled
        .then(|| RbaWeights::new(points.interior.len(), config.eta_star, config.rba_init));
    let mut states: Vec<AdamState> = model
        .networks()
        .iter()
        .map(|n| AdamState::new(n.num_params()))
        .collect();
    let diverged = |iteration: usize, e: Error| Error::Diverged {
        iteration,
        reason: e.to_string(),
    };
    let wants_eval = |k: usize| config.eval_stride > 0 && k.is_multiple_of(config.eval_stride);
    let mut history = Vec::new();
    for k in 0..config.iterations {
        let eval = objective
            .evaluate(model, rba.as_ref(), true)
            .map_err(|e| diverged(k, e))?;
        if k.is_multiple_of(config.history_stride) {
            let l2_test = if wants_eval(k) { observe(k, model) } else { None };
            history.push(HistoryRow {
                iter: k,
                loss: eval.loss,
                l2_test,
            });
            log::debug!("iter {k}: loss {:.4e}", eval.loss.total);
        }
        for ((net, g), st) in model.networks_mut().into_iter().zip(&eval.grads).zip(&mut states) {
            adam_step(net, g, st, &config.adam);
        }
        if let Some(w) = rba.as_mut() {
            w.update(&eval.residuals).map_err(|e| diverged(k, e))?;
        }
    }
    let n = config.iterations;
    let last = objective
        .evaluate(model, rba.as_ref(), false)
        .map_err(|e| diverged(n, e))?;
    history.push(HistoryRow {
        iter: n,
        loss: last.loss,
        l2_test: observe(n, model),
    });
    Ok(TrainOutcome {
        history,
        final_loss: last.loss,
        rba,
        wall_time_s: start.seconds(),
    })
}

pub fn train(
    model: &mut CompositeModel,
    problem: &PerturbedProblem,
    points: &PointSets,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, problem, points, config, &mut |_, _| None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffnet::tape::{loss_param_gradient, JetQuery};
    use crate::diffnet::{Activation, ClosedForm};
    use crate::layers::{build_model, Mode};
    use crate::problems::{builtin_example, Face};
    use crate::sampling::{sample_problem_points, BoundaryPoint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts_1d(problem: &PerturbedProblem, n: usize, seed: u64) -> PointSets {
        sample_problem_points(problem, n, 10, 0, seed).unwrap()
    }

    #[test]
    fn analytic_solution_has_zero_loss() {
        let p = builtin_example(1, 0.1).unwrap();
        let s = pts_1d(&p, 200, 1);
        let field = p.analytic_field().unwrap();
        let r = assemble_loss(&field, &p, &s, None).unwrap();
        assert!(r.loss.total < 1e-10, "{:?}", r.loss);
    }

    #[test]
    fn zero_field_boundary_loss() {
        let p = builtin_example(1, 0.1).unwrap();
        let mut s = pts_1d(&p, 20, 1);
        s.boundary = vec![
            BoundaryPoint { point: [0.0, 0.0], face: Face::Left },
            BoundaryPoint { point: [1.0, 0.0], face: Face::Right },
        ];
        let zero = ClosedForm::new(1, |_: &Point| FieldJet::default());
        let r = assemble_loss(&zero, &p, &s, None).unwrap();
        assert_eq!(r.loss.l_bc, 0.5);
        assert_eq!(r.loss.l_ic, 0.0);
    }

    #[test]
    fn zero_weights_zero_residual_loss() {
        let p = builtin_example(1, 0.01).unwrap();
        let s = pts_1d(&p, 50, 2);
        let zero = ClosedForm::new(1, |_: &Point| FieldJet::default());
        let w = RbaWeights::new(50, 1e-4, 0.0);
        assert_eq!(assemble_loss(&zero, &p, &s, Some(&w)).unwrap().loss.l_r, 0.0);
        let unit = RbaWeights::new(50, 1e-4, 1.0);
        assert_eq!(
            assemble_loss(&zero, &p, &s, Some(&unit)).unwrap().loss,
            assemble_loss(&zero, &p, &s, None).unwrap().loss
        );
    }

    #[test]
    fn rba_fixed_point_and_arithmetic() {
        let w = RbaWeights::new(3, 0.1, 1.0);
        assert_eq!(rba_update(&w, &[0.5, -0.5, 0.5]).unwrap().lambda, vec![1.0; 3]);
        let u = rba_update(&w, &[0.0, 2.0, -1.0]).unwrap();
        assert!((u.lambda[0] - 0.9).abs() < 1e-15);
        assert_eq!(rba_update(&w, &[0.0; 3]).unwrap(), w);
        assert!(rba_update(&w, &[1.0]).is_err());
    }

    #[test]
    fn rba_stays_in_unit_interval_over_many_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = RbaWeights {
            lambda: (0..64).map(|_| rng.random()).collect(),
            eta_star: 0.05,
        };
        for _ in 0..10_000 {
            let r: Vec<f64> = (0..64).map(|_| rng.random_range(-5.0..5.0)).collect();
            w.update(&r).unwrap();
            assert!(w.lambda.iter().all(|l| (0.0..=1.0).contains(l)));
        }
    }

    #[test]
    fn adam_first_step() {
        let mut p = MlpParams::from_flat(&[1, 1, 1], Activation::Tanh, vec![0.0; 4]).unwrap();
        let mut g = p.zero_grad();
        let mut st = AdamState::new(4);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default());
        assert_eq!(p.as_slice(), &[0.0; 4]);
        let mut st = AdamState::new(4);
        g.as_mut_slice()[0] = 1.0;
        adam_step(&mut p, &g, &mut st, &AdamConfig::default());
        assert!((p.as_slice()[0] - (-9.999_999_9e-4)).abs() < 1e-18);
    }

    #[test]
    fn adam_is_odd() {
        let base = MlpParams::from_flat(&[1, 2, 1], Activation::Tanh, vec![0.3; 7]).unwrap();
        let mut g = base.zero_grad();
        for (i, v) in g.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64 - 3.0) * 0.7;
        }
        let mut neg = g.clone();
        neg.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        let (mut a, mut b) = (base.clone(), base.clone());
        adam_step(&mut a, &g, &mut AdamState::new(7), &AdamConfig::default());
        adam_step(&mut b, &neg, &mut AdamState::new(7), &AdamConfig::default());
        for i in 0..7 {
            let da = a.as_slice()[i] - base.as_slice()[i];
            let db = b.as_slice()[i] - base.as_slice()[i];
            assert_eq!(da, -db);
        }
    }

    fn setup(id: usize, eps: f64, mode: Mode, n: usize) -> (PerturbedProblem, CompositeModel, PointSets) {
        let p = builtin_example(id, eps).unwrap();
        let act = if p.dim() == 1 { Activation::Sigmoid } else { Activation::Tanh };
        let m = build_model(&p, &[8, 8], act, id as u64, mode).unwrap();
        let ni = if p.kind.is_time() { 12 } else { 0 };
        let s = sample_problem_points(&p, n, 16, ni, 7).unwrap();
        (p, m, s)
    }

    #[test]
    fn objective_matches_pointwise_loss() {
        for id in 1..=8 {
            let (p, m, s) = setup(id, 0.05, Mode::Gkpinn, 300);
            let mut rba = RbaWeights::new(300, 1e-4, 1.0);
            rba.lambda.iter_mut().enumerate().for_each(|(i, l)| *l = (i % 7) as f64 / 7.0);
            let reference = assemble_loss(&m, &p, &s, Some(&rba)).unwrap();
            let fast = Objective::new(&p, &m, &s).unwrap().evaluate(&m, Some(&rba), false).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
            assert!(rel(fast.loss.l_r, reference.loss.l_r) < 1e-10, "example {id}");
            assert!(rel(fast.loss.l_bc, reference.loss.l_bc) < 1e-10, "example {id}");
            assert!(rel(fast.loss.l_ic, reference.loss.l_ic) < 1e-10 || reference.loss.l_ic == 0.0);
            for (a, b) in fast.residuals.iter().zip(&reference.residuals) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    /// Loss written on the tape from raw network jets, as an independent
    /// route to the parameter gradients.
    fn tape_gradient(
        p: &PerturbedProblem,
        m: &CompositeModel,
        s: &PointSets,
        rba: &RbaWeights,
    ) -> (f64, Vec<ParamGrad>) {
        let mut all: Vec<Point> = s.interior.clone();
        all.extend(s.boundary.iter().map(|b| b.point));
        all.extend_from_slice(&s.initial);
        let nets = m.networks();
        let queries: Vec<JetQuery> = nets.iter().map(|n| JetQuery { net: n, points: &all }).collect();
        let factors = m.factors();
        let (nr, nb, ni) = (s.interior.len(), s.boundary.len(), s.initial.len());
        loss_param_gradient(&queries, |tape, jets| {
            let composite = |i: usize, x: &Point| {
                let mut j = jets[0][i];
                for (k, f) in factors.iter().enumerate() {
                    let e = f.jet(x);
                    let u = jets[k + 1][i];
                    j.value = j.value + u.value * e.value;
                    for a in 0..2 {
                        j.grad[a] = j.grad[a] + u.grad[a] * e.value + u.value * e.grad[a];
                        j.diag_hess[a] = j.diag_hess[a]
                            + u.diag_hess[a] * e.value
                            + u.grad[a] * (2.0 * e.grad[a])
                            + u.value * e.diag_hess[a];
                    }
                }
                j
            };
            let mut l_r = tape.var(0.0);
            for (i, x) in s.interior.iter().enumerate() {
                let c = p.coefficients(x);
                let j = composite(i, x);
                let r = j.diag_hess[0] * c.second[0]
                    + j.diag_hess[1] * c.second[1]
                    + j.grad[0] * c.first[0]
                    + j.grad[1] * c.first[1]
                    + j.value * c.reaction
                    - c.forcing;
                l_r = l_r + (r * rba.lambda[i]).square();
            }
            let mut l_bc = tape.var(0.0);
            for (i, b) in s.boundary.iter().enumerate() {
                let g = p.boundary_value(b.face, &b.point).unwrap();
                l_bc = l_bc + (composite(nr + i, &b.point).value - g).square();
            }
            let mut total = l_r / nr as f64 + l_bc / nb as f64;
            if ni > 0 {
                let g0 = p.initial.as_ref().unwrap();
                let mut l_ic = tape.var(0.0);
                for (i, x) in s.initial.iter().enumerate() {
                    l_ic = l_ic + (composite(nr + nb + i, x).value - g0(x)).square();
                }
                total = total + l_ic / ni as f64;
            }
            total
        })
        .unwrap()
    }

    #[test]
    fn objective_gradient_matches_tape() {
        for id in 1..=8 {
            let (p, m, s) = setup(id, 0.05, Mode::Gkpinn, 40);
            let mut rba = RbaWeights::new(40, 1e-4, 1.0);
            rba.lambda.iter_mut().enumerate().for_each(|(i, l)| *l = 0.2 + (i % 5) as f64 / 6.0);
            let fast = Objective::new(&p, &m, &s).unwrap().evaluate(&m, Some(&rba), true).unwrap();
            let (v, g) = tape_gradient(&p, &m, &s, &rba);
            assert!((fast.loss.total - v).abs() <= 1e-10 * v.abs().max(1.0));
            assert_eq!(fast.grads.len(), g.len());
            for (a, b) in fast.grads.iter().zip(&g) {
                let scale = b.max_abs().max(1e-8);
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    assert!((x - y).abs() <= 1e-9 * scale, "example {id}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let (p, m, s) = setup(3, 0.1, Mode::Gkpinn, 30);
        let obj = Objective::new(&p, &m, &s).unwrap();
        let g = obj.evaluate(&m, None, true).unwrap().grads;
        let h = 1e-6;
        for net in 0..2 {
            for i in (0..m.networks()[net].num_params()).step_by(7) {
                let shifted = |d: f64| {
                    let mut mm = m.clone();
                    mm.networks_mut()[net].as_mut_slice()[i] += d;
                    obj.evaluate(&mm, None, false).unwrap().loss.total
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let an = g[net].as_slice()[i];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "net {net} param {i}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn layer_networks_skipped_where_factor_vanishes() {
        let (p, m, s) = setup(1, 1e-3, Mode::Gkpinn, 1000);
        let obj = Objective::new(&p, &m, &s).unwrap();
        let f = obj.active_fractions();
        assert!((f[0] - 0.4605).abs() < 0.01, "{f:?}");
        let (p, m, s) = setup(1, 1e-38, Mode::Gkpinn, 1000);
        let obj = Objective::new(&p, &m, &s).unwrap();
        assert_eq!(obj.active_fractions(), vec![0.0]);
        let e = obj.evaluate(&m, None, true).unwrap();
        assert!(e.grads[1].is_finite());
    }

    #[test]
    fn zero_iterations_leaves_model_untouched() {
        let (p, m, s) = setup(1, 0.1, Mode::Gkpinn, 50);
        let mut trained = m.clone();
        let cfg = TrainConfig {
            iterations: 0,
            ..TrainConfig::default()
        };
        let out = train(&mut trained, &p, &s, &cfg).unwrap();
        assert_eq!(trained, m);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let (p, m, s) = setup(2, 0.1, Mode::Gkpinn, 64);
        let cfg = TrainConfig {
            iterations: 200,
            history_stride: 10,
            ..TrainConfig::default()
        };
        let (mut a, mut b) = (m.clone(), m.clone());
        let ha = train(&mut a, &p, &s, &cfg).unwrap();
        let hb = train(&mut b, &p, &s, &cfg).unwrap();
        assert_eq!(ha.history, hb.history);
        assert_eq!(a, b);
        assert!(ha.final_loss.total < ha.history[0].loss.total);
        for row in &ha.history {
            assert_eq!(row.loss.total, row.loss.l_ic + row.loss.l_bc + row.loss.l_r);
        }
        assert_eq!(ha.history.last().unwrap().iter, 200);
        assert!(ha.rba.unwrap().lambda.iter().all(|l| (0.0..=1.0).contains(l)));
    }

    #[test]
    fn nan_aborts_with_iteration() {
        let (p, mut m, s) = setup(1, 0.1, Mode::Pinn, 20);
        m.smooth.as_mut_slice()[0] = f64::NAN;
        let cfg = TrainConfig {
            iterations: 5,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut m, &p, &s, &cfg),
            Err(Error::Diverged { iteration: 0, .. })
        ));
    }

    #[test]
    fn observer_called_at_checkpoints() {
        let (p, mut m, s) = setup(1, 0.1, Mode::Pinn, 20);
        let cfg = TrainConfig {
            iterations: 30,
            history_stride: 5,
            eval_stride: 10,
            ..TrainConfig::default()
        };
        let mut calls = Vec::new();
        let out = train_with(&mut m, &p, &s, &cfg, &mut |k, _| {
            calls.push(k);
            Some(k as f64)
        })
        .unwrap();
        assert_eq!(calls, vec![0, 10, 20, 30]);
        let with_l2: Vec<usize> = out.history.iter().filter(|r| r.l2_test.is_some()).map(|r| r.iter).collect();
        assert_eq!(with_l2, vec![0, 10, 20, 30]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rba_weights_remain_bounded(
            eta in 0.0f64..=1.0,
            residuals in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 8), 1..50),
        ) {
            let mut w = RbaWeights::new(8, eta, 1.0);
            for r in &residuals {
                w.update(r).unwrap();
                prop_assert!(w.lambda.iter().all(|l| (0.0..=1.0).contains(l)));
            }
        }
    }
}
