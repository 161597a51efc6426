//! Browser bindings: closed-form and finite-difference profiles of the
//! one-dimensional examples, the exponential layer factor, and a small
//! in-page trainer comparing the plain and layer-aware models.

use gkpinn_core::diffnet::{Activation, FieldEvaluator, Point};
use gkpinn_core::evaluation::l2_relative_error;
use gkpinn_core::fdref::{shishkin_mesh, solve_1d};
use gkpinn_core::layers::{build_factor, build_model, infer_layers, CompositeModel, Mode};
use gkpinn_core::problems::{builtin_example, PerturbedProblem, ProblemKind};
use gkpinn_core::sampling::{sample_problem_points, PointSets};
use gkpinn_core::training::{adam_step, AdamConfig, AdamState, Objective, RbaWeights};
use wasm_bindgen::prelude::*;

fn problem_1d(example: usize, epsilon: f64) -> Result<PerturbedProblem, String> {
    let p = builtin_example(example, epsilon).map_err(|e| e.to_string())?;
    if p.kind != ProblemKind::Steady1D {
        return Err(format!("example {example} is not one-dimensional"));
    }
    Ok(p)
}

fn uniform(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect()
}

/// Sampled curve `(xs, values)`.
#[wasm_bindgen]
pub struct Profile {
    xs: Vec<f64>,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Profile {
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// Closed-form solution of example 1, 2 or 3 on `n` uniform points.
#[wasm_bindgen]
pub fn exact_profile(example: usize, epsilon: f64, n: usize) -> Result<Profile, String> {
    let p = problem_1d(example, epsilon)?;
    let f = p.analytic_field().ok_or("no closed form")?;
    let xs = uniform(n);
    let values = xs.iter().map(|&x| f.value(&[x, 0.0])).collect();
    Ok(Profile { xs, values })
}

/// Finite-difference solution on the fitted mesh with `cells` cells.
#[wasm_bindgen]
pub fn fd_profile(example: usize, epsilon: f64, cells: usize) -> Result<Profile, String> {
    let p = problem_1d(example, epsilon)?;
    let s = solve_1d(&p, cells).map_err(|e| e.to_string())?;
    Ok(Profile {
        xs: s.xs,
        values: s.values,
    })
}

/// Mesh nodes used by [`fd_profile`].
#[wasm_bindgen]
pub fn mesh_nodes(example: usize, epsilon: f64, cells: usize) -> Result<Vec<f64>, String> {
    let p = problem_1d(example, epsilon)?;
    let layers = infer_layers(&p).map_err(|e| e.to_string())?;
    let m = shishkin_mesh(cells, epsilon, layers.first()).map_err(|e| e.to_string())?;
    Ok(m.nodes)
}

/// The layer factor `exp(-alpha)` of the example's layer on `n` points.
#[wasm_bindgen]
pub fn layer_factor(example: usize, epsilon: f64, n: usize) -> Result<Profile, String> {
    let p = problem_1d(example, epsilon)?;
    let spec = *infer_layers(&p)
        .map_err(|e| e.to_string())?
        .first()
        .ok_or("problem has no boundary layer")?;
    let f = build_factor(spec, epsilon);
    let xs = uniform(n);
    let values = xs.iter().map(|&x| f.value(&[x, 0.0])).collect();
    Ok(Profile { xs, values })
}

/// Incremental trainer for a one-dimensional example.
#[wasm_bindgen]
pub struct Trainer {
    problem: PerturbedProblem,
    model: CompositeModel,
    points: PointSets,
    states: Vec<AdamState>,
    rba: RbaWeights,
    adam: AdamConfig,
    iteration: usize,
    loss: f64,
}

#[wasm_bindgen]
impl Trainer {
    /// `gkpinn` selects the layer-aware model. `width` is the size of both
    /// hidden layers.
    #[wasm_bindgen(constructor)]
    pub fn new(example: usize, epsilon: f64, gkpinn: bool, n_interior: usize, width: usize, seed: u32) -> Result<Trainer, String> {
        let problem = problem_1d(example, epsilon)?;
        let mode = if gkpinn { Mode::Gkpinn } else { Mode::Pinn };
        let model = build_model(&problem, &[width, width], Activation::Sigmoid, seed.into(), mode).map_err(|e| e.to_string())?;
        let points = sample_problem_points(&problem, n_interior, 2, 0, seed.into()).map_err(|e| e.to_string())?;
        let states = model.networks().iter().map(|n| AdamState::new(n.num_params())).collect();
        let rba = RbaWeights::new(n_interior, 1e-4, 1.0);
        Ok(Trainer {
            problem,
            model,
            points,
            states,
            rba,
            adam: AdamConfig::default(),
            iteration: 0,
            loss: f64::NAN,
        })
    }

    /// Runs `steps` Adam iterations and returns the last total loss.
    pub fn step(&mut self, steps: usize) -> Result<f64, String> {
        let objective = Objective::new(&self.problem, &self.model, &self.points).map_err(|e| e.to_string())?;
        for _ in 0..steps {
            let eval = objective.evaluate(&self.model, Some(&self.rba), true).map_err(|e| e.to_string())?;
            for ((net, g), st) in self.model.networks_mut().into_iter().zip(&eval.grads).zip(&mut self.states) {
                adam_step(net, g, st, &self.adam);
            }
            self.rba.update(&eval.residuals).map_err(|e| e.to_string())?;
            self.loss = eval.loss.total;
            self.iteration += 1;
        }
        Ok(self.loss)
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    /// Model values on `n` uniform points.
    pub fn prediction(&self, n: usize) -> Vec<f64> {
        let pts: Vec<Point> = uniform(n).into_iter().map(|x| [x, 0.0]).collect();
        self.model.values(&pts)
    }

    /// Relative L2 test error on 400 uniform points.
    pub fn l2(&self) -> f64 {
        let pts: Vec<Point> = uniform(400).into_iter().map(|x| [x, 0.0]).collect();
        let f = self.problem.analytic_field().expect("examples 1-3 have closed forms");
        let exact: Vec<f64> = pts.iter().map(|p| f.value(p)).collect();
        l2_relative_error(&self.model.values(&pts), &exact).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_agree() {
        let e = exact_profile(1, 1e-2, 11).unwrap();
        assert_eq!(e.xs().len(), 11);
        let fd = fd_profile(1, 1e-2, 256).unwrap();
        let last = fd.values().len() - 1;
        assert!((fd.values()[last] - e.values()[10]).abs() < 1e-12);
        assert_eq!(mesh_nodes(1, 1e-2, 256).unwrap(), fd.xs());
        assert!(exact_profile(4, 1e-2, 11).is_err());
    }

    #[test]
    fn factor_is_one_at_the_layer() {
        let f = layer_factor(1, 1e-2, 101).unwrap();
        assert_eq!(f.values()[100], 1.0);
        assert!(f.values()[0] < 1e-40);
        let f = layer_factor(3, 1e-2, 101).unwrap();
        assert_eq!(f.values()[0], 1.0);
    }

    #[test]
    fn trainer_reduces_loss() {
        let mut t = Trainer::new(1, 1e-2, true, 64, 8, 1).unwrap();
        let first = t.step(1).unwrap();
        let later = t.step(200).unwrap();
        assert_eq!(t.iteration(), 201);
        assert!(later < first, "{first} -> {later}");
        assert_eq!(t.prediction(5).len(), 5);
        assert!(t.l2().is_finite());
    }
}
