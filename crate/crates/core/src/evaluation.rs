//! Test-set error, run reports and solution grid dumps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffnet::{FieldEvaluator, Point};
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::fdref::ReferenceSolution;
use crate::layers::Mode;
use crate::problems::{PerturbedProblem, ProblemKind};
use crate::sampling::tensor_grid;
use crate::training::LossBreakdown;

/// Denominator of the relative L2 error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum L2Norm {
    /// Normalise by the prediction.
    #[default]
    Paper,
    /// Normalise by the reference values.
    Exact,
}

impl std::str::FromStr for L2Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(L2Norm::Paper),
            "exact" => Ok(L2Norm::Exact),
            _ => Err(Error::InvalidArgument(format!("unknown norm `{s}` (paper | exact)"))),
        }
    }
}

/// `sqrt(sum (pred - ref)^2 / sum pred^2)`; `+inf` when the prediction is
/// identically zero.
pub fn l2_relative_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    l2_relative_error_with(pred, reference, L2Norm::Paper)
}

pub fn l2_relative_error_with(pred: &[f64], reference: &[f64], norm: L2Norm) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::LengthMismatch(pred.len(), reference.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    let base = match norm {
        L2Norm::Paper => pred,
        L2Norm::Exact => reference,
    };
    let den: f64 = base.iter().map(|v| v * v).sum();
    if den == 0.0 {
        log::warn!("relative L2 error undefined: normalising field is identically zero");
        return Ok(f64::INFINITY);
    }
    Ok((num / den).sqrt())
}

/// Source of reference values on test points.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    Analytic,
    Fd(&'a ReferenceSolution),
    None,
}

impl Reference<'_> {
    pub fn label(&self) -> String {
        match self {
            Reference::Analytic => "analytic".into(),
            Reference::Fd(r) => format!("fd:{}", r.mesh.nx),
            Reference::None => "none".into(),
        }
    }

    /// Reference values at `points`, or `None` without a reference.
    pub fn values(&self, problem: &PerturbedProblem, points: &[Point]) -> Result<Option<Vec<f64>>> {
        match self {
            Reference::Analytic => {
                let f = problem
                    .analytic_field()
                    .ok_or_else(|| Error::MissingAnalytic(problem.name.clone()))?;
                Ok(Some(points.iter().map(|p| f.value(p)).collect()))
            }
            Reference::Fd(r) => {
                if r.kind != problem.kind {
                    return Err(Error::InvalidArgument(format!(
                        "reference is for a {} problem, not {}",
                        r.kind, problem.kind
                    )));
                }
                Ok(Some(r.values_at(points)))
            }
            Reference::None => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub example: Option<usize>,
    pub problem: String,
    pub mode: Mode,
    pub epsilon: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Absent when no reference exists.
    pub l2_test: Option<f64>,
    pub norm: L2Norm,
    pub reference: String,
    pub n_test: usize,
    pub history: Option<String>,
    pub loss: LossBreakdown,
    pub config: Option<ExperimentConfig>,
}

impl RunReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Evaluates `model` on the test points. Loss, timing and the configuration
/// echo are left for the caller to fill in.
pub fn evaluate_run(
    model: &dyn FieldEvaluator,
    problem: &PerturbedProblem,
    mode: Mode,
    reference: Reference<'_>,
    test_points: &[Point],
    norm: L2Norm,
) -> Result<RunReport> {
    if model.input_dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: model.input_dim(),
        });
    }
    let l2_test = match reference.values(problem, test_points)? {
        Some(r) => Some(l2_relative_error_with(&model.values(test_points), &r, norm)?),
        None => None,
    };
    Ok(RunReport {
        example: problem.example_id,
        problem: problem.name.clone(),
        mode,
        epsilon: problem.epsilon,
        iterations: 0,
        wall_time_s: 0.0,
        l2_test,
        norm,
        reference: reference.label(),
        n_test: test_points.len(),
        history: None,
        loss: LossBreakdown::default(),
        config: None,
    })
}

/// Dense solution grid: coordinates, model value and, with a reference, the
/// reference value and pointwise absolute error.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDump {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn grid_points(kind: ProblemKind, resolution: usize) -> Vec<Point> {
    match kind {
        ProblemKind::Steady1D => (0..resolution)
            .map(|i| [i as f64 / (resolution - 1) as f64, 0.0])
            .collect(),
        _ => tensor_grid(resolution),
    }
}

pub fn export_solution_grid(
    model: &dyn FieldEvaluator,
    problem: &PerturbedProblem,
    reference: Reference<'_>,
    resolution: usize,
) -> Result<GridDump> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
    }
    let pts = grid_points(problem.kind, resolution);
    let u = model.values(&pts);
    let r = reference.values(problem, &pts)?;
    let mut columns = vec!["x".to_string()];
    match problem.kind {
        ProblemKind::Steady1D => {}
        ProblemKind::Steady2D => columns.push("y".into()),
        ProblemKind::Time1D => columns.push("t".into()),
    }
    columns.push("u_model".into());
    if r.is_some() {
        columns.push("u_ref".into());
        columns.push("abs_err".into());
    }
    let two = problem.dim() == 2;
    let rows = pts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut row = vec![p[0]];
            if two {
                row.push(p[1]);
            }
            row.push(u[k]);
            if let Some(r) = &r {
                row.push(r[k]);
                row.push((u[k] - r[k]).abs());
            }
            row
        })
        .collect();
    Ok(GridDump { columns, rows })
}

impl GridDump {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::LengthMismatch(columns.len(), row.len()));
            }
            rows.push(row);
        }
        Ok(GridDump { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.columns.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}
