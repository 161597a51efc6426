//! Collocation, boundary, initial and test point sets.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::diffnet::Point;
use crate::error::{Error, Result};
use crate::problems::{Face, PerturbedProblem, ProblemKind};

/// Test points used when no count is configured.
pub const DEFAULT_TEST_POINTS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub point: Point,
    pub face: Face,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSets {
    pub interior: Vec<Point>,
    pub boundary: Vec<BoundaryPoint>,
    /// Points on `t = 0`; empty for steady problems.
    pub initial: Vec<Point>,
    pub test: Vec<Point>,
}

/// Uniform draw in the open interval `(0, 1)`.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Latin hypercube sample of `n` points in `[0,1)^dim`.
///
/// Along each axis every stratum `[k/n, (k+1)/n)` holds exactly one point.
/// Coordinates are never exactly 0, so the points are interior.
pub fn latin_hypercube(n: usize, dim: usize, seed: u64) -> Vec<Point> {
    assert!((1..=2).contains(&dim), "dimension must be 1 or 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![[0.0; 2]; n];
    let nf = n as f64;
    for axis in 0..dim {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for (p, &k) in pts.iter_mut().zip(&perm) {
            let (lo, hi) = (k as f64 / nf, (k + 1) as f64 / nf);
            p[axis] = loop {
                let v = (k as f64 + open_unit(&mut rng)) / nf;
                if v >= lo && v < hi && v > 0.0 {
                    break v;
                }
            };
        }
    }
    pts
}

/// `n` equispaced points on `[0,1]` in 1D, otherwise a `m x m` tensor grid
/// with `m = ceil(sqrt(n))`, row-major with the second coordinate outermost.
pub fn test_grid(kind: ProblemKind, n: usize) -> Vec<Point> {
    assert!(n >= 2, "test grid needs at least two points");
    match kind {
        ProblemKind::Steady1D => (0..n).map(|i| [i as f64 / (n - 1) as f64, 0.0]).collect(),
        _ => {
            let m = (n as f64).sqrt().ceil() as usize;
            let m = if m * m < n { m + 1 } else { m };
            tensor_grid(m)
        }
    }
}

/// `m x m` grid on the closed unit square, second coordinate outermost.
pub fn tensor_grid(m: usize) -> Vec<Point> {
    let s = |i: usize| i as f64 / (m - 1) as f64;
    (0..m)
        .flat_map(|j| (0..m).map(move |i| [s(i), s(j)]))
        .collect()
}

pub fn sample_problem_points(
    problem: &PerturbedProblem,
    n_interior: usize,
    n_boundary: usize,
    n_initial: usize,
    seed: u64,
) -> Result<PointSets> {
    let kind = problem.kind;
    if n_interior == 0 {
        return Err(Error::config("n_interior", "must be positive"));
    }
    if n_boundary == 0 {
        return Err(Error::config("n_boundary", "must be positive"));
    }
    match (kind.is_time(), n_initial) {
        (false, k) if k > 0 => {
            return Err(Error::config("n_initial", "only time problems take initial points"))
        }
        (true, 0) => return Err(Error::config("n_initial", "must be positive")),
        _ => {}
    }
    let interior = latin_hypercube(n_interior, kind.dim(), seed);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let faces = kind.faces();
    let per = n_boundary / faces.len();
    let extra = n_boundary % faces.len();
    let mut boundary = Vec::with_capacity(n_boundary);
    for (i, &face) in faces.iter().enumerate() {
        let count = per + if i == 0 { extra } else { 0 };
        for _ in 0..count {
            let s = if kind == ProblemKind::Steady1D {
                0.0
            } else {
                rng.random::<f64>()
            };
            boundary.push(BoundaryPoint {
                point: face.point(s),
                face,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let initial = (0..n_initial)
        .map(|_| [open_unit(&mut rng), 0.0])
        .collect();

    Ok(PointSets {
        interior,
        boundary,
        initial,
        test: test_grid(kind, DEFAULT_TEST_POINTS),
    })
}
