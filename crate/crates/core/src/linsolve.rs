//! Sparse direct solves of the bordered saddle-point systems.

use faer::linalg::solvers::Solve;
use faer::{Mat, Par};

use crate::error::{Error, Result};
use crate::sparse::{norm2, Triplets};
use crate::spaces::ConstraintSet;

/// A bordered system `[velocity; pressure; gauge]` together with its right-hand side.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub n_vel: usize,
    pub n_press: usize,
    pub matrix: Triplets,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSolveReport {
    /// `||K x - b|| / ||b||` of the constrained system, recomputed after the solve.
    pub relative_residual: f64,
    pub refinement_steps: usize,
    pub nnz: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    pub report: LinearSolveReport,
}

pub const DEFAULT_TOL: f64 = 1e-12;
const MAX_REFINEMENT: usize = 4;

/// Runs faer kernels single threaded so repeated solves are bitwise reproducible.
pub fn set_deterministic(on: bool) {
    faer::set_global_parallelism(if on { Par::Seq } else { Par::rayon(0) });
}

/// Eliminates the Dirichlet rows and columns symmetrically and solves.
///
/// Constrained velocity entries of the result are exactly the prescribed values.
pub fn solve_saddle(system: &SaddleSystem, constraints: &ConstraintSet, tol: f64) -> Result<SaddleSolution> {
    let n = system.n_vel + system.n_press + 1;
    if system.matrix.nrows != n || system.matrix.ncols != n || system.rhs.len() != n {
        return Err(Error::InvalidArgument(format!(
            "system dimension mismatch: matrix {}x{}, rhs {}, expected {n}",
            system.matrix.nrows,
            system.matrix.ncols,
            system.rhs.len()
        )));
    }
    let mut prescribed = vec![None; n];
    for (&d, &v) in constraints.dofs.iter().zip(&constraints.values) {
        prescribed[d] = Some(v);
    }

    let mut rhs = system.rhs.clone();
    let mut k = Triplets::new(n, n);
    k.entries.reserve(system.matrix.entries.len() + constraints.dofs.len());
    for &(i, j, v) in &system.matrix.entries {
        if prescribed[i].is_some() {
            continue;
        }
        match prescribed[j] {
            Some(val) => rhs[i] -= v * val,
            None => k.push(i, j, v),
        }
    }
    for (i, p) in prescribed.iter().enumerate() {
        if let Some(val) = p {
            k.push(i, i, 1.0);
            rhs[i] = *val;
        }
    }
    if !constraints.gauge {
        // Without the gauge the multiplier is decoupled and the constant
        // pressure mode stays singular; the factorization reports it.
        k.entries.retain(|&(i, j, _)| i != n - 1 && j != n - 1);
        k.push(n - 1, n - 1, 1.0);
        rhs[n - 1] = 0.0;
    }

    let csr = k.to_csr();
    let solver = if constraints.gauge { BorderedSolver::new(&k)? } else { BorderedSolver::plain(&k)? };
    let solve = |b: &[f64]| solver.solve(b);

    let bnorm = norm2(&rhs).max(f64::MIN_POSITIVE);
    let mut x = solve(&rhs);
    let residual = |x: &[f64]| -> Vec<f64> {
        csr.mul_vec(x).iter().zip(&rhs).map(|(kx, b)| b - kx).collect()
    };
    let mut r = residual(&x);
    let mut rel = norm2(&r) / bnorm;
    let mut steps = 0;
    while rel > tol && steps < MAX_REFINEMENT {
        let dx = solve(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let rt = residual(&trial);
        let rel_t = norm2(&rt) / bnorm;
        steps += 1;
        if !(rel_t < rel) {
            break;
        }
        x = trial;
        r = rt;
        rel = rel_t;
    }
    if !rel.is_finite() {
        return Err(Error::LinearSolve("solution contains non-finite values".into()));
    }

    let mut velocity = x[..system.n_vel].to_vec();
    constraints.apply(&mut velocity);
    Ok(SaddleSolution {
        velocity,
        pressure: x[system.n_vel..n - 1].to_vec(),
        multiplier: x[n - 1],
        report: LinearSolveReport { relative_residual: rel, refinement_steps: steps, nnz: csr.nnz(), converged: rel <= tol },
    })
}

/// Direct solver for a matrix whose last row and column are dense borders.
///
/// The dense gauge row would ruin the fill of a sparse LU, so the border is
/// reduced to a single coupling `(k, last)` and the remainder is restored as
/// a rank-two Woodbury correction.
struct BorderedSolver {
    lu: Factorization,
    /// `K0^{-1} U` for the two correction columns.
    ku: [Vec<f64>; 2],
    /// Rows of `V^T`.
    v: [Vec<(usize, f64)>; 2],
    /// Inverse of the 2x2 capacitance matrix `I + V^T K0^{-1} U`.
    cap_inv: [[f64; 2]; 2],
}

impl BorderedSolver {
    fn plain(k: &Triplets) -> Result<Self> {
        Ok(BorderedSolver { lu: Factorization::new(k)?, ku: [vec![], vec![]], v: [vec![], vec![]], cap_inv: [[0.0; 2]; 2] })
    }

    fn new(k: &Triplets) -> Result<Self> {
        let n = k.nrows;
        let last = n - 1;
        let mut col = vec![0.0; n];
        let mut row = vec![0.0; n];
        for &(i, j, v) in &k.entries {
            if j == last && i != last {
                col[i] += v;
            } else if i == last && j != last {
                row[j] += v;
            }
        }
        let pivot = (0..last)
            .max_by(|&a, &b| (col[a] * row[a]).abs().total_cmp(&(col[b] * row[b]).abs()))
            .filter(|&p| col[p] != 0.0 && row[p] != 0.0);
        let Some(p) = pivot else {
            return Self::plain(k);
        };
        let mut reduced = Triplets::new(n, n);
        reduced.entries = k
            .entries
            .iter()
            .copied()
            .filter(|&(i, j, _)| (i != last && j != last) || i == j || (i == p || j == p))
            .collect();
        let lu = Factorization::new(&reduced)?;

        // K = K0 + u0 e_last^T + e_last v1^T
        let mut u0 = col.clone();
        u0[p] = 0.0;
        u0[last] = 0.0;
        let mut u1 = vec![0.0; n];
        u1[last] = 1.0;
        let v0 = vec![(last, 1.0)];
        let v1: Vec<(usize, f64)> =
            row.iter().enumerate().filter(|&(j, &x)| j != p && j != last && x != 0.0).map(|(j, &x)| (j, x)).collect();
        let ku = [lu.solve(&u0), lu.solve(&u1)];
        let v = [v0, v1];
        let apply_v = |r: usize, x: &[f64]| v[r].iter().map(|&(j, a)| a * x[j]).sum::<f64>();
        let c = [
            [1.0 + apply_v(0, &ku[0]), apply_v(0, &ku[1])],
            [apply_v(1, &ku[0]), 1.0 + apply_v(1, &ku[1])],
        ];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if !(det.abs() > 1e-300) || !det.is_finite() {
            return Err(Error::LinearSolve("singular gauge border".into()));
        }
        let cap_inv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        Ok(BorderedSolver { lu, ku, v, cap_inv })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.lu.solve(b);
        if self.v[0].is_empty() {
            return x;
        }
        let w: Vec<f64> = (0..2).map(|r| self.v[r].iter().map(|&(j, a)| a * x[j]).sum::<f64>()).collect();
        let y = [
            self.cap_inv[0][0] * w[0] + self.cap_inv[0][1] * w[1],
            self.cap_inv[1][0] * w[0] + self.cap_inv[1][1] * w[1],
        ];
        for (i, xi) in x.iter_mut().enumerate() {
            *xi -= self.ku[0][i] * y[0] + self.ku[1][i] * y[1];
        }
        x
    }
}

/// Reusable sparse LU factorization of a square matrix.
pub struct Factorization {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.n).finish()
    }
}

impl Factorization {
    pub fn new(matrix: &Triplets) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::InvalidArgument("factorization needs a square matrix".into()));
        }
        let lu = matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("factorization failed ({e:?})")))?;
        Ok(Factorization { lu, n: matrix.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}
