use nalgebra::{DMatrix, DVector};

use super::chain::SparseMatrix;
use super::OracleError;

/// Chains up to this size are solved by dense LU; larger ones by power
/// iteration.
pub const DIRECT_SOLVE_LIMIT: usize = 1500;

/// Target `‖πP − π‖₁`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

const MAX_ITERATIONS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    PowerIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub distribution: Vec<f64>,
    pub residual: f64,
    pub method: SolveMethod,
}

/// The stationary distribution `π = πP`, `Σπ = 1`.
pub fn stationary(p: &SparseMatrix) -> Result<Stationary, OracleError> {
    if p.dim() <= DIRECT_SOLVE_LIMIT {
        direct(p)
    } else {
        power(p, vec![1.0 / p.dim() as f64; p.dim()])
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
}

/// Solves `(Pᵀ − I) π = 0` with one equation replaced by `Σπ = 1`.
fn direct(p: &SparseMatrix) -> Result<Stationary, OracleError> {
    let n = p.dim();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in p.row(i) {
            a[(j, i)] += v;
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(OracleError::Singular)?;
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    normalize(&mut pi);
    let residual = p.residual(&pi);
    if residual > RESIDUAL_TOLERANCE {
        // rounding on a badly conditioned system; polish iteratively
        let mut polished = power(p, pi)?;
        polished.method = SolveMethod::Direct;
        return Ok(polished);
    }
    Ok(Stationary {
        distribution: pi,
        residual,
        method: SolveMethod::Direct,
    })
}

/// Iterates the lazy chain `(I + P) / 2`, which has the same stationary
/// distribution and converges for periodic chains too.
fn power(p: &SparseMatrix, mut pi: Vec<f64>) -> Result<Stationary, OracleError> {
    for it in 0..MAX_ITERATIONS {
        let next = p.left_mul(&pi);
        if it % 16 == 0 {
            let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            if residual <= RESIDUAL_TOLERANCE * 0.5 {
                break;
            }
        }
        for (x, y) in pi.iter_mut().zip(&next) {
            *x = 0.5 * (*x + y);
        }
        if it % 256 == 0 {
            normalize(&mut pi);
        }
    }
    normalize(&mut pi);
    let final_residual = p.residual(&pi);
    if final_residual > RESIDUAL_TOLERANCE {
        return Err(OracleError::NotConverged {
            residual: final_residual,
        });
    }
    Ok(Stationary {
        distribution: pi,
        residual: final_residual,
        method: SolveMethod::PowerIteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_state_chain_is_uniform() {
        let p = SparseMatrix::from_rows(vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.5), (1, 0.5)]]);
        let s = stationary(&p).unwrap();
        assert!((s.distribution[0] - 0.5).abs() < 1e-15);
        assert!(s.residual <= RESIDUAL_TOLERANCE);
    }

    #[test]
    fn power_iteration_agrees_with_the_direct_solve() {
        let p = SparseMatrix::from_rows(vec![
            vec![(0, 0.1), (1, 0.6), (2, 0.3)],
            vec![(0, 0.4), (2, 0.6)],
            vec![(0, 0.5), (1, 0.25), (2, 0.25)],
        ]);
        let d = direct(&p).unwrap();
        let it = power(&p, vec![1.0 / 3.0; 3]).unwrap();
        for (a, b) in d.distribution.iter().zip(&it.distribution) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(it.method, SolveMethod::PowerIteration);
    }

    #[test]
    fn periodic_chains_still_solve() {
        let p = SparseMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]);
        let it = power(&p, vec![1.0, 0.0]).unwrap();
        assert!((it.distribution[0] - 0.5).abs() < 1e-12);
    }
}
