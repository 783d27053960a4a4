//! Minimal linear algebra backend: scalar, dense vector and CSR matrix behind
//! a rank-generic tensor interface, plus the few solvers the drivers need.

mod csr;
pub(crate) mod dense;
mod pattern;
mod solve;

pub use csr::CsrMatrix;
pub use dense::DenseMatrix;
pub use pattern::{PatternBuilder, SparsityPattern};
pub use solve::{solve_linear, Method, Precond, SolveReport, SolverOptions};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LaError {
    #[error("rank-2 tensor creation requires a sparsity pattern")]
    MissingPattern,
    #[error("insertion at ({row}, {col}) is outside the sparsity pattern")]
    OutsidePattern { row: usize, col: usize },
    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("solver did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is singular (pivot {pivot:.3e} below threshold)")]
    SingularMatrix { pivot: f64 },
    #[error("dense direct solve refused for N = {n} (guard: N <= {max})")]
    TooLargeForDense { n: usize, max: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Rank-generic tensor handed to the assembler: the three ranks a variational
/// form can produce share one insertion interface.
#[derive(Debug, Clone)]
pub enum GenericTensor {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(CsrMatrix),
}

impl GenericTensor {
    /// Zero-initialized tensor of the given rank. Rank 2 requires a pattern,
    /// rank 1 a length; rank 0 ignores both.
    pub fn new(rank: usize, len: Option<usize>, pattern: Option<&SparsityPattern>) -> Result<Self, LaError> {
        match rank {
            0 => Ok(GenericTensor::Scalar(0.0)),
            1 => {
                let n = len.ok_or_else(|| LaError::DimensionMismatch {
                    context: "rank-1 tensor needs a length".into(),
                })?;
                Ok(GenericTensor::Vector(vec![0.0; n]))
            }
            2 => {
                let p = pattern.ok_or(LaError::MissingPattern)?;
                Ok(GenericTensor::Matrix(CsrMatrix::from_pattern(p)))
            }
            r => Err(LaError::DimensionMismatch {
                context: format!("unsupported tensor rank {r}"),
            }),
        }
    }

    /// Accumulate a dense local block. `rows` addresses the first axis,
    /// `cols` the second (rank 2 only). Out-of-pattern insertion is a hard
    /// failure: it signals a sparsity prediction bug, the matrix never grows.
    pub fn add_local(&mut self, block: &[f64], rows: &[usize], cols: &[usize]) -> Result<(), LaError> {
        match self {
            GenericTensor::Scalar(s) => {
                debug_assert_eq!(block.len(), 1);
                *s += block[0];
                Ok(())
            }
            GenericTensor::Vector(v) => {
                for (bi, &r) in rows.iter().enumerate() {
                    if r >= v.len() {
                        return Err(LaError::IndexOutOfRange { index: r, len: v.len() });
                    }
                    v[r] += block[bi];
                }
                Ok(())
            }
            GenericTensor::Matrix(m) => m.add_block(block, rows, cols),
        }
    }

    /// No-op for the in-memory backend beyond a finiteness check; kept so the
    /// assembler's insert/finalize protocol stays explicit. Idempotent.
    pub fn finalize(&mut self) -> Result<(), LaError> {
        let finite = match self {
            GenericTensor::Scalar(s) => s.is_finite(),
            GenericTensor::Vector(v) => v.iter().all(|x| x.is_finite()),
            GenericTensor::Matrix(m) => m.values().iter().all(|x| x.is_finite()),
        };
        if finite {
            Ok(())
        } else {
            Err(LaError::DimensionMismatch {
                context: "non-finite entry after assembly".into(),
            })
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            GenericTensor::Scalar(s) => Some(*s),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&Vec<f64>> {
        match self {
            GenericTensor::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&CsrMatrix> {
        match self {
            GenericTensor::Matrix(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_matrix_mut(&mut self) -> Option<&mut CsrMatrix> {
        match self {
            GenericTensor::Matrix(m) => Some(m),
            _ => None,
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
