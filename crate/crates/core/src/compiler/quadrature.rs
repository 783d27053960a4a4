//! Quadrature rules on the reference simplices.
//!
//! The interval rule is Gauss–Legendre. Triangle and tetrahedron rules are
//! collapsed tensor products: the simplex is mapped to a square or cube by
//! the Duffy transform, the extra powers of (1-coordinate) coming from the
//! Jacobian are absorbed into Gauss–Jacobi weights, and the tensor rule is
//! pushed back to the simplex. This gives rules of arbitrary degree whose
//! point count grows like n^tdim with n = ceil((degree+1)/2).
//!
//! Nodes are Newton roots of the Jacobi polynomial, found one by one with
//! deflation from Chebyshev initial guesses; weights are Christoffel
//! numbers, 1 / sum of squared orthonormal polynomial values at the node.

use super::CompilerError;
use crate::element::modal::{jacobi_norm2, jacobi_seq, Poly};
use crate::reference::CellType;

pub const MAX_QUADRATURE_DEGREE: usize = 20;

/// Points (flat, tdim reals each) and weights on a reference cell. Weights
/// sum to the reference volume.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureRule {
    pub cell: CellType,
    pub degree: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        let d = self.cell.tdim();
        &self.points[q * d..(q + 1) * d]
    }
}

/// Value and derivative of P_n^{(alpha,0)} at t.
fn jacobi_eval(alpha: usize, n: usize, t: f64) -> (f64, f64) {
    let s = jacobi_seq(alpha, n, Poly::affine(t, [1.0, 0.0, 0.0]), Poly::constant(1.0));
    (s[n].v, s[n].g[0])
}

/// Gauss–Jacobi rule with weight (1-t)^alpha on [-1, 1]; alpha = 0 is
/// Gauss–Legendre. Points ascend.
fn gauss_jacobi(alpha: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut roots: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev guess, largest root first so deflation walks down.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos();
        for _ in 0..100 {
            let (p, dp) = jacobi_eval(alpha, n, x);
            let defl: f64 = roots.iter().map(|&r| 1.0 / (x - r)).sum();
            let step = p / (dp - p * defl);
            x -= step;
            x = x.clamp(-1.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        // Two plain Newton polish steps once deflation has separated it.
        for _ in 0..2 {
            let (p, dp) = jacobi_eval(alpha, n, x);
            x -= p / dp;
        }
        roots.push(x);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let weights = roots
        .iter()
        .map(|&x| {
            let s = jacobi_seq(alpha, n - 1, Poly::affine(x, [1.0, 0.0, 0.0]), Poly::constant(1.0));
            let kernel: f64 = (0..n).map(|k| s[k].v * s[k].v / jacobi_norm2(alpha, k)).sum();
            1.0 / kernel
        })
        .collect();
    (roots, weights)
}

/// Build a rule exact for polynomials of total degree <= `degree`.
pub fn quadrature_rule(cell: CellType, degree: usize) -> Result<QuadratureRule, CompilerError> {
    if degree == 0 || degree > MAX_QUADRATURE_DEGREE {
        return Err(CompilerError::DegreeOutOfRange { degree });
    }
    let n = degree / 2 + 1; // ceil((degree+1)/2)
    let (points, weights) = match cell {
        CellType::Interval => {
            let (t, w) = gauss_jacobi(0, n);
            let points: Vec<f64> = t.iter().map(|&a| (a + 1.0) / 2.0).collect();
            let weights: Vec<f64> = w.iter().map(|&w| w / 2.0).collect();
            (points, weights)
        }
        CellType::Triangle => {
            let (ta, wa) = gauss_jacobi(0, n);
            let (tb, wb) = gauss_jacobi(1, n);
            let mut points = Vec::with_capacity(2 * n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (j, &b) in tb.iter().enumerate() {
                for (i, &a) in ta.iter().enumerate() {
                    points.push((1.0 + a) * (1.0 - b) / 4.0);
                    points.push((1.0 + b) / 2.0);
                    weights.push(wa[i] * wb[j] / 8.0);
                }
            }
            (points, weights)
        }
        CellType::Tetrahedron => {
            let (ta, wa) = gauss_jacobi(0, n);
            let (tb, wb) = gauss_jacobi(1, n);
            let (tc, wc) = gauss_jacobi(2, n);
            let mut points = Vec::with_capacity(3 * n * n * n);
            let mut weights = Vec::with_capacity(n * n * n);
            for (k, &c) in tc.iter().enumerate() {
                for (j, &b) in tb.iter().enumerate() {
                    for (i, &a) in ta.iter().enumerate() {
                        points.push((1.0 + a) * (1.0 - b) * (1.0 - c) / 8.0);
                        points.push((1.0 + b) * (1.0 - c) / 4.0);
                        points.push((1.0 + c) / 2.0);
                        weights.push(wa[i] * wb[j] * wc[k] / 64.0);
                    }
                }
            }
            (points, weights)
        }
    };
    Ok(QuadratureRule { cell, degree, points, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::modal;
    use approx::assert_relative_eq;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exact monomial integral over the reference cell.
    fn monomial_integral(cell: CellType, e: &[usize]) -> f64 {
        match cell {
            CellType::Interval => 1.0 / (e[0] + 1) as f64,
            CellType::Triangle => {
                factorial(e[0]) * factorial(e[1]) / factorial(e[0] + e[1] + 2)
            }
            CellType::Tetrahedron => {
                factorial(e[0]) * factorial(e[1]) * factorial(e[2])
                    / factorial(e[0] + e[1] + e[2] + 3)
            }
        }
    }

    fn integrate_monomial(rule: &QuadratureRule, e: &[usize]) -> f64 {
        let d = rule.cell.tdim();
        (0..rule.num_points())
            .map(|q| {
                let x = rule.point(q);
                let m: f64 = (0..d).map(|k| x[k].powi(e[k] as i32)).product();
                rule.weights[q] * m
            })
            .sum()
    }

    /// Exponent tuples of total degree <= q.
    fn exponents(dim: usize, q: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = vec![0; dim];
        fn rec(k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k == cur.len() {
                out.push(cur.clone());
                return;
            }
            for e in 0..=left {
                cur[k] = e;
                rec(k + 1, left - e, cur, out);
            }
            cur[k] = 0;
        }
        rec(0, q, &mut cur, &mut out);
        out
    }

    #[test]
    fn weights_sum_to_reference_volume() {
        for cell in [CellType::Interval, CellType::Triangle, CellType::Tetrahedron] {
            for degree in 1..=MAX_QUADRATURE_DEGREE {
                let rule = quadrature_rule(cell, degree).unwrap();
                let sum: f64 = rule.weights.iter().sum();
                assert_relative_eq!(sum, cell.volume(), epsilon = 1e-14, max_relative = 1e-14);
                assert!(rule.weights.iter().all(|&w| w > 0.0));
            }
        }
    }

    #[test]
    fn interval_degree_three_uses_two_points() {
        // Gauss property: 2 points are exact through degree 3.
        let rule = quadrature_rule(CellType::Interval, 3).unwrap();
        assert_eq!(rule.num_points(), 2);
        assert_relative_eq!(integrate_monomial(&rule, &[3]), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn triangle_degree_one_integrates_x() {
        let rule = quadrature_rule(CellType::Triangle, 1).unwrap();
        assert_relative_eq!(integrate_monomial(&rule, &[1, 0]), 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn monomials_exact_through_declared_degree() {
        // Oracle: int x^a y^b z^c over the reference simplex is the
        // factorial formula a! b! c! / (a+b+c+tdim)!.
        for cell in [CellType::Interval, CellType::Triangle, CellType::Tetrahedron] {
            for degree in 1..=10 {
                let rule = quadrature_rule(cell, degree).unwrap();
                for e in exponents(cell.tdim(), degree) {
                    let got = integrate_monomial(&rule, &e);
                    let want = monomial_integral(cell, &e);
                    assert_relative_eq!(got, want, max_relative = 1e-14, epsilon = 1e-16);
                }
            }
        }
    }

    #[test]
    fn high_degree_interval_rule_still_gaussian() {
        let rule = quadrature_rule(CellType::Interval, 15).unwrap();
        assert_eq!(rule.num_points(), 8);
        assert_relative_eq!(integrate_monomial(&rule, &[15]), 1.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn degree_bounds_enforced() {
        assert!(matches!(
            quadrature_rule(CellType::Triangle, 0),
            Err(CompilerError::DegreeOutOfRange { degree: 0 })
        ));
        assert!(matches!(
            quadrature_rule(CellType::Triangle, 21),
            Err(CompilerError::DegreeOutOfRange { degree: 21 })
        ));
    }

    #[test]
    fn modal_basis_is_orthonormal_under_quadrature() {
        // Gram matrix of the modal basis integrated with an exact rule;
        // this pins the normalization constants used by the elements.
        for (cell, q) in [
            (CellType::Interval, 6),
            (CellType::Triangle, 4),
            (CellType::Tetrahedron, 3),
        ] {
            let n = modal::num_modes(cell, q);
            let rule = quadrature_rule(cell, 2 * q).unwrap();
            let mut gram = vec![0.0; n * n];
            for qp in 0..rule.num_points() {
                let (vals, _) = modal::eval_modes(cell, q, rule.point(qp));
                for i in 0..n {
                    for j in 0..n {
                        gram[i * n + j] += rule.weights[qp] * vals[i] * vals[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(gram[i * n + j], want, epsilon = 1e-12);
                }
            }
        }
    }
}
