//! Linear solvers: preconditioned CG and BiCGStab, plus a densified direct
//! solve for small systems.

use super::{dot, norm2, CsrMatrix, LaError};

const DENSE_GUARD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cg,
    BiCgStab,
    Lu,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "cg" => Some(Method::Cg),
            "bicgstab" => Some(Method::BiCgStab),
            "lu" => Some(Method::Lu),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cg => "cg",
            Method::BiCgStab => "bicgstab",
            Method::Lu => "lu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precond {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub method: Method,
    pub precond: Precond,
    pub rtol: f64,
    pub atol: f64,
    /// Iteration cap; `None` means 10 N.
    pub maxit: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { method: Method::Cg, precond: Precond::Jacobi, rtol: 1e-10, atol: 1e-50, maxit: None }
    }
}

impl SolverOptions {
    pub fn with_method(method: Method) -> Self {
        SolverOptions { method, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Inverse of the matrix diagonal; zero diagonal entries fall back to 1 so a
/// saddle-point block cannot poison the whole preconditioner.
fn jacobi_inverse(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal()
        .iter()
        .map(|&d| if d.abs() > f64::MIN_POSITIVE { 1.0 / d } else { 1.0 })
        .collect()
}

fn apply_precond(minv: Option<&[f64]>, r: &[f64], z: &mut [f64]) {
    match minv {
        Some(m) => {
            for i in 0..r.len() {
                z[i] = m[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    }
}

/// Solve A x = b. Post condition on success: the true residual satisfies
/// ‖b − A x‖₂ ≤ max(rtol ‖b‖₂, atol).
pub fn solve_linear(a: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport), LaError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(LaError::DimensionMismatch {
            context: format!("solve with A {}x{} and b of length {}", a.nrows(), a.ncols(), b.len()),
        });
    }
    let tol = (opts.rtol * norm2(b)).max(opts.atol);
    let maxit = opts.maxit.unwrap_or(10 * n.max(1));
    match opts.method {
        Method::Lu => {
            if n > DENSE_GUARD {
                return Err(LaError::TooLargeForDense { n, max: DENSE_GUARD });
            }
            let x = a.to_dense().solve(b)?;
            let residual = true_residual(a, b, &x);
            Ok((x, SolveReport { iterations: 1, residual }))
        }
        Method::Cg => {
            let minv = match opts.precond {
                Precond::Jacobi => Some(jacobi_inverse(a)),
                Precond::None => None,
            };
            cg(a, b, minv.as_deref(), tol, maxit)
        }
        Method::BiCgStab => {
            let minv = match opts.precond {
                Precond::Jacobi => Some(jacobi_inverse(a)),
                Precond::None => None,
            };
            bicgstab(a, b, minv.as_deref(), tol, maxit)
        }
    }
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let mut s = 0.0;
    for i in 0..b.len() {
        let d = b[i] - ax[i];
        s += d * d;
    }
    s.sqrt()
}

fn cg(a: &CsrMatrix, b: &[f64], minv: Option<&[f64]>, tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveReport), LaError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rnorm = norm2(&r);
    if rnorm <= tol {
        return Ok((x, SolveReport { iterations: 0, residual: rnorm }));
    }
    let mut z = vec![0.0; n];
    apply_precond(minv, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Indefinite or fully converged direction; report where we are.
            return Err(LaError::NoConvergence { iterations: it, residual: rnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= tol {
            // Recursive residual can drift; accept only on the true one.
            let true_r = true_residual(a, b, &x);
            if true_r <= tol {
                return Ok((x, SolveReport { iterations: it, residual: true_r }));
            }
        }
        apply_precond(minv, &r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LaError::NoConvergence { iterations: maxit, residual: rnorm })
}

fn bicgstab(a: &CsrMatrix, b: &[f64], minv: Option<&[f64]>, tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveReport), LaError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut rnorm = norm2(&r);
    if rnorm <= tol {
        return Ok((x, SolveReport { iterations: 0, residual: rnorm }));
    }
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let breakdown = |it: usize, res: f64| LaError::NoConvergence { iterations: it, residual: res };
    for it in 1..=maxit {
        let rho_next = dot(&r0, &r);
        if rho_next.abs() < 1e-300 {
            return Err(breakdown(it, rnorm));
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply_precond(minv, &p, &mut phat);
        a.matvec_into(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v.abs() < 1e-300 {
            return Err(breakdown(it, rnorm));
        }
        alpha = rho / r0v;
        // s lives in r from here on
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        if norm2(&r) <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            let true_r = true_residual(a, b, &x);
            if true_r <= tol {
                return Ok((x, SolveReport { iterations: it, residual: true_r }));
            }
            rnorm = true_r;
            omega = 1.0;
            continue;
        }
        apply_precond(minv, &r, &mut shat);
        a.matvec_into(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(breakdown(it, norm2(&r)));
        }
        omega = dot(&t, &r) / tt;
        if omega.abs() < 1e-300 {
            return Err(breakdown(it, norm2(&r)));
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] -= omega * t[i];
        }
        rnorm = norm2(&r);
        if rnorm <= tol {
            let true_r = true_residual(a, b, &x);
            if true_r <= tol {
                return Ok((x, SolveReport { iterations: it, residual: true_r }));
            }
            rnorm = true_r;
        }
    }
    Err(LaError::NoConvergence { iterations: maxit, residual: rnorm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::la::{DenseMatrix, PatternBuilder};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn csr_from_dense(d: &DenseMatrix) -> CsrMatrix {
        let mut b = PatternBuilder::new(d.nrows(), d.ncols());
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                if d.get(r, c) != 0.0 {
                    b.insert(r, c);
                }
            }
        }
        let mut m = CsrMatrix::from_pattern(&b.finalize());
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                if d.get(r, c) != 0.0 {
                    m.add(r, c, d.get(r, c)).unwrap();
                }
            }
        }
        m
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let mut d = DenseMatrix::zeros(6, 6);
        for i in 0..6 {
            d.set(i, i, 1.0);
        }
        let a = csr_from_dense(&d);
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let (x, report) = solve_linear(&a, &b, &SolverOptions::default()).unwrap();
        assert_eq!(report.iterations, 1);
        for i in 0..6 {
            assert_relative_eq!(x[i], b[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn diagonal_system() {
        let d = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let a = csr_from_dense(&d);
        for method in [Method::Cg, Method::BiCgStab, Method::Lu] {
            let (x, _) = solve_linear(&a, &[2.0, 4.0], &SolverOptions::with_method(method)).unwrap();
            assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(x[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cg_on_random_spd_within_n_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [5, 20, 50] {
            let scale = 1.0 / (n as f64).sqrt();
            let mut m = DenseMatrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    m.set(r, c, scale * rng.random_range(-1.0..1.0));
                }
            }
            // A = MᵀM + I is SPD
            let mt = m.transpose();
            let mut spd = DenseMatrix::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += mt.get(r, k) * m.get(k, c);
                    }
                    spd.set(r, c, acc + if r == c { 1.0 } else { 0.0 });
                }
            }
            let a = csr_from_dense(&spd);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let opts = SolverOptions {
                method: Method::Cg,
                precond: Precond::None,
                rtol: 1e-12,
                atol: 1e-50,
                maxit: Some(8 * n),
            };
            let (x, report) = solve_linear(&a, &b, &opts).unwrap();
            assert!(report.iterations <= n, "CG took {} iterations for n = {n}", report.iterations);
            let r = a.matvec(&x);
            let resid: f64 = b.iter().zip(&r).map(|(bi, ri)| (bi - ri) * (bi - ri)).sum::<f64>().sqrt();
            assert!(resid <= 1e-12 * norm2(&b) * 10.0);
        }
    }

    #[test]
    fn bicgstab_on_nonsymmetric_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let mut d = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                d.set(r, c, 0.1 * rng.random_range(-1.0..1.0));
            }
            d.add(r, r, 4.0); // diagonally dominant, nonsymmetric
        }
        let a = csr_from_dense(&d);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (x, _) = solve_linear(&a, &b, &SolverOptions::with_method(Method::BiCgStab)).unwrap();
        let xd = d.solve(&b).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], xd[i], epsilon = 1e-8, max_relative = 1e-8);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let d = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 3.0]]);
        let a = csr_from_dense(&d);
        let (x, report) = solve_linear(&a, &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_eq!(report.iterations, 0);
    }
}
