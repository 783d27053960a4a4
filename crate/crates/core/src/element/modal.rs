//! Orthonormal modal bases on the reference simplices.
//!
//! The scalar elements are built by interpolating an L2-orthonormal modal
//! basis at nodal points and inverting the resulting Vandermonde matrix,
//! which stays well conditioned far beyond the degrees monomials can
//! handle. On the interval the modes are scaled Legendre polynomials; on
//! the triangle and tetrahedron they are the collapsed-coordinate products
//! of Jacobi polynomials, evaluated in homogenized form so no division by
//! a vanishing coordinate ever occurs: P_n(u/v) * v^n satisfies the same
//! three-term recurrence with the z-term split into a u part and a v part,
//! and is a polynomial in (u, v).

use crate::reference::CellType;

/// Value plus gradient with respect to the reference coordinates. The
/// arithmetic below carries gradients through products, so recurrences
/// written in `Poly` differentiate themselves.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Poly {
    pub v: f64,
    pub g: [f64; 3],
}

impl Poly {
    pub fn constant(v: f64) -> Poly {
        Poly { v, g: [0.0; 3] }
    }

    pub fn affine(v: f64, g: [f64; 3]) -> Poly {
        Poly { v, g }
    }

    fn add(self, other: Poly) -> Poly {
        Poly {
            v: self.v + other.v,
            g: [self.g[0] + other.g[0], self.g[1] + other.g[1], self.g[2] + other.g[2]],
        }
    }

    fn sub(self, other: Poly) -> Poly {
        Poly {
            v: self.v - other.v,
            g: [self.g[0] - other.g[0], self.g[1] - other.g[1], self.g[2] - other.g[2]],
        }
    }

    fn mul(self, other: Poly) -> Poly {
        Poly {
            v: self.v * other.v,
            g: [
                self.g[0] * other.v + self.v * other.g[0],
                self.g[1] * other.v + self.v * other.g[1],
                self.g[2] * other.v + self.v * other.g[2],
            ],
        }
    }

    fn scale(self, s: f64) -> Poly {
        Poly { v: self.v * s, g: [self.g[0] * s, self.g[1] * s, self.g[2] * s] }
    }
}

/// Sequence S_0..S_n of homogenized Jacobi polynomials P_k^{(alpha,0)} with
/// S_k(u, v) = P_k(u/v) * v^k. With v = 1 this is the plain Jacobi sequence
/// and with alpha = 0 the Legendre sequence.
pub(crate) fn jacobi_seq(alpha: usize, n: usize, u: Poly, v: Poly) -> Vec<Poly> {
    let a = alpha as f64;
    let mut s = Vec::with_capacity(n + 1);
    s.push(Poly::constant(1.0));
    if n == 0 {
        return s;
    }
    s.push(u.scale((a + 2.0) / 2.0).add(v.scale(a / 2.0)));
    let vv = v.mul(v);
    for k in 2..=n {
        let kf = k as f64;
        // 2k(k+a)(2k+a-2) S_k = (2k+a-1)[(2k+a)(2k+a-2)u + a^2 v] S_{k-1}
        //                       - 2(k+a-1)(k-1)(2k+a) v^2 S_{k-2}
        let c0 = 2.0 * kf * (kf + a) * (2.0 * kf + a - 2.0);
        let c1 = (2.0 * kf + a - 1.0) * (2.0 * kf + a) * (2.0 * kf + a - 2.0);
        let c2 = (2.0 * kf + a - 1.0) * a * a;
        let c3 = 2.0 * (kf + a - 1.0) * (kf - 1.0) * (2.0 * kf + a);
        let t = u.scale(c1).add(v.scale(c2)).mul(s[k - 1]).sub(vv.mul(s[k - 2]).scale(c3));
        s.push(t.scale(1.0 / c0));
    }
    s
}

/// Squared L2 norm of P_n^{(alpha,0)} with weight (1-z)^alpha on [-1, 1].
pub(crate) fn jacobi_norm2(alpha: usize, n: usize) -> f64 {
    2f64.powi(alpha as i32 + 1) / (2 * n + alpha + 1) as f64
}

/// Number of polynomials of total degree at most `degree` on the cell.
pub(crate) fn num_modes(cell: CellType, degree: usize) -> usize {
    let q = degree;
    match cell {
        CellType::Interval => q + 1,
        CellType::Triangle => (q + 1) * (q + 2) / 2,
        CellType::Tetrahedron => (q + 1) * (q + 2) * (q + 3) / 6,
    }
}

/// Evaluate the full orthonormal modal basis of total degree <= `degree`
/// at one reference point. Returns values and reference-coordinate
/// gradients, both of length `num_modes`.
pub(crate) fn eval_modes(cell: CellType, degree: usize, x: &[f64]) -> (Vec<f64>, Vec<[f64; 3]>) {
    let n = num_modes(cell, degree);
    let mut values = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    let mut push = |p: Poly| {
        values.push(p.v);
        grads.push(p.g);
    };
    match cell {
        CellType::Interval => {
            let t = Poly::affine(2.0 * x[0] - 1.0, [2.0, 0.0, 0.0]);
            let leg = jacobi_seq(0, degree, t, Poly::constant(1.0));
            for (k, l) in leg.iter().enumerate() {
                push(l.scale(((2 * k + 1) as f64).sqrt()));
            }
        }
        CellType::Triangle => {
            let u = Poly::affine(2.0 * x[0] + x[1] - 1.0, [2.0, 1.0, 0.0]);
            let v = Poly::affine(1.0 - x[1], [0.0, -1.0, 0.0]);
            let w = Poly::affine(2.0 * x[1] - 1.0, [0.0, 2.0, 0.0]);
            let sp = jacobi_seq(0, degree, u, v);
            for p in 0..=degree {
                let jq = jacobi_seq(2 * p + 1, degree - p, w, Poly::constant(1.0));
                for (q, j) in jq.iter().enumerate().take(degree - p + 1) {
                    let c = (2.0 * (2 * p + 1) as f64 * (p + q + 1) as f64).sqrt();
                    push(sp[p].mul(*j).scale(c));
                }
            }
        }
        CellType::Tetrahedron => {
            let u1 = Poly::affine(2.0 * x[0] + x[1] + x[2] - 1.0, [2.0, 1.0, 1.0]);
            let v1 = Poly::affine(1.0 - x[1] - x[2], [0.0, -1.0, -1.0]);
            let u2 = Poly::affine(2.0 * x[1] + x[2] - 1.0, [0.0, 2.0, 1.0]);
            let v2 = Poly::affine(1.0 - x[2], [0.0, 0.0, -1.0]);
            let w = Poly::affine(2.0 * x[2] - 1.0, [0.0, 0.0, 2.0]);
            let sp = jacobi_seq(0, degree, u1, v1);
            for p in 0..=degree {
                let sq = jacobi_seq(2 * p + 1, degree - p, u2, v2);
                for q in 0..=degree - p {
                    let jr = jacobi_seq(2 * p + 2 * q + 2, degree - p - q, w, Poly::constant(1.0));
                    for (r, j) in jr.iter().enumerate().take(degree - p - q + 1) {
                        let c = (2.0
                            * (2 * p + 1) as f64
                            * (p + q + 1) as f64
                            * (2 * (p + q + r) + 3) as f64)
                            .sqrt();
                        push(sp[p].mul(sq[q]).mul(*j).scale(c));
                    }
                }
            }
        }
    }
    debug_assert_eq!(values.len(), n);
    (values, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_point(cell: CellType, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = cell.tdim();
        loop {
            let p: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            if p.iter().sum::<f64>() <= 1.0 {
                return p;
            }
        }
    }

    #[test]
    fn first_mode_is_inverse_sqrt_volume() {
        for cell in [CellType::Interval, CellType::Triangle, CellType::Tetrahedron] {
            let x = vec![0.2; cell.tdim()];
            let (vals, _) = eval_modes(cell, 3, &x);
            assert_relative_eq!(vals[0], 1.0 / cell.volume().sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        // Orthonormality itself is pinned down by the quadrature tests,
        // which can integrate mode products exactly. Here: the gradient
        // recurrences against central differences at random points.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cell in [CellType::Interval, CellType::Triangle, CellType::Tetrahedron] {
            let d = cell.tdim();
            for _ in 0..10 {
                let x = random_point(cell, &mut rng);
                let (_, grads) = eval_modes(cell, 4, &x);
                let h = 1e-6;
                for dir in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[dir] += h;
                    xm[dir] -= h;
                    let (vp, _) = eval_modes(cell, 4, &xp);
                    let (vm, _) = eval_modes(cell, 4, &xm);
                    for k in 0..vp.len() {
                        let fd = (vp[k] - vm[k]) / (2.0 * h);
                        assert_relative_eq!(grads[k][dir], fd, epsilon = 1e-5, max_relative = 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn triangle_mode_count() {
        assert_eq!(num_modes(CellType::Triangle, 3), 10);
        assert_eq!(num_modes(CellType::Tetrahedron, 2), 10);
        let (v, g) = eval_modes(CellType::Triangle, 3, &[0.3, 0.3]);
        assert_eq!(v.len(), 10);
        assert_eq!(g.len(), 10);
    }
}
