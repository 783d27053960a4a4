//! Lowering of checked integrands to the scalar kernel tape.
//!
//! Vector and matrix subexpressions are split into per-component registers
//! at compile time; gradients are pushed down to basis and coefficient
//! terminals by the usual calculus rules, so the tape only ever reads
//! tabulated values and first derivatives.

use crate::compiler::kernel::{KernelKind, Op, RoleId};
use crate::compiler::CompilerError;
use crate::form::{CoefficientDecl, CoefficientKind, Expr, Func, TEST_SLOT};

pub(super) struct LowerCtx<'a> {
    pub decls: &'a [CoefficientDecl],
    pub kind: KernelKind,
    pub gdim: usize,
}

pub(super) struct Lowering {
    pub ops: Vec<Op>,
    /// Form coefficient id per kernel coefficient slot, in first-use order.
    pub coef_ids: Vec<usize>,
}

/// Component registers of a lowered subexpression.
#[derive(Clone, Debug)]
enum Val {
    S(usize),
    V(Vec<usize>),
    M(Vec<Vec<usize>>),
}

struct Builder<'a> {
    ctx: &'a LowerCtx<'a>,
    ops: Vec<Op>,
    consts: Vec<(u64, usize)>,
    coef_ids: Vec<usize>,
}

fn unsupported(what: &str) -> CompilerError {
    CompilerError::UnsupportedExpression(what.to_string())
}

impl<'a> Builder<'a> {
    fn push(&mut self, op: Op) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    fn constant(&mut self, v: f64) -> usize {
        let bits = v.to_bits();
        if let Some(&(_, r)) = self.consts.iter().find(|(b, _)| *b == bits) {
            return r;
        }
        let r = self.push(Op::Const(v));
        self.consts.push((bits, r));
        r
    }

    fn const_of(&self, r: usize) -> Option<f64> {
        match self.ops[r] {
            Op::Const(v) => Some(v),
            _ => None,
        }
    }

    fn add(&mut self, a: usize, b: usize) -> usize {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) => self.constant(x + y),
            (Some(0.0), _) => b,
            (_, Some(0.0)) => a,
            _ => self.push(Op::Add(a, b)),
        }
    }

    fn mul(&mut self, a: usize, b: usize) -> usize {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) => self.constant(x * y),
            (Some(0.0), _) | (_, Some(0.0)) => self.constant(0.0),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => a,
            _ => self.push(Op::Mul(a, b)),
        }
    }

    fn div(&mut self, a: usize, b: usize) -> usize {
        match (self.const_of(a), self.const_of(b)) {
            (Some(x), Some(y)) if y != 0.0 => self.constant(x / y),
            (Some(0.0), _) => self.constant(0.0),
            (_, Some(1.0)) => a,
            _ => self.push(Op::Div(a, b)),
        }
    }

    fn neg(&mut self, a: usize) -> usize {
        if let Some(x) = self.const_of(a) {
            return self.constant(-x);
        }
        if let Op::Neg(inner) = self.ops[a] {
            return inner;
        }
        self.push(Op::Neg(a))
    }

    fn sub(&mut self, a: usize, b: usize) -> usize {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    fn pow(&mut self, a: usize, k: i32) -> usize {
        match k {
            0 => self.constant(1.0),
            1 => a,
            _ => match self.const_of(a) {
                Some(x) => self.constant(x.powi(k)),
                None => self.push(Op::Pow(a, k)),
            },
        }
    }

    fn call(&mut self, f: Func, a: usize) -> usize {
        match self.const_of(a) {
            Some(x) => self.constant(f.apply(x)),
            None => self.push(Op::Call(f, a)),
        }
    }

    fn coef_slot(&mut self, id: usize) -> usize {
        match self.coef_ids.iter().position(|&c| c == id) {
            Some(slot) => slot,
            None => {
                self.coef_ids.push(id);
                self.coef_ids.len() - 1
            }
        }
    }

    fn facet_only(&self, what: &str) -> Result<(), CompilerError> {
        if self.ctx.kind == KernelKind::Cell {
            return Err(unsupported(&format!("{what} in a cell integral")));
        }
        Ok(())
    }

    fn interior_only(&self, what: &str) -> Result<(), CompilerError> {
        if self.ctx.kind != KernelKind::InteriorFacet {
            return Err(unsupported(&format!(
                "{what} outside an interior facet integral"
            )));
        }
        Ok(())
    }

    /// Lower the value of `e`, evaluated on the given facet side.
    fn lower(&mut self, e: &Expr, side: usize) -> Result<Val, CompilerError> {
        match e {
            Expr::Constant(v) => Ok(Val::S(self.constant(*v))),
            Expr::Argument { slot, element } => {
                let role = if *slot == TEST_SLOT { RoleId::Test } else { RoleId::Trial };
                let vs = element.value_size();
                let regs: Vec<usize> = (0..vs)
                    .map(|comp| self.push(Op::BasisValue { role, comp, side }))
                    .collect();
                Ok(wrap(regs))
            }
            Expr::Coefficient { id } => match &self.ctx.decls[*id].kind {
                CoefficientKind::Scalar(v) => Ok(Val::S(self.constant(*v))),
                CoefficientKind::Expression(def) => {
                    let regs = def
                        .components
                        .iter()
                        .map(|c| self.lower(c, side).and_then(expect_scalar))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(wrap(regs))
                }
                CoefficientKind::Element(desc) => {
                    let coef = self.coef_slot(*id);
                    let vs = desc.value_size();
                    let regs: Vec<usize> = (0..vs)
                        .map(|comp| self.push(Op::CoefValue { coef, comp, side }))
                        .collect();
                    Ok(wrap(regs))
                }
            },
            Expr::SpatialCoordinate => {
                let regs: Vec<usize> =
                    (0..self.ctx.gdim).map(|c| self.push(Op::Coord(c))).collect();
                Ok(Val::V(regs))
            }
            Expr::FacetNormal => {
                self.facet_only("the facet normal")?;
                let regs: Vec<usize> = (0..self.ctx.gdim)
                    .map(|c| {
                        let n = self.push(Op::Normal(c));
                        if side == 1 { self.neg(n) } else { n }
                    })
                    .collect();
                Ok(Val::V(regs))
            }
            Expr::CellSize => Ok(Val::S(self.push(Op::CellSize(side)))),
            Expr::Grad(inner) => self.lower_grad(inner, side),
            Expr::Div(inner) => {
                let g = self.lower_grad(inner, side)?;
                match g {
                    Val::M(rows) => {
                        let mut acc = self.constant(0.0);
                        for (i, row) in rows.iter().enumerate() {
                            acc = self.add(acc, row[i]);
                        }
                        Ok(Val::S(acc))
                    }
                    _ => Err(unsupported("divergence of a non-vector")),
                }
            }
            Expr::Inner(a, b) => {
                let va = self.lower(a, side)?;
                let vb = self.lower(b, side)?;
                let (fa, fb) = (flatten(&va), flatten(&vb));
                if fa.len() != fb.len() {
                    return Err(unsupported("inner product of unequal shapes"));
                }
                let mut acc = self.constant(0.0);
                for (x, y) in fa.into_iter().zip(fb) {
                    let p = self.mul(x, y);
                    acc = self.add(acc, p);
                }
                Ok(Val::S(acc))
            }
            Expr::Dot(a, b) => {
                let va = self.lower(a, side)?;
                let vb = self.lower(b, side)?;
                match (va, vb) {
                    (Val::S(x), Val::S(y)) => Ok(Val::S(self.mul(x, y))),
                    (Val::V(x), Val::V(y)) => {
                        let mut acc = self.constant(0.0);
                        for (a, b) in x.into_iter().zip(y) {
                            let p = self.mul(a, b);
                            acc = self.add(acc, p);
                        }
                        Ok(Val::S(acc))
                    }
                    (Val::M(m), Val::V(v)) => {
                        let regs = m
                            .iter()
                            .map(|row| {
                                let mut acc = self.constant(0.0);
                                for (a, b) in row.iter().zip(&v) {
                                    let p = self.mul(*a, *b);
                                    acc = self.add(acc, p);
                                }
                                acc
                            })
                            .collect();
                        Ok(Val::V(regs))
                    }
                    (Val::V(v), Val::M(m)) => {
                        let cols = m[0].len();
                        let regs = (0..cols)
                            .map(|c| {
                                let mut acc = self.constant(0.0);
                                for (row, b) in m.iter().zip(&v) {
                                    let p = self.mul(row[c], *b);
                                    acc = self.add(acc, p);
                                }
                                acc
                            })
                            .collect();
                        Ok(Val::V(regs))
                    }
                    _ => Err(unsupported("dot product of these shapes")),
                }
            }
            Expr::Sum(a, b) => {
                let va = self.lower(a, side)?;
                let vb = self.lower(b, side)?;
                self.zip(va, vb, "sum of unequal shapes", |s, x, y| s.add(x, y))
            }
            Expr::Product(a, b) => {
                let va = self.lower(a, side)?;
                let vb = self.lower(b, side)?;
                match (va, vb) {
                    (Val::S(s), other) | (other, Val::S(s)) => {
                        Ok(self.map(other, |b, r| b.mul(s, r)))
                    }
                    _ => Err(unsupported("product needs a scalar factor")),
                }
            }
            Expr::Division(a, b) => {
                let va = self.lower(a, side)?;
                let den = expect_scalar(self.lower(b, side)?)?;
                Ok(self.map(va, |b, r| b.div(r, den)))
            }
            Expr::Negation(a) => {
                let va = self.lower(a, side)?;
                Ok(self.map(va, |b, r| b.neg(r)))
            }
            Expr::Power(a, k) => {
                let base = expect_scalar(self.lower(a, side)?)?;
                Ok(Val::S(self.pow(base, *k)))
            }
            Expr::Call(f, a) => {
                let arg = expect_scalar(self.lower(a, side)?)?;
                Ok(Val::S(self.call(*f, arg)))
            }
            Expr::Indexed(a, i) => match self.lower(a, side)? {
                Val::V(v) => Ok(Val::S(v[*i])),
                _ => Err(unsupported("indexing into a non-vector")),
            },
            Expr::Jump(a, normal) => {
                self.interior_only("jump")?;
                let plus = self.lower(a, 0)?;
                let minus = self.lower(a, 1)?;
                match normal {
                    None => self.zip(plus, minus, "jump of unequal shapes", |s, x, y| s.sub(x, y)),
                    Some(n) => {
                        let np = match self.lower(n, 0)? {
                            Val::V(v) => v,
                            _ => return Err(unsupported("jump against a non-vector")),
                        };
                        let nm = match self.lower(n, 1)? {
                            Val::V(v) => v,
                            _ => return Err(unsupported("jump against a non-vector")),
                        };
                        match (plus, minus) {
                            (Val::S(p), Val::S(m)) => {
                                let regs = (0..np.len())
                                    .map(|c| {
                                        let a = self.mul(p, np[c]);
                                        let b = self.mul(m, nm[c]);
                                        self.add(a, b)
                                    })
                                    .collect();
                                Ok(Val::V(regs))
                            }
                            (Val::V(p), Val::V(m)) => {
                                let mut acc = self.constant(0.0);
                                for c in 0..np.len() {
                                    let a = self.mul(p[c], np[c]);
                                    let b = self.mul(m[c], nm[c]);
                                    let t = self.add(a, b);
                                    acc = self.add(acc, t);
                                }
                                Ok(Val::S(acc))
                            }
                            _ => Err(unsupported("jump against a normal of this shape")),
                        }
                    }
                }
            }
            Expr::Avg(a) => {
                self.interior_only("avg")?;
                let plus = self.lower(a, 0)?;
                let minus = self.lower(a, 1)?;
                let half = self.constant(0.5);
                let sum = self.zip(plus, minus, "avg of unequal shapes", |s, x, y| s.add(x, y))?;
                Ok(self.map(sum, |b, r| b.mul(half, r)))
            }
            Expr::Restrict(a, s) => {
                self.interior_only("restriction")?;
                self.lower(a, restriction_side(*s))
            }
        }
    }

    /// Lower the spatial gradient of `e`: scalars become vectors over the
    /// geometric dimension, vectors become row-per-component matrices.
    fn lower_grad(&mut self, e: &Expr, side: usize) -> Result<Val, CompilerError> {
        let gdim = self.ctx.gdim;
        match e {
            Expr::Constant(_) => Ok(Val::V(self.zeros(gdim))),
            Expr::CellSize | Expr::FacetNormal => {
                Err(unsupported("gradient of a geometry quantity"))
            }
            Expr::Argument { slot, element } => {
                let role = if *slot == TEST_SLOT { RoleId::Test } else { RoleId::Trial };
                let vs = element.value_size();
                let rows: Vec<Vec<usize>> = (0..vs)
                    .map(|comp| {
                        (0..gdim)
                            .map(|dir| self.push(Op::BasisGrad { role, comp, dir, side }))
                            .collect()
                    })
                    .collect();
                Ok(unwrap_rows(rows))
            }
            Expr::Coefficient { id } => match &self.ctx.decls[*id].kind {
                CoefficientKind::Scalar(_) => Ok(Val::V(self.zeros(gdim))),
                CoefficientKind::Expression(def) => {
                    let rows = def
                        .components
                        .iter()
                        .map(|c| {
                            (0..gdim)
                                .map(|dir| {
                                    let d = spatial_derivative(c, dir)?;
                                    self.lower(&d, side).and_then(expect_scalar)
                                })
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(unwrap_rows(rows))
                }
                CoefficientKind::Element(desc) => {
                    let coef = self.coef_slot(*id);
                    let vs = desc.value_size();
                    let rows: Vec<Vec<usize>> = (0..vs)
                        .map(|comp| {
                            (0..gdim)
                                .map(|dir| self.push(Op::CoefGrad { coef, comp, dir, side }))
                                .collect()
                        })
                        .collect();
                    Ok(unwrap_rows(rows))
                }
            },
            Expr::SpatialCoordinate => {
                let rows = (0..gdim)
                    .map(|i| {
                        (0..gdim)
                            .map(|d| self.constant(if i == d { 1.0 } else { 0.0 }))
                            .collect()
                    })
                    .collect();
                Ok(Val::M(rows))
            }
            Expr::Sum(a, b) => {
                let ga = self.lower_grad(a, side)?;
                let gb = self.lower_grad(b, side)?;
                self.zip(ga, gb, "sum of unequal shapes", |s, x, y| s.add(x, y))
            }
            Expr::Negation(a) => {
                let g = self.lower_grad(a, side)?;
                Ok(self.map(g, |b, r| b.neg(r)))
            }
            Expr::Product(a, b) => {
                let va = self.lower(a, side)?;
                let vb = self.lower(b, side)?;
                let a_scalar = matches!(va, Val::S(_));
                match (va, vb) {
                    (Val::S(x), Val::S(y)) => {
                        let gx = as_vector(self.lower_grad(a, side)?)?;
                        let gy = as_vector(self.lower_grad(b, side)?)?;
                        let regs = (0..gdim)
                            .map(|d| {
                                let t1 = self.mul(x, gy[d]);
                                let t2 = self.mul(y, gx[d]);
                                self.add(t1, t2)
                            })
                            .collect();
                        Ok(Val::V(regs))
                    }
                    (Val::S(s), Val::V(v)) | (Val::V(v), Val::S(s)) => {
                        // One factor scalar, the other a vector; the original
                        // operand order says which gradient is which.
                        let (sg, vg) = if a_scalar {
                            (self.lower_grad(a, side)?, self.lower_grad(b, side)?)
                        } else {
                            (self.lower_grad(b, side)?, self.lower_grad(a, side)?)
                        };
                        let sg = as_vector(sg)?;
                        let vg = as_matrix(vg)?;
                        let rows = (0..v.len())
                            .map(|i| {
                                (0..gdim)
                                    .map(|d| {
                                        let t1 = self.mul(s, vg[i][d]);
                                        let t2 = self.mul(v[i], sg[d]);
                                        self.add(t1, t2)
                                    })
                                    .collect()
                            })
                            .collect();
                        Ok(Val::M(rows))
                    }
                    _ => Err(unsupported("gradient of a matrix-valued product")),
                }
            }
            Expr::Division(a, b) => {
                let num = self.lower(a, side)?;
                let den = expect_scalar(self.lower(b, side)?)?;
                let gnum = self.lower_grad(a, side)?;
                let gden = as_vector(self.lower_grad(b, side)?)?;
                let den2 = self.mul(den, den);
                match (num, gnum) {
                    (Val::S(n), Val::V(gn)) => {
                        let regs = (0..gdim)
                            .map(|d| {
                                let t1 = self.mul(gn[d], den);
                                let t2 = self.mul(n, gden[d]);
                                let diff = self.sub(t1, t2);
                                self.div(diff, den2)
                            })
                            .collect();
                        Ok(Val::V(regs))
                    }
                    (Val::V(n), Val::M(gn)) => {
                        let rows = (0..n.len())
                            .map(|i| {
                                (0..gdim)
                                    .map(|d| {
                                        let t1 = self.mul(gn[i][d], den);
                                        let t2 = self.mul(n[i], gden[d]);
                                        let diff = self.sub(t1, t2);
                                        self.div(diff, den2)
                                    })
                                    .collect()
                            })
                            .collect();
                        Ok(Val::M(rows))
                    }
                    _ => Err(unsupported("gradient of this quotient")),
                }
            }
            Expr::Power(a, k) => {
                let base = expect_scalar(self.lower(a, side)?)?;
                let g = as_vector(self.lower_grad(a, side)?)?;
                let kk = self.constant(*k as f64);
                let pm1 = self.pow(base, *k - 1);
                let factor = self.mul(kk, pm1);
                let regs = (0..gdim).map(|d| self.mul(factor, g[d])).collect();
                Ok(Val::V(regs))
            }
            Expr::Call(f, a) => {
                let arg = expect_scalar(self.lower(a, side)?)?;
                let g = as_vector(self.lower_grad(a, side)?)?;
                let factor = match f {
                    Func::Sin => self.call(Func::Cos, arg),
                    Func::Cos => {
                        let s = self.call(Func::Sin, arg);
                        self.neg(s)
                    }
                    Func::Exp => self.call(Func::Exp, arg),
                    Func::Sqrt => {
                        let half = self.constant(0.5);
                        let root = self.call(Func::Sqrt, arg);
                        self.div(half, root)
                    }
                    Func::Abs => return Err(unsupported("gradient of abs")),
                };
                let regs = (0..gdim).map(|d| self.mul(factor, g[d])).collect();
                Ok(Val::V(regs))
            }
            Expr::Indexed(a, i) => match self.lower_grad(a, side)? {
                Val::M(rows) => Ok(Val::V(rows[*i].clone())),
                _ => Err(unsupported("gradient of this indexed value")),
            },
            Expr::Jump(a, None) => {
                self.interior_only("jump")?;
                let gp = self.lower_grad(a, 0)?;
                let gm = self.lower_grad(a, 1)?;
                self.zip(gp, gm, "jump of unequal shapes", |s, x, y| s.sub(x, y))
            }
            Expr::Jump(_, Some(_)) => Err(unsupported("gradient of a normal jump")),
            Expr::Avg(a) => {
                self.interior_only("avg")?;
                let gp = self.lower_grad(a, 0)?;
                let gm = self.lower_grad(a, 1)?;
                let half = self.constant(0.5);
                let sum = self.zip(gp, gm, "avg of unequal shapes", |s, x, y| s.add(x, y))?;
                Ok(self.map(sum, |b, r| b.mul(half, r)))
            }
            Expr::Restrict(a, s) => {
                self.interior_only("restriction")?;
                self.lower_grad(a, restriction_side(*s))
            }
            Expr::Grad(_) | Expr::Div(_) | Expr::Inner(..) | Expr::Dot(..) => {
                Err(unsupported("second derivatives"))
            }
        }
    }

    fn zeros(&mut self, n: usize) -> Vec<usize> {
        let z = self.constant(0.0);
        vec![z; n]
    }

    fn map(&mut self, v: Val, f: impl Fn(&mut Self, usize) -> usize) -> Val {
        match v {
            Val::S(r) => Val::S(f(self, r)),
            Val::V(v) => Val::V(v.into_iter().map(|r| f(self, r)).collect()),
            Val::M(m) => Val::M(
                m.into_iter().map(|row| row.into_iter().map(|r| f(self, r)).collect()).collect(),
            ),
        }
    }

    fn zip(
        &mut self,
        a: Val,
        b: Val,
        msg: &str,
        f: impl Fn(&mut Self, usize, usize) -> usize,
    ) -> Result<Val, CompilerError> {
        match (a, b) {
            (Val::S(x), Val::S(y)) => Ok(Val::S(f(self, x, y))),
            (Val::V(x), Val::V(y)) if x.len() == y.len() => {
                Ok(Val::V(x.into_iter().zip(y).map(|(p, q)| f(self, p, q)).collect()))
            }
            (Val::M(x), Val::M(y)) if x.len() == y.len() => Ok(Val::M(
                x.into_iter()
                    .zip(y)
                    .map(|(r, s)| r.into_iter().zip(s).map(|(p, q)| f(self, p, q)).collect())
                    .collect(),
            )),
            _ => Err(unsupported(msg)),
        }
    }
}

fn restriction_side(s: crate::form::Side) -> usize {
    match s {
        crate::form::Side::Plus => 0,
        crate::form::Side::Minus => 1,
    }
}

fn wrap(regs: Vec<usize>) -> Val {
    if regs.len() == 1 { Val::S(regs[0]) } else { Val::V(regs) }
}

/// A one-row gradient matrix is the gradient of a scalar: flatten it.
fn unwrap_rows(rows: Vec<Vec<usize>>) -> Val {
    if rows.len() == 1 { Val::V(rows.into_iter().next().unwrap()) } else { Val::M(rows) }
}

fn expect_scalar(v: Val) -> Result<usize, CompilerError> {
    match v {
        Val::S(r) => Ok(r),
        _ => Err(unsupported("expected a scalar subexpression")),
    }
}

fn as_vector(v: Val) -> Result<Vec<usize>, CompilerError> {
    match v {
        Val::V(v) => Ok(v),
        _ => Err(unsupported("expected a vector-valued gradient")),
    }
}

fn as_matrix(v: Val) -> Result<Vec<Vec<usize>>, CompilerError> {
    match v {
        Val::M(m) => Ok(m),
        _ => Err(unsupported("expected a matrix-valued gradient")),
    }
}

fn flatten(v: &Val) -> Vec<usize> {
    match v {
        Val::S(r) => vec![*r],
        Val::V(v) => v.clone(),
        Val::M(m) => m.iter().flatten().copied().collect(),
    }
}

/// Symbolic partial derivative of a closed-form point expression with
/// respect to coordinate `c`. Dead branches are pruned later by the
/// builder's constant folding, so the tree can be built naively.
fn spatial_derivative(e: &Expr, c: usize) -> Result<Expr, CompilerError> {
    let d = |e: &Expr| spatial_derivative(e, c);
    Ok(match e {
        Expr::Constant(_) => Expr::Constant(0.0),
        Expr::Indexed(inner, i) if matches!(**inner, Expr::SpatialCoordinate) => {
            Expr::Constant(if *i == c { 1.0 } else { 0.0 })
        }
        Expr::Sum(a, b) => Expr::Sum(d(a)?.boxed(), d(b)?.boxed()),
        Expr::Negation(a) => Expr::Negation(d(a)?.boxed()),
        Expr::Product(a, b) => Expr::Sum(
            Expr::Product(d(a)?.boxed(), b.clone()).boxed(),
            Expr::Product(a.clone(), d(b)?.boxed()).boxed(),
        ),
        Expr::Division(a, b) => Expr::Division(
            Expr::Sum(
                Expr::Product(d(a)?.boxed(), b.clone()).boxed(),
                Expr::Negation(Expr::Product(a.clone(), d(b)?.boxed()).boxed()).boxed(),
            )
            .boxed(),
            Expr::Product(b.clone(), b.clone()).boxed(),
        ),
        Expr::Power(a, k) => Expr::Product(
            Expr::Constant(*k as f64).boxed(),
            Expr::Product(Expr::Power(a.clone(), k - 1).boxed(), d(a)?.boxed()).boxed(),
        ),
        Expr::Call(f, a) => {
            let da = d(a)?;
            let outer = match f {
                Func::Sin => Expr::Call(Func::Cos, a.clone()),
                Func::Cos => Expr::Negation(Expr::Call(Func::Sin, a.clone()).boxed()),
                Func::Exp => Expr::Call(Func::Exp, a.clone()),
                Func::Sqrt => {
                    return Ok(Expr::Division(
                        da.boxed(),
                        Expr::Product(
                            Expr::Constant(2.0).boxed(),
                            Expr::Call(Func::Sqrt, a.clone()).boxed(),
                        )
                        .boxed(),
                    ))
                }
                Func::Abs => return Err(unsupported("derivative of abs")),
            };
            Expr::Product(outer.boxed(), da.boxed())
        }
        _ => return Err(unsupported("derivative of this point expression")),
    })
}

/// Lower a scalar integrand to a tape whose final register is its value.
pub(super) fn lower_integrand(e: &Expr, ctx: &LowerCtx) -> Result<Lowering, CompilerError> {
    let mut b = Builder { ctx, ops: Vec::new(), consts: Vec::new(), coef_ids: Vec::new() };
    let out = expect_scalar(b.lower(e, 0)?)?;
    // The executor reads the last register; make sure the result sits there.
    if out + 1 != b.ops.len() {
        let op = b.ops[out].clone();
        match op {
            Op::Const(_)
            | Op::Coord(_)
            | Op::Normal(_)
            | Op::CellSize(_)
            | Op::BasisValue { .. }
            | Op::BasisGrad { .. }
            | Op::CoefValue { .. }
            | Op::CoefGrad { .. } => {
                b.ops.push(op);
            }
            _ => {
                let zero = b.constant(0.0);
                b.ops.push(Op::Add(out, zero));
            }
        }
    }
    Ok(Lowering { ops: b.ops, coef_ids: b.coef_ids })
}
