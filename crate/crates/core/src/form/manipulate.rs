//! Form manipulation: monomial expansion, splitting a combined form into
//! bilinear and linear parts, Gateaux differentiation and binding of
//! named scalar constants.

use super::{
    CoefficientKind, Expr, Form, FormError, FormFile, Func, Integral, TRIAL_SLOT,
};
use crate::element::ElementDescriptor;

/// True when the expression is constant in space: built from literals
/// and named scalar constants only.
fn is_spatially_constant(e: &Expr, decls: &[super::CoefficientDecl]) -> bool {
    let mut constant = true;
    e.visit(&mut |n| match n {
        Expr::Argument { .. }
        | Expr::SpatialCoordinate
        | Expr::FacetNormal
        | Expr::CellSize => constant = false,
        Expr::Coefficient { id } => {
            if !matches!(decls.get(*id).map(|d| &d.kind), Some(CoefficientKind::Scalar(_))) {
                constant = false;
            }
        }
        _ => {}
    });
    constant
}

/// Expand an integrand into a list of terms whose sum it equals. Sums
/// are distributed out of products, inner/dot contractions and the
/// linear operators (grad, div, jump, avg, restrict, index); spatially
/// constant factors are hoisted out of grad and div so that each term is
/// linear in any one argument occurrence. Nonlinear nodes (calls,
/// powers outside 2..=4, divisions) keep their operands unexpanded.
pub fn expand_terms(e: &Expr) -> Vec<Expr> {
    expand_with(e, &[])
}

pub(crate) fn expand_with(e: &Expr, decls: &[super::CoefficientDecl]) -> Vec<Expr> {
    match e {
        Expr::Sum(a, b) => {
            let mut terms = expand_with(a, decls);
            terms.extend(expand_with(b, decls));
            terms
        }
        Expr::Negation(a) => expand_with(a, decls)
            .into_iter()
            .map(|t| match t {
                Expr::Negation(inner) => *inner,
                t => Expr::Negation(t.boxed()),
            })
            .collect(),
        Expr::Product(a, b) => cross(a, b, decls, |x, y| Expr::Product(x.boxed(), y.boxed())),
        Expr::Inner(a, b) => cross(a, b, decls, |x, y| Expr::Inner(x.boxed(), y.boxed())),
        Expr::Dot(a, b) => cross(a, b, decls, |x, y| Expr::Dot(x.boxed(), y.boxed())),
        Expr::Division(a, b) => expand_with(a, decls)
            .into_iter()
            .map(|t| Expr::Division(t.boxed(), b.clone().boxed()))
            .collect(),
        Expr::Grad(a) => expand_with(a, decls)
            .into_iter()
            .map(|t| hoist_constant(t, decls, &|x| Expr::Grad(x.boxed())))
            .collect(),
        Expr::Div(a) => expand_with(a, decls)
            .into_iter()
            .map(|t| hoist_constant(t, decls, &|x| Expr::Div(x.boxed())))
            .collect(),
        Expr::Jump(a, n) => expand_with(a, decls)
            .into_iter()
            .map(|t| Expr::Jump(t.boxed(), n.clone()))
            .collect(),
        Expr::Avg(a) => expand_with(a, decls)
            .into_iter()
            .map(|t| Expr::Avg(t.boxed()))
            .collect(),
        Expr::Restrict(a, s) => expand_with(a, decls)
            .into_iter()
            .map(|t| Expr::Restrict(t.boxed(), *s))
            .collect(),
        Expr::Indexed(a, i) => expand_with(a, decls)
            .into_iter()
            .map(|t| Expr::Indexed(t.boxed(), *i))
            .collect(),
        Expr::Power(a, k) if (2..=4).contains(k) => {
            let base = expand_with(a, decls);
            if base.len() == 1 {
                return vec![e.clone()];
            }
            let mut terms = base.clone();
            for _ in 1..*k {
                let mut next = Vec::new();
                for t in &terms {
                    for b in &base {
                        next.push(Expr::Product(t.clone().boxed(), b.clone().boxed()));
                    }
                }
                terms = next;
            }
            terms
        }
        other => vec![other.clone()],
    }
}

fn cross(
    a: &Expr,
    b: &Expr,
    decls: &[super::CoefficientDecl],
    make: impl Fn(Expr, Expr) -> Expr,
) -> Vec<Expr> {
    let ta = expand_with(a, decls);
    let tb = expand_with(b, decls);
    let mut out = Vec::with_capacity(ta.len() * tb.len());
    for x in &ta {
        for y in &tb {
            out.push(make(x.clone(), y.clone()));
        }
    }
    out
}

/// Pull spatially constant multiplicative factors outside a linear
/// differential operator: grad(c*e) = c*grad(e).
fn hoist_constant(
    t: Expr,
    decls: &[super::CoefficientDecl],
    op: &dyn Fn(Expr) -> Expr,
) -> Expr {
    match t {
        Expr::Product(a, b) => {
            if is_spatially_constant(&a, decls) {
                Expr::Product(a, hoist_constant(*b, decls, op).boxed())
            } else if is_spatially_constant(&b, decls) {
                Expr::Product(b, hoist_constant(*a, decls, op).boxed())
            } else {
                op(Expr::Product(a, b))
            }
        }
        Expr::Division(a, b) if is_spatially_constant(&b, decls) => {
            Expr::Division(hoist_constant(*a, decls, op).boxed(), b)
        }
        Expr::Negation(a) => Expr::Negation(hoist_constant(*a, decls, op).boxed()),
        t => op(t),
    }
}

/// Number of trial-function occurrences in a term, accounting for
/// powers. Errors when the trial function sits inside a node that is
/// not polynomial in it.
fn count_trial(e: &Expr) -> Result<usize, FormError> {
    match e {
        Expr::Argument { slot, .. } => Ok(usize::from(*slot == TRIAL_SLOT)),
        Expr::Coefficient { .. }
        | Expr::Constant(_)
        | Expr::SpatialCoordinate
        | Expr::FacetNormal
        | Expr::CellSize => Ok(0),
        Expr::Grad(a)
        | Expr::Div(a)
        | Expr::Negation(a)
        | Expr::Indexed(a, _)
        | Expr::Avg(a)
        | Expr::Restrict(a, _) => count_trial(a),
        Expr::Inner(a, b) | Expr::Dot(a, b) | Expr::Product(a, b) => {
            Ok(count_trial(a)? + count_trial(b)?)
        }
        Expr::Sum(a, b) => {
            let (ca, cb) = (count_trial(a)?, count_trial(b)?);
            if ca == cb {
                Ok(ca)
            } else {
                Err(FormError::NonlinearInTrial(
                    "trial function under a sum that cannot be distributed".into(),
                ))
            }
        }
        Expr::Division(a, b) => {
            if count_trial(b)? > 0 {
                return Err(FormError::NonlinearInTrial(
                    "trial function in a denominator".into(),
                ));
            }
            count_trial(a)
        }
        Expr::Power(a, k) => {
            let c = count_trial(a)?;
            if c == 0 {
                Ok(0)
            } else if *k >= 0 {
                Ok(c * *k as usize)
            } else {
                Err(FormError::NonlinearInTrial(
                    "trial function under a negative power".into(),
                ))
            }
        }
        Expr::Call(f, a) => {
            if count_trial(a)? > 0 {
                return Err(FormError::NonlinearInTrial(format!(
                    "trial function inside {}",
                    f.name()
                )));
            }
            Ok(0)
        }
        Expr::Jump(a, n) => {
            let cn = n.as_ref().map(|n| count_trial(n)).transpose()?.unwrap_or(0);
            Ok(count_trial(a)? + cn)
        }
    }
}

fn terms_to_integrals(
    groups: Vec<(Vec<Expr>, &Integral)>,
) -> Vec<Integral> {
    let mut out = Vec::new();
    for (terms, src) in groups {
        let mut iter = terms.into_iter();
        let Some(first) = iter.next() else { continue };
        let integrand = iter.fold(first, |acc, t| Expr::Sum(acc.boxed(), t.boxed()));
        out.push(Integral {
            integrand,
            measure: src.measure,
            subdomain: src.subdomain,
        });
    }
    out
}

/// Split a combined form F(v, u) = a(v, u) - L(v) into its bilinear and
/// linear parts: terms containing the trial function exactly once make
/// up `a`, the remaining terms are negated into `L`.
pub fn lhs_rhs(form: &Form) -> Result<(Form, Form), FormError> {
    let mut a_groups = Vec::new();
    let mut l_groups = Vec::new();
    for it in &form.integrals {
        let mut a_terms = Vec::new();
        let mut l_terms = Vec::new();
        for term in expand_with(&it.integrand, &form.coefficients) {
            match count_trial(&term)? {
                0 => l_terms.push(match term {
                    Expr::Negation(inner) => *inner,
                    t => Expr::Negation(t.boxed()),
                }),
                1 => a_terms.push(term),
                n => {
                    return Err(FormError::NonlinearInTrial(format!(
                        "a term contains the trial function {n} times"
                    )));
                }
            }
        }
        a_groups.push((a_terms, it));
        l_groups.push((l_terms, it));
    }
    let a = Form {
        integrals: terms_to_integrals(a_groups),
        coefficients: form.coefficients.clone(),
    };
    let l = Form {
        integrals: terms_to_integrals(l_groups),
        coefficients: form.coefficients.clone(),
    };
    if a.integrals.is_empty() {
        return Err(FormError::EmptyBilinear);
    }
    Ok((a, l))
}

fn zero() -> Expr {
    Expr::Constant(0.0)
}

fn mk_sum(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        b
    } else if b.is_zero() {
        a
    } else {
        Expr::Sum(a.boxed(), b.boxed())
    }
}

fn mk_product(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        zero()
    } else {
        Expr::Product(a.boxed(), b.boxed())
    }
}

fn mk_neg(a: Expr) -> Expr {
    if a.is_zero() {
        zero()
    } else {
        Expr::Negation(a.boxed())
    }
}

fn mk_unary(a: Expr, make: impl Fn(Box<Expr>) -> Expr) -> Expr {
    if a.is_zero() {
        zero()
    } else {
        make(a.boxed())
    }
}

fn mk_pair(a: Expr, b: Expr, make: impl Fn(Box<Expr>, Box<Expr>) -> Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        zero()
    } else {
        make(a.boxed(), b.boxed())
    }
}

/// Directional derivative of an expression with respect to coefficient
/// `coef` in direction `du` (product and chain rule; one replacement per
/// generated term).
fn diff(e: &Expr, coef: usize, du: &Expr) -> Result<Expr, FormError> {
    Ok(match e {
        Expr::Coefficient { id } if *id == coef => du.clone(),
        Expr::Argument { .. }
        | Expr::Coefficient { .. }
        | Expr::Constant(_)
        | Expr::SpatialCoordinate
        | Expr::FacetNormal
        | Expr::CellSize => zero(),
        Expr::Sum(a, b) => mk_sum(diff(a, coef, du)?, diff(b, coef, du)?),
        Expr::Product(a, b) => mk_sum(
            mk_product(diff(a, coef, du)?, (**b).clone()),
            mk_product((**a).clone(), diff(b, coef, du)?),
        ),
        Expr::Inner(a, b) => mk_sum(
            mk_pair(diff(a, coef, du)?, (**b).clone(), Expr::Inner),
            mk_pair((**a).clone(), diff(b, coef, du)?, Expr::Inner),
        ),
        Expr::Dot(a, b) => mk_sum(
            mk_pair(diff(a, coef, du)?, (**b).clone(), Expr::Dot),
            mk_pair((**a).clone(), diff(b, coef, du)?, Expr::Dot),
        ),
        Expr::Division(a, b) => {
            let da = diff(a, coef, du)?;
            let db = diff(b, coef, du)?;
            let first = if da.is_zero() {
                zero()
            } else {
                Expr::Division(da.boxed(), b.clone())
            };
            let second = if db.is_zero() {
                zero()
            } else {
                mk_neg(Expr::Division(
                    mk_product((**a).clone(), db).boxed(),
                    Expr::Power(b.clone(), 2).boxed(),
                ))
            };
            mk_sum(first, second)
        }
        Expr::Negation(a) => mk_neg(diff(a, coef, du)?),
        Expr::Power(a, k) => {
            let da = diff(a, coef, du)?;
            if da.is_zero() {
                zero()
            } else {
                let scaled = mk_product(Expr::Constant(*k as f64), da);
                mk_product(scaled, Expr::Power(a.clone(), k - 1))
            }
        }
        Expr::Call(f, a) => {
            let da = diff(a, coef, du)?;
            if da.is_zero() {
                zero()
            } else {
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => mk_neg(Expr::Call(Func::Sin, a.clone())),
                    Func::Exp => Expr::Call(Func::Exp, a.clone()),
                    Func::Sqrt => Expr::Division(
                        Expr::Constant(1.0).boxed(),
                        mk_product(
                            Expr::Constant(2.0),
                            Expr::Call(Func::Sqrt, a.clone()),
                        )
                        .boxed(),
                    ),
                    Func::Abs => {
                        return Err(FormError::UnsupportedNode("abs".into()));
                    }
                };
                mk_product(outer, da)
            }
        }
        Expr::Grad(a) => mk_unary(diff(a, coef, du)?, Expr::Grad),
        Expr::Div(a) => mk_unary(diff(a, coef, du)?, Expr::Div),
        Expr::Indexed(a, i) => {
            let i = *i;
            mk_unary(diff(a, coef, du)?, move |x| Expr::Indexed(x, i))
        }
        Expr::Avg(a) => mk_unary(diff(a, coef, du)?, Expr::Avg),
        Expr::Restrict(a, s) => {
            let s = *s;
            mk_unary(diff(a, coef, du)?, move |x| Expr::Restrict(x, s))
        }
        Expr::Jump(a, n) => {
            let n = n.clone();
            mk_unary(diff(a, coef, du)?, move |x| Expr::Jump(x, n.clone()))
        }
    })
}

/// Gateaux derivative of a residual form with respect to coefficient
/// `coef` in direction `du` (the trial function of the Jacobian).
pub fn derivative(form: &Form, coef: usize, du: &Expr) -> Result<Form, FormError> {
    let mut integrals = Vec::new();
    for it in &form.integrals {
        let d = diff(&it.integrand, coef, du)?;
        if !d.is_zero() {
            integrals.push(Integral {
                integrand: d,
                measure: it.measure,
                subdomain: it.subdomain,
            });
        }
    }
    if integrals.is_empty() {
        return Err(FormError::EmptyBilinear);
    }
    Ok(Form { integrals, coefficients: form.coefficients.clone() })
}

/// Replace named scalar constants by literal values: the default from
/// the declaration, or an override from `values`.
pub fn bind_constants(
    form: &Form,
    values: &std::collections::BTreeMap<String, f64>,
) -> Form {
    let mut resolved = Vec::new();
    for d in &form.coefficients {
        match &d.kind {
            CoefficientKind::Scalar(default) => {
                resolved.push(Some(*values.get(&d.name).unwrap_or(default)));
            }
            _ => resolved.push(None),
        }
    }
    let integrals = form
        .integrals
        .iter()
        .map(|it| Integral {
            integrand: substitute(&it.integrand, &|e| match e {
                Expr::Coefficient { id } => resolved
                    .get(*id)
                    .copied()
                    .flatten()
                    .map(Expr::Constant),
                _ => None,
            }),
            measure: it.measure,
            subdomain: it.subdomain,
        })
        .collect();
    Form { integrals, coefficients: form.coefficients.clone() }
}

/// Replace every occurrence of the given argument slot by an expression
/// (used to turn a combined form into an action for verification).
pub fn substitute_argument(form: &Form, slot: usize, replacement: &Expr) -> Form {
    let integrals = form
        .integrals
        .iter()
        .map(|it| Integral {
            integrand: substitute(&it.integrand, &|e| match e {
                Expr::Argument { slot: s, .. } if *s == slot => Some(replacement.clone()),
                _ => None,
            }),
            measure: it.measure,
            subdomain: it.subdomain,
        })
        .collect();
    Form { integrals, coefficients: form.coefficients.clone() }
}

/// Rewrite the polynomial degree of every scalar and vector element in the
/// file, in declarations and inside argument expressions alike. Mixed
/// elements keep their per-part degrees: a uniform override would destroy
/// deliberately unbalanced pairs.
pub fn override_degrees(file: &mut FormFile, degree: usize) {
    fn with_degree(d: &ElementDescriptor, degree: usize) -> ElementDescriptor {
        match d {
            ElementDescriptor::Scalar { family, cell, .. } => {
                ElementDescriptor::Scalar { family: *family, cell: *cell, degree }
            }
            ElementDescriptor::Vector { sub, count } => {
                ElementDescriptor::Vector { sub: Box::new(with_degree(sub, degree)), count: *count }
            }
            ElementDescriptor::Mixed { .. } => d.clone(),
        }
    }
    fn fix_decls(decls: &mut [super::CoefficientDecl], degree: usize) {
        for c in decls {
            if let CoefficientKind::Element(d) = &mut c.kind {
                *d = with_degree(d, degree);
            }
        }
    }
    for d in file.elements.values_mut() {
        *d = with_degree(d, degree);
    }
    fix_decls(&mut file.coefficients, degree);
    for form in file.forms.values_mut() {
        fix_decls(&mut form.coefficients, degree);
        for it in &mut form.integrals {
            it.integrand = substitute(&it.integrand, &|e| match e {
                Expr::Argument { slot, element } => Some(Expr::Argument {
                    slot: *slot,
                    element: with_degree(element, degree),
                }),
                _ => None,
            });
        }
    }
}

/// Rebuild a tree, replacing nodes where `rule` returns a substitute.
pub(crate) fn substitute(e: &Expr, rule: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
    if let Some(r) = rule(e) {
        return r;
    }
    match e {
        Expr::Argument { .. }
        | Expr::Coefficient { .. }
        | Expr::Constant(_)
        | Expr::SpatialCoordinate
        | Expr::FacetNormal
        | Expr::CellSize => e.clone(),
        Expr::Grad(a) => Expr::Grad(substitute(a, rule).boxed()),
        Expr::Div(a) => Expr::Div(substitute(a, rule).boxed()),
        Expr::Negation(a) => Expr::Negation(substitute(a, rule).boxed()),
        Expr::Power(a, k) => Expr::Power(substitute(a, rule).boxed(), *k),
        Expr::Call(f, a) => Expr::Call(*f, substitute(a, rule).boxed()),
        Expr::Indexed(a, i) => Expr::Indexed(substitute(a, rule).boxed(), *i),
        Expr::Avg(a) => Expr::Avg(substitute(a, rule).boxed()),
        Expr::Restrict(a, s) => Expr::Restrict(substitute(a, rule).boxed(), *s),
        Expr::Inner(a, b) => {
            Expr::Inner(substitute(a, rule).boxed(), substitute(b, rule).boxed())
        }
        Expr::Dot(a, b) => Expr::Dot(substitute(a, rule).boxed(), substitute(b, rule).boxed()),
        Expr::Sum(a, b) => Expr::Sum(substitute(a, rule).boxed(), substitute(b, rule).boxed()),
        Expr::Product(a, b) => {
            Expr::Product(substitute(a, rule).boxed(), substitute(b, rule).boxed())
        }
        Expr::Division(a, b) => {
            Expr::Division(substitute(a, rule).boxed(), substitute(b, rule).boxed())
        }
        Expr::Jump(a, n) => Expr::Jump(
            substitute(a, rule).boxed(),
            n.as_ref().map(|n| substitute(n, rule).boxed()),
        ),
    }
}
