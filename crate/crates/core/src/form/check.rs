//! Form validation: value shapes, restriction placement, argument
//! consistency, quadrature degree estimation and a syntactic symmetry
//! probe used to pick a default linear solver.

use super::{
    CoefficientDecl, CoefficientKind, Expr, Form, FormError, Measure, TEST_SLOT, TRIAL_SLOT,
};
use crate::compiler::MAX_QUADRATURE_DEGREE;
use crate::element::ElementDescriptor;
use std::collections::BTreeMap;

/// Value shape of an expression node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    fn describe(&self) -> String {
        match self {
            Shape::Scalar => "scalar".into(),
            Shape::Vector(n) => format!("vector[{n}]"),
            Shape::Matrix(r, c) => format!("matrix[{r}x{c}]"),
        }
    }
}

fn of_value_size(n: usize) -> Shape {
    if n == 1 {
        Shape::Scalar
    } else {
        Shape::Vector(n)
    }
}

/// Compute the shape of an expression. `dim` is the spatial dimension
/// (the cell dimension of the form's elements).
pub fn shape_of(e: &Expr, decls: &[CoefficientDecl], dim: usize) -> Result<Shape, FormError> {
    let mismatch = |msg: String| Err(FormError::ShapeMismatch(msg));
    match e {
        Expr::Argument { element, .. } => Ok(of_value_size(element.value_size())),
        Expr::Coefficient { id } => match decls.get(*id) {
            Some(d) => match &d.kind {
                CoefficientKind::Element(el) => Ok(of_value_size(el.value_size())),
                CoefficientKind::Expression(def) => Ok(of_value_size(def.value_size())),
                CoefficientKind::Scalar(_) => Ok(Shape::Scalar),
            },
            None => mismatch(format!("coefficient id {id} has no declaration")),
        },
        Expr::Constant(_) | Expr::CellSize => Ok(Shape::Scalar),
        Expr::SpatialCoordinate | Expr::FacetNormal => Ok(Shape::Vector(dim)),
        Expr::Grad(a) => match shape_of(a, decls, dim)? {
            Shape::Scalar => Ok(Shape::Vector(dim)),
            Shape::Vector(m) => Ok(Shape::Matrix(m, dim)),
            s => mismatch(format!("grad of a {}", s.describe())),
        },
        Expr::Div(a) => match shape_of(a, decls, dim)? {
            Shape::Vector(m) if m == dim => Ok(Shape::Scalar),
            s => mismatch(format!("div needs a vector[{dim}], got {}", s.describe())),
        },
        Expr::Inner(a, b) => {
            let (sa, sb) = (shape_of(a, decls, dim)?, shape_of(b, decls, dim)?);
            if sa == sb {
                Ok(Shape::Scalar)
            } else {
                mismatch(format!("inner of {} and {}", sa.describe(), sb.describe()))
            }
        }
        Expr::Dot(a, b) => {
            let (sa, sb) = (shape_of(a, decls, dim)?, shape_of(b, decls, dim)?);
            match (sa, sb) {
                (Shape::Scalar, Shape::Scalar) => Ok(Shape::Scalar),
                (Shape::Vector(m), Shape::Vector(n)) if m == n => Ok(Shape::Scalar),
                (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => Ok(Shape::Vector(r)),
                (Shape::Vector(m), Shape::Matrix(r, c)) if m == r => Ok(Shape::Vector(c)),
                _ => mismatch(format!("dot of {} and {}", sa.describe(), sb.describe())),
            }
        }
        Expr::Sum(a, b) => {
            let (sa, sb) = (shape_of(a, decls, dim)?, shape_of(b, decls, dim)?);
            if sa == sb {
                Ok(sa)
            } else {
                mismatch(format!("sum of {} and {}", sa.describe(), sb.describe()))
            }
        }
        Expr::Product(a, b) => {
            let (sa, sb) = (shape_of(a, decls, dim)?, shape_of(b, decls, dim)?);
            match (sa, sb) {
                (Shape::Scalar, s) | (s, Shape::Scalar) => Ok(s),
                _ => mismatch(format!(
                    "product of {} and {}; use inner or dot",
                    sa.describe(),
                    sb.describe()
                )),
            }
        }
        Expr::Division(a, b) => {
            let sb = shape_of(b, decls, dim)?;
            if sb != Shape::Scalar {
                return mismatch(format!("division by a {}", sb.describe()));
            }
            shape_of(a, decls, dim)
        }
        Expr::Negation(a) => shape_of(a, decls, dim),
        Expr::Power(a, _) => match shape_of(a, decls, dim)? {
            Shape::Scalar => Ok(Shape::Scalar),
            s => mismatch(format!("power of a {}", s.describe())),
        },
        Expr::Call(f, a) => match shape_of(a, decls, dim)? {
            Shape::Scalar => Ok(Shape::Scalar),
            s => mismatch(format!("{} of a {}", f.name(), s.describe())),
        },
        Expr::Indexed(a, i) => match shape_of(a, decls, dim)? {
            Shape::Vector(m) if *i < m => Ok(Shape::Scalar),
            s => mismatch(format!("index [{i}] into a {}", s.describe())),
        },
        Expr::Jump(a, None) => shape_of(a, decls, dim),
        Expr::Jump(a, Some(n)) => {
            let (sa, sn) = (shape_of(a, decls, dim)?, shape_of(n, decls, dim)?);
            if sn != Shape::Vector(dim) {
                return mismatch(format!("jump normal must be a vector[{dim}]"));
            }
            match sa {
                Shape::Scalar => Ok(Shape::Vector(dim)),
                Shape::Vector(m) if m == dim => Ok(Shape::Scalar),
                s => mismatch(format!("jump of a {} against a normal", s.describe())),
            }
        }
        Expr::Avg(a) | Expr::Restrict(a, _) => shape_of(a, decls, dim),
    }
}

/// Checked facts about a form: rank, argument elements, used
/// coefficients, a quadrature degree per integral and whether the form
/// is syntactically symmetric in its two arguments.
#[derive(Debug, Clone)]
pub struct FormMetadata {
    pub rank: usize,
    pub test: Option<ElementDescriptor>,
    pub trial: Option<ElementDescriptor>,
    pub coefficients: Vec<usize>,
    pub quadrature_degrees: Vec<usize>,
    pub symmetric: bool,
}

/// Validate a form and derive its metadata.
pub fn check_form(form: &Form) -> Result<FormMetadata, FormError> {
    let mut slot_elements: [Option<ElementDescriptor>; 2] = [None, None];
    let mut cells = Vec::new();
    let mut slot_err = None;
    for it in &form.integrals {
        it.integrand.visit(&mut |e| {
            if slot_err.is_some() {
                return;
            }
            if let Expr::Argument { slot, element } = e {
                if *slot > TRIAL_SLOT {
                    slot_err = Some(FormError::MixedRanks(format!(
                        "argument slot {slot} out of range"
                    )));
                    return;
                }
                match &slot_elements[*slot] {
                    None => slot_elements[*slot] = Some(element.clone()),
                    Some(prev) if prev != element => {
                        slot_err = Some(FormError::MixedRanks(format!(
                            "two different elements in argument slot {slot}: {prev} and {element}"
                        )));
                    }
                    _ => {}
                }
                cells.push(element.cell());
            }
        });
    }
    if let Some(e) = slot_err {
        return Err(e);
    }
    if slot_elements[TRIAL_SLOT].is_some() && slot_elements[TEST_SLOT].is_none() {
        return Err(FormError::MixedRanks(
            "form has a trial function but no test function".into(),
        ));
    }
    for id in form.used_coefficients() {
        match form.coefficients.get(id) {
            Some(d) => {
                if let CoefficientKind::Element(el) = &d.kind {
                    cells.push(el.cell());
                }
            }
            None => {
                return Err(FormError::ShapeMismatch(format!(
                    "coefficient id {id} has no declaration"
                )));
            }
        }
    }
    if cells.windows(2).any(|w| w[0] != w[1]) {
        return Err(FormError::ShapeMismatch(
            "form mixes elements on different cells".into(),
        ));
    }
    // Spatial dimension; forms without any element are only constrained
    // at compile time, use the loosest value here.
    let dim = cells.first().map(|c| c.tdim()).unwrap_or(3);

    let mut quadrature_degrees = Vec::new();
    for it in &form.integrals {
        let shape = shape_of(&it.integrand, &form.coefficients, dim)?;
        if shape != Shape::Scalar {
            return Err(FormError::ShapeMismatch(format!(
                "integrand must be scalar, got {} in a {} integral",
                shape.describe(),
                it.measure.name()
            )));
        }
        check_restrictions(&it.integrand, it.measure, false, &form.coefficients)?;
        let deg = estimate_degree(&it.integrand, &form.coefficients);
        quadrature_degrees.push(deg.clamp(1, MAX_QUADRATURE_DEGREE));
    }

    let rank = form.rank();
    let symmetric = rank == 2
        && slot_elements[TEST_SLOT] == slot_elements[TRIAL_SLOT]
        && is_syntactically_symmetric(form, dim);

    Ok(FormMetadata {
        rank,
        test: slot_elements[TEST_SLOT].clone(),
        trial: slot_elements[TRIAL_SLOT].clone(),
        coefficients: form.used_coefficients(),
        quadrature_degrees,
        symmetric,
    })
}

/// Terminals that take different values on the two sides of an interior
/// facet. Constants and closed-form coefficients are single-valued and
/// exempt; discrete fields, arguments, the normal and the cell size are
/// not.
fn terminal_name(e: &Expr, decls: &[CoefficientDecl]) -> Option<String> {
    match e {
        Expr::Argument { slot, .. } => Some(if *slot == TEST_SLOT {
            "test function".into()
        } else {
            "trial function".into()
        }),
        Expr::Coefficient { id } => match decls.get(*id) {
            Some(d) => match d.kind {
                CoefficientKind::Element(_) => Some(format!("coefficient '{}'", d.name)),
                CoefficientKind::Expression(_) | CoefficientKind::Scalar(_) => None,
            },
            None => Some(format!("coefficient {id}")),
        },
        Expr::FacetNormal => Some("facet normal".into()),
        Expr::CellSize => Some("cell size".into()),
        _ => None,
    }
}

/// Interior-facet integrands must restrict every single-valued terminal;
/// everywhere else restrictions are meaningless.
fn check_restrictions(
    e: &Expr,
    measure: Measure,
    covered: bool,
    decls: &[CoefficientDecl],
) -> Result<(), FormError> {
    match measure {
        Measure::InteriorFacet => {
            if let Some(name) = terminal_name(e, decls) {
                if !covered {
                    return Err(FormError::UnrestrictedInteriorFacet(name));
                }
                return Ok(());
            }
            match e {
                Expr::Restrict(a, _) | Expr::Avg(a) => {
                    check_restrictions(a, measure, true, decls)
                }
                Expr::Jump(a, n) => {
                    check_restrictions(a, measure, true, decls)?;
                    if let Some(n) = n {
                        check_restrictions(n, measure, true, decls)?;
                    }
                    Ok(())
                }
                _ => each_child(e, |c| check_restrictions(c, measure, covered, decls)),
            }
        }
        _ => {
            match e {
                Expr::Restrict(..) | Expr::Avg(_) | Expr::Jump(..) => {
                    return Err(FormError::MisplacedRestriction(format!(
                        "in a {} integral",
                        measure.name()
                    )));
                }
                Expr::FacetNormal if measure == Measure::Cell => {
                    return Err(FormError::ShapeMismatch(
                        "facet normal in a cell integral".into(),
                    ));
                }
                _ => {}
            }
            each_child(e, |c| check_restrictions(c, measure, covered, decls))
        }
    }
}

fn each_child(
    e: &Expr,
    mut f: impl FnMut(&Expr) -> Result<(), FormError>,
) -> Result<(), FormError> {
    match e {
        Expr::Argument { .. }
        | Expr::Coefficient { .. }
        | Expr::Constant(_)
        | Expr::SpatialCoordinate
        | Expr::FacetNormal
        | Expr::CellSize => Ok(()),
        Expr::Grad(a)
        | Expr::Div(a)
        | Expr::Negation(a)
        | Expr::Power(a, _)
        | Expr::Call(_, a)
        | Expr::Indexed(a, _)
        | Expr::Avg(a)
        | Expr::Restrict(a, _) => f(a),
        Expr::Inner(a, b)
        | Expr::Dot(a, b)
        | Expr::Sum(a, b)
        | Expr::Product(a, b)
        | Expr::Division(a, b) => {
            f(a)?;
            f(b)
        }
        Expr::Jump(a, n) => {
            f(a)?;
            if let Some(n) = n {
                f(n)?;
            }
            Ok(())
        }
    }
}

/// Polynomial-equivalent degree of an integrand, before clamping.
pub(crate) fn estimate_degree(e: &Expr, decls: &[CoefficientDecl]) -> usize {
    match e {
        Expr::Argument { element, .. } => element.degree(),
        Expr::Coefficient { id } => match decls.get(*id).map(|d| &d.kind) {
            Some(CoefficientKind::Element(el)) => el.degree(),
            Some(CoefficientKind::Expression(def)) => def.degree,
            _ => 0,
        },
        Expr::Constant(_) | Expr::FacetNormal | Expr::CellSize => 0,
        Expr::SpatialCoordinate => 1,
        Expr::Grad(a) | Expr::Div(a) => estimate_degree(a, decls).saturating_sub(1),
        Expr::Inner(a, b) | Expr::Dot(a, b) | Expr::Product(a, b) | Expr::Division(a, b) => {
            estimate_degree(a, decls) + estimate_degree(b, decls)
        }
        Expr::Sum(a, b) => estimate_degree(a, decls).max(estimate_degree(b, decls)),
        Expr::Negation(a) | Expr::Indexed(a, _) | Expr::Avg(a) | Expr::Restrict(a, _) => {
            estimate_degree(a, decls)
        }
        Expr::Power(a, k) => estimate_degree(a, decls) * k.unsigned_abs() as usize,
        Expr::Call(_, a) => estimate_degree(a, decls) + 2,
        Expr::Jump(a, n) => {
            estimate_degree(a, decls)
                + n.as_ref().map(|n| estimate_degree(n, decls)).unwrap_or(0)
        }
    }
}

/// Canonical ordering of commutative operations, for structural
/// comparison. Sorting keys are debug strings of canonicalized
/// subtrees.
fn canon(e: &Expr, decls: &[CoefficientDecl], dim: usize) -> Expr {
    match e {
        Expr::Sum(..) => {
            let mut terms = Vec::new();
            flatten_sums(e, decls, dim, &mut terms);
            terms.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
            rebuild(terms, Expr::Sum)
        }
        Expr::Product(..) => {
            let mut factors = Vec::new();
            flatten_products(e, decls, dim, &mut factors);
            factors.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
            rebuild(factors, Expr::Product)
        }
        Expr::Inner(a, b) => {
            let (ca, cb) = (canon(a, decls, dim), canon(b, decls, dim));
            sorted_pair(ca, cb, Expr::Inner)
        }
        Expr::Dot(a, b) => {
            let (ca, cb) = (canon(a, decls, dim), canon(b, decls, dim));
            let both_vectors = matches!(
                (shape_of(a, decls, dim), shape_of(b, decls, dim)),
                (Ok(Shape::Vector(_)), Ok(Shape::Vector(_)))
            );
            if both_vectors {
                sorted_pair(ca, cb, Expr::Dot)
            } else {
                Expr::Dot(ca.boxed(), cb.boxed())
            }
        }
        Expr::Negation(a) => match canon(a, decls, dim) {
            Expr::Negation(inner) => *inner,
            c => Expr::Negation(c.boxed()),
        },
        Expr::Grad(a) => Expr::Grad(canon(a, decls, dim).boxed()),
        Expr::Div(a) => Expr::Div(canon(a, decls, dim).boxed()),
        Expr::Division(a, b) => {
            Expr::Division(canon(a, decls, dim).boxed(), canon(b, decls, dim).boxed())
        }
        Expr::Power(a, k) => Expr::Power(canon(a, decls, dim).boxed(), *k),
        Expr::Call(f, a) => Expr::Call(*f, canon(a, decls, dim).boxed()),
        Expr::Indexed(a, i) => Expr::Indexed(canon(a, decls, dim).boxed(), *i),
        Expr::Jump(a, n) => Expr::Jump(
            canon(a, decls, dim).boxed(),
            n.as_ref().map(|n| canon(n, decls, dim).boxed()),
        ),
        Expr::Avg(a) => Expr::Avg(canon(a, decls, dim).boxed()),
        Expr::Restrict(a, s) => Expr::Restrict(canon(a, decls, dim).boxed(), *s),
        leaf => leaf.clone(),
    }
}

fn sorted_pair(a: Expr, b: Expr, make: impl Fn(Box<Expr>, Box<Expr>) -> Expr) -> Expr {
    if format!("{a:?}") <= format!("{b:?}") {
        make(a.boxed(), b.boxed())
    } else {
        make(b.boxed(), a.boxed())
    }
}

fn flatten_sums(e: &Expr, decls: &[CoefficientDecl], dim: usize, out: &mut Vec<Expr>) {
    match e {
        Expr::Sum(a, b) => {
            flatten_sums(a, decls, dim, out);
            flatten_sums(b, decls, dim, out);
        }
        other => out.push(canon(other, decls, dim)),
    }
}

fn flatten_products(e: &Expr, decls: &[CoefficientDecl], dim: usize, out: &mut Vec<Expr>) {
    match e {
        Expr::Product(a, b) => {
            flatten_products(a, decls, dim, out);
            flatten_products(b, decls, dim, out);
        }
        other => out.push(canon(other, decls, dim)),
    }
}

fn rebuild(mut parts: Vec<Expr>, make: fn(Box<Expr>, Box<Expr>) -> Expr) -> Expr {
    let first = parts.remove(0);
    parts
        .into_iter()
        .fold(first, |acc, p| make(acc.boxed(), p.boxed()))
}

fn swap_slots(e: &Expr) -> Expr {
    let mut c = e.clone();
    swap_slots_mut(&mut c);
    c
}

fn swap_slots_mut(e: &mut Expr) {
    match e {
        Expr::Argument { slot, .. } => *slot = 1 - *slot,
        Expr::Coefficient { .. }
        | Expr::Constant(_)
        | Expr::SpatialCoordinate
        | Expr::FacetNormal
        | Expr::CellSize => {}
        Expr::Grad(a)
        | Expr::Div(a)
        | Expr::Negation(a)
        | Expr::Power(a, _)
        | Expr::Call(_, a)
        | Expr::Indexed(a, _)
        | Expr::Avg(a)
        | Expr::Restrict(a, _) => swap_slots_mut(a),
        Expr::Inner(a, b)
        | Expr::Dot(a, b)
        | Expr::Sum(a, b)
        | Expr::Product(a, b)
        | Expr::Division(a, b) => {
            swap_slots_mut(a);
            swap_slots_mut(b);
        }
        Expr::Jump(a, n) => {
            swap_slots_mut(a);
            if let Some(n) = n {
                swap_slots_mut(n);
            }
        }
    }
}

/// A rank-2 form is reported symmetric when swapping test and trial and
/// canonically reordering commutative operations reproduces the same
/// multiset of terms per measure. A negative answer is conservative;
/// integration can still produce a symmetric matrix.
fn is_syntactically_symmetric(form: &Form, dim: usize) -> bool {
    let decls = &form.coefficients;
    let fingerprint = |swap: bool| {
        let mut groups: BTreeMap<(usize, Option<usize>), Vec<String>> = BTreeMap::new();
        for it in &form.integrals {
            let integrand = if swap { swap_slots(&it.integrand) } else { it.integrand.clone() };
            let key = (it.measure as usize, it.subdomain);
            let entry = groups.entry(key).or_default();
            for term in super::manipulate::expand_with(&integrand, decls) {
                entry.push(format!("{:?}", canon(&term, decls, dim)));
            }
        }
        for v in groups.values_mut() {
            v.sort();
        }
        groups
    };
    fingerprint(false) == fingerprint(true)
}
