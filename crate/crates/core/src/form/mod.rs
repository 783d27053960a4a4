//! The variational form language.
//!
//! Forms are written in small text files: element and function
//! declarations followed by form assignments built from the usual
//! operators (grad, div, inner, dot, jump, avg) and measures dx, ds, dS.
//! Parsing produces an expression AST; checking establishes value shapes,
//! restriction validity and quadrature degrees; manipulation provides
//! monomial expansion, the lhs/rhs split of a combined form and Gateaux
//! differentiation for Newton linearization.

mod check;
mod lex;
mod manipulate;
mod parse;

pub use check::{check_form, shape_of, FormMetadata, Shape};
pub use manipulate::{
    bind_constants, derivative, expand_terms, lhs_rhs, override_degrees, substitute_argument,
};
pub use parse::{parse_expression, parse_form_file};

use crate::element::ElementDescriptor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormError {
    #[error("syntax error at {line}:{col}: {message}")]
    SyntaxError { line: usize, col: usize, message: String },
    #[error("unknown identifier '{name}' at {line}:{col}")]
    UnknownIdentifier { line: usize, col: usize, name: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("interior-facet integrand contains an unrestricted terminal: {0}")]
    UnrestrictedInteriorFacet(String),
    #[error("restriction used outside an interior-facet integral: {0}")]
    MisplacedRestriction(String),
    #[error("inconsistent argument spaces: {0}")]
    MixedRanks(String),
    #[error("form is not linear in the trial function: {0}")]
    NonlinearInTrial(String),
    #[error("form has no terms containing the trial function")]
    EmptyBilinear,
    #[error("cannot differentiate through {0}")]
    UnsupportedNode(String),
    #[error("expected {want} expression components, got {got}")]
    BadComponentCount { want: usize, got: usize },
    #[error("'{0}' is not a form")]
    NotAForm(String),
    #[error(transparent)]
    Element(#[from] crate::element::ElementError),
}

pub const TEST_SLOT: usize = 0;
pub const TRIAL_SLOT: usize = 1;

/// Which side of an interior facet a restricted quantity is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn label(&self) -> &'static str {
        match self {
            Side::Plus => "+",
            Side::Minus => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

/// Expression tree of a form integrand or a point expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    /// Test (slot 0) or trial (slot 1) function.
    Argument { slot: usize, element: ElementDescriptor },
    /// Reference into the owning form's coefficient declarations.
    Coefficient { id: usize },
    Constant(f64),
    SpatialCoordinate,
    FacetNormal,
    CellSize,
    Grad(Box<Expr>),
    Div(Box<Expr>),
    Inner(Box<Expr>, Box<Expr>),
    Dot(Box<Expr>, Box<Expr>),
    Sum(Box<Expr>, Box<Expr>),
    Product(Box<Expr>, Box<Expr>),
    Division(Box<Expr>, Box<Expr>),
    Negation(Box<Expr>),
    Power(Box<Expr>, i32),
    Call(Func, Box<Expr>),
    Indexed(Box<Expr>, usize),
    /// jump(e) = e+ - e-; jump(e, n) = e+ n+ + e- n-.
    Jump(Box<Expr>, Option<Box<Expr>>),
    Avg(Box<Expr>),
    Restrict(Box<Expr>, Side),
}

impl Expr {
    pub fn boxed(self) -> Box<Expr> {
        Box::new(self)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Constant(v) if *v == 0.0)
    }

    /// Walk the tree, calling `f` on every node (parents first).
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Argument { .. }
            | Expr::Coefficient { .. }
            | Expr::Constant(_)
            | Expr::SpatialCoordinate
            | Expr::FacetNormal
            | Expr::CellSize => {}
            Expr::Grad(e)
            | Expr::Div(e)
            | Expr::Negation(e)
            | Expr::Power(e, _)
            | Expr::Call(_, e)
            | Expr::Indexed(e, _)
            | Expr::Avg(e)
            | Expr::Restrict(e, _) => e.visit(f),
            Expr::Inner(a, b)
            | Expr::Dot(a, b)
            | Expr::Sum(a, b)
            | Expr::Product(a, b)
            | Expr::Division(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Jump(e, n) => {
                e.visit(f);
                if let Some(n) = n {
                    n.visit(f);
                }
            }
        }
    }
}

/// Integration domain of one integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Cell,
    ExteriorFacet,
    InteriorFacet,
}

impl Measure {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::Cell => "dx",
            Measure::ExteriorFacet => "ds",
            Measure::InteriorFacet => "dS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub integrand: Expr,
    pub measure: Measure,
    pub subdomain: Option<usize>,
}

/// A closed-form coefficient evaluable at spatial points; components use
/// only SpatialCoordinate, constants and pointwise arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionDef {
    pub components: Vec<Expr>,
    /// Polynomial-equivalent degree used for quadrature estimation.
    pub degree: usize,
}

pub const DEFAULT_EXPRESSION_DEGREE: usize = 2;

impl ExpressionDef {
    pub fn value_size(&self) -> usize {
        self.components.len()
    }

    /// Evaluate component `comp` at a point (gdim reals).
    pub fn eval(&self, comp: usize, x: &[f64]) -> f64 {
        eval_point_expr(&self.components[comp], x)
    }
}

/// Evaluate a pure point expression; panics on nodes that need more than
/// a coordinate (callers guarantee the expression was built by
/// `parse_expression`).
pub(crate) fn eval_point_expr(e: &Expr, x: &[f64]) -> f64 {
    match e {
        Expr::Constant(v) => *v,
        Expr::Indexed(b, i) => match **b {
            Expr::SpatialCoordinate => x[*i],
            _ => panic!("not a point expression: {b:?}"),
        },
        Expr::Sum(a, b) => eval_point_expr(a, x) + eval_point_expr(b, x),
        Expr::Product(a, b) => eval_point_expr(a, x) * eval_point_expr(b, x),
        Expr::Division(a, b) => eval_point_expr(a, x) / eval_point_expr(b, x),
        Expr::Negation(a) => -eval_point_expr(a, x),
        Expr::Power(a, k) => eval_point_expr(a, x).powi(*k),
        Expr::Call(f, a) => f.apply(eval_point_expr(a, x)),
        other => panic!("not a point expression: {other:?}"),
    }
}

/// How a declared coefficient gets its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoefficientKind {
    /// Discrete function on the given element; dof values bound at
    /// assembly time.
    Element(ElementDescriptor),
    /// Closed-form expression, inlined by the kernel compiler.
    Expression(ExpressionDef),
    /// Named scalar with a default value; baked in by `bind_constants`.
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDecl {
    pub name: String,
    pub kind: CoefficientKind,
}

/// A multilinear form: integrals plus the coefficient declarations its
/// expression nodes reference by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Form {
    pub integrals: Vec<Integral>,
    pub coefficients: Vec<CoefficientDecl>,
}

impl Form {
    /// Number of distinct argument slots; 0 for functionals.
    pub fn rank(&self) -> usize {
        let mut has = [false, false];
        for it in &self.integrals {
            it.integrand.visit(&mut |e| {
                if let Expr::Argument { slot, .. } = e {
                    has[*slot] = true;
                }
            });
        }
        has.iter().filter(|&&b| b).count()
    }

    /// The element of the given argument slot, if the slot occurs.
    pub fn argument_element(&self, slot: usize) -> Option<ElementDescriptor> {
        let mut found = None;
        for it in &self.integrals {
            it.integrand.visit(&mut |e| {
                if let Expr::Argument { slot: s, element } = e {
                    if *s == slot && found.is_none() {
                        found = Some(element.clone());
                    }
                }
            });
        }
        found
    }

    /// Ids of coefficients that actually occur, ascending.
    pub fn used_coefficients(&self) -> Vec<usize> {
        let mut used = std::collections::BTreeSet::new();
        for it in &self.integrals {
            it.integrand.visit(&mut |e| {
                if let Expr::Coefficient { id } = e {
                    used.insert(*id);
                }
            });
        }
        used.into_iter().collect()
    }

    pub fn coefficient_named(&self, name: &str) -> Option<usize> {
        self.coefficients.iter().position(|c| c.name == name)
    }
}

/// Everything a parsed form file declares.
#[derive(Debug, Clone)]
pub struct FormFile {
    pub elements: std::collections::BTreeMap<String, ElementDescriptor>,
    pub coefficients: Vec<CoefficientDecl>,
    pub forms: std::collections::BTreeMap<String, Form>,
}

#[cfg(test)]
mod tests;
