//! Recursive-descent parser for form files and point expressions.
//!
//! A form file is a sequence of assignments, one per line (newlines inside
//! parentheses continue the statement, '#' starts a comment):
//!
//!   scalar = FiniteElement("CG", "triangle", 1)
//!   v = TestFunction(scalar)
//!   u = TrialFunction(scalar)
//!   f = Coefficient(scalar)
//!   a = (inner(grad(v), grad(u)) + v*u)*dx
//!   L = v*f*dx
//!
//! Values are expressions, elements, measures or forms; multiplying an
//! expression by a measure produces a one-integral form, and forms add.

use super::lex::{tokenize, Tok, Token};
use super::{
    manipulate, CoefficientDecl, CoefficientKind, Expr, ExpressionDef, Form, FormError, FormFile,
    Func, Integral, Measure, Side, DEFAULT_EXPRESSION_DEGREE, TEST_SLOT, TRIAL_SLOT,
};
use crate::element::{ElementDescriptor, Family};
use crate::reference::CellType;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
enum Value {
    Expr(Expr),
    Form(Vec<Integral>),
    Element(ElementDescriptor),
    Measure(Measure, Option<usize>),
    Str(String),
    /// Coefficient or Constant declaration waiting for its name; only
    /// valid as the entire right-hand side of an assignment.
    Pending(CoefficientKind),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Expr(_) => "expression",
            Value::Form(_) => "form",
            Value::Element(_) => "element",
            Value::Measure(..) => "measure",
            Value::Str(_) => "string",
            Value::Pending(_) => "declaration",
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scope: BTreeMap<String, Value>,
    decls: Vec<CoefficientDecl>,
    elements: BTreeMap<String, ElementDescriptor>,
    forms: BTreeMap<String, Vec<Integral>>,
    /// Restricts the callable set for point expressions.
    point_mode: bool,
}

fn err(t: &Token, message: impl Into<String>) -> FormError {
    FormError::SyntaxError { line: t.line, col: t.col, message: message.into() }
}

impl Parser {
    fn new(text: &str, point_mode: bool) -> Result<Parser, FormError> {
        let mut scope = BTreeMap::new();
        scope.insert("pi".into(), Value::Expr(Expr::Constant(std::f64::consts::PI)));
        if point_mode {
            scope.insert("x".into(), Value::Expr(Expr::SpatialCoordinate));
        } else {
            scope.insert("dx".into(), Value::Measure(Measure::Cell, None));
            scope.insert("ds".into(), Value::Measure(Measure::ExteriorFacet, None));
            scope.insert("dS".into(), Value::Measure(Measure::InteriorFacet, None));
            scope.insert("FacetNormal".into(), Value::Expr(Expr::FacetNormal));
            scope.insert("CellSize".into(), Value::Expr(Expr::CellSize));
            scope.insert("x".into(), Value::Expr(Expr::SpatialCoordinate));
        }
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
            scope,
            decls: Vec::new(),
            elements: BTreeMap::new(),
            forms: BTreeMap::new(),
            point_mode,
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if &self.peek().tok == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, FormError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            let t = self.peek().clone();
            Err(err(&t, format!("expected {what}")))
        }
    }

    fn file(&mut self) -> Result<(), FormError> {
        loop {
            while self.eat(&Tok::Newline) {}
            if self.peek().tok == Tok::Eof {
                return Ok(());
            }
            self.statement()?;
        }
    }

    fn statement(&mut self) -> Result<(), FormError> {
        let t = self.peek().clone();
        let name = match &t.tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.advance();
                s
            }
            _ => return Err(err(&t, "expected an identifier at start of statement")),
        };
        self.expect(Tok::Equals, "'=' after name")?;
        let value = self.sum()?;
        let t = self.peek().clone();
        if !matches!(t.tok, Tok::Newline | Tok::Eof) {
            return Err(err(&t, "expected end of statement"));
        }
        self.bind(name, value);
        Ok(())
    }

    fn bind(&mut self, name: String, value: Value) {
        let stored = match value {
            Value::Pending(kind) => {
                let id = self.decls.len();
                self.decls.push(CoefficientDecl { name: name.clone(), kind });
                Value::Expr(Expr::Coefficient { id })
            }
            Value::Element(d) => {
                self.elements.insert(name.clone(), d.clone());
                Value::Element(d)
            }
            Value::Form(integrals) => {
                self.forms.insert(name.clone(), integrals.clone());
                Value::Form(integrals)
            }
            v => v,
        };
        self.scope.insert(name, stored);
    }

    // sum := term (('+'|'-') term)*
    fn sum(&mut self) -> Result<Value, FormError> {
        let mut lhs = self.term()?;
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::Plus => {
                    self.advance();
                    let rhs = self.term()?;
                    lhs = add_values(lhs, rhs, &t)?;
                }
                Tok::Minus => {
                    self.advance();
                    let rhs = self.term()?;
                    lhs = add_values(lhs, negate_value(rhs, &t)?, &t)?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Value, FormError> {
        let mut lhs = self.unary()?;
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::Star => {
                    self.advance();
                    let rhs = self.unary()?;
                    lhs = mul_values(lhs, rhs, &t)?;
                }
                Tok::Slash => {
                    self.advance();
                    let rhs = self.unary()?;
                    match (lhs, rhs) {
                        (Value::Expr(a), Value::Expr(b)) => {
                            lhs = Value::Expr(Expr::Division(a.boxed(), b.boxed()));
                        }
                        (a, b) => {
                            return Err(err(
                                &t,
                                format!("cannot divide {} by {}", a.describe(), b.describe()),
                            ));
                        }
                    }
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Value, FormError> {
        let t = self.peek().clone();
        if t.tok == Tok::Minus {
            self.advance();
            let v = self.unary()?;
            negate_value(v, &t)
        } else {
            self.power()
        }
    }

    // power := postfix ('^' exponent)?   with an integer literal exponent
    fn power(&mut self) -> Result<Value, FormError> {
        let base = self.postfix()?;
        let t = self.peek().clone();
        if t.tok != Tok::Caret {
            return Ok(base);
        }
        self.advance();
        let neg = self.eat(&Tok::Minus);
        let et = self.peek().clone();
        let k = match et.tok {
            Tok::Number(v) if v.fract() == 0.0 && v.abs() < i32::MAX as f64 => {
                self.advance();
                v as i32
            }
            _ => return Err(err(&et, "exponent must be an integer literal")),
        };
        let k = if neg { -k } else { k };
        match base {
            Value::Expr(e) => Ok(Value::Expr(Expr::Power(e.boxed(), k))),
            v => Err(err(&t, format!("cannot raise a {} to a power", v.describe()))),
        }
    }

    // postfix := atom ( '(' args ')' | '[' index ']' )*
    fn postfix(&mut self) -> Result<Value, FormError> {
        let mut v = self.atom()?;
        loop {
            let t = self.peek().clone();
            match t.tok {
                Tok::LParen => {
                    self.advance();
                    let args = self.arguments()?;
                    v = apply_postfix_call(v, args, &t)?;
                }
                Tok::LBracket => {
                    self.advance();
                    let it = self.peek().clone();
                    let idx = match it.tok {
                        Tok::Number(n) if n.fract() == 0.0 && n >= 0.0 => {
                            self.advance();
                            n as usize
                        }
                        _ => return Err(err(&it, "index must be a non-negative integer")),
                    };
                    self.expect(Tok::RBracket, "']'")?;
                    match v {
                        Value::Expr(e) => v = Value::Expr(Expr::Indexed(e.boxed(), idx)),
                        other => {
                            return Err(err(&t, format!("cannot index a {}", other.describe())));
                        }
                    }
                }
                _ => return Ok(v),
            }
        }
    }

    fn arguments(&mut self) -> Result<Vec<(Value, Token)>, FormError> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            let at = self.peek().clone();
            args.push((self.sum()?, at));
            if self.eat(&Tok::Comma) {
                continue;
            }
            self.expect(Tok::RParen, "')' after arguments")?;
            return Ok(args);
        }
    }

    fn atom(&mut self) -> Result<Value, FormError> {
        let t = self.advance();
        match &t.tok {
            Tok::Number(v) => Ok(Value::Expr(Expr::Constant(*v))),
            Tok::Str(s) => Ok(Value::Str(s.clone())),
            Tok::LParen => {
                let v = self.sum()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(v)
            }
            Tok::Ident(name) => {
                let name = name.clone();
                if self.peek().tok == Tok::LParen && self.is_callable(&name) {
                    let pt = self.advance();
                    let args = self.arguments()?;
                    self.call(&name, args, &pt)
                } else {
                    match self.scope.get(&name) {
                        Some(v) => Ok(v.clone()),
                        None => Err(FormError::UnknownIdentifier {
                            line: t.line,
                            col: t.col,
                            name,
                        }),
                    }
                }
            }
            _ => Err(err(&t, "expected a value")),
        }
    }

    fn is_callable(&self, name: &str) -> bool {
        if Func::from_name(name).is_some() {
            return true;
        }
        if self.point_mode {
            return false;
        }
        matches!(
            name,
            "FiniteElement"
                | "VectorElement"
                | "MixedElement"
                | "TestFunction"
                | "TrialFunction"
                | "Coefficient"
                | "Constant"
                | "FacetNormal"
                | "CellSize"
                | "grad"
                | "div"
                | "inner"
                | "dot"
                | "jump"
                | "avg"
                | "lhs"
                | "rhs"
                | "derivative"
        )
    }

    fn call(
        &mut self,
        name: &str,
        args: Vec<(Value, Token)>,
        t: &Token,
    ) -> Result<Value, FormError> {
        if let Some(f) = Func::from_name(name) {
            let e = expr_arg(name, &args, 0, 1, t)?;
            return Ok(Value::Expr(Expr::Call(f, e.boxed())));
        }
        match name {
            "FiniteElement" => {
                if args.len() != 3 {
                    return Err(err(t, "FiniteElement takes (family, cell, degree)"));
                }
                let (fam, cell, deg) = element_args(&args, t)?;
                Ok(Value::Element(ElementDescriptor::scalar(fam, cell, deg)))
            }
            "VectorElement" => {
                if args.len() != 3 && args.len() != 4 {
                    return Err(err(t, "VectorElement takes (family, cell, degree[, count])"));
                }
                let (fam, cell, deg) = element_args(&args, t)?;
                let count = if args.len() == 4 {
                    usize_arg("component count", &args, 3)?
                } else {
                    cell.tdim()
                };
                Ok(Value::Element(ElementDescriptor::vector(
                    ElementDescriptor::scalar(fam, cell, deg),
                    count,
                )))
            }
            "MixedElement" => {
                let mut subs = Vec::new();
                for (a, at) in &args {
                    match a {
                        Value::Element(d) => subs.push(d.clone()),
                        other => {
                            return Err(err(
                                at,
                                format!("MixedElement takes elements, got {}", other.describe()),
                            ));
                        }
                    }
                }
                if subs.is_empty() {
                    return Err(err(t, "MixedElement needs at least one sub-element"));
                }
                Ok(Value::Element(ElementDescriptor::Mixed { subs }))
            }
            "TestFunction" | "TrialFunction" => {
                let slot = if name == "TestFunction" { TEST_SLOT } else { TRIAL_SLOT };
                match args.as_slice() {
                    [(Value::Element(d), _)] => {
                        Ok(Value::Expr(Expr::Argument { slot, element: d.clone() }))
                    }
                    _ => Err(err(t, format!("{name} takes one element argument"))),
                }
            }
            "Coefficient" => match args.as_slice() {
                [(Value::Element(d), _)] => Ok(Value::Pending(CoefficientKind::Element(d.clone()))),
                _ => Err(err(t, "Coefficient takes one element argument")),
            },
            "Constant" => match args.as_slice() {
                [(Value::Expr(Expr::Constant(v)), _)] => {
                    Ok(Value::Pending(CoefficientKind::Scalar(*v)))
                }
                [(Value::Expr(Expr::Negation(inner)), _)] => match **inner {
                    Expr::Constant(v) => Ok(Value::Pending(CoefficientKind::Scalar(-v))),
                    _ => Err(err(t, "Constant takes one numeric argument")),
                },
                _ => Err(err(t, "Constant takes one numeric argument")),
            },
            "FacetNormal" => {
                if args.is_empty() {
                    Ok(Value::Expr(Expr::FacetNormal))
                } else {
                    Err(err(t, "FacetNormal takes no arguments"))
                }
            }
            "CellSize" => {
                if args.is_empty() {
                    Ok(Value::Expr(Expr::CellSize))
                } else {
                    Err(err(t, "CellSize takes no arguments"))
                }
            }
            "grad" => Ok(Value::Expr(Expr::Grad(expr_arg(name, &args, 0, 1, t)?.boxed()))),
            "div" => Ok(Value::Expr(Expr::Div(expr_arg(name, &args, 0, 1, t)?.boxed()))),
            "inner" => {
                let a = expr_arg(name, &args, 0, 2, t)?;
                let b = expr_arg(name, &args, 1, 2, t)?;
                Ok(Value::Expr(Expr::Inner(a.boxed(), b.boxed())))
            }
            "dot" => {
                let a = expr_arg(name, &args, 0, 2, t)?;
                let b = expr_arg(name, &args, 1, 2, t)?;
                Ok(Value::Expr(Expr::Dot(a.boxed(), b.boxed())))
            }
            "avg" => Ok(Value::Expr(Expr::Avg(expr_arg(name, &args, 0, 1, t)?.boxed()))),
            "jump" => match args.len() {
                1 => Ok(Value::Expr(Expr::Jump(expr_arg(name, &args, 0, 1, t)?.boxed(), None))),
                2 => {
                    let e = expr_arg(name, &args, 0, 2, t)?;
                    let n = expr_arg(name, &args, 1, 2, t)?;
                    Ok(Value::Expr(Expr::Jump(e.boxed(), Some(n.boxed()))))
                }
                _ => Err(err(t, "jump takes one or two arguments")),
            },
            "lhs" | "rhs" => {
                let form = self.form_arg(name, &args, t)?;
                let (a, l) = manipulate::lhs_rhs(&form)?;
                let part = if name == "lhs" { a } else { l };
                Ok(Value::Form(part.integrals))
            }
            "derivative" => {
                if args.len() != 3 {
                    return Err(err(t, "derivative takes (form, coefficient, trial)"));
                }
                let form = self.form_arg(name, &args[..1], t)?;
                let coef = match &args[1].0 {
                    Value::Expr(Expr::Coefficient { id }) => *id,
                    other => {
                        return Err(err(
                            &args[1].1,
                            format!(
                                "second derivative argument must be a coefficient, got {}",
                                other.describe()
                            ),
                        ));
                    }
                };
                let du = match &args[2].0 {
                    Value::Expr(e @ Expr::Argument { slot, .. }) if *slot == TRIAL_SLOT => {
                        e.clone()
                    }
                    other => {
                        return Err(err(
                            &args[2].1,
                            format!(
                                "third derivative argument must be a trial function, got {}",
                                other.describe()
                            ),
                        ));
                    }
                };
                let d = manipulate::derivative(&form, coef, &du)?;
                Ok(Value::Form(d.integrals))
            }
            _ => Err(err(t, format!("unknown function '{name}'"))),
        }
    }

    fn form_arg(
        &self,
        name: &str,
        args: &[(Value, Token)],
        t: &Token,
    ) -> Result<Form, FormError> {
        match args.first() {
            Some((Value::Form(integrals), _)) => {
                Ok(Form { integrals: integrals.clone(), coefficients: self.decls.clone() })
            }
            Some((other, at)) => {
                Err(err(at, format!("{name} takes a form, got {}", other.describe())))
            }
            None => Err(err(t, format!("{name} takes a form argument"))),
        }
    }
}

fn expr_arg(
    name: &str,
    args: &[(Value, Token)],
    i: usize,
    want: usize,
    t: &Token,
) -> Result<Expr, FormError> {
    if args.len() != want {
        return Err(err(t, format!("{name} takes {want} argument(s), got {}", args.len())));
    }
    match &args[i].0 {
        Value::Expr(e) => Ok(e.clone()),
        other => {
            Err(err(&args[i].1, format!("{name} takes expressions, got {}", other.describe())))
        }
    }
}

fn usize_arg(what: &str, args: &[(Value, Token)], i: usize) -> Result<usize, FormError> {
    match &args[i].0 {
        Value::Expr(Expr::Constant(v)) if v.fract() == 0.0 && *v >= 0.0 => Ok(*v as usize),
        _ => Err(err(&args[i].1, format!("{what} must be a non-negative integer"))),
    }
}

fn string_arg(args: &[(Value, Token)], i: usize, what: &str) -> Result<String, FormError> {
    match &args[i].0 {
        Value::Str(s) => Ok(s.clone()),
        other => Err(err(&args[i].1, format!("{what} must be a string, got {}", other.describe()))),
    }
}

fn element_args(
    args: &[(Value, Token)],
    _t: &Token,
) -> Result<(Family, CellType, usize), FormError> {
    let fam_s = string_arg(args, 0, "element family")?;
    let fam = parse_family(&fam_s)
        .ok_or_else(|| err(&args[0].1, format!("unknown element family '{fam_s}'")))?;
    let cell_s = string_arg(args, 1, "cell name")?;
    let cell = parse_cell(&cell_s)
        .ok_or_else(|| err(&args[1].1, format!("unknown cell '{cell_s}'")))?;
    let deg = usize_arg("element degree", args, 2)?;
    Ok((fam, cell, deg))
}

fn parse_family(s: &str) -> Option<Family> {
    Some(match s {
        "CG" | "Lagrange" => Family::CG,
        "DG" | "Discontinuous Lagrange" | "DiscontinuousLagrange" => Family::DG,
        "CR" | "Crouzeix-Raviart" => Family::CR,
        _ => return None,
    })
}

fn parse_cell(s: &str) -> Option<CellType> {
    Some(match s {
        "interval" => CellType::Interval,
        "triangle" => CellType::Triangle,
        "tetrahedron" => CellType::Tetrahedron,
        _ => return None,
    })
}

fn apply_postfix_call(
    v: Value,
    args: Vec<(Value, Token)>,
    t: &Token,
) -> Result<Value, FormError> {
    match v {
        // Restriction: e('+') or e('-').
        Value::Expr(e) => {
            if let [(Value::Str(s), at)] = args.as_slice() {
                let side = match s.as_str() {
                    "+" => Side::Plus,
                    "-" => Side::Minus,
                    other => {
                        return Err(err(
                            at,
                            format!("restriction must be '+' or '-', got '{other}'"),
                        ));
                    }
                };
                return Ok(Value::Expr(Expr::Restrict(e.boxed(), side)));
            }
            Err(err(t, "an expression can only be called with '+' or '-'"))
        }
        // Subdomain measure: dx(2).
        Value::Measure(m, _) => {
            if args.len() != 1 {
                return Err(err(t, "a measure takes one subdomain id"));
            }
            let id = usize_arg("measure subdomain", &args, 0)?;
            Ok(Value::Measure(m, Some(id)))
        }
        other => Err(err(t, format!("cannot call a {}", other.describe()))),
    }
}

fn add_values(lhs: Value, rhs: Value, t: &Token) -> Result<Value, FormError> {
    match (lhs, rhs) {
        (Value::Expr(a), Value::Expr(b)) => Ok(Value::Expr(Expr::Sum(a.boxed(), b.boxed()))),
        (Value::Form(mut a), Value::Form(b)) => {
            a.extend(b);
            Ok(Value::Form(a))
        }
        (a, b) => Err(err(
            t,
            format!(
                "cannot add {} and {} (missing measure on one term?)",
                a.describe(),
                b.describe()
            ),
        )),
    }
}

fn negate_value(v: Value, t: &Token) -> Result<Value, FormError> {
    match v {
        Value::Expr(e) => Ok(Value::Expr(Expr::Negation(e.boxed()))),
        Value::Form(integrals) => Ok(Value::Form(
            integrals
                .into_iter()
                .map(|it| Integral {
                    integrand: Expr::Negation(it.integrand.boxed()),
                    measure: it.measure,
                    subdomain: it.subdomain,
                })
                .collect(),
        )),
        other => Err(err(t, format!("cannot negate a {}", other.describe()))),
    }
}

fn mul_values(lhs: Value, rhs: Value, t: &Token) -> Result<Value, FormError> {
    match (lhs, rhs) {
        (Value::Expr(a), Value::Expr(b)) => Ok(Value::Expr(Expr::Product(a.boxed(), b.boxed()))),
        (Value::Expr(e), Value::Measure(m, sd)) => {
            Ok(Value::Form(vec![Integral { integrand: e, measure: m, subdomain: sd }]))
        }
        (a, b) => Err(err(t, format!("cannot multiply {} by {}", a.describe(), b.describe()))),
    }
}

/// Parse a form file: element, function and constant declarations plus
/// named form assignments.
pub fn parse_form_file(text: &str) -> Result<FormFile, FormError> {
    let mut p = Parser::new(text, false)?;
    p.file()?;
    let decls = p.decls;
    let forms = p
        .forms
        .into_iter()
        .map(|(name, integrals)| (name, Form { integrals, coefficients: decls.clone() }))
        .collect();
    Ok(FormFile { elements: p.elements, coefficients: decls, forms })
}

/// Parse component texts of a point expression: reals, `x[i]`, `pi`,
/// arithmetic, powers and sin/cos/exp/sqrt/abs. One component gives a
/// scalar, several a vector. `degree` is the polynomial-equivalent
/// degree used for quadrature estimation (default 2).
pub fn parse_expression(
    components: &[&str],
    degree: Option<usize>,
) -> Result<ExpressionDef, FormError> {
    let mut parsed = Vec::new();
    for text in components {
        let mut p = Parser::new(text, true)?;
        let v = p.sum()?;
        while p.eat(&Tok::Newline) {}
        let t = p.peek().clone();
        if t.tok != Tok::Eof {
            return Err(err(&t, "trailing input after expression"));
        }
        match v {
            Value::Expr(e) => {
                validate_point_expr(&e)?;
                parsed.push(e);
            }
            other => {
                return Err(FormError::SyntaxError {
                    line: 1,
                    col: 1,
                    message: format!("expected an expression, got {}", other.describe()),
                });
            }
        }
    }
    if parsed.is_empty() {
        return Err(FormError::BadComponentCount { want: 1, got: 0 });
    }
    Ok(ExpressionDef {
        components: parsed,
        degree: degree.unwrap_or(DEFAULT_EXPRESSION_DEGREE),
    })
}

fn validate_point_expr(e: &Expr) -> Result<(), FormError> {
    let mut bad = None;
    e.visit(&mut |n| {
        if bad.is_some() {
            return;
        }
        match n {
            Expr::Constant(_)
            | Expr::Sum(..)
            | Expr::Product(..)
            | Expr::Division(..)
            | Expr::Negation(_)
            | Expr::Power(..)
            | Expr::Call(..)
            | Expr::SpatialCoordinate => {}
            Expr::Indexed(b, i) => {
                if !matches!(**b, Expr::SpatialCoordinate) || *i > 2 {
                    bad = Some("only the coordinate x[0..3] can be indexed".to_string());
                }
            }
            _ => bad = Some("not a point expression".to_string()),
        }
    });
    // The coordinate vector may only appear under an index.
    if bad.is_none() {
        let mut bare = 0usize;
        let mut indexed = 0usize;
        e.visit(&mut |n| match n {
            Expr::SpatialCoordinate => bare += 1,
            Expr::Indexed(b, _) if matches!(**b, Expr::SpatialCoordinate) => indexed += 1,
            _ => {}
        });
        if bare != indexed {
            bad = Some("bare coordinate vector; use x[i]".into());
        }
    }
    match bad {
        Some(message) => Err(FormError::SyntaxError { line: 1, col: 1, message }),
        None => Ok(()),
    }
}
