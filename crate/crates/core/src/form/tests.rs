use super::manipulate;
use super::*;
use crate::element::Family;
use crate::reference::CellType;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn parsed(file: &str) -> FormFile {
    parse_form_file(file).unwrap()
}

fn form_and_meta(file: &str, name: &str) -> (Form, FormMetadata) {
    let f = parsed(file);
    let form = f.forms.get(name).cloned().unwrap_or_else(|| panic!("no form '{name}'"));
    let meta = check_form(&form).unwrap();
    (form, meta)
}

const REACTION_DIFFUSION: &str = r#"
element = FiniteElement("Lagrange", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
f = Coefficient(element)
a = (dot(grad(v), grad(u)) + v*u)*dx
L = v*f*dx
"#;

#[test]
fn parses_reaction_diffusion_file() {
    let f = parsed(REACTION_DIFFUSION);
    assert_eq!(f.elements.len(), 1);
    assert_eq!(
        f.elements["element"],
        ElementDescriptor::scalar(Family::CG, CellType::Triangle, 1)
    );
    assert_eq!(f.coefficients.len(), 1);
    assert_eq!(f.coefficients[0].name, "f");
    assert_eq!(f.forms.len(), 2);

    let a = &f.forms["a"];
    assert_eq!(a.rank(), 2);
    assert_eq!(a.integrals.len(), 1);
    assert_eq!(a.integrals[0].measure, Measure::Cell);
    assert!(a.used_coefficients().is_empty());

    let l = &f.forms["L"];
    assert_eq!(l.rank(), 1);
    assert_eq!(l.used_coefficients(), vec![0]);
}

#[test]
fn checks_reaction_diffusion_metadata() {
    let (_, ma) = form_and_meta(REACTION_DIFFUSION, "a");
    assert_eq!(ma.rank, 2);
    assert!(ma.symmetric);
    // dot(grad v, grad u) has degree 0, v*u has degree 2; the max wins.
    assert_eq!(ma.quadrature_degrees, vec![2]);
    assert_eq!(
        ma.test.unwrap(),
        ElementDescriptor::scalar(Family::CG, CellType::Triangle, 1)
    );

    let (_, ml) = form_and_meta(REACTION_DIFFUSION, "L");
    assert_eq!(ml.rank, 1);
    assert_eq!(ml.coefficients, vec![0]);
}

#[test]
fn pure_stiffness_degree_clamps_to_one() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
v = TestFunction(e)
u = TrialFunction(e)
a = dot(grad(v), grad(u))*dx
"#;
    let (_, m) = form_and_meta(file, "a");
    // Raw estimate is 0; the rule clamps to at least 1.
    assert_eq!(m.quadrature_degrees, vec![1]);
}

#[test]
fn quadratic_mass_degree_adds() {
    let file = r#"
e = FiniteElement("CG", "triangle", 2)
v = TestFunction(e)
u = TrialFunction(e)
a = v*u*dx
"#;
    let (_, m) = form_and_meta(file, "a");
    assert_eq!(m.quadrature_degrees, vec![4]);
}

#[test]
fn nonlinear_coefficient_degree() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
v = TestFunction(e)
du = TrialFunction(e)
u = Coefficient(e)
a = (1 + u*u)*inner(grad(v), grad(du))*dx
"#;
    let (_, m) = form_and_meta(file, "a");
    // (1 + u^2) carries degree 2, the gradient product degree 0.
    assert_eq!(m.quadrature_degrees, vec![2]);
}

#[test]
fn nonpolynomial_call_bumps_degree() {
    let file = r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
f = Coefficient(e)
M = v*sin(f)*dx
"#;
    let (_, m) = form_and_meta(file, "M");
    // 1 (v) + 1 (f) + 2 for the transcendental call.
    assert_eq!(m.quadrature_degrees, vec![4]);
}

#[test]
fn boundary_lift_functional() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
p = Coefficient(e)
n = FacetNormal
M = p*n[1]*ds
"#;
    let (form, m) = form_and_meta(file, "M");
    assert_eq!(m.rank, 0);
    assert_eq!(form.integrals[0].measure, Measure::ExteriorFacet);
    assert_eq!(m.coefficients, vec![0]);
}

#[test]
fn facet_normal_in_cell_integral_is_rejected() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
p = Coefficient(e)
n = FacetNormal
M = p*n[1]*dx
"#;
    let f = parsed(file);
    let err = check_form(&f.forms["M"]).unwrap_err();
    assert!(matches!(err, FormError::ShapeMismatch(_)), "{err}");
}

#[test]
fn unrestricted_interior_facet_is_rejected() {
    let file = r#"
e = FiniteElement("DG", "triangle", 1)
v = TestFunction(e)
u = TrialFunction(e)
a = v*u*dS
"#;
    let f = parsed(file);
    let err = check_form(&f.forms["a"]).unwrap_err();
    assert!(matches!(err, FormError::UnrestrictedInteriorFacet(_)), "{err}");
}

#[test]
fn restriction_outside_interior_facet_is_rejected() {
    let file = r#"
e = FiniteElement("DG", "triangle", 1)
v = TestFunction(e)
u = TrialFunction(e)
a = avg(v)*avg(u)*dx
"#;
    let f = parsed(file);
    let err = check_form(&f.forms["a"]).unwrap_err();
    assert!(matches!(err, FormError::MisplacedRestriction(_)), "{err}");
}

#[test]
fn restricted_interior_facet_passes() {
    let file = r#"
e = FiniteElement("DG", "triangle", 1)
v = TestFunction(e)
u = TrialFunction(e)
h = CellSize
a = (u('+') - u('-'))*jump(v)*dS + avg(u)*avg(v)/h('+')*dS
"#;
    let (_, m) = form_and_meta(file, "a");
    assert_eq!(m.rank, 2);
}

#[test]
fn interior_penalty_form_is_symmetric() {
    let file = r#"
e = FiniteElement("DG", "triangle", 1)
v = TestFunction(e)
u = TrialFunction(e)
n = FacetNormal
h = CellSize
alpha = Constant(4.0)
a = inner(grad(v), grad(u))*dx - dot(avg(grad(u)), jump(v, n))*dS - dot(avg(grad(v)), jump(u, n))*dS + (alpha/avg(h))*dot(jump(u, n), jump(v, n))*dS
"#;
    let (_, m) = form_and_meta(file, "a");
    assert_eq!(m.rank, 2);
    assert!(m.symmetric);
}

#[test]
fn convection_term_breaks_symmetry() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
w = VectorElement("CG", "triangle", 1)
v = TestFunction(e)
u = TrialFunction(e)
b = Coefficient(w)
a = (dot(grad(v), grad(u)) + v*dot(b, grad(u)))*dx
"#;
    let (_, m) = form_and_meta(file, "a");
    assert!(!m.symmetric);
}

#[test]
fn stokes_component_form_checks_out() {
    let file = r#"
P2 = VectorElement("CG", "triangle", 2)
P1 = FiniteElement("CG", "triangle", 1)
TH = MixedElement(P2, P1)
v = TestFunction(TH)
u = TrialFunction(TH)
divv = grad(v[0])[0] + grad(v[1])[1]
divu = grad(u[0])[0] + grad(u[1])[1]
a = (inner(grad(v[0]), grad(u[0])) + inner(grad(v[1]), grad(u[1])) - divv*u[2] + v[2]*divu)*dx
"#;
    let (form, m) = form_and_meta(file, "a");
    assert_eq!(m.rank, 2);
    assert_eq!(m.test.unwrap().value_size(), 3);
    // The skew pressure coupling is not symmetric under the swap.
    assert!(!m.symmetric);
    assert_eq!(form.integrals.len(), 1);
}

#[test]
fn splits_crank_nicolson_combined_form() {
    let file = r#"
scalar = FiniteElement("CG", "triangle", 1)
vector = VectorElement("CG", "triangle", 1)
v = TestFunction(scalar)
u1 = TrialFunction(scalar)
u0 = Coefficient(scalar)
b = Coefficient(vector)
k = Constant(0.05)
c = Constant(0.005)
u = 0.5*(u0 + u1)
F = v*(u1 - u0)*dx + k*v*dot(b, grad(u))*dx + k*c*dot(grad(v), grad(u))*dx
a = lhs(F)
L = rhs(F)
"#;
    let f = parsed(file);
    let (a, l) = (&f.forms["a"], &f.forms["L"]);
    let (ids, names): (Vec<usize>, Vec<&str>) = (
        f.coefficients.iter().enumerate().map(|(i, _)| i).collect(),
        f.coefficients.iter().map(|d| d.name.as_str()).collect(),
    );
    assert_eq!(names, vec!["u0", "b", "k", "c"]);
    let ma = check_form(a).unwrap();
    let ml = check_form(l).unwrap();
    assert_eq!(ma.rank, 2);
    assert_eq!(ml.rank, 1);
    // The bilinear part uses b, k, c but never the previous solution.
    let u0 = ids[0];
    assert!(!ma.coefficients.contains(&u0));
    assert!(ml.coefficients.contains(&u0));
    assert!(!ma.symmetric);
}

#[test]
fn split_rejects_quadratic_trial() {
    let file = r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
u = TrialFunction(e)
F = v*u*u*dx
a = lhs(F)
"#;
    let err = parse_form_file(file).unwrap_err();
    assert!(matches!(err, FormError::NonlinearInTrial(_)), "{err}");
}

#[test]
fn split_without_trial_terms_is_empty() {
    let file = r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
f = Coefficient(e)
F = v*f*dx
a = lhs(F)
"#;
    let err = parse_form_file(file).unwrap_err();
    assert!(matches!(err, FormError::EmptyBilinear), "{err}");
}

#[test]
fn derivative_of_nonlinear_poisson() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
v = TestFunction(e)
du = TrialFunction(e)
u = Coefficient(e)
f = Coefficient(e)
F = (1 + u*u)*dot(grad(u), grad(v))*dx - v*f*dx
J = derivative(F, u, du)
"#;
    let f = parsed(file);
    let j = &f.forms["J"];
    let m = check_form(j).unwrap();
    assert_eq!(m.rank, 2);
    // The load term does not depend on u, so only one integral survives.
    assert_eq!(j.integrals.len(), 1);
    assert!(!m.symmetric);
    // Both the 2u*du coupling and the (1+u^2) diffusion term are present.
    let mut saw_power_like = false;
    let mut saw_grad_du = false;
    let u_or_du = |x: &Expr| {
        matches!(x, Expr::Coefficient { id: 0 })
            || matches!(x, Expr::Argument { slot, .. } if *slot == TRIAL_SLOT)
    };
    j.integrals[0].integrand.visit(&mut |e| match e {
        Expr::Product(a, b) => {
            if u_or_du(a) && u_or_du(b) {
                saw_power_like = true;
            }
        }
        Expr::Grad(a) => {
            if matches!(**a, Expr::Argument { slot, .. } if slot == TRIAL_SLOT) {
                saw_grad_du = true;
            }
        }
        _ => {}
    });
    assert!(saw_power_like);
    assert!(saw_grad_du);
}

#[test]
fn derivative_rejects_abs() {
    let file = r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
du = TrialFunction(e)
u = Coefficient(e)
F = v*abs(u)*dx
J = derivative(F, u, du)
"#;
    let err = parse_form_file(file).unwrap_err();
    assert!(matches!(err, FormError::UnsupportedNode(_)), "{err}");
}

#[test]
fn derivative_chain_rules() {
    // d/du of sin(u), exp(u), sqrt(u), u^3 against hand results, checked
    // structurally through a numeric probe: evaluate the derivative
    // expression with u replaced by a literal and compare with the
    // analytic derivative at that value.
    let cases: [(&str, fn(f64) -> f64); 3] = [
        ("sin", |x| x.cos()),
        ("exp", |x| x.exp()),
        ("sqrt", |x| 0.5 / x.sqrt()),
    ];
    for (name, dref) in cases {
        let file = format!(
            r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
du = TrialFunction(e)
u = Coefficient(e)
F = v*{name}(u)*dx
J = derivative(F, u, du)
"#
        );
        let f = parse_form_file(&file).unwrap();
        let j = &f.forms["J"];
        // Strip v and du (both become 1), bake u = 0.7, then evaluate.
        let probed = manipulate::substitute(&j.integrals[0].integrand, &|e| match e {
            Expr::Argument { .. } => Some(Expr::Constant(1.0)),
            Expr::Coefficient { id: 0 } => Some(Expr::Constant(0.7)),
            _ => None,
        });
        let got = eval_point_expr(&probed, &[0.0]);
        assert_relative_eq!(got, dref(0.7), epsilon = 1e-15);
    }
}

#[test]
fn bind_constants_bakes_values() {
    let file = r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
u = TrialFunction(e)
k = Constant(0.5)
a = k*v*u*dx
"#;
    let f = parsed(file);
    let a = &f.forms["a"];
    assert_eq!(a.used_coefficients(), vec![0]);

    let bound = bind_constants(a, &std::collections::BTreeMap::from([("k".to_string(), 2.25)]));
    assert!(bound.used_coefficients().is_empty());
    let mut found = None;
    bound.integrals[0].integrand.visit(&mut |e| {
        if let Expr::Constant(v) = e {
            found = Some(*v);
        }
    });
    assert_eq!(found, Some(2.25));

    // Without an override the declared default applies.
    let defaulted = bind_constants(a, &Default::default());
    let mut found = None;
    defaulted.integrals[0].integrand.visit(&mut |e| {
        if let Expr::Constant(v) = e {
            found = Some(*v);
        }
    });
    assert_eq!(found, Some(0.5));
}

#[test]
fn override_degrees_rewrites_everything_but_mixed() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
w = VectorElement("CG", "triangle", 2)
m = MixedElement(w, e)
v = TestFunction(e)
u = TrialFunction(e)
f = Coefficient(e)
g = Coefficient(m)
a = inner(grad(v), grad(u))*dx
L = v*f*dx
"#;
    let mut f = parsed(file);
    override_degrees(&mut f, 3);
    assert_eq!(f.elements["e"].degree(), 3);
    assert_eq!(f.elements["w"].degree(), 3);
    // The mixed pair keeps its unbalanced degrees.
    assert_eq!(f.elements["m"].degree(), 2);

    match &f.coefficients[0].kind {
        CoefficientKind::Element(d) => assert_eq!(d.degree(), 3),
        other => panic!("unexpected kind {other:?}"),
    }
    let meta = check_form(&f.forms["a"]).unwrap();
    assert_eq!(meta.test.unwrap().degree(), 3);
    assert_eq!(meta.trial.unwrap().degree(), 3);
    let meta_l = check_form(&f.forms["L"]).unwrap();
    assert_eq!(meta_l.test.unwrap().degree(), 3);
}

#[test]
fn substitute_argument_lowers_rank() {
    let (a, _) = form_and_meta(REACTION_DIFFUSION, "a");
    assert_eq!(a.rank(), 2);
    let action = substitute_argument(&a, TRIAL_SLOT, &Expr::Coefficient { id: 0 });
    assert_eq!(action.rank(), 1);
    assert_eq!(action.used_coefficients(), vec![0]);
}

#[test]
fn mixed_test_elements_are_rejected() {
    let file = r#"
e1 = FiniteElement("CG", "triangle", 1)
e2 = FiniteElement("CG", "triangle", 2)
v1 = TestFunction(e1)
v2 = TestFunction(e2)
a = v1*v2*dx
"#;
    let f = parsed(file);
    let err = check_form(&f.forms["a"]).unwrap_err();
    assert!(matches!(err, FormError::MixedRanks(_)), "{err}");
}

#[test]
fn trial_without_test_is_rejected() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
u = TrialFunction(e)
a = u*dx
"#;
    let f = parsed(file);
    let err = check_form(&f.forms["a"]).unwrap_err();
    assert!(matches!(err, FormError::MixedRanks(_)), "{err}");
}

#[test]
fn elements_on_different_cells_are_rejected() {
    let file = r#"
e1 = FiniteElement("CG", "triangle", 1)
e2 = FiniteElement("CG", "interval", 1)
v = TestFunction(e1)
f = Coefficient(e2)
a = v*f*dx
"#;
    let f = parsed(file);
    let err = check_form(&f.forms["a"]).unwrap_err();
    assert!(matches!(err, FormError::ShapeMismatch(_)), "{err}");
}

#[test]
fn shape_errors_are_caught() {
    let scalar = ElementDescriptor::scalar(Family::CG, CellType::Triangle, 1);
    let vector = ElementDescriptor::vector(scalar.clone(), 2);
    let decls = vec![CoefficientDecl {
        name: "b".into(),
        kind: CoefficientKind::Element(vector.clone()),
    }];
    let v = Expr::Argument { slot: TEST_SLOT, element: scalar.clone() };
    let b = Expr::Coefficient { id: 0 };

    // inner of mismatched shapes
    assert!(shape_of(
        &Expr::Inner(v.clone().boxed(), b.clone().boxed()),
        &decls,
        2
    )
    .is_err());
    // div of a scalar
    assert!(shape_of(&Expr::Div(v.clone().boxed()), &decls, 2).is_err());
    // index out of bounds
    assert!(shape_of(&Expr::Indexed(b.clone().boxed(), 2), &decls, 2).is_err());
    assert_eq!(
        shape_of(&Expr::Indexed(b.clone().boxed(), 1), &decls, 2).unwrap(),
        Shape::Scalar
    );
    // product of two vectors
    assert!(shape_of(
        &Expr::Product(b.clone().boxed(), b.clone().boxed()),
        &decls,
        2
    )
    .is_err());
    // gradient of a gradient of a vector would be third order
    let gg = Expr::Grad(Expr::Grad(b.clone().boxed()).boxed());
    assert!(shape_of(&gg, &decls, 2).is_err());
    // power of a vector
    assert!(shape_of(&Expr::Power(b.boxed(), 2), &decls, 2).is_err());
}

#[test]
fn random_trees_never_panic_and_bad_shapes_surface() {
    let scalar = ElementDescriptor::scalar(Family::CG, CellType::Triangle, 1);
    let vector = ElementDescriptor::vector(scalar.clone(), 2);
    let decls = vec![CoefficientDecl {
        name: "b".into(),
        kind: CoefficientKind::Element(vector),
    }];

    fn gen(rng: &mut ChaCha8Rng, depth: usize, scalar: &ElementDescriptor) -> Expr {
        if depth == 0 {
            return match rng.random_range(0..5) {
                0 => Expr::Constant(rng.random::<f64>()),
                1 => Expr::Argument { slot: TEST_SLOT, element: scalar.clone() },
                2 => Expr::Coefficient { id: 0 },
                3 => Expr::SpatialCoordinate,
                _ => Expr::CellSize,
            };
        }
        let a = gen(rng, depth - 1, scalar).boxed();
        match rng.random_range(0..9) {
            0 => Expr::Grad(a),
            1 => Expr::Div(a),
            2 => Expr::Negation(a),
            3 => Expr::Power(a, rng.random_range(-2..4)),
            4 => Expr::Indexed(a, rng.random_range(0..3)),
            5 => Expr::Sum(a, gen(rng, depth - 1, scalar).boxed()),
            6 => Expr::Product(a, gen(rng, depth - 1, scalar).boxed()),
            7 => Expr::Inner(a, gen(rng, depth - 1, scalar).boxed()),
            _ => Expr::Dot(a, gen(rng, depth - 1, scalar).boxed()),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut ok, mut bad) = (0usize, 0usize);
    for _ in 0..400 {
        let depth = rng.random_range(1..5);
        let e = gen(&mut rng, depth, &scalar);
        match shape_of(&e, &decls, 2) {
            Ok(_) => ok += 1,
            Err(FormError::ShapeMismatch(_)) => bad += 1,
            Err(other) => panic!("unexpected error kind: {other}"),
        }
    }
    assert!(ok > 10, "generator too hostile: {ok} well-shaped");
    assert!(bad > 50, "generator too tame: {bad} ill-shaped");
}

#[test]
fn point_expression_matches_closed_form() {
    let def = parse_expression(&["sin(x[0])*cos(x[1])"], None).unwrap();
    assert_eq!(def.value_size(), 1);
    assert_eq!(def.degree, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        assert_relative_eq!(def.eval(0, &x), x[0].sin() * x[1].cos(), epsilon = 1e-15);
    }
}

#[test]
fn point_expression_vector_and_operators() {
    let def = parse_expression(&["-x[1]^2", "x[0]/2 + pi"], Some(3)).unwrap();
    assert_eq!(def.value_size(), 2);
    assert_eq!(def.degree, 3);
    let x = [0.3, 0.8];
    assert_relative_eq!(def.eval(0, &x), -0.64, epsilon = 1e-15);
    assert_relative_eq!(def.eval(1, &x), 0.15 + std::f64::consts::PI, epsilon = 1e-15);
}

#[test]
fn point_expression_rejects_unknowns_and_form_syntax() {
    assert!(matches!(
        parse_expression(&["y + 1"], None),
        Err(FormError::UnknownIdentifier { name, .. }) if name == "y"
    ));
    // Form-level callables are not available in point expressions.
    assert!(matches!(
        parse_expression(&["grad(x[0])"], None),
        Err(FormError::UnknownIdentifier { name, .. }) if name == "grad"
    ));
    assert!(parse_expression(&["x[3]"], None).is_err());
    assert!(parse_expression(&["x[0] +"], None).is_err());
    assert!(parse_expression(&["x"], None).is_err());
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_form_file("a = 1 * * 2\n").unwrap_err();
    match err {
        FormError::SyntaxError { line, col, .. } => {
            assert_eq!((line, col), (1, 9));
        }
        other => panic!("wrong error: {other}"),
    }

    let err = parse_form_file("e = FiniteElement(\"CG\", \"triangle\", 1)\na = v*dx\n")
        .unwrap_err();
    match err {
        FormError::UnknownIdentifier { line, col, name } => {
            assert_eq!((line, col, name.as_str()), (2, 5, "v"));
        }
        other => panic!("wrong error: {other}"),
    }
}

#[test]
fn family_aliases_and_vector_counts() {
    let file = r#"
a1 = FiniteElement("Lagrange", "interval", 2)
a2 = FiniteElement("Discontinuous Lagrange", "tetrahedron", 0)
a3 = FiniteElement("Crouzeix-Raviart", "triangle", 1)
w = VectorElement("CG", "tetrahedron", 1, 2)
"#;
    let f = parsed(file);
    assert_eq!(f.elements["a1"], ElementDescriptor::scalar(Family::CG, CellType::Interval, 2));
    assert_eq!(
        f.elements["a2"],
        ElementDescriptor::scalar(Family::DG, CellType::Tetrahedron, 0)
    );
    assert_eq!(
        f.elements["a3"],
        ElementDescriptor::scalar(Family::CR, CellType::Triangle, 1)
    );
    assert_eq!(f.elements["w"].value_size(), 2);

    let default_count = parsed("w = VectorElement(\"CG\", \"tetrahedron\", 1)\n");
    assert_eq!(default_count.elements["w"].value_size(), 3);
}

#[test]
fn subdomain_measures_parse() {
    let file = r#"
e = FiniteElement("CG", "triangle", 1)
v = TestFunction(e)
g = Coefficient(e)
L = v*g*ds(3) + v*ds
"#;
    let f = parsed(file);
    let l = &f.forms["L"];
    assert_eq!(l.integrals.len(), 2);
    assert_eq!(l.integrals[0].subdomain, Some(3));
    assert_eq!(l.integrals[1].subdomain, None);
    assert!(l.integrals.iter().all(|i| i.measure == Measure::ExteriorFacet));
}

#[test]
fn expansion_distributes_and_hoists() {
    let file = r#"
e = FiniteElement("CG", "interval", 1)
v = TestFunction(e)
u0 = Coefficient(e)
u1 = Coefficient(e)
M = dot(grad(v), grad(0.5*(u0 + u1)))*dx
"#;
    let f = parsed(file);
    let integrand = &f.forms["M"].integrals[0].integrand;
    let terms = super::manipulate::expand_with(integrand, &f.coefficients);
    assert_eq!(terms.len(), 2);
    // Each term must keep the constant outside the gradient so the
    // gradient applies to a single coefficient.
    for t in &terms {
        let mut grads_of_sums = 0;
        t.visit(&mut |e| {
            if let Expr::Grad(a) = e {
                if matches!(**a, Expr::Sum(..) | Expr::Product(..)) {
                    grads_of_sums += 1;
                }
            }
        });
        assert_eq!(grads_of_sums, 0, "gradient not fully distributed in {t:?}");
    }
}
