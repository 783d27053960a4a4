use super::*;
use crate::element::{ElementDescriptor, Family};
use crate::form::{parse_expression, parse_form_file, FormFile};
use crate::function::{interpolate, FieldSource};
use crate::mesh::{generate_unit_mesh, UnitShape};
use crate::reference::CellType;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_square(n: usize) -> Arc<Mesh> {
    Arc::new(generate_unit_mesh(UnitShape::Square, &[n, n]).unwrap())
}

fn scalar_desc(family: Family, cell: CellType, degree: usize) -> ElementDescriptor {
    ElementDescriptor::Scalar { family, cell, degree }
}

fn parsed(src: &str) -> FormFile {
    parse_form_file(src).unwrap()
}

fn coef_id(file: &FormFile, name: &str) -> usize {
    file.coefficients.iter().position(|d| d.name == name).unwrap()
}

fn interp(space: &Arc<FunctionSpace>, comps: &[&str]) -> Function {
    let def = parse_expression(comps, None).unwrap();
    interpolate(FieldSource::Expression(&def), space).unwrap()
}

/// Independent accumulation path: enumerate integration entities straight
/// from the connectivity tables and scatter element tensors into a dense
/// array with explicit index arithmetic. The production assembler must
/// agree entry for entry, whatever the kernel mix.
fn dense_oracle(
    form: &Form,
    mesh: &Arc<Mesh>,
    coefs: &[(usize, &Function)],
) -> (Vec<f64>, usize, usize) {
    let meta = check_form(form).unwrap();
    let compiled = compile_form(form, mesh.cell_type()).unwrap();
    let test = meta.test.as_ref().map(|d| FunctionSpace::new(mesh, d).unwrap());
    let trial = meta.trial.as_ref().map(|d| FunctionSpace::new(mesh, d).unwrap());
    let nrows = test.as_ref().map_or(1, |s| s.dim());
    let ncols = trial.as_ref().map_or(1, |s| s.dim());
    let mut dense = vec![0.0; nrows * ncols];
    let tdim = mesh.tdim();

    for kernel in &compiled.kernels {
        let mut jobs: Vec<(Vec<usize>, Option<usize>, Option<usize>)> = Vec::new();
        match kernel.kind() {
            KernelKind::Cell => {
                for c in 0..mesh.num_cells() {
                    jobs.push((vec![c], None, None));
                }
            }
            _ => {
                let f2c = mesh.connectivity(tdim - 1, tdim).unwrap();
                let c2f = mesh.connectivity(tdim, tdim - 1).unwrap();
                for f in 0..f2c.len() {
                    let cells = f2c.get(f);
                    let local = |c: usize| c2f.get(c).iter().position(|&g| g == f).unwrap();
                    match (kernel.kind(), cells.len()) {
                        (KernelKind::ExteriorFacet, 1) => {
                            jobs.push((vec![cells[0]], Some(local(cells[0])), None));
                        }
                        (KernelKind::InteriorFacet, 2) => {
                            let p = cells[0].min(cells[1]);
                            let m = cells[0].max(cells[1]);
                            jobs.push((vec![p, m], Some(local(p)), Some(local(m))));
                        }
                        _ => {}
                    }
                }
            }
        }
        let slots = kernel.coefficients();
        for (cells, facet, nfacet) in jobs {
            let mut gathered: Vec<Vec<f64>> = Vec::new();
            for (id, _, _) in &slots {
                let f = coefs.iter().find(|(i, _)| i == id).map(|(_, f)| *f).unwrap();
                let mut v = Vec::new();
                for &c in &cells {
                    for &g in f.space().dofmap().cell_dofs(c).unwrap() {
                        v.push(f.vector()[g]);
                    }
                }
                gathered.push(v);
            }
            let refs: Vec<&[f64]> = gathered.iter().map(|v| v.as_slice()).collect();
            let (r, c) = kernel.shape();
            let mut t = vec![0.0; r * c];
            let coords: Vec<Vec<f64>> =
                cells.iter().map(|&c| mesh.cell_coordinates(c)).collect();
            let neighbor = nfacet.map(|nf| (coords[1].as_slice(), nf));
            kernel.tabulate_tensor(&coords[0], facet, neighbor, &refs, &mut t).unwrap();

            let rows: Vec<usize> = match &test {
                Some(s) => cells
                    .iter()
                    .flat_map(|&c| s.dofmap().cell_dofs(c).unwrap().to_vec())
                    .collect(),
                None => vec![0],
            };
            let cols: Vec<usize> = match &trial {
                Some(s) => cells
                    .iter()
                    .flat_map(|&c| s.dofmap().cell_dofs(c).unwrap().to_vec())
                    .collect(),
                None => vec![0],
            };
            for (i, &gi) in rows.iter().enumerate() {
                for (j, &gj) in cols.iter().enumerate() {
                    dense[gi * ncols + gj] += t[i * cols.len() + j];
                }
            }
        }
    }
    (dense, nrows, ncols)
}

fn tensor_entries(t: &GenericTensor) -> Vec<f64> {
    match t {
        GenericTensor::Scalar(s) => vec![*s],
        GenericTensor::Vector(v) => v.clone(),
        GenericTensor::Matrix(m) => m.to_dense().data().to_vec(),
    }
}

fn check_matches_oracle(src: &str, name: &str, mesh: &Arc<Mesh>, coefs: &[(usize, &Function)]) {
    let file = parsed(src);
    let form = &file.forms[name];
    let (want, nrows, ncols) = dense_oracle(form, mesh, coefs);
    let mut input = AssemblyInput::new(mesh);
    input.coefficients = coefs;
    let got = tensor_entries(&assemble(form, &input).unwrap());
    assert_eq!(got.len(), nrows * ncols);
    let scale = want.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    for (g, w) in got.iter().zip(&want) {
        assert!(
            (g - w).abs() <= 1e-12 * scale,
            "entry mismatch: {g} vs {w} (scale {scale})"
        );
    }
}

const ALL_MEASURES_DG: &str = r#"
element = FiniteElement("DG", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
n = FacetNormal
h = CellSize
a = inner(grad(v), grad(u))*dx - inner(avg(grad(u)), jump(v, n))*dS - inner(avg(grad(v)), jump(u, n))*dS + 4.0/avg(h)*inner(jump(v, n), jump(u, n))*dS + v*u*ds
"#;

#[test]
fn matrix_assembly_matches_dense_gather_on_triangles() {
    let mesh = unit_square(2);
    check_matches_oracle(ALL_MEASURES_DG, "a", &mesh, &[]);
}

#[test]
fn matrix_assembly_matches_dense_gather_on_intervals() {
    let src = r#"
element = FiniteElement("CG", "interval", 2)
v = TestFunction(element)
u = TrialFunction(element)
a = inner(grad(v), grad(u))*dx + v*u*ds
"#;
    let mesh = Arc::new(generate_unit_mesh(UnitShape::Interval, &[4]).unwrap());
    check_matches_oracle(src, "a", &mesh, &[]);
}

#[test]
fn matrix_assembly_matches_dense_gather_on_tets() {
    let src = r#"
element = FiniteElement("DG", "tetrahedron", 1)
v = TestFunction(element)
u = TrialFunction(element)
n = FacetNormal
a = inner(grad(v), grad(u))*dx + inner(jump(v, n), jump(u, n))*dS + v*u*ds
"#;
    let mesh = Arc::new(generate_unit_mesh(UnitShape::Cube, &[1, 1, 1]).unwrap());
    check_matches_oracle(src, "a", &mesh, &[]);
}

#[test]
fn vector_and_scalar_assembly_match_dense_gather() {
    let src = r#"
element = FiniteElement("CG", "triangle", 1)
source = FiniteElement("CG", "triangle", 2)
v = TestFunction(element)
f = Coefficient(source)
L = v*f*dx + v*f*ds
M = f*f*dx
"#;
    let mesh = unit_square(2);
    let file = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 2)).unwrap();
    let f = interp(&space, &["x[0]*x[0] + 0.5*x[1]"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    check_matches_oracle(src, "L", &mesh, &coefs);
    check_matches_oracle(src, "M", &mesh, &coefs);
}

#[test]
fn interior_facet_coefficient_gather_matches_dense_oracle() {
    // The two-cell load vector exercises the plus-then-minus coefficient
    // concatenation.
    let src = r#"
element = FiniteElement("DG", "triangle", 1)
v = TestFunction(element)
f = Coefficient(element)
n = FacetNormal
L = inner(jump(v, n), jump(f, n))*dS
"#;
    let mesh = unit_square(2);
    let file = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::DG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["x[0] - 2.0*x[1]"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    check_matches_oracle(src, "L", &mesh, &coefs);
}

#[test]
fn assembled_matrices_are_numerically_symmetric() {
    let mesh = unit_square(4);
    let poisson = r#"
element = FiniteElement("CG", "triangle", 2)
v = TestFunction(element)
u = TrialFunction(element)
a = inner(grad(v), grad(u))*dx + v*u*dx
"#;
    let file = parsed(poisson);
    let input = AssemblyInput::new(&mesh);
    let mat = assemble_matrix(&file.forms["a"], &input).unwrap();
    assert!(mat.asymmetry() <= 1e-14);

    let file = parsed(ALL_MEASURES_DG);
    let mat = assemble_matrix(&file.forms["a"], &input).unwrap();
    assert!(mat.asymmetry() <= 1e-14);
}

#[test]
fn parallel_assembly_is_bitwise_deterministic() {
    let mesh = unit_square(4);
    let file = parsed(ALL_MEASURES_DG);

    let serial = AssemblyInput::new(&mesh);
    let mut parallel = AssemblyInput::new(&mesh);
    parallel.threads = 4;

    let a1 = assemble_matrix(&file.forms["a"], &serial).unwrap();
    let a2 = assemble_matrix(&file.forms["a"], &parallel).unwrap();
    let (d1, d2) = (a1.to_dense(), a2.to_dense());
    assert_eq!(d1.data().len(), d2.data().len());
    for (x, y) in d1.data().iter().zip(d2.data()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    let src = r#"
element = FiniteElement("DG", "triangle", 1)
v = TestFunction(element)
f = Coefficient(element)
n = FacetNormal
L = v*f*dx + inner(jump(v, n), jump(f, n))*dS
"#;
    let lfile = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::DG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["x[0]*x[1]"]);
    let coefs = [(coef_id(&lfile, "f"), &f)];
    let mut serial = AssemblyInput::new(&mesh);
    serial.coefficients = &coefs;
    let mut parallel = AssemblyInput::new(&mesh);
    parallel.coefficients = &coefs;
    parallel.threads = 4;
    let b1 = assemble_vector(&lfile.forms["L"], &serial).unwrap();
    let b2 = assemble_vector(&lfile.forms["L"], &parallel).unwrap();
    for (x, y) in b1.iter().zip(&b2) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn boundary_dofs_of_cg1_square() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let bc = DirichletBC::new(&space, BcValue::Constant(vec![0.0]), BcRegion::Boundary);
    let pairs = bc.dofs(None).unwrap();
    // 3x3 vertex grid, everything but the center vertex.
    assert_eq!(pairs.len(), 8);
    assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(pairs.iter().all(|&(_, v)| v == 0.0));
}

#[test]
fn predicate_region_resolves_one_edge_with_expression_values() {
    let mesh = unit_square(1);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 2)).unwrap();
    let def = parse_expression(&["x[1]"], None).unwrap();
    let bc = DirichletBC::new(
        &space,
        BcValue::Expression(def),
        BcRegion::Predicate(Box::new(|x| x[0].abs() < 1e-8)),
    );
    let pairs = bc.dofs(None).unwrap();
    // Two corner vertices plus the edge midpoint.
    assert_eq!(pairs.len(), 3);
    let mut values: Vec<f64> = pairs.iter().map(|&(_, v)| v).collect();
    values.sort_by(f64::total_cmp);
    assert_abs_diff_eq!(values[0], 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(values[1], 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(values[2], 1.0, epsilon = 1e-14);
}

#[test]
fn component_bc_on_mixed_space_stays_in_the_velocity_block() {
    let mesh = unit_square(2);
    let th = ElementDescriptor::Mixed {
        subs: vec![
            ElementDescriptor::Vector {
                sub: Box::new(scalar_desc(Family::CG, CellType::Triangle, 2)),
                count: 2,
            },
            scalar_desc(Family::CG, CellType::Triangle, 1),
        ],
    };
    let space = FunctionSpace::new(&mesh, &th).unwrap();
    let bc = DirichletBC::on_component(
        &space,
        vec![0],
        BcValue::Constant(vec![1.0, 2.0]),
        BcRegion::Boundary,
    );
    let pairs = bc.dofs(None).unwrap();
    // Per scalar CG2 copy: 9 vertices + 16 edges = 25 dofs, 16 of them on
    // the boundary. The first copy owns [0, 25), the second [25, 50),
    // pressure [50, 59).
    assert_eq!(pairs.len(), 32);
    for &(dof, value) in &pairs {
        assert!(dof < 50, "pressure dof {dof} constrained");
        if dof < 25 {
            assert_eq!(value, 1.0);
        } else {
            assert_eq!(value, 2.0);
        }
    }
    assert_eq!(pairs.iter().filter(|&&(d, _)| d < 25).count(), 16);
}

#[test]
fn point_region_pins_a_single_pressure_dof() {
    let mesh = unit_square(2);
    let th = ElementDescriptor::Mixed {
        subs: vec![
            ElementDescriptor::Vector {
                sub: Box::new(scalar_desc(Family::CG, CellType::Triangle, 2)),
                count: 2,
            },
            scalar_desc(Family::CG, CellType::Triangle, 1),
        ],
    };
    let space = FunctionSpace::new(&mesh, &th).unwrap();
    let pin = DirichletBC::on_component(
        &space,
        vec![1],
        BcValue::Constant(vec![0.0]),
        BcRegion::Point(vec![0.0, 0.0]),
    );
    let pairs = pin.dofs(None).unwrap();
    // One pressure vertex sits at the origin; velocity owns [0, 50).
    assert_eq!(pairs.len(), 1);
    assert!(pairs[0].0 >= 50);
    assert_eq!(pairs[0].1, 0.0);

    let off = DirichletBC::new(
        &space,
        BcValue::Constant(vec![0.0; 3]),
        BcRegion::Point(vec![10.0, 10.0]),
    );
    assert!(off.dofs(None).unwrap().is_empty());
}

#[test]
fn marker_region_resolves_marked_facets_only() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let mut markers = MeshFunction::new(&mesh, 1, 0usize).unwrap();
    for f in 0..markers.len() {
        let verts = mesh.entity_vertices(1, f).unwrap();
        if verts.iter().all(|&v| mesh.vertex(v)[0].abs() < 1e-12) {
            markers.set(f, 7);
        }
    }
    let bc = DirichletBC::new(&space, BcValue::Constant(vec![5.0]), BcRegion::Marker(7));
    let pairs = bc.dofs(Some(&markers)).unwrap();
    assert_eq!(pairs.len(), 3);
    assert!(pairs.iter().all(|&(_, v)| v == 5.0));
    // Without the marker table the region cannot resolve.
    assert!(matches!(bc.dofs(None), Err(AssemblyError::MissingMarkers { .. })));
}

#[test]
fn later_conditions_override_earlier_ones() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let everywhere = DirichletBC::new(&space, BcValue::Constant(vec![1.0]), BcRegion::Boundary);
    let left = DirichletBC::new(
        &space,
        BcValue::Constant(vec![2.0]),
        BcRegion::Predicate(Box::new(|x| x[0].abs() < 1e-8)),
    );
    let merged = resolve_bcs(&[everywhere, left], None).unwrap();
    assert_eq!(merged.len(), 8);
    let twos = merged.values().filter(|&&v| v == 2.0).count();
    assert_eq!(twos, 3);
}

const POISSON_SYSTEM: &str = r#"
element = FiniteElement("CG", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
f = Coefficient(element)
a = inner(grad(v), grad(u))*dx
L = v*f*dx
"#;

#[test]
fn row_elimination_and_system_assembly_give_the_same_solution() {
    let mesh = unit_square(4);
    let file = parsed(POISSON_SYSTEM);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["1.0"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.test = Some(&space);
    input.trial = Some(&space);
    input.coefficients = &coefs;
    let bcs = vec![DirichletBC::new(
        &space,
        BcValue::Expression(parse_expression(&["x[0]*x[1]"], None).unwrap()),
        BcRegion::Boundary,
    )];

    let mut mat = assemble_matrix(&file.forms["a"], &input).unwrap();
    let mut rhs = assemble_vector(&file.forms["L"], &input).unwrap();
    let pairs = resolve_bcs(&bcs, None).unwrap();
    apply_bc(&pairs, Some(&mut mat), Some(&mut rhs)).unwrap();
    let lu = SolverOptions::with_method(Method::Lu);
    let (x1, _) = solve_linear(&mat, &rhs, &lu).unwrap();

    let (sys_mat, sys_rhs) = assemble_system(&file.forms["a"], &file.forms["L"], &bcs, &input).unwrap();
    assert!(sys_mat.asymmetry() <= 1e-14, "element-level elimination must keep symmetry");
    let (x2, _) = solve_linear(&sys_mat, &sys_rhs, &lu).unwrap();

    for (a, b) in x1.iter().zip(&x2) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-10);
    }
    for (&dof, &g) in &pairs {
        assert_abs_diff_eq!(x2[dof], g, epsilon = 1e-12);
    }

    // The driver wraps the same system path.
    let (sol, _) = solve_linear_vp(
        &file.forms["a"],
        &file.forms["L"],
        &bcs,
        &input,
        &VpOptions { method: Some(Method::Lu), ..Default::default() },
    )
    .unwrap();
    for (a, b) in sol.vector().iter().zip(&x2) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }
}

#[test]
fn bc_application_is_idempotent() {
    let mesh = unit_square(3);
    let file = parsed(POISSON_SYSTEM);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["x[0]"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.test = Some(&space);
    input.trial = Some(&space);
    input.coefficients = &coefs;
    let bcs = [DirichletBC::new(&space, BcValue::Constant(vec![3.0]), BcRegion::Boundary)];
    let pairs = resolve_bcs(&bcs, None).unwrap();

    let mut mat = assemble_matrix(&file.forms["a"], &input).unwrap();
    let mut rhs = assemble_vector(&file.forms["L"], &input).unwrap();
    apply_bc(&pairs, Some(&mut mat), Some(&mut rhs)).unwrap();
    let once_mat = mat.to_dense().data().to_vec();
    let once_rhs = rhs.clone();
    apply_bc(&pairs, Some(&mut mat), Some(&mut rhs)).unwrap();
    assert_eq!(mat.to_dense().data(), &once_mat[..]);
    assert_eq!(rhs, once_rhs);

    let mut zeroed = rhs.clone();
    zero_bc_rows(&pairs, &mut zeroed);
    for &dof in pairs.keys() {
        assert_eq!(zeroed[dof], 0.0);
    }
}

#[test]
fn residual_form_matches_matrix_action() {
    // A rank-1 form linear in a bound coefficient must reproduce A u - b.
    let src = r#"
element = FiniteElement("CG", "triangle", 2)
v = TestFunction(element)
u = TrialFunction(element)
u0 = Coefficient(element)
f = Coefficient(element)
a = inner(grad(v), grad(u))*dx + v*u*dx
L = v*f*dx
r = inner(grad(v), grad(u0))*dx + v*u0*dx - v*f*dx
"#;
    let mesh = unit_square(3);
    let file = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 2)).unwrap();
    let f = interp(&space, &["x[0] + x[1]"]);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let state: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u0 = Function::from_vector(Arc::clone(&space), state.clone()).unwrap();
    let coefs = [(coef_id(&file, "u0"), &u0), (coef_id(&file, "f"), &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.test = Some(&space);
    input.trial = Some(&space);
    input.coefficients = &coefs;

    let mat = assemble_matrix(&file.forms["a"], &input).unwrap();
    let rhs = assemble_vector(&file.forms["L"], &input).unwrap();
    let res = assemble_vector(&file.forms["r"], &input).unwrap();
    let action = mat.matvec(&state);
    for ((r, au), b) in res.iter().zip(&action).zip(&rhs) {
        assert_abs_diff_eq!(r, &(au - b), epsilon = 1e-12);
    }
}

const NONLINEAR_POISSON: &str = r#"
element = FiniteElement("CG", "triangle", 1)
v = TestFunction(element)
du = TrialFunction(element)
u = Coefficient(element)
f = Coefficient(element)
F = (1.0 + u^2)*inner(grad(u), grad(v))*dx - v*f*dx
J = derivative(F, u, du)
"#;

#[test]
fn newton_solves_a_linear_problem_in_one_step() {
    let src = r#"
element = FiniteElement("CG", "triangle", 1)
v = TestFunction(element)
du = TrialFunction(element)
u = Coefficient(element)
f = Coefficient(element)
F = inner(grad(u), grad(v))*dx + u*v*dx - v*f*dx
J = derivative(F, u, du)
a = inner(grad(du), grad(v))*dx + du*v*dx
L = v*f*dx
"#;
    let mesh = unit_square(3);
    let file = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["1.0 + x[0]"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    let vp = VpOptions { method: Some(Method::Lu), ..Default::default() };

    let mut u = Function::new(Arc::clone(&space));
    let report = solve_newton_vp(
        &file.forms["F"],
        &file.forms["J"],
        coef_id(&file, "u"),
        &mut u,
        &[],
        &input,
        &vp,
        &NewtonOptions::default(),
    )
    .unwrap();
    assert_eq!(report.iterations, 1);

    let mut linput = AssemblyInput::new(&mesh);
    linput.test = Some(&space);
    linput.trial = Some(&space);
    linput.coefficients = &coefs;
    let (direct, _) = solve_linear_vp(&file.forms["a"], &file.forms["L"], &[], &linput, &vp).unwrap();
    for (a, b) in u.vector().iter().zip(direct.vector()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }
}

#[test]
fn newton_converges_on_the_quasilinear_problem() {
    let mesh = unit_square(4);
    let file = parsed(NONLINEAR_POISSON);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["x[0]*sin(x[1])"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    let bcs = [DirichletBC::new(&space, BcValue::Constant(vec![0.0]), BcRegion::Boundary)];
    let vp = VpOptions { method: Some(Method::Lu), ..Default::default() };

    let mut u = Function::new(Arc::clone(&space));
    let report = solve_newton_vp(
        &file.forms["F"],
        &file.forms["J"],
        coef_id(&file, "u"),
        &mut u,
        &bcs,
        &input,
        &vp,
        &NewtonOptions::default(),
    )
    .unwrap();
    assert!(report.iterations <= 8, "took {} iterations", report.iterations);
    let last = *report.residuals.last().unwrap();
    assert!(last <= 1e-10, "final residual {last}");
    assert!(last < report.residuals[0]);

    // The solution satisfies the boundary condition exactly.
    let pairs = resolve_bcs(&bcs, None).unwrap();
    for (&dof, &g) in &pairs {
        assert_abs_diff_eq!(u.vector()[dof], g, epsilon = 1e-12);
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let mesh = unit_square(3);
    let file = parsed(NONLINEAR_POISSON);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["x[0]"]);
    let fid = coef_id(&file, "f");
    let uid = coef_id(&file, "u");
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let n = space.dim();
    let state: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

    let residual_at = |v: Vec<f64>| {
        let u = Function::from_vector(Arc::clone(&space), v).unwrap();
        let coefs = [(uid, &u), (fid, &f)];
        let mut input = AssemblyInput::new(&mesh);
        input.test = Some(&space);
        input.coefficients = &coefs;
        assemble_vector(&file.forms["F"], &input).unwrap()
    };

    let u0 = Function::from_vector(Arc::clone(&space), state.clone()).unwrap();
    let coefs = [(uid, &u0), (fid, &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.test = Some(&space);
    input.trial = Some(&space);
    input.coefficients = &coefs;
    let jac = assemble_matrix(&file.forms["J"], &input).unwrap();
    let jd = jac.matvec(&dir);

    let eps = 1e-5;
    let plus = residual_at(state.iter().zip(&dir).map(|(s, d)| s + eps * d).collect());
    let minus = residual_at(state.iter().zip(&dir).map(|(s, d)| s - eps * d).collect());
    let fd: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * eps)).collect();

    let diff: Vec<f64> = jd.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let rel = crate::la::norm2(&diff) / crate::la::norm2(&jd);
    assert!(rel <= 1e-6, "relative Gateaux mismatch {rel}");
}

#[test]
fn norms_of_simple_fields() {
    let mesh = unit_square(4);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 2)).unwrap();

    let one = interp(&space, &["1.0"]);
    assert_relative_eq!(function_norm(&one, NormKind::L2).unwrap(), 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(function_norm(&one, NormKind::H10).unwrap(), 0.0, epsilon = 1e-8);

    let x = interp(&space, &["x[0]"]);
    assert_relative_eq!(
        function_norm(&x, NormKind::L2).unwrap(),
        (1.0f64 / 3.0).sqrt(),
        epsilon = 1e-12
    );
    assert_relative_eq!(function_norm(&x, NormKind::H10).unwrap(), 1.0, epsilon = 1e-12);
    assert_relative_eq!(
        function_norm(&x, NormKind::H1).unwrap(),
        (4.0f64 / 3.0).sqrt(),
        epsilon = 1e-12
    );
}

#[test]
fn errornorm_vanishes_for_reproducible_fields() {
    let mesh = unit_square(3);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 2)).unwrap();
    let def = parse_expression(&["x[0]*x[0] - x[1]"], None).unwrap();
    let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
    assert!(errornorm(&f, &def, NormKind::L2).unwrap() <= 1e-12);
    assert!(errornorm(&f, &def, NormKind::H1).unwrap() <= 1e-11);
}

#[test]
fn errornorm_halves_quadratically_under_refinement() {
    let def = parse_expression(&["sin(pi*x[0])*sin(pi*x[1])"], None).unwrap();
    let mut errs = Vec::new();
    for n in [4usize, 8] {
        let mesh = unit_square(n);
        let space =
            FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
        let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
        errs.push(errornorm(&f, &def, NormKind::L2).unwrap());
    }
    let ratio = errs[0] / errs[1];
    assert!((3.3..=4.7).contains(&ratio), "observed ratio {ratio}");
}

#[test]
fn projection_is_idempotent_and_reproduces_space_members() {
    let mesh = unit_square(3);
    let cg1 = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&cg1, &["0.25 + x[0] - 2.0*x[1]"]);
    let p = project(FieldSource::Function(&f), &cg1).unwrap();
    for (a, b) in p.vector().iter().zip(f.vector()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }

    let cg2 = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 2)).unwrap();
    let def = parse_expression(&["x[0]*x[1]"], None).unwrap();
    let nodal = interpolate(FieldSource::Expression(&def), &cg2).unwrap();
    let projected = project(FieldSource::Expression(&def), &cg2).unwrap();
    for (a, b) in projected.vector().iter().zip(nodal.vector()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
}

#[test]
fn vector_projection_reproduces_linear_fields() {
    let mesh = unit_square(3);
    let space = FunctionSpace::new(
        &mesh,
        &ElementDescriptor::Vector {
            sub: Box::new(scalar_desc(Family::CG, CellType::Triangle, 1)),
            count: 2,
        },
    )
    .unwrap();
    let def = parse_expression(&["x[1]", "0.0 - x[0]"], None).unwrap();
    let nodal = interpolate(FieldSource::Expression(&def), &space).unwrap();
    let projected = project(FieldSource::Expression(&def), &space).unwrap();
    for (a, b) in projected.vector().iter().zip(nodal.vector()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }
}

#[test]
fn boundary_flux_functional_integrates_exactly() {
    let src = r#"
element = FiniteElement("CG", "triangle", 1)
p = Coefficient(element)
n = FacetNormal
M = p*n[1]*ds
"#;
    let mesh = unit_square(4);
    let file = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let pid = coef_id(&file, "p");

    // Constant pressure: the normals integrate to zero around any closed
    // boundary.
    let one = interp(&space, &["1.0"]);
    let coefs = [(pid, &one)];
    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    let m = assemble_scalar(&file.forms["M"], &input).unwrap();
    assert_abs_diff_eq!(m, 0.0, epsilon = 1e-13);

    // p = y: the flux equals the enclosed area by the divergence theorem.
    let y = interp(&space, &["x[1]"]);
    let coefs = [(pid, &y)];
    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    let m = assemble_scalar(&file.forms["M"], &input).unwrap();
    assert_relative_eq!(m, 1.0, epsilon = 1e-12);
}

#[test]
fn subdomain_markers_restrict_the_measures() {
    let src = r#"
element = FiniteElement("CG", "triangle", 1)
f = Coefficient(element)
A1 = f*dx(1)
A2 = f*dx(2)
B = f*ds(7)
"#;
    let mesh = unit_square(2);
    let file = parsed(src);
    let space = FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let one = interp(&space, &["1.0"]);
    let coefs = [(coef_id(&file, "f"), &one)];

    let mut cells = MeshFunction::new(&mesh, 2, 0usize).unwrap();
    for c in 0..mesh.num_cells() {
        let coords = mesh.cell_coordinates(c);
        let cx = (coords[0] + coords[2] + coords[4]) / 3.0;
        cells.set(c, if cx < 0.5 { 1 } else { 2 });
    }
    let mut facets = MeshFunction::new(&mesh, 1, 0usize).unwrap();
    for f in 0..facets.len() {
        let verts = mesh.entity_vertices(1, f).unwrap();
        if verts.iter().all(|&v| mesh.vertex(v)[0].abs() < 1e-12) {
            facets.set(f, 7);
        }
    }

    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    input.cell_markers = Some(&cells);
    input.facet_markers = Some(&facets);
    assert_relative_eq!(assemble_scalar(&file.forms["A1"], &input).unwrap(), 0.5, epsilon = 1e-13);
    assert_relative_eq!(assemble_scalar(&file.forms["A2"], &input).unwrap(), 0.5, epsilon = 1e-13);
    assert_relative_eq!(assemble_scalar(&file.forms["B"], &input).unwrap(), 1.0, epsilon = 1e-13);

    let mut bare = AssemblyInput::new(&mesh);
    bare.coefficients = &coefs;
    assert!(matches!(
        assemble_scalar(&file.forms["A1"], &bare),
        Err(AssemblyError::MissingMarkers { id: 1, what: "cell" })
    ));
}

#[test]
fn binding_errors_are_reported_by_name() {
    let mesh = unit_square(2);
    let file = parsed(POISSON_SYSTEM);
    let input = AssemblyInput::new(&mesh);
    match assemble(&file.forms["L"], &input) {
        Err(AssemblyError::UnboundCoefficient { name, .. }) => assert_eq!(name, "f"),
        other => panic!("unexpected {other:?}"),
    }

    let other_mesh = unit_square(3);
    let space =
        FunctionSpace::new(&other_mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = interp(&space, &["1.0"]);
    let coefs = [(coef_id(&file, "f"), &f)];
    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    assert!(matches!(
        assemble(&file.forms["L"], &input),
        Err(AssemblyError::MeshMismatch(_))
    ));

    // A rank mismatch in the convenience wrappers is caught as well.
    let f_here = {
        let space =
            FunctionSpace::new(&mesh, &scalar_desc(Family::CG, CellType::Triangle, 1)).unwrap();
        interp(&space, &["1.0"])
    };
    let coefs = [(coef_id(&file, "f"), &f_here)];
    let mut input = AssemblyInput::new(&mesh);
    input.coefficients = &coefs;
    assert!(matches!(
        assemble_scalar(&file.forms["a"], &input),
        Err(AssemblyError::BadProblem(_))
    ));
}
