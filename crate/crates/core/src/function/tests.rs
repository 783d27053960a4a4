use super::*;
use crate::element::{ElementDescriptor, Family};
use crate::form::parse_expression;
use crate::mesh::{generate_unit_mesh, UnitShape};
use crate::reference::CellType;

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar(family: Family, cell: CellType, degree: usize) -> ElementDescriptor {
    ElementDescriptor::Scalar { family, cell, degree }
}

fn vector(sub: ElementDescriptor, count: usize) -> ElementDescriptor {
    ElementDescriptor::Vector { sub: Box::new(sub), count }
}

fn unit_square(n: usize) -> Arc<Mesh> {
    Arc::new(generate_unit_mesh(UnitShape::Square, &[n, n]).unwrap())
}

fn taylor_hood(cell: CellType) -> ElementDescriptor {
    ElementDescriptor::Mixed {
        subs: vec![vector(scalar(Family::CG, cell, 2), 2), scalar(Family::CG, cell, 1)],
    }
}

#[test]
fn space_dimensions() {
    let mesh = unit_square(32);
    let cg1 = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 1)).unwrap();
    assert_eq!(cg1.dim(), 33 * 33);

    let coarse = unit_square(2);
    let dg0 = FunctionSpace::new(&coarse, &scalar(Family::DG, CellType::Triangle, 0)).unwrap();
    assert_eq!(dg0.dim(), 8);

    let th = FunctionSpace::new(&coarse, &taylor_hood(CellType::Triangle)).unwrap();
    // 2 * 25 velocity dofs on the once-refined vertex+edge lattice, 9
    // pressure vertices.
    assert_eq!(th.dim(), 59);
    assert_eq!(th.value_size(), 3);
}

#[test]
fn interpolation_reproduces_polynomials_to_eval() {
    // A degree-q polynomial interpolated into CG_q is reproduced exactly,
    // so point evaluation must return the closed form anywhere.
    let mesh = unit_square(3);
    let cases: [(usize, &str, fn(f64, f64) -> f64); 3] = [
        (1, "0.5 - x[0] + 2.0*x[1]", |x, y| 0.5 - x + 2.0 * y),
        (2, "x[0]*x[0] + 3.0*x[0]*x[1]", |x, y| x * x + 3.0 * x * y),
        (3, "x[0]*x[0]*x[0] - x[1]*x[1]", |x, y| x * x * x - y * y),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (degree, text, exact) in cases {
        let space =
            FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, degree)).unwrap();
        let def = parse_expression(&[text], None).unwrap();
        let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
        for _ in 0..25 {
            let x = rng.random::<f64>();
            let y = rng.random::<f64>();
            let got = f.eval(&[x, y]).unwrap();
            assert_relative_eq!(got[0], exact(x, y), epsilon = 1e-10, max_relative = 1e-10);
        }
    }
}

#[test]
fn eval_agrees_across_interior_facets() {
    // For a continuous space the value on a shared facet must not depend
    // on which incident cell tabulates it.
    let mesh = unit_square(4);
    let space = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 2)).unwrap();
    let def = parse_expression(&["sin(x[0])*cos(x[1])"], Some(4)).unwrap();
    let f = interpolate(FieldSource::Expression(&def), &space).unwrap();

    let tdim = mesh.tdim();
    let f2c = mesh.connectivity(tdim - 1, tdim).unwrap();
    let mut checked = 0;
    for facet in 0..f2c.len() {
        let cells = f2c.get(facet);
        if cells.len() != 2 {
            continue;
        }
        let verts = mesh.entity_vertices(tdim - 1, facet).unwrap();
        let mid: Vec<f64> = (0..mesh.gdim())
            .map(|d| verts.iter().map(|&v| mesh.vertex(v)[d]).sum::<f64>() / verts.len() as f64)
            .collect();
        let mut values = Vec::new();
        for &c in cells {
            // Pull the midpoint back into each cell separately and sum the
            // cell's own basis contributions.
            let geom = mesh.cell_geometry(c).unwrap();
            let v0 = mesh.vertex(mesh.cell_vertices(c)[0]);
            let mut xi = vec![0.0; tdim];
            for a in 0..tdim {
                for d in 0..mesh.gdim() {
                    xi[a] += geom.jinv[a * mesh.gdim() + d] * (mid[d] - v0[d]);
                }
            }
            let table = space.element().tabulate_basis(&xi, 0).unwrap();
            let dofs = space.dofmap().cell_dofs(c).unwrap();
            let v: f64 =
                dofs.iter().enumerate().map(|(i, &g)| f.vector()[g] * table.value(0, i, 0)).sum();
            values.push(v);
        }
        assert_relative_eq!(values[0], values[1], epsilon = 1e-10, max_relative = 1e-10);
        checked += 1;
    }
    assert!(checked > 10);
}

#[test]
fn function_to_function_interpolation_embeds() {
    let mesh = unit_square(3);
    let coarse = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 1)).unwrap();
    let fine = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 3)).unwrap();
    let def = parse_expression(&["1.0 + 2.0*x[0] - x[1]"], None).unwrap();
    let f1 = interpolate(FieldSource::Expression(&def), &coarse).unwrap();
    let f3 = interpolate(FieldSource::Function(&f1), &fine).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let a = f1.eval(&x).unwrap()[0];
        let b = f3.eval(&x).unwrap()[0];
        assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
    }
}

#[test]
fn dg0_keeps_cellwise_values() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar(Family::DG, CellType::Triangle, 0)).unwrap();
    let def = parse_expression(&["x[0] + 10.0*x[1]"], None).unwrap();
    let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
    for c in 0..mesh.num_cells() {
        let coords = mesh.cell_coordinates(c);
        let centroid = [
            (coords[0] + coords[2] + coords[4]) / 3.0,
            (coords[1] + coords[3] + coords[5]) / 3.0,
        ];
        let got = f.eval(&centroid).unwrap()[0];
        assert_relative_eq!(got, centroid[0] + 10.0 * centroid[1], epsilon = 1e-12);
    }
}

#[test]
fn vector_interpolation_is_componentwise() {
    let mesh = unit_square(2);
    let space =
        FunctionSpace::new(&mesh, &vector(scalar(Family::CG, CellType::Triangle, 1), 2)).unwrap();
    let def = parse_expression(&["x[1]", "0.0 - x[0]"], None).unwrap();
    let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
    let got = f.eval(&[0.3, 0.7]).unwrap();
    assert_eq!(got.len(), 2);
    assert_relative_eq!(got[0], 0.7, epsilon = 1e-12);
    assert_relative_eq!(got[1], -0.3, epsilon = 1e-12);
}

#[test]
fn split_copies_mixed_blocks() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &taylor_hood(CellType::Triangle)).unwrap();
    let def = parse_expression(&["x[1]", "0.0 - x[0]", "x[0] + x[1]"], None).unwrap();
    let mut f = interpolate(FieldSource::Expression(&def), &space).unwrap();

    let parts = split(&f).unwrap();
    assert_eq!(parts.len(), 2);
    let (vel, pre) = (&parts[0], &parts[1]);
    assert_eq!(vel.space().value_size(), 2);
    assert_eq!(pre.space().value_size(), 1);
    assert_eq!(vel.space().dim() + pre.space().dim(), space.dim());

    let v = vel.eval(&[0.25, 0.5]).unwrap();
    assert_relative_eq!(v[0], 0.5, epsilon = 1e-12);
    assert_relative_eq!(v[1], -0.25, epsilon = 1e-12);
    let p = pre.eval(&[0.25, 0.5]).unwrap();
    assert_relative_eq!(p[0], 0.75, epsilon = 1e-12);

    // Parts are copies, not views.
    let before = f.vector()[0];
    f.vector_mut()[0] = before + 1.0;
    assert_relative_eq!(vel.vector()[0], before, epsilon = 0.0);
}

#[test]
fn eval_outside_mesh_is_an_error() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = Function::new(Arc::clone(&space));
    assert!(matches!(f.eval(&[2.0, 2.0]), Err(FunctionError::PointNotInMesh { .. })));
    assert!(matches!(f.eval(&[0.5]), Err(FunctionError::ShapeMismatch(_))));
}

#[test]
fn split_rejects_unmixed_spaces() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 1)).unwrap();
    let f = Function::new(Arc::clone(&space));
    assert!(matches!(split(&f), Err(FunctionError::NotMixed)));
}

#[test]
fn from_vector_checks_length() {
    let mesh = unit_square(2);
    let space = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Triangle, 1)).unwrap();
    assert!(Function::from_vector(Arc::clone(&space), vec![0.0; 3]).is_err());
    assert!(Function::from_vector(Arc::clone(&space), vec![0.0; space.dim()]).is_ok());
}

#[test]
fn interval_and_cube_eval() {
    let mesh = Arc::new(generate_unit_mesh(UnitShape::Interval, &[5]).unwrap());
    let space = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Interval, 2)).unwrap();
    let def = parse_expression(&["x[0]*x[0]"], None).unwrap();
    let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
    assert_relative_eq!(f.eval(&[0.37]).unwrap()[0], 0.37 * 0.37, epsilon = 1e-12);

    let mesh = Arc::new(generate_unit_mesh(UnitShape::Cube, &[2, 2, 2]).unwrap());
    let space = FunctionSpace::new(&mesh, &scalar(Family::CG, CellType::Tetrahedron, 1)).unwrap();
    let def = parse_expression(&["x[0] + x[1] + x[2]"], None).unwrap();
    let f = interpolate(FieldSource::Expression(&def), &space).unwrap();
    assert_relative_eq!(f.eval(&[0.3, 0.4, 0.2]).unwrap()[0], 0.9, epsilon = 1e-12);
}

#[test]
fn elevated_descriptor_raises_degree() {
    let cg2 = scalar(Family::CG, CellType::Triangle, 2);
    match elevated_descriptor(&cg2) {
        ElementDescriptor::Scalar { family: Family::CG, degree, .. } => assert_eq!(degree, 4),
        other => panic!("unexpected {other:?}"),
    }
    let cr = scalar(Family::CR, CellType::Triangle, 1);
    match elevated_descriptor(&cr) {
        ElementDescriptor::Scalar { family: Family::DG, degree, .. } => assert_eq!(degree, 3),
        other => panic!("unexpected {other:?}"),
    }
    match elevated_descriptor(&taylor_hood(CellType::Triangle)) {
        ElementDescriptor::Mixed { subs } => {
            assert_eq!(subs[0].degree(), 4);
            assert_eq!(subs[1].degree(), 3);
        }
        other => panic!("unexpected {other:?}"),
    }
}
