//! Structured meshes of the unit interval, square and cube.

use super::{build_mesh, Mesh, MeshError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitShape {
    Interval,
    Square,
    Cube,
}

impl UnitShape {
    pub fn parse(s: &str) -> Option<UnitShape> {
        match s {
            "interval" => Some(UnitShape::Interval),
            "square" => Some(UnitShape::Square),
            "cube" => Some(UnitShape::Cube),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            UnitShape::Interval => 1,
            UnitShape::Square => 2,
            UnitShape::Cube => 3,
        }
    }
}

/// Uniform simplicial mesh of the unit interval/square/cube with the given
/// number of divisions per axis. Squares split each grid cell into two
/// triangles along the (i,j) → (i+1,j+1) diagonal; cubes into six
/// tetrahedra sharing the main diagonal (Kuhn subdivision).
pub fn generate_unit_mesh(shape: UnitShape, divisions: &[usize]) -> Result<Mesh, MeshError> {
    if divisions.len() != shape.dim() || divisions.iter().any(|&n| n == 0) {
        return Err(MeshError::InvalidDivisions);
    }
    match shape {
        UnitShape::Interval => interval(divisions[0]),
        UnitShape::Square => square(divisions[0], divisions[1]),
        UnitShape::Cube => cube(divisions[0], divisions[1], divisions[2]),
    }
}

fn interval(n: usize) -> Result<Mesh, MeshError> {
    let coordinates: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut cells = Vec::with_capacity(2 * n);
    for i in 0..n {
        cells.extend_from_slice(&[i, i + 1]);
    }
    build_mesh(coordinates, cells, 1, 1)
}

fn square(nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    let mut coordinates = Vec::with_capacity(2 * (nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coordinates.push(i as f64 / nx as f64);
            coordinates.push(j as f64 / ny as f64);
        }
    }
    let v = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1));
            cells.extend_from_slice(&[v00, v10, v11]);
            cells.extend_from_slice(&[v00, v11, v01]);
        }
    }
    build_mesh(coordinates, cells, 2, 2)
}

fn cube(nx: usize, ny: usize, nz: usize) -> Result<Mesh, MeshError> {
    let mut coordinates = Vec::with_capacity(3 * (nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                coordinates.push(i as f64 / nx as f64);
                coordinates.push(j as f64 / ny as f64);
                coordinates.push(k as f64 / nz as f64);
            }
        }
    }
    let v = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    // Six tetrahedra per box, all containing the v000–v111 diagonal: one per
    // monotone lattice path, i.e. per permutation of the three axis steps.
    const PATHS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut cells = Vec::with_capacity(24 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for path in &PATHS {
                    let mut p = [i, j, k];
                    let mut tet = [v(p[0], p[1], p[2]), 0, 0, 0];
                    for (step, &axis) in path.iter().enumerate() {
                        p[axis] += 1;
                        tet[step + 1] = v(p[0], p[1], p[2]);
                    }
                    cells.extend_from_slice(&tet);
                }
            }
        }
    }
    build_mesh(coordinates, cells, 3, 3)
}
