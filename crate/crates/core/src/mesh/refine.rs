//! Uniform and marked refinement.
//!
//! Uniform refinement splits every cell into 2^tdim children: bisection in
//! 1D, red refinement in 2D, octasection in 3D where the interior octahedron
//! is split along its shortest diagonal. Marked refinement bisects marked
//! cells by their longest edge and propagates until the mesh conforms:
//! whenever any edge of a cell is marked for splitting, the cell's longest
//! edge is marked too, so every cell splits all of its marked edges.

use super::{build_mesh, Mesh, MeshError, MeshFunction};

pub(super) fn refine(mesh: &Mesh, markers: Option<&MeshFunction<bool>>) -> Result<Mesh, MeshError> {
    match markers {
        None => uniform(mesh),
        Some(m) => {
            if m.dim() != mesh.tdim() {
                return Err(MeshError::WrongDimension { have: m.dim(), want: mesh.tdim() });
            }
            if m.len() != mesh.num_cells() {
                return Err(MeshError::InvalidData(format!(
                    "marker length {} does not match {} cells",
                    m.len(),
                    mesh.num_cells()
                )));
            }
            match mesh.tdim() {
                1 => marked_1d(mesh, m),
                2 => marked_2d(mesh, m),
                _ => Err(MeshError::Unsupported("marked refinement is only available for tdim <= 2".into())),
            }
        }
    }
}

fn midpoint(mesh: &Mesh, a: usize, b: usize, out: &mut Vec<f64>) {
    let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
    for i in 0..mesh.gdim() {
        out.push(0.5 * (pa[i] + pb[i]));
    }
}

/// Signed volume scale of a candidate cell, or 0 when gdim > tdim.
fn signed_det(mesh: &Mesh, coordinates: &[f64], cell: &[usize]) -> f64 {
    let gdim = mesh.gdim();
    if gdim != mesh.tdim() {
        return 0.0;
    }
    let coords: Vec<f64> = cell
        .iter()
        .flat_map(|&v| coordinates[v * gdim..(v + 1) * gdim].iter().copied())
        .collect();
    let (_, det, _) = super::geometry::affine_map(&coords, mesh.tdim(), gdim);
    det
}

/// Push a child cell, swapping the last two vertices if its orientation
/// disagrees with `parent_sign`.
fn push_cell(mesh: &Mesh, coordinates: &[f64], cells: &mut Vec<usize>, child: &mut [usize], parent_sign: f64) {
    if parent_sign != 0.0 {
        let det = signed_det(mesh, coordinates, child);
        if det * parent_sign < 0.0 {
            let n = child.len();
            child.swap(n - 1, n - 2);
        }
    }
    cells.extend_from_slice(child);
}

fn uniform(mesh: &Mesh) -> Result<Mesh, MeshError> {
    if mesh.tdim() == 1 {
        return marked_1d(mesh, &MeshFunction::from_values(1, vec![true; mesh.num_cells()]));
    }
    let n0 = mesh.num_vertices();
    let edges = mesh.connectivity(1, 0)?;
    let cell_edges = mesh.connectivity(mesh.tdim(), 1)?;
    let mut coordinates = mesh.coordinates().to_vec();
    for e in 0..edges.len() {
        let ev = edges.get(e);
        midpoint(mesh, ev[0], ev[1], &mut coordinates);
    }
    let mid = |e: usize| n0 + e;
    let mut cells = Vec::with_capacity(mesh.num_cells() * (1 << mesh.tdim()) * (mesh.tdim() + 1));
    for c in 0..mesh.num_cells() {
        let v = mesh.cell_vertices(c);
        let e = cell_edges.get(c);
        let sign = signed_det(mesh, &coordinates, v).signum();
        if mesh.tdim() == 2 {
            // Local edges in subset order: e[0]=(v0,v1), e[1]=(v0,v2), e[2]=(v1,v2).
            let (m01, m02, m12) = (mid(e[0]), mid(e[1]), mid(e[2]));
            for child in [
                [v[0], m01, m02],
                [m01, v[1], m12],
                [m02, m12, v[2]],
                [m01, m12, m02],
            ] {
                push_cell(mesh, &coordinates, &mut cells, &mut child.clone(), sign);
            }
        } else {
            // e ordering: (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
            let (m01, m02, m03) = (mid(e[0]), mid(e[1]), mid(e[2]));
            let (m12, m13, m23) = (mid(e[3]), mid(e[4]), mid(e[5]));
            for child in [
                [v[0], m01, m02, m03],
                [v[1], m01, m12, m13],
                [v[2], m02, m12, m23],
                [v[3], m03, m13, m23],
            ] {
                push_cell(mesh, &coordinates, &mut cells, &mut child.clone(), sign);
            }
            // Interior octahedron: split along the shortest of the three
            // diagonals to keep the children well-shaped.
            let dist2 = |a: usize, b: usize| -> f64 {
                let (pa, pb) = (
                    &coordinates[a * mesh.gdim()..(a + 1) * mesh.gdim()],
                    &coordinates[b * mesh.gdim()..(b + 1) * mesh.gdim()],
                );
                pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum()
            };
            // Each diagonal with its surrounding 4-cycle of midpoints.
            let octa = [
                (m01, m23, [m02, m03, m13, m12]),
                (m02, m13, [m01, m03, m23, m12]),
                (m03, m12, [m01, m02, m23, m13]),
            ];
            let mut best = 0;
            for i in 1..3 {
                if dist2(octa[i].0, octa[i].1) < dist2(octa[best].0, octa[best].1) {
                    best = i;
                }
            }
            let (da, db, ring) = octa[best];
            for k in 0..4 {
                let mut child = [da, db, ring[k], ring[(k + 1) % 4]];
                push_cell(mesh, &coordinates, &mut cells, &mut child, sign);
            }
        }
    }
    build_mesh(coordinates, cells, mesh.tdim(), mesh.gdim())
}

fn marked_1d(mesh: &Mesh, markers: &MeshFunction<bool>) -> Result<Mesh, MeshError> {
    let mut coordinates = mesh.coordinates().to_vec();
    let mut cells = Vec::new();
    for c in 0..mesh.num_cells() {
        let v = mesh.cell_vertices(c);
        if *markers.get(c) {
            let m = coordinates.len() / mesh.gdim();
            midpoint(mesh, v[0], v[1], &mut coordinates);
            cells.extend_from_slice(&[v[0], m]);
            cells.extend_from_slice(&[m, v[1]]);
        } else {
            cells.extend_from_slice(v);
        }
    }
    build_mesh(coordinates, cells, 1, mesh.gdim())
}

/// Longest local edge of a cell; ties break to the smallest edge index.
fn longest_edge(mesh: &Mesh, cell: usize) -> Result<usize, MeshError> {
    let edges = mesh.connectivity(2, 1)?.get(cell);
    let e2v = mesh.connectivity(1, 0)?;
    let mut best = edges[0];
    let mut best_len = -1.0;
    for &e in edges {
        let ev = e2v.get(e);
        let (pa, pb) = (mesh.vertex(ev[0]), mesh.vertex(ev[1]));
        let len: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
        if len > best_len || (len == best_len && e < best) {
            best_len = len;
            best = e;
        }
    }
    Ok(best)
}

fn marked_2d(mesh: &Mesh, markers: &MeshFunction<bool>) -> Result<Mesh, MeshError> {
    let num_edges = mesh.num_entities(1)?;
    let cell_edges = mesh.connectivity(2, 1)?;
    let e2v = mesh.connectivity(1, 0)?;
    let mut split = vec![false; num_edges];
    for c in 0..mesh.num_cells() {
        if *markers.get(c) {
            split[longest_edge(mesh, c)?] = true;
        }
    }
    // Conformity closure: a cell with any split edge must split its longest.
    loop {
        let mut changed = false;
        for c in 0..mesh.num_cells() {
            if cell_edges.get(c).iter().any(|&e| split[e]) {
                let le = longest_edge(mesh, c)?;
                if !split[le] {
                    split[le] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut coordinates = mesh.coordinates().to_vec();
    let mut edge_mid = vec![usize::MAX; num_edges];
    for e in 0..num_edges {
        if split[e] {
            let ev = e2v.get(e);
            edge_mid[e] = coordinates.len() / mesh.gdim();
            midpoint(mesh, ev[0], ev[1], &mut coordinates);
        }
    }

    let mut cells = Vec::new();
    for c in 0..mesh.num_cells() {
        let v = mesh.cell_vertices(c);
        let e = cell_edges.get(c);
        let sign = signed_det(mesh, &coordinates, v).signum();
        if !e.iter().any(|&ei| split[ei]) {
            cells.extend_from_slice(v);
            continue;
        }
        let le = longest_edge(mesh, c)?;
        // Local index of the longest edge; (a, b) its endpoints, w opposite.
        let local = e.iter().position(|&ei| ei == le).unwrap();
        let subs = mesh.cell_type().sub_entities(1);
        let (a, b) = (v[subs[local][0]], v[subs[local][1]]);
        let w = *v.iter().find(|&&x| x != a && x != b).unwrap();
        let m = edge_mid[le];
        // Two halves from the longest-edge bisection; each may need one more
        // split if the parent edge it kept is also marked.
        let mut halves: Vec<[usize; 3]> = Vec::with_capacity(2);
        halves.push([a, m, w]);
        halves.push([m, b, w]);
        for half in halves {
            let kept = if half[0] == a { a } else { b };
            let kept_edge = e
                .iter()
                .copied()
                .find(|&ei| {
                    let ev = e2v.get(ei);
                    (ev[0] == kept && ev[1] == w) || (ev[0] == w && ev[1] == kept)
                })
                .unwrap();
            if split[kept_edge] {
                let q = edge_mid[kept_edge];
                push_cell(mesh, &coordinates, &mut cells, &mut [m, kept, q], sign);
                push_cell(mesh, &coordinates, &mut cells, &mut [m, q, w], sign);
            } else {
                push_cell(mesh, &coordinates, &mut cells, &mut half.clone(), sign);
            }
        }
    }
    build_mesh(coordinates, cells, 2, mesh.gdim())
}
