//! Affine cell geometry: Jacobians, volumes, diameters, facet normals.

use super::{Mesh, MeshError};

/// Geometry of the affine map x = v0 + J x̂ from the reference simplex.
/// `j` is gdim × tdim row-major, `jinv` its (pseudo-)inverse, tdim × gdim.
/// `detj` is the signed determinant when gdim == tdim and the positive
/// Gram-determinant root otherwise.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub j: Vec<f64>,
    pub jinv: Vec<f64>,
    pub detj: f64,
    pub h: f64,
    pub volume: f64,
}

#[derive(Debug, Clone)]
pub struct FacetGeometry {
    /// Unit normal, outward from the '+' cell (the incident cell with the
    /// smaller index; the only cell on exterior facets).
    pub normal: Vec<f64>,
    pub area: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Max vertex-pair distance: the cell diameter, and what CellSize h means.
pub(crate) fn diameter(points: &[&[f64]]) -> f64 {
    let mut h: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            h = h.max(dist(points[i], points[j]));
        }
    }
    h
}

/// Jacobian, determinant and inverse for the affine map of a simplex with
/// the given vertex coordinates (flat, gdim per vertex).
pub(crate) fn affine_map(coords: &[f64], tdim: usize, gdim: usize) -> (Vec<f64>, f64, Vec<f64>) {
    let v = |i: usize| &coords[i * gdim..(i + 1) * gdim];
    let mut j = vec![0.0; gdim * tdim];
    for col in 0..tdim {
        for row in 0..gdim {
            j[row * tdim + col] = v(col + 1)[row] - v(0)[row];
        }
    }
    if gdim == tdim {
        let (detj, jinv) = square_inverse(&j, tdim);
        (j, detj, jinv)
    } else {
        // Gram pseudo-inverse: Jinv = (JᵀJ)⁻¹ Jᵀ, det = sqrt(det JᵀJ).
        let mut g = vec![0.0; tdim * tdim];
        for a in 0..tdim {
            for b in 0..tdim {
                let mut acc = 0.0;
                for r in 0..gdim {
                    acc += j[r * tdim + a] * j[r * tdim + b];
                }
                g[a * tdim + b] = acc;
            }
        }
        let (detg, ginv) = square_inverse(&g, tdim);
        let mut jinv = vec![0.0; tdim * gdim];
        for a in 0..tdim {
            for c in 0..gdim {
                let mut acc = 0.0;
                for b in 0..tdim {
                    acc += ginv[a * tdim + b] * j[c * tdim + b];
                }
                jinv[a * gdim + c] = acc;
            }
        }
        (j, detg.max(0.0).sqrt(), jinv)
    }
}

fn square_inverse(m: &[f64], n: usize) -> (f64, Vec<f64>) {
    match n {
        1 => {
            let d = m[0];
            (d, vec![if d != 0.0 { 1.0 / d } else { 0.0 }])
        }
        2 => {
            let d = m[0] * m[3] - m[1] * m[2];
            if d == 0.0 {
                return (0.0, vec![0.0; 4]);
            }
            (d, vec![m[3] / d, -m[1] / d, -m[2] / d, m[0] / d])
        }
        3 => {
            let c0 = m[4] * m[8] - m[5] * m[7];
            let c1 = m[5] * m[6] - m[3] * m[8];
            let c2 = m[3] * m[7] - m[4] * m[6];
            let d = m[0] * c0 + m[1] * c1 + m[2] * c2;
            if d == 0.0 {
                return (0.0, vec![0.0; 9]);
            }
            let inv = vec![
                c0 / d,
                (m[2] * m[7] - m[1] * m[8]) / d,
                (m[1] * m[5] - m[2] * m[4]) / d,
                c1 / d,
                (m[0] * m[8] - m[2] * m[6]) / d,
                (m[2] * m[3] - m[0] * m[5]) / d,
                c2 / d,
                (m[1] * m[6] - m[0] * m[7]) / d,
                (m[0] * m[4] - m[1] * m[3]) / d,
            ];
            (d, inv)
        }
        _ => unreachable!(),
    }
}

pub(super) fn cell_geometry(mesh: &Mesh, cell: usize) -> Result<CellGeometry, MeshError> {
    let n = mesh.num_cells();
    if cell >= n {
        return Err(MeshError::IndexOutOfRange { dim: mesh.tdim(), index: cell, len: n });
    }
    let tdim = mesh.tdim();
    let gdim = mesh.gdim();
    let coords = mesh.cell_coordinates(cell);
    let points: Vec<&[f64]> = (0..=tdim).map(|i| &coords[i * gdim..(i + 1) * gdim]).collect();
    let h = diameter(&points);
    let (j, detj, jinv) = affine_map(&coords, tdim, gdim);
    // Relative degeneracy test: |det J| scales like h^tdim.
    let scale = h.powi(tdim as i32);
    if h == 0.0 || detj.abs() <= 1e-14 * scale {
        return Err(MeshError::DegenerateCell { cell, detj });
    }
    let volume = detj.abs() * crate::reference::CellType::from_tdim(tdim).unwrap().volume();
    Ok(CellGeometry { j, jinv, detj, h, volume })
}

/// Area (measure) of a facet given its vertex coordinates.
pub(crate) fn facet_measure(points: &[&[f64]]) -> f64 {
    match points.len() {
        1 => 1.0,
        2 => dist(points[0], points[1]),
        3 => {
            let g = points[0].len();
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            for i in 0..g {
                a[i] = points[1][i] - points[0][i];
                b[i] = points[2][i] - points[0][i];
            }
            let c = [
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ];
            0.5 * (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
        }
        _ => unreachable!(),
    }
}

/// Unit normal to the facet spanned by `points`, outward from the cell whose
/// vertex coordinates are `cell_points`.
pub(crate) fn outward_normal(points: &[&[f64]], cell_points: &[&[f64]], gdim: usize) -> Vec<f64> {
    let centroid = |pts: &[&[f64]]| -> Vec<f64> {
        let mut c = vec![0.0; gdim];
        for p in pts {
            for i in 0..gdim {
                c[i] += p[i];
            }
        }
        for x in c.iter_mut() {
            *x /= pts.len() as f64;
        }
        c
    };
    let fc = centroid(points);
    let cc = centroid(cell_points);
    let mut out = vec![0.0; gdim];
    match points.len() {
        1 => {
            // Vertex facet of an interval: direction along the cell.
            for i in 0..gdim {
                out[i] = fc[i] - cc[i];
            }
        }
        2 => {
            let t: Vec<f64> = (0..gdim).map(|i| points[1][i] - points[0][i]).collect();
            if gdim == 2 {
                out[0] = t[1];
                out[1] = -t[0];
            } else {
                // In-plane outward direction: remove the tangential part of
                // the centroid offset.
                let v: Vec<f64> = (0..gdim).map(|i| fc[i] - cc[i]).collect();
                let tt: f64 = t.iter().map(|x| x * x).sum();
                let vt: f64 = v.iter().zip(&t).map(|(a, b)| a * b).sum();
                for i in 0..gdim {
                    out[i] = v[i] - t[i] * vt / tt;
                }
            }
        }
        3 => {
            let a: Vec<f64> = (0..3).map(|i| points[1][i] - points[0][i]).collect();
            let b: Vec<f64> = (0..3).map(|i| points[2][i] - points[0][i]).collect();
            out[0] = a[1] * b[2] - a[2] * b[1];
            out[1] = a[2] * b[0] - a[0] * b[2];
            out[2] = a[0] * b[1] - a[1] * b[0];
        }
        _ => unreachable!(),
    }
    // Orient away from the cell centroid, then normalize.
    let d: f64 = (0..gdim).map(|i| out[i] * (fc[i] - cc[i])).sum();
    let sign = if d < 0.0 { -1.0 } else { 1.0 };
    let len: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in out.iter_mut() {
        *x *= sign / len;
    }
    out
}

pub(super) fn facet_geometry(mesh: &Mesh, facet: usize) -> Result<FacetGeometry, MeshError> {
    let tdim = mesh.tdim();
    let gdim = mesh.gdim();
    let fdim = tdim - 1;
    let n = mesh.num_entities(fdim)?;
    if facet >= n {
        return Err(MeshError::IndexOutOfRange { dim: fdim, index: facet, len: n });
    }
    let cells = mesh.connectivity(fdim, tdim)?.get(facet);
    // '+' side: smallest incident cell index.
    let plus = *cells.iter().min().unwrap();
    let fverts = mesh.entity_vertices(fdim, facet)?.to_vec();
    let fpoints: Vec<&[f64]> = fverts.iter().map(|&v| mesh.vertex(v)).collect();
    let cverts = mesh.cell_vertices(plus).to_vec();
    let cpoints: Vec<&[f64]> = cverts.iter().map(|&v| mesh.vertex(v)).collect();
    let area = facet_measure(&fpoints);
    if area == 0.0 || !area.is_finite() {
        return Err(MeshError::DegenerateCell { cell: plus, detj: 0.0 });
    }
    let normal = outward_normal(&fpoints, &cpoints, gdim);
    Ok(FacetGeometry { normal, area })
}
