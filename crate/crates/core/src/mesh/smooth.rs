//! Laplacian mesh smoothing with an inversion guard.

use super::{Mesh, MeshError};

pub(super) fn smooth(mesh: &mut Mesh, iterations: usize) -> Result<(), MeshError> {
    if iterations == 0 {
        return Ok(());
    }
    let tdim = mesh.tdim();
    let gdim = mesh.gdim();
    let nv = mesh.num_vertices();

    // Boundary vertices stay put: every vertex of an exterior facet.
    let exterior = mesh.exterior_facets()?;
    let mut boundary = vec![false; nv];
    for f in 0..exterior.len() {
        if *exterior.get(f) {
            for &v in mesh.entity_vertices(tdim - 1, f)? {
                boundary[v] = true;
            }
        }
    }

    // Edge neighbors and incident cells, snapshot before mutating geometry.
    let neighbors = mesh.connectivity(0, 0)?.clone();
    let v2c = mesh.connectivity(0, tdim)?.clone();
    let cell_of: Vec<Vec<usize>> = (0..mesh.num_cells()).map(|c| mesh.cell_vertices(c).to_vec()).collect();

    let signed = tdim == gdim;
    let orig_sign: Vec<f64> = if signed {
        (0..mesh.num_cells())
            .map(|c| {
                let coords = mesh.cell_coordinates(c);
                let (_, det, _) = super::geometry::affine_map(&coords, tdim, gdim);
                det.signum()
            })
            .collect()
    } else {
        Vec::new()
    };

    for _ in 0..iterations {
        for v in 0..nv {
            if boundary[v] {
                continue;
            }
            let nbrs = neighbors.get(v);
            if nbrs.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; gdim];
            for &n in nbrs {
                let p = mesh.vertex(n);
                for i in 0..gdim {
                    mean[i] += p[i];
                }
            }
            for x in mean.iter_mut() {
                *x /= nbrs.len() as f64;
            }
            let old: Vec<f64> = mesh.vertex(v).to_vec();
            mesh.coordinates_mut()[v * gdim..(v + 1) * gdim].copy_from_slice(&mean);
            if signed {
                // Undo the move if any incident cell flips or collapses.
                let mut ok = true;
                for &c in v2c.get(v) {
                    let coords: Vec<f64> = cell_of[c]
                        .iter()
                        .flat_map(|&w| mesh.vertex(w).iter().copied())
                        .collect();
                    let (_, det, _) = super::geometry::affine_map(&coords, tdim, gdim);
                    if det == 0.0 || det.signum() != orig_sign[c] {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    mesh.coordinates_mut()[v * gdim..(v + 1) * gdim].copy_from_slice(&old);
                }
            }
        }
    }
    Ok(())
}
