//! Global degree-of-freedom numbering.
//!
//! A dofmap glues an element's entity-dof layout to a mesh: entities of
//! each dimension are numbered in mesh order, dofs within a shared entity
//! in a canonical order every incident cell agrees on. The canonical order
//! comes from each dof's barycentric multi-index: permute the index into
//! the entity's ascending-global-vertex order and sort lexicographically.
//! That makes edge dofs of degree 3 and face dofs of degree 4 match across
//! cells regardless of how either cell orients the entity.
//!
//! Composite elements number sub-element blocks consecutively: all of
//! sub-space 0's globals first, then sub-space 1, recursively. Sub-maps
//! carry their root-global offset, so their cell dofs index straight into
//! the mixed system.

use crate::element::FiniteElement;
use crate::la::{PatternBuilder, SparsityPattern};
use crate::mesh::{Mesh, MeshError, MeshFunction};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DofMapError {
    #[error("element cell {element} does not match mesh dimension {mesh_tdim}")]
    ShapeMismatch { element: String, mesh_tdim: usize },
    #[error("index {index} out of range ({len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("facet markers have dimension {have}, expected {want}")]
    WrongMarkerDimension { have: usize, want: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone)]
pub struct DofMap {
    element: FiniteElement,
    num_cells: usize,
    space_dim: usize,
    global_dim: usize,
    /// Offset of this map's block in the root numbering; 0 for a root map.
    offset: usize,
    /// Flat per-cell global indices, root-global, element local order.
    cell_dofs: Vec<usize>,
    subs: Vec<DofMap>,
}

/// Number the dofs of `element` over `mesh`.
pub fn build_dofmap(element: &FiniteElement, mesh: &Mesh) -> Result<DofMap, DofMapError> {
    build_offset(element, mesh, 0)
}

fn build_offset(element: &FiniteElement, mesh: &Mesh, offset: usize) -> Result<DofMap, DofMapError> {
    if element.cell().tdim() != mesh.tdim() {
        return Err(DofMapError::ShapeMismatch {
            element: element.descriptor().to_string(),
            mesh_tdim: mesh.tdim(),
        });
    }
    let subs_in = element.sub_elements();
    if subs_in.is_empty() {
        return build_scalar(element, mesh, offset);
    }
    let mut subs = Vec::with_capacity(subs_in.len());
    let mut at = offset;
    for sub in subs_in {
        let m = build_offset(sub, mesh, at)?;
        at += m.global_dim;
        subs.push(m);
    }
    let num_cells = mesh.num_cells();
    let space_dim = element.space_dim();
    let mut cell_dofs = Vec::with_capacity(num_cells * space_dim);
    for c in 0..num_cells {
        for sub in &subs {
            cell_dofs.extend_from_slice(sub.cell_dofs(c)?);
        }
    }
    Ok(DofMap {
        element: element.clone(),
        num_cells,
        space_dim,
        global_dim: at - offset,
        offset,
        cell_dofs,
        subs,
    })
}

fn build_scalar(element: &FiniteElement, mesh: &Mesh, offset: usize) -> Result<DofMap, DofMapError> {
    let cell = element.cell();
    let tdim = cell.tdim();
    let num_cells = mesh.num_cells();
    let space_dim = element.space_dim();

    // Dofs per entity of each dimension, and the block offset that
    // dimension starts at in this map's numbering.
    let mut per_dim = [0usize; 4];
    let mut dim_offset = [0usize; 4];
    let mut at = 0;
    for d in 0..=tdim {
        per_dim[d] = element.entity_dofs(d, 0).len();
        dim_offset[d] = at;
        if per_dim[d] > 0 {
            at += per_dim[d] * mesh.num_entities(d)?;
        }
    }
    let global_dim = at;

    let lattice = element.dof_lattice();
    let mut cell_dofs = vec![0usize; num_cells * space_dim];
    let mut perm: Vec<Vec<usize>> = Vec::new();
    for c in 0..num_cells {
        let cv = mesh.cell_vertices(c).to_vec();
        for d in 0..=tdim {
            if per_dim[d] == 0 {
                continue;
            }
            let cell_entities: &[usize] = if d == tdim {
                std::slice::from_ref(&c)
            } else {
                mesh.connectivity(tdim, d)?.get(c)
            };
            for (le, &entity) in cell_entities.iter().enumerate() {
                let dofs = element.entity_dofs(d, le);
                let base = offset + dim_offset[d] + entity * per_dim[d];
                if dofs.len() == 1 {
                    cell_dofs[c * space_dim + dofs[0]] = base;
                    continue;
                }
                // Permute each dof's multi-index into ascending-global
                // vertex order, then rank lexicographically.
                let tuple = cell.sub_entities(d)[le];
                let mut vorder: Vec<usize> = (0..tuple.len()).collect();
                vorder.sort_by_key(|&j| cv[tuple[j]]);
                perm.clear();
                for &i in dofs {
                    perm.push(vorder.iter().map(|&j| lattice[i][j]).collect());
                }
                let mut rank: Vec<usize> = (0..dofs.len()).collect();
                rank.sort_by(|&a, &b| perm[a].cmp(&perm[b]));
                for (slot, &k) in rank.iter().enumerate() {
                    cell_dofs[c * space_dim + dofs[k]] = base + slot;
                }
            }
        }
    }

    Ok(DofMap {
        element: element.clone(),
        num_cells,
        space_dim,
        global_dim,
        offset,
        cell_dofs,
        subs: Vec::new(),
    })
}

impl DofMap {
    pub fn element(&self) -> &FiniteElement {
        &self.element
    }

    /// Dimension of this map's space (not counting sibling blocks).
    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    /// Start of this map's block in the root numbering.
    pub fn global_offset(&self) -> usize {
        self.offset
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Root-global dof indices of a cell, in element local order.
    pub fn cell_dofs(&self, cell: usize) -> Result<&[usize], DofMapError> {
        if cell >= self.num_cells {
            return Err(DofMapError::IndexOutOfRange { index: cell, len: self.num_cells });
        }
        Ok(&self.cell_dofs[cell * self.space_dim..(cell + 1) * self.space_dim])
    }

    /// Sub-space maps of a composite element, in block order.
    pub fn sub_maps(&self) -> &[DofMap] {
        &self.subs
    }

    /// Push a reference point through cell's affine map.
    fn map_point(mesh: &Mesh, cell: usize, xi: &[f64]) -> Vec<f64> {
        let gdim = mesh.gdim();
        let tdim = mesh.tdim();
        let verts = mesh.cell_vertices(cell);
        let lam0 = 1.0 - xi.iter().sum::<f64>();
        let mut x = vec![0.0; gdim];
        for g in 0..gdim {
            x[g] = lam0 * mesh.vertex(verts[0])[g];
        }
        for k in 0..tdim {
            let v = mesh.vertex(verts[k + 1]);
            for g in 0..gdim {
                x[g] += xi[k] * v[g];
            }
        }
        x
    }

    /// Dofs on marked facets: everything attached to an entity in a marked
    /// facet's closure, plus cell-attached dofs whose nodal point lies on
    /// the facet (that is how discontinuous spaces see the boundary).
    /// Sorted by global index, one coordinate per dof.
    pub fn boundary_dofs(
        &self,
        mesh: &Mesh,
        markers: &MeshFunction<bool>,
    ) -> Result<Vec<(usize, Vec<f64>)>, DofMapError> {
        let tdim = mesh.tdim();
        let fdim = tdim - 1;
        if markers.dim() != fdim {
            return Err(DofMapError::WrongMarkerDimension { have: markers.dim(), want: fdim });
        }
        let cell = self.element.cell();
        let f2c = mesh.connectivity(fdim, tdim)?.clone();
        let c2f = mesh.connectivity(tdim, fdim)?;
        let entities = self.element.dof_entities();
        let points = self.element.dof_points();

        let mut found: std::collections::BTreeMap<usize, Vec<f64>> = std::collections::BTreeMap::new();
        for f in 0..markers.len() {
            if !*markers.get(f) {
                continue;
            }
            for &c in f2c.get(f) {
                let lf = c2f
                    .get(c)
                    .iter()
                    .position(|&g| g == f)
                    .expect("facet connectivity out of sync");
                let facet_tuple = cell.sub_entities(fdim)[lf];
                let dofs = self.cell_dofs(c)?.to_vec();
                for (i, &(d, le)) in entities.iter().enumerate() {
                    let on_facet = if d == tdim {
                        // Interior (cell-attached) dof: on the facet iff the
                        // barycentric coordinates of all omitted vertices
                        // vanish at its nodal point.
                        let xi = &points[i];
                        (0..=tdim).all(|v| {
                            facet_tuple.contains(&v) || {
                                let lam = if v == 0 {
                                    1.0 - xi.iter().sum::<f64>()
                                } else {
                                    xi[v - 1]
                                };
                                lam.abs() <= 1e-10
                            }
                        })
                    } else {
                        let tuple = cell.sub_entities(d)[le];
                        tuple.iter().all(|v| facet_tuple.contains(v))
                    };
                    if on_facet {
                        found
                            .entry(dofs[i])
                            .or_insert_with(|| Self::map_point(mesh, c, &points[i]));
                    }
                }
            }
        }
        Ok(found.into_iter().collect())
    }

    /// Coordinates of every dof in this map's block, indexed by
    /// global index minus the block offset, gdim reals each.
    pub fn dof_coordinates(&self, mesh: &Mesh) -> Result<Vec<f64>, DofMapError> {
        let gdim = mesh.gdim();
        let points = self.element.dof_points();
        let mut out = vec![0.0; self.global_dim * gdim];
        for c in 0..self.num_cells {
            let dofs = self.cell_dofs(c)?.to_vec();
            for (i, &g) in dofs.iter().enumerate() {
                let x = Self::map_point(mesh, c, &points[i]);
                out[(g - self.offset) * gdim..(g - self.offset + 1) * gdim].copy_from_slice(&x);
            }
        }
        Ok(out)
    }
}

/// Pattern containing every cell's test x trial couplings, plus the
/// two-cell macro couplings of each interior facet when requested.
pub fn sparsity_pattern(
    mesh: &Mesh,
    test: &DofMap,
    trial: &DofMap,
    interior_facets: bool,
) -> Result<SparsityPattern, DofMapError> {
    let mut builder = PatternBuilder::new(test.global_dim(), trial.global_dim());
    for c in 0..mesh.num_cells() {
        builder.insert_block(test.cell_dofs(c)?, trial.cell_dofs(c)?);
    }
    if interior_facets {
        let tdim = mesh.tdim();
        let f2c = mesh.connectivity(tdim - 1, tdim)?;
        for f in 0..f2c.len() {
            let cells = f2c.get(f);
            if cells.len() != 2 {
                continue;
            }
            let mut rows = test.cell_dofs(cells[0])?.to_vec();
            rows.extend_from_slice(test.cell_dofs(cells[1])?);
            let mut cols = trial.cell_dofs(cells[0])?.to_vec();
            cols.extend_from_slice(trial.cell_dofs(cells[1])?);
            builder.insert_block(&rows, &cols);
        }
    }
    Ok(builder.finalize())
}
