//! Function spaces and the discrete functions living on them: point
//! evaluation, interpolation, projection and mixed splitting.

use std::sync::Arc;

use thiserror::Error;

use crate::dofmap::{build_dofmap, DofMap, DofMapError};
use crate::element::{create_element, ElementDescriptor, ElementError, Family, FiniteElement};
use crate::form::ExpressionDef;
use crate::mesh::{Mesh, MeshError};

#[derive(Debug, Error)]
pub enum FunctionError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    DofMap(#[from] DofMapError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("point {point:?} is not inside any mesh cell")]
    PointNotInMesh { point: Vec<f64> },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("the function space is not mixed")]
    NotMixed,
}

/// The triple a discrete function needs: a mesh, an element, and the dof
/// numbering gluing the two together. Immutable once built; share it with
/// `Arc`.
#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    element: FiniteElement,
    dofmap: DofMap,
}

impl FunctionSpace {
    pub fn new(mesh: &Arc<Mesh>, descriptor: &ElementDescriptor) -> Result<Arc<Self>, FunctionError> {
        let element = create_element(descriptor)?;
        let dofmap = build_dofmap(&element, mesh)?;
        Ok(Arc::new(FunctionSpace { mesh: Arc::clone(mesh), element, dofmap }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn element(&self) -> &FiniteElement {
        &self.element
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn descriptor(&self) -> &ElementDescriptor {
        self.element.descriptor()
    }

    pub fn dim(&self) -> usize {
        self.dofmap.global_dim()
    }

    pub fn value_size(&self) -> usize {
        self.element.value_size()
    }

    /// Component descriptors of a mixed space, in declaration order.
    pub fn sub_descriptors(&self) -> Option<&[ElementDescriptor]> {
        match self.descriptor() {
            ElementDescriptor::Mixed { subs } => Some(subs),
            _ => None,
        }
    }
}

/// A member of a function space: u_h = sum_i U_i phi_i, stored as the
/// coefficient vector U.
#[derive(Debug, Clone)]
pub struct Function {
    space: Arc<FunctionSpace>,
    vector: Vec<f64>,
}

/// Push a reference point through a cell's affine vertex map.
fn push_point(mesh: &Mesh, cell: usize, xi: &[f64]) -> Vec<f64> {
    let gdim = mesh.gdim();
    let verts = mesh.cell_vertices(cell);
    let lam0 = 1.0 - xi.iter().sum::<f64>();
    let mut x = vec![0.0; gdim];
    for g in 0..gdim {
        x[g] = lam0 * mesh.vertex(verts[0])[g];
    }
    for (k, &t) in xi.iter().enumerate() {
        let v = mesh.vertex(verts[k + 1]);
        for g in 0..gdim {
            x[g] += t * v[g];
        }
    }
    x
}

impl Function {
    pub fn new(space: Arc<FunctionSpace>) -> Self {
        let n = space.dim();
        Function { space, vector: vec![0.0; n] }
    }

    pub fn from_vector(space: Arc<FunctionSpace>, vector: Vec<f64>) -> Result<Self, FunctionError> {
        if vector.len() != space.dim() {
            return Err(FunctionError::ShapeMismatch(format!(
                "vector of length {} on a space of dimension {}",
                vector.len(),
                space.dim()
            )));
        }
        Ok(Function { space, vector })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn vector_mut(&mut self) -> &mut Vec<f64> {
        &mut self.vector
    }

    /// Reference coordinates of `x` in the first cell containing it, by a
    /// linear scan with a barycentric tolerance of 1e-12. Taking the lowest
    /// cell index makes evaluation on shared facets deterministic for
    /// discontinuous spaces.
    fn locate(&self, x: &[f64]) -> Result<(usize, Vec<f64>), FunctionError> {
        let mesh = &*self.space.mesh;
        let tdim = mesh.tdim();
        let gdim = mesh.gdim();
        if x.len() != gdim {
            return Err(FunctionError::ShapeMismatch(format!(
                "point of dimension {} in a mesh of dimension {gdim}",
                x.len()
            )));
        }
        for c in 0..mesh.num_cells() {
            let geom = mesh.cell_geometry(c)?;
            let v0 = mesh.vertex(mesh.cell_vertices(c)[0]);
            let mut xi = vec![0.0; tdim];
            for a in 0..tdim {
                xi[a] = (0..gdim).map(|g| geom.jinv[a * gdim + g] * (x[g] - v0[g])).sum();
            }
            let inside =
                xi.iter().all(|&t| t >= -1e-12) && xi.iter().sum::<f64>() <= 1.0 + 1e-12;
            if !inside {
                continue;
            }
            // On an embedded mesh the pullback can succeed off-surface;
            // require the point to map back onto itself.
            if gdim != tdim {
                let back = push_point(mesh, c, &xi);
                let err: f64 =
                    back.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if err > 1e-10 * (1.0 + geom.h) {
                    continue;
                }
            }
            return Ok((c, xi));
        }
        Err(FunctionError::PointNotInMesh { point: x.to_vec() })
    }

    /// Value at a physical point, one real per value component.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, FunctionError> {
        let (cell, xi) = self.locate(x)?;
        let elem = self.space.element();
        let table = elem.tabulate_basis(&xi, 0)?;
        let dofs = self.space.dofmap.cell_dofs(cell)?;
        let vs = elem.value_size();
        let mut out = vec![0.0; vs];
        for (i, &g) in dofs.iter().enumerate() {
            for c in 0..vs {
                out[c] += self.vector[g] * table.value(0, i, c);
            }
        }
        Ok(out)
    }
}

/// What interpolation and projection can consume.
#[derive(Clone, Copy)]
pub enum FieldSource<'a> {
    Expression(&'a ExpressionDef),
    Function(&'a Function),
}

/// Nodal interpolation: each target dof takes the source value of its
/// component at its nodal point. A Function source must live on the same
/// mesh; it is evaluated cell-locally, so discontinuous sources keep their
/// one-sided values.
pub fn interpolate(
    source: FieldSource,
    space: &Arc<FunctionSpace>,
) -> Result<Function, FunctionError> {
    let elem = space.element();
    let vs = elem.value_size();
    let mesh = &*space.mesh;
    let points = elem.dof_points();
    let comps = elem.dof_components();
    let mut out = vec![0.0; space.dim()];
    match source {
        FieldSource::Expression(def) => {
            if def.value_size() != vs {
                return Err(FunctionError::ShapeMismatch(format!(
                    "expression with {} components into a space with {vs}",
                    def.value_size()
                )));
            }
            for cell in 0..mesh.num_cells() {
                let dofs = space.dofmap.cell_dofs(cell)?;
                for (i, &g) in dofs.iter().enumerate() {
                    let x = push_point(mesh, cell, &points[i]);
                    out[g] = def.eval(comps[i], &x);
                }
            }
        }
        FieldSource::Function(src) => {
            let selem = src.space.element();
            if selem.value_size() != vs {
                return Err(FunctionError::ShapeMismatch(format!(
                    "function with {} components into a space with {vs}",
                    selem.value_size()
                )));
            }
            if !Arc::ptr_eq(&src.space.mesh, &space.mesh) {
                return Err(FunctionError::ShapeMismatch(
                    "interpolation between meshes is not supported".into(),
                ));
            }
            // One tabulation serves every cell: the target nodes are fixed
            // reference points.
            let flat: Vec<f64> = points.iter().flatten().copied().collect();
            let table = selem.tabulate_basis(&flat, 0)?;
            for cell in 0..mesh.num_cells() {
                let tdofs = space.dofmap.cell_dofs(cell)?;
                let sdofs = src.space.dofmap.cell_dofs(cell)?;
                for (i, &g) in tdofs.iter().enumerate() {
                    let mut v = 0.0;
                    for (j, &s) in sdofs.iter().enumerate() {
                        v += src.vector[s] * table.value(i, j, comps[i]);
                    }
                    out[g] = v;
                }
            }
        }
    }
    Function::from_vector(Arc::clone(space), out)
}

/// L2 projection into `space` by solving the mass system; see the assembly
/// module for the driver it delegates to.
pub fn project(
    source: FieldSource,
    space: &Arc<FunctionSpace>,
) -> Result<Function, crate::assembly::AssemblyError> {
    crate::assembly::project(source, space)
}

/// Split a mixed function into per-component functions (copies). Relies on
/// the dof numbering being blocked per sub-element, which the dofmap
/// guarantees.
pub fn split(f: &Function) -> Result<Vec<Function>, FunctionError> {
    let subs = f.space.sub_descriptors().ok_or(FunctionError::NotMixed)?.to_vec();
    let mut parts = Vec::with_capacity(subs.len());
    for (i, desc) in subs.iter().enumerate() {
        let sub_space = FunctionSpace::new(&f.space.mesh, desc)?;
        let block = &f.space.dofmap.sub_maps()[i];
        debug_assert_eq!(block.global_dim(), sub_space.dim());
        let lo = block.global_offset();
        let vector = f.vector[lo..lo + block.global_dim()].to_vec();
        parts.push(Function::from_vector(sub_space, vector)?);
    }
    Ok(parts)
}

/// Degree-raised descriptor used by error norms: Lagrange families step up
/// two degrees; the facet-midpoint family has no higher member, so its
/// functions embed into discontinuous cubics.
pub fn elevated_descriptor(desc: &ElementDescriptor) -> ElementDescriptor {
    match desc {
        ElementDescriptor::Scalar { family, cell, degree } => match family {
            Family::CR => ElementDescriptor::scalar(Family::DG, *cell, 3),
            f => ElementDescriptor::scalar(*f, *cell, degree + 2),
        },
        ElementDescriptor::Vector { sub, count } => {
            ElementDescriptor::vector(elevated_descriptor(sub), *count)
        }
        ElementDescriptor::Mixed { subs } => {
            ElementDescriptor::Mixed { subs: subs.iter().map(elevated_descriptor).collect() }
        }
    }
}

#[cfg(test)]
mod tests;
