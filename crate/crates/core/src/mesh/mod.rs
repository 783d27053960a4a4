//! Simplex meshes in one to three dimensions.
//!
//! A mesh stores vertex coordinates and the cell–vertex incidence; every
//! other incidence relation is computed on first request and cached. Entity
//! numbering is deterministic: dimension-d entities are numbered in order of
//! first appearance while scanning cells in index order, and "entity k of a
//! cell" refers to the reference-cell sub-simplex k (see [`crate::reference`]).

mod connectivity;
mod generate;
pub(crate) mod geometry;
mod refine;
mod smooth;

pub use connectivity::Connectivity;
pub use generate::{generate_unit_mesh, UnitShape};
pub use geometry::{CellGeometry, FacetGeometry};

use crate::reference::CellType;
use connectivity::Topology;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("index {index} out of range ({len} entities of dimension {dim})")]
    IndexOutOfRange { dim: usize, index: usize, len: usize },
    #[error("connectivity dimension ({d0}, {d1}) out of range for tdim {tdim}")]
    DimensionOutOfRange { d0: usize, d1: usize, tdim: usize },
    #[error("cell {cell} is degenerate (|det J| = {detj:.3e})")]
    DegenerateCell { cell: usize, detj: f64 },
    #[error("invalid mesh data: {0}")]
    InvalidData(String),
    #[error("divisions must all be at least 1")]
    InvalidDivisions,
    #[error("facet {facet} has {count} incident cells; the mesh is not manifold")]
    NonManifold { facet: usize, count: usize },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("mesh function dimension {have} does not match expected {want}")]
    WrongDimension { have: usize, want: usize },
}

/// Simplicial mesh. Immutable after construction apart from connectivity
/// caching and explicit geometry updates (smoothing).
#[derive(Debug)]
pub struct Mesh {
    gdim: usize,
    tdim: usize,
    coordinates: Vec<f64>,
    topology: Topology,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh {
            gdim: self.gdim,
            tdim: self.tdim,
            coordinates: self.coordinates.clone(),
            topology: self.topology.clone(),
        }
    }
}

/// Build a mesh from flat vertex coordinates (gdim reals per vertex) and
/// flat cell data (tdim+1 vertex indices per cell). Only the cell–vertex
/// connectivity is stored; degenerate cells are reported by the first
/// geometry query, not here.
pub fn build_mesh(coordinates: Vec<f64>, cells: Vec<usize>, tdim: usize, gdim: usize) -> Result<Mesh, MeshError> {
    if !(1..=3).contains(&gdim) || !(1..=3).contains(&tdim) || tdim > gdim {
        return Err(MeshError::InvalidData(format!("unsupported dimensions tdim={tdim}, gdim={gdim}")));
    }
    if coordinates.len() % gdim != 0 {
        return Err(MeshError::InvalidData(format!(
            "coordinate array length {} is not a multiple of gdim {gdim}",
            coordinates.len()
        )));
    }
    let nv = coordinates.len() / gdim;
    let k = tdim + 1;
    if cells.len() % k != 0 {
        return Err(MeshError::InvalidData(format!(
            "cell array length {} is not a multiple of {k}",
            cells.len()
        )));
    }
    for chunk in cells.chunks(k) {
        for &v in chunk {
            if v >= nv {
                return Err(MeshError::IndexOutOfRange { dim: 0, index: v, len: nv });
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                if chunk[i] == chunk[j] {
                    return Err(MeshError::InvalidData(format!("cell {chunk:?} repeats vertex {}", chunk[i])));
                }
            }
        }
    }
    let topology = Topology::new(tdim, nv, cells);
    Ok(Mesh { gdim, tdim, coordinates, topology })
}

impl Mesh {
    pub fn gdim(&self) -> usize {
        self.gdim
    }

    pub fn tdim(&self) -> usize {
        self.tdim
    }

    pub fn cell_type(&self) -> CellType {
        CellType::from_tdim(self.tdim).unwrap()
    }

    pub fn num_vertices(&self) -> usize {
        self.coordinates.len() / self.gdim
    }

    pub fn num_cells(&self) -> usize {
        self.topology.num_cells()
    }

    /// Entity count for dimension d; triggers entity creation for
    /// intermediate dimensions.
    pub fn num_entities(&self, d: usize) -> Result<usize, MeshError> {
        if d == 0 {
            Ok(self.num_vertices())
        } else if d == self.tdim {
            Ok(self.num_cells())
        } else {
            Ok(self.connectivity(d, 0)?.len())
        }
    }

    pub fn coordinates(&self) -> &[f64] {
        &self.coordinates
    }

    pub(crate) fn coordinates_mut(&mut self) -> &mut [f64] {
        &mut self.coordinates
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coordinates[i * self.gdim..(i + 1) * self.gdim]
    }

    /// Vertex indices of a cell, in local order.
    pub fn cell_vertices(&self, cell: usize) -> &[usize] {
        self.topology.cell_vertices(cell)
    }

    /// Flat coordinates of a cell's vertices: (tdim+1) · gdim reals.
    pub fn cell_coordinates(&self, cell: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.tdim + 1) * self.gdim);
        for &v in self.cell_vertices(cell) {
            out.extend_from_slice(self.vertex(v));
        }
        out
    }

    /// Incidence relation (d0, d1), computed and cached on first request.
    pub fn connectivity(&self, d0: usize, d1: usize) -> Result<&Connectivity, MeshError> {
        if d0 > self.tdim || d1 > self.tdim {
            return Err(MeshError::DimensionOutOfRange { d0, d1, tdim: self.tdim });
        }
        Ok(self.topology.connectivity(d0, d1))
    }

    /// Which (d0, d1) tables exist right now; for inspecting laziness.
    pub fn computed_connectivities(&self) -> Vec<(usize, usize)> {
        self.topology.computed_pairs()
    }

    /// Sorted global vertex indices of entity (d, i).
    pub fn entity_vertices(&self, d: usize, index: usize) -> Result<&[usize], MeshError> {
        let n = self.num_entities(d)?;
        if index >= n {
            return Err(MeshError::IndexOutOfRange { dim: d, index, len: n });
        }
        if d == 0 {
            return Ok(self.topology.vertex_self(index));
        }
        Ok(self.connectivity(d, 0)?.get(index))
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry, MeshError> {
        geometry::cell_geometry(self, cell)
    }

    pub fn facet_geometry(&self, facet: usize) -> Result<FacetGeometry, MeshError> {
        geometry::facet_geometry(self, facet)
    }

    /// Marks facets with exactly one incident cell.
    pub fn exterior_facets(&self) -> Result<MeshFunction<bool>, MeshError> {
        let fdim = self.tdim - 1;
        let f2c = self.connectivity(fdim, self.tdim)?;
        let mut values = vec![false; f2c.len()];
        for f in 0..f2c.len() {
            match f2c.get(f).len() {
                1 => values[f] = true,
                2 => {}
                count => return Err(MeshError::NonManifold { facet: f, count }),
            }
        }
        Ok(MeshFunction::from_values(fdim, values))
    }

    /// Total mesh volume, the sum of cell volumes.
    pub fn volume(&self) -> Result<f64, MeshError> {
        let mut total = 0.0;
        for c in 0..self.num_cells() {
            total += self.cell_geometry(c)?.volume;
        }
        Ok(total)
    }

    pub fn refine(&self, markers: Option<&MeshFunction<bool>>) -> Result<Mesh, MeshError> {
        refine::refine(self, markers)
    }

    /// Laplacian smoothing: `iterations` sweeps moving each interior vertex
    /// to the mean of its edge neighbors. Moves that would invert an incident
    /// cell are skipped. Geometry-only; topology and caches survive.
    pub fn smooth(&mut self, iterations: usize) -> Result<(), MeshError> {
        smooth::smooth(self, iterations)
    }
}

/// A (dimension, index) pair with its mesh; the unit of iteration.
#[derive(Clone, Copy)]
pub struct MeshEntity<'m> {
    mesh: &'m Mesh,
    dim: usize,
    index: usize,
}

impl<'m> MeshEntity<'m> {
    pub fn new(mesh: &'m Mesh, dim: usize, index: usize) -> Self {
        MeshEntity { mesh, dim, index }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Indices of incident entities of dimension d. For d == dim this is the
    /// neighbor relation, which excludes the entity itself.
    pub fn entities(&self, d: usize) -> Result<&'m [usize], MeshError> {
        Ok(self.mesh.connectivity(self.dim, d)?.get(self.index))
    }
}

/// Iterate over all entities of one dimension.
pub fn entities(mesh: &Mesh, dim: usize) -> impl Iterator<Item = MeshEntity<'_>> + '_ {
    let n = mesh.num_entities(dim).unwrap_or(0);
    (0..n).map(move |i| MeshEntity::new(mesh, dim, i))
}

/// Discrete function over all entities of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshFunction<V> {
    dim: usize,
    values: Vec<V>,
}

impl<V: Clone> MeshFunction<V> {
    /// Constant mesh function; the length is fixed to the entity count at
    /// creation time.
    pub fn new(mesh: &Mesh, dim: usize, default: V) -> Result<Self, MeshError> {
        let n = mesh.num_entities(dim)?;
        Ok(MeshFunction { dim, values: vec![default; n] })
    }

    pub fn from_values(dim: usize, values: Vec<V>) -> Self {
        MeshFunction { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> &V {
        &self.values[index]
    }

    pub fn set(&mut self, index: usize, value: V) {
        self.values[index] = value;
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }
}
