//! A small automated finite element system on simplex meshes.
//!
//! The pipeline: describe a variational form in a little form language,
//! compile each integral to a quadrature kernel, assemble cell by cell into
//! sparse tensors, solve. Meshes are simplicial in one to three dimensions
//! with lazily computed connectivity; elements are Lagrange-type families
//! composed into vector and mixed spaces.

pub mod assembly;
pub mod compiler;
pub mod dofmap;
pub mod element;
pub mod form;
pub mod function;
pub mod io;
pub mod la;
pub mod mesh;
pub mod reference;

pub use assembly::{assemble, AssemblyInput, DirichletBC};
pub use function::{Function, FunctionSpace};
pub use la::GenericTensor;
pub use mesh::Mesh;
pub use reference::CellType;
