//! Compilation of checked form integrals into executable element kernels.
//!
//! A kernel carries a quadrature rule, tabulated basis data and a flat
//! expression tape; executing it against cell geometry and coefficient
//! values produces the dense element tensor. Kernels serialize to a JSON
//! IR for inspection and reload.

mod ir;
mod kernel;
mod lower;
pub mod quadrature;

pub use ir::{emit_kernel_ir, load_kernel_ir, IrArtifact};
pub use kernel::{compile_form, compile_integral, CompiledForm, Kernel, KernelKind};
pub use quadrature::{quadrature_rule, QuadratureRule, MAX_QUADRATURE_DEGREE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompilerError {
    #[error("quadrature degree {degree} out of range (1..=20)")]
    DegreeOutOfRange { degree: usize },
    #[error("expression not supported by the kernel compiler: {0}")]
    UnsupportedExpression(String),
    #[error("cell is degenerate (|det J| = {detj:.3e})")]
    DegenerateCell { detj: f64 },
    #[error("kernel input mismatch: {0}")]
    BadInput(String),
    #[error("malformed kernel ir: {0}")]
    BadIr(String),
    #[error(transparent)]
    Form(#[from] crate::form::FormError),
    #[error(transparent)]
    Element(#[from] crate::element::ElementError),
}
