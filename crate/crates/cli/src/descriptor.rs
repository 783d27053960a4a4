//! Problem descriptors: a JSON file that names a mesh, a form file, the
//! coefficient bindings, boundary conditions and solver settings. The
//! descriptor carries data only; whether a linear, Newton or transient driver
//! runs is decided by which forms the form file defines (a/L, F/J, or a/L
//! with a `transient` block).
//!
//! Relative paths inside a descriptor resolve against the descriptor's own
//! directory, so a problem directory can be moved as a unit.

use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "femkit-prob-1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDescriptor {
    pub schema: String,
    pub mesh: MeshSpec,
    pub forms: PathBuf,
    /// Coefficient name the Newton driver solves for.
    #[serde(default = "default_unknown")]
    pub unknown: String,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default)]
    pub coefficients: BTreeMap<String, ValueSpec>,
    #[serde(default)]
    pub bcs: Vec<BcSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub newton: NewtonSpec,
    #[serde(default)]
    pub transient: Option<TransientSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_unknown() -> String {
    "u".to_string()
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum MeshSpec {
    File { file: PathBuf },
    Generate { generate: GenerateSpec },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub shape: String,
    pub divisions: Vec<usize>,
}

/// One or several scalars; the form `5.0` is shorthand for `[5.0]`.
#[derive(Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum ValueSpec {
    Constant {
        constant: OneOrMany<f64>,
    },
    Expression {
        expression: OneOrMany<String>,
        #[serde(default)]
        degree: Option<usize>,
    },
    File {
        file: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    /// Component path into a mixed or vector element; empty means the whole
    /// space.
    #[serde(default)]
    pub component: Vec<usize>,
    pub value: ValueSpec,
    pub region: RegionSpec,
}

#[derive(Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    /// Only "boundary" is recognized.
    Named(String),
    Marker {
        marker: usize,
    },
    /// Facets where the expression vanishes at every vertex.
    OnZero {
        zero: String,
        #[serde(default = "default_zero_tol")]
        tol: f64,
    },
    /// A single nodal point, for pinning a nullspace.
    Point {
        point: Vec<f64>,
    },
}

fn default_zero_tol() -> f64 {
    1e-10
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub rtol: Option<f64>,
    #[serde(default)]
    pub maxit: Option<usize>,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NewtonSpec {
    #[serde(default)]
    pub atol: Option<f64>,
    #[serde(default)]
    pub rtol: Option<f64>,
    #[serde(default)]
    pub maxit: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientSpec {
    pub t_end: f64,
    pub dt: f64,
    /// 0.5 is the midpoint rule, 1.0 implicit Euler.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Coefficient holding the previous step.
    #[serde(default = "default_previous")]
    pub previous: String,
    #[serde(default)]
    pub initial: Option<ValueSpec>,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
}

fn default_theta() -> f64 {
    0.5
}

fn default_previous() -> String {
    "u0".to_string()
}

fn default_output_every() -> usize {
    1
}

pub fn load(path: &Path) -> Result<ProblemDescriptor, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let desc: ProblemDescriptor = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if desc.schema != SCHEMA {
        return Err(format!(
            "{}: schema is '{}', expected '{SCHEMA}'",
            path.display(),
            desc.schema
        ));
    }
    Ok(desc)
}

/// Resolve a descriptor-relative path.
pub fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}
