//! Global assembly: loop the mesh entities a kernel integrates over, add
//! each element tensor into a rank-generic global tensor. On top of that,
//! Dirichlet conditions, the linear and Newton variational drivers, and the
//! norm functionals built from rank-0 forms.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::compiler::{compile_form, CompilerError, Kernel, KernelKind};
use crate::dofmap::{sparsity_pattern, DofMap, DofMapError};
use crate::element::ElementError;
use crate::form::{
    check_form, CoefficientKind, Expr, ExpressionDef, Form, FormError, Integral, Measure,
    TEST_SLOT, TRIAL_SLOT,
};
use crate::function::{
    interpolate, elevated_descriptor, FieldSource, Function, FunctionError, FunctionSpace,
};
use crate::la::{solve_linear, CsrMatrix, GenericTensor, LaError, Method, SolveReport, SolverOptions};
use crate::mesh::{Mesh, MeshError, MeshFunction};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Compiler(#[from] CompilerError),
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    DofMap(#[from] DofMapError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    La(#[from] LaError),
    #[error("coefficient {id} ('{name}') has no bound function")]
    UnboundCoefficient { id: usize, name: String },
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),
    #[error("{0}")]
    BadProblem(String),
    #[error("integral over subdomain {id} needs {what} markers")]
    MissingMarkers { id: usize, what: &'static str },
    #[error("Newton iteration did not converge in {iterations} steps (residuals {history:?})")]
    NewtonNoConvergence { iterations: usize, history: Vec<f64> },
}

/// Everything an assembly call reads besides the form itself. Spaces may be
/// omitted, in which case they are built from the form's metadata.
pub struct AssemblyInput<'a> {
    pub mesh: &'a Arc<Mesh>,
    pub test: Option<&'a Arc<FunctionSpace>>,
    pub trial: Option<&'a Arc<FunctionSpace>>,
    /// (form coefficient id, bound discrete function)
    pub coefficients: &'a [(usize, &'a Function)],
    pub cell_markers: Option<&'a MeshFunction<usize>>,
    pub facet_markers: Option<&'a MeshFunction<usize>>,
    /// 0 and 1 both mean serial; more enables parallel kernel evaluation
    /// with ordered insertion, so results match serial assembly bitwise.
    pub threads: usize,
}

impl<'a> AssemblyInput<'a> {
    pub fn new(mesh: &'a Arc<Mesh>) -> Self {
        AssemblyInput {
            mesh,
            test: None,
            trial: None,
            coefficients: &[],
            cell_markers: None,
            facet_markers: None,
            threads: 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Entity {
    Cell(usize),
    Exterior { cell: usize, facet: usize },
    Interior { cell_p: usize, facet_p: usize, cell_m: usize, facet_m: usize },
}

impl Entity {
    fn cells(&self) -> Vec<usize> {
        match self {
            Entity::Cell(c) | Entity::Exterior { cell: c, .. } => vec![*c],
            Entity::Interior { cell_p, cell_m, .. } => vec![*cell_p, *cell_m],
        }
    }
}

fn dofs_of(map: &DofMap, entity: &Entity) -> Result<Vec<usize>, AssemblyError> {
    let mut dofs = Vec::new();
    for c in entity.cells() {
        dofs.extend_from_slice(map.cell_dofs(c)?);
    }
    Ok(dofs)
}

/// All entities a kernel of the given kind visits, in deterministic order.
fn entities_of(
    kind: KernelKind,
    subdomain: Option<usize>,
    input: &AssemblyInput,
) -> Result<Vec<Entity>, AssemblyError> {
    let mesh = &**input.mesh;
    let tdim = mesh.tdim();
    match kind {
        KernelKind::Cell => {
            let markers = match subdomain {
                None => None,
                Some(id) => Some((
                    input
                        .cell_markers
                        .ok_or(AssemblyError::MissingMarkers { id, what: "cell" })?,
                    id,
                )),
            };
            Ok((0..mesh.num_cells())
                .filter(|&c| markers.map_or(true, |(m, id)| *m.get(c) == id))
                .map(Entity::Cell)
                .collect())
        }
        KernelKind::ExteriorFacet => {
            let exterior = mesh.exterior_facets()?;
            let f2c = mesh.connectivity(tdim - 1, tdim)?;
            let c2f = mesh.connectivity(tdim, tdim - 1)?;
            let mut out = Vec::new();
            for f in 0..f2c.len() {
                if !*exterior.get(f) {
                    continue;
                }
                if let Some(id) = subdomain {
                    let markers = input
                        .facet_markers
                        .ok_or(AssemblyError::MissingMarkers { id, what: "facet" })?;
                    if *markers.get(f) != id {
                        continue;
                    }
                }
                let cell = f2c.get(f)[0];
                let facet = c2f
                    .get(cell)
                    .iter()
                    .position(|&g| g == f)
                    .expect("cell-facet connectivity out of sync");
                out.push(Entity::Exterior { cell, facet });
            }
            Ok(out)
        }
        KernelKind::InteriorFacet => {
            let f2c = mesh.connectivity(tdim - 1, tdim)?;
            let c2f = mesh.connectivity(tdim, tdim - 1)?;
            let mut out = Vec::new();
            for f in 0..f2c.len() {
                let cells = f2c.get(f);
                if cells.len() != 2 {
                    continue;
                }
                if let Some(id) = subdomain {
                    let markers = input
                        .facet_markers
                        .ok_or(AssemblyError::MissingMarkers { id, what: "facet" })?;
                    if *markers.get(f) != id {
                        continue;
                    }
                }
                // '+' is the incident cell with the smaller index.
                let (cell_p, cell_m) = (cells[0].min(cells[1]), cells[0].max(cells[1]));
                let local = |c: usize| {
                    c2f.get(c)
                        .iter()
                        .position(|&g| g == f)
                        .expect("cell-facet connectivity out of sync")
                };
                out.push(Entity::Interior {
                    cell_p,
                    facet_p: local(cell_p),
                    cell_m,
                    facet_m: local(cell_m),
                });
            }
            Ok(out)
        }
    }
}

/// Bound functions for a kernel's coefficient slots, in slot order.
fn kernel_bindings<'a>(
    kernel: &Kernel,
    form: &Form,
    input: &AssemblyInput<'a>,
) -> Result<Vec<(&'a Function, usize)>, AssemblyError> {
    kernel
        .coefficients()
        .into_iter()
        .map(|(id, desc, want)| {
            let f = input
                .coefficients
                .iter()
                .find(|(bid, _)| *bid == id)
                .map(|(_, f)| *f)
                .ok_or_else(|| AssemblyError::UnboundCoefficient {
                    id,
                    name: form.coefficients[id].name.clone(),
                })?;
            if *f.space().descriptor() != desc {
                return Err(AssemblyError::MeshMismatch(format!(
                    "coefficient '{}' is bound to a {} function, declared as {}",
                    form.coefficients[id].name,
                    f.space().descriptor(),
                    desc
                )));
            }
            if !Arc::ptr_eq(f.space().mesh(), input.mesh) {
                return Err(AssemblyError::MeshMismatch(format!(
                    "coefficient '{}' lives on a different mesh",
                    form.coefficients[id].name
                )));
            }
            Ok((f, want))
        })
        .collect()
}

/// One element tensor. Coefficient values are gathered here so the call is
/// self-contained and safe to run from any thread.
fn eval_entity(
    kernel: &Kernel,
    mesh: &Mesh,
    bindings: &[(&Function, usize)],
    entity: &Entity,
) -> Result<Vec<f64>, AssemblyError> {
    let cells = entity.cells();
    let mut gathered: Vec<Vec<f64>> = Vec::with_capacity(bindings.len());
    for (f, want) in bindings {
        let mut v = Vec::with_capacity(*want);
        for &c in &cells {
            for &g in f.space().dofmap().cell_dofs(c)? {
                v.push(f.vector()[g]);
            }
        }
        debug_assert_eq!(v.len(), *want);
        gathered.push(v);
    }
    let refs: Vec<&[f64]> = gathered.iter().map(|v| v.as_slice()).collect();
    let (rows, cols) = kernel.shape();
    let mut out = vec![0.0; rows * cols];
    match entity {
        Entity::Cell(c) => {
            let coords = mesh.cell_coordinates(*c);
            kernel.tabulate_tensor(&coords, None, None, &refs, &mut out)?;
        }
        Entity::Exterior { cell, facet } => {
            let coords = mesh.cell_coordinates(*cell);
            kernel.tabulate_tensor(&coords, Some(*facet), None, &refs, &mut out)?;
        }
        Entity::Interior { cell_p, facet_p, cell_m, facet_m } => {
            let coords_p = mesh.cell_coordinates(*cell_p);
            let coords_m = mesh.cell_coordinates(*cell_m);
            kernel.tabulate_tensor(
                &coords_p,
                Some(*facet_p),
                Some((&coords_m, *facet_m)),
                &refs,
                &mut out,
            )?;
        }
    }
    Ok(out)
}

/// Evaluate `f` over `0..n`, parallel when `threads > 1`. Results come back
/// in index order either way, so downstream insertion is deterministic.
fn indexed_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>, AssemblyError>
where
    T: Send,
    F: Fn(usize) -> Result<T, AssemblyError> + Sync,
{
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| AssemblyError::BadProblem(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(&f).collect())
    } else {
        (0..n).map(f).collect()
    }
}

fn resolve_space(
    want: Option<&crate::element::ElementDescriptor>,
    given: Option<&Arc<FunctionSpace>>,
    input: &AssemblyInput,
    role: &str,
) -> Result<Option<Arc<FunctionSpace>>, AssemblyError> {
    match (want, given) {
        (None, _) => Ok(None),
        (Some(desc), Some(space)) => {
            if space.descriptor() != desc {
                return Err(AssemblyError::MeshMismatch(format!(
                    "{role} space is {}, the form wants {desc}",
                    space.descriptor()
                )));
            }
            if !Arc::ptr_eq(space.mesh(), input.mesh) {
                return Err(AssemblyError::MeshMismatch(format!(
                    "{role} space lives on a different mesh"
                )));
            }
            Ok(Some(Arc::clone(space)))
        }
        (Some(desc), None) => Ok(Some(FunctionSpace::new(input.mesh, desc)?)),
    }
}

/// Assemble a checked form of any rank into a global tensor.
pub fn assemble(form: &Form, input: &AssemblyInput) -> Result<GenericTensor, AssemblyError> {
    let meta = check_form(form)?;
    let compiled = compile_form(form, input.mesh.cell_type())?;
    let test = resolve_space(meta.test.as_ref(), input.test, input, "test")?;
    let trial = resolve_space(meta.trial.as_ref(), input.trial, input, "trial")?;

    let has_interior = compiled.kernels.iter().any(|k| k.kind() == KernelKind::InteriorFacet);
    let mut tensor = match compiled.rank {
        0 => GenericTensor::new(0, None, None)?,
        1 => GenericTensor::new(1, Some(test.as_ref().unwrap().dim()), None)?,
        _ => {
            let pattern = sparsity_pattern(
                input.mesh,
                test.as_ref().unwrap().dofmap(),
                trial.as_ref().unwrap().dofmap(),
                has_interior,
            )?;
            GenericTensor::new(2, None, Some(&pattern))?
        }
    };

    for kernel in &compiled.kernels {
        let bindings = kernel_bindings(kernel, form, input)?;
        let entities = entities_of(kernel.kind(), kernel.subdomain(), input)?;
        let tensors = indexed_map(entities.len(), input.threads, |i| {
            eval_entity(kernel, input.mesh, &bindings, &entities[i])
        })?;
        for (entity, block) in entities.iter().zip(&tensors) {
            let rows = match &test {
                Some(s) if compiled.rank >= 1 => dofs_of(s.dofmap(), entity)?,
                _ => Vec::new(),
            };
            let cols = match &trial {
                Some(s) if compiled.rank == 2 => dofs_of(s.dofmap(), entity)?,
                _ => Vec::new(),
            };
            tensor.add_local(block, &rows, &cols)?;
        }
    }
    tensor.finalize()?;
    Ok(tensor)
}

pub fn assemble_scalar(form: &Form, input: &AssemblyInput) -> Result<f64, AssemblyError> {
    assemble(form, input)?
        .as_scalar()
        .ok_or_else(|| AssemblyError::BadProblem("form is not a functional".into()))
}

pub fn assemble_vector(form: &Form, input: &AssemblyInput) -> Result<Vec<f64>, AssemblyError> {
    match assemble(form, input)? {
        GenericTensor::Vector(v) => Ok(v),
        _ => Err(AssemblyError::BadProblem("form is not linear in one argument".into())),
    }
}

pub fn assemble_matrix(form: &Form, input: &AssemblyInput) -> Result<CsrMatrix, AssemblyError> {
    match assemble(form, input)? {
        GenericTensor::Matrix(m) => Ok(m),
        _ => Err(AssemblyError::BadProblem("form is not bilinear".into())),
    }
}

/// Dirichlet value: a constant per component, a closed-form expression, or
/// a discrete function evaluated at the dof points.
#[derive(Debug, Clone)]
pub enum BcValue {
    Constant(Vec<f64>),
    Expression(ExpressionDef),
    Field(Function),
}

pub enum BcRegion {
    /// The whole exterior boundary.
    Boundary,
    /// Exterior facets all of whose vertices satisfy the predicate; the
    /// predicate owns its tolerance.
    Predicate(Box<dyn Fn(&[f64]) -> bool + Send + Sync>),
    /// Facets carrying this marker value.
    Marker(usize),
    /// Dofs whose nodal point coincides with the given coordinates, to
    /// 1e-10 per coordinate. Pins a nullspace; does not describe a
    /// boundary, so interior points are fine.
    Point(Vec<f64>),
}

pub struct DirichletBC {
    space: Arc<FunctionSpace>,
    /// Path of sub-element indices selecting a sub-space; empty for the
    /// whole space.
    component: Vec<usize>,
    value: BcValue,
    region: BcRegion,
}

/// Component index of a global dof inside `map`'s element, found by walking
/// the blocked sub-map layout.
fn dof_component(map: &DofMap, g: usize) -> usize {
    for (i, sub) in map.sub_maps().iter().enumerate() {
        let lo = sub.global_offset();
        if (lo..lo + sub.global_dim()).contains(&g) {
            return map.element().sub_component_offset(i) + dof_component(sub, g);
        }
    }
    0
}

impl DirichletBC {
    pub fn new(space: &Arc<FunctionSpace>, value: BcValue, region: BcRegion) -> Self {
        DirichletBC { space: Arc::clone(space), component: Vec::new(), value, region }
    }

    pub fn on_component(
        space: &Arc<FunctionSpace>,
        component: Vec<usize>,
        value: BcValue,
        region: BcRegion,
    ) -> Self {
        DirichletBC { space: Arc::clone(space), component, value, region }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    /// Resolve to (global dof, value) pairs, sorted by dof. An empty result
    /// is legal; drivers surface it as a warning.
    pub fn dofs(
        &self,
        facet_markers: Option<&MeshFunction<usize>>,
    ) -> Result<Vec<(usize, f64)>, AssemblyError> {
        let mesh = self.space.mesh();
        let tdim = mesh.tdim();
        let fdim = tdim - 1;

        let mut map = self.space.dofmap();
        for &i in &self.component {
            let subs = map.sub_maps();
            if i >= subs.len() {
                return Err(AssemblyError::BadProblem(format!(
                    "sub-space index {i} out of range ({} components)",
                    subs.len()
                )));
            }
            map = &subs[i];
        }
        let vs = map.element().value_size();
        let found = match &self.region {
            BcRegion::Point(p) => {
                let gdim = mesh.gdim();
                if p.len() != gdim {
                    return Err(AssemblyError::BadProblem(format!(
                        "pin point has {} coordinates, the mesh {gdim}",
                        p.len()
                    )));
                }
                let xs = map.dof_coordinates(mesh)?;
                let lo = map.global_offset();
                let mut out = Vec::new();
                for d in 0..map.global_dim() {
                    let x = &xs[d * gdim..(d + 1) * gdim];
                    if x.iter().zip(p).all(|(a, b)| (a - b).abs() <= 1e-10) {
                        out.push((lo + d, x.to_vec()));
                    }
                }
                out
            }
            region => {
                let markers = match region {
                    BcRegion::Boundary => mesh.exterior_facets()?,
                    BcRegion::Predicate(p) => {
                        let exterior = mesh.exterior_facets()?;
                        let mut keep = MeshFunction::new(mesh, fdim, false)?;
                        for f in 0..keep.len() {
                            if !*exterior.get(f) {
                                continue;
                            }
                            let all = mesh
                                .entity_vertices(fdim, f)?
                                .iter()
                                .all(|&v| p(mesh.vertex(v)));
                            keep.set(f, all);
                        }
                        keep
                    }
                    BcRegion::Marker(id) => {
                        let given = facet_markers
                            .ok_or(AssemblyError::MissingMarkers { id: *id, what: "facet" })?;
                        if given.dim() != fdim {
                            return Err(AssemblyError::MeshMismatch(format!(
                                "facet markers have dimension {}, want {fdim}",
                                given.dim()
                            )));
                        }
                        MeshFunction::from_values(
                            fdim,
                            given.values().iter().map(|v| *v == *id).collect(),
                        )
                    }
                    BcRegion::Point(_) => unreachable!(),
                };
                map.boundary_dofs(mesh, &markers)?
            }
        };
        let mut out = Vec::with_capacity(found.len());
        for (dof, x) in found {
            let comp = dof_component(map, dof);
            let value = match &self.value {
                BcValue::Constant(vals) => {
                    if vals.len() != vs {
                        return Err(AssemblyError::BadProblem(format!(
                            "boundary value has {} components, the space {vs}",
                            vals.len()
                        )));
                    }
                    vals[comp]
                }
                BcValue::Expression(def) => {
                    if def.value_size() != vs {
                        return Err(AssemblyError::BadProblem(format!(
                            "boundary expression has {} components, the space {vs}",
                            def.value_size()
                        )));
                    }
                    def.eval(comp, &x)
                }
                BcValue::Field(f) => {
                    let v = f.eval(&x)?;
                    if v.len() != vs {
                        return Err(AssemblyError::BadProblem(format!(
                            "boundary function has {} components, the space {vs}",
                            v.len()
                        )));
                    }
                    v[comp]
                }
            };
            out.push((dof, value));
        }
        Ok(out)
    }
}

/// Merge the resolved pairs of several conditions; a later condition wins
/// on dofs claimed twice.
pub fn resolve_bcs(
    bcs: &[DirichletBC],
    facet_markers: Option<&MeshFunction<usize>>,
) -> Result<BTreeMap<usize, f64>, AssemblyError> {
    let mut map = BTreeMap::new();
    for bc in bcs {
        for (dof, value) in bc.dofs(facet_markers)? {
            map.insert(dof, value);
        }
    }
    Ok(map)
}

/// Row replacement after assembly: row i of A becomes e_i and b_i the
/// boundary value. Columns are left alone, so symmetry is lost; the
/// element-level path in `assemble_system` keeps it.
pub fn apply_bc(
    pairs: &BTreeMap<usize, f64>,
    a: Option<&mut CsrMatrix>,
    b: Option<&mut [f64]>,
) -> Result<(), AssemblyError> {
    if let Some(mat) = a {
        for &dof in pairs.keys() {
            mat.zero_row_set_diagonal(dof)?;
        }
    }
    if let Some(vec) = b {
        for (&dof, &value) in pairs {
            vec[dof] = value;
        }
    }
    Ok(())
}

/// Zero the constrained entries of a residual-style vector (the Newton
/// update mode of boundary application).
pub fn zero_bc_rows(pairs: &BTreeMap<usize, f64>, b: &mut [f64]) {
    for &dof in pairs.keys() {
        b[dof] = 0.0;
    }
}

/// Local symmetric elimination: lift constrained columns into the local
/// rhs, zero constrained rows and columns, and on cell passes put the
/// boundary value on the diagonal. Keeping it at the element level
/// preserves whatever symmetry the bilinear form has.
fn eliminate_local(
    a_loc: &mut [f64],
    b_loc: &mut [f64],
    dofs: &[usize],
    bc: &BTreeMap<usize, f64>,
    set_diag: bool,
) {
    let n = dofs.len();
    for (j, gj) in dofs.iter().enumerate() {
        if let Some(&g) = bc.get(gj) {
            for i in 0..n {
                b_loc[i] -= a_loc[i * n + j] * g;
                a_loc[i * n + j] = 0.0;
            }
        }
    }
    for (i, gi) in dofs.iter().enumerate() {
        if let Some(&g) = bc.get(gi) {
            for j in 0..n {
                a_loc[i * n + j] = 0.0;
            }
            if set_diag {
                a_loc[i * n + i] = 1.0;
                b_loc[i] = g;
            } else {
                b_loc[i] = 0.0;
            }
        }
    }
}

fn kernel_applies(kernel: &Kernel, entity_marker: Option<usize>) -> bool {
    match kernel.subdomain() {
        None => true,
        Some(id) => entity_marker == Some(id),
    }
}

/// Assemble the matrix of `a` and vector of `l` together, applying the
/// boundary conditions by element-level elimination so a symmetric form
/// yields a symmetric matrix.
pub fn assemble_system(
    a: &Form,
    l: &Form,
    bcs: &[DirichletBC],
    input: &AssemblyInput,
) -> Result<(CsrMatrix, Vec<f64>), AssemblyError> {
    let meta_a = check_form(a)?;
    let meta_l = check_form(l)?;
    if meta_a.rank != 2 || meta_l.rank != 1 {
        return Err(AssemblyError::BadProblem(format!(
            "assemble_system wants a bilinear and a linear form, got ranks {} and {}",
            meta_a.rank, meta_l.rank
        )));
    }
    let space = match (input.test, input.trial) {
        (Some(s), Some(t)) if Arc::ptr_eq(s, t) => Arc::clone(s),
        (Some(s), None) | (None, Some(s)) => Arc::clone(s),
        (None, None) => FunctionSpace::new(input.mesh, meta_a.test.as_ref().unwrap())?,
        _ => {
            return Err(AssemblyError::BadProblem(
                "assemble_system works on one shared test/trial space".into(),
            ))
        }
    };
    for (want, role) in
        [(&meta_a.test, "test"), (&meta_a.trial, "trial"), (&meta_l.test, "rhs test")]
    {
        if let Some(desc) = want {
            if space.descriptor() != desc {
                return Err(AssemblyError::MeshMismatch(format!(
                    "{role} element {desc} does not match the space {}",
                    space.descriptor()
                )));
            }
        }
    }

    let compiled_a = compile_form(a, input.mesh.cell_type())?;
    let compiled_l = compile_form(l, input.mesh.cell_type())?;
    let bc = resolve_bcs(bcs, input.facet_markers)?;

    let has_interior = compiled_a
        .kernels
        .iter()
        .any(|k| k.kind() == KernelKind::InteriorFacet);
    let pattern = sparsity_pattern(input.mesh, space.dofmap(), space.dofmap(), has_interior)?;
    let mut mat = CsrMatrix::from_pattern(&pattern);
    let mut vec = vec![0.0; space.dim()];

    for kind in [KernelKind::Cell, KernelKind::ExteriorFacet, KernelKind::InteriorFacet] {
        let a_kernels: Vec<&Kernel> =
            compiled_a.kernels.iter().filter(|k| k.kind() == kind).collect();
        let l_kernels: Vec<&Kernel> =
            compiled_l.kernels.iter().filter(|k| k.kind() == kind).collect();
        // Cells are walked even without kernels when conditions exist: the
        // diagonal entries of constrained dofs are set on the cell pass.
        let needed = !a_kernels.is_empty()
            || !l_kernels.is_empty()
            || (kind == KernelKind::Cell && !bc.is_empty());
        if !needed {
            continue;
        }
        let a_bindings = a_kernels
            .iter()
            .map(|k| kernel_bindings(k, a, input))
            .collect::<Result<Vec<_>, _>>()?;
        let l_bindings = l_kernels
            .iter()
            .map(|k| kernel_bindings(k, l, input))
            .collect::<Result<Vec<_>, _>>()?;
        // The union pass visits every entity of the kind; per-kernel
        // subdomain filters are applied per entity below.
        let entities = entities_of(kind, None, input)?;
        let markers: Vec<Option<usize>> = match kind {
            KernelKind::Cell => entities
                .iter()
                .map(|e| match e {
                    Entity::Cell(c) => input.cell_markers.map(|m| *m.get(*c)),
                    _ => None,
                })
                .collect(),
            // Facet entities do not carry their global facet index, so the
            // marker values are recovered by re-walking the facet list in
            // the same order entities_of produced it.
            _ => facet_pass_markers(kind, &entities, input)?,
        };
        let dofs_per: Vec<Vec<usize>> = entities
            .iter()
            .map(|e| dofs_of(space.dofmap(), e))
            .collect::<Result<Vec<_>, _>>()?;
        let set_diag = kind == KernelKind::Cell;
        let blocks = indexed_map(entities.len(), input.threads, |i| {
            let entity = &entities[i];
            let dofs = &dofs_per[i];
            let n = dofs.len();
            let mut a_loc = vec![0.0; n * n];
            let mut b_loc = vec![0.0; n];
            let mut touched = false;
            for (k, kernel) in a_kernels.iter().enumerate() {
                if kernel_applies(kernel, markers[i]) {
                    let t = eval_entity(kernel, input.mesh, &a_bindings[k], entity)?;
                    for (dst, src) in a_loc.iter_mut().zip(&t) {
                        *dst += src;
                    }
                    touched = true;
                }
            }
            for (k, kernel) in l_kernels.iter().enumerate() {
                if kernel_applies(kernel, markers[i]) {
                    let t = eval_entity(kernel, input.mesh, &l_bindings[k], entity)?;
                    for (dst, src) in b_loc.iter_mut().zip(&t) {
                        *dst += src;
                    }
                    touched = true;
                }
            }
            let constrained = dofs.iter().any(|g| bc.contains_key(g));
            if !touched && !(constrained && set_diag) {
                return Ok(None);
            }
            eliminate_local(&mut a_loc, &mut b_loc, dofs, &bc, set_diag);
            Ok(Some((a_loc, b_loc)))
        })?;
        for (i, block) in blocks.into_iter().enumerate() {
            let Some((a_loc, b_loc)) = block else { continue };
            let dofs = &dofs_per[i];
            mat.add_block(&a_loc, dofs, dofs)?;
            for (bi, &g) in dofs.iter().enumerate() {
                vec[g] += b_loc[bi];
            }
        }
    }
    Ok((mat, vec))
}

/// Marker values for facet entities, aligned with `entities_of(kind, None)`
/// order.
fn facet_pass_markers(
    kind: KernelKind,
    entities: &[Entity],
    input: &AssemblyInput,
) -> Result<Vec<Option<usize>>, AssemblyError> {
    let Some(markers) = input.facet_markers else {
        return Ok(vec![None; entities.len()]);
    };
    let mesh = &**input.mesh;
    let tdim = mesh.tdim();
    let f2c = mesh.connectivity(tdim - 1, tdim)?;
    let mut out = Vec::with_capacity(entities.len());
    let mut cursor = 0usize;
    for f in 0..f2c.len() {
        let ncells = f2c.get(f).len();
        let is_kind = match kind {
            KernelKind::ExteriorFacet => ncells == 1,
            KernelKind::InteriorFacet => ncells == 2,
            KernelKind::Cell => false,
        };
        if is_kind && cursor < entities.len() {
            out.push(Some(*markers.get(f)));
            cursor += 1;
        }
    }
    debug_assert_eq!(out.len(), entities.len());
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct VpOptions {
    /// None selects by symmetry: CG for symmetric forms, BiCGStab
    /// otherwise, Jacobi preconditioned either way.
    pub method: Option<Method>,
    pub rtol: f64,
    pub maxit: Option<usize>,
}

impl Default for VpOptions {
    fn default() -> Self {
        VpOptions { method: None, rtol: 1e-10, maxit: None }
    }
}

fn solver_options(symmetric: bool, vp: &VpOptions) -> SolverOptions {
    let method = vp.method.unwrap_or(if symmetric { Method::Cg } else { Method::BiCgStab });
    SolverOptions { method, rtol: vp.rtol, maxit: vp.maxit, ..Default::default() }
}

/// Solve the linear variational problem a(v,u) = L(v) with the given
/// conditions and return the solution function with the solve report.
pub fn solve_linear_vp(
    a: &Form,
    l: &Form,
    bcs: &[DirichletBC],
    input: &AssemblyInput,
    vp: &VpOptions,
) -> Result<(Function, SolveReport), AssemblyError> {
    let meta = check_form(a)?;
    let space = match input.trial.or(input.test) {
        Some(s) => Arc::clone(s),
        None => FunctionSpace::new(input.mesh, meta.trial.as_ref().ok_or_else(|| {
            AssemblyError::BadProblem("the bilinear form has no trial argument".into())
        })?)?,
    };
    let full = AssemblyInput { test: Some(&space), trial: Some(&space), ..*input };
    let (mat, rhs) = assemble_system(a, l, bcs, &full)?;
    let opts = solver_options(meta.symmetric, vp);
    let (x, report) = solve_linear(&mat, &rhs, &opts)?;
    Ok((Function::from_vector(space, x)?, report))
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub atol: f64,
    pub rtol: f64,
    pub maxit: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { atol: 1e-10, rtol: 1e-9, maxit: 50 }
    }
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

/// Newton iteration on F(u; v) = 0 with Jacobian form J. `unknown_id` names
/// the coefficient standing for u in both forms. Boundary conditions are
/// enforced through the residual: constrained entries become u_i - g_i and
/// the matching Jacobian rows unit rows, which makes the first update land
/// on the boundary data and later updates homogeneous.
pub fn solve_newton_vp(
    residual: &Form,
    jacobian: &Form,
    unknown_id: usize,
    u: &mut Function,
    bcs: &[DirichletBC],
    input: &AssemblyInput,
    vp: &VpOptions,
    newton: &NewtonOptions,
) -> Result<NewtonReport, AssemblyError> {
    let meta_j = check_form(jacobian)?;
    let bc = resolve_bcs(bcs, input.facet_markers)?;
    let space = Arc::clone(u.space());
    let mut history = Vec::new();
    let mut target = 0.0;
    for it in 0..=newton.maxit {
        let mut bound: Vec<(usize, &Function)> = input.coefficients.to_vec();
        bound.push((unknown_id, &*u));
        let full = AssemblyInput {
            test: Some(&space),
            trial: Some(&space),
            coefficients: &bound,
            ..*input
        };
        let mut r = assemble_vector(residual, &full)?;
        for (&dof, &g) in &bc {
            r[dof] = u.vector()[dof] - g;
        }
        let rnorm = crate::la::norm2(&r);
        history.push(rnorm);
        if it == 0 {
            target = (newton.rtol * rnorm).max(newton.atol);
        }
        if rnorm <= target {
            return Ok(NewtonReport { iterations: it, residuals: history });
        }
        if it == newton.maxit {
            break;
        }
        let mut j = assemble_matrix(jacobian, &full)?;
        for &dof in bc.keys() {
            j.zero_row_set_diagonal(dof)?;
        }
        for v in r.iter_mut() {
            *v = -*v;
        }
        let opts = solver_options(meta_j.symmetric, vp);
        let (delta, _) = solve_linear(&j, &r, &opts)?;
        for (ui, di) in u.vector_mut().iter_mut().zip(&delta) {
            *ui += di;
        }
    }
    Err(AssemblyError::NewtonNoConvergence { iterations: newton.maxit, history })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    H10,
}

impl NormKind {
    pub fn parse(s: &str) -> Option<NormKind> {
        match s {
            "l2" | "L2" => Some(NormKind::L2),
            "h1" | "H1" => Some(NormKind::H1),
            "h10" | "H10" => Some(NormKind::H10),
            _ => None,
        }
    }
}

/// Rank-0 form measuring `kind` of a single coefficient with id 0.
fn norm_form(desc: &crate::element::ElementDescriptor, kind: NormKind) -> Form {
    let w = || Expr::Coefficient { id: 0 };
    let val = Expr::Inner(w().boxed(), w().boxed());
    let grad = Expr::Inner(Expr::Grad(w().boxed()).boxed(), Expr::Grad(w().boxed()).boxed());
    let integrand = match kind {
        NormKind::L2 => val,
        NormKind::H10 => grad,
        NormKind::H1 => Expr::Sum(val.boxed(), grad.boxed()),
    };
    Form {
        integrals: vec![Integral { integrand, measure: Measure::Cell, subdomain: None }],
        coefficients: vec![crate::form::CoefficientDecl {
            name: "w".into(),
            kind: CoefficientKind::Element(desc.clone()),
        }],
    }
}

/// Integral norm of a discrete function, by assembling the matching rank-0
/// form.
pub fn function_norm(f: &Function, kind: NormKind) -> Result<f64, AssemblyError> {
    let form = norm_form(f.space().descriptor(), kind);
    let bindings = [(0usize, f)];
    let mut input = AssemblyInput::new(f.space().mesh());
    input.coefficients = &bindings;
    let value = assemble_scalar(&form, &input)?;
    Ok(value.max(0.0).sqrt())
}

/// Norm of u_h minus an exact expression. Both are carried into a space two
/// degrees up (where u_h embeds exactly) and subtracted there.
pub fn errornorm(
    f: &Function,
    exact: &ExpressionDef,
    kind: NormKind,
) -> Result<f64, AssemblyError> {
    let target = elevated_descriptor(f.space().descriptor());
    let space = FunctionSpace::new(f.space().mesh(), &target)?;
    let embedded = interpolate(FieldSource::Function(f), &space)?;
    let mut diff = interpolate(FieldSource::Expression(exact), &space)?;
    for (d, e) in diff.vector_mut().iter_mut().zip(embedded.vector()) {
        *d -= e;
    }
    function_norm(&diff, kind)
}

/// L2 projection: solve (v, u) = (v, source) on `space`.
pub fn project(
    source: FieldSource,
    space: &Arc<FunctionSpace>,
) -> Result<Function, AssemblyError> {
    let desc = space.descriptor().clone();
    let vs = desc.value_size();
    let arg = |slot: usize| Expr::Argument { slot, element: desc.clone() };
    let a = Form {
        integrals: vec![Integral {
            integrand: Expr::Inner(arg(TEST_SLOT).boxed(), arg(TRIAL_SLOT).boxed()),
            measure: Measure::Cell,
            subdomain: None,
        }],
        coefficients: vec![],
    };
    let (kind, binding) = match source {
        FieldSource::Expression(def) => {
            if def.value_size() != vs {
                return Err(AssemblyError::BadProblem(format!(
                    "projecting {} components into a space with {vs}",
                    def.value_size()
                )));
            }
            (CoefficientKind::Expression(def.clone()), None)
        }
        FieldSource::Function(g) => {
            if g.space().value_size() != vs {
                return Err(AssemblyError::BadProblem(format!(
                    "projecting {} components into a space with {vs}",
                    g.space().value_size()
                )));
            }
            (CoefficientKind::Element(g.space().descriptor().clone()), Some(g))
        }
    };
    let l = Form {
        integrals: vec![Integral {
            integrand: Expr::Inner(arg(TEST_SLOT).boxed(), Expr::Coefficient { id: 0 }.boxed()),
            measure: Measure::Cell,
            subdomain: None,
        }],
        coefficients: vec![crate::form::CoefficientDecl { name: "w".into(), kind }],
    };
    let bindings: Vec<(usize, &Function)> = binding.into_iter().map(|g| (0, g)).collect();
    let mut input = AssemblyInput::new(space.mesh());
    input.test = Some(space);
    input.trial = Some(space);
    input.coefficients = &bindings;
    let (f, _) = solve_linear_vp(&a, &l, &[], &input, &VpOptions::default())?;
    Ok(f)
}

#[cfg(test)]
mod tests;
