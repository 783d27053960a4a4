//! The work behind every subcommand: mesh plumbing, form compilation and
//! the steady/transient solve drivers.

use crate::descriptor::{
    self, MeshSpec, ProblemDescriptor, RegionSpec, TransientSpec, ValueSpec,
};
use crate::log;
use crate::{CompileArgs, GenerateArgs, InfoArgs, RefineArgs, SolveArgs};
use femkit::assembly::{
    assemble_matrix, assemble_vector, resolve_bcs, solve_linear_vp, solve_newton_vp,
    AssemblyInput, BcRegion, BcValue, DirichletBC, NewtonOptions, VpOptions,
};
use femkit::compiler::{compile_form, emit_kernel_ir};
use femkit::element::ElementDescriptor;
use femkit::form::{
    bind_constants, check_form, override_degrees, parse_expression, parse_form_file,
    CoefficientKind, Form, FormFile,
};
use femkit::function::{interpolate, split, FieldSource, Function, FunctionSpace};
use femkit::io::{read_function_xml, read_mesh_xml, write_mesh_xml, write_vtk};
use femkit::la::{solve_linear, Method, SolverOptions};
use femkit::mesh::{generate_unit_mesh, Mesh, MeshFunction, UnitShape};
use femkit::CellType;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub type Outcome = Result<(), Box<dyn std::error::Error>>;

fn shape_by_name(name: &str) -> Result<UnitShape, String> {
    match name {
        "interval" => Ok(UnitShape::Interval),
        "square" => Ok(UnitShape::Square),
        "cube" => Ok(UnitShape::Cube),
        other => Err(format!("unknown shape '{other}'; use interval, square or cube")),
    }
}

pub fn mesh_generate(args: &GenerateArgs) -> Outcome {
    let shape = shape_by_name(&args.shape)?;
    let mesh = generate_unit_mesh(shape, &args.divisions)?;
    write_mesh_xml(&args.output, &mesh, &[])?;
    log::info(format!(
        "wrote {}: {} vertices, {} cells",
        args.output.display(),
        mesh.num_vertices(),
        mesh.num_cells()
    ));
    Ok(())
}

pub fn mesh_refine(args: &RefineArgs) -> Outcome {
    let file = read_mesh_xml(&args.mesh)?;
    if !file.markers.is_empty() {
        log::info("note: refinement renumbers entities, markers are dropped");
    }
    let mut mesh = file.mesh;
    for _ in 0..args.times {
        mesh = mesh.refine(None)?;
    }
    write_mesh_xml(&args.output, &mesh, &[])?;
    log::info(format!(
        "wrote {}: {} vertices, {} cells",
        args.output.display(),
        mesh.num_vertices(),
        mesh.num_cells()
    ));
    Ok(())
}

pub fn mesh_info(args: &InfoArgs) -> Outcome {
    let file = read_mesh_xml(&args.mesh)?;
    let mesh = &file.mesh;
    println!("cell type: {}", mesh.cell_type().name());
    println!("geometric dimension: {}", mesh.gdim());
    for d in 0..=mesh.tdim() {
        println!("entities of dimension {d}: {}", mesh.num_entities(d)?);
    }
    println!("volume: {}", mesh.volume()?);
    let mut hmin = f64::INFINITY;
    let mut hmax = 0.0f64;
    for c in 0..mesh.num_cells() {
        let h = mesh.cell_geometry(c)?.h;
        hmin = hmin.min(h);
        hmax = hmax.max(h);
    }
    println!("cell diameter: {hmin} to {hmax}");
    for m in &file.markers {
        println!("marker block: dimension {}, {} entries", m.dim(), m.len());
    }
    Ok(())
}

/// The cell every form in a file lives on: from an argument if there is one,
/// else from the first element-valued coefficient the form uses.
fn form_cell(file: &FormFile, form: &Form) -> Option<CellType> {
    for slot in 0..2 {
        if let Some(e) = form.argument_element(slot) {
            return Some(e.cell());
        }
    }
    for id in form.used_coefficients() {
        if let CoefficientKind::Element(e) = &file.coefficients[id].kind {
            return Some(e.cell());
        }
    }
    None
}

fn load_forms(path: &Path, degree: Option<usize>) -> Result<FormFile, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut file =
        parse_form_file(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(d) = degree {
        override_degrees(&mut file, d);
    }
    Ok(file)
}

fn emit_ir_bundle(
    path: &Path,
    file: &FormFile,
    forms: &BTreeMap<String, Form>,
) -> Outcome {
    let mut names = serde_json::Map::new();
    for (name, form) in forms {
        let cell = form_cell(file, form)
            .ok_or_else(|| format!("form '{name}' names no element"))?;
        let compiled =
            compile_form(form, cell).map_err(|e| format!("form '{name}': {e}"))?;
        let mut kernels = Vec::new();
        for k in &compiled.kernels {
            let v: serde_json::Value = serde_json::from_str(&emit_kernel_ir(k).json)?;
            kernels.push(v);
        }
        names.insert(name.clone(), serde_json::Value::Array(kernels));
    }
    let mut bundle = serde_json::Map::new();
    bundle.insert("schema".into(), "femkit-kir-bundle-1".into());
    bundle.insert("forms".into(), serde_json::Value::Object(names));
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(bundle))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    log::info(format!("wrote {}", path.display()));
    Ok(())
}

pub fn compile(args: &CompileArgs) -> Outcome {
    let file = load_forms(&args.forms, args.degree)?;
    if file.forms.is_empty() {
        return Err(format!("{}: no forms defined", args.forms.display()).into());
    }
    for (name, form) in &file.forms {
        let meta = check_form(form).map_err(|e| format!("form '{name}': {e}"))?;
        let cell = form_cell(&file, form)
            .ok_or_else(|| format!("form '{name}' names no element"))?;
        let compiled =
            compile_form(form, cell).map_err(|e| format!("form '{name}': {e}"))?;
        let symmetry = if compiled.symmetric { ", symmetric" } else { "" };
        println!(
            "form {name}: rank {}, {} kernel(s){symmetry}, quadrature degrees {:?}",
            meta.rank,
            compiled.kernels.len(),
            meta.quadrature_degrees
        );
        for k in &compiled.kernels {
            println!();
            print!("{}", emit_kernel_ir(k).listing);
        }
        println!();
    }
    if let Some(path) = &args.emit_ir {
        emit_ir_bundle(path, &file, &file.forms)?;
    }
    Ok(())
}

/// Everything a driver needs that is independent of which driver runs.
struct Problem {
    desc: ProblemDescriptor,
    dir: PathBuf,
    mesh: Arc<Mesh>,
    cell_markers: Option<MeshFunction<usize>>,
    facet_markers: Option<MeshFunction<usize>>,
    file: FormFile,
    /// Coefficient bindings from the descriptor, by declaration id.
    bindings: Vec<(usize, Function)>,
    vp: VpOptions,
    threads: usize,
    output: Option<PathBuf>,
    no_reuse: bool,
}

impl Problem {
    fn input<'a>(&'a self, refs: &'a [(usize, &'a Function)]) -> AssemblyInput<'a> {
        let mut input = AssemblyInput::new(&self.mesh);
        input.coefficients = refs;
        input.cell_markers = self.cell_markers.as_ref();
        input.facet_markers = self.facet_markers.as_ref();
        input.threads = self.threads;
        input
    }

    fn binding_refs(&self) -> Vec<(usize, &Function)> {
        self.bindings.iter().map(|(id, f)| (*id, f)).collect()
    }

    fn take_binding(&mut self, id: usize) -> Option<Function> {
        let at = self.bindings.iter().position(|(i, _)| *i == id)?;
        Some(self.bindings.remove(at).1)
    }

    fn solver_options(&self, symmetric: bool) -> SolverOptions {
        SolverOptions {
            method: self
                .vp
                .method
                .unwrap_or(if symmetric { Method::Cg } else { Method::BiCgStab }),
            rtol: self.vp.rtol,
            maxit: self.vp.maxit,
            ..SolverOptions::default()
        }
    }
}

fn load_mesh(
    desc: &ProblemDescriptor,
    dir: &Path,
    cli_mesh: Option<&Path>,
) -> Result<(Mesh, Option<MeshFunction<usize>>, Option<MeshFunction<usize>>), Box<dyn std::error::Error>> {
    let from_file = |path: &Path| -> Result<_, Box<dyn std::error::Error>> {
        let file = read_mesh_xml(path)?;
        let tdim = file.mesh.tdim();
        let mut cell = None;
        let mut facet = None;
        for m in file.markers {
            if m.dim() == tdim && cell.is_none() {
                cell = Some(m);
            } else if m.dim() + 1 == tdim && facet.is_none() {
                facet = Some(m);
            } else {
                log::debug(format!("ignoring extra marker block of dimension {}", m.dim()));
            }
        }
        Ok((file.mesh, cell, facet))
    };
    if let Some(path) = cli_mesh {
        return from_file(path);
    }
    match &desc.mesh {
        MeshSpec::File { file } => from_file(&descriptor::resolve(dir, file)),
        MeshSpec::Generate { generate } => {
            let shape = shape_by_name(&generate.shape)?;
            let mesh = generate_unit_mesh(shape, &generate.divisions)?;
            Ok((mesh, None, None))
        }
    }
}

fn build_function(
    name: &str,
    spec: &ValueSpec,
    element: &ElementDescriptor,
    mesh: &Arc<Mesh>,
    dir: &Path,
) -> Result<Function, Box<dyn std::error::Error>> {
    let space = FunctionSpace::new(mesh, element)?;
    match spec {
        ValueSpec::Constant { constant } => {
            let texts: Vec<String> =
                constant.to_vec().iter().map(|v| format!("{v:?}")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let def = parse_expression(&refs, Some(0))?;
            check_components(name, def.value_size(), element)?;
            Ok(interpolate(FieldSource::Expression(&def), &space)?)
        }
        ValueSpec::Expression { expression, degree } => {
            let texts = expression.to_vec();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let def = parse_expression(&refs, *degree)
                .map_err(|e| format!("coefficient '{name}': {e}"))?;
            check_components(name, def.value_size(), element)?;
            Ok(interpolate(FieldSource::Expression(&def), &space)?)
        }
        ValueSpec::File { file } => {
            let path = descriptor::resolve(dir, file);
            let f = read_function_xml(&path, mesh)?;
            if f.space().descriptor() != element {
                return Err(format!(
                    "{} holds a {} field, coefficient '{name}' wants {element}",
                    path.display(),
                    f.space().descriptor()
                )
                .into());
            }
            Ok(f)
        }
    }
}

fn check_components(
    name: &str,
    got: usize,
    element: &ElementDescriptor,
) -> Result<(), String> {
    if got != element.value_size() {
        return Err(format!(
            "coefficient '{name}' has {got} component(s), element {element} wants {}",
            element.value_size()
        ));
    }
    Ok(())
}

fn build_bindings(
    desc: &ProblemDescriptor,
    file: &FormFile,
    mesh: &Arc<Mesh>,
    dir: &Path,
) -> Result<Vec<(usize, Function)>, Box<dyn std::error::Error>> {
    let mut out = Vec::new();
    for (name, spec) in &desc.coefficients {
        let id = file
            .coefficients
            .iter()
            .position(|d| &d.name == name)
            .ok_or_else(|| {
                format!("the form file declares no coefficient named '{name}'")
            })?;
        let element = match &file.coefficients[id].kind {
            CoefficientKind::Element(e) => e.clone(),
            CoefficientKind::Scalar(_) => {
                return Err(format!(
                    "'{name}' is a declared constant; set it under \"constants\""
                )
                .into())
            }
            CoefficientKind::Expression(_) => {
                return Err(format!(
                    "'{name}' is already an expression in the form file"
                )
                .into())
            }
        };
        out.push((id, build_function(name, spec, &element, mesh, dir)?));
    }
    Ok(out)
}

fn build_bcs(problem: &Problem, space: &Arc<FunctionSpace>) -> Result<Vec<DirichletBC>, Box<dyn std::error::Error>> {
    let mut bcs = Vec::new();
    for (at, spec) in problem.desc.bcs.iter().enumerate() {
        let value = match &spec.value {
            ValueSpec::Constant { constant } => BcValue::Constant(constant.to_vec()),
            ValueSpec::Expression { expression, degree } => {
                let texts = expression.to_vec();
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                let def = parse_expression(&refs, *degree)
                    .map_err(|e| format!("bc {at}: {e}"))?;
                BcValue::Expression(def)
            }
            ValueSpec::File { file } => {
                let path = descriptor::resolve(&problem.dir, file);
                BcValue::Field(read_function_xml(&path, &problem.mesh)?)
            }
        };
        let region = match &spec.region {
            RegionSpec::Named(name) if name == "boundary" => BcRegion::Boundary,
            RegionSpec::Named(name) => {
                return Err(format!(
                    "bc {at}: unknown region '{name}'; use \"boundary\", \
                     {{\"marker\": id}}, {{\"zero\": expr}} or {{\"point\": [..]}}"
                )
                .into())
            }
            RegionSpec::Marker { marker } => BcRegion::Marker(*marker),
            RegionSpec::OnZero { zero, tol } => {
                let def = parse_expression(&[zero.as_str()], None)
                    .map_err(|e| format!("bc {at}: {e}"))?;
                if def.value_size() != 1 {
                    return Err(format!("bc {at}: the zero test must be scalar").into());
                }
                let tol = *tol;
                BcRegion::Predicate(Box::new(move |x| def.eval(0, x).abs() <= tol))
            }
            RegionSpec::Point { point } => BcRegion::Point(point.clone()),
        };
        bcs.push(if spec.component.is_empty() {
            DirichletBC::new(space, value, region)
        } else {
            DirichletBC::on_component(space, spec.component.clone(), value, region)
        });
    }
    Ok(bcs)
}

fn numbered(path: &Path, step: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("solution");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("vtk");
    path.with_file_name(format!("{stem}_{step:04}.{ext}"))
}

fn write_solution(
    path: &Path,
    mesh: &Arc<Mesh>,
    u: &Function,
    label: &str,
) -> Outcome {
    if let ElementDescriptor::Mixed { .. } = u.space().descriptor() {
        let parts = split(u)?;
        let names: Vec<String> =
            (0..parts.len()).map(|i| format!("{label}{i}")).collect();
        let fields: Vec<(&str, &Function)> = names
            .iter()
            .zip(&parts)
            .map(|(n, f)| (n.as_str(), f))
            .collect();
        write_vtk(path, mesh, &fields)?;
    } else {
        write_vtk(path, mesh, &[(label, u)])?;
    }
    log::info(format!("wrote {}", path.display()));
    Ok(())
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let desc = descriptor::load(&args.problem)?;
    let dir = args
        .problem
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let (mesh, cell_markers, facet_markers) =
        load_mesh(&desc, &dir, args.mesh.as_deref())?;
    let mesh = Arc::new(mesh);
    log::debug(format!(
        "mesh: {} {} cells, {} vertices",
        mesh.num_cells(),
        mesh.cell_type().name(),
        mesh.num_vertices()
    ));

    let file = load_forms(&descriptor::resolve(&dir, &desc.forms), args.degree)?;

    let method = match args.solver.as_deref().or(desc.solver.method.as_deref()) {
        Some(s) => Some(
            Method::parse(s).ok_or_else(|| format!("unknown solver '{s}'"))?,
        ),
        None => None,
    };
    let vp = VpOptions {
        method,
        rtol: args.rtol.or(desc.solver.rtol).unwrap_or(1e-10),
        maxit: args.maxit.or(desc.solver.maxit),
    };
    let threads = args.threads.or(desc.solver.threads).unwrap_or(1);
    let output = args
        .output
        .clone()
        .or_else(|| desc.output.as_ref().map(|p| descriptor::resolve(&dir, p)));

    let bindings = build_bindings(&desc, &file, &mesh, &dir)?;
    let mut problem = Problem {
        desc,
        dir,
        mesh,
        cell_markers,
        facet_markers,
        file,
        bindings,
        vp,
        threads,
        output,
        no_reuse: args.no_reuse_matrix,
    };

    // Scalars fold into the forms once; the transient driver re-folds with
    // the step size and theta added.
    let constants = problem.desc.constants.clone();
    let bound: BTreeMap<String, Form> = problem
        .file
        .forms
        .iter()
        .map(|(name, form)| (name.clone(), bind_constants(form, &constants)))
        .collect();

    if let Some(path) = &args.emit_ir {
        emit_ir_bundle(path, &problem.file, &bound)?;
    }

    if problem.desc.transient.is_some() {
        if !(bound.contains_key("a") && bound.contains_key("L")) {
            return Err("a transient run needs forms named 'a' and 'L'".into());
        }
        solve_transient(&mut problem, &constants)
    } else if bound.contains_key("F") && bound.contains_key("J") {
        solve_newton(&mut problem, &bound["F"], &bound["J"])
    } else if bound.contains_key("a") && bound.contains_key("L") {
        solve_steady(&problem, &bound["a"], &bound["L"])
    } else {
        Err("the form file defines neither 'a' and 'L' nor 'F' and 'J'".into())
    }
}

fn trial_space(
    problem: &Problem,
    form: &Form,
    name: &str,
) -> Result<Arc<FunctionSpace>, Box<dyn std::error::Error>> {
    let meta = check_form(form).map_err(|e| format!("form '{name}': {e}"))?;
    let descr = meta
        .trial
        .ok_or_else(|| format!("form '{name}' has no trial function"))?;
    Ok(FunctionSpace::new(&problem.mesh, &descr)?)
}

fn solve_steady(problem: &Problem, a: &Form, l: &Form) -> Outcome {
    let space = trial_space(problem, a, "a")?;
    let bcs = build_bcs(problem, &space)?;
    let refs = problem.binding_refs();
    let mut input = problem.input(&refs);
    input.test = Some(&space);
    input.trial = Some(&space);
    let (u, report) = solve_linear_vp(a, l, &bcs, &input, &problem.vp)?;
    log::info(format!(
        "solved: {} iterations, residual {:.3e}",
        report.iterations, report.residual
    ));
    if let Some(path) = &problem.output {
        write_solution(path, &problem.mesh, &u, &problem.desc.unknown)?;
    }
    Ok(())
}

fn solve_newton(problem: &mut Problem, residual: &Form, jacobian: &Form) -> Outcome {
    let unknown = problem.desc.unknown.clone();
    let id = residual
        .coefficient_named(&unknown)
        .ok_or_else(|| format!("form 'F' never uses coefficient '{unknown}'"))?;
    let descr = match &problem.file.coefficients[id].kind {
        CoefficientKind::Element(e) => e.clone(),
        _ => return Err(format!("'{unknown}' is not an element coefficient").into()),
    };
    let space = FunctionSpace::new(&problem.mesh, &descr)?;
    let mut u = match problem.take_binding(id) {
        Some(f) => f,
        None => Function::new(Arc::clone(&space)),
    };
    let bcs = build_bcs(problem, &space)?;
    let newton = NewtonOptions {
        atol: problem.desc.newton.atol.unwrap_or(1e-10),
        rtol: problem.desc.newton.rtol.unwrap_or(1e-9),
        maxit: problem.desc.newton.maxit.unwrap_or(50),
    };
    let refs = problem.binding_refs();
    let input = problem.input(&refs);
    let report =
        solve_newton_vp(residual, jacobian, id, &mut u, &bcs, &input, &problem.vp, &newton)?;
    log::info(format!(
        "newton converged: {} iterations, residual {:.3e}",
        report.iterations,
        report.residuals.last().copied().unwrap_or(0.0)
    ));
    for (it, r) in report.residuals.iter().enumerate() {
        log::debug(format!("  iteration {it}: residual {r:.6e}"));
    }
    if let Some(path) = &problem.output {
        write_solution(path, &problem.mesh, &u, &unknown)?;
    }
    Ok(())
}

fn solve_transient(problem: &mut Problem, constants: &BTreeMap<String, f64>) -> Outcome {
    let spec = problem.desc.transient.take().expect("checked by caller");
    let steps = (spec.t_end / spec.dt).round();
    if steps < 1.0 || (steps * spec.dt - spec.t_end).abs() > 1e-8 * spec.t_end.abs() {
        return Err(format!(
            "t_end = {} is not a whole number of steps of dt = {}",
            spec.t_end, spec.dt
        )
        .into());
    }
    let steps = steps as usize;

    // The step size and theta override any descriptor constants of the same
    // name: the transient block is authoritative.
    let mut constants = constants.clone();
    constants.insert("k".into(), spec.dt);
    constants.insert("theta".into(), spec.theta);
    let a = bind_constants(&problem.file.forms["a"], &constants);
    let l = bind_constants(&problem.file.forms["L"], &constants);
    let meta = check_form(&a).map_err(|e| format!("form 'a': {e}"))?;

    let space = trial_space(problem, &a, "a")?;
    let prev_id = a
        .coefficient_named(&spec.previous)
        .ok_or_else(|| {
            format!("the form file declares no coefficient named '{}'", spec.previous)
        })?;
    match &problem.file.coefficients[prev_id].kind {
        CoefficientKind::Element(e) if e == space.descriptor() => {}
        CoefficientKind::Element(e) => {
            return Err(format!(
                "previous-step coefficient '{}' is {e}, the trial space is {}",
                spec.previous,
                space.descriptor()
            )
            .into())
        }
        _ => {
            return Err(format!(
                "'{}' is not an element coefficient",
                spec.previous
            )
            .into())
        }
    }

    let initial = match problem.take_binding(prev_id) {
        Some(f) => f,
        None => match &spec.initial {
            Some(vs) => build_function(
                &spec.previous,
                vs,
                space.descriptor(),
                &problem.mesh,
                &problem.dir,
            )?,
            None => Function::new(Arc::clone(&space)),
        },
    };
    let bcs = build_bcs(problem, &space)?;
    let base_refs = problem.binding_refs();

    if let Some(path) = &problem.output {
        write_solution(&numbered(path, 0), &problem.mesh, &initial, &problem.desc.unknown)?;
    }

    // The matrix is constant in time unless the bilinear form reads the
    // previous step; assemble it once and keep an untouched copy for the
    // Dirichlet lift.
    let reuse = !problem.no_reuse && !a.used_coefficients().contains(&prev_id);
    log::debug(format!(
        "matrix {} across steps",
        if reuse { "reused" } else { "reassembled" }
    ));

    let mut prev_vec = initial.vector().to_vec();
    let mut total_iterations = 0usize;

    if reuse {
        let (mat, bc_map, lift) = {
            let first = Function::from_vector(Arc::clone(&space), prev_vec.clone())?;
            let mut refs = base_refs.clone();
            refs.push((prev_id, &first));
            let mut input = problem.input(&refs);
            input.test = Some(&space);
            input.trial = Some(&space);
            let mut mat = assemble_matrix(&a, &input)?;
            let lift_mat = mat.clone();
            let bc_map = resolve_bcs(&bcs, problem.facet_markers.as_ref())?;
            // Columns first: zeroing them afterwards would erase the unit
            // diagonal the row pass just set.
            for &d in bc_map.keys() {
                mat.zero_column(d);
            }
            for &d in bc_map.keys() {
                mat.zero_row_set_diagonal(d)?;
            }
            let mut g = vec![0.0; space.dim()];
            for (&d, &v) in &bc_map {
                g[d] = v;
            }
            (mat, bc_map, lift_mat.matvec(&g))
        };
        let opts = problem.solver_options(meta.symmetric);

        for step in 1..=steps {
            let prev = Function::from_vector(Arc::clone(&space), prev_vec.clone())?;
            let mut refs = base_refs.clone();
            refs.push((prev_id, &prev));
            let mut input = problem.input(&refs);
            input.test = Some(&space);
            input.trial = Some(&space);
            let mut b = assemble_vector(&l, &input)?;
            for (bj, lj) in b.iter_mut().zip(&lift) {
                *bj -= lj;
            }
            for (&d, &v) in &bc_map {
                b[d] = v;
            }
            let (x, report) = solve_linear(&mat, &b, &opts)?;
            total_iterations += report.iterations;
            prev_vec = x;
            step_output(problem, &space, &prev_vec, step, steps, &spec)?;
        }
    } else {
        for step in 1..=steps {
            let prev = Function::from_vector(Arc::clone(&space), prev_vec.clone())?;
            let mut refs = base_refs.clone();
            refs.push((prev_id, &prev));
            let mut input = problem.input(&refs);
            input.test = Some(&space);
            input.trial = Some(&space);
            let (u, report) = solve_linear_vp(&a, &l, &bcs, &input, &problem.vp)?;
            total_iterations += report.iterations;
            prev_vec = u.vector().to_vec();
            step_output(problem, &space, &prev_vec, step, steps, &spec)?;
        }
    }

    log::info(format!(
        "{steps} steps of {} to t = {}, {} linear iterations in total",
        spec.dt, spec.t_end, total_iterations
    ));
    Ok(())
}

fn step_output(
    problem: &Problem,
    space: &Arc<FunctionSpace>,
    vec: &[f64],
    step: usize,
    steps: usize,
    spec: &TransientSpec,
) -> Outcome {
    log::debug(format!("step {step}: t = {}", step as f64 * spec.dt));
    if step % spec.output_every.max(1) != 0 && step != steps {
        return Ok(());
    }
    if let Some(path) = &problem.output {
        let u = Function::from_vector(Arc::clone(space), vec.to_vec())?;
        write_solution(&numbered(path, step), &problem.mesh, &u, &problem.desc.unknown)?;
    }
    Ok(())
}
