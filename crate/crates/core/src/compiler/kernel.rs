//! Executable element kernels and their construction from checked forms.

use crate::compiler::lower::{lower_integrand, LowerCtx};
use crate::compiler::quadrature::quadrature_rule;
use crate::compiler::CompilerError;
use crate::element::{create_element, ElementDescriptor, FiniteElement};
use crate::form::{check_form, CoefficientKind, Expr, Form, FormMetadata, Func, Measure};
use crate::mesh::geometry;
use crate::reference::CellType;

/// Which measure a kernel integrates over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Cell,
    ExteriorFacet,
    InteriorFacet,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Cell => "cell",
            KernelKind::ExteriorFacet => "exterior_facet",
            KernelKind::InteriorFacet => "interior_facet",
        }
    }
}

/// Which tabulated role a basis op reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum RoleId {
    Test,
    Trial,
}

/// One scalar tape instruction. Register k holds the result of op k; operand
/// fields index earlier registers.
#[derive(Clone, Debug, PartialEq)]
pub(super) enum Op {
    Const(f64),
    /// Physical coordinate component at the current quadrature point.
    Coord(usize),
    /// Facet normal component, oriented outward from the '+' cell.
    Normal(usize),
    /// Diameter of the cell on the given side (0 = '+', 1 = '-').
    CellSize(usize),
    BasisValue { role: RoleId, comp: usize, side: usize },
    /// Physical-gradient component of a basis function.
    BasisGrad { role: RoleId, comp: usize, dir: usize, side: usize },
    CoefValue { coef: usize, comp: usize, side: usize },
    CoefGrad { coef: usize, comp: usize, dir: usize, side: usize },
    Add(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Pow(usize, i32),
    Call(Func, usize),
}

/// Basis tables for one element role, tabulated at every point variant the
/// kernel can touch: cell kernels hold one variant, facet kernels one per
/// local facet, interior-facet kernels one per (facet, vertex permutation).
#[derive(Clone, Debug)]
pub(super) struct RoleTables {
    pub(super) element: ElementDescriptor,
    pub(super) space_dim: usize,
    pub(super) value_size: usize,
    /// values[facet][perm][(q * space_dim + dof) * value_size + comp]
    pub(super) values: Vec<Vec<Vec<f64>>>,
    /// grads[facet][perm][((q * space_dim + dof) * value_size + comp) * tdim + dir]
    pub(super) grads: Vec<Vec<Vec<f64>>>,
}

impl RoleTables {
    #[inline]
    fn value(&self, f: usize, p: usize, q: usize, dof: usize, comp: usize) -> f64 {
        self.values[f][p][(q * self.space_dim + dof) * self.value_size + comp]
    }

    #[inline]
    fn grad(&self, f: usize, p: usize, q: usize, dof: usize, comp: usize, dir: usize, tdim: usize) -> f64 {
        self.grads[f][p][((q * self.space_dim + dof) * self.value_size + comp) * tdim + dir]
    }
}

/// A coefficient the kernel reads local dof values for at execution time.
#[derive(Clone, Debug)]
pub(super) struct CoefTables {
    /// Index into the form's coefficient declarations.
    pub(super) id: usize,
    pub(super) tables: RoleTables,
}

/// A compiled integral: quadrature, tabulated basis data and a flat scalar
/// tape. Immutable once built; `tabulate_tensor` is pure and reentrant.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub(super) kind: KernelKind,
    pub(super) cell: CellType,
    pub(super) subdomain: Option<usize>,
    pub(super) degree: usize,
    /// Rule points in reference coordinates of the integration domain:
    /// the cell for cell kernels, the reference facet otherwise.
    pub(super) points: Vec<f64>,
    pub(super) weights: Vec<f64>,
    /// Measure of the reference facet (1 for vertices and intervals, 1/2
    /// for triangles); facet weights sum to this.
    pub(super) ref_facet_volume: f64,
    /// Rule points embedded in cell reference coordinates, one set per
    /// table variant: ref_points[facet][perm][q * tdim + d].
    pub(super) ref_points: Vec<Vec<Vec<f64>>>,
    pub(super) rank: usize,
    pub(super) test: Option<RoleTables>,
    pub(super) trial: Option<RoleTables>,
    pub(super) coefs: Vec<CoefTables>,
    pub(super) tape: Vec<Op>,
}

/// All kernels for one form, one per (measure, subdomain) group in order of
/// first appearance. Integrands sharing a group are merged into one tape.
#[derive(Clone, Debug)]
pub struct CompiledForm {
    pub rank: usize,
    pub test: Option<ElementDescriptor>,
    pub trial: Option<ElementDescriptor>,
    pub symmetric: bool,
    pub kernels: Vec<Kernel>,
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn cell(&self) -> CellType {
        self.cell
    }

    pub fn subdomain(&self) -> Option<usize> {
        self.subdomain
    }

    pub fn quadrature_degree(&self) -> usize {
        self.degree
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_quadrature_points(&self) -> usize {
        self.weights.len()
    }

    /// Output tensor dimensions (rows, cols); interior-facet kernels produce
    /// the two-cell macro tensor, rank-deficient dimensions are 1.
    pub fn shape(&self) -> (usize, usize) {
        let two = if self.kind == KernelKind::InteriorFacet { 2 } else { 1 };
        let rows = self.test.as_ref().map_or(1, |t| two * t.space_dim);
        let cols = if self.rank == 2 {
            self.trial.as_ref().map_or(1, |t| two * t.space_dim)
        } else {
            1
        };
        (rows, cols)
    }

    /// Coefficients the kernel needs values for: (form coefficient id,
    /// element, local values expected per call). Interior-facet kernels take
    /// the '+' cell's dofs followed by the '-' cell's.
    pub fn coefficients(&self) -> Vec<(usize, ElementDescriptor, usize)> {
        let two = if self.kind == KernelKind::InteriorFacet { 2 } else { 1 };
        self.coefs
            .iter()
            .map(|c| (c.id, c.tables.element.clone(), two * c.tables.space_dim))
            .collect()
    }

    /// Evaluate the element tensor for one cell (or facet, or facet pair).
    ///
    /// `coords` holds the '+' cell's vertex coordinates, flat and row major.
    /// `facet` names the local facet for facet kernels; `neighbor` supplies
    /// the '-' cell and its local facet for interior-facet kernels. The two
    /// cells must share the facet vertex for vertex; quadrature points are
    /// aligned across it by matching physical vertex coordinates to 1e-10.
    /// `out` is overwritten with the rows*cols tensor, row major.
    pub fn tabulate_tensor(
        &self,
        coords: &[f64],
        facet: Option<usize>,
        neighbor: Option<(&[f64], usize)>,
        coefficients: &[&[f64]],
        out: &mut [f64],
    ) -> Result<(), CompilerError> {
        let tdim = self.cell.tdim();
        let gdim = tdim;
        let nv = tdim + 1;
        if coords.len() != nv * gdim {
            return Err(CompilerError::BadInput(format!(
                "expected {} cell coordinates, got {}",
                nv * gdim,
                coords.len()
            )));
        }
        let (rows, cols) = self.shape();
        if out.len() != rows * cols {
            return Err(CompilerError::BadInput(format!(
                "output tensor has {} entries, kernel produces {}",
                out.len(),
                rows * cols
            )));
        }
        if coefficients.len() != self.coefs.len() {
            return Err(CompilerError::BadInput(format!(
                "kernel takes {} coefficients, got {}",
                self.coefs.len(),
                coefficients.len()
            )));
        }

        // Facet/permutation variant per side, geometry per side.
        let (facet_p, coords_m, facet_m) = match self.kind {
            KernelKind::Cell => {
                if facet.is_some() || neighbor.is_some() {
                    return Err(CompilerError::BadInput(
                        "cell kernel takes no facet or neighbor".into(),
                    ));
                }
                (0, None, 0)
            }
            KernelKind::ExteriorFacet => {
                let f = facet.ok_or_else(|| {
                    CompilerError::BadInput("facet kernel needs a local facet index".into())
                })?;
                if neighbor.is_some() {
                    return Err(CompilerError::BadInput(
                        "exterior facet kernel takes no neighbor".into(),
                    ));
                }
                (f, None, 0)
            }
            KernelKind::InteriorFacet => {
                let f = facet.ok_or_else(|| {
                    CompilerError::BadInput("facet kernel needs a local facet index".into())
                })?;
                let (cm, fm) = neighbor.ok_or_else(|| {
                    CompilerError::BadInput("interior facet kernel needs the '-' cell".into())
                })?;
                if cm.len() != nv * gdim {
                    return Err(CompilerError::BadInput(format!(
                        "expected {} neighbor coordinates, got {}",
                        nv * gdim,
                        cm.len()
                    )));
                }
                (f, Some(cm), fm)
            }
        };
        if self.kind != KernelKind::Cell {
            let nfacets = self.cell.num_sub_entities(tdim - 1);
            if facet_p >= nfacets || facet_m >= nfacets {
                return Err(CompilerError::BadInput(format!(
                    "local facet out of range for {}",
                    self.cell.name()
                )));
            }
        }

        let geom_p = side_geometry(coords, tdim, gdim)?;
        let geom_m = match coords_m {
            Some(cm) => Some(side_geometry(cm, tdim, gdim)?),
            None => None,
        };

        // Table variant per side: the '+' side always uses the natural facet
        // vertex order; the '-' side's permutation is recovered by matching
        // physical facet vertices.
        let variant = |f: usize| if self.kind == KernelKind::Cell { (0, 0) } else { (f, 0) };
        let (vf_p, vp_p) = variant(facet_p);
        let (vf_m, vp_m) = match coords_m {
            Some(cm) => {
                let perm = match_facet_permutation(self.cell, coords, facet_p, cm, facet_m, gdim)?;
                (facet_m, perm)
            }
            None => (0, 0),
        };

        let nq = self.weights.len();
        // Per-point physical coordinates and measure-scaled weights, from the
        // '+' side.
        let mut x = vec![0.0; nq * gdim];
        for q in 0..nq {
            let xi = &self.ref_points[vf_p][vp_p][q * tdim..(q + 1) * tdim];
            for c in 0..gdim {
                let mut v = coords[c];
                for (d, xi_d) in xi.iter().enumerate() {
                    v += geom_p.j[c * tdim + d] * xi_d;
                }
                x[q * gdim + c] = v;
            }
        }
        let mut scale = vec![0.0; nq];
        let mut normal = vec![0.0; gdim];
        match self.kind {
            KernelKind::Cell => {
                for q in 0..nq {
                    scale[q] = self.weights[q] * geom_p.detj.abs();
                }
            }
            _ => {
                let pts = facet_points(coords, self.cell, facet_p, gdim);
                let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
                let cell_pts: Vec<&[f64]> =
                    (0..nv).map(|i| &coords[i * gdim..(i + 1) * gdim]).collect();
                let measure = geometry::facet_measure(&refs);
                normal = geometry::outward_normal(&refs, &cell_pts, gdim);
                for q in 0..nq {
                    scale[q] = self.weights[q] * measure / self.ref_facet_volume;
                }
            }
        }

        // Physical gradients per role and side, and per-coefficient scratch.
        let sides = if self.kind == KernelKind::InteriorFacet { 2 } else { 1 };
        let jinv_of = |s: usize| -> &[f64] {
            if s == 0 {
                &geom_p.jinv
            } else {
                &geom_m.as_ref().unwrap().jinv
            }
        };
        let variant_of = |s: usize| if s == 0 { (vf_p, vp_p) } else { (vf_m, vp_m) };
        let mut pg_test: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut pg_trial: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for s in 0..sides {
            if let Some(t) = &self.test {
                pg_test[s] = physical_gradients(t, variant_of(s), jinv_of(s), nq, tdim, gdim);
            }
            if self.rank == 2 {
                if let Some(t) = &self.trial {
                    pg_trial[s] = physical_gradients(t, variant_of(s), jinv_of(s), nq, tdim, gdim);
                }
            }
        }
        for (k, ct) in self.coefs.iter().enumerate() {
            let want = sides * ct.tables.space_dim;
            if coefficients[k].len() != want {
                return Err(CompilerError::BadInput(format!(
                    "coefficient {} expects {} local values, got {}",
                    ct.id,
                    want,
                    coefficients[k].len()
                )));
            }
        }

        let h = [
            geom_p.h,
            geom_m.as_ref().map_or(geom_p.h, |g| g.h),
        ];
        let n_test = self.test.as_ref().map_or(0, |t| t.space_dim);
        let n_trial = self.trial.as_ref().map_or(0, |t| t.space_dim);

        let mut regs = vec![0.0; self.tape.len()];
        // coef_vals[k][side * vs + comp], coef_grads[k][(side * vs + comp) * gdim + d]
        let mut coef_vals: Vec<Vec<f64>> = Vec::with_capacity(self.coefs.len());
        let mut coef_grads: Vec<Vec<f64>> = Vec::with_capacity(self.coefs.len());
        for ct in &self.coefs {
            coef_vals.push(vec![0.0; sides * ct.tables.value_size]);
            coef_grads.push(vec![0.0; sides * ct.tables.value_size * gdim]);
        }

        out.fill(0.0);
        for q in 0..nq {
            for (k, ct) in self.coefs.iter().enumerate() {
                let t = &ct.tables;
                let (sd, vs) = (t.space_dim, t.value_size);
                for s in 0..sides {
                    let (f, p) = variant_of(s);
                    let dofs = &coefficients[k][s * sd..(s + 1) * sd];
                    let jinv = jinv_of(s);
                    for comp in 0..vs {
                        let mut val = 0.0;
                        let mut rg = [0.0; 3];
                        for (i, w) in dofs.iter().enumerate() {
                            val += w * t.value(f, p, q, i, comp);
                            for (a, rg_a) in rg.iter_mut().enumerate().take(tdim) {
                                *rg_a += w * t.grad(f, p, q, i, comp, a, tdim);
                            }
                        }
                        coef_vals[k][s * vs + comp] = val;
                        for d in 0..gdim {
                            let mut g = 0.0;
                            for (a, rg_a) in rg.iter().enumerate().take(tdim) {
                                g += rg_a * jinv[a * gdim + d];
                            }
                            coef_grads[k][(s * vs + comp) * gdim + d] = g;
                        }
                    }
                }
            }

            for i in 0..rows {
                for j in 0..cols {
                    let mut val = 0.0;
                    for (r, op) in self.tape.iter().enumerate() {
                        val = match *op {
                            Op::Const(v) => v,
                            Op::Coord(c) => x[q * gdim + c],
                            Op::Normal(c) => normal[c],
                            Op::CellSize(s) => h[s],
                            Op::BasisValue { role, comp, side } => {
                                let (idx, n, tab) = match role {
                                    RoleId::Test => (i, n_test, self.test.as_ref().unwrap()),
                                    RoleId::Trial => (j, n_trial, self.trial.as_ref().unwrap()),
                                };
                                if idx / n != side {
                                    0.0
                                } else {
                                    let (f, p) = variant_of(side);
                                    tab.value(f, p, q, idx % n, comp)
                                }
                            }
                            Op::BasisGrad { role, comp, dir, side } => {
                                let (idx, n, tab, pg) = match role {
                                    RoleId::Test => {
                                        (i, n_test, self.test.as_ref().unwrap(), &pg_test)
                                    }
                                    RoleId::Trial => {
                                        (j, n_trial, self.trial.as_ref().unwrap(), &pg_trial)
                                    }
                                };
                                if idx / n != side {
                                    0.0
                                } else {
                                    let vs = tab.value_size;
                                    pg[side][((q * n + idx % n) * vs + comp) * gdim + dir]
                                }
                            }
                            Op::CoefValue { coef, comp, side } => {
                                let vs = self.coefs[coef].tables.value_size;
                                coef_vals[coef][side * vs + comp]
                            }
                            Op::CoefGrad { coef, comp, dir, side } => {
                                let vs = self.coefs[coef].tables.value_size;
                                coef_grads[coef][(side * vs + comp) * gdim + dir]
                            }
                            Op::Add(a, b) => regs[a] + regs[b],
                            Op::Mul(a, b) => regs[a] * regs[b],
                            Op::Div(a, b) => regs[a] / regs[b],
                            Op::Neg(a) => -regs[a],
                            Op::Pow(a, k) => regs[a].powi(k),
                            Op::Call(f, a) => f.apply(regs[a]),
                        };
                        regs[r] = val;
                    }
                    out[i * cols + j] += scale[q] * val;
                }
            }
        }
        Ok(())
    }
}

struct SideGeometry {
    j: Vec<f64>,
    jinv: Vec<f64>,
    detj: f64,
    h: f64,
}

fn side_geometry(coords: &[f64], tdim: usize, gdim: usize) -> Result<SideGeometry, CompilerError> {
    let (j, detj, jinv) = geometry::affine_map(coords, tdim, gdim);
    let pts: Vec<&[f64]> = (0..=tdim).map(|i| &coords[i * gdim..(i + 1) * gdim]).collect();
    let h = geometry::diameter(&pts);
    // Relative test: |det J| scales like h^tdim.
    if h == 0.0 || detj.abs() <= 1e-14 * h.powi(tdim as i32) {
        return Err(CompilerError::DegenerateCell { detj });
    }
    Ok(SideGeometry { j, jinv, detj, h })
}

fn facet_points(coords: &[f64], cell: CellType, facet: usize, gdim: usize) -> Vec<Vec<f64>> {
    cell.sub_entities(cell.tdim() - 1)[facet]
        .iter()
        .map(|&v| coords[v * gdim..(v + 1) * gdim].to_vec())
        .collect()
}

/// Vertex permutations of a k-vertex facet in lexicographic order; the
/// table-variant index for the '-' side of an interior facet.
pub(super) fn facet_permutations(k: usize) -> &'static [&'static [usize]] {
    match k {
        1 => &[&[0]],
        2 => &[&[0, 1], &[1, 0]],
        3 => &[
            &[0, 1, 2],
            &[0, 2, 1],
            &[1, 0, 2],
            &[1, 2, 0],
            &[2, 0, 1],
            &[2, 1, 0],
        ],
        _ => unreachable!(),
    }
}

/// Find the '-' side permutation that makes its embedded quadrature points
/// coincide with the '+' side's, by matching physical facet vertices.
fn match_facet_permutation(
    cell: CellType,
    coords_p: &[f64],
    facet_p: usize,
    coords_m: &[f64],
    facet_m: usize,
    gdim: usize,
) -> Result<usize, CompilerError> {
    let pts_p = facet_points(coords_p, cell, facet_p, gdim);
    let pts_m = facet_points(coords_m, cell, facet_m, gdim);
    let k = pts_p.len();
    let mut perm = vec![usize::MAX; k];
    for (i, p) in pts_p.iter().enumerate() {
        for (j, m) in pts_m.iter().enumerate() {
            if p.iter().zip(m).all(|(a, b)| (a - b).abs() <= 1e-10) {
                perm[i] = j;
                break;
            }
        }
        if perm[i] == usize::MAX {
            return Err(CompilerError::BadInput(
                "facet vertices of the two cells do not coincide".into(),
            ));
        }
    }
    facet_permutations(k)
        .iter()
        .position(|p| p == &perm.as_slice())
        .ok_or_else(|| {
            CompilerError::BadInput("facet vertices of the two cells do not coincide".into())
        })
}

fn physical_gradients(
    tables: &RoleTables,
    (f, p): (usize, usize),
    jinv: &[f64],
    nq: usize,
    tdim: usize,
    gdim: usize,
) -> Vec<f64> {
    let (sd, vs) = (tables.space_dim, tables.value_size);
    let mut pg = vec![0.0; nq * sd * vs * gdim];
    for q in 0..nq {
        for i in 0..sd {
            for comp in 0..vs {
                for d in 0..gdim {
                    let mut g = 0.0;
                    for a in 0..tdim {
                        g += tables.grad(f, p, q, i, comp, a, tdim) * jinv[a * gdim + d];
                    }
                    pg[((q * sd + i) * vs + comp) * gdim + d] = g;
                }
            }
        }
    }
    pg
}

/// Compile every integral of a checked form, merging integrals that share a
/// (measure, subdomain) pair into a single kernel. The cell argument fixes
/// the integration domain and must agree with any element in the form.
pub fn compile_form(form: &Form, cell: CellType) -> Result<CompiledForm, CompilerError> {
    let meta = check_form(form)?;
    let mut groups: Vec<((Measure, Option<usize>), Vec<usize>)> = Vec::new();
    for (i, integral) in form.integrals.iter().enumerate() {
        let key = (integral.measure, integral.subdomain);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, idxs)) => idxs.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let mut kernels = Vec::with_capacity(groups.len());
    for (_, idxs) in &groups {
        kernels.push(compile_group(form, &meta, idxs, cell)?);
    }
    Ok(CompiledForm {
        rank: meta.rank,
        test: meta.test,
        trial: meta.trial,
        symmetric: meta.symmetric,
        kernels,
    })
}

/// Compile a single integral of a checked form.
pub fn compile_integral(
    form: &Form,
    index: usize,
    meta: &FormMetadata,
    cell: CellType,
) -> Result<Kernel, CompilerError> {
    if index >= form.integrals.len() {
        return Err(CompilerError::BadInput(format!(
            "form has {} integrals, index {} out of range",
            form.integrals.len(),
            index
        )));
    }
    compile_group(form, meta, &[index], cell)
}

fn compile_group(
    form: &Form,
    meta: &FormMetadata,
    idxs: &[usize],
    cell: CellType,
) -> Result<Kernel, CompilerError> {
    let first = &form.integrals[idxs[0]];
    let kind = match first.measure {
        Measure::Cell => KernelKind::Cell,
        Measure::ExteriorFacet => KernelKind::ExteriorFacet,
        Measure::InteriorFacet => KernelKind::InteriorFacet,
    };
    for desc in [&meta.test, &meta.trial].into_iter().flatten() {
        if desc.cell() != cell {
            return Err(CompilerError::BadInput(format!(
                "form elements live on {}, compiling for {}",
                desc.cell().name(),
                cell.name()
            )));
        }
    }
    let degree = idxs.iter().map(|&i| meta.quadrature_degrees[i]).max().unwrap();

    // Sum the group's integrands so one tape covers them all.
    let mut integrand = form.integrals[idxs[0]].integrand.clone();
    for &i in &idxs[1..] {
        integrand = Expr::Sum(integrand.boxed(), form.integrals[i].integrand.clone().boxed());
    }

    let tdim = cell.tdim();
    let lowering = lower_integrand(
        &integrand,
        &LowerCtx { decls: &form.coefficients, kind, gdim: tdim },
    )?;

    // Quadrature on the integration domain.
    let (points, weights, ref_facet_volume) = match kind {
        KernelKind::Cell => {
            let rule = quadrature_rule(cell, degree)?;
            (rule.points, rule.weights, 1.0)
        }
        _ => match cell.facet_type() {
            Some(fc) => {
                let rule = quadrature_rule(fc, degree)?;
                (rule.points, rule.weights, fc.volume())
            }
            // Interval facets are single points.
            None => (Vec::new(), vec![1.0], 1.0),
        },
    };
    let nq = weights.len();

    // Embed the rule into cell reference coordinates, once per variant.
    let ref_points: Vec<Vec<Vec<f64>>> = match kind {
        KernelKind::Cell => vec![vec![points.clone()]],
        _ => {
            let fdim = tdim - 1;
            let nperm = if kind == KernelKind::InteriorFacet {
                facet_permutations(tdim).len()
            } else {
                1
            };
            let verts = cell.vertices();
            cell.sub_entities(fdim)
                .iter()
                .map(|sub| {
                    facet_permutations(tdim)[..nperm]
                        .iter()
                        .map(|perm| {
                            let mut pts = vec![0.0; nq * tdim];
                            for q in 0..nq {
                                let t = &points[q * fdim..(q + 1) * fdim];
                                let v0 = verts[sub[perm[0]]];
                                let xi = &mut pts[q * tdim..(q + 1) * tdim];
                                xi.copy_from_slice(v0);
                                for (k, t_k) in t.iter().enumerate() {
                                    let vk = verts[sub[perm[k + 1]]];
                                    for d in 0..tdim {
                                        xi[d] += t_k * (vk[d] - v0[d]);
                                    }
                                }
                            }
                            pts
                        })
                        .collect()
                })
                .collect()
        }
    };

    let tabulate_role = |desc: &ElementDescriptor| -> Result<RoleTables, CompilerError> {
        let elem = create_element(desc)?;
        build_tables(&elem, desc, &ref_points, nq, tdim)
    };
    let test = meta.test.as_ref().map(&tabulate_role).transpose()?;
    let trial = if meta.rank == 2 {
        meta.trial.as_ref().map(&tabulate_role).transpose()?
    } else {
        None
    };
    let coefs = lowering
        .coef_ids
        .iter()
        .map(|&id| {
            let desc = match &form.coefficients[id].kind {
                CoefficientKind::Element(desc) => desc,
                _ => unreachable!("only element coefficients reach the kernel"),
            };
            if desc.cell() != cell {
                return Err(CompilerError::BadInput(format!(
                    "coefficient '{}' lives on {}, compiling for {}",
                    form.coefficients[id].name,
                    desc.cell().name(),
                    cell.name()
                )));
            }
            Ok(CoefTables { id, tables: tabulate_role(desc)? })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Kernel {
        kind,
        cell,
        subdomain: first.subdomain,
        degree,
        points,
        weights,
        ref_facet_volume,
        ref_points,
        rank: meta.rank,
        test,
        trial,
        coefs,
        tape: lowering.ops,
    })
}

fn build_tables(
    elem: &FiniteElement,
    desc: &ElementDescriptor,
    ref_points: &[Vec<Vec<f64>>],
    nq: usize,
    tdim: usize,
) -> Result<RoleTables, CompilerError> {
    let (sd, vs) = (elem.space_dim(), elem.value_size());
    let mut values = Vec::with_capacity(ref_points.len());
    let mut grads = Vec::with_capacity(ref_points.len());
    for variants in ref_points {
        let mut vv = Vec::with_capacity(variants.len());
        let mut gg = Vec::with_capacity(variants.len());
        for pts in variants {
            let table = elem.tabulate_basis(pts, 1)?;
            let mut v = vec![0.0; nq * sd * vs];
            let mut g = vec![0.0; nq * sd * vs * tdim];
            for q in 0..nq {
                for i in 0..sd {
                    for c in 0..vs {
                        v[(q * sd + i) * vs + c] = table.value(q, i, c);
                        for d in 0..tdim {
                            g[((q * sd + i) * vs + c) * tdim + d] = table.grad(q, i, c, d);
                        }
                    }
                }
            }
            vv.push(v);
            gg.push(g);
        }
        values.push(vv);
        grads.push(gg);
    }
    Ok(RoleTables {
        element: desc.clone(),
        space_dim: sd,
        value_size: vs,
        values,
        grads,
    })
}
