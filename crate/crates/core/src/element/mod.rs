//! Reference finite elements.
//!
//! An element owns its nodal points, the entity each degree of freedom is
//! attached to, and a tabulator for basis values and reference gradients.
//! Scalar families are CG_q and DG_q for q up to [`MAX_DEGREE`] and the
//! facet-midpoint CR_1 element; Vector and Mixed descriptors compose them
//! into block elements. The Lagrange basis is never formed in monomials:
//! we invert the Vandermonde matrix of the orthonormal modal basis from
//! [`modal`] at the nodes, which keeps the construction well conditioned
//! over the whole supported degree range.
//!
//! Nodes sit on the equispaced principal lattice. Each dof carries the
//! barycentric multi-index of its node over its entity's vertices; the
//! dofmap uses that to match shared-entity dofs between neighboring cells
//! independent of how either cell happens to orient the entity.

pub(crate) mod modal;

use crate::la::dense::DenseMatrix;
use crate::reference::CellType;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Highest supported polynomial degree for CG/DG. The modal construction
/// stays accurate well past this, but nodal conditioning on the equispaced
/// lattice does not, so the cap is enforced rather than documented away.
pub const MAX_DEGREE: usize = 6;

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("unsupported element family {0}")]
    UnsupportedFamily(String),
    #[error("family {family} does not support degree {degree}")]
    BadDegree { family: String, degree: usize },
    #[error("point {point:?} lies outside the reference cell")]
    PointOutsideReference { point: Vec<f64> },
    #[error("composite element needs at least one sub-element")]
    EmptyComposite,
    #[error("sub-elements of a composite element must share the cell shape")]
    MixedCellShapes,
    #[error("invalid element descriptor: {0}")]
    BadDescriptor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    CG,
    DG,
    CR,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::CG => "CG",
            Family::DG => "DG",
            Family::CR => "CR",
        }
    }
}

/// What to build. Composites nest to arbitrary depth; every leaf must name
/// the same cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementDescriptor {
    Scalar { family: Family, cell: CellType, degree: usize },
    Vector { sub: Box<ElementDescriptor>, count: usize },
    Mixed { subs: Vec<ElementDescriptor> },
}

impl ElementDescriptor {
    pub fn scalar(family: Family, cell: CellType, degree: usize) -> Self {
        ElementDescriptor::Scalar { family, cell, degree }
    }

    pub fn vector(sub: ElementDescriptor, count: usize) -> Self {
        ElementDescriptor::Vector { sub: Box::new(sub), count }
    }

    pub fn cell(&self) -> CellType {
        match self {
            ElementDescriptor::Scalar { cell, .. } => *cell,
            ElementDescriptor::Vector { sub, .. } => sub.cell(),
            ElementDescriptor::Mixed { subs } => subs[0].cell(),
        }
    }

    pub fn value_size(&self) -> usize {
        match self {
            ElementDescriptor::Scalar { .. } => 1,
            ElementDescriptor::Vector { sub, count } => count * sub.value_size(),
            ElementDescriptor::Mixed { subs } => subs.iter().map(|s| s.value_size()).sum(),
        }
    }

    /// Largest leaf degree; what quadrature estimation sees.
    pub fn degree(&self) -> usize {
        match self {
            ElementDescriptor::Scalar { degree, .. } => *degree,
            ElementDescriptor::Vector { sub, .. } => sub.degree(),
            ElementDescriptor::Mixed { subs } => subs.iter().map(|s| s.degree()).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for ElementDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementDescriptor::Scalar { family, cell, degree } => {
                write!(f, "{}_{}({})", family.name(), degree, cell.name())
            }
            ElementDescriptor::Vector { sub, count } => write!(f, "Vector({sub}, {count})"),
            ElementDescriptor::Mixed { subs } => {
                write!(f, "Mixed[")?;
                for (i, s) in subs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, "]")
            }
        }
    }
}

impl FromStr for ElementDescriptor {
    type Err = ElementError;

    fn from_str(s: &str) -> Result<Self, ElementError> {
        let mut p = DescriptorParser { s, pos: 0 };
        let d = p.parse()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(ElementError::BadDescriptor(format!("trailing input at byte {}", p.pos)));
        }
        Ok(d)
    }
}

struct DescriptorParser<'a> {
    s: &'a str,
    pos: usize,
}

impl DescriptorParser<'_> {
    fn skip_ws(&mut self) {
        while self.s[self.pos..].starts_with(' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, tok: &str) -> Result<(), ElementError> {
        self.skip_ws();
        if self.s[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            Ok(())
        } else {
            Err(ElementError::BadDescriptor(format!("expected '{tok}' at byte {}", self.pos)))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self
            .s
            .as_bytes()
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
        {
            self.pos += 1;
        }
        self.s[start..self.pos].to_string()
    }

    fn parse(&mut self) -> Result<ElementDescriptor, ElementError> {
        self.skip_ws();
        if self.s[self.pos..].starts_with("Vector") {
            self.eat("Vector")?;
            self.eat("(")?;
            let sub = self.parse()?;
            self.eat(",")?;
            let count = self.number()?;
            self.eat(")")?;
            return Ok(ElementDescriptor::vector(sub, count));
        }
        if self.s[self.pos..].starts_with("Mixed") {
            self.eat("Mixed")?;
            self.eat("[")?;
            let mut subs = vec![self.parse()?];
            loop {
                self.skip_ws();
                if self.s[self.pos..].starts_with(']') {
                    self.pos += 1;
                    return Ok(ElementDescriptor::Mixed { subs });
                }
                self.eat(",")?;
                subs.push(self.parse()?);
            }
        }
        // Scalar: FAMILY_degree(cell)
        let head = self.ident();
        let (family, degree) = match head.rsplit_once('_') {
            Some((fam, deg)) => {
                let family = match fam {
                    "CG" => Family::CG,
                    "DG" => Family::DG,
                    "CR" => Family::CR,
                    other => return Err(ElementError::UnsupportedFamily(other.to_string())),
                };
                let degree: usize = deg
                    .parse()
                    .map_err(|_| ElementError::BadDescriptor(format!("bad degree '{deg}'")))?;
                (family, degree)
            }
            None => return Err(ElementError::BadDescriptor(format!("bad element '{head}'"))),
        };
        self.eat("(")?;
        let cellname = self.ident();
        let cell = CellType::from_name(&cellname)
            .ok_or_else(|| ElementError::BadDescriptor(format!("unknown cell '{cellname}'")))?;
        self.eat(")")?;
        Ok(ElementDescriptor::Scalar { family, cell, degree })
    }

    fn number(&mut self) -> Result<usize, ElementError> {
        let n = self.ident();
        n.parse().map_err(|_| ElementError::BadDescriptor(format!("bad count '{n}'")))
    }
}

#[derive(Debug, Clone)]
enum ElementKind {
    /// Nodal scalar element; `coeffs[dof][mode]` expands each basis
    /// function in the orthonormal modal basis.
    Scalar { degree: usize, coeffs: DenseMatrix },
    Composite { subs: Vec<FiniteElement>, dof_offsets: Vec<usize>, comp_offsets: Vec<usize> },
}

/// A finite element on a reference cell, immutable once created.
#[derive(Debug, Clone)]
pub struct FiniteElement {
    descriptor: ElementDescriptor,
    cell: CellType,
    space_dim: usize,
    value_size: usize,
    dof_points: Vec<Vec<f64>>,
    dof_components: Vec<usize>,
    dof_entities: Vec<(usize, usize)>,
    dof_lattice: Vec<Vec<usize>>,
    entity_dofs: Vec<Vec<Vec<usize>>>,
    kind: ElementKind,
}

/// Basis values (and reference gradients) at a batch of points.
/// `values[(point · space_dim + dof) · value_size + comp]`; gradients add
/// a trailing tdim index.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub num_points: usize,
    pub space_dim: usize,
    pub value_size: usize,
    pub tdim: usize,
    pub values: Vec<f64>,
    pub grads: Option<Vec<f64>>,
}

impl BasisTable {
    pub fn value(&self, point: usize, dof: usize, comp: usize) -> f64 {
        self.values[(point * self.space_dim + dof) * self.value_size + comp]
    }

    pub fn grad(&self, point: usize, dof: usize, comp: usize, dir: usize) -> f64 {
        let g = self.grads.as_ref().expect("gradients were not tabulated");
        g[((point * self.space_dim + dof) * self.value_size + comp) * self.tdim + dir]
    }
}

/// All barycentric multi-indices (i_0..i_k) with the given sum, each part
/// at least `min`, ordered lexicographically by the tail (i_1..i_k); i_0
/// takes up the slack. For edges this walks the nodes from the first
/// entity vertex towards the second.
fn multi_indices(parts: usize, sum: usize, min: usize) -> Vec<Vec<usize>> {
    fn tails(k: usize, budget: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 0 {
            out.push(cur.clone());
            return;
        }
        for i in min..=budget.saturating_sub(min * (k - 1)) {
            cur.push(i);
            tails(k - 1, budget - i, min, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let mut ts = Vec::new();
    tails(parts - 1, sum.saturating_sub(min), min, &mut Vec::new(), &mut ts);
    for tail in ts {
        let rest: usize = tail.iter().sum();
        let mut m = Vec::with_capacity(parts);
        m.push(sum - rest);
        m.extend_from_slice(&tail);
        out.push(m);
    }
    out
}

fn lattice_point(cell: CellType, entity: &[usize], multi: &[usize], degree: usize) -> Vec<f64> {
    let verts = cell.vertices();
    let tdim = cell.tdim();
    let mut x = vec![0.0; tdim];
    if degree == 0 {
        // Single node at the centroid.
        for &v in entity {
            for d in 0..tdim {
                x[d] += verts[v][d] / entity.len() as f64;
            }
        }
        return x;
    }
    for (j, &v) in entity.iter().enumerate() {
        let w = multi[j] as f64 / degree as f64;
        for d in 0..tdim {
            x[d] += w * verts[v][d];
        }
    }
    x
}

/// Build the element described by `descriptor`.
pub fn create_element(descriptor: &ElementDescriptor) -> Result<FiniteElement, ElementError> {
    match descriptor {
        ElementDescriptor::Scalar { family, cell, degree } => {
            scalar_element(*family, *cell, *degree, descriptor)
        }
        ElementDescriptor::Vector { sub, count } => {
            if *count == 0 {
                return Err(ElementError::EmptyComposite);
            }
            let s = create_element(sub)?;
            composite(descriptor, vec![s; *count])
        }
        ElementDescriptor::Mixed { subs } => {
            if subs.is_empty() {
                return Err(ElementError::EmptyComposite);
            }
            let cell = subs[0].cell();
            if subs.iter().any(|s| s.cell() != cell) {
                return Err(ElementError::MixedCellShapes);
            }
            let built: Result<Vec<_>, _> = subs.iter().map(create_element).collect();
            composite(descriptor, built?)
        }
    }
}

fn scalar_element(
    family: Family,
    cell: CellType,
    degree: usize,
    descriptor: &ElementDescriptor,
) -> Result<FiniteElement, ElementError> {
    let bad = || ElementError::BadDegree { family: family.name().to_string(), degree };
    match family {
        Family::CG => {
            if degree == 0 || degree > MAX_DEGREE {
                return Err(bad());
            }
        }
        Family::DG => {
            if degree > MAX_DEGREE {
                return Err(bad());
            }
        }
        Family::CR => {
            if degree != 1 {
                return Err(bad());
            }
        }
    }

    let tdim = cell.tdim();
    let mut dof_points = Vec::new();
    let mut dof_entities = Vec::new();
    let mut dof_lattice = Vec::new();
    let mut entity_dofs: Vec<Vec<Vec<usize>>> =
        (0..=tdim).map(|d| vec![Vec::new(); cell.num_sub_entities(d)]).collect();

    let mut attach = |d: usize, e: usize, point: Vec<f64>, multi: Vec<usize>| {
        let id = dof_points.len();
        dof_points.push(point);
        dof_entities.push((d, e));
        dof_lattice.push(multi);
        entity_dofs[d][e].push(id);
    };

    match family {
        Family::CG => {
            for d in 0..=tdim {
                for (e, entity) in cell.sub_entities(d).iter().enumerate() {
                    for multi in multi_indices(d + 1, degree, 1) {
                        let point = lattice_point(cell, entity, &multi, degree);
                        attach(d, e, point, multi);
                    }
                }
            }
        }
        Family::DG => {
            let entity = cell.sub_entities(tdim)[0];
            if degree == 0 {
                attach(tdim, 0, lattice_point(cell, entity, &[], 0), vec![0; tdim + 1]);
            } else {
                for multi in multi_indices(tdim + 1, degree, 0) {
                    let point = lattice_point(cell, entity, &multi, degree);
                    attach(tdim, 0, point, multi);
                }
            }
        }
        Family::CR => {
            let fdim = tdim - 1;
            for (e, entity) in cell.sub_entities(fdim).iter().enumerate() {
                // One dof at the facet midpoint; the uniform multi-index is
                // invariant under vertex permutations, as it must be.
                let multi = vec![1; fdim + 1];
                let mid = lattice_point(cell, entity, &[], 0);
                attach(fdim, e, mid, multi);
            }
        }
    }

    let n = dof_points.len();
    debug_assert_eq!(n, modal::num_modes(cell, degree));

    // Vandermonde in the modal basis: B[mode][node], coefficients B^{-1}.
    let mut b = DenseMatrix::zeros(n, n);
    for (k, x) in dof_points.iter().enumerate() {
        let (vals, _) = modal::eval_modes(cell, degree, x);
        for (m, val) in vals.iter().enumerate() {
            b.set(m, k, *val);
        }
    }
    let coeffs = invert(b)
        .map_err(|_| ElementError::BadDescriptor(format!("singular nodal basis for {descriptor}")))?;

    Ok(FiniteElement {
        descriptor: descriptor.clone(),
        cell,
        space_dim: n,
        value_size: 1,
        dof_points,
        dof_components: vec![0; n],
        dof_entities,
        dof_lattice,
        entity_dofs,
        kind: ElementKind::Scalar { degree, coeffs },
    })
}

fn invert(mut m: DenseMatrix) -> Result<DenseMatrix, crate::la::LaError> {
    let n = m.nrows();
    let perm = m.lu_factor()?;
    let mut inv = DenseMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = m.lu_solve(&perm, &e);
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
        e[j] = 0.0;
    }
    Ok(inv)
}

fn composite(
    descriptor: &ElementDescriptor,
    subs: Vec<FiniteElement>,
) -> Result<FiniteElement, ElementError> {
    let cell = subs[0].cell;
    let tdim = cell.tdim();
    let space_dim: usize = subs.iter().map(|s| s.space_dim).sum();
    let value_size: usize = subs.iter().map(|s| s.value_size).sum();

    let mut dof_points = Vec::with_capacity(space_dim);
    let mut dof_components = Vec::with_capacity(space_dim);
    let mut dof_entities = Vec::with_capacity(space_dim);
    let mut dof_lattice = Vec::with_capacity(space_dim);
    let mut entity_dofs: Vec<Vec<Vec<usize>>> =
        (0..=tdim).map(|d| vec![Vec::new(); cell.num_sub_entities(d)]).collect();
    let mut dof_offsets = Vec::with_capacity(subs.len());
    let mut comp_offsets = Vec::with_capacity(subs.len());

    let mut dof0 = 0;
    let mut comp0 = 0;
    for sub in &subs {
        dof_offsets.push(dof0);
        comp_offsets.push(comp0);
        for i in 0..sub.space_dim {
            dof_points.push(sub.dof_points[i].clone());
            dof_components.push(comp0 + sub.dof_components[i]);
            dof_entities.push(sub.dof_entities[i]);
            dof_lattice.push(sub.dof_lattice[i].clone());
        }
        for d in 0..=tdim {
            for e in 0..entity_dofs[d].len() {
                entity_dofs[d][e].extend(sub.entity_dofs[d][e].iter().map(|i| i + dof0));
            }
        }
        dof0 += sub.space_dim;
        comp0 += sub.value_size;
    }

    Ok(FiniteElement {
        descriptor: descriptor.clone(),
        cell,
        space_dim,
        value_size,
        dof_points,
        dof_components,
        dof_entities,
        dof_lattice,
        entity_dofs,
        kind: ElementKind::Composite { subs, dof_offsets, comp_offsets },
    })
}

impl FiniteElement {
    pub fn descriptor(&self) -> &ElementDescriptor {
        &self.descriptor
    }

    pub fn cell(&self) -> CellType {
        self.cell
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn value_size(&self) -> usize {
        self.value_size
    }

    pub fn degree(&self) -> usize {
        self.descriptor.degree()
    }

    /// Nodal point of each dof, on the reference cell.
    pub fn dof_points(&self) -> &[Vec<f64>] {
        &self.dof_points
    }

    /// Value component each dof evaluates; always 0 for scalar elements.
    pub fn dof_components(&self) -> &[usize] {
        &self.dof_components
    }

    /// (entity dimension, local entity index) each dof is attached to.
    pub fn dof_entities(&self) -> &[(usize, usize)] {
        &self.dof_entities
    }

    /// Barycentric multi-index of each dof over its entity's vertices, in
    /// the entity's local vertex order.
    pub fn dof_lattice(&self) -> &[Vec<usize>] {
        &self.dof_lattice
    }

    /// Dofs attached to entity (d, e).
    pub fn entity_dofs(&self, d: usize, e: usize) -> &[usize] {
        &self.entity_dofs[d][e]
    }

    /// Nodal points together with the full entity-dof map.
    pub fn reference_dof_layout(&self) -> (&[Vec<f64>], &[Vec<Vec<usize>>]) {
        (&self.dof_points, &self.entity_dofs)
    }

    pub fn sub_elements(&self) -> &[FiniteElement] {
        match &self.kind {
            ElementKind::Scalar { .. } => &[],
            ElementKind::Composite { subs, .. } => subs,
        }
    }

    /// Local dof offset of sub-element `i` in this element's numbering.
    pub fn sub_dof_offset(&self, i: usize) -> usize {
        match &self.kind {
            ElementKind::Scalar { .. } => 0,
            ElementKind::Composite { dof_offsets, .. } => dof_offsets[i],
        }
    }

    /// Value component offset of sub-element `i`.
    pub fn sub_component_offset(&self, i: usize) -> usize {
        match &self.kind {
            ElementKind::Scalar { .. } => 0,
            ElementKind::Composite { comp_offsets, .. } => comp_offsets[i],
        }
    }

    /// Tabulate basis values at `points` (flat, tdim reals per point), with
    /// reference gradients when `nderiv` is 1. Points must lie in the
    /// closed reference cell to 1e-12.
    pub fn tabulate_basis(&self, points: &[f64], nderiv: usize) -> Result<BasisTable, ElementError> {
        let tdim = self.cell.tdim();
        assert!(nderiv <= 1, "only values and first derivatives are tabulated");
        assert_eq!(points.len() % tdim, 0);
        let np = points.len() / tdim;
        for p in 0..np {
            let x = &points[p * tdim..(p + 1) * tdim];
            let inside =
                x.iter().all(|&c| c >= -1e-12) && x.iter().sum::<f64>() <= 1.0 + 1e-12;
            if !inside {
                return Err(ElementError::PointOutsideReference { point: x.to_vec() });
            }
        }

        let mut table = BasisTable {
            num_points: np,
            space_dim: self.space_dim,
            value_size: self.value_size,
            tdim,
            values: vec![0.0; np * self.space_dim * self.value_size],
            grads: (nderiv == 1).then(|| vec![0.0; np * self.space_dim * self.value_size * tdim]),
        };
        self.tabulate_into(points, np, 0, 0, &mut table);
        Ok(table)
    }

    fn tabulate_into(
        &self,
        points: &[f64],
        np: usize,
        dof0: usize,
        comp0: usize,
        table: &mut BasisTable,
    ) {
        match &self.kind {
            ElementKind::Scalar { degree, coeffs } => {
                let tdim = self.cell.tdim();
                for p in 0..np {
                    let x = &points[p * tdim..(p + 1) * tdim];
                    let (mv, mg) = modal::eval_modes(self.cell, *degree, x);
                    for i in 0..self.space_dim {
                        let mut val = 0.0;
                        let mut grad = [0.0; 3];
                        for m in 0..mv.len() {
                            let c = coeffs.get(i, m);
                            val += c * mv[m];
                            if table.grads.is_some() {
                                for d in 0..tdim {
                                    grad[d] += c * mg[m][d];
                                }
                            }
                        }
                        let idx = (p * table.space_dim + dof0 + i) * table.value_size + comp0;
                        table.values[idx] = val;
                        if let Some(g) = table.grads.as_mut() {
                            for d in 0..tdim {
                                g[idx * tdim + d] = grad[d];
                            }
                        }
                    }
                }
            }
            ElementKind::Composite { subs, dof_offsets, comp_offsets } => {
                for (k, sub) in subs.iter().enumerate() {
                    sub.tabulate_into(points, np, dof0 + dof_offsets[k], comp0 + comp_offsets[k], table);
                }
            }
        }
    }
}
