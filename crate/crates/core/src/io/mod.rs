//! Mesh, field and marker file I/O, plus legacy VTK output.
//!
//! Meshes travel in a small XML dialect, one tag per line:
//!
//! ```xml
//! <dolfin>
//!   <mesh celltype="triangle" dim="2">
//!     <vertices size="4">
//!       <vertex index="0" x="0.0" y="0.0"/>
//!       ...
//!     </vertices>
//!     <cells size="2">
//!       <triangle index="0" v0="0" v1="1" v2="2"/>
//!       ...
//!     </cells>
//!   </mesh>
//!   <meshfunction dim="1" size="5">
//!     <entity index="0" value="7"/>
//!     ...
//!   </meshfunction>
//! </dolfin>
//! ```
//!
//! Attributes are required and ordered. The writer prints coordinates with
//! 17 significant digits, so write then read reproduces every f64 bit for
//! bit. Discrete fields use the same envelope with a `<function>` block
//! carrying the element descriptor and one `<dof>` tag per entry.
//!
//! VTK output is the legacy ASCII format, which every common viewer still
//! reads. Fields that do not live on vertices are interpolated to degree
//! one first and the file title says so.

use crate::dofmap::{DofMap, DofMapError};
use crate::element::{ElementDescriptor, Family};
use crate::function::{interpolate, FieldSource, Function, FunctionError, FunctionSpace};
use crate::mesh::{build_mesh, Mesh, MeshError, MeshFunction};
use crate::reference::CellType;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {message}")]
    ParseError { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    SchemaMismatch { path: String, message: String },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    DofMap(#[from] DofMapError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> IoError {
    IoError::ParseError { path: path.into(), line, message: message.into() }
}

fn schema_err(path: &str, message: impl Into<String>) -> IoError {
    IoError::SchemaMismatch { path: path.into(), message: message.into() }
}

/// A mesh file's payload: the mesh and any marker blocks, in file order.
pub struct MeshFile {
    pub mesh: Mesh,
    pub markers: Vec<MeshFunction<usize>>,
}

#[derive(Debug)]
struct Tag {
    line: usize,
    name: String,
    attrs: Vec<(String, String)>,
    closing: bool,
    self_closing: bool,
}

impl Tag {
    /// Positional attribute access; the schema fixes the order.
    fn attr(&self, i: usize, key: &str, path: &str) -> Result<&str, IoError> {
        match self.attrs.get(i) {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(parse_err(
                path,
                self.line,
                format!("<{}> is missing attribute '{key}'", self.name),
            )),
        }
    }

    fn attr_usize(&self, i: usize, key: &str, path: &str) -> Result<usize, IoError> {
        let s = self.attr(i, key, path)?;
        s.parse()
            .map_err(|_| parse_err(path, self.line, format!("bad {key} '{s}'")))
    }

    fn attr_f64(&self, i: usize, key: &str, path: &str) -> Result<f64, IoError> {
        let s = self.attr(i, key, path)?;
        s.parse()
            .map_err(|_| parse_err(path, self.line, format!("bad {key} '{s}'")))
    }
}

fn parse_tag(path: &str, line: usize, s: &str) -> Result<Tag, IoError> {
    if !s.starts_with('<') || !s.ends_with('>') || s.len() < 3 {
        return Err(parse_err(path, line, format!("expected a tag, got '{s}'")));
    }
    let mut inner = &s[1..s.len() - 1];
    let closing = inner.starts_with('/');
    if closing {
        inner = &inner[1..];
    }
    let self_closing = inner.ends_with('/');
    if self_closing {
        inner = &inner[..inner.len() - 1];
    }
    let inner = inner.trim();
    let name_end = inner.find(char::is_whitespace).unwrap_or(inner.len());
    let name = &inner[..name_end];
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(parse_err(path, line, format!("bad tag name in '{s}'")));
    }
    let mut attrs = Vec::new();
    let mut rest = inner[name_end..].trim_start();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| parse_err(path, line, format!("attribute without value in '{s}'")))?;
        let key = rest[..eq].trim_end();
        let after = &rest[eq + 1..];
        if !after.starts_with('"') {
            return Err(parse_err(path, line, "attribute value must be double quoted"));
        }
        let close = after[1..]
            .find('"')
            .ok_or_else(|| parse_err(path, line, "unterminated attribute value"))?;
        attrs.push((key.to_string(), after[1..1 + close].to_string()));
        rest = after[close + 2..].trim_start();
    }
    if closing && (self_closing || !attrs.is_empty()) {
        return Err(parse_err(path, line, format!("malformed closing tag '{s}'")));
    }
    Ok(Tag { line, name: name.to_string(), attrs, closing, self_closing })
}

struct Scanner<'a> {
    path: &'a str,
    /// (1-based line, trimmed text) with blanks and the prolog dropped.
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Scanner<'a> {
    fn new(path: &'a str, text: &'a str) -> Scanner<'a> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with("<?"))
            .collect();
        let last_line = lines.last().map_or(0, |&(n, _)| n);
        Scanner { path, lines, pos: 0, last_line }
    }

    fn next(&mut self) -> Result<Tag, IoError> {
        match self.lines.get(self.pos) {
            Some(&(line, text)) => {
                self.pos += 1;
                parse_tag(self.path, line, text)
            }
            None => Err(parse_err(self.path, self.last_line, "unexpected end of file")),
        }
    }

    fn expect_open(&mut self, name: &str) -> Result<Tag, IoError> {
        let t = self.next()?;
        if t.closing || t.self_closing || t.name != name {
            return Err(parse_err(self.path, t.line, format!("expected <{name}>, got <{}>", t.name)));
        }
        Ok(t)
    }

    fn expect_close(&mut self, name: &str) -> Result<(), IoError> {
        let t = self.next()?;
        if !t.closing || t.name != name {
            return Err(parse_err(
                self.path,
                t.line,
                format!("expected </{name}>, got <{}>", t.name),
            ));
        }
        Ok(())
    }

    fn expect_item(&mut self, name: &str) -> Result<Tag, IoError> {
        let t = self.next()?;
        if t.closing || !t.self_closing || t.name != name {
            return Err(parse_err(
                self.path,
                t.line,
                format!("expected <{name} .../>, got <{}>", t.name),
            ));
        }
        Ok(t)
    }

    fn expect_done(&self) -> Result<(), IoError> {
        if let Some(&(line, text)) = self.lines.get(self.pos) {
            return Err(parse_err(self.path, line, format!("trailing content '{text}'")));
        }
        Ok(())
    }
}

fn cell_type_by_name(name: &str) -> Option<CellType> {
    [CellType::Interval, CellType::Triangle, CellType::Tetrahedron]
        .into_iter()
        .find(|c| c.name() == name)
}

/// Read a mesh and any marker blocks stored alongside it.
pub fn read_mesh_xml(path: impl AsRef<Path>) -> Result<MeshFile, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let p = path.display().to_string();
    let mut sc = Scanner::new(&p, &text);

    sc.expect_open("dolfin")?;
    let mesh_tag = sc.expect_open("mesh")?;
    let celltype = mesh_tag.attr(0, "celltype", &p)?;
    let ct = cell_type_by_name(celltype)
        .ok_or_else(|| schema_err(&p, format!("unsupported cell type '{celltype}'")))?;
    let tdim = ct.tdim();
    let dim = mesh_tag.attr_usize(1, "dim", &p)?;
    if dim != tdim {
        return Err(schema_err(&p, format!("{celltype} cells need dim {tdim}, file says {dim}")));
    }

    let vtag = sc.expect_open("vertices")?;
    let nverts = vtag.attr_usize(0, "size", &p)?;
    let axes = ["x", "y", "z"];
    let mut coords = Vec::with_capacity(nverts * dim);
    for i in 0..nverts {
        let t = sc.expect_item("vertex")?;
        let index = t.attr_usize(0, "index", &p)?;
        if index != i {
            return Err(parse_err(&p, t.line, format!("vertex index {index}, expected {i}")));
        }
        for (k, axis) in axes.iter().take(dim).enumerate() {
            coords.push(t.attr_f64(1 + k, axis, &p)?);
        }
    }
    sc.expect_close("vertices")?;

    let ctag = sc.expect_open("cells")?;
    let ncells = ctag.attr_usize(0, "size", &p)?;
    let nv = tdim + 1;
    let mut cells = Vec::with_capacity(ncells * nv);
    for j in 0..ncells {
        let t = sc.expect_item(celltype)?;
        let index = t.attr_usize(0, "index", &p)?;
        if index != j {
            return Err(parse_err(&p, t.line, format!("cell index {index}, expected {j}")));
        }
        for k in 0..nv {
            let v = t.attr_usize(1 + k, &format!("v{k}"), &p)?;
            if v >= nverts {
                return Err(parse_err(
                    &p,
                    t.line,
                    format!("vertex index {v} out of range ({nverts} vertices)"),
                ));
            }
            cells.push(v);
        }
    }
    sc.expect_close("cells")?;
    sc.expect_close("mesh")?;

    let mesh = build_mesh(coords, cells, tdim, dim)?;

    let mut markers = Vec::new();
    loop {
        let t = sc.next()?;
        if t.closing && t.name == "dolfin" {
            break;
        }
        if t.closing || t.self_closing || t.name != "meshfunction" {
            return Err(parse_err(
                &p,
                t.line,
                format!("expected <meshfunction> or </dolfin>, got <{}>", t.name),
            ));
        }
        let mdim = t.attr_usize(0, "dim", &p)?;
        let size = t.attr_usize(1, "size", &p)?;
        if mdim > tdim {
            return Err(schema_err(&p, format!("marker dimension {mdim} exceeds the mesh's {tdim}")));
        }
        let have = mesh.num_entities(mdim)?;
        if size != have {
            return Err(schema_err(
                &p,
                format!("marker block says {size} entities of dimension {mdim}, the mesh has {have}"),
            ));
        }
        let mut values = Vec::with_capacity(size);
        for i in 0..size {
            let e = sc.expect_item("entity")?;
            let index = e.attr_usize(0, "index", &p)?;
            if index != i {
                return Err(parse_err(&p, e.line, format!("entity index {index}, expected {i}")));
            }
            values.push(e.attr_usize(1, "value", &p)?);
        }
        sc.expect_close("meshfunction")?;
        markers.push(MeshFunction::from_values(mdim, values));
    }
    sc.expect_done()?;

    Ok(MeshFile { mesh, markers })
}

/// 17 significant digits: enough to reproduce any f64 exactly.
fn full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a mesh, optionally with marker blocks, in the XML dialect above.
pub fn write_mesh_xml(
    path: impl AsRef<Path>,
    mesh: &Mesh,
    markers: &[&MeshFunction<usize>],
) -> Result<(), IoError> {
    let tdim = mesh.tdim();
    let gdim = mesh.gdim();
    let name = mesh.cell_type().name();
    let axes = ["x", "y", "z"];

    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<dolfin>");
    let _ = writeln!(out, "  <mesh celltype=\"{name}\" dim=\"{tdim}\">");
    let _ = writeln!(out, "    <vertices size=\"{}\">", mesh.num_vertices());
    for i in 0..mesh.num_vertices() {
        let x = mesh.vertex(i);
        let _ = write!(out, "      <vertex index=\"{i}\"");
        for (k, axis) in axes.iter().take(gdim).enumerate() {
            let _ = write!(out, " {axis}=\"{}\"", full(x[k]));
        }
        let _ = writeln!(out, "/>");
    }
    let _ = writeln!(out, "    </vertices>");
    let _ = writeln!(out, "    <cells size=\"{}\">", mesh.num_cells());
    for j in 0..mesh.num_cells() {
        let _ = write!(out, "      <{name} index=\"{j}\"");
        for (k, v) in mesh.cell_vertices(j).iter().enumerate() {
            let _ = write!(out, " v{k}=\"{v}\"");
        }
        let _ = writeln!(out, "/>");
    }
    let _ = writeln!(out, "    </cells>");
    let _ = writeln!(out, "  </mesh>");
    for m in markers {
        let have = mesh.num_entities(m.dim())?;
        if m.len() != have {
            return Err(IoError::Unsupported(format!(
                "marker block has {} values for {} entities of dimension {}",
                m.len(),
                have,
                m.dim()
            )));
        }
        let _ = writeln!(out, "  <meshfunction dim=\"{}\" size=\"{}\">", m.dim(), m.len());
        for (i, v) in m.values().iter().enumerate() {
            let _ = writeln!(out, "    <entity index=\"{i}\" value=\"{v}\"/>");
        }
        let _ = writeln!(out, "  </meshfunction>");
    }
    let _ = writeln!(out, "</dolfin>");
    fs::write(path, out)?;
    Ok(())
}

/// Read a discrete field stored with [`write_function_xml`]. The mesh must
/// be the one the field was written on.
pub fn read_function_xml(
    path: impl AsRef<Path>,
    mesh: &Arc<Mesh>,
) -> Result<Function, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let p = path.display().to_string();
    let mut sc = Scanner::new(&p, &text);

    sc.expect_open("dolfin")?;
    let ftag = sc.expect_open("function")?;
    let desc_text = ftag.attr(0, "element", &p)?;
    let desc: ElementDescriptor = desc_text
        .parse()
        .map_err(|e| schema_err(&p, format!("bad element '{desc_text}': {e}")))?;
    let size = ftag.attr_usize(1, "size", &p)?;
    let space = FunctionSpace::new(mesh, &desc)?;
    if size != space.dim() {
        return Err(schema_err(
            &p,
            format!("field has {size} dofs, the space on this mesh {}", space.dim()),
        ));
    }
    let mut values = Vec::with_capacity(size);
    for i in 0..size {
        let t = sc.expect_item("dof")?;
        let index = t.attr_usize(0, "index", &p)?;
        if index != i {
            return Err(parse_err(&p, t.line, format!("dof index {index}, expected {i}")));
        }
        values.push(t.attr_f64(1, "value", &p)?);
    }
    sc.expect_close("function")?;
    sc.expect_close("dolfin")?;
    sc.expect_done()?;
    Ok(Function::from_vector(space, values)?)
}

/// Write a discrete field: element descriptor plus the dof vector, bit
/// exact under round trip.
pub fn write_function_xml(path: impl AsRef<Path>, f: &Function) -> Result<(), IoError> {
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<dolfin>");
    let _ = writeln!(
        out,
        "  <function element=\"{}\" size=\"{}\">",
        f.space().descriptor(),
        f.space().dim()
    );
    for (i, v) in f.vector().iter().enumerate() {
        let _ = writeln!(out, "    <dof index=\"{i}\" value=\"{}\"/>", full(*v));
    }
    let _ = writeln!(out, "  </function>");
    let _ = writeln!(out, "</dolfin>");
    fs::write(path, out)?;
    Ok(())
}

/// Vertex-order-one descriptor with the same value shape.
fn vertex_descriptor(cell: CellType, value_size: usize) -> ElementDescriptor {
    let scalar = ElementDescriptor::scalar(Family::CG, cell, 1);
    if value_size == 1 {
        scalar
    } else {
        ElementDescriptor::vector(scalar, value_size)
    }
}

/// Per-vertex values of a degree-one field, nv * value_size flat.
fn vertex_values(mesh: &Mesh, f: &Function) -> Result<Vec<f64>, IoError> {
    let vs = f.space().value_size();
    let nv = mesh.num_vertices();
    let vec = f.vector();
    let dm = f.space().dofmap();
    let maps: Vec<&DofMap> = if vs == 1 { vec![dm] } else { dm.sub_maps().iter().collect() };
    let mut out = vec![0.0; nv * vs];
    for (k, sub) in maps.iter().enumerate() {
        for c in 0..mesh.num_cells() {
            let dofs = sub.cell_dofs(c)?;
            let verts = mesh.cell_vertices(c);
            // Degree-one dofs are the cell's vertices, in order.
            for (i, &g) in dofs.iter().enumerate() {
                out[verts[i] * vs + k] = vec[g];
            }
        }
    }
    Ok(out)
}

/// Write the mesh and any number of named fields as legacy ASCII VTK.
/// Fields that are not already degree one are interpolated down first;
/// the title line records which.
pub fn write_vtk(
    path: impl AsRef<Path>,
    mesh: &Arc<Mesh>,
    fields: &[(&str, &Function)],
) -> Result<(), IoError> {
    let tdim = mesh.tdim();
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    let vtk_cell = match tdim {
        1 => 3,
        2 => 5,
        _ => 10,
    };

    struct Column {
        name: String,
        vs: usize,
        values: Vec<f64>,
    }
    let mut columns = Vec::new();
    let mut reduced = Vec::new();
    for &(name, f) in fields {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(IoError::Unsupported(format!("'{name}' is not a usable VTK field name")));
        }
        if columns.iter().any(|c: &Column| c.name == name) {
            return Err(IoError::Unsupported(format!("duplicate field name '{name}'")));
        }
        if !Arc::ptr_eq(f.space().mesh(), mesh) {
            return Err(IoError::Unsupported(format!("field '{name}' lives on a different mesh")));
        }
        let vs = f.space().value_size();
        if vs > 3 {
            return Err(IoError::Unsupported(format!(
                "field '{name}' has {vs} components; split it before writing"
            )));
        }
        let target = vertex_descriptor(mesh.cell_type(), vs);
        let values = if f.space().descriptor() == &target {
            vertex_values(mesh, f)?
        } else {
            reduced.push(name.to_string());
            let space = FunctionSpace::new(mesh, &target)?;
            let down = interpolate(FieldSource::Function(f), &space)?;
            vertex_values(mesh, &down)?
        };
        columns.push(Column { name: name.to_string(), vs, values });
    }

    let title = if reduced.is_empty() {
        "femkit output".to_string()
    } else {
        format!("femkit output (interpolated to degree 1: {})", reduced.join(", "))
    };

    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {nv} double");
    for i in 0..nv {
        let x = mesh.vertex(i);
        for k in 0..3 {
            if k > 0 {
                let _ = write!(out, " ");
            }
            let _ = write!(out, "{}", x.get(k).copied().unwrap_or(0.0));
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "CELLS {nc} {}", nc * (tdim + 2));
    for c in 0..nc {
        let _ = write!(out, "{}", tdim + 1);
        for v in mesh.cell_vertices(c) {
            let _ = write!(out, " {v}");
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(out, "{vtk_cell}");
    }
    if !columns.is_empty() {
        let _ = writeln!(out, "POINT_DATA {nv}");
        for col in &columns {
            if col.vs == 1 {
                let _ = writeln!(out, "SCALARS {} double 1", col.name);
                let _ = writeln!(out, "LOOKUP_TABLE default");
                for v in &col.values {
                    let _ = writeln!(out, "{v}");
                }
            } else {
                // VTK vectors are always three components; pad with zeros.
                let _ = writeln!(out, "VECTORS {} double", col.name);
                for i in 0..nv {
                    let row = &col.values[i * col.vs..(i + 1) * col.vs];
                    for k in 0..3 {
                        if k > 0 {
                            let _ = write!(out, " ");
                        }
                        let _ = write!(out, "{}", row.get(k).copied().unwrap_or(0.0));
                    }
                    let _ = writeln!(out);
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
