//! Kernel serialization: a JSON IR for inspection and reload, plus a
//! human-readable listing of the same data.
//!
//! The JSON layout is documented in docs/kernel-ir.md. Floats are written
//! with shortest round-trip formatting, so a reloaded kernel tabulates
//! bit-identical tensors.

use crate::compiler::kernel::{CoefTables, Kernel, KernelKind, Op, RoleId, RoleTables};
use crate::compiler::CompilerError;
use crate::form::Func;
use crate::reference::CellType;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub(super) const SCHEMA: &str = "femkit-kir-1";

/// Emitted kernel: the JSON IR and a pseudocode listing of it.
pub struct IrArtifact {
    pub json: String,
    pub listing: String,
}

#[derive(Serialize, Deserialize)]
struct IrKernel {
    schema: String,
    kind: String,
    cell: String,
    subdomain: Option<usize>,
    degree: usize,
    rank: usize,
    quadrature: IrQuadrature,
    /// Rule points embedded in cell reference coordinates, per table variant.
    ref_points: Vec<Vec<Vec<f64>>>,
    ref_facet_volume: f64,
    tables: Vec<IrTable>,
    tape: Vec<IrOp>,
    /// Output tensor dimensions, rank entries.
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct IrQuadrature {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct IrTable {
    role: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    coefficient: Option<usize>,
    element: String,
    space_dim: usize,
    value_size: usize,
    values: Vec<Vec<Vec<f64>>>,
    grads: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct IrOp {
    op: String,
    args: Vec<Value>,
}

fn op_to_ir(op: &Op) -> IrOp {
    let (name, args): (&str, Vec<Value>) = match *op {
        Op::Const(v) => ("const", vec![json!(v)]),
        Op::Coord(c) => ("coord", vec![json!(c)]),
        Op::Normal(c) => ("normal", vec![json!(c)]),
        Op::CellSize(s) => ("cell_size", vec![json!(s)]),
        Op::BasisValue { role: RoleId::Test, comp, side } => {
            ("test_value", vec![json!(comp), json!(side)])
        }
        Op::BasisValue { role: RoleId::Trial, comp, side } => {
            ("trial_value", vec![json!(comp), json!(side)])
        }
        Op::BasisGrad { role: RoleId::Test, comp, dir, side } => {
            ("test_grad", vec![json!(comp), json!(dir), json!(side)])
        }
        Op::BasisGrad { role: RoleId::Trial, comp, dir, side } => {
            ("trial_grad", vec![json!(comp), json!(dir), json!(side)])
        }
        Op::CoefValue { coef, comp, side } => {
            ("coef_value", vec![json!(coef), json!(comp), json!(side)])
        }
        Op::CoefGrad { coef, comp, dir, side } => {
            ("coef_grad", vec![json!(coef), json!(comp), json!(dir), json!(side)])
        }
        Op::Add(a, b) => ("add", vec![json!(a), json!(b)]),
        Op::Mul(a, b) => ("mul", vec![json!(a), json!(b)]),
        Op::Div(a, b) => ("div", vec![json!(a), json!(b)]),
        Op::Neg(a) => ("neg", vec![json!(a)]),
        Op::Pow(a, k) => ("pow", vec![json!(a), json!(k)]),
        Op::Call(f, a) => (f.name(), vec![json!(a)]),
    };
    IrOp { op: name.to_string(), args }
}

fn bad(msg: impl Into<String>) -> CompilerError {
    CompilerError::BadIr(msg.into())
}

fn arg_u(op: &IrOp, i: usize) -> Result<usize, CompilerError> {
    op.args
        .get(i)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| bad(format!("op '{}' needs an integer argument {}", op.op, i)))
}

fn arg_f(op: &IrOp, i: usize) -> Result<f64, CompilerError> {
    op.args
        .get(i)
        .and_then(Value::as_f64)
        .ok_or_else(|| bad(format!("op '{}' needs a number argument {}", op.op, i)))
}

fn arg_i(op: &IrOp, i: usize) -> Result<i32, CompilerError> {
    op.args
        .get(i)
        .and_then(Value::as_i64)
        .map(|v| v as i32)
        .ok_or_else(|| bad(format!("op '{}' needs an integer argument {}", op.op, i)))
}

fn op_from_ir(op: &IrOp, reg: usize, ncoef: usize) -> Result<Op, CompilerError> {
    let operand = |i: usize| -> Result<usize, CompilerError> {
        let r = arg_u(op, i)?;
        if r >= reg {
            return Err(bad(format!("op '{}' reads register {} before it is set", op.op, r)));
        }
        Ok(r)
    };
    let out = match op.op.as_str() {
        "const" => Op::Const(arg_f(op, 0)?),
        "coord" => Op::Coord(arg_u(op, 0)?),
        "normal" => Op::Normal(arg_u(op, 0)?),
        "cell_size" => Op::CellSize(arg_u(op, 0)?),
        "test_value" => {
            Op::BasisValue { role: RoleId::Test, comp: arg_u(op, 0)?, side: arg_u(op, 1)? }
        }
        "trial_value" => {
            Op::BasisValue { role: RoleId::Trial, comp: arg_u(op, 0)?, side: arg_u(op, 1)? }
        }
        "test_grad" => Op::BasisGrad {
            role: RoleId::Test,
            comp: arg_u(op, 0)?,
            dir: arg_u(op, 1)?,
            side: arg_u(op, 2)?,
        },
        "trial_grad" => Op::BasisGrad {
            role: RoleId::Trial,
            comp: arg_u(op, 0)?,
            dir: arg_u(op, 1)?,
            side: arg_u(op, 2)?,
        },
        "coef_value" => {
            let coef = arg_u(op, 0)?;
            if coef >= ncoef {
                return Err(bad(format!("coefficient slot {coef} has no table")));
            }
            Op::CoefValue { coef, comp: arg_u(op, 1)?, side: arg_u(op, 2)? }
        }
        "coef_grad" => {
            let coef = arg_u(op, 0)?;
            if coef >= ncoef {
                return Err(bad(format!("coefficient slot {coef} has no table")));
            }
            Op::CoefGrad { coef, comp: arg_u(op, 1)?, dir: arg_u(op, 2)?, side: arg_u(op, 3)? }
        }
        "add" => Op::Add(operand(0)?, operand(1)?),
        "mul" => Op::Mul(operand(0)?, operand(1)?),
        "div" => Op::Div(operand(0)?, operand(1)?),
        "neg" => Op::Neg(operand(0)?),
        "pow" => Op::Pow(operand(0)?, arg_i(op, 1)?),
        name => match Func::from_name(name) {
            Some(f) => Op::Call(f, operand(0)?),
            None => return Err(bad(format!("unknown op '{name}'"))),
        },
    };
    Ok(out)
}

fn table_to_ir(role: &str, coefficient: Option<usize>, t: &RoleTables) -> IrTable {
    IrTable {
        role: role.to_string(),
        coefficient,
        element: t.element.to_string(),
        space_dim: t.space_dim,
        value_size: t.value_size,
        values: t.values.clone(),
        grads: t.grads.clone(),
    }
}

fn table_from_ir(t: &IrTable, nq: usize, tdim: usize) -> Result<RoleTables, CompilerError> {
    let element = t
        .element
        .parse()
        .map_err(|e| bad(format!("bad element '{}': {e}", t.element)))?;
    let entry = t.space_dim * t.value_size;
    for (vf, gf) in t.values.iter().zip(&t.grads) {
        if vf.len() != gf.len() {
            return Err(bad("table variants are inconsistent"));
        }
        for (vv, gg) in vf.iter().zip(gf) {
            if vv.len() != nq * entry || gg.len() != nq * entry * tdim {
                return Err(bad(format!(
                    "table for '{}' has the wrong size for {} points",
                    t.element, nq
                )));
            }
        }
    }
    Ok(RoleTables {
        element,
        space_dim: t.space_dim,
        value_size: t.value_size,
        values: t.values.clone(),
        grads: t.grads.clone(),
    })
}

/// Serialize a kernel to its JSON IR plus a pseudocode listing.
pub fn emit_kernel_ir(kernel: &Kernel) -> IrArtifact {
    let mut tables = Vec::new();
    if let Some(t) = &kernel.test {
        tables.push(table_to_ir("test", None, t));
    }
    if let Some(t) = &kernel.trial {
        tables.push(table_to_ir("trial", None, t));
    }
    for CoefTables { id, tables: t } in &kernel.coefs {
        tables.push(table_to_ir("coefficient", Some(*id), t));
    }
    let (rows, cols) = kernel.shape();
    let shape = match kernel.rank {
        0 => vec![],
        1 => vec![rows],
        _ => vec![rows, cols],
    };
    let ir = IrKernel {
        schema: SCHEMA.to_string(),
        kind: kernel.kind.name().to_string(),
        cell: kernel.cell.name().to_string(),
        subdomain: kernel.subdomain,
        degree: kernel.degree,
        rank: kernel.rank,
        quadrature: IrQuadrature { points: kernel.points.clone(), weights: kernel.weights.clone() },
        ref_points: kernel.ref_points.clone(),
        ref_facet_volume: kernel.ref_facet_volume,
        tables,
        tape: kernel.tape.iter().map(op_to_ir).collect(),
        shape,
    };
    IrArtifact {
        json: serde_json::to_string_pretty(&ir).expect("kernel ir serializes"),
        listing: listing(kernel),
    }
}

/// Reconstruct an executable kernel from its JSON IR.
pub fn load_kernel_ir(text: &str) -> Result<Kernel, CompilerError> {
    let ir: IrKernel = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    if ir.schema != SCHEMA {
        return Err(bad(format!("schema '{}' is not '{SCHEMA}'", ir.schema)));
    }
    let kind = match ir.kind.as_str() {
        "cell" => KernelKind::Cell,
        "exterior_facet" => KernelKind::ExteriorFacet,
        "interior_facet" => KernelKind::InteriorFacet,
        k => return Err(bad(format!("unknown kernel kind '{k}'"))),
    };
    let cell = CellType::from_name(&ir.cell)
        .ok_or_else(|| bad(format!("unknown cell '{}'", ir.cell)))?;
    if ir.rank > 2 {
        return Err(bad("rank exceeds 2"));
    }
    let tdim = cell.tdim();
    let nq = ir.quadrature.weights.len();
    if nq == 0 {
        return Err(bad("empty quadrature rule"));
    }
    for variants in &ir.ref_points {
        for pts in variants {
            if pts.len() != nq * tdim {
                return Err(bad("embedded points do not match the rule"));
            }
        }
    }
    if ir.ref_points.is_empty() || ir.ref_points.iter().any(|v| v.is_empty()) {
        return Err(bad("missing embedded points"));
    }

    let mut test = None;
    let mut trial = None;
    let mut coefs = Vec::new();
    for t in &ir.tables {
        let tables = table_from_ir(t, nq, tdim)?;
        if tables.values.len() != ir.ref_points.len() {
            return Err(bad("table variants do not match the embedded points"));
        }
        match t.role.as_str() {
            "test" => test = Some(tables),
            "trial" => trial = Some(tables),
            "coefficient" => {
                let id = t.coefficient.ok_or_else(|| bad("coefficient table without an id"))?;
                coefs.push(CoefTables { id, tables });
            }
            r => return Err(bad(format!("unknown table role '{r}'"))),
        }
    }

    let tape = ir
        .tape
        .iter()
        .enumerate()
        .map(|(reg, op)| op_from_ir(op, reg, coefs.len()))
        .collect::<Result<Vec<_>, _>>()?;
    if tape.is_empty() {
        return Err(bad("empty tape"));
    }

    let kernel = Kernel {
        kind,
        cell,
        subdomain: ir.subdomain,
        degree: ir.degree,
        points: ir.quadrature.points,
        weights: ir.quadrature.weights,
        ref_facet_volume: ir.ref_facet_volume,
        ref_points: ir.ref_points,
        rank: ir.rank,
        test,
        trial,
        coefs,
        tape,
    };
    let (rows, cols) = kernel.shape();
    let want = match kernel.rank {
        0 => vec![],
        1 => vec![rows],
        _ => vec![rows, cols],
    };
    if ir.shape != want {
        return Err(bad(format!("declared shape {:?} does not match tables {:?}", ir.shape, want)));
    }
    Ok(kernel)
}

fn describe_op(op: &Op) -> String {
    match *op {
        Op::Const(v) => format!("{v}"),
        Op::Coord(c) => format!("x[{c}]"),
        Op::Normal(c) => format!("n[{c}]"),
        Op::CellSize(s) => format!("h[side {s}]"),
        Op::BasisValue { role, comp, side } => {
            format!("{}_value[comp {comp}, side {side}]", role_name(role))
        }
        Op::BasisGrad { role, comp, dir, side } => {
            format!("{}_grad[comp {comp}, dir {dir}, side {side}]", role_name(role))
        }
        Op::CoefValue { coef, comp, side } => {
            format!("coef{coef}_value[comp {comp}, side {side}]")
        }
        Op::CoefGrad { coef, comp, dir, side } => {
            format!("coef{coef}_grad[comp {comp}, dir {dir}, side {side}]")
        }
        Op::Add(a, b) => format!("r{a} + r{b}"),
        Op::Mul(a, b) => format!("r{a} * r{b}"),
        Op::Div(a, b) => format!("r{a} / r{b}"),
        Op::Neg(a) => format!("-r{a}"),
        Op::Pow(a, k) => format!("r{a}^{k}"),
        Op::Call(f, a) => format!("{}(r{a})", f.name()),
    }
}

fn role_name(role: RoleId) -> &'static str {
    match role {
        RoleId::Test => "test",
        RoleId::Trial => "trial",
    }
}

fn listing(kernel: &Kernel) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let (rows, cols) = kernel.shape();
    let _ = writeln!(
        s,
        "{} kernel on {}, quadrature degree {} ({} points)",
        kernel.kind.name(),
        kernel.cell.name(),
        kernel.degree,
        kernel.weights.len()
    );
    if let Some(sub) = kernel.subdomain {
        let _ = writeln!(s, "subdomain {sub}");
    }
    let _ = match kernel.rank {
        0 => writeln!(s, "output: scalar"),
        1 => writeln!(s, "output: vector of {rows}"),
        _ => writeln!(s, "output: {rows} x {cols} matrix"),
    };
    s.push_str("tables:\n");
    if let Some(t) = &kernel.test {
        let _ = writeln!(s, "  test basis {} ({} dofs)", t.element, t.space_dim);
    }
    if let Some(t) = &kernel.trial {
        let _ = writeln!(s, "  trial basis {} ({} dofs)", t.element, t.space_dim);
    }
    for c in &kernel.coefs {
        let _ = writeln!(
            s,
            "  coefficient {} basis {} ({} dofs)",
            c.id, c.tables.element, c.tables.space_dim
        );
    }
    s.push_str("tape (per quadrature point, per output entry):\n");
    for (r, op) in kernel.tape.iter().enumerate() {
        let _ = writeln!(s, "  r{r} = {}", describe_op(op));
    }
    let last = kernel.tape.len() - 1;
    let scale = match kernel.kind {
        KernelKind::Cell => "w_q * |det J|",
        _ => "w_q * facet_measure / ref_facet_measure",
    };
    let _ = writeln!(s, "accumulate: out[entry] += {scale} * r{last}");
    s
}
