//! Spec files (canonical JSON) and trajectory files (CSV).
//!
//! A spec file is a single JSON object:
//!
//! ```json
//! {
//!   "type": "DDE",
//!   "dims": {"n": 1, "m": 0, "p": 0, "q": 1, "r": 0},
//!   "delays": [1.0000000000000000e0],
//!   "matrices": {"A0": [[-1.0000000000000000e0]], "Ai": [[[5.0000000000000000e-1]]]},
//!   "kernels": {"Adi": [{"degree": 1, "coeffs": [[[0.0e0]], [[1.0e0]]]}]}
//! }
//! ```
//!
//! Matrices are row-major nested arrays; per-delay blocks are lists with one
//! entry per delay; all-zero entries are omitted and readers materialize them
//! as zeros of the conforming shape. Channel forms (`"DDF"`, `"ODEPDE"`) add
//! `"n_v"` and `"p_i"` to `dims` and use the channel matrix names; the
//! integral-equation form (`"PIE"`) replaces `"matrices"`/`"kernels"` with
//! `"operators"`, each operator a set of `"P"`, `"Q1"`, `"Q2"`, `"R0"`,
//! `"R1"`, `"R2"` blocks. A closed feedback loop may carry the open plant and
//! gain it was built from under `"sof"`, so loop-level checks can run from
//! the file alone.
//!
//! Writing is canonical — fixed key order, fixed layout, every float with 17
//! significant digits — so write → read → write reproduces the bytes exactly.
//!
//! A trajectory file is a plain CSV with header
//! `t,x_0,...,y_0,...,z_0,...,v_0,...` and one row per time step, every value
//! again with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use crate::convert::{PieSpec, SofPlant};
use crate::error::{Error, Result};
use crate::kernel::{KernelVars, PolyKernel};
use crate::piops::PiOperator;
use crate::simulate::Trajectory;
use crate::specs::{DdeSpec, DdfSpec, NdsSpec, OdePdeSpec};

/// Any of the five representations, as stored in a spec file.
#[derive(Debug, Clone)]
pub enum AnySpec {
    Dde(DdeSpec),
    Nds(NdsSpec),
    Ddf(DdfSpec),
    OdePde(OdePdeSpec),
    Pie(PieSpec),
}

impl AnySpec {
    /// The `"type"` tag this variant carries in a file.
    pub fn kind(&self) -> &'static str {
        match self {
            AnySpec::Dde(_) => "DDE",
            AnySpec::Nds(_) => "NDS",
            AnySpec::Ddf(_) => "DDF",
            AnySpec::OdePde(_) => "ODEPDE",
            AnySpec::Pie(_) => "PIE",
        }
    }
}

/// The open plant and gain behind a closed static-output-feedback loop.
#[derive(Debug, Clone)]
pub struct SofMeta {
    pub plant: SofPlant,
    pub feedback: DMatrix<f64>,
}

/// One spec file: a representation plus optional feedback-loop metadata.
#[derive(Debug, Clone)]
pub struct SpecFile {
    pub spec: AnySpec,
    /// Present on closed loops written with their plant (only meaningful for
    /// the channel form).
    pub sof: Option<SofMeta>,
}

impl SpecFile {
    pub fn new(spec: AnySpec) -> Self {
        SpecFile { spec, sof: None }
    }
}

pub fn read_spec(path: impl AsRef<Path>) -> Result<SpecFile> {
    spec_from_json(&fs::read_to_string(path)?)
}

pub fn write_spec(path: impl AsRef<Path>, file: &SpecFile) -> Result<()> {
    fs::write(path, spec_to_json(file)?)?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    trajectory_from_csv(&fs::read_to_string(path)?)
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    fs::write(path, trajectory_to_csv(traj)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Canonical JSON writer.

fn push_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn render_floats(xs: &[f64]) -> String {
    let mut out = String::from("[");
    for (i, &v) in xs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        push_f64(&mut out, v);
    }
    out.push(']');
    out
}

fn render_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::from("[");
    for i in 0..m.nrows() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push('[');
        for j in 0..m.ncols() {
            if j > 0 {
                out.push_str(", ");
            }
            push_f64(&mut out, m[(i, j)]);
        }
        out.push(']');
    }
    out.push(']');
    out
}

fn render_kernel(k: &PolyKernel) -> String {
    let mut out = format!("{{\"degree\": {}", k.degree());
    if k.vars() == KernelVars::Two {
        out.push_str(", \"vars\": 2");
    }
    out.push_str(", \"coeffs\": [");
    for (i, c) in k.coeffs().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&render_matrix(c));
    }
    out.push_str("]}");
    out
}

fn nonzero(m: &DMatrix<f64>) -> bool {
    m.iter().any(|&x| x != 0.0)
}

fn render_dims(core: &[(&str, usize)], p_i: Option<&[usize]>) -> String {
    let mut out = String::from("\"dims\": {");
    for (i, (k, v)) in core.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "\"{k}\": {v}");
    }
    if let Some(widths) = p_i {
        out.push_str(", \"p_i\": [");
        for (i, w) in widths.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{w}");
        }
        out.push(']');
    }
    out.push('}');
    out
}

/// Renders a `"matrices"`-style object: plain entries first, then per-delay
/// lists, skipping all-zero content. Returns `None` when nothing survives.
fn render_matrices(
    name: &str,
    pad: &str,
    inst: &[(&str, &DMatrix<f64>)],
    lists: &[(&str, Vec<&DMatrix<f64>>)],
) -> Option<String> {
    let inner = format!("{pad}  ");
    let mut entries = Vec::new();
    for (key, m) in inst {
        if nonzero(m) {
            entries.push(format!("{inner}\"{key}\": {}", render_matrix(m)));
        }
    }
    for (key, ms) in lists {
        if ms.iter().any(|m| nonzero(m)) {
            let items: Vec<String> = ms
                .iter()
                .map(|m| format!("{inner}  {}", render_matrix(m)))
                .collect();
            entries.push(format!(
                "{inner}\"{key}\": [\n{}\n{inner}]",
                items.join(",\n")
            ));
        }
    }
    if entries.is_empty() {
        return None;
    }
    Some(format!(
        "{pad}\"{name}\": {{\n{}\n{pad}}}",
        entries.join(",\n")
    ))
}

/// Renders a `"kernels"` object, skipping names whose kernels are all zero.
fn render_kernels(pad: &str, lists: &[(&str, Vec<&PolyKernel>)]) -> Option<String> {
    let inner = format!("{pad}  ");
    let mut entries = Vec::new();
    for (key, ks) in lists {
        if ks.iter().any(|k| !k.is_zero()) {
            let items: Vec<String> = ks
                .iter()
                .map(|k| format!("{inner}  {}", render_kernel(k)))
                .collect();
            entries.push(format!(
                "{inner}\"{key}\": [\n{}\n{inner}]",
                items.join(",\n")
            ));
        }
    }
    if entries.is_empty() {
        return None;
    }
    Some(format!(
        "{pad}\"kernels\": {{\n{}\n{pad}}}",
        entries.join(",\n")
    ))
}

fn dde_inst(d: &DdeSpec) -> Vec<(&'static str, &DMatrix<f64>)> {
    vec![
        ("A0", &d.a0),
        ("B1", &d.b1),
        ("B2", &d.b2),
        ("C10", &d.c10),
        ("C20", &d.c20),
        ("D11", &d.d11),
        ("D12", &d.d12),
        ("D21", &d.d21),
        ("D22", &d.d22),
    ]
}

fn dde_lists(d: &DdeSpec) -> Vec<(&'static str, Vec<&DMatrix<f64>>)> {
    let pick = |f: fn(&crate::specs::DelayBlock) -> &DMatrix<f64>| {
        d.delayed.iter().map(f).collect::<Vec<_>>()
    };
    vec![
        ("Ai", pick(|b| &b.a)),
        ("B1i", pick(|b| &b.b1)),
        ("B2i", pick(|b| &b.b2)),
        ("C1i", pick(|b| &b.c1)),
        ("C2i", pick(|b| &b.c2)),
        ("D11i", pick(|b| &b.d11)),
        ("D12i", pick(|b| &b.d12)),
        ("D21i", pick(|b| &b.d21)),
        ("D22i", pick(|b| &b.d22)),
    ]
}

fn dde_klists(d: &DdeSpec) -> Vec<(&'static str, Vec<&PolyKernel>)> {
    let pick = |f: fn(&crate::specs::KernelBlock) -> &PolyKernel| {
        d.distributed.iter().map(f).collect::<Vec<_>>()
    };
    vec![
        ("Adi", pick(|b| &b.a)),
        ("B1di", pick(|b| &b.b1)),
        ("B2di", pick(|b| &b.b2)),
        ("C1di", pick(|b| &b.c1)),
        ("C2di", pick(|b| &b.c2)),
        ("D11di", pick(|b| &b.d11)),
        ("D12di", pick(|b| &b.d12)),
        ("D21di", pick(|b| &b.d21)),
        ("D22di", pick(|b| &b.d22)),
    ]
}

fn dde_sections(
    kind: &str,
    d: &DdeSpec,
    extra_lists: Vec<(&'static str, Vec<&DMatrix<f64>>)>,
    extra_klists: Vec<(&'static str, Vec<&PolyKernel>)>,
) -> Vec<String> {
    let mut sections = vec![
        format!("  \"type\": \"{kind}\""),
        format!(
            "  {}",
            render_dims(
                &[("n", d.n), ("m", d.m), ("p", d.p), ("q", d.q), ("r", d.r)],
                None
            )
        ),
        format!("  \"delays\": {}", render_floats(&d.delays)),
    ];
    let mut lists = dde_lists(d);
    lists.extend(extra_lists);
    if let Some(s) = render_matrices("matrices", "  ", &dde_inst(d), &lists) {
        sections.push(s);
    }
    let mut klists = dde_klists(d);
    klists.extend(extra_klists);
    if let Some(s) = render_kernels("  ", &klists) {
        sections.push(s);
    }
    sections
}

fn ddf_sections(kind: &str, d: &DdfSpec, hint: Option<usize>) -> Vec<String> {
    let mut sections = vec![
        format!("  \"type\": \"{kind}\""),
        format!(
            "  {}",
            render_dims(
                &[
                    ("n", d.n),
                    ("m", d.m),
                    ("p", d.p),
                    ("q", d.q),
                    ("r", d.r),
                    ("n_v", d.n_v),
                ],
                Some(&d.channel_dims())
            )
        ),
        format!("  \"delays\": {}", render_floats(&d.delays)),
    ];
    if let Some(m) = hint {
        sections.push(format!("  \"collocation_hint\": {m}"));
    }
    let inst = vec![
        ("A0", &d.a0),
        ("B1", &d.b1),
        ("B2", &d.b2),
        ("C1", &d.c1),
        ("C2", &d.c2),
        ("D11", &d.d11),
        ("D12", &d.d12),
        ("D21", &d.d21),
        ("D22", &d.d22),
        ("Bv", &d.b_v),
        ("D1v", &d.d1v),
        ("D2v", &d.d2v),
    ];
    let pick = |f: fn(&crate::specs::DdfChannel) -> &DMatrix<f64>| {
        d.channels.iter().map(f).collect::<Vec<_>>()
    };
    let lists = vec![
        ("Cri", pick(|c| &c.c_r)),
        ("Br1i", pick(|c| &c.b_r1)),
        ("Br2i", pick(|c| &c.b_r2)),
        ("Drvi", pick(|c| &c.d_rv)),
        ("Cvi", pick(|c| &c.c_v)),
    ];
    if let Some(s) = render_matrices("matrices", "  ", &inst, &lists) {
        sections.push(s);
    }
    let klists = vec![("Cvdi", d.channels.iter().map(|c| &c.c_vd).collect::<Vec<_>>())];
    if let Some(s) = render_kernels("  ", &klists) {
        sections.push(s);
    }
    sections
}

fn render_operator(name: &str, op: &PiOperator, pad: &str) -> String {
    let inner = format!("{pad}  ");
    let mut blocks = Vec::new();
    if nonzero(op.p()) {
        blocks.push(format!("{inner}\"P\": {}", render_matrix(op.p())));
    }
    for (key, k) in [
        ("Q1", op.q1()),
        ("Q2", op.q2()),
        ("R0", op.r0()),
        ("R1", op.r1()),
        ("R2", op.r2()),
    ] {
        if !k.is_zero() {
            blocks.push(format!("{inner}\"{key}\": {}", render_kernel(k)));
        }
    }
    format!("{pad}\"{name}\": {{\n{}\n{pad}}}", blocks.join(",\n"))
}

fn pie_sections(p: &PieSpec) -> Vec<String> {
    let mut sections = vec![
        "  \"type\": \"PIE\"".to_string(),
        format!(
            "  {}",
            render_dims(
                &[("n", p.n), ("m", p.m), ("p", p.p), ("q", p.q), ("r", p.r)],
                Some(&p.p_i)
            )
        ),
        format!("  \"delays\": {}", render_floats(&p.delays)),
    ];
    let ops = [
        ("T", &p.t),
        ("A", &p.a),
        ("B1", &p.b1),
        ("B2", &p.b2),
        ("BT1", &p.bt1),
        ("BT2", &p.bt2),
        ("C1", &p.c1),
        ("C2", &p.c2),
        ("D11", &p.d11),
        ("D12", &p.d12),
        ("D21", &p.d21),
        ("D22", &p.d22),
    ];
    let entries: Vec<String> = ops
        .iter()
        .filter(|(_, op)| !op.is_zero())
        .map(|(name, op)| render_operator(name, op, "    "))
        .collect();
    if !entries.is_empty() {
        sections.push(format!(
            "  \"operators\": {{\n{}\n  }}",
            entries.join(",\n")
        ));
    }
    sections
}

fn sof_section(meta: &SofMeta) -> String {
    let p = &meta.plant;
    let inst = vec![
        ("A0", &p.a0),
        ("B1", &p.b1),
        ("C1", &p.c1),
        ("D11", &p.d11),
        ("D12", &p.d12),
        ("C2", &p.c2),
        ("D21", &p.d21),
    ];
    let lists = vec![
        ("B2i", p.b2i.iter().collect::<Vec<_>>()),
        ("D22i", p.d22i.iter().collect::<Vec<_>>()),
    ];
    let mut plant = vec![
        format!(
            "      {}",
            render_dims(
                &[("n", p.n), ("m", p.m), ("p", p.p), ("q", p.q), ("r", p.r)],
                None
            )
        ),
        format!("      \"delays\": {}", render_floats(&p.delays)),
    ];
    if let Some(s) = render_matrices("matrices", "      ", &inst, &lists) {
        plant.push(s);
    }
    format!(
        "  \"sof\": {{\n    \"plant\": {{\n{}\n    }},\n    \"feedback\": {}\n  }}",
        plant.join(",\n"),
        render_matrix(&meta.feedback)
    )
}

/// Serializes a spec file into canonical JSON (trailing newline included).
pub fn spec_to_json(file: &SpecFile) -> Result<String> {
    let mut sections = match &file.spec {
        AnySpec::Dde(d) => dde_sections("DDE", d, Vec::new(), Vec::new()),
        AnySpec::Nds(s) => {
            let lists = vec![
                ("Ei", s.e.iter().collect::<Vec<_>>()),
                ("E1i", s.e1.iter().collect()),
                ("E2i", s.e2.iter().collect()),
            ];
            let klists = vec![
                ("Edi", s.e_d.iter().collect::<Vec<_>>()),
                ("E1di", s.e1_d.iter().collect()),
                ("E2di", s.e2_d.iter().collect()),
            ];
            dde_sections("NDS", &s.base, lists, klists)
        }
        AnySpec::Ddf(d) => ddf_sections("DDF", d, None),
        AnySpec::OdePde(o) => ddf_sections("ODEPDE", &o.ddf, o.collocation_hint),
        AnySpec::Pie(p) => pie_sections(p),
    };
    if let Some(meta) = &file.sof {
        if !matches!(file.spec, AnySpec::Ddf(_)) {
            return Err(Error::Format(
                "feedback-loop metadata is only written on channel-form specs".into(),
            ));
        }
        sections.push(sof_section(meta));
    }
    let text = format!("{{\n{}\n}}\n", sections.join(",\n"));
    if text.contains("NaN") || text.contains("inf") {
        return Err(Error::Format("spec contains non-finite values".into()));
    }
    Ok(text)
}

// ---------------------------------------------------------------------------
// JSON reader.

fn expect_obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::Format(format!("{path} must be an object")))
}

fn check_keys(map: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Format(format!("unknown key `{key}` in {path}")));
        }
    }
    Ok(())
}

fn get_usize(map: &Map<String, Value>, key: &str, path: &str) -> Result<usize> {
    map.get(key)
        .ok_or_else(|| Error::Format(format!("{path} is missing `{key}`")))?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::Format(format!("{path}.{key} must be a nonnegative integer")))
}

fn get_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::Format(format!("{path} must be a number")))
}

fn parse_matrix(v: &Value, path: &str, want: (usize, usize)) -> Result<DMatrix<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::Format(format!("{path} must be an array of rows")))?;
    if rows.len() != want.0 {
        return Err(Error::Format(format!(
            "{path} has {} rows, expected {}",
            rows.len(),
            want.0
        )));
    }
    let mut data = Vec::with_capacity(want.0 * want.1);
    for (i, rv) in rows.iter().enumerate() {
        let row = rv
            .as_array()
            .ok_or_else(|| Error::Format(format!("{path} row {i} must be an array")))?;
        if row.len() != want.1 {
            return Err(Error::Format(format!(
                "{path} row {i} has {} entries, expected {}",
                row.len(),
                want.1
            )));
        }
        for (j, xv) in row.iter().enumerate() {
            data.push(get_f64(xv, &format!("{path}[{i}][{j}]"))?);
        }
    }
    Ok(DMatrix::from_row_iterator(want.0, want.1, data))
}

fn opt_mat(
    map: Option<&Map<String, Value>>,
    name: &str,
    path: &str,
    want: (usize, usize),
) -> Result<DMatrix<f64>> {
    match map.and_then(|m| m.get(name)) {
        None => Ok(DMatrix::zeros(want.0, want.1)),
        Some(v) => parse_matrix(v, &format!("{path}.{name}"), want),
    }
}

fn opt_mat_list(
    map: Option<&Map<String, Value>>,
    name: &str,
    path: &str,
    shapes: &[(usize, usize)],
) -> Result<Vec<DMatrix<f64>>> {
    match map.and_then(|m| m.get(name)) {
        None => Ok(shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect()),
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::Format(format!("{path}.{name} must be a list")))?;
            if arr.len() != shapes.len() {
                return Err(Error::Format(format!(
                    "{path}.{name} has {} entries, expected one per delay ({})",
                    arr.len(),
                    shapes.len()
                )));
            }
            arr.iter()
                .zip(shapes)
                .enumerate()
                .map(|(i, (mv, &shape))| parse_matrix(mv, &format!("{path}.{name}[{i}]"), shape))
                .collect()
        }
    }
}

fn parse_kernel(
    v: &Value,
    path: &str,
    want: (usize, usize),
    vars: KernelVars,
) -> Result<PolyKernel> {
    let o = expect_obj(v, path)?;
    check_keys(o, path, &["degree", "vars", "coeffs"])?;
    let deg = get_usize(o, "degree", path)?;
    let file_vars = match o.get("vars") {
        None => 1,
        Some(x) => x
            .as_u64()
            .filter(|v| *v == 1 || *v == 2)
            .ok_or_else(|| Error::Format(format!("{path}.vars must be 1 or 2")))?,
    };
    let want_vars = match vars {
        KernelVars::One => 1,
        KernelVars::Two => 2,
    };
    if file_vars != want_vars {
        return Err(Error::Format(format!(
            "{path} must be a {want_vars}-variable kernel"
        )));
    }
    let arr = o
        .get("coeffs")
        .ok_or_else(|| Error::Format(format!("{path} is missing `coeffs`")))?
        .as_array()
        .ok_or_else(|| Error::Format(format!("{path}.coeffs must be a list")))?;
    let want_len = match vars {
        KernelVars::One => deg + 1,
        KernelVars::Two => (deg + 1) * (deg + 1),
    };
    if arr.len() != want_len {
        return Err(Error::Format(format!(
            "{path}.coeffs has {} matrices, degree {deg} needs {want_len}",
            arr.len()
        )));
    }
    let coeffs = arr
        .iter()
        .enumerate()
        .map(|(i, mv)| parse_matrix(mv, &format!("{path}.coeffs[{i}]"), want))
        .collect::<Result<Vec<_>>>()?;
    match vars {
        KernelVars::One => PolyKernel::from_coeffs(coeffs),
        KernelVars::Two => PolyKernel::from_coeffs2(deg, coeffs),
    }
}

fn opt_kernel(
    map: &Map<String, Value>,
    name: &str,
    path: &str,
    want: (usize, usize),
    vars: KernelVars,
) -> Result<PolyKernel> {
    match map.get(name) {
        None => Ok(match vars {
            KernelVars::One => PolyKernel::zero(want.0, want.1),
            KernelVars::Two => PolyKernel::zero2(want.0, want.1),
        }),
        Some(v) => parse_kernel(v, &format!("{path}.{name}"), want, vars),
    }
}

fn opt_kernel_list(
    map: Option<&Map<String, Value>>,
    name: &str,
    path: &str,
    shapes: &[(usize, usize)],
) -> Result<Vec<PolyKernel>> {
    match map.and_then(|m| m.get(name)) {
        None => Ok(shapes
            .iter()
            .map(|&(r, c)| PolyKernel::zero(r, c))
            .collect()),
        Some(v) => {
            let arr = v
                .as_array()
                .ok_or_else(|| Error::Format(format!("{path}.{name} must be a list")))?;
            if arr.len() != shapes.len() {
                return Err(Error::Format(format!(
                    "{path}.{name} has {} entries, expected one per delay ({})",
                    arr.len(),
                    shapes.len()
                )));
            }
            arr.iter()
                .zip(shapes)
                .enumerate()
                .map(|(i, (kv, &shape))| {
                    parse_kernel(
                        kv,
                        &format!("{path}.{name}[{i}]"),
                        shape,
                        KernelVars::One,
                    )
                })
                .collect()
        }
    }
}

fn read_core_dims(obj: &Map<String, Value>) -> Result<(usize, usize, usize, usize, usize)> {
    let d = expect_obj(
        obj.get("dims")
            .ok_or_else(|| Error::Format("document is missing `dims`".into()))?,
        "dims",
    )?;
    check_keys(d, "dims", &["n", "m", "p", "q", "r"])?;
    Ok((
        get_usize(d, "n", "dims")?,
        get_usize(d, "m", "dims")?,
        get_usize(d, "p", "dims")?,
        get_usize(d, "q", "dims")?,
        get_usize(d, "r", "dims")?,
    ))
}

fn read_p_i(d: &Map<String, Value>) -> Result<Vec<usize>> {
    d.get("p_i")
        .ok_or_else(|| Error::Format("dims is missing `p_i`".into()))?
        .as_array()
        .ok_or_else(|| Error::Format("dims.p_i must be a list".into()))?
        .iter()
        .map(|v| {
            v.as_u64()
                .map(|w| w as usize)
                .ok_or_else(|| Error::Format("dims.p_i entries must be nonnegative integers".into()))
        })
        .collect()
}

fn read_delays(obj: &Map<String, Value>) -> Result<Vec<f64>> {
    obj.get("delays")
        .ok_or_else(|| Error::Format("document is missing `delays`".into()))?
        .as_array()
        .ok_or_else(|| Error::Format("delays must be a list".into()))?
        .iter()
        .enumerate()
        .map(|(i, v)| get_f64(v, &format!("delays[{i}]")))
        .collect()
}

fn section<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<Option<&'a Map<String, Value>>> {
    match obj.get(name) {
        None => Ok(None),
        Some(v) => Ok(Some(expect_obj(v, name)?)),
    }
}

const DDE_MAT_NAMES: [&str; 18] = [
    "A0", "B1", "B2", "C10", "C20", "D11", "D12", "D21", "D22", "Ai", "B1i", "B2i", "C1i",
    "C2i", "D11i", "D12i", "D21i", "D22i",
];
const DDE_KER_NAMES: [&str; 9] = [
    "Adi", "B1di", "B2di", "C1di", "C2di", "D11di", "D12di", "D21di", "D22di",
];
const NDS_MAT_NAMES: [&str; 21] = [
    "A0", "B1", "B2", "C10", "C20", "D11", "D12", "D21", "D22", "Ai", "B1i", "B2i", "C1i",
    "C2i", "D11i", "D12i", "D21i", "D22i", "Ei", "E1i", "E2i",
];
const NDS_KER_NAMES: [&str; 12] = [
    "Adi", "B1di", "B2di", "C1di", "C2di", "D11di", "D12di", "D21di", "D22di", "Edi", "E1di",
    "E2di",
];
const DDF_MAT_NAMES: [&str; 17] = [
    "A0", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22", "Bv", "D1v", "D2v", "Cri",
    "Br1i", "Br2i", "Drvi", "Cvi",
];

fn read_dde_core(
    obj: &Map<String, Value>,
    mat_names: &[&str],
    ker_names: &[&str],
) -> Result<DdeSpec> {
    let (n, m, p, q, r) = read_core_dims(obj)?;
    let delays = read_delays(obj)?;
    let k = delays.len();
    let mut d = DdeSpec::zero(n, m, p, q, r, delays);
    let mats = section(obj, "matrices")?;
    if let Some(ms) = mats {
        check_keys(ms, "matrices", mat_names)?;
    }
    d.a0 = opt_mat(mats, "A0", "matrices", (n, n))?;
    d.b1 = opt_mat(mats, "B1", "matrices", (n, m))?;
    d.b2 = opt_mat(mats, "B2", "matrices", (n, p))?;
    d.c10 = opt_mat(mats, "C10", "matrices", (q, n))?;
    d.c20 = opt_mat(mats, "C20", "matrices", (r, n))?;
    d.d11 = opt_mat(mats, "D11", "matrices", (q, m))?;
    d.d12 = opt_mat(mats, "D12", "matrices", (q, p))?;
    d.d21 = opt_mat(mats, "D21", "matrices", (r, m))?;
    d.d22 = opt_mat(mats, "D22", "matrices", (r, p))?;
    let shapes: [(&str, (usize, usize)); 9] = [
        ("Ai", (n, n)),
        ("B1i", (n, m)),
        ("B2i", (n, p)),
        ("C1i", (q, n)),
        ("C2i", (r, n)),
        ("D11i", (q, m)),
        ("D12i", (q, p)),
        ("D21i", (r, m)),
        ("D22i", (r, p)),
    ];
    for (name, shape) in shapes {
        let list = opt_mat_list(mats, name, "matrices", &vec![shape; k])?;
        for (blk, m) in d.delayed.iter_mut().zip(list) {
            match name {
                "Ai" => blk.a = m,
                "B1i" => blk.b1 = m,
                "B2i" => blk.b2 = m,
                "C1i" => blk.c1 = m,
                "C2i" => blk.c2 = m,
                "D11i" => blk.d11 = m,
                "D12i" => blk.d12 = m,
                "D21i" => blk.d21 = m,
                _ => blk.d22 = m,
            }
        }
    }
    let kers = section(obj, "kernels")?;
    if let Some(ks) = kers {
        check_keys(ks, "kernels", ker_names)?;
    }
    let kshapes: [(&str, (usize, usize)); 9] = [
        ("Adi", (n, n)),
        ("B1di", (n, m)),
        ("B2di", (n, p)),
        ("C1di", (q, n)),
        ("C2di", (r, n)),
        ("D11di", (q, m)),
        ("D12di", (q, p)),
        ("D21di", (r, m)),
        ("D22di", (r, p)),
    ];
    for (name, shape) in kshapes {
        let list = opt_kernel_list(kers, name, "kernels", &vec![shape; k])?;
        for (blk, kernel) in d.distributed.iter_mut().zip(list) {
            match name {
                "Adi" => blk.a = kernel,
                "B1di" => blk.b1 = kernel,
                "B2di" => blk.b2 = kernel,
                "C1di" => blk.c1 = kernel,
                "C2di" => blk.c2 = kernel,
                "D11di" => blk.d11 = kernel,
                "D12di" => blk.d12 = kernel,
                "D21di" => blk.d21 = kernel,
                _ => blk.d22 = kernel,
            }
        }
    }
    Ok(d)
}

fn read_nds(obj: &Map<String, Value>) -> Result<NdsSpec> {
    let base = read_dde_core(obj, &NDS_MAT_NAMES, &NDS_KER_NAMES)?;
    let (n, q, r, k) = (base.n, base.q, base.r, base.delays.len());
    let mut s = NdsSpec::from_dde(base);
    let mats = section(obj, "matrices")?;
    s.e = opt_mat_list(mats, "Ei", "matrices", &vec![(n, n); k])?;
    s.e1 = opt_mat_list(mats, "E1i", "matrices", &vec![(q, n); k])?;
    s.e2 = opt_mat_list(mats, "E2i", "matrices", &vec![(r, n); k])?;
    let kers = section(obj, "kernels")?;
    s.e_d = opt_kernel_list(kers, "Edi", "kernels", &vec![(n, n); k])?;
    s.e1_d = opt_kernel_list(kers, "E1di", "kernels", &vec![(q, n); k])?;
    s.e2_d = opt_kernel_list(kers, "E2di", "kernels", &vec![(r, n); k])?;
    Ok(s)
}

fn read_ddf(obj: &Map<String, Value>) -> Result<DdfSpec> {
    let dims = expect_obj(
        obj.get("dims")
            .ok_or_else(|| Error::Format("document is missing `dims`".into()))?,
        "dims",
    )?;
    check_keys(dims, "dims", &["n", "m", "p", "q", "r", "n_v", "p_i"])?;
    let (n, m, p, q, r, n_v) = (
        get_usize(dims, "n", "dims")?,
        get_usize(dims, "m", "dims")?,
        get_usize(dims, "p", "dims")?,
        get_usize(dims, "q", "dims")?,
        get_usize(dims, "r", "dims")?,
        get_usize(dims, "n_v", "dims")?,
    );
    let p_i = read_p_i(dims)?;
    let delays = read_delays(obj)?;
    if p_i.len() != delays.len() {
        return Err(Error::Format(format!(
            "dims.p_i has {} entries for {} delays",
            p_i.len(),
            delays.len()
        )));
    }
    let mut d = DdfSpec::zero(n, m, p, q, r, n_v, delays, p_i.clone());
    let mats = section(obj, "matrices")?;
    if let Some(ms) = mats {
        check_keys(ms, "matrices", &DDF_MAT_NAMES)?;
    }
    d.a0 = opt_mat(mats, "A0", "matrices", (n, n))?;
    d.b1 = opt_mat(mats, "B1", "matrices", (n, m))?;
    d.b2 = opt_mat(mats, "B2", "matrices", (n, p))?;
    d.c1 = opt_mat(mats, "C1", "matrices", (q, n))?;
    d.c2 = opt_mat(mats, "C2", "matrices", (r, n))?;
    d.d11 = opt_mat(mats, "D11", "matrices", (q, m))?;
    d.d12 = opt_mat(mats, "D12", "matrices", (q, p))?;
    d.d21 = opt_mat(mats, "D21", "matrices", (r, m))?;
    d.d22 = opt_mat(mats, "D22", "matrices", (r, p))?;
    d.b_v = opt_mat(mats, "Bv", "matrices", (n, n_v))?;
    d.d1v = opt_mat(mats, "D1v", "matrices", (q, n_v))?;
    d.d2v = opt_mat(mats, "D2v", "matrices", (r, n_v))?;
    let cri = opt_mat_list(
        mats,
        "Cri",
        "matrices",
        &p_i.iter().map(|&w| (w, n)).collect::<Vec<_>>(),
    )?;
    let br1i = opt_mat_list(
        mats,
        "Br1i",
        "matrices",
        &p_i.iter().map(|&w| (w, m)).collect::<Vec<_>>(),
    )?;
    let br2i = opt_mat_list(
        mats,
        "Br2i",
        "matrices",
        &p_i.iter().map(|&w| (w, p)).collect::<Vec<_>>(),
    )?;
    let drvi = opt_mat_list(
        mats,
        "Drvi",
        "matrices",
        &p_i.iter().map(|&w| (w, n_v)).collect::<Vec<_>>(),
    )?;
    let cvi = opt_mat_list(
        mats,
        "Cvi",
        "matrices",
        &p_i.iter().map(|&w| (n_v, w)).collect::<Vec<_>>(),
    )?;
    let kers = section(obj, "kernels")?;
    if let Some(ks) = kers {
        check_keys(ks, "kernels", &["Cvdi"])?;
    }
    let cvdi = opt_kernel_list(
        kers,
        "Cvdi",
        "kernels",
        &p_i.iter().map(|&w| (n_v, w)).collect::<Vec<_>>(),
    )?;
    for (i, ch) in d.channels.iter_mut().enumerate() {
        ch.c_r = cri[i].clone();
        ch.b_r1 = br1i[i].clone();
        ch.b_r2 = br2i[i].clone();
        ch.d_rv = drvi[i].clone();
        ch.c_v = cvi[i].clone();
        ch.c_vd = cvdi[i].clone();
    }
    Ok(d)
}

fn read_operator(
    map: Option<&Map<String, Value>>,
    name: &str,
    shape: (usize, usize, usize, usize),
) -> Result<PiOperator> {
    let (fo, fi, po, pi) = shape;
    match map.and_then(|m| m.get(name)) {
        None => Ok(PiOperator::zero(fo, fi, po, pi)),
        Some(v) => {
            let path = format!("operators.{name}");
            let o = expect_obj(v, &path)?;
            check_keys(o, &path, &["P", "Q1", "Q2", "R0", "R1", "R2"])?;
            let p = match o.get("P") {
                None => DMatrix::zeros(fo, fi),
                Some(mv) => parse_matrix(mv, &format!("{path}.P"), (fo, fi))?,
            };
            let q1 = opt_kernel(o, "Q1", &path, (fo, pi), KernelVars::One)?;
            let q2 = opt_kernel(o, "Q2", &path, (po, fi), KernelVars::One)?;
            let r0 = opt_kernel(o, "R0", &path, (po, pi), KernelVars::One)?;
            let r1 = opt_kernel(o, "R1", &path, (po, pi), KernelVars::Two)?;
            let r2 = opt_kernel(o, "R2", &path, (po, pi), KernelVars::Two)?;
            PiOperator::new(p, q1, q2, r0, r1, r2)
        }
    }
}

fn read_pie(obj: &Map<String, Value>) -> Result<PieSpec> {
    let dims = expect_obj(
        obj.get("dims")
            .ok_or_else(|| Error::Format("document is missing `dims`".into()))?,
        "dims",
    )?;
    check_keys(dims, "dims", &["n", "m", "p", "q", "r", "p_i"])?;
    let (n, m, p, q, r) = (
        get_usize(dims, "n", "dims")?,
        get_usize(dims, "m", "dims")?,
        get_usize(dims, "p", "dims")?,
        get_usize(dims, "q", "dims")?,
        get_usize(dims, "r", "dims")?,
    );
    let p_i = read_p_i(dims)?;
    let delays = read_delays(obj)?;
    if p_i.len() != delays.len() {
        return Err(Error::Format(format!(
            "dims.p_i has {} entries for {} delays",
            p_i.len(),
            delays.len()
        )));
    }
    let fun: usize = p_i.iter().sum();
    let ops = section(obj, "operators")?;
    if let Some(os) = ops {
        check_keys(
            os,
            "operators",
            &[
                "T", "A", "B1", "B2", "BT1", "BT2", "C1", "C2", "D11", "D12", "D21", "D22",
            ],
        )?;
    }
    Ok(PieSpec {
        n,
        m,
        p,
        q,
        r,
        delays,
        p_i,
        t: read_operator(ops, "T", (n, n, fun, fun))?,
        a: read_operator(ops, "A", (n, n, fun, fun))?,
        b1: read_operator(ops, "B1", (n, m, fun, 0))?,
        b2: read_operator(ops, "B2", (n, p, fun, 0))?,
        bt1: read_operator(ops, "BT1", (n, m, fun, 0))?,
        bt2: read_operator(ops, "BT2", (n, p, fun, 0))?,
        c1: read_operator(ops, "C1", (q, n, 0, fun))?,
        c2: read_operator(ops, "C2", (r, n, 0, fun))?,
        d11: read_operator(ops, "D11", (q, m, 0, 0))?,
        d12: read_operator(ops, "D12", (q, p, 0, 0))?,
        d21: read_operator(ops, "D21", (r, m, 0, 0))?,
        d22: read_operator(ops, "D22", (r, p, 0, 0))?,
    })
}

fn read_sof(obj: &Map<String, Value>) -> Result<Option<SofMeta>> {
    let Some(v) = obj.get("sof") else {
        return Ok(None);
    };
    let o = expect_obj(v, "sof")?;
    check_keys(o, "sof", &["plant", "feedback"])?;
    let pv = expect_obj(
        o.get("plant")
            .ok_or_else(|| Error::Format("sof is missing `plant`".into()))?,
        "sof.plant",
    )?;
    check_keys(pv, "sof.plant", &["dims", "delays", "matrices"])?;
    let (n, m, p, q, r) = read_core_dims(pv)?;
    let delays = read_delays(pv)?;
    let k = delays.len();
    let mats = section(pv, "matrices")?;
    if let Some(ms) = mats {
        check_keys(
            ms,
            "sof.plant.matrices",
            &["A0", "B1", "C1", "D11", "D12", "C2", "D21", "B2i", "D22i"],
        )?;
    }
    let plant = SofPlant {
        n,
        m,
        p,
        q,
        r,
        delays,
        a0: opt_mat(mats, "A0", "sof.plant.matrices", (n, n))?,
        b1: opt_mat(mats, "B1", "sof.plant.matrices", (n, m))?,
        c1: opt_mat(mats, "C1", "sof.plant.matrices", (q, n))?,
        d11: opt_mat(mats, "D11", "sof.plant.matrices", (q, m))?,
        d12: opt_mat(mats, "D12", "sof.plant.matrices", (q, p))?,
        c2: opt_mat(mats, "C2", "sof.plant.matrices", (r, n))?,
        d21: opt_mat(mats, "D21", "sof.plant.matrices", (r, m))?,
        b2i: opt_mat_list(mats, "B2i", "sof.plant.matrices", &vec![(n, p); k])?,
        d22i: opt_mat_list(mats, "D22i", "sof.plant.matrices", &vec![(r, p); k])?,
    };
    let feedback = parse_matrix(
        o.get("feedback")
            .ok_or_else(|| Error::Format("sof is missing `feedback`".into()))?,
        "sof.feedback",
        (p, r),
    )?;
    Ok(Some(SofMeta { plant, feedback }))
}

/// Parses a spec file from JSON text.
pub fn spec_from_json(text: &str) -> Result<SpecFile> {
    let root: Value = serde_json::from_str(text)?;
    let obj = expect_obj(&root, "document")?;
    let ty = obj
        .get("type")
        .ok_or_else(|| Error::Format("document is missing `type`".into()))?
        .as_str()
        .ok_or_else(|| Error::Format("`type` must be a string".into()))?;
    match ty {
        "DDE" => {
            check_keys(obj, "document", &["type", "dims", "delays", "matrices", "kernels"])?;
            Ok(SpecFile::new(AnySpec::Dde(read_dde_core(
                obj,
                &DDE_MAT_NAMES,
                &DDE_KER_NAMES,
            )?)))
        }
        "NDS" => {
            check_keys(obj, "document", &["type", "dims", "delays", "matrices", "kernels"])?;
            Ok(SpecFile::new(AnySpec::Nds(read_nds(obj)?)))
        }
        "DDF" => {
            check_keys(
                obj,
                "document",
                &["type", "dims", "delays", "matrices", "kernels", "sof"],
            )?;
            let spec = AnySpec::Ddf(read_ddf(obj)?);
            Ok(SpecFile {
                spec,
                sof: read_sof(obj)?,
            })
        }
        "ODEPDE" => {
            check_keys(
                obj,
                "document",
                &[
                    "type",
                    "dims",
                    "delays",
                    "collocation_hint",
                    "matrices",
                    "kernels",
                ],
            )?;
            let hint = match obj.get("collocation_hint") {
                None => None,
                Some(v) => Some(
                    v.as_u64()
                        .map(|x| x as usize)
                        .ok_or_else(|| {
                            Error::Format("collocation_hint must be a nonnegative integer".into())
                        })?,
                ),
            };
            Ok(SpecFile::new(AnySpec::OdePde(OdePdeSpec {
                ddf: read_ddf(obj)?,
                collocation_hint: hint,
            })))
        }
        "PIE" => {
            check_keys(obj, "document", &["type", "dims", "delays", "operators"])?;
            Ok(SpecFile::new(AnySpec::Pie(read_pie(obj)?)))
        }
        other => Err(Error::Format(format!("unknown spec type `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// Trajectory CSV.

/// Serializes a trajectory as CSV: header `t,x_0,...,y_0,...,z_0,...,v_0,...`
/// and one row per step, 17 significant digits throughout.
pub fn trajectory_to_csv(traj: &Trajectory) -> Result<String> {
    if traj.is_empty() {
        return Err(Error::Input("cannot write an empty trajectory".into()));
    }
    let (nx, ny, nz, nv) = (
        traj.x[0].len(),
        traj.y[0].len(),
        traj.z[0].len(),
        traj.v[0].len(),
    );
    let mut out = String::from("t");
    for (prefix, count) in [("x", nx), ("y", ny), ("z", nz), ("v", nv)] {
        for i in 0..count {
            let _ = write!(out, ",{prefix}_{i}");
        }
    }
    out.push('\n');
    for k in 0..traj.len() {
        push_f64(&mut out, traj.t[k]);
        for series in [&traj.x[k], &traj.y[k], &traj.z[k], &traj.v[k]] {
            for &v in series.iter() {
                out.push(',');
                push_f64(&mut out, v);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Parses a trajectory CSV produced by [`trajectory_to_csv`]. The time grid
/// must be uniform; channel traces and profiles are not part of the format.
pub fn trajectory_from_csv(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("trajectory file is empty".into()))?;
    let mut labels = header.split(',');
    if labels.next() != Some("t") {
        return Err(Error::Format(
            "trajectory header must start with `t`".into(),
        ));
    }
    let mut counts = [0usize; 4];
    let order = ["x", "y", "z", "v"];
    let mut group = 0usize;
    for label in labels {
        loop {
            if group == order.len() {
                return Err(Error::Format(format!(
                    "unexpected trajectory column `{label}`"
                )));
            }
            if label == format!("{}_{}", order[group], counts[group]) {
                counts[group] += 1;
                break;
            }
            group += 1;
        }
    }
    let (nx, ny, nz, nv) = (counts[0], counts[1], counts[2], counts[3]);
    let width = 1 + nx + ny + nz + nv;
    let mut t = Vec::new();
    let (mut x, mut y, mut z, mut v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .enumerate()
            .map(|(col, s)| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("row {}: column {col} is not a number", row + 2))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != width {
            return Err(Error::Format(format!(
                "row {}: {} columns, header has {width}",
                row + 2,
                vals.len()
            )));
        }
        if vals.iter().any(|w| !w.is_finite()) {
            return Err(Error::Format(format!("row {}: non-finite value", row + 2)));
        }
        t.push(vals[0]);
        let mut at = 1;
        for (count, dest) in [(nx, &mut x), (ny, &mut y), (nz, &mut z), (nv, &mut v)] {
            dest.push(DVector::from_column_slice(&vals[at..at + count]));
            at += count;
        }
    }
    if t.is_empty() {
        return Err(Error::Format("trajectory file has no data rows".into()));
    }
    let dt = if t.len() >= 2 { t[1] - t[0] } else { 1.0 };
    for w in t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 {
            return Err(Error::Format("trajectory time grid is not uniform".into()));
        }
    }
    let rows = t.len();
    Ok(Trajectory {
        dt,
        t,
        x,
        z,
        y,
        v,
        w: vec![DVector::zeros(0); rows],
        u: vec![DVector::zeros(0); rows],
        channels: Vec::new(),
        collocation: None,
    })
}
