use std::fmt::Write;

use super::{CastKind, CmpPred, Edge, KernelProgram, Literal, Op};

pub(crate) fn mnemonic(op: &Op) -> String {
    match op {
        Op::Binary(b) => b.mnemonic().to_string(),
        Op::Cmp(p) => format!("cmp.{}", p.suffix()),
        Op::Cast(c) => format!("cast.{}", c.suffix()),
        Op::Load => "load".into(),
        Op::Store => "store".into(),
        Op::Send => "send".into(),
        Op::Recv => "recv".into(),
        Op::Accel(_) => "accel".into(),
        Op::TileId => "tile_id".into(),
        Op::NumTiles => "num_tiles".into(),
        Op::Const(_) => "const".into(),
        Op::Mov => "mov".into(),
        Op::Select => "select".into(),
        Op::Br(_) => "br".into(),
        Op::CondBr(..) => "cbr".into(),
        Op::Ret => "ret".into(),
    }
}

pub(crate) fn literal(lit: Literal) -> String {
    match lit {
        Literal::Int(v) => v.to_string(),
        Literal::Float(bits) => {
            let v = f64::from_bits(bits);
            if v.is_nan() {
                "nan".into()
            } else if v.is_infinite() {
                if v > 0.0 { "inf".into() } else { "-inf".into() }
            } else {
                let s = format!("{:?}", v);
                if s.contains('.') || s.contains('e') {
                    s
                } else {
                    format!("{}.0", s)
                }
            }
        }
    }
}

fn edge(e: &Edge) -> String {
    format!("{}({})", e.target, e.args.join(", "))
}

pub(crate) fn print_kernel(p: &KernelProgram) -> String {
    let mut out = String::new();
    let params: Vec<String> = p
        .params
        .iter()
        .map(|q| format!("{}: {}", q.name, q.kind.name()))
        .collect();
    let _ = writeln!(out, "kernel {}({})", p.name, params.join(", "));
    for b in &p.blocks {
        let _ = writeln!(out, "block {}({}):", b.id, b.inputs.join(", "));
        for n in &b.nodes {
            out.push_str("  ");
            if let Some(r) = &n.result {
                let _ = write!(out, "{} = ", r);
            }
            out.push_str(&mnemonic(&n.op));
            match &n.op {
                Op::Accel(model) => {
                    let _ = write!(out, " {}", model);
                }
                Op::Const(lit) => {
                    let _ = write!(out, " {}", literal(*lit));
                }
                _ => {}
            }
            for o in &n.operands {
                let _ = write!(out, " {}", o);
            }
            for e in n.op.edges() {
                let _ = write!(out, " {}", edge(e));
            }
            out.push('\n');
        }
    }
    out
}

// Keeps the enums referenced from the parser in one place.
pub(crate) fn cmp_from_suffix(s: &str) -> Option<CmpPred> {
    CmpPred::ALL.iter().copied().find(|p| p.suffix() == s)
}

pub(crate) fn cast_from_suffix(s: &str) -> Option<CastKind> {
    [CastKind::IntToFloat, CastKind::FloatToInt]
        .into_iter()
        .find(|c| c.suffix() == s)
}
