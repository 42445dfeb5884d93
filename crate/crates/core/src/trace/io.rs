//! Trace file formats.
//!
//! * ctrl: block IDs, either binary little-endian u32 or text one per line.
//! * mem: 15-byte records `node u32 | addr u64 | size u16 | is_write u8`, LE.
//! * comm: text lines `<node> <peer>`.
//! * accel: text lines `accel <model> instances=<n> bytes=<b> iters=<p0l0,p0l1;p1l0>`
//!   optionally followed by `node=<id>`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{AccelInvocation, CommRecord, DynamicTrace, MemRecord};
use crate::error::TraceError;
use crate::ir::BlockId;

pub const MEM_RECORD_BYTES: usize = 15;

pub fn ctrl_to_binary(ctrl: &[BlockId]) -> Vec<u8> {
    ctrl.iter().flat_map(|b| b.to_le_bytes()).collect()
}

pub fn ctrl_from_binary(bytes: &[u8]) -> Result<Vec<BlockId>, TraceError> {
    if bytes.len() % 4 != 0 {
        return Err(TraceError::Format(format!(
            "binary ctrl trace length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn ctrl_to_text(ctrl: &[BlockId]) -> String {
    let mut s = String::with_capacity(ctrl.len() * 3);
    for b in ctrl {
        s.push_str(&b.to_string());
        s.push('\n');
    }
    s
}

pub fn ctrl_from_text(text: &str) -> Result<Vec<BlockId>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<BlockId>()
                .map_err(|_| TraceError::Format(format!("ctrl line {}: `{}` is not a block ID", i + 1, l.trim())))
        })
        .collect()
}

pub fn mem_to_binary(mem: &[MemRecord]) -> Vec<u8> {
    let mut out = Vec::with_capacity(mem.len() * MEM_RECORD_BYTES);
    for r in mem {
        out.extend_from_slice(&r.node.to_le_bytes());
        out.extend_from_slice(&r.addr.to_le_bytes());
        out.extend_from_slice(&r.size.to_le_bytes());
        out.push(r.is_write as u8);
    }
    out
}

pub fn mem_from_binary(bytes: &[u8]) -> Result<Vec<MemRecord>, TraceError> {
    if bytes.len() % MEM_RECORD_BYTES != 0 {
        return Err(TraceError::Format(format!(
            "mem trace length {} is not a multiple of {}",
            bytes.len(),
            MEM_RECORD_BYTES
        )));
    }
    bytes
        .chunks_exact(MEM_RECORD_BYTES)
        .map(|c| {
            let flag = c[14];
            if flag > 1 {
                return Err(TraceError::Format(format!("mem record write flag {}", flag)));
            }
            Ok(MemRecord {
                node: u32::from_le_bytes(c[0..4].try_into().unwrap()),
                addr: u64::from_le_bytes(c[4..12].try_into().unwrap()),
                size: u16::from_le_bytes(c[12..14].try_into().unwrap()),
                is_write: flag == 1,
            })
        })
        .collect()
}

pub fn comm_to_text(comm: &[CommRecord]) -> String {
    comm.iter().map(|c| format!("{} {}\n", c.node, c.peer)).collect()
}

pub fn comm_from_text(text: &str) -> Result<Vec<CommRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<u32>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(node)), Some(Ok(peer)), None) => out.push(CommRecord { node, peer }),
            _ => return Err(TraceError::Format(format!("comm line {}: expected `<node> <peer>`", i + 1))),
        }
    }
    Ok(out)
}

pub fn accel_to_text(accel: &[AccelInvocation]) -> String {
    let mut s = String::new();
    for a in accel {
        let iters: Vec<String> = a
            .iteration_counts
            .iter()
            .map(|p| p.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
            .collect();
        s.push_str(&format!(
            "accel {} instances={} bytes={} iters={} node={}\n",
            a.model_id,
            a.num_instances,
            a.bytes,
            iters.join(";"),
            a.node
        ));
    }
    s
}

pub fn accel_from_text(text: &str) -> Result<Vec<AccelInvocation>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| TraceError::Format(format!("accel line {}: {}", i + 1, msg));
        let mut words = line.split_whitespace();
        if words.next() != Some("accel") {
            return Err(bad("expected `accel`"));
        }
        let model_id = words.next().ok_or_else(|| bad("missing model"))?.to_string();
        let mut inv = AccelInvocation {
            node: 0,
            model_id,
            iteration_counts: Vec::new(),
            bytes: 0,
            num_instances: 1,
        };
        let mut seen_iters = false;
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(&format!("bad number `{}`", v)));
            match k {
                "instances" => inv.num_instances = num(v)? as u32,
                "bytes" => inv.bytes = num(v)?,
                "node" => inv.node = num(v)? as u32,
                "iters" => {
                    seen_iters = true;
                    inv.iteration_counts = v
                        .split(';')
                        .map(|p| p.split(',').map(num).collect::<Result<Vec<_>, _>>())
                        .collect::<Result<_, _>>()?;
                }
                other => return Err(bad(&format!("unknown key `{}`", other))),
            }
        }
        if !seen_iters {
            return Err(bad("missing iters="));
        }
        out.push(inv);
    }
    Ok(out)
}

fn paths(dir: &Path, prefix: &str) -> [PathBuf; 4] {
    ["ctrl", "mem", "comm", "accel"].map(|ext| dir.join(format!("{}.{}", prefix, ext)))
}

/// Write `<prefix>.ctrl` (binary), `.mem`, `.comm` and `.accel` under `dir`.
pub fn save_trace(dir: &Path, prefix: &str, trace: &DynamicTrace) -> Result<(), TraceError> {
    let [c, m, k, a] = paths(dir, prefix);
    fs::write(c, ctrl_to_binary(&trace.ctrl))?;
    fs::write(m, mem_to_binary(&trace.mem))?;
    fs::write(k, comm_to_text(&trace.comm))?;
    fs::write(a, accel_to_text(&trace.accel))?;
    Ok(())
}

/// Inverse of [`save_trace`]. A ctrl file that is valid UTF-8 made of digits
/// and newlines is read as text, anything else as binary.
pub fn load_trace(dir: &Path, prefix: &str, tile_id: u32, num_tiles: u32) -> Result<DynamicTrace, TraceError> {
    let [c, m, k, a] = paths(dir, prefix);
    let raw = fs::read(c)?;
    let is_text = !raw.is_empty()
        && raw.iter().all(|b| b.is_ascii_digit() || b.is_ascii_whitespace())
        && raw.last() == Some(&b'\n');
    let ctrl = if is_text {
        ctrl_from_text(std::str::from_utf8(&raw).expect("ascii"))?
    } else {
        ctrl_from_binary(&raw)?
    };
    Ok(DynamicTrace {
        tile_id,
        num_tiles,
        ctrl,
        mem: mem_from_binary(&fs::read(m)?)?,
        comm: comm_from_text(&fs::read_to_string(k)?)?,
        accel: accel_from_text(&fs::read_to_string(a)?)?,
        instructions: 0,
    })
}
