//! Bundled benchmark kernels with deterministic input generators and native
//! reference results for functional checks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{parse_kernel, KernelProgram};
use crate::trace::{MemImage, WORD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    /// Tile count the kernel needs at least.
    pub min_tiles: u32,
    /// Plain compute kernel (no messages, no accelerator calls).
    pub sliceable: bool,
    pub default_size: usize,
}

pub const BENCHMARKS: &[Benchmark] = &[
    Benchmark {
        name: "vecadd",
        source: include_str!("../kernels/vecadd.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 1024,
    },
    Benchmark {
        name: "sgemm",
        source: include_str!("../kernels/sgemm.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 16,
    },
    Benchmark {
        name: "spmv",
        source: include_str!("../kernels/spmv.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 256,
    },
    Benchmark {
        name: "histogram",
        source: include_str!("../kernels/histogram.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 1024,
    },
    Benchmark {
        name: "bipartite",
        source: include_str!("../kernels/bipartite.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 128,
    },
    Benchmark {
        name: "ewsd",
        source: include_str!("../kernels/ewsd.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 128,
    },
    Benchmark {
        name: "dot",
        source: include_str!("../kernels/dot.k"),
        min_tiles: 1,
        sliceable: true,
        default_size: 64,
    },
    Benchmark {
        name: "pingpong",
        source: include_str!("../kernels/pingpong.k"),
        min_tiles: 2,
        sliceable: false,
        default_size: 1,
    },
    Benchmark {
        name: "sgemm_accel",
        source: include_str!("../kernels/sgemm_accel.k"),
        min_tiles: 1,
        sliceable: false,
        default_size: 16,
    },
];

pub fn benchmark(name: &str) -> Option<&'static Benchmark> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

impl Benchmark {
    pub fn program(&self) -> KernelProgram {
        parse_kernel(self.source).unwrap_or_else(|e| panic!("bundled kernel {} does not parse: {}", self.name, e))
    }
}

/// A named range of memory the kernel writes, with the value it should hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: &'static str,
    pub addr: u64,
    pub expected: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub params: Vec<u64>,
    pub mem: MemImage,
    pub outputs: Vec<Region>,
}

impl Workload {
    /// Compare the output regions of a final memory image with the native
    /// reference.
    pub fn check(&self, mem: &MemImage) -> Result<(), String> {
        for r in &self.outputs {
            let got = mem.words(r.addr, r.expected.len());
            if let Some(i) = (0..got.len()).find(|&i| got[i] != r.expected[i]) {
                return Err(format!(
                    "{}[{}] at {:#x}: got {:#x}, expected {:#x}",
                    r.name,
                    i,
                    r.addr + i as u64 * WORD,
                    got[i],
                    r.expected[i]
                ));
            }
        }
        Ok(())
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn rand_f64s(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Small integers keep every sum exact regardless of order.
    (0..n).map(|_| rng.gen_range(-8i32..=8) as f64).collect()
}

/// CSR matrix with `per_row` distinct random columns per row.
fn random_csr(rng: &mut ChaCha8Rng, rows: usize, cols: usize, per_row: usize) -> (Vec<u64>, Vec<u64>) {
    let mut rowptr = vec![0u64];
    let mut col = Vec::new();
    for _ in 0..rows {
        let k = per_row.min(cols);
        let mut picked: Vec<u64> = sample(rng, cols, k).into_iter().map(|c| c as u64).collect();
        picked.sort_unstable();
        col.extend(picked);
        rowptr.push(col.len() as u64);
    }
    (rowptr, col)
}

/// Build inputs for a bundled kernel. `size` scales the problem (see each
/// kernel's source); `tiles` only matters for kernels with per-tile output.
pub fn workload(name: &str, size: usize, seed: u64, tiles: u32) -> Result<Workload, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mem = MemImage::new();
    let size = size.max(1);
    let w = match name {
        "vecadd" => {
            let a: Vec<u64> = (0..size).map(|_| rng.gen_range(0..1000)).collect();
            let b: Vec<u64> = (0..size).map(|_| rng.gen_range(0..1000)).collect();
            let pa = mem.alloc_from(&a);
            let pb = mem.alloc_from(&b);
            let pc = mem.alloc(size);
            let c = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            Workload {
                params: vec![pa, pb, pc, size as u64],
                mem,
                outputs: vec![Region {
                    name: "c",
                    addr: pc,
                    expected: c,
                }],
            }
        }
        "sgemm" | "sgemm_accel" => {
            let n = size;
            let a = rand_f64s(&mut rng, n * n);
            let b = rand_f64s(&mut rng, n * n);
            let pa = mem.alloc_f64(&a);
            let pb = mem.alloc_f64(&b);
            let pc = mem.alloc(n * n);
            let mut c = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += a[i * n + k] * b[k * n + j];
                    }
                    c[i * n + j] = acc;
                }
            }
            Workload {
                params: vec![pa, pb, pc, n as u64],
                mem,
                outputs: vec![Region {
                    name: "c",
                    addr: pc,
                    expected: bits(&c),
                }],
            }
        }
        "spmv" => {
            let n = size;
            let (rowptr, col) = random_csr(&mut rng, n, n, 8);
            let val = rand_f64s(&mut rng, col.len());
            let x = rand_f64s(&mut rng, n);
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for k in rowptr[i] as usize..rowptr[i + 1] as usize {
                        acc += val[k] * x[col[k] as usize];
                    }
                    acc
                })
                .collect();
            let p_rowptr = mem.alloc_from(&rowptr);
            let p_col = mem.alloc_from(&col);
            let p_val = mem.alloc_f64(&val);
            let p_x = mem.alloc_f64(&x);
            let p_y = mem.alloc(n);
            Workload {
                params: vec![p_rowptr, p_col, p_val, p_x, p_y, n as u64],
                mem,
                outputs: vec![Region {
                    name: "y",
                    addr: p_y,
                    expected: bits(&y),
                }],
            }
        }
        "histogram" => {
            let nbins = 64usize;
            let data: Vec<u64> = (0..size).map(|_| rng.gen_range(0..1000)).collect();
            let t = tiles.max(1) as usize;
            let mut bins = vec![0u64; t * nbins];
            for tid in 0..t {
                let (lo, hi) = (size * tid / t, size * (tid + 1) / t);
                for &v in &data[lo..hi] {
                    bins[tid * nbins + (v as usize % nbins)] += 1;
                }
            }
            let pd = mem.alloc_from(&data);
            let pb = mem.alloc(t * nbins);
            Workload {
                params: vec![pd, size as u64, pb, nbins as u64],
                mem,
                outputs: vec![Region {
                    name: "bins",
                    addr: pb,
                    expected: bins,
                }],
            }
        }
        "bipartite" => {
            let nusers = size;
            let nitems = (size / 2).max(1);
            let (uptr, uitems) = random_csr(&mut rng, nusers, nitems, 4);
            // Transpose to item -> users.
            let mut users_of: Vec<Vec<u64>> = vec![Vec::new(); nitems];
            for u in 0..nusers {
                for &it in &uitems[uptr[u] as usize..uptr[u + 1] as usize] {
                    users_of[it as usize].push(u as u64);
                }
            }
            let mut iptr = vec![0u64];
            let mut iusers = Vec::new();
            for us in &users_of {
                iusers.extend(us);
                iptr.push(iusers.len() as u64);
            }
            let mut proj = vec![0.0f64; nusers * nusers];
            for a in 0..nusers {
                for &it in &uitems[uptr[a] as usize..uptr[a + 1] as usize] {
                    for &b in &users_of[it as usize] {
                        proj[a * nusers + b as usize] += 1.0;
                    }
                }
            }
            let p_uptr = mem.alloc_from(&uptr);
            let p_uitems = mem.alloc_from(&uitems);
            let p_iptr = mem.alloc_from(&iptr);
            let p_iusers = mem.alloc_from(&iusers);
            let p_proj = mem.alloc(nusers * nusers);
            Workload {
                params: vec![p_uptr, p_uitems, p_iptr, p_iusers, p_proj, nusers as u64],
                mem,
                outputs: vec![Region {
                    name: "proj",
                    addr: p_proj,
                    expected: bits(&proj),
                }],
            }
        }
        "ewsd" => {
            let (nrows, ncols) = (size, size);
            let (rowptr, col) = random_csr(&mut rng, nrows, ncols, 8);
            let val = rand_f64s(&mut rng, col.len());
            let dense = rand_f64s(&mut rng, nrows * ncols);
            let mut out = vec![0.0; col.len()];
            for i in 0..nrows {
                for k in rowptr[i] as usize..rowptr[i + 1] as usize {
                    out[k] = val[k] * dense[i * ncols + col[k] as usize];
                }
            }
            let p_rowptr = mem.alloc_from(&rowptr);
            let p_col = mem.alloc_from(&col);
            let p_val = mem.alloc_f64(&val);
            let p_dense = mem.alloc_f64(&dense);
            let p_out = mem.alloc(col.len());
            Workload {
                params: vec![p_rowptr, p_col, p_val, p_dense, p_out, nrows as u64, ncols as u64],
                mem,
                outputs: vec![Region {
                    name: "out",
                    addr: p_out,
                    expected: bits(&out),
                }],
            }
        }
        "dot" => {
            let x = rand_f64s(&mut rng, size);
            let y = rand_f64s(&mut rng, size);
            let px = mem.alloc_f64(&x);
            let py = mem.alloc_f64(&y);
            Workload {
                params: vec![px, py, size as u64],
                mem,
                outputs: Vec::new(),
            }
        }
        "pingpong" => {
            let px = mem.alloc_from(&[42, 0]);
            Workload {
                params: vec![px],
                mem,
                outputs: vec![Region {
                    name: "x",
                    addr: px,
                    expected: vec![42, 42],
                }],
            }
        }
        other => return Err(format!("unknown benchmark `{}`", other)),
    };
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{generate_spmd_traces, InterpOptions};

    #[test]
    fn every_kernel_parses_and_matches_reference() {
        for b in BENCHMARKS {
            let p = b.program();
            for t in [b.min_tiles, b.min_tiles.max(2)] {
                let w = workload(b.name, b.default_size, 7, t).unwrap();
                let (traces, out) = generate_spmd_traces(&p, t, &w.params, w.mem.clone(), InterpOptions::default())
                    .unwrap_or_else(|e| panic!("{} on {} tiles: {}", b.name, t, e));
                assert_eq!(traces.len(), t as usize);
                w.check(&out).unwrap_or_else(|e| panic!("{} on {} tiles: {}", b.name, t, e));
            }
        }
    }

    #[test]
    fn histogram_small_example() {
        let p = benchmark("histogram").unwrap().program();
        let mut mem = MemImage::new();
        let data = mem.alloc_from(&[0, 0, 1]);
        let bins = mem.alloc(2);
        let (t, out) = crate::trace::interpret(&p, &[data, 3, bins, 2], mem, 0, 1).unwrap();
        assert_eq!(out.words(bins, 2), &[2, 1]);
        // load value, load bin, store bin for each element
        assert_eq!(t.loads(), 6);
        assert_eq!(t.stores(), 3);
    }

    #[test]
    fn dot_has_sixteen_nodes_in_three_blocks() {
        let p = benchmark("dot").unwrap().program();
        assert_eq!(p.blocks.len(), 3);
        assert_eq!(p.num_nodes(), 16);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(workload("spmv", 64, 3, 1).unwrap(), workload("spmv", 64, 3, 1).unwrap());
        assert_ne!(workload("spmv", 64, 3, 1).unwrap(), workload("spmv", 64, 4, 1).unwrap());
    }
}
