//! Accelerator models.
//!
//! The back-annotated model treats an accelerator as a set of concurrent
//! processes, each running a few loops. Given per-loop iteration latencies
//! and an invocation's iteration counts it produces cycles, time and energy,
//! stretching time when the invocation moves more bytes than its share of
//! memory bandwidth allows. The pre-RTL path instead reruns the core model
//! with relaxed resources.

use std::collections::BTreeMap;

use crate::cpu::CoreConfig;
use crate::error::AccelError;
use crate::ir::OpClass;
use crate::trace::AccelInvocation;

#[derive(Debug, Clone, PartialEq)]
pub struct AccelModel {
    pub id: String,
    /// `processes[p][l]`: cycles for one iteration of loop `l` of process `p`.
    pub processes: Vec<Vec<u64>>,
    /// Watts.
    pub power: f64,
    pub freq_hz: f64,
    /// Bytes per second, shared by all concurrently running instances.
    pub max_bandwidth: f64,
    /// Fixed cycles added to every invocation.
    pub overhead: u64,
}

impl AccelModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.processes.is_empty() {
            return Err(format!("model {}: no processes", self.id));
        }
        for (p, loops) in self.processes.iter().enumerate() {
            if loops.is_empty() {
                return Err(format!("model {}: process {} has no loops", self.id, p));
            }
            if loops.contains(&0) {
                return Err(format!("model {}: process {} has a zero loop latency", self.id, p));
            }
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(format!("model {}: power must be non-negative", self.id));
        }
        if !(self.freq_hz > 0.0 && self.freq_hz.is_finite()) {
            return Err(format!("model {}: freq must be positive", self.id));
        }
        if !(self.max_bandwidth >= 0.0) {
            return Err(format!("model {}: max_bandwidth must be non-negative", self.id));
        }
        Ok(())
    }

    fn shape(&self) -> Vec<usize> {
        self.processes.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelResult {
    /// Cycles at the accelerator clock, `time * freq`.
    pub cycles: f64,
    pub time: f64,
    pub bytes: u64,
    /// Joules for one instance.
    pub energy: f64,
    pub bandwidth_limited: bool,
    /// Pipelined compute cycles before bandwidth scaling.
    pub compute_cycles: f64,
    pub bottleneck: usize,
}

/// Closed-form estimate for one invocation.
pub fn accel_estimate(model: &AccelModel, inv: &AccelInvocation) -> Result<AccelResult, AccelError> {
    let got: Vec<usize> = inv.iteration_counts.iter().map(Vec::len).collect();
    let want = model.shape();
    if got != want {
        return Err(AccelError::DimensionMismatch {
            model: model.id.clone(),
            got: inv.iteration_counts.len(),
            got_shape: got,
            want_shape: want,
        });
    }
    if inv.num_instances == 0 {
        return Err(AccelError::NoInstances(model.id.clone()));
    }
    let per_process: Vec<f64> = model
        .processes
        .iter()
        .zip(&inv.iteration_counts)
        .map(|(lat, iters)| lat.iter().zip(iters).map(|(&l, &n)| l as f64 * n as f64).sum())
        .collect();
    let mut bottleneck = 0;
    for (p, &c) in per_process.iter().enumerate() {
        if c > per_process[bottleneck] {
            bottleneck = p;
        }
    }
    // Every other process adds one outer iteration of fill or drain.
    let fill: f64 = per_process
        .iter()
        .zip(&inv.iteration_counts)
        .enumerate()
        .filter(|&(p, _)| p != bottleneck)
        .map(|(_, (&c, iters))| if iters[0] == 0 { 0.0 } else { c / iters[0] as f64 })
        .sum();
    let compute_cycles = per_process[bottleneck] + fill + model.overhead as f64;
    let compute_time = compute_cycles / model.freq_hz;

    let bw_time = if inv.bytes == 0 {
        0.0
    } else {
        if model.max_bandwidth <= 0.0 {
            return Err(AccelError::ZeroBandwidth(model.id.clone()));
        }
        inv.bytes as f64 / (model.max_bandwidth / inv.num_instances as f64)
    };
    let bandwidth_limited = bw_time > compute_time;
    let time = if bandwidth_limited { bw_time } else { compute_time };
    Ok(AccelResult {
        cycles: time * model.freq_hz,
        time,
        bytes: inv.bytes,
        energy: model.power * time,
        bandwidth_limited,
        compute_cycles,
        bottleneck,
    })
}

/// Parse accelerator model files.
///
/// ```text
/// model sgemm
/// process 0: loop 0 latency=2
/// process 1: loop 0 latency=1
/// power=0.35
/// freq=1e9
/// max_bandwidth=25.6e9
/// ```
pub fn parse_models(text: &str) -> Result<Vec<AccelModel>, AccelError> {
    let mut models: Vec<AccelModel> = Vec::new();
    let err = |line: usize, msg: String| AccelError::Parse { line, msg };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(id) = s.strip_prefix("model ") {
            models.push(AccelModel {
                id: id.trim().to_string(),
                processes: Vec::new(),
                power: 0.0,
                freq_hz: 1e9,
                max_bandwidth: f64::INFINITY,
                overhead: 0,
            });
            continue;
        }
        let m = models
            .last_mut()
            .ok_or_else(|| err(line, "expected `model <id>` first".into()))?;
        if let Some(rest) = s.strip_prefix("process ") {
            let (p, rest) = rest
                .split_once(':')
                .ok_or_else(|| err(line, "expected `process <i>: loop <j> latency=<c>`".into()))?;
            let p: usize = p.trim().parse().map_err(|_| err(line, format!("bad process index `{}`", p.trim())))?;
            let mut words = rest.split_whitespace();
            let (Some("loop"), Some(l), Some(lat)) = (words.next(), words.next(), words.next()) else {
                return Err(err(line, "expected `loop <j> latency=<c>`".into()));
            };
            let l: usize = l.parse().map_err(|_| err(line, format!("bad loop index `{}`", l)))?;
            let lat = lat
                .strip_prefix("latency=")
                .and_then(|v| v.parse::<u64>().ok())
                .ok_or_else(|| err(line, format!("bad latency `{}`", lat)))?;
            if p != m.processes.len() && p + 1 != m.processes.len() {
                return Err(err(line, format!("process {} out of order", p)));
            }
            if p == m.processes.len() {
                m.processes.push(Vec::new());
            }
            if l != m.processes[p].len() {
                return Err(err(line, format!("loop {} out of order", l)));
            }
            m.processes[p].push(lat);
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| err(line, format!("unrecognized line `{}`", s)))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| err(line, format!("bad number `{}`", v.trim())));
        match k.trim() {
            "power" => m.power = num(v)?,
            "freq" => m.freq_hz = num(v)?,
            "max_bandwidth" => m.max_bandwidth = num(v)?,
            "overhead" => m.overhead = num(v)? as u64,
            other => return Err(err(line, format!("unknown key `{}`", other))),
        }
    }
    for m in &models {
        m.validate().map_err(|msg| err(0, msg))?;
    }
    Ok(models)
}

/// Models by ID. Invocations name a model either exactly or by the part
/// before the first `.` or `_` (so `sgemm_tile` falls back to `sgemm`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccelLibrary {
    models: BTreeMap<String, AccelModel>,
}

impl AccelLibrary {
    pub fn new(models: Vec<AccelModel>) -> Self {
        AccelLibrary {
            models: models.into_iter().map(|m| (m.id.clone(), m)).collect(),
        }
    }

    pub fn insert(&mut self, m: AccelModel) {
        self.models.insert(m.id.clone(), m);
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&AccelModel, AccelError> {
        if let Some(m) = self.models.get(id) {
            return Ok(m);
        }
        let kind = id.split(['.', '_']).next().unwrap_or(id);
        self.models.get(kind).ok_or_else(|| AccelError::UnknownModel(id.to_string()))
    }

    /// Built-in models for the interpreter's accelerator kinds.
    pub fn builtin() -> Self {
        let m = |id: &str, processes: Vec<Vec<u64>>, power: f64| AccelModel {
            id: id.into(),
            processes,
            power,
            freq_hz: 1e9,
            max_bandwidth: 25.6e9,
            overhead: 0,
        };
        AccelLibrary::new(vec![
            // load, multiply-accumulate (outer and inner), store
            m("sgemm", vec![vec![1], vec![1, 1], vec![1]], 0.25),
            m("histo", vec![vec![1], vec![2], vec![1]], 0.08),
            m("ewise", vec![vec![1], vec![1], vec![1]], 0.05),
        ])
    }
}

/// Relaxed resources for pre-RTL accelerator estimation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreRtlKnobs {
    pub live_dbb_limit: Option<u32>,
    pub fu_counts: Vec<(OpClass, Option<u32>)>,
    pub window_size: Option<u32>,
}

/// Core config whose graph simulation stands in for an accelerator.
pub fn prertl_config(base: &CoreConfig, knobs: &PreRtlKnobs) -> CoreConfig {
    let mut cfg = base.clone();
    if let Some(n) = knobs.live_dbb_limit {
        cfg.live_dbb_limit = n;
    }
    if let Some(w) = knobs.window_size {
        cfg.window_size = w;
    }
    for &(op, n) in &knobs.fu_counts {
        cfg.set_fu_count(op, n);
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(iters: Vec<Vec<u64>>, bytes: u64, n: u32) -> AccelInvocation {
        AccelInvocation {
            node: 0,
            model_id: "m".into(),
            iteration_counts: iters,
            bytes,
            num_instances: n,
        }
    }

    fn model(processes: Vec<Vec<u64>>) -> AccelModel {
        AccelModel {
            id: "m".into(),
            processes,
            power: 2.0,
            freq_hz: 1e9,
            max_bandwidth: 1e9,
            overhead: 0,
        }
    }

    #[test]
    fn single_loop() {
        let r = accel_estimate(&model(vec![vec![5]]), &inv(vec![vec![10]], 0, 1)).unwrap();
        assert_eq!(r.cycles, 50.0);
        assert!(!r.bandwidth_limited);
    }

    #[test]
    fn three_stage_pipeline() {
        let m = model(vec![vec![10], vec![40], vec![10]]);
        let r = accel_estimate(&m, &inv(vec![vec![10], vec![10], vec![10]], 0, 1)).unwrap();
        assert_eq!(r.cycles, 420.0);
        assert_eq!(r.bottleneck, 1);
    }

    #[test]
    fn bandwidth_bound() {
        // 1000 cycles at 1 GHz = 1 us of compute; 4000 bytes at 1 GB/s = 4 us.
        let r = accel_estimate(&model(vec![vec![1000]]), &inv(vec![vec![1]], 4000, 1)).unwrap();
        assert!(r.bandwidth_limited);
        assert_eq!(r.time, 4000.0 / 1e9);
        assert_eq!(r.energy, 2.0 * r.time);
    }

    #[test]
    fn mismatched_shape() {
        let e = accel_estimate(&model(vec![vec![1], vec![1]]), &inv(vec![vec![1]], 0, 1)).unwrap_err();
        assert!(matches!(e, AccelError::DimensionMismatch { .. }));
    }

    #[test]
    fn zero_bandwidth_with_bytes() {
        let mut m = model(vec![vec![1]]);
        m.max_bandwidth = 0.0;
        assert!(accel_estimate(&m, &inv(vec![vec![1]], 8, 1)).is_err());
        assert!(accel_estimate(&m, &inv(vec![vec![1]], 0, 1)).is_ok());
    }

    #[test]
    fn parse_model_file() {
        let text = "model gemm\nprocess 0: loop 0 latency=2\nprocess 1: loop 0 latency=3\nprocess 1: loop 1 latency=1\npower=0.5\nfreq=2e9\nmax_bandwidth=1e10\n";
        let ms = parse_models(text).unwrap();
        assert_eq!(ms[0].processes, vec![vec![2], vec![3, 1]]);
        assert_eq!(ms[0].freq_hz, 2e9);
        let e = parse_models("model x\nprocess 0: loop 0 latency=0\n").unwrap_err();
        assert!(e.to_string().contains("zero"), "{}", e);
    }

    #[test]
    fn library_falls_back_to_kind() {
        let lib = AccelLibrary::builtin();
        assert_eq!(lib.get("sgemm_tile").unwrap().id, "sgemm");
        assert!(lib.get("fft").is_err());
    }

    #[test]
    fn identity_knobs() {
        let base = CoreConfig::ooo();
        assert_eq!(prertl_config(&base, &PreRtlKnobs::default()), base);
    }
}
