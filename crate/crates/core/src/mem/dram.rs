//! SimpleDRAM: a minimum latency per request and a cap on how many requests
//! may return within each fixed-length epoch.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DramConfig {
    pub min_latency: u64,
    pub epoch_length: u64,
    pub max_per_epoch: u32,
    /// Joules per request.
    pub energy: f64,
}

impl Default for DramConfig {
    fn default() -> Self {
        DramConfig {
            min_latency: 200,
            epoch_length: 100,
            max_per_epoch: 18,
            energy: 0.0,
        }
    }
}

impl DramConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.epoch_length == 0 {
            return Err("dram: epoch_length must be at least 1".into());
        }
        if self.max_per_epoch == 0 {
            return Err("dram: max_per_epoch must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DramStats {
    pub requests: u64,
    pub reads: u64,
    pub writes: u64,
    pub returned: u64,
    /// Cycles during which a request had served its latency but the epoch
    /// budget was already spent.
    pub stalled_cycles: u64,
}

#[derive(Debug, Clone)]
pub struct SimpleDram<T: Ord> {
    cfg: DramConfig,
    queue: BinaryHeap<Reverse<(u64, u64, T)>>,
    seq: u64,
    epoch: u64,
    returned_in_epoch: u32,
    stall_marked_epoch: Option<u64>,
    stats: DramStats,
}

impl<T: Ord> SimpleDram<T> {
    pub fn new(cfg: DramConfig) -> Self {
        SimpleDram {
            cfg,
            queue: BinaryHeap::new(),
            seq: 0,
            epoch: 0,
            returned_in_epoch: 0,
            stall_marked_epoch: None,
            stats: DramStats::default(),
        }
    }

    pub fn config(&self) -> &DramConfig {
        &self.cfg
    }

    pub fn stats(&self) -> DramStats {
        self.stats
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn submit(&mut self, token: T, cycle: u64, is_write: bool) {
        self.stats.requests += 1;
        if is_write {
            self.stats.writes += 1;
        } else {
            self.stats.reads += 1;
        }
        self.queue.push(Reverse((cycle + self.cfg.min_latency, self.seq, token)));
        self.seq += 1;
    }

    /// Return every request that has served its latency, up to the epoch
    /// budget. Must be called with nondecreasing cycles.
    pub fn advance(&mut self, cycle: u64) -> Vec<T> {
        let epoch = cycle / self.cfg.epoch_length;
        if epoch != self.epoch {
            self.epoch = epoch;
            self.returned_in_epoch = 0;
        }
        let mut out = Vec::new();
        while let Some(Reverse((key, _, _))) = self.queue.peek() {
            if *key > cycle {
                break;
            }
            if self.returned_in_epoch >= self.cfg.max_per_epoch {
                if self.stall_marked_epoch != Some(epoch) {
                    self.stall_marked_epoch = Some(epoch);
                    self.stats.stalled_cycles += (epoch + 1) * self.cfg.epoch_length - cycle;
                }
                break;
            }
            let Reverse((_, _, token)) = self.queue.pop().expect("peeked");
            self.returned_in_epoch += 1;
            self.stats.returned += 1;
            out.push(token);
        }
        out
    }

    /// Next cycle at which `advance` could return something.
    pub fn next_event(&self, now: u64) -> Option<u64> {
        let Reverse((key, _, _)) = self.queue.peek()?;
        let key = *key;
        let epoch_of = |c: u64| c / self.cfg.epoch_length;
        let at = key.max(now);
        if epoch_of(at) == self.epoch && self.returned_in_epoch >= self.cfg.max_per_epoch {
            Some((self.epoch + 1) * self.cfg.epoch_length)
        } else {
            Some(at)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cfg: DramConfig, n: u32) -> Vec<u64> {
        let mut d = SimpleDram::new(cfg);
        for i in 0..n {
            d.submit(i, 0, false);
        }
        let mut done = vec![0; n as usize];
        let mut now = 0;
        while let Some(t) = d.next_event(now) {
            now = t;
            for tok in d.advance(now) {
                done[tok as usize] = now;
            }
        }
        done
    }

    #[test]
    fn single_request_takes_min_latency() {
        assert_eq!(run(DramConfig::default(), 1), vec![200]);
    }

    #[test]
    fn budget_pushes_third_request_to_next_epoch() {
        let cfg = DramConfig {
            max_per_epoch: 2,
            ..DramConfig::default()
        };
        assert_eq!(run(cfg, 3), vec![200, 200, 300]);
    }

    #[test]
    fn empty_queue_returns_nothing() {
        let mut d: SimpleDram<u32> = SimpleDram::new(DramConfig::default());
        assert!(d.advance(1000).is_empty());
        assert_eq!(d.next_event(0), None);
    }
}
