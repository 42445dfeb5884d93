//! Stride prefetcher: watches each (tile, static instruction) stream for a
//! run of accesses exactly `k` words apart.

use std::collections::HashMap;

/// Prefetcher word size in bytes.
pub const PREFETCH_WORD: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefetchConfig {
    pub enabled: bool,
    /// Stride in words.
    pub stride_words: u64,
    pub detect_length: u32,
    pub degree: u32,
    pub distance: u32,
}

impl Default for PrefetchConfig {
    fn default() -> Self {
        PrefetchConfig {
            enabled: false,
            stride_words: 2,
            detect_length: 3,
            degree: 4,
            distance: 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Stream {
    last: u64,
    run: u32,
}

#[derive(Debug, Clone)]
pub struct StridePrefetcher {
    cfg: PrefetchConfig,
    line_size: u64,
    streams: HashMap<(u32, u32), Stream>,
}

impl StridePrefetcher {
    pub fn new(cfg: PrefetchConfig, line_size: u64) -> Self {
        StridePrefetcher {
            cfg,
            line_size,
            streams: HashMap::new(),
        }
    }

    /// Record a demand access and return candidate line numbers to prefetch.
    /// The caller filters out lines that are resident or already pending.
    pub fn observe(&mut self, key: (u32, u32), addr: u64) -> Vec<u64> {
        let stride = self.cfg.stride_words * PREFETCH_WORD;
        let s = self.streams.entry(key).or_insert(Stream { last: addr, run: 0 });
        if s.run > 0 && addr == s.last.wrapping_add(stride) {
            s.run += 1;
        } else {
            s.run = 1;
        }
        s.last = addr;
        if s.run < self.cfg.detect_length {
            return Vec::new();
        }
        let base = addr / self.line_size + self.cfg.distance as u64;
        (0..self.cfg.degree as u64).map(|i| base + i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pf(degree: u32, distance: u32) -> StridePrefetcher {
        StridePrefetcher::new(
            PrefetchConfig {
                enabled: true,
                stride_words: 2,
                detect_length: 3,
                degree,
                distance,
            },
            64,
        )
    }

    #[test]
    fn three_strided_accesses_trigger() {
        let mut p = pf(2, 1);
        assert!(p.observe((0, 0), 0x0).is_empty());
        assert!(p.observe((0, 0), 0x8).is_empty());
        // Last access 0x10 sits in line 0; one line beyond it, two lines.
        assert_eq!(p.observe((0, 0), 0x10), vec![1, 2]);
    }

    #[test]
    fn broken_chain_resets() {
        let mut p = pf(2, 1);
        p.observe((0, 0), 0x0);
        p.observe((0, 0), 0x8);
        assert!(p.observe((0, 0), 0x40).is_empty());
        assert!(p.observe((0, 0), 0x48).is_empty());
        assert_eq!(p.observe((0, 0), 0x50).len(), 2);
    }

    #[test]
    fn streams_are_per_instruction() {
        let mut p = pf(1, 1);
        p.observe((0, 1), 0x0);
        p.observe((0, 2), 0x8);
        assert!(p.observe((0, 1), 0x10).is_empty());
    }
}
