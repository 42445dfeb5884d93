//! Set-associative tag array with true LRU replacement. Addresses here are
//! line numbers (byte address >> log2(line size)).

#[derive(Debug, Clone, Copy, Default)]
struct Way {
    line: u64,
    valid: bool,
    dirty: bool,
    prefetched: bool,
    stamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evicted {
    pub line: u64,
    pub dirty: bool,
}

#[derive(Debug, Clone)]
pub struct CacheArray {
    sets: u64,
    assoc: usize,
    ways: Vec<Way>,
    clock: u64,
}

impl CacheArray {
    pub fn new(sets: u64, assoc: u32) -> Self {
        assert!(sets >= 1 && assoc >= 1);
        CacheArray {
            sets,
            assoc: assoc as usize,
            ways: vec![Way::default(); (sets * assoc as u64) as usize],
            clock: 0,
        }
    }

    fn set(&self, line: u64) -> std::ops::Range<usize> {
        let s = (line % self.sets) as usize * self.assoc;
        s..s + self.assoc
    }

    fn find(&self, line: u64) -> Option<usize> {
        self.set(line).find(|&i| self.ways[i].valid && self.ways[i].line == line)
    }

    /// Present without touching LRU state.
    pub fn probe(&self, line: u64) -> bool {
        self.find(line).is_some()
    }

    /// Demand lookup: on a hit the line becomes most recently used.
    pub fn access(&mut self, line: u64, write: bool) -> bool {
        match self.find(line) {
            Some(i) => {
                self.clock += 1;
                self.ways[i].stamp = self.clock;
                self.ways[i].dirty |= write;
                true
            }
            None => false,
        }
    }

    /// Clears and returns the prefetched mark of a resident line.
    pub fn take_prefetched(&mut self, line: u64) -> bool {
        match self.find(line) {
            Some(i) => std::mem::take(&mut self.ways[i].prefetched),
            None => false,
        }
    }

    pub fn set_dirty(&mut self, line: u64) -> bool {
        match self.find(line) {
            Some(i) => {
                self.ways[i].dirty = true;
                true
            }
            None => false,
        }
    }

    /// Install a line as most recently used, evicting the LRU way of a full
    /// set. Installing a resident line only merges the dirty bit.
    pub fn install(&mut self, line: u64, dirty: bool, prefetched: bool) -> Option<Evicted> {
        self.clock += 1;
        if let Some(i) = self.find(line) {
            self.ways[i].dirty |= dirty;
            self.ways[i].stamp = self.clock;
            return None;
        }
        let range = self.set(line);
        let slot = range
            .clone()
            .find(|&i| !self.ways[i].valid)
            .unwrap_or_else(|| range.min_by_key(|&i| self.ways[i].stamp).expect("non-empty set"));
        let old = self.ways[slot];
        self.ways[slot] = Way {
            line,
            valid: true,
            dirty,
            prefetched,
            stamp: self.clock,
        };
        old.valid.then_some(Evicted {
            line: old.line,
            dirty: old.dirty,
        })
    }

    /// Drop a line; returns its dirty bit if it was resident.
    pub fn invalidate(&mut self, line: u64) -> Option<bool> {
        let i = self.find(line)?;
        self.ways[i].valid = false;
        Some(std::mem::take(&mut self.ways[i].dirty))
    }

    pub fn resident(&self) -> impl Iterator<Item = u64> + '_ {
        self.ways.iter().filter(|w| w.valid).map(|w| w.line)
    }
}
