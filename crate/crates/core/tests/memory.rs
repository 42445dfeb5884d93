//! Cache, MSHR, DRAM and prefetcher properties over random configurations.

mod support;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::LruRef;
use tilesim::config::SystemConfig;
use tilesim::corpus;
use tilesim::experiment::{run_experiment, Flags};
use tilesim::mem::{CacheArray, CacheConfig, DramConfig, Hierarchy, HierarchyConfig, MemRequest, Sharing, SimpleDram};

fn pow2(rng: &mut impl Rng, max_log: u32) -> u64 {
    1 << rng.gen_range(0..=max_log)
}

/// Two-level hierarchy with small random geometry so evictions are common.
fn random_hierarchy(rng: &mut impl Rng, prefetch: bool) -> HierarchyConfig {
    let l1_assoc = pow2(rng, 2) as u32;
    let l1_sets = pow2(rng, 3);
    let l2_assoc = pow2(rng, 3) as u32;
    // The LLC is at least as large as one L1 so inclusion is meaningful.
    let l2_sets = (l1_sets * l1_assoc as u64).div_ceil(l2_assoc as u64).max(1) * pow2(rng, 2);
    let mut l1 = CacheConfig::new("l1", l1_sets * l1_assoc as u64 * 64, l1_assoc, rng.gen_range(1..=3), Sharing::Private);
    let mut l2 = CacheConfig::new("l2", l2_sets * l2_assoc as u64 * 64, l2_assoc, rng.gen_range(2..=10), Sharing::Shared);
    l1.mshr_entries = rng.gen_range(1..=8);
    l2.mshr_entries = rng.gen_range(1..=16);
    l1.prefetch.enabled = prefetch;
    l2.prefetch.enabled = false;
    HierarchyConfig {
        levels: vec![l1, l2],
        dram: DramConfig {
            min_latency: rng.gen_range(10..=200),
            epoch_length: rng.gen_range(5..=50),
            max_per_epoch: rng.gen_range(2..=8),
            ..DramConfig::default()
        },
        freq_hz: 2e9,
    }
}

struct Fuzz {
    submitted: u64,
    /// (tile, gid) → response times.
    responses: HashMap<(u32, u64), Vec<u64>>,
    issue: HashMap<(u32, u64), u64>,
    h: Hierarchy,
}

/// Random demand stream from `tiles` tiles, with inclusion checked after
/// every hierarchy cycle.
fn fuzz(seed: u64, tiles: u32, n: u64, prefetch: bool) -> Result<Fuzz, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = random_hierarchy(&mut rng, prefetch);
    let ids: Vec<u32> = (0..tiles).collect();
    let mut h = Hierarchy::new(&cfg, &ids);
    h.set_inclusion_checks(true);
    let p = h.period_fs();
    let footprint = rng.gen_range(4..512u64);
    let mut f = Fuzz {
        submitted: 0,
        responses: HashMap::new(),
        issue: HashMap::new(),
        h,
    };
    let mut t = 0;
    let step = |f: &mut Fuzz, until: Option<u64>| -> Result<(), String> {
        while let Some(next) = f.h.next_event_fs() {
            if until.is_some_and(|u| next > u) {
                break;
            }
            f.h.tick(next);
            f.h.verify_inclusion()?;
            for r in f.h.take_responses() {
                f.responses.entry((r.tile, r.gid)).or_default().push(r.time_fs);
            }
        }
        Ok(())
    };
    for gid in 0..n {
        t += if rng.gen_bool(0.2) { rng.gen_range(10..80) } else { rng.gen_range(0..4) };
        step(&mut f, Some(t * p))?;
        let tile = rng.gen_range(0..tiles);
        let addr = if rng.gen_bool(0.5) {
            // Strided runs so the prefetcher has something to train on.
            (gid % footprint) * 4
        } else {
            rng.gen_range(0..footprint) * 64 + rng.gen_range(0..8) * 8
        };
        f.h.submit(MemRequest {
            tile,
            gid,
            node: (gid % 3) as u32,
            addr,
            is_write: rng.gen_bool(0.3),
            time_fs: t * p,
        });
        f.issue.insert((tile, gid), t * p);
        f.submitted += 1;
    }
    step(&mut f, None)?;
    Ok(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tag_array_is_lru(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sets = pow2(&mut rng, 6);
        let assoc = rng.gen_range(1..=8u32);
        let mut arr = CacheArray::new(sets, assoc);
        let mut reference = LruRef::new(sets as usize, assoc as usize);
        let span = sets * assoc as u64 * rng.gen_range(1..=4);
        for _ in 0..2000 {
            let line = rng.gen_range(0..span);
            let (want_hit, want_victim) = reference.access(line);
            let hit = arr.access(line, rng.gen_bool(0.5));
            let victim = if hit { None } else { arr.install(line, false, false).map(|e| e.line) };
            prop_assert_eq!((hit, victim), (want_hit, want_victim));
        }
    }

    #[test]
    fn inclusion_and_single_response(seed in any::<u64>(), tiles in 1u32..=4, prefetch in any::<bool>()) {
        let f = fuzz(seed, tiles, 1000, prefetch).map_err(TestCaseError::fail)?;
        prop_assert_eq!(f.responses.len() as u64, f.submitted);
        for (k, times) in &f.responses {
            prop_assert_eq!(times.len(), 1, "request {:?} answered {} times", k, times.len());
            prop_assert!(times[0] > f.issue[k]);
        }
    }

    #[test]
    fn mshr_conservation(seed in any::<u64>(), tiles in 1u32..=4) {
        let f = fuzz(seed, tiles, 1000, false).map_err(TestCaseError::fail)?;
        let s = f.h.stats();
        let l1 = &s.levels[0].1;
        let l2 = &s.levels[1].1;
        // Every demand request is counted once at L1 as a hit, a fresh miss
        // or a coalesced waiter; retries are not accesses.
        prop_assert_eq!(l1.hits + l1.misses + l1.coalesced, f.submitted);
        prop_assert_eq!(l1.accesses, f.submitted);
        prop_assert_eq!(l2.hits + l2.misses + l2.coalesced, l2.accesses);
        // One downstream read per distinct outstanding line.
        prop_assert_eq!(s.dram.reads, l2.misses);
        prop_assert_eq!(s.dram.returned, s.dram.requests);
        prop_assert!(f.h.mshr_occupancy().iter().all(|&n| n == 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dram_throughput_window(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = DramConfig {
            min_latency: rng.gen_range(1..=300),
            epoch_length: rng.gen_range(1..=150),
            max_per_epoch: rng.gen_range(1..=20),
            ..DramConfig::default()
        };
        let mut d = SimpleDram::new(cfg.clone());
        let n = rng.gen_range(1..400usize);
        let mut submits: Vec<u64> = (0..n).map(|_| rng.gen_range(0..2000)).collect();
        submits.sort_unstable();
        let mut done: Vec<(u64, usize)> = Vec::new();
        let mut now = 0;
        let mut next = 0;
        while done.len() < n {
            while next < n && submits[next] <= now {
                d.submit(next, submits[next], rng.gen_bool(0.3));
                next += 1;
            }
            done.extend(d.advance(now).into_iter().map(|tok| (now, tok)));
            let wake = d.next_event(now + 1).unwrap_or(u64::MAX);
            let arrive = submits.get(next).copied().unwrap_or(u64::MAX);
            now = wake.min(arrive).max(now + 1);
        }
        let mut per_epoch: HashMap<u64, u32> = HashMap::new();
        for &(t, tok) in &done {
            prop_assert!(t >= submits[tok] + cfg.min_latency);
            *per_epoch.entry(t / cfg.epoch_length).or_default() += 1;
        }
        prop_assert!(per_epoch.values().all(|&c| c <= cfg.max_per_epoch));
        // Any run of consecutive epochs is then bounded too.
        let last = done.iter().map(|d| d.0).max().unwrap() / cfg.epoch_length;
        for w in 1..=4u64 {
            for start in 0..=last {
                let sum: u32 = (start..start + w).map(|e| per_epoch.get(&e).copied().unwrap_or(0)).sum();
                prop_assert!(sum as u64 <= w * cfg.max_per_epoch as u64);
            }
        }
        let toks: HashSet<usize> = done.iter().map(|d| d.1).collect();
        prop_assert_eq!(toks.len(), n);
    }
}

#[test]
fn prefetch_changes_timing_only() {
    for name in ["vecadd", "spmv", "dot", "histogram"] {
        let b = corpus::benchmark(name).unwrap();
        let w = corpus::workload(name, 256, 3, 2).unwrap();
        let run = |on: bool| {
            let mut cfg = SystemConfig::ooo();
            cfg.set_prefetch(on);
            run_experiment(&b.program(), &w.params, w.mem.clone(), &cfg, &Flags::tiles(2)).unwrap()
        };
        let (on, off) = (run(true), run(false));
        assert_eq!(on.prepared.final_mem, off.prepared.final_mem, "{}", name);
        w.check(&on.prepared.final_mem).unwrap();
        let insts = |e: &tilesim::experiment::Experiment| e.stats().tiles.iter().map(|t| t.instructions).collect::<Vec<_>>();
        assert_eq!(insts(&on), insts(&off), "{}", name);
        let issued: u64 = on.stats().hierarchy.levels.iter().map(|l| l.1.prefetch_issued).sum();
        let issued_off: u64 = off.stats().hierarchy.levels.iter().map(|l| l.1.prefetch_issued).sum();
        assert_eq!(issued_off, 0);
        if name == "vecadd" {
            assert!(issued > 0);
        }
    }
}
