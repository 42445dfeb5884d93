//! Decoupled access/execute: slices keep the kernel's meaning and the
//! pair runs to completion through bounded queues.

mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::random_mem_kernel;
use tilesim::config::SystemConfig;
use tilesim::corpus::{self, BENCHMARKS};
use tilesim::dae::{slice, verify_slice_equivalence};
use tilesim::experiment::{run_experiment, Flags};
use tilesim::{build_ddg, parse_kernel, KernelProgram, OpClass};

fn count(p: &KernelProgram, op: OpClass) -> usize {
    build_ddg(p).unwrap().nodes.iter().filter(|n| n.opclass == op).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn slices_preserve_final_memory(seed in any::<u64>(), spmd in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_mem_kernel(&mut rng, spmd);
        let program = parse_kernel(&k.text).unwrap();
        let pairs = if spmd { 2 } else { 1 };
        verify_slice_equivalence(&program, &k.params, &k.mem, pairs)
            .map_err(|e| TestCaseError::fail(format!("{}\n{}", e, k.text)))?;
    }

    #[test]
    fn memory_stays_on_the_access_side(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_mem_kernel(&mut rng, false);
        let program = parse_kernel(&k.text).unwrap();
        let pair = slice(&program).unwrap();
        let (loads, stores) = (count(&program, OpClass::Load), count(&program, OpClass::Store));
        prop_assert_eq!(count(&pair.access, OpClass::Load), loads);
        prop_assert_eq!(count(&pair.access, OpClass::Store), stores);
        prop_assert_eq!(count(&pair.execute, OpClass::Load), 0);
        prop_assert_eq!(count(&pair.execute, OpClass::Store), 0);
        // One value message per load, one back per store.
        prop_assert_eq!(count(&pair.access, OpClass::Send), loads);
        prop_assert_eq!(count(&pair.execute, OpClass::Recv), loads);
        prop_assert_eq!(count(&pair.access, OpClass::Recv), stores);
        prop_assert_eq!(count(&pair.execute, OpClass::Send), stores);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounded_queues_terminate(seed in any::<u64>(), capacity in 1usize..=4, ino in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_mem_kernel(&mut rng, false);
        let program = parse_kernel(&k.text).unwrap();
        let mut cfg = if ino { SystemConfig::ino() } else { SystemConfig::ooo() };
        cfg.msg_capacity = capacity;
        let e = run_experiment(&program, &k.params, k.mem.clone(), &cfg, &Flags::dae(1))
            .map_err(|e| TestCaseError::fail(format!("{}\n{}", e, k.text)))?;
        let s = e.stats();
        prop_assert!(s.channels.max_occupancy <= capacity);
        prop_assert_eq!(s.channels.sent, s.channels.received);
        let want: u64 = e.prepared.traces.iter().map(|t| t.instructions).sum();
        prop_assert_eq!(s.instructions(), want);
    }
}

#[test]
fn corpus_pairs_run_with_single_slot_queues() {
    for b in BENCHMARKS.iter().filter(|b| b.sliceable) {
        for pairs in [1u32, 2] {
            let w = corpus::workload(b.name, b.default_size.min(64), 2, pairs).unwrap();
            let mut cfg = SystemConfig::ino();
            cfg.msg_capacity = 1;
            let e = run_experiment(&b.program(), &w.params, w.mem.clone(), &cfg, &Flags::dae(pairs))
                .unwrap_or_else(|e| panic!("{} x{}: {}", b.name, pairs, e));
            w.check(&e.prepared.final_mem).unwrap();
            assert!(e.stats().channels.max_occupancy <= 1, "{}", b.name);
        }
    }
}
