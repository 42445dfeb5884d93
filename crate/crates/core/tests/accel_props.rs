//! Closed-form accelerator estimate: monotonicity, purity and energy.

use proptest::prelude::*;

use tilesim::accel::{accel_estimate, AccelModel};
use tilesim::trace::AccelInvocation;

fn arb_model() -> impl Strategy<Value = AccelModel> {
    (
        prop::collection::vec(prop::collection::vec(1u64..50, 1..=3), 1..=4),
        0.0f64..5.0,
        1e8f64..4e9,
        1e8f64..1e11,
        0u64..100,
    )
        .prop_map(|(processes, power, freq_hz, max_bandwidth, overhead)| AccelModel {
            id: "m".into(),
            processes,
            power,
            freq_hz,
            max_bandwidth,
            overhead,
        })
}

/// Iteration counts shaped like the model, outer counts a multiple of `k`.
fn arb_case() -> impl Strategy<Value = (AccelModel, Vec<Vec<u64>>, u64)> {
    arb_model().prop_flat_map(|m| {
        let shape: Vec<usize> = m.processes.iter().map(Vec::len).collect();
        let iters = shape
            .into_iter()
            .map(|n| prop::collection::vec(1u64..200, n))
            .collect::<Vec<_>>();
        (Just(m), iters, 0u64..10_000_000)
    })
}

fn inv(iters: Vec<Vec<u64>>, bytes: u64, k: u32) -> AccelInvocation {
    AccelInvocation {
        node: 0,
        model_id: "m".into(),
        iteration_counts: iters,
        bytes,
        num_instances: k,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn faster_clock_never_slower((m, iters, bytes) in arb_case(), scale in 1.0f64..4.0) {
        let slow = accel_estimate(&m, &inv(iters.clone(), bytes, 1)).unwrap();
        let fast_model = AccelModel { freq_hz: m.freq_hz * scale, ..m.clone() };
        let fast = accel_estimate(&fast_model, &inv(iters, bytes, 1)).unwrap();
        prop_assert!(fast.time <= slow.time);
        prop_assert_eq!(fast.compute_cycles, slow.compute_cycles);
        if !fast.bandwidth_limited {
            prop_assert_eq!(fast.cycles.round(), slow.cycles.round());
        }
    }

    #[test]
    fn more_bytes_never_faster((m, iters, bytes) in arb_case(), extra in 0u64..10_000_000, k in 1u32..=8) {
        let a = accel_estimate(&m, &inv(iters.clone(), bytes, k)).unwrap();
        let b = accel_estimate(&m, &inv(iters, bytes + extra, k)).unwrap();
        prop_assert!(b.time >= a.time);
    }

    #[test]
    fn splitting_work_is_at_most_linear((m, iters, bytes) in arb_case(), k in 1u32..=8) {
        // Fixed total work: k instances each take an equal share.
        let total: Vec<Vec<u64>> = iters.iter().map(|p| p.iter().map(|n| n * k as u64).collect()).collect();
        let mut unlimited = m.clone();
        unlimited.max_bandwidth = f64::INFINITY;
        let single = accel_estimate(&unlimited, &inv(total, bytes * k as u64, 1)).unwrap();
        let split = accel_estimate(&m, &inv(iters, bytes, k)).unwrap();
        prop_assert!(split.time * k as f64 >= single.time * (1.0 - 1e-12), "{} x{} < {}", split.time, k, single.time);
    }

    #[test]
    fn estimate_is_pure((m, iters, bytes) in arb_case(), k in 1u32..=8) {
        let i = inv(iters, bytes, k);
        prop_assert_eq!(accel_estimate(&m, &i).unwrap(), accel_estimate(&m, &i).unwrap());
    }

    #[test]
    fn energy_over_time_is_power((m, iters, bytes) in arb_case(), k in 1u32..=8) {
        let r = accel_estimate(&m, &inv(iters, bytes, k)).unwrap();
        prop_assert_eq!(r.energy, m.power * r.time);
        if r.time > 0.0 {
            prop_assert!((r.energy / r.time - m.power).abs() <= 1e-12 * m.power.max(1.0));
        }
    }

    #[test]
    fn wrong_shape_is_rejected((m, mut iters, bytes) in arb_case()) {
        iters.push(vec![1]);
        prop_assert!(accel_estimate(&m, &inv(iters, bytes, 1)).is_err());
    }
}
