// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use proptest::prelude::*;

use offload_core::engine::{simulate_transfers, Arbitration, SharedPort, TransferRequest};
use offload_core::experiment::{self, Setup};
use offload_core::kernels::ProblemSize;
use offload_core::mcast::{self, AddressRange, MulticastAddress};
use offload_core::offload::{JobCompletionUnit, Mode, Phase};
use offload_core::topology::Topology;

fn mask_strategy(max_bits: usize) -> impl Strategy<Value = u64> {
    proptest::collection::btree_set(0u32..28, 0..=max_bits)
        .prop_map(|bits| bits.into_iter().fold(0u64, |m, b| m | 1 << b))
}

fn cube_range() -> impl Strategy<Value = AddressRange> {
    (0u32..=24, 0u64..1 << 28).prop_map(|(k, base)| {
        AddressRange::new((base >> k) << k, 1 << k, 0).unwrap()
    })
}

fn request() -> impl Strategy<Value = MulticastAddress> {
    (0u64..1 << 28, mask_strategy(10)).prop_map(|(addr, mask)| MulticastAddress::new(addr & !mask, mask))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn port_match_agrees_with_set_intersection(req in request(), range in cube_range()) {
        let set = mcast::expand(req, 1 << 10).unwrap();
        let oracle = set.iter().any(|&a| range.contains(a));
        prop_assert_eq!(mcast::port_match(req, &range), oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn encode_inverts_expand(req in request()) {
        let set = mcast::expand(req, 1 << 10).unwrap();
        prop_assert_eq!(set.len() as u128, req.cardinality());
        prop_assert_eq!(mcast::encode(&set).unwrap(), req);
    }

    #[test]
    fn non_cubes_do_not_encode(a in 0u64..1 << 20, b in 0u64..1 << 20, c in 0u64..1 << 20) {
        let set: BTreeSet<u64> = [a, b, c].into();
        prop_assume!(set.len() == 3);
        prop_assert!(mcast::encode(&set).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wider_masks_reach_more_ports(cluster in 0usize..32, offset in 0u64..0x40000, m1 in 0u64..32, m2 in 0u64..32) {
        let t = Topology::default();
        let map = t.address_map();
        let addr = t.cluster_base_flat(cluster) + (offset & !7);
        let narrow = MulticastAddress::new(addr & !(m1 << 18), m1 << 18);
        let wide = MulticastAddress::new(addr & !((m1 | m2) << 18), (m1 | m2) << 18);
        let a = mcast::route(narrow, &map).unwrap();
        let b = mcast::route(wide, &map).unwrap();
        prop_assert!(a.is_subset(&b));
        prop_assert_eq!(b.len(), 1 << (m1 | m2).count_ones());
    }

    #[test]
    fn beat_round_robin_is_fair(k in 1usize..8, beats in 1u64..200) {
        let mut port = SharedPort::new("p", 64, Arbitration::Beat);
        let reqs: Vec<TransferRequest> = (0..k)
            .map(|origin| TransferRequest { origin, bytes: beats * 64, issue_time: 0, setup: 0, round_trip: 0 })
            .collect();
        let done = simulate_transfers(&mut port, &reqs).unwrap();
        let (lo, hi) = (*done.iter().min().unwrap(), *done.iter().max().unwrap());
        prop_assert!(hi - lo < k as u64);
        // Every transfer received one beat per round until it finished.
        prop_assert_eq!(lo, k as u64 * (beats - 1) + 1);
    }

    #[test]
    fn port_is_work_conserving(
        sizes in proptest::collection::vec((1u64..5000, 0u64..300), 1..10),
        arb in prop_oneof![Just(Arbitration::Beat), Just(Arbitration::Burst(8)), Just(Arbitration::Transfer)],
    ) {
        let mut port = SharedPort::new("p", 64, arb);
        let reqs: Vec<TransferRequest> = sizes
            .iter()
            .enumerate()
            .map(|(origin, &(bytes, issue))| TransferRequest { origin, bytes, issue_time: issue, setup: 0, round_trip: 10 })
            .collect();
        let done = simulate_transfers(&mut port, &reqs).unwrap();
        // Serve in arrival order with no idle beats while work is pending.
        let mut by_arrival: Vec<(u64, u64)> = sizes.iter().map(|&(b, t)| (t, b.div_ceil(64))).collect();
        by_arrival.sort();
        let mut clock = 0;
        for (t, beats) in by_arrival {
            clock = clock.max(t) + beats;
        }
        prop_assert_eq!(*done.iter().max().unwrap(), clock + 10);
        prop_assert_eq!(port.busy_cycles(), sizes.iter().map(|&(b, _)| b.div_ceil(64)).sum::<u64>());
    }

    #[test]
    fn completion_unit_fires_once_per_job(
        jobs in proptest::collection::vec((1u32..40, any::<bool>()), 1..6),
    ) {
        let mut u = JobCompletionUnit::new();
        let mut t = 0;
        for (offload, pending) in jobs {
            u.program(offload);
            if pending {
                u.set_pending();
            }
            let before = u.interrupts_fired();
            let mut fired = Vec::new();
            for _ in 0..offload {
                t += 1;
                prop_assert!(u.arrivals() < offload);
                fired.extend(u.arrive(t).unwrap());
            }
            let last = t;
            t += 5;
            fired.extend(u.clear_interrupt(t));
            prop_assert_eq!(u.interrupts_fired() - before, 1);
            prop_assert_eq!(fired.len(), 1);
            prop_assert!(fired[0] >= last);
            prop_assert_eq!(fired[0], if pending { t } else { last });
            prop_assert_eq!(u.arrivals(), 0);
            if pending {
                // The host also takes the deferred interrupt.
                prop_assert_eq!(u.clear_interrupt(t), None);
            }
            prop_assert!(!u.pending_interrupt());
        }
    }
}

fn axpy_point() -> impl Strategy<Value = (u64, usize)> {
    (0usize..6, 1u64..9).prop_map(|(e, mult)| {
        let n = 1usize << e;
        (8 * n as u64 * 16 * mult, n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn baseline_overhead_is_absorbed_by_the_protocol_phases((big_n, n) in axpy_point()) {
        let setup = Setup::default();
        let p = experiment::run_point(&setup, "axpy", ProblemSize::vector(big_n), n).unwrap();
        let overhead = p.baseline.total - p.ideal.total;
        let b = &p.baseline;
        // The cluster whose notification ends last is on the critical path.
        let critical = (0..n)
            .max_by_key(|&c| (b.interval(c, Phase::H).unwrap().end, c))
            .unwrap();
        let protocol: u64 = [Phase::A, Phase::B, Phase::C, Phase::D, Phase::H, Phase::I]
            .iter()
            .map(|&ph| {
                let c = if ph.is_host() { 0 } else { critical };
                b.duration(c, ph).unwrap()
            })
            .sum();
        prop_assert!(overhead <= protocol, "overhead {} > {}", overhead, protocol);
    }

    #[test]
    fn simulation_is_deterministic((big_n, n) in axpy_point(), mode in prop_oneof![Just(Mode::Baseline), Just(Mode::Extended), Just(Mode::Ideal)]) {
        let setup = Setup::default();
        let a = setup.run("axpy", ProblemSize::vector(big_n), n, mode).unwrap();
        let b = setup.run("axpy", ProblemSize::vector(big_n), n, mode).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn extended_phases_are_uniform((big_n, n) in axpy_point()) {
        let setup = Setup::default();
        let r = setup.run("axpy", ProblemSize::vector(big_n), n, Mode::Extended).unwrap();
        for ph in [Phase::B, Phase::C, Phase::D, Phase::F, Phase::H] {
            let s = r.stats(ph).unwrap();
            prop_assert!(s.max - s.min <= 1);
        }
    }

    #[test]
    fn ordering_of_modes((big_n, n) in axpy_point()) {
        let setup = Setup::default();
        let p = experiment::run_point(&setup, "axpy", ProblemSize::vector(big_n), n).unwrap();
        prop_assert!(p.metrics().unwrap().ordered);
    }

    #[test]
    fn non_prefix_cluster_counts_run(n in 1usize..=32) {
        let setup = Setup::default();
        let size = ProblemSize::vector(8 * 32 * 4);
        let size = if (size.n / 8).is_multiple_of(n as u64) { size } else { ProblemSize::vector(8 * n as u64 * 16) };
        let r = setup.run("axpy", size, n, Mode::Extended).unwrap();
        prop_assert_eq!(r.durations(Phase::B).len(), n);
        prop_assert!(r.durations(Phase::B).iter().all(|&b| b >= 47));
    }
}
