// SPDX-License-Identifier: Apache-2.0

//! One pass/fail line per acceptance criterion.

use std::collections::BTreeSet;
use std::time::Instant;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offload_core::analytic;
use offload_core::engine::{simulate_transfers, Arbitration, SharedPort, TransferRequest};
use offload_core::experiment::{self, ExperimentPlan, Setup, POWERS_OF_TWO};
use offload_core::kernels::ProblemSize;
use offload_core::mcast::{self, AddressRange, MulticastAddress};
use offload_core::offload::{JobCompletionUnit, Mode, Phase};

const MODEL_TOLERANCE: f64 = 1e-9;
const MAX_RELATIVE_ERROR: f64 = 0.15;
const BASELINE_OVERHEAD_BAND: (f64, f64) = (242.0 - 65.0, 242.0 + 65.0);
const EXTENDED_OVERHEAD_BAND: (f64, f64) = (185.0 - 2.0 * 18.0, 185.0 + 2.0 * 18.0);
const RESTORED_AXPY_GEMM: (f64, f64) = (0.70, 1.0);
const RESTORED_ATAX: (f64, f64) = (0.85, 1.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn analytic_exactness() -> Outcome {
    let checks = [
        ("axpy_total(1,1024)", analytic::axpy_total(1.0, 1024.0), 972.16),
        ("axpy_total(32,1024)", analytic::axpy_total(32.0, 1024.0), 665.88),
        ("atax_total(1,64,64)", analytic::atax_total(1.0, 64.0, 64.0), 17411.28),
        ("phase_e_axpy(1024)", analytic::phase_e_axpy(1024.0), 364.0),
        ("phase_f_axpy(1,1024)", analytic::phase_f_axpy(1.0, 1024.0), 243.16),
        ("phase_g(32,1024)", analytic::phase_g(32.0, 1024.0), 80.0),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > MODEL_TOLERANCE)
        .map(|(name, got, want)| format!("{name} = {got}, expected {want}"))
        .collect();
    outcome(bad.is_empty(), if bad.is_empty() { "6 values exact".into() } else { bad.join("; ") })
}

fn random_cube_range(rng: &mut ChaCha8Rng) -> AddressRange {
    let k = rng.random_range(0..=24u32);
    let base = (rng.random_range(0..1u64 << 28) >> k) << k;
    AddressRange::new(base, 1 << k, 0).unwrap()
}

fn random_request(rng: &mut ChaCha8Rng, near: &AddressRange) -> MulticastAddress {
    let popcount = rng.random_range(0..=10usize);
    let mut mask = 0u64;
    while (mask.count_ones() as usize) < popcount {
        mask |= 1 << rng.random_range(0..28u32);
    }
    let addr = if rng.random_bool(0.5) {
        near.base + rng.random_range(0..near.length)
    } else {
        rng.random_range(0..1u64 << 28)
    };
    MulticastAddress::new(addr & !mask, mask)
}

fn multicast_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d63);
    let (mut mismatches, mut hits) = (0, 0);
    const PAIRS: usize = 10_000;
    for _ in 0..PAIRS {
        let range = random_cube_range(&mut rng);
        let req = random_request(&mut rng, &range);
        let set = mcast::expand(req, 1 << 10).unwrap();
        let oracle = set.iter().any(|&a| range.contains(a));
        hits += oracle as usize;
        if mcast::port_match(req, &range) != oracle {
            mismatches += 1;
        }
    }
    const CUBES: usize = 1_000;
    let mut round_trip_bad = 0;
    for _ in 0..CUBES {
        let range = random_cube_range(&mut rng);
        let cube = random_request(&mut rng, &range);
        let set = mcast::expand(cube, 1 << 10).unwrap();
        let back = mcast::encode(&set).unwrap();
        let again = mcast::expand(back, 1 << 10).unwrap();
        if back != cube || again != set {
            round_trip_bad += 1;
        }
    }
    outcome(
        mismatches == 0 && round_trip_bad == 0,
        format!(
            "{PAIRS} pairs ({hits} hits), {mismatches} mismatches; {CUBES} round trips, {round_trip_bad} failures"
        ),
    )
}

fn model_validation(setup: &Setup) -> Outcome {
    let mut worst = (0.0, String::new());
    let mut points = 0;
    for plan in [experiment::axpy_validation_plan(), experiment::atax_validation_plan()] {
        let table = experiment::validate(setup, &plan).unwrap();
        points += table.rows.len();
        for r in &table.rows {
            if r.relative_error > worst.0 {
                worst = (
                    r.relative_error,
                    format!("{} N={} n={}", r.kernel, r.n, r.n_clusters),
                );
            }
        }
    }
    outcome(
        worst.0 <= MAX_RELATIVE_ERROR,
        format!("max relative error {:.4} at {} over {points} points", worst.0, worst.1),
    )
}

fn overhead_reproduction(setup: &Setup) -> Outcome {
    let size = ProblemSize::vector(1024);
    let mut notes = Vec::new();
    let mut pass = true;
    let mut base = Vec::new();
    for n in POWERS_OF_TWO {
        let p = experiment::run_point(setup, "axpy", size, n).unwrap();
        let ext = p.extended.total as f64 - p.ideal.total as f64;
        base.push(p.baseline.total as f64 - p.ideal.total as f64);
        if !(EXTENDED_OVERHEAD_BAND.0..=EXTENDED_OVERHEAD_BAND.1).contains(&ext) {
            pass = false;
            notes.push(format!("extended overhead {ext} at n={n}"));
        }
    }
    let (b1, b32) = (base[0], base[5]);
    if !(BASELINE_OVERHEAD_BAND.0..=BASELINE_OVERHEAD_BAND.1).contains(&b1) {
        pass = false;
        notes.push(format!("baseline overhead {b1} at n=1"));
    }
    if b32 < 2.0 * b1 {
        pass = false;
        notes.push(format!("baseline overhead {b32} at n=32 below twice {b1}"));
    }
    notes.insert(0, format!("baseline overhead n=1 {b1}, n=32 {b32}"));
    outcome(pass, notes.join("; "))
}

fn restored_speedup(setup: &Setup) -> Outcome {
    let grids: [(&str, Vec<ProblemSize>, (f64, f64)); 3] = [
        ("axpy", [256, 1024, 4096].map(ProblemSize::vector).to_vec(), RESTORED_AXPY_GEMM),
        ("gemm", [64, 128, 256].map(|s| ProblemSize::gemm(s, s, s)).to_vec(), RESTORED_AXPY_GEMM),
        ("atax", [64, 128, 256].map(|s| ProblemSize::matrix(s, s)).to_vec(), RESTORED_ATAX),
    ];
    let mut out_of_band = Vec::new();
    let mut summary = Vec::new();
    for (kernel, sizes, (lo, hi)) in grids {
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        for size in sizes {
            for n in POWERS_OF_TWO {
                let f = experiment::run_point(setup, kernel, size, n)
                    .unwrap()
                    .metrics()
                    .unwrap()
                    .restored_fraction;
                range = (range.0.min(f), range.1.max(f));
                if !(lo..=hi).contains(&f) {
                    out_of_band.push(format!("{kernel} {size} n={n}: {f:.3}"));
                }
            }
        }
        summary.push(format!("{kernel} [{:.3}, {:.3}]", range.0, range.1));
    }
    let mut detail = summary.join(", ");
    if !out_of_band.is_empty() {
        detail.push_str(&format!("; out of band: {}", out_of_band.join(", ")));
    }
    outcome(out_of_band.is_empty(), detail)
}

fn combined_length_law() -> Outcome {
    let mut bad = Vec::new();
    let round_trip = 55;
    for arb in [Arbitration::Beat, Arbitration::Burst(4), Arbitration::Transfer] {
        for n in 1..=8usize {
            for bytes in [1u64, 64, 8192] {
                let mut port = SharedPort::new("spm_wide", 64, arb);
                let reqs: Vec<TransferRequest> = (0..n)
                    .map(|origin| TransferRequest {
                        origin,
                        bytes,
                        issue_time: 0,
                        setup: 0,
                        round_trip,
                    })
                    .collect();
                let done = simulate_transfers(&mut port, &reqs).unwrap();
                let want = round_trip + n as u64 * bytes.div_ceil(64);
                let got = *done.iter().max().unwrap();
                if got != want {
                    bad.push(format!("{arb:?} n={n} bytes={bytes}: {got} != {want}"));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() { "72 cases exact".into() } else { bad.join("; ") },
    )
}

/// Drives one job through the unit; returns the interrupt times.
fn jcu_job(offload: u32, arrivals: &[u64], pending_until: Option<u64>) -> (Vec<u64>, u32) {
    let mut u = JobCompletionUnit::new();
    u.program(offload);
    if pending_until.is_some() {
        u.set_pending();
    }
    let mut fired = Vec::new();
    for &t in arrivals {
        if let Some(at) = u.arrive(t).unwrap() {
            fired.push(at);
        }
        assert!(u.arrivals() <= offload);
    }
    if let Some(clear) = pending_until {
        fired.extend(u.clear_interrupt(clear));
    }
    (fired, u.arrivals())
}

fn completion_unit_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = Vec::new();
    let mut cases = 0;
    for offload in [1u32, 4, 32] {
        let times: Vec<u64> = (0..offload as u64).map(|i| 10 + 3 * i).collect();
        let orders: Vec<Vec<u64>> = if offload <= 4 {
            times.iter().copied().permutations(times.len()).collect()
        } else {
            (0..200)
                .map(|_| {
                    let mut v: Vec<u64> = (0..offload).map(|_| rng.random_range(0..1000)).collect();
                    v.sort_unstable();
                    v
                })
                .collect()
        };
        for order in orders {
            // Arrivals are processed in time order; the permutation decides
            // which cluster arrives when.
            let mut t = order.clone();
            t.sort_unstable();
            let last = *t.last().unwrap();
            for pending in [None, Some(last + 50)] {
                cases += 1;
                let (fired, left) = jcu_job(offload, &t, pending);
                let want = pending.unwrap_or(last);
                if fired != vec![want] || left != 0 {
                    bad.push(format!("offload={offload} {order:?} pending={pending:?}: {fired:?}"));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{cases} jobs, {} violations {}", bad.len(), bad.first().cloned().unwrap_or_default()),
    )
}

fn sweep_json(setup: &Setup, plan: &ExperimentPlan) -> String {
    experiment::sweep(setup, plan)
        .unwrap()
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect()
}

fn determinism(setup: &Setup) -> Outcome {
    let plan = ExperimentPlan::new(
        &["axpy", "atax"],
        &[ProblemSize::vector(1024), ProblemSize::matrix(64, 64)],
        &[1, 2, 3, 4, 8, 16, 32],
        &Mode::ALL,
    );
    let a = sweep_json(setup, &plan);
    let b = sweep_json(setup, &plan);
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn shape_properties(setup: &Setup) -> Outcome {
    let mut bad = Vec::new();
    let grids: [(&str, Vec<ProblemSize>); 2] = [
        ("axpy", [256, 1024, 4096].map(ProblemSize::vector).to_vec()),
        ("atax", [64, 128, 256].map(|s| ProblemSize::matrix(s, s)).to_vec()),
    ];
    for (kernel, sizes) in grids {
        for size in sizes {
            let pts: Vec<_> = POWERS_OF_TWO
                .iter()
                .map(|&n| experiment::run_point(setup, kernel, size, n).unwrap())
                .collect();
            for (p, &n) in pts.iter().zip(&POWERS_OF_TWO) {
                for mode in Mode::ALL {
                    let r = p.report(mode);
                    for c in 0..n {
                        let starts: Vec<u64> = Phase::ALL
                            .iter()
                            .filter(|p| !p.is_host())
                            .filter_map(|&ph| r.interval(c, ph).map(|iv| iv.start))
                            .collect();
                        if !starts.windows(2).all(|w| w[0] <= w[1]) {
                            bad.push(format!("{kernel} {size} n={n} {mode} c={c}: phase order"));
                        }
                    }
                }
            }
            let base: Vec<i64> = pts
                .iter()
                .map(|p| p.baseline.total as i64 - p.ideal.total as i64)
                .collect();
            if !base.windows(2).all(|w| w[0] <= w[1]) {
                bad.push(format!("{kernel} {size}: baseline overhead {base:?}"));
            }
            if kernel == "axpy" {
                let ext: Vec<u64> = pts.iter().map(|p| p.extended.total).collect();
                if !ext.windows(2).all(|w| w[0] > w[1]) {
                    bad.push(format!("{kernel} {size}: extended totals {ext:?}"));
                }
                let e: BTreeSet<u64> = pts
                    .iter()
                    .map(|p| p.extended.stats(Phase::E).unwrap().max)
                    .collect();
                if e.len() != 1 {
                    bad.push(format!("{kernel} {size}: phase-E max {e:?}"));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() { "all invariants hold".into() } else { bad.join("; ") },
    )
}

#[test]
fn acceptance() {
    let setup = Setup::default();
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "analytic model exactness", Box::new(analytic_exactness)),
        (2, "multicast decode oracle", Box::new(multicast_oracle)),
        (3, "model vs simulator", Box::new(|| model_validation(&setup))),
        (4, "calibrated overheads", Box::new(|| overhead_reproduction(&setup))),
        (5, "restored speedup", Box::new(|| restored_speedup(&setup))),
        (6, "combined-length DMA law", Box::new(combined_length_law)),
        (7, "job completion unit", Box::new(completion_unit_suite)),
        (8, "determinism", Box::new(|| determinism(&setup))),
        (9, "shape properties", Box::new(|| shape_properties(&setup))),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in &criteria {
        let t = Instant::now();
        let o = check();
        println!(
            "criterion {id} ({name}): {} [{:.2?}] {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed(),
            o.detail
        );
        if !o.pass {
            failed.push(*id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
