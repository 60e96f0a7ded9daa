//! Monte Carlo against the analytic engine at the per-path level.

use mpfj::path::{path_latency_infinite, path_latency_unconditional, steady_state, transition_matrix};
use mpfj::sim::{simulate_path, simulate_path_with_occupancy, simulate_system, PathOutcome, SimParams};
use mpfj::stats::{empirical_cdf, ks_distance, CdfLike};
use mpfj::window::paoi_l2_small_instance;
use mpfj::{GridSpec, QueueCap, SystemConfig};

const BLOCKS: usize = 1_000_000;

fn single(cap: QueueCap, tau: f64, eps: f64) -> SystemConfig {
    SystemConfig::balanced(1, 1, cap, tau, 1.0, eps).unwrap()
}

fn path_latencies(outcomes: &[PathOutcome], tau: f64, warmup: usize) -> Vec<f64> {
    outcomes
        .iter()
        .enumerate()
        .skip(warmup)
        .map(|(i, o)| o.delivery_time().map_or(f64::INFINITY, |t| t - i as f64 * tau))
        .collect()
}

#[test]
fn pre_arrival_occupancy_matches_steady_state() {
    for l in 1..=3 {
        let cfg = single(QueueCap::Finite(l), 1.5, 0.0);
        let run = simulate_path_with_occupancy(&cfg, 0, &SimParams::new(BLOCKS, 11));
        let pi = steady_state(&transition_matrix(1.0, 1.5, l)).unwrap().probs();
        assert_eq!(pi.len(), l + 1);
        let mut counts = vec![0usize; l + 1];
        for &s in &run.occupancy[1000..] {
            counts[s as usize] += 1;
        }
        let n = (run.occupancy.len() - 1000) as f64;
        for (s, &p) in pi.iter().enumerate() {
            let emp = counts[s] as f64 / n;
            assert!((emp - p).abs() < 0.004, "L={l} s={s}: empirical {emp} vs {p}");
        }
    }
}

#[test]
fn per_path_latency_ks() {
    for cap in [QueueCap::Finite(1), QueueCap::Finite(2), QueueCap::Finite(3), QueueCap::Unbounded] {
        for tau in [2.0, 1.5] {
            for eps in [0.1, 0.2] {
                let cfg = single(cap, tau, eps);
                let params = SimParams::new(BLOCKS, 5);
                let outcomes = simulate_path(&cfg, 0, &params);
                let emp = empirical_cdf(&path_latencies(&outcomes, tau, params.warmup_blocks)).unwrap();
                let law = match cap {
                    QueueCap::Finite(_) => path_latency_unconditional(&cfg, 0, GridSpec::default()).unwrap().0,
                    QueueCap::Unbounded => path_latency_infinite(1.0, eps, tau, GridSpec::default()).unwrap(),
                };
                let d = ks_distance(&law, &emp);
                assert!(d < 0.005, "L={cap} tau={tau} eps={eps}: KS {d}");
            }
        }
    }
}

#[test]
fn finite_buffer_latency_is_bounded() {
    let cfg = single(QueueCap::Finite(3), 1.5, 0.1);
    let outcomes = simulate_path(&cfg, 0, &SimParams::new(200_000, 2));
    let worst = path_latencies(&outcomes, 1.5, 0)
        .into_iter()
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    assert!(worst > 0.0 && worst <= 3.0 * 1.5 + 1e-9, "{worst}");
}

#[test]
fn small_instance_l2_paoi_matches_simulation() {
    let cfg = SystemConfig::balanced(3, 2, QueueCap::Finite(2), 2.0, 1.0, 0.1).unwrap();
    let w = paoi_l2_small_instance(&cfg, 2, GridSpec::new(200)).unwrap();
    let out = simulate_system(&cfg, &SimParams::new(BLOCKS, 17)).unwrap();
    let emp = empirical_cdf(&out.aoi.samples()).unwrap();
    // Total variation over bins of width τ/20 on (0, 3τ].
    let bins = 60;
    let h = 3.0 * 2.0 / bins as f64;
    let mut tv = 0.0;
    for b in 0..bins {
        let (lo, hi) = (b as f64 * h, (b + 1) as f64 * h);
        let a = w.paoi.cdf(hi) - w.paoi.cdf(lo);
        let e = emp.cdf(hi) - emp.cdf(lo);
        tv += (a - e).abs();
    }
    tv += (w.covered_mass - emp.cdf(6.0)).abs();
    tv *= 0.5;
    assert!(tv < 0.02, "total variation {tv}");
    assert!(ks_distance(&w.paoi, &emp) >= w.tail_mass - 0.01);
}
