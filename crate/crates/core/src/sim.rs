//! Discrete-event simulation of the fork-join system.
//!
//! Each path is an independent single-server queue driven by the common
//! arrival clock `iτ`, so paths are simulated separately (in parallel) and
//! merged block by block. Every path draws from its own ChaCha8 stream:
//! `ChaCha8Rng::seed_from_u64(seed)` with `set_stream(j)`.

use std::collections::VecDeque;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{QueueCap, SystemConfig};
use crate::error::{Error, Result};
use crate::stats::{empirical_cdf, CdfSamples, MetricSummary};

/// PAoI percentile levels reported by default.
pub const DEFAULT_LEVELS: [f64; 2] = [0.95, 0.99];
/// Arrivals simulated past the last measured block before the unbounded queue is drained.
const MAX_TAIL_ARRIVALS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Total number of blocks, warmup included.
    pub n_blocks: usize,
    /// Leading blocks excluded from all metrics.
    pub warmup_blocks: usize,
    pub rng_seed: u64,
    /// Keep the AoI sawtooth vertices.
    pub record_traces: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            n_blocks: 1_000_000,
            warmup_blocks: 1_000,
            rng_seed: 1,
            record_traces: false,
        }
    }
}

impl SimParams {
    pub fn new(n_blocks: usize, rng_seed: u64) -> Self {
        SimParams {
            n_blocks,
            rng_seed,
            ..SimParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks <= self.warmup_blocks {
            return Err(Error::Scenario(format!(
                "n_blocks ({}) must exceed warmup_blocks ({})",
                self.n_blocks, self.warmup_blocks
            )));
        }
        Ok(())
    }

    pub fn measured_blocks(&self) -> usize {
        self.n_blocks - self.warmup_blocks
    }
}

/// Fate of one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathOutcome {
    /// Received at this absolute time.
    Delivered(f64),
    /// Served but lost on the channel.
    Erased,
    /// Pushed out of a full buffer.
    Dropped,
}

impl PathOutcome {
    pub fn delivery_time(self) -> Option<f64> {
        match self {
            PathOutcome::Delivered(t) => Some(t),
            _ => None,
        }
    }

    /// One-letter code used in trace files.
    pub fn code(self) -> &'static str {
        match self {
            PathOutcome::Delivered(_) => "D",
            PathOutcome::Erased => "E",
            PathOutcome::Dropped => "X",
        }
    }
}

/// Outcomes of one path plus, on request, the occupancy seen by each arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRun {
    pub outcomes: Vec<PathOutcome>,
    pub occupancy: Vec<u32>,
}

fn path_rng(seed: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    rng
}

fn run_path(cfg: &SystemConfig, j: usize, params: &SimParams, record_occupancy: bool) -> PathRun {
    let n = params.n_blocks;
    let tau = cfg.inter_arrival;
    let eps = cfg.erasure_probs[j];
    let cap = match cfg.queue_cap {
        QueueCap::Finite(l) => l,
        QueueCap::Unbounded => usize::MAX,
    };
    let service = Exp::new(cfg.service_rates[j]).expect("validated rate");
    let mut rng = path_rng(params.rng_seed, j);

    let mut outcomes = vec![PathOutcome::Dropped; n];
    let mut occupancy = Vec::with_capacity(if record_occupancy { n } else { 0 });
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut next_done = f64::INFINITY;

    let complete = |block: usize, at: f64, rng: &mut ChaCha8Rng, outcomes: &mut [PathOutcome]| {
        let erased = rng.random::<f64>() < eps;
        if block < n {
            outcomes[block] = if erased {
                PathOutcome::Erased
            } else {
                PathOutcome::Delivered(at)
            };
        }
    };

    let mut i = 0usize;
    loop {
        let now = i as f64 * tau;
        // Departures at or before an arrival epoch are processed first.
        while let Some(&head) = queue.front() {
            if next_done > now {
                break;
            }
            complete(head, next_done, &mut rng, &mut outcomes);
            queue.pop_front();
            next_done = if queue.is_empty() {
                f64::INFINITY
            } else {
                next_done + service.sample(&mut rng)
            };
        }
        if i >= n && (queue.front().is_none_or(|&h| h >= n) || i - n >= MAX_TAIL_ARRIVALS) {
            break;
        }
        if record_occupancy && i < n {
            occupancy.push(queue.len() as u32);
        }
        if queue.len() == cap {
            // Outcome slots start as Dropped, so only the service restart matters here.
            queue.pop_front();
            next_done = if queue.is_empty() {
                f64::INFINITY
            } else {
                now + service.sample(&mut rng)
            };
        }
        queue.push_back(i);
        if queue.len() == 1 {
            next_done = now + service.sample(&mut rng);
        }
        i += 1;
    }
    // No further arrivals: the rest of the queue is served in order.
    while let Some(head) = queue.pop_front() {
        complete(head, next_done, &mut rng, &mut outcomes);
        next_done += service.sample(&mut rng);
    }
    PathRun { outcomes, occupancy }
}

/// Per-block outcomes of path `j` for all `n_blocks` blocks (warmup included).
pub fn simulate_path(cfg: &SystemConfig, j: usize, params: &SimParams) -> Vec<PathOutcome> {
    run_path(cfg, j, params, false).outcomes
}

/// Like [`simulate_path`], also returning the occupancy seen by every arrival.
pub fn simulate_path_with_occupancy(cfg: &SystemConfig, j: usize, params: &SimParams) -> PathRun {
    run_path(cfg, j, params, true)
}

/// One block as seen by the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRecord<'a> {
    pub index: usize,
    pub gen_time: f64,
    pub per_path_delivery: &'a [PathOutcome],
    /// K-th delivery time, `None` if fewer than K packets arrived.
    pub decode_time: Option<f64>,
    /// `decode_time − gen_time`, `+∞` when undelivered.
    pub latency: f64,
}

/// Block-major outcome table of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRecords {
    n_paths: usize,
    tau: f64,
    warmup: usize,
    outcomes: Vec<PathOutcome>,
    decode: Vec<f64>,
}

/// K-th smallest delivery time among `outcomes`.
pub fn kth_delivery(outcomes: &[PathOutcome], k: usize) -> Option<f64> {
    let mut times: Vec<f64> = outcomes.iter().filter_map(|o| o.delivery_time()).collect();
    if times.len() < k {
        return None;
    }
    let (_, kth, _) = times.select_nth_unstable_by(k - 1, f64::total_cmp);
    Some(*kth)
}

impl SystemRecords {
    fn from_paths(cfg: &SystemConfig, params: &SimParams, paths: Vec<Vec<PathOutcome>>) -> Self {
        let n = params.n_blocks;
        let n_paths = paths.len();
        let mut outcomes = Vec::with_capacity(n * n_paths);
        for i in 0..n {
            outcomes.extend(paths.iter().map(|p| p[i]));
        }
        drop(paths);
        let decode = outcomes
            .chunks(n_paths)
            .map(|row| kth_delivery(row, cfg.k_data).unwrap_or(f64::INFINITY))
            .collect();
        SystemRecords {
            n_paths,
            tau: cfg.inter_arrival,
            warmup: params.warmup_blocks,
            outcomes,
            decode,
        }
    }

    /// Number of blocks, warmup included.
    pub fn len(&self) -> usize {
        self.decode.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decode.is_empty()
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn block(&self, i: usize) -> BlockRecord<'_> {
        let gen_time = i as f64 * self.tau;
        let d = self.decode[i];
        BlockRecord {
            index: i,
            gen_time,
            per_path_delivery: &self.outcomes[i * self.n_paths..(i + 1) * self.n_paths],
            decode_time: d.is_finite().then_some(d),
            latency: d - gen_time,
        }
    }

    /// All blocks, warmup included.
    pub fn iter(&self) -> impl Iterator<Item = BlockRecord<'_>> + '_ {
        (0..self.len()).map(move |i| self.block(i))
    }

    /// Blocks after the warmup.
    pub fn measured(&self) -> impl Iterator<Item = BlockRecord<'_>> + '_ {
        (self.warmup..self.len()).map(move |i| self.block(i))
    }

    /// Block latencies after warmup, `+∞` for undelivered blocks.
    pub fn latencies(&self) -> Vec<f64> {
        self.measured().map(|b| b.latency).collect()
    }

    /// Per-packet latencies of path `j` after warmup, `+∞` when lost.
    pub fn path_latencies(&self, j: usize) -> Vec<f64> {
        self.measured()
            .map(|b| match b.per_path_delivery[j] {
                PathOutcome::Delivered(t) => t - b.gen_time,
                _ => f64::INFINITY,
            })
            .collect()
    }

    /// Fraction of measured blocks that were decoded.
    pub fn success_prob(&self) -> f64 {
        let measured = self.len() - self.warmup;
        let ok = self.decode[self.warmup..].iter().filter(|d| d.is_finite()).count();
        ok as f64 / measured as f64
    }
}

/// Peak-age samples and, optionally, the age sawtooth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AoiTrace {
    /// `(block index, Δ)` for every decode that refreshed the receiver, warmup excluded.
    pub paoi: Vec<(usize, f64)>,
    /// Vertices `(t, θ(t))` of the age process, two per refreshing decode.
    pub theta: Option<Vec<(f64, f64)>>,
}

impl AoiTrace {
    pub fn samples(&self) -> Vec<f64> {
        self.paoi.iter().map(|&(_, d)| d).collect()
    }
}

/// Age bookkeeping in decode order; a decode refreshes the receiver only if
/// its block is newer than the freshest one seen so far.
pub fn aoi_trace(records: &SystemRecords, record_theta: bool) -> AoiTrace {
    let tau = records.tau;
    let mut events: Vec<(f64, usize)> = records
        .decode
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(i, &d)| (d, i))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut freshest = -tau;
    let mut newest: Option<usize> = None;
    let mut paoi = Vec::new();
    let mut theta = record_theta.then(Vec::new);
    for (r, i) in events {
        if newest.is_some_and(|n| i <= n) {
            continue;
        }
        let g = i as f64 * tau;
        if i >= records.warmup {
            paoi.push((i, r - freshest));
        }
        if let Some(th) = theta.as_mut() {
            th.push((r, r - freshest));
            th.push((r, r - g));
        }
        freshest = g;
        newest = Some(i);
    }
    AoiTrace { paoi, theta }
}

/// Result of [`simulate_system`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub records: SystemRecords,
    pub aoi: AoiTrace,
    pub summary: MetricSummary,
}

/// Simulates every path, assembles blocks and tracks the age of information.
pub fn simulate_system(cfg: &SystemConfig, params: &SimParams) -> Result<SimOutput> {
    simulate_system_with_levels(cfg, params, &DEFAULT_LEVELS)
}

pub fn simulate_system_with_levels(cfg: &SystemConfig, params: &SimParams, levels: &[f64]) -> Result<SimOutput> {
    cfg.validate()?;
    params.validate()?;
    let paths: Vec<Vec<PathOutcome>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|j| simulate_path(cfg, j, params))
        .collect();
    let records = SystemRecords::from_paths(cfg, params, paths);
    let aoi = aoi_trace(&records, params.record_traces);
    let latency = empirical_cdf(&records.latencies()).map_err(|e| Error::Scenario(e.to_string()))?;
    let samples = aoi.samples();
    let paoi = if samples.is_empty() {
        None
    } else {
        Some(CdfSamples::Empirical(
            empirical_cdf(&samples).map_err(|e| Error::Scenario(e.to_string()))?,
        ))
    };
    let summary = MetricSummary::new(records.success_prob(), CdfSamples::Empirical(latency), paoi, levels)
        .map_err(|e| Error::Scenario(e.to_string()))?;
    Ok(SimOutput { records, aoi, summary })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

/// One CSV row per block: index, gen_time, decode_time, latency, paoi, and one outcome code per path.
pub fn write_trace_csv<W: Write>(out: &SimOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let n_paths = out.records.n_paths();
    let mut header = vec!["index".to_string(), "gen_time".into(), "decode_time".into(), "latency".into(), "paoi".into()];
    header.extend((0..n_paths).map(|j| format!("path_{j}")));
    w.write_record(&header)?;
    let mut paoi = out.aoi.paoi.iter().peekable();
    for b in out.records.iter() {
        let mut sample = None;
        while let Some(&&(i, d)) = paoi.peek() {
            if i > b.index {
                break;
            }
            if i == b.index {
                sample = Some(d);
            }
            paoi.next();
        }
        let mut row = vec![
            b.index.to_string(),
            format!("{}", b.gen_time),
            fmt_opt(b.decode_time),
            fmt_opt(b.decode_time.map(|_| b.latency)),
            fmt_opt(sample),
        ];
        row.extend(b.per_path_delivery.iter().map(|o| o.code().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
