//! Scenarios, runs, sweeps and the aggregates reported from them.

use rayon::prelude::*;
use thiserror::Error;

use crate::link::LossModel;
use crate::network::{Network, RunError};
use crate::packet::{NodeId, SegmentNo};
use crate::sim::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("hops must be at least 2, got {0}")]
    TooFewHops(usize),
    #[error("loss probability {0} is outside [0, 1)")]
    Loss(f64),
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

/// Forces the first data transmission of `seq` by `from` to be lost. Used to
/// script exact loss patterns in traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForcedLoss {
    pub from: NodeId,
    pub seq: SegmentNo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Links on the path, counting both endpoint links.
    pub hops: usize,
    pub p_data: f64,
    pub dtc_enabled: bool,
    pub total_segments: u32,
    pub window: u32,
    pub hop_latency: SimTime,
    pub seed: u64,
    pub max_local_retries: u32,
    pub ll_wait_multiplier: u32,
    /// Sender rto_min as a multiple of the one-way path delay.
    pub rto_min_multiplier: u32,
    /// Replaces the path-scaled rto_min when set.
    pub rto_min_override: Option<SimTime>,
    pub rto_initial_multiplier: u32,
    pub rto_max: SimTime,
    pub fast_retransmit: bool,
    pub event_budget: u64,
    pub forced_losses: Vec<ForcedLoss>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            hops: 11,
            p_data: 0.10,
            dtc_enabled: true,
            total_segments: 500,
            window: 3,
            hop_latency: SimTime::from_millis(10),
            seed: 1,
            max_local_retries: 3,
            ll_wait_multiplier: 3,
            rto_min_multiplier: 8,
            rto_min_override: None,
            rto_initial_multiplier: 3,
            rto_max: SimTime::from_secs(60),
            fast_retransmit: false,
            event_budget: 100_000_000,
            forced_losses: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn new(hops: usize, p_data: f64, dtc_enabled: bool, seed: u64) -> Self {
        Self {
            hops,
            p_data,
            dtc_enabled,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.hops < 2 {
            return Err(ScenarioError::TooFewHops(self.hops));
        }
        LossModel::derive(self.p_data).map_err(|_| ScenarioError::Loss(self.p_data))?;
        let positive = [
            ("segments", self.total_segments as u64),
            ("window", self.window as u64),
            ("hop_latency", self.hop_latency.as_micros()),
            ("ll_wait_multiplier", self.ll_wait_multiplier as u64),
            ("rto_initial_multiplier", self.rto_initial_multiplier as u64),
            ("event_budget", self.event_budget),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ScenarioError::NotPositive(name));
            }
        }
        Ok(())
    }

    pub fn one_way_delay(&self) -> SimTime {
        self.hop_latency.scale(self.hops as u64, 1)
    }

    pub fn rto_min(&self) -> SimTime {
        self.rto_min_override
            .unwrap_or_else(|| self.one_way_delay().scale(self.rto_min_multiplier as u64, 1))
    }

    pub fn key(&self) -> ScenarioKey {
        ScenarioKey {
            hops: self.hops,
            p_data: self.p_data,
            dtc_enabled: self.dtc_enabled,
        }
    }
}

/// Identifies a sweep cell independent of seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioKey {
    pub hops: usize,
    pub p_data: f64,
    pub dtc_enabled: bool,
}

impl ScenarioKey {
    pub fn id(&self) -> String {
        format!("h{}_p{}_{}", self.hops, self.p_data, on_off(self.dtc_enabled))
    }

    fn same_cell(&self, other: &ScenarioKey) -> bool {
        self.hops == other.hops && self.p_data == other.p_data
    }
}

pub fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    pub e2e_retransmissions: u64,
    /// Data-segment transmissions per relay, index 0 next to the sender.
    pub per_node_data_tx: Vec<u64>,
    pub sender_data_tx: u64,
    pub completion_time: SimTime,
    pub delivered_segments: u64,
    pub local_retransmissions_total: u64,
}

impl RunMetrics {
    /// Segments per second.
    pub fn throughput(&self) -> f64 {
        self.delivered_segments as f64 / self.completion_time.as_secs_f64()
    }
}

/// Runs a single scenario to completion.
pub fn run(s: &Scenario) -> Result<RunMetrics, SimulationError> {
    s.validate()?;
    Ok(Network::new(s).run()?)
}

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("aggregate over an empty set of runs")]
    EmptyAggregate,
    #[error("cannot compare {0} with {1}")]
    MismatchedKeys(String, String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub key: ScenarioKey,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Runs every grid cell `runs` times with seeds `base_seed + run_index`.
///
/// `template` supplies every scenario field not fixed by the grid. Runs
/// execute in parallel; rows come back in grid order, then run order.
pub fn sweep(
    template: &Scenario,
    grid: &[ScenarioKey],
    runs: usize,
    base_seed: u64,
) -> Result<Vec<RunRow>, SimulationError> {
    let jobs: Vec<Scenario> = grid
        .iter()
        .flat_map(|k| {
            (0..runs).map(move |r| Scenario {
                hops: k.hops,
                p_data: k.p_data,
                dtc_enabled: k.dtc_enabled,
                seed: base_seed.wrapping_add(r as u64),
                ..template.clone()
            })
        })
        .collect();
    jobs.par_iter()
        .map(|s| {
            run(s).map(|metrics| RunRow {
                key: s.key(),
                seed: s.seed,
                metrics,
            })
        })
        .collect()
}

/// Arithmetic mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let stddev = if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, stddev })
    }

    /// stddev / mean, zero for a zero mean.
    pub fn coefficient_of_variation(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.stddev / self.mean
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub key: ScenarioKey,
    pub runs: usize,
    pub e2e_retransmissions: Stat,
    pub sender_data_tx: Stat,
    pub local_retransmissions: Stat,
    pub completion_time_us: Stat,
    pub delivered_segments: Stat,
    pub throughput: Stat,
    pub per_node_data_tx: Vec<Stat>,
}

impl Aggregate {
    /// Spread of the per-node mean transmission counts.
    pub fn per_node_flatness(&self) -> Stat {
        Stat::of(self.per_node_data_tx.iter().map(|s| s.mean)).unwrap_or(Stat { mean: 0.0, stddev: 0.0 })
    }
}

pub fn aggregate(rows: &[RunRow]) -> Result<Aggregate, SimulationError> {
    let first = rows.first().ok_or(SimulationError::EmptyAggregate)?;
    if let Some(bad) = rows.iter().find(|r| r.key != first.key) {
        return Err(SimulationError::MismatchedKeys(first.key.id(), bad.key.id()));
    }
    let stat = |f: &dyn Fn(&RunMetrics) -> f64| Stat::of(rows.iter().map(|r| f(&r.metrics))).expect("non-empty");
    let nodes = rows.iter().map(|r| r.metrics.per_node_data_tx.len()).max().unwrap_or(0);
    let per_node_data_tx = (0..nodes)
        .map(|i| {
            Stat::of(
                rows.iter()
                    .map(|r| r.metrics.per_node_data_tx.get(i).copied().unwrap_or(0) as f64),
            )
            .expect("non-empty")
        })
        .collect();
    Ok(Aggregate {
        key: first.key,
        runs: rows.len(),
        e2e_retransmissions: stat(&|m| m.e2e_retransmissions as f64),
        sender_data_tx: stat(&|m| m.sender_data_tx as f64),
        local_retransmissions: stat(&|m| m.local_retransmissions_total as f64),
        completion_time_us: stat(&|m| m.completion_time.as_micros() as f64),
        delivered_segments: stat(&|m| m.delivered_segments as f64),
        throughput: stat(&|m| m.throughput()),
        per_node_data_tx,
    })
}

/// Groups rows by scenario key, preserving first-seen order, and aggregates
/// each group.
pub fn aggregate_all(rows: &[RunRow]) -> Result<Vec<Aggregate>, SimulationError> {
    let mut keys: Vec<ScenarioKey> = Vec::new();
    for r in rows {
        if !keys.contains(&r.key) {
            keys.push(r.key);
        }
    }
    keys.iter()
        .map(|k| {
            let group: Vec<RunRow> = rows.iter().filter(|r| r.key == *k).cloned().collect();
            aggregate(&group)
        })
        .collect()
}

/// Baseline mean end-to-end retransmissions over the caching mean, with the
/// denominator floored at one.
pub fn reduction_factor(base: &Aggregate, dtc: &Aggregate) -> Result<f64, SimulationError> {
    if !base.key.same_cell(&dtc.key) || base.key.dtc_enabled || !dtc.key.dtc_enabled {
        return Err(SimulationError::MismatchedKeys(base.key.id(), dtc.key.id()));
    }
    Ok(base.e2e_retransmissions.mean / dtc.e2e_retransmissions.mean.max(1.0))
}
