//! `key = value` configuration with command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::harness::{Scenario, ScenarioKey};
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DtcMode {
    On,
    Off,
    Both,
}

impl DtcMode {
    /// Baseline first, so paired rows sit next to each other.
    pub fn flags(self) -> &'static [bool] {
        match self {
            DtcMode::On => &[true],
            DtcMode::Off => &[false],
            DtcMode::Both => &[false, true],
        }
    }
}

/// Where a setting came from, for error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    File { path: PathBuf, line: usize },
    Flag,
}

#[derive(Debug, PartialEq)]
pub struct ConfigError {
    pub source: Option<Source>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Some(Source::File { path, line }) => {
                write!(f, "{}:{}: {}: {}", path.display(), line, self.key, self.message)
            }
            Some(Source::Flag) => write!(f, "--{}: {}", self.key.replace('_', "-"), self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub hops: Vec<usize>,
    pub loss: Vec<f64>,
    pub dtc: DtcMode,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Every per-run field; hops, p_data, dtc_enabled and seed are
    /// overwritten per grid cell.
    pub scenario: Scenario,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            hops: vec![11],
            loss: vec![0.10],
            dtc: DtcMode::Both,
            runs: 30,
            seed: 1,
            out: PathBuf::from("results"),
            scenario: Scenario::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "hops",
    "loss",
    "dtc",
    "runs",
    "seed",
    "out",
    "segments",
    "window",
    "hop_latency_ms",
    "max_local_retries",
    "ll_wait_multiplier",
    "rto_min_multiplier",
    "rto_min_ms",
    "rto_initial_multiplier",
    "rto_max_ms",
    "fast_retransmit",
];

impl Config {
    pub fn grid(&self) -> Vec<ScenarioKey> {
        let mut grid = Vec::new();
        for &hops in &self.hops {
            for &p_data in &self.loss {
                for &dtc_enabled in self.dtc.flags() {
                    grid.push(ScenarioKey {
                        hops,
                        p_data,
                        dtc_enabled,
                    });
                }
            }
        }
        grid
    }

    /// Applies one setting. Errors carry the key but no source; callers add it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let s = &mut self.scenario;
        match key {
            "hops" => {
                let hops = parse_hops(v)?;
                if let Some(h) = hops.iter().find(|h| **h < 2) {
                    return Err(format!("hop count {h} is below 2"));
                }
                self.hops = hops;
            }
            "loss" => {
                let loss = parse_list(v, |x| x.parse::<f64>().map_err(|e| format!("'{x}': {e}")))?;
                if let Some(p) = loss.iter().find(|p| !(0.0..1.0).contains(*p)) {
                    return Err(format!("value {p} outside [0, 1)"));
                }
                self.loss = loss;
            }
            "dtc" => {
                self.dtc = match v {
                    "on" => DtcMode::On,
                    "off" => DtcMode::Off,
                    "both" => DtcMode::Both,
                    _ => return Err(format!("expected on, off or both, got '{v}'")),
                }
            }
            "runs" => self.runs = positive(v)? as usize,
            "seed" => self.seed = v.parse().map_err(|e| format!("'{v}': {e}"))?,
            "out" => {
                if v.is_empty() {
                    return Err("empty path".into());
                }
                self.out = PathBuf::from(v);
            }
            "segments" => s.total_segments = positive_u32(v)?,
            "window" => s.window = positive_u32(v)?,
            "hop_latency_ms" => s.hop_latency = SimTime::from_millis(positive(v)?),
            "max_local_retries" => s.max_local_retries = v.parse().map_err(|e| format!("'{v}': {e}"))?,
            "ll_wait_multiplier" => s.ll_wait_multiplier = positive_u32(v)?,
            "rto_min_multiplier" => s.rto_min_multiplier = positive_u32(v)?,
            "rto_min_ms" => s.rto_min_override = Some(SimTime::from_millis(positive(v)?)),
            "rto_initial_multiplier" => s.rto_initial_multiplier = positive_u32(v)?,
            "rto_max_ms" => s.rto_max = SimTime::from_millis(positive(v)?),
            "fast_retransmit" => {
                s.fast_retransmit = match v {
                    "true" | "on" | "yes" => true,
                    "false" | "off" | "no" => false,
                    _ => return Err(format!("expected true or false, got '{v}'")),
                }
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }
}

fn positive(v: &str) -> Result<u64, String> {
    match v.parse::<u64>() {
        Ok(0) => Err("must be positive".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(format!("'{v}': {e}")),
    }
}

fn positive_u32(v: &str) -> Result<u32, String> {
    let n = positive(v)?;
    u32::try_from(n).map_err(|_| format!("{n} is too large"))
}

fn parse_list<T>(v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out: Vec<T> = v.split(',').map(|x| item(x.trim())).collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// `6,8,11` or the inclusive range `6..11`.
fn parse_hops(v: &str) -> Result<Vec<usize>, String> {
    let int = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
    if let Some((a, b)) = v.split_once("..") {
        let (a, b) = (int(a)?, int(b)?);
        if a > b {
            return Err(format!("empty range {a}..{b}"));
        }
        return Ok((a..=b).collect());
    }
    parse_list(v, int)
}

/// Reads `path` (if any), then applies `overrides` in order. Flags therefore
/// win over the file, and both win over the defaults.
pub fn load_config(path: Option<&Path>, overrides: &[(&str, String)]) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            source: None,
            key: "config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let source = Some(Source::File {
                path: path.to_path_buf(),
                line: i + 1,
            });
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    source,
                    key: line.to_string(),
                    message: "expected key = value".into(),
                });
            };
            let key = key.trim();
            cfg.set(key, value).map_err(|message| ConfigError {
                source,
                key: key.to_string(),
                message,
            })?;
        }
    }
    for (key, value) in overrides {
        cfg.set(key, value).map_err(|message| ConfigError {
            source: Some(Source::Flag),
            key: key.to_string(),
            message,
        })?;
    }
    Ok(cfg)
}
