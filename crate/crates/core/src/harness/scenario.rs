use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::SimTime;
use crate::signaling::{AccessTech, EstimatorSpec, Factor};

pub const KB_70: u64 = 70_000;
pub const MB_2: u64 = 2_000_000;
pub const MB_10: u64 = 10_000_000;
pub const SIZES: [u64; 3] = [KB_70, MB_2, MB_10];
/// Effectively unbounded background transfer.
pub const LONG_FLOW_BYTES: u64 = 1 << 30;
pub const REPETITIONS: u32 = 30;
pub const ESTIMATE_FACTORS: [u32; 5] = [500, 1000, 1500, 3000, 4000];

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("bad size `{0}` (expected 70K, 2M, 10M or a byte count)")]
    Size(String),
    #[error("bad variant `{0}` (expected baseline or blitz:<factor>[:overest])")]
    Variant(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {value}")]
    Value { key: String, value: String },
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Short-flow variant under test. The background flow always runs the
/// baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Blitz { factor: Factor, overestimate: Factor },
}

impl Variant {
    pub fn blitz(factor_milli: u32) -> Self {
        Variant::Blitz { factor: Factor::from_milli(factor_milli).expect("positive factor"), overestimate: Factor::ONE }
    }

    /// Baseline followed by every estimate factor of the standard grid.
    pub fn standard_set() -> Vec<Variant> {
        let mut v = vec![Variant::Baseline];
        v.extend(ESTIMATE_FACTORS.iter().map(|&m| Variant::blitz(m)));
        v
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Baseline => f.write_str("baseline"),
            Variant::Blitz { factor, overestimate } if *overestimate == Factor::ONE => {
                write!(f, "blitz:{factor}")
            }
            Variant::Blitz { factor, overestimate } => write!(f, "blitz:{factor}:{overestimate}"),
        }
    }
}

impl FromStr for Variant {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::Variant(s.to_string());
        let s = s.trim();
        if s.eq_ignore_ascii_case("baseline") {
            return Ok(Variant::Baseline);
        }
        let rest = s.strip_prefix("blitz:").ok_or_else(bad)?;
        let mut parts = rest.split(':');
        let factor: Factor = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let overestimate = match parts.next() {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => Factor::ONE,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Variant::Blitz { factor, overestimate })
    }
}

pub fn parse_size(s: &str) -> Result<u64, ConfigError> {
    match s.trim().to_ascii_uppercase().as_str() {
        "70K" | "70KB" => Ok(KB_70),
        "2M" | "2MB" => Ok(MB_2),
        "10M" | "10MB" => Ok(MB_10),
        other => other.parse().map_err(|_| ConfigError::Size(s.to_string())),
    }
}

pub fn size_label(bytes: u64) -> String {
    match bytes {
        KB_70 => "70K".into(),
        MB_2 => "2M".into(),
        MB_10 => "10M".into(),
        b => b.to_string(),
    }
}

/// Where the server's Blitzstart RTT comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinRttSource {
    /// The client reports the path's minimum RTT from a previous
    /// connection inside the hint.
    Path,
    /// The server uses its handshake RTT sample, which includes any queue
    /// already standing at the bottleneck.
    Handshake,
}

impl FromStr for MinRttSource {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "path" => Ok(MinRttSource::Path),
            "handshake" => Ok(MinRttSource::Handshake),
            _ => Err(()),
        }
    }
}

/// Sources of run-to-run variation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JitterSpec {
    /// Short-flow start is delayed by a uniform draw from `[0, start_max)`.
    pub start_max: SimTime,
    /// Each packet is handed to the link after a uniform processing delay
    /// in `[0, sender_max]`.
    pub sender_max: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub rtt: SimTime,
    pub bottleneck_kbps: u32,
    pub buffer_pkts: usize,
    pub access_tech: AccessTech,
    pub long_flow_bytes: u64,
    pub short_flow_bytes: u64,
    /// Earliest short-flow start; the saturation gate must also have passed.
    pub short_flow_start: SimTime,
    pub variant: Variant,
    pub repetitions: u32,
    pub seed_base: u64,
    pub jitter: JitterSpec,
    /// Source of the client's bandwidth estimate before the variant factor is
    /// applied.
    pub estimator: EstimatorSpec,
    pub min_rtt_source: MinRttSource,
}

pub const PRESET_NAMES: [&str; 4] = ["DSL-slow", "DSL-fast", "3G", "LTE"];
pub const DEFAULT_SHORT_FLOW_START: SimTime = SimTime::from_secs(30);
pub const SIM_CAP: SimTime = SimTime::from_secs(300);

impl ScenarioConfig {
    fn base(name: &str, rtt_ms: u64, kbps: u32, buffer: usize, tech: AccessTech) -> Self {
        let rtt = SimTime::from_millis(rtt_ms);
        ScenarioConfig {
            name: name.to_string(),
            rtt,
            bottleneck_kbps: kbps,
            buffer_pkts: buffer,
            access_tech: tech,
            long_flow_bytes: LONG_FLOW_BYTES,
            short_flow_bytes: MB_2,
            short_flow_start: DEFAULT_SHORT_FLOW_START,
            variant: Variant::Baseline,
            repetitions: REPETITIONS,
            seed_base: 1,
            jitter: JitterSpec { start_max: rtt, sender_max: SimTime::from_micros(10) },
            estimator: EstimatorSpec::Oracle(Factor::ONE),
            min_rtt_source: MinRttSource::Path,
        }
    }

    pub fn dsl_slow() -> Self {
        Self::base("DSL-slow", 50, 25_000, 104, AccessTech::Dsl)
    }

    pub fn dsl_fast() -> Self {
        Self::base("DSL-fast", 50, 50_000, 208, AccessTech::Dsl)
    }

    pub fn three_g() -> Self {
        Self::base("3G", 90, 8_000, 140, AccessTech::ThreeG)
    }

    pub fn lte() -> Self {
        Self::base("LTE", 70, 32_000, 560, AccessTech::Lte)
    }

    pub fn presets() -> Vec<ScenarioConfig> {
        vec![Self::dsl_slow(), Self::dsl_fast(), Self::three_g(), Self::lte()]
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        Self::presets()
            .into_iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| ConfigError::UnknownScenario(name.to_string()))
    }

    pub fn with_size(mut self, bytes: u64) -> Self {
        self.short_flow_bytes = bytes;
        self
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed_base = seed;
        self
    }

    pub fn bottleneck_bps(&self) -> u64 {
        u64::from(self.bottleneck_kbps) * 1000
    }

    /// Bandwidth-delay product in bytes.
    pub fn bdp_bytes(&self) -> u64 {
        (u128::from(self.bottleneck_bps()) * u128::from(self.rtt.as_nanos()) / 8_000_000_000) as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String| ConfigError::Value { key: key.into(), value };
        if self.rtt == SimTime::ZERO {
            return Err(bad("rtt_ms", "0".into()));
        }
        if self.bottleneck_kbps == 0 {
            return Err(bad("bottleneck_kbps", "0".into()));
        }
        if self.buffer_pkts == 0 {
            return Err(bad("buffer_pkts", "0".into()));
        }
        if self.short_flow_bytes == 0 {
            return Err(bad("short_flow_bytes", "0".into()));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions", "0".into()));
        }
        Ok(())
    }

    /// Parse `key = value` lines. A `name` matching a built-in preset
    /// supplies defaults for every other field; otherwise `rtt_ms`,
    /// `bottleneck_kbps` and `buffer_pkts` are required.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: idx + 1, msg: "expected `key = value`".into() })?;
            pairs.push((idx + 1, k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        let name = pairs
            .iter()
            .find(|(_, k, _)| k == "name")
            .map(|(_, _, v)| v.clone())
            .ok_or(ConfigError::Missing("name"))?;
        let mut cfg = Self::preset(&name).unwrap_or_else(|_| {
            let mut c = Self::base(&name, 0, 0, 0, AccessTech::Unknown);
            c.jitter.start_max = SimTime::ZERO;
            c
        });
        let mut start_jitter_set = false;
        for (line, key, value) in pairs {
            let val = || ConfigError::Value { key: key.clone(), value: value.clone() };
            let num = || value.parse::<u64>().map_err(|_| val());
            match key.as_str() {
                "name" => {}
                "rtt_ms" => cfg.rtt = SimTime::from_millis(num()?),
                "bottleneck_kbps" => cfg.bottleneck_kbps = u32::try_from(num()?).map_err(|_| val())?,
                "buffer_pkts" => cfg.buffer_pkts = usize::try_from(num()?).map_err(|_| val())?,
                "access_tech" => cfg.access_tech = value.parse().map_err(|_| val())?,
                "long_flow_bytes" => cfg.long_flow_bytes = num()?,
                "short_flow_bytes" => cfg.short_flow_bytes = parse_size(&value).map_err(|_| val())?,
                "short_flow_start_ms" => cfg.short_flow_start = SimTime::from_millis(num()?),
                "variant" => cfg.variant = value.parse()?,
                "repetitions" => cfg.repetitions = u32::try_from(num()?).map_err(|_| val())?,
                "seed_base" => cfg.seed_base = num()?,
                "start_jitter_us" => {
                    cfg.jitter.start_max = SimTime::from_micros(num()?);
                    start_jitter_set = true;
                }
                "min_rtt_source" => cfg.min_rtt_source = value.parse().map_err(|_| val())?,
                "sender_jitter_us" => cfg.jitter.sender_max = SimTime::from_micros(num()?),
                "hint_trace" => {
                    cfg.estimator = EstimatorSpec::load_trace(Path::new(&value))
                        .map_err(|e| ConfigError::Value { key: key.clone(), value: e.to_string() })?
                }
                _ => return Err(ConfigError::Syntax { line, msg: format!("unknown key `{key}`") }),
            }
        }
        if !start_jitter_set && cfg.jitter.start_max == SimTime::ZERO {
            cfg.jitter.start_max = cfg.rtt;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::parse(&text)
    }
}
