//! Client-to-server bandwidth hint: the transport parameter carrying access
//! technology and a bandwidth estimate, and the estimators that produce it.
//!
//! Wire layout (big-endian):
//!
//! ```text
//! version u8 (0x01) | access_tech u8 | bandwidth_kbps u32 | flags u8 | [min_rtt_us u32]
//! ```
//!
//! `flags` bit 0 signals that `min_rtt_us` follows. Total length is 7 or 11
//! bytes. A bandwidth of zero means "no estimate".

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::SimTime;

pub const HINT_VERSION: u8 = 0x01;
const FLAG_MIN_RTT: u8 = 0x01;
const BASE_LEN: usize = 7;
const RTT_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum AccessTech {
    Unknown = 0,
    Ethernet = 1,
    Dsl = 2,
    Cable = 3,
    WiFi = 4,
    ThreeG = 5,
    Lte = 6,
}

impl AccessTech {
    pub const ALL: [AccessTech; 7] = [
        AccessTech::Unknown,
        AccessTech::Ethernet,
        AccessTech::Dsl,
        AccessTech::Cable,
        AccessTech::WiFi,
        AccessTech::ThreeG,
        AccessTech::Lte,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.get(usize::from(v)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AccessTech::Unknown => "unknown",
            AccessTech::Ethernet => "ethernet",
            AccessTech::Dsl => "dsl",
            AccessTech::Cable => "cable",
            AccessTech::WiFi => "wifi",
            AccessTech::ThreeG => "3g",
            AccessTech::Lte => "lte",
        }
    }

    pub fn is_mobile(self) -> bool {
        matches!(self, AccessTech::ThreeG | AccessTech::Lte)
    }
}

impl fmt::Display for AccessTech {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AccessTech {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown access technology `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BandwidthHint {
    pub access_tech: AccessTech,
    pub bandwidth_kbps: u32,
    pub min_rtt_us: Option<u32>,
}

impl BandwidthHint {
    pub fn new(access_tech: AccessTech, bandwidth_kbps: u32) -> Self {
        BandwidthHint { access_tech, bandwidth_kbps, min_rtt_us: None }
    }

    pub fn with_min_rtt(mut self, rtt: SimTime) -> Self {
        self.min_rtt_us = Some(u32::try_from(rtt.as_micros()).unwrap_or(u32::MAX));
        self
    }

    pub fn has_estimate(&self) -> bool {
        self.bandwidth_kbps > 0
    }

    pub fn bandwidth_bps(&self) -> u64 {
        u64::from(self.bandwidth_kbps) * 1000
    }

    pub fn min_rtt(&self) -> Option<SimTime> {
        self.min_rtt_us.map(|us| SimTime::from_micros(u64::from(us)))
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_hint(self)
    }
}

pub fn encode_hint(hint: &BandwidthHint) -> Vec<u8> {
    let mut out = Vec::with_capacity(BASE_LEN + RTT_LEN);
    out.push(HINT_VERSION);
    out.push(hint.access_tech as u8);
    out.extend_from_slice(&hint.bandwidth_kbps.to_be_bytes());
    match hint.min_rtt_us {
        Some(rtt) => {
            out.push(FLAG_MIN_RTT);
            out.extend_from_slice(&rtt.to_be_bytes());
        }
        None => out.push(0),
    }
    out
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("hint truncated: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("unsupported hint version {0:#04x}")]
    Version(u8),
    #[error("unknown access technology {0}")]
    AccessTech(u8),
    #[error("unknown flag bits {0:#04x}")]
    Flags(u8),
    #[error("{0} trailing bytes after hint")]
    Trailing(usize),
}

pub fn decode_hint(bytes: &[u8]) -> Result<BandwidthHint, DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::Truncated { needed: BASE_LEN, got: 0 });
    }
    if bytes[0] != HINT_VERSION {
        return Err(DecodeError::Version(bytes[0]));
    }
    if bytes.len() < BASE_LEN {
        return Err(DecodeError::Truncated { needed: BASE_LEN, got: bytes.len() });
    }
    let access_tech = AccessTech::from_u8(bytes[1]).ok_or(DecodeError::AccessTech(bytes[1]))?;
    let bandwidth_kbps = u32::from_be_bytes(bytes[2..6].try_into().expect("4 bytes"));
    let flags = bytes[6];
    if flags & !FLAG_MIN_RTT != 0 {
        return Err(DecodeError::Flags(flags));
    }
    let (min_rtt_us, len) = if flags & FLAG_MIN_RTT != 0 {
        let needed = BASE_LEN + RTT_LEN;
        if bytes.len() < needed {
            return Err(DecodeError::Truncated { needed, got: bytes.len() });
        }
        (Some(u32::from_be_bytes(bytes[7..11].try_into().expect("4 bytes"))), needed)
    } else {
        (None, BASE_LEN)
    };
    if bytes.len() > len {
        return Err(DecodeError::Trailing(bytes.len() - len));
    }
    Ok(BandwidthHint { access_tech, bandwidth_kbps, min_rtt_us })
}

/// Dimensionless multiplier stored in thousandths so that products with
/// integer bandwidths and times stay exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factor(u32);

#[derive(Clone, Debug, Error, PartialEq)]
#[error("factor must be a positive multiple of 0.001, got {0}")]
pub struct FactorError(pub f64);

impl Factor {
    pub const ONE: Factor = Factor(1000);

    pub fn from_milli(milli: u32) -> Result<Self, FactorError> {
        if milli == 0 {
            return Err(FactorError(0.0));
        }
        Ok(Factor(milli))
    }

    pub fn from_f64(v: f64) -> Result<Self, FactorError> {
        let milli = (v * 1000.0).round();
        if !v.is_finite() || v <= 0.0 || milli < 1.0 || milli > f64::from(u32::MAX) || (milli / 1000.0 - v).abs() > 1e-9
        {
            return Err(FactorError(v));
        }
        Ok(Factor(milli as u32))
    }

    pub fn milli(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 1000.0
    }

    /// `value * self`, rounded down.
    pub fn apply(self, value: u64) -> u64 {
        (u128::from(value) * u128::from(self.0) / 1000) as u64
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(1000) {
            write!(f, "{}.0", self.0 / 1000)
        } else {
            let s = format!("{}.{:03}", self.0 / 1000, self.0 % 1000);
            f.write_str(s.trim_end_matches('0'))
        }
    }
}

impl FromStr for Factor {
    type Err = FactorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: f64 = s.trim().parse().map_err(|_| FactorError(f64::NAN))?;
        Factor::from_f64(v)
    }
}

/// One `(time, estimate)` entry of an estimate trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TracePoint {
    pub at: SimTime,
    pub kbps: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EstimatorSpec {
    /// A multiple of the true bottleneck rate, as known to the experimenter.
    Oracle(Factor),
    Fixed(u32),
    /// Time-indexed estimates, sorted by time.
    Trace(Vec<TracePoint>),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("trace has no entries")]
    Empty,
}

impl EstimatorSpec {
    /// Parse `time_ms,kbps` lines. Blank lines and `#` comments are skipped;
    /// times must be strictly increasing.
    pub fn parse_trace(text: &str) -> Result<Self, TraceError> {
        let mut points: Vec<TracePoint> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |msg: &str| TraceError::Malformed { line: idx + 1, msg: msg.to_string() };
            let (t, bw) = line.split_once(',').ok_or_else(|| malformed("expected `time_ms,kbps`"))?;
            let t: u64 = t.trim().parse().map_err(|_| malformed("bad time"))?;
            let kbps: u32 = bw.trim().parse().map_err(|_| malformed("bad bandwidth"))?;
            let at = SimTime::from_millis(t);
            if points.last().is_some_and(|p| p.at >= at) {
                return Err(malformed("times must be strictly increasing"));
            }
            points.push(TracePoint { at, kbps });
        }
        if points.is_empty() {
            return Err(TraceError::Empty);
        }
        Ok(EstimatorSpec::Trace(points))
    }

    pub fn load_trace(path: &Path) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TraceError::Io { path: path.display().to_string(), source })?;
        Self::parse_trace(&text)
    }
}

/// What the client knows when it forms its estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EstimateContext {
    pub access_tech: AccessTech,
    /// Time since the start of the experiment.
    pub now: SimTime,
}

pub fn estimate(spec: &EstimatorSpec, true_bottleneck_kbps: u32, ctx: EstimateContext) -> BandwidthHint {
    let kbps = match spec {
        EstimatorSpec::Oracle(f) => u32::try_from(f.apply(u64::from(true_bottleneck_kbps))).unwrap_or(u32::MAX),
        EstimatorSpec::Fixed(k) => *k,
        EstimatorSpec::Trace(points) => {
            points.iter().take_while(|p| p.at <= ctx.now).last().or(points.first()).map_or(0, |p| p.kbps)
        }
    };
    BandwidthHint::new(ctx.access_tech, kbps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx() -> EstimateContext {
        EstimateContext { access_tech: AccessTech::Dsl, now: SimTime::ZERO }
    }

    #[test]
    fn encodes_dsl_hint() {
        let h = BandwidthHint::new(AccessTech::Dsl, 50_000);
        assert_eq!(encode_hint(&h), [0x01, 0x02, 0x00, 0x00, 0xC3, 0x50, 0x00]);
    }

    #[test]
    fn encodes_empty_hint() {
        let h = BandwidthHint::new(AccessTech::Unknown, 0);
        assert_eq!(encode_hint(&h), [0x01, 0, 0, 0, 0, 0, 0]);
        assert!(!h.has_estimate());
    }

    #[test]
    fn encodes_hint_with_rtt() {
        let h = BandwidthHint { access_tech: AccessTech::Lte, bandwidth_kbps: 32_000, min_rtt_us: Some(70_000) };
        assert_eq!(encode_hint(&h), [0x01, 0x06, 0x00, 0x00, 0x7D, 0x00, 0x01, 0x00, 0x01, 0x11, 0x70]);
    }

    #[test]
    fn decode_errors() {
        let good = encode_hint(&BandwidthHint::new(AccessTech::Cable, 1234));
        assert_eq!(decode_hint(&good[..6]), Err(DecodeError::Truncated { needed: 7, got: 6 }));
        let mut v2 = good.clone();
        v2[0] = 0x02;
        assert_eq!(decode_hint(&v2), Err(DecodeError::Version(2)));
        let mut tech = good.clone();
        tech[1] = 7;
        assert_eq!(decode_hint(&tech), Err(DecodeError::AccessTech(7)));
        let mut rtt_missing = good.clone();
        rtt_missing[6] = 1;
        assert_eq!(decode_hint(&rtt_missing), Err(DecodeError::Truncated { needed: 11, got: 7 }));
        let mut long = good;
        long.push(0);
        assert_eq!(decode_hint(&long), Err(DecodeError::Trailing(1)));
        assert!(decode_hint(&[]).is_err());
    }

    #[test]
    fn oracle_and_fixed_estimates() {
        let half = EstimatorSpec::Oracle(Factor::from_f64(0.5).unwrap());
        assert_eq!(estimate(&half, 50_000, ctx()).bandwidth_kbps, 25_000);
        let one = EstimatorSpec::Oracle(Factor::ONE);
        assert_eq!(estimate(&one, 8_000, ctx()).bandwidth_kbps, 8_000);
        assert_eq!(estimate(&EstimatorSpec::Fixed(10_000), 123, ctx()).bandwidth_kbps, 10_000);
    }

    #[test]
    fn trace_estimates_follow_time() {
        let spec = EstimatorSpec::parse_trace("# t,kbps\n0,1000\n500, 2000\n\n1500,3000\n").unwrap();
        let at = |ms| EstimateContext { access_tech: AccessTech::WiFi, now: SimTime::from_millis(ms) };
        assert_eq!(estimate(&spec, 0, at(0)).bandwidth_kbps, 1000);
        assert_eq!(estimate(&spec, 0, at(499)).bandwidth_kbps, 1000);
        assert_eq!(estimate(&spec, 0, at(500)).bandwidth_kbps, 2000);
        assert_eq!(estimate(&spec, 0, at(9000)).bandwidth_kbps, 3000);
    }

    #[test]
    fn malformed_traces_are_rejected() {
        assert!(matches!(EstimatorSpec::parse_trace("10;20"), Err(TraceError::Malformed { line: 1, .. })));
        assert!(matches!(EstimatorSpec::parse_trace("5,1\n5,2"), Err(TraceError::Malformed { line: 2, .. })));
        assert!(matches!(EstimatorSpec::parse_trace("x,1"), Err(TraceError::Malformed { .. })));
        assert!(matches!(EstimatorSpec::parse_trace("\n# nothing\n"), Err(TraceError::Empty)));
    }

    #[test]
    fn factor_parsing_and_display() {
        assert_eq!("1.5".parse::<Factor>().unwrap().milli(), 1500);
        assert_eq!(Factor::from_f64(4.0).unwrap().to_string(), "4.0");
        assert_eq!(Factor::from_f64(0.125).unwrap().to_string(), "0.125");
        assert!(Factor::from_f64(0.0).is_err());
        assert!(Factor::from_f64(-1.0).is_err());
        assert!(Factor::from_f64(0.0001).is_err());
    }

    fn any_hint() -> impl Strategy<Value = BandwidthHint> {
        (0u8..7, any::<u32>(), proptest::option::of(any::<u32>())).prop_map(|(t, bw, rtt)| BandwidthHint {
            access_tech: AccessTech::from_u8(t).unwrap(),
            bandwidth_kbps: bw,
            min_rtt_us: rtt,
        })
    }

    proptest! {
        #[test]
        fn roundtrip(h in any_hint()) {
            prop_assert_eq!(decode_hint(&encode_hint(&h)), Ok(h));
        }

        #[test]
        fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..=64)) {
            let _ = decode_hint(&bytes);
        }

        #[test]
        fn oracle_is_linear(milli in 1u32..=4000, k in 1u32..1_000) {
            let spec = EstimatorSpec::Oracle(Factor::from_milli(milli).unwrap());
            prop_assert_eq!(estimate(&spec, k * 1000, ctx()).bandwidth_kbps, milli * k);
        }
    }
}
