//! Scenario files: a sectioned key/value format describing one experiment.
//! Parsing is strict (unknown keys and out-of-range values are named errors,
//! never ignored) and the canonical serializer round-trips exactly.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::capsule::{capsule_line, parse_capsule_line, Capsule, CapsuleLineError};
use crate::classifier::{RoutingPolicy, DEFAULT_TABLE_MAX};
use crate::time::SimTime;
use crate::traffic::{PacketKind, SizeModel, TrafficConfig};
use crate::EGRESS_PORTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    DropTail,
    Red,
    Anaqm,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::DropTail => "droptail",
            PolicyKind::Red => "red",
            PolicyKind::Anaqm => "anaqm",
        }
    }

    pub fn parse(s: &str) -> Option<PolicyKind> {
        match s {
            "droptail" => Some(PolicyKind::DropTail),
            "red" => Some(PolicyKind::Red),
            "anaqm" => Some(PolicyKind::Anaqm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedSettings {
    pub w_q: f64,
    pub min_th_frac: f64,
    pub max_th_frac: f64,
    pub max_p: f64,
}

impl Default for RedSettings {
    fn default() -> RedSettings {
        RedSettings {
            w_q: 0.002,
            min_th_frac: 0.25,
            max_th_frac: 0.75,
            max_p: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSettings {
    pub priv_ports: Vec<u8>,
    pub ef: Vec<u8>,
    pub af: Vec<u8>,
    pub be: Vec<u8>,
}

impl Default for RouteSettings {
    fn default() -> RouteSettings {
        RouteSettings {
            priv_ports: vec![0],
            ef: vec![0],
            af: vec![1, 2],
            be: vec![3, 4],
        }
    }
}

/// A complete experiment description. Every field except `seed` has a
/// default; `default_with_seed` is the one-key scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration: SimTime,
    pub snapshot_interval: SimTime,
    pub policies: Vec<PolicyKind>,
    pub traffic_rate_bps: u64,
    pub gap_ns: u64,
    pub flows: u32,
    pub start_window: SimTime,
    pub mix: Vec<(PacketKind, u32)>,
    pub size: SizeModel,
    pub egress_rate_bps: u64,
    pub rbuf_elems: u32,
    pub tbuf_elems: u32,
    pub ring_capacity: u32,
    pub rx_service_ns: u64,
    pub soft_fraction: f64,
    pub deferred_capacity: u32,
    pub table_max: u32,
    pub refresh: SimTime,
    pub red: RedSettings,
    pub routes: RouteSettings,
    pub capsules: Vec<(SimTime, Capsule)>,
}

impl Scenario {
    pub fn default_with_seed(seed: u64) -> Scenario {
        Scenario {
            seed,
            duration: SimTime::from_millis(60),
            snapshot_interval: SimTime::from_millis(20),
            policies: vec![PolicyKind::Anaqm],
            traffic_rate_bps: 1_000_000_000,
            gap_ns: 96,
            flows: 64,
            start_window: SimTime::from_millis(40),
            mix: PacketKind::ALL.iter().map(|&k| (k, 1)).collect(),
            size: SizeModel::Fixed(64),
            egress_rate_bps: 155_000_000,
            rbuf_elems: 128,
            tbuf_elems: 128,
            ring_capacity: 128,
            rx_service_ns: 50,
            soft_fraction: 0.85,
            deferred_capacity: 512,
            table_max: DEFAULT_TABLE_MAX as u32,
            refresh: SimTime::from_millis(50),
            red: RedSettings::default(),
            routes: RouteSettings::default(),
            capsules: Vec::new(),
        }
    }

    pub fn traffic_config(&self) -> TrafficConfig {
        TrafficConfig {
            aggregate_rate_bps: self.traffic_rate_bps,
            inter_packet_gap_ns: self.gap_ns,
            flow_count: self.flows,
            start_window_ns: self.start_window.as_nanos(),
            mix: self.mix.clone(),
            size_model: self.size,
            duration_ns: self.duration.as_nanos(),
            seed: self.seed,
        }
    }

    pub fn routing_policy(&self) -> RoutingPolicy {
        RoutingPolicy::new(
            self.routes.priv_ports.clone(),
            self.routes.ef.clone(),
            self.routes.af.clone(),
            self.routes.be.clone(),
        )
        .expect("validated at load")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: key `{key}` specified twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Malformed { line: usize },
    #[error("line {line}: capsule entry: {source}")]
    Capsule {
        line: usize,
        source: CapsuleLineError,
    },
    #[error("key `{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
    #[error("missing required key `seed`")]
    MissingSeed,
}

fn invalid(key: &str, constraint: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

fn parse_u64(key: &str, value: &str) -> Result<u64, ScenarioError> {
    value
        .parse::<u64>()
        .map_err(|_| invalid(key, format!("expected unsigned integer, got `{value}`")))
}

fn parse_u32(key: &str, value: &str) -> Result<u32, ScenarioError> {
    value
        .parse::<u32>()
        .map_err(|_| invalid(key, format!("expected unsigned integer, got `{value}`")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ScenarioError> {
    let v = value
        .parse::<f64>()
        .map_err(|_| invalid(key, format!("expected number, got `{value}`")))?;
    if !v.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(v)
}

fn parse_ports(key: &str, value: &str) -> Result<Vec<u8>, ScenarioError> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let p = part
            .parse::<u8>()
            .map_err(|_| invalid(key, format!("expected port list like `1,2`, got `{value}`")))?;
        if p as usize >= EGRESS_PORTS {
            return Err(invalid(
                key,
                format!("port {p} out of range 0..{}", EGRESS_PORTS - 1),
            ));
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(invalid(key, "must list at least one port"));
    }
    Ok(out)
}

fn parse_mix(value: &str) -> Result<Vec<(PacketKind, u32)>, ScenarioError> {
    let key = "mix";
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for part in value.split(',') {
        let part = part.trim();
        let (kind_txt, weight_txt) = part
            .split_once(':')
            .ok_or_else(|| invalid(key, format!("expected `kind:weight`, got `{part}`")))?;
        let kind = PacketKind::parse(kind_txt.trim())
            .ok_or_else(|| invalid(key, format!("unknown packet kind `{}`", kind_txt.trim())))?;
        let weight = parse_u32(key, weight_txt.trim())?;
        if weight == 0 {
            return Err(invalid(key, "weights must be positive"));
        }
        if !seen.insert(kind) {
            return Err(invalid(key, format!("kind `{}` listed twice", kind.as_str())));
        }
        out.push((kind, weight));
    }
    if out.is_empty() {
        return Err(invalid(key, "must list at least one kind"));
    }
    Ok(out)
}

fn parse_size(value: &str) -> Result<SizeModel, ScenarioError> {
    let key = "size";
    if let Some((lo, hi)) = value.split_once("..") {
        let lo = parse_u32(key, lo.trim())?;
        let hi = parse_u32(key, hi.trim())?;
        if lo > hi {
            return Err(invalid(key, format!("range is inverted: {lo} > {hi}")));
        }
        Ok(SizeModel::UniformRange(lo, hi))
    } else {
        Ok(SizeModel::Fixed(parse_u32(key, value)?))
    }
}

fn mix_text(mix: &[(PacketKind, u32)]) -> String {
    mix.iter()
        .map(|(k, w)| format!("{}:{}", k.as_str(), w))
        .collect::<Vec<_>>()
        .join(",")
}

fn ports_text(ports: &[u8]) -> String {
    ports
        .iter()
        .map(u8::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn size_text(size: SizeModel) -> String {
    match size {
        SizeModel::Fixed(s) => s.to_string(),
        SizeModel::UniformRange(lo, hi) => format!("{lo}..{hi}"),
    }
}

const SECTIONS: &[&str] = &[
    "run",
    "traffic",
    "ports",
    "pipeline",
    "classifier",
    "red",
    "routes",
    "capsules",
];

/// Parses scenario text. Bare `key = value` lines ahead of any section
/// header belong to `[run]`.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut seed: Option<u64> = None;
    let mut policies: Vec<PolicyKind> = Vec::new();
    let mut scn = Scenario::default_with_seed(0);
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut section = "run".to_string();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }

        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or(ScenarioError::Malformed { line: line_no })?;
            if !SECTIONS.contains(&name) {
                return Err(ScenarioError::UnknownSection {
                    line: line_no,
                    section: name.to_string(),
                });
            }
            section = name.to_string();
            continue;
        }

        if section == "capsules" {
            let (at, capsule) = parse_capsule_line(line).map_err(|source| {
                ScenarioError::Capsule {
                    line: line_no,
                    source,
                }
            })?;
            scn.capsules.push((at, capsule));
            continue;
        }

        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or(ScenarioError::Malformed { line: line_no })?;
        if key.is_empty() || value.is_empty() {
            return Err(ScenarioError::Malformed { line: line_no });
        }

        // `policy` repeats; every other key may appear once.
        if !(section == "run" && key == "policy")
            && !seen.insert((section.clone(), key.to_string()))
        {
            return Err(ScenarioError::DuplicateKey {
                line: line_no,
                key: key.to_string(),
            });
        }

        match (section.as_str(), key) {
            ("run", "seed") => seed = Some(parse_u64(key, value)?),
            ("run", "duration_ms") => scn.duration = SimTime::from_millis(parse_u64(key, value)?),
            ("run", "snapshot_interval_ms") => {
                scn.snapshot_interval = SimTime::from_millis(parse_u64(key, value)?)
            }
            ("run", "policy") => policies.push(
                PolicyKind::parse(value)
                    .ok_or_else(|| invalid(key, format!("unknown policy `{value}`")))?,
            ),
            ("traffic", "rate_bps") => scn.traffic_rate_bps = parse_u64(key, value)?,
            ("traffic", "gap_ns") => scn.gap_ns = parse_u64(key, value)?,
            ("traffic", "flows") => scn.flows = parse_u32(key, value)?,
            ("traffic", "start_window_ms") => {
                scn.start_window = SimTime::from_millis(parse_u64(key, value)?)
            }
            ("traffic", "mix") => scn.mix = parse_mix(value)?,
            ("traffic", "size") => scn.size = parse_size(value)?,
            ("ports", "egress_rate_bps") => scn.egress_rate_bps = parse_u64(key, value)?,
            ("pipeline", "rbuf_elems") => scn.rbuf_elems = parse_u32(key, value)?,
            ("pipeline", "tbuf_elems") => scn.tbuf_elems = parse_u32(key, value)?,
            ("pipeline", "ring_capacity") => scn.ring_capacity = parse_u32(key, value)?,
            ("pipeline", "rx_service_ns") => scn.rx_service_ns = parse_u64(key, value)?,
            ("pipeline", "soft_fraction") => scn.soft_fraction = parse_f64(key, value)?,
            ("pipeline", "deferred_capacity") => scn.deferred_capacity = parse_u32(key, value)?,
            ("classifier", "table_max") => scn.table_max = parse_u32(key, value)?,
            ("classifier", "refresh_ms") => {
                scn.refresh = SimTime::from_millis(parse_u64(key, value)?)
            }
            ("red", "w_q") => scn.red.w_q = parse_f64(key, value)?,
            ("red", "min_th_frac") => scn.red.min_th_frac = parse_f64(key, value)?,
            ("red", "max_th_frac") => scn.red.max_th_frac = parse_f64(key, value)?,
            ("red", "max_p") => scn.red.max_p = parse_f64(key, value)?,
            ("routes", "priv") => scn.routes.priv_ports = parse_ports(key, value)?,
            ("routes", "ef") => scn.routes.ef = parse_ports(key, value)?,
            ("routes", "af") => scn.routes.af = parse_ports(key, value)?,
            ("routes", "be") => scn.routes.be = parse_ports(key, value)?,
            _ => {
                return Err(ScenarioError::UnknownKey {
                    line: line_no,
                    section,
                    key: key.to_string(),
                })
            }
        }
    }

    scn.seed = seed.ok_or(ScenarioError::MissingSeed)?;
    if !policies.is_empty() {
        scn.policies = policies;
    }
    validate(&scn)?;
    Ok(scn)
}

fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    if s.duration.as_nanos() == 0 {
        return Err(invalid("duration_ms", "must be positive"));
    }
    if s.traffic_rate_bps == 0 {
        return Err(invalid("rate_bps", "must be positive"));
    }
    if s.gap_ns == 0 {
        return Err(invalid("gap_ns", "must be positive"));
    }
    if s.flows == 0 {
        return Err(invalid("flows", "must be at least 1"));
    }
    if s.start_window > s.duration {
        return Err(invalid(
            "start_window_ms",
            "must not exceed duration_ms",
        ));
    }
    match s.size {
        SizeModel::Fixed(n) if n < 20 => {
            return Err(invalid("size", "packet size must be at least 20 bytes"))
        }
        SizeModel::UniformRange(lo, _) if lo < 20 => {
            return Err(invalid("size", "packet size must be at least 20 bytes"))
        }
        _ => {}
    }
    if s.egress_rate_bps == 0 {
        return Err(invalid("egress_rate_bps", "must be positive"));
    }
    for (key, v) in [
        ("rbuf_elems", s.rbuf_elems),
        ("tbuf_elems", s.tbuf_elems),
        ("ring_capacity", s.ring_capacity),
        ("deferred_capacity", s.deferred_capacity),
        ("table_max", s.table_max),
    ] {
        if v == 0 {
            return Err(invalid(key, "must be at least 1"));
        }
    }
    if s.rx_service_ns == 0 {
        return Err(invalid("rx_service_ns", "must be positive"));
    }
    if s.refresh.as_nanos() == 0 {
        return Err(invalid("refresh_ms", "must be positive"));
    }
    if !(s.soft_fraction > 0.0 && s.soft_fraction <= 1.0) {
        return Err(invalid("soft_fraction", "range (0,1]"));
    }
    if !(s.red.w_q > 0.0 && s.red.w_q <= 1.0) {
        return Err(invalid("w_q", "range (0,1]"));
    }
    if !(s.red.max_p > 0.0 && s.red.max_p <= 1.0) {
        return Err(invalid("max_p", "range (0,1]"));
    }
    if !(s.red.min_th_frac >= 0.0 && s.red.min_th_frac < s.red.max_th_frac) {
        return Err(invalid(
            "min_th_frac",
            "requires 0 <= min_th_frac < max_th_frac",
        ));
    }
    if s.red.max_th_frac > 1.0 {
        return Err(invalid("max_th_frac", "range (min_th_frac,1]"));
    }
    RoutingPolicy::new(
        s.routes.priv_ports.clone(),
        s.routes.ef.clone(),
        s.routes.af.clone(),
        s.routes.be.clone(),
    )
    .map_err(|e| invalid(e.class, e.constraint))?;
    // Exercise the traffic-side validation too so the two stay consistent.
    s.traffic_config()
        .validate()
        .map_err(|e| invalid(e.field, e.constraint))?;
    Ok(())
}

/// Canonical serialization: fixed section/key order, all keys explicit.
/// `load_scenario(serialize_scenario(s)) == s`.
pub fn serialize_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    out.push_str("[run]\n");
    let _ = writeln!(out, "seed = {}", s.seed);
    let _ = writeln!(out, "duration_ms = {}", s.duration.as_nanos() / 1_000_000);
    let _ = writeln!(
        out,
        "snapshot_interval_ms = {}",
        s.snapshot_interval.as_nanos() / 1_000_000
    );
    for p in &s.policies {
        let _ = writeln!(out, "policy = {}", p.as_str());
    }
    out.push_str("\n[traffic]\n");
    let _ = writeln!(out, "rate_bps = {}", s.traffic_rate_bps);
    let _ = writeln!(out, "gap_ns = {}", s.gap_ns);
    let _ = writeln!(out, "flows = {}", s.flows);
    let _ = writeln!(
        out,
        "start_window_ms = {}",
        s.start_window.as_nanos() / 1_000_000
    );
    let _ = writeln!(out, "mix = {}", mix_text(&s.mix));
    let _ = writeln!(out, "size = {}", size_text(s.size));
    out.push_str("\n[ports]\n");
    let _ = writeln!(out, "egress_rate_bps = {}", s.egress_rate_bps);
    out.push_str("\n[pipeline]\n");
    let _ = writeln!(out, "rbuf_elems = {}", s.rbuf_elems);
    let _ = writeln!(out, "tbuf_elems = {}", s.tbuf_elems);
    let _ = writeln!(out, "ring_capacity = {}", s.ring_capacity);
    let _ = writeln!(out, "rx_service_ns = {}", s.rx_service_ns);
    let _ = writeln!(out, "soft_fraction = {}", s.soft_fraction);
    let _ = writeln!(out, "deferred_capacity = {}", s.deferred_capacity);
    out.push_str("\n[classifier]\n");
    let _ = writeln!(out, "table_max = {}", s.table_max);
    let _ = writeln!(out, "refresh_ms = {}", s.refresh.as_nanos() / 1_000_000);
    out.push_str("\n[red]\n");
    let _ = writeln!(out, "w_q = {}", s.red.w_q);
    let _ = writeln!(out, "min_th_frac = {}", s.red.min_th_frac);
    let _ = writeln!(out, "max_th_frac = {}", s.red.max_th_frac);
    let _ = writeln!(out, "max_p = {}", s.red.max_p);
    out.push_str("\n[routes]\n");
    let _ = writeln!(out, "priv = {}", ports_text(&s.routes.priv_ports));
    let _ = writeln!(out, "ef = {}", ports_text(&s.routes.ef));
    let _ = writeln!(out, "af = {}", ports_text(&s.routes.af));
    let _ = writeln!(out, "be = {}", ports_text(&s.routes.be));
    if !s.capsules.is_empty() {
        out.push_str("\n[capsules]\n");
        for (at, capsule) in &s.capsules {
            let _ = writeln!(out, "{}", capsule_line(*at, capsule));
        }
    }
    out
}
