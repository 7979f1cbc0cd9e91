//! Capsule directives: a closed, restricted instruction set carried in-band
//! by capsule packets. Directives adjust node state (flow priority, port
//! thresholds) or collect a route trace; they are data, never executable
//! code. Nodes that cannot parse a directive ignore it and forward the
//! packet as plain traffic.

use std::fmt;

use crate::packet::{FlowKey, Protocol, TrafficClass};
use crate::time::SimTime;

/// Parsed directive payload. `Opaque` preserves the raw text of anything
/// unknown or malformed: such capsules are counted and ignored.
#[derive(Debug, Clone, PartialEq)]
pub enum CapsulePayload {
    SetFlowPriority { target: FlowKey, level: TrafficClass },
    SetPortThreshold { port: u8, fraction: f64 },
    Trace,
    Opaque(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capsule {
    pub payload: CapsulePayload,
    /// Node identifiers appended by Trace handling along the path.
    pub trace_log: Vec<String>,
}

impl Capsule {
    pub fn new(payload: CapsulePayload) -> Capsule {
        Capsule {
            payload,
            trace_log: Vec::new(),
        }
    }
}

/// Errors for the line envelope only. A recognizable `CAPSULE` line whose
/// directive part is garbage still parses (as `Opaque`); these errors mean
/// the line itself cannot be a capsule entry.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CapsuleLineError {
    #[error("capsule line must start with the CAPSULE keyword")]
    MissingKeyword,
    #[error("malformed @time token: {0:?}")]
    BadTime(String),
}

/// Parses one `[capsules]` section line:
/// `CAPSULE [@<time_ns>] <KIND> <args...>`.
///
/// The optional `@time` token schedules the capsule packet's arrival
/// (default 0 ns). The directive part is parsed into a known payload when
/// possible and preserved as `Opaque` otherwise. Must never panic on any
/// input.
pub fn parse_capsule_line(line: &str) -> Result<(SimTime, Capsule), CapsuleLineError> {
    let rest = line.trim();
    let rest = rest
        .strip_prefix("CAPSULE")
        .ok_or(CapsuleLineError::MissingKeyword)?;
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return Err(CapsuleLineError::MissingKeyword);
    }
    let rest = rest.trim_start();

    let (at, directive) = match rest.strip_prefix('@') {
        Some(timed) => {
            let mut parts = timed.splitn(2, char::is_whitespace);
            let time_tok = parts.next().unwrap_or("");
            let ns: u64 = time_tok
                .parse()
                .map_err(|_| CapsuleLineError::BadTime(time_tok.to_string()))?;
            (SimTime::from_nanos(ns), parts.next().unwrap_or("").trim())
        }
        None => (SimTime::ZERO, rest),
    };

    Ok((at, Capsule::new(parse_directive(directive))))
}

fn parse_directive(text: &str) -> CapsulePayload {
    let opaque = || CapsulePayload::Opaque(text.to_string());
    let tokens: Vec<&str> = text.split_whitespace().collect();
    match tokens.as_slice() {
        ["SET_FLOW_PRIORITY", flow, class] => {
            match (parse_flow_key(flow), TrafficClass::parse(class)) {
                (Some(target), Some(level)) => CapsulePayload::SetFlowPriority { target, level },
                _ => opaque(),
            }
        }
        ["SET_PORT_THRESHOLD", port, fraction] => {
            match (port.parse::<u8>(), fraction.parse::<f64>()) {
                (Ok(port), Ok(fraction))
                    if port < crate::EGRESS_PORTS as u8
                        && fraction > 0.0
                        && fraction <= 1.0 =>
                {
                    CapsulePayload::SetPortThreshold { port, fraction }
                }
                _ => opaque(),
            }
        }
        ["TRACE"] => CapsulePayload::Trace,
        _ => opaque(),
    }
}

/// Parses the textual flow-key form `a.b.c.d:sport->a.b.c.d:dport/proto`.
pub fn parse_flow_key(text: &str) -> Option<FlowKey> {
    let (src, rest) = text.split_once("->")?;
    let (dst, proto) = rest.rsplit_once('/')?;
    let (src_addr, src_port) = parse_endpoint(src)?;
    let (dst_addr, dst_port) = parse_endpoint(dst)?;
    Some(FlowKey {
        src_addr,
        dst_addr,
        src_port,
        dst_port,
        protocol: Protocol::parse(proto)?,
    })
}

fn parse_endpoint(text: &str) -> Option<(u32, u16)> {
    let (addr, port) = text.rsplit_once(':')?;
    let mut octets = addr.split('.');
    let mut value: u32 = 0;
    for _ in 0..4 {
        let octet: u8 = octets.next()?.parse().ok()?;
        value = (value << 8) | octet as u32;
    }
    if octets.next().is_some() {
        return None;
    }
    Some((value, port.parse().ok()?))
}

/// Canonical wire form of a scheduled capsule, reparsed identically by
/// [`parse_capsule_line`].
pub fn capsule_line(at: SimTime, capsule: &Capsule) -> String {
    format!("CAPSULE @{} {}", at.as_nanos(), DirectiveText(&capsule.payload))
}

struct DirectiveText<'a>(&'a CapsulePayload);

impl fmt::Display for DirectiveText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            CapsulePayload::SetFlowPriority { target, level } => {
                write!(f, "SET_FLOW_PRIORITY {} {}", target, level.as_str())
            }
            CapsulePayload::SetPortThreshold { port, fraction } => {
                write!(f, "SET_PORT_THRESHOLD {} {}", port, fraction)
            }
            CapsulePayload::Trace => write!(f, "TRACE"),
            CapsulePayload::Opaque(raw) => write!(f, "{}", raw),
        }
    }
}
