//! Event-sourced counters and derived statistics: per-class/per-port loss
//! rates, queuing-delay order statistics, trailing-window rates for status
//! snapshots, a plain-text event log, and a replay harness that rebuilds
//! counters from that log.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

use crate::packet::{Fate, TrafficClass};
use crate::time::SimTime;

/// Rates shown in snapshots use this trailing rectangular window.
pub const RATE_WINDOW_NS: u64 = 1_000_000;

/// Class label for counting: real traffic classes plus a bucket for packets
/// that terminate before classification (hop TTL expiry, ingress overflow).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassBucket {
    Priv,
    Ef,
    Af,
    Be,
    Unclassified,
}

impl ClassBucket {
    pub const ALL: [ClassBucket; 5] = [
        ClassBucket::Priv,
        ClassBucket::Ef,
        ClassBucket::Af,
        ClassBucket::Be,
        ClassBucket::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassBucket::Priv => "priv",
            ClassBucket::Ef => "ef",
            ClassBucket::Af => "af",
            ClassBucket::Be => "be",
            ClassBucket::Unclassified => "unclassified",
        }
    }

    pub fn parse(text: &str) -> Option<ClassBucket> {
        Some(match text {
            "priv" => ClassBucket::Priv,
            "ef" => ClassBucket::Ef,
            "af" => ClassBucket::Af,
            "be" => ClassBucket::Be,
            "unclassified" => ClassBucket::Unclassified,
            _ => return None,
        })
    }
}

impl From<Option<TrafficClass>> for ClassBucket {
    fn from(class: Option<TrafficClass>) -> ClassBucket {
        match class {
            Some(TrafficClass::Priv) => ClassBucket::Priv,
            Some(TrafficClass::Ef) => ClassBucket::Ef,
            Some(TrafficClass::Af) => ClassBucket::Af,
            Some(TrafficClass::Be) => ClassBucket::Be,
            None => ClassBucket::Unclassified,
        }
    }
}

impl fmt::Display for ClassBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrive,
    Enqueue,
    Defer,
    Promote,
    Redirect,
    Transmit,
    DropQueueFull,
    DropDeferredFull,
    DropTtl,
    DropRed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrive => "arrive",
            EventKind::Enqueue => "enqueue",
            EventKind::Defer => "defer",
            EventKind::Promote => "promote",
            EventKind::Redirect => "redirect",
            EventKind::Transmit => "transmit",
            EventKind::DropQueueFull => "drop_queue_full",
            EventKind::DropDeferredFull => "drop_deferred_full",
            EventKind::DropTtl => "drop_ttl",
            EventKind::DropRed => "drop_red",
        }
    }

    pub fn parse(text: &str) -> Option<EventKind> {
        Some(match text {
            "arrive" => EventKind::Arrive,
            "enqueue" => EventKind::Enqueue,
            "defer" => EventKind::Defer,
            "promote" => EventKind::Promote,
            "redirect" => EventKind::Redirect,
            "transmit" => EventKind::Transmit,
            "drop_queue_full" => EventKind::DropQueueFull,
            "drop_deferred_full" => EventKind::DropDeferredFull,
            "drop_ttl" => EventKind::DropTtl,
            "drop_red" => EventKind::DropRed,
            _ => return None,
        })
    }

    pub fn drop_fate(self) -> Option<Fate> {
        Some(match self {
            EventKind::DropQueueFull => Fate::DroppedQueueFull,
            EventKind::DropDeferredFull => Fate::DroppedDeferredFull,
            EventKind::DropTtl => Fate::DroppedTtl,
            EventKind::DropRed => Fate::DroppedRed,
            _ => return None,
        })
    }
}

/// One line of the event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub at: SimTime,
    pub packet_id: u64,
    pub kind: EventKind,
    pub class: ClassBucket,
    pub port: Option<u8>,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} ",
            self.at.as_nanos(),
            self.packet_id,
            self.kind.as_str(),
            self.class.as_str()
        )?;
        match self.port {
            Some(p) => write!(f, "{p}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EventLineError {
    #[error("expected 5 fields, found {0}")]
    FieldCount(usize),
    #[error("bad time: {0}")]
    BadTime(String),
    #[error("bad packet id: {0}")]
    BadId(String),
    #[error("unknown event kind: {0}")]
    BadKind(String),
    #[error("unknown class: {0}")]
    BadClass(String),
    #[error("bad port: {0}")]
    BadPort(String),
}

pub fn parse_event_line(line: &str) -> Result<EventRecord, EventLineError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(EventLineError::FieldCount(fields.len()));
    }
    let at = fields[0]
        .parse::<u64>()
        .map(SimTime)
        .map_err(|_| EventLineError::BadTime(fields[0].to_string()))?;
    let packet_id = fields[1]
        .parse::<u64>()
        .map_err(|_| EventLineError::BadId(fields[1].to_string()))?;
    let kind =
        EventKind::parse(fields[2]).ok_or_else(|| EventLineError::BadKind(fields[2].to_string()))?;
    let class = ClassBucket::parse(fields[3])
        .ok_or_else(|| EventLineError::BadClass(fields[3].to_string()))?;
    let port = if fields[4] == "-" {
        None
    } else {
        Some(
            fields[4]
                .parse::<u8>()
                .map_err(|_| EventLineError::BadPort(fields[4].to_string()))?,
        )
    };
    Ok(EventRecord {
        at,
        packet_id,
        kind,
        class,
        port,
    })
}

/// In-memory event log; writing is flag-gated by the caller because full
/// logs of large runs are big while counters stay cheap.
#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> EventLog {
        EventLog::default()
    }

    pub fn push(&mut self, record: EventRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("duplicate terminal event for packet {id}")]
    DuplicateTerminal { id: u64 },
    #[error(
        "conservation violated at {at}: generated {generated} != transmitted {transmitted} + dropped {dropped} + resident {resident}"
    )]
    Conservation {
        at: SimTime,
        generated: u64,
        transmitted: u64,
        dropped: u64,
        resident: u64,
    },
}

fn fate_token(fate: Fate) -> &'static str {
    match fate {
        Fate::InFlight => "in_flight",
        Fate::Transmitted => "transmitted",
        Fate::DroppedQueueFull => "drop_queue_full",
        Fate::DroppedDeferredFull => "drop_deferred_full",
        Fate::DroppedTtl => "drop_ttl",
        Fate::DroppedRed => "drop_red",
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
struct Counter {
    packets: u64,
    bytes: u64,
}

/// Per-port activity for Figure-3-style snapshot rows.
#[derive(Debug, Default)]
struct PortActivity {
    received: u64,
    sent: u64,
    recent_received: VecDeque<SimTime>,
    recent_sent: VecDeque<SimTime>,
}

fn note(times: &mut VecDeque<SimTime>, at: SimTime) {
    times.push_back(at);
    let horizon = at.saturating_sub(SimTime(RATE_WINDOW_NS));
    while times.front().is_some_and(|&t| t <= horizon) {
        times.pop_front();
    }
}

fn rate_pps(times: &VecDeque<SimTime>, now: SimTime) -> f64 {
    let horizon = now.saturating_sub(SimTime(RATE_WINDOW_NS));
    let n = times
        .iter()
        .rev()
        .take_while(|&&t| t > horizon)
        .filter(|&&t| t <= now)
        .count();
    n as f64 * (1e9 / RATE_WINDOW_NS as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayStats {
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
    pub samples: u64,
}

/// Nearest-rank percentile over ascending `sorted`: the ceil(p/100 * n)-th
/// smallest sample.
pub fn nearest_rank(sorted: &[u64], percentile: f64) -> u64 {
    assert!(!sorted.is_empty());
    assert!(percentile > 0.0 && percentile <= 100.0);
    let n = sorted.len();
    let rank = (percentile / 100.0 * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StatusRow {
    pub device: String,
    pub buffer_fullness_elems: u32,
    pub deferred_count: u32,
    pub packets_received: u64,
    pub receive_rate_pps: f64,
    pub packets_sent: u64,
    pub transmit_rate_pps: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StatusSnapshot {
    pub at_ns: u64,
    pub rows: Vec<StatusRow>,
    pub generated: u64,
    pub transmitted: u64,
    pub transmitted_bytes: u64,
    pub dropped: u64,
    pub resident: u64,
}

/// The packet-count view a log replay can rebuild (sizes are not logged, so
/// byte counters are excluded).
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ReplayCounters {
    pub generated: u64,
    pub counts: BTreeMap<(ClassBucket, Option<u8>, Fate), u64>,
    pub delays: BTreeMap<ClassBucket, Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("record {index}: transmit for packet {id} without prior admission")]
    TransmitWithoutAdmission { index: usize, id: u64 },
    #[error("record {index}: second admission for packet {id}")]
    DuplicateAdmission { index: usize, id: u64 },
    #[error("record {index}: second terminal event for packet {id}")]
    DuplicateTerminal { index: usize, id: u64 },
}

/// Rebuilds packet counters and delay samples from an event log. Admission
/// is the first of enqueue/defer/redirect; promotion does not reset it.
pub fn replay(records: &[EventRecord]) -> Result<ReplayCounters, ReplayError> {
    let mut out = ReplayCounters::default();
    let mut admitted: BTreeMap<u64, SimTime> = BTreeMap::new();
    let mut terminal: HashSet<u64> = HashSet::new();
    for (index, r) in records.iter().enumerate() {
        match r.kind {
            EventKind::Arrive => out.generated += 1,
            EventKind::Enqueue | EventKind::Defer | EventKind::Redirect => {
                if admitted.insert(r.packet_id, r.at).is_some() {
                    return Err(ReplayError::DuplicateAdmission {
                        index,
                        id: r.packet_id,
                    });
                }
            }
            EventKind::Promote => {}
            EventKind::Transmit => {
                let t0 = admitted.get(&r.packet_id).copied().ok_or(
                    ReplayError::TransmitWithoutAdmission {
                        index,
                        id: r.packet_id,
                    },
                )?;
                if !terminal.insert(r.packet_id) {
                    return Err(ReplayError::DuplicateTerminal {
                        index,
                        id: r.packet_id,
                    });
                }
                *out
                    .counts
                    .entry((r.class, r.port, Fate::Transmitted))
                    .or_default() += 1;
                out.delays
                    .entry(r.class)
                    .or_default()
                    .push(r.at.saturating_sub(t0).as_nanos());
            }
            kind => {
                let fate = kind.drop_fate().expect("remaining kinds are drops");
                if !terminal.insert(r.packet_id) {
                    return Err(ReplayError::DuplicateTerminal {
                        index,
                        id: r.packet_id,
                    });
                }
                *out.counts.entry((r.class, r.port, fate)).or_default() += 1;
            }
        }
    }
    Ok(out)
}

/// Loss rate for one class inside a half-open time window `[from, to)`,
/// computed from event timestamps. Offered = admissions + drops (each
/// classified packet produces exactly one of those at its admission point).
pub fn windowed_loss_rate(
    records: &[EventRecord],
    class: ClassBucket,
    from: SimTime,
    to: SimTime,
) -> Option<f64> {
    let mut offered = 0u64;
    let mut dropped = 0u64;
    for r in records {
        if r.class != class || r.at < from || r.at >= to {
            continue;
        }
        match r.kind {
            EventKind::Enqueue | EventKind::Defer | EventKind::Redirect => offered += 1,
            k if k.drop_fate().is_some() => {
                offered += 1;
                dropped += 1;
            }
            _ => {}
        }
    }
    if offered == 0 {
        None
    } else {
        Some(dropped as f64 / offered as f64)
    }
}

/// Live counters. Single writer (the event loop); readers get consistent
/// copies via the snapshot/summary methods.
#[derive(Debug)]
pub struct Metrics {
    counts: BTreeMap<(ClassBucket, Option<u8>, Fate), Counter>,
    delays: BTreeMap<ClassBucket, Vec<u64>>,
    generated: u64,
    offered: BTreeMap<ClassBucket, u64>,
    ingress_dropped: u64,
    rx_ports: Vec<PortActivity>,
    tx_ports: Vec<PortActivity>,
    terminal_dense: Vec<bool>,
    terminal_sparse: HashSet<u64>,
}

/// Packets injected outside the generator (capsule entries) tag their ids
/// with this bit so the terminal audit can keep generator ids dense.
pub const INJECTED_ID_BIT: u64 = 1 << 63;

impl Metrics {
    pub fn new(ingress_ports: usize, egress_ports: usize) -> Metrics {
        Metrics {
            counts: BTreeMap::new(),
            delays: BTreeMap::new(),
            generated: 0,
            offered: BTreeMap::new(),
            ingress_dropped: 0,
            rx_ports: (0..ingress_ports).map(|_| PortActivity::default()).collect(),
            tx_ports: (0..egress_ports).map(|_| PortActivity::default()).collect(),
            terminal_dense: Vec::new(),
            terminal_sparse: HashSet::new(),
        }
    }

    pub fn record_generated(&mut self) {
        self.generated += 1;
    }

    /// Packet admitted into the receive buffer from an ingress port.
    pub fn record_rx(&mut self, ingress_port: u8, at: SimTime) {
        let slot = &mut self.rx_ports[ingress_port as usize];
        slot.received += 1;
        note(&mut slot.recent_received, at);
    }

    /// Packet left the receive stage toward classification.
    pub fn record_rx_forwarded(&mut self, ingress_port: u8, at: SimTime) {
        let slot = &mut self.rx_ports[ingress_port as usize];
        slot.sent += 1;
        note(&mut slot.recent_sent, at);
    }

    /// Packet admitted into an egress queue (accept, redirect, or defer).
    pub fn record_tx_admitted(&mut self, port: u8, at: SimTime) {
        let slot = &mut self.tx_ports[port as usize];
        slot.received += 1;
        note(&mut slot.recent_received, at);
    }

    fn record_tx_sent(&mut self, port: u8, at: SimTime) {
        let slot = &mut self.tx_ports[port as usize];
        slot.sent += 1;
        note(&mut slot.recent_sent, at);
    }

    /// Classification outcome; the denominator of per-class loss rates.
    pub fn record_offered(&mut self, bucket: ClassBucket) {
        *self.offered.entry(bucket).or_default() += 1;
    }

    pub fn record_ingress_drop(&mut self) {
        self.ingress_dropped += 1;
    }

    /// Records a terminal fate. `delay_ns` must be present exactly for
    /// transmitted packets.
    #[allow(clippy::too_many_arguments)]
    pub fn record_terminal(
        &mut self,
        packet_id: u64,
        bucket: ClassBucket,
        port: Option<u8>,
        fate: Fate,
        bytes: u64,
        at: SimTime,
        delay_ns: Option<u64>,
    ) -> Result<(), AuditError> {
        assert_ne!(fate, Fate::InFlight);
        if self.mark_terminal(packet_id) {
            return Err(AuditError::DuplicateTerminal { id: packet_id });
        }
        let c = self.counts.entry((bucket, port, fate)).or_default();
        c.packets += 1;
        c.bytes += bytes;
        if fate == Fate::Transmitted {
            let delay = delay_ns.expect("transmitted packets carry a delay sample");
            self.delays.entry(bucket).or_default().push(delay);
            let port = port.expect("transmitted packets have an egress port");
            self.record_tx_sent(port, at);
        } else {
            debug_assert!(delay_ns.is_none(), "delay samples only for transmissions");
        }
        Ok(())
    }

    /// True if this id already had a terminal event.
    fn mark_terminal(&mut self, id: u64) -> bool {
        if id & INJECTED_ID_BIT != 0 {
            !self.terminal_sparse.insert(id)
        } else {
            let idx = id as usize;
            if idx >= self.terminal_dense.len() {
                self.terminal_dense.resize(idx + 1, false);
            }
            let seen = self.terminal_dense[idx];
            self.terminal_dense[idx] = true;
            seen
        }
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn ingress_dropped(&self) -> u64 {
        self.ingress_dropped
    }

    pub fn offered(&self, bucket: ClassBucket) -> u64 {
        self.offered.get(&bucket).copied().unwrap_or(0)
    }

    pub fn fate_total(&self, fate: Fate) -> u64 {
        self.counts
            .iter()
            .filter(|((_, _, f), _)| *f == fate)
            .map(|(_, c)| c.packets)
            .sum()
    }

    pub fn transmitted_total(&self) -> u64 {
        self.fate_total(Fate::Transmitted)
    }

    pub fn dropped_total(&self) -> u64 {
        self.counts
            .iter()
            .filter(|((_, _, f), _)| *f != Fate::Transmitted)
            .map(|(_, c)| c.packets)
            .sum()
    }

    pub fn class_fate_packets(&self, bucket: ClassBucket, fate: Fate) -> u64 {
        self.counts
            .iter()
            .filter(|((b, _, f), _)| *b == bucket && *f == fate)
            .map(|(_, c)| c.packets)
            .sum()
    }

    pub fn port_fate_packets(&self, port: u8, fate: Fate) -> u64 {
        self.counts
            .iter()
            .filter(|((_, p, f), _)| *p == Some(port) && *f == fate)
            .map(|(_, c)| c.packets)
            .sum()
    }

    pub fn port_transmitted_bytes(&self, port: u8) -> u64 {
        self.counts
            .iter()
            .filter(|((_, p, f), _)| *p == Some(port) && *f == Fate::Transmitted)
            .map(|(_, c)| c.bytes)
            .sum()
    }

    pub fn transmitted_bytes_total(&self) -> u64 {
        self.counts
            .iter()
            .filter(|((_, _, f), _)| *f == Fate::Transmitted)
            .map(|(_, c)| c.bytes)
            .sum()
    }

    /// Dropped / offered for a class; absent (not zero) when nothing was
    /// offered in that class.
    pub fn loss_rate(&self, bucket: ClassBucket) -> Option<f64> {
        let offered = self.offered(bucket);
        if offered == 0 {
            return None;
        }
        let dropped: u64 = self
            .counts
            .iter()
            .filter(|((b, _, f), _)| *b == bucket && *f != Fate::Transmitted)
            .map(|(_, c)| c.packets)
            .sum();
        Some(dropped as f64 / offered as f64)
    }

    pub fn delay_stats(&self, bucket: ClassBucket) -> Option<DelayStats> {
        let samples = self.delays.get(&bucket)?;
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.clone();
        sorted.sort_unstable();
        let sum: u128 = sorted.iter().map(|&d| u128::from(d)).sum();
        Some(DelayStats {
            mean_ns: sum as f64 / sorted.len() as f64,
            p50_ns: nearest_rank(&sorted, 50.0),
            p99_ns: nearest_rank(&sorted, 99.0),
            max_ns: *sorted.last().unwrap(),
            samples: sorted.len() as u64,
        })
    }

    pub fn delay_samples(&self, bucket: ClassBucket) -> &[u64] {
        self.delays.get(&bucket).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Figure-3-style table: one row per device/port. Buffer fullness comes
    /// from the caller since queue state lives in the pipeline.
    pub fn status_snapshot(
        &self,
        now: SimTime,
        rx_fullness: &[u32],
        tx_fullness: &[u32],
        tx_deferred: &[u32],
        resident: u64,
    ) -> StatusSnapshot {
        let mut rows = Vec::new();
        for (i, slot) in self.rx_ports.iter().enumerate() {
            rows.push(StatusRow {
                device: format!("rx{i}"),
                buffer_fullness_elems: rx_fullness.get(i).copied().unwrap_or(0),
                deferred_count: 0,
                packets_received: slot.received,
                receive_rate_pps: rate_pps(&slot.recent_received, now),
                packets_sent: slot.sent,
                transmit_rate_pps: rate_pps(&slot.recent_sent, now),
            });
        }
        for (i, slot) in self.tx_ports.iter().enumerate() {
            rows.push(StatusRow {
                device: format!("tx{i}"),
                buffer_fullness_elems: tx_fullness.get(i).copied().unwrap_or(0),
                deferred_count: tx_deferred.get(i).copied().unwrap_or(0),
                packets_received: slot.received,
                receive_rate_pps: rate_pps(&slot.recent_received, now),
                packets_sent: slot.sent,
                transmit_rate_pps: rate_pps(&slot.recent_sent, now),
            });
        }
        StatusSnapshot {
            at_ns: now.as_nanos(),
            rows,
            generated: self.generated,
            transmitted: self.transmitted_total(),
            transmitted_bytes: self.transmitted_bytes_total(),
            dropped: self.dropped_total(),
            resident,
        }
    }

    /// Conservation audit: every generated packet is transmitted, dropped,
    /// or still resident. Exact, checked at each snapshot instant.
    pub fn census_check(&self, at: SimTime, resident: u64) -> Result<(), AuditError> {
        let transmitted = self.transmitted_total();
        let dropped = self.dropped_total();
        if self.generated != transmitted + dropped + resident {
            return Err(AuditError::Conservation {
                at,
                generated: self.generated,
                transmitted,
                dropped,
                resident,
            });
        }
        Ok(())
    }

    /// CSV export: one row per (class, port, fate) counter.
    pub fn counters_csv(&self) -> String {
        let mut out = String::from("class,port,fate,packets,bytes\n");
        for ((bucket, port, fate), c) in &self.counts {
            let port = port.map_or_else(|| "-".to_string(), |p| p.to_string());
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                bucket.as_str(),
                port,
                fate_token(*fate),
                c.packets,
                c.bytes
            ));
        }
        out
    }

    /// The live counters in replay-comparable shape (packet counts and
    /// delay samples; no bytes, which the log does not carry).
    pub fn replay_view(&self) -> ReplayCounters {
        ReplayCounters {
            generated: self.generated,
            counts: self
                .counts
                .iter()
                .map(|(&k, c)| (k, c.packets))
                .collect(),
            delays: self.delays.clone(),
        }
    }

    pub fn class_summary(&self, bucket: ClassBucket) -> ClassSummary {
        ClassSummary {
            class: bucket.as_str().to_string(),
            offered: self.offered(bucket),
            transmitted: self.class_fate_packets(bucket, Fate::Transmitted),
            dropped_queue_full: self.class_fate_packets(bucket, Fate::DroppedQueueFull),
            dropped_deferred_full: self.class_fate_packets(bucket, Fate::DroppedDeferredFull),
            dropped_ttl: self.class_fate_packets(bucket, Fate::DroppedTtl),
            dropped_red: self.class_fate_packets(bucket, Fate::DroppedRed),
            loss_rate: self.loss_rate(bucket),
            delay: self.delay_stats(bucket),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassSummary {
    pub class: String,
    pub offered: u64,
    pub transmitted: u64,
    pub dropped_queue_full: u64,
    pub dropped_deferred_full: u64,
    pub dropped_ttl: u64,
    pub dropped_red: u64,
    pub loss_rate: Option<f64>,
    pub delay: Option<DelayStats>,
}
