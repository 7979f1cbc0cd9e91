//! Open-loop traffic generation: a constant-aggregate-rate stream mixed over
//! many flows, each flow carrying one packet kind for its whole lifetime and
//! starting at a random instant inside the configured start window.

use crate::packet::{fnv1a_64, FlowKey, Packet, Protocol};
use crate::rng::{stream, Rng};
use crate::time::{serialization_ns, SimTime};

/// Kind of traffic a flow carries. The kind fixes the protocol tag and the
/// TTL population; a flow never changes kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    RtpUdp,
    UdpLargeTtl,
    UdpSmallTtl,
    Tcp,
}

impl PacketKind {
    pub const ALL: [PacketKind; 4] = [
        PacketKind::RtpUdp,
        PacketKind::UdpLargeTtl,
        PacketKind::UdpSmallTtl,
        PacketKind::Tcp,
    ];

    pub fn protocol(self) -> Protocol {
        match self {
            PacketKind::RtpUdp => Protocol::RtpUdp,
            PacketKind::UdpLargeTtl | PacketKind::UdpSmallTtl => Protocol::Udp,
            PacketKind::Tcp => Protocol::Tcp,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PacketKind::RtpUdp => "rtp",
            PacketKind::UdpLargeTtl => "udp_large",
            PacketKind::UdpSmallTtl => "udp_small",
            PacketKind::Tcp => "tcp",
        }
    }

    pub fn parse(s: &str) -> Option<PacketKind> {
        match s {
            "rtp" => Some(PacketKind::RtpUdp),
            "udp_large" => Some(PacketKind::UdpLargeTtl),
            "udp_small" => Some(PacketKind::UdpSmallTtl),
            "tcp" => Some(PacketKind::Tcp),
            _ => None,
        }
    }
}

/// TTL populations per kind. Small-TTL packets expire at this node after the
/// hop decrement when they arrive with ttl 1.
pub const FIXED_TTL: u8 = 64;
pub const LARGE_TTL_MIN: u8 = 64;
pub const LARGE_TTL_MAX: u8 = 255;
pub const SMALL_TTL_MIN: u8 = 1;
pub const SMALL_TTL_MAX: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeModel {
    Fixed(u32),
    UniformRange(u32, u32),
}

impl SizeModel {
    fn floor(self) -> u32 {
        match self {
            SizeModel::Fixed(s) => s,
            SizeModel::UniformRange(lo, _) => lo,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficConfig {
    pub aggregate_rate_bps: u64,
    pub inter_packet_gap_ns: u64,
    pub flow_count: u32,
    pub start_window_ns: u64,
    pub mix: Vec<(PacketKind, u32)>,
    pub size_model: SizeModel,
    pub duration_ns: u64,
    pub seed: u64,
}

impl Default for TrafficConfig {
    fn default() -> TrafficConfig {
        TrafficConfig {
            aggregate_rate_bps: 1_000_000_000,
            inter_packet_gap_ns: 96,
            flow_count: 64,
            start_window_ns: 40_000_000,
            mix: PacketKind::ALL.iter().map(|&k| (k, 1)).collect(),
            size_model: SizeModel::Fixed(64),
            duration_ns: 60_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("traffic config field `{field}` invalid: {constraint}")]
pub struct TrafficConfigError {
    pub field: &'static str,
    pub constraint: String,
}

fn bad(field: &'static str, constraint: impl Into<String>) -> TrafficConfigError {
    TrafficConfigError {
        field,
        constraint: constraint.into(),
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficConfigError> {
        if self.aggregate_rate_bps == 0 {
            return Err(bad("aggregate_rate_bps", "must be > 0"));
        }
        if self.inter_packet_gap_ns == 0 {
            return Err(bad("inter_packet_gap_ns", "must be > 0 so arrival times strictly increase"));
        }
        if self.flow_count == 0 {
            return Err(bad("flow_count", "must be >= 1"));
        }
        if self.start_window_ns > self.duration_ns {
            return Err(bad("start_window_ns", "must be <= duration_ns"));
        }
        if self.duration_ns == 0 {
            return Err(bad("duration_ns", "must be > 0"));
        }
        if self.mix.is_empty() {
            return Err(bad("mix", "must list at least one packet kind"));
        }
        for &(kind, weight) in &self.mix {
            if weight == 0 {
                return Err(bad("mix", format!("weight for {} must be > 0", kind.as_str())));
            }
        }
        for i in 1..self.mix.len() {
            if self.mix[..i].iter().any(|&(k, _)| k == self.mix[i].0) {
                return Err(bad("mix", format!("kind {} listed twice", self.mix[i].0.as_str())));
            }
        }
        match self.size_model {
            SizeModel::Fixed(s) if s < 20 => {
                return Err(bad("size", "fixed size must be >= 20 bytes"));
            }
            SizeModel::UniformRange(lo, hi) if lo < 20 || lo > hi => {
                return Err(bad("size", "uniform range needs 20 <= lo <= hi"));
            }
            _ => {}
        }
        Ok(())
    }
}

/// One generated arrival: the packet plus where and when it enters.
#[derive(Debug, Clone)]
pub struct ArrivalEvent {
    pub at: SimTime,
    pub packet: Packet,
    pub ingress_port: u8,
}

#[derive(Debug, Clone)]
struct FlowState {
    key: FlowKey,
    kind: PacketKind,
    start_ns: u64,
}

/// Running FNV-1a fold over every emitted arrival; identifies an arrival
/// stream exactly (same seed and config give the same hash, different seeds
/// give different hashes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHash(pub u64);

impl StreamHash {
    pub fn new() -> StreamHash {
        StreamHash(0xCBF2_9CE4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.0 = h;
    }
}

impl Default for StreamHash {
    fn default() -> StreamHash {
        StreamHash::new()
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    cfg: TrafficConfig,
    rng: Rng,
    /// Flow indices ordered by start time; `started` counts how many are
    /// active at the current tick.
    flows: Vec<FlowState>,
    by_start: Vec<u32>,
    started: usize,
    next_tick_ns: u64,
    next_id: u64,
    emitted: u64,
    hash: StreamHash,
}

/// Assigns one kind per flow in mix-weight proportion using smooth weighted
/// round-robin, so every prefix of the flow list is as close to the target
/// proportions as integer counts allow.
fn assign_kinds(mix: &[(PacketKind, u32)], flow_count: u32) -> Vec<PacketKind> {
    let total: i64 = mix.iter().map(|&(_, w)| w as i64).sum();
    let mut current = vec![0i64; mix.len()];
    let mut out = Vec::with_capacity(flow_count as usize);
    for _ in 0..flow_count {
        for (c, &(_, w)) in current.iter_mut().zip(mix) {
            *c += w as i64;
        }
        let best = (0..mix.len())
            .max_by_key(|&i| (current[i], std::cmp::Reverse(i)))
            .unwrap();
        current[best] -= total;
        out.push(mix[best].0);
    }
    out
}

fn flow_key_for(index: u32, kind: PacketKind) -> FlowKey {
    FlowKey {
        src_addr: 0x0A00_0000 | (index + 1),
        dst_addr: 0x0A80_0000 | (index + 1),
        src_port: 1024u16.wrapping_add(index as u16),
        dst_port: 2048u16.wrapping_add(index as u16),
        protocol: kind.protocol(),
    }
}

pub fn ingress_port_for(key: FlowKey) -> u8 {
    (fnv1a_64(&key.to_bytes()) & 1) as u8
}

impl Generator {
    pub fn build(cfg: TrafficConfig) -> Result<Generator, TrafficConfigError> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed, stream::TRAFFIC);
        let kinds = assign_kinds(&cfg.mix, cfg.flow_count);
        let flows: Vec<FlowState> = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| FlowState {
                key: flow_key_for(i as u32, kind),
                kind,
                start_ns: if cfg.start_window_ns == 0 {
                    0
                } else {
                    rng.next_below(cfg.start_window_ns)
                },
            })
            .collect();
        let mut by_start: Vec<u32> = (0..cfg.flow_count).collect();
        by_start.sort_by_key(|&i| (flows[i as usize].start_ns, i));
        Ok(Generator {
            cfg,
            rng,
            flows,
            by_start,
            started: 0,
            next_tick_ns: 0,
            next_id: 0,
            emitted: 0,
            hash: StreamHash::new(),
        })
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.cfg
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn stream_hash(&self) -> u64 {
        self.hash.0
    }

    fn advance_tick(&mut self, size_bytes: u32) {
        self.next_tick_ns += serialization_ns(size_bytes, self.cfg.aggregate_rate_bps)
            + self.cfg.inter_packet_gap_ns;
    }

    /// Emits the next arrival, or None once the duration is exhausted.
    /// Consecutive arrivals are spaced by the emitted packet's serialization
    /// time at the aggregate rate plus the inter-packet gap.
    pub fn next_arrival(&mut self) -> Option<ArrivalEvent> {
        loop {
            let now = self.next_tick_ns;
            if now >= self.cfg.duration_ns {
                return None;
            }
            while self.started < self.by_start.len()
                && self.flows[self.by_start[self.started] as usize].start_ns <= now
            {
                self.started += 1;
            }
            if self.started == 0 {
                // No flow has started yet; the slot carries no packet.
                self.advance_tick(self.cfg.size_model.floor());
                continue;
            }

            let pick = self.rng.next_below(self.started as u64) as usize;
            let flow = &self.flows[self.by_start[pick] as usize];
            let size = match self.cfg.size_model {
                SizeModel::Fixed(s) => s,
                SizeModel::UniformRange(lo, hi) => {
                    self.rng.next_in(lo as u64, hi as u64) as u32
                }
            };
            let ttl = match flow.kind {
                PacketKind::RtpUdp | PacketKind::Tcp => FIXED_TTL,
                PacketKind::UdpLargeTtl => {
                    self.rng.next_in(LARGE_TTL_MIN as u64, LARGE_TTL_MAX as u64) as u8
                }
                PacketKind::UdpSmallTtl => {
                    self.rng.next_in(SMALL_TTL_MIN as u64, SMALL_TTL_MAX as u64) as u8
                }
            };
            let key = flow.key;
            let id = self.next_id;
            self.next_id += 1;
            self.emitted += 1;
            let packet = Packet::new(id, key, size, ttl, SimTime::from_nanos(now));
            let ingress_port = ingress_port_for(key);

            let mut record = Vec::with_capacity(40);
            record.extend_from_slice(&id.to_be_bytes());
            record.extend_from_slice(&now.to_be_bytes());
            record.extend_from_slice(&key.to_bytes());
            record.extend_from_slice(&size.to_be_bytes());
            record.push(ttl);
            record.push(ingress_port);
            self.hash.update(&record);

            self.advance_tick(size);
            return Some(ArrivalEvent {
                at: SimTime::from_nanos(now),
                packet,
                ingress_port,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn collect(cfg: TrafficConfig) -> Vec<ArrivalEvent> {
        let mut gen = Generator::build(cfg).unwrap();
        let mut out = Vec::new();
        while let Some(ev) = gen.next_arrival() {
            out.push(ev);
        }
        out
    }

    #[test]
    fn same_seed_gives_identical_streams() {
        let cfg = TrafficConfig {
            duration_ns: 2_000_000,
            flow_count: 8,
            start_window_ns: 1_000_000,
            seed: 11,
            ..TrafficConfig::default()
        };
        let a = collect(cfg.clone());
        let b = collect(cfg);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.at, y.at);
            assert_eq!(x.packet.id, y.packet.id);
            assert_eq!(x.packet.flow, y.packet.flow);
            assert_eq!(x.packet.size_bytes, y.packet.size_bytes);
            assert_eq!(x.packet.ttl, y.packet.ttl);
            assert_eq!(x.ingress_port, y.ingress_port);
        }
    }

    #[test]
    fn different_seeds_give_different_hashes() {
        let mut g1 = Generator::build(TrafficConfig {
            duration_ns: 1_000_000,
            start_window_ns: 500_000,
            seed: 1,
            ..TrafficConfig::default()
        })
        .unwrap();
        let mut g2 = Generator::build(TrafficConfig {
            duration_ns: 1_000_000,
            start_window_ns: 500_000,
            seed: 2,
            ..TrafficConfig::default()
        })
        .unwrap();
        while g1.next_arrival().is_some() {}
        while g2.next_arrival().is_some() {}
        assert_ne!(g1.stream_hash(), g2.stream_hash());
    }

    #[test]
    fn inter_arrival_spacing_is_exact() {
        // 64-byte packets at 1000 Mb/s: 512 + 96 = 608 ns apart.
        let cfg = TrafficConfig {
            duration_ns: 1_000_000,
            start_window_ns: 0,
            seed: 3,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        assert!(events.len() > 1000);
        assert_eq!(events[0].at, SimTime::ZERO);
        for w in events.windows(2) {
            assert_eq!(w[1].at.as_nanos() - w[0].at.as_nanos(), 608);
        }

        // 1500-byte packets: 12,000 + 96 = 12,096 ns apart.
        let cfg = TrafficConfig {
            duration_ns: 1_000_000,
            start_window_ns: 0,
            size_model: SizeModel::Fixed(1500),
            seed: 3,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        for w in events.windows(2) {
            assert_eq!(w[1].at.as_nanos() - w[0].at.as_nanos(), 12_096);
        }
    }

    #[test]
    fn arrival_times_strictly_increase() {
        let cfg = TrafficConfig {
            duration_ns: 3_000_000,
            size_model: SizeModel::UniformRange(64, 1500),
            seed: 5,
            flow_count: 16,
            start_window_ns: 1_000_000,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        for w in events.windows(2) {
            assert!(w[1].at > w[0].at);
        }
    }

    #[test]
    fn first_packet_of_every_flow_inside_start_window() {
        let cfg = TrafficConfig {
            flow_count: 8,
            start_window_ns: 40_000_000,
            duration_ns: 60_000_000,
            seed: 1,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        let mut first: HashMap<FlowKey, SimTime> = HashMap::new();
        for ev in &events {
            first.entry(ev.packet.flow).or_insert(ev.at);
        }
        assert_eq!(first.len(), 8, "all flows must appear");
        for (flow, at) in first {
            assert!(
                at.as_nanos() < 40_000_000,
                "flow {flow} first packet at {at} outside the 40 ms window"
            );
        }
    }

    #[test]
    fn equal_weight_mix_is_uniform_within_bound() {
        // Once every flow is active the round-robin flow pick keeps the four
        // kinds at 25% +/- 1.5% over 100,000 packets; arrivals inside the
        // start window are skipped because flow-start jitter biases them.
        let cfg = TrafficConfig {
            duration_ns: 64_000_000,
            start_window_ns: 1_000_000,
            seed: 1,
            ..TrafficConfig::default()
        };
        let window = cfg.start_window_ns;
        let mut gen = Generator::build(cfg).unwrap();
        let mut counts: HashMap<Protocol, u64> = HashMap::new();
        let mut kind_counts: HashMap<&'static str, u64> = HashMap::new();
        let mut total = 0u64;
        while let Some(ev) = gen.next_arrival() {
            if ev.at.as_nanos() < window {
                continue;
            }
            if total == 100_000 {
                break;
            }
            total += 1;
            *counts.entry(ev.packet.flow.protocol).or_default() += 1;
            let kind = match (ev.packet.flow.protocol, ev.packet.ttl) {
                (Protocol::RtpUdp, _) => "rtp",
                (Protocol::Tcp, _) => "tcp",
                (Protocol::Udp, t) if t <= SMALL_TTL_MAX => "udp_small",
                (Protocol::Udp, _) => "udp_large",
            };
            *kind_counts.entry(kind).or_default() += 1;
        }
        assert_eq!(total, 100_000);
        for kind in ["rtp", "tcp", "udp_small", "udp_large"] {
            let share = kind_counts[kind] as f64 / total as f64;
            assert!(
                (share - 0.25).abs() <= 0.015,
                "kind {kind} share {share} outside 25% +/- 1.5%"
            );
        }
        assert_eq!(counts[&Protocol::Udp], kind_counts["udp_small"] + kind_counts["udp_large"]);
    }

    #[test]
    fn offered_rate_matches_configured_rate_minus_gap_overhead() {
        // Fixed 64-byte packets: the wire shares 512 of every 608 ns, so the
        // measured packet bit-rate must be rate * 512/608 within 2%.
        let cfg = TrafficConfig {
            duration_ns: 52_000_000,
            seed: 7,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        let (lo, hi) = (40_000_000u64, 50_000_000u64);
        let bits: u64 = events
            .iter()
            .filter(|e| e.at.as_nanos() >= lo && e.at.as_nanos() < hi)
            .map(|e| e.packet.size_bytes as u64 * 8)
            .sum();
        let rate = bits as f64 / ((hi - lo) as f64 / 1e9);
        let expected = 1e9 * 512.0 / 608.0;
        assert!(
            (rate - expected).abs() / expected < 0.02,
            "measured {rate} expected {expected}"
        );
    }

    #[test]
    fn flow_kind_is_stable_and_ttls_are_in_population() {
        let cfg = TrafficConfig {
            duration_ns: 5_000_000,
            flow_count: 12,
            start_window_ns: 1_000_000,
            seed: 9,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        let mut proto_of: HashMap<FlowKey, Protocol> = HashMap::new();
        let mut small_flows: HashMap<FlowKey, bool> = HashMap::new();
        for ev in &events {
            let seen = proto_of.insert(ev.packet.flow, ev.packet.flow.protocol);
            if let Some(p) = seen {
                assert_eq!(p, ev.packet.flow.protocol, "flow changed protocol");
            }
            match ev.packet.flow.protocol {
                Protocol::RtpUdp | Protocol::Tcp => assert_eq!(ev.packet.ttl, FIXED_TTL),
                Protocol::Udp => {
                    // Each UDP flow is entirely small-TTL or entirely
                    // large-TTL; ranges never overlap.
                    let small = ev.packet.ttl <= SMALL_TTL_MAX;
                    if !small {
                        assert!(ev.packet.ttl >= LARGE_TTL_MIN);
                    }
                    if let Some(prev) = small_flows.insert(ev.packet.flow, small) {
                        assert_eq!(prev, small, "flow changed TTL population");
                    }
                }
            }
        }
    }

    #[test]
    fn both_ingress_ports_carry_load() {
        let cfg = TrafficConfig {
            duration_ns: 2_000_000,
            start_window_ns: 1_000_000,
            seed: 13,
            ..TrafficConfig::default()
        };
        let events = collect(cfg);
        let p0 = events.iter().filter(|e| e.ingress_port == 0).count();
        let p1 = events.iter().filter(|e| e.ingress_port == 1).count();
        assert!(p0 > 0 && p1 > 0, "p0={p0} p1={p1}");
    }

    #[test]
    fn weighted_mix_respects_weights() {
        let cfg = TrafficConfig {
            duration_ns: 31_000_000,
            start_window_ns: 1_000_000,
            mix: vec![(PacketKind::RtpUdp, 3), (PacketKind::Tcp, 1)],
            seed: 21,
            ..TrafficConfig::default()
        };
        let window = cfg.start_window_ns;
        let events = collect(cfg);
        let post: Vec<_> = events.iter().filter(|e| e.at.as_nanos() >= window).collect();
        let rtp = post
            .iter()
            .filter(|e| e.packet.flow.protocol == Protocol::RtpUdp)
            .count() as f64;
        let share = rtp / post.len() as f64;
        assert!((share - 0.75).abs() < 0.02, "rtp share {share}");
    }

    #[test]
    fn kind_assignment_is_proportional_in_every_prefix() {
        let mix = vec![
            (PacketKind::RtpUdp, 1),
            (PacketKind::UdpLargeTtl, 1),
            (PacketKind::UdpSmallTtl, 1),
            (PacketKind::Tcp, 1),
        ];
        let kinds = assign_kinds(&mix, 64);
        for &k in &PacketKind::ALL {
            assert_eq!(kinds.iter().filter(|&&x| x == k).count(), 16);
        }
        // Every prefix of length n holds each kind at most ceil(n/4) times.
        for n in 1..=64 {
            for &k in &PacketKind::ALL {
                let c = kinds[..n].iter().filter(|&&x| x == k).count();
                assert!(c <= n.div_ceil(4), "prefix {n} kind {k:?} count {c}");
            }
        }
    }

    #[test]
    fn validation_names_the_offending_field() {
        let err = TrafficConfig {
            aggregate_rate_bps: 0,
            ..TrafficConfig::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err.field, "aggregate_rate_bps");

        let err = TrafficConfig {
            start_window_ns: 10,
            duration_ns: 5,
            ..TrafficConfig::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err.field, "start_window_ns");

        let err = TrafficConfig {
            mix: vec![(PacketKind::Tcp, 0)],
            ..TrafficConfig::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err.field, "mix");
    }
}
