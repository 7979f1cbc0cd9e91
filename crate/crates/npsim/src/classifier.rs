//! Flow classification: a fast-path hash table over 5-tuples with periodic
//! staleness eviction, a slow path that picks the least-loaded eligible
//! egress port, hop TTL handling, and the restricted capsule interpreter.

use std::collections::HashMap;

use crate::capsule::CapsulePayload;
use crate::packet::{FlowKey, Packet, Protocol, TrafficClass};
use crate::time::SimTime;
use crate::EGRESS_PORTS;

pub const DEFAULT_TABLE_MAX: usize = 65_536;
pub const DEFAULT_REFRESH_INTERVAL_NS: u64 = 50_000_000;
pub const DEFAULT_NODE_ID: &str = "npsim0";

/// Which egress ports each class may use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingPolicy {
    /// Indexed by [Priv, Ef, Af, Be]; ascending port lists.
    ports: [Vec<u8>; 4],
}

fn class_index(class: TrafficClass) -> usize {
    match class {
        TrafficClass::Priv => 0,
        TrafficClass::Ef => 1,
        TrafficClass::Af => 2,
        TrafficClass::Be => 3,
    }
}

impl Default for RoutingPolicy {
    fn default() -> RoutingPolicy {
        RoutingPolicy {
            ports: [vec![0], vec![0], vec![1, 2], vec![3, 4]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("routing for class {class} invalid: {constraint}")]
pub struct RoutingError {
    pub class: &'static str,
    pub constraint: String,
}

impl RoutingPolicy {
    pub fn new(
        priv_ports: Vec<u8>,
        ef: Vec<u8>,
        af: Vec<u8>,
        be: Vec<u8>,
    ) -> Result<RoutingPolicy, RoutingError> {
        let policy = RoutingPolicy {
            ports: [priv_ports, ef, af, be],
        };
        for (i, name) in ["priv", "ef", "af", "be"].iter().enumerate() {
            let list = &policy.ports[i];
            if list.is_empty() {
                return Err(RoutingError {
                    class: name,
                    constraint: "must map to at least one port".into(),
                });
            }
            if let Some(&p) = list.iter().find(|&&p| p as usize >= EGRESS_PORTS) {
                return Err(RoutingError {
                    class: name,
                    constraint: format!("port {p} out of range 0..{}", EGRESS_PORTS - 1),
                });
            }
        }
        Ok(policy)
    }

    pub fn ports_for(&self, class: TrafficClass) -> &[u8] {
        &self.ports[class_index(class)]
    }

    /// Ports dedicated to the low-priority classes: the candidate set for
    /// high-priority overflow redirection.
    pub fn low_priority_ports(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.ports[class_index(TrafficClass::Af)]
            .iter()
            .chain(&self.ports[class_index(TrafficClass::Be)])
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowTableEntry {
    pub key: FlowKey,
    pub class: TrafficClass,
    pub egress_port: u8,
    pub last_hit: SimTime,
    pub hits: u64,
    /// Insertion sequence; tie-break for stalest-first eviction.
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    DropTtl,
    Classified { class: TrafficClass, port: u8 },
}

/// Everything one classification produced: the routing decision plus any
/// capsule side effect that must be applied outside the classifier (port
/// soft-threshold changes live in the egress queues).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    pub decision: Decision,
    pub threshold_change: Option<(u8, f64)>,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierCounters {
    pub fast_path_hits: u64,
    pub slow_path_misses: u64,
    pub ttl_drops: u64,
    pub ignored_capsules: u64,
    pub applied_capsules: u64,
    pub evicted_stale: u64,
    pub evicted_capacity: u64,
}

#[derive(Debug)]
pub struct Classifier {
    table: HashMap<FlowKey, FlowTableEntry>,
    max_entries: usize,
    refresh_interval: SimTime,
    /// Capsule-installed class overrides, consulted on the slow path.
    overrides: HashMap<FlowKey, TrafficClass>,
    /// Per-port occupancy as of the last scheduler feedback, in elements.
    port_load_view: Vec<u32>,
    routing: RoutingPolicy,
    node_id: String,
    insert_seq: u64,
    pub counters: ClassifierCounters,
}

impl Classifier {
    pub fn new(routing: RoutingPolicy, max_entries: usize, refresh_interval: SimTime) -> Classifier {
        assert!(max_entries >= 1);
        Classifier {
            table: HashMap::new(),
            max_entries,
            refresh_interval,
            overrides: HashMap::new(),
            port_load_view: vec![0; EGRESS_PORTS],
            routing,
            node_id: DEFAULT_NODE_ID.to_string(),
            insert_seq: 0,
            counters: ClassifierCounters::default(),
        }
    }

    pub fn routing(&self) -> &RoutingPolicy {
        &self.routing
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    pub fn entry(&self, key: &FlowKey) -> Option<&FlowTableEntry> {
        self.table.get(key)
    }

    /// Scheduler feedback: refreshes the load view the slow path consults.
    pub fn update_port_load(&mut self, port: u8, occupancy_elems: u32) {
        self.port_load_view[port as usize] = occupancy_elems;
    }

    pub fn port_load_view(&self) -> &[u32] {
        &self.port_load_view
    }

    /// Classifies one packet: hop TTL first, then capsule interpretation,
    /// then (class, port) via fast or slow path.
    pub fn classify(&mut self, pkt: &mut Packet, now: SimTime) -> ClassifyOutcome {
        debug_assert!(pkt.class.is_none(), "packet {} already classified", pkt.id);

        if pkt.ttl <= 1 {
            pkt.ttl = 0;
            self.counters.ttl_drops += 1;
            return ClassifyOutcome {
                decision: Decision::DropTtl,
                threshold_change: None,
            };
        }
        pkt.ttl -= 1;

        let mut threshold_change = None;
        let mut capsule_forces_be = false;
        if let Some(capsule) = pkt.capsule.as_mut() {
            match capsule.payload.clone() {
                CapsulePayload::SetFlowPriority { target, level } => {
                    self.overrides.insert(target, level);
                    // Force the next packet of the target flow through the
                    // slow path so the override takes effect immediately.
                    self.table.remove(&target);
                    self.counters.applied_capsules += 1;
                    capsule_forces_be = true;
                }
                CapsulePayload::SetPortThreshold { port, fraction } => {
                    threshold_change = Some((port, fraction));
                    self.counters.applied_capsules += 1;
                    capsule_forces_be = true;
                }
                CapsulePayload::Trace => {
                    capsule.trace_log.push(self.node_id.clone());
                    self.counters.applied_capsules += 1;
                    capsule_forces_be = true;
                }
                CapsulePayload::Opaque(_) => {
                    // Unknown program part: ignore it, forward the packet as
                    // plain data.
                    self.counters.ignored_capsules += 1;
                }
            }
        }

        let decision = if capsule_forces_be {
            let port = self.pick_port(TrafficClass::Be);
            self.install(pkt.flow, TrafficClass::Be, port, now);
            Decision::Classified {
                class: TrafficClass::Be,
                port,
            }
        } else if let Some(entry) = self.table.get_mut(&pkt.flow) {
            entry.last_hit = now;
            entry.hits += 1;
            self.counters.fast_path_hits += 1;
            Decision::Classified {
                class: entry.class,
                port: entry.egress_port,
            }
        } else {
            let class = self.resolve_class(pkt.flow);
            let port = self.pick_port(class);
            self.install(pkt.flow, class, port, now);
            self.counters.slow_path_misses += 1;
            Decision::Classified { class, port }
        };

        ClassifyOutcome {
            decision,
            threshold_change,
        }
    }

    fn resolve_class(&self, key: FlowKey) -> TrafficClass {
        if let Some(&level) = self.overrides.get(&key) {
            return level;
        }
        match key.protocol {
            Protocol::RtpUdp => TrafficClass::Ef,
            Protocol::Udp => TrafficClass::Af,
            Protocol::Tcp => TrafficClass::Be,
        }
    }

    /// Least-loaded eligible port per the feedback view; ties go to the
    /// lowest port number.
    fn pick_port(&self, class: TrafficClass) -> u8 {
        self.routing
            .ports_for(class)
            .iter()
            .copied()
            .min_by_key(|&p| (self.port_load_view[p as usize], p))
            .expect("routing policy guarantees a non-empty port list")
    }

    fn install(&mut self, key: FlowKey, class: TrafficClass, port: u8, now: SimTime) {
        if self.table.len() >= self.max_entries && !self.table.contains_key(&key) {
            // Evict the stalest entry: oldest last_hit, then oldest insert.
            if let Some(stalest) = self
                .table
                .values()
                .min_by_key(|e| (e.last_hit, e.seq))
                .map(|e| e.key)
            {
                self.table.remove(&stalest);
                self.counters.evicted_capacity += 1;
            }
        }
        let seq = self.insert_seq;
        self.insert_seq += 1;
        self.table.insert(
            key,
            FlowTableEntry {
                key,
                class,
                egress_port: port,
                last_hit: now,
                hits: 1,
                seq,
            },
        );
    }

    /// Periodic table maintenance: evicts entries idle for more than one
    /// full refresh interval. Returns the eviction count.
    pub fn refresh_table(&mut self, now: SimTime) -> usize {
        let horizon = self.refresh_interval;
        let before = self.table.len();
        self.table
            .retain(|_, e| now.saturating_sub(e.last_hit) <= horizon);
        let evicted = before - self.table.len();
        self.counters.evicted_stale += evicted as u64;
        evicted
    }

    pub fn refresh_interval(&self) -> SimTime {
        self.refresh_interval
    }
}
