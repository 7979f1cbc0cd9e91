//! Enqueue-time queue management: drop-tail, RED, and the priority-overflow
//! policy ("anaqm") that fills the high-priority port to its physical limit,
//! overflows into low-priority ports, and parks excess low-priority traffic
//! in a local-memory deferred queue instead of tail-dropping.

use std::collections::VecDeque;

use crate::packet::{Packet, TrafficClass};
use crate::rng::Rng;
use crate::time::{serialization_ns, SimTime};

pub const DEFAULT_CAPACITY_ELEMS: u32 = 128;
pub const DEFAULT_SOFT_FRACTION: f64 = 0.85;
pub const DEFAULT_DEFERRED_CAPACITY: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DropReason {
    QueueFull,
    DeferredFull,
    Red,
}

/// Applied outcome of one enqueue attempt. Exactly one variant per attempt;
/// drops hand the packet back to the caller for fate accounting.
#[derive(Debug)]
pub enum EnqueueOutcome {
    Accepted { port: u8 },
    Redirected { from: u8, to: u8 },
    Deferred { port: u8 },
    Dropped { reason: DropReason, packet: Packet },
}

/// Per-port transmit queue: class-separated FIFOs counted in 64-byte TBUF
/// elements, plus the local-memory deferred queue used by anaqm.
#[derive(Debug)]
pub struct EgressQueue {
    pub port: u8,
    capacity_elems: u32,
    occupancy_elems: u32,
    soft_threshold_elems: u32,
    /// One FIFO per class, indexed Priv..Be; strict-priority selection scans
    /// them in that order.
    fifos: [VecDeque<Packet>; 4],
    deferred: VecDeque<Packet>,
    deferred_capacity: usize,
}

fn class_slot(class: TrafficClass) -> usize {
    match class {
        TrafficClass::Priv => 0,
        TrafficClass::Ef => 1,
        TrafficClass::Af => 2,
        TrafficClass::Be => 3,
    }
}

impl EgressQueue {
    pub fn new(
        port: u8,
        capacity_elems: u32,
        soft_fraction: f64,
        deferred_capacity: usize,
    ) -> EgressQueue {
        assert!(capacity_elems > 0);
        assert!(soft_fraction > 0.0 && soft_fraction <= 1.0);
        EgressQueue {
            port,
            capacity_elems,
            occupancy_elems: 0,
            soft_threshold_elems: (soft_fraction * capacity_elems as f64).floor() as u32,
            fifos: Default::default(),
            deferred: VecDeque::new(),
            deferred_capacity,
        }
    }

    pub fn capacity_elems(&self) -> u32 {
        self.capacity_elems
    }

    pub fn occupancy_elems(&self) -> u32 {
        self.occupancy_elems
    }

    pub fn soft_threshold_elems(&self) -> u32 {
        self.soft_threshold_elems
    }

    pub fn set_soft_threshold_fraction(&mut self, fraction: f64) {
        debug_assert!(fraction > 0.0 && fraction <= 1.0);
        self.soft_threshold_elems = (fraction * self.capacity_elems as f64).floor() as u32;
    }

    pub fn deferred_len(&self) -> usize {
        self.deferred.len()
    }

    pub fn deferred_capacity(&self) -> usize {
        self.deferred_capacity
    }

    /// A low-priority port admits directly only while it is under the soft
    /// threshold with nothing still parked in local memory.
    pub fn admitting(&self) -> bool {
        self.occupancy_elems < self.soft_threshold_elems && self.deferred.is_empty()
    }

    pub fn fits(&self, elems: u32) -> bool {
        self.occupancy_elems + elems <= self.capacity_elems
    }

    fn push(&mut self, mut pkt: Packet, now: SimTime) {
        let elems = pkt.elems();
        debug_assert!(self.fits(elems), "push would breach physical capacity");
        self.occupancy_elems += elems;
        if pkt.t_enqueued.is_none() {
            pkt.t_enqueued = Some(now);
        }
        let class = pkt.class.expect("enqueue of unclassified packet");
        self.fifos[class_slot(class)].push_back(pkt);
    }

    fn defer(&mut self, mut pkt: Packet, now: SimTime) {
        debug_assert!(self.deferred.len() < self.deferred_capacity);
        if pkt.t_enqueued.is_none() {
            pkt.t_enqueued = Some(now);
        }
        self.deferred.push_back(pkt);
    }

    /// Strict-priority selection: highest class first, FIFO within class.
    /// The packet's elements stay counted in occupancy until the transmit
    /// completes.
    pub fn pop_highest(&mut self) -> Option<Packet> {
        self.fifos.iter_mut().find_map(|q| q.pop_front())
    }

    /// Whether any queued packet outranks `class`; used by the
    /// priority-audit trace.
    pub fn has_class_above(&self, class: TrafficClass) -> bool {
        self.fifos[..class_slot(class)].iter().any(|q| !q.is_empty())
    }

    pub fn queued_packets(&self) -> usize {
        self.fifos.iter().map(|q| q.len()).sum()
    }

    pub fn is_fifo_empty(&self) -> bool {
        self.fifos.iter().all(|q| q.is_empty())
    }

    /// Frees a transmitted packet's elements.
    pub fn release(&mut self, elems: u32) {
        debug_assert!(self.occupancy_elems >= elems);
        self.occupancy_elems -= elems;
    }

    #[cfg(test)]
    pub fn push_for_test(&mut self, pkt: Packet) {
        assert!(self.fits(pkt.elems()));
        let at = pkt.t_enqueued.unwrap_or(SimTime::ZERO);
        self.push(pkt, at);
    }

    /// Promotes deferred packets into the FIFO while occupancy is below the
    /// soft threshold and the head packet fits physical capacity. Returns
    /// (id, class) per promotion for event accounting.
    pub fn drain_deferred(&mut self) -> Vec<(u64, TrafficClass)> {
        let mut promoted = Vec::new();
        while self.occupancy_elems < self.soft_threshold_elems {
            let Some(front) = self.deferred.front() else { break };
            if !self.fits(front.elems()) {
                break;
            }
            let pkt = self.deferred.pop_front().unwrap();
            promoted.push((pkt.id, pkt.class.expect("deferred packet has class")));
            let class = pkt.class.unwrap();
            self.occupancy_elems += pkt.elems();
            self.fifos[class_slot(class)].push_back(pkt);
        }
        promoted
    }
}

/// RED parameters in element units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedParams {
    pub w_q: f64,
    pub min_th: u32,
    pub max_th: u32,
    pub max_p: f64,
}

impl RedParams {
    pub fn from_fractions(
        capacity_elems: u32,
        w_q: f64,
        min_frac: f64,
        max_frac: f64,
        max_p: f64,
    ) -> RedParams {
        RedParams {
            w_q,
            min_th: (min_frac * capacity_elems as f64).floor() as u32,
            max_th: (max_frac * capacity_elems as f64).floor() as u32,
            max_p,
        }
    }
}

/// `base^exp` by binary exponentiation: plain IEEE multiplies only, so the
/// idle-decay result is bit-identical on every platform (no libm).
pub fn pow_f64(base: f64, mut exp: u64) -> f64 {
    let mut result = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= b;
        }
        b *= b;
        exp >>= 1;
    }
    result
}

#[derive(Debug, Clone)]
pub struct RedState {
    pub params: RedParams,
    avg: f64,
    count: i64,
    idle_since: Option<SimTime>,
    /// Serialization time of one 64-byte element at the port rate; the time
    /// unit for idle decay.
    typical_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedVerdict {
    Accept,
    Drop,
}

impl RedState {
    pub fn new(params: RedParams, port_rate_bps: u64) -> RedState {
        assert!(params.w_q > 0.0 && params.w_q <= 1.0);
        assert!(params.min_th < params.max_th);
        RedState {
            params,
            avg: 0.0,
            count: -1,
            idle_since: Some(SimTime::ZERO),
            typical_ns: serialization_ns(64, port_rate_bps),
        }
    }

    pub fn avg(&self) -> f64 {
        self.avg
    }

    /// EWMA step at an arrival: geometric decay over the idle period when
    /// the queue is empty, otherwise the usual weighted update.
    pub fn update_avg(&mut self, occupancy_elems: u32, now: SimTime) -> f64 {
        if occupancy_elems == 0 {
            if let Some(t0) = self.idle_since {
                let m = now.saturating_sub(t0).as_nanos() / self.typical_ns;
                self.avg *= pow_f64(1.0 - self.params.w_q, m);
            }
            self.idle_since = Some(now);
        } else {
            self.avg =
                (1.0 - self.params.w_q) * self.avg + self.params.w_q * occupancy_elems as f64;
        }
        self.avg
    }

    /// Marks the instant the queue drained empty; idle decay measures from
    /// here.
    pub fn queue_went_empty(&mut self, now: SimTime) {
        self.idle_since = Some(now);
    }

    pub fn queue_became_busy(&mut self) {
        self.idle_since = None;
    }

    /// The drop decision, assuming `update_avg` just ran.
    pub fn decide(&mut self, rng: &mut Rng) -> RedVerdict {
        let p = self.params;
        if self.avg < p.min_th as f64 {
            self.count = -1;
            RedVerdict::Accept
        } else if self.avg >= p.max_th as f64 {
            self.count = 0;
            RedVerdict::Drop
        } else {
            self.count += 1;
            let p_b = p.max_p * (self.avg - p.min_th as f64) / (p.max_th - p.min_th) as f64;
            let p_a = if self.count as f64 * p_b >= 1.0 {
                1.0
            } else {
                (p_b / (1.0 - self.count as f64 * p_b)).min(1.0)
            };
            if rng.next_f64() < p_a {
                self.count = 0;
                RedVerdict::Drop
            } else {
                RedVerdict::Accept
            }
        }
    }

    #[cfg(test)]
    fn set_avg_for_test(&mut self, avg: f64) {
        self.avg = avg;
    }
}

/// Policy selection plus per-policy state.
#[derive(Debug)]
pub enum Policy {
    DropTail,
    Red(Vec<RedState>),
    Anaqm {
        /// Egress ports dedicated to low-priority classes, ascending; the
        /// candidate set for high-priority overflow redirection.
        low_ports: Vec<u8>,
    },
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::DropTail => "droptail",
            Policy::Red(_) => "red",
            Policy::Anaqm { .. } => "anaqm",
        }
    }
}

/// All egress queues plus the active policy.
#[derive(Debug)]
pub struct QueueBank {
    pub queues: Vec<EgressQueue>,
    pub policy: Policy,
}

impl QueueBank {
    pub fn new(queues: Vec<EgressQueue>, policy: Policy) -> QueueBank {
        QueueBank { queues, policy }
    }

    pub fn ports(&self) -> usize {
        self.queues.len()
    }

    /// One enqueue attempt for a classified packet aimed at `target`.
    pub fn enqueue(
        &mut self,
        pkt: Packet,
        target: u8,
        now: SimTime,
        rng: &mut Rng,
    ) -> EnqueueOutcome {
        debug_assert!((target as usize) < self.queues.len());
        let elems = pkt.elems();
        match &mut self.policy {
            Policy::DropTail => {
                let q = &mut self.queues[target as usize];
                if q.fits(elems) {
                    q.push(pkt, now);
                    EnqueueOutcome::Accepted { port: target }
                } else {
                    EnqueueOutcome::Dropped {
                        reason: DropReason::QueueFull,
                        packet: pkt,
                    }
                }
            }
            Policy::Red(states) => {
                let q = &mut self.queues[target as usize];
                let state = &mut states[target as usize];
                state.update_avg(q.occupancy_elems(), now);
                match state.decide(rng) {
                    RedVerdict::Drop => EnqueueOutcome::Dropped {
                        reason: DropReason::Red,
                        packet: pkt,
                    },
                    RedVerdict::Accept => {
                        if q.fits(elems) {
                            if q.occupancy_elems() == 0 {
                                state.queue_became_busy();
                            }
                            q.push(pkt, now);
                            EnqueueOutcome::Accepted { port: target }
                        } else {
                            EnqueueOutcome::Dropped {
                                reason: DropReason::QueueFull,
                                packet: pkt,
                            }
                        }
                    }
                }
            }
            Policy::Anaqm { low_ports } => {
                let class = pkt.class.expect("anaqm enqueue of unclassified packet");
                if class >= TrafficClass::Ef {
                    // High priority: fill the home port to its physical
                    // limit, then overflow onto the emptiest low-priority
                    // port that still has room.
                    if self.queues[target as usize].fits(elems) {
                        self.queues[target as usize].push(pkt, now);
                        return EnqueueOutcome::Accepted { port: target };
                    }
                    let to = low_ports
                        .iter()
                        .copied()
                        .filter(|&p| p != target && self.queues[p as usize].fits(elems))
                        .min_by_key(|&p| (self.queues[p as usize].occupancy_elems(), p));
                    match to {
                        Some(to) => {
                            self.queues[to as usize].push(pkt, now);
                            EnqueueOutcome::Redirected { from: target, to }
                        }
                        None => EnqueueOutcome::Dropped {
                            reason: DropReason::QueueFull,
                            packet: pkt,
                        },
                    }
                } else {
                    // Low priority: admit under the soft threshold, park in
                    // local memory at or above it, drop only when local
                    // memory is exhausted.
                    let q = &mut self.queues[target as usize];
                    if q.admitting() && q.fits(elems) {
                        q.push(pkt, now);
                        EnqueueOutcome::Accepted { port: target }
                    } else if q.deferred.len() < q.deferred_capacity {
                        q.defer(pkt, now);
                        EnqueueOutcome::Deferred { port: target }
                    } else {
                        EnqueueOutcome::Dropped {
                            reason: DropReason::DeferredFull,
                            packet: pkt,
                        }
                    }
                }
            }
        }
    }

    /// Bookkeeping after a transmit completes on `port`: free the elements,
    /// track RED idle state, and promote deferred work under anaqm.
    pub fn on_transmit_complete(
        &mut self,
        port: u8,
        elems: u32,
        now: SimTime,
    ) -> Vec<(u64, TrafficClass)> {
        let q = &mut self.queues[port as usize];
        q.release(elems);
        if q.occupancy_elems() == 0 {
            if let Policy::Red(states) = &mut self.policy {
                states[port as usize].queue_went_empty(now);
            }
        }
        match self.policy {
            Policy::Anaqm { .. } => self.queues[port as usize].drain_deferred(),
            _ => Vec::new(),
        }
    }

    /// Packets resident anywhere in the bank (FIFOs + deferred), for the
    /// conservation census.
    pub fn resident_packets(&self) -> usize {
        self.queues
            .iter()
            .map(|q| q.queued_packets() + q.deferred_len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{FlowKey, Protocol};

    fn pkt(id: u64, class: TrafficClass, size: u32) -> Packet {
        let mut p = Packet::new(
            id,
            FlowKey {
                src_addr: 1,
                dst_addr: 2,
                src_port: 3,
                dst_port: 4,
                protocol: Protocol::Udp,
            },
            size,
            64,
            SimTime::ZERO,
        );
        p.class = Some(class);
        p
    }

    fn droptail_bank() -> QueueBank {
        let queues = (0..5)
            .map(|p| EgressQueue::new(p, 128, 0.85, 512))
            .collect();
        QueueBank::new(queues, Policy::DropTail)
    }

    fn anaqm_bank() -> QueueBank {
        let queues = (0..5)
            .map(|p| EgressQueue::new(p, 128, 0.85, 512))
            .collect();
        QueueBank::new(
            queues,
            Policy::Anaqm {
                low_ports: vec![1, 2, 3, 4],
            },
        )
    }

    fn rng() -> Rng {
        Rng::new(42, 1)
    }

    fn fill(bank: &mut QueueBank, port: u8, class: TrafficClass, count: u32, rng: &mut Rng) {
        for i in 0..count {
            let out = bank.enqueue(pkt(1_000_000 + i as u64, class, 64), port, SimTime::ZERO, rng);
            assert!(
                matches!(
                    out,
                    EnqueueOutcome::Accepted { .. } | EnqueueOutcome::Redirected { .. }
                ),
                "fill rejected at {i}: {out:?}"
            );
        }
    }

    #[test]
    fn droptail_accepts_until_physically_full() {
        let mut bank = droptail_bank();
        let mut r = rng();
        let out = bank.enqueue(pkt(0, TrafficClass::Be, 64), 3, SimTime::ZERO, &mut r);
        assert!(matches!(out, EnqueueOutcome::Accepted { port: 3 }));
        assert_eq!(bank.queues[3].occupancy_elems(), 1);

        fill(&mut bank, 3, TrafficClass::Be, 127, &mut r);
        assert_eq!(bank.queues[3].occupancy_elems(), 128);
        let out = bank.enqueue(pkt(1, TrafficClass::Be, 64), 3, SimTime::ZERO, &mut r);
        assert!(matches!(
            out,
            EnqueueOutcome::Dropped { reason: DropReason::QueueFull, .. }
        ));
        assert_eq!(bank.queues[3].occupancy_elems(), 128);
    }

    #[test]
    fn droptail_element_arithmetic_rejects_partial_fit() {
        let mut bank = droptail_bank();
        let mut r = rng();
        fill(&mut bank, 2, TrafficClass::Af, 127, &mut r);
        // 127/128 occupied; a 128-byte packet needs 2 elements.
        let out = bank.enqueue(pkt(9, TrafficClass::Af, 128), 2, SimTime::ZERO, &mut r);
        assert!(matches!(
            out,
            EnqueueOutcome::Dropped { reason: DropReason::QueueFull, .. }
        ));
        // A 64-byte packet still fits.
        let out = bank.enqueue(pkt(10, TrafficClass::Af, 64), 2, SimTime::ZERO, &mut r);
        assert!(matches!(out, EnqueueOutcome::Accepted { port: 2 }));
    }

    #[test]
    fn red_avg_single_step_and_fixed_point() {
        let mut s = RedState::new(
            RedParams { w_q: 0.5, min_th: 20, max_th: 80, max_p: 0.1 },
            155_000_000,
        );
        s.queue_became_busy();
        assert_eq!(s.update_avg(10, SimTime(100)), 5.0);
        s.set_avg_for_test(8.0);
        assert_eq!(s.update_avg(8, SimTime(200)), 8.0);
    }

    #[test]
    fn red_idle_decay_matches_closed_form() {
        // avg 8 decaying over exactly 3 typical element times at w_q = 0.5
        // must land on 8 * 0.5^3 = 1.0.
        let mut s = RedState::new(
            RedParams { w_q: 0.5, min_th: 20, max_th: 80, max_p: 0.1 },
            155_000_000,
        );
        let typical = serialization_ns(64, 155_000_000);
        assert_eq!(typical, 3303);
        s.set_avg_for_test(8.0);
        s.queue_went_empty(SimTime(1000));
        let decayed = s.update_avg(0, SimTime(1000 + 3 * typical));
        assert_eq!(decayed, 1.0);
    }

    #[test]
    fn red_decides_by_thresholds() {
        let params = RedParams { w_q: 0.002, min_th: 20, max_th: 80, max_p: 0.1 };
        let mut r = rng();

        let mut s = RedState::new(params, 155_000_000);
        s.set_avg_for_test(10.0);
        assert_eq!(s.decide(&mut r), RedVerdict::Accept);

        let mut s = RedState::new(params, 155_000_000);
        s.set_avg_for_test(90.0);
        assert_eq!(s.decide(&mut r), RedVerdict::Drop);
    }

    #[test]
    fn red_probabilistic_drop_rate_matches_p_b() {
        // avg = 50 inside [20, 80] with max_p = 0.1 gives p_b = 0.05. With
        // count reset each trial, the empirical drop fraction over 1e5
        // Bernoulli trials must sit within 0.05 +/- 0.005.
        let params = RedParams { w_q: 0.002, min_th: 20, max_th: 80, max_p: 0.1 };
        let mut r = rng();
        let mut drops = 0u32;
        let trials = 100_000;
        for _ in 0..trials {
            let mut s = RedState::new(params, 155_000_000);
            s.set_avg_for_test(50.0);
            if s.decide(&mut r) == RedVerdict::Drop {
                drops += 1;
            }
        }
        let frac = drops as f64 / trials as f64;
        assert!((frac - 0.05).abs() <= 0.005, "drop fraction {frac}");
    }

    #[test]
    fn red_count_shortens_inter_drop_gaps() {
        // With the count mechanism active, successive accepts raise p_a, so
        // the mean gap between drops must come in well under the geometric
        // 1/p_b and the maximum gap must be bounded by 1/p_b + 1.
        let params = RedParams { w_q: 0.002, min_th: 20, max_th: 80, max_p: 0.1 };
        let mut r = rng();
        let mut s = RedState::new(params, 155_000_000);
        let mut gaps = Vec::new();
        let mut gap = 0u32;
        for _ in 0..200_000 {
            s.set_avg_for_test(50.0);
            gap += 1;
            if s.decide(&mut r) == RedVerdict::Drop {
                gaps.push(gap);
                gap = 0;
            }
        }
        let mean = gaps.iter().map(|&g| g as f64).sum::<f64>() / gaps.len() as f64;
        assert!(mean < 15.0, "mean gap {mean} (uniformized RED expects ~10.5)");
        assert!(*gaps.iter().max().unwrap() as f64 <= 1.0 / 0.05 + 1.0);
    }

    #[test]
    fn anaqm_high_priority_fills_past_soft_threshold() {
        let mut bank = anaqm_bank();
        let mut r = rng();
        fill(&mut bank, 0, TrafficClass::Ef, 110, &mut r);
        assert!(bank.queues[0].occupancy_elems() > bank.queues[0].soft_threshold_elems());
        let out = bank.enqueue(pkt(7, TrafficClass::Ef, 64), 0, SimTime::ZERO, &mut r);
        assert!(matches!(out, EnqueueOutcome::Accepted { port: 0 }), "{out:?}");
    }

    #[test]
    fn anaqm_redirects_to_least_occupied_low_port() {
        let mut bank = anaqm_bank();
        let mut r = rng();
        fill(&mut bank, 0, TrafficClass::Ef, 128, &mut r);
        // Port 3 at ~10%, port 4 at ~40%, ports 1-2 fuller.
        fill(&mut bank, 1, TrafficClass::Af, 100, &mut r);
        fill(&mut bank, 2, TrafficClass::Af, 100, &mut r);
        fill(&mut bank, 3, TrafficClass::Be, 13, &mut r);
        fill(&mut bank, 4, TrafficClass::Be, 51, &mut r);
        let out = bank.enqueue(pkt(8, TrafficClass::Ef, 64), 0, SimTime::ZERO, &mut r);
        match out {
            EnqueueOutcome::Redirected { from: 0, to: 3 } => {}
            other => panic!("expected redirect to port 3, got {other:?}"),
        }
    }

    #[test]
    fn anaqm_redirect_tie_breaks_to_lowest_port() {
        let mut bank = anaqm_bank();
        let mut r = rng();
        fill(&mut bank, 0, TrafficClass::Ef, 128, &mut r);
        fill(&mut bank, 3, TrafficClass::Be, 20, &mut r);
        fill(&mut bank, 4, TrafficClass::Be, 20, &mut r);
        fill(&mut bank, 1, TrafficClass::Af, 20, &mut r);
        fill(&mut bank, 2, TrafficClass::Af, 20, &mut r);
        let out = bank.enqueue(pkt(8, TrafficClass::Ef, 64), 0, SimTime::ZERO, &mut r);
        match out {
            EnqueueOutcome::Redirected { from: 0, to: 1 } => {}
            other => panic!("expected redirect to port 1 on tie, got {other:?}"),
        }
    }

    #[test]
    fn anaqm_drops_high_priority_only_when_everything_is_full() {
        let mut bank = anaqm_bank();
        let mut r = rng();
        fill(&mut bank, 0, TrafficClass::Ef, 128, &mut r);
        for port in 1..5 {
            // Fill low ports to capacity via redirected EF traffic.
            while bank.queues[port].occupancy_elems() < 128 {
                let out = bank.enqueue(pkt(90, TrafficClass::Ef, 64), 0, SimTime::ZERO, &mut r);
                assert!(matches!(out, EnqueueOutcome::Redirected { .. }));
            }
        }
        let out = bank.enqueue(pkt(91, TrafficClass::Ef, 64), 0, SimTime::ZERO, &mut r);
        assert!(matches!(
            out,
            EnqueueOutcome::Dropped { reason: DropReason::QueueFull, .. }
        ));
    }

    #[test]
    fn anaqm_low_priority_defers_at_threshold_and_drops_when_deferred_full() {
        let queues = (0..5).map(|p| EgressQueue::new(p, 128, 0.85, 3)).collect();
        let mut bank = QueueBank::new(
            queues,
            Policy::Anaqm { low_ports: vec![1, 2, 3, 4] },
        );
        let mut r = rng();
        fill(&mut bank, 3, TrafficClass::Be, 108, &mut r);
        // At the soft threshold (108 = floor(0.85*128)) admission stops.
        for i in 0..3 {
            let out = bank.enqueue(pkt(200 + i, TrafficClass::Be, 64), 3, SimTime::ZERO, &mut r);
            assert!(matches!(out, EnqueueOutcome::Deferred { port: 3 }), "{out:?}");
        }
        let out = bank.enqueue(pkt(300, TrafficClass::Be, 64), 3, SimTime::ZERO, &mut r);
        assert!(matches!(
            out,
            EnqueueOutcome::Dropped { reason: DropReason::DeferredFull, .. }
        ));
    }

    #[test]
    fn drain_promotes_up_to_threshold_in_fifo_order() {
        let mut q = EgressQueue::new(3, 128, 0.85, 512);
        let mut bank_occ = 0;
        for i in 0..108 {
            q.push(pkt(i, TrafficClass::Be, 64), SimTime(i));
            bank_occ += 1;
        }
        assert_eq!(bank_occ, q.occupancy_elems());
        for i in 0..5 {
            q.defer(pkt(500 + i, TrafficClass::Be, 64), SimTime(200 + i));
        }
        assert!(q.drain_deferred().is_empty(), "at threshold, nothing promotes");
        q.release(1);
        q.release(1);
        let promoted = q.drain_deferred();
        assert_eq!(
            promoted,
            vec![(500, TrafficClass::Be), (501, TrafficClass::Be)],
            "oldest deferred first, up to the threshold"
        );
        assert_eq!(q.occupancy_elems(), 108);
        assert_eq!(q.deferred_len(), 3);
    }

    #[test]
    fn drain_on_empty_deferred_promotes_nothing() {
        let mut q = EgressQueue::new(1, 128, 0.85, 512);
        assert!(q.drain_deferred().is_empty());
    }

    #[test]
    fn deferred_conservation_over_random_load() {
        // Every Defer is eventually Promoted, Dropped(DeferredFull), or
        // resident at the end; nothing is lost.
        let queues = (0..5).map(|p| EgressQueue::new(p, 64, 0.85, 16)).collect();
        let mut bank = QueueBank::new(
            queues,
            Policy::Anaqm { low_ports: vec![1, 2, 3, 4] },
        );
        let mut r = Rng::new(777, 4);
        let (mut defers, mut drops, mut promotions) = (0u64, 0u64, 0u64);
        let mut in_service: Vec<Option<u32>> = vec![None; 5];
        for step in 0..20_000u64 {
            let now = SimTime(step * 100);
            if r.next_below(3) < 2 {
                let id = step;
                let out = bank.enqueue(pkt(id, TrafficClass::Be, 64), 3, now, &mut r);
                match out {
                    EnqueueOutcome::Deferred { .. } => defers += 1,
                    EnqueueOutcome::Dropped { .. } => drops += 1,
                    _ => {}
                }
            } else {
                let port = 3usize;
                if in_service[port].is_none() {
                    if let Some(p) = bank.queues[port].pop_highest() {
                        in_service[port] = Some(p.elems());
                    }
                }
                if let Some(elems) = in_service[port].take() {
                    promotions += bank.on_transmit_complete(3, elems, now).len() as u64;
                }
            }
        }
        let resident = bank.queues[3].deferred_len() as u64;
        assert!(defers > 0, "load must actually defer");
        assert!(drops > 0, "load must exhaust the deferred queue at times");
        // Drops never enter the deferred queue, so they sit outside it.
        assert_eq!(defers, promotions + resident);
    }

    #[test]
    fn pop_highest_is_strict_priority_with_fifo_within_class() {
        let mut q = EgressQueue::new(0, 128, 0.85, 512);
        q.push(pkt(1, TrafficClass::Be, 64), SimTime(1));
        q.push(pkt(2, TrafficClass::Af, 64), SimTime(2));
        q.push(pkt(3, TrafficClass::Ef, 64), SimTime(3));
        q.push(pkt(4, TrafficClass::Ef, 64), SimTime(4));
        q.push(pkt(5, TrafficClass::Priv, 64), SimTime(5));
        let order: Vec<u64> = std::iter::from_fn(|| q.pop_highest().map(|p| p.id)).collect();
        assert_eq!(order, vec![5, 3, 4, 2, 1]);
    }

    #[test]
    fn pow_f64_matches_iterated_multiplication() {
        for exp in 0..40u64 {
            let mut iterated = 1.0f64;
            for _ in 0..exp {
                iterated *= 0.998;
            }
            // Binary exponentiation may differ from iterated multiplication
            // only within float-associativity slack.
            assert!((pow_f64(0.998, exp) - iterated).abs() < 1e-12);
        }
        assert_eq!(pow_f64(0.5, 3), 0.125);
        assert_eq!(pow_f64(0.9, 0), 1.0);
    }
}
