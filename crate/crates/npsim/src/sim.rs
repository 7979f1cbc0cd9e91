//! The discrete-event simulation: receive staging with eight in-order
//! thread contexts, classification, policy-controlled enqueue, strict
//! priority transmission, periodic maintenance, and the run-long audits
//! (conservation census, selection order, per-flow FIFO order).

use std::collections::{HashMap, HashSet, VecDeque};

use crate::aqm::{DropReason, EgressQueue, EnqueueOutcome, Policy, QueueBank, RedParams, RedState};
use crate::classifier::{Classifier, Decision};
use crate::events::EventQueue;
use crate::metrics::{
    AuditError, ClassBucket, EventKind, EventLog, EventRecord, Metrics, StatusSnapshot,
    INJECTED_ID_BIT,
};
use crate::packet::{Fate, FlowKey, Packet, Protocol, TrafficClass};
use crate::ring::RingBuffer;
use crate::rng::{stream, Rng};
use crate::scenario::{PolicyKind, Scenario};
use crate::scheduler::{audited_pop, PortLink, SelectionAudit};
use crate::time::SimTime;
use crate::traffic::{ingress_port_for, ArrivalEvent, Generator};
use crate::{EGRESS_PORTS, INGRESS_PORTS};

/// Receive-side microengine thread contexts; commits happen in strict
/// arrival order regardless of per-packet service completion order.
pub const THREAD_CONTEXTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Arrival,
    RxDone { ctx: usize },
    TxDone { port: u8 },
    TableRefresh,
    Snapshot,
    Inject { index: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("internal audit failed: {0}")]
    Audit(#[from] AuditError),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub event_log: bool,
}

/// Everything one policy run produced.
#[derive(Debug)]
pub struct SimResult {
    pub policy: PolicyKind,
    pub metrics: Metrics,
    pub snapshots: Vec<StatusSnapshot>,
    pub selection: SelectionAudit,
    /// Transmissions that broke per-flow FIFO order for a flow that was
    /// never redirected. Must be zero.
    pub order_violations: u64,
    pub redirected_flow_count: u64,
    pub redirect_count: u64,
    pub defer_count: u64,
    pub promote_count: u64,
    /// Instants where a high-priority packet found its home port full.
    pub ef_overflow_instants: u64,
    /// Of those, instants with no aggregate low-priority headroom left.
    pub ef_overflow_headroom_misses: u64,
    pub arrival_stream_hash: u64,
    pub generated: u64,
    /// Packets still inside the pipeline at the end of the run, counted by
    /// walking the structures (not derived from the other totals).
    pub resident_end_census: u64,
    pub event_log: Option<EventLog>,
    pub per_port_tx_packets: Vec<u64>,
    pub per_port_tx_bytes: Vec<u64>,
}

#[derive(Debug)]
struct RxSlot {
    seq: u64,
    ingress: u8,
    pkt: Packet,
    ready: bool,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    policy_kind: PolicyKind,
    now: SimTime,
    events: EventQueue<Ev>,
    gen: Generator,
    pending_arrival: Option<ArrivalEvent>,
    classifier: Classifier,
    bank: QueueBank,
    links: Vec<PortLink>,
    metrics: Metrics,
    log: Option<EventLog>,
    policy_rng: Rng,

    rbuf_capacity: u32,
    rbuf_used: u32,
    waiting: VecDeque<RxSlot>,
    slots: Vec<Option<RxSlot>>,
    next_rx_seq: u64,
    next_commit_seq: u64,
    ring: RingBuffer<Packet>,

    selection: SelectionAudit,
    order_last: HashMap<FlowKey, u64>,
    redirected_flows: HashSet<FlowKey>,
    order_violations: u64,
    redirect_count: u64,
    defer_count: u64,
    promote_count: u64,
    ef_overflow_instants: u64,
    ef_overflow_headroom_misses: u64,
    snapshots: Vec<StatusSnapshot>,
    inject_seq: u64,
}

/// Runs one policy against the scenario's traffic. Deterministic for a
/// given (scenario, policy) pair.
pub fn run_sim(
    scenario: &Scenario,
    policy_kind: PolicyKind,
    opts: &SimOptions,
) -> Result<SimResult, SimError> {
    let routing = scenario.routing_policy();
    let policy = match policy_kind {
        PolicyKind::DropTail => Policy::DropTail,
        PolicyKind::Red => Policy::Red(
            (0..EGRESS_PORTS)
                .map(|_| {
                    RedState::new(
                        RedParams::from_fractions(
                            scenario.tbuf_elems,
                            scenario.red.w_q,
                            scenario.red.min_th_frac,
                            scenario.red.max_th_frac,
                            scenario.red.max_p,
                        ),
                        scenario.egress_rate_bps,
                    )
                })
                .collect(),
        ),
        PolicyKind::Anaqm => Policy::Anaqm {
            low_ports: routing.low_priority_ports(),
        },
    };
    let queues = (0..EGRESS_PORTS)
        .map(|p| {
            EgressQueue::new(
                p as u8,
                scenario.tbuf_elems,
                scenario.soft_fraction,
                scenario.deferred_capacity as usize,
            )
        })
        .collect();
    let links = (0..EGRESS_PORTS)
        .map(|p| PortLink::new(p as u8, scenario.egress_rate_bps))
        .collect();
    let gen = Generator::build(scenario.traffic_config()).expect("scenario was validated");

    let sim = Sim {
        scenario,
        policy_kind,
        now: SimTime::ZERO,
        events: EventQueue::new(),
        gen,
        pending_arrival: None,
        classifier: Classifier::new(routing, scenario.table_max as usize, scenario.refresh),
        bank: QueueBank::new(queues, policy),
        links,
        metrics: Metrics::new(INGRESS_PORTS, EGRESS_PORTS),
        log: opts.event_log.then(EventLog::new),
        policy_rng: Rng::new(scenario.seed, stream::POLICY),
        rbuf_capacity: scenario.rbuf_elems,
        rbuf_used: 0,
        waiting: VecDeque::new(),
        slots: (0..THREAD_CONTEXTS).map(|_| None).collect(),
        next_rx_seq: 0,
        next_commit_seq: 0,
        ring: RingBuffer::new(scenario.ring_capacity as usize),
        selection: SelectionAudit::default(),
        order_last: HashMap::new(),
        redirected_flows: HashSet::new(),
        order_violations: 0,
        redirect_count: 0,
        defer_count: 0,
        promote_count: 0,
        ef_overflow_instants: 0,
        ef_overflow_headroom_misses: 0,
        snapshots: Vec::new(),
        inject_seq: 0,
    };
    sim.run()
}

impl<'a> Sim<'a> {
    fn run(mut self) -> Result<SimResult, SimError> {
        let duration = self.scenario.duration;

        // Periodic maintenance and snapshots, fixed up front.
        let refresh = self.scenario.refresh;
        let mut t = refresh;
        while t <= duration {
            self.events.schedule(t, Ev::TableRefresh);
            t += refresh;
        }
        let interval = self.scenario.snapshot_interval;
        let mut covered_end = false;
        if interval.as_nanos() > 0 {
            let mut t = interval;
            while t <= duration {
                self.events.schedule(t, Ev::Snapshot);
                covered_end = t == duration;
                t += interval;
            }
        }
        if !covered_end {
            self.events.schedule(duration, Ev::Snapshot);
        }
        for (i, (at, _)) in self.scenario.capsules.iter().enumerate() {
            if *at <= duration {
                self.events.schedule(*at, Ev::Inject { index: i });
            }
        }
        self.pending_arrival = self.gen.next_arrival();
        if let Some(a) = &self.pending_arrival {
            self.events.schedule(a.at, Ev::Arrival);
        }

        while let Some((t, ev)) = self.events.pop() {
            if t > duration {
                break;
            }
            debug_assert!(t >= self.now, "time went backwards");
            self.now = t;
            match ev {
                Ev::Arrival => self.handle_arrival()?,
                Ev::RxDone { ctx } => self.handle_rx_done(ctx)?,
                Ev::TxDone { port } => self.handle_tx_done(port)?,
                Ev::TableRefresh => {
                    self.classifier.refresh_table(self.now);
                }
                Ev::Snapshot => self.handle_snapshot()?,
                Ev::Inject { index } => self.handle_inject(index)?,
            }
        }

        let resident_end_census = self.resident_packets();
        Ok(SimResult {
            snapshots: self.snapshots,
            selection: self.selection,
            order_violations: self.order_violations,
            redirected_flow_count: self.redirected_flows.len() as u64,
            redirect_count: self.redirect_count,
            defer_count: self.defer_count,
            promote_count: self.promote_count,
            ef_overflow_instants: self.ef_overflow_instants,
            ef_overflow_headroom_misses: self.ef_overflow_headroom_misses,
            arrival_stream_hash: self.gen.stream_hash(),
            generated: self.metrics.generated(),
            resident_end_census,
            event_log: self.log,
            per_port_tx_packets: self.links.iter().map(|l| l.tx_count).collect(),
            per_port_tx_bytes: self.links.iter().map(|l| l.tx_bytes).collect(),
            metrics: self.metrics,
            policy: self.policy_kind,
        })
    }

    fn emit(&mut self, kind: EventKind, packet_id: u64, class: ClassBucket, port: Option<u8>) {
        if let Some(log) = &mut self.log {
            log.push(EventRecord {
                at: self.now,
                packet_id,
                kind,
                class,
                port,
            });
        }
    }

    fn handle_arrival(&mut self) -> Result<(), SimError> {
        let arr = self
            .pending_arrival
            .take()
            .expect("arrival event without pending arrival");
        debug_assert_eq!(arr.at, self.now);
        self.ingest(arr.packet, arr.ingress_port)?;
        self.pending_arrival = self.gen.next_arrival();
        if let Some(a) = &self.pending_arrival {
            self.events.schedule(a.at, Ev::Arrival);
        }
        Ok(())
    }

    fn handle_inject(&mut self, index: usize) -> Result<(), SimError> {
        let capsule = self.scenario.capsules[index].1.clone();
        let id = INJECTED_ID_BIT | self.inject_seq;
        self.inject_seq += 1;
        let flow = FlowKey {
            src_addr: 0xC0A8_0001,
            dst_addr: 0xC0A8_00FE,
            src_port: 40_000u16.wrapping_add(index as u16),
            dst_port: 4,
            protocol: Protocol::Udp,
        };
        let mut pkt = Packet::new(id, flow, 64, 64, self.now);
        pkt.capsule = Some(capsule);
        let ingress = ingress_port_for(flow);
        self.ingest(pkt, ingress)
    }

    /// Entry of one packet into the receive stage (or an ingress drop when
    /// the receive buffer cannot hold it).
    fn ingest(&mut self, mut pkt: Packet, ingress: u8) -> Result<(), SimError> {
        self.metrics.record_generated();
        self.emit(EventKind::Arrive, pkt.id, ClassBucket::Unclassified, Some(ingress));

        let elems = pkt.elems();
        if self.rbuf_used + elems > self.rbuf_capacity {
            pkt.set_fate(Fate::DroppedQueueFull);
            self.metrics.record_ingress_drop();
            self.metrics.record_offered(ClassBucket::Unclassified);
            self.metrics.record_terminal(
                pkt.id,
                ClassBucket::Unclassified,
                Some(ingress),
                Fate::DroppedQueueFull,
                u64::from(pkt.size_bytes),
                self.now,
                None,
            )?;
            self.emit(
                EventKind::DropQueueFull,
                pkt.id,
                ClassBucket::Unclassified,
                Some(ingress),
            );
            return Ok(());
        }

        self.rbuf_used += elems;
        self.metrics.record_rx(ingress, self.now);
        let seq = self.next_rx_seq;
        self.next_rx_seq += 1;
        let slot = RxSlot {
            seq,
            ingress,
            pkt,
            ready: false,
        };
        if let Some(ctx) = self.slots.iter().position(Option::is_none) {
            let done = self.now + SimTime(u64::from(elems) * self.scenario.rx_service_ns);
            self.slots[ctx] = Some(slot);
            self.events.schedule(done, Ev::RxDone { ctx });
        } else {
            self.waiting.push_back(slot);
        }
        Ok(())
    }

    fn handle_rx_done(&mut self, ctx: usize) -> Result<(), SimError> {
        self.slots[ctx]
            .as_mut()
            .expect("RxDone for an empty context")
            .ready = true;
        self.commit_in_order()
    }

    /// Strict thread ordering: contexts commit in arrival sequence. A
    /// finished context waits until every earlier packet has committed.
    fn commit_in_order(&mut self) -> Result<(), SimError> {
        loop {
            let Some(ctx) = self
                .slots
                .iter()
                .position(|s| s.as_ref().is_some_and(|s| s.seq == self.next_commit_seq))
            else {
                return Ok(());
            };
            if !self.slots[ctx].as_ref().unwrap().ready {
                return Ok(());
            }
            let slot = self.slots[ctx].take().unwrap();
            self.next_commit_seq += 1;
            self.commit(slot)?;
            if let Some(next) = self.waiting.pop_front() {
                let done = self.now
                    + SimTime(u64::from(next.pkt.elems()) * self.scenario.rx_service_ns);
                self.slots[ctx] = Some(next);
                self.events.schedule(done, Ev::RxDone { ctx });
            }
        }
    }

    /// One packet leaves the receive stage: through the scratch ring, the
    /// classifier, and into (or out of) an egress queue.
    fn commit(&mut self, slot: RxSlot) -> Result<(), SimError> {
        let RxSlot {
            ingress, mut pkt, ..
        } = slot;
        self.rbuf_used -= pkt.elems();
        self.metrics.record_rx_forwarded(ingress, self.now);

        // The functional stage consumes the ring entry in the same step, so
        // the ring is a pass-through here; its backpressure contract is
        // exercised separately.
        pkt = match self.ring.put(pkt) {
            Ok(()) => self.ring.get().expect("entry was just put"),
            Err((_, p)) => p,
        };

        let outcome = self.classifier.classify(&mut pkt, self.now);
        if let Some((port, fraction)) = outcome.threshold_change {
            self.bank.queues[port as usize].set_soft_threshold_fraction(fraction);
        }
        match outcome.decision {
            Decision::DropTtl => {
                pkt.set_fate(Fate::DroppedTtl);
                self.metrics.record_offered(ClassBucket::Unclassified);
                self.metrics.record_terminal(
                    pkt.id,
                    ClassBucket::Unclassified,
                    None,
                    Fate::DroppedTtl,
                    u64::from(pkt.size_bytes),
                    self.now,
                    None,
                )?;
                self.emit(EventKind::DropTtl, pkt.id, ClassBucket::Unclassified, None);
                Ok(())
            }
            Decision::Classified { class, port } => {
                pkt.class = Some(class);
                self.enqueue_classified(pkt, class, port)
            }
        }
    }

    fn enqueue_classified(
        &mut self,
        pkt: Packet,
        class: TrafficClass,
        port: u8,
    ) -> Result<(), SimError> {
        let bucket = ClassBucket::from(Some(class));
        self.metrics.record_offered(bucket);
        let id = pkt.id;
        let bytes = u64::from(pkt.size_bytes);
        let flow = pkt.flow;
        let elems = pkt.elems();

        // Audit hook for the congestion claim: every time a high-priority
        // packet finds its home port full, check whether the low-priority
        // ports still had aggregate headroom.
        if matches!(self.bank.policy, Policy::Anaqm { .. })
            && class >= TrafficClass::Ef
            && !self.bank.queues[port as usize].fits(elems)
        {
            self.ef_overflow_instants += 1;
            let Policy::Anaqm { low_ports } = &self.bank.policy else {
                unreachable!()
            };
            let (occ, cap) = low_ports.iter().fold((0u64, 0u64), |(o, c), &p| {
                let q = &self.bank.queues[p as usize];
                (
                    o + u64::from(q.occupancy_elems()),
                    c + u64::from(q.capacity_elems()),
                )
            });
            if occ >= cap {
                self.ef_overflow_headroom_misses += 1;
            }
        }

        match self.bank.enqueue(pkt, port, self.now, &mut self.policy_rng) {
            EnqueueOutcome::Accepted { port } => {
                self.metrics.record_tx_admitted(port, self.now);
                self.emit(EventKind::Enqueue, id, bucket, Some(port));
                self.try_start(port)
            }
            EnqueueOutcome::Redirected { from: _, to } => {
                self.redirect_count += 1;
                self.redirected_flows.insert(flow);
                self.metrics.record_tx_admitted(to, self.now);
                self.emit(EventKind::Redirect, id, bucket, Some(to));
                self.try_start(to)
            }
            EnqueueOutcome::Deferred { port } => {
                self.defer_count += 1;
                self.metrics.record_tx_admitted(port, self.now);
                self.emit(EventKind::Defer, id, bucket, Some(port));
                Ok(())
            }
            EnqueueOutcome::Dropped { reason, mut packet } => {
                let (fate, kind) = match reason {
                    DropReason::QueueFull => (Fate::DroppedQueueFull, EventKind::DropQueueFull),
                    DropReason::DeferredFull => {
                        (Fate::DroppedDeferredFull, EventKind::DropDeferredFull)
                    }
                    DropReason::Red => (Fate::DroppedRed, EventKind::DropRed),
                };
                packet.set_fate(fate);
                self.metrics
                    .record_terminal(id, bucket, Some(port), fate, bytes, self.now, None)?;
                self.emit(kind, id, bucket, Some(port));
                Ok(())
            }
        }
    }

    /// Work conservation: a link starts serving whenever it is idle and its
    /// queue holds a packet.
    fn try_start(&mut self, port: u8) -> Result<(), SimError> {
        let link = &mut self.links[port as usize];
        if !link.is_idle() {
            return Ok(());
        }
        let queue = &mut self.bank.queues[port as usize];
        if let Some(pkt) = audited_pop(queue, &mut self.selection) {
            let done = link.start_transmission(pkt, self.now);
            self.events.schedule(done, Ev::TxDone { port });
        }
        Ok(())
    }

    fn handle_tx_done(&mut self, port: u8) -> Result<(), SimError> {
        let (pkt, elems) = self.links[port as usize].complete_transmission(self.now);
        let bucket = ClassBucket::from(pkt.class);
        let delay = pkt
            .t_departed
            .expect("departure stamped at completion")
            .saturating_sub(pkt.t_enqueued.expect("admission stamped at enqueue"))
            .as_nanos();
        self.metrics.record_terminal(
            pkt.id,
            bucket,
            Some(port),
            Fate::Transmitted,
            u64::from(pkt.size_bytes),
            self.now,
            Some(delay),
        )?;
        self.emit(EventKind::Transmit, pkt.id, bucket, Some(port));

        // Per-flow FIFO audit over departures, redirected flows exempt.
        match self.order_last.get_mut(&pkt.flow) {
            Some(last) => {
                if pkt.id < *last {
                    if !self.redirected_flows.contains(&pkt.flow) {
                        self.order_violations += 1;
                    }
                } else {
                    *last = pkt.id;
                }
            }
            None => {
                self.order_last.insert(pkt.flow, pkt.id);
            }
        }

        let promoted = self.bank.on_transmit_complete(port, elems, self.now);
        for (pid, pclass) in promoted {
            self.promote_count += 1;
            self.emit(
                EventKind::Promote,
                pid,
                ClassBucket::from(Some(pclass)),
                Some(port),
            );
        }
        if self.links[port as usize].feedback_due() {
            self.classifier
                .update_port_load(port, self.bank.queues[port as usize].occupancy_elems());
        }
        self.try_start(port)
    }

    fn resident_packets(&self) -> u64 {
        let rx = self.waiting.len() + self.slots.iter().flatten().count();
        let in_service = self.links.iter().filter(|l| !l.is_idle()).count();
        (rx + self.ring.occupancy() + self.bank.resident_packets() + in_service) as u64
    }

    fn handle_snapshot(&mut self) -> Result<(), SimError> {
        let resident = self.resident_packets();
        self.metrics.census_check(self.now, resident)?;

        let mut rx_fullness = vec![0u32; INGRESS_PORTS];
        for slot in self.waiting.iter().chain(self.slots.iter().flatten()) {
            rx_fullness[slot.ingress as usize] += slot.pkt.elems();
        }
        let tx_fullness: Vec<u32> = self
            .bank
            .queues
            .iter()
            .map(EgressQueue::occupancy_elems)
            .collect();
        let tx_deferred: Vec<u32> = self
            .bank
            .queues
            .iter()
            .map(|q| q.deferred_len() as u32)
            .collect();
        self.snapshots.push(self.metrics.status_snapshot(
            self.now,
            &rx_fullness,
            &tx_fullness,
            &tx_deferred,
            resident,
        ));
        Ok(())
    }
}
