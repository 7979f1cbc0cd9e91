//! Egress transmit stage: one serial link per port with strict-priority
//! selection out of the queue bank and periodic occupancy feedback toward
//! the classifier's load view.

use crate::aqm::EgressQueue;
use crate::packet::{Fate, Packet};
use crate::time::{serialization_ns, SimTime};

/// Occupancy feedback is pushed to the classifier every this many completed
/// transmissions on a port.
pub const FEEDBACK_PERIOD: u64 = 16;

/// A serial output link. At most one packet is in flight; its queue
/// occupancy stays reserved until the transmission completes.
#[derive(Debug)]
pub struct PortLink {
    pub port: u8,
    pub rate_bps: u64,
    in_service: Option<Packet>,
    pub tx_count: u64,
    pub tx_bytes: u64,
}

impl PortLink {
    pub fn new(port: u8, rate_bps: u64) -> PortLink {
        assert!(rate_bps > 0, "link rate must be positive");
        PortLink {
            port,
            rate_bps,
            in_service: None,
            tx_count: 0,
            tx_bytes: 0,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.in_service.is_none()
    }

    pub fn in_service(&self) -> Option<&Packet> {
        self.in_service.as_ref()
    }

    /// Begins serializing `pkt`; returns the completion time.
    pub fn start_transmission(&mut self, pkt: Packet, now: SimTime) -> SimTime {
        assert!(self.is_idle(), "port {} already transmitting", self.port);
        let done = now + SimTime(serialization_ns(pkt.size_bytes, self.rate_bps));
        self.in_service = Some(pkt);
        done
    }

    /// Finishes the in-flight transmission: stamps departure time and fate,
    /// updates the link counters, and returns the packet and the number of
    /// buffer elements it releases.
    pub fn complete_transmission(&mut self, now: SimTime) -> (Packet, u32) {
        let mut pkt = self
            .in_service
            .take()
            .expect("complete_transmission on an idle port");
        pkt.t_departed = Some(now);
        pkt.set_fate(Fate::Transmitted);
        self.tx_count += 1;
        self.tx_bytes += u64::from(pkt.size_bytes);
        let elems = pkt.elems();
        (pkt, elems)
    }

    /// True right after a completion that should trigger load feedback.
    pub fn feedback_due(&self) -> bool {
        self.tx_count.is_multiple_of(FEEDBACK_PERIOD)
    }
}

/// Independent check that strict priority held: after popping, no packet of
/// a strictly higher class may remain queued on the same port.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SelectionAudit {
    pub selections: u64,
    pub violations: u64,
}

pub fn audited_pop(queue: &mut EgressQueue, audit: &mut SelectionAudit) -> Option<Packet> {
    let pkt = queue.pop_highest()?;
    audit.selections += 1;
    let class = pkt.class.expect("queued packets are classified");
    if queue.has_class_above(class) {
        audit.violations += 1;
    }
    Some(pkt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aqm::{DEFAULT_DEFERRED_CAPACITY, DEFAULT_SOFT_FRACTION};
    use crate::packet::{FlowKey, Protocol, TrafficClass};

    fn pkt(id: u64, size: u32, class: TrafficClass) -> Packet {
        let flow = FlowKey {
            src_addr: 1,
            dst_addr: 2,
            src_port: 3,
            dst_port: 4,
            protocol: Protocol::Udp,
        };
        let mut p = Packet::new(id, flow, size, 64, SimTime::ZERO);
        p.class = Some(class);
        p.t_enqueued = Some(SimTime::ZERO);
        p
    }

    #[test]
    fn oc3_serialization_takes_3303_ns() {
        let mut link = PortLink::new(0, 155_000_000);
        let done = link.start_transmission(pkt(1, 64, TrafficClass::Ef), SimTime(1000));
        assert_eq!(done, SimTime(4303));
        assert!(!link.is_idle());
        let (out, elems) = link.complete_transmission(done);
        assert_eq!(out.t_departed, Some(SimTime(4303)));
        assert_eq!(out.fate(), Fate::Transmitted);
        assert_eq!(elems, 1);
        assert!(link.is_idle());
        assert_eq!((link.tx_count, link.tx_bytes), (1, 64));
    }

    #[test]
    fn gigabit_serialization_matches_reference_sizes() {
        let mut link = PortLink::new(1, 1_000_000_000);
        let d = link.start_transmission(pkt(1, 64, TrafficClass::Be), SimTime::ZERO);
        assert_eq!(d, SimTime(512));
        link.complete_transmission(d);
        let d = link.start_transmission(pkt(2, 1500, TrafficClass::Be), SimTime::ZERO);
        assert_eq!(d, SimTime(12_000));
    }

    #[test]
    fn feedback_fires_every_sixteenth_completion() {
        let mut link = PortLink::new(0, 1_000_000_000);
        let mut due = Vec::new();
        for i in 1..=40u64 {
            let d = link.start_transmission(pkt(i, 64, TrafficClass::Ef), SimTime(i));
            link.complete_transmission(d);
            if link.feedback_due() {
                due.push(i);
            }
        }
        assert_eq!(due, vec![16, 32]);
    }

    #[test]
    fn audited_pop_sees_no_violation_from_priority_order() {
        let mut q = EgressQueue::new(0, 128, DEFAULT_SOFT_FRACTION, DEFAULT_DEFERRED_CAPACITY);
        for (id, class) in [
            (1, TrafficClass::Be),
            (2, TrafficClass::Priv),
            (3, TrafficClass::Af),
            (4, TrafficClass::Ef),
            (5, TrafficClass::Be),
        ] {
            q.push_for_test(pkt(id, 64, class));
        }
        let mut audit = SelectionAudit::default();
        let mut order = Vec::new();
        while let Some(p) = audited_pop(&mut q, &mut audit) {
            order.push(p.id);
            q.release(p.elems());
        }
        assert_eq!(order, vec![2, 4, 3, 1, 5]);
        assert_eq!(audit.selections, 5);
        assert_eq!(audit.violations, 0);
    }

    #[test]
    #[should_panic(expected = "already transmitting")]
    fn double_start_is_a_bug() {
        let mut link = PortLink::new(0, 1_000_000_000);
        link.start_transmission(pkt(1, 64, TrafficClass::Ef), SimTime::ZERO);
        link.start_transmission(pkt(2, 64, TrafficClass::Ef), SimTime::ZERO);
    }
}
