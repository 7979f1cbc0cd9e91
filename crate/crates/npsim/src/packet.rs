//! Packets, flows, traffic classes, and mpacket segmentation.

use std::fmt;

use crate::capsule::Capsule;
use crate::time::SimTime;

/// Transport protocol tag of a flow. Classification needs only this plus the
/// port/address tuple; no real header parsing happens anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Tcp,
    Udp,
    RtpUdp,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
            Protocol::RtpUdp => "rtp",
        }
    }

    pub fn parse(s: &str) -> Option<Protocol> {
        match s {
            "tcp" => Some(Protocol::Tcp),
            "udp" => Some(Protocol::Udp),
            "rtp" => Some(Protocol::RtpUdp),
            _ => None,
        }
    }
}

/// 5-tuple flow identity. Equality is field-wise: packets with equal keys
/// belong to the same flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_addr: u32,
    pub dst_addr: u32,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
}

impl FlowKey {
    /// Canonical big-endian byte image, used by the pinned stream hash and
    /// the ingress-port parity rule.
    pub fn to_bytes(self) -> [u8; 17] {
        let mut b = [0u8; 17];
        b[0..4].copy_from_slice(&self.src_addr.to_be_bytes());
        b[4..8].copy_from_slice(&self.dst_addr.to_be_bytes());
        b[8..10].copy_from_slice(&self.src_port.to_be_bytes());
        b[10..12].copy_from_slice(&self.dst_port.to_be_bytes());
        b[12] = match self.protocol {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::RtpUdp => 46,
        };
        b
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}:{}->{}.{}.{}.{}:{}/{}",
            self.src_addr >> 24,
            (self.src_addr >> 16) & 0xFF,
            (self.src_addr >> 8) & 0xFF,
            self.src_addr & 0xFF,
            self.src_port,
            self.dst_addr >> 24,
            (self.dst_addr >> 16) & 0xFF,
            (self.dst_addr >> 8) & 0xFF,
            self.dst_addr & 0xFF,
            self.dst_port,
            self.protocol.as_str()
        )
    }
}

/// Service class. The derived order is ascending priority, so
/// `Priv > Ef > Af > Be` holds under `>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficClass {
    Be,
    Af,
    Ef,
    Priv,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 4] = [
        TrafficClass::Priv,
        TrafficClass::Ef,
        TrafficClass::Af,
        TrafficClass::Be,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Priv => "priv",
            TrafficClass::Ef => "ef",
            TrafficClass::Af => "af",
            TrafficClass::Be => "be",
        }
    }

    pub fn parse(s: &str) -> Option<TrafficClass> {
        match s {
            "priv" => Some(TrafficClass::Priv),
            "ef" => Some(TrafficClass::Ef),
            "af" => Some(TrafficClass::Af),
            "be" => Some(TrafficClass::Be),
            _ => None,
        }
    }
}

/// Terminal (or pending) outcome of a packet. Terminal values are final:
/// `set_fate` rejects any second terminal assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fate {
    InFlight,
    Transmitted,
    DroppedQueueFull,
    DroppedDeferredFull,
    DroppedTtl,
    DroppedRed,
}

/// Width of one transfer element in bytes: packets move through the receive
/// and transmit buffers in 64-byte chunks.
pub const ELEMENT_BYTES: u32 = 64;

/// TBUF elements a packet of `size_bytes` occupies.
pub fn elems_for(size_bytes: u32) -> u32 {
    size_bytes.div_ceil(ELEMENT_BYTES)
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub id: u64,
    pub flow: FlowKey,
    pub size_bytes: u32,
    pub ttl: u8,
    /// Assigned by the classifier; None until then.
    pub class: Option<TrafficClass>,
    pub capsule: Option<Capsule>,
    pub t_created: SimTime,
    pub t_enqueued: Option<SimTime>,
    pub t_departed: Option<SimTime>,
    fate: Fate,
}

impl Packet {
    pub fn new(id: u64, flow: FlowKey, size_bytes: u32, ttl: u8, t_created: SimTime) -> Packet {
        Packet {
            id,
            flow,
            size_bytes,
            ttl,
            class: None,
            capsule: None,
            t_created,
            t_enqueued: None,
            t_departed: None,
            fate: Fate::InFlight,
        }
    }

    pub fn fate(&self) -> Fate {
        self.fate
    }

    /// Sets the terminal fate. Panics on a second terminal assignment: fates
    /// are final, and a duplicate write means a pipeline-stage bug.
    pub fn set_fate(&mut self, fate: Fate) {
        assert_ne!(fate, Fate::InFlight, "cannot reset a fate to InFlight");
        assert_eq!(
            self.fate,
            Fate::InFlight,
            "packet {} fate already {:?}, refusing {:?}",
            self.id,
            self.fate,
            fate
        );
        self.fate = fate;
    }

    pub fn elems(&self) -> u32 {
        elems_for(self.size_bytes)
    }
}

/// One 64-byte transfer element of a segmented packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MPacket {
    pub parent_id: u64,
    pub index: u32,
    pub payload_bytes: u16,
    pub sop: bool,
    pub eop: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error("zero-size packet is malformed")]
    ZeroSize,
    #[error("element size must be at least 1 byte")]
    ZeroElement,
}

/// Splits a packet body into ordered elements of at most `element_size`
/// bytes. All elements are full except possibly the last.
pub fn segment_packet(
    parent_id: u64,
    size_bytes: u32,
    element_size: u16,
) -> Result<Vec<MPacket>, SegmentError> {
    if size_bytes == 0 {
        return Err(SegmentError::ZeroSize);
    }
    if element_size == 0 {
        return Err(SegmentError::ZeroElement);
    }
    let elem = element_size as u32;
    let count = size_bytes.div_ceil(elem);
    let mut out = Vec::with_capacity(count as usize);
    for index in 0..count {
        let last = index == count - 1;
        let payload = if last {
            let rem = size_bytes - index * elem;
            debug_assert!(rem >= 1 && rem <= elem);
            rem as u16
        } else {
            element_size
        };
        out.push(MPacket {
            parent_id,
            index,
            payload_bytes: payload,
            sop: index == 0,
            eop: last,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReassemblyError {
    #[error("no segments")]
    Empty,
    #[error("segment {index} belongs to packet {found}, expected {expected}")]
    MixedParent { index: u32, expected: u64, found: u64 },
    #[error("expected segment index {expected}, found {found}")]
    NonContiguous { expected: u32, found: u32 },
    #[error("first segment lacks start-of-packet flag")]
    MissingSop,
    #[error("last segment lacks end-of-packet flag")]
    MissingEop,
    #[error("segment {index} carries a stray {flag} flag")]
    StrayFlag { index: u32, flag: &'static str },
    #[error("segment {index} has empty payload")]
    EmptyPayload { index: u32 },
}

/// Rebuilds (packet id, total bytes) from an ordered segment list,
/// validating contiguity and framing flags. The exact inverse of
/// [`segment_packet`] on well-formed input.
pub fn reassemble(segments: &[MPacket]) -> Result<(u64, u64), ReassemblyError> {
    let first = segments.first().ok_or(ReassemblyError::Empty)?;
    if !first.sop {
        return Err(ReassemblyError::MissingSop);
    }
    let parent = first.parent_id;
    let last_index = (segments.len() - 1) as u32;
    let mut total: u64 = 0;
    for (i, seg) in segments.iter().enumerate() {
        let i = i as u32;
        if seg.parent_id != parent {
            return Err(ReassemblyError::MixedParent {
                index: i,
                expected: parent,
                found: seg.parent_id,
            });
        }
        if seg.index != i {
            return Err(ReassemblyError::NonContiguous {
                expected: i,
                found: seg.index,
            });
        }
        if seg.payload_bytes == 0 {
            return Err(ReassemblyError::EmptyPayload { index: i });
        }
        if seg.sop && i != 0 {
            return Err(ReassemblyError::StrayFlag { index: i, flag: "sop" });
        }
        if seg.eop && i != last_index {
            return Err(ReassemblyError::StrayFlag { index: i, flag: "eop" });
        }
        total += seg.payload_bytes as u64;
    }
    if !segments[last_index as usize].eop {
        return Err(ReassemblyError::MissingEop);
    }
    Ok((parent, total))
}

/// FNV-1a 64-bit hash, the pinned well-mixed hash for flow keys. Used for
/// ingress-port parity and the arrival stream hash.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
