//! Arbitrary segment lists never panic the reassembler: they either fail
//! with a structured framing error or rebuild to totals consistent with the
//! input. Independently, the segmenter's output must always reassemble.

#![no_main]

use libfuzzer_sys::fuzz_target;
use npsim::packet::{reassemble, segment_packet, MPacket};

/// 16 input bytes decode one segment: parent id, index, payload size, flag
/// bits (0 = start-of-packet, 1 = end-of-packet), one byte reserved.
fn decode(data: &[u8]) -> Vec<MPacket> {
    data.chunks_exact(16)
        .map(|c| MPacket {
            parent_id: u64::from_le_bytes(c[0..8].try_into().unwrap()),
            index: u32::from_le_bytes(c[8..12].try_into().unwrap()),
            payload_bytes: u16::from_le_bytes(c[12..14].try_into().unwrap()),
            sop: c[14] & 1 != 0,
            eop: c[14] & 2 != 0,
        })
        .collect()
}

fuzz_target!(|data: &[u8]| {
    let segments = decode(data);
    if let Ok((id, total)) = reassemble(&segments) {
        assert_eq!(id, segments[0].parent_id);
        assert_eq!(
            total,
            segments.iter().map(|s| u64::from(s.payload_bytes)).sum::<u64>()
        );
        assert!(total >= 1, "a reassembled packet cannot be empty");
    }

    // Segmenting any (id, size) pair derived from the input must produce a
    // list the reassembler accepts and inverts exactly.
    if let Some(first) = segments.first() {
        let size = u32::from(first.payload_bytes).max(1);
        let canonical = segment_packet(first.parent_id, size, 64).expect("nonzero size and element");
        let (id, total) = reassemble(&canonical).expect("segmenter output must reassemble");
        assert_eq!(id, first.parent_id);
        assert_eq!(total, u64::from(size));
    }
});
