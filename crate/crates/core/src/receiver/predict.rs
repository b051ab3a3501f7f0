//! Configuration-level mirror of the receive pipeline.
//!
//! Given the transmitted and the expected configuration of an unjammed,
//! clean reception, this returns the same outcome kind that
//! [`receive_packet`](super::receive_packet) would, without synthesizing
//! any waveform. Large sniffing Monte-Carlo runs use it; tests pin it to the
//! waveform receiver.

use super::pipeline::{RxKind, RxSettings};
use crate::error::Result;
use crate::phy::packet::layout;
use crate::phy::{CodeTable, Field, PacketConfig, StsMode};

pub fn predict_outcome(
    tx: &PacketConfig,
    rx: &PacketConfig,
    table: &CodeTable,
    payload_len: usize,
    keyed: bool,
    settings: &RxSettings,
) -> Result<RxKind> {
    if tx.channel != rx.channel || tx.pac != rx.pac {
        return Ok(RxKind::NoDetection);
    }
    if tx.preamble_code != rx.preamble_code || tx.preamble_length != rx.preamble_length {
        return Ok(RxKind::SyncError);
    }
    if tx.sfd != rx.sfd {
        return Ok(RxKind::SfdError);
    }
    let code_len = table.get(rx.preamble_code)?.len();
    let mut spans = Vec::new();
    let mut at = 0;
    for (f, n) in layout(tx, code_len, payload_len, false) {
        spans.push((f, at, at + n));
        at += n;
    }
    let find = |f: Field| spans.iter().find(|s| s.0 == f).map(|s| (s.1, s.2));
    let mut cursor = find(Field::Sfd).map(|s| s.1).unwrap_or(at);

    let mut sts_at = None;
    if matches!(rx.sts_mode, StsMode::BeforePhd | StsMode::NoData) {
        sts_at = Some(cursor);
        cursor += rx.sts_chips();
    }
    if rx.sts_mode.has_data() {
        match find(Field::Phd) {
            Some((start, _)) if start == cursor && tx.phd == rx.phd => {}
            _ => return Ok(RxKind::StsPhdError),
        }
        cursor = find(Field::Payload).map(|s| s.1).unwrap_or(cursor);
    }
    if rx.sts_mode == StsMode::AfterPayload {
        sts_at = Some(cursor);
    }
    if let Some(start) = sts_at {
        let end = start + rx.sts_chips();
        let pass = if keyed {
            matches!(find(Field::Sts), Some((s, e)) if s == start && e >= end)
        } else {
            let covered: usize = spans
                .iter()
                .filter(|s| matches!(s.0, Field::Sts | Field::Phd | Field::Payload))
                .map(|&(_, s, e)| e.min(end).saturating_sub(s.max(start)))
                .sum();
            covered as f64 >= settings.sts_coverage_min * rx.sts_chips() as f64
        };
        if !pass {
            return Ok(RxKind::StsPhdError);
        }
    }
    Ok(RxKind::Ok)
}
