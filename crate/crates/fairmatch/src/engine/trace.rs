//! Execution traces and CONGEST bandwidth auditing.

use super::payload::Payload;
use super::NodeId;
use serde::Serialize;
use std::io::Write;

/// One logged message. `round` is the communication round in which the
/// message was sent (and, synchronously, received).
#[derive(Clone, Debug, Serialize)]
pub struct MessageRecord {
    pub round: u64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub payload: Payload,
    pub bits: u64,
}

/// Per-round aggregates.
#[derive(Clone, Debug, Serialize)]
pub struct RoundStats {
    pub round: u64,
    pub active_at_start: usize,
    pub messages: u64,
    pub max_bits: u64,
}

/// How much of the message log to retain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMode {
    /// Keep the full per-message log and per-round statistics.
    Full,
    /// Keep only aggregates (round count, message totals, worst message).
    /// Monte Carlo sweeps use this to stay in constant memory per run.
    Summary,
}

/// Trace of one engine run. `rounds_used` counts communication rounds: the
/// index of the last round in which any message was sent. Trailing rounds in
/// which nodes only absorb their final inboxes and stop are not counted,
/// matching the usual convention that the final acknowledgements of a
/// proposal schedule are free.
#[derive(Clone, Debug, Serialize)]
pub struct ExecutionTrace {
    pub rounds_used: u64,
    /// Rounds actually executed, including silent wind-down rounds.
    pub rounds_executed: u64,
    pub total_messages: u64,
    pub max_message_bits: u64,
    /// Sender, receiver and round of the largest message seen.
    pub max_bits_edge: Option<(u64, NodeId, NodeId)>,
    /// Per-round aggregates (empty in summary mode).
    pub per_round: Vec<RoundStats>,
    /// Full message log (empty in summary mode).
    pub messages: Vec<MessageRecord>,
    pub summarized: bool,
}

impl ExecutionTrace {
    pub(super) fn new(mode: TraceMode) -> Self {
        ExecutionTrace {
            rounds_used: 0,
            rounds_executed: 0,
            total_messages: 0,
            max_message_bits: 0,
            max_bits_edge: None,
            per_round: Vec::new(),
            messages: Vec::new(),
            summarized: mode == TraceMode::Summary,
        }
    }

    /// Aggregate JSON export: rounds, message counts, worst message size.
    pub fn to_json_summary(&self) -> serde_json::Value {
        serde_json::json!({
            "rounds_used": self.rounds_used,
            "rounds_executed": self.rounds_executed,
            "total_messages": self.total_messages,
            "max_message_bits": self.max_message_bits,
            "summarized": self.summarized,
        })
    }

    /// CSV export, one row per executed round: active nodes, messages, max bits.
    pub fn write_round_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "round,active_nodes,messages,max_bits")?;
        for r in &self.per_round {
            writeln!(
                out,
                "{},{},{},{}",
                r.round, r.active_at_start, r.messages, r.max_bits
            )?;
        }
        Ok(())
    }
}

/// Result of a CONGEST bandwidth audit.
#[derive(Clone, Debug)]
pub struct CongestReport {
    pub ok: bool,
    pub budget_bits: u64,
    /// Worst message observed: (round, sender, receiver, bits).
    pub worst: Option<(u64, NodeId, NodeId, u64)>,
}

/// Checks that every message payload fits in `bandwidth_const * ceil(log2 n)`
/// bits, reporting the worst offender.
pub fn assert_congest(trace: &ExecutionTrace, n: usize, bandwidth_const: u64) -> CongestReport {
    assert!(n >= 2, "bandwidth budget needs at least two nodes");
    let log = (usize::BITS - (n - 1).leading_zeros()) as u64; // ceil(log2 n)
    let budget = bandwidth_const * log;
    let worst = trace
        .max_bits_edge
        .map(|(round, s, r)| (round, s, r, trace.max_message_bits));
    CongestReport {
        ok: trace.max_message_bits <= budget,
        budget_bits: budget,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::payload::tag;

    fn trace_with_one_payload(bits_target: u64) -> ExecutionTrace {
        let mut t = ExecutionTrace::new(TraceMode::Full);
        // Build a payload of exactly `bits_target` bits: tag (8) + one int.
        let width = bits_target - 8;
        let value = if width >= 2 { (1i64 << (width - 2)).max(1) } else { 0 };
        let payload = Payload::ints(tag::PING, &[value]);
        assert_eq!(payload.bits(), bits_target);
        t.total_messages = 1;
        t.max_message_bits = payload.bits();
        t.max_bits_edge = Some((1, NodeId(1), NodeId(2)));
        t.rounds_used = 1;
        t.messages.push(MessageRecord {
            round: 1,
            sender: NodeId(1),
            receiver: NodeId(2),
            bits: payload.bits(),
            payload,
        });
        t
    }

    #[test]
    fn empty_trace_passes() {
        let t = ExecutionTrace::new(TraceMode::Full);
        let report = assert_congest(&t, 4, 8);
        assert!(report.ok);
        assert_eq!(report.budget_bits, 16);
    }

    #[test]
    fn oversized_payload_is_reported() {
        let t = trace_with_one_payload(64);
        let report = assert_congest(&t, 4, 8);
        assert!(!report.ok, "64 bits exceed the 16-bit budget for n = 4");
        let (round, s, r, bits) = report.worst.unwrap();
        assert_eq!((round, s, r, bits), (1, NodeId(1), NodeId(2), 64));
    }

    #[test]
    fn budget_uses_ceil_log() {
        let t = trace_with_one_payload(24);
        assert!(assert_congest(&t, 9, 8).ok); // budget 8 * 4 = 32
        assert!(!assert_congest(&t, 2, 8).ok); // budget 8 * 1 = 8
    }
}
