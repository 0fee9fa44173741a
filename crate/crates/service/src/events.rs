//! The event log of a session, derived from its link report alone.

use molmimo::harness::LinkReport;
use molmimo::protocol::BITS_PER_CHAR;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Spray,
    Sample,
    Symbol,
    Char,
    FrameDone,
}

/// One entry of a session's append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    /// Simulated seconds.
    pub t_sim: f64,
    pub data: Value,
}

/// Default cap on voltage samples per receiver and simulated second.
pub const DEFAULT_SAMPLE_CAP: f64 = 10.0;

/// Builds the full, ordered event log for `report`.
///
/// Events are sorted by simulated time, then by kind in causal order
/// (spray, sample, symbol, char, frame_done), then by receiver. A character
/// is stamped at the end of its last slot, so it never precedes the symbol
/// events it was decoded from.
pub fn event_log(report: &LinkReport, sample_cap: f64) -> Vec<Event> {
    let mut raw: Vec<(f64, EventKind, usize, Value)> = Vec::new();

    for rec in &report.schedule {
        raw.push((
            rec.time,
            EventKind::Spray,
            rec.link,
            json!({ "tx": rec.link, "molecules": rec.molecules }),
        ));
    }

    let grid = report.trace_grid;
    let stride = if sample_cap > 0.0 {
        ((1.0 / (grid.dt * sample_cap)) - 1e-9).ceil().max(1.0) as usize
    } else {
        usize::MAX
    };
    for (rx, volts) in report.voltages.iter().enumerate() {
        for (i, v) in volts.iter().enumerate().step_by(stride) {
            raw.push((
                grid.time(i),
                EventKind::Sample,
                rx,
                json!({ "rx": rx, "v": v }),
            ));
        }
    }

    let streams = report.per_receiver.len().max(1);
    for (rx, slots) in report.slots.iter().enumerate() {
        for s in slots {
            raw.push((
                s.end,
                EventKind::Symbol,
                rx,
                json!({
                    "rx": rx,
                    "slot": s.slot,
                    "bit": s.bit,
                    "statistic": s.statistic,
                    "threshold": s.threshold,
                }),
            ));
        }
        let decoded = report
            .per_receiver
            .get(rx)
            .map(String::as_str)
            .unwrap_or("");
        for (p, c) in decoded.chars().enumerate() {
            let last = (p + 1) * BITS_PER_CHAR - 1;
            let Some(end) = slots.get(last).map(|s| s.end) else {
                break;
            };
            raw.push((
                end,
                EventKind::Char,
                rx,
                json!({ "rx": rx, "char": c.to_string(), "position": p * streams + rx }),
            ));
        }
    }

    let t_end = raw
        .iter()
        .map(|e| e.0)
        .fold(report.sim_duration_s, f64::max);
    raw.push((
        t_end,
        EventKind::FrameDone,
        0,
        serde_json::to_value(report).expect("reports serialize"),
    ));

    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    raw.into_iter()
        .enumerate()
        .map(|(seq, (t_sim, kind, _, data))| Event {
            seq: seq as u64,
            kind,
            t_sim,
            data,
        })
        .collect()
}
