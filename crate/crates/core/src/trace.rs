//! Flat event records emitted by the simulation.
//!
//! One record per line, comma-separated:
//! `time_ms,cluster,node,kind,detail,energy_delta_mj`. Times are integer
//! microseconds internally and render as millisecond decimals, so equal runs
//! produce byte-identical text. The detail field never contains commas.

use std::fmt;

/// What a trace record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    FrameSend,
    FrameRecv,
    CtsTimeout,
    SleepEnter,
    SleepExit,
    /// Per-node time-integrated energy for one session, emitted at session
    /// end.
    StateEnergy,
    SessionStart,
    SessionEnd,
    SessionSkipped,
    RoundStart,
    ReportSend,
    ReportForward,
    MatrixBuilt,
    InfoBroadcast,
    InfoDeliver,
    Bit0Send,
    Bit0Recv,
    TableUpdate,
    HeadBroadcast,
    BroadcastRecv,
    BroadcastRelay,
    JoinAnnounce,
    JoinGossip,
    JoinReport,
    ReportRecv,
    LeaveDeferred,
    JoinDeferred,
    EventFailed,
    LinkFail,
    LinkHeal,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TraceKind::FrameSend => "frame_send",
            TraceKind::FrameRecv => "frame_recv",
            TraceKind::CtsTimeout => "cts_timeout",
            TraceKind::SleepEnter => "sleep_enter",
            TraceKind::SleepExit => "sleep_exit",
            TraceKind::StateEnergy => "state_energy",
            TraceKind::SessionStart => "session_start",
            TraceKind::SessionEnd => "session_end",
            TraceKind::SessionSkipped => "session_skipped",
            TraceKind::RoundStart => "round_start",
            TraceKind::ReportSend => "report_send",
            TraceKind::ReportForward => "report_forward",
            TraceKind::MatrixBuilt => "matrix_built",
            TraceKind::InfoBroadcast => "info_broadcast",
            TraceKind::InfoDeliver => "info_deliver",
            TraceKind::Bit0Send => "bit0_send",
            TraceKind::Bit0Recv => "bit0_recv",
            TraceKind::TableUpdate => "table_update",
            TraceKind::HeadBroadcast => "head_broadcast",
            TraceKind::BroadcastRecv => "broadcast_recv",
            TraceKind::BroadcastRelay => "broadcast_relay",
            TraceKind::JoinAnnounce => "join_announce",
            TraceKind::JoinGossip => "join_gossip",
            TraceKind::JoinReport => "join_report",
            TraceKind::ReportRecv => "report_recv",
            TraceKind::LeaveDeferred => "leave_deferred",
            TraceKind::JoinDeferred => "join_deferred",
            TraceKind::EventFailed => "event_failed",
            TraceKind::LinkFail => "link_fail",
            TraceKind::LinkHeal => "link_heal",
        };
        f.write_str(s)
    }
}

/// One simulation event, with the energy it charged to `node`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_us: u64,
    pub cluster: u32,
    /// Member label, or `router`/`controller`/`head`/`-` for non-members.
    pub node: String,
    pub kind: TraceKind,
    pub detail: String,
    pub energy_delta_mj: f64,
}

impl TraceRecord {
    pub fn new(
        time_us: u64,
        cluster: u32,
        node: impl Into<String>,
        kind: TraceKind,
        detail: impl Into<String>,
        energy_delta_mj: f64,
    ) -> Self {
        let detail = detail.into();
        debug_assert!(!detail.contains(','), "trace detail must stay comma-free");
        TraceRecord { time_us, cluster, node: node.into(), kind, detail, energy_delta_mj }
    }

    /// The record as one trace line, without a newline.
    pub fn line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            fmt_ms(self.time_us),
            self.cluster,
            self.node,
            self.kind,
            self.detail,
            fmt_mj(self.energy_delta_mj)
        )
    }
}

/// Renders microseconds as a millisecond decimal with trailing zeros
/// trimmed: `400 -> "0.4"`, `30000 -> "30"`.
pub fn fmt_ms(us: u64) -> String {
    let whole = us / 1000;
    let frac = us % 1000;
    if frac == 0 {
        return whole.to_string();
    }
    let mut s = format!("{whole}.{frac:03}");
    while s.ends_with('0') {
        s.pop();
    }
    s
}

/// Renders an energy delta; plain `Display` is already the shortest
/// round-trip form.
pub fn fmt_mj(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Stable-sorts records by time; equal times keep emission order.
pub fn sort_by_time(records: &mut [TraceRecord]) {
    records.sort_by_key(|r| r.time_us);
}
