//! The sleep/wake scheduling algorithm: priority-ordered sessions,
//! shortest-depth next-hop selection, the per-hop rts/cts/data/ack/ack-conf
//! exchange, sleep-set computation, and link-failure fallback.
//!
//! A session is executed in two passes. A pure planning walk applies the
//! selection rules (minimum depth, lowest-ID tie break, maximum-depth
//! fallback on a failed link, sleeping and departed nodes excluded) to fix
//! the realized route, which also fixes every hop's distance to the
//! destination. The engine then replays the route against the clock, emitting
//! trace records and charging the energy ledger. Sleep durations are
//! `base_slot × hops remaining to the destination` for the hop that triggers
//! them, which keeps every wake-up inside the session and therefore every
//! node awake for the next slot. A node that slept never relays later in the
//! same session; the planning walk excludes it regardless of its wake time.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::control_plane::CompleteInfoTable;
use crate::energy::{charge, charge_control, ChargeState, ControlEvent, EnergyLedger, EnergyModel};
use crate::topology::NodeId;
use crate::trace::{fmt_ms, TraceKind, TraceRecord};

/// The four states a node can occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeMode {
    Listening,
    Transmitting,
    Receiving,
    Sleeping,
}

/// A node's current state; `wake_at_us` is present exactly while sleeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeState {
    pub mode: NodeMode,
    pub wake_at_us: Option<u64>,
}

/// Per-round main-sender order. Round 0 is ascending IDs; later rounds are
/// seeded permutations. The slot threshold is fixed at configuration time
/// and never changes across rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrioritySchedule {
    pub round: u32,
    pub order: Vec<NodeId>,
    pub slot_threshold_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("cannot schedule an empty cluster")]
    EmptyCluster,
    #[error("no next-hop candidate from {current}")]
    NoCandidate { current: NodeId },
}

/// Builds the main-sender order for one round.
pub fn build_priority_schedule(
    cluster_ids: &[NodeId],
    round: u32,
    slot_threshold_us: u64,
    rng: &mut impl Rng,
) -> Result<PrioritySchedule, SchedulerError> {
    if cluster_ids.is_empty() {
        return Err(SchedulerError::EmptyCluster);
    }
    let mut order: Vec<NodeId> = cluster_ids.to_vec();
    order.sort();
    if round > 0 {
        order.shuffle(rng);
    }
    Ok(PrioritySchedule { round, order, slot_threshold_us })
}

/// Control and data frame kinds exchanged during scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
    AckConf,
    Bit0,
    InfoBroadcast,
}

impl FrameKind {
    fn name(self) -> &'static str {
        match self {
            FrameKind::Rts => "rts",
            FrameKind::Cts => "cts",
            FrameKind::Data => "data",
            FrameKind::Ack => "ack",
            FrameKind::AckConf => "ackconf",
            FrameKind::Bit0 => "bit0",
            FrameKind::InfoBroadcast => "info",
        }
    }
}

/// One frame on the air. Data frames carry all four address fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub main_source: NodeId,
    pub current_source: NodeId,
    pub current_destination: NodeId,
    pub final_destination: NodeId,
    /// Data frames only.
    pub payload_units: Option<u32>,
}

/// Which links are currently down. Links are undirected.
#[derive(Debug, Clone, Default)]
pub struct LinkState {
    failed: BTreeSet<(NodeId, NodeId)>,
}

impl LinkState {
    pub fn new() -> Self {
        LinkState::default()
    }

    fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn fail(&mut self, a: NodeId, b: NodeId) {
        self.failed.insert(Self::key(a, b));
    }

    pub fn heal(&mut self, a: NodeId, b: NodeId) {
        self.failed.remove(&Self::key(a, b));
    }

    pub fn is_failed(&self, a: NodeId, b: NodeId) -> bool {
        self.failed.contains(&Self::key(a, b))
    }
}

/// Frame durations and sleep granularity, microseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTiming {
    pub rts_us: u64,
    pub cts_us: u64,
    pub ack_us: u64,
    pub ackconf_us: u64,
    /// Data frame duration per payload unit.
    pub data_unit_us: u64,
    pub payload_units: u32,
    /// Extra wait beyond one cts duration before a timeout is declared.
    pub cts_guard_us: u64,
    /// Sleep durations are whole multiples of this.
    pub base_slot_us: u64,
}

impl Default for SessionTiming {
    fn default() -> Self {
        SessionTiming {
            rts_us: 200,
            cts_us: 200,
            ack_us: 200,
            ackconf_us: 200,
            data_unit_us: 1000,
            payload_units: 1,
            cts_guard_us: 100,
            base_slot_us: 2000,
        }
    }
}

impl SessionTiming {
    pub fn data_us(&self) -> u64 {
        self.data_unit_us * self.payload_units as u64
    }
}

/// Inputs to next-hop selection.
pub struct SelectContext<'a> {
    pub info: &'a CompleteInfoTable,
    pub link_state: &'a LinkState,
    /// Nodes asleep (or already slept) this session.
    pub sleeping: &'a BTreeSet<NodeId>,
    /// Departed nodes; never candidates.
    pub bit0: &'a BTreeSet<NodeId>,
}

/// Outcome of next-hop selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NextHop {
    pub node: NodeId,
    pub used_fallback: bool,
    /// The shortest-depth candidate skipped because its link is down.
    pub failed_primary: Option<NodeId>,
}

/// Picks the next hop from `current`: the minimum-depth neighbor (lowest ID
/// on ties) among candidates, excluding the previous hop, departed nodes,
/// and sleeping nodes. When the chosen link is down, the maximum-depth
/// candidate is returned instead with `used_fallback` set.
pub fn select_next_hop(
    current: NodeId,
    previous_hop: Option<NodeId>,
    ctx: &SelectContext,
) -> Result<NextHop, SchedulerError> {
    let record = ctx
        .info
        .record(current)
        .ok_or(SchedulerError::NoCandidate { current })?;
    let candidates: Vec<(NodeId, u8)> = record
        .neighbor_ids
        .iter()
        .zip(&record.depths)
        .map(|(n, d)| (*n, d.0))
        .filter(|(n, _)| {
            Some(*n) != previous_hop
                && !ctx.bit0.contains(n)
                && !ctx.sleeping.contains(n)
                && ctx.info.record(*n).is_some()
        })
        .collect();
    if candidates.is_empty() {
        return Err(SchedulerError::NoCandidate { current });
    }
    let primary = candidates
        .iter()
        .copied()
        .min_by_key(|(n, d)| (*d, *n))
        .expect("nonempty");
    if !ctx.link_state.is_failed(current, primary.0) {
        return Ok(NextHop { node: primary.0, used_fallback: false, failed_primary: None });
    }
    // Longest-depth fallback (lowest ID on ties).
    let max_depth = candidates.iter().map(|(_, d)| *d).max().expect("nonempty");
    let fallback = candidates
        .iter()
        .copied()
        .filter(|(_, d)| *d == max_depth)
        .min_by_key(|(n, _)| *n)
        .expect("nonempty");
    Ok(NextHop { node: fallback.0, used_fallback: true, failed_primary: Some(primary.0) })
}

/// Inputs to sleep-set computation for one successful hop.
pub struct SleepSetContext<'a> {
    pub info: &'a CompleteInfoTable,
    pub previous_hop: Option<NodeId>,
    pub final_destination: NodeId,
    pub sleeping: &'a BTreeSet<NodeId>,
    pub bit0: &'a BTreeSet<NodeId>,
    /// Hops from the hop's sender to the destination along the realized
    /// path, counting the current hop.
    pub hops_remaining: u32,
    pub base_slot_us: u64,
}

fn sleep_candidates(
    sender: NodeId,
    receiver: NodeId,
    info: &CompleteInfoTable,
    previous_hop: Option<NodeId>,
    final_destination: NodeId,
    sleeping: &BTreeSet<NodeId>,
    bit0: &BTreeSet<NodeId>,
) -> Vec<NodeId> {
    let mut out = Vec::new();
    if let Some(rec) = info.record(sender) {
        // The sender's non-selected side.
        for &n in &rec.neighbor_ids {
            if n != receiver
                && Some(n) != previous_hop
                && n != final_destination
                && !sleeping.contains(&n)
                && !bit0.contains(&n)
            {
                out.push(n);
            }
        }
    }
    if receiver == final_destination {
        // Delivery hop: the destination's other neighbors have nothing left
        // to overhear.
        if let Some(rec) = info.record(receiver) {
            for &n in &rec.neighbor_ids {
                if n != sender && !sleeping.contains(&n) && !bit0.contains(&n) && !out.contains(&n)
                {
                    out.push(n);
                }
            }
        }
    }
    out
}

/// Nodes put to sleep by a successful hop, with their durations.
///
/// The set is the sender's remaining neighbors (the non-selected,
/// highest-depth side) and, on the delivery hop, the receiver's other
/// neighbors. Already-sleeping and departed nodes are skipped, as is the
/// final destination.
pub fn compute_sleep_set(
    sender: NodeId,
    receiver: NodeId,
    ctx: &SleepSetContext,
) -> Vec<(NodeId, u64)> {
    let duration = ctx.base_slot_us * ctx.hops_remaining.max(1) as u64;
    sleep_candidates(
        sender,
        receiver,
        ctx.info,
        ctx.previous_hop,
        ctx.final_destination,
        ctx.sleeping,
        ctx.bit0,
    )
    .into_iter()
    .map(|n| (n, duration))
    .collect()
}

/// How a hop attempt ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeOutcome {
    Ok,
    /// No cts arrived: the link is down (first attempt).
    CtsTimeout,
    /// The fallback attempt timed out too; the session aborts.
    FailedBoth,
}

/// Result of one hop attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopOutcome {
    pub handshake: HandshakeOutcome,
    /// Bystanders put to sleep by this hop; these were its idle listeners.
    pub slept: u32,
}

/// One attempted hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopRecord {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub handshake: HandshakeOutcome,
    /// Bystanders put to sleep by this hop.
    pub slept: u32,
}

/// One node's sleep span inside a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SleepInterval {
    pub node: NodeId,
    pub start_us: u64,
    pub duration_us: u64,
}

impl SleepInterval {
    pub fn wake_us(&self) -> u64 {
        self.start_us + self.duration_us
    }
}

/// Everything a finished session reports.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub cluster_number: u32,
    pub main_sender: NodeId,
    pub final_destination: NodeId,
    /// Realized node sequence, starting at the main sender; ends at the
    /// final destination iff delivered.
    pub path: Vec<NodeId>,
    pub hop_outcomes: Vec<HopRecord>,
    pub sleep_intervals: Vec<SleepInterval>,
    pub delivered: bool,
    pub start_us: u64,
    /// When the delivery hop's ack-conf landed.
    pub delivery_us: Option<u64>,
    /// When the session went quiet: delivery plus all wake-ups.
    pub end_us: u64,
}

impl SessionResult {
    pub fn sleepers(&self) -> BTreeSet<NodeId> {
        self.sleep_intervals.iter().map(|s| s.node).collect()
    }
}

/// Immutable context shared by every hop of a session.
pub struct SessionEnv<'a> {
    pub cluster_number: u32,
    pub labels: &'a BTreeMap<NodeId, String>,
    pub info: &'a CompleteInfoTable,
    pub link_state: &'a LinkState,
    pub bit0: &'a BTreeSet<NodeId>,
    pub timing: &'a SessionTiming,
    pub model: &'a EnergyModel,
}

impl SessionEnv<'_> {
    fn label(&self, id: NodeId) -> String {
        self.labels.get(&id).cloned().unwrap_or_else(|| id.to_string())
    }
}

struct MemberState {
    state: NodeState,
    since_us: u64,
    tx_us: u64,
    rx_us: u64,
    listen_us: u64,
    sleep_us: u64,
    /// Set for nodes that entered the session already asleep: their current
    /// sleep span was charged by the session that initiated it.
    precharged: bool,
    slept_this_session: bool,
}

impl MemberState {
    fn new(start_us: u64) -> Self {
        MemberState {
            state: NodeState { mode: NodeMode::Listening, wake_at_us: None },
            since_us: start_us,
            tx_us: 0,
            rx_us: 0,
            listen_us: 0,
            sleep_us: 0,
            precharged: false,
            slept_this_session: false,
        }
    }
}

/// Drives one session's hops against the clock, the trace, and the ledger.
pub struct SessionEngine<'a, 'b> {
    env: &'a SessionEnv<'a>,
    main_sender: NodeId,
    final_destination: NodeId,
    now_us: u64,
    members: BTreeMap<NodeId, MemberState>,
    sleeping: BTreeSet<NodeId>,
    sleep_intervals: Vec<SleepInterval>,
    ledger: &'b mut EnergyLedger,
    trace: &'b mut Vec<TraceRecord>,
}

impl<'a, 'b> SessionEngine<'a, 'b> {
    /// Starts a session at `start_us`. `initial_sleeping` maps nodes still
    /// asleep from a previous session to their wake times.
    pub fn new(
        env: &'a SessionEnv<'a>,
        main_sender: NodeId,
        final_destination: NodeId,
        start_us: u64,
        initial_sleeping: &BTreeMap<NodeId, u64>,
        ledger: &'b mut EnergyLedger,
        trace: &'b mut Vec<TraceRecord>,
    ) -> Self {
        let mut members = BTreeMap::new();
        let mut sleeping = BTreeSet::new();
        for id in env.info.member_ids() {
            if env.bit0.contains(&id) {
                continue;
            }
            let mut st = MemberState::new(start_us);
            if let Some(&wake) = initial_sleeping.get(&id) {
                if wake > start_us {
                    st.state = NodeState { mode: NodeMode::Sleeping, wake_at_us: Some(wake) };
                    st.precharged = true;
                    sleeping.insert(id);
                }
            }
            members.insert(id, st);
        }
        SessionEngine {
            env,
            main_sender,
            final_destination,
            now_us: start_us,
            members,
            sleeping,
            sleep_intervals: Vec::new(),
            ledger,
            trace,
        }
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    fn transition(&mut self, node: NodeId, mode: NodeMode, at_us: u64) {
        let st = self.members.get_mut(&node).expect("member tracked");
        debug_assert!(at_us >= st.since_us);
        let span = at_us - st.since_us;
        match st.state.mode {
            NodeMode::Transmitting => st.tx_us += span,
            NodeMode::Receiving => st.rx_us += span,
            NodeMode::Listening => st.listen_us += span,
            NodeMode::Sleeping => {
                if st.precharged {
                    st.precharged = false;
                } else {
                    st.sleep_us += span;
                }
            }
        }
        st.state =
            NodeState { mode, wake_at_us: if mode == NodeMode::Sleeping { st.state.wake_at_us } else { None } };
        st.since_us = at_us;
    }

    fn emit(&mut self, node: NodeId, kind: TraceKind, detail: String, delta: f64) {
        let label = self.env.label(node);
        self.trace.push(TraceRecord::new(
            self.now_us,
            self.env.cluster_number,
            label,
            kind,
            detail,
            delta,
        ));
    }

    fn control_event(kind: FrameKind) -> ControlEvent {
        match kind {
            FrameKind::Rts => ControlEvent::Rts,
            FrameKind::Cts => ControlEvent::Cts,
            FrameKind::Data => ControlEvent::Data,
            FrameKind::Ack => ControlEvent::Ack,
            FrameKind::AckConf => ControlEvent::AckConf,
            FrameKind::Bit0 => ControlEvent::Bit0,
            FrameKind::InfoBroadcast => ControlEvent::HeadBroadcast,
        }
    }

    fn frame_duration(&self, kind: FrameKind) -> u64 {
        let t = self.env.timing;
        match kind {
            FrameKind::Rts => t.rts_us,
            FrameKind::Cts => t.cts_us,
            FrameKind::Data => t.data_us(),
            FrameKind::Ack => t.ack_us,
            FrameKind::AckConf => t.ackconf_us,
            FrameKind::Bit0 | FrameKind::InfoBroadcast => 0,
        }
    }

    fn send_frame(&mut self, frame: Frame) {
        let from = frame.current_source;
        let to = frame.current_destination;
        let duration = self.frame_duration(frame.kind);
        let delta = charge_control(self.ledger, from, Self::control_event(frame.kind), self.env.model);
        let detail = match frame.kind {
            FrameKind::Data => format!(
                "data->{} main={} src={} dst={} final={}",
                self.env.label(to),
                self.env.label(frame.main_source),
                self.env.label(from),
                self.env.label(to),
                self.env.label(frame.final_destination),
            ),
            kind => format!("{}->{}", kind.name(), self.env.label(to)),
        };
        self.emit(from, TraceKind::FrameSend, detail, delta);
        self.transition(from, NodeMode::Transmitting, self.now_us);
        self.transition(to, NodeMode::Receiving, self.now_us);
        self.now_us += duration;
        self.transition(from, NodeMode::Listening, self.now_us);
        self.transition(to, NodeMode::Listening, self.now_us);
        let detail = format!("{}<-{}", frame.kind.name(), self.env.label(from));
        self.emit(to, TraceKind::FrameRecv, detail, 0.0);
    }

    /// An rts into a dead link: the frame is sent, no cts ever arrives, and
    /// the sender waits out one cts duration plus the guard.
    fn send_rts_lost(&mut self, from: NodeId, to: NodeId) {
        let delta = charge_control(self.ledger, from, ControlEvent::Rts, self.env.model);
        let detail = format!("rts->{}", self.env.label(to));
        self.emit(from, TraceKind::FrameSend, detail, delta);
        self.transition(from, NodeMode::Transmitting, self.now_us);
        self.now_us += self.env.timing.rts_us;
        self.transition(from, NodeMode::Listening, self.now_us);
        self.now_us += self.env.timing.cts_us + self.env.timing.cts_guard_us;
        let detail = format!("waited_for={}", self.env.label(to));
        self.emit(from, TraceKind::CtsTimeout, detail, 0.0);
    }

    fn sleep(&mut self, node: NodeId, duration_us: u64) {
        let detail = format!("duration={}ms", fmt_ms(duration_us));
        self.emit(node, TraceKind::SleepEnter, detail, 0.0);
        self.transition(node, NodeMode::Sleeping, self.now_us);
        self.members.get_mut(&node).expect("member").state.wake_at_us =
            Some(self.now_us + duration_us);
        self.members.get_mut(&node).expect("member").slept_this_session = true;
        self.sleeping.insert(node);
        self.sleep_intervals.push(SleepInterval {
            node,
            start_us: self.now_us,
            duration_us,
        });
    }

    fn apply_sleep_set(
        &mut self,
        sender: NodeId,
        receiver: NodeId,
        previous_hop: Option<NodeId>,
        hops_remaining: u32,
    ) -> u32 {
        let set = compute_sleep_set(
            sender,
            receiver,
            &SleepSetContext {
                info: self.env.info,
                previous_hop,
                final_destination: self.final_destination,
                sleeping: &self.sleeping,
                bit0: self.env.bit0,
                hops_remaining,
                base_slot_us: self.env.timing.base_slot_us,
            },
        );
        let count = set.len() as u32;
        for (node, duration) in set {
            self.sleep(node, duration);
        }
        count
    }

    /// Executes one hop attempt: the rts/cts handshake, the bystander sleep
    /// set, the data/ack/ack-conf exchange, and the sender's own sleep when
    /// the receiver is not the final destination. A dead link surfaces as a
    /// cts timeout.
    pub fn perform_hop(
        &mut self,
        sender: NodeId,
        receiver: NodeId,
        previous_hop: Option<NodeId>,
        hops_remaining: u32,
    ) -> HopOutcome {
        if self.env.link_state.is_failed(sender, receiver) {
            self.send_rts_lost(sender, receiver);
            return HopOutcome { handshake: HandshakeOutcome::CtsTimeout, slept: 0 };
        }
        let (main_source, final_destination) = (self.main_sender, self.final_destination);
        let payload = self.env.timing.payload_units;
        let frame = move |kind, src, dst| Frame {
            kind,
            main_source,
            current_source: src,
            current_destination: dst,
            final_destination,
            payload_units: (kind == FrameKind::Data).then_some(payload),
        };
        self.send_frame(frame(FrameKind::Rts, sender, receiver));
        self.send_frame(frame(FrameKind::Cts, receiver, sender));
        let slept = self.apply_sleep_set(sender, receiver, previous_hop, hops_remaining);
        self.send_frame(frame(FrameKind::Data, sender, receiver));
        self.send_frame(frame(FrameKind::Ack, receiver, sender));
        self.send_frame(frame(FrameKind::AckConf, sender, receiver));
        if receiver != self.final_destination {
            let duration = self.env.timing.base_slot_us * hops_remaining.max(1) as u64;
            self.sleep(sender, duration);
        }
        HopOutcome { handshake: HandshakeOutcome::Ok, slept }
    }

    /// Wakes every sleeper, closes all state intervals, charges the ledger,
    /// and returns the session end time.
    fn finish(&mut self) -> u64 {
        let activity_end = self.now_us;
        let wake_max = self
            .members
            .values()
            .filter_map(|m| m.state.wake_at_us)
            .max()
            .unwrap_or(activity_end);
        let end = activity_end.max(wake_max);

        let ids: Vec<NodeId> = self.members.keys().copied().collect();
        for id in &ids {
            let (wake, precharged, slept) = {
                let m = &self.members[id];
                (m.state.wake_at_us, m.precharged, m.slept_this_session)
            };
            if let Some(wake) = wake {
                self.transition(*id, NodeMode::Listening, wake.min(end));
                if !precharged && slept {
                    let saved = self.now_us;
                    self.now_us = wake.min(end);
                    let detail = "awake".to_string();
                    self.emit(*id, TraceKind::SleepExit, detail, 0.0);
                    self.now_us = saved;
                }
            }
            self.transition(*id, NodeMode::Listening, end);
        }

        self.now_us = end;
        for id in &ids {
            let (tx, rx, listen, sleep) = {
                let m = &self.members[id];
                (m.tx_us, m.rx_us, m.listen_us, m.sleep_us)
            };
            let mut delta = 0.0;
            for (state, us) in [
                (ChargeState::Transmit, tx),
                (ChargeState::Receive, rx),
                (ChargeState::Listen, listen),
                (ChargeState::Sleep, sleep),
            ] {
                delta += charge(self.ledger, *id, state, us as f64 / 1000.0, self.env.model)
                    .expect("non-negative duration");
            }
            let detail = format!(
                "tx={}ms rx={}ms listen={}ms sleep={}ms",
                fmt_ms(tx),
                fmt_ms(rx),
                fmt_ms(listen),
                fmt_ms(sleep)
            );
            self.emit(*id, TraceKind::StateEnergy, detail, delta);
        }
        end
    }
}

#[derive(Debug, Clone, Copy)]
struct PlanStep {
    sender: NodeId,
    receiver: NodeId,
    failed_primary: Option<NodeId>,
    /// The fallback link is down too: this attempt times out and the
    /// session aborts.
    terminal: bool,
}

struct RoutePlan {
    steps: Vec<PlanStep>,
    delivered: bool,
}

/// Pure selection walk fixing the realized route before execution. Sleep
/// effects are simulated hop by hop so a node that sleeps is never selected
/// later.
fn plan_route(
    env: &SessionEnv,
    main_sender: NodeId,
    final_destination: NodeId,
    initially_sleeping: &BTreeSet<NodeId>,
) -> RoutePlan {
    let mut sleeping = initially_sleeping.clone();
    let mut steps = Vec::new();
    let mut current = main_sender;
    let mut previous: Option<NodeId> = None;
    loop {
        let ctx = SelectContext {
            info: env.info,
            link_state: env.link_state,
            sleeping: &sleeping,
            bit0: env.bit0,
        };
        let next = match select_next_hop(current, previous, &ctx) {
            Ok(n) => n,
            Err(_) => return RoutePlan { steps, delivered: false },
        };
        if next.used_fallback && env.link_state.is_failed(current, next.node) {
            steps.push(PlanStep {
                sender: current,
                receiver: next.node,
                failed_primary: next.failed_primary,
                terminal: true,
            });
            return RoutePlan { steps, delivered: false };
        }
        steps.push(PlanStep {
            sender: current,
            receiver: next.node,
            failed_primary: next.failed_primary,
            terminal: false,
        });
        for n in sleep_candidates(
            current,
            next.node,
            env.info,
            previous,
            final_destination,
            &sleeping,
            env.bit0,
        ) {
            sleeping.insert(n);
        }
        if next.node != final_destination {
            sleeping.insert(current);
        }
        previous = Some(current);
        current = next.node;
        if current == final_destination {
            return RoutePlan { steps, delivered: true };
        }
    }
}

/// Runs one complete session from the main sender toward the final
/// destination: next-hop selection, per-hop exchanges, sleep scheduling, and
/// the closing wake-ups. Protocol failures end as an undelivered result,
/// never an error.
#[allow(clippy::too_many_arguments)]
pub fn run_session(
    env: &SessionEnv,
    main_sender: NodeId,
    final_destination: NodeId,
    start_us: u64,
    initial_sleeping: &BTreeMap<NodeId, u64>,
    ledger: &mut EnergyLedger,
    trace: &mut Vec<TraceRecord>,
) -> SessionResult {
    let trace_base = trace.len();
    let initially_sleeping: BTreeSet<NodeId> = initial_sleeping
        .iter()
        .filter(|(_, wake)| **wake > start_us)
        .map(|(id, _)| *id)
        .collect();
    let plan = plan_route(env, main_sender, final_destination, &initially_sleeping);
    let total_hops = plan.steps.iter().filter(|s| !s.terminal).count() as u32;

    let mut engine = SessionEngine::new(
        env,
        main_sender,
        final_destination,
        start_us,
        initial_sleeping,
        ledger,
        trace,
    );
    engine.emit(
        main_sender,
        TraceKind::SessionStart,
        format!("to={}", env.label(final_destination)),
        0.0,
    );

    let mut hop_outcomes = Vec::new();
    let mut path = vec![main_sender];
    let mut previous: Option<NodeId> = None;
    let mut hop_index = 0u32;
    for step in &plan.steps {
        if let Some(primary) = step.failed_primary {
            engine.send_rts_lost(step.sender, primary);
            hop_outcomes.push(HopRecord {
                sender: step.sender,
                receiver: primary,
                handshake: HandshakeOutcome::CtsTimeout,
                slept: 0,
            });
        }
        if step.terminal {
            engine.send_rts_lost(step.sender, step.receiver);
            hop_outcomes.push(HopRecord {
                sender: step.sender,
                receiver: step.receiver,
                handshake: HandshakeOutcome::FailedBoth,
                slept: 0,
            });
            break;
        }
        let hops_remaining = total_hops - hop_index;
        let outcome = engine.perform_hop(step.sender, step.receiver, previous, hops_remaining);
        debug_assert_eq!(outcome.handshake, HandshakeOutcome::Ok, "planned hop must be healthy");
        hop_outcomes.push(HopRecord {
            sender: step.sender,
            receiver: step.receiver,
            handshake: outcome.handshake,
            slept: outcome.slept,
        });
        path.push(step.receiver);
        previous = Some(step.sender);
        hop_index += 1;
    }

    let delivery_us = plan.delivered.then_some(engine.now_us());
    let sleep_intervals = engine.sleep_intervals.clone();
    let end_us = engine.finish();
    let sleepers = sleep_intervals.len();
    engine.emit(
        main_sender,
        TraceKind::SessionEnd,
        format!(
            "path={} delivered={} sleepers={}",
            path.iter().map(|id| env.label(*id)).collect::<Vec<_>>().join("-"),
            plan.delivered,
            sleepers
        ),
        0.0,
    );
    crate::trace::sort_by_time(&mut trace[trace_base..]);

    SessionResult {
        cluster_number: env.cluster_number,
        main_sender,
        final_destination,
        path,
        hop_outcomes,
        sleep_intervals,
        delivered: plan.delivered,
        start_us,
        delivery_us,
        end_us,
    }
}
