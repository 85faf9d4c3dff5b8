//! The deterministic event loop: setup phase, slot-gridded sessions,
//! membership events in head windows, and the summary.
//!
//! Each cluster advances on its own fixed slot grid. A round is one slot per
//! member in the current priority order, followed in dynamic mode by the
//! cluster head's window. A declared session runs at the start of its
//! source's next slot at or after its declared time. Link events apply at
//! slot boundaries; leave/join events are handled only inside head windows,
//! with requests landing elsewhere deferred to the next window. Clusters
//! never interact, so they are simulated one after another and their traces
//! merged by time; all randomness flows from the scenario seed through one
//! ChaCha stream per cluster.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adjsim_core::control_plane::{
    broadcast_complete_info, build_adjacency_matrix, converge_cast, derive_complete_info,
    forward_to_controller, CompleteInfoTable, RouterTable,
};
use adjsim_core::dynamics::{
    announce_join, apply_join, apply_leave, build_join_reports, request_leave, Bit0Message,
    ClusterHeadTable, DynamicsError, HeadWindow, Mode,
};
use adjsim_core::energy::{
    charge_control, join_session_power, leave_session_power, proposed_slot_cost,
    static_session_power, ControlEvent, EnergyLedger, NodeEnergy, StateIndicators,
};
use adjsim_core::scheduler::{
    build_priority_schedule, run_session, LinkState, SessionEnv, SessionResult,
};
use adjsim_core::topology::{discover_neighbors, ClusterTopology, NodeId};
use adjsim_core::trace::{fmt_mj, fmt_ms, sort_by_time, TraceKind, TraceRecord};

use crate::scenario::{EventKind, EventSpec, JoinAttach, Scenario, SessionSpec};

/// One finished session in the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLine {
    pub cluster: u32,
    pub src_label: String,
    pub dst_label: String,
    pub path_labels: Vec<String>,
    pub delivered: bool,
    pub sleepers: usize,
    pub start_us: u64,
    pub end_us: u64,
}

/// One node's ledger row.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEnergyLine {
    pub cluster: u32,
    pub label: String,
    pub energy: NodeEnergy,
}

/// Run results beyond the trace.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub sessions: Vec<SessionLine>,
    pub skipped_sessions: usize,
    pub per_node: Vec<NodeEnergyLine>,
    /// Closed-form equation values reported next to the ledger.
    pub analytic: Vec<String>,
    pub warnings: Vec<String>,
    pub total_mj: f64,
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let delivered = self.sessions.iter().filter(|s| s.delivered).count();
        writeln!(
            f,
            "sessions: {} run, {} delivered, {} undelivered, {} skipped",
            self.sessions.len(),
            delivered,
            self.sessions.len() - delivered,
            self.skipped_sessions
        )?;
        for (i, s) in self.sessions.iter().enumerate() {
            writeln!(
                f,
                "  [{}] cluster {} {}->{} path={} delivered={} sleepers={} start={}ms end={}ms",
                i + 1,
                s.cluster,
                s.src_label,
                s.dst_label,
                s.path_labels.join("-"),
                s.delivered,
                s.sleepers,
                fmt_ms(s.start_us),
                fmt_ms(s.end_us)
            )?;
        }
        writeln!(f, "energy per node (mJ):")?;
        let mut rows = vec![vec![
            "  cluster".to_string(),
            "node".to_string(),
            "transmit".to_string(),
            "receive".to_string(),
            "listen".to_string(),
            "sleep".to_string(),
            "control".to_string(),
            "total".to_string(),
        ]];
        for line in &self.per_node {
            let e = &line.energy;
            rows.push(vec![
                format!("  {}", line.cluster),
                line.label.clone(),
                fmt_mj(e.transmit_mj),
                fmt_mj(e.receive_mj),
                fmt_mj(e.listen_mj),
                fmt_mj(e.sleep_mj),
                fmt_mj(e.control_mj),
                fmt_mj(e.total_mj()),
            ]);
        }
        f.write_str(&crate::tables::render_rows(&rows))?;
        writeln!(f, "total energy: {} mJ", fmt_mj(self.total_mj))?;
        if !self.analytic.is_empty() {
            writeln!(f, "analytic cross-checks (mJ):")?;
            for line in &self.analytic {
                writeln!(f, "  {line}")?;
            }
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Trace plus summary of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: Summary,
}

/// The per-cluster routing/membership state.
enum ClusterInfo {
    Static(CompleteInfoTable),
    Dynamic(ClusterHeadTable),
}

impl ClusterInfo {
    fn routing_table(&self) -> CompleteInfoTable {
        match self {
            ClusterInfo::Static(t) => t.clone(),
            ClusterInfo::Dynamic(h) => h.as_complete_info(),
        }
    }

    fn member_ids(&self) -> Vec<NodeId> {
        match self {
            ClusterInfo::Static(t) => t.member_ids(),
            ClusterInfo::Dynamic(h) => h.member_ids(),
        }
    }
}

struct ClusterSim<'a> {
    scenario: &'a Scenario,
    topology: &'a ClusterTopology,
    number: u32,
    labels: BTreeMap<NodeId, String>,
    info: ClusterInfo,
    link_state: LinkState,
    bit0: BTreeSet<NodeId>,
    sleeping: BTreeMap<NodeId, u64>,
    rng: ChaCha8Rng,
    cursor_us: u64,
    round: u32,
    sessions: VecDeque<SessionSpec>,
    link_events: VecDeque<EventSpec>,
    member_events: VecDeque<EventSpec>,
    trace: Vec<TraceRecord>,
    ledger: EnergyLedger,
    results: Vec<SessionLine>,
    analytic: Vec<String>,
    warnings: Vec<String>,
    skipped: usize,
}

impl<'a> ClusterSim<'a> {
    fn label(&self, id: NodeId) -> String {
        self.labels.get(&id).cloned().unwrap_or_else(|| id.to_string())
    }

    fn emit(&mut self, t_us: u64, node: &str, kind: TraceKind, detail: String, delta: f64) {
        self.trace.push(TraceRecord::new(t_us, self.number, node, kind, detail, delta));
    }

    fn members(&self) -> Vec<NodeId> {
        self.info.member_ids()
    }

    fn has_work(&self) -> bool {
        !self.sessions.is_empty() || !self.link_events.is_empty() || !self.member_events.is_empty()
    }

    fn apply_link_events_due(&mut self, now_us: u64) {
        while let Some(ev) = self.link_events.front() {
            if ev.t_us > now_us {
                break;
            }
            let ev = self.link_events.pop_front().expect("peeked");
            match ev.kind {
                EventKind::LinkFail { a, b } => {
                    self.link_state.fail(a, b);
                    let detail = format!("{}-{}", self.label(a), self.label(b));
                    self.emit(ev.t_us, "-", TraceKind::LinkFail, detail, 0.0);
                }
                EventKind::LinkHeal { a, b } => {
                    self.link_state.heal(a, b);
                    let detail = format!("{}-{}", self.label(a), self.label(b));
                    self.emit(ev.t_us, "-", TraceKind::LinkHeal, detail, 0.0);
                }
                _ => unreachable!("only link events queued here"),
            }
        }
    }

    /// Drops pending sessions whose source already left the cluster.
    fn skip_dead_sessions(&mut self, now_us: u64) {
        let members: BTreeSet<NodeId> = self.members().into_iter().collect();
        let mut keep = VecDeque::new();
        while let Some(sess) = self.sessions.pop_front() {
            if sess.t_us <= now_us && !members.contains(&sess.src) {
                let detail = format!("{}->{} source_departed", sess.src_label, sess.dst_label);
                self.emit(now_us, &sess.src_label.clone(), TraceKind::SessionSkipped, detail, 0.0);
                self.skipped += 1;
            } else {
                keep.push_back(sess);
            }
        }
        self.sessions = keep;
    }

    fn next_session_for(&mut self, owner: NodeId, slot_start: u64) -> Option<SessionSpec> {
        let pos = self
            .sessions
            .iter()
            .position(|s| s.src == owner && s.t_us <= slot_start)?;
        self.sessions.remove(pos)
    }

    fn run_one_session(&mut self, sess: SessionSpec, slot_start: u64) {
        // The owner may still be finishing a sleep from an overrunning
        // earlier session.
        let mut start = slot_start;
        if let Some(&wake) = self.sleeping.get(&sess.src) {
            start = start.max(wake);
        }
        self.sleeping.retain(|_, wake| *wake > start);

        let info = self.info.routing_table();
        let env = SessionEnv {
            cluster_number: self.number,
            labels: &self.labels,
            info: &info,
            link_state: &self.link_state,
            bit0: &self.bit0,
            timing: &self.scenario.schedule.timing,
            model: &self.scenario.energy,
        };
        let result = run_session(
            &env,
            sess.src,
            sess.dst,
            start,
            &self.sleeping.clone(),
            &mut self.ledger,
            &mut self.trace,
        );
        for s in &result.sleep_intervals {
            self.sleeping.insert(s.node, s.wake_us());
        }
        if result.end_us > slot_start + self.scenario.schedule.slot_threshold_us {
            self.warnings.push(format!(
                "cluster {}: session {}->{} overran its slot (ended {}ms, slot ends {}ms)",
                self.number,
                sess.src_label,
                sess.dst_label,
                fmt_ms(result.end_us),
                fmt_ms(slot_start + self.scenario.schedule.slot_threshold_us)
            ));
        }
        self.record_session_analytics(&sess, &result);
        self.results.push(SessionLine {
            cluster: self.number,
            src_label: sess.src_label,
            dst_label: sess.dst_label,
            path_labels: result.path.iter().map(|id| self.label(*id)).collect(),
            delivered: result.delivered,
            sleepers: result.sleepers().len(),
            start_us: result.start_us,
            end_us: result.end_us,
        });
    }

    fn record_session_analytics(&mut self, sess: &SessionSpec, result: &SessionResult) {
        let m = &self.scenario.energy;
        let tag = format!("cluster {} session {}->{}", self.number, sess.src_label, sess.dst_label);
        if result.delivered {
            let k = result.path.len() as u32;
            let j = self.members().len() as u32;
            match static_session_power(k, j, m) {
                Ok(v) => self
                    .analytic
                    .push(format!("{tag}: static equation k={k}: {}", fmt_mj(v))),
                Err(_) => self
                    .analytic
                    .push(format!("{tag}: static equation k={k}: n/a (k is not below {j})")),
            }
        }
        for hop in result.hop_outcomes.iter().filter(|h| {
            h.handshake == adjsim_core::scheduler::HandshakeOutcome::Ok
        }) {
            let k = 1 + hop.slept;
            let ind = StateIndicators {
                transmitting: true,
                receiving: true,
                listening: hop.slept > 0,
                sleeping: false,
            };
            let v = proposed_slot_cost(k, ind, m);
            self.analytic.push(format!(
                "{tag}: hop {}->{} slot equation k={k}: {}",
                self.label(hop.sender),
                self.label(hop.receiver),
                fmt_mj(v)
            ));
        }
    }

    /// Handles all leave/join events due before this window closes. Requests
    /// arriving outside the window are deferred to its start, with the
    /// deferral visible in the trace at the request time.
    fn run_head_window(&mut self, window_start: u64, window_end: u64) {
        loop {
            let due = self
                .member_events
                .iter()
                .position(|e| e.t_us < window_end)
                .and_then(|pos| self.member_events.remove(pos));
            let Some(ev) = due else { break };
            let head_here = HeadWindow {
                current: Some((window_start, window_end)),
                next_start_us: window_start,
            };
            let outside = HeadWindow { current: None, next_start_us: window_start };
            let proc_time = ev.t_us.max(window_start);
            match &ev.kind {
                EventKind::Leave { label, node } => {
                    let window = if ev.t_us >= window_start { &head_here } else { &outside };
                    let msg = match request_leave(
                        label,
                        *node,
                        ev.t_us,
                        Mode::Dynamic,
                        window,
                        head_id(&self.info),
                    ) {
                        Ok(msg) => msg,
                        Err(DynamicsError::OutsideWindow { next_window_us }) => {
                            let detail = format!("next_window={}ms", fmt_ms(next_window_us));
                            self.emit(ev.t_us, label, TraceKind::LeaveDeferred, detail, 0.0);
                            request_leave(
                                label,
                                *node,
                                next_window_us,
                                Mode::Dynamic,
                                &head_here,
                                head_id(&self.info),
                            )
                            .expect("window start is inside the window")
                        }
                        Err(e) => {
                            self.emit(ev.t_us, label, TraceKind::EventFailed, e.to_string(), 0.0);
                            continue;
                        }
                    };
                    self.apply_leave_event(&msg, proc_time);
                }
                EventKind::Join { label, id, attach } => {
                    if ev.t_us < window_start {
                        let detail = format!("next_window={}ms", fmt_ms(window_start));
                        self.emit(ev.t_us, label, TraceKind::JoinDeferred, detail, 0.0);
                    }
                    self.apply_join_event(label.clone(), *id, attach, ev.t_us, proc_time);
                }
                _ => unreachable!("only membership events queued here"),
            }
        }
    }

    fn apply_leave_event(&mut self, msg: &Bit0Message, at_us: u64) {
        let m = self.scenario.energy.clone();
        let mover = msg.node_id;
        let label = msg.node_label.clone();
        let head_node = head_id(&self.info);
        let delta = charge_control(&mut self.ledger, mover, ControlEvent::Bit0, &m);
        self.emit(at_us, &label, TraceKind::Bit0Send, "to=head".to_string(), delta);
        let applied = match &mut self.info {
            ClusterInfo::Dynamic(head) => apply_leave(head, msg),
            ClusterInfo::Static(_) => return,
        };
        match applied {
            Ok(broadcast) => {
                let delta =
                    charge_control(&mut self.ledger, head_node, ControlEvent::HeadReceive, &m);
                self.emit(at_us, "head", TraceKind::Bit0Recv, format!("from={label}"), delta);
                self.emit(
                    at_us,
                    "head",
                    TraceKind::TableUpdate,
                    format!("leave={label} bit0+={mover}"),
                    0.0,
                );
                let delta =
                    charge_control(&mut self.ledger, head_node, ControlEvent::HeadBroadcast, &m);
                self.emit(
                    at_us,
                    "head",
                    TraceKind::HeadBroadcast,
                    format!("members={}", broadcast.recipients.len()),
                    delta,
                );
                let n = broadcast.recipients.len() as u32;
                for node in broadcast.recipients {
                    let delta = charge_control(
                        &mut self.ledger,
                        node,
                        ControlEvent::BroadcastReceive,
                        &m,
                    );
                    let node_label = self.label(node);
                    self.emit(
                        at_us,
                        &node_label,
                        TraceKind::BroadcastRecv,
                        "table_update".to_string(),
                        delta,
                    );
                }
                self.bit0.insert(mover);
                self.analytic.push(format!(
                    "cluster {} event leave {}: leave equation k=0 v=1 n={}: {}",
                    self.number,
                    label,
                    n,
                    fmt_mj(leave_session_power(0, 1, n, &m))
                ));
            }
            Err(e) => {
                self.emit(at_us, &label, TraceKind::EventFailed, e.to_string(), 0.0);
            }
        }
    }

    fn apply_join_event(
        &mut self,
        label: String,
        id: NodeId,
        attach: &JoinAttach,
        announce_us: u64,
        at_us: u64,
    ) {
        let m = self.scenario.energy.clone();
        let current_members: BTreeSet<NodeId> = self.members().into_iter().collect();
        let overlapped: Vec<NodeId> = match attach {
            JoinAttach::Overlap(ids) => {
                ids.iter().copied().filter(|n| current_members.contains(n)).collect()
            }
            JoinAttach::Position(pos) => {
                match announce_join(*pos, self.topology, &current_members) {
                    Ok(ids) => ids,
                    Err(e) => {
                        self.emit(announce_us, &label, TraceKind::EventFailed, e.to_string(), 0.0);
                        return;
                    }
                }
            }
        };
        if overlapped.is_empty() {
            self.emit(
                announce_us,
                &label,
                TraceKind::EventFailed,
                "no active member overlaps the newcomer".to_string(),
                0.0,
            );
            return;
        }
        let overlap_labels: Vec<String> = overlapped.iter().map(|n| self.label(*n)).collect();
        self.emit(
            announce_us,
            &label,
            TraceKind::JoinAnnounce,
            format!("overlap={}", overlap_labels.join("+")),
            0.0,
        );
        for (&member, member_label) in overlapped.iter().zip(&overlap_labels) {
            let delta = charge_control(&mut self.ledger, member, ControlEvent::JoinGossip, &m);
            self.emit(
                announce_us,
                member_label,
                TraceKind::JoinGossip,
                format!("with={label}"),
                delta,
            );
        }

        let head_node = head_id(&self.info);
        let reports = match &self.info {
            ClusterInfo::Dynamic(head) => match build_join_reports(head, id, &overlapped) {
                Ok(r) => r,
                Err(e) => {
                    self.emit(at_us, &label, TraceKind::EventFailed, e.to_string(), 0.0);
                    return;
                }
            },
            ClusterInfo::Static(_) => return,
        };
        for rep in &reports {
            let delta = charge_control(&mut self.ledger, rep.node_id, ControlEvent::JoinReport, &m);
            let rep_label = rep.node_label.clone();
            self.emit(at_us, &rep_label, TraceKind::JoinReport, "to=head".to_string(), delta);
        }
        let delta = charge_control(&mut self.ledger, head_node, ControlEvent::HeadReceive, &m);
        self.emit(at_us, "head", TraceKind::ReportRecv, format!("about={label}"), delta);
        let applied = match &mut self.info {
            ClusterInfo::Dynamic(head) => apply_join(head, &label, id, &reports),
            ClusterInfo::Static(_) => return,
        };
        match applied {
            Ok(broadcast) => {
                self.emit(
                    at_us,
                    "head",
                    TraceKind::TableUpdate,
                    format!("join={label} id={id}"),
                    0.0,
                );
                let delta =
                    charge_control(&mut self.ledger, head_node, ControlEvent::HeadBroadcast, &m);
                self.emit(
                    at_us,
                    "head",
                    TraceKind::HeadBroadcast,
                    format!("members={}", broadcast.recipients.len()),
                    delta,
                );
                // Broadcast receptions carry no per-event charge; the join
                // equation has no reception term.
                for node in broadcast.recipients {
                    let node_label = self.label(node);
                    self.emit(
                        at_us,
                        &node_label,
                        TraceKind::BroadcastRecv,
                        "table_update".to_string(),
                        0.0,
                    );
                }
                for (relay, newcomer) in broadcast.relays {
                    let relay_label = self.label(relay);
                    let detail = format!("to={}", label);
                    let _ = newcomer;
                    self.emit(at_us, &relay_label, TraceKind::BroadcastRelay, detail, 0.0);
                }
                self.labels.insert(id, label.clone());
                self.bit0.remove(&id);
                let h = reports.len() as u32;
                let b = overlapped.len() as u32;
                self.analytic.push(format!(
                    "cluster {} event join {}: join equation k=0 h={} b={}: {}",
                    self.number,
                    label,
                    h,
                    b,
                    fmt_mj(join_session_power(0, h, b, &m))
                ));
            }
            Err(e) => {
                self.emit(at_us, &label, TraceKind::EventFailed, e.to_string(), 0.0);
            }
        }
    }

    /// Advances rounds until all declared work is done.
    fn run_loop(&mut self) {
        let slot_us = self.scenario.schedule.slot_threshold_us;
        let head_window_us = self.scenario.schedule.head_window_us;
        let dynamic = matches!(self.info, ClusterInfo::Dynamic(_));
        while self.has_work() {
            self.skip_dead_sessions(self.cursor_us);
            let members = self.members();
            if members.is_empty() {
                while let Some(sess) = self.sessions.pop_front() {
                    let detail =
                        format!("{}->{} cluster_empty", sess.src_label, sess.dst_label);
                    let t = self.cursor_us;
                    self.emit(t, &sess.src_label.clone(), TraceKind::SessionSkipped, detail, 0.0);
                    self.skipped += 1;
                }
                for ev in std::mem::take(&mut self.member_events) {
                    let t = ev.t_us.max(self.cursor_us);
                    self.emit(t, "-", TraceKind::EventFailed, "cluster_empty".to_string(), 0.0);
                }
                self.link_events.clear();
                break;
            }
            let schedule =
                build_priority_schedule(&members, self.round, slot_us, &mut self.rng)
                    .expect("members nonempty");
            let order: Vec<String> = schedule.order.iter().map(|id| self.label(*id)).collect();
            let t = self.cursor_us;
            let round = self.round;
            self.emit(
                t,
                "-",
                TraceKind::RoundStart,
                format!("round={} order={}", round, order.join("-")),
                0.0,
            );
            for owner in schedule.order {
                let slot_start = self.cursor_us;
                self.apply_link_events_due(slot_start);
                if let Some(sess) = self.next_session_for(owner, slot_start) {
                    self.run_one_session(sess, slot_start);
                }
                self.cursor_us += slot_us;
            }
            if dynamic {
                let window_start = self.cursor_us;
                let window_end = window_start + head_window_us;
                self.run_head_window(window_start, window_end);
                self.cursor_us = window_end;
            }
            self.round += 1;
        }
    }
}

fn head_id(info: &ClusterInfo) -> NodeId {
    match info {
        ClusterInfo::Static(_) => adjsim_core::topology::ROUTER_ID,
        ClusterInfo::Dynamic(h) => h.head_id,
    }
}

/// Builds the router tables and controller state for every cluster, emitting
/// the setup-phase trace. Returns per-cluster complete info tables.
fn run_setup(
    scenario: &Scenario,
    trace: &mut Vec<TraceRecord>,
    ledgers: &mut BTreeMap<u32, EnergyLedger>,
) -> BTreeMap<u32, CompleteInfoTable> {
    let latency = scenario.schedule.setup_latency_us;
    let e_setup = if scenario.schedule.charge_setup {
        Some(scenario.energy.e_comm_mj)
    } else {
        None
    };
    let mut cursor = 0u64;
    let mut router_tables: Vec<RouterTable> = Vec::new();
    for topo in &scenario.clusters {
        let gossip = discover_neighbors(topo);
        let rt = converge_cast(topo, &gossip);
        for report in &rt.reports {
            let delta = match e_setup {
                Some(e) => {
                    let ledger = ledgers.entry(topo.cluster_number).or_default();
                    charge_control(ledger, report.node_id, ControlEvent::JoinGossip, &scenario.energy);
                    e
                }
                None => 0.0,
            };
            trace.push(TraceRecord::new(
                cursor,
                topo.cluster_number,
                report.node_label.clone(),
                TraceKind::ReportSend,
                format!("to={}", report.current_destination),
                delta,
            ));
            cursor += latency;
        }
        trace.push(TraceRecord::new(
            cursor,
            topo.cluster_number,
            "router",
            TraceKind::ReportForward,
            format!("cluster={} to=controller", topo.cluster_number),
            0.0,
        ));
        cursor += latency;
        router_tables.push(rt);
    }
    let controller = forward_to_controller(&router_tables)
        .expect("cluster numbers validated unique at parse");
    let mut out = BTreeMap::new();
    for topo in &scenario.clusters {
        let matrix = build_adjacency_matrix(&controller, topo.cluster_number)
            .expect("scenario links are symmetric by construction");
        trace.push(TraceRecord::new(
            cursor,
            topo.cluster_number,
            "controller",
            TraceKind::MatrixBuilt,
            format!("cluster={} nodes={}", topo.cluster_number, matrix.ids.len()),
            0.0,
        ));
        cursor += latency;
        let info = derive_complete_info(&matrix, &controller);
        trace.push(TraceRecord::new(
            cursor,
            topo.cluster_number,
            "controller",
            TraceKind::InfoBroadcast,
            format!("cluster={} via=router", topo.cluster_number),
            0.0,
        ));
        cursor += latency;
        for delivery in broadcast_complete_info(&info, topo) {
            let label = topo.label_of(delivery.destination).unwrap_or("?").to_string();
            trace.push(TraceRecord::new(
                cursor,
                topo.cluster_number,
                "router",
                TraceKind::InfoDeliver,
                format!("to={label}"),
                0.0,
            ));
            cursor += latency;
        }
        out.insert(topo.cluster_number, info);
    }
    out
}

/// Runs a scenario end to end.
pub fn run(scenario: &Scenario) -> SimOutput {
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut ledgers: BTreeMap<u32, EnergyLedger> = BTreeMap::new();
    let infos = run_setup(scenario, &mut trace, &mut ledgers);

    let mut summary = Summary::default();
    for topo in &scenario.clusters {
        let number = topo.cluster_number;
        let info = infos.get(&number).expect("setup covered every cluster").clone();
        let cluster_info = match scenario.mode {
            Mode::Static => ClusterInfo::Static(info),
            Mode::Dynamic => ClusterInfo::Dynamic(ClusterHeadTable::from_complete_info(
                &info,
                adjsim_core::topology::CLUSTER_HEAD_ID,
            )),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(number as u64);
        let mut sessions: Vec<SessionSpec> = scenario
            .sessions
            .iter()
            .filter(|s| s.cluster == number)
            .cloned()
            .collect();
        sessions.sort_by_key(|s| (s.t_us, s.decl_index));
        let mut link_events: Vec<EventSpec> = Vec::new();
        let mut member_events: Vec<EventSpec> = Vec::new();
        for ev in scenario.events.iter().filter(|e| e.cluster == number) {
            match ev.kind {
                EventKind::LinkFail { .. } | EventKind::LinkHeal { .. } => {
                    link_events.push(ev.clone())
                }
                _ => member_events.push(ev.clone()),
            }
        }
        link_events.sort_by_key(|e| (e.t_us, e.decl_index));
        member_events.sort_by_key(|e| (e.t_us, e.decl_index));

        let mut sim = ClusterSim {
            scenario,
            topology: topo,
            number,
            labels: topo.members().iter().map(|m| (m.id, m.label.clone())).collect(),
            info: cluster_info,
            link_state: LinkState::new(),
            bit0: BTreeSet::new(),
            sleeping: BTreeMap::new(),
            rng,
            cursor_us: 0,
            round: 0,
            sessions: sessions.into(),
            link_events: link_events.into(),
            member_events: member_events.into(),
            trace: Vec::new(),
            ledger: ledgers.remove(&number).unwrap_or_default(),
            results: Vec::new(),
            analytic: Vec::new(),
            warnings: Vec::new(),
            skipped: 0,
        };
        sim.run_loop();

        trace.append(&mut sim.trace);
        summary.sessions.extend(sim.results);
        summary.analytic.extend(sim.analytic);
        summary.warnings.extend(sim.warnings);
        summary.skipped_sessions += sim.skipped;
        for (id, energy) in sim.ledger.nodes() {
            let label = if *id == adjsim_core::topology::CLUSTER_HEAD_ID {
                "head".to_string()
            } else {
                sim.labels.get(id).cloned().unwrap_or_else(|| id.to_string())
            };
            summary.per_node.push(NodeEnergyLine { cluster: number, label, energy: *energy });
            summary.total_mj += energy.total_mj();
        }
    }

    sort_by_time(&mut trace);
    SimOutput { trace, summary }
}

/// Serializes a trace, one record per line.
pub fn emit_trace(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in trace {
        out.push_str(&r.line());
        out.push('\n');
    }
    out
}
