//! The line-oriented scenario format.
//!
//! `#` starts a comment; blank lines are skipped. Directives:
//!
//! ```text
//! seed <u64>
//! mode static|dynamic
//! router <id>                      # must be 1000
//! controller <id>                  # must be 1001
//! clusterhead <id>                 # dynamic mode only, must be 10000
//! energy <key> <value>             # p_tx p_rcv p_lst p_slp e_rts e_cts e_trans
//!                                  # e_ack e_ackconf e_node e_transch e_rcvch
//!                                  # e_tr e_comm e_rcv slot_ts
//! schedule <key> <value>           # slot_threshold base_slot frame_rts frame_cts
//!                                  # frame_ack frame_ackconf frame_data payload_units
//!                                  # cts_guard head_window charge_setup setup_latency
//! cluster <n>
//! node <label> [<id>] [at <x> <y> <r>]
//! edge <a> <b>                     # labels
//! neighbors <node> <labels...>     # pins the node's neighbor-list order
//! session <t_ms> <src> <dst>
//! event <t_ms> leave <label>
//! event <t_ms> join <label> <id> overlap <labels...>
//! event <t_ms> join <label> <id> at <x> <y> <r>
//! event <t_ms> link_fail <a> <b>
//! event <t_ms> link_heal <a> <b>
//! ```
//!
//! Unknown directives and keys are syntax errors. IDs omitted from `node`
//! lines are drawn from the scenario seed. Node labels must be unique across
//! the whole scenario so sessions and events can name them unambiguously.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use adjsim_core::dynamics::Mode;
use adjsim_core::energy::EnergyModel;
use adjsim_core::scheduler::SessionTiming;
use adjsim_core::topology::{
    assign_ids, validate_topology, ClusterTopology, NodeId, NodePosition, ReservedIds,
    CLUSTER_HEAD_ID, CONTROLLER_ID, ROUTER_ID,
};
use adjsim_core::trace::fmt_ms;

/// Event-loop configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    /// Length of one main-sender slot.
    pub slot_threshold_us: u64,
    /// Length of the cluster head's window appended after each round.
    pub head_window_us: u64,
    pub timing: SessionTiming,
    /// Charge e_comm per setup-phase message.
    pub charge_setup: bool,
    /// Simulated latency per setup-phase message.
    pub setup_latency_us: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            slot_threshold_us: 10_000,
            head_window_us: 10_000,
            timing: SessionTiming::default(),
            charge_setup: false,
            setup_latency_us: 0,
        }
    }
}

/// One declared data session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSpec {
    pub t_us: u64,
    pub cluster: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub src_label: String,
    pub dst_label: String,
    pub decl_index: usize,
}

/// How a joining node finds its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub enum JoinAttach {
    /// Explicit overlap set, resolved to member IDs.
    Overlap(Vec<NodeId>),
    /// Geometric overlap from a position.
    Position(NodePosition),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Leave { label: String, node: NodeId },
    Join { label: String, id: NodeId, attach: JoinAttach },
    LinkFail { a: NodeId, b: NodeId },
    LinkHeal { a: NodeId, b: NodeId },
}

/// One declared event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSpec {
    pub t_us: u64,
    pub cluster: u32,
    pub kind: EventKind,
    pub decl_index: usize,
}

/// A fully parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub clusters: Vec<ClusterTopology>,
    pub mode: Mode,
    pub energy: EnergyModel,
    pub schedule: ScheduleConfig,
    pub sessions: Vec<SessionSpec>,
    pub events: Vec<EventSpec>,
    pub seed: u64,
}

impl Scenario {
    pub fn cluster(&self, number: u32) -> Option<&ClusterTopology> {
        self.clusters.iter().find(|c| c.cluster_number == number)
    }

    /// Resolves a label anywhere in the scenario.
    pub fn find_label(&self, label: &str) -> Option<(u32, NodeId)> {
        self.clusters
            .iter()
            .find_map(|c| c.id_of(label).map(|id| (c.cluster_number, id)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}", issues.join("; "))]
    Semantic { issues: Vec<String> },
}

impl ScenarioError {
    /// Exit code mandated for this error class: 2 for syntax, 1 for
    /// semantics.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Parse { .. } => 2,
            ScenarioError::Semantic { .. } => 1,
        }
    }
}

struct RawNode {
    label: String,
    id: Option<NodeId>,
    position: Option<NodePosition>,
}

struct RawCluster {
    number: u32,
    line: usize,
    nodes: Vec<RawNode>,
    edges: Vec<(String, String)>,
    neighbor_pins: Vec<(String, Vec<String>)>,
}

enum RawEventKind {
    Leave(String),
    JoinOverlap(String, NodeId, Vec<String>),
    JoinPosition(String, NodeId, NodePosition),
    LinkFail(String, String),
    LinkHeal(String, String),
}

struct RawScenario {
    seed: u64,
    mode: Mode,
    head_declared: bool,
    energy: EnergyModel,
    schedule: ScheduleConfig,
    clusters: Vec<RawCluster>,
    sessions: Vec<(u64, String, String)>,
    events: Vec<(u64, RawEventKind)>,
}

fn perr(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse { line, message: message.into() }
}

fn parse_u64(tok: &str, line: usize, what: &str) -> Result<u64, ScenarioError> {
    tok.parse().map_err(|_| perr(line, format!("invalid {what} {tok:?}")))
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64, ScenarioError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| perr(line, format!("invalid {what} {tok:?}")))
}

fn parse_ms_to_us(tok: &str, line: usize, what: &str) -> Result<u64, ScenarioError> {
    let ms = parse_f64(tok, line, what)?;
    if ms < 0.0 {
        return Err(perr(line, format!("{what} must be non-negative")));
    }
    Ok((ms * 1000.0).round() as u64)
}

fn parse_id(tok: &str, line: usize) -> Result<NodeId, ScenarioError> {
    tok.parse().map_err(|_| perr(line, format!("invalid node id {tok:?}")))
}

fn parse_position(args: &[&str], line: usize) -> Result<NodePosition, ScenarioError> {
    if args.len() != 3 {
        return Err(perr(line, "expected `at <x> <y> <r>`"));
    }
    Ok(NodePosition::new(
        parse_f64(args[0], line, "x coordinate")?,
        parse_f64(args[1], line, "y coordinate")?,
        parse_f64(args[2], line, "range")?,
    ))
}

fn parse_raw(text: &str) -> Result<RawScenario, ScenarioError> {
    let mut raw = RawScenario {
        seed: 0,
        mode: Mode::Static,
        head_declared: false,
        energy: EnergyModel::default(),
        schedule: ScheduleConfig::default(),
        clusters: Vec::new(),
        sessions: Vec::new(),
        events: Vec::new(),
    };

    for (idx, full_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = full_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let args = &tokens[1..];
        match tokens[0] {
            "seed" => {
                if args.len() != 1 {
                    return Err(perr(line, "expected `seed <u64>`"));
                }
                raw.seed = parse_u64(args[0], line, "seed")?;
            }
            "mode" => {
                raw.mode = match args {
                    ["static"] => Mode::Static,
                    ["dynamic"] => Mode::Dynamic,
                    _ => return Err(perr(line, "expected `mode static|dynamic`")),
                };
            }
            "router" => {
                if args.len() != 1 || parse_id(args[0], line)? != ROUTER_ID {
                    return Err(perr(line, format!("router id must be {ROUTER_ID}")));
                }
            }
            "controller" => {
                if args.len() != 1 || parse_id(args[0], line)? != CONTROLLER_ID {
                    return Err(perr(line, format!("controller id must be {CONTROLLER_ID}")));
                }
            }
            "clusterhead" => {
                if args.len() != 1 || parse_id(args[0], line)? != CLUSTER_HEAD_ID {
                    return Err(perr(line, format!("cluster head id must be {CLUSTER_HEAD_ID}")));
                }
                raw.head_declared = true;
            }
            "energy" => {
                if args.len() != 2 {
                    return Err(perr(line, "expected `energy <key> <value>`"));
                }
                let v = parse_f64(args[1], line, "energy value")?;
                let m = &mut raw.energy;
                match args[0] {
                    "p_tx" => m.p_tx_mw = v,
                    "p_rcv" => m.p_rcv_mw = v,
                    "p_lst" => m.p_lst_mw = v,
                    "p_slp" => m.p_slp_uw = v,
                    "e_rts" => m.e_rts_mj = v,
                    "e_cts" => m.e_cts_mj = v,
                    "e_trans" => m.e_trans_mj = v,
                    "e_ack" => m.e_ack_mj = v,
                    "e_ackconf" => m.e_ackconf_mj = v,
                    "e_node" => m.e_node_mj = v,
                    "e_transch" => m.e_trans_ch_mj = v,
                    "e_rcvch" => m.e_rcv_ch_mj = v,
                    "e_tr" => m.e_tr_mj = v,
                    "e_comm" => m.e_comm_mj = v,
                    "e_rcv" => m.e_rcv_mj = v,
                    "slot_ts" => m.slot_ts_ms = v,
                    other => return Err(perr(line, format!("unknown energy key {other:?}"))),
                }
            }
            "schedule" => {
                if args.len() != 2 {
                    return Err(perr(line, "expected `schedule <key> <value>`"));
                }
                let s = &mut raw.schedule;
                match args[0] {
                    "slot_threshold" => {
                        s.slot_threshold_us = parse_ms_to_us(args[1], line, "slot_threshold")?
                    }
                    "head_window" => {
                        s.head_window_us = parse_ms_to_us(args[1], line, "head_window")?
                    }
                    "base_slot" => {
                        s.timing.base_slot_us = parse_ms_to_us(args[1], line, "base_slot")?
                    }
                    "frame_rts" => s.timing.rts_us = parse_ms_to_us(args[1], line, "frame_rts")?,
                    "frame_cts" => s.timing.cts_us = parse_ms_to_us(args[1], line, "frame_cts")?,
                    "frame_ack" => s.timing.ack_us = parse_ms_to_us(args[1], line, "frame_ack")?,
                    "frame_ackconf" => {
                        s.timing.ackconf_us = parse_ms_to_us(args[1], line, "frame_ackconf")?
                    }
                    "frame_data" => {
                        s.timing.data_unit_us = parse_ms_to_us(args[1], line, "frame_data")?
                    }
                    "payload_units" => {
                        s.timing.payload_units =
                            parse_u64(args[1], line, "payload_units")? as u32
                    }
                    "cts_guard" => {
                        s.timing.cts_guard_us = parse_ms_to_us(args[1], line, "cts_guard")?
                    }
                    "charge_setup" => {
                        s.charge_setup = match args[1] {
                            "0" => false,
                            "1" => true,
                            other => {
                                return Err(perr(
                                    line,
                                    format!("charge_setup must be 0 or 1, got {other:?}"),
                                ))
                            }
                        }
                    }
                    "setup_latency" => {
                        s.setup_latency_us = parse_ms_to_us(args[1], line, "setup_latency")?
                    }
                    other => return Err(perr(line, format!("unknown schedule key {other:?}"))),
                }
            }
            "cluster" => {
                if args.len() != 1 {
                    return Err(perr(line, "expected `cluster <n>`"));
                }
                let number = parse_u64(args[0], line, "cluster number")? as u32;
                if number == 0 {
                    return Err(perr(line, "cluster number must be positive"));
                }
                raw.clusters.push(RawCluster {
                    number,
                    line,
                    nodes: Vec::new(),
                    edges: Vec::new(),
                    neighbor_pins: Vec::new(),
                });
            }
            "node" => {
                let cluster = raw
                    .clusters
                    .last_mut()
                    .ok_or_else(|| perr(line, "`node` before any `cluster`"))?;
                if args.is_empty() {
                    return Err(perr(line, "expected `node <label> [<id>] [at <x> <y> <r>]`"));
                }
                let label = args[0].to_string();
                let rest = &args[1..];
                let (id, rest) = match rest.first() {
                    Some(&"at") | None => (None, rest),
                    Some(tok) => (Some(parse_id(tok, line)?), &rest[1..]),
                };
                let position = match rest.first() {
                    Some(&"at") => Some(parse_position(&rest[1..], line)?),
                    Some(other) => {
                        return Err(perr(line, format!("unexpected token {other:?}")))
                    }
                    None => None,
                };
                cluster.nodes.push(RawNode { label, id, position });
            }
            "edge" => {
                let cluster = raw
                    .clusters
                    .last_mut()
                    .ok_or_else(|| perr(line, "`edge` before any `cluster`"))?;
                if args.len() != 2 {
                    return Err(perr(line, "expected `edge <a> <b>`"));
                }
                cluster.edges.push((args[0].to_string(), args[1].to_string()));
            }
            "neighbors" => {
                let cluster = raw
                    .clusters
                    .last_mut()
                    .ok_or_else(|| perr(line, "`neighbors` before any `cluster`"))?;
                if args.len() < 2 {
                    return Err(perr(line, "expected `neighbors <node> <labels...>`"));
                }
                cluster.neighbor_pins.push((
                    args[0].to_string(),
                    args[1..].iter().map(|s| s.to_string()).collect(),
                ));
            }
            "session" => {
                if args.len() != 3 {
                    return Err(perr(line, "expected `session <t_ms> <src> <dst>`"));
                }
                let t = parse_ms_to_us(args[0], line, "session time")?;
                raw.sessions.push((t, args[1].to_string(), args[2].to_string()));
            }
            "event" => {
                if args.len() < 2 {
                    return Err(perr(line, "expected `event <t_ms> <kind> ...`"));
                }
                let t = parse_ms_to_us(args[0], line, "event time")?;
                let kind = match (args[1], &args[2..]) {
                    ("leave", [label]) => RawEventKind::Leave(label.to_string()),
                    ("join", rest) if rest.len() >= 4 && rest[2] == "overlap" => {
                        RawEventKind::JoinOverlap(
                            rest[0].to_string(),
                            parse_id(rest[1], line)?,
                            rest[3..].iter().map(|s| s.to_string()).collect(),
                        )
                    }
                    ("join", rest) if rest.len() == 6 && rest[2] == "at" => {
                        RawEventKind::JoinPosition(
                            rest[0].to_string(),
                            parse_id(rest[1], line)?,
                            parse_position(&rest[3..], line)?,
                        )
                    }
                    ("link_fail", [a, b]) => {
                        RawEventKind::LinkFail(a.to_string(), b.to_string())
                    }
                    ("link_heal", [a, b]) => {
                        RawEventKind::LinkHeal(a.to_string(), b.to_string())
                    }
                    (kind, _) => {
                        return Err(perr(line, format!("malformed event {kind:?}")))
                    }
                };
                raw.events.push((t, kind));
            }
            other => return Err(perr(line, format!("unknown directive {other:?}"))),
        }
    }
    Ok(raw)
}

/// Parses and validates a scenario. Syntax problems yield
/// [`ScenarioError::Parse`] with a line number; semantic problems are
/// aggregated into [`ScenarioError::Semantic`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_seeded(text, None)
}

/// Same as [`parse_scenario`] with the scenario's seed overridden before any
/// ID assignment happens.
pub fn parse_scenario_seeded(
    text: &str,
    seed_override: Option<u64>,
) -> Result<Scenario, ScenarioError> {
    let mut raw = parse_raw(text)?;
    if let Some(seed) = seed_override {
        raw.seed = seed;
    }
    let mut issues: Vec<String> = Vec::new();

    if raw.clusters.is_empty() {
        issues.push("no cluster defined".to_string());
    }
    if raw.mode == Mode::Dynamic && !raw.head_declared {
        issues.push("dynamic mode requires a `clusterhead 10000` directive".to_string());
    }
    if raw.mode == Mode::Static && raw.head_declared {
        issues.push("`clusterhead` requires dynamic mode".to_string());
    }
    if raw.mode == Mode::Dynamic && raw.clusters.len() > 1 {
        issues.push(
            "dynamic mode supports a single cluster (the head ID is unique)".to_string(),
        );
    }
    if let Err(e) = raw.energy.validate() {
        issues.push(format!("energy model: {e}"));
    }

    let reserved = match raw.mode {
        Mode::Static => ReservedIds::default(),
        Mode::Dynamic => ReservedIds::dynamic(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(raw.seed);
    let mut clusters: Vec<ClusterTopology> = Vec::new();
    let mut seen_numbers: BTreeMap<u32, ()> = BTreeMap::new();
    for rc in &raw.clusters {
        if seen_numbers.insert(rc.number, ()).is_some() {
            issues.push(format!("cluster {} declared twice", rc.number));
            continue;
        }
        let labels: Vec<&str> = rc.nodes.iter().map(|n| n.label.as_str()).collect();
        let explicit: BTreeMap<String, NodeId> = rc
            .nodes
            .iter()
            .filter_map(|n| n.id.map(|id| (n.label.clone(), id)))
            .collect();
        let assignment = match assign_ids(&labels, &explicit, &reserved, &mut rng) {
            Ok(a) => a,
            Err(e) => {
                issues.push(format!("cluster {} (line {}): {e}", rc.number, rc.line));
                continue;
            }
        };
        let mut topo = ClusterTopology::new(rc.number);
        if raw.mode == Mode::Dynamic {
            topo = topo.with_cluster_head(CLUSTER_HEAD_ID);
        }
        for node in &rc.nodes {
            let id = assignment.id_of(&node.label).expect("assigned above");
            topo.add_member(node.label.clone(), id, node.position);
        }
        for (a, b) in &rc.edges {
            match (topo.id_of(a), topo.id_of(b)) {
                (Some(a), Some(b)) => topo.add_link(a, b),
                _ => issues.push(format!(
                    "cluster {}: edge references unknown label ({a} or {b})",
                    rc.number
                )),
            }
        }
        for (node, order) in &rc.neighbor_pins {
            let Some(node_id) = topo.id_of(node) else {
                issues.push(format!("cluster {}: neighbors pin for unknown label {node}", rc.number));
                continue;
            };
            let mut ids = Vec::new();
            let mut ok = true;
            for l in order {
                match topo.id_of(l) {
                    Some(id) => ids.push(id),
                    None => {
                        issues.push(format!(
                            "cluster {}: neighbors pin references unknown label {l}",
                            rc.number
                        ));
                        ok = false;
                    }
                }
            }
            if ok {
                topo.set_neighbor_order(node_id, ids);
            }
        }
        for v in validate_topology(&topo) {
            issues.push(format!("cluster {}: {v}", rc.number));
        }
        clusters.push(topo);
    }

    // Label uniqueness across clusters; sessions and events name labels.
    let mut label_home: BTreeMap<String, u32> = BTreeMap::new();
    for c in &clusters {
        for m in c.members() {
            if let Some(prev) = label_home.insert(m.label.clone(), c.cluster_number) {
                issues.push(format!(
                    "label {:?} used in clusters {} and {}",
                    m.label, prev, c.cluster_number
                ));
            }
        }
    }

    // Labels introduced by join events: sessions may target them.
    let mut joined: BTreeMap<String, NodeId> = BTreeMap::new();
    for (_, kind) in &raw.events {
        match kind {
            RawEventKind::JoinOverlap(label, id, _) | RawEventKind::JoinPosition(label, id, _) => {
                joined.insert(label.clone(), *id);
            }
            _ => {}
        }
    }
    let join_cluster = clusters.first().map(|c| c.cluster_number);

    let resolve = |token: &str, issues: &mut Vec<String>, what: &str| -> Option<(u32, NodeId)> {
        for c in &clusters {
            if let Some(id) = c.id_of(token) {
                return Some((c.cluster_number, id));
            }
        }
        if let (Some(id), Some(cluster)) = (joined.get(token), join_cluster) {
            return Some((cluster, *id));
        }
        if let Ok(id) = token.parse::<NodeId>() {
            if id == ROUTER_ID {
                issues.push(format!("{what}: router is not a session endpoint"));
                return None;
            }
            if id == CONTROLLER_ID {
                issues.push(format!("{what}: controller is not a session endpoint"));
                return None;
            }
            if id == CLUSTER_HEAD_ID {
                issues.push(format!("{what}: cluster head is not a session endpoint"));
                return None;
            }
            for c in &clusters {
                if c.member_ids().contains(&id) {
                    return Some((c.cluster_number, id));
                }
            }
        }
        issues.push(format!("{what}: unknown node {token:?}"));
        None
    };

    let mut sessions = Vec::new();
    for (decl_index, (t_us, src_tok, dst_tok)) in raw.sessions.iter().enumerate() {
        let what = format!("session {}", decl_index + 1);
        let src = resolve(src_tok, &mut issues, &what);
        let dst = resolve(dst_tok, &mut issues, &what);
        if let (Some((sc, src)), Some((dc, dst))) = (src, dst) {
            if sc != dc {
                issues.push(format!("{what}: endpoints live in different clusters"));
            } else if src == dst {
                issues.push(format!("{what}: source equals destination"));
            } else {
                let cluster = clusters.iter().find(|c| c.cluster_number == sc).expect("resolved");
                let label_for = |id: NodeId, token: &str| {
                    cluster
                        .label_of(id)
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| token.to_string())
                };
                sessions.push(SessionSpec {
                    t_us: *t_us,
                    cluster: sc,
                    src,
                    dst,
                    src_label: label_for(src, src_tok),
                    dst_label: label_for(dst, dst_tok),
                    decl_index,
                });
            }
        }
    }

    let mut events = Vec::new();
    for (decl_index, (t_us, kind)) in raw.events.iter().enumerate() {
        let what = format!("event {}", decl_index + 1);
        match kind {
            RawEventKind::Leave(label) => {
                if raw.mode == Mode::Static {
                    issues.push(format!("{what}: leave requires dynamic mode"));
                    continue;
                }
                if let Some((cluster, node)) = resolve(label, &mut issues, &what) {
                    events.push(EventSpec {
                        t_us: *t_us,
                        cluster,
                        kind: EventKind::Leave { label: label.clone(), node },
                        decl_index,
                    });
                }
            }
            RawEventKind::JoinOverlap(label, id, overlap) => {
                if raw.mode == Mode::Static {
                    issues.push(format!("{what}: join requires dynamic mode"));
                    continue;
                }
                if label_home.contains_key(label) {
                    issues.push(format!("{what}: label {label:?} already exists"));
                    continue;
                }
                if id.is_reserved() {
                    issues.push(format!("{what}: joining node may not use reserved id {id}"));
                    continue;
                }
                let mut cluster_no = None;
                let mut ids = Vec::new();
                for l in overlap {
                    if let Some((c, nid)) = resolve(l, &mut issues, &what) {
                        if *cluster_no.get_or_insert(c) != c {
                            issues.push(format!("{what}: overlap spans clusters"));
                        }
                        ids.push(nid);
                    }
                }
                if let Some(cluster) = cluster_no {
                    if clusters
                        .iter()
                        .find(|c| c.cluster_number == cluster)
                        .map(|c| c.member_ids().contains(id))
                        .unwrap_or(false)
                    {
                        issues.push(format!("{what}: id {id} already used in cluster {cluster}"));
                        continue;
                    }
                    events.push(EventSpec {
                        t_us: *t_us,
                        cluster,
                        kind: EventKind::Join {
                            label: label.clone(),
                            id: *id,
                            attach: JoinAttach::Overlap(ids),
                        },
                        decl_index,
                    });
                }
            }
            RawEventKind::JoinPosition(label, id, position) => {
                if raw.mode == Mode::Static {
                    issues.push(format!("{what}: join requires dynamic mode"));
                    continue;
                }
                if label_home.contains_key(label) {
                    issues.push(format!("{what}: label {label:?} already exists"));
                    continue;
                }
                if id.is_reserved() {
                    issues.push(format!("{what}: joining node may not use reserved id {id}"));
                    continue;
                }
                let Some(cluster) = clusters.first().map(|c| c.cluster_number) else {
                    continue;
                };
                let topo = clusters.iter().find(|c| c.cluster_number == cluster).expect("exists");
                if topo.members().iter().any(|m| m.position.is_none()) {
                    issues.push(format!(
                        "{what}: geometric join needs positions on every member"
                    ));
                    continue;
                }
                events.push(EventSpec {
                    t_us: *t_us,
                    cluster,
                    kind: EventKind::Join {
                        label: label.clone(),
                        id: *id,
                        attach: JoinAttach::Position(*position),
                    },
                    decl_index,
                });
            }
            RawEventKind::LinkFail(a, b) | RawEventKind::LinkHeal(a, b) => {
                let heal = matches!(kind, RawEventKind::LinkHeal(..));
                let ra = resolve(a, &mut issues, &what);
                let rb = resolve(b, &mut issues, &what);
                if let (Some((ca, na)), Some((cb, nb))) = (ra, rb) {
                    if ca != cb {
                        issues.push(format!("{what}: link endpoints span clusters"));
                    } else {
                        let kind = if heal {
                            EventKind::LinkHeal { a: na, b: nb }
                        } else {
                            EventKind::LinkFail { a: na, b: nb }
                        };
                        events.push(EventSpec { t_us: *t_us, cluster: ca, kind, decl_index });
                    }
                }
            }
        }
    }

    if !issues.is_empty() {
        return Err(ScenarioError::Semantic { issues });
    }

    clusters.sort_by_key(|c| c.cluster_number);
    Ok(Scenario {
        clusters,
        mode: raw.mode,
        energy: raw.energy,
        schedule: raw.schedule,
        sessions,
        events,
        seed: raw.seed,
    })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// Canonical re-emission: parsing the output yields an identical scenario.
/// IDs are always explicit (auto-assigned ones included) and only
/// non-default energy/schedule values appear.
pub fn emit_scenario(s: &Scenario) -> String {
    use fmt::Write;
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "seed {}", s.seed).unwrap();
    writeln!(w, "mode {}", if s.mode == Mode::Dynamic { "dynamic" } else { "static" }).unwrap();
    if s.mode == Mode::Dynamic {
        writeln!(w, "clusterhead {CLUSTER_HEAD_ID}").unwrap();
    }

    let de = EnergyModel::default();
    let e = &s.energy;
    for (key, val, def) in [
        ("p_tx", e.p_tx_mw, de.p_tx_mw),
        ("p_rcv", e.p_rcv_mw, de.p_rcv_mw),
        ("p_lst", e.p_lst_mw, de.p_lst_mw),
        ("p_slp", e.p_slp_uw, de.p_slp_uw),
        ("e_rts", e.e_rts_mj, de.e_rts_mj),
        ("e_cts", e.e_cts_mj, de.e_cts_mj),
        ("e_trans", e.e_trans_mj, de.e_trans_mj),
        ("e_ack", e.e_ack_mj, de.e_ack_mj),
        ("e_ackconf", e.e_ackconf_mj, de.e_ackconf_mj),
        ("e_node", e.e_node_mj, de.e_node_mj),
        ("e_transch", e.e_trans_ch_mj, de.e_trans_ch_mj),
        ("e_rcvch", e.e_rcv_ch_mj, de.e_rcv_ch_mj),
        ("e_tr", e.e_tr_mj, de.e_tr_mj),
        ("e_comm", e.e_comm_mj, de.e_comm_mj),
        ("e_rcv", e.e_rcv_mj, de.e_rcv_mj),
        ("slot_ts", e.slot_ts_ms, de.slot_ts_ms),
    ] {
        if val != def {
            writeln!(w, "energy {key} {}", fmt_f(val)).unwrap();
        }
    }

    let ds = ScheduleConfig::default();
    let sc = &s.schedule;
    for (key, val, def) in [
        ("slot_threshold", sc.slot_threshold_us, ds.slot_threshold_us),
        ("head_window", sc.head_window_us, ds.head_window_us),
        ("base_slot", sc.timing.base_slot_us, ds.timing.base_slot_us),
        ("frame_rts", sc.timing.rts_us, ds.timing.rts_us),
        ("frame_cts", sc.timing.cts_us, ds.timing.cts_us),
        ("frame_ack", sc.timing.ack_us, ds.timing.ack_us),
        ("frame_ackconf", sc.timing.ackconf_us, ds.timing.ackconf_us),
        ("frame_data", sc.timing.data_unit_us, ds.timing.data_unit_us),
        ("cts_guard", sc.timing.cts_guard_us, ds.timing.cts_guard_us),
        ("setup_latency", sc.setup_latency_us, ds.setup_latency_us),
    ] {
        if val != def {
            writeln!(w, "schedule {key} {}", fmt_ms(val)).unwrap();
        }
    }
    if sc.timing.payload_units != ds.timing.payload_units {
        writeln!(w, "schedule payload_units {}", sc.timing.payload_units).unwrap();
    }
    if sc.charge_setup {
        writeln!(w, "schedule charge_setup 1").unwrap();
    }

    for c in &s.clusters {
        writeln!(w, "cluster {}", c.cluster_number).unwrap();
        for m in c.members() {
            match m.position {
                Some(p) => writeln!(
                    w,
                    "node {} {} at {} {} {}",
                    m.label,
                    m.id,
                    fmt_f(p.x),
                    fmt_f(p.y),
                    fmt_f(p.range)
                )
                .unwrap(),
                None => writeln!(w, "node {} {}", m.label, m.id).unwrap(),
            }
        }
        for &(a, b) in c.declared_links() {
            writeln!(
                w,
                "edge {} {}",
                c.label_of(a).unwrap_or("?"),
                c.label_of(b).unwrap_or("?")
            )
            .unwrap();
        }
        let mut pinned: Vec<NodeId> = c
            .members()
            .iter()
            .map(|m| m.id)
            .filter(|id| c.pinned_neighbor_order(*id).is_some())
            .collect();
        pinned.sort();
        for id in pinned {
            let order = c.pinned_neighbor_order(id).expect("filtered");
            let labels: Vec<&str> =
                order.iter().map(|n| c.label_of(*n).unwrap_or("?")).collect();
            writeln!(w, "neighbors {} {}", c.label_of(id).unwrap_or("?"), labels.join(" "))
                .unwrap();
        }
    }

    for sess in &s.sessions {
        writeln!(w, "session {} {} {}", fmt_ms(sess.t_us), sess.src_label, sess.dst_label)
            .unwrap();
    }
    for ev in &s.events {
        let cluster = s.cluster(ev.cluster).expect("cluster exists");
        match &ev.kind {
            EventKind::Leave { label, .. } => {
                writeln!(w, "event {} leave {}", fmt_ms(ev.t_us), label).unwrap()
            }
            EventKind::Join { label, id, attach: JoinAttach::Overlap(ids) } => {
                let labels: Vec<&str> =
                    ids.iter().map(|n| cluster.label_of(*n).unwrap_or("?")).collect();
                writeln!(
                    w,
                    "event {} join {} {} overlap {}",
                    fmt_ms(ev.t_us),
                    label,
                    id,
                    labels.join(" ")
                )
                .unwrap()
            }
            EventKind::Join { label, id, attach: JoinAttach::Position(p) } => writeln!(
                w,
                "event {} join {} {} at {} {} {}",
                fmt_ms(ev.t_us),
                label,
                id,
                fmt_f(p.x),
                fmt_f(p.y),
                fmt_f(p.range)
            )
            .unwrap(),
            EventKind::LinkFail { a, b } => writeln!(
                w,
                "event {} link_fail {} {}",
                fmt_ms(ev.t_us),
                cluster.label_of(*a).unwrap_or("?"),
                cluster.label_of(*b).unwrap_or("?")
            )
            .unwrap(),
            EventKind::LinkHeal { a, b } => writeln!(
                w,
                "event {} link_heal {} {}",
                fmt_ms(ev.t_us),
                cluster.label_of(*a).unwrap_or("?"),
                cluster.label_of(*b).unwrap_or("?")
            )
            .unwrap(),
        }
    }
    out
}
