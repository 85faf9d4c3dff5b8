//! Node identities, cluster topologies, neighbor discovery, and depth.
//!
//! Sensor nodes carry 4-bit binary IDs drawn from `0000..=1111`, with `1000`
//! reserved for the router and `1001` for the controller. The cluster head
//! used in dynamic mode is the single 5-bit ID `10000`. The depth between two
//! nodes is the absolute difference of their numeric IDs and is the routing
//! metric for everything downstream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

/// Bit width of a rendered node ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IdWidth {
    /// Sensor nodes, router, controller: `0000..=1111`.
    Four,
    /// Cluster head: `10000`.
    Five,
}

impl IdWidth {
    fn digits(self) -> usize {
        match self {
            IdWidth::Four => 4,
            IdWidth::Five => 5,
        }
    }
}

/// Fixed-width binary node identity.
///
/// Ordering and equality follow the numeric value, so `0001 < 0010 < 10000`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    value: u8,
    width: IdWidth,
}

/// The router's reserved ID, `1000`.
pub const ROUTER_ID: NodeId = NodeId { value: 8, width: IdWidth::Four };
/// The controller's reserved ID, `1001`.
pub const CONTROLLER_ID: NodeId = NodeId { value: 9, width: IdWidth::Four };
/// The cluster head's reserved ID, `10000`.
pub const CLUSTER_HEAD_ID: NodeId = NodeId { value: 16, width: IdWidth::Five };

impl NodeId {
    /// Builds an ID from a numeric value and width. Returns `None` when the
    /// value does not fit the width.
    pub fn new(value: u8, width: IdWidth) -> Option<Self> {
        let limit = 1u8 << width.digits();
        (value < limit).then_some(NodeId { value, width })
    }

    /// Builds a 4-bit sensor-node ID. Router/controller values are rejected.
    pub fn sensor(value: u8) -> Option<Self> {
        let id = NodeId::new(value, IdWidth::Four)?;
        (!id.is_reserved()).then_some(id)
    }

    /// Numeric value used for depth computation and ordering.
    pub fn numeric(self) -> u8 {
        self.value
    }

    pub fn width(self) -> IdWidth {
        self.width
    }

    /// True for the router, controller, and cluster-head IDs.
    pub fn is_reserved(self) -> bool {
        self == ROUTER_ID || self == CONTROLLER_ID || self == CLUSTER_HEAD_ID
    }

    /// True when this ID is usable by an ordinary sensor node.
    pub fn is_sensor(self) -> bool {
        self.width == IdWidth::Four && !self.is_reserved()
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:0width$b}", self.value, width = self.width.digits())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Error from parsing a binary ID string.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid node id {text:?}: expected 4 or 5 binary digits")]
pub struct ParseNodeIdError {
    pub text: String,
}

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNodeIdError { text: s.to_string() };
        let width = match s.len() {
            4 => IdWidth::Four,
            5 => IdWidth::Five,
            _ => return Err(err()),
        };
        let value = u8::from_str_radix(s, 2).map_err(|_| err())?;
        NodeId::new(value, width).ok_or_else(err)
    }
}

/// Absolute numeric distance between two node IDs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Depth(pub u8);

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Depth between two nodes: the larger numeric ID minus the smaller one.
pub fn depth(a: NodeId, b: NodeId) -> Depth {
    Depth(a.numeric().abs_diff(b.numeric()))
}

/// Planar position plus communication radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePosition {
    pub x: f64,
    pub y: f64,
    /// Communication radius; must be positive.
    pub range: f64,
}

impl NodePosition {
    pub fn new(x: f64, y: f64, range: f64) -> Self {
        NodePosition { x, y, range }
    }

    /// Two nodes are neighbors when their communication ranges overlap.
    pub fn overlaps(&self, other: &NodePosition) -> bool {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx.hypot(dy) <= self.range + other.range
    }
}

/// One member node of a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMember {
    pub label: String,
    pub id: NodeId,
    pub position: Option<NodePosition>,
}

/// Nodes and undirected links of one cluster, plus the identities it reports
/// to. Immutable once built; construct with the `add_*` methods and then
/// treat as read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTopology {
    pub cluster_number: u32,
    members: Vec<ClusterMember>,
    links: Vec<(NodeId, NodeId)>,
    pub router_id: NodeId,
    pub controller_id: NodeId,
    /// Present only in dynamic mode.
    pub cluster_head_id: Option<NodeId>,
    /// Per-node neighbor-list orderings pinned by the scenario. Nodes not
    /// listed here report neighbors in ascending ID order.
    neighbor_order: BTreeMap<NodeId, Vec<NodeId>>,
    max_size_exponent: u32,
}

impl ClusterTopology {
    pub fn new(cluster_number: u32) -> Self {
        ClusterTopology {
            cluster_number,
            members: Vec::new(),
            links: Vec::new(),
            router_id: ROUTER_ID,
            controller_id: CONTROLLER_ID,
            cluster_head_id: None,
            neighbor_order: BTreeMap::new(),
            max_size_exponent: 3,
        }
    }

    pub fn with_cluster_head(mut self, head: NodeId) -> Self {
        self.cluster_head_id = Some(head);
        self
    }

    /// Raises the default `2^3` cluster-size cap.
    pub fn with_max_size_exponent(mut self, n: u32) -> Self {
        self.max_size_exponent = n;
        self
    }

    pub fn add_member(&mut self, label: impl Into<String>, id: NodeId, position: Option<NodePosition>) {
        self.members.push(ClusterMember { label: label.into(), id, position });
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId) {
        let link = normalize_link(a, b);
        if !self.links.contains(&link) {
            self.links.push(link);
        }
    }

    /// Pins the neighbor-list order reported by `node`. The pinned list must
    /// be a permutation of the node's actual neighbor set or validation
    /// fails.
    pub fn set_neighbor_order(&mut self, node: NodeId, order: Vec<NodeId>) {
        self.neighbor_order.insert(node, order);
    }

    pub fn members(&self) -> &[ClusterMember] {
        &self.members
    }

    pub fn declared_links(&self) -> &[(NodeId, NodeId)] {
        &self.links
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Member IDs in ascending order.
    pub fn member_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.members.iter().map(|m| m.id).collect();
        ids.sort();
        ids
    }

    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.members.iter().find(|m| m.label == label).map(|m| m.id)
    }

    pub fn label_of(&self, id: NodeId) -> Option<&str> {
        self.members.iter().find(|m| m.id == id).map(|m| m.label.as_str())
    }

    pub fn position_of(&self, id: NodeId) -> Option<NodePosition> {
        self.members.iter().find(|m| m.id == id).and_then(|m| m.position)
    }

    /// Links in effect: the declared ones, or the geometric ones derived
    /// from positions when no links were declared.
    pub fn effective_links(&self) -> Vec<(NodeId, NodeId)> {
        if !self.links.is_empty() || !self.all_positioned() {
            return self.links.clone();
        }
        self.geometric_links()
    }

    fn all_positioned(&self) -> bool {
        !self.members.is_empty() && self.members.iter().all(|m| m.position.is_some())
    }

    fn geometric_links(&self) -> Vec<(NodeId, NodeId)> {
        let mut links = Vec::new();
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                if let (Some(pa), Some(pb)) = (a.position, b.position) {
                    if pa.overlaps(&pb) {
                        links.push(normalize_link(a.id, b.id));
                    }
                }
            }
        }
        links.sort();
        links
    }

    /// The pinned neighbor order for `id`, when the scenario supplied one.
    pub fn pinned_neighbor_order(&self, id: NodeId) -> Option<&[NodeId]> {
        self.neighbor_order.get(&id).map(|v| v.as_slice())
    }

    /// Neighbors of `id`, in the pinned order when one was supplied and in
    /// ascending ID order otherwise.
    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        if let Some(order) = self.neighbor_order.get(&id) {
            return order.clone();
        }
        let mut out: Vec<NodeId> = self
            .effective_links()
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }
}

fn normalize_link(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// IDs withheld from sensor-node assignment.
#[derive(Debug, Clone)]
pub struct ReservedIds {
    pub router: NodeId,
    pub controller: NodeId,
    /// Present in dynamic mode; nodes then report to the head instead of
    /// the router.
    pub cluster_head: Option<NodeId>,
}

impl Default for ReservedIds {
    fn default() -> Self {
        ReservedIds { router: ROUTER_ID, controller: CONTROLLER_ID, cluster_head: None }
    }
}

impl ReservedIds {
    pub fn dynamic() -> Self {
        ReservedIds { cluster_head: Some(CLUSTER_HEAD_ID), ..ReservedIds::default() }
    }
}

/// One assignment row: the node's ID plus the destinations fed to it at
/// startup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdRecord {
    pub label: String,
    pub id: NodeId,
    pub current_destination: NodeId,
    pub final_destination: NodeId,
}

/// Result of [`assign_ids`], in the order the labels were given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdAssignment {
    pub records: Vec<IdRecord>,
}

impl IdAssignment {
    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.records.iter().find(|r| r.label == label).map(|r| r.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("too many nodes: {requested} labels for {available} available IDs")]
    TooManyNodes { requested: usize, available: usize },
    #[error("label {label:?} maps to reserved ID {id}")]
    ReservedCollision { label: String, id: NodeId },
    #[error("ID {id} assigned more than once")]
    DuplicateId { id: NodeId },
}

/// Assigns unique 4-bit IDs to the given labels, avoiding the reserved ones.
///
/// Entries of `explicit` pin specific labels to specific IDs; remaining
/// labels draw from the free ID pool through `rng` (a fixed seed gives a
/// fixed assignment). Every record is pre-fed the current destination (the
/// router, or the cluster head in dynamic mode) and the final destination
/// (the controller).
pub fn assign_ids(
    labels: &[&str],
    explicit: &BTreeMap<String, NodeId>,
    reserved: &ReservedIds,
    rng: &mut impl Rng,
) -> Result<IdAssignment, TopologyError> {
    let pool: Vec<NodeId> = (0u8..16)
        .filter_map(|v| NodeId::new(v, IdWidth::Four))
        .filter(|id| *id != reserved.router && *id != reserved.controller)
        .collect();
    if labels.len() > pool.len() {
        return Err(TopologyError::TooManyNodes { requested: labels.len(), available: pool.len() });
    }

    let mut taken = BTreeSet::new();
    for label in labels {
        if let Some(&id) = explicit.get(*label) {
            if id == reserved.router || id == reserved.controller || Some(id) == reserved.cluster_head {
                return Err(TopologyError::ReservedCollision { label: (*label).to_string(), id });
            }
            if !taken.insert(id) {
                return Err(TopologyError::DuplicateId { id });
            }
        }
    }

    let mut free: Vec<NodeId> = pool.iter().copied().filter(|id| !taken.contains(id)).collect();
    let needs_random = labels.iter().any(|l| !explicit.contains_key(*l));
    if needs_random {
        // Only consume randomness when an auto-assigned label exists, so
        // fully explicit scenarios are seed-independent.
        free.shuffle(rng);
    }

    let current = reserved.cluster_head.unwrap_or(reserved.router);
    let mut free_iter = free.into_iter();
    let records = labels
        .iter()
        .map(|label| {
            let id = explicit
                .get(*label)
                .copied()
                .unwrap_or_else(|| free_iter.next().expect("pool sized above"));
            IdRecord {
                label: (*label).to_string(),
                id,
                current_destination: current,
                final_destination: reserved.controller,
            }
        })
        .collect();
    Ok(IdAssignment { records })
}

/// One node's gossip result: its neighbors with the depth toward each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeGossip {
    pub node_id: NodeId,
    pub neighbors: Vec<(NodeId, Depth)>,
}

/// Collects every node's neighbor information, lowest ID first.
///
/// The outer order is the gossip priority (ascending ID); each node's
/// neighbor list follows the topology's pinned order or ascending IDs.
pub fn discover_neighbors(topology: &ClusterTopology) -> Vec<NodeGossip> {
    let mut ids = topology.member_ids();
    ids.sort();
    ids.into_iter()
        .map(|id| NodeGossip {
            node_id: id,
            neighbors: topology
                .neighbors(id)
                .into_iter()
                .map(|n| (n, depth(id, n)))
                .collect(),
        })
        .collect()
}

/// A single topology invariant violation.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologyViolation {
    DuplicateId { id: NodeId },
    DuplicateLabel { label: String },
    ReservedIdMisuse { label: String, id: NodeId },
    SelfLink { id: NodeId },
    DanglingLink { a: NodeId, b: NodeId, missing: NodeId },
    NonPositiveRange { label: String },
    /// Declared links disagree with the geometric ones implied by positions.
    RangeLinkMismatch {
        missing_declared: Vec<(NodeId, NodeId)>,
        extra_declared: Vec<(NodeId, NodeId)>,
    },
    NodeCountExceeded { count: usize, limit: usize },
    BadRouterId { id: NodeId },
    BadControllerId { id: NodeId },
    BadClusterHeadId { id: NodeId },
    /// A pinned neighbor order is not a permutation of the actual neighbors.
    NeighborOrderMismatch { id: NodeId },
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TopologyViolation::*;
        match self {
            DuplicateId { id } => write!(f, "duplicate node ID {id}"),
            DuplicateLabel { label } => write!(f, "duplicate node label {label:?}"),
            ReservedIdMisuse { label, id } => {
                write!(f, "node {label:?} uses reserved or invalid ID {id}")
            }
            SelfLink { id } => write!(f, "self-link on {id}"),
            DanglingLink { a, b, missing } => {
                write!(f, "link {a}-{b} references non-member {missing}")
            }
            NonPositiveRange { label } => {
                write!(f, "node {label:?} has non-positive communication range")
            }
            RangeLinkMismatch { missing_declared, extra_declared } => write!(
                f,
                "declared links disagree with positions (missing {missing_declared:?}, extra {extra_declared:?})"
            ),
            NodeCountExceeded { count, limit } => {
                write!(f, "cluster has {count} nodes, limit is {limit}")
            }
            BadRouterId { id } => write!(f, "router ID must be {ROUTER_ID}, got {id}"),
            BadControllerId { id } => write!(f, "controller ID must be {CONTROLLER_ID}, got {id}"),
            BadClusterHeadId { id } => {
                write!(f, "cluster-head ID must be {CLUSTER_HEAD_ID}, got {id}")
            }
            NeighborOrderMismatch { id } => {
                write!(f, "pinned neighbor order for {id} does not match its neighbor set")
            }
        }
    }
}

/// Checks every [`ClusterTopology`] invariant and reports all violations,
/// not just the first.
pub fn validate_topology(topology: &ClusterTopology) -> Vec<TopologyViolation> {
    let mut out = Vec::new();

    let mut seen_ids = BTreeSet::new();
    let mut seen_labels = BTreeSet::new();
    for m in topology.members() {
        if !seen_ids.insert(m.id) {
            out.push(TopologyViolation::DuplicateId { id: m.id });
        }
        if !seen_labels.insert(m.label.clone()) {
            out.push(TopologyViolation::DuplicateLabel { label: m.label.clone() });
        }
        if !m.id.is_sensor() {
            out.push(TopologyViolation::ReservedIdMisuse { label: m.label.clone(), id: m.id });
        }
        if let Some(pos) = m.position {
            if pos.range <= 0.0 {
                out.push(TopologyViolation::NonPositiveRange { label: m.label.clone() });
            }
        }
    }

    let limit = 1usize << topology.max_size_exponent;
    if topology.member_count() > limit {
        out.push(TopologyViolation::NodeCountExceeded { count: topology.member_count(), limit });
    }

    if topology.router_id != ROUTER_ID {
        out.push(TopologyViolation::BadRouterId { id: topology.router_id });
    }
    if topology.controller_id != CONTROLLER_ID {
        out.push(TopologyViolation::BadControllerId { id: topology.controller_id });
    }
    if let Some(head) = topology.cluster_head_id {
        if head != CLUSTER_HEAD_ID {
            out.push(TopologyViolation::BadClusterHeadId { id: head });
        }
    }

    let member_set: BTreeSet<NodeId> = topology.members().iter().map(|m| m.id).collect();
    for &(a, b) in topology.declared_links() {
        if a == b {
            out.push(TopologyViolation::SelfLink { id: a });
            continue;
        }
        for end in [a, b] {
            if !member_set.contains(&end) {
                out.push(TopologyViolation::DanglingLink { a, b, missing: end });
            }
        }
    }

    // When both positions and links are given, they must agree.
    if topology.all_positioned() && !topology.declared_links().is_empty() {
        let geometric: BTreeSet<_> = topology.geometric_links().into_iter().collect();
        let declared: BTreeSet<_> = topology
            .declared_links()
            .iter()
            .copied()
            .filter(|(a, b)| a != b && member_set.contains(a) && member_set.contains(b))
            .collect();
        if geometric != declared {
            out.push(TopologyViolation::RangeLinkMismatch {
                missing_declared: geometric.difference(&declared).copied().collect(),
                extra_declared: declared.difference(&geometric).copied().collect(),
            });
        }
    }

    for (id, order) in &topology.neighbor_order {
        let actual: BTreeSet<NodeId> = topology
            .effective_links()
            .iter()
            .filter_map(|&(a, b)| {
                if a == *id {
                    Some(b)
                } else if b == *id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        let pinned: BTreeSet<NodeId> = order.iter().copied().collect();
        if pinned != actual || pinned.len() != order.len() {
            out.push(TopologyViolation::NeighborOrderMismatch { id: *id });
        }
    }

    out
}
