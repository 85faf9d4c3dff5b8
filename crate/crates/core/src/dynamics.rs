//! Dynamic membership managed by an always-active cluster head: bit-0 leave
//! requests, join announcements by range overlap, and the head's table
//! updates.
//!
//! In dynamic mode the head holds the complete information table (records
//! re-addressed to the head's ID) plus the bit-0 list of departed nodes.
//! Members may only reach the head during its window, the slot appended
//! after each full round of member slots; requests landing elsewhere are
//! answered with the next admissible window. A mover keeps its own slot
//! until the head processes its bit 0, and a departed ID stays on the bit-0
//! list until the same node rejoins.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::control_plane::{CompleteInfoRecord, CompleteInfoTable, NeighborReport};
use crate::topology::{depth, ClusterTopology, NodeId, NodePosition};

/// Static networks have no cluster head and no membership changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Static,
    Dynamic,
}

/// A member's departure announcement. The bit field is always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bit0Message {
    pub node_label: String,
    pub node_id: NodeId,
    pub bit: u8,
    pub destination_id: NodeId,
}

/// The head-window timing visible to a requesting node: the window that
/// contains "now" (if any) and the next window start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadWindow {
    /// `(start_us, end_us)` of the window containing the current time.
    pub current: Option<(u64, u64)>,
    pub next_start_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DynamicsError {
    #[error("membership changes require dynamic mode")]
    NotDynamicMode,
    #[error("outside the cluster head window; next window starts at {next_window_us} us")]
    OutsideWindow { next_window_us: u64 },
    #[error("node {id} is not a member of the cluster head table")]
    UnknownNode { id: NodeId },
    #[error("newcomer overlaps no active member")]
    NoOverlap,
    #[error("reporter {id} is not a member of the cluster head table")]
    UnknownReporter { id: NodeId },
    #[error("member {id} has no position; geometric overlap needs positions")]
    MissingPosition { id: NodeId },
}

/// The cluster head's copy of the complete information table plus the bit-0
/// list. Departed IDs never appear in any record's sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterHeadTable {
    pub cluster_number: u32,
    pub head_id: NodeId,
    pub records: Vec<CompleteInfoRecord>,
    pub bit0_list: Vec<NodeId>,
}

impl ClusterHeadTable {
    /// Adopts the controller-built table, re-addressing every record to the
    /// head.
    pub fn from_complete_info(info: &CompleteInfoTable, head_id: NodeId) -> Self {
        let records = info
            .records
            .iter()
            .map(|r| CompleteInfoRecord { destination: head_id, ..r.clone() })
            .collect();
        ClusterHeadTable {
            cluster_number: info.cluster_number,
            head_id,
            records,
            bit0_list: Vec::new(),
        }
    }

    pub fn member_ids(&self) -> Vec<NodeId> {
        self.records.iter().map(|r| r.node_id).collect()
    }

    pub fn record(&self, id: NodeId) -> Option<&CompleteInfoRecord> {
        self.records.iter().find(|r| r.node_id == id)
    }

    /// The table as routing input for the scheduler.
    pub fn as_complete_info(&self) -> CompleteInfoTable {
        CompleteInfoTable { cluster_number: self.cluster_number, records: self.records.clone() }
    }

    /// Recomputes every record's not-neighbor and union sets from the
    /// current member set (self-inclusive complement convention) and mirrors
    /// the bit-0 list into each record.
    fn refresh_derived_sets(&mut self) {
        let mut all: Vec<NodeId> = self.records.iter().map(|r| r.node_id).collect();
        all.sort();
        for r in &mut self.records {
            let neighbors: BTreeSet<NodeId> = r.neighbor_ids.iter().copied().collect();
            r.not_neighbor_ids = all.iter().copied().filter(|x| !neighbors.contains(x)).collect();
            r.union_ids = all.clone();
            r.bit0_list = self.bit0_list.clone();
        }
    }
}

/// Recipients of a head broadcast after a table update, plus any relay legs
/// toward a node not yet holding the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastSet {
    pub recipients: Vec<NodeId>,
    /// `(relaying member, newcomer)` pairs.
    pub relays: Vec<(NodeId, NodeId)>,
}

/// A node asks to leave. Accepted only inside the head's window; otherwise
/// the rejection carries the next admissible time.
pub fn request_leave(
    node_label: &str,
    node_id: NodeId,
    now_us: u64,
    mode: Mode,
    window: &HeadWindow,
    head_id: NodeId,
) -> Result<Bit0Message, DynamicsError> {
    if mode == Mode::Static {
        return Err(DynamicsError::NotDynamicMode);
    }
    match window.current {
        Some((start, end)) if now_us >= start && now_us < end => Ok(Bit0Message {
            node_label: node_label.to_string(),
            node_id,
            bit: 0,
            destination_id: head_id,
        }),
        _ => Err(DynamicsError::OutsideWindow { next_window_us: window.next_start_us }),
    }
}

/// The head processes a bit-0 message: the mover's ID is scrubbed from every
/// record's neighbor list (with its paired depth), from the derived sets,
/// its own record is dropped, and the ID joins the bit-0 list. The updated
/// table is broadcast to everyone but the mover.
pub fn apply_leave(
    table: &mut ClusterHeadTable,
    msg: &Bit0Message,
) -> Result<BroadcastSet, DynamicsError> {
    let gone = msg.node_id;
    if table.record(gone).is_none() {
        return Err(DynamicsError::UnknownNode { id: gone });
    }
    table.records.retain(|r| r.node_id != gone);
    for r in &mut table.records {
        if let Some(pos) = r.neighbor_ids.iter().position(|n| *n == gone) {
            r.neighbor_ids.remove(pos);
            r.depths.remove(pos);
        }
    }
    table.bit0_list.push(gone);
    table.refresh_derived_sets();
    Ok(BroadcastSet { recipients: table.member_ids(), relays: Vec::new() })
}

/// A newcomer broadcasts its ID over its full communication range and
/// returns the active members it overlaps. Geometric form; requires member
/// positions.
pub fn announce_join(
    new_position: NodePosition,
    topology: &ClusterTopology,
    active: &BTreeSet<NodeId>,
) -> Result<Vec<NodeId>, DynamicsError> {
    let mut overlapped = Vec::new();
    for m in topology.members() {
        if !active.contains(&m.id) {
            continue;
        }
        let pos = m.position.ok_or(DynamicsError::MissingPosition { id: m.id })?;
        if pos.overlaps(&new_position) {
            overlapped.push(m.id);
        }
    }
    overlapped.sort();
    if overlapped.is_empty() {
        return Err(DynamicsError::NoOverlap);
    }
    Ok(overlapped)
}

/// Builds the overlapped members' updated reports: each gains the newcomer
/// at the end of its neighbor list with the matching depth.
pub fn build_join_reports(
    table: &ClusterHeadTable,
    newcomer_id: NodeId,
    overlapped: &[NodeId],
) -> Result<Vec<NeighborReport>, DynamicsError> {
    overlapped
        .iter()
        .map(|&m| {
            let rec = table.record(m).ok_or(DynamicsError::UnknownReporter { id: m })?;
            let mut neighbor_ids = rec.neighbor_ids.clone();
            let mut depths = rec.depths.clone();
            neighbor_ids.push(newcomer_id);
            depths.push(depth(m, newcomer_id));
            Ok(NeighborReport {
                cluster_number: table.cluster_number,
                node_label: rec.node_label.clone(),
                node_id: m,
                neighbor_ids,
                depths,
                current_destination: table.head_id,
                final_destination: table.head_id,
            })
        })
        .collect()
}

/// The head processes a join: reporting members' records adopt their updated
/// neighbor lists, a fresh record is created for the newcomer, and every
/// union/not-neighbor set gains the new ID. The broadcast reaches all prior
/// members; the newcomer's neighbors relay the table to it. A rejoining ID
/// leaves the bit-0 list.
pub fn apply_join(
    table: &mut ClusterHeadTable,
    newcomer_label: &str,
    newcomer_id: NodeId,
    reports: &[NeighborReport],
) -> Result<BroadcastSet, DynamicsError> {
    for rep in reports {
        if table.record(rep.node_id).is_none() {
            return Err(DynamicsError::UnknownReporter { id: rep.node_id });
        }
    }
    let prior_members = table.member_ids();
    for rep in reports {
        let rec = table
            .records
            .iter_mut()
            .find(|r| r.node_id == rep.node_id)
            .expect("reporter checked above");
        rec.neighbor_ids = rep.neighbor_ids.clone();
        rec.depths = rep.depths.clone();
    }
    let mut neighbor_ids: Vec<NodeId> = reports.iter().map(|r| r.node_id).collect();
    neighbor_ids.sort();
    let depths = neighbor_ids.iter().map(|&n| depth(newcomer_id, n)).collect();
    table.records.push(CompleteInfoRecord {
        node_label: newcomer_label.to_string(),
        node_id: newcomer_id,
        neighbor_ids: neighbor_ids.clone(),
        not_neighbor_ids: Vec::new(),
        union_ids: Vec::new(),
        destination: table.head_id,
        cluster_number: table.cluster_number,
        depths,
        bit0_list: Vec::new(),
    });
    table.records.sort_by_key(|r| r.node_id);
    table.bit0_list.retain(|id| *id != newcomer_id);
    table.refresh_derived_sets();
    Ok(BroadcastSet {
        recipients: prior_members,
        relays: neighbor_ids.iter().map(|&n| (n, newcomer_id)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_plane::{
        build_adjacency_matrix, converge_cast, derive_complete_info, forward_to_controller,
    };
    use crate::reference;
    use crate::topology::{discover_neighbors, Depth, CLUSTER_HEAD_ID};

    fn id(s: &str) -> NodeId {
        s.parse().unwrap()
    }

    fn ids(list: &[&str]) -> Vec<NodeId> {
        list.iter().map(|s| id(s)).collect()
    }

    fn head_table() -> ClusterHeadTable {
        let topo = reference::cluster_one_dynamic();
        let rt = converge_cast(&topo, &discover_neighbors(&topo));
        let table = forward_to_controller(&[rt]).unwrap();
        let matrix = build_adjacency_matrix(&table, 1).unwrap();
        let info = derive_complete_info(&matrix, &table);
        ClusterHeadTable::from_complete_info(&info, CLUSTER_HEAD_ID)
    }

    fn leave_a(table: &mut ClusterHeadTable) -> BroadcastSet {
        let msg = Bit0Message {
            node_label: "A".into(),
            node_id: id("0100"),
            bit: 0,
            destination_id: CLUSTER_HEAD_ID,
        };
        apply_leave(table, &msg).unwrap()
    }

    #[test]
    fn head_table_adopts_records_with_head_destination() {
        let t = head_table();
        assert_eq!(t.records.len(), 6);
        for r in &t.records {
            assert_eq!(r.destination, CLUSTER_HEAD_ID);
            assert!(r.bit0_list.is_empty());
        }
        assert!(t.bit0_list.is_empty());
    }

    #[test]
    fn request_leave_window_gate() {
        let window = HeadWindow { current: Some((60_000, 70_000)), next_start_us: 130_000 };
        let msg =
            request_leave("A", id("0100"), 61_000, Mode::Dynamic, &window, CLUSTER_HEAD_ID)
                .unwrap();
        assert_eq!(
            msg,
            Bit0Message {
                node_label: "A".into(),
                node_id: id("0100"),
                bit: 0,
                destination_id: CLUSTER_HEAD_ID
            }
        );

        let outside = HeadWindow { current: None, next_start_us: 60_000 };
        assert_eq!(
            request_leave("A", id("0100"), 5_000, Mode::Dynamic, &outside, CLUSTER_HEAD_ID)
                .unwrap_err(),
            DynamicsError::OutsideWindow { next_window_us: 60_000 }
        );
        assert_eq!(
            request_leave("A", id("0100"), 61_000, Mode::Static, &window, CLUSTER_HEAD_ID)
                .unwrap_err(),
            DynamicsError::NotDynamicMode
        );
    }

    #[test]
    fn leave_of_a_updates_every_row() {
        let mut t = head_table();
        let broadcast = leave_a(&mut t);

        assert!(t.record(id("0100")).is_none());
        assert_eq!(t.bit0_list, ids(&["0100"]));
        assert_eq!(broadcast.recipients, ids(&["0001", "0010", "0011", "0101", "0111"]));

        let remaining = ids(&["0001", "0010", "0011", "0101", "0111"]);
        let b = t.record(id("0001")).unwrap();
        assert_eq!(b.neighbor_ids, ids(&["0111"]));
        assert_eq!(b.depths, vec![Depth(6)]);
        assert_eq!(b.not_neighbor_ids, ids(&["0001", "0010", "0011", "0101"]));
        assert_eq!(b.union_ids, remaining);
        assert_eq!(b.destination, CLUSTER_HEAD_ID);
        assert_eq!(b.bit0_list, ids(&["0100"]));

        let f = t.record(id("0010")).unwrap();
        assert_eq!(f.neighbor_ids, ids(&["0011"]));
        assert_eq!(f.depths, vec![Depth(1)]);

        let d = t.record(id("0101")).unwrap();
        assert_eq!(d.neighbor_ids, ids(&["0011", "0111"]));
        assert_eq!(d.not_neighbor_ids, ids(&["0001", "0010", "0101"]));

        for r in &t.records {
            assert!(!r.neighbor_ids.contains(&id("0100")));
            assert!(!r.not_neighbor_ids.contains(&id("0100")));
            assert!(!r.union_ids.contains(&id("0100")));
            assert_eq!(r.union_ids, remaining);
        }
    }

    #[test]
    fn leave_twice_is_unknown_node() {
        let mut t = head_table();
        leave_a(&mut t);
        let msg = Bit0Message {
            node_label: "A".into(),
            node_id: id("0100"),
            bit: 0,
            destination_id: CLUSTER_HEAD_ID,
        };
        assert_eq!(
            apply_leave(&mut t, &msg).unwrap_err(),
            DynamicsError::UnknownNode { id: id("0100") }
        );
    }

    #[test]
    fn join_report_for_g_matches_updated_b_row() {
        let t = head_table();
        let reports = build_join_reports(&t, id("1010"), &[id("0001")]).unwrap();
        assert_eq!(reports.len(), 1);
        let b = &reports[0];
        assert_eq!(b.node_id, id("0001"));
        assert_eq!(b.neighbor_ids, ids(&["0100", "0111", "1010"]));
        assert_eq!(b.depths, vec![Depth(3), Depth(6), Depth(9)]);
        assert_eq!(b.current_destination, CLUSTER_HEAD_ID);
    }

    #[test]
    fn join_of_g_via_b_updates_table() {
        let mut t = head_table();
        let reports = build_join_reports(&t, id("1010"), &[id("0001")]).unwrap();
        let broadcast = apply_join(&mut t, "G", id("1010"), &reports).unwrap();

        let full = ids(&["0001", "0010", "0011", "0100", "0101", "0111", "1010"]);
        let b = t.record(id("0001")).unwrap();
        assert_eq!(b.neighbor_ids, ids(&["0100", "0111", "1010"]));
        assert_eq!(b.depths, vec![Depth(3), Depth(6), Depth(9)]);
        assert_eq!(b.not_neighbor_ids, ids(&["0001", "0010", "0011", "0101"]));
        assert_eq!(b.union_ids, full);

        let g = t.record(id("1010")).unwrap();
        assert_eq!(g.node_label, "G");
        assert_eq!(g.neighbor_ids, ids(&["0001"]));
        assert_eq!(g.depths, vec![Depth(9)]);
        assert_eq!(
            g.not_neighbor_ids,
            ids(&["0010", "0011", "0100", "0101", "0111", "1010"])
        );
        assert_eq!(g.union_ids, full);
        assert_eq!(g.destination, CLUSTER_HEAD_ID);

        for r in &t.records {
            assert_eq!(r.union_ids, full);
        }
        // Broadcast goes to the six prior members; B relays to G.
        assert_eq!(broadcast.recipients.len(), 6);
        assert!(!broadcast.recipients.contains(&id("1010")));
        assert_eq!(broadcast.relays, vec![(id("0001"), id("1010"))]);
    }

    #[test]
    fn join_rejects_unknown_reporter() {
        let mut t = head_table();
        let mut reports = build_join_reports(&t, id("1010"), &[id("0001")]).unwrap();
        reports[0].node_id = id("0110");
        assert_eq!(
            apply_join(&mut t, "G", id("1010"), &reports).unwrap_err(),
            DynamicsError::UnknownReporter { id: id("0110") }
        );
    }

    #[test]
    fn announce_join_by_overlap() {
        let mut topo = ClusterTopology::new(1);
        topo.add_member("B", id("0001"), Some(NodePosition::new(0.0, 0.0, 1.0)));
        topo.add_member("F", id("0010"), Some(NodePosition::new(3.0, 0.0, 1.0)));
        let active: BTreeSet<NodeId> = [id("0001"), id("0010")].into_iter().collect();

        let near_b = NodePosition::new(1.5, 0.0, 1.0);
        assert_eq!(announce_join(near_b, &topo, &active).unwrap(), ids(&["0001", "0010"]));

        let only_b = NodePosition::new(-1.5, 0.0, 1.0);
        assert_eq!(announce_join(only_b, &topo, &active).unwrap(), ids(&["0001"]));

        let nowhere = NodePosition::new(100.0, 0.0, 1.0);
        assert_eq!(announce_join(nowhere, &topo, &active).unwrap_err(), DynamicsError::NoOverlap);
    }

    #[test]
    fn leave_then_rejoin_restores_table() {
        let mut t = head_table();
        let original = t.clone();
        leave_a(&mut t);
        // A rejoins with the same links (B and F overlap it again).
        let reports = build_join_reports(&t, id("0100"), &[id("0001"), id("0010")]).unwrap();
        apply_join(&mut t, "A", id("0100"), &reports).unwrap();

        assert!(t.bit0_list.is_empty());
        assert_eq!(t.member_ids(), original.member_ids());
        for orig in &original.records {
            let got = t.record(orig.node_id).unwrap();
            let want: BTreeSet<NodeId> = orig.neighbor_ids.iter().copied().collect();
            let have: BTreeSet<NodeId> = got.neighbor_ids.iter().copied().collect();
            assert_eq!(want, have, "neighbors of {}", orig.node_id);
            assert_eq!(orig.union_ids, got.union_ids);
            assert_eq!(orig.not_neighbor_ids, got.not_neighbor_ids);
        }
    }

    #[test]
    fn bit0_and_members_stay_disjoint_under_event_sequences() {
        let mut t = head_table();
        leave_a(&mut t);
        let reports = build_join_reports(&t, id("1010"), &[id("0001")]).unwrap();
        apply_join(&mut t, "G", id("1010"), &reports).unwrap();
        let msg = Bit0Message {
            node_label: "F".into(),
            node_id: id("0010"),
            bit: 0,
            destination_id: CLUSTER_HEAD_ID,
        };
        apply_leave(&mut t, &msg).unwrap();

        let members: BTreeSet<NodeId> = t.member_ids().into_iter().collect();
        let bit0: BTreeSet<NodeId> = t.bit0_list.iter().copied().collect();
        assert!(members.is_disjoint(&bit0));
        assert_eq!(bit0, ids(&["0100", "0010"]).into_iter().collect());
        let all: Vec<NodeId> = t.member_ids();
        for r in &t.records {
            assert_eq!(r.union_ids, all);
            assert_eq!(r.bit0_list, t.bit0_list);
        }
    }
}
