//! The setup phase: converge-cast of neighbor reports to the router,
//! forwarding to the controller, adjacency-matrix and complete-information
//! construction, and broadcast back to the cluster nodes.
//!
//! All functions here are pure transformations over immutable inputs; the
//! simulator owns their sequencing and trace emission.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::topology::{ClusterTopology, Depth, NodeGossip, NodeId};

/// One node's neighbor information as received by the router (one row of the
/// router table).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborReport {
    pub cluster_number: u32,
    pub node_label: String,
    pub node_id: NodeId,
    pub neighbor_ids: Vec<NodeId>,
    /// Parallel to `neighbor_ids`.
    pub depths: Vec<Depth>,
    pub current_destination: NodeId,
    pub final_destination: NodeId,
}

/// Router-side table for one cluster, rows in gossip priority order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterTable {
    pub cluster_number: u32,
    pub reports: Vec<NeighborReport>,
}

/// Sends every node's neighbor report to the router, lowest ID first.
///
/// `gossip` must come from [`crate::topology::discover_neighbors`] on the
/// same topology. In dynamic mode the reports target the cluster head
/// instead of the router.
pub fn converge_cast(topology: &ClusterTopology, gossip: &[NodeGossip]) -> RouterTable {
    let current = topology.cluster_head_id.unwrap_or(topology.router_id);
    let reports = gossip
        .iter()
        .map(|g| NeighborReport {
            cluster_number: topology.cluster_number,
            node_label: topology.label_of(g.node_id).unwrap_or("?").to_string(),
            node_id: g.node_id,
            neighbor_ids: g.neighbors.iter().map(|(n, _)| *n).collect(),
            depths: g.neighbors.iter().map(|(_, d)| *d).collect(),
            current_destination: current,
            final_destination: topology.controller_id,
        })
        .collect();
    RouterTable { cluster_number: topology.cluster_number, reports }
}

/// One row of the controller's merged table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerRecord {
    pub cluster_number: u32,
    pub node_label: String,
    pub node_id: NodeId,
    pub neighbor_ids: Vec<NodeId>,
    pub depths: Vec<Depth>,
    pub source_id: NodeId,
    pub destination_id: NodeId,
}

/// All clusters' node information as held by the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerTable {
    pub records: Vec<ControllerRecord>,
}

impl ControllerTable {
    pub fn cluster_records(&self, cluster: u32) -> Vec<&ControllerRecord> {
        self.records.iter().filter(|r| r.cluster_number == cluster).collect()
    }

    pub fn cluster_numbers(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.records.iter().map(|r| r.cluster_number).collect();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlPlaneError {
    #[error("two router tables claim cluster {cluster}")]
    DuplicateCluster { cluster: u32 },
    #[error("cluster {cluster} not present in the controller table")]
    UnknownCluster { cluster: u32 },
    #[error("node {node} reports neighbor {neighbor} outside its cluster")]
    UnknownNeighbor { node: NodeId, neighbor: NodeId },
    /// One side lists the other as a neighbor but not vice versa. Reported,
    /// never silently repaired.
    #[error("asymmetric neighbor reports: {pairs:?}")]
    AsymmetricReports { pairs: Vec<(NodeId, NodeId)> },
}

/// Merges the routers' tables cluster-wise then ID-wise, recoding source and
/// destination to router and controller.
pub fn forward_to_controller(tables: &[RouterTable]) -> Result<ControllerTable, ControlPlaneError> {
    let mut seen = BTreeSet::new();
    for t in tables {
        if !seen.insert(t.cluster_number) {
            return Err(ControlPlaneError::DuplicateCluster { cluster: t.cluster_number });
        }
    }
    let mut ordered: Vec<&RouterTable> = tables.iter().collect();
    ordered.sort_by_key(|t| t.cluster_number);
    let records = ordered
        .iter()
        .flat_map(|t| t.reports.iter())
        .map(|r| ControllerRecord {
            cluster_number: r.cluster_number,
            node_label: r.node_label.clone(),
            node_id: r.node_id,
            neighbor_ids: r.neighbor_ids.clone(),
            depths: r.depths.clone(),
            source_id: crate::topology::ROUTER_ID,
            destination_id: crate::topology::CONTROLLER_ID,
        })
        .collect();
    Ok(ControllerTable { records })
}

/// Square 0/1 neighbor matrix over one cluster's IDs, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    pub cluster_number: u32,
    pub ids: Vec<NodeId>,
    pub cells: Vec<Vec<u8>>,
}

impl AdjacencyMatrix {
    pub fn cell(&self, i: usize, j: usize) -> u8 {
        self.cells[i][j]
    }

    pub fn row(&self, id: NodeId) -> Option<&[u8]> {
        let i = self.ids.iter().position(|x| *x == id)?;
        Some(&self.cells[i])
    }

    pub fn degree(&self, id: NodeId) -> Option<usize> {
        self.row(id).map(|r| r.iter().map(|&c| c as usize).sum())
    }
}

/// Builds the adjacency matrix for one cluster from the controller table:
/// 1 where the column ID appears in the row node's neighbor list, 0
/// otherwise.
pub fn build_adjacency_matrix(
    table: &ControllerTable,
    cluster: u32,
) -> Result<AdjacencyMatrix, ControlPlaneError> {
    let records = table.cluster_records(cluster);
    if records.is_empty() {
        return Err(ControlPlaneError::UnknownCluster { cluster });
    }
    let mut ids: Vec<NodeId> = records.iter().map(|r| r.node_id).collect();
    ids.sort();
    let index = |id: NodeId| ids.iter().position(|x| *x == id);

    let n = ids.len();
    let mut cells = vec![vec![0u8; n]; n];
    for r in &records {
        let i = index(r.node_id).expect("own id indexed");
        for &nb in &r.neighbor_ids {
            let j = index(nb)
                .ok_or(ControlPlaneError::UnknownNeighbor { node: r.node_id, neighbor: nb })?;
            cells[i][j] = 1;
        }
    }

    let mut asymmetric = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if cells[i][j] != cells[j][i] {
                asymmetric.push((ids[i], ids[j]));
            }
        }
    }
    if !asymmetric.is_empty() {
        return Err(ControlPlaneError::AsymmetricReports { pairs: asymmetric });
    }

    Ok(AdjacencyMatrix { cluster_number: cluster, ids, cells })
}

/// One row of the complete node information table.
///
/// The not-neighbor list is the full cluster ID set minus the neighbors and
/// includes the node's own ID, so the union column always equals the whole
/// cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteInfoRecord {
    pub node_label: String,
    pub node_id: NodeId,
    pub neighbor_ids: Vec<NodeId>,
    pub not_neighbor_ids: Vec<NodeId>,
    pub union_ids: Vec<NodeId>,
    pub destination: NodeId,
    pub cluster_number: u32,
    /// Parallel to `neighbor_ids`; depths toward non-neighbors are never
    /// stored.
    pub depths: Vec<Depth>,
    /// Empty in static mode.
    pub bit0_list: Vec<NodeId>,
}

/// Complete node information for one cluster, rows in ascending ID order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteInfoTable {
    pub cluster_number: u32,
    pub records: Vec<CompleteInfoRecord>,
}

impl CompleteInfoTable {
    pub fn record(&self, id: NodeId) -> Option<&CompleteInfoRecord> {
        self.records.iter().find(|r| r.node_id == id)
    }

    pub fn record_by_label(&self, label: &str) -> Option<&CompleteInfoRecord> {
        self.records.iter().find(|r| r.node_label == label)
    }

    /// Member IDs, ascending.
    pub fn member_ids(&self) -> Vec<NodeId> {
        self.records.iter().map(|r| r.node_id).collect()
    }
}

/// Expands the adjacency matrix into per-node complete information. The
/// matrix must have been built from the same controller table.
pub fn derive_complete_info(
    matrix: &AdjacencyMatrix,
    table: &ControllerTable,
) -> CompleteInfoTable {
    let all: Vec<NodeId> = matrix.ids.clone();
    let records = all
        .iter()
        .map(|&id| {
            let src = table
                .cluster_records(matrix.cluster_number)
                .into_iter()
                .find(|r| r.node_id == id)
                .expect("matrix id present in controller table");
            let neighbor_set: BTreeSet<NodeId> = src.neighbor_ids.iter().copied().collect();
            let not_neighbors: Vec<NodeId> =
                all.iter().copied().filter(|x| !neighbor_set.contains(x)).collect();
            CompleteInfoRecord {
                node_label: src.node_label.clone(),
                node_id: id,
                neighbor_ids: src.neighbor_ids.clone(),
                not_neighbor_ids: not_neighbors,
                union_ids: all.clone(),
                destination: src.source_id,
                cluster_number: matrix.cluster_number,
                depths: src.depths.clone(),
                bit0_list: Vec::new(),
            }
        })
        .collect();
    CompleteInfoTable { cluster_number: matrix.cluster_number, records }
}

/// One node's delivered copy of the complete information table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoDelivery {
    pub destination: NodeId,
    pub table: CompleteInfoTable,
}

/// Broadcasts the complete table to every member of its cluster. Each member
/// receives an identical copy; the simulator records the controller-to-router
/// and router-to-node legs as trace events.
pub fn broadcast_complete_info(
    complete: &CompleteInfoTable,
    topology: &ClusterTopology,
) -> Vec<InfoDelivery> {
    topology
        .member_ids()
        .into_iter()
        .map(|destination| InfoDelivery { destination, table: complete.clone() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use crate::topology::{
        depth, discover_neighbors, ClusterTopology, NodeId, CONTROLLER_ID, ROUTER_ID,
    };
    use proptest::prelude::*;

    fn id(s: &str) -> NodeId {
        s.parse().unwrap()
    }

    fn ids(list: &[&str]) -> Vec<NodeId> {
        list.iter().map(|s| id(s)).collect()
    }

    fn router_table_one() -> RouterTable {
        let topo = reference::cluster_one();
        converge_cast(&topo, &discover_neighbors(&topo))
    }

    fn router_table_two() -> RouterTable {
        let topo = reference::cluster_two();
        converge_cast(&topo, &discover_neighbors(&topo))
    }

    fn complete_info_one() -> CompleteInfoTable {
        let table = forward_to_controller(&[router_table_one()]).unwrap();
        let matrix = build_adjacency_matrix(&table, 1).unwrap();
        derive_complete_info(&matrix, &table)
    }

    #[test]
    fn converge_cast_cluster_one_rows() {
        let rt = router_table_one();
        assert_eq!(rt.reports.len(), 6);
        let b = &rt.reports[0];
        assert_eq!(
            (b.cluster_number, b.node_label.as_str(), b.node_id),
            (1, "B", id("0001"))
        );
        assert_eq!(b.neighbor_ids, ids(&["0100", "0111"]));
        assert_eq!(b.depths, vec![Depth(3), Depth(6)]);
        assert_eq!((b.current_destination, b.final_destination), (ROUTER_ID, CONTROLLER_ID));

        let rows: Vec<(&str, Vec<NodeId>, Vec<u8>)> = rt
            .reports
            .iter()
            .map(|r| {
                (
                    r.node_label.as_str(),
                    r.neighbor_ids.clone(),
                    r.depths.iter().map(|d| d.0).collect(),
                )
            })
            .collect();
        assert_eq!(
            rows,
            vec![
                ("B", ids(&["0100", "0111"]), vec![3, 6]),
                ("F", ids(&["0100", "0011"]), vec![2, 1]),
                ("E", ids(&["0010", "0101"]), vec![1, 2]),
                ("A", ids(&["0001", "0010"]), vec![3, 2]),
                ("D", ids(&["0011", "0111"]), vec![2, 2]),
                ("C", ids(&["0001", "0101"]), vec![6, 2]),
            ]
        );
    }

    #[test]
    fn converge_cast_cluster_two_rows() {
        let rt = router_table_two();
        let g = &rt.reports[0];
        assert_eq!((g.cluster_number, g.node_label.as_str()), (2, "G"));
        assert_eq!(g.neighbor_ids, ids(&["1100", "1101", "1011"]));
        assert_eq!(g.depths, vec![Depth(2), Depth(3), Depth(1)]);

        let rows: Vec<(&str, Vec<NodeId>, Vec<u8>)> = rt
            .reports
            .iter()
            .map(|r| {
                (
                    r.node_label.as_str(),
                    r.neighbor_ids.clone(),
                    r.depths.iter().map(|d| d.0).collect(),
                )
            })
            .collect();
        assert_eq!(
            rows,
            vec![
                ("G", ids(&["1100", "1101", "1011"]), vec![2, 3, 1]),
                ("I", ids(&["1100", "1111", "1010"]), vec![1, 4, 1]),
                ("H", ids(&["1011", "1010", "1110"]), vec![1, 2, 2]),
                ("L", ids(&["1110", "1010"]), vec![1, 3]),
                // K's middle depth is 1: |1110 - 1101|. Depth entries are
                // always recomputed from the IDs, never copied.
                ("K", ids(&["1111", "1101", "1100"]), vec![1, 1, 2]),
                ("J", ids(&["1011", "1110"]), vec![4, 1]),
            ]
        );
    }

    #[test]
    fn converge_cast_empty_cluster() {
        let topo = ClusterTopology::new(3);
        let rt = converge_cast(&topo, &discover_neighbors(&topo));
        assert!(rt.reports.is_empty());
    }

    #[test]
    fn forward_merges_cluster_wise_then_id_wise() {
        let t = forward_to_controller(&[router_table_two(), router_table_one()]).unwrap();
        assert_eq!(t.records.len(), 12);
        let order: Vec<(u32, &str)> =
            t.records.iter().map(|r| (r.cluster_number, r.node_label.as_str())).collect();
        assert_eq!(
            order,
            vec![
                (1, "B"),
                (1, "F"),
                (1, "E"),
                (1, "A"),
                (1, "D"),
                (1, "C"),
                (2, "G"),
                (2, "I"),
                (2, "H"),
                (2, "L"),
                (2, "K"),
                (2, "J"),
            ]
        );
        for r in &t.records {
            assert_eq!((r.source_id, r.destination_id), (ROUTER_ID, CONTROLLER_ID));
        }
    }

    #[test]
    fn forward_rejects_duplicate_cluster() {
        let mut dup = router_table_one();
        dup.cluster_number = 1;
        let err = forward_to_controller(&[router_table_one(), dup]).unwrap_err();
        assert_eq!(err, ControlPlaneError::DuplicateCluster { cluster: 1 });
    }

    #[test]
    fn adjacency_matrix_cluster_one() {
        let table = forward_to_controller(&[router_table_one()]).unwrap();
        let m = build_adjacency_matrix(&table, 1).unwrap();
        assert_eq!(m.ids, ids(&["0001", "0010", "0011", "0100", "0101", "0111"]));
        assert_eq!(m.row(id("0001")).unwrap(), &[0, 0, 0, 1, 0, 1]);
        assert_eq!(m.row(id("0010")).unwrap(), &[0, 0, 1, 1, 0, 0]);
        assert_eq!(m.row(id("0011")).unwrap(), &[0, 1, 0, 0, 1, 0]);
        assert_eq!(m.row(id("0100")).unwrap(), &[1, 1, 0, 0, 0, 0]);
        assert_eq!(m.row(id("0101")).unwrap(), &[0, 0, 1, 0, 0, 1]);
        assert_eq!(m.row(id("0111")).unwrap(), &[1, 0, 0, 0, 1, 0]);
    }

    #[test]
    fn adjacency_matrix_cluster_two() {
        let table = forward_to_controller(&[router_table_two()]).unwrap();
        let m = build_adjacency_matrix(&table, 2).unwrap();
        assert_eq!(m.ids, ids(&["1010", "1011", "1100", "1101", "1110", "1111"]));
        assert_eq!(m.row(id("1010")).unwrap(), &[0, 1, 1, 1, 0, 0]);
        assert_eq!(m.row(id("1011")).unwrap(), &[1, 0, 1, 0, 0, 1]);
        assert_eq!(m.row(id("1100")).unwrap(), &[1, 1, 0, 0, 1, 0]);
        assert_eq!(m.row(id("1101")).unwrap(), &[1, 0, 0, 0, 1, 0]);
        assert_eq!(m.row(id("1110")).unwrap(), &[0, 0, 1, 1, 0, 1]);
        assert_eq!(m.row(id("1111")).unwrap(), &[0, 1, 0, 0, 1, 0]);
    }

    #[test]
    fn adjacency_matrix_isolated_node() {
        let mut topo = ClusterTopology::new(5);
        topo.add_member("X", id("0001"), None);
        let table =
            forward_to_controller(&[converge_cast(&topo, &discover_neighbors(&topo))]).unwrap();
        let m = build_adjacency_matrix(&table, 5).unwrap();
        assert_eq!(m.cells, vec![vec![0]]);
    }

    #[test]
    fn adjacency_matrix_unknown_cluster_and_asymmetry() {
        let table = forward_to_controller(&[router_table_one()]).unwrap();
        assert_eq!(
            build_adjacency_matrix(&table, 9).unwrap_err(),
            ControlPlaneError::UnknownCluster { cluster: 9 }
        );

        let mut broken = table.clone();
        broken.records[0].neighbor_ids.push(id("0010")); // B claims F one-sidedly
        broken.records[0].depths.push(depth(id("0001"), id("0010")));
        let err = build_adjacency_matrix(&broken, 1).unwrap_err();
        assert_eq!(
            err,
            ControlPlaneError::AsymmetricReports { pairs: vec![(id("0001"), id("0010"))] }
        );
    }

    #[test]
    fn complete_info_rows_for_cluster_one() {
        let info = complete_info_one();
        let all = ids(&["0001", "0010", "0011", "0100", "0101", "0111"]);

        let b = info.record(id("0001")).unwrap();
        assert_eq!(b.neighbor_ids, ids(&["0100", "0111"]));
        assert_eq!(b.not_neighbor_ids, ids(&["0001", "0010", "0011", "0101"]));
        assert_eq!(b.union_ids, all);
        assert_eq!(b.depths, vec![Depth(3), Depth(6)]);
        assert_eq!(b.destination, ROUTER_ID);
        assert!(b.bit0_list.is_empty());

        let f = info.record(id("0010")).unwrap();
        assert_eq!(f.neighbor_ids, ids(&["0100", "0011"]));
        assert_eq!(f.depths, vec![Depth(2), Depth(1)]);
        assert_eq!(f.not_neighbor_ids, ids(&["0001", "0010", "0101", "0111"]));

        for r in &info.records {
            assert_eq!(r.union_ids, all);
            assert!(r.not_neighbor_ids.contains(&r.node_id));
        }
    }

    #[test]
    fn complete_info_two_node_cluster() {
        // Oracle: with members {x, y} fully connected, x's not-neighbors are
        // just {x} and the union is the whole pair.
        let mut topo = ClusterTopology::new(1);
        topo.add_member("X", id("0001"), None);
        topo.add_member("Y", id("0010"), None);
        topo.add_link(id("0001"), id("0010"));
        let table =
            forward_to_controller(&[converge_cast(&topo, &discover_neighbors(&topo))]).unwrap();
        let m = build_adjacency_matrix(&table, 1).unwrap();
        let info = derive_complete_info(&m, &table);
        let x = info.record(id("0001")).unwrap();
        assert_eq!(x.not_neighbor_ids, ids(&["0001"]));
        assert_eq!(x.union_ids, ids(&["0001", "0010"]));
    }

    #[test]
    fn broadcast_delivers_to_every_member() {
        let info = complete_info_one();
        let deliveries = broadcast_complete_info(&info, &reference::cluster_one());
        assert_eq!(deliveries.len(), 6);
        for d in &deliveries {
            assert_eq!(d.table, info);
        }
        let empty =
            CompleteInfoTable { cluster_number: 3, records: Vec::new() };
        assert!(broadcast_complete_info(&empty, &ClusterTopology::new(3)).is_empty());
    }

    // Random-topology strategy: up to 8 nodes from the 14 usable IDs plus an
    // arbitrary subset of the possible links.
    fn arb_topology() -> impl Strategy<Value = ClusterTopology> {
        (1usize..=8, proptest::collection::vec(any::<bool>(), 28), any::<u64>()).prop_map(
            |(n, edge_bits, salt)| {
                let usable: Vec<u8> =
                    (0u8..16).filter(|v| NodeId::sensor(*v).is_some()).collect();
                let mut picked: Vec<u8> = usable.clone();
                // Deterministic pseudo-shuffle driven by the salt.
                picked.sort_by_key(|v| (salt.wrapping_mul(31).wrapping_add(*v as u64 * 2654435761)) % 1009);
                picked.truncate(n);
                let mut topo = ClusterTopology::new(1);
                for v in &picked {
                    topo.add_member(format!("N{v}"), NodeId::sensor(*v).unwrap(), None);
                }
                let mut k = 0;
                for i in 0..n {
                    for j in (i + 1)..n {
                        if edge_bits[k % edge_bits.len()] {
                            topo.add_link(
                                NodeId::sensor(picked[i]).unwrap(),
                                NodeId::sensor(picked[j]).unwrap(),
                            );
                        }
                        k += 1;
                    }
                }
                topo
            },
        )
    }

    proptest! {
        // Full pipeline recovers the original link set, and the matrix is
        // symmetric with a zero diagonal and degree-valued row sums.
        #[test]
        fn round_trip_recovers_links(topo in arb_topology()) {
            let gossip = discover_neighbors(&topo);
            let rt = converge_cast(&topo, &gossip);
            let table = forward_to_controller(std::slice::from_ref(&rt)).unwrap();
            let m = build_adjacency_matrix(&table, 1).unwrap();
            let info = derive_complete_info(&m, &table);

            let n = m.ids.len();
            for i in 0..n {
                prop_assert_eq!(m.cells[i][i], 0);
                for j in 0..n {
                    prop_assert_eq!(m.cells[i][j], m.cells[j][i]);
                }
            }

            let mut union_seen: Option<Vec<NodeId>> = None;
            for r in &info.records {
                let got: BTreeSet<NodeId> = r.neighbor_ids.iter().copied().collect();
                let want: BTreeSet<NodeId> = topo.neighbors(r.node_id).into_iter().collect();
                prop_assert_eq!(&got, &want);
                prop_assert_eq!(m.degree(r.node_id).unwrap(), want.len());
                match &union_seen {
                    None => union_seen = Some(r.union_ids.clone()),
                    Some(u) => prop_assert_eq!(u, &r.union_ids),
                }
                let rebuilt: BTreeSet<NodeId> = r
                    .neighbor_ids
                    .iter()
                    .chain(r.not_neighbor_ids.iter())
                    .copied()
                    .collect();
                let full: BTreeSet<NodeId> = r.union_ids.iter().copied().collect();
                prop_assert_eq!(rebuilt, full);
            }
        }

        #[test]
        fn depths_in_reports_match_depth_fn(topo in arb_topology()) {
            let rt = converge_cast(&topo, &discover_neighbors(&topo));
            for r in &rt.reports {
                for (nb, d) in r.neighbor_ids.iter().zip(&r.depths) {
                    prop_assert_eq!(*d, depth(r.node_id, *nb));
                }
            }
        }
    }

    #[test]
    fn forward_single_cluster_recodes_only_endpoints() {
        let rt = router_table_one();
        let table = forward_to_controller(std::slice::from_ref(&rt)).unwrap();
        for (a, b) in rt.reports.iter().zip(&table.records) {
            assert_eq!(a.node_id, b.node_id);
            assert_eq!(a.neighbor_ids, b.neighbor_ids);
            assert_eq!(b.source_id, ROUTER_ID);
            assert_eq!(b.destination_id, CONTROLLER_ID);
        }
    }
}
