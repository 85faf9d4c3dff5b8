//! The canonical two-cluster demo network used by the bundled scenarios and
//! the golden tests.
//!
//! Cluster 1 is the six-node ring A-B-C-D-E-F-A; cluster 2 is a six-node
//! mesh G..L. Both use explicit IDs, and a handful of nodes pin their
//! neighbor-list order so report tables render in the canonical order.

use crate::topology::{ClusterTopology, NodeId, CLUSTER_HEAD_ID};

fn id(s: &str) -> NodeId {
    s.parse().expect("literal id")
}

/// Cluster 1: labels A..F on the ring A-B-C-D-E-F-A.
pub fn cluster_one() -> ClusterTopology {
    let mut t = ClusterTopology::new(1);
    for (label, v) in [("A", "0100"), ("B", "0001"), ("C", "0111"), ("D", "0101"), ("E", "0011"), ("F", "0010")] {
        t.add_member(label, id(v), None);
    }
    for (a, b) in [("0100", "0001"), ("0001", "0111"), ("0100", "0010"), ("0011", "0010"), ("0101", "0011"), ("0111", "0101")] {
        t.add_link(id(a), id(b));
    }
    t.set_neighbor_order(id("0010"), vec![id("0100"), id("0011")]);
    t
}

/// Cluster 1 in dynamic mode (cluster head attached).
pub fn cluster_one_dynamic() -> ClusterTopology {
    cluster_one().with_cluster_head(CLUSTER_HEAD_ID)
}

/// Cluster 2: labels G..L.
pub fn cluster_two() -> ClusterTopology {
    let mut t = ClusterTopology::new(2);
    for (label, v) in [("G", "1010"), ("H", "1100"), ("I", "1011"), ("J", "1111"), ("K", "1110"), ("L", "1101")] {
        t.add_member(label, id(v), None);
    }
    for (a, b) in [
        ("1010", "1100"),
        ("1010", "1011"),
        ("1010", "1101"),
        ("1100", "1011"),
        ("1100", "1110"),
        ("1011", "1111"),
        ("1111", "1110"),
        ("1110", "1101"),
    ] {
        t.add_link(id(a), id(b));
    }
    t.set_neighbor_order(id("1010"), vec![id("1100"), id("1101"), id("1011")]);
    t.set_neighbor_order(id("1011"), vec![id("1100"), id("1111"), id("1010")]);
    t.set_neighbor_order(id("1100"), vec![id("1011"), id("1010"), id("1110")]);
    t.set_neighbor_order(id("1101"), vec![id("1110"), id("1010")]);
    t.set_neighbor_order(id("1110"), vec![id("1111"), id("1101"), id("1100")]);
    t
}
