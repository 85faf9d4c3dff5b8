//! Sleep/wake scheduling for clustered wireless sensor networks, driven by an
//! adjacency matrix built at a central controller.
//!
//! The crate models one network as a set of clusters attached to a router
//! (ID `1000`) and a controller (ID `1001`). Setup runs in four stages:
//! binary ID assignment, neighbor discovery by local gossip, converge-cast of
//! neighbor reports to the controller, and broadcast of the complete node
//! information (neighbors, non-neighbors, their union, and depths) back to
//! every cluster member. Data sessions then route hop by hop along the
//! shortest ID-distance ("depth"), putting bystander nodes to sleep and
//! charging an energy ledger per state and per control frame.
//!
//! Modules follow the protocol stages:
//! - [`topology`]: node identities, clusters, gossip, depth.
//! - [`control_plane`]: router/controller tables, adjacency matrix,
//!   complete node information.
//! - [`scheduler`]: priority slots, next-hop selection, the per-hop
//!   rts/cts/data/ack/ack-conf exchange, sleep scheduling.
//! - [`dynamics`]: cluster-head managed membership (bit-0 leave, join).
//! - [`energy`]: power constants, closed-form session cost equations, and
//!   the per-node ledger.
//! - [`trace`]: the flat event record emitted by the simulation.

pub mod control_plane;
pub mod dynamics;
pub mod energy;
pub mod reference;
pub mod scheduler;
pub mod topology;
pub mod trace;

pub use control_plane::{AdjacencyMatrix, CompleteInfoRecord, CompleteInfoTable, NeighborReport};
pub use energy::{EnergyLedger, EnergyModel};
pub use topology::{ClusterTopology, Depth, NodeId};
pub use trace::TraceRecord;
