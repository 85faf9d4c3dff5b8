//! Aligned plain-text dumps of the setup-phase tables, for golden-file
//! comparison: router tables, the controller table, adjacency matrices,
//! complete node information, and (in dynamic mode) the cluster head's
//! table after each membership event.

use adjsim_core::control_plane::{
    build_adjacency_matrix, converge_cast, derive_complete_info, forward_to_controller,
    AdjacencyMatrix, CompleteInfoRecord, ControllerTable, RouterTable,
};
use adjsim_core::dynamics::{
    apply_join, apply_leave, build_join_reports, Bit0Message, ClusterHeadTable,
};
use adjsim_core::topology::{discover_neighbors, Depth, NodeId, CLUSTER_HEAD_ID};

use crate::scenario::{EventKind, JoinAttach, Scenario};

/// Pads every column to its widest cell and joins cells with single spaces.
pub fn render_rows(rows: &[Vec<String>]) -> String {
    let columns = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            if i + 1 == row.len() {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<width$}", width = widths[i]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn join_ids(ids: &[NodeId]) -> String {
    if ids.is_empty() {
        return "-".to_string();
    }
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn join_depths(depths: &[Depth]) -> String {
    if depths.is_empty() {
        return "-".to_string();
    }
    depths.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

fn router_section(rt: &RouterTable) -> String {
    let mut rows = vec![vec![
        "cluster".into(),
        "node".into(),
        "id".into(),
        "|".into(),
        "neighbors".into(),
        "|".into(),
        "depths".into(),
        "|".into(),
        "current_dest".into(),
        "final_dest".into(),
    ]];
    for r in &rt.reports {
        rows.push(vec![
            r.cluster_number.to_string(),
            r.node_label.clone(),
            r.node_id.to_string(),
            "|".into(),
            join_ids(&r.neighbor_ids),
            "|".into(),
            join_depths(&r.depths),
            "|".into(),
            r.current_destination.to_string(),
            r.final_destination.to_string(),
        ]);
    }
    format!("Router table (cluster {})\n{}", rt.cluster_number, render_rows(&rows))
}

fn controller_section(table: &ControllerTable) -> String {
    let mut rows = vec![vec![
        "cluster".into(),
        "node".into(),
        "id".into(),
        "|".into(),
        "neighbors".into(),
        "|".into(),
        "source".into(),
        "dest".into(),
    ]];
    for r in &table.records {
        rows.push(vec![
            r.cluster_number.to_string(),
            r.node_label.clone(),
            r.node_id.to_string(),
            "|".into(),
            join_ids(&r.neighbor_ids),
            "|".into(),
            r.source_id.to_string(),
            r.destination_id.to_string(),
        ]);
    }
    format!("Controller table\n{}", render_rows(&rows))
}

fn matrix_section(m: &AdjacencyMatrix, labels: &dyn Fn(NodeId) -> String) -> String {
    let mut header = vec![
        "cluster".to_string(),
        "node".to_string(),
        "id".to_string(),
        "|".to_string(),
    ];
    header.extend(m.ids.iter().map(|i| i.to_string()));
    let mut rows = vec![header];
    for (i, id) in m.ids.iter().enumerate() {
        let mut row = vec![
            m.cluster_number.to_string(),
            labels(*id),
            id.to_string(),
            "|".to_string(),
        ];
        row.extend(m.cells[i].iter().map(|c| c.to_string()));
        rows.push(row);
    }
    format!("Adjacency matrix (cluster {})\n{}", m.cluster_number, render_rows(&rows))
}

fn complete_rows(records: &[CompleteInfoRecord], with_bit0: bool) -> Vec<Vec<String>> {
    let mut header = vec![
        "node".to_string(),
        "id".to_string(),
        "|".to_string(),
        "neighbors".to_string(),
        "|".to_string(),
        "not_neighbors".to_string(),
        "|".to_string(),
        "union".to_string(),
        "|".to_string(),
        "dest".to_string(),
        "cluster".to_string(),
        "|".to_string(),
        "depths".to_string(),
    ];
    if with_bit0 {
        header.push("|".to_string());
        header.push("bit0".to_string());
    }
    let mut rows = vec![header];
    for r in records {
        let mut row = vec![
            r.node_label.clone(),
            r.node_id.to_string(),
            "|".to_string(),
            join_ids(&r.neighbor_ids),
            "|".to_string(),
            join_ids(&r.not_neighbor_ids),
            "|".to_string(),
            join_ids(&r.union_ids),
            "|".to_string(),
            r.destination.to_string(),
            r.cluster_number.to_string(),
            "|".to_string(),
            join_depths(&r.depths),
        ];
        if with_bit0 {
            row.push("|".to_string());
            row.push(join_ids(&r.bit0_list));
        }
        rows.push(row);
    }
    rows
}

fn complete_section(cluster: u32, records: &[CompleteInfoRecord]) -> String {
    format!(
        "Complete info (cluster {})\n{}",
        cluster,
        render_rows(&complete_rows(records, false))
    )
}

fn head_section(title: &str, head: &ClusterHeadTable) -> String {
    format!(
        "{} (cluster {}, head {})\n{}",
        title,
        head.cluster_number,
        head.head_id,
        render_rows(&complete_rows(&head.records, true))
    )
}

/// Renders every setup table for the scenario; in dynamic mode, also the
/// head's table after each membership event (sessions and link events are
/// irrelevant to table content and ignored here).
pub fn emit_tables(scenario: &Scenario) -> String {
    let mut sections: Vec<String> = Vec::new();

    let mut router_tables = Vec::new();
    for topo in &scenario.clusters {
        let rt = converge_cast(topo, &discover_neighbors(topo));
        sections.push(router_section(&rt));
        router_tables.push(rt);
    }
    let controller =
        forward_to_controller(&router_tables).expect("cluster numbers validated unique");
    sections.push(controller_section(&controller));

    let mut infos = Vec::new();
    for topo in &scenario.clusters {
        let matrix = build_adjacency_matrix(&controller, topo.cluster_number)
            .expect("scenario links are symmetric");
        let labels = |id: NodeId| topo.label_of(id).unwrap_or("?").to_string();
        sections.push(matrix_section(&matrix, &labels));
        infos.push(derive_complete_info(&matrix, &controller));
    }
    for info in &infos {
        sections.push(complete_section(info.cluster_number, &info.records));
    }

    if scenario.mode == adjsim_core::dynamics::Mode::Dynamic {
        let info = infos.first().expect("dynamic mode has exactly one cluster");
        let mut head = ClusterHeadTable::from_complete_info(info, CLUSTER_HEAD_ID);
        sections.push(head_section("Cluster head table", &head));
        let mut events: Vec<_> = scenario.events.iter().collect();
        events.sort_by_key(|e| (e.t_us, e.decl_index));
        for ev in events {
            match &ev.kind {
                EventKind::Leave { label, node } => {
                    let msg = Bit0Message {
                        node_label: label.clone(),
                        node_id: *node,
                        bit: 0,
                        destination_id: head.head_id,
                    };
                    if apply_leave(&mut head, &msg).is_ok() {
                        sections
                            .push(head_section(&format!("Cluster head table after leave {label}"), &head));
                    }
                }
                EventKind::Join { label, id, attach } => {
                    let overlapped: Vec<NodeId> = match attach {
                        JoinAttach::Overlap(ids) => {
                            let members = head.member_ids();
                            ids.iter().copied().filter(|n| members.contains(n)).collect()
                        }
                        JoinAttach::Position(pos) => {
                            let topo = scenario
                                .cluster(ev.cluster)
                                .expect("event cluster exists");
                            let active = head.member_ids().into_iter().collect();
                            match adjsim_core::dynamics::announce_join(*pos, topo, &active) {
                                Ok(ids) => ids,
                                Err(_) => continue,
                            }
                        }
                    };
                    if overlapped.is_empty() {
                        continue;
                    }
                    let Ok(reports) = build_join_reports(&head, *id, &overlapped) else {
                        continue;
                    };
                    if apply_join(&mut head, label, *id, &reports).is_ok() {
                        sections
                            .push(head_section(&format!("Cluster head table after join {label}"), &head));
                    }
                }
                EventKind::LinkFail { .. } | EventKind::LinkHeal { .. } => {}
            }
        }
    }

    sections.join("\n")
}
