//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Criteria cover golden-table reproduction, the routing walkthrough, the
//! depth oracle, control-plane round trips, the energy equations, sleep
//! savings, dynamic membership, link-failure fallback, determinism, and
//! fair-share rotation.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use adjsim_cli::scenario::{parse_scenario, parse_scenario_seeded};
use adjsim_cli::{emit_tables, emit_trace, run};
use adjsim_core::control_plane::{
    build_adjacency_matrix, converge_cast, derive_complete_info, forward_to_controller,
};
use adjsim_core::dynamics::{
    apply_join, apply_leave, build_join_reports, Bit0Message, ClusterHeadTable,
};
use adjsim_core::energy::{
    charge, join_session_power, leave_session_power, state_slot_cost, static_session_power,
    ChargeState, EnergyLedger, EnergyModel, StateIndicators,
};
use adjsim_core::scheduler::build_priority_schedule;
use adjsim_core::topology::{
    depth, discover_neighbors, ClusterTopology, IdWidth, NodeId, CLUSTER_HEAD_ID,
};
use adjsim_core::trace::TraceKind;

fn load_bundled(name: &str) -> String {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).expect("bundled scenario readable")
}

fn id(s: &str) -> NodeId {
    s.parse().unwrap()
}

fn ids(list: &[&str]) -> Vec<NodeId> {
    list.iter().map(|s| id(s)).collect()
}

/// Sleep durations per node label, parsed from `sleep_enter` records.
fn sleep_durations_ms(trace: &[adjsim_core::TraceRecord]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in trace {
        if r.kind == TraceKind::SleepEnter {
            let ms: f64 = r
                .detail
                .strip_prefix("duration=")
                .and_then(|d| d.strip_suffix("ms"))
                .expect("sleep_enter detail shape")
                .parse()
                .expect("numeric duration");
            out.insert(r.node.clone(), ms);
        }
    }
    out
}

#[test]
fn criterion_01_golden_tables() {
    let started = Instant::now();
    let scenario = parse_scenario(&load_bundled("figure1.scn")).unwrap();
    let dump = emit_tables(&scenario);
    let expected = include_str!("golden/figure1_tables.txt");
    assert_eq!(dump, expected, "table dump drifted from the golden file");

    // Content checks against the published rows (depths recomputed from the
    // IDs where the source tables carry arithmetic typos).
    let topo = scenario.cluster(1).unwrap();
    let rt1 = converge_cast(topo, &discover_neighbors(topo));
    let rows: Vec<(&str, Vec<NodeId>, Vec<u8>)> = rt1
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
    let topo2 = scenario.cluster(2).unwrap();
    let rt2 = converge_cast(topo2, &discover_neighbors(topo2));
    assert_eq!(rt2.reports[0].neighbor_ids, ids(&["1100", "1101", "1011"]));
    assert_eq!(
        rt2.reports[0].depths.iter().map(|d| d.0).collect::<Vec<_>>(),
        vec![2, 3, 1]
    );

    let controller = forward_to_controller(&[rt1, rt2]).unwrap();
    assert_eq!(controller.records.len(), 12);
    let m1 = build_adjacency_matrix(&controller, 1).unwrap();
    assert_eq!(m1.row(id("0001")).unwrap(), &[0, 0, 0, 1, 0, 1]);
    let m2 = build_adjacency_matrix(&controller, 2).unwrap();
    assert_eq!(m2.row(id("1101")).unwrap(), &[1, 0, 0, 0, 1, 0]);
    let info = derive_complete_info(&m1, &controller);
    let b = info.record(id("0001")).unwrap();
    assert_eq!(b.not_neighbor_ids, ids(&["0001", "0010", "0011", "0101"]));
    assert_eq!(b.union_ids, ids(&["0001", "0010", "0011", "0100", "0101", "0111"]));

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "table emission took {elapsed:?}");
    println!("criterion 1 PASS: golden tables reproduced in {elapsed:?}");
}

#[test]
fn criterion_02_routing_walkthrough() {
    let scenario = parse_scenario(&load_bundled("figure1.scn")).unwrap();
    assert_eq!(scenario.schedule.timing.base_slot_us, 2000, "base_slot default is 2 ms");
    let out = run(&scenario);
    let s = &out.summary.sessions[0];
    assert_eq!(s.path_labels, ["A", "F", "E", "D"]);
    assert!(s.delivered);

    let durations = sleep_durations_ms(&out.trace);
    let sleepers: BTreeSet<&str> = durations.keys().map(|s| s.as_str()).collect();
    assert_eq!(sleepers, ["A", "B", "C", "F"].into_iter().collect::<BTreeSet<_>>());
    assert_eq!(durations["A"], 6.0);
    assert_eq!(durations["F"], 4.0);
    assert!(!durations.contains_key("E") && !durations.contains_key("D"));
    println!("criterion 2 PASS: A->D routes A-F-E-D; sleepers {{A,B,C,F}}; A=6ms F=4ms; E,D awake");
}

#[test]
fn criterion_03_depth_oracle() {
    for a in 0u8..16 {
        for b in 0u8..16 {
            let na = NodeId::new(a, IdWidth::Four).unwrap();
            let nb = NodeId::new(b, IdWidth::Four).unwrap();
            let expect = (a as i16 - b as i16).unsigned_abs() as u8;
            assert_eq!(depth(na, nb).0, expect);
        }
    }
    println!("criterion 3 PASS: depth equals |a-b| on all 256 pairs");
}

fn random_connected_topology(rng: &mut ChaCha8Rng) -> ClusterTopology {
    let n = rng.random_range(1..=8);
    let mut pool: Vec<u8> = (0u8..16).filter(|v| NodeId::sensor(*v).is_some()).collect();
    pool.shuffle(rng);
    pool.truncate(n);
    let mut topo = ClusterTopology::new(1);
    for v in &pool {
        topo.add_member(format!("N{v}"), NodeId::sensor(*v).unwrap(), None);
    }
    // Random spanning tree, then extra edges.
    for i in 1..n {
        let j = rng.random_range(0..i);
        topo.add_link(NodeId::sensor(pool[i]).unwrap(), NodeId::sensor(pool[j]).unwrap());
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_range(0..4) == 0 {
                topo.add_link(NodeId::sensor(pool[i]).unwrap(), NodeId::sensor(pool[j]).unwrap());
            }
        }
    }
    topo
}

#[test]
fn criterion_04_control_plane_round_trip() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4f5a);
    for case in 0..1000 {
        let topo = random_connected_topology(&mut rng);
        let rt = converge_cast(&topo, &discover_neighbors(&topo));
        let table = forward_to_controller(std::slice::from_ref(&rt)).unwrap();
        let matrix = build_adjacency_matrix(&table, 1).unwrap();
        let info = derive_complete_info(&matrix, &table);

        let n = matrix.ids.len();
        for i in 0..n {
            assert_eq!(matrix.cells[i][i], 0, "case {case}: nonzero diagonal");
            for j in 0..n {
                assert_eq!(matrix.cells[i][j], matrix.cells[j][i], "case {case}: asymmetry");
            }
        }
        for rec in &info.records {
            let got: BTreeSet<NodeId> = rec.neighbor_ids.iter().copied().collect();
            let want: BTreeSet<NodeId> = topo.neighbors(rec.node_id).into_iter().collect();
            assert_eq!(got, want, "case {case}: links not recovered");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "round trips took {elapsed:?}");
    println!("criterion 4 PASS: 1000 random topologies round-trip in {elapsed:?}");
}

#[test]
fn criterion_05_energy_equations() {
    let m = EnergyModel::default();
    assert_eq!(state_slot_cost(StateIndicators::transmitting(), &m).unwrap(), 60.0);
    assert_eq!(state_slot_cost(StateIndicators::sleeping(), &m).unwrap(), 0.09);
    assert_eq!(m.listen_sleep_ratio(), 500.0);

    // Reductions to the static equation with zero extra counts and zero
    // head terms.
    let reduced = EnergyModel { e_trans_ch_mj: 0.0, e_rcv_ch_mj: 0.0, ..EnergyModel::default() };
    for k in 0..5 {
        let stat = static_session_power(k, 100, &reduced).unwrap();
        assert_eq!(leave_session_power(k, 0, 0, &reduced), stat);
        assert_eq!(join_session_power(k, 0, 0, &reduced), stat);
    }

    // Monotonicity in every count argument over random non-negative models.
    let mut rng = ChaCha8Rng::seed_from_u64(0xe5e5);
    for _ in 0..500 {
        let mut f = || rng.random_range(0.0..50.0);
        let m = EnergyModel {
            p_tx_mw: f(),
            p_rcv_mw: f(),
            p_lst_mw: f(),
            p_slp_uw: f(),
            e_rts_mj: f(),
            e_cts_mj: f(),
            e_trans_mj: f(),
            e_ack_mj: f(),
            e_ackconf_mj: f(),
            e_node_mj: f(),
            e_trans_ch_mj: f(),
            e_rcv_ch_mj: f(),
            e_tr_mj: f(),
            e_comm_mj: f(),
            e_rcv_mj: f(),
            slot_ts_ms: 1000.0,
        };
        assert!(m.validate().is_ok());
        let mut g = || rng.random_range(0u32..6);
        let (k, v, n, h, b) = (g(), g(), g(), g(), g());
        assert!(
            static_session_power(k + 1, 100, &m).unwrap()
                >= static_session_power(k, 100, &m).unwrap()
        );
        for (da, db, dc) in [(1, 0, 0), (0, 1, 0), (0, 0, 1)] {
            assert!(leave_session_power(k + da, v + db, n + dc, &m) >= leave_session_power(k, v, n, &m));
            assert!(join_session_power(k + da, h + db, b + dc, &m) >= join_session_power(k, h, b, &m));
        }
    }
    println!("criterion 5 PASS: 60 mJ / 0.09 mJ slots, ratio 500, reductions, monotonicity");
}

#[test]
fn criterion_06_sleep_saving() {
    let out = run(&parse_scenario(&load_bundled("figure1.scn")).unwrap());
    let m = EnergyModel::default();
    let durations = sleep_durations_ms(&out.trace);
    assert_eq!(durations.len(), 4);
    for (label, ms) in &durations {
        let line = out
            .summary
            .per_node
            .iter()
            .find(|l| l.cluster == 1 && &l.label == label)
            .expect("slept node in summary");
        let slept_mj = line.energy.sleep_mj;
        let mut hypothetical = EnergyLedger::new();
        let listening_mj =
            charge(&mut hypothetical, id("0001"), ChargeState::Listen, *ms, &m).unwrap();
        let ratio = slept_mj / listening_mj;
        assert!(ratio <= 0.01, "{label}: sleep/listen ratio {ratio}");
        assert!((ratio - 0.002).abs() < 1e-9, "{label}: expected 0.2%, got {ratio}");
    }
    println!("criterion 6 PASS: sleeping costs 0.2% of listening for every slept interval");
}

#[test]
fn criterion_07_dynamic_leave_and_join() {
    // Leave of A, checked against the updated-table semantics.
    let scenario = parse_scenario(&load_bundled("figure1_leave.scn")).unwrap();
    let topo = scenario.cluster(1).unwrap();
    let rt = converge_cast(topo, &discover_neighbors(topo));
    let table = forward_to_controller(std::slice::from_ref(&rt)).unwrap();
    let matrix = build_adjacency_matrix(&table, 1).unwrap();
    let info = derive_complete_info(&matrix, &table);
    let mut head = ClusterHeadTable::from_complete_info(&info, CLUSTER_HEAD_ID);
    let msg = Bit0Message {
        node_label: "A".into(),
        node_id: id("0100"),
        bit: 0,
        destination_id: CLUSTER_HEAD_ID,
    };
    apply_leave(&mut head, &msg).unwrap();
    let b = head.record(id("0001")).unwrap();
    assert_eq!(b.neighbor_ids, ids(&["0111"]));
    assert_eq!(b.depths.iter().map(|d| d.0).collect::<Vec<_>>(), vec![6]);
    assert_eq!(head.bit0_list, ids(&["0100"]));
    assert_eq!(b.bit0_list, ids(&["0100"]));
    assert_eq!(b.destination, CLUSTER_HEAD_ID);
    assert!(head.record(id("0100")).is_none());

    // Join of G via B from the pristine table.
    let mut head = ClusterHeadTable::from_complete_info(&info, CLUSTER_HEAD_ID);
    let reports = build_join_reports(&head, id("1010"), &[id("0001")]).unwrap();
    apply_join(&mut head, "G", id("1010"), &reports).unwrap();
    let b = head.record(id("0001")).unwrap();
    assert_eq!(b.depths.iter().map(|d| d.0).collect::<Vec<_>>(), vec![3, 6, 9]);
    let g = head.record(id("1010")).unwrap();
    assert_eq!(g.depths.iter().map(|d| d.0).collect::<Vec<_>>(), vec![9]);
    assert_eq!(g.union_ids.len(), 7);

    // The same transitions through the simulator's table dumps.
    let leave_dump = emit_tables(&scenario);
    assert!(leave_dump.contains("Cluster head table after leave A"));
    let leave_section = leave_dump.split("after leave A").nth(1).unwrap();
    assert!(leave_section.contains("B    0001 | 0111"));
    let join_dump =
        emit_tables(&parse_scenario(&load_bundled("figure1_join.scn")).unwrap());
    let join_section = join_dump.split("after join G").nth(1).unwrap();
    assert!(join_section.contains("3,6,9"));
    assert!(join_section.contains("G    1010 | 0001"));
    println!("criterion 7 PASS: leave and join reproduce the updated head tables");
}

#[test]
fn criterion_08_link_failure_fallback() {
    let out = run(&parse_scenario(&load_bundled("figure1_linkfail.scn")).unwrap());
    let s = &out.summary.sessions[0];
    assert!(s.delivered);
    assert_eq!(s.path_labels[0], "A");
    assert_eq!(s.path_labels[1], "B", "first hop must go to the longest-depth neighbor");
    assert!(out.trace.iter().any(|r| r.kind == TraceKind::CtsTimeout));

    let out = run(&parse_scenario(&load_bundled("figure1_linkfail_both.scn")).unwrap());
    let s = &out.summary.sessions[0];
    assert!(!s.delivered);
    assert_eq!(s.path_labels, ["A"]);
    let timeouts = out.trace.iter().filter(|r| r.kind == TraceKind::CtsTimeout).count();
    assert_eq!(timeouts, 2, "both neighbors tried before the abort");
    println!("criterion 8 PASS: fallback to B on one failure; abort on both");
}

#[test]
fn criterion_09_determinism() {
    let bundled = [
        "figure1.scn",
        "figure1_leave.scn",
        "figure1_join.scn",
        "figure1_linkfail.scn",
        "figure1_linkfail_both.scn",
    ];
    for name in bundled {
        let text = load_bundled(name);
        let a = emit_trace(&run(&parse_scenario(&text).unwrap()).trace);
        let b = emit_trace(&run(&parse_scenario(&text).unwrap()).trace);
        assert_eq!(a, b, "{name}: same seed must give byte-identical traces");
    }

    // Bundled scenarios use explicit IDs and finish inside round 0, so no
    // randomness is consumed at all: different seeds give identical traces.
    let text = load_bundled("figure1.scn");
    let a = emit_trace(&run(&parse_scenario_seeded(&text, Some(1)).unwrap()).trace);
    let b = emit_trace(&run(&parse_scenario_seeded(&text, Some(2)).unwrap()).trace);
    assert_eq!(a, b, "seed may only influence rotation and auto-assigned IDs");

    // Where seeds are allowed to matter: round >= 1 order and auto IDs.
    let ids_cluster1 = parse_scenario(&text).unwrap().cluster(1).unwrap().member_ids();
    let mut r1 = ChaCha8Rng::seed_from_u64(1);
    let mut r2 = ChaCha8Rng::seed_from_u64(2);
    assert_eq!(
        build_priority_schedule(&ids_cluster1, 0, 10_000, &mut r1).unwrap().order,
        build_priority_schedule(&ids_cluster1, 0, 10_000, &mut r2).unwrap().order,
        "round 0 is seed-independent"
    );
    let auto = "cluster 1\nnode X\nnode Y\nnode Z\n";
    let a = parse_scenario_seeded(auto, Some(1)).unwrap();
    let b = parse_scenario_seeded(auto, Some(2)).unwrap();
    let pick = |s: &adjsim_cli::Scenario| {
        s.cluster(1).unwrap().members().iter().map(|m| m.id).collect::<Vec<_>>()
    };
    assert_ne!(pick(&a), pick(&b), "auto-assigned IDs follow the seed");
    println!("criterion 9 PASS: traces byte-identical per seed; divergence limited to rotation and auto IDs");
}

#[test]
fn criterion_10_fair_share_rotation() {
    let started = Instant::now();
    let scenario = parse_scenario(&load_bundled("figure1.scn")).unwrap();
    let members = scenario.cluster(1).unwrap().member_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut slot0: BTreeSet<NodeId> = BTreeSet::new();
    for round in 0..50 {
        let schedule = build_priority_schedule(&members, round, 10_000, &mut rng).unwrap();
        slot0.insert(schedule.order[0]);
        let mut sorted = schedule.order.clone();
        sorted.sort();
        assert_eq!(sorted, members, "round {round} is not a permutation");
    }
    assert_eq!(
        slot0.len(),
        members.len(),
        "every node must hold slot 0 at least once over 50 rounds"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0);
    println!("criterion 10 PASS: all six nodes held slot 0 within 50 rounds ({elapsed:?})");
}
