//! Scripted three-segment run with two relay-side drops, checked against a
//! stored trace and against the cache behaviour it should exhibit.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the stored trace.

mod common;

use common::{two_drop_scenario, GOLDEN_TRACE};

fn trace() -> String {
    let (m, t) = dtcsim::run_traced(&two_drop_scenario()).unwrap();
    assert_eq!(m.delivered_segments, 3);
    t
}

fn position(lines: &[&str], needle: &str) -> usize {
    lines
        .iter()
        .position(|l| l.starts_with(needle))
        .unwrap_or_else(|| panic!("no line starting with {needle:?}"))
}

#[test]
fn matches_stored_trace() {
    let t = trace();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(GOLDEN_TRACE, &t).unwrap();
    }
    let stored = std::fs::read_to_string(GOLDEN_TRACE).unwrap();
    assert!(t == stored, "trace differs from {GOLDEN_TRACE}");
}

#[test]
fn recovery_sequence() {
    let t = trace();
    let lines: Vec<&str> = t.lines().collect();

    // Neither dropped copy is link-acknowledged, so both relays lock.
    let lock5 = position(&lines, "DTC node=5 action=lock seq=1 ");
    let lock7 = position(&lines, "DTC node=7 action=lock seq=2 ");

    // The receiver has only segment 3.
    let first_ack = position(&lines, "TX node=receiver ACK no=1 sack={3} ");
    assert!(first_ack > lock5 && first_ack > lock7);

    // Relay 7 resends 2 and adds it to the SACK set on the way up.
    let retx7 = position(&lines, "DTC node=7 action=local_retx seq=2 ");
    let fwd7 = position(&lines, "TX node=7 ACK no=1 sack={2,3} ");
    assert!(first_ack < retx7 && retx7 < fwd7);

    // Relay 5 resends 1; with that every hole is plugged, so the ACK stops.
    let retx5 = position(&lines, "DTC node=5 action=local_retx seq=1 ");
    let drop5 = position(&lines, "DTC node=5 action=drop_ack seq=1 ");
    assert!(fwd7 < retx5 && retx5 < drop5);
    assert!(!lines.iter().any(|l| l.starts_with("TX node=5 ACK no=1 ")));

    // The cumulative ACK 4 empties every cache on its way to the sender.
    let final_ack = position(&lines, "TX node=receiver ACK no=4 ");
    for relay in 0..9 {
        let cleared = lines[final_ack..]
            .iter()
            .any(|l| l.starts_with(&format!("DTC node={relay} action=clear ")));
        assert!(cleared, "relay {relay} kept its cache");
    }
    // Recovery stayed inside the network.
    assert_eq!(lines.iter().filter(|l| l.starts_with("TX node=sender DATA")).count(), 3);
    assert!(lines.last().unwrap().starts_with("DONE "));
}
