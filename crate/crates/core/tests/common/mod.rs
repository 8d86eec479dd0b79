#![allow(dead_code)]

use dtcsim::harness::ForcedLoss;
use dtcsim::packet::{NodeId, SegmentNo};
use dtcsim::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GOLDEN_TRACE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/two_drop_trace.txt");

/// Three segments over ten lossless hops. Relay 5 loses the first copy of
/// segment 1 and relay 7 the first copy of segment 2, so neither sees an
/// LL-ACK for them.
pub fn two_drop_scenario() -> Scenario {
    let mut s = Scenario::new(10, 0.0, true, 1);
    s.total_segments = 3;
    s.forced_losses = vec![
        ForcedLoss {
            from: NodeId::Relay(5),
            seq: SegmentNo(1),
        },
        ForcedLoss {
            from: NodeId::Relay(7),
            seq: SegmentNo(2),
        },
    ];
    s
}

/// Expected end-to-end attempts per segment for stop-and-wait without any
/// in-network help: an attempt succeeds when every data hop and every ACK
/// hop survives.
pub fn analytic_attempts(hops: u32, p_data: f64) -> f64 {
    let q = (1.0 - p_data).powi(hops as i32) * (1.0 - p_data / 2.0).powi(hops as i32);
    1.0 / q
}

/// Mean attempts per segment from `trials` simulated Bernoulli attempt
/// chains. Deliberately shares nothing with the simulator.
pub fn monte_carlo_attempts(hops: u32, p_data: f64, trials: u32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_ack = p_data / 2.0;
    let mut total: u64 = 0;
    for _ in 0..trials {
        loop {
            total += 1;
            let data_ok = (0..hops).all(|_| rng.gen::<f64>() >= p_data);
            let ack_ok = data_ok && (0..hops).all(|_| rng.gen::<f64>() >= p_ack);
            if ack_ok {
                break;
            }
        }
    }
    total as f64 / trials as f64
}
