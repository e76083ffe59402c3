//! End-to-end determinism: a scenario is a pure function of its seed, and
//! the parallel evaluation path is byte-identical to the serial one.

use shardsim_core::ledger::Chain;
use shardsim_core::rational::{rat, rat_int};
use shardsim_core::sim::event::EventLog;
use shardsim_core::sim::{run, ClusterSpec, OracleSpec, RewardScheduleSpec, RunOptions, Scenario};

fn crowded_scenario(seed: u64) -> Scenario {
    let mut s = Scenario::quiet(seed, 30);
    s.clusters = vec![
        ClusterSpec {
            always_flip: 1,
            ..ClusterSpec::honest(5)
        },
        ClusterSpec {
            random_flip: vec![rat(1, 3)],
            offline: 1,
            ..ClusterSpec::honest(6)
        },
        ClusterSpec::honest(4),
    ];
    s.oracle_pool = vec![
        OracleSpec::calibrated(rat(9, 10)),
        OracleSpec::calibrated(rat(9, 10)),
        OracleSpec::calibrated(rat(17, 20)),
        OracleSpec::calibrated(rat(4, 5)),
        OracleSpec::calibrated(rat(3, 4)),
        OracleSpec::calibrated(rat(7, 10)),
        OracleSpec::adversarial(rat(9, 10)),
        OracleSpec::adversarial(rat(4, 5)),
    ];
    s.committee_size = 5;
    s.tx_rate = 3;
    s.claim_rate = 2;
    s.delta_t = 4;
    s.invalid_tx_fraction = rat(1, 3);
    s.reward_schedule = RewardScheduleSpec {
        total_tx_reward: rat_int(120),
        portion_rewards: vec![rat_int(50), rat_int(40), rat_int(30)],
        penalty_fraction: rat(1, 2),
    };
    s
}

#[test]
fn identical_seeds_reproduce_every_artifact() {
    let a = run(&crowded_scenario(42), &RunOptions::default()).unwrap();
    let b = run(&crowded_scenario(42), &RunOptions::default()).unwrap();

    assert_eq!(a.log.to_ndjson(), b.log.to_ndjson());
    assert_eq!(a.chain.to_bytes(), b.chain.to_bytes());
    assert_eq!(a.ledger, b.ledger);
    assert_eq!(a.oracles, b.oracles);
    assert_eq!(a.metrics.per_tick, b.metrics.per_tick);
}

#[test]
fn parallel_shard_evaluation_matches_serial_bytes() {
    let serial = run(&crowded_scenario(42), &RunOptions { parallel: false }).unwrap();
    let parallel = run(&crowded_scenario(42), &RunOptions { parallel: true }).unwrap();

    assert_eq!(serial.log.to_ndjson(), parallel.log.to_ndjson());
    assert_eq!(serial.chain.to_bytes(), parallel.chain.to_bytes());
    assert_eq!(serial.ledger, parallel.ledger);
    assert_eq!(serial.oracles, parallel.oracles);
    assert_eq!(serial.metrics.per_tick, parallel.metrics.per_tick);
}

#[test]
fn different_seeds_diverge() {
    let a = run(&crowded_scenario(42), &RunOptions::default()).unwrap();
    let b = run(&crowded_scenario(43), &RunOptions::default()).unwrap();
    assert_ne!(a.log.to_ndjson(), b.log.to_ndjson());
}

#[test]
fn run_artifacts_round_trip_through_their_encodings() {
    let out = run(&crowded_scenario(7), &RunOptions::default()).unwrap();

    let ndjson = out.log.to_ndjson();
    let reloaded = EventLog::from_ndjson(&ndjson).unwrap();
    assert_eq!(reloaded.to_ndjson(), ndjson);

    let bytes = out.chain.to_bytes();
    let chain = Chain::from_bytes(&bytes).unwrap();
    assert_eq!(chain, out.chain);
    assert!(chain.validate().is_valid());
}
