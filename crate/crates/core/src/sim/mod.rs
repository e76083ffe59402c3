//! Deterministic simulation driver.
//!
//! A [`Scenario`] describes a three-layer world: access-layer devices emit
//! transactions and data claims; the edge layer verifies transaction shards
//! (per-cluster device votes) and judges claims (oracle committees); decided
//! transactions are appended to a hash-linked chain. Time advances in
//! integer ticks, synchronously:
//!
//! 1. generate this tick's transactions and claims (claims collect their
//!    committee's submissions immediately),
//! 2. verify and settle each transaction (deposits in, votes, verdict,
//!    rewards/penalties out),
//! 3. decide and settle claims whose deadline has arrived,
//! 4. append one block holding the tick's accepted transactions, if any.
//!
//! Every random draw comes from a stream derived from `(seed, domain,
//! entity, item)`, so two runs of one scenario — serial or parallel — are
//! byte-identical.

pub mod event;
pub mod metrics;

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use rand::RngCore;
use thiserror::Error;

use crate::ledger::{digest, Chain, LedgerError, TransactionId, TxRecord};
use crate::oracle::{
    aggregate_verdict, oracle_submit, select_oracles, settle_claim, ClaimId, DataClaim, Oracle,
    OracleBehavior, OracleError, OracleId,
};
use crate::rational::{rat, rat_int, Rational};
use crate::rng::{derive_rng, draw_with_probability};
use crate::shard::{
    verify_transaction, DeviceBehavior, DeviceId, MasterCluster, ShardError, SlaveDevice,
    Transaction, VerdictPolicy,
};
use crate::stake::{
    settle_round, ParticipantId, RewardSchedule, SettlementPolicy, StakeError, StakeLedger,
};
use event::{EventBody, EventLog};
use metrics::MetricsSummary;

/// Size in bytes of every generated transaction payload.
pub const PAYLOAD_LEN: usize = 256;

/// One cluster of verifying devices.
///
/// Behaviors are assigned positionally: the first `always_flip` devices
/// always invert their vote, the next `random_flip.len()` devices flip with
/// the listed probabilities, the rest are honest; the final `offline`
/// devices (honest by construction) never vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSpec {
    pub size: u32,
    pub always_flip: u32,
    pub random_flip: Vec<Rational>,
    pub offline: u32,
    /// Stake each device escrows per transaction (0 = vote uncollateralised).
    pub device_deposit: Rational,
    /// Initial balance endowed to each device.
    pub device_balance: Rational,
}

impl ClusterSpec {
    /// An all-honest, online cluster with default stake parameters.
    pub fn honest(size: u32) -> ClusterSpec {
        ClusterSpec {
            size,
            always_flip: 0,
            random_flip: Vec::new(),
            offline: 0,
            device_deposit: rat_int(10),
            device_balance: rat_int(100),
        }
    }

    pub fn dishonest_count(&self) -> usize {
        self.always_flip as usize + self.random_flip.len()
    }
}

/// One oracle in the pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSpec {
    /// Calibration parameter `q ∈ [0,1]`.
    pub accuracy: Rational,
    pub behavior: OracleBehavior,
    /// Stake escrowed once at startup; slashed by wrong verdicts.
    pub deposit: Rational,
    /// Initial balance endowed (the deposit is taken out of it).
    pub balance: Rational,
}

impl OracleSpec {
    pub fn calibrated(q: Rational) -> OracleSpec {
        OracleSpec {
            accuracy: q,
            behavior: OracleBehavior::Calibrated,
            deposit: rat_int(10),
            balance: rat_int(100),
        }
    }

    pub fn adversarial(q: Rational) -> OracleSpec {
        OracleSpec {
            behavior: OracleBehavior::Adversarial,
            ..OracleSpec::calibrated(q)
        }
    }
}

/// Reward parameters as scenario data (validated into a
/// [`RewardSchedule`] by [`validate_scenario`]).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardScheduleSpec {
    pub total_tx_reward: Rational,
    pub portion_rewards: Vec<Rational>,
    pub penalty_fraction: Rational,
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub seed: u64,
    pub ticks: u64,
    pub clusters: Vec<ClusterSpec>,
    pub oracle_pool: Vec<OracleSpec>,
    /// Oracles drawn per claim.
    pub committee_size: usize,
    /// Transactions generated per tick.
    pub tx_rate: u32,
    /// Claims opened per tick.
    pub claim_rate: u32,
    pub reward_schedule: RewardScheduleSpec,
    /// Ticks between a claim opening and its decision deadline.
    pub delta_t: u64,
    /// Fraction of generated transactions that are invalid.
    pub invalid_tx_fraction: Rational,
    /// Stake minted per correct oracle verdict.
    pub oracle_reward: Rational,
    /// Explicit opt-in for clusters whose dishonest count exceeds the
    /// floor(n/3) bound (attack studies).
    pub byzantine_waiver: bool,
    pub verdict_policy: VerdictPolicy,
    /// See [`SettlementPolicy::split_among_all`].
    pub split_among_all: bool,
    /// See [`SettlementPolicy::reward_rejected`].
    pub reward_rejected: bool,
}

impl Scenario {
    /// A scenario with sane defaults and no traffic; tests and builders
    /// fill in the parts they care about.
    pub fn quiet(seed: u64, ticks: u64) -> Scenario {
        Scenario {
            seed,
            ticks,
            clusters: Vec::new(),
            oracle_pool: Vec::new(),
            committee_size: 0,
            tx_rate: 0,
            claim_rate: 0,
            reward_schedule: RewardScheduleSpec {
                total_tx_reward: Rational::zero(),
                portion_rewards: Vec::new(),
                penalty_fraction: Rational::one(),
            },
            delta_t: 10,
            invalid_tx_fraction: Rational::zero(),
            oracle_reward: Rational::one(),
            byzantine_waiver: false,
            verdict_policy: VerdictPolicy::Unanimous,
            split_among_all: false,
            reward_rejected: true,
        }
    }

    fn settlement_policy(&self) -> SettlementPolicy {
        SettlementPolicy {
            split_among_all: self.split_among_all,
            reward_rejected: self.reward_rejected,
        }
    }
}

/// A reason a scenario cannot run as written.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioViolation {
    #[error("cluster {index} has no devices")]
    EmptyCluster { index: usize },
    #[error("cluster {index}: {assigned} behavior/offline slots assigned but size is {size}")]
    ClusterOverSubscribed {
        index: usize,
        assigned: usize,
        size: u32,
    },
    #[error("cluster {index} has no online devices but transactions are generated")]
    NoOnlineVoters { index: usize },
    #[error("byzantine bound exceeded: cluster {index} has {dishonest} dishonest of {size} (bound {bound}); set byzantine_waiver for attack studies")]
    DishonestOverBound {
        index: usize,
        dishonest: usize,
        size: u32,
        bound: usize,
    },
    #[error("{what} must lie in [0, 1]")]
    InvalidProbability { what: String },
    #[error("{what} must be non-negative")]
    NegativeAmount { what: String },
    #[error("{what}: deposit exceeds the initial balance")]
    DepositExceedsBalance { what: String },
    #[error("tx_rate is {tx_rate} but no clusters are defined")]
    TxWithoutClusters { tx_rate: u32 },
    #[error("{clusters} clusters cannot each get a non-empty portion of a {payload}-byte payload")]
    TooManyClusters { clusters: usize, payload: usize },
    #[error("claim_rate is {claim_rate} but the oracle pool is empty")]
    ClaimsWithoutOracles { claim_rate: u32 },
    #[error("committee_size must be at least 1 when claims are generated")]
    ZeroCommittee,
    #[error("committee_size {committee} exceeds the {eligible} oracles with a positive deposit")]
    CommitteeExceedsEligible { committee: usize, eligible: usize },
    #[error("reward schedule invalid: {0}")]
    Schedule(StakeError),
    #[error("reward schedule has {portions} portion rewards for {clusters} clusters")]
    ScheduleWidthMismatch { portions: usize, clusters: usize },
}

fn check_unit_interval(value: &Rational, what: &str, out: &mut Vec<ScenarioViolation>) {
    if *value < Rational::zero() || *value > Rational::one() {
        out.push(ScenarioViolation::InvalidProbability {
            what: what.to_string(),
        });
    }
}

/// Checks every scenario invariant, returning all violations found (empty
/// means the scenario is runnable).
pub fn validate_scenario(scenario: &Scenario) -> Vec<ScenarioViolation> {
    let mut out = Vec::new();

    match RewardSchedule::new(
        scenario.reward_schedule.total_tx_reward.clone(),
        scenario.reward_schedule.portion_rewards.clone(),
        scenario.reward_schedule.penalty_fraction.clone(),
    ) {
        Ok(_) => {
            if scenario.tx_rate > 0
                && scenario.reward_schedule.portion_rewards.len() != scenario.clusters.len()
            {
                out.push(ScenarioViolation::ScheduleWidthMismatch {
                    portions: scenario.reward_schedule.portion_rewards.len(),
                    clusters: scenario.clusters.len(),
                });
            }
        }
        Err(e) => out.push(ScenarioViolation::Schedule(e)),
    }

    for (index, spec) in scenario.clusters.iter().enumerate() {
        if spec.size == 0 {
            out.push(ScenarioViolation::EmptyCluster { index });
            continue;
        }
        let assigned = spec.dishonest_count() + spec.offline as usize;
        if assigned > spec.size as usize {
            out.push(ScenarioViolation::ClusterOverSubscribed {
                index,
                assigned,
                size: spec.size,
            });
            continue;
        }
        if scenario.tx_rate > 0 && spec.offline == spec.size {
            out.push(ScenarioViolation::NoOnlineVoters { index });
        }
        let bound = spec.size as usize / 3;
        let dishonest = spec.dishonest_count();
        if dishonest > bound && !scenario.byzantine_waiver {
            out.push(ScenarioViolation::DishonestOverBound {
                index,
                dishonest,
                size: spec.size,
                bound,
            });
        }
        for (k, p) in spec.random_flip.iter().enumerate() {
            check_unit_interval(p, &format!("cluster {index} random_flip[{k}]"), &mut out);
        }
        if spec.device_deposit < Rational::zero() {
            out.push(ScenarioViolation::NegativeAmount {
                what: format!("cluster {index} device_deposit"),
            });
        }
        if spec.device_balance < Rational::zero() {
            out.push(ScenarioViolation::NegativeAmount {
                what: format!("cluster {index} device_balance"),
            });
        }
        if spec.device_balance < spec.device_deposit {
            out.push(ScenarioViolation::DepositExceedsBalance {
                what: format!("cluster {index}"),
            });
        }
    }

    check_unit_interval(
        &scenario.invalid_tx_fraction,
        "invalid_tx_fraction",
        &mut out,
    );
    if scenario.oracle_reward < Rational::zero() {
        out.push(ScenarioViolation::NegativeAmount {
            what: "oracle_reward".to_string(),
        });
    }

    if scenario.tx_rate > 0 {
        if scenario.clusters.is_empty() {
            out.push(ScenarioViolation::TxWithoutClusters {
                tx_rate: scenario.tx_rate,
            });
        } else if scenario.clusters.len() > PAYLOAD_LEN {
            out.push(ScenarioViolation::TooManyClusters {
                clusters: scenario.clusters.len(),
                payload: PAYLOAD_LEN,
            });
        }
    }

    for (k, spec) in scenario.oracle_pool.iter().enumerate() {
        check_unit_interval(&spec.accuracy, &format!("oracle {k} accuracy"), &mut out);
        if spec.deposit < Rational::zero() {
            out.push(ScenarioViolation::NegativeAmount {
                what: format!("oracle {k} deposit"),
            });
        }
        if spec.balance < spec.deposit {
            out.push(ScenarioViolation::DepositExceedsBalance {
                what: format!("oracle {k}"),
            });
        }
    }

    if scenario.claim_rate > 0 {
        if scenario.oracle_pool.is_empty() {
            out.push(ScenarioViolation::ClaimsWithoutOracles {
                claim_rate: scenario.claim_rate,
            });
        } else {
            if scenario.committee_size == 0 {
                out.push(ScenarioViolation::ZeroCommittee);
            }
            let eligible = scenario
                .oracle_pool
                .iter()
                .filter(|o| o.deposit > Rational::zero())
                .count();
            if scenario.committee_size > eligible {
                out.push(ScenarioViolation::CommitteeExceedsEligible {
                    committee: scenario.committee_size,
                    eligible,
                });
            }
        }
    }

    out
}

/// A module error wrapped with the tick it happened on.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error(transparent)]
    Shard(#[from] ShardError),
    #[error(transparent)]
    Stake(#[from] StakeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario invalid: {}", format_violations(.0))]
    InvalidScenario(Vec<ScenarioViolation>),
    #[error("tick {tick}: {source}")]
    At { tick: u64, source: StepError },
}

fn format_violations(violations: &[ScenarioViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Evaluate clusters on a thread pool. Guaranteed byte-identical to the
    /// serial path.
    pub parallel: bool,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub chain: Chain,
    pub ledger: StakeLedger,
    pub oracles: Vec<Oracle>,
    pub log: EventLog,
    pub metrics: MetricsSummary,
}

fn build_clusters(scenario: &Scenario) -> Vec<MasterCluster> {
    scenario
        .clusters
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let size = spec.size as usize;
            let offline_from = size - spec.offline as usize;
            let devices = (0..size)
                .map(|i| {
                    let behavior = if i < spec.always_flip as usize {
                        DeviceBehavior::AlwaysFlip
                    } else if i < spec.dishonest_count() {
                        DeviceBehavior::RandomFlip(
                            spec.random_flip[i - spec.always_flip as usize].clone(),
                        )
                    } else {
                        DeviceBehavior::Honest
                    };
                    SlaveDevice {
                        id: DeviceId(format!("c{j}-d{i}")),
                        cluster: j,
                        behavior,
                        deposit: spec.device_deposit.clone(),
                        online: i < offline_from,
                    }
                })
                .collect();
            MasterCluster { index: j, devices }
        })
        .collect()
}

fn build_oracles(scenario: &Scenario) -> Vec<Oracle> {
    scenario
        .oracle_pool
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            Oracle::new(
                OracleId(format!("o{k}")),
                spec.deposit.clone(),
                spec.accuracy.clone(),
                spec.behavior,
            )
        })
        .collect()
}

fn participant(of: &str) -> ParticipantId {
    ParticipantId(of.to_string())
}

/// Runs a scenario to completion.
///
/// Identical scenarios produce byte-identical event logs, metrics and
/// chains, with or without `parallel`. Module errors abort the run and are
/// reported with the tick they occurred on.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput, SimError> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(SimError::InvalidScenario(violations));
    }
    let schedule = RewardSchedule::new(
        scenario.reward_schedule.total_tx_reward.clone(),
        scenario.reward_schedule.portion_rewards.clone(),
        scenario.reward_schedule.penalty_fraction.clone(),
    )
    .expect("schedule checked by validate_scenario");
    let settlement_policy = scenario.settlement_policy();
    let seed = scenario.seed;

    let clusters = build_clusters(scenario);
    let mut oracles = build_oracles(scenario);

    // Endow balances and take the oracles' one-time deposits.
    let mut ledger = StakeLedger::new();
    let at = |tick: u64| move |e: StepError| SimError::At { tick, source: e };
    for (spec, cluster) in scenario.clusters.iter().zip(&clusters) {
        for device in &cluster.devices {
            ledger = ledger
                .endow(participant(&device.id.0), spec.device_balance.clone())
                .map_err(|e| at(0)(e.into()))?;
        }
    }
    for (spec, oracle) in scenario.oracle_pool.iter().zip(&oracles) {
        ledger = ledger
            .endow(participant(&oracle.id.0), spec.balance.clone())
            .map_err(|e| at(0)(e.into()))?;
        if spec.deposit > Rational::zero() {
            ledger = ledger
                .place_deposit(&participant(&oracle.id.0), &spec.deposit)
                .map_err(|e| at(0)(e.into()))?;
        }
    }

    let mut log = EventLog::new();
    log.record(
        0,
        EventBody::RunStarted {
            seed,
            ticks: scenario.ticks,
            total_stake: ledger.total_circulating(),
        },
    );

    let mut chain = Chain::new();
    let mut pending_claims: Vec<DataClaim> = Vec::new();
    let valid_tx_probability = Rational::one() - &scenario.invalid_tx_fraction;

    for tick in 0..scenario.ticks {
        let fail = at(tick);

        // 1. Generate transactions.
        let mut tick_txs: Vec<(Transaction, Vec<u8>)> = Vec::new();
        for i in 0..scenario.tx_rate {
            let id = TransactionId(digest(format!("tx:{seed}:{tick}:{i}").as_bytes()));
            let mut payload = vec![0u8; PAYLOAD_LEN];
            derive_rng(seed, "tx-payload", &[&id.0 .0]).fill_bytes(&mut payload);
            let mut truth_rng = derive_rng(seed, "tx-truth", &[&id.0 .0]);
            let ground_truth_valid = draw_with_probability(&mut truth_rng, &valid_tx_probability);
            log.record(
                tick,
                EventBody::TxSubmitted {
                    tx: id,
                    ground_truth_valid,
                },
            );
            tick_txs.push((
                Transaction {
                    id,
                    payload_digest: digest(&payload),
                    ground_truth_valid,
                    created_at: tick,
                },
                payload,
            ));
        }

        // 2. Open claims; the committee submits immediately.
        for i in 0..scenario.claim_rate {
            let id = ClaimId(format!("claim-{tick:06}-{i:03}"));
            let mut truth_rng = derive_rng(seed, "claim-truth", &[id.0.as_bytes()]);
            let ground_truth_valid = draw_with_probability(&mut truth_rng, &rat(1, 2));
            let mut committee_rng = derive_rng(seed, "committee", &[id.0.as_bytes()]);
            let committee = select_oracles(&oracles, scenario.committee_size, &mut committee_rng)
                .map_err(|e| fail(e.into()))?;
            let committee_ids: BTreeSet<OracleId> =
                committee.iter().map(|o| o.id.clone()).collect();
            log.record(
                tick,
                EventBody::ClaimOpened {
                    claim: id.clone(),
                    ground_truth_valid,
                    committee: committee_ids.iter().cloned().collect(),
                    deadline: tick + scenario.delta_t,
                },
            );

            let mut claim = DataClaim::new(
                id.clone(),
                ground_truth_valid,
                tick,
                scenario.delta_t,
                committee_ids,
            );
            for oracle in committee {
                let mut rng = derive_rng(
                    seed,
                    "submission",
                    &[oracle.id.0.as_bytes(), id.0.as_bytes()],
                );
                let value =
                    oracle_submit(oracle, &claim, tick, &mut rng).map_err(|e| fail(e.into()))?;
                claim
                    .record_submission(&oracle.id, value.clone(), tick)
                    .map_err(|e| fail(e.into()))?;
                log.record(
                    tick,
                    EventBody::OracleSubmitted {
                        claim: id.clone(),
                        oracle: oracle.id.clone(),
                        submission: value,
                    },
                );
            }
            pending_claims.push(claim);
        }

        // 3. Verify and settle transactions.
        let mut accepted_records: Vec<TxRecord> = Vec::new();
        for (tx, payload) in &tick_txs {
            // Devices put up their per-transaction deposit; a device that
            // cannot afford it sits this transaction out.
            let mut effective = clusters.clone();
            for cluster in &mut effective {
                for device in &mut cluster.devices {
                    if !device.online {
                        continue;
                    }
                    if device.deposit.is_zero() {
                        continue;
                    }
                    let who = participant(&device.id.0);
                    if ledger.balance(&who) >= device.deposit {
                        ledger = ledger
                            .place_deposit(&who, &device.deposit)
                            .map_err(|e| fail(e.into()))?;
                    } else {
                        device.online = false;
                    }
                }
            }

            let verification = verify_transaction(
                tx,
                payload,
                &effective,
                seed,
                scenario.verdict_policy,
                options.parallel,
            )
            .map_err(|e| fail(e.into()))?;

            for result in &verification.results {
                log.record(
                    tick,
                    EventBody::PortionVoted {
                        tx: tx.id,
                        cluster: result.cluster_index,
                        votes_for: result.votes_for,
                        participants: result.participants,
                        accepted: result.accepted,
                    },
                );
            }
            log.record(
                tick,
                EventBody::TxDecided {
                    tx: tx.id,
                    accepted: verification.accepted,
                },
            );

            let (next, report) =
                settle_round(&ledger, &schedule, &verification, &settlement_policy)
                    .map_err(|e| fail(e.into()))?;
            ledger = next;
            log.record(
                tick,
                EventBody::Settled {
                    subject: report.subject,
                    device_entries: report.entries,
                    oracle_entries: Vec::new(),
                    minted: report.minted,
                    burned: report.burned,
                    total_stake_after: ledger.total_circulating(),
                },
            );

            if verification.accepted {
                accepted_records.push(TxRecord {
                    id: tx.id,
                    accepted: true,
                });
            }
        }

        // 4. Decide claims whose deadline has arrived.
        let (due, rest): (Vec<DataClaim>, Vec<DataClaim>) =
            pending_claims.into_iter().partition(|c| tick >= c.deadline);
        pending_claims = rest;
        for claim in due {
            let decision = aggregate_verdict(&claim, &oracles).map_err(|e| fail(e.into()))?;
            log.record(
                tick,
                EventBody::ClaimDecided {
                    claim: claim.id.clone(),
                    aggregate: decision.aggregate.clone(),
                    outcome: decision.outcome.clone(),
                    effective_valid: decision.effective_verdict(),
                },
            );
            let (pool, next, settlement) = settle_claim(
                &claim,
                &decision,
                &oracles,
                &ledger,
                &scenario.oracle_reward,
                &scenario.reward_schedule.penalty_fraction,
            )
            .map_err(|e| fail(e.into()))?;
            oracles = pool;
            ledger = next;
            log.record(
                tick,
                EventBody::Settled {
                    subject: settlement.subject,
                    device_entries: Vec::new(),
                    oracle_entries: settlement.entries,
                    minted: settlement.minted,
                    burned: settlement.burned,
                    total_stake_after: ledger.total_circulating(),
                },
            );
        }

        // 5. One block per tick, when there is something to chain.
        if !accepted_records.is_empty() {
            let transactions = accepted_records.len() as u64;
            chain = chain
                .append_block(accepted_records, tick)
                .map_err(|e| fail(e.into()))?;
            log.record(
                tick,
                EventBody::BlockAppended {
                    height: chain.tip().height,
                    block_hash: chain.tip().block_hash,
                    transactions,
                },
            );
        }
    }

    let metrics = MetricsSummary::from_log(&log);
    debug_assert!(metrics.reconciles_with(&ledger, &oracles));
    debug_assert!(chain.validate().is_valid());
    Ok(RunOutput {
        chain,
        ledger,
        oracles,
        log,
        metrics,
    })
}
