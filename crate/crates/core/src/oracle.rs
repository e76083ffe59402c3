//! Trust-weighted oracle network.
//!
//! Data claims are judged by a randomly drawn committee of oracles. Each
//! committee member submits a probability `s ∈ [0,1]` that the claimed data
//! is valid; submissions are combined as `Σ (2s − 1) · W`, where `W` is the
//! oracle's trust weight — its exact historical match rate `α/β`, or `1/2`
//! before it has any history. A strictly positive aggregate decides Valid,
//! strictly negative decides False, and an exact zero is delegated to the
//! highest-trust submitter. Settlement then pays oracles whose submission
//! pointed at the decided outcome and slashes the others' deposits, feeding
//! the next round's trust weights.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::rational::{rat, Rational};
use crate::stake::{ParticipantId, StakeError, StakeLedger};
use num_traits::{One, Zero};

/// Opaque oracle identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OracleId(pub String);

impl fmt::Display for OracleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque claim identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClaimId(pub String);

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// How an oracle forms its submissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleBehavior {
    /// Submits its accuracy `q` when the data is valid and `1 − q` when it
    /// is false: right `q` of the time, by construction.
    Calibrated,
    /// Submits exactly the reverse of a calibrated oracle.
    Adversarial,
}

/// A member of the oracle pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    pub id: OracleId,
    /// Settled claims where this oracle's submission matched the outcome.
    pub correct_count: u64,
    /// Settled claims this oracle was judged on (never incremented for
    /// Undefined or Unresolvable outcomes).
    pub total_count: u64,
    /// Stake currently escrowed behind this oracle. Must stay positive for
    /// the oracle to be eligible for committees; penalties deduct from it.
    pub deposit: Rational,
    /// The oracle's calibration parameter `q ∈ [0,1]`.
    pub accuracy: Rational,
    pub behavior: OracleBehavior,
}

impl Oracle {
    /// A fresh oracle with no history.
    pub fn new(
        id: OracleId,
        deposit: Rational,
        accuracy: Rational,
        behavior: OracleBehavior,
    ) -> Oracle {
        Oracle {
            id,
            correct_count: 0,
            total_count: 0,
            deposit,
            accuracy,
            behavior,
        }
    }

    /// Trust weight `W = correct_count / total_count`, exactly; an oracle
    /// with no judged history gets the maximally uninformative `1/2`.
    pub fn trust_weight(&self) -> Rational {
        debug_assert!(self.correct_count <= self.total_count);
        if self.total_count == 0 {
            rat(1, 2)
        } else {
            Rational::new(self.correct_count.into(), self.total_count.into())
        }
    }

    /// The probability this oracle would submit for the given ground truth.
    fn submission_for(&self, data_valid: bool) -> Rational {
        let q = self.accuracy.clone();
        let calibrated = if data_valid { q } else { Rational::one() - q };
        match self.behavior {
            OracleBehavior::Calibrated => calibrated,
            OracleBehavior::Adversarial => Rational::one() - calibrated,
        }
    }
}

/// A claim under committee review.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataClaim {
    pub id: ClaimId,
    /// Whether the claimed data is in fact valid. Drives honest
    /// submissions and scores decision accuracy; never read by aggregation.
    pub ground_truth_valid: bool,
    pub opened_at: u64,
    /// Last tick at which submissions are accepted; the claim is decided
    /// once the clock reaches it.
    pub deadline: u64,
    /// The committee drawn for this claim.
    pub committee: BTreeSet<OracleId>,
    pub submissions: BTreeMap<OracleId, Rational>,
}

impl DataClaim {
    pub fn new(
        id: ClaimId,
        ground_truth_valid: bool,
        opened_at: u64,
        delta_t: u64,
        committee: BTreeSet<OracleId>,
    ) -> DataClaim {
        DataClaim {
            id,
            ground_truth_valid,
            opened_at,
            deadline: opened_at + delta_t,
            committee,
            submissions: BTreeMap::new(),
        }
    }

    /// Records one committee member's submission.
    pub fn record_submission(
        &mut self,
        oracle: &OracleId,
        value: Rational,
        now: u64,
    ) -> Result<(), OracleError> {
        if !self.committee.contains(oracle) {
            return Err(OracleError::NotSelected {
                oracle: oracle.clone(),
                claim: self.id.clone(),
            });
        }
        if now > self.deadline {
            return Err(OracleError::DeadlinePassed {
                claim: self.id.clone(),
                deadline: self.deadline,
                now,
            });
        }
        if value < Rational::zero() || value > Rational::one() {
            return Err(OracleError::SubmissionOutOfRange);
        }
        if self.submissions.contains_key(oracle) {
            return Err(OracleError::DuplicateSubmission(oracle.clone()));
        }
        self.submissions.insert(oracle.clone(), value);
        Ok(())
    }
}

/// Decision for a claim once its deadline is reached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClaimOutcome {
    /// Aggregate strictly positive.
    Valid,
    /// Aggregate strictly negative.
    False,
    /// Aggregate exactly zero: the verdict is delegated to the submitting
    /// oracle with the highest trust weight (ties broken by lowest id);
    /// `resolution` is the sign of that oracle's own submission, or `None`
    /// if it submitted exactly 1/2.
    Undefined {
        delegate: OracleId,
        resolution: Option<bool>,
    },
    /// The deadline passed with no submissions at all.
    Unresolvable,
}

/// A decided claim: the exact aggregate and the outcome it implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimDecision {
    pub claim: ClaimId,
    pub aggregate: Rational,
    pub outcome: ClaimOutcome,
}

impl ClaimDecision {
    /// The decision collapsed to a verdict on the data, when one exists.
    pub fn effective_verdict(&self) -> Option<bool> {
        match &self.outcome {
            ClaimOutcome::Valid => Some(true),
            ClaimOutcome::False => Some(false),
            ClaimOutcome::Undefined { resolution, .. } => *resolution,
            ClaimOutcome::Unresolvable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("committee size must be at least 1")]
    EmptyCommittee,
    #[error("requested a committee of {requested} from {eligible} eligible oracles")]
    CommitteeTooLarge { requested: usize, eligible: usize },
    #[error("no oracle has a positive deposit")]
    NoEligibleOracles,
    #[error("oracle {oracle} was not selected for claim {claim}")]
    NotSelected { oracle: OracleId, claim: ClaimId },
    #[error("claim {claim} deadline {deadline} has passed (now {now})")]
    DeadlinePassed {
        claim: ClaimId,
        deadline: u64,
        now: u64,
    },
    #[error("submissions must lie in [0, 1]")]
    SubmissionOutOfRange,
    #[error("oracle {0} already submitted on this claim")]
    DuplicateSubmission(OracleId),
    #[error("submission from oracle {0} not present in the oracle set")]
    UnknownOracle(OracleId),
    #[error("claim {0} was already settled")]
    AlreadySettled(ClaimId),
    #[error(transparent)]
    Stake(#[from] StakeError),
}

/// Draws a uniform random committee of `n` distinct oracles from the
/// eligible pool (those with a strictly positive deposit).
///
/// The draw consumes only the supplied stream, so a fixed seed always
/// yields the same committee. Selected oracles are returned in pool order.
pub fn select_oracles<'a>(
    pool: &'a [Oracle],
    n: usize,
    rng: &mut impl RngCore,
) -> Result<Vec<&'a Oracle>, OracleError> {
    if n == 0 {
        return Err(OracleError::EmptyCommittee);
    }
    let eligible: Vec<&Oracle> = pool
        .iter()
        .filter(|o| o.deposit > Rational::zero())
        .collect();
    if eligible.is_empty() {
        return Err(OracleError::NoEligibleOracles);
    }
    if n > eligible.len() {
        return Err(OracleError::CommitteeTooLarge {
            requested: n,
            eligible: eligible.len(),
        });
    }
    let mut picked = rand::seq::index::sample(rng, eligible.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| eligible[i]).collect())
}

/// Computes the submission a selected oracle makes on `claim`.
///
/// The defined behaviors are deterministic in the claim's ground truth;
/// `_rng` is the oracle's dedicated stream, part of the interface so that
/// randomized behaviors can be added without changing call sites.
pub fn oracle_submit(
    oracle: &Oracle,
    claim: &DataClaim,
    now: u64,
    _rng: &mut impl RngCore,
) -> Result<Rational, OracleError> {
    if !claim.committee.contains(&oracle.id) {
        return Err(OracleError::NotSelected {
            oracle: oracle.id.clone(),
            claim: claim.id.clone(),
        });
    }
    if now > claim.deadline {
        return Err(OracleError::DeadlinePassed {
            claim: claim.id.clone(),
            deadline: claim.deadline,
            now,
        });
    }
    Ok(oracle.submission_for(claim.ground_truth_valid))
}

/// The signed score of a submission: `2s − 1 ∈ [−1, 1]`.
fn signed_score(s: &Rational) -> Rational {
    rat(2, 1) * s - Rational::one()
}

/// The verdict a single submission points at: `s > 1/2` says valid,
/// `s < 1/2` says false, exactly `1/2` says nothing.
pub fn submission_verdict(s: &Rational) -> Option<bool> {
    match s.cmp(&rat(1, 2)) {
        std::cmp::Ordering::Greater => Some(true),
        std::cmp::Ordering::Less => Some(false),
        std::cmp::Ordering::Equal => None,
    }
}

/// Combines a claim's submissions into a [`ClaimDecision`] using the
/// submitting oracles' *current* trust weights.
///
/// The aggregate is `Σ (2s − 1) · W` over submissions; the outcome follows
/// the strict sign of the aggregate. An exact zero is delegated to the
/// submitting oracle with the highest trust weight (lowest id on ties); no
/// submissions at all makes the claim [`ClaimOutcome::Unresolvable`].
pub fn aggregate_verdict(
    claim: &DataClaim,
    oracles: &[Oracle],
) -> Result<ClaimDecision, OracleError> {
    let by_id: BTreeMap<&OracleId, &Oracle> = oracles.iter().map(|o| (&o.id, o)).collect();

    if claim.submissions.is_empty() {
        return Ok(ClaimDecision {
            claim: claim.id.clone(),
            aggregate: Rational::zero(),
            outcome: ClaimOutcome::Unresolvable,
        });
    }

    let mut aggregate = Rational::zero();
    let mut best: Option<(Rational, &OracleId)> = None;
    for (id, s) in &claim.submissions {
        let oracle = by_id
            .get(id)
            .ok_or_else(|| OracleError::UnknownOracle(id.clone()))?;
        let weight = oracle.trust_weight();
        aggregate += signed_score(s) * &weight;
        // Track the highest-trust submitter; iteration is in ascending id
        // order, so requiring a strict improvement keeps the lowest id on
        // ties.
        if best.as_ref().is_none_or(|(w, _)| weight > *w) {
            best = Some((weight, id));
        }
    }

    let outcome = match aggregate.cmp(&Rational::zero()) {
        std::cmp::Ordering::Greater => ClaimOutcome::Valid,
        std::cmp::Ordering::Less => ClaimOutcome::False,
        std::cmp::Ordering::Equal => {
            let (_, delegate) = best.expect("submissions are non-empty");
            ClaimOutcome::Undefined {
                delegate: delegate.clone(),
                resolution: submission_verdict(&claim.submissions[delegate]),
            }
        }
    };
    Ok(ClaimDecision {
        claim: claim.id.clone(),
        aggregate,
        outcome,
    })
}

/// One oracle's bottom line for a claim settlement, including its judged
/// history after the update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSettlementEntry {
    pub oracle: OracleId,
    /// Whether the submission matched the outcome; `None` when the claim
    /// produced no verdict to judge against.
    pub matched: Option<bool>,
    #[serde(with = "crate::rational::serde_exact")]
    pub reward: Rational,
    #[serde(with = "crate::rational::serde_exact")]
    pub penalty: Rational,
    pub correct_count: u64,
    pub total_count: u64,
}

/// Itemised outcome of settling one claim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimSettlement {
    /// Settlement key, `claim:<id>`.
    pub subject: String,
    pub entries: Vec<OracleSettlementEntry>,
    pub minted: Rational,
    pub burned: Rational,
}

/// Settlement key for a claim.
pub fn claim_settlement_key(id: &ClaimId) -> String {
    format!("claim:{id}")
}

/// Settles a decided claim against the oracle pool and the stake ledger.
///
/// For Valid/False outcomes every submitter is judged: a submission whose
/// sign matches the outcome earns `reward` (newly minted) and a correct
/// mark; any other submission is penalized by `penalty_fraction` of the
/// oracle's escrowed deposit. Undefined and Unresolvable outcomes change
/// nothing — no rewards, no penalties, no history updates.
///
/// Returns the updated pool (same order), the updated ledger, and an
/// itemised report.
pub fn settle_claim(
    claim: &DataClaim,
    decision: &ClaimDecision,
    oracles: &[Oracle],
    ledger: &StakeLedger,
    reward: &Rational,
    penalty_fraction: &Rational,
) -> Result<(Vec<Oracle>, StakeLedger, ClaimSettlement), OracleError> {
    let subject = claim_settlement_key(&decision.claim);
    if ledger.is_settled(&subject) {
        return Err(OracleError::AlreadySettled(decision.claim.clone()));
    }

    let verdict = match &decision.outcome {
        ClaimOutcome::Valid => Some(true),
        ClaimOutcome::False => Some(false),
        ClaimOutcome::Undefined { .. } | ClaimOutcome::Unresolvable => None,
    };

    let mut pool = oracles.to_vec();
    let mut next = ledger.clone();
    let mut entries = Vec::with_capacity(claim.submissions.len());
    let mut minted = Rational::zero();
    let mut burned = Rational::zero();

    for (id, s) in &claim.submissions {
        let oracle = pool
            .iter_mut()
            .find(|o| o.id == *id)
            .ok_or_else(|| OracleError::UnknownOracle(id.clone()))?;
        let participant = ParticipantId(id.0.clone());

        let (matched, entry_reward, entry_penalty) = match verdict {
            Some(v) => {
                let matched = submission_verdict(s) == Some(v);
                if matched {
                    oracle.correct_count += 1;
                    oracle.total_count += 1;
                    next = next.credit_reward(&participant, reward)?;
                    minted += reward;
                    (Some(true), reward.clone(), Rational::zero())
                } else {
                    oracle.total_count += 1;
                    let (after, slashed) = next.apply_penalty(&participant, penalty_fraction)?;
                    next = after;
                    oracle.deposit = next.escrow_of(&participant);
                    burned += &slashed;
                    (Some(false), Rational::zero(), slashed)
                }
            }
            None => (None, Rational::zero(), Rational::zero()),
        };
        entries.push(OracleSettlementEntry {
            oracle: id.clone(),
            matched,
            reward: entry_reward,
            penalty: entry_penalty,
            correct_count: oracle.correct_count,
            total_count: oracle.total_count,
        });
    }

    next = next.mark_settled(subject.clone());
    Ok((
        pool,
        next,
        ClaimSettlement {
            subject,
            entries,
            minted,
            burned,
        },
    ))
}
