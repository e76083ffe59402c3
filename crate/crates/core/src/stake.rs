//! Stake accounting: deposits, escrow, rewards, penalties.
//!
//! The [`StakeLedger`] tracks every participant's liquid balance and
//! escrowed deposits, together with how much stake has ever been endowed,
//! minted (rewards) and burned (penalties). The conservation invariant —
//!
//! ```text
//! sum(balances) + sum(escrow) == endowed + minted - burned
//! ```
//!
//! — holds after every operation, and all amounts are exact rationals.
//!
//! Operations are pure: they take a ledger and hand back a new one, leaving
//! the input untouched, so a settlement that fails halfway cannot corrupt
//! state.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::rational::Rational;
use crate::shard::TransactionVerification;
use num_traits::{One, Zero};

/// Opaque identifier for anything that can hold stake (a device, an oracle).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParticipantId(pub String);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StakeError {
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("deposit amount must be strictly positive")]
    ZeroDeposit,
    #[error("amount must be non-negative")]
    NegativeAmount,
    #[error("participant {participant} has balance {balance}, cannot escrow {requested}")]
    InsufficientBalance {
        participant: ParticipantId,
        balance: String,
        requested: String,
    },
    #[error("portion rewards sum to {sum}, schedule declares {declared}")]
    ScheduleSumMismatch { sum: String, declared: String },
    #[error("penalty fraction must lie in [0, 1]")]
    InvalidPenaltyFraction,
    #[error("portion rewards must be non-negative")]
    NegativePortionReward,
    #[error("no cluster {index} in a schedule of {portions} portions")]
    UnknownCluster { index: usize, portions: usize },
    #[error("reward schedule total is zero; shares are undefined")]
    ZeroRewardTotal,
    #[error("cannot split a reward across zero participants")]
    ZeroParticipants,
    #[error("subject {0} was already settled")]
    AlreadySettled(String),
    #[error(
        "verification covers {clusters} clusters but the schedule has {portions} portion rewards"
    )]
    ScheduleClusterMismatch { clusters: usize, portions: usize },
}

/// Balances, escrow and issuance counters for every participant.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StakeLedger {
    balances: BTreeMap<ParticipantId, Rational>,
    escrow: BTreeMap<ParticipantId, Rational>,
    endowed: Rational,
    minted: Rational,
    burned: Rational,
    settled: BTreeSet<String>,
}

impl StakeLedger {
    pub fn new() -> StakeLedger {
        StakeLedger::default()
    }

    /// Brings a participant into existence (if needed) and credits `amount`
    /// of freshly endowed stake to its balance.
    pub fn endow(&self, id: ParticipantId, amount: Rational) -> Result<StakeLedger, StakeError> {
        if amount < Rational::zero() {
            return Err(StakeError::NegativeAmount);
        }
        let mut next = self.clone();
        *next.balances.entry(id).or_insert_with(Rational::zero) += &amount;
        next.endowed += amount;
        Ok(next)
    }

    pub fn knows(&self, id: &ParticipantId) -> bool {
        self.balances.contains_key(id)
    }

    /// Liquid balance of `id` (zero for unknown participants).
    pub fn balance(&self, id: &ParticipantId) -> Rational {
        self.balances
            .get(id)
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Currently escrowed stake of `id` (zero for unknown participants).
    pub fn escrow_of(&self, id: &ParticipantId) -> Rational {
        self.escrow.get(id).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.balances.keys()
    }

    pub fn total_balances(&self) -> Rational {
        self.balances.values().sum()
    }

    pub fn total_escrow(&self) -> Rational {
        self.escrow.values().sum()
    }

    /// All stake currently held by participants, liquid or escrowed.
    pub fn total_circulating(&self) -> Rational {
        self.total_balances() + self.total_escrow()
    }

    pub fn endowed(&self) -> &Rational {
        &self.endowed
    }

    pub fn minted(&self) -> &Rational {
        &self.minted
    }

    pub fn burned(&self) -> &Rational {
        &self.burned
    }

    /// The conservation invariant every operation must preserve.
    pub fn conservation_holds(&self) -> bool {
        self.total_circulating() == &(&self.endowed + &self.minted) - &self.burned
    }

    fn require_known(&self, id: &ParticipantId) -> Result<(), StakeError> {
        if self.knows(id) {
            Ok(())
        } else {
            Err(StakeError::UnknownParticipant(id.clone()))
        }
    }

    /// Moves `amount` from `id`'s balance into escrow.
    pub fn place_deposit(
        &self,
        id: &ParticipantId,
        amount: &Rational,
    ) -> Result<StakeLedger, StakeError> {
        self.require_known(id)?;
        if *amount <= Rational::zero() {
            return Err(StakeError::ZeroDeposit);
        }
        let balance = self.balance(id);
        if balance < *amount {
            return Err(StakeError::InsufficientBalance {
                participant: id.clone(),
                balance: crate::rational::display_exact(&balance),
                requested: crate::rational::display_exact(amount),
            });
        }
        let mut next = self.clone();
        *next.balances.get_mut(id).expect("known participant") -= amount;
        *next.escrow.entry(id.clone()).or_insert_with(Rational::zero) += amount;
        Ok(next)
    }

    /// Returns `id`'s entire escrow to its balance; yields the amount moved.
    pub fn release_escrow(
        &self,
        id: &ParticipantId,
    ) -> Result<(StakeLedger, Rational), StakeError> {
        self.require_known(id)?;
        let mut next = self.clone();
        let released = next.release_escrow_mut(id);
        Ok((next, released))
    }

    fn release_escrow_mut(&mut self, id: &ParticipantId) -> Rational {
        let released = self.escrow.remove(id).unwrap_or_else(Rational::zero);
        *self.balances.get_mut(id).expect("checked participant") += &released;
        released
    }

    /// Burns `fraction` of `id`'s escrow (clamped so escrow never goes
    /// negative); yields the burned amount.
    pub fn apply_penalty(
        &self,
        id: &ParticipantId,
        fraction: &Rational,
    ) -> Result<(StakeLedger, Rational), StakeError> {
        self.require_known(id)?;
        let mut next = self.clone();
        let burned = next.apply_penalty_mut(id, fraction);
        Ok((next, burned))
    }

    fn apply_penalty_mut(&mut self, id: &ParticipantId, fraction: &Rational) -> Rational {
        let escrow = self.escrow_of(id);
        if escrow.is_zero() {
            return Rational::zero();
        }
        let fraction = fraction.clone().max(Rational::zero()).min(Rational::one());
        let burned = &escrow * &fraction;
        if burned.is_zero() {
            return burned;
        }
        *self.escrow.get_mut(id).expect("non-zero escrow entry") -= &burned;
        self.burned += &burned;
        burned
    }

    /// Mints `amount` of new stake into `id`'s balance.
    pub fn credit_reward(
        &self,
        id: &ParticipantId,
        amount: &Rational,
    ) -> Result<StakeLedger, StakeError> {
        self.require_known(id)?;
        if *amount < Rational::zero() {
            return Err(StakeError::NegativeAmount);
        }
        let mut next = self.clone();
        next.credit_reward_mut(id, amount);
        Ok(next)
    }

    fn credit_reward_mut(&mut self, id: &ParticipantId, amount: &Rational) {
        *self.balances.get_mut(id).expect("checked participant") += amount;
        self.minted += amount;
    }

    /// Whether `subject` (a transaction or claim key) was settled already.
    pub fn is_settled(&self, subject: &str) -> bool {
        self.settled.contains(subject)
    }

    /// Records `subject` as settled.
    pub fn mark_settled(&self, subject: String) -> StakeLedger {
        let mut next = self.clone();
        next.settled.insert(subject);
        next
    }
}

/// Reward parameters for one transaction round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardSchedule {
    total_tx_reward: Rational,
    portion_rewards: Vec<Rational>,
    penalty_fraction: Rational,
}

impl RewardSchedule {
    /// Builds a schedule, checking that the per-portion rewards are
    /// non-negative and sum exactly to the declared total, and that the
    /// penalty fraction lies in `[0, 1]`.
    pub fn new(
        total_tx_reward: Rational,
        portion_rewards: Vec<Rational>,
        penalty_fraction: Rational,
    ) -> Result<RewardSchedule, StakeError> {
        if portion_rewards.iter().any(|r| *r < Rational::zero()) {
            return Err(StakeError::NegativePortionReward);
        }
        let sum: Rational = portion_rewards.iter().sum();
        if sum != total_tx_reward {
            return Err(StakeError::ScheduleSumMismatch {
                sum: crate::rational::display_exact(&sum),
                declared: crate::rational::display_exact(&total_tx_reward),
            });
        }
        if penalty_fraction < Rational::zero() || penalty_fraction > Rational::one() {
            return Err(StakeError::InvalidPenaltyFraction);
        }
        Ok(RewardSchedule {
            total_tx_reward,
            portion_rewards,
            penalty_fraction,
        })
    }

    /// Convenience constructor deriving the total from the portions.
    pub fn from_portions(
        portion_rewards: Vec<Rational>,
        penalty_fraction: Rational,
    ) -> Result<RewardSchedule, StakeError> {
        let total = portion_rewards.iter().sum();
        RewardSchedule::new(total, portion_rewards, penalty_fraction)
    }

    pub fn total_tx_reward(&self) -> &Rational {
        &self.total_tx_reward
    }

    pub fn portion_rewards(&self) -> &[Rational] {
        &self.portion_rewards
    }

    pub fn penalty_fraction(&self) -> &Rational {
        &self.penalty_fraction
    }

    pub fn clusters(&self) -> usize {
        self.portion_rewards.len()
    }

    /// Cluster `j`'s share of the total reward, as an exact rational.
    pub fn cluster_reward_share(&self, j: usize) -> Result<Rational, StakeError> {
        let portion = self
            .portion_rewards
            .get(j)
            .ok_or(StakeError::UnknownCluster {
                index: j,
                portions: self.portion_rewards.len(),
            })?;
        if self.total_tx_reward.is_zero() {
            return Err(StakeError::ZeroRewardTotal);
        }
        Ok(portion / &self.total_tx_reward)
    }
}

/// Reward for one node out of `total_participants` sharing `cluster_reward`,
/// on top of getting its deposit back: `cluster_reward / total + deposit`.
pub fn node_reward(
    cluster_reward: &Rational,
    total_participants: usize,
    deposit: &Rational,
) -> Result<Rational, StakeError> {
    if total_participants == 0 {
        return Err(StakeError::ZeroParticipants);
    }
    Ok(cluster_reward / Rational::from_integer(total_participants.into()) + deposit)
}

/// Knobs for how a verification round settles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettlementPolicy {
    /// When set, each cluster's reward is divided by the number of voters
    /// rather than the number of correct voters (only correct voters are
    /// ever paid; this widens the denominator for sensitivity runs).
    pub split_among_all: bool,
    /// When unset, rounds whose transaction was rejected return escrow and
    /// apply penalties but mint no rewards.
    pub reward_rejected: bool,
}

impl Default for SettlementPolicy {
    fn default() -> Self {
        SettlementPolicy {
            split_among_all: false,
            reward_rejected: true,
        }
    }
}

/// One participant's bottom line for a settlement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementEntry {
    pub participant: ParticipantId,
    /// Escrow moved back to the liquid balance.
    #[serde(with = "crate::rational::serde_exact")]
    pub escrow_returned: Rational,
    /// Newly minted reward credited.
    #[serde(with = "crate::rational::serde_exact")]
    pub reward: Rational,
    /// Escrow burned as a penalty.
    #[serde(with = "crate::rational::serde_exact")]
    pub penalty: Rational,
}

/// Itemised outcome of settling one subject (transaction or claim).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SettlementReport {
    /// Settlement key, e.g. `tx:<hex>` or `claim:<id>`.
    pub subject: String,
    pub entries: Vec<SettlementEntry>,
    pub minted: Rational,
    pub burned: Rational,
}

/// Settlement key for a verified transaction.
pub fn tx_settlement_key(tx: &crate::ledger::TransactionId) -> String {
    format!("tx:{tx}")
}

/// Settles one verified transaction round.
///
/// Per cluster `j`, a voter is *correct* when its bit agrees with the
/// cluster's own portion verdict. Correct voters get their whole escrow
/// back plus an equal share of the cluster's scheduled reward (newly
/// minted); incorrect voters lose `penalty_fraction` of their escrow
/// (burned) and get the remainder back. The round is marked settled so it
/// cannot be settled twice.
pub fn settle_round(
    ledger: &StakeLedger,
    schedule: &RewardSchedule,
    verification: &TransactionVerification,
    policy: &SettlementPolicy,
) -> Result<(StakeLedger, SettlementReport), StakeError> {
    let subject = tx_settlement_key(&verification.tx);
    if ledger.is_settled(&subject) {
        return Err(StakeError::AlreadySettled(subject));
    }
    if verification.results.len() != schedule.clusters() {
        return Err(StakeError::ScheduleClusterMismatch {
            clusters: verification.results.len(),
            portions: schedule.clusters(),
        });
    }

    let mint_enabled = verification.accepted || policy.reward_rejected;
    let mut next = ledger.clone();
    let mut entries = Vec::with_capacity(verification.votes.len());
    let minted_before = next.minted.clone();
    let burned_before = next.burned.clone();

    for result in &verification.results {
        let cluster_votes: Vec<_> = verification
            .votes
            .iter()
            .filter(|v| v.cluster_index == result.cluster_index)
            .collect();
        let correct = |bit: u8| (bit == 1) == result.accepted;
        let correct_count = cluster_votes.iter().filter(|v| correct(v.bit)).count();
        let share_base = if policy.split_among_all {
            cluster_votes.len()
        } else {
            correct_count
        };

        let pool = &schedule.portion_rewards()[result.cluster_index];
        let share = if mint_enabled && !pool.is_zero() {
            if share_base == 0 {
                return Err(StakeError::ZeroParticipants);
            }
            pool / Rational::from_integer(share_base.into())
        } else {
            Rational::zero()
        };

        for vote in cluster_votes {
            let participant = ParticipantId(vote.device.0.clone());
            next.require_known(&participant)?;
            let (reward, penalty) = if correct(vote.bit) {
                next.credit_reward_mut(&participant, &share);
                (share.clone(), Rational::zero())
            } else {
                let burned = next.apply_penalty_mut(&participant, schedule.penalty_fraction());
                (Rational::zero(), burned)
            };
            let escrow_returned = next.release_escrow_mut(&participant);
            entries.push(SettlementEntry {
                participant,
                escrow_returned,
                reward,
                penalty,
            });
        }
    }

    next.settled.insert(subject.clone());
    let report = SettlementReport {
        subject,
        minted: &next.minted - &minted_before,
        burned: &next.burned - &burned_before,
        entries,
    };
    debug_assert!(next.conservation_holds());
    Ok((next, report))
}
