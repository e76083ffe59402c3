//! Sharded transaction verification.
//!
//! A transaction's payload is split into `n` disjoint contiguous portions,
//! one per master cluster. Every online device in a cluster examines its
//! cluster's portion and emits a binary vote (1 = portion checks out).
//! The cluster's score is the exact fraction of 1-votes among the `m`
//! participating devices, and the portion is accepted when the score
//! reaches 2/3. The scoring is pure integer arithmetic — a `(votes_for, m)`
//! pair — so threshold comparisons can never wobble.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::ledger::{digest, Digest, TransactionId};
use crate::rational::Rational;
use crate::rng::{derive_rng, draw_with_probability};

/// Opaque device identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(pub String);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// How a device votes relative to the honest bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceBehavior {
    /// Votes the correct bit for its portion.
    Honest,
    /// Always votes the opposite of the correct bit.
    AlwaysFlip,
    /// Flips the correct bit independently with probability `p`.
    RandomFlip(Rational),
}

/// A verifying device belonging to exactly one master cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlaveDevice {
    pub id: DeviceId,
    /// Index of the cluster this device belongs to.
    pub cluster: usize,
    pub behavior: DeviceBehavior,
    /// Stake the device escrows per transaction it verifies. Zero means it
    /// votes without collateral.
    pub deposit: Rational,
    /// Offline devices never vote; they simply shrink `m`.
    pub online: bool,
}

/// A master cluster: an indexed group of slave devices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterCluster {
    pub index: usize,
    pub devices: Vec<SlaveDevice>,
}

impl MasterCluster {
    /// Largest number of arbitrarily-faulty devices the cluster vote can
    /// tolerate while still deciding every portion correctly: floor(n/3).
    pub fn byzantine_bound(&self) -> usize {
        self.devices.len() / 3
    }

    /// Number of devices whose behavior is not `Honest`.
    pub fn dishonest_count(&self) -> usize {
        self.devices
            .iter()
            .filter(|d| d.behavior != DeviceBehavior::Honest)
            .count()
    }
}

/// A transaction awaiting verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TransactionId,
    /// Digest of the full payload; portions are checked against slices of
    /// the payload this digest commits to.
    pub payload_digest: Digest,
    /// Whether the transaction is in fact well-formed. Devices do not see
    /// this directly; it determines the bit an honest verifier arrives at.
    pub ground_truth_valid: bool,
    pub created_at: u64,
}

/// One contiguous slice of a transaction payload, assigned to one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Portion {
    pub tx: TransactionId,
    pub cluster_index: usize,
    /// Payload byte range `[start, end)` covered by this portion.
    pub start: usize,
    pub end: usize,
    pub segment_digest: Digest,
}

/// A single device's binary vote on one portion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vote {
    pub device: DeviceId,
    pub tx: TransactionId,
    pub cluster_index: usize,
    /// 1 = portion verified, 0 = portion rejected.
    pub bit: u8,
}

/// Outcome of one cluster's vote on its portion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationResult {
    pub tx: TransactionId,
    pub cluster_index: usize,
    /// Number of 1-votes.
    pub votes_for: u64,
    /// Number of devices that voted.
    pub participants: u64,
    pub accepted: bool,
}

impl VerificationResult {
    /// The cluster's score: the exact fraction of 1-votes, in `[0, 1]`.
    pub fn score(&self) -> Rational {
        Rational::new(self.votes_for.into(), self.participants.into())
    }
}

/// How per-cluster verdicts combine into the transaction verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictPolicy {
    /// Accept only when every cluster accepts its portion (default: one bad
    /// portion invalidates the transaction).
    #[default]
    Unanimous,
    /// Accept when strictly more than half of the clusters accept.
    ClusterMajority,
}

/// Full record of one transaction's verification: per-cluster results, the
/// individual votes behind them, and the combined verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionVerification {
    pub tx: TransactionId,
    pub results: Vec<VerificationResult>,
    /// All votes cast, ordered by cluster then by device position.
    pub votes: Vec<Vote>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShardError {
    #[error("cannot partition a payload across zero clusters")]
    ZeroClusters,
    #[error("cannot split a {payload_len}-byte payload into {clusters} non-empty portions")]
    PartitionTooFine { clusters: usize, payload_len: usize },
    #[error("device {device} of cluster {device_cluster} cannot vote on a portion of cluster {portion_cluster}")]
    WrongCluster {
        device: DeviceId,
        device_cluster: usize,
        portion_cluster: usize,
    },
    #[error("no votes to aggregate")]
    NoVotes,
    #[error("votes span more than one transaction or cluster")]
    MixedTransactions,
    #[error("clusters must be passed in index order: expected {expected}, found {found}")]
    ClusterOrder { expected: usize, found: usize },
    #[error("payload does not match the transaction's payload digest")]
    PayloadDigestMismatch,
}

/// Splits `payload` into `n` contiguous, disjoint, covering portions.
///
/// Portion `j` covers bytes `[j*len/n, (j+1)*len/n)` (integer division), so
/// sizes differ by at most one byte and every portion is non-empty.
pub fn partition_payload(
    tx: TransactionId,
    payload: &[u8],
    n: usize,
) -> Result<Vec<Portion>, ShardError> {
    if n == 0 {
        return Err(ShardError::ZeroClusters);
    }
    let len = payload.len();
    if n > len {
        return Err(ShardError::PartitionTooFine {
            clusters: n,
            payload_len: len,
        });
    }
    Ok((0..n)
        .map(|j| {
            let start = j * len / n;
            let end = (j + 1) * len / n;
            Portion {
                tx,
                cluster_index: j,
                start,
                end,
                segment_digest: digest(&payload[start..end]),
            }
        })
        .collect())
}

/// Produces `device`'s vote on `portion`.
///
/// `portion_valid` is the bit a correct verifier arrives at for this
/// portion; the device's behavior decides whether that bit is kept,
/// inverted, or randomly flipped using `rng`.
pub fn cast_vote(
    device: &SlaveDevice,
    portion: &Portion,
    portion_valid: bool,
    rng: &mut impl RngCore,
) -> Result<Vote, ShardError> {
    if device.cluster != portion.cluster_index {
        return Err(ShardError::WrongCluster {
            device: device.id.clone(),
            device_cluster: device.cluster,
            portion_cluster: portion.cluster_index,
        });
    }
    let honest_bit = portion_valid;
    let bit = match &device.behavior {
        DeviceBehavior::Honest => honest_bit,
        DeviceBehavior::AlwaysFlip => !honest_bit,
        DeviceBehavior::RandomFlip(p) => {
            if draw_with_probability(rng, p) {
                !honest_bit
            } else {
                honest_bit
            }
        }
    };
    Ok(Vote {
        device: device.id.clone(),
        tx: portion.tx,
        cluster_index: portion.cluster_index,
        bit: bit as u8,
    })
}

/// The exact acceptance rule: a portion passes when at least two thirds of
/// its voters said 1, i.e. `3 * votes_for >= 2 * m`.
fn meets_threshold(votes_for: u64, participants: u64) -> bool {
    3 * votes_for >= 2 * participants
}

/// Folds one cluster's votes into a [`VerificationResult`].
///
/// All votes must target the same transaction and cluster; the result does
/// not depend on the order of `votes`.
pub fn aggregate_verification(votes: &[Vote]) -> Result<VerificationResult, ShardError> {
    let first = votes.first().ok_or(ShardError::NoVotes)?;
    if votes
        .iter()
        .any(|v| v.tx != first.tx || v.cluster_index != first.cluster_index)
    {
        return Err(ShardError::MixedTransactions);
    }
    let participants = votes.len() as u64;
    let votes_for = votes.iter().map(|v| u64::from(v.bit)).sum();
    Ok(VerificationResult {
        tx: first.tx,
        cluster_index: first.cluster_index,
        votes_for,
        participants,
        accepted: meets_threshold(votes_for, participants),
    })
}

/// Runs one cluster over its portion: every online device votes, the votes
/// are aggregated.
fn run_cluster(
    cluster: &MasterCluster,
    portion: &Portion,
    tx: &Transaction,
    run_seed: u64,
) -> Result<(Vec<Vote>, VerificationResult), ShardError> {
    let mut votes = Vec::new();
    for device in cluster.devices.iter().filter(|d| d.online) {
        let mut rng = derive_rng(run_seed, "vote", &[device.id.0.as_bytes(), &tx.id.0 .0]);
        votes.push(cast_vote(device, portion, tx.ground_truth_valid, &mut rng)?);
    }
    let result = aggregate_verification(&votes)?;
    Ok((votes, result))
}

/// Verifies one transaction end to end: partitions the payload across the
/// clusters, collects every online device's vote, scores each portion and
/// combines the portion verdicts under `policy`.
///
/// Each device's randomness is derived from `(run_seed, device id, tx id)`,
/// so the outcome is independent of evaluation order; with `parallel` set,
/// clusters are scored on a thread pool and the result is bit-identical to
/// the serial path.
pub fn verify_transaction(
    tx: &Transaction,
    payload: &[u8],
    clusters: &[MasterCluster],
    run_seed: u64,
    policy: VerdictPolicy,
    parallel: bool,
) -> Result<TransactionVerification, ShardError> {
    if digest(payload) != tx.payload_digest {
        return Err(ShardError::PayloadDigestMismatch);
    }
    for (j, cluster) in clusters.iter().enumerate() {
        if cluster.index != j {
            return Err(ShardError::ClusterOrder {
                expected: j,
                found: cluster.index,
            });
        }
    }
    let portions = partition_payload(tx.id, payload, clusters.len())?;

    let per_cluster: Result<Vec<_>, ShardError> = if parallel {
        clusters
            .par_iter()
            .zip(portions.par_iter())
            .map(|(cluster, portion)| run_cluster(cluster, portion, tx, run_seed))
            .collect()
    } else {
        clusters
            .iter()
            .zip(portions.iter())
            .map(|(cluster, portion)| run_cluster(cluster, portion, tx, run_seed))
            .collect()
    };
    let per_cluster = per_cluster?;

    let mut votes = Vec::new();
    let mut results = Vec::with_capacity(per_cluster.len());
    for (cluster_votes, result) in per_cluster {
        votes.extend(cluster_votes);
        results.push(result);
    }
    let accepted_clusters = results.iter().filter(|r| r.accepted).count();
    let accepted = match policy {
        VerdictPolicy::Unanimous => accepted_clusters == results.len(),
        VerdictPolicy::ClusterMajority => 2 * accepted_clusters > results.len(),
    };
    Ok(TransactionVerification {
        tx: tx.id,
        results,
        votes,
        accepted,
    })
}
