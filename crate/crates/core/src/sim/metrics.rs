//! Metrics derived from the event log.
//!
//! [`MetricsSummary::from_log`] is a pure function of an [`EventLog`]: it
//! never looks at simulator state, which is what guarantees that everything
//! the CLI exports (per-tick CSV rows and the run summary) can be recomputed
//! from `events.log` alone. [`MetricsSummary::reconciles_with`] then
//! cross-checks the log-derived totals against the live ledger and oracle
//! pool, catching any divergence between the two bookkeeping paths.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::oracle::{ClaimOutcome, Oracle, OracleId};
use crate::rational::Rational;
use crate::sim::event::{EventBody, EventLog};
use crate::stake::{ParticipantId, StakeLedger};

/// One per-tick row of run metrics. Counter columns are per-tick; columns
/// suffixed `_cum` (and `undefined_claims`) accumulate from tick 0;
/// `total_stake` is the circulating total at the end of the tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickRow {
    pub tick: u64,
    pub txs_decided: u64,
    pub txs_accepted: u64,
    /// Fraction of all transactions decided so far whose verdict matched
    /// the ground truth (0 while nothing has been decided).
    pub tx_accuracy_cum: Rational,
    pub claims_decided: u64,
    /// Fraction of judged claims (those with an effective verdict) decided
    /// correctly so far.
    pub claim_accuracy_cum: Rational,
    /// Running count of claims whose aggregate was exactly zero.
    pub undefined_claims: u64,
    pub total_stake: Rational,
}

/// Aggregated view of one run, derived entirely from its event log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MetricsSummary {
    pub per_tick: Vec<TickRow>,
    pub ticks: u64,
    pub txs_submitted: u64,
    pub txs_decided: u64,
    pub txs_accepted: u64,
    pub txs_correct: u64,
    pub claims_opened: u64,
    pub claims_decided: u64,
    /// Claims that produced an effective verdict (the accuracy denominator).
    pub claims_judged: u64,
    pub claims_correct: u64,
    pub undefined_claims: u64,
    pub unresolvable_claims: u64,
    pub blocks_appended: u64,
    pub initial_stake: Rational,
    pub final_stake: Rational,
    pub minted: Rational,
    pub burned: Rational,
    /// Final trust weight per oracle that appeared in a settlement,
    /// reconstructed from the logged (correct, total) counters.
    pub final_trust: BTreeMap<OracleId, Rational>,
    /// Net issuance per participant: rewards minus penalties over the run
    /// (escrow moves cancel out of a participant's holdings).
    pub holdings_delta: BTreeMap<ParticipantId, Rational>,
}

impl MetricsSummary {
    /// Computes all metrics by a single pass over the log.
    pub fn from_log(log: &EventLog) -> MetricsSummary {
        let mut summary = MetricsSummary::default();
        let mut truths: BTreeMap<String, bool> = BTreeMap::new();
        let mut trust_counts: BTreeMap<OracleId, (u64, u64)> = BTreeMap::new();

        // Per-tick counters, reset at tick boundaries.
        let mut row_tick = 0u64;
        let mut txs_decided_tick = 0u64;
        let mut txs_accepted_tick = 0u64;
        let mut claims_decided_tick = 0u64;
        let mut running_stake = Rational::zero();

        let mut rows: Vec<TickRow> = Vec::new();
        let flush = |tick: u64,
                     txs_decided_tick: &mut u64,
                     txs_accepted_tick: &mut u64,
                     claims_decided_tick: &mut u64,
                     summary: &MetricsSummary,
                     running_stake: &Rational,
                     rows: &mut Vec<TickRow>| {
            rows.push(TickRow {
                tick,
                txs_decided: *txs_decided_tick,
                txs_accepted: *txs_accepted_tick,
                tx_accuracy_cum: ratio_or_zero(summary.txs_correct, summary.txs_decided),
                claims_decided: *claims_decided_tick,
                claim_accuracy_cum: ratio_or_zero(summary.claims_correct, summary.claims_judged),
                undefined_claims: summary.undefined_claims,
                total_stake: running_stake.clone(),
            });
            *txs_decided_tick = 0;
            *txs_accepted_tick = 0;
            *claims_decided_tick = 0;
        };

        for event in log.events() {
            // Emit a row for every tick boundary crossed.
            while event.tick > row_tick {
                flush(
                    row_tick,
                    &mut txs_decided_tick,
                    &mut txs_accepted_tick,
                    &mut claims_decided_tick,
                    &summary,
                    &running_stake,
                    &mut rows,
                );
                row_tick += 1;
            }
            match &event.body {
                EventBody::RunStarted {
                    ticks, total_stake, ..
                } => {
                    summary.ticks = *ticks;
                    summary.initial_stake = total_stake.clone();
                    running_stake = total_stake.clone();
                }
                EventBody::TxSubmitted {
                    tx,
                    ground_truth_valid,
                } => {
                    summary.txs_submitted += 1;
                    truths.insert(format!("tx:{tx}"), *ground_truth_valid);
                }
                EventBody::PortionVoted { .. } => {}
                EventBody::TxDecided { tx, accepted } => {
                    summary.txs_decided += 1;
                    txs_decided_tick += 1;
                    if *accepted {
                        summary.txs_accepted += 1;
                        txs_accepted_tick += 1;
                    }
                    if truths.get(&format!("tx:{tx}")) == Some(accepted) {
                        summary.txs_correct += 1;
                    }
                }
                EventBody::ClaimOpened {
                    claim,
                    ground_truth_valid,
                    ..
                } => {
                    summary.claims_opened += 1;
                    truths.insert(format!("claim:{claim}"), *ground_truth_valid);
                }
                EventBody::OracleSubmitted { .. } => {}
                EventBody::ClaimDecided {
                    claim,
                    outcome,
                    effective_valid,
                    ..
                } => {
                    summary.claims_decided += 1;
                    claims_decided_tick += 1;
                    match outcome {
                        ClaimOutcome::Undefined { .. } => summary.undefined_claims += 1,
                        ClaimOutcome::Unresolvable => summary.unresolvable_claims += 1,
                        _ => {}
                    }
                    if let Some(verdict) = effective_valid {
                        summary.claims_judged += 1;
                        if truths.get(&format!("claim:{claim}")) == Some(verdict) {
                            summary.claims_correct += 1;
                        }
                    }
                }
                EventBody::Settled {
                    device_entries,
                    oracle_entries,
                    minted,
                    burned,
                    total_stake_after,
                    ..
                } => {
                    summary.minted += minted;
                    summary.burned += burned;
                    running_stake = total_stake_after.clone();
                    for entry in device_entries {
                        let delta = &entry.reward - &entry.penalty;
                        *summary
                            .holdings_delta
                            .entry(entry.participant.clone())
                            .or_insert_with(Rational::zero) += delta;
                    }
                    for entry in oracle_entries {
                        let delta = &entry.reward - &entry.penalty;
                        *summary
                            .holdings_delta
                            .entry(ParticipantId(entry.oracle.0.clone()))
                            .or_insert_with(Rational::zero) += delta;
                        trust_counts.insert(
                            entry.oracle.clone(),
                            (entry.correct_count, entry.total_count),
                        );
                    }
                }
                EventBody::BlockAppended { .. } => {
                    summary.blocks_appended += 1;
                }
            }
        }

        // Flush trailing rows up to the declared run length, so quiet final
        // ticks still appear.
        if !log.is_empty() {
            while row_tick < summary.ticks {
                flush(
                    row_tick,
                    &mut txs_decided_tick,
                    &mut txs_accepted_tick,
                    &mut claims_decided_tick,
                    &summary,
                    &running_stake,
                    &mut rows,
                );
                row_tick += 1;
            }
        }

        summary.per_tick = rows;
        summary.final_stake = running_stake;
        summary.final_trust = trust_counts
            .into_iter()
            .map(|(id, (correct, total))| {
                let w = if total == 0 {
                    crate::rational::rat(1, 2)
                } else {
                    Rational::new(correct.into(), total.into())
                };
                (id, w)
            })
            .collect();
        summary
    }

    /// Overall transaction decision accuracy (0 when nothing was decided).
    pub fn tx_accuracy(&self) -> Rational {
        ratio_or_zero(self.txs_correct, self.txs_decided)
    }

    /// Overall claim decision accuracy over judged claims.
    pub fn claim_accuracy(&self) -> Rational {
        ratio_or_zero(self.claims_correct, self.claims_judged)
    }

    /// Mean decided transactions per tick.
    pub fn throughput(&self) -> Rational {
        ratio_or_zero(self.txs_decided, self.ticks)
    }

    /// Cross-checks the log-derived totals against live end-of-run state:
    /// stake totals, mint/burn counters, the conservation identity, and the
    /// trust weight of every oracle that settled a claim.
    pub fn reconciles_with(&self, ledger: &StakeLedger, oracles: &[Oracle]) -> bool {
        let by_id: BTreeMap<&str, &Oracle> = oracles.iter().map(|o| (o.id.0.as_str(), o)).collect();
        self.final_stake == ledger.total_circulating()
            && &self.minted == ledger.minted()
            && &self.burned == ledger.burned()
            && ledger.conservation_holds()
            && self.final_trust.iter().all(|(id, w)| {
                by_id
                    .get(id.0.as_str())
                    .is_some_and(|o| o.trust_weight() == *w)
            })
    }
}

fn ratio_or_zero(numerator: u64, denominator: u64) -> Rational {
    if denominator == 0 {
        Rational::zero()
    } else {
        Rational::new(numerator.into(), denominator.into())
    }
}
