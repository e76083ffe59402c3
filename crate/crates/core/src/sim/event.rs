//! The run event log.
//!
//! Every observable step of a run is appended to an [`EventLog`] in causal
//! order. The log serializes to line-delimited JSON with a stable field
//! order, so identical runs produce byte-identical logs — and everything
//! the metrics layer reports is recomputable from the log alone.

use serde::{Deserialize, Serialize};

use crate::ledger::{Digest, TransactionId};
use crate::oracle::{ClaimId, ClaimOutcome, OracleId, OracleSettlementEntry};
use crate::rational::Rational;
use crate::stake::SettlementEntry;

/// One logged event: the tick it happened on plus its payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub tick: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Payloads for every kind of event a run can produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventBody {
    /// Emitted once, first, so consumers know the run shape and the stake
    /// baseline without access to the scenario.
    RunStarted {
        seed: u64,
        ticks: u64,
        #[serde(with = "crate::rational::serde_exact")]
        total_stake: Rational,
    },
    TxSubmitted {
        tx: TransactionId,
        ground_truth_valid: bool,
    },
    /// One cluster's aggregated vote on its portion.
    PortionVoted {
        tx: TransactionId,
        cluster: usize,
        votes_for: u64,
        participants: u64,
        accepted: bool,
    },
    TxDecided {
        tx: TransactionId,
        accepted: bool,
    },
    ClaimOpened {
        claim: ClaimId,
        ground_truth_valid: bool,
        committee: Vec<OracleId>,
        deadline: u64,
    },
    OracleSubmitted {
        claim: ClaimId,
        oracle: OracleId,
        #[serde(with = "crate::rational::serde_exact")]
        submission: Rational,
    },
    ClaimDecided {
        claim: ClaimId,
        #[serde(with = "crate::rational::serde_exact")]
        aggregate: Rational,
        outcome: ClaimOutcome,
        /// The outcome collapsed to a verdict, when one exists.
        effective_valid: Option<bool>,
    },
    /// Stake movements from settling one subject (`tx:<hex>` or
    /// `claim:<id>`), itemised per participant.
    Settled {
        subject: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        device_entries: Vec<SettlementEntry>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        oracle_entries: Vec<OracleSettlementEntry>,
        #[serde(with = "crate::rational::serde_exact")]
        minted: Rational,
        #[serde(with = "crate::rational::serde_exact")]
        burned: Rational,
        /// Total circulating stake (balances + escrow) after this
        /// settlement.
        #[serde(with = "crate::rational::serde_exact")]
        total_stake_after: Rational,
    },
    BlockAppended {
        height: u64,
        block_hash: Digest,
        transactions: u64,
    },
}

impl EventBody {
    /// The event kind name as it appears in the serialized log.
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::RunStarted { .. } => "RunStarted",
            EventBody::TxSubmitted { .. } => "TxSubmitted",
            EventBody::PortionVoted { .. } => "PortionVoted",
            EventBody::TxDecided { .. } => "TxDecided",
            EventBody::ClaimOpened { .. } => "ClaimOpened",
            EventBody::OracleSubmitted { .. } => "OracleSubmitted",
            EventBody::ClaimDecided { .. } => "ClaimDecided",
            EventBody::Settled { .. } => "Settled",
            EventBody::BlockAppended { .. } => "BlockAppended",
        }
    }
}

/// An append-only, causally ordered record of one run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> EventLog {
        EventLog::default()
    }

    pub fn record(&mut self, tick: u64, body: EventBody) {
        debug_assert!(
            self.events.last().is_none_or(|e| e.tick <= tick),
            "events must be recorded in tick order"
        );
        self.events.push(Event { tick, body });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Serializes the log as compact JSON, one event per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&serde_json::to_string(event).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses a log previously written by [`EventLog::to_ndjson`].
    pub fn from_ndjson(input: &str) -> Result<EventLog, serde_json::Error> {
        let mut events = Vec::new();
        for line in input.lines() {
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(line)?);
        }
        Ok(EventLog { events })
    }

    /// Cheap causal-order audit used by tests: ticks never decrease, nothing
    /// is decided before it is submitted/opened, and nothing settles before
    /// it is decided.
    pub fn check_causal_order(&self) -> Result<(), String> {
        use std::collections::BTreeSet;
        let mut last_tick = 0u64;
        let mut submitted: BTreeSet<String> = BTreeSet::new();
        let mut decided: BTreeSet<String> = BTreeSet::new();
        let mut last_height: Option<u64> = None;
        for (i, event) in self.events.iter().enumerate() {
            if event.tick < last_tick {
                return Err(format!("event {i}: tick {} after {last_tick}", event.tick));
            }
            last_tick = event.tick;
            match &event.body {
                EventBody::RunStarted { .. } => {
                    if i != 0 {
                        return Err(format!("event {i}: RunStarted not first"));
                    }
                }
                EventBody::TxSubmitted { tx, .. } => {
                    submitted.insert(format!("tx:{tx}"));
                }
                EventBody::ClaimOpened { claim, .. } => {
                    submitted.insert(format!("claim:{claim}"));
                }
                EventBody::PortionVoted { tx, .. } | EventBody::TxDecided { tx, .. } => {
                    let key = format!("tx:{tx}");
                    if !submitted.contains(&key) {
                        return Err(format!("event {i}: {key} used before submission"));
                    }
                    if matches!(event.body, EventBody::TxDecided { .. }) {
                        decided.insert(key);
                    }
                }
                EventBody::OracleSubmitted { claim, .. } => {
                    if !submitted.contains(&format!("claim:{claim}")) {
                        return Err(format!("event {i}: claim {claim} not opened"));
                    }
                }
                EventBody::ClaimDecided { claim, .. } => {
                    let key = format!("claim:{claim}");
                    if !submitted.contains(&key) {
                        return Err(format!("event {i}: {key} decided before opening"));
                    }
                    decided.insert(key);
                }
                EventBody::Settled { subject, .. } => {
                    if !decided.contains(subject) {
                        return Err(format!("event {i}: {subject} settled before decision"));
                    }
                }
                EventBody::BlockAppended { height, .. } => {
                    if let Some(prev) = last_height {
                        if *height != prev + 1 {
                            return Err(format!("event {i}: block height {height} after {prev}"));
                        }
                    }
                    last_height = Some(*height);
                }
            }
        }
        Ok(())
    }
}
