//! Artifact rendering and atomic file writes.
//!
//! Runs export four files: `metrics.csv` (per-tick table with a pinned
//! header), `events.log` (line-delimited JSON, the source of truth the CSV
//! is derived from), `chain.dump` (canonical chain bytes) and `summary.txt`
//! (human-readable digest). Sweeps add a combined `sweep.csv`. Every file
//! is written to a temporary name and renamed into place so an interrupted
//! run never leaves a truncated artifact behind.

use std::io::Write;
use std::path::Path;

use shardsim_core::rational::{display_decimal, display_exact, Rational};
use shardsim_core::sim::metrics::MetricsSummary;
use shardsim_core::sim::RunOutput;

/// Column order contract for `metrics.csv`. Append-only across versions of
/// the same scenario schema.
pub const METRICS_HEADER: &str =
    "tick,txs_decided,txs_accepted,tx_accuracy_cum,claims_decided,claim_accuracy_cum,undefined_claims,total_stake";

/// Column order contract for `sweep.csv`.
pub const SWEEP_HEADER: &str =
    "value,tx_accuracy,claim_accuracy,throughput,minted,burned,stake_delta";

const DECIMAL_PLACES: usize = 6;

fn dec(r: &Rational) -> String {
    display_decimal(r, DECIMAL_PLACES)
}

/// Writes `bytes` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Renders the per-tick metrics table.
pub fn metrics_csv(metrics: &MetricsSummary) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in &metrics.per_tick {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.tick,
            row.txs_decided,
            row.txs_accepted,
            dec(&row.tx_accuracy_cum),
            row.claims_decided,
            dec(&row.claim_accuracy_cum),
            row.undefined_claims,
            dec(&row.total_stake),
        ));
    }
    out
}

/// One line of `sweep.csv`.
pub struct SweepRow {
    pub value: String,
    pub tx_accuracy: Rational,
    pub claim_accuracy: Rational,
    pub throughput: Rational,
    pub minted: Rational,
    pub burned: Rational,
    pub stake_delta: Rational,
}

impl SweepRow {
    pub fn from_metrics(value: &str, metrics: &MetricsSummary) -> SweepRow {
        SweepRow {
            value: value.to_string(),
            tx_accuracy: metrics.tx_accuracy(),
            claim_accuracy: metrics.claim_accuracy(),
            throughput: metrics.throughput(),
            minted: metrics.minted.clone(),
            burned: metrics.burned.clone(),
            stake_delta: &metrics.final_stake - &metrics.initial_stake,
        }
    }
}

/// Renders the combined sweep table.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.value,
            dec(&row.tx_accuracy),
            dec(&row.claim_accuracy),
            dec(&row.throughput),
            dec(&row.minted),
            dec(&row.burned),
            dec(&row.stake_delta),
        ));
    }
    out
}

/// Renders the human-readable run digest.
pub fn summary_text(seed: u64, out: &RunOutput) -> String {
    let m = &out.metrics;
    let mut text = String::new();
    let mut line = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };

    line(format!("seed                {seed}"));
    line(format!("ticks               {}", m.ticks));
    line(format!(
        "transactions        {} decided / {} submitted, {} accepted",
        m.txs_decided, m.txs_submitted, m.txs_accepted
    ));
    line(format!(
        "tx accuracy         {} ({})",
        dec(&m.tx_accuracy()),
        display_exact(&m.tx_accuracy())
    ));
    line(format!(
        "throughput          {} decided tx per tick",
        dec(&m.throughput())
    ));
    line(format!(
        "claims              {} decided / {} opened, {} undefined, {} unresolvable",
        m.claims_decided, m.claims_opened, m.undefined_claims, m.unresolvable_claims
    ));
    line(format!(
        "claim accuracy      {} ({})",
        dec(&m.claim_accuracy()),
        display_exact(&m.claim_accuracy())
    ));
    line(format!(
        "blocks              {} appended, tip height {}, tip hash {}",
        m.blocks_appended,
        out.chain.tip().height,
        out.chain.tip().block_hash
    ));
    line(format!(
        "stake               {} initial, {} final ({} minted, {} burned)",
        dec(&m.initial_stake),
        dec(&m.final_stake),
        dec(&m.minted),
        dec(&m.burned)
    ));
    for (oracle, trust) in &m.final_trust {
        line(format!(
            "trust {:<13} {} ({})",
            oracle.0,
            dec(trust),
            display_exact(trust)
        ));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use shardsim_core::rational::{rat, rat_int};
    use shardsim_core::sim::{run, ClusterSpec, RewardScheduleSpec, RunOptions, Scenario};

    fn tiny_run() -> RunOutput {
        let mut s = Scenario::quiet(3, 4);
        s.clusters = vec![ClusterSpec::honest(3)];
        s.tx_rate = 1;
        s.reward_schedule = RewardScheduleSpec {
            total_tx_reward: rat_int(10),
            portion_rewards: vec![rat_int(10)],
            penalty_fraction: rat_int(1),
        };
        run(&s, &RunOptions::default()).unwrap()
    }

    #[test]
    fn metrics_csv_has_the_pinned_header_and_one_row_per_tick() {
        let out = tiny_run();
        let csv = metrics_csv(&out.metrics);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        assert_eq!(lines.count(), 4);
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn csv_numbers_are_fixed_point_decimals() {
        let row = SweepRow {
            value: "3".into(),
            tx_accuracy: rat(2, 3),
            claim_accuracy: rat_int(1),
            throughput: rat(5, 2),
            minted: rat_int(0),
            burned: rat(1, 8),
            stake_delta: rat(-1, 8),
        };
        let csv = sweep_csv(&[row]);
        assert_eq!(
            csv.lines().nth(1),
            Some("3,0.666667,1.000000,2.500000,0.000000,0.125000,-0.125000")
        );
    }

    #[test]
    fn atomic_write_replaces_content_completely() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifact.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        // No stray temp files left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn summary_covers_the_headline_numbers() {
        let out = tiny_run();
        let text = summary_text(3, &out);
        assert!(text.contains("seed                3"));
        assert!(text.contains("4 decided / 4 submitted"));
        assert!(text.contains("tip height 4"));
    }
}
