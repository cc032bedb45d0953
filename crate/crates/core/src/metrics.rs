//! Per-run metrics and the ground-truth oracle counters collected alongside
//! them.

use std::io::Write;

use serde::Serialize;

use crate::sim::Tick;

/// One row of `metrics.csv`. Column order is the field order here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub ticks: Tick,
    pub vehicles: u32,
    pub attackers: u32,
    /// Attackers blacklisted in every region by the end of the run.
    pub attackers_revoked: u32,
    /// Per false-data attacker: first false beacon to blacklisting in every
    /// region, in ticks; `None` if never revoked.
    pub revocation_latency_ticks: Vec<Option<Tick>>,
    pub false_revocations: u32,
    pub trust_statements: u64,
    pub reports_generated: u64,
    pub reports_committed: u64,
    pub reports_aggregated: u64,
    pub statements_decided: u64,
    pub ledger_blocks: u64,
    pub ledger_bytes: u64,
    pub naive_edr_bytes: u64,
    pub dedup_ratio: f64,
    pub bft_rounds_committed: u64,
    pub bft_rounds_failed: u64,
    pub degenerate_groups: u32,
}

pub const CSV_COLUMNS: &[&str] = &[
    "label",
    "seed",
    "ticks",
    "vehicles",
    "attackers",
    "attackers_revoked",
    "revocation_latency_ticks",
    "false_revocations",
    "trust_statements",
    "reports_generated",
    "reports_committed",
    "reports_aggregated",
    "statements_decided",
    "ledger_blocks",
    "ledger_bytes",
    "naive_edr_bytes",
    "dedup_ratio",
    "bft_rounds_committed",
    "bft_rounds_failed",
    "degenerate_groups",
];

impl RunMetrics {
    /// Latencies as `;`-separated ticks, `-` for an attacker never revoked.
    pub fn latency_field(&self) -> String {
        self.revocation_latency_ticks
            .iter()
            .map(|l| l.map(|t| t.to_string()).unwrap_or_else(|| "-".into()))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn max_latency(&self) -> Option<Tick> {
        self.revocation_latency_ticks.iter().flatten().copied().max()
    }

    fn record(&self, label: &str) -> Vec<String> {
        vec![
            label.to_string(),
            self.seed.to_string(),
            self.ticks.to_string(),
            self.vehicles.to_string(),
            self.attackers.to_string(),
            self.attackers_revoked.to_string(),
            self.latency_field(),
            self.false_revocations.to_string(),
            self.trust_statements.to_string(),
            self.reports_generated.to_string(),
            self.reports_committed.to_string(),
            self.reports_aggregated.to_string(),
            self.statements_decided.to_string(),
            self.ledger_blocks.to_string(),
            self.ledger_bytes.to_string(),
            self.naive_edr_bytes.to_string(),
            format!("{:.6}", self.dedup_ratio),
            self.bft_rounds_committed.to_string(),
            self.bft_rounds_failed.to_string(),
            self.degenerate_groups.to_string(),
        ]
    }
}

/// Writes labelled metric rows under the [`CSV_COLUMNS`] header.
pub fn write_metrics_csv<W: Write>(rows: &[(String, RunMetrics)], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for (label, m) in rows {
        w.write_record(m.record(label))?;
    }
    w.flush()?;
    Ok(())
}

/// Checks computed from simulator ground truth that protocol nodes never
/// see.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Oracles {
    /// Largest number of simultaneously active pseudonyms of any vehicle at
    /// any tick.
    pub max_active_pseudonyms: usize,
    /// Vehicle-seconds checked for the beacon rate, and those off 10 Hz.
    pub beacon_rate_windows: u64,
    pub beacon_rate_violations: u64,
    pub beacon_rate_min: Option<u64>,
    pub beacon_rate_max: Option<u64>,
    /// Most endorsements any single long-term identity placed on one
    /// committed cluster block.
    pub max_endorsements_per_lt: usize,
    /// Forged Sybil candidates in clusters of at least five members, and
    /// how many of those the attacker's own endorsements alone carried to
    /// quorum.
    pub sybil_attempts_large: u64,
    pub sybil_quorum_large: u64,
    /// The same in smaller clusters, where two votes can be a quorum.
    pub sybil_attempts_small: u64,
    pub sybil_quorum_small: u64,
    /// Fabricated reports, and where they got to.
    pub bad_reports: u64,
    pub bad_reports_rejected_by_head: u64,
    pub bad_in_committed_cluster_block: u64,
    pub bad_accepted_by_rsu: u64,
    pub bad_in_statement: u64,
    pub bad_in_ledger: u64,
    /// Cluster blocks RSUs refused.
    pub rsu_rejections: u64,
    /// Ledgers of all authorities are identical at run end.
    pub ledgers_agree: bool,
    /// Blacklisted long-term identities.
    pub revoked: Vec<String>,
}
