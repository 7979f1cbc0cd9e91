//! Experiment runner: executes each configured policy against the identical
//! arrival stream, produces per-run summaries (JSON + CSV), and builds the
//! cross-policy comparison report.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::metrics::{ClassBucket, ClassSummary, StatusSnapshot};
use crate::packet::fnv1a_64;
use crate::scenario::{serialize_scenario, PolicyKind, Scenario};
use crate::sim::{run_sim, SimError, SimOptions, SimResult};
use crate::EGRESS_PORTS;

/// Stable identity of a scenario: hash of its canonical serialization.
pub fn config_hash(scenario: &Scenario) -> u64 {
    fnv1a_64(serialize_scenario(scenario).as_bytes())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PortSummary {
    pub port: u8,
    pub transmitted_packets: u64,
    pub transmitted_bytes: u64,
    pub throughput_bps: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunSummary {
    pub policy: String,
    pub seed: u64,
    pub config_hash: u64,
    pub arrival_stream_hash: u64,
    pub duration_ns: u64,
    pub generated: u64,
    pub transmitted: u64,
    pub transmitted_bytes: u64,
    pub dropped: u64,
    pub resident_at_end: u64,
    pub ingress_dropped: u64,
    pub redirects: u64,
    pub defers: u64,
    pub promotes: u64,
    pub selections: u64,
    pub priority_violations: u64,
    pub order_violations: u64,
    pub per_class: Vec<ClassSummary>,
    pub per_port: Vec<PortSummary>,
    pub snapshots: Vec<StatusSnapshot>,
}

/// One finished policy run: the serializable summary plus the raw result
/// for programmatic inspection.
#[derive(Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub counters_csv: String,
    pub result: SimResult,
}

pub fn run_one(
    scenario: &Scenario,
    policy: PolicyKind,
    opts: &SimOptions,
) -> Result<RunOutput, SimError> {
    let result = run_sim(scenario, policy, opts)?;
    let m = &result.metrics;
    let duration_ns = scenario.duration.as_nanos();
    let per_class = ClassBucket::ALL
        .iter()
        .map(|&b| m.class_summary(b))
        .collect();
    let per_port = (0..EGRESS_PORTS as u8)
        .map(|p| {
            let bytes = result.per_port_tx_bytes[p as usize];
            PortSummary {
                port: p,
                transmitted_packets: result.per_port_tx_packets[p as usize],
                transmitted_bytes: bytes,
                throughput_bps: bytes as f64 * 8.0 * 1e9 / duration_ns as f64,
            }
        })
        .collect();
    let transmitted = m.transmitted_total();
    let dropped = m.dropped_total();
    let summary = RunSummary {
        policy: policy.as_str().to_string(),
        seed: scenario.seed,
        config_hash: config_hash(scenario),
        arrival_stream_hash: result.arrival_stream_hash,
        duration_ns,
        generated: result.generated,
        transmitted,
        transmitted_bytes: m.transmitted_bytes_total(),
        dropped,
        resident_at_end: result.generated - transmitted - dropped,
        ingress_dropped: m.ingress_dropped(),
        redirects: result.redirect_count,
        defers: result.defer_count,
        promotes: result.promote_count,
        selections: result.selection.selections,
        priority_violations: result.selection.violations,
        order_violations: result.order_violations,
        per_class,
        per_port,
        snapshots: result.snapshots.clone(),
    };
    Ok(RunOutput {
        summary,
        counters_csv: m.counters_csv(),
        result,
    })
}

/// Runs every policy listed in the scenario, in order, each against the
/// identical arrival stream (fresh generator, same seed).
pub fn run_all(scenario: &Scenario, opts: &SimOptions) -> Result<Vec<RunOutput>, SimError> {
    scenario
        .policies
        .iter()
        .map(|&p| run_one(scenario, p, opts))
        .collect()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ClassDelta {
    pub policy_a: String,
    pub policy_b: String,
    pub class: String,
    pub loss_rate_a: Option<f64>,
    pub loss_rate_b: Option<f64>,
    /// a minus b; absent when either side is absent.
    pub loss_rate_delta: Option<f64>,
    pub mean_delay_a_ns: Option<f64>,
    pub mean_delay_b_ns: Option<f64>,
    pub mean_delay_delta_ns: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ComparisonReport {
    pub seed: u64,
    pub config_hash: u64,
    pub policies: Vec<String>,
    pub arrival_streams_identical: bool,
    pub deltas: Vec<ClassDelta>,
    /// EF loss under anaqm strictly below EF loss under red; present only
    /// when both policies ran.
    pub anaqm_beats_red_on_ef_loss: Option<bool>,
}

fn class_stats(summary: &RunSummary, class: ClassBucket) -> (Option<f64>, Option<f64>) {
    let cs = summary
        .per_class
        .iter()
        .find(|c| c.class == class.as_str())
        .expect("summaries carry every class bucket");
    (cs.loss_rate, cs.delay.as_ref().map(|d| d.mean_ns))
}

pub fn compare(outputs: &[RunOutput]) -> ComparisonReport {
    assert!(outputs.len() >= 2, "comparison requires at least two runs");
    let first = &outputs[0].summary;
    let identical = outputs
        .iter()
        .all(|o| o.summary.arrival_stream_hash == first.arrival_stream_hash);

    let mut deltas = Vec::new();
    for i in 0..outputs.len() {
        for j in (i + 1)..outputs.len() {
            let (a, b) = (&outputs[i].summary, &outputs[j].summary);
            for class in [
                ClassBucket::Priv,
                ClassBucket::Ef,
                ClassBucket::Af,
                ClassBucket::Be,
            ] {
                let (loss_a, delay_a) = class_stats(a, class);
                let (loss_b, delay_b) = class_stats(b, class);
                deltas.push(ClassDelta {
                    policy_a: a.policy.clone(),
                    policy_b: b.policy.clone(),
                    class: class.as_str().to_string(),
                    loss_rate_a: loss_a,
                    loss_rate_b: loss_b,
                    loss_rate_delta: loss_a.zip(loss_b).map(|(x, y)| x - y),
                    mean_delay_a_ns: delay_a,
                    mean_delay_b_ns: delay_b,
                    mean_delay_delta_ns: delay_a.zip(delay_b).map(|(x, y)| x - y),
                });
            }
        }
    }

    let ef_loss_for = |name: &str| {
        outputs
            .iter()
            .find(|o| o.summary.policy == name)
            .and_then(|o| class_stats(&o.summary, ClassBucket::Ef).0)
    };
    let predicate = match (ef_loss_for("anaqm"), ef_loss_for("red")) {
        (Some(a), Some(r)) => Some(a < r),
        _ => None,
    };

    ComparisonReport {
        seed: first.seed,
        config_hash: first.config_hash,
        policies: outputs.iter().map(|o| o.summary.policy.clone()).collect(),
        arrival_streams_identical: identical,
        deltas,
        anaqm_beats_red_on_ef_loss: predicate,
    }
}

pub fn summary_json(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

pub fn comparison_json(report: &ComparisonReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Writes per-run files (summary JSON, counters CSV, optional event log)
/// and the comparison JSON into `dir`. Returns the paths written.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    outputs: &[RunOutput],
    comparison: Option<&ComparisonReport>,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    // Repeated policies get an index suffix to keep files distinct.
    let mut seen: std::collections::HashMap<&str, u32> = std::collections::HashMap::new();
    for out in outputs {
        let policy = out.summary.policy.as_str();
        let n = seen.entry(policy).or_insert(0);
        let tag = if *n == 0 {
            policy.to_string()
        } else {
            format!("{policy}{n}")
        };
        *n += 1;

        let summary_path = dir.join(format!("{stem}.{tag}.summary.json"));
        fs::write(&summary_path, summary_json(&out.summary))?;
        written.push(summary_path);

        let csv_path = dir.join(format!("{stem}.{tag}.counters.csv"));
        fs::write(&csv_path, &out.counters_csv)?;
        written.push(csv_path);

        if let Some(log) = &out.result.event_log {
            let log_path = dir.join(format!("{stem}.{tag}.events.log"));
            let mut buf = Vec::new();
            log.write_to(&mut buf)?;
            fs::write(&log_path, buf)?;
            written.push(log_path);
        }
    }
    if let Some(report) = comparison {
        let path = dir.join(format!("{stem}.comparison.json"));
        fs::write(&path, comparison_json(report))?;
        written.push(path);
    }
    Ok(written)
}
