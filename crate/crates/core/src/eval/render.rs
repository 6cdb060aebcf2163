//! Plain-text tables.

use super::{AblationReport, EvalReport};
use crate::hazard::Hazard;
use crate::qagen::QaCategory;

fn pct(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

fn signed(x: f64, unit: &str, digits: usize) -> String {
    let magnitude = format!("{:.*}", digits, x.abs());
    let zero = magnitude.chars().all(|c| c == '0' || c == '.');
    let sign = if x < 0.0 && !zero { '-' } else { '+' };
    format!("{sign}{magnitude}{unit}")
}

/// Rows of configurations, columns of the four task categories plus overall.
pub fn render_category_table(reports: &[EvalReport]) -> String {
    let heads = ["Analysis Approach", "Hazard Characteristics", "Impacts & Damage", "Response & Recovery", "Overall"];
    let name_w = reports.iter().map(|r| r.config_name.len()).max().unwrap_or(0).max(14);
    let mut out = format!("{:<name_w$}", "Configuration");
    for h in heads {
        out.push_str(&format!("  {h:>22}"));
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!("{:<name_w$}", r.config_name));
        for c in QaCategory::ALL {
            out.push_str(&format!("  {:>22}", pct(r.by_category[&c].accuracy())));
        }
        out.push_str(&format!("  {:>22}\n", pct(r.accuracy())));
    }
    out
}

/// Module setting, overall accuracy and average latency, with signed deltas
/// against the first row.
pub fn render_ablation(ablation: &AblationReport) -> String {
    let name_w = ablation.reports.iter().map(|r| r.config_name.len()).max().unwrap_or(0).max(14);
    let mut out = format!("{:<name_w$}  {:>22}  {:>22}\n", "Module Setting", "Overall Accuracy", "Average Latency");
    let base = &ablation.reports[0];
    out.push_str(&format!(
        "{:<name_w$}  {:>22}  {:>22}\n",
        base.config_name,
        pct(base.accuracy()),
        format!("{:.2}s", base.mean_latency_s)
    ));
    for (r, d) in ablation.reports[1..].iter().zip(&ablation.deltas) {
        let acc = format!("{} ({})", pct(r.accuracy()), signed(d.accuracy_pp, "%", 2));
        let lat = format!("{:.2}s ({})", r.mean_latency_s, signed(d.latency_s, "s", 2));
        out.push_str(&format!("{:<name_w$}  {acc:>22}  {lat:>22}\n", r.config_name));
    }
    out
}

/// Single-report summary with every breakdown.
pub fn render_report(r: &EvalReport) -> String {
    let mut out = format!(
        "{} ({}, {} chunks)\n  overall   {} ({}/{})\n  latency   mean {:.3}s, median {:.3}s\n  abstained {}\n",
        r.config_name,
        r.variant.name(),
        r.chunking.name(),
        pct(r.accuracy()),
        r.overall.correct,
        r.overall.total,
        r.mean_latency_s,
        r.median_latency_s,
        r.abstentions
    );
    out.push_str("  by category\n");
    for c in QaCategory::ALL {
        let t = r.by_category[&c];
        out.push_str(&format!("    {:<24}{:>8}  ({}/{})\n", c.name(), pct(t.accuracy()), t.correct, t.total));
    }
    out.push_str("  by kind\n");
    for (k, t) in &r.by_kind {
        out.push_str(&format!("    {:<24}{:>8}  ({}/{})\n", k.name(), pct(t.accuracy()), t.correct, t.total));
    }
    out.push_str("  by hazard\n");
    for h in Hazard::ALL {
        let t = r.by_hazard[&h];
        if t.total > 0 {
            out.push_str(&format!("    {:<24}{:>8}  ({}/{})\n", h.name(), pct(t.accuracy()), t.correct, t.total));
        }
    }
    out
}
