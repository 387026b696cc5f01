//! Report assembly and serialization (markdown and CSV).

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::stats::LatencyStats;
use super::suites::{FreshnessSection, LatencySection, LeakageSection};
use crate::query::ConstraintClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

/// Crossover thresholds: pure-similarity parity band and the minimum
/// split/unified p50 ratio on filtered classes.
pub const PARITY_BAND: (f64, f64) = (0.5, 2.0);
pub const FILTERED_MIN_RATIO: f64 = 1.5;

#[derive(Debug, Clone, Default, Serialize)]
pub struct BenchReport {
    pub latency: Option<LatencySection>,
    pub freshness: Option<FreshnessSection>,
    pub leakage: Option<LeakageSection>,
    pub notes: Vec<String>,
}

const NOT_RUN: &str = "_not run_";

fn ms(d: Duration) -> String {
    format!("{:.3}ms", d.as_secs_f64() * 1e3)
}

fn us(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e6)
}

fn pct(rate: f64) -> String {
    format!("{:.1}%", rate * 100.0)
}

fn p50_ratio(split: &LatencyStats, unified: &LatencyStats) -> f64 {
    let b = unified.p50.as_secs_f64();
    if b == 0.0 {
        f64::INFINITY
    } else {
        split.p50.as_secs_f64() / b
    }
}

impl BenchReport {
    /// Copy with every wall-clock measurement zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let zero = LatencyStats {
            p50: Duration::ZERO,
            p95: Duration::ZERO,
            p99: Duration::ZERO,
            mean: Duration::ZERO,
            count: 0,
        };
        let mut out = self.clone();
        if let Some(l) = out.latency.as_mut() {
            for r in &mut l.rows {
                r.split = LatencyStats {
                    count: r.split.count,
                    ..zero
                };
                r.unified = LatencyStats {
                    count: r.unified.count,
                    ..zero
                };
            }
        }
        if let Some(f) = out.freshness.as_mut() {
            f.split.mean_write_latency = Duration::ZERO;
            f.unified.mean_write_latency = Duration::ZERO;
        }
        out
    }

    /// `None` if the latency suite did not run; otherwise the list of
    /// violated crossover conditions (empty when it holds).
    pub fn crossover_violations(&self) -> Option<Vec<String>> {
        let l = self.latency.as_ref()?;
        let mut bad = Vec::new();
        for r in &l.rows {
            let ratio = p50_ratio(&r.split, &r.unified);
            match r.class {
                ConstraintClass::PureSimilarity => {
                    if !(PARITY_BAND.0..=PARITY_BAND.1).contains(&ratio) {
                        bad.push(format!(
                            "crossover: {} split/unified p50 ratio {ratio:.2} outside [{}, {}]",
                            r.class.label(),
                            PARITY_BAND.0,
                            PARITY_BAND.1
                        ));
                    }
                }
                ConstraintClass::DateFiltered | ConstraintClass::FullMultiConstraint => {
                    if ratio < FILTERED_MIN_RATIO {
                        bad.push(format!(
                            "crossover: {} split/unified p50 ratio {ratio:.2} below {FILTERED_MIN_RATIO}",
                            r.class.label()
                        ));
                    }
                }
                ConstraintClass::TenantCategory => {}
            }
        }
        Some(bad)
    }

    /// Named invariant failures: unified leakage, unified torn reads, and
    /// the crossover ordering. Sections that did not run are not checked.
    pub fn invariant_failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(l) = &self.leakage {
            if l.unified.leaked_queries > 0 {
                out.push(format!(
                    "zero unified leakage: {} of {} queries leaked",
                    l.unified.leaked_queries, l.unified.queries
                ));
            }
        }
        if let Some(f) = &self.freshness {
            if f.unified.torn_reads > 0 {
                out.push(format!(
                    "zero unified torn reads: observed {}",
                    f.unified.torn_reads
                ));
            }
        }
        if let Some(v) = self.crossover_violations() {
            out.extend(v);
        }
        out
    }

    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Benchmark report\n\n## Query latency\n\n");
        match &self.latency {
            None => s.push_str(NOT_RUN),
            Some(l) => {
                s.push_str(
                    "| Query Type | Stack A p50 | Stack B p50 | Stack A p95 | Stack B p95 |\n",
                );
                s.push_str("|---|---|---|---|---|\n");
                for r in &l.rows {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {} | {} | {} |",
                        r.class.label(),
                        ms(r.split.p50),
                        ms(r.unified.p50),
                        ms(r.split.p95),
                        ms(r.unified.p95)
                    );
                }
                let _ = write!(
                    s,
                    "\n{} measured iterations after {} warmup per query type and stack.\n\n",
                    l.iterations, l.warmup
                );
                s.push_str("| Query Type | Stack A p99 | Stack B p99 | Stack A mean | Stack B mean | A/B p50 | Stack A round trips |\n");
                s.push_str("|---|---|---|---|---|---|---|\n");
                for r in &l.rows {
                    let _ = writeln!(
                        s,
                        "| {} | {} | {} | {} | {} | {:.2} | {:.2} |",
                        r.class.label(),
                        ms(r.split.p99),
                        ms(r.unified.p99),
                        ms(r.split.mean),
                        ms(r.unified.mean),
                        p50_ratio(&r.split, &r.unified),
                        r.split_round_trips
                    );
                }
            }
        }
        s.push_str("\n\n## Data freshness\n\n");
        match &self.freshness {
            None => s.push_str(NOT_RUN),
            Some(f) => {
                s.push_str("| Metric | Stack A | Stack B |\n|---|---|---|\n");
                let _ = writeln!(
                    s,
                    "| Mean write latency | {} | {} |",
                    ms(f.split.mean_write_latency),
                    ms(f.unified.mean_write_latency)
                );
                let _ = writeln!(
                    s,
                    "| Inconsistency window | {:.3}ms | {:.3}ms |",
                    f.split.mean_window_us / 1e3,
                    f.unified.window_us as f64 / 1e3
                );
                let _ = writeln!(
                    s,
                    "| Max inconsistency window | {:.3}ms | {:.3}ms |",
                    f.split.max_window_us as f64 / 1e3,
                    f.unified.window_us as f64 / 1e3
                );
                let possible = |torn: usize| {
                    if torn > 0 {
                        "Yes (during window)"
                    } else {
                        "No"
                    }
                };
                let _ = writeln!(
                    s,
                    "| Stale reads possible | {} | {} |",
                    possible(f.split.torn_reads + f.split.stale_reads),
                    if f.unified.torn_reads > 0 {
                        "Yes"
                    } else {
                        "No (atomic commit)"
                    }
                );
                let _ = writeln!(
                    s,
                    "| Torn reads | {} of {} probes | {} of {} samples |",
                    f.split.torn_reads,
                    f.split.probes,
                    f.unified.torn_reads,
                    f.unified.reader_samples
                );
                let _ = writeln!(
                    s,
                    "| Stale reads | {} of {} probes | n/a |",
                    f.split.stale_reads, f.split.probes
                );
                let _ = write!(s, "\n{} writes per stack.\n", f.split.writes);
            }
        }
        s.push_str("\n\n## Tenant isolation\n\n");
        match &self.leakage {
            None => s.push_str(NOT_RUN),
            Some(l) => {
                s.push_str("| Test | Stack A | Stack B |\n|---|---|---|\n");
                let _ = writeln!(
                    s,
                    "| Leakage rate ({} queries) | {} | {} |",
                    l.split.queries,
                    pct(l.split.rate()),
                    pct(l.unified.rate())
                );
                s.push_str(
                    "| Leakage mechanism | App-layer filter bug | Not possible (engine) |\n",
                );
                let _ = writeln!(
                    s,
                    "| Leaked queries | {} | {} |",
                    l.split.leaked_queries, l.unified.leaked_queries
                );
                let _ = writeln!(
                    s,
                    "| Leaked hits | {} | {} |",
                    l.split.leaked_hits, l.unified.leaked_hits
                );
                let _ = writeln!(
                    s,
                    "| Filter bypassed | {} | n/a |",
                    l.split.bypassed_queries
                );
                let _ = write!(s, "\nBypass probability {}.\n", l.bypass_probability);
            }
        }
        if !self.notes.is_empty() {
            s.push_str("\n\n## Notes\n\n");
            for n in &self.notes {
                let _ = writeln!(s, "- {n}");
            }
        }
        if !s.ends_with('\n') {
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("suite,stack,metric,value,unit\n");
        let mut row = |suite: &str, stack: &str, metric: &str, value: String, unit: &str| {
            let _ = writeln!(s, "{suite},{stack},{metric},{value},{unit}");
        };
        match &self.latency {
            None => row("latency", "", "status", "not run".into(), ""),
            Some(l) => {
                for r in &l.rows {
                    for (stack, st) in [("A", &r.split), ("B", &r.unified)] {
                        let key = r.class.key();
                        row("latency", stack, &format!("{key}.p50"), us(st.p50), "us");
                        row("latency", stack, &format!("{key}.p95"), us(st.p95), "us");
                        row("latency", stack, &format!("{key}.p99"), us(st.p99), "us");
                        row("latency", stack, &format!("{key}.mean"), us(st.mean), "us");
                        row(
                            "latency",
                            stack,
                            &format!("{key}.count"),
                            st.count.to_string(),
                            "queries",
                        );
                    }
                    row(
                        "latency",
                        "A",
                        &format!("{}.round_trips", r.class.key()),
                        format!("{:.3}", r.split_round_trips),
                        "round_trips",
                    );
                }
            }
        }
        match &self.freshness {
            None => row("freshness", "", "status", "not run".into(), ""),
            Some(f) => {
                row(
                    "freshness",
                    "A",
                    "writes",
                    f.split.writes.to_string(),
                    "writes",
                );
                row(
                    "freshness",
                    "A",
                    "mean_write_latency",
                    us(f.split.mean_write_latency),
                    "us",
                );
                row(
                    "freshness",
                    "A",
                    "mean_window",
                    format!("{:.3}", f.split.mean_window_us),
                    "us",
                );
                row(
                    "freshness",
                    "A",
                    "max_window",
                    f.split.max_window_us.to_string(),
                    "us",
                );
                row(
                    "freshness",
                    "A",
                    "torn_reads",
                    f.split.torn_reads.to_string(),
                    "reads",
                );
                row(
                    "freshness",
                    "A",
                    "stale_reads",
                    f.split.stale_reads.to_string(),
                    "reads",
                );
                row(
                    "freshness",
                    "A",
                    "probes",
                    f.split.probes.to_string(),
                    "queries",
                );
                row(
                    "freshness",
                    "B",
                    "writes",
                    f.unified.writes.to_string(),
                    "writes",
                );
                row(
                    "freshness",
                    "B",
                    "mean_write_latency",
                    us(f.unified.mean_write_latency),
                    "us",
                );
                row(
                    "freshness",
                    "B",
                    "mean_window",
                    f.unified.window_us.to_string(),
                    "us",
                );
                row(
                    "freshness",
                    "B",
                    "max_window",
                    f.unified.window_us.to_string(),
                    "us",
                );
                row(
                    "freshness",
                    "B",
                    "torn_reads",
                    f.unified.torn_reads.to_string(),
                    "reads",
                );
                row(
                    "freshness",
                    "B",
                    "reader_samples",
                    f.unified.reader_samples.to_string(),
                    "queries",
                );
            }
        }
        match &self.leakage {
            None => row("leakage", "", "status", "not run".into(), ""),
            Some(l) => {
                for (stack, c) in [("A", &l.split), ("B", &l.unified)] {
                    row(
                        "leakage",
                        stack,
                        "queries",
                        c.queries.to_string(),
                        "queries",
                    );
                    row(
                        "leakage",
                        stack,
                        "leaked_queries",
                        c.leaked_queries.to_string(),
                        "queries",
                    );
                    row(
                        "leakage",
                        stack,
                        "leaked_hits",
                        c.leaked_hits.to_string(),
                        "hits",
                    );
                    row(
                        "leakage",
                        stack,
                        "rate",
                        format!("{:.6}", c.rate()),
                        "fraction",
                    );
                }
                row(
                    "leakage",
                    "A",
                    "bypassed_queries",
                    l.split.bypassed_queries.to_string(),
                    "queries",
                );
                row(
                    "leakage",
                    "A",
                    "bypass_probability",
                    l.bypass_probability.to_string(),
                    "probability",
                );
            }
        }
        s
    }
}
