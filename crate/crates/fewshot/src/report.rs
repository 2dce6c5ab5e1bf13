//! Result tables.
//!
//! Markdown cells read `v15 / v50` per metric followed by the delta column,
//! at two decimals. The CSV form keeps full precision and parses back into
//! the same aggregates.

use std::fmt::Write as _;

use fewshot_core::metrics::{AggregateReport, MetricDelta, ShotSummary};

use crate::{Error, Result};

const METRICS: [&str; 3] = ["Macro F1", "Weighted F1", "Accuracy"];

fn values(s: &ShotSummary) -> [f64; 3] {
    [s.macro_f1, s.weighted_f1, s.accuracy]
}

fn delta_values(d: &MetricDelta) -> [f64; 3] {
    [d.macro_f1, d.weighted_f1, d.accuracy]
}

/// Two decimals, without a sign on values that round to zero.
fn fixed2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn render_markdown(aggregates: &[AggregateReport]) -> String {
    let mut out = String::new();
    let shots: Vec<String> = aggregates
        .first()
        .map(|a| a.shots.iter().map(|s| s.k.to_string()).collect())
        .unwrap_or_default();
    if !shots.is_empty() {
        let _ = writeln!(out, "Shots: {}\n", shots.join(" / "));
    }
    out.push_str("| Strategy |");
    for m in METRICS {
        let _ = write!(out, " {m} | Δ {m} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|---|".repeat(METRICS.len()));
    out.push('\n');
    for agg in aggregates {
        let _ = write!(out, "| {} |", agg.strategy);
        for (i, _) in METRICS.iter().enumerate() {
            let cell: Vec<String> = agg.shots.iter().map(|s| fixed2(values(s)[i])).collect();
            let delta = agg
                .delta
                .as_ref()
                .map(|d| fixed2(delta_values(d)[i]))
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {} | {} |", cell.join(" / "), delta);
        }
        out.push('\n');
    }
    out
}

const CSV_HEADER: [&str; 6] = [
    "strategy",
    "shots",
    "seeds",
    "macro_f1",
    "weighted_f1",
    "accuracy",
];

/// One row per (strategy, shot count) plus a `delta` row per strategy.
/// Floats use the shortest representation that round-trips.
pub fn render_csv(aggregates: &[AggregateReport]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(CSV_HEADER)?;
    for agg in aggregates {
        for s in &agg.shots {
            let [a, b, c] = values(s);
            writer.write_record([
                agg.strategy.clone(),
                s.k.to_string(),
                s.seeds.to_string(),
                a.to_string(),
                b.to_string(),
                c.to_string(),
            ])?;
        }
        if let Some(d) = &agg.delta {
            let [a, b, c] = delta_values(d);
            writer.write_record([
                agg.strategy.clone(),
                format!("delta:{}-{}", d.from_k, d.to_k),
                String::new(),
                a.to_string(),
                b.to_string(),
                c.to_string(),
            ])?;
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn bad_csv(line: usize, message: impl Into<String>) -> Error {
    Error::Record {
        path: "table.csv".into(),
        line,
        message: message.into(),
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<AggregateReport>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    if reader.headers()?.iter().ne(CSV_HEADER) {
        return Err(bad_csv(1, "unexpected header"));
    }
    let mut out: Vec<AggregateReport> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let num = |c: usize| -> Result<f64> {
            row[c]
                .parse()
                .map_err(|_| bad_csv(line, format!("bad number {:?}", &row[c])))
        };
        let strategy = &row[0];
        if out.last().is_none_or(|a| a.strategy != strategy) {
            out.push(AggregateReport {
                strategy: strategy.to_string(),
                shots: Vec::new(),
                delta: None,
            });
        }
        let agg = out.last_mut().expect("pushed above");
        if let Some(range) = row[1].strip_prefix("delta:") {
            let (from, to) = range
                .split_once('-')
                .ok_or_else(|| bad_csv(line, "bad delta range"))?;
            let parse_k = |s: &str| s.parse().map_err(|_| bad_csv(line, "bad shot count"));
            agg.delta = Some(MetricDelta {
                from_k: parse_k(from)?,
                to_k: parse_k(to)?,
                macro_f1: num(3)?,
                weighted_f1: num(4)?,
                accuracy: num(5)?,
            });
        } else {
            agg.shots.push(ShotSummary {
                k: row[1]
                    .parse()
                    .map_err(|_| bad_csv(line, "bad shot count"))?,
                seeds: row[2]
                    .parse()
                    .map_err(|_| bad_csv(line, "bad seed count"))?,
                macro_f1: num(3)?,
                weighted_f1: num(4)?,
                accuracy: num(5)?,
            });
        }
    }
    Ok(out)
}
