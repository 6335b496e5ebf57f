use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use super::evaluate::{MetricRow, WilcoxonRow};
use super::relevance::RelevanceTask;
use crate::error::Result;
use crate::retrieval::Method;

/// Writes metric rows as CSV. `seed` is left empty for means over seeds.
pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "mode",
        "group",
        "method",
        "relevance",
        "seed",
        "queries",
        "p_at_3",
        "p_at_5",
        "p_at_10",
        "ap",
    ])?;
    for r in rows {
        w.write_record([
            r.mode.as_str().to_owned(),
            r.group.clone(),
            r.method.as_str().to_owned(),
            r.relevance.as_str().to_owned(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.queries.to_string(),
            fmt_metric(r.report.p_at_3),
            fmt_metric(r.report.p_at_5),
            fmt_metric(r.report.p_at_10),
            fmt_metric(r.report.ap),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_wilcoxon_csv<W: Write>(writer: W, rows: &[WilcoxonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "relevance",
        "left_mode",
        "left_method",
        "right_mode",
        "right_method",
        "mean_ap_left",
        "mean_ap_right",
        "n",
        "m",
        "statistic",
        "p_value",
        "degenerate",
    ])?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.relevance.as_str().to_owned(),
            r.left_mode.as_str().to_owned(),
            r.left_method.as_str().to_owned(),
            r.right_mode.as_str().to_owned(),
            r.right_method.as_str().to_owned(),
            fmt_metric(r.mean_left),
            fmt_metric(r.mean_right),
            r.test.n.to_string(),
            r.test.m.to_string(),
            r.test.statistic.to_string(),
            format!("{:.6}", r.test.p_value),
            r.test.degenerate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_metric(x: f64) -> String {
    format!("{x:.6}")
}

/// Aligned text table: one block per (mode, relevance), one line per group
/// and method, columns P@3, P@5, P@10 and AP in percent.
pub fn format_summary_table(rows: &[MetricRow]) -> String {
    let mut blocks: BTreeMap<(String, RelevanceTask), Vec<&MetricRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.seed.is_none()) {
        blocks.entry((r.mode.to_string(), r.relevance)).or_default().push(r);
    }
    let group_w = rows.iter().map(|r| r.group.len()).max().unwrap_or(5).max(5);
    let method_w = Method::ALL.iter().map(|m| m.as_str().len()).max().unwrap_or(6);
    let mut out = String::new();
    for ((mode, relevance), block) in blocks {
        let _ = writeln!(out, "{mode} / {relevance}");
        let _ = writeln!(
            out,
            "  {:<group_w$}  {:<method_w$}  {:>6}  {:>6}  {:>6}  {:>6}",
            "group", "method", "P@3", "P@5", "P@10", "AP"
        );
        for r in block {
            let _ = writeln!(
                out,
                "  {:<group_w$}  {:<method_w$}  {:>6.1}  {:>6.1}  {:>6.1}  {:>6.1}",
                r.group,
                r.method.as_str(),
                100.0 * r.report.p_at_3,
                100.0 * r.report.p_at_5,
                100.0 * r.report.p_at_10,
                100.0 * r.report.ap
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Mode;
    use crate::metrics::MetricReport;

    fn sample_row(seed: Option<u64>) -> MetricRow {
        MetricRow {
            mode: Mode::OrganAgnostic,
            group: "all".into(),
            method: Method::Cmir,
            relevance: RelevanceTask::Flagging,
            seed,
            queries: 4,
            report: MetricReport {
                p_at_3: 2.0 / 3.0,
                p_at_5: 0.6,
                p_at_10: 0.5,
                ap: 0.75,
            },
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[sample_row(Some(3)), sample_row(None)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "mode,group,method,relevance,seed,queries,p_at_3,p_at_5,p_at_10,ap"
        );
        assert_eq!(
            lines[1],
            "organ_agnostic,all,cmir,flagging,3,4,0.666667,0.600000,0.500000,0.750000"
        );
        assert!(lines[2].starts_with("organ_agnostic,all,cmir,flagging,,4,"));
    }

    #[test]
    fn text_table_skips_per_seed_rows() {
        let t = format_summary_table(&[sample_row(Some(1)), sample_row(None)]);
        assert_eq!(t.lines().filter(|l| l.contains("cmir")).count(), 1);
        assert!(t.contains("66.7"));
    }
}
