//! Metric tables as CSV, JSON, or an aligned text table.
//!
//! Scaled columns carry their factor in the name: coverage in percent,
//! widths ×100, mean error and MSE ×10³. CSV values use shortest
//! round-trip float formatting.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::{MetricsRow, StudyMetrics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::InvalidConfig(format!("unknown report format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Include `mean_time_s`. Off by default so that identical studies give
    /// byte-identical CSVs.
    pub include_timing: bool,
}

const COLUMNS: [&str; 12] = [
    "sample_size",
    "estimator",
    "true_ate",
    "replicates",
    "failures",
    "coverage_pct",
    "mc_se_pct",
    "width_x100",
    "bias_eliminated_coverage_pct",
    "mean_error_x1e3",
    "mse_x1e3",
    "redraws",
];
const TIME_COLUMN: &str = "mean_time_s";

pub fn write_report<W: Write>(rows: &[MetricsRow], format: ReportFormat, opts: ReportOptions, out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    match format {
        ReportFormat::Csv => write_csv(rows, opts, out),
        ReportFormat::Json => write_json(rows, opts, out),
        ReportFormat::Table => write_table(rows, opts, out),
    }
}

pub fn emit_report(rows: &[MetricsRow], format: ReportFormat, opts: ReportOptions, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_report(rows, format, opts, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn scaled(m: &StudyMetrics) -> [f64; 7] {
    [
        100.0 * m.coverage,
        100.0 * m.mc_se_coverage,
        100.0 * m.mean_width,
        100.0 * m.bias_eliminated_coverage,
        1e3 * m.mean_error,
        1e3 * m.mse,
        m.mean_time_s,
    ]
}

fn write_csv<W: Write>(rows: &[MetricsRow], opts: ReportOptions, out: W) -> Result<()> {
    let csv_err = |e: csv::Error| Error::parse("metrics csv", e);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if opts.include_timing {
        header.push(TIME_COLUMN);
    }
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![
            row.sample_size.to_string(),
            row.estimator.clone(),
            row.truth.to_string(),
        ];
        match &row.metrics {
            Some(m) => {
                let s = scaled(m);
                rec.push(m.replicates.to_string());
                rec.push(row.failures.to_string());
                rec.extend(s[..6].iter().map(f64::to_string));
                rec.push(m.redraws.to_string());
                if opts.include_timing {
                    rec.push(s[6].to_string());
                }
            }
            None => {
                rec.push("0".into());
                rec.push(row.failures.to_string());
                rec.resize(header.len(), String::new());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("metrics csv", e))
}

fn write_json<W: Write>(rows: &[MetricsRow], opts: ReportOptions, mut out: W) -> Result<()> {
    let mut rows = rows.to_vec();
    if !opts.include_timing {
        for m in rows.iter_mut().filter_map(|r| r.metrics.as_mut()) {
            m.mean_time_s = 0.0;
        }
    }
    let text = serde_json::to_string_pretty(&rows).map_err(|e| Error::parse("metrics json", e))?;
    writeln!(out, "{text}").map_err(|e| Error::io("metrics json", e))
}

fn write_table<W: Write>(rows: &[MetricsRow], opts: ReportOptions, mut out: W) -> Result<()> {
    let mut header = vec!["n", "estimator", "cov %", "± se", "width", "be-cov %", "ME", "MSE", "fail"];
    if opts.include_timing {
        header.push("time s");
    }
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let mut line = vec![row.sample_size.to_string(), row.estimator.clone()];
        match &row.metrics {
            Some(m) => {
                let s = scaled(m);
                line.extend([
                    format!("{:.1}", s[0]),
                    format!("{:.1}", s[1]),
                    format!("{:.1}", s[2]),
                    format!("{:.1}", s[3]),
                    format!("{:.2}", s[4]),
                    format!("{:.2}", s[5]),
                ]);
                line.push(row.failures.to_string());
                if opts.include_timing {
                    line.push(format!("{:.4}", s[6]));
                }
            }
            None => {
                line.resize(header.len() - 1, "-".into());
                line.push(row.failures.to_string());
                if opts.include_timing {
                    line.push("-".into());
                }
            }
        }
        cells.push(line);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|j| cells.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    let _ = writeln!(
        text,
        "true ATE {:.4}; width x100, ME and MSE x10^3, coverage in percent",
        rows[0].truth
    );
    for (i, line) in cells.iter().enumerate() {
        let mut rendered = String::new();
        for (j, cell) in line.iter().enumerate() {
            let pad = widths[j] - cell.chars().count();
            if j == 1 {
                rendered.push_str(cell);
                rendered.push_str(&" ".repeat(pad));
            } else {
                rendered.push_str(&" ".repeat(pad));
                rendered.push_str(cell);
            }
            if j + 1 < line.len() {
                rendered.push_str("  ");
            }
        }
        let _ = writeln!(text, "{}", rendered.trim_end());
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(text, "{}", "-".repeat(total));
        }
    }
    out.write_all(text.as_bytes()).map_err(|e| Error::io("metrics table", e))
}

/// Read back a CSV written by [`write_report`], undoing the column scaling.
/// A missing timing column reads as zero.
pub fn parse_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let err = |m: String| Error::parse("metrics csv", m);
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let idx: Vec<usize> = COLUMNS
        .iter()
        .map(|c| col(c).ok_or_else(|| Error::MissingColumn(c.to_string())))
        .collect::<Result<_>>()?;
    let time = col(TIME_COLUMN);
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |j: usize| rec.get(idx[j]).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j)
                .parse::<f64>()
                .map_err(|_| err(format!("row {}: `{}` in {} is not a number", line + 1, field(j), COLUMNS[j])))
        };
        let count = |j: usize| -> Result<usize> {
            field(j)
                .parse::<usize>()
                .map_err(|_| err(format!("row {}: `{}` in {} is not a count", line + 1, field(j), COLUMNS[j])))
        };
        let failures = count(4)?;
        let metrics = if field(5).is_empty() {
            None
        } else {
            Some(StudyMetrics {
                replicates: count(3)?,
                failures,
                coverage: num(5)? / 100.0,
                mc_se_coverage: num(6)? / 100.0,
                mean_width: num(7)? / 100.0,
                bias_eliminated_coverage: num(8)? / 100.0,
                mean_error: num(9)? / 1e3,
                mse: num(10)? / 1e3,
                redraws: count(11)?,
                mean_time_s: match time.and_then(|t| rec.get(t)) {
                    Some(t) if !t.is_empty() => t.parse().map_err(|_| err(format!("row {}: bad time `{t}`", line + 1)))?,
                    _ => 0.0,
                },
            })
        };
        rows.push(MetricsRow {
            sample_size: count(0)?,
            estimator: field(1).to_string(),
            truth: num(2)?,
            metrics,
            failures,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(n: usize, label: &str, coverage: f64, me: f64) -> MetricsRow {
        MetricsRow {
            sample_size: n,
            estimator: label.into(),
            truth: -0.0611,
            metrics: Some(StudyMetrics {
                replicates: 1000,
                failures: 0,
                coverage,
                mean_width: 0.206,
                bias_eliminated_coverage: 0.95,
                mean_error: me,
                mse: 0.00284,
                mean_time_s: 0.0123,
                mc_se_coverage: (coverage * (1.0 - coverage) / 1000.0).sqrt(),
                redraws: 3,
            }),
            failures: 0,
        }
    }

    fn render(rows: &[MetricsRow], format: ReportFormat, opts: ReportOptions) -> String {
        let mut out = Vec::new();
        write_report(rows, format, opts, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn one_row_csv() {
        let text = render(&[row(200, "gcomp/logistic", 0.945, 0.00549)], ReportFormat::Csv, ReportOptions::default());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], COLUMNS.join(","));
        assert!(lines[1].starts_with("200,gcomp/logistic,-0.0611,1000,0,94.5,"), "{}", lines[1]);
        assert!(!text.contains("0.0123"));
    }

    #[test]
    fn failed_cell_is_blank() {
        let mut r = row(200, "iptw/logistic", 0.9, 0.0);
        r.metrics = None;
        r.failures = 1000;
        let text = render(&[r.clone()], ReportFormat::Csv, ReportOptions::default());
        assert_eq!(text.lines().nth(1).unwrap(), "200,iptw/logistic,-0.0611,0,1000,,,,,,,");
        assert_eq!(parse_metrics_csv(text.as_bytes()).unwrap(), vec![r.clone()]);
        assert!(render(&[r], ReportFormat::Table, ReportOptions::default()).contains("iptw/logistic"));
    }

    #[test]
    fn table_is_aligned() {
        let rows = [row(200, "crude", 0.768, 0.05891), row(1000, "gcomp2/boosted-trees", 0.945, -0.01)];
        let text = render(&rows, ReportFormat::Table, ReportOptions { include_timing: true });
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("x10^3"));
        assert!(lines[3].contains("76.8") && lines[3].contains("58.91"));
        assert!(lines[4].contains("-10.00"));
        assert_eq!(lines[3].find("crude"), lines[4].find("gcomp2"));
    }

    #[test]
    fn json_round_trips() {
        let rows = [row(500, "crude", 0.478, 0.059)];
        let text = render(&rows, ReportFormat::Json, ReportOptions { include_timing: true });
        let back: Vec<MetricsRow> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rows);
        assert!(write_report(&[], ReportFormat::Json, ReportOptions::default(), Vec::new()).is_err());
    }

    fn close(a: f64, b: f64) -> bool {
        a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
    }

    proptest! {
        #[test]
        fn csv_round_trip(cov in 0.0f64..=1.0, me in -0.2f64..0.2, mse in 0.0f64..0.1, t in 0.0f64..10.0, n in 2usize..5000) {
            let mut r = row(n, "gcomp/logistic", cov, me);
            if let Some(m) = r.metrics.as_mut() {
                m.mse = mse;
                m.mean_time_s = t;
            }
            let text = render(&[r.clone()], ReportFormat::Csv, ReportOptions { include_timing: true });
            let back = parse_metrics_csv(text.as_bytes()).unwrap();
            let (a, b) = (r.metrics.unwrap(), back[0].metrics.clone().unwrap());
            prop_assert_eq!(back[0].sample_size, n);
            prop_assert_eq!(back[0].truth, r.truth);
            for (x, y) in [
                (a.coverage, b.coverage),
                (a.mean_width, b.mean_width),
                (a.bias_eliminated_coverage, b.bias_eliminated_coverage),
                (a.mean_error, b.mean_error),
                (a.mse, b.mse),
                (a.mc_se_coverage, b.mc_se_coverage),
                (a.mean_time_s, b.mean_time_s),
            ] {
                prop_assert!(close(x, y), "{} vs {}", x, y);
            }
        }
    }
}
