use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparsity::SparsityReport;
use crate::trainer::MetricsRecord;

/// Metrics records of one run under a label.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsSeries {
    pub label: String,
    pub records: Vec<MetricsRecord>,
}

/// Parse a line-delimited metrics stream; blank lines are skipped.
pub fn parse_metrics(text: &str, source: &str) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{source}:{}: malformed metrics record: {e}", i + 1)))?;
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{source}: no metrics records")));
    }
    Ok(out)
}

/// Label for a metrics file: its parent directory name, or the file stem.
pub(crate) fn default_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    match (stem.as_deref(), path.parent().and_then(Path::file_name)) {
        (Some("metrics"), Some(dir)) => dir.to_string_lossy().into_owned(),
        (Some(s), _) => s.to_string(),
        _ => path.display().to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV of every record in every series, and a summary table of the final records.
pub fn render_report(series: &[MetricsSeries]) -> Result<(String, String)> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    w.write_record([
        "label",
        "epoch",
        "trainLoss",
        "validQuality",
        "testQuality",
        "sparsityX",
        "sparsityH",
        "sparsityY",
        "testQualityPruned",
    ])
    .map_err(csv_err)?;
    for s in series {
        for r in &s.records {
            w.write_record([
                s.label.clone(),
                r.epoch.to_string(),
                opt(r.train_loss),
                r.valid_quality.to_string(),
                r.test_quality.to_string(),
                opt(r.sparsity_x),
                opt(r.sparsity_h),
                opt(r.sparsity_y),
                opt(r.test_quality_pruned),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    let csv = String::from_utf8(bytes).expect("csv output is utf-8");

    let width = series.iter().map(|s| s.label.len()).max().unwrap_or(0).max(5);
    let mut table = format!("{:<width$}  epoch  valid     test      sparsity\n", "label");
    for s in series {
        let last = s.records.last().ok_or_else(|| Error::Data(format!("{}: empty series", s.label)))?;
        let sparsity = match (last.sparsity_x, last.sparsity_h) {
            (Some(x), Some(h)) => SparsityReport { x, h, y: last.sparsity_y }.to_string(),
            _ => "-".into(),
        };
        writeln!(
            table,
            "{:<width$}  {:>5}  {:<8.4}  {:<8.4}  {sparsity}",
            s.label, last.epoch, last.valid_quality, last.test_quality
        )
        .unwrap();
    }
    Ok((csv, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(epoch: usize, q: f64) -> MetricsRecord {
        MetricsRecord {
            epoch,
            train_loss: (epoch > 0).then_some(1.0),
            valid_quality: q,
            test_quality: q + 0.1,
            sparsity_x: Some(99.954),
            sparsity_h: Some(99.92),
            sparsity_y: None,
            wall_clock: None,
            kl_scale: Some(1.0),
            test_quality_pruned: Some(q),
        }
    }

    #[test]
    fn summary_row_is_last_record() {
        let text = [rec(0, 2.0), rec(1, 1.5)].iter().map(|r| r.to_line() + "\n").collect::<String>();
        let records = parse_metrics(&text, "m").unwrap();
        let (csv, table) = render_report(&[MetricsSeries {
            label: "run".into(),
            records,
        }])
        .unwrap();
        assert_eq!(csv.lines().count(), 3);
        let row = table.lines().nth(1).unwrap();
        assert!(row.contains("1.5000") && row.contains("99.95 \u{2013} 99.92"), "{row}");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let text = format!("{}\n{{oops\n", rec(0, 1.0).to_line());
        let e = parse_metrics(&text, "f.jsonl").unwrap_err().to_string();
        assert!(e.contains("f.jsonl:2"), "{e}");
    }

    #[test]
    fn empty_file_rejected() {
        assert!(parse_metrics("\n\n", "e").is_err());
    }

    #[test]
    fn labels_from_paths() {
        assert_eq!(default_label(Path::new("runs/dense/metrics.jsonl")), "dense");
        assert_eq!(default_label(Path::new("sparse.jsonl")), "sparse");
    }
}
