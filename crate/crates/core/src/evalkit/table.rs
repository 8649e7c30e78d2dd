use std::io;

use serde::{Deserialize, Serialize};

use super::evaluate::EvalReport;

/// `"78.91 ± 6.92"`.
pub fn format_accuracy(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

/// `"64.21"`.
pub fn format_runtime(seconds: f64) -> String {
    format!("{seconds:.2}")
}

/// One CSV line per report, floats at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pipeline: String,
    pub route: String,
    pub dataset: String,
    pub entries: usize,
    pub folds: usize,
    /// Semicolon-separated fold accuracies.
    pub fold_accuracies: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub std_convention: String,
    pub mean_runtime_seconds: f64,
    pub overall_accuracy: f64,
    pub failed: usize,
}

impl ReportRow {
    pub fn accuracy_cell(&self) -> String {
        format_accuracy(self.mean_accuracy, self.std_accuracy)
    }

    pub fn runtime_cell(&self) -> String {
        format_runtime(self.mean_runtime_seconds)
    }
}

impl From<&EvalReport> for ReportRow {
    fn from(r: &EvalReport) -> Self {
        Self {
            pipeline: r.pipeline.clone(),
            route: r.route.clone(),
            dataset: r.dataset.clone(),
            entries: r.n_entries,
            folds: r.k_folds,
            fold_accuracies: r.fold_accuracies.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            mean_accuracy: r.mean_accuracy,
            std_accuracy: r.std_accuracy,
            std_convention: r.std_convention.to_string(),
            mean_runtime_seconds: r.mean_runtime_seconds,
            overall_accuracy: r.overall_accuracy,
            failed: r.failed_count,
        }
    }
}

pub fn write_report_csv<W: io::Write>(rows: &[ReportRow], out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_report_csv<R: io::Read>(input: R) -> csv::Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Per-entry CSV: id, fold, verdict, runtime, failure flag, call count and
/// transcript path.
pub fn write_entries_csv<W: io::Write>(report: &EvalReport, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["id", "fold", "verdict", "runtime_seconds", "failed", "calls", "error", "transcript"])?;
    for e in &report.entries {
        writer.write_record([
            e.id.clone(),
            e.fold.to_string(),
            e.verdict.to_string(),
            e.runtime_seconds.to_string(),
            e.failed.to_string(),
            e.calls.to_string(),
            e.error.clone().unwrap_or_default(),
            e.transcript.clone().unwrap_or_default(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Text table with one row per (pipeline, route) and an accuracy and a
/// runtime column per dataset.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut configs: Vec<(&str, &str)> = Vec::new();
    for row in rows {
        if !datasets.contains(&row.dataset.as_str()) {
            datasets.push(&row.dataset);
        }
        let config = (row.pipeline.as_str(), row.route.as_str());
        if !configs.contains(&config) {
            configs.push(config);
        }
    }

    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Pipeline".to_string(), "Route".to_string()];
    for d in &datasets {
        header.push(format!("{d} Accuracy(%)"));
        header.push(format!("{d} Runtime(s)"));
    }
    grid.push(header);
    for (pipeline, route) in &configs {
        let mut line = vec![pipeline.to_string(), route.to_string()];
        for d in &datasets {
            match rows
                .iter()
                .find(|r| r.pipeline == *pipeline && r.route == *route && r.dataset == *d)
            {
                Some(r) => {
                    line.push(r.accuracy_cell());
                    line.push(r.runtime_cell());
                }
                None => line.extend(["-".to_string(), "-".to_string()]),
            }
        }
        grid.push(line);
    }

    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &grid {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Rendered table and full-precision CSV for a set of reports.
pub fn emit_table(reports: &[EvalReport]) -> (String, String) {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    let mut csv = Vec::new();
    write_report_csv(&rows, &mut csv).expect("writing to memory");
    (render_table(&rows), String::from_utf8(csv).expect("csv is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(route: &str, dataset: &str, mean: f64, std: f64, runtime: f64) -> ReportRow {
        ReportRow {
            pipeline: "medagents".into(),
            route: route.into(),
            dataset: dataset.into(),
            entries: 120,
            folds: 3,
            fold_accuracies: String::new(),
            mean_accuracy: mean,
            std_accuracy: std,
            std_convention: "sample".into(),
            mean_runtime_seconds: runtime,
            overall_accuracy: mean,
            failed: 0,
        }
    }

    #[test]
    fn cells() {
        assert_eq!(format_accuracy(78.91, 6.92), "78.91 ± 6.92");
        assert_eq!(format_runtime(64.21), "64.21");
        assert_eq!(format_accuracy(50.0, 0.0), "50.00 ± 0.00");
    }

    #[test]
    fn table_layout() {
        let rows = [
            row("GPT-4", "MedQA", 78.91, 6.92, 64.21),
            row("o1", "MedQA", 83.33, 2.89, 100.0),
            row("GPT-4", "MedMCQA", 70.0, 5.0, 50.0),
        ];
        let table = render_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Pipeline"));
        assert!(lines[0].contains("MedQA Accuracy(%)") && lines[0].contains("MedMCQA Runtime(s)"));
        assert!(lines[1].contains("78.91 ± 6.92") && lines[1].contains("64.21"));
        assert!(lines[2].contains("100.00") && lines[2].trim_end().ends_with('-'));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("GPT-4", "MedQA", 78.9123456789, 6.92, 64.21)];
        let mut buf = Vec::new();
        write_report_csv(&rows, &mut buf).unwrap();
        let back = read_report_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[0].accuracy_cell(), "78.91 ± 6.92");
    }
}
