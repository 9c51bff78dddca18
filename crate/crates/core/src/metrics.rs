//! RAM/SAM byte accounting and the run report document.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adjoint::{Strategy, SIGMA};
use crate::tape::TapeStats;

/// Bytes per tape stream entry.
pub const ENTRY_BYTES: usize = 8;

pub const REPORT_VERSION: u32 = 1;

/// Adjoint vector size and tape size in bytes for running `strategy` on a
/// tape with `stats`.
pub fn account(stats: &TapeStats, strategy: Strategy) -> (usize, usize) {
    let ram = strategy.slot_count(stats) * SIGMA;
    let sam = (stats.s_len + stats.d_len) * ENTRY_BYTES;
    (ram, sam)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub max_rel_err: f64,
    pub fd_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub version: u32,
    pub problem: String,
    pub strategy: String,
    pub n: usize,
    pub m: usize,
    pub vertices: usize,
    pub edges: usize,
    pub p_l: usize,
    pub beta: usize,
    pub beta_r: usize,
    pub ram_bytes: usize,
    pub sam_bytes: usize,
    pub record_seconds: f64,
    pub sweep_seconds: f64,
    pub total_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_check: Option<GradCheckSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
}

impl MemoryReport {
    pub fn new(problem: &str, strategy: Strategy, stats: &TapeStats) -> Self {
        let (ram_bytes, sam_bytes) = account(stats, strategy);
        Self {
            version: REPORT_VERSION,
            problem: problem.to_string(),
            strategy: strategy.name().to_string(),
            n: stats.num_inputs,
            m: stats.num_outputs,
            vertices: stats.num_vertices,
            edges: stats.num_edges,
            p_l: stats.p_l,
            beta: stats.beta,
            beta_r: stats.beta_r,
            ram_bytes,
            sam_bytes,
            record_seconds: 0.0,
            sweep_seconds: 0.0,
            total_seconds: 0.0,
            grad_check: None,
            gradient: None,
        }
    }

    pub fn with_timing(mut self, record_seconds: f64, sweep_seconds: f64) -> Self {
        self.record_seconds = record_seconds;
        self.sweep_seconds = sweep_seconds;
        self.total_seconds = record_seconds + sweep_seconds;
        self
    }

    pub fn with_gradient(mut self, gradient: Vec<f64>) -> Self {
        self.gradient = Some(gradient);
        self
    }

    pub fn with_grad_check(mut self, max_rel_err: f64, fd_step: f64) -> Self {
        self.grad_check = Some(GradCheckSummary {
            max_rel_err,
            fd_step,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub version: u32,
    pub reports: Vec<MemoryReport>,
}

impl ReportDocument {
    pub fn new(reports: Vec<MemoryReport>) -> Self {
        Self {
            version: REPORT_VERSION,
            reports,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Aligned text table, one row per report, problems grouped in first
    /// appearance order.
    pub fn to_table(&self) -> String {
        const HEADER: [&str; 12] = [
            "problem", "strategy", "n", "m", "|V|", "|E|", "p_L", "beta", "beta_R", "RAM[B]",
            "SAM[B]", "time[s]",
        ];
        let mut order: Vec<&str> = Vec::new();
        for r in &self.reports {
            if !order.contains(&r.problem.as_str()) {
                order.push(&r.problem);
            }
        }
        let mut rows: Vec<Vec<String>> = Vec::new();
        for p in order {
            for r in self.reports.iter().filter(|r| r.problem == p) {
                let mut row = vec![
                    r.problem.clone(),
                    r.strategy.clone(),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.vertices.to_string(),
                    r.edges.to_string(),
                    r.p_l.to_string(),
                    r.beta.to_string(),
                    r.beta_r.to_string(),
                    r.ram_bytes.to_string(),
                    r.sam_bytes.to_string(),
                    format!("{:.3}", r.total_seconds),
                ];
                if let Some(g) = &r.grad_check {
                    row.push(format!("{:.2e}", g.max_rel_err));
                }
                rows.push(row);
            }
        }
        let with_check = self.reports.iter().any(|r| r.grad_check.is_some());
        let mut header: Vec<String> = HEADER.iter().map(|s| s.to_string()).collect();
        if with_check {
            header.push("fd_err".into());
        }
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let mut text = String::new();
            for (i, cell) in cells.iter().enumerate() {
                if i > 0 {
                    text.push_str("  ");
                }
                // names left, numbers right
                if i < 2 {
                    let _ = write!(text, "{cell:<w$}", w = widths[i]);
                } else {
                    let _ = write!(text, "{cell:>w$}", w = widths[i]);
                }
            }
            out.push_str(text.trim_end());
            out.push('\n');
        };
        line(&header);
        for row in &rows {
            line(row);
        }
        out
    }
}

/// Render reports as the structured document or the table.
pub fn emit_report(reports: &[MemoryReport], structured: bool) -> String {
    let doc = ReportDocument::new(reports.to_vec());
    if structured {
        doc.to_json()
    } else {
        doc.to_table()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Mode;

    fn stats() -> TapeStats {
        TapeStats {
            mode: Mode::Dag,
            num_vertices: 7,
            num_inputs: 1,
            num_outputs: 1,
            num_edges: 8,
            num_elementals: 6,
            beta: 6,
            beta_r: 0,
            copy_reach: 0,
            p_l: 0,
            num_remainder: 7,
            s_len: 21,
            d_len: 8,
        }
    }

    #[test]
    fn byte_accounting() {
        assert_eq!(account(&stats(), Strategy::Flat), (56, 232));
        assert_eq!(account(&stats(), Strategy::Bandwidth), (48, 232));
    }

    #[test]
    fn json_round_trip_omits_missing_check() {
        let r = MemoryReport::new("intro", Strategy::Flat, &stats());
        let doc = ReportDocument::new(vec![r.clone()]);
        let text = doc.to_json();
        assert!(!text.contains("grad_check"));
        assert_eq!(ReportDocument::from_json(&text).unwrap(), doc);
        let checked = r.with_grad_check(1e-10, 1e-6);
        assert!(emit_report(&[checked], true).contains("max_rel_err"));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let r = MemoryReport::new("intro", Strategy::Flat, &stats());
        let mut value = serde_json::to_value(ReportDocument::new(vec![r])).unwrap();
        value["extra"] = serde_json::json!(1);
        value["reports"][0]["future"] = serde_json::json!("x");
        let doc: ReportDocument = serde_json::from_value(value).unwrap();
        assert_eq!(doc.reports.len(), 1);
    }

    #[test]
    fn table_groups_problems() {
        let a = MemoryReport::new("a", Strategy::Flat, &stats());
        let b = MemoryReport::new("b", Strategy::Flat, &stats());
        let a2 = MemoryReport::new("a", Strategy::Bandwidth, &stats());
        let table = emit_report(&[a, b, a2], false);
        let problems: Vec<&str> = table
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        assert_eq!(problems, vec!["a", "a", "b"]);
        assert_eq!(table.lines().count(), 4);
    }
}
