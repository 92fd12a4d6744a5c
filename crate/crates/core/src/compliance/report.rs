use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compliance::{sort_findings, Finding, Verdict};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Jsonl,
    Text,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub potential_violation: usize,
    pub supported: usize,
    pub inconclusive: usize,
}

impl VerdictCounts {
    pub fn of(findings: &[Finding]) -> Self {
        let mut c = VerdictCounts::default();
        for f in findings {
            match f.verdict {
                Verdict::PotentialViolation => c.potential_violation += 1,
                Verdict::Supported => c.supported += 1,
                Verdict::Inconclusive => c.inconclusive += 1,
            }
        }
        c
    }
}

/// First line of a JSONL report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub generated_at: String,
    pub model_id: String,
    pub clause_file_sha256: String,
    pub threshold: f64,
    pub documents: usize,
    pub pairs: usize,
    pub summary: VerdictCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub header: ReportHeader,
    pub findings: Vec<Finding>,
}

impl Report {
    pub fn new(
        mut findings: Vec<Finding>,
        generated_at: String,
        model_id: String,
        clause_file_sha256: String,
        threshold: f64,
        documents: usize,
    ) -> Self {
        sort_findings(&mut findings);
        Report {
            header: ReportHeader {
                generated_at,
                model_id,
                clause_file_sha256,
                threshold,
                documents,
                pairs: findings.len(),
                summary: VerdictCounts::of(&findings),
            },
            findings,
        }
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::Format("empty report".into()))?;
        let header: ReportHeader =
            serde_json::from_str(first).map_err(|e| Error::Format(format!("report header: {e}")))?;
        let findings = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("report line {}: {e}", i + 1))))
            .collect::<Result<Vec<Finding>>>()?;
        if findings.len() != header.pairs || VerdictCounts::of(&findings) != header.summary {
            return Err(Error::Format("report summary does not match its findings".into()));
        }
        Ok(Report { header, findings })
    }
}

fn fmt_probs(p: &[f32; 3]) -> String {
    format!("c={:.3} n={:.3} e={:.3}", p[0], p[1], p[2])
}

pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Jsonl => {
            let mut out = serde_json::to_string(&report.header).expect("header serialises");
            out.push('\n');
            for f in &report.findings {
                out.push_str(&serde_json::to_string(f).expect("finding serialises"));
                out.push('\n');
            }
            out
        }
        ReportFormat::Text => {
            let h = &report.header;
            let mut out = String::new();
            writeln!(out, "compliance report generated {}", h.generated_at).unwrap();
            writeln!(out, "model {}  threshold {}  clauses sha256 {}", h.model_id, h.threshold, h.clause_file_sha256).unwrap();
            writeln!(
                out,
                "{} documents, {} pairs: {} potential_violation, {} supported, {} inconclusive",
                h.documents, h.pairs, h.summary.potential_violation, h.summary.supported, h.summary.inconclusive
            )
            .unwrap();
            let mut groups: BTreeMap<(&str, &str), Vec<&Finding>> = BTreeMap::new();
            for f in &report.findings {
                groups.entry((&f.app_id, &f.clause_id)).or_default().push(f);
            }
            let mut last_app = "";
            for ((app, clause), fs) in groups {
                if app != last_app {
                    writeln!(out, "\n== {app}").unwrap();
                    last_app = app;
                }
                writeln!(out, "  -- {clause}").unwrap();
                for f in fs {
                    writeln!(out, "    [{}] {} #{} {}", f.verdict, fmt_probs(&f.probs), f.sentence_index, f.sentence.replace('\n', " ")).unwrap();
                }
            }
            out
        }
    }
}

pub fn write_report(report: &Report, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(report, format)).map_err(|e| Error::io(path, e))
}
