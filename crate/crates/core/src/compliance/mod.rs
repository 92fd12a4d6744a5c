//! Regulation clauses as premises, policy sentences as hypotheses: pairing,
//! verdicts and reports.

mod clauses;
mod findings;
mod report;
mod verdict;

pub use clauses::{load_clauses, parse_clauses, shipped_clauses, ClauseSet, RegulationClause, SHIPPED_GDPR_CLAUSES};
pub use findings::{pair_and_predict, predict_pair, sort_findings, Finding};
pub use report::{render_report, write_report, Report, ReportFormat, ReportHeader, VerdictCounts};
pub use verdict::{verdict, Verdict, DEFAULT_THRESHOLD};
