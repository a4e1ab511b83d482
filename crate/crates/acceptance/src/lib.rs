//! Verdict bookkeeping for the acceptance run.

use std::fmt;
use std::time::Duration;

/// Restricts the run to a comma-separated list of criterion numbers.
pub const ONLY_ENV: &str = "SDPNN_ACCEPTANCE_ONLY";
/// When set, any FAIL makes the process exit nonzero.
pub const STRICT_ENV: &str = "SDPNN_ACCEPTANCE_STRICT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub criterion: u8,
    pub title: &'static str,
    pub verdict: Verdict,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {} ({}): {} [{:.1} s]",
            self.verdict,
            self.criterion,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// `|value − target| ≤ tol·|target|`.
pub fn within_rel(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target.abs()
}

pub fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Parses the criterion filter; `None` selects everything.
pub fn parse_only(value: Option<&str>) -> Option<Vec<u8>> {
    let v = value?.trim();
    if v.is_empty() {
        return None;
    }
    Some(v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}
