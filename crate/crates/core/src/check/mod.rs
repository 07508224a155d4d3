//! Independent verification machinery: brute-force oracles and
//! finite-difference gradient checks.
//!
//! Everything here recomputes results along a second, deliberately naive
//! route (explicit shift enumeration, dense linear solves, triple loops,
//! central differences) and never calls into the paths it is checking.
//! Tests and the `gradcheck`/`oracle` CLI subcommands share these suites.

pub mod gradcheck;
pub mod oracles;

use alloc::format;
use alloc::string::String;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// Largest error observed, in the check's own metric.
    pub max_err: f64,
    pub detail: String,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, pass: bool, max_err: f64, detail: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            pass,
            max_err,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} (max err {:.3e}{}{})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.max_err,
            if self.detail.is_empty() { "" } else { "; " },
            self.detail
        )
    }
}
