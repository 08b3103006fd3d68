//! Machine-readable verification reports.

use std::collections::BTreeMap;

use serde::Serialize;

/// One verified property: passes when `value <= tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

/// Tolerance table: module defaults, halved by `--strict`, replaced per check by `--tol`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Tolerances {
    pub overrides: BTreeMap<String, f64>,
    pub strict: bool,
}

impl Tolerances {
    pub fn resolve(&self, name: &str, default: f64) -> f64 {
        match self.overrides.get(name) {
            Some(&v) => v,
            None if self.strict => 0.5 * default,
            None => default,
        }
    }
}

/// Parses `NAME=VALUE`.
pub fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("invalid tolerance value in {s:?}"))?;
    if !(value >= 0.0) {
        return Err(format!("tolerance must be nonnegative in {s:?}"));
    }
    Ok((name.trim().to_string(), value))
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub command: String,
    pub config: serde_json::Value,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
    pub details: serde_json::Value,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.summary.failed == 0
    }
}

/// Accumulates check records for one command.
#[derive(Debug)]
pub struct ReportBuilder<'a> {
    command: String,
    tolerances: &'a Tolerances,
    records: Vec<CheckRecord>,
    details: serde_json::Map<String, serde_json::Value>,
}

impl<'a> ReportBuilder<'a> {
    pub fn new(command: &str, tolerances: &'a Tolerances) -> Self {
        Self { command: command.to_string(), tolerances, records: Vec::new(), details: serde_json::Map::new() }
    }

    /// Records `value <= tolerance`, where the tolerance defaults to `default`.
    pub fn check(&mut self, name: &str, anchor: &str, value: f64, default: f64) -> bool {
        let tolerance = self.tolerances.resolve(name, default);
        let passed = value <= tolerance;
        self.records.push(CheckRecord { name: name.into(), anchor: anchor.into(), value, tolerance, passed });
        passed
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("report details serialize");
        self.details.insert(key.to_string(), v);
    }

    pub fn finish(self, config: serde_json::Value) -> VerificationReport {
        let failures: Vec<String> = self.records.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
        let summary = Summary {
            total: self.records.len(),
            passed: self.records.len() - failures.len(),
            failed: failures.len(),
            failures,
        };
        VerificationReport {
            command: self.command,
            config,
            records: self.records,
            summary,
            details: serde_json::Value::Object(self.details),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_resolution() {
        let mut t = Tolerances::default();
        assert_eq!(t.resolve("a", 1.0), 1.0);
        t.strict = true;
        assert_eq!(t.resolve("a", 1.0), 0.5);
        t.overrides.insert("a".into(), 3.0);
        assert_eq!(t.resolve("a", 1.0), 3.0);
        assert_eq!(parse_tolerance("gle_residual=1e-5").unwrap(), ("gle_residual".into(), 1e-5));
        assert!(parse_tolerance("x").is_err());
        assert!(parse_tolerance("x=-1").is_err());
    }

    #[test]
    fn nan_fails_and_summary_counts() {
        let t = Tolerances::default();
        let mut b = ReportBuilder::new("test", &t);
        assert!(b.check("ok", "label", 0.5, 1.0));
        assert!(!b.check("nan", "label", f64::NAN, 1.0));
        assert!(!b.check("big", "label", 2.0, 1.0));
        let r = b.finish(serde_json::Value::Null);
        assert!(!r.passed());
        assert_eq!(r.summary.failures, vec!["nan", "big"]);
        assert_eq!((r.summary.total, r.summary.passed), (3, 1));
    }
}
