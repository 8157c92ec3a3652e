use serde::Serialize;

use super::fit::LineFit;
use super::record::SweepRecord;

/// One pass/fail line. `value` is `None` when the quantity is undefined
/// (for example a slope with fewer than two usable points), which fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub value: Option<f64>,
    pub limit: String,
    pub passed: bool,
}

impl CheckItem {
    pub fn at_most(name: impl Into<String>, value: Option<f64>, max: f64) -> Self {
        CheckItem {
            name: name.into(),
            value,
            limit: format!("<= {max:e}"),
            passed: value.is_some_and(|v| v <= max),
        }
    }

    pub fn at_least(name: impl Into<String>, value: Option<f64>, min: f64) -> Self {
        CheckItem {
            name: name.into(),
            value,
            limit: format!(">= {min:e}"),
            passed: value.is_some_and(|v| v >= min),
        }
    }

    pub fn within(name: impl Into<String>, value: Option<f64>, lo: f64, hi: f64) -> Self {
        CheckItem {
            name: name.into(),
            value,
            limit: format!("in [{lo}, {hi}]"),
            passed: value.is_some_and(|v| (lo..=hi).contains(&v)),
        }
    }

    pub fn holds(name: impl Into<String>, passed: bool, limit: impl Into<String>) -> Self {
        CheckItem {
            name: name.into(),
            value: None,
            limit: limit.into(),
            passed,
        }
    }

    pub fn line(&self) -> String {
        let value = self
            .value
            .map_or_else(|| "undefined".to_string(), |v| format!("{v:.6e}"));
        let status = if self.passed { "PASS" } else { "FAIL" };
        if self.value.is_none() && self.passed {
            format!("{status} {} ({})", self.name, self.limit)
        } else {
            format!("{status} {}: {value} ({})", self.name, self.limit)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedFit {
    pub name: String,
    /// True for a log-log fit, false for a linear one.
    pub loglog: bool,
    pub fit: LineFit,
    /// Included points in fit coordinates (logarithms for log-log fits).
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// Everything a suite produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub scenario: String,
    pub records: Vec<SweepRecord>,
    pub fits: Vec<NamedFit>,
    pub values: Vec<NamedValue>,
    pub checks: Vec<CheckItem>,
}

impl SuiteOutcome {
    pub fn new(suite: &str, scenario: &str) -> Self {
        SuiteOutcome {
            suite: suite.to_string(),
            scenario: scenario.to_string(),
            records: Vec::new(),
            fits: Vec::new(),
            values: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn gate_failures(&self) -> usize {
        self.records.iter().filter(|r| r.gate.is_failure()).count()
    }

    /// All checks pass and no record failed a gate.
    pub fn passed(&self) -> bool {
        self.gate_failures() == 0 && self.checks.iter().all(|c| c.passed)
    }

    pub fn fit(&self, name: &str) -> Option<&LineFit> {
        self.fits.iter().find(|f| f.name == name).map(|f| &f.fit)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|v| v.name == name).map(|v| v.value)
    }

    pub fn check(&self, name: &str) -> Option<&CheckItem> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub(crate) fn push_value(&mut self, name: impl Into<String>, value: f64) {
        self.values.push(NamedValue {
            name: name.into(),
            value,
        });
    }

    /// `raw` are the (x, y, include) triples passed to the fit.
    pub(crate) fn push_fit(
        &mut self,
        name: impl Into<String>,
        loglog: bool,
        fit: LineFit,
        raw: &[(f64, f64, bool)],
    ) {
        let points = raw
            .iter()
            .filter(|p| p.2)
            .map(|&(x, y, _)| if loglog { [x.ln(), y.ln()] } else { [x, y] })
            .filter(|p| p[0].is_finite() && p[1].is_finite())
            .collect();
        self.fits.push(NamedFit {
            name: name.into(),
            loglog,
            fit,
            points,
        });
    }

    pub(crate) fn push_gate_check(&mut self) {
        let n = self.gate_failures();
        self.checks.push(CheckItem {
            name: "gates".into(),
            value: Some(n as f64),
            limit: "no gated records".into(),
            passed: n == 0,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_values_fail() {
        assert!(!CheckItem::at_most("x", None, 1.0).passed);
        assert!(!CheckItem::within("x", None, 0.0, 1.0).passed);
        assert!(CheckItem::within("x", Some(0.5), 0.0, 1.0).passed);
        assert!(CheckItem::at_least("x", Some(1.0), 1.0).passed);
        assert!(CheckItem::at_most("x", None, 1.0)
            .line()
            .contains("undefined"));
    }
}
