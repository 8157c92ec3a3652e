use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator floor of the relative error, so exact zeros in the
/// prediction (residual-type quantities) do not divide by zero.
pub const REL_ERR_FLOOR: f64 = 1e-14;

/// Gate flags of one record, rendered as `ok` or a `|`-joined list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct GateFlags(u8);

impl GateFlags {
    /// Gram residual of the truncated basis above tolerance.
    pub const GRAM: GateFlags = GateFlags(1);
    /// Truncation tail estimate above tolerance.
    pub const TAIL: GateFlags = GateFlags(2);
    /// Finite-difference step failed the halving test.
    pub const STEP: GateFlags = GateFlags(4);
    /// Any other computation error.
    pub const ERROR: GateFlags = GateFlags(8);
    /// Value at round-off level; excluded from fits but not a failure.
    pub const NOISE: GateFlags = GateFlags(16);

    const NAMES: [(GateFlags, &'static str); 5] = [
        (Self::GRAM, "gram"),
        (Self::TAIL, "tail"),
        (Self::STEP, "step"),
        (Self::ERROR, "error"),
        (Self::NOISE, "noise"),
    ];

    pub const fn ok() -> Self {
        GateFlags(0)
    }

    pub fn contains(self, other: GateFlags) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn with(self, other: GateFlags) -> Self {
        GateFlags(self.0 | other.0)
    }

    pub fn is_ok(self) -> bool {
        self.0 == 0
    }

    /// True if any flag other than NOISE is set.
    pub fn is_failure(self) -> bool {
        self.0 & !Self::NOISE.0 != 0
    }

    /// Flag for a computation error, by kind.
    pub fn for_error(e: &Error) -> Self {
        match e {
            Error::GramGate { .. } => Self::GRAM,
            Error::TailGate { .. } | Error::QuadratureOverflow { .. } => Self::TAIL,
            Error::StepTooLarge { .. } => Self::STEP,
            _ => Self::ERROR,
        }
    }
}

impl fmt::Display for GateFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let names: Vec<&str> = Self::NAMES
            .iter()
            .filter(|(g, _)| self.contains(*g))
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join("|"))
    }
}

impl FromStr for GateFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ok" {
            return Ok(Self::ok());
        }
        s.split('|').try_fold(Self::ok(), |acc, part| {
            Self::NAMES
                .iter()
                .find(|(_, n)| *n == part)
                .map(|(g, _)| acc.with(*g))
                .ok_or_else(|| Error::InvalidInput(format!("unknown gate flag '{part}'")))
        })
    }
}

impl From<GateFlags> for String {
    fn from(g: GateFlags) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for GateFlags {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One model-versus-prediction data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scenario: String,
    pub k: f64,
    pub quantity: String,
    pub model: Complex64,
    pub predicted: Complex64,
    /// |model − predicted| / max(|predicted|, REL_ERR_FLOOR).
    pub rel_err: f64,
    pub gate: GateFlags,
}

impl SweepRecord {
    pub fn new(
        scenario: &str,
        k: f64,
        quantity: &str,
        model: Complex64,
        predicted: Complex64,
        gate: GateFlags,
    ) -> Self {
        SweepRecord {
            scenario: scenario.to_string(),
            k,
            quantity: quantity.to_string(),
            model,
            predicted,
            rel_err: relative_error(model, predicted),
            gate,
        }
    }

    /// A record for a point whose computation failed a gate.
    pub fn failed(scenario: &str, k: f64, quantity: &str, err: &Error) -> Self {
        let nan = Complex64::new(f64::NAN, f64::NAN);
        SweepRecord {
            scenario: scenario.to_string(),
            k,
            quantity: quantity.to_string(),
            model: nan,
            predicted: nan,
            rel_err: f64::NAN,
            gate: GateFlags::for_error(err),
        }
    }

    pub fn real(
        scenario: &str,
        k: f64,
        quantity: &str,
        model: f64,
        predicted: f64,
        gate: GateFlags,
    ) -> Self {
        Self::new(
            scenario,
            k,
            quantity,
            Complex64::new(model, 0.0),
            Complex64::new(predicted, 0.0),
            gate,
        )
    }
}

pub fn relative_error(model: Complex64, predicted: Complex64) -> f64 {
    (model - predicted).norm() / predicted.norm().max(REL_ERR_FLOOR)
}

/// Records sorted by (quantity, k) so emission order does not depend on
/// the order in which parallel tasks finished.
pub fn sort_records(records: &mut [SweepRecord]) {
    records.sort_by(|a, b| a.quantity.cmp(&b.quantity).then(a.k.total_cmp(&b.k)));
}
