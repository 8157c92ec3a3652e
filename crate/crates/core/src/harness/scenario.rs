use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{flow_from_hamiltonian, truncation_for, QuadraticFlow};
use crate::linalg::symmetry_residual;
use crate::symplectic::{graph_splitting, unstack, SymplecticMatrix};

/// Scenario files carry `schema = SCHEMA_VERSION`; anything else is rejected.
pub const SCHEMA_VERSION: u32 = 1;

/// Which zeroth-order symbol multiplies the pulled-back operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoMode {
    /// ϱ = 1.
    #[default]
    One,
    /// ϱ = 2^{−d/2}√ν.
    Unitarized,
    /// ϱ₀ + f₁/k with f₁ fitted over the scenario's levels.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetTag {
    Normal,
    Graph,
    Generic,
}

/// A rescaled offset pair (u, w), given either directly or as coordinates
/// in the orthonormal basis of the normal space to graph(A_τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Offset {
    pub label: String,
    pub tag: OffsetTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<Vec<f64>>,
    /// Accepted range for the fitted log-log slope of the relative error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<[f64; 2]>,
}

impl Offset {
    pub fn resolve(&self, a: &SymplecticMatrix) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = 2 * a.d();
        match (&self.u, &self.w, &self.normal) {
            (Some(u), Some(w), None) => {
                if u.len() != n || w.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "offset '{}' needs vectors of length {n}",
                        self.label
                    )));
                }
                Ok((DVector::from_column_slice(u), DVector::from_column_slice(w)))
            }
            (None, None, Some(c)) => {
                if c.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "offset '{}' needs {n} normal coordinates",
                        self.label
                    )));
                }
                let uw = graph_splitting(a).normal_vector(&DVector::from_column_slice(c))?;
                Ok(unstack(&uw))
            }
            _ => Err(Error::InvalidInput(format!(
                "offset '{}' must give either both u and w or normal coordinates",
                self.label
            ))),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        [&self.u, &self.w, &self.normal]
            .into_iter()
            .flatten()
            .flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationRule {
    /// N = max(minimum, ⌈multiplier·√k⌉).
    #[default]
    Sqrt,
    /// N = max(minimum, ⌈multiplier·(kR² + 1)⌉) for a bump of radius² R².
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    #[serde(default)]
    pub rule: TruncationRule,
    pub multiplier: f64,
    #[serde(default)]
    pub minimum: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Unrescaled offset of w from the graph; u = 0 and w = √k·δ.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub radius_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchrodingerConfig {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub dtau: f64,
}

/// Pass/fail thresholds; a check runs only when its threshold is present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub ratio_k: Option<u32>,
    pub ratio_tolerance: Option<f64>,
    pub decay_min_r2: Option<f64>,
    pub defect_max: Option<f64>,
    pub defect_slope_max: Option<f64>,
    pub plateau_slope_max: Option<f64>,
    pub improvement_min: Option<f64>,
    pub window_stability: Option<f64>,
    pub trace_k: Option<u32>,
    pub trace_tolerance: Option<f64>,
    pub trace_decreasing: Option<bool>,
    pub oracle_tolerance: Option<f64>,
    pub schrodinger_slope_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub id: String,
    pub d: usize,
    /// Row-major symmetric 2d × 2d matrix.
    pub hamiltonian: Vec<Vec<f64>>,
    pub tau: f64,
    #[serde(default)]
    pub rho_mode: RhoMode,
    pub k_list: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
    pub truncation: Truncation,
    #[serde(default)]
    pub offsets: Vec<Offset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schrodinger: Option<SchrodingerConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

const BUILTINS: &[(&str, &str)] = &[
    (
        "hyperbolic-kernel",
        include_str!("../../../../scenarios/hyperbolic-kernel.toml"),
    ),
    (
        "rotation-kernel",
        include_str!("../../../../scenarios/rotation-kernel.toml"),
    ),
    (
        "szego-kernel",
        include_str!("../../../../scenarios/szego-kernel.toml"),
    ),
    (
        "rotation-unitarity",
        include_str!("../../../../scenarios/rotation-unitarity.toml"),
    ),
    (
        "hyperbolic-unitarity-one",
        include_str!("../../../../scenarios/hyperbolic-unitarity-one.toml"),
    ),
    (
        "hyperbolic-unitarity-unitarized",
        include_str!("../../../../scenarios/hyperbolic-unitarity-unitarized.toml"),
    ),
    (
        "hyperbolic-unitarity-corrected",
        include_str!("../../../../scenarios/hyperbolic-unitarity-corrected.toml"),
    ),
    (
        "rotation-trace",
        include_str!("../../../../scenarios/rotation-trace.toml"),
    ),
    (
        "hyperbolic-schrodinger",
        include_str!("../../../../scenarios/hyperbolic-schrodinger.toml"),
    ),
];

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<toml>".into(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<json>".into(),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    /// Loads a `.toml` or `.json` scenario file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            Error::InvalidInput(message) => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Scenarios shipped in the repository's `scenarios/` directory.
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown built-in scenario '{name}'")))?;
        Self::from_toml_str(text)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!(
                "unsupported scenario schema {} (expected {SCHEMA_VERSION})",
                self.schema
            ));
        }
        if self.d == 0 {
            return bad("dimension must be at least 1".into());
        }
        let n = 2 * self.d;
        if self.hamiltonian.len() != n || self.hamiltonian.iter().any(|r| r.len() != n) {
            return bad(format!("hamiltonian must be {n}×{n}"));
        }
        let h = self.hamiltonian_matrix();
        if h.iter().any(|x| !x.is_finite()) {
            return bad("hamiltonian entries must be finite".into());
        }
        let res = symmetry_residual(&h);
        if res > 1e-12 * h.amax().max(1.0) {
            return Err(Error::NotSymmetric { residual: res });
        }
        if !self.tau.is_finite() {
            return bad("tau must be finite".into());
        }
        if self.k_list.is_empty()
            || self.k_list[0] == 0
            || self.k_list.windows(2).any(|p| p[0] >= p[1])
        {
            return bad("k_list must be nonempty, positive and strictly ascending".into());
        }
        let t = &self.truncation;
        if !(t.multiplier > 0.0 && t.multiplier.is_finite()) {
            return bad("truncation multiplier must be positive".into());
        }
        if t.rule == TruncationRule::Bump && self.trace.is_none() {
            return bad("bump truncation needs a [trace] radius".into());
        }
        for o in &self.offsets {
            if o.values().any(|x| !x.is_finite()) {
                return bad(format!("offset '{}' is not finite", o.label));
            }
            if let Some([lo, hi]) = o.slope_range {
                if !(lo <= hi) {
                    return bad(format!("offset '{}' has an empty slope range", o.label));
                }
            }
        }
        if let Some(dc) = &self.decay {
            if dc.delta.len() != n || dc.delta.iter().any(|x| !x.is_finite()) {
                return bad(format!("decay delta must be a finite vector of length {n}"));
            }
        }
        if let Some(tc) = &self.trace {
            if !(tc.radius_sq > 0.0 && tc.radius_sq.is_finite()) {
                return bad("trace radius_sq must be positive".into());
            }
        }
        if let Some(sc) = &self.schrodinger {
            if sc.u.len() != n || sc.w.len() != n || !(sc.dtau > 0.0) {
                return bad(format!(
                    "schrodinger needs u, w of length {n} and a positive dtau"
                ));
            }
        }
        Ok(())
    }

    pub fn hamiltonian_matrix(&self) -> DMatrix<f64> {
        let n = self.hamiltonian.len();
        DMatrix::from_fn(n, n, |i, j| self.hamiltonian[i][j])
    }

    pub fn flow(&self) -> Result<QuadraticFlow> {
        flow_from_hamiltonian(&self.hamiltonian_matrix(), self.tau)
    }

    /// Truncation degree N(k).
    pub fn truncation_at(&self, k: f64) -> usize {
        let t = &self.truncation;
        match t.rule {
            TruncationRule::Sqrt => truncation_for(k, t.multiplier, t.minimum),
            TruncationRule::Bump => {
                let r2 = self.trace.map_or(0.0, |c| c.radius_sq);
                ((t.multiplier * (k * r2 + 1.0)).ceil() as usize).max(t.minimum)
            }
        }
    }

    pub fn levels(&self) -> Vec<f64> {
        self.k_list.iter().map(|&k| k as f64).collect()
    }
}
