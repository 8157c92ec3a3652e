use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ModelSpace, TruncatedOperator};
use crate::error::{check_len, Error, Result};

const CONTAINER_VERSION: u32 = 1;

/// Versioned on-disk form of a truncated operator: dimensions plus the
/// row-major matrix as interleaved (re, im) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorContainer {
    pub version: u32,
    pub d: usize,
    pub k: f64,
    pub n_max: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl OperatorContainer {
    pub fn from_operator(op: &TruncatedOperator) -> Self {
        let s = op.space();
        let m = op.matrix();
        let mut data = Vec::with_capacity(2 * m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)].re);
                data.push(m[(i, j)].im);
            }
        }
        OperatorContainer {
            version: CONTAINER_VERSION,
            d: s.d(),
            k: s.k(),
            n_max: s.n_max(),
            dim: s.dim(),
            data,
        }
    }

    /// Rebuilds the operator on a space with matching parameters.
    pub fn into_operator(self, space: Arc<ModelSpace>) -> Result<TruncatedOperator> {
        if self.version != CONTAINER_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported operator container version {}",
                self.version
            )));
        }
        check_len(space.d(), self.d)?;
        check_len(space.n_max(), self.n_max)?;
        check_len(space.dim(), self.dim)?;
        if self.k != space.k() {
            return Err(Error::InvalidInput(format!(
                "container level {} does not match space level {}",
                self.k,
                space.k()
            )));
        }
        check_len(2 * self.dim * self.dim, self.data.len())?;
        let n = self.dim;
        let m = DMatrix::from_fn(n, n, |i, j| {
            let p = 2 * (i * n + j);
            Complex64::new(self.data[p], self.data[p + 1])
        });
        TruncatedOperator::new(space, m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
