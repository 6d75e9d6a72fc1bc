use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row tolerance for a conditional pmf.
pub const ROW_TOL: f64 = 1e-12;

/// Conditional pmf of the auxiliary letter `U` given a source tuple.
///
/// Rows are indexed by flat source tuples (the same order as
/// [`JointSource`](crate::JointSource)), columns by `U` letters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryChannel {
    u_size: usize,
    rows: usize,
    w: Vec<f64>,
}

impl AuxiliaryChannel {
    pub fn new(u_size: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != u_size) {
            return Err(Error::ShapeMismatch(format!("every channel row must have {u_size} entries")));
        }
        let n = rows.len();
        Self::from_flat(u_size, n, rows.concat())
    }

    pub fn from_flat(u_size: usize, rows: usize, w: Vec<f64>) -> Result<Self> {
        if u_size == 0 || rows == 0 || w.len() != u_size * rows {
            return Err(Error::ShapeMismatch(format!(
                "channel of {rows} rows over {u_size} letters needs {} entries, got {}",
                rows * u_size,
                w.len()
            )));
        }
        for (r, row) in w.chunks(u_size).enumerate() {
            if let Some(&value) = row.iter().find(|v| v.is_nan() || **v < 0.0) {
                return Err(Error::NegativeMass { index: r * u_size, value });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL * (u_size as f64).max(1.0) {
                return Err(Error::NotNormalized { sum });
            }
        }
        Ok(AuxiliaryChannel { u_size, rows, w })
    }

    /// `U` equal to the source tuple, folded modulo `u_size` when the
    /// alphabet is too small to hold every tuple.
    pub fn one_hot(rows: usize, u_size: usize) -> Self {
        let mut w = vec![0.0; rows * u_size];
        for r in 0..rows {
            w[r * u_size + r % u_size] = 1.0;
        }
        AuxiliaryChannel { u_size, rows, w }
    }

    /// `U` deterministic at letter 0.
    pub fn constant(rows: usize, u_size: usize) -> Self {
        let mut w = vec![0.0; rows * u_size];
        for r in 0..rows {
            w[r * u_size] = 1.0;
        }
        AuxiliaryChannel { u_size, rows, w }
    }

    pub fn u_size(&self) -> usize {
        self.u_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, row: usize, u: usize) -> f64 {
        self.w[row * self.u_size + u]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.w[row * self.u_size..(row + 1) * self.u_size]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.w
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks(self.u_size).map(<[f64]>::to_vec).collect()
    }

    /// Joint pmf `P(u, row)` laid out with `U` as the slowest coordinate.
    pub fn joint_with(&self, row_prob: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.u_size * self.rows];
        for r in 0..self.rows {
            for u in 0..self.u_size {
                out[u * self.rows + r] = row_prob[r] * self.get(r, u);
            }
        }
        out
    }

    /// Marginal of `U` under the source pmf `row_prob`.
    pub fn u_marginal(&self, row_prob: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.u_size];
        for (r, p) in row_prob.iter().enumerate() {
            for (u, o) in out.iter_mut().enumerate() {
                *o += p * self.get(r, u);
            }
        }
        out
    }

    pub(crate) fn from_raw(u_size: usize, rows: usize, w: Vec<f64>) -> Self {
        debug_assert_eq!(w.len(), u_size * rows);
        AuxiliaryChannel { u_size, rows, w }
    }
}
