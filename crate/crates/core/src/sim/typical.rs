use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack added to every typicality comparison so that exact boundary cases
/// survive rounding.
pub const TYPICALITY_EPS: f64 = 1e-12;

/// Base tolerance and multipliers of the typical sets.
///
/// `k0 * delta` tests the source pair, `k1 * delta` the encoder's triple,
/// `k2 * delta` and `k3 * delta` the decoders' pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub delta: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl TypicalityParams {
    /// `delta = 0.04`, `k0 = 1`, `k1 = 2`, `k2 = 2 k1 |X|`, `k3 = 2 k1 |Y|`.
    pub fn defaults_for(x_size: usize, y_size: usize) -> Self {
        let k1 = 2.0;
        TypicalityParams { delta: 0.04, k0: 1.0, k1, k2: 2.0 * k1 * x_size as f64, k3: 2.0 * k1 * y_size as f64 }
    }

    /// Requires `k0 < k1`, `k1 |X| < k2` and `k1 |Y| < k3`, so that a
    /// successful encoding always passes both decoders' typicality tests.
    pub fn validate(&self, x_size: usize, y_size: usize) -> Result<()> {
        let all = [self.delta, self.k0, self.k1, self.k2, self.k3];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParams("typicality tolerance and multipliers must be positive".into()));
        }
        if self.k0 >= self.k1 {
            return Err(Error::InvalidParams(format!("need k0 < k1, got k0 = {}, k1 = {}", self.k0, self.k1)));
        }
        if self.k1 * x_size as f64 >= self.k2 || self.k1 * y_size as f64 >= self.k3 {
            return Err(Error::InvalidParams(format!(
                "need k1|X| < k2 and k1|Y| < k3, got k1 = {}, k2 = {}, k3 = {}",
                self.k1, self.k2, self.k3
            )));
        }
        Ok(())
    }
}

/// True iff the empirical frequency of every product letter of the
/// sequence tuple lies within `tol` of `reference`.
///
/// `seqs` holds one sequence per coordinate; product letters are numbered
/// row-major over `sizes`, matching `reference`.
pub fn is_typical(seqs: &[&[usize]], sizes: &[usize], reference: &[f64], tol: f64) -> Result<bool> {
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidParams(format!("typicality tolerance must be nonnegative, got {tol}")));
    }
    if seqs.len() != sizes.len() {
        return Err(Error::ShapeMismatch(format!("{} sequences for {} coordinates", seqs.len(), sizes.len())));
    }
    let total: usize = sizes.iter().product();
    if reference.len() != total {
        return Err(Error::ShapeMismatch(format!("reference has {} entries, expected {total}", reference.len())));
    }
    let n = seqs.first().map_or(0, |s| s.len());
    if let Some(bad) = seqs.iter().find(|s| s.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: bad.len() });
    }
    if n == 0 {
        return Err(Error::LengthMismatch { expected: 1, got: 0 });
    }
    let mut counts = vec![0usize; total];
    for k in 0..n {
        let mut idx = 0;
        for (seq, &size) in seqs.iter().zip(sizes) {
            if seq[k] >= size {
                return Err(Error::ShapeMismatch(format!("letter {} outside an alphabet of {size}", seq[k])));
            }
            idx = idx * size + seq[k];
        }
        counts[idx] += 1;
    }
    Ok(counts_typical(&counts, n, reference, tol))
}

#[inline]
pub(crate) fn counts_typical(counts: &[usize], n: usize, reference: &[f64], tol: f64) -> bool {
    let inv = 1.0 / n as f64;
    counts.iter().zip(reference).all(|(&c, &p)| (c as f64 * inv - p).abs() <= tol + TYPICALITY_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_sequence_at_half_tolerance() {
        let s = [0usize; 10];
        assert!(is_typical(&[&s], &[2], &[0.5, 0.5], 0.5).unwrap());
    }

    #[test]
    fn exact_type_is_typical() {
        let s = [0usize, 1, 1, 0, 2, 1, 1, 1];
        let p = [0.25, 0.625, 0.125];
        assert!(is_typical(&[&s], &[3], &p, 1e-9).unwrap());
    }

    #[test]
    fn six_ones_out_of_eight_is_not_typical() {
        let s = [1usize, 1, 0, 1, 1, 0, 1, 1];
        assert!(!is_typical(&[&s], &[2], &[0.5, 0.5], 0.1).unwrap());
    }

    #[test]
    fn joint_letters_are_counted() {
        let x = [0usize, 0, 1, 1];
        let y = [0usize, 1, 0, 1];
        assert!(is_typical(&[&x, &y], &[2, 2], &[0.25; 4], 1e-9).unwrap());
        assert!(!is_typical(&[&x, &x], &[2, 2], &[0.25; 4], 0.2).unwrap());
    }

    #[test]
    fn length_mismatch_is_reported() {
        let a = [0usize; 4];
        let b = [0usize; 5];
        assert!(matches!(is_typical(&[&a, &b], &[2, 2], &[0.25; 4], 0.1), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn default_params_are_valid() {
        let p = TypicalityParams::defaults_for(2, 3);
        assert_eq!(p.k2, 8.0);
        assert_eq!(p.k3, 12.0);
        p.validate(2, 3).unwrap();
        let bad = TypicalityParams { k0: 3.0, ..p };
        assert!(bad.validate(2, 3).is_err());
    }
}
