//! Finite-alphabet distributions, information measures and distortion
//! bookkeeping.
//!
//! Every information quantity is in nats. Joint distributions are stored
//! densely in row-major order over the product alphabet (the first
//! coordinate varies slowest) and `0 log 0 = 0` throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries below this are treated as roundoff and clamped to zero.
pub const NEGATIVE_MASS_TOL: f64 = 1e-15;
/// Accepted deviation of the total mass from one on input.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// A joint pmf over one or more finite source coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSource {
    sizes: Vec<usize>,
    pmf: Vec<f64>,
}

/// Checks a raw pmf against the product alphabet `sizes` and wraps it.
///
/// Tiny negative entries (down to `-1e-15`) are clamped to zero; nothing is
/// ever renormalized.
pub fn validate_joint(pmf: &[f64], sizes: &[usize]) -> Result<JointSource> {
    if sizes.is_empty() {
        return Err(Error::ShapeMismatch("no source coordinates".into()));
    }
    if let Some(pos) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::ShapeMismatch(format!("coordinate {pos} has an empty alphabet")));
    }
    let total = sizes
        .iter()
        .try_fold(1usize, |acc, &s| acc.checked_mul(s))
        .ok_or_else(|| Error::ShapeMismatch("product alphabet overflows".into()))?;
    if pmf.len() != total {
        return Err(Error::ShapeMismatch(format!(
            "pmf has {} entries but the product alphabet has {}",
            pmf.len(),
            total
        )));
    }
    let mut clean = Vec::with_capacity(total);
    for (index, &value) in pmf.iter().enumerate() {
        if value.is_nan() || value < -NEGATIVE_MASS_TOL {
            return Err(Error::NegativeMass { index, value });
        }
        clean.push(value.max(0.0));
    }
    let sum: f64 = clean.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(JointSource { sizes: sizes.to_vec(), pmf: clean })
}

impl JointSource {
    pub fn new(pmf: Vec<f64>, sizes: Vec<usize>) -> Result<Self> {
        validate_joint(&pmf, &sizes)
    }

    /// Doubly symmetric binary source: uniform `X`, `Y = X xor Bern(p)`.
    pub fn dsbs(p: f64) -> Self {
        let a = (1.0 - p) / 2.0;
        let b = p / 2.0;
        JointSource { sizes: vec![2, 2], pmf: vec![a, b, b, a] }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    /// Number of cells in the product alphabet.
    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Splits a flat index into per-coordinate letters.
    pub fn tuple_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (slot, &size) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = index % size;
            index /= size;
        }
        out
    }

    pub fn index_of(&self, tuple: &[usize]) -> usize {
        tuple.iter().zip(&self.sizes).fold(0, |acc, (&t, &s)| acc * s + t)
    }

    /// For every cell, the flat index of its projection onto `coords`
    /// (row-major in the order given).
    pub fn projection(&self, coords: &[usize]) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                let t = self.tuple_of(i);
                coords.iter().fold(0, |acc, &c| acc * self.sizes[c] + t[c])
            })
            .collect()
    }

    /// Size of the sub-product alphabet spanned by `coords`.
    pub fn sub_size(&self, coords: &[usize]) -> usize {
        coords.iter().map(|&c| self.sizes[c]).product()
    }

    /// Marginal pmf of `coords`, row-major in the order given.
    pub fn marginal(&self, coords: &[usize]) -> Result<Vec<f64>> {
        self.check_coords(coords)?;
        check_distinct(&[coords])?;
        let mut out = vec![0.0; self.sub_size(coords)];
        for (p, j) in self.pmf.iter().zip(self.projection(coords)) {
            out[j] += p;
        }
        Ok(out)
    }

    /// Joint entropy of `coords`; the empty set has entropy zero.
    pub fn entropy(&self, coords: &[usize]) -> Result<f64> {
        Ok(entropy(&self.marginal(coords)?))
    }

    fn check_coords(&self, coords: &[usize]) -> Result<()> {
        match coords.iter().find(|&&c| c >= self.sizes.len()) {
            Some(&coord) => Err(Error::CoordOutOfRange { coord, dims: self.sizes.len() }),
            None => Ok(()),
        }
    }
}

pub(crate) fn check_distinct(sets: &[&[usize]]) -> Result<()> {
    let mut seen = Vec::new();
    for set in sets {
        for &c in *set {
            if seen.contains(&c) {
                return Err(Error::CoordOverlap(c));
            }
            seen.push(c);
        }
    }
    Ok(())
}

/// Shannon entropy in nats of a (sub-)probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `H(target | given)` in nats.
pub fn conditional_entropy(src: &JointSource, target: &[usize], given: &[usize]) -> Result<f64> {
    src.check_coords(target)?;
    src.check_coords(given)?;
    check_distinct(&[target, given])?;
    let union: Vec<usize> = target.iter().chain(given).copied().collect();
    let h = src.entropy(&union)? - src.entropy(given)?;
    Ok(h.max(0.0))
}

/// `I(A; B | C)` in nats, computed as `H(A|C) - H(A|BC)` and clamped at zero.
pub fn conditional_mutual_information(joint: &JointSource, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    joint.check_coords(a)?;
    joint.check_coords(b)?;
    joint.check_coords(c)?;
    check_distinct(&[a, b, c])?;
    let bc: Vec<usize> = b.iter().chain(c).copied().collect();
    let value = conditional_entropy(joint, a, c)? - conditional_entropy(joint, a, &bc)?;
    Ok(value.max(0.0))
}

pub fn mutual_information(joint: &JointSource, a: &[usize], b: &[usize]) -> Result<f64> {
    conditional_mutual_information(joint, a, b, &[])
}

/// Single-letter distortion matrix `source letter x reconstruction letter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionMeasure {
    source_size: usize,
    recon_size: usize,
    matrix: Vec<f64>,
    dmax: f64,
}

impl DistortionMeasure {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let source_size = rows.len();
        let recon_size = rows.first().map_or(0, Vec::len);
        if source_size == 0 || recon_size == 0 {
            return Err(Error::InvalidDistortion("empty matrix".into()));
        }
        if rows.iter().any(|r| r.len() != recon_size) {
            return Err(Error::InvalidDistortion("ragged matrix".into()));
        }
        Self::from_flat(source_size, recon_size, rows.concat())
    }

    pub fn from_flat(source_size: usize, recon_size: usize, matrix: Vec<f64>) -> Result<Self> {
        if source_size == 0 || recon_size == 0 || matrix.len() != source_size * recon_size {
            return Err(Error::InvalidDistortion(format!(
                "expected {source_size}x{recon_size} entries, got {}",
                matrix.len()
            )));
        }
        if let Some(bad) = matrix.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDistortion(format!("entry {bad} is not a finite nonnegative real")));
        }
        let dmax = matrix.iter().copied().fold(0.0, f64::max);
        Ok(DistortionMeasure { source_size, recon_size, matrix, dmax })
    }

    /// Hamming distortion on an alphabet of `n` letters.
    pub fn hamming(n: usize) -> Self {
        let matrix = (0..n * n).map(|i| if i / n == i % n { 0.0 } else { 1.0 }).collect();
        DistortionMeasure { source_size: n, recon_size: n, matrix, dmax: if n > 1 { 1.0 } else { 0.0 } }
    }

    #[inline]
    pub fn get(&self, source: usize, recon: usize) -> f64 {
        self.matrix[source * self.recon_size + recon]
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn recon_size(&self) -> usize {
        self.recon_size
    }

    pub fn dmax(&self) -> f64 {
        self.dmax
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.chunks(self.recon_size).map(<[f64]>::to_vec).collect()
    }

    /// Reconstruction minimizing `sum_x weights[x] * d(x, xhat)`; ties and
    /// all-zero weights resolve to the lowest index.
    pub fn best_reconstruction(&self, weights: &[f64]) -> usize {
        let mass: f64 = weights.iter().sum();
        let tol = 1e-12 * mass.max(f64::MIN_POSITIVE);
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for r in 0..self.recon_size {
            let cost: f64 = weights.iter().enumerate().map(|(s, w)| w * self.get(s, r)).sum();
            if cost < best_cost - tol {
                best = r;
                best_cost = cost;
            }
        }
        best
    }

    /// Smallest expected distortion reachable when the source letter is known.
    pub fn min_distortion(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(s, w)| w * (0..self.recon_size).map(|r| self.get(s, r)).fold(f64::INFINITY, f64::min))
            .sum()
    }
}

/// Per-target nonnegative distortion budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionBudget(Vec<f64>);

impl DistortionBudget {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::BudgetNegative(bad));
        }
        Ok(DistortionBudget(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Deterministic decoder map `(u, side letter) -> reconstruction letter`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecoderRule {
    u_size: usize,
    side_size: usize,
    table: Vec<usize>,
}

impl DecoderRule {
    pub fn new(u_size: usize, side_size: usize, table: Vec<usize>) -> Result<Self> {
        if table.len() != u_size * side_size {
            return Err(Error::ShapeMismatch(format!(
                "decoder table has {} entries, expected {}x{}",
                table.len(),
                u_size,
                side_size
            )));
        }
        Ok(DecoderRule { u_size, side_size, table })
    }

    pub fn constant(u_size: usize, side_size: usize, letter: usize) -> Self {
        DecoderRule { u_size, side_size, table: vec![letter; u_size * side_size] }
    }

    #[inline]
    pub fn get(&self, u: usize, side: usize) -> usize {
        self.table[u * self.side_size + side]
    }

    pub fn u_size(&self) -> usize {
        self.u_size
    }

    pub fn side_size(&self) -> usize {
        self.side_size
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub(crate) fn set(&mut self, u: usize, side: usize, letter: usize) {
        self.table[u * self.side_size + side] = letter;
    }
}

/// `E[d(S, rule(U, side))]` for a joint over `U`, the target `S` and the side
/// coordinates.
pub fn expected_distortion(
    joint: &JointSource,
    u: usize,
    target: usize,
    side: &[usize],
    rule: &DecoderRule,
    dm: &DistortionMeasure,
) -> Result<f64> {
    joint.check_coords(&[u, target])?;
    joint.check_coords(side)?;
    check_distinct(&[&[u], &[target], side])?;
    let sizes = joint.sizes();
    if rule.u_size() != sizes[u] || rule.side_size() != joint.sub_size(side) {
        return Err(Error::ShapeMismatch(format!(
            "decoder is {}x{}, joint needs {}x{}",
            rule.u_size(),
            rule.side_size(),
            sizes[u],
            joint.sub_size(side)
        )));
    }
    if dm.source_size() != sizes[target] {
        return Err(Error::ShapeMismatch(format!(
            "distortion measure covers {} source letters, target has {}",
            dm.source_size(),
            sizes[target]
        )));
    }
    if rule.table().iter().any(|&r| r >= dm.recon_size()) {
        return Err(Error::ShapeMismatch("decoder emits letters outside the reconstruction alphabet".into()));
    }
    let side_index = joint.projection(side);
    let mut total = 0.0;
    for (i, &p) in joint.pmf().iter().enumerate() {
        if p > 0.0 {
            let t = joint.tuple_of(i);
            total += p * dm.get(t[target], rule.get(t[u], side_index[i]));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_2x2() -> JointSource {
        JointSource::new(vec![0.25; 4], vec![2, 2]).unwrap()
    }

    fn copula(n: usize) -> JointSource {
        let mut pmf = vec![0.0; n * n];
        for i in 0..n {
            pmf[i * n + i] = 1.0 / n as f64;
        }
        JointSource::new(pmf, vec![n, n]).unwrap()
    }

    #[test]
    fn validate_accepts_uniform_and_dsbs() {
        let u = validate_joint(&[0.25; 4], &[2, 2]).unwrap();
        assert_eq!(u.sizes(), &[2, 2]);
        assert!(validate_joint(&[0.45, 0.05, 0.05, 0.45], &[2, 2]).is_ok());
    }

    #[test]
    fn validate_rejects_bad_input() {
        assert!(matches!(validate_joint(&[0.5, 0.6, 0.0, 0.0], &[2, 2]), Err(Error::NotNormalized { .. })));
        assert!(matches!(validate_joint(&[1.1, -0.1, 0.0, 0.0], &[2, 2]), Err(Error::NegativeMass { index: 1, .. })));
        assert!(matches!(validate_joint(&[0.5, 0.5], &[2, 2]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(validate_joint(&[1.0], &[0]), Err(Error::ShapeMismatch(_))));
        // roundoff-sized negatives are clamped, not rejected
        let s = validate_joint(&[0.5, 0.5, -1e-16, 0.0], &[2, 2]).unwrap();
        assert_eq!(s.pmf()[2], 0.0);
    }

    #[test]
    fn conditional_entropy_examples() {
        let h = conditional_entropy(&uniform_2x2(), &[0], &[1]).unwrap();
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(conditional_entropy(&copula(2), &[0], &[1]).unwrap(), 0.0);

        // direct-summation oracle: -sum p(x,y) ln p(x|y)
        let src = JointSource::dsbs(0.1);
        let p = src.pmf();
        let py = [p[0] + p[2], p[1] + p[3]];
        let oracle: f64 = (0..4).map(|i| -p[i] * (p[i] / py[i % 2]).ln()).sum();
        let h = conditional_entropy(&src, &[0], &[1]).unwrap();
        assert!((h - oracle).abs() < 1e-14);
        assert!((h - 0.325083).abs() < 1e-6);
    }

    #[test]
    fn overlapping_coordinates_are_rejected() {
        let s = uniform_2x2();
        assert_eq!(conditional_entropy(&s, &[0], &[0]), Err(Error::CoordOverlap(0)));
        assert!(matches!(conditional_mutual_information(&s, &[0], &[1], &[1]), Err(Error::CoordOverlap(1))));
        assert!(matches!(conditional_entropy(&s, &[2], &[]), Err(Error::CoordOutOfRange { .. })));
    }

    #[test]
    fn cmi_examples() {
        // B independent of (A, C)
        let ac = [0.3, 0.2, 0.1, 0.4];
        let b = [0.7, 0.3];
        let mut pmf = vec![0.0; 8];
        for a in 0..2 {
            for bb in 0..2 {
                for c in 0..2 {
                    pmf[a * 4 + bb * 2 + c] = ac[a * 2 + c] * b[bb];
                }
            }
        }
        let j = JointSource::new(pmf, vec![2, 2, 2]).unwrap();
        assert!(conditional_mutual_information(&j, &[0], &[1], &[2]).unwrap() < 1e-15);

        // B = A: I(A;A|C) = H(A|C)
        let mut pmf = vec![0.0; 8];
        for a in 0..2 {
            for c in 0..2 {
                pmf[a * 4 + a * 2 + c] = ac[a * 2 + c];
            }
        }
        let j = JointSource::new(pmf, vec![2, 2, 2]).unwrap();
        let i = conditional_mutual_information(&j, &[0], &[1], &[2]).unwrap();
        let h = conditional_entropy(&j, &[0], &[2]).unwrap();
        assert!((i - h).abs() < 1e-14);
    }

    #[test]
    fn cmi_matches_entropy_identity_on_random_joint() {
        let raw = [0.07, 0.13, 0.02, 0.18, 0.11, 0.09, 0.25, 0.15];
        let j = JointSource::new(raw.to_vec(), vec![2, 2, 2]).unwrap();
        let i = conditional_mutual_information(&j, &[0], &[1], &[2]).unwrap();
        let alt = conditional_entropy(&j, &[0], &[2]).unwrap() - conditional_entropy(&j, &[0], &[1, 2]).unwrap();
        assert!((i - alt).abs() < 1e-12);
    }

    fn uxy(src: &JointSource, u_of_xy: impl Fn(usize, usize) -> Vec<f64>, u_size: usize) -> JointSource {
        let mut pmf = vec![0.0; u_size * 4];
        for x in 0..2 {
            for y in 0..2 {
                let w = u_of_xy(x, y);
                for u in 0..u_size {
                    pmf[u * 4 + x * 2 + y] = w[u] * src.pmf()[x * 2 + y];
                }
            }
        }
        JointSource::new(pmf, vec![u_size, 2, 2]).unwrap()
    }

    #[test]
    fn expected_distortion_examples() {
        let ham = DistortionMeasure::hamming(2);
        // identity rule on the copula: U = X
        let j = uxy(&copula(2), |x, _| if x == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }, 2);
        let ident = DecoderRule::new(2, 2, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(expected_distortion(&j, 0, 1, &[2], &ident, &ham).unwrap(), 0.0);

        // constant rule on uniform binary
        let j = uxy(&uniform_2x2(), |_, _| vec![1.0], 1);
        let zero = DecoderRule::constant(1, 2, 0);
        assert!((expected_distortion(&j, 0, 1, &[2], &zero, &ham).unwrap() - 0.5).abs() < 1e-15);

        // phi(u, y) = y on DSBS(0.1)
        let j = uxy(&JointSource::dsbs(0.1), |_, _| vec![1.0], 1);
        let copy = DecoderRule::new(1, 2, vec![0, 1]).unwrap();
        assert!((expected_distortion(&j, 0, 1, &[2], &copy, &ham).unwrap() - 0.1).abs() < 1e-15);

        let bad = DecoderRule::constant(2, 2, 0);
        assert!(matches!(expected_distortion(&j, 0, 1, &[2], &bad, &ham), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn distortion_measure_validation() {
        assert!(DistortionMeasure::new(vec![vec![0.0, -1.0]]).is_err());
        assert!(DistortionMeasure::new(vec![vec![0.0, f64::INFINITY]]).is_err());
        assert!(DistortionMeasure::new(vec![vec![0.0, 1.0], vec![0.0]]).is_err());
        let d = DistortionMeasure::new(vec![vec![0.0, 2.5], vec![1.0, 0.0]]).unwrap();
        assert_eq!(d.dmax(), 2.5);
        assert!(DistortionBudget::new(vec![0.0, -0.1]).is_err());
    }

    #[test]
    fn best_reconstruction_prefers_lowest_index_on_ties() {
        let ham = DistortionMeasure::hamming(3);
        assert_eq!(ham.best_reconstruction(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(ham.best_reconstruction(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(ham.best_reconstruction(&[0.1, 0.2, 0.7]), 2);
    }

    fn joint_strategy(max: usize) -> impl Strategy<Value = JointSource> {
        (1..=max, 1..=max, 1..=max).prop_flat_map(|(a, b, c)| {
            proptest::collection::vec(0.0f64..1.0, a * b * c).prop_filter_map("zero mass", move |raw| {
                let s: f64 = raw.iter().sum();
                (s > 1e-6).then(|| JointSource::new(raw.iter().map(|v| v / s).collect(), vec![a, b, c]).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn chain_rule(j in joint_strategy(4)) {
            // I(AB;C) = I(B;C) + I(A;C|B)
            let lhs = mutual_information(&j, &[0, 1], &[2]).unwrap();
            let rhs = mutual_information(&j, &[1], &[2]).unwrap()
                + conditional_mutual_information(&j, &[0], &[2], &[1]).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn entropy_bounds(j in joint_strategy(4)) {
            let h = conditional_entropy(&j, &[0], &[1]).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (j.sizes()[0] as f64).ln() + 1e-12);
            prop_assert!(conditional_mutual_information(&j, &[0], &[1], &[2]).unwrap() >= 0.0);
        }

        #[test]
        fn relabeling_invariance(j in joint_strategy(3), shift in 0usize..3) {
            // cyclic relabeling of coordinate 0
            let s = j.sizes().to_vec();
            let mut pmf = vec![0.0; j.len()];
            for i in 0..j.len() {
                let mut t = j.tuple_of(i);
                t[0] = (t[0] + shift) % s[0];
                pmf[j.index_of(&t)] = j.pmf()[i];
            }
            let k = JointSource::new(pmf, s).unwrap();
            let a = conditional_entropy(&j, &[0], &[1, 2]).unwrap();
            let b = conditional_entropy(&k, &[0], &[1, 2]).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn distortion_is_linear_in_pmf(a in joint_strategy(3), lambda in 0.0f64..1.0, seed in 0usize..1000) {
            // second joint with the same shape: a cyclic shift of the first
            let n = a.len();
            let b_pmf: Vec<f64> = (0..n).map(|i| a.pmf()[(i + seed) % n]).collect();
            let b = JointSource::new(b_pmf.clone(), a.sizes().to_vec()).unwrap();
            let mix = JointSource::new(
                a.pmf().iter().zip(&b_pmf).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect(),
                a.sizes().to_vec(),
            ).unwrap();
            let s = a.sizes();
            let table = (0..s[0] * s[2]).map(|i| (i * 7 + seed) % s[1]).collect();
            let rule = DecoderRule::new(s[0], s[2], table).unwrap();
            let dm = DistortionMeasure::hamming(s[1]);
            let da = expected_distortion(&a, 0, 1, &[2], &rule, &dm).unwrap();
            let db = expected_distortion(&b, 0, 1, &[2], &rule, &dm).unwrap();
            let dmix = expected_distortion(&mix, 0, 1, &[2], &rule, &dm).unwrap();
            prop_assert!((dmix - (lambda * da + (1.0 - lambda) * db)).abs() < 1e-12);
        }
    }
}
