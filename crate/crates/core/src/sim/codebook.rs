use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::typical::counts_typical;
use crate::error::{Error, Result};
use crate::prob::DecoderRule;

/// Largest block length accepted by the simulator.
pub const MAX_BLOCK_LENGTH: usize = 20;
/// Largest codebook, in stored letters (`M_U * n`).
pub const MAX_CODEBOOK_LETTERS: u64 = 1 << 28;

/// Block length, rate margins and seed of one random codebook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookConfig {
    pub n: usize,
    pub gamma: f64,
    pub m1: f64,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
}

impl CodebookConfig {
    /// `gamma = 0.15`, `m1 = l1 = l2 = 1`.
    pub fn new(n: usize, seed: u64) -> Self {
        CodebookConfig { n, gamma: 0.15, m1: 1.0, l1: 1.0, l2: 1.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("block length must be positive".into()));
        }
        if self.n > MAX_BLOCK_LENGTH {
            return Err(Error::TooLarge(format!("block length {} exceeds {MAX_BLOCK_LENGTH}", self.n)));
        }
        if [self.gamma, self.m1, self.l1, self.l2].iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParams("rate margins must be positive".into()));
        }
        Ok(())
    }
}

/// Codebook size `M_U`, bin size `L_U` and number of bins `N_U`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookSizes {
    pub m_u: u64,
    pub l_u: u64,
    pub n_u: u64,
    /// True when the bin-size formula fell below one and was raised to 1.
    pub l_clamped: bool,
}

fn checked_exp(v: f64) -> Result<f64> {
    let e = v.exp();
    if !e.is_finite() || e > 1e18 {
        return Err(Error::TooLarge(format!("codebook size e^{v:.3} is out of range")));
    }
    Ok(e)
}

/// `L_U = floor(e^{n(min(I(X;U), I(Y;U)) - l gamma)})` with `l = max(l1, l2)`
/// (at least 1), `N_U = ceil(ceil(e^{n(I(XY;U) + m1 gamma)}) / L_U)` and
/// `M_U = N_U L_U`.
pub fn codebook_sizes(cfg: &CodebookConfig, i_xy_u: f64, i_x_u: f64, i_y_u: f64) -> Result<CodebookSizes> {
    cfg.validate()?;
    let n = cfg.n as f64;
    let l = cfg.l1.max(cfg.l2);
    let raw_l = checked_exp(n * (i_x_u.min(i_y_u) - l * cfg.gamma))?.floor();
    let l_clamped = raw_l < 1.0;
    let l_u = raw_l.max(1.0) as u64;
    let m_min = checked_exp(n * (i_xy_u + cfg.m1 * cfg.gamma))?.ceil() as u64;
    let n_u = m_min.div_ceil(l_u);
    let m_u = n_u.checked_mul(l_u).ok_or_else(|| Error::TooLarge("codebook size overflows".into()))?;
    Ok(CodebookSizes { m_u, l_u, n_u, l_clamped })
}

/// `M_U` codewords of length `n`, stored contiguously. Bin `j` (0-based)
/// holds codewords `j L_U .. (j+1) L_U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    u_size: usize,
    sizes: CodebookSizes,
    words: Vec<u8>,
}

impl Codebook {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u_size(&self) -> usize {
        self.u_size
    }

    pub fn sizes(&self) -> CodebookSizes {
        self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.m_u as usize
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.m_u == 0
    }

    pub fn word(&self, i: usize) -> &[u8] {
        &self.words[i * self.n..(i + 1) * self.n]
    }

    pub fn bin_of(&self, i: usize) -> usize {
        i / self.sizes.l_u as usize
    }

    pub fn bin_range(&self, bin: usize) -> std::ops::Range<usize> {
        let l = self.sizes.l_u as usize;
        bin * l..(bin + 1) * l
    }

    pub fn num_bins(&self) -> usize {
        self.sizes.n_u as usize
    }
}

/// Draws `M_U` i.i.d. codewords from `p_u`, sequentially from one seeded
/// stream, so a smaller codebook is a prefix of a larger one.
pub fn build_codebook(p_u: &[f64], n: usize, sizes: CodebookSizes, seed: u64) -> Result<Codebook> {
    if p_u.is_empty() || p_u.len() > 256 {
        return Err(Error::InvalidParams(format!("auxiliary alphabet of {} letters is unsupported", p_u.len())));
    }
    if n == 0 || n > MAX_BLOCK_LENGTH {
        return Err(Error::InvalidParams(format!("block length {n} is outside 1..={MAX_BLOCK_LENGTH}")));
    }
    if sizes.m_u == 0 || sizes.l_u == 0 || sizes.m_u != sizes.n_u * sizes.l_u {
        return Err(Error::InvalidParams("codebook size must be a positive multiple of the bin size".into()));
    }
    let letters = sizes.m_u.saturating_mul(n as u64);
    if letters > MAX_CODEBOOK_LETTERS {
        return Err(Error::TooLarge(format!("{letters} codebook letters exceed {MAX_CODEBOOK_LETTERS}")));
    }
    let mut cdf = Vec::with_capacity(p_u.len());
    let mut acc = 0.0;
    for &p in p_u {
        acc += p;
        cdf.push(acc);
    }
    let last = p_u.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let words = (0..letters)
        .map(|_| {
            let v: f64 = rng.random::<f64>() * acc;
            cdf.iter().position(|&c| v < c).unwrap_or(last).min(last) as u8
        })
        .collect();
    Ok(Codebook { n, u_size: p_u.len(), sizes, words })
}

/// Result of the encoder's search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    pub bin: usize,
    /// Index of the chosen codeword, `None` on encoder failure (the bin of
    /// codeword 0 is then sent).
    pub index: Option<usize>,
}

/// Result of a decoder's bin search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    /// Chosen codeword; the first in the bin when no unique match exists.
    pub index: usize,
    /// Number of typical codewords found in the bin.
    pub matches: usize,
}

impl Decoded {
    pub fn is_unique(&self) -> bool {
        self.matches == 1
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Scans the codebook in index order for the first codeword jointly typical
/// with `(x, y)` at tolerance `tol` under `p_uxy` (laid out `[u][x][y]`).
pub fn encode(
    x: &[usize],
    y: &[usize],
    codebook: &Codebook,
    p_uxy: &[f64],
    sizes: (usize, usize),
    tol: f64,
) -> Result<Encoded> {
    let n = codebook.n();
    check_len(n, x.len())?;
    check_len(n, y.len())?;
    let (nx, ny) = sizes;
    let block = nx * ny;
    if p_uxy.len() != codebook.u_size() * block {
        return Err(Error::ShapeMismatch(format!("joint reference has {} entries", p_uxy.len())));
    }
    let xy: Vec<usize> = x.iter().zip(y).map(|(&a, &b)| a * ny + b).collect();
    let mut counts = vec![0usize; p_uxy.len()];
    for i in 0..codebook.len() {
        counts.iter_mut().for_each(|c| *c = 0);
        for (k, &u) in codebook.word(i).iter().enumerate() {
            counts[u as usize * block + xy[k]] += 1;
        }
        if counts_typical(&counts, n, p_uxy, tol) {
            return Ok(Encoded { bin: codebook.bin_of(i), index: Some(i) });
        }
    }
    Ok(Encoded { bin: codebook.bin_of(0), index: None })
}

/// Searches bin `bin` for codewords jointly typical with the side sequence
/// at tolerance `tol` under `p_u_side` (laid out `[u][side]`).
pub fn decode(
    bin: usize,
    side: &[usize],
    side_size: usize,
    codebook: &Codebook,
    p_u_side: &[f64],
    tol: f64,
) -> Result<Decoded> {
    let n = codebook.n();
    check_len(n, side.len())?;
    if bin >= codebook.num_bins() {
        return Err(Error::InvalidParams(format!("bin {bin} out of range (have {})", codebook.num_bins())));
    }
    if p_u_side.len() != codebook.u_size() * side_size {
        return Err(Error::ShapeMismatch(format!("side reference has {} entries", p_u_side.len())));
    }
    let range = codebook.bin_range(bin);
    let first = range.start;
    let mut counts = vec![0usize; p_u_side.len()];
    let mut found = None;
    let mut matches = 0;
    for i in range {
        counts.iter_mut().for_each(|c| *c = 0);
        for (k, &u) in codebook.word(i).iter().enumerate() {
            counts[u as usize * side_size + side[k]] += 1;
        }
        if counts_typical(&counts, n, p_u_side, tol) {
            matches += 1;
            found.get_or_insert(i);
        }
    }
    let index = if matches == 1 { found.unwrap_or(first) } else { first };
    Ok(Decoded { index, matches })
}

/// Letterwise `rule(u_k, side_k)`.
pub fn reconstruct(u: &[u8], side: &[usize], rule: &DecoderRule) -> Result<Vec<usize>> {
    check_len(u.len(), side.len())?;
    u.iter()
        .zip(side)
        .map(|(&a, &s)| {
            if a as usize >= rule.u_size() || s >= rule.side_size() {
                Err(Error::ShapeMismatch(format!("pair ({a}, {s}) outside the decoder's domain")))
            } else {
                Ok(rule.get(a as usize, s))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(m_u: u64, l_u: u64) -> CodebookSizes {
        CodebookSizes { m_u, l_u, n_u: m_u / l_u, l_clamped: false }
    }

    #[test]
    fn configured_size_example() {
        // n = 12, I(XY;U) = 0.5, gamma = 0.15, m1 = 1: ceil(e^7.8) = 2441.
        let cfg = CodebookConfig::new(12, 0);
        let s = codebook_sizes(&cfg, 0.5, 0.0, 0.0).unwrap();
        assert_eq!(s.m_u, 2441);
        assert_eq!(s.l_u, 1);
        assert!(s.l_clamped);
        let s = codebook_sizes(&cfg, 0.5, 0.4, 0.3).unwrap();
        assert_eq!(s.l_u, (12.0f64 * 0.15).exp().floor() as u64);
        assert_eq!(s.m_u, s.n_u * s.l_u);
        assert!(s.m_u >= 2441);
    }

    #[test]
    fn point_mass_codebook_repeats_one_letter() {
        let cb = build_codebook(&[0.0, 1.0, 0.0], 6, sizes(10, 2), 3).unwrap();
        for i in 0..cb.len() {
            assert!(cb.word(i).iter().all(|&u| u == 1));
        }
    }

    #[test]
    fn codebook_is_seeded() {
        let a = build_codebook(&[0.3, 0.7], 8, sizes(50, 5), 11).unwrap();
        let b = build_codebook(&[0.3, 0.7], 8, sizes(50, 5), 11).unwrap();
        let c = build_codebook(&[0.3, 0.7], 8, sizes(50, 5), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let small = build_codebook(&[0.3, 0.7], 8, sizes(20, 5), 11).unwrap();
        assert_eq!(small.word(19), a.word(19));
    }

    #[test]
    fn bins_partition_indices() {
        let cb = build_codebook(&[0.5, 0.5], 4, sizes(12, 3), 0).unwrap();
        let mut seen = [0; 12];
        for j in 0..cb.num_bins() {
            for i in cb.bin_range(j) {
                seen[i] += 1;
                assert_eq!(cb.bin_of(i), j);
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn too_large_codebook_is_rejected() {
        let big = CodebookSizes { m_u: 1 << 25, l_u: 1, n_u: 1 << 25, l_clamped: false };
        assert!(matches!(build_codebook(&[0.5, 0.5], 16, big, 0), Err(Error::TooLarge(_))));
    }

    #[test]
    fn encoder_finds_exact_type() {
        // U = X on a uniform binary source with Y constant.
        let x = [0usize, 1, 0, 1];
        let y = [0usize; 4];
        let cb = build_codebook(&[0.5, 0.5], 4, sizes(64, 1), 5).unwrap();
        let p_uxy = [0.5, 0.0, 0.0, 0.5];
        let e = encode(&x, &y, &cb, &p_uxy, (2, 1), 1e-9).unwrap();
        let i = e.index.expect("a matching codeword exists among 64 draws");
        assert!(cb.word(i).iter().zip(&x).all(|(&u, &a)| u as usize == a));
        assert_eq!(e.bin, i);
    }

    #[test]
    fn encoder_failure_sends_first_bin() {
        let x = [0usize, 1, 1, 1, 0];
        let y = [0usize; 5];
        let cb = build_codebook(&[0.5, 0.5], 5, sizes(8, 2), 1).unwrap();
        let p_uxy = [0.3, 0.2, 0.2, 0.3];
        let e = encode(&x, &y, &cb, &p_uxy, (2, 1), 0.0).unwrap();
        assert_eq!(e, Encoded { bin: 0, index: None });
    }

    #[test]
    fn singleton_bin_decodes() {
        let cb = build_codebook(&[0.5, 0.5], 4, sizes(4, 1), 2).unwrap();
        let side: Vec<usize> = cb.word(2).iter().map(|&u| u as usize).collect();
        let count1 = side.iter().filter(|&&s| s == 1).count() as f64 / 4.0;
        let p_us = [1.0 - count1, 0.0, 0.0, count1];
        let d = decode(2, &side, 2, &cb, &p_us, 1e-9).unwrap();
        assert!(d.is_unique());
        assert_eq!(d.index, 2);
    }

    #[test]
    fn reconstruct_side_copy() {
        let rule = DecoderRule::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(reconstruct(&[0, 1, 1, 0], &[1, 0, 1, 1], &rule).unwrap(), vec![1, 0, 1, 1]);
        assert!(matches!(reconstruct(&[0], &[1, 0], &rule), Err(Error::LengthMismatch { .. })));
    }
}
