#![allow(dead_code)]

use std::io::Write;

use comdel::{CdProblem, JointSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Full-support pmf on `k` letters, every entry at least `floor`.
pub fn random_pmf<const K: usize>(rng: &mut ChaCha8Rng, floor: f64) -> Vec<f64> {
    let d = Dirichlet::new([1.5f64; K]).unwrap();
    let raw: [f64; K] = d.sample(rng);
    let scale = 1.0 - floor * K as f64;
    let mut p: Vec<f64> = raw.iter().map(|v| floor + scale * v).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn random_binary_pair(rng: &mut ChaCha8Rng) -> JointSource {
    JointSource::new(random_pmf::<4>(rng, 0.025), vec![2, 2]).unwrap()
}

/// Hamming problem whose budgets sit at fractions `(a, b)` of the way from
/// the smallest reachable distortion to the side-information-only one.
pub fn at_fractions(source: JointSource, a: f64, b: f64) -> CdProblem {
    let base = CdProblem::hamming(source, 0.0, 0.0).unwrap();
    let (lo, hi) = (base.min_distortions(), base.side_only_distortions());
    base.with_budgets(lo.0 + a * (hi.0 - lo.0), lo.1 + b * (hi.1 - lo.1)).unwrap()
}

pub fn random_problem(rng: &mut ChaCha8Rng) -> CdProblem {
    let src = random_binary_pair(rng);
    let a = rng.random_range(0.1..0.9);
    let b = rng.random_range(0.1..0.9);
    at_fractions(src, a, b)
}

/// `-sum p ln p` by direct summation.
pub fn plain_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// `(H(X|Y), H(Y|X))` of a row-major `nx` by `ny` pmf, from joint and
/// marginal entropies.
pub fn plain_conditional_entropies(pmf: &[f64], nx: usize, ny: usize) -> (f64, f64) {
    let px: Vec<f64> = (0..nx).map(|x| (0..ny).map(|y| pmf[x * ny + y]).sum()).collect();
    let py: Vec<f64> = (0..ny).map(|y| (0..nx).map(|x| pmf[x * ny + y]).sum()).collect();
    let h = plain_entropy(pmf);
    (h - plain_entropy(&py), h - plain_entropy(&px))
}

pub fn binary_entropy(p: f64) -> f64 {
    plain_entropy(&[p, 1.0 - p])
}

/// Writes straight to stderr so the line shows up even when the harness
/// captures test output.
pub fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[acceptance] criterion {criterion} ({name}): {verdict} | {detail}");
}
