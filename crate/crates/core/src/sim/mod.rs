//! Random-binning joint-typicality simulator for complementary delivery.
//!
//! One codebook is drawn per block length; each trial draws a fresh source
//! block, encodes it to a bin index and runs both side-information decoders.

mod codebook;
mod typical;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use codebook::{
    build_codebook, codebook_sizes, decode, encode, reconstruct, Codebook, CodebookConfig, CodebookSizes, Decoded,
    Encoded, MAX_BLOCK_LENGTH, MAX_CODEBOOK_LETTERS,
};
pub use typical::{is_typical, TypicalityParams, TYPICALITY_EPS};

use crate::channel::AuxiliaryChannel;
use crate::error::{Error, Result};
use crate::prob::{mutual_information, DecoderRule, DistortionMeasure, JointSource};
use typical::counts_typical;

/// Block-length sweep plus margins shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub block_lengths: Vec<usize>,
    pub trials: usize,
    pub gamma: f64,
    pub m1: f64,
    pub l1: f64,
    pub l2: f64,
    pub seed: u64,
    /// Defaults to [`TypicalityParams::defaults_for`] when absent.
    pub typicality: Option<TypicalityParams>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            block_lengths: vec![8, 12, 16],
            trials: 2000,
            gamma: 0.15,
            m1: 1.0,
            l1: 1.0,
            l2: 1.0,
            seed: 0,
            typicality: None,
        }
    }
}

impl SimConfig {
    pub fn codebook_config(&self, n: usize) -> CodebookConfig {
        CodebookConfig { n, gamma: self.gamma, m1: self.m1, l1: self.l1, l2: self.l2, seed: self.seed }
    }
}

/// Single-letter information terms of the simulated channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelInformation {
    pub i_xy_u: f64,
    pub i_x_u: f64,
    pub i_y_u: f64,
    /// `max{I(X;U|Y), I(Y;U|X)}`.
    pub objective: f64,
}

/// Empirical results for one block length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub n: usize,
    pub seed: u64,
    pub m_u: u64,
    pub l_u: u64,
    pub n_u: u64,
    pub l_clamped: bool,
    /// `ln(N_U) / n`.
    pub rate_nats: f64,
    pub trials: usize,
    /// Source block outside the `k0 delta` typical set.
    pub p_e0c: f64,
    pub p_enc_fail: f64,
    /// Decoder 1 found zero or several typical codewords in the bin.
    pub p_dec1_fail: f64,
    pub p_dec2_fail: f64,
    /// A decoder returned a unique codeword other than the encoded one.
    pub p_mismatch: f64,
    /// Any declared failure or mismatch.
    pub p_error: f64,
    /// Mean blockwise distortion over all trials.
    pub dist_x: f64,
    pub dist_y: f64,
    pub success_trials: usize,
    pub success_dist_x: Option<f64>,
    pub success_dist_y: Option<f64>,
    pub max_success_dist_x: Option<f64>,
    pub max_success_dist_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub typicality: TypicalityParams,
    pub information: ChannelInformation,
    pub records: Vec<SimulationRecord>,
}

/// One row of the flat tabular export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub n: usize,
    #[serde(rename = "M_U")]
    pub m_u: u64,
    #[serde(rename = "L_U")]
    pub l_u: u64,
    #[serde(rename = "N_U")]
    pub n_u: u64,
    pub rate_nats: f64,
    #[serde(rename = "p_E0c")]
    pub p_e0c: f64,
    pub p_enc_fail: f64,
    pub p_dec1_fail: f64,
    pub p_dec2_fail: f64,
    pub dist_x: f64,
    pub dist_y: f64,
    pub trials: usize,
}

impl SimulationReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.records
            .iter()
            .map(|r| CsvRow {
                n: r.n,
                m_u: r.m_u,
                l_u: r.l_u,
                n_u: r.n_u,
                rate_nats: r.rate_nats,
                p_e0c: r.p_e0c,
                p_enc_fail: r.p_enc_fail,
                p_dec1_fail: r.p_dec1_fail,
                p_dec2_fail: r.p_dec2_fail,
                dist_x: r.dist_x,
                dist_y: r.dist_y,
                trials: r.trials,
            })
            .collect()
    }
}

/// Everything a trial needs, derived once per run.
struct Setup<'a> {
    nx: usize,
    ny: usize,
    row_cdf: Vec<f64>,
    p_xy: &'a [f64],
    p_uxy: Vec<f64>,
    p_uy: Vec<f64>,
    p_ux: Vec<f64>,
    rules: (&'a DecoderRule, &'a DecoderRule),
    dms: (&'a DistortionMeasure, &'a DistortionMeasure),
    params: TypicalityParams,
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialOutcome {
    e0c: bool,
    enc_fail: bool,
    dec1_fail: bool,
    dec2_fail: bool,
    mismatch: bool,
    dist_x: f64,
    dist_y: f64,
}

impl TrialOutcome {
    fn success(&self) -> bool {
        !(self.enc_fail || self.dec1_fail || self.dec2_fail || self.mismatch)
    }
}

fn check_inputs(
    source: &JointSource,
    ch: &AuxiliaryChannel,
    decoders: (&DecoderRule, &DecoderRule),
    dms: (&DistortionMeasure, &DistortionMeasure),
) -> Result<()> {
    if source.dims() != 2 {
        return Err(Error::ShapeMismatch(format!("expected a two-coordinate source, got {}", source.dims())));
    }
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    if ch.rows() != nx * ny {
        return Err(Error::ShapeMismatch(format!("channel has {} rows, source has {}", ch.rows(), nx * ny)));
    }
    let us = ch.u_size();
    for (rule, side, dm, target) in [(decoders.0, ny, dms.0, nx), (decoders.1, nx, dms.1, ny)] {
        if rule.u_size() != us || rule.side_size() != side {
            return Err(Error::ShapeMismatch(format!(
                "decoder is {}x{}, expected {}x{}",
                rule.u_size(),
                rule.side_size(),
                us,
                side
            )));
        }
        if dm.source_size() != target || rule.table().iter().any(|&r| r >= dm.recon_size()) {
            return Err(Error::ShapeMismatch("decoder and distortion measure disagree".into()));
        }
    }
    Ok(())
}

/// `I(XY;U)`, `I(X;U)`, `I(Y;U)` and the rate objective of `ch`.
pub fn channel_information(source: &JointSource, ch: &AuxiliaryChannel) -> Result<ChannelInformation> {
    if source.dims() != 2 || ch.rows() != source.len() {
        return Err(Error::ShapeMismatch("channel does not match a two-coordinate source".into()));
    }
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    let joint = JointSource::new(ch.joint_with(source.pmf()), vec![ch.u_size(), nx, ny])?;
    let i_xy_u = mutual_information(&joint, &[1, 2], &[0])?;
    let i_x_u = mutual_information(&joint, &[1], &[0])?;
    let i_y_u = mutual_information(&joint, &[2], &[0])?;
    let objective = (i_xy_u - i_y_u).max(i_xy_u - i_x_u).max(0.0);
    Ok(ChannelInformation { i_xy_u, i_x_u, i_y_u, objective })
}

fn sample_rows(rng: &mut ChaCha8Rng, cdf: &[f64], n: usize, out: &mut Vec<usize>) {
    let total = *cdf.last().unwrap_or(&1.0);
    let last = cdf.len() - 1;
    out.clear();
    for _ in 0..n {
        let v: f64 = rng.random::<f64>() * total;
        out.push(cdf.iter().position(|&c| v < c).unwrap_or(last));
    }
}

fn blockwise(dm: &DistortionMeasure, source: &[usize], recon: &[usize]) -> f64 {
    source.iter().zip(recon).map(|(&s, &r)| dm.get(s, r)).sum::<f64>() / source.len() as f64
}

fn run_trial(setup: &Setup, cb: &Codebook, seed: u64, t: usize) -> Result<TrialOutcome> {
    let n = cb.n();
    let (nx, ny) = (setup.nx, setup.ny);
    let p = &setup.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    let mut rows = Vec::with_capacity(n);
    sample_rows(&mut rng, &setup.row_cdf, n, &mut rows);
    let x: Vec<usize> = rows.iter().map(|r| r / ny).collect();
    let y: Vec<usize> = rows.iter().map(|r| r % ny).collect();

    let mut counts = vec![0usize; nx * ny];
    rows.iter().for_each(|&r| counts[r] += 1);
    let e0c = !counts_typical(&counts, n, setup.p_xy, p.k0 * p.delta);

    let enc = encode(&x, &y, cb, &setup.p_uxy, (nx, ny), p.k1 * p.delta)?;
    let d1 = decode(enc.bin, &y, ny, cb, &setup.p_uy, p.k2 * p.delta)?;
    let d2 = decode(enc.bin, &x, nx, cb, &setup.p_ux, p.k3 * p.delta)?;
    let mismatch = match enc.index {
        Some(i) => (d1.is_unique() && d1.index != i) || (d2.is_unique() && d2.index != i),
        None => false,
    };
    let x_hat = reconstruct(cb.word(d1.index), &y, setup.rules.0)?;
    let y_hat = reconstruct(cb.word(d2.index), &x, setup.rules.1)?;
    Ok(TrialOutcome {
        e0c,
        enc_fail: enc.index.is_none(),
        dec1_fail: !d1.is_unique(),
        dec2_fail: !d2.is_unique(),
        mismatch,
        dist_x: blockwise(setup.dms.0, &x, &x_hat),
        dist_y: blockwise(setup.dms.1, &y, &y_hat),
    })
}

/// Runs `trials` independent blocks against one codebook of length `cfg.n`.
///
/// Trial `t` draws its source block from stream `t + 1` of the seeded
/// generator (stream 0 builds the codebook), so results do not depend on
/// how trials are scheduled.
pub fn run_trials(
    source: &JointSource,
    ch: &AuxiliaryChannel,
    decoders: (&DecoderRule, &DecoderRule),
    dms: (&DistortionMeasure, &DistortionMeasure),
    cfg: &CodebookConfig,
    params: &TypicalityParams,
    trials: usize,
) -> Result<SimulationRecord> {
    if trials == 0 {
        return Err(Error::InvalidParams("at least one trial is required".into()));
    }
    check_inputs(source, ch, decoders, dms)?;
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    params.validate(nx, ny)?;
    let info = channel_information(source, ch)?;
    let sizes = codebook_sizes(cfg, info.i_xy_u, info.i_x_u, info.i_y_u)?;
    let p_uxy = ch.joint_with(source.pmf());
    let us = ch.u_size();
    let mut p_uy = vec![0.0; us * ny];
    let mut p_ux = vec![0.0; us * nx];
    for u in 0..us {
        for x in 0..nx {
            for y in 0..ny {
                let v = p_uxy[(u * nx + x) * ny + y];
                p_uy[u * ny + y] += v;
                p_ux[u * nx + x] += v;
            }
        }
    }
    let p_u = ch.u_marginal(source.pmf());
    let cb = build_codebook(&p_u, cfg.n, sizes, cfg.seed)?;

    let mut acc = 0.0;
    let row_cdf = source
        .pmf()
        .iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect();
    let setup = Setup { nx, ny, row_cdf, p_xy: source.pmf(), p_uxy, p_uy, p_ux, rules: decoders, dms, params: *params };

    let outcomes: Vec<TrialOutcome> =
        (0..trials).into_par_iter().map(|t| run_trial(&setup, &cb, cfg.seed, t)).collect::<Result<_>>()?;

    let frac = |f: fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as f64 / trials as f64;
    let success: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.success()).collect();
    let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
    let sx: Vec<f64> = success.iter().map(|o| o.dist_x).collect();
    let sy: Vec<f64> = success.iter().map(|o| o.dist_y).collect();
    Ok(SimulationRecord {
        n: cfg.n,
        seed: cfg.seed,
        m_u: sizes.m_u,
        l_u: sizes.l_u,
        n_u: sizes.n_u,
        l_clamped: sizes.l_clamped,
        rate_nats: (sizes.n_u as f64).ln() / cfg.n as f64,
        trials,
        p_e0c: frac(|o| o.e0c),
        p_enc_fail: frac(|o| o.enc_fail),
        p_dec1_fail: frac(|o| o.dec1_fail),
        p_dec2_fail: frac(|o| o.dec2_fail),
        p_mismatch: frac(|o| o.mismatch),
        p_error: frac(|o| !o.success()),
        dist_x: outcomes.iter().map(|o| o.dist_x).sum::<f64>() / trials as f64,
        dist_y: outcomes.iter().map(|o| o.dist_y).sum::<f64>() / trials as f64,
        success_trials: success.len(),
        success_dist_x: mean(&sx),
        success_dist_y: mean(&sy),
        max_success_dist_x: max(&sx),
        max_success_dist_y: max(&sy),
    })
}

/// Runs [`run_trials`] for every block length in `cfg`, in order.
pub fn simulate(
    source: &JointSource,
    ch: &AuxiliaryChannel,
    decoders: (&DecoderRule, &DecoderRule),
    dms: (&DistortionMeasure, &DistortionMeasure),
    cfg: &SimConfig,
) -> Result<SimulationReport> {
    if cfg.block_lengths.is_empty() {
        return Err(Error::InvalidParams("no block lengths given".into()));
    }
    check_inputs(source, ch, decoders, dms)?;
    let (nx, ny) = (source.sizes()[0], source.sizes()[1]);
    let typicality = cfg.typicality.unwrap_or_else(|| TypicalityParams::defaults_for(nx, ny));
    let records = cfg
        .block_lengths
        .iter()
        .map(|&n| run_trials(source, ch, decoders, dms, &cfg.codebook_config(n), &typicality, cfg.trials))
        .collect::<Result<_>>()?;
    Ok(SimulationReport { typicality, information: channel_information(source, ch)?, records })
}

/// Per-trial distortion allowance `D + k1 delta dmax |U x X x Y|` for
/// trials where encoding and both decodings succeed.
pub fn success_distortion_bound(budget: f64, params: &TypicalityParams, dmax: f64, product_size: usize) -> f64 {
    budget + params.k1 * params.delta * dmax * product_size as f64
}
