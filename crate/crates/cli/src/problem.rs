//! JSON problem and solution files.

use std::path::Path;

use comdel::{
    AuxiliaryChannel, CdProblem, CdSolution, DecoderRule, DecoderSpec, DistortionMeasure, GcdProblem, JointSource,
    OptimizerOptions, SimConfig,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedMeasure {
    Hamming,
}

/// A distortion measure: either `"hamming"` or an explicit
/// source-by-reconstruction matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistortionSpec {
    Named(NamedMeasure),
    Matrix(Vec<Vec<f64>>),
}

impl DistortionSpec {
    fn build(&self, size: usize) -> Result<DistortionMeasure, CliError> {
        match self {
            DistortionSpec::Named(NamedMeasure::Hamming) => Ok(DistortionMeasure::hamming(size)),
            DistortionSpec::Matrix(rows) => Ok(DistortionMeasure::new(rows.clone())?),
        }
    }
}

/// One decoder of an N-source problem. Measures default to the per-coordinate
/// `distortions`, budgets to the per-coordinate `budgets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderEntry {
    pub targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortions: Option<Vec<DistortionSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    /// Letter labels, one list per coordinate.
    pub alphabets: Vec<Vec<String>>,
    /// Row-major over the product alphabet, first coordinate slowest.
    pub pmf: Vec<f64>,
    /// One per coordinate; Hamming when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortions: Option<Vec<DistortionSpec>>,
    /// One per coordinate; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoders: Option<Vec<DecoderEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| input(format!("problem file: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    fn sizes(&self) -> Vec<usize> {
        self.alphabets.iter().map(Vec::len).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        self.source()?;
        self.measures()?;
        self.budgets()?;
        if let Some(decs) = &self.decoders {
            self.decoder_specs(decs)?;
        }
        Ok(())
    }

    pub fn source(&self) -> Result<JointSource, CliError> {
        if self.alphabets.is_empty() || self.alphabets.iter().any(Vec::is_empty) {
            return Err(input("every coordinate needs at least one letter"));
        }
        Ok(JointSource::new(self.pmf.clone(), self.sizes())?)
    }

    pub fn measures(&self) -> Result<Vec<DistortionMeasure>, CliError> {
        let sizes = self.sizes();
        match &self.distortions {
            None => Ok(sizes.iter().map(|&s| DistortionMeasure::hamming(s)).collect()),
            Some(specs) if specs.len() == sizes.len() => {
                let out = specs.iter().zip(&sizes).map(|(d, &s)| d.build(s)).collect::<Result<Vec<_>, _>>()?;
                if let Some((i, m)) = out.iter().enumerate().find(|(i, m)| m.source_size() != sizes[*i]) {
                    return Err(input(format!(
                        "distortion for coordinate {i} has {} rows, alphabet has {}",
                        m.source_size(),
                        sizes[i]
                    )));
                }
                Ok(out)
            }
            Some(specs) => Err(input(format!("{} distortions for {} coordinates", specs.len(), sizes.len()))),
        }
    }

    pub fn budgets(&self) -> Result<Vec<f64>, CliError> {
        let n = self.alphabets.len();
        let b = self.budgets.clone().unwrap_or_else(|| vec![0.0; n]);
        if b.len() != n {
            return Err(input(format!("{} budgets for {n} coordinates", b.len())));
        }
        if let Some(&v) = b.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(comdel::Error::BudgetNegative(v).into());
        }
        Ok(b)
    }

    fn decoder_specs(&self, decs: &[DecoderEntry]) -> Result<Vec<DecoderSpec>, CliError> {
        let measures = self.measures()?;
        let budgets = self.budgets()?;
        let sizes = self.sizes();
        decs.iter()
            .map(|d| {
                if let Some(&t) = d.targets.iter().find(|&&t| t >= sizes.len()) {
                    return Err(comdel::Error::CoordOutOfRange { coord: t, dims: sizes.len() }.into());
                }
                let ms = match &d.distortions {
                    Some(specs) if specs.len() == d.targets.len() => {
                        specs.iter().zip(&d.targets).map(|(s, &t)| s.build(sizes[t])).collect::<Result<_, _>>()?
                    }
                    Some(_) => return Err(input("decoder distortions must match its targets")),
                    None => d.targets.iter().map(|&t| measures[t].clone()).collect(),
                };
                let bs = match &d.budgets {
                    Some(b) => b.clone(),
                    None => d.targets.iter().map(|&t| budgets[t]).collect(),
                };
                Ok(DecoderSpec::new(d.targets.clone(), ms, bs))
            })
            .collect()
    }

    pub fn cd_problem(&self) -> Result<CdProblem, CliError> {
        if self.alphabets.len() != 2 {
            return Err(input(format!(
                "this command needs a two-coordinate source, got {} coordinates",
                self.alphabets.len()
            )));
        }
        let mut m = self.measures()?;
        let b = self.budgets()?;
        let dy = m.pop().expect("two measures");
        let dx = m.pop().expect("two measures");
        Ok(CdProblem::new(self.source()?, dx, dy, b[0], b[1])?)
    }

    /// The N-source problem; without explicit decoders a two-coordinate
    /// file becomes the canonical pair.
    pub fn gcd_problem(&self) -> Result<GcdProblem, CliError> {
        match &self.decoders {
            Some(decs) => Ok(GcdProblem::new(self.source()?, self.decoder_specs(decs)?)?),
            None if self.alphabets.len() == 2 => Ok(GcdProblem::from_cd(&self.cd_problem()?)),
            None => Err(input("an N-source problem needs a decoders list")),
        }
    }

    pub fn optimizer(&self) -> OptimizerOptions {
        self.optimizer.clone().unwrap_or_default()
    }
}

/// Channel and decoders of a two-coordinate solution, as written by
/// `--dump-solution` and read by `simulate --solution`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub rate_nats: f64,
    pub seed: u64,
    pub u_size: usize,
    /// `P(u | x, y)`, one row per source pair.
    pub channel: Vec<Vec<f64>>,
    /// Decoder of `X` from `(u, y)`, row-major over `u`.
    pub decoder_x: Vec<usize>,
    /// Decoder of `Y` from `(u, x)`.
    pub decoder_y: Vec<usize>,
}

impl SolutionFile {
    pub fn from_solution(sol: &CdSolution, seed: u64) -> Self {
        SolutionFile {
            rate_nats: sol.rate,
            seed,
            u_size: sol.channel.u_size(),
            channel: sol.channel.to_rows(),
            decoder_x: sol.decoders.0.table().to_vec(),
            decoder_y: sol.decoders.1.table().to_vec(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| input(format!("solution file: {e}")))
    }

    /// Validated channel and decoder pair for a source of `nx` by `ny`.
    pub fn parts(&self, nx: usize, ny: usize) -> Result<(AuxiliaryChannel, DecoderRule, DecoderRule), CliError> {
        if self.channel.len() != nx * ny {
            return Err(input(format!("solution channel has {} rows, source has {}", self.channel.len(), nx * ny)));
        }
        let ch = AuxiliaryChannel::new(self.u_size, self.channel.clone())?;
        let a = DecoderRule::new(self.u_size, ny, self.decoder_x.clone())?;
        let b = DecoderRule::new(self.u_size, nx, self.decoder_y.clone())?;
        Ok((ch, a, b))
    }
}
