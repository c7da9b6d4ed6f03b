use std::path::{Path, PathBuf};

use num_complex::Complex64;
use qftscat::fitter::FitConfig;
use qftscat::gns::{BorchersVector, ProductTerm};
use qftscat::packet::NormGrid;
use qftscat::structure::{QuadSettings, SpectralDensity, StructureEvaluator};
use qftscat::transfer::{TransferFamily, TransferPolynomial};
use qftscat::{LegLabel, ModelParams, WavePacket};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams<f64>,
    /// Defaults to the built-in polynomial density for the model mass.
    #[serde(default)]
    pub rho: Option<SpectralDensity<f64>>,
    #[serde(default)]
    pub quad: QuadSettings<f64>,
    #[serde(default)]
    pub transfer: Option<FamilyConfig>,
    pub amplitude: Option<AmplitudeConfig>,
    pub converge: Option<ConvergeConfig>,
    pub fit: Option<FitSection>,
    pub gram: Option<GramConfig>,
    pub truncate_demo: Option<TruncateDemoConfig>,
    pub pvdemo: Option<PvDemoConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub l_max: usize,
    pub members: Vec<TransferPolynomial<f64>>,
}

impl FamilyConfig {
    pub fn build(&self) -> TransferFamily<f64> {
        self.members.iter().fold(TransferFamily::new(self.l_max), |f, p| f.with(p.clone()))
    }
}

fn one() -> f64 {
    1.0
}

fn default_refine() -> f64 {
    2.0
}

fn half_percent() -> f64 {
    5e-3
}

fn percent() -> f64 {
    1e-2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeConfig {
    pub in_packets: Vec<WavePacket<f64>>,
    pub out_packets: Vec<WavePacket<f64>>,
    #[serde(default = "default_refine")]
    pub refine_factor: f64,
    /// Relative agreement required of the refinement and two-path checks.
    #[serde(default = "half_percent")]
    pub tolerance: f64,
}

fn default_t_max() -> f64 {
    1e3
}

fn default_points() -> usize {
    24
}

fn default_samples() -> usize {
    8
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub labels: Vec<LegLabel>,
    pub legs: Vec<WavePacket<f64>>,
    #[serde(default = "one")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub orderings: Vec<Vec<usize>>,
    /// Weight the pairing by `M_n` from the transfer family.
    #[serde(default)]
    pub weighted: bool,
    /// Compare the limit with the directly evaluated form factor.
    #[serde(default = "yes")]
    pub compare_form_factor: bool,
    #[serde(default = "percent")]
    pub max_rel_error: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    Constant { value: f64 },
    ExpQ { i: usize, j: usize },
    Polynomial { polynomial: TransferPolynomial<f64> },
    /// CSV with invariant columns (`q12`, …) and a `value` column.
    Table { path: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub n: usize,
    pub r: usize,
    pub reference: ReferenceConfig,
    pub settings: FitConfig,
    /// When set, a passing fit is assembled into a family with this degree bound.
    #[serde(default)]
    pub l_max: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(default = "cone")]
    pub coefficient: Complex64,
    pub legs: Vec<WavePacket<f64>>,
}

fn cone() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorConfig {
    #[serde(default)]
    pub scalar: Complex64,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

impl VectorConfig {
    pub fn build(&self) -> BorchersVector {
        BorchersVector {
            scalar: self.scalar,
            terms: self.terms.iter().map(|t| ProductTerm { coefficient: t.coefficient, legs: t.legs.clone() }).collect(),
        }
    }
}

fn loc() -> LegLabel {
    LegLabel::Loc
}

fn two() -> usize {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramConfig {
    pub family: Vec<VectorConfig>,
    #[serde(default = "loc")]
    pub label: LegLabel,
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "yes")]
    pub truncated: bool,
    #[serde(default = "two")]
    pub k: usize,
    #[serde(default = "two")]
    pub l: usize,
    #[serde(default)]
    pub norm_grid: NormGrid,
}

fn five() -> usize {
    5
}

fn hundred() -> usize {
    100
}

fn seed_one() -> u64 {
    1
}

fn tight() -> f64 {
    1e-12
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncateDemoConfig {
    #[serde(default = "five")]
    pub max_order: usize,
    #[serde(default = "hundred")]
    pub tuples: usize,
    #[serde(default = "seed_one")]
    pub seed: u64,
    #[serde(default = "tight")]
    pub tolerance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub frequency: f64,
}

impl Default for PacketConfig {
    fn default() -> Self {
        PacketConfig { amplitude: 1.0, center: 0.0, width: 1.0, frequency: 0.0 }
    }
}

fn sigma_plus() -> i8 {
    1
}

fn sixteen() -> usize {
    16
}

fn eps_default() -> f64 {
    1e-5
}

fn micro() -> f64 {
    1e-6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvDemoConfig {
    #[serde(default)]
    pub packet: PacketConfig,
    #[serde(default = "sigma_plus")]
    pub sigma: i8,
    #[serde(default = "one")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "sixteen")]
    pub points: usize,
    #[serde(default = "percent")]
    pub max_rel_error: f64,
    #[serde(default = "eps_default")]
    pub epsilon: f64,
    #[serde(default = "micro")]
    pub sokhotsky_tolerance: f64,
}

/// A parsed config with its raw bytes and location.
pub struct Loaded {
    pub config: RunConfig,
    pub bytes: Vec<u8>,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    config.model.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
    config.structure()?;
    if let Some(f) = &config.transfer {
        let rep = qftscat::transfer::validate_family(&f.build());
        if !rep.passed {
            return Err(CliError::Config(format!("transfer: {:?}", rep.violations)));
        }
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, bytes, dir })
}

impl RunConfig {
    pub fn rho(&self) -> SpectralDensity<f64> {
        self.rho.unwrap_or_else(|| SpectralDensity::default_for(self.model.m))
    }

    pub fn structure(&self) -> Result<StructureEvaluator<f64>, CliError> {
        StructureEvaluator::new(self.model, self.rho(), self.quad).map_err(|e| CliError::Config(format!("rho/quad: {e}")))
    }

    pub fn family(&self) -> Option<TransferFamily<f64>> {
        self.transfer.as_ref().map(FamilyConfig::build)
    }
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("missing `{name}` section")))
}
