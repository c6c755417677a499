//! Experiment configuration (TOML).
//!
//! ```toml
//! kind = "phase_transition"   # convergence | distortion_survey | witness_scan
//! dims = [15, 15, 15]
//! rank = { hosvd = [2, 2, 2] } # or { cp = 3 }
//! ensemble = "dense"           # or "facesplit"
//! distribution = "gaussian"    # rademacher | uniform_sphere
//! m_values = [400, 800, 1200]
//! trials = 20
//! seed = 1
//! output = "out/fig3"
//! timing = true                # false zeroes the seconds column
//! traces = false               # per-trial trace CSVs
//!
//! [recovery]
//! max_iters = 200
//! success_tol = 1e-4
//! trim_convention = "drop_largest"   # or "keep_smallest"
//! diagnostics = false
//!
//! [[algorithms]]
//! algo = "tiht"
//! step = 1.0
//!
//! [[algorithms]]
//! algo = "trim_tiht"
//! m_trim = [5, 10, 20, 40, 80]
//!
//! [[algorithms]]
//! algo = "kacz_tiht"          # gamma defaults to N/m, lambda to 1
//! ```
//!
//! Distortion surveys additionally take `samples` and `survey_m_trim`;
//! witness scans take `n_values` (cubic shapes of order `dims.len()`) and
//! `witness_row = "first" | "largest_norm"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tensor_iht::measure::RowDistribution;
use tensor_iht::recover::{Algorithm, TrimConvention};
use tensor_iht::riplab::WitnessRow;
use tensor_iht::RankSpec;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseTransition,
    Convergence,
    DistortionSurvey,
    WitnessScan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankConfig {
    Hosvd(Vec<usize>),
    Cp(usize),
}

impl From<&RankConfig> for RankSpec {
    fn from(r: &RankConfig) -> Self {
        match r {
            RankConfig::Hosvd(v) => RankSpec::Hosvd(v.clone()),
            RankConfig::Cp(r) => RankSpec::Cp(*r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    #[default]
    Dense,
    Facesplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionConfig {
    #[default]
    Gaussian,
    Rademacher,
    UniformSphere,
}

impl From<DistributionConfig> for RowDistribution {
    fn from(d: DistributionConfig) -> Self {
        match d {
            DistributionConfig::Gaussian => RowDistribution::Gaussian,
            DistributionConfig::Rademacher => RowDistribution::Rademacher,
            DistributionConfig::UniformSphere => RowDistribution::UniformSphere,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoName {
    Tiht,
    TrimTiht,
    KaczTiht,
}

impl From<AlgoName> for Algorithm {
    fn from(a: AlgoName) -> Self {
        match a {
            AlgoName::Tiht => Algorithm::Tiht,
            AlgoName::TrimTiht => Algorithm::TrimTiht,
            AlgoName::KaczTiht => Algorithm::KaczTiht,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimConventionConfig {
    #[default]
    DropLargest,
    KeepSmallest,
}

impl From<TrimConventionConfig> for TrimConvention {
    fn from(t: TrimConventionConfig) -> Self {
        match t {
            TrimConventionConfig::DropLargest => TrimConvention::DropLargest,
            TrimConventionConfig::KeepSmallest => TrimConvention::KeepSmallest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessRowConfig {
    #[default]
    First,
    LargestNorm,
}

impl From<WitnessRowConfig> for WitnessRow {
    fn from(w: WitnessRowConfig) -> Self {
        match w {
            WitnessRowConfig::First => WitnessRow::First,
            WitnessRowConfig::LargestNorm => WitnessRow::LargestNorm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub algo: AlgoName,
    /// TrimTIHT only; every value becomes its own column in the results.
    #[serde(default)]
    pub m_trim: Vec<usize>,
    pub step: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverySettings {
    pub max_iters: usize,
    pub success_tol: f64,
    pub trim_convention: TrimConventionConfig,
    pub diagnostics: bool,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            success_tol: 1e-4,
            trim_convention: TrimConventionConfig::DropLargest,
            diagnostics: false,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub dims: Vec<usize>,
    pub rank: RankConfig,
    #[serde(default)]
    pub ensemble: EnsembleKind,
    #[serde(default)]
    pub distribution: DistributionConfig,
    pub m_values: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub timing: bool,
    #[serde(default)]
    pub traces: bool,
    #[serde(default)]
    pub recovery: RecoverySettings,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmSpec>,
    /// Distortion survey: tensors drawn per repetition.
    pub samples: Option<usize>,
    /// Distortion survey: trim counts, `0` for the untrimmed ensemble.
    #[serde(default)]
    pub survey_m_trim: Vec<usize>,
    /// Witness scan: mode sizes; empty means `dims` as given.
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default)]
    pub witness_row: WitnessRowConfig,
}

/// One result column: an algorithm with a concrete trim count.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub algo: AlgoName,
    pub m_trim: usize,
    pub step: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(BenchError::Config(msg.into()))
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    pub fn domain_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn rank_spec(&self) -> RankSpec {
        (&self.rank).into()
    }

    pub fn is_recovery(&self) -> bool {
        matches!(self.kind, ExperimentKind::PhaseTransition | ExperimentKind::Convergence)
    }

    /// Expands the algorithm list into result columns, in config order.
    pub fn variants(&self) -> Vec<Variant> {
        self.algorithms
            .iter()
            .flat_map(|a| {
                let trims = if a.algo == AlgoName::TrimTiht { a.m_trim.clone() } else { vec![0] };
                trims.into_iter().map(move |m_trim| Variant {
                    algo: a.algo,
                    m_trim,
                    step: a.step,
                    gamma: a.gamma,
                    lambda: a.lambda,
                })
            })
            .collect()
    }

    /// Shapes visited by a witness scan.
    pub fn witness_shapes(&self) -> Vec<Vec<usize>> {
        if self.n_values.is_empty() {
            vec![self.dims.clone()]
        } else {
            self.n_values.iter().map(|&n| vec![n; self.dims.len()]).collect()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return cfg_err(format!("dims {:?} must be nonempty and positive", self.dims));
        }
        if self.trials == 0 {
            return cfg_err("trials must be at least 1");
        }
        if self.m_values.is_empty() {
            return cfg_err("m_values must not be empty");
        }
        if self.m_values.contains(&0) {
            return cfg_err("m values must be positive");
        }
        let n = self.domain_len();
        match self.kind {
            ExperimentKind::PhaseTransition | ExperimentKind::Convergence => {
                self.rank_spec().validate(&self.dims).map_err(|e| BenchError::Config(e.to_string()))?;
                if let Some(&m) = self.m_values.iter().find(|&&m| m > n) {
                    return cfg_err(format!("m = {m} exceeds the ambient dimension {n}"));
                }
                if self.algorithms.is_empty() {
                    return cfg_err("algorithms must not be empty");
                }
                let r = &self.recovery;
                if r.max_iters == 0 || !(r.success_tol > 0.0) {
                    return cfg_err("recovery needs max_iters >= 1 and success_tol > 0");
                }
                for a in &self.algorithms {
                    if a.algo == AlgoName::TrimTiht && a.m_trim.is_empty() {
                        return cfg_err("trim_tiht needs a nonempty m_trim list");
                    }
                    if a.algo != AlgoName::TrimTiht && !a.m_trim.is_empty() {
                        return cfg_err(format!("m_trim only applies to trim_tiht, not {:?}", a.algo));
                    }
                    for (name, v) in [("step", a.step), ("gamma", a.gamma), ("lambda", a.lambda)] {
                        if v.is_some_and(|v| !(v > 0.0)) {
                            return cfg_err(format!("{name} must be positive"));
                        }
                    }
                    for &t in &a.m_trim {
                        for &m in &self.m_values {
                            let ok = match r.trim_convention {
                                TrimConventionConfig::DropLargest => t < m,
                                TrimConventionConfig::KeepSmallest => t >= 1 && t <= m,
                            };
                            if !ok {
                                return cfg_err(format!("m_trim = {t} is invalid for m = {m}"));
                            }
                        }
                    }
                }
            }
            ExperimentKind::DistortionSurvey => {
                self.rank_spec().validate(&self.dims).map_err(|e| BenchError::Config(e.to_string()))?;
                if self.samples.unwrap_or(0) == 0 {
                    return cfg_err("distortion_survey needs samples >= 1");
                }
                if self.survey_m_trim.is_empty() {
                    return cfg_err("survey_m_trim must not be empty");
                }
                let m_min = *self.m_values.iter().min().unwrap();
                if let Some(&t) = self.survey_m_trim.iter().find(|&&t| t >= m_min) {
                    return cfg_err(format!("survey m_trim = {t} must be below m = {m_min}"));
                }
            }
            ExperimentKind::WitnessScan => {
                if self.n_values.contains(&0) {
                    return cfg_err("n_values must be positive");
                }
            }
        }
        Ok(())
    }
}
