//! Empirical restricted-isometry laboratory.
//!
//! Suprema over low-rank sets are replaced by maxima over seeded samples.
//! Nothing here estimates the unknown absolute constants of the theory;
//! [`covering_budget`] evaluates the sample-size formulas with all constants
//! set to one and is an order-of-magnitude guide only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Result};
use crate::lowrank::{random_cp, random_tucker, RankSpec};
use crate::measure::{MeasurementEnsemble, MeasurementOperator, RowDistribution};
use crate::tensor::{dot, rank1, DenseTensor, FactorList};

/// Mean of the `n − k2` smallest samples.
pub fn trimmed_mean(samples: &[f64], k2: usize) -> Result<f64> {
    let n = samples.len();
    if k2 >= n {
        return config_err(format!("trim count {k2} must be below the sample count {n}"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[..n - k2].iter().sum::<f64>() / (n - k2) as f64)
}

/// Trim count `⌈ln(8 n^φ)⌉`.
pub fn trim_count(n: usize, phi: f64) -> usize {
    (8.0f64.ln() + phi * (n as f64).ln()).ceil().max(0.0) as usize
}

/// Draws unit-Frobenius-norm low-rank tensors: Tucker with a
/// `N(0,1) + U(0,2)` core and orthonormalized factors, or CP with
/// `N(0.1, 1)` factors.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankSampler {
    pub dims: Vec<usize>,
    pub rank: RankSpec,
}

impl LowRankSampler {
    pub fn new(dims: &[usize], rank: RankSpec) -> Result<Self> {
        rank.validate(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            rank,
        })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<DenseTensor> {
        let mut t = match &self.rank {
            RankSpec::Hosvd(r) => random_tucker(&self.dims, r, rng)?,
            RankSpec::Cp(r) => random_cp(&self.dims, *r, rng)?,
        };
        let n = t.frob_norm();
        if n > 0.0 {
            t.scale(1.0 / n);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub descriptor: String,
    pub m_trim: usize,
    pub seed: u64,
    /// `|‖A^x x‖² / ‖x‖² − 1|` per sample, in draw order.
    pub distortions: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    /// `(level, value)` pairs at the levels of [`DistortionReport::QUANTILE_LEVELS`].
    pub quantiles: Vec<(f64, f64)>,
}

impl DistortionReport {
    pub const QUANTILE_LEVELS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];

    pub fn from_distortions(descriptor: String, m_trim: usize, seed: u64, distortions: Vec<f64>) -> Self {
        let n = distortions.len();
        let max = distortions.iter().copied().fold(0.0, f64::max);
        let mean = if n == 0 {
            0.0
        } else {
            distortions.iter().sum::<f64>() / n as f64
        };
        let mut sorted = distortions.clone();
        sorted.sort_by(f64::total_cmp);
        let quantiles = Self::QUANTILE_LEVELS
            .iter()
            .map(|&q| (q, quantile_sorted(&sorted, q)))
            .collect();
        Self {
            descriptor,
            m_trim,
            seed,
            distortions,
            max,
            mean,
            quantiles,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.distortions.len()
    }
}

/// Linear interpolation between order statistics; 0 for no samples.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn descriptor(a: &MeasurementEnsemble) -> String {
    let kind = if a.is_facesplit() { "facesplit" } else { "dense" };
    format!("{kind} m={} dims={:?}", a.m(), a.dims())
}

/// Distortion of `x` under each trim count in `m_trims` from a single
/// application of `a`; scores are `|A x|` and `0` is the untrimmed value.
pub fn distortions_for_trims(a: &MeasurementEnsemble, x: &DenseTensor, m_trims: &[usize]) -> Result<Vec<f64>> {
    let y = a.apply(x)?;
    let nx = x.inner(x);
    m_trims
        .iter()
        .map(|&t| {
            let kept = a.trim(&y, t)?.restrict(&y);
            Ok((dot(&kept, &kept) / nx - 1.0).abs())
        })
        .collect()
}

/// Untrimmed and trimmed distortion of one tensor from a single
/// application of `a`.
pub fn distortion_pair(a: &MeasurementEnsemble, x: &DenseTensor, m_trim: usize) -> Result<(f64, f64)> {
    let d = distortions_for_trims(a, x, &[0, m_trim])?;
    Ok((d[0], d[1]))
}

/// Sampled distortion of `samples` draws from `sampler` under the
/// `m_trim`-trimmed ensemble (`m_trim = 0` is the untrimmed survey).
pub fn distortion_survey<F>(
    a: &MeasurementEnsemble,
    mut sampler: F,
    samples: usize,
    m_trim: usize,
    seed: u64,
) -> Result<DistortionReport>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<DenseTensor>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = sampler(&mut rng)?;
        out.push(distortion_pair(a, &x, m_trim)?.1);
    }
    Ok(DistortionReport::from_distortions(descriptor(a), m_trim, seed, out))
}

/// Untrimmed and trimmed surveys over the same samples.
pub fn paired_distortion_survey<F>(
    a: &MeasurementEnsemble,
    mut sampler: F,
    samples: usize,
    m_trim: usize,
    seed: u64,
) -> Result<(DistortionReport, DistortionReport)>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<DenseTensor>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut full = Vec::with_capacity(samples);
    let mut trimmed = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = sampler(&mut rng)?;
        let (f, t) = distortion_pair(a, &x, m_trim)?;
        full.push(f);
        trimmed.push(t);
    }
    let desc = descriptor(a);
    Ok((
        DistortionReport::from_distortions(desc.clone(), 0, seed, full),
        DistortionReport::from_distortions(desc, m_trim, seed, trimmed),
    ))
}

/// Which measurement row the adversarial tensor is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WitnessRow {
    /// The first row.
    #[default]
    First,
    /// The row with the largest norm.
    LargestNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessPair {
    /// Row the adversarial tensor was built from.
    pub row: usize,
    /// Adversarial tensor: the measurement row itself, reshaped (rank 1 for
    /// face-splitting ensembles).
    pub x: DenseTensor,
    /// Independent random rank-1 tensor.
    pub y: DenseTensor,
    /// `‖A X‖² / ‖X‖²`
    pub x_distortion: f64,
    /// `‖A Y‖² / ‖Y‖²`
    pub y_distortion: f64,
    /// `x_distortion / y_distortion`; above `(1+δ)/(1−δ)` no rescaling of
    /// `A` is a δ-isometry on rank-1 tensors.
    pub ratio: f64,
}

/// Witness built from the first row; `Y` has factors drawn from `dist`.
pub fn rip_failure_witness(a: &MeasurementEnsemble, dist: RowDistribution, seed: u64) -> Result<WitnessPair> {
    rip_failure_witness_with(a, dist, seed, WitnessRow::First)
}

pub fn rip_failure_witness_with(
    a: &MeasurementEnsemble,
    dist: RowDistribution,
    seed: u64,
    which: WitnessRow,
) -> Result<WitnessPair> {
    let row = match which {
        WitnessRow::First => 0,
        WitnessRow::LargestNorm => (0..a.m())
            .map(|j| (j, a.raw_row_norm_sq(j)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0,
    };
    let x = a.row_tensor(row);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factors = a
        .dims()
        .iter()
        .map(|&n| {
            let mut f = vec![0.0; n];
            dist.fill_row(&mut f, &mut rng);
            f
        })
        .collect();
    let y = rank1(&FactorList::new(factors)?);

    let distortion = |t: &DenseTensor| -> Result<f64> {
        let v = a.apply(t)?;
        Ok(dot(&v, &v) / t.inner(t))
    };
    let x_distortion = distortion(&x)?;
    let y_distortion = distortion(&y)?;
    Ok(WitnessPair {
        row,
        x,
        y,
        x_distortion,
        y_distortion,
        ratio: x_distortion / y_distortion,
    })
}

/// Suggested measurement counts with all constants set to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringBudget {
    /// `δ⁻² (Π r_i + Σ n_i r_i) ln(√N (d+1) / δ)`
    pub hosvd: f64,
    /// `δ⁻² r Σ n_i ln(N^{3/2} / δ)`
    pub cp: f64,
    /// `⌈ln(8 n^φ)⌉` with `n` the largest mode size.
    pub trim_count: usize,
}

/// Both sample-size formulas for `rank` (a CP rank `r` is read as Tucker
/// rank `(r, …, r)` and vice versa with `r = max r_i`).
pub fn covering_budget(rank: &RankSpec, dims: &[usize], delta: f64, phi: f64) -> Result<CoveringBudget> {
    rank.validate(dims)?;
    if !(delta > 0.0 && delta < 1.0) {
        return config_err("delta must lie in (0, 1)");
    }
    let d = dims.len();
    let ranks: Vec<usize> = match rank {
        RankSpec::Hosvd(r) => r.clone(),
        RankSpec::Cp(r) => dims.iter().map(|&n| (*r).min(n)).collect(),
    };
    let r_cp = match rank {
        RankSpec::Hosvd(r) => *r.iter().max().unwrap_or(&1),
        RankSpec::Cp(r) => *r,
    } as f64;
    let big_n: f64 = dims.iter().map(|&n| n as f64).product();
    let core: f64 = ranks.iter().map(|&r| r as f64).product();
    let modes: f64 = dims.iter().zip(&ranks).map(|(&n, &r)| (n * r) as f64).sum();
    let sum_n: f64 = dims.iter().map(|&n| n as f64).sum();
    let inv = delta.powi(-2);
    Ok(CoveringBudget {
        hosvd: inv * (core + modes) * (big_n.sqrt() * (d + 1) as f64 / delta).ln(),
        cp: inv * r_cp * sum_n * (big_n.powf(1.5) / delta).ln(),
        trim_count: trim_count(dims.iter().copied().max().unwrap_or(1), phi),
    })
}
