//! Iterative hard thresholding for low-rank tensor recovery.
//!
//! Three algorithms share one driver, all starting from `X = 0`:
//!
//! * **TIHT**: `Y = X + μ A*(b − A(X))`, `X ← T_r(Y)`.
//! * **TrimTIHT**: the gradient is taken through the trimmed operator built
//!   from the scores `|A(X) − b|` (the `m_trim` largest rows dropped, the rest
//!   rescaled). With `m_trim = 0` the iteration is bit-identical to TIHT.
//! * **KaczTIHT**: one epoch of `m` relaxed Kaczmarz projections over a fresh
//!   random permutation of the rows, an extrapolation
//!   `U = X + λ(X_{m+1} − X)`, then `X ← T_r(U)`.
//!
//! When the ground truth `X*` is supplied and diagnostics are enabled, every
//! iteration records the distortion ratios `Δ_t` and `ρ_t` of the operator
//! used for the step, the realized thresholding accuracy `ξ_t` and the
//! per-step contraction bound `α_t`.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Result};
use crate::lowrank::{threshold, FitOptions, RankSpec};
use crate::measure::{MeasurementEnsemble, MeasurementOperator};
use crate::tensor::{dot, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Tiht,
    TrimTiht,
    KaczTiht,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tiht => "tiht",
            Algorithm::TrimTiht => "trim_tiht",
            Algorithm::KaczTiht => "kacz_tiht",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How `m_trim` selects the rows TrimTIHT keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrimConvention {
    /// Drop the `m_trim` rows with the largest scores, keep `m − m_trim`.
    #[default]
    DropLargest,
    /// Keep only the `m_trim` rows with the smallest scores.
    KeepSmallest,
}

/// Iteration-dependent step size `μ_t`; receives the 1-based iteration.
pub type StepFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct RecoveryConfig {
    pub algorithm: Algorithm,
    pub rank: RankSpec,
    pub max_iters: usize,
    /// Stop once the relative error (or, without ground truth, the relative
    /// residual) drops strictly below this.
    pub success_tol: f64,
    /// Constant step size `μ` for TIHT and TrimTIHT.
    pub step: f64,
    /// Overrides `step` when set.
    pub step_fn: Option<StepFn>,
    pub m_trim: usize,
    pub trim_convention: TrimConvention,
    /// Kaczmarz relaxation; `None` means `N/m`.
    pub gamma: Option<f64>,
    /// Kaczmarz extrapolation.
    pub lambda: f64,
    pub shuffle_seed: u64,
    /// Record `Δ_t, ρ_t, ξ_t, α_t` (needs ground truth; costs extra operator applications).
    pub diagnostics: bool,
    /// Record the kept row set `Θ_t` of TrimTIHT.
    pub record_kept: bool,
    /// Record per-iteration wall time; off gives reproducible traces.
    pub record_time: bool,
    /// Abort when the relative error (or relative residual) exceeds this.
    pub divergence_threshold: f64,
    /// When set, each diagnostic record reports whether `ξ_t` stays within it.
    pub xi_budget: Option<f64>,
    pub fit: FitOptions,
}

impl fmt::Debug for RecoveryConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecoveryConfig")
            .field("algorithm", &self.algorithm)
            .field("rank", &self.rank)
            .field("max_iters", &self.max_iters)
            .field("success_tol", &self.success_tol)
            .field("step", &self.step)
            .field("step_fn", &self.step_fn.as_ref().map(|_| "<fn>"))
            .field("m_trim", &self.m_trim)
            .field("trim_convention", &self.trim_convention)
            .field("gamma", &self.gamma)
            .field("lambda", &self.lambda)
            .field("shuffle_seed", &self.shuffle_seed)
            .field("diagnostics", &self.diagnostics)
            .field("record_kept", &self.record_kept)
            .field("record_time", &self.record_time)
            .field("divergence_threshold", &self.divergence_threshold)
            .field("xi_budget", &self.xi_budget)
            .field("fit", &self.fit)
            .finish()
    }
}

impl RecoveryConfig {
    pub fn new(algorithm: Algorithm, rank: RankSpec) -> Self {
        Self {
            algorithm,
            rank,
            max_iters: 200,
            success_tol: 1e-4,
            step: 1.0,
            step_fn: None,
            m_trim: 0,
            trim_convention: TrimConvention::DropLargest,
            gamma: None,
            lambda: 1.0,
            shuffle_seed: 0,
            diagnostics: false,
            record_kept: false,
            record_time: true,
            divergence_threshold: 1e6,
            xi_budget: None,
            fit: FitOptions::default(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.max_iters == 0 {
            return config_err("max_iters must be at least 1");
        }
        if !(self.success_tol > 0.0) {
            return config_err("success_tol must be positive");
        }
        if !(self.step > 0.0) {
            return config_err("step size must be positive");
        }
        if !(self.lambda > 0.0) {
            return config_err("lambda must be positive");
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return config_err("gamma must be positive");
            }
        }
        if self.algorithm == Algorithm::TrimTiht {
            match self.trim_convention {
                TrimConvention::DropLargest if self.m_trim >= m => {
                    return config_err(format!("m_trim = {} must be below m = {m}", self.m_trim))
                }
                TrimConvention::KeepSmallest if self.m_trim == 0 || self.m_trim > m => {
                    return config_err(format!("kept count m_trim = {} must lie in 1..={m}", self.m_trim))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn step_at(&self, t: usize) -> f64 {
        self.step_fn.as_ref().map_or(self.step, |f| f(t))
    }

    fn dropped_rows(&self, m: usize) -> usize {
        match self.trim_convention {
            TrimConvention::DropLargest => self.m_trim,
            TrimConvention::KeepSmallest => m - self.m_trim,
        }
    }
}

/// Convergence quantities of one iteration, computed against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// `‖A_t r^t‖² / ‖r^t‖²`
    pub delta: f64,
    /// `‖A_t u_t‖² / ‖u_t‖²`, `u_t` the projection of `A_tᵀA_t r^t` onto `span{r^t, r^{t+1}}`.
    pub rho: f64,
    /// Realized `‖X^{t+1} − Y^t‖ / ‖Y^t − X*‖ − 1`; `None` when `Y^t = X*`.
    pub xi: Option<f64>,
    /// Per-step contraction bound
    /// `2√(1 − (2 − μρ)μΔ) + √(max(0, 2ξ + ξ²)) · ‖Y^t − X*‖/‖r^t‖`.
    pub alpha: Option<f64>,
    /// The ξ-free simplification `2√(1 − 2μΔ + μ²ρΔ) + |1 − μΔ|`.
    pub alpha_simplified: Option<f64>,
    /// Observed `‖r^{t+1}‖ / ‖r^t‖`.
    pub contraction: f64,
    /// `ξ_t ≤ xi_budget`, when a budget was configured.
    pub xi_within_budget: Option<bool>,
    /// `r^t = 0`: the iterate already equals the truth; the ratios are zeroed.
    pub converged: bool,
}

impl StepDiagnostics {
    fn converged_sentinel() -> Self {
        Self {
            delta: 0.0,
            rho: 0.0,
            xi: None,
            alpha: None,
            alpha_simplified: None,
            contraction: 0.0,
            xi_within_budget: None,
            converged: true,
        }
    }
}

/// Computes `Δ_t, ρ_t, ξ_t, α_t` for one step.
///
/// `op` is the operator of the gradient step (the trimmed view for
/// TrimTIHT), `r_t = X^t − X*`, `r_next = X^{t+1} − X*`, `y` the
/// pre-thresholding point `Y^t`, `mu` the step size. `α_t` is only a valid
/// bound for gradient steps through `op` with exact measurements.
pub fn diagnostics_step(
    op: &dyn MeasurementOperator,
    r_t: &DenseTensor,
    r_next: &DenseTensor,
    y: &DenseTensor,
    truth: &DenseTensor,
    mu: f64,
) -> Result<StepDiagnostics> {
    for (name, t) in [("r_t", r_t), ("r_next", r_next), ("y", y), ("truth", truth)] {
        if t.dims() != op.dims() {
            return shape_err(format!("{name} dims {:?} do not match {:?}", t.dims(), op.dims()));
        }
    }
    let nr = r_t.frob_norm();
    if nr == 0.0 {
        return Ok(StepDiagnostics::converged_sentinel());
    }
    let ar = op.apply(r_t)?;
    let delta = dot(&ar, &ar) / (nr * nr);
    let gram_r = op.adjoint(&ar)?;

    let q1 = r_t.scaled(1.0 / nr);
    let mut u = q1.scaled(gram_r.inner(&q1));
    if let Some(q2) = second_basis_vector(&q1, r_next) {
        u.axpy(gram_r.inner(&q2), &q2);
    }
    let nu = u.frob_norm();
    let rho = if nu > 0.0 {
        let au = op.apply(&u)?;
        dot(&au, &au) / (nu * nu)
    } else {
        0.0
    };

    let y_err = y.distance(truth);
    let x_next = r_next.add(truth);
    let xi = (y_err > 0.0).then(|| x_next.distance(y) / y_err - 1.0);
    let s = (1.0 - (2.0 - mu * rho) * mu * delta).max(0.0).sqrt();
    let alpha = xi.map(|xi| 2.0 * s + (2.0 * xi + xi * xi).max(0.0).sqrt() * y_err / nr);
    let alpha_simplified = Some(2.0 * s + (1.0 - mu * delta).abs());

    Ok(StepDiagnostics {
        delta,
        rho,
        xi,
        alpha,
        alpha_simplified,
        contraction: r_next.frob_norm() / nr,
        xi_within_budget: None,
        converged: false,
    })
}

/// Unit vector completing `q1` to an orthonormal basis of `span{q1, v}`, or
/// `None` when `v` is (numerically) parallel to `q1`.
fn second_basis_vector(q1: &DenseTensor, v: &DenseTensor) -> Option<DenseTensor> {
    let nv = v.frob_norm();
    if nv == 0.0 {
        return None;
    }
    let mut w = v.clone();
    for _ in 0..2 {
        let p = w.inner(q1);
        w.axpy(-p, q1);
    }
    let nw = w.frob_norm();
    (nw > 1e-10 * nv).then(|| w.scaled(1.0 / nw))
}

/// `ξ` budget `δ² / (5(1 + δ + ‖A‖₂√(1 + δ))²)` under which the Kaczmarz
/// analysis holds; `op_norm` is the spectral norm of the scaled operator.
pub fn xi_budget_from_rip(delta: f64, op_norm: f64) -> f64 {
    let sigma = 1.0 + delta + op_norm * (1.0 + delta).sqrt();
    delta * delta / (5.0 * sigma * sigma)
}

/// Power-iteration estimate of the spectral norm of `op` (a lower bound that
/// tightens with `iters`).
pub fn estimate_operator_norm(op: &dyn MeasurementOperator, iters: usize, seed: u64) -> Result<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DenseTensor::from_fn(op.dims(), |_| StandardNormal.sample(&mut rng));
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let n = x.frob_norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        x.scale(1.0 / n);
        let ax = op.apply(&x)?;
        est = dot(&ax, &ax).sqrt();
        x = op.adjoint(&ax)?;
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Stopping criterion met.
    Converged,
    /// Iteration budget exhausted.
    MaxIters,
    /// Non-finite iterate or error beyond the divergence threshold.
    Diverged,
}

/// One recorded iteration; `iter` counts completed updates (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `‖X^t − X*‖/‖X*‖` (absolute when `X* = 0`).
    pub rel_err: Option<f64>,
    /// `‖A(X^t) − b‖₂`
    pub residual: f64,
    pub diagnostics: Option<StepDiagnostics>,
    /// Kept rows `Θ_t` (TrimTIHT, when recorded).
    pub kept: Option<Vec<usize>>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub records: Vec<IterRecord>,
    pub status: RunStatus,
    /// `γλ` for KaczTIHT.
    pub gamma_lambda: Option<f64>,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_rel_err(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rel_err)
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum()
    }
}

/// Estimate plus its trace.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub estimate: DenseTensor,
    pub trace: RunTrace,
}

/// `Y = X + μ A*(b − A(X))` given the precomputed `A(X)`.
pub fn gradient_step(
    op: &dyn MeasurementOperator,
    x: &DenseTensor,
    residual: &[f64],
    mu: f64,
) -> Result<DenseTensor> {
    let mut y = x.clone();
    y.axpy(mu, &op.adjoint(residual)?);
    Ok(y)
}

/// One KaczTIHT epoch without the thresholding: `m` relaxed projections
/// in the order `perm`, then `U = X + λ(X_{m+1} − X)`.
///
/// Rows are used unscaled with `b` divided by the ensemble scale; the update
/// normalizes by the row norm, so the scale cancels. Zero rows are skipped.
pub fn kaczmarz_epoch(
    a: &MeasurementEnsemble,
    b: &[f64],
    x: &DenseTensor,
    perm: &[usize],
    gamma: f64,
    lambda: f64,
) -> DenseTensor {
    let inv_scale = 1.0 / a.scale();
    let mut z = x.clone();
    for &j in perm {
        let norm_sq = a.raw_row_norm_sq(j);
        if norm_sq == 0.0 {
            log::warn!("skipping zero measurement row {j}");
            continue;
        }
        let res = b[j] * inv_scale - a.raw_row_dot(j, z.data());
        a.raw_row_axpy(j, gamma * res / norm_sq, z.data_mut());
    }
    let mut u = x.clone();
    u.axpy(lambda, &z.sub(x));
    u
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

struct Monitor<'a> {
    truth: Option<&'a DenseTensor>,
    truth_norm: f64,
    b_norm: f64,
    tol: f64,
    divergence: f64,
}

impl Monitor<'_> {
    fn rel_err(&self, x: &DenseTensor) -> Option<f64> {
        self.truth.map(|t| {
            let d = x.distance(t);
            if self.truth_norm > 0.0 {
                d / self.truth_norm
            } else {
                d
            }
        })
    }

    fn rel_residual(&self, residual: f64) -> f64 {
        if self.b_norm > 0.0 {
            residual / self.b_norm
        } else {
            residual
        }
    }

    /// The quantity the stopping and divergence rules look at.
    fn progress(&self, rel_err: Option<f64>, residual: f64) -> f64 {
        rel_err.unwrap_or_else(|| self.rel_residual(residual))
    }
}

/// Runs `config.algorithm` on measurements `b = A(X*) + η`.
pub fn recover(
    b: &[f64],
    a: &MeasurementEnsemble,
    config: &RecoveryConfig,
    truth: Option<&DenseTensor>,
) -> Result<Recovery> {
    let m = a.m();
    if b.len() != m {
        return shape_err(format!("{} measurements for an ensemble with {m} rows", b.len()));
    }
    config.validate(m)?;
    config.rank.validate(a.dims())?;
    if let Some(t) = truth {
        if t.dims() != a.dims() {
            return shape_err(format!("truth dims {:?} do not match {:?}", t.dims(), a.dims()));
        }
    }
    let monitor = Monitor {
        truth,
        truth_norm: truth.map_or(0.0, DenseTensor::frob_norm),
        b_norm: norm(b),
        tol: config.success_tol,
        divergence: config.divergence_threshold,
    };
    let gamma = config.gamma.unwrap_or(a.domain_len() as f64 / m as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut perm: Vec<usize> = (0..m).collect();

    let mut x = DenseTensor::zeros(a.dims());
    let mut ax = a.apply(&x)?;
    let mut records = Vec::new();
    let mut status = RunStatus::MaxIters;

    for t in 1..=config.max_iters {
        let started = Instant::now();
        let mu = config.step_at(t);
        let residual: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();

        // Pre-thresholding point; the trimmed view is kept for diagnostics.
        let mut kept = None;
        let mut view = None;
        let y = match config.algorithm {
            Algorithm::Tiht => gradient_step(a, &x, &residual, mu)?,
            Algorithm::TrimTiht => {
                let v = a.trim(&residual, config.dropped_rows(m))?;
                let y = gradient_step(&v, &x, &v.restrict(&residual), mu)?;
                if config.record_kept {
                    kept = Some(v.kept().to_vec());
                }
                view = Some(v);
                y
            }
            Algorithm::KaczTiht => {
                perm.shuffle(&mut rng);
                kaczmarz_epoch(a, b, &x, &perm, gamma, config.lambda)
            }
        };

        if !y.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
        let x_next = threshold(&y, &config.rank, config.fit)?;
        let ax_next = a.apply(&x_next)?;
        let res_norm = b
            .iter()
            .zip(&ax_next)
            .map(|(bi, ai)| (ai - bi) * (ai - bi))
            .sum::<f64>()
            .sqrt();
        let rel_err = monitor.rel_err(&x_next);

        let diagnostics = match truth.filter(|_| config.diagnostics) {
            Some(truth) => {
                let (op, mu_t): (&dyn MeasurementOperator, f64) = match (&view, config.algorithm) {
                    (Some(v), _) => (v, mu),
                    (None, Algorithm::KaczTiht) => (a, 1.0),
                    (None, _) => (a, mu),
                };
                let r_t = x.sub(truth);
                let r_next = x_next.sub(truth);
                let mut d = diagnostics_step(op, &r_t, &r_next, &y, truth, mu_t)?;
                if config.algorithm == Algorithm::KaczTiht {
                    // The bound describes gradient steps, not Kaczmarz epochs.
                    d.alpha = None;
                    d.alpha_simplified = None;
                }
                if let (Some(budget), Some(xi)) = (config.xi_budget, d.xi) {
                    d.xi_within_budget = Some(xi <= budget);
                }
                Some(d)
            }
            None => None,
        };

        records.push(IterRecord {
            iter: t,
            rel_err,
            residual: res_norm,
            diagnostics,
            kept,
            seconds: if config.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
        x = x_next;
        ax = ax_next;

        let progress = monitor.progress(rel_err, res_norm);
        if !x.is_finite() || !progress.is_finite() || progress > monitor.divergence {
            status = RunStatus::Diverged;
            break;
        }
        if progress < monitor.tol {
            status = RunStatus::Converged;
            break;
        }
    }

    Ok(Recovery {
        estimate: x,
        trace: RunTrace {
            algorithm: config.algorithm,
            records,
            status,
            gamma_lambda: (config.algorithm == Algorithm::KaczTiht).then_some(gamma * config.lambda),
        },
    })
}

fn with_algorithm(config: &RecoveryConfig, algorithm: Algorithm) -> RecoveryConfig {
    RecoveryConfig {
        algorithm,
        ..config.clone()
    }
}

/// TIHT regardless of `config.algorithm`.
pub fn tiht(b: &[f64], a: &MeasurementEnsemble, config: &RecoveryConfig, truth: Option<&DenseTensor>) -> Result<Recovery> {
    recover(b, a, &with_algorithm(config, Algorithm::Tiht), truth)
}

/// TrimTIHT regardless of `config.algorithm`.
pub fn trim_tiht(
    b: &[f64],
    a: &MeasurementEnsemble,
    config: &RecoveryConfig,
    truth: Option<&DenseTensor>,
) -> Result<Recovery> {
    recover(b, a, &with_algorithm(config, Algorithm::TrimTiht), truth)
}

/// KaczTIHT regardless of `config.algorithm`.
pub fn kacz_tiht(
    b: &[f64],
    a: &MeasurementEnsemble,
    config: &RecoveryConfig,
    truth: Option<&DenseTensor>,
) -> Result<Recovery> {
    recover(b, a, &with_algorithm(config, Algorithm::KaczTiht), truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowrank::random_tucker;
    use crate::measure::RowDistribution;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn tucker_truth(dims: &[usize], ranks: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_tucker(dims, ranks, &mut rng).unwrap()
    }

    fn gaussian(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(dims, |_| StandardNormal.sample(&mut rng))
    }

    /// Dense ensemble whose raw rows are orthogonal with norm `√N`.
    fn orthogonal_rows(dims: &[usize], m: usize, seed: u64) -> MeasurementEnsemble {
        let n: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let mut rows = Vec::with_capacity(m * n);
        for j in 0..m {
            rows.extend(q.column(j).iter().map(|v| v * (n as f64).sqrt()));
        }
        MeasurementEnsemble::from_dense_rows(dims, rows, 1.0 / (m as f64).sqrt()).unwrap()
    }

    fn config(algorithm: Algorithm, ranks: &[usize]) -> RecoveryConfig {
        let mut c = RecoveryConfig::new(algorithm, RankSpec::Hosvd(ranks.to_vec()));
        c.record_time = false;
        c
    }

    #[test]
    fn zero_trim_is_bitwise_tiht() {
        let dims = [5, 5, 5];
        let truth = tucker_truth(&dims, &[2, 2, 2], 1);
        let a = MeasurementEnsemble::sample_dense(120, &dims, RowDistribution::Gaussian, 2).unwrap();
        let b = a.apply(&truth).unwrap();
        let mut c = config(Algorithm::Tiht, &[2, 2, 2]);
        c.max_iters = 15;
        c.diagnostics = true;
        let plain = tiht(&b, &a, &c, Some(&truth)).unwrap();
        let trimmed = trim_tiht(&b, &a, &c, Some(&truth)).unwrap();
        assert_eq!(plain.estimate.data(), trimmed.estimate.data());
        assert_eq!(plain.trace.records, trimmed.trace.records);
    }

    #[test]
    fn kaczmarz_epoch_on_orthogonal_rows_is_a_unit_gradient_step() {
        let dims = [3, 3, 2];
        let n = 18;
        let m = 12;
        let a = orthogonal_rows(&dims, m, 3);
        let truth = tucker_truth(&dims, &[2, 2, 1], 4);
        let b = a.apply(&truth).unwrap();
        let x = gaussian(&dims, 5);
        let ax = a.apply(&x).unwrap();
        let res: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let y = gradient_step(&a, &x, &res, 1.0).unwrap();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(6));
        let u = kaczmarz_epoch(&a, &b, &x, &perm, n as f64 / m as f64, 1.0);
        assert!(u.distance(&y) < 1e-10 * y.frob_norm());

        let spec = RankSpec::Hosvd(vec![2, 2, 1]);
        let ty = threshold(&y, &spec, FitOptions::default()).unwrap();
        let tu = threshold(&u, &spec, FitOptions::default()).unwrap();
        assert!(tu.distance(&ty) < 1e-8 * ty.frob_norm());
    }

    #[test]
    fn single_projection_lands_on_hyperplane() {
        let dims = [4, 3];
        let a = MeasurementEnsemble::sample_facesplit(7, &dims, RowDistribution::Gaussian, 8).unwrap();
        let b: Vec<f64> = (0..7).map(|j| j as f64 - 2.5).collect();
        let x = gaussian(&dims, 9);
        for j in 0..7 {
            let z = kaczmarz_epoch(&a, &b, &x, &[j], 1.0, 1.0);
            let lhs = a.scale() * a.raw_row_dot(j, z.data());
            assert!((lhs - b[j]).abs() < 1e-12 * (1.0 + b[j].abs()));
        }
    }

    #[test]
    fn kaczmarz_iterates_ignore_row_scaling() {
        let dims = [4, 4, 3];
        let a = MeasurementEnsemble::sample_dense(60, &dims, RowDistribution::Gaussian, 10).unwrap();
        let truth = tucker_truth(&dims, &[2, 2, 2], 11);
        let b = a.apply(&truth).unwrap();
        let c = 3.7;
        let rows: Vec<f64> = (0..60).flat_map(|j| a.row_tensor(j).into_data()).map(|v| v / a.scale() * c).collect();
        let scaled = MeasurementEnsemble::from_dense_rows(&dims, rows, a.scale()).unwrap();
        let bc: Vec<f64> = b.iter().map(|v| v * c).collect();
        let mut cfg = config(Algorithm::KaczTiht, &[2, 2, 2]);
        cfg.max_iters = 5;
        cfg.gamma = Some(1.0);
        let r1 = kacz_tiht(&b, &a, &cfg, Some(&truth)).unwrap();
        let r2 = kacz_tiht(&bc, &scaled, &cfg, Some(&truth)).unwrap();
        assert!(r1.estimate.distance(&r2.estimate) <= 1e-12 * r1.estimate.frob_norm().max(1.0) * 10.0);
    }

    #[test]
    fn zero_truth_converges_immediately() {
        let dims = [3, 4, 2];
        let a = MeasurementEnsemble::sample_dense(30, &dims, RowDistribution::Rademacher, 12).unwrap();
        let truth = DenseTensor::zeros(&dims);
        let b = vec![0.0; 30];
        for alg in [Algorithm::Tiht, Algorithm::TrimTiht, Algorithm::KaczTiht] {
            let mut c = config(alg, &[1, 1, 1]);
            c.m_trim = 3;
            let r = recover(&b, &a, &c, Some(&truth)).unwrap();
            assert_eq!(r.trace.status, RunStatus::Converged, "{alg}");
            assert_eq!(r.trace.iterations(), 1);
            assert!(r.estimate.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn isometry_has_unit_ratios() {
        let dims = [3, 2, 2];
        let a = orthogonal_rows(&dims, 12, 13);
        let r_t = gaussian(&dims, 14);
        let r_next = gaussian(&dims, 15);
        let truth = gaussian(&dims, 16);
        let y = gaussian(&dims, 17);
        let d = diagnostics_step(&a, &r_t, &r_next, &y, &truth, 1.0).unwrap();
        assert!((d.delta - 1.0).abs() < 1e-10);
        assert!((d.rho - 1.0).abs() < 1e-10);
    }

    #[test]
    fn repeated_residual_gives_one_dimensional_subspace() {
        let dims = [4, 3, 2];
        let a = MeasurementEnsemble::sample_dense(15, &dims, RowDistribution::Gaussian, 18).unwrap();
        let r = gaussian(&dims, 19);
        let truth = gaussian(&dims, 20);
        let y = gaussian(&dims, 21);
        let d = diagnostics_step(&a, &r, &r, &y, &truth, 0.5).unwrap();

        let ar = a.apply(&r).unwrap();
        let delta = dot(&ar, &ar) / r.inner(&r);
        let u = r.scaled(delta);
        let au = a.apply(&u).unwrap();
        let rho = dot(&au, &au) / u.inner(&u);
        assert!((d.delta - delta).abs() < 1e-12 * delta);
        assert!((d.rho - rho).abs() < 1e-10 * rho);
        assert!((d.rho - d.delta).abs() < 1e-10 * delta);
    }

    #[test]
    fn rho_dominates_delta() {
        let dims = [4, 3, 3];
        for seed in 0..20 {
            let a = MeasurementEnsemble::sample_dense(20, &dims, RowDistribution::Gaussian, seed).unwrap();
            let r_t = gaussian(&dims, 100 + seed);
            let r_next = gaussian(&dims, 200 + seed);
            let truth = gaussian(&dims, 300 + seed);
            let d = diagnostics_step(&a, &r_t, &r_next, &r_next, &truth, 1.0).unwrap();
            assert!(d.rho >= d.delta * (1.0 - 1e-12), "seed {seed}: {} < {}", d.rho, d.delta);
        }
    }

    #[test]
    fn zero_residual_reports_converged() {
        let dims = [2, 2];
        let a = MeasurementEnsemble::sample_dense(3, &dims, RowDistribution::Gaussian, 22).unwrap();
        let z = DenseTensor::zeros(&dims);
        let d = diagnostics_step(&a, &z, &z, &z, &z, 1.0).unwrap();
        assert!(d.converged);
        assert!(d.delta.is_finite() && d.rho.is_finite());
    }

    #[test]
    fn alpha_bounds_observed_contraction() {
        let dims = [5, 5, 4];
        let truth = tucker_truth(&dims, &[2, 2, 2], 23);
        let a = MeasurementEnsemble::sample_dense(150, &dims, RowDistribution::Gaussian, 24).unwrap();
        let b = a.apply(&truth).unwrap();
        for alg in [Algorithm::Tiht, Algorithm::TrimTiht] {
            let mut c = config(alg, &[2, 2, 2]);
            c.m_trim = 10;
            c.max_iters = 20;
            c.diagnostics = true;
            let r = recover(&b, &a, &c, Some(&truth)).unwrap();
            for rec in &r.trace.records {
                let d = rec.diagnostics.unwrap();
                if d.converged {
                    continue;
                }
                assert!(d.contraction <= d.alpha.unwrap() + 1e-9, "{alg} iter {}: {d:?}", rec.iter);
            }
        }
    }

    #[test]
    fn recorded_kept_sets_match_recomputation() {
        let dims = [4, 4, 4];
        let truth = tucker_truth(&dims, &[2, 2, 2], 25);
        let a = MeasurementEnsemble::sample_dense(90, &dims, RowDistribution::Gaussian, 26).unwrap();
        let b = a.apply(&truth).unwrap();
        let mut c = config(Algorithm::TrimTiht, &[2, 2, 2]);
        c.m_trim = 9;
        c.max_iters = 4;
        c.success_tol = 1e-300;
        c.record_kept = true;
        let full = trim_tiht(&b, &a, &c, Some(&truth)).unwrap();
        for t in 1..=4 {
            let x_prev = if t == 1 {
                DenseTensor::zeros(&dims)
            } else {
                let mut short = c.clone();
                short.max_iters = t - 1;
                trim_tiht(&b, &a, &short, Some(&truth)).unwrap().estimate
            };
            let ax = a.apply(&x_prev).unwrap();
            let scores: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
            let view = a.trim(&scores, 9).unwrap();
            assert_eq!(full.trace.records[t - 1].kept.as_deref(), Some(view.kept()));
        }
    }

    #[test]
    fn keep_smallest_convention_keeps_m_trim_rows() {
        let dims = [3, 3, 3];
        let truth = tucker_truth(&dims, &[1, 1, 1], 27);
        let a = MeasurementEnsemble::sample_dense(40, &dims, RowDistribution::Gaussian, 28).unwrap();
        let b = a.apply(&truth).unwrap();
        let mut c = config(Algorithm::TrimTiht, &[1, 1, 1]);
        c.trim_convention = TrimConvention::KeepSmallest;
        c.m_trim = 30;
        c.max_iters = 2;
        c.record_kept = true;
        let r = trim_tiht(&b, &a, &c, Some(&truth)).unwrap();
        assert_eq!(r.trace.records[0].kept.as_ref().unwrap().len(), 30);
    }

    #[test]
    fn dense_gaussian_recovery_succeeds_on_most_seeds() {
        let dims = [8, 8, 8];
        let mut wins = 0;
        for seed in 0..20 {
            let truth = tucker_truth(&dims, &[2, 2, 2], 1000 + seed);
            let a = MeasurementEnsemble::sample_dense(300, &dims, RowDistribution::Gaussian, 2000 + seed).unwrap();
            let b = a.apply(&truth).unwrap();
            let mut c = config(Algorithm::Tiht, &[2, 2, 2]);
            c.max_iters = 300;
            let r = tiht(&b, &a, &c, Some(&truth)).unwrap();
            if r.trace.final_rel_err().unwrap() < 1e-4 {
                wins += 1;
            }
        }
        assert!(wins >= 16, "{wins}/20 recovered");
    }

    #[test]
    fn large_step_is_flagged_as_divergence() {
        let dims = [4, 4];
        let truth = tucker_truth(&dims, &[1, 1], 29);
        let a = MeasurementEnsemble::sample_dense(10, &dims, RowDistribution::Gaussian, 30).unwrap();
        let b = a.apply(&truth).unwrap();
        let mut c = config(Algorithm::Tiht, &[2, 2]);
        c.step = 50.0;
        c.max_iters = 500;
        let r = tiht(&b, &a, &c, Some(&truth)).unwrap();
        assert_eq!(r.trace.status, RunStatus::Diverged);
        assert!(!r.trace.records.is_empty());
    }

    #[test]
    fn step_function_overrides_constant_step() {
        let dims = [3, 3];
        let truth = tucker_truth(&dims, &[1, 1], 31);
        let a = MeasurementEnsemble::sample_dense(12, &dims, RowDistribution::Gaussian, 32).unwrap();
        let b = a.apply(&truth).unwrap();
        let mut c = config(Algorithm::Tiht, &[1, 1]);
        c.max_iters = 3;
        let constant = tiht(&b, &a, &c, Some(&truth)).unwrap();
        c.step = 0.3;
        c.step_fn = Some(Arc::new(|_| 1.0));
        let via_fn = tiht(&b, &a, &c, Some(&truth)).unwrap();
        assert_eq!(constant.estimate, via_fn.estimate);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let dims = [3, 3];
        let a = MeasurementEnsemble::sample_dense(5, &dims, RowDistribution::Gaussian, 33).unwrap();
        let b = vec![0.0; 5];
        let mut c = config(Algorithm::TrimTiht, &[1, 1]);
        c.m_trim = 5;
        assert!(matches!(recover(&b, &a, &c, None), Err(crate::Error::Config(_))));
        c.m_trim = 0;
        assert!(matches!(recover(&b[..4], &a, &c, None), Err(crate::Error::Shape(_))));
        c.step = -1.0;
        assert!(matches!(recover(&b, &a, &c, None), Err(crate::Error::Config(_))));
    }

    #[test]
    fn kaczmarz_logs_gamma_lambda_and_no_alpha() {
        let dims = [4, 4, 4];
        let truth = tucker_truth(&dims, &[2, 2, 2], 34);
        let a = MeasurementEnsemble::sample_facesplit(200, &dims, RowDistribution::Gaussian, 35).unwrap();
        let b = a.apply(&truth).unwrap();
        let mut c = config(Algorithm::KaczTiht, &[2, 2, 2]);
        c.max_iters = 3;
        c.diagnostics = true;
        c.lambda = 0.5;
        let r = kacz_tiht(&b, &a, &c, Some(&truth)).unwrap();
        assert_eq!(r.trace.gamma_lambda, Some(64.0 / 200.0 * 0.5));
        for rec in &r.trace.records {
            let d = rec.diagnostics.unwrap();
            assert!(d.alpha.is_none() && d.xi.is_some());
        }
    }

    #[test]
    fn xi_budget_matches_closed_form() {
        let v = xi_budget_from_rip(0.5, 2.0);
        let sigma: f64 = 1.5 + 2.0 * 1.5f64.sqrt();
        assert!((v - 0.25 / (5.0 * sigma * sigma)).abs() < 1e-15);
    }

    #[test]
    fn power_iteration_finds_spectral_norm() {
        let dims = [3, 2, 2];
        let a = orthogonal_rows(&dims, 12, 36);
        let est = estimate_operator_norm(&a, 20, 37).unwrap();
        assert!((est - 1.0).abs() < 1e-10);
    }
}
