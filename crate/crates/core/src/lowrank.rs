//! Rank thresholding operators.
//!
//! `threshold` is the projection step of every recovery algorithm: HOSVD
//! ranks go through HOOI (initialized by ST-HOSVD), CP ranks through
//! alternating least squares. Both are best-effort; the realized
//! approximation quality is measured by the recovery diagnostics rather than
//! assumed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{config_err, shape_err, Result};
use crate::tensor::{outer_accumulate, DenseTensor};

/// Target rank of the thresholding operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RankSpec {
    /// Multilinear (Tucker/HOSVD) rank `(r_1, …, r_d)`.
    Hosvd(Vec<usize>),
    /// CP rank `r`.
    Cp(usize),
}

impl RankSpec {
    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        match self {
            RankSpec::Hosvd(ranks) => {
                if ranks.len() != dims.len() {
                    return shape_err(format!(
                        "HOSVD rank {ranks:?} has {} entries, tensor has {} modes",
                        ranks.len(),
                        dims.len()
                    ));
                }
                for (k, (&r, &n)) in ranks.iter().zip(dims).enumerate() {
                    if r == 0 {
                        return config_err(format!("mode-{k} rank must be at least 1"));
                    }
                    if r > n {
                        return shape_err(format!("mode-{k} rank {r} exceeds dimension {n}"));
                    }
                }
                Ok(())
            }
            RankSpec::Cp(0) => config_err("CP rank must be at least 1"),
            RankSpec::Cp(_) => Ok(()),
        }
    }
}

/// Tucker decomposition with orthonormal factor columns.
#[derive(Debug, Clone)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    /// `U_k`, shape `n_k × r_k`.
    pub factors: Vec<DMatrix<f64>>,
}

impl TuckerFactors {
    /// `core ×_1 U_1 ×_2 … ×_d U_d`
    pub fn reconstruct(&self) -> DenseTensor {
        self.factors
            .iter()
            .enumerate()
            .fold(self.core.clone(), |acc, (k, u)| {
                acc.mode_product(u, k).expect("factor shapes match the core")
            })
    }
}

/// CP decomposition `Σ_c w_c · a_{1c} ∘ … ∘ a_{dc}` with unit-norm columns.
#[derive(Debug, Clone)]
pub struct CpFactors {
    pub weights: Vec<f64>,
    /// Mode-k factor matrix, shape `n_k × r`.
    pub factors: Vec<DMatrix<f64>>,
}

impl CpFactors {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn reconstruct(&self) -> DenseTensor {
        let mut out = DenseTensor::zeros(&self.dims());
        for (c, &w) in self.weights.iter().enumerate() {
            let cols: Vec<Vec<f64>> = self
                .factors
                .iter()
                .map(|f| f.column(c).iter().copied().collect())
                .collect();
            let slices: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
            outer_accumulate(out.data_mut(), w, &slices);
        }
        out
    }
}

/// Fitting error `‖T − T̂‖_F` after initialization (`errors[0]`) and after each sweep.
#[derive(Debug, Clone, Default)]
pub struct FitReport {
    pub errors: Vec<f64>,
}

impl FitReport {
    pub fn sweeps(&self) -> usize {
        self.errors.len().saturating_sub(1)
    }

    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(0.0)
    }
}

/// Sweep budget, stopping tolerance and seed for the iterative fitters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_sweeps: usize,
    /// Stop once the fitting error changes by less than `tol · ‖T‖_F` in a sweep.
    pub tol: f64,
    /// Only used by CP-ALS for columns the SVD initialization cannot supply.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 50,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Leading `r` left singular vectors of `mat`, completed to `r` orthonormal
/// columns when the matrix has fewer nonzero singular directions.
pub(crate) fn leading_left_singular_vectors(mat: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let n = mat.nrows();
    assert!(r <= n, "cannot take {r} orthonormal columns in R^{n}");
    let svd = mat.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    // Stable, so equal singular values keep the routine's order.
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
    let smax = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    let cutoff = smax * 1e-13 * (n.max(mat.ncols()) as f64);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(r);
    for &i in order.iter().take(r) {
        if sv[i] <= cutoff || sv[i] == 0.0 {
            break;
        }
        cols.push(u.column(i).into_owned());
    }
    complete_orthonormal(&mut cols, n, r);
    DMatrix::from_columns(&cols)
}

/// Extends `cols` to `r` orthonormal vectors using coordinate axes.
fn complete_orthonormal(cols: &mut Vec<DVector<f64>>, n: usize, r: usize) {
    let mut axis = 0;
    while cols.len() < r && axis < n {
        let mut v = DVector::zeros(n);
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for c in cols.iter() {
                let p = c.dot(&v);
                v.axpy(-p, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
}

/// Sequentially truncated HOSVD.
pub fn st_hosvd(t: &DenseTensor, ranks: &[usize]) -> Result<TuckerFactors> {
    RankSpec::Hosvd(ranks.to_vec()).validate(t.dims())?;
    let mut core = t.clone();
    let mut factors = Vec::with_capacity(ranks.len());
    for (k, &r) in ranks.iter().enumerate() {
        let u = leading_left_singular_vectors(&core.unfold(k)?, r);
        core = core.mode_product(&u.transpose(), k)?;
        factors.push(u);
    }
    Ok(TuckerFactors { core, factors })
}

fn project_all_but(t: &DenseTensor, factors: &[DMatrix<f64>], skip: usize) -> Result<DenseTensor> {
    let mut z = t.clone();
    for (j, u) in factors.iter().enumerate() {
        if j != skip {
            z = z.mode_product(&u.transpose(), j)?;
        }
    }
    Ok(z)
}

/// Higher-order orthogonal iteration, initialized from [`st_hosvd`].
pub fn hooi(t: &DenseTensor, ranks: &[usize], opts: FitOptions) -> Result<(TuckerFactors, FitReport)> {
    let mut tucker = st_hosvd(t, ranks)?;
    let norm = t.frob_norm();
    let mut report = FitReport {
        errors: vec![tucker.reconstruct().distance(t)],
    };
    if norm == 0.0 {
        return Ok((tucker, report));
    }
    for _ in 0..opts.max_sweeps {
        for (k, &r) in ranks.iter().enumerate() {
            let z = project_all_but(t, &tucker.factors, k)?;
            tucker.factors[k] = leading_left_singular_vectors(&z.unfold(k)?, r);
        }
        tucker.core = project_all_but(t, &tucker.factors, usize::MAX)?;
        let err = tucker.reconstruct().distance(t);
        let prev = *report.errors.last().expect("initial error recorded");
        report.errors.push(err);
        if (prev - err).abs() < opts.tol * norm {
            break;
        }
    }
    Ok((tucker, report))
}

/// Khatri–Rao product of every factor except `skip`, rows enumerating the
/// remaining modes in storage order (matching the columns of `unfold(skip)`).
fn khatri_rao_except(factors: &[DMatrix<f64>], skip: usize) -> DMatrix<f64> {
    let r = factors[0].ncols();
    let others: Vec<&DMatrix<f64>> = factors
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, f)| f)
        .collect();
    let rows: usize = others.iter().map(|f| f.nrows()).product();
    let mut kr = DMatrix::from_element(rows, r, 1.0);
    let mut block = rows;
    for f in others {
        let n = f.nrows();
        block /= n;
        for row in 0..rows {
            let i = (row / block) % n;
            for c in 0..r {
                kr[(row, c)] *= f[(i, c)];
            }
        }
    }
    kr
}

fn solve_gram(gram: &DMatrix<f64>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let r = gram.nrows();
    let svd = gram.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(rhs.nrows(), r);
    }
    // Directions below the cutoff are dropped rather than damped, so
    // well-posed solves carry no regularization bias.
    let pinv = svd.pseudo_inverse(1e-13 * smax).expect("both factors computed");
    rhs * pinv
}

/// Factors with the weights folded into the last mode, so two iterates can
/// be compared and extrapolated directly.
fn absorbed(cp: &CpFactors) -> Vec<DMatrix<f64>> {
    let mut out = cp.factors.clone();
    if let Some(last) = out.last_mut() {
        for (c, w) in cp.weights.iter().enumerate() {
            last.column_mut(c).scale_mut(*w);
        }
    }
    out
}

fn from_absorbed(mut factors: Vec<DMatrix<f64>>) -> (CpFactors, Vec<DMatrix<f64>>, Vec<f64>) {
    let rank = factors[0].ncols();
    let mut weights = vec![1.0; rank];
    for f in factors.iter_mut() {
        for (w, n) in weights.iter_mut().zip(normalize_columns(f)) {
            *w *= n;
        }
    }
    let cp = CpFactors {
        weights: weights.clone(),
        factors: factors.clone(),
    };
    (cp, factors, weights)
}

fn normalize_columns(f: &mut DMatrix<f64>) -> Vec<f64> {
    (0..f.ncols())
        .map(|c| {
            let norm = f.column(c).norm();
            if norm > 0.0 {
                f.column_mut(c).scale_mut(1.0 / norm);
            }
            norm
        })
        .collect()
}

const LINE_SEARCH_DOUBLINGS: usize = 8;

/// CP alternating least squares.
///
/// Factors start from the leading left singular vectors of each unfolding;
/// columns beyond the unfolding's numerical rank are seeded Gaussian. Each
/// least-squares solve uses the Gram pseudo-inverse, truncated at `1e-13`
/// relative to its largest singular value.
/// After each sweep the extrapolation `F + s(F − F_prev)` is tried with
/// `s = sweep^{1/3}`, doubling `s` while the error keeps dropping; a step is
/// kept only when it lowers the error, so the error sequence stays
/// nonincreasing. This shortens the slow stretches plain ALS shows on nearly
/// collinear factors.
pub fn cp_als(t: &DenseTensor, rank: usize, opts: FitOptions) -> Result<(CpFactors, FitReport)> {
    RankSpec::Cp(rank).validate(t.dims())?;
    let d = t.ndim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let n = t.dims()[k];
        let take = rank.min(n);
        let svd_cols = leading_left_singular_vectors(&t.unfold(k)?, take);
        let svd_rank = numerical_column_count(&t.unfold(k)?, take);
        let mut f = DMatrix::zeros(n, rank);
        for c in 0..rank {
            if c < svd_rank {
                f.set_column(c, &svd_cols.column(c));
            } else {
                for i in 0..n {
                    f[(i, c)] = rng.sample(StandardNormal);
                }
            }
        }
        factors.push(f);
    }

    let norm = t.frob_norm();
    let mut weights = vec![1.0; rank];
    let mut cp = CpFactors {
        weights: weights.clone(),
        factors: factors.clone(),
    };
    let mut report = FitReport {
        errors: vec![cp.reconstruct().distance(t)],
    };
    let unfoldings: Vec<DMatrix<f64>> = (0..d).map(|k| t.unfold(k)).collect::<Result<_>>()?;
    let mut previous: Option<Vec<DMatrix<f64>>> = None;
    for sweep in 1..=opts.max_sweeps {
        for k in 0..d {
            let mut gram = DMatrix::from_element(rank, rank, 1.0);
            for (j, f) in factors.iter().enumerate() {
                if j != k {
                    gram.component_mul_assign(&(f.transpose() * f));
                }
            }
            let mttkrp = &unfoldings[k] * khatri_rao_except(&factors, k);
            factors[k] = solve_gram(&gram, &mttkrp);
            weights = normalize_columns(&mut factors[k]);
        }
        cp = CpFactors {
            weights: weights.clone(),
            factors: factors.clone(),
        };
        let mut err = cp.reconstruct().distance(t);
        let current = absorbed(&cp);
        // Line search along the last sweep's direction; kept only if it helps.
        if let Some(prev) = previous.as_ref() {
            let mut step = (sweep as f64).cbrt();
            for _ in 0..LINE_SEARCH_DOUBLINGS {
                let trial: Vec<DMatrix<f64>> = current.iter().zip(prev).map(|(c, p)| c + (c - p) * step).collect();
                let (trial_cp, trial_factors, trial_weights) = from_absorbed(trial);
                let trial_err = trial_cp.reconstruct().distance(t);
                if !(trial_err < err) {
                    break;
                }
                err = trial_err;
                cp = trial_cp;
                factors = trial_factors;
                weights = trial_weights;
                step *= 2.0;
            }
        }
        previous = Some(absorbed(&cp));
        let prev = *report.errors.last().expect("initial error recorded");
        report.errors.push(err);
        if norm == 0.0 || (prev - err).abs() < opts.tol * norm {
            break;
        }
    }
    Ok((cp, report))
}

fn numerical_column_count(mat: &DMatrix<f64>, r: usize) -> usize {
    let sv = mat.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * 1e-13 * (mat.nrows().max(mat.ncols()) as f64);
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count().min(r)
}

/// Rank-`spec` approximation `T_r(T)`: HOOI for HOSVD ranks, CP-ALS for CP ranks.
pub fn threshold(t: &DenseTensor, spec: &RankSpec, opts: FitOptions) -> Result<DenseTensor> {
    spec.validate(t.dims())?;
    match spec {
        RankSpec::Hosvd(ranks) => Ok(hooi(t, ranks, opts)?.0.reconstruct()),
        RankSpec::Cp(r) => Ok(cp_als(t, *r, opts)?.0.reconstruct()),
    }
}

fn shifted_gaussian(rng: &mut impl Rng) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    g + Uniform::new(0.0, 2.0).sample(rng)
}

/// Random low HOSVD-rank tensor: core entries `N(0,1) + Unif(0,2)`, factors the
/// top-`r_k` left singular vectors of an `n_k × n_k` matrix with the same
/// entry distribution.
pub fn random_tucker(dims: &[usize], ranks: &[usize], rng: &mut impl Rng) -> Result<DenseTensor> {
    RankSpec::Hosvd(ranks.to_vec()).validate(dims)?;
    let core = DenseTensor::from_fn(ranks, |_| shifted_gaussian(rng));
    let factors = dims
        .iter()
        .zip(ranks)
        .map(|(&n, &r)| {
            let m = DMatrix::from_fn(n, n, |_, _| shifted_gaussian(rng));
            leading_left_singular_vectors(&m, r)
        })
        .collect();
    Ok(TuckerFactors { core, factors }.reconstruct())
}

/// Random CP-rank-`r` tensor with factor entries drawn from `N(0.1, 1)`.
pub fn random_cp(dims: &[usize], rank: usize, rng: &mut impl Rng) -> Result<DenseTensor> {
    RankSpec::Cp(rank).validate(dims)?;
    let factors = dims
        .iter()
        .map(|&n| {
            DMatrix::from_fn(n, rank, |_, _| {
                let g: f64 = rng.sample(StandardNormal);
                0.1 + g
            })
        })
        .collect();
    Ok(CpFactors {
        weights: vec![1.0; rank],
        factors,
    }
    .reconstruct())
}

/// Draws a random tensor of the given rank using the matching generator above.
pub fn random_low_rank(dims: &[usize], spec: &RankSpec, rng: &mut impl Rng) -> Result<DenseTensor> {
    match spec {
        RankSpec::Hosvd(r) => random_tucker(dims, r, rng),
        RankSpec::Cp(r) => random_cp(dims, *r, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gaussian_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        DenseTensor::from_fn(dims, |_| rng.sample(StandardNormal))
    }

    fn assert_orthonormal(u: &DMatrix<f64>) {
        let gram = u.transpose() * u;
        let id = DMatrix::identity(u.ncols(), u.ncols());
        assert!((gram - id).abs().max() < 1e-10);
    }

    /// Largest tail energy over the mode unfoldings: a lower bound on the best
    /// rank-`ranks` approximation error.
    fn unfolding_tail_bound(t: &DenseTensor, ranks: &[usize]) -> f64 {
        (0..t.ndim())
            .map(|k| {
                let mut sv: Vec<f64> = t.unfold(k).unwrap().singular_values().iter().copied().collect();
                sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
                sv[ranks[k]..].iter().map(|s| s * s).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn rank_spec_validation() {
        assert!(RankSpec::Hosvd(vec![2, 2]).validate(&[3, 3, 3]).is_err());
        assert!(RankSpec::Hosvd(vec![4, 2, 2]).validate(&[3, 3, 3]).is_err());
        assert!(RankSpec::Hosvd(vec![0, 2, 2]).validate(&[3, 3, 3]).is_err());
        assert!(RankSpec::Cp(0).validate(&[3, 3]).is_err());
        assert!(RankSpec::Cp(7).validate(&[3, 3]).is_ok());
    }

    #[test]
    fn st_hosvd_exact_rank_and_full_rank() {
        let mut g = rng(1);
        let t = random_tucker(&[6, 5, 4], &[2, 2, 2], &mut g).unwrap();
        let tf = st_hosvd(&t, &[2, 2, 2]).unwrap();
        tf.factors.iter().for_each(assert_orthonormal);
        assert!(tf.reconstruct().distance(&t) < 1e-10 * t.frob_norm());

        let full = gaussian_tensor(&[4, 3, 5], &mut g);
        let tf = st_hosvd(&full, &[4, 3, 5]).unwrap();
        assert!(tf.reconstruct().distance(&full) < 1e-12 * full.frob_norm());
        assert!(st_hosvd(&full, &[5, 3, 5]).is_err());
    }

    #[test]
    fn st_hosvd_is_sqrt_d_quasi_optimal() {
        let mut g = rng(2);
        for _ in 0..20 {
            let t = gaussian_tensor(&[6, 6, 6], &mut g);
            let err = st_hosvd(&t, &[3, 3, 3]).unwrap().reconstruct().distance(&t);
            let lower = unfolding_tail_bound(&t, &[3, 3, 3]);
            assert!(err <= 3f64.sqrt() * lower + 1e-12, "{err} vs {lower}");
        }
    }

    #[test]
    fn hooi_exact_rank_one_sweep() {
        let mut g = rng(3);
        let t = random_tucker(&[7, 6, 5], &[2, 3, 2], &mut g).unwrap();
        let opts = FitOptions { max_sweeps: 1, ..Default::default() };
        let (tf, report) = hooi(&t, &[2, 3, 2], opts).unwrap();
        tf.factors.iter().for_each(assert_orthonormal);
        assert!(report.final_error() < 1e-10 * t.frob_norm());
    }

    #[test]
    fn hooi_improves_on_st_hosvd_and_is_monotone() {
        let mut g = rng(4);
        for _ in 0..5 {
            let mut t = random_tucker(&[8, 8, 8], &[2, 2, 2], &mut g).unwrap();
            let noise = gaussian_tensor(&[8, 8, 8], &mut g);
            t.axpy(1e-3 * t.frob_norm() / noise.frob_norm(), &noise);
            let st_err = st_hosvd(&t, &[2, 2, 2]).unwrap().reconstruct().distance(&t);
            let (tf, report) = hooi(&t, &[2, 2, 2], FitOptions::default()).unwrap();
            assert!(tf.reconstruct().distance(&t) <= st_err + 1e-12);
            for w in report.errors.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", report.errors);
            }
        }
        // Pure noise exercises more sweeps.
        let t = gaussian_tensor(&[6, 6, 6], &mut g);
        let (_, report) = hooi(&t, &[2, 2, 2], FitOptions { max_sweeps: 30, tol: 0.0, seed: 0 }).unwrap();
        for w in report.errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn hooi_handles_rank_above_partial_unfolding_rank() {
        let mut g = rng(5);
        let t = gaussian_tensor(&[5, 2, 2], &mut g);
        let (tf, _) = hooi(&t, &[5, 1, 1], FitOptions::default()).unwrap();
        tf.factors.iter().for_each(assert_orthonormal);
    }

    #[test]
    fn cp_als_recovers_exact_rank_two() {
        let mut g = rng(6);
        let a = DMatrix::from_column_slice(4, 2, &[1.0, 0.2, -0.3, 0.5, 0.1, 1.0, 0.4, -0.6]);
        let b = DMatrix::from_column_slice(5, 2, &[0.8, -0.1, 0.3, 0.9, 0.2, -0.5, 1.0, 0.1, 0.2, 0.7]);
        let c = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, -1.0]);
        let t = CpFactors { weights: vec![3.0, 1.5], factors: vec![a, b, c] }.reconstruct();
        let opts = FitOptions { max_sweeps: 100, tol: 1e-14, seed: g.gen() };
        let (cp, _) = cp_als(&t, 2, opts).unwrap();
        assert!(cp.reconstruct().distance(&t) < 1e-6 * t.frob_norm());
    }

    #[test]
    fn cp_als_rank_one_on_rank_one() {
        let mut g = rng(7);
        let t = random_cp(&[4, 5, 6], 1, &mut g).unwrap();
        let (cp, _) = cp_als(&t, 1, FitOptions::default()).unwrap();
        assert!(cp.reconstruct().distance(&t) < 1e-8 * t.frob_norm());
    }

    #[test]
    fn cp_als_is_deterministic_and_nonincreasing() {
        let mut g = rng(8);
        let t = gaussian_tensor(&[4, 4, 4], &mut g);
        // Rank above every unfolding rank forces the seeded Gaussian columns.
        let opts = FitOptions { max_sweeps: 40, tol: 0.0, seed: 99 };
        let (a, ra) = cp_als(&t, 5, opts).unwrap();
        let (b, rb) = cp_als(&t, 5, opts).unwrap();
        assert_eq!(ra.errors, rb.errors);
        assert_eq!(a.factors, b.factors);
        for w in ra.errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-8) + 1e-12, "{:?}", ra.errors);
        }
    }

    #[test]
    fn threshold_is_idempotent_on_feasible_set_and_maps_zero_to_zero() {
        let mut g = rng(9);
        let t = random_tucker(&[6, 6, 6], &[2, 2, 2], &mut g).unwrap();
        let spec = RankSpec::Hosvd(vec![2, 2, 2]);
        let out = threshold(&t, &spec, FitOptions::default()).unwrap();
        assert!(out.distance(&t) < 1e-8 * t.frob_norm());

        let c = random_cp(&[5, 5, 5], 2, &mut g).unwrap();
        let out = threshold(&c, &RankSpec::Cp(2), FitOptions { max_sweeps: 200, tol: 1e-14, seed: 1 }).unwrap();
        assert!(out.distance(&c) < 1e-8 * c.frob_norm());

        let z = DenseTensor::zeros(&[4, 4, 4]);
        assert_eq!(threshold(&z, &spec, FitOptions::default()).unwrap(), z);
        assert_eq!(threshold(&z, &RankSpec::Cp(2), FitOptions::default()).unwrap(), z);
    }

    #[test]
    fn xi_audit_on_perturbed_low_rank() {
        let mut g = rng(10);
        let spec = RankSpec::Hosvd(vec![2, 2, 2]);
        for _ in 0..10 {
            let x = random_tucker(&[8, 8, 8], &[2, 2, 2], &mut g).unwrap();
            let noise = gaussian_tensor(&[8, 8, 8], &mut g);
            let y = x.add(&noise.scaled(0.05 * x.frob_norm() / noise.frob_norm()));
            let ty = threshold(&y, &spec, FitOptions::default()).unwrap();
            let xi = ty.distance(&y) / y.distance(&x) - 1.0;
            assert!(xi <= 1e-6, "xi = {xi}");
        }
    }

    #[test]
    fn random_generators_have_requested_rank() {
        let mut g = rng(11);
        let t = random_tucker(&[6, 6, 6], &[2, 3, 2], &mut g).unwrap();
        for (k, &r) in [2usize, 3, 2].iter().enumerate() {
            let sv = t.unfold(k).unwrap().singular_values();
            let big = sv.iter().filter(|&&s| s > 1e-10 * t.frob_norm()).count();
            assert_eq!(big, r);
        }
        let c = random_cp(&[6, 6, 6], 3, &mut g).unwrap();
        let sv = c.unfold(0).unwrap().singular_values();
        assert_eq!(sv.iter().filter(|&&s| s > 1e-10 * c.frob_norm()).count(), 3);
    }
}
