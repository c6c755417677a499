//! Linear measurement ensembles `A: R^{n_1×…×n_d} → R^m`.
//!
//! Two storage variants share one interface:
//!
//! * **Dense**: an explicit `m × N` matrix of raw entries (`N = Π n_i`).
//! * **Face-splitting**: `d` factor matrices `A_i ∈ R^{m×n_i}`; row `j` of the
//!   operator is `a_{1j}ᵀ ⊗ … ⊗ a_{dj}ᵀ`, never materialized. Memory is
//!   `m · Σ n_i` floats instead of `m · Π n_i`.
//!
//! The normalization `1/√m` is stored in the ensemble and applied by
//! [`MeasurementOperator::apply`] / [`MeasurementOperator::adjoint`], so the
//! recovery algorithms use unit step size. Raw (unscaled) rows are available
//! for Kaczmarz sweeps, which are invariant to row scaling.
//!
//! [`MeasurementEnsemble::trim`] builds the data-driven trimmed operator: the
//! rows with the largest `|score|` are dropped and the rest rescaled by
//! `√(m/(m − m_trim))`.

use nalgebra::{DMatrix, DMatrixView, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{config_err, shape_err, Error, Result};
use crate::tensor::{dot, kron_contract_slices, outer_accumulate, DenseTensor};

/// Default entry cap for [`MeasurementEnsemble::materialize`].
pub const DEFAULT_MATERIALIZE_CAP: usize = 10_000_000;

/// Entry distribution of the raw measurement rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowDistribution {
    /// i.i.d. `N(0, 1)`.
    Gaussian,
    /// i.i.d. uniform `±1`.
    Rademacher,
    /// Gaussian rows renormalized to norm `√len`: `√N` for dense rows and
    /// `√n_i` for each face-splitting factor row (so Kronecker rows also have
    /// norm `√N`).
    UniformSphere,
}

impl RowDistribution {
    pub fn fill_row(self, row: &mut [f64], rng: &mut ChaCha8Rng) {
        match self {
            RowDistribution::Gaussian => row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            RowDistribution::Rademacher => {
                row.iter_mut()
                    .for_each(|v| *v = if rng.gen::<bool>() { 1.0 } else { -1.0 })
            }
            RowDistribution::UniformSphere => {
                row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let norm = dot(row, row).sqrt();
                let target = (row.len() as f64).sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v *= target / norm);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    /// Raw rows, row-major `m × N`.
    Dense(Vec<f64>),
    /// Raw factor matrices, each row-major `m × n_i`.
    FaceSplit(Vec<Vec<f64>>),
}

/// Common interface of full and trimmed measurement operators.
pub trait MeasurementOperator {
    /// Tensor domain dimensions.
    fn dims(&self) -> &[usize];
    /// Number of measurements produced by `apply`.
    fn rows(&self) -> usize;
    fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>>;
    fn adjoint(&self, v: &[f64]) -> Result<DenseTensor>;
}

/// A sampled (or user-supplied) linear measurement map.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    dims: Vec<usize>,
    m: usize,
    scale: f64,
    storage: Storage,
}

fn domain_size(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return shape_err(format!("invalid tensor dims {dims:?}"));
    }
    dims.iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))
}

impl MeasurementEnsemble {
    /// Dense ensemble with i.i.d. rows, scale `1/√m`.
    pub fn sample_dense(m: usize, dims: &[usize], dist: RowDistribution, seed: u64) -> Result<Self> {
        if m == 0 {
            return config_err("number of measurements must be at least 1");
        }
        let n = domain_size(dims)?;
        let total = m.checked_mul(n).filter(|&t| t <= isize::MAX as usize / 8).ok_or(
            Error::TooLarge {
                requested: m.saturating_mul(n),
                cap: isize::MAX as usize / 8,
            },
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![0.0; total];
        for row in rows.chunks_exact_mut(n) {
            dist.fill_row(row, &mut rng);
        }
        Ok(Self {
            dims: dims.to_vec(),
            m,
            scale: 1.0 / (m as f64).sqrt(),
            storage: Storage::Dense(rows),
        })
    }

    /// Face-splitting ensemble `(1/√m) A_1 • … • A_d`. Factors are drawn in mode
    /// order, each row by row, from one seeded stream; with `d = 1` this is the
    /// same stream as [`MeasurementEnsemble::sample_dense`].
    pub fn sample_facesplit(m: usize, dims: &[usize], dist: RowDistribution, seed: u64) -> Result<Self> {
        if m == 0 {
            return config_err("number of measurements must be at least 1");
        }
        domain_size(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors = dims
            .iter()
            .map(|&n| {
                let mut f = vec![0.0; m * n];
                for row in f.chunks_exact_mut(n) {
                    dist.fill_row(row, &mut rng);
                }
                f
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            m,
            scale: 1.0 / (m as f64).sqrt(),
            storage: Storage::FaceSplit(factors),
        })
    }

    /// Dense ensemble from explicit raw rows (row-major `m × N`) and a scale.
    pub fn from_dense_rows(dims: &[usize], rows: Vec<f64>, scale: f64) -> Result<Self> {
        let n = domain_size(dims)?;
        if rows.is_empty() || rows.len() % n != 0 {
            return shape_err(format!("{} raw entries is not a positive multiple of N = {n}", rows.len()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            m: rows.len() / n,
            scale,
            storage: Storage::Dense(rows),
        })
    }

    /// Face-splitting ensemble from explicit raw factors (each row-major `m × n_i`).
    pub fn from_facesplit_factors(dims: &[usize], factors: Vec<Vec<f64>>, scale: f64) -> Result<Self> {
        domain_size(dims)?;
        if factors.len() != dims.len() {
            return shape_err(format!("{} factors for {} modes", factors.len(), dims.len()));
        }
        let m = factors[0].len() / dims[0];
        if m == 0 {
            return shape_err("face-splitting factors have no rows");
        }
        for (f, &n) in factors.iter().zip(dims) {
            if f.len() != m * n {
                return shape_err(format!("factor of length {} is not {m} × {n}", f.len()));
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            m,
            scale,
            storage: Storage::FaceSplit(factors),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Normalization applied on top of the raw rows (`1/√m` when sampled).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn domain_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_facesplit(&self) -> bool {
        matches!(self.storage, Storage::FaceSplit(_))
    }

    /// Number of stored floats (the scale adds one).
    pub fn stored_float_count(&self) -> usize {
        1 + match &self.storage {
            Storage::Dense(rows) => rows.len(),
            Storage::FaceSplit(factors) => factors.iter().map(Vec::len).sum(),
        }
    }

    /// Raw row `j` of factor `mode` (face-splitting only).
    pub fn factor_row(&self, mode: usize, j: usize) -> Option<&[f64]> {
        match &self.storage {
            Storage::FaceSplit(factors) => {
                let n = self.dims[mode];
                Some(&factors[mode][j * n..(j + 1) * n])
            }
            Storage::Dense(_) => None,
        }
    }

    fn factor_rows<'s>(&self, factors: &'s [Vec<f64>], j: usize) -> Vec<&'s [f64]> {
        rows_of(factors, &self.dims, j)
    }

    /// `⟨raw row j, x⟩` for a row-major vectorized tensor `x`.
    pub fn raw_row_dot(&self, j: usize, x: &[f64]) -> f64 {
        match &self.storage {
            Storage::Dense(rows) => {
                let n = x.len();
                dot(&rows[j * n..(j + 1) * n], x)
            }
            Storage::FaceSplit(factors) => kron_contract_slices(x, &self.factor_rows(factors, j)),
        }
    }

    /// `x += coeff · raw row j`
    pub fn raw_row_axpy(&self, j: usize, coeff: f64, x: &mut [f64]) {
        match &self.storage {
            Storage::Dense(rows) => {
                let n = x.len();
                x.iter_mut()
                    .zip(&rows[j * n..(j + 1) * n])
                    .for_each(|(xi, a)| *xi += coeff * a);
            }
            Storage::FaceSplit(factors) => outer_accumulate(x, coeff, &self.factor_rows(factors, j)),
        }
    }

    /// `‖raw row j‖²`; for face-splitting rows the product of the factor row norms.
    pub fn raw_row_norm_sq(&self, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(rows) => {
                let n = self.domain_len();
                let r = &rows[j * n..(j + 1) * n];
                dot(r, r)
            }
            Storage::FaceSplit(factors) => self
                .factor_rows(factors, j)
                .iter()
                .map(|r| dot(r, r))
                .product(),
        }
    }

    /// Scaled row `j` as a tensor (`scale · a_j` reshaped).
    pub fn row_tensor(&self, j: usize) -> DenseTensor {
        let mut t = DenseTensor::zeros(&self.dims);
        self.raw_row_axpy(j, self.scale, t.data_mut());
        t
    }

    /// Explicit scaled `m × N` matrix, refusing anything above `cap` entries.
    pub fn materialize(&self, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.domain_len();
        let requested = self.m.saturating_mul(n);
        if requested > cap {
            return Err(Error::TooLarge { requested, cap });
        }
        let mut mat = DMatrix::zeros(self.m, n);
        let mut row = vec![0.0; n];
        for j in 0..self.m {
            row.iter_mut().for_each(|v| *v = 0.0);
            self.raw_row_axpy(j, self.scale, &mut row);
            for (c, &v) in row.iter().enumerate() {
                mat[(j, c)] = v;
            }
        }
        Ok(mat)
    }

    fn check_tensor(&self, t: &DenseTensor) -> Result<()> {
        if t.dims() != self.dims.as_slice() {
            return shape_err(format!(
                "tensor dims {:?} do not match ensemble domain {:?}",
                t.dims(),
                self.dims
            ));
        }
        Ok(())
    }

    /// Data-driven row trimming: keep the `m − m_trim` rows with the smallest
    /// `|scores|` (ties broken by lower index) and rescale them by
    /// `√(m/(m − m_trim))`.
    pub fn trim(&self, scores: &[f64], m_trim: usize) -> Result<TrimmedView<'_>> {
        if scores.len() != self.m {
            return shape_err(format!("{} scores for {} rows", scores.len(), self.m));
        }
        if m_trim >= self.m {
            return config_err(format!("m_trim = {m_trim} must be below m = {}", self.m));
        }
        let kept = smallest_abs_indices(scores, self.m - m_trim);
        Ok(TrimmedView {
            parent: self,
            rescale: (self.m as f64 / (self.m - m_trim) as f64).sqrt(),
            kept,
        })
    }
}

/// Row `j` of each factor; `dims[k]` is the row length of `factors[k]`.
fn rows_of<'s>(factors: &'s [Vec<f64>], dims: &[usize], j: usize) -> Vec<&'s [f64]> {
    factors
        .iter()
        .zip(dims)
        .map(|(f, &n)| &f[j * n..(j + 1) * n])
        .collect()
}

/// Indices of the `keep` smallest `|scores|`, ties to the lower index,
/// returned in ascending index order.
pub(crate) fn smallest_abs_indices(scores: &[f64], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .abs()
            .total_cmp(&scores[b].abs())
            .then(a.cmp(&b))
    });
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    kept
}

impl MeasurementOperator for MeasurementEnsemble {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn rows(&self) -> usize {
        self.m
    }

    fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>> {
        self.check_tensor(t)?;
        let n = self.domain_len();
        match &self.storage {
            Storage::Dense(rows) => {
                // Row-major m×N rows are a column-major N×m matrix, i.e. Aᵀ.
                let at = DMatrixView::from_slice(rows, n, self.m);
                let x = DVectorView::from_slice(t.data(), n);
                Ok(at.tr_mul(&x).iter().map(|v| v * self.scale).collect())
            }
            Storage::FaceSplit(factors) => {
                // Contract mode 1 for all rows at once with a GEMM, then the
                // remaining modes row by row.
                let n0 = self.dims[0];
                let rest = n / n0;
                let mt = DMatrixView::from_slice(t.data(), rest, n0);
                let a0t = DMatrixView::from_slice(&factors[0], n0, self.m);
                let partial = mt * a0t;
                let slab = partial.as_slice();
                Ok((0..self.m)
                    .map(|j| {
                        let col = &slab[j * rest..(j + 1) * rest];
                        let v = if factors.len() == 1 {
                            col[0]
                        } else {
                            kron_contract_slices(col, &rows_of(&factors[1..], &self.dims[1..], j))
                        };
                        v * self.scale
                    })
                    .collect())
            }
        }
    }

    fn adjoint(&self, v: &[f64]) -> Result<DenseTensor> {
        if v.len() != self.m {
            return shape_err(format!("adjoint input has length {}, expected {}", v.len(), self.m));
        }
        let n = self.domain_len();
        let data = match &self.storage {
            Storage::Dense(rows) => {
                let at = DMatrixView::from_slice(rows, n, self.m);
                let vv = DVectorView::from_slice(v, self.m);
                (at * vv).iter().map(|x| x * self.scale).collect()
            }
            Storage::FaceSplit(factors) => {
                let n0 = self.dims[0];
                let rest = n / n0;
                // Column j of `kt` is scale·v_j·(a_{2j} ⊗ … ⊗ a_{dj}).
                let mut kt = DMatrix::zeros(rest, self.m);
                let tail_dims = &self.dims[1..];
                for j in 0..self.m {
                    let c = self.scale * v[j];
                    let col = &mut kt.as_mut_slice()[j * rest..(j + 1) * rest];
                    if factors.len() == 1 {
                        col[0] = c;
                    } else {
                        outer_accumulate(col, c, &rows_of(&factors[1..], tail_dims, j));
                    }
                }
                let a0t = DMatrixView::from_slice(&factors[0], n0, self.m);
                // (rest × m)·(m × n0), column-major rest×n0 == row-major n0×rest.
                let out = kt * a0t.transpose();
                out.as_slice().to_vec()
            }
        };
        DenseTensor::new(self.dims.clone(), data)
    }
}

/// Row-trimmed, rescaled restriction of an ensemble: rows `Θ` (ascending
/// indices) of the parent, each multiplied by `√(m/|Θ|)`.
///
/// The view owns the rescale, so a gradient `A_tᵀ(b_t − A_t x)` through it
/// carries the factor `m/|Θ|` exactly once. This matches the quadratic
/// least-squares objective; other losses composed with the view see the
/// row-level `√` factor.
#[derive(Debug, Clone)]
pub struct TrimmedView<'a> {
    parent: &'a MeasurementEnsemble,
    kept: Vec<usize>,
    rescale: f64,
}

impl<'a> TrimmedView<'a> {
    pub fn parent(&self) -> &'a MeasurementEnsemble {
        self.parent
    }

    /// Kept row indices `Θ`, ascending.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// `√(m/(m − m_trim))`
    pub fn rescale(&self) -> f64 {
        self.rescale
    }

    /// Restricts a length-`m` parent vector (e.g. `A(X)` or `b`) to the kept
    /// rows and applies the rescale.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&i| full[i] * self.rescale).collect()
    }

    /// Scatters a view-length vector back into parent row positions, applying
    /// the rescale; dropped rows get zero.
    fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.parent.m];
        for (&i, &x) in self.kept.iter().zip(v) {
            full[i] = x * self.rescale;
        }
        full
    }
}

impl MeasurementOperator for TrimmedView<'_> {
    fn dims(&self) -> &[usize] {
        &self.parent.dims
    }

    fn rows(&self) -> usize {
        self.kept.len()
    }

    fn apply(&self, t: &DenseTensor) -> Result<Vec<f64>> {
        Ok(self.restrict(&self.parent.apply(t)?))
    }

    fn adjoint(&self, v: &[f64]) -> Result<DenseTensor> {
        if v.len() != self.kept.len() {
            return shape_err(format!("adjoint input has length {}, expected {}", v.len(), self.kept.len()));
        }
        self.parent.adjoint(&self.expand(v))
    }
}
