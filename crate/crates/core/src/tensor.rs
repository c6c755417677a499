//! Dense d-mode tensors.
//!
//! Storage is a flat `Vec<f64>` in row-major order: the **last** mode varies
//! fastest. For dims `(n_1, …, n_d)` the entry `(i_1, …, i_d)` lives at
//! offset `((i_1·n_2 + i_2)·n_3 + …)·n_d + i_d`. This order is what `vec`
//! returns, and under it the vectorization of a rank-1 tensor
//! `x_1 ∘ x_2 ∘ … ∘ x_d` is exactly the Kronecker product `x_1 ⊗ x_2 ⊗ … ⊗ x_d`.
//! Every other module in the crate relies on this convention.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{config_err, shape_err, Error, Result};

/// A real tensor of arbitrary order with explicit dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return shape_err("a tensor needs at least one mode");
    }
    if dims.iter().any(|&n| n == 0) {
        return shape_err(format!("zero-length mode in dims {dims:?}"));
    }
    dims.iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow usize")))
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return shape_err(format!(
                "data length {} does not match dims {:?} (expected {len})",
                data.len(),
                dims
            ));
        }
        Ok(Self { dims, data })
    }

    /// All-zeros tensor. Panics on empty dims or a zero-length mode.
    pub fn zeros(dims: &[usize]) -> Self {
        let len = check_dims(dims).expect("invalid tensor dims");
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        t
    }

    /// Inverse of [`DenseTensor::vec`].
    pub fn unvec(v: &[f64], dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), v.to_vec())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Number of entries, `n_1·…·n_d`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Vectorization in the documented row-major order.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.dims.len(), "index order mismatch");
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of range for mode of size {n}");
            acc * n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    fn assert_same_dims(&self, other: &Self) {
        assert_eq!(self.dims, other.dims, "tensor dims differ");
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.assert_same_dims(other);
        dot(&self.data, &other.data)
    }

    pub fn frob_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.assert_same_dims(other);
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(s, o)| *s += a * o);
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// `‖self − other‖_F` without allocating.
    pub fn distance(&self, other: &Self) -> f64 {
        self.assert_same_dims(other);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sizes of the modes before and after `k`: `(Π_{i<k} n_i, Π_{i>k} n_i)`.
    fn split_at_mode(&self, k: usize) -> (usize, usize) {
        let left = self.dims[..k].iter().product();
        let right = self.dims[k + 1..].iter().product();
        (left, right)
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.dims.len() {
            return shape_err(format!("mode {k} out of range for order {}", self.ndim()));
        }
        Ok(())
    }

    /// k-mode product `T ×_k M` for `M` of shape `m × n_k` (modes are 0-based).
    ///
    /// `(T ×_k M)[…, i, …] = Σ_j T[…, j, …] · M[i, j]`
    pub fn mode_product(&self, m: &DMatrix<f64>, k: usize) -> Result<Self> {
        self.check_mode(k)?;
        let nk = self.dims[k];
        if m.ncols() != nk {
            return shape_err(format!(
                "mode-{k} product: matrix has {} columns, mode has size {nk}",
                m.ncols()
            ));
        }
        let rows = m.nrows();
        if rows == 0 {
            return shape_err("mode product with an empty matrix");
        }
        let (left, right) = self.split_at_mode(k);
        let mut dims = self.dims.clone();
        dims[k] = rows;
        let mut out = vec![0.0; left * rows * right];
        let mt = m.transpose();
        for l in 0..left {
            // Slab l is an `nk × right` row-major block, i.e. a column-major
            // `right × nk` matrix B = slabᵀ; the output slab is (M·slab)ᵀ = B·Mᵀ.
            let slab = &self.data[l * nk * right..(l + 1) * nk * right];
            let b = DMatrixView::from_slice(slab, right, nk);
            let prod = b * &mt;
            out[l * rows * right..(l + 1) * rows * right].copy_from_slice(prod.as_slice());
        }
        Ok(Self { dims, data: out })
    }

    /// Mode-k unfolding: an `n_k × (N/n_k)` matrix whose row `i` holds every
    /// entry with `i_k = i`. Columns enumerate the remaining modes in storage
    /// order (earlier modes slower).
    pub fn unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_mode(k)?;
        let nk = self.dims[k];
        let (left, right) = self.split_at_mode(k);
        let mut mat = DMatrix::zeros(nk, left * right);
        for l in 0..left {
            for i in 0..nk {
                let src = &self.data[(l * nk + i) * right..(l * nk + i + 1) * right];
                for (r, &v) in src.iter().enumerate() {
                    mat[(i, l * right + r)] = v;
                }
            }
        }
        Ok(mat)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(mat: &DMatrix<f64>, k: usize, dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims)?;
        if k >= dims.len() {
            return shape_err(format!("mode {k} out of range for order {}", dims.len()));
        }
        let nk = dims[k];
        if mat.nrows() != nk || mat.ncols() * nk != len {
            return shape_err(format!(
                "cannot fold a {}×{} matrix along mode {k} into dims {dims:?}",
                mat.nrows(),
                mat.ncols()
            ));
        }
        let left: usize = dims[..k].iter().product();
        let right: usize = dims[k + 1..].iter().product();
        let mut data = vec![0.0; len];
        for l in 0..left {
            for i in 0..nk {
                let dst = &mut data[(l * nk + i) * right..(l * nk + i + 1) * right];
                for (r, v) in dst.iter_mut().enumerate() {
                    *v = mat[(i, l * right + r)];
                }
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }
}

/// Ordered list of factor vectors `x_1, …, x_d` describing a rank-1 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorList(Vec<Vec<f64>>);

impl FactorList {
    pub fn new(factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return config_err("factor list must be nonempty");
        }
        if factors.iter().any(|f| f.is_empty()) {
            return config_err("factor vectors must be nonempty");
        }
        Ok(Self(factors))
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn dims(&self) -> Vec<usize> {
        self.0.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        self.0.iter().map(Vec::as_slice).collect()
    }
}

/// Outer product `x_1 ∘ x_2 ∘ … ∘ x_d`.
pub fn rank1(factors: &FactorList) -> DenseTensor {
    let mut out = DenseTensor::zeros(&factors.dims());
    outer_accumulate(&mut out.data, 1.0, &factors.slices());
    out
}

/// `⟨x_1 ⊗ … ⊗ x_d, vec(T)⟩`, computed by contracting one mode at a time from
/// the last, so the length-N Kronecker row is never formed.
pub fn kron_contract(factors: &FactorList, t: &DenseTensor) -> Result<f64> {
    if factors.dims() != t.dims {
        return shape_err(format!(
            "factor lengths {:?} do not match tensor dims {:?}",
            factors.dims(),
            t.dims
        ));
    }
    Ok(kron_contract_slices(&t.data, &factors.slices()))
}

/// Slice-level kernel behind [`kron_contract`]; `data` must be a row-major
/// tensor whose dims are the factor lengths.
pub(crate) fn kron_contract_slices(data: &[f64], factors: &[&[f64]]) -> f64 {
    let (last, rest) = factors.split_last().expect("nonempty factors");
    let n = last.len();
    if rest.is_empty() {
        return dot(data, last);
    }
    let partial: Vec<f64> = data.chunks_exact(n).map(|row| dot(row, last)).collect();
    kron_contract_slices(&partial, rest)
}

/// `out += coeff · vec(x_1 ∘ … ∘ x_d)` for a row-major `out`.
pub(crate) fn outer_accumulate(out: &mut [f64], coeff: f64, factors: &[&[f64]]) {
    let (first, rest) = factors.split_first().expect("nonempty factors");
    if rest.is_empty() {
        out.iter_mut()
            .zip(first.iter())
            .for_each(|(o, &x)| *o += coeff * x);
        return;
    }
    let block = out.len() / first.len();
    for (chunk, &x) in out.chunks_exact_mut(block).zip(first.iter()) {
        outer_accumulate(chunk, coeff * x, rest);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
