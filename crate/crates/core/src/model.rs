//! Block structure of a Kolmogorov-type operator `L = ½ div(A D) + <x, B D>`.
//!
//! The state is split into `r + 1` blocks of sizes `m_0 ≥ m_1 ≥ … ≥ m_r`.
//! Only the first block is driven by noise (`dX_1 = σ dW`), and block `k + 1`
//! integrates block `k` through `B_k^*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `σσ* = A_0` and on the symmetry of `A_0`.
pub const SIGMA_TOL: f64 = 1e-12;
/// `A_0` must have smallest eigenvalue above this fraction of its norm.
pub const DEFINITENESS_TOL: f64 = 1e-10;
/// Singular-value threshold for the full-column-rank test on each `B_k`.
pub const RANK_TOL: f64 = 1e-10;

/// Unvalidated model data, as read from a config file.
///
/// Matrices are row-major. Either `a0` or `sigma` (or both) must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub r: usize,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    pub blocks: Vec<Vec<f64>>,
}

/// Validated block data defining the operator and its SDE.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStructure {
    r: usize,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    a0: DMatrix<f64>,
    sigma: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
}

impl ModelStructure {
    /// The classical Kolmogorov operator `½∂²_{x_1} + x_1 ∂_{x_2}`.
    pub fn kolmogorov() -> Self {
        Self::iterated_scalar(1)
    }

    /// Iterated Kolmogorov model with all blocks scalar and `A_0 = B_k = 1`.
    pub fn iterated_scalar(r: usize) -> Self {
        validate_structure(&RawModel {
            r,
            dims: vec![1; r + 1],
            a0: Some(vec![1.0]),
            sigma: None,
            blocks: vec![vec![1.0]; r],
        })
        .expect("scalar iterated Kolmogorov model is valid")
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total state dimension `N = Σ m_k`.
    pub fn n(&self) -> usize {
        self.offsets[self.r + 1]
    }

    /// Offset of block `k` (0-based) in the state vector; `offsets()[r + 1] == N`.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `B_k` for `k = 1..=r` (stored 0-based: `blocks()[k - 1]`).
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// The `N × N` matrix `A = diag(A_0, 0, …, 0)`.
    pub fn diffusion_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let m0 = self.dims[0];
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (m0, m0)).copy_from(&self.a0);
        a
    }

    /// The `N × N` matrix `B` (blocks `B_k` on the block super-diagonal).
    pub fn operator_b(&self) -> DMatrix<f64> {
        assemble_drift(self).transpose()
    }

    /// Products `B_1 B_2 ⋯ B_k` for `k = 0..=r`; entry 0 is `I_{m_0}`.
    pub fn chain_products(&self) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(self.r + 1);
        out.push(DMatrix::identity(self.dims[0], self.dims[0]));
        for b in &self.blocks {
            let next = out.last().unwrap() * b;
            out.push(next);
        }
        out
    }

    /// Round-trips the validated model into config form.
    pub fn to_raw(&self) -> RawModel {
        RawModel {
            r: self.r,
            dims: self.dims.clone(),
            a0: Some(row_major(&self.a0)),
            sigma: Some(row_major(&self.sigma)),
            blocks: self.blocks.iter().map(row_major).collect(),
        }
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn from_row_major(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{what} needs {rows}x{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub(crate) fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let root = v * DMatrix::from_diagonal(&roots) * v.transpose();
    (&root + root.transpose()) * 0.5
}

/// Validates raw block data and completes `A_0`/`σ`.
pub fn validate_structure(raw: &RawModel) -> Result<ModelStructure> {
    let r = raw.r;
    if r == 0 {
        return Err(Error::DimensionMismatch("r must be at least 1".into()));
    }
    if raw.dims.len() != r + 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} block dimensions for r = {r}, got {}",
            r + 1,
            raw.dims.len()
        )));
    }
    if raw.dims.contains(&0) {
        return Err(Error::DimensionMismatch("block dimensions must be positive".into()));
    }
    if raw.dims.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::NotMonotone(raw.dims.clone()));
    }
    if raw.blocks.len() != r {
        return Err(Error::DimensionMismatch(format!(
            "expected {r} coupling blocks, got {}",
            raw.blocks.len()
        )));
    }

    let m0 = raw.dims[0];
    let (a0, sigma) = match (&raw.a0, &raw.sigma) {
        (None, None) => {
            return Err(Error::DimensionMismatch("one of a0 or sigma is required".into()));
        }
        (Some(a), s) => {
            let a0 = from_row_major(m0, m0, a, "a0")?;
            let scale = max_abs(&a0).max(1.0);
            if max_abs(&(&a0 - a0.transpose())) > SIGMA_TOL * scale {
                return Err(Error::NotSymmetric("A0 is not symmetric".into()));
            }
            let a0 = (&a0 + a0.transpose()) * 0.5;
            let sigma = match s {
                Some(s) => {
                    let sigma = from_row_major(m0, m0, s, "sigma")?;
                    let err = max_abs(&(&sigma * sigma.transpose() - &a0));
                    if err > SIGMA_TOL * scale {
                        return Err(Error::NotSymmetric(format!(
                            "sigma sigma^T differs from A0 by {err:e}"
                        )));
                    }
                    sigma
                }
                None => symmetric_sqrt(&a0),
            };
            (a0, sigma)
        }
        (None, Some(s)) => {
            let sigma = from_row_major(m0, m0, s, "sigma")?;
            let a0 = &sigma * sigma.transpose();
            let a0 = (&a0 + a0.transpose()) * 0.5;
            (a0, sigma)
        }
    };

    let eig = a0.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = DEFINITENESS_TOL * norm;
    if !(min_eig > tol) {
        return Err(Error::NotPositive {
            min_eigenvalue: min_eig,
            tolerance: tol,
        });
    }

    let mut blocks = Vec::with_capacity(r);
    for (k, data) in raw.blocks.iter().enumerate() {
        let (rows, cols) = (raw.dims[k], raw.dims[k + 1]);
        let b = from_row_major(rows, cols, data, &format!("B_{}", k + 1))?;
        let sv = b.clone().singular_values();
        let largest = sv.max();
        let smallest = sv.min();
        let tolerance = RANK_TOL * largest.max(1.0);
        if sv.len() < cols || !(smallest > tolerance) {
            return Err(Error::RankDeficient {
                block: k + 1,
                smallest,
                tolerance,
            });
        }
        blocks.push(b);
    }

    let mut offsets = Vec::with_capacity(r + 2);
    offsets.push(0);
    for &m in &raw.dims {
        offsets.push(offsets.last().unwrap() + m);
    }

    Ok(ModelStructure {
        r,
        dims: raw.dims.clone(),
        offsets,
        a0,
        sigma,
        blocks,
    })
}

/// SDE drift matrix `B^*`: block `(k + 1, k)` holds `B_k^*`, everything else is zero.
pub fn assemble_drift(model: &ModelStructure) -> DMatrix<f64> {
    let n = model.n();
    let mut m = DMatrix::zeros(n, n);
    for (k, b) in model.blocks.iter().enumerate() {
        let row = model.offsets[k + 1];
        let col = model.offsets[k];
        m.view_mut((row, col), (b.ncols(), b.nrows()))
            .copy_from(&b.transpose());
    }
    m
}

/// Anisotropic dilation `diag(λ I_{m_0}, λ³ I_{m_1}, …, λ^{2r+1} I_{m_r})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dilation {
    pub lambda: f64,
    pub diag: DVector<f64>,
}

impl Dilation {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }

    /// `δ M δ` for a symmetric `N × N` matrix.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for i in 0..out.nrows() {
            for j in 0..out.ncols() {
                out[(i, j)] *= self.diag[i] * self.diag[j];
            }
        }
        out
    }

    pub fn compose(&self, other: &Dilation) -> Dilation {
        Dilation {
            lambda: self.lambda * other.lambda,
            diag: self.diag.component_mul(&other.diag),
        }
    }
}

pub fn dilation(model: &ModelStructure, lambda: f64) -> Result<Dilation> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let mut diag = DVector::zeros(model.n());
    for k in 0..=model.r {
        let s = lambda.powi(2 * k as i32 + 1);
        for i in model.block_range(k) {
            diag[i] = s;
        }
    }
    Ok(Dilation { lambda, diag })
}

/// A random valid model with `1 ≤ r ≤ max_r` and nonincreasing block sizes in
/// `1..=max_dim`. Entries are uniform in `[-1, 1]`; `A_0 = G G^T + ½ I`.
/// Draws with a block singular value below 0.2 are rejected to keep `C(t)` well conditioned.
pub fn random_model<R: rand::Rng + ?Sized>(rng: &mut R, max_r: usize, max_dim: usize) -> ModelStructure {
    loop {
        let r = rng.gen_range(1..=max_r.max(1));
        let mut dims = vec![rng.gen_range(1..=max_dim.max(1))];
        for _ in 0..r {
            let prev = *dims.last().unwrap();
            dims.push(rng.gen_range(1..=prev));
        }
        let m0 = dims[0];
        let g = DMatrix::from_fn(m0, m0, |_, _| rng.gen_range(-1.0..1.0));
        let a0 = &g * g.transpose() + DMatrix::identity(m0, m0) * 0.5;
        let blocks = (0..r)
            .map(|k| (0..dims[k] * dims[k + 1]).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let raw = RawModel {
            r,
            dims,
            a0: Some(row_major(&((&a0 + a0.transpose()) * 0.5))),
            sigma: None,
            blocks,
        };
        if let Ok(m) = validate_structure(&raw) {
            if m.blocks.iter().all(|b| b.clone().singular_values().min() >= 0.2) {
                return m;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(r: usize, dims: Vec<usize>, a0: Vec<f64>, blocks: Vec<Vec<f64>>) -> RawModel {
        RawModel {
            r,
            dims,
            a0: Some(a0),
            sigma: None,
            blocks,
        }
    }

    #[test]
    fn kolmogorov_is_valid() {
        let m = validate_structure(&raw(1, vec![1, 1], vec![1.0], vec![vec![1.0]])).unwrap();
        assert_eq!(m.n(), 2);
        assert_eq!(m.sigma()[(0, 0)], 1.0);
    }

    #[test]
    fn increasing_dims_rejected() {
        let err = validate_structure(&raw(1, vec![1, 2], vec![1.0], vec![vec![1.0, 1.0]]));
        assert!(matches!(err, Err(Error::NotMonotone(_))));
    }

    #[test]
    fn nearly_zero_block_is_rank_deficient() {
        let s = 1e-14 / 2f64.sqrt();
        let err = validate_structure(&raw(
            2,
            vec![2, 2, 1],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![vec![1.0, 0.0, 0.0, 1.0], vec![s, s]],
        ));
        assert!(matches!(err, Err(Error::RankDeficient { block: 2, .. })), "{err:?}");
    }

    #[test]
    fn collinear_columns_rank_deficient() {
        let err = validate_structure(&raw(
            1,
            vec![2, 2],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![vec![1.0, 2.0, 1.0, 2.0]],
        ));
        assert!(matches!(err, Err(Error::RankDeficient { block: 1, .. })));
    }

    #[test]
    fn shape_mismatch() {
        let err = validate_structure(&raw(1, vec![2, 1], vec![1.0, 0.0, 0.0, 1.0], vec![vec![1.0]]));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
        let err = validate_structure(&raw(2, vec![1, 1], vec![1.0], vec![vec![1.0]]));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn semidefinite_a0_rejected() {
        let err = validate_structure(&raw(
            1,
            vec![2, 1],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![vec![1.0, 0.0]],
        ));
        match err {
            Err(Error::NotPositive { min_eigenvalue, .. }) => assert!(min_eigenvalue.abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sigma_only_and_a0_only_agree() {
        let sigma = vec![2.0, 0.0, 1.0, 1.0];
        let from_sigma = validate_structure(&RawModel {
            r: 1,
            dims: vec![2, 1],
            a0: None,
            sigma: Some(sigma),
            blocks: vec![vec![1.0, 0.5]],
        })
        .unwrap();
        let a0 = row_major(from_sigma.a0());
        let from_a0 = validate_structure(&raw(1, vec![2, 1], a0, vec![vec![1.0, 0.5]])).unwrap();
        let s = from_a0.sigma();
        assert!((s - s.transpose()).abs().max() < 1e-15);
        assert!((s * s.transpose() - from_a0.a0()).abs().max() < 1e-12);
        assert!((from_a0.a0() - from_sigma.a0()).abs().max() < 1e-12);
    }

    #[test]
    fn mismatched_sigma_rejected() {
        let err = validate_structure(&RawModel {
            r: 1,
            dims: vec![1, 1],
            a0: Some(vec![1.0]),
            sigma: Some(vec![2.0]),
            blocks: vec![vec![1.0]],
        });
        assert!(matches!(err, Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn drift_placement() {
        let k = ModelStructure::kolmogorov();
        assert_eq!(assemble_drift(&k), DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
        let it = ModelStructure::iterated_scalar(2);
        let d = assemble_drift(&it);
        assert_eq!(d[(1, 0)], 1.0);
        assert_eq!(d[(2, 1)], 1.0);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn dilation_examples() {
        let k = ModelStructure::kolmogorov();
        assert_eq!(dilation(&k, 1.0).unwrap().diag.as_slice(), &[1.0, 1.0]);
        assert_eq!(dilation(&k, 2.0).unwrap().diag.as_slice(), &[2.0, 8.0]);
        assert!(matches!(dilation(&k, 0.0), Err(Error::NonPositiveLambda(_))));
        assert!(matches!(dilation(&k, -1.0), Err(Error::NonPositiveLambda(_))));
        let it = ModelStructure::iterated_scalar(3);
        let a = dilation(&it, 1.5).unwrap();
        let b = dilation(&it, 0.7).unwrap();
        let ab = dilation(&it, 1.5 * 0.7).unwrap();
        let composed = a.compose(&b);
        for (x, y) in composed.diag.iter().zip(ab.diag.iter()) {
            assert!((x - y).abs() <= 1e-14 * y.abs());
        }
    }
}
