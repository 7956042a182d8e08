//! Exact matrix functions of the nilpotent drift.
//!
//! Because `B^*` is nilpotent of index `r + 1`, `exp(±tB^*)` and the covariance
//! integrals are polynomials in `t`. They are stored as [`PolyMatrix`] and only
//! evaluated on demand.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{assemble_drift, ModelStructure};

/// Matrix-valued polynomial `Σ_k coeffs[k] t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    coeffs: Vec<DMatrix<f64>>,
}

impl PolyMatrix {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial matrix needs at least one coefficient");
        let shape = coeffs[0].shape();
        assert!(coeffs.iter().all(|c| c.shape() == shape), "coefficient shapes differ");
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn shape(&self) -> (usize, usize) {
        self.coeffs[0].shape()
    }

    /// Horner evaluation.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut acc = self.coeffs[self.degree()].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc *= t;
            acc += c;
        }
        acc
    }

    pub fn transpose(&self) -> PolyMatrix {
        PolyMatrix::new(self.coeffs.iter().map(|c| c.transpose()).collect())
    }

    pub fn mul(&self, other: &PolyMatrix) -> PolyMatrix {
        let (rows, _) = self.shape();
        let (_, cols) = other.shape();
        let mut out = vec![DMatrix::zeros(rows, cols); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        PolyMatrix::new(out)
    }
}

/// `E(t) = exp(-tB^*)` for `sign = -1`, or the SDE flow `F(t) = exp(tB^*)` for `sign = +1`.
pub fn propagator(model: &ModelStructure, sign: i32) -> PolyMatrix {
    assert!(sign == 1 || sign == -1, "sign must be ±1");
    let drift = assemble_drift(model);
    let n = model.n();
    let mut coeffs = Vec::with_capacity(model.r() + 1);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut factorial = 1.0;
    for k in 0..=model.r() {
        if k > 0 {
            power = &power * &drift;
            factorial *= k as f64;
        }
        let s = if sign < 0 && k % 2 == 1 { -1.0 } else { 1.0 };
        coeffs.push(&power * (s / factorial));
    }
    PolyMatrix::new(coeffs)
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

fn closed_form_covariance(model: &ModelStructure, alternating: bool) -> PolyMatrix {
    let n = model.n();
    let r = model.r();
    let chain = model.chain_products();
    let a0 = model.a0();
    let mut coeffs = vec![DMatrix::zeros(n, n); 2 * r + 2];
    for k2 in 0..=r {
        for k1 in 0..=r {
            let deg = k1 + k2 + 1;
            let mut c = 1.0 / (factorial(k1) * factorial(k2) * deg as f64);
            if alternating && (k1 + k2) % 2 == 1 {
                c = -c;
            }
            let block = chain[k2].transpose() * a0 * &chain[k1] * c;
            coeffs[deg]
                .view_mut((model.offsets()[k2], model.offsets()[k1]), block.shape())
                .copy_from(&block);
        }
    }
    PolyMatrix::new(coeffs)
}

/// `C(t) = ∫_0^t E(s) A E^*(s) ds` in closed blockwise form.
pub fn covariance_paper(model: &ModelStructure) -> PolyMatrix {
    closed_form_covariance(model, true)
}

/// `C_+(t) = ∫_0^t F(s) A F^*(s) ds`, the covariance of the SDE endpoint.
pub fn covariance_sde(model: &ModelStructure) -> PolyMatrix {
    closed_form_covariance(model, false)
}

/// Block sign matrix `S = diag((-1)^k I_{m_k})`; `C_+(t) = S C(t) S`.
pub fn block_signs(model: &ModelStructure) -> DVector<f64> {
    let mut s = DVector::zeros(model.n());
    for k in 0..=model.r() {
        for i in model.block_range(k) {
            s[i] = if k % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    s
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_78,
    0.183_434_642_495_649_78,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];

const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_69,
    0.222_381_034_453_374_34,
    0.313_706_645_877_887_05,
    0.362_683_783_378_361_77,
    0.362_683_783_378_361_77,
    0.313_706_645_877_887_05,
    0.222_381_034_453_374_34,
    0.101_228_536_290_376_69,
];

/// Composite 8-point Gauss–Legendre approximation of `∫_0^t E(s) A E^*(s) ds`.
pub fn covariance_quadrature(model: &ModelStructure, t: f64, panels: usize) -> DMatrix<f64> {
    assert!(panels >= 1, "at least one panel");
    let e = propagator(model, -1);
    let a = model.diffusion_matrix();
    let n = model.n();
    let width = t / panels as f64;
    let mut acc = DMatrix::zeros(n, n);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for (node, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            let s = mid + 0.5 * width * node;
            let es = e.eval(s);
            acc += (&es * &a * es.transpose()) * (0.5 * width * w);
        }
    }
    (&acc + acc.transpose()) * 0.5
}

/// Factor pivots below this fraction of the largest diagonal entry are rejected.
pub const PIVOT_TOL: f64 = 1e-14;
const SYMMETRY_TOL: f64 = 1e-10;

/// Cholesky factorization `L L^T = matrix` with its log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdFactorization {
    pub matrix: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub logdet: f64,
}

impl SpdFactorization {
    /// Solves `matrix · x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a nonzero diagonal");
        self.lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a nonzero diagonal")
    }

    /// `<matrix^{-1} b, b>` via one triangular solve.
    pub fn inverse_form(&self, b: &DVector<f64>) -> f64 {
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a nonzero diagonal");
        y.norm_squared()
    }
}

pub fn factor_spd(m: &DMatrix<f64>) -> Result<SpdFactorization> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch(format!("expected a square matrix, got {rows}x{cols}")));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let asym = (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(format!("matrix asymmetry {asym:e}")));
    }
    let max_diag = (0..rows).fold(0.0f64, |a, i| a.max(m[(i, i)]));
    let threshold = PIVOT_TOL * max_diag;
    let mut lower = DMatrix::<f64>::zeros(rows, rows);
    let mut logdet = 0.0;
    for j in 0..rows {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= lower[(j, k)] * lower[(j, k)];
        }
        if !(pivot > threshold) {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot,
                threshold,
            });
        }
        let d = pivot.sqrt();
        lower[(j, j)] = d;
        logdet += 2.0 * d.ln();
        for i in (j + 1)..rows {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = s / d;
        }
    }
    Ok(SpdFactorization {
        matrix: m.clone(),
        lower,
        logdet,
    })
}

pub fn inverse_spd(f: &SpdFactorization) -> DMatrix<f64> {
    let n = f.lower.nrows();
    let y = f
        .lower
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("factor has a nonzero diagonal");
    let inv = f
        .lower
        .tr_solve_lower_triangular(&y)
        .expect("factor has a nonzero diagonal");
    (&inv + inv.transpose()) * 0.5
}

/// `<E(sign·t) A E^*(sign·t) g, g>`, evaluated through the propagator.
pub fn weighted_form(model: &ModelStructure, t: f64, sign: i32, g: &DVector<f64>) -> f64 {
    assert!(sign == 1 || sign == -1, "sign must be ±1");
    let e = propagator(model, -1).eval(sign as f64 * t);
    let h = e.transpose() * g;
    let m0 = model.dims()[0];
    let head = h.rows(0, m0);
    (model.a0() * head).dot(&head)
}

/// `‖Σ_k (t^k/k!) B_1⋯B_k g^{(k+1)}‖²_{A_0}`, the blockwise side of the
/// identity `= <E(-t) A E^*(-t) g, g>`.
pub fn weighted_form_blockwise(model: &ModelStructure, t: f64, g: &DVector<f64>) -> f64 {
    let chain = model.chain_products();
    let m0 = model.dims()[0];
    let mut acc = DVector::zeros(m0);
    for (k, p) in chain.iter().enumerate() {
        let gk = g.rows(model.offsets()[k], model.dims()[k]);
        acc += p * gk * (t.powi(k as i32) / factorial(k));
    }
    (model.a0() * &acc).dot(&acc)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}
