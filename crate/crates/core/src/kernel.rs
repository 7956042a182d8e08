//! Exact endpoint law of the diffusion.
//!
//! For `dX = B^* X dt + (σ, 0, …, 0)^T dW` started at `x0`, the endpoint is
//! Gaussian with mean `F(t) x0` (`F(t) = exp(tB^*)`) and covariance `C_+(t)`.
//! The transition kernel printed in terms of `E(t) = exp(-tB^*)` and `C(t)` is
//! also available under [`Convention::Paper`].

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::{covariance_paper, covariance_sde, factor_spd, propagator, SpdFactorization};
use crate::model::ModelStructure;
use crate::polynomial::Polynomial;

/// Default number of draws per RNG stream.
pub const DEFAULT_BATCH: usize = 10_000;
/// Largest total degree handled by [`polynomial_semigroup`].
pub const MAX_WICK_DEGREE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// `h(x, t; ξ, 0) = p(x − E(t)ξ, t)` with covariance `C(t)`.
    Paper,
    /// Endpoint law of the SDE: mean `F(t)ξ`, covariance `C_+(t)`.
    Sde,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub factor: SpdFactorization,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let factor = factor_spd(&cov)?;
        Ok(Self { mean, cov, factor })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let n = self.dim() as f64;
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + self.factor.logdet + self.factor.inverse_form(&d))
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }
}

fn check_len(model: &ModelStructure, v: &DVector<f64>, what: &str) -> Result<()> {
    if v.len() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "{what} has length {}, model dimension is {}",
            v.len(),
            model.n()
        )));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::BadArgument(format!("time must be positive and finite, got {t}")));
    }
    Ok(())
}

/// Mean `F(t) x0` of the endpoint.
pub fn flow_mean(model: &ModelStructure, x0: &DVector<f64>, t: f64) -> DVector<f64> {
    propagator(model, 1).eval(t) * x0
}

pub fn transition_law(model: &ModelStructure, x0: &DVector<f64>, t: f64) -> Result<GaussianLaw> {
    check_len(model, x0, "start point")?;
    check_time(t)?;
    GaussianLaw::new(flow_mean(model, x0, t), covariance_sde(model).eval(t))
}

/// Transition density from `xi` at time 0 to `x` at time `t`.
pub fn density(
    model: &ModelStructure,
    x: &DVector<f64>,
    t: f64,
    xi: &DVector<f64>,
    convention: Convention,
) -> Result<f64> {
    check_len(model, x, "end point")?;
    check_len(model, xi, "start point")?;
    check_time(t)?;
    let law = match convention {
        Convention::Sde => transition_law(model, xi, t)?,
        Convention::Paper => GaussianLaw::new(
            propagator(model, -1).eval(t) * xi,
            covariance_paper(model).eval(t),
        )?,
    };
    Ok(law.density(x))
}

/// `n` draws from a Gaussian law, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    points: Vec<f64>,
    dim: usize,
    pub n: usize,
    pub seed: u64,
    pub batch: usize,
}

impl SampleBatch {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// `n × N` matrix of draws.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.dim, &self.points)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for row in self.rows() {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        m / self.n as f64
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for row in self.rows() {
            for i in 0..self.dim {
                let di = row[i] - m[i];
                for j in 0..self.dim {
                    c[(i, j)] += di * (row[j] - m[j]);
                }
            }
        }
        c / (self.n as f64 - 1.0).max(1.0)
    }

    pub(crate) fn from_parts(points: Vec<f64>, dim: usize, seed: u64, batch: usize) -> Self {
        let n = points.len() / dim;
        Self {
            points,
            dim,
            n,
            seed,
            batch,
        }
    }
}

/// Row-major `n × dim` standard normals; rows `[b·batch, (b+1)·batch)` come from
/// ChaCha stream `b` keyed by `seed`.
pub fn standard_normals(dim: usize, n: usize, seed: u64, batch: usize) -> Vec<f64> {
    assert!(batch >= 1, "batch size must be positive");
    let mut out = vec![0.0; n * dim];
    let fill = |(b, chunk): (usize, &mut [f64])| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        for v in chunk.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(batch * dim).enumerate().for_each(fill);
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(batch * dim).enumerate().for_each(fill);
    }
    out
}

/// Maps standard normals `z` to `mean + L z` in place.
pub(crate) fn colour_normals(law: &GaussianLaw, z: &mut [f64]) {
    let dim = law.dim();
    let l = &law.factor.lower;
    let mut tmp = vec![0.0; dim];
    for row in z.chunks_exact_mut(dim) {
        for i in 0..dim {
            let mut s = law.mean[i];
            for j in 0..=i {
                s += l[(i, j)] * row[j];
            }
            tmp[i] = s;
        }
        row.copy_from_slice(&tmp);
    }
}

pub fn sample_endpoints(law: &GaussianLaw, n: usize, seed: u64) -> SampleBatch {
    sample_endpoints_batched(law, n, seed, DEFAULT_BATCH.min(n.max(1)))
}

pub fn sample_endpoints_batched(law: &GaussianLaw, n: usize, seed: u64, batch: usize) -> SampleBatch {
    assert!(n >= 1, "need at least one sample");
    let mut z = standard_normals(law.dim(), n, seed, batch);
    colour_normals(law, &mut z);
    SampleBatch::from_parts(z, law.dim(), seed, batch)
}

/// Isserlis moments `E[Z_{i_1} ⋯ Z_{i_k}]` of a centred Gaussian, memoised by sorted index list.
struct WickMoments<'a> {
    cov: &'a DMatrix<f64>,
    memo: HashMap<Vec<usize>, f64>,
}

impl<'a> WickMoments<'a> {
    fn new(cov: &'a DMatrix<f64>) -> Self {
        Self {
            cov,
            memo: HashMap::new(),
        }
    }

    fn moment(&mut self, idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 1.0;
        }
        if idx.len() % 2 == 1 {
            return 0.0;
        }
        let mut key = idx.to_vec();
        key.sort_unstable();
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let first = key[0];
        let mut total = 0.0;
        for j in 1..key.len() {
            let c = self.cov[(first, key[j])];
            if c == 0.0 {
                continue;
            }
            let rest: Vec<usize> = key[1..]
                .iter()
                .enumerate()
                .filter(|(pos, _)| *pos + 1 != j)
                .map(|(_, v)| *v)
                .collect();
            total += c * self.moment(&rest);
        }
        self.memo.insert(key, total);
        total
    }
}

/// `E[f(Y)]` for `Y ~ N(mean, cov)` and polynomial `f`, by moment expansion.
pub fn gaussian_expectation(mean: &DVector<f64>, cov: &DMatrix<f64>, f: &Polynomial) -> Result<f64> {
    let degree = f.degree();
    if degree > MAX_WICK_DEGREE {
        return Err(Error::DegreeTooHigh(degree));
    }
    if f.nvars() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "polynomial in {} variables, law of dimension {}",
            f.nvars(),
            mean.len()
        )));
    }
    let mut wick = WickMoments::new(cov);
    let mut total = 0.0;
    for (exps, coeff) in f.terms() {
        let idx: Vec<usize> = exps
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
            .collect();
        let d = idx.len();
        let mut term = 0.0;
        // expand Π (m_i + Z_i) over subsets taken from the centred part
        for mask in 0u32..(1 << d) {
            if mask.count_ones() % 2 == 1 {
                continue;
            }
            let mut mean_part = 1.0;
            let mut noise = Vec::with_capacity(d);
            for (j, &i) in idx.iter().enumerate() {
                if mask & (1 << j) != 0 {
                    noise.push(i);
                } else {
                    mean_part *= mean[i];
                }
            }
            if mean_part != 0.0 {
                term += mean_part * wick.moment(&noise);
            }
        }
        total += coeff * term;
    }
    Ok(total)
}

/// Exact `P_t f(x0)` for polynomial `f` of total degree at most 6.
pub fn polynomial_semigroup(model: &ModelStructure, f: &Polynomial, t: f64, x0: &DVector<f64>) -> Result<f64> {
    check_len(model, x0, "start point")?;
    if t < 0.0 {
        return Err(Error::BadArgument(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        if f.degree() > MAX_WICK_DEGREE {
            return Err(Error::DegreeTooHigh(f.degree()));
        }
        return Ok(f.eval(x0.as_slice()));
    }
    gaussian_expectation(&flow_mean(model, x0, t), &covariance_sde(model).eval(t), f)
}
