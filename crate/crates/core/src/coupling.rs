//! Synchronous couplings of two copies of the diffusion.
//!
//! Both copies are driven by the same Brownian path, so their difference is the
//! deterministic flow of the start-point difference. Start points are offset along
//! `ε ∏ B^*_{k-j} v` with free weights `α_k`; the offsets evolve as polynomials in `t`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{sample_endpoints_batched, transition_law, SampleBatch};
use crate::model::ModelStructure;

/// Default perturbation scale for difference-quotient experiments.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    alpha: Vec<f64>,
    v: DVector<f64>,
    eps: f64,
}

impl CouplingSpec {
    /// `alpha` holds `α_1 … α_{r+1}` and must start with exactly 1.
    pub fn new(alpha: Vec<f64>, v: DVector<f64>, eps: f64) -> Result<Self> {
        if alpha.first() != Some(&1.0) {
            return Err(Error::BadAlpha(format!("alpha_1 must equal 1, got {:?}", alpha.first())));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::BadAlpha("alpha has non-finite entries".into()));
        }
        if !(v.norm() > 0.0) {
            return Err(Error::BadArgument("direction v must be nonzero".into()));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::BadArgument(format!("eps must be positive, got {eps}")));
        }
        Ok(Self { alpha, v, eps })
    }

    /// `α = (1, 0, …, 0)`: shift only the first block.
    pub fn right(model: &ModelStructure, v: DVector<f64>, eps: f64) -> Result<Self> {
        let mut alpha = vec![0.0; model.r() + 1];
        alpha[0] = 1.0;
        Self::new(alpha, v, eps)
    }

    /// `α_k = (-1)^{k-1} t^{k-1}/(k-1)!`: all offsets past the first block vanish at `t`.
    pub fn reverse(model: &ModelStructure, t: f64, v: DVector<f64>, eps: f64) -> Result<Self> {
        Self::new(reverse_alpha(model.r(), t), v, eps)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// `α_k = (-1)^{k-1} t^{k-1}/(k-1)!` for `k = 1..=r+1`.
pub fn reverse_alpha(r: usize, t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(r + 1);
    let mut term = 1.0;
    for k in 0..=r {
        if k > 0 {
            term *= -t / k as f64;
        }
        out.push(term);
    }
    out
}

/// `β_{i'}(t) = Σ_{i=0}^{i'-1} α_{i'-i} t^i / i!`, the weights the offsets carry at time `t`.
pub fn propagated_alpha(alpha: &[f64], t: f64) -> Vec<f64> {
    (0..alpha.len())
        .map(|k| {
            let mut s = 0.0;
            let mut term = 1.0;
            for i in 0..=k {
                if i > 0 {
                    term *= t / i as f64;
                }
                s += alpha[k - i] * term;
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPair {
    pub primary_start: DVector<f64>,
    pub shadow_start: DVector<f64>,
    /// `offset(t) = Σ_i t^i offset_coeffs[i]`.
    pub offset_coeffs: Vec<DVector<f64>>,
}

impl CoupledPair {
    /// `X(t) − X̃(t)`.
    pub fn offset(&self, t: f64) -> DVector<f64> {
        let mut acc = self.offset_coeffs.last().unwrap().clone();
        for c in self.offset_coeffs.iter().rev().skip(1) {
            acc *= t;
            acc += c;
        }
        acc
    }
}

/// `B^*_{k-1} ⋯ B^*_1 v` for each block `k` (0-based), i.e. the direction block `k` is shifted along.
fn block_directions(model: &ModelStructure, v: &DVector<f64>) -> Vec<DVector<f64>> {
    model
        .chain_products()
        .iter()
        .map(|p| p.transpose() * v)
        .collect()
}

pub fn coupled_start(x: &DVector<f64>, cs: &CouplingSpec, model: &ModelStructure) -> Result<CoupledPair> {
    if cs.v.len() != model.dims()[0] {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, first block has dimension {}",
            cs.v.len(),
            model.dims()[0]
        )));
    }
    if x.len() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "start point has length {}, model dimension is {}",
            x.len(),
            model.n()
        )));
    }
    if cs.alpha.len() != model.r() + 1 {
        return Err(Error::BadAlpha(format!(
            "expected {} weights, got {}",
            model.r() + 1,
            cs.alpha.len()
        )));
    }
    let dirs = block_directions(model, &cs.v);
    let r = model.r();
    let mut coeffs = vec![DVector::zeros(model.n()); r + 1];
    let mut inv_fact = 1.0;
    for (i, coeff) in coeffs.iter_mut().enumerate() {
        if i > 0 {
            inv_fact /= i as f64;
        }
        // block k carries α_{k-i} t^i/i! for i ≤ k
        for (k, dir) in dirs.iter().enumerate().skip(i) {
            let w = cs.eps * cs.alpha[k - i] * inv_fact;
            if w == 0.0 {
                continue;
            }
            let range = model.block_range(k);
            let mut block = coeff.rows_mut(range.start, range.len());
            block += dir * w;
        }
    }
    let shadow_start = x - &coeffs[0];
    Ok(CoupledPair {
        primary_start: x.clone(),
        shadow_start,
        offset_coeffs: coeffs,
    })
}

/// Endpoint draws of both copies under a shared Gaussian draw.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledBatch {
    pub primary: SampleBatch,
    /// Row-major `n × N`, `shadow[i] = primary[i] − offset(t)`.
    pub shadow: Vec<f64>,
    pub offset: DVector<f64>,
}

impl CoupledBatch {
    pub fn shadow_row(&self, i: usize) -> &[f64] {
        let d = self.primary.dim();
        &self.shadow[i * d..(i + 1) * d]
    }
}

pub fn sample_coupled_pair(
    model: &ModelStructure,
    pair: &CoupledPair,
    t: f64,
    n: usize,
    seed: u64,
    batch: usize,
) -> Result<CoupledBatch> {
    let law = transition_law(model, &pair.primary_start, t)?;
    let primary = sample_endpoints_batched(&law, n, seed, batch);
    let offset = pair.offset(t);
    let mut shadow = Vec::with_capacity(n * model.n());
    for row in primary.rows() {
        shadow.extend(row.iter().zip(offset.iter()).map(|(x, o)| x - o));
    }
    Ok(CoupledBatch { primary, shadow, offset })
}

/// Euler–Maruyama path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Path {
    pub fn endpoint(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }
}

fn euler_step(model: &ModelStructure, state: &DVector<f64>, dt: f64, noise: &DVector<f64>) -> DVector<f64> {
    let mut next = state.clone();
    let m0 = model.dims()[0];
    let kick = model.sigma() * noise;
    for i in 0..m0 {
        next[i] += kick[i];
    }
    for (k, b) in model.blocks().iter().enumerate() {
        let src = model.block_range(k);
        let dst = model.block_range(k + 1);
        let inc = b.transpose() * state.rows(src.start, src.len()) * dt;
        let mut out = next.rows_mut(dst.start, dst.len());
        out += inc;
    }
    next
}

fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) || dt > horizon {
        return Err(Error::BadArgument(format!("need 0 < dt <= T, got dt = {dt}, T = {horizon}")));
    }
    Ok(((horizon / dt) - 1e-9).ceil().max(1.0) as usize)
}

/// Simulates one or more copies driven by the same Brownian increments.
fn simulate_shared(
    model: &ModelStructure,
    starts: &[&DVector<f64>],
    dt: f64,
    horizon: f64,
    seed: u64,
    noisy: bool,
) -> Result<Vec<Path>> {
    let steps = step_count(dt, horizon)?;
    let m0 = model.dims()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths: Vec<Path> = starts
        .iter()
        .map(|s| Path {
            times: vec![0.0],
            states: vec![(*s).clone()],
        })
        .collect();
    let mut t = 0.0;
    for step in 0..steps {
        let h = if step + 1 == steps { horizon - t } else { dt };
        let noise = if noisy {
            DVector::from_fn(m0, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * h.sqrt()
            })
        } else {
            DVector::zeros(m0)
        };
        t = if step + 1 == steps { horizon } else { t + dt };
        for p in paths.iter_mut() {
            let next = euler_step(model, p.states.last().unwrap(), h, &noise);
            p.states.push(next);
            p.times.push(t);
        }
    }
    Ok(paths)
}

/// Euler–Maruyama discretisation of the SDE, an independent oracle for the exact law.
pub fn trajectory_simulate(model: &ModelStructure, x: &DVector<f64>, dt: f64, horizon: f64, seed: u64) -> Result<Path> {
    Ok(simulate_shared(model, &[x], dt, horizon, seed, true)?.remove(0))
}

/// Same scheme with the noise switched off (`σ = 0`).
pub fn trajectory_simulate_deterministic(model: &ModelStructure, x: &DVector<f64>, dt: f64, horizon: f64) -> Result<Path> {
    Ok(simulate_shared(model, &[x], dt, horizon, 0, false)?.remove(0))
}

/// Simulates both copies of a coupled pair with shared increments.
pub fn trajectory_simulate_pair(
    model: &ModelStructure,
    pair: &CoupledPair,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<(Path, Path)> {
    let mut paths = simulate_shared(model, &[&pair.primary_start, &pair.shadow_start], dt, horizon, seed, true)?;
    let shadow = paths.pop().unwrap();
    let primary = paths.pop().unwrap();
    Ok((primary, shadow))
}
