//! Monte Carlo estimators of semigroup functionals with standard errors.
//!
//! Every estimator draws from the exact transition law, so the only error is
//! statistical. Nonlinear functionals of sample means get their standard error
//! from the delta method, which is also how inequality margins are scored when
//! both sides share a batch.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{sample_endpoints_batched, transition_law, SampleBatch, DEFAULT_BATCH};
use crate::matfun::propagator;
use crate::model::ModelStructure;
use crate::testfns::ScalarField;

/// A point estimate. `n = 0` marks a value computed exactly, with `stderr = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(with = "lenient_f64")]
    pub value: f64,
    #[serde(with = "lenient_f64")]
    pub stderr: f64,
    pub n: usize,
}

/// JSON has no NaN or infinities; those are written as the strings `"NaN"`, `"inf"`, `"-inf"`.
pub mod lenient_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, n: 0 }
    }

    pub fn is_exact(&self) -> bool {
        self.n == 0
    }
}

fn default_sigma_level() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    /// Samples per RNG stream. Defaults to `min(n, 10_000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default = "default_sigma_level")]
    pub sigma_level: f64,
}

impl McConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            batch: None,
            sigma_level: 3.0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn batch_size(&self) -> usize {
        self.batch.unwrap_or_else(|| DEFAULT_BATCH.min(self.n.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.batch_size();
        if self.n < 2 {
            return Err(Error::BadArgument(format!("mc.n must be at least 2, got {}", self.n)));
        }
        if b < 1 || b > self.n {
            return Err(Error::BadArgument(format!("mc.batch must lie in [1, n], got {b}")));
        }
        if !(self.sigma_level > 0.0) || !self.sigma_level.is_finite() {
            return Err(Error::BadArgument(format!(
                "mc.sigma_level must be positive, got {}",
                self.sigma_level
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser; turns `(seed, tag)` into an unrelated stream seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `mc.n` endpoints of the diffusion started at `x`.
pub fn sample_law(model: &ModelStructure, x: &DVector<f64>, t: f64, mc: &McConfig) -> Result<SampleBatch> {
    mc.validate()?;
    let law = transition_law(model, x, t)?;
    Ok(sample_endpoints_batched(&law, mc.n, mc.seed, mc.batch_size()))
}

/// Evaluates `k` statistics per sample; returns them column-wise, in sample order.
pub fn per_sample<F>(batch: &SampleBatch, k: usize, stat: F) -> Vec<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let rows: Vec<&[f64]> = batch.rows().collect();
    let eval = |row: &&[f64]| {
        let mut out = vec![0.0; k];
        stat(row, &mut out);
        out
    };
    #[cfg(feature = "parallel")]
    let values: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        rows.par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let values: Vec<Vec<f64>> = rows.iter().map(eval).collect();
    let mut cols = vec![Vec::with_capacity(values.len()); k];
    for v in values {
        for (c, x) in cols.iter_mut().zip(v) {
            c.push(x);
        }
    }
    cols
}

/// Mean computed relative to the first entry, so a constant column is reproduced exactly.
pub fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

fn sd_of_mean(devs: impl Iterator<Item = f64>, n: usize) -> f64 {
    let ss: f64 = devs.map(|d| d * d).sum();
    (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
}

/// Plain sample mean with CLT standard error.
pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let m = shifted_mean(xs);
    Estimate {
        value: m,
        stderr: sd_of_mean(xs.iter().map(|x| x - m), xs.len()),
        n: xs.len(),
    }
}

/// `g(column means)` with a delta-method standard error. The gradient of `g`
/// is taken by central differences scaled to each column's spread.
pub fn delta_method(columns: &[Vec<f64>], g: impl Fn(&[f64]) -> f64) -> Estimate {
    let n = columns[0].len();
    let means: Vec<f64> = columns.iter().map(|c| shifted_mean(c)).collect();
    let value = g(&means);
    let mut weights = vec![0.0; columns.len()];
    let mut probe = means.clone();
    for (j, c) in columns.iter().enumerate() {
        let spread = sd_of_mean(c.iter().map(|x| x - means[j]), n) * (n as f64).sqrt();
        if spread == 0.0 {
            continue;
        }
        let h = 1e-6 * means[j].abs().max(spread);
        probe[j] = means[j] + h;
        let up = g(&probe);
        probe[j] = means[j] - h;
        let down = g(&probe);
        probe[j] = means[j];
        weights[j] = (up - down) / (2.0 * h);
    }
    let psi = (0..n).map(|i| {
        columns
            .iter()
            .zip(&weights)
            .zip(&means)
            .map(|((c, w), m)| if *w == 0.0 { 0.0 } else { w * (c[i] - m) })
            .sum::<f64>()
    });
    let stderr = sd_of_mean(psi, n);
    Estimate {
        value,
        stderr: if stderr.is_finite() { stderr } else { f64::INFINITY },
        n,
    }
}

fn check_point(model: &ModelStructure, f: &dyn ScalarField, x: &DVector<f64>, t: f64) -> Result<()> {
    if x.len() != model.n() || f.dim() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {}, point {}, function {}",
            model.n(),
            x.len(),
            f.dim()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::BadArgument(format!("t must be finite and nonnegative, got {t}")));
    }
    Ok(())
}

fn gradient_at(f: &dyn ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    let mut g = vec![0.0; x.len()];
    f.gradient_into(x, &mut g);
    Ok(g)
}

/// `P_t f(x)`.
pub fn estimate_semigroup(model: &ModelStructure, f: &dyn ScalarField, t: f64, x: &DVector<f64>, mc: &McConfig) -> Result<Estimate> {
    check_point(model, f, x, t)?;
    if t == 0.0 {
        return Ok(Estimate::exact(f.value(x.as_slice())));
    }
    let batch = sample_law(model, x, t, mc)?;
    let cols = per_sample(&batch, 1, |y, out| out[0] = f.value(y));
    Ok(mean_estimate(&cols[0]))
}

/// `∇P_t f(x) = F(t)^T E[∇f(X_t)]`, the flow Jacobian being `F(t) = exp(tB^*)`.
pub fn grad_semigroup_pathwise(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    mc: &McConfig,
) -> Result<Vec<Estimate>> {
    check_point(model, f, x, t)?;
    let g0 = gradient_at(f, x.as_slice())?;
    if t == 0.0 {
        return Ok(g0.into_iter().map(Estimate::exact).collect());
    }
    let batch = sample_law(model, x, t, mc)?;
    let d = model.n();
    let cols = per_sample(&batch, d, |y, out| f.gradient_into(y, out));
    Ok(pathwise_from_columns(model, t, &cols))
}

/// Pushes sampled gradient columns through `F(t)^T`, propagating the per-sample spread.
pub fn pathwise_from_columns(model: &ModelStructure, t: f64, cols: &[Vec<f64>]) -> Vec<Estimate> {
    let ft = propagator(model, 1).eval(t).transpose();
    let d = cols.len();
    let n = cols[0].len();
    let means = DVector::from_iterator(d, cols.iter().map(|c| shifted_mean(c)));
    let value = &ft * &means;
    (0..d)
        .map(|i| {
            let row = ft.row(i);
            let devs = (0..n).map(|s| (0..d).map(|j| row[j] * (cols[j][s] - means[j])).sum::<f64>());
            Estimate {
                value: value[i],
                stderr: sd_of_mean(devs, n),
                n,
            }
        })
        .collect()
}

/// Central differences of `P_t f` in `x` with common random numbers.
pub fn grad_semigroup_fd(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    h: f64,
    mc: &McConfig,
) -> Result<Vec<Estimate>> {
    check_point(model, f, x, t)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::BadArgument(format!("step must be positive, got {h}")));
    }
    if t == 0.0 {
        return Ok((0..model.n())
            .map(|i| {
                let mut up = x.clone();
                let mut down = x.clone();
                up[i] += h;
                down[i] -= h;
                Estimate::exact((f.value(up.as_slice()) - f.value(down.as_slice())) / (2.0 * h))
            })
            .collect());
    }
    (0..model.n())
        .map(|i| {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let hi = sample_law(model, &up, t, mc)?;
            let lo = sample_law(model, &down, t, mc)?;
            let diffs: Vec<f64> = hi
                .rows()
                .zip(lo.rows())
                .map(|(a, b)| (f.value(a) - f.value(b)) / (2.0 * h))
                .collect();
            Ok(mean_estimate(&diffs))
        })
        .collect()
}

/// `Γ(f)(x) = ½ <A_0 ∇^{(1)} f, ∇^{(1)} f>`.
pub fn carre_du_champ(model: &ModelStructure, f: &dyn ScalarField, x: &DVector<f64>) -> Result<f64> {
    if x.len() != model.n() {
        return Err(Error::DimensionMismatch(format!("point has length {}, model {}", x.len(), model.n())));
    }
    let g = gradient_at(f, x.as_slice())?;
    Ok(0.5 * first_block_form(model, &g))
}

/// `‖g^{(1)}‖²_{A_0}`.
pub fn first_block_form(model: &ModelStructure, g: &[f64]) -> f64 {
    let m0 = model.dims()[0];
    let a0: &DMatrix<f64> = model.a0();
    let mut s = 0.0;
    for i in 0..m0 {
        for j in 0..m0 {
            s += a0[(i, j)] * g[i] * g[j];
        }
    }
    s
}

/// `P_t(f²) − (P_t f)²` as the batch mean of `(f − f̄)²`.
pub fn estimate_variance(model: &ModelStructure, f: &dyn ScalarField, t: f64, x: &DVector<f64>, mc: &McConfig) -> Result<Estimate> {
    check_point(model, f, x, t)?;
    if t == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let batch = sample_law(model, x, t, mc)?;
    let cols = per_sample(&batch, 1, |y, out| out[0] = f.value(y));
    Ok(variance_from_values(&cols[0]))
}

pub fn variance_from_values(vals: &[f64]) -> Estimate {
    let m = shifted_mean(vals);
    let sq: Vec<f64> = vals.iter().map(|v| (v - m) * (v - m)).collect();
    // influence of (f - m)² is itself centred, the mean shift only enters at second order
    mean_estimate(&sq)
}

/// `P_t(f ln f) − P_t f ln P_t f` as the batch mean of `f ln(f/f̄)`.
pub fn estimate_entropy(model: &ModelStructure, f: &dyn ScalarField, t: f64, x: &DVector<f64>, mc: &McConfig) -> Result<Estimate> {
    check_point(model, f, x, t)?;
    require_positive(f)?;
    if t == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let batch = sample_law(model, x, t, mc)?;
    let cols = per_sample(&batch, 1, |y, out| out[0] = f.value(y));
    entropy_from_values(&cols[0])
}

pub fn entropy_from_values(vals: &[f64]) -> Result<Estimate> {
    if let Some(bad) = vals.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::FunctionNotPositive(format!("sampled value {bad}")));
    }
    let m = shifted_mean(vals);
    let n = vals.len();
    let terms: Vec<f64> = vals.iter().map(|v| v * (v / m).ln()).collect();
    let value = shifted_mean(&terms).max(0.0);
    // d/dm of mean(f ln f) − m ln m is −(ln m + 1); in centred form the influence is f ln(f/m) − f
    let psi: Vec<f64> = terms.iter().zip(vals).map(|(u, v)| u - v).collect();
    let pm = shifted_mean(&psi);
    Ok(Estimate {
        value,
        stderr: sd_of_mean(psi.iter().map(|p| p - pm), n),
        n,
    })
}

pub fn require_positive(f: &dyn ScalarField) -> Result<()> {
    let p = f.props();
    if !p.positive || !p.lower_bound.is_some_and(|l| l > 0.0) {
        return Err(Error::FunctionNotPositive(
            "function is not flagged positive with a positive lower bound".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::polynomial_semigroup;
    use crate::polynomial::Polynomial;
    use crate::testfns::{make_testfn, TestFnSpec, TestFunction};

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    fn mc(n: usize) -> McConfig {
        McConfig::new(n, 17)
    }

    #[test]
    fn config_validation() {
        assert!(mc(10).validate().is_ok());
        assert!(mc(1).validate().is_err());
        let mut c = mc(10);
        c.batch = Some(11);
        assert!(c.validate().is_err());
        c.batch = Some(0);
        assert!(c.validate().is_err());
        c.batch = None;
        c.sigma_level = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn second_coordinate_of_kolmogorov() {
        let k = ModelStructure::kolmogorov();
        let f = Polynomial::var(2, 1);
        let x = v(&[1.0, 0.0]);
        let est = estimate_semigroup(&k, &f, 2.0, &x, &mc(100_000)).unwrap();
        let exact = polynomial_semigroup(&k, &f, 2.0, &x).unwrap();
        assert_eq!(exact, 2.0);
        assert!((est.value - exact).abs() < 3.0 * est.stderr, "{est:?}");
        let var = estimate_variance(&k, &f, 2.0, &x, &mc(100_000)).unwrap();
        assert!((var.value - 8.0 / 3.0).abs() < 3.0 * var.stderr, "{var:?}");
    }

    #[test]
    fn exact_cases() {
        let k = ModelStructure::kolmogorov();
        let x = v(&[0.4, -1.0]);
        let f = make_testfn(&TestFnSpec::Logistic {
            a: vec![1.0, 0.5],
            b: 0.0,
            scale: 1.0,
            delta: 0.1,
        })
        .unwrap();
        let e = estimate_semigroup(&k, &f, 0.0, &x, &mc(10)).unwrap();
        assert_eq!(e, Estimate::exact(f.value(x.as_slice())));
        assert_eq!(estimate_entropy(&k, &f, 0.0, &x, &mc(10)).unwrap().value, 0.0);

        let c = TestFunction::constant(2, 2.5);
        let e = estimate_semigroup(&k, &c, 1.0, &x, &mc(1000)).unwrap();
        assert_eq!((e.value, e.stderr), (2.5, 0.0));
        let var = estimate_variance(&k, &c, 1.0, &x, &mc(1000)).unwrap();
        assert_eq!((var.value, var.stderr), (0.0, 0.0));
        let ent = estimate_entropy(&k, &c, 1.0, &x, &mc(1000)).unwrap();
        assert_eq!((ent.value, ent.stderr), (0.0, 0.0));
    }

    #[test]
    fn pathwise_gradient_of_linear_function() {
        let k = ModelStructure::kolmogorov();
        let f = Polynomial::var(2, 1);
        for &t in &[0.0, 0.5, 3.0] {
            let g = grad_semigroup_pathwise(&k, &f, t, &v(&[0.2, 0.1]), &mc(1000)).unwrap();
            assert_eq!(g[0].value, t);
            assert_eq!(g[1].value, 1.0);
            assert!(g.iter().all(|e| e.stderr == 0.0));
            let fd = grad_semigroup_fd(&k, &f, t, &v(&[0.2, 0.1]), 0.5, &mc(1000)).unwrap();
            assert!((fd[0].value - t).abs() < 1e-12 && (fd[1].value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_gradient() {
        struct NoGrad;
        impl ScalarField for NoGrad {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, x: &[f64]) -> f64 {
                x[0]
            }
            fn has_gradient(&self) -> bool {
                false
            }
            fn gradient_into(&self, _: &[f64], _: &mut [f64]) {
                unreachable!()
            }
        }
        let k = ModelStructure::kolmogorov();
        let x = v(&[0.0, 0.0]);
        assert_eq!(grad_semigroup_pathwise(&k, &NoGrad, 1.0, &x, &mc(10)), Err(Error::MissingGradient));
        assert_eq!(carre_du_champ(&k, &NoGrad, &x), Err(Error::MissingGradient));
    }

    #[test]
    fn carre_du_champ_examples() {
        let k = ModelStructure::kolmogorov();
        let x = v(&[0.3, 0.7]);
        assert_eq!(carre_du_champ(&k, &Polynomial::var(2, 0), &x).unwrap(), 0.5);
        assert_eq!(carre_du_champ(&k, &Polynomial::var(2, 1), &x).unwrap(), 0.0);
        assert_eq!(carre_du_champ(&k, &TestFunction::constant(2, 1.0), &x).unwrap(), 0.0);
        // Γ(f) = ½(L f² − 2 f L f) with L = ½∂₁² + x₁∂₂, checked on f = x₁² + x₁x₂
        let f = Polynomial::from_terms(2, [(vec![2, 0], 1.0), (vec![1, 1], 1.0)]);
        let lap = |p: &Polynomial, x: &[f64]| 0.5 * p.derivative(0).derivative(0).eval(x) + x[0] * p.derivative(1).eval(x);
        let f2 = f.mul(&f);
        let xs = x.as_slice();
        let gamma = 0.5 * (lap(&f2, xs) - 2.0 * f.eval(xs) * lap(&f, xs));
        assert!((carre_du_champ(&k, &f, &x).unwrap() - gamma).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_unflagged() {
        let k = ModelStructure::kolmogorov();
        let f = Polynomial::var(2, 0);
        assert!(matches!(
            estimate_entropy(&k, &f, 1.0, &v(&[0.0, 0.0]), &mc(10)),
            Err(Error::FunctionNotPositive(_))
        ));
    }

    #[test]
    fn delta_method_matches_plain_mean_for_linear_functional() {
        let cols = vec![vec![1.0, 2.0, 4.0, 7.0], vec![0.5, 0.0, -1.0, 3.0]];
        let d = delta_method(&cols, |m| 2.0 * m[0] - m[1]);
        let combined: Vec<f64> = (0..4).map(|i| 2.0 * cols[0][i] - cols[1][i]).collect();
        let plain = mean_estimate(&combined);
        assert!((d.value - plain.value).abs() < 1e-14);
        assert!((d.stderr - plain.stderr).abs() < 1e-8 * plain.stderr);
    }

    #[test]
    fn entropy_stderr_matches_delta_method() {
        let vals: Vec<f64> = (1..200).map(|i| 1.0 + ((i * 37) % 101) as f64 / 50.0).collect();
        let ent = entropy_from_values(&vals).unwrap();
        let cols = vec![vals.iter().map(|v| v * v.ln()).collect::<Vec<_>>(), vals.clone()];
        let d = delta_method(&cols, |m| m[0] - m[1] * m[1].ln());
        assert!((ent.value - d.value).abs() < 1e-12);
        assert!((ent.stderr - d.stderr).abs() < 1e-6 * d.stderr);
    }

    #[test]
    fn seeds_reproduce() {
        let k = ModelStructure::kolmogorov();
        let f = make_testfn(&TestFnSpec::ExpNegQuadratic {
            q: vec![1.0, 0.0, 0.0, 0.5],
            center: None,
        })
        .unwrap();
        let x = v(&[0.1, 0.1]);
        let a = estimate_semigroup(&k, &f, 1.0, &x, &mc(5000)).unwrap();
        let b = estimate_semigroup(&k, &f, 1.0, &x, &mc(5000)).unwrap();
        assert_eq!(a, b);
        let c = estimate_semigroup(&k, &f, 1.0, &x, &mc(5000).with_seed(18)).unwrap();
        assert_ne!(a.value, c.value);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }
}
