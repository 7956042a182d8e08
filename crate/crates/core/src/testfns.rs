//! Analytic test functions with exact gradients and the hypothesis flags the
//! inequality checks look at.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;

/// Anything the estimators can integrate: a value and, optionally, an exact gradient.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn has_gradient(&self) -> bool {
        true
    }
    /// Writes `∇f(x)` into `out`. Only called when [`ScalarField::has_gradient`] holds.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);
    fn props(&self) -> Props {
        Props::default()
    }
}

/// Hypothesis metadata. `positive` means `f ≥ lower_bound > 0` everywhere.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Props {
    pub bounded: bool,
    pub positive: bool,
    pub nonnegative: bool,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub globally_lipschitz: bool,
    pub lipschitz_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Linear,
    Quadratic,
    Logistic,
    ExpNegQuadratic,
    ShiftedPositive,
}

/// Declarative parameters, as written in a config file. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFnSpec {
    /// `<a, x> + b`
    Linear {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
    },
    /// `x^T Q x + <a, x> + c`
    Quadratic {
        q: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
        #[serde(default)]
        c: f64,
    },
    /// `scale / (1 + exp(-<a, x> - b)) + delta`
    Logistic {
        a: Vec<f64>,
        #[serde(default)]
        b: f64,
        scale: f64,
        #[serde(default)]
        delta: f64,
    },
    /// `exp(-(x - c)^T Q (x - c))` with `Q` positive semidefinite.
    ExpNegQuadratic {
        q: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// `inner + delta` for a nonnegative bounded `inner`.
    ShiftedPositive { delta: f64, inner: Box<TestFnSpec> },
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Linear {
        a: DVector<f64>,
        b: f64,
    },
    Quadratic {
        q: DMatrix<f64>,
        a: DVector<f64>,
        c: f64,
    },
    Logistic {
        a: DVector<f64>,
        b: f64,
        scale: f64,
        delta: f64,
    },
    ExpNegQuadratic {
        q: DMatrix<f64>,
        center: DVector<f64>,
    },
    Shifted {
        inner: Box<Form>,
        delta: f64,
    },
}

impl Form {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Form::Linear { a, b } => dot(a.as_slice(), x) + b,
            Form::Quadratic { q, a, c } => quad(q, x) + dot(a.as_slice(), x) + c,
            Form::Logistic { a, b, scale, delta } => scale * sigmoid(dot(a.as_slice(), x) + b) + delta,
            Form::ExpNegQuadratic { q, center } => {
                let d: Vec<f64> = x.iter().zip(center.iter()).map(|(a, b)| a - b).collect();
                (-quad(q, &d)).exp()
            }
            Form::Shifted { inner, delta } => inner.value(x) + delta,
        }
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Form::Linear { a, .. } => out.copy_from_slice(a.as_slice()),
            Form::Quadratic { q, a, .. } => {
                for i in 0..out.len() {
                    let mut s = a[i];
                    for j in 0..out.len() {
                        s += 2.0 * q[(i, j)] * x[j];
                    }
                    out[i] = s;
                }
            }
            Form::Logistic { a, b, scale, .. } => {
                let s = sigmoid(dot(a.as_slice(), x) + b);
                let w = scale * s * (1.0 - s);
                for (o, ai) in out.iter_mut().zip(a.iter()) {
                    *o = w * ai;
                }
            }
            Form::ExpNegQuadratic { q, center } => {
                let d: Vec<f64> = x.iter().zip(center.iter()).map(|(a, b)| a - b).collect();
                let e = (-quad(q, &d)).exp();
                for i in 0..out.len() {
                    let mut s = 0.0;
                    for j in 0..out.len() {
                        s += q[(i, j)] * d[j];
                    }
                    out[i] = -2.0 * e * s;
                }
            }
            Form::Shifted { inner, .. } => inner.gradient_into(x, out),
        }
    }
}

fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn quad(q: &DMatrix<f64>, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += x[i] * q[(i, j)] * x[j];
        }
    }
    s
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub kind: Kind,
    pub spec: TestFnSpec,
    pub props: Props,
    dim: usize,
    form: Form,
}

fn square(data: &[f64], what: &str) -> Result<(usize, DMatrix<f64>)> {
    let n = (data.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != data.len() {
        return Err(Error::BadParams(format!("{what} must be a square matrix, got {} entries", data.len())));
    }
    let m = DMatrix::from_row_slice(n, n, data);
    Ok((n, (&m + m.transpose()) * 0.5))
}

fn finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::BadParams(format!("{what} has non-finite entries")))
    }
}

fn build(spec: &TestFnSpec) -> Result<(Kind, usize, Form, Props)> {
    match spec {
        TestFnSpec::Linear { a, b } => {
            finite(a, "a")?;
            if a.is_empty() {
                return Err(Error::BadParams("linear: a must be nonempty".into()));
            }
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let constant = norm == 0.0;
            let props = Props {
                bounded: constant,
                positive: constant && *b > 0.0,
                nonnegative: constant && *b >= 0.0,
                lower_bound: constant.then_some(*b),
                upper_bound: constant.then_some(*b),
                globally_lipschitz: true,
                lipschitz_constant: Some(norm),
            };
            Ok((
                Kind::Linear,
                a.len(),
                Form::Linear {
                    a: DVector::from_row_slice(a),
                    b: *b,
                },
                props,
            ))
        }
        TestFnSpec::Quadratic { q, a, c } => {
            finite(q, "q")?;
            let (n, q) = square(q, "q")?;
            let a = match a {
                Some(a) if a.len() != n => {
                    return Err(Error::BadParams(format!("quadratic: a has length {}, expected {n}", a.len())))
                }
                Some(a) => DVector::from_row_slice(a),
                None => DVector::zeros(n),
            };
            let flat = q.iter().all(|v| *v == 0.0);
            let props = Props {
                globally_lipschitz: flat,
                lipschitz_constant: flat.then(|| a.norm()),
                ..Props::default()
            };
            Ok((Kind::Quadratic, n, Form::Quadratic { q, a, c: *c }, props))
        }
        TestFnSpec::Logistic { a, b, scale, delta } => {
            finite(a, "a")?;
            if a.is_empty() {
                return Err(Error::BadParams("logistic: a must be nonempty".into()));
            }
            if !(*scale > 0.0) || !scale.is_finite() {
                return Err(Error::BadParams(format!("logistic: scale must be positive, got {scale}")));
            }
            if !(*delta >= 0.0) || !delta.is_finite() {
                return Err(Error::BadParams(format!("logistic: delta must be nonnegative, got {delta}")));
            }
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let props = Props {
                bounded: true,
                positive: *delta > 0.0,
                nonnegative: true,
                lower_bound: Some(*delta),
                upper_bound: Some(scale + delta),
                globally_lipschitz: true,
                lipschitz_constant: Some(0.25 * scale * norm),
            };
            Ok((
                Kind::Logistic,
                a.len(),
                Form::Logistic {
                    a: DVector::from_row_slice(a),
                    b: *b,
                    scale: *scale,
                    delta: *delta,
                },
                props,
            ))
        }
        TestFnSpec::ExpNegQuadratic { q, center } => {
            finite(q, "q")?;
            let (n, q) = square(q, "q")?;
            let eig = q.clone().symmetric_eigen().eigenvalues;
            let scale = eig.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            if eig.min() < -1e-12 * scale {
                return Err(Error::BadParams("exp-neg-quadratic: q must be positive semidefinite".into()));
            }
            let center = match center {
                Some(c) if c.len() != n => {
                    return Err(Error::BadParams(format!("center has length {}, expected {n}", c.len())))
                }
                Some(c) => DVector::from_row_slice(c),
                None => DVector::zeros(n),
            };
            let lmax = eig.max().max(0.0);
            let props = Props {
                bounded: true,
                positive: false,
                nonnegative: true,
                lower_bound: Some(0.0),
                upper_bound: Some(1.0),
                globally_lipschitz: true,
                lipschitz_constant: Some((2.0 / std::f64::consts::E).sqrt() * lmax.sqrt()),
            };
            Ok((Kind::ExpNegQuadratic, n, Form::ExpNegQuadratic { q, center }, props))
        }
        TestFnSpec::ShiftedPositive { delta, inner } => {
            if !(*delta > 0.0) || !delta.is_finite() {
                return Err(Error::BadParams(format!("shifted-positive: delta must be positive, got {delta}")));
            }
            let (_, n, form, p) = build(inner)?;
            if !p.nonnegative || !p.bounded {
                return Err(Error::BadParams(
                    "shifted-positive: inner function must be nonnegative and bounded".into(),
                ));
            }
            let lower = p.lower_bound.unwrap_or(0.0) + delta;
            let props = Props {
                bounded: true,
                positive: true,
                nonnegative: true,
                lower_bound: Some(lower),
                upper_bound: p.upper_bound.map(|u| u + delta),
                globally_lipschitz: p.globally_lipschitz,
                lipschitz_constant: p.lipschitz_constant,
            };
            Ok((
                Kind::ShiftedPositive,
                n,
                Form::Shifted {
                    inner: Box::new(form),
                    delta: *delta,
                },
                props,
            ))
        }
    }
}

pub fn make_testfn(spec: &TestFnSpec) -> Result<TestFunction> {
    let (kind, dim, form, props) = build(spec)?;
    Ok(TestFunction {
        kind,
        spec: spec.clone(),
        props,
        dim,
        form,
    })
}

impl TestFunction {
    pub fn constant(dim: usize, c: f64) -> Self {
        make_testfn(&TestFnSpec::Linear { a: vec![0.0; dim], b: c }).expect("constant is valid")
    }

    /// The same function as a [`Polynomial`], for linear and quadratic kinds.
    pub fn as_polynomial(&self) -> Option<Polynomial> {
        match &self.form {
            Form::Linear { a, b } => Some(Polynomial::linear(a.as_slice(), *b)),
            Form::Quadratic { q, a, c } => {
                let n = self.dim;
                let mut p = Polynomial::linear(a.as_slice(), *c);
                for i in 0..n {
                    for j in 0..n {
                        let xi = Polynomial::var(n, i);
                        p = p.add(&xi.mul(&Polynomial::var(n, j)).scale(q[(i, j)]));
                    }
                }
                Some(p)
            }
            _ => None,
        }
    }
}

impl ScalarField for TestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.form.value(x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.form.gradient_into(x, out)
    }

    fn props(&self) -> Props {
        self.props
    }
}

impl ScalarField for Polynomial {
    fn dim(&self) -> usize {
        self.nvars()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (exps, c) in self.terms() {
            for i in 0..exps.len() {
                if exps[i] == 0 {
                    continue;
                }
                let mut term = c * exps[i] as f64;
                for (j, (&k, &xj)) in exps.iter().zip(x).enumerate() {
                    let k = if j == i { k - 1 } else { k };
                    term *= xj.powi(k as i32);
                }
                out[i] += term;
            }
        }
    }
}

fn check_dim(f: &dyn ScalarField, x: &[f64]) -> Result<()> {
    if f.dim() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "test function has dimension {}, point has length {}",
            f.dim(),
            x.len()
        )));
    }
    Ok(())
}

pub fn evaluate(f: &dyn ScalarField, x: &[f64]) -> Result<f64> {
    check_dim(f, x)?;
    Ok(f.value(x))
}

pub fn gradient(f: &dyn ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(f, x)?;
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    let mut out = vec![0.0; x.len()];
    f.gradient_into(x, &mut out);
    Ok(out)
}
