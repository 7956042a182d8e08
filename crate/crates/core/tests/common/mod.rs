#![allow(dead_code)]

use kolmogorov_bounds::matfun::{covariance_paper, factor_spd};
use kolmogorov_bounds::model::{dilation, ModelStructure};
use kolmogorov_bounds::testfns::{make_testfn, TestFnSpec, TestFunction};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Logistic plus a positive shift; bounded above by `1 + delta`.
pub fn random_logistic<R: Rng>(rng: &mut R, n: usize) -> (TestFunction, f64) {
    let delta = rng.gen_range(0.05..0.5);
    let spec = TestFnSpec::Logistic {
        a: uniform_vec(rng, n, -1.0, 1.0),
        b: rng.gen_range(-0.5..0.5),
        scale: 1.0,
        delta,
    };
    (make_testfn(&spec).unwrap(), 1.0 + delta)
}

/// Shifted Gaussian bump `exp(-(x-c)^T Q (x-c)) + delta`; bounded above by `1 + delta`.
pub fn random_bump<R: Rng>(rng: &mut R, n: usize) -> (TestFunction, f64) {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.6..0.6));
    let q = &g * g.transpose() + DMatrix::identity(n, n) * 0.05;
    let delta = rng.gen_range(0.05..0.5);
    let mut qv = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            qv.push(q[(i, j)]);
        }
    }
    let spec = TestFnSpec::ShiftedPositive {
        delta,
        inner: Box::new(TestFnSpec::ExpNegQuadratic {
            q: qv,
            center: Some(uniform_vec(rng, n, -1.0, 1.0)),
        }),
    };
    (make_testfn(&spec).unwrap(), 1.0 + delta)
}

/// `y = x + δ_{√t} u` with `<C(1)^{-1} u, u> = q`, so that `<C(t)^{-1}(y−x), y−x> = q`.
pub fn harnack_partner<R: Rng>(rng: &mut R, model: &ModelStructure, x: &DVector<f64>, t: f64, q: f64) -> DVector<f64> {
    let n = model.n();
    let w = DVector::from_vec(uniform_vec(rng, n, -1.0, 1.0));
    let fac = factor_spd(&covariance_paper(model).eval(1.0)).unwrap();
    let u = &w * (q / fac.inverse_form(&w)).sqrt();
    x + dilation(model, t.sqrt()).unwrap().matrix() * u
}
