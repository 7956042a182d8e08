//! Sparse multivariate polynomials with real coefficients.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rand::Rng;

/// `Σ c_α x^α`, keyed by exponent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    /// `<a, x> + b`.
    pub fn linear(a: &[f64], b: f64) -> Self {
        let mut p = Self::constant(a.len(), b);
        for (i, &ai) in a.iter().enumerate() {
            p = p.add(&Self::var(a.len(), i).scale(ai));
        }
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length");
            p.add_term(e, c);
        }
        p
    }

    fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(exps) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    /// `∂f/∂x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.add_term(d, c * e[i] as f64);
            }
        }
        out
    }

    /// `Σ_ij m_ij ∂_i f ∂_j f` for a symmetric weight matrix given row-major.
    pub fn gradient_form(&self, weights: &nalgebra::DMatrix<f64>) -> Polynomial {
        let grads: Vec<Polynomial> = (0..self.nvars).map(|i| self.derivative(i)).collect();
        let mut out = Polynomial::zero(self.nvars);
        for i in 0..self.nvars {
            for j in 0..self.nvars {
                let w = weights[(i, j)];
                if w != 0.0 {
                    out = out.add(&grads[i].mul(&grads[j]).scale(w));
                }
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "dimension mismatch");
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, &xi)| xi.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nvars).map(|i| self.derivative(i).eval(x)).collect()
    }

    /// Random polynomial with `terms` monomials of total degree at most `max_degree`
    /// and coefficients uniform in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, nvars: usize, max_degree: u32, terms: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        for _ in 0..terms {
            let total = rng.gen_range(0..=max_degree);
            let mut e = vec![0u32; nvars];
            for _ in 0..total {
                e[rng.gen_range(0..nvars)] += 1;
            }
            p.add_term(e, rng.gen_range(-1.0..1.0));
        }
        p
    }
}
