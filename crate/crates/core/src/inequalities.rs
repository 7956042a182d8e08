//! One check per inequality: both sides with error bars, a margin and a verdict.
//!
//! Sides that are expectations under the same law share one batch, and the
//! margin's standard error comes from the delta method over that batch, so the
//! correlation between the sides is accounted for. All weight matrices are
//! exact closed forms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coupling::{propagated_alpha, reverse_alpha};
use crate::error::{Error, Result};
use crate::estimator::{
    delta_method, derive_seed, mean_estimate, per_sample, require_positive, sample_law, shifted_mean, Estimate, McConfig,
};
use crate::kernel::polynomial_semigroup;
use crate::matfun::{covariance_paper, covariance_sde, factor_spd, propagator};
use crate::model::{dilation, ModelStructure};
use crate::polynomial::Polynomial;
use crate::testfns::ScalarField;

/// Relative slack for rounding in exact or sample-wise exact comparisons.
pub const ROUNDING_TOL: f64 = 1e-10;
/// Tolerance of the scaling identity.
pub const SCALING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    Be,
    Logbe,
    Poincare,
    Lsi,
    WangHarnack,
    Hamilton,
    HarnackPower,
    Scaling,
}

impl InequalityId {
    pub const ALL: [InequalityId; 8] = [
        InequalityId::Be,
        InequalityId::Logbe,
        InequalityId::Poincare,
        InequalityId::Lsi,
        InequalityId::WangHarnack,
        InequalityId::Hamilton,
        InequalityId::HarnackPower,
        InequalityId::Scaling,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InequalityId::Be => "be",
            InequalityId::Logbe => "logbe",
            InequalityId::Poincare => "poincare",
            InequalityId::Lsi => "lsi",
            InequalityId::WangHarnack => "wang_harnack",
            InequalityId::Hamilton => "hamilton",
            InequalityId::HarnackPower => "harnack_power",
            InequalityId::Scaling => "scaling",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    General,
    Right,
    Reverse,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::General => "general",
            Variant::Right => "right",
            Variant::Reverse => "reverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

/// Everything needed to rerun a check bit-for-bit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_id: Option<String>,
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harnack_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_bound: Option<f64>,
    pub seeds: Vec<u64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    pub sigma_level: f64,
    /// Reason for a skip, or the evaluation mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `lhs ≤ rhs` is the asserted direction; `margin = rhs − lhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub inequality_id: InequalityId,
    pub variant: Variant,
    pub lhs: Estimate,
    pub rhs: Estimate,
    #[serde(with = "crate::estimator::lenient_f64")]
    pub margin: f64,
    #[serde(with = "crate::estimator::lenient_f64")]
    pub margin_stderr: f64,
    pub verdict: Verdict,
    pub context: CheckContext,
}

impl CheckReport {
    /// A placeholder for a check that could not be run.
    pub fn skipped(id: InequalityId, variant: Variant, mut context: CheckContext, reason: &Error) -> Self {
        context.note = Some(reason.to_string());
        let nan = Estimate {
            value: f64::NAN,
            stderr: f64::NAN,
            n: 0,
        };
        Self {
            inequality_id: id,
            variant,
            lhs: nan,
            rhs: nan,
            margin: f64::NAN,
            margin_stderr: f64::NAN,
            verdict: Verdict::Skip,
            context,
        }
    }
}

/// `margin ≥ −(k·stderr + rounding slack)`.
pub fn verdict(lhs: f64, rhs: f64, margin: f64, margin_stderr: f64, sigma_level: f64) -> Verdict {
    if margin.is_nan() {
        return Verdict::Fail;
    }
    let scale = 1f64.max(lhs.abs()).max(rhs.abs());
    let slack = if scale.is_finite() { ROUNDING_TOL * scale } else { 0.0 };
    let stat = if margin_stderr.is_finite() { sigma_level * margin_stderr } else { f64::INFINITY };
    if margin >= -(stat + slack) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn context(t: f64, x: &DVector<f64>, mc: &McConfig, seeds: Vec<u64>) -> CheckContext {
    CheckContext {
        t,
        x: x.iter().copied().collect(),
        seeds,
        n: mc.n,
        batch: mc.batch,
        sigma_level: mc.sigma_level,
        ..Default::default()
    }
}

fn report(
    id: InequalityId,
    variant: Variant,
    lhs: Estimate,
    rhs: Estimate,
    margin: Estimate,
    sigma_level: f64,
    context: CheckContext,
) -> CheckReport {
    CheckReport {
        inequality_id: id,
        variant,
        lhs,
        rhs,
        margin: margin.value,
        margin_stderr: margin.stderr,
        verdict: verdict(lhs.value, rhs.value, margin.value, margin.stderr, sigma_level),
        context,
    }
}

/// Scores `lhs(means) ≤ rhs(means)` over one batch of per-sample columns.
/// A single-column batch of length one is a deterministic evaluation.
fn score_shared(
    id: InequalityId,
    variant: Variant,
    cols: &[Vec<f64>],
    lhs: impl Fn(&[f64]) -> f64,
    rhs: impl Fn(&[f64]) -> f64,
    sigma_level: f64,
    ctx: CheckContext,
) -> CheckReport {
    if cols[0].len() == 1 {
        let m: Vec<f64> = cols.iter().map(|c| c[0]).collect();
        let (l, r) = (lhs(&m), rhs(&m));
        return report(
            id,
            variant,
            Estimate::exact(l),
            Estimate::exact(r),
            Estimate::exact(r - l),
            sigma_level,
            ctx,
        );
    }
    let l = delta_method(cols, &lhs);
    let r = delta_method(cols, &rhs);
    let m = delta_method(cols, |m| rhs(m) - lhs(m));
    report(id, variant, l, r, m, sigma_level, ctx)
}

fn score_independent(id: InequalityId, variant: Variant, lhs: Estimate, rhs: Estimate, sigma_level: f64, ctx: CheckContext) -> CheckReport {
    let margin = Estimate {
        value: rhs.value - lhs.value,
        stderr: lhs.stderr.hypot(rhs.stderr),
        n: lhs.n.max(rhs.n),
    };
    report(id, variant, lhs, rhs, margin, sigma_level, ctx)
}

fn quad(w: &DMatrix<f64>, g: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..g.len() {
        if g[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..g.len() {
            row += w[(i, j)] * g[j];
        }
        s += g[i] * row;
    }
    s
}

/// `W` with `<W g, g> = ‖Σ_k w_k B_1⋯B_k g^{(k+1)}‖²_{A_0}`.
pub fn chain_weight(model: &ModelStructure, w: &[f64]) -> DMatrix<f64> {
    let chain = model.chain_products();
    let m0 = model.dims()[0];
    let mut q = DMatrix::zeros(m0, model.n());
    for (k, p) in chain.iter().enumerate() {
        let wk = w.get(k).copied().unwrap_or(0.0);
        if wk != 0.0 {
            q.view_mut((0, model.offsets()[k]), p.shape()).copy_from(&(p * wk));
        }
    }
    q.transpose() * model.a0() * q
}

/// Checks `α_1 = 1` and pads with zeros to `r + 1` weights.
pub fn normalize_alpha(model: &ModelStructure, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.first() != Some(&1.0) {
        return Err(Error::BadAlpha(format!("alpha_1 must equal 1, got {:?}", alpha.first())));
    }
    if alpha.len() > model.r() + 1 {
        return Err(Error::BadAlpha(format!(
            "at most {} weights for r = {}, got {}",
            model.r() + 1,
            model.r(),
            alpha.len()
        )));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::BadAlpha("non-finite weight".into()));
    }
    let mut out = alpha.to_vec();
    out.resize(model.r() + 1, 0.0);
    Ok(out)
}

fn be_alpha(model: &ModelStructure, t: f64, variant: Variant, alpha: Option<&[f64]>) -> Result<Vec<f64>> {
    match variant {
        Variant::Right => {
            let mut a = vec![0.0; model.r() + 1];
            a[0] = 1.0;
            Ok(a)
        }
        Variant::Reverse => Ok(reverse_alpha(model.r(), t)),
        Variant::General => normalize_alpha(
            model,
            alpha.ok_or_else(|| Error::BadAlpha("general variant needs alpha".into()))?,
        ),
    }
}

fn check_dims(model: &ModelStructure, f: &dyn ScalarField, x: &DVector<f64>, t: f64) -> Result<()> {
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

/// Columns `[f, ∂_1 f, …, ∂_N f, extra…]` over the batch at `(x, t)`; at `t = 0`
/// a single row evaluated at `x`.
fn gradient_columns<S>(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    mc: &McConfig,
    extra: usize,
    stat: S,
) -> Result<Vec<Vec<f64>>>
where
    S: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    if !f.has_gradient() {
        return Err(Error::MissingGradient);
    }
    let d = model.n();
    let eval = |y: &[f64], out: &mut [f64]| {
        let (head, tail) = out.split_at_mut(1 + d);
        head[0] = f.value(y);
        f.gradient_into(y, &mut head[1..]);
        stat(head[0], &head[1..], tail);
    };
    if t == 0.0 {
        let mut out = vec![0.0; 1 + d + extra];
        eval(x.as_slice(), &mut out);
        return Ok(out.into_iter().map(|v| vec![v]).collect());
    }
    let batch = sample_law(model, x, t, mc)?;
    Ok(per_sample(&batch, 1 + d + extra, eval))
}

fn value_column(model: &ModelStructure, f: &dyn ScalarField, t: f64, x: &DVector<f64>, mc: &McConfig) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(vec![f.value(x.as_slice())]);
    }
    let batch = sample_law(model, x, t, mc)?;
    Ok(per_sample(&batch, 1, |y, out| out[0] = f.value(y)).remove(0))
}

fn grad_p(ft: &DMatrix<f64>, m: &[f64], d: usize) -> Vec<f64> {
    let g = DVector::from_row_slice(&m[1..1 + d]);
    (ft * g).iter().copied().collect()
}

/// Gradient bound `‖L_α ∇P_t f‖²_{A_0} ≤ P_t ‖L_β ∇f‖²_{A_0}` with `β` the propagated weights.
pub fn check_be(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    variant: Variant,
    alpha: Option<&[f64]>,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    let a = be_alpha(model, t, variant, alpha)?;
    let beta = propagated_alpha(&a, t);
    let wa = chain_weight(model, &a);
    let wb = chain_weight(model, &beta);
    let ft = propagator(model, 1).eval(t).transpose();
    let d = model.n();
    let cols = gradient_columns(model, f, t, x, mc, 1, |_, g, out| out[0] = quad(&wb, g))?;
    let mut ctx = context(t, x, mc, vec![mc.seed]);
    ctx.alpha = Some(a.clone());
    Ok(score_shared(
        InequalityId::Be,
        variant,
        &cols,
        |m| quad(&wa, &grad_p(&ft, m, d)),
        |m| m[1 + d],
        mc.sigma_level,
        ctx,
    ))
}

/// Logarithmic gradient bound `P_t f ‖L_α ∇ln P_t f‖²_{A_0} ≤ P_t(f ‖L_β ∇ln f‖²_{A_0})`.
pub fn check_logbe(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    variant: Variant,
    alpha: Option<&[f64]>,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    require_positive(f)?;
    let a = be_alpha(model, t, variant, alpha)?;
    let beta = propagated_alpha(&a, t);
    let wa = chain_weight(model, &a);
    let wb = chain_weight(model, &beta);
    let ft = propagator(model, 1).eval(t).transpose();
    let d = model.n();
    // f ‖∇ln f‖² = ‖∇f‖²/f
    let cols = gradient_columns(model, f, t, x, mc, 1, |v, g, out| out[0] = quad(&wb, g) / v)?;
    let mut ctx = context(t, x, mc, vec![mc.seed]);
    ctx.alpha = Some(a.clone());
    Ok(score_shared(
        InequalityId::Logbe,
        variant,
        &cols,
        |m| quad(&wa, &grad_p(&ft, m, d)) / m[0],
        |m| m[1 + d],
        mc.sigma_level,
        ctx,
    ))
}

/// Right: `Var ≤ P_t<C_+(t)∇f, ∇f>`. Reverse: `<C(t)∇P_t f, ∇P_t f> ≤ Var`.
pub fn check_poincare(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    variant: Variant,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    let d = model.n();
    let ctx = context(t, x, mc, vec![mc.seed]);
    match variant {
        Variant::Right => {
            let cplus = covariance_sde(model).eval(t);
            let mut cols = gradient_columns(model, f, t, x, mc, 2, |_, g, out| out[1] = quad(&cplus, g))?;
            center_squares(&mut cols, 1 + d);
            Ok(score_shared(
                InequalityId::Poincare,
                variant,
                &cols,
                |m| m[1 + d],
                |m| m[2 + d],
                mc.sigma_level,
                ctx,
            ))
        }
        Variant::Reverse => {
            let c = covariance_paper(model).eval(t);
            let ft = propagator(model, 1).eval(t).transpose();
            let mut cols = gradient_columns(model, f, t, x, mc, 1, |_, _, _| {})?;
            center_squares(&mut cols, 1 + d);
            Ok(score_shared(
                InequalityId::Poincare,
                variant,
                &cols,
                |m| quad(&c, &grad_p(&ft, m, d)),
                |m| m[1 + d],
                mc.sigma_level,
                ctx,
            ))
        }
        Variant::General => Err(Error::BadArgument("poincare has right and reverse variants only".into())),
    }
}

/// Fills column `k` with `(f − f̄)²`, whose mean is the plug-in variance.
fn center_squares(cols: &mut [Vec<f64>], k: usize) {
    let m = shifted_mean(&cols[0]);
    let sq: Vec<f64> = cols[0].iter().map(|v| (v - m) * (v - m)).collect();
    cols[k] = sq;
}

/// Poincaré sides for a polynomial, integrated exactly by Gaussian moments.
pub fn check_poincare_exact(model: &ModelStructure, f: &Polynomial, t: f64, x: &DVector<f64>, variant: Variant) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    let pf = polynomial_semigroup(model, f, t, x)?;
    let var = (polynomial_semigroup(model, &f.mul(f), t, x)? - pf * pf).max(0.0);
    let mut ctx = CheckContext {
        t,
        x: x.iter().copied().collect(),
        sigma_level: 0.0,
        note: Some("exact".into()),
        ..Default::default()
    };
    let (lhs, rhs) = match variant {
        Variant::Right => {
            let cplus = covariance_sde(model).eval(t);
            (var, polynomial_semigroup(model, &f.gradient_form(&cplus), t, x)?)
        }
        Variant::Reverse => {
            let grads: Vec<f64> = (0..model.n())
                .map(|i| polynomial_semigroup(model, &f.derivative(i), t, x))
                .collect::<Result<_>>()?;
            let ft = propagator(model, 1).eval(t).transpose();
            let g = &ft * DVector::from_vec(grads);
            (quad(&covariance_paper(model).eval(t), g.as_slice()), var)
        }
        Variant::General => return Err(Error::BadArgument("poincare has right and reverse variants only".into())),
    };
    ctx.n = 0;
    Ok(report(
        InequalityId::Poincare,
        variant,
        Estimate::exact(lhs),
        Estimate::exact(rhs),
        Estimate::exact(rhs - lhs),
        0.0,
        ctx,
    ))
}

/// Right: `Ent ≤ ½P_t(<C_+∇f, ∇f>/f)`. Reverse: `½<C ∇P_t f, ∇P_t f>/P_t f ≤ Ent`.
pub fn check_lsi(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    variant: Variant,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    require_positive(f)?;
    let d = model.n();
    let ctx = context(t, x, mc, vec![mc.seed]);
    let cplus = covariance_sde(model).eval(t);
    let right = variant == Variant::Right;
    if variant == Variant::General {
        return Err(Error::BadArgument("lsi has right and reverse variants only".into()));
    }
    let mut cols = gradient_columns(model, f, t, x, mc, 2, |v, g, out| {
        if right {
            out[1] = 0.5 * quad(&cplus, g) / v;
        }
    })?;
    if let Some(bad) = cols[0].iter().find(|v| !(**v > 0.0)) {
        return Err(Error::FunctionNotPositive(format!("sampled value {bad}")));
    }
    // Ent = mean(f ln(f/a)) − m ln(m/a) with the anchor a the batch mean of f.
    let anchor = shifted_mean(&cols[0]);
    cols[1 + d] = cols[0].iter().map(|v| v * (v / anchor).ln()).collect();
    let ent = move |m: &[f64]| (m[1 + d] - m[0] * (m[0] / anchor).ln()).max(0.0);
    if right {
        Ok(score_shared(InequalityId::Lsi, variant, &cols, ent, |m| m[2 + d], mc.sigma_level, ctx))
    } else {
        let c = covariance_paper(model).eval(t);
        let ft = propagator(model, 1).eval(t).transpose();
        Ok(score_shared(
            InequalityId::Lsi,
            variant,
            &cols,
            |m| 0.5 * quad(&c, &grad_p(&ft, m, d)) / m[0],
            ent,
            mc.sigma_level,
            ctx,
        ))
    }
}

/// `exp(α/(2(α−1)) <C(t)^{-1}(y−x), y−x>)`; `+∞` at `t = 0` unless `x = y`.
pub fn harnack_constant(model: &ModelStructure, t: f64, x: &DVector<f64>, y: &DVector<f64>, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::BadAlpha(format!("Harnack power must exceed 1, got {alpha}")));
    }
    if x.len() != model.n() || y.len() != model.n() {
        return Err(Error::DimensionMismatch("Harnack points must match the model dimension".into()));
    }
    let diff = y - x;
    if t == 0.0 {
        return Ok(if diff.iter().all(|d| *d == 0.0) { 1.0 } else { f64::INFINITY });
    }
    let fac = factor_spd(&covariance_paper(model).eval(t))?;
    Ok((alpha / (2.0 * (alpha - 1.0)) * fac.inverse_form(&diff)).exp())
}

fn check_nonnegative(f: &dyn ScalarField) -> Result<()> {
    let p = f.props();
    if !(p.nonnegative || p.positive) || !p.bounded {
        return Err(Error::FunctionNotPositive(
            "function is not flagged nonnegative and bounded".into(),
        ));
    }
    Ok(())
}

fn power_estimate(vals: &[f64], alpha: f64) -> Estimate {
    let pow: Vec<f64> = vals.iter().map(|v| v.powf(alpha)).collect();
    if pow.len() == 1 {
        Estimate::exact(pow[0])
    } else {
        mean_estimate(&pow)
    }
}

fn mean_or_exact(vals: &[f64]) -> Estimate {
    if vals.len() == 1 {
        Estimate::exact(vals[0])
    } else {
        mean_estimate(vals)
    }
}

/// `(P_t f(x))^α ≤ C_α P_t(f^α)(y)`, the two sides from independent streams.
#[allow(clippy::too_many_arguments)]
pub fn check_wang_harnack(
    model: &ModelStructure,
    f: &dyn ScalarField,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    alpha: f64,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    check_nonnegative(f)?;
    let k = harnack_constant(model, t, x, y, alpha)?;
    let seed_y = derive_seed(mc.seed, 1);
    let ux = mean_or_exact(&value_column(model, f, t, x, mc)?);
    let py = power_estimate(&value_column(model, f, t, y, &mc.with_seed(seed_y))?, alpha);
    let lhs = Estimate {
        value: ux.value.powf(alpha),
        stderr: alpha * ux.value.powf(alpha - 1.0) * ux.stderr,
        n: ux.n,
    };
    let rhs = Estimate {
        value: k * py.value,
        stderr: k * py.stderr,
        n: py.n,
    };
    let mut ctx = context(t, x, mc, vec![mc.seed, seed_y]);
    ctx.y = Some(y.iter().copied().collect());
    ctx.harnack_alpha = Some(alpha);
    Ok(score_independent(InequalityId::WangHarnack, Variant::General, lhs, rhs, mc.sigma_level, ctx))
}

fn check_bound(vals: &[f64], bound: f64) -> Result<()> {
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::BadArgument(format!("C_bound must be positive, got {bound}")));
    }
    if let Some(&v) = vals.iter().find(|v| **v > bound) {
        return Err(Error::BoundViolated { value: v, bound });
    }
    if let Some(&v) = vals.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::FunctionNotPositive(format!("sampled value {v}")));
    }
    Ok(())
}

/// `½<C(t)∇ln u, ∇ln u> ≤ ln(C_bound/u)` with `u = P_t f`.
pub fn check_hamilton(
    model: &ModelStructure,
    f: &dyn ScalarField,
    c_bound: f64,
    t: f64,
    x: &DVector<f64>,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    let d = model.n();
    let cols = gradient_columns(model, f, t, x, mc, 0, |_, _, _| {})?;
    check_bound(&cols[0], c_bound)?;
    let mut ctx = context(t, x, mc, vec![mc.seed]);
    ctx.c_bound = Some(c_bound);
    if t == 0.0 {
        // C(0) = 0, so the gradient side vanishes
        let u = cols[0][0];
        return Ok(report(
            InequalityId::Hamilton,
            Variant::General,
            Estimate::exact(0.0),
            Estimate::exact((c_bound / u).ln()),
            Estimate::exact((c_bound / u).ln()),
            mc.sigma_level,
            ctx,
        ));
    }
    let c = covariance_paper(model).eval(t);
    let ft = propagator(model, 1).eval(t).transpose();
    Ok(score_shared(
        InequalityId::Hamilton,
        Variant::General,
        &cols,
        |m| 0.5 * quad(&c, &grad_p(&ft, m, d)) / (m[0] * m[0]),
        |m| (c_bound / m[0]).ln(),
        mc.sigma_level,
        ctx,
    ))
}

/// `u(x)^α ≤ u(y) C_bound^{α−1} exp(α/(2(α−1)) <C(t)^{-1}(y−x), y−x>)`.
#[allow(clippy::too_many_arguments)]
pub fn check_harnack_power(
    model: &ModelStructure,
    f: &dyn ScalarField,
    c_bound: f64,
    t: f64,
    x: &DVector<f64>,
    y: &DVector<f64>,
    alpha: f64,
    mc: &McConfig,
) -> Result<CheckReport> {
    check_dims(model, f, x, t)?;
    let k = harnack_constant(model, t, x, y, alpha)?;
    let seed_y = derive_seed(mc.seed, 1);
    let vx = value_column(model, f, t, x, mc)?;
    let vy = value_column(model, f, t, y, &mc.with_seed(seed_y))?;
    check_bound(&vx, c_bound)?;
    check_bound(&vy, c_bound)?;
    let ux = mean_or_exact(&vx);
    let uy = mean_or_exact(&vy);
    let factor = c_bound.powf(alpha - 1.0) * k;
    let lhs = Estimate {
        value: ux.value.powf(alpha),
        stderr: alpha * ux.value.powf(alpha - 1.0) * ux.stderr,
        n: ux.n,
    };
    let rhs = Estimate {
        value: uy.value * factor,
        stderr: uy.stderr * factor,
        n: uy.n,
    };
    let mut ctx = context(t, x, mc, vec![mc.seed, seed_y]);
    ctx.y = Some(y.iter().copied().collect());
    ctx.harnack_alpha = Some(alpha);
    ctx.c_bound = Some(c_bound);
    Ok(score_independent(InequalityId::HarnackPower, Variant::General, lhs, rhs, mc.sigma_level, ctx))
}

/// `C(t) = δ_{√t} C(1) δ_{√t}`. Reports the relative Frobenius error against [`SCALING_TOL`].
pub fn check_scaling(model: &ModelStructure, t: f64) -> Result<CheckReport> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::BadArgument(format!("scaling check needs t > 0, got {t}")));
    }
    let cov = covariance_paper(model);
    let direct = cov.eval(t);
    let scaled = dilation(model, t.sqrt())?.conjugate(&cov.eval(1.0));
    let err = (&direct - &scaled).norm() / direct.norm();
    let ctx = CheckContext {
        t,
        sigma_level: 0.0,
        note: Some("exact".into()),
        ..Default::default()
    };
    Ok(CheckReport {
        inequality_id: InequalityId::Scaling,
        variant: Variant::General,
        lhs: Estimate::exact(err),
        rhs: Estimate::exact(SCALING_TOL),
        margin: SCALING_TOL - err,
        margin_stderr: 0.0,
        verdict: if err <= SCALING_TOL { Verdict::Pass } else { Verdict::Fail },
        context: ctx,
    })
}
