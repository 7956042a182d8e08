//! Expands a plan into checks, runs them, and collects a report.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Job, Mode, RawConfig, RunPlan};
use crate::error::{Error, Result};
use crate::inequalities::{
    check_be, check_hamilton, check_harnack_power, check_lsi, check_logbe, check_poincare, check_poincare_exact,
    check_scaling, check_wang_harnack, CheckContext, CheckReport, InequalityId, Verdict,
};
use crate::kernel::MAX_WICK_DEGREE;
use crate::testfns::ScalarField;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEcho {
    pub hash: String,
    pub config: RawConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub skip: usize,
}

impl Summary {
    pub fn tally(reports: &[CheckReport]) -> Self {
        let mut s = Summary::default();
        for r in reports {
            match r.verdict {
                Verdict::Pass => s.pass += 1,
                Verdict::Fail => s.fail += 1,
                Verdict::Skip => s.skip += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub plan: PlanEcho,
    pub reports: Vec<CheckReport>,
    pub summary: Summary,
    /// Seconds; the only field allowed to differ between identical runs.
    pub wall_time: f64,
}

impl SuiteReport {
    /// 0 when nothing failed, 1 otherwise. Skips do not count as failures.
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail == 0 {
            0
        } else {
            1
        }
    }
}

fn job_context(plan: &RunPlan, job: &Job) -> CheckContext {
    let (t, x, y) = &plan.points[job.grid];
    CheckContext {
        model_id: Some("model".into()),
        f_id: job.testfn.map(|i| plan.testfns[i].0.clone()),
        t: *t,
        x: x.iter().copied().collect(),
        y: y.as_ref().map(|y| y.iter().copied().collect()),
        alpha: job.alpha.clone(),
        harnack_alpha: job.harnack_alpha,
        c_bound: job.c_bound,
        seeds: vec![job.seed],
        n: plan.mc.n,
        batch: plan.mc.batch,
        sigma_level: plan.mc.sigma_level,
        note: None,
    }
}

fn attempt(plan: &RunPlan, job: &Job) -> Result<CheckReport> {
    let (t, x, y) = &plan.points[job.grid];
    let mc = plan.mc.with_seed(job.seed);
    let model = &plan.model;
    let f = job.testfn.map(|i| &plan.testfns[i].1);
    let need_f = || f.ok_or_else(|| Error::BadArgument("check needs a test function".into()));
    let need_y = || {
        y.as_ref()
            .ok_or_else(|| Error::BadArgument("grid point has no y for a Harnack check".into()))
    };
    let c_bound = || {
        job.c_bound
            .or_else(|| f.and_then(|f| f.props().upper_bound))
            .ok_or_else(|| Error::BadArgument("no c_bound given and the test function declares no upper bound".into()))
    };
    let power = job.harnack_alpha.unwrap_or(2.0);
    match job.id {
        InequalityId::Be => check_be(model, need_f()?, *t, x, job.variant, job.alpha.as_deref(), &mc),
        InequalityId::Logbe => check_logbe(model, need_f()?, *t, x, job.variant, job.alpha.as_deref(), &mc),
        InequalityId::Poincare => match job.mode {
            Mode::Mc => check_poincare(model, need_f()?, *t, x, job.variant, &mc),
            Mode::Exact => {
                let p = need_f()?
                    .as_polynomial()
                    .ok_or_else(|| Error::BadArgument("exact mode needs a polynomial test function".into()))?;
                if 2 * p.degree() > MAX_WICK_DEGREE {
                    return Err(Error::DegreeTooHigh(2 * p.degree()));
                }
                check_poincare_exact(model, &p, *t, x, job.variant)
            }
        },
        InequalityId::Lsi => check_lsi(model, need_f()?, *t, x, job.variant, &mc),
        InequalityId::WangHarnack => check_wang_harnack(model, need_f()?, *t, x, need_y()?, power, &mc),
        InequalityId::Hamilton => check_hamilton(model, need_f()?, c_bound()?, *t, x, &mc),
        InequalityId::HarnackPower => check_harnack_power(model, need_f()?, c_bound()?, *t, x, need_y()?, power, &mc),
        InequalityId::Scaling => check_scaling(model, *t),
    }
}

/// Runs one job; errors become a skip carrying the reason.
pub fn run_job(plan: &RunPlan, job: &Job) -> CheckReport {
    let ctx = job_context(plan, job);
    match attempt(plan, job) {
        Ok(mut r) => {
            let own = std::mem::take(&mut r.context);
            let exact = own.note.as_deref() == Some("exact");
            r.context = CheckContext {
                seeds: if exact { Vec::new() } else { own.seeds },
                n: if exact { 0 } else { ctx.n },
                batch: if exact { None } else { ctx.batch },
                sigma_level: if exact { 0.0 } else { ctx.sigma_level },
                alpha: own.alpha.or(ctx.alpha.clone()),
                note: own.note,
                ..ctx
            };
            r
        }
        Err(e) => CheckReport::skipped(job.id, job.variant, ctx, &e),
    }
}

/// Runs every job of the plan, `jobs` worker threads at most, and assembles
/// the reports in declaration order.
pub fn run_suite(plan: &RunPlan, jobs: Option<usize>) -> SuiteReport {
    let start = Instant::now();
    let reports = run_all(plan, jobs);
    SuiteReport {
        schema_version: SCHEMA_VERSION,
        plan: PlanEcho {
            hash: plan.hash.clone(),
            config: plan.raw.clone(),
        },
        summary: Summary::tally(&reports),
        reports,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

#[cfg(feature = "parallel")]
fn run_all(plan: &RunPlan, jobs: Option<usize>) -> Vec<CheckReport> {
    use rayon::prelude::*;
    let work = || plan.jobs.par_iter().map(|j| run_job(plan, j)).collect();
    match jobs {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        },
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_all(plan: &RunPlan, _jobs: Option<usize>) -> Vec<CheckReport> {
    plan.jobs.iter().map(|j| run_job(plan, j)).collect()
}
