//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use kolmogorov_bounds::coupling::{coupled_start, sample_coupled_pair, trajectory_simulate_pair, CouplingSpec};
use kolmogorov_bounds::error::Result;
use kolmogorov_bounds::estimator::{derive_seed, estimate_semigroup, grad_semigroup_fd, grad_semigroup_pathwise, McConfig};
use kolmogorov_bounds::inequalities::{
    check_be, check_hamilton, check_harnack_power, check_logbe, check_lsi, check_poincare, check_poincare_exact,
    check_scaling, check_wang_harnack, harnack_constant, CheckReport, Variant, Verdict,
};
use kolmogorov_bounds::kernel::{polynomial_semigroup, sample_endpoints_batched, transition_law};
use kolmogorov_bounds::matfun::{covariance_paper, covariance_quadrature, factor_spd, inverse_spd, weighted_form, weighted_form_blockwise};
use kolmogorov_bounds::model::{random_model, ModelStructure};
use kolmogorov_bounds::polynomial::Polynomial;
use kolmogorov_bounds::testfns::TestFunction;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn corpus(seed: u64, count: usize) -> Vec<ModelStructure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_model(&mut rng, 3, 3)).collect()
}

fn covariance_closed_form() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for m in corpus(1, 50) {
        for &t in &[0.1, 1.0, 5.0] {
            let diff = covariance_paper(&m).eval(t) - covariance_quadrature(&m, t, 4);
            worst = worst.max(diff.abs().max());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("max abs error {worst:.2e} over 50 models x 3 times in {secs:.2} s");
    if worst <= 1e-10 && secs < 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn scaling_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    for m in corpus(1, 50) {
        for &t in &[0.1, 1.0, 5.0] {
            let r = check_scaling(&m, t).map_err(|e| e.to_string())?;
            worst = worst.max(r.lhs.value);
            failed += (r.verdict != Verdict::Pass) as usize;
        }
    }
    let msg = format!("max relative error {worst:.2e}, {failed} of 150 above 1e-12");
    if failed == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn seminorm_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = random_model(&mut rng, 3, 3);
        let g = DVector::from_vec(common::uniform_vec(&mut rng, m.n(), -1.0, 1.0));
        let t = rng.gen_range(0.05..5.0);
        let a = weighted_form_blockwise(&m, t, &g);
        let b = weighted_form(&m, t, -1, &g);
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
    }
    let msg = format!("max relative difference {worst:.2e} over 100 triples");
    if worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn kolmogorov_anchors() -> Outcome {
    let k = ModelStructure::kolmogorov();
    let c = covariance_paper(&k).eval(1.0);
    let c_exact = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0 / 3.0]);
    let fac = factor_spd(&c).map_err(|e| e.to_string())?;
    let inv = inverse_spd(&fac);
    let inv_exact = DMatrix::from_row_slice(2, 2, &[4.0, 6.0, 6.0, 12.0]);
    let det = fac.logdet.exp();
    let e1 = (&c - &c_exact).abs().max();
    let e2 = (&inv - &inv_exact).abs().max() / 12.0;
    let e3 = (det - 1.0 / 12.0).abs() * 12.0;
    let msg = format!("C(1) err {e1:.1e}, inverse rel err {e2:.1e}, det rel err {e3:.1e}");
    if e1 <= 1e-12 && e2 <= 1e-12 && e3 <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn poincare_equalities() -> Outcome {
    let k = ModelStructure::kolmogorov();
    let x = DVector::from_row_slice(&[0.4, -0.3]);
    let mc = McConfig::new(100_000, 5);
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, i) in [("x1", 0), ("x2", 1)] {
        let f = Polynomial::var(2, i);
        for variant in [Variant::Right, Variant::Reverse] {
            let start = Instant::now();
            let exact = check_poincare_exact(&k, &f, 1.5, &x, variant).map_err(|e| e.to_string())?;
            let sampled = check_poincare(&k, &f, 1.5, &x, variant, &mc).map_err(|e| e.to_string())?;
            let secs = start.elapsed().as_secs_f64();
            let good = exact.margin.abs() <= 1e-12 && sampled.margin.abs() <= 3.0 * sampled.margin_stderr && secs < 5.0;
            ok &= good;
            lines.push(format!(
                "{name}/{}: exact {:.1e}, mc {:.2} se",
                variant.name(),
                exact.margin.abs(),
                sampled.margin.abs() / sampled.margin_stderr
            ));
        }
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Runs `check` on the base seed and, on failure, on two more; returns
/// (failed on first seed, failed on all three).
fn with_retries(seed: u64, mut check: impl FnMut(u64) -> Result<bool>) -> (bool, bool) {
    let mut fails = 0;
    for attempt in 0..3 {
        let s = if attempt == 0 { seed } else { derive_seed(seed, 1000 + attempt) };
        match check(s) {
            Ok(true) => break,
            _ => fails += 1,
        }
    }
    (fails >= 1, fails == 3)
}

fn cross_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models = corpus(61, 5);
    let (mut first, mut persistent, mut total) = (0, 0, 0);
    for (mi, m) in models.iter().enumerate() {
        for fi in 0..20 {
            let f = Polynomial::random(&mut rng, m.n(), 4, 6);
            let x = DVector::from_vec(common::uniform_vec(&mut rng, m.n(), -1.0, 1.0));
            let t = rng.gen_range(0.1..2.0);
            let exact = polynomial_semigroup(m, &f, t, &x).map_err(|e| e.to_string())?;
            let (a, b) = with_retries(derive_seed(mi as u64, fi), |s| {
                let est = estimate_semigroup(m, &f, t, &x, &McConfig::new(100_000, s))?;
                Ok((est.value - exact).abs() <= 3.0 * est.stderr.max(1e-14 * exact.abs()))
            });
            total += 1;
            first += a as usize;
            persistent += b as usize;
        }
    }
    let msg = format!("{total} comparisons, {first} outside 3 se on the first seed, {persistent} persistent");
    if persistent == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gradient_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut models = vec![ModelStructure::kolmogorov(), ModelStructure::iterated_scalar(2), ModelStructure::iterated_scalar(3)];
    models.extend(corpus(71, 3));
    let mc = McConfig::new(100_000, 77);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for m in &models {
        for j in 0..2 {
            let (f, _) = if j == 0 {
                common::random_logistic(&mut rng, m.n())
            } else {
                common::random_bump(&mut rng, m.n())
            };
            let x = DVector::from_vec(common::uniform_vec(&mut rng, m.n(), -1.0, 1.0));
            let t = rng.gen_range(0.2..2.0);
            let pw = grad_semigroup_pathwise(m, &f, t, &x, &mc).map_err(|e| e.to_string())?;
            let fd = grad_semigroup_fd(m, &f, t, &x, 1e-4, &mc).map_err(|e| e.to_string())?;
            let scale = pw.iter().fold(0.0f64, |a, e| a.max(e.value.abs()));
            for (p, d) in pw.iter().zip(&fd) {
                // components below 1e-9 of the largest one are compared on that scale
                let denom = p.value.abs().max(1e-9 * scale);
                worst = worst.max((p.value - d.value).abs() / denom);
                count += 1;
            }
        }
    }
    let msg = format!("max componentwise relative error {worst:.2e} over {count} components");
    if worst <= 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

struct Scenario {
    model: ModelStructure,
    f: TestFunction,
    c_bound: f64,
    t: f64,
    x: DVector<f64>,
    y: DVector<f64>,
    alphas: Vec<Vec<f64>>,
}

fn scenario<R: Rng>(rng: &mut R, i: usize) -> Scenario {
    let model = match i % 5 {
        0 => ModelStructure::kolmogorov(),
        1 => ModelStructure::iterated_scalar(rng.gen_range(2..=3)),
        _ => random_model(rng, 3, 3),
    };
    let n = model.n();
    let (f, c_bound) = if i.is_multiple_of(2) {
        common::random_logistic(rng, n)
    } else {
        common::random_bump(rng, n)
    };
    let t = rng.gen_range(0.1..5.0);
    let x = DVector::from_vec(common::uniform_vec(rng, n, -1.0, 1.0));
    let q = rng.gen_range(0.05..1.5);
    let y = common::harnack_partner(rng, &model, &x, t, q);
    let alphas = (0..5)
        .map(|_| {
            let mut a = vec![1.0];
            a.extend(common::uniform_vec(rng, model.r(), -2.0, 2.0));
            a
        })
        .collect();
    Scenario {
        model,
        f,
        c_bound,
        t,
        x,
        y,
        alphas,
    }
}

type Check<'a> = Box<dyn Fn(&McConfig) -> Result<CheckReport> + 'a>;
type Criterion = (&'static str, fn() -> Outcome);

fn scenario_checks(s: &Scenario) -> Vec<(String, Check<'_>)> {
    let mut out: Vec<(String, Check)> = Vec::new();
    for v in [Variant::Right, Variant::Reverse] {
        out.push((format!("be/{}", v.name()), Box::new(move |mc| check_be(&s.model, &s.f, s.t, &s.x, v, None, mc))));
        out.push((format!("logbe/{}", v.name()), Box::new(move |mc| check_logbe(&s.model, &s.f, s.t, &s.x, v, None, mc))));
        out.push((format!("poincare/{}", v.name()), Box::new(move |mc| check_poincare(&s.model, &s.f, s.t, &s.x, v, mc))));
        out.push((format!("lsi/{}", v.name()), Box::new(move |mc| check_lsi(&s.model, &s.f, s.t, &s.x, v, mc))));
    }
    for (i, a) in s.alphas.iter().enumerate() {
        out.push((
            format!("be/general#{i}"),
            Box::new(move |mc| check_be(&s.model, &s.f, s.t, &s.x, Variant::General, Some(a), mc)),
        ));
    }
    for alpha in [1.5, 2.0, 4.0] {
        out.push((
            format!("wang_harnack/{alpha}"),
            Box::new(move |mc| check_wang_harnack(&s.model, &s.f, s.t, &s.x, &s.y, alpha, mc)),
        ));
    }
    out.push(("hamilton".into(), Box::new(move |mc| check_hamilton(&s.model, &s.f, s.c_bound, s.t, &s.x, mc))));
    out.push((
        "harnack_power".into(),
        Box::new(move |mc| check_harnack_power(&s.model, &s.f, s.c_bound, s.t, &s.x, &s.y, 2.0, mc)),
    ));
    out
}

fn theorem_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scenarios: Vec<Scenario> = (0..200).map(|i| scenario(&mut rng, i)).collect();
    let (mut total, mut first, mut persistent) = (0, 0, 0);
    let mut defects = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for (ci, (label, check)) in scenario_checks(s).iter().enumerate() {
            let base = derive_seed(si as u64, ci as u64);
            let (a, b) = with_retries(base, |seed| {
                let r = check(&McConfig::new(100_000, seed))?;
                Ok(r.verdict == Verdict::Pass)
            });
            total += 1;
            first += a as usize;
            if b {
                persistent += 1;
                if defects.len() < 5 {
                    defects.push(format!("scenario {si} {label}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "{} scenarios, {total} checks at n = 1e5, {first} failed on the first seed, {persistent} persistent{} in {secs:.0} s",
        scenarios.len(),
        if defects.is_empty() { String::new() } else { format!(" ({})", defects.join(", ")) }
    );
    if persistent == 0 && secs <= 600.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn wang_anchor() -> Outcome {
    let k = ModelStructure::kolmogorov();
    let c = harnack_constant(&k, 1.0, &DVector::zeros(2), &DVector::from_row_slice(&[1.0, 0.0]), 2.0).map_err(|e| e.to_string())?;
    let rel = (c - 4f64.exp()).abs() / 4f64.exp();
    let msg = format!("C_2 = {c:.15}, relative error to e^4 {rel:.1e}");
    if rel <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn coupling_offsets() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut models = vec![ModelStructure::kolmogorov(), ModelStructure::iterated_scalar(2)];
    models.extend(corpus(101, 4));
    let mut exact_ok = true;
    let mut worst_indep: f64 = 0.0;
    let mut min_order = f64::INFINITY;
    let mut max_const: f64 = 0.0;
    for m in &models {
        let mut alpha = vec![1.0];
        alpha.extend(common::uniform_vec(&mut rng, m.r(), -1.0, 1.0));
        let v = DVector::from_vec(common::uniform_vec(&mut rng, m.dims()[0], -1.0, 1.0));
        let cs = CouplingSpec::new(alpha, v, 0.1).map_err(|e| e.to_string())?;
        let x = DVector::from_vec(common::uniform_vec(&mut rng, m.n(), -1.0, 1.0));
        let pair = coupled_start(&x, &cs, m).map_err(|e| e.to_string())?;
        let t = 1.0;
        let batch = sample_coupled_pair(m, &pair, t, 2000, 3, 500).map_err(|e| e.to_string())?;
        let off = pair.offset(t);
        for i in 0..2000 {
            let p = batch.primary.row(i);
            let s = batch.shadow_row(i);
            exact_ok &= p.iter().zip(s).zip(off.iter()).all(|((a, b), o)| *b == a - o);
        }
        // independent draw from the shadow's own law with the same seed
        let law = transition_law(m, &pair.shadow_start, t).map_err(|e| e.to_string())?;
        let indep = sample_endpoints_batched(&law, 2000, 3, 500);
        for i in 0..2000 {
            for ((a, b), o) in batch.primary.row(i).iter().zip(indep.row(i)).zip(off.iter()) {
                worst_indep = worst_indep.max(((a - b) - o).abs() / o.abs().max(1.0));
            }
        }
        if m.r() < 2 {
            // one Euler step of a single integration is exact; the order is not observable
            continue;
        }
        let mut errs = Vec::new();
        for level in 0..5 {
            let dt = t / (16 << level) as f64;
            let (p, s) = trajectory_simulate_pair(m, &pair, dt, t, 9).map_err(|e| e.to_string())?;
            let e = ((p.endpoint() - s.endpoint()) - &off).abs().max();
            max_const = max_const.max(e / dt);
            errs.push(e);
        }
        for w in errs.windows(2) {
            min_order = min_order.min((w[0] / w[1]).log2());
        }
    }
    let msg = format!(
        "bitwise offsets {}, independent-draw deviation {worst_indep:.1e}, min observed Euler order {min_order:.3}, max error/dt {max_const:.2}",
        if exact_ok { "exact" } else { "NOT exact" }
    );
    if exact_ok && worst_indep <= 1e-10 && min_order >= 0.9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn strip_wall_time(json: &str) -> String {
    json.lines().filter(|l| !l.trim_start().starts_with("\"wall_time\"")).collect::<Vec<_>>().join("\n")
}

fn run_cli(config: &Path, out: &Path, extra: &[&str]) -> std::result::Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_kbounds"))
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .map_err(|e| e.to_string())?;
    status.status.code().ok_or_else(|| "terminated by signal".into())
}

fn cli_determinism() -> Outcome {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let minimal = fixtures.join("minimal.toml");
    run_cli(&minimal, &a, &["--formats", "json"])?;
    run_cli(&minimal, &b, &["--formats", "json", "--jobs", "1"])?;
    let ja = std::fs::read_to_string(a.join("report.json")).map_err(|e| e.to_string())?;
    let jb = std::fs::read_to_string(b.join("report.json")).map_err(|e| e.to_string())?;
    let identical = strip_wall_time(&ja) == strip_wall_time(&jb);
    let mut codes = Vec::new();
    let mut contract = true;
    for (name, want) in [("pass", 0), ("fail", 1), ("missing_seed", 2), ("bad_dims", 2)] {
        let got = run_cli(&fixtures.join(format!("{name}.toml")), &tmp.path().join(name), &[])?;
        contract &= got == want;
        codes.push(format!("{name}={got}"));
    }
    let msg = format!(
        "repeat runs {}, exit codes {}",
        if identical { "byte-identical" } else { "DIFFER" },
        codes.join(" ")
    );
    if identical && contract {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("covariance closed form vs quadrature", covariance_closed_form),
        ("scaling identity", scaling_identity),
        ("seminorm identity", seminorm_identity),
        ("Kolmogorov exact anchors", kolmogorov_anchors),
        ("Poincare equality cases", poincare_equalities),
        ("cross-oracle semigroup", cross_oracle),
        ("gradient consistency", gradient_consistency),
        ("theorem suite", theorem_suite),
        ("Wang-Harnack constant anchor", wang_anchor),
        ("coupling offsets", coupling_offsets),
        ("CLI determinism and exit codes", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {:>2} {name}: {msg} [{secs:.1} s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {msg} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
