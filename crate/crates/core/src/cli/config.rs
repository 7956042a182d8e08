//! Run configuration: TOML text in, a validated and fully expanded plan out.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimator::{derive_seed, McConfig};
use crate::inequalities::{InequalityId, Variant};
use crate::model::{validate_structure, ModelStructure, RawModel};
use crate::testfns::{make_testfn, TestFnSpec, TestFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: RawModel,
    pub mc: RawMc,
    #[serde(default, rename = "testfn")]
    pub testfns: Vec<TestFnEntry>,
    #[serde(default)]
    pub grid: Vec<GridPoint>,
    #[serde(default, rename = "suite")]
    pub suites: Vec<SuiteSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// `[mc]` as written. The seed is optional here only so that its absence is
/// reported as a validation error rather than a parse error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMc {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFnEntry {
    pub id: String,
    #[serde(flatten)]
    pub spec: TestFnSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Mc,
    /// Gaussian-moment integration; polynomial test functions only.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    /// An inequality name, or `all`.
    pub check: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<Variant>>,
    /// Weight vectors for the general gradient bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harnack_alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_bound: Option<f64>,
    /// Test-function ids; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub testfns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format {other:?}, expected json, csv or svg")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { message: String, line: usize, column: usize },
    #[error("invalid {field}: {reason}")]
    Validation {
        field: String,
        reason: String,
        source: Option<Error>,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        reason: reason.into(),
        source: None,
    }
}

fn invalid_from(field: impl Into<String>, e: Error) -> ConfigError {
    ConfigError::Validation {
        field: field.into(),
        reason: e.to_string(),
        source: Some(e),
    }
}

/// One check to run: an inequality, a variant and everything it is evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: InequalityId,
    pub variant: Variant,
    /// Index into [`RunPlan::testfns`]; `None` for checks without a test function.
    pub testfn: Option<usize>,
    pub grid: usize,
    pub alpha: Option<Vec<f64>>,
    pub harnack_alpha: Option<f64>,
    pub c_bound: Option<f64>,
    pub mode: Mode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub raw: RawConfig,
    pub hash: String,
    pub model: ModelStructure,
    pub mc: McConfig,
    pub testfns: Vec<(String, TestFunction)>,
    pub points: Vec<(f64, DVector<f64>, Option<DVector<f64>>)>,
    pub jobs: Vec<Job>,
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl RunPlan {
    /// Overrides the verdict level, keeping the echoed config in step.
    pub fn with_sigma_level(mut self, k: f64) -> Result<Self, ConfigError> {
        let mut raw = self.raw.clone();
        raw.mc.sigma_level = Some(k);
        let hash = plan_hash(&raw);
        self.mc.sigma_level = k;
        self.mc.validate().map_err(|e| invalid_from("sigma", e))?;
        self.raw = raw;
        self.hash = hash;
        Ok(self)
    }
}

pub fn plan_hash(raw: &RawConfig) -> String {
    let canonical = canonical_toml(raw);
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

/// The config re-serialised in a fixed layout; equal configs give equal text.
pub fn canonical_toml(raw: &RawConfig) -> String {
    toml::to_string(raw).expect("config is representable as TOML")
}

pub fn parse_config(path: &Path) -> Result<RunPlan, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunPlan, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|s| line_column(text, s.start))
            .unwrap_or((0, 0));
        ConfigError::Parse {
            message: e.message().to_string(),
            line,
            column,
        }
    })?;
    validate_config(raw)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn default_variants(id: InequalityId, has_alphas: bool) -> Vec<Variant> {
    match id {
        InequalityId::Be | InequalityId::Logbe => {
            let mut v = vec![Variant::Right, Variant::Reverse];
            if has_alphas {
                v.push(Variant::General);
            }
            v
        }
        InequalityId::Poincare | InequalityId::Lsi => vec![Variant::Right, Variant::Reverse],
        _ => vec![Variant::General],
    }
}

fn allowed_variants(id: InequalityId) -> &'static [Variant] {
    match id {
        InequalityId::Be | InequalityId::Logbe => &[Variant::General, Variant::Right, Variant::Reverse],
        InequalityId::Poincare | InequalityId::Lsi => &[Variant::Right, Variant::Reverse],
        _ => &[Variant::General],
    }
}

fn parse_check(name: &str) -> Option<Vec<InequalityId>> {
    if name == "all" {
        return Some(InequalityId::ALL.to_vec());
    }
    InequalityId::ALL.iter().find(|id| id.name() == name).map(|id| vec![*id])
}

pub fn validate_config(raw: RawConfig) -> Result<RunPlan, ConfigError> {
    let model = validate_structure(&raw.model).map_err(|e| invalid_from("model", e))?;
    let n = model.n();

    let seed = raw
        .mc
        .seed
        .ok_or_else(|| invalid("mc.seed", "an explicit seed is required so that every run is reproducible"))?;
    let mc = McConfig {
        n: raw.mc.n,
        seed,
        batch: raw.mc.batch,
        sigma_level: raw.mc.sigma_level.unwrap_or(3.0),
    };
    mc.validate().map_err(|e| invalid_from("mc", e))?;

    let mut ids = HashSet::new();
    let mut testfns = Vec::new();
    for (i, entry) in raw.testfns.iter().enumerate() {
        if !ids.insert(entry.id.clone()) {
            return Err(invalid(format!("testfn[{i}].id"), format!("duplicate id {:?}", entry.id)));
        }
        let f = make_testfn(&entry.spec).map_err(|e| invalid_from(format!("testfn[{i}]"), e))?;
        if crate::testfns::ScalarField::dim(&f) != n {
            return Err(invalid(
                format!("testfn[{i}]"),
                format!("dimension {} does not match the model dimension {n}", crate::testfns::ScalarField::dim(&f)),
            ));
        }
        testfns.push((entry.id.clone(), f));
    }

    let mut points = Vec::new();
    for (i, g) in raw.grid.iter().enumerate() {
        if !(g.t >= 0.0) || !g.t.is_finite() {
            return Err(invalid(format!("grid[{i}].t"), format!("must be finite and nonnegative, got {}", g.t)));
        }
        if g.x.len() != n {
            return Err(invalid(format!("grid[{i}].x"), format!("has length {}, model dimension is {n}", g.x.len())));
        }
        if let Some(y) = &g.y {
            if y.len() != n {
                return Err(invalid(format!("grid[{i}].y"), format!("has length {}, model dimension is {n}", y.len())));
            }
        }
        if g.x.iter().chain(g.y.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(invalid(format!("grid[{i}]"), "non-finite coordinate"));
        }
        points.push((g.t, DVector::from_row_slice(&g.x), g.y.as_ref().map(|y| DVector::from_row_slice(y))));
    }

    let mut jobs = Vec::new();
    for (si, suite) in raw.suites.iter().enumerate() {
        let checks = parse_check(&suite.check).ok_or_else(|| {
            invalid(format!("suite[{si}].check"), format!("unknown inequality {:?}", suite.check))
        })?;
        let fids: Vec<usize> = match &suite.testfns {
            None => (0..testfns.len()).collect(),
            Some(names) => names
                .iter()
                .map(|name| {
                    testfns.iter().position(|(id, _)| id == name).ok_or_else(|| {
                        invalid(format!("suite[{si}].testfns"), format!("unknown test function {name:?}"))
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let mode = suite.mode.unwrap_or_default();
        if mode == Mode::Exact && checks.iter().any(|c| *c != InequalityId::Poincare) {
            return Err(invalid(format!("suite[{si}].mode"), "exact mode is available for poincare only"));
        }
        let harnack = suite.harnack_alpha.clone().unwrap_or_else(|| vec![2.0]);
        let single = checks.len() == 1;
        for id in checks {
            let variants = match &suite.variants {
                Some(v) if single => {
                    if let Some(bad) = v.iter().find(|v| !allowed_variants(id).contains(v)) {
                        return Err(invalid(
                            format!("suite[{si}].variants"),
                            format!("{} has no {} variant", id.name(), bad.name()),
                        ));
                    }
                    v.clone()
                }
                Some(v) => v.iter().copied().filter(|v| allowed_variants(id).contains(v)).collect(),
                None => default_variants(id, suite.alphas.is_some()),
            };
            for variant in variants {
                let alphas: Vec<Option<Vec<f64>>> = if variant == Variant::General && matches!(id, InequalityId::Be | InequalityId::Logbe) {
                    match &suite.alphas {
                        Some(a) if !a.is_empty() => a.iter().cloned().map(Some).collect(),
                        _ => {
                            return Err(invalid(format!("suite[{si}].alphas"), "the general variant needs at least one alpha"));
                        }
                    }
                } else {
                    vec![None]
                };
                let powers: Vec<Option<f64>> = if matches!(id, InequalityId::WangHarnack | InequalityId::HarnackPower) {
                    harnack.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                for alpha in &alphas {
                    for power in &powers {
                        for gi in 0..points.len() {
                            let fs: Vec<Option<usize>> = if id == InequalityId::Scaling {
                                vec![None]
                            } else {
                                fids.iter().copied().map(Some).collect()
                            };
                            for testfn in fs {
                                let seed = derive_seed(seed, jobs.len() as u64);
                                jobs.push(Job {
                                    id,
                                    variant,
                                    testfn,
                                    grid: gi,
                                    alpha: alpha.clone(),
                                    harnack_alpha: *power,
                                    c_bound: suite.c_bound,
                                    mode,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    let output = raw.output.clone().unwrap_or_default();
    let formats = output.formats.unwrap_or_else(|| vec![Format::Json, Format::Csv, Format::Svg]);
    let hash = plan_hash(&raw);
    Ok(RunPlan {
        raw,
        hash,
        model,
        mc,
        testfns,
        points,
        jobs,
        output_dir: PathBuf::from(output.dir.unwrap_or_else(|| "kbounds-out".into())),
        formats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[model]
r = 1
dims = [1, 1]
a0 = [1.0]
blocks = [[1.0]]

[mc]
n = 1000
seed = 7

[[testfn]]
id = "logistic"
kind = "logistic"
a = [1.0, 0.5]
scale = 1.0
delta = 0.1

[[grid]]
t = 1.0
x = [0.0, 0.0]
y = [1.0, 0.0]

[[suite]]
check = "all"
"#;

    #[test]
    fn minimal_plan() {
        let plan = parse_config_str(MINIMAL).unwrap();
        assert_eq!(plan.model, ModelStructure::kolmogorov());
        // be, logbe, poincare, lsi: two variants each; three Harnack-type checks; scaling
        assert_eq!(plan.jobs.len(), 8 + 3 + 1);
        assert_eq!(plan.mc.sigma_level, 3.0);
        assert_eq!(plan.hash.len(), 64);
    }

    #[test]
    fn missing_seed() {
        let text = MINIMAL.replace("seed = 7\n", "");
        match parse_config_str(&text) {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "mc.seed"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn increasing_dims() {
        let text = MINIMAL.replace("dims = [1, 1]", "dims = [1, 2]").replace("blocks = [[1.0]]", "blocks = [[1.0, 1.0]]");
        match parse_config_str(&text) {
            Err(ConfigError::Validation { source, .. }) => assert!(matches!(source, Some(Error::NotMonotone(_)))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_have_positions() {
        match parse_config_str("[model]\nr = \n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config_str(&MINIMAL.replace("seed = 7", "seed = 7\nbogus = 1")),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn cross_references() {
        let text = format!("{MINIMAL}testfns = [\"nope\"]\n");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Validation { .. })));
        let text = MINIMAL.replace("x = [0.0, 0.0]", "x = [0.0]");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Validation { .. })));
        let text = MINIMAL.replace("check = \"all\"", "check = \"lsi\"\nvariants = [\"general\"]");
        assert!(matches!(parse_config_str(&text), Err(ConfigError::Validation { .. })));
    }

    #[test]
    fn hash_ignores_layout() {
        let a = parse_config_str(MINIMAL).unwrap();
        let b = parse_config_str(&MINIMAL.replace("seed = 7", "seed   =   7   # comment")).unwrap();
        assert_eq!(a.hash, b.hash);
        let c = parse_config_str(&MINIMAL.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn round_trip_through_canonical_text() {
        let a = parse_config_str(MINIMAL).unwrap();
        let b = parse_config_str(&canonical_toml(&a.raw)).unwrap();
        assert_eq!(a, b);
    }
}
