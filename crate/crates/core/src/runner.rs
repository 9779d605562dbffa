//! Batch experiments: configuration, modes and report files.
//!
//! A configuration file holds one `key = value` setting per line; `#` starts
//! a comment and blank lines are ignored. Lists are comma-separated; drift
//! directions are comma-separated vectors joined by `;`. Keys:
//!
//! | key | value | default |
//! |---|---|---|
//! | `mode` | identities, inequalities, sharpness, decomposition, symmetry, all | all |
//! | `group` | `euclidean:<n>` or `heisenberg:<m>` | euclidean:5 |
//! | `instance` | `all` or instance ids | all |
//! | `delta`, `alpha`, `theta`, `beta`, `p` | real lists | per-instance test matrix |
//! | `gamma` | real list | 0.5 |
//! | `drift_a` | vectors of length N | e₁ |
//! | `character_sign` | positive (`χ = e^{γ⟨a,x′⟩}`) or negative | positive |
//! | `seed` | u64 | 0 |
//! | `fields` | random fields per inequality combination | 100 |
//! | `samples` | fields or pairs per decomposition and symmetry combination | 20 |
//! | `points` | random points per identity | 1000 |
//! | `k_max` | largest cutoff index of sharpness series | 8 |
//! | `random_fields` | random bumps per best-constant search | 200 |
//! | `quad_order`, `quad_tol`, `quad_depth` | quadrature controls | 8, 1e-8, 12 |
//! | `out` | output directory | out |
//!
//! Command-line flags use the same names with `-` for `_` and take
//! precedence over the file, which takes precedence over the defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{
    catalog, decomposition_residual, evaluate, CatalogError, EvaluationReport, InequalityInstance,
    InstanceId, Measure, ParamName, Params,
};
use crate::field::ScalarField;
use crate::group::GroupModel;
use crate::identities::{differential_identities, polarizable_identity, IdentityCheck};
use crate::integrals::{domain_for, rayleigh_quotient, symmetry_defect, IntegralError};
use crate::ops::{CharacterSign, DriftSpec};
use crate::quadrature::{QuadratureError, QuadratureSpec};
use crate::sampling::FieldSampler;
use crate::sharpness::{
    best_constant_estimate, extremal_exponent, ratio_series, BestConstant, RatioSeries,
    SearchBudget, SharpnessError,
};

/// Name and version written into every summary.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Relative tolerance of the decomposition identity.
pub const DECOMPOSITION_TOL: f64 = 1e-6;
/// Relative tolerance of the symmetry defect.
pub const SYMMETRY_TOL: f64 = 1e-6;
/// Absolute slack of the spectral lower bound.
pub const SPECTRUM_TOL: f64 = 1e-8;
/// Largest accepted `infimum / sharp − 1` of a series reaching `k = 8`.
pub const SHARPNESS_GAP: f64 = 0.10;
/// Drift strength used for sharpness scans of drift instances.
pub const SHARPNESS_GAMMA: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("--{flag}: {msg}")]
    Flag { flag: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot serialize a report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Experiment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Identities,
    Inequalities,
    Sharpness,
    Decomposition,
    Symmetry,
    All,
}

impl Mode {
    const NAMES: [(&'static str, Mode); 6] = [
        ("identities", Mode::Identities),
        ("inequalities", Mode::Inequalities),
        ("sharpness", Mode::Sharpness),
        ("decomposition", Mode::Decomposition),
        ("symmetry", Mode::Symmetry),
        ("all", Mode::All),
    ];

    fn includes(self, m: Mode) -> bool {
        self == Mode::All || self == m
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, m)| *m)
            .ok_or_else(|| {
                let names: Vec<_> = Self::NAMES.iter().map(|(n, _)| *n).collect();
                format!("unknown mode `{s}`; valid modes: {}", names.join(", "))
            })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Self::NAMES.iter().find(|(_, m)| m == self).map(|(n, _)| *n);
        f.write_str(name.unwrap_or("all"))
    }
}

/// Where a setting came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    File { line: usize },
    Flag,
}

/// One raw `key = value` setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

impl Setting {
    pub fn flag(key: &str, value: impl Into<String>) -> Self {
        Self {
            key: key.replace('-', "_"),
            value: value.into(),
            origin: Origin::Flag,
        }
    }

    fn error(&self, msg: impl Into<String>) -> ConfigError {
        match self.origin {
            Origin::File { line } => ConfigError::Line { line, msg: msg.into() },
            Origin::Flag => ConfigError::Flag {
                flag: self.key.replace('_', "-"),
                msg: msg.into(),
            },
        }
    }
}

const KEYS: &[&str] = &[
    "mode",
    "group",
    "instance",
    "delta",
    "alpha",
    "theta",
    "beta",
    "p",
    "gamma",
    "drift_a",
    "character_sign",
    "seed",
    "fields",
    "samples",
    "points",
    "k_max",
    "random_fields",
    "quad_order",
    "quad_tol",
    "quad_depth",
    "out",
];

/// Splits a configuration file into settings.
pub fn parse_config_text(text: &str) -> Result<Vec<Setting>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            msg: format!("expected `key = value`, found `{content}`"),
        })?;
        out.push(Setting {
            key: key.trim().replace('-', "_"),
            value: value.trim().to_string(),
            origin: Origin::File { line },
        });
    }
    Ok(out)
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub group: String,
    pub instances: Vec<InstanceId>,
    pub delta: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub drift_a: Vec<Vec<f64>>,
    pub character_sign: CharacterSign,
    pub seed: u64,
    pub fields: u64,
    pub samples: u64,
    pub points: usize,
    pub k_max: u32,
    pub random_fields: u64,
    pub quadrature: QuadratureSpec,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::All,
            group: "euclidean:5".into(),
            instances: catalog().into_iter().map(|i| i.id).collect(),
            delta: None,
            alpha: None,
            theta: None,
            beta: None,
            p: None,
            gamma: vec![0.5],
            drift_a: vec![vec![1.0, 0.0, 0.0, 0.0, 0.0]],
            character_sign: CharacterSign::Positive,
            seed: 0,
            fields: 100,
            samples: 20,
            points: 1000,
            k_max: 8,
            random_fields: 200,
            quadrature: QuadratureSpec::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn group_model(&self) -> GroupModel {
        GroupModel::parse(&self.group).expect("group validated during resolution")
    }
}

fn parse_number<T: FromStr>(s: &Setting, text: &str) -> Result<T, ConfigError> {
    text.trim()
        .parse()
        .map_err(|_| s.error(format!("malformed number `{}`", text.trim())))
}

fn parse_reals(s: &Setting, text: &str) -> Result<Vec<f64>, ConfigError> {
    let values = text
        .split(',')
        .map(|t| {
            let v: f64 = parse_number(s, t)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(s.error(format!("`{}` is not finite", t.trim())))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(s.error("empty list"));
    }
    Ok(values)
}

/// Applies `file` then `flags` over the defaults and validates the result.
pub fn resolve(file: &[Setting], flags: &[Setting]) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut drift_a: Option<(Setting, Vec<Vec<f64>>)> = None;
    for s in file.iter().chain(flags) {
        if !KEYS.contains(&s.key.as_str()) {
            return Err(s.error(format!("unknown key `{}`; valid keys: {}", s.key, KEYS.join(", "))));
        }
        let v = s.value.as_str();
        match s.key.as_str() {
            "mode" => cfg.mode = v.trim().parse().map_err(|e: String| s.error(e))?,
            "group" => {
                GroupModel::parse(v).map_err(|e| s.error(e.to_string()))?;
                cfg.group = v.trim().to_string();
            }
            "instance" => {
                cfg.instances = if v.trim() == "all" {
                    catalog().into_iter().map(|i| i.id).collect()
                } else {
                    v.split(',')
                        .map(|t| t.trim().parse::<InstanceId>().map_err(|e| s.error(e.to_string())))
                        .collect::<Result<Vec<_>, _>>()?
                };
            }
            "delta" => cfg.delta = Some(parse_reals(s, v)?),
            "alpha" => cfg.alpha = Some(parse_reals(s, v)?),
            "theta" => cfg.theta = Some(parse_reals(s, v)?),
            "beta" => cfg.beta = Some(parse_reals(s, v)?),
            "p" => cfg.p = Some(parse_reals(s, v)?),
            "gamma" => cfg.gamma = parse_reals(s, v)?,
            "drift_a" => {
                let dirs = v
                    .split(';')
                    .map(|d| parse_reals(s, d))
                    .collect::<Result<Vec<_>, _>>()?;
                drift_a = Some((s.clone(), dirs));
            }
            "character_sign" => {
                cfg.character_sign = match v.trim() {
                    "positive" => CharacterSign::Positive,
                    "negative" => CharacterSign::Negative,
                    other => return Err(s.error(format!("character sign `{other}` is not positive or negative"))),
                }
            }
            "seed" => cfg.seed = parse_number(s, v)?,
            "fields" => cfg.fields = parse_number(s, v)?,
            "samples" => cfg.samples = parse_number(s, v)?,
            "points" => cfg.points = parse_number(s, v)?,
            "k_max" => cfg.k_max = parse_number(s, v)?,
            "random_fields" => cfg.random_fields = parse_number(s, v)?,
            "quad_order" => cfg.quadrature.order = parse_number(s, v)?,
            "quad_tol" => cfg.quadrature.rel_tol = parse_number(s, v)?,
            "quad_depth" => cfg.quadrature.max_depth = parse_number(s, v)?,
            "out" => {
                if v.trim().is_empty() {
                    return Err(s.error("empty output directory"));
                }
                cfg.out = PathBuf::from(v.trim());
            }
            _ => unreachable!("key list checked above"),
        }
    }
    let g = cfg.group_model();
    let n = g.horizontal_dim();
    cfg.drift_a = match drift_a {
        Some((s, dirs)) => {
            for d in &dirs {
                if d.len() != n {
                    return Err(s.error(format!(
                        "drift direction has {} components, the group has N = {n}",
                        d.len()
                    )));
                }
            }
            dirs
        }
        None => {
            let mut e1 = vec![0.0; n];
            e1[0] = 1.0;
            vec![e1]
        }
    };
    cfg.quadrature
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    if cfg.instances.is_empty() {
        return Err(ConfigError::Invalid("no instances selected".into()));
    }
    if cfg.k_max == 0 {
        return Err(ConfigError::Invalid("k_max must be at least 1".into()));
    }
    Ok(cfg)
}

/// Reads the optional configuration file and merges it with `flags`.
pub fn parse_config(path: Option<&Path>, flags: &[Setting]) -> Result<ExperimentConfig, ConfigError> {
    let file = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", p.display())))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    resolve(&file, flags)
}

/// Values of `name` tried for `inst` on `g` when the configuration has no grid.
pub fn default_grid(inst: &InequalityInstance, g: &GroupModel, name: ParamName) -> Vec<f64> {
    use InstanceId::*;
    let n = g.horizontal_dim() as f64;
    match (inst.id, name) {
        (DaviesHinzWeighted, ParamName::P) => vec![1.5, 2.0, 3.0],
        (DaviesHinzWeighted, ParamName::Alpha) => vec![0.5 * (-1.0 + (n - 4.0) / 2.0)],
        (_, ParamName::Alpha) => vec![0.0, 1.0],
        (_, ParamName::Delta) => {
            if n / 2.0 == 1.0 {
                vec![-1.0]
            } else {
                vec![-1.0, -n / 2.0]
            }
        }
        (_, ParamName::Beta) => vec![0.0, 1.0],
        (_, ParamName::Theta) => vec![1.0],
        (_, ParamName::P) => vec![2.0],
    }
}

/// Cartesian product of the parameter grids of `inst`; inadmissible
/// combinations are returned separately with the reason.
pub fn parameter_matrix(
    inst: &InequalityInstance,
    g: &GroupModel,
    cfg: &ExperimentConfig,
) -> (Vec<Params>, Vec<(Params, String)>) {
    let mut combos = vec![Params::default()];
    for &name in inst.params {
        let grid = match name {
            ParamName::Delta => cfg.delta.clone(),
            ParamName::Alpha => cfg.alpha.clone(),
            ParamName::Theta => cfg.theta.clone(),
            ParamName::Beta => cfg.beta.clone(),
            ParamName::P => cfg.p.clone(),
        }
        .unwrap_or_else(|| default_grid(inst, g, name));
        combos = combos
            .into_iter()
            .flat_map(|c| {
                grid.iter().map(move |&v| {
                    let mut c = c;
                    match name {
                        ParamName::Delta => c.delta = Some(v),
                        ParamName::Alpha => c.alpha = Some(v),
                        ParamName::Theta => c.theta = Some(v),
                        ParamName::Beta => c.beta = Some(v),
                        ParamName::P => c.p = Some(v),
                    }
                    c
                })
            })
            .collect();
    }
    let mut ok = Vec::new();
    let mut rejected = Vec::new();
    for c in combos {
        match inst.admissible(g, &c) {
            Ok(()) => ok.push(c),
            Err(reason) => rejected.push((c, reason)),
        }
    }
    (ok, rejected)
}

/// Compact `name=value` rendering of the set parameters.
pub fn params_label(p: &Params) -> String {
    let mut parts = Vec::new();
    for (name, v) in [
        ("delta", p.delta),
        ("alpha", p.alpha),
        ("theta", p.theta),
        ("beta", p.beta),
        ("p", p.p),
    ] {
        if let Some(v) = v {
            parts.push(format!("{name}={v}"));
        }
    }
    parts.join(";")
}

/// A gated check that did not pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub mode: Mode,
    pub check: String,
    pub detail: String,
    pub value: f64,
    pub threshold: f64,
}

/// A combination that was not run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub instance: InstanceId,
    pub params: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalitySummary {
    pub evaluated: usize,
    pub failed: usize,
    pub not_converged: usize,
    /// Smallest `deficit / (|lhs| + |rhs_total|)` over converged reports.
    pub min_relative_deficit: Option<f64>,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRecord {
    pub delta: f64,
    pub gamma: f64,
    pub a: Vec<f64>,
    pub field: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryRecord {
    pub gamma: f64,
    pub a: Vec<f64>,
    pub sample: u64,
    pub defect: f64,
    pub relative_defect: f64,
    pub rayleigh: f64,
    pub rayleigh_error: f64,
    pub spectral_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessRecord {
    pub series: RatioSeries,
    pub monotone: bool,
    pub gated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best: Option<BestConstant>,
}

/// Everything a run produces besides the evaluation reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub exit_code: i32,
    pub failures: usize,
    pub quadrature_failures: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub identities: Vec<IdentityCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequalities: Option<InequalitySummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sharpness: Vec<SharpnessRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sharpness_skipped: Vec<Skipped>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub decomposition: Vec<DecompositionRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub symmetry: Vec<SymmetryRecord>,
}

/// In-memory result of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: Summary,
    pub reports: Vec<EvaluationReport>,
    pub failures: Vec<Failure>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

struct State {
    failures: Vec<Failure>,
    quad_failures: usize,
}

impl State {
    fn fail(&mut self, mode: Mode, check: &str, detail: String, value: f64, threshold: f64) {
        self.failures.push(Failure {
            mode,
            check: check.into(),
            detail,
            value,
            threshold,
        });
    }

    fn quadrature(&mut self, mode: Mode, detail: String) {
        self.quad_failures += 1;
        self.fail(mode, "quadrature", detail, f64::NAN, f64::NAN);
    }
}

fn drifts(g: &GroupModel, cfg: &ExperimentConfig) -> Vec<DriftSpec> {
    cfg.gamma
        .iter()
        .flat_map(|&gm| {
            cfg.drift_a
                .iter()
                .map(move |a| {
                    DriftSpec::new(g, gm, a.clone())
                        .expect("validated drift")
                        .with_sign(cfg.character_sign)
                })
        })
        .collect()
}

fn selected(cfg: &ExperimentConfig) -> Vec<InequalityInstance> {
    cfg.instances.iter().map(|id| id.instance()).collect()
}

fn run_identities(g: &GroupModel, cfg: &ExperimentConfig, st: &mut State) -> Vec<IdentityCheck> {
    let mut checks = differential_identities(g, cfg.points, cfg.seed);
    if g.is_polarizable() && g.homogeneous_dim() > 2 {
        checks.push(polarizable_identity(g, cfg.points, cfg.seed));
    }
    for c in &checks {
        if !c.passed {
            let b = c.b.map(|b| format!(" b={b}")).unwrap_or_default();
            st.fail(Mode::Identities, &c.name, format!("{}{b}", c.group), c.max_relative, c.tolerance);
        }
    }
    checks
}

fn run_inequalities(
    g: &GroupModel,
    cfg: &ExperimentConfig,
    st: &mut State,
) -> (InequalitySummary, Vec<EvaluationReport>) {
    let sampler = FieldSampler::new(g, cfg.seed);
    let mut skipped = Vec::new();
    let mut jobs: Vec<(InequalityInstance, Params, Option<DriftSpec>)> = Vec::new();
    for inst in selected(cfg) {
        let (ok, rejected) = parameter_matrix(&inst, g, cfg);
        for (p, reason) in rejected {
            skipped.push(Skipped {
                instance: inst.id,
                params: params_label(&p),
                reason,
            });
        }
        for p in ok {
            if inst.measure == Measure::Drift {
                for d in drifts(g, cfg) {
                    jobs.push((inst.clone(), p, Some(d)));
                }
            } else {
                jobs.push((inst.clone(), p, None));
            }
        }
    }
    let work: Vec<(usize, u64)> = (0..jobs.len())
        .flat_map(|j| (0..cfg.fields).map(move |i| (j, i)))
        .collect();
    let results: Vec<Result<EvaluationReport, String>> = work
        .par_iter()
        .map(|&(j, i)| {
            let (inst, p, d) = &jobs[j];
            let f = sampler.field(i).map_err(|e| e.to_string())?;
            match evaluate(inst, g, d.as_ref(), p, f.as_ref(), &cfg.quadrature) {
                Ok(r) => Ok(r),
                Err(CatalogError::NotConverged(r)) => Ok(*r),
                Err(e) => Err(format!("{} [{}] field {i}: {e}", inst.id, params_label(p))),
            }
        })
        .collect();
    let mut reports = Vec::new();
    let mut failed = 0;
    let mut not_converged = 0;
    let mut min_rel: Option<f64> = None;
    for (res, &(j, i)) in results.into_iter().zip(&work) {
        let (inst, p, _) = &jobs[j];
        let label = format!("{} [{}] field {i}", inst.id, params_label(p));
        match res {
            Ok(r) => {
                if !r.converged {
                    not_converged += 1;
                    st.quadrature(Mode::Inequalities, label);
                } else {
                    let scale = r.lhs.abs() + r.rhs_total.abs();
                    if scale > 0.0 {
                        let rel = r.deficit / scale;
                        min_rel = Some(min_rel.map_or(rel, |m| m.min(rel)));
                    }
                    if !r.holds() {
                        failed += 1;
                        st.fail(Mode::Inequalities, "deficit", label, r.deficit, -r.quad_err.budget);
                    }
                }
                reports.push(r);
            }
            Err(e) => {
                failed += 1;
                st.fail(Mode::Inequalities, "evaluation", e, f64::NAN, f64::NAN);
            }
        }
    }
    (
        InequalitySummary {
            evaluated: reports.len(),
            failed,
            not_converged,
            min_relative_deficit: min_rel,
            skipped,
        },
        reports,
    )
}

fn run_decomposition(g: &GroupModel, cfg: &ExperimentConfig, st: &mut State) -> Vec<DecompositionRecord> {
    let sampler = FieldSampler::new(g, cfg.seed);
    let deltas = cfg.delta.clone().unwrap_or_else(|| vec![-1.0]);
    let mut work = Vec::new();
    for &delta in &deltas {
        for d in drifts(g, cfg) {
            for i in 0..cfg.samples {
                work.push((delta, d.clone(), i));
            }
        }
    }
    let results: Vec<_> = work
        .par_iter()
        .map(|(delta, d, i)| {
            let f = sampler.field(*i).map_err(|e| e.to_string())?;
            decomposition_residual(g, d, *delta, f.as_ref(), &cfg.quadrature).map_err(|e| e.to_string())
        })
        .collect();
    let mut out = Vec::new();
    for ((delta, d, i), res) in work.into_iter().zip(results) {
        let label = format!("delta={delta} gamma={} a={:?} field {i}", d.gamma, d.a);
        match res {
            Ok(r) => {
                let rel = r.relative();
                if !(rel <= DECOMPOSITION_TOL) {
                    st.fail(Mode::Decomposition, "decomposition", label, rel, DECOMPOSITION_TOL);
                }
                out.push(DecompositionRecord {
                    delta,
                    gamma: d.gamma,
                    a: d.a.clone(),
                    field: i,
                    lhs: r.lhs,
                    rhs: r.rhs,
                    residual: r.residual,
                    relative: rel,
                });
            }
            Err(e) => st.quadrature(Mode::Decomposition, format!("{label}: {e}")),
        }
    }
    out
}

fn symmetry_sample(
    g: &GroupModel,
    d: &DriftSpec,
    sampler: &FieldSampler,
    i: u64,
    spec: &QuadratureSpec,
) -> Result<SymmetryRecord, String> {
    let (phi, psi) = sampler.pair(i).map_err(|e| e.to_string())?;
    let fields: [&dyn ScalarField; 2] = [phi.as_ref(), psi.as_ref()];
    let dom = domain_for(g, &fields, Some(d));
    let s = symmetry_defect(g, d, phi.as_ref(), psi.as_ref(), &dom, spec).map_err(|e| e.to_string())?;
    let dom1 = domain_for(g, &fields[..1], Some(d));
    let rq = rayleigh_quotient(g, d, phi.as_ref(), &dom1, spec).map_err(|e: IntegralError| e.to_string())?;
    Ok(SymmetryRecord {
        gamma: d.gamma,
        a: d.a.clone(),
        sample: i,
        defect: s.defect,
        relative_defect: s.relative(),
        rayleigh: rq.value,
        rayleigh_error: rq.error,
        spectral_bound: d.gamma2_b2(),
    })
}

fn run_symmetry(g: &GroupModel, cfg: &ExperimentConfig, st: &mut State) -> Vec<SymmetryRecord> {
    let sampler = FieldSampler::new(g, cfg.seed);
    let work: Vec<(DriftSpec, u64)> = drifts(g, cfg)
        .into_iter()
        .flat_map(|d| (0..cfg.samples).map(move |i| (d.clone(), i)))
        .collect();
    let results: Vec<_> = work
        .par_iter()
        .map(|(d, i)| symmetry_sample(g, d, &sampler, *i, &cfg.quadrature))
        .collect();
    let mut out = Vec::new();
    for ((d, i), res) in work.into_iter().zip(results) {
        let label = format!("gamma={} a={:?} sample {i}", d.gamma, d.a);
        match res {
            Ok(r) => {
                if !(r.relative_defect <= SYMMETRY_TOL) {
                    st.fail(Mode::Symmetry, "symmetry", label.clone(), r.relative_defect, SYMMETRY_TOL);
                }
                if !(r.rayleigh >= r.spectral_bound - SPECTRUM_TOL) {
                    st.fail(Mode::Symmetry, "spectrum", label, r.rayleigh, r.spectral_bound - SPECTRUM_TOL);
                }
                out.push(r);
            }
            Err(e) => st.quadrature(Mode::Symmetry, format!("{label}: {e}")),
        }
    }
    out
}

/// Instances whose distance to the sharp constant at `k = 8` is gated.
pub fn gap_gated(id: InstanceId) -> bool {
    matches!(
        id,
        InstanceId::ClassicalRellich
            | InstanceId::HorizontalWeightedRellich
            | InstanceId::HorizontalHardy
            | InstanceId::KombeRellich
    )
}

fn run_sharpness(
    g: &GroupModel,
    cfg: &ExperimentConfig,
    st: &mut State,
) -> (Vec<SharpnessRecord>, Vec<Skipped>) {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let drift = cfg
        .drift_a
        .first()
        .map(|a| {
            DriftSpec::new(g, SHARPNESS_GAMMA, a.clone())
                .expect("validated drift")
                .with_sign(cfg.character_sign)
        });
    let ks: Vec<u32> = (1..=cfg.k_max).collect();
    for inst in selected(cfg) {
        let (ok, rejected) = parameter_matrix(&inst, g, cfg);
        for (p, reason) in rejected {
            skipped.push(Skipped { instance: inst.id, params: params_label(&p), reason });
        }
        for p in ok {
            let label = format!("{} [{}]", inst.id, params_label(&p));
            let c = match extremal_exponent(&inst, g, &p) {
                Ok(c) => c,
                Err(e) => {
                    skipped.push(Skipped { instance: inst.id, params: params_label(&p), reason: e.to_string() });
                    continue;
                }
            };
            let d = if inst.measure == Measure::Drift { drift.as_ref() } else { None };
            let series = match ratio_series(&inst, g, d, &p, c, &ks, &cfg.quadrature) {
                Ok(s) => s,
                Err(SharpnessError::Catalog(CatalogError::Support { reason, .. })) => {
                    skipped.push(Skipped { instance: inst.id, params: params_label(&p), reason });
                    continue;
                }
                Err(e) => {
                    st.quadrature(Mode::Sharpness, format!("{label}: {e}"));
                    continue;
                }
            };
            for pt in series.points.iter().filter(|pt| !pt.converged) {
                st.quadrature(Mode::Sharpness, format!("{label} k={}", pt.k));
            }
            let gated = inst.measure == Measure::Haar && series.sharp_constant.is_some();
            let monotone = series.is_monotone();
            let best = if cfg.random_fields > 0 || cfg.k_max > 0 {
                let budget = SearchBudget {
                    k_max: cfg.k_max,
                    random_fields: cfg.random_fields,
                    seed: cfg.seed,
                    ..SearchBudget::default()
                };
                match best_constant_estimate(&inst, g, d, &p, &budget, &cfg.quadrature) {
                    Ok(b) => Some(b),
                    Err(e) => {
                        st.quadrature(Mode::Sharpness, format!("{label} best constant: {e}"));
                        None
                    }
                }
            } else {
                None
            };
            if gated {
                let sharp = series.sharp_constant.unwrap_or(f64::NAN);
                for v in series.violations() {
                    st.fail(Mode::Sharpness, "below_sharp_constant", format!("{label} k={}", v.k), v.ratio, sharp);
                }
                if !monotone {
                    st.fail(Mode::Sharpness, "monotone", label.clone(), series.infimum, sharp);
                }
                if cfg.k_max >= 8 && gap_gated(inst.id) {
                    let reach: f64 = series
                        .points
                        .iter()
                        .filter(|pt| pt.k <= 8)
                        .map(|pt| pt.ratio)
                        .fold(f64::INFINITY, f64::min);
                    let gap = reach / sharp - 1.0;
                    if !(gap <= SHARPNESS_GAP) {
                        st.fail(Mode::Sharpness, "gap", label.clone(), gap, SHARPNESS_GAP);
                    }
                }
                if let Some(b) = &best {
                    if b.estimate < sharp - b.error - 1e-12 * sharp {
                        st.fail(Mode::Sharpness, "best_constant", label.clone(), b.estimate, sharp);
                    }
                }
            }
            records.push(SharpnessRecord { series, monotone, gated, best });
        }
    }
    (records, skipped)
}

/// Runs the selected mode and returns the reports without writing files.
pub fn execute(cfg: &ExperimentConfig) -> Outcome {
    let g = cfg.group_model();
    let mut st = State { failures: Vec::new(), quad_failures: 0 };
    let m = cfg.mode;
    let identities = if m.includes(Mode::Identities) { run_identities(&g, cfg, &mut st) } else { Vec::new() };
    let (inequalities, reports) = if m.includes(Mode::Inequalities) {
        let (s, r) = run_inequalities(&g, cfg, &mut st);
        (Some(s), r)
    } else {
        (None, Vec::new())
    };
    let decomposition = if m.includes(Mode::Decomposition) { run_decomposition(&g, cfg, &mut st) } else { Vec::new() };
    let symmetry = if m.includes(Mode::Symmetry) { run_symmetry(&g, cfg, &mut st) } else { Vec::new() };
    let (sharpness, sharpness_skipped) = if m.includes(Mode::Sharpness) {
        run_sharpness(&g, cfg, &mut st)
    } else {
        (Vec::new(), Vec::new())
    };
    let exit_code = if st.quad_failures > 0 {
        3
    } else if !st.failures.is_empty() {
        1
    } else {
        0
    };
    Outcome {
        summary: Summary {
            version: VERSION,
            config: cfg.clone(),
            exit_code,
            failures: st.failures.len(),
            quadrature_failures: st.quad_failures,
            identities,
            inequalities,
            sharpness,
            sharpness_skipped,
            decomposition,
            symmetry,
        },
        reports,
        failures: st.failures,
    }
}

/// Rows of `ratios.csv`.
pub fn ratios_csv(records: &[SharpnessRecord]) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "group", "params", "k", "C", "ratio", "err"])?;
    for r in records {
        let s = &r.series;
        for pt in &s.points {
            w.write_record([
                s.instance.to_string(),
                s.group.clone(),
                params_label(&s.params),
                pt.k.to_string(),
                pt.c.to_string(),
                pt.ratio.to_string(),
                pt.err.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| RunError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

/// Writes `reports.json`, `ratios.csv`, `failures.json` and `summary.json`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.to_path_buf(), source })?;
    write(&dir.join("reports.json"), &serde_json::to_string_pretty(&outcome.reports)?)?;
    write(&dir.join("ratios.csv"), &ratios_csv(&outcome.summary.sharpness)?)?;
    write(&dir.join("failures.json"), &serde_json::to_string_pretty(&outcome.failures)?)?;
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&outcome.summary)?)?;
    Ok(())
}

/// Executes `cfg` and writes its outputs to `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let outcome = execute(cfg);
    write_outputs(&outcome, &cfg.out)?;
    Ok(outcome)
}

impl From<QuadratureError> for ConfigError {
    fn from(e: QuadratureError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}
