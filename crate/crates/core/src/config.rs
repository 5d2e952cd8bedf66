//! Run configuration: a TOML file with one section per module, strict key
//! checking and per-key validation errors.
//!
//! ```toml
//! seed = 7
//! tol_profile = "default"
//!
//! [field]
//! name = "CONST"
//! a = -0.5
//!
//! [verify]
//! battery = ["constant-exactness"]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cauchy::SolverOptions;
use crate::coeff::{builtin_field, sample_grid, validate_bounds, CoefficientField};
use crate::error::{Error, Result};
use crate::montecarlo::DriftForm;
use crate::parametrix::{QuadratureSpec, SeriesControl};

/// Coefficient field: a catalog name or an expression over `t` and `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_plus: Option<f64>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            name: Some("CONST".into()),
            a: Some(-0.5),
            expr: None,
            holder: None,
            alpha: None,
            beta: None,
            beta_plus: None,
        }
    }
}

impl FieldConfig {
    pub fn named(name: &str, a: Option<f64>) -> Self {
        Self {
            name: Some(name.into()),
            a,
            ..Self::default()
        }
    }

    /// Build the field. Declared bounds must bracket the sampled values.
    pub fn build(&self) -> Result<CoefficientField> {
        let field = match (&self.name, &self.expr) {
            (Some(_), Some(_)) => return Err(Error::Config("give either name or expr, not both".into())),
            (None, None) => return Err(Error::Config("field needs a name or an expr".into())),
            (Some(name), None) => {
                if self.holder.is_some() || self.alpha.is_some() {
                    return Err(Error::Config("holder and alpha apply to expression fields only".into()));
                }
                builtin_field(name, self.a)?
            }
            (None, Some(expr)) => {
                if self.a.is_some() {
                    return Err(Error::Config("a applies to CONST only".into()));
                }
                let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("expression field needs {key}")));
                CoefficientField::from_expr(
                    expr,
                    need(self.holder, "holder")?,
                    need(self.alpha, "alpha")?,
                    need(self.beta, "beta")?,
                    need(self.beta_plus, "beta_plus")?,
                )?
            }
        };
        let beta = self.beta.unwrap_or(field.beta());
        let beta_plus = self.beta_plus.unwrap_or(field.beta_plus());
        if !(beta > -1.0 && beta <= beta_plus && beta_plus < 0.0) {
            return Err(Error::Config(format!(
                "bounds must satisfy -1 < beta <= beta_plus < 0, got [{beta}, {beta_plus}]"
            )));
        }
        let report = validate_bounds(&field, &sample_grid(10.0, 20.0, 41, 400));
        if !(report.worst_low >= beta && report.worst_high <= beta_plus) {
            return Err(Error::Config(format!(
                "field values [{}, {}] leave the declared bounds [{beta}, {beta_plus}]",
                report.worst_low, report.worst_high
            )));
        }
        if !report.ok {
            return Err(Error::Config(format!("field '{}' leaves its bounds", field.name())));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsConfig {
    pub horizon: f64,
    /// Artifact path, relative to the output directory unless absolute.
    pub artifact: PathBuf,
    /// Sources `[s, y]` built eagerly by `fs build`.
    pub sources: Vec<[f64; 2]>,
    /// Evaluation points `[t, x, s, y]` for `fs eval`.
    pub points: Vec<[f64; 4]>,
    /// Scale `δ` of the bound kernel.
    pub delta: f64,
    /// Fit the estimate constants on the built sources.
    pub fit: bool,
}

impl Default for FsConfig {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            artifact: PathBuf::from("fs.json"),
            sources: vec![[0.0, 1.0]],
            points: vec![[1.0, 1.0, 0.0, 1.0]],
            delta: 0.5,
            fit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub s: f64,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// Preset name (`one`, `zero`, `gaussian`, `bump`) or an expression in `x`.
    pub initial: String,
    /// Optional source term, an expression in `t` and `x`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub delta: f64,
    pub nodes_per_panel: usize,
    pub panel_sigmas: f64,
    pub tail_sigmas: f64,
    pub time_nodes: usize,
    pub min_margin: f64,
    pub correction_nodes: usize,
    pub correction_tail_sigmas: f64,
    pub correction_time_nodes: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            s: 0.0,
            times: vec![0.5, 1.0],
            xs: vec![0.5, 1.0, 1.5, 2.0],
            initial: "one".into(),
            source: None,
            delta: 0.5,
            nodes_per_panel: o.nodes_per_panel,
            panel_sigmas: o.panel_sigmas,
            tail_sigmas: o.tail_sigmas,
            time_nodes: o.time_nodes,
            min_margin: o.min_margin,
            correction_nodes: o.correction_nodes,
            correction_tail_sigmas: o.correction_tail_sigmas,
            correction_time_nodes: o.correction_time_nodes,
        }
    }
}

impl SolveConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            nodes_per_panel: self.nodes_per_panel,
            panel_sigmas: self.panel_sigmas,
            tail_sigmas: self.tail_sigmas,
            time_nodes: self.time_nodes,
            min_margin: self.min_margin,
            correction_nodes: self.correction_nodes,
            correction_tail_sigmas: self.correction_tail_sigmas,
            correction_time_nodes: self.correction_time_nodes,
        }
    }

    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .flat_map(|&t| self.xs.iter().map(move |&x| (t, x)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftName {
    Bessel,
    Doubled,
    Off,
}

impl From<DriftName> for DriftForm {
    fn from(d: DriftName) -> Self {
        match d {
            DriftName::Bessel => DriftForm::Bessel,
            DriftName::Doubled => DriftForm::Doubled,
            DriftName::Off => DriftForm::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub x0: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub drift: DriftName,
    pub record_stride: usize,
    pub noise_scale: f64,
    /// Write the raw paths as a binary dump next to the summary.
    pub dump: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            x0: 1.0,
            t_start: 0.0,
            t_end: 1.0,
            dt: 1e-3,
            n_paths: 10_000,
            drift: DriftName::Bessel,
            record_stride: 10,
            noise_scale: 1.0,
            dump: false,
        }
    }
}

/// Reference distribution for `mc compare`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareKernel {
    /// Closed-form reflected Brownian motion.
    ReflectedBm,
    /// Bessel kernel of the constant field.
    Bessel,
    /// Norm of two-dimensional Brownian motion, simulated directly.
    BmNorm2,
    /// The parametrix approximation of the configured field.
    Fs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub kernel: CompareKernel,
    pub bins: usize,
    pub y_max: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            kernel: CompareKernel::ReflectedBm,
            bins: 40,
            y_max: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub battery: Vec<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            battery: vec!["all".into()],
        }
    }
}

/// Settings for `kernel eval` and `kernel table`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub a: f64,
    pub s: f64,
    pub y: f64,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            a: -0.5,
            s: 0.0,
            y: 1.0,
            times: vec![0.5, 1.0, 2.0],
            xs: vec![0.25, 0.5, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub tol_profile: String,
    pub field: FieldConfig,
    pub quad: QuadratureSpec,
    pub series: SeriesControl,
    pub fs: FsConfig,
    pub solve: SolveConfig,
    pub sim: SimSection,
    pub compare: CompareConfig,
    pub verify: VerifyConfig,
    pub kernel: KernelConfig,
    /// Overrides on top of the selected tolerance profile.
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            tol_profile: "default".into(),
            field: FieldConfig::default(),
            quad: QuadratureSpec::default(),
            series: SeriesControl::default(),
            fs: FsConfig::default(),
            solve: SolveConfig::default(),
            sim: SimSection::default(),
            compare: CompareConfig::default(),
            verify: VerifyConfig::default(),
            kernel: KernelConfig::default(),
            tolerances: BTreeMap::new(),
        }
    }
}

/// One problem found in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// 1-based line, when the key appears in the text.
    pub line: Option<usize>,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}, key '{}': {}", self.key, self.reason),
            None => write!(f, "key '{}': {}", self.key, self.reason),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (or the top level when `section` is empty).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') && line.ends_with(']') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn issue(text: &str, section: &str, key: &str, reason: impl Into<String>) -> ConfigIssue {
    let full = if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    };
    ConfigIssue {
        line: locate(text, section, key).or_else(|| locate_section(text, section)),
        key: full,
        reason: reason.into(),
    }
}

fn locate_section(text: &str, section: &str) -> Option<usize> {
    text.lines()
        .position(|l| l.trim() == format!("[{section}]"))
        .map(|i| i + 1)
}

/// Parse and validate, reporting every problem found.
pub fn parse_config_detailed(text: &str) -> std::result::Result<RunConfig, Vec<ConfigIssue>> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let key = e
            .span()
            .map(|s| text[s.clone()].trim().trim_matches('"').to_string())
            .unwrap_or_default();
        vec![ConfigIssue {
            line,
            key,
            reason: e.message().to_string(),
        }]
    })?;
    let issues = validate(&cfg, text);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

/// Parse and validate a config text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_detailed(text).map_err(|issues| {
        Error::Config(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })
}

/// Serialize in canonical form (every key present).
pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

fn validate(cfg: &RunConfig, text: &str) -> Vec<ConfigIssue> {
    let mut out = Vec::new();
    let f = &cfg.field;
    if let (Some(b), Some(bp)) = (f.beta, f.beta_plus) {
        if b > bp {
            out.push(issue(text, "field", "beta", format!("beta = {b} exceeds beta_plus = {bp}")));
        }
    }
    if let Some(bp) = f.beta_plus {
        if !(bp < 0.0 && bp > -1.0) {
            out.push(issue(text, "field", "beta_plus", format!("beta_plus = {bp} must lie in (-1, 0)")));
        }
    }
    if let Some(b) = f.beta {
        if !(b > -1.0 && b < 0.0) {
            out.push(issue(text, "field", "beta", format!("beta = {b} must lie in (-1, 0)")));
        }
    }
    if out.is_empty() {
        if let Err(e) = f.build() {
            let key = if f.expr.is_some() { "expr" } else { "name" };
            out.push(issue(text, "field", key, e.to_string()));
        }
    }
    if let Err(e) = cfg.quad.validate() {
        out.push(issue(text, "quad", "tol", e.to_string()));
    }
    if let Err(e) = cfg.series.validate() {
        out.push(issue(text, "series", "max_terms", e.to_string()));
    }
    if !(cfg.fs.horizon > 0.0 && cfg.fs.horizon.is_finite()) {
        out.push(issue(text, "fs", "horizon", "must be finite and > 0"));
    }
    if !(cfg.fs.delta > 0.0 && cfg.fs.delta < 1.0) {
        out.push(issue(text, "fs", "delta", "must lie in (0, 1)"));
    }
    if cfg.solve.times.iter().any(|&t| !(t > cfg.solve.s)) {
        out.push(issue(text, "solve", "times", "every time must exceed s"));
    }
    if cfg.solve.xs.iter().any(|&x| !(x > 0.0)) {
        out.push(issue(text, "solve", "xs", "points must be > 0"));
    }
    if !(cfg.solve.delta > 0.0 && cfg.solve.delta < 1.0) {
        out.push(issue(text, "solve", "delta", "must lie in (0, 1)"));
    }
    let sim = &cfg.sim;
    if !(sim.x0 > 0.0) {
        out.push(issue(text, "sim", "x0", "must be > 0"));
    }
    if !(sim.t_end > sim.t_start && sim.dt > 0.0 && sim.dt <= (sim.t_end - sim.t_start) / 10.0) {
        out.push(issue(text, "sim", "dt", "need 0 < dt <= (t_end - t_start) / 10"));
    }
    if sim.n_paths == 0 {
        out.push(issue(text, "sim", "n_paths", "must be >= 1"));
    }
    if sim.record_stride == 0 {
        out.push(issue(text, "sim", "record_stride", "must be >= 1"));
    }
    if cfg.compare.bins == 0 || !(cfg.compare.y_max > 0.0) {
        out.push(issue(text, "compare", "bins", "need bins >= 1 and y_max > 0"));
    }
    if !(cfg.kernel.a > -1.0 && cfg.kernel.a < 0.0) {
        out.push(issue(text, "kernel", "a", "must lie in (-1, 0)"));
    }
    match ToleranceTable::profile(&cfg.tol_profile) {
        Ok(mut table) => {
            for (k, v) in &cfg.tolerances {
                if let Err(e) = table.set(k, *v) {
                    out.push(issue(text, "tolerances", k, e.to_string()));
                }
            }
        }
        Err(e) => out.push(issue(text, "", "tol_profile", e.to_string())),
    }
    out
}

impl RunConfig {
    pub fn build_field(&self) -> Result<CoefficientField> {
        self.field.build()
    }

    /// Selected profile with the `[tolerances]` overrides applied.
    pub fn tolerance_table(&self) -> Result<ToleranceTable> {
        let mut t = ToleranceTable::profile(&self.tol_profile)?;
        for (k, v) in &self.tolerances {
            t.set(k, *v)?;
        }
        Ok(t)
    }
}

/// Named tolerances and sample sizes used by the verification checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceTable(BTreeMap<String, f64>);

const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("constant_exact", 1e-12),
    ("normalization_const", 1e-8),
    ("normalization_fs", 5e-3),
    ("bessel_identity", 1e-8),
    ("ck_const", 1e-6),
    ("ck_kol", 1e-6),
    ("ck_fs", 1e-2),
    ("ck_limit", 1e-3),
    ("reflected_bm", 1e-12),
    ("mittag", 1e-10),
    ("mittag_asym", 0.05),
    ("pde_order_lo", 1.7),
    ("pde_order_hi", 2.3),
    ("pde_c", 5.0),
    ("reflection_ratio", 1.0),
    ("volterra_factor", 5.0),
    ("sandwich_safety", 2.0),
    ("sandwich_collapse", 1e-12),
    ("sandwich_delta", 0.5),
    ("mc_paths", 1e5),
    ("mc_dt", 1e-3),
    ("mc_ks", 0.02),
    ("mc_ks_fs", 0.05),
    ("stat_paths", 4000.0),
    ("stat_drift", 2.0),
    ("stat_horizon", 0.3),
    ("cauchy_mass", 5e-3),
    ("cauchy_duhamel", 5e-3),
];

impl ToleranceTable {
    /// `default` holds the reference tolerances, `fast` trades sample size
    /// for speed, `strict` doubles the Monte Carlo sample.
    pub fn profile(name: &str) -> Result<Self> {
        let mut t = Self(DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect());
        match name {
            "default" => {}
            "fast" => {
                t.set("mc_paths", 2e4)?;
                t.set("mc_dt", 2e-3)?;
                t.set("mc_ks", 0.03)?;
                t.set("mc_ks_fs", 0.06)?;
                t.set("stat_paths", 1500.0)?;
            }
            "strict" => {
                t.set("mc_paths", 2e5)?;
                t.set("stat_paths", 8000.0)?;
            }
            other => return Err(Error::Config(format!("unknown tolerance profile '{other}'"))),
        }
        Ok(t)
    }

    pub fn get(&self, key: &str) -> Result<f64> {
        self.0
            .get(key)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing tolerance '{key}'")))
    }

    /// Override an existing entry. Unknown names are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("tolerance '{key}' = {value} must be finite and > 0")));
        }
        match self.0.get_mut(key) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(Error::Config(format!("unknown tolerance '{key}'"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl Default for ToleranceTable {
    fn default() -> Self {
        Self::profile("default").expect("built-in profile")
    }
}
