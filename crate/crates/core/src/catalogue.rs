//! Scenario catalogue: functional, logical and concrete scenarios with
//! their risk metadata, persisted as a directory of JSON documents plus
//! plain-text ruleset files.
//!
//! A catalogue directory contains `catalogue.json` (strict schema,
//! unknown fields rejected) and the ruleset files referenced by each
//! logical scenario. Values are immutable after load and safe to share
//! across evaluation workers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ordered severity bins: `SNone` (no undesired outcome) sits below the
/// four ISO 26262-style harm levels S0 (cosmetic damage) through S3
/// (life-threatening or fatal injuries).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SeverityLevel {
    SNone,
    S0,
    S1,
    S2,
    S3,
}

impl SeverityLevel {
    /// All levels that participate in tolerability accounting (S0..S3).
    pub const COUNTED: [SeverityLevel; 4] = [
        SeverityLevel::S0,
        SeverityLevel::S1,
        SeverityLevel::S2,
        SeverityLevel::S3,
    ];

    pub fn ordinal(self) -> i8 {
        match self {
            SeverityLevel::SNone => -1,
            SeverityLevel::S0 => 0,
            SeverityLevel::S1 => 1,
            SeverityLevel::S2 => 2,
            SeverityLevel::S3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityLevel::SNone => "SNONE",
            SeverityLevel::S0 => "S0",
            SeverityLevel::S1 => "S1",
            SeverityLevel::S2 => "S2",
            SeverityLevel::S3 => "S3",
        }
    }

    pub fn from_name(s: &str) -> Option<SeverityLevel> {
        match s {
            "SNONE" => Some(SeverityLevel::SNone),
            "S0" => Some(SeverityLevel::S0),
            "S1" => Some(SeverityLevel::S1),
            "S2" => Some(SeverityLevel::S2),
            "S3" => Some(SeverityLevel::S3),
            _ => None,
        }
    }
}

impl fmt::Display for SeverityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for SeverityLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SeverityLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SeverityLevel::from_name(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown severity level `{s}`")))
    }
}

/// How often a functional scenario occurs in real driving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Exposure {
    /// Occurrences per hour of vehicle use.
    #[serde(rename = "rate_per_hour")]
    RatePerHour { value: f64 },
    /// Fraction of driving time spent inside the scenario, together with
    /// the mean duration of one instance (hours).
    #[serde(rename = "time_proportion")]
    TimeProportion { value: f64, mean_duration_hours: f64 },
}

/// A human-readable scenario family plus the metadata the statistical
/// evaluation needs: exposure, whether the other actors behave
/// reasonably, and a relative test-budget weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalScenario {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub exposure: Exposure,
    pub others_reasonable: bool,
    pub demand_prior: f64,
}

/// Marginal distribution of a single scenario parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Distribution {
    #[serde(rename = "uniform")]
    Uniform { lo: f64, hi: f64 },
    #[serde(rename = "trunc_normal")]
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    #[serde(rename = "discrete")]
    Discrete { options: Vec<DiscreteOption> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteOption {
    pub value: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub name: String,
    pub distribution: Distribution,
}

/// A template field is either a literal number or a reference to a
/// sampled parameter of the logical scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Const(f64),
    Param(String),
}

impl FieldValue {
    pub fn resolve(&self, assignments: &BTreeMap<String, f64>) -> Option<f64> {
        match self {
            FieldValue::Const(v) => Some(*v),
            FieldValue::Param(name) => assignments.get(name).copied(),
        }
    }

    fn param_name(&self) -> Option<&str> {
        match self {
            FieldValue::Param(name) => Some(name),
            FieldValue::Const(_) => None,
        }
    }
}

/// Built-in longitudinal scene families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum SceneTemplate {
    /// Ego alone on a straight road section of `road_length` metres.
    #[serde(rename = "free_drive")]
    FreeDrive { ego_speed: FieldValue, road_length: FieldValue },
    /// Ego follows a lead vehicle that brakes at `brake_time` with
    /// `brake_decel` until stopped.
    #[serde(rename = "lead_brake")]
    LeadBrake {
        ego_speed: FieldValue,
        lead_speed: FieldValue,
        initial_gap: FieldValue,
        brake_time: FieldValue,
        brake_decel: FieldValue,
    },
    /// A slower vehicle ahead in the adjacent lane merges in front of the
    /// ego at `cut_time`; the ego cannot react to it before the merge.
    #[serde(rename = "cut_in")]
    CutIn {
        ego_speed: FieldValue,
        cutter_speed: FieldValue,
        initial_gap: FieldValue,
        cut_time: FieldValue,
    },
}

impl SceneTemplate {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SceneTemplate::FreeDrive { .. } => "free_drive",
            SceneTemplate::LeadBrake { .. } => "lead_brake",
            SceneTemplate::CutIn { .. } => "cut_in",
        }
    }

    /// Parameter names referenced by the template's fields.
    pub fn referenced_params(&self) -> Vec<&str> {
        let fields: Vec<&FieldValue> = match self {
            SceneTemplate::FreeDrive { ego_speed, road_length } => vec![ego_speed, road_length],
            SceneTemplate::LeadBrake {
                ego_speed,
                lead_speed,
                initial_gap,
                brake_time,
                brake_decel,
            } => vec![ego_speed, lead_speed, initial_gap, brake_time, brake_decel],
            SceneTemplate::CutIn { ego_speed, cutter_speed, initial_gap, cut_time } => {
                vec![ego_speed, cutter_speed, initial_gap, cut_time]
            }
        };
        fields.iter().filter_map(|f| f.param_name()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicalScenario {
    pub id: String,
    pub functional_id: String,
    pub parameters: Vec<ParameterSpec>,
    pub scene_template: SceneTemplate,
    /// Path of the ruleset file, relative to the catalogue root.
    pub ruleset_ref: String,
}

/// A fully instantiated scenario: one value per logical parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcreteScenario {
    pub id: String,
    pub logical_id: String,
    pub seed: u64,
    pub assignments: BTreeMap<String, f64>,
}

/// On-disk document schema, version 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogueDoc {
    pub version: u32,
    pub functional: Vec<FunctionalScenario>,
    pub logical: Vec<LogicalScenario>,
}

/// Loaded, validated catalogue. Immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalogue {
    root: PathBuf,
    functional: Vec<FunctionalScenario>,
    logical: Vec<LogicalScenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueSeverity {
    Error,
    Warning,
}

/// A single validation finding with its location in the catalogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub severity: IssueSeverity,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            IssueSeverity::Error => "error",
            IssueSeverity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CatalogueError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed document {path}: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported catalogue version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("catalogue is invalid:\n{}", format_issues(.issues))]
    Invalid { issues: Vec<Issue> },
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
}

pub const CATALOGUE_VERSION: u32 = 1;

/// Load `catalogue.json` from `root`, cross-link and validate it.
///
/// Any error-severity issue fails the load; the error lists every issue
/// found, each with scenario id and field location.
pub fn load_catalogue(root: &Path) -> Result<Catalogue, CatalogueError> {
    let path = root.join("catalogue.json");
    let bytes = fs::read_to_string(&path).map_err(|source| CatalogueError::Io {
        path: path.clone(),
        source,
    })?;
    let doc: CatalogueDoc = serde_json::from_str(&bytes)
        .map_err(|source| CatalogueError::Malformed { path, source })?;
    if doc.version != CATALOGUE_VERSION {
        return Err(CatalogueError::Version { found: doc.version, expected: CATALOGUE_VERSION });
    }
    let cat = Catalogue { root: root.to_path_buf(), functional: doc.functional, logical: doc.logical };
    let issues = validate_catalogue(&cat);
    if issues.iter().any(|i| i.severity == IssueSeverity::Error) {
        return Err(CatalogueError::Invalid { issues });
    }
    Ok(cat)
}

impl Catalogue {
    /// Build a catalogue directly from parts (used by tests and tools);
    /// the same validation as `load_catalogue` applies.
    pub fn from_parts(
        root: PathBuf,
        functional: Vec<FunctionalScenario>,
        logical: Vec<LogicalScenario>,
    ) -> Result<Catalogue, CatalogueError> {
        let cat = Catalogue { root, functional, logical };
        let issues = validate_catalogue(&cat);
        if issues.iter().any(|i| i.severity == IssueSeverity::Error) {
            return Err(CatalogueError::Invalid { issues });
        }
        Ok(cat)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn functional(&self) -> &[FunctionalScenario] {
        &self.functional
    }

    pub fn logical(&self) -> &[LogicalScenario] {
        &self.logical
    }

    pub fn functional_by_id(&self, id: &str) -> Option<&FunctionalScenario> {
        self.functional.iter().find(|f| f.id == id)
    }

    pub fn logical_by_id(&self, id: &str) -> Option<&LogicalScenario> {
        self.logical.iter().find(|l| l.id == id)
    }

    /// Logical scenarios of one functional scenario, in catalogue order.
    pub fn logicals_of(&self, functional_id: &str) -> Vec<&LogicalScenario> {
        self.logical.iter().filter(|l| l.functional_id == functional_id).collect()
    }

    /// Absolute path of a logical scenario's ruleset file.
    pub fn ruleset_path(&self, ls: &LogicalScenario) -> PathBuf {
        self.root.join(&ls.ruleset_ref)
    }

    pub fn to_document(&self) -> CatalogueDoc {
        CatalogueDoc {
            version: CATALOGUE_VERSION,
            functional: self.functional.clone(),
            logical: self.logical.clone(),
        }
    }

    /// Serialize back to the on-disk JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("catalogue serializes")
    }
}

/// Check every catalogue invariant; an empty list means the catalogue is
/// well formed. Issues carry severity and location.
pub fn validate_catalogue(cat: &Catalogue) -> Vec<Issue> {
    let mut issues = Vec::new();
    let err = |location: String, message: String| Issue {
        severity: IssueSeverity::Error,
        location,
        message,
    };
    let warn = |location: String, message: String| Issue {
        severity: IssueSeverity::Warning,
        location,
        message,
    };

    let mut seen = BTreeSet::new();
    for f in &cat.functional {
        let loc = format!("functional `{}`", f.id);
        if !seen.insert(&f.id) {
            issues.push(err(loc.clone(), format!("duplicate functional id `{}`", f.id)));
        }
        match &f.exposure {
            Exposure::RatePerHour { value } => {
                if !(*value > 0.0) {
                    issues.push(err(format!("{loc}.exposure"), "exposure must be positive".into()));
                }
            }
            Exposure::TimeProportion { value, mean_duration_hours } => {
                if !(*value > 0.0) {
                    issues.push(err(format!("{loc}.exposure"), "exposure must be positive".into()));
                }
                if *value > 1.0 {
                    issues.push(err(
                        format!("{loc}.exposure"),
                        "time proportion must not exceed 1".into(),
                    ));
                }
                if !(*mean_duration_hours > 0.0) {
                    issues.push(err(
                        format!("{loc}.exposure"),
                        "mean_duration_hours must be positive for time_proportion exposure".into(),
                    ));
                }
            }
        }
        if !(f.demand_prior > 0.0) {
            issues.push(err(format!("{loc}.demand_prior"), "demand_prior must be positive".into()));
        }
    }

    let mut seen_logical = BTreeSet::new();
    for l in &cat.logical {
        let loc = format!("logical `{}`", l.id);
        if !seen_logical.insert(&l.id) {
            issues.push(err(loc.clone(), format!("duplicate logical id `{}`", l.id)));
        }
        if cat.functional_by_id(&l.functional_id).is_none() {
            issues.push(err(
                format!("{loc}.functional_id"),
                format!("dangling reference to functional `{}`", l.functional_id),
            ));
        }

        let mut param_names = BTreeSet::new();
        for p in &l.parameters {
            let ploc = format!("{loc}.parameters.{}", p.name);
            if !param_names.insert(p.name.as_str()) {
                issues.push(err(ploc.clone(), format!("duplicate parameter name `{}`", p.name)));
            }
            match &p.distribution {
                Distribution::Uniform { lo, hi } => {
                    if !(lo < hi) {
                        issues.push(err(ploc, "uniform requires lo < hi".into()));
                    }
                }
                Distribution::TruncNormal { sd, lo, hi, mean } => {
                    if !(*sd > 0.0) {
                        issues.push(err(ploc.clone(), "trunc_normal requires sd > 0".into()));
                    }
                    if !(lo < hi) {
                        issues.push(err(ploc.clone(), "trunc_normal requires lo < hi".into()));
                    } else if *sd > 0.0 {
                        let a = crate::special::norm_cdf((lo - mean) / sd);
                        let b = crate::special::norm_cdf((hi - mean) / sd);
                        if b - a < 1e-12 {
                            issues.push(warn(
                                ploc,
                                "truncation bounds leave almost no probability mass".into(),
                            ));
                        }
                    }
                }
                Distribution::Discrete { options } => {
                    if options.is_empty() {
                        issues.push(err(ploc, "discrete distribution needs at least one option".into()));
                    } else {
                        let mut total = 0.0;
                        let mut ok = true;
                        for o in options {
                            if !(o.probability > 0.0) {
                                issues.push(err(
                                    ploc.clone(),
                                    "discrete probabilities must be positive".into(),
                                ));
                                ok = false;
                                break;
                            }
                            total += o.probability;
                        }
                        if ok && (total - 1.0).abs() > 1e-9 {
                            issues.push(err(
                                ploc,
                                format!("probabilities must sum to 1 (got {total})"),
                            ));
                        }
                    }
                }
            }
        }

        for name in l.scene_template.referenced_params() {
            if !param_names.contains(name) {
                issues.push(err(
                    format!("{loc}.scene_template"),
                    format!("template references unknown parameter `{name}`"),
                ));
            }
        }

        let ruleset = cat.ruleset_path(l);
        if !ruleset.is_file() {
            issues.push(err(
                format!("{loc}.ruleset_ref"),
                format!("ruleset file `{}` does not exist", l.ruleset_ref),
            ));
        }
    }

    issues
}

/// Check a concrete scenario against its logical scenario: exactly one
/// assignment per parameter, each within the distribution's support.
pub fn validate_concrete(cs: &ConcreteScenario, ls: &LogicalScenario) -> Vec<Issue> {
    let mut issues = Vec::new();
    let loc = format!("concrete `{}`", cs.id);
    for p in &ls.parameters {
        match cs.assignments.get(&p.name) {
            None => issues.push(Issue {
                severity: IssueSeverity::Error,
                location: loc.clone(),
                message: format!("missing assignment for parameter `{}`", p.name),
            }),
            Some(&v) => {
                let in_support = match &p.distribution {
                    Distribution::Uniform { lo, hi } => v >= *lo && v <= *hi,
                    Distribution::TruncNormal { lo, hi, .. } => v >= *lo && v <= *hi,
                    Distribution::Discrete { options } => options.iter().any(|o| o.value == v),
                };
                if !in_support {
                    issues.push(Issue {
                        severity: IssueSeverity::Error,
                        location: loc.clone(),
                        message: format!("assignment {v} for `{}` is outside the support", p.name),
                    });
                }
            }
        }
    }
    for name in cs.assignments.keys() {
        if !ls.parameters.iter().any(|p| &p.name == name) {
            issues.push(Issue {
                severity: IssueSeverity::Error,
                location: loc.clone(),
                message: format!("assignment for unknown parameter `{name}`"),
            });
        }
    }
    issues
}
