//! Scenario configuration files (TOML).
//!
//! ```toml
//! scenario_id = "torus2d"
//! detection_radius = 0.3
//! n_list = [1, 10, 100]
//! replicas = 200
//! seed = 2024
//! method = "auto"            # auto | lattice | range
//!
//! [domain]
//! kind = "torus"             # torus | free-space
//! dim = 2
//! side = 1.0                 # or diameter = 0.7071...
//!
//! [target]
//! kind = "full"              # full | point | balls
//!
//! [start]
//! kind = "center"            # center | point | balls
//!
//! [dynamics]                 # or [subdiffusion] alpha/diffusivity
//! diffusivity = 1.0
//! drift = { kind = "zero" }
//! dispersion = { kind = "identity" }
//!
//! [numerics]
//! dt = 1e-4                  # also ds, dx, t_max_factor, t_max, precision, max_moment
//!
//! [output]
//! dir = "out"
//! keep_samples = true
//! ```

use std::fmt;
use std::path::Path;

use covertime::dynamics::{DispersionField, DriftField};
use covertime::geometry::{Domain, StartSet, Target};
use covertime::scenario::{CoverMethod, Motion, Scenario, StepOverrides, TimeCap};
use covertime::Real;
use serde::{Deserialize, Serialize};

/// Top-level keys every configuration must set (besides one of
/// `dynamics`/`subdiffusion`).
pub const REQUIRED_KEYS: &[&str] = &["domain", "detection_radius", "n_list", "replicas", "seed"];

/// Aggregated configuration problems, one line each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl ConfigError {
    pub fn one(msg: impl Into<String>) -> Self {
        Self {
            problems: vec![msg.into()],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario_id: Option<String>,
    pub domain: DomainConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub start: StartConfig,
    #[serde(default)]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default)]
    pub subdiffusion: Option<SubdiffusionConfig>,
    pub detection_radius: f64,
    pub n_list: Vec<u64>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default)]
    pub method: CoverMethod,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    Torus {
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diameter: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side: Option<f64>,
    },
    FreeSpace {
        dim: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    #[default]
    Full,
    Point {
        point: Vec<f64>,
    },
    Balls {
        centers: Vec<Vec<f64>>,
        radius: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartConfig {
    /// Center of a torus, origin of free space.
    #[default]
    Center,
    Point {
        point: Vec<f64>,
    },
    Balls {
        centers: Vec<Vec<f64>>,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub diffusivity: f64,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub dispersion: DispersionConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftConfig {
    #[default]
    Zero,
    Constant {
        vector: Vec<f64>,
    },
    Inward {
        center: Vec<f64>,
        radius: f64,
        strength: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DispersionConfig {
    #[default]
    Identity,
    Scalar {
        value: f64,
    },
    Diagonal {
        values: Vec<f64>,
    },
    Bump {
        center: Vec<f64>,
        width: f64,
        base: f64,
        peak: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdiffusionConfig {
    pub alpha: f64,
    pub diffusivity: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max_factor: Option<f64>,
    /// Absolute cap; wins over `t_max_factor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_moment: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub keep_samples: bool,
}

/// A validated configuration plus non-fatal remarks.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// key schema

#[derive(Clone, Copy)]
enum Shape {
    Leaf,
    Table(&'static [Field]),
    /// Table selected by its `kind` key.
    Tagged(&'static [(&'static str, &'static [Field])]),
}

#[derive(Clone, Copy)]
struct Field {
    key: &'static str,
    shape: Shape,
    required: bool,
}

const fn req(key: &'static str, shape: Shape) -> Field {
    Field {
        key,
        shape,
        required: true,
    }
}

const fn opt(key: &'static str, shape: Shape) -> Field {
    Field {
        key,
        shape,
        required: false,
    }
}

const LEAF: Shape = Shape::Leaf;

const POINT: &[Field] = &[req("point", LEAF)];
const BALLS: &[Field] = &[req("centers", LEAF), req("radius", LEAF)];

const DOMAIN: Shape = Shape::Tagged(&[
    (
        "torus",
        &[req("dim", LEAF), opt("diameter", LEAF), opt("side", LEAF)],
    ),
    ("free-space", &[req("dim", LEAF)]),
]);
const TARGET: Shape = Shape::Tagged(&[("full", &[]), ("point", POINT), ("balls", BALLS)]);
const START: Shape = Shape::Tagged(&[("center", &[]), ("point", POINT), ("balls", BALLS)]);
const DRIFT: Shape = Shape::Tagged(&[
    ("zero", &[]),
    ("constant", &[req("vector", LEAF)]),
    (
        "inward",
        &[
            req("center", LEAF),
            req("radius", LEAF),
            req("strength", LEAF),
        ],
    ),
]);
const DISPERSION: Shape = Shape::Tagged(&[
    ("identity", &[]),
    ("scalar", &[req("value", LEAF)]),
    ("diagonal", &[req("values", LEAF)]),
    (
        "bump",
        &[
            req("center", LEAF),
            req("width", LEAF),
            req("base", LEAF),
            req("peak", LEAF),
        ],
    ),
]);
const DYNAMICS: Shape = Shape::Table(&[
    req("diffusivity", LEAF),
    opt("drift", DRIFT),
    opt("dispersion", DISPERSION),
]);
const SUBDIFFUSION: Shape = Shape::Table(&[req("alpha", LEAF), req("diffusivity", LEAF)]);
const NUMERICS: Shape = Shape::Table(&[
    opt("dt", LEAF),
    opt("ds", LEAF),
    opt("dx", LEAF),
    opt("t_max_factor", LEAF),
    opt("t_max", LEAF),
    opt("precision", LEAF),
    opt("max_moment", LEAF),
]);
const OUTPUT: Shape = Shape::Table(&[opt("dir", LEAF), opt("keep_samples", LEAF)]);

const TOP: &[Field] = &[
    opt("scenario_id", LEAF),
    req("domain", DOMAIN),
    opt("target", TARGET),
    opt("start", START),
    opt("dynamics", DYNAMICS),
    opt("subdiffusion", SUBDIFFUSION),
    req("detection_radius", LEAF),
    req("n_list", LEAF),
    req("replicas", LEAF),
    req("seed", LEAF),
    opt("method", LEAF),
    opt("numerics", NUMERICS),
    opt("output", OUTPUT),
];

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn check_fields(
    table: &toml::Table,
    fields: &[Field],
    path: &str,
    extra: &[&str],
    problems: &mut Vec<String>,
) {
    for key in table.keys() {
        if !fields.iter().any(|f| f.key == key) && !extra.contains(&key.as_str()) {
            problems.push(format!("unknown key `{}`", join(path, key)));
        }
    }
    for f in fields {
        match table.get(f.key) {
            None if f.required => {
                problems.push(format!("missing required key `{}`", join(path, f.key)))
            }
            None => {}
            Some(v) => check_shape(v, f.shape, &join(path, f.key), problems),
        }
    }
}

fn check_shape(value: &toml::Value, shape: Shape, path: &str, problems: &mut Vec<String>) {
    match shape {
        Shape::Leaf => {}
        Shape::Table(fields) => match value.as_table() {
            Some(t) => check_fields(t, fields, path, &[], problems),
            None => problems.push(format!("`{path}` must be a table")),
        },
        Shape::Tagged(kinds) => {
            let Some(t) = value.as_table() else {
                problems.push(format!("`{path}` must be a table"));
                return;
            };
            let names: Vec<&str> = kinds.iter().map(|(k, _)| *k).collect();
            match t.get("kind").map(|k| k.as_str()) {
                None => problems.push(format!(
                    "missing required key `{path}.kind` (one of {})",
                    names.join(", ")
                )),
                Some(None) => problems.push(format!("`{path}.kind` must be a string")),
                Some(Some(kind)) => match kinds.iter().find(|(k, _)| *k == kind) {
                    Some((_, fields)) => check_fields(t, fields, path, &["kind"], problems),
                    None => problems.push(format!(
                        "`{path}.kind`: unknown kind `{kind}` (expected one of {})",
                        names.join(", ")
                    )),
                },
            }
        }
    }
}

/// Every unknown or missing key of a parsed document.
pub fn schema_problems(doc: &toml::Table) -> Vec<String> {
    let mut problems = Vec::new();
    check_fields(doc, TOP, "", &[], &mut problems);
    match (
        doc.contains_key("dynamics"),
        doc.contains_key("subdiffusion"),
    ) {
        (false, false) => {
            problems.push("missing required key `dynamics` (or `subdiffusion`)".into())
        }
        (true, true) => {
            problems.push("only one of `dynamics` and `subdiffusion` may be given".into())
        }
        _ => {}
    }
    problems
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<LoadedConfig, ConfigError> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigError::one(format!("not a valid TOML document: {e}"))
    })?;
    let problems = schema_problems(&doc);
    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }
    let config: ScenarioConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::one(e.to_string().trim().to_string()))?;
    validated(config)
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::one(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Semantic checks and warnings for a configuration built in code.
pub fn validated(config: ScenarioConfig) -> Result<LoadedConfig, ConfigError> {
    let mut problems = Vec::new();
    if config.n_list.is_empty() {
        problems.push("`n_list` must not be empty".into());
    }
    if config.n_list.contains(&0) {
        problems.push("`n_list` entries must be >= 1".into());
    }
    if config.replicas < 2 {
        problems.push(format!("`replicas` must be >= 2, got {}", config.replicas));
    }
    if config.numerics.max_moment.is_some_and(|m| m < 2) {
        problems.push("`numerics.max_moment` must be >= 2".into());
    }
    let scenario = match config.to_scenario::<f64>() {
        Ok(s) => Some(s),
        Err(e) => {
            problems.extend(e.problems);
            None
        }
    };
    let mut warnings = Vec::new();
    if let Some(sc) = scenario {
        match sc.prepare() {
            Ok(p) if p.geodesic().trivially_covered => warnings.push(format!(
                "the target lies within distance r = {} of the start set (L = 0); every cover time is 0",
                config.detection_radius
            )),
            Ok(_) => {}
            Err(e) => problems.push(e.to_string()),
        }
    }
    if problems.is_empty() {
        Ok(LoadedConfig { config, warnings })
    } else {
        Err(ConfigError { problems })
    }
}

fn vec_t<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn positive(key: &str, v: f64, problems: &mut Vec<String>) {
    if !(v > 0.0 && v.is_finite()) {
        problems.push(format!("`{key}` must be a positive number, got {v}"));
    }
}

impl ScenarioConfig {
    /// Label used in output tables.
    pub fn id(&self) -> String {
        self.scenario_id
            .clone()
            .unwrap_or_else(|| "scenario".into())
    }

    pub fn dim(&self) -> usize {
        match self.domain {
            DomainConfig::Torus { dim, .. } | DomainConfig::FreeSpace { dim } => dim,
        }
    }

    /// Build the core scenario in precision `T`.
    pub fn to_scenario<T: Real>(&self) -> Result<Scenario<T>, ConfigError> {
        let mut problems = Vec::new();
        let dim = self.dim();
        if dim == 0 {
            problems.push("`domain.dim` must be >= 1".into());
        }
        positive("detection_radius", self.detection_radius, &mut problems);

        let domain = match self.domain {
            DomainConfig::Torus {
                dim,
                diameter,
                side,
            } => {
                let l = match (diameter, side) {
                    (Some(l), None) => {
                        positive("domain.diameter", l, &mut problems);
                        Some(l)
                    }
                    (None, Some(s)) => {
                        positive("domain.side", s, &mut problems);
                        Some(s * (dim as f64).sqrt() / 2.0)
                    }
                    (None, None) => {
                        problems.push(
                            "missing required key `domain.diameter` (or `domain.side`)".into(),
                        );
                        None
                    }
                    (Some(_), Some(_)) => {
                        problems.push(
                            "only one of `domain.diameter` and `domain.side` may be given".into(),
                        );
                        None
                    }
                };
                l.filter(|_| dim > 0)
                    .and_then(|l| Domain::torus(dim, T::lit(l)).ok())
            }
            DomainConfig::FreeSpace { dim } => Domain::free_space(dim).ok(),
        };

        let point_ok = |key: &str, p: &[f64], problems: &mut Vec<String>| {
            if p.len() != dim {
                problems.push(format!(
                    "`{key}` has {} coordinates, domain has dimension {dim}",
                    p.len()
                ));
            }
        };
        let target = match &self.target {
            TargetConfig::Full => Target::FullDomain,
            TargetConfig::Point { point } => {
                point_ok("target.point", point, &mut problems);
                Target::SinglePoint(vec_t(point))
            }
            TargetConfig::Balls { centers, radius } => {
                if centers.is_empty() {
                    problems.push("`target.centers` must not be empty".into());
                }
                for c in centers {
                    point_ok("target.centers", c, &mut problems);
                }
                if !(*radius >= 0.0) {
                    problems.push(format!("`target.radius` must be >= 0, got {radius}"));
                }
                Target::BallUnion {
                    centers: centers.iter().map(|c| vec_t(c)).collect(),
                    radius: T::lit(*radius),
                }
            }
        };
        let start = match &self.start {
            StartConfig::Center => StartSet::Point(domain.as_ref().map_or_else(
                || vec![T::zero(); dim],
                |d| {
                    if d.is_periodic() {
                        d.center()
                    } else {
                        vec![T::zero(); dim]
                    }
                },
            )),
            StartConfig::Point { point } => {
                point_ok("start.point", point, &mut problems);
                StartSet::Point(vec_t(point))
            }
            StartConfig::Balls { centers, radius } => {
                if centers.is_empty() {
                    problems.push("`start.centers` must not be empty".into());
                }
                for c in centers {
                    point_ok("start.centers", c, &mut problems);
                }
                if !(*radius >= 0.0) {
                    problems.push(format!("`start.radius` must be >= 0, got {radius}"));
                }
                StartSet::BallUnion {
                    centers: centers.iter().map(|c| vec_t(c)).collect(),
                    radius: T::lit(*radius),
                }
            }
        };

        let motion = match (&self.dynamics, &self.subdiffusion) {
            (Some(d), None) => {
                positive("dynamics.diffusivity", d.diffusivity, &mut problems);
                let drift = match &d.drift {
                    DriftConfig::Zero => DriftField::Zero,
                    DriftConfig::Constant { vector } => {
                        point_ok("dynamics.drift.vector", vector, &mut problems);
                        DriftField::Constant(vec_t(vector))
                    }
                    DriftConfig::Inward {
                        center,
                        radius,
                        strength,
                    } => {
                        point_ok("dynamics.drift.center", center, &mut problems);
                        DriftField::InwardBeyond {
                            center: vec_t(center),
                            radius: T::lit(*radius),
                            strength: T::lit(*strength),
                        }
                    }
                };
                let dispersion = match &d.dispersion {
                    DispersionConfig::Identity => DispersionField::Identity,
                    DispersionConfig::Scalar { value } => DispersionField::Scalar(T::lit(*value)),
                    DispersionConfig::Diagonal { values } => {
                        point_ok("dynamics.dispersion.values", values, &mut problems);
                        DispersionField::Diagonal(vec_t(values))
                    }
                    DispersionConfig::Bump {
                        center,
                        width,
                        base,
                        peak,
                    } => {
                        point_ok("dynamics.dispersion.center", center, &mut problems);
                        positive("dynamics.dispersion.width", *width, &mut problems);
                        DispersionField::Bump {
                            center: vec_t(center),
                            width: T::lit(*width),
                            base: T::lit(*base),
                            peak: T::lit(*peak),
                        }
                    }
                };
                Some(Motion::Diffusive {
                    diffusivity: T::lit(d.diffusivity),
                    drift,
                    dispersion,
                })
            }
            (None, Some(s)) => {
                if !(s.alpha > 0.0 && s.alpha < 1.0) {
                    problems.push(format!(
                        "`subdiffusion.alpha` must lie in (0, 1), got {}",
                        s.alpha
                    ));
                }
                positive("subdiffusion.diffusivity", s.diffusivity, &mut problems);
                Some(Motion::Subdiffusive {
                    alpha: T::lit(s.alpha),
                    diffusivity: T::lit(s.diffusivity),
                })
            }
            (None, None) => {
                problems.push("missing required key `dynamics` (or `subdiffusion`)".into());
                None
            }
            (Some(_), Some(_)) => {
                problems.push("only one of `dynamics` and `subdiffusion` may be given".into());
                None
            }
        };

        let n = &self.numerics;
        for (key, v) in [
            ("numerics.dt", n.dt),
            ("numerics.ds", n.ds),
            ("numerics.dx", n.dx),
            ("numerics.t_max_factor", n.t_max_factor),
            ("numerics.t_max", n.t_max),
        ] {
            if let Some(v) = v {
                positive(key, v, &mut problems);
            }
        }
        if let Some(dx) = n.dx {
            if dx > self.detection_radius / 10.0 * (1.0 + 1e-9) {
                problems.push(format!(
                    "`numerics.dx` = {dx} exceeds detection_radius / 10 = {}",
                    self.detection_radius / 10.0
                ));
            }
        }

        let (Some(domain), Some(motion), true) = (domain, motion, problems.is_empty()) else {
            if problems.is_empty() {
                problems.push("invalid `domain`".into());
            }
            return Err(ConfigError { problems });
        };
        if let Err(e) = target.validate(&domain) {
            problems.push(format!("`target`: {e}"));
        }
        if let Err(e) = start.validate(&domain) {
            problems.push(format!("`start`: {e}"));
        }
        if !problems.is_empty() {
            return Err(ConfigError { problems });
        }
        let time_cap = match (n.t_max, n.t_max_factor) {
            (Some(t), _) => TimeCap::Absolute(T::lit(t)),
            (None, Some(f)) => TimeCap::Factor(T::lit(f)),
            (None, None) => TimeCap::Factor(T::lit(covertime::scenario::DEFAULT_T_MAX_FACTOR)),
        };
        Ok(
            Scenario::new(domain, target, start, motion, T::lit(self.detection_radius))
                .with_method(self.method)
                .with_steps(StepOverrides {
                    dt: n.dt.map(T::lit),
                    ds: n.ds.map(T::lit),
                    dx: n.dx.map(T::lit),
                })
                .with_time_cap(time_cap),
        )
    }
}
