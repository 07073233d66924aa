//! Scenario files: TOML tables `[model]`, `[kernel]`, `[grid]`, `[initial]`,
//! `[run]` plus one optional table per diagnostic.
//!
//! Units: positions and lengths are in the spatial unit of the kernel, times
//! and rates in the time unit of `kappa`; densities share the unit of `theta`.

use std::path::Path;

use accelfront::convolution::Extension;
use accelfront::dynamics::{Boundary, EvolveOptions};
use accelfront::tails::{LeftTail, Side};
use accelfront::{Error, Field, Grid, GridFunction, Kernel, Model, Reaction, TailFamily, TailProfile, TwoSidedTail};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{0}")]
    Parse(String),
    #[error("this command needs a [{0}] table")]
    Missing(String),
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }

    /// Field path of a validation error.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Maps a library error raised while building `table` to a field error.
fn at(table: &str) -> impl Fn(Error) -> ConfigError + '_ {
    move |e| match e {
        Error::InvalidParameter { name, reason } => ConfigError::invalid(join(table, name), reason),
        other => ConfigError::invalid(table, other.to_string()),
    }
}

fn join(table: &str, key: &str) -> String {
    if table.is_empty() {
        key.to_string()
    } else {
        format!("{table}.{key}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagnostic {
    Frontlaw,
    Kesten,
    Subsolution,
    Sandwich,
    Envelope,
    Comparison,
    Tails,
    Assumptions,
}

impl Diagnostic {
    pub fn name(self) -> &'static str {
        match self {
            Diagnostic::Frontlaw => "frontlaw",
            Diagnostic::Kesten => "kesten",
            Diagnostic::Subsolution => "subsolution",
            Diagnostic::Sandwich => "sandwich",
            Diagnostic::Envelope => "envelope",
            Diagnostic::Comparison => "comparison",
            Diagnostic::Tails => "tails",
            Diagnostic::Assumptions => "assumptions",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    pub seed: Option<u64>,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub initial: Option<InitialSpec>,
    pub run: Option<RunSpec>,
    pub frontlaw: Option<FrontLawSpec>,
    pub kesten: Option<KestenSpec>,
    pub subsolution: Option<SubsolutionSpec>,
    pub sandwich: Option<SandwichSpec>,
    pub envelope: Option<EnvelopeSpec>,
    pub comparison: Option<ComparisonSpec>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionKind {
    #[default]
    Logistic,
    Quadratic,
    Nonlocal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kappa: f64,
    pub m: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub reaction: ReactionKind,
    /// Exponent of the nonlocal reaction.
    pub exponent: Option<f64>,
    /// Competition kernel of the nonlocal reaction.
    pub competition: Option<KernelSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    Tails,
    Gaussian,
    Uniform,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub sigma: Option<f64>,
    pub half_width: Option<f64>,
    pub right: Option<TailSpec>,
    /// Defaults to the mirror image of `right`.
    pub left: Option<TailSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Power,
    LogPowerExp,
    StretchedExp,
    XOverLog,
    Exponential,
    /// Left side only: the function stays above `level`.
    BoundedBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SideName {
    Right,
    Left,
}

/// One tail, e.g. `family = "power", q = 3.0, scale = 1.0, rho = 1.0, side = "right"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSpec {
    pub family: FamilyName,
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<f64>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub scale: Option<f64>,
    pub shift: Option<f64>,
    pub rho: Option<f64>,
    pub side: Option<SideName>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "N")]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    Indicator,
    Step,
    TailProfile,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(rename = "type")]
    pub kind: InitialKind,
    /// Height of the indicator, step or cap; defaults to `theta`.
    pub level: Option<f64>,
    pub center: Option<f64>,
    pub half_width: Option<f64>,
    pub position: Option<f64>,
    pub amplitude: Option<f64>,
    pub right: Option<TailSpec>,
    pub left: Option<TailSpec>,
    pub x: Option<Vec<f64>>,
    pub u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dump {
    #[default]
    All,
    Last,
    None,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub snapshot_times: Option<Vec<f64>>,
    pub snapshot_every: Option<f64>,
    pub range_tolerance: Option<f64>,
    #[serde(default = "yes")]
    pub monitor: bool,
    #[serde(default)]
    pub dump: Dump,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontLawSpec {
    pub times: Option<Vec<f64>>,
    pub right: Option<TailSpec>,
    pub left: Option<TailSpec>,
    #[serde(default = "law_tolerance")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KestenKind {
    #[default]
    Density,
    Distribution,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KestenSpec {
    #[serde(default)]
    pub kind: KestenKind,
    pub density: TailSpec,
    pub n_max: Option<usize>,
    pub delta: Option<f64>,
    pub x_lo: Option<f64>,
    pub window_fraction: Option<f64>,
    pub fail_constant: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsolutionSpec {
    pub eps: f64,
    /// As a fraction of `beta`.
    pub delta: f64,
    /// Plateau height; defaults to `lambda_fraction * λ₀`.
    pub lambda: Option<f64>,
    #[serde(default = "half")]
    pub lambda_fraction: f64,
    pub times: Vec<f64>,
    pub right: Option<TailSpec>,
    pub left: Option<TailSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichSpec {
    pub eps: f64,
    /// Tracked level; defaults to `theta / 2`.
    pub level: Option<f64>,
    pub right: Option<TailSpec>,
    pub left: Option<TailSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub delta: f64,
    pub x_min: f64,
    pub times: Vec<f64>,
    pub right: TailSpec,
    pub left: Option<TailSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    /// The lower solution starts from `factor * u0`.
    pub factor: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn law_tolerance() -> f64 {
    1e-8
}

/// A parsed scenario together with its source text.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub source: String,
    pub value: toml::Value,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&source)
    }

    /// Parses and validates; validation errors carry the offending line.
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let parse = |e: toml::de::Error| ConfigError::Parse(e.to_string());
        let value: toml::Value = toml::from_str(source).map_err(parse)?;
        let scenario: Scenario = toml::from_str(source).map_err(parse)?;
        let loaded = Self {
            scenario,
            source: source.to_string(),
            value,
        };
        loaded.validate().map_err(|e| loaded.locate(e))?;
        Ok(loaded)
    }

    fn locate(&self, err: ConfigError) -> ConfigError {
        match err {
            ConfigError::Invalid { field, message, .. } => {
                let line = find_line(&self.source, &field);
                ConfigError::Invalid { field, line, message }
            }
            other => other,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.name.is_empty() || s.name.contains(['/', '\\']) {
            return Err(ConfigError::invalid("name", "must be a non-empty plain file name"));
        }
        let model = build_model(s)?;
        if let Some(init) = &s.initial {
            build_initial(s, init, &model)?;
        }
        if let Some(run) = &s.run {
            evolve_options(run)?;
        }
        for d in &s.diagnostics {
            let present = match d {
                Diagnostic::Frontlaw | Diagnostic::Tails | Diagnostic::Assumptions => true,
                Diagnostic::Kesten => s.kesten.is_some(),
                Diagnostic::Subsolution => s.subsolution.is_some(),
                Diagnostic::Sandwich => s.sandwich.is_some(),
                Diagnostic::Envelope => s.envelope.is_some(),
                Diagnostic::Comparison => s.comparison.is_some(),
            };
            if !present {
                return Err(ConfigError::invalid(
                    "diagnostics",
                    format!("`{}` needs a [{}] table", d.name(), d.name()),
                ));
            }
            if matches!(d, Diagnostic::Sandwich | Diagnostic::Envelope | Diagnostic::Comparison)
                && (s.initial.is_none() || s.run.is_none())
            {
                return Err(ConfigError::invalid(
                    "diagnostics",
                    format!("`{}` needs [initial] and [run]", d.name()),
                ));
            }
        }
        if let Some(k) = &s.kesten {
            kesten_density(&k.density, grid(s)?)?;
        }
        if let Some(sub) = &s.subsolution {
            if !(sub.delta > 0.0) {
                return Err(ConfigError::invalid("subsolution.delta", "must be positive"));
            }
            check_times("subsolution.times", &sub.times)?;
        }
        if let Some(c) = &s.comparison {
            if !(c.factor > 0.0 && c.factor <= 1.0) {
                return Err(ConfigError::invalid(
                    "comparison.factor",
                    format!("needs 0 < factor <= 1, got {}", c.factor),
                ));
            }
        }
        if let Some(e) = &s.envelope {
            check_times("envelope.times", &e.times)?;
            two_sided("envelope", Some(&e.right), e.left.as_ref())?;
        }
        if let Some(f) = &s.frontlaw {
            if let Some(t) = &f.times {
                check_times("frontlaw.times", t)?;
            }
        }
        Ok(())
    }
}

/// Line of `field` (`table.key` or `table`) in a TOML source.
fn find_line(source: &str, field: &str) -> Option<usize> {
    let (table, key) = match field.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", field),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim_matches(['[', ']']).trim().to_string();
            if current == field {
                return Some(i + 1);
            }
            if current == table {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

fn check_times(field: &str, times: &[f64]) -> Result<(), ConfigError> {
    if times.is_empty() {
        return Err(ConfigError::invalid(field, "needs at least one time"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::invalid(
            field,
            "times must be non-negative and strictly increasing",
        ));
    }
    Ok(())
}

fn need(table: &str, key: &str, v: Option<f64>) -> Result<f64, ConfigError> {
    v.ok_or_else(|| ConfigError::invalid(join(table, key), "is required here"))
}

fn family(table: &str, spec: &TailSpec) -> Result<TailFamily, ConfigError> {
    let mu = spec.mu.unwrap_or(0.0);
    let nu = spec.nu.unwrap_or(0.0);
    Ok(match spec.family {
        FamilyName::Power => TailFamily::Power {
            q: need(table, "q", spec.q)?,
            mu,
        },
        FamilyName::LogPowerExp => TailFamily::LogPowerExp {
            p: need(table, "p", spec.p)?,
            q: need(table, "q", spec.q)?,
            mu,
            nu,
        },
        FamilyName::StretchedExp => TailFamily::StretchedExp {
            alpha: need(table, "alpha", spec.alpha)?,
            mu,
            nu,
        },
        FamilyName::XOverLog => TailFamily::XOverLog {
            q: need(table, "q", spec.q)?,
            mu,
            nu,
        },
        FamilyName::Exponential => TailFamily::exponential(need(table, "k", spec.k)?),
        FamilyName::BoundedBelow => {
            return Err(ConfigError::invalid(
                join(table, "family"),
                "bounded-below is only allowed for a left side",
            ))
        }
    })
}

/// Builds a profile; `side` is the side implied by where the table sits.
pub fn tail_profile(table: &str, spec: &TailSpec, side: Side) -> Result<TailProfile, ConfigError> {
    let declared = spec.side.map(|s| match s {
        SideName::Right => Side::Right,
        SideName::Left => Side::Left,
    });
    if declared.is_some_and(|d| d != side) {
        return Err(ConfigError::invalid(
            join(table, "side"),
            "does not match the table it sits in",
        ));
    }
    let map = at(table);
    let mut p = TailProfile::new(family(table, spec)?, side).map_err(&map)?;
    if let Some(shift) = spec.shift {
        p = p.with_shift(shift).map_err(&map)?;
    }
    if let Some(scale) = spec.scale {
        p = p.with_scale(scale).map_err(&map)?;
    }
    if let Some(rho) = spec.rho {
        p = p.with_rho(rho).map_err(&map)?;
    }
    Ok(p)
}

/// `right` with `left` (or its mirror image when absent).
pub fn two_sided(table: &str, right: Option<&TailSpec>, left: Option<&TailSpec>) -> Result<TwoSidedTail, ConfigError> {
    let rt = join(table, "right");
    let right = right.ok_or_else(|| ConfigError::invalid(&rt, "a right tail is required"))?;
    let r = tail_profile(&rt, right, Side::Right)?;
    let lt = join(table, "left");
    let left = match left {
        None => LeftTail::Tail(r.reflected()),
        Some(l) if l.family == FamilyName::BoundedBelow => LeftTail::BoundedBelow(need(&lt, "level", l.level)?),
        Some(l) => LeftTail::Tail(tail_profile(&lt, l, Side::Left)?),
    };
    TwoSidedTail::new(r, left).map_err(at(table))
}

pub fn grid(s: &Scenario) -> Result<Grid, ConfigError> {
    Grid::new(s.grid.half_width, s.grid.points).map_err(at("grid"))
}

pub fn kernel(table: &str, spec: &KernelSpec, grid: Grid) -> Result<Kernel, ConfigError> {
    let map = at(table);
    match spec.shape {
        KernelShape::Gaussian => Kernel::gaussian(grid, need(table, "sigma", spec.sigma)?).map_err(map),
        KernelShape::Uniform => Kernel::uniform(grid, need(table, "half_width", spec.half_width)?).map_err(map),
        KernelShape::Tails => {
            if spec.left.as_ref().is_some_and(|l| l.family == FamilyName::BoundedBelow) {
                return Err(ConfigError::invalid(
                    join(table, "left.family"),
                    "a kernel must be integrable on both sides",
                ));
            }
            let tails = two_sided(table, spec.right.as_ref(), spec.left.as_ref())?;
            Kernel::from_tails(grid, tails).map_err(map)
        }
    }
}

/// Tails of the dispersal kernel, when it was built from tails.
pub fn kernel_tails(s: &Scenario) -> Result<TwoSidedTail, ConfigError> {
    match s.kernel.shape {
        KernelShape::Tails => two_sided("kernel", s.kernel.right.as_ref(), s.kernel.left.as_ref()),
        _ => Err(ConfigError::invalid(
            "kernel.shape",
            "this diagnostic needs a kernel built from tails or its own tail tables",
        )),
    }
}

/// `right`/`left` override tables, else the kernel tails.
pub fn tails_or_kernel(
    s: &Scenario,
    table: &str,
    right: Option<&TailSpec>,
    left: Option<&TailSpec>,
) -> Result<TwoSidedTail, ConfigError> {
    if right.is_some() {
        two_sided(table, right, left)
    } else {
        kernel_tails(s)
    }
}

pub fn build_model(s: &Scenario) -> Result<Model, ConfigError> {
    let g = grid(s)?;
    let a = kernel("kernel", &s.kernel, g)?;
    let reaction = match s.model.reaction {
        ReactionKind::Logistic => Reaction::logistic(),
        ReactionKind::Quadratic => Reaction::quadratic(),
        ReactionKind::Nonlocal => {
            let spec = s.model.competition.as_ref().ok_or_else(|| {
                ConfigError::invalid("model.competition", "the nonlocal reaction needs a competition kernel")
            })?;
            let comp = kernel("model.competition", spec, g)?;
            Reaction::nonlocal(comp, need("model", "exponent", s.model.exponent)?).map_err(at("model"))?
        }
    };
    Model::new(s.model.kappa, s.model.m, s.model.theta, a, reaction).map_err(at("model"))
}

fn scaled(b: &Boundary<f64>, factor: f64) -> Boundary<f64> {
    match b {
        Boundary::Zero => Boundary::Zero,
        Boundary::Constant(c) => Boundary::Constant(c * factor),
        Boundary::Tail { profile, amplitude } => Boundary::tail(profile.clone(), amplitude * factor),
    }
}

/// `factor * u` with the boundaries scaled alike.
pub fn scale_field(u: &Field, factor: f64) -> Result<Field, Error> {
    Field::new(
        *u.grid(),
        u.values().iter().map(|v| v * factor).collect(),
        scaled(u.left(), factor),
        scaled(u.right(), factor),
    )
}

pub fn build_initial(s: &Scenario, spec: &InitialSpec, model: &Model) -> Result<Field, ConfigError> {
    let g = *model.grid();
    let theta = model.theta();
    let level = spec.level.unwrap_or(theta);
    if !(level > 0.0 && level <= theta) {
        return Err(ConfigError::invalid(
            "initial.level",
            format!("needs 0 < level <= theta, got {level}"),
        ));
    }
    let map = at("initial");
    let field = match spec.kind {
        InitialKind::Indicator => {
            let c = spec.center.unwrap_or(0.0);
            let w = need("initial", "half_width", spec.half_width)?;
            if !(w > 0.0) {
                return Err(ConfigError::invalid("initial.half_width", "must be positive"));
            }
            Field::from_fn(g, |x| if (x - c).abs() <= w { level } else { 0.0 }).map_err(map)?
        }
        InitialKind::Step => {
            let p = spec.position.unwrap_or(0.0);
            Field::from_fn(g, |x| if x <= p { level } else { 0.0 })
                .and_then(|f| f.with_left(Boundary::Constant(level)))
                .map_err(map)?
        }
        InitialKind::TailProfile => {
            let amp = spec.amplitude.unwrap_or(1.0);
            if !(amp > 0.0) {
                return Err(ConfigError::invalid("initial.amplitude", "must be positive"));
            }
            let tails = tails_or_kernel(s, "initial", spec.right.as_ref(), spec.left.as_ref())?;
            let t = tails.clone();
            let f = Field::from_fn(g, move |x| t.eval_log(x).map_or(0.0, |lb| (amp * lb.exp()).min(level)))
                .map_err(&map)?;
            let left = match &tails.left {
                LeftTail::Tail(p) => Boundary::tail(p.clone(), amp),
                LeftTail::BoundedBelow(_) => Boundary::Constant(f.values()[0]),
            };
            f.with_left(left)
                .and_then(|f| f.with_right(Boundary::tail(tails.right.clone(), amp)))
                .map_err(map)?
        }
        InitialKind::Custom => {
            let xs = spec
                .x
                .as_ref()
                .ok_or_else(|| ConfigError::invalid("initial.x", "is required here"))?;
            let us = spec
                .u
                .as_ref()
                .ok_or_else(|| ConfigError::invalid("initial.u", "is required here"))?;
            if xs.len() != us.len() || xs.len() < 2 {
                return Err(ConfigError::invalid(
                    "initial.u",
                    "needs as many samples as initial.x, at least two",
                ));
            }
            if xs.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::invalid("initial.x", "must be strictly increasing"));
            }
            Field::from_fn(g, |x| interpolate(xs, us, x)).map_err(map)?
        }
    };
    if field.min() < 0.0 || field.max() > theta {
        return Err(ConfigError::invalid(
            "initial",
            format!("initial data must lie in [0, theta = {theta}]"),
        ));
    }
    Ok(field)
}

/// Piecewise-linear interpolation, zero outside the samples.
fn interpolate(xs: &[f64], us: &[f64], x: f64) -> f64 {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    us[i - 1] + w * (us[i] - us[i - 1])
}

pub fn snapshot_times(run: &RunSpec) -> Result<Vec<f64>, ConfigError> {
    if !(run.horizon > 0.0 && run.horizon.is_finite()) {
        return Err(ConfigError::invalid(
            "run.T",
            format!("must be positive, got {}", run.horizon),
        ));
    }
    let times = match (&run.snapshot_times, run.snapshot_every) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::invalid(
                "run.snapshot_every",
                "give snapshot_times or snapshot_every, not both",
            ))
        }
        (Some(t), None) => t.clone(),
        (None, Some(every)) => {
            if !(every > 0.0) {
                return Err(ConfigError::invalid("run.snapshot_every", "must be positive"));
            }
            let n = (run.horizon / every * (1.0 + 1e-12)).floor() as usize;
            (1..=n).map(|i| i as f64 * every).collect()
        }
        (None, None) => vec![run.horizon],
    };
    check_times("run.snapshot_times", &times)?;
    if times.last().is_some_and(|&t| t > run.horizon * (1.0 + 1e-12)) {
        return Err(ConfigError::invalid("run.snapshot_times", "times must not exceed T"));
    }
    Ok(times)
}

pub fn evolve_options(run: &RunSpec) -> Result<EvolveOptions<f64>, ConfigError> {
    if !(run.dt > 0.0) {
        return Err(ConfigError::invalid(
            "run.dt",
            format!("must be positive, got {}", run.dt),
        ));
    }
    let mut opts = EvolveOptions::new(run.dt, snapshot_times(run)?);
    opts.monitor = run.monitor;
    if let Some(tol) = run.range_tolerance {
        if !(tol > 0.0) {
            return Err(ConfigError::invalid("run.range_tolerance", "must be positive"));
        }
        opts.range_tolerance = Some(tol);
    }
    Ok(opts)
}

/// Density of a Kesten table: the tail on `x >= 0` (or past its domain
/// start), zero before.
pub fn kesten_density(spec: &TailSpec, grid: Grid) -> Result<GridFunction, ConfigError> {
    let p = tail_profile("kesten.density", spec, Side::Right)?;
    let start = p.domain_start().max(0.0);
    let q = p.clone();
    GridFunction::cell_average(grid, move |x| if x < start { 0.0 } else { q.eval(x).unwrap_or(0.0) })
        .and_then(|f| f.with_right_ext(Extension::tail(p, 1.0)))
        .map_err(at("kesten.density"))
}
