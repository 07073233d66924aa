//! Parallel runs over many scenarios.
//!
//! A sweep member is either a scenario file or a generator file:
//!
//! ```toml
//! base = "power_c1.toml"
//! [vary]
//! "kernel.right.q" = [2.0, 3.0, 4.0]
//! ```
//!
//! which expands to one member per point of the cartesian product of the
//! `vary` lists.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Map};
use thiserror::Error;

use crate::artifacts::{csv_bytes, num, sha256, Artifacts};
use crate::config::{ConfigError, Loaded};
use crate::run::{run_scenario, Command, Status};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("a sweep needs at least one scenario")]
    Empty,
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A member that parsed, or the reason it did not.
#[derive(Debug)]
pub struct Member {
    pub name: String,
    pub scenario: Result<Loaded, ConfigError>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub member: String,
    pub status: String,
    pub front_slope: Option<f64>,
    pub verdicts: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub pass: bool,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or("member".into(), |s| s.to_string_lossy().into_owned())
}

/// Sets a dotted key in a TOML table, creating tables on the way.
fn set_path(root: &mut toml::Value, path: &str, v: toml::Value) -> Result<(), ConfigError> {
    let bad = || ConfigError::Parse(format!("cannot set `{path}`: a parent is not a table"));
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let table = cur.as_table_mut().ok_or_else(bad)?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), v);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(bad())
}

fn label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => num(*f),
        other => other.to_string(),
    }
}

/// Expands the files in `paths` into members.
pub fn members(paths: &[impl AsRef<Path>]) -> Result<Vec<Member>, SweepError> {
    if paths.is_empty() {
        return Err(SweepError::Empty);
    }
    let mut out = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p)?;
        let value: toml::Value = match toml::from_str(&text) {
            Ok(v) => v,
            Err(e) => {
                out.push(Member {
                    name: stem(p),
                    scenario: Err(ConfigError::Parse(e.to_string())),
                });
                continue;
            }
        };
        match value.get("base").and_then(|b| b.as_str()) {
            Some(base) => out.extend(expand(p, base, &value)?),
            None => {
                let scenario = Loaded::parse(&text);
                let name = scenario.as_ref().map_or_else(|_| stem(p), |l| l.scenario.name.clone());
                out.push(Member { name, scenario });
            }
        }
    }
    if out.is_empty() {
        return Err(SweepError::Empty);
    }
    Ok(out)
}

fn expand(path: &Path, base: &str, gen: &toml::Value) -> Result<Vec<Member>, SweepError> {
    let base_path = path.parent().unwrap_or(Path::new(".")).join(base);
    let config = |source| SweepError::Config {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(&base_path)?;
    let base_value: toml::Value = toml::from_str(&text).map_err(|e| config(ConfigError::Parse(e.to_string())))?;
    let base_name = base_value
        .get("name")
        .and_then(|n| n.as_str())
        .map_or_else(|| stem(&base_path), str::to_string);
    let vary: Vec<(String, Vec<toml::Value>)> = match gen.get("vary").and_then(|v| v.as_table()) {
        Some(t) => t
            .iter()
            .map(|(k, v)| {
                v.as_array()
                    .map(|a| (k.clone(), a.clone()))
                    .ok_or_else(|| config(ConfigError::Parse(format!("vary.{k} must be an array"))))
            })
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let mut combos: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (key, values) in &vary {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for combo in combos {
        let mut value = base_value.clone();
        let mut name = base_name.clone();
        for (key, v) in &combo {
            let leaf = key.rsplit('.').next().unwrap_or(key);
            name.push_str(&format!("-{leaf}{}", label(v)));
        }
        let scenario = combo
            .iter()
            .try_for_each(|(key, v)| set_path(&mut value, key, v.clone()))
            .and_then(|_| set_path(&mut value, "name", toml::Value::String(name.clone())))
            .and_then(|_| toml::to_string(&value).map_err(|e| ConfigError::Parse(e.to_string())))
            .and_then(|src| Loaded::parse(&src));
        out.push(Member { name, scenario });
    }
    Ok(out)
}

/// Runs every member with `simulate` into `out/<member>` and writes the
/// aggregated `summary.csv`, `summary.json` and `manifest.json`.
pub fn run_sweep(members: Vec<Member>, out: &Path, seed: Option<u64>) -> Result<SweepReport, SweepError> {
    if members.is_empty() {
        return Err(SweepError::Empty);
    }
    let mut seen = BTreeMap::new();
    for m in &members {
        *seen.entry(m.name.clone()).or_insert(0usize) += 1;
    }
    let rows: Vec<SweepRow> = members
        .into_par_iter()
        .map(|m| {
            let row = |status: &str, slope, verdicts: String, detail: String| SweepRow {
                member: m.name.clone(),
                status: status.into(),
                front_slope: slope,
                verdicts,
                detail,
            };
            if seen[&m.name] > 1 {
                return row("invalid", None, String::new(), "duplicate member name".into());
            }
            match &m.scenario {
                Err(e) => row("invalid", None, String::new(), e.to_string()),
                Ok(loaded) => match run_scenario(loaded, Command::Simulate, &out.join(&m.name), seed) {
                    Ok(o) => row(
                        o.status.name(),
                        o.front_slope,
                        o.verdicts
                            .iter()
                            .map(|(k, v)| format!("{k}={v}"))
                            .collect::<Vec<_>>()
                            .join(";"),
                        o.errors
                            .iter()
                            .map(|(k, v)| format!("{k}: {v}"))
                            .collect::<Vec<_>>()
                            .join("; "),
                    ),
                    Err(e) => row(Status::Error.name(), None, String::new(), e.to_string()),
                },
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.status == "pass" || r.status == "undetermined");

    let mut art = Artifacts::create(out)?;
    let csv_rows = rows.iter().map(|r| {
        [
            r.member.clone(),
            r.status.clone(),
            r.front_slope.map_or(String::new(), num),
            r.verdicts.clone(),
            r.detail.clone(),
        ]
    });
    art.write(
        "summary.csv",
        &csv_bytes(&["member", "status", "front_slope", "verdicts", "detail"], csv_rows)?,
    )?;
    let members_json: Vec<_> = rows
        .iter()
        .map(|r| json!({"member": r.member, "status": r.status, "front_slope": r.front_slope, "verdicts": r.verdicts}))
        .collect();
    let mut summary =
        serde_json::to_string_pretty(&json!({"pass": pass, "members": members_json})).map_err(io::Error::other)?;
    summary.push('\n');
    art.write("summary.json", summary.as_bytes())?;

    let mut body = Map::new();
    body.insert("command".into(), json!("sweep"));
    body.insert("pass".into(), json!(pass));
    let mut member_manifests = BTreeMap::new();
    for r in &rows {
        if let Ok(bytes) = std::fs::read(out.join(&r.member).join("manifest.json")) {
            member_manifests.insert(format!("{}/manifest.json", r.member), sha256(&bytes));
        }
    }
    body.insert("member_manifests".into(), json!(member_manifests));
    art.finish(body)?;
    Ok(SweepReport { rows, pass })
}
