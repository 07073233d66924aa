use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use accelfront::analysis::{
    comparison_test, fit_log_slope, lambda_zero, sandwich_check, verify_subsolution, verify_upper_envelope, FrontTrace,
    SubSolution,
};
use accelfront::convolution::{kesten_density_check, kesten_distribution_check, KestenOptions, KestenReport};
use accelfront::dynamics::{check_assumptions, evolve, StopReason};
use accelfront::frontlaw::closed_form_front;
use accelfront::tails::{classify_tail, SampleOptions};
use accelfront::{Field, FrontLaw, Model, Trajectory, Verdict};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::artifacts::{csv_bytes, num, sha256, Artifacts};
use crate::config::{self, ConfigError, Diagnostic, Dump, KestenKind, Loaded, Scenario};

/// Snapshots with more nodes than this are written as one binary dump.
pub const BINARY_THRESHOLD: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Frontlaw,
    Kesten,
    Subsol,
    Sandwich,
    CheckAssumptions,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Frontlaw => "frontlaw",
            Command::Kesten => "kesten",
            Command::Subsol => "subsol",
            Command::Sandwich => "sandwich",
            Command::CheckAssumptions => "check-assumptions",
        }
    }

    fn diagnostics(self, s: &Scenario) -> Vec<Diagnostic> {
        let mut d = match self {
            Command::Simulate => s.diagnostics.clone(),
            Command::Frontlaw => vec![Diagnostic::Frontlaw],
            Command::Kesten => vec![Diagnostic::Kesten],
            Command::Subsol => vec![Diagnostic::Subsolution],
            Command::Sandwich => vec![Diagnostic::Sandwich],
            Command::CheckAssumptions => vec![Diagnostic::Assumptions],
        };
        d.sort();
        d.dedup();
        d
    }

    /// Tables this command needs beyond the always-present ones.
    pub fn check(self, s: &Scenario) -> Result<(), ConfigError> {
        let missing = |table: &str| Err(ConfigError::Missing(table.to_string()));
        match self {
            Command::Kesten if s.kesten.is_none() => missing("kesten"),
            Command::Subsol if s.subsolution.is_none() => missing("subsolution"),
            Command::Sandwich if s.sandwich.is_none() => missing("sandwich"),
            Command::Sandwich if s.initial.is_none() => missing("initial"),
            Command::Sandwich if s.run.is_none() => missing("run"),
            _ => Ok(()),
        }
    }

    fn evolves(self, s: &Scenario) -> bool {
        match self {
            Command::Simulate => s.initial.is_some() && s.run.is_some(),
            Command::Sandwich => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    /// No failure, but at least one verdict could not be decided.
    Undetermined,
    Fail,
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Undetermined => "undetermined",
            Status::Fail => "fail",
            Status::Error => "error",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Status::Fail | Status::Error)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: String,
    pub status: Status,
    pub verdicts: BTreeMap<String, Verdict>,
    pub errors: BTreeMap<String, String>,
    /// Late log-slope of the right front, when a simulation ran.
    pub front_slope: Option<f64>,
}

struct Section {
    verdict: Verdict,
    files: Vec<(String, Vec<u8>)>,
    details: Value,
}

type SectionResult = Result<Section, String>;

fn fail(e: impl ToString) -> String {
    e.to_string()
}

fn level_of(s: &Scenario) -> f64 {
    s.sandwich.as_ref().and_then(|w| w.level).unwrap_or(s.model.theta / 2.0)
}

/// Runs `cmd` on a validated scenario and writes its artifacts under `out`.
pub fn run_scenario(loaded: &Loaded, cmd: Command, out: &Path, seed: Option<u64>) -> io::Result<Outcome> {
    let s = &loaded.scenario;
    let seed = seed.or(s.seed).unwrap_or(0);
    let mut art = Artifacts::create(out)?;
    let mut verdicts = BTreeMap::new();
    let mut errors = BTreeMap::new();
    let mut details = Map::new();
    let mut front_slope = None;

    let model = config::build_model(s).map_err(io::Error::other)?;
    let mut u0 = None;
    let mut trajectory = None;
    if cmd.evolves(s) {
        match simulate(s, &model) {
            Ok((init, traj)) => {
                write_trajectory(&mut art, s, &traj)?;
                let (slope, info) = trajectory_details(&traj, level_of(s));
                front_slope = slope;
                details.insert("simulation".into(), info);
                u0 = Some(init);
                trajectory = Some(traj);
            }
            Err(e) => {
                errors.insert("simulation".into(), e);
            }
        }
    }

    let diags = cmd.diagnostics(s);
    let results: Vec<(Diagnostic, SectionResult)> = diags
        .par_iter()
        .map(|&d| {
            let r = match d {
                Diagnostic::Frontlaw => frontlaw(s, &model),
                Diagnostic::Kesten => kesten(s),
                Diagnostic::Subsolution => subsolution(s, &model, seed),
                Diagnostic::Sandwich => trajectory
                    .as_ref()
                    .ok_or_else(|| "no trajectory".to_string())
                    .and_then(|t| sandwich(s, &model, t)),
                Diagnostic::Envelope => u0
                    .as_ref()
                    .ok_or_else(|| "no initial data".to_string())
                    .and_then(|u| envelope(s, &model, u)),
                Diagnostic::Comparison => u0
                    .as_ref()
                    .ok_or_else(|| "no initial data".to_string())
                    .and_then(|u| comparison(s, &model, u)),
                Diagnostic::Tails => tails(s),
                Diagnostic::Assumptions => assumptions(&model, seed),
            };
            (d, r)
        })
        .collect();
    for (d, r) in results {
        match r {
            Ok(sec) => {
                for (name, bytes) in &sec.files {
                    art.write(name, bytes)?;
                }
                verdicts.insert(d.name().to_string(), sec.verdict);
                details.insert(d.name().into(), sec.details);
            }
            Err(e) => {
                errors.insert(d.name().to_string(), e);
            }
        }
    }

    let status = if !errors.is_empty() {
        Status::Error
    } else if verdicts.values().any(|v| *v == Verdict::No) {
        Status::Fail
    } else if verdicts.values().any(|v| *v == Verdict::Undetermined) {
        Status::Undetermined
    } else {
        Status::Pass
    };

    let mut body = Map::new();
    body.insert("scenario".into(), json!(s.name));
    body.insert("command".into(), json!(cmd.name()));
    body.insert(
        "versions".into(),
        json!({"accelfront": accelfront::VERSION, "accelfront-cli": env!("CARGO_PKG_VERSION")}),
    );
    body.insert("seed".into(), json!(seed));
    body.insert("config_sha256".into(), json!(sha256(loaded.source.as_bytes())));
    body.insert(
        "config".into(),
        serde_json::to_value(&loaded.value).map_err(io::Error::other)?,
    );
    body.insert("status".into(), json!(status.name()));
    body.insert(
        "verdicts".into(),
        json!(verdicts
            .iter()
            .map(|(k, v)| (k.clone(), v.to_string()))
            .collect::<BTreeMap<_, _>>()),
    );
    body.insert("errors".into(), json!(errors));
    body.insert("details".into(), Value::Object(details));
    art.finish(body)?;

    Ok(Outcome {
        name: s.name.clone(),
        status,
        verdicts,
        errors,
        front_slope,
    })
}

fn simulate(s: &Scenario, model: &Model) -> Result<(Field, Trajectory), String> {
    let init = s.initial.as_ref().ok_or("the scenario has no [initial] table")?;
    let run = s.run.as_ref().ok_or("the scenario has no [run] table")?;
    let u0 = config::build_initial(s, init, model).map_err(fail)?;
    let opts = config::evolve_options(run).map_err(fail)?;
    let traj = evolve(model, &u0, &opts).map_err(fail)?;
    Ok((u0, traj))
}

fn stop_text(stop: &StopReason<f64>) -> String {
    match stop {
        StopReason::Completed => "completed".into(),
        StopReason::DomainExhausted { time, side } => format!("domain exhausted at t = {time} on the {side:?} side"),
    }
}

fn trajectory_details(traj: &Trajectory, level: f64) -> (Option<f64>, Value) {
    let slope = FrontTrace::from_trajectory(traj, level).ok().and_then(|tr| {
        let pts = tr.right_points();
        let late = &pts[pts.len() / 2..];
        (late.len() >= 2).then(|| fit_log_slope(late)).flatten()
    });
    let info = json!({
        "stop": stop_text(&traj.stop),
        "steps": traj.steps,
        "snapshots": traj.snapshots.len(),
        "front_level": level,
        "front_log_slope": slope,
    });
    (slope, info)
}

fn write_trajectory(art: &mut Artifacts, s: &Scenario, traj: &Trajectory) -> io::Result<()> {
    let level = level_of(s);
    let trace = FrontTrace::from_trajectory(traj, level).map_err(io::Error::other)?;
    let rows = traj
        .snapshots
        .iter()
        .zip(trace.right.iter().zip(&trace.left))
        .map(|(snap, (r, l))| {
            let f = &snap.field;
            [
                num(snap.t),
                num(f.mass()),
                num(f.min()),
                num(f.max()),
                num(r.as_number(accelfront::tails::Side::Right)),
                num(l.as_number(accelfront::tails::Side::Left)),
            ]
        });
    art.write(
        "trajectory.csv",
        &csv_bytes(&["t", "mass", "min", "max", "x_right", "x_left"], rows)?,
    )?;

    let dump = s.run.as_ref().map_or(Dump::All, |r| r.dump);
    let chosen: Vec<(usize, &accelfront::dynamics::Snapshot<f64>)> = match dump {
        Dump::All => traj.snapshots.iter().enumerate().collect(),
        Dump::Last => traj.snapshots.iter().enumerate().next_back().into_iter().collect(),
        Dump::None => Vec::new(),
    };
    if chosen.is_empty() {
        return Ok(());
    }
    let grid = *chosen[0].1.field.grid();
    if grid.len() > BINARY_THRESHOLD {
        let mut bin = Vec::with_capacity(chosen.len() * grid.len() * 8);
        let mut index = Vec::new();
        for (row, (_, snap)) in chosen.iter().enumerate() {
            index.push([
                row.to_string(),
                num(snap.t),
                (bin.len()).to_string(),
                grid.len().to_string(),
                num(grid.x(0)),
                num(grid.dx()),
            ]);
            for v in snap.field.values() {
                bin.extend_from_slice(&v.to_le_bytes());
            }
        }
        art.write("snapshots/u.bin", &bin)?;
        art.write(
            "snapshots/index.csv",
            &csv_bytes(&["row", "t", "offset", "n", "x0", "dx"], index)?,
        )?;
    } else {
        let mut index = Vec::new();
        for (i, snap) in chosen {
            let name = format!("snapshots/u_{i:04}.csv");
            let rows = grid.nodes().zip(snap.field.values()).map(|(x, u)| [num(x), num(*u)]);
            art.write(&name, &csv_bytes(&["x", "u"], rows)?)?;
            index.push([i.to_string(), num(snap.t), name]);
        }
        art.write("snapshots/index.csv", &csv_bytes(&["row", "t", "file"], index)?)?;
    }
    Ok(())
}

fn frontlaw(s: &Scenario, model: &Model) -> SectionResult {
    let spec = s.frontlaw.clone().unwrap_or(config::FrontLawSpec {
        times: None,
        right: None,
        left: None,
        tolerance: 1e-8,
    });
    let tails = config::tails_or_kernel(s, "frontlaw", spec.right.as_ref(), spec.left.as_ref()).map_err(fail)?;
    let law = FrontLaw::two_sided(&tails, model.beta()).map_err(fail)?;
    let times = spec.times.unwrap_or_else(|| (1..=50).map(f64::from).collect());
    let right = law.right_profile();
    let plain = right.scale() == 1.0 && right.shift() == 0.0;
    let mut rows = Vec::new();
    let mut verdict = Verdict::Yes;
    let mut worst: f64 = 0.0;
    let mut asymptotic = false;
    for &t in &times {
        let r = law.r(t);
        let l = law.l(t);
        let closed = if plain {
            closed_form_front(right.family(), model.beta(), t).ok()
        } else {
            None
        };
        let (cf, rel) = match (&r, closed) {
            (Ok(r), Some(c)) => {
                let rel = (r / c.value - 1.0).abs();
                if c.asymptotic {
                    asymptotic = true;
                } else {
                    worst = worst.max(rel);
                    if !(rel <= spec.tolerance) {
                        verdict = Verdict::No;
                    }
                }
                (num(c.value), num(rel))
            }
            _ => (String::new(), String::new()),
        };
        if r.is_err() {
            verdict = verdict.and(Verdict::Undetermined);
        }
        rows.push([
            num(t),
            r.map_or(String::new(), num),
            l.map_or(String::new(), num),
            cf,
            rel,
        ]);
    }
    Ok(Section {
        verdict,
        files: vec![(
            "frontlaw.csv".into(),
            csv_bytes(&["t", "r", "l", "r_closed_form", "rel_err"], rows).map_err(fail)?,
        )],
        details: json!({
            "family": right.family().name(),
            "beta": model.beta(),
            "closed_form": plain,
            "asymptotic_only": asymptotic,
            "max_exact_rel_err": worst,
            "tolerance": spec.tolerance,
        }),
    })
}

fn kesten_files(prefix: &str, rep: &KestenReport<f64>) -> Result<Vec<(String, Vec<u8>)>, String> {
    let rows = rep.rows.iter().map(|r| {
        [
            r.n.to_string(),
            num(r.x),
            num(r.ratio),
            num(r.bound),
            r.pass.to_string(),
        ]
    });
    let limits = rep
        .limits
        .iter()
        .map(|l| [l.n.to_string(), num(l.x), num(l.measured), num(l.target)]);
    Ok(vec![
        (
            format!("{prefix}.csv"),
            csv_bytes(&["n", "x", "ratio", "bound", "pass"], rows).map_err(fail)?,
        ),
        (
            format!("{prefix}_limits.csv"),
            csv_bytes(&["n", "x", "measured", "target"], limits).map_err(fail)?,
        ),
    ])
}

fn kesten_summary(rep: &KestenReport<f64>) -> Value {
    json!({
        "c_emp": rep.c_emp,
        "x_emp": rep.x_emp,
        "mass": rep.mass,
        "growth_detected": rep.growth_detected,
        "verdict": rep.verdict.to_string(),
    })
}

fn kesten(s: &Scenario) -> SectionResult {
    let spec = s.kesten.as_ref().ok_or("the scenario has no [kesten] table")?;
    let grid = config::grid(s).map_err(fail)?;
    let b = config::kesten_density(&spec.density, grid).map_err(fail)?;
    let defaults = KestenOptions::default();
    let opts = KestenOptions {
        delta: spec.delta.unwrap_or(defaults.delta),
        n_max: spec.n_max.unwrap_or(defaults.n_max),
        x_lo: spec.x_lo.unwrap_or(defaults.x_lo),
        window_fraction: spec.window_fraction.unwrap_or(defaults.window_fraction),
        fail_constant: spec.fail_constant.unwrap_or(defaults.fail_constant),
        ..defaults
    };
    let mut files = Vec::new();
    let mut details = Map::new();
    let mut verdict = Verdict::Yes;
    if matches!(spec.kind, KestenKind::Density | KestenKind::Both) {
        let rep = kesten_density_check(&b, &opts).map_err(fail)?;
        files.extend(kesten_files("kesten", &rep)?);
        details.insert("density".into(), kesten_summary(&rep));
        verdict = verdict.and(rep.verdict);
    }
    if matches!(spec.kind, KestenKind::Distribution | KestenKind::Both) {
        let rep = kesten_distribution_check(&b, &opts).map_err(fail)?;
        files.extend(kesten_files("kesten_distribution", &rep)?);
        details.insert("distribution".into(), kesten_summary(&rep));
        verdict = verdict.and(rep.verdict);
    }
    Ok(Section {
        verdict,
        files,
        details: Value::Object(details),
    })
}

fn subsolution(s: &Scenario, model: &Model, seed: u64) -> SectionResult {
    let spec = s
        .subsolution
        .as_ref()
        .ok_or("the scenario has no [subsolution] table")?;
    let tails = config::tails_or_kernel(s, "subsolution", spec.right.as_ref(), spec.left.as_ref()).map_err(fail)?;
    let beta = model.beta();
    let delta = spec.delta * beta;
    let (lambda, lambda0) = match spec.lambda {
        Some(l) => (l, None),
        None => {
            let l0 = lambda_zero(model, delta, seed).map_err(fail)?;
            (spec.lambda_fraction * l0, Some(l0))
        }
    };
    let sub = SubSolution::new(tails, beta, lambda, spec.eps, delta).map_err(fail)?;
    let rep = verify_subsolution(&sub, model, &spec.times, seed).map_err(fail)?;
    let rows = rep.rows.iter().map(|r| {
        [
            num(r.t),
            num(r.max_residual),
            r.regime.name().to_string(),
            num(r.max_nonlinear),
        ]
    });
    Ok(Section {
        verdict: rep.verdict,
        files: vec![(
            "subsolution.csv".into(),
            csv_bytes(&["t", "max_residual", "regime", "max_nonlinear"], rows).map_err(fail)?,
        )],
        details: json!({
            "lambda": lambda,
            "lambda_zero": lambda0,
            "eps": spec.eps,
            "delta": delta,
            "t0_emp": rep.t0_emp,
            "tolerance": rep.tolerance,
        }),
    })
}

fn sandwich(s: &Scenario, model: &Model, traj: &Trajectory) -> SectionResult {
    let spec = s.sandwich.as_ref().ok_or("the scenario has no [sandwich] table")?;
    let tails = config::tails_or_kernel(s, "sandwich", spec.right.as_ref(), spec.left.as_ref()).map_err(fail)?;
    let law = FrontLaw::two_sided(&tails, model.beta()).map_err(fail)?;
    let trace = FrontTrace::from_trajectory(traj, level_of(s)).map_err(fail)?;
    let rep = sandwich_check(&trace, &law, spec.eps).map_err(fail)?;
    let rows = rep.rows.iter().map(|r| {
        [
            num(r.t),
            num(r.x_right),
            num(r.x_left),
            num(r.r_lower),
            num(r.r_upper),
            r.verdict.to_string(),
        ]
    });
    Ok(Section {
        verdict: rep.verdict,
        files: vec![(
            "fronts.csv".into(),
            csv_bytes(&["t", "x_right", "x_left", "r_lower", "r_upper", "verdict"], rows).map_err(fail)?,
        )],
        details: json!({
            "level": trace.level,
            "eps": spec.eps,
            "engaged_at": rep.engaged_at,
            "violation_after": rep.violation_after,
            "notes": rep.rows.iter().filter(|r| !r.note.is_empty()).map(|r| format!("t = {}: {}", r.t, r.note)).collect::<Vec<_>>(),
        }),
    })
}

fn envelope(s: &Scenario, model: &Model, u0: &Field) -> SectionResult {
    let spec = s.envelope.as_ref().ok_or("the scenario has no [envelope] table")?;
    let run = s.run.as_ref().ok_or("the scenario has no [run] table")?;
    let b = config::two_sided("envelope", Some(&spec.right), spec.left.as_ref()).map_err(fail)?;
    let rep = verify_upper_envelope(model, u0, &b, spec.delta, &spec.times, spec.x_min, run.dt).map_err(fail)?;
    let rows = rep
        .rows
        .iter()
        .map(|r| [num(r.t), num(r.x), num(r.w), num(r.bound), r.pass.to_string()]);
    Ok(Section {
        verdict: rep.verdict,
        files: vec![(
            "envelope.csv".into(),
            csv_bytes(&["t", "x", "w", "bound", "pass"], rows).map_err(fail)?,
        )],
        details: json!({
            "constant": rep.constant,
            "worst_ratio": rep.worst_ratio,
            "violations": rep.violations,
        }),
    })
}

fn comparison(s: &Scenario, model: &Model, u0: &Field) -> SectionResult {
    let spec = s.comparison.as_ref().ok_or("the scenario has no [comparison] table")?;
    let run = s.run.as_ref().ok_or("the scenario has no [run] table")?;
    let lower = config::scale_field(u0, spec.factor).map_err(fail)?;
    let opts = config::evolve_options(run).map_err(fail)?;
    let rep = comparison_test(model, &lower, u0, &opts).map_err(fail)?;
    let (t, x) = rep.location.unwrap_or((f64::NAN, f64::NAN));
    let row = [
        rep.snapshots.to_string(),
        num(rep.max_excess),
        num(t),
        num(x),
        rep.verdict.to_string(),
    ];
    Ok(Section {
        verdict: rep.verdict,
        files: vec![(
            "comparison.csv".into(),
            csv_bytes(&["snapshots", "max_excess", "t", "x", "verdict"], [row]).map_err(fail)?,
        )],
        details: json!({ "factor": spec.factor }),
    })
}

fn tails(s: &Scenario) -> SectionResult {
    let tails = config::kernel_tails(s).map_err(fail)?;
    let opts = SampleOptions::default();
    let mut rows = Vec::new();
    let mut classes = Map::new();
    let mut verdict = Verdict::Yes;
    let sides = std::iter::once(("right", &tails.right)).chain(tails.left_profile().map(|p| ("left", p)));
    for (name, p) in sides {
        let class = classify_tail(p, &opts);
        verdict = verdict.and(class.long_tailed);
        classes.insert(
            name.into(),
            json!({
                "family": p.family().name(),
                "long_tailed": class.long_tailed.to_string(),
                "tail_decreasing": class.tail_decreasing.to_string(),
                "tail_convex": class.tail_convex.to_string(),
                "tail_log_convex": class.tail_log_convex.to_string(),
            }),
        );
        let base = p.rho().max(1.0);
        let out = p.side().outward(1.0);
        for d in 1..=15 {
            let x = out * base * 10f64.powi(d);
            let (Ok(lb), Ok(next)) = (p.eval_log(x), p.eval_log(x + out)) else {
                continue;
            };
            let ratio = (next - lb).exp();
            let ok = (ratio - 1.0).abs() <= opts.tolerance;
            rows.push([num(x), num(lb), num(ratio), Verdict::from(ok).to_string()]);
        }
    }
    Ok(Section {
        verdict,
        files: vec![(
            "tails.csv".into(),
            csv_bytes(&["x", "value", "ratio", "verdict"], rows).map_err(fail)?,
        )],
        details: Value::Object(classes),
    })
}

fn assumptions(model: &Model, seed: u64) -> SectionResult {
    let rep = check_assumptions(model, seed).map_err(fail)?;
    let rows = rep
        .checks
        .iter()
        .map(|c| [c.name.to_string(), c.verdict.to_string(), c.detail.clone()]);
    Ok(Section {
        verdict: rep.verdict(),
        files: vec![(
            "assumptions.csv".into(),
            csv_bytes(&["name", "verdict", "detail"], rows).map_err(fail)?,
        )],
        details: json!({ "best_p": rep.best_p }),
    })
}
