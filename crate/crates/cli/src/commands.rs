use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use steadypop::model::{f2_total, Density};
use steadypop::operator_lab::{assemble_full, assemble_split};
use steadypop::ratedsl::{self, Var};
use steadypop::scenario::{self, catalog};
use steadypop::spectral::{self, Characteristic};
use steadypop::{sim, steady, verify, Error, Scenario};

use crate::report::{cell, csv, num, Failure, ScenarioInfo};

/// Cell count cap for `verify --dump`.
const DUMP_CELLS: usize = 50;
const DEFAULT_SNAPSHOTS: usize = 100;

pub struct Loaded {
    pub info: ScenarioInfo,
    pub scenario: Scenario,
    pub doc: Value,
}

/// Successful command result; `failure` marks a property failure with outputs.
pub struct Done {
    pub outputs: Value,
    pub warnings: Vec<String>,
    pub failure: Option<Failure>,
}

impl Done {
    fn ok(outputs: Value, warnings: Vec<String>) -> Self {
        Done {
            outputs,
            warnings,
            failure: None,
        }
    }
}

pub fn load(source: &str) -> Result<Loaded, Failure> {
    let text = match source.strip_prefix(catalog::PREFIX) {
        Some(name) => catalog::source(name)
            .ok_or_else(|| {
                Failure::input(
                    "InvalidScenario",
                    format!("unknown catalog scenario `{name}`"),
                )
            })?
            .to_string(),
        None => fs::read_to_string(source)
            .map_err(|e| Failure::input("Io", format!("cannot read {source}: {e}")))?,
    };
    let scenario = scenario::from_json(&text).map_err(Failure::loading)?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::input("InvalidScenario", e.to_string()))?;
    let info = ScenarioInfo {
        source: source.to_string(),
        name: scenario.name.clone(),
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    };
    Ok(Loaded {
        info,
        scenario,
        doc,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn general_warnings(s: &Scenario, ch: Option<&Characteristic>) -> Result<Vec<String>, Failure> {
    let mut warnings: Vec<String> = s
        .rates
        .probe(s.grid.max_age())?
        .iter()
        .map(|f| f.to_string())
        .collect();
    if let Some(ch) = ch {
        if !ch.fertile_at_max_age() {
            warnings.push(
                "(irred) beta vanishes at the maximal age; the generator may be reducible".into(),
            );
        }
    }
    Ok(warnings)
}

fn density_from_spec(s: &Scenario, spec: Option<&str>) -> Result<(String, Density), Failure> {
    match spec {
        None => Ok((
            if s.initial.is_some() {
                "initial"
            } else {
                "uniform"
            }
            .to_string(),
            s.initial_density()?,
        )),
        Some("uniform") => Ok((
            "uniform".into(),
            Density::constant(s.grid, 1.0 / s.grid.max_age()),
        )),
        Some(text) => {
            let bad = |msg: String| Failure::input("InvalidDensity", msg);
            let expr = ratedsl::parse(text).map_err(|e| bad(e.to_string()))?;
            if expr.mentions(Var::Env) {
                return Err(bad("the density expression may only depend on a".into()));
            }
            let values = s
                .grid
                .nodes()
                .map(|a| expr.eval(a, 0.0))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            let u = Density::new(s.grid, values)?;
            if !u.is_nonnegative() {
                return Err(bad("the density takes negative values".into()));
            }
            Ok((text.to_string(), u))
        }
    }
}

pub fn spectral_bound(loaded: &Loaded, u_spec: Option<&str>) -> Result<Done, Failure> {
    let s = &loaded.scenario;
    let (label, u) = density_from_spec(s, u_spec)?;
    let ch = Characteristic::new(&u, s)?;
    let warnings = general_warnings(s, Some(&ch))?;
    let report = ch.report()?;
    let r0 = spectral::net_reproduction_extinction(s)?;
    Ok(Done::ok(
        json!({
            "u": label,
            "cells": s.grid.len(),
            "spectral_bound": num(report.spectral_bound),
            "net_reproduction": num(report.net_reproduction),
            "net_reproduction_extinction": num(r0),
            "bracket": [num(report.bracket.0), num(report.bracket.1)],
            "iterations": report.iterations,
            "sign_consistent": report.sign_consistent,
        }),
        warnings,
    ))
}

pub fn steady_state(loaded: &Loaded, out: Option<&Path>) -> Result<Done, Failure> {
    let s = &loaded.scenario;
    let sol = steady::solve_steady(s)?;
    let p = &sol.density;
    let ch = Characteristic::new(p, s)?;
    let res = steady::residuals(p, s)?;
    let consistency = steady::self_consistency(p, s)?;
    let pi = ch.survival();
    let birth_rate = s.grid.width()
        * ch.fertility()
            .iter()
            .zip(p.values())
            .map(|(b, v)| b * v)
            .sum::<f64>();
    let mut outputs = json!({
        "cells": s.grid.len(),
        "total": num(sol.total()),
        "alpha_star": num(sol.alpha_star),
        "iterations": sol.iterations,
        "final_step": num(sol.l1_step_norms.last().copied().unwrap_or(0.0)),
        "birth_rate": num(birth_rate),
        "boundary_value": num(steady::boundary_value(p)),
        "residual_boundary": num(res.boundary),
        "residual_profile": num(res.profile),
        "residual_r": num(res.r_gap),
        "self_consistency": num(consistency),
        "net_reproduction": num(sol.net_reproduction_at_solution),
    });
    if let Some(dir) = out {
        let rows = s.grid.nodes().enumerate().map(|(i, a)| {
            vec![
                cell(a),
                cell(p.values()[i]),
                cell(pi.values()[i]),
                cell(ch.fertility()[i]),
                cell(ch.mortality()[i]),
            ]
        });
        let text = csv(&["a", "p_star", "pi", "beta_profile", "mu_profile"], rows);
        let path = write_file(dir, "steady_state.csv", &text)?;
        outputs["csv"] = json!(path.display().to_string());
    }
    Ok(Done::ok(outputs, sol.warnings))
}

pub struct SimulateArgs<'a> {
    pub horizon: f64,
    pub stride: Option<usize>,
    pub from_steady: Option<f64>,
    pub out: Option<&'a Path>,
}

pub fn simulate(loaded: &Loaded, args: SimulateArgs<'_>) -> Result<Done, Failure> {
    let s = &loaded.scenario;
    let mut warnings = general_warnings(s, None)?;
    let mut outputs = json!({ "cells": s.grid.len(), "horizon": num(args.horizon) });
    let p0 = match args.from_steady {
        Some(factor) => {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Failure::input(
                    "InvalidScenario",
                    format!("--from-steady factor must be positive, got {factor}"),
                ));
            }
            let sol = steady::solve_steady(s)?;
            outputs["steady_total"] = num(sol.total());
            warnings.extend(sol.warnings);
            sol.density.scaled(factor)
        }
        None => s.initial_density()?,
    };
    if !(args.horizon > 0.0 && args.horizon.is_finite()) {
        return Err(Failure::input(
            "InvalidScenario",
            format!("--horizon must be positive, got {}", args.horizon),
        ));
    }
    let steps = sim::step_count(args.horizon, s.grid.width());
    let stride = args
        .stride
        .unwrap_or_else(|| steps.div_ceil(DEFAULT_SNAPSHOTS).max(1));
    if stride == 0 {
        return Err(Failure::input(
            "InvalidScenario",
            "--stride must be at least 1",
        ));
    }
    let run = sim::simulate(s, &p0, args.horizon, stride)?;
    if run.extinct {
        warnings
            .push("population fell to the positivity floor; extinction environment used".into());
    }
    outputs["steps"] = json!(steps);
    outputs["stride"] = json!(stride);
    outputs["snapshots"] = json!(run.snapshots.len());
    outputs["initial_total"] = num(f2_total(&p0));
    outputs["final_total"] = num(f2_total(&run.final_density));
    outputs["final_birth_rate"] = num(run.birth_series.last().map_or(0.0, |b| b.1));
    outputs["min_value"] = num(run.min_value);
    outputs["max_value"] = num(run.max_value);
    outputs["extinct"] = json!(run.extinct);
    if let Some(dir) = args.out {
        let series = run
            .total_series
            .iter()
            .zip(&run.birth_series)
            .map(|((t, p), (_, b))| vec![cell(*t), cell(*p), cell(*b)]);
        let series_path = write_file(dir, "series.csv", &csv(&["t", "P", "birth_rate"], series))?;
        let snaps = run.snapshots.iter().flat_map(|(t, d)| {
            d.grid()
                .nodes()
                .zip(d.values())
                .map(move |(a, v)| vec![cell(*t), cell(a), cell(*v)])
                .collect::<Vec<_>>()
        });
        let snap_path = write_file(dir, "snapshots.csv", &csv(&["t", "a", "p"], snaps))?;
        outputs["series_csv"] = json!(series_path.display().to_string());
        outputs["snapshots_csv"] = json!(snap_path.display().to_string());
    }
    Ok(Done::ok(outputs, warnings))
}

pub struct VerifyArgs<'a> {
    pub draws: usize,
    pub seed: Option<u64>,
    pub dump: bool,
    pub out: Option<&'a Path>,
}

pub fn verify(loaded: Option<&Loaded>, args: VerifyArgs<'_>) -> Result<Done, Failure> {
    let seed = args
        .seed
        .or_else(|| loaded.and_then(|l| l.scenario.seed))
        .unwrap_or(0);
    let mut outputs = match loaded {
        Some(l) => serde_json::to_value(verify::verify_scenario(&l.scenario, args.draws, seed)),
        None => serde_json::to_value(verify::verify_random(args.draws, seed)),
    }
    .map_err(|e| Failure::input("Serialization", e.to_string()))?;
    let mut warnings = Vec::new();
    if let Some(l) = loaded {
        warnings = general_warnings(&l.scenario, None)?;
    }
    if args.dump {
        let l =
            loaded.ok_or_else(|| Failure::input("InvalidArguments", "--dump needs --scenario"))?;
        let dir = args
            .out
            .ok_or_else(|| Failure::input("InvalidArguments", "--dump needs --out"))?;
        outputs["dump"] = json!(dump_matrices(&l.scenario, dir)?);
    }
    let failing: Vec<String> = outputs["suites"]
        .as_array()
        .into_iter()
        .flatten()
        .filter(|s| s["failed"].as_u64().unwrap_or(0) > 0)
        .map(|s| {
            format!(
                "{}: {}",
                s["suite"].as_str().unwrap_or("?"),
                s["first_failure"].as_str().unwrap_or("failed")
            )
        })
        .collect();
    outputs["all_passed"] = json!(failing.is_empty());
    let failure = (!failing.is_empty()).then(|| Failure::Property {
        message: failing.join("; "),
    });
    Ok(Done {
        outputs,
        warnings,
        failure,
    })
}

fn dump_matrices(s: &Scenario, dir: &Path) -> Result<Vec<String>, Failure> {
    let coarse = if s.grid.len() > DUMP_CELLS {
        s.with_cells(DUMP_CELLS)?
    } else {
        s.clone()
    };
    let u = coarse.initial_density()?;
    let full = assemble_full(&u, &coarse)?;
    let (hat, boundary) = assemble_split(&u, &coarse)?;
    let vectors = format!(
        "# rank-one boundary n={}\nb {}\nphi {}\n",
        coarse.grid.len(),
        boundary
            .b()
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(" "),
        boundary
            .phi
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
    Ok(vec![
        write_file(dir, "generator_full.txt", &full.dump())?,
        write_file(dir, "generator_homogeneous.txt", &hat.dump())?,
        write_file(dir, "boundary.txt", &vectors)?,
    ]
    .into_iter()
    .map(|p| p.display().to_string())
    .collect())
}

struct SweepRow {
    value: f64,
    s: Option<f64>,
    r: Option<f64>,
    p_star: Option<f64>,
    error: Option<Error>,
}

fn sweep_row(doc: &Value, path: &str, value: f64) -> SweepRow {
    let mut row = SweepRow {
        value,
        s: None,
        r: None,
        p_star: None,
        error: None,
    };
    let mut run = || -> Result<(), Error> {
        let mut doc = doc.clone();
        scenario::set_path(&mut doc, path, value)?;
        let s = scenario::from_value(doc)?;
        let u = s.initial_density()?;
        let ch = Characteristic::new(&u, &s)?;
        row.r = Some(ch.net_reproduction());
        row.s = Some(ch.spectral_bound()?.root);
        row.p_star = Some(steady::solve_steady(&s)?.total());
        Ok(())
    };
    if let Err(e) = run() {
        row.error = Some(e);
    }
    row
}

fn addresses_number(doc: &Value, path: &str) -> bool {
    let pointer = format!("/{}", path.replace('.', "/"));
    doc.pointer(&pointer).is_some_and(Value::is_number)
}

pub fn sweep(
    loaded: &Loaded,
    param: &str,
    values: &[f64],
    out: Option<&Path>,
) -> Result<Done, Failure> {
    if !addresses_number(&loaded.doc, param) {
        return Err(Failure::input(
            "InvalidScenario",
            format!("parameter path `{param}` does not address a numeric field"),
        ));
    }
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| sweep_row(&loaded.doc, param, v))
        .collect();
    let opt = |x: Option<f64>| x.map(cell).unwrap_or_default();
    let table = csv(
        &["value", "s", "R", "P_star", "error_code"],
        rows.iter().map(|r| {
            vec![
                cell(r.value),
                opt(r.s),
                opt(r.r),
                opt(r.p_star),
                r.error
                    .as_ref()
                    .map(|e| e.code().to_string())
                    .unwrap_or_default(),
            ]
        }),
    );
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "value": num(r.value),
                "s": r.s.map(num),
                "R": r.r.map(num),
                "P_star": r.p_star.map(num),
                "error_code": r.error.as_ref().map(Error::code),
                "error": r.error.as_ref().map(Error::to_string),
            })
        })
        .collect();
    let mut outputs = json!({ "parameter": param, "rows": json_rows });
    if let Some(dir) = out {
        outputs["csv"] = json!(write_file(dir, "sweep.csv", &table)?.display().to_string());
    }
    Ok(Done::ok(outputs, Vec::new()))
}

pub fn catalog_list() -> Done {
    Done::ok(
        json!({ "scenarios": catalog::names().collect::<Vec<_>>() }),
        Vec::new(),
    )
}
