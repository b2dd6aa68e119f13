//! Diagnostic requests and their NDJSON records.
//!
//! A request file holds one diagnostic per line: a type followed by
//! `key=value` tokens, e.g.
//!
//! ```text
//! energy mode=below k=0.4 center=0.0 radius=0.2 t_end=0.1 theta=1 n=0
//! decay center=0.0 radius=0.05 levels=4
//! holder center=0.0 radius=0.3 t_start=0.05 t_end=0.1
//! ```
//!
//! Cylinder keys shared by most types: `center` (comma list), `radius`,
//! `t_end` (default: last snapshot), `theta` (default 1).

use std::path::Path;

use chemolab::degiorgi::{
    degiorgi_lemma_above, degiorgi_lemma_below, isoperimetric_check, oscillation_decay, shrinking_measure_check,
    time_propagation_check, AlternativeConfig, Ambient, LemmaConfig,
};
use chemolab::functionals::{
    energy_budget_above, energy_budget_below, level_set_report, log_budget, make_cutoff, DriftBound, LevelMode,
};
use chemolab::grid::{cylinder_slices, Cube};
use chemolab::holder::{holder_fit, HolderRegion, SamplerConfig};
use chemolab::oracles::{embedding_check, ParabolicNorms};
use chemolab::IntrinsicCylinder;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::KeyValues;
use crate::error::{io_at, CliError, CliResult};
use crate::run_dir::LoadedRun;

pub const TYPES: &[&str] = &[
    "level_set",
    "energy",
    "log",
    "decay",
    "holder",
    "lemma",
    "propagation",
    "shrinking",
    "isoperimetric",
    "embedding",
];

#[derive(Debug, Clone)]
pub struct Request {
    pub kind: String,
    pub line: usize,
    pub params: KeyValues,
}

pub fn parse_requests(text: &str, context: &str) -> CliResult<Vec<Request>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().expect("non-empty line").to_string();
        if !TYPES.contains(&kind.as_str()) {
            return Err(CliError::Config(format!(
                "{context}:{}: unknown diagnostic '{kind}' (expected one of {})",
                i + 1,
                TYPES.join(", ")
            )));
        }
        let params = KeyValues::parse_tokens(tokens, &format!("{context}:{}", i + 1))?;
        out.push(Request {
            kind,
            line: i + 1,
            params,
        });
    }
    Ok(out)
}

pub fn load_requests(path: &Path) -> CliResult<Vec<Request>> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    parse_requests(&text, &path.display().to_string())
}

fn mode(kv: &mut KeyValues) -> CliResult<LevelMode> {
    match kv.take_str("mode").as_deref() {
        None | Some("below") => Ok(LevelMode::Below),
        Some("above") => Ok(LevelMode::Above),
        Some(other) => Err(CliError::Config(format!("mode must be below or above (got '{other}')"))),
    }
}

fn cylinder(kv: &mut KeyValues, run: &LoadedRun) -> CliResult<IntrinsicCylinder> {
    let dim = run.config.dim;
    let center = kv.take_point("center", dim)?;
    let radius: f64 = kv.require("radius")?;
    let t_end = kv.take_or("t_end", run.u.last_time().unwrap_or(0.0))?;
    let theta = kv.take_or("theta", 1.0)?;
    Ok(IntrinsicCylinder::new(Cube::new(center, radius), t_end, theta))
}

fn ambient(kv: &mut KeyValues) -> CliResult<Option<Ambient>> {
    match (kv.take::<f64>("mu_plus")?, kv.take::<f64>("mu_minus")?) {
        (Some(mu_plus), Some(mu_minus)) => Ok(Some(Ambient { mu_plus, mu_minus })),
        (None, None) => Ok(None),
        _ => Err(CliError::Config("mu_plus and mu_minus must be given together".into())),
    }
}

fn alternative_config(kv: &mut KeyValues) -> CliResult<AlternativeConfig> {
    let d = AlternativeConfig::default();
    Ok(AlternativeConfig {
        xi: kv.take_or("xi", d.xi)?,
        a: kv.take_or("a", d.a)?,
        nu: kv.take_or("nu", d.nu)?,
        n_star: kv.take_or("n_star", d.n_star)?,
        q_star: kv.take_or("q_star", d.q_star)?,
        lambda: kv.take_or("lambda", d.lambda)?,
        levels: kv.take_or("levels", d.levels)?,
        tolerance: kv.take_or("tolerance", d.tolerance)?,
        gamma_d: kv.take_or("gamma_d", d.gamma_d)?,
    })
}

fn exponents(kv: &mut KeyValues, dim: usize) -> CliResult<ParabolicNorms> {
    let d = ParabolicNorms::default_for(dim);
    let l = kv.take_or("l", d.l_exp)?;
    let r = kv.take_or("r", d.r_exp)?;
    let kappa = kv.take_or("kappa", d.kappa)?;
    Ok(ParabolicNorms::new(l, r, kappa, d.p, d.s, dim)?)
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn evaluate(req: &Request, run: &LoadedRun, seed: u64) -> CliResult<Value> {
    let mut kv = req.params.clone();
    let params = run.config.params();
    let dim = run.config.dim;
    let h = run.config.domain().spacing();
    let report = match req.kind.as_str() {
        "level_set" => {
            let mode = mode(&mut kv)?;
            let k: f64 = kv.require("k")?;
            let cyl = cylinder(&mut kv, run)?;
            let e = exponents(&mut kv, dim)?;
            to_value(&level_set_report(&run.u, &cyl, k, mode, &e)?)
        }
        "energy" => {
            let mode = mode(&mut kv)?;
            let k: f64 = kv.require("k")?;
            let n: u32 = kv.take_or("n", 0)?;
            let base = cylinder(&mut kv, run)?;
            let e = exponents(&mut kv, dim)?;
            let cut = make_cutoff(n, &base, h)?;
            let cyl = cut.cylinder();
            let drift = DriftBound::from_run(&run.u, &run.v, &cyl, &params, e)?;
            let budget = match mode {
                LevelMode::Below => energy_budget_below(&run.u, k, &cyl, &cut, &drift)?,
                LevelMode::Above => {
                    let mu_plus = match kv.take::<f64>("mu_plus")? {
                        Some(v) => v,
                        None => cylinder_slices(&run.u, &cyl)?.max_value(),
                    };
                    let floor = kv.take_or("u_floor", run.summary.u_floor)?;
                    energy_budget_above(&run.u, k, &cyl, &cut, &drift, mu_plus, floor)?
                }
            };
            json!({ "budget": to_value(&budget), "i_d": drift.i_d, "cutoff": to_value(&cut) })
        }
        "log" => {
            let c: f64 = kv.require("c")?;
            let n: u32 = kv.take_or("n", 0)?;
            let base = cylinder(&mut kv, run)?;
            let e = exponents(&mut kv, dim)?;
            let cut = make_cutoff(n, &base, h)?;
            let cyl = cut.cylinder();
            let cs = cylinder_slices(&run.u, &cyl)?;
            let mu_plus = kv.take_or("mu_plus", cs.max_value())?;
            let omega = kv.take_or("omega", cs.max_value() - cs.min_value())?;
            let floor = kv.take_or("u_floor", run.summary.u_floor)?;
            let drift = DriftBound::from_run(&run.u, &run.v, &cyl, &params, e)?;
            to_value(&log_budget(&run.u, &cyl, omega, mu_plus, c, &cut, &drift, floor)?)
        }
        "decay" => {
            let start = cylinder(&mut kv, run)?;
            let cfg = alternative_config(&mut kv)?;
            to_value(&oscillation_decay(&run.u, &start, &cfg, params.m)?)
        }
        "holder" => {
            let center = kv.take_point("center", dim)?;
            let radius: f64 = kv.require("radius")?;
            let t_end = kv.take_or("t_end", run.u.last_time().unwrap_or(0.0))?;
            let t_start = kv.take_or("t_start", t_end)?;
            let d = SamplerConfig::new(seed);
            let cfg = SamplerConfig {
                seed: kv.take_or("seed", seed)?,
                pairs: kv.take_or("pairs", d.pairs)?,
                bins: kv.take_or("bins", d.bins)?,
            };
            let region = HolderRegion {
                cube: Cube::new(center, radius),
                t_start,
                t_end,
            };
            to_value(&holder_fit(&run.u, &region, params.m, &cfg)?)
        }
        "lemma" => {
            let mode = mode(&mut kv)?;
            let cyl = cylinder(&mut kv, run)?;
            let d = LemmaConfig::default();
            let cfg = LemmaConfig {
                xi: kv.take_or("xi", d.xi)?,
                a: kv.take_or("a", d.a)?,
                nu: kv.take_or("nu", d.nu)?,
                conclusion_radius: kv.take("conclusion_radius")?,
            };
            let amb = ambient(&mut kv)?;
            let r = match mode {
                LevelMode::Below => degiorgi_lemma_below(&run.u, &cyl, &cfg, amb)?,
                LevelMode::Above => degiorgi_lemma_above(&run.u, &cyl, &cfg, amb)?,
            };
            to_value(&r)
        }
        "propagation" => {
            let cyl = cylinder(&mut kv, run)?;
            let cfg = alternative_config(&mut kv)?;
            let amb = ambient(&mut kv)?;
            to_value(&time_propagation_check(&run.u, &cyl, &cfg, amb)?)
        }
        "shrinking" => {
            let cyl = cylinder(&mut kv, run)?;
            let cfg = alternative_config(&mut kv)?;
            let amb = ambient(&mut kv)?;
            to_value(&shrinking_measure_check(&run.u, &cyl, &cfg, amb)?)
        }
        "isoperimetric" => {
            let snaps = run.u.snapshots();
            let idx = kv.take_or("snapshot", snaps.len() - 1)?;
            let field = snaps
                .get(idx)
                .ok_or_else(|| CliError::Io(format!("snapshot {idx} not in run ({} stored)", snaps.len())))?;
            let center = kv.take_point("center", dim)?;
            let radius: f64 = kv.require("radius")?;
            let k: f64 = kv.require("k")?;
            let l: f64 = kv.require("l")?;
            to_value(&isoperimetric_check(field, &Cube::new(center, radius), k, l)?)
        }
        "embedding" => {
            let cyl = cylinder(&mut kv, run)?;
            let p = kv.take_or("p", 2.0)?;
            let s = kv.take_or("s", 2.0)?;
            to_value(&embedding_check(&run.u, &cyl, p, s)?)
        }
        other => unreachable!("request type {other} validated at parse time"),
    };
    kv.finish()?;
    let params: Map<String, Value> = req
        .params
        .entries()
        .iter()
        .map(|(k, v)| {
            let val = v
                .parse::<f64>()
                .map(Value::from)
                .unwrap_or_else(|_| Value::from(v.clone()));
            (k.clone(), val)
        })
        .collect();
    Ok(json!({
        "type": req.kind,
        "line": req.line,
        "params": params,
        "report": report,
    }))
}

/// Evaluate every request (in parallel) and return the NDJSON lines in
/// request order, stopping at the first failure.
pub fn run_requests(requests: &[Request], run: &LoadedRun, seed: u64) -> (Vec<String>, Option<CliError>) {
    let results = chemolab::exec::map_slice(requests, |r| evaluate(r, run, seed));
    let mut lines = Vec::new();
    for (req, res) in requests.iter().zip(results) {
        match res {
            Ok(v) => lines.push(serde_json::to_string(&v).expect("record serializes")),
            Err(e) => {
                let e = match e {
                    CliError::Config(m) => CliError::Config(format!("line {}: {m}", req.line)),
                    CliError::Io(m) => CliError::Io(format!("line {}: {m}", req.line)),
                    CliError::Numeric(m) => CliError::Numeric(format!("line {}: {m}", req.line)),
                };
                return (lines, Some(e));
            }
        }
    }
    (lines, None)
}
