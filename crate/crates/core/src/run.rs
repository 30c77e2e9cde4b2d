//! Task dispatch and artifact persistence.
//!
//! Every task produces a [`TaskOutput`]: a JSON summary, headline numbers,
//! CSV tables and optional plots. [`execute`] writes them into a run
//! directory named after the config hash and appends a [`RunRecord`] to
//! `registry.jsonl` in the output directory.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{self, LoadedConfig, RunConfig, TaskKind, WaveMethod};
use crate::error::{Error, Result};
use crate::kinetics::{classify_bistability, Family, Kinetics};
use crate::plot::{Plot, Series};
use crate::profiles::{heaviside_profile, Profile};
use crate::pulsating::{
    cell_translate, lambda1, periodic_steady_states, property_p_check, pulsating_wave, PeriodicMedium,
    PeriodicSteadyState, PulsatingOptions,
};
use crate::semiflow::Semiflow;
use crate::speeds::{cylinder_counter_propagation, default_mu_grid, monostable_speeds, MonostableOptions};
use crate::waves::{
    construct_wave_direct, default_delta, iteration_sweep, periodic_wave, DirectWaveOptions, IterationOptions,
};

pub const REGISTRY: &str = "registry.jsonl";
/// Order and sandwich violations tolerated by the iteration task.
pub const ORDER_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub unit: String,
    pub value: Value,
}

fn metric(name: &str, unit: &str, value: impl Into<Value>) -> Metric {
    Metric {
        name: name.into(),
        unit: unit.into(),
        value: value.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn from_json(v: &Value) -> Self {
        match v {
            Value::Number(n) if n.is_i64() => Cell::Int(n.as_i64().unwrap_or_default()),
            Value::Number(n) => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
            Value::Null => Cell::Empty,
            Value::String(s) => Cell::Text(s.clone()),
            other => Cell::Text(other.to_string()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A CSV table; the header row reads `name [unit]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(file: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            file: file.into(),
            columns: columns.iter().map(|(n, u)| (n.to_string(), u.to_string())).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(vec![]);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(self.columns.iter().map(|(n, u)| format!("{n} [{u}]")))
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Clone, Debug, Default)]
pub struct TaskOutput {
    pub summary: Value,
    pub headline: Vec<Metric>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Tolerance checks that did not pass.
    pub failures: Vec<String>,
}

impl TaskOutput {
    pub fn headline_map(&self) -> BTreeMap<String, Value> {
        self.headline.iter().map(|m| (m.name.clone(), m.value.clone())).collect()
    }
}

fn state_columns(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (0..dim).map(|c| format!("{prefix}_{c}")).collect()
    }
}

fn profile_table(file: &str, p: &Profile) -> Table {
    let mut cols = vec![("x".to_string(), "length".to_string())];
    cols.extend(state_columns("u", p.dim()).into_iter().map(|c| (c, "state".to_string())));
    let mut t = Table {
        file: file.into(),
        columns: cols,
        rows: vec![],
    };
    for i in 0..p.len() {
        let mut row = vec![Cell::Num(p.grid().x(i))];
        row.extend(p.value(i).iter().map(|v| Cell::Num(*v)));
        t.rows.push(row);
    }
    t
}

fn profile_plot(file: &str, title: &str, p: &Profile) -> Plot {
    let series = state_columns("u", p.dim())
        .into_iter()
        .enumerate()
        .map(|(c, label)| Series {
            label,
            points: (0..p.len()).map(|i| (p.grid().x(i), p.value(i)[c])).collect(),
        })
        .collect();
    Plot {
        file: file.into(),
        title: title.into(),
        x_label: "x".into(),
        y_label: "u".into(),
        series,
    }
}

fn semiflow(cfg: &RunConfig) -> Result<Semiflow> {
    cfg.grid.semiflow(cfg.system.kinetics()?)
}

fn periodic_medium(k: &Kinetics) -> Result<&PeriodicMedium> {
    match (&k.family, &k.medium) {
        (Family::PeriodicDiffusion, Some(m)) => Ok(m),
        _ => Err(Error::Precondition("this task needs the periodic_diffusion family".into())),
    }
}

fn f_prime(k: &Kinetics) -> impl Fn(f64) -> f64 + '_ {
    move |u| k.jacobian(0.0, &[u])[(0, 0)]
}

/// Runs one task. Validation problems come back as [`Error::Config`];
/// anything else is a task failure.
pub fn run_task(kind: TaskKind, cfg: &RunConfig, seed: u64) -> Result<TaskOutput> {
    match kind {
        TaskKind::Equilibria => equilibria(cfg),
        TaskKind::Verify => verify(cfg, seed),
        TaskKind::Speed => speed(cfg),
        TaskKind::Wave => wave(cfg),
        TaskKind::Pulsating => pulsating(cfg),
        TaskKind::Lambda1 => lambda1_task(cfg),
        TaskKind::Counterexample => counterexample(cfg),
        TaskKind::Sweep => Err(Error::Config {
            path: "sweep.task".into(),
            message: "sweeps cannot be nested".into(),
        }),
    }
}

fn equilibria(cfg: &RunConfig) -> Result<TaskOutput> {
    let k = cfg.system.kinetics()?;
    let rep = classify_bistability(&k)?;
    let n = k.n_species();
    let mut cols: Vec<(String, String)> = vec![("index".into(), "-".into())];
    cols.extend(state_columns("state", n).into_iter().map(|c| (c, "state".to_string())));
    cols.extend([
        ("stability".to_string(), "-".to_string()),
        ("indicator".to_string(), "1/time".to_string()),
        ("on_boundary".to_string(), "-".to_string()),
    ]);
    let mut t = Table {
        file: "equilibria.csv".into(),
        columns: cols,
        rows: vec![],
    };
    for (i, e) in rep.equilibria.iter().enumerate() {
        let mut row = vec![Cell::from(i)];
        row.extend(e.state.iter().map(|v| Cell::Num(*v)));
        row.push(serde_json::to_value(e.stability)?.as_str().unwrap_or("").into());
        row.push(e.indicator.into());
        row.push(e.on_boundary.into());
        t.push(row);
    }
    Ok(TaskOutput {
        headline: vec![
            metric("n_equilibria", "-", rep.equilibria.len()),
            metric("n_intermediate", "-", rep.alpha_list.len()),
            metric("bistable", "-", rep.bistable),
            metric("unordered_certificate", "-", rep.unordered_certificate),
        ],
        summary: serde_json::to_value(&rep)?,
        tables: vec![t],
        ..Default::default()
    })
}

fn verify(cfg: &RunConfig, seed: u64) -> Result<TaskOutput> {
    let p = &cfg.verify;
    let s = semiflow(cfg)?;
    let audit = s.audit_axioms(p.trials, seed)?;
    let coop = s.kinetics().audit_cooperativity(1000, seed);
    let mut failures = vec![];
    if audit.comparison_violation > p.comparison_tol {
        failures.push(format!(
            "comparison violation {:e} exceeds {:e}",
            audit.comparison_violation, p.comparison_tol
        ));
    }
    if audit.translation_residual > p.translation_tol {
        failures.push(format!(
            "translation residual {:e} exceeds {:e}",
            audit.translation_residual, p.translation_tol
        ));
    }
    if audit.box_violation > p.box_tol {
        failures.push(format!("box violation {:e} exceeds {:e}", audit.box_violation, p.box_tol));
    }
    if !coop.cooperative {
        failures.push(format!("not cooperative: min off-diagonal {:e}", coop.min_offdiagonal));
    }
    let mut t = Table::new("audit.csv", &[("check", "-"), ("value", "state"), ("tolerance", "state")]);
    t.push(vec!["comparison".into(), audit.comparison_violation.into(), p.comparison_tol.into()]);
    t.push(vec!["translation".into(), audit.translation_residual.into(), p.translation_tol.into()]);
    t.push(vec!["box".into(), audit.box_violation.into(), p.box_tol.into()]);
    Ok(TaskOutput {
        headline: vec![
            metric("trials", "-", audit.completed),
            metric("comparison_violation", "state", audit.comparison_violation),
            metric("translation_residual", "state", audit.translation_residual),
            metric("box_violation", "state", audit.box_violation),
            metric("cooperative", "-", coop.cooperative),
        ],
        summary: json!({ "axioms": audit, "cooperativity": coop, "dt": s.dt() }),
        tables: vec![t],
        failures,
        ..Default::default()
    })
}

fn speed(cfg: &RunConfig) -> Result<TaskOutput> {
    let p = &cfg.speed;
    let k = cfg.system.kinetics()?;
    let alphas = match &p.alpha {
        Some(a) => a.clone(),
        None => classify_bistability(&k)?.alpha_list,
    };
    if alphas.is_empty() {
        return Err(Error::Precondition("no intermediate equilibria to test".into()));
    }
    if k.family == Family::Cylinder {
        let grid = default_mu_grid();
        let certs = alphas
            .par_iter()
            .map(|a| cylinder_counter_propagation(&k, a, &grid, p.mu_tol))
            .collect::<Result<Vec<_>>>()?;
        let mut t = Table::new(
            "counter_propagation.csv",
            &[
                ("alpha", "state"),
                ("leftward_bound", "length/time"),
                ("rightward_bound", "length/time"),
                ("lambda0", "1/time"),
                ("mu1", "1/length"),
                ("mu2", "1/length"),
                ("combination", "length/time"),
                ("holds", "-"),
            ],
        );
        for (a, c) in alphas.iter().zip(&certs) {
            t.push(vec![
                format!("{a:?}").into(),
                c.leftward_bound.into(),
                c.rightward_bound.into(),
                c.lambda0.into(),
                c.mu1.into(),
                c.mu2.into(),
                c.combination.into(),
                c.holds.into(),
            ]);
        }
        let min_comb = certs.iter().map(|c| c.combination).fold(f64::INFINITY, f64::min);
        return Ok(TaskOutput {
            headline: vec![
                metric("min_combination", "length/time", min_comb),
                metric("holds", "-", certs.iter().all(|c| c.holds)),
            ],
            summary: json!({ "alpha": alphas, "certificates": certs }),
            tables: vec![t],
            ..Default::default()
        });
    }
    let opts = MonostableOptions {
        domain: (p.x_min, p.x_max),
        dx: p.dx,
        horizon: p.horizon,
        delta_top: p.delta_top,
        delta_bottom: p.delta_bottom,
    };
    let runs = alphas
        .par_iter()
        .map(|a| monostable_speeds(&k, a, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        "speeds.csv",
        &[
            ("alpha", "state"),
            ("leftward", "length/time"),
            ("rightward", "length/time"),
            ("sum", "length/time"),
            ("verdict", "-"),
            ("linearized_leftward", "length/time"),
            ("linearized_rightward", "length/time"),
        ],
    );
    let mut plots = vec![];
    for (a, r) in alphas.iter().zip(&runs) {
        let sum = r.leftward.value + r.rightward.value;
        let (ll, lr) = match &r.linearized {
            Some((l, rr)) => (Cell::Num(l.value), Cell::Num(rr.value)),
            None => (Cell::Empty, Cell::Empty),
        };
        t.push(vec![
            format!("{a:?}").into(),
            r.leftward.value.into(),
            r.rightward.value.into(),
            sum.into(),
            (sum > p.margin).into(),
            ll,
            lr,
        ]);
        if plots.is_empty() {
            plots.push(Plot {
                file: "fronts.svg".into(),
                title: "front positions".into(),
                x_label: "t".into(),
                y_label: "x".into(),
                series: vec![
                    Series {
                        label: "[alpha, beta]".into(),
                        points: r.leftward.diagnostics.samples.clone(),
                    },
                    Series {
                        label: "[0, alpha]".into(),
                        points: r.rightward.diagnostics.samples.clone(),
                    },
                ],
            });
        }
    }
    let first = &runs[0];
    let min_sum = runs
        .iter()
        .map(|r| r.leftward.value + r.rightward.value)
        .fold(f64::INFINITY, f64::min);
    let summary_runs: Vec<Value> = alphas
        .iter()
        .zip(&runs)
        .map(|(a, r)| {
            let mut v = serde_json::to_value(r).unwrap_or(Value::Null);
            strip_samples(&mut v);
            json!({ "alpha": a, "speeds": v })
        })
        .collect();
    Ok(TaskOutput {
        headline: vec![
            metric("leftward", "length/time", first.leftward.value),
            metric("rightward", "length/time", first.rightward.value),
            metric("min_sum", "length/time", min_sum),
            metric("verdict", "-", min_sum > p.margin),
        ],
        summary: json!({ "runs": summary_runs }),
        tables: vec![t],
        plots,
        ..Default::default()
    })
}

/// Drops the long front-position samples from a serialized speed record.
fn strip_samples(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.remove("samples");
            m.values_mut().for_each(strip_samples);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_samples),
        _ => {}
    }
}

fn wave(cfg: &RunConfig) -> Result<TaskOutput> {
    let p = &cfg.wave;
    let s = semiflow(cfg)?;
    let k = s.kinetics().clone();
    let direct = || -> Result<_> {
        let init = heaviside_profile(s.grid(), &k.lift(&k.bottom), &k.lift(&k.top), p.interface, p.ramp)?;
        let opts = DirectWaveOptions {
            horizon: p.horizon,
            settle: p.settle.unwrap_or(0.5 * p.horizon),
            residual_horizon: p.residual_horizon,
            tol: p.tol,
        };
        construct_wave_direct(&s, &init, &opts)
    };
    match p.method {
        WaveMethod::Direct => {
            let w = direct()?;
            let mut failures = vec![];
            if !w.accepted {
                failures.push(format!("wave residual {:e} exceeds {:e}", w.residual, p.tol));
            }
            Ok(TaskOutput {
                headline: vec![
                    metric("speed", "length/time", w.speed),
                    metric("residual", "state", w.residual),
                    metric("accepted", "-", w.accepted),
                ],
                summary: serde_json::to_value(&w)?,
                tables: vec![profile_table("profile.csv", w.profile())],
                plots: vec![profile_plot("profile.svg", "wave profile", w.profile())],
                failures,
            })
        }
        WaveMethod::Iteration => {
            let delta = match p.delta {
                Some(d) => d,
                None => default_delta(&k)?,
            };
            let n = k.n_species();
            let opts = IterationOptions {
                k_max: p.k_max,
                tol: 1e-9,
                delta,
                e0: vec![1.0; n],
                e_beta: vec![1.0; n],
                residual_tol: p.tol,
                map_periods: p.map_periods,
            };
            let eqs = classify_bistability(&k)?.states();
            let sw = iteration_sweep(&s, &p.ns, &opts, &eqs)?;
            let mut t = Table::new(
                "iteration.csv",
                &[
                    ("n", "-"),
                    ("kappa", "-"),
                    ("cbar", "length"),
                    ("a_n", "length"),
                    ("b_n", "length"),
                    ("c_minus", "length/time"),
                    ("c_plus", "length/time"),
                    ("iterations", "-"),
                    ("last_increment", "state"),
                    ("converged", "-"),
                    ("order_violation", "state"),
                    ("sandwich_violation", "state"),
                    ("residual_minus", "state"),
                    ("residual_plus", "state"),
                ],
            );
            let mut failures = vec![];
            for r in &sw.runs {
                let tr = &r.trace;
                t.push(vec![
                    tr.n.into(),
                    tr.kappa.into(),
                    tr.cbar.into(),
                    tr.a_n.into(),
                    tr.b_n.into(),
                    r.c_minus.into(),
                    r.c_plus.into(),
                    tr.iterations.into(),
                    tr.last_increment.into(),
                    tr.converged.into(),
                    tr.order_violation.into(),
                    tr.sandwich_violation.into(),
                    r.minus.residual.into(),
                    r.plus.residual.into(),
                ]);
                if !tr.converged {
                    failures.push(format!("n = {}: iteration did not converge", tr.n));
                }
                if tr.order_violation > ORDER_TOL || tr.sandwich_violation > ORDER_TOL {
                    failures.push(format!(
                        "n = {}: order violation {:e}, sandwich violation {:e}",
                        tr.n, tr.order_violation, tr.sandwich_violation
                    ));
                }
                if tr.a_n > tr.b_n {
                    failures.push(format!("n = {}: a_n = {} exceeds b_n = {}", tr.n, tr.a_n, tr.b_n));
                }
                if r.c_plus > r.c_minus + 1e-12 {
                    failures.push(format!("n = {}: c_plus = {} exceeds c_minus = {}", tr.n, r.c_plus, r.c_minus));
                }
            }
            let last = sw.runs.last().expect("at least two runs");
            let runs_json: Vec<Value> = sw
                .runs
                .iter()
                .map(|r| json!({ "c_minus": r.c_minus, "c_plus": r.c_plus, "trace": r.trace }))
                .collect();
            Ok(TaskOutput {
                headline: vec![
                    metric("c_minus_extrapolated", "length/time", sw.c_minus_extrapolated),
                    metric("c_plus_extrapolated", "length/time", sw.c_plus_extrapolated),
                    metric("cbar", "length", sw.cbar),
                    metric("trichotomy", "-", serde_json::to_value(sw.trichotomy.case)?),
                ],
                summary: json!({
                    "cbar": sw.cbar,
                    "delta": sw.delta,
                    "c_minus_extrapolated": sw.c_minus_extrapolated,
                    "c_plus_extrapolated": sw.c_plus_extrapolated,
                    "trichotomy": sw.trichotomy,
                    "runs": runs_json,
                }),
                tables: vec![t, profile_table("profile.csv", last.minus.profile())],
                plots: vec![profile_plot("profile.svg", "iteration profile", last.minus.profile())],
                failures,
            })
        }
        WaveMethod::Periodic => {
            let w = direct()?;
            let pw = periodic_wave(&s, w.profile(), w.speed, p.n_phase, p.tol)?;
            let dim = k.state_dim();
            let mut cols: Vec<(String, String)> = vec![("t".into(), "time".into()), ("x".into(), "length".into())];
            cols.extend(state_columns("u", dim).into_iter().map(|c| (c, "state".to_string())));
            let mut t = Table {
                file: "phases.csv".into(),
                columns: cols,
                rows: vec![],
            };
            for (tt, prof) in &pw.phases {
                for i in 0..prof.len() {
                    let mut row = vec![Cell::Num(*tt), Cell::Num(prof.grid().x(i))];
                    row.extend(prof.value(i).iter().map(|v| Cell::Num(*v)));
                    t.rows.push(row);
                }
            }
            let mut failures = vec![];
            if !w.accepted {
                failures.push(format!("wave residual {:e} exceeds {:e}", w.residual, p.tol));
            }
            if !pw.accepted {
                failures.push(format!("periodicity residual {:e} exceeds {:e}", pw.periodicity_residual, p.tol));
            }
            let mut plot = profile_plot("phases.svg", "U(t, x) over one period", w.profile());
            plot.series = pw
                .phases
                .iter()
                .step_by((pw.phases.len() / 4).max(1))
                .map(|(tt, prof)| Series {
                    label: format!("t = {tt:.2}"),
                    points: (0..prof.len()).map(|i| (prof.grid().x(i), prof.value(i)[0])).collect(),
                })
                .collect();
            Ok(TaskOutput {
                headline: vec![
                    metric("speed", "length/time", pw.speed),
                    metric("residual", "state", w.residual),
                    metric("periodicity_residual", "state", pw.periodicity_residual),
                    metric("upper_tracking", "state", pw.upper_tracking),
                    metric("lower_tracking", "state", pw.lower_tracking),
                    metric("accepted", "-", w.accepted && pw.accepted),
                ],
                summary: json!({
                    "wave": w,
                    "speed": pw.speed,
                    "periodicity_residual": pw.periodicity_residual,
                    "upper_tracking": pw.upper_tracking,
                    "lower_tracking": pw.lower_tracking,
                    "accepted": pw.accepted,
                }),
                tables: vec![t],
                plots: vec![plot],
                failures,
            })
        }
    }
}

fn pulsating(cfg: &RunConfig) -> Result<TaskOutput> {
    let p = &cfg.pulsating;
    let s = semiflow(cfg)?;
    let opts = PulsatingOptions {
        horizon: p.horizon,
        window: p.window,
        tol: p.tol,
        periodicity_tol: p.periodicity_tol,
        stationarity_tol: p.stationarity_tol,
    };
    let w = pulsating_wave(&s, &opts)?;
    let mut t = Table::new("pulsating.csv", &[("xi", "length"), ("x", "length"), ("V", "state")]);
    for (j, xi) in w.xi.iter().enumerate() {
        for (i, x) in w.cell_x.iter().enumerate() {
            t.push(vec![(*xi).into(), (*x).into(), w.v[j][i].into()]);
        }
    }
    let mut ct = Table::new("crossings.csv", &[("cell", "-"), ("time", "time")]);
    for (i, tt) in w.crossing_times.iter().enumerate() {
        ct.push(vec![i.into(), (*tt).into()]);
    }
    let stride = (w.cell_x.len() / 4).max(1);
    let plot = Plot {
        file: "pulsating.svg".into(),
        title: "V(xi, x) at fixed x".into(),
        x_label: "xi".into(),
        y_label: "V".into(),
        series: (0..w.cell_x.len())
            .step_by(stride)
            .map(|i| Series {
                label: format!("x = {:.2}", w.cell_x[i]),
                points: w.xi.iter().enumerate().map(|(j, xi)| (*xi, w.v[j][i])).collect(),
            })
            .collect(),
    };
    let mut failures = vec![];
    if !w.accepted {
        failures.push(format!(
            "pulsating wave not accepted: residual {:e}, periodicity {:e}, monotonicity defect {:e}, converged {}",
            w.wave_residual, w.periodicity_residual, w.monotonicity_defect, w.converged
        ));
    }
    let mut summary = serde_json::to_value(&w)?;
    if let Value::Object(m) = &mut summary {
        for key in ["v", "cells", "xi", "cell_x"] {
            m.remove(key);
        }
    }
    Ok(TaskOutput {
        headline: vec![
            metric("speed", "length/time", w.speed),
            metric("wave_residual", "state", w.wave_residual),
            metric("periodicity_residual", "state", w.periodicity_residual),
            metric("monotonicity_defect", "state", w.monotonicity_defect),
            metric("x_variation", "state", w.x_variation),
            metric("zero_speed", "-", w.zero_speed),
            metric("accepted", "-", w.accepted),
        ],
        summary,
        tables: vec![t, ct],
        plots: vec![plot],
        failures,
    })
}

fn states_table(states: &[PeriodicSteadyState], period: f64) -> Table {
    let mut t = Table::new(
        "steady_states.csv",
        &[
            ("index", "-"),
            ("u0", "state"),
            ("v0", "state/length"),
            ("min", "state"),
            ("max", "state"),
            ("lambda1", "1/time"),
            ("classification", "-"),
            ("constant", "-"),
            ("residual", "state/time"),
            ("period", "length"),
        ],
    );
    for (i, s) in states.iter().enumerate() {
        let (lo, hi) = s.range();
        let class = serde_json::to_value(s.classification)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        t.push(vec![
            i.into(),
            s.u0.into(),
            s.v0.into(),
            lo.into(),
            hi.into(),
            s.lambda1.into(),
            class.into(),
            s.constant.into(),
            s.residual.into(),
            period.into(),
        ]);
    }
    t
}

fn cell_xs(n: usize, period: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 * period / n as f64)
}

fn lambda1_task(cfg: &RunConfig) -> Result<TaskOutput> {
    let p = &cfg.lambda1;
    let k = cfg.system.kinetics()?;
    let m = periodic_medium(&k)?;
    let u_bar = match (&p.constant, &p.u_bar) {
        (Some(_), Some(_)) => {
            return Err(Error::Config {
                path: "lambda1".into(),
                message: "give at most one of `constant` and `u_bar`".into(),
            })
        }
        (Some(c), None) => Some(vec![*c; m.samples_per_cell]),
        (None, Some(u)) => Some(u.clone()),
        (None, None) => None,
    };
    if let Some(u) = u_bar {
        let l = lambda1(&u, m, f_prime(&k))?;
        let fine = crate::pulsating::resample_cell(&u, l.samples);
        let mut t = Table::new("eigenfunction.csv", &[("x", "length"), ("u_bar", "state"), ("phi", "-")]);
        for (i, x) in cell_xs(l.samples, m.period).enumerate() {
            t.push(vec![x.into(), fine[i].into(), l.eigenfunction[i].into()]);
        }
        let plot = Plot {
            file: "eigenfunction.svg".into(),
            title: "principal eigenfunction".into(),
            x_label: "x".into(),
            y_label: "phi".into(),
            series: vec![Series {
                label: "phi".into(),
                points: cell_xs(l.samples, m.period).zip(l.eigenfunction.iter().copied()).collect(),
            }],
        };
        let mut summary = serde_json::to_value(&l)?;
        if let Value::Object(o) = &mut summary {
            o.remove("eigenfunction");
        }
        return Ok(TaskOutput {
            headline: vec![
                metric("lambda1", "1/time", l.lambda),
                metric("residual", "1/time", l.residual),
                metric("samples", "-", l.samples),
            ],
            summary,
            tables: vec![t],
            plots: vec![plot],
            ..Default::default()
        });
    }
    let states = periodic_steady_states(&k, p.n_seeds)?;
    let nonconst: Vec<&PeriodicSteadyState> = states.iter().filter(|s| !s.constant).collect();
    let max_l = nonconst.iter().map(|s| s.lambda1).fold(f64::NEG_INFINITY, f64::max);
    let min_l = nonconst.iter().map(|s| s.lambda1).fold(f64::INFINITY, f64::min);
    Ok(TaskOutput {
        headline: vec![
            metric("n_states", "-", states.len()),
            metric("n_nonconstant", "-", nonconst.len()),
            metric("min_nonconstant_lambda1", "1/time", finite_or_null(min_l)),
            metric("max_nonconstant_lambda1", "1/time", finite_or_null(max_l)),
        ],
        summary: json!({ "states": states_summary(&states) }),
        tables: vec![states_table(&states, m.period)],
        plots: vec![states_plot("steady_states.svg", &states, m.period)],
        ..Default::default()
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn states_summary(states: &[PeriodicSteadyState]) -> Vec<Value> {
    states
        .iter()
        .map(|s| {
            json!({
                "u0": s.u0, "v0": s.v0, "lambda1": s.lambda1, "classification": s.classification,
                "constant": s.constant, "residual": s.residual, "energy_drift": s.energy_drift,
                "range": s.range(),
            })
        })
        .collect()
}

fn states_plot(file: &str, states: &[PeriodicSteadyState], period: f64) -> Plot {
    Plot {
        file: file.into(),
        title: "periodic steady states".into(),
        x_label: "x".into(),
        y_label: "u".into(),
        series: states
            .iter()
            .filter(|s| !s.constant)
            .take(6)
            .map(|s| Series {
                label: format!("lambda1 = {:.3e}", s.lambda1),
                points: cell_xs(s.u.len(), period).zip(s.u.iter().copied()).collect(),
            })
            .collect(),
    }
}

fn counterexample(cfg: &RunConfig) -> Result<TaskOutput> {
    let p = &cfg.counterexample;
    let k = cfg.system.kinetics()?;
    let m = periodic_medium(&k)?;
    let pp = property_p_check(&k, p.n_seeds, p.margin)?;
    let mut witnesses = vec![];
    let mut tables = vec![states_table(&pp.states, m.period)];
    for (i, w) in pp.witnesses.iter().enumerate() {
        let n = w.u.len();
        let half = cell_translate(&w.u, n / 2);
        let lh = lambda1(&half, m, f_prime(&k))?;
        // One rising and one falling stretch per cell.
        let rising = |j: usize| w.u[(j + 1) % n] >= w.u[j];
        let unimodal = (0..n).filter(|&j| rising(j) != rising((j + 1) % n)).count() <= 2;
        witnesses.push(json!({
            "index": i,
            "lambda1": w.lambda1,
            "half_translate_lambda1": lh.lambda,
            "range": w.range(),
            "unimodal": unimodal,
            "u0": w.u0,
            "v0": w.v0,
        }));
        let mut t = Table::new(
            &format!("witness_{i}.csv"),
            &[("x", "length"), ("u", "state"), ("u_half_translate", "state")],
        );
        for (j, x) in cell_xs(n, m.period).enumerate() {
            t.push(vec![x.into(), w.u[j].into(), half[j].into()]);
        }
        tables.push(t);
    }
    let half_max = witnesses
        .iter()
        .filter_map(|w| w["half_translate_lambda1"].as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let best = pp.witnesses.iter().map(|w| w.lambda1).fold(f64::INFINITY, f64::min);
    Ok(TaskOutput {
        headline: vec![
            metric("in_y", "-", pp.in_y),
            metric("n_states", "-", pp.states.len()),
            metric("n_witnesses", "-", pp.witnesses.len()),
            metric("witness_lambda1", "1/time", finite_or_null(best)),
            metric("half_translate_lambda1", "1/time", finite_or_null(half_max)),
        ],
        summary: json!({
            "in_y": pp.in_y,
            "n_seeds": pp.n_seeds,
            "witnesses": witnesses,
            "states": states_summary(&pp.states),
        }),
        tables,
        plots: vec![states_plot("witnesses.svg", &pp.witnesses, m.period)],
        ..Default::default()
    })
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: Vec<f64>,
    pub status: String,
    pub message: Option<String>,
    pub headline: Vec<Metric>,
}

/// Runs the swept task at every point of the cartesian product in parallel.
/// Failures are recorded per row.
pub fn run_sweep(loaded: &LoadedConfig, seed: u64) -> Result<TaskOutput> {
    let sweep = loaded.config.sweep.as_ref().ok_or_else(|| Error::Config {
        path: "sweep".into(),
        message: "the sweep task needs a [sweep] section".into(),
    })?;
    if sweep.task == TaskKind::Sweep {
        return Err(Error::Config {
            path: "sweep.task".into(),
            message: "sweeps cannot be nested".into(),
        });
    }
    let points = sweep.points()?;
    let paths: Vec<&str> = sweep.parameters.iter().map(|a| a.path.as_str()).collect();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|pt| {
            let attempt = || -> Result<TaskOutput> {
                let mut raw = loaded.raw.clone();
                for (path, v) in paths.iter().zip(pt) {
                    config::set_path(&mut raw, path, *v)?;
                }
                let cfg = config::parse_value(raw)?;
                run_task(sweep.task, &cfg, seed)
            };
            match attempt() {
                Ok(out) => SweepRow {
                    point: pt.clone(),
                    status: if out.failures.is_empty() { "ok" } else { "tolerance" }.into(),
                    message: (!out.failures.is_empty()).then(|| out.failures.join("; ")),
                    headline: out.headline,
                },
                Err(e) => SweepRow {
                    point: pt.clone(),
                    status: "failed".into(),
                    message: Some(e.to_string()),
                    headline: vec![],
                },
            }
        })
        .collect();

    let mut metric_cols: Vec<(String, String)> = vec![];
    for r in &rows {
        for m in &r.headline {
            if !metric_cols.iter().any(|(n, _)| *n == m.name) {
                metric_cols.push((m.name.clone(), m.unit.clone()));
            }
        }
    }
    let mut cols: Vec<(String, String)> = paths.iter().map(|p| (p.to_string(), "config".to_string())).collect();
    cols.push(("status".into(), "-".into()));
    cols.push(("message".into(), "-".into()));
    cols.extend(metric_cols.iter().cloned());
    let mut t = Table {
        file: "sweep.csv".into(),
        columns: cols,
        rows: vec![],
    };
    for r in &rows {
        let mut row: Vec<Cell> = r.point.iter().map(|v| Cell::Num(*v)).collect();
        row.push(r.status.clone().into());
        row.push(r.message.clone().map_or(Cell::Empty, Cell::Text));
        for (name, _) in &metric_cols {
            row.push(
                r.headline
                    .iter()
                    .find(|m| &m.name == name)
                    .map_or(Cell::Empty, |m| Cell::from_json(&m.value)),
            );
        }
        t.push(row);
    }
    let mut plots = vec![];
    if let Some((name, unit)) = metric_cols
        .iter()
        .find(|(n, _)| rows.iter().any(|r| r.headline.iter().any(|m| &m.name == n && m.value.is_f64())))
    {
        plots.push(Plot {
            file: "sweep.svg".into(),
            title: format!("{name} across the sweep"),
            x_label: paths.first().map_or(String::new(), |p| p.to_string()),
            y_label: format!("{name} [{unit}]"),
            series: vec![Series {
                label: name.clone(),
                points: rows
                    .iter()
                    .filter_map(|r| {
                        let v = r.headline.iter().find(|m| &m.name == name)?.value.as_f64()?;
                        Some((*r.point.first()?, v))
                    })
                    .collect(),
            }],
        });
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    Ok(TaskOutput {
        headline: vec![
            metric("rows", "-", rows.len()),
            metric("failed_rows", "-", failed),
        ],
        summary: json!({ "task": sweep.task, "parameters": paths, "rows": rows }),
        tables: vec![t],
        plots,
        failures: vec![],
    })
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: TaskKind,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub tool_version: String,
    pub run_dir: String,
    pub artifacts: Vec<Artifact>,
    pub headline: BTreeMap<String, Value>,
    pub exit_code: i32,
    pub message: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub plots: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the parsed config tree, the task and the seed. Formatting and key
/// order in the file do not matter.
pub fn config_hash(raw: &toml::Value, task: TaskKind, seed: u64) -> String {
    let canon = json!({ "config": raw, "task": task, "seed": seed });
    sha256_hex(canon.to_string().as_bytes())
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn write_artifact(out: &Path, rel: &str, bytes: &[u8], list: &mut Vec<Artifact>) -> Result<()> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, bytes)?;
    list.push(Artifact {
        path: rel.into(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

/// Appends one JSON line to the registry.
pub fn append_record(out: &Path, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(out.join(REGISTRY))?;
    f.write_all(line.as_bytes())?;
    Ok(())
}

pub fn read_registry(out: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(out.join(REGISTRY))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format(format!("{REGISTRY} line {}: {e}", i + 1)))
        })
        .collect()
}

/// Exit status of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Validation = 2,
    TaskFailure = 3,
    Tolerance = 4,
}

pub fn status_of(e: &Error) -> Status {
    match e {
        Error::Config { .. } => Status::Validation,
        _ => Status::TaskFailure,
    }
}

/// Runs `task`, writes its artifacts and appends the registry record.
pub fn execute(task: TaskKind, loaded: &LoadedConfig, opts: &RunOptions) -> Result<(RunRecord, TaskOutput)> {
    let started = now_ms();
    let hash = config_hash(&loaded.raw, task, opts.seed);
    let run_dir = format!("{}-{}", task.name(), &hash[..12]);
    let result = match task {
        TaskKind::Sweep => run_sweep(loaded, opts.seed),
        t => run_task(t, &loaded.config, opts.seed),
    };
    let mut record = RunRecord {
        task,
        config_hash: hash.clone(),
        seed: opts.seed,
        started_unix_ms: started,
        finished_unix_ms: 0,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        run_dir: run_dir.clone(),
        artifacts: vec![],
        headline: BTreeMap::new(),
        exit_code: 0,
        message: None,
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            if status_of(&e) == Status::Validation {
                return Err(e);
            }
            record.exit_code = Status::TaskFailure as i32;
            record.message = Some(e.to_string());
            record.finished_unix_ms = now_ms();
            append_record(&opts.out, &record)?;
            return Err(e);
        }
    };
    let dir = opts.out.join(&run_dir);
    std::fs::create_dir_all(&dir)?;
    let summary = json!({
        "task": task,
        "config_hash": hash,
        "seed": opts.seed,
        "headline": output.headline,
        "failures": output.failures,
        "result": output.summary,
    });
    let mut artifacts = vec![];
    write_artifact(&dir, "summary.json", serde_json::to_string_pretty(&summary)?.as_bytes(), &mut artifacts)?;
    for t in &output.tables {
        write_artifact(&dir, &t.file, &t.to_csv()?, &mut artifacts)?;
    }
    if opts.plots {
        for p in &output.plots {
            write_artifact(&dir, &p.file, p.render().as_bytes(), &mut artifacts)?;
        }
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    record.artifacts = artifacts;
    record.headline = output.headline_map();
    if !output.failures.is_empty() {
        record.exit_code = Status::Tolerance as i32;
        record.message = Some(output.failures.join("; "));
    }
    record.finished_unix_ms = now_ms();
    append_record(&opts.out, &record)?;
    Ok((record, output))
}

/// Markdown digest of the registry.
pub fn report(records: &[RunRecord]) -> String {
    let mut s = String::from("# Run report\n\n");
    s.push_str(&format!("{} runs recorded.\n\n", records.len()));
    s.push_str("| task | config | seed | exit | artifacts | headline |\n|---|---|---|---|---|---|\n");
    for r in records {
        let head: Vec<String> = r.headline.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.task.name(),
            &r.config_hash[..12.min(r.config_hash.len())],
            r.seed,
            r.exit_code,
            r.artifacts.len(),
            head.join(", ").replace('|', "\\|")
        ));
    }
    let failed: Vec<&RunRecord> = records.iter().filter(|r| r.exit_code != 0).collect();
    if !failed.is_empty() {
        s.push_str("\n## Failures\n\n");
        for r in failed {
            s.push_str(&format!(
                "- {} ({}): {}\n",
                r.task.name(),
                &r.config_hash[..12.min(r.config_hash.len())],
                r.message.as_deref().unwrap_or("")
            ));
        }
    }
    s
}
