//! Subcommand implementations.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};
use qchain_core::analysis::{
    count_branches, map_cell, scaling_point, sweep_1d, sweep_point, transitions, Direction, PointOutcome,
    RegimeGrid, SweepRecord, SweepSpec,
};
use qchain_core::integrate::integrate;
use qchain_core::lyapunov::lyapunov_spectrum;
use qchain_core::{ChainState, Error, LyapunovResult};
use rayon::prelude::*;

use crate::config::{ParameterKind, RunConfig};
use crate::manifest::{manifest_path, Header, Manifest, Status};
use crate::output::{joined, lambda_fields, lambda_headers, num, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Lyapunov,
    Sweep,
    Map,
    Bifurcation,
    Scaling,
    Control,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Lyapunov => "lyapunov",
            Command::Sweep => "sweep",
            Command::Map => "map",
            Command::Bifurcation => "bifurcation",
            Command::Scaling => "scaling",
            Command::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub status: Status,
    pub points_total: usize,
    pub points_failed: usize,
    pub message: Option<String>,
    pub summary: toml::Table,
}

impl Report {
    fn from_counts(total: usize, failed: usize) -> Report {
        Report {
            status: Status::from_counts(total, failed),
            points_total: total,
            points_failed: failed,
            message: None,
            summary: toml::Table::new(),
        }
    }
}

/// Runs `command`, writes its CSV and the manifest sidecar, and returns the manifest.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Manifest> {
    let started = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();
    let report = execute(command, cfg)?;
    let manifest = Manifest {
        manifest: Header {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.name().to_string(),
            output: cfg.output.path.clone(),
            seed: cfg.ic.seed,
            started,
            duration_s: clock.elapsed().as_secs_f64(),
            status: report.status,
            points_total: report.points_total,
            points_failed: report.points_failed,
            message: report.message,
        },
        config: cfg.clone(),
        summary: report.summary,
    };
    manifest.write(&manifest_path(&cfg.output.path))?;
    Ok(manifest)
}

/// Runs `command` and writes its CSV to `cfg.output.path`.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Report> {
    cfg.check()?;
    let out = cfg.output.path.as_path();
    match command {
        Command::Simulate => simulate(cfg, out),
        Command::Lyapunov => lyapunov(cfg, out),
        Command::Sweep => sweep(cfg, out, false),
        Command::Control => sweep(cfg, out, true),
        Command::Bifurcation => bifurcation(cfg, out),
        Command::Map => map(cfg, out),
        Command::Scaling => scaling(cfg, out),
    }
}

fn initial_state(cfg: &RunConfig) -> ChainState {
    ChainState::perturbed_ground(cfg.n_qubits, cfg.ic.noise, cfg.ic.seed)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let n = cfg.n_qubits;
    let params = cfg.model_params()?;
    let integ = cfg.integrator_config();
    let s = &cfg.simulate;
    let mut header = vec!["tau".to_string()];
    for c in ["w", "u", "v"] {
        header.extend((1..=n).map(|j| format!("{c}_{j}")));
    }
    let mut table = Table::create(out, &header)?;

    let start = match integrate(&initial_state(cfg), &params, (0.0, s.transient), &integ, |_, _| {}) {
        Ok(x) => x,
        Err(e) => {
            table.finish()?;
            let mut r = Report::from_counts(1, 1);
            r.message = Some(format!("transient failed: {e}"));
            return Ok(r);
        }
    };
    let row = |tau: f64, y: &[f64]| -> Vec<String> {
        core::iter::once(num(tau)).chain(y.iter().map(|&x| num(x))).collect()
    };
    table.row(&row(s.transient, start.as_slice()))?;
    let mut rows = 1usize;
    let mut write_err: Option<anyhow::Error> = None;
    let mut next = 1usize;
    let mut peak = start.max_bloch_norm_sq();
    let t_end = s.transient + s.duration;
    let result = integrate(&start, &params, (s.transient, t_end), &integ, |tau, y| {
        let due = s.transient + next as f64 * s.sample_interval;
        if tau < due - 1e-9 * s.sample_interval.max(1.0) || write_err.is_some() {
            return;
        }
        while s.transient + next as f64 * s.sample_interval <= tau + 1e-9 * s.sample_interval.max(1.0) {
            next += 1;
        }
        for j in 0..n {
            peak = peak.max(y[j] * y[j] + 4.0 * (y[n + j] * y[n + j] + y[2 * n + j] * y[2 * n + j]));
        }
        match table.row(&row(tau, y)) {
            Ok(()) => rows += 1,
            Err(e) => write_err = Some(e),
        }
    });
    table.finish()?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let mut report = Report::from_counts(1, usize::from(result.is_err()));
    if let Err(e) = &result {
        report.status = Status::Partial;
        report.message = Some(format!("integration stopped early: {e}"));
    }
    report.summary.insert("rows".into(), (rows as i64).into());
    report.summary.insert("max_bloch_norm_sq".into(), peak.into());
    Ok(report)
}

fn spectrum_summary(summary: &mut toml::Table, r: &LyapunovResult, zero_tol: f64) {
    summary.insert("regime".into(), r.classification.regime.to_string().into());
    summary.insert("positive_count".into(), (r.positive_count(zero_tol) as i64).into());
    summary.insert("uncertain".into(), r.classification.uncertain.into());
    summary.insert("conditional".into(), r.conditional.into());
    summary.insert("converged".into(), r.converged.into());
    summary.insert("drift".into(), r.drift.into());
    summary.insert("sum".into(), r.sum().into());
    summary.insert("reseeded".into(), (r.reseeded as i64).into());
}

fn lyapunov(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let k = cfg.exponent_count(cfg.n_qubits);
    let mut header = vec!["kind".to_string(), "tau".to_string()];
    header.extend(lambda_headers(k));
    let mut table = Table::create(out, &header)?;
    let result = lyapunov_spectrum(&cfg.model_params()?, &initial_state(cfg), &cfg.lyapunov_config());
    let report = match result {
        Ok(r) => {
            for h in &r.history {
                let mut f = vec!["history".to_string(), num(h.tau)];
                f.extend(lambda_fields(&h.estimates, k));
                table.row(&f)?;
            }
            let mut f = vec!["final".to_string(), num(cfg.lyapunov.averaging_time)];
            f.extend(lambda_fields(&r.exponents, k));
            table.row(&f)?;
            let mut rep = Report::from_counts(1, 0);
            spectrum_summary(&mut rep.summary, &r, cfg.lyapunov.zero_tol);
            rep
        }
        Err(e) => {
            let mut rep = Report::from_counts(1, 1);
            rep.message = Some(e.to_string());
            rep
        }
    };
    table.finish()?;
    Ok(report)
}

fn parameter_name(p: ParameterKind) -> &'static str {
    p.to_core().name()
}

fn sweep_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "direction", "index", "parameter", "value", "regime", "positive_count", "uncertain", "converged",
        "conditional", "branches",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(lambda_headers(k));
    h.extend(["maxima".to_string(), "error".to_string()]);
    h
}

fn sweep_row(cfg: &RunConfig, spec: &SweepSpec, rec: &SweepRecord, k: usize) -> Vec<String> {
    let dir = match spec.direction {
        Direction::Forward => "forward",
        Direction::Backward => "backward",
    };
    let mut f = vec![
        dir.to_string(),
        rec.index.to_string(),
        spec.parameter.name().to_string(),
        num(rec.value),
    ];
    match &rec.outcome {
        Ok(o) => {
            f.extend(outcome_fields(cfg, o));
            f.extend(lambda_fields(o.exponents(), k));
            f.push(joined(&o.maxima));
            f.push(String::new());
        }
        Err(e) => {
            f.extend(std::iter::repeat(String::new()).take(6 + k + 1));
            f.push(e.to_string());
        }
    }
    f
}

fn outcome_fields(cfg: &RunConfig, o: &PointOutcome) -> Vec<String> {
    let branches = count_branches(&o.maxima, cfg.analysis.branch_tol).to_string();
    match &o.lyapunov {
        Some(l) => vec![
            l.classification.regime.to_string(),
            l.positive_count(cfg.lyapunov.zero_tol).to_string(),
            l.classification.uncertain.to_string(),
            l.converged.to_string(),
            l.conditional.to_string(),
            branches,
        ],
        None => vec![String::new(), String::new(), String::new(), String::new(), String::new(), branches],
    }
}

/// Sweep records in traversal order; independent points run in parallel.
fn run_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    let params = cfg.model_params()?;
    let study = cfg.study_config();
    if spec.continuation {
        return Ok(sweep_1d(spec, cfg.n_qubits, &params, &study)?);
    }
    spec.validate()?;
    spec.parameter.apply(&params, spec.lo)?.validate(cfg.n_qubits)?;
    let fresh = spec.fresh_initial(cfg.n_qubits);
    Ok(spec
        .values()
        .into_par_iter()
        .enumerate()
        .map(|(index, value)| SweepRecord {
            index,
            value,
            outcome: sweep_point(spec, &params, value, &fresh, &study),
        })
        .collect())
}

fn transition_summary(summary: &mut toml::Table, key: &str, records: &[SweepRecord]) {
    let list: Vec<toml::Value> = transitions(records)
        .iter()
        .map(|t| {
            let mut e = toml::Table::new();
            e.insert("from".into(), t.from.to_string().into());
            e.insert("to".into(), t.to.to_string().into());
            e.insert("at".into(), t.midpoint().into());
            toml::Value::Table(e)
        })
        .collect();
    summary.insert(key.into(), toml::Value::Array(list));
}

fn sweep(cfg: &RunConfig, out: &Path, control: bool) -> Result<Report> {
    if control {
        if !cfg.drive().is_modulated() {
            bail!("control needs drive.kind = \"modulated\"");
        }
        if !matches!(cfg.sweep.parameter, ParameterKind::ModFreq | ParameterKind::ModIndex) {
            bail!("control sweeps sweep.parameter = \"mod_freq\" or \"mod_index\"");
        }
    }
    let spec = cfg.sweep_spec();
    let records = run_sweep(cfg, &spec)?;
    let k = cfg.exponent_count(cfg.n_qubits);
    let mut table = Table::create(out, &sweep_header(k))?;
    for r in &records {
        table.row(&sweep_row(cfg, &spec, r, k))?;
    }
    table.finish()?;
    let failed = records.iter().filter(|r| r.outcome.is_err()).count();
    let mut report = Report::from_counts(records.len(), failed);
    report.summary.insert("parameter".into(), parameter_name(cfg.sweep.parameter).into());
    transition_summary(&mut report.summary, "transitions", &records);
    Ok(report)
}

/// Forward and backward continuation sweeps over the same grid.
fn bifurcation(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let mut fwd = cfg.sweep_spec();
    fwd.continuation = true;
    fwd.direction = Direction::Forward;
    let mut bwd = fwd.clone();
    bwd.direction = Direction::Backward;
    let (a, b) = rayon::join(|| run_sweep(cfg, &fwd), || run_sweep(cfg, &bwd));
    let (a, b) = (a?, b?);
    let k = cfg.exponent_count(cfg.n_qubits);
    let mut table = Table::create(out, &sweep_header(k))?;
    for r in &a {
        table.row(&sweep_row(cfg, &fwd, r, k))?;
    }
    for r in &b {
        table.row(&sweep_row(cfg, &bwd, r, k))?;
    }
    table.finish()?;
    let failed = a.iter().chain(&b).filter(|r| r.outcome.is_err()).count();
    let mut report = Report::from_counts(a.len() + b.len(), failed);
    report.summary.insert("parameter".into(), parameter_name(cfg.sweep.parameter).into());
    transition_summary(&mut report.summary, "forward_transitions", &a);
    transition_summary(&mut report.summary, "backward_transitions", &b);
    Ok(report)
}

fn map(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let spec = cfg.map_spec();
    let params = cfg.model_params()?;
    let lyap = cfg.lyapunov_config();
    let (deltas, omegas) = (spec.delta.values(), spec.omega.values());
    if deltas.is_empty() || omegas.is_empty() || spec.delta.points == 0 || spec.omega.points == 0 {
        bail!("map axes need at least one point");
    }
    let initial = ChainState::perturbed_ground(cfg.n_qubits, spec.ic_noise, spec.ic_seed);
    let coords: Vec<(usize, usize)> = RegimeGrid::coordinates(deltas.len(), omegas.len()).collect();
    let cells: Vec<_> = coords
        .par_iter()
        .map(|&(id, io)| map_cell(&params, deltas[id], omegas[io], &initial, &lyap))
        .collect();
    let k = cfg.exponent_count(cfg.n_qubits);
    let mut header: Vec<String> =
        ["delta", "omega", "regime", "positive_count", "uncertain", "converged"].iter().map(|s| s.to_string()).collect();
    header.extend(lambda_headers(k));
    header.push("error".into());
    let mut table = Table::create(out, &header)?;
    for (&(id, io), cell) in coords.iter().zip(&cells) {
        let mut f = vec![num(deltas[id]), num(omegas[io])];
        match cell {
            Ok(c) => {
                f.push(c.classification.regime.to_string());
                f.push(c.classification.regime.positive_count().to_string());
                f.push(c.classification.uncertain.to_string());
                f.push(c.converged.to_string());
                f.extend(lambda_fields(&c.exponents, k));
                f.push(String::new());
            }
            Err(e) => {
                f.extend(std::iter::repeat(String::new()).take(4 + k));
                f.push(e.to_string());
            }
        }
        table.row(&f)?;
    }
    table.finish()?;
    let failed = cells.iter().filter(|c| c.is_err()).count();
    Ok(Report::from_counts(cells.len(), failed))
}

fn scaling(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let list = &cfg.scaling.n_list;
    if list.is_empty() || list.windows(2).any(|w| w[1] <= w[0]) || list[0] == 0 {
        bail!("scaling.n_list must be non-empty, positive and strictly ascending");
    }
    let lyap = cfg.lyapunov_config();
    let outcomes: Vec<Result<LyapunovResult, Error>> = list
        .par_iter()
        .map(|&n| {
            let topology = cfg.topology_for(n).map_err(|e| Error::InvalidTopology(e.to_string()))?;
            let p = cfg.model_params_with(topology);
            scaling_point(n, &p, &lyap, cfg.ic.seed, cfg.ic.noise)
        })
        .collect();
    let k = list.iter().map(|&n| cfg.exponent_count(n)).max().unwrap_or(0);
    let mut header: Vec<String> = ["n", "regime", "positive_count", "uncertain", "converged", "sum"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(lambda_headers(k));
    header.push("error".into());
    let mut table = Table::create(out, &header)?;
    let mut counts = Vec::new();
    for (&n, o) in list.iter().zip(&outcomes) {
        let mut f = vec![n.to_string()];
        match o {
            Ok(r) => {
                let m = r.positive_count(cfg.lyapunov.zero_tol);
                counts.push(toml::Value::Array(vec![(n as i64).into(), (m as i64).into()]));
                f.push(r.classification.regime.to_string());
                f.push(m.to_string());
                f.push(r.classification.uncertain.to_string());
                f.push(r.converged.to_string());
                f.push(num(r.sum()));
                f.extend(lambda_fields(&r.exponents, k));
                f.push(String::new());
            }
            Err(e) => {
                f.extend(std::iter::repeat(String::new()).take(5 + k));
                f.push(e.to_string());
            }
        }
        table.row(&f)?;
    }
    table.finish()?;
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    let mut report = Report::from_counts(outcomes.len(), failed);
    report.summary.insert("positive_counts".into(), toml::Value::Array(counts));
    Ok(report)
}
