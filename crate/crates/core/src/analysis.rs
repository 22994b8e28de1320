//! Sweeps, regime maps, scaling and control studies built on [`crate::lyapunov`].
//!
//! Every grid point is evaluated by [`evaluate_point`], which is a pure
//! function of its inputs. Callers that want parallelism can farm the points
//! out themselves; the sequential drivers here define the reference order.

use alloc::format;
use alloc::vec::Vec;

use crate::integrate::{Flow, Integrator};
use crate::lyapunov::{lyapunov_spectrum, Classification, LyapunovConfig, LyapunovResult, Regime};
use crate::model::{ChainState, CouplingTopology, DriveSpec, MeanFieldModel, ModelParams};
use crate::{Error, Result};

/// Default prominence below which maxima count as integrator ripple.
pub const MIN_PROMINENCE: f64 = 1e-4;

/// Local maxima of a uniformly sampled series, refined by a parabola through
/// each peak and its two neighbours. Peaks whose height above the higher of
/// the two adjacent troughs is below `min_prominence` are dropped.
pub fn local_maxima(series: &[f64], min_prominence: f64) -> Result<Vec<f64>> {
    if series.len() < 3 {
        return Err(Error::SeriesTooShort { len: series.len() });
    }
    let peaks: Vec<usize> = (1..series.len() - 1)
        .filter(|&i| series[i] > series[i - 1] && series[i] >= series[i + 1])
        .collect();
    let trough = |lo: usize, hi: usize| series[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
    let mut out = Vec::with_capacity(peaks.len());
    for (p, &i) in peaks.iter().enumerate() {
        let left = trough(if p == 0 { 0 } else { peaks[p - 1] }, i);
        let right = trough(i, peaks.get(p + 1).copied().unwrap_or(series.len() - 1));
        if series[i] - left.max(right) < min_prominence {
            continue;
        }
        let (y0, y1, y2) = (series[i - 1], series[i], series[i + 1]);
        let curvature = y0 - 2.0 * y1 + y2;
        let peak = if curvature < 0.0 {
            y1 - (y2 - y0) * (y2 - y0) / (8.0 * curvature)
        } else {
            y1
        };
        out.push(peak);
    }
    Ok(out)
}

/// Number of distinct levels among `maxima`, merging values closer than `tol`.
pub fn count_branches(maxima: &[f64], tol: f64) -> usize {
    let mut sorted = maxima.to_vec();
    sorted.sort_by(f64::total_cmp);
    match sorted.first() {
        None => 0,
        Some(_) => 1 + sorted.windows(2).filter(|w| w[1] - w[0] > tol).count(),
    }
}

/// Analytic steady state `(w, u, v)` of a single driven, damped unit.
pub fn steady_state_bloch(delta: f64, omega: f64) -> (f64, f64, f64) {
    let a = 4.0 * delta * delta + 1.0;
    let w = -a / (a + 2.0 * omega * omega);
    let v = omega * w / a;
    let u = -2.0 * delta * v;
    (w, u, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    Delta,
    Omega,
    ModFreq,
    ModIndex,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta",
            SweepParameter::Omega => "omega",
            SweepParameter::ModFreq => "mod_freq",
            SweepParameter::ModIndex => "mod_index",
        }
    }

    /// Returns a copy of `params` with this parameter set to `value`.
    pub fn apply(&self, params: &ModelParams, value: f64) -> Result<ModelParams> {
        let mut p = params.clone();
        match (self, &mut p.drive) {
            (SweepParameter::Delta, _) => p.delta = value,
            (SweepParameter::Omega, DriveSpec::Constant { omega }) => *omega = value,
            (SweepParameter::Omega, DriveSpec::Modulated { omega_m, .. }) => *omega_m = value,
            (SweepParameter::ModFreq, DriveSpec::Modulated { mod_freq, .. }) => *mod_freq = value,
            (SweepParameter::ModIndex, DriveSpec::Modulated { mod_index, .. }) => *mod_index = value,
            (param, DriveSpec::Constant { .. }) => {
                return Err(Error::InvalidParameter(format!(
                    "sweeping {} needs a modulated drive",
                    param.name()
                )))
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub direction: Direction,
    /// Seed each point with the final state of the previous one.
    pub continuation: bool,
    /// Noise added to a carried state so it cannot sit on an exactly
    /// symmetric invariant subspace.
    pub continuation_kick: f64,
    pub ic_seed: u64,
    pub ic_noise: f64,
}

impl SweepSpec {
    pub fn new(parameter: SweepParameter, lo: f64, hi: f64, points: usize) -> Self {
        SweepSpec {
            parameter,
            lo,
            hi,
            points,
            direction: Direction::Forward,
            continuation: false,
            continuation_kick: 1e-8,
            ic_seed: 0,
            ic_noise: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sweep range [{}, {}] must satisfy lo < hi",
                self.lo, self.hi
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("a sweep needs at least two points".into()));
        }
        if !(self.ic_noise >= 0.0) || !(self.continuation_kick >= 0.0) {
            return Err(Error::InvalidParameter("ic_noise and continuation_kick must be >= 0".into()));
        }
        Ok(())
    }

    /// Grid values in traversal order.
    pub fn values(&self) -> Vec<f64> {
        let grid = linspace(self.lo, self.hi, self.points);
        match self.direction {
            Direction::Forward => grid,
            Direction::Backward => grid.into_iter().rev().collect(),
        }
    }

    /// Fresh seeded initial condition used when not continuing.
    pub fn fresh_initial(&self, n: usize) -> ChainState {
        ChainState::perturbed_ground(n, self.ic_noise, self.ic_seed)
    }

    /// Initial state for traversal position `index` given the previous final state.
    pub fn carried_initial(&self, index: usize, previous: &ChainState) -> ChainState {
        let seed = self.ic_seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        previous.kicked(self.continuation_kick, seed)
    }
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return alloc::vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + i as f64 * step })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub lyapunov: LyapunovConfig,
    /// When false only the transient and the maxima window are integrated.
    pub spectrum: bool,
    /// Length of the trajectory sampled for maxima after the spectrum run.
    pub maxima_window: f64,
    pub min_prominence: f64,
    /// Unit whose inversion is sampled.
    pub maxima_unit: usize,
    /// Cap on stored maxima per point.
    pub max_maxima: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            lyapunov: LyapunovConfig::default(),
            spectrum: true,
            maxima_window: 500.0,
            min_prominence: MIN_PROMINENCE,
            maxima_unit: 0,
            max_maxima: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub lyapunov: Option<LyapunovResult>,
    pub maxima: Vec<f64>,
    /// State at the end of the maxima window.
    pub final_state: ChainState,
}

impl PointOutcome {
    pub fn classification(&self) -> Option<Classification> {
        self.lyapunov.as_ref().map(|l| l.classification)
    }

    pub fn regime(&self) -> Option<Regime> {
        self.classification().map(|c| c.regime)
    }

    pub fn exponents(&self) -> &[f64] {
        self.lyapunov.as_ref().map(|l| l.exponents.as_slice()).unwrap_or(&[])
    }

    pub fn leading(&self) -> Option<f64> {
        self.exponents().first().copied()
    }
}

/// Spectrum (optional) and maxima sample at one parameter point.
pub fn evaluate_point(
    params: &ModelParams,
    initial: &ChainState,
    config: &StudyConfig,
) -> Result<PointOutcome> {
    let n = initial.n_qubits();
    if config.maxima_unit >= n {
        return Err(Error::IndexOutOfRange { index: config.maxima_unit, len: n });
    }
    let model = MeanFieldModel::new(n, params)?;
    let mut integ = Integrator::new(Flow::new(model), config.lyapunov.integrator)?;
    let (lyapunov, mut x, mut tau) = if config.spectrum {
        let l = lyapunov_spectrum(params, initial, &config.lyapunov)?;
        let x = l.final_state.as_slice().to_vec();
        let tau = l.final_tau;
        (Some(l), x, tau)
    } else {
        let mut x = initial.as_slice().to_vec();
        let mut tau = 0.0;
        integ.advance(&mut tau, &mut x, config.lyapunov.transient, |_, _| {})?;
        (None, x, tau)
    };
    let unit = config.maxima_unit;
    let mut series = Vec::new();
    series.push(x[unit]);
    let end = tau + config.maxima_window;
    integ.advance(&mut tau, &mut x, end, |_, y| series.push(y[unit]))?;
    let mut maxima = if series.len() >= 3 {
        local_maxima(&series, config.min_prominence)?
    } else {
        Vec::new()
    };
    maxima.truncate(config.max_maxima);
    Ok(PointOutcome { lyapunov, maxima, final_state: ChainState::from_flat(x)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// Position in traversal order.
    pub index: usize,
    pub value: f64,
    pub outcome: core::result::Result<PointOutcome, Error>,
}

impl SweepRecord {
    pub fn regime(&self) -> Option<Regime> {
        self.outcome.as_ref().ok().and_then(|o| o.regime())
    }

    pub fn leading(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|o| o.leading())
    }
}

/// Evaluates a single sweep grid value.
pub fn sweep_point(
    spec: &SweepSpec,
    params: &ModelParams,
    value: f64,
    initial: &ChainState,
    config: &StudyConfig,
) -> Result<PointOutcome> {
    let p = spec.parameter.apply(params, value)?;
    evaluate_point(&p, initial, config)
}

/// One-parameter sweep in the order given by `spec.direction`.
///
/// With continuation, each point starts from the final state of the previous
/// one (a failed point falls back to the fresh initial condition). Failures
/// are recorded and the sweep continues.
pub fn sweep_1d(
    spec: &SweepSpec,
    n: usize,
    params: &ModelParams,
    config: &StudyConfig,
) -> Result<Vec<SweepRecord>> {
    sweep_1d_from(spec, n, params, config, None)
}

/// As [`sweep_1d`], but a continuation sweep starts from `start` instead of
/// the fresh initial condition. Used to chain sweep segments.
pub fn sweep_1d_from(
    spec: &SweepSpec,
    n: usize,
    params: &ModelParams,
    config: &StudyConfig,
    start: Option<&ChainState>,
) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    spec.parameter.apply(params, spec.lo)?.validate(n)?;
    let fresh = spec.fresh_initial(n);
    if let Some(s) = start {
        if s.n_qubits() != n {
            return Err(Error::DimensionMismatch { expected: n, found: s.n_qubits() });
        }
    }
    let mut carried: Option<ChainState> = start.cloned();
    let mut records = Vec::with_capacity(spec.points);
    for (index, value) in spec.values().into_iter().enumerate() {
        let initial = match (&carried, spec.continuation) {
            (Some(s), true) => spec.carried_initial(index, s),
            _ => fresh.clone(),
        };
        let outcome = sweep_point(spec, params, value, &initial, config);
        carried = outcome.as_ref().ok().map(|o| o.final_state.clone());
        records.push(SweepRecord { index, value, outcome });
    }
    Ok(records)
}

/// Regime change between two consecutive successful sweep points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: Regime,
    pub to: Regime,
    /// Parameter values of the last point of `from` and the first of `to`.
    pub between: (f64, f64),
}

impl Transition {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.between.0 + self.between.1)
    }
}

/// Regime changes along a sweep, in traversal order; failed points are skipped.
pub fn transitions(records: &[SweepRecord]) -> Vec<Transition> {
    let labelled: Vec<(f64, Regime)> =
        records.iter().filter_map(|r| r.regime().map(|g| (r.value, g))).collect();
    labelled
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| Transition { from: w[0].1, to: w[1].1, between: (w[0].0, w[1].0) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Axis { lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.points)
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.points == 1 && self.lo.is_finite() {
            return Ok(());
        }
        if !(self.lo < self.hi) || self.points < 2 {
            return Err(Error::InvalidParameter(format!(
                "{name} axis needs lo < hi and at least two points"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub delta: Axis,
    pub omega: Axis,
    pub ic_seed: u64,
    pub ic_noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub classification: Classification,
    pub exponents: Vec<f64>,
    pub converged: bool,
}

impl GridCell {
    pub fn leading(&self) -> f64 {
        self.exponents[0]
    }
}

/// Regime labels over a (delta, omega) grid, stored row by row in omega.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeGrid {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    pub cells: Vec<core::result::Result<GridCell, Error>>,
}

impl RegimeGrid {
    pub fn cell(&self, i_delta: usize, i_omega: usize) -> &core::result::Result<GridCell, Error> {
        &self.cells[i_omega * self.delta.len() + i_delta]
    }

    /// Coordinates `(i_delta, i_omega)` in storage order.
    pub fn coordinates(n_delta: usize, n_omega: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..n_omega).flat_map(move |io| (0..n_delta).map(move |id| (id, io)))
    }
}

/// One cell of a regime map.
pub fn map_cell(
    params: &ModelParams,
    delta: f64,
    omega: f64,
    initial: &ChainState,
    lyapunov: &LyapunovConfig,
) -> Result<GridCell> {
    let p = SweepParameter::Omega.apply(&SweepParameter::Delta.apply(params, delta)?, omega)?;
    let l = lyapunov_spectrum(&p, initial, lyapunov)?;
    Ok(GridCell { classification: l.classification, converged: l.converged, exponents: l.exponents })
}

/// Classifies every point of a (delta, omega) grid from the same fresh initial condition.
pub fn map_2d(
    spec: &MapSpec,
    n: usize,
    params: &ModelParams,
    lyapunov: &LyapunovConfig,
) -> Result<RegimeGrid> {
    spec.delta.validate("delta")?;
    spec.omega.validate("omega")?;
    params.validate(n)?;
    let initial = ChainState::perturbed_ground(n, spec.ic_noise, spec.ic_seed);
    let (deltas, omegas) = (spec.delta.values(), spec.omega.values());
    let cells = RegimeGrid::coordinates(deltas.len(), omegas.len())
        .map(|(id, io)| map_cell(params, deltas[id], omegas[io], &initial, lyapunov))
        .collect();
    Ok(RegimeGrid { delta: deltas, omega: omegas, cells })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecord {
    pub n: usize,
    pub outcome: core::result::Result<LyapunovResult, Error>,
}

impl ScalingRecord {
    pub fn positive_count(&self, zero_tol: f64) -> Option<usize> {
        self.outcome.as_ref().ok().map(|l| l.positive_count(zero_tol))
    }
}

/// Topology of `params` resized for `n` units (square lattices get side `sqrt(n)`).
pub fn topology_for(topology: &CouplingTopology, n: usize) -> Result<CouplingTopology> {
    match topology {
        CouplingTopology::SquareLattice { .. } => {
            let side = libm::round(libm::sqrt(n as f64)) as usize;
            if side * side != n {
                return Err(Error::InvalidTopology(format!("{n} units do not form a square lattice")));
            }
            Ok(CouplingTopology::SquareLattice { side })
        }
        other => Ok(other.clone()),
    }
}

/// Spectrum for a single lattice size of a scaling study. A requested
/// exponent count larger than `3n` is capped at `3n`.
pub fn scaling_point(
    n: usize,
    params: &ModelParams,
    lyapunov: &LyapunovConfig,
    ic_seed: u64,
    ic_noise: f64,
) -> Result<LyapunovResult> {
    let mut p = params.clone();
    p.topology = topology_for(&params.topology, n)?;
    if p.delta_offsets.len() != n {
        p.delta_offsets.clear();
    }
    let mut l = lyapunov.clone();
    l.n_exponents = l.n_exponents.map(|k| k.min(3 * n));
    lyapunov_spectrum(&p, &ChainState::perturbed_ground(n, ic_noise, ic_seed), &l)
}

/// Positive-exponent count against lattice size.
pub fn scaling_study(
    n_list: &[usize],
    params: &ModelParams,
    lyapunov: &LyapunovConfig,
    ic_seed: u64,
    ic_noise: f64,
) -> Result<Vec<ScalingRecord>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) || n_list.first() == Some(&0) {
        return Err(Error::InvalidParameter("n_list must be strictly ascending and positive".into()));
    }
    Ok(n_list
        .iter()
        .map(|&n| ScalingRecord { n, outcome: scaling_point(n, params, lyapunov, ic_seed, ic_noise) })
        .collect())
}

/// Sweep of the modulation frequency or index; exponents are conditional
/// wherever the drive actually depends on time.
pub fn control_study(
    spec: &SweepSpec,
    n: usize,
    params: &ModelParams,
    config: &StudyConfig,
) -> Result<Vec<SweepRecord>> {
    if !params.drive.is_modulated() {
        return Err(Error::InvalidParameter("control study needs a modulated drive".into()));
    }
    if !matches!(spec.parameter, SweepParameter::ModFreq | SweepParameter::ModIndex) {
        return Err(Error::InvalidParameter(
            "control study sweeps mod_freq or mod_index".into(),
        ));
    }
    sweep_1d(spec, n, params, config)
}
