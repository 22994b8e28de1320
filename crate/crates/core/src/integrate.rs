//! Explicit Runge–Kutta stepping for the lattice and its variational equations.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{ChainState, MeanFieldModel, ModelParams};
use crate::{Error, Result};

/// A first-order ODE system `dy/dtau = f(tau, y)` of fixed dimension.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&mut self, tau: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    FixedRk4,
    /// Dormand–Prince 5(4) with error control.
    AdaptiveRk45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step of the fixed scheme and initial trial step of the adaptive one.
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::FixedRk4,
            dt: 1e-2,
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: 0.1,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(dt: f64) -> Self {
        IntegratorConfig { dt, ..Default::default() }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig { method: Method::AdaptiveRk45, rel_tol, abs_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.dt) {
            return Err(Error::InvalidParameter("integrator dt must be > 0".into()));
        }
        if self.method == Method::AdaptiveRk45
            && !(positive(self.rel_tol) && positive(self.abs_tol) && positive(self.max_step))
        {
            return Err(Error::InvalidParameter(
                "adaptive tolerances and max_step must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// The lattice flow as an [`OdeSystem`].
#[derive(Debug, Clone)]
pub struct Flow {
    model: MeanFieldModel,
    detuning: Vec<f64>,
}

impl Flow {
    pub fn new(model: MeanFieldModel) -> Self {
        let n = model.n_qubits();
        Flow { model, detuning: vec![0.0; n] }
    }

    pub fn model(&self) -> &MeanFieldModel {
        &self.model
    }
}

impl OdeSystem for Flow {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[inline]
    fn eval(&mut self, tau: f64, y: &[f64], dy: &mut [f64]) {
        self.model.rhs_into(tau, y, &mut self.detuning, dy);
    }
}

/// The lattice flow together with `k` copies of its variational equation.
///
/// Layout: `[x, d_1, ..., d_k]`, each block of length `3N`.
#[derive(Debug, Clone)]
pub struct TangentFlow {
    model: MeanFieldModel,
    vectors: usize,
    detuning: Vec<f64>,
}

impl TangentFlow {
    pub fn new(model: MeanFieldModel, vectors: usize) -> Self {
        let n = model.n_qubits();
        TangentFlow { model, vectors, detuning: vec![0.0; n] }
    }

    pub fn vectors(&self) -> usize {
        self.vectors
    }
}

impl OdeSystem for TangentFlow {
    fn dim(&self) -> usize {
        self.model.dim() * (1 + self.vectors)
    }

    #[inline]
    fn eval(&mut self, tau: f64, y: &[f64], dy: &mut [f64]) {
        let d = self.model.dim();
        let (x, tangents) = y.split_at(d);
        let (dx, dtangents) = dy.split_at_mut(d);
        self.model.local_detuning(&x[..self.model.n_qubits()], &mut self.detuning);
        self.model.rhs_with_detuning(tau, x, &self.detuning, dx);
        for (t, dt) in tangents.chunks_exact(d).zip(dtangents.chunks_exact_mut(d)) {
            self.model.tangent_apply(tau, x, &self.detuning, t, dt);
        }
    }
}

// Dormand–Prince 5(4) tableau. The last row of A doubles as the 5th-order weights.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Owns an [`OdeSystem`] plus the stage buffers of the chosen scheme.
#[derive(Debug, Clone)]
pub struct Integrator<S> {
    system: S,
    config: IntegratorConfig,
    stages: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    /// Step proposal carried between adaptive calls.
    h_next: f64,
}

impl<S: OdeSystem> Integrator<S> {
    pub fn new(system: S, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        let dim = system.dim();
        let n_stages = match config.method {
            Method::FixedRk4 => 4,
            Method::AdaptiveRk45 => 7,
        };
        Ok(Integrator {
            system,
            config,
            stages: vec![vec![0.0; dim]; n_stages],
            scratch: vec![0.0; dim],
            h_next: config.dt,
        })
    }

    pub fn system(&self) -> &S {
        &self.system
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    /// One classical RK4 step of size `h`.
    pub fn rk4_step(&mut self, tau: f64, y: &mut [f64], h: f64) {
        let [k1, k2, k3, k4] = &mut self.stages[..] else {
            unreachable!("rk4 needs four stage buffers")
        };
        let tmp = &mut self.scratch;
        self.system.eval(tau, y, k1);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        self.system.eval(tau + 0.5 * h, tmp, k2);
        for i in 0..y.len() {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        self.system.eval(tau + 0.5 * h, tmp, k3);
        for i in 0..y.len() {
            tmp[i] = y[i] + h * k3[i];
        }
        self.system.eval(tau + h, tmp, k4);
        let h6 = h / 6.0;
        for i in 0..y.len() {
            y[i] += h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Attempts one Dormand–Prince step of size `h`; on acceptance `y` is
    /// updated and the scaled error norm (<= 1) is returned.
    fn dp_attempt(&mut self, tau: f64, y: &mut [f64], h: f64) -> (bool, f64) {
        let dim = y.len();
        for s in 0..7 {
            for i in 0..dim {
                let mut acc = y[i];
                for (r, a) in DP_A[s][..s].iter().enumerate() {
                    acc += h * a * self.stages[r][i];
                }
                self.scratch[i] = acc;
            }
            self.system.eval(tau + DP_C[s] * h, &self.scratch, &mut self.stages[s]);
        }
        // scratch holds the 5th-order solution (row 7 of A equals B)
        let mut err_sq = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for s in 0..7 {
                e += DP_E[s] * self.stages[s][i];
            }
            let scale = self.config.abs_tol + self.config.rel_tol * y[i].abs().max(self.scratch[i].abs());
            let r = h * e / scale;
            err_sq += r * r;
        }
        let err = crate::math::sqrt(err_sq / dim as f64);
        let ok = err <= 1.0 && self.scratch.iter().all(|x| x.is_finite());
        if ok {
            y.copy_from_slice(&self.scratch);
        }
        (ok, err)
    }

    /// Advances `y` from `*tau` to `tau_end`, calling `observer` after each
    /// accepted step. A zero-length span leaves `y` untouched.
    pub fn advance<F>(&mut self, tau: &mut f64, y: &mut [f64], tau_end: f64, mut observer: F) -> Result<()>
    where
        F: FnMut(f64, &[f64]),
    {
        let span = tau_end - *tau;
        if span <= 0.0 {
            return Ok(());
        }
        match self.config.method {
            Method::FixedRk4 => {
                let steps = libm::ceil(span / self.config.dt - 1e-9).max(1.0) as u64;
                let h = span / steps as f64;
                let tau0 = *tau;
                for i in 0..steps {
                    let t = tau0 + i as f64 * h;
                    self.rk4_step(t, y, h);
                    let t_new = if i + 1 == steps { tau_end } else { tau0 + (i + 1) as f64 * h };
                    if !y.iter().all(|x| x.is_finite()) {
                        *tau = t_new;
                        return Err(Error::NonFinite { tau: t_new });
                    }
                    observer(t_new, y);
                }
                *tau = tau_end;
            }
            Method::AdaptiveRk45 => {
                let h_min = 1e-12 * (1.0f64).max(tau_end.abs());
                let mut h = self.h_next.min(self.config.max_step);
                while *tau < tau_end {
                    let remaining = tau_end - *tau;
                    let last = h >= remaining;
                    let step = if last { remaining } else { h };
                    let (ok, err) = self.dp_attempt(*tau, y, step);
                    let factor = if err == 0.0 {
                        5.0
                    } else if err.is_finite() {
                        (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0)
                    } else {
                        0.2
                    };
                    if ok {
                        *tau = if last { tau_end } else { *tau + step };
                        observer(*tau, y);
                        if !last || factor < 1.0 {
                            h = (step * factor).min(self.config.max_step);
                        }
                    } else {
                        h = step * factor;
                        if h < h_min {
                            return Err(Error::StepSizeUnderflow { tau: *tau, step: h });
                        }
                    }
                }
                self.h_next = h;
            }
        }
        Ok(())
    }
}

/// Vectors in the tangent space of a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentBundle {
    pub base: ChainState,
    pub vectors: Vec<Vec<f64>>,
}

impl TangentBundle {
    pub fn new(base: ChainState, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidParameter("a tangent bundle needs at least one vector".into()));
        }
        if vectors.len() > base.dim() {
            return Err(Error::InvalidParameter("more tangent vectors than dimensions".into()));
        }
        for v in &vectors {
            if v.len() != base.dim() {
                return Err(Error::DimensionMismatch { expected: base.dim(), found: v.len() });
            }
        }
        Ok(TangentBundle { base, vectors })
    }

    /// Packs into the `[x, d_1, ..., d_k]` layout of [`TangentFlow`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.base.dim() * (1 + self.vectors.len()));
        out.extend_from_slice(self.base.as_slice());
        for v in &self.vectors {
            out.extend_from_slice(v);
        }
        out
    }

    fn from_flat(flat: Vec<f64>, dim: usize) -> Result<Self> {
        let base = ChainState::from_flat(flat[..dim].to_vec())?;
        let vectors = flat[dim..].chunks_exact(dim).map(|c| c.to_vec()).collect();
        Ok(TangentBundle { base, vectors })
    }
}

/// One step of the configured scheme from `(state, tau)`.
pub fn step(
    state: &ChainState,
    params: &ModelParams,
    tau: f64,
    config: &IntegratorConfig,
) -> Result<(ChainState, f64)> {
    let model = MeanFieldModel::new(state.n_qubits(), params)?;
    let mut integ = Integrator::new(Flow::new(model), *config)?;
    let mut y = state.as_slice().to_vec();
    let t_end = match config.method {
        Method::FixedRk4 => tau + config.dt,
        Method::AdaptiveRk45 => {
            // a single accepted step of whatever size the controller settles on
            let mut t = tau;
            let mut accepted = None;
            let mut h = config.dt.min(config.max_step);
            while accepted.is_none() {
                let (ok, err) = integ.dp_attempt(t, &mut y, h);
                if ok {
                    t += h;
                    accepted = Some(t);
                } else {
                    h *= (0.9 * libm::pow(err, -0.2)).clamp(0.2, 1.0);
                    if !(h >= 1e-12 * (1.0f64).max(tau.abs())) {
                        return Err(Error::StepSizeUnderflow { tau, step: h });
                    }
                }
            }
            return Ok((ChainState::from_flat(y)?, t));
        }
    };
    let mut t = tau;
    integ.advance(&mut t, &mut y, t_end, |_, _| {})?;
    Ok((ChainState::from_flat(y)?, t))
}

/// Integrates `state` over `[tau_span.0, tau_span.1]`, reporting every accepted step.
pub fn integrate<F>(
    state: &ChainState,
    params: &ModelParams,
    tau_span: (f64, f64),
    config: &IntegratorConfig,
    observer: F,
) -> Result<ChainState>
where
    F: FnMut(f64, &[f64]),
{
    let (t0, t1) = tau_span;
    if !(t1 >= t0) {
        return Err(Error::InvalidParameter("integration span must satisfy t1 >= t0".into()));
    }
    let model = MeanFieldModel::new(state.n_qubits(), params)?;
    let mut integ = Integrator::new(Flow::new(model), *config)?;
    let mut y = state.as_slice().to_vec();
    let mut t = t0;
    integ.advance(&mut t, &mut y, t1, observer)?;
    ChainState::from_flat(y)
}

/// Propagates the base point and its tangent vectors jointly over `tau_span`.
pub fn integrate_with_tangents(
    bundle: &TangentBundle,
    params: &ModelParams,
    tau_span: (f64, f64),
    config: &IntegratorConfig,
) -> Result<TangentBundle> {
    let dim = bundle.base.dim();
    let model = MeanFieldModel::new(bundle.base.n_qubits(), params)?;
    let mut integ = Integrator::new(TangentFlow::new(model, bundle.vectors.len()), *config)?;
    let mut y = bundle.to_flat();
    let mut t = tau_span.0;
    integ.advance(&mut t, &mut y, tau_span.1, |_, _| {})?;
    TangentBundle::from_flat(y, dim)
}
