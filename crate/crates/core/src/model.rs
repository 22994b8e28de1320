//! Mean-field lattice of driven, damped two-level units.
//!
//! Each unit `j` carries a population inversion `w_j` and a coherence
//! `q_j = u_j + i v_j`. With `S_j = c * sum_{k ~ j} (w_k + 1)` and
//! `D_j = delta + offset_j - S_j` the equations of motion read
//!
//! ```text
//! dw_j/dt = -2 Omega v_j - (w_j + 1)
//! du_j/dt = -D_j v_j - u_j / 2
//! dv_j/dt =  D_j u_j - v_j / 2 + (Omega / 2) w_j
//! ```
//!
//! States are stored flat as `[w_1..w_N, u_1..u_N, v_1..v_N]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::{Error, Result};

/// Slack allowed on the Bloch-ball bound before a state is flagged unphysical.
pub const BLOCH_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    n: usize,
    data: Vec<f64>,
}

impl ChainState {
    /// All units in the ground state, `w = -1`, `q = 0`.
    pub fn ground(n: usize) -> Self {
        let mut data = vec![0.0; 3 * n];
        data[..n].fill(-1.0);
        ChainState { n, data }
    }

    pub fn from_components(w: &[f64], u: &[f64], v: &[f64]) -> Result<Self> {
        let n = w.len();
        if n == 0 {
            return Err(Error::InvalidState("a chain needs at least one unit".into()));
        }
        for part in [u, v] {
            if part.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: part.len() });
            }
        }
        let mut data = Vec::with_capacity(3 * n);
        data.extend_from_slice(w);
        data.extend_from_slice(u);
        data.extend_from_slice(v);
        Ok(ChainState { n, data })
    }

    /// Wraps a flat `[w | u | v]` vector.
    pub fn from_flat(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() || data.len() % 3 != 0 {
            return Err(Error::InvalidState(format!(
                "flat state length {} is not a positive multiple of 3",
                data.len()
            )));
        }
        Ok(ChainState { n: data.len() / 3, data })
    }

    /// Ground state plus small seeded noise that stays inside the Bloch ball.
    ///
    /// `u_j, v_j` are uniform in `[-noise, noise]`; `w_j` sits on the lower
    /// shell for that coherence and is lifted by a uniform `[0, noise]`.
    pub fn perturbed_ground(n: usize, noise: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = ChainState::ground(n);
        if noise <= 0.0 {
            return state;
        }
        for j in 0..n {
            let u = noise * rng.gen_range(-1.0..=1.0);
            let v = noise * rng.gen_range(-1.0..=1.0);
            let lift = noise * rng.gen_range(0.0..=1.0);
            let shell = math::sqrt((1.0 - 4.0 * (u * u + v * v)).max(0.0));
            state.data[j] = -shell + lift;
            state.data[n + j] = u;
            state.data[2 * n + j] = v;
        }
        state
    }

    /// Adds seeded uniform noise of amplitude `amplitude` to every component,
    /// pulling any unit pushed outside the Bloch ball back onto its surface.
    pub fn kicked(&self, amplitude: f64, seed: u64) -> Self {
        let mut out = self.clone();
        if amplitude <= 0.0 {
            return out;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in out.data.iter_mut() {
            *x += amplitude * rng.gen_range(-1.0..=1.0);
        }
        let n = self.n;
        for j in 0..n {
            let norm_sq = out.bloch_norm_sq(j);
            if norm_sq > 1.0 {
                let scale = 1.0 / math::sqrt(norm_sq);
                for block in 0..3 {
                    out.data[block * n + j] *= scale;
                }
            }
        }
        out
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        3 * self.n
    }

    pub fn w(&self) -> &[f64] {
        &self.data[..self.n]
    }

    pub fn u(&self) -> &[f64] {
        &self.data[self.n..2 * self.n]
    }

    pub fn v(&self) -> &[f64] {
        &self.data[2 * self.n..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `w_j^2 + 4 |q_j|^2`, which is at most one for a physical unit.
    pub fn bloch_norm_sq(&self, j: usize) -> f64 {
        let (w, u, v) = (self.w()[j], self.u()[j], self.v()[j]);
        w * w + 4.0 * (u * u + v * v)
    }

    pub fn max_bloch_norm_sq(&self) -> f64 {
        (0..self.n).map(|j| self.bloch_norm_sq(j)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies a permutation of units: unit `j` of the result is unit `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0.0; 3 * n];
        for block in 0..3 {
            for (j, &src) in perm.iter().enumerate() {
                data[block * n + j] = self.data[block * n + src];
            }
        }
        ChainState { n, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateViolation {
    Empty,
    LengthMismatch { w: usize, u: usize, v: usize },
    NonFinite { index: usize },
    OutsideBlochBall { qubit: usize, norm_sq: f64 },
}

/// Lists every broken state invariant; empty when the state is valid.
pub fn validate_state(state: &ChainState) -> Vec<StateViolation> {
    validate_components(state.w(), state.u(), state.v())
}

/// Like [`validate_state`] but on loose component slices.
pub fn validate_components(w: &[f64], u: &[f64], v: &[f64]) -> Vec<StateViolation> {
    let mut out = Vec::new();
    if w.is_empty() {
        out.push(StateViolation::Empty);
    }
    if w.len() != u.len() || w.len() != v.len() {
        out.push(StateViolation::LengthMismatch { w: w.len(), u: u.len(), v: v.len() });
        return out;
    }
    let n = w.len();
    for (block, part) in [w, u, v].into_iter().enumerate() {
        for (j, x) in part.iter().enumerate() {
            if !x.is_finite() {
                out.push(StateViolation::NonFinite { index: block * n + j });
            }
        }
    }
    for j in 0..n {
        let norm_sq = w[j] * w[j] + 4.0 * (u[j] * u[j] + v[j] * v[j]);
        if norm_sq > 1.0 + BLOCH_SLACK {
            out.push(StateViolation::OutsideBlochBall { qubit: j, norm_sq });
        }
    }
    out
}

/// Rabi drive, constant or sinusoidally modulated in amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveSpec {
    Constant { omega: f64 },
    /// `omega_m * (1 + mod_index * sin(2 pi mod_freq tau))`
    Modulated { omega_m: f64, mod_index: f64, mod_freq: f64 },
}

impl DriveSpec {
    pub fn constant(omega: f64) -> Self {
        DriveSpec::Constant { omega }
    }

    pub fn modulated(omega_m: f64, mod_index: f64, mod_freq: f64) -> Self {
        DriveSpec::Modulated { omega_m, mod_index, mod_freq }
    }

    #[inline]
    pub fn rabi(&self, tau: f64) -> f64 {
        match *self {
            DriveSpec::Constant { omega } => omega,
            DriveSpec::Modulated { omega_m, mod_index, mod_freq } => {
                omega_m * (1.0 + mod_index * math::sin(2.0 * PI * mod_freq * tau))
            }
        }
    }

    /// Baseline Rabi value (`omega` or `omega_m`).
    pub fn baseline(&self) -> f64 {
        match *self {
            DriveSpec::Constant { omega } => omega,
            DriveSpec::Modulated { omega_m, .. } => omega_m,
        }
    }

    pub fn is_modulated(&self) -> bool {
        matches!(self, DriveSpec::Modulated { .. })
    }

    /// Modulated with nonzero index and frequency, so the flow is non-autonomous.
    pub fn is_time_dependent(&self) -> bool {
        matches!(*self, DriveSpec::Modulated { mod_index, mod_freq, .. } if mod_index != 0.0 && mod_freq != 0.0)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            DriveSpec::Constant { omega } if !omega.is_finite() => {
                Err(Error::InvalidParameter("omega must be finite".into()))
            }
            DriveSpec::Modulated { omega_m, mod_index, mod_freq } => {
                if !omega_m.is_finite() {
                    return Err(Error::InvalidParameter("omega_m must be finite".into()));
                }
                if !(0.0..=1.0).contains(&mod_index) {
                    return Err(Error::InvalidParameter(format!(
                        "mod_index {mod_index} outside [0, 1]"
                    )));
                }
                if !(mod_freq >= 0.0 && mod_freq.is_finite()) {
                    return Err(Error::InvalidParameter(format!("mod_freq {mod_freq} must be >= 0")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Effective Rabi frequency at time `tau`.
pub fn effective_rabi(drive: &DriveSpec, tau: f64) -> f64 {
    drive.rabi(tau)
}

/// Symmetric 0/1 adjacency with empty diagonal, stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn from_matrix(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut neighbors = vec![Vec::new(); n];
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTopology(format!(
                    "adjacency row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (k, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 if j == k => {
                        return Err(Error::InvalidTopology(format!("self-loop at unit {j}")))
                    }
                    1 => {
                        if rows[k][j] != 1 {
                            return Err(Error::InvalidTopology(format!(
                                "adjacency is not symmetric at ({j}, {k})"
                            )));
                        }
                        neighbors[j].push(k);
                    }
                    other => {
                        return Err(Error::InvalidTopology(format!(
                            "adjacency entry ({j}, {k}) = {other} is not 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(Adjacency { neighbors })
    }

    /// Builds an adjacency from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange { index: a.max(b), len: n });
            }
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at unit {a}")));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Adjacency { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.neighbors[j]
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut m = vec![vec![0u8; n]; n];
        for (j, list) in self.neighbors.iter().enumerate() {
            for &k in list {
                m[j][k] = 1;
            }
        }
        m
    }
}

/// Which units enter each unit's interaction sum.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CouplingTopology {
    /// Every pair interacts.
    #[default]
    AllToAll,
    /// Nearest neighbours on a closed chain.
    Ring,
    /// Nearest neighbours on a chain with free ends.
    OpenChain,
    /// Nearest neighbours on an `side x side` open grid, row-major numbering.
    SquareLattice { side: usize },
    Custom(Adjacency),
}

impl CouplingTopology {
    /// Materializes the topology for `n` units.
    pub fn graph(&self, n: usize) -> Result<CouplingGraph> {
        if n == 0 {
            return Err(Error::InvalidTopology("a chain needs at least one unit".into()));
        }
        let lists = |edges: Vec<(usize, usize)>| -> Result<CouplingGraph> {
            Ok(CouplingGraph::Sparse(Adjacency::from_edges(n, &edges)?))
        };
        match self {
            CouplingTopology::AllToAll => Ok(CouplingGraph::Complete { n }),
            CouplingTopology::Ring => {
                let edges = (0..n).map(|j| (j, (j + 1) % n)).filter(|(a, b)| a != b).collect();
                lists(edges)
            }
            CouplingTopology::OpenChain => lists((1..n).map(|j| (j - 1, j)).collect()),
            CouplingTopology::SquareLattice { side } => {
                let side = *side;
                if side * side != n {
                    return Err(Error::InvalidTopology(format!(
                        "square lattice of side {side} needs {} units, got {n}",
                        side * side
                    )));
                }
                let mut edges = Vec::new();
                for r in 0..side {
                    for col in 0..side {
                        let j = r * side + col;
                        if col + 1 < side {
                            edges.push((j, j + 1));
                        }
                        if r + 1 < side {
                            edges.push((j, j + side));
                        }
                    }
                }
                lists(edges)
            }
            CouplingTopology::Custom(adj) => {
                if adj.len() != n {
                    return Err(Error::InvalidTopology(format!(
                        "custom adjacency has {} units, chain has {n}",
                        adj.len()
                    )));
                }
                Ok(CouplingGraph::Sparse(adj.clone()))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CouplingTopology::AllToAll => "all-to-all",
            CouplingTopology::Ring => "ring",
            CouplingTopology::OpenChain => "open-chain",
            CouplingTopology::SquareLattice { .. } => "square-lattice",
            CouplingTopology::Custom(_) => "custom",
        }
    }
}

/// A materialized topology. The complete graph is kept implicit.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingGraph {
    Complete { n: usize },
    Sparse(Adjacency),
}

impl CouplingGraph {
    pub fn len(&self) -> usize {
        match self {
            CouplingGraph::Complete { n } => *n,
            CouplingGraph::Sparse(adj) => adj.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_edge(&self, j: usize, k: usize) -> bool {
        match self {
            CouplingGraph::Complete { .. } => j != k,
            CouplingGraph::Sparse(adj) => adj.neighbors(j).binary_search(&k).is_ok(),
        }
    }

    /// Sum of `x_k` over the neighbours `k` of `j`, given `total = sum_k x_k`
    /// (only used by the complete graph).
    #[inline]
    fn neighbor_sum(&self, x: &[f64], total: f64, j: usize) -> f64 {
        match self {
            CouplingGraph::Complete { .. } => total - x[j],
            CouplingGraph::Sparse(adj) => adj.neighbors[j].iter().map(|&k| x[k]).sum(),
        }
    }

    fn needs_total(&self) -> bool {
        matches!(self, CouplingGraph::Complete { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Detuning in units of the decay rate.
    pub delta: f64,
    pub drive: DriveSpec,
    /// Interaction strength `c`.
    pub coupling: f64,
    /// Per-unit detuning disorder; empty means all zero.
    pub delta_offsets: Vec<f64>,
    pub topology: CouplingTopology,
}

impl ModelParams {
    pub fn new(delta: f64, omega: f64, coupling: f64) -> Self {
        ModelParams {
            delta,
            drive: DriveSpec::constant(omega),
            coupling,
            delta_offsets: Vec::new(),
            topology: CouplingTopology::AllToAll,
        }
    }

    pub fn with_topology(mut self, topology: CouplingTopology) -> Self {
        self.topology = topology;
        self
    }

    pub fn with_drive(mut self, drive: DriveSpec) -> Self {
        self.drive = drive;
        self
    }

    /// Uniform disorder in `[-sigma, sigma]` drawn from `seed`.
    pub fn with_uniform_disorder(mut self, n: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.delta_offsets = (0..n).map(|_| sigma * rng.gen_range(-1.0..=1.0)).collect();
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidParameter("coupling must be finite".into()));
        }
        self.drive.validate()?;
        if !self.delta_offsets.is_empty() && self.delta_offsets.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.delta_offsets.len() });
        }
        if self.delta_offsets.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("delta offsets must be finite".into()));
        }
        Ok(())
    }
}

/// Interaction shift `c * sum_{k ~ j} (w_k + 1)` felt by unit `j`.
pub fn coupling_field(
    state: &ChainState,
    topology: &CouplingTopology,
    c: f64,
    j: usize,
) -> Result<f64> {
    let n = state.n_qubits();
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    let graph = topology.graph(n)?;
    let excitation: Vec<f64> = state.w().iter().map(|w| w + 1.0).collect();
    let total = excitation.iter().sum();
    Ok(c * graph.neighbor_sum(&excitation, total, j))
}

/// Vector field of a lattice of fixed size with its topology materialized.
#[derive(Debug, Clone)]
pub struct MeanFieldModel {
    n: usize,
    graph: CouplingGraph,
    detuning: Vec<f64>,
    coupling: f64,
    drive: DriveSpec,
}

impl MeanFieldModel {
    pub fn new(n: usize, params: &ModelParams) -> Result<Self> {
        params.validate(n)?;
        let graph = params.topology.graph(n)?;
        let detuning = (0..n)
            .map(|j| params.delta + params.delta_offsets.get(j).copied().unwrap_or(0.0))
            .collect();
        Ok(MeanFieldModel { n, graph, detuning, coupling: params.coupling, drive: params.drive })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        3 * self.n
    }

    pub fn graph(&self) -> &CouplingGraph {
        &self.graph
    }

    pub fn drive(&self) -> &DriveSpec {
        &self.drive
    }

    /// Writes `D_j = delta_j - S_j` for the inversions `w` into `out`.
    #[inline]
    pub fn local_detuning(&self, w: &[f64], out: &mut [f64]) {
        let n = self.n;
        let c = self.coupling;
        match &self.graph {
            CouplingGraph::Complete { .. } => {
                let total: f64 = w.iter().map(|x| x + 1.0).sum();
                for j in 0..n {
                    out[j] = self.detuning[j] - c * (total - (w[j] + 1.0));
                }
            }
            CouplingGraph::Sparse(adj) => {
                for j in 0..n {
                    let s: f64 = adj.neighbors[j].iter().map(|&k| w[k] + 1.0).sum();
                    out[j] = self.detuning[j] - c * s;
                }
            }
        }
    }

    /// Time derivative of the flat state `x` at `tau`, given `D_j` already in `det`.
    #[inline]
    pub fn rhs_with_detuning(&self, tau: f64, x: &[f64], det: &[f64], out: &mut [f64]) {
        let n = self.n;
        let omega = self.drive.rabi(tau);
        let (w, rest) = x.split_at(n);
        let (u, v) = rest.split_at(n);
        let (dw, rest) = out.split_at_mut(n);
        let (du, dv) = rest.split_at_mut(n);
        for j in 0..n {
            dw[j] = -2.0 * omega * v[j] - (w[j] + 1.0);
            du[j] = -det[j] * v[j] - 0.5 * u[j];
            dv[j] = det[j] * u[j] - 0.5 * v[j] + 0.5 * omega * w[j];
        }
    }

    /// Time derivative of the flat state `x`; `scratch` must hold `n` values.
    pub fn rhs_into(&self, tau: f64, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.local_detuning(&x[..self.n], scratch);
        self.rhs_with_detuning(tau, x, scratch, out);
    }

    pub fn rhs(&self, state: &ChainState, tau: f64) -> Vec<f64> {
        let mut scratch = vec![0.0; self.n];
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(tau, state.as_slice(), &mut scratch, &mut out);
        out
    }

    /// Jacobian-vector product `J(x, tau) dx`, given `D_j` at `x` in `det`.
    #[inline]
    pub fn tangent_apply(&self, tau: f64, x: &[f64], det: &[f64], dx: &[f64], out: &mut [f64]) {
        let n = self.n;
        let c = self.coupling;
        let omega = self.drive.rabi(tau);
        let (u, v) = x[n..].split_at(n);
        let (dw, rest) = dx.split_at(n);
        let (du, dv) = rest.split_at(n);
        let (ow, rest) = out.split_at_mut(n);
        let (ou, ov) = rest.split_at_mut(n);
        let total = if self.graph.needs_total() { dw.iter().sum() } else { 0.0 };
        for j in 0..n {
            let field = c * self.graph.neighbor_sum(dw, total, j);
            ow[j] = -dw[j] - 2.0 * omega * dv[j];
            ou[j] = -det[j] * dv[j] - 0.5 * du[j] + v[j] * field;
            ov[j] = det[j] * du[j] - 0.5 * dv[j] + 0.5 * omega * dw[j] - u[j] * field;
        }
    }

    /// Dense analytic Jacobian, row-major `3N x 3N`.
    pub fn jacobian(&self, state: &ChainState, tau: f64) -> Matrix {
        let n = self.n;
        let dim = self.dim();
        let c = self.coupling;
        let omega = self.drive.rabi(tau);
        let mut det = vec![0.0; n];
        self.local_detuning(state.w(), &mut det);
        let (u, v) = (state.u(), state.v());
        let mut jac = Matrix::zeros(dim, dim);
        let (iw, iu, iv) = (|j| j, |j| n + j, |j| 2 * n + j);
        for j in 0..n {
            jac[(iw(j), iw(j))] = -1.0;
            jac[(iw(j), iv(j))] = -2.0 * omega;
            jac[(iu(j), iu(j))] = -0.5;
            jac[(iu(j), iv(j))] = -det[j];
            jac[(iv(j), iu(j))] = det[j];
            jac[(iv(j), iv(j))] = -0.5;
            jac[(iv(j), iw(j))] = 0.5 * omega;
            for k in 0..n {
                if self.graph.has_edge(j, k) {
                    jac[(iu(j), iw(k))] = c * v[j];
                    jac[(iv(j), iw(k))] = -c * u[j];
                }
            }
        }
        jac
    }
}

/// Time derivative of `state` under `params`.
pub fn rhs(state: &ChainState, params: &ModelParams, tau: f64) -> Result<Vec<f64>> {
    let model = MeanFieldModel::new(state.n_qubits(), params)?;
    Ok(model.rhs(state, tau))
}

/// Analytic Jacobian of [`rhs`].
pub fn jacobian(state: &ChainState, params: &ModelParams, tau: f64) -> Result<Matrix> {
    let model = MeanFieldModel::new(state.n_qubits(), params)?;
    Ok(model.jacobian(state, tau))
}

/// Small dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn constant_drive_ignores_time() {
        assert_eq!(effective_rabi(&DriveSpec::constant(2.5), 7.3), 2.5);
    }

    #[test]
    fn modulated_drive_values() {
        let d = DriveSpec::modulated(2.5, 0.684, 1.0);
        assert_eq!(d.rabi(0.0), 2.5);
        assert!(close(d.rabi(0.25), 4.21, 1e-12));
    }

    #[test]
    fn zero_index_modulation_is_constant() {
        let m = DriveSpec::modulated(2.5, 0.0, 0.37);
        let c = DriveSpec::constant(2.5);
        for i in 0..100 {
            let t = i as f64 * 0.173;
            assert_eq!(m.rabi(t).to_bits(), c.rabi(t).to_bits());
        }
    }

    #[test]
    fn coupling_field_ground_state_vanishes() {
        let s = ChainState::ground(6);
        for topo in [CouplingTopology::AllToAll, CouplingTopology::Ring, CouplingTopology::OpenChain] {
            for j in 0..6 {
                assert_eq!(coupling_field(&s, &topo, 3.7, j).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn coupling_field_hand_values() {
        let s = ChainState::from_components(&[-1.0, 0.0, 0.5], &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(close(coupling_field(&s, &CouplingTopology::AllToAll, 5.0, 0).unwrap(), 12.5, 1e-12));
        let s = ChainState::from_components(&[0.0; 4], &[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(coupling_field(&s, &CouplingTopology::Ring, 1.0, 0).unwrap(), 2.0);
    }

    #[test]
    fn coupling_field_index_out_of_range() {
        let s = ChainState::ground(3);
        assert_eq!(
            coupling_field(&s, &CouplingTopology::Ring, 1.0, 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        );
    }

    #[test]
    fn ground_state_derivative() {
        let p = ModelParams::new(1.3, 2.0, 5.0).with_topology(CouplingTopology::Ring);
        let d = rhs(&ChainState::ground(4), &p, 0.0).unwrap();
        assert!(d[..8].iter().all(|&x| x == 0.0));
        assert!(d[8..].iter().all(|&x| x == -1.0));
    }

    #[test]
    fn single_unit_fixed_point() {
        let s = ChainState::from_components(&[-1.0 / 3.0], &[0.0], &[-1.0 / 3.0]).unwrap();
        let d = rhs(&s, &ModelParams::new(0.0, 1.0, 5.0), 0.0).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-15), "{d:?}");
    }

    #[test]
    fn undriven_decay() {
        let s = ChainState::from_components(&[0.3, -0.2], &[0.1, 0.2], &[0.05, -0.1]).unwrap();
        let d = rhs(&s, &ModelParams::new(0.7, 0.0, 2.0), 1.0).unwrap();
        assert!(close(d[0], -1.3, 1e-15));
        assert!(close(d[1], -0.8, 1e-15));
    }

    #[test]
    fn undriven_single_unit_eigenvalues() {
        // block [[-1,0,0],[0,-1/2,-D],[0,D,-1/2]]: eigenvalues -1, -1/2 +- iD
        let p = ModelParams::new(0.8, 0.0, 0.0);
        let s = ChainState::from_components(&[0.1], &[0.2], &[0.3]).unwrap();
        let j = jacobian(&s, &p, 0.0).unwrap();
        assert_eq!(j[(0, 0)], -1.0);
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(j[(0, 2)], 0.0);
        assert_eq!(j[(1, 1)], -0.5);
        assert_eq!(j[(2, 2)], -0.5);
        assert_eq!(j[(1, 2)], -j[(2, 1)]);
    }

    #[test]
    fn square_lattice_edges() {
        let g = CouplingTopology::SquareLattice { side: 3 }.graph(9).unwrap();
        assert!(g.has_edge(4, 1) && g.has_edge(4, 3) && g.has_edge(4, 5) && g.has_edge(4, 7));
        assert!(!g.has_edge(2, 3));
        assert!(CouplingTopology::SquareLattice { side: 3 }.graph(8).is_err());
    }

    #[test]
    fn ring_degenerate_sizes() {
        let g = CouplingTopology::Ring.graph(1).unwrap();
        assert!(!g.has_edge(0, 0));
        let g = CouplingTopology::Ring.graph(2).unwrap();
        assert!(g.has_edge(0, 1));
        match g {
            CouplingGraph::Sparse(adj) => assert_eq!(adj.neighbors(0), &[1]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn custom_adjacency_rejects_asymmetry() {
        assert!(Adjacency::from_matrix(&[vec![0, 1], vec![0, 0]]).is_err());
        assert!(Adjacency::from_matrix(&[vec![1, 0], vec![0, 0]]).is_err());
        let a = Adjacency::from_matrix(&[vec![0, 1, 1], vec![1, 0, 0], vec![1, 0, 0]]).unwrap();
        assert_eq!(a.to_matrix()[0], vec![0, 1, 1]);
    }

    #[test]
    fn validation_flags_violations() {
        assert!(validate_state(&ChainState::ground(3)).is_empty());
        let s = ChainState::from_components(&[0.9, f64::NAN], &[0.3, 0.0], &[0.0, 0.0]).unwrap();
        let v = validate_state(&s);
        assert!(v.contains(&StateViolation::NonFinite { index: 1 }));
        assert!(v.iter().any(|x| matches!(x, StateViolation::OutsideBlochBall { qubit: 0, .. })));
        assert!(matches!(
            validate_components(&[0.0], &[0.0, 0.0], &[0.0])[0],
            StateViolation::LengthMismatch { .. }
        ));
    }

    #[test]
    fn perturbed_ground_is_physical() {
        for seed in 0..20 {
            let s = ChainState::perturbed_ground(7, 1e-3, seed);
            assert!(validate_state(&s).is_empty());
            assert!(s.w().iter().all(|w| (w + 1.0).abs() < 2e-3));
        }
    }

    #[test]
    fn kick_keeps_state_physical() {
        let s = ChainState::ground(5).kicked(1e-8, 11);
        assert!(validate_state(&s).is_empty());
        assert_ne!(s, ChainState::ground(5));
        assert_eq!(ChainState::ground(2).kicked(0.0, 1), ChainState::ground(2));
    }

    #[test]
    fn params_reject_bad_offsets() {
        let mut p = ModelParams::new(1.0, 1.0, 1.0);
        p.delta_offsets = alloc::vec![0.0; 2];
        assert!(MeanFieldModel::new(3, &p).is_err());
        let p = ModelParams::new(1.0, 1.0, 1.0).with_drive(DriveSpec::modulated(1.0, 1.5, 1.0));
        assert!(MeanFieldModel::new(3, &p).is_err());
    }

    fn arb_topology() -> impl Strategy<Value = (usize, CouplingTopology)> {
        prop_oneof![
            (1usize..8).prop_map(|n| (n, CouplingTopology::AllToAll)),
            (1usize..8).prop_map(|n| (n, CouplingTopology::Ring)),
            (1usize..8).prop_map(|n| (n, CouplingTopology::OpenChain)),
            (1usize..4).prop_map(|s| (s * s, CouplingTopology::SquareLattice { side: s })),
        ]
    }

    fn state_from(n: usize, raw: &[f64]) -> ChainState {
        // raw is at least 3 * n values in [-1, 1]; squeeze into the Bloch ball
        let mut data = raw[..3 * n].to_vec();
        for j in 0..n {
            data[n + j] *= 0.35;
            data[2 * n + j] *= 0.35;
        }
        ChainState::from_flat(data).unwrap()
    }

    proptest! {
        #[test]
        fn jacobian_trace_is_minus_two_n(
            (n, topo) in arb_topology(),
            raw in proptest::collection::vec(-1.0f64..1.0, 27),
            delta in -8.0f64..8.0, omega in 0.0f64..4.0, c in 0.0f64..6.0, tau in 0.0f64..10.0,
        ) {
            let p = ModelParams::new(delta, omega, c).with_topology(topo);
            let j = jacobian(&state_from(n, &raw), &p, tau).unwrap();
            prop_assert_eq!(j.trace(), -2.0 * n as f64);
        }

        #[test]
        fn tangent_apply_matches_dense_jacobian(
            (n, topo) in arb_topology(),
            raw in proptest::collection::vec(-1.0f64..1.0, 27),
            dx in proptest::collection::vec(-1.0f64..1.0, 27),
            delta in -8.0f64..8.0, omega in 0.0f64..4.0, c in 0.0f64..6.0,
        ) {
            let p = ModelParams::new(delta, omega, c).with_topology(topo)
                .with_drive(DriveSpec::modulated(omega, 0.5, 0.7));
            let model = MeanFieldModel::new(n, &p).unwrap();
            let s = state_from(n, &raw);
            let dense = model.jacobian(&s, 0.9).mul_vec(&dx[..3 * n]);
            let mut det = alloc::vec![0.0; n];
            model.local_detuning(s.w(), &mut det);
            let mut fast = alloc::vec![0.0; 3 * n];
            model.tangent_apply(0.9, s.as_slice(), &det, &dx[..3 * n], &mut fast);
            for (a, b) in dense.iter().zip(&fast) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn ring_and_all_to_all_are_equivariant(
            n in 2usize..8, shift in 0usize..8,
            raw in proptest::collection::vec(-1.0f64..1.0, 24),
            delta in -8.0f64..8.0, omega in 0.0f64..4.0, c in 0.0f64..6.0,
        ) {
            let s = state_from(n, &raw);
            let perm: Vec<usize> = (0..n).map(|j| (j + shift) % n).collect();
            for topo in [CouplingTopology::Ring, CouplingTopology::AllToAll] {
                let p = ModelParams::new(delta, omega, c).with_topology(topo);
                let lhs = rhs(&s.permuted(&perm), &p, 0.0).unwrap();
                let r = ChainState::from_flat(rhs(&s, &p, 0.0).unwrap()).unwrap().permuted(&perm);
                for (a, b) in lhs.iter().zip(r.as_slice()) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }
    }
}
