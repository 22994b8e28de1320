//! Lyapunov spectra by tangent propagation with periodic Gram–Schmidt
//! re-orthonormalization, and regime classification from the spectrum.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::integrate::{Flow, IntegratorConfig, Integrator, TangentFlow};
use crate::math;
use crate::model::{ChainState, MeanFieldModel, ModelParams};
use crate::{Error, Result};

/// Residual-to-input norm ratio below which a vector counts as dependent.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Orthonormalized {
    /// Lengths of the residuals before normalization.
    pub norms: Vec<f64>,
    /// Indices of vectors that were dependent and got replaced.
    pub reseeded: Vec<usize>,
}

/// In-place modified Gram–Schmidt with one re-orthogonalization pass on
/// `k = buf.len() / dim` vectors stored back to back.
///
/// Dependent vectors (residual below [`RANK_TOL`] of their input length) are
/// replaced with a random direction orthogonal to the earlier ones; their
/// reported norm is the tiny residual that was measured.
pub fn orthonormalize(buf: &mut [f64], dim: usize, rng: &mut impl Rng) -> Orthonormalized {
    let k = buf.len() / dim;
    let mut norms = Vec::with_capacity(k);
    let mut reseeded = Vec::new();
    for i in 0..k {
        let (done, rest) = buf.split_at_mut(i * dim);
        let v = &mut rest[..dim];
        let input = norm(v);
        project_out(done, dim, v);
        project_out(done, dim, v);
        let mut r = norm(v);
        if !(r > RANK_TOL * input) || r == 0.0 {
            norms.push(r.max(f64::MIN_POSITIVE));
            reseeded.push(i);
            loop {
                for x in v.iter_mut() {
                    *x = rng.gen_range(-1.0..1.0);
                }
                let fresh = norm(v);
                project_out(done, dim, v);
                project_out(done, dim, v);
                r = norm(v);
                if r > 1e-6 * fresh {
                    break;
                }
            }
        } else {
            norms.push(r);
        }
        let inv = 1.0 / r;
        v.iter_mut().for_each(|x| *x *= inv);
    }
    Orthonormalized { norms, reseeded }
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

fn project_out(basis: &[f64], dim: usize, v: &mut [f64]) {
    for q in basis.chunks_exact(dim) {
        let dot: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(q).for_each(|(x, qi)| *x -= dot * qi);
    }
}

/// Orthonormalizes `vectors`, keeping the flag of spans. Returns the
/// orthonormal set and the residual norms.
pub fn gram_schmidt(vectors: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Orthonormalized)> {
    let dim = match vectors.first() {
        Some(v) => v.len(),
        None => return Ok((Vec::new(), Orthonormalized { norms: Vec::new(), reseeded: Vec::new() })),
    };
    if vectors.len() > dim {
        return Err(Error::InvalidParameter("more vectors than dimensions".into()));
    }
    let mut buf = Vec::with_capacity(dim * vectors.len());
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
        }
        buf.extend_from_slice(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a09_e667);
    let report = orthonormalize(&mut buf, dim, &mut rng);
    Ok((buf.chunks_exact(dim).map(|c| c.to_vec()).collect(), report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    FixedPoint,
    Periodic,
    Quasiperiodic,
    Chaos,
    /// Number of positive exponents, at least two.
    Hyperchaos(usize),
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::FixedPoint => "fixed-point",
            Regime::Periodic => "periodic",
            Regime::Quasiperiodic => "quasiperiodic",
            Regime::Chaos => "chaos",
            Regime::Hyperchaos(_) => "hyperchaos",
        }
    }

    pub fn positive_count(&self) -> usize {
        match self {
            Regime::Chaos => 1,
            Regime::Hyperchaos(m) => *m,
            _ => 0,
        }
    }

    pub fn is_chaotic(&self) -> bool {
        self.positive_count() > 0
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Hyperchaos(m) => write!(f, "hyperchaos({m})"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub regime: Regime,
    /// Some exponent sits close to the edge of the zero band.
    pub uncertain: bool,
}

/// Number of exponents above `zero_tol`.
pub fn count_positive(spectrum: &[f64], zero_tol: f64) -> usize {
    spectrum.iter().filter(|&&l| l > zero_tol).count()
}

/// Labels a spectrum.
///
/// Exponents above `zero_tol` count as positive, those within the band as
/// zero. An autonomous flow carries one zero exponent along the trajectory,
/// so no zeros means a fixed point, one a limit cycle and two or more a torus.
/// With external driving (`autonomous = false`) that zero is absent and the
/// labels shift by one: no zeros is an entrained periodic orbit.
///
/// The result is flagged uncertain when any exponent lies within
/// `[zero_tol / 2, 3 zero_tol / 2]` in magnitude.
pub fn classify_regime(spectrum: &[f64], zero_tol: f64, autonomous: bool) -> Classification {
    let positive = count_positive(spectrum, zero_tol);
    let zeros = spectrum.iter().filter(|l| l.abs() <= zero_tol).count();
    let regime = match positive {
        0 => match (autonomous, zeros) {
            (true, 0) => Regime::FixedPoint,
            (true, 1) | (false, 0) => Regime::Periodic,
            _ => Regime::Quasiperiodic,
        },
        1 => Regime::Chaos,
        m => Regime::Hyperchaos(m),
    };
    let uncertain = spectrum
        .iter()
        .any(|l| (l.abs() - zero_tol).abs() <= 0.5 * zero_tol);
    Classification { regime, uncertain }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConfig {
    /// Number of leading exponents; `None` means all `3N`.
    pub n_exponents: Option<usize>,
    pub transient: f64,
    pub averaging_time: f64,
    pub renorm_interval: f64,
    pub zero_tol: f64,
    /// Conditional exponents of a driven system; `None` means "when the drive
    /// depends on time".
    pub conditional: Option<bool>,
    /// Seed of the random initial tangent basis.
    pub basis_seed: u64,
    /// Upper bound on stored history entries.
    pub history_len: usize,
    pub integrator: IntegratorConfig,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            n_exponents: None,
            transient: 5000.0,
            averaging_time: 20000.0,
            renorm_interval: 1.0,
            zero_tol: 5e-3,
            conditional: None,
            basis_seed: 1,
            history_len: 400,
            integrator: IntegratorConfig::default(),
        }
    }
}

impl LyapunovConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Some(k) = self.n_exponents {
            if k == 0 || k > dim {
                return Err(Error::InvalidParameter(alloc::format!(
                    "n_exponents must lie in 1..={dim}, got {k}"
                )));
            }
        }
        if !(self.transient >= 0.0) {
            return Err(Error::InvalidParameter("transient must be >= 0".into()));
        }
        for (name, x) in [
            ("averaging_time", self.averaging_time),
            ("renorm_interval", self.renorm_interval),
            ("zero_tol", self.zero_tol),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(alloc::format!("{name} must be > 0")));
            }
        }
        self.integrator.validate()
    }
}

/// Running estimates after a renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPoint {
    /// Averaging time elapsed.
    pub tau: f64,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovResult {
    /// Descending.
    pub exponents: Vec<f64>,
    pub history: Vec<HistoryPoint>,
    pub final_state: ChainState,
    /// Time at the end of the run.
    pub final_tau: f64,
    pub classification: Classification,
    pub conditional: bool,
    /// Spread of the running leading exponent over the last quarter.
    pub drift: f64,
    pub converged: bool,
    /// Number of Gram–Schmidt steps that had to replace a dependent vector.
    pub reseeded: usize,
}

impl LyapunovResult {
    pub fn positive_count(&self, zero_tol: f64) -> usize {
        count_positive(&self.exponents, zero_tol)
    }

    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// Computes the leading Lyapunov exponents of the attractor reached from `initial`.
///
/// The base trajectory first runs for `transient` alone, then together with
/// `K` tangent vectors for `averaging_time`, re-orthonormalizing every
/// `renorm_interval` and accumulating the logarithms of the residual norms.
pub fn lyapunov_spectrum(
    params: &ModelParams,
    initial: &ChainState,
    config: &LyapunovConfig,
) -> Result<LyapunovResult> {
    lyapunov_spectrum_from(params, initial, 0.0, config)
}

/// As [`lyapunov_spectrum`], starting the clock at `tau0` (matters for a modulated drive).
pub fn lyapunov_spectrum_from(
    params: &ModelParams,
    initial: &ChainState,
    tau0: f64,
    config: &LyapunovConfig,
) -> Result<LyapunovResult> {
    let n = initial.n_qubits();
    let dim = initial.dim();
    config.validate(dim)?;
    let k = config.n_exponents.unwrap_or(dim);
    let model = MeanFieldModel::new(n, params)?;
    let conditional = config.conditional.unwrap_or(params.drive.is_time_dependent());

    let mut tau = tau0;
    let mut x = initial.as_slice().to_vec();
    if config.transient > 0.0 {
        let mut flow = Integrator::new(Flow::new(model.clone()), config.integrator)?;
        flow.advance(&mut tau, &mut x, tau0 + config.transient, |_, _| {})?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.basis_seed);
    let mut y = vec![0.0; dim * (1 + k)];
    y[..dim].copy_from_slice(&x);
    for t in y[dim..].iter_mut() {
        *t = rng.gen_range(-1.0..1.0);
    }
    orthonormalize(&mut y[dim..], dim, &mut rng);

    let mut integ = Integrator::new(TangentFlow::new(model, k), config.integrator)?;
    let renorms = libm::round(config.averaging_time / config.renorm_interval).max(1.0) as usize;
    let stride = renorms.div_ceil(config.history_len.max(1));
    let mut sums = vec![0.0; k];
    let mut history = Vec::new();
    let mut reseeded = 0;
    let start = tau;
    for r in 1..=renorms {
        let target = start + r as f64 * config.renorm_interval;
        integ.advance(&mut tau, &mut y, target, |_, _| {})?;
        let report = orthonormalize(&mut y[dim..], dim, &mut rng);
        if !report.reseeded.is_empty() {
            reseeded += 1;
        }
        for (s, nrm) in sums.iter_mut().zip(&report.norms) {
            *s += math::ln(*nrm);
        }
        if r % stride == 0 || r == renorms {
            let elapsed = r as f64 * config.renorm_interval;
            let mut estimates: Vec<f64> = sums.iter().map(|s| s / elapsed).collect();
            sort_descending(&mut estimates);
            history.push(HistoryPoint { tau: elapsed, estimates });
        }
    }

    let elapsed = renorms as f64 * config.renorm_interval;
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / elapsed).collect();
    sort_descending(&mut exponents);
    let drift = last_quarter_drift(&history);
    let final_state = ChainState::from_flat(y[..dim].to_vec())?;
    Ok(LyapunovResult {
        classification: classify_regime(&exponents, config.zero_tol, !conditional),
        exponents,
        history,
        final_state,
        final_tau: tau,
        conditional,
        drift,
        converged: drift <= 2.0 * config.zero_tol,
        reseeded,
    })
}

fn sort_descending(v: &mut [f64]) {
    v.sort_by(|a, b| b.total_cmp(a));
}

fn last_quarter_drift(history: &[HistoryPoint]) -> f64 {
    let Some(last) = history.last() else { return 0.0 };
    let cutoff = 0.75 * last.tau;
    let (lo, hi) = history
        .iter()
        .filter(|h| h.tau >= cutoff)
        .map(|h| h.estimates[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CouplingTopology, DriveSpec};
    use proptest::prelude::*;

    fn gram(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        vs.iter()
            .map(|a| vs.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
            .collect()
    }

    #[test]
    fn orthonormal_basis_is_unchanged() {
        let basis = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let (out, rep) = gram_schmidt(&basis).unwrap();
        assert_eq!(out, basis);
        assert_eq!(rep.norms, vec![1.0; 3]);
    }

    #[test]
    fn hand_example() {
        let (out, rep) = gram_schmidt(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(rep.norms, vec![1.0, 1.0]);
        assert!(rep.reseeded.is_empty());
    }

    #[test]
    fn dependent_vector_is_reseeded() {
        let (out, rep) = gram_schmidt(&[vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0]]).unwrap();
        assert_eq!(rep.reseeded, vec![1]);
        assert!(rep.norms[1] < 1e-12);
        let g = gram(&out);
        assert!((g[0][1]).abs() < 1e-12 && (g[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_rules() {
        let c = |s: &[f64], a| classify_regime(s, 5e-3, a).regime;
        assert_eq!(c(&[-0.1, -0.2, -0.3], true), Regime::FixedPoint);
        assert_eq!(c(&[0.001, -0.15, -0.3], true), Regime::Periodic);
        assert_eq!(c(&[0.001, -0.002, -0.3], true), Regime::Quasiperiodic);
        assert_eq!(c(&[0.05, 0.0, -0.3], true), Regime::Chaos);
        assert_eq!(c(&[0.08, 0.03, 0.001, -0.04], true), Regime::Hyperchaos(2));
        assert_eq!(c(&[-0.1, -0.2], false), Regime::Periodic);
        assert_eq!(c(&[0.0, -0.2], false), Regime::Quasiperiodic);
        assert_eq!(c(&[0.2, 0.1, 0.05, -0.2], false), Regime::Hyperchaos(3));
    }

    #[test]
    fn uncertain_near_band_edge() {
        assert!(classify_regime(&[0.006, -0.3], 5e-3, true).uncertain);
        assert!(classify_regime(&[0.003, -0.3], 5e-3, true).uncertain);
        assert!(!classify_regime(&[0.0001, -0.3], 5e-3, true).uncertain);
    }

    #[test]
    fn count_positive_basic() {
        assert_eq!(count_positive(&[-0.1, -0.2], 5e-3), 0);
        assert_eq!(count_positive(&[0.1, 0.004, -0.2], 5e-3), 1);
    }

    fn short(config: LyapunovConfig) -> LyapunovConfig {
        LyapunovConfig { transient: 50.0, averaging_time: 400.0, ..config }
    }

    #[test]
    fn undriven_single_unit_spectrum() {
        let p = ModelParams::new(0.0, 0.0, 5.0);
        let cfg = LyapunovConfig { averaging_time: 4000.0, ..short(Default::default()) };
        let r = lyapunov_spectrum(&p, &ChainState::perturbed_ground(1, 0.1, 3), &cfg).unwrap();
        let expect = [-0.5, -0.5, -1.0];
        for (a, b) in r.exponents.iter().zip(expect) {
            assert!((a - b).abs() < 1e-3, "{:?}", r.exponents);
        }
        assert_eq!(r.classification.regime, Regime::FixedPoint);
        assert!(r.converged);
    }

    #[test]
    fn conditional_follows_drive() {
        let p = ModelParams::new(1.0, 1.0, 0.0).with_drive(DriveSpec::modulated(1.0, 0.3, 0.5));
        let r = lyapunov_spectrum(&p, &ChainState::ground(1), &short(Default::default())).unwrap();
        assert!(r.conditional);
        assert_eq!(r.classification.regime, Regime::Periodic);
    }

    #[test]
    fn history_is_bounded() {
        let p = ModelParams::new(0.5, 1.0, 0.0);
        let cfg = LyapunovConfig { history_len: 7, ..short(Default::default()) };
        let r = lyapunov_spectrum(&p, &ChainState::ground(1), &cfg).unwrap();
        assert!(r.history.len() <= 8);
        assert_eq!(r.history.last().unwrap().estimates, r.exponents);
    }

    #[test]
    fn bad_exponent_count_is_rejected() {
        let p = ModelParams::new(0.5, 1.0, 0.0);
        let cfg = LyapunovConfig { n_exponents: Some(4), ..short(Default::default()) };
        assert!(lyapunov_spectrum(&p, &ChainState::ground(1), &cfg).is_err());
    }

    #[test]
    fn spectrum_sum_matches_trace_ring() {
        let p = ModelParams::new(4.0, 2.5, 5.0).with_topology(CouplingTopology::Ring);
        let r = lyapunov_spectrum(&p, &ChainState::perturbed_ground(4, 1e-3, 9), &short(Default::default()))
            .unwrap();
        assert!((r.sum() + 8.0).abs() < 0.08, "sum {}", r.sum());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gram_schmidt_output_is_orthonormal(
            dim in 1usize..9,
            raw in proptest::collection::vec(-1.0f64..1.0, 81),
            k in 1usize..9,
        ) {
            let k = k.min(dim);
            let vs: Vec<Vec<f64>> = raw.chunks_exact(9).take(k).map(|c| c[..dim].to_vec()).collect();
            let (out, _) = gram_schmidt(&vs).unwrap();
            let g = gram(&out);
            for i in 0..k {
                for j in 0..k {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((g[i][j] - expect).abs() < 1e-12);
                }
            }
        }
    }
}
