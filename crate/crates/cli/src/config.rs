//! Run configuration: a TOML file, `key=value` overrides, and defaults.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qchain_core::analysis::{Axis, Direction, MapSpec, StudyConfig, SweepParameter, SweepSpec};
use qchain_core::{CouplingTopology, DriveSpec, IntegratorConfig, LyapunovConfig, Method, ModelParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    #[default]
    AllToAll,
    Ring,
    OpenChain,
    SquareLattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DriveKind {
    #[default]
    Constant,
    Modulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub kind: DriveKind,
    /// Baseline amplitude of a modulated drive; falls back to `omega`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m: Option<f64>,
    pub mod_index: f64,
    pub mod_freq: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection { kind: DriveKind::Constant, omega_m: None, mod_index: 0.0, mod_freq: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    #[default]
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: MethodKind,
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        IntegratorSection {
            method: MethodKind::Rk4,
            dt: d.dt,
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_step: d.max_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSection {
    pub transient: f64,
    pub averaging_time: f64,
    pub renorm_interval: f64,
    pub zero_tol: f64,
    /// Number of leading exponents; all `3 * n_qubits` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_exponents: Option<usize>,
    /// Forces conditional (driven) classification on or off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditional: Option<bool>,
    pub basis_seed: u64,
    pub history_len: usize,
}

impl Default for LyapunovSection {
    fn default() -> Self {
        let d = LyapunovConfig::default();
        LyapunovSection {
            transient: d.transient,
            averaging_time: d.averaging_time,
            renorm_interval: d.renorm_interval,
            zero_tol: d.zero_tol,
            n_exponents: d.n_exponents,
            conditional: d.conditional,
            basis_seed: d.basis_seed,
            history_len: d.history_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcSection {
    pub seed: u64,
    pub noise: f64,
}

impl Default for IcSection {
    fn default() -> Self {
        IcSection { seed: 0, noise: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisorderSection {
    /// Half-width of uniform detuning offsets; zero disables sampling.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for DisorderSection {
    fn default() -> Self {
        DisorderSection { sigma: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub spectrum: bool,
    pub maxima_window: f64,
    pub min_prominence: f64,
    pub maxima_unit: usize,
    pub max_maxima: usize,
    /// Distance below which two maxima count as the same branch.
    pub branch_tol: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let d = StudyConfig::default();
        AnalysisSection {
            spectrum: d.spectrum,
            maxima_window: d.maxima_window,
            min_prominence: d.min_prominence,
            maxima_unit: d.maxima_unit,
            max_maxima: d.max_maxima,
            branch_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    #[default]
    Delta,
    Omega,
    ModFreq,
    ModIndex,
}

impl ParameterKind {
    pub fn to_core(self) -> SweepParameter {
        match self {
            ParameterKind::Delta => SweepParameter::Delta,
            ParameterKind::Omega => SweepParameter::Omega,
            ParameterKind::ModFreq => SweepParameter::ModFreq,
            ParameterKind::ModIndex => SweepParameter::ModIndex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionKind {
    #[default]
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: ParameterKind,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub direction: DirectionKind,
    pub continuation: bool,
    pub continuation_kick: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            parameter: ParameterKind::Delta,
            lo: 1.0,
            hi: 9.0,
            points: 81,
            direction: DirectionKind::Forward,
            continuation: false,
            continuation_kick: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub delta_points: usize,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub omega_points: usize,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            delta_lo: 0.0,
            delta_hi: 10.0,
            delta_points: 100,
            omega_lo: 0.0,
            omega_hi: 5.0,
            omega_points: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub n_list: Vec<usize>,
}

impl Default for ScalingSection {
    fn default() -> Self {
        ScalingSection { n_list: (2..=15).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Integration time discarded before sampling starts.
    pub transient: f64,
    pub duration: f64,
    pub sample_interval: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { transient: 0.0, duration: 200.0, sample_interval: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub path: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { path: PathBuf::from("qchain.csv") }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_qubits: usize,
    pub topology: TopologyKind,
    /// Side of a square lattice; derived from `n_qubits` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice_size: Option<usize>,
    pub delta: f64,
    pub omega: f64,
    pub coupling: f64,
    /// Explicit per-qubit detuning offsets; empty means none.
    pub delta_offsets: Vec<f64>,
    pub drive: DriveSection,
    pub disorder: DisorderSection,
    pub integrator: IntegratorSection,
    pub lyapunov: LyapunovSection,
    pub ic: IcSection,
    pub analysis: AnalysisSection,
    pub sweep: SweepSection,
    pub map: MapSection,
    pub scaling: ScalingSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_qubits: 5,
            topology: TopologyKind::AllToAll,
            lattice_size: None,
            delta: 4.05,
            omega: 2.5,
            coupling: 5.0,
            delta_offsets: Vec::new(),
            drive: DriveSection::default(),
            disorder: DisorderSection::default(),
            integrator: IntegratorSection::default(),
            lyapunov: LyapunovSection::default(),
            ic: IcSection::default(),
            analysis: AnalysisSection::default(),
            sweep: SweepSection::default(),
            map: MapSection::default(),
            scaling: ScalingSection::default(),
            simulate: SimulateSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets a dotted key such as `lyapunov.transient` inside `table`.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed key `{key}`");
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{p}` in `{key}` is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads a configuration file. A manifest is accepted too: its
    /// `[config]` table is used.
    pub fn load_table(path: &Path) -> Result<toml::Table> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading configuration {}", path.display()))?;
        let mut table: toml::Table =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if table.contains_key("manifest") {
            match table.remove("config") {
                Some(toml::Value::Table(t)) => table = t,
                _ => bail!("manifest {} has no [config] table", path.display()),
            }
        }
        Ok(table)
    }

    /// File (optional) plus overrides, applied in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match file {
            Some(p) => Self::load_table(p)?,
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            set_dotted(&mut table, k, parse_value(v))?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("invalid configuration")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Consistency checks not expressible in the schema.
    pub fn check(&self) -> Result<()> {
        if self.n_qubits == 0 {
            bail!("n_qubits must be at least 1");
        }
        if !self.delta_offsets.is_empty() && self.disorder.sigma != 0.0 {
            bail!("give either delta_offsets or disorder.sigma, not both");
        }
        if self.analysis.maxima_unit >= self.n_qubits {
            bail!("analysis.maxima_unit {} out of range", self.analysis.maxima_unit);
        }
        if self.simulate.sample_interval <= 0.0 || self.simulate.duration < 0.0 || self.simulate.transient < 0.0 {
            bail!("simulate needs sample_interval > 0 and non-negative duration and transient");
        }
        self.model_params()?.validate(self.n_qubits)?;
        self.integrator_config().validate()?;
        Ok(())
    }

    pub fn topology(&self) -> Result<CouplingTopology> {
        self.topology_for(self.n_qubits)
    }

    /// Topology instantiated for a chain of `n` units.
    pub fn topology_for(&self, n: usize) -> Result<CouplingTopology> {
        Ok(match self.topology {
            TopologyKind::AllToAll => CouplingTopology::AllToAll,
            TopologyKind::Ring => CouplingTopology::Ring,
            TopologyKind::OpenChain => CouplingTopology::OpenChain,
            TopologyKind::SquareLattice => {
                let side = match self.lattice_size {
                    Some(s) if n == self.n_qubits => s,
                    _ => (n as f64).sqrt().round() as usize,
                };
                if side * side != n {
                    bail!("{n} qubits do not form a square lattice of side {side}");
                }
                CouplingTopology::SquareLattice { side }
            }
        })
    }

    pub fn drive(&self) -> DriveSpec {
        match self.drive.kind {
            DriveKind::Constant => DriveSpec::constant(self.omega),
            DriveKind::Modulated => DriveSpec::modulated(
                self.drive.omega_m.unwrap_or(self.omega),
                self.drive.mod_index,
                self.drive.mod_freq,
            ),
        }
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        Ok(self.model_params_with(self.topology()?))
    }

    /// Model parameters with the topology replaced.
    pub fn model_params_with(&self, topology: CouplingTopology) -> ModelParams {
        let mut p = ModelParams::new(self.delta, self.omega, self.coupling)
            .with_topology(topology)
            .with_drive(self.drive());
        if !self.delta_offsets.is_empty() {
            p.delta_offsets = self.delta_offsets.clone();
        } else if self.disorder.sigma != 0.0 {
            p = p.with_uniform_disorder(self.n_qubits, self.disorder.sigma, self.disorder.seed);
        }
        p
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            method: match i.method {
                MethodKind::Rk4 => Method::FixedRk4,
                MethodKind::Rk45 => Method::AdaptiveRk45,
            },
            dt: i.dt,
            rel_tol: i.rel_tol,
            abs_tol: i.abs_tol,
            max_step: i.max_step,
        }
    }

    pub fn lyapunov_config(&self) -> LyapunovConfig {
        let l = &self.lyapunov;
        LyapunovConfig {
            n_exponents: l.n_exponents,
            transient: l.transient,
            averaging_time: l.averaging_time,
            renorm_interval: l.renorm_interval,
            zero_tol: l.zero_tol,
            conditional: l.conditional,
            basis_seed: l.basis_seed,
            history_len: l.history_len,
            integrator: self.integrator_config(),
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        let a = &self.analysis;
        StudyConfig {
            lyapunov: self.lyapunov_config(),
            spectrum: a.spectrum,
            maxima_window: a.maxima_window,
            min_prominence: a.min_prominence,
            maxima_unit: a.maxima_unit,
            max_maxima: a.max_maxima,
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let s = &self.sweep;
        let mut spec = SweepSpec::new(s.parameter.to_core(), s.lo, s.hi, s.points);
        spec.direction = match s.direction {
            DirectionKind::Forward => Direction::Forward,
            DirectionKind::Backward => Direction::Backward,
        };
        spec.continuation = s.continuation;
        spec.continuation_kick = s.continuation_kick;
        spec.ic_seed = self.ic.seed;
        spec.ic_noise = self.ic.noise;
        spec
    }

    pub fn map_spec(&self) -> MapSpec {
        let m = &self.map;
        MapSpec {
            delta: Axis::new(m.delta_lo, m.delta_hi, m.delta_points),
            omega: Axis::new(m.omega_lo, m.omega_hi, m.omega_points),
            ic_seed: self.ic.seed,
            ic_noise: self.ic.noise,
        }
    }

    /// Number of exponents reported for a chain of `n` units.
    pub fn exponent_count(&self, n: usize) -> usize {
        self.lyapunov.n_exponents.unwrap_or(3 * n).min(3 * n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::resolve(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.topology().unwrap(), CouplingTopology::AllToAll);
    }

    #[test]
    fn overrides_take_precedence_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "delta = 3.0\ntopology = \"ring\"\n[lyapunov]\ntransient = 10.0\n").unwrap();
        let cfg = RunConfig::resolve(
            Some(&path),
            &[("delta".into(), "4.5".into()), ("drive.kind".into(), "modulated".into())],
        )
        .unwrap();
        assert_eq!(cfg.delta, 4.5);
        assert_eq!(cfg.topology, TopologyKind::Ring);
        assert_eq!(cfg.lyapunov.transient, 10.0);
        assert_eq!(cfg.drive.kind, DriveKind::Modulated);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::resolve(None, &[("deltaa".into(), "1".into())]).is_err());
        assert!(RunConfig::resolve(None, &[("lyapunov.foo".into(), "1".into())]).is_err());
        assert!(RunConfig::resolve(None, &[("n_qubits".into(), "0".into())]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.lattice_size = Some(3);
        cfg.n_qubits = 9;
        cfg.topology = TopologyKind::SquareLattice;
        cfg.lyapunov.n_exponents = Some(8);
        cfg.drive.omega_m = Some(2.5);
        cfg.delta = 0.1 + 0.2;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn lattice_side_must_match() {
        let mut cfg = RunConfig::default();
        cfg.topology = TopologyKind::SquareLattice;
        assert!(cfg.topology().is_err());
        cfg.n_qubits = 9;
        assert_eq!(cfg.topology().unwrap(), CouplingTopology::SquareLattice { side: 3 });
        assert_eq!(cfg.topology_for(4).unwrap(), CouplingTopology::SquareLattice { side: 2 });
    }

    #[test]
    fn modulated_drive_defaults_to_omega() {
        let mut cfg = RunConfig::default();
        cfg.drive.kind = DriveKind::Modulated;
        cfg.drive.mod_index = 0.5;
        cfg.drive.mod_freq = 1.0;
        assert_eq!(cfg.drive(), DriveSpec::modulated(2.5, 0.5, 1.0));
    }
}
