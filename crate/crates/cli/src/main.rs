use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use qchain::{run, Command, RunConfig};

const SCHEMAS: &str = "\
CSV schemas (numbers use 17 significant digits):
  simulate     tau, w_1..w_N, u_1..u_N, v_1..v_N
  lyapunov     kind (history|final), tau (averaging time elapsed), lambda_1..lambda_K
  sweep, bifurcation, control
               direction, index, parameter, value, regime, positive_count, uncertain,
               converged, conditional, branches, lambda_1..lambda_K, maxima (';'-joined), error
  map          delta, omega, regime, positive_count, uncertain, converged, lambda_1..lambda_K, error
  scaling      n, regime, positive_count, uncertain, converged, sum, lambda_1..lambda_K, error
Every output gets a <output>.manifest TOML sidecar; passing a manifest to --config reruns it.
Exit status: 0 all points succeeded, 2 some failed, 1 all failed or invalid input.";

#[derive(Parser)]
#[command(name = "qchain", version, about = "Mean-field dynamics of driven dissipative qubit lattices", after_help = SCHEMAS)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML configuration file or a previous run's manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set lyapunov.transient=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for independent grid points (0: all cores).
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,
    /// CSV output path (manifest goes to <output>.manifest)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Initial-condition seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of qubits N
    #[arg(long, global = true)]
    n_qubits: Option<usize>,
    /// all-to-all | ring | open-chain | square-lattice
    #[arg(long, global = true)]
    topology: Option<String>,
    /// Detuning delta
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Drive amplitude omega; a modulated drive without drive.omega_m uses it as omega_m
    #[arg(long, global = true)]
    omega: Option<f64>,
    /// Coupling strength c
    #[arg(long, global = true)]
    coupling: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Sampled trajectory of every Bloch component.
    Simulate,
    /// Lyapunov spectrum with its convergence history.
    Lyapunov,
    /// One-parameter sweep of spectra and maxima.
    Sweep,
    /// Regime map over a (delta, omega) grid.
    Map,
    /// Forward and backward continuation sweeps.
    Bifurcation,
    /// Positive-exponent count against lattice size.
    Scaling,
    /// Sweep of the drive modulation frequency or index.
    Control,
}

impl Cli {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{s}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        flag("output.path", self.output.as_ref().map(|p| format!("{:?}", p.display().to_string())));
        flag("ic.seed", self.seed.map(|s| s.to_string()));
        flag("n_qubits", self.n_qubits.map(|n| n.to_string()));
        flag("topology", self.topology.as_ref().map(|t| format!("{t:?}")));
        flag("delta", self.delta.map(|x| format!("{x:?}")));
        flag("omega", self.omega.map(|x| format!("{x:?}")));
        flag("coupling", self.coupling.map(|x| format!("{x:?}")));
        Ok(out)
    }
}

fn command(s: Sub) -> Command {
    match s {
        Sub::Simulate => Command::Simulate,
        Sub::Lyapunov => Command::Lyapunov,
        Sub::Sweep => Command::Sweep,
        Sub::Map => Command::Map,
        Sub::Bifurcation => Command::Bifurcation,
        Sub::Scaling => Command::Scaling,
        Sub::Control => Command::Control,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let result = (|| -> Result<i32> {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
        let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.overrides()?)?;
        let m = run(command(cli.command), &cfg)?;
        let h = &m.manifest;
        eprintln!(
            "{}: {} ({}/{} points failed) -> {}",
            h.command,
            h.status.label(),
            h.points_failed,
            h.points_total,
            h.output.display()
        );
        if let Some(msg) = &h.message {
            eprintln!("{msg}");
        }
        Ok(h.status.exit_code())
    })();
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
