//! Lyapunov spectrum of a five-qubit ring at a few detunings.
//!
//! cargo run --release -p qchain-core --example ring_spectrum

use qchain_core::lyapunov::lyapunov_spectrum;
use qchain_core::{ChainState, CouplingTopology, LyapunovConfig, ModelParams};

fn main() {
    let config = LyapunovConfig { n_exponents: Some(5), transient: 2000.0, averaging_time: 5000.0, ..Default::default() };
    let initial = ChainState::perturbed_ground(5, 1e-3, 0);
    for delta in [1.0, 2.5, 4.05, 4.95] {
        let params = ModelParams::new(delta, 2.5, 5.0).with_topology(CouplingTopology::Ring);
        let r = lyapunov_spectrum(&params, &initial, &config).expect("valid parameters");
        let shown: Vec<String> = r.exponents.iter().map(|x| format!("{x:+.4}")).collect();
        println!("delta = {delta:<5} {:<14} [{}]", r.classification.regime.to_string(), shown.join(" "));
    }
}
