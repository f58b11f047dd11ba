//! Robustness of the E gate to piecewise-constant amplitude noise.
//!
//! `cargo run --release --example noise_sweep`

use std::f64::consts::PI;

use holosim::device_model::{DriveMode, TransmonParams};
use holosim::holonomy::SingleQubitGateSpec;
use holosim::lindblad::{noise_robustness_sweep, SingleQubitSetup};
use holosim::units::mhz;
use holosim::Result;

fn main() -> Result<()> {
    let gate = SingleQubitGateSpec::new(PI / 2.0, 0.0, PI / 2.0)?;
    let mut setup = SingleQubitSetup::new(&gate, mhz(16.0), TransmonParams::default(), DriveMode::Ideal)?;
    setup.steps = 4000;
    let eps: Vec<f64> = (0..=5).map(|k| 0.04 * k as f64).collect();
    let seeds: Vec<u64> = (0..10).collect();
    println!("{:>6} {:>10} {:>10}", "eps", "mean F", "stderr");
    for p in noise_robustness_sweep(&setup, &gate, &eps, &seeds, 200)? {
        println!("{:6.2} {:10.6} {:10.2e}", p.epsilon, p.mean, p.stderr);
    }
    Ok(())
}
