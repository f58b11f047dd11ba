//! Fidelity of the NOT and Hadamard-like gates averaged over real qubit
//! states cos ϑ|g⟩ + sin ϑ|f⟩.
//!
//! `cargo run --release --example gate_average`

use std::f64::consts::PI;

use holosim::device_model::{DriveMode, TransmonParams};
use holosim::holonomy::SingleQubitGateSpec;
use holosim::lindblad::{gate_fidelity_average, SingleQubitSetup};
use holosim::units::mhz;
use holosim::Result;

fn main() -> Result<()> {
    for (name, gamma) in [("NOT", PI), ("E", PI / 2.0)] {
        let gate = SingleQubitGateSpec::new(PI / 2.0, 0.0, gamma)?;
        for mode in [DriveMode::Ideal, DriveMode::Faithful] {
            let setup = SingleQubitSetup::new(&gate, mhz(16.0), TransmonParams::default(), mode)?;
            let avg = gate_fidelity_average(&setup, &gate, 201)?;
            let worst = avg.per_state.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            println!("{name:>3} {mode:?}: mean {:.5}, worst {:.5}", avg.mean, worst);
        }
    }
    Ok(())
}
