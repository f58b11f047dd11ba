//! Holonomic two-qubit gate through a shared resonator, with and without
//! Stark-shift compensation.
//!
//! `cargo run --release --example two_qubit_gate`

use std::f64::consts::PI;

use holosim::calibration::{calibrate_two_qubit, compensation_track, uniform_grid};
use holosim::device_model::{DetuningParams, ResonatorParams, TransmonParams, TwoQubitModel};
use holosim::lindblad::{two_qubit_gate_run, TwoQubitOptions};
use holosim::pulses::TwoQubitSchedule;
use holosim::units::{mhz, ns, to_mhz, to_ns};
use holosim::Result;

fn main() -> Result<()> {
    let model = TwoQubitModel::new(TransmonParams::default(), ResonatorParams::default(), DetuningParams::default())?;
    let curve = calibrate_two_qubit(&model, &uniform_grid(mhz(450.0), 46))?;
    let sched = TwoQubitSchedule::new(PI / 2.0, ns(40.0))?;

    println!("{:>7} {:>9} {:>9} {:>9}", "t (ns)", "g̃ (MHz)", "Ω (MHz)", "Δs (MHz)");
    for s in compensation_track(&curve, &sched, 9)? {
        println!("{:7.1} {:9.3} {:9.2} {:9.3}", to_ns(s.time), to_mhz(s.coupling), to_mhz(s.omega), to_mhz(s.shift));
    }

    let comp = two_qubit_gate_run(&model, &sched, Some(&curve), &TwoQubitOptions::default())?;
    println!("compensated:   F = {:.5}, photons left {:.2e}", comp.fidelity, comp.resonator_population);
    let raw_opts = TwoQubitOptions { allow_uncompensated: true, ..TwoQubitOptions::default() };
    let raw = two_qubit_gate_run(&model, &sched, None, &raw_opts)?;
    println!("uncompensated: F = {:.5}, photons left {:.2e}", raw.fidelity, raw.resonator_population);
    Ok(())
}
