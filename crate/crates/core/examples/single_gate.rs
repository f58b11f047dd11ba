//! NOT gate on the g/f qubit of a four-level transmon, starting from |g⟩.
//!
//! `cargo run --release --example single_gate`

use holosim::device_model::{DriveMode, TransmonParams};
use holosim::holonomy::SingleQubitGateSpec;
use holosim::lindblad::{single_qubit_gate_run, SingleQubitSetup};
use holosim::units::{mhz, to_ns};
use holosim::{Result, C64};

fn main() -> Result<()> {
    let gate = SingleQubitGateSpec::not_gate();
    let setup = SingleQubitSetup::new(&gate, mhz(16.0), TransmonParams::default(), DriveMode::Ideal)?;
    let psi0 = setup.qubit_ket(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    let run = single_qubit_gate_run(&setup, &gate, &psi0)?;

    let traj = &run.trajectory;
    let (pg, pe, pf) = (traj.series("P_g").unwrap(), traj.series("P_e").unwrap(), traj.series("P_f").unwrap());
    println!("{:>8} {:>8} {:>8} {:>8}", "t (ns)", "P_g", "P_e", "P_f");
    let stride = (traj.observable_times.len() / 16).max(1);
    for k in (0..traj.observable_times.len()).step_by(stride) {
        println!("{:8.3} {:8.5} {:8.5} {:8.5}", to_ns(traj.observable_times[k]), pg[k], pe[k], pf[k]);
    }
    println!("final fidelity {:.5}", run.fidelity);
    Ok(())
}
