use std::f64::consts::PI;

use holosim::calibration::{calibrate_two_qubit, uniform_grid};
use holosim::device_model::{DetuningParams, ResonatorParams, TransmonParams, TwoQubitModel};
use holosim::lindblad::{two_qubit_gate_run, TwoQubitInitial, TwoQubitOptions};
use holosim::pulses::TwoQubitSchedule;
use holosim::units::{mhz, ns};

fn model() -> TwoQubitModel {
    TwoQubitModel::new(TransmonParams::default(), ResonatorParams::default(), DetuningParams::default()).unwrap()
}

#[test]
fn calibrated_gate_returns_resonator_to_vacuum() {
    let m = model();
    let curve = calibrate_two_qubit(&m, &uniform_grid(mhz(450.0), 46)).unwrap();
    let sched = TwoQubitSchedule::new(PI / 2.0, ns(40.0)).unwrap();
    for initial in [TwoQubitInitial::F0g, TwoQubitInitial::G0f] {
        let opts = TwoQubitOptions { decoherence: false, steps: 8000, initial, ..TwoQubitOptions::default() };
        let comp = two_qubit_gate_run(&m, &sched, Some(&curve), &opts).unwrap();
        let last = comp.resonator_population;
        assert!(last < 0.01, "{initial:?}: residual photon population {last}");
        assert!(comp.fidelity > 0.99, "{initial:?}: {}", comp.fidelity);

        let bare = TwoQubitOptions { allow_uncompensated: true, ..opts };
        let raw = two_qubit_gate_run(&m, &sched, None, &bare).unwrap();
        assert!(comp.fidelity > raw.fidelity, "{initial:?}: {} vs {}", comp.fidelity, raw.fidelity);
    }
}
