//! How far the numerically exact effective coupling departs from linear
//! growth in the drive amplitude.
//!
//! `cargo run --release --example coupling_scan`

use holosim::calibration::{calibrate_omega, nonlinearity, perturbative_coupling, uniform_grid, FormulaVariant};
use holosim::device_model::{DetuningParams, JcModel, TransmonParams};
use holosim::units::{mhz, to_mhz};
use holosim::Result;

fn main() -> Result<()> {
    let model = JcModel::new(TransmonParams::default(), 3, mhz(65.0), DetuningParams::default())?;
    let curve = calibrate_omega(&model, &uniform_grid(mhz(390.0), 40))?;
    let alpha = model.transmon.anharmonicity;
    let d = model.detuning.signed(alpha);
    println!("{:>8} {:>10} {:>10} {:>12}", "Ω (MHz)", "numeric", "pert.", "nonlinear");
    for omega in [20.0, 80.0, 160.0, 240.0, 320.0, 377.0] {
        let w = mhz(omega);
        let num = curve.coupling_at(w)?;
        let pert = perturbative_coupling(model.coupling, w, d, alpha, FormulaVariant::PlusAlpha)?.magnitude;
        let nl = nonlinearity(&curve, mhz(20.0), w)?;
        println!("{omega:8.1} {:10.5} {:10.5} {:11.1}%", to_mhz(num), to_mhz(pert), 100.0 * nl);
    }
    Ok(())
}
