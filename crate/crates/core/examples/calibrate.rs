//! Stark-shift compensation curve of the driven transmon-resonator model,
//! compared against both perturbative coupling expressions.
//!
//! `cargo run --release --example calibrate`

use holosim::calibration::{calibrate_omega, compare_variant, uniform_grid, FormulaVariant};
use holosim::device_model::{DetuningParams, JcModel, TransmonParams};
use holosim::units::{mhz, to_mhz};
use holosim::Result;

fn main() -> Result<()> {
    let model = JcModel::new(TransmonParams::default(), 3, mhz(65.0), DetuningParams::default())?;
    let curve = calibrate_omega(&model, &uniform_grid(mhz(390.0), 40))?;
    println!("{:>10} {:>10} {:>10}", "Ω (MHz)", "Δs (MHz)", "g̃ (MHz)");
    for p in curve.points().iter().step_by(5) {
        println!("{:10.1} {:10.4} {:10.5}", to_mhz(p.omega), to_mhz(p.shift), to_mhz(p.coupling));
    }
    for variant in [FormulaVariant::PlusAlpha, FormulaVariant::MinusAlpha] {
        let c = compare_variant(&curve, &model, mhz(20.0), variant)?;
        println!("{variant:?} at 20 MHz: relative deviation {:.1}%", 100.0 * c.relative_deviation);
    }
    Ok(())
}
