//! Closed-form gate algebra: the holonomy of a single loop, its
//! decomposition back into loop parameters, and non-commutativity.
//!
//! `cargo run --example holonomy_algebra`

use std::f64::consts::PI;

use holosim::holonomy::{
    decompose_su2, phase_aligned_distance, qubit_block, u1_from_segments, u1_matrix, u2_matrix, SingleQubitGateSpec,
    TwoQubitGateSpec,
};
use holosim::Result;

fn main() -> Result<()> {
    let a = SingleQubitGateSpec::new(PI / 2.0, 0.0, PI)?;
    let b = SingleQubitGateSpec::new(PI / 4.0, PI / 3.0, PI / 2.0)?;
    for (name, g) in [("a", &a), ("b", &b)] {
        let u = u1_matrix(g);
        let from_loop = qubit_block(&u1_from_segments(g));
        println!("U({name}) vs two-segment product: {:.2e}", phase_aligned_distance(&u, &from_loop));
        let back = decompose_su2(&u)?;
        println!("  recovered θ = {:.4}, φ = {:.4}, γ = {:.4}", back.theta, back.phi, back.gamma);
    }
    let (ua, ub) = (u1_matrix(&a), u1_matrix(&b));
    let comm = (&ua * &ub) - (&ub * &ua);
    println!("‖[U(a), U(b)]‖ = {:.4}", comm.matrix().norm());
    let swap = u2_matrix(&TwoQubitGateSpec::new(PI / 2.0)?);
    println!("two-qubit gate at ϑ = π/2 (real part):");
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| format!("{:5.2}", { let v = swap.get(i, j).re; if v.abs() < 1e-12 { 0.0 } else { v } })).collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
