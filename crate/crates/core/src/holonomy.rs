//! Closed-form gate algebra for the single-loop and two-qubit holonomic
//! gates. These are the analytic references the simulations are checked
//! against.
//!
//! Single-qubit conventions on `{|g⟩, |e⟩, |f⟩}`:
//!
//! ```text
//! |b⟩ = sin(θ/2) e^{iφ} |g⟩ − cos(θ/2) |f⟩
//! |d⟩ = cos(θ/2) |g⟩ + sin(θ/2) e^{−iφ} |f⟩
//! ```
//!
//! The relative phase on `|f⟩` in `|d⟩` is the conjugate of the one in `|b⟩`;
//! with it `⟨b|d⟩ = 0` for every azimuth.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::hilbert::{Ket, Operator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleQubitGateSpec {
    pub theta: f64,
    pub phi: f64,
    pub gamma: f64,
}

impl SingleQubitGateSpec {
    pub fn new(theta: f64, phi: f64, gamma: f64) -> Result<Self> {
        let s = SingleQubitGateSpec { theta, phi, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=PI).contains(&self.theta) {
            return Err(Error::param("theta must lie in [0, π]"));
        }
        if !(0.0..TAU).contains(&self.phi) || !(0.0..TAU).contains(&self.gamma) {
            return Err(Error::param("phi and gamma must lie in [0, 2π)"));
        }
        Ok(())
    }

    /// θ = π/2, φ = 0, γ = π.
    pub fn not_gate() -> Self {
        SingleQubitGateSpec { theta: PI / 2.0, phi: 0.0, gamma: PI }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitGateSpec {
    pub vartheta: f64,
}

impl TwoQubitGateSpec {
    pub fn new(vartheta: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&vartheta) {
            return Err(Error::param("ϑ must lie in [0, π]"));
        }
        Ok(TwoQubitGateSpec { vartheta })
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `(|b⟩, |d⟩)` embedded in the three-level space.
pub fn bright_dark_states(theta: f64, phi: f64) -> (Ket, Ket) {
    let (s, co) = ((0.5 * theta).sin(), (0.5 * theta).cos());
    let b = Ket::new(vec![C64::from_polar(s, phi), c(0.0), c(-co)]);
    let d = Ket::new(vec![c(co), c(0.0), C64::from_polar(s, -phi)]);
    (b, d)
}

/// Qubit-block gate on `{|g⟩, |f⟩}`:
///
/// ```text
/// [ cos(γ/2) − i sin(γ/2) cosθ      −i sin(γ/2) sinθ e^{iφ}     ]
/// [ −i sin(γ/2) sinθ e^{−iφ}        cos(γ/2) + i sin(γ/2) cosθ  ]
/// ```
///
/// This is `e^{−iγ/2}|d⟩⟨d| + e^{iγ/2}|b⟩⟨b|`, i.e. the loop holonomy with
/// the global phase `e^{iγ/2}` removed.
pub fn u1_matrix(spec: &SingleQubitGateSpec) -> Operator {
    let (cg, sg) = ((0.5 * spec.gamma).cos(), (0.5 * spec.gamma).sin());
    let i = C64::i();
    Operator::from_rows(&[
        vec![c(cg) - i * sg * spec.theta.cos(), -i * sg * spec.theta.sin() * C64::from_polar(1.0, spec.phi)],
        vec![-i * sg * spec.theta.sin() * C64::from_polar(1.0, -spec.phi), c(cg) + i * sg * spec.theta.cos()],
    ])
}

/// Evolution operators of the two half-loops, `(U_a, U_b)`, on three levels.
pub fn segment_operators(spec: &SingleQubitGateSpec) -> (Operator, Operator) {
    let (b, d) = bright_dark_states(spec.theta, spec.phi);
    let e = Ket::basis(3, 1);
    let i = C64::i();
    let dd = Operator::projector(&d);
    let be = Operator::outer(&b, &e);
    let eb = Operator::outer(&e, &b);
    let ua = &dd + &(&be + &eb).scale(-i);
    let ub = &dd
        + &(&be.scale(C64::from_polar(1.0, spec.gamma)) + &eb.scale(C64::from_polar(1.0, -spec.gamma))).scale(i);
    (ua, ub)
}

/// `U_b · U_a` on the three-level space.
pub fn u1_from_segments(spec: &SingleQubitGateSpec) -> Operator {
    let (ua, ub) = segment_operators(spec);
    &ub * &ua
}

/// Restriction of a three-level operator to `{|g⟩, |f⟩}`.
pub fn qubit_block(u: &Operator) -> Operator {
    u.restrict(&[0, 2])
}

/// `|tr(U†V)| / dim`; equals 1 iff the gates agree up to a global phase.
pub fn gate_overlap(u: &Operator, v: &Operator) -> f64 {
    (u.adjoint() * v.clone()).trace().norm() / u.dim() as f64
}

/// Largest entrywise `|U − e^{iχ}V|` with χ the phase maximizing the overlap.
pub fn phase_aligned_distance(u: &Operator, v: &Operator) -> f64 {
    let tr = (&v.adjoint() * u).trace();
    let phase = if tr.norm() > 0.0 { tr / tr.norm() } else { c(1.0) };
    u.max_abs_diff(&v.scale(phase))
}

/// Inverse of [`u1_matrix`] up to a global phase.
///
/// Output is canonical: γ ∈ [0, π], and θ = φ = 0 when the rotation is
/// trivial.
pub fn decompose_su2(u: &Operator) -> Result<SingleQubitGateSpec> {
    if u.dim() != 2 {
        return Err(Error::Dimension("decompose_su2 expects a 2×2 matrix".into()));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-10 {
        return Err(Error::param(format!("matrix is not unitary (defect {defect:e})")));
    }
    let m = u.matrix();
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let v = m / det.sqrt();
    let i = C64::i();
    // V = a0 I − i (a · σ')
    let mut a0 = 0.5 * (v[(0, 0)] + v[(1, 1)]).re;
    let mut ax = (0.5 * i * (v[(0, 1)] + v[(1, 0)])).re;
    let mut ay = (0.5 * (v[(1, 0)] - v[(0, 1)])).re;
    let mut az = (0.5 * i * (v[(0, 0)] - v[(1, 1)])).re;
    let tiny = 1e-12;
    let flip = if a0.abs() > tiny {
        a0 < 0.0
    } else if az.abs() > tiny {
        az < 0.0
    } else if ax.abs() > tiny {
        ax < 0.0
    } else {
        ay > 0.0
    };
    if flip {
        a0 = -a0;
        ax = -ax;
        ay = -ay;
        az = -az;
    }
    let s = (ax * ax + ay * ay + az * az).sqrt();
    let gamma = 2.0 * s.atan2(a0);
    if s < tiny {
        return Ok(SingleQubitGateSpec { theta: 0.0, phi: 0.0, gamma: 0.0 });
    }
    let theta = (az / s).clamp(-1.0, 1.0).acos();
    let phi = if (ax * ax + ay * ay).sqrt() < tiny * s { 0.0 } else { (-ay).atan2(ax).rem_euclid(TAU) };
    Ok(SingleQubitGateSpec { theta, phi: if phi >= TAU { 0.0 } else { phi }, gamma })
}

/// Two-qubit gate on `{|gg⟩, |fg⟩, |gf⟩, |ff⟩}`: identity on `|gg⟩`, the
/// reflection `|d₂⟩⟨d₂| − |b₂⟩⟨b₂|` on the odd block and `−1` on `|ff⟩`.
pub fn u2_matrix(spec: &TwoQubitGateSpec) -> Operator {
    let (co, s) = (spec.vartheta.cos(), spec.vartheta.sin());
    let z = c(0.0);
    Operator::from_rows(&[
        vec![c(1.0), z, z, z],
        vec![z, c(co), c(s), z],
        vec![z, c(s), c(-co), z],
        vec![z, z, z, c(-1.0)],
    ])
}

/// Effective Hamiltonian on `{|f0g⟩, |g0f⟩, |g1g⟩}`:
/// `Σᵢ g̃ᵢ e^{−iφᵢ} |qubit i excited⟩⟨g1g| + h.c.`
pub fn effective_three_level_hamiltonian(g1: f64, g2: f64, phi1: f64, phi2: f64) -> Operator {
    let mut h = Operator::zeros(3).into_matrix();
    h[(0, 2)] = C64::from_polar(g1, -phi1);
    h[(1, 2)] = C64::from_polar(g2, -phi2);
    h[(2, 0)] = h[(0, 2)].conj();
    h[(2, 1)] = h[(1, 2)].conj();
    Operator::from_matrix(h).expect("3x3")
}

/// `(|b₂⟩, |d₂⟩)` on `{|f0g⟩, |g0f⟩, |g1g⟩}` for the canonical phases (0, π).
pub fn two_qubit_bright_dark(vartheta: f64) -> (Ket, Ket) {
    let (s, co) = ((0.5 * vartheta).sin(), (0.5 * vartheta).cos());
    (Ket::new(vec![c(s), c(-co), c(0.0)]), Ket::new(vec![c(co), c(s), c(0.0)]))
}
