//! Truncated transmon / resonator operators and rotating-frame Hamiltonians.
//!
//! Basis orderings:
//! * single transmon: `|g⟩, |e⟩, |f⟩, |h⟩, ...`
//! * transmon ⊗ resonator: index `j * photons + n`
//! * transmon₁ ⊗ resonator ⊗ transmon₂: index `(j * photons + n) * levels + k`

use std::f64::consts::SQRT_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::hilbert::{Ket, Operator};
use crate::units::{khz, mhz};
use crate::{Error, Result};

pub const G: usize = 0;
pub const E: usize = 1;
pub const F: usize = 2;
pub const H: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    pub levels: usize,
    /// α = ω_ge − ω_fe.
    pub anharmonicity: f64,
    /// Γ₁ for `|g⟩⟨e|`.
    pub decay_ge: f64,
    /// Γ₁ for `|e⟩⟨f|`.
    pub decay_ef: f64,
    /// Γ₂ for `|e⟩⟨e| − |g⟩⟨g|`.
    pub dephasing_ge: f64,
    /// Γ₂ for `|f⟩⟨f| − |e⟩⟨e|`.
    pub dephasing_ef: f64,
}

impl Default for TransmonParams {
    fn default() -> Self {
        TransmonParams {
            levels: 4,
            anharmonicity: mhz(400.0),
            decay_ge: khz(10.0),
            decay_ef: khz(10.0),
            dephasing_ge: khz(10.0),
            dephasing_ef: khz(10.0),
        }
    }
}

impl TransmonParams {
    pub fn with_uniform_rates(mut self, rate: f64) -> Self {
        self.decay_ge = rate;
        self.decay_ef = rate;
        self.dephasing_ge = rate;
        self.dephasing_ef = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.levels) {
            return Err(Error::param(format!("transmon levels must be 3, 4 or 5, got {}", self.levels)));
        }
        if !(self.anharmonicity > 0.0 && self.anharmonicity.is_finite()) {
            return Err(Error::param("anharmonicity must be positive"));
        }
        for (name, r) in [
            ("decay_ge", self.decay_ge),
            ("decay_ef", self.decay_ef),
            ("dephasing_ge", self.dephasing_ge),
            ("dephasing_ef", self.dephasing_ef),
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::param(format!("{name} must be a non-negative rate")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Number of Fock levels kept (0..photon_cutoff).
    pub photon_cutoff: usize,
    pub kappa: f64,
    /// Coupling g_i to each transmon.
    pub couplings: Vec<f64>,
}

impl Default for ResonatorParams {
    fn default() -> Self {
        ResonatorParams {
            photon_cutoff: 3,
            kappa: khz(10.0),
            couplings: vec![mhz(65.0), mhz(65.0)],
        }
    }
}

impl ResonatorParams {
    pub fn validate(&self) -> Result<()> {
        if self.photon_cutoff < 2 {
            return Err(Error::param("photon_cutoff must be at least 2"));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa must be non-negative"));
        }
        if self.couplings.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::param("couplings must be non-negative"));
        }
        Ok(())
    }

    pub fn coupling(&self, qubit: usize) -> Result<f64> {
        self.couplings
            .get(qubit)
            .copied()
            .ok_or_else(|| Error::param(format!("no coupling given for qubit {qubit}")))
    }
}

/// Where the resonator sits relative to the driven transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonatorPlacement {
    /// ω_ge − ω_c = ω − ω_fe = Δ: drive and resonator below the qubit.
    Below,
    /// ω_c − ω_ge = ω_fe − ω = Δ.
    Above,
}

/// Two-photon resonance detuning Δ and the frame detunings it implies.
///
/// Both placements satisfy δ_r = 2δ_q − α, so `|g,1⟩` and `|f,0⟩` are
/// degenerate under the bare Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningParams {
    pub delta: f64,
    pub placement: ResonatorPlacement,
}

impl Default for DetuningParams {
    fn default() -> Self {
        DetuningParams {
            delta: mhz(1000.0),
            placement: ResonatorPlacement::Below,
        }
    }
}

impl DetuningParams {
    pub fn validate(&self, alpha: f64) -> Result<()> {
        if !(self.delta > alpha && self.delta.is_finite()) {
            return Err(Error::param("detuning must exceed the anharmonicity"));
        }
        Ok(())
    }

    /// δ_q = ω_ge − ω.
    pub fn qubit_detuning(&self, alpha: f64) -> f64 {
        match self.placement {
            ResonatorPlacement::Below => alpha - self.delta,
            ResonatorPlacement::Above => alpha + self.delta,
        }
    }

    /// δ_r = ω_c − ω.
    pub fn resonator_detuning(&self, alpha: f64) -> f64 {
        2.0 * self.qubit_detuning(alpha) - alpha
    }

    /// δ_r − δ_q, the signed detuning entering the second-order formulas.
    pub fn signed(&self, alpha: f64) -> f64 {
        self.resonator_detuning(alpha) - self.qubit_detuning(alpha)
    }
}

/// `b` with `b[k, k+1] = √(k+1)`.
pub fn lowering_operator(levels: usize) -> Operator {
    assert!(levels >= 2, "lowering operator needs at least two levels");
    let mut b = Operator::zeros(levels);
    let mut m = b.clone().into_matrix();
    for k in 0..levels - 1 {
        m[(k, k + 1)] = C64::new(((k + 1) as f64).sqrt(), 0.0);
    }
    b = Operator::from_matrix(m).expect("square");
    b
}

pub fn number_operator(levels: usize) -> Operator {
    Operator::from_real_diagonal(&(0..levels).map(|k| k as f64).collect::<Vec<_>>())
}

/// Whether the single-qubit Hamiltonian keeps the off-resonant cross drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    /// Each tone drives only its own transition.
    Ideal,
    /// Each tone also drives every other ladder transition, detuned by
    /// multiples of α.
    Faithful,
}

/// Two-tone drive amplitudes Ω0e, Ω1e and phases φ0, φ1 at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoToneDrive {
    pub omega_ge: f64,
    pub omega_fe: f64,
    pub phase_ge: f64,
    pub phase_fe: f64,
}

/// Interaction-frame single-transmon Hamiltonian.
///
/// Ideal mode: `Ω0e e^{iφ0}|g⟩⟨e| + Ω1e e^{iφ1}|f⟩⟨e| + h.c.`. Faithful mode
/// puts both tones on every `|k⟩⟨k+1|` with the ladder factor `√(k+1)`
/// (relative to the transition each tone is calibrated on) and the phase
/// `e^{i(k - k₀)αt}` of the detuning from that transition.
pub fn single_qubit_hamiltonian(
    drive: &TwoToneDrive,
    mode: DriveMode,
    levels: usize,
    alpha: f64,
    t: f64,
) -> Result<Operator> {
    if levels < 3 {
        return Err(Error::param("single-qubit Hamiltonian needs at least 3 levels"));
    }
    if drive.omega_ge < 0.0 || drive.omega_fe < 0.0 {
        return Err(Error::param("drive amplitudes must be non-negative; signs belong in the phases"));
    }
    let tone0 = C64::from_polar(drive.omega_ge, drive.phase_ge);
    // ⟨e|H|f⟩ = Ω1e e^{-iφ1}
    let tone1 = C64::from_polar(drive.omega_fe, -drive.phase_fe);
    let mut m = Operator::zeros(levels).into_matrix();
    match mode {
        DriveMode::Ideal => {
            m[(G, E)] = tone0;
            m[(E, F)] = tone1;
        }
        DriveMode::Faithful => {
            for k in 0..levels - 1 {
                let ladder = ((k + 1) as f64).sqrt();
                let kf = k as f64;
                m[(k, k + 1)] = tone0 * ladder * C64::from_polar(1.0, kf * alpha * t)
                    + tone1 * (ladder / SQRT_2) * C64::from_polar(1.0, (kf - 1.0) * alpha * t);
            }
        }
    }
    for i in 0..levels {
        for j in 0..i {
            m[(i, j)] = m[(j, i)].conj();
        }
    }
    Operator::from_matrix(m)
}

fn diag_anharmonic(levels: usize, detuning: f64, alpha: f64) -> Vec<f64> {
    (0..levels)
        .map(|k| {
            let n = k as f64;
            detuning * n - 0.5 * alpha * (n - 1.0) * n
        })
        .collect()
}

/// Driven transmon ⊗ resonator model with the static part cached.
#[derive(Debug, Clone)]
pub struct JcModel {
    pub transmon: TransmonParams,
    pub photon_cutoff: usize,
    pub coupling: f64,
    pub detuning: DetuningParams,
    h0: Operator,
    b: Operator,
    number: Operator,
}

impl JcModel {
    pub fn new(
        transmon: TransmonParams,
        photon_cutoff: usize,
        coupling: f64,
        detuning: DetuningParams,
    ) -> Result<Self> {
        transmon.validate()?;
        if transmon.levels < 4 {
            return Err(Error::param("transmon-resonator model needs 4 levels to hold |h,0⟩"));
        }
        if photon_cutoff < 2 {
            return Err(Error::param("transmon-resonator model needs 2 Fock levels to hold |e,1⟩"));
        }
        if !(coupling >= 0.0 && coupling.is_finite()) {
            return Err(Error::param("coupling must be non-negative"));
        }
        detuning.validate(transmon.anharmonicity)?;
        let (nt, nc) = (transmon.levels, photon_cutoff);
        let alpha = transmon.anharmonicity;
        let it = Operator::identity(nt);
        let ic = Operator::identity(nc);
        let b = lowering_operator(nt).kron(&ic);
        let a = it.kron(&lowering_operator(nc));
        let qubit = Operator::from_real_diagonal(&diag_anharmonic(nt, detuning.qubit_detuning(alpha), alpha));
        let cavity = number_operator(nc).scale_re(detuning.resonator_detuning(alpha));
        let hop = &a * &b.adjoint();
        let h0 = qubit.kron(&ic) + it.kron(&cavity) + (&hop + &hop.adjoint()).scale_re(coupling);
        let number = number_operator(nt).kron(&ic) + it.kron(&number_operator(nc));
        Ok(JcModel {
            transmon,
            photon_cutoff,
            coupling,
            detuning,
            h0,
            b,
            number,
        })
    }

    pub fn dim(&self) -> usize {
        self.transmon.levels * self.photon_cutoff
    }

    pub fn index(&self, level: usize, photons: usize) -> usize {
        level * self.photon_cutoff + photons
    }

    pub fn ket(&self, level: usize, photons: usize) -> Ket {
        Ket::basis(self.dim(), self.index(level, photons))
    }

    /// `H₀ + H′ + ω_shift (n_a + n_b)`.
    pub fn hamiltonian(&self, omega: f64, phase: f64, shift: f64) -> Operator {
        let drive = self.b.scale(C64::from_polar(0.5 * omega, phase));
        &(&self.h0 + &(&drive + &drive.adjoint())) + &self.number.scale_re(shift)
    }
}

/// Full driven transmon ⊗ resonator Hamiltonian; see [`JcModel`].
pub fn driven_jc_hamiltonian(
    transmon: &TransmonParams,
    resonator: &ResonatorParams,
    detuning: &DetuningParams,
    omega: f64,
    phase: f64,
    shift: f64,
) -> Result<Operator> {
    resonator.validate()?;
    let model = JcModel::new(*transmon, resonator.photon_cutoff, resonator.coupling(0)?, *detuning)?;
    Ok(model.hamiltonian(omega, phase, shift))
}

/// Drive amplitudes and phases for both transmons at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitDrive {
    pub omega: [f64; 2],
    pub phase: [f64; 2],
}

/// Two transmons sharing one resonator, static part cached.
#[derive(Debug, Clone)]
pub struct TwoQubitModel {
    pub transmon: TransmonParams,
    pub resonator: ResonatorParams,
    pub detuning: DetuningParams,
    h0: Operator,
    b: [Operator; 2],
    a: Operator,
    number: Operator,
}

impl TwoQubitModel {
    pub fn new(transmon: TransmonParams, resonator: ResonatorParams, detuning: DetuningParams) -> Result<Self> {
        transmon.validate()?;
        resonator.validate()?;
        if transmon.levels < 4 {
            return Err(Error::param("two-qubit model needs 4 transmon levels"));
        }
        if resonator.couplings.len() != 2 {
            return Err(Error::param("two-qubit model needs exactly two couplings"));
        }
        detuning.validate(transmon.anharmonicity)?;
        let (nt, nc) = (transmon.levels, resonator.photon_cutoff);
        let alpha = transmon.anharmonicity;
        let it = Operator::identity(nt);
        let ic = Operator::identity(nc);
        let b1 = lowering_operator(nt).kron(&ic).kron(&it);
        let b2 = it.kron(&ic).kron(&lowering_operator(nt));
        let a = it.kron(&lowering_operator(nc)).kron(&it);
        let q = Operator::from_real_diagonal(&diag_anharmonic(nt, detuning.qubit_detuning(alpha), alpha));
        let mut h0 = q.kron(&ic).kron(&it)
            + it.kron(&ic).kron(&q)
            + it.kron(&number_operator(nc)).kron(&it).scale_re(detuning.resonator_detuning(alpha));
        for (bi, gi) in [(&b1, resonator.couplings[0]), (&b2, resonator.couplings[1])] {
            let hop = &a * &bi.adjoint();
            h0 = h0 + (&hop + &hop.adjoint()).scale_re(gi);
        }
        let number = &(&(&b1.adjoint() * &b1) + &(&b2.adjoint() * &b2)) + &(&a.adjoint() * &a);
        Ok(TwoQubitModel {
            transmon,
            resonator,
            detuning,
            h0,
            b: [b1, b2],
            a,
            number,
        })
    }

    pub fn levels(&self) -> usize {
        self.transmon.levels
    }

    pub fn photons(&self) -> usize {
        self.resonator.photon_cutoff
    }

    pub fn dim(&self) -> usize {
        self.levels() * self.levels() * self.photons()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.levels(), self.photons(), self.levels()]
    }

    pub fn index(&self, j: usize, n: usize, k: usize) -> usize {
        (j * self.photons() + n) * self.levels() + k
    }

    pub fn ket(&self, j: usize, n: usize, k: usize) -> Ket {
        Ket::basis(self.dim(), self.index(j, n, k))
    }

    pub fn lowering(&self, qubit: usize) -> &Operator {
        &self.b[qubit]
    }

    pub fn cavity_lowering(&self) -> &Operator {
        &self.a
    }

    /// Label such as `f0g` for a product-basis index.
    pub fn label(&self, index: usize) -> String {
        let k = index % self.levels();
        let n = (index / self.levels()) % self.photons();
        let j = index / (self.levels() * self.photons());
        format!("{}{}{}", level_name(j), n, level_name(k))
    }

    /// Rotating-frame Hamiltonian with one common carrier offset `shift`
    /// added as `shift · (n_a + n₁ + n₂)`.
    pub fn hamiltonian(&self, drive: &TwoQubitDrive, shift: f64) -> Operator {
        let mut h = &self.h0 + &self.number.scale_re(shift);
        for q in 0..2 {
            if drive.omega[q] != 0.0 {
                let d = self.b[q].scale(C64::from_polar(0.5 * drive.omega[q], drive.phase[q]));
                h = &h + &(&d + &d.adjoint());
            }
        }
        h
    }

    /// Conjugation by the qubit exchange `|jnk⟩ → |knj⟩`.
    pub fn swap_qubits(&self, op: &Operator) -> Operator {
        let perm: Vec<usize> = (0..self.dim())
            .map(|idx| {
                let k = idx % self.levels();
                let n = (idx / self.levels()) % self.photons();
                let j = idx / (self.levels() * self.photons());
                self.index(k, n, j)
            })
            .collect();
        Operator::from_fn(self.dim(), |i, j| op.get(perm[i], perm[j]))
    }
}

/// Full two-transmon + resonator Hamiltonian; see [`TwoQubitModel`].
pub fn two_qubit_full_hamiltonian(
    transmon: &TransmonParams,
    resonator: &ResonatorParams,
    detuning: &DetuningParams,
    drive: &TwoQubitDrive,
    shift: f64,
) -> Result<Operator> {
    let model = TwoQubitModel::new(*transmon, resonator.clone(), *detuning)?;
    Ok(model.hamiltonian(drive, shift))
}

pub fn level_name(k: usize) -> String {
    match k {
        G => "g".into(),
        E => "e".into(),
        F => "f".into(),
        H => "h".into(),
        _ => format!("l{k}"),
    }
}

/// Dressed counterparts of bare states under `h`.
///
/// Each bare state is projected onto the eigenvectors whose energies lie
/// within `cluster_tol` of its best-overlap eigenvector, then renormalized.
/// For non-degenerate levels this is the eigenvector itself, phase-aligned to
/// the bare state; for a near-degenerate cluster it keeps the bare state's
/// orientation inside the cluster.
pub fn dressed_states(h: &Operator, bare: &[Ket], cluster_tol: f64) -> Result<Vec<Ket>> {
    let (w, v) = h.eigh()?;
    bare.iter()
        .map(|psi| {
            let best = (0..v.len())
                .max_by(|&i, &j| v[i].inner(psi).norm_sqr().total_cmp(&v[j].inner(psi).norm_sqr()))
                .ok_or_else(|| Error::Dimension("empty spectrum".into()))?;
            let mut acc = Ket::new(vec![C64::new(0.0, 0.0); psi.dim()]);
            for k in 0..v.len() {
                if (w[k] - w[best]).abs() <= cluster_tol {
                    acc = acc.add(&v[k].scale(v[k].inner(psi)));
                }
            }
            acc.normalize()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn lowering_entries() {
        let b3 = lowering_operator(3);
        assert_eq!(b3.get(0, 1), c(1.0));
        assert!((b3.get(1, 2) - c(SQRT_2)).norm() < 1e-15);
        let b4 = lowering_operator(4);
        assert!((b4.get(2, 3) - c(3f64.sqrt())).norm() < 1e-15);
        let n = &b4.adjoint() * &b4;
        assert!(n.max_abs_diff(&number_operator(4)) < 1e-14);
    }

    #[test]
    fn ideal_matches_bright_coupling() {
        let om = 1.3;
        let s = om / SQRT_2;
        let d = TwoToneDrive { omega_ge: s, omega_fe: s, phase_ge: 0.0, phase_fe: PI };
        let h = single_qubit_hamiltonian(&d, DriveMode::Ideal, 3, 2.0, 0.0).unwrap();
        // |b⟩ = (|g⟩ − |f⟩)/√2 at θ = π/2, φ = 0
        let b = Ket::normalized(vec![c(1.0), c(0.0), c(-1.0)]).unwrap();
        let e = Ket::basis(3, E);
        let expect = (Operator::outer(&b, &e) + Operator::outer(&e, &b)).scale_re(om);
        assert!(h.max_abs_diff(&expect) < 1e-14);
        let zero = TwoToneDrive { omega_ge: 0.0, omega_fe: 0.0, phase_ge: 0.3, phase_fe: 0.1 };
        let h0 = single_qubit_hamiltonian(&zero, DriveMode::Faithful, 4, 2.0, 0.7).unwrap();
        assert!(h0.max_abs_diff(&Operator::zeros(4)) == 0.0);
        let neg = TwoToneDrive { omega_ge: -1.0, ..zero };
        assert!(single_qubit_hamiltonian(&neg, DriveMode::Ideal, 3, 2.0, 0.0).is_err());
    }

    #[test]
    fn faithful_cross_terms_at_t0() {
        let d = TwoToneDrive { omega_ge: 0.7, omega_fe: 0.4, phase_ge: 0.3, phase_fe: 1.1 };
        let ideal = single_qubit_hamiltonian(&d, DriveMode::Ideal, 3, 5.0, 0.0).unwrap();
        let faith = single_qubit_hamiltonian(&d, DriveMode::Faithful, 3, 5.0, 0.0).unwrap();
        let diff = &faith - &ideal;
        // only (g,e) and (e,f) entries plus their conjugates may differ
        for i in 0..3 {
            for j in 0..3 {
                let z = diff.get(i, j);
                match (i.min(j), i.max(j)) {
                    (0, 1) => assert!((z.norm() - 0.4 / SQRT_2).abs() < 1e-14),
                    (1, 2) => assert!((z.norm() - SQRT_2 * 0.7).abs() < 1e-14),
                    _ => assert!(z.norm() < 1e-15),
                }
            }
        }
    }

    fn reference_jc() -> JcModel {
        JcModel::new(TransmonParams::default(), 3, mhz(65.0), DetuningParams::default()).unwrap()
    }

    #[test]
    fn jc_structure() {
        let t = TransmonParams::default();
        let det = DetuningParams::default();
        let bare = JcModel::new(t, 3, 0.0, det).unwrap();
        let h = bare.hamiltonian(0.0, 0.0, 0.0);
        let dq = det.qubit_detuning(t.anharmonicity);
        let f0 = bare.index(F, 0);
        assert!((h.get(f0, f0).re - (2.0 * dq - t.anharmonicity)).abs() < 1e-3);
        assert!((h.get(f0, f0).re - h.get(bare.index(G, 1), bare.index(G, 1)).re).abs() < 1e-3);
        for i in 0..h.dim() {
            for j in 0..h.dim() {
                if i != j {
                    assert_eq!(h.get(i, j), c(0.0));
                }
            }
        }

        let driven = bare.hamiltonian(mhz(50.0), 0.4, 0.0);
        for i in 0..driven.dim() {
            for j in 0..driven.dim() {
                if i % 3 != j % 3 {
                    assert_eq!(driven.get(i, j), c(0.0), "drive mixed photon numbers");
                }
            }
        }

        let m = reference_jc();
        let h = m.hamiltonian(mhz(10.0), 0.0, mhz(3.0));
        assert!((h.get(m.index(E, 0), m.index(G, 1)) - c(mhz(65.0))).norm() < 1e-3);
        assert!(h.is_hermitian(1e-12 * mhz(1000.0)));

        let small = TransmonParams { levels: 3, ..t };
        assert!(JcModel::new(small, 3, 1.0, det).is_err());
        assert!(JcModel::new(t, 1, 1.0, det).is_err());
    }

    #[test]
    fn two_qubit_structure() {
        let t = TransmonParams::default();
        let det = DetuningParams::default();
        let r0 = ResonatorParams { couplings: vec![0.0, 0.0], ..Default::default() };
        let m0 = TwoQubitModel::new(t, r0, det).unwrap();
        assert_eq!(m0.dim(), 48);
        let h = m0.hamiltonian(&TwoQubitDrive { omega: [0.0; 2], phase: [0.0; 2] }, 0.0);
        for i in 0..48 {
            for j in 0..48 {
                if i != j {
                    assert_eq!(h.get(i, j), c(0.0));
                }
            }
        }
        let m = TwoQubitModel::new(t, ResonatorParams::default(), det).unwrap();
        let drive = TwoQubitDrive { omega: [mhz(100.0); 2], phase: [0.3, 0.3] };
        let h = m.hamiltonian(&drive, mhz(2.0));
        assert!(h.is_hermitian(1e-12 * mhz(1000.0)));
        assert!(m.swap_qubits(&h).max_abs_diff(&h) < 1e-6);
        assert_eq!(m.label(m.index(F, 0, G)), "f0g");
        assert_eq!(m.label(m.index(G, 1, G)), "g1g");
    }

    #[test]
    fn two_qubit_avoided_crossing_present() {
        // Scan the common shift through the f0g/g1g resonance at fixed drive:
        // the gap between the two levels carrying |g1g⟩ weight never closes.
        let m = TwoQubitModel::new(TransmonParams::default(), ResonatorParams::default(), DetuningParams::default()).unwrap();
        let drive = TwoQubitDrive { omega: [mhz(200.0); 2], phase: [0.0, PI] };
        let g1g = m.ket(G, 1, G);
        let mut min_gap = f64::INFINITY;
        for k in 0..81 {
            let s = mhz(-40.0 + k as f64);
            let (w, v) = m.hamiltonian(&drive, s).eigh().unwrap();
            let mut idx: Vec<usize> = (0..w.len()).collect();
            idx.sort_by(|&a, &b| v[b].inner(&g1g).norm_sqr().total_cmp(&v[a].inner(&g1g).norm_sqr()));
            min_gap = min_gap.min((w[idx[0]] - w[idx[1]]).abs());
        }
        assert!(min_gap > mhz(1.0), "gap {}", crate::units::to_mhz(min_gap));
    }

    #[test]
    fn dressed_states_of_diagonal_are_bare() {
        let h = Operator::from_real_diagonal(&[0.0, 1.0, 5.0]);
        let bare: Vec<Ket> = (0..3).map(|k| Ket::basis(3, k)).collect();
        let d = dressed_states(&h, &bare, 1e-9).unwrap();
        for k in 0..3 {
            assert!((d[k].inner(&bare[k]).norm() - 1.0).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn single_qubit_hermitian(o0 in 0.0f64..10.0, o1 in 0.0f64..10.0, p0 in 0.0f64..6.3, p1 in 0.0f64..6.3,
                                  t in 0.0f64..3.0, levels in 3usize..6, faithful: bool) {
            let mode = if faithful { DriveMode::Faithful } else { DriveMode::Ideal };
            let d = TwoToneDrive { omega_ge: o0, omega_fe: o1, phase_ge: p0, phase_fe: p1 };
            let h = single_qubit_hamiltonian(&d, mode, levels, 4.0, t).unwrap();
            prop_assert!(h.is_hermitian(1e-12));
        }

        #[test]
        fn ideal_annihilates_dark_state(theta in 0.0f64..PI, phi in 0.0f64..6.28, om in 0.1f64..5.0) {
            // Drive phases of the first segment: φ0 = φ, φ1 = π.
            let d = TwoToneDrive { omega_ge: om * (theta / 2.0).sin(), omega_fe: om * (theta / 2.0).cos(), phase_ge: phi, phase_fe: PI };
            let h = single_qubit_hamiltonian(&d, DriveMode::Ideal, 3, 1.0, 0.0).unwrap();
            let dark = Ket::new(vec![c((theta / 2.0).cos()), c(0.0), C64::from_polar((theta / 2.0).sin(), -phi)]);
            prop_assert!(h.apply(&dark).norm() < 1e-12);
        }

        #[test]
        fn jc_hermitian(om in 0.0f64..500.0, ph in 0.0f64..6.3, s in -50.0f64..50.0, above: bool) {
            let det = DetuningParams { delta: mhz(1000.0), placement: if above { ResonatorPlacement::Above } else { ResonatorPlacement::Below } };
            let m = JcModel::new(TransmonParams::default(), 3, mhz(65.0), det).unwrap();
            let h = m.hamiltonian(mhz(om), ph, mhz(s));
            prop_assert!(h.hermiticity_defect() < 1e-12 * mhz(1000.0));
            let a = TransmonParams::default().anharmonicity;
            prop_assert!((det.resonator_detuning(a) - (2.0 * det.qubit_detuning(a) - a)).abs() < 1e-3);
        }
    }
}
