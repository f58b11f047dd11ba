//! Lindblad master-equation integration, fidelities and sweeps.
//!
//! The dissipator convention is
//! `ρ̇ = i[ρ, H] + ½ Σ_k r_k (2 A_k ρ A_k† − A_k†A_k ρ − ρ A_k†A_k)`,
//! so a channel `|g⟩⟨e|` with rate Γ empties `|e⟩` as `e^{−Γt}` and a
//! `σᶻ` channel damps coherences as `e^{−2Γt}`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationCurve;
use crate::device_model::{
    single_qubit_hamiltonian, DriveMode, TransmonParams, TwoQubitDrive, TwoQubitModel, E, F, G,
};
use crate::hilbert::{state_fidelity, DensityMatrix, Ket, Operator};
use crate::holonomy::{u1_matrix, SingleQubitGateSpec};
use crate::pulses::{apply_amplitude_noise, build_single_loop_schedule, PulseSchedule, Shape, TwoQubitSchedule};
use crate::units::{to_mhz, to_ns};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub operator: Operator,
    pub rate: f64,
}

impl CollapseChannel {
    pub fn new(operator: Operator, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::param("collapse rate must be non-negative"));
        }
        Ok(CollapseChannel { operator, rate })
    }
}

/// Relaxation and dephasing channels of one transmon, lifted into a larger
/// space by `embed`.
pub fn transmon_channels(p: &TransmonParams, embed: &dyn Fn(&Operator) -> Operator) -> Vec<CollapseChannel> {
    let n = p.levels;
    let t = |i, j| Operator::transition(n, i, j);
    let list = [
        (t(G, E), p.decay_ge),
        (t(E, F), p.decay_ef),
        (&t(F, F) - &t(E, E), p.dephasing_ef),
        (&t(E, E) - &t(G, G), p.dephasing_ge),
    ];
    list.into_iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(op, rate)| CollapseChannel { operator: embed(&op), rate })
        .collect()
}

/// Dense reference implementation of the master-equation right-hand side.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &Operator, channels: &[CollapseChannel]) -> Result<Operator> {
    let n = rho.dim();
    if h.dim() != n || channels.iter().any(|c| c.operator.dim() != n) {
        return Err(Error::Dimension("lindblad_rhs: operator dimensions differ from rho".into()));
    }
    let r = rho.matrix();
    let i = C64::i();
    let mut out = (r * h.matrix() - h.matrix() * r) * i;
    for ch in channels {
        let a = ch.operator.matrix();
        let ad = a.adjoint();
        let ada = &ad * a;
        let l = (a * r * &ad) * C64::new(2.0, 0.0) - &ada * r - r * &ada;
        out += l * C64::new(0.5 * ch.rate, 0.0);
    }
    Operator::from_matrix(out)
}

/// Triplet form used inside the integrator.
#[derive(Debug, Clone)]
struct Sparse {
    n: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn from_dense(m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Sparse { n, entries }
    }

    /// `out = self · rho`, column-major buffers.
    fn left_mul(&self, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        out.fill(C64::new(0.0, 0.0));
        for &(i, j, v) in &self.entries {
            for k in 0..n {
                out[i + k * n] += v * rho[j + k * n];
            }
        }
    }

    /// `out += rate · A ρ A†`.
    fn sandwich_add(&self, rate: f64, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        for &(i, j, a) in &self.entries {
            let ra = a * rate;
            for &(l, m, b) in &self.entries {
                out[i + l * n] += ra * b.conj() * rho[j + m * n];
            }
        }
    }
}

/// Precomputed dissipator: `K = ½ Σ r A†A` and the jump operators.
struct Dissipator {
    k: DMatrix<C64>,
    jumps: Vec<(Sparse, f64)>,
}

impl Dissipator {
    fn new(n: usize, channels: &[CollapseChannel]) -> Result<Self> {
        let mut k = DMatrix::<C64>::zeros(n, n);
        let mut jumps = Vec::new();
        for ch in channels {
            if ch.operator.dim() != n {
                return Err(Error::Dimension(format!(
                    "collapse operator is {}-dim, state is {n}-dim",
                    ch.operator.dim()
                )));
            }
            if ch.rate == 0.0 {
                continue;
            }
            let a = ch.operator.matrix();
            k += (a.adjoint() * a) * C64::new(0.5 * ch.rate, 0.0);
            jumps.push((Sparse::from_dense(a), ch.rate));
        }
        Ok(Dissipator { k, jumps })
    }

    /// Sparse `H − iK`.
    fn effective(&self, h: &Operator) -> Sparse {
        Sparse::from_dense(&(h.matrix() - &self.k * C64::i()))
    }

    /// `out = −i(H_eff ρ − ρ H_eff†) + Σ r A ρ A†`; relies on ρ being Hermitian.
    fn rhs(&self, heff: &Sparse, rho: &[C64], scratch: &mut [C64], out: &mut [C64]) {
        let n = heff.n;
        heff.left_mul(rho, scratch);
        for j in 0..n {
            for i in 0..n {
                let d = scratch[i + j * n] - scratch[j + i * n].conj();
                out[i + j * n] = C64::new(d.im, -d.re);
            }
        }
        for (a, r) in &self.jumps {
            a.sandwich_add(*r, rho, out);
        }
    }
}

/// Time-dependent Hamiltonian on one smooth interval. Integration steps
/// never straddle segment boundaries.
pub struct Segment<'a> {
    pub start: f64,
    pub end: f64,
    pub hamiltonian: Box<dyn Fn(f64) -> Operator + Send + Sync + 'a>,
}

impl<'a> Segment<'a> {
    pub fn new(start: f64, end: f64, h: impl Fn(f64) -> Operator + Send + Sync + 'a) -> Self {
        Segment { start, end, hamiltonian: Box::new(h) }
    }
}

#[derive(Debug, Clone)]
pub enum Observable {
    Population(usize),
    /// `⟨ψ|ρ|ψ⟩`.
    Projector(Ket),
    /// `Re tr(Oρ)`.
    Expectation(Operator),
}

impl Observable {
    fn eval(&self, rho: &[C64], n: usize) -> f64 {
        match self {
            Observable::Population(k) => rho[k + k * n].re,
            Observable::Projector(psi) => {
                let v = psi.vector();
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..n {
                    let mut col = C64::new(0.0, 0.0);
                    for i in 0..n {
                        col += v[i].conj() * rho[i + j * n];
                    }
                    acc += col * v[j];
                }
                acc.re
            }
            Observable::Expectation(op) => {
                let m = op.matrix();
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        acc += m[(i, j)] * rho[j + i * n];
                    }
                }
                acc.re
            }
        }
    }
}

/// Tolerances checked during integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationTolerances {
    pub trace: f64,
    pub hermitian: f64,
    pub positivity: f64,
}

impl Default for IntegrationTolerances {
    fn default() -> Self {
        IntegrationTolerances { trace: 1e-7, hermitian: 1e-9, positivity: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub dt: f64,
    /// Store every `store_every`-th state; the last state is always kept.
    pub store_every: usize,
    pub tolerances: IntegrationTolerances,
    /// Check positivity on stored states (trace and Hermiticity are
    /// checked at every step).
    pub check_positivity: bool,
}

impl EvolveOptions {
    pub fn with_dt(dt: f64) -> Self {
        EvolveOptions { dt, store_every: 50, tolerances: IntegrationTolerances::default(), check_positivity: true }
    }

    /// `duration / steps`.
    pub fn with_steps(duration: f64, steps: usize) -> Self {
        Self::with_dt(duration / steps as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observable_names: Vec<String>,
    /// Times of every integration step, including the initial one.
    pub observable_times: Vec<f64>,
    /// One series per observable, aligned with `observable_times`.
    pub observables: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.observable_names.iter().position(|n| n == name).map(|k| self.observables[k].as_slice())
    }
}

fn steps_for(len: f64, dt: f64) -> usize {
    let x = len / dt;
    let r = x.round();
    let n = if (x - r).abs() < 1e-6 * x.max(1.0) { r } else { x.ceil() };
    (n as usize).max(1)
}

fn check_step(rho: &[C64], n: usize, tol: &IntegrationTolerances, t: f64) -> Result<()> {
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..n {
        tr += rho[i + i * n];
    }
    if !((tr.re - 1.0).abs() < tol.trace && tr.im.abs() < tol.trace) {
        return Err(Error::Invariant { time_ns: to_ns(t), detail: format!("trace drifted to {} {:+}i", tr.re, tr.im) });
    }
    let mut herm: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            herm = herm.max((rho[i + j * n] - rho[j + i * n].conj()).norm());
        }
    }
    if !(herm < tol.hermitian) {
        return Err(Error::Invariant { time_ns: to_ns(t), detail: format!("hermiticity defect {herm:e}") });
    }
    Ok(())
}

/// Fixed-step RK4 over consecutive segments.
pub fn evolve(
    rho0: &DensityMatrix,
    segments: &[Segment],
    channels: &[CollapseChannel],
    opts: &EvolveOptions,
    observables: &[(String, Observable)],
) -> Result<Trajectory> {
    let n = rho0.dim();
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::param("dt must be positive"));
    }
    if segments.is_empty() {
        return Err(Error::param("evolve needs at least one segment"));
    }
    for w in segments.windows(2) {
        if (w[1].start - w[0].end).abs() > 1e-12 * w[0].end.abs().max(1e-300) {
            return Err(Error::param("segments must be contiguous"));
        }
    }
    if segments.iter().any(|s| !(s.end > s.start)) {
        return Err(Error::param("segments must have positive length"));
    }
    let diss = Dissipator::new(n, channels)?;
    let tol = opts.tolerances;
    let store_every = opts.store_every.max(1);

    let mut rho: Vec<C64> = rho0.matrix().as_slice().to_vec();
    let mut k1 = vec![C64::new(0.0, 0.0); n * n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let mut scratch = k1.clone();

    let to_state = |v: &[C64]| DensityMatrix::from_matrix_unchecked(DMatrix::from_column_slice(n, n, v));
    let check_psd = |v: &[C64], t: f64| -> Result<()> {
        if opts.check_positivity {
            let lmin = to_state(v).min_eigenvalue();
            if !(lmin >= -tol.positivity) {
                return Err(Error::Invariant { time_ns: to_ns(t), detail: format!("smallest eigenvalue {lmin:e}") });
            }
        }
        Ok(())
    };

    let t0 = segments[0].start;
    check_step(&rho, n, &tol, t0)?;
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![to_state(&rho)],
        observable_names: observables.iter().map(|(s, _)| s.clone()).collect(),
        observable_times: vec![t0],
        observables: observables.iter().map(|(_, o)| vec![o.eval(&rho, n)]).collect(),
    };

    let mut step = 0usize;
    let last_seg = segments.len() - 1;
    for (si, seg) in segments.iter().enumerate() {
        let steps = steps_for(seg.end - seg.start, opts.dt);
        let h = (seg.end - seg.start) / steps as f64;
        let mut h_start = diss.effective(&(seg.hamiltonian)(seg.start));
        for s in 0..steps {
            let t = seg.start + h * s as f64;
            let t_end = if s + 1 == steps { seg.end } else { seg.start + h * (s + 1) as f64 };
            let h_mid = diss.effective(&(seg.hamiltonian)(t + 0.5 * h));
            let h_end = diss.effective(&(seg.hamiltonian)(t_end));

            diss.rhs(&h_start, &rho, &mut scratch, &mut k1);
            for i in 0..n * n {
                tmp[i] = rho[i] + k1[i] * (0.5 * h);
            }
            diss.rhs(&h_mid, &tmp, &mut scratch, &mut k2);
            for i in 0..n * n {
                tmp[i] = rho[i] + k2[i] * (0.5 * h);
            }
            diss.rhs(&h_mid, &tmp, &mut scratch, &mut k3);
            for i in 0..n * n {
                tmp[i] = rho[i] + k3[i] * h;
            }
            diss.rhs(&h_end, &tmp, &mut scratch, &mut k4);
            for i in 0..n * n {
                rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            h_start = h_end;
            step += 1;

            check_step(&rho, n, &tol, t_end)?;
            traj.observable_times.push(t_end);
            for (k, (_, o)) in observables.iter().enumerate() {
                traj.observables[k].push(o.eval(&rho, n));
            }
            let is_last = si == last_seg && s + 1 == steps;
            if step % store_every == 0 || is_last {
                check_psd(&rho, t_end)?;
                traj.times.push(t_end);
                traj.states.push(to_state(&rho));
            }
        }
    }
    Ok(traj)
}

/// Single smooth segment over `t_span`.
pub fn evolve_smooth(
    rho0: &DensityMatrix,
    h: impl Fn(f64) -> Operator + Send + Sync,
    channels: &[CollapseChannel],
    t_span: (f64, f64),
    opts: &EvolveOptions,
    observables: &[(String, Observable)],
) -> Result<Trajectory> {
    evolve(rho0, &[Segment::new(t_span.0, t_span.1, h)], channels, opts, observables)
}

/// Final states for several initial states under the same dynamics.
pub fn propagate_states(
    inputs: &[DensityMatrix],
    segments: &[Segment],
    channels: &[CollapseChannel],
    opts: &EvolveOptions,
) -> Result<Vec<DensityMatrix>> {
    let lean = EvolveOptions { store_every: usize::MAX, ..*opts };
    inputs
        .par_iter()
        .map(|rho| evolve(rho, segments, channels, &lean, &[]).map(|t| t.final_state().clone()))
        .collect()
}

/// A single-transmon gate run.
#[derive(Debug, Clone)]
pub struct SingleQubitSetup {
    pub schedule: PulseSchedule,
    pub mode: DriveMode,
    pub transmon: TransmonParams,
    pub decoherence: bool,
    pub steps: usize,
}

impl SingleQubitSetup {
    /// Square-pulse gate with `steps = 20000` and decoherence on.
    pub fn new(gate: &SingleQubitGateSpec, omega: f64, transmon: TransmonParams, mode: DriveMode) -> Result<Self> {
        transmon.validate()?;
        let schedule = build_single_loop_schedule(gate.theta, gate.phi, gate.gamma, omega, Shape::Square)?;
        Ok(SingleQubitSetup { schedule, mode, transmon, decoherence: true, steps: 20_000 })
    }

    pub fn dim(&self) -> usize {
        self.transmon.levels
    }

    pub fn segments(&self) -> Vec<Segment<'_>> {
        let (levels, alpha, mode) = (self.transmon.levels, self.transmon.anharmonicity, self.mode);
        self.schedule
            .pieces()
            .into_iter()
            .map(|p| {
                let sched = &self.schedule;
                Segment::new(p.start, p.end, move |t| {
                    single_qubit_hamiltonian(&sched.drive(&p, t), mode, levels, alpha, t)
                        .expect("schedule amplitudes are non-negative")
                })
            })
            .collect()
    }

    pub fn channels(&self) -> Vec<CollapseChannel> {
        if self.decoherence {
            transmon_channels(&self.transmon, &|op| op.clone())
        } else {
            vec![]
        }
    }

    pub fn options(&self) -> EvolveOptions {
        EvolveOptions::with_steps(self.schedule.duration(), self.steps)
    }

    /// Qubit-space state `a|g⟩ + b|f⟩` in the transmon space.
    pub fn qubit_ket(&self, a: C64, b: C64) -> Ket {
        let mut v = vec![C64::new(0.0, 0.0); self.dim()];
        v[G] = a;
        v[F] = b;
        Ket::new(v)
    }

    /// Ideal image `U₁|ψ⟩` of a qubit-space state.
    pub fn ideal_image(&self, gate: &SingleQubitGateSpec, psi: &Ket) -> Ket {
        let u = u1_matrix(gate);
        let (a, b) = (psi.amplitude(G), psi.amplitude(F));
        self.qubit_ket(u.get(0, 0) * a + u.get(0, 1) * b, u.get(1, 0) * a + u.get(1, 1) * b)
    }
}

/// Outcome of a gate run from one initial state.
#[derive(Debug, Clone)]
pub struct GateRun {
    pub trajectory: Trajectory,
    pub fidelity: f64,
}

/// Runs the gate from `psi0` and records populations of g, e, f and the
/// fidelity against the ideal image.
pub fn single_qubit_gate_run(setup: &SingleQubitSetup, gate: &SingleQubitGateSpec, psi0: &Ket) -> Result<GateRun> {
    let target = setup.ideal_image(gate, psi0);
    let obs = vec![
        ("P_g".to_string(), Observable::Population(G)),
        ("P_e".to_string(), Observable::Population(E)),
        ("P_f".to_string(), Observable::Population(F)),
        ("F".to_string(), Observable::Projector(target.clone())),
    ];
    let rho0 = DensityMatrix::pure(psi0)?;
    let trajectory = evolve(&rho0, &setup.segments(), &setup.channels(), &setup.options(), &obs)?;
    let fidelity = state_fidelity(trajectory.final_state(), &target)?;
    Ok(GateRun { trajectory, fidelity })
}

/// Input-state average of the gate fidelity.
#[derive(Debug, Clone)]
pub struct AveragedFidelity {
    pub mean: f64,
    /// `(θ′, F)` for every input state.
    pub per_state: Vec<(f64, f64)>,
}

/// Averages `⟨ψ_f|ρ_out|ψ_f⟩` over `|ψ⟩ = cos θ′|g⟩ + sin θ′|f⟩`,
/// θ′ₖ = 2πk/(n−1).
///
/// The dynamics is linear in ρ, so the map is propagated once on four
/// qubit-space density matrices spanning all inputs, and each input state's
/// output is assembled from those images.
pub fn gate_fidelity_average(
    setup: &SingleQubitSetup,
    gate: &SingleQubitGateSpec,
    n_states: usize,
) -> Result<AveragedFidelity> {
    if n_states == 0 {
        return Err(Error::param("n_states must be at least 1"));
    }
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let r = FRAC_1_SQRT_2;
    let kets = [
        setup.qubit_ket(one, zero),
        setup.qubit_ket(zero, one),
        setup.qubit_ket(C64::new(r, 0.0), C64::new(r, 0.0)),
        setup.qubit_ket(C64::new(r, 0.0), C64::new(0.0, r)),
    ];
    let inputs = kets.iter().map(DensityMatrix::pure).collect::<Result<Vec<_>>>()?;
    let out = propagate_states(&inputs, &setup.segments(), &setup.channels(), &setup.options())?;
    let (gg, ff, pp, pi) = (out[0].matrix(), out[1].matrix(), out[2].matrix(), out[3].matrix());
    // Λ(|g⟩⟨f|) = (A + iB)/2, Λ(|f⟩⟨g|) = (A − iB)/2
    let a = pp * C64::new(2.0, 0.0) - gg - ff;
    let b = pi * C64::new(2.0, 0.0) - gg - ff;
    let gf = (&a + &b * C64::i()) * C64::new(0.5, 0.0);
    let fg = (&a - &b * C64::i()) * C64::new(0.5, 0.0);

    let per_state: Vec<(f64, f64)> = (0..n_states)
        .into_par_iter()
        .map(|k| {
            let th = if n_states > 1 { 2.0 * PI * k as f64 / (n_states - 1) as f64 } else { 0.0 };
            let (cg, cf) = (C64::new(th.cos(), 0.0), C64::new(th.sin(), 0.0));
            let rho = gg * (cg * cg.conj()) + ff * (cf * cf.conj()) + &gf * (cg * cf.conj()) + &fg * (cf * cg.conj());
            let target = setup.ideal_image(gate, &setup.qubit_ket(cg, cf));
            let f = state_fidelity(&DensityMatrix::from_matrix_unchecked(rho), &target)?;
            Ok((th, f))
        })
        .collect::<Result<_>>()?;
    let mean = per_state.iter().map(|p| p.1).sum::<f64>() / n_states as f64;
    Ok(AveragedFidelity { mean, per_state })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoisePoint {
    pub epsilon: f64,
    pub mean: f64,
    pub stderr: f64,
    pub per_seed: Vec<f64>,
}

/// Mean fidelity from `|g⟩` under amplitude noise, without decoherence.
/// Every (ε, seed) pair is an independent task; results are collected by
/// index.
pub fn noise_robustness_sweep(
    setup: &SingleQubitSetup,
    gate: &SingleQubitGateSpec,
    eps_grid: &[f64],
    seeds: &[u64],
    bins: usize,
) -> Result<Vec<NoisePoint>> {
    if seeds.is_empty() {
        return Err(Error::param("noise sweep needs at least one seed"));
    }
    let tasks: Vec<(usize, u64)> =
        (0..eps_grid.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let psi0 = setup.qubit_ket(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    let target = setup.ideal_image(gate, &psi0);
    let rho0 = DensityMatrix::pure(&psi0)?;
    let fids: Vec<f64> = tasks
        .par_iter()
        .map(|&(i, seed)| {
            let noisy = SingleQubitSetup {
                schedule: apply_amplitude_noise(&setup.schedule, eps_grid[i], bins, seed)?,
                decoherence: false,
                ..setup.clone()
            };
            let opts = EvolveOptions { store_every: usize::MAX, ..noisy.options() };
            let traj = evolve(&rho0, &noisy.segments(), &[], &opts, &[])?;
            state_fidelity(traj.final_state(), &target)
        })
        .collect::<Result<_>>()?;
    Ok(eps_grid
        .iter()
        .enumerate()
        .map(|(i, &epsilon)| {
            let per_seed = fids[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let m = per_seed.len() as f64;
            let mean = per_seed.iter().sum::<f64>() / m;
            let var = if per_seed.len() > 1 {
                per_seed.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            NoisePoint { epsilon, mean, stderr: (var / m).sqrt(), per_seed }
        })
        .collect())
}

/// Relaxation/dephasing of both transmons plus cavity decay.
pub fn two_qubit_channels(model: &TwoQubitModel) -> Vec<CollapseChannel> {
    let it = Operator::identity(model.levels());
    let ic = Operator::identity(model.photons());
    let mut ch = transmon_channels(&model.transmon, &|op| op.kron(&ic).kron(&it));
    ch.extend(transmon_channels(&model.transmon, &|op| it.kron(&ic).kron(op)));
    if model.resonator.kappa > 0.0 {
        ch.push(CollapseChannel { operator: model.cavity_lowering().clone(), rate: model.resonator.kappa });
    }
    ch
}

/// Window of energies treated as one dressed level when building the
/// computational basis.
pub const DRESSING_CLUSTER_TOL: f64 = 2.0 * PI * 10e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoQubitInitial {
    F0g,
    G0f,
}

#[derive(Debug, Clone)]
pub struct TwoQubitOptions {
    pub decoherence: bool,
    pub steps: usize,
    pub initial: TwoQubitInitial,
    /// Run without a calibration curve: drive amplitude from the
    /// perturbative coupling and no carrier shift.
    pub allow_uncompensated: bool,
    pub store_every: usize,
}

impl Default for TwoQubitOptions {
    fn default() -> Self {
        TwoQubitOptions {
            decoherence: true,
            steps: 20_000,
            initial: TwoQubitInitial::F0g,
            allow_uncompensated: false,
            store_every: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoQubitOutcome {
    pub trajectory: Trajectory,
    /// Overlap with the dressed image of the initial state under the gate.
    pub fidelity: f64,
    /// Population left in the dressed initial state.
    pub back_population: f64,
    /// Population of dressed levels labelled with one or more photons.
    pub resonator_population: f64,
}

/// Drive amplitude and carrier shift as functions of time.
pub struct TwoQubitControl<'a> {
    schedule: &'a TwoQubitSchedule,
    curve: Option<&'a CalibrationCurve>,
    linear_slope: f64,
}

impl<'a> TwoQubitControl<'a> {
    pub fn omega_and_shift(&self, t: f64) -> Result<(f64, f64)> {
        let g = self.schedule.couplings_at(t)[0];
        match self.curve {
            Some(c) => {
                let om = c.omega_for_coupling(g)?;
                Ok((om, c.shift_at(om)?))
            }
            None => Ok((g / self.linear_slope, 0.0)),
        }
    }
}

/// Full-model run of the two-qubit gate with ϑ = π/2.
///
/// Both transmons are driven with the same amplitude and phases (0, π). The
/// curve must come from [`crate::calibration::calibrate_two_qubit`]; it maps
/// the per-qubit coupling of the schedule to a drive amplitude and supplies
/// the carrier shift. Fidelities use the dressed states of the undriven,
/// compensated Hamiltonian.
pub fn two_qubit_gate_run(
    model: &TwoQubitModel,
    schedule: &TwoQubitSchedule,
    curve: Option<&CalibrationCurve>,
    opts: &TwoQubitOptions,
) -> Result<TwoQubitOutcome> {
    if (schedule.vartheta - PI / 2.0).abs() > 1e-12 {
        return Err(Error::param("the full-model run drives both qubits equally and needs ϑ = π/2"));
    }
    if curve.is_none() && !opts.allow_uncompensated {
        return Err(Error::Calibration(
            "no compensation curve supplied; pass allow_uncompensated to run without one".into(),
        ));
    }
    let alpha = model.transmon.anharmonicity;
    let linear_slope = crate::calibration::perturbative_coupling(
        model.resonator.couplings[0],
        1.0,
        model.detuning.signed(alpha),
        alpha,
        crate::calibration::FormulaVariant::PlusAlpha,
    )?
    .magnitude;
    if let Some(c) = curve {
        let peak = schedule.coupling.amplitude * (0.5 * schedule.vartheta).sin().max((0.5 * schedule.vartheta).cos());
        if peak > c.max_coupling() {
            return Err(Error::Calibration(format!(
                "the pulse needs g̃ = {:.4} MHz but the calibration reaches only {:.4} MHz; extend the drive grid",
                to_mhz(peak),
                to_mhz(c.max_coupling())
            )));
        }
    }
    let control = TwoQubitControl { schedule, curve, linear_slope };
    let t_end = schedule.duration();
    // Validate the whole track before integrating.
    for k in 0..=1000 {
        control.omega_and_shift(t_end * k as f64 / 1000.0)?;
    }
    let hamiltonian = |t: f64| -> Operator {
        let (om, s) = control.omega_and_shift(t).expect("track validated above");
        model.hamiltonian(&TwoQubitDrive { omega: [om, om], phase: [0.0, PI] }, s)
    };

    let h_idle = hamiltonian(0.0);
    let labels = [
        model.ket(F, 0, G),
        model.ket(G, 0, F),
        model.ket(G, 1, G),
    ];
    let dressed = crate::device_model::dressed_states(&h_idle, &labels, DRESSING_CLUSTER_TOL)?;
    let (d_f0g, d_g0f, d_g1g) = (dressed[0].clone(), dressed[1].clone(), dressed[2].clone());
    let (start, target) = match opts.initial {
        TwoQubitInitial::F0g => (d_f0g.clone(), d_g0f.clone()),
        TwoQubitInitial::G0f => (d_g0f.clone(), d_f0g.clone()),
    };

    // Photon number of each dressed eigenstate, by its dominant bare label.
    let (_, vecs) = h_idle.eigh()?;
    let photon_heavy: Vec<Ket> = vecs
        .into_iter()
        .filter(|v| {
            let best = (0..model.dim()).max_by(|&a, &b| v.amplitude(a).norm_sqr().total_cmp(&v.amplitude(b).norm_sqr()));
            best.map(|i| (i / model.levels()) % model.photons() > 0).unwrap_or(false)
        })
        .collect();

    let obs = vec![
        ("P_f0g".to_string(), Observable::Projector(d_f0g)),
        ("P_g0f".to_string(), Observable::Projector(d_g0f)),
        ("P_g1g".to_string(), Observable::Projector(d_g1g)),
        ("F".to_string(), Observable::Projector(target.clone())),
    ];
    let channels = if opts.decoherence { two_qubit_channels(model) } else { vec![] };
    let eo = EvolveOptions { store_every: opts.store_every, ..EvolveOptions::with_steps(t_end, opts.steps) };
    let rho0 = DensityMatrix::pure(&start)?;
    let trajectory = evolve(&rho0, &[Segment::new(0.0, t_end, hamiltonian)], &channels, &eo, &obs)?;
    let fin = trajectory.final_state();
    let fidelity = state_fidelity(fin, &target)?;
    let back_population = state_fidelity(fin, &start)?;
    let resonator_population = photon_heavy.iter().map(|v| state_fidelity(fin, v)).sum::<Result<f64>>()?;
    Ok(TwoQubitOutcome { trajectory, fidelity, back_population, resonator_population })
}

/// Evolution under the effective three-level Hamiltonian on
/// `{|f0g⟩, |g0f⟩, |g1g⟩}` with the schedule's couplings and phases (0, π).
pub fn effective_two_qubit_segments(schedule: &TwoQubitSchedule) -> Vec<Segment<'_>> {
    let t_end = schedule.duration();
    let mut cuts = vec![0.0];
    cuts.extend(schedule.coupling.kinks());
    cuts.push(t_end);
    cuts.windows(2)
        .map(|w| {
            Segment::new(w[0], w[1], move |t| {
                let g = schedule.couplings_at(t);
                crate::holonomy::effective_three_level_hamiltonian(g[0], g[1], 0.0, PI)
            })
        })
        .collect()
}
