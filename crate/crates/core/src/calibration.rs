//! Effective couplings, Stark shifts and the drive-to-coupling calibration.
//!
//! Perturbative expressions take the signed detuning `D = δ_r − δ_q`.
//! Numerical calibration diagonalizes the driven transmon-resonator
//! Hamiltonian and adjusts the common carrier shift `s` until the tracked
//! pair of levels is balanced.

use std::f64::consts::{PI, SQRT_2};
use std::fs;
use std::path::{Path, PathBuf};

use roots::{find_root_brent, Convergency};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device_model::{JcModel, TwoQubitDrive, TwoQubitModel, F, G};
use crate::hilbert::{Ket, Operator};
use crate::pulses::TwoQubitSchedule;
use crate::units::{mhz, to_mhz};
use crate::{Error, Result};

/// Residual accepted at a calibrated point.
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaVariant {
    /// `g̃ = gΩα / (√2 D (D + α))`.
    PlusAlpha,
    /// `g̃ = √2 gΩα / (D (D − α))`.
    MinusAlpha,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkShifts {
    pub eta_g1: f64,
    pub eta_f0: f64,
    /// `η_g1 − η_f0`.
    pub delta_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCoupling {
    pub magnitude: f64,
    pub variant: FormulaVariant,
}

fn check_poles(d: f64, alpha: f64) -> Result<()> {
    let eps = 1e-6 * alpha.abs();
    if !(d.is_finite() && alpha.is_finite()) || d.abs() < eps || (d + alpha).abs() < eps || (d - alpha).abs() < eps {
        return Err(Error::param(format!("detuning {d:e} sits on a pole of the perturbative expressions")));
    }
    Ok(())
}

pub fn perturbative_shifts(g: f64, omega: f64, d: f64, alpha: f64) -> Result<StarkShifts> {
    check_poles(d, alpha)?;
    let o2 = omega * omega;
    let eta_g1 = g * g / d - o2 / (4.0 * (d + alpha));
    let eta_f0 = o2 / (2.0 * d) - 2.0 * g * g / (d + alpha) - 3.0 * o2 / (4.0 * (d - alpha));
    Ok(StarkShifts { eta_g1, eta_f0, delta_s: eta_g1 - eta_f0 })
}

pub fn perturbative_coupling(g: f64, omega: f64, d: f64, alpha: f64, variant: FormulaVariant) -> Result<EffectiveCoupling> {
    check_poles(d, alpha)?;
    let m = match variant {
        FormulaVariant::PlusAlpha => g * omega * alpha / (SQRT_2 * d * (d + alpha)),
        FormulaVariant::MinusAlpha => SQRT_2 * g * omega * alpha / (d * (d - alpha)),
    };
    Ok(EffectiveCoupling { magnitude: m.abs(), variant })
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::param("interpolation needs at least two points of equal length"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Calibration("interpolation abscissae must increase strictly".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![s[0]; 2];
        } else {
            for k in 1..n - 1 {
                if s[k - 1] * s[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / s[k - 1] + w2 / s[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], s[0], s[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        Ok(Pchip { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().expect("non-empty"))
    }

    /// Value at `t`; errors outside the tabulated range.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        let slack = 1e-12 * (hi - lo);
        if !(t >= lo - slack && t <= hi + slack) {
            return Err(Error::Calibration(format!("{t:e} is outside the calibrated range [{lo:e}, {hi:e}]")));
        }
        let t = t.clamp(lo, hi);
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p => (p - 1).min(self.x.len() - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let u = (t - self.x[k]) / h;
        let (h00, h10) = (2.0 * u.powi(3) - 3.0 * u * u + 1.0, u.powi(3) - 2.0 * u * u + u);
        let (h01, h11) = (-2.0 * u.powi(3) + 3.0 * u * u, u.powi(3) - u * u);
        Ok(h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1])
    }
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d.signum() != s0.signum() {
        0.0
    } else if s0.signum() != s1.signum() && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// One calibrated drive amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub omega: f64,
    /// Carrier shift `s`, which equals the differential Stark shift.
    pub shift: f64,
    pub coupling: f64,
    /// Dimensionless residual of the balancing condition.
    pub residual: f64,
}

/// Calibrated `g̃(Ω)` and `Δ_s(Ω)` on a grid of drive amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    points: Vec<CalibrationPoint>,
    coupling: Pchip,
    shift: Pchip,
    inverse: Pchip,
}

impl CalibrationCurve {
    pub fn new(points: Vec<CalibrationPoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.residual.abs() < RESIDUAL_TOL)) {
            return Err(Error::Calibration(format!(
                "residual {:e} at Ω = {:.3} MHz exceeds {RESIDUAL_TOL:e}",
                p.residual,
                to_mhz(p.omega)
            )));
        }
        let om: Vec<f64> = points.iter().map(|p| p.omega).collect();
        let gt: Vec<f64> = points.iter().map(|p| p.coupling).collect();
        let sh: Vec<f64> = points.iter().map(|p| p.shift).collect();
        let coupling = Pchip::new(om.clone(), gt.clone())?;
        let shift = Pchip::new(om.clone(), sh)?;
        let inverse = Pchip::new(gt, om).map_err(|_| {
            Error::Calibration("calibrated coupling is not monotone in the drive amplitude".into())
        })?;
        Ok(CalibrationCurve { points, coupling, shift, inverse })
    }

    pub fn points(&self) -> &[CalibrationPoint] {
        &self.points
    }

    pub fn coupling_at(&self, omega: f64) -> Result<f64> {
        self.coupling.eval(omega)
    }

    pub fn shift_at(&self, omega: f64) -> Result<f64> {
        self.shift.eval(omega)
    }

    /// Drive amplitude producing `coupling`.
    pub fn omega_for_coupling(&self, coupling: f64) -> Result<f64> {
        self.inverse.eval(coupling)
    }

    pub fn max_coupling(&self) -> f64 {
        self.inverse.domain().1
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["omega_drive_MHz_amplitude", "delta_s_MHz", "g_eff_MHz", "residual"])?;
        for p in &self.points {
            let row = [to_mhz(p.omega), to_mhz(p.shift), to_mhz(p.coupling), p.residual];
            w.write_record(row.map(|v| format!("{v:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let v = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Calibration(format!("malformed calibration row in {}", path.display())))
            };
            points.push(CalibrationPoint { omega: mhz(v(0)?), shift: mhz(v(1)?), coupling: mhz(v(2)?), residual: v(3)? });
        }
        Self::new(points)
    }
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&v)?)))
}

/// Cache file for a calibration keyed by `key`.
pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("calibration_{}.csv", &key[..key.len().min(16)]))
}

/// Loads a cached curve or computes and stores it. The flag reports a hit.
pub fn cached_curve(
    dir: &Path,
    key: &str,
    compute: impl FnOnce() -> Result<CalibrationCurve>,
) -> Result<(CalibrationCurve, bool)> {
    let path = cache_path(dir, key);
    if path.exists() {
        return Ok((CalibrationCurve::read_csv(&path)?, true));
    }
    let curve = compute()?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("csv.tmp");
    curve.write_csv(&tmp)?;
    fs::rename(&tmp, &path)?;
    Ok((curve, false))
}

struct Stop {
    residual: f64,
    x_tol: f64,
}

impl Convergency<f64> for Stop {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() < self.residual
    }
    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() < self.x_tol
    }
    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter > 200
    }
}

/// Root of `f` near `guess`, widening a symmetric bracket until it changes
/// sign.
fn root_near(f: &mut dyn FnMut(f64) -> Result<f64>, guess: f64, half_width: f64) -> Result<f64> {
    let mut w = half_width;
    for _ in 0..12 {
        let (lo, hi) = (guess - w, guess + w);
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if flo * fhi <= 0.0 {
            let mut err = None;
            let mut g = |s: f64| match f(s) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            };
            let root = find_root_brent(lo, hi, &mut g, &mut Stop { residual: 1e-9, x_tol: 1e-4 });
            if let Some(e) = err {
                return Err(e);
            }
            return root.map_err(|e| Error::Calibration(format!("shift search failed: {e}")));
        }
        w *= 2.0;
    }
    Err(Error::Calibration(format!("no sign change of the balance condition within ±{:.1} MHz", to_mhz(w))))
}

/// The two eigenstates with most weight on `span{u, v}`, ordered by energy.
struct Pair {
    energies: [f64; 2],
    states: [Ket; 2],
}

fn track_pair(h: &Operator, u: &Ket, v: &Ket) -> Result<Pair> {
    let (w, vecs) = h.eigh()?;
    let weight = |k: usize| vecs[k].inner(u).norm_sqr() + vecs[k].inner(v).norm_sqr();
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)));
    let (mut a, mut b) = (idx[0], idx[1]);
    if w[a] > w[b] {
        std::mem::swap(&mut a, &mut b);
    }
    Ok(Pair { energies: [w[a], w[b]], states: [vecs[a].clone(), vecs[b].clone()] })
}

/// `|⟨u|lower⟩|² − |⟨v|lower⟩|²`.
fn balance(h: &Operator, u: &Ket, v: &Ket) -> Result<f64> {
    let p = track_pair(h, u, v)?;
    Ok(p.states[0].inner(u).norm_sqr() - p.states[0].inner(v).norm_sqr())
}

/// Undriven crossing: `E(u-like) − E(v-like)` is linear in `s`, so two
/// evaluations locate it.
fn undriven_crossing(h_of: &dyn Fn(f64) -> Operator, u: &Ket, v: &Ket) -> Result<f64> {
    let gap = |s: f64| -> Result<f64> {
        let p = track_pair(&h_of(s), u, v)?;
        let ku = if p.states[0].inner(u).norm_sqr() >= p.states[1].inner(u).norm_sqr() { 0 } else { 1 };
        Ok(p.energies[ku] - p.energies[1 - ku])
    };
    let h = mhz(1.0);
    let (f0, f1) = (gap(0.0)?, gap(h)?);
    if (f1 - f0).abs() < 1e-12 * h {
        return Err(Error::Calibration("undriven levels do not tune with the carrier shift".into()));
    }
    Ok(-f0 * h / (f1 - f0))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("calibration grid must start at 0 and increase strictly"));
    }
    Ok(())
}

/// Balanced point of the single-transmon model near `guess`.
pub fn numeric_coupling(model: &JcModel, omega: f64, guess: f64) -> Result<CalibrationPoint> {
    let (u, v) = (model.ket(G, 1), model.ket(F, 0));
    if omega == 0.0 {
        let s = undriven_crossing(&|s| model.hamiltonian(0.0, 0.0, s), &u, &v)?;
        return Ok(CalibrationPoint { omega, shift: s, coupling: 0.0, residual: 0.0 });
    }
    let mut f = |s: f64| balance(&model.hamiltonian(omega, 0.0, s), &u, &v);
    let s = root_near(&mut f, guess, mhz(2.0))?;
    let residual = f(s)?;
    let p = track_pair(&model.hamiltonian(omega, 0.0, s), &u, &v)?;
    Ok(CalibrationPoint { omega, shift: s, coupling: 0.5 * (p.energies[1] - p.energies[0]), residual })
}

/// Single-transmon calibration over `grid` (must start at 0), continuing
/// each root from the previous one.
pub fn calibrate_omega(model: &JcModel, grid: &[f64]) -> Result<CalibrationCurve> {
    check_grid(grid)?;
    let mut points: Vec<CalibrationPoint> = Vec::with_capacity(grid.len());
    for &om in grid {
        let guess = points.last().map(|p| p.shift).unwrap_or(0.0);
        points.push(numeric_coupling(model, om, guess)?);
    }
    CalibrationCurve::new(points)
}

/// Kets used by the two-qubit calibration.
struct TwoQubitLabels {
    g1g: Ket,
    bright: Ket,
    dark: Ket,
}

impl TwoQubitLabels {
    fn new(m: &TwoQubitModel) -> Self {
        let (f0g, g0f) = (m.ket(F, 0, G), m.ket(G, 0, F));
        let r = 1.0 / SQRT_2;
        TwoQubitLabels {
            g1g: m.ket(G, 1, G),
            bright: f0g.sub(&g0f).scale(r.into()),
            dark: f0g.add(&g0f).scale(r.into()),
        }
    }
}

fn symmetric_drive(omega: f64) -> TwoQubitDrive {
    TwoQubitDrive { omega: [omega, omega], phase: [0.0, PI] }
}

/// Pair centre minus dark-level energy, and the effective bright coupling
/// `G = half-splitting × 2√(w_a w_b)`.
fn dark_centred(m: &TwoQubitModel, l: &TwoQubitLabels, omega: f64, s: f64) -> Result<(f64, f64)> {
    let h = m.hamiltonian(&symmetric_drive(omega), s);
    let (w, vecs) = h.eigh()?;
    let kd = (0..w.len())
        .max_by(|&a, &b| vecs[a].inner(&l.dark).norm_sqr().total_cmp(&vecs[b].inner(&l.dark).norm_sqr()))
        .ok_or_else(|| Error::Dimension("empty spectrum".into()))?;
    let p = track_pair(&h, &l.g1g, &l.bright)?;
    let wa = p.states[0].inner(&l.g1g).norm_sqr();
    let wb = p.states[0].inner(&l.bright).norm_sqr();
    let norm = wa + wb;
    let mix = 2.0 * ((wa / norm) * (wb / norm)).sqrt();
    Ok((0.5 * (p.energies[0] + p.energies[1]) - w[kd], 0.5 * (p.energies[1] - p.energies[0]) * mix))
}

/// Two-qubit calibration for symmetric drives with phases (0, π).
///
/// The shift is first balanced on the `{|g1g⟩, |b⟩}` pair and then refined
/// so that the pair is centred on the dark level `(|f0g⟩ + |g0f⟩)/√2`. The
/// stored coupling is per qubit, `G/√2`.
pub fn calibrate_two_qubit(model: &TwoQubitModel, grid: &[f64]) -> Result<CalibrationCurve> {
    check_grid(grid)?;
    let l = TwoQubitLabels::new(model);
    let scale = model.resonator.couplings[0].abs().max(mhz(1.0));
    let mut points: Vec<CalibrationPoint> = Vec::with_capacity(grid.len());
    for &om in grid {
        let seed = if om == 0.0 {
            undriven_crossing(&|s| model.hamiltonian(&symmetric_drive(0.0), s), &l.g1g, &l.bright)?
        } else {
            let guess = points.last().map(|p| p.shift).unwrap_or(0.0);
            let mut f = |s: f64| balance(&model.hamiltonian(&symmetric_drive(om), s), &l.g1g, &l.bright);
            root_near(&mut f, guess, mhz(2.0))?
        };
        let mut f = |s: f64| dark_centred(model, &l, om, s).map(|r| r.0 / scale);
        let s = root_near(&mut f, seed, mhz(10.0))?;
        let (res, big_g) = dark_centred(model, &l, om, s)?;
        let coupling = if om == 0.0 { 0.0 } else { big_g / SQRT_2 };
        points.push(CalibrationPoint { omega: om, shift: s, coupling, residual: res / scale });
    }
    CalibrationCurve::new(points)
}

/// Evenly spaced grid `[0, max]` with `n` points.
pub fn uniform_grid(max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| max * k as f64 / (n - 1).max(1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackSample {
    pub time: f64,
    pub coupling: f64,
    pub omega: f64,
    pub shift: f64,
}

/// Drive amplitude and carrier shift needed along a two-qubit schedule.
pub fn compensation_track(curve: &CalibrationCurve, schedule: &TwoQubitSchedule, samples: usize) -> Result<Vec<TrackSample>> {
    let t_end = schedule.duration();
    (0..samples.max(2))
        .map(|k| {
            let time = t_end * k as f64 / (samples.max(2) - 1) as f64;
            let coupling = schedule.couplings_at(time)[0];
            let omega = curve.omega_for_coupling(coupling)?;
            Ok(TrackSample { time, coupling, omega, shift: curve.shift_at(omega)? })
        })
        .collect()
}

/// Numerical vs perturbative coupling at one amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariantComparison {
    pub omega: f64,
    pub numeric: f64,
    pub perturbative: f64,
    pub relative_deviation: f64,
}

pub fn compare_variant(
    curve: &CalibrationCurve,
    model: &JcModel,
    omega: f64,
    variant: FormulaVariant,
) -> Result<VariantComparison> {
    let alpha = model.transmon.anharmonicity;
    let numeric = curve.coupling_at(omega)?;
    let perturbative =
        perturbative_coupling(model.coupling, omega, model.detuning.signed(alpha), alpha, variant)?.magnitude;
    Ok(VariantComparison { omega, numeric, perturbative, relative_deviation: (numeric - perturbative).abs() / perturbative })
}

/// Relative departure of `g̃(Ω)` from the straight line through the
/// origin and `g̃(Ω_ref)`.
pub fn nonlinearity(curve: &CalibrationCurve, omega_ref: f64, omega: f64) -> Result<f64> {
    let linear = curve.coupling_at(omega_ref)? * omega / omega_ref;
    Ok((curve.coupling_at(omega)? - linear).abs() / linear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_model::{DetuningParams, ResonatorParams, ResonatorPlacement, TransmonParams};
    use proptest::prelude::*;

    fn jc() -> JcModel {
        JcModel::new(TransmonParams::default(), 3, mhz(65.0), DetuningParams::default()).unwrap()
    }

    #[test]
    fn perturbative_reference_values() {
        let alpha = mhz(400.0);
        let d = DetuningParams::default().signed(alpha);
        let s = perturbative_shifts(mhz(65.0), 0.0, d, alpha).unwrap();
        assert!((s.delta_s / mhz(1.0) + 18.308).abs() < 1e-3, "{}", s.delta_s / mhz(1.0));
        let a = perturbative_coupling(mhz(65.0), mhz(20.0), d, alpha, FormulaVariant::PlusAlpha).unwrap();
        assert!((a.magnitude / mhz(1.0) - 0.6128).abs() < 1e-3);
        assert!(perturbative_coupling(mhz(65.0), mhz(20.0), -alpha, alpha, FormulaVariant::MinusAlpha).is_err());
        assert!(perturbative_shifts(mhz(65.0), 1.0, 0.0, alpha).is_err());
    }

    #[test]
    fn pchip_reproduces_cubic_free_data() {
        let x: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let p = Pchip::new(x, y).unwrap();
        for t in [0.0, 0.3, 2.5, 6.99, 7.0] {
            assert!((p.eval(t).unwrap() - (2.0 * t + 1.0)).abs() < 1e-12);
        }
        assert!(p.eval(7.5).is_err());
        assert!(Pchip::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn pchip_preserves_monotonicity(steps in prop::collection::vec(0.0f64..3.0, 3..12), t in 0.0f64..1.0) {
            let x: Vec<f64> = (0..=steps.len()).map(|k| k as f64).collect();
            let mut y = vec![0.0];
            for s in &steps { y.push(y.last().unwrap() + s); }
            let p = Pchip::new(x.clone(), y.clone()).unwrap();
            let n = steps.len() as f64;
            let a = p.eval(t * n).unwrap();
            let b = p.eval((t * n + 0.01).min(n)).unwrap();
            prop_assert!(b >= a - 1e-12);
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert!((p.eval(*xi).unwrap() - yi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn undriven_shift_near_perturbative() {
        let m = jc();
        let p = numeric_coupling(&m, 0.0, 0.0).unwrap();
        assert!((p.shift / mhz(1.0) + 18.09).abs() < 0.05, "{}", p.shift / mhz(1.0));
    }

    #[test]
    fn weak_drive_matches_plus_alpha_variant() {
        let m = jc();
        let curve = calibrate_omega(&m, &uniform_grid(mhz(40.0), 5)).unwrap();
        let c = compare_variant(&curve, &m, mhz(20.0), FormulaVariant::PlusAlpha).unwrap();
        assert!(c.relative_deviation < 0.1, "{c:?}");
        assert!(curve.points().iter().all(|p| p.residual.abs() < RESIDUAL_TOL));
    }

    #[test]
    fn placement_above_also_calibrates() {
        let det = DetuningParams { placement: ResonatorPlacement::Above, ..Default::default() };
        let m = JcModel::new(TransmonParams::default(), 3, mhz(65.0), det).unwrap();
        let curve = calibrate_omega(&m, &uniform_grid(mhz(20.0), 3)).unwrap();
        assert!(curve.coupling_at(mhz(20.0)).unwrap() > 0.0);
    }

    #[test]
    fn curve_csv_round_trip_is_lossless() {
        let m = jc();
        let curve = calibrate_omega(&m, &uniform_grid(mhz(30.0), 4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (_, hit) = cached_curve(dir.path(), "abc123", || Ok(curve.clone())).unwrap();
        assert!(!hit);
        let (back, hit) = cached_curve(dir.path(), "abc123", || unreachable!()).unwrap();
        assert!(hit);
        for (a, b) in back.points().iter().zip(curve.points()) {
            assert!((a.omega - b.omega).abs() <= 1e-15 * b.omega.abs());
            assert!((a.shift - b.shift).abs() <= 1e-15 * b.shift.abs());
            assert!((a.coupling - b.coupling).abs() <= 1e-15 * b.coupling.abs());
        }
    }

    #[test]
    fn two_qubit_curve_is_monotone_and_symmetric_at_zero() {
        let m = TwoQubitModel::new(TransmonParams::default(), ResonatorParams::default(), DetuningParams::default()).unwrap();
        let curve = calibrate_two_qubit(&m, &uniform_grid(mhz(60.0), 4)).unwrap();
        let pts = curve.points();
        assert_eq!(pts[0].coupling, 0.0);
        assert!(pts.windows(2).all(|w| w[1].coupling > w[0].coupling));
        assert!(curve.omega_for_coupling(2.0 * curve.max_coupling()).is_err());
    }

    proptest! {
        #[test]
        fn perturbative_parity_in_omega(g in 1.0f64..100.0, om in 0.0f64..400.0, below: bool) {
            let alpha = mhz(400.0);
            let d = if below { mhz(-1000.0) } else { mhz(1000.0) };
            let (g, om) = (mhz(g), mhz(om));
            let a = perturbative_shifts(g, om, d, alpha).unwrap();
            let b = perturbative_shifts(g, -om, d, alpha).unwrap();
            prop_assert_eq!(a, b);
            for v in [FormulaVariant::PlusAlpha, FormulaVariant::MinusAlpha] {
                let c = perturbative_coupling(g, om, d, alpha, v).unwrap().magnitude;
                prop_assert_eq!(c, perturbative_coupling(g, -om, d, alpha, v).unwrap().magnitude);
                prop_assert_eq!(perturbative_coupling(g, 0.0, d, alpha, v).unwrap().magnitude, 0.0);
            }
        }

        #[test]
        fn uncoupled_limit(om in 0.0f64..400.0) {
            let alpha = mhz(400.0);
            let d = mhz(-1000.0);
            let om = mhz(om);
            let s = perturbative_shifts(0.0, om, d, alpha).unwrap();
            prop_assert!((s.eta_g1 + om * om / (4.0 * (d + alpha))).abs() <= 1e-12 * om * om / alpha);
            prop_assert_eq!(perturbative_coupling(0.0, om, d, alpha, FormulaVariant::PlusAlpha).unwrap().magnitude, 0.0);
        }

        #[test]
        fn balance_is_symmetric_under_relabelling(om in 1.0f64..300.0, s in -40.0f64..40.0) {
            let m = jc();
            let h = m.hamiltonian(mhz(om), 0.0, mhz(s));
            let (u, v) = (m.ket(G, 1), m.ket(F, 0));
            let a = track_pair(&h, &u, &v).unwrap();
            let b = track_pair(&h, &v, &u).unwrap();
            prop_assert_eq!(a.energies, b.energies);
            prop_assert!((balance(&h, &u, &v).unwrap() + balance(&h, &v, &u).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_coupling_vanishes_linearly_with_g() {
        let small = |g: f64| {
            let m = JcModel::new(TransmonParams::default(), 3, mhz(g), DetuningParams::default()).unwrap();
            let guess = numeric_coupling(&m, 0.0, 0.0).unwrap().shift;
            numeric_coupling(&m, mhz(40.0), guess).unwrap().coupling
        };
        let (a, b) = (small(2.0), small(4.0));
        assert!(a > 0.0 && (b / a - 2.0).abs() < 0.02, "{a} {b}");
    }

    #[test]
    fn hash_is_stable() {
        let a = content_hash(&serde_json::json!({"b": 1, "a": [1.5, 2]})).unwrap();
        let b = content_hash(&serde_json::json!({"a": [1.5, 2], "b": 1})).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
