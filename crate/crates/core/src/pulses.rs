//! Pulse envelopes, phase schedules and amplitude noise.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device_model::TwoToneDrive;
use crate::{Error, Result};

/// Relative accuracy of [`envelope_area`].
pub const AREA_RTOL: f64 = 1e-12;
/// Tolerance of the cyclic condition `∫Ω dt = π`.
pub const CYCLIC_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Square,
    /// Quarter-period sin² rise, flat top on `[T/4, 3T/4]`, mirrored fall.
    SineSquaredRamp,
    /// Piecewise-linear profile; `points` are `(t/T, value/A)` pairs in
    /// increasing time covering `[0, 1]`.
    Sampled { points: Vec<(f64, f64)> },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        if let Shape::Sampled { points } = self {
            if points.len() < 2 {
                return Err(Error::param("sampled shape needs at least two points"));
            }
            let first = points[0].0;
            let last = points[points.len() - 1].0;
            if first != 0.0 || last != 1.0 {
                return Err(Error::param("sampled shape must start at t/T = 0 and end at t/T = 1"));
            }
            if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::param("sampled shape times must be strictly increasing"));
            }
            if points.iter().any(|p| !(p.1 >= 0.0 && p.1.is_finite())) {
                return Err(Error::param("sampled shape values must be non-negative"));
            }
        }
        Ok(())
    }

    /// Unit-amplitude, unit-duration profile at `x = t/T ∈ [0, 1]`.
    fn unit(&self, x: f64) -> f64 {
        match self {
            Shape::Square => 1.0,
            Shape::SineSquaredRamp => {
                if x < 0.25 {
                    (TAU * x).sin().powi(2)
                } else if x <= 0.75 {
                    1.0
                } else {
                    (TAU * (1.0 - x)).sin().powi(2)
                }
            }
            Shape::Sampled { points } => {
                let k = points.partition_point(|p| p.0 <= x).clamp(1, points.len() - 1);
                let (x0, y0) = points[k - 1];
                let (x1, y1) = points[k];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Interior points (in units of T) where the profile is not smooth.
    fn unit_kinks(&self) -> Vec<f64> {
        match self {
            Shape::Square => vec![],
            Shape::SineSquaredRamp => vec![0.25, 0.75],
            Shape::Sampled { points } => points[1..points.len() - 1].iter().map(|p| p.0).collect(),
        }
    }
}

/// Non-negative pulse envelope supported on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub shape: Shape,
    /// Peak amplitude A in rad/s.
    pub amplitude: f64,
    /// Duration T in s.
    pub duration: f64,
}

impl Envelope {
    pub fn new(shape: Shape, amplitude: f64, duration: f64) -> Result<Self> {
        shape.validate()?;
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::param("envelope amplitude must be non-negative"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::param("envelope duration must be positive"));
        }
        Ok(Envelope { shape, amplitude, duration })
    }

    pub fn square(amplitude: f64, duration: f64) -> Result<Self> {
        Envelope::new(Shape::Square, amplitude, duration)
    }

    pub fn sine_squared_ramp(amplitude: f64, duration: f64) -> Result<Self> {
        Envelope::new(Shape::SineSquaredRamp, amplitude, duration)
    }

    pub fn value(&self, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) {
            return 0.0;
        }
        self.amplitude * self.shape.unit(t / self.duration)
    }

    /// Interior non-smooth points in s.
    pub fn kinks(&self) -> Vec<f64> {
        self.shape.unit_kinks().into_iter().map(|x| x * self.duration).collect()
    }

    pub fn area(&self) -> f64 {
        self.area_between(0.0, self.duration)
    }

    /// `∫_{t0}^{t1} value(t) dt`, integrating each smooth piece separately.
    pub fn area_between(&self, t0: f64, t1: f64) -> f64 {
        let (lo, hi) = (t0.max(0.0), t1.min(self.duration));
        if !(hi > lo) {
            return 0.0;
        }
        let mut cuts = vec![lo];
        cuts.extend(self.kinks().into_iter().filter(|&k| k > lo && k < hi));
        cuts.push(hi);
        cuts.windows(2)
            .map(|w| adaptive_simpson(&|t| self.value(t), w[0], w[1], AREA_RTOL))
            .sum()
    }

    /// Time at which the running area reaches `fraction` of the total.
    pub fn area_quantile(&self, fraction: f64) -> f64 {
        match self.shape {
            Shape::Square | Shape::SineSquaredRamp if (fraction - 0.5).abs() < 1e-15 => {
                return 0.5 * self.duration;
            }
            _ => {}
        }
        let target = fraction * self.area();
        let (mut lo, mut hi) = (0.0, self.duration);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.area_between(0.0, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * self.duration {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

pub fn envelope_area(e: &Envelope) -> f64 {
    e.area()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    let scale = whole.abs().max((b - a) * fa.abs().max(fb.abs()).max(fm.abs())).max(f64::MIN_POSITIVE);
    recurse(f, a, b, fa, fm, fb, whole, rtol * scale, 40)
}

/// Constant drive phases over one time interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSegment {
    pub start: f64,
    pub end: f64,
    /// φ₀ on the g–e tone.
    pub phase_ge: f64,
    /// φ₁ on the f–e tone.
    pub phase_fe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub segments: Vec<PhaseSegment>,
}

impl PhaseSchedule {
    /// Checks that the segments tile `[0, duration]`.
    pub fn validate(&self, duration: f64) -> Result<()> {
        let tol = 1e-12 * duration;
        let first = self.segments.first().ok_or_else(|| Error::param("empty phase schedule"))?;
        if first.start.abs() > tol {
            return Err(Error::param("phase schedule must start at t = 0"));
        }
        for w in self.segments.windows(2) {
            if (w[1].start - w[0].end).abs() > tol {
                return Err(Error::param("phase segments leave a gap or overlap"));
            }
        }
        for s in &self.segments {
            if !(s.end > s.start) {
                return Err(Error::param("phase segment has non-positive length"));
            }
        }
        if (self.segments[self.segments.len() - 1].end - duration).abs() > tol {
            return Err(Error::param("phase schedule must end at the pulse duration"));
        }
        Ok(())
    }
}

/// Piecewise-constant amplitude multiplier `1 + ε_k` over equal bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeNoise {
    pub epsilon: Vec<f64>,
}

/// Two-tone drive on one transmon: total envelope Ω(t), split between the
/// tones as `Ω0e = Ω sin(θ/2)`, `Ω1e = Ω cos(θ/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub envelope: Envelope,
    pub theta: f64,
    pub phases: PhaseSchedule,
    #[serde(default)]
    pub noise: Option<AmplitudeNoise>,
}

/// Interval on which the drive is a smooth function of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub phase_ge: f64,
    pub phase_fe: f64,
    /// Noise multiplier on this interval.
    pub scale: f64,
}

impl PulseSchedule {
    pub fn duration(&self) -> f64 {
        self.envelope.duration
    }

    pub fn validate(&self) -> Result<()> {
        self.envelope.shape.validate()?;
        if !(0.0..=PI).contains(&self.theta) {
            return Err(Error::param("theta must lie in [0, π]"));
        }
        self.phases.validate(self.duration())?;
        if self.noise.is_none() {
            let area = self.envelope.area();
            if ((area - PI) / PI).abs() > CYCLIC_RTOL {
                return Err(Error::param(format!("cyclic condition violated: pulse area {area} ≠ π")));
            }
        }
        Ok(())
    }

    /// Pieces split at phase boundaries, noise bins and envelope kinks.
    pub fn pieces(&self) -> Vec<Piece> {
        let t_end = self.duration();
        let mut cuts: Vec<f64> = vec![0.0, t_end];
        cuts.extend(self.phases.segments.iter().map(|s| s.end));
        cuts.extend(self.envelope.kinks());
        if let Some(n) = &self.noise {
            let bins = n.epsilon.len();
            cuts.extend((1..bins).map(|k| t_end * k as f64 / bins as f64));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);
        cuts.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let seg = self
                    .phases
                    .segments
                    .iter()
                    .find(|s| mid >= s.start && mid < s.end)
                    .unwrap_or(&self.phases.segments[self.phases.segments.len() - 1]);
                Piece {
                    start: w[0],
                    end: w[1],
                    phase_ge: seg.phase_ge,
                    phase_fe: seg.phase_fe,
                    scale: 1.0 + self.epsilon_at(mid),
                }
            })
            .collect()
    }

    fn epsilon_at(&self, t: f64) -> f64 {
        match &self.noise {
            None => 0.0,
            Some(n) => {
                let bins = n.epsilon.len();
                let k = ((t / self.duration()) * bins as f64).floor() as usize;
                n.epsilon[k.min(bins - 1)]
            }
        }
    }

    /// Drive on `piece` at time `t`.
    pub fn drive(&self, piece: &Piece, t: f64) -> TwoToneDrive {
        let om = self.envelope.value(t) * piece.scale;
        TwoToneDrive {
            omega_ge: om * (0.5 * self.theta).sin(),
            omega_fe: om * (0.5 * self.theta).cos(),
            phase_ge: piece.phase_ge,
            phase_fe: piece.phase_fe,
        }
    }

    /// Total amplitude including noise.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        self.envelope.value(t) * (1.0 + self.epsilon_at(t))
    }
}

/// Single-loop schedule: two intervals of area π/2 each, phases
/// `(φ, π)` then `(φ + π + γ, γ)`.
///
/// The two intervals split the pulse where the running area reaches π/2,
/// which is `T/2` for the symmetric shapes.
pub fn build_single_loop_schedule(theta: f64, phi: f64, gamma: f64, omega_max: f64, shape: Shape) -> Result<PulseSchedule> {
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(Error::param("Ω_max must be positive"));
    }
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::param("theta must lie in [0, π]"));
    }
    if !(0.0..TAU).contains(&phi) || !(0.0..TAU).contains(&gamma) {
        return Err(Error::param("phi and gamma must lie in [0, 2π)"));
    }
    shape.validate()?;
    let unit_area = Envelope::new(shape.clone(), 1.0, 1.0)?.area();
    if !(unit_area > 0.0) {
        return Err(Error::param("envelope shape has zero area"));
    }
    let duration = PI / (omega_max * unit_area);
    let envelope = Envelope::new(shape, omega_max, duration)?;
    let mid = envelope.area_quantile(0.5);
    let wrap = |x: f64| x.rem_euclid(TAU);
    let phases = PhaseSchedule {
        segments: vec![
            PhaseSegment { start: 0.0, end: mid, phase_ge: wrap(phi), phase_fe: PI },
            PhaseSegment { start: mid, end: duration, phase_ge: wrap(phi + PI + gamma), phase_fe: wrap(gamma) },
        ],
    };
    let s = PulseSchedule { envelope, theta, phases, noise: None };
    s.validate()?;
    Ok(s)
}

/// Multiplies the amplitude by `1 + ε(t)`, with ε piecewise constant over
/// `bins` equal intervals, drawn uniformly from `[-ε_max, ε_max]` and shifted
/// to zero mean.
pub fn apply_amplitude_noise(s: &PulseSchedule, eps_max: f64, bins: usize, seed: u64) -> Result<PulseSchedule> {
    if !(eps_max >= 0.0 && eps_max.is_finite()) {
        return Err(Error::param("ε_max must be non-negative"));
    }
    if bins == 0 {
        return Err(Error::param("noise needs at least one bin"));
    }
    if s.noise.is_some() {
        return Err(Error::param("schedule already carries amplitude noise"));
    }
    if eps_max == 0.0 {
        return Ok(s.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps: Vec<f64> = (0..bins).map(|_| rng.gen_range(-eps_max..=eps_max)).collect();
    let mean = eps.iter().sum::<f64>() / bins as f64;
    for e in &mut eps {
        *e -= mean;
    }
    Ok(PulseSchedule {
        noise: Some(AmplitudeNoise { epsilon: eps }),
        ..s.clone()
    })
}

/// Coupling envelope of the two-qubit gate with total area π.
///
/// The per-qubit couplings are `g̃₁ = g(t) sin(ϑ/2)` and `g̃₂ = g(t) cos(ϑ/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitSchedule {
    pub coupling: Envelope,
    pub vartheta: f64,
}

impl TwoQubitSchedule {
    /// Sine-squared-ramp pulse of duration `duration` with `∫g dt = π`.
    pub fn new(vartheta: f64, duration: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&vartheta) {
            return Err(Error::param("ϑ must lie in [0, π]"));
        }
        let unit = Envelope::sine_squared_ramp(1.0, duration)?.area();
        let coupling = Envelope::sine_squared_ramp(PI / unit, duration)?;
        Ok(TwoQubitSchedule { coupling, vartheta })
    }

    pub fn duration(&self) -> f64 {
        self.coupling.duration
    }

    /// `[g̃₁(t), g̃₂(t)]`.
    pub fn couplings_at(&self, t: f64) -> [f64; 2] {
        let g = self.coupling.value(t);
        [g * (0.5 * self.vartheta).sin(), g * (0.5 * self.vartheta).cos()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz, ns};
    use proptest::prelude::*;

    #[test]
    fn analytic_areas() {
        let sq = Envelope::square(3.0, 2.0).unwrap();
        assert!((sq.area() - 6.0).abs() < 1e-12);
        let r = Envelope::sine_squared_ramp(3.0, 2.0).unwrap();
        assert!((r.area() - 0.75 * 6.0).abs() / 4.5 < 1e-9);
        let tri = Envelope::new(Shape::Sampled { points: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)] }, 2.0, 3.0).unwrap();
        assert!((tri.area() - 3.0).abs() < 1e-12);
        assert_eq!(sq.value(-1e-9), 0.0);
        assert_eq!(sq.value(2.0 + 1e-9), 0.0);
    }

    #[test]
    fn ramp_continuity() {
        let r = Envelope::sine_squared_ramp(2.5, 1.0).unwrap();
        for k in [0.25, 0.75] {
            assert!((r.value(k - 1e-13) - 2.5).abs() < 1e-12);
            assert!((r.value(k + 1e-13) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn two_qubit_area_consistency() {
        // √2 · area(A = 2π × 11.8 MHz, T = 40 ns) is within 0.2 % of π
        let e = Envelope::sine_squared_ramp(mhz(11.8), ns(40.0)).unwrap();
        let x = 2f64.sqrt() * e.area();
        assert!((x - 3.1455).abs() < 5e-4);
        assert!(((x - PI) / PI).abs() < 2e-3);
        let s = TwoQubitSchedule::new(PI / 2.0, ns(40.0)).unwrap();
        let g = s.couplings_at(ns(20.0));
        assert!((g[0] - g[1]).abs() < 1e-6);
        assert!((g[0] / mhz(1.0) - 11.785).abs() < 1e-3);
    }

    #[test]
    fn single_loop_examples() {
        let s = build_single_loop_schedule(PI / 2.0, 0.0, PI, mhz(16.0), Shape::Square).unwrap();
        assert!((s.duration() - ns(31.25)).abs() < 1e-15);
        let p = s.pieces();
        let d = s.drive(&p[0], 1e-9);
        assert!((d.omega_ge - mhz(16.0) / 2f64.sqrt()).abs() < 1e-3);
        assert!((d.omega_ge - d.omega_fe).abs() < 1e-3);

        let z = build_single_loop_schedule(1.0, 0.0, 0.0, mhz(16.0), Shape::Square).unwrap();
        let seg = &z.phases.segments;
        assert_eq!((seg[0].phase_ge, seg[0].phase_fe), (0.0, PI));
        assert_eq!((seg[1].phase_ge, seg[1].phase_fe), (PI, 0.0));
        assert!(build_single_loop_schedule(1.0, 0.0, 0.0, 0.0, Shape::Square).is_err());
    }

    #[test]
    fn noise_properties() {
        let s = build_single_loop_schedule(PI / 2.0, 0.0, PI, mhz(16.0), Shape::Square).unwrap();
        assert_eq!(apply_amplitude_noise(&s, 0.0, 1000, 3).unwrap(), s);
        let n = apply_amplitude_noise(&s, 0.2, 1000, 7).unwrap();
        let eps = &n.noise.as_ref().unwrap().epsilon;
        assert_eq!(eps.len(), 1000);
        assert!((eps.iter().sum::<f64>() / 1000.0).abs() < 1e-15);
        assert!(eps.iter().all(|e| e.abs() <= 0.4));
        assert_eq!(n, apply_amplitude_noise(&s, 0.2, 1000, 7).unwrap());
        assert_ne!(n, apply_amplitude_noise(&s, 0.2, 1000, 8).unwrap());
        assert_eq!(n.phases, s.phases);
        assert_eq!(n.pieces().len(), 1000);
    }

    fn arb_shape() -> impl Strategy<Value = Shape> {
        prop_oneof![
            Just(Shape::Square),
            Just(Shape::SineSquaredRamp),
            (0.1f64..0.9, 0.2f64..1.0).prop_map(|(x, y)| Shape::Sampled { points: vec![(0.0, 0.1), (x, y), (1.0, 0.3)] }),
        ]
    }

    proptest! {
        #[test]
        fn schedule_is_cyclic(theta in 0.0f64..=PI, phi in 0.0f64..6.28, gamma in 0.0f64..6.28,
                              om in 1.0f64..500.0, shape in arb_shape()) {
            let s = build_single_loop_schedule(theta, phi, gamma, mhz(om), shape).unwrap();
            prop_assert!(((s.envelope.area() - PI) / PI).abs() < 1e-6);
            let mid = s.phases.segments[0].end;
            prop_assert!((s.envelope.area_between(0.0, mid) - PI / 2.0).abs() < 1e-6);
            let seg = s.phases.segments[0];
            let phi_eff = (seg.phase_ge - seg.phase_fe + PI).rem_euclid(TAU);
            prop_assert!((phi_eff - phi).abs() < 1e-12 || (phi_eff - phi).abs() > TAU - 1e-12);
        }

        #[test]
        fn noise_keeps_boundaries(eps in 0.0f64..0.5, bins in 1usize..50, seed: u64) {
            let s = build_single_loop_schedule(1.0, 0.5, 1.0, mhz(16.0), Shape::SineSquaredRamp).unwrap();
            let n = apply_amplitude_noise(&s, eps, bins, seed).unwrap();
            prop_assert_eq!(&n.phases, &s.phases);
            prop_assert_eq!(&n.envelope, &s.envelope);
            let tiled: f64 = n.pieces().iter().map(|p| p.end - p.start).sum();
            prop_assert!((tiled - s.duration()).abs() < 1e-20);
        }
    }
}
