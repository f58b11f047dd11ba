//! Pulse-level simulation and calibration of holonomic gates on multilevel
//! transmons coupled through a transmission-line resonator.
//!
//! The crate is organised bottom-up:
//!
//! * [`hilbert`]: dense operators, kets and density matrices.
//! * [`device_model`]: truncated transmon/resonator operators and the
//!   rotating-frame Hamiltonians.
//! * [`pulses`]: envelopes, phase schedules and amplitude noise.
//! * [`holonomy`]: closed-form gate algebra used as the analytic reference.
//! * [`lindblad`]: master-equation integration, fidelities and sweeps.
//! * [`calibration`]: perturbative and numerically exact effective couplings
//!   and the Stark-shift compensation curve.
//! * [`cli`]: the declarative experiment runner behind the `holosim` binary.
//!
//! Internal frequencies are angular (rad/s) and times are in seconds; the
//! [`units`] helpers convert from the MHz / ns / kHz values used in configs.

pub mod calibration;
pub mod cli;
pub mod device_model;
pub mod error;
pub mod hilbert;
pub mod holonomy;
pub mod lindblad;
pub mod pulses;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
