//! Conversions between config units (MHz, kHz, ns) and internal SI units.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// ν in MHz to angular frequency in rad/s.
pub fn mhz(nu: f64) -> f64 {
    TWO_PI * nu * 1e6
}

/// ν in kHz to angular frequency in rad/s.
pub fn khz(nu: f64) -> f64 {
    TWO_PI * nu * 1e3
}

pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

/// Angular frequency in rad/s back to ν in MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / (TWO_PI * 1e6)
}

pub fn to_ns(t: f64) -> f64 {
    t * 1e9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((to_mhz(mhz(16.0)) - 16.0).abs() < 1e-12);
        assert!((to_ns(ns(40.0)) - 40.0).abs() < 1e-12);
        assert!((khz(10.0) - mhz(0.01)).abs() < 1e-6);
    }
}
