//! Physical constants and conversions into the internal unit system:
//! lengths in µm, times in µs, energies as angular frequencies in rad/µs
//! (ħ = 1), masses in ħ·µs/µm².

use std::f64::consts::TAU;

/// Reduced Planck constant, J·s (CODATA 2018, exact from h).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;
/// Unified atomic mass unit, kg (CODATA 2018).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of ⁸⁷Rb in atomic mass units.
pub const RB87_MASS_U: f64 = 86.909_180_520;

const MICRO: f64 = 1e-6;

/// `C₃/h` in GHz·µm³ → `C₃/ħ` in rad/µs·µm³.
pub fn c3_from_ghz_um3(c3_over_h: f64) -> f64 {
    TAU * c3_over_h * 1e9 * MICRO
}

pub fn c3_to_ghz_um3(c3: f64) -> f64 {
    c3 / (TAU * 1e9 * MICRO)
}

/// Kelvin → rad/µs via `k_B T / ħ`.
pub fn kelvin_to_rad_per_us(t: f64) -> f64 {
    K_B * t / HBAR * MICRO
}

pub fn rad_per_us_to_kelvin(e: f64) -> f64 {
    e * HBAR / (K_B * MICRO)
}

pub fn millikelvin_to_rad_per_us(t_mk: f64) -> f64 {
    kelvin_to_rad_per_us(t_mk * 1e-3)
}

/// Mass in kg → `m·µm²/(ħ·µs)`.
pub fn mass_to_internal(kg: f64) -> f64 {
    kg * 1e-12 / (HBAR * MICRO)
}

pub fn rb87_mass_internal() -> f64 {
    mass_to_internal(RB87_MASS_U * ATOMIC_MASS_UNIT)
}

/// Damping rate in 1/ms → 1/µs.
pub fn per_ms_to_per_us(rate: f64) -> f64 {
    rate * 1e-3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rubidium_mass() {
        let m = rb87_mass_internal();
        assert!((m - 1368.48).abs() < 0.01, "{m}");
        assert!((RB87_MASS_U * ATOMIC_MASS_UNIT - 1.44316e-25).abs() < 1e-30);
    }

    #[test]
    fn c3_conversion_round_trip() {
        let c3 = c3_from_ghz_um3(2.39);
        assert!((c3 - 2.0 * std::f64::consts::PI * 2390.0).abs() < 1e-9);
        assert!((c3_to_ghz_um3(c3) - 2.39).abs() < 1e-14);
    }

    #[test]
    fn trap_depth_conversion() {
        let d = millikelvin_to_rad_per_us(10.0);
        assert!((d - 1309.2).abs() < 0.5, "{d}");
        assert!((rad_per_us_to_kelvin(d) - 0.01).abs() < 1e-15);
    }
}
