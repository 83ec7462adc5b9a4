//! Unit conversions at the public-interface boundary.
//!
//! Internally everything runs in microseconds and angular frequency
//! (rad/us). Public interfaces speak ordinary frequency in kHz or MHz;
//! these helpers convert at the boundary and nowhere else.

use std::f64::consts::TAU;

/// kHz (ordinary frequency) to rad/us (angular).
pub fn khz_to_rad_per_us(f_khz: f64) -> f64 {
    f_khz * 1.0e-3 * TAU
}

/// rad/us (angular) to kHz (ordinary frequency).
pub fn rad_per_us_to_khz(w: f64) -> f64 {
    w / TAU * 1.0e3
}

/// MHz (ordinary frequency) to rad/us (angular).
pub fn mhz_to_rad_per_us(f_mhz: f64) -> f64 {
    f_mhz * TAU
}

/// rad/us (angular) to MHz (ordinary frequency).
pub fn rad_per_us_to_mhz(w: f64) -> f64 {
    w / TAU
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn khz_round_trip_is_exact_enough() {
        for &f in &[0.1, 25.6, 230.0, 1.0e4] {
            let back = rad_per_us_to_khz(khz_to_rad_per_us(f));
            assert!(((back - f) / f).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn round_trips_hold_over_many_magnitudes(f in 1e-6f64..1e9) {
            let khz = rad_per_us_to_khz(khz_to_rad_per_us(f));
            prop_assert!(((khz - f) / f).abs() < 1e-12);
            let mhz = rad_per_us_to_mhz(mhz_to_rad_per_us(f));
            prop_assert!(((mhz - f) / f).abs() < 1e-12);
        }
    }

    #[test]
    fn khz_and_mhz_agree() {
        assert!((khz_to_rad_per_us(1000.0) - mhz_to_rad_per_us(1.0)).abs() < 1e-15);
    }
}
