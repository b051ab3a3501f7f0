//! Time base and physical constants.
//!
//! Simulation time is an unsigned count of picoseconds on the global clock.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Nominal HRP chip rate, chips per second.
pub const CHIP_RATE_HZ: f64 = 499.2e6;

/// Picoseconds per chip at [`CHIP_RATE_HZ`] (~2003.2 ps).
pub const CHIP_PS: f64 = 1e12 / CHIP_RATE_HZ;

pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_S: u64 = 1_000_000_000_000;

/// Picosecond count on the simulation clock.
pub type Picos = u64;

pub fn chips_to_ps(chips: f64) -> f64 {
    chips * CHIP_PS
}

pub fn ps_to_chips(ps: f64) -> f64 {
    ps / CHIP_PS
}

pub fn chips_to_us(chips: usize) -> f64 {
    chips as f64 * CHIP_PS / PS_PER_US as f64
}

pub fn us_to_ps(us: f64) -> i64 {
    (us * PS_PER_US as f64).round() as i64
}

pub fn ps_to_us(ps: f64) -> f64 {
    ps / PS_PER_US as f64
}

/// Time of flight over `meters`, rounded to whole picoseconds.
pub fn tof_ps(meters: f64) -> Picos {
    (meters / SPEED_OF_LIGHT * 1e12).round() as Picos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_covers_0_2998_m_in_one_ns() {
        assert_eq!(tof_ps(0.299_792_458), 1_000);
    }

    #[test]
    fn chip_period() {
        assert!((CHIP_PS - 2_003.205_128).abs() < 1e-3);
    }
}
