//! Physical constants (CODATA 2018, SI).

pub const HBAR: f64 = 1.054_571_817e-34;
pub const C: f64 = 299_792_458.0;
pub const K_B: f64 = 1.380_649e-23;
pub const ELECTRON_VOLT: f64 = 1.602_176_634e-19;

/// Angular frequency in rad/s corresponding to an energy in eV.
pub fn ev_to_rad_per_s(ev: f64) -> f64 {
    ev * ELECTRON_VOLT / HBAR
}
