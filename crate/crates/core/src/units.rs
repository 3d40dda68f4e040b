//! Physical constants and unit conversion.
//!
//! Internally time is measured in ps, rates and frequencies in rad/ps and
//! energies in meV. User-facing energies (ħ × rate) are converted at the
//! boundary with [`HBAR_MEV_PS`].

/// Reduced Planck constant in meV·ps.
pub const HBAR_MEV_PS: f64 = 0.658_211_956_9;

/// Boltzmann constant in meV/K.
pub const KB_MEV_PER_K: f64 = 0.086_173_332_62;

/// Convert an energy ħω in meV to an angular frequency in rad/ps.
pub fn mev_to_rate(e_mev: f64) -> f64 {
    e_mev / HBAR_MEV_PS
}

/// Convert an energy ħω in μeV to an angular frequency in rad/ps.
pub fn uev_to_rate(e_uev: f64) -> f64 {
    mev_to_rate(e_uev * 1e-3)
}

pub fn rate_to_uev(rate: f64) -> f64 {
    rate * HBAR_MEV_PS * 1e3
}

/// `ħω / (2 k_B T)` for angular frequency `omega` (rad/ps) and temperature in K.
/// Returns `f64::INFINITY` at zero temperature.
pub fn thermal_ratio(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        f64::INFINITY
    } else {
        HBAR_MEV_PS * omega / (2.0 * KB_MEV_PER_K * temperature)
    }
}

/// `coth(ħω / 2k_BT)`, with the zero-temperature limit taken analytically.
pub fn thermal_coth(omega: f64, temperature: f64) -> f64 {
    let x = thermal_ratio(omega, temperature);
    if x.is_infinite() || x > 40.0 {
        1.0
    } else {
        1.0 / x.tanh()
    }
}

/// `ω · coth(ħω / 2k_BT)`, finite at ω = 0.
pub fn omega_coth(omega: f64, temperature: f64) -> f64 {
    let x = thermal_ratio(omega, temperature);
    if x.is_infinite() || x > 40.0 {
        omega
    } else if x.abs() < 1e-6 {
        // ω·coth(cω) ≈ 1/c + cω²/3
        let c = x / omega.max(f64::MIN_POSITIVE);
        1.0 / c + c * omega * omega / 3.0
    } else {
        omega / x.tanh()
    }
}
