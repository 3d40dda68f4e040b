//! Scenario files, parameter sweeps and the bundled presets.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_str, PointSpec, ScenarioConfig};
pub use run::{run_scenario, write_rate_curves, RunOptions, RunRecord};

use crate::units::HBAR_MEV_PS;

/// Ω(E_B/2ħ)/Ω(0) = exp[−(τ_p E_B/4ħ)²] for a Gaussian pulse of width
/// τ_p (ps) and biexciton binding energy E_B (meV). Small values mean the
/// two-photon resonance is well outside the pulse spectrum.
pub fn spectral_leakage_ratio(tau_p: f64, binding_energy: f64) -> f64 {
    let x = tau_p * binding_energy / (4.0 * HBAR_MEV_PS);
    (-x * x).exp()
}

/// Bundled scenario files, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1a", include_str!("../../presets/fig1a.toml")),
    ("fig1b", include_str!("../../presets/fig1b.toml")),
    ("fig1cd", include_str!("../../presets/fig1cd.toml")),
    ("fig2", include_str!("../../presets/fig2.toml")),
    ("fig3", include_str!("../../presets/fig3.toml")),
    ("fig4", include_str!("../../presets/fig4.toml")),
    ("fig5", include_str!("../../presets/fig5.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|&(_, t)| t)
}

/// Preset text, or a config error listing the known names.
pub fn config_preset(name: &str) -> crate::error::Result<&'static str> {
    preset(name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        crate::error::Error::config(
            "--preset",
            format!("unknown preset `{name}` (known: {})", names.join(", ")),
        )
    })
}
