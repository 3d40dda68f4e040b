//! Gaussian driving pulse and the accumulated-area phase R(t, τ).

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Ω(t) = Θ/(√π τ_p) exp(−(t − t₀)²/τ_p²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPulse {
    /// Pulse area Θ of the bare envelope, rad.
    pub area_theta: f64,
    /// Width parameter τ_p, ps.
    pub tau_p: f64,
    /// Centre t₀, ps.
    pub center: f64,
    /// ⟨B⟩ used for Ω′ = ⟨B⟩Ω.
    pub b_avg: f64,
}

/// Half-width of the window that holds the pulse, in units of τ_p.
pub const SUPPORT_HALF_WIDTH: f64 = 8.0;

impl GaussianPulse {
    /// Pulse centred at 3τ_p.
    pub fn new(area_theta: f64, tau_p: f64, b_avg: f64) -> Result<Self> {
        Self::with_center(area_theta, tau_p, 3.0 * tau_p, b_avg)
    }

    pub fn with_center(area_theta: f64, tau_p: f64, center: f64, b_avg: f64) -> Result<Self> {
        if !(tau_p > 0.0) {
            return Err(Error::Domain(format!("tau_p must be > 0, got {tau_p}")));
        }
        if !(area_theta >= 0.0) {
            return Err(Error::Domain(format!("pulse area must be >= 0, got {area_theta}")));
        }
        if !(b_avg > 0.0 && b_avg <= 1.0) {
            return Err(Error::Domain(format!("<B> must lie in (0, 1], got {b_avg}")));
        }
        Ok(Self {
            area_theta,
            tau_p,
            center,
            b_avg,
        })
    }

    /// Pulse whose renormalised area ⟨B⟩Θ equals π.
    pub fn pi_pulse(tau_p: f64, b_avg: f64) -> Result<Self> {
        Self::new(PI / b_avg, tau_p, b_avg)
    }

    /// Ω(t), rad/ps.
    pub fn amplitude(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.tau_p;
        self.area_theta / (PI.sqrt() * self.tau_p) * (-x * x).exp()
    }

    /// Ω′(t) = ⟨B⟩Ω(t).
    pub fn renormalized_amplitude(&self, t: f64) -> f64 {
        self.b_avg * self.amplitude(t)
    }

    pub fn peak(&self) -> f64 {
        self.area_theta / (PI.sqrt() * self.tau_p)
    }

    pub fn fwhm(&self) -> f64 {
        2.0 * 2f64.ln().sqrt() * self.tau_p
    }

    /// Time after which Ω is treated as zero.
    pub fn end(&self) -> f64 {
        self.center + SUPPORT_HALF_WIDTH * self.tau_p
    }

    /// ∫_{−∞}^{t} Ω(s) ds / Θ.
    pub fn cumulative_fraction(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.tau_p;
        0.5 * libm::erfc(-x)
    }

    /// R(t, τ) = ½∫_t^{t−τ} Ω′(s) ds.
    pub fn phase_integral_r(&self, t: f64, tau: f64) -> Result<f64> {
        if tau < 0.0 {
            return Err(Error::Domain(format!("tau must be >= 0, got {tau}")));
        }
        Ok(self.phase_integral_r_unchecked(t, tau))
    }

    pub(crate) fn phase_integral_r_unchecked(&self, t: f64, tau: f64) -> f64 {
        let a = (t - self.center) / self.tau_p;
        let b = (t - tau - self.center) / self.tau_p;
        -0.25 * self.area_theta * self.b_avg * erf_difference(a, b)
    }
}

/// erf(a) − erf(b) without cancellation in the tails.
pub fn erf_difference(a: f64, b: f64) -> f64 {
    if a >= 0.0 && b >= 0.0 {
        libm::erfc(b) - libm::erfc(a)
    } else if a <= 0.0 && b <= 0.0 {
        libm::erfc(-a) - libm::erfc(-b)
    } else {
        libm::erf(a) - libm::erf(b)
    }
}
