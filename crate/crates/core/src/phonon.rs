//! Phonon reservoir: super-Ohmic spectral density, bath correlation phase
//! φ(τ), coherent displacement ⟨B⟩ and the polaron Green functions.
//!
//! The spectral density is `J(ω) = α ω³ exp(-ω²/2ω_b²)`.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::interp::cubic_stencil;
use crate::quadrature::{composite_gauss_legendre, integrate};
use crate::units::{mev_to_rate, omega_coth, thermal_coth};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Upper frequency limit of every ω-integral, in units of ω_b.
pub const OMEGA_MAX_FACTOR: f64 = 8.0;
/// Bath correlations are treated as zero beyond this many 1/ω_b.
pub const CUTOFF_TIME_FACTOR: f64 = 50.0;
/// Default spacing of the tabulated φ(τ), ps.
pub const DEFAULT_TABLE_SPACING: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhononParams {
    /// Exciton-phonon coupling strength, ps².
    pub alpha: f64,
    /// Phonon cutoff frequency, rad/ps.
    pub omega_b: f64,
    /// Temperature, K.
    pub temperature: f64,
}

impl PhononParams {
    pub fn new(alpha: f64, omega_b: f64, temperature: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(omega_b > 0.0) {
            return Err(Error::Domain(format!("omega_b must be > 0, got {omega_b}")));
        }
        if !(temperature >= 0.0) {
            return Err(Error::Domain(format!(
                "temperature must be >= 0, got {temperature}"
            )));
        }
        Ok(Self {
            alpha,
            omega_b,
            temperature,
        })
    }

    /// Construct from ħω_b given in meV.
    pub fn from_cutoff_energy(alpha: f64, hbar_omega_b_mev: f64, temperature: f64) -> Result<Self> {
        Self::new(alpha, mev_to_rate(hbar_omega_b_mev), temperature)
    }

    pub fn omega_max(&self) -> f64 {
        OMEGA_MAX_FACTOR * self.omega_b
    }

    pub fn cutoff_time(&self) -> f64 {
        CUTOFF_TIME_FACTOR / self.omega_b
    }

    /// J(ω)/ω², the weight that enters φ(τ).
    fn reduced_density(&self, omega: f64) -> f64 {
        let wb = self.omega_b;
        self.alpha * omega * (-omega * omega / (2.0 * wb * wb)).exp()
    }

    /// J(ω)·coth(ħω/2k_BT)/ω², finite at ω = 0.
    fn reduced_thermal_density(&self, omega: f64) -> f64 {
        let wb = self.omega_b;
        self.alpha * omega_coth(omega, self.temperature) * (-omega * omega / (2.0 * wb * wb)).exp()
    }
}

/// J(ω) = α ω³ exp(-ω²/2ω_b²) in ps⁻¹.
pub fn spectral_density(omega: f64, p: &PhononParams) -> Result<f64> {
    if omega < 0.0 {
        return Err(Error::Domain(format!(
            "spectral density needs omega >= 0, got {omega}"
        )));
    }
    Ok(omega * omega * p.reduced_density(omega))
}

/// φ(τ) by adaptive quadrature of the ω-integral; φ(-τ) = φ*(τ).
pub fn phi(tau: f64, p: &PhononParams) -> Result<Complex64> {
    if p.alpha == 0.0 {
        return Ok(C0);
    }
    if tau < 0.0 {
        return phi(-tau, p).map(|z| z.conj());
    }
    let wmax = p.omega_max();
    let re = integrate(
        |w| p.reduced_thermal_density(w) * (w * tau).cos(),
        0.0,
        wmax,
        1e-12,
        1e-13,
    )?;
    let im = if tau == 0.0 {
        0.0
    } else {
        -integrate(
            |w| p.reduced_density(w) * (w * tau).sin(),
            0.0,
            wmax,
            1e-12,
            1e-13,
        )?
    };
    Ok(Complex64::new(re, im))
}

/// ⟨B⟩ = exp(-½ φ(0)).
pub fn coherent_displacement(p: &PhononParams) -> Result<f64> {
    if p.alpha == 0.0 {
        return Ok(1.0);
    }
    Ok((-0.5 * phi(0.0, p)?.re).exp())
}

fn green_pair(phi: Complex64, b_avg: f64) -> (Complex64, Complex64) {
    let b2 = b_avg * b_avg;
    // cosh φ − 1 = 2 sinh²(φ/2), which keeps precision for small φ.
    let s = (phi * 0.5).sinh();
    (s * s * (2.0 * b2), phi.sinh() * b2)
}

/// G_g(τ) = ⟨B⟩²(cosh φ(τ) − 1).
pub fn green_g(tau: f64, p: &PhononParams) -> Result<Complex64> {
    let b = coherent_displacement(p)?;
    Ok(green_pair(phi(tau, p)?, b).0)
}

/// G_u(τ) = ⟨B⟩² sinh φ(τ).
pub fn green_u(tau: f64, p: &PhononParams) -> Result<Complex64> {
    let b = coherent_displacement(p)?;
    Ok(green_pair(phi(tau, p)?, b).1)
}

/// g′² exp(φ(τ) − κτ/2): product of the Lorentzian cavity correlation and the
/// normalised phonon correlation. `gprime` already carries one factor ⟨B⟩.
pub fn cavity_correlation_product(
    tau: f64,
    p: &PhononParams,
    gprime: f64,
    kappa: f64,
) -> Result<Complex64> {
    if kappa <= 0.0 {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    if tau < 0.0 {
        return Err(Error::Domain(format!("tau must be >= 0, got {tau}")));
    }
    let ph = phi(tau, p)?;
    Ok((ph - 0.5 * kappa * tau).exp() * (gprime * gprime))
}

/// Which part of φ(τ) to Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiPart {
    Real,
    Imag,
}

/// Tabulated φ(τ) on a uniform grid with cubic interpolation, plus the derived
/// Green functions. Immutable once built.
#[derive(Debug, Clone)]
pub struct BathCorrelationTable {
    params: PhononParams,
    spacing: f64,
    cutoff_time: f64,
    phi_values: Vec<Complex64>,
    g_g: Vec<Complex64>,
    g_u: Vec<Complex64>,
    b_avg: f64,
}

impl BathCorrelationTable {
    pub fn build(p: &PhononParams) -> Result<Self> {
        Self::build_with(p, DEFAULT_TABLE_SPACING, p.cutoff_time())
    }

    pub fn build_with(p: &PhononParams, spacing: f64, cutoff_time: f64) -> Result<Self> {
        if !(spacing > 0.0) || !(cutoff_time > 4.0 * spacing) {
            return Err(Error::Domain(format!(
                "invalid table grid: spacing {spacing}, cutoff {cutoff_time}"
            )));
        }
        let n = (cutoff_time / spacing).round() as usize + 1;
        let cutoff_time = (n - 1) as f64 * spacing;
        let mut phi_values = vec![C0; n];
        if p.alpha > 0.0 {
            // Composite Gauss–Legendre in ω. Each panel spans at most ~3 rad of
            // phase at the largest τ, well inside the rule's exact degree.
            let wmax = p.omega_max();
            let phase = wmax * cutoff_time;
            let panels = ((phase / 2.5).ceil() as usize).max(64);
            let (nodes, weights) = composite_gauss_legendre(0.0, wmax, panels, 20);
            let mut re = vec![0.0; n];
            let mut im = vec![0.0; n];
            for (&w, &wt) in nodes.iter().zip(&weights) {
                let fc = wt * p.reduced_thermal_density(w);
                let fs = wt * p.reduced_density(w);
                let (s1, c1) = (w * spacing).sin_cos();
                let step = Complex64::new(c1, s1);
                let mut z = Complex64::new(1.0, 0.0);
                for k in 0..n {
                    if k % 64 == 0 && k > 0 {
                        let (s, c) = (w * spacing * k as f64).sin_cos();
                        z = Complex64::new(c, s);
                    }
                    re[k] += fc * z.re;
                    im[k] -= fs * z.im;
                    z *= step;
                }
            }
            for k in 0..n {
                phi_values[k] = Complex64::new(re[k], im[k]);
            }
            phi_values[0].im = 0.0;
        }
        let b_avg = (-0.5 * phi_values[0].re).exp();
        let (g_g, g_u) = phi_values.iter().map(|&z| green_pair(z, b_avg)).unzip();
        Ok(Self {
            params: *p,
            spacing,
            cutoff_time,
            phi_values,
            g_g,
            g_u,
            b_avg,
        })
    }

    pub fn params(&self) -> &PhononParams {
        &self.params
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cutoff_time(&self) -> f64 {
        self.cutoff_time
    }

    pub fn b_avg(&self) -> f64 {
        self.b_avg
    }

    pub fn len(&self) -> usize {
        self.phi_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_values.is_empty()
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.spacing).collect()
    }

    pub fn phi_values(&self) -> &[Complex64] {
        &self.phi_values
    }

    /// G_g on the table grid.
    pub fn green_g_values(&self) -> &[Complex64] {
        &self.g_g
    }

    /// G_u on the table grid.
    pub fn green_u_values(&self) -> &[Complex64] {
        &self.g_u
    }

    fn interp(&self, data: &[Complex64], tau: f64) -> Complex64 {
        if tau > self.cutoff_time {
            return C0;
        }
        let (b, w) = cubic_stencil(0.0, self.spacing, data.len(), tau);
        (0..4).map(|j| data[b + j] * w[j]).sum()
    }

    /// Interpolated φ(τ); φ(−τ) = φ*(τ) and φ ≡ 0 beyond the cutoff time.
    pub fn phi(&self, tau: f64) -> Complex64 {
        if tau < 0.0 {
            self.interp(&self.phi_values, -tau).conj()
        } else {
            self.interp(&self.phi_values, tau)
        }
    }

    pub fn green_g(&self, tau: f64) -> Complex64 {
        green_pair(self.phi(tau), self.b_avg).0
    }

    pub fn green_u(&self, tau: f64) -> Complex64 {
        green_pair(self.phi(tau), self.b_avg).1
    }

    /// A_R(τ) = g′² exp(φ(τ) − κτ/2).
    pub fn cavity_correlation_product(&self, tau: f64, gprime: f64, kappa: f64) -> Complex64 {
        (self.phi(tau) - 0.5 * kappa * tau).exp() * (gprime * gprime)
    }

    /// Half-line Fourier transform ∫₀^∞ φ^i(t) e^{iωt} dt of the real or
    /// imaginary part of φ, by trapezoid on the table grid.
    pub fn phi_fourier(&self, omega: f64, part: PhiPart) -> Result<Complex64> {
        if omega < 0.0 {
            return Err(Error::Domain(format!("omega must be >= 0, got {omega}")));
        }
        let h = self.spacing;
        let n = self.len();
        let mut acc = C0;
        let (s1, c1) = (omega * h).sin_cos();
        let step = Complex64::new(c1, s1);
        let mut z = Complex64::new(1.0, 0.0);
        for k in 0..n {
            if k % 64 == 0 && k > 0 {
                let (s, c) = (omega * h * k as f64).sin_cos();
                z = Complex64::new(c, s);
            }
            let v = match part {
                PhiPart::Real => self.phi_values[k].re,
                PhiPart::Imag => self.phi_values[k].im,
            };
            let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
            acc += z * (w * v);
            z *= step;
        }
        Ok(acc)
    }

    /// Smallest table time beyond which both Green functions stay below
    /// `threshold` in magnitude.
    pub fn kernel_support(&self, threshold: f64) -> f64 {
        let last = (0..self.len())
            .rev()
            .find(|&k| self.g_g[k].norm() > threshold || self.g_u[k].norm() > threshold);
        match last {
            Some(k) => ((k + 1).min(self.len() - 1)) as f64 * self.spacing,
            None => 0.0,
        }
    }

    /// Write the table as text: a `#` header, then `tau re_phi im_phi` per line.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        let p = &self.params;
        writeln!(
            out,
            "# alpha_ps2={:e} omega_b_per_ps={:e} temperature_K={:e} spacing_ps={:e}",
            p.alpha, p.omega_b, p.temperature, self.spacing
        )?;
        writeln!(out, "# tau_ps re_phi im_phi")?;
        for (k, z) in self.phi_values.iter().enumerate() {
            writeln!(out, "{:.17e} {:.17e} {:.17e}", k as f64 * self.spacing, z.re, z.im)?;
        }
        Ok(())
    }

    /// Read a table written by [`BathCorrelationTable::dump`].
    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut params = None;
        let mut spacing = None;
        let mut phi_values = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::config(format!("table line {}", lineno + 1), m.to_string());
            if let Some(rest) = line.strip_prefix('#') {
                let mut kv = std::collections::HashMap::new();
                for item in rest.split_whitespace() {
                    if let Some((k, v)) = item.split_once('=') {
                        let v: f64 = v.parse().map_err(|_| bad("bad header value"))?;
                        kv.insert(k.to_string(), v);
                    }
                }
                if let (Some(a), Some(w), Some(t)) = (
                    kv.get("alpha_ps2"),
                    kv.get("omega_b_per_ps"),
                    kv.get("temperature_K"),
                ) {
                    params = Some(PhononParams::new(*a, *w, *t)?);
                }
                if let Some(h) = kv.get("spacing_ps") {
                    spacing = Some(*h);
                }
                continue;
            }
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("expected three numbers"))?;
            if cols.len() != 3 {
                return Err(bad("expected three columns"));
            }
            phi_values.push(Complex64::new(cols[1], cols[2]));
        }
        let params = params.ok_or_else(|| Error::config("table header", "missing parameters"))?;
        let spacing = spacing.ok_or_else(|| Error::config("table header", "missing spacing"))?;
        if phi_values.len() < 4 {
            return Err(Error::config("table", "fewer than four samples"));
        }
        let b_avg = (-0.5 * phi_values[0].re).exp();
        let (g_g, g_u) = phi_values.iter().map(|&z| green_pair(z, b_avg)).unzip();
        Ok(Self {
            params,
            spacing,
            cutoff_time: (phi_values.len() - 1) as f64 * spacing,
            phi_values,
            g_g,
            g_u,
            b_avg,
        })
    }
}

/// Closed-form value of (Ω²/2)·Re φ^R(Ω) = (π/4) J(Ω) coth(ħΩ/2k_BT).
pub fn adiabatic_dephasing_rate(omega: f64, p: &PhononParams) -> Result<f64> {
    Ok(std::f64::consts::FRAC_PI_4 * spectral_density(omega, p)? * thermal_coth(omega, p.temperature))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_bath() -> PhononParams {
        PhononParams::from_cutoff_energy(0.03, 0.9, 4.0).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(PhononParams::new(-1.0, 1.0, 4.0).is_err());
        assert!(PhononParams::new(0.0, 0.0, 4.0).is_err());
        assert!(PhononParams::new(0.0, 1.0, -1.0).is_err());
        assert!(spectral_density(-0.1, &reference_bath()).is_err());
    }

    #[test]
    fn spectral_density_at_zero_and_at_cutoff() {
        let p = reference_bath();
        assert_eq!(spectral_density(0.0, &p).unwrap(), 0.0);
        let wb = p.omega_b;
        assert!((wb - 1.367_340).abs() < 1e-5);
        let expect = 0.03 * wb.powi(3) * (-0.5f64).exp();
        assert!((spectral_density(wb, &p).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn spectral_density_peak_by_grid_search() {
        let p = reference_bath();
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 0..=100_000 {
            let w = i as f64 * 8.0 * p.omega_b / 100_000.0;
            let v = spectral_density(w, &p).unwrap();
            if v > best {
                best = v;
                arg = w;
            }
        }
        let expect = 3f64.sqrt() * p.omega_b;
        assert!((arg - expect).abs() / expect < 0.01);
    }

    #[test]
    fn zero_coupling_is_exactly_trivial() {
        let p = PhononParams::new(0.0, 1.3, 4.0).unwrap();
        assert_eq!(phi(1.0, &p).unwrap(), C0);
        assert_eq!(coherent_displacement(&p).unwrap(), 1.0);
        assert_eq!(green_g(0.5, &p).unwrap(), C0);
        assert_eq!(green_u(0.5, &p).unwrap(), C0);
        let t = BathCorrelationTable::build(&p).unwrap();
        assert_eq!(t.b_avg(), 1.0);
        assert!(t.phi_values().iter().all(|z| *z == C0));
        let kappa = 0.3;
        let a = cavity_correlation_product(4.0 / kappa, &p, 0.05, kappa).unwrap();
        assert!((a.re - 0.0025 * (-2.0f64).exp()).abs() < 1e-16 && a.im == 0.0);
        assert!((cavity_correlation_product(0.0, &p, 0.05, kappa).unwrap().re - 0.0025).abs() < 1e-17);
    }

    #[test]
    fn phi_zero_matches_refined_quadrature() {
        let p = reference_bath();
        let v = phi(0.0, &p).unwrap();
        assert_eq!(v.im, 0.0);
        // Oracle: composite Gauss-Legendre with 10x the panels.
        let (nodes, weights) = composite_gauss_legendre(0.0, p.omega_max(), 400, 30);
        let oracle: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&w, &wt)| wt * 0.03 * omega_coth(w, 4.0) * (-w * w / (2.0 * p.omega_b.powi(2))).exp())
            .sum();
        assert!((v.re - oracle).abs() / oracle < 1e-8);
    }

    #[test]
    fn phi_decays_and_has_conjugate_symmetry() {
        let p = reference_bath();
        let tau = 25.0 / p.omega_b;
        assert!(phi(tau, &p).unwrap().norm() < 1e-10);
        let a = phi(0.8, &p).unwrap();
        let b = phi(-0.8, &p).unwrap();
        assert!((a - b.conj()).norm() < 1e-15);
    }

    #[test]
    fn coherent_displacement_regression_and_monotonicity() {
        let p4 = reference_bath();
        let b4 = coherent_displacement(&p4).unwrap();
        // Frozen from the independent Gauss-Legendre oracle of φ(0).
        assert!((b4 - B_AVG_REFERENCE_4K).abs() < 1e-9, "{b4:.12}");
        let p20 = PhononParams { temperature: 20.0, ..p4 };
        assert!(coherent_displacement(&p20).unwrap() < b4);
        let p_strong = PhononParams { alpha: 0.06, ..p4 };
        assert!(coherent_displacement(&p_strong).unwrap() < b4);
    }

    /// ⟨B⟩ for α = 0.03 ps², ħω_b = 0.9 meV, T = 4 K.
    const B_AVG_REFERENCE_4K: f64 = 0.961_658_418_3;

    #[test]
    fn green_functions_small_phi_limit() {
        let p = PhononParams::from_cutoff_energy(0.001, 0.9, 4.0).unwrap();
        let b = coherent_displacement(&p).unwrap();
        for tau in [0.0, 0.3, 1.0, 3.0] {
            let ph = phi(tau, &p).unwrap();
            let gu = green_u(tau, &p).unwrap();
            assert!((gu - ph * b * b).norm() <= b * b * ph.norm().powi(3) / 6.0 * 1.01 + 1e-15);
            let gg0 = green_g(0.0, &p).unwrap();
            assert!(gg0.im == 0.0 && gg0.re >= 0.0);
        }
    }

    #[test]
    fn table_interpolation_matches_direct_phi() {
        let p = reference_bath();
        let t = BathCorrelationTable::build(&p).unwrap();
        assert_eq!(t.phi_values()[0].im, 0.0);
        assert!((t.phi_values()[0].re - phi(0.0, &p).unwrap().re).abs() < 1e-11);
        assert!((t.b_avg() - coherent_displacement(&p).unwrap()).abs() < 1e-12);
        for &tau in &[0.0025, 0.1025, 0.7775, 2.3125, 7.0025] {
            let d = phi(tau, &p).unwrap();
            assert!((t.phi(tau) - d).norm() < 1e-8, "tau={tau}");
        }
        assert!(t.green_g(50.0 / p.omega_b).norm() < 1e-10);
        assert!(t.green_u(50.0 / p.omega_b).norm() < 1e-10);
        assert_eq!(t.phi(t.cutoff_time() + 1.0), C0);
    }

    #[test]
    fn fourier_identities_hold() {
        let p = reference_bath();
        let t = BathCorrelationTable::build(&p).unwrap();
        for i in 0..10 {
            let w = p.omega_b * (0.05 + 0.4 * i as f64);
            let re = t.phi_fourier(w, PhiPart::Real).unwrap().re;
            let closed = adiabatic_dephasing_rate(w, &p).unwrap();
            assert!((0.5 * w * w * re - closed).abs() / closed < 1e-6, "w={w}");
            let im = t.phi_fourier(w, PhiPart::Imag).unwrap().im;
            let closed_i = -std::f64::consts::FRAC_PI_4 * spectral_density(w, &p).unwrap();
            assert!((0.5 * w * w * im - closed_i).abs() / closed_i.abs() < 1e-6, "w={w}");
        }
    }

    #[test]
    fn dump_load_round_trip() {
        let p = PhononParams::from_cutoff_energy(0.03, 0.9, 4.0).unwrap();
        let t = BathCorrelationTable::build_with(&p, 0.01, 5.0).unwrap();
        let mut buf = Vec::new();
        t.dump(&mut buf).unwrap();
        let back = BathCorrelationTable::load(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.len(), t.len());
        assert_eq!(back.params(), t.params());
        assert!((back.phi(1.234) - t.phi(1.234)).norm() < 1e-15);
    }
}
