//! Two-level emitter with the cavity traced out as a photonic reservoir.
//!
//! The exciton sees the cavity only through time-dependent scattering rates
//! built from the reservoir function J′_c(τ) = g′²e^{−κτ/2} (or the full
//! A_R(τ) = g′²e^{φ(τ)−κτ/2}) weighted by the pulse-rotated frame
//! U(t−τ, t) = exp(−iRσ_x). Phonon scattering enters through the polaron
//! Green functions in the same frame.

use std::io::Write;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cavity_qed::{MarkovMode, KERNEL_THRESHOLD};
use crate::error::{Error, Result};
use crate::interp::CubicSpline;
use crate::merit::{beta_factor, DECAYED_LEVEL};
use crate::phonon::{BathCorrelationTable, PhiPart};
use crate::pulse::{GaussianPulse, SUPPORT_HALF_WIDTH};
use crate::quadrature::simpson_weights;
use crate::quantum::evolution::{GridEvolution, Generator, Trajectory};
use crate::quantum::ode::OdeOptions;
use crate::quantum::{HilbertSpace, Mat, C, G, I, X, ZERO};

/// Which cavity reservoir function enters 𝓛_c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CavityKernel {
    /// J′_c(τ) = g′²e^{−κτ/2}, phonon dressing of the cavity coupling kept at ⟨B⟩².
    RealKernel,
    /// A_R(τ) = g′²e^{φ(τ)−κτ/2} with the extra Im A_R terms.
    PhononDressed,
}

/// Which phonon scattering superoperator is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhononScattering {
    /// γ_p, ζ_p, Γ_u from the polaron Green functions.
    Full,
    /// Single-phonon limit with Γ_y, Γ_u^R, Γ_u^I.
    WeakCoupling,
}

/// Scattering rates at one instant. All rates in 1/ps, frequencies in rad/ps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReservoirRates {
    pub gamma_p: f64,
    pub zeta_p: f64,
    /// Γ_u = Γ_u^R + iΓ_u^I.
    pub gamma_u: C,
    pub gamma_c: f64,
    /// Coefficient as it appears in the chosen 𝓛_c form; the full form
    /// carries an extra factor 2 here and ½ in the superoperator.
    pub zeta_c: f64,
    pub omega_tilde: f64,
    pub delta_tilde: f64,
    /// ∫Im A_R sin²R.
    pub im_sin_sq: f64,
    /// ∫Im A_R sin 2R.
    pub im_sin_2r: f64,
    pub gamma_y: f64,
    pub gamma_u_r_wc: f64,
    pub gamma_u_i_wc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhononRates {
    pub gamma_p: f64,
    pub zeta_p: f64,
    pub gamma_u: C,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CavityRates {
    pub gamma_c: f64,
    pub zeta_c: f64,
    pub omega_tilde: f64,
    pub delta_tilde: f64,
    pub im_sin_sq: f64,
    pub im_sin_2r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeakCouplingRates {
    pub gamma_y: f64,
    pub gamma_u_r: f64,
    pub gamma_u_i: f64,
}

/// Ω(t) with the envelope cut to the pulse window.
fn windowed_amplitude(pulse: &GaussianPulse, t: f64) -> f64 {
    if (t - pulse.center).abs() > SUPPORT_HALF_WIDTH * pulse.tau_p {
        0.0
    } else {
        pulse.amplitude(t)
    }
}

fn pulse_start(pulse: &GaussianPulse) -> f64 {
    pulse.center - SUPPORT_HALF_WIDTH * pulse.tau_p
}

/// Simpson nodes and weights on [a, b] with spacing at most `hmax`.
fn simpson_nodes(a: f64, b: f64, hmax: f64) -> impl Iterator<Item = (f64, f64)> {
    let mut n = ((b - a) / hmax).ceil().max(2.0) as usize;
    n += n % 2;
    let h = (b - a) / n as f64;
    simpson_weights(n, h)
        .into_iter()
        .enumerate()
        .map(move |(k, w)| (a + k as f64 * h, w))
}

fn finite_or_err(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature {
            what: what.to_string(),
            error: f64::NAN,
            tolerance: 0.0,
        })
    }
}

/// Step for τ-integrands that involve the bath table.
fn phonon_step(pulse: &GaussianPulse, bath: &BathCorrelationTable) -> f64 {
    bath.spacing().min(pulse.tau_p / 40.0)
}

/// γ_p, ζ_p and Γ_u at time `t`.
pub fn phonon_rates(
    t: f64,
    pulse: &GaussianPulse,
    bath: &BathCorrelationTable,
    mode: MarkovMode,
) -> Result<PhononRates> {
    let omega_t = windowed_amplitude(pulse, t);
    if omega_t == 0.0 || bath.params().alpha == 0.0 {
        return Ok(PhononRates::default());
    }
    let support = bath.kernel_support(KERNEL_THRESHOLD);
    let markov = mode == MarkovMode::AdditionalMarkov;
    let tau_hi = if markov {
        support
    } else {
        support.min(t - pulse_start(pulse))
    };
    if tau_hi <= 0.0 {
        return Ok(PhononRates::default());
    }
    let wprime = pulse.b_avg * omega_t;
    let (mut gp, mut zp, mut gu) = (0.0, 0.0, ZERO);
    for (tau, w) in simpson_nodes(0.0, tau_hi, phonon_step(pulse, bath)) {
        let (r, om) = if markov {
            (-0.5 * wprime * tau, omega_t)
        } else {
            (
                pulse.phase_integral_r_unchecked(t, tau),
                windowed_amplitude(pulse, t - tau),
            )
        };
        let (s2, c2) = (2.0 * r).sin_cos();
        let g_g = bath.green_g(tau);
        let g_u = bath.green_u(tau);
        let f = w * om;
        gp += f * (g_g.re + c2 * g_u.re);
        zp += f * (g_g.re - c2 * g_u.re);
        gu += g_u * (f * s2);
    }
    let half = 0.5 * omega_t;
    Ok(PhononRates {
        gamma_p: finite_or_err("gamma_p", half * gp)?,
        zeta_p: finite_or_err("zeta_p", half * zp)?,
        gamma_u: -gu * half,
    })
}

#[derive(Default)]
struct CavityAcc {
    re_cos_sq: f64,
    re_sin_sq: f64,
    re_sin_2r: f64,
    im_cos_sq: f64,
    im_sin_sq: f64,
    im_sin_2r: f64,
}

impl CavityAcc {
    fn add(&mut self, a: C, r: f64, w: f64) {
        let (s, c) = r.sin_cos();
        let s2 = (2.0 * r).sin();
        let (ar, ai) = (w * a.re, w * a.im);
        self.re_cos_sq += ar * c * c;
        self.re_sin_sq += ar * s * s;
        self.re_sin_2r += ar * s2;
        self.im_cos_sq += ai * c * c;
        self.im_sin_sq += ai * s * s;
        self.im_sin_2r += ai * s2;
    }
}

/// Γ_c, ζ_c, Ω̃ and, for the full kernel, Δ̃ and the Im A_R terms at time `t`.
///
/// Wherever the bath correlation has died out and R(t, τ) no longer changes,
/// the τ-integral of the exponential reservoir function is done in closed
/// form, so there is no truncation of the cavity memory.
pub fn cavity_rates(
    t: f64,
    pulse: &GaussianPulse,
    bath: Option<&BathCorrelationTable>,
    gprime: f64,
    kappa: f64,
    kernel: CavityKernel,
    mode: MarkovMode,
) -> Result<CavityRates> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    if gprime == 0.0 {
        return Ok(CavityRates::default());
    }
    let g2 = gprime * gprime;
    let p = 0.5 * kappa;
    let bath = bath.filter(|b| kernel == CavityKernel::PhononDressed && b.params().alpha > 0.0);
    let a1 = bath.map_or(0.0, |b| b.kernel_support(KERNEL_THRESHOLD));
    let h_phi = bath.map_or(f64::INFINITY, |b| phonon_step(pulse, b));
    let a_of = |tau: f64| -> C {
        let phi = bath.map_or(ZERO, |b| b.phi(tau));
        (phi + C::new(-p * tau, 0.0)).exp() * g2
    };
    let mut acc = CavityAcc::default();

    match mode {
        MarkovMode::AdditionalMarkov => {
            let wprime = pulse.b_avg * windowed_amplitude(pulse, t);
            if a1 > 0.0 {
                for (tau, w) in simpson_nodes(0.0, a1, h_phi) {
                    acc.add(a_of(tau), -0.5 * wprime * tau, w);
                }
            }
            // ∫_{a1}^∞ e^{−pτ}e^{iwτ} dτ, with 2R = −wτ.
            let e0 = (-p * a1).exp() / p;
            let ii = C::new(-p, wprime).scale(a1).exp() / C::new(p, -wprime);
            acc.re_cos_sq += g2 * 0.5 * (e0 + ii.re);
            acc.re_sin_sq += g2 * 0.5 * (e0 - ii.re);
            acc.re_sin_2r -= g2 * ii.im;
        }
        MarkovMode::ExactHeisenberg => {
            let p0 = (t - pulse.end()).max(0.0);
            let p1 = (t - pulse_start(pulse)).max(0.0);
            let h_smooth = pulse.tau_p.min(2.0 / kappa) / 40.0;
            let mut pts = vec![0.0, a1, p0, p1];
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            for win in pts.windows(2) {
                let (l, r) = (win[0], win[1]);
                if r <= l {
                    continue;
                }
                let mid = 0.5 * (l + r);
                let step = if mid < a1 {
                    h_phi.min(h_smooth)
                } else if mid > p0 && mid < p1 {
                    h_smooth
                } else {
                    let rr = pulse.phase_integral_r_unchecked(t, mid);
                    let weight = ((-p * l).exp() - (-p * r).exp()) / p;
                    acc.add(C::new(g2, 0.0), rr, weight);
                    continue;
                };
                for (tau, w) in simpson_nodes(l, r, step) {
                    acc.add(a_of(tau), pulse.phase_integral_r_unchecked(t, tau), w);
                }
            }
            let last = *pts.last().expect("non-empty");
            let rr = pulse.phase_integral_r_unchecked(t, last + 1.0);
            acc.add(C::new(g2, 0.0), rr, (-p * last).exp() / p);
        }
    }

    let zeta_factor = match kernel {
        CavityKernel::RealKernel => 1.0,
        CavityKernel::PhononDressed => 2.0,
    };
    Ok(CavityRates {
        gamma_c: finite_or_err("Gamma_c", 2.0 * acc.re_cos_sq)?,
        zeta_c: zeta_factor * acc.re_sin_sq,
        omega_tilde: -acc.re_sin_2r,
        delta_tilde: acc.im_cos_sq,
        im_sin_sq: acc.im_sin_sq,
        im_sin_2r: acc.im_sin_2r,
    })
}

/// Single-phonon rates from the half-line transforms of φ at Ω′(t).
pub fn weak_coupling_rates(
    t: f64,
    pulse: &GaussianPulse,
    bath: &BathCorrelationTable,
) -> Result<WeakCouplingRates> {
    let w = pulse.b_avg * windowed_amplitude(pulse, t);
    if w == 0.0 || bath.params().alpha == 0.0 {
        return Ok(WeakCouplingRates::default());
    }
    let pre = 0.5 * w * w;
    let fr = bath.phi_fourier(w, PhiPart::Real)?;
    let fi = bath.phi_fourier(w, PhiPart::Imag)?;
    Ok(WeakCouplingRates {
        gamma_y: pre * fr.re,
        gamma_u_r: pre * fr.im,
        gamma_u_i: pre * fi.im,
    })
}

/// Two-level operators in the {g, x} basis.
struct Ops {
    sp: Mat,
    sm: Mat,
    p: Mat,
    sx: Mat,
    sy: Mat,
    sz: Mat,
}

fn ops() -> Ops {
    let s = HilbertSpace::new(2, 0).expect("two-level space");
    let sm = s.sigma_minus();
    let sp = s.sigma_plus();
    let p = &sp * &sm;
    let sx = &sp + &sm;
    let sy = (&sp - &sm) * (-I);
    let sz = &p * C::new(2.0, 0.0) - s.identity();
    Ops {
        sp,
        sm,
        p,
        sx,
        sy,
        sz,
    }
}

/// 2OρO† − O†Oρ − ρO†O.
fn diss(o: &Mat, rho: &Mat) -> Mat {
    let od = o.adjoint();
    let odo = &od * o;
    (o * rho * &od) * C::new(2.0, 0.0) - &odo * rho - rho * &odo
}

fn check_two_level(rho: &Mat) -> Result<()> {
    if rho.nrows() != 2 || rho.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: rho.nrows(),
        });
    }
    Ok(())
}

/// Phonon scattering superoperator with γ_p, ζ_p and Γ_u. Every "+ H.c." is
/// expanded as the linear map that conjugates the operator products, so the
/// result is linear in `rho` for non-Hermitian inputs too.
pub fn assemble_l_p(rho: &Mat, rates: &ReservoirRates) -> Result<Mat> {
    check_two_level(rho)?;
    let o = ops();
    let (sp, sm, p) = (&o.sp, &o.sm, &o.p);
    let mut out = (diss(sp, rho) + diss(sm, rho)) * C::new(0.5 * rates.gamma_p, 0.0);
    out += (sp * rho * sp + sm * rho * sm) * C::new(rates.zeta_p, 0.0);
    let gr = rates.gamma_u.re;
    let gi = rates.gamma_u.im;
    let t1 = p * rho * sm - p * rho * sp - sm * rho;
    let t1h = sp * rho * p - sm * rho * p - rho * sp;
    out += (t1 - t1h) * (I * gr);
    let t2 = p * rho * sp - p * rho * sm + rho * sm;
    let t2h = sm * rho * p - sp * rho * p + sp * rho;
    out += (t2 + t2h) * C::new(gi, 0.0);
    Ok(out)
}

/// Cavity scattering superoperator in the chosen form.
pub fn assemble_l_c(rho: &Mat, rates: &ReservoirRates, kernel: CavityKernel) -> Result<Mat> {
    check_two_level(rho)?;
    let o = ops();
    let (sp, sm, p) = (&o.sp, &o.sm, &o.p);
    let mut out = diss(sm, rho) * C::new(0.5 * rates.gamma_c, 0.0);
    let zeta = match kernel {
        CavityKernel::RealKernel => rates.zeta_c,
        CavityKernel::PhononDressed => 0.5 * rates.zeta_c,
    };
    out += (sp * rho * sp + sm * rho * sm) * C::new(zeta, 0.0);
    out -= (p * rho * sp - sm * rho * sp * sm) * (I * rates.omega_tilde);
    let mut h = &o.sx * C::new(0.5 * rates.omega_tilde, 0.0);
    if kernel == CavityKernel::PhononDressed {
        out += (sp * rho * sp - sm * rho * sm) * (I * rates.im_sin_sq);
        let sz = &o.sz;
        let comm = sp * sz * rho - sz * rho * sp;
        let comm_h = rho * sz * sm - sm * rho * sz;
        out += (comm + comm_h) * C::new(0.5 * rates.im_sin_2r, 0.0);
        h += p * C::new(rates.delta_tilde, 0.0);
    }
    out -= (&h * rho - rho * &h) * I;
    Ok(out)
}

/// Single-phonon limit of the phonon scattering superoperator.
pub fn assemble_weak_coupling_l_p(rho: &Mat, rates: &ReservoirRates) -> Result<Mat> {
    check_two_level(rho)?;
    let o = ops();
    let (p, sy) = (&o.p, &o.sy);
    let mut out = diss(sy, rho) * C::new(0.5 * rates.gamma_y, 0.0);
    // Γ_u^R[σ⁺σ⁻ρ, σ_y] + H.c.
    let a = p * rho * sy - sy * p * rho;
    let ah = sy * rho * p - rho * p * sy;
    out += (a + ah) * C::new(rates.gamma_u_r_wc, 0.0);
    // iΓ_u^I[σ⁺σ⁻, ρσ_y] + H.c.
    let b = p * rho * sy - rho * sy * p;
    let bh = sy * rho * p - p * sy * rho;
    out += (b - bh) * (I * rates.gamma_u_i_wc);
    Ok(out)
}

/// ½(Ω_peak/ω_b)²(1 − ⟨B⟩⁴); must stay well below one.
pub fn polaron_parameter(pulse: &GaussianPulse, bath: &BathCorrelationTable) -> f64 {
    let b4 = bath.b_avg().powi(4);
    0.5 * (pulse.peak() / bath.params().omega_b).powi(2) * (1.0 - b4)
}

/// Smallest τ_p for which a π-pulse has unit polaron parameter.
pub fn polaron_pulse_width_bound(bath: &BathCorrelationTable) -> f64 {
    let b4 = bath.b_avg().powi(4);
    (std::f64::consts::PI * (1.0 - b4)).sqrt() / (2f64.sqrt() * bath.params().omega_b)
}

pub const POLARON_WARN: f64 = 0.5;

/// F_P(t) = Γ_c(t)/γ from the main-text cavity rate.
#[allow(clippy::too_many_arguments)]
pub fn purcell_factor_t(
    t: f64,
    pulse: &GaussianPulse,
    bath: Option<&BathCorrelationTable>,
    gprime: f64,
    kappa: f64,
    gamma: f64,
    mode: MarkovMode,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be > 0, got {gamma}")));
    }
    let r = cavity_rates(t, pulse, bath, gprime, kappa, CavityKernel::RealKernel, mode)?;
    Ok(r.gamma_c / gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservoirConfig {
    /// g′ = ⟨B⟩g, rad/ps.
    pub gprime: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub phonons_enabled: bool,
    pub markov_mode: MarkovMode,
    pub cavity_kernel: CavityKernel,
    pub phonon_scattering: PhononScattering,
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gprime >= 0.0 && self.gprime.is_finite()) {
            return Err(Error::config("g", "must be finite and >= 0"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("kappa", "must be finite and > 0"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Rate curve sampled on a non-uniform grid and splined.
struct RateSplines {
    fields: Vec<CubicSpline>,
}

const N_FIELDS: usize = 13;

fn pack(r: &ReservoirRates) -> [f64; N_FIELDS] {
    [
        r.gamma_p,
        r.zeta_p,
        r.gamma_u.re,
        r.gamma_u.im,
        r.gamma_c,
        r.zeta_c,
        r.omega_tilde,
        r.delta_tilde,
        r.im_sin_sq,
        r.im_sin_2r,
        r.gamma_y,
        r.gamma_u_r_wc,
        r.gamma_u_i_wc,
    ]
}

fn unpack(v: &[f64; N_FIELDS]) -> ReservoirRates {
    ReservoirRates {
        gamma_p: v[0],
        zeta_p: v[1],
        gamma_u: C::new(v[2], v[3]),
        gamma_c: v[4],
        zeta_c: v[5],
        omega_tilde: v[6],
        delta_tilde: v[7],
        im_sin_sq: v[8],
        im_sin_2r: v[9],
        gamma_y: v[10],
        gamma_u_r_wc: v[11],
        gamma_u_i_wc: v[12],
    }
}

/// Memory lengths beyond which the post-pulse cavity rates are taken as
/// constant: e^{−κτ/2} has fallen to ~3e−7.
const CAVITY_MEMORY_FACTOR: f64 = 30.0;

pub struct ReservoirModel {
    cfg: ReservoirConfig,
    pulse: GaussianPulse,
    bath: Option<Arc<BathCorrelationTable>>,
    times: Vec<f64>,
    samples: Vec<ReservoirRates>,
    splines: RateSplines,
    t_const: f64,
}

impl std::fmt::Debug for ReservoirModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReservoirModel")
            .field("cfg", &self.cfg)
            .field("pulse", &self.pulse)
            .field("rate_points", &self.times.len())
            .field("t_const", &self.t_const)
            .finish()
    }
}

impl ReservoirModel {
    pub fn new(
        cfg: ReservoirConfig,
        pulse: GaussianPulse,
        bath: Option<Arc<BathCorrelationTable>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let bath = if cfg.phonons_enabled {
            let b = bath.ok_or_else(|| {
                Error::config("phonons", "phonons enabled but no bath table supplied")
            })?;
            Some(b)
        } else {
            None
        };
        let b_expected = bath.as_ref().map_or(1.0, |b| b.b_avg());
        if (pulse.b_avg - b_expected).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "pulse renormalisation {} does not match <B> = {}",
                pulse.b_avg, b_expected
            )));
        }
        if let Some(b) = &bath {
            let q = polaron_parameter(&pulse, b);
            if q >= 1.0 {
                return Err(Error::Domain(format!(
                    "pulse too strong for the polaron frame: parameter {q:.3} >= 1 \
                     (tau_p should exceed {:.3} ps)",
                    polaron_pulse_width_bound(b)
                )));
            }
            if q > POLARON_WARN {
                warn!("polaron parameter {q:.3} exceeds {POLARON_WARN}; results may be unreliable");
            }
        }

        let support = bath
            .as_ref()
            .map_or(0.0, |b| b.kernel_support(KERNEL_THRESHOLD));
        let start = pulse_start(&pulse);
        let end = pulse.end();
        let memory = if cfg.gprime > 0.0 {
            CAVITY_MEMORY_FACTOR / cfg.kappa
        } else {
            0.0
        };
        let t_const = match cfg.markov_mode {
            MarkovMode::AdditionalMarkov => end,
            MarkovMode::ExactHeisenberg => end + memory.max(support),
        };
        let times = rate_grid(start, end, t_const, pulse.tau_p, cfg.kappa);

        let mut model = Self {
            cfg,
            pulse,
            bath,
            times: Vec::new(),
            samples: Vec::new(),
            splines: RateSplines { fields: Vec::new() },
            t_const,
        };
        let samples: Vec<ReservoirRates> = times
            .par_iter()
            .map(|&t| model.rates_at(t))
            .collect::<Result<_>>()?;
        let packed: Vec<[f64; N_FIELDS]> = samples.iter().map(pack).collect();
        model.splines = RateSplines {
            fields: (0..N_FIELDS)
                .map(|k| CubicSpline::new(times.clone(), packed.iter().map(|v| v[k]).collect()))
                .collect(),
        };
        model.times = times;
        model.samples = samples;
        Ok(model)
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.cfg
    }

    pub fn pulse(&self) -> &GaussianPulse {
        &self.pulse
    }

    /// Time after which every rate is held constant.
    pub fn t_const(&self) -> f64 {
        self.t_const
    }

    /// Rates evaluated directly by quadrature at `t`.
    pub fn rates_at(&self, t: f64) -> Result<ReservoirRates> {
        let c = &self.cfg;
        let bath = self.bath.as_deref();
        let mut r = ReservoirRates::default();
        let cav = cavity_rates(
            t,
            &self.pulse,
            bath,
            c.gprime,
            c.kappa,
            c.cavity_kernel,
            c.markov_mode,
        )?;
        r.gamma_c = cav.gamma_c;
        r.zeta_c = cav.zeta_c;
        r.omega_tilde = cav.omega_tilde;
        r.delta_tilde = cav.delta_tilde;
        r.im_sin_sq = cav.im_sin_sq;
        r.im_sin_2r = cav.im_sin_2r;
        if let Some(b) = bath {
            match c.phonon_scattering {
                PhononScattering::Full => {
                    let ph = phonon_rates(t, &self.pulse, b, c.markov_mode)?;
                    r.gamma_p = ph.gamma_p;
                    r.zeta_p = ph.zeta_p;
                    r.gamma_u = ph.gamma_u;
                }
                PhononScattering::WeakCoupling => {
                    let wc = weak_coupling_rates(t, &self.pulse, b)?;
                    r.gamma_y = wc.gamma_y;
                    r.gamma_u_r_wc = wc.gamma_u_r;
                    r.gamma_u_i_wc = wc.gamma_u_i;
                }
            }
        }
        Ok(r)
    }

    /// Rates from the precomputed spline, constant past `t_const`.
    pub fn interpolated_rates(&self, t: f64) -> ReservoirRates {
        let mut v = [0.0; N_FIELDS];
        for (k, s) in self.splines.fields.iter().enumerate() {
            v[k] = s.eval(t);
        }
        unpack(&v)
    }

    /// Sample times and rates of the precomputed curve.
    pub fn rate_samples(&self) -> (&[f64], &[ReservoirRates]) {
        (&self.times, &self.samples)
    }

    pub const RATE_CSV_HEADER: &'static str = "t_ps,Omega_prime_rad_per_ps,Gamma_c_per_ps,\
gamma_p_per_ps,zeta_p_per_ps,zeta_c_per_ps,Omega_tilde_rad_per_ps,Re_Gamma_u_per_ps,\
Im_Gamma_u_per_ps,Delta_tilde_rad_per_ps,Gamma_y_per_ps,Purcell_factor";

    /// Rate curve on a uniform grid of spacing `dt` over [t0, t1].
    pub fn write_rate_csv<W: Write>(&self, mut w: W, t0: f64, t1: f64, dt: f64) -> Result<()> {
        writeln!(w, "{}", Self::RATE_CSV_HEADER)?;
        let n = ((t1 - t0) / dt).round().max(0.0) as usize;
        let gamma = self.cfg.gamma;
        for k in 0..=n {
            let t = t0 + k as f64 * dt;
            let r = self.interpolated_rates(t);
            let fp = if gamma > 0.0 { r.gamma_c / gamma } else { f64::NAN };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                t,
                self.pulse.b_avg * windowed_amplitude(&self.pulse, t),
                r.gamma_c,
                r.gamma_p,
                r.zeta_p,
                r.zeta_c,
                r.omega_tilde,
                r.gamma_u.re,
                r.gamma_u.im,
                r.delta_tilde,
                r.gamma_y,
                fp
            )?;
        }
        Ok(())
    }

    /// dρ/dt with the given rates.
    fn rhs_with(&self, t: f64, rates: &ReservoirRates, rho: &Mat) -> Result<Mat> {
        let o = ops();
        let wprime = self.pulse.b_avg * windowed_amplitude(&self.pulse, t);
        let h = &o.sx * C::new(0.5 * wprime, 0.0);
        let mut out = (&h * rho - rho * &h) * (-I);
        out += assemble_l_c(rho, rates, self.cfg.cavity_kernel)?;
        if self.bath.is_some() {
            out += match self.cfg.phonon_scattering {
                PhononScattering::Full => assemble_l_p(rho, rates)?,
                PhononScattering::WeakCoupling => assemble_weak_coupling_l_p(rho, rates)?,
            };
        }
        out += diss(&o.sm, rho) * C::new(0.5 * self.cfg.gamma, 0.0);
        Ok(out)
    }

    /// ⟨σ⁺σ⁻⟩ and Γ_c⟨σ⁺σ⁻⟩ on a uniform grid of spacing `h` up to `t_end`.
    pub fn simulate(&self, t_end: f64, h: f64, opts: &OdeOptions) -> Result<Trajectory> {
        let n = (t_end / h).ceil() as usize + 1;
        let mut evo = GridEvolution::new(self, &ground(), h, opts)?;
        evo.extend_to(n)?;
        evo.states.truncate(n);
        Ok(self.trajectory(&evo))
    }

    fn trajectory(&self, evo: &GridEvolution) -> Trajectory {
        let s = HilbertSpace::new(2, 0).expect("two-level space");
        let obs = vec![
            ("pop_x".to_string(), s.transition(X, X)),
            ("pop_g".to_string(), s.transition(G, G)),
        ];
        let mut traj = evo.to_trajectory(&obs, false);
        let rate: Vec<f64> = traj
            .times
            .iter()
            .zip(&traj.values[0])
            .map(|(&t, &px)| self.interpolated_rates(t).gamma_c * px)
            .collect();
        traj.names.push("emission_rate_per_ps".to_string());
        traj.values.push(rate);
        traj
    }

    /// Propagate until the exciton has decayed and count emitted photons.
    pub fn emission(&self, h: f64, opts: &OdeOptions, t_max: f64) -> Result<ReservoirEmission> {
        let mut evo = GridEvolution::new(self, &ground(), h, opts)?;
        let s = evo.switch_index;
        let mut peak: f64 = 0.0;
        let mut seen = 0;
        let max_len = (t_max / h).ceil() as usize + 1;
        evo.extend_until(
            |states| {
                for r in &states[seen..] {
                    peak = peak.max(r[(X, X)].re);
                }
                seen = states.len();
                let last = states.len() - 1;
                last >= s && states[last][(X, X)].re <= DECAYED_LEVEL * peak
            },
            max_len,
        )?;
        let traj = self.trajectory(&evo);
        let times = &traj.times;
        let pop = &traj.values[0];
        let rate = &traj.values[2];
        let n_c = crate::quadrature::trapezoid(times, rate);
        let n_x = self.cfg.gamma * crate::quadrature::trapezoid(times, pop);
        let beta = beta_factor(n_c, n_x).ok();
        Ok(ReservoirEmission {
            n_c,
            n_x,
            beta,
            horizon: *times.last().expect("non-empty"),
            trajectory: traj,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReservoirEmission {
    /// ∫Γ_c(t)⟨σ⁺σ⁻⟩ dt.
    pub n_c: f64,
    /// γ∫⟨σ⁺σ⁻⟩ dt.
    pub n_x: f64,
    pub beta: Option<f64>,
    pub horizon: f64,
    pub trajectory: Trajectory,
}

fn ground() -> Mat {
    HilbertSpace::new(2, 0).expect("two-level space").ground_state()
}

/// Rate sample times: coarse before the pulse, τ_p/20 through it, then at
/// most min(0.05 ps, 0.1/κ) until the rates freeze.
fn rate_grid(start: f64, end: f64, t_const: f64, tau_p: f64, kappa: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut push_segment = |a: f64, b: f64, hmax: f64| {
        if b <= a {
            return;
        }
        let n = ((b - a) / hmax).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for k in 0..n {
            let t = a + k as f64 * h;
            if times.last().is_none_or(|&l: &f64| t > l) {
                times.push(t);
            }
        }
    };
    let t0 = start.min(0.0);
    push_segment(t0, start, tau_p.max(0.5));
    push_segment(start.max(t0), end, tau_p / 20.0);
    push_segment(end, t_const, 0.05f64.min(0.1 / kappa));
    if times.last().is_none_or(|&l| t_const > l) {
        times.push(t_const);
    }
    if times.len() < 3 {
        times.push(t_const + 1.0);
        times.push(t_const + 2.0);
    }
    times
}

impl Generator for ReservoirModel {
    fn dim(&self) -> usize {
        2
    }

    fn apply(&self, t: f64, x: &Mat, out: &mut Mat) -> Result<()> {
        let rates = self.interpolated_rates(t.min(self.t_const));
        *out = self.rhs_with(t, &rates, x)?;
        Ok(())
    }

    fn stationary_after(&self) -> f64 {
        self.t_const.max(self.pulse.end())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonon::{spectral_density, PhononParams};
    use crate::quantum::testutil::{random_density, random_matrix};
    use crate::units::{thermal_coth, uev_to_rate};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs(m: &Mat) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn table(alpha: f64, wb_mev: f64) -> Arc<BathCorrelationTable> {
        let p = PhononParams::from_cutoff_energy(alpha, wb_mev, 4.0).unwrap();
        Arc::new(BathCorrelationTable::build(&p).unwrap())
    }

    /// U(t−τ,t) = exp(−iRσ_x).
    fn frame(r: f64) -> Mat {
        let o = ops();
        Mat::identity(2, 2) * C::new(r.cos(), 0.0) - o.sx * (I * r.sin())
    }

    /// ∫(A_R[σ̃⁻ρσ⁺ − σ⁺σ̃⁻ρ] + H.c.) with σ̃⁻ = U†σ⁻U, by direct quadrature
    /// of the operator-valued integrand.
    fn general_l_c(
        t: f64,
        pulse: &GaussianPulse,
        bath: Option<&BathCorrelationTable>,
        gp: f64,
        kappa: f64,
        rho: &Mat,
    ) -> Mat {
        let o = ops();
        let tau_max = 60.0 / kappa + bath.map_or(0.0, |b| b.cutoff_time());
        let mut acc = Mat::zeros(2, 2);
        for (tau, w) in simpson_nodes(0.0, tau_max, 0.002) {
            let phi = bath.map_or(ZERO, |b| b.phi(tau));
            let a = (phi - 0.5 * kappa * tau).exp() * (gp * gp);
            let u = frame(pulse.phase_integral_r_unchecked(t, tau));
            let smt = u.adjoint() * &o.sm * &u;
            let spt = smt.adjoint();
            let term = (&smt * rho * &o.sp - &o.sp * &smt * rho) * a
                + (&o.sm * rho * &spt - rho * &spt * &o.sm) * a.conj();
            acc += term * C::new(w, 0.0);
        }
        acc
    }

    /// Σ_m∫(G_m[X̃_mρX_m − X_mX̃_mρ] + H.c.) with X_g = (Ω/2)σ_x,
    /// X_u = −(Ω/2)σ_y, X̃ = U†X(t−τ)U.
    fn general_l_p(t: f64, pulse: &GaussianPulse, bath: &BathCorrelationTable, rho: &Mat) -> Mat {
        let o = ops();
        let x_ops = |time: f64| {
            let om = windowed_amplitude(pulse, time);
            [
                &o.sx * C::new(0.5 * om, 0.0),
                &o.sy * C::new(-0.5 * om, 0.0),
            ]
        };
        let xs = x_ops(t);
        let tau_hi = bath.kernel_support(KERNEL_THRESHOLD).min(t - pulse_start(pulse));
        let mut acc = Mat::zeros(2, 2);
        for (tau, w) in simpson_nodes(0.0, tau_hi, 0.001) {
            let u = frame(pulse.phase_integral_r_unchecked(t, tau));
            let xd = x_ops(t - tau);
            let greens = [bath.green_g(tau), bath.green_u(tau)];
            for m in 0..2 {
                let xt = u.adjoint() * &xd[m] * &u;
                let g = greens[m];
                let x = &xs[m];
                let term = (&xt * rho * x - x * &xt * rho) * g
                    + (x * rho * &xt - rho * &xt * x) * g.conj();
                acc += term * C::new(w, 0.0);
            }
        }
        acc
    }

    fn full_rates(cav: CavityRates, ph: PhononRates) -> ReservoirRates {
        ReservoirRates {
            gamma_p: ph.gamma_p,
            zeta_p: ph.zeta_p,
            gamma_u: ph.gamma_u,
            gamma_c: cav.gamma_c,
            zeta_c: cav.zeta_c,
            omega_tilde: cav.omega_tilde,
            delta_tilde: cav.delta_tilde,
            im_sin_sq: cav.im_sin_sq,
            im_sin_2r: cav.im_sin_2r,
            ..Default::default()
        }
    }

    #[test]
    fn cavity_form_matches_general_operator_form() {
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let pulse = GaussianPulse::pi_pulse(1.0, 1.0).unwrap();
        let rho = random_matrix(2, 7);
        for &t in &[1.0, 2.5, 3.0, 4.2, 9.0] {
            let r = cavity_rates(
                t,
                &pulse,
                None,
                gp,
                kappa,
                CavityKernel::RealKernel,
                MarkovMode::ExactHeisenberg,
            )
            .unwrap();
            let rates = full_rates(r, PhononRates::default());
            let printed = assemble_l_c(&rho, &rates, CavityKernel::RealKernel).unwrap();
            let general = general_l_c(t, &pulse, None, gp, kappa, &rho);
            let err = max_abs(&(&printed - &general)) / max_abs(&general);
            assert!(err < 1e-7, "t = {t}: relative difference {err:.2e}");
        }
    }

    #[test]
    fn full_cavity_form_matches_general_operator_form() {
        let bath = table(0.03, 0.9);
        let b = bath.b_avg();
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let pulse = GaussianPulse::pi_pulse(1.0, b).unwrap();
        let rho = random_matrix(2, 11);
        for &t in &[2.0, 3.0, 4.5, 12.0] {
            let r = cavity_rates(
                t,
                &pulse,
                Some(&bath),
                gp,
                kappa,
                CavityKernel::PhononDressed,
                MarkovMode::ExactHeisenberg,
            )
            .unwrap();
            assert!(r.delta_tilde.abs() > 0.0);
            let rates = full_rates(r, PhononRates::default());
            let printed = assemble_l_c(&rho, &rates, CavityKernel::PhononDressed).unwrap();
            let general = general_l_c(t, &pulse, Some(&bath), gp, kappa, &rho);
            let err = max_abs(&(&printed - &general)) / max_abs(&general);
            assert!(err < 1e-6, "t = {t}: relative difference {err:.2e}");
        }
    }

    #[test]
    fn phonon_form_matches_general_operator_form() {
        let bath = table(0.03, 0.9);
        let pulse = GaussianPulse::pi_pulse(1.0, bath.b_avg()).unwrap();
        let rho = random_matrix(2, 3);
        for &t in &[1.5, 2.7, 3.0, 3.6, 5.0] {
            let ph = phonon_rates(t, &pulse, &bath, MarkovMode::ExactHeisenberg).unwrap();
            let rates = full_rates(CavityRates::default(), ph);
            let printed = assemble_l_p(&rho, &rates).unwrap();
            let general = general_l_p(t, &pulse, &bath, &rho);
            let err = max_abs(&(&printed - &general)) / max_abs(&general);
            assert!(err < 1e-6, "t = {t}: relative difference {err:.2e}");
        }
    }

    #[test]
    fn undriven_cavity_rates_are_pure_purcell() {
        let gp = uev_to_rate(25.0);
        let kappa = uev_to_rate(250.0);
        let pulse = GaussianPulse::new(0.0, 1.0, 1.0).unwrap();
        for mode in [MarkovMode::ExactHeisenberg, MarkovMode::AdditionalMarkov] {
            let r = cavity_rates(2.0, &pulse, None, gp, kappa, CavityKernel::RealKernel, mode)
                .unwrap();
            assert_relative_eq!(r.gamma_c, 4.0 * gp * gp / kappa, max_relative = 1e-10);
            assert_eq!(r.zeta_c, 0.0);
            assert_eq!(r.omega_tilde, 0.0);
        }
        let rho = random_density(2, 5);
        let rates = ReservoirRates {
            gamma_c: 4.0 * gp * gp / kappa,
            ..Default::default()
        };
        let lc = assemble_l_c(&rho, &rates, CavityKernel::RealKernel).unwrap();
        let want = diss(&ops().sm, &rho) * C::new(0.5 * rates.gamma_c, 0.0);
        assert!(max_abs(&(lc - want)) < 1e-15);
    }

    #[test]
    fn zero_rates_give_zero_superoperators() {
        let rho = random_matrix(2, 1);
        let z = ReservoirRates::default();
        assert_eq!(max_abs(&assemble_l_p(&rho, &z).unwrap()), 0.0);
        assert_eq!(max_abs(&assemble_weak_coupling_l_p(&rho, &z).unwrap()), 0.0);
        for k in [CavityKernel::RealKernel, CavityKernel::PhononDressed] {
            assert_eq!(max_abs(&assemble_l_c(&rho, &z, k).unwrap()), 0.0);
        }
    }

    #[test]
    fn single_rate_examples_on_excited_state() {
        let s = HilbertSpace::new(2, 0).unwrap();
        let e = s.transition(X, X);
        let want = s.transition(G, G) - s.transition(X, X);
        let r = ReservoirRates {
            gamma_p: 0.7,
            ..Default::default()
        };
        let lp = assemble_l_p(&e, &r).unwrap();
        assert!(max_abs(&(lp - &want * C::new(0.7, 0.0))) < 1e-15);
        let r = ReservoirRates {
            gamma_y: 0.3,
            ..Default::default()
        };
        let la = assemble_weak_coupling_l_p(&e, &r).unwrap();
        assert!(max_abs(&(la - &want * C::new(0.3, 0.0))) < 1e-15);
    }

    #[test]
    fn rejects_wrong_dimension() {
        let rho = Mat::zeros(3, 3);
        assert!(assemble_l_p(&rho, &ReservoirRates::default()).is_err());
    }

    #[test]
    fn delta_pulse_purcell_factor() {
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let gamma = uev_to_rate(0.5);
        let pulse = GaussianPulse::pi_pulse(0.01, 1.0).unwrap();
        let t0 = pulse.center;
        let fp = 4.0 * gp * gp / (kappa * gamma);
        for k in 1..=40 {
            let dt = 0.25 * k as f64 / kappa;
            let got = purcell_factor_t(
                t0 + dt,
                &pulse,
                None,
                gp,
                kappa,
                gamma,
                MarkovMode::ExactHeisenberg,
            )
            .unwrap();
            let want = fp * (1.0 - (-0.5 * kappa * dt).exp());
            assert_relative_eq!(got, want, max_relative = 1e-3);
        }
    }

    #[test]
    fn long_time_purcell_factor() {
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let gamma = uev_to_rate(0.5);
        let pulse = GaussianPulse::pi_pulse(2.0, 1.0).unwrap();
        let t = pulse.end() + 60.0 / kappa;
        let fp = purcell_factor_t(t, &pulse, None, gp, kappa, gamma, MarkovMode::ExactHeisenberg)
            .unwrap();
        assert_relative_eq!(fp, 4.0 * 400.0 / 75.0, max_relative = 1e-9);
    }

    #[test]
    fn short_pulse_suppresses_cavity_emission() {
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let pulse = GaussianPulse::pi_pulse(0.5, 1.0).unwrap();
        let long = 4.0 * gp * gp / kappa;
        let min = (0..200)
            .map(|k| {
                let t = pulse.center - 2.0 + 0.02 * k as f64;
                cavity_rates(
                    t,
                    &pulse,
                    None,
                    gp,
                    kappa,
                    CavityKernel::RealKernel,
                    MarkovMode::ExactHeisenberg,
                )
                .unwrap()
                .gamma_c
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min < 0.5 * long, "min Γ_c = {min}, long-time {long}");
    }

    #[test]
    fn full_kernel_without_phonons_matches_real_kernel() {
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let bath = table(0.0, 0.9);
        let pulse = GaussianPulse::pi_pulse(1.0, 1.0).unwrap();
        for &t in &[2.0, 3.0, 5.0] {
            let a = cavity_rates(
                t,
                &pulse,
                Some(&bath),
                gp,
                kappa,
                CavityKernel::PhononDressed,
                MarkovMode::ExactHeisenberg,
            )
            .unwrap();
            let b = cavity_rates(
                t,
                &pulse,
                None,
                gp,
                kappa,
                CavityKernel::RealKernel,
                MarkovMode::ExactHeisenberg,
            )
            .unwrap();
            assert_relative_eq!(a.gamma_c, b.gamma_c, max_relative = 1e-12);
            assert_relative_eq!(a.zeta_c, 2.0 * b.zeta_c, max_relative = 1e-12);
            assert_eq!(a.delta_tilde, 0.0);
            let rho = random_matrix(2, 9);
            let la = assemble_l_c(&rho, &full_rates(a, Default::default()), CavityKernel::PhononDressed)
                .unwrap();
            let lb = assemble_l_c(&rho, &full_rates(b, Default::default()), CavityKernel::RealKernel)
                .unwrap();
            assert!(max_abs(&(la - lb)) < 1e-12 * b.gamma_c.max(1.0));
        }
    }

    #[test]
    fn markov_cavity_rates_match_closed_form() {
        // Frozen drive: R = −Ω′τ/2 and the integrals are Lorentzians.
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let pulse = GaussianPulse::pi_pulse(1.0, 1.0).unwrap();
        let t = pulse.center;
        let w = pulse.renormalized_amplitude(t);
        let p = 0.5 * kappa;
        let lor = p / (p * p + w * w);
        let r = cavity_rates(
            t,
            &pulse,
            None,
            gp,
            kappa,
            CavityKernel::RealKernel,
            MarkovMode::AdditionalMarkov,
        )
        .unwrap();
        assert_relative_eq!(r.gamma_c, gp * gp * (1.0 / p + lor), max_relative = 1e-12);
        assert_relative_eq!(r.zeta_c, 0.5 * gp * gp * (1.0 / p - lor), max_relative = 1e-12);
        assert_relative_eq!(r.omega_tilde, gp * gp * w / (p * p + w * w), max_relative = 1e-12);
    }

    #[test]
    fn phonon_rates_vanish_without_drive_or_coupling() {
        let bath = table(0.03, 0.9);
        let off = GaussianPulse::new(0.0, 1.0, bath.b_avg()).unwrap();
        let r = phonon_rates(3.0, &off, &bath, MarkovMode::ExactHeisenberg).unwrap();
        assert_eq!(r, PhononRates::default());
        let free = table(0.0, 0.9);
        let pulse = GaussianPulse::pi_pulse(1.0, 1.0).unwrap();
        let r = phonon_rates(3.0, &pulse, &free, MarkovMode::ExactHeisenberg).unwrap();
        assert_eq!(r, PhononRates::default());
        let wc = weak_coupling_rates(-20.0, &pulse, &free).unwrap();
        assert_eq!(wc, WeakCouplingRates::default());
    }

    #[test]
    fn weak_coupling_rates_match_closed_forms() {
        let bath = table(0.03, 0.9);
        let pulse = GaussianPulse::pi_pulse(2.0, bath.b_avg()).unwrap();
        let p = *bath.params();
        for &t in &[4.0, 5.0, 6.0, 7.0] {
            let w = pulse.renormalized_amplitude(t);
            let r = weak_coupling_rates(t, &pulse, &bath).unwrap();
            let j = spectral_density(w, &p).unwrap();
            let gy = 0.25 * PI * j * thermal_coth(w, p.temperature);
            assert_relative_eq!(r.gamma_y, gy, max_relative = 1e-6);
            assert_relative_eq!(r.gamma_u_i, -0.25 * PI * j, max_relative = 1e-6);
        }
    }

    #[test]
    fn long_pulse_phonon_rates_approach_weak_coupling_limit() {
        let bath = table(0.005, 0.9);
        let pulse = GaussianPulse::pi_pulse(20.0, bath.b_avg()).unwrap();
        let t = pulse.center;
        let ph = phonon_rates(t, &pulse, &bath, MarkovMode::ExactHeisenberg).unwrap();
        let wc = weak_coupling_rates(t, &pulse, &bath).unwrap();
        assert!(ph.gamma_p > 0.0);
        assert_relative_eq!(ph.gamma_p, wc.gamma_y, max_relative = 0.1);
        // Single-phonon processes enter ζ_p with the opposite sign.
        assert_relative_eq!(ph.zeta_p, -wc.gamma_y, max_relative = 0.1);
    }

    fn max_markov_deviation(tau_p: f64, kappa: f64) -> f64 {
        let gp = uev_to_rate(20.0);
        let pulse = GaussianPulse::pi_pulse(tau_p, 1.0).unwrap();
        let long = 4.0 * gp * gp / kappa;
        (0..=128)
            .map(|k| {
                let t = pulse.center - 4.0 * tau_p + k as f64 * tau_p / 16.0;
                let rate = |m| {
                    cavity_rates(t, &pulse, None, gp, kappa, CavityKernel::RealKernel, m)
                        .unwrap()
                        .gamma_c
                };
                (rate(MarkovMode::ExactHeisenberg) - rate(MarkovMode::AdditionalMarkov)).abs()
                    / long
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn markov_and_exact_cavity_rates_converge_for_long_pulses() {
        let kappa = uev_to_rate(150.0);
        let devs: Vec<f64> = [5.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|&tp| max_markov_deviation(tp, kappa))
            .collect();
        for w in devs.windows(2) {
            assert!(w[1] < 0.5 * w[0], "deviations {devs:?}");
        }
        assert!(devs[3] < 0.02, "deviations {devs:?}");
    }

    #[test]
    fn exact_gamma_c_matches_brute_force() {
        // R from a running trapezoid of Ω′ instead of the erf closed form.
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let pulse = GaussianPulse::pi_pulse(1.5, 1.0).unwrap();
        for &t in &[2.0, 4.5, 6.0, 9.0, 20.0] {
            let h = 1e-3;
            let n = (300.0 / h) as usize;
            let mut r = 0.0;
            let mut prev = pulse.renormalized_amplitude(t);
            let mut sum = 0.0;
            let mut f_prev = gp * gp;
            for k in 1..=n {
                let tau = k as f64 * h;
                let om = pulse.renormalized_amplitude(t - tau);
                r -= 0.25 * h * (om + prev);
                prev = om;
                let f = gp * gp * (-0.5 * kappa * tau).exp() * r.cos().powi(2);
                sum += 0.5 * h * (f + f_prev);
                f_prev = f;
            }
            let got = cavity_rates(
                t,
                &pulse,
                None,
                gp,
                kappa,
                CavityKernel::RealKernel,
                MarkovMode::ExactHeisenberg,
            )
            .unwrap()
            .gamma_c;
            assert_relative_eq!(got, 2.0 * sum, max_relative = 1e-6);
        }
    }

    #[test]
    fn polaron_guard() {
        let bath = table(0.03, 0.9);
        let bound = polaron_pulse_width_bound(&bath);
        assert!(bound > 0.3 && bound < 0.45, "bound {bound}");
        let at_bound = GaussianPulse::pi_pulse(bound, bath.b_avg()).unwrap();
        // Renormalised π pulse has bare area π/⟨B⟩, so the parameter at the
        // bound is 1/⟨B⟩².
        let q = polaron_parameter(&at_bound, &bath);
        assert_relative_eq!(q, 1.0 / bath.b_avg().powi(2), max_relative = 1e-12);
        let cfg = ReservoirConfig {
            gprime: 0.0,
            kappa: 1.0,
            gamma: 0.0,
            phonons_enabled: true,
            markov_mode: MarkovMode::ExactHeisenberg,
            cavity_kernel: CavityKernel::RealKernel,
            phonon_scattering: PhononScattering::Full,
        };
        let short = GaussianPulse::pi_pulse(0.2, bath.b_avg()).unwrap();
        assert!(ReservoirModel::new(cfg, short, Some(bath.clone())).is_err());
    }

    #[test]
    fn rabi_flop_without_reservoirs() {
        let cfg = ReservoirConfig {
            gprime: 0.0,
            kappa: 1.0,
            gamma: 0.0,
            phonons_enabled: false,
            markov_mode: MarkovMode::ExactHeisenberg,
            cavity_kernel: CavityKernel::RealKernel,
            phonon_scattering: PhononScattering::Full,
        };
        let pulse = GaussianPulse::pi_pulse(1.0, 1.0).unwrap();
        let m = ReservoirModel::new(cfg, pulse, None).unwrap();
        let traj = m.simulate(20.0, 0.05, &OdeOptions::default()).unwrap();
        let pop = traj.observable("pop_x").unwrap();
        for (&t, &p) in traj.times.iter().zip(pop) {
            // The run starts at t = 0, after the window has opened.
            let area = pulse.cumulative_fraction(t) - pulse.cumulative_fraction(0.0);
            let want = (0.5 * PI * area).sin().powi(2);
            assert!((p - want).abs() < 2e-4, "t = {t}: {p} vs {want}");
        }
    }

    #[test]
    fn purcell_decay_after_pulse_counts_one_photon() {
        let gp = uev_to_rate(20.0);
        let kappa = uev_to_rate(150.0);
        let gamma = uev_to_rate(0.5);
        let cfg = ReservoirConfig {
            gprime: gp,
            kappa,
            gamma,
            phonons_enabled: false,
            markov_mode: MarkovMode::ExactHeisenberg,
            cavity_kernel: CavityKernel::RealKernel,
            phonon_scattering: PhononScattering::Full,
        };
        let pulse = GaussianPulse::pi_pulse(0.05, 1.0).unwrap();
        let m = ReservoirModel::new(cfg, pulse, None).unwrap();
        let em = m.emission(0.05, &OdeOptions::default(), 20_000.0).unwrap();
        // Rate equation after an instantaneous inversion at t₀:
        // Γ_c(s) = Γ∞(1 − e^{−κs/2}), P(s) = exp(−(Γ∞+γ)s + Γ∞(1 − e^{−κs/2})/(κ/2)).
        let g_inf = 4.0 * gp * gp / kappa;
        let p = 0.5 * kappa;
        let (ds, mut n_c, mut n_x) = (1e-3, 0.0, 0.0);
        for k in 0..2_000_000 {
            let s = (k as f64 + 0.5) * ds;
            let pop = (-(g_inf + gamma) * s + g_inf * (1.0 - (-p * s).exp()) / p).exp();
            n_c += g_inf * (1.0 - (-p * s).exp()) * pop * ds;
            n_x += gamma * pop * ds;
        }
        assert_relative_eq!(em.n_c + em.n_x, 1.0, max_relative = 2e-3);
        assert_relative_eq!(em.n_c, n_c, max_relative = 2e-3);
        assert_relative_eq!(em.n_x, n_x, max_relative = 2e-2);
        // Suppression during the build-up pushes β below F_P/(F_P + 1).
        let fp = g_inf / gamma;
        assert!(em.beta.unwrap() < fp / (fp + 1.0));
    }

    #[test]
    fn spline_reproduces_direct_rates() {
        let bath = table(0.03, 0.9);
        let cfg = ReservoirConfig {
            gprime: uev_to_rate(20.0),
            kappa: uev_to_rate(150.0),
            gamma: uev_to_rate(0.5),
            phonons_enabled: true,
            markov_mode: MarkovMode::ExactHeisenberg,
            cavity_kernel: CavityKernel::RealKernel,
            phonon_scattering: PhononScattering::Full,
        };
        let pulse = GaussianPulse::pi_pulse(1.0, bath.b_avg()).unwrap();
        let m = ReservoirModel::new(cfg, pulse, Some(bath)).unwrap();
        let scale = 4.0 * cfg.gprime * cfg.gprime / cfg.kappa;
        for k in 0..40 {
            let t = 0.37 + 0.29 * k as f64;
            let a = m.rates_at(t).unwrap();
            let b = m.interpolated_rates(t);
            assert!((a.gamma_c - b.gamma_c).abs() < 1e-4 * scale, "t = {t}");
            assert!((a.gamma_p - b.gamma_p).abs() < 1e-3 * a.gamma_p.abs().max(1e-3), "t = {t}");
        }
        let mut buf = Vec::new();
        m.write_rate_csv(&mut buf, 0.0, 10.0, 0.5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 22);
        assert!(text.starts_with("t_ps,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn superoperators_are_trace_free(seed in 0u64..10_000, v in prop::collection::vec(-3.0f64..3.0, 13)) {
            let rho = random_matrix(2, seed);
            let mut arr = [0.0; N_FIELDS];
            arr.copy_from_slice(&v);
            let r = unpack(&arr);
            let mats = [
                assemble_l_p(&rho, &r).unwrap(),
                assemble_weak_coupling_l_p(&rho, &r).unwrap(),
                assemble_l_c(&rho, &r, CavityKernel::RealKernel).unwrap(),
                assemble_l_c(&rho, &r, CavityKernel::PhononDressed).unwrap(),
            ];
            for m in &mats {
                prop_assert!(m.trace().norm() < 1e-13);
            }
        }

        #[test]
        fn superoperators_preserve_hermiticity(seed in 0u64..10_000, v in prop::collection::vec(-3.0f64..3.0, 13)) {
            let rho = random_density(2, seed);
            let mut arr = [0.0; N_FIELDS];
            arr.copy_from_slice(&v);
            let r = unpack(&arr);
            for m in [
                assemble_l_p(&rho, &r).unwrap(),
                assemble_weak_coupling_l_p(&rho, &r).unwrap(),
                assemble_l_c(&rho, &r, CavityKernel::PhononDressed).unwrap(),
            ] {
                prop_assert!(max_abs(&(&m - m.adjoint())) < 1e-13);
            }
        }

        #[test]
        fn gamma_c_stays_in_purcell_bounds(tau_p in 0.1f64..5.0, dt in -10.0f64..60.0) {
            let gp = uev_to_rate(20.0);
            let kappa = uev_to_rate(150.0);
            let pulse = GaussianPulse::pi_pulse(tau_p, 1.0).unwrap();
            let r = cavity_rates(pulse.center + dt, &pulse, None, gp, kappa,
                CavityKernel::RealKernel, MarkovMode::ExactHeisenberg).unwrap();
            let top = 4.0 * gp * gp / kappa;
            prop_assert!(r.gamma_c >= 0.0);
            prop_assert!(r.gamma_c <= top * (1.0 + 1e-9));
        }
    }
}
