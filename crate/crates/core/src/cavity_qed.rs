//! Polaron master equation for a driven quantum dot coupled to a quantised
//! cavity mode, in the two-level or biexciton-cascade level scheme.
//!
//! Everything is in rate units (ħ = 1, ps and rad/ps). Phonon memory enters
//! through K_m(t) = ∫₀^∞ G_m(τ) X̃_m(t−τ, t) dτ, tabulated on a time grid
//! before propagation.

use std::sync::Arc;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::phonon::BathCorrelationTable;
use crate::pulse::GaussianPulse;
use crate::quantum::evolution::{Generator, GridEvolution, Trajectory};
use crate::quantum::ode::{dopri5, OdeOptions};
use crate::quantum::{HilbertSpace, Mat, C, G, I, ONE, X, XX, Y, ZERO};
use crate::interp::cubic_stencil;
use crate::quadrature::simpson_weights;
use crate::units::mev_to_rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    TwoLevel,
    BiexcitonCascade,
}

/// How X̃_m(t−τ, t) is evaluated inside the phonon memory kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovMode {
    /// e^{−iH(t)τ} X(t) e^{iH(t)τ}: Hamiltonian and drive frozen at t.
    AdditionalMarkov,
    /// U†(t−τ, t) X(t−τ) U(t−τ, t) with the full time-dependent propagator.
    ExactHeisenberg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub model: ModelKind,
    /// Biexciton binding energy, meV.
    pub binding_energy: f64,
    /// Bare exciton-cavity coupling g, rad/ps.
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub fock_cutoff: usize,
    pub phonons_enabled: bool,
    pub markov_mode: MarkovMode,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g", self.g), ("kappa", self.kappa), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.binding_energy.is_finite()) {
            return Err(Error::Domain("binding energy must be finite".into()));
        }
        if self.fock_cutoff == 0 {
            return Err(Error::Domain("cavity model needs fock_cutoff >= 1".into()));
        }
        Ok(())
    }

    pub fn space(&self) -> HilbertSpace {
        let levels = match self.model {
            ModelKind::TwoLevel => 2,
            ModelKind::BiexcitonCascade => 4,
        };
        HilbertSpace {
            qd_levels: levels,
            fock_cutoff: self.fock_cutoff,
        }
    }
}

/// Pulse-independent operator pieces.
#[derive(Debug, Clone)]
struct Operators {
    space: HilbertSpace,
    /// −E_B|xx⟩⟨xx| in rad/ps.
    binding: Mat,
    /// σ_x + |xx⟩⟨x| + |x⟩⟨xx|.
    drive: Mat,
    /// σ⁺a + σ⁻a† + |xx⟩⟨x|a + |x⟩⟨xx|a†.
    coupling: Mat,
    /// i(σ⁺ − σ⁻ + |xx⟩⟨x| − |x⟩⟨xx|).
    drive_u: Mat,
    /// i(σ⁺a − σ⁻a† + |xx⟩⟨x|a − |x⟩⟨xx|a†).
    coupling_u: Mat,
    collapse: Vec<Mat>,
    /// ½ΣO†O.
    half_decay: Mat,
}

impl Operators {
    fn new(cfg: &SystemConfig) -> Self {
        let s = cfg.space();
        let a = s.annihilation();
        let ad = a.adjoint();
        let sp = s.sigma_plus();
        let sm = s.sigma_minus();
        let mut drive = &sp + &sm;
        let mut coupling = &sp * &a + &sm * &ad;
        let mut up = &sp - &sm;
        let mut cu = &sp * &a - &sm * &ad;
        let mut binding = s.zeros();
        let sg = C::new(cfg.gamma.sqrt(), 0.0);
        let mut collapse = vec![s.transition(G, X) * sg];
        if s.qd_levels == 4 {
            let up_x = s.transition(XX, X);
            let dn_x = s.transition(X, XX);
            drive += &up_x + &dn_x;
            coupling += &up_x * &a + &dn_x * &ad;
            up += &up_x - &dn_x;
            cu += &up_x * &a - &dn_x * &ad;
            binding = s.transition(XX, XX) * C::new(-mev_to_rate(cfg.binding_energy), 0.0);
            collapse.push(s.transition(X, XX) * sg);
            collapse.push(s.transition(Y, XX) * sg);
            collapse.push(s.transition(G, Y) * sg);
        }
        collapse.push(a * C::new(cfg.kappa.sqrt(), 0.0));
        let half_decay = collapse
            .iter()
            .fold(s.zeros(), |acc, o| acc + o.adjoint() * o)
            * C::new(0.5, 0.0);
        Self {
            space: s,
            binding,
            drive,
            coupling,
            drive_u: up * I,
            coupling_u: cu * I,
            collapse,
            half_decay,
        }
    }
}

/// The two polaron memory kernels K_g(t), K_u(t) on a uniform time grid
/// starting at 0, constant from the last node on.
#[derive(Debug, Clone)]
pub struct KernelCache {
    pub h: f64,
    pub values: [Vec<Mat>; 2],
    /// Kernel τ-range actually integrated, ps.
    pub support: f64,
}

impl KernelCache {
    pub fn t_switch(&self) -> f64 {
        (self.values[0].len() - 1) as f64 * self.h
    }

    fn eval(&self, m: usize, t: f64) -> Mat {
        let v = &self.values[m];
        let n = v.len();
        if t >= self.t_switch() {
            return v[n - 1].clone();
        }
        let (b, w) = cubic_stencil(0.0, self.h, n, t.max(0.0));
        let mut out = &v[b] * C::new(w[0], 0.0);
        for j in 1..4 {
            out += &v[b + j] * C::new(w[j], 0.0);
        }
        out
    }

    pub fn at(&self, t: f64) -> [Mat; 2] {
        [self.eval(0, t), self.eval(1, t)]
    }
}

/// Magnitude below which Green functions are treated as zero when sizing
/// the kernel support.
pub const KERNEL_THRESHOLD: f64 = 1e-12;

/// Assembled polaron master equation for one configuration.
#[derive(Debug, Clone)]
pub struct CavityQedModel {
    pub cfg: SystemConfig,
    pub pulse: GaussianPulse,
    bath: Option<Arc<BathCorrelationTable>>,
    b_avg: f64,
    ops: Operators,
    kernels: Option<KernelCache>,
}

impl CavityQedModel {
    /// `bath` is required when phonons are enabled. The pulse must carry the
    /// bath's ⟨B⟩ (or 1 with phonons off).
    pub fn new(
        cfg: SystemConfig,
        pulse: GaussianPulse,
        bath: Option<Arc<BathCorrelationTable>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let bath = if cfg.phonons_enabled {
            Some(bath.ok_or_else(|| Error::Domain("phonons enabled but no bath table".into()))?)
        } else {
            None
        };
        let b_avg = bath.as_ref().map_or(1.0, |b| b.b_avg());
        if (pulse.b_avg - b_avg).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "pulse renormalisation {} does not match <B> = {}",
                pulse.b_avg, b_avg
            )));
        }
        let gp = b_avg * cfg.g;
        if cfg.phonons_enabled && 4.0 * gp >= cfg.kappa {
            warn!("4g' = {:.4} >= kappa = {:.4}: outside the weak-coupling regime", 4.0 * gp, cfg.kappa);
        }
        let ops = Operators::new(&cfg);
        let mut model = Self {
            cfg,
            pulse,
            bath,
            b_avg,
            ops,
            kernels: None,
        };
        model.kernels = model.build_kernels()?;
        Ok(model)
    }

    pub fn space(&self) -> HilbertSpace {
        self.ops.space
    }

    pub fn b_avg(&self) -> f64 {
        self.b_avg
    }

    /// g′ = ⟨B⟩g.
    pub fn gprime(&self) -> f64 {
        self.b_avg * self.cfg.g
    }

    pub fn bath_table(&self) -> Option<Arc<BathCorrelationTable>> {
        self.bath.clone()
    }

    pub fn kernels(&self) -> Option<&KernelCache> {
        self.kernels.as_ref()
    }

    pub fn collapse_operators(&self) -> &[Mat] {
        &self.ops.collapse
    }

    /// Drive treated as exactly zero outside this window.
    fn pulse_window(&self) -> (f64, f64) {
        let w = crate::pulse::SUPPORT_HALF_WIDTH * self.pulse.tau_p;
        (self.pulse.center - w, self.pulse.center + w)
    }

    fn omega(&self, t: f64) -> f64 {
        let (a, b) = self.pulse_window();
        if t < a || t > b {
            0.0
        } else {
            self.pulse.amplitude(t)
        }
    }

    /// H′_S(t) in rad/ps.
    pub fn hamiltonian(&self, t: f64) -> Mat {
        let op = &self.ops;
        &op.binding
            + &op.drive * C::new(0.5 * self.b_avg * self.omega(t), 0.0)
            + &op.coupling * C::new(self.gprime(), 0.0)
    }

    /// (X_g(t), X_u(t)) with the bare Ω(t) and g.
    pub fn interaction_operators(&self, t: f64) -> [Mat; 2] {
        let op = &self.ops;
        let w = C::new(0.5 * self.omega(t), 0.0);
        let g = C::new(self.cfg.g, 0.0);
        [
            &op.drive * w + &op.coupling * g,
            &op.drive_u * w + &op.coupling_u * g,
        ]
    }

    /// X̃_m(t−τ, t) at a single point; `m` = 0 for X_g, 1 for X_u.
    pub fn interaction_picture_operator(&self, m: usize, t: f64, tau: f64, mode: MarkovMode) -> Result<Mat> {
        if tau < 0.0 {
            return Err(Error::Domain(format!("tau must be >= 0, got {tau}")));
        }
        if m > 1 {
            return Err(Error::Domain(format!("kernel index must be 0 or 1, got {m}")));
        }
        match mode {
            MarkovMode::AdditionalMarkov => {
                let u = unitary_exp(&self.hamiltonian(t), tau);
                let x = &self.interaction_operators(t)[m];
                Ok(&u * x * u.adjoint())
            }
            MarkovMode::ExactHeisenberg => {
                // U(t−τ, t) via dU/du = iH(t−u)U on u ∈ [0, τ].
                let d = self.space().dim();
                let id = Mat::identity(d, d);
                let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
                let (y, _) = dopri5(
                    |u, y, dy| {
                        let h = self.hamiltonian(t - u);
                        let um = Mat::from_column_slice(d, d, y);
                        let r = &h * um * I;
                        dy.copy_from_slice(r.as_slice());
                        Ok(())
                    },
                    0.0,
                    id.as_slice(),
                    &[tau],
                    &opts,
                    |_, _, _| Ok(()),
                )?;
                let u = Mat::from_column_slice(d, d, &y);
                let x = &self.interaction_operators(t - tau)[m];
                Ok(u.adjoint() * x * u)
            }
        }
    }

    fn build_kernels(&self) -> Result<Option<KernelCache>> {
        let bath = match &self.bath {
            Some(b) if b.params().alpha > 0.0 => b.clone(),
            _ => return Ok(None),
        };
        let hb = bath.spacing();
        let mut n_support = ((bath.kernel_support(KERNEL_THRESHOLD) / hb).round() as usize)
            .clamp(4, bath.len() - 1);
        if n_support % 2 == 1 {
            n_support = if n_support + 1 < bath.len() { n_support + 1 } else { n_support - 1 };
        }
        let support = n_support as f64 * hb;
        let (_, pulse_end) = self.pulse_window();
        let stride = ((self.pulse.tau_p / 40.0).min(0.05) / hb).floor().max(1.0) as usize;
        let ht = stride as f64 * hb;
        let t_switch = match self.cfg.markov_mode {
            MarkovMode::ExactHeisenberg => pulse_end + support,
            MarkovMode::AdditionalMarkov => pulse_end,
        };
        let n_t = ((t_switch / ht).ceil() as usize).max(4) + 1;
        let weights = simpson_weights(n_support, hb);
        let green = [bath.green_g_values(), bath.green_u_values()];
        let values = match self.cfg.markov_mode {
            MarkovMode::ExactHeisenberg => self.exact_kernels(&green, &weights, hb, stride, n_t)?,
            MarkovMode::AdditionalMarkov => self.markov_kernels(&green, &weights, hb, ht, n_t),
        };
        Ok(Some(KernelCache { h: ht, values, support }))
    }

    /// Exact kernels as a discrete convolution in the Heisenberg picture of
    /// the forward propagator V(s): X̃(t−τ, t) = V(t) X_H(t−τ) V(t)†.
    fn exact_kernels(
        &self,
        green: &[&[C]; 2],
        weights: &[f64],
        hb: f64,
        stride: usize,
        n_t: usize,
    ) -> Result<[Vec<Mat>; 2]> {
        let n_support = weights.len() - 1;
        let d = self.space().dim();
        let n_grid = n_support + (n_t - 1) * stride + 1;
        let s0 = -(n_support as f64) * hb;
        let (w0, w1) = self.pulse_window();
        let static_step = unitary_exp(&self.hamiltonian(w1 + 1.0), hb);
        let mut v = Mat::identity(d, d);
        let mut vs = Vec::with_capacity(n_t);
        let mut xh: [Vec<Mat>; 2] = [Vec::with_capacity(n_grid), Vec::with_capacity(n_grid)];
        for k in 0..n_grid {
            let s = s0 + k as f64 * hb;
            if k >= n_support && (k - n_support).is_multiple_of(stride) {
                vs.push(v.clone());
            }
            let x = self.interaction_operators(s);
            let vd = v.adjoint();
            for m in 0..2 {
                xh[m].push(&vd * &x[m] * &v);
            }
            let step = if s + hb < w0 || s > w1 {
                static_step.clone()
            } else {
                self.magnus_step(s, hb)
            };
            v = step * v;
        }
        let mut out: [Vec<Mat>; 2] = [Vec::with_capacity(n_t), Vec::with_capacity(n_t)];
        for (i, vt) in vs.iter().enumerate() {
            let base = n_support + i * stride;
            for m in 0..2 {
                let mut acc = Mat::zeros(d, d);
                for (k, &w) in weights.iter().enumerate() {
                    let gw = green[m][k] * w;
                    acc.zip_apply(&xh[m][base - k], |a, b| *a += gw * b);
                }
                out[m].push(vt * acc * vt.adjoint());
            }
        }
        Ok(out)
    }

    /// One fourth-order Magnus step of V over [s, s + h], sub-stepped so that
    /// h‖H‖ stays small.
    fn magnus_step(&self, s: f64, h: f64) -> Mat {
        let d = self.space().dim();
        let peak = self.b_avg * self.pulse.peak() + 2.0 * self.gprime() * (self.cfg.fock_cutoff as f64).sqrt()
            + mev_to_rate(self.cfg.binding_energy.abs());
        let n = ((h * peak / 0.05).ceil() as usize).max(1);
        let dt = h / n as f64;
        let c = 3f64.sqrt() / 6.0;
        let mut u = Mat::identity(d, d);
        for j in 0..n {
            let t = s + j as f64 * dt;
            let a1 = self.hamiltonian(t + (0.5 - c) * dt) * (-I);
            let a2 = self.hamiltonian(t + (0.5 + c) * dt) * (-I);
            let comm = &a2 * &a1 - &a1 * &a2;
            let omega = (&a1 + &a2) * C::new(0.5 * dt, 0.0) + comm * C::new(3f64.sqrt() / 12.0 * dt * dt, 0.0);
            u = omega.exp() * u;
        }
        u
    }

    /// Additional-Markov kernels from the eigen-decomposition of H(t):
    /// K = V [X′_jk Ĝ(d_j − d_k)] V† with Ĝ(ω) = ∫G(τ)e^{−iωτ}dτ.
    fn markov_kernels(&self, green: &[&[C]; 2], weights: &[f64], hb: f64, ht: f64, n_t: usize) -> [Vec<Mat>; 2] {
        let d = self.space().dim();
        let mut out: [Vec<Mat>; 2] = [Vec::with_capacity(n_t), Vec::with_capacity(n_t)];
        for i in 0..n_t {
            let t = i as f64 * ht;
            let eig = self.hamiltonian(t).symmetric_eigen();
            let ve = &eig.eigenvectors;
            let x = self.interaction_operators(t);
            let mut ghat = [Mat::zeros(d, d), Mat::zeros(d, d)];
            for j in 0..d {
                for k in 0..d {
                    let w = eig.eigenvalues[j] - eig.eigenvalues[k];
                    let gh = green_transform(green, weights, hb, w);
                    ghat[0][(j, k)] = gh[0];
                    ghat[1][(j, k)] = gh[1];
                }
            }
            for m in 0..2 {
                let xp = ve.adjoint() * &x[m] * ve;
                let k = xp.component_mul(&ghat[m]);
                out[m].push(ve * k * ve.adjoint());
            }
        }
        out
    }

    fn kernel_at(&self, t: f64) -> Option<[Mat; 2]> {
        self.kernels.as_ref().map(|k| k.at(t))
    }

    /// Full right-hand side dρ/dt of the polaron master equation.
    pub fn rhs(&self, t: f64, rho: &Mat) -> Mat {
        let mut out = Mat::zeros(rho.nrows(), rho.ncols());
        self.apply_into(t, rho, &mut out);
        out
    }

    fn apply_into(&self, t: f64, x: &Mat, out: &mut Mat) {
        let h = self.hamiltonian(t);
        let mut n = &h * I + &self.ops.half_decay;
        let mut r = Mat::zeros(x.nrows(), x.ncols());
        if let Some(k) = self.kernel_at(t) {
            let xm = self.interaction_operators(t);
            for m in 0..2 {
                n += &xm[m] * &k[m];
                r += &k[m] * x * &xm[m] + &xm[m] * x * k[m].adjoint();
            }
        }
        r -= &n * x + x * n.adjoint();
        for o in &self.ops.collapse {
            r += o * x * o.adjoint();
        }
        out.copy_from(&r);
    }

    /// Named observables: cavity occupation and emitter populations.
    pub fn standard_observables(&self) -> Vec<(String, Mat)> {
        let s = self.space();
        let mut v = vec![
            ("n_cav".to_string(), s.number()),
            ("pop_g".to_string(), s.transition(G, G)),
            ("pop_x".to_string(), s.transition(X, X)),
        ];
        if s.qd_levels == 4 {
            v.push(("pop_y".to_string(), s.transition(Y, Y)));
            v.push(("pop_xx".to_string(), s.transition(XX, XX)));
        }
        v
    }

    /// Propagate from the ground state on a uniform grid of spacing `h` up
    /// to `t_end`.
    pub fn simulate(&self, t_end: f64, h: f64, opts: &OdeOptions) -> Result<Trajectory> {
        let mut evo = GridEvolution::new(self, &self.space().ground_state(), h, opts)?;
        evo.extend_to((t_end / h).ceil() as usize + 1)?;
        let n = (t_end / h).ceil() as usize + 1;
        evo.states.truncate(n);
        Ok(evo.to_trajectory(&self.standard_observables(), false))
    }
}

impl Generator for CavityQedModel {
    fn dim(&self) -> usize {
        self.space().dim()
    }

    fn apply(&self, t: f64, x: &Mat, out: &mut Mat) -> Result<()> {
        self.apply_into(t, x, out);
        Ok(())
    }

    fn stationary_after(&self) -> f64 {
        let (_, end) = self.pulse_window();
        match &self.kernels {
            Some(k) => k.t_switch().max(end),
            None => end,
        }
    }
}

/// e^{−iHτ} for Hermitian H.
fn unitary_exp(h: &Mat, tau: f64) -> Mat {
    let eig = h.clone().symmetric_eigen();
    let ve = &eig.eigenvectors;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C::new(0.0, -e * tau).exp()));
    ve * phases * ve.adjoint()
}

/// Trapezoid Ĝ_m(ω) = ∫G_m(τ)e^{−iωτ}dτ over the kernel support.
fn green_transform(green: &[&[C]; 2], weights: &[f64], hb: f64, omega: f64) -> [C; 2] {
    let (s1, c1) = (-omega * hb).sin_cos();
    let step = C::new(c1, s1);
    let mut z = ONE;
    let mut acc = [ZERO; 2];
    for (k, &w) in weights.iter().enumerate() {
        if k % 64 == 0 && k > 0 {
            let (s, c) = (-omega * hb * k as f64).sin_cos();
            z = C::new(c, s);
        }
        acc[0] += green[0][k] * z * w;
        acc[1] += green[1][k] * z * w;
        z *= step;
    }
    acc
}

/// Output of the adiabatic-elimination estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticRates {
    pub purcell_factor: f64,
    /// γ_c′ = 2 Re Λ_c.
    pub gamma_c_prime: f64,
    /// Δ_c = Im Λ_c.
    pub delta_c: f64,
}

/// Λ_c = (4g′²/κ)² ∫₀^∞ sinh φ(τ) dτ from the tabulated φ.
pub fn adiabatic_elimination_rates(
    gprime: f64,
    kappa: f64,
    gamma: f64,
    bath: &BathCorrelationTable,
) -> Result<AdiabaticRates> {
    if !(kappa > 0.0) || !(gamma > 0.0) {
        return Err(Error::Domain("kappa and gamma must be > 0".into()));
    }
    if 4.0 * gprime >= kappa {
        warn!("adiabatic elimination needs 4g' << kappa (4g' = {:.4}, kappa = {:.4})", 4.0 * gprime, kappa);
    }
    let h = bath.spacing();
    let phi = bath.phi_values();
    let n = phi.len();
    let mut integral = ZERO;
    for (k, z) in phi.iter().enumerate() {
        let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        integral += z.sinh() * w;
    }
    let pref = (4.0 * gprime * gprime / kappa).powi(2);
    let lam = integral * pref;
    Ok(AdiabaticRates {
        purcell_factor: 4.0 * gprime * gprime / (kappa * gamma),
        gamma_c_prime: 2.0 * lam.re,
        delta_c: lam.im,
    })
}
