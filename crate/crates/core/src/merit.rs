//! Single-photon-source figures of merit: emitted photon numbers, β-factor
//! and Hong–Ou–Mandel indistinguishability.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::trapezoid;
use crate::quantum::evolution::{Generator, GridEvolution, Trajectory};
use crate::quantum::ode::OdeOptions;
use crate::quantum::regression::{regression_rows, Correlator};
use crate::quantum::{expectation, DensityCheck, HilbertSpace, Mat, C, G};

/// Occupations above this at the end of a trajectory count as not decayed.
pub const DECAYED_LEVEL: f64 = 1e-6;

fn check_decayed(values: &[f64], what: &str) -> Result<()> {
    if let Some(&last) = values.last() {
        if last.abs() > DECAYED_LEVEL {
            return Err(Error::NotDecayed(format!("{what} is {last:.3e} at the last time")));
        }
    }
    Ok(())
}

/// N_c = κ∫⟨a†a⟩ dt.
pub fn emitted_cavity_photons(times: &[f64], n_cav: &[f64], kappa: f64) -> Result<f64> {
    check_decayed(n_cav, "cavity occupation")?;
    Ok(kappa * trapezoid(times, n_cav))
}

/// N_x = γ∫⟨σ⁺σ⁻⟩ dt.
pub fn exciton_photons(times: &[f64], pop_x: &[f64], gamma: f64) -> Result<f64> {
    check_decayed(pop_x, "exciton population")?;
    Ok(gamma * trapezoid(times, pop_x))
}

/// β = N_c/(N_c + N_x).
pub fn beta_factor(n_c: f64, n_x: f64) -> Result<f64> {
    let tot = n_c + n_x;
    if tot == 0.0 {
        return Err(Error::UndefinedBeta);
    }
    Ok(n_c / tot)
}

/// β for an initially inverted dot: F_P/(F_P+1) · 1/(1+γ/κ), F_P = 4g′²/κγ.
pub fn analytic_beta(gprime: f64, kappa: f64, gamma: f64) -> Result<f64> {
    if !(kappa > 0.0) || !(gamma >= 0.0) {
        return Err(Error::Domain("need kappa > 0 and gamma >= 0".into()));
    }
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let fp = purcell_factor(gprime, kappa, gamma);
    Ok(fp / (fp + 1.0) / (1.0 + gamma / kappa))
}

/// F_P = 4g′²/(κγ).
pub fn purcell_factor(gprime: f64, kappa: f64, gamma: f64) -> f64 {
    4.0 * gprime * gprime / (kappa * gamma)
}

/// (t, τ) grids on t_i = i·h, τ_j = j·h, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorGrid {
    pub h: f64,
    pub n_t: usize,
    pub n_tau: usize,
    pub g1: Vec<C>,
    pub g2: Vec<f64>,
    pub pop_product: Vec<f64>,
    pub amp_product: Vec<C>,
}

impl CorrelatorGrid {
    fn check(&self) -> Result<()> {
        let n = self.n_t * self.n_tau;
        for len in [self.g1.len(), self.g2.len(), self.pop_product.len(), self.amp_product.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ps,tau_ps,re_g1,im_g1,g2,pop_product,re_amp_product,im_amp_product")?;
        for i in 0..self.n_t {
            for j in 0..self.n_tau {
                let k = i * self.n_tau + j;
                writeln!(
                    w,
                    "{:.10e},{:.10e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    i as f64 * self.h,
                    j as f64 * self.h,
                    self.g1[k].re,
                    self.g1[k].im,
                    self.g2[k],
                    self.pop_product[k],
                    self.amp_product[k].re,
                    self.amp_product[k].im
                )?;
            }
        }
        Ok(())
    }
}

/// G_HOM = ½(G_pop + g⁽²⁾ − |g⁽¹⁾|²) pointwise.
pub fn hom_cross_correlation(grid: &CorrelatorGrid) -> Result<Vec<f64>> {
    grid.check()?;
    Ok((0..grid.g2.len())
        .map(|k| 0.5 * (grid.pop_product[k] + grid.g2[k] - grid.g1[k].norm_sqr()))
        .collect())
}

/// g⁽²⁾ values below this are regression noise and are clipped.
pub const G2_CLIP: f64 = -1e-10;

fn trapezoid_weight(k: usize, n: usize, h: f64) -> f64 {
    if k == 0 || k + 1 == n {
        0.5 * h
    } else {
        h
    }
}

/// Row sums of the numerator and of both denominator variants.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct HomRow {
    num: f64,
    den: f64,
    den_simple: f64,
}

fn hom_row(h: f64, n_tau: usize, g1: &[C], g2: &[f64], pop: &[f64], amp: &[C]) -> HomRow {
    let mut r = HomRow::default();
    for j in 0..n_tau {
        let w = trapezoid_weight(j, n_tau, h);
        let g2c = g2[j].max(G2_CLIP);
        r.num += w * (pop[j] + g2c - g1[j].norm_sqr());
        r.den += w * (2.0 * pop[j] - amp[j].norm_sqr());
        r.den_simple += w * 2.0 * pop[j];
    }
    r
}

fn finish_hom(rows: &[HomRow], h: f64, simplified: bool) -> Result<f64> {
    let n = rows.len();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, r) in rows.iter().enumerate() {
        let w = trapezoid_weight(i, n, h);
        num += w * r.num;
        den += w * if simplified { r.den_simple } else { r.den };
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator("indistinguishability"));
    }
    Ok(1.0 - num / den)
}

/// 𝓘 from a stored grid. `simplified` drops |⟨a(t+τ)⟩⟨a†(t)⟩|² from the
/// denominator.
pub fn indistinguishability(grid: &CorrelatorGrid, simplified: bool) -> Result<f64> {
    grid.check()?;
    let n = grid.n_tau;
    let rows: Vec<HomRow> = (0..grid.n_t)
        .map(|i| {
            let s = i * n..(i + 1) * n;
            hom_row(
                grid.h,
                n,
                &grid.g1[s.clone()],
                &grid.g2[s.clone()],
                &grid.pop_product[s.clone()],
                &grid.amp_product[s],
            )
        })
        .collect();
    finish_hom(&rows, grid.h, simplified)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeritReport {
    pub n_c: f64,
    pub n_x: f64,
    pub n_tot: f64,
    pub beta: f64,
    pub indistinguishability: Option<f64>,
    /// 𝓘′ = 2𝓘 − 1.
    pub alt_indistinguishability: Option<f64>,
}

impl MeritReport {
    pub fn new(n_c: f64, n_x: f64, indistinguishability: Option<f64>) -> Result<Self> {
        Ok(Self {
            n_c,
            n_x,
            n_tot: n_c + n_x,
            beta: beta_factor(n_c, n_x)?,
            indistinguishability,
            alt_indistinguishability: indistinguishability.map(|i| 2.0 * i - 1.0),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub const CSV_HEADER: &'static str = "N_c,N_x,N_tot,beta,indistinguishability,alt_indistinguishability";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10}"));
        format!(
            "{:.10},{:.10},{:.10},{:.10},{},{}",
            self.n_c,
            self.n_x,
            self.n_tot,
            self.beta,
            opt(self.indistinguishability),
            opt(self.alt_indistinguishability)
        )
    }
}

/// Grid and horizon settings for an emission analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionSettings {
    /// Uniform (t, τ) spacing, ps.
    pub h: f64,
    /// Horizon T is the first time the excitation falls below this fraction
    /// of its peak.
    pub decay_fraction: f64,
    /// Fixed horizon instead of the automatic one.
    pub horizon: Option<f64>,
    /// Give up if nothing has decayed by this time, ps.
    pub t_max: f64,
    pub ode: OdeOptions,
    /// Keep the full correlator grid (memory ∝ (T/h)²).
    pub keep_grid: bool,
    /// Skip the two-time correlators.
    pub skip_correlators: bool,
}

impl EmissionSettings {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            decay_fraction: 1e-6,
            horizon: None,
            t_max: 20_000.0,
            ode: OdeOptions::default(),
            keep_grid: false,
            skip_correlators: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmissionResult {
    pub report: MeritReport,
    /// 𝓘 without the coherent-amplitude denominator term.
    pub indistinguishability_simplified: Option<f64>,
    /// Horizon T, ps.
    pub horizon: f64,
    /// One-time observables on [0, 2T].
    pub trajectory: Trajectory,
    pub grid: Option<CorrelatorGrid>,
    pub check: DensityCheck,
}

/// Propagate from `rho0`, pick the horizon, and evaluate N_c, N_x, β and 𝓘
/// from the cavity correlators. `exciton_pop` is the operator whose γ-weighted
/// integral counts as non-cavity emission.
#[allow(clippy::too_many_arguments)]
pub fn analyze_emission(
    gen: &dyn Generator,
    space: HilbertSpace,
    rho0: &Mat,
    kappa: f64,
    gamma: f64,
    exciton_pop: &Mat,
    observables: &[(String, Mat)],
    settings: &EmissionSettings,
) -> Result<EmissionResult> {
    let h = settings.h;
    let mut evo = GridEvolution::new(gen, rho0, h, &settings.ode)?;
    let ground = space.basis_state(G, 0);
    let m = match settings.horizon {
        Some(t) => (t / h).ceil() as usize,
        None => {
            let max_len = (settings.t_max / h).ceil() as usize + 1;
            let s = evo.switch_index;
            let mut peak: f64 = 0.0;
            let mut seen = 0;
            let frac = settings.decay_fraction;
            evo.extend_until(
                |states| {
                    for r in &states[seen..] {
                        peak = peak.max(1.0 - expectation(&ground, r).re);
                    }
                    seen = states.len();
                    let last = states.len() - 1;
                    let exc = 1.0 - expectation(&ground, &states[last]).re;
                    last >= s && exc <= frac * peak
                },
                max_len,
            )?;
            evo.len() - 1
        }
    }
    .max(1);
    evo.extend_to(2 * m + 1)?;
    let horizon = m as f64 * h;

    let a = space.annihilation();
    let ad = a.adjoint();
    let num = space.number();
    let n_series = evo.expectation_series(&num);
    let a_series = evo.complex_series(&a);
    let x_series = evo.expectation_series(exciton_pop);
    let times: Vec<f64> = (0..evo.len()).map(|i| evo.time(i)).collect();
    let n_c = emitted_cavity_photons(&times, &n_series, kappa)?;
    let n_x = exciton_photons(&times, &x_series, gamma)?;

    let mut grid = None;
    let (indist, indist_simple) = if settings.skip_correlators {
        (None, None)
    } else {
        let n = m + 1;
        let correlators = [
            Correlator::first_order(ad.clone(), a.clone()),
            Correlator::sandwich(a.clone(), num.clone()),
        ];
        let keep = settings.keep_grid;
        let rows = regression_rows(gen, &evo, n, n, &correlators, &settings.ode, |i, r| {
            let g1 = &r[0];
            let g2: Vec<f64> = r[1].iter().map(|z| z.re).collect();
            let pop: Vec<f64> = (0..n).map(|j| n_series[i] * n_series[i + j]).collect();
            let amp: Vec<C> = (0..n).map(|j| a_series[i + j] * a_series[i].conj()).collect();
            let row = hom_row(h, n, g1, &g2, &pop, &amp);
            let stored = keep.then(|| (g1.clone(), g2, pop, amp));
            (row, stored)
        })?;
        let hom: Vec<HomRow> = rows.iter().map(|(r, _)| *r).collect();
        if keep {
            let mut g = CorrelatorGrid {
                h,
                n_t: n,
                n_tau: n,
                g1: Vec::with_capacity(n * n),
                g2: Vec::with_capacity(n * n),
                pop_product: Vec::with_capacity(n * n),
                amp_product: Vec::with_capacity(n * n),
            };
            for (_, s) in rows {
                let (g1, g2, pop, amp) = s.expect("rows kept");
                g.g1.extend(g1);
                g.g2.extend(g2);
                g.pop_product.extend(pop);
                g.amp_product.extend(amp);
            }
            grid = Some(g);
        }
        (Some(finish_hom(&hom, h, false)?), Some(finish_hom(&hom, h, true)?))
    };

    Ok(EmissionResult {
        report: MeritReport::new(n_c, n_x, indist)?,
        indistinguishability_simplified: indist_simple,
        horizon,
        trajectory: evo.to_trajectory(observables, false),
        grid,
        check: evo.check,
    })
}
