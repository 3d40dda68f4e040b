//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, whatever the capture mode.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use spsim::cavity_qed::{CavityQedModel, MarkovMode, ModelKind, SystemConfig};
use spsim::merit::{analyze_emission, analytic_beta, EmissionResult, EmissionSettings};
use spsim::phonon::{spectral_density, BathCorrelationTable, PhononParams};
use spsim::pulse::GaussianPulse;
use spsim::quantum::evolution::{superoperator_matrix, Generator};
use spsim::quantum::ode::OdeOptions;
use spsim::quantum::{DensityCheck, X};
use spsim::reservoir::{
    weak_coupling_rates, purcell_factor_t, CavityKernel, PhononScattering, ReservoirConfig,
    ReservoirModel,
};
use spsim::scenario::{self, spectral_leakage_ratio, RunOptions};
use spsim::units::{thermal_coth, uev_to_rate};

type Outcome = (bool, String);

/// Density-matrix checks and simplified-𝓘 gaps gathered from every run.
#[derive(Default)]
struct Audit {
    checks: Vec<(String, DensityCheck)>,
    amp_gaps: Vec<(String, f64)>,
    traceless: Vec<(String, f64)>,
}

fn audit() -> &'static Mutex<Audit> {
    static A: OnceLock<Mutex<Audit>> = OnceLock::new();
    A.get_or_init(Default::default)
}

fn bath(wb_mev: f64) -> Arc<BathCorrelationTable> {
    static CACHE: OnceLock<Mutex<BTreeMap<u64, Arc<BathCorrelationTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut c = cache.lock().unwrap();
    c.entry(wb_mev.to_bits())
        .or_insert_with(|| {
            let p = PhononParams::from_cutoff_energy(0.03, wb_mev, 4.0).unwrap();
            Arc::new(BathCorrelationTable::build(&p).unwrap())
        })
        .clone()
}

#[derive(Clone, Copy)]
enum Coupling {
    Bare(f64),
    Renormalized(f64),
}

/// A two-level cavity-QED point, energies in μeV.
#[derive(Clone, Copy)]
struct Point {
    label: &'static str,
    g: Coupling,
    kappa: f64,
    gamma: f64,
    /// ħω_b in meV with phonons on.
    phonons: Option<f64>,
    tau_p: f64,
}

/// Largest |tr L(E_ij)| over the basis, relative to ‖L‖.
fn trace_leak(gen: &dyn Generator, t: f64) -> f64 {
    let m = superoperator_matrix(gen, t).unwrap();
    let d = gen.dim();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    (0..d * d)
        .map(|col| (0..d).map(|k| m[(k + k * d, col)]).sum::<num_complex::Complex64>().norm())
        .fold(0.0, f64::max)
        / scale
}

fn cavity_model(p: &Point, fock: usize) -> CavityQedModel {
    let b = p.phonons.map(bath);
    let b_avg = b.as_ref().map_or(1.0, |b| b.b_avg());
    let g = match p.g {
        Coupling::Bare(g) => uev_to_rate(g),
        Coupling::Renormalized(gp) => uev_to_rate(gp) / b_avg,
    };
    let cfg = SystemConfig {
        model: ModelKind::TwoLevel,
        binding_energy: 0.0,
        g,
        kappa: uev_to_rate(p.kappa),
        gamma: uev_to_rate(p.gamma),
        fock_cutoff: fock,
        phonons_enabled: b.is_some(),
        markov_mode: MarkovMode::ExactHeisenberg,
    };
    let pulse = GaussianPulse::pi_pulse(p.tau_p, b_avg).unwrap();
    CavityQedModel::new(cfg, pulse, b).unwrap()
}

fn default_h(p: &Point) -> f64 {
    p.tau_p.min(1.0 / uev_to_rate(p.kappa)) / 10.0
}

fn emission(p: &Point, fock: usize, h: f64, keep_grid: bool) -> (CavityQedModel, EmissionResult) {
    let m = cavity_model(p, fock);
    let s = m.space();
    let mut settings = EmissionSettings::new(h);
    settings.keep_grid = keep_grid;
    let a = s.annihilation();
    let ad = a.adjoint();
    let mut obs = m.standard_observables();
    obs.push(("n2".to_string(), &ad * &ad * &a * &a));
    let r = analyze_emission(
        &m,
        s,
        &s.ground_state(),
        m.cfg.kappa,
        m.cfg.gamma,
        &s.transition(X, X),
        &obs,
        &settings,
    )
    .unwrap();
    let mut a = audit().lock().unwrap();
    let tag = format!("{} (fock {fock}, h {h:.4})", p.label);
    a.checks.push((tag.clone(), r.check));
    if let (Some(i), Some(is)) = (r.report.indistinguishability, r.indistinguishability_simplified) {
        a.amp_gaps.push((tag.clone(), (i - is).abs() / i));
    }
    let t_mid = m.pulse.center;
    a.traceless.push((tag, trace_leak(&m, t_mid)));
    (m, r)
}

const C1: Point = Point {
    label: "beta point",
    g: Coupling::Renormalized(25.0),
    kappa: 250.0,
    gamma: 0.5,
    phonons: None,
    tau_p: 1.0,
};
const C3: Point = Point {
    label: "headline g=30",
    g: Coupling::Bare(30.0),
    kappa: 120.0,
    gamma: 1.0,
    phonons: Some(1.025),
    tau_p: 1.0,
};
const C4A: Point = Point {
    label: "headline g'=65",
    g: Coupling::Renormalized(65.0),
    kappa: 250.0,
    gamma: 0.5,
    phonons: Some(0.9),
    tau_p: 1.0,
};
const C4B: Point = Point {
    label: "headline g'=20",
    g: Coupling::Renormalized(20.0),
    kappa: 50.0,
    gamma: 0.5,
    phonons: Some(0.9),
    tau_p: 1.0,
};

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (m, r) = emission(&C1, 3, default_h(&C1), false);
    let want = analytic_beta(m.gprime(), m.cfg.kappa, m.cfg.gamma).unwrap();
    let rel = (r.report.beta - want).abs() / want;
    let secs = t.elapsed().as_secs_f64();
    (
        rel < 0.02 && secs < 60.0,
        format!(
            "beta = {:.5} vs analytic {want:.5} (rel {rel:.2e}, tol 2e-2), {secs:.1} s (limit 60 s)",
            r.report.beta
        ),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let (gp, kappa, gamma) = (uev_to_rate(20.0), uev_to_rate(150.0), uev_to_rate(0.5));
    let pulse = GaussianPulse::pi_pulse(0.05, 1.0).unwrap();
    let fp = 4.0 * gp * gp / (kappa * gamma);
    let mut worst: f64 = 0.0;
    for k in 0..=200 {
        let dt = 0.1 / kappa * 100f64.powf(k as f64 / 200.0);
        let got = purcell_factor_t(
            pulse.center + dt,
            &pulse,
            None,
            gp,
            kappa,
            gamma,
            MarkovMode::ExactHeisenberg,
        )
        .unwrap();
        let want = fp * (1.0 - (-0.5 * kappa * dt).exp());
        worst = worst.max((got - want).abs() / want);
    }
    (
        worst < 0.01,
        format!(
            "max rel error {worst:.2e} over t-t0 in [0.1/kappa, 10/kappa] (tol 1e-2), {:.2} s",
            t.elapsed().as_secs_f64()
        ),
    )
}

fn headline(p: &Point, i_want: f64, n_want: f64, tol: f64) -> (bool, String) {
    let (_, r) = emission(p, 3, default_h(p), false);
    let i = r.report.indistinguishability.unwrap() * 100.0;
    let n = r.report.n_c * 100.0;
    let ok = (i - i_want).abs() <= tol && (n - n_want).abs() <= tol;
    (
        ok,
        format!("{}: I = {i:.2}% (want {i_want} ± {tol}), N_c = {n:.2}% (want {n_want} ± {tol})", p.label),
    )
}

fn criterion_3() -> Outcome {
    headline(&C3, 99.3, 92.8, 0.7)
}

fn criterion_4() -> Outcome {
    let (a, sa) = headline(&C4A, 98.0, 97.0, 1.0);
    let (b, sb) = headline(&C4B, 99.6, 95.0, 1.0);
    (a && b, format!("{sa}; {sb}"))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let b = bath(0.9);
    let p = *b.params();
    let pulse = GaussianPulse::pi_pulse(0.5, b.b_avg()).unwrap();
    let peak = pulse.renormalized_amplitude(pulse.center);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        // Ω′ from 2.5% to 100% of the peak, i.e. 0.09 to 3.4 rad/ps.
        let target = peak * (0.025 + 0.975 * k as f64 / 19.0);
        let time = pulse.center - pulse.tau_p * (peak / target).ln().max(0.0).sqrt();
        let w = pulse.renormalized_amplitude(time);
        let r = weak_coupling_rates(time, &pulse, &b).unwrap();
        let j = spectral_density(w, &p).unwrap();
        let gy = 0.25 * PI * j * thermal_coth(w, p.temperature);
        let gi = -0.25 * PI * j;
        worst = worst
            .max((r.gamma_y - gy).abs() / gy.abs())
            .max((r.gamma_u_i - gi).abs() / gi.abs());
    }
    (
        worst < 1e-6,
        format!(
            "Gamma_y and Gamma_u^I max rel error {worst:.2e} on 20 Omega' values (tol 1e-6), {:.2} s",
            t.elapsed().as_secs_f64()
        ),
    )
}

fn population_deviation(g_uev: f64, mode: MarkovMode) -> f64 {
    let p = Point {
        label: "model comparison",
        g: Coupling::Bare(g_uev),
        kappa: 200.0,
        gamma: 0.5,
        phonons: None,
        tau_p: 2.0,
    };
    let (h, t_end) = (0.05, 60.0);
    let q = cavity_model(&p, 3);
    let opts = OdeOptions::default();
    let tq = q.simulate(t_end, h, &opts).unwrap();
    let cfg = ReservoirConfig {
        gprime: uev_to_rate(g_uev),
        kappa: uev_to_rate(p.kappa),
        gamma: uev_to_rate(p.gamma),
        phonons_enabled: false,
        markov_mode: mode,
        cavity_kernel: CavityKernel::RealKernel,
        phonon_scattering: PhononScattering::Full,
    };
    let r = ReservoirModel::new(cfg, q.pulse, None).unwrap();
    audit()
        .lock()
        .unwrap()
        .traceless
        .push((format!("reservoir g={g_uev} {mode:?}"), trace_leak(&r, q.pulse.center)));
    let tr = r.simulate(t_end, h, &opts).unwrap();
    audit()
        .lock()
        .unwrap()
        .checks
        .push((format!("reservoir g={g_uev} {mode:?}"), tr.check));
    tq.observable("pop_x")
        .unwrap()
        .iter()
        .zip(tr.observable("pop_x").unwrap())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn criterion_6() -> Outcome {
    let d20 = population_deviation(20.0, MarkovMode::ExactHeisenberg);
    let d65 = population_deviation(65.0, MarkovMode::ExactHeisenberg);
    let m20 = population_deviation(20.0, MarkovMode::AdditionalMarkov);
    (
        d20 < 0.02 && d65 > d20,
        format!(
            "max |dP_x| g=20: {d20:.4} (tol 0.02), g=65: {d65:.4} (must exceed g=20); \
             frozen-drive variant at g=20: {m20:.4}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = scenario::parse_config_str(scenario::preset("fig4").unwrap(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rec = scenario::run_scenario(
        &cfg,
        &RunOptions {
            workers: None,
            out_dir: dir.path().to_path_buf(),
        },
    )
    .unwrap();
    let mut inv: BTreeMap<(String, String), f64> = BTreeMap::new();
    for p in &rec.points {
        let tau = p.parameters["pulse.tau_p"].clone();
        let mode = p.parameters["system.markov_mode"].clone();
        inv.insert((tau, mode), p.final_exciton_pop.unwrap());
    }
    let get = |tau: &str| {
        (
            inv[&(tau.to_string(), "exact_heisenberg".to_string())],
            inv[&(tau.to_string(), "additional_markov".to_string())],
        )
    };
    let mut ok = true;
    let mut msg = Vec::new();
    for tau in ["0.6", "1", "2"] {
        let (e, m) = get(tau);
        ok &= e >= m;
        msg.push(format!("tau_p={tau}: exact {e:.5} markov {m:.5}"));
    }
    let (e06, m06) = get("0.6");
    ok &= e06 > m06;
    let (e20, m20) = get("20");
    let rel = (e20 - m20).abs() / e20;
    ok &= rel < 0.01;
    msg.push(format!("tau_p=20: rel diff {rel:.2e} (tol 1e-2)"));
    (ok, msg.join("; "))
}

fn criterion_8() -> Outcome {
    let taus = [1.0, 2.0, 5.0, 10.0];
    let res: Vec<(f64, f64)> = taus
        .iter()
        .map(|&tau_p| {
            let p = Point {
                label: "pulse-width sweep",
                tau_p,
                ..C1
            };
            let (_, r) = emission(&p, 3, default_h(&p), false);
            (r.report.n_tot, r.report.indistinguishability.unwrap())
        })
        .collect();
    let ok = res.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1);
    let s: Vec<String> = taus
        .iter()
        .zip(&res)
        .map(|(t, (n, i))| format!("tau_p={t}: N_tot {n:.5} I {i:.5}"))
        .collect();
    (ok, s.join("; "))
}

fn criterion_9() -> Outcome {
    let mut msg = Vec::new();
    let mut ok = true;

    // Fock-cutoff doubling and grid halving on the acceptance cavity points.
    for p in [C1, C3, C4A, C4B] {
        let h = default_h(&p);
        let (_, base) = emission(&p, 3, h, false);
        let (_, fock) = emission(&p, 6, h, false);
        let (_, fine) = emission(&p, 3, 0.5 * h, false);
        let (b, f) = (base.report, fock.report);
        let dfock = [
            (b.n_c - f.n_c).abs(),
            (b.n_x - f.n_x).abs(),
            (b.beta - f.beta).abs(),
            (b.indistinguishability.unwrap() - f.indistinguishability.unwrap()).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        let dgrid = (b.indistinguishability.unwrap()
            - fine.report.indistinguishability.unwrap())
        .abs();
        ok &= dfock < 1e-4 && dgrid < 1e-4;
        msg.push(format!("{}: fock {dfock:.1e}, grid {dgrid:.1e}", p.label));
    }

    // τ = 0 regression identities: G1(t,0) = ⟨a†a⟩(t), G2(t,0) = ⟨a†a†aa⟩(t).
    let (_, r) = emission(&C4A, 3, default_h(&C4A), true);
    let grid = r.grid.as_ref().unwrap();
    let n = r.trajectory.observable("n_cav").unwrap();
    let n2 = r.trajectory.observable("n2").unwrap();
    let mut g_err: f64 = 0.0;
    let mut n2_err: f64 = 0.0;
    for i in 0..grid.n_t {
        let k = i * grid.n_tau;
        g_err = g_err.max((grid.g1[k].re - n[i]).abs()).max(grid.g1[k].im.abs());
        n2_err = n2_err.max((grid.g2[k] - n2[i]).abs());
    }
    let regress_ok = g_err < 1e-10 && n2_err < 1e-10;
    ok &= regress_ok;
    msg.push(format!("regression tau=0 |G1-n| {g_err:.1e}, |G2-<a+a+aa>| {n2_err:.1e} (1e-10)"));

    let a = audit().lock().unwrap();
    let trace = a.checks.iter().map(|(_, c)| c.trace_error).fold(0.0, f64::max);
    let herm = a.checks.iter().map(|(_, c)| c.hermiticity_error).fold(0.0, f64::max);
    let (worst_run, minev) = a
        .checks
        .iter()
        .map(|(n, c)| (n.as_str(), c.min_eigenvalue))
        .fold(("", f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let leak = a.traceless.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    let gap = a.amp_gaps.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    ok &= trace < 1e-8 && herm < 1e-10 && minev > -1e-6 && leak < 1e-12 && gap < 1e-3;
    msg.push(format!(
        "{} runs: max |tr-1| {trace:.1e} (1e-8), hermiticity {herm:.1e} (1e-10), \
         min eigenvalue {minev:.1e} in {worst_run} (> -1e-6), trace leak of L {leak:.1e} (1e-12), \
         I vs simplified I {gap:.1e} (1e-3)",
        a.checks.len()
    ));
    (ok, msg.join("; "))
}

fn criterion_10() -> Outcome {
    // Reference values evaluated independently at 30 significant digits.
    let cases = [
        (1.0, 0.0, 1.0),
        (1.0, 1.0, 0.865_661_911_857_275_4),
        (10.0, 1.0, 5.430_389_079_592_732e-7),
    ];
    let worst = cases
        .iter()
        .map(|&(t, e, want)| (spectral_leakage_ratio(t, e) - want).abs())
        .fold(0.0, f64::max);
    (worst < 1e-12, format!("max abs error {worst:.1e} on 3 examples (tol 1e-12)"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("analytic beta", criterion_1),
        ("delta-pulse Purcell factor", criterion_2),
        ("headline g=30 point", criterion_3),
        ("headline g'=65 and g'=20 points", criterion_4),
        ("weak-coupling phonon identities", criterion_5),
        ("reservoir vs cavity-QED populations", criterion_6),
        ("inversion ordering of kernel modes", criterion_7),
        ("pulse-width monotonicity", criterion_8),
        ("property suite", criterion_9),
        ("spectral-leakage diagnostic", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} ({name}): {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
