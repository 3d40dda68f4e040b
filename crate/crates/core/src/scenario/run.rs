//! Sweep execution and result files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{column_name, column_value, ModelSelection, PointSpec, ScenarioConfig};
use super::spectral_leakage_ratio;
use crate::cavity_qed::{CavityQedModel, ModelKind, SystemConfig};
use crate::error::{Error, Result};
use crate::merit::{analyze_emission, EmissionSettings, MeritReport};
use crate::phonon::BathCorrelationTable;
use crate::pulse::GaussianPulse;
use crate::quantum::{X, XX, Y};
use crate::reservoir::{ReservoirConfig, ReservoirModel};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "SPSIM_OUT_DIR";

/// Extra time simulated after the rates freeze when nothing is emitted.
const INVERSION_TAIL: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    ConfigError,
    NumericalError,
}

impl PointStatus {
    fn as_str(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::ConfigError => "config_error",
            PointStatus::NumericalError => "numerical_error",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub parameters: BTreeMap<String, String>,
    pub status: PointStatus,
    pub error: Option<String>,
    pub merit: Option<MeritReport>,
    pub horizon_ps: Option<f64>,
    /// ⟨σ⁺σ⁻⟩ (or the exciton-manifold population) at the end of the run.
    pub final_exciton_pop: Option<f64>,
    pub spectral_leakage: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub name: String,
    pub config_hash: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub version: String,
    pub points: Vec<PointRecord>,
}

impl RunRecord {
    pub fn failures(&self) -> impl Iterator<Item = &PointRecord> {
        self.points.iter().filter(|p| p.status != PointStatus::Ok)
    }

    /// 0 when every point succeeded, 2 if any failed on input, else 3.
    pub fn exit_code(&self) -> i32 {
        let mut code = 0;
        for p in self.failures() {
            match p.status {
                PointStatus::ConfigError => return 2,
                _ => code = 3,
            }
        }
        code
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub out_dir: PathBuf,
}

/// `--out`, then the environment, then `output.dir`, then `out/<name>`.
pub fn resolve_out_dir(cli: Option<&Path>, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name))
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Default grid step min(τ_p, 1/κ)/10.
pub fn grid_step(spec: &PointSpec) -> f64 {
    spec.grid_step
        .unwrap_or_else(|| spec.tau_p.min(1.0 / spec.kappa) / 10.0)
}

type BathKey = [u64; 4];

fn bath_key(spec: &PointSpec) -> Option<BathKey> {
    spec.phonons.map(|p| {
        [
            p.alpha.to_bits(),
            p.omega_b.to_bits(),
            p.temperature.to_bits(),
            spec.table_spacing.to_bits(),
        ]
    })
}

/// One bath table per distinct (α, ω_b, T, spacing).
fn build_baths(cfg: &ScenarioConfig) -> BTreeMap<BathKey, Result<Arc<BathCorrelationTable>>> {
    let mut keys: Vec<(BathKey, &PointSpec)> = Vec::new();
    for pt in &cfg.points {
        if let Some(k) = bath_key(&pt.spec) {
            if !keys.iter().any(|(q, _)| *q == k) {
                keys.push((k, &pt.spec));
            }
        }
    }
    keys.par_iter()
        .map(|(k, s)| {
            let p = s.phonons.expect("keyed specs have phonons");
            let t = BathCorrelationTable::build_with(&p, s.table_spacing, p.cutoff_time());
            (*k, t.map(Arc::new))
        })
        .collect()
}

fn bath_for(
    spec: &PointSpec,
    baths: &BTreeMap<BathKey, Result<Arc<BathCorrelationTable>>>,
) -> Result<Option<Arc<BathCorrelationTable>>> {
    match bath_key(spec) {
        None => Ok(None),
        Some(k) => match &baths[&k] {
            Ok(b) => Ok(Some(b.clone())),
            Err(e) => Err(Error::Domain(format!("bath table: {e}"))),
        },
    }
}

fn pulse_for(spec: &PointSpec, bath: Option<&BathCorrelationTable>) -> Result<GaussianPulse> {
    let b = bath.map_or(1.0, |b| b.b_avg());
    // The table's quadrature ⟨B⟩ agrees with the config value; keep the
    // renormalised area exact against the table actually used.
    let theta = spec.area_theta * spec.b_avg / b;
    GaussianPulse::with_center(theta, spec.tau_p, spec.center, b)
}

/// Builds the system-reservoir model for a point.
pub fn reservoir_model(
    spec: &PointSpec,
    bath: Option<Arc<BathCorrelationTable>>,
) -> Result<ReservoirModel> {
    let pulse = pulse_for(spec, bath.as_deref())?;
    let gprime = bath.as_ref().map_or(spec.g, |b| b.b_avg() * spec.g);
    let cfg = ReservoirConfig {
        gprime,
        kappa: spec.kappa,
        gamma: spec.gamma,
        phonons_enabled: bath.is_some(),
        markov_mode: spec.markov_mode,
        cavity_kernel: spec.cavity_kernel,
        phonon_scattering: spec.phonon_scattering,
    };
    ReservoirModel::new(cfg, pulse, bath)
}

/// Builds the cavity-QED model for a point.
pub fn cavity_model(
    spec: &PointSpec,
    bath: Option<Arc<BathCorrelationTable>>,
) -> Result<CavityQedModel> {
    let pulse = pulse_for(spec, bath.as_deref())?;
    let cfg = SystemConfig {
        model: spec.qd_model,
        binding_energy: spec.binding_energy,
        g: spec.g,
        kappa: spec.kappa,
        gamma: spec.gamma,
        fock_cutoff: spec.fock_cutoff,
        phonons_enabled: bath.is_some(),
        markov_mode: spec.markov_mode,
    };
    CavityQedModel::new(cfg, pulse, bath)
}

struct PointOutput {
    merit: Option<MeritReport>,
    horizon: Option<f64>,
    final_pop: Option<f64>,
    files: Vec<String>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run_cavity(
    spec: &PointSpec,
    bath: Option<Arc<BathCorrelationTable>>,
    index: usize,
    dir: &Path,
) -> Result<PointOutput> {
    let m = cavity_model(spec, bath)?;
    let s = m.space();
    let exciton = match spec.qd_model {
        ModelKind::TwoLevel => s.transition(X, X),
        ModelKind::BiexcitonCascade => {
            s.transition(X, X) + s.transition(XX, XX) * crate::quantum::C::new(2.0, 0.0)
                + s.transition(Y, Y)
        }
    };
    let mut settings = EmissionSettings::new(grid_step(spec));
    settings.decay_fraction = spec.decay_fraction;
    settings.t_max = spec.t_max;
    settings.horizon = spec.t_end;
    settings.ode = spec.ode();
    settings.skip_correlators = !spec.correlators;
    let obs = m.standard_observables();
    let res = analyze_emission(
        &m,
        s,
        &s.ground_state(),
        spec.kappa,
        spec.gamma,
        &exciton,
        &obs,
        &settings,
    )?;
    let mut files = Vec::new();
    if spec.trajectories {
        let name = format!("traj_{index:04}.csv");
        let mut w = create(dir, &name)?;
        res.trajectory.write_csv(&mut w)?;
        w.flush()?;
        files.push(name);
    }
    if spec.rates && spec.qd_model == ModelKind::TwoLevel {
        files.push(write_rates(spec, m.bath_table(), index, dir, res.horizon)?);
    }
    let final_pop = res.trajectory.observable("pop_x").and_then(|v| v.last().copied());
    Ok(PointOutput {
        merit: Some(res.report),
        horizon: Some(res.horizon),
        final_pop,
        files,
    })
}

fn run_reservoir(
    spec: &PointSpec,
    bath: Option<Arc<BathCorrelationTable>>,
    index: usize,
    dir: &Path,
) -> Result<PointOutput> {
    let m = reservoir_model(spec, bath)?;
    let h = grid_step(spec);
    let mut files = Vec::new();
    let (merit, traj) = if m.config().gprime == 0.0 && spec.gamma == 0.0 {
        // Nothing leaves the dot: report the inversion left by the pulse.
        let t_end = spec.t_end.unwrap_or(m.t_const() + INVERSION_TAIL);
        (None, m.simulate(t_end, h, &spec.ode())?)
    } else if let Some(t_end) = spec.t_end {
        let traj = m.simulate(t_end, h, &spec.ode())?;
        let n_c = crate::quadrature::trapezoid(&traj.times, &traj.values[2]);
        let n_x = spec.gamma * crate::quadrature::trapezoid(&traj.times, &traj.values[0]);
        (Some(MeritReport::new(n_c, n_x, None)?), traj)
    } else {
        let e = m.emission(h, &spec.ode(), spec.t_max)?;
        (Some(MeritReport::new(e.n_c, e.n_x, None)?), e.trajectory)
    };
    let horizon = *traj.times.last().expect("non-empty trajectory");
    if spec.trajectories {
        let name = format!("traj_{index:04}.csv");
        let mut w = create(dir, &name)?;
        traj.write_csv(&mut w)?;
        w.flush()?;
        files.push(name);
    }
    if spec.rates {
        let name = format!("rates_{index:04}.csv");
        let mut w = create(dir, &name)?;
        m.write_rate_csv(&mut w, 0.0, horizon, spec.rate_step)?;
        w.flush()?;
        files.push(name);
    }
    Ok(PointOutput {
        merit,
        horizon: Some(horizon),
        final_pop: traj.observable("pop_x").and_then(|v| v.last().copied()),
        files,
    })
}

/// Rate curves for a two-level point, whichever model it runs under.
fn write_rates(
    spec: &PointSpec,
    bath: Option<Arc<BathCorrelationTable>>,
    index: usize,
    dir: &Path,
    t_end: f64,
) -> Result<String> {
    let m = reservoir_model(spec, bath)?;
    let name = format!("rates_{index:04}.csv");
    let mut w = create(dir, &name)?;
    m.write_rate_csv(&mut w, 0.0, t_end, spec.rate_step)?;
    w.flush()?;
    Ok(name)
}

fn run_point(
    cfg: &ScenarioConfig,
    index: usize,
    baths: &BTreeMap<BathKey, Result<Arc<BathCorrelationTable>>>,
    dir: &Path,
) -> PointRecord {
    let pt = &cfg.points[index];
    let spec = &pt.spec;
    let parameters = pt
        .assignments
        .iter()
        .map(|(p, v)| (p.clone(), column_value(p, v)))
        .collect();
    let leakage = (spec.qd_model == ModelKind::BiexcitonCascade)
        .then(|| spectral_leakage_ratio(spec.tau_p, spec.binding_energy));
    let out = bath_for(spec, baths).and_then(|bath| match spec.model {
        ModelSelection::CavityQed => run_cavity(spec, bath, index, dir),
        ModelSelection::SystemReservoir => run_reservoir(spec, bath, index, dir),
    });
    match out {
        Ok(o) => PointRecord {
            index,
            parameters,
            status: PointStatus::Ok,
            error: None,
            merit: o.merit,
            horizon_ps: o.horizon,
            final_exciton_pop: o.final_pop,
            spectral_leakage: leakage,
            files: o.files,
        },
        Err(e) => {
            log::error!("point {index} failed: {e}");
            PointRecord {
                index,
                parameters,
                status: if e.is_numerical() {
                    PointStatus::NumericalError
                } else {
                    PointStatus::ConfigError
                },
                error: Some(e.to_string()),
                merit: None,
                horizon_ps: None,
                final_exciton_pop: None,
                spectral_leakage: leakage,
                files: Vec::new(),
            }
        }
    }
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::config("workers", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every sweep point and writes `merit.csv` and `run.json` (plus any
/// per-point trajectory and rate files) into `opts.out_dir`. Point failures
/// are recorded, not propagated; only I/O on the run directory is fatal.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunRecord> {
    let started = now_unix();
    std::fs::create_dir_all(&opts.out_dir)?;
    let dir = opts.out_dir.as_path();
    let points = with_pool(opts.workers, || {
        let baths = build_baths(cfg);
        (0..cfg.points.len())
            .into_par_iter()
            .map(|i| run_point(cfg, i, &baths, dir))
            .collect::<Vec<_>>()
    })?;

    let mut w = create(dir, "merit.csv")?;
    write_merit_csv(&mut w, &cfg.sweep_parameters(), &points)?;
    w.flush()?;

    let record = RunRecord {
        name: cfg.name.clone(),
        config_hash: cfg.hash.clone(),
        started_unix: started,
        finished_unix: now_unix(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        points,
    };
    let mut w = create(dir, "run.json")?;
    serde_json::to_writer_pretty(&mut w, &record).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(record)
}

pub fn write_merit_csv<W: Write>(mut w: W, sweep: &[String], points: &[PointRecord]) -> Result<()> {
    write!(w, "point")?;
    for p in sweep {
        write!(w, ",{}", column_name(p))?;
    }
    writeln!(
        w,
        ",{},horizon_ps,final_exciton_pop,spectral_leakage,status",
        MeritReport::CSV_HEADER
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
    for pt in points {
        write!(w, "{}", pt.index)?;
        for p in sweep {
            write!(w, ",{}", pt.parameters.get(p).map_or("", String::as_str))?;
        }
        match &pt.merit {
            Some(m) => write!(w, ",{}", m.csv_row())?,
            None => write!(w, ",,,,,,")?,
        }
        writeln!(
            w,
            ",{},{},{},{}",
            opt(pt.horizon_ps),
            opt(pt.final_exciton_pop),
            opt(pt.spectral_leakage),
            pt.status.as_str()
        )?;
    }
    Ok(())
}

/// Rate curves only: one `rates_NNNN.csv` per two-level point, over
/// [0, t_const + 5 ps] (or `numerics.t_end`).
pub fn write_rate_curves(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let dir = opts.out_dir.as_path();
    with_pool(opts.workers, || {
        let baths = build_baths(cfg);
        cfg.points
            .par_iter()
            .map(|pt| {
                let spec = &pt.spec;
                if spec.qd_model != ModelKind::TwoLevel {
                    return Err(Error::config(
                        "system.model",
                        "rate curves exist only for the two-level emitter",
                    ));
                }
                let bath = bath_for(spec, &baths)?;
                let m = reservoir_model(spec, bath)?;
                let t_end = spec.t_end.unwrap_or(m.t_const() + INVERSION_TAIL);
                let name = format!("rates_{:04}.csv", pt.index);
                let mut w = create(dir, &name)?;
                m.write_rate_csv(&mut w, 0.0, t_end, spec.rate_step)?;
                w.flush()?;
                Ok(dir.join(name))
            })
            .collect()
    })?
}
