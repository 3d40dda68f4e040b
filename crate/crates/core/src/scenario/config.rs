//! Scenario files.
//!
//! A scenario is a TOML document with nested sections. Physical quantities
//! are written either as a bare number in the field's default unit or as a
//! string `"<number> <unit>"`, e.g. `kappa = "250 ueV"` or `tau_p = "1 ps"`.
//! Sweeps name a dotted parameter path (`pulse.tau_p`, `system.g`, `model`)
//! and either a list of values or a start/stop/points range; the product of
//! all axes is enumerated with the first axis outermost.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavity_qed::{MarkovMode, ModelKind};
use crate::error::{Error, Result};
use crate::phonon::{coherent_displacement, PhononParams, DEFAULT_TABLE_SPACING};
use crate::quantum::ode::OdeOptions;
use crate::reservoir::{CavityKernel, PhononScattering};
use crate::units::{mev_to_rate, uev_to_rate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    CavityQed,
    SystemReservoir,
}

/// A number in the default unit, or `"<number> <unit>"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// ħ-scaled rates and couplings; stored in rad/ps, shown in μeV.
    Coupling,
    /// Energies, stored and shown in meV.
    Energy,
    Time,
    Temperature,
    /// Phonon coupling α, ps².
    Alpha,
}

impl Kind {
    pub fn default_unit(self) -> &'static str {
        match self {
            Kind::Coupling => "ueV",
            Kind::Energy => "meV",
            Kind::Time => "ps",
            Kind::Temperature => "K",
            Kind::Alpha => "ps2",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Coupling => "coupling/rate",
            Kind::Energy => "energy",
            Kind::Time => "time",
            Kind::Temperature => "temperature",
            Kind::Alpha => "phonon coupling (ps^2)",
        }
    }

    /// Scale to the display unit and the kind a unit string belongs to.
    fn lookup(unit: &str) -> Option<(Kind, f64)> {
        // Energies double as couplings; the caller resolves which is meant.
        Some(match unit {
            "ueV" | "μeV" | "µeV" => (Kind::Energy, 1e-3),
            "meV" => (Kind::Energy, 1.0),
            "eV" => (Kind::Energy, 1e3),
            "rad/ps" | "1/ps" | "per_ps" | "ps^-1" => (Kind::Coupling, f64::NAN),
            "fs" => (Kind::Time, 1e-3),
            "ps" => (Kind::Time, 1.0),
            "ns" => (Kind::Time, 1e3),
            "K" => (Kind::Temperature, 1.0),
            "mK" => (Kind::Temperature, 1e-3),
            "ps2" | "ps^2" => (Kind::Alpha, 1.0),
            _ => return None,
        })
    }
}

/// Kinds of the quantity-valued parameters, by dotted path.
pub const QUANTITY_PATHS: &[(&str, Kind)] = &[
    ("system.g", Kind::Coupling),
    ("system.gprime", Kind::Coupling),
    ("system.kappa", Kind::Coupling),
    ("system.gamma", Kind::Coupling),
    ("system.binding_energy", Kind::Energy),
    ("phonons.alpha", Kind::Alpha),
    ("phonons.cutoff_energy", Kind::Energy),
    ("phonons.temperature", Kind::Temperature),
    ("phonons.table_spacing", Kind::Time),
    ("pulse.tau_p", Kind::Time),
    ("pulse.center", Kind::Time),
    ("numerics.grid_step", Kind::Time),
    ("numerics.t_max", Kind::Time),
    ("numerics.t_end", Kind::Time),
    ("output.rate_step", Kind::Time),
];

pub fn kind_of(path: &str) -> Option<Kind> {
    QUANTITY_PATHS
        .iter()
        .find(|(p, _)| *p == path)
        .map(|&(_, k)| k)
}

fn split_quantity(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let mut parts = s.split_whitespace();
    let num = parts.next()?;
    let unit = parts.next();
    if parts.next().is_some() {
        return None;
    }
    let v: f64 = num.parse().ok()?;
    Some((v, unit.unwrap_or("")))
}

impl Quantity {
    /// Value in the display unit of `kind` (μeV, meV, ps, K, ps²).
    pub fn display_value(&self, kind: Kind, field: &str) -> Result<f64> {
        let (v, unit) = match self {
            Quantity::Number(v) => return Ok(*v),
            Quantity::Text(s) => split_quantity(s).ok_or_else(|| {
                Error::config(field, format!("cannot parse `{s}` as `<number> <unit>`"))
            })?,
        };
        if unit.is_empty() {
            return Ok(v);
        }
        let (k, scale) = Kind::lookup(unit)
            .ok_or_else(|| Error::config(field, format!("unknown unit `{unit}`")))?;
        match (kind, k) {
            (Kind::Coupling, Kind::Energy) => Ok(v * scale * 1e3),
            (Kind::Coupling, Kind::Coupling) => Ok(v * crate::units::HBAR_MEV_PS * 1e3),
            (a, b) if a == b => Ok(v * scale),
            _ => Err(Error::config(
                field,
                format!(
                    "unit mismatch: `{unit}` is a {} unit but this field expects {} (e.g. `{}`)",
                    k.name(),
                    kind.name(),
                    kind.default_unit()
                ),
            )),
        }
    }

    /// Value in internal units: rad/ps, meV, ps, K, ps².
    pub fn internal(&self, kind: Kind, field: &str) -> Result<f64> {
        let v = self.display_value(kind, field)?;
        if !v.is_finite() {
            return Err(Error::config(field, "value must be finite"));
        }
        Ok(match kind {
            Kind::Coupling => uev_to_rate(v),
            _ => v,
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SystemSection {
    pub model: Option<ModelKind>,
    /// Bare coupling ħg.
    pub g: Option<Quantity>,
    /// Renormalised coupling ħg′ = ⟨B⟩ħg; give this or `g`.
    pub gprime: Option<Quantity>,
    pub kappa: Option<Quantity>,
    pub gamma: Option<Quantity>,
    pub binding_energy: Option<Quantity>,
    pub fock_cutoff: Option<usize>,
    pub markov_mode: Option<MarkovMode>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhononSection {
    pub enabled: Option<bool>,
    pub alpha: Option<Quantity>,
    pub cutoff_energy: Option<Quantity>,
    pub temperature: Option<Quantity>,
    pub table_spacing: Option<Quantity>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PulseSection {
    pub tau_p: Option<Quantity>,
    /// Renormalised area ⟨B⟩Θ in units of π.
    pub area: Option<f64>,
    pub center: Option<Quantity>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReservoirSection {
    pub cavity_kernel: Option<CavityKernel>,
    pub phonon_scattering: Option<PhononScattering>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NumericsSection {
    pub grid_step: Option<Quantity>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub decay_fraction: Option<f64>,
    pub t_max: Option<Quantity>,
    pub t_end: Option<Quantity>,
    pub correlators: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub trajectories: Option<bool>,
    pub rates: Option<bool>,
    pub rate_step: Option<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Option<Vec<toml::Value>>,
    pub start: Option<Quantity>,
    pub stop: Option<Quantity>,
    pub points: Option<usize>,
    pub spacing: Option<Spacing>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub model: Option<ModelSelection>,
    pub strict: Option<bool>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub phonons: PhononSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub reservoir: ReservoirSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

/// Fully resolved parameters of one run point, in internal units.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSpec {
    pub model: ModelSelection,
    pub qd_model: ModelKind,
    /// Bare g, rad/ps.
    pub g: f64,
    /// g′ = ⟨B⟩g, rad/ps.
    pub gprime: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// meV.
    pub binding_energy: f64,
    pub fock_cutoff: usize,
    pub markov_mode: MarkovMode,
    pub phonons: Option<PhononParams>,
    pub table_spacing: f64,
    pub b_avg: f64,
    pub tau_p: f64,
    /// Bare area Θ, rad.
    pub area_theta: f64,
    pub center: f64,
    pub cavity_kernel: CavityKernel,
    pub phonon_scattering: PhononScattering,
    pub grid_step: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub decay_fraction: f64,
    pub t_max: f64,
    pub t_end: Option<f64>,
    pub correlators: bool,
    pub trajectories: bool,
    pub rates: bool,
    pub rate_step: f64,
}

impl PointSpec {
    pub fn ode(&self) -> OdeOptions {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            ..OdeOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    /// (path, value) assignments applied on top of the base file.
    pub assignments: Vec<(String, toml::Value)>,
    pub spec: PointSpec,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub strict: bool,
    pub file: ScenarioFile,
    pub base: toml::Value,
    pub points: Vec<SweepPoint>,
    pub out_dir: Option<PathBuf>,
    /// SHA-256 of the canonical JSON form of the parsed document.
    pub hash: String,
}

impl ScenarioConfig {
    pub fn sweep_parameters(&self) -> Vec<String> {
        self.file.sweep.iter().map(|a| a.parameter.clone()).collect()
    }
}

/// Line number (1-based) of `key = ...` inside the table named by the
/// rest of the dotted path, for diagnostics.
fn line_of(text: &str, path: &str) -> Option<usize> {
    let (table, key) = path.rsplit_once('.').unwrap_or(("", path));
    let mut current = String::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim();
        if let Some(h) = l.strip_prefix('[') {
            current = h.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        let hit = l
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='));
        if hit && current == table {
            return Some(i + 1);
        }
    }
    None
}

fn with_line(text: &str, path: &str, msg: String) -> Error {
    match line_of(text, path) {
        Some(l) => Error::config(path, format!("{msg} (line {l})")),
        None => Error::config(path, msg),
    }
}

fn parse_file(text: &str, strict_override: Option<bool>) -> Result<(ScenarioFile, bool)> {
    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let file: ScenarioFile = serde_ignored::deserialize(de, |p| unknown.push(p.to_string()))
        .map_err(|e| Error::config("<document>", e.to_string()))?;
    let strict = strict_override.or(file.strict).unwrap_or(true);
    report_unknown(text, &unknown, strict)?;
    Ok((file, strict))
}

fn report_unknown(text: &str, unknown: &[String], strict: bool) -> Result<()> {
    for p in unknown {
        if strict {
            return Err(with_line(text, p, "unknown key".to_string()));
        }
        log::warn!("ignoring unknown key `{p}`");
    }
    Ok(())
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::config(path, "path runs through a non-table value"))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}

fn axis_values(axis: &SweepAxis) -> Result<Vec<toml::Value>> {
    let field = format!("sweep.{}", axis.parameter);
    if let Some(v) = &axis.values {
        if axis.start.is_some() || axis.stop.is_some() || axis.points.is_some() {
            return Err(Error::config(field, "give either `values` or start/stop/points"));
        }
        if v.is_empty() {
            return Err(Error::config(field, "empty value list"));
        }
        return Ok(v.clone());
    }
    let (Some(a), Some(b), Some(n)) = (&axis.start, &axis.stop, axis.points) else {
        return Err(Error::config(field, "needs `values` or all of start/stop/points"));
    };
    if n == 0 {
        return Err(Error::config(field, "points must be >= 1"));
    }
    let split = |q: &Quantity| -> Result<(f64, String)> {
        match q {
            Quantity::Number(v) => Ok((*v, String::new())),
            Quantity::Text(s) => split_quantity(s)
                .map(|(v, u)| (v, u.to_string()))
                .ok_or_else(|| Error::config(&field, format!("cannot parse `{s}`"))),
        }
    };
    let (va, ua) = split(a)?;
    let (vb, ub) = split(b)?;
    if ua != ub {
        return Err(Error::config(&field, format!("start unit `{ua}` differs from stop unit `{ub}`")));
    }
    let spacing = axis.spacing.unwrap_or_default();
    if spacing == Spacing::Log && !(va > 0.0 && vb > 0.0) {
        return Err(Error::config(&field, "log spacing needs positive endpoints"));
    }
    Ok((0..n)
        .map(|k| {
            let f = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
            let v = match spacing {
                Spacing::Linear => va + f * (vb - va),
                Spacing::Log => (va.ln() + f * (vb.ln() - va.ln())).exp(),
            };
            if ua.is_empty() {
                toml::Value::Float(v)
            } else {
                toml::Value::String(format!("{v} {ua}"))
            }
        })
        .collect())
}

fn required<'a>(q: &'a Option<Quantity>, field: &str) -> Result<&'a Quantity> {
    q.as_ref()
        .ok_or_else(|| Error::config(field, "missing required value"))
}

fn positive(v: f64, field: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(v: f64, field: &str) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be >= 0, got {v}")))
    }
}

/// Defaults: two-level emitter, exact Heisenberg kernels, Fock cutoff 3,
/// π pulse centred at 3τ_p, phonons off (α = 0.03 ps², ħω_b = 0.9 meV,
/// T = 4 K when switched on), rtol 1e−9, atol 1e−11.
pub fn resolve(file: &ScenarioFile) -> Result<PointSpec> {
    let s = &file.system;
    let model = file.model.unwrap_or(ModelSelection::CavityQed);
    let qd_model = s.model.unwrap_or(ModelKind::TwoLevel);
    let kappa = positive(
        required(&s.kappa, "system.kappa")?.internal(Kind::Coupling, "system.kappa")?,
        "system.kappa",
    )?;
    let gamma = match &s.gamma {
        Some(q) => non_negative(q.internal(Kind::Coupling, "system.gamma")?, "system.gamma")?,
        None => 0.0,
    };
    let binding_energy = match &s.binding_energy {
        Some(q) => q.internal(Kind::Energy, "system.binding_energy")?,
        None => 0.0,
    };
    let fock_cutoff = s.fock_cutoff.unwrap_or(3);
    if fock_cutoff == 0 {
        return Err(Error::config("system.fock_cutoff", "must be >= 1"));
    }
    let markov_mode = s.markov_mode.unwrap_or(MarkovMode::ExactHeisenberg);

    let ph = &file.phonons;
    let enabled = ph.enabled.unwrap_or(false);
    let alpha = match &ph.alpha {
        Some(q) => non_negative(q.internal(Kind::Alpha, "phonons.alpha")?, "phonons.alpha")?,
        None => 0.03,
    };
    let wb = match &ph.cutoff_energy {
        Some(q) => q.internal(Kind::Energy, "phonons.cutoff_energy")?,
        None => 0.9,
    };
    let temperature = match &ph.temperature {
        Some(q) => q.internal(Kind::Temperature, "phonons.temperature")?,
        None => 4.0,
    };
    let table_spacing = match &ph.table_spacing {
        Some(q) => positive(
            q.internal(Kind::Time, "phonons.table_spacing")?,
            "phonons.table_spacing",
        )?,
        None => DEFAULT_TABLE_SPACING,
    };
    let (phonons, b_avg) = if enabled {
        let p = PhononParams::from_cutoff_energy(alpha, wb, temperature)
            .map_err(|e| Error::config("phonons", e.to_string()))?;
        let b = coherent_displacement(&p).map_err(|e| Error::config("phonons", e.to_string()))?;
        (Some(p), b)
    } else {
        (None, 1.0)
    };

    let (g, gprime) = match (&s.g, &s.gprime) {
        (Some(q), None) => {
            let g = non_negative(q.internal(Kind::Coupling, "system.g")?, "system.g")?;
            (g, b_avg * g)
        }
        (None, Some(q)) => {
            let gp = non_negative(q.internal(Kind::Coupling, "system.gprime")?, "system.gprime")?;
            (gp / b_avg, gp)
        }
        (Some(_), Some(_)) => {
            return Err(Error::config("system.g", "give either `g` or `gprime`, not both"))
        }
        (None, None) => return Err(Error::config("system.g", "missing coupling `g` or `gprime`")),
    };

    let p = &file.pulse;
    let tau_p = positive(
        required(&p.tau_p, "pulse.tau_p")?.internal(Kind::Time, "pulse.tau_p")?,
        "pulse.tau_p",
    )?;
    let area = non_negative(p.area.unwrap_or(1.0), "pulse.area")?;
    let center = match &p.center {
        Some(q) => q.internal(Kind::Time, "pulse.center")?,
        None => 3.0 * tau_p,
    };

    if model == ModelSelection::SystemReservoir && qd_model != ModelKind::TwoLevel {
        return Err(Error::config(
            "system.model",
            "the system-reservoir model supports only `two_level`",
        ));
    }

    let n = &file.numerics;
    let opt_time = |q: &Option<Quantity>, f: &str| -> Result<Option<f64>> {
        q.as_ref()
            .map(|q| q.internal(Kind::Time, f).and_then(|v| positive(v, f)))
            .transpose()
    };
    let rtol = positive(n.rtol.unwrap_or(1e-9), "numerics.rtol")?;
    let atol = positive(n.atol.unwrap_or(1e-11), "numerics.atol")?;
    let decay_fraction = positive(n.decay_fraction.unwrap_or(1e-6), "numerics.decay_fraction")?;
    let o = &file.output;

    Ok(PointSpec {
        model,
        qd_model,
        g,
        gprime,
        kappa,
        gamma,
        binding_energy,
        fock_cutoff,
        markov_mode,
        phonons,
        table_spacing,
        b_avg,
        tau_p,
        area_theta: area * std::f64::consts::PI / b_avg,
        center,
        cavity_kernel: file.reservoir.cavity_kernel.unwrap_or(CavityKernel::RealKernel),
        phonon_scattering: file.reservoir.phonon_scattering.unwrap_or(PhononScattering::Full),
        grid_step: opt_time(&n.grid_step, "numerics.grid_step")?,
        rtol,
        atol,
        decay_fraction,
        t_max: opt_time(&n.t_max, "numerics.t_max")?.unwrap_or(20_000.0),
        t_end: opt_time(&n.t_end, "numerics.t_end")?,
        correlators: n.correlators.unwrap_or(true),
        trajectories: o.trajectories.unwrap_or(false),
        rates: o.rates.unwrap_or(false),
        rate_step: opt_time(&o.rate_step, "output.rate_step")?.unwrap_or(0.05),
    })
}

/// Parses and validates a scenario document, enumerating every sweep point.
pub fn parse_config_str(text: &str, strict_override: Option<bool>) -> Result<ScenarioConfig> {
    let (file, strict) = parse_file(text, strict_override)?;
    let base: toml::Value =
        toml::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let canonical = serde_json::to_string(&base).expect("toml values serialise as JSON");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));

    let axes: Vec<(String, Vec<toml::Value>)> = file
        .sweep
        .iter()
        .map(|a| Ok((a.parameter.clone(), axis_values(a)?)))
        .collect::<Result<_>>()?;
    for (i, (p, _)) in axes.iter().enumerate() {
        if p.starts_with("sweep") || p == "strict" || p == "name" || p.starts_with("output.dir") {
            return Err(Error::config(format!("sweep.{p}"), "parameter cannot be swept"));
        }
        if axes[..i].iter().any(|(q, _)| q == p) {
            return Err(Error::config(format!("sweep.{p}"), "parameter swept twice"));
        }
    }

    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut points = Vec::with_capacity(total);
    for index in 0..total {
        let mut rem = index;
        let mut assignments = Vec::with_capacity(axes.len());
        for (p, vals) in axes.iter().rev() {
            assignments.push((p.clone(), vals[rem % vals.len()].clone()));
            rem /= vals.len();
        }
        assignments.reverse();
        let spec = if assignments.is_empty() {
            resolve(&file)?
        } else {
            let mut v = base.clone();
            for (p, val) in &assignments {
                set_path(&mut v, p, val.clone())?;
            }
            let mut unknown = Vec::new();
            let f: ScenarioFile = serde_ignored::deserialize(v, |p| unknown.push(p.to_string()))
                .map_err(|e| Error::config("sweep", format!("point {index}: {e}")))?;
            for (p, _) in &assignments {
                if unknown.iter().any(|u| u == p) {
                    return Err(Error::config(
                        format!("sweep.{p}"),
                        "sweep axis references an unknown parameter",
                    ));
                }
            }
            report_unknown(text, &unknown, strict)?;
            resolve(&f).map_err(|e| match e {
                Error::Config { field, message } => Error::Config {
                    field,
                    message: format!("{message} (sweep point {index})"),
                },
                other => other,
            })?
        };
        points.push(SweepPoint {
            index,
            assignments,
            spec,
        });
    }

    Ok(ScenarioConfig {
        name: file.name.clone().unwrap_or_else(|| "scenario".to_string()),
        strict,
        out_dir: file.output.dir.as_ref().map(PathBuf::from),
        file,
        base,
        points,
        hash,
    })
}

pub fn parse_config(path: &Path, strict_override: Option<bool>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::config(path.display().to_string(), format!("cannot read file: {e}"))
    })?;
    parse_config_str(&text, strict_override)
}

/// Column header for a swept parameter, with its unit suffix.
pub fn column_name(path: &str) -> String {
    match kind_of(path) {
        Some(k) => format!("{path}_{}", k.default_unit()),
        None => path.to_string(),
    }
}

/// Display form of a swept value, converted to the column unit.
pub fn column_value(path: &str, v: &toml::Value) -> String {
    if let Some(k) = kind_of(path) {
        let q = match v {
            toml::Value::Float(x) => Some(Quantity::Number(*x)),
            toml::Value::Integer(x) => Some(Quantity::Number(*x as f64)),
            toml::Value::String(s) => Some(Quantity::Text(s.clone())),
            _ => None,
        };
        if let Some(x) = q.and_then(|q| q.display_value(k, path).ok()) {
            return format!("{x}");
        }
    }
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Converts an energy in meV to rad/ps; kept next to the unit table.
pub fn energy_to_rate(e_mev: f64) -> f64 {
    mev_to_rate(e_mev)
}
