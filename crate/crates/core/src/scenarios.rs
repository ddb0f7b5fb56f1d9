//! Scenario descriptions, named presets and the order-comparison driver.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coefficients::{alpha_decay_coulomb_strength, Dispersion, OperatorSpec, PhysicalConstants};
use crate::diagnostics::{conservation_report, DriftReport};
use crate::error::{HosfError, Result};
use crate::grid::{l2_norm, Field, GridSpec, OrbitalSet};
use crate::meanfield::{CoulombKernel, KernelSpec, MeanFieldModel};
use crate::potentials::PotentialSpec;
use crate::propagation::{step_plan, Cadence, Hamiltonian, Integrator, IntegratorConfig, Simulation};

/// Orbitals whose boundary mass exceeds this are rejected.
pub const MAX_BOUNDARY_MASS: f64 = 1e-8;
/// Spectral mass in the top octave above this triggers a resolution warning.
pub const TOP_OCTAVE_WARNING: f64 = 1e-6;

/// Initial orbital recipes. Every entry adds one orbital except
/// `gaussian_set`, which adds `count`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrbitalSpec {
    /// `exp(-|x - center|² / (4 width²) + i momentum · x / ħ)`
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
        #[serde(default)]
        momentum: Vec<f64>,
    },
    /// Gaussian envelope carrying the exact grid mode `mode`.
    PlaneWavePacket {
        mode: Vec<i64>,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `count` Gaussians spaced `separation` apart along the first axis,
    /// centered on the origin.
    GaussianSet {
        count: usize,
        width: f64,
        separation: f64,
        #[serde(default)]
        momentum: Vec<f64>,
    },
}

impl OrbitalSpec {
    fn width(&self) -> f64 {
        match self {
            OrbitalSpec::Gaussian { width, .. }
            | OrbitalSpec::PlaneWavePacket { width, .. }
            | OrbitalSpec::GaussianSet { width, .. } => *width,
        }
    }

    fn count(&self) -> usize {
        match self {
            OrbitalSpec::GaussianSet { count, .. } => *count,
            _ => 1,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_operator() -> Dispersion {
    Dispersion::Polynomial { order: 1 }
}

/// Full description of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub constants: PhysicalConstants,
    #[serde(default = "default_operator")]
    pub operator: Dispersion,
    #[serde(default = "default_true")]
    pub subtract_rest_energy: bool,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub model: MeanFieldModel,
    pub orbitals: Vec<OrbitalSpec>,
    pub integrator: IntegratorConfig,
    pub horizon: f64,
    #[serde(default)]
    pub cadence: Cadence,
}

fn vector(v: &[f64], dim: usize, key: &str) -> Result<[f64; 3]> {
    if v.len() > dim {
        return Err(HosfError::config(
            key,
            format!("has {} components for a {dim}-dimensional grid", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(HosfError::config(key, "components must be finite"));
    }
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    Ok(out)
}

impl ScenarioSpec {
    /// Parse JSON, reporting the full path of the offending key.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HosfError::config(path, e.into_inner().to_string())
        })
    }

    pub fn from_value(value: Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            HosfError::config(path, e.into_inner().to_string())
        })
    }

    /// Cheap checks that need no field allocation.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.constants.validate()?;
        self.operator.validate()?;
        self.integrator.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(HosfError::config("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.cadence.diagnostics_every == 0 {
            return Err(HosfError::config("cadence.diagnostics_every", "must be >= 1"));
        }
        if self.cadence.snapshot_every == Some(0) {
            return Err(HosfError::config("cadence.snapshot_every", "must be >= 1"));
        }
        if !(self.kernel.screening > 0.0 && self.kernel.screening.is_finite()) {
            return Err(HosfError::config("kernel.screening", "must be positive"));
        }
        if self.orbitals.is_empty() || self.orbitals.iter().map(OrbitalSpec::count).sum::<usize>() == 0 {
            return Err(HosfError::config("orbitals", "at least one orbital is required"));
        }
        let min_cell = (0..self.grid.dim)
            .map(|a| self.grid.spacing(a))
            .fold(f64::INFINITY, f64::min);
        for (i, o) in self.orbitals.iter().enumerate() {
            let w = o.width();
            if !(w >= 2.0 * min_cell) {
                return Err(HosfError::config(
                    format!("orbitals[{i}].width"),
                    format!("packet width {w} is under-resolved; need >= 2 cells = {}", 2.0 * min_cell),
                ));
            }
            match o {
                OrbitalSpec::Gaussian { center, momentum, .. } => {
                    vector(center, self.grid.dim, &format!("orbitals[{i}].center"))?;
                    vector(momentum, self.grid.dim, &format!("orbitals[{i}].momentum"))?;
                }
                OrbitalSpec::PlaneWavePacket { mode, center, .. } => {
                    vector(center, self.grid.dim, &format!("orbitals[{i}].center"))?;
                    let half = (self.grid.points / 2) as i64;
                    if mode.len() > self.grid.dim || mode.iter().any(|m| m.abs() >= half) {
                        return Err(HosfError::config(
                            format!("orbitals[{i}].mode"),
                            format!("needs <= {} entries in (-{half}, {half})", self.grid.dim),
                        ));
                    }
                }
                OrbitalSpec::GaussianSet { momentum, separation, .. } => {
                    vector(momentum, self.grid.dim, &format!("orbitals[{i}].momentum"))?;
                    if !separation.is_finite() {
                        return Err(HosfError::config(format!("orbitals[{i}].separation"), "must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn with_operator(&self, operator: Dispersion) -> Self {
        ScenarioSpec {
            operator,
            ..self.clone()
        }
    }
}

/// Everything needed to start a run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub orbitals: OrbitalSet,
    pub integrator: IntegratorConfig,
    pub potential: PotentialSpec,
    pub operator: OperatorSpec,
    pub hamiltonian: Hamiltonian,
    /// Non-fatal resolution warnings.
    pub warnings: Vec<String>,
}

impl Scenario {
    pub fn simulation(&self) -> Result<Simulation> {
        Simulation::new(
            Integrator::new(self.hamiltonian.clone(), self.integrator)?,
            self.orbitals.clone(),
        )
    }
}

fn gaussian(grid: &GridSpec, center: [f64; 3], width: f64, wavevector: [f64; 3]) -> Field {
    Field::from_fn(grid, |x| {
        let d = grid.min_image(x, center);
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let phase = wavevector[0] * x[0] + wavevector[1] * x[1] + wavevector[2] * x[2];
        Complex64::from_polar((-r2 / (4.0 * width * width)).exp(), phase)
    })
}

fn build_orbitals(spec: &ScenarioSpec) -> Result<Vec<Field>> {
    let grid = &spec.grid;
    let hbar = spec.constants.hbar;
    let mut out = Vec::new();
    for (i, o) in spec.orbitals.iter().enumerate() {
        match o {
            OrbitalSpec::Gaussian { center, width, momentum } => {
                let c = vector(center, grid.dim, &format!("orbitals[{i}].center"))?;
                let p = vector(momentum, grid.dim, &format!("orbitals[{i}].momentum"))?;
                out.push(gaussian(grid, c, *width, p.map(|v| v / hbar)));
            }
            OrbitalSpec::PlaneWavePacket { mode, width, center } => {
                let c = vector(center, grid.dim, &format!("orbitals[{i}].center"))?;
                let mut k = [0.0; 3];
                for (a, m) in mode.iter().enumerate() {
                    k[a] = 2.0 * std::f64::consts::PI * *m as f64 / grid.box_length[a];
                }
                out.push(gaussian(grid, c, *width, k));
            }
            OrbitalSpec::GaussianSet {
                count,
                width,
                separation,
                momentum,
            } => {
                let p = vector(momentum, grid.dim, &format!("orbitals[{i}].momentum"))?;
                for n in 0..*count {
                    let offset = (n as f64 - 0.5 * (*count as f64 - 1.0)) * separation;
                    out.push(gaussian(grid, [offset, 0.0, 0.0], *width, p.map(|v| v / hbar)));
                }
            }
        }
    }
    Ok(out)
}

/// Build orbitals, operator and Hamiltonian. Deterministic: the same spec
/// gives bit-identical orbitals.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let grid = &spec.grid;
    let mut fields = build_orbitals(spec)?;
    for (k, f) in fields.iter_mut().enumerate() {
        let n = l2_norm(f);
        if !(n > 0.0) {
            return Err(HosfError::config(format!("orbitals[{k}]"), "orbital vanishes on the grid"));
        }
        f.scale(Complex64::new(1.0 / n, 0.0));
    }
    let mut orbitals = OrbitalSet::new(fields)?;
    if orbitals.len() > 1 {
        orbitals.gram_schmidt()?;
    }
    let mut warnings = Vec::new();
    for (k, f) in orbitals.orbitals().iter().enumerate() {
        let b = f.boundary_mass_fraction();
        if b >= MAX_BOUNDARY_MASS {
            return Err(HosfError::config(
                "orbitals",
                format!("orbital {k} has boundary mass {b:.3e} >= {MAX_BOUNDARY_MASS:e}; enlarge the box"),
            ));
        }
        let top = f.top_octave_fraction();
        if top > TOP_OCTAVE_WARNING {
            let msg = format!("orbital {k}: top-octave spectral mass {top:.3e} exceeds {TOP_OCTAVE_WARNING:e}");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let operator = OperatorSpec::new(grid, spec.operator, &spec.constants, spec.subtract_rest_energy)?;
    let external = if spec.potential.is_none() {
        None
    } else {
        Some(spec.potential.sample(grid, &spec.constants)?)
    };
    let kernel = CoulombKernel::new(grid, spec.kernel)?;
    let hamiltonian = Hamiltonian::new(
        operator.clone(),
        external,
        spec.constants.kappa,
        kernel,
        spec.model,
    )?;
    Ok(Scenario {
        spec: spec.clone(),
        orbitals,
        integrator: spec.integrator,
        potential: spec.potential.clone(),
        operator,
        hamiltonian,
        warnings,
    })
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &[
    "free-gaussian",
    "finite-well",
    "linear-ramp",
    "alpha",
    "alpha-1d",
    "hf-pair",
];

/// Relativistic momentum of a particle at a tenth of the speed of light in
/// natural units.
fn tenth_c_momentum() -> f64 {
    PhysicalConstants::natural().momentum_of_speed(0.1)
}

/// Charge number of the daughter nucleus in the alpha presets (polonium
/// 212 decaying to lead 208).
pub const ALPHA_DAUGHTER_Z: u32 = 82;

fn preset_value(name: &str) -> Option<Value> {
    let p = tenth_c_momentum();
    let alpha = alpha_decay_coulomb_strength(ALPHA_DAUGHTER_Z);
    let v = match name {
        "free-gaussian" => serde_json::json!({
            "name": name,
            "grid": {"dim": 1, "points": 1024, "box_length": [200.0]},
            "operator": {"kind": "polynomial", "order": 1},
            "orbitals": [{"kind": "gaussian", "center": [0.0], "width": 2.0, "momentum": [p]}],
            "integrator": {"dt": 0.05},
            "horizon": 20.0,
            "cadence": {"diagnostics_every": 10}
        }),
        "finite-well" => serde_json::json!({
            "name": name,
            "grid": {"dim": 1, "points": 512, "box_length": [80.0]},
            "operator": {"kind": "polynomial", "order": 2},
            "potential": {"kind": "well", "depth": 0.05, "radius": 4.0},
            "orbitals": [{"kind": "gaussian", "center": [0.0], "width": 1.5}],
            "integrator": {"dt": 0.02},
            "horizon": 10.0,
            "cadence": {"diagnostics_every": 10}
        }),
        "linear-ramp" => serde_json::json!({
            "name": name,
            "grid": {"dim": 1, "points": 512, "box_length": [80.0]},
            "operator": {"kind": "polynomial", "order": 2},
            "potential": {"kind": "linear", "gradient": [0.01]},
            "orbitals": [{"kind": "gaussian", "center": [0.0], "width": 2.0}],
            "integrator": {"dt": 0.02},
            "horizon": 10.0,
            "cadence": {"diagnostics_every": 10}
        }),
        // Launch radius and width are illustrative defaults; lengths are in
        // units of the reduced Compton wavelength of the particle.
        "alpha" => serde_json::json!({
            "name": name,
            "grid": {"dim": 3, "points": 64, "box_length": [64.0, 64.0, 64.0]},
            "constants": {"alpha_coulomb": alpha},
            "operator": {"kind": "polynomial", "order": 2},
            "potential": {"kind": "coulomb"},
            "orbitals": [{"kind": "gaussian", "center": [10.0, 0.0, 0.0], "width": 2.5, "momentum": [p, 0.0, 0.0]}],
            "integrator": {"dt": 0.1},
            "horizon": 10.0,
            "cadence": {"diagnostics_every": 10}
        }),
        "alpha-1d" => serde_json::json!({
            "name": name,
            "grid": {"dim": 1, "points": 1024, "box_length": [256.0]},
            "constants": {"alpha_coulomb": alpha},
            "operator": {"kind": "polynomial", "order": 2},
            "potential": {"kind": "coulomb", "epsilon": 1.0},
            "orbitals": [{"kind": "gaussian", "center": [20.0], "width": 2.0, "momentum": [p]}],
            "integrator": {"dt": 0.05},
            "horizon": 40.0,
            "cadence": {"diagnostics_every": 10}
        }),
        "hf-pair" => serde_json::json!({
            "name": name,
            "grid": {"dim": 1, "points": 256, "box_length": [40.0]},
            "constants": {"kappa": 1.0},
            "operator": {"kind": "polynomial", "order": 2},
            "model": "hartree_fock",
            "orbitals": [
                {"kind": "gaussian", "center": [-2.0], "width": 1.0, "momentum": [0.5]},
                {"kind": "gaussian", "center": [1.5], "width": 1.3, "momentum": [-0.3]}
            ],
            "integrator": {"dt": 0.005},
            "horizon": 2.0,
            "cadence": {"diagnostics_every": 10}
        }),
        _ => return None,
    };
    Some(v)
}

/// Recursive merge: objects merge key by key, everything else replaces.
pub fn merge_json(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Named preset with optional JSON overrides merged on top.
pub fn preset(name: &str, overrides: Option<&Value>) -> Result<ScenarioSpec> {
    let mut v = preset_value(name).ok_or_else(|| {
        HosfError::config("preset", format!("unknown preset `{name}`; known: {}", PRESET_NAMES.join(", ")))
    })?;
    if let Some(o) = overrides {
        if !o.is_object() {
            return Err(HosfError::config("overrides", "must be a JSON object"));
        }
        merge_json(&mut v, o);
    }
    ScenarioSpec::from_value(v)
}

/// One run in an order comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderRun {
    /// `J=<order>` or `exact`.
    pub label: String,
    pub operator: Dispersion,
    pub drift: DriftReport,
}

/// L² distance between two runs over time.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDeviation {
    pub a: usize,
    pub b: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderComparison {
    pub runs: Vec<OrderRun>,
    pub times: Vec<f64>,
    pub deviations: Vec<PairDeviation>,
}

impl OrderComparison {
    /// Deviation series between the runs labelled `a` and `b`.
    pub fn deviation(&self, a: &str, b: &str) -> Option<&[f64]> {
        let ia = self.runs.iter().position(|r| r.label == a)?;
        let ib = self.runs.iter().position(|r| r.label == b)?;
        self.deviations
            .iter()
            .find(|d| (d.a, d.b) == (ia, ib) || (d.a, d.b) == (ib, ia))
            .map(|d| d.values.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut cols = vec!["time".to_string()];
        for d in &self.deviations {
            cols.push(format!("{}_vs_{}", self.runs[d.a].label, self.runs[d.b].label));
        }
        let mut out = cols.join(",");
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(self.deviations.iter().map(|d| format!("{:.16e}", d.values[i])));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn set_distance(a: &OrbitalSet, b: &OrbitalSet) -> Result<f64> {
    let mut s = 0.0;
    for (x, y) in a.orbitals().iter().zip(b.orbitals()) {
        s += l2_norm(&x.sub(y)?).powi(2);
    }
    Ok(s.sqrt())
}

/// Run `spec` once per order in `orders`, plus the exact relativistic
/// dispersion when the run is linear, from the same initial data and with
/// the same time grid. Runs advance in lockstep so that only the current
/// states are held in memory.
pub fn compare_orders(spec: &ScenarioSpec, orders: &[u32]) -> Result<OrderComparison> {
    if orders.is_empty() {
        return Err(HosfError::config("orders", "at least one order is required"));
    }
    if let Some(o) = orders.iter().find(|&&o| o == 0) {
        return Err(HosfError::config("orders", format!("orders must be >= 1, got {o}")));
    }
    let mut operators: Vec<(String, Dispersion)> = orders
        .iter()
        .map(|&order| (format!("J={order}"), Dispersion::Polynomial { order }))
        .collect();
    if spec.constants.kappa == 0.0 {
        operators.push(("exact".to_string(), Dispersion::Relativistic));
    }
    let mut sims = operators
        .iter()
        .map(|(_, d)| build_scenario(&spec.with_operator(*d))?.simulation())
        .collect::<Result<Vec<_>>>()?;
    let (steps, dt) = step_plan(spec.horizon, spec.integrator.dt)?;
    for s in &mut sims {
        s.set_dt(dt)?;
    }
    let pairs: Vec<(usize, usize)> = (0..sims.len())
        .flat_map(|a| (a + 1..sims.len()).map(move |b| (a, b)))
        .collect();
    let mut times = Vec::new();
    let mut deviations: Vec<PairDeviation> = pairs
        .iter()
        .map(|&(a, b)| PairDeviation { a, b, values: Vec::new() })
        .collect();
    let mut records: Vec<Vec<_>> = vec![Vec::new(); sims.len()];
    let every = spec.cadence.diagnostics_every;
    for s in 0..=steps {
        if s > 0 {
            sims.par_iter_mut().map(Simulation::advance).collect::<Result<Vec<()>>>()?;
        }
        if s % every == 0 || s == steps {
            times.push(sims[0].time);
            for d in deviations.iter_mut() {
                d.values.push(set_distance(&sims[d.a].state, &sims[d.b].state)?);
            }
            for (r, sim) in records.iter_mut().zip(&sims) {
                r.push(sim.record()?);
            }
        }
    }
    let runs = operators
        .into_iter()
        .zip(records)
        .map(|((label, operator), recs)| {
            Ok(OrderRun {
                label,
                operator,
                drift: conservation_report(&recs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderComparison {
        runs,
        times,
        deviations,
    })
}
