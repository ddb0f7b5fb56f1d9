//! Time evolution.
//!
//! Convention: `iħ ∂t ψ = 𝓗 ψ`, so the free flow is `exp(-i t h(k) / ħ)` on
//! each Fourier mode.
//!
//! Two integrators are provided for the coupled orbital system:
//!
//! * `strang`: half step of the local part (external potential, direct
//!   potential, exchange coupling), exact kinetic step, half step again.
//!   The local half step is exact for the potentials and uses a per-node
//!   Cayley transform for the Hermitian exchange matrix, which is unitary
//!   node by node and accurate to second order.
//! * `duhamel_picard`: fixed-point iteration on the integral form over one
//!   step, with the time integral replaced by the trapezoidal rule.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{Dispersion, OperatorSpec, PhysicalConstants};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{HosfError, Result};
use crate::grid::{l2_norm, Field, OrbitalSet, RealField};
use crate::meanfield::{CoulombKernel, MeanField, MeanFieldModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Strang,
    DuhamelPicard,
}

/// How the mean field is evaluated inside a local half step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearUpdate {
    /// Mean field from the start of the substep (first order for exchange).
    Frozen,
    /// One predictor pass, then the average of start and predicted fields.
    #[default]
    Midpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub method: Method,
    pub dt: f64,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iter")]
    pub picard_max_iter: usize,
    #[serde(default)]
    pub nonlinear_update: NonlinearUpdate,
}

fn default_picard_tol() -> f64 {
    1e-12
}

fn default_picard_max_iter() -> usize {
    100
}

impl IntegratorConfig {
    pub fn strang(dt: f64) -> Self {
        IntegratorConfig {
            method: Method::Strang,
            dt,
            picard_tol: default_picard_tol(),
            picard_max_iter: default_picard_max_iter(),
            nonlinear_update: NonlinearUpdate::Midpoint,
        }
    }

    pub fn duhamel_picard(dt: f64) -> Self {
        IntegratorConfig {
            method: Method::DuhamelPicard,
            ..Self::strang(dt)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(HosfError::config("integrator.dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.picard_tol >= 1e-14) {
            return Err(HosfError::config(
                "integrator.picard_tol",
                format!("must be >= 1e-14, got {}", self.picard_tol),
            ));
        }
        if self.picard_max_iter == 0 {
            return Err(HosfError::config("integrator.picard_max_iter", "must be >= 1"));
        }
        Ok(())
    }
}

/// `exp(-i t (h(k) - offset) / ħ)` applied mode by mode.
pub fn free_propagate(psi: &Field, t: f64, op: &OperatorSpec) -> Result<Field> {
    op.grid.ensure_same(&psi.grid)?;
    let hbar = op.consts.hbar;
    let mut s = psi.to_spectral();
    for (v, h) in s.values.iter_mut().zip(op.propagation_symbol()) {
        *v *= Complex64::from_polar(1.0, -t * h / hbar);
    }
    Ok(s.to_physical())
}

/// Exact semi-relativistic flow `exp(-i t sqrt(-c²ħ²Δ + m²c⁴) / ħ)`,
/// rest energy included.
pub fn semirelativistic_propagate(psi: &Field, t: f64, consts: &PhysicalConstants) -> Result<Field> {
    let op = OperatorSpec::new(&psi.grid, Dispersion::Relativistic, consts, false)?;
    free_propagate(psi, t, &op)
}

/// Everything that defines the right-hand side of the orbital equations.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    pub op: OperatorSpec,
    pub external: Option<RealField>,
    pub kappa: f64,
    pub kernel: CoulombKernel,
    pub model: MeanFieldModel,
}

impl Hamiltonian {
    pub fn new(
        op: OperatorSpec,
        external: Option<RealField>,
        kappa: f64,
        kernel: CoulombKernel,
        model: MeanFieldModel,
    ) -> Result<Self> {
        if let Some(v) = &external {
            op.grid.ensure_same(&v.grid)?;
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(HosfError::config("potential", "sampled values must be finite"));
            }
        }
        op.grid.ensure_same(&kernel.grid)?;
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(HosfError::config("constants.kappa", "must be finite and >= 0"));
        }
        Ok(Hamiltonian {
            op,
            external,
            kappa,
            kernel,
            model,
        })
    }

    pub fn hbar(&self) -> f64 {
        self.op.consts.hbar
    }

    pub fn is_linear(&self) -> bool {
        self.kappa == 0.0
    }

    pub fn mean_field(&self, set: &OrbitalSet) -> Result<MeanField> {
        MeanField::new(set, self.model, self.kappa, &self.kernel)
    }

    /// Local part of the right-hand side, `(V + H) ψ_k - Σ_ℓ A_{kℓ} ψ_ℓ`.
    pub fn local_terms(&self, set: &OrbitalSet) -> Result<Vec<Field>> {
        self.mean_field(set)?.apply(set, self.external.as_ref())
    }
}

/// Result of one Duhamel-Picard step.
#[derive(Clone, Debug, PartialEq)]
pub struct PicardReport {
    pub iterations: usize,
    /// Max over orbitals of `‖ψ^{(m+1)} - ψ^{(m)}‖` for each iteration.
    pub residuals: Vec<f64>,
}

/// Stateful stepper holding the cached kinetic phases for one `dt`.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub ham: Hamiltonian,
    pub cfg: IntegratorConfig,
    full_phase: Vec<Complex64>,
    pub last_picard: Option<PicardReport>,
}

impl Integrator {
    pub fn new(ham: Hamiltonian, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let hbar = ham.hbar();
        let full_phase = ham
            .op
            .propagation_symbol()
            .map(|h| Complex64::from_polar(1.0, -cfg.dt * h / hbar))
            .collect();
        Ok(Integrator {
            ham,
            cfg,
            full_phase,
            last_picard: None,
        })
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    fn kinetic(&self, f: &Field) -> Field {
        let mut s = f.to_spectral();
        for (v, p) in s.values.iter_mut().zip(&self.full_phase) {
            *v *= p;
        }
        s.to_physical()
    }

    fn kinetic_all(&self, set: &OrbitalSet) -> Result<OrbitalSet> {
        let out: Vec<Field> = set.orbitals().par_iter().map(|f| self.kinetic(f)).collect();
        OrbitalSet::new(out)
    }

    /// Exact flow of the frozen local operator `(V + H) I - A` over `tau`,
    /// with the exchange exponential replaced by its Cayley transform.
    fn apply_local_unitary(&self, set: &OrbitalSet, mf: &MeanField, tau: f64) -> Result<OrbitalSet> {
        let hbar = self.ham.hbar();
        let n = set.len();
        let len = set.grid().len();
        let ext = self.ham.external.as_ref();
        let mut out: Vec<Field> = set.orbitals().to_vec();
        if !mf.has_exchange() {
            for (k, f) in out.iter_mut().enumerate() {
                for x in 0..len {
                    let v = mf.direct[x] + ext.map_or(0.0, |e| e.values[x]);
                    f.values[x] = set.orbitals()[k].values[x] * Complex64::from_polar(1.0, -tau * v / hbar);
                }
            }
            return OrbitalSet::new(out);
        }
        let half = Complex64::new(0.0, 0.5 * tau / hbar);
        let nodes: Vec<Vec<Complex64>> = (0..len)
            .into_par_iter()
            .map(|x| {
                let v = mf.direct[x] + ext.map_or(0.0, |e| e.values[x]);
                let phase = Complex64::from_polar(1.0, -tau * v / hbar);
                let psi = DVector::from_iterator(n, (0..n).map(|k| set.orbitals()[k].values[x]));
                let a = DMatrix::from_fn(n, n, |k, l| mf.coupling(k, l, x));
                let id = DMatrix::<Complex64>::identity(n, n);
                let rhs = (&id + &a * half) * psi;
                let lhs = &id - &a * half;
                let sol = lhs.lu().solve(&rhs).unwrap_or(rhs);
                sol.iter().map(|v| v * phase).collect()
            })
            .collect();
        for (x, node) in nodes.into_iter().enumerate() {
            for (k, v) in node.into_iter().enumerate() {
                out[k].values[x] = v;
            }
        }
        OrbitalSet::new(out)
    }

    fn local_substep(&self, set: &OrbitalSet, tau: f64) -> Result<OrbitalSet> {
        let mf0 = self.ham.mean_field(set)?;
        // the direct potential is invariant under its own flow, so only the
        // exchange coupling needs the corrector
        if !mf0.has_exchange() || self.cfg.nonlinear_update == NonlinearUpdate::Frozen {
            return self.apply_local_unitary(set, &mf0, tau);
        }
        let predicted = self.apply_local_unitary(set, &mf0, tau)?;
        let mf1 = self.ham.mean_field(&predicted)?;
        self.apply_local_unitary(set, &mf0.average(&mf1), tau)
    }

    pub fn strang_step(&self, set: &OrbitalSet) -> Result<OrbitalSet> {
        let half = 0.5 * self.cfg.dt;
        let a = self.local_substep(set, half)?;
        let b = self.kinetic_all(&a)?;
        self.local_substep(&b, half)
    }

    pub fn duhamel_picard_step(&self, set: &OrbitalSet) -> Result<(OrbitalSet, PicardReport)> {
        let dt = self.cfg.dt;
        let coef = Complex64::new(0.0, -0.5 * dt / self.ham.hbar());
        let start_terms = self.ham.local_terms(set)?;
        // U ψ0 + coef · U N(ψ0)
        let base: Vec<Field> = set
            .orbitals()
            .par_iter()
            .zip(start_terms.par_iter())
            .map(|(psi, n0)| {
                let mut f = psi.clone();
                f.axpy(coef, n0).expect("shared grid");
                self.kinetic(&f)
            })
            .collect();
        let mut current = self.kinetic_all(set)?;
        let mut residuals = Vec::new();
        for iter in 1..=self.cfg.picard_max_iter {
            let terms = self.ham.local_terms(&current)?;
            let mut next = Vec::with_capacity(set.len());
            let mut residual: f64 = 0.0;
            for (k, b) in base.iter().enumerate() {
                let mut f = b.clone();
                f.axpy(coef, &terms[k])?;
                residual = residual.max(l2_norm(&f.sub(&current.orbitals()[k])?));
                next.push(f);
            }
            current = OrbitalSet::new(next)?;
            residuals.push(residual);
            if !residual.is_finite() {
                break;
            }
            if residual < self.cfg.picard_tol {
                return Ok((
                    current,
                    PicardReport {
                        iterations: iter,
                        residuals,
                    },
                ));
            }
        }
        Err(HosfError::PicardDivergence {
            iterations: residuals.len(),
            residual: residuals.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// One step with the configured method.
    pub fn step(&mut self, set: &OrbitalSet) -> Result<OrbitalSet> {
        match self.cfg.method {
            Method::Strang => self.strang_step(set),
            Method::DuhamelPicard => {
                let (next, report) = self.duhamel_picard_step(set)?;
                self.last_picard = Some(report);
                Ok(next)
            }
        }
    }
}

/// Output cadence of a run, counted in steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cadence {
    pub diagnostics_every: usize,
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence {
            diagnostics_every: 1,
            snapshot_every: None,
        }
    }
}

/// Number of steps and the adjusted step that reach `horizon` exactly:
/// `ceil(horizon / dt)` steps of `horizon / steps`.
pub fn step_plan(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(HosfError::config("horizon", format!("must be positive, got {horizon}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HosfError::config("integrator.dt", format!("must be positive, got {dt}")));
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, horizon / steps as f64))
}

/// Records produced by [`Simulation::run`].
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub steps: usize,
    pub dt: f64,
}

/// A run in progress. `state` always holds the last finite orbital set,
/// also after a failed step.
pub struct Simulation {
    pub integrator: Integrator,
    pub state: OrbitalSet,
    pub time: f64,
    pub step_index: usize,
}

impl Simulation {
    pub fn new(integrator: Integrator, initial: OrbitalSet) -> Result<Self> {
        integrator.ham.op.grid.ensure_same(initial.grid())?;
        Ok(Simulation {
            integrator,
            state: initial,
            time: 0.0,
            step_index: 0,
        })
    }

    /// Rebuild the integrator for a new step size, keeping the state.
    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if (dt - self.integrator.dt()).abs() > 1e-15 * dt {
            let mut cfg = self.integrator.cfg;
            cfg.dt = dt;
            self.integrator = Integrator::new(self.integrator.ham.clone(), cfg)?;
        }
        Ok(())
    }

    pub fn advance(&mut self) -> Result<()> {
        let next = self.integrator.step(&self.state)?;
        for (k, f) in next.orbitals().iter().enumerate() {
            if !f.is_finite() {
                return Err(HosfError::NonFinite {
                    orbital: k,
                    step: self.step_index + 1,
                });
            }
        }
        self.state = next;
        self.step_index += 1;
        self.time = self.step_index as f64 * self.integrator.dt();
        Ok(())
    }

    pub fn record(&self) -> Result<DiagnosticsRecord> {
        diagnostics::record(self.time, &self.state, &self.integrator.ham)
    }

    /// Step until `horizon`. The step count is `ceil(horizon / dt)` and the
    /// step is shrunk so that the last step lands on the horizon exactly.
    /// `observer` sees the initial state and every snapshot step.
    pub fn run(
        &mut self,
        horizon: f64,
        cadence: Cadence,
        observer: impl FnMut(usize, f64, &OrbitalSet) -> Result<()>,
    ) -> Result<Trajectory> {
        let mut traj = Trajectory::default();
        self.run_into(horizon, cadence, &mut traj, observer)?;
        Ok(traj)
    }

    /// Like [`Simulation::run`], but records land in `traj` as they are
    /// produced, so they survive a failed step.
    pub fn run_into(
        &mut self,
        horizon: f64,
        cadence: Cadence,
        traj: &mut Trajectory,
        mut observer: impl FnMut(usize, f64, &OrbitalSet) -> Result<()>,
    ) -> Result<()> {
        if cadence.diagnostics_every == 0 {
            return Err(HosfError::config("diagnostics_every", "must be >= 1"));
        }
        if cadence.snapshot_every == Some(0) {
            return Err(HosfError::config("snapshot_every", "must be >= 1"));
        }
        let (steps, dt) = step_plan(horizon, self.integrator.dt())?;
        self.set_dt(dt)?;
        traj.steps = steps;
        traj.dt = dt;
        traj.records.push(self.record()?);
        if cadence.snapshot_every.is_some() {
            observer(0, 0.0, &self.state)?;
        }
        for s in 1..=steps {
            self.advance()?;
            if s % cadence.diagnostics_every == 0 || s == steps {
                traj.records.push(self.record()?);
            }
            if let Some(every) = cadence.snapshot_every {
                if s % every == 0 || s == steps {
                    observer(s, self.time, &self.state)?;
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper: build a simulation and run it without snapshots.
pub fn run_simulation(
    initial: OrbitalSet,
    horizon: f64,
    ham: Hamiltonian,
    cfg: IntegratorConfig,
    cadence: Cadence,
) -> Result<(Trajectory, OrbitalSet)> {
    let mut sim = Simulation::new(Integrator::new(ham, cfg)?, initial)?;
    let traj = sim.run(horizon, cadence, |_, _, _| Ok(()))?;
    Ok((traj, sim.state))
}
