//! Conserved quantities, drift tables, dispersive decay fits and the
//! truncation-error table of the kinetic expansion.

use num_complex::Complex64;

use crate::coefficients::{
    truncation_error_relative, Dispersion, OperatorSpec, PhysicalConstants,
};
use crate::error::{HosfError, Result};
use crate::grid::{Field, GridSpec, OrbitalSet};
use crate::meanfield::{density, pair_product};
use crate::propagation::{free_propagate, Hamiltonian};

/// Terms of the energy functional. `exchange` is stored as a non-negative
/// magnitude and enters `total` with a minus sign for Hartree-Fock.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyComponents {
    /// `Σ_k ⟨ψ_k, 𝓗₀ ψ_k⟩`, rest energy included.
    pub kinetic: f64,
    /// `∫ V ρ`
    pub external: f64,
    /// `κ/2 ∬ ρ(x) ρ(y) K(x-y)`
    pub direct: f64,
    /// `κ/2 ∬ |ρ(x,y)|² K(x-y)`
    pub exchange: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub norms: Vec<f64>,
    /// `overlaps[l][k] = ⟨ψ_l, ψ_k⟩`
    pub overlaps: Vec<Vec<Complex64>>,
    pub energy: EnergyComponents,
    /// `max_x Σ_k |ψ_k(x)|`
    pub sup_norm: f64,
}

/// `Σ_modes h(k) |ψ̂(k)|²` with the full symbol.
pub fn kinetic_energy(psi: &Field, op: &OperatorSpec) -> Result<f64> {
    op.grid.ensure_same(&psi.grid)?;
    let s = psi.to_spectral();
    let sum: f64 = s
        .values
        .iter()
        .zip(&op.symbol)
        .map(|(v, h)| h * v.norm_sqr())
        .sum();
    Ok(sum * psi.grid.cell_volume())
}

pub fn total_energy(set: &OrbitalSet, ham: &Hamiltonian) -> Result<EnergyComponents> {
    let grid = set.grid();
    ham.op.grid.ensure_same(grid)?;
    let mut e = EnergyComponents::default();
    for psi in set.orbitals() {
        e.kinetic += kinetic_energy(psi, &ham.op)?;
    }
    let rho = density(set);
    if let Some(v) = &ham.external {
        let s: f64 = v.values.iter().zip(&rho.values).map(|(a, b)| a * b).sum();
        e.external = s * grid.cell_volume();
    }
    if ham.kappa != 0.0 {
        let half = 0.5 * ham.kappa;
        e.direct = half * ham.kernel.quadratic_form(&rho.to_complex())?;
        // g_{kl} = conj(g_{lk}) and the kernel is real and even, so the
        // off-diagonal pairs contribute twice
        let n = set.len();
        let mut x = 0.0;
        for k in 0..n {
            for l in 0..=k {
                let q = ham.kernel.quadratic_form(&pair_product(set, l, k)?)?;
                x += if l == k { q } else { 2.0 * q };
            }
        }
        e.exchange = half * x;
    }
    e.total = e.kinetic + e.external + e.direct;
    if ham.model.has_exchange() {
        e.total -= e.exchange;
    }
    Ok(e)
}

pub fn record(time: f64, set: &OrbitalSet, ham: &Hamiltonian) -> Result<DiagnosticsRecord> {
    Ok(DiagnosticsRecord {
        time,
        norms: set.norms(),
        overlaps: set.overlap_matrix(),
        energy: total_energy(set, ham)?,
        sup_norm: set.sup_norm(),
    })
}

/// Column names for `n` orbitals.
pub fn csv_header(n: usize) -> String {
    let mut cols = vec!["time".to_string()];
    cols.extend((1..=n).map(|k| format!("norm_{k}")));
    for l in 1..=n {
        for k in 1..=n {
            cols.push(format!("overlap_{l}_{k}_re"));
            cols.push(format!("overlap_{l}_{k}_im"));
        }
    }
    cols.extend(
        ["kinetic", "external", "direct", "exchange", "total", "sup_norm"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols.join(",")
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut cols = vec![fmt(r.time)];
    cols.extend(r.norms.iter().map(|&v| fmt(v)));
    for row in &r.overlaps {
        for v in row {
            cols.push(fmt(v.re));
            cols.push(fmt(v.im));
        }
    }
    let e = &r.energy;
    cols.extend([e.kinetic, e.external, e.direct, e.exchange, e.total, r.sup_norm].map(fmt));
    cols.join(",")
}

pub fn to_csv(records: &[DiagnosticsRecord]) -> String {
    let n = records.first().map_or(0, |r| r.norms.len());
    let mut out = csv_header(n);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// Maximum drift of each monitored quantity over a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub norm: Vec<f64>,
    /// `overlap[l][k]`, drift of `⟨ψ_l, ψ_k⟩`
    pub overlap: Vec<Vec<f64>>,
    pub energy: f64,
}

impl DriftReport {
    pub fn max_norm(&self) -> f64 {
        self.norm.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_overlap(&self) -> f64 {
        self.overlap.iter().flatten().cloned().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,max_drift\n");
        for (k, v) in self.norm.iter().enumerate() {
            out.push_str(&format!("norm_{},{}\n", k + 1, fmt(*v)));
        }
        for (l, row) in self.overlap.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                out.push_str(&format!("overlap_{}_{},{}\n", l + 1, k + 1, fmt(*v)));
            }
        }
        out.push_str(&format!("energy,{}\n", fmt(self.energy)));
        out
    }
}

/// Relative change, or absolute change when the reference is below 1e-14.
pub fn drift(reference: f64, value: f64) -> f64 {
    let d = (value - reference).abs();
    if reference.abs() < 1e-14 {
        d
    } else {
        d / reference.abs()
    }
}

fn drift_complex(reference: Complex64, value: Complex64) -> f64 {
    let d = (value - reference).norm();
    if reference.norm() < 1e-14 {
        d
    } else {
        d / reference.norm()
    }
}

pub fn conservation_report(records: &[DiagnosticsRecord]) -> Result<DriftReport> {
    if records.len() < 2 {
        return Err(HosfError::config("trajectory", "at least two records are required"));
    }
    let first = &records[0];
    let n = first.norms.len();
    let mut rep = DriftReport {
        norm: vec![0.0; n],
        overlap: vec![vec![0.0; n]; n],
        energy: 0.0,
    };
    for r in &records[1..] {
        for k in 0..n {
            rep.norm[k] = rep.norm[k].max(drift(first.norms[k], r.norms[k]));
            for l in 0..n {
                rep.overlap[l][k] =
                    rep.overlap[l][k].max(drift_complex(first.overlaps[l][k], r.overlaps[l][k]));
            }
        }
        rep.energy = rep.energy.max(drift(first.energy.total, r.energy.total));
    }
    Ok(rep)
}

/// One sample of a decay measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecaySample {
    pub time: f64,
    pub sup_norm: f64,
    /// Fraction of mass near the box faces; samples above 1e-6 are
    /// contaminated by wrap-around.
    pub boundary_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares slope of `ln sup_norm` against `ln t`.
pub fn decay_exponent_fit(samples: &[DecaySample]) -> Result<DecayFit> {
    if samples.len() < 5 {
        return Err(HosfError::DecayFit(format!("need >= 5 samples, got {}", samples.len())));
    }
    if samples[0].time <= 0.0 || samples.windows(2).any(|w| w[1].time <= w[0].time) {
        return Err(HosfError::DecayFit("times must be positive and strictly increasing".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.boundary_mass >= 1e-6) {
        return Err(HosfError::DecayFit(format!(
            "wrap-around contamination at t = {}: boundary mass {:.3e}",
            s.time, s.boundary_mass
        )));
    }
    if samples.iter().any(|s| !(s.sup_norm > 0.0)) {
        return Err(HosfError::DecayFit("sup norms must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.time.ln(), s.sup_norm.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(DecayFit {
        exponent: slope,
        intercept,
        residual: (rss / n).sqrt(),
    })
}

/// Parameters of a decay measurement with the monomial symbol
/// `|k|^{2J}` (unit coefficient) and a narrow Gaussian initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayExperiment {
    pub order: u32,
    pub dim: usize,
    pub points: usize,
    pub box_length: f64,
    /// Standard deviation of `|ψ₀|²`.
    pub width: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
}

impl DecayExperiment {
    /// Defaults that keep the fit window before wrap-around.
    pub fn preset(order: u32, dim: usize) -> Result<Self> {
        if order == 0 {
            return Err(HosfError::config("J", "must be >= 1"));
        }
        // The monomial flow is invariant under x -> x/σ, t -> t/σ^{2J}, so
        // only the box size in units of the width matters. Higher orders
        // reach the self-similar regime late and need long boxes.
        let (points, box_length, t_min, t_max) = match (order, dim) {
            (1, 1) => (1 << 13, 4096.0, 10.0, 100.0),
            (2, 1) => (1 << 18, 131_072.0, 50.0, 500.0),
            (3, 1) => (1 << 20, 524_288.0, 50.0, 300.0),
            (1, 2) => (1 << 10, 512.0, 4.0, 36.0),
            _ => {
                return Err(HosfError::config(
                    "dimension",
                    format!("no wrap-free decay window for J = {order} in {dim}D at desk scale"),
                ))
            }
        };
        Ok(DecayExperiment {
            order,
            dim,
            points,
            box_length,
            width: 1.0,
            t_min,
            t_max,
            samples: 12,
        })
    }

    /// Expected exponent `-dim / (2J)`.
    pub fn expected_exponent(&self) -> f64 {
        -(self.dim as f64) / (2.0 * f64::from(self.order))
    }

    pub fn run(&self) -> Result<Vec<DecaySample>> {
        if self.samples < 2 || !(self.t_min > 0.0 && self.t_max > self.t_min) {
            return Err(HosfError::config("decay", "need t_max > t_min > 0 and >= 2 samples"));
        }
        let grid = GridSpec::new(self.dim, self.points, self.box_length)?;
        let op = OperatorSpec::new(
            &grid,
            Dispersion::Monomial {
                order: self.order,
                coefficient: 1.0,
            },
            &PhysicalConstants::natural(),
            true,
        )?;
        let s = self.width;
        let norm = (2.0 * std::f64::consts::PI * s * s).powf(-0.25 * self.dim as f64);
        let psi0 = Field::from_fn(&grid, |x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            Complex64::new(norm * (-r2 / (4.0 * s * s)).exp(), 0.0)
        });
        let ratio = (self.t_max / self.t_min).powf(1.0 / (self.samples - 1) as f64);
        (0..self.samples)
            .map(|i| {
                let t = self.t_min * ratio.powi(i as i32);
                let psi = free_propagate(&psi0, t, &op)?;
                Ok(DecaySample {
                    time: t,
                    sup_norm: psi.max_abs(),
                    boundary_mass: psi.boundary_mass_fraction(),
                })
            })
            .collect()
    }
}

/// One row of the truncation-error table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationRow {
    pub order: u32,
    pub speed: f64,
    pub momentum: f64,
    pub relative_error: f64,
}

/// `|E_J(p) - E(p)| / E(p)` at `p = γ m v` for every `J <= jmax` and speed.
pub fn ej_truncation_report(
    jmax: u32,
    speeds: &[f64],
    consts: &PhysicalConstants,
) -> Result<Vec<TruncationRow>> {
    consts.validate()?;
    if jmax == 0 {
        return Err(HosfError::config("jmax", "must be >= 1"));
    }
    let mut rows = Vec::new();
    for &v in speeds {
        if !(v >= 0.0 && v < consts.c) {
            return Err(HosfError::config(
                "speeds",
                format!("speed {v} outside [0, c = {})", consts.c),
            ));
        }
        let p = consts.momentum_of_speed(v);
        for order in 1..=jmax {
            rows.push(TruncationRow {
                order,
                speed: v,
                momentum: p,
                relative_error: truncation_error_relative(order, p, consts),
            });
        }
    }
    Ok(rows)
}

pub fn truncation_csv(rows: &[TruncationRow]) -> String {
    let mut out = String::from("J,speed,momentum,relative_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.order,
            fmt(r.speed),
            fmt(r.momentum),
            fmt(r.relative_error)
        ));
    }
    out
}
