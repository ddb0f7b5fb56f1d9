//! Convolution kernel and the nonlinear mean-field terms.
//!
//! The pair kernel acts as a Fourier multiplier. In three dimensions it is
//! the Coulomb multiplier `4π/|k|²`, with the zero mode either dropped or
//! replaced by a spherical truncation at radius `R_c`. In one and two
//! dimensions there is no clean analogue of `1/|x|`, so a screened surrogate
//! `1/(|k|² + μ²)` is used instead; all algebraic identities of the mean
//! field hold for any real, radial, non-negative multiplier.
//!
//! Exchange convention: `fock_apply` sums over `ℓ ≠ k`. The dynamics use the
//! full-sum form `H ψ_k - Σ_ℓ (K∗(conj ψ_ℓ ψ_k)) ψ_ℓ`, which equals the
//! `ℓ ≠ k` form applied to both the direct and the exchange sum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HosfError, Result};
use crate::grid::{Field, GridSpec, OrbitalSet, RealField};

/// Treatment of the `k = 0` mode of the kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZeroMode {
    /// Drop the zero mode (shifts potentials by a constant).
    #[default]
    Zero,
    /// 3D: kernel `1/|x|` truncated to the ball of `radius`, which removes
    /// periodic-image interactions for densities of diameter below `radius`
    /// in boxes longer than twice `radius`. 1D/2D: keep the full screened
    /// zero mode `1/μ²`.
    Truncated { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSpec {
    pub zero_mode: ZeroMode,
    /// Screening wavenumber `μ` of the 1D/2D surrogate kernel.
    pub screening: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            zero_mode: ZeroMode::Zero,
            screening: 1.0,
        }
    }
}

/// Which nonlinearity drives the orbitals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldModel {
    /// Direct term only, `H ψ_k`.
    Hartree,
    /// Direct term minus exchange.
    #[default]
    HartreeFock,
}

impl MeanFieldModel {
    pub fn has_exchange(self) -> bool {
        matches!(self, MeanFieldModel::HartreeFock)
    }
}

/// Fourier multiplier of the pair interaction on one grid.
#[derive(Clone, Debug)]
pub struct CoulombKernel {
    pub grid: GridSpec,
    pub spec: KernelSpec,
    pub multiplier: Vec<f64>,
}

impl CoulombKernel {
    pub fn new(grid: &GridSpec, spec: KernelSpec) -> Result<Self> {
        if let ZeroMode::Truncated { radius } = spec.zero_mode {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(HosfError::config("kernel.zero_mode.radius", "must be positive"));
            }
        }
        if grid.dim < 3 && !(spec.screening > 0.0 && spec.screening.is_finite()) {
            return Err(HosfError::config("kernel.screening", "must be positive"));
        }
        let mu2 = spec.screening * spec.screening;
        let multiplier = grid
            .wavenumber_magnitudes()
            .into_iter()
            .map(|k| {
                let k2 = k * k;
                if grid.dim == 3 {
                    match spec.zero_mode {
                        ZeroMode::Zero if k == 0.0 => 0.0,
                        ZeroMode::Zero => 4.0 * PI / k2,
                        ZeroMode::Truncated { radius } if k == 0.0 => 2.0 * PI * radius * radius,
                        ZeroMode::Truncated { radius } => {
                            // 1 - cos(kR) = 2 sin²(kR/2), stable for small kR
                            let s = (0.5 * k * radius).sin();
                            8.0 * PI * s * s / k2
                        }
                    }
                } else if k == 0.0 && spec.zero_mode == ZeroMode::Zero {
                    0.0
                } else {
                    1.0 / (k2 + mu2)
                }
            })
            .collect();
        Ok(CoulombKernel {
            grid: grid.clone(),
            spec,
            multiplier,
        })
    }

    /// `K ∗ f`
    pub fn convolve(&self, f: &Field) -> Result<Field> {
        self.grid.ensure_same(&f.grid)?;
        let mut s = f.to_spectral();
        for (v, m) in s.values.iter_mut().zip(&self.multiplier) {
            *v *= m;
        }
        Ok(s.to_physical())
    }

    /// `K ∗ f` for real `f`; the result is real up to round-off.
    pub fn convolve_real(&self, f: &RealField) -> Result<RealField> {
        let out = self.convolve(&f.to_complex())?;
        Ok(RealField {
            grid: out.grid,
            values: out.values.iter().map(|v| v.re).collect(),
        })
    }

    /// `⟨f, K ∗ f⟩` evaluated on the spectral side; real and non-negative.
    pub fn quadratic_form(&self, f: &Field) -> Result<f64> {
        self.grid.ensure_same(&f.grid)?;
        let s = f.to_spectral();
        let sum: f64 = s
            .values
            .iter()
            .zip(&self.multiplier)
            .map(|(v, m)| m * v.norm_sqr())
            .sum();
        Ok(sum * self.grid.cell_volume())
    }
}

/// `T(φ1, φ2, φ3) = (K ∗ (φ1 φ2)) φ3`
pub fn trilinear_t(phi1: &Field, phi2: &Field, phi3: &Field, kernel: &CoulombKernel) -> Result<Field> {
    let pair = phi1.mul(phi2)?;
    kernel.convolve(&pair)?.mul(phi3)
}

/// `ρ(x) = Σ_k |ψ_k(x)|²`
pub fn density(orbitals: &OrbitalSet) -> RealField {
    let mut rho = RealField::zeros(orbitals.grid());
    for o in orbitals.orbitals() {
        for (r, v) in rho.values.iter_mut().zip(&o.values) {
            *r += v.norm_sqr();
        }
    }
    rho
}

/// Alias kept for the density-matrix vocabulary.
pub fn density_matrix_diagonal(orbitals: &OrbitalSet) -> RealField {
    density(orbitals)
}

/// Pair product `g_{ℓk} = conj(ψ_ℓ) ψ_k`, one off-diagonal entry of the
/// density matrix kernel.
pub fn pair_product(orbitals: &OrbitalSet, l: usize, k: usize) -> Result<Field> {
    orbitals.get(l)?.conj().mul(orbitals.get(k)?)
}

/// `H = κ K ∗ ρ`, shared by all orbitals.
pub fn hartree_potential(orbitals: &OrbitalSet, kappa: f64, kernel: &CoulombKernel) -> Result<RealField> {
    let mut h = kernel.convolve_real(&density(orbitals))?;
    for v in &mut h.values {
        *v *= kappa;
    }
    Ok(h)
}

/// `F(ψ_k) = κ Σ_{ℓ≠k} T(conj ψ_ℓ, ψ_k, ψ_ℓ)`
pub fn fock_apply(k: usize, orbitals: &OrbitalSet, kappa: f64, kernel: &CoulombKernel) -> Result<Field> {
    exchange_sum(k, orbitals, kappa, kernel, false)
}

/// Exchange with the `ℓ = k` term included.
pub fn fock_apply_full(k: usize, orbitals: &OrbitalSet, kappa: f64, kernel: &CoulombKernel) -> Result<Field> {
    exchange_sum(k, orbitals, kappa, kernel, true)
}

fn exchange_sum(
    k: usize,
    orbitals: &OrbitalSet,
    kappa: f64,
    kernel: &CoulombKernel,
    include_self: bool,
) -> Result<Field> {
    let psi_k = orbitals.get(k)?;
    let mut out = Field::zeros(orbitals.grid());
    for (l, psi_l) in orbitals.orbitals().iter().enumerate() {
        if l == k && !include_self {
            continue;
        }
        let t = trilinear_t(&psi_l.conj(), psi_k, psi_l, kernel)?;
        out.axpy(Complex64::new(kappa, 0.0), &t)?;
    }
    Ok(out)
}

/// Direct potential with the `ℓ = k` term removed, `κ Σ_{ℓ≠k} K ∗ |ψ_ℓ|²`.
pub fn hartree_potential_excluding(
    k: usize,
    orbitals: &OrbitalSet,
    kappa: f64,
    kernel: &CoulombKernel,
) -> Result<RealField> {
    orbitals.get(k)?;
    let mut rho = RealField::zeros(orbitals.grid());
    for (l, o) in orbitals.orbitals().iter().enumerate() {
        if l != k {
            for (r, v) in rho.values.iter_mut().zip(&o.values) {
                *r += v.norm_sqr();
            }
        }
    }
    let mut h = kernel.convolve_real(&rho)?;
    for v in &mut h.values {
        *v *= kappa;
    }
    Ok(h)
}

/// Convolved pair products `A_{kℓ}(x) = κ (K ∗ (conj ψ_ℓ ψ_k))(x)`.
///
/// At every node `A(x)` is a Hermitian `N × N` matrix whose trace is the
/// direct potential. The mean field acting on orbital `k` is
/// `tr A(x) ψ_k(x) - Σ_ℓ A_{kℓ}(x) ψ_ℓ(x)` for Hartree-Fock and
/// `tr A(x) ψ_k(x)` for Hartree.
#[derive(Clone, Debug)]
pub struct MeanField {
    pub n: usize,
    pub model: MeanFieldModel,
    /// Direct potential `H(x)`.
    pub direct: Vec<f64>,
    /// Row-major `n × n` blocks of node values, `coupling[k * n + l][x]`;
    /// empty for the Hartree model.
    coupling: Vec<Vec<Complex64>>,
}

impl MeanField {
    pub fn new(
        orbitals: &OrbitalSet,
        model: MeanFieldModel,
        kappa: f64,
        kernel: &CoulombKernel,
    ) -> Result<Self> {
        kernel.grid.ensure_same(orbitals.grid())?;
        let n = orbitals.len();
        let len = orbitals.grid().len();
        if kappa == 0.0 {
            return Ok(MeanField {
                n,
                model,
                direct: vec![0.0; len],
                coupling: Vec::new(),
            });
        }
        if !model.has_exchange() {
            let h = hartree_potential(orbitals, kappa, kernel)?;
            return Ok(MeanField {
                n,
                model,
                direct: h.values,
                coupling: Vec::new(),
            });
        }
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|k| (0..=k).map(move |l| (k, l))).collect();
        let convolved: Vec<Vec<Complex64>> = pairs
            .par_iter()
            .map(|&(k, l)| {
                let g = pair_product(orbitals, l, k)?;
                let mut w = kernel.convolve(&g)?.values;
                for v in &mut w {
                    *v *= kappa;
                }
                Ok(w)
            })
            .collect::<Result<_>>()?;
        let mut coupling = vec![Vec::new(); n * n];
        for (&(k, l), w) in pairs.iter().zip(convolved) {
            if k != l {
                coupling[l * n + k] = w.iter().map(|v| v.conj()).collect();
            }
            coupling[k * n + l] = w;
        }
        let direct = (0..len)
            .map(|x| (0..n).map(|k| coupling[k * n + k][x].re).sum())
            .collect();
        Ok(MeanField {
            n,
            model,
            direct,
            coupling,
        })
    }

    pub fn has_exchange(&self) -> bool {
        !self.coupling.is_empty()
    }

    /// Exchange coupling `A_{kℓ}` at node `x`.
    pub fn coupling(&self, k: usize, l: usize, x: usize) -> Complex64 {
        if self.coupling.is_empty() {
            Complex64::new(0.0, 0.0)
        } else {
            self.coupling[k * self.n + l][x]
        }
    }

    /// Node average of two mean fields, used by the midpoint update.
    pub fn average(&self, other: &MeanField) -> MeanField {
        let direct = self
            .direct
            .iter()
            .zip(&other.direct)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let coupling = self
            .coupling
            .iter()
            .zip(&other.coupling)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
            .collect();
        MeanField {
            n: self.n,
            model: self.model,
            direct,
            coupling,
        }
    }

    /// `(V + H) ψ_k - Σ_ℓ A_{kℓ} ψ_ℓ` for every orbital.
    pub fn apply(&self, orbitals: &OrbitalSet, external: Option<&RealField>) -> Result<Vec<Field>> {
        let grid = orbitals.grid();
        let len = grid.len();
        let mut out: Vec<Field> = (0..self.n).map(|_| Field::zeros(grid)).collect();
        for x in 0..len {
            let v = self.direct[x] + external.map_or(0.0, |e| e.values[x]);
            for k in 0..self.n {
                let mut acc = orbitals.orbitals()[k].values[x] * v;
                if self.has_exchange() {
                    for l in 0..self.n {
                        acc -= self.coupling[k * self.n + l][x] * orbitals.orbitals()[l].values[x];
                    }
                }
                out[k].values[x] = acc;
            }
        }
        Ok(out)
    }
}
