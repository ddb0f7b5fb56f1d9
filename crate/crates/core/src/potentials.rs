//! External potentials sampled on the grid: finite wells, linear ramps and
//! the (optionally soft-core) Coulomb potential.

use serde::{Deserialize, Serialize};

use crate::coefficients::PhysicalConstants;
use crate::error::{HosfError, Result};
use crate::grid::{GridSpec, RealField};

/// External potential description as it appears in configuration files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    Well {
        depth: f64,
        radius: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `V(x) = gradient · x` on the centered fundamental domain. The ramp
    /// jumps at the box faces.
    Linear { gradient: Vec<f64> },
    /// `alpha / sqrt(|x - center|² + epsilon²)`.
    ///
    /// `alpha` defaults to `constants.alpha_coulomb`; `epsilon` defaults to
    /// one grid cell.
    Coulomb {
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        center: Vec<f64>,
    },
}

fn point(v: &[f64], grid: &GridSpec, key: &str) -> Result<[f64; 3]> {
    if v.len() > grid.dim {
        return Err(HosfError::config(
            key,
            format!("has {} components for a {}-dimensional grid", v.len(), grid.dim),
        ));
    }
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    Ok(p)
}

fn norm(d: [f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

impl PotentialSpec {
    pub fn is_none(&self) -> bool {
        matches!(self, PotentialSpec::None)
    }

    pub fn sample(&self, grid: &GridSpec, consts: &PhysicalConstants) -> Result<RealField> {
        match self {
            PotentialSpec::None => Ok(RealField::zeros(grid)),
            PotentialSpec::Well { depth, radius, center } => {
                sample_well(*depth, *radius, point(center, grid, "potential.center")?, grid)
            }
            PotentialSpec::Linear { gradient } => sample_linear(gradient, grid),
            PotentialSpec::Coulomb { alpha, epsilon, center } => {
                let (alpha, eps) = self.coulomb_parameters(grid, consts, *alpha, *epsilon);
                sample_coulomb(alpha, eps, point(center, grid, "potential.center")?, grid)
            }
        }
    }

    fn coulomb_parameters(
        &self,
        grid: &GridSpec,
        consts: &PhysicalConstants,
        alpha: Option<f64>,
        epsilon: Option<f64>,
    ) -> (f64, f64) {
        let alpha = alpha.unwrap_or(consts.alpha_coulomb);
        let eps = epsilon.unwrap_or_else(|| {
            (0..grid.dim).map(|a| grid.spacing(a)).fold(f64::INFINITY, f64::min)
        });
        (alpha, eps)
    }

    /// Split a Coulomb potential into a part supported in the ball of radius
    /// `cut_radius` around the center and a bounded remainder.
    pub fn split_coulomb(
        &self,
        grid: &GridSpec,
        consts: &PhysicalConstants,
        cut_radius: f64,
    ) -> Result<(RealField, RealField)> {
        let PotentialSpec::Coulomb { alpha, epsilon, center } = self else {
            return Err(HosfError::config("potential.kind", "split requires a coulomb potential"));
        };
        let (alpha, eps) = self.coulomb_parameters(grid, consts, *alpha, *epsilon);
        split_coulomb(alpha, eps, point(center, grid, "potential.center")?, cut_radius, grid)
    }
}

/// Soft-core Coulomb potential with minimum-image distances.
///
/// With `epsilon = 0` the exact singular form is sampled, which requires
/// that no grid node coincides with the center.
pub fn sample_coulomb(
    alpha: f64,
    epsilon: f64,
    center: [f64; 3],
    grid: &GridSpec,
) -> Result<RealField> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(HosfError::config("potential.epsilon", format!("must be >= 0, got {epsilon}")));
    }
    if !alpha.is_finite() {
        return Err(HosfError::config("potential.alpha", "must be finite"));
    }
    let tiny = 1e-12 * grid.box_length.iter().cloned().fold(0.0, f64::max);
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let r = norm(grid.min_image(grid.position(i), center));
        if epsilon == 0.0 && r <= tiny {
            return Err(HosfError::config(
                "potential.epsilon",
                "epsilon = 0 with a grid node at the Coulomb center; use epsilon > 0 or offset the center",
            ));
        }
        values.push(alpha / (r * r + epsilon * epsilon).sqrt());
    }
    Ok(RealField {
        grid: grid.clone(),
        values,
    })
}

/// `(V1, V2)` with `V1 = V·1{|x-center| < cut}` and `V2 = V - V1`.
pub fn split_coulomb(
    alpha: f64,
    epsilon: f64,
    center: [f64; 3],
    cut_radius: f64,
    grid: &GridSpec,
) -> Result<(RealField, RealField)> {
    if !(cut_radius > 0.0) {
        return Err(HosfError::config("potential.cut_radius", "must be positive"));
    }
    let v = sample_coulomb(alpha, epsilon, center, grid)?;
    let mut inner = RealField::zeros(grid);
    let mut outer = RealField::zeros(grid);
    for i in 0..grid.len() {
        let r = norm(grid.min_image(grid.position(i), center));
        if r < cut_radius {
            inner.values[i] = v.values[i];
        } else {
            outer.values[i] = v.values[i];
        }
    }
    Ok((inner, outer))
}

/// `-depth` inside the ball of `radius`, zero outside.
pub fn sample_well(depth: f64, radius: f64, center: [f64; 3], grid: &GridSpec) -> Result<RealField> {
    let half = 0.5 * grid.box_length.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(radius > 0.0 && radius < half) {
        return Err(HosfError::config(
            "potential.radius",
            format!("must lie in (0, half box = {half}), got {radius}"),
        ));
    }
    if !depth.is_finite() {
        return Err(HosfError::config("potential.depth", "must be finite"));
    }
    Ok(RealField::from_fn(grid, |x| {
        if norm(grid.min_image(x, center)) < radius {
            -depth
        } else {
            0.0
        }
    }))
}

/// `gradient · x` with `x` in `[-L/2, L/2)` per axis.
pub fn sample_linear(gradient: &[f64], grid: &GridSpec) -> Result<RealField> {
    let g = point(gradient, grid, "potential.gradient")?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(HosfError::config("potential.gradient", "must be finite"));
    }
    Ok(RealField::from_fn(grid, |x| g[0] * x[0] + g[1] * x[1] + g[2] * x[2]))
}

/// Multiply by `exp(-i tau V / ħ)`, node by node.
pub fn potential_phase(v: &RealField, tau: f64, hbar: f64) -> Vec<num_complex::Complex64> {
    v.values
        .iter()
        .map(|&vi| num_complex::Complex64::from_polar(1.0, -tau * vi / hbar))
        .collect()
}
