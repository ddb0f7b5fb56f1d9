//! Periodic uniform grids, unitary discrete Fourier transforms and the
//! quadrature used for inner products.
//!
//! Coordinates along each axis are `x_i = -L/2 + i L/N`, so the origin is a
//! grid node. Wavenumbers follow the usual FFT ordering
//! `2π/L · {0, 1, …, N/2-1, -N/2, …, -1}`. Values are stored row-major with
//! the last axis contiguous.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{HosfError, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"HOSF";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Periodic box of `points^dim` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub points: usize,
    /// Box length per axis.
    pub box_length: Vec<f64>,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, box_length: f64) -> Result<Self> {
        let g = GridSpec {
            dim,
            points,
            box_length: vec![box_length; dim],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_lengths(points: usize, box_length: Vec<f64>) -> Result<Self> {
        let g = GridSpec {
            dim: box_length.len(),
            points,
            box_length,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(HosfError::config("grid.dim", format!("must be 1, 2 or 3, got {}", self.dim)));
        }
        if self.points < 8 || !self.points.is_power_of_two() {
            return Err(HosfError::config(
                "grid.points",
                format!("must be a power of two >= 8, got {}", self.points),
            ));
        }
        if self.box_length.len() != self.dim {
            return Err(HosfError::config(
                "grid.box_length",
                format!("expected {} lengths, got {}", self.dim, self.box_length.len()),
            ));
        }
        if let Some(l) = self.box_length.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(HosfError::config("grid.box_length", format!("must be positive, got {l}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.box_length[axis] / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.box_length.iter().product()
    }

    fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis node indices of a flat index.
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    pub fn axis_coordinate(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.box_length[axis] + i as f64 * self.spacing(axis)
    }

    /// Position of node `idx`; unused axes are zero.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.axis_coordinate(axis, m[axis]);
        }
        x
    }

    /// Signed mode number in FFT ordering.
    pub fn mode_number(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn axis_wavenumber(&self, axis: usize, i: usize) -> f64 {
        2.0 * PI / self.box_length[axis] * self.mode_number(i) as f64
    }

    pub fn wavenumber(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let mut k = [0.0; 3];
        for axis in 0..self.dim {
            k[axis] = self.axis_wavenumber(axis, m[axis]);
        }
        k
    }

    pub fn wavenumber_magnitudes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let k = self.wavenumber(i);
                (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
            })
            .collect()
    }

    /// Nyquist wavenumber along `axis`.
    pub fn max_wavenumber(&self, axis: usize) -> f64 {
        PI / self.spacing(axis)
    }

    /// Minimum-image displacement `x - center` on the torus.
    pub fn min_image(&self, x: [f64; 3], center: [f64; 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for axis in 0..self.dim {
            let l = self.box_length[axis];
            let mut r = x[axis] - center[axis];
            r -= l * (r / l).round();
            d[axis] = r;
        }
        d
    }

    /// Index of the node mirrored through the origin.
    pub fn reflected_index(&self, idx: usize) -> usize {
        let m = self.unravel(idx);
        (0..self.dim).fold(0, |acc, axis| {
            acc * self.points + (self.points - m[axis]) % self.points
        })
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(HosfError::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    })
}

/// Unitary n-dimensional DFT in place.
fn transform_in_place(grid: &GridSpec, data: &mut [Complex64], forward: bool) {
    let n = grid.points;
    let fft = plan(n, forward);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..grid.dim {
        let stride = grid.stride(axis);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n;
        for base in (0..data.len()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[start + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, v) in line.iter().enumerate() {
                    data[start + i * stride] = *v;
                }
            }
        }
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Complex function sampled on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

/// Unitary DFT coefficients of a [`Field`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

/// Real function sampled on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HosfError::SizeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn to_spectral(&self) -> SpectralField {
        let mut values = self.values.clone();
        transform_in_place(&self.grid, &mut values, true);
        SpectralField {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scale(&mut self, a: Complex64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: Complex64) -> Field {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn conj(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: Complex64, other: &Field) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn mul_real(&self, other: &RealField) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn abs_squared(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Fraction of `‖f‖²` in the slab within `L/8` of the box faces.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let x = self.grid.position(*i);
                (0..self.grid.dim).any(|a| x[a].abs() > 0.375 * self.grid.box_length[a])
            })
            .map(|(_, v)| v.norm_sqr())
            .sum();
        edge / total
    }

    /// Fraction of spectral mass with some `|k_axis|` in the top octave
    /// `[k_max/2, k_max]`.
    pub fn top_octave_fraction(&self) -> f64 {
        self.to_spectral().top_octave_fraction()
    }

    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        write_snapshot(w, self)
    }
}

impl SpectralField {
    pub fn to_physical(&self) -> Field {
        let mut values = self.values.clone();
        transform_in_place(&self.grid, &mut values, false);
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn new(grid: &GridSpec, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(HosfError::SizeMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(SpectralField {
            grid: grid.clone(),
            values,
        })
    }

    /// Spectral-side quadrature of `⟨f, g⟩`.
    pub fn inner_product(&self, other: &SpectralField) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn top_octave_fraction(&self) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let n = self.grid.points as i64;
        let high: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let m = self.grid.unravel(*i);
                (0..self.grid.dim).any(|a| self.grid.mode_number(m[a]).abs() >= n / 4)
            })
            .map(|(_, v)| v.norm_sqr())
            .sum();
        high / total
    }
}

impl RealField {
    pub fn zeros(grid: &GridSpec) -> Self {
        RealField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        RealField {
            grid: grid.clone(),
            values: (0..grid.len()).map(|i| f(grid.position(i))).collect(),
        }
    }

    pub fn to_complex(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// `⟨f, g⟩ = ∫ conj(f) g`, conjugate-linear in `f`.
pub fn inner_product(f: &Field, g: &Field) -> Result<Complex64> {
    f.grid.ensure_same(&g.grid)?;
    let s: Complex64 = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(s * f.grid.cell_volume())
}

pub fn l2_norm(f: &Field) -> f64 {
    let s: f64 = f.values.iter().map(|v| v.norm_sqr()).sum();
    (s * f.grid.cell_volume()).sqrt()
}

/// Ordered orbitals sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalSet {
    orbitals: Vec<Field>,
}

impl OrbitalSet {
    pub fn new(orbitals: Vec<Field>) -> Result<Self> {
        if orbitals.is_empty() {
            return Err(HosfError::config("orbitals", "at least one orbital is required"));
        }
        let g = &orbitals[0].grid;
        for o in &orbitals[1..] {
            g.ensure_same(&o.grid)?;
        }
        Ok(OrbitalSet { orbitals })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.orbitals[0].grid
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    pub fn orbitals(&self) -> &[Field] {
        &self.orbitals
    }

    pub fn orbitals_mut(&mut self) -> &mut [Field] {
        &mut self.orbitals
    }

    pub fn into_orbitals(self) -> Vec<Field> {
        self.orbitals
    }

    pub fn get(&self, k: usize) -> Result<&Field> {
        self.orbitals.get(k).ok_or(HosfError::IndexOutOfRange {
            index: k,
            len: self.orbitals.len(),
        })
    }

    pub fn norms(&self) -> Vec<f64> {
        self.orbitals.iter().map(l2_norm).collect()
    }

    /// `G[l][k] = ⟨ψ_l, ψ_k⟩`
    pub fn overlap_matrix(&self) -> Vec<Vec<Complex64>> {
        self.orbitals
            .iter()
            .map(|a| {
                self.orbitals
                    .iter()
                    .map(|b| inner_product(a, b).expect("shared grid"))
                    .collect()
            })
            .collect()
    }

    /// `max_x Σ_k |ψ_k(x)|`
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid().len())
            .map(|i| self.orbitals.iter().map(|o| o.values[i].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.orbitals.iter().all(Field::is_finite)
    }

    /// Modified Gram-Schmidt in the stored order.
    pub fn gram_schmidt(&mut self) -> Result<()> {
        for k in 0..self.orbitals.len() {
            let (done, rest) = self.orbitals.split_at_mut(k);
            let current = &mut rest[0];
            let before = l2_norm(current);
            for prev in done.iter() {
                let c = inner_product(prev, current)?;
                current.axpy(-c, prev)?;
            }
            let n = l2_norm(current);
            if n <= 1e-10 * before {
                return Err(HosfError::config(
                    "orbitals",
                    format!("orbital {k} is linearly dependent on the previous ones"),
                ));
            }
            current.scale(Complex64::new(1.0 / n, 0.0));
        }
        Ok(())
    }
}

/// Write one field in the binary snapshot layout: magic `HOSF`, version,
/// `dim`, points per axis (`dim` × u32), box lengths (`dim` × f64), then
/// `(re, im)` f64 pairs in row-major order. All little-endian.
pub fn write_snapshot<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    let g = &f.grid;
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(g.dim as u32).to_le_bytes())?;
    for _ in 0..g.dim {
        w.write_all(&(g.points as u32).to_le_bytes())?;
    }
    for l in &g.box_length {
        w.write_all(&l.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * f.values.len());
    for v in &f.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Field> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(HosfError::Snapshot("bad magic".into()));
    }
    let mut u = [0u8; 4];
    r.read_exact(&mut u)?;
    let version = u32::from_le_bytes(u);
    if version != SNAPSHOT_VERSION {
        return Err(HosfError::Snapshot(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u)?;
    let dim = u32::from_le_bytes(u) as usize;
    if !(1..=3).contains(&dim) {
        return Err(HosfError::Snapshot(format!("bad dimension {dim}")));
    }
    let mut points = Vec::with_capacity(dim);
    for _ in 0..dim {
        r.read_exact(&mut u)?;
        points.push(u32::from_le_bytes(u) as usize);
    }
    if points.iter().any(|&p| p != points[0]) {
        return Err(HosfError::Snapshot("anisotropic point counts are not supported".into()));
    }
    let mut d = [0u8; 8];
    let mut lengths = Vec::with_capacity(dim);
    for _ in 0..dim {
        r.read_exact(&mut d)?;
        lengths.push(f64::from_le_bytes(d));
    }
    let grid = GridSpec::with_lengths(points[0], lengths)
        .map_err(|e| HosfError::Snapshot(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut d)?;
        let re = f64::from_le_bytes(d);
        r.read_exact(&mut d)?;
        let im = f64::from_le_bytes(d);
        values.push(Complex64::new(re, im));
    }
    Field::new(&grid, values)
}
