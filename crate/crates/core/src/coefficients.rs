//! Expansion coefficients of the relativistic energy and the kinetic
//! Fourier symbols built from them.
//!
//! The truncated energy of order `J` is
//!
//! ```text
//! E_J(p) = m c² (1 + Σ_{j=1..J} (-1)^{j+1} α(j) (p / m c)^{2j})
//! α(j)   = (2j-2)! / (j! (j-1)! 2^{2j-1}),   α(0) = -1
//! ```
//!
//! which is the Taylor polynomial of `E(p) = sqrt(p²c² + m²c⁴)` in `p`.
//! Replacing `p` by `ħ|k|` gives the Fourier symbol of the kinetic operator.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{HosfError, Result};
use crate::grid::GridSpec;

/// Largest order accepted by the coefficient table.
pub const MAX_TABLE_ORDER: i64 = 30;

/// Physical constants in a user-chosen unit system.
///
/// The defaults are natural units `ħ = m = c = 1` with the couplings
/// switched off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
    pub c: f64,
    /// Strength of the pair interaction in the mean-field terms.
    pub kappa: f64,
    /// Strength of the external Coulomb potential.
    pub alpha_coulomb: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            hbar: 1.0,
            mass: 1.0,
            c: 1.0,
            kappa: 0.0,
            alpha_coulomb: 0.0,
        }
    }
}

impl PhysicalConstants {
    pub fn natural() -> Self {
        Self::default()
    }

    /// SI values for an alpha particle (`ħ` in J·s, mass in kg, `c` in m/s).
    ///
    /// Only used to document unit conversions; simulations run in natural
    /// units where the symbols stay of order one.
    pub fn si_alpha_particle() -> Self {
        PhysicalConstants {
            hbar: 1.054_571_817e-34,
            mass: 6.644_657_335_7e-27,
            c: 299_792_458.0,
            kappa: 0.0,
            alpha_coulomb: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("hbar", self.hbar), ("mass", self.mass), ("c", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(HosfError::config(
                    format!("constants.{key}"),
                    format!("must be a finite positive number, got {v}"),
                ));
            }
        }
        for (key, v) in [("kappa", self.kappa), ("alpha_coulomb", self.alpha_coulomb)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HosfError::config(
                    format!("constants.{key}"),
                    format!("must be finite and non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }

    /// `m c²`
    pub fn rest_energy(&self) -> f64 {
        self.mass * self.c * self.c
    }

    /// `m c`, the momentum scale of the expansion.
    pub fn momentum_scale(&self) -> f64 {
        self.mass * self.c
    }

    /// Relativistic momentum `γ m v`.
    pub fn momentum_of_speed(&self, v: f64) -> f64 {
        let beta = v / self.c;
        self.mass * v / (1.0 - beta * beta).sqrt()
    }
}

/// Electrostatic strength `2 Z e² / (4π ε₀)` of a residual nucleus of charge
/// `Z` acting on an alpha particle, expressed in units where `ħ = c = 1`.
pub fn alpha_decay_coulomb_strength(z: u32) -> f64 {
    const FINE_STRUCTURE: f64 = 7.297_352_569_3e-3;
    2.0 * f64::from(z) * FINE_STRUCTURE
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Exact expansion coefficient `α(j)`.
pub fn alpha_coeff(j: u32) -> BigRational {
    if j == 0 {
        return -BigRational::one();
    }
    let j = u64::from(j);
    let num = factorial(2 * j - 2);
    let den = factorial(j) * factorial(j - 1) * (BigInt::one() << (2 * j - 1) as usize);
    BigRational::new(num, den)
}

/// `α(j)` rounded once to `f64`.
pub fn alpha_coeff_f64(j: u32) -> f64 {
    alpha_coeff(j).to_f64().expect("α(j) is a finite rational")
}

/// Truncated energy `E_J(p)`.
pub fn symbol_polynomial(order: u32, p: f64, consts: &PhysicalConstants) -> f64 {
    let u2 = (p / consts.momentum_scale()).powi(2);
    let mut sum = 0.0;
    let mut pow = 1.0;
    for j in 1..=order {
        pow *= u2;
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * alpha_coeff_f64(j) * pow;
    }
    consts.rest_energy() * (1.0 + sum)
}

/// Exact relativistic energy `sqrt(p²c² + m²c⁴)`.
pub fn symbol_relativistic(p: f64, consts: &PhysicalConstants) -> f64 {
    let mc2 = consts.rest_energy();
    let pc = p * consts.c;
    pc.hypot(mc2)
}

/// Relative truncation error `|E_J(p) - E(p)| / E(p)`.
///
/// Inside the convergence disc (`p < m c`) the difference is summed as the
/// tail of the binomial series, so the result keeps full relative precision
/// even when it is far below machine epsilon times `E`.
pub fn truncation_error_relative(order: u32, p: f64, consts: &PhysicalConstants) -> f64 {
    let exact = symbol_relativistic(p, consts);
    let u2 = (p / consts.momentum_scale()).powi(2);
    if u2 == 0.0 {
        return 0.0;
    }
    if u2 >= 1.0 {
        return (symbol_polynomial(order, p, consts) - exact).abs() / exact;
    }
    let first = order + 1;
    let mut coeff = alpha_coeff_f64(first);
    let mut pow = u2.powi(first as i32);
    let mut tail = 0.0;
    let mut j = first;
    loop {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * coeff * pow;
        tail += term;
        if term.abs() <= 1e-20 * tail.abs() || j > first + 200_000 {
            break;
        }
        // α(j+1) = α(j) (2j - 1) / (2j + 2)
        coeff *= (2.0 * f64::from(j) - 1.0) / (2.0 * f64::from(j) + 2.0);
        pow *= u2;
        j += 1;
    }
    tail.abs() * consts.rest_energy() / exact
}

/// True when `v` lies strictly below `c / √2`, the region where the series
/// expansion is meant to be used. Not enforced anywhere.
pub fn validity_speed_check(v: f64, consts: &PhysicalConstants) -> bool {
    v < consts.c / std::f64::consts::SQRT_2
}

/// Time exponent `q` of an admissible pair `(q, r)` for order `J`:
/// `2/q = n (1/2 - 1/r)` with effective dimension `n = 3/J`.
///
/// `r = f64::INFINITY` is allowed; `r = 2` yields `q = ∞`.
pub fn admissible_pair_q(r: f64, order: u32) -> Result<f64> {
    if order < 2 {
        return Err(HosfError::config("J", "admissible pairs need J >= 2"));
    }
    if r.is_nan() || r < 2.0 {
        return Err(HosfError::config("r", format!("must satisfy 2 <= r <= inf, got {r}")));
    }
    let n = 3.0 / f64::from(order);
    let rhs = n * (0.5 - 1.0 / r);
    if rhs == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(2.0 / rhs)
}

/// One row of the coefficient table.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffRow {
    pub j: u32,
    pub numerator: BigInt,
    pub denominator: BigInt,
    pub value: f64,
}

pub fn coeff_table(jmax: i64) -> Result<Vec<CoeffRow>> {
    if jmax < 0 {
        return Err(HosfError::config("jmax", format!("must be >= 0, got {jmax}")));
    }
    if jmax > MAX_TABLE_ORDER {
        return Err(HosfError::config(
            "jmax",
            format!("must be <= {MAX_TABLE_ORDER}, got {jmax}"),
        ));
    }
    Ok((0..=jmax as u32)
        .map(|j| {
            let a = alpha_coeff(j);
            CoeffRow {
                j,
                numerator: a.numer().clone(),
                denominator: a.denom().clone(),
                value: a.to_f64().unwrap_or(f64::NAN),
            }
        })
        .collect())
}

/// CSV rendering of [`coeff_table`]: `j,numerator,denominator,value`.
pub fn coeff_table_csv(jmax: i64) -> Result<String> {
    let mut out = String::from("j,numerator,denominator,value\n");
    for row in coeff_table(jmax)? {
        out.push_str(&format!(
            "{},{},{},{:.16e}\n",
            row.j, row.numerator, row.denominator, row.value
        ));
    }
    Ok(out)
}

/// Which kinetic symbol drives the free evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dispersion {
    /// Truncated expansion `E_J(ħ|k|)`.
    Polynomial { order: u32 },
    /// Exact `sqrt(ħ²c²|k|² + m²c⁴)`.
    Relativistic,
    /// `coefficient · |k|^{2 order}` with no rest energy. A verification
    /// instrument for dispersive decay rates, not a physical model.
    Monomial { order: u32, coefficient: f64 },
}

impl Dispersion {
    pub fn order(&self) -> Option<u32> {
        match *self {
            Dispersion::Polynomial { order } | Dispersion::Monomial { order, .. } => Some(order),
            Dispersion::Relativistic => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Dispersion::Polynomial { order } | Dispersion::Monomial { order, .. } if order == 0 => {
                Err(HosfError::config("operator.order", "J must be >= 1"))
            }
            Dispersion::Monomial { coefficient, .. } if !coefficient.is_finite() => Err(
                HosfError::config("operator.coefficient", "must be finite"),
            ),
            _ => Ok(()),
        }
    }

    /// Energy at wavenumber magnitude `k`.
    pub fn energy(&self, k: f64, consts: &PhysicalConstants) -> f64 {
        let p = consts.hbar * k;
        match *self {
            Dispersion::Polynomial { order } => symbol_polynomial(order, p, consts),
            Dispersion::Relativistic => symbol_relativistic(p, consts),
            Dispersion::Monomial { order, coefficient } => coefficient * k.powi(2 * order as i32),
        }
    }

    /// Value of the symbol at `k = 0`.
    pub fn rest_energy(&self, consts: &PhysicalConstants) -> f64 {
        match self {
            Dispersion::Monomial { .. } => 0.0,
            _ => consts.rest_energy(),
        }
    }
}

/// Kinetic operator sampled on a grid's frequencies.
///
/// `symbol` always includes the rest energy. When `subtract_rest_energy`
/// is set the propagators use `symbol - rest_energy`, which only changes
/// the global phase of the solution.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub dispersion: Dispersion,
    pub consts: PhysicalConstants,
    pub grid: GridSpec,
    pub symbol: Vec<f64>,
    pub rest_energy: f64,
    pub subtract_rest_energy: bool,
}

impl OperatorSpec {
    pub fn new(
        grid: &GridSpec,
        dispersion: Dispersion,
        consts: &PhysicalConstants,
        subtract_rest_energy: bool,
    ) -> Result<Self> {
        dispersion.validate()?;
        consts.validate()?;
        let symbol = grid
            .wavenumber_magnitudes()
            .into_iter()
            .map(|k| dispersion.energy(k, consts))
            .collect();
        Ok(OperatorSpec {
            dispersion,
            consts: *consts,
            grid: grid.clone(),
            symbol,
            rest_energy: dispersion.rest_energy(consts),
            subtract_rest_energy,
        })
    }

    /// Energy offset removed before exponentiating.
    pub fn phase_offset(&self) -> f64 {
        if self.subtract_rest_energy {
            self.rest_energy
        } else {
            0.0
        }
    }

    /// Symbol actually used by the propagators.
    pub fn propagation_symbol(&self) -> impl Iterator<Item = f64> + '_ {
        let off = self.phase_offset();
        self.symbol.iter().map(move |&h| h - off)
    }

    /// Advisory step size `0.5 ħ / max |h(k)|` (after the optional offset).
    pub fn suggested_dt(&self) -> f64 {
        let max = self
            .propagation_symbol()
            .fold(0.0_f64, |m, h| m.max(h.abs()));
        if max == 0.0 {
            f64::INFINITY
        } else {
            0.5 * self.consts.hbar / max
        }
    }
}

/// Ratio `α(j+1) / α(j)` as an exact rational.
pub fn alpha_ratio(j: u32) -> BigRational {
    alpha_coeff(j + 1) / alpha_coeff(j)
}

/// Is `α(j)` positive? Holds for all `j >= 1`.
pub fn alpha_is_positive(j: u32) -> bool {
    let a = alpha_coeff(j);
    !a.is_zero() && a.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    // Independent evaluation straight from the factorial definition.
    fn alpha_oracle(j: u64) -> BigRational {
        let f = |n: u64| -> BigInt { (1..=n).map(BigInt::from).product() };
        let two_pow: BigInt = (0..(2 * j - 1)).map(|_| BigInt::from(2)).product();
        BigRational::new(f(2 * j - 2), f(j) * f(j - 1) * two_pow)
    }

    #[test]
    fn alpha_anchor_values() {
        assert_eq!(alpha_coeff(0), rat(-1, 1));
        assert_eq!(alpha_coeff(1), rat(1, 2));
        assert_eq!(alpha_coeff(2), rat(1, 8));
        assert_eq!(alpha_coeff(3), rat(1, 16));
        assert_eq!(alpha_oracle(3), rat(1, 16));
        for j in 1..=30 {
            assert_eq!(alpha_coeff(j as u32), alpha_oracle(j));
        }
    }

    #[test]
    fn alpha_positive_and_ratio() {
        for j in 1..=30u32 {
            assert!(alpha_is_positive(j));
            let r = alpha_ratio(j);
            assert_eq!(r, rat(2 * j as i64 - 1, 2 * j as i64 + 2));
            assert!(r < rat(1, 1));
            if j < 30 {
                assert!(r < alpha_ratio(j + 1));
            }
        }
        // the ratio only stays below 1/2 for j = 1
        assert!(alpha_ratio(1) < rat(1, 2));
        assert_eq!(alpha_ratio(2), rat(1, 2));
    }

    #[test]
    fn alpha_f64_matches_binomial_series() {
        // (-1)^{j+1} α(j) is the binomial coefficient C(1/2, j)
        let mut binom = 1.0;
        for j in 1..=20u32 {
            binom *= (0.5 - f64::from(j - 1)) / f64::from(j);
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            assert!((sign * alpha_coeff_f64(j) - binom).abs() <= 1e-15 * binom.abs());
        }
    }

    #[test]
    fn polynomial_symbol_low_orders() {
        let c = PhysicalConstants {
            hbar: 1.3,
            mass: 2.0,
            c: 3.0,
            ..Default::default()
        };
        for order in 1..6 {
            assert_eq!(symbol_polynomial(order, 0.0, &c), c.rest_energy());
        }
        for &p in &[0.1, 0.7, 2.5] {
            let m = c.mass;
            let j1 = c.rest_energy() + p * p / (2.0 * m);
            assert!((symbol_polynomial(1, p, &c) - j1).abs() < 1e-12 * j1);
            let j2 = j1 - p.powi(4) / (8.0 * m.powi(3) * c.c * c.c);
            assert!((symbol_polynomial(2, p, &c) - j2).abs() < 1e-12 * j2);
        }
    }

    #[test]
    fn relativistic_symbol_identities() {
        let c = PhysicalConstants::natural();
        assert_eq!(symbol_relativistic(0.0, &c), 1.0);
        let mc = c.momentum_scale();
        assert!((symbol_relativistic(mc, &c) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn speed_check_boundary() {
        let c = PhysicalConstants::natural();
        assert!(validity_speed_check(0.0, &c));
        assert!(!validity_speed_check(1.0 / 2f64.sqrt(), &c));
        assert!(validity_speed_check(0.1, &c));
        assert!(!validity_speed_check(0.9, &c));
    }

    #[test]
    fn admissible_pairs() {
        for order in 2..6 {
            let q = admissible_pair_q(f64::INFINITY, order).unwrap();
            assert!((q - 4.0 * f64::from(order) / 3.0).abs() < 1e-14);
            assert!(admissible_pair_q(2.0, order).unwrap().is_infinite());
        }
        // 2/q = (3/2)(1/2 - 1/4) = 3/8
        assert!((admissible_pair_q(4.0, 2).unwrap() - 16.0 / 3.0).abs() < 1e-14);
        assert!(admissible_pair_q(1.5, 2).is_err());
        assert!(admissible_pair_q(4.0, 1).is_err());
        // decreasing in r
        let rs = [2.5, 3.0, 4.0, 8.0, 100.0, f64::INFINITY];
        for w in rs.windows(2) {
            assert!(admissible_pair_q(w[0], 3).unwrap() > admissible_pair_q(w[1], 3).unwrap());
        }
    }

    #[test]
    fn coeff_table_bounds() {
        assert!(coeff_table(-1).is_err());
        assert!(coeff_table(31).is_err());
        let rows = coeff_table(30).unwrap();
        assert_eq!(rows.len(), 31);
        let csv = coeff_table_csv(3).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "j,numerator,denominator,value");
        assert!(lines[1].starts_with("0,-1,1,"));
        assert!(lines[2].starts_with("1,1,2,"));
        assert!(lines[3].starts_with("2,1,8,"));
        assert!(lines[4].starts_with("3,1,16,"));
    }

    #[test]
    fn truncation_error_zero_at_rest() {
        let c = PhysicalConstants::natural();
        for order in 1..8 {
            assert_eq!(truncation_error_relative(order, 0.0, &c), 0.0);
        }
    }
}
