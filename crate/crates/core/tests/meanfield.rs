use std::f64::consts::PI;

use hosf_core::grid::{Field, GridSpec, RealField};
use hosf_core::meanfield::{CoulombKernel, KernelSpec, ZeroMode};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn truncated(grid: &GridSpec, radius: f64) -> CoulombKernel {
    CoulombKernel::new(
        grid,
        KernelSpec {
            zero_mode: ZeroMode::Truncated { radius },
            screening: 1.0,
        },
    )
    .unwrap()
}

/// `∫_{|x|<R} 1/|x| dx` by a midpoint sum over a cube of side `2R`.
fn ball_integral(radius: f64, cells: usize) -> f64 {
    let h = 2.0 * radius / cells as f64;
    let mut s = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            for k in 0..cells {
                let p = [i, j, k].map(|n| -radius + (n as f64 + 0.5) * h);
                let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if r < radius {
                    s += 1.0 / r;
                }
            }
        }
    }
    s * h * h * h
}

#[test]
fn truncated_zero_mode_integral() {
    let radius = 3.0;
    let g = GridSpec::new(3, 16, 8.0).unwrap();
    let kernel = truncated(&g, radius);
    let f = RealField::from_fn(&g, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
    let out = kernel.convolve_real(&f).unwrap();
    let expected = 2.0 * PI * radius * radius * f.integral();
    assert!((out.integral() - expected).abs() < 1e-10 * expected);
    let quadrature = ball_integral(radius, 120);
    assert!((quadrature / (2.0 * PI * radius * radius) - 1.0).abs() < 2e-3, "{quadrature}");
}

#[test]
fn screened_convolution_keeps_nonnegative_inputs_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for dim in [1, 2] {
        let g = GridSpec::new(dim, 32, 16.0).unwrap();
        let kernel = truncated(&g, 4.0);
        for _ in 0..5 {
            let centers: Vec<[f64; 3]> = (0..3)
                .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .collect();
            let f = RealField::from_fn(&g, |x| {
                centers
                    .iter()
                    .map(|c| {
                        let d2: f64 = (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum();
                        (-d2).exp()
                    })
                    .sum()
            });
            let out = kernel.convolve_real(&f).unwrap();
            let peak = out.max();
            assert!(out.min() >= -1e-12 * peak, "dim {dim}: min {}", out.min());
        }
    }
}

#[test]
fn kernel_is_linear_and_radial() {
    let g = GridSpec::new(2, 32, 10.0).unwrap();
    let kernel = CoulombKernel::new(&g, KernelSpec::default()).unwrap();
    assert!(kernel.multiplier.iter().all(|&m| m >= 0.0));
    let mags = g.wavenumber_magnitudes();
    for i in 0..g.len() {
        for j in 0..g.len() {
            if (mags[i] - mags[j]).abs() < 1e-12 {
                assert!((kernel.multiplier[i] - kernel.multiplier[j]).abs() <= 1e-14 * kernel.multiplier[i]);
            }
        }
    }
    let a = Field::from_fn(&g, |x| Complex64::new((-x[0] * x[0]).exp(), x[1]));
    let b = Field::from_fn(&g, |x| Complex64::new(x[0].sin(), (-x[1] * x[1]).exp()));
    let mut combo = a.scaled(Complex64::new(2.0, -1.0));
    combo.axpy(Complex64::new(0.5, 0.0), &b).unwrap();
    let lhs = kernel.convolve(&combo).unwrap();
    let mut rhs = kernel.convolve(&a).unwrap().scaled(Complex64::new(2.0, -1.0));
    rhs.axpy(Complex64::new(0.5, 0.0), &kernel.convolve(&b).unwrap()).unwrap();
    assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
}
