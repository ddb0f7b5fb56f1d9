use hosf_core::coefficients::PhysicalConstants;
use hosf_core::grid::{l2_norm, Field, GridSpec, OrbitalSet};
use hosf_core::meanfield::{CoulombKernel, KernelSpec, MeanFieldModel};
use hosf_core::propagation::{
    free_propagate, run_simulation, semirelativistic_propagate, Cadence, Integrator, NonlinearUpdate,
};
use hosf_core::scenarios::{build_scenario, preset, Scenario};
use hosf_core::{Dispersion, Hamiltonian, HosfError, IntegratorConfig, OperatorSpec, Simulation};
use num_complex::Complex64;
use serde_json::json;

fn packet(grid: &GridSpec, x0: f64, sigma: f64, k0: f64) -> Field {
    let mut f = Field::from_fn(grid, |x| {
        Complex64::from_polar((-(x[0] - x0).powi(2) / (4.0 * sigma * sigma)).exp(), k0 * x[0])
    });
    let n = l2_norm(&f);
    f.scale(Complex64::new(1.0 / n, 0.0));
    f
}

fn linear_hamiltonian(grid: &GridSpec, order: u32) -> Hamiltonian {
    let op = OperatorSpec::new(grid, Dispersion::Polynomial { order }, &PhysicalConstants::natural(), true).unwrap();
    let kernel = CoulombKernel::new(grid, KernelSpec::default()).unwrap();
    Hamiltonian::new(op, None, 0.0, kernel, MeanFieldModel::HartreeFock).unwrap()
}

fn hf_pair(dt: f64, horizon: f64) -> Scenario {
    let o = json!({"integrator": {"dt": dt}, "horizon": horizon});
    build_scenario(&preset("hf-pair", Some(&o)).unwrap()).unwrap()
}

fn max_dist(a: &OrbitalSet, b: &OrbitalSet) -> f64 {
    a.orbitals()
        .iter()
        .zip(b.orbitals())
        .map(|(x, y)| l2_norm(&x.sub(y).unwrap()))
        .fold(0.0, f64::max)
}

#[test]
fn free_flow_is_unitary_group() {
    let g = GridSpec::new(1, 256, 40.0).unwrap();
    let op = linear_hamiltonian(&g, 3).op;
    let psi = packet(&g, -3.0, 1.0, 0.7);
    assert!(free_propagate(&psi, 0.0, &op).unwrap().sub(&psi).unwrap().max_abs() < 1e-15);
    let a = free_propagate(&free_propagate(&psi, 0.3, &op).unwrap(), 0.5, &op).unwrap();
    let b = free_propagate(&psi, 0.8, &op).unwrap();
    assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    assert!((l2_norm(&b) - 1.0).abs() < 1e-13);
    let c = semirelativistic_propagate(&psi, 0.8, &PhysicalConstants::natural()).unwrap();
    assert!((l2_norm(&c) - 1.0).abs() < 1e-13);
    let same = semirelativistic_propagate(&psi, 0.0, &PhysicalConstants::natural()).unwrap();
    assert!(same.sub(&psi).unwrap().max_abs() < 1e-15);
}

#[test]
fn grid_mismatch_rejected() {
    let g = GridSpec::new(1, 64, 10.0).unwrap();
    let h = GridSpec::new(1, 128, 10.0).unwrap();
    let op = linear_hamiltonian(&g, 1).op;
    assert!(matches!(free_propagate(&Field::zeros(&h), 1.0, &op), Err(HosfError::GridMismatch(_))));
}

/// Scaling every momentum by 1/2 scales the leading symbol gap
/// `E - E_2 ≈ α(3) p⁶ / (m⁵c⁴)` by 2⁻⁶.
#[test]
fn relativistic_gap_scales_with_sixth_power() {
    let g = GridSpec::new(1, 4096, 1024.0).unwrap();
    let consts = PhysicalConstants::natural();
    let op = OperatorSpec::new(&g, Dispersion::Polynomial { order: 2 }, &consts, false).unwrap();
    let gap = |k0: f64, sigma: f64| {
        let psi = packet(&g, 0.0, sigma, k0);
        let a = free_propagate(&psi, 1.0, &op).unwrap();
        let b = semirelativistic_propagate(&psi, 1.0, &consts).unwrap();
        l2_norm(&a.sub(&b).unwrap())
    };
    let ratio = gap(0.05, 20.0) / gap(0.025, 40.0);
    assert!((ratio / 64.0 - 1.0).abs() < 0.01, "ratio {ratio}");
}

#[test]
fn strang_collapses_to_free_flow_without_interactions() {
    let g = GridSpec::new(1, 256, 40.0).unwrap();
    let ham = linear_hamiltonian(&g, 2);
    let psi = packet(&g, 2.0, 1.2, -0.4);
    let integ = Integrator::new(ham.clone(), IntegratorConfig::strang(0.01)).unwrap();
    let set = OrbitalSet::new(vec![psi.clone()]).unwrap();
    let next = integ.strang_step(&set).unwrap();
    let exact = free_propagate(&psi, 0.01, &ham.op).unwrap();
    assert!(next.orbitals()[0].sub(&exact).unwrap().max_abs() < 1e-12);
}

#[test]
fn linear_run_reproduces_free_flow_at_horizon() {
    let sc = build_scenario(&preset("free-gaussian", None).unwrap()).unwrap();
    let (traj, last) = run_simulation(
        sc.orbitals.clone(),
        sc.spec.horizon,
        sc.hamiltonian.clone(),
        sc.integrator,
        sc.spec.cadence,
    )
    .unwrap();
    let exact = free_propagate(&sc.orbitals.orbitals()[0], sc.spec.horizon, &sc.operator).unwrap();
    assert!(last.orbitals()[0].sub(&exact).unwrap().max_abs() < 1e-12);
    let times: Vec<f64> = traj.records.iter().map(|r| r.time).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert!((times.last().unwrap() - sc.spec.horizon).abs() < 1e-12);
}

#[test]
fn picard_is_exact_in_one_iteration_without_interactions() {
    let g = GridSpec::new(1, 128, 20.0).unwrap();
    let ham = linear_hamiltonian(&g, 2);
    let psi = packet(&g, 0.0, 1.0, 0.5);
    let integ = Integrator::new(ham.clone(), IntegratorConfig::duhamel_picard(0.05)).unwrap();
    let (next, report) = integ.duhamel_picard_step(&OrbitalSet::new(vec![psi.clone()]).unwrap()).unwrap();
    assert_eq!(report.iterations, 1);
    let exact = free_propagate(&psi, 0.05, &ham.op).unwrap();
    assert!(next.orbitals()[0].sub(&exact).unwrap().max_abs() < 1e-14);
}

#[test]
fn picard_increments_contract() {
    let sc = hf_pair(0.01, 0.1);
    let integ = Integrator::new(sc.hamiltonian.clone(), IntegratorConfig::duhamel_picard(0.01)).unwrap();
    let (_, report) = integ.duhamel_picard_step(&sc.orbitals).unwrap();
    assert!(report.iterations >= 2);
    for w in report.residuals.windows(2) {
        if w[0] > 1e-13 {
            assert!(w[1] / w[0] < 0.5, "{:?}", report.residuals);
        }
    }
}

#[test]
fn picard_non_convergence_is_reported() {
    let sc = hf_pair(0.5, 1.0);
    let cfg = IntegratorConfig {
        picard_max_iter: 3,
        ..IntegratorConfig::duhamel_picard(0.5)
    };
    let integ = Integrator::new(sc.hamiltonian.clone(), cfg).unwrap();
    match integ.duhamel_picard_step(&sc.orbitals) {
        Err(e @ HosfError::PicardDivergence { .. }) => {
            assert!(e.is_numerical());
            assert!(e.to_string().contains("dt"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn single_orbital_hartree_step_preserves_norm() {
    let o = json!({"orbitals": [{"kind": "gaussian", "center": [0.0], "width": 1.0, "momentum": [0.2]}]});
    let sc = build_scenario(&preset("hf-pair", Some(&o)).unwrap()).unwrap();
    let integ = Integrator::new(sc.hamiltonian.clone(), IntegratorConfig::strang(0.01)).unwrap();
    let mut set = sc.orbitals.clone();
    for _ in 0..20 {
        let next = integ.strang_step(&set).unwrap();
        assert!((next.norms()[0] - set.norms()[0]).abs() <= 1e-12);
        set = next;
    }
}

/// Global error against a dt/16 reference run.
#[test]
fn strang_is_second_order() {
    let horizon = 0.5;
    let run = |dt: f64| {
        let sc = hf_pair(dt, horizon);
        run_simulation(
            sc.orbitals.clone(),
            horizon,
            sc.hamiltonian.clone(),
            sc.integrator,
            Cadence {
                diagnostics_every: 1000,
                snapshot_every: None,
            },
        )
        .unwrap()
        .1
    };
    let base = 0.02;
    let reference = run(base / 16.0);
    let errs: Vec<f64> = [base, base / 2.0, base / 4.0]
        .iter()
        .map(|&dt| max_dist(&run(dt), &reference))
        .collect();
    for w in errs.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!((slope - 2.0).abs() <= 0.1, "errors {errs:?}");
    }
}

/// The per-node Cayley exchange update mixes orbitals node by node, so the
/// total norm is exact while individual norms drift at second order.
#[test]
fn total_norm_exact_individual_norms_second_order() {
    let mut drift = Vec::new();
    for dt in [0.01, 0.005] {
        let sc = hf_pair(dt, 1.0);
        let (traj, _) = run_simulation(
            sc.orbitals.clone(),
            1.0,
            sc.hamiltonian.clone(),
            sc.integrator,
            Cadence::default(),
        )
        .unwrap();
        let total0: f64 = traj.records[0].norms.iter().map(|n| n * n).sum();
        for r in &traj.records {
            let total: f64 = r.norms.iter().map(|n| n * n).sum();
            assert!((total - total0).abs() < 1e-12);
        }
        let last = traj.records.last().unwrap();
        drift.push((last.norms[0] - traj.records[0].norms[0]).abs());
    }
    let slope = (drift[0] / drift[1]).log2();
    assert!((slope - 2.0).abs() < 0.2, "{drift:?}");
}

#[test]
fn frozen_update_is_less_accurate_than_midpoint() {
    let horizon = 0.5;
    let run = |dt: f64, update: NonlinearUpdate| {
        let sc = hf_pair(dt, horizon);
        let cfg = IntegratorConfig {
            nonlinear_update: update,
            ..IntegratorConfig::strang(dt)
        };
        run_simulation(sc.orbitals.clone(), horizon, sc.hamiltonian.clone(), cfg, Cadence::default())
            .unwrap()
            .1
    };
    let reference = run(0.000625, NonlinearUpdate::Midpoint);
    let mid = max_dist(&run(0.01, NonlinearUpdate::Midpoint), &reference);
    let frozen = max_dist(&run(0.01, NonlinearUpdate::Frozen), &reference);
    assert!(frozen > mid, "frozen {frozen:e} midpoint {mid:e}");
}

#[test]
fn zero_initial_data_stays_zero() {
    let sc = hf_pair(0.01, 0.1);
    let zero = OrbitalSet::new(vec![Field::zeros(sc.orbitals.grid()); 2]).unwrap();
    let (traj, last) = run_simulation(zero, 0.1, sc.hamiltonian.clone(), sc.integrator, Cadence::default()).unwrap();
    for r in &traj.records {
        assert!(r.norms.iter().all(|&n| n == 0.0));
        assert_eq!(r.energy.total, 0.0);
        assert_eq!(r.sup_norm, 0.0);
    }
    assert!(last.orbitals().iter().all(|f| f.max_abs() == 0.0));
}

#[test]
fn non_finite_state_aborts_and_keeps_last_good() {
    let sc = hf_pair(0.01, 0.1);
    let mut bad = sc.orbitals.clone().into_orbitals();
    bad[1].values[7] = Complex64::new(f64::NAN, 0.0);
    let bad = OrbitalSet::new(bad).unwrap();
    let mut sim = Simulation::new(
        Integrator::new(sc.hamiltonian.clone(), sc.integrator).unwrap(),
        bad.clone(),
    )
    .unwrap();
    match sim.advance() {
        Err(e @ HosfError::NonFinite { step: 1, .. }) => assert!(e.is_numerical()),
        other => panic!("{other:?}"),
    }
    assert_eq!(sim.step_index, 0);
    assert_eq!(sim.state.orbitals()[0], bad.orbitals()[0]);
}

#[test]
fn horizon_is_hit_exactly() {
    let sc = hf_pair(0.03, 0.1);
    let (traj, _) = run_simulation(sc.orbitals.clone(), 0.1, sc.hamiltonian.clone(), sc.integrator, Cadence::default())
        .unwrap();
    assert_eq!(traj.steps, 4);
    assert!((traj.dt - 0.025).abs() < 1e-15);
    assert!((traj.records.last().unwrap().time - 0.1).abs() < 1e-15);
}
