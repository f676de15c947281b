mod common;

use common::{flat, gapped_benchmark, trivial};
use photon_landauer::oracle::{compare, initial_covariance, run, Discretization, Integrator, ModeBaths, OracleError, OracleSystem};
use photon_landauer::spectra::{PairCoupling, Table2d};
use photon_landauer::transmission::Scatterer;
use photon_landauer::{BathState, CenterModel, CouplingModel, PumpDrive, Side, TransmissionKernel, TransportProblem};

fn coarse() -> Discretization {
    Discretization { modes_per_lead: 20, ..Default::default() }
}

#[test]
fn gapped_benchmark_agrees_with_simulation() {
    let r = compare(&gapped_benchmark(), &coarse()).unwrap();
    assert!(r.relative_deviation < 0.02, "{r:?}");
    assert!(!r.recurrence_window_exceeded);
    assert!(r.min_physicality > -1e-9);
    // Particle conserving: what leaves the left lead arrives on the right.
    assert!((r.simulated + r.simulated_left).abs() < 0.02 * r.simulated);
}

#[test]
fn halving_the_coupling_quarters_both_currents() {
    let full = compare(&gapped_benchmark(), &coarse()).unwrap();
    let mut p = gapped_benchmark();
    p.kernel = p.kernel.with_coupling_scale(0.5);
    let half = compare(&p, &coarse()).unwrap();
    assert!((half.analytic / full.analytic - 0.25).abs() < 1e-8);
    assert!((half.simulated / full.simulated - 0.25).abs() < 0.01, "{} vs {}", half.simulated, full.simulated);
}

#[test]
fn uncoupled_leads_give_no_current() {
    let p = trivial(flat(Side::Left, 0.5, 1.5, 1.0, 0.0), flat(Side::Right, 2.0, 3.0, 1.0, 1.0), 1.6, 0.5, 0.5);
    let r = compare(&p, &coarse()).unwrap();
    assert_eq!(r.analytic, 0.0);
    assert!(r.simulated.abs() < 1e-12, "{}", r.simulated);
    assert!(r.relative_deviation < 1e-2);
}

#[test]
fn few_modes_trip_the_recurrence_flag() {
    let r = compare(&gapped_benchmark(), &Discretization { modes_per_lead: 4, ..Default::default() }).unwrap();
    assert!(r.recurrence_window_exceeded);
    assert!(r.parameters.end_time > r.parameters.recurrence_time);
}

#[test]
fn coarse_steps_are_a_numerical_error() {
    let e = compare(&gapped_benchmark(), &Discretization { steps_per_cycle: 4, ..coarse() }).unwrap_err();
    assert!(matches!(e, OracleError::Resolution { .. }), "{e}");
    assert!(e.is_numerical());
}

#[test]
fn tabulated_pair_coupling_is_rejected() {
    let mut p = gapped_benchmark();
    let table = Table2d::new(vec![0.5, 1.5], vec![2.0, 3.0], vec![vec![0.1, 0.1], vec![0.1, 0.1]]).unwrap();
    p.kernel = TransmissionKernel::new(p.kernel.left().clone(), p.kernel.right().clone(), Scatterer::Direct(PairCoupling::Tabulated(table)))
        .unwrap();
    assert!(matches!(compare(&p, &coarse()), Err(OracleError::Config(_))));
}

#[test]
fn integrators_agree_on_the_benchmark() {
    let p = gapped_benchmark();
    let a = compare(&p, &coarse()).unwrap();
    let b = compare(&p, &Discretization { integrator: Integrator::Rk4, ..coarse() }).unwrap();
    assert!((a.simulated - b.simulated).abs() < 1e-3 * a.simulated);
}

#[test]
fn single_mode_center_agrees_with_simulation() {
    let center = CenterModel::diagonal(&[4.0], vec![CouplingModel::constant(0.1)], vec![CouplingModel::constant(0.1)], 1e-6).unwrap();
    let kernel = TransmissionKernel::center(flat(Side::Left, 0.5, 1.5, 1.0, 0.0), flat(Side::Right, 2.0, 3.0, 1.0, 0.0), center).unwrap();
    let p = TransportProblem::new(kernel, BathState::new(0.5).unwrap(), BathState::new(0.5).unwrap(), PumpDrive::new(1.6).unwrap());
    let r = compare(&p, &Discretization { modes_per_lead: 40, ..Default::default() }).unwrap();
    assert!(r.analytic > 0.0);
    assert!(r.relative_deviation < 0.1, "{r:?}");
}

#[test]
fn free_modes_keep_their_occupations() {
    let p = trivial(flat(Side::Left, 0.5, 1.5, 1.0, 0.0), flat(Side::Right, 2.0, 3.0, 1.0, 0.0), 1.6, 0.7, 0.3);
    let sys = OracleSystem::discretize(&p, &coarse()).unwrap();
    let c0 = initial_covariance(&sys, &ModeBaths::from_problem(&p)).unwrap();
    let n0 = sys.mode_occupations(&c0);
    let traj = run(&sys, c0).unwrap();
    let n1 = sys.mode_occupations(&traj.final_state);
    let drift = n0.iter().zip(&n1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / traj.final_state.time;
    assert!(drift < 1e-10, "{drift:e}");
}
