use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rydpump::hamiltonians::{drive_hamiltonian, DriveSource, DriveSpec, InteractionSpec, Motion};
use rydpump::lindblad::{evolve, Hamiltonian, IntegratorConfig};
use rydpump::oracle::{dark_state_residual, population, survival_amplitude, target_state, x_state, TargetKind};
use rydpump::protocols::{
    bell_protocol, ghz_protocol, qutrit_protocol, run, solve_step_c_timing, PumpParams, RecordMode, RunOptions,
    SegmentKind, StepCTiming,
};
use rydpump::{Basis, DensityMatrix, Level, LevelScheme, StateVector};

const MHZ: f64 = TAU * 1e6;
const KHZ: f64 = TAU * 1e3;

fn pump(u: f64) -> PumpParams {
    PumpParams {
        omega_a: 2.0 * MHZ,
        omega_b: 1.2 * MHZ,
        gamma: 6.0 * MHZ,
        interaction: InteractionSpec::uniform(u),
        relax_duration: 2e-6,
    }
}

fn opts() -> RunOptions {
    RunOptions { integrator: IntegratorConfig::auto(), record: RecordMode::Cycle }
}

/// Drive restricted to states with at most one Rydberg excitation.
fn blockaded(h: &DMatrix<C64>, basis: &Basis) -> DMatrix<C64> {
    let allowed = |i: usize| basis.count(i, Level::R) <= 1;
    DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| if allowed(r) && allowed(c) { h[(r, c)] } else { C64::from(0.0) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn survival_formula_matches_direct_propagation(
        n in 2usize..=5, m_raw in 1usize..=4, omega_mhz in 0.5f64..4.0, detuning in -1.0f64..1.0, t_us in 0.0f64..2.0,
    ) {
        let m = m_raw.min(n);
        let basis = Basis::new(n, LevelScheme::ReducedGer).unwrap();
        let (omega, delta, t) = (omega_mhz * MHZ, detuning * omega_mhz * MHZ, t_us * 1e-6);
        let spec = DriveSpec::resonant(DriveSource::Plus, omega).with_detuning(delta);
        let h = blockaded(&drive_hamiltonian(&spec, &basis, 0.0).unwrap().to_dense(), &basis);
        let u = (h * C64::new(0.0, -t)).exp();
        let x: DVector<C64> = x_state(m, n, &basis).unwrap().vector.amplitudes().clone();
        let direct = (x.adjoint() * &u * &x)[(0, 0)];
        // The closed form puts the detuning on the ground state.
        let formula = survival_amplitude(m as u32, omega, delta, t) * C64::from_polar(1.0, delta * t);
        prop_assert!((direct - formula).norm() < 1e-8, "n={n} m={m}: {direct} vs {formula}");
    }
}

#[test]
fn timing_solution_restores_both_blocks() {
    let omega = 2.0 * MHZ;
    let s = solve_step_c_timing(omega, 10).unwrap();
    assert_eq!((s.k, s.l, s.j), (1, 5, 7));
    for m in [2, 4] {
        assert!((survival_amplitude(m, omega, s.delta, s.t) - C64::from(1.0)).norm() < 1e-10);
    }
    assert!(s.residuals(omega).iter().all(|r| r.abs() < 1e-9));
}

#[test]
fn targets_are_dark_to_the_steps_that_must_spare_them() {
    // Microwave mixing leaves T1 alone, and |−−> never sees the |+> drive.
    let q = qutrit_protocol(&pump(400.0 * MHZ), 20.0 * KHZ, 1).unwrap();
    let basis = q.basis().unwrap();
    let t1 = target_state(TargetKind::T1, &basis).unwrap();
    for seg in &q.segments {
        if let SegmentKind::Microwave { omega_c } = seg.kind {
            let h = rydpump::hamiltonians::microwave_hamiltonian(omega_c, &basis).unwrap();
            assert!(dark_state_residual(&h, &t1).unwrap() < 1e-12);
        }
    }
    let b = bell_protocol(&pump(400.0 * MHZ), 1).unwrap();
    let basis = b.basis().unwrap();
    let phi = target_state(TargetKind::PhiPlus, &basis).unwrap();
    let minus = StateVector::product(basis, &[rydpump::hamiltonians::plus_minus(-1.0), rydpump::hamiltonians::plus_minus(-1.0)]).unwrap();
    for seg in &b.segments {
        if let SegmentKind::Pulse { drive, .. } = &seg.kind {
            if drive.source == DriveSource::Plus {
                let h = drive_hamiltonian(drive, &basis, 0.0).unwrap();
                let r = h.apply(minus.amplitudes()).norm();
                assert!(r < 1e-12, "{}: {r}", seg.label);
            }
        }
    }
    assert!((population(&DensityMatrix::from_pure(&phi.vector), &phi).unwrap() - 1.0).abs() < 1e-12);
}

fn one_cycle_loss(p: &rydpump::protocols::Protocol, kind: TargetKind) -> f64 {
    let basis = p.basis().unwrap();
    let target = target_state(kind, &basis).unwrap();
    let rho0 = DensityMatrix::from_pure(&target.vector);
    let r = run(p, &rho0, &[target], &opts()).unwrap();
    1.0 - r.last().values[0]
}

#[test]
fn targets_survive_one_ideal_cycle() {
    let strong = pump(1e6 * MHZ);
    let bell = bell_protocol(&strong, 1).unwrap();
    assert!(one_cycle_loss(&bell, TargetKind::PhiPlus) < 1e-6);
    let qutrit = qutrit_protocol(&strong, 20.0 * KHZ, 1).unwrap();
    assert!(one_cycle_loss(&qutrit, TargetKind::T1) < 1e-6);
    let ghz3 = ghz_protocol(3, &strong, 1, StepCTiming::Resonant).unwrap();
    assert!(one_cycle_loss(&ghz3, TargetKind::Ghz { n: 3 }) < 1e-6);
    let timing = StepCTiming::Detuned(solve_step_c_timing(strong.omega_a, 10).unwrap());
    for n in [4, 5] {
        let p = ghz_protocol(n, &strong, 1, timing).unwrap();
        let loss = one_cycle_loss(&p, TargetKind::Ghz { n });
        assert!(loss < 1e-6, "n = {n}: {loss}");
    }
}

#[test]
fn runs_preserve_trace_and_hermiticity() {
    let p = bell_protocol(&pump(400.0 * MHZ), 5).unwrap();
    let basis = p.basis().unwrap();
    let rho0 = rydpump::oracle::initial_state(&rydpump::oracle::InitialState::FullyMixedGe, &basis).unwrap();
    let target = target_state(TargetKind::PhiPlus, &basis).unwrap();
    for record in [RecordMode::Cycle, RecordMode::Segment] {
        let r = run(&p, &rho0, &[target.clone()], &RunOptions { record, ..opts() }).unwrap();
        for rec in &r.records {
            assert!(rec.trace_error < 1e-8);
            assert!(rec.hermiticity_error < 1e-10);
        }
        assert!(r.final_state.min_eigenvalue() > -1e-10);
    }
}

#[test]
fn moving_frame_matches_a_literal_phase_ramp() {
    // Ballistic atoms see the drive phase advance as k·v·t. The library
    // folds this into a static detuning plus a frame change at the end;
    // here the ramp is put into the drive phases directly.
    let k = TAU / 1.2e-6;
    let velocities = vec![[0.0, 0.0, 0.05], [0.0, 0.0, -0.08]];
    let base_phases = vec![0.3, -1.1];
    let mut p = bell_protocol(&pump(40.0 * MHZ), 1).unwrap();
    let seg = p.segments.iter_mut().find(|s| s.is_pulse()).unwrap();
    let duration = seg.duration;
    let SegmentKind::Pulse { drive, motion, interaction } = &mut seg.kind else { unreachable!() };
    drive.phases = base_phases.clone();
    *motion = Some(Motion { velocities: velocities.clone(), k_eff: k });
    let (drive, interaction) = (drive.clone(), interaction.clone());
    let seg = seg.clone();
    let basis = p.basis().unwrap();
    let tight = IntegratorConfig { rel_tol: 1e-11, abs_tol: 1e-13, ..IntegratorConfig::default() };

    let mut psi = StateVector::zeros(basis);
    for (w, lv) in [(0.6, [Level::G, Level::E]), (0.8, [Level::G, Level::G])] {
        psi = psi.add_scaled(&StateVector::basis_state(basis, &lv).unwrap(), C64::new(w, 0.0)).unwrap();
    }
    let rho0 = DensityMatrix::from_pure(&psi.normalized());
    let framed = p.dynamics(&seg).unwrap().evolve(&rho0, duration, &tight).unwrap();

    let u = rydpump::hamiltonians::rydberg_interaction(&interaction, &basis).unwrap();
    let literal = Hamiltonian::TimeDependent(Box::new(move |t| {
        let phases = base_phases.iter().zip(&velocities).map(|(p0, v)| p0 + k * v[2] * t).collect();
        drive_hamiltonian(&drive.clone().with_phases(phases), &basis, t)?.add(&u)
    }));
    let lab = evolve(&rho0, &literal, &[], duration, &tight).unwrap();
    assert!(framed.max_abs_diff(&lab) < 1e-7, "{}", framed.max_abs_diff(&lab));
}
