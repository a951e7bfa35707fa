use masked_cavity::checkpoint::Checkpoint;
use masked_cavity::hilbert::DensityMatrix;
use masked_cavity::meanfield::{mf_steady_states, MeanFieldParams};
use masked_cavity::open::{build_open_system, sector_populations, InitialState, MasterIntegrator, OpenModelParams};
use masked_cavity::trajectory::sse_step;
use masked_cavity::C64;
use proptest::prelude::*;

fn model(omega: f64, omega_r: f64, epsilon: f64, initial: InitialState) -> OpenModelParams {
    OpenModelParams {
        kappa: 1.0,
        omega,
        omega_r,
        epsilon,
        n_max: 6,
        initial_state: initial,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn master_evolution_keeps_trace_hermiticity_and_sector_weights(
        omega in 0.0..3.0f64,
        omega_r in 0.0..1.0f64,
        epsilon in 0.0..0.5f64,
    ) {
        let p = model(omega, omega_r, epsilon, InitialState::mixed_parity());
        let sys = build_open_system(&p).unwrap();
        let rho0 = DensityMatrix::from_pure(&p.initial_state.to_state(&sys.space).unwrap());
        let before = sector_populations(&rho0);
        let mut integ = MasterIntegrator::new(&sys, rho0, 2e-3, p.max_rate()).unwrap();
        integ.advance_to(0.5).unwrap();
        let rho = integ.state();
        let after = sector_populations(rho);
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-7);
        prop_assert!(rho.hermitian_defect() < 1e-10);
        prop_assert!((after.0 - before.0).abs() < 1e-8 && (after.1 - before.1).abs() < 1e-8);
    }

    #[test]
    fn sse_step_is_normalized_and_stays_in_its_sector(
        omega in 0.0..3.0f64,
        epsilon in 0.0..0.5f64,
        sector in prop_oneof![Just(-1i8), Just(1i8)],
        re in -1.0..1.0f64,
        im in -1.0..1.0f64,
    ) {
        let p = model(omega, 0.25, epsilon, InitialState::parity_eigenstate(sector).unwrap());
        let sys = build_open_system(&p).unwrap();
        let labels = sys.parity_labels();
        let mut psi = p.initial_state.to_state(&sys.space).unwrap();
        let dt = 1e-3;
        let dz = C64::new(re, im) * (dt / 2.0f64).sqrt();
        for _ in 0..20 {
            psi = sse_step(&sys, &psi, dt, dz).unwrap().0;
        }
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        let leaked: f64 = psi
            .amplitudes
            .iter()
            .zip(&labels)
            .filter(|(_, &s)| s != sector)
            .map(|(a, _)| a.norm_sqr())
            .sum();
        prop_assert!(leaked < 1e-20);
    }

    #[test]
    fn mean_field_fixed_points_are_physical(ratio in 0.0..1.5f64, omega_r in 0.05..1.0f64) {
        let p = MeanFieldParams::new(1.0, 20.0, omega_r, ratio * 10.0).unwrap();
        let branches = mf_steady_states(&p).unwrap();
        prop_assert!(branches.len() >= 2);
        for b in &branches {
            prop_assert!(b.residual < 1e-9);
            prop_assert!(b.state.x.abs() <= 1.0 + 1e-12 && b.state.z.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn checkpoint_file_round_trip_is_exact(omega in 0.0..3.0f64, time in 0.0..1e3f64) {
        let p = model(omega, 0.25, 0.3, InitialState::mixed_parity());
        let sys = build_open_system(&p).unwrap();
        let rho = DensityMatrix::from_pure(&p.initial_state.to_state(&sys.space).unwrap());
        let ck = Checkpoint { rho, time, params: Some(p) };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.json");
        ck.write(&path).unwrap();
        prop_assert_eq!(Checkpoint::read(&path).unwrap(), ck);
    }
}
