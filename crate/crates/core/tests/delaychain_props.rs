mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use wadc_core::delaychain::{self, build_delay_chain, build_selector, closed_loop_matrix};
use wadc_core::linalg::Mat;
use wadc_core::pdcsim::DelaySequence;
use wadc_core::ssmodel::{self, CtStateSpace};
use wadc_core::timesim;

proptest! {
    #[test]
    fn selector_reads_input_n_steps_back(
        n_max in 1usize..12,
        inputs in prop::collection::vec(-10.0..10.0f64, 12..40),
        pick in 0usize..100,
    ) {
        let n = 1 + pick % n_max;
        let chain = build_delay_chain(n_max, 1).unwrap();
        let sel = build_selector(n, n_max).unwrap();
        let mut state = vec![0.0; n_max];
        for (k, u) in inputs.iter().enumerate() {
            // After the shift at step K the chain holds u[K], ..., u[K-n_max+1] as d_1..d_nmax.
            state = chain.step(&state, &[*u]);
            if k + 1 >= n {
                prop_assert_eq!(sel.select(&state), inputs[k + 1 - n]);
            }
        }
    }

    #[test]
    fn open_chain_is_nilpotent(n_max in 1usize..10, channels in 1usize..4) {
        let chain = build_delay_chain(n_max, channels).unwrap();
        let mut power = chain.a_d().clone();
        for _ in 1..n_max {
            power = &power * chain.a_d();
        }
        prop_assert_eq!(power.amax(), 0.0);
    }

    #[test]
    fn dimension_law(n_max in 2usize..12, pick in 0usize..100) {
        let plant = common::smib_plant(0.02);
        let n = 2 + pick % (n_max - 1);
        let a = closed_loop_matrix(&plant, &Mat::from_element(1, 1, 0.06), n, n_max).unwrap();
        prop_assert_eq!(a.shape(), (2 + n_max, 2 + n_max));
    }

    #[test]
    fn closed_loop_matches_history_buffer(
        gain in -0.2..0.2f64,
        n_max in 2usize..8,
        pick in 0usize..100,
        x0 in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let plant = common::smib_plant(0.02);
        let k = Mat::from_element(1, 1, gain);
        let n = 2 + pick % (n_max - 1);
        let system = delaychain::enumerate_switching_states(&plant, &k, 2, n_max).unwrap();
        let mut full = vec![0.0; system.dim()];
        full[..2].copy_from_slice(&x0);
        let traj = timesim::simulate_switched(&system, &DelaySequence::constant(n, 200), &full, &[]).unwrap();
        let oracle = common::history_buffer_sim(&plant, &k, n, &x0, 200);
        // Arbitrary gains include unstable loops, so the tolerance scales with the state.
        for (a, b) in traj.states.iter().zip(&oracle) {
            let tol = 1e-9 * b[0].abs().max(b[1].abs()).max(1.0);
            prop_assert!((a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn zero_gain_spectrum_is_plant_plus_zeros() {
    let plant = common::smib_plant(0.02);
    let n_max = 5;
    let a = closed_loop_matrix(&plant, &Mat::zeros(1, 1), 3, n_max).unwrap();
    let mut eigs = common::eigs(&a);
    eigs.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    let plant_eigs = common::eigs(plant.a_p());
    for z in &plant_eigs {
        assert!(eigs[..2].iter().any(|e| (e - z).norm() < 1e-12));
    }
    // A nilpotent Jordan block of size n_max perturbs zero eigenvalues to ~eps^(1/n_max).
    assert!(eigs[2..].iter().all(|e| e.norm() < 1e-2), "{eigs:?}");
    assert_eq!(eigs.len(), 2 + n_max);
}

#[test]
fn multichannel_chain_replicates_per_channel() {
    // Two outputs, one input: gain is 1x2 and the chain has two blocks.
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -112.5, -0.628]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, -62.83]);
    let c = DMatrix::<f64>::identity(2, 2);
    let ct = CtStateSpace::new(a, b, c, DMatrix::zeros(2, 1)).unwrap();
    let plant = ssmodel::discretize_trapezoidal(&ct, 0.02).unwrap();
    let k = DMatrix::from_row_slice(1, 2, &[0.0, 0.06]);
    let n_max = 4;
    let a_c = closed_loop_matrix(&plant, &k, 3, n_max).unwrap();
    assert_eq!(a_c.nrows(), 2 + 2 * n_max);
    let x0 = [0.1, -0.2];
    let mut full = DVector::zeros(a_c.nrows());
    full[0] = x0[0];
    full[1] = x0[1];
    let oracle = common::history_buffer_sim(&plant, &k, 3, &x0, 300);
    let mut x = full;
    for row in oracle.iter().skip(1) {
        x = &a_c * x;
        assert!((x[0] - row[0]).abs() < 1e-9 && (x[1] - row[1]).abs() < 1e-9);
    }
}

#[test]
fn rejects_unit_delay_and_feedthrough() {
    let plant = common::smib_plant(0.02);
    assert!(matches!(
        closed_loop_matrix(&plant, &Mat::from_element(1, 1, 0.06), 1, 3),
        Err(wadc_core::Error::DelayTooSmall(1))
    ));
    let smib = ssmodel::build_smib();
    let ct = CtStateSpace::new(smib.a().clone(), smib.b().clone(), smib.c().clone(), Mat::from_element(1, 1, 0.5))
        .unwrap();
    let plant = ssmodel::discretize_trapezoidal(&ct, 0.02).unwrap();
    assert!(matches!(
        closed_loop_matrix(&plant, &Mat::from_element(1, 1, 0.06), 2, 3),
        Err(wadc_core::Error::FeedthroughUnsupported)
    ));
}
