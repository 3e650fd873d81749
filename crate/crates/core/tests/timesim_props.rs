mod common;

use proptest::prelude::*;
use wadc_core::delaychain;
use wadc_core::linalg::Mat;
use wadc_core::pdcsim::DelaySequence;
use wadc_core::ssmodel;
use wadc_core::stability;
use wadc_core::timesim::{self, DelayDistribution, MonteCarlo};

fn kicked_run(system: &delaychain::SwitchedSystem, delays: &DelaySequence) -> timesim::Trajectory {
    let kick = timesim::fault_disturbance(system, 0.1, 0).unwrap();
    timesim::simulate_switched(system, delays, &vec![0.0; system.dim()], &[kick]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identical_inputs_give_bit_identical_trajectories(seed in any::<u64>()) {
        let system = common::smib_family(2, 6);
        let a = timesim::random_delay_sequence(seed, 2, 6, 300, &DelayDistribution::Uniform).unwrap();
        let b = timesim::random_delay_sequence(seed, 2, 6, 300, &DelayDistribution::Uniform).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.entries.iter().all(|n| (2..=6).contains(n)));
        prop_assert_eq!(kicked_run(&system, &a), kicked_run(&system, &b));
    }

    #[test]
    fn zero_gain_fit_matches_open_loop(seed in any::<u64>()) {
        let plant = common::smib_plant(0.02);
        let system = delaychain::enumerate_switching_states(&plant, &Mat::zeros(1, 1), 2, 6).unwrap();
        let open = ssmodel::damping_ratio(ssmodel::dt_to_ct_eig(plant.swing_mode().unwrap().value, 0.02).unwrap()).unwrap();
        let delays = timesim::random_delay_sequence(seed, 2, 6, 600, &DelayDistribution::Uniform).unwrap();
        let fit = timesim::estimate_damping_peak_fit(&kicked_run(&system, &delays), 0, Some(10..601)).unwrap();
        prop_assert!((fit.zeta - open).abs() <= 0.05 * open, "{} vs {open}", fit.zeta);
    }
}

#[test]
fn weighted_distribution_respects_zero_weights() {
    let dist = DelayDistribution::Weighted(vec![1.0, 0.0, 3.0]);
    let seq = timesim::random_delay_sequence(3, 4, 6, 2000, &dist).unwrap();
    assert!(!seq.entries.contains(&5));
    let sixes = seq.entries.iter().filter(|&&n| n == 6).count() as f64 / 2000.0;
    assert!((sixes - 0.75).abs() < 0.05);
    assert!(timesim::random_delay_sequence(3, 4, 6, 10, &DelayDistribution::Weighted(vec![1.0])).is_err());
}

#[test]
fn quiet_start_stays_at_zero() {
    let system = common::smib_family(2, 3);
    let traj = timesim::simulate_switched(&system, &DelaySequence::constant(2, 100), &vec![0.0; system.dim()], &[])
        .unwrap();
    assert_eq!(traj.len(), 100);
    assert!(traj.output(0).iter().all(|&y| y == 0.0));
}

#[test]
fn smib_containment_over_twenty_seeds() {
    let system = common::smib_family(2, 6);
    let bounds = stability::damping_bounds(&system);
    let setup = MonteCarlo {
        length: 600,
        distribution: DelayDistribution::Uniform,
        x0: vec![0.0; system.dim()],
        events: vec![timesim::fault_disturbance(&system, 0.1, 0).unwrap()],
        schedule: Default::default(),
        channel: 0,
        window: Some(30..601),
    };
    let seeds: Vec<u64> = (0..20).collect();
    let runs = timesim::monte_carlo(&system, &seeds, &setup).unwrap();
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), seeds);
    for r in &runs {
        let z = r.zeta_peak_fit.expect("enough peaks");
        assert!(z >= bounds.zeta_min - 0.005 && z <= bounds.zeta_max + 0.005, "seed {}: {z} vs {bounds:?}", r.seed);
        assert!(r.zeta_eig_product >= bounds.zeta_min - 1e-12 && r.zeta_eig_product <= bounds.zeta_max + 1e-12);
    }
    // Parallel runs reproduce sequential ones.
    assert_eq!(runs, timesim::monte_carlo(&system, &seeds, &setup).unwrap());
}

#[test]
fn constant_delay_estimators_agree() {
    let system = common::smib_family(2, 6);
    for n in 2..=6 {
        let delays = DelaySequence::constant(n, 600);
        let eig = timesim::estimate_damping_eig_product(&system, &delays).unwrap().zeta;
        assert!((eig - system.state(n).unwrap().damping_ct).abs() < 1e-12);
        let fit = timesim::estimate_damping_peak_fit(&kicked_run(&system, &delays), 0, Some(30..601)).unwrap().zeta;
        assert!((fit - eig).abs() <= 0.15 * eig, "n = {n}: {fit} vs {eig}");
    }
}

#[test]
fn surrogate_open_loop_grows_and_controller_recovers() {
    let gain = common::surrogate_gain();
    let system = common::surrogate_family(gain, 4, 18);
    let delays = timesim::random_delay_sequence(1, 4, 18, 3000, &DelayDistribution::Uniform).unwrap();
    let kick = timesim::fault_disturbance(&system, 0.1, 60).unwrap();
    let x0 = vec![0.0; system.dim()];

    let off = timesim::simulate_scheduled(&system, &delays, &x0, std::slice::from_ref(&kick), timesim::controller_enable_schedule(usize::MAX))
        .unwrap();
    let zeta_off = timesim::estimate_damping_peak_fit(&off, 0, Some(60..3001)).unwrap().zeta;
    assert!(zeta_off < 0.0, "{zeta_off}");
    let y = off.output(0);
    let early = y[60..400].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let late = y[2600..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(late > early);

    let on = timesim::simulate_scheduled(&system, &delays, &x0, &[kick], timesim::controller_enable_schedule(480)).unwrap();
    let zeta_on = timesim::estimate_damping_peak_fit(&on, 0, Some(500..3001)).unwrap().zeta;
    assert!(zeta_on > 0.0, "{zeta_on}");
}

#[test]
fn trajectory_csv_layout() {
    let system = common::smib_family(2, 3);
    let traj = kicked_run(&system, &DelaySequence::constant(3, 10));
    let mut buf = Vec::new();
    timesim::write_trajectory_csv(&traj, 2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("step,time,delay_n,y0"));
    assert_eq!(lines.count(), 11);
}

#[test]
fn delays_outside_family_are_rejected() {
    let system = common::smib_family(2, 3);
    let bad = DelaySequence { entries: vec![2, 5], n_min: 2, n_max: 5, seed: None };
    assert!(timesim::simulate_switched(&system, &bad, &vec![0.0; system.dim()], &[]).is_err());
    assert!(timesim::estimate_damping_eig_product(&system, &bad).is_err());
}
