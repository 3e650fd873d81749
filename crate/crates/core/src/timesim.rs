//! Time-domain runs of the switched closed loop and damping estimation from
//! the resulting trajectories.

use std::io::Write;
use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delaychain::{padded_reference, SwitchedSystem};
use crate::error::{Error, Result};
use crate::pdcsim::DelaySequence;
use crate::ssmodel;
use crate::stability;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayDistribution {
    #[default]
    Uniform,
    /// Relative weights for `n_min, n_min + 1, ..., n_max`.
    Weighted(Vec<f64>),
}

pub fn random_delay_sequence(
    seed: u64,
    n_min: usize,
    n_max: usize,
    length: usize,
    distribution: &DelayDistribution,
) -> Result<DelaySequence> {
    if n_min < 2 || n_min > n_max {
        return Err(Error::InvalidRange { n_min, n_max });
    }
    if length == 0 {
        return Err(Error::InvalidArgument("delay sequence length must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = match distribution {
        DelayDistribution::Uniform => {
            let dist = Uniform::new_inclusive(n_min, n_max)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..length).map(|_| dist.sample(&mut rng)).collect()
        }
        DelayDistribution::Weighted(w) => {
            if w.len() != n_max - n_min + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} delays",
                    w.len(),
                    n_max - n_min + 1
                )));
            }
            let dist = WeightedIndex::new(w).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..length).map(|_| n_min + dist.sample(&mut rng)).collect()
        }
    };
    Ok(DelaySequence {
        entries,
        n_min,
        n_max,
        seed: Some(seed),
    })
}

/// State impulse added at `step`, before that step's propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub step: usize,
    pub vector: Vec<f64>,
}

/// Impulse along the real part of the open-loop swing eigenvector.
pub fn fault_disturbance(system: &SwitchedSystem, magnitude: f64, step: usize) -> Result<Disturbance> {
    if !magnitude.is_finite() {
        return Err(Error::NonFiniteEntry(format!("fault magnitude {magnitude}")));
    }
    let v = padded_reference(&system.reference_swing, system.dim()).vector;
    let re: DVector<f64> = v.map(|z| z.re);
    let norm = re.norm();
    let scale = if norm > 0.0 { magnitude / norm } else { 0.0 };
    Ok(Disturbance {
        step,
        vector: re.iter().map(|x| x * scale).collect(),
    })
}

/// Steps before `off_until_step` use the controller-disabled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ControllerSchedule {
    pub off_until_step: usize,
}

pub fn controller_enable_schedule(off_until_step: usize) -> ControllerSchedule {
    ControllerSchedule { off_until_step }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub h: f64,
    /// `x[0..=len]`; impulses are included at their step.
    pub states: Vec<Vec<f64>>,
    /// Plant outputs `C x_p` for each recorded state.
    pub outputs: Vec<Vec<f64>>,
    pub delays: DelaySequence,
    pub events: Vec<Disturbance>,
    pub schedule: ControllerSchedule,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn output(&self, channel: usize) -> Vec<f64> {
        self.outputs.iter().map(|y| y[channel]).collect()
    }
}

pub fn simulate_switched(
    system: &SwitchedSystem,
    delays: &DelaySequence,
    x0: &[f64],
    events: &[Disturbance],
) -> Result<Trajectory> {
    simulate_scheduled(system, delays, x0, events, ControllerSchedule::default())
}

pub fn simulate_scheduled(
    system: &SwitchedSystem,
    delays: &DelaySequence,
    x0: &[f64],
    events: &[Disturbance],
    schedule: ControllerSchedule,
) -> Result<Trajectory> {
    let dim = system.dim();
    if x0.len() != dim {
        return Err(Error::DimensionMismatch(format!("x0 has {} entries, system {dim}", x0.len())));
    }
    if let Some(e) = events.iter().find(|e| e.vector.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "disturbance at step {} has {} entries",
            e.step,
            e.vector.len()
        )));
    }
    let matrices = delays
        .entries
        .iter()
        .map(|&n| system.state(n).map(|s| &s.a_c).ok_or(Error::DelayOutOfFamily(n)))
        .collect::<Result<Vec<_>>>()?;

    let c = system.plant.c();
    let np = system.plant.n_states();
    let observe = |x: &DVector<f64>| -> Vec<f64> { (c * x.rows(0, np)).iter().copied().collect() };
    let kick = |x: &mut DVector<f64>, step: usize| {
        for e in events.iter().filter(|e| e.step == step) {
            x.iter_mut().zip(&e.vector).for_each(|(xi, v)| *xi += v);
        }
    };

    let mut x = DVector::from_column_slice(x0);
    let mut states = Vec::with_capacity(matrices.len() + 1);
    let mut outputs = Vec::with_capacity(matrices.len() + 1);
    for (k, a) in matrices.iter().enumerate() {
        kick(&mut x, k);
        states.push(x.iter().copied().collect());
        outputs.push(observe(&x));
        x = if k < schedule.off_until_step {
            &system.open_loop * &x
        } else {
            *a * &x
        };
    }
    kick(&mut x, matrices.len());
    states.push(x.iter().copied().collect());
    outputs.push(observe(&x));
    Ok(Trajectory {
        h: system.h,
        states,
        outputs,
        delays: delays.clone(),
        events: events.to_vec(),
        schedule,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    EigProduct,
    PeakFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DampingEstimate {
    pub zeta: f64,
    pub method: EstimateMethod,
    pub window: Range<usize>,
}

/// Damping implied by the geometric-mean swing mode over the sequence.
///
/// The mean modulus `d_e` and mean angle define `mu_e`, which goes through the
/// same bilinear inverse as the per-state modes, so a constant delay returns
/// that state's damping exactly.
pub fn estimate_damping_eig_product(system: &SwitchedSystem, delays: &DelaySequence) -> Result<DampingEstimate> {
    let mus = delays
        .entries
        .iter()
        .map(|&n| system.state(n).map(|s| s.mu()).ok_or(Error::DelayOutOfFamily(n)))
        .collect::<Result<Vec<_>>>()?;
    let (_, d_e) = stability::mu_product(&mus)?;
    let angle = mus.iter().map(|m| m.arg()).sum::<f64>() / mus.len() as f64;
    let mu_e = Complex64::from_polar(d_e, angle);
    let zeta = ssmodel::damping_ratio(ssmodel::dt_to_ct_eig(mu_e, system.h)?)?;
    Ok(DampingEstimate {
        zeta,
        method: EstimateMethod::EigProduct,
        window: 0..delays.len(),
    })
}

/// Log-linear fit through successive |peak| values of one output.
pub fn estimate_damping_peak_fit(
    traj: &Trajectory,
    channel: usize,
    window: Option<Range<usize>>,
) -> Result<DampingEstimate> {
    let total = traj.outputs.len();
    if traj.outputs.first().is_some_and(|y| channel >= y.len()) {
        return Err(Error::InvalidArgument(format!("output channel {channel} out of range")));
    }
    let window = window.unwrap_or(0..total);
    if window.start >= window.end || window.end > total {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} outside 0..{total}"
        )));
    }
    let y: Vec<f64> = traj.outputs[window.clone()].iter().map(|o| o[channel]).collect();
    let zeta = peak_fit_zeta(&y, traj.h)?;
    Ok(DampingEstimate {
        zeta,
        method: EstimateMethod::PeakFit,
        window,
    })
}

/// Zeta of a sampled, lightly damped single-mode signal.
pub fn peak_fit_zeta(y: &[f64], h: f64) -> Result<f64> {
    let crossings: Vec<f64> = y
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[0] < 0.0 && w[1] >= 0.0) || (w[0] >= 0.0 && w[1] < 0.0))
        .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
        .collect();
    if crossings.len() < 2 {
        return Err(Error::TooFewPeaks(0));
    }
    let half = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
    let guard = half / 2.0;

    let mag: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for i in 1..mag.len().saturating_sub(1) {
        let (a, b, c) = (mag[i - 1], mag[i], mag[i + 1]);
        if !(b >= a && b > c) || b == 0.0 {
            continue;
        }
        let curv = a - 2.0 * b + c;
        let delta = if curv != 0.0 { 0.5 * (a - c) / curv } else { 0.0 };
        let at = i as f64 + delta;
        let value = b - 0.25 * (a - c) * delta;
        match peaks.last_mut() {
            Some(last) if at - last.0 < guard => {
                if value > last.1 {
                    *last = (at, value);
                }
            }
            _ => peaks.push((at, value)),
        }
    }
    if peaks.len() < 4 {
        return Err(Error::TooFewPeaks(peaks.len()));
    }
    let times: Vec<f64> = peaks.iter().map(|p| p.0 * h).collect();
    let logs: Vec<f64> = peaks.iter().map(|p| p.1.ln()).collect();
    let index: Vec<f64> = (0..peaks.len()).map(|k| k as f64).collect();
    let sigma = -slope(&times, &logs);
    let omega = std::f64::consts::PI / slope(&index, &times);
    Ok(sigma / (sigma * sigma + omega * omega).sqrt())
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Settings shared by every run of a seeded batch.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub length: usize,
    pub distribution: DelayDistribution,
    pub x0: Vec<f64>,
    pub events: Vec<Disturbance>,
    pub schedule: ControllerSchedule,
    pub channel: usize,
    pub window: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub zeta_peak_fit: Option<f64>,
    pub peak_fit_error: Option<String>,
    pub zeta_eig_product: f64,
}

/// One run per seed, in parallel; results come back in seed order.
pub fn monte_carlo(system: &SwitchedSystem, seeds: &[u64], setup: &MonteCarlo) -> Result<Vec<RunSummary>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let delays = random_delay_sequence(
                seed,
                system.n_min(),
                system.n_max_delay(),
                setup.length,
                &setup.distribution,
            )?;
            let traj = simulate_scheduled(system, &delays, &setup.x0, &setup.events, setup.schedule)?;
            let fit = estimate_damping_peak_fit(&traj, setup.channel, setup.window.clone());
            let eig = estimate_damping_eig_product(system, &delays)?;
            Ok(RunSummary {
                seed,
                zeta_peak_fit: fit.as_ref().ok().map(|e| e.zeta),
                peak_fit_error: fit.err().map(|e| e.to_string()),
                zeta_eig_product: eig.zeta,
            })
        })
        .collect()
}

/// CSV: step, time, delay_n, outputs, then the plant states.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, plant_states: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = traj.outputs.first().map_or(0, Vec::len);
    let mut header = vec!["step".to_string(), "time".into(), "delay_n".into()];
    header.extend((0..p).map(|i| format!("y{i}")));
    header.extend((0..plant_states).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (k, (x, y)) in traj.states.iter().zip(&traj.outputs).enumerate() {
        let mut row = vec![
            k.to_string(),
            (k as f64 * traj.h).to_string(),
            traj.delays.entries.get(k).map_or(String::new(), |n| n.to_string()),
        ];
        row.extend(y.iter().map(|v| v.to_string()));
        row.extend(x.iter().take(plant_states).map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
