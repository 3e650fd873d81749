//! Swing-mode tracking and the eigenvalue-product stability/damping analysis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::delaychain::{self, SwitchedSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, CVec, Mat};
use crate::ssmodel::{self, ComplexEig, Domain, DtStateSpace};

/// Any eigenvalue modulus above this counts as not Schur stable.
pub const SCHUR_LIMIT: f64 = 1.0 - 1e-9;

/// Default eigenvector-constancy tolerance in radians.
pub const DEFAULT_CONSTANCY_TOL: f64 = 0.05;

const AMBIGUITY_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedMode {
    pub mode: ComplexEig,
    pub score: f64,
    pub runner_up: Option<f64>,
    pub ambiguous: bool,
}

/// Select the eigenpair of `a_c` (Im > 0) best aligned with `reference`,
/// whose vector is zero-padded to the dimension of `a_c`.
pub fn track_swing_mode(a_c: &Mat, reference: &ComplexEig) -> Result<TrackedMode> {
    let dim = a_c.nrows();
    if reference.vector.len() > dim {
        return Err(Error::DimensionMismatch(format!(
            "reference of length {} for a {dim}-state matrix",
            reference.vector.len()
        )));
    }
    let padded = delaychain::padded_reference(reference, dim);
    let mut scored: Vec<(f64, Complex64, CVec)> = linalg::upper_complex_eigenpairs(a_c)?
        .into_iter()
        .map(|(mu, v)| (linalg::alignment(&v, &padded.vector), mu, v))
        .collect();
    if scored.is_empty() {
        return Err(Error::NoComplexMode);
    }
    scored.sort_by(|x, y| y.0.total_cmp(&x.0));
    let runner_up = scored.get(1).map(|s| s.0);
    let (score, mu, v) = scored.swap_remove(0);
    Ok(TrackedMode {
        mode: ComplexEig::new(mu, v, Domain::Dt),
        score,
        runner_up,
        ambiguous: runner_up.is_some_and(|r| score - r < AMBIGUITY_GAP),
    })
}

/// One root-locus point: the swing mode at a fixed delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePoint {
    pub n: usize,
    pub mu: Complex64,
    pub lambda: Complex64,
    pub zeta: f64,
    pub vector: CVec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrack {
    pub points: Vec<ModePoint>,
    /// Delays where continuation from the neighbouring state picked a
    /// different eigenpair than tracking from the open-loop reference.
    pub continuation_breaks: Vec<usize>,
}

pub fn mode_track(system: &SwitchedSystem) -> Result<ModeTrack> {
    let points = system
        .states
        .iter()
        .map(|s| {
            let lambda = ssmodel::dt_to_ct_eig(s.mu(), system.h)?;
            Ok(ModePoint {
                n: s.n,
                mu: s.mu(),
                lambda,
                zeta: s.damping_ct,
                vector: s.swing_mode.vector.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModeTrack {
        points,
        continuation_breaks: continuation_breaks(system)?,
    })
}

fn continuation_breaks(system: &SwitchedSystem) -> Result<Vec<usize>> {
    let mut breaks = Vec::new();
    for pair in system.states.windows(2) {
        let cont = track_swing_mode(&pair[1].a_c, &pair[0].swing_mode)?;
        let tol = 1e-8 * (1.0 + pair[1].mu().norm());
        if (cont.mode.value - pair[1].mu()).norm() > tol || cont.ambiguous {
            breaks.push(pair[1].n);
        }
    }
    Ok(breaks)
}

/// CT swing mode per fixed delay `n_min..=n_max`.
pub fn root_locus(plant: &DtStateSpace, gain: &Mat, n_min: usize, n_max: usize) -> Result<ModeTrack> {
    let system = delaychain::enumerate_switching_states(plant, gain, n_min, n_max)?;
    mode_track(&system)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstancyReport {
    pub max_misalignment: f64,
    /// (delay, principal angle in radians) of the plant part of each swing eigenvector.
    pub angles: Vec<(usize, f64)>,
    /// h |Im lambda| / (2 pi): sampling step over swing period.
    pub h_vs_period: f64,
    pub open_loop_damping: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn check_eigenvector_constancy(system: &SwitchedSystem, tolerance: f64) -> Result<ConstancyReport> {
    let np = system.plant.n_states();
    let reference = &system.reference_swing.vector;
    let angles: Vec<(usize, f64)> = system
        .states
        .iter()
        .map(|s| {
            let plant_part: CVec = s.swing_mode.vector.rows(0, np).into_owned();
            (s.n, linalg::principal_angle(&plant_part, reference))
        })
        .collect();
    let max_misalignment = if angles.len() <= 1 {
        // A single state is trivially consistent with itself.
        0.0
    } else {
        angles.iter().map(|a| a.1).fold(0.0, f64::max)
    };
    let lambda = ssmodel::dt_to_ct_eig(system.reference_swing.value, system.h)?;
    Ok(ConstancyReport {
        max_misalignment,
        angles,
        h_vs_period: system.h * lambda.im.abs() / (2.0 * std::f64::consts::PI),
        open_loop_damping: ssmodel::damping_ratio(lambda)?,
        tolerance,
        passed: max_misalignment <= tolerance,
    })
}

/// Product of swing modes and the effective damping `|prod|^(1/n)`.
pub fn mu_product(mus: &[Complex64]) -> Result<(Complex64, f64)> {
    if mus.is_empty() {
        return Err(Error::InvalidArgument("empty mode list".into()));
    }
    let total = mus.iter().fold(Complex64::new(1.0, 0.0), |acc, m| acc * m);
    // Mean of log-moduli avoids underflow for long sequences.
    let d_e = (mus.iter().map(|m| m.norm().ln()).sum::<f64>() / mus.len() as f64).exp();
    Ok((total, d_e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DampingBounds {
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub mu_abs_min: f64,
    pub mu_abs_max: f64,
    pub argmin_delay: usize,
    pub argmax_delay: usize,
}

pub fn damping_bounds(system: &SwitchedSystem) -> DampingBounds {
    let states = &system.states;
    let min = states
        .iter()
        .min_by(|a, b| a.damping_ct.total_cmp(&b.damping_ct))
        .expect("switched system has states");
    let max = states
        .iter()
        .max_by(|a, b| a.damping_ct.total_cmp(&b.damping_ct))
        .expect("switched system has states");
    let mods = states.iter().map(|s| s.mu().norm());
    DampingBounds {
        zeta_min: min.damping_ct,
        zeta_max: max.damping_ct,
        mu_abs_min: mods.clone().fold(f64::INFINITY, f64::min),
        mu_abs_max: mods.fold(0.0, f64::max),
        argmin_delay: min.n,
        argmax_delay: max.n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable { bounds: DampingBounds },
    Unstable { witness_delay: usize, spectral_radius: f64 },
    Undetermined { reason: String },
}

pub fn simplified_verdict(system: &SwitchedSystem, constancy_tol: f64) -> Result<StabilityVerdict> {
    if let Some(bad) = system.states.iter().find(|s| s.spectral_radius > SCHUR_LIMIT) {
        return Ok(StabilityVerdict::Unstable {
            witness_delay: bad.n,
            spectral_radius: bad.spectral_radius,
        });
    }
    let report = check_eigenvector_constancy(system, constancy_tol)?;
    if !report.passed {
        return Ok(StabilityVerdict::Undetermined {
            reason: format!(
                "swing eigenvector misalignment {:.4} rad exceeds {:.4} rad",
                report.max_misalignment, constancy_tol
            ),
        });
    }
    Ok(StabilityVerdict::Stable {
        bounds: damping_bounds(system),
    })
}

/// Largest fixed delay, scanning upward from `n_start`, whose closed loop is Schur stable.
pub fn delay_margin(plant: &DtStateSpace, gain: &Mat, n_start: usize, n_cap: usize) -> Result<usize> {
    if n_start < 2 {
        return Err(Error::DelayTooSmall(n_start));
    }
    if n_cap < n_start {
        return Err(Error::InvalidRange {
            n_min: n_start,
            n_max: n_cap,
        });
    }
    let mut margin = None;
    for n in n_start..=n_cap {
        let a_c = delaychain::closed_loop_matrix(plant, gain, n, n)?;
        if linalg::spectral_radius(&a_c)? > SCHUR_LIMIT {
            break;
        }
        margin = Some(n);
    }
    margin.ok_or(Error::NoStableDelay(n_start))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub n_start: usize,
    pub input_gain: f64,
    pub output_gain: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            n_start: 2,
            input_gain: 1.0,
            output_gain: 1.0,
        }
    }
}

/// Scalar gain for the modal surrogate of `lambda` whose delay margin is
/// `target` steps. Returns the midpoint of the gain interval achieving it.
pub fn calibrate_surrogate_gain(
    lambda: Complex64,
    h: f64,
    target: usize,
    opts: CalibrationOptions,
) -> Result<f64> {
    if target < opts.n_start {
        return Err(Error::CalibrationFailed(format!(
            "target {target} below n_start {}",
            opts.n_start
        )));
    }
    let ct = ssmodel::build_modal_surrogate(lambda, opts.input_gain, opts.output_gain)?;
    let plant = ssmodel::discretize_trapezoidal(&ct, h)?;
    let n_cap = 2 * target + 10;
    let margin = |g: f64| -> Result<i64> {
        match delay_margin(&plant, &Mat::from_element(1, 1, g), opts.n_start, n_cap) {
            Ok(m) => Ok(m as i64),
            Err(Error::NoStableDelay(_)) => Ok(opts.n_start as i64 - 1),
            Err(e) => Err(e),
        }
    };

    // Negative feedback direction: the sign that adds damping at the shortest delay.
    let probe = 1e-6;
    let zeta_at = |g: f64| -> Result<f64> {
        let s = delaychain::assemble_closed_loop(&plant, &Mat::from_element(1, 1, g), opts.n_start, opts.n_start)?;
        Ok(s.damping_ct)
    };
    let sign = if zeta_at(probe)? >= zeta_at(-probe)? { 1.0 } else { -1.0 };

    let target = target as i64;
    let f0 = margin(0.0)?;
    if f0 == target {
        return Ok(0.0);
    }
    let increasing = f0 < target;
    // reached(g, t): the margin has crossed to t when moving away from g = 0.
    let reached = |g: f64, t: i64| -> Result<bool> {
        let m = margin(sign * g)?;
        Ok(if increasing { m >= t } else { m <= t })
    };
    let beyond = if increasing { target + 1 } else { target - 1 };

    let mut hi = 1e-6;
    let mut lo = 0.0;
    let mut found = false;
    for _ in 0..200 {
        if reached(hi, target)? {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Err(Error::CalibrationFailed(format!(
            "margin never reaches {target} (margin at g = 0 is {f0})"
        )));
    }
    let first = bisect(lo, hi, |g| reached(g, target))?;

    let mut far = first.max(1e-12);
    let mut found = false;
    for _ in 0..200 {
        if reached(far, beyond)? {
            found = true;
            break;
        }
        far *= 2.0;
    }
    let last = if found {
        bisect(first, far, |g| reached(g, beyond))?
    } else {
        far
    };
    let g = sign * 0.5 * (first + last);
    let achieved = margin(g)?;
    if achieved != target {
        return Err(Error::CalibrationFailed(format!(
            "margin jumps past {target} (got {achieved} at gain {g:.6e})"
        )));
    }
    Ok(g)
}

/// Boundary of a monotone predicate on [lo, hi] with pred(lo) = false,
/// pred(hi) = true. Returns a point just past the transition.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Exact swing eigenvalue of the product matrix vs. the product of the
/// per-state swing modes over one delay sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductCheck {
    pub exact_modulus: f64,
    pub predicted_modulus: f64,
    pub relative_error: f64,
}

pub fn product_approximation(system: &SwitchedSystem, delays: &[usize]) -> Result<ProductCheck> {
    if delays.is_empty() {
        return Err(Error::InvalidArgument("empty delay sequence".into()));
    }
    let dim = system.dim();
    let mut total = DMatrix::<f64>::identity(dim, dim);
    let mut mus = Vec::with_capacity(delays.len());
    for &n in delays {
        let s = system.state(n).ok_or(Error::DelayOutOfFamily(n))?;
        total = &s.a_c * total;
        mus.push(s.mu());
    }
    let reference = &system.states[0].swing_mode.vector;
    let (_, exact) = linalg::eigenpairs(&total)?
        .into_iter()
        .map(|(z, v)| (linalg::alignment(&v, reference), z))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(Error::NoComplexMode)?;
    let predicted = mus.iter().map(|m| m.norm()).product::<f64>();
    let exact_modulus = exact.norm();
    Ok(ProductCheck {
        exact_modulus,
        predicted_modulus: predicted,
        relative_error: (exact_modulus - predicted).abs() / predicted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssmodel::{build_smib, discretize_trapezoidal};

    fn smib_system(gain: f64) -> SwitchedSystem {
        let plant = discretize_trapezoidal(&build_smib(), 0.02).unwrap();
        delaychain::enumerate_switching_states(&plant, &Mat::from_element(1, 1, gain), 2, 3).unwrap()
    }

    #[test]
    fn tracks_smib_closed_loop_mode() {
        let sys = smib_system(0.06);
        let mu = sys.states[0].mu();
        assert!((mu - Complex64::new(0.93, 0.22)).norm() < 0.01, "{mu}");
        assert!(!sys.states[0].ambiguous_tracking);
    }

    #[test]
    fn zero_gain_tracks_open_loop_mode() {
        let sys = smib_system(0.0);
        for s in &sys.states {
            assert!((s.mu() - sys.reference_swing.value).norm() < 1e-12);
        }
        assert!((sys.reference_swing.value - Complex64::new(0.97, 0.21)).norm() < 0.005);
    }

    #[test]
    fn tracks_embedded_rotation() {
        let th: f64 = 0.4;
        let mut a = Mat::zeros(4, 4);
        a[(0, 0)] = 0.5;
        a[(1, 1)] = 0.8 * th.cos();
        a[(1, 2)] = -0.8 * th.sin();
        a[(2, 1)] = 0.8 * th.sin();
        a[(2, 2)] = 0.8 * th.cos();
        a[(3, 3)] = -0.3;
        // Second rotation, orthogonal to the reference.
        let reference = ComplexEig::new(
            Complex64::new(0.0, 0.0),
            CVec::from_vec(vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, -1.0),
            ]),
            Domain::Dt,
        );
        let t = track_swing_mode(&a, &reference).unwrap();
        assert!((t.mode.value - Complex64::from_polar(0.8, th)).norm() < 1e-12);
        assert!(t.score > 0.999);
        assert!(matches!(
            track_swing_mode(&Mat::identity(3, 3), &reference),
            Err(Error::NoComplexMode)
        ));
    }

    #[test]
    fn mu_product_equal_factors() {
        let (total, d_e) = mu_product(&[Complex64::new(0.9, 0.0); 2]).unwrap();
        assert!((total - Complex64::new(0.81, 0.0)).norm() < 1e-15);
        assert!((d_e - 0.9).abs() < 1e-15);
        assert!(mu_product(&[]).is_err());
    }

    #[test]
    fn single_state_constancy_is_zero() {
        let plant = discretize_trapezoidal(&build_smib(), 0.02).unwrap();
        let sys = delaychain::enumerate_switching_states(&plant, &Mat::from_element(1, 1, 0.06), 2, 2).unwrap();
        let r = check_eigenvector_constancy(&sys, 0.05).unwrap();
        assert_eq!(r.max_misalignment, 0.0);
        let b = damping_bounds(&sys);
        assert_eq!(b.zeta_min, b.zeta_max);
        assert!(matches!(simplified_verdict(&sys, 0.05).unwrap(), StabilityVerdict::Stable { .. }));
    }

    #[test]
    fn smib_pair_is_stable_with_bounds() {
        let sys = smib_system(0.06);
        let r = check_eigenvector_constancy(&sys, 0.05).unwrap();
        assert!(r.max_misalignment < 0.05, "{}", r.max_misalignment);
        match simplified_verdict(&sys, 0.05).unwrap() {
            StabilityVerdict::Stable { bounds } => {
                let z: Vec<f64> = sys.states.iter().map(|s| s.damping_ct).collect();
                assert_eq!(bounds.zeta_min, z.iter().copied().fold(f64::INFINITY, f64::min));
                assert_eq!(bounds.zeta_max, z.iter().copied().fold(0.0, f64::max));
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn margins_trivial_cases() {
        let plant = discretize_trapezoidal(&build_smib(), 0.02).unwrap();
        assert_eq!(delay_margin(&plant, &Mat::zeros(1, 1), 2, 30).unwrap(), 30);
        let unstable = ssmodel::build_modal_surrogate(Complex64::new(0.007, 4.2), 1.0, 1.0).unwrap();
        let up = discretize_trapezoidal(&unstable, 1.0 / 60.0).unwrap();
        assert_eq!(delay_margin(&up, &Mat::zeros(1, 1), 4, 30), Err(Error::NoStableDelay(4)));
        assert!(delay_margin(&plant, &Mat::zeros(1, 1), 1, 30).is_err());
    }
}
