//! Shift-register delay realization and closed-loop switching states.
//!
//! Chain state per measurement channel is stacked as `[d_nmax; ...; d_2; d_1]`
//! where `d_k[K]` holds `y[K-k]`. With the trapezoidal plant input
//! `B_p (u[K] + u[K+1])` and `u[K] = y[K-n]`, the loop closes through
//! `d_n[K] + d_{n-1}[K]`, which is why delays below two steps are rejected.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::ssmodel::{self, ComplexEig, DtStateSpace};
use crate::stability;

#[derive(Debug, Clone, PartialEq)]
pub struct DelayChain {
    n_max: usize,
    channels: usize,
    a_d: Mat,
    b_d: Mat,
}

impl DelayChain {
    pub fn n_max(&self) -> usize {
        self.n_max
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn a_d(&self) -> &Mat {
        &self.a_d
    }
    pub fn b_d(&self) -> &Mat {
        &self.b_d
    }

    /// Row of `d_k` for `channel` within the chain block.
    pub fn register(&self, channel: usize, k: usize) -> usize {
        channel * self.n_max + (self.n_max - k)
    }

    /// One shift: `x_d[K+1] = A_d x_d[K] + B_d u_d[K]`.
    pub fn step(&self, state: &[f64], input: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(state);
        let u = nalgebra::DVector::from_column_slice(input);
        (&self.a_d * x + &self.b_d * u).as_slice().to_vec()
    }
}

pub fn build_delay_chain(n_max: usize, channels: usize) -> Result<DelayChain> {
    if n_max < 1 {
        return Err(Error::InvalidDimension(format!("n_max = {n_max}")));
    }
    if channels < 1 {
        return Err(Error::InvalidDimension(format!("channels = {channels}")));
    }
    let dim = n_max * channels;
    let mut a_d = Mat::zeros(dim, dim);
    let mut b_d = Mat::zeros(dim, channels);
    for ch in 0..channels {
        let base = ch * n_max;
        for r in 0..n_max - 1 {
            a_d[(base + r, base + r + 1)] = 1.0;
        }
        b_d[(base + n_max - 1, ch)] = 1.0;
    }
    Ok(DelayChain {
        n_max,
        channels,
        a_d,
        b_d,
    })
}

/// Output row `C_d` picking the register that holds `y[K-n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySelector {
    n: usize,
    c_d: Vec<f64>,
}

impl DelaySelector {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn c_d(&self) -> &[f64] {
        &self.c_d
    }
    pub fn select(&self, chain_state: &[f64]) -> f64 {
        self.c_d.iter().zip(chain_state).map(|(a, x)| a * x).sum()
    }
}

pub fn build_selector(n: usize, n_max: usize) -> Result<DelaySelector> {
    if n < 1 || n > n_max {
        return Err(Error::DelayOutOfRange { n, n_max });
    }
    let mut c_d = vec![0.0; n_max];
    c_d[n_max - n] = 1.0;
    Ok(DelaySelector { n, c_d })
}

/// Closed-loop transition matrix for one fixed delay.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingState {
    pub n: usize,
    pub a_c: Mat,
    pub swing_mode: ComplexEig,
    pub damping_ct: f64,
    /// Largest eigenvalue modulus of `a_c`.
    pub spectral_radius: f64,
    /// Set when the swing eigenpair could not be told apart from a runner-up.
    pub ambiguous_tracking: bool,
}

impl SwitchingState {
    pub fn mu(&self) -> Complex64 {
        self.swing_mode.value
    }
}

pub fn closed_loop_matrix(plant: &DtStateSpace, gain: &Mat, n: usize, n_max: usize) -> Result<Mat> {
    if n < 2 {
        return Err(Error::DelayTooSmall(n));
    }
    if n > n_max {
        return Err(Error::DelayOutOfRange { n, n_max });
    }
    if plant.d().iter().any(|&x| x != 0.0) {
        return Err(Error::FeedthroughUnsupported);
    }
    let (np, m, p) = (plant.n_states(), plant.n_inputs(), plant.n_outputs());
    if gain.nrows() != m || gain.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, plant needs {m}x{p}",
            gain.nrows(),
            gain.ncols()
        )));
    }
    let chain = build_delay_chain(n_max, p)?;
    let dim = np + n_max * p;
    let mut a_c = Mat::zeros(dim, dim);
    a_c.view_mut((0, 0), (np, np)).copy_from(plant.a_p());
    a_c.view_mut((np, np), (n_max * p, n_max * p))
        .copy_from(chain.a_d());
    // Chain input y[K] = C x[K].
    let drive = chain.b_d() * plant.c();
    a_c.view_mut((np, 0), (n_max * p, np)).copy_from(&drive);
    // Plant input B_p * gain * (d_n + d_{n-1}).
    let bk = plant.b_p() * gain;
    for ch in 0..p {
        for k in [n, n - 1] {
            let col = np + chain.register(ch, k);
            for r in 0..np {
                a_c[(r, col)] += bk[(r, ch)];
            }
        }
    }
    Ok(a_c)
}

/// Reference swing eigenvector of the plant padded with zeros over the chain.
pub fn padded_reference(reference: &ComplexEig, dim: usize) -> ComplexEig {
    let mut v = linalg::CVec::zeros(dim);
    v.rows_mut(0, reference.vector.len())
        .copy_from(&reference.vector);
    ComplexEig::new(reference.value, v, reference.domain)
}

fn switching_state(n: usize, a_c: Mat, reference: &ComplexEig, h: f64) -> Result<SwitchingState> {
    let tracked = stability::track_swing_mode(&a_c, reference)?;
    let spectral_radius = linalg::spectral_radius(&a_c)?;
    let damping_ct = ssmodel::damping_ratio(ssmodel::dt_to_ct_eig(tracked.mode.value, h)?)?;
    Ok(SwitchingState {
        n,
        a_c,
        swing_mode: tracked.mode,
        damping_ct,
        spectral_radius,
        ambiguous_tracking: tracked.ambiguous,
    })
}

pub fn assemble_closed_loop(
    plant: &DtStateSpace,
    gain: &Mat,
    n: usize,
    n_max: usize,
) -> Result<SwitchingState> {
    let a_c = closed_loop_matrix(plant, gain, n, n_max)?;
    let reference = plant.swing_mode()?;
    switching_state(n, a_c, &reference, plant.h())
}

/// Switched family `{A_C,n : n_min <= n <= n_max}` over one shared state space.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    pub states: Vec<SwitchingState>,
    pub h: f64,
    pub gain: Mat,
    pub reference_swing: ComplexEig,
    pub plant: DtStateSpace,
    pub n_max: usize,
    /// Same stacking with the controller disabled (gain 0).
    pub open_loop: Mat,
}

impl SwitchedSystem {
    pub fn n_min(&self) -> usize {
        self.states[0].n
    }
    /// Largest delay in the family.
    pub fn n_max_delay(&self) -> usize {
        self.states[self.states.len() - 1].n
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.open_loop.nrows()
    }
    pub fn state(&self, n: usize) -> Option<&SwitchingState> {
        n.checked_sub(self.n_min()).and_then(|i| self.states.get(i))
    }
    pub fn matrices(&self) -> Vec<Mat> {
        self.states.iter().map(|s| s.a_c.clone()).collect()
    }
    pub fn delays(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.n).collect()
    }
}

pub fn enumerate_switching_states(
    plant: &DtStateSpace,
    gain: &Mat,
    n_min: usize,
    n_max: usize,
) -> Result<SwitchedSystem> {
    if n_min < 2 {
        return Err(Error::DelayTooSmall(n_min));
    }
    if n_min > n_max {
        return Err(Error::InvalidRange { n_min, n_max });
    }
    let reference = plant.swing_mode()?;
    let states = (n_min..=n_max)
        .map(|n| {
            let a_c = closed_loop_matrix(plant, gain, n, n_max)?;
            switching_state(n, a_c, &reference, plant.h())
        })
        .collect::<Result<Vec<_>>>()?;
    let zero = Mat::zeros(gain.nrows(), gain.ncols());
    let open_loop = closed_loop_matrix(plant, &zero, n_min, n_max)?;
    Ok(SwitchedSystem {
        states,
        h: plant.h(),
        gain: gain.clone(),
        reference_swing: reference,
        plant: plant.clone(),
        n_max,
        open_loop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssmodel::{build_smib, discretize_trapezoidal};

    fn smib_plant() -> DtStateSpace {
        discretize_trapezoidal(&build_smib(), 0.02).unwrap()
    }

    #[test]
    fn chain_matrices_for_three_steps() {
        let chain = build_delay_chain(3, 1).unwrap();
        assert_eq!(
            chain.a_d(),
            &Mat::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 0., 0., 0.])
        );
        assert_eq!(chain.b_d(), &Mat::from_row_slice(3, 1, &[0., 0., 1.]));
    }

    #[test]
    fn single_register_chain() {
        let chain = build_delay_chain(1, 1).unwrap();
        assert_eq!(chain.a_d(), &Mat::zeros(1, 1));
        assert_eq!(chain.b_d(), &Mat::from_element(1, 1, 1.0));
        assert!(matches!(build_delay_chain(0, 1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn chain_is_nilpotent() {
        let a = build_delay_chain(4, 1).unwrap().a_d().clone();
        let a4 = &a * &a * &a * &a;
        assert_eq!(a4, Mat::zeros(4, 4));
    }

    #[test]
    fn selectors() {
        assert_eq!(build_selector(1, 3).unwrap().c_d(), &[0., 0., 1.]);
        assert_eq!(build_selector(3, 3).unwrap().c_d(), &[1., 0., 0.]);
        assert_eq!(build_selector(2, 2).unwrap().c_d(), &[1., 0.]);
        assert!(matches!(
            build_selector(4, 3),
            Err(Error::DelayOutOfRange { n: 4, n_max: 3 })
        ));
        assert!(build_selector(0, 3).is_err());
    }

    #[test]
    fn smib_a_c2_pattern() {
        let plant = smib_plant();
        let gain = Mat::from_element(1, 1, 0.06);
        let s = assemble_closed_loop(&plant, &gain, 2, 3).unwrap();
        let a = &s.a_c;
        assert_eq!(a.view((0, 0), (2, 2)), plant.a_p().view((0, 0), (2, 2)));
        for (r, c, want) in [
            (0, 3, -3.71e-4),
            (0, 4, -3.71e-4),
            (1, 3, -3.71e-2),
            (1, 4, -3.71e-2),
        ] {
            assert!(((a[(r, c)] - want) / want).abs() < 0.01, "({r},{c}) = {}", a[(r, c)]);
        }
        assert_eq!(a[(2, 3)], 1.0);
        assert_eq!(a[(3, 4)], 1.0);
        assert_eq!(a[(4, 1)], 1.0);
        let nonzero = a.iter().filter(|x| **x != 0.0).count();
        assert_eq!(nonzero, 4 + 4 + 3);
    }

    #[test]
    fn zero_gain_keeps_plant_spectrum() {
        let plant = smib_plant();
        let s = assemble_closed_loop(&plant, &Mat::zeros(1, 1), 2, 3).unwrap();
        let mut eig = linalg::eigenvalues(&s.a_c).unwrap();
        eig.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
        let open = linalg::eigenvalues(plant.a_p()).unwrap();
        for z in &open {
            assert!(eig.iter().any(|w| (w - z).norm() < 1e-12));
        }
        // A nilpotent Jordan block of size 3 only resolves to ~eps^(1/3).
        assert!(eig[2..].iter().all(|z| z.norm() < 1e-4));
    }

    #[test]
    fn rejects_small_delay_and_feedthrough() {
        let plant = smib_plant();
        let g = Mat::from_element(1, 1, 0.06);
        assert_eq!(
            assemble_closed_loop(&plant, &g, 1, 3).unwrap_err(),
            Error::DelayTooSmall(1)
        );
        let with_d = DtStateSpace::new(
            plant.a_p().clone(),
            plant.b_p().clone(),
            plant.c().clone(),
            Mat::from_element(1, 1, 0.5),
            0.02,
        )
        .unwrap();
        assert_eq!(
            assemble_closed_loop(&with_d, &g, 2, 3).unwrap_err(),
            Error::FeedthroughUnsupported
        );
        assert!(matches!(
            assemble_closed_loop(&plant, &Mat::zeros(2, 1), 2, 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn enumeration_counts() {
        let plant = smib_plant();
        let g = Mat::from_element(1, 1, 0.06);
        assert_eq!(enumerate_switching_states(&plant, &g, 2, 2).unwrap().len(), 1);
        let sys = enumerate_switching_states(&plant, &g, 2, 3).unwrap();
        assert_eq!(sys.len(), 2);
        assert!(sys.states.iter().all(|s| s.mu().norm() < 1.0));
        assert!(sys.states.iter().all(|s| s.a_c.nrows() == 5));
        let wide = enumerate_switching_states(&plant, &g, 4, 18).unwrap();
        assert_eq!(wide.len(), 15);
        assert!(enumerate_switching_states(&plant, &g, 3, 2).is_err());
    }
}
