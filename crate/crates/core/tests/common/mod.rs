//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use wadc_core::delaychain::{enumerate_switching_states, SwitchedSystem};
use wadc_core::linalg::Mat;
use wadc_core::ssmodel::{self, DtStateSpace};
use wadc_core::stability;

pub const SURROGATE_LAMBDA: Complex64 = Complex64::new(0.007, 4.2);
pub const SURROGATE_H: f64 = 1.0 / 60.0;

pub fn smib_plant(h: f64) -> DtStateSpace {
    ssmodel::discretize_trapezoidal(&ssmodel::build_smib(), h).unwrap()
}

pub fn smib_family(n_min: usize, n_max: usize) -> SwitchedSystem {
    enumerate_switching_states(&smib_plant(0.02), &Mat::from_element(1, 1, 0.06), n_min, n_max).unwrap()
}

pub fn surrogate_plant() -> DtStateSpace {
    let ct = ssmodel::build_modal_surrogate(SURROGATE_LAMBDA, 1.0, 1.0).unwrap();
    ssmodel::discretize_trapezoidal(&ct, SURROGATE_H).unwrap()
}

pub fn surrogate_gain() -> f64 {
    stability::calibrate_surrogate_gain(SURROGATE_LAMBDA, SURROGATE_H, 18, Default::default()).unwrap()
}

pub fn surrogate_family(gain: f64, n_min: usize, n_max: usize) -> SwitchedSystem {
    enumerate_switching_states(&surrogate_plant(), &Mat::from_element(1, 1, gain), n_min, n_max).unwrap()
}

/// `(I - A h/2)^{-1} (I + A h/2)` by dense LU.
pub fn tustin(a: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let i = DMatrix::<f64>::identity(n, n);
    let lhs = &i - a * (h / 2.0);
    let rhs = &i + a * (h / 2.0);
    lhs.lu().solve(&rhs).unwrap()
}

pub fn eigs(a: &DMatrix<f64>) -> Vec<Complex64> {
    a.complex_eigenvalues().iter().copied().collect()
}

/// Plant-only simulation with the measurement history kept in a plain vector.
/// `u[K] = K y[K-n]` with `y[j] = 0` for `j < 0`, and the plant step
/// `x[K+1] = A_p x[K] + B_p (u[K] + u[K+1])`.
pub fn history_buffer_sim(
    plant: &DtStateSpace,
    gain: &Mat,
    n: usize,
    x0: &[f64],
    steps: usize,
) -> Vec<Vec<f64>> {
    let c = plant.c();
    let mut x = nalgebra::DVector::from_column_slice(x0);
    let mut ys: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut out = vec![x.as_slice().to_vec()];
    let delayed = |ys: &[nalgebra::DVector<f64>], k: isize| -> nalgebra::DVector<f64> {
        if k < 0 {
            nalgebra::DVector::zeros(c.nrows())
        } else {
            ys[k as usize].clone()
        }
    };
    for k in 0..steps {
        ys.push(c * &x);
        let ki = k as isize;
        let u_now = gain * delayed(&ys, ki - n as isize);
        let u_next = gain * delayed(&ys, ki + 1 - n as isize);
        x = plant.a_p() * &x + plant.b_p() * (u_now + u_next);
        out.push(x.as_slice().to_vec());
    }
    out
}

/// Tiny deterministic generator for tests that want many draws without proptest shrinking.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + ((self.next_f64() * (hi - lo + 1) as f64) as usize).min(hi - lo)
    }
}
