//! Dense eigen-analysis helpers on top of nalgebra.
//!
//! nalgebra's real Schur form gives eigenvalues of nonsymmetric matrices but
//! not eigenvectors, so right eigenvectors are recovered by complex inverse
//! iteration against each eigenvalue.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CVec = DVector<Complex64>;

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Right eigenvector for a known eigenvalue, unit norm and phase-canonical.
pub fn eigenvector(a: &Mat, mu: Complex64) -> Result<CVec> {
    let n = a.nrows();
    let ac: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
    let scale = a.norm().max(1.0);
    // Deterministic, non-degenerate starting vector.
    let mut v = CVec::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.31 * i as f64, 0.17 * (i as f64 + 1.0).sqrt())
    });
    v /= Complex64::new(v.norm(), 0.0);

    let mut shift_mag = 1e-13 * scale;
    for _attempt in 0..8 {
        let shift = mu + Complex64::new(shift_mag, shift_mag);
        let mut m = ac.clone();
        for i in 0..n {
            m[(i, i)] -= shift;
        }
        let lu = m.lu();
        let mut w = v.clone();
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&w) {
                Some(next) if next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    let nrm = next.norm();
                    if nrm == 0.0 {
                        ok = false;
                        break;
                    }
                    w = next / Complex64::new(nrm, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            canonicalize_phase(&mut w);
            return Ok(w);
        }
        shift_mag *= 100.0;
    }
    Err(Error::Eigen(format!("inverse iteration failed at mu = {mu}")))
}

/// Scale `v` so that its first non-negligible component is real positive.
pub fn canonicalize_phase(v: &mut CVec) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    if let Some(first) = v.iter().find(|z| z.norm() > 1e-9 * max).copied() {
        let rot = first.conj() / first.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

pub fn residual(a: &Mat, mu: Complex64, v: &CVec) -> f64 {
    let ac: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
    (ac * v - v * mu).norm()
}

/// Eigenpairs of `a` whose eigenvalue has strictly positive imaginary part.
pub fn upper_complex_eigenpairs(a: &Mat) -> Result<Vec<(Complex64, CVec)>> {
    let scale = a.norm().max(1.0);
    eigenvalues(a)?
        .into_iter()
        .filter(|z| z.im > 1e-12 * scale)
        .map(|z| eigenvector(a, z).map(|v| (z, v)))
        .collect()
}

/// All eigenpairs, including real ones.
pub fn eigenpairs(a: &Mat) -> Result<Vec<(Complex64, CVec)>> {
    eigenvalues(a)?
        .into_iter()
        .map(|z| eigenvector(a, z).map(|v| (z, v)))
        .collect()
}

/// |<u, v>| / (|u| |v|).
pub fn alignment(u: &CVec, v: &CVec) -> f64 {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (u.dotc(v).norm() / (nu * nv)).min(1.0)
}

/// Principal angle between the complex lines spanned by `u` and `v`, in [0, pi/2].
pub fn principal_angle(u: &CVec, v: &CVec) -> f64 {
    alignment(u, v).acos()
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Projection of a symmetric matrix onto {X : X >= floor * I}.
pub fn clip_eigenvalues(m: &Mat, floor: f64) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return symmetrize(m);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    symmetrize(&(q * Mat::from_diagonal(&clipped) * q.transpose()))
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &Mat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn spectral_norm(m: &Mat) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Solve `P - A' P A = Q` by doubling; requires `A` Schur stable.
pub fn discrete_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let mut p = symmetrize(q);
    let mut ak = a.clone();
    for _ in 0..80 {
        let step = ak.transpose() * &p * &ak;
        p += &step;
        ak = &ak * &ak;
        if step.amax() <= 1e-17 * p.amax() {
            return Ok(symmetrize(&p));
        }
        if !all_finite(&p) {
            break;
        }
    }
    Err(Error::Eigen("Lyapunov doubling did not converge".into()))
}

pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod rows {
    use super::Mat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            Vec::<Vec<Vec<f64>>>::deserialize(d)?
                .iter()
                .map(|r| from_rows(r).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_eigenpair_has_small_residual() {
        let th: f64 = 0.3;
        let a = Mat::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.9;
        let pairs = upper_complex_eigenpairs(&a).unwrap();
        assert_eq!(pairs.len(), 1);
        let (mu, v) = &pairs[0];
        assert!((mu.norm() - 0.9).abs() < 1e-12);
        assert!(residual(&a, *mu, v) < 1e-12);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(v[0].im.abs() < 1e-15 && v[0].re > 0.0);
    }

    #[test]
    fn clipping_lifts_negative_eigenvalues() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let c = clip_eigenvalues(&m, 0.5);
        assert!((min_sym_eigenvalue(&c) - 0.5).abs() < 1e-12);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_residual() {
        let a = Mat::from_row_slice(2, 2, &[0.9, 0.3, -0.2, 0.8]);
        let p = discrete_lyapunov(&a, &Mat::identity(2, 2)).unwrap();
        let r = &p - a.transpose() * &p * &a - Mat::identity(2, 2);
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn condition_of_singular_is_infinite_or_huge() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e15);
    }
}
