//! Continuous- and discrete-time plant models, trapezoidal discretization,
//! the bilinear eigenvalue map and the benchmark plants.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CVec, Mat};

/// Condition number above which (2I - Ah) is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

const MAP_TOL: f64 = 1e-12;

/// Linearized continuous-time plant `x' = Ax + Bu, y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtStateSpace {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
    labels: Vec<String>,
}

fn check_dims(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, must be square",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows, A has {n}",
            b.nrows()
        )));
    }
    if c.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "C has {} columns, A has {n}",
            c.ncols()
        )));
    }
    if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "D is {}x{}, expected {}x{}",
            d.nrows(),
            d.ncols(),
            c.nrows(),
            b.ncols()
        )));
    }
    for (name, m) in [("A", a), ("B", b), ("C", c), ("D", d)] {
        if !linalg::all_finite(m) {
            return Err(Error::NonFiniteEntry(name.into()));
        }
    }
    Ok(())
}

impl CtStateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        check_dims(&a, &b, &c, &d)?;
        let labels = (1..=a.nrows()).map(|i| format!("x{i}")).collect();
        Ok(Self { a, b, c, d, labels })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} states",
                labels.len(),
                self.a.nrows()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_document(&self, h: Option<f64>) -> ModelDocument {
        let flat = |m: &Mat| -> Vec<Entry> {
            m.transpose().iter().map(|&x| Entry::Number(x)).collect()
        };
        ModelDocument {
            n: self.n_states(),
            m: self.n_inputs(),
            p: self.n_outputs(),
            a: flat(&self.a),
            b: flat(&self.b),
            c: flat(&self.c),
            d: Some(flat(&self.d)),
            h,
            labels: Some(self.labels.clone()),
        }
    }
}

/// Discrete plant `x[K+1] = A_p x[K] + B_p (u[K] + u[K+1]), y[K] = C x[K] + D u[K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DtStateSpace {
    a_p: Mat,
    b_p: Mat,
    c: Mat,
    d: Mat,
    h: f64,
}

impl DtStateSpace {
    pub fn new(a_p: Mat, b_p: Mat, c: Mat, d: Mat, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step h = {h} must be > 0")));
        }
        check_dims(&a_p, &b_p, &c, &d)?;
        Ok(Self { a_p, b_p, c, d, h })
    }

    pub fn a_p(&self) -> &Mat {
        &self.a_p
    }
    pub fn b_p(&self) -> &Mat {
        &self.b_p
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn n_states(&self) -> usize {
        self.a_p.nrows()
    }
    pub fn n_inputs(&self) -> usize {
        self.b_p.ncols()
    }
    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// The least-damped oscillatory eigenpair of `A_p`, used as the swing-mode reference.
    pub fn swing_mode(&self) -> Result<ComplexEig> {
        let pairs = linalg::upper_complex_eigenpairs(&self.a_p)?;
        let h = self.h;
        let score = |mu: Complex64| {
            dt_to_ct_eig(mu, h)
                .and_then(damping_ratio)
                .unwrap_or(f64::INFINITY)
        };
        let (value, vector) = pairs
            .into_iter()
            .min_by(|x, y| score(x.0).total_cmp(&score(y.0)))
            .ok_or(Error::NoComplexMode)?;
        Ok(ComplexEig {
            value,
            vector,
            domain: Domain::Dt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Ct,
    Dt,
}

/// An eigenvalue with its unit right eigenvector (first non-negligible
/// component real positive).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexEig {
    pub value: Complex64,
    pub vector: CVec,
    pub domain: Domain,
}

impl ComplexEig {
    pub fn new(value: Complex64, mut vector: CVec, domain: Domain) -> Self {
        let n = vector.norm();
        if n > 0.0 {
            vector /= Complex64::new(n, 0.0);
        }
        linalg::canonicalize_phase(&mut vector);
        Self {
            value,
            vector,
            domain,
        }
    }
}

/// Trapezoidal (Tustin) discretization with step `h`.
pub fn discretize_trapezoidal(ct: &CtStateSpace, h: f64) -> Result<DtStateSpace> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be > 0")));
    }
    let n = ct.n_states();
    let eye = Mat::identity(n, n);
    let lhs = &eye * 2.0 - ct.a() * h;
    let rhs = &eye * 2.0 + ct.a() * h;
    if n > 0 {
        let cond = linalg::condition_number(&lhs);
        if !(cond <= SINGULAR_CONDITION) {
            return Err(Error::SingularDiscretization(cond));
        }
    }
    let lu = lhs.lu();
    let a_p = lu
        .solve(&rhs)
        .ok_or(Error::SingularDiscretization(f64::INFINITY))?;
    let b_p = lu
        .solve(&(ct.b() * h))
        .ok_or(Error::SingularDiscretization(f64::INFINITY))?;
    DtStateSpace::new(a_p, b_p, ct.c().clone(), ct.d().clone(), h)
}

/// mu = (2 + lambda h) / (2 - lambda h).
pub fn ct_to_dt_eig(lambda: Complex64, h: f64) -> Result<Complex64> {
    let lh = lambda * h;
    let den = Complex64::new(2.0, 0.0) - lh;
    if den.norm() <= MAP_TOL * 2.0_f64.max(lh.norm()) {
        return Err(Error::PoleAtNyquist);
    }
    Ok((Complex64::new(2.0, 0.0) + lh) / den)
}

/// lambda = (2/h) (mu - 1) / (mu + 1).
pub fn dt_to_ct_eig(mu: Complex64, h: f64) -> Result<Complex64> {
    let den = mu + 1.0;
    if den.norm() <= MAP_TOL * 1.0_f64.max(mu.norm()) {
        return Err(Error::PoleAtMinusOne);
    }
    Ok((mu - 1.0) / den * (2.0 / h))
}

/// zeta = -Re(lambda) / |lambda|; negative for growing modes.
pub fn damping_ratio(lambda: Complex64) -> Result<f64> {
    let mag = lambda.norm();
    if mag < MAP_TOL {
        return Err(Error::ZeroEigenvalue);
    }
    Ok(-lambda.re / mag)
}

/// Classical-model single-machine infinite-bus plant; states (delta, omega), output omega.
pub fn build_smib() -> CtStateSpace {
    let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -112.5, -0.628]);
    let b = Mat::from_row_slice(2, 1, &[0.0, -62.83]);
    let c = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
    let d = Mat::zeros(1, 1);
    CtStateSpace::new(a, b, c, d)
        .and_then(|m| m.with_labels(vec!["delta".into(), "omega".into()]))
        .expect("SMIB matrices are consistent")
}

/// Second-order companion realization with spectrum {lambda, conj(lambda)}.
pub fn build_modal_surrogate(
    lambda: Complex64,
    input_gain: f64,
    output_gain: f64,
) -> Result<CtStateSpace> {
    if !(lambda.im > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "surrogate mode {lambda} needs Im > 0"
        )));
    }
    let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -lambda.norm_sqr(), 2.0 * lambda.re]);
    let b = Mat::from_row_slice(2, 1, &[0.0, input_gain]);
    let c = Mat::from_row_slice(1, 2, &[0.0, output_gain]);
    CtStateSpace::new(a, b, c, Mat::zeros(1, 1))?
        .with_labels(vec!["angle".into(), "speed".into()])
}

/// A matrix entry as written in a model document: a number, or a string
/// such as "NaN" or "inf".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Number(f64),
    Text(String),
}

impl Entry {
    fn value(&self) -> Result<f64> {
        match self {
            Entry::Number(x) => Ok(*x),
            Entry::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("matrix entry {s:?} is not a number"))),
        }
    }
}

/// Serialized plant: explicit dimensions plus dense row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<Entry>,
    #[serde(rename = "B")]
    pub b: Vec<Entry>,
    #[serde(rename = "C")]
    pub c: Vec<Entry>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Entry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

fn dense(name: &str, entries: &[Entry], rows: usize, cols: usize) -> Result<Mat> {
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} entries, expected {rows}x{cols}",
            entries.len()
        )));
    }
    let values = entries.iter().map(Entry::value).collect::<Result<Vec<_>>>()?;
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntry(name.into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

impl ModelDocument {
    pub fn into_model(self) -> Result<CtStateSpace> {
        let a = dense("A", &self.a, self.n, self.n)?;
        let b = dense("B", &self.b, self.n, self.m)?;
        let c = dense("C", &self.c, self.p, self.n)?;
        let d = match &self.d {
            Some(d) => dense("D", d, self.p, self.m)?,
            None => Mat::zeros(self.p, self.m),
        };
        let model = CtStateSpace::new(a, b, c, d)?;
        match self.labels {
            Some(labels) => model.with_labels(labels),
            None => Ok(model),
        }
    }
}

/// Parse a JSON model document.
pub fn load_model(document: &str) -> Result<CtStateSpace> {
    let doc: ModelDocument = serde_json::from_str(document)?;
    doc.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_a_discretizes_to_identity() {
        let ct = CtStateSpace::new(
            Mat::zeros(2, 2),
            Mat::from_row_slice(2, 1, &[1.0, -3.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            Mat::zeros(1, 1),
        )
        .unwrap();
        let dt = discretize_trapezoidal(&ct, 0.1).unwrap();
        assert!((dt.a_p() - Mat::identity(2, 2)).norm() < 1e-15);
        assert!((dt.b_p() - ct.b() * 0.05).norm() < 1e-15);
    }

    #[test]
    fn singular_discretization_is_rejected() {
        // A h = 2I makes (2I - Ah) exactly zero.
        let ct = CtStateSpace::new(
            Mat::identity(2, 2) * 20.0,
            Mat::zeros(2, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
        )
        .unwrap();
        assert!(matches!(
            discretize_trapezoidal(&ct, 0.1),
            Err(Error::SingularDiscretization(_))
        ));
    }

    #[test]
    fn nonpositive_step_is_rejected() {
        assert!(discretize_trapezoidal(&build_smib(), 0.0).is_err());
        assert!(discretize_trapezoidal(&build_smib(), -0.1).is_err());
    }

    #[test]
    fn eigen_map_fixed_points_and_poles() {
        assert_eq!(ct_to_dt_eig(c(0.0, 0.0), 0.37).unwrap(), c(1.0, 0.0));
        assert_eq!(dt_to_ct_eig(c(1.0, 0.0), 0.02).unwrap(), c(0.0, 0.0));
        assert_eq!(ct_to_dt_eig(c(20.0, 0.0), 0.1), Err(Error::PoleAtNyquist));
        assert_eq!(dt_to_ct_eig(c(-1.0, 0.0), 0.1), Err(Error::PoleAtMinusOne));
    }

    #[test]
    fn smib_open_loop_mode() {
        let mu = ct_to_dt_eig(c(-0.314, 10.6), 0.02).unwrap();
        assert!((mu - c(0.97, 0.21)).norm() < 0.005, "{mu}");
        let back = dt_to_ct_eig(c(0.97, 0.21), 0.02).unwrap();
        assert!((back - c(-0.314, 10.6)).norm() < 0.2, "{back}");
    }

    #[test]
    fn unstable_mode_maps_outside_unit_circle() {
        let mu = ct_to_dt_eig(c(0.007, 4.2), 0.016667).unwrap();
        assert!(mu.norm() > 1.0);
    }

    #[test]
    fn damping_ratio_values() {
        assert_eq!(damping_ratio(c(-1.0, 0.0)).unwrap(), 1.0);
        let z = damping_ratio(c(0.007, 4.2)).unwrap();
        assert!((z + 0.007 / (0.007f64.powi(2) + 4.2f64.powi(2)).sqrt()).abs() < 1e-15);
        assert!((z + 0.001667).abs() < 1e-6);
        let z = damping_ratio(c(-0.314, 10.6)).unwrap();
        assert!((z - 0.0296).abs() < 1e-4);
        assert_eq!(damping_ratio(c(0.0, 0.0)), Err(Error::ZeroEigenvalue));
    }

    #[test]
    fn smib_structure() {
        let smib = build_smib();
        assert_eq!(
            smib.a(),
            &Mat::from_row_slice(2, 2, &[0.0, 1.0, -112.5, -0.628])
        );
        let cb = smib.c() * smib.b();
        assert_eq!(cb[(0, 0)], -62.83);
        let mut eig = linalg::eigenvalues(smib.a()).unwrap();
        eig.sort_by(|x, y| x.im.total_cmp(&y.im));
        // Exact pair is -0.314 +/- j10.602.
        assert!((eig[1].re + 0.314).abs() < 0.001);
        assert!((eig[1].im - 10.6).abs() < 0.005);
    }

    #[test]
    fn surrogate_realization() {
        let s = build_modal_surrogate(c(0.007, 4.2), 1.0, 1.0).unwrap();
        assert!((s.a()[(1, 0)] + 17.640049).abs() < 1e-12);
        assert!((s.a()[(1, 1)] - 0.014).abs() < 1e-15);
        let osc = build_modal_surrogate(c(0.0, 1.0), 1.0, 1.0).unwrap();
        assert_eq!(osc.a(), &Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(build_modal_surrogate(c(-1.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn model_document_roundtrip_and_errors() {
        let smib = build_smib();
        let text = serde_json::to_string(&smib.to_document(Some(0.02))).unwrap();
        assert_eq!(load_model(&text).unwrap(), smib);

        let bad_rows = r#"{"n":2,"m":1,"p":1,"A":[0,1,-112.5,-0.628],"B":[0,-62.83,1],"C":[0,1]}"#;
        assert!(matches!(load_model(bad_rows), Err(Error::DimensionMismatch(_))));

        let nan = r#"{"n":2,"m":1,"p":1,"A":[0,"NaN",-112.5,-0.628],"B":[0,-62.83],"C":[0,1]}"#;
        assert!(matches!(load_model(nan), Err(Error::NonFiniteEntry(_))));

        assert!(matches!(load_model("{not json"), Err(Error::Parse(_))));
    }
}
