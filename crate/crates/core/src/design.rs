//! Observed covariates and the measurement-error specification.
//!
//! Column order is fixed: the `d1` error-prone columns come first, followed
//! by the `d2` clean columns. Every `Ωᵢ` therefore has its only nonzero block
//! in the top-left `d1 × d1` corner.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SarError};
use crate::linalg;
use crate::scalar::Real;

const PSD_TOL: f64 = 1e-10;
const SYM_TOL: f64 = 1e-10;

/// Observed design `X̃ = [Ũ | Z]`.
#[derive(Debug, Clone)]
pub struct ObservedDesign<T: Real> {
    x: DMatrix<T>,
    d1: usize,
    column_names: Vec<String>,
}

impl<T: Real> ObservedDesign<T> {
    /// `x` holds the error-prone columns first. An intercept, if wanted, must
    /// be supplied by the caller as a clean column of ones.
    pub fn new(x: DMatrix<T>, d1: usize, column_names: Vec<String>) -> Result<Self> {
        let p = x.ncols();
        if p == 0 {
            return Err(SarError::InvalidDesign("design has no columns".into()));
        }
        if d1 > p {
            return Err(SarError::InvalidDesign(format!(
                "d1 = {d1} exceeds p = {p}"
            )));
        }
        if column_names.len() != p {
            return Err(SarError::InvalidDesign(format!(
                "{} column names for {} columns",
                column_names.len(),
                p
            )));
        }
        for (j, col) in x.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(SarError::InvalidDesign(format!(
                    "column {} has non-finite values",
                    column_names[j]
                )));
            }
            if col.iter().all(|&v| v == T::zero()) {
                return Err(SarError::InvalidDesign(format!(
                    "column {} is identically zero",
                    column_names[j]
                )));
            }
        }
        Ok(ObservedDesign {
            x,
            d1,
            column_names,
        })
    }

    /// Design with generated names `u1.., z1..`.
    pub fn with_default_names(x: DMatrix<T>, d1: usize) -> Result<Self> {
        let p = x.ncols();
        let names = (0..p)
            .map(|j| {
                if j < d1 {
                    format!("u{}", j + 1)
                } else {
                    format!("z{}", j - d1 + 1)
                }
            })
            .collect();
        Self::new(x, d1, names)
    }

    pub fn x(&self) -> &DMatrix<T> {
        &self.x
    }
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn d2(&self) -> usize {
        self.p() - self.d1
    }
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }
}

/// How the error covariances `Ωᵢ` are known.
#[derive(Debug, Clone)]
pub enum ErrorKind<T: Real> {
    /// No measurement error.
    None,
    /// Per-observation `Δᵢ` (`d1 × d1`), treated as known.
    Known { deltas: Vec<DMatrix<T>> },
    /// A single estimated `Δ̂` shared by all observations, with `c_hat` the
    /// `p² × p²` covariance of `vec(Ω̂)` (row-major vec, zero-padded).
    EstimatedShared {
        delta: DMatrix<T>,
        c_hat: DMatrix<T>,
    },
}

/// Measurement-error specification with the cached `Σᵢ Ωᵢ`.
#[derive(Debug, Clone)]
pub struct MeasurementErrorSpec<T: Real> {
    kind: ErrorKind<T>,
    n: usize,
    p: usize,
    d1: usize,
    omega_sum: DMatrix<T>,
}

fn check_block<T: Real>(index: usize, m: &DMatrix<T>, d1: usize) -> Result<()> {
    if m.nrows() != d1 || m.ncols() != d1 {
        return Err(SarError::Dimension(format!(
            "error covariance block {index} is {}x{}, expected {d1}x{d1}",
            m.nrows(),
            m.ncols()
        )));
    }
    let dev = linalg::max_asymmetry(m);
    if dev > T::tol(SYM_TOL) {
        return Err(SarError::Asymmetric {
            index,
            deviation: dev.as_f64(),
        });
    }
    if d1 > 0 {
        let min = linalg::min_eigenvalue(m);
        if min < -T::tol(PSD_TOL) {
            return Err(SarError::NotPsd {
                index,
                min_eigenvalue: min.as_f64(),
            });
        }
    }
    Ok(())
}

fn pad<T: Real>(block: &DMatrix<T>, p: usize) -> DMatrix<T> {
    let d1 = block.nrows();
    let mut out = DMatrix::zeros(p, p);
    out.view_mut((0, 0), (d1, d1)).copy_from(block);
    out
}

impl<T: Real> MeasurementErrorSpec<T> {
    pub fn none(n: usize, p: usize) -> Self {
        MeasurementErrorSpec {
            kind: ErrorKind::None,
            n,
            p,
            d1: 0,
            omega_sum: DMatrix::zeros(p, p),
        }
    }

    pub fn kind(&self) -> &ErrorKind<T> {
        &self.kind
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn d1(&self) -> usize {
        self.d1
    }

    /// `Σᵢ Ωᵢ` (`p × p`).
    pub fn omega_sum(&self) -> &DMatrix<T> {
        &self.omega_sum
    }

    /// Zero-padded `Ωᵢ` (`p × p`).
    pub fn omega(&self, i: usize) -> DMatrix<T> {
        match &self.kind {
            ErrorKind::None => DMatrix::zeros(self.p, self.p),
            ErrorKind::Known { deltas } => pad(&deltas[i], self.p),
            ErrorKind::EstimatedShared { delta, .. } => pad(delta, self.p),
        }
    }

    /// The non-zero `d1 × d1` block of `Ωᵢ`, `None` when there is no error.
    pub fn delta(&self, i: usize) -> Option<&DMatrix<T>> {
        match &self.kind {
            ErrorKind::None => None,
            ErrorKind::Known { deltas } => Some(&deltas[i]),
            ErrorKind::EstimatedShared { delta, .. } => Some(delta),
        }
    }

    /// `Σᵢ wᵢ Ωᵢ` for per-observation weights `w`.
    pub fn weighted_omega_sum(&self, w: &DVector<T>) -> DMatrix<T> {
        let mut block = DMatrix::zeros(self.d1, self.d1);
        match &self.kind {
            ErrorKind::None => return DMatrix::zeros(self.p, self.p),
            ErrorKind::Known { deltas } => {
                for (d, &wi) in deltas.iter().zip(w.iter()) {
                    block += d * wi;
                }
            }
            ErrorKind::EstimatedShared { delta, .. } => block = delta * w.sum(),
        }
        pad(&block, self.p)
    }

    /// `δᵀ Ωᵢ δ` for every observation.
    pub fn quadratic_forms(&self, delta: &DVector<T>) -> DVector<T> {
        let b = delta.rows(0, self.d1);
        let q = |d: &DMatrix<T>| (b.transpose() * d * b)[(0, 0)];
        match &self.kind {
            ErrorKind::None => DVector::zeros(self.n),
            ErrorKind::Known { deltas } => DVector::from_iterator(self.n, deltas.iter().map(q)),
            ErrorKind::EstimatedShared { delta: d, .. } => DVector::from_element(self.n, q(d)),
        }
    }

    /// `c_hat` when the error covariance was estimated.
    pub fn c_hat(&self) -> Option<&DMatrix<T>> {
        match &self.kind {
            ErrorKind::EstimatedShared { c_hat, .. } => Some(c_hat),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ErrorKind::None => "none",
            ErrorKind::Known { .. } => "known",
            ErrorKind::EstimatedShared { .. } => "estimated",
        }
    }
}

/// Builds a known-covariance specification from per-observation `Δᵢ`.
pub fn assemble_omega<T: Real>(
    deltas: Vec<DMatrix<T>>,
    d2: usize,
) -> Result<MeasurementErrorSpec<T>> {
    let n = deltas.len();
    let d1 = deltas.first().map_or(0, |d| d.nrows());
    let p = d1 + d2;
    let mut block = DMatrix::zeros(d1, d1);
    for (i, d) in deltas.iter().enumerate() {
        check_block(i, d, d1)?;
        block += d;
    }
    Ok(MeasurementErrorSpec {
        kind: ErrorKind::Known { deltas },
        n,
        p,
        d1,
        omega_sum: pad(&block, p),
    })
}

/// The same `Δ` for every one of `n` observations, treated as known.
pub fn assemble_shared<T: Real>(
    delta: DMatrix<T>,
    d2: usize,
    n: usize,
) -> Result<MeasurementErrorSpec<T>> {
    assemble_omega(vec![delta; n], d2)
}

/// A shared estimated `Δ̂` with covariance `c_delta` of `vec(Δ̂)` (`d1² × d1²`).
/// The covariance is zero-padded to the `p² × p²` layout of `vec(Ω̂)`.
pub fn assemble_estimated<T: Real>(
    delta: DMatrix<T>,
    c_delta: DMatrix<T>,
    d2: usize,
    n: usize,
) -> Result<MeasurementErrorSpec<T>> {
    let d1 = delta.nrows();
    let p = d1 + d2;
    check_block(0, &delta, d1)?;
    if c_delta.nrows() != d1 * d1 || c_delta.ncols() != d1 * d1 {
        return Err(SarError::Dimension(format!(
            "covariance of vec(delta) must be {0}x{0}",
            d1 * d1
        )));
    }
    let scale = c_delta
        .iter()
        .fold(T::zero(), |a, &b| if b.abs() > a { b.abs() } else { a });
    if linalg::max_asymmetry(&c_delta) > T::tol(SYM_TOL) * (T::one() + scale) {
        return Err(SarError::InvalidC("not symmetric".into()));
    }
    let min = linalg::min_eigenvalue(&c_delta);
    if min < -T::tol(PSD_TOL) * (T::one() + scale) {
        return Err(SarError::InvalidC(format!(
            "not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    let idx = |a: usize, b: usize| a * p + b;
    let mut c_hat = DMatrix::zeros(p * p, p * p);
    for a in 0..d1 {
        for b in 0..d1 {
            for c in 0..d1 {
                for d in 0..d1 {
                    c_hat[(idx(a, b), idx(c, d))] = c_delta[(a * d1 + b, c * d1 + d)];
                }
            }
        }
    }
    let omega_sum = pad(&(&delta * T::count(n)), p);
    Ok(MeasurementErrorSpec {
        kind: ErrorKind::EstimatedShared { delta, c_hat },
        n,
        p,
        d1,
        omega_sum,
    })
}
