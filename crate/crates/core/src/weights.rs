//! Spatial and network weight matrices and their row-normalised operator.
//!
//! Storage is dense throughout. Every routine downstream (LU log-determinants,
//! `G = S⁻¹L`, the sandwich terms) works on full `n × n` matrices, which keeps
//! the practical ceiling around `n ≈ 10⁴`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SarError};
use crate::scalar::Real;

/// Mean Earth radius (IUGG), kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Adjacency matrix `A`, its row normalisation `L = D⁻¹A` and degrees.
///
/// Rows of `A` with zero degree (isolated nodes) give zero rows in `L`.
#[derive(Debug, Clone)]
pub struct SpatialWeights<T: Real> {
    a: DMatrix<T>,
    l: DMatrix<T>,
    degrees: DVector<T>,
    symmetric: bool,
    scheme: Option<String>,
    spectrum: OnceLock<Option<Vec<T>>>,
}

impl<T: Real> SpatialWeights<T> {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn normalized(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn degrees(&self) -> &DVector<T> {
        &self.degrees
    }

    /// Whether `A = Aᵀ` exactly.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Description of the distance scheme that produced `A`, if any.
    pub fn scheme(&self) -> Option<&str> {
        self.scheme.as_deref()
    }

    pub fn with_scheme(mut self, scheme: impl Into<String>) -> Self {
        self.scheme = Some(scheme.into());
        self
    }

    /// Real eigenvalues of `L` in ascending order, available when `A` is
    /// symmetric.
    ///
    /// `L = D⁻¹A` is similar to `D^{-1/2} A D^{-1/2}`, so the spectrum comes
    /// from a symmetric eigenproblem. Computed once and cached.
    pub fn spectrum(&self) -> Option<&[T]> {
        self.spectrum
            .get_or_init(|| {
                if !self.symmetric {
                    return None;
                }
                let n = self.n();
                let inv_sqrt: Vec<T> = self
                    .degrees
                    .iter()
                    .map(|&d| {
                        if d > T::zero() {
                            T::one() / d.sqrt()
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let b = DMatrix::from_fn(n, n, |i, j| self.a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
                let mut ev: Vec<T> = b.symmetric_eigenvalues().iter().copied().collect();
                ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
                Some(ev)
            })
            .as_deref()
    }

    /// `L · v`.
    pub fn lag(&self, v: &DVector<T>) -> DVector<T> {
        &self.l * v
    }

    /// `S(ρ) = I − ρL`.
    pub fn s_matrix(&self, rho: T) -> DMatrix<T> {
        let n = self.n();
        DMatrix::identity(n, n) - &self.l * rho
    }
}

/// Builds [`SpatialWeights`] from a square, nonnegative, zero-diagonal `A`.
pub fn build_row_normalized<T: Real>(a: DMatrix<T>) -> Result<SpatialWeights<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SarError::InvalidWeights(format!(
            "adjacency must be square, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Err(SarError::InvalidWeights("adjacency is empty".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if !v.is_finite() {
                return Err(SarError::InvalidWeights(format!(
                    "non-finite entry at ({i}, {j})"
                )));
            }
            if v < T::zero() {
                return Err(SarError::InvalidWeights(format!(
                    "negative entry {v} at ({i}, {j})"
                )));
            }
        }
        if a[(i, i)] != T::zero() {
            return Err(SarError::InvalidWeights(format!("nonzero diagonal at {i}")));
        }
    }
    let degrees = DVector::from_iterator(n, a.row_iter().map(|r| r.sum()));
    let mut l = a.clone();
    for (i, mut row) in l.row_iter_mut().enumerate() {
        let d = degrees[i];
        if d > T::zero() {
            row.iter_mut().for_each(|x| *x /= d);
        }
    }
    let symmetric = (0..n).all(|i| (i + 1..n).all(|j| a[(i, j)] == a[(j, i)]));
    Ok(SpatialWeights {
        a,
        l,
        degrees,
        symmetric,
        scheme: None,
        spectrum: OnceLock::new(),
    })
}

/// Conversion of great-circle distances into edge weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceScheme {
    /// Indicator of the `k` nearest neighbours, symmetrised by `max(A, Aᵀ)`.
    /// Ties are broken by the lower index.
    Knn { k: usize },
    /// `A_ij = d_ij^(−exponent)` for `d_ij ≤ radius_km`, else 0.
    Cutoff { radius_km: f64, exponent: f64 },
}

impl DistanceScheme {
    pub fn describe(&self) -> String {
        match self {
            DistanceScheme::Knn { k } => format!("knn(k={k})"),
            DistanceScheme::Cutoff {
                radius_km,
                exponent,
            } => {
                format!("cutoff(radius_km={radius_km},exponent={exponent})")
            }
        }
    }
}

/// Great-circle distance in kilometres between two (lat, lon) points given in
/// degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.min(1.0).sqrt().asin()
}

/// Builds weights from `(lat, lon)` coordinates in degrees.
pub fn weights_from_coordinates<T: Real>(
    coords: &[(f64, f64)],
    scheme: DistanceScheme,
) -> Result<SpatialWeights<T>> {
    let n = coords.len();
    for (row, &(lat, lon)) in coords.iter().enumerate() {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(SarError::InvalidCoordinates {
                row,
                msg: format!("latitude {lat} outside [-90, 90]"),
            });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(SarError::InvalidCoordinates {
                row,
                msg: format!("longitude {lon} outside [-180, 180]"),
            });
        }
    }
    let dist =
        |i: usize, j: usize| haversine_km(coords[i].0, coords[i].1, coords[j].0, coords[j].1);
    let mut a = DMatrix::<T>::zeros(n, n);
    match scheme {
        DistanceScheme::Knn { k } => {
            if k == 0 || k >= n {
                return Err(SarError::InvalidScheme(format!(
                    "k = {k} must lie in [1, n-1] with n = {n}"
                )));
            }
            let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
            for i in 0..n {
                order.clear();
                order.extend((0..n).filter(|&j| j != i).map(|j| (dist(i, j), j)));
                order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                for &(_, j) in order.iter().take(k) {
                    a[(i, j)] = T::one();
                    a[(j, i)] = T::one();
                }
            }
        }
        DistanceScheme::Cutoff {
            radius_km,
            exponent,
        } => {
            if !(radius_km >= 0.0) || !(exponent >= 0.0) {
                return Err(SarError::InvalidScheme(
                    "cutoff radius and exponent must be nonnegative".into(),
                ));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = dist(i, j);
                    if d > radius_km {
                        continue;
                    }
                    let w = if exponent == 0.0 {
                        1.0
                    } else if d == 0.0 {
                        return Err(SarError::DegenerateDistance { i, j });
                    } else {
                        d.powf(-exponent)
                    };
                    a[(i, j)] = T::lit(w);
                    a[(j, i)] = T::lit(w);
                }
            }
        }
    }
    Ok(build_row_normalized(a)?.with_scheme(scheme.describe()))
}
