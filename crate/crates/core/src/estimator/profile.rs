//! The concentrated corrected likelihood as a function of `ρ` alone.

use nalgebra::{DMatrix, DVector};

use super::projector::CorrectedProjector;
use crate::error::{Result, SarError};
use crate::linalg;
use crate::scalar::Real;
use crate::weights::SpatialWeights;

/// `σ̂²(ρ) = YᵀS(ρ)ᵀM₂S(ρ)Y / n`, evaluated directly from the projector.
pub fn sigma2_of_rho<T: Real>(
    rho: T,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    m2: &CorrectedProjector<T>,
) -> Result<T> {
    let sy = y - weights.lag(y) * rho;
    let value = m2.quad(&sy, &sy) / T::count(y.len());
    if value > T::zero() {
        Ok(value)
    } else {
        Err(SarError::NegativeProfileVariance {
            rho: rho.as_f64(),
            value: value.as_f64(),
        })
    }
}

/// `f(ρ) = −log|I − ρL| + (n/2)·log σ̂²(ρ)`, the negative concentrated
/// corrected log-likelihood up to constants.
pub fn concentrated_objective<T: Real>(
    rho: T,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    m2: &CorrectedProjector<T>,
) -> Result<T> {
    let s2 = sigma2_of_rho(rho, y, weights, m2)?;
    let logdet = log_det_s(rho, weights)?;
    Ok(-logdet + T::lit(0.5) * T::count(y.len()) * s2.ln())
}

/// `f′(ρ)` of [`concentrated_objective`]: `tr(G(ρ)) + n(ρ·ll − yl)/q(ρ)`.
pub fn concentrated_gradient<T: Real>(
    rho: T,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    m2: &CorrectedProjector<T>,
) -> Result<T> {
    let ly = weights.lag(y);
    Profile::new(y, &ly, weights, m2)
        .gradient(rho)
        .ok_or(SarError::SingularS { rho: rho.as_f64() })
}

/// `log|I − ρL|`: eigenvalue sum for symmetric weights, LU otherwise.
pub fn log_det_s<T: Real>(rho: T, weights: &SpatialWeights<T>) -> Result<T> {
    match weights.spectrum() {
        Some(ev) => spectral_log_det(rho, ev),
        None => lu_log_det(rho, weights.normalized()),
    }
}

pub(crate) fn spectral_log_det<T: Real>(rho: T, ev: &[T]) -> Result<T> {
    let mut acc = T::zero();
    for &lam in ev {
        let f = T::one() - rho * lam;
        if f <= T::zero() {
            return Err(SarError::SingularS { rho: rho.as_f64() });
        }
        acc += f.ln();
    }
    Ok(acc)
}

pub(crate) fn lu_log_det<T: Real>(rho: T, l: &DMatrix<T>) -> Result<T> {
    let n = l.nrows();
    let s = DMatrix::identity(n, n) - l * rho;
    match linalg::log_abs_det(s) {
        Some((v, sign)) if sign > T::zero() => Ok(v),
        _ => Err(SarError::SingularS { rho: rho.as_f64() }),
    }
}

/// Precomputed quadratic forms making each objective evaluation `O(n)` (or
/// one LU for non-symmetric weights).
///
/// With `q(ρ) = YᵀM₂Y − 2ρ·YᵀM₂LY + ρ²·(LY)ᵀM₂LY = n·σ̂²(ρ)`.
pub(crate) struct Profile<'a, T: Real> {
    pub(crate) n: T,
    pub(crate) yy: T,
    pub(crate) yl: T,
    pub(crate) ll: T,
    pub(crate) spectrum: Option<&'a [T]>,
    pub(crate) l: &'a DMatrix<T>,
}

impl<'a, T: Real> Profile<'a, T> {
    pub fn new(
        y: &DVector<T>,
        ly: &DVector<T>,
        weights: &'a SpatialWeights<T>,
        m2: &CorrectedProjector<T>,
    ) -> Self {
        Profile {
            n: T::count(y.len()),
            yy: m2.quad(y, y),
            yl: m2.quad(y, ly),
            ll: m2.quad(ly, ly),
            spectrum: weights.spectrum(),
            l: weights.normalized(),
        }
    }

    pub fn q(&self, rho: T) -> T {
        self.yy - T::lit(2.0) * rho * self.yl + rho * rho * self.ll
    }

    pub fn log_det(&self, rho: T) -> Result<T> {
        match self.spectrum {
            Some(ev) => spectral_log_det(rho, ev),
            None => lu_log_det(rho, self.l),
        }
    }

    pub fn objective(&self, rho: T) -> Result<T> {
        let q = self.q(rho);
        if !(q > T::zero()) {
            return Err(SarError::NegativeProfileVariance {
                rho: rho.as_f64(),
                value: (q / self.n).as_f64(),
            });
        }
        Ok(-self.log_det(rho)? + T::lit(0.5) * self.n * (q / self.n).ln())
    }

    /// `f(ρ) − f(anchor)`, with `+∞` where `f` is undefined.
    ///
    /// On the spectral path each term is formed as a `ln(1 + x)` of a
    /// difference, so the result keeps full relative precision close to the
    /// anchor. That precision is what lets the minimiser resolve `ρ̂` well
    /// beyond `√ε`.
    pub fn relative(&self, rho: T, anchor: T, anchor_value: T) -> T {
        let inf = T::max_value().unwrap();
        let q = self.q(rho);
        if !(q > T::zero()) {
            return inf;
        }
        match self.spectrum {
            Some(ev) => {
                let dr = rho - anchor;
                let mut dlog = T::zero();
                for &lam in ev {
                    let base = T::one() - anchor * lam;
                    let ratio = -dr * lam / base;
                    if !(T::one() + ratio > T::zero()) || base <= T::zero() {
                        return inf;
                    }
                    dlog += ratio.ln_1p();
                }
                let qa = self.q(anchor);
                let dq = dr * (-T::lit(2.0) * self.yl + (rho + anchor) * self.ll);
                -dlog + T::lit(0.5) * self.n * (dq / qa).ln_1p()
            }
            None => match self.objective(rho) {
                Ok(v) => v - anchor_value,
                Err(_) => inf,
            },
        }
    }

    /// `(f′(ρ), f″(ρ))` on the spectral path.
    pub fn derivatives(&self, rho: T) -> Option<(T, T)> {
        let ev = self.spectrum?;
        let q = self.q(rho);
        if !(q > T::zero()) {
            return None;
        }
        let (mut d1, mut d2) = (T::zero(), T::zero());
        for &lam in ev {
            let t = lam / (T::one() - rho * lam);
            d1 += t;
            d2 += t * t;
        }
        let g = rho * self.ll - self.yl;
        let first = d1 + self.n * g / q;
        let second = d2 + self.n * self.ll / q - T::lit(2.0) * self.n * g * g / (q * q);
        Some((first, second))
    }

    /// `f′(ρ)` on any path; the log-determinant part is `tr(G(ρ))`.
    pub fn gradient(&self, rho: T) -> Option<T> {
        if self.spectrum.is_some() {
            return self.derivatives(rho).map(|d| d.0);
        }
        let n = self.l.nrows();
        let s = DMatrix::identity(n, n) - self.l * rho;
        let g = s.lu().solve(self.l)?;
        let q = self.q(rho);
        Some(g.trace() + self.n * (rho * self.ll - self.yl) / q)
    }
}
