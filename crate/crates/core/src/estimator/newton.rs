use nalgebra::DVector;

use super::profile::Profile;
use super::projector::CorrectedProjector;
use crate::error::{Result, SarError};
use crate::scalar::Real;
use crate::weights::SpatialWeights;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOutcome<T> {
    pub rho: T,
    pub iterations: usize,
    pub gradient: T,
}

/// Safeguarded Newton–Raphson on `f′(ρ) = 0` for symmetric weights, using
/// the closed-form first and second derivatives built on the eigenvalues
/// `λᵢ` of `L`. Steps that leave the current sign-change bracket, or come
/// from a non-positive curvature, are replaced by bisection.
pub fn newton_rho_symmetric<T: Real>(
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    m2: &CorrectedProjector<T>,
    interval: (T, T),
    rho_init: T,
    tol: T,
    max_iter: usize,
) -> Result<NewtonOutcome<T>> {
    if weights.spectrum().is_none() {
        return Err(SarError::NewtonRequiresSymmetric);
    }
    let ly = weights.lag(y);
    let profile = Profile::new(y, &ly, weights, m2);
    solve(&profile, interval, rho_init, tol, max_iter)
}

pub(crate) fn solve<T: Real>(
    profile: &Profile<'_, T>,
    (mut lo, mut hi): (T, T),
    rho_init: T,
    tol: T,
    max_iter: usize,
) -> Result<NewtonOutcome<T>> {
    let fail = |iterations: usize, trace: String| SarError::NoConvergence {
        method: "newton",
        iterations,
        trace,
    };
    let deriv = |r: T| {
        profile
            .derivatives(r)
            .ok_or_else(|| fail(0, format!("derivative undefined at rho = {r}")))
    };
    let (g_lo, _) = deriv(lo)?;
    let (g_hi, _) = deriv(hi)?;
    if !(g_lo < T::zero() && g_hi > T::zero()) {
        return Err(fail(
            0,
            format!("no sign change of f' on [{lo}, {hi}]: f'(lo) = {g_lo:e}, f'(hi) = {g_hi:e}"),
        ));
    }
    let half = T::lit(0.5);
    let mut x = if rho_init > lo && rho_init < hi {
        rho_init
    } else {
        half * (lo + hi)
    };
    let mut trace = Vec::new();
    for iter in 1..=max_iter {
        let (g, h) = deriv(x)?;
        if g == T::zero() {
            return Ok(NewtonOutcome {
                rho: x,
                iterations: iter,
                gradient: g,
            });
        }
        if g < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - g / h;
        let next = if h > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            half * (lo + hi)
        };
        if trace.len() < 8 {
            trace.push(format!("{x:.6e}"));
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol || hi - lo <= tol {
            let (g, _) = deriv(x)?;
            return Ok(NewtonOutcome {
                rho: x,
                iterations: iter,
                gradient: g,
            });
        }
    }
    Err(fail(max_iter, format!("iterates {}", trace.join(", "))))
}
