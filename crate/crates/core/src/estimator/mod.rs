//! The corrected quasi-maximum-likelihood estimator.
//!
//! `δ` and `σ²` are profiled out in closed form, leaving a one-dimensional
//! search over `ρ`:
//!
//! 1. `M₂ = I − X̃(X̃ᵀX̃ − ΣΩ)⁻¹X̃ᵀ`
//! 2. `σ̂²(ρ) = YᵀS(ρ)ᵀM₂S(ρ)Y / n` with `S(ρ) = I − ρL`
//! 3. `ρ̂ = argmin −log|I − ρL| + (n/2)·log σ̂²(ρ)`
//! 4. `δ̂ = (X̃ᵀX̃ − ΣΩ)⁻¹X̃ᵀS(ρ̂)Y`, `σ̂² = σ̂²(ρ̂)`
//!
//! The variance is not degrees-of-freedom adjusted. Consistency theory wants
//! node degrees that grow with `n`; nothing here checks that for a finite
//! network.

mod brent;
mod newton;
mod profile;
mod projector;

pub use brent::{minimize as brent_minimize, BrentOutcome};
pub use newton::{newton_rho_symmetric, NewtonOutcome};
pub use profile::{concentrated_gradient, concentrated_objective, log_det_s, sigma2_of_rho};
pub use projector::{m2_projector, CorrectedProjector, GRAM_CONDITION_LIMIT};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{MeasurementErrorSpec, ObservedDesign};
use crate::error::{Result, SarError};
use crate::inference::{self, SandwichCovariance};
use crate::scalar::Real;
use crate::weights::SpatialWeights;
use profile::Profile;

/// Distance from an interval endpoint below which a boundary warning is raised.
pub const BOUNDARY_WARNING: f64 = 1e-4;
const DEFAULT_BOUND: f64 = 0.999;
const SPECTRAL_MARGIN: f64 = 1e-6;

/// `θ = (δ, ρ, σ²)` with `δ = (β, γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SarParams<T: Real> {
    pub delta: DVector<T>,
    pub rho: T,
    pub sigma2: T,
}

impl<T: Real> SarParams<T> {
    pub fn new(delta: DVector<T>, rho: T, sigma2: T) -> Self {
        SarParams { delta, rho, sigma2 }
    }

    /// Stacked `(δ, ρ, σ²)`.
    pub fn to_vector(&self) -> DVector<T> {
        let p = self.delta.len();
        let mut v = DVector::zeros(p + 2);
        v.rows_mut(0, p).copy_from(&self.delta);
        v[p] = self.rho;
        v[p + 1] = self.sigma2;
        v
    }

    pub fn from_vector(v: &DVector<T>) -> Self {
        let p = v.len() - 2;
        SarParams {
            delta: v.rows(0, p).into_owned(),
            rho: v[p],
            sigma2: v[p + 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brent,
    Newton,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Brent => "brent",
            Method::Newton => "newton",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions<T: Real> {
    /// Search interval for `ρ`; derived from the weights when `None`.
    pub rho_interval: Option<(T, T)>,
    /// Absolute tolerance on `ρ`.
    pub tol: T,
    pub max_iter: usize,
    pub method: Method,
    /// Coarse scan resolution used to bracket the minimiser before refining.
    pub grid_points: usize,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            rho_interval: None,
            tol: T::tol(1e-10),
            max_iter: 500,
            method: Method::Brent,
            grid_points: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerRecord<T: Real> {
    pub method: Method,
    pub iterations: usize,
    /// `f′(ρ̂)` of the concentrated objective.
    pub final_gradient: T,
    pub rho_interval: (T, T),
}

#[derive(Debug, Clone)]
pub struct FitResult<T: Real> {
    pub params: SarParams<T>,
    /// Covariance of `(δ̂, ρ̂, σ̂²)`: the sandwich, or its inflated form when the
    /// error covariance was estimated. NaN when inference failed.
    pub vcov: DMatrix<T>,
    pub std_errors: DVector<T>,
    /// `"sandwich"` or `"inflated"`; `"unavailable"` when inference failed.
    pub se_kind: &'static str,
    pub covariance: Option<SandwichCovariance<T>>,
    /// Corrected log-likelihood at the optimum.
    pub loglik: T,
    pub optimizer: OptimizerRecord<T>,
    pub warnings: Vec<String>,
}

/// The default `ρ` interval: `(−0.999, 0.999)`, intersected with
/// `(1/λ_min, 1/λ_max)` shrunk by `1e-6` when the spectrum of `L` is known
/// and straddles zero.
pub fn default_rho_interval<T: Real>(weights: &SpatialWeights<T>) -> (T, T) {
    let mut lo = -T::lit(DEFAULT_BOUND);
    let mut hi = T::lit(DEFAULT_BOUND);
    if let Some(ev) = weights.spectrum() {
        let (min, max) = (ev[0], ev[ev.len() - 1]);
        if min < T::zero() && max > T::zero() {
            let margin = T::lit(SPECTRAL_MARGIN);
            let slo = T::one() / min + margin;
            let shi = T::one() / max - margin;
            if slo > lo {
                lo = slo;
            }
            if shi < hi {
                hi = shi;
            }
        }
    }
    (lo, hi)
}

fn check_inputs<T: Real>(
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<()> {
    let n = y.len();
    if weights.n() != n || design.n() != n {
        return Err(SarError::Dimension(format!(
            "y has {n} rows, weights {}, design {}",
            weights.n(),
            design.n()
        )));
    }
    if me.n() != n || me.p() != design.p() {
        return Err(SarError::Dimension(format!(
            "error specification is for n = {}, p = {}; data has n = {n}, p = {}",
            me.n(),
            me.p(),
            design.p()
        )));
    }
    if me.d1() != 0 && me.d1() != design.d1() {
        return Err(SarError::Dimension(format!(
            "error specification covers {} columns, design marks {} as error-prone",
            me.d1(),
            design.d1()
        )));
    }
    if n <= design.p() + 2 {
        return Err(SarError::Dimension(format!(
            "need n > p + 2, got n = {n}, p = {}",
            design.p()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SarError::InvalidDesign(
            "response has non-finite values".into(),
        ));
    }
    Ok(())
}

/// Brent on the relative objective after a coarse scan that picks the
/// sub-bracket holding the smallest value. Ties go to the point nearest zero.
fn brent_search<T: Real>(
    profile: &Profile<'_, T>,
    (lo, hi): (T, T),
    opts: &FitOptions<T>,
) -> Result<(T, usize)> {
    let k = if opts.grid_points > 1 {
        opts.grid_points
    } else if profile_is_spectral(profile) {
        64
    } else {
        16
    };
    let step = (hi - lo) / T::count(k);
    let mut best: Option<(usize, T)> = None;
    for i in 0..=k {
        let r = lo + step * T::count(i);
        if let Ok(v) = profile.objective(r) {
            let better = match best {
                None => true,
                Some((bi, bv)) => v < bv || (v == bv && r.abs() < (lo + step * T::count(bi)).abs()),
            };
            if better {
                best = Some((i, v));
            }
        }
    }
    let (bi, anchor_value) = best.ok_or_else(|| SarError::NoConvergence {
        method: "brent",
        iterations: 0,
        trace: format!("objective undefined on every scan point of [{lo}, {hi}]"),
    })?;
    let anchor = lo + step * T::count(bi);
    let a = if bi == 0 { lo } else { anchor - step };
    let b = if bi == k { hi } else { anchor + step };
    let out = brent::minimize(
        |r| profile.relative(r, anchor, anchor_value),
        a,
        b,
        opts.tol,
        T::default_epsilon() * T::lit(64.0),
        opts.max_iter,
    );
    if !out.converged {
        return Err(SarError::NoConvergence {
            method: "brent",
            iterations: out.iterations,
            trace: format!("last iterate rho = {}, bracket [{a}, {b}]", out.x),
        });
    }
    Ok((out.x, out.iterations + k + 1))
}

fn profile_is_spectral<T: Real>(p: &Profile<'_, T>) -> bool {
    p.derivatives(T::zero()).is_some()
}

/// Fits the corrected QMLE. Inference failures do not abort the fit; they are
/// reported in `warnings` and leave NaN standard errors.
pub fn fit_meqmle<T: Real>(
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
    opts: &FitOptions<T>,
) -> Result<FitResult<T>> {
    check_inputs(y, weights, design, me)?;
    let n = y.len();
    let m2 = m2_projector(design, me)?;
    let ly = weights.lag(y);
    let profile = Profile::new(y, &ly, weights, &m2);
    let interval = opts
        .rho_interval
        .unwrap_or_else(|| default_rho_interval(weights));
    if !(interval.0 < interval.1) {
        return Err(SarError::Dimension(format!(
            "empty rho interval ({}, {})",
            interval.0, interval.1
        )));
    }

    let (rho, iterations, gradient) = match opts.method {
        Method::Brent => {
            let (rho, it) = brent_search(&profile, interval, opts)?;
            (
                rho,
                it,
                profile.gradient(rho).unwrap_or_else(<T as Real>::nan),
            )
        }
        Method::Newton => {
            if weights.spectrum().is_none() {
                return Err(SarError::NewtonRequiresSymmetric);
            }
            let out = newton::solve(&profile, interval, T::zero(), opts.tol, opts.max_iter)?;
            (out.rho, out.iterations, out.gradient)
        }
    };

    let sigma2 = profile.q(rho) / T::count(n);
    if !(sigma2 > T::zero()) {
        return Err(SarError::NegativeProfileVariance {
            rho: rho.as_f64(),
            value: sigma2.as_f64(),
        });
    }
    let sy = y - &ly * rho;
    let delta = m2.coefficients(&sy);
    let params = SarParams { delta, rho, sigma2 };
    let logdet = profile.log_det(rho)?;
    let two_pi = T::two_pi();
    // At the profiled optimum ṼᵀṼ − δᵀΣΩδ = nσ̂².
    let loglik = -T::lit(0.5) * T::count(n) * ((two_pi * sigma2).ln() + T::one()) + logdet;

    let mut warnings = Vec::new();
    let edge = T::lit(BOUNDARY_WARNING);
    if (rho - interval.0).abs() < edge || (interval.1 - rho).abs() < edge {
        warnings.push(format!(
            "rho estimate {rho} is within {BOUNDARY_WARNING:e} of the search interval ({}, {})",
            interval.0, interval.1
        ));
    }

    let k = design.p() + 2;
    let (vcov, se_kind, covariance) = match inference::sandwich(&params, y, weights, design, me) {
        Ok(sw) => {
            if me.c_hat().is_some() {
                match inference::inflate_for_estimated_omega(sw.clone(), &params, me) {
                    Ok(infl) => (infl.inflated.clone().unwrap(), "inflated", Some(infl)),
                    Err(e) => {
                        warnings.push(format!("inflation skipped: {e}"));
                        (sw.vcov.clone(), "sandwich", Some(sw))
                    }
                }
            } else {
                (sw.vcov.clone(), "sandwich", Some(sw))
            }
        }
        Err(e) => {
            warnings.push(format!("standard errors unavailable: {e}"));
            (
                DMatrix::from_element(k, k, <T as Real>::nan()),
                "unavailable",
                None,
            )
        }
    };
    let std_errors = DVector::from_iterator(k, (0..k).map(|j| vcov[(j, j)].max(T::zero()).sqrt()));
    let std_errors = if se_kind == "unavailable" {
        DVector::from_element(k, <T as Real>::nan())
    } else {
        std_errors
    };

    Ok(FitResult {
        params,
        vcov,
        std_errors,
        se_kind,
        covariance,
        loglik,
        optimizer: OptimizerRecord {
            method: opts.method,
            iterations,
            final_gradient: gradient,
            rho_interval: interval,
        },
        warnings,
    })
}

/// The standard QMLE: the corrected estimator with no measurement error.
pub fn fit_qmle_uncorrected<T: Real>(
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    opts: &FitOptions<T>,
) -> Result<FitResult<T>> {
    let me = MeasurementErrorSpec::none(y.len(), design.p());
    fit_meqmle(y, weights, design, &me, opts)
}
