//! Corrected score, information and sandwich covariance.
//!
//! Convention: `Î` and `Σ̂` are `1/n`-scaled, so
//! `vcov = Î⁻¹ Σ̂ Î⁻¹ / n` holds per-parameter variances directly. With an
//! estimated shared `Ω̂` of covariance `C` (natural scale of `vec(Ω̂)`), the
//! inflated covariance is `Î⁻¹ (Σ̂ + D C Dᵀ / n) Î⁻¹ / n`, where `D` is the
//! sum-scale Jacobian of the score with respect to `vec(Ω)`.
//!
//! Parameter order everywhere is `(δ, ρ, σ²)`; `vec` is row-major.

use nalgebra::{DMatrix, DVector};

use crate::design::{ErrorKind, MeasurementErrorSpec, ObservedDesign};
use crate::error::{Result, SarError};
use crate::estimator::SarParams;
use crate::linalg;
use crate::scalar::Real;
use crate::weights::SpatialWeights;

/// Condition-number limit when inverting `Î`.
pub const INFORMATION_CONDITION_LIMIT: f64 = 1e12;

/// `∇θ l*` split by parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T: Real> {
    pub d_delta: DVector<T>,
    pub d_rho: T,
    pub d_sigma2: T,
}

impl<T: Real> ScoreVector<T> {
    pub fn to_vector(&self) -> DVector<T> {
        let p = self.d_delta.len();
        let mut v = DVector::zeros(p + 2);
        v.rows_mut(0, p).copy_from(&self.d_delta);
        v[p] = self.d_rho;
        v[p + 1] = self.d_sigma2;
        v
    }
}

#[derive(Debug, Clone)]
pub struct SandwichCovariance<T: Real> {
    /// `Î`, `1/n`-scaled.
    pub information: DMatrix<T>,
    pub information_inverse: DMatrix<T>,
    /// `Σ̂ = (1/n) Σᵢ sᵢ sᵢᵀ`.
    pub score_outer: DMatrix<T>,
    pub vcov: DMatrix<T>,
    pub inflated: Option<DMatrix<T>>,
}

impl<T: Real> SandwichCovariance<T> {
    pub fn std_errors(&self) -> DVector<T> {
        diag_sqrt(&self.vcov)
    }

    pub fn inflated_std_errors(&self) -> Option<DVector<T>> {
        self.inflated.as_ref().map(diag_sqrt)
    }
}

fn diag_sqrt<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_iterator(
        m.nrows(),
        (0..m.nrows()).map(|i| m[(i, i)].max(T::zero()).sqrt()),
    )
}

/// Quantities shared by the score and information at one `θ`.
struct Eval<'a, T: Real> {
    x: &'a DMatrix<T>,
    me: &'a MeasurementErrorSpec<T>,
    theta: &'a SarParams<T>,
    ly: DVector<T>,
    v: DVector<T>,
    /// `δᵀΩᵢδ` per observation.
    qi: DVector<T>,
}

impl<'a, T: Real> Eval<'a, T> {
    fn new(
        theta: &'a SarParams<T>,
        y: &DVector<T>,
        weights: &SpatialWeights<T>,
        design: &'a ObservedDesign<T>,
        me: &'a MeasurementErrorSpec<T>,
    ) -> Result<Self> {
        let n = y.len();
        if weights.n() != n || design.n() != n || me.n() != n {
            return Err(SarError::Dimension(
                "y, weights, design and error specification disagree on n".into(),
            ));
        }
        if theta.delta.len() != design.p() || me.p() != design.p() {
            return Err(SarError::Dimension(format!(
                "delta has length {}, design has {} columns",
                theta.delta.len(),
                design.p()
            )));
        }
        let ly = weights.lag(y);
        let x = design.x();
        let v = y - &ly * theta.rho - x * &theta.delta;
        let qi = me.quadratic_forms(&theta.delta);
        Ok(Eval {
            x,
            me,
            theta,
            ly,
            v,
            qi,
        })
    }

    fn n(&self) -> usize {
        self.v.len()
    }

    /// `ṼᵀṼ − δᵀ(ΣΩ)δ`.
    fn corrected_rss(&self) -> T {
        self.v.norm_squared() - self.qi.sum()
    }

    /// `Ωᵢδ` (length p).
    fn omega_delta(&self, i: usize) -> DVector<T> {
        let p = self.theta.delta.len();
        let mut out = DVector::zeros(p);
        if let Some(block) = self.me.delta(i) {
            let d1 = block.nrows();
            let b = self.theta.delta.rows(0, d1);
            out.rows_mut(0, d1).copy_from(&(block * b));
        }
        out
    }

    fn score(&self, tr_g: T) -> ScoreVector<T> {
        let s2 = self.theta.sigma2;
        let n = T::count(self.n());
        let d_delta = (self.x.transpose() * &self.v + self.me.omega_sum() * &self.theta.delta) / s2;
        let d_rho = self.ly.dot(&self.v) / s2 - tr_g;
        let d_sigma2 = -n / (T::lit(2.0) * s2) + self.corrected_rss() / (T::lit(2.0) * s2 * s2);
        ScoreVector {
            d_delta,
            d_rho,
            d_sigma2,
        }
    }
}

/// `G(ρ) = S(ρ)⁻¹L` (equal to `L S(ρ)⁻¹`).
pub fn g_matrix<T: Real>(rho: T, weights: &SpatialWeights<T>) -> Result<DMatrix<T>> {
    let s = weights.s_matrix(rho);
    let singular = SarError::SingularS { rho: rho.as_f64() };
    if rho.abs() < T::one() {
        // Row-stochastic L with zero diagonal keeps S strictly diagonally dominant.
        let inv = linalg::block_inverse(&s).ok_or(singular)?;
        return Ok(inv * weights.normalized());
    }
    s.lu().solve(weights.normalized()).ok_or(singular)
}

fn trace_g<T: Real>(rho: T, weights: &SpatialWeights<T>) -> Result<T> {
    if let Some(ev) = weights.spectrum() {
        let mut acc = T::zero();
        for &lam in ev {
            let d = T::one() - rho * lam;
            if d <= T::zero() {
                return Err(SarError::SingularS { rho: rho.as_f64() });
            }
            acc += lam / d;
        }
        return Ok(acc);
    }
    Ok(g_matrix(rho, weights)?.trace())
}

/// The corrected log-likelihood
/// `l*(θ) = −(n/2)log(2πσ²) − (ṼᵀṼ − δᵀΣΩδ)/(2σ²) + log|S(ρ)|`.
pub fn corrected_loglik<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<T> {
    let ev = Eval::new(theta, y, weights, design, me)?;
    let n = T::count(ev.n());
    let logdet = crate::estimator::log_det_s(theta.rho, weights)?;
    let s2 = theta.sigma2;
    Ok(
        -T::lit(0.5) * n * (T::two_pi() * s2).ln() - ev.corrected_rss() / (T::lit(2.0) * s2)
            + logdet,
    )
}

/// `∇θ l*(θ)`, sum scale.
pub fn corrected_score<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<ScoreVector<T>> {
    let ev = Eval::new(theta, y, weights, design, me)?;
    Ok(ev.score(trace_g(theta.rho, weights)?))
}

/// Exact Hessian `∇²θ l*(θ)`, sum scale.
pub fn corrected_hessian<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<DMatrix<T>> {
    let ev = Eval::new(theta, y, weights, design, me)?;
    let g = g_matrix(theta.rho, weights)?;
    let p = design.p();
    let n = T::count(ev.n());
    let s2 = theta.sigma2;
    let s4 = s2 * s2;
    let x = ev.x;
    let xt = x.transpose();
    let mut h = DMatrix::zeros(p + 2, p + 2);
    let dd = -(&xt * x - me.omega_sum()) / s2;
    h.view_mut((0, 0), (p, p)).copy_from(&dd);
    let d_rho = -(&xt * &ev.ly) / s2;
    let d_s2 = -(&xt * &ev.v + me.omega_sum() * &theta.delta) / s4;
    for j in 0..p {
        h[(j, p)] = d_rho[j];
        h[(p, j)] = d_rho[j];
        h[(j, p + 1)] = d_s2[j];
        h[(p + 1, j)] = d_s2[j];
    }
    let tr_gg = linalg::trace_of_square(&g);
    h[(p, p)] = -ev.ly.norm_squared() / s2 - tr_gg;
    let rs = -ev.ly.dot(&ev.v) / s4;
    h[(p, p + 1)] = rs;
    h[(p + 1, p)] = rs;
    h[(p + 1, p + 1)] = n / (T::lit(2.0) * s4) - ev.corrected_rss() / (s4 * s2);
    Ok(h)
}

fn information_from<T: Real>(ev: &Eval<'_, T>, g: &DMatrix<T>) -> DMatrix<T> {
    let theta = ev.theta;
    let me = ev.me;
    let x = ev.x;
    let p = theta.delta.len();
    let n = T::count(ev.n());
    let s2 = theta.sigma2;
    let xt = x.transpose();
    let gx = g * x;
    let gii = DVector::from_iterator(ev.n(), (0..ev.n()).map(|i| g[(i, i)]));
    // (GᵀG)ᵢᵢ is the squared norm of column i of G.
    let gtg_ii = DVector::from_iterator(ev.n(), g.column_iter().map(|c| c.norm_squared()));

    let mut info = DMatrix::zeros(p + 2, p + 2);
    let dd = (&xt * x - me.omega_sum()) / s2;
    info.view_mut((0, 0), (p, p)).copy_from(&dd);
    let dr = (&xt * &gx - me.weighted_omega_sum(&gii)) * &theta.delta / s2;
    for j in 0..p {
        info[(j, p)] = dr[j];
        info[(p, j)] = dr[j];
    }
    let quad = (gx.transpose() * &gx - me.weighted_omega_sum(&gtg_ii)) * &theta.delta;
    let tr_gtg = g.norm_squared();
    let tr_gg = linalg::trace_of_square(g);
    info[(p, p)] = theta.delta.dot(&quad) / s2 + tr_gtg + tr_gg;
    let rs = g.trace() / s2;
    info[(p, p + 1)] = rs;
    info[(p + 1, p)] = rs;
    info[(p + 1, p + 1)] = n / (T::lit(2.0) * s2 * s2);
    info / n
}

/// `Î(θ)`, `1/n`-scaled.
pub fn observed_information<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<DMatrix<T>> {
    let ev = Eval::new(theta, y, weights, design, me)?;
    let g = g_matrix(theta.rho, weights)?;
    Ok(information_from(&ev, &g))
}

fn per_observation_from<T: Real>(ev: &Eval<'_, T>, g_diag: &DVector<T>) -> DMatrix<T> {
    let theta = ev.theta;
    let p = theta.delta.len();
    let n = ev.n();
    let s2 = theta.sigma2;
    let two = T::lit(2.0);
    let mut out = DMatrix::zeros(p + 2, n);
    for i in 0..n {
        let vi = ev.v[i];
        let od = ev.omega_delta(i);
        for j in 0..p {
            out[(j, i)] = (ev.x[(i, j)] * vi + od[j]) / s2;
        }
        out[(p, i)] = ev.ly[i] * vi / s2 - g_diag[i];
        out[(p + 1, i)] = -T::one() / (two * s2) + (vi * vi - ev.qi[i]) / (two * s2 * s2);
    }
    out
}

/// Per-observation scores `sᵢ` as the columns of a `(p+2) × n` matrix. They
/// sum to the full corrected score.
pub fn per_observation_scores<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<DMatrix<T>> {
    let ev = Eval::new(theta, y, weights, design, me)?;
    let g = g_matrix(theta.rho, weights)?;
    Ok(per_observation_from(&ev, &g.diagonal()))
}

/// `Σ̂ = (1/n) Σᵢ sᵢ sᵢᵀ`, uncentred.
pub fn score_outer_product<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<DMatrix<T>> {
    let s = per_observation_scores(theta, y, weights, design, me)?;
    Ok(outer_mean(&s))
}

fn outer_mean<T: Real>(s: &DMatrix<T>) -> DMatrix<T> {
    linalg::symmetrize(&(s * s.transpose())) / T::count(s.ncols())
}

fn assemble<T: Real>(
    information: DMatrix<T>,
    score_outer: DMatrix<T>,
    n: usize,
) -> Result<SandwichCovariance<T>> {
    let information = linalg::symmetrize(&information);
    let (inv, _) =
        linalg::guarded_symmetric_inverse(&information, T::lit(INFORMATION_CONDITION_LIMIT))
            .map_err(|c| SarError::SingularInformation {
                condition: c.as_f64(),
            })?;
    let vcov = linalg::symmetrize(&(&inv * &score_outer * &inv)) / T::count(n);
    Ok(SandwichCovariance {
        information,
        information_inverse: inv,
        score_outer,
        vcov,
        inflated: None,
    })
}

/// `Î`, `Σ̂` and `vcov = Î⁻¹Σ̂Î⁻¹/n` from a single solve for `G`.
pub fn sandwich<T: Real>(
    theta: &SarParams<T>,
    y: &DVector<T>,
    weights: &SpatialWeights<T>,
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<SandwichCovariance<T>> {
    let ev = Eval::new(theta, y, weights, design, me)?;
    let g = g_matrix(theta.rho, weights)?;
    let info = information_from(&ev, &g);
    let scores = per_observation_from(&ev, &g.diagonal());
    assemble(info, outer_mean(&scores), ev.n())
}

/// `D(θ) = ∂(∇θ l*)/∂vec(Ω)ᵀ` for a shared `Ω`, sum scale, `(p+2) × p²`.
///
/// Rows: `(n/σ²)(I_p ⊗ δᵀ)`, a zero row for `ρ`, and `−(n/(2σ⁴))(δᵀ ⊗ δᵀ)`.
pub fn d_matrix<T: Real>(theta: &SarParams<T>, n: usize) -> DMatrix<T> {
    let p = theta.delta.len();
    let nn = T::count(n);
    let s2 = theta.sigma2;
    let d = &theta.delta;
    let mut out = DMatrix::zeros(p + 2, p * p);
    for j in 0..p {
        for b in 0..p {
            out[(j, j * p + b)] = nn / s2 * d[b];
        }
    }
    let c = -nn / (T::lit(2.0) * s2 * s2);
    for a in 0..p {
        for b in 0..p {
            out[(p + 1, a * p + b)] = c * d[a] * d[b];
        }
    }
    out
}

/// Fills `inflated = Î⁻¹(Σ̂ + D Ĉ Dᵀ/n)Î⁻¹/n` using the `Ĉ` carried by `me`.
pub fn inflate_for_estimated_omega<T: Real>(
    mut sw: SandwichCovariance<T>,
    theta: &SarParams<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<SandwichCovariance<T>> {
    let c = match me.kind() {
        ErrorKind::EstimatedShared { c_hat, .. } => c_hat,
        _ => {
            return Err(SarError::InvalidC(
                "error specification carries no covariance estimate".into(),
            ))
        }
    };
    let p = theta.delta.len();
    if c.nrows() != p * p || c.ncols() != p * p {
        return Err(SarError::InvalidC(format!("expected {0}x{0}", p * p)));
    }
    let scale = c.amax();
    if linalg::min_eigenvalue(c) < -T::tol(1e-10) * (T::one() + scale) {
        return Err(SarError::InvalidC("not positive semidefinite".into()));
    }
    let n = me.n();
    let d = d_matrix(theta, n);
    let inc = &d * c * d.transpose() / T::count(n);
    let inv = &sw.information_inverse;
    let inflated = linalg::symmetrize(&(inv * (&sw.score_outer + inc) * inv)) / T::count(n);
    sw.inflated = Some(inflated);
    Ok(sw)
}
