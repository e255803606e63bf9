//! Estimating measurement-error covariances: replicated measurements,
//! validation samples, proxy calibration and network embeddings.

use nalgebra::DMatrix;

use crate::error::{Result, SarError};
use crate::linalg;
use crate::scalar::Real;
use crate::weights::SpatialWeights;

/// Bounds applied to estimated edge probabilities `ÛⱼᵀÛᵢ`.
pub const PROBABILITY_CLAMP: f64 = 1e-9;

/// `k ≥ 2` replicate measurements of `d1` covariates for each observation.
#[derive(Debug, Clone)]
pub struct ReplicateSet<T: Real> {
    values: Vec<DMatrix<T>>,
    k: usize,
    d1: usize,
}

impl<T: Real> ReplicateSet<T> {
    /// One `k × d1` matrix per observation.
    pub fn new(values: Vec<DMatrix<T>>) -> Result<Self> {
        let first = values
            .first()
            .ok_or_else(|| SarError::Dimension("replicate set has no observations".into()))?;
        let (k, d1) = first.shape();
        if k < 2 {
            return Err(SarError::InsufficientReplicates { k });
        }
        for (i, v) in values.iter().enumerate() {
            if v.nrows() < 2 {
                return Err(SarError::InsufficientReplicates { k: v.nrows() });
            }
            if v.shape() != (k, d1) {
                return Err(SarError::Dimension(format!(
                    "observation {i} has {}x{} replicates, expected {k}x{d1}",
                    v.nrows(),
                    v.ncols()
                )));
            }
        }
        Ok(ReplicateSet { values, k, d1 })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn d1(&self) -> usize {
        self.d1
    }
    pub fn observation(&self, i: usize) -> &DMatrix<T> {
        &self.values[i]
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateEstimate<T: Real> {
    /// Replicate means, `n × d1`.
    pub u_tilde: DMatrix<T>,
    /// Estimated covariance of the error in a replicate mean.
    pub delta: DMatrix<T>,
    /// Estimated covariance of `vec(Δ̂)` (row-major), `d1² × d1²`.
    pub c_delta: DMatrix<T>,
}

/// Replicate means with `Δ̂ = Σᵢ Wᵢ / (n k (k−1))`, where
/// `Wᵢ = Σⱼ (U^R_ij − Ũᵢ)(U^R_ij − Ũᵢ)ᵀ`.
///
/// `C(Δ̂)` is the empirical variance of the per-observation contributions:
/// `Σᵢ dᵢdᵢᵀ / (n k (k−1))²` with `dᵢ = vec(Wᵢ) − k(k−1)·vec(Δ̂)`.
pub fn estimate_from_replicates<T: Real>(reps: &ReplicateSet<T>) -> ReplicateEstimate<T> {
    let (n, k, d1) = (reps.n(), reps.k(), reps.d1());
    let kt = T::count(k);
    let mut u_tilde = DMatrix::zeros(n, d1);
    let mut w = Vec::with_capacity(n);
    let mut total = DMatrix::zeros(d1, d1);
    for i in 0..n {
        let obs = reps.observation(i);
        let mean = obs.row_mean();
        u_tilde.row_mut(i).copy_from(&mean);
        let mut centred = obs.clone();
        for mut r in centred.row_iter_mut() {
            r -= &mean;
        }
        let wi = centred.transpose() * &centred;
        total += &wi;
        w.push(wi);
    }
    let denom = T::count(n) * kt * (kt - T::one());
    let delta = linalg::symmetrize(&(total / denom));
    let scale = kt * (kt - T::one());
    let dvec = linalg::vec_row_major(&delta) * scale;
    let mut c = DMatrix::zeros(d1 * d1, d1 * d1);
    for wi in &w {
        let di = linalg::vec_row_major(wi) - &dvec;
        c += &di * di.transpose();
    }
    let c_delta = linalg::symmetrize(&(c / (denom * denom)));
    ReplicateEstimate {
        u_tilde,
        delta,
        c_delta,
    }
}

/// Whether validation differences are centred at their mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    #[default]
    MeanCentered,
    Uncentered,
}

/// Sample covariance of `U − Ũ` over `m ≥ 2` validation rows, divisor `m − 1`.
pub fn calibrate_validation<T: Real>(
    u_val: &DMatrix<T>,
    u_tilde_val: &DMatrix<T>,
    centering: Centering,
) -> Result<DMatrix<T>> {
    if u_val.shape() != u_tilde_val.shape() {
        return Err(SarError::Dimension(
            "validation matrices differ in shape".into(),
        ));
    }
    let m = u_val.nrows();
    if m < 2 {
        return Err(SarError::InsufficientValidation { m });
    }
    let mut diff = u_val - u_tilde_val;
    if centering == Centering::MeanCentered {
        let mean = diff.row_mean();
        for mut r in diff.row_iter_mut() {
            r -= &mean;
        }
    }
    Ok(linalg::symmetrize(&(diff.transpose() * &diff)) / T::count(m - 1))
}

#[derive(Debug, Clone)]
pub struct ProxyCalibration<T: Real> {
    /// Bias-shifted proxy for all rows.
    pub u_tilde: DMatrix<T>,
    pub delta: DMatrix<T>,
    /// `β̂ = mean(proxy − U)` on the validation rows.
    pub bias: DMatrix<T>,
}

/// Proxy related to the truth by an additive bias: `Ũ = proxy − β̂`, with
/// `Δ̂` the covariance of `Ũ − U` on the validation rows.
pub fn calibrate_proxy<T: Real>(
    proxy_val: &DMatrix<T>,
    u_val: &DMatrix<T>,
    proxy_full: &DMatrix<T>,
) -> Result<ProxyCalibration<T>> {
    if proxy_val.shape() != u_val.shape() || proxy_full.ncols() != u_val.ncols() {
        return Err(SarError::Dimension(
            "proxy and validation matrices disagree".into(),
        ));
    }
    let m = u_val.nrows();
    if m < 2 {
        return Err(SarError::InsufficientValidation { m });
    }
    let bias = (proxy_val - u_val).row_mean();
    let shift = |x: &DMatrix<T>| {
        let mut out = x.clone();
        for mut r in out.row_iter_mut() {
            r -= &bias;
        }
        out
    };
    let shifted_val = shift(proxy_val);
    let delta = calibrate_validation(u_val, &shifted_val, Centering::Uncentered)?;
    Ok(ProxyCalibration {
        u_tilde: shift(proxy_full),
        delta,
        bias: DMatrix::from_row_slice(1, bias.len(), bias.as_slice()),
    })
}

/// Adjacency spectral embedding with optional per-row covariances.
#[derive(Debug, Clone)]
pub struct EmbeddingResult<T: Real> {
    /// `n × d` latent positions.
    pub u_hat: DMatrix<T>,
    pub d: usize,
    /// Top-`d` eigenvalues of `A`, nonincreasing and positive.
    pub singular_values: Vec<T>,
    pub delta_hats: Vec<DMatrix<T>>,
}

/// `Û = V_d·diag(√λ_d)` from the `d` algebraically largest eigenpairs of a
/// symmetric `A`. Each column is signed so its largest-magnitude entry is
/// positive.
pub fn ase_embed<T: Real>(weights: &SpatialWeights<T>, d: usize) -> Result<EmbeddingResult<T>> {
    let n = weights.n();
    if d == 0 || d > n {
        return Err(SarError::Dimension(format!(
            "embedding dimension {d} must lie in 1..={n}"
        )));
    }
    if !weights.is_symmetric() {
        return Err(SarError::InvalidWeights(
            "embedding requires a symmetric adjacency matrix".into(),
        ));
    }
    let eig = weights.adjacency().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut u_hat = DMatrix::zeros(n, d);
    let mut values = Vec::with_capacity(d);
    for (c, &idx) in order.iter().take(d).enumerate() {
        let lam = eig.eigenvalues[idx];
        if !(lam > T::zero()) {
            return Err(SarError::RankDeficientEmbedding {
                index: c + 1,
                eigenvalue: lam.as_f64(),
            });
        }
        let v = eig.eigenvectors.column(idx);
        let mut pivot = T::zero();
        for &x in v.iter() {
            if x.abs() > pivot.abs() {
                pivot = x;
            }
        }
        let sign = if pivot < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        let s = lam.sqrt() * sign;
        u_hat.column_mut(c).copy_from(&(v * s));
        values.push(lam);
    }
    Ok(EmbeddingResult {
        u_hat,
        d,
        singular_values: values,
        delta_hats: Vec::new(),
    })
}

/// Per-row covariance estimates for `Û` under a random dot product graph:
///
/// `Δ̂ᵢ = M⁻¹ (Σⱼ pᵢⱼ(1 − pᵢⱼ) ÛⱼÛⱼᵀ) M⁻¹ / n²`, `M = (1/n) Σᵢ ÛᵢÛᵢᵀ`,
/// `pᵢⱼ = ÛⱼᵀÛᵢ` clamped to `[1e-9, 1 − 1e-9]`.
///
/// Without the `1/n²` factor this is `n` times the limiting covariance of
/// `√n(Ûᵢ − Uᵢ)`; the factor makes it a finite-sample covariance of `Ûᵢ`.
/// Each matrix is symmetrised and its negative eigenvalues clipped.
pub fn rdpg_row_covariances<T: Real>(emb: &EmbeddingResult<T>) -> Result<Vec<DMatrix<T>>> {
    let u = &emb.u_hat;
    let (n, d) = u.shape();
    let nt = T::count(n);
    let m = u.transpose() * u / nt;
    let (m_inv, _) = linalg::guarded_symmetric_inverse(&m, T::lit(1e12))
        .map_err(|_| SarError::DegenerateEmbedding)?;
    let lo = T::lit(PROBABILITY_CLAMP);
    let hi = T::one() - lo;
    let p = u * u.transpose();
    let outer: Vec<DMatrix<T>> = (0..n).map(|j| u.row(j).transpose() * u.row(j)).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut inner = DMatrix::zeros(d, d);
        for j in 0..n {
            let pij = p[(i, j)].max(lo).min(hi);
            inner += &outer[j] * (pij * (T::one() - pij));
        }
        let di = &m_inv * inner * &m_inv / (nt * nt);
        out.push(linalg::clip_psd(&linalg::symmetrize(&di)));
    }
    Ok(out)
}

/// [`ase_embed`] followed by [`rdpg_row_covariances`].
pub fn embed_with_covariances<T: Real>(
    weights: &SpatialWeights<T>,
    d: usize,
) -> Result<EmbeddingResult<T>> {
    let mut emb = ase_embed(weights, d)?;
    emb.delta_hats = rdpg_row_covariances(&emb)?;
    Ok(emb)
}
