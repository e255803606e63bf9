//! Data generators: block-model networks, Gaussian covariates, SAR outcomes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SarError};
use crate::estimator::SarParams;
use crate::linalg;
use crate::mecov::ReplicateSet;
use crate::weights::{build_row_normalized, SpatialWeights};

/// Community labels: `n/k` per block, the remainder going to the first blocks.
pub fn balanced_membership(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(n);
    for b in 0..k {
        let size = base + usize::from(b < extra);
        out.extend(std::iter::repeat(b).take(size));
    }
    out
}

fn check_block_probs(block_probs: &DMatrix<f64>) -> Result<()> {
    let k = block_probs.nrows();
    if block_probs.ncols() != k || k == 0 {
        return Err(SarError::Dimension(
            "block probability matrix must be square and non-empty".into(),
        ));
    }
    for i in 0..k {
        for j in 0..k {
            let v = block_probs[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(SarError::InvalidProbability {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    if linalg::max_asymmetry(block_probs) > 0.0 {
        return Err(SarError::InvalidProbability {
            row: 0,
            col: 0,
            value: f64::NAN,
        });
    }
    Ok(())
}

/// Undirected binary stochastic block model. Upper-triangle edges are drawn
/// in row-major order and mirrored.
pub fn generate_sbm<R: Rng + ?Sized>(
    membership: &[usize],
    block_probs: &DMatrix<f64>,
    rng: &mut R,
) -> Result<SpatialWeights<f64>> {
    check_block_probs(block_probs)?;
    let k = block_probs.nrows();
    if let Some(&bad) = membership.iter().find(|&&c| c >= k) {
        return Err(SarError::Dimension(format!(
            "community label {bad} out of range for {k} blocks"
        )));
    }
    let n = membership.len();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = block_probs[(membership[i], membership[j])];
            if rng.random::<f64>() < p {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    build_row_normalized(a)
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Filled row by row so the draw order is independent of storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Rows iid `N(0, Σ)`.
pub fn gaussian_rows<R: Rng + ?Sized>(
    n: usize,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let f = linalg::psd_factor(sigma, 1e-10)
        .ok_or_else(|| SarError::InvalidCovariance("not positive semidefinite".into()))?;
    Ok(standard_normal_matrix(n, sigma.nrows(), rng) * f.transpose())
}

/// True covariates `X` with rows `N(0, Σ_X)` and observed `X̃ = X + [ξ | 0]`
/// with rows of `ξ` drawn from `N(0, Σ_ξ)`.
pub fn generate_covariates<R: Rng + ?Sized>(
    n: usize,
    sigma_x: &DMatrix<f64>,
    sigma_xi: &DMatrix<f64>,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if sigma_xi.nrows() > sigma_x.nrows() {
        return Err(SarError::Dimension(
            "error covariance larger than covariate covariance".into(),
        ));
    }
    let x = gaussian_rows(n, sigma_x, rng)?;
    let xi = gaussian_rows(n, sigma_xi, rng)?;
    let mut xt = x.clone();
    let d1 = sigma_xi.nrows();
    let mut block = xt.view_mut((0, 0), (n, d1));
    block += xi;
    Ok((x, xt))
}

/// `k` noisy copies `U + εⱼ`, `εⱼ ~ N(0, Σ_ξ)`, of each row of `u`.
pub fn generate_replicates<R: Rng + ?Sized>(
    u: &DMatrix<f64>,
    sigma_xi: &DMatrix<f64>,
    k: usize,
    rng: &mut R,
) -> Result<ReplicateSet<f64>> {
    let f = linalg::psd_factor(sigma_xi, 1e-10)
        .ok_or_else(|| SarError::InvalidCovariance("not positive semidefinite".into()))?;
    let d1 = u.ncols();
    let mut out = Vec::with_capacity(u.nrows());
    for i in 0..u.nrows() {
        let noise = standard_normal_matrix(k, d1, rng) * f.transpose();
        let mut r = noise;
        for mut row in r.row_iter_mut() {
            row += u.row(i);
        }
        out.push(r);
    }
    ReplicateSet::new(out)
}

/// `Y = S(ρ)⁻¹(Xδ + V)` with `V` iid `N(0, σ²)`.
pub fn generate_sar_outcome<R: Rng + ?Sized>(
    weights: &SpatialWeights<f64>,
    x: &DMatrix<f64>,
    params: &SarParams<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = weights.n();
    let sd = params.sigma2.sqrt();
    let v = DVector::from_iterator(n, (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
    let rhs = x * &params.delta + v;
    if params.rho == 0.0 {
        return Ok(rhs);
    }
    weights
        .s_matrix(params.rho)
        .lu()
        .solve(&rhs)
        .ok_or(SarError::SingularS { rho: params.rho })
}

/// Rank-`d` factor `U` with `UUᵀ` equal to a PSD block probability matrix,
/// from its top-`d` eigenpairs. Columns signed so the largest-magnitude entry
/// is positive.
pub fn factor_block_matrix(b: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let k = b.nrows();
    if d == 0 || d > k {
        return Err(SarError::Dimension(format!(
            "latent dimension {d} must lie in 1..={k}"
        )));
    }
    let eig = linalg::symmetrize(b).symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].partial_cmp(&eig.eigenvalues[x]).unwrap());
    let mut u = DMatrix::zeros(k, d);
    for (c, &idx) in order.iter().take(d).enumerate() {
        let lam = eig.eigenvalues[idx];
        if lam <= 0.0 {
            return Err(SarError::RankDeficientEmbedding {
                index: c + 1,
                eigenvalue: lam,
            });
        }
        let v = eig.eigenvectors.column(idx);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let s = lam.sqrt() * pivot.signum();
        u.column_mut(c).copy_from(&(v * s));
    }
    Ok(u)
}
