use nalgebra::{DMatrix, DVector};

use crate::design::{MeasurementErrorSpec, ObservedDesign};
use crate::error::{Result, SarError};
use crate::linalg;
use crate::scalar::Real;

/// Condition-number ceiling on `X̃ᵀX̃ − ΣΩ`.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// The corrected projector `M₂ = I − X̃(X̃ᵀX̃ − ΣΩ)⁻¹X̃ᵀ`, kept in factored
/// form. `M₂` is symmetric but not idempotent once `ΣΩ ≠ 0`.
#[derive(Debug, Clone)]
pub struct CorrectedProjector<T: Real> {
    x: DMatrix<T>,
    omega_sum: DMatrix<T>,
    gram_inv: DMatrix<T>,
    condition: T,
}

/// Builds `M₂` for the observed design and error specification.
pub fn m2_projector<T: Real>(
    design: &ObservedDesign<T>,
    me: &MeasurementErrorSpec<T>,
) -> Result<CorrectedProjector<T>> {
    if me.p() != design.p() {
        return Err(SarError::Dimension(format!(
            "error specification has p = {}, design has p = {}",
            me.p(),
            design.p()
        )));
    }
    let x = design.x().clone();
    let omega_sum = me.omega_sum().clone();
    let gram = x.transpose() * &x - &omega_sum;
    let (gram_inv, condition) =
        linalg::guarded_symmetric_inverse(&gram, T::lit(GRAM_CONDITION_LIMIT)).map_err(|c| {
            SarError::NoninvertibleCorrectedGram {
                condition: c.as_f64(),
            }
        })?;
    Ok(CorrectedProjector {
        x,
        omega_sum,
        gram_inv,
        condition,
    })
}

impl<T: Real> CorrectedProjector<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `(X̃ᵀX̃ − ΣΩ)⁻¹`.
    pub fn corrected_gram_inverse(&self) -> &DMatrix<T> {
        &self.gram_inv
    }

    pub fn condition(&self) -> T {
        self.condition
    }

    /// `δ̂ = (X̃ᵀX̃ − ΣΩ)⁻¹X̃ᵀ v`.
    pub fn coefficients(&self, v: &DVector<T>) -> DVector<T> {
        &self.gram_inv * (self.x.transpose() * v)
    }

    /// `M₂ v`.
    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        v - &self.x * self.coefficients(v)
    }

    /// `aᵀ M₂ b`.
    pub fn quad(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        let xa = self.x.transpose() * a;
        let xb = self.x.transpose() * b;
        a.dot(b) - xa.dot(&(&self.gram_inv * xb))
    }

    /// Dense `n × n` matrix `M₂`.
    pub fn matrix(&self) -> DMatrix<T> {
        let n = self.n();
        DMatrix::identity(n, n) - &self.x * &self.gram_inv * self.x.transpose()
    }

    /// Dense `K = X̃(X̃ᵀX̃−ΣΩ)⁻¹(ΣΩ)(X̃ᵀX̃−ΣΩ)⁻¹X̃ᵀ`.
    pub fn k_matrix(&self) -> DMatrix<T> {
        let left = &self.x * &self.gram_inv;
        &left * &self.omega_sum * left.transpose()
    }
}
