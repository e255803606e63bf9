//! JSON fit reports. Numbers carry 17 significant digits; non-finite values
//! are written as `null`.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::SarError;
use crate::estimator::FitResult;

pub const REPORT_SCHEMA: u32 = 1;
const Z95: f64 = 1.959963984540054;

/// A number serialised in `%.16e` form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let raw = RawValue::from_string(format!("{:.16e}", self.0))
                .map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub name: String,
    pub estimate: Num,
    pub std_error: Num,
    pub ci95: [Num; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerReport {
    pub method: &'static str,
    pub iterations: usize,
    pub final_gradient: Num,
    pub rho_interval: [Num; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub schema: u32,
    pub correction: String,
    pub se: &'static str,
    pub n: usize,
    pub p: usize,
    pub error_prone: Vec<String>,
    pub estimates: Vec<Estimate>,
    pub loglik: Num,
    pub optimizer: OptimizerReport,
    pub warnings: Vec<String>,
}

impl FitReport {
    /// `names` labels `δ` in design order; `rho` and `sigma2` are appended.
    pub fn new(
        fit: &FitResult<f64>,
        names: &[String],
        error_prone: &[String],
        correction: &str,
        n: usize,
    ) -> Self {
        let theta = fit.params.to_vector();
        let mut labels: Vec<String> = names.to_vec();
        labels.push("rho".into());
        labels.push("sigma2".into());
        let estimates = labels
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let (est, se) = (theta[j], fit.std_errors[j]);
                Estimate {
                    name,
                    estimate: Num(est),
                    std_error: Num(se),
                    ci95: [Num(est - Z95 * se), Num(est + Z95 * se)],
                }
            })
            .collect();
        let o = &fit.optimizer;
        FitReport {
            schema: REPORT_SCHEMA,
            correction: correction.to_string(),
            se: fit.se_kind,
            n,
            p: names.len(),
            error_prone: error_prone.to_vec(),
            estimates,
            loglik: Num(fit.loglik),
            optimizer: OptimizerReport {
                method: o.method.as_str(),
                iterations: o.iterations,
                final_gradient: Num(o.final_gradient),
                rho_interval: [Num(o.rho_interval.0), Num(o.rho_interval.1)],
            },
            warnings: fit.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// `{"schema":1,"error":{"kind":…,"message":…}}`.
pub fn error_json(err: &SarError) -> String {
    serde_json::json!({
        "schema": REPORT_SCHEMA,
        "error": { "kind": err.kind(), "message": err.to_string() }
    })
    .to_string()
}
