//! Monte Carlo experiment harness.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{
    balanced_membership, factor_block_matrix, gaussian_rows, generate_covariates,
    generate_replicates, generate_sar_outcome, generate_sbm,
};
use super::rng::{stream_rng, SimRng};
use crate::design::{
    assemble_estimated, assemble_omega, assemble_shared, MeasurementErrorSpec, ObservedDesign,
};
use crate::error::{Result, SarError};
use crate::estimator::{fit_meqmle, fit_qmle_uncorrected, FitOptions, SarParams};
use crate::mecov::{embed_with_covariances, estimate_from_replicates};
use crate::weights::SpatialWeights;

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Corrected,
    Uncorrected,
    Ols,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Corrected => "corrected",
            Estimator::Uncorrected => "uncorrected",
            Estimator::Ols => "ols",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: f64,
    pub sigma2: f64,
}

impl TrueParams {
    pub fn to_params(&self) -> SarParams<f64> {
        let delta = DVector::from_iterator(
            self.beta.len() + self.gamma.len(),
            self.beta.iter().chain(self.gamma.iter()).copied(),
        );
        SarParams::new(delta, self.rho, self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ErrorModel {
    /// `Σ_ξ` supplied to the corrected estimator as known.
    Known,
    /// `k` replicates per observation; the corrected estimator uses their
    /// mean with an estimated error covariance and inflated standard errors.
    Replicates { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Design {
    /// Gaussian covariates, the first `beta.len()` observed with error.
    Covariate {
        sigma_x: Vec<Vec<f64>>,
        sigma_xi: Vec<Vec<f64>>,
        /// When present, `Σ_ξ` is scaled by each value in turn.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau_grid: Option<Vec<f64>>,
        block_probs: Vec<Vec<f64>>,
        error_model: ErrorModel,
    },
    /// Latent positions behind a block model; the error-prone covariates are
    /// their spectral estimates. `Z = U + N(0, z_noise·I)`.
    Homophily {
        block_probs: Vec<Vec<f64>>,
        latent_dim: usize,
        z_noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub n_grid: Vec<usize>,
    pub n_reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub true_params: TrueParams,
    pub design: Design,
    pub estimators: Vec<Estimator>,
    /// Worker threads; 0 uses the rayon default.
    #[serde(default)]
    pub threads: usize,
    /// Keep per-replication estimates in the summary.
    #[serde(default)]
    pub keep_raw: bool,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(config_error(what, "must be a square matrix"));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn config_error(path: &str, msg: &str) -> SarError {
    SarError::InvalidConfig {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if crate::linalg::max_asymmetry(m) > 1e-12 {
        return Err(config_error(what, "must be symmetric"));
    }
    if m.nrows() > 0 && crate::linalg::min_eigenvalue(m) < -1e-10 {
        return Err(config_error(what, "must be positive semidefinite"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| config_error("$", &e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(config_error(
                "schema",
                &format!(
                    "unsupported schema {}, expected {CONFIG_SCHEMA}",
                    self.schema
                ),
            ));
        }
        if self.n_reps == 0 {
            return Err(config_error("n_reps", "must be at least 1"));
        }
        if self.n_grid.is_empty() {
            return Err(config_error("n_grid", "must not be empty"));
        }
        if self.estimators.is_empty() {
            return Err(config_error("estimators", "must not be empty"));
        }
        let p = self.true_params.beta.len() + self.true_params.gamma.len();
        if let Some(&n) = self.n_grid.iter().find(|&&n| n <= p + 2) {
            return Err(config_error(
                "n_grid",
                &format!("sample size {n} too small for {p} covariates"),
            ));
        }
        if !(self.true_params.sigma2 > 0.0) {
            return Err(config_error("true_params.sigma2", "must be positive"));
        }
        match &self.design {
            Design::Covariate {
                sigma_x,
                sigma_xi,
                tau_grid,
                block_probs,
                error_model,
            } => {
                let sx = matrix(sigma_x, "design.sigma_x")?;
                let sxi = matrix(sigma_xi, "design.sigma_xi")?;
                matrix(block_probs, "design.block_probs")?;
                check_psd(&sx, "design.sigma_x")?;
                check_psd(&sxi, "design.sigma_xi")?;
                if sx.nrows() != p {
                    return Err(config_error("design.sigma_x", &format!("must be {p}x{p}")));
                }
                if sxi.nrows() != self.true_params.beta.len() {
                    return Err(config_error(
                        "design.sigma_xi",
                        "dimension must equal the length of beta",
                    ));
                }
                if let Some(t) = tau_grid {
                    if t.is_empty() || t.iter().any(|&v| !(v >= 0.0)) {
                        return Err(config_error(
                            "design.tau_grid",
                            "must be non-empty and nonnegative",
                        ));
                    }
                }
                if let ErrorModel::Replicates { k } = error_model {
                    if *k < 2 {
                        return Err(config_error(
                            "design.error_model.k",
                            "need at least 2 replicates",
                        ));
                    }
                }
            }
            Design::Homophily {
                block_probs,
                latent_dim,
                z_noise,
            } => {
                let b = matrix(block_probs, "design.block_probs")?;
                if *latent_dim == 0 || *latent_dim > b.nrows() {
                    return Err(config_error(
                        "design.latent_dim",
                        "must lie between 1 and the number of blocks",
                    ));
                }
                if self.true_params.beta.len() != *latent_dim
                    || self.true_params.gamma.len() != *latent_dim
                {
                    return Err(config_error(
                        "true_params",
                        "beta and gamma must both have latent_dim entries",
                    ));
                }
                if !(*z_noise >= 0.0) {
                    return Err(config_error("design.z_noise", "must be nonnegative"));
                }
                factor_block_matrix(&b, *latent_dim)
                    .map_err(|e| config_error("design.block_probs", &e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Parameter labels in estimation order.
    pub fn parameter_names(&self) -> Vec<String> {
        let tp = &self.true_params;
        let mut out: Vec<String> = (1..=tp.beta.len()).map(|i| format!("beta{i}")).collect();
        out.extend((1..=tp.gamma.len()).map(|i| format!("gamma{i}")));
        out.push("rho".into());
        out.push("sigma2".into());
        out
    }

    fn tau_values(&self) -> Vec<Option<f64>> {
        match &self.design {
            Design::Covariate {
                tau_grid: Some(t), ..
            } => t.iter().map(|&v| Some(v)).collect(),
            _ => vec![None],
        }
    }

    /// `(n, τ)` settings in output order.
    pub fn settings(&self) -> Vec<(usize, Option<f64>)> {
        let taus = self.tau_values();
        let mut out = Vec::new();
        for &n in &self.n_grid {
            for &t in &taus {
                out.push((n, t));
            }
        }
        out
    }
}

/// One simulated dataset, ready for fitting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub weights: SpatialWeights<f64>,
    /// Observed design, error-prone columns first.
    pub x_observed: DMatrix<f64>,
    pub x_true: DMatrix<f64>,
    pub d1: usize,
    /// Specification handed to the corrected estimator.
    pub error_spec: MeasurementErrorSpec<f64>,
    /// Replicate measurements in long form, when the design uses them.
    pub replicates: Option<Vec<DMatrix<f64>>>,
    /// Whether the error-prone columns are estimated latent positions.
    pub latent: bool,
}

/// Draws replication `rep` of setting index `setting`.
pub fn simulate_dataset(cfg: &ExperimentConfig, setting: usize, rep: usize) -> Result<Dataset> {
    let (n, tau) = *cfg
        .settings()
        .get(setting)
        .ok_or_else(|| config_error("n_grid", &format!("setting {setting} out of range")))?;
    let stream = (setting as u64) << 32 | rep as u64;
    let mut rng = stream_rng(cfg.seed, stream);
    draw(cfg, n, tau, &mut rng)
}

fn draw(cfg: &ExperimentConfig, n: usize, tau: Option<f64>, rng: &mut SimRng) -> Result<Dataset> {
    let params = cfg.true_params.to_params();
    let d1 = cfg.true_params.beta.len();
    let p = params.delta.len();
    match &cfg.design {
        Design::Covariate {
            sigma_x,
            sigma_xi,
            block_probs,
            error_model,
            ..
        } => {
            let sx = matrix(sigma_x, "design.sigma_x")?;
            let sxi = matrix(sigma_xi, "design.sigma_xi")? * tau.unwrap_or(1.0);
            let b = matrix(block_probs, "design.block_probs")?;
            let membership = balanced_membership(n, b.nrows());
            let weights = generate_sbm(&membership, &b, rng)?;
            match error_model {
                ErrorModel::Known => {
                    let (x, xt) = generate_covariates(n, &sx, &sxi, rng)?;
                    let y = generate_sar_outcome(&weights, &x, &params, rng)?;
                    let error_spec = assemble_shared(sxi, p - d1, n)?;
                    Ok(Dataset {
                        y,
                        weights,
                        x_observed: xt,
                        x_true: x,
                        d1,
                        error_spec,
                        replicates: None,
                        latent: false,
                    })
                }
                ErrorModel::Replicates { k } => {
                    let x = gaussian_rows(n, &sx, rng)?;
                    let u = x.columns(0, d1).into_owned();
                    let reps = generate_replicates(&u, &sxi, *k, rng)?;
                    let y = generate_sar_outcome(&weights, &x, &params, rng)?;
                    let est = estimate_from_replicates(&reps);
                    let mut xt = x.clone();
                    xt.columns_mut(0, d1).copy_from(&est.u_tilde);
                    let error_spec = assemble_estimated(est.delta, est.c_delta, p - d1, n)?;
                    let raw = (0..n).map(|i| reps.observation(i).clone()).collect();
                    Ok(Dataset {
                        y,
                        weights,
                        x_observed: xt,
                        x_true: x,
                        d1,
                        error_spec,
                        replicates: Some(raw),
                        latent: false,
                    })
                }
            }
        }
        Design::Homophily {
            block_probs,
            latent_dim,
            z_noise,
        } => {
            let b = matrix(block_probs, "design.block_probs")?;
            let d = *latent_dim;
            let ublock = factor_block_matrix(&b, d)?;
            let membership = balanced_membership(n, b.nrows());
            let weights = generate_sbm(&membership, &b, rng)?;
            let u = DMatrix::from_fn(n, d, |i, j| ublock[(membership[i], j)]);
            let noise = gaussian_rows(n, &(DMatrix::identity(d, d) * *z_noise), rng)?;
            let z = &u + noise;
            let mut x = DMatrix::zeros(n, 2 * d);
            x.columns_mut(0, d).copy_from(&u);
            x.columns_mut(d, d).copy_from(&z);
            let y = generate_sar_outcome(&weights, &x, &params, rng)?;
            let emb = embed_with_covariances(&weights, d)?;
            let mut xt = x.clone();
            xt.columns_mut(0, d).copy_from(&emb.u_hat);
            let error_spec = assemble_omega(emb.delta_hats, d)?;
            Ok(Dataset {
                y,
                weights,
                x_observed: xt,
                x_true: x,
                d1: d,
                error_spec,
                replicates: None,
                latent: true,
            })
        }
    }
}

/// Estimates and standard errors of one fit, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDraw {
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
}

fn ols(data: &Dataset) -> Result<FitDraw> {
    let x = &data.x_observed;
    let (n, p) = x.shape();
    let xtx = x.transpose() * x;
    let inv = xtx
        .try_inverse()
        .ok_or(SarError::NoninvertibleCorrectedGram {
            condition: f64::INFINITY,
        })?;
    let delta = &inv * x.transpose() * &data.y;
    let resid = &data.y - x * &delta;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let mut estimate: Vec<f64> = delta.iter().copied().collect();
    let mut std_error: Vec<f64> = (0..p).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    // The network term is absent; report it as a fixed zero without an SE.
    estimate.push(0.0);
    std_error.push(f64::NAN);
    estimate.push(s2);
    std_error.push(f64::NAN);
    Ok(FitDraw {
        estimate,
        std_error,
    })
}

/// Fits one estimator to a dataset.
pub fn fit_estimator(data: &Dataset, estimator: Estimator) -> Result<FitDraw> {
    if estimator == Estimator::Ols {
        return ols(data);
    }
    let design = ObservedDesign::with_default_names(data.x_observed.clone(), data.d1)?;
    let opts = FitOptions::default();
    let fit = match estimator {
        Estimator::Corrected => {
            fit_meqmle(&data.y, &data.weights, &design, &data.error_spec, &opts)?
        }
        _ => fit_qmle_uncorrected(&data.y, &data.weights, &design, &opts)?,
    };
    if fit.se_kind == "unavailable" {
        return Err(SarError::SingularInformation {
            condition: f64::NAN,
        });
    }
    Ok(FitDraw {
        estimate: fit.params.to_vector().iter().copied().collect(),
        std_error: fit.std_errors.iter().copied().collect(),
    })
}

/// Per-replication outcome: one entry per requested estimator.
#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub setting: usize,
    pub rep: usize,
    pub fits: Vec<std::result::Result<FitDraw, String>>,
}

fn run_replication(cfg: &ExperimentConfig, setting: usize, rep: usize) -> ReplicationResult {
    let fits = match simulate_dataset(cfg, setting, rep) {
        Ok(data) => cfg
            .estimators
            .iter()
            .map(|&e| fit_estimator(&data, e).map_err(|err| err.to_string()))
            .collect(),
        Err(err) => vec![Err(format!("data generation: {err}")); cfg.estimators.len()],
    };
    ReplicationResult { setting, rep, fits }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub n: usize,
    pub tau: Option<f64>,
    pub parameter: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRow {
    pub estimator: String,
    pub n: usize,
    pub tau: Option<f64>,
    pub rep: usize,
    pub parameter: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// Aggregated Monte Carlo results.
///
/// Metrics per `(estimator, n, τ, parameter)`: `mean_bias`, `mc_se_of_bias`
/// (`sd/√reps`), `empirical_sd`, `mean_estimated_se`, `coverage95`; per
/// `(estimator, n, τ)` with parameter `all`: `successes`, `failures`.
/// With a single replication the SD-based metrics are NaN.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub schema: u32,
    pub name: String,
    pub seed: u64,
    pub n_reps: usize,
    pub rows: Vec<SummaryRow>,
    /// First message of each distinct failure kind, for diagnosis.
    pub failure_messages: Vec<String>,
    #[serde(skip)]
    pub raw: Option<Vec<RawRow>>,
    #[serde(skip)]
    pub elapsed_seconds: f64,
}

impl PartialEq for ExperimentSummary {
    /// Ignores wall-clock time.
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.name == other.name
            && self.seed == other.seed
            && self.n_reps == other.n_reps
            && rows_bits(&self.rows) == rows_bits(&other.rows)
            && self.failure_messages == other.failure_messages
            && raw_bits(&self.raw) == raw_bits(&other.raw)
    }
}

type RawKey = (String, usize, Option<u64>, usize, String, u64, u64);

fn raw_bits(raw: &Option<Vec<RawRow>>) -> Option<Vec<RawKey>> {
    raw.as_ref().map(|rows| {
        rows.iter()
            .map(|r| {
                (
                    r.estimator.clone(),
                    r.n,
                    r.tau.map(f64::to_bits),
                    r.rep,
                    r.parameter.clone(),
                    r.estimate.to_bits(),
                    r.std_error.to_bits(),
                )
            })
            .collect()
    })
}

fn rows_bits(rows: &[SummaryRow]) -> Vec<(String, usize, Option<u64>, String, String, u64)> {
    rows.iter()
        .map(|r| {
            (
                r.estimator.clone(),
                r.n,
                r.tau.map(f64::to_bits),
                r.parameter.clone(),
                r.metric.clone(),
                r.value.to_bits(),
            )
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

fn fmt_tau(t: Option<f64>) -> String {
    t.map(fmt_num).unwrap_or_default()
}

impl ExperimentSummary {
    /// Long-format CSV: `estimator,n,tau,parameter,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("estimator,n,tau,parameter,metric,value\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.estimator,
                r.n,
                fmt_tau(r.tau),
                r.parameter,
                r.metric,
                fmt_num(r.value)
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises")
    }

    /// Per-replication estimates: `estimator,n,tau,rep,parameter,estimate,std_error`.
    pub fn raw_csv(&self) -> Option<String> {
        let raw = self.raw.as_ref()?;
        let mut s = String::from("estimator,n,tau,rep,parameter,estimate,std_error\n");
        for r in raw {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.estimator,
                r.n,
                fmt_tau(r.tau),
                r.rep,
                r.parameter,
                fmt_num(r.estimate),
                fmt_num(r.std_error)
            );
        }
        Some(s)
    }

    pub fn value(
        &self,
        estimator: &str,
        n: usize,
        tau: Option<f64>,
        parameter: &str,
        metric: &str,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.estimator == estimator
                    && r.n == n
                    && r.tau == tau
                    && r.parameter == parameter
                    && r.metric == metric
            })
            .map(|r| r.value)
    }

    /// Compact fixed-width table of bias, SD and SE.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<12} {:>6} {:>6} {:<8} {:>11} {:>11} {:>11} {:>11}\n",
            "estimator", "n", "tau", "param", "bias", "mc_se", "sd", "mean_se"
        );
        for r in self.rows.iter().filter(|r| r.metric == "mean_bias") {
            let get = |m: &str| {
                self.value(&r.estimator, r.n, r.tau, &r.parameter, m)
                    .unwrap_or(f64::NAN)
            };
            let _ = writeln!(
                s,
                "{:<12} {:>6} {:>6} {:<8} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}",
                r.estimator,
                r.n,
                fmt_tau(r.tau),
                r.parameter,
                r.value,
                get("mc_se_of_bias"),
                get("empirical_sd"),
                get("mean_estimated_se")
            );
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Parameters whose truth is defined for the design. Under homophily the
/// latent coefficients act on estimated positions that are only identified
/// up to rotation, so they are left out.
fn reported(cfg: &ExperimentConfig, names: &[String]) -> Vec<usize> {
    let skip_beta = matches!(cfg.design, Design::Homophily { .. });
    (0..names.len())
        .filter(|&j| !(skip_beta && names[j].starts_with("beta")))
        .collect()
}

fn aggregate(
    cfg: &ExperimentConfig,
    results: Vec<ReplicationResult>,
    elapsed: f64,
) -> ExperimentSummary {
    let names = cfg.parameter_names();
    let truth: Vec<f64> = cfg
        .true_params
        .to_params()
        .to_vector()
        .iter()
        .copied()
        .collect();
    let settings = cfg.settings();
    let keep = reported(cfg, &names);
    let mut rows = Vec::new();
    let mut raw = cfg.keep_raw.then(Vec::new);
    let mut messages: Vec<String> = Vec::new();
    for (s, &(n, tau)) in settings.iter().enumerate() {
        let reps: Vec<&ReplicationResult> = results.iter().filter(|r| r.setting == s).collect();
        for (e, est) in cfg.estimators.iter().enumerate() {
            let name = est.as_str().to_string();
            let ok: Vec<(usize, &FitDraw)> = reps
                .iter()
                .filter_map(|r| match &r.fits[e] {
                    Ok(f) => Some((r.rep, f)),
                    Err(msg) => {
                        let kind = msg.split(':').next().unwrap_or("").to_string();
                        if !messages.iter().any(|m| m.starts_with(&kind)) {
                            messages.push(msg.clone());
                        }
                        None
                    }
                })
                .collect();
            let failures = reps.len() - ok.len();
            let push = |rows: &mut Vec<SummaryRow>, parameter: &str, metric: &str, value: f64| {
                rows.push(SummaryRow {
                    estimator: name.clone(),
                    n,
                    tau,
                    parameter: parameter.to_string(),
                    metric: metric.to_string(),
                    value,
                })
            };
            push(&mut rows, "all", "successes", ok.len() as f64);
            push(&mut rows, "all", "failures", failures as f64);
            for &j in &keep {
                if *est == Estimator::Ols && names[j] == "rho" {
                    continue;
                }
                let errs: Vec<f64> = ok.iter().map(|(_, f)| f.estimate[j] - truth[j]).collect();
                let ses: Vec<f64> = ok
                    .iter()
                    .map(|(_, f)| f.std_error[j])
                    .filter(|v| v.is_finite())
                    .collect();
                let covered = ok
                    .iter()
                    .filter(|(_, f)| {
                        (f.estimate[j] - truth[j]).abs() <= 1.959963984540054 * f.std_error[j]
                    })
                    .count();
                let (bias, spread) = if errs.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    (mean(&errs), sd(&errs))
                };
                push(&mut rows, &names[j], "mean_bias", bias);
                push(
                    &mut rows,
                    &names[j],
                    "mc_se_of_bias",
                    spread / (errs.len() as f64).sqrt(),
                );
                push(&mut rows, &names[j], "empirical_sd", spread);
                push(
                    &mut rows,
                    &names[j],
                    "mean_estimated_se",
                    if ses.is_empty() { f64::NAN } else { mean(&ses) },
                );
                push(
                    &mut rows,
                    &names[j],
                    "coverage95",
                    if ses.is_empty() {
                        f64::NAN
                    } else {
                        covered as f64 / ok.len() as f64
                    },
                );
                if let Some(raw) = raw.as_mut() {
                    for (rep, f) in &ok {
                        raw.push(RawRow {
                            estimator: name.clone(),
                            n,
                            tau,
                            rep: *rep,
                            parameter: names[j].clone(),
                            estimate: f.estimate[j],
                            std_error: f.std_error[j],
                        });
                    }
                }
            }
        }
    }
    ExperimentSummary {
        schema: CONFIG_SCHEMA,
        name: cfg.name.clone(),
        seed: cfg.seed,
        n_reps: cfg.n_reps,
        rows,
        failure_messages: messages,
        raw,
        elapsed_seconds: elapsed,
    }
}

/// Runs every `(n, τ)` setting for `n_reps` replications on a pool of
/// `cfg.threads` workers. The summary does not depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let tasks: Vec<(usize, usize)> = (0..cfg.settings().len())
        .flat_map(|s| (0..cfg.n_reps).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| config_error("threads", &e.to_string()))?;
    let results: Vec<ReplicationResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, r)| run_replication(cfg, s, r))
            .collect()
    });
    Ok(aggregate(cfg, results, start.elapsed().as_secs_f64()))
}
