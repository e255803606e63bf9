//! File-driven workflows shared by the command line and tests: read inputs,
//! assemble the error specification, fit, and build the report.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::design::{
    assemble_estimated, assemble_omega, assemble_shared, MeasurementErrorSpec, ObservedDesign,
};
use crate::error::{Result, SarError};
use crate::estimator::{fit_meqmle, FitOptions, FitResult, Method};
use crate::io;
use crate::mecov::{self, Centering, EmbeddingResult, ReplicateSet};
use crate::report::FitReport;
use crate::weights::{
    build_row_normalized, weights_from_coordinates, DistanceScheme, SpatialWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsFormat {
    Dense,
    Edges,
    Coords,
}

#[derive(Debug, Clone)]
pub struct WeightsInput {
    pub path: PathBuf,
    pub format: WeightsFormat,
    /// Used with [`WeightsFormat::Coords`].
    pub scheme: DistanceScheme,
}

/// Where the measurement-error covariance comes from.
#[derive(Debug, Clone)]
pub enum ErrorSource {
    None,
    /// Known `Δ`, shared or stacked per observation.
    Delta(PathBuf),
    /// Long-format replicates of the error-prone columns.
    Replicates(PathBuf),
    /// Paired true and error-prone values on a validation subsample.
    Validation {
        path: PathBuf,
        centering: Centering,
        proxy_bias: bool,
    },
    /// Externally estimated latent positions with stacked row covariances.
    Latent {
        positions: PathBuf,
        covariances: PathBuf,
    },
}

#[derive(Debug, Clone)]
pub struct FitRequest {
    pub outcome: PathBuf,
    pub covariates: PathBuf,
    pub weights: WeightsInput,
    pub error_prone: Vec<String>,
    pub source: ErrorSource,
    pub rho_interval: Option<(f64, f64)>,
    pub method: Method,
}

fn config(path: &str, msg: impl Into<String>) -> SarError {
    SarError::InvalidConfig {
        path: path.into(),
        msg: msg.into(),
    }
}

pub fn load_weights(input: &WeightsInput, n: Option<usize>) -> Result<SpatialWeights<f64>> {
    let a = match input.format {
        WeightsFormat::Dense => io::read_dense_weights(&input.path)?,
        WeightsFormat::Edges => {
            let n = n.ok_or_else(|| config("weights", "edge lists need the number of nodes"))?;
            io::read_edge_list(&input.path, n)?
        }
        WeightsFormat::Coords => {
            let coords = io::read_coordinates(&input.path)?;
            return weights_from_coordinates(&coords, input.scheme)
                .map(|w| w.with_scheme(input.scheme.describe()));
        }
    };
    build_row_normalized(a)
}

/// The inputs of a fit after reading and assembling every file.
#[derive(Debug, Clone)]
pub struct PreparedFit {
    pub y: nalgebra::DVector<f64>,
    pub weights: SpatialWeights<f64>,
    pub design: ObservedDesign<f64>,
    pub error_spec: MeasurementErrorSpec<f64>,
    pub correction: &'static str,
    pub error_prone: Vec<String>,
}

fn ordered_columns(table: &io::Table, first: &[String]) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut names: Vec<String> = first.to_vec();
    names.extend(table.names.iter().filter(|n| !first.contains(n)).cloned());
    let x = table.select(&names).map_err(|e| config("error_prone", e))?;
    Ok((names, x))
}

/// Error covariance before the design width is known.
enum Covariance {
    None,
    PerObservation(Vec<DMatrix<f64>>),
    Shared(DMatrix<f64>),
    Estimated {
        delta: DMatrix<f64>,
        c_delta: DMatrix<f64>,
    },
}

fn check_names(what: &str, names: &[String], expected: &[String]) -> Result<()> {
    if names != expected {
        return Err(config(
            what,
            format!("columns {names:?} do not match error-prone {expected:?}"),
        ));
    }
    Ok(())
}

pub fn prepare_fit(req: &FitRequest) -> Result<PreparedFit> {
    let y = io::read_outcome(&req.outcome)?;
    let n = y.len();
    let mut table = io::read_table(&req.covariates)?;
    if table.data.nrows() != n {
        return Err(config(
            "covariates",
            format!("{} rows, outcome has {n}", table.data.nrows()),
        ));
    }
    let weights = load_weights(&req.weights, Some(n))?;
    if weights.n() != n {
        return Err(config(
            "weights",
            format!("{} nodes, outcome has {n} rows", weights.n()),
        ));
    }
    let mut error_prone = req.error_prone.clone();
    match req.source {
        ErrorSource::None if !error_prone.is_empty() => {
            return Err(config(
                "error_prone",
                "error-prone columns need --delta, --replicates or --validation",
            ));
        }
        ErrorSource::Latent { .. } if !error_prone.is_empty() => {
            return Err(config(
                "error_prone",
                "latent positions supply the error-prone columns themselves",
            ));
        }
        ErrorSource::Delta(_) | ErrorSource::Replicates(_) | ErrorSource::Validation { .. }
            if error_prone.is_empty() =>
        {
            return Err(config(
                "error_prone",
                "an error covariance source needs error-prone columns",
            ));
        }
        _ => {}
    }

    // Columns replaced or supplied by the error source: replicate means,
    // debiased proxies or latent positions.
    let mut supplied: Option<(Vec<String>, DMatrix<f64>)> = None;
    let (correction, cov) = match &req.source {
        ErrorSource::None => ("none", Covariance::None),
        ErrorSource::Delta(path) => (
            "known",
            Covariance::PerObservation(io::read_deltas(path, n, error_prone.len())?),
        ),
        ErrorSource::Replicates(path) => {
            let (names, reps) = io::read_replicates(path)?;
            check_names("replicates", &names, &error_prone)?;
            if reps.len() != n {
                return Err(config(
                    "replicates",
                    format!("{} observations, outcome has {n}", reps.len()),
                ));
            }
            let est = mecov::estimate_from_replicates(&ReplicateSet::new(reps)?);
            supplied = Some((names, est.u_tilde));
            (
                "replicates",
                Covariance::Estimated {
                    delta: est.delta,
                    c_delta: est.c_delta,
                },
            )
        }
        ErrorSource::Validation {
            path,
            centering,
            proxy_bias,
        } => {
            let (names, truth, proxy) = io::read_validation(path)?;
            check_names("validation", &names, &error_prone)?;
            if *proxy_bias {
                let observed = table
                    .select(&error_prone)
                    .map_err(|e| config("error_prone", e))?;
                let cal = mecov::calibrate_proxy(&proxy, &truth, &observed)?;
                supplied = Some((names, cal.u_tilde));
                ("proxy", Covariance::Shared(cal.delta))
            } else {
                (
                    "validation",
                    Covariance::Shared(mecov::calibrate_validation(&truth, &proxy, *centering)?),
                )
            }
        }
        ErrorSource::Latent {
            positions,
            covariances,
        } => {
            let u = io::read_table(positions)?;
            if u.data.nrows() != n {
                return Err(config(
                    "latent",
                    format!("{} rows, outcome has {n}", u.data.nrows()),
                ));
            }
            error_prone = u.names.clone();
            let deltas = io::read_deltas(covariances, n, u.names.len())?;
            supplied = Some((u.names, u.data));
            ("latent", Covariance::PerObservation(deltas))
        }
    };
    if let Some((names, values)) = supplied {
        for (k, name) in names.iter().enumerate() {
            let j = match table.names.iter().position(|c| c == name) {
                Some(j) => j,
                None => {
                    table.names.push(name.clone());
                    table.data = table.data.clone().insert_column(table.data.ncols(), 0.0);
                    table.data.ncols() - 1
                }
            };
            table.data.set_column(j, &values.column(k));
        }
    }
    let (names, x) = ordered_columns(&table, &error_prone)?;
    let d2 = names.len() - error_prone.len();
    let error_spec = match cov {
        Covariance::None => MeasurementErrorSpec::none(n, names.len()),
        Covariance::PerObservation(deltas) => assemble_omega(deltas, d2)?,
        Covariance::Shared(delta) => assemble_shared(delta, d2, n)?,
        Covariance::Estimated { delta, c_delta } => assemble_estimated(delta, c_delta, d2, n)?,
    };
    let design = ObservedDesign::new(x, error_prone.len(), names)?;
    Ok(PreparedFit {
        y,
        weights,
        design,
        error_spec,
        correction,
        error_prone,
    })
}

pub fn fit_prepared(prep: &PreparedFit, req: &FitRequest) -> Result<FitResult<f64>> {
    let opts = FitOptions {
        rho_interval: req.rho_interval,
        method: req.method,
        ..FitOptions::default()
    };
    fit_meqmle(
        &prep.y,
        &prep.weights,
        &prep.design,
        &prep.error_spec,
        &opts,
    )
}

/// Reads, fits and reports.
pub fn run_fit(req: &FitRequest) -> Result<FitReport> {
    let prep = prepare_fit(req)?;
    let fit = fit_prepared(&prep, req)?;
    Ok(FitReport::new(
        &fit,
        prep.design.column_names(),
        &prep.error_prone,
        prep.correction,
        prep.y.len(),
    ))
}

/// Embedding with row covariances from a weights file.
pub fn run_embed(input: &WeightsInput, d: usize) -> Result<EmbeddingResult<f64>> {
    let weights = load_weights(input, None)?;
    mecov::embed_with_covariances(&weights, d)
}

/// Writes `<prefix>_uhat.csv` (header `u1..ud`) and `<prefix>_delta.csv`
/// (stacked `d × d` blocks, no header). Returns both paths.
pub fn write_embedding(emb: &EmbeddingResult<f64>, prefix: &Path) -> Result<(PathBuf, PathBuf)> {
    let stem = prefix.to_string_lossy();
    let u_path = PathBuf::from(format!("{stem}_uhat.csv"));
    let d_path = PathBuf::from(format!("{stem}_delta.csv"));
    let names: Vec<String> = (1..=emb.d).map(|j| format!("u{j}")).collect();
    io::write_matrix(&u_path, &emb.u_hat, Some(&names))?;
    let n = emb.delta_hats.len();
    let mut stacked = DMatrix::zeros(n * emb.d, emb.d);
    for (i, m) in emb.delta_hats.iter().enumerate() {
        stacked
            .view_mut((i * emb.d, 0), (emb.d, emb.d))
            .copy_from(m);
    }
    io::write_matrix(&d_path, &stacked, None)?;
    Ok((u_path, d_path))
}

/// Writes a simulated dataset as fit inputs: `outcome.csv`, `covariates.csv`,
/// `weights.csv` (dense) and, depending on the design, `delta.csv`,
/// `replicates.csv` or `latent_uhat.csv` with `latent_delta.csv`.
pub fn export_dataset(data: &crate::simgen::Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let n = data.y.len();
    let p = data.x_observed.ncols();
    let d1 = data.d1;
    let names: Vec<String> = (1..=d1)
        .map(|j| format!("u{j}"))
        .chain((1..=p - d1).map(|j| format!("z{j}")))
        .collect();
    let mut out = Vec::new();
    let path = dir.join("outcome.csv");
    io::write_matrix(
        &path,
        &DMatrix::from_column_slice(n, 1, data.y.as_slice()),
        Some(&["y".to_string()]),
    )?;
    out.push(path);
    let path = dir.join("weights.csv");
    io::write_matrix(&path, data.weights.adjacency(), None)?;
    out.push(path);
    if let Some(reps) = &data.replicates {
        let path = dir.join("covariates.csv");
        io::write_matrix(
            &path,
            &data.x_observed.columns(d1, p - d1).into_owned(),
            Some(&names[d1..]),
        )?;
        out.push(path);
        let k = reps[0].nrows();
        let mut long = DMatrix::zeros(n * k, 2 + d1);
        for (i, r) in reps.iter().enumerate() {
            for j in 0..k {
                long[(i * k + j, 0)] = i as f64;
                long[(i * k + j, 1)] = j as f64;
                for c in 0..d1 {
                    long[(i * k + j, 2 + c)] = r[(j, c)];
                }
            }
        }
        let header: Vec<String> = ["obs_id", "rep_id"]
            .iter()
            .map(|s| s.to_string())
            .chain(names[..d1].iter().cloned())
            .collect();
        let path = dir.join("replicates.csv");
        write_long(&path, &long, &header)?;
        out.push(path);
    } else if data.latent {
        let path = dir.join("covariates.csv");
        io::write_matrix(
            &path,
            &data.x_observed.columns(d1, p - d1).into_owned(),
            Some(&names[d1..]),
        )?;
        out.push(path);
        let path = dir.join("latent_uhat.csv");
        io::write_matrix(
            &path,
            &data.x_observed.columns(0, d1).into_owned(),
            Some(&names[..d1]),
        )?;
        out.push(path);
        let mut stacked = DMatrix::zeros(n * d1, d1);
        for i in 0..n {
            stacked
                .view_mut((i * d1, 0), (d1, d1))
                .copy_from(data.error_spec.delta(i).expect("block"));
        }
        let path = dir.join("latent_delta.csv");
        io::write_matrix(&path, &stacked, None)?;
        out.push(path);
    } else {
        let path = dir.join("covariates.csv");
        io::write_matrix(&path, &data.x_observed, Some(&names))?;
        out.push(path);
        if let Some(delta) = data.error_spec.delta(0) {
            let path = dir.join("delta.csv");
            io::write_matrix(&path, delta, None)?;
            out.push(path);
        }
    }
    Ok(out)
}

fn write_long(path: &Path, m: &DMatrix<f64>, header: &[String]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for r in m.row_iter() {
        let ids = format!("{},{}", r[0] as u64, r[1] as u64);
        let vals: Vec<String> = r.iter().skip(2).map(|&v| io::format_number(v)).collect();
        writeln!(f, "{ids},{}", vals.join(","))?;
    }
    f.flush()?;
    Ok(())
}
