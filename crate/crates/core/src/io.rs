//! CSV readers and writers for the file formats used by the command line.
//!
//! | input | layout |
//! |---|---|
//! | dense weights | `n` rows of `n` numbers, optional header row |
//! | edge list | `i,j[,w]` with 0-based node indices, optional header; each line sets `A[i][j]` |
//! | coordinates | `id,lat,lon` with header, rows in node order |
//! | table | header row of names, numeric rows |
//! | delta | `d1 × d1` shared, or `n·d1 × d1` stacked per observation; no header |
//! | replicates | `obs_id,rep_id,col1..` with header (long format) |
//! | validation | header with paired `true_<c>` and `proxy_<c>` columns |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SarError};

fn parse_err(path: &Path, msg: impl Into<String>) -> SarError {
    SarError::Parse {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| parse_err(path, format!("cannot open: {e}")))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn records(path: &Path, headers: bool) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = reader(path, headers)?;
    let head = if headers {
        rdr.headers()
            .map_err(|e| parse_err(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| parse_err(path, e.to_string()))?;
        if r.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(r);
    }
    Ok((head, rows))
}

fn number(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(path, format!("line {line}: '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            format!("line {line}: non-finite value '{field}'"),
        ));
    }
    Ok(v)
}

fn numeric_rows(
    path: &Path,
    rows: &[csv::StringRecord],
    first_line: usize,
) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (k, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(parse_err(
                path,
                format!(
                    "line {}: expected {cols} fields, found {}",
                    k + first_line,
                    r.len()
                ),
            ));
        }
        for f in r.iter() {
            data.push(number(path, k + first_line, f)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}

fn looks_like_header(r: &csv::StringRecord) -> bool {
    r.iter().any(|f| f.parse::<f64>().is_err())
}

/// Headerless numeric matrix; a leading non-numeric row is skipped.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let (_, mut rows) = records(path, false)?;
    let mut first = 1;
    if rows.first().is_some_and(looks_like_header) {
        rows.remove(0);
        first = 2;
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    numeric_rows(path, &rows, first)
}

/// Dense `n × n` adjacency matrix.
pub fn read_dense_weights(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let a = read_matrix(path)?;
    if a.nrows() != a.ncols() {
        return Err(parse_err(
            path,
            format!("adjacency must be square, got {}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(a)
}

/// Edge list into an `n × n` adjacency matrix.
pub fn read_edge_list(path: impl AsRef<Path>, n: usize) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let (_, mut rows) = records(path, false)?;
    let mut first = 1;
    if rows.first().is_some_and(looks_like_header) {
        rows.remove(0);
        first = 2;
    }
    let mut a = DMatrix::zeros(n, n);
    for (k, r) in rows.iter().enumerate() {
        let line = k + first;
        if r.len() < 2 || r.len() > 3 {
            return Err(parse_err(path, format!("line {line}: expected i,j[,w]")));
        }
        let idx = |f: &str| -> Result<usize> {
            let i: usize = f
                .parse()
                .map_err(|_| parse_err(path, format!("line {line}: bad node index '{f}'")))?;
            if i >= n {
                return Err(parse_err(
                    path,
                    format!("line {line}: node {i} out of range for n = {n}"),
                ));
            }
            Ok(i)
        };
        let (i, j) = (idx(&r[0])?, idx(&r[1])?);
        let w = if r.len() == 3 {
            number(path, line, &r[2])?
        } else {
            1.0
        };
        a[(i, j)] = w;
    }
    Ok(a)
}

/// `(lat, lon)` pairs from an `id,lat,lon` file.
pub fn read_coordinates(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let (head, rows) = records(path, true)?;
    let find = |name: &str| {
        head.iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(path, format!("missing column '{name}'")))
    };
    let (lat, lon) = (find("lat")?, find("lon")?);
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            let get = |c: usize| {
                r.get(c)
                    .ok_or_else(|| parse_err(path, format!("line {}: short row", k + 2)))
            };
            Ok((
                number(path, k + 2, get(lat)?)?,
                number(path, k + 2, get(lon)?)?,
            ))
        })
        .collect()
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub data: DMatrix<f64>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<DVector<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.data.column(j).into_owned())
    }

    /// The named columns, in the given order, as a matrix.
    pub fn select(&self, names: &[String]) -> std::result::Result<DMatrix<f64>, String> {
        let mut out = DMatrix::zeros(self.data.nrows(), names.len());
        for (k, name) in names.iter().enumerate() {
            let j = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| format!("no column named '{name}'"))?;
            out.set_column(k, &self.data.column(j));
        }
        Ok(out)
    }
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let (names, rows) = records(path, true)?;
    if names.is_empty() {
        return Err(parse_err(path, "missing header row"));
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    let data = numeric_rows(path, &rows, 2)?;
    if data.ncols() != names.len() {
        return Err(parse_err(
            path,
            format!(
                "header has {} names, rows have {} fields",
                names.len(),
                data.ncols()
            ),
        ));
    }
    Ok(Table { names, data })
}

/// Outcome vector: the only column, or the column named `y`.
pub fn read_outcome(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let path = path.as_ref();
    let t = read_table(path)?;
    if t.names.len() == 1 {
        return Ok(t.data.column(0).into_owned());
    }
    t.column("y")
        .ok_or_else(|| parse_err(path, "expected a single column or one named 'y'"))
}

/// Error covariances: one shared `d1 × d1` block or `n` stacked blocks.
pub fn read_deltas(path: impl AsRef<Path>, n: usize, d1: usize) -> Result<Vec<DMatrix<f64>>> {
    let path = path.as_ref();
    let m = read_matrix(path)?;
    if m.ncols() != d1 {
        return Err(parse_err(
            path,
            format!("expected {d1} columns, found {}", m.ncols()),
        ));
    }
    if m.nrows() == d1 {
        return Ok(vec![m; n]);
    }
    if m.nrows() == n * d1 {
        return Ok((0..n).map(|i| m.rows(i * d1, d1).into_owned()).collect());
    }
    Err(parse_err(
        path,
        format!(
            "expected {d1} rows (shared) or {} rows (stacked), found {}",
            n * d1,
            m.nrows()
        ),
    ))
}

/// Long-format replicates grouped by `obs_id` (ascending), replicates
/// ordered by `rep_id`. Returns the covariate names and one `k × d1` matrix
/// per observation.
pub fn read_replicates(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<DMatrix<f64>>)> {
    let path = path.as_ref();
    let (head, rows) = records(path, true)?;
    if head.len() < 3 || head[0] != "obs_id" || head[1] != "rep_id" {
        return Err(parse_err(
            path,
            "header must be obs_id,rep_id,<covariates...>",
        ));
    }
    let names = head[2..].to_vec();
    let d1 = names.len();
    let mut groups: BTreeMap<i64, Vec<(i64, Vec<f64>)>> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        let line = k + 2;
        if r.len() != head.len() {
            return Err(parse_err(
                path,
                format!("line {line}: expected {} fields", head.len()),
            ));
        }
        let id = |f: &str| {
            f.parse::<i64>()
                .map_err(|_| parse_err(path, format!("line {line}: bad id '{f}'")))
        };
        let vals = (2..r.len())
            .map(|c| number(path, line, &r[c]))
            .collect::<Result<Vec<_>>>()?;
        groups
            .entry(id(&r[0])?)
            .or_default()
            .push((id(&r[1])?, vals));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (obs, mut reps) in groups {
        reps.sort_by_key(|(r, _)| *r);
        if reps.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(parse_err(
                path,
                format!("observation {obs} has a duplicated rep_id"),
            ));
        }
        let flat: Vec<f64> = reps.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        out.push(DMatrix::from_row_slice(reps.len(), d1, &flat));
    }
    Ok((names, out))
}

/// Paired validation columns. Returns the covariate names (suffixes), the
/// true values and the proxies, both `m × d1`.
pub fn read_validation(
    path: impl AsRef<Path>,
) -> Result<(Vec<String>, DMatrix<f64>, DMatrix<f64>)> {
    let path = path.as_ref();
    let t = read_table(path)?;
    let names: Vec<String> = t
        .names
        .iter()
        .filter_map(|n| n.strip_prefix("true_").map(str::to_string))
        .collect();
    if names.is_empty() {
        return Err(parse_err(path, "no true_* columns"));
    }
    let truth: Vec<String> = names.iter().map(|n| format!("true_{n}")).collect();
    let proxy: Vec<String> = names.iter().map(|n| format!("proxy_{n}")).collect();
    let u = t.select(&truth).map_err(|e| parse_err(path, e))?;
    let p = t.select(&proxy).map_err(|e| parse_err(path, e))?;
    Ok((names, u, p))
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a matrix as CSV with an optional header.
pub fn write_matrix(
    path: impl AsRef<Path>,
    m: &DMatrix<f64>,
    header: Option<&[String]>,
) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    if let Some(h) = header {
        writeln!(f, "{}", h.join(","))?;
    }
    for r in m.row_iter() {
        let line: Vec<String> = r.iter().map(|&v| format_number(v)).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(())
}
