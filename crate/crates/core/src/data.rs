//! Datasets, CSV ingestion, and covariate standardization.
//!
//! Covariates are stored column-major: every solver pass walks whole
//! columns, so a column is a contiguous `&[f64]` of length `n`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BalError, Result};

/// Dense column-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix, failing cleanly instead of aborting when the allocation
    /// cannot be satisfied.
    pub fn zeros(nrows: usize, ncols: usize) -> Result<Self> {
        let len = nrows
            .checked_mul(ncols)
            .ok_or_else(|| BalError::data("matrix dimensions overflow"))?;
        let mut data = Vec::new();
        data.try_reserve_exact(len)
            .map_err(|_| BalError::OutOfMemory {
                what: "covariate matrix",
                bytes: len.saturating_mul(std::mem::size_of::<f64>()),
            })?;
        data.resize(len, 0.0);
        Ok(Matrix { nrows, ncols, data })
    }

    pub fn from_columns(nrows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let ncols = columns.len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for (j, col) in columns.into_iter().enumerate() {
            if col.len() != nrows {
                return Err(BalError::data(format!(
                    "column {j} has {} entries, expected {nrows}",
                    col.len()
                )));
            }
            data.extend(col);
        }
        Ok(Matrix { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Matrix::zeros(nrows, ncols)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(BalError::data(format!(
                    "row {i} has {} entries, expected {ncols}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                m.data[j * nrows + i] = v;
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.nrows;
        &mut self.data[j * n..(j + 1) * n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-row matrix has no data anyway
        let n = self.nrows.max(1);
        self.data.chunks_exact(n).take(self.ncols)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Matrix> {
        let mut out = Matrix::zeros(rows.len(), self.ncols)?;
        for j in 0..self.ncols {
            let src = self.col(j);
            for (dst, &i) in out.col_mut(j).iter_mut().zip(rows) {
                *dst = src[i];
            }
        }
        Ok(out)
    }

    /// Copy with columns permuted: column `k` of the result is column
    /// `order[k]` of `self`.
    pub fn select_columns(&self, order: &[usize]) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.nrows, order.len())?;
        for (k, &j) in order.iter().enumerate() {
            out.col_mut(k).copy_from_slice(self.col(j));
        }
        Ok(out)
    }
}

/// Vectors longer than this are processed in chunks of this size, in
/// parallel; partial results are combined in chunk order.
pub const PAR_CHUNK: usize = 16384;

#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Dot product with a fixed accumulation order, so the result does not
/// depend on the number of worker threads.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= PAR_CHUNK {
        return dot4(a, b);
    }
    let partials: Vec<f64> = a
        .par_chunks(PAR_CHUNK)
        .zip(b.par_chunks(PAR_CHUNK))
        .map(|(x, y)| dot4(x, y))
        .collect();
    partials.iter().sum()
}

#[inline]
pub fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.chunks_exact(4);
    let rem = chunks.remainder();
    for x in chunks {
        acc[0] += x[0];
        acc[1] += x[1];
        acc[2] += x[2];
        acc[3] += x[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rem.iter().sum::<f64>()
}

/// Contiguous partition of the feature indices into named groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroups {
    names: Vec<String>,
    /// `starts[g]..starts[g + 1]` are the features of group `g`; the last
    /// entry equals `p`.
    starts: Vec<usize>,
}

impl FeatureGroups {
    pub fn new(names: Vec<String>, sizes: &[usize]) -> Result<Self> {
        if names.len() != sizes.len() {
            return Err(BalError::data("group names and sizes differ in length"));
        }
        if sizes.contains(&0) {
            return Err(BalError::data("empty feature group"));
        }
        let mut starts = Vec::with_capacity(sizes.len() + 1);
        let mut acc = 0;
        starts.push(0);
        for &s in sizes {
            acc += s;
            starts.push(acc);
        }
        Ok(FeatureGroups { names, starts })
    }

    /// One group per feature.
    pub fn singletons(names: &[String]) -> Self {
        FeatureGroups {
            names: names.to_vec(),
            starts: (0..=names.len()).collect(),
        }
    }

    /// Groups from a per-feature label vector; labels must already be
    /// contiguous.
    pub fn from_labels(labels: &[String]) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut sizes: Vec<usize> = Vec::new();
        for label in labels {
            if names.last() == Some(label) {
                *sizes.last_mut().unwrap() += 1;
            } else {
                if names.contains(label) {
                    return Err(BalError::data(format!(
                        "group '{label}' is not a contiguous block of features"
                    )));
                }
                names.push(label.clone());
                sizes.push(1);
            }
        }
        FeatureGroups::new(names, &sizes)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_features(&self) -> usize {
        *self.starts.last().unwrap_or(&0)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.starts[g]..self.starts[g + 1]
    }

    pub fn size(&self, g: usize) -> usize {
        self.starts[g + 1] - self.starts[g]
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.starts.windows(2).map(|w| w[0]..w[1])
    }

    pub fn is_singletons(&self) -> bool {
        self.starts.windows(2).all(|w| w[1] - w[0] == 1)
    }

    /// Group index of feature `j`.
    pub fn group_of(&self, j: usize) -> Option<usize> {
        if j >= self.num_features() {
            return None;
        }
        Some(self.starts.partition_point(|&s| s <= j) - 1)
    }
}

/// Raw covariates and binary treatment.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    treatment: Vec<bool>,
    feature_names: Vec<String>,
    groups: Option<FeatureGroups>,
    /// `original_order[k]` is the input column position of feature `k`.
    original_order: Vec<usize>,
    n1: usize,
}

impl Dataset {
    pub fn new(x: Matrix, treatment: Vec<bool>, feature_names: Vec<String>) -> Result<Self> {
        if x.nrows() != treatment.len() {
            return Err(BalError::Dimension {
                expected: x.nrows(),
                actual: treatment.len(),
            });
        }
        if x.ncols() != feature_names.len() {
            return Err(BalError::Dimension {
                expected: x.ncols(),
                actual: feature_names.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(BalError::data("no covariate columns"));
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % x.nrows(), pos / x.nrows());
            return Err(BalError::data(format!(
                "non-finite value in row {} of column '{}'",
                i + 1,
                feature_names[j]
            )));
        }
        let n1 = treatment.iter().filter(|&&t| t).count();
        let n0 = treatment.len() - n1;
        if n1 == 0 || n0 == 0 {
            return Err(BalError::data(format!(
                "both arms must be non-empty (treated: {n1}, control: {n0})"
            )));
        }
        let p = x.ncols();
        Ok(Dataset {
            x,
            treatment,
            feature_names,
            groups: None,
            original_order: (0..p).collect(),
            n1,
        })
    }

    /// Attach a contiguous group partition of the current feature order.
    pub fn with_groups(mut self, groups: FeatureGroups) -> Result<Self> {
        if groups.num_features() != self.p() {
            return Err(BalError::Dimension {
                expected: self.p(),
                actual: groups.num_features(),
            });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    /// Attach groups given as one label per feature, reordering features so
    /// that each group is a contiguous block. Groups are ordered by first
    /// appearance; features keep their relative order within a group.
    pub fn with_group_labels(self, labels: &[String]) -> Result<Self> {
        if labels.len() != self.p() {
            return Err(BalError::Dimension {
                expected: self.p(),
                actual: labels.len(),
            });
        }
        let mut group_names: Vec<&String> = Vec::new();
        for l in labels {
            if !group_names.contains(&l) {
                group_names.push(l);
            }
        }
        let mut order = Vec::with_capacity(self.p());
        let mut sizes = Vec::with_capacity(group_names.len());
        for g in &group_names {
            let before = order.len();
            order.extend((0..self.p()).filter(|&j| &labels[j] == *g));
            sizes.push(order.len() - before);
        }
        let x = self.x.select_columns(&order)?;
        let names = order.iter().map(|&j| self.feature_names[j].clone()).collect();
        let original_order = order.iter().map(|&j| self.original_order[j]).collect();
        let groups = FeatureGroups::new(group_names.into_iter().cloned().collect(), &sizes)?;
        Ok(Dataset {
            x,
            treatment: self.treatment,
            feature_names: names,
            groups: Some(groups),
            original_order,
            n1: self.n1,
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn groups(&self) -> Option<&FeatureGroups> {
        self.groups.as_ref()
    }

    pub fn original_order(&self) -> &[usize] {
        &self.original_order
    }

    pub fn n(&self) -> usize {
        self.treatment.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.n() - self.n1
    }

    /// Rows subset, keeping features and groups.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let x = self.x.select_rows(rows)?;
        let treatment: Vec<bool> = rows.iter().map(|&i| self.treatment[i]).collect();
        let mut ds = Dataset::new(x, treatment, self.feature_names.clone())?;
        ds.groups = self.groups.clone();
        ds.original_order = self.original_order.clone();
        Ok(ds)
    }

    /// SHA-256 over dimensions, treatment and covariate bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.p() as u64).to_le_bytes());
        let w: Vec<u8> = self.treatment.iter().map(|&t| t as u8).collect();
        h.update(&w);
        for v in self.x.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn csv_err(path: &Path, e: impl fmt::Display) -> BalError {
    BalError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| BalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_cell(path: &Path, raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| {
        csv_err(
            path,
            format!("non-numeric value '{raw}' in row {row}, column '{column}'"),
        )
    })?;
    if !v.is_finite() {
        return Err(BalError::data(format!(
            "non-finite value '{raw}' in row {row}, column '{column}'"
        )));
    }
    Ok(v)
}

/// Read a comma-separated file with a header row. Every column except the
/// treatment column becomes a covariate, in header order.
pub fn load_csv(path: &Path, treatment_col: &str, group_file: Option<&Path>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let t_idx = headers
        .iter()
        .position(|h| h == treatment_col)
        .ok_or_else(|| BalError::data(format!("treatment column '{treatment_col}' not found")))?;
    let cov_idx: Vec<usize> = (0..headers.len()).filter(|&k| k != t_idx).collect();
    let names: Vec<String> = cov_idx.iter().map(|&k| headers[k].clone()).collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); cov_idx.len()];
    let mut treatment = Vec::new();
    let mut bad_treatment: Vec<String> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(csv_err(
                path,
                format!("row {row} has {} fields, expected {}", rec.len(), headers.len()),
            ));
        }
        let t = parse_cell(path, &rec[t_idx], row, treatment_col)?;
        if t == 1.0 {
            treatment.push(true);
        } else if t == 0.0 {
            treatment.push(false);
        } else {
            if bad_treatment.len() < 5 {
                bad_treatment.push(rec[t_idx].to_string());
            }
            treatment.push(false);
        }
        for (col, &k) in columns.iter_mut().zip(&cov_idx) {
            col.push(parse_cell(path, &rec[k], row, &headers[k])?);
        }
    }
    if !bad_treatment.is_empty() {
        return Err(BalError::data(format!(
            "non-binary treatment column '{treatment_col}' (values {})",
            bad_treatment.join(", ")
        )));
    }
    let n = treatment.len();
    let ds = Dataset::new(Matrix::from_columns(n, columns)?, treatment, names)?;
    match group_file {
        None => Ok(ds),
        Some(gpath) => {
            let map = read_name_map(gpath, ds.feature_names())?;
            // unlisted features become singleton groups named after themselves
            let labels: Vec<String> = ds
                .feature_names()
                .iter()
                .map(|f| map.get(f).cloned().unwrap_or_else(|| f.clone()))
                .collect();
            ds.with_group_labels(&labels)
        }
    }
}

/// Read a two-column `name,value` file. The first line is treated as a
/// header when its first field is not one of `known`.
pub fn read_name_map(path: &Path, known: &[String]) -> Result<HashMap<String, String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(open(path)?);
    let mut map = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(csv_err(
                path,
                format!("line {} has {} fields, expected 2", r + 1, rec.len()),
            ));
        }
        let name = rec[0].to_string();
        if !known.contains(&name) {
            if r == 0 {
                continue;
            }
            return Err(BalError::data(format!(
                "{} names unknown feature '{name}'",
                path.display()
            )));
        }
        if map.insert(name.clone(), rec[1].to_string()).is_some() {
            return Err(BalError::data(format!(
                "{} lists feature '{name}' twice",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Write the dataset back as CSV in the original column order, with the
/// treatment column first. Values use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_csv(ds: &Dataset, treatment_col: &str, out: &mut dyn Write) -> Result<()> {
    let io = |e: std::io::Error| BalError::Io {
        path: "<output>".into(),
        source: e,
    };
    let p = ds.p();
    let mut inverse = vec![0; p];
    for (k, &orig) in ds.original_order().iter().enumerate() {
        inverse[orig] = k;
    }
    let mut line = String::from(treatment_col);
    for &k in &inverse {
        line.push(',');
        line.push_str(&ds.feature_names()[k]);
    }
    writeln!(out, "{line}").map_err(io)?;
    for i in 0..ds.n() {
        line.clear();
        line.push(if ds.treatment()[i] { '1' } else { '0' });
        for &k in &inverse {
            line.push(',');
            line.push_str(&format!("{:?}", ds.x().get(i, k)));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

/// Causal estimand the weights target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Reweight treated units to the overall covariate means.
    Treated,
    /// Reweight control units to the overall covariate means.
    Control,
    /// Both of the above, as two independent models.
    Ate,
    /// Reweight control units to the treated covariate means.
    Att,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Treated => "treated",
            Target::Control => "control",
            Target::Ate => "ate",
            Target::Att => "att",
        })
    }
}

impl FromStr for Target {
    type Err = BalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "treated" => Ok(Target::Treated),
            "control" => Ok(Target::Control),
            "ate" => Ok(Target::Ate),
            "att" => Ok(Target::Att),
            other => Err(BalError::usage(format!(
                "unknown target '{other}' (expected treated, control, ate or att)"
            ))),
        }
    }
}

/// Which units define the standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Overall,
    TreatedArm,
}

impl Reference {
    pub fn for_target(target: Target) -> Self {
        match target {
            Target::Att => Reference::TreatedArm,
            _ => Reference::Overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationSpec {
    #[serde(with = "crate::hexfloat::vec")]
    pub centers: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    pub scales: Vec<f64>,
    pub reference: Reference,
}

/// Covariates centered and scaled against the reference units, together
/// with the treatment vector of the same rows.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    x: Matrix,
    treatment: Vec<bool>,
    spec: StandardizationSpec,
}

impl StandardizedDesign {
    /// Assemble from an already standardized matrix.
    pub fn from_parts(x: Matrix, treatment: Vec<bool>, spec: StandardizationSpec) -> Result<Self> {
        if x.nrows() != treatment.len() {
            return Err(BalError::Dimension {
                expected: x.nrows(),
                actual: treatment.len(),
            });
        }
        if spec.centers.len() != x.ncols() || spec.scales.len() != x.ncols() {
            return Err(BalError::Dimension {
                expected: x.ncols(),
                actual: spec.centers.len(),
            });
        }
        Ok(StandardizedDesign { x, treatment, spec })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn spec(&self) -> &StandardizationSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        self.x.col(j)
    }

    /// `X̃ᵀ v`, parallel over columns.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.p())
            .into_par_iter()
            .map(|j| dot(self.col(j), v))
            .collect()
    }

    /// `intercept + X̃ β` for a coefficient vector given as (index, value)
    /// pairs.
    pub fn linear_predictor(&self, intercept: f64, coefs: &[(usize, f64)]) -> Vec<f64> {
        let mut eta = vec![intercept; self.n()];
        for &(j, b) in coefs {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(self.col(j)) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    /// Rows subset; standardization is kept, not recomputed.
    pub fn select_rows(&self, rows: &[usize]) -> Result<StandardizedDesign> {
        Ok(StandardizedDesign {
            x: self.x.select_rows(rows)?,
            treatment: rows.iter().map(|&i| self.treatment[i]).collect(),
            spec: self.spec.clone(),
        })
    }
}

/// Mean and sample standard deviation (divisor `m - 1`) over the selected
/// entries of `col`.
fn masked_mean_sd(col: &[f64], mask: Option<&[bool]>) -> (f64, f64, usize) {
    let (mut count, mut total) = (0usize, 0.0);
    for (i, &v) in col.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) {
            count += 1;
            total += v;
        }
    }
    let mean = total / count as f64;
    let mut ss = 0.0;
    for (i, &v) in col.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) {
            ss += (v - mean) * (v - mean);
        }
    }
    let sd = if count > 1 {
        (ss / (count - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd, count)
}

/// Center and scale every covariate. ATT standardizes against the treated
/// units; every other target against all units.
pub fn standardize(ds: &Dataset, target: Target) -> Result<StandardizedDesign> {
    let reference = Reference::for_target(target);
    let mask = match reference {
        Reference::Overall => None,
        Reference::TreatedArm => Some(ds.treatment()),
    };
    let m = mask.map_or(ds.n(), |_| ds.n1());
    if m < 2 {
        return Err(BalError::data(format!(
            "standardization needs at least 2 reference units, found {m}"
        )));
    }
    let stats: Vec<(f64, f64, usize)> = (0..ds.p())
        .into_par_iter()
        .map(|j| masked_mean_sd(ds.x().col(j), mask))
        .collect();
    if let Some(j) = stats.iter().position(|s| !(s.1 > 0.0)) {
        return Err(BalError::data(format!(
            "covariate '{}' has zero variance over the {} units",
            ds.feature_names()[j],
            match reference {
                Reference::Overall => "reference",
                Reference::TreatedArm => "treated",
            }
        )));
    }
    let centers: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let scales: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let mut x = Matrix::zeros(ds.n(), ds.p())?;
    let n = ds.n();
    x.data
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, out)| {
            let (c, s) = (centers[j], scales[j]);
            for (o, &v) in out.iter_mut().zip(ds.x().col(j)) {
                *o = (v - c) / s;
            }
        });
    Ok(StandardizedDesign {
        x,
        treatment: ds.treatment().to_vec(),
        spec: StandardizationSpec {
            centers,
            scales,
            reference,
        },
    })
}

/// Map standardized-scale coefficients back to the raw covariate scale,
/// preserving the linear predictor on every unit.
pub fn destandardize(
    intercept: f64,
    coefs: &[f64],
    spec: &StandardizationSpec,
) -> Result<(f64, Vec<f64>)> {
    if coefs.len() != spec.scales.len() {
        return Err(BalError::Dimension {
            expected: spec.scales.len(),
            actual: coefs.len(),
        });
    }
    let raw: Vec<f64> = coefs
        .iter()
        .zip(&spec.scales)
        .map(|(b, s)| b / s)
        .collect();
    let shift: f64 = raw.iter().zip(&spec.centers).map(|(b, m)| b * m).sum();
    Ok((intercept - shift, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy() -> Dataset {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        Dataset::new(x, vec![true, true, false, false], vec!["x1".into()]).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_two_rows() {
        let f = write_tmp("w,x1\n1,2.0\n0,4.0\n");
        let ds = load_csv(f.path(), "w", None).unwrap();
        assert_eq!((ds.n(), ds.p()), (2, 1));
        assert_eq!(ds.treatment(), &[true, false]);
        assert_eq!(ds.x().col(0), &[2.0, 4.0]);
    }

    #[test]
    fn load_rejects_non_binary_treatment() {
        let f = write_tmp("w,x1\n1,2.0\n0,4.0\n");
        let err = load_csv(f.path(), "x1", None).unwrap_err();
        assert!(err.to_string().contains("non-binary"), "{err}");
        assert!(err.to_string().contains('2'), "{err}");
    }

    #[test]
    fn load_counts_arms() {
        let f = write_tmp("w,a,b\n1,0.1,2\n1,0.2,3\n0,0.3,1\n0,0.5,7\n");
        let ds = load_csv(f.path(), "w", None).unwrap();
        assert_eq!((ds.n1(), ds.n0()), (2, 2));
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn load_rejects_bad_cells() {
        let f = write_tmp("w,x\n1,abc\n0,1\n");
        assert!(matches!(load_csv(f.path(), "w", None), Err(BalError::Csv { .. })));
        let f = write_tmp("w,x\n1,NA\n0,1\n");
        assert!(load_csv(f.path(), "w", None).is_err());
        let f = write_tmp("w,x\n1,inf\n0,1\n");
        assert!(matches!(load_csv(f.path(), "w", None), Err(BalError::Data(_))));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), "w", None),
            Err(BalError::Io { .. })
        ));
    }

    #[test]
    fn group_file_reorders_features() {
        let f = write_tmp("w,a,b,c,d\n1,1,2,3,4\n0,5,6,7,9\n1,2,2,2,2\n0,1,1,1,1\n");
        let g = write_tmp("feature,group\na,g1\nb,g2\nc,g1\nd,g2\n");
        let ds = load_csv(f.path(), "w", Some(g.path())).unwrap();
        assert_eq!(ds.feature_names(), &["a", "c", "b", "d"]);
        assert_eq!(ds.original_order(), &[0, 2, 1, 3]);
        let groups = ds.groups().unwrap();
        assert_eq!(groups.names(), &["g1", "g2"]);
        assert_eq!(groups.range(1), 2..4);
        assert_eq!(ds.x().col(1), &[3.0, 7.0, 2.0, 1.0]);

        let bad = write_tmp("a,g1\nzzz,g2\n");
        assert!(load_csv(f.path(), "w", Some(bad.path())).is_err());
    }

    #[test]
    fn standardize_overall() {
        let d = standardize(&toy(), Target::Ate).unwrap();
        assert_eq!(d.spec().reference, Reference::Overall);
        assert_abs_diff_eq!(d.spec().centers[0], 2.5);
        assert_abs_diff_eq!(d.spec().scales[0], 1.2909944487358056, epsilon = 1e-15);
        let expect = [-1.161895003862225, -0.3872983346207417, 0.3872983346207417, 1.161895003862225];
        for (a, b) in d.col(0).iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_treated_reference() {
        let d = standardize(&toy(), Target::Att).unwrap();
        assert_eq!(d.spec().reference, Reference::TreatedArm);
        assert_abs_diff_eq!(d.spec().centers[0], 1.5);
        assert_abs_diff_eq!(d.spec().scales[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [-r, r, 2.1213203435596424, 3.5355339059327373];
        for (a, b) in d.col(0).iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_constant_reference_column() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![3.0], vec![4.0]]).unwrap();
        let ds = Dataset::new(x, vec![true, true, false, false], vec!["flat".into()]).unwrap();
        let err = standardize(&ds, Target::Att).unwrap_err();
        assert!(err.to_string().contains("flat"));
        assert!(standardize(&ds, Target::Ate).is_ok());

        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let ds = Dataset::new(x, vec![true, false, false], vec!["x".into()]).unwrap();
        assert!(standardize(&ds, Target::Att).is_err());
    }

    #[test]
    fn destandardize_cases() {
        let spec = StandardizationSpec {
            centers: vec![2.0],
            scales: vec![2.0],
            reference: Reference::Overall,
        };
        assert_eq!(destandardize(0.7, &[0.0], &spec).unwrap(), (0.7, vec![0.0]));
        assert_eq!(destandardize(0.0, &[1.0], &spec).unwrap(), (-1.0, vec![0.5]));
        assert!(destandardize(0.0, &[1.0, 2.0], &spec).is_err());
    }

    #[test]
    fn group_lookup() {
        let g = FeatureGroups::new(vec!["a".into(), "b".into()], &[2, 3]).unwrap();
        assert_eq!(g.group_of(0), Some(0));
        assert_eq!(g.group_of(1), Some(0));
        assert_eq!(g.group_of(2), Some(1));
        assert_eq!(g.group_of(4), Some(1));
        assert_eq!(g.group_of(5), None);
        assert!(FeatureGroups::from_labels(&["a".into(), "b".into(), "a".into()]).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_abs_diff_eq!(dot(&a, &b), naive, epsilon = 1e-12);
        assert_abs_diff_eq!(sum(&a), a.iter().sum::<f64>(), epsilon = 1e-12);
    }
}
