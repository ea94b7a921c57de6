//! Datasets, standardization, validation splits and K-fold partitions.
//!
//! A [`Dataset`] carries an outcome vector and an `n × p` covariate matrix
//! together with the affine map back to original units. Columns are indexed
//! in table order throughout: index 0 is the outcome, `1..=p` the covariates.
//! Standardization uses the population convention, so a standardized column
//! satisfies `(1/n) Σ x² = 1`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Relationship between stored values and their original units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Values are in original units.
    Raw,
    /// Values were centred and scaled by this dataset's own moments.
    Standardized,
    /// Values use constants borrowed from another dataset (a row subset, or
    /// a part too small to standardize on its own).
    Borrowed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizeOptions {
    /// Remove zero-variance covariates instead of failing.
    pub allow_drop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    col_means: Vec<f64>,
    col_scales: Vec<f64>,
    scaling: Scaling,
    names: Vec<String>,
    dropped: Vec<String>,
}

/// Metadata emitted alongside reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub p: usize,
    pub names: Vec<String>,
    pub col_means: Vec<f64>,
    pub col_scales: Vec<f64>,
    pub scaling: Scaling,
    pub dropped: Vec<String>,
}

fn default_names(p: usize) -> Vec<String> {
    std::iter::once("y".to_string())
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect()
}

fn moments(col: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = col.clone().sum::<f64>() / nf;
    let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    (mean, var.sqrt())
}

fn is_constant(mean: f64, sd: f64) -> bool {
    !(sd > 1e-12 * (1.0 + mean.abs()))
}

impl Dataset {
    /// Raw dataset in original units.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let p = x.ncols();
        Self::with_names(y, x, default_names(p))
    }

    pub fn with_names(y: DVector<f64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if y.is_empty() || x.nrows() == 0 {
            return Err(Error::EmptyData);
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("at least one covariate is required".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                found: x.nrows(),
            });
        }
        if names.len() != x.ncols() + 1 {
            return Err(Error::DimensionMismatch {
                expected: x.ncols() + 1,
                found: names.len(),
            });
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in dataset".into()));
        }
        let p = x.ncols();
        Ok(Self {
            y,
            x,
            col_means: vec![0.0; p + 1],
            col_scales: vec![1.0; p + 1],
            scaling: Scaling::Raw,
            names,
            dropped: Vec::new(),
        })
    }

    /// Build from row-major slices; convenient in tests.
    pub fn from_rows(y: &[f64], rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: bad.len(),
            });
        }
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(DVector::from_column_slice(y), x)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn col_means(&self) -> &[f64] {
        &self.col_means
    }

    pub fn col_scales(&self) -> &[f64] {
        &self.col_scales
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn is_standardized(&self) -> bool {
        self.scaling == Scaling::Standardized
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Covariates removed by a permissive standardization.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            n: self.n(),
            p: self.p(),
            names: self.names.clone(),
            col_means: self.col_means.clone(),
            col_scales: self.col_scales.clone(),
            scaling: self.scaling,
            dropped: self.dropped.clone(),
        }
    }

    pub fn standardize(&self) -> Result<Dataset> {
        self.standardize_with(StandardizeOptions::default())
    }

    /// Centre and scale every column by its own mean and population standard
    /// deviation. The recorded constants compose with any earlier transform,
    /// so they always map back to original units.
    pub fn standardize_with(&self, opts: StandardizeOptions) -> Result<Dataset> {
        let n = self.n();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let (ym, ys) = moments(self.y.iter().copied(), n);
        if is_constant(ym, ys) {
            return Err(Error::ConstantColumn(0));
        }
        let mut keep = Vec::with_capacity(self.p());
        let mut stats = Vec::with_capacity(self.p());
        let mut dropped = self.dropped.clone();
        for j in 0..self.p() {
            let (m, s) = moments(self.x.column(j).iter().copied(), n);
            if is_constant(m, s) {
                if !opts.allow_drop {
                    return Err(Error::ConstantColumn(j + 1));
                }
                log::warn!("dropping constant column {}", self.names[j + 1]);
                dropped.push(self.names[j + 1].clone());
                continue;
            }
            keep.push(j);
            stats.push((m, s));
        }
        if keep.is_empty() {
            return Err(Error::ConstantColumn(1));
        }
        let y = self.y.map(|v| (v - ym) / ys);
        let x = DMatrix::from_fn(n, keep.len(), |i, k| {
            let (m, s) = stats[k];
            (self.x[(i, keep[k])] - m) / s
        });
        let mut col_means = vec![self.col_means[0] + self.col_scales[0] * ym];
        let mut col_scales = vec![self.col_scales[0] * ys];
        let mut names = vec![self.names[0].clone()];
        for (k, &j) in keep.iter().enumerate() {
            let (m, s) = stats[k];
            col_means.push(self.col_means[j + 1] + self.col_scales[j + 1] * m);
            col_scales.push(self.col_scales[j + 1] * s);
            names.push(self.names[j + 1].clone());
        }
        Ok(Dataset {
            y,
            x,
            col_means,
            col_scales,
            scaling: Scaling::Standardized,
            names,
            dropped,
        })
    }

    /// Row subset in the parent's coordinates.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        let x = self.x.select_rows(idx);
        Dataset {
            y,
            x,
            col_means: self.col_means.clone(),
            col_scales: self.col_scales.clone(),
            scaling: if self.scaling == Scaling::Raw {
                Scaling::Raw
            } else {
                Scaling::Borrowed
            },
            names: self.names.clone(),
            dropped: self.dropped.clone(),
        }
    }

    /// Express this dataset in the coordinates of `reference`. Both must
    /// describe the same original columns.
    pub fn rescaled_like(&self, reference: &Dataset) -> Result<Dataset> {
        if self.names != reference.names {
            return Err(Error::DimensionMismatch {
                expected: reference.p(),
                found: self.p(),
            });
        }
        let map = |v: f64, c: usize| {
            let orig = self.col_means[c] + self.col_scales[c] * v;
            (orig - reference.col_means[c]) / reference.col_scales[c]
        };
        let y = self.y.map(|v| map(v, 0));
        let x = DMatrix::from_fn(self.n(), self.p(), |i, j| map(self.x[(i, j)], j + 1));
        Ok(Dataset {
            y,
            x,
            col_means: reference.col_means.clone(),
            col_scales: reference.col_scales.clone(),
            scaling: if reference.scaling == Scaling::Raw {
                Scaling::Raw
            } else {
                Scaling::Borrowed
            },
            names: reference.names.clone(),
            dropped: reference.dropped.clone(),
        })
    }

    /// Values in original units.
    pub fn to_original_units(&self) -> Dataset {
        let y = DVector::from_iterator(
            self.n(),
            self.y.iter().map(|v| self.col_means[0] + self.col_scales[0] * v),
        );
        let x = DMatrix::from_fn(self.n(), self.p(), |i, j| {
            self.col_means[j + 1] + self.col_scales[j + 1] * self.x[(i, j)]
        });
        Dataset {
            y,
            x,
            col_means: vec![0.0; self.p() + 1],
            col_scales: vec![1.0; self.p() + 1],
            scaling: Scaling::Raw,
            names: self.names.clone(),
            dropped: self.dropped.clone(),
        }
    }

    /// Standardize a part of a split, falling back to `fallback`'s constants
    /// when the part cannot be standardized on its own (a single row, or a
    /// column that is constant within the part).
    fn standardize_part(&self, fallback: Option<&Dataset>) -> Result<Dataset> {
        match (self.standardize(), fallback) {
            (Ok(d), _) => Ok(d),
            (Err(Error::ConstantColumn(_)), Some(reference)) if reference.is_standardized() => {
                self.rescaled_like(reference)
            }
            (Err(e), _) => Err(e),
        }
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::ParseError {
            line: 1,
            message: e.to_string(),
        })?;
        let width = header.len();
        if width < 2 {
            return Err(Error::ParseError {
                line: 1,
                message: "header needs an outcome and at least one covariate".into(),
            });
        }
        let names: Vec<String> = header.iter().map(str::to_string).collect();
        let mut values: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for record in rdr.records() {
            let record = record.map_err(|e| Error::ParseError {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(n + 2, |p| p.line() as usize);
            if record.len() == 1 && record.get(0) == Some("") {
                continue;
            }
            if record.len() != width {
                return Err(Error::RaggedRow {
                    line,
                    expected: width,
                    found: record.len(),
                });
            }
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|_| Error::ParseError {
                    line,
                    message: format!("not a number: {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::ParseError {
                        line,
                        message: format!("non-finite value: {field:?}"),
                    });
                }
                values.push(v);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let y = DVector::from_iterator(n, (0..n).map(|i| values[i * width]));
        let x = DMatrix::from_fn(n, width - 1, |i, j| values[i * width + j + 1]);
        Dataset::with_names(y, x, names)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the stored values (not mapped back to original units).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.names).map_err(io)?;
        let mut row = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            row.clear();
            row.push(self.y[i].to_string());
            row.extend((0..self.p()).map(|j| self.x[(i, j)].to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// A training/test partition, each part re-standardized.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

impl SplitPair {
    fn from_indices(
        data: &Dataset,
        mut train_idx: Vec<usize>,
        mut test_idx: Vec<usize>,
        seed: u64,
        ratio: f64,
    ) -> Result<Self> {
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let train = data.rows(&train_idx).standardize()?;
        let test = data.rows(&test_idx).standardize_part(Some(&train))?;
        Ok(Self {
            train,
            test,
            train_idx,
            test_idx,
            seed,
            ratio,
        })
    }

    /// The test part expressed in the training part's coordinates, so a
    /// model fitted on `train` is scored as a fixed predictor.
    pub fn test_in_train_scale(&self) -> Result<Dataset> {
        self.test.rescaled_like(&self.train)
    }
}

/// Random validation split with `round(ratio · n)` training rows.
pub fn split_validation(data: &Dataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    let n = data.n();
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("ratio {ratio} outside (0, 1)")));
    }
    let n_t = (ratio * n as f64).round() as usize;
    if n < 2 || n_t == 0 || n_t >= n {
        return Err(Error::DegenerateSplit { n, ratio });
    }
    if n_t < data.p() + 1 {
        log::warn!("training part has {n_t} rows for {} covariates", data.p());
    }
    let perm = rng::permutation(n, seed);
    let (train, test) = perm.split_at(n_t);
    SplitPair::from_indices(data, train.to_vec(), test.to_vec(), seed, ratio)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSet {
    pub folds: Vec<Vec<usize>>,
    pub k: usize,
    pub seed: u64,
}

/// Shuffle the rows and deal them into `k` folds whose sizes differ by at
/// most one; the first `n mod k` folds take the extra row.
pub fn make_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldSet> {
    let n = data.n();
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    let perm = rng::permutation(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for q in 0..k {
        let size = base + usize::from(q < extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(FoldSet { folds, k, seed })
}

impl FoldSet {
    /// Round `q`: fold `q` is the test part, the rest train.
    pub fn round(&self, data: &Dataset, q: usize) -> Result<SplitPair> {
        let test_idx = self.folds[q].clone();
        let train_idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(r, _)| r != q)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let ratio = train_idx.len() as f64 / data.n() as f64;
        SplitPair::from_indices(data, train_idx, test_idx, self.seed, ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toy() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64 + 0.5 * i as f64])
            .collect();
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64 * 0.3 - i as f64).collect();
        Dataset::from_rows(&y, &rows).unwrap()
    }

    #[test]
    fn standardize_three_points() {
        let d = Dataset::from_rows(&[1.0, 2.0, 3.0], &[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let s = d.standardize().unwrap();
        // population sd of (1,2,3) is sqrt(2/3)
        let k = (1.5f64).sqrt();
        for (got, want) in s.y().iter().zip([-k, 0.0, k]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in s.x().iter().zip([-k, 0.0, k]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.col_means()[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.col_scales()[1], (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn standardize_is_idempotent() {
        let s = toy().standardize().unwrap();
        let raw = Dataset::new(s.y().clone(), s.x().clone()).unwrap();
        let again = raw.standardize().unwrap();
        for (a, b) in again.x().iter().zip(s.x().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        for m in again.col_means() {
            assert_abs_diff_eq!(*m, 0.0, epsilon = 1e-12);
        }
        for c in again.col_scales() {
            assert_abs_diff_eq!(*c, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected_or_dropped() {
        let d = Dataset::from_rows(
            &[1.0, 2.0, 4.0],
            &[vec![5.0, 1.0], vec![5.0, 3.0], vec![5.0, 2.0]],
        )
        .unwrap();
        assert_eq!(d.standardize(), Err(Error::ConstantColumn(1)));
        let s = d
            .standardize_with(StandardizeOptions { allow_drop: true })
            .unwrap();
        assert_eq!(s.p(), 1);
        assert_eq!(s.dropped(), ["x1".to_string()]);
        assert_eq!(s.names(), ["y".to_string(), "x2".to_string()]);
    }

    #[test]
    fn composed_constants_map_back() {
        let d = toy();
        let s = d.standardize().unwrap();
        let part = s.rows(&[0, 2, 3, 7, 9]).standardize().unwrap();
        let orig = part.to_original_units();
        let direct = d.rows(&[0, 2, 3, 7, 9]);
        for (a, b) in orig.x().iter().zip(direct.x().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        for (a, b) in orig.y().iter().zip(direct.y().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = toy();
        let s = split_validation(&d, 0.8, 7).unwrap();
        assert_eq!(s.train.n(), 8);
        assert_eq!(s.test.n(), 2);
        let mut all: Vec<usize> = s.train_idx.iter().chain(&s.test_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let again = split_validation(&d, 0.8, 7).unwrap();
        assert_eq!(s.train_idx, again.train_idx);
        assert_eq!(s.test_idx, again.test_idx);
    }

    #[test]
    fn single_row_cannot_split() {
        let d = Dataset::from_rows(&[1.0], &[vec![2.0]]).unwrap();
        assert!(matches!(
            split_validation(&d, 0.8, 1),
            Err(Error::DegenerateSplit { .. })
        ));
    }

    #[test]
    fn fold_sizes() {
        let d = toy();
        let f = make_folds(&d, 5, 3).unwrap();
        assert!(f.folds.iter().all(|f| f.len() == 2));
        let f = make_folds(&d, 3, 3).unwrap();
        let sizes: Vec<usize> = f.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(make_folds(&d, 11, 3), Err(Error::BadK { k: 11, n: 10 }));
        assert_eq!(make_folds(&d, 1, 3), Err(Error::BadK { k: 1, n: 10 }));
    }

    #[test]
    fn single_row_test_fold_borrows_training_constants() {
        let d = toy();
        let f = make_folds(&d, 10, 5).unwrap();
        let round = f.round(&d, 4).unwrap();
        assert_eq!(round.test.n(), 1);
        assert_eq!(round.test.scaling(), Scaling::Borrowed);
        assert_eq!(round.test.col_means(), round.train.col_means());
    }

    #[test]
    fn csv_parse_and_errors() {
        let d = Dataset::from_csv_reader("y,x1\n1,2\n3,4".as_bytes()).unwrap();
        assert_eq!((d.n(), d.p()), (2, 1));
        assert!(matches!(
            Dataset::from_csv_reader("y,x1\n1,abc".as_bytes()),
            Err(Error::ParseError { line: 2, .. })
        ));
        assert!(matches!(
            Dataset::from_csv_reader("y,x1\n1,2\n3,4,5".as_bytes()),
            Err(Error::RaggedRow { line: 3, .. })
        ));
        assert_eq!(
            Dataset::from_csv_reader("y,x1\n".as_bytes()),
            Err(Error::EmptyData)
        );
    }
}
