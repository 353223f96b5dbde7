//! Knowledge-base predicate features: a sparse binary entity×predicate matrix
//! and its incremental PCA reduction.

use std::io::BufRead;

use indexmap::IndexMap;
use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::normalize_entity;
use crate::error::{Error, Result};
use crate::linalg::svd;
use crate::scalar::Scalar;

/// Per-entity sets of active predicates.
///
/// Entity keys are normalized like corpus person tokens; rows and columns are
/// indexed in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseBinaryMatrix {
    entities: IndexMap<String, ()>,
    predicates: IndexMap<String, ()>,
    rows: Vec<Vec<u32>>,
}

impl SparseBinaryMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.predicates.len()
    }

    /// Sorted active column indices of row `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn row_of(&self, entity: &str) -> Option<usize> {
        self.entities.get_index_of(normalize_entity(entity).as_str())
    }

    pub fn entity(&self, i: usize) -> &str {
        self.entities.get_index(i).expect("row index in range").0
    }

    pub fn predicate(&self, j: usize) -> &str {
        self.predicates.get_index(j).expect("column index in range").0
    }

    pub fn column_of(&self, predicate: &str) -> Option<usize> {
        self.predicates.get_index_of(predicate)
    }

    /// Adds one `(entity, predicate)` pair; repeated pairs have no effect.
    pub fn insert(&mut self, entity: &str, predicate: &str) {
        let (r, new_row) = self.entities.insert_full(normalize_entity(entity), ());
        if new_row.is_none() {
            self.rows.push(Vec::new());
        }
        let (c, _) = self.predicates.insert_full(predicate.to_owned(), ());
        let row = &mut self.rows[r];
        let c = c as u32;
        if let Err(pos) = row.binary_search(&c) {
            row.insert(pos, c);
        }
    }

    /// Densifies rows `range` into a `len×n_cols` matrix.
    pub fn dense_rows<T: Scalar>(&self, range: std::ops::Range<usize>) -> Array2<T> {
        let mut out = Array2::<T>::zeros((range.len(), self.n_cols()));
        for (k, i) in range.enumerate() {
            for &c in &self.rows[i] {
                out[[k, c as usize]] = T::one();
            }
        }
        out
    }
}

/// Reads `entity<TAB>predicate` lines. Blank lines are skipped.
pub fn ingest_predicates<R: BufRead>(input: R) -> Result<SparseBinaryMatrix> {
    let mut m = SparseBinaryMatrix::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(e), Some(p), None) if !e.is_empty() && !p.is_empty() => m.insert(e, p),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected exactly one TAB between entity and predicate".into(),
                })
            }
        }
    }
    Ok(m)
}

pub const PCA_FORMAT_VERSION: u32 = 1;

/// Principal components fitted by incremental PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub mean: Array1<T>,
    /// `k×d`, orthonormal rows.
    pub components: Array2<T>,
    /// Non-increasing.
    pub singular_values: Array1<T>,
    pub n_samples_seen: usize,
}

impl<T: Scalar> PcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.components.ncols()
    }

    /// `σ² / (n − 1)` per component.
    pub fn explained_variance(&self) -> Array1<T> {
        let denom = T::from_usize_lossy(self.n_samples_seen.saturating_sub(1).max(1));
        self.singular_values.mapv(|s| s * s / denom)
    }

    /// `components · (row − mean)`.
    pub fn transform(&self, row: &[T]) -> Result<Vec<T>> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch { expected: self.n_features(), actual: row.len() });
        }
        let centered = Array1::from_iter(row.iter().zip(&self.mean).map(|(&x, &m)| x - m));
        Ok(self.components.dot(&centered).to_vec())
    }

    /// Transform of a binary row given by its active column indices.
    pub fn transform_sparse(&self, active: &[u32]) -> Result<Vec<T>> {
        let d = self.n_features();
        if let Some(&bad) = active.iter().find(|&&c| c as usize >= d) {
            return Err(Error::DimensionMismatch { expected: d, actual: bad as usize + 1 });
        }
        let mut out = self.components.dot(&self.mean).mapv(|x| -x);
        for &c in active {
            out += &self.components.column(c as usize);
        }
        Ok(out.to_vec())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PcaFile::from_model(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: PcaFile<T> = serde_json::from_str(s)?;
        f.into_model()
    }
}

/// On-disk PCA container.
#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct PcaFile<T> {
    format_version: u32,
    n_features: usize,
    n_components: usize,
    n_samples_seen: usize,
    mean: Vec<T>,
    singular_values: Vec<T>,
    components: Vec<Vec<T>>,
}

impl<T: Scalar> PcaFile<T> {
    fn from_model(m: &PcaModel<T>) -> Self {
        Self {
            format_version: PCA_FORMAT_VERSION,
            n_features: m.n_features(),
            n_components: m.n_components(),
            n_samples_seen: m.n_samples_seen,
            mean: m.mean.to_vec(),
            singular_values: m.singular_values.to_vec(),
            components: m.components.rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }

    fn into_model(self) -> Result<PcaModel<T>> {
        if self.format_version != PCA_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                what: "PCA model",
                found: self.format_version,
                expected: PCA_FORMAT_VERSION,
            });
        }
        let (k, d) = (self.n_components, self.n_features);
        if self.mean.len() != d || self.singular_values.len() != k || self.components.len() != k {
            return Err(Error::invalid("PCA file has inconsistent shapes"));
        }
        let flat: Vec<T> = self.components.into_iter().flatten().collect();
        let components = Array2::from_shape_vec((k, d), flat).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(PcaModel {
            mean: Array1::from(self.mean),
            components,
            singular_values: Array1::from(self.singular_values),
            n_samples_seen: self.n_samples_seen,
        })
    }
}

/// Running state of an incremental PCA fit.
#[derive(Debug, Clone)]
pub struct IncrementalPca<T> {
    k: usize,
    mean: Array1<T>,
    components: Array2<T>,
    singular_values: Array1<T>,
    n_seen: usize,
}

impl<T: Scalar> IncrementalPca<T> {
    pub fn new(n_features: usize, k: usize) -> Self {
        Self {
            k,
            mean: Array1::zeros(n_features),
            components: Array2::zeros((0, n_features)),
            singular_values: Array1::zeros(0),
            n_seen: 0,
        }
    }

    /// Folds one batch (`b×d`, `b ≥ k`) into the model.
    ///
    /// The SVD is taken of the stack of the previous components scaled by
    /// their singular values, the batch centered on its own mean, and a
    /// single row correcting for the shift between the old and new means.
    pub fn partial_fit(&mut self, batch: &Array2<T>) -> Result<()> {
        let (b, d) = batch.dim();
        if d != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), actual: d });
        }
        if b < self.k {
            return Err(Error::invalid(format!("batch of {b} rows is smaller than k = {}", self.k)));
        }
        let batch_mean = batch.sum_axis(ndarray::Axis(0)) / T::from_usize_lossy(b);
        let n_old = T::from_usize_lossy(self.n_seen);
        let n_batch = T::from_usize_lossy(b);
        let n_total = n_old + n_batch;
        let new_mean = (&self.mean * n_old + &batch_mean * n_batch) / n_total;

        let centered = batch - &batch_mean.view().insert_axis(ndarray::Axis(0));
        let stack = if self.n_seen == 0 {
            centered
        } else {
            let prev = self.components.nrows();
            let mut stack = Array2::<T>::zeros((prev + b + 1, d));
            for i in 0..prev {
                let row = self.components.row(i).mapv(|x| x * self.singular_values[i]);
                stack.row_mut(i).assign(&row);
            }
            stack.slice_mut(s![prev..prev + b, ..]).assign(&centered);
            let corr = ((n_old * n_batch) / n_total).sqrt();
            let shift = (&self.mean - &batch_mean).mapv(|x| x * corr);
            stack.row_mut(prev + b).assign(&shift);
            stack
        };

        let dec = svd(stack.view());
        let keep = self.k.min(dec.s.len());
        let mut components = dec.vt.slice(s![..keep, ..]).to_owned();
        flip_signs(&mut components);
        self.components = components;
        self.singular_values = dec.s.slice(s![..keep]).to_owned();
        self.mean = new_mean;
        self.n_seen += b;
        Ok(())
    }

    pub fn finish(self) -> PcaModel<T> {
        PcaModel {
            mean: self.mean,
            components: self.components,
            singular_values: self.singular_values,
            n_samples_seen: self.n_seen,
        }
    }
}

/// Makes the largest-magnitude entry of each row non-negative.
fn flip_signs<T: Scalar>(components: &mut Array2<T>) {
    for mut row in components.rows_mut() {
        let mut best = T::zero();
        for &x in row.iter() {
            if x.abs() > best.abs() {
                best = x;
            }
        }
        if best < T::zero() {
            row.mapv_inplace(|x| -x);
        }
    }
}

/// Row ranges of the batches: chunks of `batch` rows, with a short final
/// chunk (fewer than `k` rows) merged into its predecessor.
pub fn batch_ranges(n_rows: usize, batch: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n_rows)
        .step_by(batch.max(1))
        .map(|start| start..(start + batch).min(n_rows))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() < k) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("has predecessor").end = last.end;
    }
    out
}

fn check_fit_args(n_rows: usize, n_cols: usize, k: usize, batch: usize) -> Result<()> {
    if k == 0 || batch == 0 {
        return Err(Error::invalid("k and batch must be positive"));
    }
    if k > n_cols {
        return Err(Error::invalid(format!("k = {k} exceeds the {n_cols} features")));
    }
    if k > batch {
        return Err(Error::invalid(format!("k = {k} exceeds the batch size {batch}")));
    }
    if n_rows < k {
        return Err(Error::invalid(format!("{n_rows} rows are fewer than k = {k}")));
    }
    Ok(())
}

/// Incremental PCA over the rows of a sparse binary matrix. Only one batch is
/// densified at a time.
pub fn incremental_pca_fit<T: Scalar>(matrix: &SparseBinaryMatrix, k: usize, batch: usize) -> Result<PcaModel<T>> {
    check_fit_args(matrix.n_rows(), matrix.n_cols(), k, batch)?;
    let mut ipca = IncrementalPca::new(matrix.n_cols(), k);
    for range in batch_ranges(matrix.n_rows(), batch, k) {
        ipca.partial_fit(&matrix.dense_rows(range))?;
    }
    Ok(ipca.finish())
}

/// Incremental PCA over the rows of a dense matrix.
pub fn incremental_pca_fit_dense<T: Scalar>(data: &Array2<T>, k: usize, batch: usize) -> Result<PcaModel<T>> {
    let (n, d) = data.dim();
    check_fit_args(n, d, k, batch)?;
    let mut ipca = IncrementalPca::new(d, k);
    for range in batch_ranges(n, batch, k) {
        ipca.partial_fit(&data.slice(s![range, ..]).to_owned())?;
    }
    Ok(ipca.finish())
}
