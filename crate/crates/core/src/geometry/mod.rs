//! Embedding geometry and probing: subword-to-word pooling, PCA projection,
//! silhouette scoring across language clusters, and the frozen-embedding MLP
//! probe.

mod probe;

pub use probe::{probe_train_eval, ProbeConfig, ProbeMetrics};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigh, matmul_a_bt, Mat};
use crate::scalar::Scalar;

/// Row vectors with a class/language label per row and an optional word
/// grouping key.
#[derive(Debug, Clone)]
pub struct LabeledEmbeddings<S: Scalar> {
    pub vectors: Mat<S>,
    pub labels: Vec<usize>,
    pub word_idx: Option<Vec<usize>>,
}

impl<S: Scalar> LabeledEmbeddings<S> {
    pub fn new(vectors: Mat<S>, labels: Vec<usize>) -> Result<Self> {
        if vectors.rows != labels.len() {
            return Err(Error::shape(format!(
                "{} vectors vs {} labels",
                vectors.rows,
                labels.len()
            )));
        }
        Ok(Self {
            vectors,
            labels,
            word_idx: None,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Mean-pools token vectors sharing a word index. Returns one vector per
/// distinct index together with the sorted index list.
pub fn pool_words<S: Scalar>(
    vectors: &Mat<S>,
    word_idx: &[usize],
) -> Result<(Mat<S>, Vec<usize>)> {
    if vectors.rows != word_idx.len() {
        return Err(Error::shape(format!(
            "{} vectors vs {} word indices",
            vectors.rows,
            word_idx.len()
        )));
    }
    if vectors.rows == 0 {
        return Err(Error::config("pooling over empty input"));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &w) in word_idx.iter().enumerate() {
        groups.entry(w).or_default().push(row);
    }
    let mut out = Mat::zeros(groups.len(), vectors.cols);
    let mut ids = Vec::with_capacity(groups.len());
    for (gi, (&id, rows)) in groups.iter().enumerate() {
        let inv = S::of(1.0 / rows.len() as f64);
        for &r in rows {
            for (o, &v) in out.row_mut(gi).iter_mut().zip(vectors.row(r)) {
                *o += v * inv;
            }
        }
        ids.push(id);
    }
    Ok((out, ids))
}

/// Word index per token with words delimited by a separator token; separator
/// tokens form their own single-token groups.
pub fn word_indices_from_separator(tokens: &[u32], separator: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut idx = 0usize;
    let mut in_word = false;
    for &t in tokens {
        if t == separator {
            if in_word {
                idx += 1;
            }
            out.push(idx);
            idx += 1;
            in_word = false;
        } else {
            if !in_word {
                in_word = true;
            }
            out.push(idx);
        }
    }
    out
}

/// Fitted principal components of mean-centered data.
#[derive(Debug, Clone)]
pub struct PcaModel<S: Scalar> {
    pub mean: Vec<S>,
    /// k x d, one component per row, descending eigenvalue order.
    pub components: Mat<S>,
    pub eigenvalues: Vec<S>,
}

impl<S: Scalar> PcaModel<S> {
    /// Fits the top `k` components. Component signs are fixed by making the
    /// largest-magnitude loading positive (first index on ties).
    pub fn fit(x: &Mat<S>, k: usize) -> Result<Self> {
        let (n, d) = (x.rows, x.cols);
        if k == 0 || k > d.min(n) {
            return Err(Error::config(format!(
                "k = {k} out of range for {n} x {d} data"
            )));
        }
        let mut mean = vec![S::zero(); d];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        let nf = S::of(n as f64);
        for m in mean.iter_mut() {
            *m = *m / nf;
        }
        let mut centered = x.clone();
        for r in 0..n {
            for (v, &m) in centered.row_mut(r).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let mut cov = crate::linalg::matmul_at_b(&centered, &centered);
        let denom = S::of((n.max(2) - 1) as f64);
        for v in cov.data.iter_mut() {
            *v = *v / denom;
        }
        if cov.data.iter().all(|&v| v == S::zero()) {
            return Err(Error::numeric("zero-variance data in pca"));
        }
        let (vals, vecs) = jacobi_eigh(&cov, 100);
        let mut components = Mat::zeros(k, d);
        for c in 0..k {
            // column c of vecs is the c-th eigenvector
            let mut comp: Vec<S> = (0..d).map(|r| vecs.at(r, c)).collect();
            let mut best = 0usize;
            for (i, v) in comp.iter().enumerate() {
                if v.abs() > comp[best].abs() {
                    best = i;
                }
            }
            if comp[best] < S::zero() {
                for v in comp.iter_mut() {
                    *v = -*v;
                }
            }
            components.row_mut(c).copy_from_slice(&comp);
        }
        Ok(Self {
            mean,
            components,
            eigenvalues: vals[..k].to_vec(),
        })
    }

    /// Projects rows onto the fitted components: (X - mean) · Vᵀ.
    pub fn project(&self, x: &Mat<S>) -> Mat<S> {
        let mut centered = x.clone();
        for r in 0..centered.rows {
            for (v, &m) in centered.row_mut(r).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        matmul_a_bt(&centered, &self.components)
    }

    /// Maps projections back to the original space.
    pub fn reconstruct(&self, proj: &Mat<S>) -> Mat<S> {
        let mut out = crate::linalg::matmul(proj, &self.components);
        for r in 0..out.rows {
            for (v, &m) in out.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        out
    }
}

/// Projects `x` onto its top-k principal components.
pub fn pca_project<S: Scalar>(x: &Mat<S>, k: usize) -> Result<Mat<S>> {
    Ok(PcaModel::fit(x, k)?.project(x))
}

/// Mean silhouette over all points with Euclidean distances. Singleton
/// clusters contribute 0, as do points with a == b == 0.
pub fn silhouette<S: Scalar>(x: &Mat<S>, labels: &[usize]) -> Result<f64> {
    let n = x.rows;
    if n != labels.len() {
        return Err(Error::shape(format!(
            "{} points vs {} labels",
            n,
            labels.len()
        )));
    }
    if n < 3 {
        return Err(Error::config("silhouette needs at least 3 points"));
    }
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = labels.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    if classes.len() < 2 {
        return Err(Error::config("silhouette needs at least 2 clusters"));
    }
    let counts: BTreeMap<usize, usize> = classes
        .iter()
        .map(|&c| (c, labels.iter().filter(|&&l| l == c).count()))
        .collect();

    let mut total = 0.0f64;
    for i in 0..n {
        // mean distance to every cluster
        let mut sums: BTreeMap<usize, f64> = classes.iter().map(|&c| (c, 0.0)).collect();
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut d2 = S::zero();
            for (&a, &b) in x.row(i).iter().zip(x.row(j)) {
                let d = a - b;
                d2 += d * d;
            }
            *sums.get_mut(&labels[j]).unwrap() += d2.to_f64().sqrt();
        }
        let own = labels[i];
        let own_count = counts[&own];
        if own_count <= 1 {
            continue; // singleton contributes 0
        }
        let a = sums[&own] / (own_count - 1) as f64;
        let b = classes
            .iter()
            .filter(|&&c| c != own)
            .map(|&c| sums[&c] / counts[&c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Sentence-level embeddings labeled by token-count quantile bins.
///
/// Sentence vectors are token means; bin edges sit at the `j/bins` quantiles
/// of the sorted counts, so equal counts always share a label and every
/// sentence gets exactly one.
pub fn sentence_length_task<S: Scalar>(
    vectors: &Mat<S>,
    sentence_id: &[usize],
    bins: usize,
) -> Result<LabeledEmbeddings<S>> {
    if vectors.rows == 0 {
        return Err(Error::config("empty corpus"));
    }
    if vectors.rows != sentence_id.len() {
        return Err(Error::shape(format!(
            "{} vectors vs {} sentence ids",
            vectors.rows,
            sentence_id.len()
        )));
    }
    if bins == 0 {
        return Err(Error::config("need at least one bin"));
    }
    let (pooled, ids) = pool_words(vectors, sentence_id)?;
    let counts: Vec<usize> = ids
        .iter()
        .map(|&sid| sentence_id.iter().filter(|&&s| s == sid).count())
        .collect();

    let mut sorted = counts.clone();
    sorted.sort_unstable();
    let n = sorted.len();
    let edges: Vec<usize> = (1..bins).map(|j| sorted[j * n / bins]).collect();
    let labels: Vec<usize> = counts
        .iter()
        .map(|&c| edges.iter().filter(|&&e| c >= e).count())
        .collect();
    LabeledEmbeddings::new(pooled, labels)
}
