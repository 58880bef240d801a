//! Voxel-wise encoding: TR alignment, hemodynamic lag, ridge regression with
//! run-wise cross-validation.
//!
//! Each fold holds one run out, fits `W = argmin ||Y - XW||^2 + lambda||W||^2`
//! on the rest and scores the held-out run with per-voxel Pearson r. Feature
//! columns are standardized with training-fold statistics only. The
//! regularizer is picked per fold by leave-one-run-out selection inside the
//! training runs; by default one lambda is shared by all voxels, optionally
//! one per voxel. Reductions run in a fixed order, so results do not depend
//! on thread count.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, matmul, matmul_at_b, pinv_solve_psd, Mat};
use crate::scalar::Scalar;

/// Per-run TR-aligned feature matrices plus timing metadata.
#[derive(Debug, Clone)]
pub struct EmbeddingSeries<S: Scalar> {
    pub runs: Vec<Mat<S>>,
    pub tr_seconds: f64,
    pub lag_seconds: f64,
}

/// Per-run BOLD matrices (TRs x voxels), z-scored per voxel per run.
#[derive(Debug, Clone)]
pub struct BoldSeries<S: Scalar> {
    pub runs: Vec<Mat<S>>,
}

/// Z-scores each column of each run in place. Constant columns become
/// all-zero and are reported back by index.
pub fn zscore_runs<S: Scalar>(runs: &mut [Mat<S>]) -> Vec<(usize, usize)> {
    let mut flagged = Vec::new();
    for (ri, run) in runs.iter_mut().enumerate() {
        let n = run.rows;
        if n == 0 {
            continue;
        }
        let nf = S::of(n as f64);
        for c in 0..run.cols {
            let mut mean = S::zero();
            for r in 0..n {
                mean += run.at(r, c);
            }
            mean = mean / nf;
            let mut var = S::zero();
            for r in 0..n {
                let d = run.at(r, c) - mean;
                var += d * d;
            }
            var = var / nf;
            if var == S::zero() {
                for r in 0..n {
                    *run.at_mut(r, c) = S::zero();
                }
                flagged.push((ri, c));
            } else {
                let inv = S::one() / var.sqrt();
                for r in 0..n {
                    *run.at_mut(r, c) = (run.at(r, c) - mean) * inv;
                }
            }
        }
    }
    flagged
}

/// Averages token vectors into TR bins: row `t` is the mean of vectors with
/// onset in `[t*tr, (t+1)*tr)`; empty bins stay zero.
pub fn align_to_tr<S: Scalar>(
    vectors: &Mat<S>,
    onsets: &[f64],
    tr: f64,
    n_trs: usize,
) -> Result<Mat<S>> {
    if vectors.rows != onsets.len() {
        return Err(Error::shape(format!(
            "{} vectors vs {} onsets",
            vectors.rows,
            onsets.len()
        )));
    }
    if tr <= 0.0 {
        return Err(Error::config("tr must be positive"));
    }
    let mut out = Mat::zeros(n_trs, vectors.cols);
    let mut counts = vec![0usize; n_trs];
    for (i, &onset) in onsets.iter().enumerate() {
        if onset < 0.0 {
            return Err(Error::config(format!("negative onset {onset}")));
        }
        let bin = (onset / tr).floor() as usize;
        if bin >= n_trs {
            return Err(Error::config(format!(
                "onset {onset} beyond the covered window of {n_trs} TRs"
            )));
        }
        counts[bin] += 1;
        for (o, &v) in out.row_mut(bin).iter_mut().zip(vectors.row(i)) {
            *o += v;
        }
    }
    for (t, &c) in counts.iter().enumerate() {
        if c > 1 {
            let inv = S::of(1.0 / c as f64);
            for v in out.row_mut(t) {
                *v *= inv;
            }
        }
    }
    Ok(out)
}

/// TR shift implied by the lag. Non-multiples round to the nearest TR with a
/// warning.
pub fn lag_shift(lag_seconds: f64, tr: f64) -> Result<usize> {
    if lag_seconds < 0.0 {
        return Err(Error::config("lag must be nonnegative"));
    }
    if tr <= 0.0 {
        return Err(Error::config("tr must be positive"));
    }
    let exact = lag_seconds / tr;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 {
        warn!("lag {lag_seconds}s is not a multiple of TR {tr}s; rounding to {rounded} TRs");
    }
    Ok(rounded as usize)
}

/// Pairs features at TR `t` with BOLD at `t + lag/tr`: drops the first
/// `shift` BOLD rows and the last `shift` feature rows.
pub fn apply_lag<S: Scalar>(
    features: &Mat<S>,
    bold: &Mat<S>,
    lag_seconds: f64,
    tr: f64,
) -> Result<(Mat<S>, Mat<S>)> {
    if features.rows != bold.rows {
        return Err(Error::shape(format!(
            "feature rows {} vs bold rows {}",
            features.rows, bold.rows
        )));
    }
    let shift = lag_shift(lag_seconds, tr)?;
    if shift >= features.rows {
        return Err(Error::config(format!(
            "lag of {shift} TRs leaves no aligned rows out of {}",
            features.rows
        )));
    }
    let keep = features.rows - shift;
    let mut x = Mat::zeros(keep, features.cols);
    let mut y = Mat::zeros(keep, bold.cols);
    for k in 0..keep {
        x.row_mut(k).copy_from_slice(features.row(k));
        y.row_mut(k).copy_from_slice(bold.row(k + shift));
    }
    Ok((x, y))
}

/// Ridge solution via the normal equations and Cholesky; falls back to a
/// minimum-norm pseudo-solution when the system is singular (rank-deficient
/// X at lambda 0).
pub fn ridge_fit<S: Scalar>(x: &Mat<S>, y: &Mat<S>, lambda: f64) -> Result<Mat<S>> {
    if x.rows != y.rows {
        return Err(Error::shape(format!(
            "X has {} rows, Y has {}",
            x.rows, y.rows
        )));
    }
    if lambda < 0.0 {
        return Err(Error::config(format!("lambda must be >= 0, got {lambda}")));
    }
    let mut gram = matmul_at_b(x, x);
    for i in 0..gram.rows {
        *gram.at_mut(i, i) += S::of(lambda);
    }
    let xty = matmul_at_b(x, y);
    solve_gram(&gram, &xty)
}

fn solve_gram<S: Scalar>(gram: &Mat<S>, xty: &Mat<S>) -> Result<Mat<S>> {
    match cholesky(gram) {
        Ok(l) => Ok(cholesky_solve(&l, xty)),
        Err(_) => {
            warn!("normal equations singular; using minimum-norm pseudo-solution");
            Ok(pinv_solve_psd(gram, xty))
        }
    }
}

/// Sample Pearson correlation. Errors on zero variance.
pub fn pearson<S: Scalar>(a: &[S], b: &[S]) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::config("pearson needs at least 3 samples"));
    }
    let n = S::of(a.len() as f64);
    let ma = a.iter().copied().sum::<S>() / n;
    let mb = b.iter().copied().sum::<S>() / n;
    let mut cov = S::zero();
    let mut va = S::zero();
    let mut vb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == S::zero() || vb == S::zero() {
        return Err(Error::numeric("zero variance in pearson input"));
    }
    Ok(cov / (va * vb).sqrt())
}

/// How the ridge penalty is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// One lambda shared by every voxel, per fold.
    #[default]
    Global,
    /// An independent lambda per voxel, per fold.
    PerVoxel,
}

/// Cross-validated encoding output.
#[derive(Debug, Clone)]
pub struct EncodingResult<S: Scalar> {
    /// folds x voxels
    pub r_per_fold: Mat<S>,
    pub r_mean: Vec<S>,
    /// lambda used per (fold, voxel); constant across voxels in global mode.
    pub lambda_per_fold: Mat<S>,
    /// voxels flagged degenerate (constant predicted or observed series) in
    /// at least one fold.
    pub degenerate: Vec<bool>,
}

/// Per-run sufficient statistics for ridge on standardized features.
struct RunStats<S: Scalar> {
    n: usize,
    xtx: Mat<S>,
    xty: Mat<S>,
    xsum: Vec<S>,
}

fn run_stats<S: Scalar>(x: &Mat<S>, y: &Mat<S>) -> RunStats<S> {
    let d = x.cols;
    let mut xsum = vec![S::zero(); d];
    for r in 0..x.rows {
        for (s, &v) in xsum.iter_mut().zip(x.row(r)) {
            *s += v;
        }
    }
    RunStats {
        n: x.rows,
        xtx: matmul_at_b(x, x),
        xty: matmul_at_b(x, y),
        xsum,
    }
}

/// Column means and inverse sds pooled over the given runs. Zero-variance
/// columns get scale 0 so they drop out of the regression.
fn pooled_standardizer<S: Scalar>(stats: &[&RunStats<S>]) -> (Vec<S>, Vec<S>) {
    let d = stats[0].xtx.rows;
    let n: usize = stats.iter().map(|s| s.n).sum();
    let nf = S::of(n as f64);
    let mut mean = vec![S::zero(); d];
    for s in stats {
        for (m, &v) in mean.iter_mut().zip(&s.xsum) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m = *m / nf;
    }
    let mut inv_sd = vec![S::zero(); d];
    for j in 0..d {
        let sq: S = stats.iter().map(|s| s.xtx.at(j, j)).sum();
        let var = sq / nf - mean[j] * mean[j];
        inv_sd[j] = if var > S::zero() {
            S::one() / var.sqrt()
        } else {
            S::zero()
        };
    }
    (mean, inv_sd)
}

/// Gram and cross matrices of the standardized training features,
/// assembled from per-run sufficient statistics.
fn standardized_normal_eqs<S: Scalar>(
    stats: &[&RunStats<S>],
    mean: &[S],
    inv_sd: &[S],
) -> (Mat<S>, Mat<S>) {
    let d = mean.len();
    let v = stats[0].xty.cols;
    let n: usize = stats.iter().map(|s| s.n).sum();
    let nf = S::of(n as f64);
    let mut gram = Mat::zeros(d, d);
    for s in stats {
        for i in 0..d {
            for j in 0..d {
                *gram.at_mut(i, j) += s.xtx.at(i, j);
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            let centered = gram.at(i, j) - nf * mean[i] * mean[j];
            *gram.at_mut(i, j) = centered * inv_sd[i] * inv_sd[j];
        }
    }
    // BOLD is z-scored per run, so its pooled column sums vanish and
    // centering X against Y needs no mean-of-Y term.
    let mut xty = Mat::zeros(d, v);
    for s in stats {
        for i in 0..d {
            for (o, &val) in xty.row_mut(i).iter_mut().zip(s.xty.row(i)) {
                *o += val;
            }
        }
    }
    for i in 0..d {
        for o in xty.row_mut(i) {
            *o *= inv_sd[i];
        }
    }
    (gram, xty)
}

fn standardize<S: Scalar>(x: &Mat<S>, mean: &[S], inv_sd: &[S]) -> Mat<S> {
    let mut out = x.clone();
    for r in 0..out.rows {
        for ((v, &m), &s) in out.row_mut(r).iter_mut().zip(mean).zip(inv_sd) {
            *v = (*v - m) * s;
        }
    }
    out
}

/// Per-voxel correlations of `x_std · w` against `y`, with degenerate voxels
/// recorded as r = 0.
fn fold_correlations<S: Scalar>(pred: &Mat<S>, y: &Mat<S>) -> (Vec<S>, Vec<bool>) {
    let v = y.cols;
    let mut rs = vec![S::zero(); v];
    let mut degenerate = vec![false; v];
    let pt = pred.transpose();
    let yt = y.transpose();
    for c in 0..v {
        match pearson(pt.row(c), yt.row(c)) {
            Ok(r) => rs[c] = r,
            Err(_) => degenerate[c] = true,
        }
    }
    (rs, degenerate)
}

/// Runs the full run-wise cross-validation.
///
/// `x_runs[i]` and `y_runs[i]` must already be lag-aligned pairs. Every run
/// is held out once; the penalty for each fold comes from leave-one-run-out
/// selection within its training runs (mean r over voxels and inner folds).
pub fn cross_validated_encode<S: Scalar>(
    x_runs: &[Mat<S>],
    y_runs: &[Mat<S>],
    lambdas: &[f64],
    mode: LambdaMode,
) -> Result<EncodingResult<S>> {
    if x_runs.len() < 2 {
        return Err(Error::config("cross-validation needs at least 2 runs"));
    }
    if x_runs.len() != y_runs.len() {
        return Err(Error::shape(format!(
            "{} feature runs vs {} bold runs",
            x_runs.len(),
            y_runs.len()
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::config("empty lambda grid"));
    }
    let d = x_runs[0].cols;
    let v = y_runs[0].cols;
    for (i, (x, y)) in x_runs.iter().zip(y_runs).enumerate() {
        if x.cols != d || y.cols != v {
            return Err(Error::shape(format!("run {i} has inconsistent dims")));
        }
        if x.rows != y.rows {
            return Err(Error::shape(format!("run {i}: X/Y row mismatch")));
        }
        if x.rows < 3 {
            return Err(Error::config(format!(
                "run {i} has {} TRs; need at least 3",
                x.rows
            )));
        }
    }

    let stats: Vec<RunStats<S>> = x_runs
        .iter()
        .zip(y_runs)
        .map(|(x, y)| run_stats(x, y))
        .collect();
    let n_runs = x_runs.len();

    let folds: Vec<(Vec<S>, Vec<bool>, Vec<S>)> = (0..n_runs)
        .into_par_iter()
        .map(|held| {
            let train_ids: Vec<usize> = (0..n_runs).filter(|&r| r != held).collect();
            let lambda_for_voxel =
                select_lambdas(x_runs, y_runs, &stats, &train_ids, lambdas, mode, v);

            // fit on all training runs at the chosen penalties
            let train_refs: Vec<&RunStats<S>> = train_ids.iter().map(|&r| &stats[r]).collect();
            let (mean, inv_sd) = pooled_standardizer(&train_refs);
            let (gram, xty) = standardized_normal_eqs(&train_refs, &mean, &inv_sd);
            let x_test = standardize(&x_runs[held], &mean, &inv_sd);

            let mut pred = Mat::zeros(x_test.rows, v);
            let mut lambda_used = vec![S::zero(); v];
            for lambda in distinct(&lambda_for_voxel) {
                let mut g = gram.clone();
                for i in 0..d {
                    *g.at_mut(i, i) += S::of(lambda);
                }
                let w = solve_gram(&g, &xty).expect("pseudo-solve is total");
                let full = matmul(&x_test, &w);
                for (c, &lv) in lambda_for_voxel.iter().enumerate() {
                    if lv == lambda {
                        lambda_used[c] = S::of(lambda);
                        for r in 0..pred.rows {
                            *pred.at_mut(r, c) = full.at(r, c);
                        }
                    }
                }
            }
            let (rs, degenerate) = fold_correlations(&pred, &y_runs[held]);
            (rs, degenerate, lambda_used)
        })
        .collect();

    let mut r_per_fold = Mat::zeros(n_runs, v);
    let mut lambda_per_fold = Mat::zeros(n_runs, v);
    let mut degenerate = vec![false; v];
    for (f, (rs, degen, lams)) in folds.into_iter().enumerate() {
        r_per_fold.row_mut(f).copy_from_slice(&rs);
        lambda_per_fold.row_mut(f).copy_from_slice(&lams);
        for (dst, d) in degenerate.iter_mut().zip(degen) {
            *dst |= d;
        }
    }
    let nf = S::of(n_runs as f64);
    let r_mean: Vec<S> = (0..v)
        .map(|c| {
            let mut s = S::zero();
            for f in 0..n_runs {
                s += r_per_fold.at(f, c);
            }
            s / nf
        })
        .collect();
    Ok(EncodingResult {
        r_per_fold,
        r_mean,
        lambda_per_fold,
        degenerate,
    })
}

fn distinct(lambdas: &[f64]) -> Vec<f64> {
    let mut seen: Vec<f64> = Vec::new();
    for &l in lambdas {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    seen
}

/// Leave-one-run-out penalty selection inside the training runs: for each
/// inner fold, fit on the remaining runs at every grid value and score the
/// inner run per voxel. Returns the chosen lambda per voxel (constant in
/// global mode); ties keep the earlier grid entry. With fewer than two
/// training runs no inner fold exists and the middle grid entry is used.
fn select_lambdas<S: Scalar>(
    x_runs: &[Mat<S>],
    y_runs: &[Mat<S>],
    stats: &[RunStats<S>],
    train_ids: &[usize],
    lambdas: &[f64],
    mode: LambdaMode,
    n_voxels: usize,
) -> Vec<f64> {
    if lambdas.len() == 1 || train_ids.len() < 2 {
        let lam = lambdas[lambdas.len() / 2];
        return vec![lam; n_voxels];
    }
    let d = stats[train_ids[0]].xtx.rows;
    // summed r per (lambda, voxel) over inner folds; degenerate voxels add 0
    let mut score = Mat::<f64>::zeros(lambdas.len(), n_voxels);
    for &inner in train_ids {
        let fit_refs: Vec<&RunStats<S>> = train_ids
            .iter()
            .filter(|&&r| r != inner)
            .map(|&r| &stats[r])
            .collect();
        let (mean, inv_sd) = pooled_standardizer(&fit_refs);
        let (gram, xty) = standardized_normal_eqs(&fit_refs, &mean, &inv_sd);
        let x_inner = standardize(&x_runs[inner], &mean, &inv_sd);
        for (li, &lambda) in lambdas.iter().enumerate() {
            let mut g = gram.clone();
            for i in 0..d {
                *g.at_mut(i, i) += S::of(lambda);
            }
            let w = solve_gram(&g, &xty).expect("pseudo-solve is total");
            let pred = matmul(&x_inner, &w);
            let (rs, _) = fold_correlations(&pred, &y_runs[inner]);
            for (c, &r) in rs.iter().enumerate() {
                *score.at_mut(li, c) += r.to_f64();
            }
        }
    }

    match mode {
        LambdaMode::Global => {
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for li in 0..lambdas.len() {
                let mean_r: f64 = score.row(li).iter().sum::<f64>() / n_voxels as f64;
                if mean_r > best_score {
                    best_score = mean_r;
                    best = li;
                }
            }
            vec![lambdas[best]; n_voxels]
        }
        LambdaMode::PerVoxel => (0..n_voxels)
            .map(|c| {
                let mut best = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for li in 0..lambdas.len() {
                    let s = score.at(li, c);
                    if s > best_score {
                        best_score = s;
                        best = li;
                    }
                }
                lambdas[best]
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn align_means_tokens_per_window() {
        let vectors = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0]);
        let aligned = align_to_tr(&vectors, &[0.1, 0.9, 2.5], 1.0, 4).unwrap();
        assert_eq!(aligned.row(0), &[2.0, 3.0]); // mean of two tokens
        assert_eq!(aligned.row(1), &[0.0, 0.0]); // empty window
        assert_eq!(aligned.row(2), &[10.0, 20.0]); // single token
        assert_eq!(aligned.row(3), &[0.0, 0.0]);
    }

    #[test]
    fn align_rejects_negative_and_overflowing_onsets() {
        let vectors = Mat::from_vec(1, 1, vec![1.0]);
        assert!(align_to_tr(&vectors, &[-0.5], 1.0, 2).is_err());
        assert!(align_to_tr(&vectors, &[2.5], 1.0, 2).is_err());
    }

    #[test]
    fn lag_pairs_rows_correctly() {
        let x = Mat::from_vec(10, 1, (0..10).map(|i| i as f64).collect());
        let y = Mat::from_vec(10, 1, (0..10).map(|i| 100.0 + i as f64).collect());
        let (xa, ya) = apply_lag(&x, &y, 4.0, 2.0).unwrap();
        assert_eq!(xa.rows, 8);
        assert_eq!(ya.rows, 8);
        // pair k: features k with bold k+2
        assert_eq!(xa.at(0, 0), 0.0);
        assert_eq!(ya.at(0, 0), 102.0);
        assert_eq!(xa.at(7, 0), 7.0);
        assert_eq!(ya.at(7, 0), 109.0);
    }

    #[test]
    fn zero_lag_is_identity() {
        let x = Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let y = x.clone();
        let (xa, ya) = apply_lag(&x, &y, 0.0, 2.0).unwrap();
        assert_eq!(xa.data, x.data);
        assert_eq!(ya.data, y.data);
    }

    #[test]
    fn ridge_interpolates_at_zero_lambda() {
        let x = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let y = Mat::from_vec(2, 1, vec![3.0, -1.0]);
        let w = ridge_fit(&x, &y, 0.0).unwrap();
        assert_relative_eq!(w.at(0, 0), 3.0, epsilon = 1e-12);
        assert_relative_eq!(w.at(1, 0), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn heavy_lambda_shrinks_weights() {
        let x = Mat::from_vec(4, 2, vec![1.0, 0.5, -0.5, 1.0, 0.25, -1.0, 1.0, 0.75]);
        let y = Mat::from_vec(4, 1, vec![1.0, -1.0, 0.5, 0.25]);
        let w = ridge_fit(&x, &y, 1e6).unwrap();
        let norm: f64 = w.data.iter().map(|&v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm {norm}");

        let w_small = ridge_fit(&x, &y, 0.1).unwrap();
        let w_big = ridge_fit(&x, &y, 10.0).unwrap();
        let n_small: f64 = w_small.data.iter().map(|&v| v * v).sum();
        let n_big: f64 = w_big.data.iter().map(|&v| v * v).sum();
        assert!(n_big < n_small, "shrinkage must be monotone");
    }

    #[test]
    fn ridge_rejects_negative_lambda() {
        let x = Mat::from_vec(2, 1, vec![1.0, 2.0]);
        let y = Mat::from_vec(2, 1, vec![1.0, 2.0]);
        assert!(ridge_fit(&x, &y, -0.5).is_err());
    }

    #[test]
    fn pearson_known_values() {
        assert_relative_eq!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        // r = 9/sqrt(84)
        assert_relative_eq!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(),
            9.0 / 84f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_affine_invariance() {
        let a = [0.3, -1.2, 2.5, 0.0, 1.1];
        let b = [1.0, 0.4, -0.2, 2.2, 0.9];
        let r0 = pearson(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|&v| 3.5 * v + 2.0).collect();
        let r1 = pearson(&a2, &b).unwrap();
        assert_relative_eq!(r0, r1, epsilon = 1e-12);
    }
}
