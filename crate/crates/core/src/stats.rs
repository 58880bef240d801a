//! Group-level statistics: Fisher transform, t-tests, FDR correction,
//! conjunction masks, min-max normalization with rectification, the language
//! processing index, cross-model averaging and ROI summaries.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// atanh(r), clamping |r| >= 1 to +-(1 - 1e-7) with a warning.
pub fn fisher_z<S: Scalar>(r: S) -> S {
    let max = S::of(1.0 - 1e-7);
    let clamped = if r >= S::one() || r <= -S::one() {
        warn!("fisher transform clamping r = {r}");
        if r > S::zero() {
            max
        } else {
            -max
        }
    } else {
        r
    };
    clamped.atanh()
}

/// Outcome of a one-sample or paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    /// Zero-variance input; t/p follow the stated conventions rather than
    /// the Student distribution.
    pub degenerate: bool,
}

/// Two-sided p-value of a Student-t statistic via the regularized incomplete
/// beta function.
pub fn student_t_two_sided_p(t: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let v = df as f64;
    let x = v / (v + t * t);
    reg_incomplete_beta(v / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos log-gamma.
fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 7] = [
        76.180091729471457,
        -86.505320329416776,
        24.014098240830911,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
        2.5066282746310005,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for g in &G[..6] {
        y += 1.0;
        ser += g / y;
    }
    -tmp + (G[6] * ser / x).ln()
}

fn ttest_from_diffs(diffs: &[f64]) -> Result<TTest> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::config("t-test needs at least 2 observations"));
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        // zero-variance conventions: equal inputs give t = 0, p = 1;
        // a constant nonzero shift is reported as infinitely significant
        return Ok(if mean == 0.0 {
            TTest {
                t: 0.0,
                p: 1.0,
                df,
                degenerate: true,
            }
        } else {
            TTest {
                t: if mean > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                p: 0.0,
                df,
                degenerate: true,
            }
        });
    }
    let t = mean / (var / n as f64).sqrt();
    Ok(TTest {
        t,
        p: student_t_two_sided_p(t, df),
        df,
        degenerate: false,
    })
}

/// Paired t-test on a - b.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "paired t-test on {} vs {} observations",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    ttest_from_diffs(&diffs)
}

/// One-sample t-test of x against mu0.
pub fn one_sample_ttest(x: &[f64], mu0: f64) -> Result<TTest> {
    let diffs: Vec<f64> = x.iter().map(|&v| v - mu0).collect();
    ttest_from_diffs(&diffs)
}

/// FDR flavor: plain step-up or the harmonic-corrected variant for arbitrary
/// dependence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrMethod {
    #[default]
    Bh,
    By,
}

/// Step-up FDR correction. Returns adjusted q-values and significance flags
/// at `q_level`; flags are monotone in p.
pub fn fdr_correct(p: &[f64], q_level: f64, method: FdrMethod) -> Result<(Vec<f64>, Vec<bool>)> {
    if p.is_empty() {
        return Err(Error::config("fdr on empty p-vector"));
    }
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::config("p-values must lie in [0, 1]"));
    }
    let m = p.len();
    let c_m = match method {
        FdrMethod::Bh => 1.0,
        FdrMethod::By => (1..=m).map(|i| 1.0 / i as f64).sum(),
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));

    // q_(i) = min_{j >= i} m * c(m) * p_(j) / j, clipped at 1
    let mut q_sorted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        let candidate = (m as f64) * c_m * p[idx] / rank as f64;
        running = running.min(candidate);
        q_sorted[rank - 1] = running.min(1.0);
    }
    let mut q = vec![0.0; m];
    let mut sig = vec![false; m];
    for (rank0, &idx) in order.iter().enumerate() {
        q[idx] = q_sorted[rank0];
        sig[idx] = q_sorted[rank0] <= q_level;
    }
    Ok((q, sig))
}

/// Per-voxel test results with FDR-adjusted significance.
#[derive(Debug, Clone)]
pub struct StatMap {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub sig: Vec<bool>,
    pub df: usize,
    pub degenerate: Vec<bool>,
}

impl StatMap {
    /// Runs `test` per voxel and applies FDR at `q_level`.
    pub fn from_tests(tests: &[TTest], q_level: f64, method: FdrMethod) -> Result<Self> {
        if tests.is_empty() {
            return Err(Error::config("empty stat map"));
        }
        let p: Vec<f64> = tests.iter().map(|t| t.p).collect();
        let (q, sig) = fdr_correct(&p, q_level, method)?;
        Ok(StatMap {
            t: tests.iter().map(|t| t.t).collect(),
            p,
            q,
            sig,
            df: tests[0].df,
            degenerate: tests.iter().map(|t| t.degenerate).collect(),
        })
    }
}

/// Logical AND across per-language significance masks.
pub fn conjunction_mask(sig_maps: &[&[bool]]) -> Result<Vec<bool>> {
    let first = sig_maps
        .first()
        .ok_or_else(|| Error::config("conjunction of zero maps"))?;
    let n = first.len();
    if sig_maps.iter().any(|m| m.len() != n) {
        return Err(Error::shape("conjunction maps differ in length"));
    }
    Ok((0..n).map(|i| sig_maps.iter().all(|m| m[i])).collect())
}

/// Rectifies negative values to zero, then min-max scales to [0, 1].
/// Errors when the rectified map is constant.
pub fn minmax_rectify(t_map: &[f64]) -> Result<Vec<f64>> {
    if t_map.is_empty() {
        return Err(Error::config("empty t-map"));
    }
    let rectified: Vec<f64> = t_map.iter().map(|&v| v.max(0.0)).collect();
    let lo = rectified.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rectified.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::numeric("t-map is constant after rectification"));
    }
    Ok(rectified.iter().map(|&v| (v - lo) / (hi - lo)).collect())
}

/// Voxel-wise contrast of a target-language t-map against the mean of the
/// other two, defined only on significant voxels.
#[derive(Debug, Clone)]
pub struct LpiMap {
    pub target: String,
    pub epsilon: f64,
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
}

/// LPI = (T_t - mean(others)) / (T_t + mean(others) + eps) on masked voxels.
/// Inputs must already be min-max normalized and rectified.
pub fn lpi(
    target: impl Into<String>,
    t_target: &[f64],
    t_others: (&[f64], &[f64]),
    epsilon: f64,
    sig_mask: &[bool],
) -> Result<LpiMap> {
    if epsilon <= 0.0 {
        return Err(Error::config("epsilon must be positive"));
    }
    let n = t_target.len();
    if t_others.0.len() != n || t_others.1.len() != n || sig_mask.len() != n {
        return Err(Error::shape("lpi inputs differ in length"));
    }
    let mut values = vec![0.0; n];
    for i in 0..n {
        if !sig_mask[i] {
            continue;
        }
        let others = 0.5 * (t_others.0[i] + t_others.1[i]);
        values[i] = (t_target[i] - others) / (t_target[i] + others + epsilon);
    }
    Ok(LpiMap {
        target: target.into(),
        epsilon,
        values,
        defined: sig_mask.to_vec(),
    })
}

/// Voxel-wise mean over maps where the voxel is defined; undefined where no
/// map defines it.
pub fn cross_model_average(maps: &[LpiMap]) -> Result<LpiMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::config("cross-model average of zero maps"))?;
    let n = first.values.len();
    if maps
        .iter()
        .any(|m| m.values.len() != n || m.target != first.target)
    {
        return Err(Error::shape(
            "cross-model maps must share voxel space and target",
        ));
    }
    let mut values = vec![0.0; n];
    let mut defined = vec![false; n];
    for i in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for m in maps {
            if m.defined[i] {
                sum += m.values[i];
                count += 1;
            }
        }
        if count > 0 {
            values[i] = sum / count as f64;
            defined[i] = true;
        }
    }
    Ok(LpiMap {
        target: first.target.clone(),
        epsilon: first.epsilon,
        values,
        defined,
    })
}

/// Mean of `r_map` over each named ROI.
pub fn roi_summary(
    r_map: &[f64],
    rois: &BTreeMap<String, Vec<usize>>,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (name, idxs) in rois {
        if idxs.is_empty() {
            return Err(Error::config(format!("ROI '{name}' is empty")));
        }
        let mut sum = 0.0;
        for &i in idxs {
            if i >= r_map.len() {
                return Err(Error::config(format!(
                    "ROI '{name}' indexes voxel {i} beyond map of {}",
                    r_map.len()
                )));
            }
            sum += r_map[i];
        }
        out.insert(name.clone(), sum / idxs.len() as f64);
    }
    Ok(out)
}
