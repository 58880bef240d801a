//! Two-layer MLP probe on frozen embeddings: Linear -> ReLU -> Dropout ->
//! Linear, trained with Adam, epoch picked by development-set accuracy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;

use super::LabeledEmbeddings;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            dropout: 0.1,
            epochs: 20,
            lr: 1e-3,
            batch: 64,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("probe hidden/epochs/batch must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Test-set metrics of the epoch with the best development accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub best_epoch: usize,
    pub dev_accuracy: f64,
    /// All test predictions collapsed onto a single class.
    pub degenerate_predictions: bool,
}

struct Mlp<S: Scalar> {
    w1: Mat<S>,
    b1: Vec<S>,
    w2: Mat<S>,
    b2: Vec<S>,
}

struct Adam<S: Scalar> {
    m: Vec<S>,
    v: Vec<S>,
    t: usize,
}

impl<S: Scalar> Adam<S> {
    fn new(n: usize) -> Self {
        Self {
            m: vec![S::zero(); n],
            v: vec![S::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [S], grads: &[S], offset: usize, lr: f64) {
        let b1 = S::of(0.9);
        let b2 = S::of(0.999);
        let eps = S::of(1e-8);
        let t = self.t as i32;
        let corr1 = S::one() - b1.powi(t);
        let corr2 = S::one() - b2.powi(t);
        let lr = S::of(lr);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let mi = &mut self.m[offset + i];
            let vi = &mut self.v[offset + i];
            *mi = b1 * *mi + (S::one() - b1) * g;
            *vi = b2 * *vi + (S::one() - b2) * g * g;
            let mhat = *mi / corr1;
            let vhat = *vi / corr2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

fn forward_hidden<S: Scalar>(mlp: &Mlp<S>, x: &[S]) -> (Vec<S>, Vec<S>) {
    let h = mlp.b1.len();
    let mut z1 = mlp.b1.clone();
    for (k, &xv) in x.iter().enumerate() {
        let wrow = mlp.w1.row(k);
        for (z, &w) in z1.iter_mut().zip(wrow) {
            *z += xv * w;
        }
    }
    let a1: Vec<S> = z1.iter().map(|&z| z.max(S::zero())).collect();
    let _ = h;
    (z1, a1)
}

fn logits_from_hidden<S: Scalar>(mlp: &Mlp<S>, d1: &[S]) -> Vec<S> {
    let mut z2 = mlp.b2.clone();
    for (k, &hv) in d1.iter().enumerate() {
        let wrow = mlp.w2.row(k);
        for (z, &w) in z2.iter_mut().zip(wrow) {
            *z += hv * w;
        }
    }
    z2
}

fn predict<S: Scalar>(mlp: &Mlp<S>, x: &[S]) -> usize {
    let (_, a1) = forward_hidden(mlp, x);
    let z2 = logits_from_hidden(mlp, &a1);
    argmax(&z2)
}

fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn accuracy<S: Scalar>(mlp: &Mlp<S>, data: &LabeledEmbeddings<S>) -> f64 {
    let correct = (0..data.vectors.rows)
        .filter(|&r| predict(mlp, data.vectors.row(r)) == data.labels[r])
        .count();
    correct as f64 / data.vectors.rows.max(1) as f64
}

fn test_metrics<S: Scalar>(
    mlp: &Mlp<S>,
    data: &LabeledEmbeddings<S>,
    n_classes: usize,
) -> (f64, f64, f64, f64, bool) {
    let n = data.vectors.rows;
    let mut preds = Vec::with_capacity(n);
    for r in 0..n {
        preds.push(predict(mlp, data.vectors.row(r)));
    }
    let acc = preds
        .iter()
        .zip(&data.labels)
        .filter(|&(p, y)| p == y)
        .count() as f64
        / n.max(1) as f64;

    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fnn = vec![0usize; n_classes];
    for (&p, &y) in preds.iter().zip(&data.labels) {
        if p == y {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fnn[y] += 1;
        }
    }
    // macro-average over classes present in the test labels
    let present: Vec<usize> = (0..n_classes)
        .filter(|c| data.labels.contains(c))
        .collect();
    let mut psum = 0.0;
    let mut rsum = 0.0;
    let mut fsum = 0.0;
    for &c in &present {
        let prec = if tp[c] + fp[c] > 0 {
            tp[c] as f64 / (tp[c] + fp[c]) as f64
        } else {
            0.0
        };
        let rec = if tp[c] + fnn[c] > 0 {
            tp[c] as f64 / (tp[c] + fnn[c]) as f64
        } else {
            0.0
        };
        let f1 = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        psum += prec;
        rsum += rec;
        fsum += f1;
    }
    let k = present.len().max(1) as f64;
    let degenerate = n > 1 && preds.iter().all(|&p| p == preds[0]);
    (acc, psum / k, rsum / k, fsum / k, degenerate)
}

/// Trains the probe on frozen embeddings and reports test metrics from the
/// epoch with the best development accuracy (earliest epoch on ties).
pub fn probe_train_eval<S: Scalar>(
    train: &LabeledEmbeddings<S>,
    dev: &LabeledEmbeddings<S>,
    test: &LabeledEmbeddings<S>,
    cfg: &ProbeConfig,
) -> Result<ProbeMetrics> {
    cfg.validate()?;
    let d = train.vectors.cols;
    if dev.vectors.cols != d || test.vectors.cols != d {
        return Err(Error::shape("probe splits differ in embedding dim"));
    }
    if train.vectors.rows == 0 || dev.vectors.rows == 0 || test.vectors.rows == 0 {
        return Err(Error::config("probe splits must be nonempty"));
    }
    let n_classes = train
        .n_classes()
        .max(dev.n_classes())
        .max(test.n_classes());
    if n_classes < 2 {
        return Err(Error::config("probe needs at least 2 classes"));
    }
    for c in 0..n_classes {
        let seen = train.labels.contains(&c);
        let needed = dev.labels.contains(&c) || test.labels.contains(&c) || seen;
        if needed && !seen {
            return Err(Error::config(format!(
                "class {c} absent from the train split"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.hidden;
    let scale1 = S::of(1.0 / (d as f64).sqrt());
    let scale2 = S::of(1.0 / (h as f64).sqrt());
    let mut mlp = Mlp {
        w1: Mat::from_vec(
            d,
            h,
            (0..d * h)
                .map(|_| S::of(StandardNormal.sample(&mut rng)) * scale1)
                .collect(),
        ),
        b1: vec![S::zero(); h],
        w2: Mat::from_vec(
            h,
            n_classes,
            (0..h * n_classes)
                .map(|_| S::of(StandardNormal.sample(&mut rng)) * scale2)
                .collect(),
        ),
        b2: vec![S::zero(); n_classes],
    };
    let n_params = d * h + h + h * n_classes + n_classes;
    let mut adam = Adam::new(n_params);
    let keep = 1.0 - cfg.dropout;

    let mut order: Vec<usize> = (0..train.vectors.rows).collect();
    let mut best: Option<ProbeMetrics> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let bsz = chunk.len();
            let inv_b = S::of(1.0 / bsz as f64);
            let mut gw1 = vec![S::zero(); d * h];
            let mut gb1 = vec![S::zero(); h];
            let mut gw2 = vec![S::zero(); h * n_classes];
            let mut gb2 = vec![S::zero(); n_classes];
            for &row in chunk {
                let x = train.vectors.row(row);
                let y = train.labels[row];
                let (z1, a1) = forward_hidden(&mlp, x);
                // inverted dropout on the hidden activations
                let mut d1 = a1.clone();
                let mut mask = vec![S::zero(); h];
                if cfg.dropout > 0.0 {
                    for (m, v) in mask.iter_mut().zip(d1.iter_mut()) {
                        if rng.gen::<f64>() < keep {
                            *m = S::of(1.0 / keep);
                            *v = *v * *m;
                        } else {
                            *v = S::zero();
                        }
                    }
                } else {
                    for m in mask.iter_mut() {
                        *m = S::one();
                    }
                }
                let z2 = logits_from_hidden(&mlp, &d1);
                // softmax cross-entropy gradient
                let maxv = z2.iter().cloned().fold(S::neg_infinity(), S::max);
                let mut probs: Vec<S> = z2.iter().map(|&z| (z - maxv).exp()).collect();
                let denom: S = probs.iter().copied().sum();
                for p in probs.iter_mut() {
                    *p = *p / denom;
                }
                let mut dz2 = probs;
                dz2[y] -= S::one();
                for v in dz2.iter_mut() {
                    *v *= inv_b;
                }
                for (k, &hv) in d1.iter().enumerate() {
                    for (c, &g) in dz2.iter().enumerate() {
                        gw2[k * n_classes + c] += hv * g;
                    }
                }
                for (o, &g) in gb2.iter_mut().zip(&dz2) {
                    *o += g;
                }
                let mut dd1 = vec![S::zero(); h];
                for (k, dd) in dd1.iter_mut().enumerate() {
                    let wrow = mlp.w2.row(k);
                    for (c, &g) in dz2.iter().enumerate() {
                        *dd += wrow[c] * g;
                    }
                }
                // back through dropout and relu
                let mut dz1 = dd1;
                for ((dz, &m), &z) in dz1.iter_mut().zip(&mask).zip(&z1) {
                    *dz = *dz * m * if z > S::zero() { S::one() } else { S::zero() };
                }
                for (k, &xv) in x.iter().enumerate() {
                    for (j, &g) in dz1.iter().enumerate() {
                        gw1[k * h + j] += xv * g;
                    }
                }
                for (o, &g) in gb1.iter_mut().zip(&dz1) {
                    *o += g;
                }
            }
            adam.t += 1;
            let mut off = 0;
            adam.step(&mut mlp.w1.data, &gw1, off, cfg.lr);
            off += d * h;
            adam.step(&mut mlp.b1, &gb1, off, cfg.lr);
            off += h;
            adam.step(&mut mlp.w2.data, &gw2, off, cfg.lr);
            off += h * n_classes;
            adam.step(&mut mlp.b2, &gb2, off, cfg.lr);
        }

        let dev_acc = accuracy(&mlp, dev);
        let improves = best
            .as_ref()
            .map(|b| dev_acc > b.dev_accuracy)
            .unwrap_or(true);
        if improves {
            let (acc, prec, rec, f1, degenerate) = test_metrics(&mlp, test, n_classes);
            best = Some(ProbeMetrics {
                accuracy: acc,
                macro_precision: prec,
                macro_recall: rec,
                macro_f1: f1,
                best_epoch: epoch,
                dev_accuracy: dev_acc,
                degenerate_predictions: degenerate,
            });
        }
    }
    Ok(best.expect("at least one epoch ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn blobs(
        n_per: usize,
        centers: &[(f64, f64)],
        noise: f64,
        seed: u64,
    ) -> LabeledEmbeddings<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_per * centers.len();
        let mut m = Mat::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for (c, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..n_per {
                let r = c * n_per + i;
                let nx: f64 = StandardNormal.sample(&mut rng);
                let ny: f64 = StandardNormal.sample(&mut rng);
                *m.at_mut(r, 0) = cx + noise * nx;
                *m.at_mut(r, 1) = cy + noise * ny;
                labels.push(c);
            }
        }
        LabeledEmbeddings::new(m, labels).unwrap()
    }

    #[test]
    fn separable_blobs_reach_perfect_accuracy() {
        // enough samples for the fixed lr/epoch budget to converge
        let centers = [(0.0, 0.0), (4.0, 4.0)];
        let train = blobs(400, &centers, 0.4, 1);
        let dev = blobs(60, &centers, 0.4, 2);
        let test = blobs(60, &centers, 0.4, 3);
        let cfg = ProbeConfig {
            seed: 7,
            ..Default::default()
        };
        let m = probe_train_eval(&train, &dev, &test, &cfg).unwrap();
        assert_eq!(m.accuracy, 1.0, "metrics: {m:?}");
        assert!(!m.degenerate_predictions);
        assert!(m.macro_f1 > 0.99);
    }

    #[test]
    fn shuffled_labels_sit_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut train = blobs(120, &[(0.0, 0.0), (0.3, 0.1), (0.1, 0.4)], 1.0, 4);
        let dev = blobs(40, &[(0.0, 0.0), (0.3, 0.1), (0.1, 0.4)], 1.0, 5);
        let test = blobs(80, &[(0.0, 0.0), (0.3, 0.1), (0.1, 0.4)], 1.0, 6);
        train.labels.shuffle(&mut rng);
        let cfg = ProbeConfig {
            seed: 11,
            ..Default::default()
        };
        let m = probe_train_eval(&train, &dev, &test, &cfg).unwrap();
        assert!(
            (m.accuracy - 1.0 / 3.0).abs() < 0.1,
            "chance-level check: {}",
            m.accuracy
        );
    }

    #[test]
    fn same_seed_is_deterministic() {
        let centers = [(0.0, 0.0), (2.0, 2.0)];
        let train = blobs(50, &centers, 1.0, 7);
        let dev = blobs(20, &centers, 1.0, 8);
        let test = blobs(20, &centers, 1.0, 9);
        let cfg = ProbeConfig {
            seed: 3,
            epochs: 5,
            ..Default::default()
        };
        let m1 = probe_train_eval(&train, &dev, &test, &cfg).unwrap();
        let m2 = probe_train_eval(&train, &dev, &test, &cfg).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn missing_train_class_is_rejected() {
        let train = blobs(10, &[(0.0, 0.0)], 0.5, 1); // only class 0
        let dev = blobs(10, &[(0.0, 0.0), (3.0, 3.0)], 0.5, 2);
        let test = blobs(10, &[(0.0, 0.0), (3.0, 3.0)], 0.5, 3);
        let cfg = ProbeConfig::default();
        assert!(probe_train_eval(&train, &dev, &test, &cfg).is_err());
    }
}
