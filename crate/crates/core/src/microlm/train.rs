//! Training loop, perplexity evaluation and embedding extraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::tensorio::{NamedTensor, TensorStore};

use super::{GradAccumulator, Model, ModelConfig, TimedCorpus};

/// Options shared by the pretraining and fine-tuning drivers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub batch_windows: usize,
    pub window_len: usize,
    /// Decoupled weight decay, applied by the Adam pretraining driver only.
    #[serde(default)]
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 400,
            lr: 0.5,
            batch_windows: 6,
            window_len: 64,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Adam state over the full parameter layout, used by the pretraining
/// driver. Language fine-tuning stays on plain gradient descent so the
/// accumulated gradients live near the shared base point.
struct AdamState<S: Scalar> {
    m: TensorStore<S>,
    v: TensorStore<S>,
    t: usize,
}

impl<S: Scalar> AdamState<S> {
    fn new(cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            m: zeros_like(cfg)?,
            v: zeros_like(cfg)?,
            t: 0,
        })
    }

    fn update(
        &mut self,
        params: &mut TensorStore<S>,
        grads: &TensorStore<S>,
        lr: f64,
        weight_decay: f64,
    ) {
        self.t += 1;
        let b1 = S::of(0.9);
        let b2 = S::of(0.999);
        let eps = S::of(1e-8);
        let corr1 = S::one() - b1.powi(self.t as i32);
        let corr2 = S::one() - b2.powi(self.t as i32);
        let decay = S::of(lr * weight_decay);
        let lr = S::of(lr);
        for g in grads.iter() {
            let m = self.m.get_mut(g.name()).expect("layout");
            let v = self.v.get_mut(g.name()).expect("layout");
            let p = params.get_mut(g.name()).expect("layout");
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (S::one() - b1) * gv;
                *vv = b2 * *vv + (S::one() - b2) * gv * gv;
                let mhat = *mv / corr1;
                let vhat = *vv / corr2;
                *pv = *pv - decay * *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Token-level negative log-likelihoods for next-token prediction:
/// `logits` row t scores the token at `targets[t]`. Computed in f64.
pub fn token_nlls<S: Scalar>(logits: &Mat<S>, targets: &[u32]) -> Vec<f64> {
    targets
        .iter()
        .enumerate()
        .map(|(t, &y)| {
            let row = logits.row(t);
            let maxv = row
                .iter()
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v.to_f64()));
            let lse = maxv
                + row
                    .iter()
                    .map(|&v| (v.to_f64() - maxv).exp())
                    .sum::<f64>()
                    .ln();
            lse - row[y as usize].to_f64()
        })
        .collect()
}

/// exp(mean NLL); the perplexity of a predicted sequence.
pub fn perplexity_from_nlls(nlls: &[f64]) -> f64 {
    let mean = nlls.iter().sum::<f64>() / nlls.len() as f64;
    mean.exp()
}

impl<S: Scalar> Model<S> {
    /// One plain gradient-descent step over a batch of token windows.
    ///
    /// Returns the mean cross-entropy over all next-token predictions in the
    /// batch. The accumulator receives |grad| per parameter and its step
    /// count is bumped even when `lr` is zero. A non-finite loss aborts
    /// without touching the parameters.
    pub fn train_step(
        &mut self,
        windows: &[&[u32]],
        lr: f64,
        acc: &mut GradAccumulator,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_gradients(windows)?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("training loss diverged: {loss}")));
        }
        let lr_s = S::of(lr);
        for g in grads.iter() {
            acc.add_abs(g.name(), g.data());
            let p = self.params.get_mut(g.name()).expect("layout");
            for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                *w = *w - lr_s * gv;
            }
        }
        acc.bump();
        Ok(loss)
    }

    /// Mean next-token cross-entropy over the batch and its gradient with
    /// respect to every parameter.
    pub fn loss_and_gradients(&self, windows: &[&[u32]]) -> Result<(f64, TensorStore<S>)> {
        let n_pred: usize = windows.iter().map(|w| w.len().saturating_sub(1)).sum();
        if n_pred == 0 {
            return Err(Error::config("train_step needs at least one prediction"));
        }
        let inv_n = S::of(1.0 / n_pred as f64);

        // Per-window gradients computed independently, then reduced in window
        // order so the result does not depend on thread count.
        let partials: Vec<Result<(TensorStore<S>, f64)>> = windows
            .par_iter()
            .map(|window| {
                let cache = self.forward_cached(window)?;
                let t_pred = window.len() - 1;
                let targets = &window[1..];
                let nll: f64 = token_nlls(&cache.logits, targets).iter().sum();

                let vocab = self.config().vocab_size;
                let mut dlogits = Mat::zeros(window.len(), vocab);
                for t in 0..t_pred {
                    let lrow = cache.logits.row(t);
                    let maxv = lrow.iter().cloned().fold(S::neg_infinity(), S::max);
                    let mut denom = S::zero();
                    let drow = dlogits.row_mut(t);
                    for (o, &v) in drow.iter_mut().zip(lrow) {
                        *o = (v - maxv).exp();
                        denom += *o;
                    }
                    for o in drow.iter_mut() {
                        *o = *o / denom * inv_n;
                    }
                    drow[targets[t] as usize] -= inv_n;
                }

                let mut grads = zeros_like(self.config())?;
                self.backward(&cache, &dlogits, &mut grads);
                Ok((grads, nll))
            })
            .collect();

        let mut grads = zeros_like(self.config())?;
        let mut nll_sum = 0.0;
        for partial in partials {
            let (g, nll) = partial?;
            nll_sum += nll;
            for t in g.iter() {
                let dst = grads.get_mut(t.name()).expect("layout");
                for (o, &v) in dst.data_mut().iter_mut().zip(t.data()) {
                    *o += v;
                }
            }
        }
        Ok((nll_sum / n_pred as f64, grads))
    }

    /// exp(mean token NLL) over all next-token predictions of the corpus,
    /// evaluated in chained windows of `ctx_len` with one-token overlap so
    /// every token after the first is predicted exactly once.
    pub fn perplexity(&self, corpus: &TimedCorpus, ctx_len: usize) -> Result<f64> {
        if corpus.len() < 2 {
            return Err(Error::config("perplexity needs a corpus of length >= 2"));
        }
        let ctx = ctx_len.min(self.config().context_len).max(2);
        let tokens = corpus.tokens();
        let mut windows = Vec::new();
        let mut start = 0;
        while start + 1 < tokens.len() {
            let end = (start + ctx).min(tokens.len());
            windows.push(&tokens[start..end]);
            start = end - 1;
        }
        let nll_sum: Result<f64> = windows
            .par_iter()
            .map(|w| {
                let (_, logits) = self.forward(w)?;
                Ok(token_nlls(&logits, &w[1..]).iter().sum::<f64>())
            })
            .try_reduce(|| 0.0, |a, b| Ok(a + b));
        Ok((nll_sum? / (tokens.len() - 1) as f64).exp())
    }

    /// Final-layer embedding of every token, with onset/sentence metadata.
    ///
    /// Context windows start at sentence boundaries: each sentence is run
    /// with as many preceding complete sentences as fit in `ctx_len`
    /// (measured at the sentence end). Sentences longer than `ctx_len` fall
    /// back to flat chunks.
    pub fn extract_embeddings(
        &self,
        corpus: &TimedCorpus,
        ctx_len: usize,
    ) -> Result<EmbeddingTable<S>> {
        if corpus.is_empty() {
            return Err(Error::config("cannot extract embeddings of empty corpus"));
        }
        let ctx = ctx_len.min(self.config().context_len).max(1);
        let ranges = corpus.sentence_ranges();
        let starts: Vec<usize> = ranges.iter().map(|&(s, _)| s).collect();

        // (window_start, emit_start, emit_end)
        let mut chunks: Vec<(usize, usize, usize)> = Vec::new();
        for &(s0, s_end) in &ranges {
            if s_end - s0 <= ctx {
                let w0 = starts
                    .iter()
                    .copied()
                    .filter(|&w| w <= s0 && s_end - w <= ctx)
                    .min()
                    .unwrap_or(s0);
                chunks.push((w0, s0, s_end));
            } else {
                let mut e0 = s0;
                while e0 < s_end {
                    let e1 = (e0 + ctx).min(s_end);
                    let w0 = if e0 == s0 { s0 } else { e1 - ctx };
                    chunks.push((w0, e0, e1));
                    e0 = e1;
                }
            }
        }

        let tokens = corpus.tokens();
        let dim = self.config().dim;
        let rows: Result<Vec<Vec<S>>> = chunks
            .par_iter()
            .map(|&(w0, e0, e1)| {
                let (hidden, _) = self.forward(&tokens[w0..e1])?;
                let mut out = Vec::with_capacity((e1 - e0) * dim);
                for t in e0..e1 {
                    out.extend_from_slice(hidden.row(t - w0));
                }
                Ok(out)
            })
            .collect();
        let mut data = Vec::with_capacity(corpus.len() * dim);
        for chunk in rows? {
            data.extend_from_slice(&chunk);
        }

        Ok(EmbeddingTable {
            vectors: Mat::from_vec(corpus.len(), dim, data),
            onsets: corpus.onsets().to_vec(),
            token_index: (0..corpus.len()).collect(),
            sentence_id: corpus.sentence_ids(),
        })
    }
}

fn zeros_like<S: Scalar>(cfg: &ModelConfig) -> Result<TensorStore<S>> {
    let mut store = TensorStore::new();
    for (name, shape) in cfg.layout() {
        store.insert(NamedTensor::zeros(name, shape)?)?;
    }
    Ok(store)
}

/// Per-token final-layer vectors plus token metadata.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<S: Scalar> {
    pub vectors: Mat<S>,
    pub onsets: Vec<f64>,
    pub token_index: Vec<usize>,
    pub sentence_id: Vec<usize>,
}

fn sample_windows<'a>(
    tokens: &'a [u32],
    window_len: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a [u32]> {
    let w = window_len.min(tokens.len()).max(2);
    let max_start = tokens.len() - w;
    (0..count)
        .map(|_| {
            let start = if max_start == 0 {
                0
            } else {
                rng.gen_range(0..=(max_start as u64)) as usize
            };
            &tokens[start..start + w]
        })
        .collect()
}

/// Trains a fresh model on a mix of corpora with Adam, cycling languages
/// across batch slots. Returns the model and the per-step loss curve.
pub fn pretrain<S: Scalar>(
    cfg: &ModelConfig,
    corpora: &[&TimedCorpus],
    opts: &TrainOptions,
) -> Result<(Model<S>, Vec<f64>)> {
    if corpora.is_empty() {
        return Err(Error::config("pretrain needs at least one corpus"));
    }
    let mut model = Model::init(cfg.clone())?;
    let mut adam = AdamState::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut losses = Vec::with_capacity(opts.steps);
    let mut slot = 0usize;
    for _ in 0..opts.steps {
        let mut windows = Vec::with_capacity(opts.batch_windows);
        for _ in 0..opts.batch_windows {
            let corpus = corpora[slot % corpora.len()];
            slot += 1;
            windows.extend(sample_windows(corpus.tokens(), opts.window_len, 1, &mut rng));
        }
        let (loss, grads) = model.loss_and_gradients(&windows)?;
        if !loss.is_finite() {
            return Err(Error::numeric(format!("pretraining loss diverged: {loss}")));
        }
        // linear decay over the last 40% of training settles the weights, so
        // downstream importance scores see converged values
        let step = losses.len();
        let decay_from = opts.steps * 3 / 5;
        let lr = if step >= decay_from && opts.steps > decay_from {
            opts.lr * (opts.steps - step) as f64 / (opts.steps - decay_from) as f64
        } else {
            opts.lr
        };
        adam.update(&mut model.params, &grads, lr, opts.weight_decay);
        losses.push(loss);
    }
    Ok((model, losses))
}

/// Fine-tunes a copy of `base` on one corpus, accumulating per-step absolute
/// gradients. The base model is untouched; the accumulator's step count
/// equals `opts.steps`.
pub fn finetune_language<S: Scalar>(
    base: &Model<S>,
    corpus: &TimedCorpus,
    opts: &TrainOptions,
) -> Result<(Model<S>, GradAccumulator)> {
    let mut model = base.clone();
    let mut acc = GradAccumulator::zeros(base.config())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.steps {
        let windows = sample_windows(
            corpus.tokens(),
            opts.window_len,
            opts.batch_windows,
            &mut rng,
        );
        model.train_step(&windows, opts.lr, &mut acc)?;
    }
    Ok((model, acc))
}
