//! Synthetic world: three toy languages with shared and private structure,
//! timed corpora from a first-order Markov process, synthetic multi-run BOLD
//! with planted ground truth, and the brute-force oracles the tests compare
//! against.
//!
//! Each language emits printable ASCII tokens. Content tokens come from the
//! language's transition matrix; a space ends a word, a period plus space
//! ends a sentence, so word and sentence structure is part of the chain
//! itself. All three languages share one vocabulary core and draw their
//! shared-to-shared transitions from a common seed; private vocabularies and
//! the remaining transitions are language-specific.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoding::{zscore_runs, BoldSeries, EmbeddingSeries};
use crate::error::{Error, Result};
use crate::linalg::{matmul_at_b, Mat};
use crate::microlm::TimedCorpus;
use crate::scalar::Scalar;

pub const SPACE_TOKEN: u32 = b' ' as u32;
pub const PERIOD_TOKEN: u32 = b'.' as u32;

/// Transition-structure parameters of one language.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BigramBias {
    /// Seed of the shared-to-shared transition block (same across languages).
    pub common_seed: u64,
    /// Seed of every language-specific transition block.
    pub lang_seed: u64,
    /// Exponential sharpness of transition weights; larger = spikier bigrams.
    pub sharpness: f64,
    /// Fraction of content-successor mass routed to the private vocabulary.
    pub private_affinity: f64,
    /// How much of the shared-to-shared structure is language-specific:
    /// 0 = identical across languages, 1 = fully language-specific.
    pub shared_blend: f64,
}

/// Word/sentence length process, expressed as per-token stop hazards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceLenDist {
    /// P(content token is followed by a space).
    pub space_hazard: f64,
    /// P(content token is followed by ". ").
    pub period_hazard: f64,
}

/// One synthetic language.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthLanguageSpec {
    pub id: String,
    pub shared_vocab: Vec<u32>,
    pub private_vocab: Vec<u32>,
    pub bigram_bias: BigramBias,
    pub sentence_len_dist: SentenceLenDist,
}

impl SynthLanguageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.shared_vocab.is_empty() || self.private_vocab.is_empty() {
            return Err(Error::config("language vocabularies must be nonempty"));
        }
        for &t in self.shared_vocab.iter().chain(&self.private_vocab) {
            if t >= 256 {
                return Err(Error::config(format!("token {t} outside byte vocab")));
            }
            if t == SPACE_TOKEN || t == PERIOD_TOKEN {
                return Err(Error::config("space/period are reserved tokens"));
            }
        }
        let b = &self.bigram_bias;
        if b.sharpness < 0.0
            || !(0.0..=1.0).contains(&b.private_affinity)
            || !(0.0..=1.0).contains(&b.shared_blend)
        {
            return Err(Error::config("invalid bigram bias parameters"));
        }
        let s = &self.sentence_len_dist;
        if s.space_hazard <= 0.0 || s.period_hazard <= 0.0 || s.space_hazard + s.period_hazard >= 1.0
        {
            return Err(Error::config(
                "hazards must be positive with space+period < 1",
            ));
        }
        Ok(())
    }

    /// All states of the language's Markov chain, in fixed order:
    /// shared, private, space, period.
    pub fn states(&self) -> Vec<u32> {
        let mut v = self.shared_vocab.clone();
        v.extend(&self.private_vocab);
        v.push(SPACE_TOKEN);
        v.push(PERIOD_TOKEN);
        v
    }

    /// Row-stochastic transition matrix over [`states`](Self::states).
    /// Deterministic in the spec alone.
    pub fn transition_matrix(&self) -> Result<Mat<f64>> {
        self.validate()?;
        let n_shared = self.shared_vocab.len();
        let n_private = self.private_vocab.len();
        let n_content = n_shared + n_private;
        let n = n_content + 2;
        let space_idx = n_content;
        let period_idx = n_content + 1;

        let mut common = ChaCha8Rng::seed_from_u64(self.bigram_bias.common_seed);
        let mut lang = ChaCha8Rng::seed_from_u64(self.bigram_bias.lang_seed);
        let sharp = self.bigram_bias.sharpness;
        let blend = self.bigram_bias.shared_blend;
        let weight = |rng: &mut ChaCha8Rng| -> f64 { (sharp * rng.gen::<f64>()).exp() };

        let mut p = Mat::<f64>::zeros(n, n);
        let content_mass =
            1.0 - self.sentence_len_dist.space_hazard - self.sentence_len_dist.period_hazard;
        // content rows: successor mass split between shared and private pools
        for i in 0..n_content {
            let mut shared_w = vec![0.0; n_shared];
            let mut private_w = vec![0.0; n_private];
            for w in shared_w.iter_mut() {
                // shared->shared structure interpolates between the common
                // backbone and language-specific deviations
                *w = if i < n_shared {
                    let uc: f64 = common.gen();
                    let ul: f64 = lang.gen();
                    (sharp * ((1.0 - blend) * uc + blend * ul)).exp()
                } else {
                    weight(&mut lang)
                };
            }
            for w in private_w.iter_mut() {
                *w = weight(&mut lang);
            }
            let shared_sum: f64 = shared_w.iter().sum();
            let private_sum: f64 = private_w.iter().sum();
            let aff = self.bigram_bias.private_affinity;
            for (j, &w) in shared_w.iter().enumerate() {
                *p.at_mut(i, j) = content_mass * (1.0 - aff) * w / shared_sum;
            }
            for (j, &w) in private_w.iter().enumerate() {
                *p.at_mut(i, n_shared + j) = content_mass * aff * w / private_sum;
            }
            *p.at_mut(i, space_idx) = self.sentence_len_dist.space_hazard;
            *p.at_mut(i, period_idx) = self.sentence_len_dist.period_hazard;
        }
        // space row: start a word
        {
            let mut shared_w: Vec<f64> = (0..n_shared).map(|_| weight(&mut lang)).collect();
            let mut private_w: Vec<f64> = (0..n_private).map(|_| weight(&mut lang)).collect();
            let ssum: f64 = shared_w.iter().sum();
            let psum: f64 = private_w.iter().sum();
            let aff = self.bigram_bias.private_affinity;
            for w in shared_w.iter_mut() {
                *w = (1.0 - aff) * *w / ssum;
            }
            for w in private_w.iter_mut() {
                *w = aff * *w / psum;
            }
            for (j, &w) in shared_w.iter().enumerate() {
                *p.at_mut(space_idx, j) = w;
            }
            for (j, &w) in private_w.iter().enumerate() {
                *p.at_mut(space_idx, n_shared + j) = w;
            }
        }
        // period row: always a space next
        *p.at_mut(period_idx, space_idx) = 1.0;
        Ok(p)
    }

    /// Stationary distribution of the transition matrix by power iteration.
    pub fn stationary(&self, p: &Mat<f64>) -> Vec<f64> {
        let n = p.rows;
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..20_000 {
            let mut next = vec![0.0; n];
            for (i, &w) in pi.iter().enumerate() {
                for (j, nx) in next.iter_mut().enumerate() {
                    *nx += w * p.at(i, j);
                }
            }
            let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-14 {
                break;
            }
        }
        pi
    }
}

/// Samples a timed corpus from the language's Markov chain. Onsets tick at a
/// constant token rate; a sentence break is recorded after each ". " pair.
pub fn gen_corpus(
    spec: &SynthLanguageSpec,
    n_tokens: usize,
    token_rate: f64,
    seed: u64,
) -> Result<TimedCorpus> {
    if n_tokens == 0 {
        return Err(Error::config("corpus must have at least one token"));
    }
    if token_rate <= 0.0 {
        return Err(Error::config("token rate must be positive"));
    }
    let p = spec.transition_matrix()?;
    let states = spec.states();
    let n = states.len();
    let space_idx = n - 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut tokens = Vec::with_capacity(n_tokens);
    let mut breaks = Vec::new();
    let mut state = space_idx; // start as if a word boundary precedes the text
    let mut prev_was_period = false;
    for i in 0..n_tokens {
        let mut dart: f64 = rng.gen();
        let row_offset = state * n;
        let mut next = n - 1;
        for j in 0..n {
            dart -= p.data[row_offset + j];
            if dart <= 0.0 {
                next = j;
                break;
            }
        }
        tokens.push(states[next]);
        if prev_was_period && next == space_idx {
            breaks.push(i + 1); // sentence ends after the ". " pair
        }
        prev_was_period = next == n - 1;
        state = next;
    }
    let onsets: Vec<f64> = (0..n_tokens).map(|i| i as f64 / token_rate).collect();
    let breaks = breaks.into_iter().filter(|&b| b < n_tokens).collect();
    TimedCorpus::new(tokens, onsets, breaks)
}

/// A synthetic participant: which language they hear, the scan geometry, and
/// the planted voxel weights over embedding dimensions.
#[derive(Debug, Clone)]
pub struct SynthSubjectSpec {
    pub language: String,
    pub n_runs: usize,
    pub trs_per_run: usize,
    pub n_voxels: usize,
    pub snr: f64,
    pub ground_truth_w: Mat<f64>,
    pub seed: u64,
}

impl SynthSubjectSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 2 {
            return Err(Error::config("subjects need at least 2 runs"));
        }
        if self.snr <= 0.0 {
            return Err(Error::config("snr must be positive"));
        }
        if self.ground_truth_w.rows != self.n_voxels {
            return Err(Error::shape(format!(
                "ground truth W has {} rows for {} voxels",
                self.ground_truth_w.rows, self.n_voxels
            )));
        }
        Ok(())
    }
}

/// Builds planted voxel weights. Rows `0..n_signal` carry Gaussian weights on
/// `support` (all dims when empty); the remaining voxels are zero rows.
pub fn make_ground_truth(
    n_voxels: usize,
    dim: usize,
    n_signal: usize,
    support: &[usize],
    seed: u64,
) -> Mat<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Mat::zeros(n_voxels, dim);
    let dims: Vec<usize> = if support.is_empty() {
        (0..dim).collect()
    } else {
        support.to_vec()
    };
    for v in 0..n_signal.min(n_voxels) {
        for &j in &dims {
            *w.at_mut(v, j) = StandardNormal.sample(&mut rng);
        }
    }
    w
}

/// Generates per-run BOLD: lag-shifted embeddings times the planted weights
/// plus white Gaussian noise at the requested SNR, then per-run z-scoring.
///
/// BOLD row `t` carries the signal of feature row `t - lag/tr`; rows before
/// the lag hold noise only. Noise sd is per voxel, `sd(signal)/snr`, with
/// sd 1 for silent (zero-weight) voxels.
pub fn gen_bold(subject: &SynthSubjectSpec, embeddings: &EmbeddingSeries<f64>) -> Result<BoldSeries<f64>> {
    subject.validate()?;
    if embeddings.runs.len() != subject.n_runs {
        return Err(Error::shape(format!(
            "{} embedding runs for {} subject runs",
            embeddings.runs.len(),
            subject.n_runs
        )));
    }
    let dim = subject.ground_truth_w.cols;
    for (i, run) in embeddings.runs.iter().enumerate() {
        if run.cols != dim {
            return Err(Error::shape(format!(
                "run {i}: embedding dim {} vs W dim {dim}",
                run.cols
            )));
        }
        if run.rows != subject.trs_per_run {
            return Err(Error::shape(format!(
                "run {i}: {} TRs, expected {}",
                run.rows, subject.trs_per_run
            )));
        }
    }
    let shift = crate::encoding::lag_shift(embeddings.lag_seconds, embeddings.tr_seconds)?;
    let v = subject.n_voxels;

    // signal[t] = W · x[t - shift]
    let mut signal_runs: Vec<Mat<f64>> = Vec::with_capacity(subject.n_runs);
    for run in &embeddings.runs {
        let mut sig = Mat::zeros(run.rows, v);
        for t in shift..run.rows {
            let x = run.row(t - shift);
            for c in 0..v {
                let wrow = subject.ground_truth_w.row(c);
                let mut acc = 0.0;
                for (wi, xi) in wrow.iter().zip(x) {
                    acc += wi * xi;
                }
                *sig.at_mut(t, c) = acc;
            }
        }
        signal_runs.push(sig);
    }

    // per-voxel noise scale from pooled signal sd
    let total_rows: usize = signal_runs.iter().map(|m| m.rows).sum();
    let mut noise_sd = vec![0.0f64; v];
    for c in 0..v {
        let mut mean = 0.0;
        for run in &signal_runs {
            for t in 0..run.rows {
                mean += run.at(t, c);
            }
        }
        mean /= total_rows as f64;
        let mut var = 0.0;
        for run in &signal_runs {
            for t in 0..run.rows {
                let d = run.at(t, c) - mean;
                var += d * d;
            }
        }
        var /= total_rows as f64;
        let sd = var.sqrt();
        noise_sd[c] = if sd > 0.0 { sd / subject.snr } else { 1.0 };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(subject.seed);
    let mut runs = signal_runs;
    for run in runs.iter_mut() {
        for t in 0..run.rows {
            for c in 0..v {
                let z: f64 = StandardNormal.sample(&mut rng);
                *run.at_mut(t, c) += z * noise_sd[c];
            }
        }
    }
    zscore_runs(&mut runs);
    Ok(BoldSeries { runs })
}

/// Picks the embedding dimensions whose distribution differs most across
/// languages: the sum of (a) between-language variance of per-language means
/// over pooled within variance and (b) squared dispersion of per-language
/// temporal sds. Dimension (b) matters because language-specific dynamics
/// show up as variance differences, not only mean shifts. Top `k` by score,
/// ties by index.
pub fn contrastive_dims<S: Scalar>(per_language: &[&Mat<S>], k: usize) -> Result<Vec<usize>> {
    if per_language.len() < 2 {
        return Err(Error::config("need at least two languages to contrast"));
    }
    let dim = per_language[0].cols;
    if per_language.iter().any(|m| m.cols != dim) {
        return Err(Error::shape("embedding dims differ across languages"));
    }
    let n_lang = per_language.len() as f64;
    let mut scores = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut means = Vec::with_capacity(per_language.len());
        let mut sds = Vec::with_capacity(per_language.len());
        for m in per_language {
            let n = m.rows.max(1) as f64;
            let mut mu = 0.0;
            for r in 0..m.rows {
                mu += m.at(r, j).to_f64();
            }
            mu /= n;
            let mut var = 0.0;
            for r in 0..m.rows {
                let d = m.at(r, j).to_f64() - mu;
                var += d * d;
            }
            means.push(mu);
            sds.push((var / n).sqrt());
        }
        let within: f64 = sds.iter().map(|s| s * s).sum::<f64>() / n_lang;
        let grand: f64 = means.iter().sum::<f64>() / n_lang;
        let between: f64 =
            means.iter().map(|&m| (m - grand) * (m - grand)).sum::<f64>() / n_lang;
        let sd_mean: f64 = sds.iter().sum::<f64>() / n_lang;
        let sd_disp: f64 =
            sds.iter().map(|&s| (s - sd_mean) * (s - sd_mean)).sum::<f64>() / n_lang;
        let score = between / (within + 1e-12) + sd_disp / (sd_mean * sd_mean + 1e-12);
        scores.push((score, j));
    }
    scores.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut dims: Vec<usize> = scores.into_iter().take(k.min(dim)).map(|(_, j)| j).collect();
    dims.sort_unstable();
    Ok(dims)
}

/// Dense normal-equations ridge by explicit Gauss-Jordan inversion.
/// This is the independent route the fast solver is checked against.
pub fn oracle_ridge(x: &Mat<f64>, y: &Mat<f64>, lambda: f64) -> Result<Mat<f64>> {
    if x.rows != y.rows {
        return Err(Error::shape("oracle_ridge: row mismatch"));
    }
    let d = x.cols;
    let mut a = matmul_at_b(x, x);
    for i in 0..d {
        *a.at_mut(i, i) += lambda;
    }
    let inv = invert_gauss_jordan(&a)?;
    let xty = matmul_at_b(x, y);
    let mut w = Mat::zeros(d, y.cols);
    for i in 0..d {
        for j in 0..y.cols {
            let mut acc = 0.0;
            for k in 0..d {
                acc += inv.at(i, k) * xty.at(k, j);
            }
            *w.at_mut(i, j) = acc;
        }
    }
    Ok(w)
}

/// Gauss-Jordan inversion with partial pivoting.
pub fn invert_gauss_jordan(a: &Mat<f64>) -> Result<Mat<f64>> {
    let n = a.rows;
    let mut m = a.clone();
    let mut inv = Mat::<f64>::identity(n);
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if m.at(r, col).abs() > m.at(pivot, col).abs() {
                pivot = r;
            }
        }
        if m.at(pivot, col).abs() < 1e-300 {
            return Err(Error::numeric("singular matrix in oracle inversion"));
        }
        if pivot != col {
            for j in 0..n {
                let t = m.at(col, j);
                *m.at_mut(col, j) = m.at(pivot, j);
                *m.at_mut(pivot, j) = t;
                let t = inv.at(col, j);
                *inv.at_mut(col, j) = inv.at(pivot, j);
                *inv.at_mut(pivot, j) = t;
            }
        }
        let p = m.at(col, col);
        for j in 0..n {
            *m.at_mut(col, j) /= p;
            *inv.at_mut(col, j) /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m.at(r, col);
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                let mc = m.at(col, j);
                let ic = inv.at(col, j);
                *m.at_mut(r, j) -= f * mc;
                *inv.at_mut(r, j) -= f * ic;
            }
        }
    }
    Ok(inv)
}

/// 1-based ascending ranks by sort, ties broken by index.
pub fn oracle_rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    let mut ranks = vec![0usize; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lesion::ranks_ascending;
    use approx::assert_relative_eq;

    pub fn small_language(id: &str, lang_seed: u64) -> SynthLanguageSpec {
        SynthLanguageSpec {
            id: id.to_string(),
            shared_vocab: (b'a'..=b'f').map(u32::from).collect(),
            private_vocab: match id {
                "A" => (b'q'..=b's').map(u32::from).collect(),
                "B" => (b'A'..=b'C').map(u32::from).collect(),
                _ => (b'X'..=b'Z').map(u32::from).collect(),
            },
            bigram_bias: BigramBias {
                common_seed: 1000,
                lang_seed,
                sharpness: 3.0,
                private_affinity: 0.45,
                shared_blend: 0.5,
            },
            sentence_len_dist: SentenceLenDist {
                space_hazard: 0.3,
                period_hazard: 0.05,
            },
        }
    }

    #[test]
    fn corpus_is_seeded_and_stays_in_vocab() {
        let spec = small_language("A", 7);
        let c1 = gen_corpus(&spec, 500, 3.0, 42).unwrap();
        let c2 = gen_corpus(&spec, 500, 3.0, 42).unwrap();
        assert_eq!(c1, c2);
        let allowed: Vec<u32> = spec.states();
        assert!(c1.tokens().iter().all(|t| allowed.contains(t)));
        assert!(!c1.sentence_breaks().is_empty());
        // readable text
        assert!(c1.to_text().is_ok());
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let spec = small_language("B", 8);
        let p = spec.transition_matrix().unwrap();
        for r in 0..p.rows {
            let sum: f64 = p.row(r).iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
            assert!(p.row(r).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn empirical_bigrams_converge_to_spec() {
        let spec = small_language("C", 9);
        let p = spec.transition_matrix().unwrap();
        let pi = spec.stationary(&p);
        let states = spec.states();
        let idx_of = |t: u32| states.iter().position(|&s| s == t).unwrap();

        let corpus = gen_corpus(&spec, 100_000, 3.0, 11).unwrap();
        let n = states.len();
        let mut counts = vec![0.0f64; n * n];
        let toks = corpus.tokens();
        for w in toks.windows(2) {
            counts[idx_of(w[0]) * n + idx_of(w[1])] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        let mut tv = 0.0;
        for i in 0..n {
            for j in 0..n {
                let emp = counts[i * n + j] / total;
                let truth = pi[i] * p.at(i, j);
                tv += (emp - truth).abs();
            }
        }
        tv *= 0.5;
        assert!(tv < 0.05, "total variation {tv} too large");
    }

    #[test]
    fn oracle_ridge_closed_forms() {
        // orthonormal X at lambda 0: W = X^T Y
        let x = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let y = Mat::from_vec(2, 2, vec![2.0, 3.0, -1.0, 0.5]);
        let w = oracle_ridge(&x, &y, 0.0).unwrap();
        for (a, b) in w.data.iter().zip(&y.data) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        // identity X: W = Y / (1 + lambda)
        let w = oracle_ridge(&x, &y, 0.5).unwrap();
        for (a, b) in w.data.iter().zip(&y.data) {
            assert_relative_eq!(*a, b / 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_rank_basics() {
        assert_eq!(oracle_rank(&[3.0, 1.0, 2.0]), vec![3, 1, 2]);
        assert_eq!(oracle_rank(&[5.0, 5.0, 5.0]), vec![1, 2, 3]);
    }

    #[test]
    fn oracle_rank_agrees_with_lesion_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let n = rng.gen_range(2..40);
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            assert_eq!(oracle_rank(&v), ranks_ascending(&v));
        }
    }

    #[test]
    fn contrastive_dims_find_planted_separation() {
        // language means differ only in dims 2 and 5
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let make = |shift2: f64, shift5: f64, rng: &mut ChaCha8Rng| {
            let mut m = Mat::<f64>::zeros(200, 8);
            for r in 0..200 {
                for c in 0..8 {
                    let noise: f64 = StandardNormal.sample(rng);
                    *m.at_mut(r, c) = 0.3 * noise;
                }
                *m.at_mut(r, 2) += shift2;
                *m.at_mut(r, 5) += shift5;
            }
            m
        };
        let a = make(2.0, 0.0, &mut rng);
        let b = make(0.0, 2.0, &mut rng);
        let c = make(-2.0, -2.0, &mut rng);
        let dims = contrastive_dims(&[&a, &b, &c], 2).unwrap();
        assert_eq!(dims, vec![2, 5]);
    }

    #[test]
    fn gen_bold_is_seeded_and_zscored() {
        let dim = 4;
        let w = make_ground_truth(6, dim, 4, &[], 5);
        let spec = SynthSubjectSpec {
            language: "A".into(),
            n_runs: 3,
            trs_per_run: 20,
            n_voxels: 6,
            snr: 5.0,
            ground_truth_w: w,
            seed: 77,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let runs: Vec<Mat<f64>> = (0..3)
            .map(|_| {
                let mut m = Mat::zeros(20, dim);
                for v in m.data.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                m
            })
            .collect();
        let emb = EmbeddingSeries {
            runs,
            tr_seconds: 2.0,
            lag_seconds: 4.0,
        };
        let b1 = gen_bold(&spec, &emb).unwrap();
        let b2 = gen_bold(&spec, &emb).unwrap();
        for (r1, r2) in b1.runs.iter().zip(&b2.runs) {
            assert_eq!(r1.data, r2.data);
        }
        // z-scored per voxel per run
        for run in &b1.runs {
            for c in 0..run.cols {
                let n = run.rows as f64;
                let mean: f64 = (0..run.rows).map(|t| run.at(t, c)).sum::<f64>() / n;
                let var: f64 = (0..run.rows)
                    .map(|t| (run.at(t, c) - mean).powi(2))
                    .sum::<f64>()
                    / n;
                assert!(mean.abs() < 1e-9);
                assert_relative_eq!(var, 1.0, epsilon = 1e-6);
            }
        }
    }
}
