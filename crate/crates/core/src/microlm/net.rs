//! Forward and backward passes over one token window.
//!
//! Pre-norm blocks: `x + attn(ln(x))`, then `x + mlp(ln(x))`. Attention is
//! causal scaled dot-product; the MLP is `silu(x·up)·down`. Block norms are
//! layer norm without bias or gain; the final norm applies the learnable
//! `final_norm` gain. The backward pass mirrors the forward exactly and is
//! validated against central finite differences at f64.

use crate::error::{Error, Result};
use crate::linalg::{dot, matmul, matmul_a_bt, matmul_at_b, Mat};
use crate::scalar::Scalar;
use crate::tensorio::TensorStore;

use super::Model;

const LN_EPS: f64 = 1e-5;

/// Parameter slices for one layer, borrowed from the store.
struct LayerRefs<'a, S: Scalar> {
    wq: &'a [S],
    wk: &'a [S],
    wv: &'a [S],
    wo: &'a [S],
    up: &'a [S],
    down: &'a [S],
}

fn layer_refs<'a, S: Scalar>(params: &'a TensorStore<S>, layer: usize) -> LayerRefs<'a, S> {
    let get = |suffix: &str| {
        params
            .get(&format!("layer{layer}.{suffix}"))
            .expect("validated layout")
            .data()
    };
    LayerRefs {
        wq: get("attn.wq"),
        wk: get("attn.wk"),
        wv: get("attn.wv"),
        wo: get("attn.wo"),
        up: get("mlp.up"),
        down: get("mlp.down"),
    }
}

fn as_mat<'a, S: Scalar>(data: &'a [S], rows: usize, cols: usize) -> Mat<S> {
    Mat::from_vec(rows, cols, data.to_vec())
}

/// Activations cached by a forward pass, consumed by `backward`.
pub(super) struct Cache<S: Scalar> {
    tokens: Vec<u32>,
    layers: Vec<LayerCache<S>>,
    lnf: Mat<S>,
    invf: Vec<S>,
    pub(super) hidden: Mat<S>,
    pub(super) logits: Mat<S>,
}

struct LayerCache<S: Scalar> {
    ln1: Mat<S>,
    inv1: Vec<S>,
    q: Mat<S>,
    k: Mat<S>,
    v: Mat<S>,
    /// Per-head causal attention rows (zero above the diagonal).
    probs: Vec<Mat<S>>,
    ctx: Mat<S>,
    ln2: Mat<S>,
    inv2: Vec<S>,
    u1: Mat<S>,
    act: Mat<S>,
}

/// Layer norm without bias or gain. Returns (normalized rows, 1/sigma per row).
fn layernorm<S: Scalar>(x: &Mat<S>) -> (Mat<S>, Vec<S>) {
    let n = S::of(x.cols as f64);
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut inv = vec![S::zero(); x.rows];
    for r in 0..x.rows {
        let row = x.row(r);
        let mu = row.iter().copied().sum::<S>() / n;
        let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<S>() / n;
        let is = S::one() / (var + S::of(LN_EPS)).sqrt();
        inv[r] = is;
        for (yo, &xi) in y.row_mut(r).iter_mut().zip(row) {
            *yo = (xi - mu) * is;
        }
    }
    (y, inv)
}

/// dL/dx for `y = (x - mu) / sigma`, given dL/dy, y and 1/sigma per row.
fn layernorm_backward<S: Scalar>(dy: &Mat<S>, y: &Mat<S>, inv: &[S]) -> Mat<S> {
    let n = S::of(dy.cols as f64);
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let yr = y.row(r);
        let m1 = dyr.iter().copied().sum::<S>() / n;
        let m2 = dot(dyr, yr) / n;
        let is = inv[r];
        for ((dxo, &dyi), &yi) in dx.row_mut(r).iter_mut().zip(dyr).zip(yr) {
            *dxo = is * (dyi - m1 - yi * m2);
        }
    }
    dx
}

#[inline]
fn silu<S: Scalar>(x: S) -> S {
    x / (S::one() + (-x).exp())
}

#[inline]
fn silu_grad<S: Scalar>(x: S) -> S {
    let sig = S::one() / (S::one() + (-x).exp());
    sig * (S::one() + x * (S::one() - sig))
}

impl<S: Scalar> Model<S> {
    /// Runs the model over a token window. Returns final-layer hidden states
    /// (len × dim) and logits (len × vocab).
    pub fn forward(&self, tokens: &[u32]) -> Result<(Mat<S>, Mat<S>)> {
        let cache = self.forward_cached(tokens)?;
        Ok((cache.hidden, cache.logits))
    }

    pub(super) fn forward_cached(&self, tokens: &[u32]) -> Result<Cache<S>> {
        let cfg = self.config();
        let t_len = tokens.len();
        if t_len == 0 {
            return Err(Error::config("empty token window"));
        }
        if t_len > cfg.context_len {
            return Err(Error::config(format!(
                "window of {t_len} tokens exceeds context_len {}",
                cfg.context_len
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
            return Err(Error::config(format!(
                "token {bad} out of vocab {}",
                cfg.vocab_size
            )));
        }
        let d = cfg.dim;
        let heads = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = S::of(1.0 / (hd as f64).sqrt());
        let embed = self.params().get("embed").expect("layout").data();

        let mut x = Mat::zeros(t_len, d);
        for (t, &tok) in tokens.iter().enumerate() {
            let erow = &embed[tok as usize * d..(tok as usize + 1) * d];
            let prow = self.pos.row(t);
            for ((xo, &e), &p) in x.row_mut(t).iter_mut().zip(erow).zip(prow) {
                *xo = e + p;
            }
        }

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let w = layer_refs(self.params(), l);
            let (ln1, inv1) = layernorm(&x);
            let wq = as_mat(w.wq, d, d);
            let wk = as_mat(w.wk, d, d);
            let wv = as_mat(w.wv, d, d);
            let q = matmul(&ln1, &wq);
            let k = matmul(&ln1, &wk);
            let v = matmul(&ln1, &wv);

            let mut probs = Vec::with_capacity(heads);
            let mut ctx = Mat::zeros(t_len, d);
            for h in 0..heads {
                let off = h * hd;
                let mut p = Mat::zeros(t_len, t_len);
                for t in 0..t_len {
                    let qrow = &q.row(t)[off..off + hd];
                    // causal scores over positions <= t
                    let mut smax = S::neg_infinity();
                    let mut scores = vec![S::zero(); t + 1];
                    for (u, sc) in scores.iter_mut().enumerate() {
                        let krow = &k.row(u)[off..off + hd];
                        *sc = dot(qrow, krow) * scale;
                        if *sc > smax {
                            smax = *sc;
                        }
                    }
                    let mut denom = S::zero();
                    for sc in scores.iter_mut() {
                        *sc = (*sc - smax).exp();
                        denom += *sc;
                    }
                    let prow = p.row_mut(t);
                    for (u, &e) in scores.iter().enumerate() {
                        prow[u] = e / denom;
                    }
                    let crow = &mut ctx.row_mut(t)[off..off + hd];
                    for (u, &pu) in prow[..=t].iter().enumerate() {
                        let vrow = &v.row(u)[off..off + hd];
                        for (co, &vi) in crow.iter_mut().zip(vrow) {
                            *co += pu * vi;
                        }
                    }
                }
                probs.push(p);
            }

            let wo = as_mat(w.wo, d, d);
            let attn_out = matmul(&ctx, &wo);
            let mut x2 = x.clone();
            for (xo, &a) in x2.data.iter_mut().zip(&attn_out.data) {
                *xo += a;
            }

            let (ln2, inv2) = layernorm(&x2);
            let up = as_mat(w.up, d, cfg.mlp_dim());
            let down = as_mat(w.down, cfg.mlp_dim(), d);
            let u1 = matmul(&ln2, &up);
            let mut act = u1.clone();
            for a in act.data.iter_mut() {
                *a = silu(*a);
            }
            let mlp_out = matmul(&act, &down);
            let mut x3 = x2.clone();
            for (xo, &m) in x3.data.iter_mut().zip(&mlp_out.data) {
                *xo += m;
            }

            layers.push(LayerCache {
                ln1,
                inv1,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                inv2,
                u1,
                act,
            });
            x = x3;
        }

        let (lnf, invf) = layernorm(&x);
        let gain = self.params().get("final_norm").expect("layout").data();
        let mut hidden = lnf.clone();
        for r in 0..t_len {
            for (h, &g) in hidden.row_mut(r).iter_mut().zip(gain) {
                *h *= g;
            }
        }
        let head = as_mat(
            self.params().get("head").expect("layout").data(),
            d,
            cfg.vocab_size,
        );
        let logits = matmul(&hidden, &head);

        Ok(Cache {
            tokens: tokens.to_vec(),
            layers,
            lnf,
            invf,
            hidden,
            logits,
        })
    }

    /// Backpropagates `dlogits` through the cached forward pass, adding
    /// parameter gradients into `grads` (which mirrors the store layout).
    pub(super) fn backward(&self, cache: &Cache<S>, dlogits: &Mat<S>, grads: &mut TensorStore<S>) {
        let cfg = self.config();
        let d = cfg.dim;
        let heads = cfg.n_heads;
        let hd = cfg.head_dim();
        let scale = S::of(1.0 / (hd as f64).sqrt());
        let t_len = cache.tokens.len();

        let head = as_mat(
            self.params().get("head").expect("layout").data(),
            d,
            cfg.vocab_size,
        );
        let gain = self
            .params()
            .get("final_norm")
            .expect("layout")
            .data()
            .to_vec();

        // head and final norm
        let dhead = matmul_at_b(&cache.hidden, dlogits);
        add_into(grads, "head", &dhead.data);
        let dhidden = matmul_a_bt(dlogits, &head);
        let mut dgain = vec![S::zero(); d];
        let mut dlnf = Mat::zeros(t_len, d);
        for r in 0..t_len {
            let dh = dhidden.row(r);
            let lf = cache.lnf.row(r);
            for i in 0..d {
                dgain[i] += dh[i] * lf[i];
            }
            for ((o, &dhi), &g) in dlnf.row_mut(r).iter_mut().zip(dh).zip(&gain) {
                *o = dhi * g;
            }
        }
        add_into(grads, "final_norm", &dgain);
        let mut dx = layernorm_backward(&dlnf, &cache.lnf, &cache.invf);

        for l in (0..cfg.n_layers).rev() {
            let lc = &cache.layers[l];
            let w = layer_refs(self.params(), l);

            // MLP branch: x3 = x2 + silu(ln2·up)·down
            let down = as_mat(w.down, cfg.mlp_dim(), d);
            let up = as_mat(w.up, d, cfg.mlp_dim());
            let ddown = matmul_at_b(&lc.act, &dx);
            add_into(grads, &format!("layer{l}.mlp.down"), &ddown.data);
            let mut du1 = matmul_a_bt(&dx, &down);
            for (g, &u) in du1.data.iter_mut().zip(&lc.u1.data) {
                *g *= silu_grad(u);
            }
            let dup = matmul_at_b(&lc.ln2, &du1);
            add_into(grads, &format!("layer{l}.mlp.up"), &dup.data);
            let dln2 = matmul_a_bt(&du1, &up);
            let dx2_norm = layernorm_backward(&dln2, &lc.ln2, &lc.inv2);
            let mut dx2 = dx;
            for (a, &b) in dx2.data.iter_mut().zip(&dx2_norm.data) {
                *a += b;
            }

            // attention branch: x2 = x + (attn probs · v) · wo
            let wo = as_mat(w.wo, d, d);
            let dwo = matmul_at_b(&lc.ctx, &dx2);
            add_into(grads, &format!("layer{l}.attn.wo"), &dwo.data);
            let dctx = matmul_a_bt(&dx2, &wo);

            let mut dq = Mat::zeros(t_len, d);
            let mut dk = Mat::zeros(t_len, d);
            let mut dv = Mat::zeros(t_len, d);
            for h in 0..heads {
                let off = h * hd;
                let p = &lc.probs[h];
                for t in 0..t_len {
                    let dctx_row = &dctx.row(t)[off..off + hd];
                    let prow = p.row(t);
                    // dP[t,u] = dctx[t]·v[u]; softmax backward within the row
                    let mut dp = vec![S::zero(); t + 1];
                    for (u, dpu) in dp.iter_mut().enumerate() {
                        let vrow = &lc.v.row(u)[off..off + hd];
                        *dpu = dot(dctx_row, vrow);
                    }
                    let inner: S = dp
                        .iter()
                        .zip(&prow[..=t])
                        .map(|(&dpu, &pu)| dpu * pu)
                        .sum();
                    for (u, &dpu) in dp.iter().enumerate() {
                        let ds = prow[u] * (dpu - inner) * scale;
                        let krow = &lc.k.row(u)[off..off + hd];
                        let qrow = &lc.q.row(t)[off..off + hd];
                        let dqrow = &mut dq.row_mut(t)[off..off + hd];
                        for (o, &ki) in dqrow.iter_mut().zip(krow) {
                            *o += ds * ki;
                        }
                        let dkrow = &mut dk.row_mut(u)[off..off + hd];
                        for (o, &qi) in dkrow.iter_mut().zip(qrow) {
                            *o += ds * qi;
                        }
                        let pu = prow[u];
                        let dvrow = &mut dv.row_mut(u)[off..off + hd];
                        for (o, &dci) in dvrow.iter_mut().zip(dctx_row) {
                            *o += pu * dci;
                        }
                    }
                }
            }

            let wq = as_mat(w.wq, d, d);
            let wk = as_mat(w.wk, d, d);
            let wv = as_mat(w.wv, d, d);
            let dwq = matmul_at_b(&lc.ln1, &dq);
            let dwk = matmul_at_b(&lc.ln1, &dk);
            let dwv = matmul_at_b(&lc.ln1, &dv);
            add_into(grads, &format!("layer{l}.attn.wq"), &dwq.data);
            add_into(grads, &format!("layer{l}.attn.wk"), &dwk.data);
            add_into(grads, &format!("layer{l}.attn.wv"), &dwv.data);
            let mut dln1 = matmul_a_bt(&dq, &wq);
            let dln1_k = matmul_a_bt(&dk, &wk);
            let dln1_v = matmul_a_bt(&dv, &wv);
            for ((a, &b), &c) in dln1.data.iter_mut().zip(&dln1_k.data).zip(&dln1_v.data) {
                *a += b + c;
            }
            let dx_norm = layernorm_backward(&dln1, &lc.ln1, &lc.inv1);
            dx = dx2;
            for (a, &b) in dx.data.iter_mut().zip(&dx_norm.data) {
                *a += b;
            }
        }

        // embedding rows (position table has no parameters)
        let dembed = grads.get_mut("embed").expect("layout");
        let ed = dembed.data_mut();
        for (t, &tok) in cache.tokens.iter().enumerate() {
            let row = &mut ed[tok as usize * d..(tok as usize + 1) * d];
            for (o, &g) in row.iter_mut().zip(dx.row(t)) {
                *o += g;
            }
        }
    }
}

fn add_into<S: Scalar>(grads: &mut TensorStore<S>, name: &str, delta: &[S]) {
    let t = grads.get_mut(name).expect("gradient layout mismatch");
    for (o, &g) in t.data_mut().iter_mut().zip(delta) {
        *o += g;
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Model, ModelConfig};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 16,
            dim: 8,
            n_layers: 1,
            n_heads: 2,
            mlp_mult: 2,
            context_len: 16,
            seed: 3,
        }
    }

    #[test]
    fn causality_is_exact() {
        let model = Model::<f32>::init(tiny_cfg()).unwrap();
        let a = [1u32, 2, 3, 4, 5, 6];
        let b = [1u32, 2, 3, 4, 6, 5]; // permuted after position 3
        let (ha, _) = model.forward(&a).unwrap();
        let (hb, _) = model.forward(&b).unwrap();
        for t in 0..4 {
            for (x, y) in ha.row(t).iter().zip(hb.row(t)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn single_token_window() {
        let model = Model::<f32>::init(tiny_cfg()).unwrap();
        let (h, l) = model.forward(&[7]).unwrap();
        assert_eq!((h.rows, h.cols), (1, 8));
        assert_eq!((l.rows, l.cols), (1, 16));
        assert!(h.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let mut model = Model::<f32>::init(tiny_cfg()).unwrap();
        let cfg = model.config().clone();
        let mut params = model.params().clone();
        for v in params.get_mut("head").unwrap().data_mut() {
            *v = 0.0;
        }
        model = Model::from_params(cfg, params).unwrap();
        let (_, logits) = model.forward(&[1, 2, 3]).unwrap();
        assert!(logits.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_too_long_is_rejected() {
        let model = Model::<f32>::init(tiny_cfg()).unwrap();
        let toks = vec![0u32; 17];
        assert!(model.forward(&toks).is_err());
    }

    #[test]
    fn out_of_vocab_token_rejected() {
        let model = Model::<f32>::init(tiny_cfg()).unwrap();
        assert!(model.forward(&[99]).is_err());
    }
}
