//! Micro decoder-only transformer with hand-written forward and backward
//! passes.
//!
//! The parameter layout is a pure function of [`ModelConfig`]: tensor names
//! follow the fixed scheme `embed`, `layer{i}.attn.{wq,wk,wv,wo}`,
//! `layer{i}.mlp.{up,down}`, `final_norm`, `head`. Weight matrices are stored
//! row-major as `[in, out]`, applied as `y = x · W`. Block-internal
//! normalization is layer norm without bias or gain; only the final norm
//! carries a learnable gain. Positions use fixed sinusoidal encodings.

mod corpus;
mod net;
mod train;

pub use corpus::TimedCorpus;
pub use train::{
    finetune_language, perplexity_from_nlls, pretrain, token_nlls, EmbeddingTable, TrainOptions,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::tensorio::{NamedTensor, TensorStore};

/// Architecture hyperparameters. `mlp_mult` is the MLP expansion factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_mult: usize,
    pub context_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale default: byte-level vocab, two layers, four heads.
    fn default() -> Self {
        Self {
            vocab_size: 256,
            dim: 64,
            n_layers: 2,
            n_heads: 4,
            mlp_mult: 4,
            context_len: 128,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.dim == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.mlp_mult == 0
            || self.context_len == 0
        {
            return Err(Error::config("model config fields must be positive"));
        }
        if self.dim % self.n_heads != 0 {
            return Err(Error::config(format!(
                "dim {} not divisible by n_heads {}",
                self.dim, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }

    pub fn mlp_dim(&self) -> usize {
        self.dim * self.mlp_mult
    }

    /// Canonical (name, shape) list. Layout is a pure function of the config;
    /// initialization and gradient accumulators both follow this order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.dim;
        let mut out = vec![("embed".to_string(), vec![self.vocab_size, d])];
        for i in 0..self.n_layers {
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((format!("layer{i}.attn.{w}"), vec![d, d]));
            }
            out.push((format!("layer{i}.mlp.up"), vec![d, self.mlp_dim()]));
            out.push((format!("layer{i}.mlp.down"), vec![self.mlp_dim(), d]));
        }
        out.push(("final_norm".to_string(), vec![d]));
        out.push(("head".to_string(), vec![d, self.vocab_size]));
        out
    }
}

/// Weight init scale for all projection matrices.
const INIT_STD: f64 = 0.02;

/// Builds the parameter store for `cfg`: Gaussian projections, unit norm
/// gain. Values are drawn in f64 in layout order, so the same seed gives the
/// same store at every scalar width.
pub fn init_params<S: Scalar>(cfg: &ModelConfig) -> Result<TensorStore<S>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = TensorStore::new();
    for (name, shape) in cfg.layout() {
        let numel: usize = shape.iter().product();
        let data: Vec<S> = if name == "final_norm" {
            vec![S::one(); numel]
        } else {
            (0..numel)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    S::of(z * INIT_STD)
                })
                .collect()
        };
        store.insert(NamedTensor::new(name, shape, data)?)?;
    }
    Ok(store)
}

/// Per-step gradient magnitude accumulator. Sums run in f64 regardless of the
/// model's scalar width; layout mirrors the parameter store.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    sums: TensorStore<f64>,
    step_count: usize,
}

impl GradAccumulator {
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        let mut sums = TensorStore::new();
        for (name, shape) in cfg.layout() {
            sums.insert(NamedTensor::zeros(name, shape)?)?;
        }
        Ok(Self {
            sums,
            step_count: 0,
        })
    }

    /// Rebuilds an accumulator from stored sums (archives round through f32).
    pub fn from_parts(sums: TensorStore<f64>, step_count: usize) -> Self {
        Self { sums, step_count }
    }

    pub fn sums(&self) -> &TensorStore<f64> {
        &self.sums
    }

    pub fn into_sums(self) -> TensorStore<f64> {
        self.sums
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    fn add_abs<S: Scalar>(&mut self, name: &str, grad: &[S]) {
        let t = self
            .sums
            .get_mut(name)
            .expect("accumulator layout mismatch");
        for (s, &g) in t.data_mut().iter_mut().zip(grad) {
            *s += g.to_f64().abs();
        }
    }

    fn bump(&mut self) {
        self.step_count += 1;
    }
}

/// The model: a config plus a parameter store matching its layout.
#[derive(Debug, Clone)]
pub struct Model<S: Scalar> {
    cfg: ModelConfig,
    params: TensorStore<S>,
    /// Sinusoidal position table, rows 0..context_len.
    pos: Mat<S>,
}

impl<S: Scalar> Model<S> {
    pub fn init(cfg: ModelConfig) -> Result<Self> {
        let params = init_params(&cfg)?;
        Ok(Self::assemble(cfg, params))
    }

    /// Wraps an existing parameter store, validating it against the layout.
    pub fn from_params(cfg: ModelConfig, params: TensorStore<S>) -> Result<Self> {
        cfg.validate()?;
        let expected = cfg.layout();
        if expected.len() != params.len() {
            return Err(Error::shape(format!(
                "store holds {} tensors, layout expects {}",
                params.len(),
                expected.len()
            )));
        }
        for (name, shape) in &expected {
            let t = params.require(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!(
                    "tensor '{name}': shape {:?}, layout expects {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(Self::assemble(cfg, params))
    }

    fn assemble(cfg: ModelConfig, params: TensorStore<S>) -> Self {
        let pos = sinusoidal_table(cfg.context_len, cfg.dim);
        Self { cfg, params, pos }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &TensorStore<S> {
        &self.params
    }

    pub fn into_params(self) -> TensorStore<S> {
        self.params
    }

    pub fn cast<T: Scalar>(&self) -> Model<T> {
        Model::assemble(self.cfg.clone(), self.params.cast())
    }
}

fn sinusoidal_table<S: Scalar>(max_len: usize, dim: usize) -> Mat<S> {
    let mut pos = Mat::zeros(max_len, dim);
    for t in 0..max_len {
        for i in 0..dim / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            let angle = t as f64 * freq;
            *pos.at_mut(t, 2 * i) = S::of(angle.sin());
            *pos.at_mut(t, 2 * i + 1) = S::of(angle.cos());
        }
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_config_gives_bitwise_identical_stores() {
        let cfg = ModelConfig {
            seed: 11,
            ..Default::default()
        };
        let a = init_params::<f32>(&cfg).unwrap();
        let b = init_params::<f32>(&cfg).unwrap();
        for t in a.iter() {
            let o = b.get(t.name()).unwrap();
            for (x, y) in t.data().iter().zip(o.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = ModelConfig {
            dim: 33,
            n_heads: 4,
            ..Default::default()
        };
        assert!(init_params::<f32>(&cfg).is_err());
    }

    #[test]
    fn layout_rule_for_mlp_down() {
        let cfg = ModelConfig {
            vocab_size: 256,
            dim: 32,
            n_layers: 2,
            n_heads: 4,
            mlp_mult: 4,
            context_len: 64,
            seed: 0,
        };
        let store = init_params::<f32>(&cfg).unwrap();
        let t = store.get("layer1.mlp.down").unwrap();
        assert_eq!(t.shape(), &[32 * 4, 32]);
    }

    #[test]
    fn layout_is_pure_function_of_config() {
        let cfg = ModelConfig::default();
        let a = ModelConfig {
            seed: 1,
            ..cfg.clone()
        };
        let b = ModelConfig {
            seed: 2,
            ..cfg.clone()
        };
        assert_eq!(a.layout(), b.layout());
        let sa = init_params::<f32>(&a).unwrap();
        let sb = init_params::<f32>(&b).unwrap();
        let names_a: Vec<_> = sa.names().collect();
        let names_b: Vec<_> = sb.names().collect();
        assert_eq!(names_a, names_b);
    }

    #[test]
    fn norm_gain_initialized_to_one() {
        let store = init_params::<f32>(&ModelConfig::default()).unwrap();
        assert!(store
            .get("final_norm")
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
    }
}
