//! Central finite-difference validation of the hand-written backward pass.

use lesionenc::microlm::{token_nlls, Model, ModelConfig};
use lesionenc::tensorio::TensorStore;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn batch_loss(model: &Model<f64>, windows: &[&[u32]]) -> f64 {
    let mut nll = 0.0;
    let mut n = 0usize;
    for w in windows {
        let (_, logits) = model.forward(w).unwrap();
        nll += token_nlls(&logits, &w[1..]).iter().sum::<f64>();
        n += w.len() - 1;
    }
    nll / n as f64
}

/// Checks a sample of parameters against central differences.
/// Returns the worst relative error seen.
fn check_model(cfg: ModelConfig, windows: &[&[u32]], sample: usize, seed: u64) -> f64 {
    let model = Model::<f64>::init(cfg).unwrap();
    let (_, grads) = model.loss_and_gradients(windows).unwrap();

    let mut coords: Vec<(String, usize)> = Vec::new();
    for t in model.params().iter() {
        for i in 0..t.numel() {
            coords.push((t.name().to_string(), i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.shuffle(&mut rng);
    coords.truncate(sample);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (name, idx) in coords {
        let analytic = grads.get(&name).unwrap().data()[idx];
        let probe = |delta: f64| -> f64 {
            let mut params: TensorStore<f64> = model.params().clone();
            params.get_mut(&name).unwrap().data_mut()[idx] += delta;
            let m = Model::from_params(model.config().clone(), params).unwrap();
            batch_loss(&m, windows)
        };
        let numeric = (probe(h) - probe(-h)) / (2.0 * h);
        // The floor makes near-zero gradients an absolute check: central
        // differences cannot resolve |g| ~ 1e-8 to any relative accuracy.
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(
            rel < 1e-3,
            "gradient mismatch at {name}[{idx}]: analytic {analytic}, numeric {numeric}, rel {rel}"
        );
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn single_layer_model_matches_finite_differences() {
    let cfg = ModelConfig {
        vocab_size: 16,
        dim: 8,
        n_layers: 1,
        n_heads: 2,
        mlp_mult: 2,
        context_len: 16,
        seed: 17,
    };
    let w1: Vec<u32> = vec![3, 1, 4, 1, 5, 9, 2, 6];
    let w2: Vec<u32> = vec![8, 8, 0, 15, 7];
    let worst = check_model(cfg, &[&w1, &w2], 400, 1);
    assert!(worst < 1e-3);
}

#[test]
fn two_layer_model_matches_finite_differences() {
    let cfg = ModelConfig {
        vocab_size: 12,
        dim: 8,
        n_layers: 2,
        n_heads: 4,
        mlp_mult: 3,
        context_len: 12,
        seed: 23,
    };
    let w: Vec<u32> = vec![0, 5, 11, 2, 7, 3, 10, 1, 6];
    let worst = check_model(cfg, &[&w], 300, 2);
    assert!(worst < 1e-3);
}

#[test]
fn single_token_head_dim_one_matches() {
    // degenerate geometry: head_dim 1, shortest usable window
    let cfg = ModelConfig {
        vocab_size: 6,
        dim: 4,
        n_layers: 1,
        n_heads: 4,
        mlp_mult: 2,
        context_len: 4,
        seed: 5,
    };
    let w: Vec<u32> = vec![2, 4];
    let worst = check_model(cfg, &[&w], 120, 3);
    assert!(worst < 1e-3);
}
