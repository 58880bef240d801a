//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime (run with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 6, 7, 8 and 10 share a fixture holding two identical full
//! pipeline runs executed under different thread counts.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use lesionenc::encoding::{cross_validated_encode, ridge_fit, EmbeddingSeries, LambdaMode};
use lesionenc::lesion::{
    apply_lesion, default_components, random_mask, select_topk, MaskKind, SelectionScope,
};
use lesionenc::linalg::Mat;
use lesionenc::microlm::{token_nlls, Model, ModelConfig};
use lesionenc::pipeline::{run_pipeline, ExperimentConfig, Stage};
use lesionenc::stats::{fdr_correct, lpi, FdrMethod};
use lesionenc::synth::{gen_bold, make_ground_truth, oracle_ridge, SynthSubjectSpec};
use lesionenc::tensorio::{NamedTensor, TensorStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    m
}

fn pass(criterion: &str, started: Instant) {
    println!(
        "ACCEPTANCE {criterion}: PASS ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_01_ridge_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for _ in 0..100 {
        let n = rng.gen_range(5..=30);
        let d = rng.gen_range(1..=n.min(30));
        let v = rng.gen_range(1..=6);
        let lambda = rng.gen_range(0.0..5.0);
        let x = random_mat(n, d, &mut rng);
        let y = random_mat(n, v, &mut rng);
        let fast = ridge_fit(&x, &y, lambda).unwrap();
        let slow = oracle_ridge(&x, &y, lambda + 1e-9).unwrap();
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!(
                (a - b).abs() < 1e-8,
                "solver vs oracle: {a} vs {b} (lambda {lambda})"
            );
        }
    }
    assert!(started.elapsed().as_secs() < 10, "ridge oracle too slow");
    pass("1 ridge-oracle", started);
}

#[test]
fn criterion_02_gradient_check() {
    let started = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 16,
        dim: 8,
        n_layers: 1,
        n_heads: 2,
        mlp_mult: 2,
        context_len: 16,
        seed: 42,
    };
    let model = Model::<f64>::init(cfg).unwrap();
    let w1: Vec<u32> = vec![3, 1, 4, 1, 5, 9, 2, 6, 10, 15];
    let w2: Vec<u32> = vec![7, 7, 0, 12, 8, 2];
    let windows: Vec<&[u32]> = vec![&w1, &w2];
    let (_, grads) = model.loss_and_gradients(&windows).unwrap();

    let loss_of = |params: TensorStore<f64>| -> f64 {
        let m = Model::from_params(model.config().clone(), params).unwrap();
        let mut nll = 0.0;
        let mut n = 0usize;
        for w in &windows {
            let (_, logits) = m.forward(w).unwrap();
            nll += token_nlls(&logits, &w[1..]).iter().sum::<f64>();
            n += w.len() - 1;
        }
        nll / n as f64
    };

    let mut coords: Vec<(String, usize)> = Vec::new();
    for t in model.params().iter() {
        for i in 0..t.numel() {
            coords.push((t.name().to_string(), i));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    coords.shuffle(&mut rng);
    coords.truncate(520);
    assert!(coords.len() >= 500);

    let h = 1e-5;
    for (name, idx) in coords {
        let analytic = grads.get(&name).unwrap().data()[idx];
        let mut plus = model.params().clone();
        plus.get_mut(&name).unwrap().data_mut()[idx] += h;
        let mut minus = model.params().clone();
        minus.get_mut(&name).unwrap().data_mut()[idx] -= h;
        let numeric = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(
            rel < 1e-3,
            "gradient mismatch at {name}[{idx}]: {analytic} vs {numeric} (rel {rel})"
        );
    }
    assert!(started.elapsed().as_secs() < 60, "gradient check too slow");
    pass("2 gradient-check", started);
}

#[test]
fn criterion_03_planted_encoding_recovery() {
    let started = Instant::now();
    // noiseless planted model: r_mean > 0.999 at every voxel
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let dim = 12;
    let emb = EmbeddingSeries {
        runs: (0..8).map(|_| random_mat(120, dim, &mut rng)).collect(),
        tr_seconds: 2.0,
        lag_seconds: 4.0,
    };
    let spec = SynthSubjectSpec {
        language: "A".into(),
        n_runs: 8,
        trs_per_run: 120,
        n_voxels: 20,
        snr: 1e9,
        ground_truth_w: make_ground_truth(20, dim, 20, &[], 3),
        seed: 5,
    };
    let bold = gen_bold(&spec, &emb).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, y) in emb.runs.iter().zip(&bold.runs) {
        let (xa, ya) = lesionenc::encoding::apply_lag(x, y, 4.0, 2.0).unwrap();
        xs.push(xa);
        ys.push(ya);
    }
    let res = cross_validated_encode(&xs, &ys, &[0.01, 1.0], LambdaMode::Global).unwrap();
    for (v, &r) in res.r_mean.iter().enumerate() {
        assert!(r > 0.999, "noiseless voxel {v}: r = {r}");
    }

    // null model over 50 voxels: |mean r| < 0.05
    let emb = EmbeddingSeries {
        runs: (0..4).map(|_| random_mat(50, dim, &mut rng)).collect(),
        tr_seconds: 2.0,
        lag_seconds: 4.0,
    };
    let spec = SynthSubjectSpec {
        language: "A".into(),
        n_runs: 4,
        trs_per_run: 50,
        n_voxels: 50,
        snr: 1.0,
        ground_truth_w: make_ground_truth(50, dim, 0, &[], 4),
        seed: 6,
    };
    let bold = gen_bold(&spec, &emb).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (x, y) in emb.runs.iter().zip(&bold.runs) {
        let (xa, ya) = lesionenc::encoding::apply_lag(x, y, 4.0, 2.0).unwrap();
        xs.push(xa);
        ys.push(ya);
    }
    let res = cross_validated_encode(&xs, &ys, &[1.0], LambdaMode::Global).unwrap();
    let mean_r: f64 = res.r_mean.iter().sum::<f64>() / 50.0;
    assert!(mean_r.abs() < 0.05, "null mean r = {mean_r}");
    assert!(started.elapsed().as_secs() < 60, "planted recovery too slow");
    pass("3 planted-encoding", started);
}

/// Literal step-up oracle: largest k with p_(k) <= k/m * q (BH), reject all
/// p-values at or below that threshold.
fn fdr_stepup_oracle(p: &[f64], q: f64) -> Vec<bool> {
    let m = p.len();
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cutoff = -1.0f64;
    for (i, &pv) in sorted.iter().enumerate() {
        if pv <= (i + 1) as f64 / m as f64 * q {
            cutoff = pv;
        }
    }
    p.iter().map(|&pv| pv <= cutoff && cutoff >= 0.0).collect()
}

#[test]
fn criterion_04_fdr_oracle() {
    let started = Instant::now();
    // the worked 5-value example: all significant at q = 0.05
    let p = [0.01, 0.02, 0.03, 0.04, 0.05];
    let (_, sig) = fdr_correct(&p, 0.05, FdrMethod::Bh).unwrap();
    assert!(sig.iter().all(|&s| s));
    assert_eq!(sig, fdr_stepup_oracle(&p, 0.05));

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..1000 {
        let m = rng.gen_range(1..60);
        let p: Vec<f64> = (0..m)
            .map(|_| {
                let x: f64 = rng.gen();
                // mix of null and signal-ish p-values
                if rng.gen_bool(0.3) {
                    x * 0.05
                } else {
                    x
                }
            })
            .collect();
        let q = *[0.01, 0.05, 0.1].choose(&mut rng).unwrap();
        let (_, sig) = fdr_correct(&p, q, FdrMethod::Bh).unwrap();
        let oracle = fdr_stepup_oracle(&p, q);
        assert_eq!(sig, oracle, "step-up mismatch at q={q} p={p:?}");
    }
    pass("4 fdr-oracle", started);
}

#[test]
fn criterion_05_mask_accounting() {
    let started = Instant::now();
    let cfg = ModelConfig::default();
    let store = lesionenc::microlm::init_params::<f32>(&cfg).unwrap();
    let scores = store.cast::<f64>();
    let comps = default_components();
    let fraction = 0.01;

    let core = select_topk(
        &scores,
        fraction,
        SelectionScope::PerLayerComponent,
        &comps,
        MaskKind::Core,
    )
    .unwrap();
    let rand_mask = random_mask(
        &store,
        fraction,
        99,
        SelectionScope::PerLayerComponent,
        &comps,
    )
    .unwrap();

    // every (layer, component) group selects exactly ceil(0.01 * size)
    for mask in [&core, &rand_mask] {
        for (name, bits) in &mask.bits {
            let expect = (fraction * bits.len() as f64).ceil() as usize;
            let got = bits.iter().filter(|&&b| b).count();
            assert_eq!(got, expect, "cardinality mismatch in {name}");
        }
        // eligible groups are exactly the attention/MLP tensors
        let expected_tensors: BTreeSet<String> = store
            .names()
            .filter(|n| n.starts_with("layer"))
            .map(String::from)
            .collect();
        let got_tensors: BTreeSet<String> = mask.bits.keys().cloned().collect();
        assert_eq!(expected_tensors, got_tensors);
    }

    // apply_lesion zeroes exactly the masked entries, bitwise elsewhere
    let lesioned = apply_lesion(&store, &core).unwrap();
    for t in store.iter() {
        let l = lesioned.get(t.name()).unwrap();
        let bits = core.bits.get(t.name());
        for i in 0..t.numel() {
            if bits.map(|b| b[i]).unwrap_or(false) {
                assert_eq!(l.data()[i].to_bits(), 0.0f32.to_bits());
            } else {
                assert_eq!(l.data()[i].to_bits(), t.data()[i].to_bits());
            }
        }
    }
    pass("5 mask-accounting", started);
}

#[test]
fn criterion_09_lpi_bounds_and_symmetry() {
    let started = Instant::now();
    let eps = 1e-6;
    // bounds on random rectified-normalized inputs
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 500;
    let t: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let o1: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let o2: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let mask = vec![true; n];
    let map = lpi("A", &t, (&o1, &o2), eps, &mask).unwrap();
    for &v in &map.values {
        assert!(v > -1.0 && v < 1.0, "lpi out of bounds: {v}");
    }

    // T_target == mean(others) => 0, exactly at the epsilon scale
    let map = lpi("A", &[0.37], (&[0.30], &[0.44]), eps, &[true]).unwrap();
    assert!(map.values[0].abs() <= 1e-12 / eps);

    // five hand cases against the closed form
    let cases = [
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 1.0),
        (0.5, 0.5, 0.5),
        (0.8, 0.2, 0.4),
        (0.1, 0.9, 0.3),
    ];
    for &(tt, a, b) in &cases {
        let map = lpi("A", &[tt], (&[a], &[b]), eps, &[true]).unwrap();
        let others = 0.5 * (a + b);
        let expect = (tt - others) / (tt + others + eps);
        assert!((map.values[0] - expect).abs() < 1e-15);
    }
    pass("9 lpi-bounds", started);
}

// ------------------------------------------------------------------------
// Criteria 6, 7, 8, 10: shared full-pipeline fixture (two runs, different
// thread counts).

struct Fixture {
    dir_a: tempfile::TempDir,
    dir_b: tempfile::TempDir,
    cfg: ExperimentConfig,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let dir_a = tempfile::tempdir().expect("tempdir");
        let dir_b = tempfile::tempdir().expect("tempdir");
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        pool1
            .install(|| run_pipeline(&cfg, &Stage::ALL, dir_a.path()))
            .expect("pipeline run A");
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        pool4
            .install(|| run_pipeline(&cfg, &Stage::ALL, dir_b.path()))
            .expect("pipeline run B");
        Fixture { dir_a, dir_b, cfg }
    })
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("missing {}: {e}", path.display()))
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn criterion_06_core_vs_specific_dissociation() {
    let started = Instant::now();
    let fx = fixture();
    let rows = read_csv_rows(&fx.dir_a.path().join("report/perplexity.csv"));
    let ratio = |variant: &str, lang: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == variant && r[1] == lang)
            .unwrap_or_else(|| panic!("missing perplexity row {variant}/{lang}"))[3]
            .parse()
            .unwrap()
    };
    for lang in fx.cfg.language_ids() {
        let core = ratio("core", &lang);
        let random = ratio("random", &lang);
        for spec_lang in fx.cfg.language_ids() {
            let spec = ratio(&format!("specific_{spec_lang}"), &lang);
            assert!(
                core > spec,
                "held-out {lang}: core ratio {core} must exceed specific_{spec_lang} ratio {spec}"
            );
        }
        assert!(
            random < core,
            "held-out {lang}: random ratio {random} must stay below core ratio {core}"
        );
    }
    pass("6 core-vs-specific-perplexity", started);
}

#[test]
fn criterion_07_matched_language_encoding_drop() {
    let started = Instant::now();
    let fx = fixture();
    let rows = read_csv_rows(&fx.dir_a.path().join("report/matched_lesion_matrix.csv"));
    let mean_t = |group: &str, lesion: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == group && r[1] == lesion)
            .unwrap_or_else(|| panic!("missing matrix cell {group}/{lesion}"))[2]
            .parse()
            .unwrap()
    };
    // for each lesion language, the matched participant group must show the
    // largest mean paired-t (3/3 diagonal dominance)
    for lesion in fx.cfg.language_ids() {
        let matched = mean_t(&lesion, &lesion);
        for group in fx.cfg.language_ids() {
            if group == lesion {
                continue;
            }
            let other = mean_t(&group, &lesion);
            assert!(
                matched > other,
                "lesion {lesion}: matched group t {matched} must exceed group {group} t {other}"
            );
        }
    }
    pass("7 matched-language-encoding", started);
}

#[test]
fn criterion_08_silhouette_direction() {
    let started = Instant::now();
    let fx = fixture();
    let rows = read_csv_rows(&fx.dir_a.path().join("geometry/silhouette.csv"));
    let score = |variant: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == variant && r[1] == "raw")
            .expect("silhouette row")[2]
            .parse()
            .unwrap()
    };
    let intact = score("intact");
    let core = score("core");
    assert!(
        intact > core && intact - core > 0.0,
        "silhouette must drop under the core lesion: intact {intact}, core {core}"
    );
    pass("8 silhouette-direction", started);
}

#[test]
fn criterion_10_determinism_across_threads() {
    let started = Instant::now();
    let fx = fixture();
    let report_a = fx.dir_a.path().join("report");
    let report_b = fx.dir_b.path().join("report");
    let mut names: Vec<String> = std::fs::read_dir(&report_a)
        .expect("report dir")
        .map(|e| e.unwrap().file_name().to_string_lossy().to_string())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let a = std::fs::read(report_a.join(&name)).expect("report file A");
        let b = std::fs::read(report_b.join(&name))
            .unwrap_or_else(|e| panic!("missing report file {name} in run B: {e}"));
        assert_eq!(a, b, "report file {name} differs between runs");
    }
    pass("10 determinism", started);
}
