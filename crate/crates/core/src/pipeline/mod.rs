//! End-to-end orchestration: configuration, stage graph, and the runner.
//!
//! Stages communicate exclusively through artifacts on disk, so any stage can
//! be re-run or resumed; the manifest records which stages completed under
//! which config hash. Every random choice derives from the master seed, and
//! report CSVs are byte-identical across runs regardless of thread count.

mod artifacts;
mod manifest;
mod report;
mod stages;

pub use manifest::{RunManifest, StageRecord};

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::LambdaMode;
use crate::error::{Error, Result};
use crate::geometry::ProbeConfig;
use crate::lesion::{default_components, Component, SelectionScope};
use crate::microlm::{ModelConfig, TrainOptions};
use crate::stats::FdrMethod;
use crate::synth::{BigramBias, SentenceLenDist, SynthLanguageSpec};

/// Derives a named sub-seed from the master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusParams {
    pub token_rate: f64,
    pub pretrain_tokens: usize,
    pub finetune_tokens: usize,
    /// Tokens per language used to pick language-contrastive dimensions.
    pub contrast_tokens: usize,
    /// Held-out tokens per language for the probing tasks.
    pub probe_tokens: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingParams {
    pub pretrain: TrainOptions,
    pub finetune: TrainOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectsParams {
    pub per_group: usize,
    pub n_runs: usize,
    pub trs_per_run: usize,
    pub n_voxels: usize,
    /// Leading voxels that carry signal; the rest stay silent (control ROI).
    pub n_signal_voxels: usize,
    pub snr: f64,
    /// How many language-contrastive embedding dims the planted weights use.
    pub contrast_dims: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LesionParams {
    pub fraction: f64,
    pub scope: SelectionScope,
    pub components: Vec<Component>,
    pub random_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingParams {
    pub tr_seconds: f64,
    pub lag_seconds: f64,
    pub lambda_grid: Vec<f64>,
    pub lambda_mode: LambdaMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsParams {
    pub fdr_q: f64,
    pub fdr_method: FdrMethod,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryParams {
    pub sample_per_language: usize,
    pub pca_dims: usize,
    pub projection_dims: usize,
    pub length_bins: usize,
    pub train_frac: f64,
    pub dev_frac: f64,
    pub probe: ProbeConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub languages: Vec<SynthLanguageSpec>,
    pub corpus: CorpusParams,
    pub training: TrainingParams,
    pub subjects: SubjectsParams,
    pub lesion: LesionParams,
    pub encoding: EncodingParams,
    pub stats: StatsParams,
    pub geometry: GeometryParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::with_seed(17)
    }
}

impl ExperimentConfig {
    /// The default desk-scale experiment with every sub-seed derived from
    /// `master`.
    pub fn with_seed(master: u64) -> Self {
        let languages = vec![
            language_spec("A", (b'q'..=b'z').map(u32::from).collect(), master),
            language_spec("B", (b'A'..=b'J').map(u32::from).collect(), master),
            language_spec("C", (b'Q'..=b'Z').map(u32::from).collect(), master),
        ];
        Self {
            seed: master,
            model: ModelConfig {
                seed: derive_seed(master, "model-init"),
                ..ModelConfig::default()
            },
            languages,
            corpus: CorpusParams {
                token_rate: 3.0,
                pretrain_tokens: 60_000,
                finetune_tokens: 40_000,
                contrast_tokens: 3_000,
                probe_tokens: 12_000,
            },
            training: TrainingParams {
                pretrain: TrainOptions {
                    steps: 2500,
                    lr: 3e-3,
                    batch_windows: 8,
                    window_len: 64,
                    weight_decay: 0.05,
                    seed: derive_seed(master, "pretrain"),
                },
                finetune: TrainOptions {
                    steps: 1200,
                    lr: 0.3,
                    batch_windows: 8,
                    window_len: 64,
                    weight_decay: 0.0,
                    seed: derive_seed(master, "finetune"),
                },
            },
            subjects: SubjectsParams {
                per_group: 8,
                n_runs: 9,
                trs_per_run: 75,
                n_voxels: 48,
                n_signal_voxels: 36,
                snr: 10.0,
                contrast_dims: 32,
                seed: derive_seed(master, "subjects"),
            },
            lesion: LesionParams {
                fraction: 0.01,
                scope: SelectionScope::PerLayerComponent,
                components: default_components().into_iter().collect(),
                random_seed: derive_seed(master, "random-mask"),
            },
            encoding: EncodingParams {
                tr_seconds: 2.0,
                lag_seconds: 4.0,
                lambda_grid: (-2..=6).map(|k| 10f64.powi(k)).collect(),
                lambda_mode: LambdaMode::Global,
            },
            stats: StatsParams {
                fdr_q: 0.01,
                fdr_method: FdrMethod::Bh,
                epsilon: 1e-6,
            },
            geometry: GeometryParams {
                sample_per_language: 250,
                pca_dims: 50,
                projection_dims: 2,
                length_bins: 6,
                train_frac: 0.6,
                dev_frac: 0.2,
                probe: ProbeConfig {
                    seed: derive_seed(master, "probe"),
                    ..ProbeConfig::default()
                },
                seed: derive_seed(master, "geometry"),
            },
        }
    }

    /// Recomputes every derived seed from a new master; explicit content
    /// parameters are untouched.
    pub fn reseed(&mut self, master: u64) {
        self.seed = master;
        self.model.seed = derive_seed(master, "model-init");
        for lang in &mut self.languages {
            lang.bigram_bias.common_seed = derive_seed(master, "bigram-common");
            lang.bigram_bias.lang_seed = derive_seed(master, &format!("bigram-{}", lang.id));
        }
        self.training.pretrain.seed = derive_seed(master, "pretrain");
        self.training.finetune.seed = derive_seed(master, "finetune");
        self.subjects.seed = derive_seed(master, "subjects");
        self.lesion.random_seed = derive_seed(master, "random-mask");
        self.geometry.probe.seed = derive_seed(master, "probe");
        self.geometry.seed = derive_seed(master, "geometry");
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.languages.len() != 3 {
            return Err(Error::config(format!(
                "exactly three languages required, got {}",
                self.languages.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for lang in &self.languages {
            lang.validate()?;
            if !seen.insert(lang.id.clone()) {
                return Err(Error::config(format!("duplicate language id {}", lang.id)));
            }
            for &t in &lang.private_vocab {
                if t as usize >= self.model.vocab_size {
                    return Err(Error::config("language token beyond model vocab"));
                }
            }
        }
        for (i, a) in self.languages.iter().enumerate() {
            for b in &self.languages[i + 1..] {
                if a.private_vocab.iter().any(|t| b.private_vocab.contains(t)) {
                    return Err(Error::config(format!(
                        "private vocabularies of {} and {} overlap",
                        a.id, b.id
                    )));
                }
            }
        }
        if !(self.lesion.fraction > 0.0 && self.lesion.fraction < 1.0) {
            return Err(Error::config("lesion fraction must lie in (0,1)"));
        }
        if self.lesion.components.is_empty() {
            return Err(Error::config("no lesionable components configured"));
        }
        if self.subjects.per_group == 0 {
            return Err(Error::config("need at least one subject per group"));
        }
        if self.subjects.n_runs < 2 {
            return Err(Error::config("subjects need at least 2 runs"));
        }
        if self.subjects.n_signal_voxels > self.subjects.n_voxels {
            return Err(Error::config("more signal voxels than voxels"));
        }
        if self.subjects.snr <= 0.0 {
            return Err(Error::config("snr must be positive"));
        }
        if self.encoding.tr_seconds <= 0.0 || self.encoding.lag_seconds < 0.0 {
            return Err(Error::config("invalid TR or lag"));
        }
        if self.encoding.lambda_grid.is_empty() {
            return Err(Error::config("empty lambda grid"));
        }
        if !(self.stats.fdr_q > 0.0 && self.stats.fdr_q < 1.0) {
            return Err(Error::config("fdr_q must lie in (0,1)"));
        }
        if self.stats.epsilon <= 0.0 {
            return Err(Error::config("epsilon must be positive"));
        }
        let g = &self.geometry;
        if g.train_frac <= 0.0 || g.dev_frac <= 0.0 || g.train_frac + g.dev_frac >= 1.0 {
            return Err(Error::config("probe split fractions must leave a test share"));
        }
        g.probe.validate()?;
        if g.length_bins == 0 || g.sample_per_language == 0 {
            return Err(Error::config("invalid geometry parameters"));
        }
        Ok(())
    }

    /// Hash of the canonical JSON form; identifies a configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize()[..8])
    }

    pub fn language_ids(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.id.clone()).collect()
    }

    /// All model variants evaluated by the experiment, intact first.
    pub fn variants(&self) -> Vec<String> {
        let mut v = vec!["intact".to_string(), "random".to_string(), "core".to_string()];
        for lang in &self.languages {
            v.push(format!("specific_{}", lang.id));
        }
        v
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn language_spec(id: &str, private_vocab: Vec<u32>, master: u64) -> SynthLanguageSpec {
    SynthLanguageSpec {
        id: id.to_string(),
        shared_vocab: (b'a'..=b'p').map(u32::from).collect(),
        private_vocab,
        bigram_bias: BigramBias {
            common_seed: derive_seed(master, "bigram-common"),
            lang_seed: derive_seed(master, &format!("bigram-{id}")),
            sharpness: 4.0,
            private_affinity: 0.6,
            shared_blend: 0.3,
        },
        sentence_len_dist: SentenceLenDist {
            space_hazard: 0.28,
            period_hazard: 0.035,
        },
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Pipeline stages in canonical execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Pretrain,
    Finetune,
    Importance,
    Masks,
    Ablate,
    Embed,
    Encode,
    Stats,
    Lpi,
    Geometry,
    Probe,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 13] = [
        Stage::Synth,
        Stage::Pretrain,
        Stage::Finetune,
        Stage::Importance,
        Stage::Masks,
        Stage::Ablate,
        Stage::Embed,
        Stage::Encode,
        Stage::Stats,
        Stage::Lpi,
        Stage::Geometry,
        Stage::Probe,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Importance => "importance",
            Stage::Masks => "masks",
            Stage::Ablate => "ablate",
            Stage::Embed => "embed",
            Stage::Encode => "encode",
            Stage::Stats => "stats",
            Stage::Lpi => "lpi",
            Stage::Geometry => "geometry",
            Stage::Probe => "probe",
            Stage::Report => "report",
        }
    }

    pub fn dependencies(&self) -> &'static [Stage] {
        match self {
            Stage::Synth => &[],
            Stage::Pretrain => &[Stage::Synth],
            Stage::Finetune => &[Stage::Synth, Stage::Pretrain],
            Stage::Importance => &[Stage::Pretrain, Stage::Finetune],
            Stage::Masks => &[Stage::Importance],
            Stage::Ablate => &[Stage::Pretrain, Stage::Masks],
            Stage::Embed => &[Stage::Synth, Stage::Ablate],
            Stage::Encode => &[Stage::Synth, Stage::Embed],
            Stage::Stats => &[Stage::Encode],
            Stage::Lpi => &[Stage::Stats],
            Stage::Geometry => &[Stage::Embed],
            Stage::Probe => &[Stage::Embed],
            Stage::Report => &[
                Stage::Masks,
                Stage::Embed,
                Stage::Encode,
                Stage::Stats,
                Stage::Lpi,
                Stage::Geometry,
                Stage::Probe,
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .iter()
            .copied()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config(format!("unknown stage '{s}'")))
    }
}

/// Runs the requested stages (in canonical order) against `out_dir`.
///
/// Completed stages with a matching config hash are skipped. A requested
/// stage whose dependency has neither run in this invocation nor completed
/// earlier is a dependency error.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    stages: &[Stage],
    out_dir: &Path,
) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let hash = cfg.hash();
    let manifest_path = out_dir.join("manifest.json");
    let mut manifest = RunManifest::load_or_new(&manifest_path, &hash)?;
    record_seeds(cfg, &mut manifest);
    cfg.save(&out_dir.join("config.json"))?;

    let requested: BTreeSet<Stage> = stages.iter().copied().collect();
    for stage in Stage::ALL {
        if !requested.contains(&stage) {
            continue;
        }
        if manifest.is_done(stage.name(), &hash) {
            continue;
        }
        for dep in stage.dependencies() {
            if !manifest.is_done(dep.name(), &hash) {
                return Err(Error::dependency(format!(
                    "stage '{stage}' needs '{dep}' (run it first or request it in --stages)"
                )));
            }
        }
        let artifacts = stages::run_stage(cfg, stage, out_dir)?;
        manifest.record(stage.name(), &hash, artifacts);
        manifest.save(&manifest_path)?;
    }
    manifest.save(&manifest_path)?;
    Ok(manifest)
}

fn record_seeds(cfg: &ExperimentConfig, manifest: &mut RunManifest) {
    manifest.seeds.insert("master".into(), cfg.seed);
    manifest.seeds.insert("model-init".into(), cfg.model.seed);
    manifest
        .seeds
        .insert("pretrain".into(), cfg.training.pretrain.seed);
    manifest
        .seeds
        .insert("finetune".into(), cfg.training.finetune.seed);
    manifest.seeds.insert("subjects".into(), cfg.subjects.seed);
    manifest
        .seeds
        .insert("random-mask".into(), cfg.lesion.random_seed);
    manifest.seeds.insert("probe".into(), cfg.geometry.probe.seed);
    manifest.seeds.insert("geometry".into(), cfg.geometry.seed);
}
