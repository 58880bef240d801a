//! Artifact layout under the output directory plus small IO helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::microlm::{EmbeddingTable, Model, ModelConfig, TimedCorpus};
use crate::tensorio::{read_archive, write_archive, NamedTensor, TensorStore};

pub struct Paths {
    root: PathBuf,
}

impl Paths {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    fn sub(&self, dir: &str, name: String) -> PathBuf {
        self.root.join(dir).join(name)
    }

    pub fn corpus_csv(&self, lang: &str, split: &str) -> PathBuf {
        self.sub("synth", format!("corpus_{lang}_{split}.csv"))
    }

    pub fn corpus_txt(&self, lang: &str, split: &str) -> PathBuf {
        self.sub("synth", format!("corpus_{lang}_{split}.txt"))
    }

    pub fn subjects_json(&self) -> PathBuf {
        self.sub("synth", "subjects.json".into())
    }

    pub fn rois_json(&self) -> PathBuf {
        self.sub("synth", "rois.json".into())
    }

    pub fn model_dir(&self, name: &str) -> PathBuf {
        self.sub("models", name.to_string())
    }

    pub fn pretrain_loss_csv(&self) -> PathBuf {
        self.sub("models", "pretrain_loss.csv".into())
    }

    pub fn accum_meta(&self, lang: &str) -> PathBuf {
        self.sub("models", format!("accum_{lang}_meta.json"))
    }

    pub fn importance_dir(&self, name: &str) -> PathBuf {
        self.sub("importance", name.to_string())
    }

    pub fn mask_dir(&self, variant: &str) -> PathBuf {
        self.sub("masks", format!("mask_{variant}"))
    }

    pub fn mask_summary_csv(&self, variant: &str) -> PathBuf {
        self.sub("masks", format!("summary_{variant}.csv"))
    }

    pub fn embedding_dir(&self, variant: &str, lang: &str) -> PathBuf {
        self.sub("embed", format!("emb_{variant}_{lang}"))
    }

    pub fn embedding_meta_csv(&self, lang: &str) -> PathBuf {
        self.sub("embed", format!("meta_{lang}.csv"))
    }

    pub fn contrast_dir(&self, lang: &str) -> PathBuf {
        self.sub("embed", format!("contrast_{lang}"))
    }

    pub fn probe_embedding_dir(&self, variant: &str, lang: &str) -> PathBuf {
        self.sub("embed", format!("probe_{variant}_{lang}"))
    }

    pub fn probe_embedding_meta_csv(&self, lang: &str) -> PathBuf {
        self.sub("embed", format!("probe_meta_{lang}.csv"))
    }

    pub fn perplexity_csv(&self) -> PathBuf {
        self.sub("embed", "perplexity.csv".into())
    }

    pub fn contrast_dims_json(&self) -> PathBuf {
        self.sub("encode", "contrast_dims.json".into())
    }

    pub fn bold_dir(&self, lang: &str, subject: usize) -> PathBuf {
        self.sub("bold", format!("subject_{lang}{subject}"))
    }

    pub fn ground_truth_dir(&self, lang: &str, subject: usize) -> PathBuf {
        self.sub("bold", format!("w_{lang}{subject}"))
    }

    pub fn encode_csv(&self, variant: &str, lang: &str, subject: usize) -> PathBuf {
        self.sub("encode", format!("enc_{variant}_{lang}_s{subject}.csv"))
    }

    pub fn encode_summary_csv(&self, variant: &str, lang: &str, subject: usize) -> PathBuf {
        self.sub(
            "encode",
            format!("enc_{variant}_{lang}_s{subject}_summary.csv"),
        )
    }

    pub fn onesample_csv(&self, lang: &str) -> PathBuf {
        self.sub("stats", format!("onesample_{lang}.csv"))
    }

    pub fn conjunction_csv(&self) -> PathBuf {
        self.sub("stats", "conjunction.csv".into())
    }

    pub fn paired_csv(&self, variant: &str, lang: &str) -> PathBuf {
        self.sub("stats", format!("paired_{variant}_{lang}.csv"))
    }

    pub fn roi_summary_csv(&self) -> PathBuf {
        self.sub("stats", "roi_summary.csv".into())
    }

    pub fn lpi_csv(&self, lang: &str) -> PathBuf {
        self.sub("lpi", format!("lpi_{lang}.csv"))
    }

    pub fn lpi_avg_csv(&self, lang: &str) -> PathBuf {
        self.sub("lpi", format!("lpi_avg_{lang}.csv"))
    }

    pub fn silhouette_csv(&self) -> PathBuf {
        self.sub("geometry", "silhouette.csv".into())
    }

    pub fn projection_csv(&self, variant: &str) -> PathBuf {
        self.sub("geometry", format!("projection_{variant}.csv"))
    }

    pub fn probe_metrics_csv(&self) -> PathBuf {
        self.sub("probe", "probe_metrics.csv".into())
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn report_file(&self, name: &str) -> PathBuf {
        self.report_dir().join(name)
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::dependency(format!("missing artifact {}: {e}", path.display()))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub fn save_store(store: &TensorStore<f32>, dir: &Path) -> Result<()> {
    ensure_parent(dir)?;
    write_archive(store, dir)
}

pub fn load_store(dir: &Path) -> Result<TensorStore<f32>> {
    if !dir.join("manifest.json").exists() {
        return Err(Error::dependency(format!(
            "missing archive {}",
            dir.display()
        )));
    }
    read_archive(dir)
}

pub fn load_model(cfg: &ModelConfig, dir: &Path) -> Result<Model<f32>> {
    Model::from_params(cfg.clone(), load_store(dir)?)
}

/// Saves an embedding table: one `[n, dim]` tensor named `embeddings`.
pub fn save_embeddings(table: &EmbeddingTable<f32>, dir: &Path) -> Result<()> {
    let mut store = TensorStore::new();
    store.insert(NamedTensor::new(
        "embeddings",
        vec![table.vectors.rows, table.vectors.cols],
        table.vectors.data.clone(),
    )?)?;
    save_store(&store, dir)
}

pub fn load_embedding_matrix(dir: &Path) -> Result<Mat<f32>> {
    let store = load_store(dir)?;
    let t = store.require("embeddings")?;
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    Ok(Mat::from_vec(rows, cols, t.data().to_vec()))
}

/// Token metadata shared by all variants of one language's embeddings.
pub fn write_embedding_meta(table: &EmbeddingTable<f32>, path: &Path) -> Result<()> {
    let mut out = String::from("token_index,onset_seconds,sentence_id\n");
    for i in 0..table.vectors.rows {
        out.push_str(&format!(
            "{},{},{}\n",
            table.token_index[i], table.onsets[i], table.sentence_id[i]
        ));
    }
    write_text(path, &out)
}

pub struct EmbeddingMeta {
    pub onsets: Vec<f64>,
    pub sentence_id: Vec<usize>,
}

pub fn read_embedding_meta(path: &Path) -> Result<EmbeddingMeta> {
    let text = read_text(path)?;
    let mut onsets = Vec::new();
    let mut sentence_id = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::format(format!("{}:{}: bad row", path.display(), i + 1));
        let _token: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        onsets.push(parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?);
        sentence_id.push(parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?);
    }
    Ok(EmbeddingMeta {
        onsets,
        sentence_id,
    })
}

pub fn load_corpus(path: &Path) -> Result<TimedCorpus> {
    if !path.exists() {
        return Err(Error::dependency(format!(
            "missing corpus {}",
            path.display()
        )));
    }
    TimedCorpus::read_csv(path)
}

/// Saves per-run matrices as tensors `run0..runN`.
pub fn save_runs(runs: &[Mat<f64>], dir: &Path) -> Result<()> {
    let mut store = TensorStore::new();
    for (i, run) in runs.iter().enumerate() {
        store.insert(NamedTensor::new(
            format!("run{i}"),
            vec![run.rows, run.cols],
            run.data.iter().map(|&v| v as f32).collect(),
        )?)?;
    }
    save_store(&store, dir)
}
