//! Stage implementations. Every stage reads its inputs from artifacts and
//! writes artifacts back, so stages are independently resumable.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{
    align_to_tr, apply_lag, cross_validated_encode, EmbeddingSeries, EncodingResult,
};
use crate::error::{Error, Result};
use crate::geometry::{
    pca_project, probe_train_eval, sentence_length_task, silhouette, LabeledEmbeddings, PcaModel,
};
use crate::lesion::{
    apply_lesion, core_score, importance, random_mask, select_topk, specificity_score,
    summarize_mask, LesionMask, MaskKind,
};
use crate::linalg::Mat;
use crate::microlm::{finetune_language, pretrain, GradAccumulator, TimedCorpus};
use crate::scalar::Scalar;
use crate::stats::{
    conjunction_mask, cross_model_average, fisher_z, lpi, minmax_rectify, one_sample_ttest,
    paired_ttest, roi_summary, StatMap, TTest,
};
use crate::synth::{contrastive_dims, gen_bold, gen_corpus, make_ground_truth, SynthSubjectSpec};

use super::artifacts::{self, Paths};
use super::{derive_seed, report, ExperimentConfig, Stage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectRow {
    pub language: String,
    pub index: usize,
    pub n_runs: usize,
    pub trs_per_run: usize,
    pub n_voxels: usize,
    pub snr: f64,
    pub seed: u64,
}

pub fn run_stage(cfg: &ExperimentConfig, stage: Stage, out_dir: &Path) -> Result<Vec<String>> {
    let paths = Paths::new(out_dir);
    match stage {
        Stage::Synth => stage_synth(cfg, &paths),
        Stage::Pretrain => stage_pretrain(cfg, &paths),
        Stage::Finetune => stage_finetune(cfg, &paths),
        Stage::Importance => stage_importance(cfg, &paths),
        Stage::Masks => stage_masks(cfg, &paths),
        Stage::Ablate => stage_ablate(cfg, &paths),
        Stage::Embed => stage_embed(cfg, &paths),
        Stage::Encode => stage_encode(cfg, &paths),
        Stage::Stats => stage_stats(cfg, &paths),
        Stage::Lpi => stage_lpi(cfg, &paths),
        Stage::Geometry => stage_geometry(cfg, &paths),
        Stage::Probe => stage_probe(cfg, &paths),
        Stage::Report => report::emit_report(cfg, &paths),
    }
}

fn rel(paths: &[std::path::PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn eval_tokens(cfg: &ExperimentConfig) -> usize {
    let duration =
        cfg.subjects.n_runs as f64 * cfg.subjects.trs_per_run as f64 * cfg.encoding.tr_seconds;
    (duration * cfg.corpus.token_rate).ceil() as usize
}

// ---------------------------------------------------------------- synth

fn stage_synth(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let mut artifacts = Vec::new();
    for lang in &cfg.languages {
        for (split, n_tokens) in [
            ("pretrain", cfg.corpus.pretrain_tokens),
            ("train", cfg.corpus.finetune_tokens),
            ("eval", eval_tokens(cfg)),
            ("probe", cfg.corpus.probe_tokens),
        ] {
            let seed = derive_seed(cfg.seed, &format!("corpus:{split}:{}", lang.id));
            let corpus = gen_corpus(lang, n_tokens, cfg.corpus.token_rate, seed)?;
            let csv = paths.corpus_csv(&lang.id, split);
            artifacts::ensure_parent(&csv)?;
            corpus.write_csv(&csv)?;
            let txt = paths.corpus_txt(&lang.id, split);
            artifacts::write_text(&txt, &corpus.to_text()?)?;
            artifacts.push(csv);
            artifacts.push(txt);
        }
    }

    let mut subjects = Vec::new();
    for lang in &cfg.languages {
        for i in 0..cfg.subjects.per_group {
            subjects.push(SubjectRow {
                language: lang.id.clone(),
                index: i,
                n_runs: cfg.subjects.n_runs,
                trs_per_run: cfg.subjects.trs_per_run,
                n_voxels: cfg.subjects.n_voxels,
                snr: cfg.subjects.snr,
                seed: derive_seed(cfg.subjects.seed, &format!("subject:{}:{i}", lang.id)),
            });
        }
    }
    artifacts::write_json(&paths.subjects_json(), &subjects)?;
    artifacts.push(paths.subjects_json());

    let mut rois: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    rois.insert(
        "signal".into(),
        (0..cfg.subjects.n_signal_voxels).collect(),
    );
    if cfg.subjects.n_signal_voxels < cfg.subjects.n_voxels {
        rois.insert(
            "null".into(),
            (cfg.subjects.n_signal_voxels..cfg.subjects.n_voxels).collect(),
        );
    }
    artifacts::write_json(&paths.rois_json(), &rois)?;
    artifacts.push(paths.rois_json());
    Ok(rel(&artifacts))
}

// ------------------------------------------------------------- pretrain

fn stage_pretrain(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let corpora: Vec<TimedCorpus> = cfg
        .languages
        .iter()
        .map(|l| artifacts::load_corpus(&paths.corpus_csv(&l.id, "pretrain")))
        .collect::<Result<_>>()?;
    let refs: Vec<&TimedCorpus> = corpora.iter().collect();
    let (model, losses) = pretrain::<f32>(&cfg.model, &refs, &cfg.training.pretrain)?;
    let dir = paths.model_dir("base");
    artifacts::save_store(model.params(), &dir)?;

    let mut curve = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        curve.push_str(&format!("{i},{l}\n"));
    }
    artifacts::write_text(&paths.pretrain_loss_csv(), &curve)?;
    Ok(rel(&[dir, paths.pretrain_loss_csv()]))
}

// ------------------------------------------------------------- finetune

fn stage_finetune(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let base = artifacts::load_model(&cfg.model, &paths.model_dir("base"))?;
    let mut out = Vec::new();
    for lang in &cfg.languages {
        let corpus = artifacts::load_corpus(&paths.corpus_csv(&lang.id, "train"))?;
        let mut opts = cfg.training.finetune.clone();
        opts.seed = derive_seed(cfg.training.finetune.seed, &lang.id);
        let (tuned, acc) = finetune_language(&base, &corpus, &opts)?;
        let tuned_dir = paths.model_dir(&format!("finetuned_{}", lang.id));
        artifacts::save_store(tuned.params(), &tuned_dir)?;
        let accum_dir = paths.model_dir(&format!("accum_{}", lang.id));
        artifacts::save_store(&acc.sums().cast::<f32>(), &accum_dir)?;
        artifacts::write_json(
            &paths.accum_meta(&lang.id),
            &serde_json::json!({ "steps": acc.step_count() }),
        )?;
        out.extend([tuned_dir, accum_dir, paths.accum_meta(&lang.id)]);
    }
    Ok(rel(&out))
}

// ----------------------------------------------------------- importance

fn stage_importance(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let base = artifacts::load_store(&paths.model_dir("base"))?;
    let mut maps = Vec::new();
    let mut out = Vec::new();
    for lang in &cfg.languages {
        let sums = artifacts::load_store(&paths.model_dir(&format!("accum_{}", lang.id)))?;
        let meta: serde_json::Value = artifacts::read_json(&paths.accum_meta(&lang.id))?;
        let steps = meta["steps"].as_u64().unwrap_or(0) as usize;
        let acc = GradAccumulator::from_parts(sums.cast::<f64>(), steps);
        let map = importance(lang.id.clone(), &base, &acc)?;
        let dir = paths.importance_dir(&format!("imp_{}", lang.id));
        artifacts::save_store(&map.scores.cast::<f32>(), &dir)?;
        out.push(dir);
        maps.push(map);
    }

    let core = core_score(&maps)?;
    let core_dir = paths.importance_dir("core");
    artifacts::save_store(&core.cast::<f32>(), &core_dir)?;
    out.push(core_dir);

    let components = cfg.lesion.components.iter().copied().collect();
    for (i, lang) in cfg.languages.iter().enumerate() {
        let spec = specificity_score(&maps, i, cfg.lesion.scope, &components)?;
        let dir = paths.importance_dir(&format!("specificity_{}", lang.id));
        artifacts::save_store(&spec.scores.cast::<f32>(), &dir)?;
        out.push(dir);
    }
    Ok(rel(&out))
}

// ---------------------------------------------------------------- masks

fn mask_kind_for(variant: &str, cfg: &ExperimentConfig) -> MaskKind {
    if variant == "core" {
        MaskKind::Core
    } else if variant == "random" {
        MaskKind::Random(cfg.lesion.random_seed)
    } else {
        MaskKind::Specific(variant.trim_start_matches("specific_").to_string())
    }
}

fn load_mask(cfg: &ExperimentConfig, paths: &Paths, variant: &str) -> Result<LesionMask> {
    let store = artifacts::load_store(&paths.mask_dir(variant))?;
    Ok(LesionMask::from_store(
        mask_kind_for(variant, cfg),
        cfg.lesion.fraction,
        &store,
    ))
}

fn stage_masks(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let components = cfg.lesion.components.iter().copied().collect();
    let core_scores = artifacts::load_store(&paths.importance_dir("core"))?.cast::<f64>();
    let core = select_topk(
        &core_scores,
        cfg.lesion.fraction,
        cfg.lesion.scope,
        &components,
        MaskKind::Core,
    )?;

    let mut masks: Vec<(String, LesionMask)> = vec![("core".into(), core.clone())];
    for lang in &cfg.languages {
        let scores =
            artifacts::load_store(&paths.importance_dir(&format!("specificity_{}", lang.id)))?
                .cast::<f64>();
        let mask = select_topk(
            &scores,
            cfg.lesion.fraction,
            cfg.lesion.scope,
            &components,
            MaskKind::Specific(lang.id.clone()),
        )?;
        masks.push((format!("specific_{}", lang.id), mask));
    }
    masks.push((
        "random".into(),
        random_mask(
            &core_scores,
            cfg.lesion.fraction,
            cfg.lesion.random_seed,
            cfg.lesion.scope,
            &components,
        )?,
    ));

    let mut out = Vec::new();
    for (variant, mask) in &masks {
        let dir = paths.mask_dir(variant);
        artifacts::save_store(&mask.to_store(), &dir)?;
        out.push(dir);

        let rows = summarize_mask(&core_scores, mask, &core, cfg.lesion.scope, &components)?;
        let mut csv = String::from("layer,component,group_size,selected,overlap_with_core\n");
        for r in rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.layer, r.component, r.group_size, r.selected, r.overlap_with_core
            ));
        }
        let csv_path = paths.mask_summary_csv(variant);
        artifacts::write_text(&csv_path, &csv)?;
        out.push(csv_path);
    }
    Ok(rel(&out))
}

// --------------------------------------------------------------- ablate

fn stage_ablate(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let base = artifacts::load_store(&paths.model_dir("base"))?;
    let mut out = Vec::new();
    for variant in cfg.variants() {
        let store = if variant == "intact" {
            base.clone()
        } else {
            let mask = load_mask(cfg, paths, &variant)?;
            apply_lesion(&base, &mask)?
        };
        let dir = paths.model_dir(&format!("variant_{variant}"));
        artifacts::save_store(&store, &dir)?;
        out.push(dir);
    }
    Ok(rel(&out))
}

// ---------------------------------------------------------------- embed

fn stage_embed(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let ctx = cfg.model.context_len;
    let mut ppl_rows = String::from("variant,language,perplexity\n");
    for variant in cfg.variants() {
        let model = artifacts::load_model(&cfg.model, &paths.model_dir(&format!("variant_{variant}")))?;
        for lang in &cfg.languages {
            let corpus = artifacts::load_corpus(&paths.corpus_csv(&lang.id, "eval"))?;
            let table = model.extract_embeddings(&corpus, ctx)?;
            let dir = paths.embedding_dir(&variant, &lang.id);
            artifacts::save_embeddings(&table, &dir)?;
            out.push(dir);
            if variant == "intact" {
                let meta = paths.embedding_meta_csv(&lang.id);
                artifacts::write_embedding_meta(&table, &meta)?;
                out.push(meta);
            }
            let ppl = model.perplexity(&corpus, ctx)?;
            ppl_rows.push_str(&format!("{variant},{},{ppl}\n", lang.id));

            let probe_corpus = artifacts::load_corpus(&paths.corpus_csv(&lang.id, "probe"))?;
            let probe_table = model.extract_embeddings(&probe_corpus, ctx)?;
            let probe_dir = paths.probe_embedding_dir(&variant, &lang.id);
            artifacts::save_embeddings(&probe_table, &probe_dir)?;
            out.push(probe_dir);
            if variant == "intact" {
                let meta = paths.probe_embedding_meta_csv(&lang.id);
                artifacts::write_embedding_meta(&probe_table, &meta)?;
                out.push(meta);
            }
        }
    }
    artifacts::write_text(&paths.perplexity_csv(), &ppl_rows)?;
    out.push(paths.perplexity_csv());

    // held-out sample for picking language-contrastive dimensions
    let intact = artifacts::load_model(&cfg.model, &paths.model_dir("variant_intact"))?;
    for lang in &cfg.languages {
        let corpus = artifacts::load_corpus(&paths.corpus_csv(&lang.id, "train"))?;
        let horizon = cfg.corpus.contrast_tokens as f64 / cfg.corpus.token_rate;
        let slice = corpus.slice_by_time(0.0, horizon);
        let table = intact.extract_embeddings(&slice, ctx)?;
        let dir = paths.contrast_dir(&lang.id);
        artifacts::save_embeddings(&table, &dir)?;
        out.push(dir);
    }
    Ok(rel(&out))
}

// --------------------------------------------------------------- encode

/// Splits a language's token embeddings into per-run TR-aligned matrices.
fn tr_aligned_runs(
    vectors: &Mat<f64>,
    onsets: &[f64],
    cfg: &ExperimentConfig,
) -> Result<Vec<Mat<f64>>> {
    let run_dur = cfg.subjects.trs_per_run as f64 * cfg.encoding.tr_seconds;
    let mut runs = Vec::with_capacity(cfg.subjects.n_runs);
    for r in 0..cfg.subjects.n_runs {
        let t0 = r as f64 * run_dur;
        let t1 = t0 + run_dur;
        let idx: Vec<usize> = onsets
            .iter()
            .enumerate()
            .filter(|(_, &o)| o >= t0 && o < t1)
            .map(|(i, _)| i)
            .collect();
        let mut sub = Mat::zeros(idx.len(), vectors.cols);
        let mut sub_onsets = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            sub.row_mut(row).copy_from_slice(vectors.row(i));
            sub_onsets.push(onsets[i] - t0);
        }
        runs.push(align_to_tr(
            &sub,
            &sub_onsets,
            cfg.encoding.tr_seconds,
            cfg.subjects.trs_per_run,
        )?);
    }
    Ok(runs)
}

fn load_aligned_runs(
    cfg: &ExperimentConfig,
    paths: &Paths,
    variant: &str,
    lang: &str,
) -> Result<Vec<Mat<f64>>> {
    let vectors = artifacts::load_embedding_matrix(&paths.embedding_dir(variant, lang))?.cast::<f64>();
    let meta = artifacts::read_embedding_meta(&paths.embedding_meta_csv(lang))?;
    tr_aligned_runs(&vectors, &meta.onsets, cfg)
}

fn write_encoding_csvs(
    paths: &Paths,
    variant: &str,
    lang: &str,
    subject: usize,
    res: &EncodingResult<f64>,
) -> Result<Vec<std::path::PathBuf>> {
    let mut per_fold = String::from("voxel,fold,r\n");
    for f in 0..res.r_per_fold.rows {
        for v in 0..res.r_per_fold.cols {
            per_fold.push_str(&format!("{v},{f},{}\n", res.r_per_fold.at(f, v)));
        }
    }
    let p1 = paths.encode_csv(variant, lang, subject);
    artifacts::write_text(&p1, &per_fold)?;

    let mut summary = String::from("voxel,r_mean,lambda,degenerate_flag\n");
    let folds = res.lambda_per_fold.rows as f64;
    for v in 0..res.r_mean.len() {
        let lam_mean: f64 = (0..res.lambda_per_fold.rows)
            .map(|f| res.lambda_per_fold.at(f, v))
            .sum::<f64>()
            / folds;
        summary.push_str(&format!(
            "{v},{},{lam_mean},{}\n",
            res.r_mean[v], res.degenerate[v] as u8
        ));
    }
    let p2 = paths.encode_summary_csv(variant, lang, subject);
    artifacts::write_text(&p2, &summary)?;
    Ok(vec![p1, p2])
}

fn stage_encode(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let mut out = Vec::new();

    // contrastive dims from the intact held-out sample
    let contrast: Vec<Mat<f64>> = cfg
        .languages
        .iter()
        .map(|l| {
            artifacts::load_embedding_matrix(&paths.contrast_dir(&l.id))
                .map(|m| m.cast::<f64>())
        })
        .collect::<Result<_>>()?;
    let contrast_refs: Vec<&Mat<f64>> = contrast.iter().collect();
    let dims = contrastive_dims(&contrast_refs, cfg.subjects.contrast_dims)?;
    artifacts::write_json(&paths.contrast_dims_json(), &dims)?;
    out.push(paths.contrast_dims_json());

    let subjects: Vec<SubjectRow> = artifacts::read_json(&paths.subjects_json())?;
    let variants = cfg.variants();

    for lang in &cfg.languages {
        // TR-aligned feature runs per variant
        let mut variant_runs: BTreeMap<String, Vec<Mat<f64>>> = BTreeMap::new();
        for variant in &variants {
            variant_runs.insert(
                variant.clone(),
                load_aligned_runs(cfg, paths, variant, &lang.id)?,
            );
        }
        let intact_series = EmbeddingSeries {
            runs: variant_runs["intact"].clone(),
            tr_seconds: cfg.encoding.tr_seconds,
            lag_seconds: cfg.encoding.lag_seconds,
        };

        for subject in subjects.iter().filter(|s| s.language == lang.id) {
            let w = make_ground_truth(
                subject.n_voxels,
                cfg.model.dim,
                cfg.subjects.n_signal_voxels,
                &dims,
                derive_seed(subject.seed, "ground-truth"),
            );
            let spec = SynthSubjectSpec {
                language: subject.language.clone(),
                n_runs: subject.n_runs,
                trs_per_run: subject.trs_per_run,
                n_voxels: subject.n_voxels,
                snr: subject.snr,
                ground_truth_w: w,
                seed: derive_seed(subject.seed, "noise"),
            };
            let bold = gen_bold(&spec, &intact_series)?;
            let bold_dir = paths.bold_dir(&lang.id, subject.index);
            artifacts::save_runs(&bold.runs, &bold_dir)?;
            let w_dir = paths.ground_truth_dir(&lang.id, subject.index);
            artifacts::save_runs(&[spec.ground_truth_w.clone()], &w_dir)?;
            out.push(bold_dir);
            out.push(w_dir);

            for variant in &variants {
                let x_runs = &variant_runs[variant];
                let mut xs = Vec::with_capacity(x_runs.len());
                let mut ys = Vec::with_capacity(x_runs.len());
                for (x, y) in x_runs.iter().zip(&bold.runs) {
                    let (xa, ya) =
                        apply_lag(x, y, cfg.encoding.lag_seconds, cfg.encoding.tr_seconds)?;
                    xs.push(xa);
                    ys.push(ya);
                }
                let res = cross_validated_encode(
                    &xs,
                    &ys,
                    &cfg.encoding.lambda_grid,
                    cfg.encoding.lambda_mode,
                )?;
                out.extend(write_encoding_csvs(
                    paths,
                    variant,
                    &lang.id,
                    subject.index,
                    &res,
                )?);
            }
        }
    }
    Ok(rel(&out))
}

// ---------------------------------------------------------------- stats

pub fn read_encode_summary(path: &Path) -> Result<Vec<f64>> {
    let text = artifacts::read_text(path)?;
    let mut r = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = || Error::format(format!("{}:{}: bad row", path.display(), i + 1));
        let _voxel: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        r.push(parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?);
    }
    Ok(r)
}

/// Per-subject r_mean rows for one (variant, language).
fn group_r_matrix(
    cfg: &ExperimentConfig,
    paths: &Paths,
    subjects: &[SubjectRow],
    variant: &str,
    lang: &str,
) -> Result<Vec<Vec<f64>>> {
    let _ = cfg;
    subjects
        .iter()
        .filter(|s| s.language == lang)
        .map(|s| read_encode_summary(&paths.encode_summary_csv(variant, lang, s.index)))
        .collect()
}

fn write_stat_map_csv(path: &Path, map: &StatMap) -> Result<()> {
    let mut csv = String::from("voxel,t,p,q,sig\n");
    for v in 0..map.t.len() {
        csv.push_str(&format!(
            "{v},{},{},{},{}\n",
            map.t[v], map.p[v], map.q[v], map.sig[v] as u8
        ));
    }
    artifacts::write_text(path, &csv)
}

pub fn read_stat_map_csv(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let text = artifacts::read_text(path)?;
    let mut t = Vec::new();
    let mut sig = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::format(format!("{}:{}: bad row", path.display(), i + 1)));
        }
        t.push(parts[1].parse().map_err(|_| {
            Error::format(format!("{}:{}: bad t", path.display(), i + 1))
        })?);
        sig.push(parts[4] == "1");
    }
    Ok((t, sig))
}

fn fisher_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&v| fisher_z(v)).collect())
        .collect()
}

fn per_voxel_tests<F: Fn(usize) -> Result<TTest>>(n_voxels: usize, f: F) -> Result<Vec<TTest>> {
    (0..n_voxels).map(f).collect()
}

fn stage_stats(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let subjects: Vec<SubjectRow> = artifacts::read_json(&paths.subjects_json())?;
    let n_voxels = cfg.subjects.n_voxels;
    let mut out = Vec::new();
    let mut intact_sig: Vec<Vec<bool>> = Vec::new();

    let lesioned: Vec<String> = cfg
        .variants()
        .into_iter()
        .filter(|v| v != "intact")
        .collect();

    let rois: BTreeMap<String, Vec<usize>> = artifacts::read_json(&paths.rois_json())?;
    let mut roi_csv = String::from("variant,language,roi,mean_r\n");

    for lang in &cfg.languages {
        let intact_r = group_r_matrix(cfg, paths, &subjects, "intact", &lang.id)?;
        let intact_f = fisher_rows(&intact_r);

        // one-sample t against zero on Fisher-transformed correlations
        let tests = per_voxel_tests(n_voxels, |v| {
            let x: Vec<f64> = intact_f.iter().map(|row| row[v]).collect();
            one_sample_ttest(&x, 0.0)
        })?;
        let map = StatMap::from_tests(&tests, cfg.stats.fdr_q, cfg.stats.fdr_method)?;
        write_stat_map_csv(&paths.onesample_csv(&lang.id), &map)?;
        out.push(paths.onesample_csv(&lang.id));
        intact_sig.push(map.sig.clone());

        // paired intact-vs-lesion maps
        for variant in &lesioned {
            let les_r = group_r_matrix(cfg, paths, &subjects, variant, &lang.id)?;
            let les_f = fisher_rows(&les_r);
            let tests = per_voxel_tests(n_voxels, |v| {
                let a: Vec<f64> = intact_f.iter().map(|row| row[v]).collect();
                let b: Vec<f64> = les_f.iter().map(|row| row[v]).collect();
                paired_ttest(&a, &b)
            })?;
            let map = StatMap::from_tests(&tests, cfg.stats.fdr_q, cfg.stats.fdr_method)?;
            write_stat_map_csv(&paths.paired_csv(variant, &lang.id), &map)?;
            out.push(paths.paired_csv(variant, &lang.id));
        }

        // ROI means per variant, averaged over subjects
        for variant in cfg.variants() {
            let rows = group_r_matrix(cfg, paths, &subjects, &variant, &lang.id)?;
            let mut acc: BTreeMap<String, f64> = rois.keys().map(|k| (k.clone(), 0.0)).collect();
            for row in &rows {
                for (name, mean) in roi_summary(row, &rois)? {
                    *acc.get_mut(&name).unwrap() += mean;
                }
            }
            for (name, total) in acc {
                roi_csv.push_str(&format!(
                    "{variant},{},{name},{}\n",
                    lang.id,
                    total / rows.len().max(1) as f64
                ));
            }
        }
    }

    // conjunction of per-language intact significance
    let sig_refs: Vec<&[bool]> = intact_sig.iter().map(|v| v.as_slice()).collect();
    let conj = conjunction_mask(&sig_refs)?;
    let mut conj_csv = String::from("voxel");
    for lang in &cfg.languages {
        conj_csv.push_str(&format!(",sig_{}", lang.id));
    }
    conj_csv.push_str(",conjunction\n");
    for v in 0..n_voxels {
        conj_csv.push_str(&v.to_string());
        for sig in &intact_sig {
            conj_csv.push_str(&format!(",{}", sig[v] as u8));
        }
        conj_csv.push_str(&format!(",{}\n", conj[v] as u8));
    }
    artifacts::write_text(&paths.conjunction_csv(), &conj_csv)?;
    out.push(paths.conjunction_csv());

    artifacts::write_text(&paths.roi_summary_csv(), &roi_csv)?;
    out.push(paths.roi_summary_csv());
    Ok(rel(&out))
}

// ------------------------------------------------------------------ lpi

fn stage_lpi(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let ids = cfg.language_ids();
    for (li, lang) in ids.iter().enumerate() {
        // the three specific-lesion t-maps within this participant group
        let mut norm_maps = Vec::new();
        let mut matched_sig = Vec::new();
        for target in &ids {
            let (t, sig) = read_stat_map_csv(&paths.paired_csv(&format!("specific_{target}"), lang))?;
            norm_maps.push(minmax_rectify(&t)?);
            if target == lang {
                matched_sig = sig;
            }
        }
        let others: Vec<usize> = (0..ids.len()).filter(|&i| i != li).collect();
        let map = lpi(
            lang.clone(),
            &norm_maps[li],
            (&norm_maps[others[0]], &norm_maps[others[1]]),
            cfg.stats.epsilon,
            &matched_sig,
        )?;

        let mut csv = String::from("voxel,lpi\n");
        for (v, (&val, &def)) in map.values.iter().zip(&map.defined).enumerate() {
            if def {
                csv.push_str(&format!("{v},{val}\n"));
            }
        }
        artifacts::write_text(&paths.lpi_csv(lang), &csv)?;
        out.push(paths.lpi_csv(lang));

        // cross-model average (a single model at desk scale)
        let avg = cross_model_average(std::slice::from_ref(&map))?;
        let mut csv = String::from("voxel,lpi\n");
        for (v, (&val, &def)) in avg.values.iter().zip(&avg.defined).enumerate() {
            if def {
                csv.push_str(&format!("{v},{val}\n"));
            }
        }
        artifacts::write_text(&paths.lpi_avg_csv(lang), &csv)?;
        out.push(paths.lpi_avg_csv(lang));
    }
    Ok(rel(&out))
}

// ------------------------------------------------------------- geometry

/// Seeded token sample per language, identical across variants.
fn geometry_sample_indices(
    cfg: &ExperimentConfig,
    paths: &Paths,
    lang: &str,
) -> Result<Vec<usize>> {
    let meta = artifacts::read_embedding_meta(&paths.embedding_meta_csv(lang))?;
    let n = meta.onsets.len();
    let take = cfg.geometry.sample_per_language.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.geometry.seed, &format!("sample:{lang}")));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(take);
    idx.sort_unstable();
    Ok(idx)
}

fn stage_geometry(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let samples: Vec<(String, Vec<usize>)> = cfg
        .languages
        .iter()
        .map(|l| Ok((l.id.clone(), geometry_sample_indices(cfg, paths, &l.id)?)))
        .collect::<Result<_>>()?;

    let mut sil_csv = String::from("variant,space,silhouette\n");
    for variant in cfg.variants() {
        let mut rows: Vec<Vec<f32>> = Vec::new();
        let mut labels = Vec::new();
        for (li, (lang, idx)) in samples.iter().enumerate() {
            let m = artifacts::load_embedding_matrix(&paths.embedding_dir(&variant, lang))?;
            for &i in idx {
                rows.push(m.row(i).to_vec());
                labels.push(li);
            }
        }
        let dim = rows[0].len();
        let mut x = Mat::<f64>::zeros(rows.len(), dim);
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                *x.at_mut(r, c) = v as f64;
            }
        }
        let raw = silhouette(&x, &labels)?;
        sil_csv.push_str(&format!("{variant},raw,{raw}\n"));

        let k = cfg.geometry.pca_dims.min(dim).min(x.rows - 1);
        let proj = pca_project(&x, k)?;
        let pca_score = silhouette(&proj, &labels)?;
        sil_csv.push_str(&format!("{variant},pca{k},{pca_score}\n"));

        // 2-d projection dump for external plotting
        let p2 = PcaModel::fit(&x, cfg.geometry.projection_dims.min(dim))?.project(&x);
        let mut proj_csv = String::from("x,y,label\n");
        for r in 0..p2.rows {
            let y = if p2.cols > 1 { p2.at(r, 1) } else { 0.0 };
            proj_csv.push_str(&format!("{},{y},{}\n", p2.at(r, 0), labels[r]));
        }
        artifacts::write_text(&paths.projection_csv(&variant), &proj_csv)?;
        out.push(paths.projection_csv(&variant));
    }
    artifacts::write_text(&paths.silhouette_csv(), &sil_csv)?;
    out.push(paths.silhouette_csv());
    Ok(rel(&out))
}

// ---------------------------------------------------------------- probe

/// Stratified sentence split shared across variants.
fn stratified_split(
    labels: &[usize],
    train_frac: f64,
    dev_frac: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    let mut pair_parity = false;
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n = idx.len();
        // classes with >= 3 members feed every split; two-member classes
        // alternate their second member between dev and test; singletons go
        // to train so the probe can always be fit
        let (n_train, n_dev) = match n {
            1 => (1, 0),
            2 => {
                pair_parity = !pair_parity;
                (1, if pair_parity { 1 } else { 0 })
            }
            _ => {
                let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 2);
                let n_dev = ((n as f64 * dev_frac).round() as usize).clamp(1, n - 1 - n_train);
                (n_train, n_dev)
            }
        };
        train.extend(&idx[..n_train]);
        dev.extend(&idx[n_train..n_train + n_dev]);
        test.extend(&idx[n_train + n_dev..]);
    }
    // degenerate label distributions can starve a split; backfill from train
    // elements whose class keeps at least one train member
    for target in [&mut dev, &mut test] {
        if !target.is_empty() || train.len() < 2 {
            continue;
        }
        let movable = train.iter().rposition(|&i| {
            train.iter().filter(|&&j| labels[j] == labels[i]).count() >= 2
        });
        if let Some(pos) = movable {
            target.push(train.remove(pos));
        }
    }
    train.sort_unstable();
    dev.sort_unstable();
    test.sort_unstable();
    (train, dev, test)
}

fn take_rows<S: Scalar>(data: &LabeledEmbeddings<S>, idx: &[usize]) -> LabeledEmbeddings<S> {
    let mut m = Mat::zeros(idx.len(), data.vectors.cols);
    let mut labels = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(data.vectors.row(i));
        labels.push(data.labels[i]);
    }
    LabeledEmbeddings::new(m, labels).expect("consistent rows")
}

fn stage_probe(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let mut csv = String::from("task,language,model_variant,accuracy,precision,recall,f1\n");
    for lang in &cfg.languages {
        let meta = artifacts::read_embedding_meta(&paths.probe_embedding_meta_csv(&lang.id))?;
        let mut split: Option<(Vec<usize>, Vec<usize>, Vec<usize>)> = None;
        for variant in cfg.variants() {
            let m = artifacts::load_embedding_matrix(&paths.probe_embedding_dir(&variant, &lang.id))?
                .cast::<f64>();
            let task = sentence_length_task(&m, &meta.sentence_id, cfg.geometry.length_bins)?;
            // sentence counts are a corpus property, so the label vector is
            // identical across variants and the split can be shared
            let (train_idx, dev_idx, test_idx) = split.get_or_insert_with(|| {
                stratified_split(
                    &task.labels,
                    cfg.geometry.train_frac,
                    cfg.geometry.dev_frac,
                    derive_seed(cfg.geometry.seed, &format!("probe-split:{}", lang.id)),
                )
            });
            let mut probe_cfg = cfg.geometry.probe.clone();
            probe_cfg.seed = derive_seed(cfg.geometry.probe.seed, &lang.id);
            let metrics = probe_train_eval(
                &take_rows(&task, train_idx),
                &take_rows(&task, dev_idx),
                &take_rows(&task, test_idx),
                &probe_cfg,
            )?;
            csv.push_str(&format!(
                "sentence_length,{},{variant},{},{},{},{}\n",
                lang.id,
                metrics.accuracy,
                metrics.macro_precision,
                metrics.macro_recall,
                metrics.macro_f1
            ));
        }
    }
    artifacts::write_text(&paths.probe_metrics_csv(), &csv)?;
    Ok(rel(&[paths.probe_metrics_csv()]))
}
