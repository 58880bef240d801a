//! Report emission: plot-ready CSV tables and a Markdown summary distilled
//! from the stage artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::Result;

use super::artifacts::{self, Paths};
use super::stages::{read_encode_summary, read_stat_map_csv, SubjectRow};
use super::ExperimentConfig;

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Voxel-mean r per subject for one (variant, language).
fn subject_means(
    paths: &Paths,
    subjects: &[SubjectRow],
    variant: &str,
    lang: &str,
) -> Result<Vec<f64>> {
    subjects
        .iter()
        .filter(|s| s.language == lang)
        .map(|s| Ok(mean(&read_encode_summary(&paths.encode_summary_csv(variant, lang, s.index))?)))
        .collect()
}

fn read_perplexities(paths: &Paths) -> Result<BTreeMap<(String, String), f64>> {
    let text = artifacts::read_text(&paths.perplexity_csv())?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        out.insert(
            (parts[0].to_string(), parts[1].to_string()),
            parts[2].parse().unwrap_or(f64::NAN),
        );
    }
    Ok(out)
}

fn read_silhouettes(paths: &Paths) -> Result<Vec<(String, String, f64)>> {
    let text = artifacts::read_text(&paths.silhouette_csv())?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        out.push((
            parts[0].to_string(),
            parts[1].to_string(),
            parts[2].parse().unwrap_or(f64::NAN),
        ));
    }
    Ok(out)
}

pub fn emit_report(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<String>> {
    let subjects: Vec<SubjectRow> = artifacts::read_json(&paths.subjects_json())?;
    let variants = cfg.variants();
    let ids = cfg.language_ids();
    let mut written = Vec::new();

    // per-variant mean encoding correlation
    let mut table = String::from("language,variant,mean_r\n");
    let mut group_means: BTreeMap<(String, String), f64> = BTreeMap::new();
    for lang in &ids {
        for variant in &variants {
            let per_subject = subject_means(paths, &subjects, variant, lang)?;
            let m = mean(&per_subject);
            group_means.insert((lang.clone(), variant.clone()), m);
            table.push_str(&format!("{lang},{variant},{m}\n"));
        }
    }
    let p = paths.report_file("variant_mean_r.csv");
    artifacts::write_text(&p, &table)?;
    written.push(p);

    // intact vs random vs core, one file per language, subject-level rows
    for lang in &ids {
        let mut csv = String::from("variant,subject,mean_r\n");
        for variant in ["intact", "random", "core"] {
            for (si, m) in subject_means(paths, &subjects, variant, lang)?
                .iter()
                .enumerate()
            {
                csv.push_str(&format!("{variant},{si},{m}\n"));
            }
        }
        let p = paths.report_file(&format!("core_contrast_{lang}.csv"));
        artifacts::write_text(&p, &csv)?;
        written.push(p);
    }

    // paired-test summaries per lesion variant
    for lang in &ids {
        let mut csv = String::from("variant,mean_t,n_sig,frac_sig\n");
        for variant in variants.iter().filter(|v| *v != "intact") {
            let (t, sig) = read_stat_map_csv(&paths.paired_csv(variant, lang))?;
            let finite: Vec<f64> = t.iter().copied().filter(|v| v.is_finite()).collect();
            let n_sig = sig.iter().filter(|&&s| s).count();
            csv.push_str(&format!(
                "{variant},{},{n_sig},{}\n",
                mean(&finite),
                n_sig as f64 / sig.len().max(1) as f64
            ));
        }
        let p = paths.report_file(&format!("lesion_stats_{lang}.csv"));
        artifacts::write_text(&p, &csv)?;
        written.push(p);
    }

    // matched-language matrix: mean paired-t of each specific lesion per group
    let mut matrix = String::from("group,lesion,mean_t\n");
    let mut matched: BTreeMap<(String, String), f64> = BTreeMap::new();
    for group in &ids {
        for lesion in &ids {
            let (t, _) = read_stat_map_csv(&paths.paired_csv(&format!("specific_{lesion}"), group))?;
            let finite: Vec<f64> = t.iter().copied().filter(|v| v.is_finite()).collect();
            let m = mean(&finite);
            matched.insert((group.clone(), lesion.clone()), m);
            matrix.push_str(&format!("{group},{lesion},{m}\n"));
        }
    }
    let p = paths.report_file("matched_lesion_matrix.csv");
    artifacts::write_text(&p, &matrix)?;
    written.push(p);

    // perplexity with ratios against intact
    let ppl = read_perplexities(paths)?;
    let mut csv = String::from("variant,language,perplexity,ratio_vs_intact\n");
    for variant in &variants {
        for lang in &ids {
            let v = ppl[&(variant.clone(), lang.clone())];
            let intact = ppl[&("intact".to_string(), lang.clone())];
            csv.push_str(&format!("{variant},{lang},{v},{}\n", v / intact));
        }
    }
    let p = paths.report_file("perplexity.csv");
    artifacts::write_text(&p, &csv)?;
    written.push(p);

    // silhouette table and intact-minus-core delta
    let sil = read_silhouettes(paths)?;
    let mut csv = String::from("variant,space,silhouette\n");
    for (variant, space, score) in &sil {
        csv.push_str(&format!("{variant},{space},{score}\n"));
    }
    let p = paths.report_file("silhouette.csv");
    artifacts::write_text(&p, &csv)?;
    written.push(p);

    let mut csv = String::from("space,intact,core,delta\n");
    let spaces: Vec<String> = {
        let mut seen = std::collections::BTreeSet::new();
        sil.iter()
            .filter(|(_, sp, _)| seen.insert(sp.clone()))
            .map(|(_, sp, _)| sp.clone())
            .collect()
    };
    let lookup = |variant: &str, space: &str| -> f64 {
        sil.iter()
            .find(|(v, s, _)| v == variant && s == space)
            .map(|&(_, _, x)| x)
            .unwrap_or(f64::NAN)
    };
    for space in &spaces {
        let i = lookup("intact", space);
        let c = lookup("core", space);
        csv.push_str(&format!("{space},{i},{c},{}\n", i - c));
    }
    let p = paths.report_file("silhouette_delta.csv");
    artifacts::write_text(&p, &csv)?;
    written.push(p);

    // straight copies into the report directory
    for (src, name) in [
        (paths.probe_metrics_csv(), "probe_metrics.csv"),
        (paths.roi_summary_csv(), "roi_summary.csv"),
    ] {
        let text = artifacts::read_text(&src)?;
        let p = paths.report_file(name);
        artifacts::write_text(&p, &text)?;
        written.push(p);
    }
    for lang in &ids {
        let text = artifacts::read_text(&paths.lpi_avg_csv(lang))?;
        let p = paths.report_file(&format!("lpi_{lang}.csv"));
        artifacts::write_text(&p, &text)?;
        written.push(p);
    }

    // combined mask accounting
    let mut csv = String::from("mask,layer,component,group_size,selected,overlap_with_core\n");
    for variant in variants.iter().filter(|v| *v != "intact") {
        let text = artifacts::read_text(&paths.mask_summary_csv(variant))?;
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.is_empty() {
                continue;
            }
            csv.push_str(&format!("{variant},{line}\n"));
        }
    }
    let p = paths.report_file("mask_summary.csv");
    artifacts::write_text(&p, &csv)?;
    written.push(p);

    // markdown summary
    let mut md = String::new();
    md.push_str("# Experiment report\n\n");
    md.push_str("## Mean encoding correlation (voxels x subjects)\n\n");
    md.push_str("| language |");
    for v in &variants {
        let _ = write!(md, " {v} |");
    }
    md.push_str("\n|---|");
    for _ in &variants {
        md.push_str("---|");
    }
    md.push('\n');
    for lang in &ids {
        let _ = write!(md, "| {lang} |");
        for v in &variants {
            let _ = write!(md, " {:.4} |", group_means[&(lang.clone(), v.clone())]);
        }
        md.push('\n');
    }

    md.push_str("\n## Perplexity ratio vs intact\n\n| language |");
    for v in variants.iter().filter(|v| *v != "intact") {
        let _ = write!(md, " {v} |");
    }
    md.push_str("\n|---|");
    for _ in variants.iter().filter(|v| *v != "intact") {
        md.push_str("---|");
    }
    md.push('\n');
    for lang in &ids {
        let _ = write!(md, "| {lang} |");
        let intact = ppl[&("intact".to_string(), lang.clone())];
        for v in variants.iter().filter(|v| *v != "intact") {
            let _ = write!(md, " {:.2} |", ppl[&(v.clone(), lang.clone())] / intact);
        }
        md.push('\n');
    }

    md.push_str("\n## Matched-language lesion t matrix (rows: groups)\n\n| group |");
    for lesion in &ids {
        let _ = write!(md, " specific_{lesion} |");
    }
    md.push_str("\n|---|");
    for _ in &ids {
        md.push_str("---|");
    }
    md.push('\n');
    for group in &ids {
        let _ = write!(md, "| {group} |");
        for lesion in &ids {
            let _ = write!(md, " {:.3} |", matched[&(group.clone(), lesion.clone())]);
        }
        md.push('\n');
    }

    md.push_str("\n## Silhouette\n\n");
    for space in &spaces {
        let i = lookup("intact", space);
        let c = lookup("core", space);
        let _ = writeln!(
            md,
            "- {space}: intact {:.4}, core-lesioned {:.4}, delta {:.4}",
            i,
            c,
            i - c
        );
    }

    let p = paths.report_file("summary.md");
    artifacts::write_text(&p, &md)?;
    written.push(p);

    Ok(written.iter().map(|p| p.display().to_string()).collect())
}
