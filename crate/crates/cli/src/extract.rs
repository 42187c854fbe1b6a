use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use histoprog::features::io::{list_patches, load_mask, load_patch, mask_path_for, patch_stem};
use histoprog::features::{
    estimate_stain_reference, extract_patch_vector, stain_normalize, Aggregation, ExtractConfig, FeatureVector,
    StainReference, DEFAULT_ALPHA_PERCENTILE, DEFAULT_OD_THRESHOLD,
};
use histoprog::index::Lineage;
use histoprog::ingest::{load_lineage, write_features};
use rayon::prelude::*;

use crate::output::manifest_path;
use crate::Outcome;

#[derive(Args)]
pub struct ExtractArgs {
    /// Directory of `X.png` or `X.rgb` patches.
    #[arg(long)]
    patches: PathBuf,
    /// Directory of `X.mask.png` label masks.
    #[arg(long)]
    masks: PathBuf,
    /// Normalize every patch to this stain reference first.
    #[arg(long)]
    stain_ref: Option<PathBuf>,
    /// `patch_id,wsi_id,patient_id` table; ids stay empty without it.
    #[arg(long)]
    lineage: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    levels: usize,
    #[arg(long, default_value = "mean")]
    aggregation: Aggregation,
}

#[derive(Args)]
pub struct StainRefArgs {
    /// Exemplar patch.
    #[arg(long)]
    patch: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_OD_THRESHOLD)]
    od_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA_PERCENTILE)]
    alpha_percentile: f64,
}

fn extract_one(
    path: &std::path::Path,
    args: &ExtractArgs,
    lineage: Option<&Lineage>,
    target: Option<&StainReference>,
    config: &ExtractConfig,
) -> Result<FeatureVector, String> {
    let stem = patch_stem(path);
    let (wsi, patient) = match lineage {
        Some(l) => l.get(&stem).cloned().ok_or("no lineage row")?,
        None => (String::new(), String::new()),
    };
    let mut patch = load_patch(path).map_err(|e| e.to_string())?;
    let mask = load_mask(&mask_path_for(&args.masks, &stem)).map_err(|e| e.to_string())?;
    if let Some(target) = target {
        let source = estimate_stain_reference(&patch, DEFAULT_OD_THRESHOLD, DEFAULT_ALPHA_PERCENTILE)
            .map_err(|e| e.to_string())?;
        patch = stain_normalize(&patch, &source, target).map_err(|e| e.to_string())?;
    }
    let patch = patch.with_lineage(stem, wsi, patient);
    extract_patch_vector(&patch, &mask, config).map_err(|e| e.to_string())
}

pub fn run(args: ExtractArgs) -> anyhow::Result<Outcome> {
    let files = list_patches(&args.patches)?;
    if files.is_empty() {
        bail!("no patches found in {}", args.patches.display());
    }
    let lineage = args.lineage.as_deref().map(load_lineage).transpose()?;
    let target = match &args.stain_ref {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(StainReference::from_text(&text)?)
        }
        None => None,
    };
    let config = ExtractConfig {
        levels: args.levels,
        aggregation: args.aggregation,
        ..ExtractConfig::default()
    };
    log::info!("extracting {} patches", files.len());
    let results: Vec<(String, Result<FeatureVector, String>)> = files
        .par_iter()
        .map(|f| (patch_stem(f), extract_one(f, &args, lineage.as_ref(), target.as_ref(), &config)))
        .collect();

    let mut vectors = Vec::new();
    let mut skipped = String::from("patch_id,reason\n");
    let mut n_skipped = 0;
    for (id, r) in results {
        match r {
            Ok(v) => vectors.push(v),
            Err(reason) => {
                log::warn!("skipping {id}: {reason}");
                skipped.push_str(&format!("{id},\"{}\"\n", reason.replace('"', "'")));
                n_skipped += 1;
            }
        }
    }
    write_features(&args.out, &vectors)?;
    log::info!("wrote {} rows to {}", vectors.len(), args.out.display());
    let manifest = manifest_path(&args.out);
    if n_skipped > 0 {
        std::fs::write(&manifest, skipped)?;
        log::warn!("{n_skipped} patches skipped, see {}", manifest.display());
        return Ok(Outcome::Partial);
    }
    if manifest.exists() {
        std::fs::remove_file(&manifest)?;
    }
    Ok(Outcome::Done)
}

pub fn run_stain_ref(args: StainRefArgs) -> anyhow::Result<Outcome> {
    let patch = load_patch(&args.patch)?;
    let reference = estimate_stain_reference(&patch, args.od_threshold, args.alpha_percentile)?;
    std::fs::write(&args.out, reference.to_text()).with_context(|| format!("writing {}", args.out.display()))?;
    Ok(Outcome::Done)
}
