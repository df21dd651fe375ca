use std::collections::HashSet;
use std::path::{Path, PathBuf};

use glyphseg_core::{split_dataset, CoreError, Split};
use log::{info, warn};

use super::imaging::save_mask_png;
use super::labelme::parse_annotation_document;
use super::manifest::{DatasetManifest, ManifestRecord};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub manifest_path: PathBuf,
    pub images: usize,
    pub rejected_documents: usize,
    pub skipped_shapes: usize,
}

/// Converts every `*.json` annotation in `annotation_dir` into an
/// image-level mask PNG under `out_dir/masks` and writes a split manifest.
/// Documents without a usable polygon are excluded.
pub fn ingest_directory(annotation_dir: &Path, out_dir: &Path, corpus_seed: u64) -> Result<IngestReport> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(annotation_dir)
        .map_err(|e| Error::io(annotation_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut rejected = 0;
    let mut skipped_shapes = 0;
    for path in &paths {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let parsed = match parse_annotation_document(&raw) {
            Ok(p) => p,
            Err(Error::Core(CoreError::NoPolygons)) => {
                warn!("{}: no usable polygons, image excluded", path.display());
                rejected += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        skipped_shapes += parsed.skipped_shapes;
        let doc = parsed.document;
        if !seen.insert(doc.image_id.clone()) {
            return Err(Error::Manifest(format!("duplicate image id `{}`", doc.image_id)));
        }
        let mask = doc.build_image_mask()?;
        let mask_rel = format!("masks/{}.png", doc.image_id);
        save_mask_png(&mask, &out_dir.join(&mask_rel))?;

        let image_abs = annotation_dir.join(&doc.image_path);
        let image_abs = image_abs.canonicalize().unwrap_or(image_abs);
        records.push(ManifestRecord::from_document(
            &doc,
            image_abs.to_string_lossy().into_owned(),
            mask_rel,
            Split::Train,
        ));
    }
    if records.len() < 3 {
        return Err(Error::Core(CoreError::TooFewRecords(records.len())));
    }
    let assignment = split_dataset(records.len(), corpus_seed)?;
    if assignment.has_empty_split() {
        warn!("split sizes {:?} leave a split empty", assignment.sizes());
    }
    for (rec, split) in records.iter_mut().zip(&assignment.splits) {
        rec.split = *split;
    }
    let n = records.len();
    let manifest = DatasetManifest::new(corpus_seed, records, out_dir.to_path_buf());
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;
    info!("ingested {n} images ({rejected} rejected, {skipped_shapes} shapes skipped)");
    Ok(IngestReport {
        manifest_path,
        images: n,
        rejected_documents: rejected,
        skipped_shapes,
    })
}
