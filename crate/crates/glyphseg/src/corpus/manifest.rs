//! JSON-lines corpus manifest.
//!
//! The first line is a header `{corpus_seed, created_at, tool_version}`;
//! every following line is one image record. Relative paths inside records
//! resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use glyphseg_core::{split_dataset, AnnotationDocument, PolygonAnnotation, Split, Vertex};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub corpus_seed: u64,
    pub created_at: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub label: String,
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub image_path: String,
    pub mask_path: String,
    pub split: Split,
    pub image_width: usize,
    pub image_height: usize,
    pub blocks: Vec<BlockRecord>,
}

impl ManifestRecord {
    pub fn from_document(
        doc: &AnnotationDocument,
        image_path: String,
        mask_path: String,
        split: Split,
    ) -> Self {
        Self {
            image_id: doc.image_id.clone(),
            image_path,
            mask_path,
            split,
            image_width: doc.image_width,
            image_height: doc.image_height,
            blocks: doc
                .shapes
                .iter()
                .map(|s| BlockRecord {
                    label: s.label.clone(),
                    polygon: s.points.iter().map(|v| [v.x, v.y]).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the annotation document described by this record.
    pub fn to_document(&self) -> Result<AnnotationDocument> {
        let shapes = self
            .blocks
            .iter()
            .map(|b| {
                let pts = b.polygon.iter().map(|&[x, y]| Vertex::new(x, y)).collect();
                PolygonAnnotation::new(b.label.clone(), pts, self.image_width, self.image_height)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(AnnotationDocument {
            image_id: self.image_id.clone(),
            image_path: self.image_path.clone(),
            image_width: self.image_width,
            image_height: self.image_height,
            shapes,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
    /// Directory that relative record paths resolve against.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(corpus_seed: u64, records: Vec<ManifestRecord>, root: PathBuf) -> Self {
        Self {
            header: ManifestHeader {
                corpus_seed,
                created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                tool_version: TOOL_VERSION.to_string(),
            },
            records,
            root,
        }
    }

    pub fn corpus_seed(&self) -> u64 {
        self.header.corpus_seed
    }

    pub fn records_in(&self, split: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Reassigns every record's split from `(len, seed)`.
    pub fn assign_splits(&mut self, seed: u64) -> Result<()> {
        let assignment = split_dataset(self.records.len(), seed)?;
        if assignment.has_empty_split() {
            let (a, b, c) = assignment.sizes();
            warn!("split of {} records leaves an empty split: train={a} val={b} test={c}", self.records.len());
        }
        for (rec, split) in self.records.iter_mut().zip(assignment.splits) {
            rec.split = split;
        }
        self.header.corpus_seed = seed;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.image_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate image_id `{}`", r.image_id)));
            }
            if r.blocks.is_empty() {
                return Err(Error::Manifest(format!("record `{}` has no blocks", r.image_id)));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::imaging::ensure_parent(path)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n").map_err(io)?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Manifest("empty manifest".into()))?
            .map_err(|e| Error::io(path, e))?;
        let header: ManifestHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::Manifest(format!("bad header: {e}")))?;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", i + 2)))?;
            records.push(rec);
        }
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let m = Self {
            header,
            records,
            root,
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, split: Split) -> ManifestRecord {
        ManifestRecord {
            image_id: id.into(),
            image_path: format!("images/{id}.png"),
            mask_path: format!("masks/{id}.png"),
            split,
            image_width: 10,
            image_height: 10,
            blocks: vec![BlockRecord {
                label: "b".into(),
                polygon: vec![[1.0, 1.0], [5.0, 1.0], [5.0, 5.0]],
            }],
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let m = DatasetManifest::new(
            9,
            vec![record("a", Split::Train), record("b", Split::Test)],
            dir.path().to_path_buf(),
        );
        m.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"corpus_seed\":9"));
        assert_eq!(text.lines().count(), 3);
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.resolve("images/a.png"), dir.path().join("images/a.png"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let m = DatasetManifest::new(
            0,
            vec![record("a", Split::Train), record("a", Split::Test)],
            PathBuf::from("."),
        );
        assert!(m.validate().is_err());
    }

    #[test]
    fn reassignment_is_deterministic() {
        let recs: Vec<_> = (0..20).map(|i| record(&format!("r{i}"), Split::Train)).collect();
        let mut a = DatasetManifest::new(0, recs.clone(), PathBuf::from("."));
        let mut b = DatasetManifest::new(0, recs, PathBuf::from("."));
        a.assign_splits(5).unwrap();
        b.assign_splits(5).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records_in(Split::Train).len(), 13);
        assert_eq!(a.records_in(Split::Val).len(), 3);
    }
}
