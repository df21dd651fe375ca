//! LabelMe-compatible annotation documents.
//!
//! Only the subset needed for glyph blocks is read: `imagePath`,
//! `imageWidth`, `imageHeight` and polygon `shapes`. Unknown keys are
//! ignored; shapes of other types are skipped and counted.

use std::path::Path;

use glyphseg_core::{AnnotationDocument, PolygonAnnotation, Vertex};
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct RawDocument {
    #[serde(rename = "imagePath")]
    image_path: Option<String>,
    #[serde(rename = "imageWidth")]
    image_width: Option<u64>,
    #[serde(rename = "imageHeight")]
    image_height: Option<u64>,
    shapes: Option<Vec<RawShape>>,
}

#[derive(Debug, Deserialize)]
struct RawShape {
    #[serde(default)]
    label: String,
    #[serde(default)]
    points: Vec<Vec<f64>>,
    shape_type: Option<String>,
    #[serde(default)]
    flags: Option<Map<String, Value>>,
}

#[derive(Debug, Serialize)]
struct OutDocument<'a> {
    version: &'static str,
    flags: Map<String, Value>,
    shapes: Vec<OutShape<'a>>,
    #[serde(rename = "imagePath")]
    image_path: &'a str,
    #[serde(rename = "imageData")]
    image_data: Option<()>,
    #[serde(rename = "imageHeight")]
    image_height: usize,
    #[serde(rename = "imageWidth")]
    image_width: usize,
}

#[derive(Debug, Serialize)]
struct OutShape<'a> {
    label: &'a str,
    points: Vec<[f64; 2]>,
    group_id: Option<()>,
    shape_type: &'static str,
    flags: Map<String, Value>,
}

/// A parsed document plus the number of shapes that were not usable.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnnotation {
    pub document: AnnotationDocument,
    pub skipped_shapes: usize,
}

/// Image id derived from an image path: its file stem.
pub fn image_id_from_path(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

pub fn parse_annotation_document(raw: &[u8]) -> Result<ParsedAnnotation> {
    let text = std::str::from_utf8(raw)
        .map_err(|e| Error::MalformedDocument(format!("not UTF-8: {e}")))?;
    let doc: RawDocument =
        serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;
    let image_path = doc.image_path.ok_or(Error::MissingField("imagePath"))?;
    let width = doc.image_width.ok_or(Error::MissingField("imageWidth"))? as usize;
    let height = doc.image_height.ok_or(Error::MissingField("imageHeight"))? as usize;
    let shapes = doc.shapes.ok_or(Error::MissingField("shapes"))?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedDocument(format!(
            "image size must be positive, got {width}x{height}"
        )));
    }

    let mut skipped = 0;
    let mut polygons = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let kind = shape.shape_type.as_deref().unwrap_or("polygon");
        if kind != "polygon" {
            warn!("{image_path}: skipping `{kind}` shape `{}`", shape.label);
            skipped += 1;
            continue;
        }
        let mut points = Vec::with_capacity(shape.points.len());
        for p in &shape.points {
            match p.as_slice() {
                [x, y] => points.push(Vertex::new(*x, *y)),
                _ => {
                    return Err(Error::MalformedDocument(format!(
                        "shape `{}` has a point with {} coordinates",
                        shape.label,
                        p.len()
                    )))
                }
            }
        }
        match PolygonAnnotation::new(shape.label.clone(), points, width, height) {
            Ok(mut poly) => {
                let was_clamped = shape
                    .flags
                    .as_ref()
                    .and_then(|f| f.get("clamped"))
                    .and_then(Value::as_bool)
                    .unwrap_or(false);
                if poly.clamped {
                    warn!("{image_path}: clamped out-of-frame vertices of `{}`", poly.label);
                }
                poly.clamped |= was_clamped;
                polygons.push(poly);
            }
            Err(e) => {
                warn!("{image_path}: skipping unusable polygon `{}`: {e}", shape.label);
                skipped += 1;
            }
        }
    }
    if polygons.is_empty() {
        return Err(Error::Core(glyphseg_core::CoreError::NoPolygons));
    }
    Ok(ParsedAnnotation {
        document: AnnotationDocument {
            image_id: image_id_from_path(&image_path),
            image_path,
            image_width: width,
            image_height: height,
            shapes: polygons,
        },
        skipped_shapes: skipped,
    })
}

pub fn serialize_annotation_document(doc: &AnnotationDocument) -> Result<Vec<u8>> {
    let shapes = doc
        .shapes
        .iter()
        .map(|s| {
            let mut flags = Map::new();
            if s.clamped {
                flags.insert("clamped".into(), Value::Bool(true));
            }
            OutShape {
                label: &s.label,
                points: s.points.iter().map(|v| [v.x, v.y]).collect(),
                group_id: None,
                shape_type: "polygon",
                flags,
            }
        })
        .collect();
    let out = OutDocument {
        version: "5.4.1",
        flags: Map::new(),
        shapes,
        image_path: &doc.image_path,
        image_data: None,
        image_height: doc.image_height,
        image_width: doc.image_width,
    };
    Ok(serde_json::to_vec_pretty(&out)?)
}
