//! Annotation ingest, mask generation, resizing and dataset splits.

pub mod dataset;
pub mod imaging;
pub mod ingest;
pub mod labelme;
pub mod manifest;

pub use dataset::{load_sample, load_split, Sample};
pub use imaging::{resize_pair, DEFAULT_INPUT_SIZE};
pub use ingest::{ingest_directory, IngestReport, MANIFEST_FILE};
pub use labelme::{parse_annotation_document, serialize_annotation_document, ParsedAnnotation};
pub use manifest::{BlockRecord, DatasetManifest, ManifestHeader, ManifestRecord};
