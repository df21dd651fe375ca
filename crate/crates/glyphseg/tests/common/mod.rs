#![allow(dead_code)]

use std::path::Path;

use glyphseg::corpus::{load_split, DatasetManifest, Sample};
use glyphseg::modelzoo::{freeze_encoders, load_pretrained_promptable, PromptableSegmenter, Variant};
use glyphseg::synthcorpus::{generate_synthetic_corpus, SynthConfig};
use glyphseg_core::Split;

/// Small multi-block corpus sized for the stub variant.
pub fn small_synth(n_images: usize, image_size: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_images,
        image_size,
        blocks_per_image: (1, 4),
        seed,
        ..SynthConfig::default()
    }
}

pub fn synth_corpus(dir: &Path, config: &SynthConfig) -> DatasetManifest {
    generate_synthetic_corpus(config, dir).expect("synthetic corpus")
}

pub fn split(manifest: &DatasetManifest, split: Split, size: usize) -> Vec<Sample> {
    load_split(manifest, split, size).expect("split loads")
}

pub fn frozen_stub() -> PromptableSegmenter {
    freeze_encoders(load_pretrained_promptable(None, Variant::Stub, None).expect("stub builds"))
}

pub fn cli(args: &[&str]) -> i32 {
    glyphseg::cli::main_with_args(std::iter::once("glyphseg").chain(args.iter().copied()))
}

/// First record of the manifest regardless of split.
pub fn load_first(manifest: &DatasetManifest, size: usize) -> Sample {
    glyphseg::corpus::load_sample(manifest, &manifest.records[0], size).expect("sample loads")
}
