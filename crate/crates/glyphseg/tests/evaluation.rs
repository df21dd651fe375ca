mod common;

use std::path::PathBuf;

use glyphseg::evaluation::{
    emit_results_table, evaluate_averaged, evaluate_averaged_encoded, encode_all, parse_results_table, render_overlay,
    RunLabel,
};
use glyphseg::modelzoo::{build_baseline, ModelKind};
use glyphseg::synthcorpus::SynthConfig;
use glyphseg_core::{derive_box_prompt, sample_point_prompts, GlyphMask, PromptSet, PromptStrategy, Split};

#[test]
fn single_block_per_block_matches_image_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        blocks_per_image: (1, 1),
        ..common::small_synth(8, 64, 12)
    };
    let m = common::synth_corpus(dir.path(), &cfg);
    let samples = common::split(&m, Split::Train, 64);
    assert!(samples.iter().all(|s| s.blocks.len() == 1));
    let model = common::frozen_stub();
    let encoded = encode_all(&model, &samples).unwrap();
    for k in 1..=3 {
        let image = evaluate_averaged_encoded(&model, "zs", &samples, &encoded, Some(&PromptStrategy::points(k)), 4, 5)
            .unwrap();
        let block = evaluate_averaged_encoded(
            &model,
            "zs",
            &samples,
            &encoded,
            Some(&PromptStrategy::points_per_block(k)),
            4,
            5,
        )
        .unwrap();
        assert_eq!(image.report.per_run, block.report.per_run, "k = {k}");
        let sets = |r: &glyphseg::evaluation::AveragedEvaluation| r.prompts.iter().map(|p| p.prompts.clone()).collect::<Vec<_>>();
        assert_eq!(sets(&image), sets(&block));
    }
}

#[test]
fn per_block_prompts_cover_every_block() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        blocks_per_image: (2, 4),
        ..common::small_synth(6, 64, 13)
    };
    let m = common::synth_corpus(dir.path(), &cfg);
    let samples = common::split(&m, Split::Train, 64);
    let model = common::frozen_stub();
    let encoded = encode_all(&model, &samples).unwrap();
    let r = evaluate_averaged_encoded(&model, "zs", &samples, &encoded, Some(&PromptStrategy::points_per_block(2)), 0, 2)
        .unwrap();
    let blocks: usize = samples.iter().map(|s| s.blocks.len()).sum();
    assert_eq!(r.prompts.len(), 2 * blocks);
    for p in &r.prompts {
        assert!(p.block_label.is_some());
        assert!(p.failure.is_some() || p.prompts.points.len() == 2);
    }
}

#[test]
fn averaged_evaluation_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::synth_corpus(dir.path(), &common::small_synth(8, 64, 14));
    let samples = common::split(&m, Split::Train, 64);
    let model = common::frozen_stub();
    let s = PromptStrategy::points(2);
    let a = evaluate_averaged(&model, "zs", &samples, Some(&s), 0, 5).unwrap();
    let b = evaluate_averaged(&model, "zs", &samples, Some(&s), 0, 5).unwrap();
    let c = evaluate_averaged(&model, "zs", &samples, Some(&s), 1, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.per_run, c.per_run);
    assert_eq!(a.per_run.len(), 5);
}

#[test]
fn baselines_report_one_prompt_free_row_group() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::synth_corpus(dir.path(), &common::small_synth(6, 32, 15));
    let samples = common::split(&m, Split::Train, 32);
    let unet = build_baseline(ModelKind::Unet, 32).unwrap();
    let r = evaluate_averaged(&unet, "unet", &samples, Some(&PromptStrategy::points(1)), 0, 5).unwrap();
    assert_eq!(r.strategy, None);
    assert!(r.per_run.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(r.std.iou, 0.0);

    let path = dir.path().join("results.csv");
    emit_results_table(std::slice::from_ref(&r), &path).unwrap();
    let rows = parse_results_table(&path).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|row| row.model == "unet" && row.strategy == "none" && row.k_or_scale.is_empty()));
    assert_eq!(rows[5].run_label().unwrap(), RunLabel::Mean);
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/overlay_synth_0000.png")
}

#[test]
fn overlay_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::synth_corpus(dir.path(), &common::small_synth(3, 64, 21));
    let s = common::load_first(&m, 64);
    let mut pred = GlyphMask::empty(64, 64, s.mask.scope().clone());
    for (r, c) in s.mask.foreground() {
        if c + 3 < 64 {
            pred.set(r, c + 3, true);
        }
    }
    let points = sample_point_prompts(&s.mask, 2, 5).unwrap();
    let bbox = derive_box_prompt(&s.blocks[0], 0.75).unwrap();
    let prompts = [PromptSet::from_points(points), PromptSet::from_box(bbox)];
    let rendered = render_overlay(&s.image, &s.mask, &pred, &prompts).unwrap();

    let golden = golden_path();
    if std::env::var_os("GLYPHSEG_BLESS").is_some() {
        rendered.save(&golden).unwrap();
    }
    let expected = image::open(&golden)
        .unwrap_or_else(|e| panic!("{}: {e}; rerun with GLYPHSEG_BLESS=1", golden.display()))
        .to_rgb8();
    assert_eq!(rendered.dimensions(), expected.dimensions());
    assert!(rendered.as_raw() == expected.as_raw(), "overlay differs from {}", golden.display());
}
