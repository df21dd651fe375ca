mod common;

use glyphseg::synthcorpus::{image_id, SynthConfig};
use glyphseg_core::Split;

#[test]
fn full_size_corpus_splits_75_19_23() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        image_size: 48,
        blocks_per_image: (1, 3),
        ..SynthConfig::default()
    };
    let m = common::synth_corpus(dir.path(), &cfg);
    let count = |s| m.records_in(s).len();
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (75, 19, 23));
    assert!(m.records.iter().all(|r| (1..=3).contains(&r.blocks.len())));
}

#[test]
fn regeneration_is_byte_identical() {
    let cfg = common::small_synth(5, 64, 77);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    common::synth_corpus(a.path(), &cfg);
    common::synth_corpus(b.path(), &cfg);
    for i in 0..5 {
        for sub in ["images", "masks"] {
            let name = format!("{sub}/{}.png", image_id(i));
            assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap(), "{name}");
        }
        let ann = format!("annotations/{}.json", image_id(i));
        assert_eq!(std::fs::read(a.path().join(&ann)).unwrap(), std::fs::read(b.path().join(&ann)).unwrap());
    }
}

#[test]
fn different_seeds_give_different_corpora() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = common::synth_corpus(a.path(), &common::small_synth(3, 64, 1));
    let mb = common::synth_corpus(b.path(), &common::small_synth(3, 64, 2));
    assert_ne!(ma.records[0].blocks, mb.records[0].blocks);
}
