//! Brute-force oracles for the core algorithms.

use glyphseg_core::prompts::prompts_for_strategy;
use glyphseg_core::{
    derive_box_prompt, dice_score, iou, rasterize_polygon, sample_point_prompts, split_dataset,
    GlyphMask, MaskScope, PromptStrategy, Split, Vertex,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classic crossing-number test at an exact point.
fn ray_cast_inside(ring: &[Vertex], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn oracle_mask(ring: &[Vertex], h: usize, w: usize) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = ray_cast_inside(ring, c as f64 + 0.5, r as f64 + 0.5) as u8;
        }
    }
    out
}

/// Star-shaped ring around a random center: simple by construction and
/// inside the frame, so vertex clamping never applies.
fn random_simple_polygon(rng: &mut ChaCha8Rng, size: f64) -> Vec<Vertex> {
    let n = rng.random_range(3..14);
    let cx = rng.random_range(0.25 * size..0.75 * size);
    let cy = rng.random_range(0.25 * size..0.75 * size);
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
        .into_iter()
        .map(|a| {
            let r = rng.random_range(0.05 * size..0.25 * size);
            Vertex::new(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, p: f64) -> GlyphMask {
    let vals: Vec<u8> = (0..h * w).map(|_| rng.random_bool(p) as u8).collect();
    GlyphMask::from_values(h, w, &vals, MaskScope::ImageLevel).unwrap()
}

#[test]
fn rasterization_matches_ray_casting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let ring = random_simple_polygon(&mut rng, 32.0);
        let mask = rasterize_polygon(&ring, 32, 32, MaskScope::ImageLevel).unwrap();
        assert_eq!(mask.bits(), oracle_mask(&ring, 32, 32).as_slice());
    }
}

#[test]
fn union_of_overlapping_polygons_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let rings: Vec<_> = (0..rng.random_range(2..5))
            .map(|_| random_simple_polygon(&mut rng, 32.0))
            .collect();
        let mut union = GlyphMask::empty(32, 32, MaskScope::ImageLevel);
        for ring in &rings {
            union
                .union_with(&rasterize_polygon(ring, 32, 32, MaskScope::ImageLevel).unwrap())
                .unwrap();
        }
        let expected = (0..32 * 32)
            .filter(|&i| {
                let (r, c) = (i / 32, i % 32);
                rings
                    .iter()
                    .any(|ring| ray_cast_inside(ring, c as f64 + 0.5, r as f64 + 0.5))
            })
            .count();
        assert_eq!(union.count(), expected);
    }
}

#[test]
fn metrics_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (fp, fg) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let p = random_mask(&mut rng, 16, 16, fp);
        let g = random_mask(&mut rng, 16, 16, fg);
        let (mut inter, mut uni, mut np, mut ng) = (0usize, 0usize, 0usize, 0usize);
        for r in 0..16 {
            for c in 0..16 {
                let (a, b) = (p.get(r, c), g.get(r, c));
                inter += (a && b) as usize;
                uni += (a || b) as usize;
                np += a as usize;
                ng += b as usize;
            }
        }
        let want_iou = if uni == 0 { 1.0 } else { inter as f64 / uni as f64 };
        let want_dice = if np + ng == 0 {
            1.0
        } else {
            2.0 * inter as f64 / (np + ng) as f64
        };
        let got_iou = iou(&p, &g).unwrap();
        let got_dice = dice_score(&p, &g).unwrap();
        assert_eq!(got_iou, want_iou);
        assert_eq!(got_dice, want_dice);
        if uni > 0 {
            assert!((got_dice - 2.0 * got_iou / (1.0 + got_iou)).abs() <= 1e-12);
            assert!(got_dice >= got_iou);
        }
    }
}

#[test]
fn scale_one_box_is_tight_bounding_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = random_mask(&mut rng, 24, 20, 0.05);
        if m.is_empty() {
            continue;
        }
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for r in 0..24 {
            for c in 0..20 {
                if m.get(r, c) {
                    r0 = r0.min(r);
                    r1 = r1.max(r);
                    c0 = c0.min(c);
                    c1 = c1.max(c);
                }
            }
        }
        let b = derive_box_prompt(&m, 1.0).unwrap();
        assert_eq!(
            (b.x_min, b.y_min, b.x_max, b.y_max),
            (c0 as f64, r0 as f64, (c1 + 1) as f64, (r1 + 1) as f64)
        );
    }
}

#[test]
fn sampled_points_land_on_foreground() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..200 {
        let m = random_mask(&mut rng, 16, 16, 0.1);
        if m.is_empty() {
            continue;
        }
        let a = sample_point_prompts(&m, 3, i).unwrap();
        let b = sample_point_prompts(&m, 3, i).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let (r, c) = p.pixel();
            assert!(m.get(r, c));
            assert_eq!((p.x.fract(), p.y.fract()), (0.5, 0.5));
        }
    }
}

#[test]
fn per_block_points_stay_inside_their_block() {
    let mut blocks = Vec::new();
    let mut image = GlyphMask::empty(32, 32, MaskScope::ImageLevel);
    for (i, (x, y)) in [(1.0, 1.0), (17.0, 1.0), (1.0, 17.0), (17.0, 17.0)]
        .into_iter()
        .enumerate()
    {
        let ring = [
            Vertex::new(x, y),
            Vertex::new(x + 12.0, y + 2.0),
            Vertex::new(x + 10.0, y + 13.0),
            Vertex::new(x + 1.0, y + 11.0),
        ];
        let m = rasterize_polygon(&ring, 32, 32, MaskScope::Block(format!("b{i}"))).unwrap();
        image.union_with(&m).unwrap();
        blocks.push(m);
    }
    for run in 0..5 {
        let targets = prompts_for_strategy(
            "img",
            &image,
            &blocks,
            &PromptStrategy::points_per_block(3),
            100,
            run,
        )
        .unwrap();
        assert_eq!(targets.len(), 4);
        for t in &targets {
            assert_eq!(t.prompts.points.len(), 3);
            for p in &t.prompts.points {
                let (r, c) = p.pixel();
                assert!(t.target.get(r, c));
            }
        }
    }
}

#[test]
fn resized_random_mask_keeps_its_fraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // Blocky pattern so nearest-neighbour sampling is representative.
    let mut m = GlyphMask::empty(300, 700, MaskScope::ImageLevel);
    for _ in 0..12 {
        let (r0, c0) = (rng.random_range(0..260), rng.random_range(0..640));
        let (h, w) = (rng.random_range(10..40), rng.random_range(10..60));
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                m.set(r, c, true);
            }
        }
    }
    let s = m.resize_nearest(256, 256).unwrap();
    assert!(s.bits().iter().all(|&b| b <= 1));
    assert!((s.foreground_fraction() - m.foreground_fraction()).abs() <= 0.05);
}

proptest! {
    #[test]
    fn splits_partition_records(n in 3usize..400, seed in any::<u64>()) {
        let a = split_dataset(n, seed).unwrap();
        prop_assert_eq!(a.len(), n);
        let (tr, va, te) = a.sizes();
        prop_assert_eq!(tr, (0.64 * n as f64).round() as usize);
        prop_assert_eq!(va, (0.16 * n as f64).round() as usize);
        prop_assert_eq!(tr + va + te, n);
        let mut all: Vec<usize> = [Split::Train, Split::Val, Split::Test]
            .iter()
            .flat_map(|&s| a.indices(s))
            .collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dice_iou_identity(bits in proptest::collection::vec(0u8..2, 128)) {
        let p = GlyphMask::from_values(8, 8, &bits[..64], MaskScope::ImageLevel).unwrap();
        let g = GlyphMask::from_values(8, 8, &bits[64..], MaskScope::ImageLevel).unwrap();
        let i = iou(&p, &g).unwrap();
        let d = dice_score(&p, &g).unwrap();
        prop_assert!((d - 2.0 * i / (1.0 + i)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&i) && (0.0..=1.0).contains(&d));
    }
}
