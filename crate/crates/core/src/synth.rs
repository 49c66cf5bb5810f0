//! Deterministic synthetic HOI corpora for tests, demos and the CLI.
//!
//! Each image is a flat background with a person box and an object box
//! painted in label-dependent colours, plus a skin-coloured head at the top
//! of the person. Observers alternate between the head and the object.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{write_dataset, BBox, Fixation, FixationSet, HoiSample, Record};
use crate::error::Result;

pub const OBJECTS: [&str; 6] = ["bicycle", "cup", "ball", "horse", "umbrella", "book"];
pub const VERBS: [&str; 6] = ["ride", "hold", "kick", "feed", "carry", "read"];

pub const OBSERVERS: usize = 3;
pub const POINTS_PER_OBSERVER: usize = 3;

const HEAD: Rgb<u8> = Rgb([224, 172, 105]);

fn colour(label: &str) -> Rgb<u8> {
    let h = label.bytes().fold(17u32, |a, b| a.wrapping_mul(31).wrapping_add(u32::from(b)));
    Rgb([(h & 0xff) as u8 | 0x40, ((h >> 8) & 0xff) as u8 | 0x40, ((h >> 16) & 0xff) as u8 | 0x40])
}

fn paint(img: &mut RgbImage, b: &BBox, c: Rgb<u8>) {
    for y in b.y1 as u32..(b.y2 as u32).min(img.height()) {
        for x in b.x1 as u32..(b.x2 as u32).min(img.width()) {
            img.put_pixel(x, y, c);
        }
    }
}

fn random_box(rng: &mut ChaCha8Rng, size: f64, w: (f64, f64), h: (f64, f64)) -> BBox {
    let bw = (size * rng.gen_range(w.0..w.1)).round().max(2.0);
    let bh = (size * rng.gen_range(h.0..h.1)).round().max(2.0);
    let x1 = rng.gen_range(0.0..=(size - bw)).floor();
    let y1 = rng.gen_range(0.0..=(size - bh)).floor();
    BBox::new(x1, y1, x1 + bw, y1 + bh)
}

/// One sample with its image. `pair` picks the (verb, object) category.
pub fn synthetic_sample(id: &str, pair: (usize, usize), size: u32, seed: u64) -> (Record, RgbImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = f64::from(size);
    let verb = VERBS[pair.0 % VERBS.len()];
    let object = OBJECTS[pair.1 % OBJECTS.len()];
    let human_box = random_box(&mut rng, s, (0.25, 0.4), (0.5, 0.85));
    let object_box = random_box(&mut rng, s, (0.15, 0.35), (0.15, 0.35));

    let mut img = RgbImage::from_pixel(size, size, Rgb([96, 96, 96]));
    paint(&mut img, &human_box, colour(verb));
    let (hw, hh) = (human_box.x2 - human_box.x1, human_box.y2 - human_box.y1);
    let head_box = BBox::new(
        (human_box.x1 + 0.2 * hw).floor(),
        human_box.y1,
        (human_box.x2 - 0.2 * hw).ceil(),
        (human_box.y1 + 0.25 * hh).ceil(),
    );
    paint(&mut img, &head_box, HEAD);
    paint(&mut img, &object_box, colour(object));

    let targets = [
        (0.5 * (head_box.x1 + head_box.x2), 0.5 * (head_box.y1 + head_box.y2)),
        (0.5 * (object_box.x1 + object_box.x2), 0.5 * (object_box.y1 + object_box.y2)),
    ];
    let jitter = Normal::new(0.0, s / 32.0).expect("positive std");
    let mut points = Vec::new();
    for o in 0..OBSERVERS {
        for k in 0..POINTS_PER_OBSERVER {
            let focus = targets[(o + k) % 2];
            let x = (focus.0 + jitter.sample(&mut rng)).clamp(0.0, s - 1.0);
            let y = (focus.1 + jitter.sample(&mut rng)).clamp(0.0, s - 1.0);
            points.push(Fixation {
                x: (x * 100.0).round() / 100.0,
                y: (y * 100.0).round() / 100.0,
                observer_id: format!("obs{o}"),
            });
        }
    }
    let record = Record {
        sample: HoiSample {
            sample_id: id.to_owned(),
            image_path: format!("images/{id}.png"),
            width: size,
            height: size,
            human_box,
            object_box,
            object_label: object.into(),
            interaction_label: verb.into(),
        },
        fixations: FixationSet {
            sample_id: id.to_owned(),
            points,
        },
    };
    (record, img)
}

/// `n` samples over randomly drawn categories.
pub fn synthetic_corpus(n: usize, size: u32, seed: u64) -> Vec<(Record, RgbImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(usize, usize)> = (0..VERBS.len())
        .flat_map(|v| (0..OBJECTS.len()).map(move |o| (v, o)))
        .collect();
    pairs.shuffle(&mut rng);
    (0..n)
        .map(|i| {
            let pair = if i < pairs.len() {
                pairs[i]
            } else {
                pairs[rng.gen_range(0..pairs.len())]
            };
            synthetic_sample(&format!("syn{i:04}"), pair, size, rng.gen())
        })
        .collect()
}

/// Writes images under `dir/images` and `dir/manifest.jsonl`; returns the manifest path.
pub fn write_synthetic_dataset(dir: impl AsRef<Path>, n: usize, size: u32, seed: u64) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("images"))?;
    let corpus = synthetic_corpus(n, size, seed);
    for (record, img) in &corpus {
        img.save(dir.join(&record.sample.image_path))?;
    }
    let records: Vec<Record> = corpus.into_iter().map(|(r, _)| r).collect();
    let manifest = dir.join("manifest.jsonl");
    write_dataset(&manifest, &records)?;
    Ok(manifest)
}
