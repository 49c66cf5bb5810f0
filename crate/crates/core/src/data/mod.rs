//! HOI samples, fixations, heatmaps, their file formats, and zero-shot splits.

pub mod format;
pub mod heatmap;
pub mod sample;
pub mod split;

pub use format::{read_ighm, write_ighm, write_png};
pub use heatmap::{
    default_sigma, fixations_to_heatmap, resize_map, AttentionMap, ResizeMode,
};
pub use sample::{load_dataset, write_dataset, BBox, Fixation, FixationSet, HoiSample, Record};
pub use split::{make_zeroshot_split, CategoryKey, SplitManifest, DEFAULT_TEST_FRACTION};
