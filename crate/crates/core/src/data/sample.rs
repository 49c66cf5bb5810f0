use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{IaError, Result};

/// Axis-aligned box `(x1, y1, x2, y2)` in absolute pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x1: v[0],
            y1: v[1],
            x2: v[2],
            y2: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    fn check(&self, width: u32, height: u32) -> std::result::Result<(), String> {
        let (w, h) = (f64::from(width), f64::from(height));
        let ok = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && 0.0 <= self.x1
            && self.x1 < self.x2
            && self.x2 <= w
            && 0.0 <= self.y1
            && self.y1 < self.y2
            && self.y2 <= h;
        if ok {
            Ok(())
        } else {
            Err(format!(
                "box [{}, {}, {}, {}] is not inside a {width}x{height} image",
                self.x1, self.y1, self.x2, self.y2
            ))
        }
    }

    /// Coordinates divided by the image size, each in `[0, 1]`.
    pub fn normalized(&self, width: u32, height: u32) -> [f64; 4] {
        let (w, h) = (f64::from(width), f64::from(height));
        [self.x1 / w, self.y1 / h, self.x2 / w, self.y2 / h]
    }
}

/// One human-object pair in one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiSample {
    pub sample_id: String,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
    pub human_box: BBox,
    pub object_box: BBox,
    pub object_label: String,
    pub interaction_label: String,
}

impl HoiSample {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| IaError::Validation {
            sample_id: self.sample_id.clone(),
            message,
        };
        if self.sample_id.is_empty() {
            return Err(fail("empty sample_id".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(fail("image dimensions must be positive".into()));
        }
        self.human_box
            .check(self.width, self.height)
            .map_err(|m| fail(format!("human_box: {m}")))?;
        self.object_box
            .check(self.width, self.height)
            .map_err(|m| fail(format!("object_box: {m}")))?;
        if self.object_label.trim().is_empty() || self.interaction_label.trim().is_empty() {
            return Err(fail("labels must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub observer_id: String,
}

/// Click-simulated gaze points recorded for one sample.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FixationSet {
    pub sample_id: String,
    pub points: Vec<Fixation>,
}

impl FixationSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of a single observer.
    pub fn for_observer(&self, observer_id: &str) -> FixationSet {
        FixationSet {
            sample_id: self.sample_id.clone(),
            points: self
                .points
                .iter()
                .filter(|p| p.observer_id == observer_id)
                .cloned()
                .collect(),
        }
    }

    pub fn observers(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.points.iter().map(|p| p.observer_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub(crate) fn check_bounds(&self, width: u32, height: u32) -> std::result::Result<(), String> {
        let (w, h) = (f64::from(width), f64::from(height));
        for p in &self.points {
            if !(p.x.is_finite() && p.y.is_finite() && (0.0..=w).contains(&p.x) && (0.0..=h).contains(&p.y)) {
                return Err(format!(
                    "fixation ({}, {}) outside a {width}x{height} image",
                    p.x, p.y
                ));
            }
        }
        Ok(())
    }
}

/// A sample together with its fixations, as stored on one manifest line.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub sample: HoiSample,
    pub fixations: FixationSet,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    #[serde(flatten)]
    sample: HoiSample,
    #[serde(default)]
    fixations: Vec<Fixation>,
}

impl Record {
    pub fn validate(&self) -> Result<()> {
        self.sample.validate()?;
        self.fixations
            .check_bounds(self.sample.width, self.sample.height)
            .map_err(|message| IaError::Validation {
                sample_id: self.sample.sample_id.clone(),
                message,
            })
    }

    /// Resolves `image_path` against the manifest's directory.
    pub fn image_path(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.sample.image_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(&ManifestLine {
            sample: self.sample.clone(),
            fixations: self.fixations.points.clone(),
        })?)
    }
}

/// Loads and validates a JSON-lines manifest, preserving file order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let display = path.display().to_string();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(&line).map_err(|e| IaError::Parse {
                path: display.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        let record = Record {
            fixations: FixationSet {
                sample_id: parsed.sample.sample_id.clone(),
                points: parsed.fixations,
            },
            sample: parsed.sample,
        };
        record.validate()?;
        if !seen.insert(record.sample.sample_id.clone()) {
            return Err(IaError::Validation {
                sample_id: record.sample.sample_id,
                message: "duplicate sample_id".into(),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        writeln!(w, "{}", r.to_json_line()?)?;
    }
    w.flush()?;
    Ok(())
}

/// Training needs fixations on every sample.
pub fn require_fixations(records: &[Record]) -> Result<()> {
    match records.iter().find(|r| r.fixations.is_empty()) {
        Some(r) => Err(IaError::Validation {
            sample_id: r.sample.sample_id.clone(),
            message: "training samples need at least one fixation".into(),
        }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"{"sample_id":"s1","image_path":"a.png","width":640,"height":480,"human_box":[10,20,200,400],"object_box":[150,100,600,470],"object_label":"bicycle","interaction_label":"ride","fixations":[{"x":100.5,"y":200,"observer_id":"o1"}]}"#;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let f = write("");
        assert!(load_dataset(f.path()).unwrap().is_empty());
    }

    #[test]
    fn single_valid_line() {
        let f = write(&format!("{VALID}\n"));
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds[0].sample.human_box, BBox::new(10., 20., 200., 400.));
        assert_eq!(ds[0].fixations.points[0].observer_id, "o1");
    }

    #[test]
    fn reversed_box_is_rejected_with_sample_id() {
        let bad = VALID.replace("[10,20,200,400]", "[300,20,200,400]");
        let f = write(&bad);
        match load_dataset(f.path()) {
            Err(IaError::Validation { sample_id, .. }) => assert_eq!(sample_id, "s1"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write(&format!("{VALID}\n{{not json\n"));
        match load_dataset(f.path()) {
            Err(IaError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fixation_outside_image_is_rejected() {
        let bad = VALID.replace("\"x\":100.5", "\"x\":700");
        let f = write(&bad);
        assert!(matches!(load_dataset(f.path()), Err(IaError::Validation { .. })));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let f = write(&format!("{VALID}\n{VALID}\n"));
        assert!(matches!(load_dataset(f.path()), Err(IaError::Validation { .. })));
    }

    #[test]
    fn observers_split_points() {
        let f = write(VALID);
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds[0].fixations.observers(), vec!["o1".to_string()]);
        assert!(ds[0].fixations.for_observer("o2").is_empty());
    }
}
