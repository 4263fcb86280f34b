//! Recorded driving rows, JSONL storage, balancing and mirror augmentation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::imitation::features::{mirror_features, FeatureSpec, Featurizer};
use crate::rng::NoiseStream;
use crate::sensors::SensorFrame;
use crate::vehicle::Command;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported dataset format_version {0}")]
    Version(u32),
    #[error("row {row}: {reason}")]
    Invalid { row: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub features: Vec<f64>,
    pub label_steering: f64,
    pub label_throttle: f64,
    pub t: f64,
    pub lap_id: u32,
}

impl DatasetRow {
    pub fn mirrored(&self) -> Self {
        Self {
            features: mirror_features(&self.features),
            label_steering: -self.label_steering,
            ..self.clone()
        }
    }

    /// Network target, `(steering, throttle)`.
    pub fn target(&self) -> [f64; 2] {
        [self.label_steering, self.label_throttle]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    feature_len: usize,
    spec: FeatureSpec,
    rows: usize,
}

/// Rows plus the featurization they were recorded with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: FeatureSpec,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let len = self.rows.first().ok_or(DatasetError::Empty)?.features.len();
        for (i, r) in self.rows.iter().enumerate() {
            let bad = |reason: &str| {
                Err(DatasetError::Invalid {
                    row: i,
                    reason: reason.into(),
                })
            };
            if r.features.len() != len {
                return bad("feature length differs from row 0");
            }
            if r.features.iter().any(|f| !(-1.0..=1.0).contains(f)) {
                return bad("feature outside [-1, 1]");
            }
            if !(-1.0..=1.0).contains(&r.label_steering)
                || !(-1.0..=1.0).contains(&r.label_throttle)
            {
                return bad("label outside [-1, 1]");
            }
        }
        Ok(())
    }

    /// One header line followed by one row per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<(), DatasetError> {
        let header = Header {
            format_version: DATASET_FORMAT_VERSION,
            feature_len: self.rows.first().map_or(0, |r| r.features.len()),
            spec: self.spec,
            rows: self.rows.len(),
        };
        writeln!(
            w,
            "{}",
            serde_json::to_string(&header).expect("header serializes")
        )?;
        for r in &self.rows {
            writeln!(w, "{}", serde_json::to_string(r).expect("row serializes"))?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, DatasetError> {
        let mut lines = r
            .lines()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let parse = |line: usize, e: serde_json::Error| DatasetError::Parse {
            line: line + 1,
            message: e.to_string(),
        };
        let (n, first) = lines.next().ok_or(DatasetError::Empty)?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| parse(n, e))?;
        if header.format_version != DATASET_FORMAT_VERSION {
            return Err(DatasetError::Version(header.format_version));
        }
        let mut rows = Vec::with_capacity(header.rows);
        for (n, line) in lines {
            rows.push(serde_json::from_str(&line?).map_err(|e| parse(n, e))?);
        }
        let ds = Self {
            spec: header.spec,
            rows,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), DatasetError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DatasetError> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn steering_bin(s: f64, bins: usize) -> usize {
    let u = ((s + 1.0) * 0.5 * bins as f64).floor();
    (u.max(0.0) as usize).min(bins - 1)
}

/// Subsamples over-represented steering bins down to twice the median nonzero
/// bin count. Kept rows stay in their original order.
pub fn balance_dataset(
    rows: &[DatasetRow],
    bins: usize,
    seed: u64,
) -> Result<Vec<DatasetRow>, DatasetError> {
    if rows.is_empty() || bins == 0 {
        return Err(DatasetError::Empty);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, r) in rows.iter().enumerate() {
        members[steering_bin(r.label_steering, bins)].push(i);
    }
    let mut counts: Vec<usize> = members.iter().map(Vec::len).filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let mid = counts.len() / 2;
    // twice the median; for an even number of bins that is the sum of the two middle counts
    let cap = if counts.len() % 2 == 1 {
        2 * counts[mid]
    } else {
        counts[mid - 1] + counts[mid]
    };
    let mut rng = NoiseStream::new(seed, crate::rng::Channel::Balance);
    let mut keep = vec![true; rows.len()];
    for m in &mut members {
        if m.len() > cap {
            rng.shuffle(m);
            for &i in &m[cap..] {
                keep[i] = false;
            }
        }
    }
    Ok(rows
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

/// Returns `rows` followed by their mirror images.
pub fn augment_mirror(rows: &[DatasetRow]) -> Vec<DatasetRow> {
    let mut out = rows.to_vec();
    out.extend(rows.iter().map(DatasetRow::mirrored));
    out
}

/// Turns a stream of frames and the driver's commands into dataset rows.
#[derive(Debug, Clone)]
pub struct Recorder {
    featurizer: Featurizer,
    pub rows: Vec<DatasetRow>,
    /// Frames that produced no row because they carried no scan.
    pub skipped: u64,
    pub lap_id: u32,
}

impl Recorder {
    pub fn new(featurizer: Featurizer) -> Self {
        Self {
            featurizer,
            rows: Vec::new(),
            skipped: 0,
            lap_id: 0,
        }
    }

    pub fn record(&mut self, frame: &SensorFrame, cmd: &Command<f64>) -> Option<&DatasetRow> {
        let Some(features) = self.featurizer.observe(frame) else {
            self.skipped += 1;
            return None;
        };
        let cmd = cmd.clamped();
        self.rows.push(DatasetRow {
            features,
            label_steering: cmd.steering,
            label_throttle: cmd.throttle,
            t: frame.t,
            lap_id: self.lap_id,
        });
        self.rows.last()
    }

    pub fn into_dataset(self) -> Dataset {
        Dataset {
            spec: self.featurizer.spec,
            rows: self.rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: f64) -> DatasetRow {
        DatasetRow {
            features: vec![0.5; 37],
            label_steering: s,
            label_throttle: 0.8,
            t: 0.0,
            lap_id: 0,
        }
    }

    #[test]
    fn bins_cover_the_label_range() {
        assert_eq!(steering_bin(-1.0, 21), 0);
        assert_eq!(steering_bin(0.0, 21), 10);
        assert_eq!(steering_bin(1.0, 21), 20);
        assert_eq!(steering_bin(0.999, 21), 20);
    }

    #[test]
    fn uniform_labels_are_unchanged() {
        let rows: Vec<_> = (0..21 * 3)
            .map(|k| row(-1.0 + (k % 21) as f64 * 2.0 / 20.0))
            .collect();
        assert_eq!(balance_dataset(&rows, 21, 0).unwrap(), rows);
    }

    #[test]
    fn dominant_zero_bin_is_capped() {
        let mut rows: Vec<_> = (0..900).map(|_| row(0.0)).collect();
        for k in 0..100 {
            rows.push(row(-0.9 + (k % 10) as f64 * 0.2));
        }
        let out = balance_dataset(&rows, 21, 4).unwrap();
        // ten side bins hold 10 rows each, zero bin 900: median of 11 counts is 10
        let zeros = out.iter().filter(|r| r.label_steering == 0.0).count();
        assert_eq!(zeros, 20);
        assert_eq!(out.len(), 120);
        assert_eq!(out, balance_dataset(&rows, 21, 4).unwrap());
        assert!(balance_dataset(&[], 21, 0).is_err());
    }

    #[test]
    fn mirror_doubles_and_negates() {
        let mut r = row(0.4);
        r.features[3] = 0.1;
        let out = augment_mirror(&[r.clone()]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].label_steering, -0.4);
        assert_eq!(out[1].label_throttle, 0.8);
        assert_eq!(out[1].features[33], 0.1);
        let twice = augment_mirror(&out);
        assert_eq!(twice.len(), 4);
        for i in 0..2 {
            assert_eq!(twice[i + 2], twice[i].mirrored());
        }
        assert_eq!(twice[3], r);
    }

    #[test]
    fn symmetric_straight_row_is_a_mirror_fixed_point() {
        assert_eq!(row(0.0).mirrored(), row(0.0));
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = Dataset {
            spec: FeatureSpec::default(),
            rows: vec![row(0.1), row(-0.3)],
        };
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"format_version\":1"));
        assert_eq!(Dataset::read_jsonl(&buf[..]).unwrap(), ds);
        let bad = text.replacen("\"format_version\":1", "\"format_version\":9", 1);
        assert!(matches!(
            Dataset::read_jsonl(bad.as_bytes()),
            Err(DatasetError::Version(9))
        ));
    }
}
