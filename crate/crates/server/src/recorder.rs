//! Session recordings: JSONL with one tagged record per line.
//!
//! A file holds one or more segments. Each segment is a `segment` record,
//! then per tick a `telemetry` record and, on scan ticks, a `row` record in
//! the dataset row format, and finally a `summary` record.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use desksim_core::imitation::{Dataset, DatasetError, DatasetRow, FeatureSpec, FEATURE_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum RecordLine {
    Segment {
        index: u32,
        scene: String,
        dt: f64,
        tick: u64,
        t: f64,
        feature_len: usize,
        spec: FeatureSpec,
    },
    Telemetry {
        data: serde_json::Value,
    },
    Row {
        row: DatasetRow,
    },
    Summary {
        index: u32,
        rows: u64,
        telemetry: u64,
        duration: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        laps: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: u32,
    pub rows: u64,
    pub telemetry: u64,
    pub duration: f64,
    pub laps: Option<u32>,
}

#[derive(Debug)]
struct Segment {
    index: u32,
    rows: u64,
    telemetry: u64,
    t0: f64,
    t_last: f64,
    laps0: Option<u32>,
}

#[derive(Debug)]
pub struct RecordingWriter {
    path: PathBuf,
    out: BufWriter<File>,
    segments: u32,
    current: Option<Segment>,
}

impl RecordingWriter {
    /// Creates (truncates) the file.
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
            segments: 0,
            current: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_open(&self) -> bool {
        self.current.is_some()
    }

    fn line(&mut self, rec: &RecordLine) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }

    pub fn begin(
        &mut self,
        scene: &str,
        dt: f64,
        tick: u64,
        t: f64,
        spec: FeatureSpec,
        laps: Option<u32>,
    ) -> io::Result<u32> {
        let index = self.segments;
        self.line(&RecordLine::Segment {
            index,
            scene: scene.into(),
            dt,
            tick,
            t,
            feature_len: FEATURE_LEN,
            spec,
        })?;
        self.segments += 1;
        self.current = Some(Segment {
            index,
            rows: 0,
            telemetry: 0,
            t0: t,
            t_last: t,
            laps0: laps,
        });
        Ok(index)
    }

    /// Appends one tick. `telemetry` must be a serialized JSON object.
    pub fn tick(&mut self, telemetry: &str, t: f64, row: Option<&DatasetRow>) -> io::Result<()> {
        let Some(seg) = self.current.as_mut() else {
            return Ok(());
        };
        seg.telemetry += 1;
        seg.t_last = t;
        seg.rows += row.is_some() as u64;
        self.out.write_all(b"{\"record\":\"telemetry\",\"data\":")?;
        self.out.write_all(telemetry.as_bytes())?;
        self.out.write_all(b"}\n")?;
        if let Some(row) = row {
            self.line(&RecordLine::Row { row: row.clone() })?;
        }
        Ok(())
    }

    /// Closes the segment with its summary and flushes.
    pub fn end(&mut self, laps: Option<u32>) -> io::Result<Option<SegmentSummary>> {
        let Some(seg) = self.current.take() else {
            return Ok(None);
        };
        let summary = SegmentSummary {
            index: seg.index,
            rows: seg.rows,
            telemetry: seg.telemetry,
            duration: seg.t_last - seg.t0,
            laps: laps.zip(seg.laps0).map(|(a, b)| a.saturating_sub(b)),
        };
        self.line(&RecordLine::Summary {
            index: summary.index,
            rows: summary.rows,
            telemetry: summary.telemetry,
            duration: summary.duration,
            laps: summary.laps,
        })?;
        self.out.flush()?;
        Ok(Some(summary))
    }
}

/// Reads training rows from either a dataset file or a session recording.
pub fn load_rows(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let is_recording = serde_json::from_str::<serde_json::Value>(&first)
        .ok()
        .is_some_and(|v| v.get("record").is_some());
    if !is_recording {
        return Dataset::load(path);
    }
    let mut spec = None;
    let mut rows = Vec::new();
    let reader = BufReader::new(File::open(path)?);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |m: String| DatasetError::Parse {
            line: n + 1,
            message: m,
        };
        // telemetry lines are skipped without a full parse
        if line.starts_with("{\"record\":\"telemetry\"") {
            continue;
        }
        match serde_json::from_str::<RecordLine>(&line).map_err(|e| parse(e.to_string()))? {
            RecordLine::Segment { spec: s, .. } => {
                if spec.is_some_and(|prev| prev != s) {
                    return Err(parse("segments disagree on the feature spec".into()));
                }
                spec = Some(s);
            }
            RecordLine::Row { row } => rows.push(row),
            RecordLine::Telemetry { .. } | RecordLine::Summary { .. } => {}
        }
    }
    let spec = spec.ok_or(DatasetError::Empty)?;
    let ds = Dataset { spec, rows };
    ds.validate()?;
    Ok(ds)
}
