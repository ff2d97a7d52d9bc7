use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, GroundTruth, Result, SampleStream, SequenceBundle, IMU_CHANNELS};

const STREAM_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
const GT_HEADER: [&str; 3] = ["t", "px", "py"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub id: String,
    pub file: String,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub file: String,
    pub rate_hz: f64,
}

/// On-disk description of one sequence. File paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sequence_id: String,
    pub common_rate_hz: f64,
    pub devices: Vec<DeviceEntry>,
    pub ground_truth: GroundTruthEntry,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads rows of `expected.len()` floats, checking the header and that the
/// first column strictly increases. Returns `(line, values)` pairs.
fn read_rows<const N: usize>(path: &Path, expected: [&str; N]) -> Result<Vec<(u64, [f64; N])>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let row_err = |line: u64, reason: String| DataError::Row {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let header = reader
        .headers()
        .map_err(|e| row_err(1, e.to_string()))?
        .clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(row_err(
            1,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut rows: Vec<(u64, [f64; N])> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != N {
            return Err(row_err(
                line,
                format!("expected {N} fields, found {}", record.len()),
            ));
        }
        let mut values = [0.0; N];
        for (i, field) in record.iter().enumerate() {
            values[i] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    row_err(
                        line,
                        format!("column {}: cannot parse {field:?}", expected[i]),
                    )
                })?;
        }
        if let Some((_, prev)) = rows.last() {
            if !(values[0] > prev[0]) {
                return Err(row_err(
                    line,
                    format!(
                        "timestamp {} does not increase (previous {})",
                        values[0], prev[0]
                    ),
                ));
            }
        }
        rows.push((line, values));
    }
    Ok(rows)
}

/// Parses a device CSV (`t,ax,ay,az,gx,gy,gz`). Errors carry the offending
/// file and line.
pub fn read_stream_csv(path: &Path, device_id: &str, rate_hz: f64) -> Result<SampleStream> {
    let rows = read_rows(path, STREAM_HEADER)?;
    let period = 1.0 / rate_hz;
    for pair in rows.windows(2) {
        let dt = pair[1].1[0] - pair[0].1[0];
        if (dt - period).abs() >= 0.2 * period {
            return Err(DataError::Row {
                path: path.to_path_buf(),
                line: pair[1].0,
                reason: format!("gap of {dt} s does not match {rate_hz} Hz"),
            });
        }
    }
    let timestamps = rows.iter().map(|(_, r)| r[0]).collect();
    let samples = rows
        .iter()
        .map(|(_, r)| {
            let mut s = [0.0; IMU_CHANNELS];
            s.copy_from_slice(&r[1..]);
            s
        })
        .collect();
    SampleStream::new(device_id, rate_hz, timestamps, samples)
}

pub fn read_ground_truth_csv(path: &Path) -> Result<GroundTruth> {
    let rows = read_rows(path, GT_HEADER)?;
    GroundTruth::new(
        rows.iter().map(|(_, r)| r[0]).collect(),
        rows.iter().map(|(_, r)| [r[1], r[2]]).collect(),
    )
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let wrap = |e: csv::Error| DataError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        // `{}` on f64 prints the shortest string that parses back exactly.
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_stream_csv(path: &Path, stream: &SampleStream) -> Result<()> {
    let rows = stream
        .timestamps()
        .iter()
        .zip(stream.samples())
        .map(|(t, s)| std::iter::once(*t).chain(s.iter().copied()).collect());
    write_csv(path, &STREAM_HEADER, rows)
}

pub fn write_ground_truth_csv(path: &Path, gt: &GroundTruth) -> Result<()> {
    let rows = gt
        .timestamps()
        .iter()
        .zip(gt.positions())
        .map(|(t, p)| vec![*t, p[0], p[1]]);
    write_csv(path, &GT_HEADER, rows)
}

/// Loads a manifest and every file it references, in manifest device order.
pub fn load_sequence(manifest_path: &Path) -> Result<SequenceBundle> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| DataError::Manifest {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let streams = manifest
        .devices
        .iter()
        .map(|d| read_stream_csv(&dir.join(&d.file), &d.id, d.rate_hz))
        .collect::<Result<Vec<_>>>()?;
    let gt = read_ground_truth_csv(&dir.join(&manifest.ground_truth.file))?;
    SequenceBundle::new(manifest.sequence_id, streams, gt, manifest.common_rate_hz)
}

/// Writes `<dir>/manifest.json`, one `<device>.csv` per stream and `gt.csv`.
/// Returns the manifest path.
pub fn write_sequence(dir: &Path, bundle: &SequenceBundle, gt_rate_hz: f64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut devices = Vec::with_capacity(bundle.streams.len());
    for s in &bundle.streams {
        let file = format!("{}.csv", s.device_id());
        write_stream_csv(&dir.join(&file), s)?;
        devices.push(DeviceEntry {
            id: s.device_id().to_string(),
            file,
            rate_hz: s.rate_hz(),
        });
    }
    write_ground_truth_csv(&dir.join("gt.csv"), &bundle.ground_truth)?;
    let manifest = Manifest {
        sequence_id: bundle.sequence_id.clone(),
        common_rate_hz: bundle.common_rate_hz,
        devices,
        ground_truth: GroundTruthEntry {
            file: "gt.csv".into(),
            rate_hz: gt_rate_hz,
        },
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}
