//! In-memory trace types and their line-oriented on-disk formats.
//!
//! Three formats are supported:
//!
//! * `csi-jsonl`: one `{"t": <seconds>, "a": [<amplitude>, ...]}` object per line.
//! * `csi-csv`: a `t,a0,a1,...` header followed by one row per packet.
//! * `keypoint-jsonl`: one `{"t": <seconds>, "kp": [[x, y, c], ... 25 triples]}` object per line.
//!
//! Parsers validate as they go and report the 1-based line of the first bad
//! record. Rows are never re-sorted or dropped.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of body keypoints per frame (BODY_25 layout).
pub const KEYPOINT_COUNT: usize = 25;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("stream contains no records")]
    Empty,
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestamp {t} does not increase on the previous record")]
    NonIncreasing { line: usize, t: f64 },
    #[error("line {line}: expected {expected} amplitude columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: expected {KEYPOINT_COUNT} keypoints, found {found}")]
    KeypointCount { line: usize, found: usize },
    #[error("line {line}: {message}")]
    InvalidValue { line: usize, message: String },
    #[error("need at least 2 points to resample, got {0}")]
    TooFewPoints(usize),
    #[error("timestamps span zero duration")]
    ZeroSpan,
    #[error("invalid rate {0} Hz")]
    InvalidRate(f64),
    #[error("series samples must be finite")]
    NonFiniteSample,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TraceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Where a scalar series came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesOrigin {
    Keypoint { id: usize, axis: Axis },
    Subcarrier(usize),
    Label(String),
}

impl fmt::Display for SeriesOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Keypoint { id, axis } => {
                let axis = match axis {
                    Axis::X => "x",
                    Axis::Y => "y",
                };
                write!(f, "keypoint {id} {axis}")
            }
            Self::Subcarrier(c) => write!(f, "subcarrier {c}"),
            Self::Label(s) => f.write_str(s),
        }
    }
}

/// CSI amplitude trace: one row per packet, one column per subcarrier stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiTrace<T> {
    timestamps: Vec<f64>,
    amplitudes: Vec<T>,
    columns: usize,
    nominal_rate: f64,
}

impl<T: Scalar> CsiTrace<T> {
    /// Builds a trace from row-major amplitudes, validating every invariant.
    pub fn new(timestamps: Vec<f64>, amplitudes: Vec<T>, columns: usize) -> Result<Self> {
        if timestamps.is_empty() || columns == 0 {
            return Err(TraceError::Empty);
        }
        if amplitudes.len() != timestamps.len() * columns {
            return Err(TraceError::ColumnCount {
                line: amplitudes.len() / columns + 1,
                expected: columns,
                found: amplitudes.len() % columns,
            });
        }
        check_times(&timestamps)?;
        for (i, row) in amplitudes.chunks(columns).enumerate() {
            check_amplitudes(row, i + 1)?;
        }
        let nominal_rate = infer_rate(&timestamps);
        Ok(Self { timestamps, amplitudes, columns, nominal_rate })
    }

    pub fn from_rows(timestamps: Vec<f64>, rows: &[Vec<T>]) -> Result<Self> {
        let columns = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * columns);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns {
                return Err(TraceError::ColumnCount { line: i + 1, expected: columns, found: row.len() });
            }
            flat.extend_from_slice(row);
        }
        Self::new(timestamps, flat, columns)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    /// Packet rate inferred from the first and last timestamps; 0 for a single packet.
    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.amplitudes[i * self.columns..(i + 1) * self.columns]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.amplitudes.chunks(self.columns)
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        self.rows().map(|r| r[c]).collect()
    }

    /// Resamples every column onto a shared uniform grid at `rate`.
    pub fn uniform_columns(&self, rate: f64) -> Result<Vec<UniformSeries<T>>> {
        let grid = ResampleGrid::new(&self.timestamps, rate)?;
        Ok((0..self.columns)
            .map(|c| {
                let col = self.column(c);
                UniformSeries::from_parts(rate, grid.t0, grid.apply(&col), SeriesOrigin::Subcarrier(c))
            })
            .collect())
    }

    pub fn cast<U: Scalar>(&self) -> CsiTrace<U> {
        CsiTrace {
            timestamps: self.timestamps.clone(),
            amplitudes: self.amplitudes.iter().map(|&a| U::lit(a.as_f64())).collect(),
            columns: self.columns,
            nominal_rate: self.nominal_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint<T> {
    pub x: T,
    pub y: T,
    pub confidence: T,
}

impl<T: Scalar> Keypoint<T> {
    pub fn missing() -> Self {
        Self { x: T::zero(), y: T::zero(), confidence: T::zero() }
    }

    pub fn is_missing(&self) -> bool {
        self.confidence <= T::zero()
    }
}

pub type Frame<T> = [Keypoint<T>; KEYPOINT_COUNT];

/// Per-frame body keypoints as emitted by a pose extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointTrace<T> {
    frame_times: Vec<f64>,
    frames: Vec<Frame<T>>,
    frame_rate: f64,
}

impl<T: Scalar> KeypointTrace<T> {
    pub fn new(frame_times: Vec<f64>, frames: Vec<Frame<T>>) -> Result<Self> {
        if frame_times.is_empty() {
            return Err(TraceError::Empty);
        }
        if frames.len() != frame_times.len() {
            return Err(TraceError::Malformed {
                line: frames.len().min(frame_times.len()) + 1,
                message: format!("{} frame times for {} frames", frame_times.len(), frames.len()),
            });
        }
        check_times(&frame_times)?;
        for (i, frame) in frames.iter().enumerate() {
            check_frame(frame, i + 1)?;
        }
        let frame_rate = infer_rate(&frame_times);
        Ok(Self { frame_times, frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    /// Frame rate inferred from the first and last frame times; 0 for a single frame.
    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn cast<U: Scalar>(&self) -> KeypointTrace<U> {
        let conv = |k: &Keypoint<T>| Keypoint {
            x: U::lit(k.x.as_f64()),
            y: U::lit(k.y.as_f64()),
            confidence: U::lit(k.confidence.as_f64()),
        };
        KeypointTrace {
            frame_times: self.frame_times.clone(),
            frames: self.frames.iter().map(|f| std::array::from_fn(|i| conv(&f[i]))).collect(),
            frame_rate: self.frame_rate,
        }
    }
}

/// A single real-valued series sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries<T> {
    rate: f64,
    t0: f64,
    samples: Vec<T>,
    origin: SeriesOrigin,
}

impl<T: Scalar> UniformSeries<T> {
    pub fn new(rate: f64, t0: f64, samples: Vec<T>, origin: SeriesOrigin) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(TraceError::InvalidRate(rate));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(TraceError::NonFiniteSample);
        }
        Ok(Self { rate, t0, samples, origin })
    }

    /// Internal constructor for samples already known to be finite.
    pub(crate) fn from_parts(rate: f64, t0: f64, samples: Vec<T>, origin: SeriesOrigin) -> Self {
        debug_assert!(rate > 0.0);
        Self { rate, t0, samples, origin }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn origin(&self) -> &SeriesOrigin {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate
    }

    /// Time just past the last sample.
    pub fn end_time(&self) -> f64 {
        self.time_at(self.samples.len())
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.rate
    }

    /// Index of the sample at or after `t`, clamped to `[0, len]`.
    pub fn index_at(&self, t: f64) -> usize {
        let raw = ((t - self.t0) * self.rate - 1e-9).ceil();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(self.samples.len())
        }
    }

    /// Samples with times in `[start, end)`, clipped to the series bounds.
    pub fn slice_time(&self, start: f64, end: f64) -> Self {
        let a = self.index_at(start);
        let b = self.index_at(end).max(a);
        Self::from_parts(self.rate, self.time_at(a), self.samples[a..b].to_vec(), self.origin.clone())
    }

    pub fn with_samples(&self, samples: Vec<T>) -> Self {
        Self::from_parts(self.rate, self.t0, samples, self.origin.clone())
    }

    pub fn cast<U: Scalar>(&self) -> UniformSeries<U> {
        UniformSeries {
            rate: self.rate,
            t0: self.t0,
            samples: self.samples.iter().map(|&s| U::lit(s.as_f64())).collect(),
            origin: self.origin.clone(),
        }
    }
}

/// Linear-interpolation weights from an irregular time base onto a uniform grid.
pub(crate) struct ResampleGrid {
    pub(crate) t0: f64,
    /// (left index, weight of the right neighbour) per grid point.
    taps: Vec<(usize, f64)>,
}

impl ResampleGrid {
    pub(crate) fn new(timestamps: &[f64], rate: f64) -> Result<Self> {
        if timestamps.len() < 2 {
            return Err(TraceError::TooFewPoints(timestamps.len()));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(TraceError::InvalidRate(rate));
        }
        check_times(timestamps)?;
        let t0 = timestamps[0];
        let last = timestamps[timestamps.len() - 1];
        let span = last - t0;
        if span <= 0.0 {
            return Err(TraceError::ZeroSpan);
        }
        let count = (span * rate + 1e-9).floor() as usize + 1;
        let mut taps = Vec::with_capacity(count);
        let mut j = 0;
        for k in 0..count {
            let t = (t0 + k as f64 / rate).min(last);
            while j + 2 < timestamps.len() && timestamps[j + 1] <= t {
                j += 1;
            }
            let (ta, tb) = (timestamps[j], timestamps[j + 1]);
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            taps.push((j, w));
        }
        Ok(Self { t0, taps })
    }

    pub(crate) fn apply<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        self.taps
            .iter()
            .map(|&(j, w)| {
                let (a, b) = (values[j], values[j + 1]);
                if w == 0.0 {
                    a
                } else {
                    a + (b - a) * T::lit(w)
                }
            })
            .collect()
    }
}

/// Linearly interpolates `(timestamps, values)` onto a uniform grid spanning
/// `[first, last]` at `target_rate`. Never extrapolates.
pub fn resample_uniform<T: Scalar>(timestamps: &[f64], values: &[T], target_rate: f64) -> Result<UniformSeries<T>> {
    if timestamps.len() != values.len() {
        return Err(TraceError::Malformed {
            line: timestamps.len().min(values.len()) + 1,
            message: "timestamps and values differ in length".into(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TraceError::NonFiniteSample);
    }
    let grid = ResampleGrid::new(timestamps, target_rate)?;
    Ok(UniformSeries::from_parts(
        target_rate,
        grid.t0,
        grid.apply(values),
        SeriesOrigin::Label("resampled".into()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiFormat {
    CsiJsonl,
    CsiCsv,
}

impl FromStr for CsiFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csi-jsonl" | "jsonl" => Ok(Self::CsiJsonl),
            "csi-csv" | "csv" => Ok(Self::CsiCsv),
            other => Err(format!("unknown CSI format '{other}'")),
        }
    }
}

impl CsiFormat {
    /// Guesses the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::CsiCsv,
            _ => Self::CsiJsonl,
        }
    }
}

#[derive(Deserialize, Serialize)]
struct CsiRecord {
    t: f64,
    a: Vec<f64>,
}

#[derive(Deserialize, Serialize)]
struct KeypointRecord {
    t: f64,
    kp: Vec<[f64; 3]>,
}

pub fn parse_csi_trace<T: Scalar, R: BufRead>(input: R, format: CsiFormat) -> Result<CsiTrace<T>> {
    match format {
        CsiFormat::CsiJsonl => parse_csi_jsonl(input),
        CsiFormat::CsiCsv => parse_csi_csv(input),
    }
}

struct CsiBuilder<T> {
    timestamps: Vec<f64>,
    amplitudes: Vec<T>,
    columns: Option<usize>,
}

impl<T: Scalar> CsiBuilder<T> {
    fn new() -> Self {
        Self { timestamps: Vec::new(), amplitudes: Vec::new(), columns: None }
    }

    fn push(&mut self, line: usize, t: f64, row: impl ExactSizeIterator<Item = f64>) -> Result<()> {
        if !t.is_finite() {
            return Err(TraceError::InvalidValue { line, message: format!("timestamp {t} is not finite") });
        }
        if let Some(&prev) = self.timestamps.last() {
            if t <= prev {
                return Err(TraceError::NonIncreasing { line, t });
            }
        }
        let found = row.len();
        let expected = *self.columns.get_or_insert(found);
        if found != expected || found == 0 {
            return Err(TraceError::ColumnCount { line, expected, found });
        }
        for a in row {
            if !(a.is_finite() && a >= 0.0) {
                return Err(TraceError::InvalidValue { line, message: format!("amplitude {a} must be finite and >= 0") });
            }
            self.amplitudes.push(T::lit(a));
        }
        self.timestamps.push(t);
        Ok(())
    }

    fn finish(self) -> Result<CsiTrace<T>> {
        let columns = self.columns.ok_or(TraceError::Empty)?;
        if self.timestamps.is_empty() {
            return Err(TraceError::Empty);
        }
        let nominal_rate = infer_rate(&self.timestamps);
        Ok(CsiTrace { timestamps: self.timestamps, amplitudes: self.amplitudes, columns, nominal_rate })
    }
}

fn parse_csi_jsonl<T: Scalar, R: BufRead>(input: R) -> Result<CsiTrace<T>> {
    let mut builder = CsiBuilder::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec: CsiRecord = serde_json::from_str(trimmed)
            .map_err(|e| TraceError::Malformed { line: line_no, message: e.to_string() })?;
        builder.push(line_no, rec.t, rec.a.into_iter())?;
    }
    builder.finish()
}

fn parse_csi_csv<T: Scalar, R: BufRead>(input: R) -> Result<CsiTrace<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| TraceError::Malformed { line: 1, message: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.len() == 1 && headers[0].is_empty() {
        return Err(TraceError::Empty);
    }
    if &headers[0] != "t" {
        return Err(TraceError::Malformed { line: 1, message: format!("first header must be 't', found '{}'", &headers[0]) });
    }
    for (i, h) in headers.iter().enumerate().skip(1) {
        if h != format!("a{}", i - 1) {
            return Err(TraceError::Malformed { line: 1, message: format!("header {i} must be 'a{}', found '{h}'", i - 1) });
        }
    }
    let mut builder = CsiBuilder::new();
    builder.columns = Some(headers.len() - 1);
    for record in reader.records() {
        let record = record.map_err(|e| TraceError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| TraceError::Malformed { line, message: format!("'{s}': {e}") })
        };
        let t = parse(record.get(0).unwrap_or(""))?;
        let row = record.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        builder.push(line, t, row.into_iter())?;
    }
    builder.finish()
}

pub fn parse_keypoint_trace<T: Scalar, R: BufRead>(input: R) -> Result<KeypointTrace<T>> {
    let mut times = Vec::new();
    let mut frames = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec: KeypointRecord = serde_json::from_str(trimmed)
            .map_err(|e| TraceError::Malformed { line: line_no, message: e.to_string() })?;
        if !rec.t.is_finite() {
            return Err(TraceError::InvalidValue { line: line_no, message: format!("timestamp {} is not finite", rec.t) });
        }
        if let Some(&prev) = times.last() {
            if rec.t <= prev {
                return Err(TraceError::NonIncreasing { line: line_no, t: rec.t });
            }
        }
        if rec.kp.len() != KEYPOINT_COUNT {
            return Err(TraceError::KeypointCount { line: line_no, found: rec.kp.len() });
        }
        let frame: Frame<T> = std::array::from_fn(|i| {
            let [x, y, c] = rec.kp[i];
            Keypoint { x: T::lit(x), y: T::lit(y), confidence: T::lit(c) }
        });
        check_frame(&frame, line_no)?;
        times.push(rec.t);
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(TraceError::Empty);
    }
    let frame_rate = infer_rate(&times);
    Ok(KeypointTrace { frame_times: times, frames, frame_rate })
}

pub fn write_csi_trace<T: Scalar, W: Write>(out: W, trace: &CsiTrace<T>, format: CsiFormat) -> Result<()> {
    match format {
        CsiFormat::CsiJsonl => write_csi_jsonl(out, trace),
        CsiFormat::CsiCsv => write_csi_csv(out, trace),
    }
}

fn write_csi_jsonl<T: Scalar, W: Write>(mut out: W, trace: &CsiTrace<T>) -> Result<()> {
    for (t, row) in trace.timestamps.iter().zip(trace.rows()) {
        let rec = CsiRecord { t: *t, a: row.iter().map(|a| a.as_f64()).collect() };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_csi_csv<T: Scalar, W: Write>(out: W, trace: &CsiTrace<T>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let map_csv = |e: csv::Error| TraceError::Io(e.into());
    let header = std::iter::once("t".to_string()).chain((0..trace.columns).map(|c| format!("a{c}")));
    writer.write_record(header).map_err(map_csv)?;
    for (t, row) in trace.timestamps.iter().zip(trace.rows()) {
        let fields = std::iter::once(t.to_string()).chain(row.iter().map(|a| a.as_f64().to_string()));
        writer.write_record(fields).map_err(map_csv)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_keypoint_trace<T: Scalar, W: Write>(mut out: W, trace: &KeypointTrace<T>) -> Result<()> {
    for (t, frame) in trace.frame_times.iter().zip(&trace.frames) {
        let rec = KeypointRecord {
            t: *t,
            kp: frame.iter().map(|k| [k.x.as_f64(), k.y.as_f64(), k.confidence.as_f64()]).collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn infer_rate(times: &[f64]) -> f64 {
    match times {
        [first, .., last] if last > first => (times.len() - 1) as f64 / (last - first),
        _ => 0.0,
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    for (i, t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(TraceError::InvalidValue { line: i + 1, message: format!("timestamp {t} is not finite") });
        }
        if i > 0 && *t <= times[i - 1] {
            return Err(TraceError::NonIncreasing { line: i + 1, t: *t });
        }
    }
    Ok(())
}

fn check_amplitudes<T: Scalar>(row: &[T], line: usize) -> Result<()> {
    match row.iter().find(|a| !(a.is_finite() && **a >= T::zero())) {
        Some(a) => Err(TraceError::InvalidValue { line, message: format!("amplitude {a} must be finite and >= 0") }),
        None => Ok(()),
    }
}

fn check_frame<T: Scalar>(frame: &Frame<T>, line: usize) -> Result<()> {
    for (i, k) in frame.iter().enumerate() {
        if !(k.x.is_finite() && k.y.is_finite()) {
            return Err(TraceError::InvalidValue { line, message: format!("keypoint {i} has non-finite coordinates") });
        }
        if !(k.confidence >= T::zero() && k.confidence <= T::one()) {
            return Err(TraceError::InvalidValue {
                line,
                message: format!("keypoint {i} confidence {} outside [0, 1]", k.confidence),
            });
        }
    }
    Ok(())
}
