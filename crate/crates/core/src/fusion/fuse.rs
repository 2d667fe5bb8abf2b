//! Source streams, per-time stacking of observed pixels and downsampling.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use nalgebra::{DMatrix, DVector};

use super::fgrid::{read_frame, ObservationFrame, ParseOptions};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Frames within this many seconds of a requested time belong to it.
pub const ALIGN_TOLERANCE_SECS: i64 = 30;

/// Time-ordered frames from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceStream {
    pub source_id: String,
    pub frames: Vec<ObservationFrame>,
    pub cadence_secs: i64,
}

impl SourceStream {
    /// Validates a shared grid, source id, strictly increasing timestamps and
    /// alignment to the cadence (relative to the first frame).
    pub fn new(source_id: &str, mut frames: Vec<ObservationFrame>, cadence_secs: i64) -> Result<Self> {
        if cadence_secs <= 0 {
            return Err(Error::InvalidArgument("cadence must be positive".into()));
        }
        frames.sort_by_key(|f| f.timestamp);
        if let Some(first) = frames.first() {
            let t0 = first.timestamp;
            for w in frames.windows(2) {
                if w[1].timestamp <= w[0].timestamp {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate timestamp {} in stream {source_id}",
                        w[1].timestamp
                    )));
                }
            }
            for f in &frames {
                if f.source_id != source_id {
                    return Err(Error::InvalidArgument(format!(
                        "frame from {} in stream {source_id}",
                        f.source_id
                    )));
                }
                if !f.grid.same_shape(&first.grid) {
                    return Err(Error::DimensionMismatch(format!(
                        "stream {source_id} mixes grid shapes"
                    )));
                }
                let off = (f.timestamp - t0).num_seconds().rem_euclid(cadence_secs);
                if off.min(cadence_secs - off) > ALIGN_TOLERANCE_SECS {
                    return Err(Error::Misaligned(format!(
                        "{} in stream {source_id} (cadence {cadence_secs}s)",
                        f.timestamp
                    )));
                }
            }
        }
        Ok(Self {
            source_id: source_id.to_string(),
            frames,
            cadence_secs,
        })
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.frames.first().map(|f| &f.grid)
    }

    /// The frame observed at `t`, if any. A frame near `t` but outside the
    /// alignment tolerance is an error.
    pub fn frame_at(&self, t: DateTime<Utc>) -> Result<Option<&ObservationFrame>> {
        let tol = Duration::seconds(ALIGN_TOLERANCE_SECS);
        let half = Duration::seconds(self.cadence_secs) / 2;
        for f in &self.frames {
            let d = (f.timestamp - t).abs();
            if d <= tol {
                return Ok(Some(f));
            }
            if d < half {
                return Err(Error::Misaligned(format!(
                    "{} from {} is {}s away from {t}",
                    f.timestamp,
                    self.source_id,
                    d.num_seconds()
                )));
            }
        }
        Ok(None)
    }
}

/// Read every `*.fgrid` file in `dir` and group the frames into streams
/// ordered by source id.
pub fn load_streams(dir: &Path, opts: &ParseOptions, cadence_secs: i64) -> Result<Vec<SourceStream>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "fgrid"))
        .collect();
    paths.sort();
    let mut by_source: BTreeMap<String, Vec<ObservationFrame>> = BTreeMap::new();
    for p in paths {
        let f = read_frame(&p, opts)?;
        by_source.entry(f.source_id.clone()).or_default().push(f);
    }
    by_source
        .into_iter()
        .map(|(id, frames)| SourceStream::new(&id, frames, cadence_secs))
        .collect()
}

/// Sorted union of the timestamps of all streams.
pub fn common_times(streams: &[SourceStream]) -> Vec<DateTime<Utc>> {
    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let tol = Duration::seconds(ALIGN_TOLERANCE_SECS);
    let mut all: Vec<_> = streams
        .iter()
        .flat_map(|s| s.frames.iter().map(|f| f.timestamp))
        .collect();
    all.sort();
    for t in all {
        if times.last().is_none_or(|&l| t - l > tol) {
            times.push(t);
        }
    }
    times
}

/// Uniformly spaced `g1 x g2` sub-grid of row and column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownsampleMask {
    pub n1: usize,
    pub n2: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

impl DownsampleMask {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows.binary_search(&i).is_ok() && self.cols.binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cell `k` of `g` evenly spaced cells sits at `round((k + 1/2) n / g - 1/2)`.
pub fn build_downsample_mask(grid: &GridSpec, g1: usize, g2: usize) -> Result<DownsampleMask> {
    let axis = |n: usize, g: usize| -> Result<Vec<usize>> {
        if g == 0 || g > n {
            return Err(Error::InvalidArgument(format!(
                "downsample size {g} outside 1..={n}"
            )));
        }
        Ok((0..g)
            .map(|k| ((k as f64 + 0.5) * n as f64 / g as f64 - 0.5).round() as usize)
            .collect())
    };
    Ok(DownsampleMask {
        n1: grid.n1,
        n2: grid.n2,
        rows: axis(grid.n1, g1)?,
        cols: axis(grid.n2, g2)?,
    })
}

/// Rows of the stacked vector that come from one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRows {
    pub source_id: String,
    /// Row-major pixel index for each stacked row; realizes the 0/1 selector.
    pub pixels: Vec<usize>,
    pub range: Range<usize>,
}

impl SourceRows {
    /// Dense `rows x N` selector matrix.
    pub fn selector(&self, n: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.pixels.len(), n);
        for (r, &p) in self.pixels.iter().enumerate() {
            s[(r, p)] = 1.0;
        }
        s
    }
}

/// Observed pixels of all sources reporting at one time, stacked by
/// ascending source id.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedObservation {
    pub time: DateTime<Utc>,
    pub grid: GridSpec,
    pub y: DVector<f64>,
    pub sources: Vec<SourceRows>,
}

impl FusedObservation {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `F_t = [S B, 0]` with `S` the stacked selectors and `B` the `N x q`
    /// basis matrix; `bias_cols` zero columns are appended for the bias half.
    pub fn observation_matrix(&self, basis: &DMatrix<f64>, bias_cols: usize) -> DMatrix<f64> {
        let q = basis.ncols();
        let mut f = DMatrix::zeros(self.len(), q + bias_cols);
        for src in &self.sources {
            for (r, &p) in src.range.clone().zip(src.pixels.iter()) {
                f.view_mut((r, 0), (1, q)).copy_from(&basis.row(p));
            }
        }
        f
    }

    /// Scatter the stacked vector back onto one masked field per source.
    pub fn scatter(&self, y: &DVector<f64>) -> Vec<(String, Field)> {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        self.sources
            .iter()
            .map(|src| {
                let mut v = DMatrix::from_element(n1, n2, f64::NAN);
                let mut o = DMatrix::from_element(n1, n2, false);
                for (r, &p) in src.range.clone().zip(src.pixels.iter()) {
                    v[(p / n2, p % n2)] = y[r];
                    o[(p / n2, p % n2)] = true;
                }
                let field = Field::with_mask(v, o).expect("shapes agree");
                (src.source_id.clone(), field)
            })
            .collect()
    }
}

/// Stack the observed pixels at time `t` across streams.
pub fn fuse(
    streams: &[SourceStream],
    grid: &GridSpec,
    t: DateTime<Utc>,
    downsample: Option<&DownsampleMask>,
) -> Result<FusedObservation> {
    if let Some(d) = downsample {
        if d.n1 != grid.n1 || d.n2 != grid.n2 {
            return Err(Error::DimensionMismatch("downsample mask grid".into()));
        }
    }
    let mut order: Vec<&SourceStream> = streams.iter().collect();
    order.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let mut y = Vec::new();
    let mut sources = Vec::new();
    for stream in order {
        let Some(frame) = stream.frame_at(t)? else {
            continue;
        };
        if !frame.grid.same_shape(grid) {
            return Err(Error::DimensionMismatch(format!(
                "{} frame is {}x{}, grid is {}x{}",
                stream.source_id, frame.grid.n1, frame.grid.n2, grid.n1, grid.n2
            )));
        }
        let start = y.len();
        let mut pixels = Vec::new();
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                if !frame.field.is_observed(i, j) {
                    continue;
                }
                if downsample.is_some_and(|d| !d.contains(i, j)) {
                    continue;
                }
                pixels.push(grid.index(i, j));
                y.push(frame.field.values[(i, j)]);
            }
        }
        sources.push(SourceRows {
            source_id: stream.source_id.clone(),
            pixels,
            range: start..y.len(),
        });
    }
    Ok(FusedObservation {
        time: t,
        grid: grid.clone(),
        y: DVector::from_vec(y),
        sources,
    })
}
