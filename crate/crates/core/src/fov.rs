//! Viewport footprints on the equirectangular grid, FoV weight maps, their
//! pooled semantic-level versions, multi-user overlap and head traces.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;

/// Grid dimensions must be multiples of this so a 3×3 tiling pooled by 16
/// stays integral.
pub const GRID_MULTIPLE: usize = 48;
/// Number of stride-2 pooling stages between pixel and feature grids.
pub const SEMANTIC_LEVELS: u32 = 4;

#[derive(Debug, Error)]
pub enum FovError {
    #[error("invalid viewport: {0}")]
    Viewport(String),
    #[error("grid {rows}x{cols}: {reason}")]
    Dimensions {
        rows: usize,
        cols: usize,
        reason: String,
    },
    #[error("outside weight {0} not in [0, 1)")]
    Xi(f64),
    #[error("unsupported pooling kernel {0} (expected 1 or 2)")]
    Kernel(usize),
    #[error("trace line {line}: {message}")]
    Trace { line: u64, message: String },
    #[error("invalid trace parameters: {0}")]
    TraceParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub width_deg: f64,
    pub height_deg: f64,
}

impl Viewport {
    pub const DEFAULT_WIDTH_DEG: f64 = 120.0;
    pub const DEFAULT_HEIGHT_DEG: f64 = 60.0;

    pub fn new(yaw_deg: f64, pitch_deg: f64, width_deg: f64, height_deg: f64) -> Result<Self, FovError> {
        let v = Self {
            yaw_deg,
            pitch_deg,
            width_deg,
            height_deg,
        };
        v.validate()?;
        Ok(v)
    }

    /// 120°×60° viewport looking at `(yaw, pitch)`.
    pub fn looking_at(yaw_deg: f64, pitch_deg: f64) -> Result<Self, FovError> {
        Self::new(yaw_deg, pitch_deg, Self::DEFAULT_WIDTH_DEG, Self::DEFAULT_HEIGHT_DEG)
    }

    pub fn validate(&self) -> Result<(), FovError> {
        if !(-180.0..180.0).contains(&self.yaw_deg) {
            return Err(FovError::Viewport(format!("yaw {} not in [-180, 180)", self.yaw_deg)));
        }
        if !(-90.0..=90.0).contains(&self.pitch_deg) {
            return Err(FovError::Viewport(format!("pitch {} not in [-90, 90]", self.pitch_deg)));
        }
        if !(self.width_deg > 0.0 && self.width_deg <= 360.0) {
            return Err(FovError::Viewport(format!("width {} not in (0, 360]", self.width_deg)));
        }
        if !(self.height_deg > 0.0 && self.height_deg <= 180.0) {
            return Err(FovError::Viewport(format!("height {} not in (0, 180]", self.height_deg)));
        }
        Ok(())
    }
}

/// Binary region of the ERP grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
}

impl Footprint {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![false; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            mask: vec![true; rows * cols],
        }
    }

    /// Axis-aligned rectangle `[r0, r1) × [c0, c1)` without wrap.
    pub fn rect(rows: usize, cols: usize, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> Self {
        let mut fp = Self::empty(rows, cols);
        for i in r.start..r.end.min(rows) {
            for j in c.start..c.end.min(cols) {
                fp.mask[i * cols + j] = true;
            }
        }
        fp
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Sorted indices of rows/columns with at least one active cell.
    pub fn active_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .filter(|&i| (0..self.cols).any(|j| self.contains(i, j)))
            .collect()
    }

    pub fn active_cols(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&j| (0..self.rows).any(|i| self.contains(i, j)))
            .collect()
    }

    pub fn intersect(&self, other: &Footprint) -> Footprint {
        self.zip(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Footprint) -> Footprint {
        self.zip(other, |a, b| a && !b)
    }

    fn zip(&self, other: &Footprint, f: impl Fn(bool, bool) -> bool) -> Footprint {
        assert_eq!(self.dims(), other.dims(), "footprint dimensions differ");
        Footprint {
            rows: self.rows,
            cols: self.cols,
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

fn check_grid(rows: usize, cols: usize) -> Result<(), FovError> {
    if rows == 0 || cols == 0 || rows % GRID_MULTIPLE != 0 || cols % GRID_MULTIPLE != 0 {
        return Err(FovError::Dimensions {
            rows,
            cols,
            reason: format!("both dimensions must be positive multiples of {GRID_MULTIPLE}"),
        });
    }
    Ok(())
}

/// Rectangular ERP footprint of a viewport.
///
/// Rows span `height/180 · H` around the pitch row and are clipped at the
/// poles; columns span `width/360 · W` around the yaw column and wrap at
/// the ±180° seam.
pub fn viewport_footprint(v: &Viewport, rows: usize, cols: usize) -> Result<Footprint, FovError> {
    v.validate()?;
    check_grid(rows, cols)?;
    let n_rows = ((v.height_deg / 180.0 * rows as f64).round() as usize).min(rows);
    let n_cols = ((v.width_deg / 360.0 * cols as f64).round() as usize).min(cols);
    let center_row = (90.0 - v.pitch_deg) / 180.0 * rows as f64;
    let center_col = (v.yaw_deg + 180.0) / 360.0 * cols as f64;
    let row_start = (center_row - n_rows as f64 / 2.0 + 0.5).floor() as i64;
    let col_start = (center_col - n_cols as f64 / 2.0 + 0.5).floor() as i64;

    let mut fp = Footprint::empty(rows, cols);
    for di in 0..n_rows as i64 {
        let i = row_start + di;
        if i < 0 || i >= rows as i64 {
            continue;
        }
        for dj in 0..n_cols as i64 {
            let j = (col_start + dj).rem_euclid(cols as i64) as usize;
            fp.mask[i as usize * cols + j] = true;
        }
    }
    Ok(fp)
}

/// Pixel-level FoV weight map: 1 inside the footprint, `outside` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FovMap {
    pub weights: Grid,
    pub outside: f64,
}

/// Feature-level FoV map, `H/16 × W/16`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFovMap {
    pub weights: Grid,
}

impl SemanticFovMap {
    pub fn flatten(&self) -> &[f64] {
        self.weights.as_slice()
    }
}

pub fn build_fov_map(region: &Footprint, xi: f64) -> Result<FovMap, FovError> {
    if !(0.0..1.0).contains(&xi) {
        return Err(FovError::Xi(xi));
    }
    Ok(FovMap {
        weights: coefficient_mask(region, 1.0, xi),
        outside: xi,
    })
}

/// `inside` on the region and `outside` elsewhere, with no range checks.
/// Covers masks whose outside coefficient is negative.
pub fn coefficient_mask(region: &Footprint, inside: f64, outside: f64) -> Grid {
    Grid::from_fn(region.rows, region.cols, |i, j| {
        if region.contains(i, j) {
            inside
        } else {
            outside
        }
    })
}

/// `levels` successive stride-2 pools. `kernel == 2` averages each 2×2
/// block; `kernel == 1` keeps the top-left sample of each block.
pub fn pool_grid(grid: &Grid, levels: u32, kernel: usize) -> Result<Grid, FovError> {
    if kernel != 1 && kernel != 2 {
        return Err(FovError::Kernel(kernel));
    }
    let factor = 1usize << levels;
    let (rows, cols) = grid.dims();
    if rows % factor != 0 || cols % factor != 0 || rows == 0 || cols == 0 {
        return Err(FovError::Dimensions {
            rows,
            cols,
            reason: format!("not divisible by {factor}"),
        });
    }
    let mut current = grid.clone();
    for _ in 0..levels {
        let (r, c) = current.dims();
        current = Grid::from_fn(r / 2, c / 2, |i, j| {
            if kernel == 1 {
                current.get(2 * i, 2 * j)
            } else {
                (current.get(2 * i, 2 * j)
                    + current.get(2 * i, 2 * j + 1)
                    + current.get(2 * i + 1, 2 * j)
                    + current.get(2 * i + 1, 2 * j + 1))
                    / 4.0
            }
        });
    }
    Ok(current)
}

pub fn pool_to_semantic(map: &FovMap, levels: u32, kernel: usize) -> Result<SemanticFovMap, FovError> {
    Ok(SemanticFovMap {
        weights: pool_grid(&map.weights, levels, kernel)?,
    })
}

/// Viewport → footprint → FoV map → semantic map, with the default four levels.
pub fn semantic_fov(
    v: &Viewport,
    rows: usize,
    cols: usize,
    xi: f64,
    kernel: usize,
) -> Result<SemanticFovMap, FovError> {
    let fp = viewport_footprint(v, rows, cols)?;
    pool_to_semantic(&build_fov_map(&fp, xi)?, SEMANTIC_LEVELS, kernel)
}

/// Region seen by every user and the remainder of each user's footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlap {
    pub common: Footprint,
    pub private: Vec<Footprint>,
}

pub fn overlap_region(viewports: &[Viewport], rows: usize, cols: usize) -> Result<Overlap, FovError> {
    if viewports.is_empty() {
        return Err(FovError::Viewport("no viewports".into()));
    }
    let footprints = viewports
        .iter()
        .map(|v| viewport_footprint(v, rows, cols))
        .collect::<Result<Vec<_>, _>>()?;
    let common = footprints
        .iter()
        .skip(1)
        .fold(footprints[0].clone(), |acc, fp| acc.intersect(fp));
    let private = footprints.iter().map(|fp| fp.difference(&common)).collect();
    Ok(Overlap { common, private })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSample {
    pub timestamp_s: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

/// Time-ordered head orientation samples of one viewer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeadTrace {
    pub samples: Vec<HeadSample>,
}

pub const TRACE_HEADER: [&str; 3] = ["timestamp_s", "yaw_deg", "pitch_deg"];

impl HeadTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn viewport(&self, index: usize, width_deg: f64, height_deg: f64) -> Option<Result<Viewport, FovError>> {
        self.samples
            .get(index)
            .map(|s| Viewport::new(s.yaw_deg, s.pitch_deg, width_deg, height_deg))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FovError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| FovError::Io(std::io::Error::other(e));
        w.write_record(TRACE_HEADER).map_err(err)?;
        for s in &self.samples {
            w.write_record([
                s.timestamp_s.to_string(),
                s.yaw_deg.to_string(),
                s.pitch_deg.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_head_trace(path: &Path) -> Result<HeadTrace, FovError> {
    read_head_trace(BufReader::new(File::open(path)?))
}

pub fn read_head_trace<R: Read>(input: R) -> Result<HeadTrace, FovError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(|e| FovError::Trace {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(TRACE_HEADER) {
        return Err(FovError::Trace {
            line: 1,
            message: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }
    let mut samples: Vec<HeadSample> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| FovError::Trace {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| FovError::Trace { line, message };
        if record.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", record.len())));
        }
        let mut values = [0.0; 3];
        for (k, field) in record.iter().enumerate() {
            values[k] = field
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("`{field}` is not a number")))?;
        }
        let [timestamp_s, yaw_deg, pitch_deg] = values;
        if !timestamp_s.is_finite() {
            return Err(bad(format!("timestamp {timestamp_s} not finite")));
        }
        if !(-180.0..180.0).contains(&yaw_deg) {
            return Err(bad(format!("yaw {yaw_deg} not in [-180, 180)")));
        }
        if !(-90.0..=90.0).contains(&pitch_deg) {
            return Err(bad(format!("pitch {pitch_deg} not in [-90, 90]")));
        }
        if let Some(prev) = samples.last() {
            if timestamp_s <= prev.timestamp_s {
                return Err(bad(format!(
                    "timestamp {timestamp_s} not after {}",
                    prev.timestamp_s
                )));
            }
        }
        samples.push(HeadSample {
            timestamp_s,
            yaw_deg,
            pitch_deg,
        });
    }
    Ok(HeadTrace { samples })
}

/// Yaw random-walk intensity of synthetic traces, degrees per √s.
const SYNTH_YAW_RATE: f64 = 30.0;
const SYNTH_PITCH_RATE: f64 = 10.0;

pub fn wrap_yaw(yaw: f64) -> f64 {
    (yaw + 180.0).rem_euclid(360.0) - 180.0
}

fn reflect_pitch(mut pitch: f64) -> f64 {
    // A few reflections suffice for any realistic step size.
    for _ in 0..8 {
        if pitch > 90.0 {
            pitch = 180.0 - pitch;
        } else if pitch < -90.0 {
            pitch = -180.0 - pitch;
        } else {
            break;
        }
    }
    pitch.clamp(-90.0, 90.0)
}

/// Bounded random-walk head trace of `round(duration / dt)` samples.
pub fn synth_head_trace(seed: u64, duration_s: f64, dt_s: f64) -> Result<HeadTrace, FovError> {
    if !(dt_s > 0.0 && dt_s.is_finite()) || !(duration_s >= 0.0 && duration_s.is_finite()) {
        return Err(FovError::TraceParams(format!(
            "duration {duration_s} s, dt {dt_s} s"
        )));
    }
    let n = (duration_s / dt_s).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut yaw = rng.random_range(-180.0..180.0);
    let mut pitch = reflect_pitch(10.0 * rng.sample::<f64, _>(StandardNormal));
    let step = dt_s.sqrt();
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(HeadSample {
            timestamp_s: i as f64 * dt_s,
            yaw_deg: yaw,
            pitch_deg: pitch,
        });
        let dy: f64 = rng.sample(StandardNormal);
        let dp: f64 = rng.sample(StandardNormal);
        yaw = wrap_yaw(yaw + SYNTH_YAW_RATE * step * dy);
        pitch = reflect_pitch(pitch + SYNTH_PITCH_RATE * step * dp);
    }
    Ok(HeadTrace { samples })
}
