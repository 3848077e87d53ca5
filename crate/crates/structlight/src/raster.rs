//! Raster containers shared by every stage of the pipeline.
//!
//! A [`RasterF`] is a row-major grid of `f64` values; depending on context the
//! values are normalized intensities, radians, or millimeters. NaN is the
//! in-band marker for invalid pixels inside float rasters; a [`Mask`] is the
//! authoritative validity record where one exists.
//!
//! Rasters are immutable in spirit after construction: all pipeline
//! operations take `&RasterF` and build fresh outputs, so sharing across
//! threads is safe.

use crate::error::Error;
use crate::Result;

/// 2-D grid of real values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterF {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl RasterF {
    /// A raster filled with `fill`.
    pub fn filled(width: usize, height: usize, fill: f64) -> Self {
        assert!(width >= 1 && height >= 1, "raster dimensions must be >= 1");
        Self {
            width,
            height,
            values: vec![fill; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Build from an existing value vector; `values.len()` must equal `width * height`.
    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "raster dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Build by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.values[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Pointwise map into a new raster.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims(&self, other: &RasterF) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Error unless `self` and all `others` share dimensions.
    pub fn check_dims(&self, others: &[&RasterF], what: &str) -> Result<()> {
        for r in others {
            if !self.same_dims(r) {
                return Err(Error::DimensionMismatch(format!(
                    "{what}: {}x{} vs {}x{}",
                    self.width, self.height, r.width, r.height
                )));
            }
        }
        Ok(())
    }
}

/// Row-major grid of booleans gating a co-indexed raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl Mask {
    pub fn filled(width: usize, height: usize, fill: bool) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        Self {
            width,
            height,
            flags: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut flags = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                flags.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            flags,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.flags[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.flags[y * self.width + x] = v;
    }

    pub fn count_true(&self) -> usize {
        self.flags.iter().filter(|&&b| b).count()
    }

    pub fn matches_raster(&self, r: &RasterF) -> bool {
        self.width == r.width() && self.height == r.height()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

/// Image axis along which the projected phase increases.
///
/// `X` means columns carry the phase ramp (vertical fringes); `Y` means rows
/// do (horizontal fringes). All geometry-aware operations take the axis from
/// the pattern spec so either orientation works.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseAxis {
    X,
    Y,
}

impl PhaseAxis {
    /// (phase-axis coordinate, orthogonal coordinate) of pixel (x, y).
    #[inline]
    pub fn split(self, x: usize, y: usize) -> (usize, usize) {
        match self {
            PhaseAxis::X => (x, y),
            PhaseAxis::Y => (y, x),
        }
    }

    /// Inverse of [`PhaseAxis::split`]: rebuild (x, y) from (along, across).
    #[inline]
    pub fn join(self, along: usize, across: usize) -> (usize, usize) {
        match self {
            PhaseAxis::X => (along, across),
            PhaseAxis::Y => (across, along),
        }
    }

    /// Raster extent along the phase axis.
    pub fn extent(self, width: usize, height: usize) -> usize {
        match self {
            PhaseAxis::X => width,
            PhaseAxis::Y => height,
        }
    }

    /// Raster extent across the phase axis.
    pub fn cross_extent(self, width: usize, height: usize) -> usize {
        match self {
            PhaseAxis::X => height,
            PhaseAxis::Y => width,
        }
    }
}

impl std::fmt::Display for PhaseAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhaseAxis::X => write!(f, "x"),
            PhaseAxis::Y => write!(f, "y"),
        }
    }
}

impl std::str::FromStr for PhaseAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" | "col" | "column" => Ok(PhaseAxis::X),
            "y" | "row" => Ok(PhaseAxis::Y),
            other => Err(Error::Config(format!("unknown phase axis '{other}'"))),
        }
    }
}
