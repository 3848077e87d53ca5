//! Phase-to-height calibration.
//!
//! The per-pixel mapping is the three-parameter rational model
//!
//! ```text
//! 1 / h = u + v / dphi + w / dphi^2
//! ```
//!
//! fitted by least squares over measured planes of known height (exactly
//! determined with three planes, overdetermined with four). The h = 0
//! reference plane supplies the absolute reference phase but is excluded
//! from the fit samples since 1/h diverges there.

use std::path::Path;

use crate::error::Error;
use crate::raster::RasterF;
use crate::Result;

/// Guard below which a phase difference counts as "on the reference plane".
pub const MIN_DELTA_PHI: f64 = 1e-6;

/// One measured calibration plane: known height and its per-pixel phase
/// difference from the reference plane.
#[derive(Debug, Clone)]
pub struct PlaneMeasurement {
    pub h_mm: f64,
    pub delta_phi: RasterF,
}

impl PlaneMeasurement {
    pub fn new(h_mm: f64, delta_phi: RasterF) -> Result<Self> {
        if h_mm <= 0.0 {
            return Err(Error::Config(format!(
                "calibration plane height {h_mm} must be positive (h = 0 is the reference)"
            )));
        }
        Ok(Self { h_mm, delta_phi })
    }
}

/// Per-pixel calibration model plus the reference-plane absolute phase.
#[derive(Debug, Clone)]
pub struct CalibModel {
    pub u: RasterF,
    pub v: RasterF,
    pub w: RasterF,
    pub phi_ref: RasterF,
    /// Per-pixel calibrated delta-phi range (from the fit samples); values
    /// outside it are extrapolated and tallied by [`CalibModel::height_map`].
    pub dphi_min: RasterF,
    pub dphi_max: RasterF,
    /// Pixels that could not be calibrated (NaN in u/v/w).
    pub uncalibrated: usize,
}

/// Tallies from one height-map conversion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    /// Pixels whose model denominator was non-positive (NaN output).
    pub model_violations: usize,
    /// Pixels converted outside the calibrated delta-phi range.
    pub extrapolated: usize,
}

impl CalibModel {
    /// Least-squares fit of (u, v, w) from three or more planes.
    ///
    /// Pixels where any plane's delta-phi is NaN or below [`MIN_DELTA_PHI`],
    /// or where the per-pixel system is rank deficient, become uncalibrated
    /// (NaN) and are counted.
    pub fn fit(planes: &[PlaneMeasurement], phi_ref: RasterF) -> Result<Self> {
        if planes.len() < 3 {
            return Err(Error::Config(format!(
                "need at least 3 planes to fit 3 parameters, got {}",
                planes.len()
            )));
        }
        for pair in planes.windows(2) {
            if (pair[0].h_mm - pair[1].h_mm).abs() < 1e-12 {
                return Err(Error::Config("plane heights must be distinct".into()));
            }
        }
        let (w_px, h_px) = (phi_ref.width(), phi_ref.height());
        for p in planes {
            p.delta_phi.check_dims(&[&phi_ref], "calibration planes")?;
        }

        let mut u = RasterF::filled(w_px, h_px, f64::NAN);
        let mut v = RasterF::filled(w_px, h_px, f64::NAN);
        let mut w = RasterF::filled(w_px, h_px, f64::NAN);
        let mut dphi_min = RasterF::filled(w_px, h_px, f64::NAN);
        let mut dphi_max = RasterF::filled(w_px, h_px, f64::NAN);
        let mut uncalibrated = 0usize;

        for y in 0..h_px {
            'pixel: for x in 0..w_px {
                // normal equations for rows [1, 1/dphi, 1/dphi^2] -> 1/h
                let mut ata = [[0.0f64; 3]; 3];
                let mut atb = [0.0f64; 3];
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for plane in planes {
                    let dphi = plane.delta_phi.get(x, y);
                    if dphi.is_nan() || dphi <= MIN_DELTA_PHI {
                        uncalibrated += 1;
                        continue 'pixel;
                    }
                    lo = lo.min(dphi);
                    hi = hi.max(dphi);
                    let row = [1.0, 1.0 / dphi, 1.0 / (dphi * dphi)];
                    let rhs = 1.0 / plane.h_mm;
                    for i in 0..3 {
                        for j in 0..3 {
                            ata[i][j] += row[i] * row[j];
                        }
                        atb[i] += row[i] * rhs;
                    }
                }
                let mut flat = [
                    ata[0][0], ata[0][1], ata[0][2], ata[1][0], ata[1][1], ata[1][2], ata[2][0],
                    ata[2][1], ata[2][2],
                ];
                match crate::numeric::solve(&mut flat, &mut atb, 3) {
                    Some(sol) => {
                        u.set(x, y, sol[0]);
                        v.set(x, y, sol[1]);
                        w.set(x, y, sol[2]);
                        dphi_min.set(x, y, lo);
                        dphi_max.set(x, y, hi);
                    }
                    None => uncalibrated += 1,
                }
            }
        }

        Ok(Self {
            u,
            v,
            w,
            phi_ref,
            dphi_min,
            dphi_max,
            uncalibrated,
        })
    }

    /// Convert a phase-difference map to heights in mm.
    ///
    /// Delta-phi below the guard maps to h = 0 (on-reference); values
    /// outside the per-pixel calibrated range are converted anyway but
    /// counted as extrapolations; a non-positive model denominator yields
    /// NaN and is tallied (outside model validity).
    pub fn height_map(&self, delta_phi: &RasterF) -> Result<(RasterF, ApplyStats)> {
        delta_phi.check_dims(&[&self.u], "height_map input")?;
        let mut stats = ApplyStats::default();
        let out = RasterF::from_fn(delta_phi.width(), delta_phi.height(), |x, y| {
            let dphi = delta_phi.get(x, y);
            if dphi.is_nan() {
                return f64::NAN;
            }
            if dphi.abs() <= MIN_DELTA_PHI {
                return 0.0;
            }
            let (u, v, w) = (self.u.get(x, y), self.v.get(x, y), self.w.get(x, y));
            if u.is_nan() {
                return f64::NAN;
            }
            let (lo, hi) = (self.dphi_min.get(x, y), self.dphi_max.get(x, y));
            if lo.is_finite() && (dphi < lo || dphi > hi) {
                stats.extrapolated += 1;
            }
            let denom = u + v / dphi + w / (dphi * dphi);
            if denom <= 0.0 {
                stats.model_violations += 1;
                return f64::NAN;
            }
            1.0 / denom
        });
        Ok((out, stats))
    }

    /// Max absolute residual of the fitted model against the given planes,
    /// in 1/mm, over calibrated pixels.
    pub fn max_residual(&self, planes: &[PlaneMeasurement]) -> f64 {
        let mut worst: f64 = 0.0;
        for plane in planes {
            for y in 0..self.u.height() {
                for x in 0..self.u.width() {
                    let u = self.u.get(x, y);
                    if u.is_nan() {
                        continue;
                    }
                    let dphi = plane.delta_phi.get(x, y);
                    if dphi.is_nan() || dphi <= MIN_DELTA_PHI {
                        continue;
                    }
                    let pred = u + self.v.get(x, y) / dphi + self.w.get(x, y) / (dphi * dphi);
                    worst = worst.max((pred - 1.0 / plane.h_mm).abs());
                }
            }
        }
        worst
    }

    /// Persist as FRF rasters plus a small manifest.
    pub fn save(&self, dir: impl AsRef<Path>, meta: &[(String, String)]) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        crate::io::write_raster(&self.u, dir.join("u.frf"))?;
        crate::io::write_raster(&self.v, dir.join("v.frf"))?;
        crate::io::write_raster(&self.w, dir.join("w.frf"))?;
        crate::io::write_raster(&self.phi_ref, dir.join("phi_ref.frf"))?;
        crate::io::write_raster(&self.dphi_min, dir.join("dphi_min.frf"))?;
        crate::io::write_raster(&self.dphi_max, dir.join("dphi_max.frf"))?;
        let mut entries = vec![("uncalibrated".to_string(), self.uncalibrated.to_string())];
        entries.extend_from_slice(meta);
        crate::io::write_manifest(dir.join("calibration.txt"), &entries)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Self {
            u: crate::io::read_raster(dir.join("u.frf"))?,
            v: crate::io::read_raster(dir.join("v.frf"))?,
            w: crate::io::read_raster(dir.join("w.frf"))?,
            phi_ref: crate::io::read_raster(dir.join("phi_ref.frf"))?,
            dphi_min: crate::io::read_raster(dir.join("dphi_min.frf"))?,
            dphi_max: crate::io::read_raster(dir.join("dphi_max.frf"))?,
            uncalibrated: 0,
        })
    }
}

/// Absolute phase of the h = 0 reference plane from its captured frames.
///
/// For the flat reference no reference phase exists yet, so traditional
/// unwrapping (phi2 + 2*pi*k) is used; it is exact there because nothing
/// displaces the code boundaries. The result must be continuous across
/// valid pixels.
pub fn measure_reference(
    sinusoids: [&RasterF; 3],
    gray_frames: &[&RasterF],
    table: &crate::patterns::CodewordTable,
    b_threshold: f64,
    axis: crate::raster::PhaseAxis,
) -> Result<RasterF> {
    let triple =
        crate::fringe::wrapped_triple(sinusoids[0], sinusoids[1], sinusoids[2], b_threshold)?;
    let orders =
        crate::graycode::decode_gray_frames(gray_frames, &triple.background, &triple.valid, table)?;
    let phi = crate::unwrap::unwrap_traditional(&triple.phi2, &orders)?;
    Ok(snap_line_continuity(&phi, axis))
}

/// Snap 2*pi excursions onto the continuous ramp, line by line along the
/// phase axis. Pixels sampling a branch cut exactly land one order high
/// under the half-open wrap convention; the reference plane is smooth, so
/// any multiple-of-2*pi jump against the walked neighbor is an artifact.
fn snap_line_continuity(phi: &RasterF, axis: crate::raster::PhaseAxis) -> RasterF {
    use std::f64::consts::{PI, TAU};
    let (w, h) = (phi.width(), phi.height());
    let extent = axis.extent(w, h);
    let cross = axis.cross_extent(w, h);
    let mut out = phi.clone();
    for across in 0..cross {
        let value = |v: usize| {
            let (x, y) = axis.join(v, across);
            phi.get(x, y)
        };
        // anchor on the first locally-consistent finite pair
        let mut anchor = None;
        for v in 0..extent.saturating_sub(1) {
            let (a, b) = (value(v), value(v + 1));
            if a.is_finite() && b.is_finite() && (a - b).abs() < PI / 2.0 {
                anchor = Some(v);
                break;
            }
        }
        let Some(anchor) = anchor else { continue };
        let mut prev = value(anchor);
        for v in anchor + 1..extent {
            let raw = value(v);
            if !raw.is_finite() {
                continue;
            }
            let snapped = raw - TAU * ((raw - prev) / TAU).round();
            let (x, y) = axis.join(v, across);
            out.set(x, y, snapped);
            prev = snapped;
        }
        let mut prev = value(anchor);
        for v in (0..anchor).rev() {
            let raw = value(v);
            if !raw.is_finite() {
                continue;
            }
            let snapped = raw - TAU * ((raw - prev) / TAU).round();
            let (x, y) = axis.join(v, across);
            out.set(x, y, snapped);
            prev = snapped;
        }
    }
    out
}
