//! Phase unwrapping: the tripartite method plus reference baselines.
//!
//! The tripartite unwrapper never evaluates a wrapped phase near its own
//! branch cut. Each decoded fringe order is split into low / mid / high
//! bands; the mid band (|phi2| < pi/3) is unwrapped with phi2, whose cut
//! sits on the order boundaries, while the bands adjacent to those
//! boundaries use phi1 or phi3, whose cuts sit a third of a period away.
//! Because adjacent codewords differ in one bit, decode errors near a
//! blurred or motion-displaced boundary are +-1 order, and the formulas
//! using phi1/phi3 absorb them exactly as long as every code boundary stays
//! within a third of a period of the phase cut (a mismatch window two thirds
//! of a period wide).
//!
//! The split between low and high inside one order cannot come from the
//! wrapped phases themselves (they lose monotonicity at the order edges), so
//! it comes from the reference wrapped phase: the absolute phase of the
//! measured reference plane minus 2*pi*k. That sawtooth shares the order
//! map's discontinuities and is monotone within each order; its value at the
//! per-line |phi2| minimum is the split threshold.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use crate::fringe::{wrap, WrappedTriple};
use crate::graycode::OrderMap;
use crate::raster::{Mask, PhaseAxis, RasterF};
use crate::Result;

/// Reference wrapped phase: `Phi_ref - 2*pi*k`, NaN where k is invalid.
/// Deliberately NOT rewrapped into (-pi, pi]; the excursions outside that
/// range are what make per-order thresholds well defined.
#[derive(Debug, Clone)]
pub struct ReferencePhase {
    pub phi_ref: RasterF,
}

/// Build the reference wrapped phase from the reference-plane absolute phase
/// and the current frame's order map.
pub fn reference_wrapped(phi_ref_absolute: &RasterF, k: &OrderMap) -> Result<ReferencePhase> {
    if phi_ref_absolute.width() != k.width() || phi_ref_absolute.height() != k.height() {
        return Err(crate::Error::DimensionMismatch(
            "reference phase does not match order map".into(),
        ));
    }
    let phi_ref = RasterF::from_fn(k.width(), k.height(), |x, y| match k.order(x, y) {
        Some(order) => phi_ref_absolute.get(x, y) - TAU * order as f64,
        None => f64::NAN,
    });
    Ok(ReferencePhase { phi_ref })
}

/// Region a pixel belongs to inside its fringe order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLabel {
    Low,
    Mid,
    High,
    Invalid,
}

/// Key of a per-order, per-line division: (order, across-coordinate).
pub type LineKey = (u32, usize);

/// Regional division of the order map.
#[derive(Debug, Clone)]
pub struct RegionLabels {
    width: usize,
    height: usize,
    labels: Vec<RegionLabel>,
    /// Threshold phase per (order, line).
    pub thresholds: HashMap<LineKey, f64>,
    /// Critical-point position (along the phase axis) per (order, line).
    pub critical_points: HashMap<LineKey, usize>,
    /// (order, line) pairs left without a usable critical point.
    pub unusable_lines: usize,
}

impl RegionLabels {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> RegionLabel {
        self.labels[y * self.width + x]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self, label: RegionLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Export as an intensity raster (low 64, mid 128, high 192, invalid 0,
    /// on a 255 scale) for visual inspection.
    pub fn to_raster(&self) -> RasterF {
        RasterF::from_fn(self.width, self.height, |x, y| {
            let code = match self.get(x, y) {
                RegionLabel::Low => 64.0,
                RegionLabel::Mid => 128.0,
                RegionLabel::High => 192.0,
                RegionLabel::Invalid => 0.0,
            };
            code / 255.0
        })
    }
}

/// Pixels of the order map lying within Chebyshev distance `radius` of a
/// pixel whose order differs or is invalid. This is the edge set where
/// decoded orders (and hence the reference sawtooth) cannot be trusted.
pub fn edge_set(k: &OrderMap, radius: usize) -> Mask {
    let (w, h) = (k.width(), k.height());
    if radius == 0 {
        return Mask::filled(w, h, false);
    }
    let r = radius as i64;
    Mask::from_fn(w, h, |x, y| {
        let own = k.raw(x, y);
        if own == 0 {
            return false; // invalid pixels are not part of any A(i)
        }
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                if k.raw(nx as usize, ny as usize) != own {
                    return true;
                }
            }
        }
        false
    })
}

/// Critical points: per (order, line), the along-axis position where |phi2|
/// is minimal over the usable pixels considered.
#[derive(Debug, Clone, Default)]
pub struct CriticalPoints {
    pub points: HashMap<LineKey, usize>,
}

/// Naive critical points over all valid pixels of each order/line region.
pub fn find_critical_points(phi2: &RasterF, k: &OrderMap, axis: PhaseAxis) -> CriticalPoints {
    let mut best: HashMap<LineKey, (f64, usize)> = HashMap::new();
    scan_minima(phi2, k, axis, None, &mut best);
    CriticalPoints {
        points: best.into_iter().map(|(key, (_, pos))| (key, pos)).collect(),
    }
}

/// Replace critical points that landed in the edge set by the |phi2| minimum
/// outside it; lines whose region lies entirely in the edge set lose their
/// critical point (their non-mid pixels become invalid downstream).
pub fn correct_critical(
    points: &CriticalPoints,
    phi2: &RasterF,
    k: &OrderMap,
    axis: PhaseAxis,
    edge_radius: usize,
) -> CriticalPoints {
    if edge_radius == 0 {
        return points.clone();
    }
    let edges = edge_set(k, edge_radius);
    let mut interior_best: HashMap<LineKey, (f64, usize)> = HashMap::new();
    scan_minima(phi2, k, axis, Some(&edges), &mut interior_best);

    let mut corrected = HashMap::new();
    for (&key, &pos) in &points.points {
        let (along, across) = (pos, key.1);
        let (x, y) = axis.join(along, across);
        if edges.get(x, y) {
            if let Some(&(_, better)) = interior_best.get(&key) {
                corrected.insert(key, better);
            }
            // else: unusable, key dropped
        } else {
            corrected.insert(key, pos);
        }
    }
    CriticalPoints { points: corrected }
}

fn scan_minima(
    phi2: &RasterF,
    k: &OrderMap,
    axis: PhaseAxis,
    exclude: Option<&Mask>,
    best: &mut HashMap<LineKey, (f64, usize)>,
) {
    let (w, h) = (phi2.width(), phi2.height());
    let extent = axis.extent(w, h);
    let cross = axis.cross_extent(w, h);
    for across in 0..cross {
        for along in 0..extent {
            let (x, y) = axis.join(along, across);
            let order = match k.order(x, y) {
                Some(o) => o,
                None => continue,
            };
            let v = phi2.get(x, y);
            if v.is_nan() {
                continue;
            }
            if let Some(mask) = exclude {
                if mask.get(x, y) {
                    continue;
                }
            }
            let key = (order, across);
            let abs = v.abs();
            match best.get_mut(&key) {
                Some(entry) if entry.0 <= abs => {}
                Some(entry) => *entry = (abs, along),
                None => {
                    best.insert(key, (abs, along));
                }
            }
        }
    }
}

/// Mid-band half width: |phi2| < pi/3 selects the middle third of a period.
const MID_BAND: f64 = PI / 3.0;

/// Split every decoded order into low / mid / high bands.
///
/// Mid is wherever `|phi2| < pi/3`. For the rest, the per-(order, line)
/// threshold is the reference wrapped phase at the corrected critical point;
/// below it is low, above is high (ties low). Pixels of lines with no usable
/// critical point, and pixels invalid in either input, are labeled invalid.
pub fn divide_regions(
    triple: &WrappedTriple,
    k: &OrderMap,
    reference: &ReferencePhase,
    axis: PhaseAxis,
    edge_radius: usize,
) -> Result<RegionLabels> {
    let phi2 = &triple.phi2;
    phi2.check_dims(&[&reference.phi_ref], "divide_regions inputs")?;
    if k.width() != phi2.width() || k.height() != phi2.height() {
        return Err(crate::Error::DimensionMismatch(
            "order map does not match phase rasters".into(),
        ));
    }

    let naive = find_critical_points(phi2, k, axis);
    let corrected = correct_critical(&naive, phi2, k, axis, edge_radius);

    let mut thresholds = HashMap::with_capacity(corrected.points.len());
    let mut critical_points = HashMap::with_capacity(corrected.points.len());
    for (&key, &pos) in &corrected.points {
        let (x, y) = axis.join(pos, key.1);
        thresholds.insert(key, reference.phi_ref.get(x, y));
        critical_points.insert(key, pos);
    }
    let unusable_lines = naive.points.len() - corrected.points.len();

    let (w, h) = (phi2.width(), phi2.height());
    let mut labels = vec![RegionLabel::Invalid; w * h];
    for y in 0..h {
        for x in 0..w {
            let order = match k.order(x, y) {
                Some(o) => o,
                None => continue,
            };
            if !triple.valid.get(x, y) {
                continue;
            }
            let p2 = phi2.get(x, y);
            if p2.is_nan() {
                continue;
            }
            let label = if p2.abs() < MID_BAND {
                RegionLabel::Mid
            } else {
                let (_, across) = axis.split(x, y);
                match thresholds.get(&(order, across)) {
                    None => RegionLabel::Invalid,
                    Some(&th) => {
                        let pr = reference.phi_ref.get(x, y);
                        if pr <= th {
                            RegionLabel::Low
                        } else {
                            RegionLabel::High
                        }
                    }
                }
            };
            labels[y * w + x] = label;
        }
    }

    Ok(RegionLabels {
        width: w,
        height: h,
        labels,
        thresholds,
        critical_points,
        unusable_lines,
    })
}

/// Tripartite unwrapping: each region uses the staggered phase whose branch
/// cut is farthest from the order boundaries, with the 2*pi/3 stagger
/// compensated.
pub fn unwrap_tripartite(
    triple: &WrappedTriple,
    k: &OrderMap,
    regions: &RegionLabels,
) -> Result<RasterF> {
    let (w, h) = (triple.phi2.width(), triple.phi2.height());
    if regions.width() != w || regions.height() != h || k.width() != w || k.height() != h {
        return Err(crate::Error::DimensionMismatch(
            "unwrap inputs disagree".into(),
        ));
    }
    let out = RasterF::from_fn(w, h, |x, y| {
        let order = match k.order(x, y) {
            Some(o) => o as f64,
            None => return f64::NAN,
        };
        match regions.get(x, y) {
            RegionLabel::Low => triple.phi1.get(x, y) + TAU * order - TAU / 3.0,
            RegionLabel::Mid => triple.phi2.get(x, y) + TAU * order,
            RegionLabel::High => triple.phi3.get(x, y) + TAU * order + TAU / 3.0,
            RegionLabel::Invalid => f64::NAN,
        }
    });
    Ok(out)
}

/// The jump-error-prone baseline: `phi2 + 2*pi*k` everywhere.
pub fn unwrap_traditional(phi2: &RasterF, k: &OrderMap) -> Result<RasterF> {
    if k.width() != phi2.width() || k.height() != phi2.height() {
        return Err(crate::Error::DimensionMismatch(
            "order map does not match phase raster".into(),
        ));
    }
    Ok(RasterF::from_fn(
        phi2.width(),
        phi2.height(),
        |x, y| match k.order(x, y) {
            Some(order) => phi2.get(x, y) + TAU * order as f64,
            None => f64::NAN,
        },
    ))
}

/// Hierarchical two-frequency unwrapping. `phi_unit` is the wrapped phase of
/// a unit-frequency pattern (absolute up to the +pi offset by construction);
/// `f_h` is the high frequency in periods per field.
pub fn unwrap_two_frequency(phi_high: &RasterF, phi_unit: &RasterF, f_h: u32) -> Result<RasterF> {
    phi_high.check_dims(&[phi_unit], "two-frequency inputs")?;
    Ok(RasterF::from_fn(
        phi_high.width(),
        phi_high.height(),
        |x, y| {
            let ph = phi_high.get(x, y);
            let pu = phi_unit.get(x, y);
            if ph.is_nan() || pu.is_nan() {
                return f64::NAN;
            }
            let mut phi_low = pu + PI; // [0, 2*pi)
            if phi_low >= TAU {
                phi_low -= TAU;
            }
            let k = ((f_h as f64 * phi_low - ph - PI) / TAU).round();
            ph + TAU * k
        },
    ))
}

/// Heterodyne two-wavelength unwrapping from adjacent frequencies
/// (f_h and f_h - 1 periods per field): the beat phase has unit frequency
/// and bootstraps the high-frequency order.
pub fn unwrap_two_wavelength(phi_fm: &RasterF, phi_fh: &RasterF, f_h: u32) -> Result<RasterF> {
    phi_fh.check_dims(&[phi_fm], "two-wavelength inputs")?;
    Ok(RasterF::from_fn(phi_fh.width(), phi_fh.height(), |x, y| {
        let ph = phi_fh.get(x, y);
        let pm = phi_fm.get(x, y);
        if ph.is_nan() || pm.is_nan() {
            return f64::NAN;
        }
        let beat = wrap(ph - pm);
        let mut phi_eq = beat + PI; // [0, 2*pi)
        if phi_eq >= TAU {
            phi_eq -= TAU;
        }
        let k = ((f_h as f64 * phi_eq - ph - PI) / TAU).round();
        ph + TAU * k
    }))
}
