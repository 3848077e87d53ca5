//! Synthetic projector-camera forward model.
//!
//! Renders each projected pattern as seen off a (possibly drifting) height
//! field with defocus blur, per-pixel reflectivity, and seeded sensor noise.
//! Projector and camera share one pixel grid (orthographic, unit
//! magnification), so height enters purely as a lateral displacement of the
//! sampled pattern; the displacement in pixels is
//! `truth_phase_shift(h) * ref_period_px / (2*pi)` regardless of which
//! pattern is being projected, which is what couples multi-frequency
//! baselines to the same geometry.
//!
//! Noise is the only nondeterminism and is fully seed-controlled: each frame
//! draws from a stream forked from (seed, frame index), so frames may be
//! rendered in any order.

use std::f64::consts::TAU;

use crate::patterns::PatternSpec;
use crate::raster::{PhaseAxis, RasterF};
use crate::rng::SplitMix64;
use crate::sequence::{Role, Schedule};
use crate::Result;

/// Scene geometry: a height field over the camera grid, in millimeters.
/// Lateral coordinates are given in (along-phase-axis, across) pixel space.
#[derive(Debug, Clone)]
pub enum SceneObject {
    /// Flat plane at constant height.
    Plane { h_mm: f64 },
    /// Height bands along the phase axis: (start px, end px, height mm).
    /// Outside all bands the height is 0.
    Steps { bands: Vec<(f64, f64, f64)> },
    /// Spherical cap resting on the h=0 plane. `center` is (along, across)
    /// in pixels; `radius_mm` is the sphere radius; `apex_mm` the cap height.
    SphereCap {
        center: (f64, f64),
        radius_mm: f64,
        apex_mm: f64,
    },
    /// Pointwise maximum of several objects.
    Composite(Vec<SceneObject>),
}

impl SceneObject {
    /// Height in mm at scene coordinates (along, across), in pixels.
    pub fn height_at(&self, along: f64, across: f64, mm_per_px: f64) -> f64 {
        match self {
            SceneObject::Plane { h_mm } => *h_mm,
            SceneObject::Steps { bands } => {
                for &(start, end, h) in bands {
                    if along >= start && along < end {
                        return h;
                    }
                }
                0.0
            }
            SceneObject::SphereCap {
                center,
                radius_mm,
                apex_mm,
            } => {
                let dx = (along - center.0) * mm_per_px;
                let dy = (across - center.1) * mm_per_px;
                let r2 = dx * dx + dy * dy;
                // sphere center sits at z = apex - R; surface z = zc + sqrt(R^2 - r^2)
                let zc = apex_mm - radius_mm;
                let s = radius_mm * radius_mm - r2;
                if s <= 0.0 {
                    return 0.0;
                }
                (zc + s.sqrt()).max(0.0)
            }
            SceneObject::Composite(objs) => objs
                .iter()
                .map(|o| o.height_at(along, across, mm_per_px))
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self, h_max: f64) -> Result<()> {
        let err = |msg: String| Err(crate::Error::Config(msg));
        match self {
            SceneObject::Plane { h_mm } => {
                if *h_mm < 0.0 || *h_mm >= h_max {
                    return err(format!("plane height {h_mm} outside [0, {h_max})"));
                }
            }
            SceneObject::Steps { bands } => {
                let mut sorted = bands.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                for w in sorted.windows(2) {
                    if w[1].0 < w[0].1 {
                        return err("step bands overlap".into());
                    }
                }
                for &(s, e, h) in bands {
                    if e <= s || h < 0.0 || h >= h_max {
                        return err(format!("bad step band ({s}, {e}, {h})"));
                    }
                }
            }
            SceneObject::SphereCap {
                radius_mm, apex_mm, ..
            } => {
                if *radius_mm <= 0.0 || *apex_mm <= 0.0 || apex_mm > radius_mm || *apex_mm >= h_max
                {
                    return err(format!("bad sphere cap r={radius_mm} apex={apex_mm}"));
                }
            }
            SceneObject::Composite(objs) => {
                for o in objs {
                    o.validate(h_max)?;
                }
            }
        }
        Ok(())
    }
}

/// A scene plus its motion and lateral scale.
#[derive(Debug, Clone)]
pub struct Scene {
    pub object: SceneObject,
    /// Lateral drift along the phase axis, px per frame (sub-pixel allowed).
    pub velocity: f64,
    /// Millimeters per pixel for lateral coordinates.
    pub mm_per_px: f64,
}

impl Scene {
    pub fn static_object(object: SceneObject, mm_per_px: f64) -> Self {
        Self {
            object,
            velocity: 0.0,
            mm_per_px,
        }
    }

    /// Height seen at camera coordinate (along, across) at frame time `t`.
    pub fn height_at_time(&self, along: f64, across: f64, t: f64) -> f64 {
        self.object
            .height_at(along - self.velocity * t, across, self.mm_per_px)
    }
}

/// Optics and sensor model.
#[derive(Debug, Clone)]
pub struct OpticalModel {
    /// Phase gain at h -> 0, radians per mm (at the reference period).
    pub gain_k: f64,
    /// Divergence scale of the height-to-phase mapping, mm.
    pub saturation_l: f64,
    /// Fringe period the gain refers to; height displaces every projected
    /// pattern by `phase_shift * ref_period_px / (2*pi)` pixels.
    pub ref_period_px: f64,
    /// Defocus blur sigma, px.
    pub defocus_sigma: f64,
    /// Optional linear growth of defocus along the phase axis (px of sigma
    /// per px of position); models the best-focus plane sitting mid-volume.
    pub defocus_slope: f64,
    /// Sensor noise sigma in normalized intensity units.
    pub noise_sigma: f64,
    /// Per-pixel reflectivity in (0, 1]; None means uniform 1.
    pub reflectivity: Option<RasterF>,
    pub seed: u64,
}

impl OpticalModel {
    pub fn new(gain_k: f64, saturation_l: f64, ref_period_px: f64) -> Self {
        assert!(gain_k > 0.0 && saturation_l > 0.0 && ref_period_px > 0.0);
        Self {
            gain_k,
            saturation_l,
            ref_period_px,
            defocus_sigma: 0.0,
            defocus_slope: 0.0,
            noise_sigma: 0.0,
            reflectivity: None,
            seed: 0,
        }
    }

    /// Ground-truth phase shift of the reference-period fringe for a point at
    /// height `h`: `K * h / (1 + h / L)`. Strictly increasing, zero at h = 0.
    pub fn truth_phase_shift(&self, h_mm: f64) -> f64 {
        self.gain_k * h_mm / (1.0 + h_mm / self.saturation_l)
    }

    /// Lateral pattern displacement in px for height `h`.
    pub fn displacement_px(&self, h_mm: f64) -> f64 {
        self.truth_phase_shift(h_mm) * self.ref_period_px / TAU
    }
}

/// What the projector shows for one frame.
///
/// `Sinusoid` and `GrayBit` are evaluated analytically at the displaced
/// sample position, keeping the noise-free phase chain exact to machine
/// precision; `Raster` (used for dithered binary patterns) is sampled with
/// linear interpolation along the phase axis.
#[derive(Debug, Clone)]
pub enum ProjectedPattern {
    Sinusoid { shift_index: usize },
    GrayBit { bit: usize },
    Raster(RasterF),
}

impl ProjectedPattern {
    fn sample(&self, spec: &PatternSpec, v: f64, across: usize) -> f64 {
        let extent = spec.extent() as f64;
        if v < 0.0 || v > extent - 1.0 {
            return f64::NAN;
        }
        match self {
            ProjectedPattern::Sinusoid { shift_index } => {
                let shift = TAU * (*shift_index as f64 - 1.0) / 3.0;
                0.5 + 0.5 * (TAU * v / spec.period_px + shift + spec.phi0).cos()
            }
            ProjectedPattern::GrayBit { bit } => {
                let k = (v / spec.period_px).floor() as u32 + 1;
                if k > 1u32 << spec.n_gray_bits {
                    return 0.0;
                }
                ((crate::patterns::gray_codeword(k) >> (spec.n_gray_bits - bit)) & 1) as f64
            }
            ProjectedPattern::Raster(r) => {
                let lo = v.floor();
                let frac = v - lo;
                let (x0, y0) = spec.phase_axis.join(lo as usize, across);
                if frac == 0.0 {
                    return r.get(x0, y0);
                }
                let (x1, y1) = spec.phase_axis.join(lo as usize + 1, across);
                r.get(x0, y0) * (1.0 - frac) + r.get(x1, y1) * frac
            }
        }
    }
}

/// Render one captured frame.
///
/// Per pixel: look up the scene height (after drifting the scene by
/// `velocity * t`), sample the pattern at the height-displaced position,
/// blur by the defocus kernel, scale by reflectivity, add seeded Gaussian
/// noise, and clamp to [0, 1]. Samples falling outside the pattern extent
/// become NaN (off-field).
pub fn render_capture(
    scene: &Scene,
    t: usize,
    pattern: &ProjectedPattern,
    spec: &PatternSpec,
    model: &OpticalModel,
) -> Result<RasterF> {
    if let ProjectedPattern::Raster(r) = pattern {
        if r.width() != spec.proj_width || r.height() != spec.proj_height {
            return Err(crate::Error::DimensionMismatch(format!(
                "pattern raster {}x{} does not match projector {}x{}",
                r.width(),
                r.height(),
                spec.proj_width,
                spec.proj_height
            )));
        }
    }
    if let Some(refl) = &model.reflectivity {
        if refl.width() != spec.proj_width || refl.height() != spec.proj_height {
            return Err(crate::Error::DimensionMismatch(
                "reflectivity raster does not match camera grid".into(),
            ));
        }
    }

    let (w, h) = (spec.proj_width, spec.proj_height);
    let mut out = RasterF::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (along, across) = spec.phase_axis.split(x, y);
            let height = scene.height_at_time(along as f64, across as f64, t as f64);
            let v = along as f64 + model.displacement_px(height);
            out.set(x, y, pattern.sample(spec, v, across));
        }
    }

    let mut out = if model.defocus_sigma > 0.0 || model.defocus_slope != 0.0 {
        defocus_blur(&out, model, spec.phase_axis)
    } else {
        out
    };

    if let Some(refl) = &model.reflectivity {
        for (o, r) in out.values_mut().iter_mut().zip(refl.values()) {
            *o *= r;
        }
    }

    if model.noise_sigma > 0.0 {
        let mut rng = SplitMix64::fork(model.seed, t as u64);
        for o in out.values_mut() {
            *o += model.noise_sigma * rng.next_gaussian();
        }
    }

    for o in out.values_mut() {
        if !o.is_nan() {
            *o = o.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// A rendered frame with its schedule role.
#[derive(Debug, Clone)]
pub struct TaggedFrame {
    pub index: usize,
    pub role: Role,
    pub raster: RasterF,
}

/// Render the whole schedule: frame j is rendered at time t = j with the
/// scene drifted accordingly.
pub fn render_sequence(
    scene: &Scene,
    schedule: &Schedule,
    patterns: &SequencePatterns,
    spec: &PatternSpec,
    model: &OpticalModel,
) -> Result<Vec<TaggedFrame>> {
    let mut frames = Vec::with_capacity(schedule.entries().len());
    for (j, &role) in schedule.entries().iter().enumerate() {
        let pattern = patterns.for_role(role);
        let raster = render_capture(scene, j, pattern, spec, model)?;
        frames.push(TaggedFrame {
            index: j,
            role,
            raster,
        });
    }
    Ok(frames)
}

/// Patterns indexed by role for sequence rendering.
#[derive(Debug, Clone)]
pub struct SequencePatterns {
    pub sinusoids: [ProjectedPattern; 3],
    pub gray: Vec<ProjectedPattern>,
}

impl SequencePatterns {
    /// Analytic patterns (exact sampling).
    pub fn analytic(n_gray_bits: usize) -> Self {
        Self {
            sinusoids: [
                ProjectedPattern::Sinusoid { shift_index: 1 },
                ProjectedPattern::Sinusoid { shift_index: 2 },
                ProjectedPattern::Sinusoid { shift_index: 3 },
            ],
            gray: (1..=n_gray_bits)
                .map(|bit| ProjectedPattern::GrayBit { bit })
                .collect(),
        }
    }

    /// Bayer-dithered binary sinusoids; Gray bits stay analytic (they are
    /// binary already).
    pub fn dithered(spec: &PatternSpec) -> Result<Self> {
        let set = crate::patterns::PatternSet::dithered(spec)?;
        let mut sin = set.sinusoids.into_iter().map(ProjectedPattern::Raster);
        Ok(Self {
            sinusoids: [
                sin.next().unwrap(),
                sin.next().unwrap(),
                sin.next().unwrap(),
            ],
            gray: (1..=spec.n_gray_bits)
                .map(|bit| ProjectedPattern::GrayBit { bit })
                .collect(),
        })
    }

    pub fn for_role(&self, role: Role) -> &ProjectedPattern {
        match role {
            Role::S1 => &self.sinusoids[0],
            Role::S2 => &self.sinusoids[1],
            Role::S3 => &self.sinusoids[2],
            Role::Gray(c) => &self.gray[(c - 1) as usize],
        }
    }
}

/// NaN-aware Gaussian blur with constant sigma on both axes.
pub fn gaussian_blur(r: &RasterF, sigma: f64) -> RasterF {
    if sigma <= 0.0 {
        return r.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let pass1 = blur_axis(r, &kernel, true);
    blur_axis(&pass1, &kernel, false)
}

/// Defocus blur whose sigma may grow linearly along the phase axis.
fn defocus_blur(r: &RasterF, model: &OpticalModel, axis: PhaseAxis) -> RasterF {
    if model.defocus_slope == 0.0 {
        return gaussian_blur(r, model.defocus_sigma);
    }
    // kernel varies along the phase axis; both blur passes use the sigma at
    // the output pixel's phase-axis position
    let extent = axis.extent(r.width(), r.height());
    let kernels: Vec<Vec<f64>> = (0..extent)
        .map(|v| {
            let s = (model.defocus_sigma + model.defocus_slope * v as f64).max(0.0);
            gaussian_kernel(s)
        })
        .collect();
    let pass1 = blur_axis_graded(r, &kernels, axis, true);
    blur_axis_graded(&pass1, &kernels, axis, false)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn blur_axis(r: &RasterF, kernel: &[f64], horizontal: bool) -> RasterF {
    let radius = (kernel.len() / 2) as i64;
    RasterF::from_fn(r.width(), r.height(), |x, y| {
        // NaN is sticky: an off-field pixel stays off-field
        if r.get(x, y).is_nan() {
            return f64::NAN;
        }
        let mut acc = 0.0;
        let mut weight = 0.0;
        for (i, &k) in kernel.iter().enumerate() {
            let off = i as i64 - radius;
            let (sx, sy) = if horizontal {
                (x as i64 + off, y as i64)
            } else {
                (x as i64, y as i64 + off)
            };
            if sx < 0 || sy < 0 || sx >= r.width() as i64 || sy >= r.height() as i64 {
                continue;
            }
            let v = r.get(sx as usize, sy as usize);
            if v.is_nan() {
                continue;
            }
            acc += k * v;
            weight += k;
        }
        if weight > 0.0 {
            acc / weight
        } else {
            f64::NAN
        }
    })
}

fn blur_axis_graded(
    r: &RasterF,
    kernels: &[Vec<f64>],
    axis: PhaseAxis,
    horizontal: bool,
) -> RasterF {
    RasterF::from_fn(r.width(), r.height(), |x, y| {
        if r.get(x, y).is_nan() {
            return f64::NAN;
        }
        let (along, _) = axis.split(x, y);
        let kernel = &kernels[along];
        let radius = (kernel.len() / 2) as i64;
        let mut acc = 0.0;
        let mut weight = 0.0;
        for (i, &k) in kernel.iter().enumerate() {
            let off = i as i64 - radius;
            let (sx, sy) = if horizontal {
                (x as i64 + off, y as i64)
            } else {
                (x as i64, y as i64 + off)
            };
            if sx < 0 || sy < 0 || sx >= r.width() as i64 || sy >= r.height() as i64 {
                continue;
            }
            let v = r.get(sx as usize, sy as usize);
            if v.is_nan() {
                continue;
            }
            acc += k * v;
            weight += k;
        }
        if weight > 0.0 {
            acc / weight
        } else {
            f64::NAN
        }
    })
}
