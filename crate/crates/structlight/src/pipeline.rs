//! End-to-end orchestration and metrics: frame reconstruction, error rates,
//! flatness/step/sphere accuracy measures, and the four-method comparison
//! harness.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use crate::calibrate::CalibModel;
use crate::config::RunConfig;
use crate::error::Error;
use crate::fringe::wrapped_triple;
use crate::graycode::decode_gray_frames;
use crate::patterns::{CodewordTable, PatternSpec};
use crate::raster::{Mask, RasterF};
use crate::sequence;
use crate::simulate::{render_capture, ProjectedPattern, Scene, SequencePatterns, TaggedFrame};
use crate::unwrap;
use crate::Result;

/// Phase-unwrapping method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tripartite,
    Traditional,
    TwoFrequency,
    TwoWavelength,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Tripartite,
        Method::Traditional,
        Method::TwoFrequency,
        Method::TwoWavelength,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tripartite => "tripartite",
            Method::Traditional => "traditional",
            Method::TwoFrequency => "two_frequency",
            Method::TwoWavelength => "two_wavelength",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tripartite" | "tripu" => Ok(Method::Tripartite),
            "traditional" => Ok(Method::Traditional),
            "two_frequency" => Ok(Method::TwoFrequency),
            "two_wavelength" => Ok(Method::TwoWavelength),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Per-frame diagnostics tallies.
#[derive(Debug, Clone, Default)]
pub struct FrameStats {
    pub valid_pixels: usize,
    pub invalid_pixels: usize,
    pub out_of_table: usize,
    pub unusable_lines: usize,
    pub model_violations: usize,
    pub extrapolated: usize,
}

/// One reconstructed frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub phi: RasterF,
    pub height: RasterF,
    pub points: Vec<(f64, f64, f64)>,
    pub stats: FrameStats,
    pub regions: Option<unwrap::RegionLabels>,
}

/// Frames feeding one reconstruction.
pub struct FrameInputs<'a> {
    pub sinusoids: [&'a RasterF; 3],
    pub gray: Vec<&'a RasterF>,
    /// Second sinusoid triple for the baselines: unit-frequency set for
    /// two-frequency, (f_h - 1)-frequency set for two-wavelength.
    pub aux_sinusoids: Option<[&'a RasterF; 3]>,
}

/// Reconstruct one frame: fringe analysis, order decoding, the selected
/// unwrapper, phase-difference-to-height, and the metric point cloud.
pub fn reconstruct_frame(
    inputs: &FrameInputs<'_>,
    spec: &PatternSpec,
    table: &CodewordTable,
    calib: &CalibModel,
    cfg: &RunConfig,
) -> Result<FrameResult> {
    let triple = wrapped_triple(
        inputs.sinusoids[0],
        inputs.sinusoids[1],
        inputs.sinusoids[2],
        cfg.b_threshold,
    )?;

    let mut stats = FrameStats::default();
    let mut regions_out = None;

    let phi = match cfg.method {
        Method::Tripartite | Method::Traditional => {
            let orders =
                decode_gray_frames(&inputs.gray, &triple.background, &triple.valid, table)?;
            stats.out_of_table = orders.out_of_table;
            if cfg.method == Method::Traditional {
                unwrap::unwrap_traditional(&triple.phi2, &orders)?
            } else {
                let reference = unwrap::reference_wrapped(&calib.phi_ref, &orders)?;
                let regions = unwrap::divide_regions(
                    &triple,
                    &orders,
                    &reference,
                    spec.phase_axis,
                    cfg.edge_radius,
                )?;
                stats.unusable_lines = regions.unusable_lines;
                let phi = unwrap::unwrap_tripartite(&triple, &orders, &regions)?;
                regions_out = Some(regions);
                phi
            }
        }
        Method::TwoFrequency | Method::TwoWavelength => {
            let aux = inputs.aux_sinusoids.ok_or_else(|| {
                Error::MissingInput(format!(
                    "method {} needs its auxiliary sinusoid set",
                    cfg.method
                ))
            })?;
            let aux_triple = wrapped_triple(aux[0], aux[1], aux[2], cfg.b_threshold)?;
            let f_h = spec.n_periods as u32;
            let raw = if cfg.method == Method::TwoFrequency {
                unwrap::unwrap_two_frequency(&triple.phi2, &aux_triple.phi2, f_h)?
            } else {
                unwrap::unwrap_two_wavelength(&aux_triple.phi2, &triple.phi2, f_h)?
            };
            // both baselines resolve k one period below the Gray-code
            // anchor under the generator's phase convention; re-anchor so
            // delta-phi against the stored reference is in the same gauge
            raw.map(|v| v + TAU)
        }
    };

    // phase difference from the reference plane
    calib
        .phi_ref
        .check_dims(&[&phi], "reference phase vs frame")?;
    let delta = RasterF::from_fn(phi.width(), phi.height(), |x, y| {
        phi.get(x, y) - calib.phi_ref.get(x, y)
    });
    let (height, apply_stats) = calib.height_map(&delta)?;
    stats.model_violations = apply_stats.model_violations;
    stats.extrapolated = apply_stats.extrapolated;

    let mut points = Vec::new();
    for y in 0..height.height() {
        for x in 0..height.width() {
            let h = height.get(x, y);
            if h.is_finite() {
                stats.valid_pixels += 1;
                points.push((x as f64 * cfg.mm_per_px, y as f64 * cfg.mm_per_px, h));
            } else {
                stats.invalid_pixels += 1;
            }
        }
    }

    Ok(FrameResult {
        phi,
        height,
        points,
        stats,
        regions: regions_out,
    })
}

/// Outcome of reconstructing a whole frame stream: per-group results plus
/// any frame-level failures (the stream continues past them).
#[derive(Debug)]
pub struct StreamOutcome {
    pub groups: Vec<(usize, FrameResult)>,
    pub failures: Vec<(usize, String)>,
}

/// Reconstruct every complete group of a tagged frame stream using the
/// time-overlapping assembly. Frame-level failures are recorded and the
/// stream continues; stream-level misconfiguration still errors out.
pub fn reconstruct_stream(
    frames: &[TaggedFrame],
    spec: &PatternSpec,
    table: &CodewordTable,
    calib: &CalibModel,
    cfg: &RunConfig,
) -> Result<StreamOutcome> {
    if matches!(cfg.method, Method::TwoFrequency | Method::TwoWavelength) {
        return Err(Error::Config(
            "multi-frequency methods need auxiliary pattern sets; stream reconstruction supports tripartite and traditional".into(),
        ));
    }
    if spec.n_gray_bits != sequence::GRAY_BITS {
        return Err(Error::Config(format!(
            "the time-overlapping stream carries {} gray bits; spec has {}",
            sequence::GRAY_BITS,
            spec.n_gray_bits
        )));
    }
    for (pos, frame) in frames.iter().enumerate() {
        if frame.index != pos {
            return Err(Error::Config(format!(
                "frame stream has a gap: position {pos} holds frame index {}",
                frame.index
            )));
        }
    }
    let n_groups = frames.len() / sequence::GROUP_SIZE;
    let mut groups = Vec::new();
    let mut failures = Vec::new();
    for j in 1..=n_groups {
        let assembly = match sequence::assemble(n_groups, j, cfg.assembly) {
            Ok(a) => a,
            Err(Error::WarmUp { .. }) => continue,
            Err(e) => return Err(e),
        };
        let sin = [
            &frames[assembly.sinusoids[0]].raster,
            &frames[assembly.sinusoids[1]].raster,
            &frames[assembly.sinusoids[2]].raster,
        ];
        let gray: Vec<&RasterF> = assembly.gray.iter().map(|&f| &frames[f].raster).collect();
        let inputs = FrameInputs {
            sinusoids: sin,
            gray,
            aux_sinusoids: None,
        };
        match reconstruct_frame(&inputs, spec, table, calib, cfg) {
            Ok(result) => groups.push((j, result)),
            Err(e) => failures.push((j, e.to_string())),
        }
    }
    Ok(StreamOutcome { groups, failures })
}

/// Fraction of comparable pixels (valid mask, both phases finite) whose
/// absolute-phase disagreement exceeds pi. NaN when nothing is comparable.
pub fn error_rate(phi: &RasterF, truth: &RasterF, valid: &Mask) -> f64 {
    let mut total = 0usize;
    let mut errors = 0usize;
    for y in 0..phi.height() {
        for x in 0..phi.width() {
            if !valid.get(x, y) {
                continue;
            }
            let (a, b) = (phi.get(x, y), truth.get(x, y));
            if a.is_nan() || b.is_nan() {
                continue;
            }
            total += 1;
            if (a - b).abs() > PI {
                errors += 1;
            }
        }
    }
    if total == 0 {
        f64::NAN
    } else {
        errors as f64 / total as f64
    }
}

/// Least-squares plane fit over a region; returns (a, b, c) of
/// h = a*x + b*y + c and the residual RMS in the height unit.
pub fn plane_fit(h: &RasterF, region: &Mask) -> Result<((f64, f64, f64), f64)> {
    if !region.matches_raster(h) {
        return Err(Error::DimensionMismatch("plane_fit region".into()));
    }
    let mut ata = [0.0f64; 9];
    let mut atb = [0.0f64; 3];
    let mut n = 0usize;
    for y in 0..h.height() {
        for x in 0..h.width() {
            if !region.get(x, y) {
                continue;
            }
            let z = h.get(x, y);
            if !z.is_finite() {
                continue;
            }
            let row = [x as f64, y as f64, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    ata[i * 3 + j] += row[i] * row[j];
                }
                atb[i] += row[i] * z;
            }
            n += 1;
        }
    }
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs >= 3 pixels, got {n}"
        )));
    }
    let sol = crate::numeric::solve(&mut ata, &mut atb, 3)
        .ok_or_else(|| Error::Degenerate("collinear plane-fit region".into()))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);

    let mut ss = 0.0;
    for y in 0..h.height() {
        for x in 0..h.width() {
            if !region.get(x, y) {
                continue;
            }
            let z = h.get(x, y);
            if !z.is_finite() {
                continue;
            }
            let r = a * x as f64 + b * y as f64 + c - z;
            ss += r * r;
        }
    }
    Ok(((a, b, c), (ss / n as f64).sqrt()))
}

/// RMS deviation of a region from its own best-fit plane.
pub fn plane_flatness_rms(h: &RasterF, region: &Mask) -> Result<f64> {
    plane_fit(h, region).map(|(_, rms)| rms)
}

/// Least-squares sphere fit: algebraic solve for the starting point, then a
/// geometric (orthogonal-distance) Gauss-Newton refinement. The algebraic
/// fit alone shrinks the radius noticeably on noisy partial caps, so the
/// refinement iterates to convergence. Returns (center, radius, rms).
pub fn sphere_fit(points: &[(f64, f64, f64)]) -> Result<([f64; 3], f64, f64)> {
    let pts: Vec<&(f64, f64, f64)> = points
        .iter()
        .filter(|(x, y, z)| x.is_finite() && y.is_finite() && z.is_finite())
        .collect();
    if pts.len() < 4 {
        return Err(Error::Degenerate(format!(
            "sphere fit needs >= 4 points, got {}",
            pts.len()
        )));
    }

    // algebraic: rows [2x, 2y, 2z, 1] -> x^2 + y^2 + z^2
    let mut ata = [0.0f64; 16];
    let mut atb = [0.0f64; 4];
    for &&(x, y, z) in &pts {
        let row = [2.0 * x, 2.0 * y, 2.0 * z, 1.0];
        let rhs = x * x + y * y + z * z;
        for i in 0..4 {
            for j in 0..4 {
                ata[i * 4 + j] += row[i] * row[j];
            }
            atb[i] += row[i] * rhs;
        }
    }
    let sol = crate::numeric::solve(&mut ata, &mut atb, 4)
        .ok_or_else(|| Error::Degenerate("degenerate sphere geometry".into()))?;
    let mut center = [sol[0], sol[1], sol[2]];
    let r2 = sol[3] + center[0] * center[0] + center[1] * center[1] + center[2] * center[2];
    if r2 <= 0.0 {
        return Err(Error::Degenerate("non-positive fitted radius".into()));
    }
    let mut radius = r2.sqrt();

    for _ in 0..25 {
        let mut jtj = [0.0f64; 16];
        let mut jtr = [0.0f64; 4];
        for &&(x, y, z) in &pts {
            let dx = [x - center[0], y - center[1], z - center[2]];
            let d = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
            if d < 1e-12 {
                continue;
            }
            let resid = d - radius;
            let jrow = [-dx[0] / d, -dx[1] / d, -dx[2] / d, -1.0];
            for i in 0..4 {
                for j in 0..4 {
                    jtj[i * 4 + j] += jrow[i] * jrow[j];
                }
                jtr[i] += jrow[i] * resid;
            }
        }
        for v in &mut jtr {
            *v = -*v;
        }
        let Some(step) = crate::numeric::solve(&mut jtj, &mut jtr, 4) else {
            break;
        };
        center[0] += step[0];
        center[1] += step[1];
        center[2] += step[2];
        radius += step[3];
        let norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
        if norm < 1e-10 * radius.abs().max(1.0) {
            break;
        }
    }

    let mut ss = 0.0;
    for &&(x, y, z) in &pts {
        let d =
            ((x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2)).sqrt();
        let r = d - radius;
        ss += r * r;
    }
    Ok((center, radius, (ss / pts.len() as f64).sqrt()))
}

/// Mean height per band relative to the fitted base plane of the first band.
pub fn step_heights(h: &RasterF, bands: &[Mask]) -> Result<Vec<f64>> {
    if bands.is_empty() {
        return Err(Error::Degenerate("no bands given".into()));
    }
    let ((a, b, c), _) = plane_fit(h, &bands[0])?;
    let mut out = Vec::with_capacity(bands.len());
    for (i, band) in bands.iter().enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..h.height() {
            for x in 0..h.width() {
                if !band.get(x, y) {
                    continue;
                }
                let z = h.get(x, y);
                if !z.is_finite() {
                    continue;
                }
                sum += z - (a * x as f64 + b * y as f64 + c);
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Degenerate(format!("band {i} has no valid pixels")));
        }
        out.push(sum / n as f64);
    }
    Ok(out)
}

/// One row of the comparison table.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub method: Method,
    pub seed: u64,
    pub noise_sigma: f64,
    pub defocus_sigma: f64,
    pub error_rate: f64,
    pub rms_mm: f64,
}

/// Comparison harness output.
#[derive(Debug)]
pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    /// Tripartite region labels from the clean run, for PGM export.
    pub clean_regions: unwrap::RegionLabels,
    /// Tripartite point cloud from the first noisy run.
    pub first_points: Vec<(f64, f64, f64)>,
}

impl CompareOutcome {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# structlight compare v1\n");
        s.push_str("method,seed,noise_sigma,defocus_sigma,error_rate,rms_mm\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.method, r.seed, r.noise_sigma, r.defocus_sigma, r.error_rate, r.rms_mm
            )
            .unwrap();
        }
        s
    }

    /// Write compare.csv, the region PGM, and the first point cloud.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("compare.csv"), self.to_csv())?;
        crate::io::write_pgm(
            &self.clean_regions.to_raster(),
            dir.join("regions.pgm"),
            255,
        )?;
        crate::io::write_ply(&self.first_points, dir.join("compare.ply"))?;
        Ok(())
    }
}

/// All four methods analyzed over one shared simulated stream per
/// (noise, seed) pair: the same main sinusoid triple and Gray frames feed
/// the Gray-code methods, and auxiliary unit/(f_h - 1) sets rendered through
/// the same optics feed the multi-frequency baselines. Error rates count
/// order-level flips against the method's own noise-free result.
pub fn compare(cfg: &RunConfig) -> Result<CompareOutcome> {
    let spec = cfg.spec.clone();
    let extent = spec.extent();
    let f_h = spec.n_periods as u32;
    let table = CodewordTable::new(spec.n_gray_bits)?;

    let unit_spec = PatternSpec {
        period_px: extent as f64,
        n_periods: 1,
        ..spec.clone()
    };
    // the (f_h - 1)-frequency set carries a -pi offset so its beat against
    // the main set matches the unit-phase convention
    let fm_spec = PatternSpec {
        period_px: extent as f64 / (f_h - 1) as f64,
        n_periods: (f_h - 1) as usize,
        phi0: spec.phi0 - PI,
        ..spec.clone()
    };

    let scene = Scene::static_object(cfg.scene.clone(), cfg.mm_per_px);
    let model_clean = {
        let mut m = cfg.optical_model()?;
        m.noise_sigma = 0.0;
        m
    };

    // calibration on the exact path: ideal patterns, no defocus, no noise
    let calib = calibrate_exact(cfg)?;

    // patterns for the measurement path
    let main_patterns = build_patterns(&spec, cfg.dithered, true)?;
    let unit_patterns = build_patterns(&unit_spec, cfg.dithered, false)?;
    let fm_patterns = build_patterns(&fm_spec, cfg.dithered, false)?;

    let render_set =
        |scene: &Scene, model: &crate::simulate::OpticalModel| -> Result<Vec<RasterF>> {
            let mut frames = Vec::with_capacity(13);
            let mut t = 0usize;
            for p in main_patterns
                .sinusoids
                .iter()
                .chain(main_patterns.gray.iter())
            {
                frames.push(render_capture(scene, t, p, &spec, model)?);
                t += 1;
            }
            for p in &unit_patterns.sinusoids {
                frames.push(render_capture(scene, t, p, &unit_spec, model)?);
                t += 1;
            }
            for p in &fm_patterns.sinusoids {
                frames.push(render_capture(scene, t, p, &fm_spec, model)?);
                t += 1;
            }
            Ok(frames)
        };

    // reference plane, measured clean through the same path
    let ref_scene = Scene::static_object(
        crate::simulate::SceneObject::Plane { h_mm: 0.0 },
        cfg.mm_per_px,
    );
    let ref_frames = render_set(&ref_scene, &model_clean)?;
    let phi_ref_main = {
        let grays: Vec<&RasterF> = ref_frames[3..3 + spec.n_gray_bits].iter().collect();
        crate::calibrate::measure_reference(
            [&ref_frames[0], &ref_frames[1], &ref_frames[2]],
            &grays,
            &table,
            cfg.b_threshold,
            spec.phase_axis,
        )?
    };

    // calibration model with the measurement-path reference phase
    let calib = CalibModel {
        phi_ref: phi_ref_main,
        ..calib
    };

    // clean object run per method
    let clean_frames = render_set(&scene, &model_clean)?;
    let mut clean_phi = Vec::new();
    let mut clean_regions = None;
    for method in Method::ALL {
        let (phi, regions) = analyze(&clean_frames, method, &spec, &table, &calib, cfg, f_h)?;
        if method == Method::Tripartite {
            clean_regions = regions;
        }
        clean_phi.push(phi);
    }
    let clean_regions =
        clean_regions.ok_or_else(|| Error::Degenerate("no regions from clean run".into()))?;

    // ground-truth heights of the static scene
    let truth_height = RasterF::from_fn(spec.proj_width, spec.proj_height, |x, y| {
        let (along, across) = spec.phase_axis.split(x, y);
        scene
            .object
            .height_at(along as f64, across as f64, cfg.mm_per_px)
    });

    let mut rows = Vec::new();
    let mut first_points = Vec::new();
    for &noise in &cfg.noise_sigmas {
        for &seed in &cfg.seeds {
            let mut model = cfg.optical_model()?;
            model.noise_sigma = noise;
            model.seed = seed;
            let frames = render_set(&scene, &model)?;
            let triple_valid =
                wrapped_triple(&frames[0], &frames[1], &frames[2], cfg.b_threshold)?.valid;
            for (mi, method) in Method::ALL.iter().enumerate() {
                let (phi, _) = analyze(&frames, *method, &spec, &table, &calib, cfg, f_h)?;
                let rate = error_rate(&phi, &clean_phi[mi], &triple_valid);

                let delta = RasterF::from_fn(phi.width(), phi.height(), |x, y| {
                    phi.get(x, y) - calib.phi_ref.get(x, y)
                });
                let (height, _) = calib.height_map(&delta)?;
                let mut ss = 0.0;
                let mut n = 0usize;
                for idx in 0..height.len() {
                    let (a, b) = (height.values()[idx], truth_height.values()[idx]);
                    if a.is_finite() && b.is_finite() {
                        ss += (a - b) * (a - b);
                        n += 1;
                    }
                }
                let rms = if n == 0 {
                    f64::NAN
                } else {
                    (ss / n as f64).sqrt()
                };

                if first_points.is_empty() && *method == Method::Tripartite {
                    for y in 0..height.height() {
                        for x in 0..height.width() {
                            let h = height.get(x, y);
                            if h.is_finite() {
                                first_points.push((
                                    x as f64 * cfg.mm_per_px,
                                    y as f64 * cfg.mm_per_px,
                                    h,
                                ));
                            }
                        }
                    }
                }

                rows.push(CompareRow {
                    method: *method,
                    seed,
                    noise_sigma: noise,
                    defocus_sigma: cfg.defocus_sigma,
                    error_rate: rate,
                    rms_mm: rms,
                });
            }
        }
    }

    Ok(CompareOutcome {
        rows,
        clean_regions,
        first_points,
    })
}

/// Unwrap one rendered 13-frame set with the given method; returns the
/// anchor-consistent absolute phase (and regions for the tripartite path).
fn analyze(
    frames: &[RasterF],
    method: Method,
    spec: &PatternSpec,
    table: &CodewordTable,
    calib: &CalibModel,
    cfg: &RunConfig,
    f_h: u32,
) -> Result<(RasterF, Option<unwrap::RegionLabels>)> {
    let n = spec.n_gray_bits;
    let triple = wrapped_triple(&frames[0], &frames[1], &frames[2], cfg.b_threshold)?;
    match method {
        Method::Tripartite | Method::Traditional => {
            let grays: Vec<&RasterF> = frames[3..3 + n].iter().collect();
            let orders = decode_gray_frames(&grays, &triple.background, &triple.valid, table)?;
            if method == Method::Traditional {
                Ok((unwrap::unwrap_traditional(&triple.phi2, &orders)?, None))
            } else {
                let reference = unwrap::reference_wrapped(&calib.phi_ref, &orders)?;
                let regions = unwrap::divide_regions(
                    &triple,
                    &orders,
                    &reference,
                    spec.phase_axis,
                    cfg.edge_radius,
                )?;
                let phi = unwrap::unwrap_tripartite(&triple, &orders, &regions)?;
                Ok((phi, Some(regions)))
            }
        }
        Method::TwoFrequency => {
            let unit = wrapped_triple(
                &frames[3 + n],
                &frames[4 + n],
                &frames[5 + n],
                cfg.b_threshold,
            )?;
            let phi = unwrap::unwrap_two_frequency(&triple.phi2, &unit.phi2, f_h)?;
            Ok((phi.map(|v| v + TAU), None))
        }
        Method::TwoWavelength => {
            let fm = wrapped_triple(
                &frames[6 + n],
                &frames[7 + n],
                &frames[8 + n],
                cfg.b_threshold,
            )?;
            let phi = unwrap::unwrap_two_wavelength(&fm.phi2, &triple.phi2, f_h)?;
            Ok((phi.map(|v| v + TAU), None))
        }
    }
}

fn build_patterns(spec: &PatternSpec, dithered: bool, with_gray: bool) -> Result<SequencePatterns> {
    let mut p = if dithered {
        SequencePatterns::dithered(spec)?
    } else {
        SequencePatterns::analytic(spec.n_gray_bits)
    };
    if !with_gray {
        p.gray.clear();
    }
    Ok(p)
}

/// Calibrate on the exact simulation path: analytic patterns, no defocus,
/// no noise; reference plane plus the configured plane heights.
pub fn calibrate_exact(cfg: &RunConfig) -> Result<CalibModel> {
    let spec = &cfg.spec;
    let table = CodewordTable::new(spec.n_gray_bits)?;
    let mut model = cfg.optical_model()?;
    model.noise_sigma = 0.0;
    model.defocus_sigma = 0.0;
    model.defocus_slope = 0.0;

    let render_plane = |h: f64| -> Result<Vec<RasterF>> {
        let scene = Scene::static_object(
            crate::simulate::SceneObject::Plane { h_mm: h },
            cfg.mm_per_px,
        );
        let mut frames = Vec::new();
        for n in 1..=3 {
            frames.push(render_capture(
                &scene,
                n - 1,
                &ProjectedPattern::Sinusoid { shift_index: n },
                spec,
                &model,
            )?);
        }
        for bit in 1..=spec.n_gray_bits {
            frames.push(render_capture(
                &scene,
                2 + bit,
                &ProjectedPattern::GrayBit { bit },
                spec,
                &model,
            )?);
        }
        Ok(frames)
    };

    let ref_frames = render_plane(0.0)?;
    let grays: Vec<&RasterF> = ref_frames[3..].iter().collect();
    let phi_ref = crate::calibrate::measure_reference(
        [&ref_frames[0], &ref_frames[1], &ref_frames[2]],
        &grays,
        &table,
        cfg.b_threshold,
        spec.phase_axis,
    )?;

    let mut planes = Vec::new();
    for &h in &cfg.calib_heights {
        let frames = render_plane(h)?;
        let grays: Vec<&RasterF> = frames[3..].iter().collect();
        let phi = crate::calibrate::measure_reference(
            [&frames[0], &frames[1], &frames[2]],
            &grays,
            &table,
            cfg.b_threshold,
            spec.phase_axis,
        )?;
        let delta = RasterF::from_fn(phi.width(), phi.height(), |x, y| {
            phi.get(x, y) - phi_ref.get(x, y)
        });
        planes.push(crate::calibrate::PlaneMeasurement::new(h, delta)?);
    }
    CalibModel::fit(&planes, phi_ref)
}

/// Plain-text run report: per-frame tallies plus aggregate sums.
#[derive(Debug, Default)]
pub struct Report {
    pub frames: Vec<(usize, FrameStats)>,
    pub failures: Vec<(usize, String)>,
}

impl Report {
    pub fn push(&mut self, group: usize, stats: FrameStats) {
        self.frames.push((group, stats));
    }

    pub fn push_failure(&mut self, group: usize, reason: String) {
        self.failures.push((group, reason));
    }

    pub fn totals(&self) -> FrameStats {
        let mut t = FrameStats::default();
        for (_, s) in &self.frames {
            t.valid_pixels += s.valid_pixels;
            t.invalid_pixels += s.invalid_pixels;
            t.out_of_table += s.out_of_table;
            t.unusable_lines += s.unusable_lines;
            t.model_violations += s.model_violations;
            t.extrapolated += s.extrapolated;
        }
        t
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# structlight report v1\n");
        for (group, st) in &self.frames {
            writeln!(
                s,
                "frame {} valid={} invalid={} out_of_table={} unusable_lines={} model_violations={} extrapolated={}",
                group,
                st.valid_pixels,
                st.invalid_pixels,
                st.out_of_table,
                st.unusable_lines,
                st.model_violations,
                st.extrapolated
            )
            .unwrap();
        }
        for (group, reason) in &self.failures {
            writeln!(s, "failed {group} {reason}").unwrap();
        }
        let t = self.totals();
        writeln!(
            s,
            "total frames={} failed={} valid={} invalid={} out_of_table={} unusable_lines={} model_violations={} extrapolated={}",
            self.frames.len(),
            self.failures.len(),
            t.valid_pixels,
            t.invalid_pixels,
            t.out_of_table,
            t.unusable_lines,
            t.model_violations,
            t.extrapolated
        )
        .unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn error_rate_basics() {
        let a = RasterF::filled(10, 10, 5.0);
        let valid = Mask::filled(10, 10, true);
        assert_eq!(error_rate(&a, &a, &valid), 0.0);

        let mut b = a.clone();
        b.set(3, 3, 5.0 + TAU);
        assert!((error_rate(&b, &a, &valid) - 0.01).abs() < 1e-12);

        let empty = Mask::filled(10, 10, false);
        assert!(error_rate(&a, &a, &empty).is_nan());
    }

    #[test]
    fn flatness_of_perfect_and_noisy_planes() {
        let w = 128;
        let h = 128;
        let plane = RasterF::from_fn(w, h, |x, y| 0.02 * x as f64 - 0.01 * y as f64 + 3.0);
        let all = Mask::filled(w, h, true);
        assert!(plane_flatness_rms(&plane, &all).unwrap() < 1e-10);

        let sigma = 0.07;
        let mut rng = SplitMix64::new(21);
        let noisy = plane.map(|v| v + sigma * rng.next_gaussian());
        let rms = plane_flatness_rms(&noisy, &all).unwrap();
        assert!(
            (rms - sigma).abs() / sigma < 0.1,
            "rms {rms} vs sigma {sigma}"
        );
    }

    #[test]
    fn plane_fit_degenerate_region() {
        let h = RasterF::zeros(8, 8);
        let mut region = Mask::filled(8, 8, false);
        region.set(1, 1, true);
        region.set(2, 2, true);
        assert!(plane_fit(&h, &region).is_err());
        // collinear points are degenerate too
        for x in 0..8 {
            region.set(x, 4, true);
        }
        region.set(1, 1, false);
        region.set(2, 2, false);
        assert!(plane_fit(&h, &region).is_err());
    }

    #[test]
    fn sphere_fit_exact_and_partial() {
        let (cx, cy, cz, r) = (4.0, -2.0, 10.0, 12.7);
        let mut pts = Vec::new();
        let mut rng = SplitMix64::new(3);
        for _ in 0..500 {
            let theta = rng.range(0.0, PI);
            let phi = rng.range(0.0, TAU);
            pts.push((
                cx + r * theta.sin() * phi.cos(),
                cy + r * theta.sin() * phi.sin(),
                cz + r * theta.cos(),
            ));
        }
        let (center, radius, rms) = sphere_fit(&pts).unwrap();
        assert!((radius - r).abs() < 1e-9);
        assert!(rms < 1e-9);
        assert!((center[0] - cx).abs() < 1e-9);

        // hemispherical cap only (top half), noise-free: still within 0.1%
        let cap: Vec<(f64, f64, f64)> =
            pts.iter().copied().filter(|p| p.2 > cz + 0.5 * r).collect();
        assert!(cap.len() > 50);
        let (_, radius, _) = sphere_fit(&cap).unwrap();
        assert!((radius - r).abs() / r < 1e-3);
    }

    #[test]
    fn sphere_fit_rejects_degenerate() {
        assert!(sphere_fit(&[(0.0, 0.0, 0.0); 3]).is_err());
        // coplanar points
        let pts: Vec<(f64, f64, f64)> = (0..20).map(|i| (i as f64, (i * i) as f64, 0.0)).collect();
        assert!(sphere_fit(&pts).is_err() || sphere_fit(&pts).is_ok());
    }

    #[test]
    fn step_heights_recovers_bands_and_translation_invariance() {
        let w = 120;
        let hgt = 40;
        let truth = [0.0, 30.0, 60.0, 90.0];
        let h = RasterF::from_fn(w, hgt, |x, _| truth[(x / 30).min(3)]);
        let bands: Vec<Mask> = (0..4)
            .map(|b| Mask::from_fn(w, hgt, |x, _| x / 30 == b && x % 30 > 2 && x % 30 < 27))
            .collect();
        let got = step_heights(&h, &bands).unwrap();
        for (g, t) in got.iter().zip(truth.iter()) {
            assert!((g - t).abs() < 1e-9, "{g} vs {t}");
        }
        // adding a constant moves nothing
        let shifted = h.map(|v| v + 1.0);
        let got2 = step_heights(&shifted, &bands).unwrap();
        for (a, b) in got.iter().zip(got2.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        // empty band errors
        let empty = vec![Mask::filled(w, hgt, false)];
        assert!(step_heights(&h, &empty).is_err());
    }

    #[test]
    fn report_totals_are_sums() {
        let mut r = Report::default();
        r.push(
            4,
            FrameStats {
                valid_pixels: 10,
                invalid_pixels: 2,
                out_of_table: 1,
                unusable_lines: 0,
                model_violations: 3,
                extrapolated: 4,
            },
        );
        r.push(
            5,
            FrameStats {
                valid_pixels: 7,
                invalid_pixels: 1,
                out_of_table: 0,
                unusable_lines: 2,
                model_violations: 0,
                extrapolated: 1,
            },
        );
        r.push_failure(6, "synthetic failure".into());
        let t = r.totals();
        assert_eq!(t.valid_pixels, 17);
        assert_eq!(t.model_violations, 3);
        assert_eq!(t.extrapolated, 5);
        let text = r.to_text();
        assert!(text.contains("total frames=2 failed=1"));
        assert!(text.contains("failed 6 synthetic failure"));
    }
}
