//! Run configuration: `key = value` config files shared by the CLI
//! subcommands.
//!
//! Lines starting with `#` are comments. Scene step bands are written as
//! comma-separated `start:end:height` triples.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::patterns::{PatternSpec, ALIGNMENT_PHI0};
use crate::pipeline::Method;
use crate::raster::PhaseAxis;
use crate::sequence::AssemblyPolicy;
use crate::simulate::{OpticalModel, Scene, SceneObject};
use crate::Result;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: PatternSpec,
    pub gain_k: f64,
    pub saturation_l: f64,
    pub defocus_sigma: f64,
    pub defocus_slope: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub reflectivity_path: Option<PathBuf>,
    pub scene: SceneObject,
    pub velocity: f64,
    pub mm_per_px: f64,
    pub method: Method,
    pub assembly: AssemblyPolicy,
    pub b_threshold: f64,
    pub edge_radius: usize,
    pub n_groups: usize,
    pub rate_hz: f64,
    pub calib_heights: Vec<f64>,
    /// Noise sweep for `compare`.
    pub noise_sigmas: Vec<f64>,
    /// Seed sweep for `compare`.
    pub seeds: Vec<u64>,
    /// Project dithered binary patterns (the high-speed path) or ideal
    /// continuous-tone sinusoids.
    pub dithered: bool,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map: HashMap<String, String> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Self::from_map(map)
    }

    fn from_map(mut map: HashMap<String, String>) -> Result<Self> {
        fn take<T: std::str::FromStr>(
            map: &mut HashMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T> {
            match map.remove(key) {
                None => Ok(default),
                Some(s) => s
                    .parse()
                    .map_err(|_| Error::Config(format!("bad value for {key}: '{s}'"))),
            }
        }
        fn take_list_f64(
            map: &mut HashMap<String, String>,
            key: &str,
            default: &[f64],
        ) -> Result<Vec<f64>> {
            match map.remove(key) {
                None => Ok(default.to_vec()),
                Some(s) => s
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse()
                            .map_err(|_| Error::Config(format!("bad value in {key}: '{t}'")))
                    })
                    .collect(),
            }
        }

        let period: f64 = take(&mut map, "period", 70.0)?;
        let periods: usize = take(&mut map, "periods", 16)?;
        let bits: usize = take(&mut map, "bits", 4)?;
        let width: usize = take(&mut map, "width", 1120)?;
        let height: usize = take(&mut map, "height", 64)?;
        let axis: PhaseAxis = take(&mut map, "axis", PhaseAxis::X)?;
        let phi0: f64 = take(&mut map, "phi0", ALIGNMENT_PHI0)?;
        let spec = PatternSpec {
            period_px: period,
            n_periods: periods,
            phase_axis: axis,
            n_gray_bits: bits,
            phi0,
            proj_width: width,
            proj_height: height,
        };
        spec.validate()?;

        let scene = parse_scene(&mut map)?;
        let method: Method = take(&mut map, "method", Method::Tripartite)?;
        let assembly = match map.remove("assembly").as_deref() {
            None | Some("causal") => AssemblyPolicy::Causal,
            Some("centered") => AssemblyPolicy::Centered,
            Some(other) => return Err(Error::Config(format!("unknown assembly policy '{other}'"))),
        };

        let seeds = match map.remove("seeds") {
            None => vec![1u64],
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad seed '{t}'")))
                })
                .collect::<Result<_>>()?,
        };

        let cfg = Self {
            spec,
            gain_k: take(&mut map, "gain_k", 0.05)?,
            saturation_l: take(&mut map, "saturation_l", 800.0)?,
            defocus_sigma: take(&mut map, "defocus_sigma", 0.0)?,
            defocus_slope: take(&mut map, "defocus_slope", 0.0)?,
            noise_sigma: take(&mut map, "noise_sigma", 0.0)?,
            seed: take(&mut map, "seed", 1u64)?,
            reflectivity_path: map.remove("reflectivity").map(PathBuf::from),
            scene,
            velocity: take(&mut map, "velocity", 0.0)?,
            mm_per_px: take(&mut map, "mm_per_px", 0.25)?,
            method,
            assembly,
            b_threshold: take(&mut map, "b_threshold", 0.02)?,
            edge_radius: take(&mut map, "edge_radius", 2)?,
            n_groups: take(&mut map, "groups", 8)?,
            rate_hz: take(&mut map, "rate_hz", 2170.0)?,
            calib_heights: take_list_f64(&mut map, "calib_heights", &[30.0, 60.0, 90.0, 120.0])?,
            noise_sigmas: take_list_f64(&mut map, "noise_sigmas", &[0.05])?,
            seeds,
            dithered: take(&mut map, "dithered", true)?,
        };

        if cfg.gain_k <= 0.0 || cfg.saturation_l <= 0.0 {
            return Err(Error::Config(
                "gain_k and saturation_l must be positive".into(),
            ));
        }
        if cfg.defocus_sigma < 0.0 || cfg.noise_sigma < 0.0 {
            return Err(Error::Config("sigmas must be non-negative".into()));
        }
        if let Some(key) = map.keys().next() {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        cfg.scene.validate(cfg.saturation_l)?;
        Ok(cfg)
    }

    pub fn optical_model(&self) -> Result<OpticalModel> {
        let mut model = OpticalModel::new(self.gain_k, self.saturation_l, self.spec.period_px);
        model.defocus_sigma = self.defocus_sigma;
        model.defocus_slope = self.defocus_slope;
        model.noise_sigma = self.noise_sigma;
        model.seed = self.seed;
        if let Some(path) = &self.reflectivity_path {
            let refl = crate::io::read_raster(path)?;
            if refl.values().iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                return Err(crate::Error::Config(
                    "reflectivity values must lie in (0, 1]".into(),
                ));
            }
            model.reflectivity = Some(refl);
        }
        Ok(model)
    }

    pub fn scene(&self) -> Scene {
        Scene {
            object: self.scene.clone(),
            velocity: self.velocity,
            mm_per_px: self.mm_per_px,
        }
    }
}

fn parse_scene(map: &mut HashMap<String, String>) -> Result<SceneObject> {
    let kind = map.remove("scene").unwrap_or_else(|| "plane".to_string());
    match kind.as_str() {
        "plane" => {
            let h = map
                .remove("plane_h")
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad plane_h '{s}'")))
                })
                .transpose()?
                .unwrap_or(0.0);
            Ok(SceneObject::Plane { h_mm: h })
        }
        "steps" => {
            let spec = map
                .remove("bands")
                .ok_or_else(|| Error::Config("steps scene needs 'bands'".into()))?;
            let bands = parse_bands(&spec)?;
            Ok(SceneObject::Steps { bands })
        }
        "sphere_cap" => {
            let center = map
                .remove("cap_center")
                .ok_or_else(|| Error::Config("sphere_cap needs 'cap_center'".into()))?;
            let (a, b) = center
                .split_once(',')
                .ok_or_else(|| Error::Config("cap_center must be 'along,across'".into()))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad cap_center part '{s}'")))
            };
            let radius = map
                .remove("cap_radius")
                .ok_or_else(|| Error::Config("sphere_cap needs 'cap_radius'".into()))?
                .parse::<f64>()
                .map_err(|_| Error::Config("bad cap_radius".into()))?;
            let apex = map
                .remove("cap_apex")
                .ok_or_else(|| Error::Config("sphere_cap needs 'cap_apex'".into()))?
                .parse::<f64>()
                .map_err(|_| Error::Config("bad cap_apex".into()))?;
            Ok(SceneObject::SphereCap {
                center: (parse(a)?, parse(b)?),
                radius_mm: radius,
                apex_mm: apex,
            })
        }
        other => Err(Error::Config(format!("unknown scene kind '{other}'"))),
    }
}

/// Parse `start:end:height` triples separated by commas.
pub fn parse_bands(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    text.split(',')
        .map(|triple| {
            let parts: Vec<&str> = triple.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "band '{triple}' must be start:end:height"
                )));
            }
            let nums: Result<Vec<f64>> = parts
                .iter()
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad band number '{p}'")))
                })
                .collect();
            let nums = nums?;
            Ok((nums[0], nums[1], nums[2]))
        })
        .collect()
}
