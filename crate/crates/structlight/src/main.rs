//! Command-line driver: pattern generation, simulation, calibration,
//! reconstruction, and the four-method comparison.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use structlight::config::RunConfig;
use structlight::io;
use structlight::patterns::{CodewordTable, PatternSet, PatternSpec, ALIGNMENT_PHI0};
use structlight::pipeline;
use structlight::raster::{PhaseAxis, RasterF};
use structlight::sequence::{Role, Schedule};
use structlight::simulate::{render_sequence, SequencePatterns, TaggedFrame};
use structlight::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_MISSING: u8 = 3;
const EXIT_CONFIG: u8 = 4;
const EXIT_PROCESSING: u8 = 5;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(cmd) = args.first() else {
        eprintln!("{}", usage());
        return fail(EXIT_USAGE, "missing subcommand");
    };
    let rest = &args[1..];
    let outcome = match cmd.as_str() {
        "gen-patterns" => cmd_gen_patterns(rest),
        "simulate" => cmd_simulate(rest),
        "calibrate" => cmd_calibrate(rest),
        "reconstruct" => cmd_reconstruct(rest),
        "compare" => cmd_compare(rest),
        "report" => cmd_report(rest),
        "--help" | "-h" | "help" => {
            println!("{}", usage());
            return ExitCode::SUCCESS;
        }
        other => {
            eprintln!("{}", usage());
            return fail(EXIT_USAGE, &format!("unknown subcommand '{other}'"));
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                Error::Usage(_) => EXIT_USAGE,
                Error::Io(_) | Error::MissingInput(_) => EXIT_MISSING,
                Error::Config(_) | Error::PatternSpec(_) => EXIT_CONFIG,
                _ => EXIT_PROCESSING,
            };
            fail(code, &e.to_string())
        }
    }
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("error[{code}]: {msg}");
    ExitCode::from(code)
}

fn usage() -> &'static str {
    "structlight <subcommand>

  gen-patterns --period P --periods N --bits B --out DIR
               [--width W --height H --axis x|y --phi0 RAD --ideal]
  simulate     --config FILE --out DIR
  calibrate    --config FILE --out DIR
  reconstruct  --config FILE --frames DIR --calib DIR --out DIR
  compare      --config FILE --out DIR
  report       --in FILE"
}

/// Minimal flag parser: every flag takes one value except listed switches.
struct Flags {
    values: std::collections::HashMap<String, String>,
    switches: std::collections::HashSet<String>,
}

impl Flags {
    fn parse(args: &[String], switch_names: &[&str]) -> Result<Self, Error> {
        let mut values = std::collections::HashMap::new();
        let mut switches = std::collections::HashSet::new();
        let mut it = args.iter();
        while let Some(a) = it.next() {
            let name = a
                .strip_prefix("--")
                .ok_or_else(|| Error::Usage(format!("unexpected argument '{a}'")))?;
            if switch_names.contains(&name) {
                switches.insert(name.to_string());
            } else {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Usage(format!("flag --{name} needs a value")))?;
                values.insert(name.to_string(), v.clone());
            }
        }
        Ok(Self { values, switches })
    }

    fn get<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, Error> {
        match self.values.get(name) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::Usage(format!("bad value for --{name}: '{s}'"))),
        }
    }

    fn require<T: std::str::FromStr>(&self, name: &str) -> Result<T, Error> {
        self.get(name)?
            .ok_or_else(|| Error::Usage(format!("missing required flag --{name}")))
    }

    fn has(&self, name: &str) -> bool {
        self.switches.contains(name)
    }
}

fn cmd_gen_patterns(args: &[String]) -> Result<(), Error> {
    let flags = Flags::parse(args, &["ideal"])?;
    let period: f64 = flags.require("period")?;
    let periods: usize = flags.require("periods")?;
    let bits: usize = flags.require("bits")?;
    let out: PathBuf = flags.require("out")?;
    let axis: PhaseAxis = flags.get("axis")?.unwrap_or(PhaseAxis::X);
    let extent = (periods as f64 * period).ceil() as usize;
    let (def_w, def_h) = match axis {
        PhaseAxis::X => (extent, 64),
        PhaseAxis::Y => (64, extent),
    };
    let spec = PatternSpec {
        period_px: period,
        n_periods: periods,
        phase_axis: axis,
        n_gray_bits: bits,
        phi0: flags.get("phi0")?.unwrap_or(ALIGNMENT_PHI0),
        proj_width: flags.get("width")?.unwrap_or(def_w),
        proj_height: flags.get("height")?.unwrap_or(def_h),
    };
    spec.validate()?;

    let set = if flags.has("ideal") {
        PatternSet::ideal(&spec)?
    } else {
        PatternSet::dithered(&spec)?
    };
    std::fs::create_dir_all(&out)?;
    let mut entries = spec.manifest_entries();
    for (i, s) in set.sinusoids.iter().enumerate() {
        let name = format!("s{}.pgm", i + 1);
        io::write_pgm(s, out.join(&name), 255)?;
        entries.push((format!("file_s{}", i + 1), name));
    }
    for (i, g) in set.gray.iter().enumerate() {
        let name = format!("g{}.pgm", i + 1);
        io::write_pgm(g, out.join(&name), 255)?;
        entries.push((format!("file_g{}", i + 1), name));
    }
    io::write_manifest(out.join("patterns.txt"), &entries)?;
    println!(
        "wrote {} patterns to {}",
        set.sinusoids.len() + set.gray.len(),
        out.display()
    );
    Ok(())
}

fn cmd_simulate(args: &[String]) -> Result<(), Error> {
    let flags = Flags::parse(args, &[])?;
    let config: PathBuf = flags.require("config")?;
    let out: PathBuf = flags.require("out")?;
    let cfg = RunConfig::from_file(&config)?;

    let spec = cfg.spec.clone();
    if spec.n_gray_bits != structlight::sequence::GRAY_BITS {
        return Err(Error::Config(format!(
            "the time-overlapping schedule projects {} gray patterns; set bits = {}",
            structlight::sequence::GRAY_BITS,
            structlight::sequence::GRAY_BITS
        )));
    }
    let model = cfg.optical_model()?;
    let scene = cfg.scene();
    let schedule = Schedule::new(cfg.n_groups)?;
    let patterns = if cfg.dithered {
        SequencePatterns::dithered(&spec)?
    } else {
        SequencePatterns::analytic(spec.n_gray_bits)
    };
    let frames = render_sequence(&scene, &schedule, &patterns, &spec, &model)?;

    std::fs::create_dir_all(&out)?;
    let mut manifest = String::new();
    for frame in &frames {
        let name = format!("frame_{:04}.pgm", frame.index);
        // NaN (off-field) stores as 0 in PGM; the FRF truth keeps NaN
        let clamped = frame.raster.map(|v| if v.is_nan() { 0.0 } else { v });
        io::write_pgm(&clamped, out.join(&name), 65535)?;
        manifest.push_str(&format!("{} {} {}\n", frame.index, frame.role, name));
    }
    std::fs::write(out.join("manifest.txt"), manifest)?;

    let truth = RasterF::from_fn(spec.proj_width, spec.proj_height, |x, y| {
        let (along, across) = spec.phase_axis.split(x, y);
        scene.height_at_time(along as f64, across as f64, 0.0)
    });
    io::write_raster(&truth, out.join("truth_height.frf"))?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn cmd_calibrate(args: &[String]) -> Result<(), Error> {
    let flags = Flags::parse(args, &[])?;
    let config: PathBuf = flags.require("config")?;
    let out: PathBuf = flags.require("out")?;
    let cfg = RunConfig::from_file(&config)?;

    let model = pipeline::calibrate_exact(&cfg)?;
    let meta: Vec<(String, String)> = vec![
        (
            "plane_heights".into(),
            cfg.calib_heights
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("gain_k".into(), cfg.gain_k.to_string()),
        ("saturation_l".into(), cfg.saturation_l.to_string()),
    ];
    model.save(&out, &meta)?;
    println!(
        "calibrated ({} uncalibrated pixels) -> {}",
        model.uncalibrated,
        out.display()
    );
    Ok(())
}

fn load_frames(dir: &Path) -> Result<Vec<TaggedFrame>, Error> {
    let manifest = std::fs::read_to_string(dir.join("manifest.txt"))
        .map_err(|_| Error::MissingInput(format!("{}/manifest.txt", dir.display())))?;
    let mut frames = Vec::new();
    for line in manifest.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let index: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad manifest line '{line}'")))?;
        let role: Role = it
            .next()
            .ok_or_else(|| Error::Config(format!("bad manifest line '{line}'")))?
            .parse()?;
        let file = it
            .next()
            .ok_or_else(|| Error::Config(format!("bad manifest line '{line}'")))?;
        let raster = io::read_pgm(dir.join(file))?;
        frames.push(TaggedFrame {
            index,
            role,
            raster,
        });
    }
    if frames.is_empty() {
        return Err(Error::MissingInput("manifest lists no frames".into()));
    }
    frames.sort_by_key(|f| f.index);
    Ok(frames)
}

fn cmd_reconstruct(args: &[String]) -> Result<(), Error> {
    let flags = Flags::parse(args, &[])?;
    let config: PathBuf = flags.require("config")?;
    let frames_dir: PathBuf = flags.require("frames")?;
    let calib_dir: PathBuf = flags.require("calib")?;
    let out: PathBuf = flags.require("out")?;
    let cfg = RunConfig::from_file(&config)?;

    let frames = load_frames(&frames_dir)?;
    let calib = structlight::calibrate::CalibModel::load(&calib_dir)?;
    let table = CodewordTable::new(cfg.spec.n_gray_bits)?;
    let results = pipeline::reconstruct_stream(&frames, &cfg.spec, &table, &calib, &cfg)?;

    std::fs::create_dir_all(&out)?;
    let mut report = pipeline::Report::default();
    for (group, result) in &results.groups {
        let dropped = io::write_ply(&result.points, out.join(format!("group_{group:04}.ply")))?;
        if dropped > 0 {
            eprintln!("group {group}: {dropped} non-finite points dropped");
        }
        io::write_raster(&result.height, out.join(format!("group_{group:04}_h.frf")))?;
        report.push(*group, result.stats.clone());
    }
    for (group, reason) in &results.failures {
        eprintln!("group {group} failed: {reason}");
        report.push_failure(*group, reason.clone());
    }
    std::fs::write(out.join("report.txt"), report.to_text())?;
    println!(
        "reconstructed {} groups -> {}",
        results.groups.len(),
        out.display()
    );
    Ok(())
}

fn cmd_compare(args: &[String]) -> Result<(), Error> {
    let flags = Flags::parse(args, &[])?;
    let config: PathBuf = flags.require("config")?;
    let out: PathBuf = flags.require("out")?;
    let cfg = RunConfig::from_file(&config)?;
    let outcome = pipeline::compare(&cfg)?;
    outcome.write(&out)?;
    println!("{}", outcome.to_csv());
    Ok(())
}

fn cmd_report(args: &[String]) -> Result<(), Error> {
    let flags = Flags::parse(args, &[])?;
    let input: PathBuf = flags.require("in")?;
    let text = std::fs::read_to_string(&input)
        .map_err(|_| Error::MissingInput(input.display().to_string()))?;
    let mut frames = 0usize;
    for line in text.lines() {
        if line.starts_with("frame ") {
            frames += 1;
        }
        if line.starts_with("total ") {
            println!("{line}");
        }
    }
    println!("frames: {frames}");
    Ok(())
}
