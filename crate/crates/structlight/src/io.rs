//! Bit-exact file I/O: binary PGM (P5), the "FRF" float raster format, and
//! ASCII PLY point clouds.
//!
//! Intensities are normalized to [0, 1] at this boundary so algorithm code
//! never sees camera bit depth. NaN survives FRF roundtrips and marks invalid
//! pixels in stored phase maps.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::raster::RasterF;
use crate::Result;

/// Read a binary PGM (magic `P5`, maxval 255 or 65535). Values are scaled to
/// [0, 1] by dividing by maxval; 16-bit samples are big-endian.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<RasterF> {
    let mut bytes = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    parse_pgm(&bytes)
}

/// Parse PGM bytes; split out for tests.
pub fn parse_pgm(bytes: &[u8]) -> Result<RasterF> {
    let mut pos = 0usize;

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::PgmParse {
            offset: 0,
            msg: "missing P5 magic".into(),
        });
    }
    pos += 2;

    let width = read_pgm_int(bytes, &mut pos)?;
    let height = read_pgm_int(bytes, &mut pos)?;
    let maxval = read_pgm_int(bytes, &mut pos)?;
    if maxval != 255 && maxval != 65535 {
        return Err(Error::PgmParse {
            offset: pos,
            msg: format!("unsupported maxval {maxval} (expected 255 or 65535)"),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::PgmParse {
            offset: pos,
            msg: format!("bad dimensions {width}x{height}"),
        });
    }
    // exactly one whitespace byte separates header from payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::PgmParse {
            offset: pos,
            msg: "expected whitespace before payload".into(),
        });
    }
    pos += 1;

    let bytes_per_sample = if maxval == 255 { 1 } else { 2 };
    let need = width * height * bytes_per_sample;
    if bytes.len() - pos < need {
        return Err(Error::PgmParse {
            offset: bytes.len(),
            msg: format!(
                "truncated payload: need {need} bytes, have {}",
                bytes.len() - pos
            ),
        });
    }

    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(width * height);
    if bytes_per_sample == 1 {
        for &b in &bytes[pos..pos + need] {
            values.push(b as f64 * scale);
        }
    } else {
        for chunk in bytes[pos..pos + need].chunks_exact(2) {
            let v = u16::from_be_bytes([chunk[0], chunk[1]]);
            values.push(v as f64 * scale);
        }
    }
    RasterF::from_vec(width, height, values)
}

fn read_pgm_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    // skip whitespace and '#' comment lines
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::PgmParse {
            offset: start,
            msg: "expected integer".into(),
        });
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::PgmParse {
            offset: start,
            msg: "integer out of range".into(),
        })
}

/// Write a raster as binary PGM. Values must be in [0, 1]; they are quantized
/// by `round(v * maxval)` (half away from zero). 16-bit samples big-endian.
pub fn write_pgm(r: &RasterF, path: impl AsRef<Path>, maxval: u32) -> Result<()> {
    let bytes = encode_pgm(r, maxval)?;
    let mut f = BufWriter::new(File::create(path.as_ref())?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

/// Encode as PGM bytes; split out for tests.
pub fn encode_pgm(r: &RasterF, maxval: u32) -> Result<Vec<u8>> {
    assert!(
        maxval == 255 || maxval == 65535,
        "maxval must be 255 or 65535"
    );
    for y in 0..r.height() {
        for x in 0..r.width() {
            let v = r.get(x, y);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range { x, y, value: v });
            }
        }
    }
    let mut out = Vec::with_capacity(32 + r.len() * if maxval == 255 { 1 } else { 2 });
    out.extend_from_slice(format!("P5\n{} {}\n{}\n", r.width(), r.height(), maxval).as_bytes());
    let m = maxval as f64;
    if maxval == 255 {
        for &v in r.values() {
            out.push((v * m).round() as u8);
        }
    } else {
        for &v in r.values() {
            out.extend_from_slice(&((v * m).round() as u16).to_be_bytes());
        }
    }
    Ok(out)
}

const FRF_MAGIC: &str = "FRF";

/// Write the float raster format: one ASCII header line
/// `FRF <width> <height>\n` followed by width*height little-endian f32
/// values, row-major. NaN is preserved (canonicalized so output is
/// byte-deterministic).
pub fn write_raster(r: &RasterF, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path.as_ref())?);
    writeln!(f, "{FRF_MAGIC} {} {}", r.width(), r.height())?;
    for &v in r.values() {
        let q = if v.is_nan() { f32::NAN } else { v as f32 };
        f.write_all(&q.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Read the float raster format written by [`write_raster`].
pub fn read_raster(path: impl AsRef<Path>) -> Result<RasterF> {
    let mut bytes = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut bytes)?;

    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::RasterParse("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::RasterParse("header is not UTF-8".into()))?;
    let mut it = header.split_ascii_whitespace();
    match it.next() {
        Some(FRF_MAGIC) => {}
        other => {
            return Err(Error::RasterParse(format!(
                "bad magic {:?}, expected {FRF_MAGIC}",
                other.unwrap_or("")
            )))
        }
    }
    let width: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::RasterParse("bad width".into()))?;
    let height: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::RasterParse("bad height".into()))?;
    if it.next().is_some() {
        return Err(Error::RasterParse("trailing tokens in header".into()));
    }

    let payload = &bytes[nl + 1..];
    if payload.len() != width * height * 4 {
        return Err(Error::RasterParse(format!(
            "payload size {} does not match {width}x{height} f32 values",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(width * height);
    for chunk in payload.chunks_exact(4) {
        values.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    RasterF::from_vec(width, height, values)
}

/// Write points as ASCII PLY. Non-finite points are dropped, not errors;
/// returns the number dropped.
pub fn write_ply(points: &[(f64, f64, f64)], path: impl AsRef<Path>) -> Result<usize> {
    let finite: Vec<&(f64, f64, f64)> = points
        .iter()
        .filter(|(x, y, z)| x.is_finite() && y.is_finite() && z.is_finite())
        .collect();
    let dropped = points.len() - finite.len();

    let mut f = BufWriter::new(File::create(path.as_ref())?);
    writeln!(f, "ply")?;
    writeln!(f, "format ascii 1.0")?;
    writeln!(f, "element vertex {}", finite.len())?;
    writeln!(f, "property float x")?;
    writeln!(f, "property float y")?;
    writeln!(f, "property float z")?;
    writeln!(f, "end_header")?;
    for (x, y, z) in finite {
        writeln!(f, "{} {} {}", x, y, z)?;
    }
    f.flush()?;
    Ok(dropped)
}

/// Write `key = value` manifest lines.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path.as_ref())?);
    for (k, v) in entries {
        writeln!(f, "{k} = {v}")?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn pgm_endpoint_scaling() {
        // 2x1 P5 maxval 255 bytes [0, 255] -> [0.0, 1.0]
        let bytes = b"P5\n2 1\n255\n\x00\xff";
        let r = parse_pgm(bytes).unwrap();
        assert_eq!((r.width(), r.height()), (2, 1));
        assert_eq!(r.values(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_16bit_big_endian() {
        // big-endian sample 0x8000 -> 32768/65535
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x80, 0x00]);
        let r = parse_pgm(&bytes).unwrap();
        assert_eq!(r.get(0, 0), 32768.0 / 65535.0);
    }

    #[test]
    fn pgm_quantization() {
        let r = RasterF::from_vec(3, 1, vec![0.5, 1.0, 0.0]).unwrap();
        let bytes = encode_pgm(&r, 255).unwrap();
        // round(0.5 * 255) = round(127.5) = 128 (half away from zero)
        assert_eq!(&bytes[bytes.len() - 3..], &[128, 255, 0]);
    }

    #[test]
    fn pgm_out_of_range_names_pixel() {
        let mut r = RasterF::zeros(4, 2);
        r.set(3, 1, 1.2);
        match encode_pgm(&r, 255) {
            Err(Error::Range { x, y, value }) => {
                assert_eq!((x, y), (3, 1));
                assert_eq!(value, 1.2);
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn pgm_truncated_payload_reports_offset() {
        let bytes = b"P5\n2 2\n255\n\x01\x02";
        match parse_pgm(bytes) {
            Err(Error::PgmParse { offset, msg }) => {
                assert_eq!(offset, bytes.len());
                assert!(msg.contains("truncated"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pgm_roundtrip_bytes() {
        // byte-for-byte for canonical files whose values are exact
        // multiples of 1/maxval, at both supported depths
        let mut rng = SplitMix64::new(11);
        for i in 0..20 {
            let maxval = if i % 2 == 0 { 255u32 } else { 65535 };
            let w = 1 + (rng.next_u64() % 64) as usize;
            let h = 1 + (rng.next_u64() % 64) as usize;
            let r = RasterF::from_fn(w, h, |_, _| {
                (rng.next_u64() % (maxval as u64 + 1)) as f64 / maxval as f64
            });
            let bytes = encode_pgm(&r, maxval).unwrap();
            let r2 = parse_pgm(&bytes).unwrap();
            let bytes2 = encode_pgm(&r2, maxval).unwrap();
            assert_eq!(bytes, bytes2);
        }
    }

    #[test]
    fn frf_roundtrip_exact_and_nan() {
        let dir = std::env::temp_dir().join("structlight_frf_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.frf");

        let mut rng = SplitMix64::new(3);
        for _ in 0..10 {
            let w = 1 + (rng.next_u64() % 64) as usize;
            let h = 1 + (rng.next_u64() % 64) as usize;
            let mut r = RasterF::from_fn(w, h, |_, _| (rng.next_f64() - 0.5) as f32 as f64);
            r.set(0, 0, f64::NAN);
            write_raster(&r, &path).unwrap();
            let r2 = read_raster(&path).unwrap();
            assert!(r2.get(0, 0).is_nan());
            for i in 1..r.len() {
                assert_eq!(r.values()[i], r2.values()[i]);
            }
        }
    }

    #[test]
    fn frf_size_mismatch() {
        let dir = std::env::temp_dir().join("structlight_frf_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.frf");
        // header claims 2x2 but only 3 payload values
        let mut bytes = b"FRF 2 2\n".to_vec();
        for _ in 0..3 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        match read_raster(&path) {
            Err(Error::RasterParse(msg)) => assert!(msg.contains("payload size"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ply_empty_and_single() {
        let dir = std::env::temp_dir().join("structlight_ply_test");
        std::fs::create_dir_all(&dir).unwrap();

        let p = dir.join("empty.ply");
        let dropped = write_ply(&[], &p).unwrap();
        assert_eq!(dropped, 0);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 0"));

        let p = dir.join("one.ply");
        write_ply(&[(0.0, 0.0, 0.0)], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 1"));
        assert!(text.lines().last().unwrap() == "0 0 0");
    }

    #[test]
    fn ply_drops_non_finite() {
        let dir = std::env::temp_dir().join("structlight_ply_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("nan.ply");
        let dropped = write_ply(&[(1.0, 2.0, 3.0), (1.0, 2.0, f64::NAN)], &p).unwrap();
        assert_eq!(dropped, 1);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 1"));
    }
}
