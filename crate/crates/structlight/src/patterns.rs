//! Projected pattern stack: three phase-shifted sinusoids (ideal and
//! Bayer-dithered binary) plus N Gray-coded binary patterns.
//!
//! The sinusoid at shift index n is
//!
//! ```text
//! I_n(v) = 0.5 + 0.5 * cos(2*pi*v/P + 2*pi*(n-1)/3 + phi0)
//! ```
//!
//! along the phase axis. With the default `phi0 = pi/3`, the wrapped phase
//! recovered by the three-step analysis equals `wrap(2*pi*v/P + pi)`: its
//! branch cut sits exactly on codeword boundaries `v = m*P` and `|phase| <
//! pi/3` holds exactly on the middle third of each period. Everything
//! downstream that splits orders into low/mid/high bands relies on that
//! alignment, so [`verify_alignment`] checks it on the generated stack.

use std::f64::consts::{PI, TAU};

use crate::error::Error;
use crate::raster::{PhaseAxis, RasterF};
use crate::Result;

/// Initial phase that aligns wrapped-phase branch cuts with codeword
/// boundaries (see module docs).
pub const ALIGNMENT_PHI0: f64 = PI / 3.0;

/// Geometry of the projected pattern stack.
#[derive(Debug, Clone)]
pub struct PatternSpec {
    /// Pixels per fringe period (fractional periods are legal; baseline
    /// pattern sets at other frequencies need them).
    pub period_px: f64,
    /// Number of fringe periods along the phase axis.
    pub n_periods: usize,
    /// Image axis along which the projected phase increases.
    pub phase_axis: PhaseAxis,
    /// Number of Gray-coded bit patterns.
    pub n_gray_bits: usize,
    /// Initial phase offset, radians.
    pub phi0: f64,
    pub proj_width: usize,
    pub proj_height: usize,
}

impl PatternSpec {
    /// Spec with the alignment offset and Y phase axis.
    pub fn new(
        period_px: f64,
        n_periods: usize,
        n_gray_bits: usize,
        proj_width: usize,
        proj_height: usize,
    ) -> Result<Self> {
        Self::on_axis(
            period_px,
            n_periods,
            n_gray_bits,
            PhaseAxis::Y,
            proj_width,
            proj_height,
        )
    }

    /// Spec with an explicit phase axis.
    pub fn on_axis(
        period_px: f64,
        n_periods: usize,
        n_gray_bits: usize,
        phase_axis: PhaseAxis,
        proj_width: usize,
        proj_height: usize,
    ) -> Result<Self> {
        let spec = Self {
            period_px,
            n_periods,
            phase_axis,
            n_gray_bits,
            phi0: ALIGNMENT_PHI0,
            proj_width,
            proj_height,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_px.is_nan() || self.period_px < 8.0 {
            return Err(Error::PatternSpec(format!(
                "period {} px too small for dithering (need >= 8)",
                self.period_px
            )));
        }
        if self.n_gray_bits == 0 || self.n_gray_bits > 16 {
            return Err(Error::PatternSpec(format!(
                "gray bit count {} outside [1, 16]",
                self.n_gray_bits
            )));
        }
        if self.n_periods > 1usize << self.n_gray_bits {
            return Err(Error::PatternSpec(format!(
                "{} periods cannot be labeled by {} gray bits",
                self.n_periods, self.n_gray_bits
            )));
        }
        let extent = self.extent();
        if self.n_periods as f64 * self.period_px > extent as f64 + 1e-9 {
            return Err(Error::PatternSpec(format!(
                "{} periods of {} px exceed the {} px extent",
                self.n_periods, self.period_px, extent
            )));
        }
        Ok(())
    }

    /// Projector extent along the phase axis.
    pub fn extent(&self) -> usize {
        self.phase_axis.extent(self.proj_width, self.proj_height)
    }

    /// 1-based fringe order containing phase-axis coordinate `v`.
    pub fn order_at(&self, v: f64) -> u32 {
        (v / self.period_px).floor() as u32 + 1
    }

    pub fn manifest_entries(&self) -> Vec<(String, String)> {
        vec![
            ("period_px".into(), self.period_px.to_string()),
            ("n_periods".into(), self.n_periods.to_string()),
            ("phase_axis".into(), self.phase_axis.to_string()),
            ("n_gray_bits".into(), self.n_gray_bits.to_string()),
            ("phi0".into(), format!("{:.17}", self.phi0)),
            ("proj_width".into(), self.proj_width.to_string()),
            ("proj_height".into(), self.proj_height.to_string()),
        ]
    }
}

/// Reflected-binary Gray codeword of 1-based order `k`.
#[inline]
pub fn gray_codeword(k: u32) -> u32 {
    let b = k - 1;
    b ^ (b >> 1)
}

/// Lookup table between decoded decimal values and fringe orders.
///
/// The decimal value of order k is its Gray codeword read MSB-first, so the
/// table is the Gray-to-binary inverse over [0, 2^N).
#[derive(Debug, Clone)]
pub struct CodewordTable {
    n_bits: usize,
    v_to_k: Vec<u32>,
}

impl CodewordTable {
    pub fn new(n_bits: usize) -> Result<Self> {
        if n_bits == 0 || n_bits > 16 {
            return Err(Error::PatternSpec(format!(
                "gray bit count {n_bits} outside [1, 16]"
            )));
        }
        let size = 1usize << n_bits;
        let mut v_to_k = vec![0u32; size];
        for k in 1..=size as u32 {
            v_to_k[gray_codeword(k) as usize] = k;
        }
        Ok(Self { n_bits, v_to_k })
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// Fringe order for decoded value `v`, or None if out of domain.
    #[inline]
    pub fn order_of(&self, v: u32) -> Option<u32> {
        self.v_to_k.get(v as usize).copied()
    }

    /// Decoded decimal value of order `k`.
    pub fn value_of(&self, k: u32) -> u32 {
        gray_codeword(k)
    }
}

/// One phase-shifted sinusoid of the stack, values in [0, 1].
pub fn sinusoid_pattern(spec: &PatternSpec, shift_index: usize) -> RasterF {
    assert!((1..=3).contains(&shift_index), "shift index must be 1..=3");
    let extent = spec.extent();
    let shift = TAU * (shift_index as f64 - 1.0) / 3.0;
    let profile: Vec<f64> = (0..extent)
        .map(|v| 0.5 + 0.5 * (TAU * v as f64 / spec.period_px + shift + spec.phi0).cos())
        .collect();
    raster_from_profile(spec, &profile)
}

/// One Gray-coded binary pattern (values 0/1). `bit` is 1-based, MSB first.
/// Codeword boundaries coincide exactly with `v = m * period_px`.
pub fn gray_pattern(spec: &PatternSpec, bit: usize) -> RasterF {
    assert!(
        (1..=spec.n_gray_bits).contains(&bit),
        "bit {bit} outside [1, {}]",
        spec.n_gray_bits
    );
    let extent = spec.extent();
    let max_order = 1u32 << spec.n_gray_bits;
    let profile: Vec<f64> = (0..extent)
        .map(|v| {
            let k = spec.order_at(v as f64);
            if k > max_order {
                return 0.0; // beyond the labelable range; callers keep extents in range
            }
            ((gray_codeword(k) >> (spec.n_gray_bits - bit)) & 1) as f64
        })
        .collect();
    raster_from_profile(spec, &profile)
}

fn raster_from_profile(spec: &PatternSpec, profile: &[f64]) -> RasterF {
    RasterF::from_fn(spec.proj_width, spec.proj_height, |x, y| {
        let (v, _) = spec.phase_axis.split(x, y);
        profile[v]
    })
}

/// 8x8 Bayer threshold matrix, values a permutation of 0..=63.
pub fn bayer8() -> [[u8; 8]; 8] {
    // recursive construction from the 2x2 kernel [[0,2],[3,1]]: the finest
    // scale carries the most significant digit
    let mut m = [[0u8; 8]; 8];
    let base = [[0u8, 2], [3, 1]];
    for y in 0..8 {
        for x in 0..8 {
            let mut v = 0u8;
            for size in [1, 2, 4] {
                let qx = (x / size) % 2;
                let qy = (y / size) % 2;
                v = v * 4 + base[qy][qx];
            }
            m[y][x] = v;
        }
    }
    m
}

/// Ordered dithering against the tiled 8x8 Bayer matrix: output 1 iff
/// `ideal(x, y) > (bayer8(x mod 8, y mod 8) + 0.5) / 64`.
pub fn dither(ideal: &RasterF) -> RasterF {
    let m = bayer8();
    ideal_dither_with(ideal, &m)
}

fn ideal_dither_with(ideal: &RasterF, m: &[[u8; 8]; 8]) -> RasterF {
    RasterF::from_fn(ideal.width(), ideal.height(), |x, y| {
        let t = (m[y % 8][x % 8] as f64 + 0.5) / 64.0;
        if ideal.get(x, y) > t {
            1.0
        } else {
            0.0
        }
    })
}

/// Full pattern stack for one spec.
#[derive(Debug, Clone)]
pub struct PatternSet {
    pub sinusoids: Vec<RasterF>,
    pub gray: Vec<RasterF>,
}

impl PatternSet {
    /// Ideal (continuous-tone) sinusoids plus Gray patterns.
    pub fn ideal(spec: &PatternSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            sinusoids: (1..=3).map(|n| sinusoid_pattern(spec, n)).collect(),
            gray: (1..=spec.n_gray_bits)
                .map(|b| gray_pattern(spec, b))
                .collect(),
        })
    }

    /// Bayer-dithered binary sinusoids plus Gray patterns (binary already).
    pub fn dithered(spec: &PatternSpec) -> Result<Self> {
        let ideal = Self::ideal(spec)?;
        Ok(Self {
            sinusoids: ideal.sinusoids.iter().map(dither).collect(),
            gray: ideal.gray,
        })
    }
}

/// Generator self-test for the branch-cut/codeword alignment the tripartite
/// unwrapper requires: on the ideal stack, the recovered wrapped phase must
/// cut exactly at `v = m*P` and satisfy `|phase| < pi/3` exactly on the
/// middle third of each period.
pub fn verify_alignment(spec: &PatternSpec) -> Result<()> {
    spec.validate()?;
    let set = PatternSet::ideal(spec)?;
    let triple = crate::fringe::wrapped_triple(
        &set.sinusoids[0],
        &set.sinusoids[1],
        &set.sinusoids[2],
        0.01,
    )?;
    let p = spec.period_px;
    let span = (spec.n_periods as f64 * p).round() as usize;
    for v in 0..span.min(spec.extent()) {
        let (x, y) = spec.phase_axis.join(v, 0);
        let phi = triple.phi2.get(x, y);
        let expected = crate::fringe::wrap(TAU * v as f64 / p + PI);
        if crate::fringe::wrap(phi - expected).abs() > 1e-9 {
            return Err(Error::PatternSpec(format!(
                "alignment broken at v={v}: phase {phi} expected {expected}"
            )));
        }
        let r = v as f64 % p;
        // skip samples landing exactly on a band edge
        if (3.0 * r - p).abs() < 1e-6 || (3.0 * r - 2.0 * p).abs() < 1e-6 {
            continue;
        }
        let in_mid = 3.0 * r > p && 3.0 * r < 2.0 * p;
        if in_mid != (phi.abs() < PI / 3.0) {
            return Err(Error::PatternSpec(format!(
                "mid-band mismatch at v={v}: |phase| = {}",
                phi.abs()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reflected-Gray oracle: build the code list by the textbook
    /// reflect-and-prefix recursion, no XOR tricks.
    fn reflected_gray_list(n_bits: usize) -> Vec<u32> {
        let mut codes = vec![0u32, 1];
        for bit in 1..n_bits {
            let mut next = Vec::with_capacity(codes.len() * 2);
            for &c in &codes {
                next.push(c); // prefix 0
            }
            for &c in codes.iter().rev() {
                next.push(c | (1 << bit)); // prefix 1, reflected
            }
            codes = next;
        }
        codes
    }

    #[test]
    fn codeword_matches_reflection_oracle() {
        for n in 1..=8 {
            let oracle = reflected_gray_list(n);
            for k in 1..=(1u32 << n) {
                assert_eq!(gray_codeword(k), oracle[(k - 1) as usize], "n={n} k={k}");
            }
        }
    }

    #[test]
    fn adjacent_codewords_differ_in_one_bit() {
        for n in 1..=8 {
            for k in 1..(1u32 << n) {
                let diff = gray_codeword(k) ^ gray_codeword(k + 1);
                assert_eq!(diff.count_ones(), 1, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn table_is_bijection() {
        for n in 1..=6 {
            let t = CodewordTable::new(n).unwrap();
            for k in 1..=(1u32 << n) {
                assert_eq!(t.order_of(t.value_of(k)), Some(k));
            }
        }
    }

    #[test]
    fn table_n2_values() {
        // orders 1..4 carry values 0, 1, 3, 2
        let t = CodewordTable::new(2).unwrap();
        assert_eq!(
            (1..=4).map(|k| t.value_of(k)).collect::<Vec<_>>(),
            vec![0, 1, 3, 2]
        );
        assert_eq!(t.order_of(3), Some(3));
    }

    #[test]
    fn table_n4_order_16() {
        // order 16: binary 15 -> gray 1000 -> value 8
        let t = CodewordTable::new(4).unwrap();
        assert_eq!(t.value_of(16), 0b1000);
        assert_eq!(t.order_of(8), Some(16));
    }

    fn small_spec() -> PatternSpec {
        PatternSpec::new(16.0, 4, 2, 8, 64).unwrap()
    }

    #[test]
    fn sinusoid_endpoints_and_periodicity() {
        // phi0 = 0 makes the n=1 argument zero at v=0
        let mut spec = small_spec();
        spec.phi0 = 0.0;
        let s = sinusoid_pattern(&spec, 1);
        assert!((s.get(0, 0) - 1.0).abs() < 1e-12);

        let spec = small_spec();
        let period = spec.period_px as usize;
        for n in 1..=3 {
            let s = sinusoid_pattern(&spec, n);
            for v in 0..spec.extent() - period {
                let (x0, y0) = spec.phase_axis.join(v, 3);
                let (x1, y1) = spec.phase_axis.join(v + period, 3);
                assert!((s.get(x0, y0) - s.get(x1, y1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn production_scale_extent() {
        // 16 periods of 70 px span 1120 px of the projector
        let spec = PatternSpec::new(70.0, 16, 4, 912, 1120).unwrap();
        assert_eq!(spec.n_periods as f64 * spec.period_px, 1120.0);
        assert_eq!(spec.extent(), 1120);
    }

    #[test]
    fn gray_pattern_bits_n2() {
        // 4 periods: bit 1 over orders 1..4 is 0,0,1,1; bit 2 is 0,1,1,0
        let spec = small_spec();
        let b1 = gray_pattern(&spec, 1);
        let b2 = gray_pattern(&spec, 2);
        let order_value = |r: &RasterF, k: usize| {
            let v = ((k as f64 - 0.5) * spec.period_px) as usize;
            let (x, y) = spec.phase_axis.join(v, 0);
            r.get(x, y)
        };
        assert_eq!(
            (1..=4).map(|k| order_value(&b1, k)).collect::<Vec<_>>(),
            vec![0.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(
            (1..=4).map(|k| order_value(&b2, k)).collect::<Vec<_>>(),
            vec![0.0, 1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn gray_pattern_constant_within_period() {
        let spec = small_spec();
        let period = spec.period_px as usize;
        for bit in 1..=spec.n_gray_bits {
            let g = gray_pattern(&spec, bit);
            for k in 0..spec.n_periods {
                let (x0, y0) = spec.phase_axis.join(k * period, 1);
                let first = g.get(x0, y0);
                for v in k * period..(k + 1) * period {
                    let (x, y) = spec.phase_axis.join(v, 1);
                    assert_eq!(g.get(x, y), first);
                }
            }
        }
    }

    #[test]
    fn bayer_is_permutation() {
        let m = bayer8();
        let mut seen = [false; 64];
        for row in &m {
            for &v in row {
                assert!(!seen[v as usize]);
                seen[v as usize] = true;
            }
        }
        // spot-check the classic corner values
        assert_eq!(m[0][0], 0);
        assert_eq!(m[0][1], 32);
        assert_eq!(m[1][0], 48);
        assert_eq!(m[1][1], 16);
    }

    #[test]
    fn dither_endpoints() {
        let zeros = RasterF::zeros(16, 16);
        assert!(dither(&zeros).values().iter().all(|&v| v == 0.0));
        let ones = RasterF::filled(16, 16, 1.0);
        assert!(dither(&ones).values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn dither_half_gray_density() {
        // constant 0.5 turns on exactly the 32 cells with threshold below it
        let half = RasterF::filled(8, 8, 0.5);
        let d = dither(&half);
        let ones: f64 = d.values().iter().sum();
        assert_eq!(ones, 32.0);
    }

    #[test]
    fn dithered_blur_approximates_sinusoid() {
        // binary-defocusing viability. A lone dither dot blurred by sigma
        // peaks at 1/(2*pi*sigma^2), and any full-range sinusoid has
        // isolated-dot levels near its extremes, so the max-norm floor at
        // sigma = 1.5 is ~0.071; assert rms there and the 0.05 max bound at
        // sigma = 2.5 where it is actually attainable.
        let spec = PatternSpec::new(32.0, 4, 2, 64, 128).unwrap();
        let ideal = sinusoid_pattern(&spec, 1);
        let binary = dither(&ideal);

        let residual = |sigma: f64| {
            let blurred = crate::simulate::gaussian_blur(&binary, sigma);
            let reference = crate::simulate::gaussian_blur(&ideal, sigma);
            let margin = (4.0 * sigma).ceil() as usize + 2;
            let mut max_err: f64 = 0.0;
            let mut ss = 0.0;
            let mut n = 0usize;
            for y in margin..blurred.height() - margin {
                for x in margin..blurred.width() - margin {
                    let e = (blurred.get(x, y) - reference.get(x, y)).abs();
                    max_err = max_err.max(e);
                    ss += e * e;
                    n += 1;
                }
            }
            (max_err, (ss / n as f64).sqrt())
        };

        let (_, rms_15) = residual(1.5);
        assert!(rms_15 < 0.03, "rms at sigma 1.5: {rms_15}");
        let (max_25, _) = residual(2.5);
        assert!(max_25 < 0.05, "max at sigma 2.5: {max_25}");
    }

    #[test]
    fn alignment_self_test_passes() {
        verify_alignment(&small_spec()).unwrap();
        verify_alignment(&PatternSpec::new(70.0, 16, 4, 64, 1120).unwrap()).unwrap();
        verify_alignment(&PatternSpec::on_axis(64.0, 8, 3, PhaseAxis::X, 512, 16).unwrap())
            .unwrap();
    }

    #[test]
    fn spec_invariants_rejected() {
        assert!(PatternSpec::new(4.0, 4, 2, 8, 64).is_err()); // period too small
        assert!(PatternSpec::new(16.0, 8, 2, 8, 200).is_err()); // 8 periods > 2^2
        assert!(PatternSpec::new(16.0, 4, 2, 8, 32).is_err()); // doesn't fit extent
    }
}
