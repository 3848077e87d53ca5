//! Three-step phase-shifting analysis.
//!
//! From three captured sinusoid frames this recovers the background A, the
//! modulation B, a validity mask, and the wrapped phase. Rotating the input
//! sequence yields three staggered wrapped phases 2*pi/3 apart; each is the
//! same underlying phase rendered with its branch cuts in a different place,
//! which is what lets the tripartite unwrapper avoid cuts entirely.

use std::f64::consts::{PI, TAU};

use crate::raster::{Mask, RasterF};
use crate::Result;

/// Wrap an angle into (-pi, pi].
#[inline]
pub fn wrap(x: f64) -> f64 {
    let w = x - TAU * ((x - PI) / TAU).ceil();
    // guard the half-open boundary against rounding
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Per-pixel wrapped phase of a three-step sequence:
/// `atan2(sqrt(3) * (i1 - i3), 2*i2 - i1 - i3)`, result in (-pi, pi].
///
/// A pixel where numerator and denominator both vanish (all three
/// intensities equal) becomes NaN; shadows are data, not faults.
pub fn wrapped_phase(i1: &RasterF, i2: &RasterF, i3: &RasterF) -> Result<RasterF> {
    i1.check_dims(&[i2, i3], "wrapped_phase inputs")?;
    let mut out = RasterF::zeros(i1.width(), i1.height());
    let (a, b, c) = (i1.values(), i2.values(), i3.values());
    for (idx, o) in out.values_mut().iter_mut().enumerate() {
        *o = wrapped_phase_px(a[idx], b[idx], c[idx]);
    }
    Ok(out)
}

#[inline]
pub fn wrapped_phase_px(i1: f64, i2: f64, i3: f64) -> f64 {
    let num = 3.0f64.sqrt() * (i1 - i3);
    let den = 2.0 * i2 - i1 - i3;
    if num == 0.0 && den == 0.0 {
        return f64::NAN;
    }
    let phi = num.atan2(den);
    // map the -pi branch end onto +pi so the range is exactly half-open
    if phi == -PI {
        PI
    } else {
        phi
    }
}

/// The three staggered wrapped phases plus background, modulation, validity.
#[derive(Debug, Clone)]
pub struct WrappedTriple {
    /// Wrapped phase of the rotated sequence [i2, i3, i1].
    pub phi1: RasterF,
    /// Wrapped phase of [i1, i2, i3].
    pub phi2: RasterF,
    /// Wrapped phase of [i3, i1, i2].
    pub phi3: RasterF,
    /// Background intensity (i1 + i2 + i3) / 3.
    pub background: RasterF,
    /// Modulation amplitude.
    pub modulation: RasterF,
    /// True where modulation reaches the threshold.
    pub valid: Mask,
}

/// Compute the staggered triple. `phi1 - phi2` is 2*pi/3 and `phi3 - phi2`
/// is -2*pi/3 (mod 2*pi) at every valid pixel. Pixels whose modulation falls
/// below `b_threshold` are masked out and carry NaN in all three phases.
pub fn wrapped_triple(
    i1: &RasterF,
    i2: &RasterF,
    i3: &RasterF,
    b_threshold: f64,
) -> Result<WrappedTriple> {
    i1.check_dims(&[i2, i3], "wrapped_triple inputs")?;
    let (w, h) = (i1.width(), i1.height());
    let mut phi1 = RasterF::zeros(w, h);
    let mut phi2 = RasterF::zeros(w, h);
    let mut phi3 = RasterF::zeros(w, h);
    let mut background = RasterF::zeros(w, h);
    let mut modulation = RasterF::zeros(w, h);
    let mut valid = Mask::filled(w, h, false);

    let (a, b, c) = (i1.values(), i2.values(), i3.values());
    for idx in 0..a.len() {
        let (v1, v2, v3) = (a[idx], b[idx], c[idx]);
        let any_nan = v1.is_nan() || v2.is_nan() || v3.is_nan();
        let bg = (v1 + v2 + v3) / 3.0;
        let m = ((3.0 * (v1 - v3) * (v1 - v3) + (2.0 * v2 - v1 - v3) * (2.0 * v2 - v1 - v3))
            .sqrt())
            / 3.0;
        background.values_mut()[idx] = bg;
        modulation.values_mut()[idx] = m;
        let ok = !any_nan && m >= b_threshold;
        if ok {
            phi1.values_mut()[idx] = wrapped_phase_px(v2, v3, v1);
            phi2.values_mut()[idx] = wrapped_phase_px(v1, v2, v3);
            phi3.values_mut()[idx] = wrapped_phase_px(v3, v1, v2);
            let bad = phi2.values()[idx].is_nan();
            if bad {
                phi1.values_mut()[idx] = f64::NAN;
                phi3.values_mut()[idx] = f64::NAN;
            }
            let x = idx % w;
            let y = idx / w;
            valid.set(x, y, !bad);
        } else {
            phi1.values_mut()[idx] = f64::NAN;
            phi2.values_mut()[idx] = f64::NAN;
            phi3.values_mut()[idx] = f64::NAN;
        }
    }

    Ok(WrappedTriple {
        phi1,
        phi2,
        phi3,
        background,
        modulation,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    /// Analytic oracle: synthesize the three phase-shifted intensities
    /// for background a, modulation b, and total phase psi of the first frame.
    fn synth(a: f64, b: f64, psi: f64) -> (f64, f64, f64) {
        (
            a + b * psi.cos(),
            a + b * (psi + TAU / 3.0).cos(),
            a + b * (psi + 2.0 * TAU / 3.0).cos(),
        )
    }

    #[test]
    fn phase_of_symmetric_triples() {
        // numerator 0, denominator > 0 -> 0
        assert_eq!(wrapped_phase_px(0.25, 1.0, 0.25), 0.0);
        // analytic: psi = 0 with a = b = 0.5 gives (1, 0.25, 0.25) -> +2pi/3
        assert!((wrapped_phase_px(1.0, 0.25, 0.25) - TAU / 3.0).abs() < 1e-12);
        // symmetric case -> -2pi/3
        assert!((wrapped_phase_px(0.25, 0.25, 1.0) + TAU / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pixel_is_nan() {
        assert!(wrapped_phase_px(0.4, 0.4, 0.4).is_nan());
    }

    #[test]
    fn recovers_phase_plus_convention_offset() {
        // the three-step arctangent returns psi + 2pi/3 where psi is the
        // phase of the first frame
        let mut rng = SplitMix64::new(5);
        for _ in 0..10_000 {
            let a = rng.range(0.1, 0.9);
            let b = rng.range(1e-3, a.min(1.0 - a));
            let psi = rng.range(-10.0, 10.0);
            let (i1, i2, i3) = synth(a, b, psi);
            let phi = wrapped_phase_px(i1, i2, i3);
            let err = wrap(phi - (psi + TAU / 3.0)).abs();
            assert!(err < 1e-10, "a={a} b={b} psi={psi} err={err}");
        }
    }

    #[test]
    fn triple_offsets_and_invariants() {
        let mut rng = SplitMix64::new(9);
        let (w, h) = (32, 16);
        let psi_field = RasterF::from_fn(w, h, |_, _| rng.range(-8.0, 8.0));
        let mut i = [
            RasterF::zeros(w, h),
            RasterF::zeros(w, h),
            RasterF::zeros(w, h),
        ];
        for y in 0..h {
            for x in 0..w {
                let (v1, v2, v3) = synth(0.5, 0.4, psi_field.get(x, y));
                i[0].set(x, y, v1);
                i[1].set(x, y, v2);
                i[2].set(x, y, v3);
            }
        }
        let t = wrapped_triple(&i[0], &i[1], &i[2], 0.02).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert!(t.valid.get(x, y));
                // the triple is one phase rendered at three branch-cut positions
                assert!(wrap(t.phi1.get(x, y) - t.phi2.get(x, y) - TAU / 3.0).abs() < 1e-9);
                assert!(wrap(t.phi3.get(x, y) - t.phi2.get(x, y) + TAU / 3.0).abs() < 1e-9);
                // pure sinusoid with B = 0.4
                assert!((t.modulation.get(x, y) - 0.4).abs() < 1e-10);
                assert!((t.background.get(x, y) - 0.5).abs() < 1e-10);
                for p in [&t.phi1, &t.phi2, &t.phi3] {
                    let v = p.get(x, y);
                    assert!(v > -PI && v <= PI);
                }
            }
        }
    }

    #[test]
    fn ab_invariant_under_rotation() {
        let mut rng = SplitMix64::new(13);
        let (w, h) = (8, 8);
        let mut i = [
            RasterF::zeros(w, h),
            RasterF::zeros(w, h),
            RasterF::zeros(w, h),
        ];
        for y in 0..h {
            for x in 0..w {
                let (v1, v2, v3) = synth(
                    rng.range(0.3, 0.7),
                    rng.range(0.05, 0.25),
                    rng.range(-4.0, 4.0),
                );
                i[0].set(x, y, v1);
                i[1].set(x, y, v2);
                i[2].set(x, y, v3);
            }
        }
        let t0 = wrapped_triple(&i[0], &i[1], &i[2], 0.01).unwrap();
        let t1 = wrapped_triple(&i[1], &i[2], &i[0], 0.01).unwrap();
        for idx in 0..w * h {
            assert!((t0.background.values()[idx] - t1.background.values()[idx]).abs() < 1e-12);
            assert!((t0.modulation.values()[idx] - t1.modulation.values()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_inputs_fully_masked() {
        let flat = RasterF::filled(8, 4, 0.5);
        let t = wrapped_triple(&flat, &flat, &flat, 0.02).unwrap();
        assert_eq!(t.valid.count_true(), 0);
        assert!(t.phi2.values().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn nan_exactly_where_invalid() {
        let mut i1 = RasterF::filled(8, 4, 0.9);
        let i2 = RasterF::filled(8, 4, 0.5);
        let i3 = RasterF::filled(8, 4, 0.1);
        i1.set(3, 2, 0.5);
        i1.set(4, 1, f64::NAN);
        let t = wrapped_triple(&i1, &i2, &i3, 0.02).unwrap();
        for y in 0..4 {
            for x in 0..8 {
                assert_eq!(t.valid.get(x, y), !t.phi2.get(x, y).is_nan());
            }
        }
        assert!(!t.valid.get(4, 1));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!(wrap(0.0).abs() < 1e-15);
        let mut rng = SplitMix64::new(1);
        for _ in 0..10_000 {
            let w = wrap(rng.range(-50.0, 50.0));
            assert!(w > -PI && w <= PI);
        }
    }
}
