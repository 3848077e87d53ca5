//! Synthetic fixtures shared by unit, integration, and acceptance tests.
//!
//! Everything here is built analytically (no rendering), so these fixtures
//! serve as independent oracles for the unwrapping chain: the truth ramp is
//! written down directly, the staircase is constructed, and displacements
//! are injected exactly where a test asks for them.

use std::f64::consts::{PI, TAU};

use crate::fringe::{wrapped_triple, WrappedTriple};
use crate::graycode::OrderMap;
use crate::patterns::ALIGNMENT_PHI0;
use crate::raster::{PhaseAxis, RasterF};

/// A synthetic field of fringes over a flat scene: analytic intensities,
/// the true absolute phase ramp, and an order staircase whose boundaries can
/// be displaced per boundary.
#[derive(Debug, Clone)]
pub struct LineFixture {
    pub width: usize,
    pub height: usize,
    pub period: usize,
    pub axis: PhaseAxis,
    pub triple: WrappedTriple,
    pub orders: OrderMap,
    /// True absolute phase: 2*pi*v/P + pi.
    pub truth: RasterF,
    /// Absolute phase of the reference plane (same ramp for a flat scene).
    pub phi_ref_absolute: RasterF,
}

impl LineFixture {
    /// Perfectly aligned staircase.
    pub fn aligned(period: usize, n_periods: usize, height: usize) -> Self {
        Self::displaced(period, n_periods, height, &[0.0])
    }

    /// Staircase whose boundary j (between orders j and j+1) is displaced by
    /// `displacements[(j-1) % len]` pixels along the phase axis.
    pub fn displaced(
        period: usize,
        n_periods: usize,
        height: usize,
        displacements: &[f64],
    ) -> Self {
        assert!(!displacements.is_empty());
        let width = period * n_periods;
        let axis = PhaseAxis::X;
        let p = period as f64;

        let mut frames = Vec::with_capacity(3);
        for n in 1..=3 {
            let shift = TAU * (n as f64 - 1.0) / 3.0;
            frames.push(RasterF::from_fn(width, height, |x, _| {
                0.5 + 0.5 * (TAU * x as f64 / p + shift + ALIGNMENT_PHI0).cos()
            }));
        }
        let triple = wrapped_triple(&frames[0], &frames[1], &frames[2], 0.02).unwrap();

        let boundaries: Vec<f64> = (1..n_periods)
            .map(|j| j as f64 * p + displacements[(j - 1) % displacements.len()])
            .collect();
        let n_bits = (usize::BITS - (n_periods.max(2) - 1).leading_zeros()) as usize;
        let orders = OrderMap::from_fn(width, height, n_bits, |x, _| {
            let v = x as f64;
            let below = boundaries.iter().filter(|&&b| b <= v).count() as u32;
            Some(below + 1)
        });

        let truth = RasterF::from_fn(width, height, |x, _| TAU * x as f64 / p + PI);
        let phi_ref_absolute = truth.clone();

        Self {
            width,
            height,
            period,
            axis,
            triple,
            orders,
            truth,
            phi_ref_absolute,
        }
    }

    /// Reference wrapped phase for the current (possibly displaced) orders.
    pub fn reference(&self) -> crate::unwrap::ReferencePhase {
        crate::unwrap::reference_wrapped(&self.phi_ref_absolute, &self.orders).unwrap()
    }

    /// Shadow one pixel: invalid mask, NaN phases, no decoded order.
    pub fn set_shadow(&mut self, along: usize, across: usize) {
        let (x, y) = self.axis.join(along, across);
        self.triple.valid.set(x, y, false);
        self.triple.phi1.set(x, y, f64::NAN);
        self.triple.phi2.set(x, y, f64::NAN);
        self.triple.phi3.set(x, y, f64::NAN);
        self.orders.set(x, y, None);
    }
}

/// Count pixels where two absolute-phase rasters disagree at order level
/// (|a - b| > pi). Pixel pairs with a NaN on either side are skipped.
pub fn count_order_errors(out: &RasterF, truth: &RasterF) -> usize {
    assert!(out.same_dims(truth));
    out.values()
        .iter()
        .zip(truth.values())
        .filter(|(a, b)| !a.is_nan() && !b.is_nan() && (**a - **b).abs() > PI)
        .count()
}

/// Analytic wrapped-phase pair for hierarchical two-frequency tests:
/// (high-frequency wrapped phase, unit-frequency wrapped phase, truth).
pub fn baseline_pair(width: usize, f_h: u32) -> (RasterF, RasterF, RasterF) {
    let w = width as f64;
    let phi_high = RasterF::from_fn(width, 1, |x, _| {
        crate::fringe::wrap(TAU * f_h as f64 * x as f64 / w + PI)
    });
    let phi_unit = RasterF::from_fn(width, 1, |x, _| {
        crate::fringe::wrap(TAU * x as f64 / w + PI)
    });
    let truth = RasterF::from_fn(width, 1, |x, _| TAU * f_h as f64 * x as f64 / w + PI);
    (phi_high, phi_unit, truth)
}

/// Analytic wrapped-phase pair for heterodyne tests: the (f_h - 1)-frequency
/// pattern carries a -pi relative offset so the beat matches the unit-phase
/// convention. Returns (phi_fh, phi_fm, truth).
pub fn heterodyne_pair(width: usize, f_h: u32) -> (RasterF, RasterF, RasterF) {
    let w = width as f64;
    let phi_fh = RasterF::from_fn(width, 1, |x, _| {
        crate::fringe::wrap(TAU * f_h as f64 * x as f64 / w + PI)
    });
    let phi_fm = RasterF::from_fn(width, 1, |x, _| {
        crate::fringe::wrap(TAU * (f_h - 1) as f64 * x as f64 / w)
    });
    let truth = RasterF::from_fn(width, 1, |x, _| TAU * f_h as f64 * x as f64 / w + PI);
    (phi_fh, phi_fm, truth)
}
