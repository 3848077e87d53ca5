//! Binarize captured Gray-coded frames and decode them into per-pixel fringe
//! orders.
//!
//! Binarization thresholds against the background A recovered from the same
//! group's sinusoid triple: no extra reference frames are projected, and A
//! tracks the defocused mean level. Ties (frame exactly equal to A) decode
//! to 0.

use crate::patterns::CodewordTable;
use crate::raster::{Mask, RasterF};
use crate::Result;

/// Per-pixel bit plane. 0/1 where defined; pixels outside `valid` carry no
/// meaningful bit but keep a value for layout simplicity.
pub type BitGrid = Vec<u8>;

/// Per-pixel fringe order map. 0 marks an invalid pixel; valid entries are
/// in [1, 2^n_bits].
#[derive(Debug, Clone)]
pub struct OrderMap {
    width: usize,
    height: usize,
    k: Vec<u32>,
    n_bits: usize,
    /// Valid pixels whose decoded value fell outside the codeword table.
    pub out_of_table: usize,
}

impl OrderMap {
    pub fn new(width: usize, height: usize, n_bits: usize) -> Self {
        Self {
            width,
            height,
            k: vec![0; width * height],
            n_bits,
            out_of_table: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// Order at (x, y); None when invalid.
    #[inline]
    pub fn order(&self, x: usize, y: usize) -> Option<u32> {
        let v = self.k[y * self.width + x];
        if v == 0 {
            None
        } else {
            Some(v)
        }
    }

    #[inline]
    pub fn raw(&self, x: usize, y: usize) -> u32 {
        self.k[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, order: Option<u32>) {
        self.k[y * self.width + x] = order.unwrap_or(0);
    }

    pub fn valid_count(&self) -> usize {
        self.k.iter().filter(|&&v| v != 0).count()
    }

    /// Build directly from a function; used by synthetic test harnesses.
    pub fn from_fn(
        width: usize,
        height: usize,
        n_bits: usize,
        mut f: impl FnMut(usize, usize) -> Option<u32>,
    ) -> Self {
        let mut m = Self::new(width, height, n_bits);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }
}

/// Binarize one captured Gray frame against the background map: bit is 1 iff
/// `frame > background` (strict, ties to 0).
pub fn binarize(frame: &RasterF, background: &RasterF, valid: &Mask) -> Result<BitGrid> {
    frame.check_dims(&[background], "binarize inputs")?;
    if !valid.matches_raster(frame) {
        return Err(crate::Error::DimensionMismatch(
            "binarize mask does not match frame".into(),
        ));
    }
    let mut bits = vec![0u8; frame.len()];
    let (f, a) = (frame.values(), background.values());
    for idx in 0..f.len() {
        bits[idx] = (f[idx] > a[idx]) as u8;
    }
    Ok(bits)
}

/// Combine N bit planes (MSB first) into per-pixel decoded decimal values.
pub fn decode_values(bit_planes: &[BitGrid]) -> Result<Vec<u32>> {
    let n = bit_planes.len();
    assert!(n >= 1, "need at least one bit plane");
    let len = bit_planes[0].len();
    for plane in bit_planes {
        if plane.len() != len {
            return Err(crate::Error::DimensionMismatch(
                "bit planes differ in size".into(),
            ));
        }
    }
    let mut out = vec![0u32; len];
    for (i, plane) in bit_planes.iter().enumerate() {
        let weight = 1u32 << (n - 1 - i);
        for (o, &b) in out.iter_mut().zip(plane.iter()) {
            *o += b as u32 * weight;
        }
    }
    Ok(out)
}

/// Look decoded values up in the codeword table to produce the order map.
/// Valid pixels whose value is outside the table become invalid and are
/// counted in `out_of_table` (cannot happen for full-width tables).
pub fn decode_orders(
    values: &[u32],
    width: usize,
    height: usize,
    table: &CodewordTable,
    valid: &Mask,
) -> Result<OrderMap> {
    if values.len() != width * height || valid.width() != width || valid.height() != height {
        return Err(crate::Error::DimensionMismatch(
            "decode_orders inputs disagree".into(),
        ));
    }
    let mut map = OrderMap::new(width, height, table.n_bits());
    for y in 0..height {
        for x in 0..width {
            if !valid.get(x, y) {
                continue;
            }
            match table.order_of(values[y * width + x]) {
                Some(k) => map.set(x, y, Some(k)),
                None => map.out_of_table += 1,
            }
        }
    }
    Ok(map)
}

/// Full decode chain for one group of captured Gray frames.
pub fn decode_gray_frames(
    frames: &[&RasterF],
    background: &RasterF,
    valid: &Mask,
    table: &CodewordTable,
) -> Result<OrderMap> {
    let planes: Vec<BitGrid> = frames
        .iter()
        .map(|f| binarize(f, background, valid))
        .collect::<Result<_>>()?;
    let values = decode_values(&planes)?;
    decode_orders(
        values.as_slice(),
        background.width(),
        background.height(),
        table,
        valid,
    )
}
