//! Colour rendering, frame differencing and the per-cell activity reduction
//! that turns a medium into the CA's binary grid state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reaction::MediumState;

/// Linear v → 8-bit mapping used for the red and blue channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderBounds {
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Default for RenderBounds {
    fn default() -> Self {
        Self { v_lo: 0.0, v_hi: 0.4 }
    }
}

impl RenderBounds {
    pub fn validate(&self) -> Result<()> {
        if self.v_lo.is_finite() && self.v_hi.is_finite() && self.v_hi > self.v_lo {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "render bounds need v_hi > v_lo, got {self:?}"
            )))
        }
    }

    /// Maps `value` onto 0..=255, rounding half away from zero and clamping.
    #[inline]
    pub fn quantize(&self, value: f64) -> u8 {
        let scaled = 255.0 * (value - self.v_lo) / (self.v_hi - self.v_lo);
        if scaled.is_nan() {
            return 0;
        }
        scaled.round().clamp(0.0, 255.0) as u8
    }
}

/// RGB image, one triple per simulation point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColorFrame {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ColorFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width * height),
                actual: format!("{}", pixels.len()),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Thresholded difference image: `true` is white (excitation).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryFrame {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryFrame {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width * height),
                actual: format!("{}", bits.len()),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn white_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Number of 8-connected white components.
    pub fn count_components(&self) -> usize {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; w * h];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..w * h {
            if !self.bits[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if self.bits[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        count
    }
}

/// Placement of the rows×cols CA grid on the simulation lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub cell_w: usize,
    pub cell_h: usize,
    pub origin_x: usize,
    pub origin_y: usize,
}

impl Default for GridGeometry {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            cell_w: 20,
            cell_h: 20,
            origin_x: 0,
            origin_y: 0,
        }
    }
}

impl GridGeometry {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn width_points(&self) -> usize {
        self.cols * self.cell_w
    }

    pub fn height_points(&self) -> usize {
        self.rows * self.cell_h
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 || self.cell_w == 0 || self.cell_h == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2x2 non-empty cells, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.origin_x + self.width_points() > width || self.origin_y + self.height_points() > height
        {
            return Err(Error::InvalidParameter(format!(
                "grid region {}x{} at ({}, {}) does not fit a {width}x{height} medium",
                self.width_points(),
                self.height_points(),
                self.origin_x,
                self.origin_y
            )));
        }
        Ok(())
    }

    /// Half-open point bounds `(x0, y0, x1, y1)` of a row-major cell index.
    pub fn cell_bounds(&self, cell: usize) -> (usize, usize, usize, usize) {
        let (row, col) = (cell / self.cols, cell % self.cols);
        let x0 = self.origin_x + col * self.cell_w;
        let y0 = self.origin_y + row * self.cell_h;
        (x0, y0, x0 + self.cell_w, y0 + self.cell_h)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.origin_x
            && y >= self.origin_y
            && x < self.origin_x + self.width_points()
            && y < self.origin_y + self.height_points()
    }
}

/// One activity bit per CA cell, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub bits: Vec<bool>,
}

impl GridState {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn quiet(cells: usize) -> Self {
        Self {
            bits: vec![false; cells],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// `'1'`/`'0'` per cell.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::InvalidParameter(format!("bad grid-state char {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

/// Red = blue = quantized v, green = quantized u.
pub fn render(state: &MediumState, bounds: &RenderBounds) -> ColorFrame {
    let pixels = state
        .u()
        .as_slice()
        .iter()
        .zip(state.v().as_slice())
        .map(|(u, v)| {
            let rb = bounds.quantize(*v);
            [rb, bounds.quantize(*u), rb]
        })
        .collect();
    ColorFrame {
        width: state.width(),
        height: state.height(),
        pixels,
    }
}

/// Channel difference that must be exceeded for a pixel to count as excited.
pub const DIFF_THRESHOLD: u8 = 5;

/// White where red or blue changed by more than 5 of 256 levels.
pub fn diff_threshold(prev: &ColorFrame, cur: &ColorFrame) -> Result<BinaryFrame> {
    if (prev.width, prev.height) != (cur.width, cur.height) {
        return Err(Error::dims((prev.width, prev.height), (cur.width, cur.height)));
    }
    let bits = prev
        .pixels
        .iter()
        .zip(&cur.pixels)
        .map(|(a, b)| a[0].abs_diff(b[0]) > DIFF_THRESHOLD || a[2].abs_diff(b[2]) > DIFF_THRESHOLD)
        .collect();
    Ok(BinaryFrame {
        width: cur.width,
        height: cur.height,
        bits,
    })
}

/// Fraction of white pixels in each cell, row-major.
pub fn cell_activity(frame: &BinaryFrame, geom: &GridGeometry) -> Result<Vec<f64>> {
    geom.check_fits(frame.width, frame.height)?;
    let area = (geom.cell_w * geom.cell_h) as f64;
    Ok((0..geom.cells())
        .map(|cell| {
            let (x0, y0, x1, y1) = geom.cell_bounds(cell);
            let white: usize = (y0..y1)
                .map(|y| {
                    frame.bits[y * frame.width + x0..y * frame.width + x1]
                        .iter()
                        .filter(|b| **b)
                        .count()
                })
                .sum();
            white as f64 / area
        })
        .collect())
}

/// Bit i is set iff `fractions[i] >= threshold`.
pub fn grid_state(fractions: &[f64], threshold: f64) -> GridState {
    GridState::new(fractions.iter().map(|f| *f >= threshold).collect())
}

/// The whole capture → difference → reduce pipeline for one pair of states.
pub fn observe(
    prev: &ColorFrame,
    cur: &ColorFrame,
    geom: &GridGeometry,
    threshold: f64,
) -> Result<(BinaryFrame, GridState)> {
    let frame = diff_threshold(prev, cur)?;
    let fractions = cell_activity(&frame, geom)?;
    Ok((frame, grid_state(&fractions, threshold)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(w: usize, h: usize, rgb: [u8; 3]) -> ColorFrame {
        ColorFrame::new(w, h, vec![rgb; w * h]).unwrap()
    }

    #[test]
    fn quantize_clamps_and_rounds() {
        let b = RenderBounds::default();
        assert_eq!(b.quantize(0.0), 0);
        assert_eq!(b.quantize(-0.3), 0);
        assert_eq!(b.quantize(0.4), 255);
        assert_eq!(b.quantize(3.0), 255);
        assert_eq!(b.quantize(0.2), 128);
    }

    #[test]
    fn diff_is_strict_on_five() {
        let a = solid(2, 1, [10, 0, 10]);
        assert!(diff_threshold(&a, &a).unwrap().bits().iter().all(|b| !b));
        let red5 = solid(2, 1, [15, 0, 10]);
        assert_eq!(diff_threshold(&a, &red5).unwrap().white_count(), 0);
        let blue6 = solid(2, 1, [10, 0, 16]);
        assert_eq!(diff_threshold(&a, &blue6).unwrap().white_count(), 2);
        // Green never matters.
        let green = solid(2, 1, [10, 200, 10]);
        assert_eq!(diff_threshold(&a, &green).unwrap().white_count(), 0);
    }

    #[test]
    fn diff_rejects_mismatched_frames() {
        let a = solid(2, 2, [0; 3]);
        let b = solid(2, 3, [0; 3]);
        assert!(matches!(diff_threshold(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn activity_fractions() {
        let g = GridGeometry::default();
        let mut bits = vec![false; 200 * 200];
        let black = BinaryFrame::new(200, 200, bits.clone()).unwrap();
        assert!(cell_activity(&black, &g).unwrap().iter().all(|f| *f == 0.0));

        // Cell 13 (row 1, col 3) fully white.
        let (x0, y0, x1, y1) = g.cell_bounds(13);
        for y in y0..y1 {
            for x in x0..x1 {
                bits[y * 200 + x] = true;
            }
        }
        let frame = BinaryFrame::new(200, 200, bits).unwrap();
        let acts = cell_activity(&frame, &g).unwrap();
        assert_eq!(acts[13], 1.0);
        assert_eq!(acts.iter().filter(|f| **f > 0.0).count(), 1);

        // 40 scattered pixels in cell 57.
        let mut bits = vec![false; 200 * 200];
        let (x0, y0, _, _) = g.cell_bounds(57);
        for k in 0..40 {
            let (x, y) = (x0 + (k * 7) % 20, y0 + k / 2);
            bits[y * 200 + x] = true;
        }
        assert_eq!(bits.iter().filter(|b| **b).count(), 40);
        let acts = cell_activity(&BinaryFrame::new(200, 200, bits).unwrap(), &g).unwrap();
        assert_eq!(acts[57], 0.1);
    }

    #[test]
    fn grid_state_threshold_is_inclusive() {
        assert!(grid_state(&[0.10], 0.10).bits[0]);
        assert!(!grid_state(&[0.0999], 0.10).bits[0]);
        assert_eq!(grid_state(&[1.0; 100], 0.10).active_count(), 100);
    }

    #[test]
    fn components_eight_connected() {
        #[rustfmt::skip]
        let bits = [
            1, 0, 0, 1,
            0, 1, 0, 1,
            0, 0, 0, 0,
            1, 1, 0, 1,
        ];
        let f = BinaryFrame::new(4, 4, bits.iter().map(|b| *b == 1).collect()).unwrap();
        assert_eq!(f.count_components(), 4);
    }

    #[test]
    fn bit_string_round_trip() {
        let s = GridState::new(vec![true, false, false, true]);
        assert_eq!(s.to_bit_string(), "1001");
        assert_eq!(GridState::from_bit_string("1001").unwrap(), s);
        assert!(GridState::from_bit_string("10x1").is_err());
    }
}
