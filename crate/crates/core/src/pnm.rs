//! Binary Netpbm I/O: P4 bitmaps, P5 graymaps and P6 pixmaps, 8-bit only.

use std::io::Write;

use crate::error::{Error, Result};
use crate::imaging::{BinaryFrame, ColorFrame, GridGeometry};
use crate::reaction::Field2;

/// 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

pub fn write_pgm<W: Write>(out: &mut W, img: &GrayImage) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    out.write_all(&img.data)
}

pub fn write_ppm<W: Write>(out: &mut W, frame: &ColorFrame) -> std::io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", frame.width(), frame.height())?;
    let flat: Vec<u8> = frame.pixels().iter().flatten().copied().collect();
    out.write_all(&flat)
}

/// P4 with PBM polarity: a set bit is black, so excitation (white) is written as 0.
pub fn write_pbm<W: Write>(out: &mut W, frame: &BinaryFrame) -> std::io::Result<()> {
    write!(out, "P4\n{} {}\n", frame.width(), frame.height())?;
    let stride = frame.width().div_ceil(8);
    let mut row = vec![0u8; stride];
    for y in 0..frame.height() {
        row.fill(0);
        for x in 0..frame.width() {
            if !frame.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.write_all(&row)?;
    }
    Ok(())
}

/// Linear map of a field onto 0..=255 with clamping.
pub fn field_to_gray(field: &Field2, lo: f64, hi: f64) -> GrayImage {
    let data = field
        .as_slice()
        .iter()
        .map(|v| {
            let s = 255.0 * (v - lo) / (hi - lo);
            if s.is_nan() {
                0
            } else {
                s.round().clamp(0.0, 255.0) as u8
            }
        })
        .collect();
    GrayImage {
        width: field.width(),
        height: field.height(),
        data,
    }
}

/// White/black copy of a binary frame with the CA grid outlined in red.
/// For viewing only.
pub fn overlay_grid(frame: &BinaryFrame, geom: &GridGeometry) -> ColorFrame {
    let (w, h) = (frame.width(), frame.height());
    let mut pixels: Vec<[u8; 3]> = frame
        .bits()
        .iter()
        .map(|b| if *b { [255; 3] } else { [0; 3] })
        .collect();
    for cell in 0..geom.cells() {
        let (x0, y0, x1, y1) = geom.cell_bounds(cell);
        for x in x0..x1.min(w) {
            for y in [y0, y1 - 1] {
                if y < h {
                    pixels[y * w + x] = [255, 0, 0];
                }
            }
        }
        for y in y0..y1.min(h) {
            for x in [x0, x1 - 1] {
                if x < w {
                    pixels[y * w + x] = [255, 0, 0];
                }
            }
        }
    }
    ColorFrame::new(w, h, pixels).expect("same dimensions")
}

struct Header<'a> {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: Option<usize>,
    body: &'a [u8],
}

fn parse_header(bytes: &[u8], with_maxval: bool) -> Result<Header<'_>> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::ImageFormat("missing Netpbm magic".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let wanted = if with_maxval { 3 } else { 2 };
    let mut values = Vec::with_capacity(wanted);
    while values.len() < wanted {
        // whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::ImageFormat(format!("bad header field at byte {start}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        values.push(
            text.parse::<usize>()
                .map_err(|e| Error::ImageFormat(format!("header value {text:?}: {e}")))?,
        );
    }
    // exactly one whitespace byte before the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::ImageFormat("header not terminated by whitespace".into()));
    }
    pos += 1;
    Ok(Header {
        magic,
        width: values[0],
        height: values[1],
        maxval: values.get(2).copied(),
        body: &bytes[pos..],
    })
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes, true)?;
    if &h.magic != b"P5" {
        return Err(Error::ImageFormat("expected a binary graymap (P5)".into()));
    }
    if h.maxval != Some(255) {
        return Err(Error::ImageFormat(format!(
            "only maxval 255 is supported, got {:?}",
            h.maxval
        )));
    }
    let n = h.width * h.height;
    if h.body.len() < n {
        return Err(Error::ImageFormat(format!(
            "raster truncated: {} of {n} bytes",
            h.body.len()
        )));
    }
    Ok(GrayImage {
        width: h.width,
        height: h.height,
        data: h.body[..n].to_vec(),
    })
}

pub fn read_ppm(bytes: &[u8]) -> Result<ColorFrame> {
    let h = parse_header(bytes, true)?;
    if &h.magic != b"P6" || h.maxval != Some(255) {
        return Err(Error::ImageFormat("expected an 8-bit binary pixmap (P6)".into()));
    }
    let n = h.width * h.height;
    if h.body.len() < 3 * n {
        return Err(Error::ImageFormat("raster truncated".into()));
    }
    let pixels = h.body[..3 * n]
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    ColorFrame::new(h.width, h.height, pixels)
}

pub fn read_pbm(bytes: &[u8]) -> Result<BinaryFrame> {
    let h = parse_header(bytes, false)?;
    if &h.magic != b"P4" {
        return Err(Error::ImageFormat("expected a binary bitmap (P4)".into()));
    }
    let stride = h.width.div_ceil(8);
    if h.body.len() < stride * h.height {
        return Err(Error::ImageFormat("raster truncated".into()));
    }
    let mut bits = Vec::with_capacity(h.width * h.height);
    for y in 0..h.height {
        let row = &h.body[y * stride..(y + 1) * stride];
        for x in 0..h.width {
            let black = row[x / 8] & (0x80 >> (x % 8)) != 0;
            bits.push(!black);
        }
    }
    BinaryFrame::new(h.width, h.height, bits)
}
