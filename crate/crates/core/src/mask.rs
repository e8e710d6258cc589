//! Initiation masks: the labelled channel pattern that feeds waves from the
//! seed into the CA grid and encodes the two input bits.
//!
//! Mask assets are 8-bit binary graymaps. Gray levels map to regions:
//!
//! | gray | region            |
//! |-----:|-------------------|
//! |    0 | seed              |
//! |   40 | trunk, left tree  |
//! |   60 | trunk, right tree |
//! |   80 | left tree, branch a  |
//! |  100 | left tree, branch b  |
//! |  120 | right tree, branch a |
//! |  140 | right tree, branch b |
//! |  255 | barrier           |
//!
//! Any other gray level is rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pnm::{self, GrayImage};
use crate::reaction::{Field2, LightLevels};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Seed,
    TrunkLeft,
    TrunkRight,
    ChannelLeftA,
    ChannelLeftB,
    ChannelRightA,
    ChannelRightB,
    Barrier,
}

impl Region {
    pub const ALL: [Region; 8] = [
        Region::Seed,
        Region::TrunkLeft,
        Region::TrunkRight,
        Region::ChannelLeftA,
        Region::ChannelLeftB,
        Region::ChannelRightA,
        Region::ChannelRightB,
        Region::Barrier,
    ];

    pub fn gray(self) -> u8 {
        match self {
            Region::Seed => 0,
            Region::TrunkLeft => 40,
            Region::TrunkRight => 60,
            Region::ChannelLeftA => 80,
            Region::ChannelLeftB => 100,
            Region::ChannelRightA => 120,
            Region::ChannelRightB => 140,
            Region::Barrier => 255,
        }
    }

    pub fn from_gray(g: u8) -> Option<Region> {
        Region::ALL.into_iter().find(|r| r.gray() == g)
    }

    pub fn is_branch(self) -> bool {
        matches!(
            self,
            Region::ChannelLeftA | Region::ChannelLeftB | Region::ChannelRightA | Region::ChannelRightB
        )
    }
}

/// Per-point region labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitiationMask {
    width: usize,
    height: usize,
    labels: Vec<Region>,
}

/// The shipped two-tree pattern for a 200×220 medium.
const DEFAULT_MASK_PGM: &[u8] = include_bytes!("../assets/trees.pgm");

impl InitiationMask {
    pub fn new(width: usize, height: usize, labels: Vec<Region>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Mask(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        let mask = Self {
            width,
            height,
            labels,
        };
        mask.check_topology()?;
        Ok(mask)
    }

    /// Mask bundled with the crate.
    pub fn builtin() -> Self {
        Self::from_pgm_bytes(DEFAULT_MASK_PGM).expect("bundled mask is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes)
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let img = pnm::read_pgm(bytes)?;
        let labels = img
            .data
            .iter()
            .enumerate()
            .map(|(i, g)| {
                Region::from_gray(*g).ok_or_else(|| {
                    Error::Mask(format!(
                        "gray level {g} at ({}, {}) is not a region label",
                        i % img.width,
                        i / img.width
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(img.width, img.height, labels)
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|r| r.gray()).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn region(&self, x: usize, y: usize) -> Region {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[Region] {
        &self.labels
    }

    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|r| **r == region).count()
    }

    /// Φ field for the initiation phase.
    ///
    /// Seed is dark (Φ = 0), trunks are open, barriers are inhibited. For each
    /// tree a 1 opens both branches, a 0 opens branch a only.
    pub fn encode_input(&self, bits: (bool, bool), levels: &LightLevels) -> Field2 {
        let (left, right) = bits;
        let data = self
            .labels
            .iter()
            .map(|r| match r {
                Region::Seed => 0.0,
                Region::TrunkLeft | Region::TrunkRight => levels.low,
                Region::ChannelLeftA | Region::ChannelRightA => levels.low,
                Region::ChannelLeftB => {
                    if left {
                        levels.low
                    } else {
                        levels.high
                    }
                }
                Region::ChannelRightB => {
                    if right {
                        levels.low
                    } else {
                        levels.high
                    }
                }
                Region::Barrier => levels.high,
            })
            .collect();
        Field2::from_vec(self.width, self.height, data).expect("mask dimensions")
    }

    /// Seed must touch both trunks; each trunk must touch both of its branches.
    fn check_topology(&self) -> Result<()> {
        for r in Region::ALL {
            if r != Region::Barrier && self.count(r) == 0 {
                return Err(Error::Mask(format!("region {r:?} is empty")));
            }
        }
        let pairs = [
            (Region::Seed, Region::TrunkLeft),
            (Region::Seed, Region::TrunkRight),
            (Region::TrunkLeft, Region::ChannelLeftA),
            (Region::TrunkLeft, Region::ChannelLeftB),
            (Region::TrunkRight, Region::ChannelRightA),
            (Region::TrunkRight, Region::ChannelRightB),
        ];
        for (a, b) in pairs {
            if !self.touches(a, b) {
                return Err(Error::Mask(format!("{a:?} does not connect to {b:?}")));
            }
        }
        Ok(())
    }

    fn touches(&self, a: Region, b: Region) -> bool {
        let (w, h) = (self.width, self.height);
        (0..h).any(|y| {
            (0..w).any(|x| {
                self.labels[y * w + x] == a
                    && [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        nx >= 0
                            && ny >= 0
                            && (nx as usize) < w
                            && (ny as usize) < h
                            && self.labels[ny as usize * w + nx as usize] == b
                    })
            })
        })
    }
}

/// Procedural description of the default two-tree pattern.
///
/// Coordinates are simulation points with y growing downwards. Everything is
/// mirrored about the vertical centre line: the left tree is described and the
/// right tree is its reflection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeLayout {
    pub width: usize,
    pub height: usize,
    /// Seed rectangle `(x0, y0, w, h)`.
    pub seed: (usize, usize, usize, usize),
    /// Trunk segment of the left tree and its width.
    pub trunk: ((f64, f64), (f64, f64)),
    pub trunk_width: f64,
    /// Prong segments of branch a (inner) and b (outer), left tree.
    pub branch_a: Vec<((f64, f64), (f64, f64))>,
    pub branch_b: Vec<((f64, f64), (f64, f64))>,
    pub prong_width: f64,
}

impl Default for TreeLayout {
    fn default() -> Self {
        let fork = (86.0, 194.0);
        // six prongs fanned every 20 degrees from 80 degrees, length 50
        let prong = |i: usize| {
            let a = (80.0 + 20.0 * i as f64).to_radians();
            (fork, (fork.0 + 50.0 * a.cos(), fork.1 - 50.0 * a.sin()))
        };
        Self {
            width: 200,
            height: 220,
            seed: (94, 206, 12, 10),
            trunk: ((100.0, 206.0), fork),
            trunk_width: 10.0,
            branch_a: (0..3).map(prong).collect(),
            branch_b: (3..6).map(prong).collect(),
            prong_width: 4.0,
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

impl TreeLayout {
    pub fn rasterize(&self) -> Result<InitiationMask> {
        let (w, h) = (self.width, self.height);
        let mirror = |(x, y): (f64, f64)| (w as f64 - x, y);
        let mut labels = vec![Region::Barrier; w * h];
        for y in 0..h {
            for x in 0..w {
                // pixel centre
                let p = (x as f64 + 0.5, y as f64 + 0.5);
                let near = |segs: &[((f64, f64), (f64, f64))], width: f64, mirrored: bool| {
                    segs.iter().any(|(a, b)| {
                        let (a, b) = if mirrored { (mirror(*a), mirror(*b)) } else { (*a, *b) };
                        segment_distance(p, a, b) <= width / 2.0
                    })
                };
                let trunk = [self.trunk];
                let label = if near(&trunk, self.trunk_width, false) {
                    Region::TrunkLeft
                } else if near(&trunk, self.trunk_width, true) {
                    Region::TrunkRight
                } else if near(&self.branch_a, self.prong_width, false) {
                    Region::ChannelLeftA
                } else if near(&self.branch_b, self.prong_width, false) {
                    Region::ChannelLeftB
                } else if near(&self.branch_a, self.prong_width, true) {
                    Region::ChannelRightA
                } else if near(&self.branch_b, self.prong_width, true) {
                    Region::ChannelRightB
                } else {
                    Region::Barrier
                };
                labels[y * w + x] = label;
            }
        }
        let (sx, sy, sw, sh) = self.seed;
        for y in sy..(sy + sh).min(h) {
            for x in sx..(sx + sw).min(w) {
                labels[y * w + x] = Region::Seed;
            }
        }
        InitiationMask::new(w, h, labels)
    }
}
