//! Heterogeneous cellular-automaton controller.
//!
//! Every cell owns a lookup table indexed by the activity bits of its radius-1
//! neighbourhood. The grid is planar: corner cells see 3 neighbours, edge cells
//! 5 and interior cells 8. Table keys pack bits LSB-first in a fixed order:
//! the cell itself, then its existing neighbours in row-major scan order, then
//! (explicit memory only) the cell's own raw bit from the previous cycle.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GridState;

/// One of the three projected light intensities (a trit).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Light {
    Low = 0,
    Threshold = 1,
    High = 2,
}

impl Light {
    pub const ALL: [Light; 3] = [Light::Low, Light::Threshold, Light::High];

    pub fn from_trit(t: u8) -> Option<Light> {
        match t {
            0 => Some(Light::Low),
            1 => Some(Light::Threshold),
            2 => Some(Light::High),
            _ => None,
        }
    }

    pub fn trit(self) -> u8 {
        self as u8
    }
}

/// Row-major light action per CA cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightGrid {
    actions: Vec<Light>,
}

impl LightGrid {
    pub fn new(actions: Vec<Light>) -> Self {
        Self { actions }
    }

    pub fn uniform(cells: usize, light: Light) -> Self {
        Self {
            actions: vec![light; cells],
        }
    }

    pub fn actions(&self) -> &[Light] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn to_trit_string(&self) -> String {
        self.actions.iter().map(|l| char::from(b'0' + l.trit())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    None,
    Explicit,
    WidrowHoff,
}

impl MemoryMode {
    fn code(self) -> u8 {
        match self {
            MemoryMode::None => 0,
            MemoryMode::Explicit => 1,
            MemoryMode::WidrowHoff => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(MemoryMode::None),
            1 => Some(MemoryMode::Explicit),
            2 => Some(MemoryMode::WidrowHoff),
            _ => None,
        }
    }
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemoryMode::None => "none",
            MemoryMode::Explicit => "explicit",
            MemoryMode::WidrowHoff => "widrow_hoff",
        })
    }
}

impl std::str::FromStr for MemoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(MemoryMode::None),
            "explicit" => Ok(MemoryMode::Explicit),
            "widrow_hoff" | "wh" => Ok(MemoryMode::WidrowHoff),
            other => Err(Error::Config(format!("unknown memory mode {other:?}"))),
        }
    }
}

/// Planar radius-1 neighbourhoods of a rows×cols grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    rows: usize,
    cols: usize,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut neighbors = Vec::with_capacity(rows * cols);
        for r in 0..rows as isize {
            for c in 0..cols as isize {
                let mut list = Vec::with_capacity(8);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if (dr, dc) == (0, 0)
                            || nr < 0
                            || nc < 0
                            || nr >= rows as isize
                            || nc >= cols as isize
                        {
                            continue;
                        }
                        list.push(nr as usize * cols + nc as usize);
                    }
                }
                neighbors.push(list);
            }
        }
        Self {
            rows,
            cols,
            neighbors,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn neighbors(&self, cell: usize) -> &[usize] {
        &self.neighbors[cell]
    }

    pub fn input_count(&self, cell: usize, mode: MemoryMode) -> usize {
        1 + self.neighbors[cell].len() + usize::from(mode == MemoryMode::Explicit)
    }
}

/// Lookup table of one cell plus "used since mutation" flags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellTable {
    pub cell_index: usize,
    pub n_inputs: usize,
    pub entries: Vec<Light>,
    pub visited: Vec<bool>,
}

impl CellTable {
    fn new(cell_index: usize, n_inputs: usize, entries: Vec<Light>) -> Self {
        let n = entries.len();
        debug_assert_eq!(n, 1 << n_inputs);
        Self {
            cell_index,
            n_inputs,
            entries,
            visited: vec![false; n],
        }
    }
}

/// Per-cell lookup tables for the whole grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaGenome {
    topology: Topology,
    memory_mode: MemoryMode,
    tables: Vec<CellTable>,
}

const GENOME_MAGIC: &[u8; 4] = b"BZCA";
const GENOME_VERSION: u8 = 1;

impl CaGenome {
    pub fn from_fn(
        rows: usize,
        cols: usize,
        memory_mode: MemoryMode,
        mut gene: impl FnMut(usize, usize) -> Light,
    ) -> Self {
        let topology = Topology::new(rows, cols);
        let tables = (0..topology.cells())
            .map(|cell| {
                let n_inputs = topology.input_count(cell, memory_mode);
                let entries = (0..1usize << n_inputs).map(|k| gene(cell, k)).collect();
                CellTable::new(cell, n_inputs, entries)
            })
            .collect();
        Self {
            topology,
            memory_mode,
            tables,
        }
    }

    /// Every entry drawn uniformly from the three light levels.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, mode: MemoryMode, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, mode, |_, _| Light::ALL[rng.gen_range(0..3)])
    }

    pub fn constant(rows: usize, cols: usize, mode: MemoryMode, light: Light) -> Self {
        Self::from_fn(rows, cols, mode, |_, _| light)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn memory_mode(&self) -> MemoryMode {
        self.memory_mode
    }

    pub fn tables(&self) -> &[CellTable] {
        &self.tables
    }

    pub fn table(&self, cell: usize) -> &CellTable {
        &self.tables[cell]
    }

    pub fn gene_count(&self) -> usize {
        self.tables.iter().map(|t| t.entries.len()).sum()
    }

    pub fn get(&self, cell: usize, entry: usize) -> Light {
        self.tables[cell].entries[entry]
    }

    pub fn set(&mut self, cell: usize, entry: usize, light: Light) {
        self.tables[cell].entries[entry] = light;
    }

    pub fn is_visited(&self, cell: usize, entry: usize) -> bool {
        self.tables[cell].visited[entry]
    }

    pub fn mark_visited(&mut self, cell: usize, entry: usize) {
        self.tables[cell].visited[entry] = true;
    }

    pub fn clear_visited(&mut self) {
        for t in &mut self.tables {
            t.visited.fill(false);
        }
    }

    pub fn visited_count(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.visited.iter().filter(|v| **v).count())
            .sum()
    }

    /// Maps a pooled gene index (cell tables concatenated in cell order) to
    /// `(cell, entry)`.
    pub fn locate(&self, mut gene: usize) -> (usize, usize) {
        for (cell, t) in self.tables.iter().enumerate() {
            if gene < t.entries.len() {
                return (cell, gene);
            }
            gene -= t.entries.len();
        }
        panic!("gene index out of range");
    }

    /// True when both genomes have identical entries (visited flags ignored).
    pub fn same_entries(&self, other: &CaGenome) -> bool {
        self.memory_mode == other.memory_mode
            && self.topology == other.topology
            && self
                .tables
                .iter()
                .zip(&other.tables)
                .all(|(a, b)| a.entries == b.entries)
    }

    /// Flat binary layout:
    ///
    /// ```text
    /// "BZCA"  version:u8  memory_mode:u8  rows:u8  cols:u8
    /// table_size:u16 LE × cells
    /// entries: one byte per trit (0 low, 1 threshold, 2 high), cell-major
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 2 * self.tables.len() + self.gene_count());
        out.extend_from_slice(GENOME_MAGIC);
        out.push(GENOME_VERSION);
        out.push(self.memory_mode.code());
        out.push(self.topology.rows as u8);
        out.push(self.topology.cols as u8);
        for t in &self.tables {
            out.extend_from_slice(&(t.entries.len() as u16).to_le_bytes());
        }
        for t in &self.tables {
            out.extend(t.entries.iter().map(|l| l.trit()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |offset: usize, reason: String| Error::GenomeFormat { offset, reason };
        if bytes.len() < 8 {
            return Err(bad(bytes.len(), "truncated header".into()));
        }
        if &bytes[..4] != GENOME_MAGIC {
            return Err(bad(0, "bad magic".into()));
        }
        if bytes[4] != GENOME_VERSION {
            return Err(bad(4, format!("unsupported version {}", bytes[4])));
        }
        let mode = MemoryMode::from_code(bytes[5])
            .ok_or_else(|| bad(5, format!("unknown memory mode {}", bytes[5])))?;
        let (rows, cols) = (bytes[6] as usize, bytes[7] as usize);
        if rows < 2 || cols < 2 {
            return Err(bad(6, format!("grid {rows}x{cols} too small")));
        }
        let topology = Topology::new(rows, cols);
        let cells = topology.cells();
        let mut pos = 8;
        for cell in 0..cells {
            if pos + 2 > bytes.len() {
                return Err(bad(pos, "truncated table sizes".into()));
            }
            let size = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as usize;
            let expected = 1usize << topology.input_count(cell, mode);
            if size != expected {
                return Err(bad(
                    pos,
                    format!("cell {cell} table size {size}, expected {expected}"),
                ));
            }
            pos += 2;
        }
        let mut tables = Vec::with_capacity(cells);
        for cell in 0..cells {
            let n_inputs = topology.input_count(cell, mode);
            let size = 1usize << n_inputs;
            if pos + size > bytes.len() {
                return Err(bad(bytes.len(), format!("truncated entries of cell {cell}")));
            }
            let mut entries = Vec::with_capacity(size);
            for (k, b) in bytes[pos..pos + size].iter().enumerate() {
                let light =
                    Light::from_trit(*b).ok_or_else(|| bad(pos + k, format!("invalid trit {b}")))?;
                entries.push(light);
            }
            tables.push(CellTable::new(cell, n_inputs, entries));
            pos += size;
        }
        if pos != bytes.len() {
            return Err(bad(pos, format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(Self {
            topology,
            memory_mode: mode,
            tables,
        })
    }

    /// Human-readable per-cell digest.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "grid {}x{}  memory {}  genes {}",
            self.topology.rows,
            self.topology.cols,
            self.memory_mode,
            self.gene_count()
        );
        let _ = writeln!(s, "cell  row col inputs   low thresh  high  visited");
        for t in &self.tables {
            let count = |l: Light| t.entries.iter().filter(|e| **e == l).count();
            let _ = writeln!(
                s,
                "{:4}  {:3} {:3} {:6} {:5} {:6} {:5} {:8}",
                t.cell_index,
                t.cell_index / self.topology.cols,
                t.cell_index % self.topology.cols,
                t.n_inputs,
                count(Light::Low),
                count(Light::Threshold),
                count(Light::High),
                t.visited.iter().filter(|v| **v).count()
            );
        }
        s
    }
}

/// Recurrent state carried between control cycles of one presentation.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryState {
    pub mode: MemoryMode,
    /// Raw bits of the previous cycle (explicit mode).
    pub prev_bits: Vec<bool>,
    /// Weighted-average activity per cell (Widrow-Hoff mode).
    pub m: Vec<f64>,
    pub beta: f64,
}

impl MemoryState {
    pub const INITIAL_AVERAGE: f64 = 0.5;

    pub fn new(mode: MemoryMode, cells: usize, beta: f64) -> Self {
        let (prev_bits, m) = match mode {
            MemoryMode::None => (Vec::new(), Vec::new()),
            MemoryMode::Explicit => (vec![false; cells], Vec::new()),
            MemoryMode::WidrowHoff => (Vec::new(), vec![Self::INITIAL_AVERAGE; cells]),
        };
        Self {
            mode,
            prev_bits,
            m,
            beta,
        }
    }

    /// Bit cell `j` contributes to lookup keys: smoothed in Widrow-Hoff mode,
    /// raw otherwise.
    #[inline]
    fn effective_bit(&self, state: &GridState, j: usize) -> bool {
        match self.mode {
            MemoryMode::WidrowHoff => smooth(self.m[j]),
            _ => state.bits[j],
        }
    }
}

/// Delta-rule update `m + β(σ − m)`.
#[inline]
pub fn wh_update(m: f64, sigma: bool, beta: f64) -> f64 {
    let target = if sigma { 1.0 } else { 0.0 };
    m + beta * (target - m)
}

/// Thresholds a weighted average: strictly above one half.
#[inline]
pub fn smooth(m: f64) -> bool {
    m > 0.5
}

/// Table index of `cell` for the given grid state and memory.
pub fn neighborhood_key(topology: &Topology, cell: usize, state: &GridState, mem: &MemoryState) -> usize {
    let mut key = usize::from(mem.effective_bit(state, cell));
    let neighbors = topology.neighbors(cell);
    for (i, &j) in neighbors.iter().enumerate() {
        key |= usize::from(mem.effective_bit(state, j)) << (i + 1);
    }
    if mem.mode == MemoryMode::Explicit {
        key |= usize::from(mem.prev_bits[cell]) << (neighbors.len() + 1);
    }
    key
}

fn check_compatible(genome: &CaGenome, state: &GridState, mem: &MemoryState) -> Result<()> {
    if genome.memory_mode != mem.mode {
        return Err(Error::ModeMismatch {
            genome: genome.memory_mode.to_string(),
            memory: mem.mode.to_string(),
        });
    }
    let cells = genome.topology.cells();
    let mem_len = match mem.mode {
        MemoryMode::None => cells,
        MemoryMode::Explicit => mem.prev_bits.len(),
        MemoryMode::WidrowHoff => mem.m.len(),
    };
    if state.len() != cells || mem_len != cells {
        return Err(Error::DimensionMismatch {
            expected: format!("{cells} cells"),
            actual: format!("state {} / memory {}", state.len(), mem_len),
        });
    }
    Ok(())
}

/// Keys every cell would use this cycle, all read from the same input.
pub fn cycle_keys(genome: &CaGenome, state: &GridState, mem: &MemoryState) -> Result<Vec<usize>> {
    check_compatible(genome, state, mem)?;
    Ok((0..genome.topology.cells())
        .map(|cell| neighborhood_key(&genome.topology, cell, state, mem))
        .collect())
}

/// One synchronous CA update: looks up every cell's light level, marks the
/// used entries visited and returns the advanced memory.
pub fn act(genome: &mut CaGenome, state: &GridState, mem: &MemoryState) -> Result<(LightGrid, MemoryState)> {
    let keys = cycle_keys(genome, state, mem)?;
    let actions = keys
        .iter()
        .zip(genome.tables.iter_mut())
        .map(|(&key, table)| {
            table.visited[key] = true;
            table.entries[key]
        })
        .collect();

    let mut next = mem.clone();
    match mem.mode {
        MemoryMode::None => {}
        MemoryMode::Explicit => next.prev_bits.clone_from(&state.bits),
        MemoryMode::WidrowHoff => {
            for (m, sigma) in next.m.iter_mut().zip(&state.bits) {
                *m = wh_update(*m, *sigma, mem.beta);
            }
        }
    }
    Ok((LightGrid::new(actions), next))
}
