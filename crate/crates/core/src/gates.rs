//! Two-input logic-gate tasks: input presentation episodes and the 0–4 gate
//! fitness.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use crate::mask::{InitiationMask, Region, TreeLayout};

use crate::controller::{act, CaGenome, LightGrid, MemoryMode, MemoryState};
use crate::error::{Error, Result};
use crate::imaging::{observe, render, BinaryFrame, ColorFrame, GridGeometry, GridState, RenderBounds};
use crate::reaction::{advance, rasterize_light, KineticParams, LightLevels, MediumState, Scratch, Terms};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    And,
    Nand,
    Xor,
}

/// Input pairs in presentation order.
pub const INPUTS: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];

impl Gate {
    pub fn output(self, (a, b): (bool, bool)) -> bool {
        match self {
            Gate::And => a && b,
            Gate::Nand => !(a && b),
            Gate::Xor => a != b,
        }
    }

    /// Outputs for 00, 01, 10, 11.
    pub fn truth_table(self) -> [bool; 4] {
        INPUTS.map(|i| self.output(i))
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gate::And => "AND",
            Gate::Nand => "NAND",
            Gate::Xor => "XOR",
        })
    }
}

impl std::str::FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(Gate::And),
            "nand" => Ok(Gate::Nand),
            "xor" => Ok(Gate::Xor),
            other => Err(Error::Config(format!("unknown gate {other:?}"))),
        }
    }
}

/// The simulated chemistry, camera and projector.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub kinetics: KineticParams,
    pub levels: LightLevels,
    pub geometry: GridGeometry,
    pub render: RenderBounds,
    pub mask: Arc<InitiationMask>,
    /// Steps with the initiation pattern projected, before control cycle 1.
    pub init_iterations: u64,
    /// Steps per control cycle.
    pub epoch_iterations: u64,
    /// Cell activity fraction at which a cell's bit is set.
    pub activity_threshold: f64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            kinetics: KineticParams::default(),
            levels: LightLevels::default(),
            geometry: GridGeometry::default(),
            render: RenderBounds::default(),
            mask: Arc::new(InitiationMask::builtin()),
            init_iterations: DEFAULT_INIT_ITERATIONS,
            epoch_iterations: 600,
            activity_threshold: 0.10,
        }
    }
}

/// Initiation length for the bundled mask: waves reach the prong tips and the
/// trunk wake has faded from the difference image.
pub const DEFAULT_INIT_ITERATIONS: u64 = 9600;

impl Simulation {
    pub fn validate(&self) -> Result<()> {
        self.kinetics.validate()?;
        self.levels.validate()?;
        self.render.validate()?;
        self.geometry.validate()?;
        self.geometry.check_fits(self.mask.width(), self.mask.height())?;
        if self.epoch_iterations == 0 {
            return Err(Error::InvalidParameter("epoch_iterations must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.activity_threshold) {
            return Err(Error::InvalidParameter(format!(
                "activity threshold {} outside [0, 1]",
                self.activity_threshold
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }
}

/// A gate task and its episode parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateExperiment {
    pub gate: Gate,
    /// Active cells at or above which the output reads 1.
    pub active_cell_target: usize,
    pub cycles_per_presentation: usize,
    pub memory: MemoryMode,
    pub beta: f64,
    /// Keep the Widrow-Hoff averages across the four presentations of an
    /// evaluation instead of resetting them.
    pub persist_memory: bool,
}

impl Default for GateExperiment {
    fn default() -> Self {
        Self {
            gate: Gate::And,
            active_cell_target: 20,
            cycles_per_presentation: 25,
            memory: MemoryMode::None,
            beta: 0.2,
            persist_memory: false,
        }
    }
}

impl GateExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.active_cell_target == 0 {
            return Err(Error::InvalidParameter("active_cell_target must be >= 1".into()));
        }
        if self.cycles_per_presentation == 0 {
            return Err(Error::InvalidParameter("cycles_per_presentation must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter(format!("beta {} outside (0, 1)", self.beta)));
        }
        Ok(())
    }

    pub fn truth_table(&self) -> [bool; 4] {
        self.gate.truth_table()
    }
}

/// Output bit from the number of active cells.
pub fn decide_output(state: &GridState, target: usize) -> bool {
    state.active_count() >= target
}

/// One control cycle as seen by the controller.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub state: GridState,
    pub light: LightGrid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationTrace {
    pub input: (bool, bool),
    pub cycles: Vec<CycleRecord>,
    /// Grid state after the last control epoch; the output is read from it.
    pub final_state: GridState,
    pub output: bool,
}

impl PresentationTrace {
    /// One line per cycle: index, active count, grid bits, light trits.
    pub fn to_log(&self) -> String {
        let mut s = format!(
            "# input {}{}  output {}\n",
            u8::from(self.input.0),
            u8::from(self.input.1),
            u8::from(self.output)
        );
        for (i, c) in self.cycles.iter().enumerate() {
            s.push_str(&format!(
                "{:3} {:3} {} {}\n",
                i + 1,
                c.state.active_count(),
                c.state.to_bit_string(),
                c.light.to_trit_string()
            ));
        }
        s.push_str(&format!(
            "final {:3} {}\n",
            self.final_state.active_count(),
            self.final_state.to_bit_string()
        ));
        s
    }
}

/// What an observer sees at each capture.
pub struct Snapshot<'a> {
    /// 0 is the capture at the end of initiation.
    pub capture: usize,
    pub medium: &'a MediumState,
    pub color: &'a ColorFrame,
    pub binary: &'a BinaryFrame,
    pub grid: &'a GridState,
}

pub type Observer<'a> = &'a mut dyn FnMut(&Snapshot<'_>) -> Result<()>;

/// Medium at the end of initiation, with the two captures that bound the
/// first difference image. Independent of the controller, so it can be
/// computed once per input and reused.
#[derive(Clone, Debug)]
pub struct Initiated {
    pub input: (bool, bool),
    pub state: MediumState,
    pub prev: ColorFrame,
    pub cur: ColorFrame,
}

/// Fresh medium, input encoding, `init_iterations` steps, then the apron
/// outside the CA grid is switched to high light.
pub fn initiate(input: (bool, bool), sim: &Simulation) -> Result<Initiated> {
    let (w, h) = sim.dims();
    let mut state = MediumState::zeros(w, h);
    state.set_phi(sim.mask.encode_input(input, &sim.levels))?;
    let mut scratch = Scratch::for_state(&state);

    // The first difference image spans the last epoch-length of initiation.
    let gap = sim.epoch_iterations.min(sim.init_iterations);
    advance(&mut state, &mut scratch, &sim.kinetics, Terms::Full, sim.init_iterations - gap)?;
    let prev = render(&state, &sim.render);
    advance(&mut state, &mut scratch, &sim.kinetics, Terms::Full, gap)?;
    let cur = render(&state, &sim.render);

    let high = sim.levels.high;
    let geom = &sim.geometry;
    for (i, p) in state.phi_mut().iter_mut().enumerate() {
        if !geom.contains(i % w, i / w) {
            *p = high;
        }
    }
    Ok(Initiated { input, state, prev, cur })
}

/// Runs one input presentation: initiation, then `cycles_per_presentation`
/// control cycles of capture → difference → grid state → CA → epoch.
///
/// `memory` is consumed and returned so callers can persist it.
pub fn run_presentation_with(
    genome: &mut CaGenome,
    input: (bool, bool),
    sim: &Simulation,
    exp: &GateExperiment,
    memory: MemoryState,
    observer: Option<Observer<'_>>,
) -> Result<(PresentationTrace, MemoryState)> {
    let start = initiate(input, sim)?;
    run_from(genome, start, sim, exp, memory, observer)
}

/// The control phase of a presentation, starting from an initiated medium.
pub fn run_from(
    genome: &mut CaGenome,
    start: Initiated,
    sim: &Simulation,
    exp: &GateExperiment,
    mut memory: MemoryState,
    mut observer: Option<Observer<'_>>,
) -> Result<(PresentationTrace, MemoryState)> {
    let geom = &sim.geometry;
    let Initiated {
        input,
        mut state,
        mut prev,
        mut cur,
    } = start;
    let mut scratch = Scratch::for_state(&state);

    let mut cycles = Vec::with_capacity(exp.cycles_per_presentation);
    for capture in 0..exp.cycles_per_presentation {
        let (binary, grid) = observe(&prev, &cur, geom, sim.activity_threshold)?;
        if let Some(obs) = observer.as_mut() {
            obs(&Snapshot {
                capture,
                medium: &state,
                color: &cur,
                binary: &binary,
                grid: &grid,
            })?;
        }
        let (light, next) = act(genome, &grid, &memory)?;
        memory = next;
        rasterize_light(state.phi_mut_field(), &light, geom, &sim.levels)?;
        advance(&mut state, &mut scratch, &sim.kinetics, Terms::Full, sim.epoch_iterations)?;
        cycles.push(CycleRecord { state: grid, light });
        prev = std::mem::replace(&mut cur, render(&state, &sim.render));
    }

    let (binary, final_state) = observe(&prev, &cur, geom, sim.activity_threshold)?;
    if let Some(obs) = observer.as_mut() {
        obs(&Snapshot {
            capture: exp.cycles_per_presentation,
            medium: &state,
            color: &cur,
            binary: &binary,
            grid: &final_state,
        })?;
    }
    let output = decide_output(&final_state, exp.active_cell_target);
    Ok((
        PresentationTrace {
            input,
            cycles,
            final_state,
            output,
        },
        memory,
    ))
}

/// Presentation from a fresh medium and fresh memory.
pub fn run_presentation(
    genome: &mut CaGenome,
    input: (bool, bool),
    sim: &Simulation,
    exp: &GateExperiment,
) -> Result<PresentationTrace> {
    let memory = MemoryState::new(exp.memory, genome.topology().cells(), exp.beta);
    run_presentation_with(genome, input, sim, exp, memory, None).map(|(t, _)| t)
}

/// Result of presenting all four inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateEvaluation {
    pub fitness: u8,
    pub outputs: [bool; 4],
    pub traces: Vec<PresentationTrace>,
}

/// Number of truth-table rows matched.
pub fn score(gate: Gate, outputs: &[bool; 4]) -> u8 {
    gate.truth_table()
        .iter()
        .zip(outputs)
        .filter(|(want, got)| want == got)
        .count() as u8
}

/// Presents 00, 01, 10, 11 in turn and scores the outputs. Visited flags
/// accumulate on `genome` across all four presentations.
pub fn gate_fitness(genome: &mut CaGenome, sim: &Simulation, exp: &GateExperiment) -> Result<GateEvaluation> {
    GateTask::new(sim.clone(), exp.clone())?.evaluate(genome)
}

/// A validated simulation and gate task with the four initiated media cached.
#[derive(Clone, Debug)]
pub struct GateTask {
    sim: Simulation,
    exp: GateExperiment,
    starts: Vec<Initiated>,
}

impl GateTask {
    pub fn new(sim: Simulation, exp: GateExperiment) -> Result<Self> {
        sim.validate()?;
        exp.validate()?;
        let starts = INPUTS
            .into_iter()
            .map(|i| initiate(i, &sim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sim, exp, starts })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn experiment(&self) -> &GateExperiment {
        &self.exp
    }

    /// Initiated medium for input row `i` (order of [`INPUTS`]).
    pub fn start(&self, i: usize) -> &Initiated {
        &self.starts[i]
    }

    pub fn evaluate(&self, genome: &mut CaGenome) -> Result<GateEvaluation> {
        self.evaluate_observed(genome, &mut |_, _| Ok(()))
    }

    /// Like [`GateTask::evaluate`]; `observer` gets the input row index
    /// (order of [`INPUTS`]) with every snapshot.
    pub fn evaluate_observed(
        &self,
        genome: &mut CaGenome,
        observer: &mut dyn FnMut(usize, &Snapshot<'_>) -> Result<()>,
    ) -> Result<GateEvaluation> {
        let exp = &self.exp;
        if genome.memory_mode() != exp.memory {
            return Err(Error::ModeMismatch {
                genome: genome.memory_mode().to_string(),
                memory: exp.memory.to_string(),
            });
        }
        let cells = genome.topology().cells();
        if cells != self.sim.geometry.cells() {
            return Err(Error::dims(
                (self.sim.geometry.cols, self.sim.geometry.rows),
                (genome.topology().cols(), genome.topology().rows()),
            ));
        }
        let mut memory = MemoryState::new(exp.memory, cells, exp.beta);
        let mut traces = Vec::with_capacity(4);
        let mut outputs = [false; 4];
        for i in 0..INPUTS.len() {
            if !exp.persist_memory {
                memory = MemoryState::new(exp.memory, cells, exp.beta);
            }
            let mut obs = |snap: &Snapshot<'_>| observer(i, snap);
            let (trace, next) = run_from(genome, self.starts[i].clone(), &self.sim, exp, memory, Some(&mut obs))?;
            memory = next;
            outputs[i] = trace.output;
            traces.push(trace);
        }
        Ok(GateEvaluation {
            fitness: score(exp.gate, &outputs),
            outputs,
            traces,
        })
    }
}
