//! Global-fitness hillclimber over CA genomes.
//!
//! Each generation mutates the current genome, evaluates the mutant on all
//! four inputs, reverts every mutation whose table entry was never looked up
//! during that evaluation, and then decides acceptance. Because the medium is
//! deterministic, a reverted mutant scores exactly what the evaluated mutant
//! scored: the reverted entries were never read.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{CaGenome, Light, MemoryMode};
use crate::error::{Error, Result};
use crate::gates::{GateEvaluation, GateTask};

/// Presentations consumed by one fitness evaluation.
pub const PRESENTATIONS_PER_EVALUATION: u64 = 4;

/// Best possible gate fitness.
pub const MAX_FITNESS: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub cell: usize,
    pub entry: usize,
    pub old: Light,
    pub new: Light,
}

/// The genes changed in one generation, one record per distinct gene.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MutationLog {
    records: Vec<Mutation>,
    index: HashMap<(usize, usize), usize>,
}

impl MutationLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a change. A second change to the same gene keeps the first
    /// `old` and takes the latest `new`.
    pub fn record(&mut self, cell: usize, entry: usize, old: Light, new: Light) {
        match self.index.get(&(cell, entry)) {
            Some(&i) => self.records[i].new = new,
            None => {
                self.index.insert((cell, entry), self.records.len());
                self.records.push(Mutation { cell, entry, old, new });
            }
        }
    }

    pub fn records(&self) -> &[Mutation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptRule {
    GreaterEqual,
    StrictlyGreater,
}

impl AcceptRule {
    pub fn accepts(self, candidate: u8, incumbent: u8) -> bool {
        match self {
            AcceptRule::GreaterEqual => candidate >= incumbent,
            AcceptRule::StrictlyGreater => candidate > incumbent,
        }
    }
}

impl std::str::FromStr for AcceptRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greater_equal" | "ge" => Ok(AcceptRule::GreaterEqual),
            "strictly_greater" | "gt" => Ok(AcceptRule::StrictlyGreater),
            other => Err(Error::Config(format!("unknown accept rule {other:?}"))),
        }
    }
}

/// `Random` keeps every visited mutation regardless of fitness. It is the
/// baseline against which evolution is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Coevolutionary,
    Random,
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::Coevolutionary => "coevolutionary",
            ControllerKind::Random => "random",
        })
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coevolutionary" | "coevo" => Ok(ControllerKind::Coevolutionary),
            "random" => Ok(ControllerKind::Random),
            other => Err(Error::Config(format!("unknown controller kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub mutations_per_generation: usize,
    /// Input presentations available, including the initial evaluation.
    pub budget_presentations: u64,
    pub accept_rule: AcceptRule,
    pub controller_kind: ControllerKind,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            mutations_per_generation: 4000,
            budget_presentations: 2000,
            accept_rule: AcceptRule::GreaterEqual,
            controller_kind: ControllerKind::Coevolutionary,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mutations_per_generation == 0 {
            return Err(Error::InvalidParameter("mutations_per_generation must be >= 1".into()));
        }
        if self.budget_presentations < PRESENTATIONS_PER_EVALUATION
            || !self.budget_presentations.is_multiple_of(PRESENTATIONS_PER_EVALUATION)
        {
            return Err(Error::InvalidParameter(format!(
                "budget_presentations {} must be a positive multiple of {PRESENTATIONS_PER_EVALUATION}",
                self.budget_presentations
            )));
        }
        Ok(())
    }
}

/// Scores a genome on the four inputs. Implementations must mark the table
/// entries they read as visited.
pub trait Evaluator {
    fn evaluate(&mut self, genome: &mut CaGenome) -> Result<u8>;

    /// (rows, cols, memory mode) of genomes this evaluator accepts.
    fn genome_shape(&self) -> (usize, usize, MemoryMode);
}

impl Evaluator for GateTask {
    fn evaluate(&mut self, genome: &mut CaGenome) -> Result<u8> {
        GateTask::evaluate(self, genome).map(|e: GateEvaluation| e.fitness)
    }

    fn genome_shape(&self) -> (usize, usize, MemoryMode) {
        let g = &self.simulation().geometry;
        (g.rows, g.cols, self.experiment().memory)
    }
}

/// Mutated copy of `genome`: `n` genes drawn uniformly with replacement from
/// the pooled tables, each set to one of its two other values. Visited flags
/// of the copy are cleared.
pub fn mutate<R: Rng + ?Sized>(genome: &CaGenome, n: usize, rng: &mut R) -> (CaGenome, MutationLog) {
    let mut child = genome.clone();
    child.clear_visited();
    let mut log = MutationLog::new();
    let total = child.gene_count();
    for _ in 0..n {
        let (cell, entry) = child.locate(rng.gen_range(0..total));
        let old = child.get(cell, entry);
        let new = Light::from_trit((old.trit() + rng.gen_range(1..3)) % 3).expect("trit in range");
        child.set(cell, entry, new);
        log.record(cell, entry, old, new);
    }
    (child, log)
}

/// Restores every logged gene that was not visited. Returns how many were
/// restored.
pub fn revert_unvisited(genome: &mut CaGenome, log: &MutationLog) -> usize {
    let mut reverted = 0;
    for m in log.records() {
        if !genome.is_visited(m.cell, m.entry) {
            genome.set(m.cell, m.entry, m.old);
            reverted += 1;
        }
    }
    reverted
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    /// Presentations used once this generation's evaluation is done.
    pub presentations: u64,
    pub mutant_fitness: u8,
    pub accepted: bool,
    /// Fitness of the current genome after the acceptance decision.
    pub fitness: u8,
    pub mutated: usize,
    pub kept: usize,
}

pub struct StepOutcome {
    pub genome: CaGenome,
    pub fitness: u8,
    pub record: Generation,
}

/// One generation. `presentations` is the count before this step.
pub fn hillclimb_step<E: Evaluator + ?Sized, R: Rng + ?Sized>(
    best: &CaGenome,
    best_fitness: u8,
    config: &SearchConfig,
    evaluator: &mut E,
    rng: &mut R,
    presentations: u64,
) -> Result<StepOutcome> {
    let (mut mutant, log) = mutate(best, config.mutations_per_generation, rng);
    let mutant_fitness = evaluator.evaluate(&mut mutant)?;
    let reverted = revert_unvisited(&mut mutant, &log);
    let accepted = match config.controller_kind {
        ControllerKind::Coevolutionary => config.accept_rule.accepts(mutant_fitness, best_fitness),
        ControllerKind::Random => true,
    };
    let (genome, fitness) = if accepted {
        (mutant, mutant_fitness)
    } else {
        (best.clone(), best_fitness)
    };
    Ok(StepOutcome {
        genome,
        fitness,
        record: Generation {
            presentations: presentations + PRESENTATIONS_PER_EVALUATION,
            mutant_fitness,
            accepted,
            fitness,
            mutated: log.len(),
            kept: log.len() - reverted,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunResult {
    pub success: bool,
    /// Presentations used when fitness 4 was first reached.
    pub solution_presentations: Option<u64>,
    pub presentations_used: u64,
    pub initial_fitness: u8,
    pub final_fitness: u8,
    pub generations: Vec<Generation>,
    pub final_genome: CaGenome,
}

impl RunResult {
    /// Presentations to solution, or the budget for a failed run.
    pub fn presentations_or(&self, budget: u64) -> u64 {
        self.solution_presentations.unwrap_or(budget)
    }
}

/// Random initial genome, evaluated, then hillclimbing until fitness 4 or the
/// budget is spent. The initial evaluation counts toward the budget.
pub fn run_search<E: Evaluator + ?Sized, R: Rng + ?Sized>(
    evaluator: &mut E,
    config: &SearchConfig,
    rng: &mut R,
) -> Result<RunResult> {
    config.validate()?;
    let (rows, cols, mode) = evaluator.genome_shape();
    let mut genome = CaGenome::random(rows, cols, mode, rng);
    let mut fitness = evaluator.evaluate(&mut genome)?;
    let initial_fitness = fitness;
    let mut used = PRESENTATIONS_PER_EVALUATION;
    let mut generations = Vec::new();
    while fitness < MAX_FITNESS && used + PRESENTATIONS_PER_EVALUATION <= config.budget_presentations {
        let step = hillclimb_step(&genome, fitness, config, evaluator, rng, used)?;
        used = step.record.presentations;
        genome = step.genome;
        fitness = step.fitness;
        generations.push(step.record);
    }
    let success = fitness == MAX_FITNESS;
    Ok(RunResult {
        success,
        solution_presentations: success.then_some(used),
        presentations_used: used,
        initial_fitness,
        final_fitness: fitness,
        generations,
        final_genome: genome,
    })
}
