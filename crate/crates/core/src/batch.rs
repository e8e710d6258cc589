//! Batches of independent searches, their statistics, and artifact export.
//!
//! Output layout of a batch:
//!
//! ```text
//! <output_dir>/config.toml        effective configuration
//! <output_dir>/run-000/result.json
//! <output_dir>/run-000/genome.bin  (see CaGenome::to_bytes)
//! <output_dir>/run-000/genome.txt
//! <output_dir>/stats.json
//! <output_dir>/summary.tsv
//! ```
//!
//! Nothing time- or host-dependent is written, so a batch is a pure function
//! of its configuration.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::controller::{CaGenome, Light, MemoryMode};
use crate::error::{Error, Result};
use crate::evolution::{run_search, ControllerKind, Evaluator, Generation, RunResult};
use crate::gates::{initiate, run_from, Gate, GateExperiment, GateTask, Snapshot, INPUTS};
use crate::pnm;

/// Contents of `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub gate: Gate,
    pub memory: MemoryMode,
    pub controller: ControllerKind,
    pub success: bool,
    pub solution_presentations: Option<u64>,
    pub presentations_used: u64,
    pub initial_fitness: u8,
    pub final_fitness: u8,
    pub genome_file: String,
    pub generations: Vec<Generation>,
    pub config: ExperimentConfig,
}

impl RunRecord {
    fn new(run_index: usize, seed: u64, cfg: &ExperimentConfig, r: &RunResult) -> Self {
        Self {
            run_index,
            seed,
            gate: cfg.task.gate,
            memory: cfg.task.memory,
            controller: cfg.search.controller_kind,
            success: r.success,
            solution_presentations: r.solution_presentations,
            presentations_used: r.presentations_used,
            initial_fitness: r.initial_fitness,
            final_fitness: r.final_fitness,
            genome_file: GENOME_FILE.into(),
            generations: r.generations.clone(),
            config: cfg.clone(),
        }
    }
}

const RESULT_FILE: &str = "result.json";
const GENOME_FILE: &str = "genome.bin";

/// One row of the results table. Failed runs enter the statistics at the
/// budget, which makes `avg` a lower bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub gate: Gate,
    pub variant: String,
    pub runs: usize,
    pub successes: usize,
    pub min: u64,
    pub max: u64,
    pub avg: f64,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: f64,
    pub avg_is_lower_bound: bool,
    pub budget: u64,
    /// Presentations to solution per run, budget for failures.
    pub presentations: Vec<u64>,
    pub failed_runs: Vec<usize>,
}

/// Label for a controller setup: the random baseline, or the memory scheme
/// of an evolved controller.
pub fn variant_label(kind: ControllerKind, memory: MemoryMode) -> String {
    match (kind, memory) {
        (ControllerKind::Random, _) => "random".into(),
        (ControllerKind::Coevolutionary, MemoryMode::None) => "coevolutionary".into(),
        (ControllerKind::Coevolutionary, MemoryMode::Explicit) => "explicit_memory".into(),
        (ControllerKind::Coevolutionary, MemoryMode::WidrowHoff) => "wh_memory".into(),
    }
}

impl BatchStats {
    pub fn from_records(cfg: &ExperimentConfig, records: &[RunRecord]) -> Self {
        let budget = cfg.search.budget_presentations;
        let presentations: Vec<u64> = records
            .iter()
            .map(|r| r.solution_presentations.unwrap_or(budget))
            .collect();
        let failed_runs: Vec<usize> = records.iter().filter(|r| !r.success).map(|r| r.run_index).collect();
        let n = presentations.len();
        let avg = presentations.iter().sum::<u64>() as f64 / n.max(1) as f64;
        let std = if n > 1 {
            let ss: f64 = presentations.iter().map(|&p| (p as f64 - avg).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            gate: cfg.task.gate,
            variant: variant_label(cfg.search.controller_kind, cfg.task.memory),
            runs: n,
            successes: n - failed_runs.len(),
            min: presentations.iter().copied().min().unwrap_or(0),
            max: presentations.iter().copied().max().unwrap_or(0),
            avg,
            std,
            avg_is_lower_bound: !failed_runs.is_empty(),
            budget,
            presentations,
            failed_runs,
        }
    }

    pub const TSV_HEADER: &'static str = "gate\tvariant\tsuccess\tmin\tmax\tavg\tstd\tavg_lower_bound";

    /// Failed runs show as `>budget` in min/max.
    pub fn tsv_row(&self) -> String {
        let show = |v: u64| {
            if self.avg_is_lower_bound && v == self.budget {
                format!(">{v}")
            } else {
                v.to_string()
            }
        };
        format!(
            "{}\t{}\t{}/{}\t{}\t{}\t{:.2}\t{:.2}\t{}",
            self.gate,
            self.variant,
            self.successes,
            self.runs,
            show(self.min),
            show(self.max),
            self.avg,
            self.std,
            self.avg_is_lower_bound
        )
    }
}

/// Runs search `index` of the batch with its derived seed.
pub fn run_one<E: Evaluator + ?Sized>(cfg: &ExperimentConfig, evaluator: &mut E, index: usize) -> Result<(RunRecord, CaGenome)> {
    let seed = cfg.run_seed(index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = run_search(evaluator, &cfg.search, &mut rng).map_err(|e| Error::Run {
        seed,
        source: Box::new(e),
    })?;
    Ok((RunRecord::new(index, seed, cfg, &r), r.final_genome))
}

pub fn run_dir(output_dir: &Path, index: usize) -> PathBuf {
    output_dir.join(format!("run-{index:03}"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes `result.json`, `genome.bin` and `genome.txt` into `dir`.
pub fn write_run(dir: &Path, record: &RunRecord, genome: &CaGenome) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join(RESULT_FILE), to_json(record).as_bytes())?;
    write_file(&dir.join(GENOME_FILE), &genome.to_bytes())?;
    write_file(&dir.join("genome.txt"), genome.summary().as_bytes())
}

/// Runs every search of the batch on a pool of `workers` threads (0 = rayon
/// default), writes all artifacts and returns the statistics.
pub fn run_batch_with<E>(cfg: &ExperimentConfig, evaluator: &E, workers: usize) -> Result<BatchStats>
where
    E: Evaluator + Clone + Send + Sync,
{
    cfg.search.validate()?;
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let out = &cfg.output_dir;
    create_dir(out)?;
    write_file(&out.join("config.toml"), cfg.to_toml().as_bytes())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| {
                let mut ev = evaluator.clone();
                let (record, genome) = run_one(cfg, &mut ev, i)?;
                write_run(&run_dir(out, i), &record, &genome)?;
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let stats = BatchStats::from_records(cfg, &records);
    write_file(&out.join("stats.json"), to_json(&stats).as_bytes())?;
    write_file(
        &out.join("summary.tsv"),
        format!("{}\n{}\n", BatchStats::TSV_HEADER, stats.tsv_row()).as_bytes(),
    )?;
    Ok(stats)
}

/// [`run_batch_with`] on the gate task described by the config.
pub fn run_batch(cfg: &ExperimentConfig, workers: usize) -> Result<BatchStats> {
    cfg.validate()?;
    run_batch_with(cfg, &cfg.gate_task()?, workers)
}

pub fn load_record(run_dir: &Path) -> Result<RunRecord> {
    let path = run_dir.join(RESULT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })
}

pub fn load_genome(path: &Path) -> Result<CaGenome> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CaGenome::from_bytes(&bytes)
}

fn input_name(input: (bool, bool)) -> String {
    format!("input-{}{}", u8::from(input.0), u8::from(input.1))
}

/// Writes the color frame, the binary frame and the binary frame with the
/// grid outlined, named by capture index.
fn write_snapshot(dir: &Path, geom: &crate::imaging::GridGeometry, snap: &Snapshot<'_>) -> Result<()> {
    let stem = format!("{:02}", snap.capture);
    let write = |name: String, f: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).map_err(|e| Error::io(&path, e))
    };
    write(format!("{stem}-color.ppm"), &|w| pnm::write_ppm(w, snap.color))?;
    write(format!("{stem}-binary.pbm"), &|w| pnm::write_pbm(w, snap.binary))?;
    let overlay = pnm::overlay_grid(snap.binary, geom);
    write(format!("{stem}-overlay.ppm"), &|w| pnm::write_ppm(w, &overlay))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub outputs: [bool; 4],
    pub fitness: u8,
}

/// Re-runs the genome of a finished run on all four inputs and exports
/// frames and per-cycle logs into `out`, one directory per input.
pub fn replay(run_dir: &Path, out: &Path) -> Result<ReplayReport> {
    let record = load_record(run_dir)?;
    let mut genome = load_genome(&run_dir.join(&record.genome_file))?;
    let task = record.config.gate_task()?;
    let geom = task.simulation().geometry;
    let dirs: Vec<PathBuf> = INPUTS.iter().map(|&i| out.join(input_name(i))).collect();
    for d in &dirs {
        create_dir(d)?;
    }
    let eval = task.evaluate_observed(&mut genome, &mut |row, snap| write_snapshot(&dirs[row], &geom, snap))?;
    for (d, trace) in dirs.iter().zip(&eval.traces) {
        write_file(&d.join("trace.log"), trace.to_log().as_bytes())?;
    }
    let report = ReplayReport {
        outputs: eval.outputs,
        fitness: eval.fitness,
    };
    write_file(&out.join("replay.json"), to_json(&report).as_bytes())?;
    Ok(report)
}

/// Exports the medium for input `bits` at capture `cycles` (0 = end of
/// initiation) under `genome`, or under uniform `light` when no genome is
/// given: color and binary frames, the grid overlay, and u and v graymaps.
pub fn render_frames(
    cfg: &ExperimentConfig,
    bits: (bool, bool),
    cycles: usize,
    genome: Option<CaGenome>,
    light: Light,
    out: &Path,
) -> Result<()> {
    let sim = cfg.simulation()?;
    let exp = GateExperiment {
        cycles_per_presentation: cycles,
        ..cfg.task.clone()
    };
    let g = &sim.geometry;
    let mut genome = match genome {
        Some(g) => g,
        None => CaGenome::constant(g.rows, g.cols, exp.memory, light),
    };
    if genome.memory_mode() != exp.memory {
        return Err(Error::ModeMismatch {
            genome: genome.memory_mode().to_string(),
            memory: exp.memory.to_string(),
        });
    }
    create_dir(out)?;
    let memory = crate::controller::MemoryState::new(exp.memory, genome.topology().cells(), exp.beta);
    let start = initiate(bits, &sim)?;
    let mut obs = |snap: &Snapshot<'_>| {
        if snap.capture != cycles {
            return Ok(());
        }
        write_snapshot(out, &sim.geometry, snap)?;
        for (name, field) in [("u", snap.medium.u()), ("v", snap.medium.v())] {
            let path = out.join(format!("{:02}-{name}.pgm", snap.capture));
            let mut buf = Vec::new();
            pnm::write_pgm(&mut buf, &pnm::field_to_gray(field, 0.0, 1.0)).expect("in-memory write");
            write_file(&path, &buf)?;
        }
        Ok(())
    };
    let (trace, _) = run_from(&mut genome, start, &sim, &exp, memory, Some(&mut obs))?;
    write_file(&out.join("trace.log"), trace.to_log().as_bytes())
}

/// Reads a genome given on the command line or next to a run record.
pub fn genome_for(path: &Path) -> Result<CaGenome> {
    if path.is_dir() {
        let record = load_record(path)?;
        load_genome(&path.join(record.genome_file))
    } else {
        load_genome(path)
    }
}

/// Whole-grid evaluation of a stored genome, for use outside a batch.
pub fn evaluate_genome(task: &GateTask, genome: &mut CaGenome) -> Result<ReplayReport> {
    let e = task.evaluate(genome)?;
    Ok(ReplayReport {
        outputs: e.outputs,
        fitness: e.fitness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct AlwaysFour;

    impl Evaluator for AlwaysFour {
        fn evaluate(&mut self, _: &mut CaGenome) -> Result<u8> {
            Ok(4)
        }

        fn genome_shape(&self) -> (usize, usize, MemoryMode) {
            (10, 10, MemoryMode::None)
        }
    }

    /// Fitness is a pure function of the genome bytes, so batches are
    /// deterministic and runs differ.
    #[derive(Clone)]
    struct Hashy;

    impl Evaluator for Hashy {
        fn evaluate(&mut self, g: &mut CaGenome) -> Result<u8> {
            let h = g.to_bytes().iter().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(*b as u64));
            Ok(if h % 7 == 0 { 4 } else { (h % 4) as u8 })
        }

        fn genome_shape(&self) -> (usize, usize, MemoryMode) {
            (3, 3, MemoryMode::None)
        }
    }

    fn cfg_in(dir: &Path, runs: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            runs,
            output_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        };
        cfg.search.budget_presentations = 40;
        cfg.search.mutations_per_generation = 5;
        cfg
    }

    #[test]
    fn single_always_four_run() {
        let tmp = tempfile::tempdir().unwrap();
        let stats = run_batch_with(&cfg_in(tmp.path(), 1), &AlwaysFour, 1).unwrap();
        assert_eq!((stats.successes, stats.runs), (1, 1));
        assert_eq!((stats.min, stats.max), (4, 4));
        assert_eq!(stats.avg, 4.0);
        assert_eq!(stats.std, 0.0);
        assert!(!stats.avg_is_lower_bound);
        let rec = load_record(&run_dir(tmp.path(), 0)).unwrap();
        assert_eq!(rec.solution_presentations, Some(4));
        assert!(load_genome(&run_dir(tmp.path(), 0).join("genome.bin")).is_ok());
    }

    #[test]
    fn failures_count_at_budget() {
        let cfg = cfg_in(Path::new("unused"), 3);
        let rec = |i, sol: Option<u64>| RunRecord {
            run_index: i,
            seed: 0,
            gate: Gate::And,
            memory: MemoryMode::None,
            controller: ControllerKind::Coevolutionary,
            success: sol.is_some(),
            solution_presentations: sol,
            presentations_used: sol.unwrap_or(40),
            initial_fitness: 3,
            final_fitness: if sol.is_some() { 4 } else { 3 },
            genome_file: GENOME_FILE.into(),
            generations: vec![],
            config: cfg.clone(),
        };
        let stats = BatchStats::from_records(&cfg, &[rec(0, Some(8)), rec(1, None), rec(2, Some(12))]);
        assert_eq!(stats.presentations, vec![8, 40, 12]);
        assert_eq!(stats.failed_runs, vec![1]);
        assert!(stats.avg_is_lower_bound);
        assert_eq!(stats.avg, 20.0);
        assert!((stats.std - (304.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(stats.tsv_row(), "AND\tcoevolutionary\t2/3\t8\t>40\t20.00\t17.44\ttrue");
    }

    fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    out.push((rel, fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn batch_is_byte_identical_across_pool_sizes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_batch_with(&cfg_in(a.path(), 5), &Hashy, 1).unwrap();
        let sb = run_batch_with(&cfg_in(b.path(), 5), &Hashy, 3).unwrap();
        assert_eq!(sa, sb);
        let (fa, fb) = (snapshot_dir(a.path()), snapshot_dir(b.path()));
        assert_eq!(fa.len(), fb.len());
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb);
            if na.ends_with(".json") || na.ends_with(".toml") {
                // output_dir is echoed into these
                let strip = |x: &[u8], d: &Path| String::from_utf8_lossy(x).replace(&*d.to_string_lossy(), "");
                assert_eq!(strip(ba, a.path()), strip(bb, b.path()), "{na}");
            } else {
                assert_eq!(ba, bb, "{na}");
            }
        }
    }

    #[test]
    fn adding_runs_keeps_earlier_runs() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_batch_with(&cfg_in(a.path(), 2), &Hashy, 1).unwrap();
        run_batch_with(&cfg_in(b.path(), 4), &Hashy, 1).unwrap();
        for i in 0..2 {
            let ga = fs::read(run_dir(a.path(), i).join("genome.bin")).unwrap();
            let gb = fs::read(run_dir(b.path(), i).join("genome.bin")).unwrap();
            assert_eq!(ga, gb);
        }
    }

    #[test]
    fn missing_run_dir_is_an_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_record(tmp.path()), Err(Error::Io { .. })));
    }
}
