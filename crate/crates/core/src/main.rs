use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bz_logic::batch::{self, BatchStats};
use bz_logic::config::ExperimentConfig;
use bz_logic::controller::{Light, MemoryMode};
use bz_logic::evolution::ControllerKind;
use bz_logic::gates::Gate;
use bz_logic::{Error, Result};

#[derive(Parser)]
#[command(name = "bzlogic", version, about = "Evolve CA light controllers that make a simulated BZ medium compute logic gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML experiment config; defaults are used for missing keys
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// and | nand | xor
    #[arg(long)]
    gate: Option<Gate>,
    /// none | explicit | widrow_hoff
    #[arg(long)]
    memory: Option<MemoryMode>,
    /// coevolutionary | random
    #[arg(long)]
    controller: Option<ControllerKind>,
    #[arg(long)]
    runs: Option<usize>,
    /// Presentation budget per run
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.gate {
            cfg.task.gate = v;
        }
        if let Some(v) = self.memory {
            cfg.task.memory = v;
        }
        if let Some(v) = self.controller {
            cfg.search.controller_kind = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.budget {
            cfg.search.budget_presentations = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// One search, written to <output_dir>/run-<index>
    Run {
        #[command(flatten)]
        over: Overrides,
        /// Run index; selects the derived seed
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// All runs of the config plus stats.json and summary.tsv
    Batch {
        #[command(flatten)]
        over: Overrides,
        /// Worker threads, 0 for one per core
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Re-run a finished run's genome on all four inputs and export frames
    Replay {
        run_dir: PathBuf,
        /// Defaults to <run_dir>/replay
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file; with no file, print the defaults
    ValidateConfig { config: Option<PathBuf> },
    /// Export the medium for one input at one capture
    Render {
        #[command(flatten)]
        over: Overrides,
        /// Input bits, e.g. 11
        #[arg(long, default_value = "11")]
        input: String,
        /// Capture index, 0 = end of initiation
        #[arg(long, default_value_t = 0)]
        cycles: usize,
        /// genome.bin or a run directory; uniform light otherwise
        #[arg(long)]
        genome: Option<PathBuf>,
        /// low | threshold | high
        #[arg(long, default_value = "threshold")]
        light: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_bits(s: &str) -> Result<(bool, bool)> {
    match s {
        "00" => Ok((false, false)),
        "01" => Ok((false, true)),
        "10" => Ok((true, false)),
        "11" => Ok((true, true)),
        _ => Err(Error::Config(format!("input must be two bits, got {s:?}"))),
    }
}

fn parse_light(s: &str) -> Result<Light> {
    match s {
        "low" => Ok(Light::Low),
        "threshold" => Ok(Light::Threshold),
        "high" => Ok(Light::High),
        _ => Err(Error::Config(format!("unknown light level {s:?}"))),
    }
}

fn print_stats(stats: &BatchStats) {
    println!("{}", BatchStats::TSV_HEADER);
    println!("{}", stats.tsv_row());
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { over, index } => {
            let cfg = over.resolve()?;
            let mut task = cfg.gate_task()?;
            let (record, genome) = batch::run_one(&cfg, &mut task, index)?;
            let dir = batch::run_dir(&cfg.output_dir, index);
            batch::write_run(&dir, &record, &genome)?;
            match record.solution_presentations {
                Some(p) => println!("{} solved in {p} presentations ({})", record.gate, dir.display()),
                None => println!(
                    "{} not solved within {} presentations, best fitness {} ({})",
                    record.gate,
                    record.presentations_used,
                    record.final_fitness,
                    dir.display()
                ),
            }
        }
        Command::Batch { over, workers } => {
            let cfg = over.resolve()?;
            print_stats(&batch::run_batch(&cfg, workers)?);
        }
        Command::Replay { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.join("replay"));
            let report = batch::replay(&run_dir, &out)?;
            let bits: Vec<String> = report.outputs.iter().map(|b| u8::from(*b).to_string()).collect();
            println!("outputs {} fitness {} ({})", bits.join(","), report.fitness, out.display());
        }
        Command::ValidateConfig { config } => match config {
            Some(p) => {
                let cfg = ExperimentConfig::load(&p)?;
                cfg.validate()?;
                println!("{}: ok", p.display());
            }
            None => print!("{}", ExperimentConfig::default().to_toml()),
        },
        Command::Render {
            over,
            input,
            cycles,
            genome,
            light,
            out,
        } => {
            let cfg = over.resolve()?;
            let genome = genome.map(|p| batch::genome_for(&p)).transpose()?;
            batch::render_frames(&cfg, parse_bits(&input)?, cycles, genome, parse_light(&light)?, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
