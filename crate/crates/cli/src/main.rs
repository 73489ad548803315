use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dualdrive_core::clients::PromptSet;
use dualdrive_core::decision::Timing;
use dualdrive_core::harness::{
    accumulate_experience, build_encoder, builtin_suite, load_suite, read_csv, run_ablation,
    run_benchmark, AblationKind, AgentContext, DecisionMode, Experiment, Grid, ReportRow, RunConfig, RunDir,
};
use dualdrive_core::memory::{load_bank, save_bank, LoadMode, MemoryBank};
use dualdrive_core::reflection::{integrate, ReflectionLog};
use dualdrive_core::sim::Scenario;

#[derive(Parser)]
#[command(name = "dualdrive", version, about = "Dual-process driving agent: closed-loop runs, ablations and memory tools")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory of scenario TOML files; the bundled suite when omitted.
    #[arg(long, global = true)]
    scenarios: Option<PathBuf>,
    /// Memory bank file (JSON lines).
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    /// Re-embed a bank written with a different encoder instead of rejecting it.
    #[arg(long, global = true)]
    reembed: bool,
    /// Directory of prompt templates overriding the bundled ones.
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
    /// Seeds, overriding the configuration (repeatable).
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,
    /// Measure decision latency and pace the simulation to real time.
    #[arg(long, global = true)]
    wall_clock: bool,
    /// Base directory for run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct AgentArgs {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Few-shot count.
    #[arg(long)]
    k: Option<usize>,
    /// Disable reflection on incidents.
    #[arg(long)]
    no_reflection: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Heuristic,
    Analytic,
    Hold,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under every seed.
    Run {
        scenario: String,
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Run the whole suite under every seed.
    Benchmark {
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Sweep one ablation grid, one cell per grid point.
    Ablate {
        /// few_shot, memory_size, reflection_rounds or memory_transfer.
        #[arg(long)]
        kind: AblationKind,
        /// Comma-separated grid, e.g. "0,1,2,3", "0,10%,100%", "2" or "desk01,none,all".
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Run the suite with the analytic process and store its decisions in the bank.
    Accumulate {
        /// Where to write the bank; defaults to --bank.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Integrate the reflections stored in a run directory into the bank.
    ReflectReplay {
        run_dir: PathBuf,
        /// Where to write the bank; defaults to --bank.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Memory bank utilities.
    Memory {
        #[command(subcommand)]
        command: MemoryCommand,
    },
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Print size, encoder and sample counts by provenance, town and action.
    Inspect {
        /// Also print the first N samples.
        #[arg(long, default_value_t = 0)]
        show: usize,
    },
}

struct Env {
    cfg: RunConfig,
    suite: Vec<Scenario>,
    prompts: PromptSet,
    global: Global,
}

impl Env {
    fn load(global: Global) -> Result<Self> {
        let mut cfg = match &global.config {
            Some(p) => RunConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => RunConfig::default(),
        };
        if !global.seeds.is_empty() {
            cfg.seeds = global.seeds.clone();
        }
        if global.wall_clock {
            cfg.agent.timing = Timing::WallClock;
        }
        let suite = match &global.scenarios {
            Some(dir) => load_suite(dir)?,
            None => builtin_suite(),
        };
        let prompts = match &global.prompts {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::builtin(),
        };
        Ok(Self { cfg, suite, prompts, global })
    }

    fn apply(&mut self, a: &AgentArgs) {
        if let Some(m) = a.mode {
            self.cfg.agent.mode = match m {
                Mode::Heuristic => DecisionMode::Heuristic,
                Mode::Analytic => DecisionMode::Analytic,
                Mode::Hold => DecisionMode::Hold,
            };
        }
        if let Some(k) = a.k {
            self.cfg.agent.k = k;
        }
        if a.no_reflection {
            self.cfg.agent.reflection = false;
        }
    }

    fn empty_bank(&self) -> Result<MemoryBank> {
        Ok(MemoryBank::new(build_encoder(&self.cfg.encoder)?))
    }

    /// The configured bank, or an empty one when no path is given or the file is absent.
    fn bank(&self, must_exist: bool) -> Result<MemoryBank> {
        match &self.global.bank {
            Some(p) if p.exists() => {
                let mode = if self.global.reembed { LoadMode::Reembed } else { LoadMode::Strict };
                Ok(load_bank(p, build_encoder(&self.cfg.encoder)?, mode).with_context(|| format!("loading {}", p.display()))?)
            }
            Some(p) if must_exist => bail!("bank {} does not exist", p.display()),
            None if must_exist => bail!("--bank is required"),
            _ => self.empty_bank(),
        }
    }

    fn context(&self, bank: MemoryBank) -> Result<AgentContext> {
        Ok(AgentContext::from_config(&self.cfg, bank, self.prompts.clone())?)
    }

    fn run_dir(&self, experiment: &str, extra: &str) -> Result<RunDir> {
        let suite_ids: Vec<&str> = self.suite.iter().map(|s| s.id()).collect();
        let bank = self.global.bank.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let fp = self.cfg.fingerprint(&format!("{extra};suite={};bank={bank}", suite_ids.join(",")));
        let dir = RunDir::create(&self.global.out, experiment, &fp)?;
        dir.write_config(&self.cfg)?;
        Ok(dir)
    }

    fn output(&self, output: Option<PathBuf>) -> Result<PathBuf> {
        output.or_else(|| self.global.bank.clone()).context("--output or --bank is required")
    }
}

fn print_summary(e: &Experiment, dir: &RunDir) {
    println!("{:<20} {:>6} {:>16} {:>16} {:>16}", "cell", "routes", "DS", "RC", "IS");
    for cell in &e.cells {
        match cell.aggregate() {
            Some(a) => println!(
                "{:<20} {:>6} {:>8.4} ± {:<5.3} {:>8.4} ± {:<5.3} {:>8.4} ± {:<5.3}",
                cell.name, a.routes, a.ds.mean, a.ds.std, a.rc.mean, a.rc.std, a.is.mean, a.is.std
            ),
            None => println!("{:<20} failed: {}", cell.name, cell.runs.as_ref().err().map_or("", |s| s.as_str())),
        }
    }
    println!("results: {}", dir.root.display());
}

fn run_experiment(env: &Env, name: &str, extra: &str, e: Result<Experiment>) -> Result<()> {
    let e = e?;
    let dir = env.run_dir(name, extra)?;
    dir.write_experiment(&e)?;
    print_summary(&e, &dir);
    Ok(())
}

fn reflect_replay(env: &Env, run_dir: &Path, output: Option<PathBuf>) -> Result<()> {
    let dir = RunDir { root: run_dir.to_path_buf() };
    let rows: Vec<ReportRow> = read_csv(&dir.root.join("report.csv")).context("reading report.csv of the run directory")?;
    let mut bank = env.bank(false)?;
    let before = bank.len();
    let mut files = 0;
    for row in &rows {
        let path = dir.reflection_path(&row.cell, &row.route_id, row.seed);
        if !path.exists() {
            continue;
        }
        let logs: Vec<ReflectionLog> =
            serde_json::from_str(&fs::read_to_string(&path)?).with_context(|| format!("parsing {}", path.display()))?;
        files += 1;
        for result in logs.iter().filter_map(|l| l.result.as_ref()) {
            integrate(&mut bank, result, &row.route_id, &row.town)?;
        }
    }
    let out = env.output(output)?;
    save_bank(&bank, &out)?;
    println!("integrated {files} reflection logs: {} new samples, bank size {} -> {}", bank.len() - before, before, bank.len());
    println!("bank: {}", out.display());
    Ok(())
}

fn inspect(env: &Env, show: usize) -> Result<()> {
    let bank = env.bank(true)?;
    println!("samples: {}", bank.len());
    println!("encoder: {} (dim {})", bank.encoder_id(), bank.dim());
    let mut by: [BTreeMap<String, usize>; 3] = Default::default();
    for e in bank.entries() {
        *by[0].entry(e.sample.provenance.as_str().to_string()).or_default() += 1;
        *by[1].entry(e.sample.town.clone()).or_default() += 1;
        *by[2].entry(e.sample.action.to_string()).or_default() += 1;
    }
    for (label, counts) in ["provenance", "town", "action"].iter().zip(&by) {
        let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{label}: {}", parts.join(" "));
    }
    for e in bank.entries().iter().take(show) {
        println!("#{} [{}] {} t={:.1} {} :: {}", e.id, e.sample.provenance.as_str(), e.sample.source, e.sample.timestamp, e.sample.action, e.sample.caption());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut env = Env::load(cli.global)?;
    match cli.command {
        Command::Run { scenario, agent } => {
            env.apply(&agent);
            env.cfg.validate()?;
            let s = env.suite.iter().find(|s| s.id() == scenario).with_context(|| format!("unknown scenario {scenario}"))?;
            let ctx = env.context(env.bank(false)?)?;
            let runs = run_benchmark(std::slice::from_ref(s), &env.cfg.agent, &ctx, &env.cfg.seeds);
            let e = runs.map(|r| Experiment::single("run", &scenario, r)).map_err(Into::into);
            run_experiment(&env, "run", &scenario, e)
        }
        Command::Benchmark { agent } => {
            env.apply(&agent);
            env.cfg.validate()?;
            let ctx = env.context(env.bank(false)?)?;
            let e = run_benchmark(&env.suite, &env.cfg.agent, &ctx, &env.cfg.seeds)
                .map(|r| Experiment::single("benchmark", "default", r))
                .map_err(Into::into);
            run_experiment(&env, "benchmark", "", e)
        }
        Command::Ablate { kind, grid, agent } => {
            env.apply(&agent);
            env.cfg.validate()?;
            let parsed = Grid::parse(kind, &grid)?;
            let ctx = env.context(env.bank(false)?)?;
            let e = run_ablation(&parsed, &env.suite, &env.cfg.agent, &ctx, &env.cfg.seeds).map_err(Into::into);
            run_experiment(&env, kind.as_str(), &format!("grid={grid}"), e)
        }
        Command::Accumulate { output } => {
            env.cfg.validate()?;
            let out = env.output(output)?;
            let bank = env.bank(false)?;
            let ctx = env.context(env.empty_bank()?)?;
            let (bank, rows) = accumulate_experience(&env.suite, &env.cfg.agent, &ctx, &env.cfg.seeds, bank)?;
            let dir = env.run_dir("accumulate", "")?;
            dir.write_accumulation(&rows)?;
            save_bank(&bank, &out)?;
            let withheld = rows.iter().filter(|r| r.withheld).count();
            println!("{} routes, {withheld} withheld, bank size {}", rows.len(), bank.len());
            println!("bank: {}", out.display());
            println!("results: {}", dir.root.display());
            Ok(())
        }
        Command::ReflectReplay { run_dir, output } => reflect_replay(&env, &run_dir, output),
        Command::Memory { command: MemoryCommand::Inspect { show } } => inspect(&env, show),
    }
}
