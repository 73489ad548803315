use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, AgentContext, DecisionMode};
use super::metrics::{Aggregate, RouteResult};
use super::runner::{run_route, RouteRun};
use super::HarnessError;
use crate::memory::{InsertOutcome, MemoryBank};
use crate::reflection::integrate;
use crate::sim::Scenario;

/// Routes scoring below this are withheld from accumulation and eligible for reflection reruns.
pub const LOW_SCORE: f64 = 0.5;

/// Runs every scenario under every seed, in parallel, returning runs in scenario-major order.
pub fn run_benchmark(
    suite: &[Scenario],
    cfg: &AgentConfig,
    ctx: &AgentContext,
    seeds: &[u64],
) -> Result<Vec<RouteRun>, HarnessError> {
    let jobs: Vec<(&Scenario, u64)> = suite.iter().flat_map(|s| seeds.iter().map(move |&seed| (s, seed))).collect();
    run_jobs(&jobs, cfg, ctx)
}

fn run_jobs(jobs: &[(&Scenario, u64)], cfg: &AgentConfig, ctx: &AgentContext) -> Result<Vec<RouteRun>, HarnessError> {
    jobs.par_iter().map(|(s, seed)| run_route(s, cfg, ctx, *seed)).collect()
}

/// One grid point of an experiment. A failed cell keeps its error instead of runs.
#[derive(Debug, Clone)]
pub struct Cell {
    pub name: String,
    pub runs: Result<Vec<RouteRun>, String>,
}

impl Cell {
    fn new(name: impl Into<String>, runs: Result<Vec<RouteRun>, HarnessError>) -> Self {
        let name = name.into();
        let runs = runs.map_err(|e| {
            log::error!("cell {name} failed: {e}");
            e.to_string()
        });
        Self { name, runs }
    }

    pub fn results(&self) -> Vec<&RouteResult> {
        self.runs.iter().flatten().map(|r| &r.result).collect()
    }

    pub fn aggregate(&self) -> Option<Aggregate> {
        let runs = self.runs.as_ref().ok()?;
        Some(Aggregate::of(&runs.iter().map(|r| r.result.clone()).collect::<Vec<_>>()))
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub cells: Vec<Cell>,
}

impl Experiment {
    pub fn single(name: &str, cell: &str, runs: Vec<RouteRun>) -> Self {
        Self { name: name.to_string(), cells: vec![Cell { name: cell.to_string(), runs: Ok(runs) }] }
    }

    pub fn cell(&self, name: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    FewShot,
    MemorySize,
    ReflectionRounds,
    MemoryTransfer,
}

impl AblationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationKind::FewShot => "few_shot",
            AblationKind::MemorySize => "memory_size",
            AblationKind::ReflectionRounds => "reflection_rounds",
            AblationKind::MemoryTransfer => "memory_transfer",
        }
    }
}

impl FromStr for AblationKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [AblationKind::FewShot, AblationKind::MemorySize, AblationKind::ReflectionRounds, AblationKind::MemoryTransfer]
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown ablation '{s}'")))
    }
}

/// A bank size: an absolute count or a percentage of the available samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeSpec {
    Count(usize),
    Percent(f64),
}

impl SizeSpec {
    pub fn resolve(self, available: usize) -> Result<usize, HarnessError> {
        match self {
            SizeSpec::Count(n) if n <= available => Ok(n),
            SizeSpec::Count(n) => Err(HarnessError::Config(format!("bank size {n} exceeds the {available} samples available"))),
            SizeSpec::Percent(p) if (0.0..=100.0).contains(&p) => Ok((p / 100.0 * available as f64).round() as usize),
            SizeSpec::Percent(p) => Err(HarnessError::Config(format!("bank percentage {p} outside [0, 100]"))),
        }
    }
}

impl fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeSpec::Count(n) => write!(f, "{n}"),
            SizeSpec::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl FromStr for SizeSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || HarnessError::Config(format!("bad bank size '{s}'"));
        match s.strip_suffix('%') {
            Some(p) => p.trim().parse().map(SizeSpec::Percent).map_err(|_| bad()),
            None => s.parse().map(SizeSpec::Count).map_err(|_| bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    FewShot(Vec<usize>),
    MemorySize(Vec<SizeSpec>),
    /// Number of reflection rounds after the initial run.
    ReflectionRounds(usize),
    /// Source towns of the bank; `none` is an empty bank and `all` the whole bank.
    MemoryTransfer(Vec<String>),
}

impl Grid {
    pub fn kind(&self) -> AblationKind {
        match self {
            Grid::FewShot(_) => AblationKind::FewShot,
            Grid::MemorySize(_) => AblationKind::MemorySize,
            Grid::ReflectionRounds(_) => AblationKind::ReflectionRounds,
            Grid::MemoryTransfer(_) => AblationKind::MemoryTransfer,
        }
    }

    /// Parses a comma-separated grid for `kind`.
    pub fn parse(kind: AblationKind, text: &str) -> Result<Self, HarnessError> {
        let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| HarnessError::Config(format!("bad grid value '{s}'")));
        let grid = match kind {
            AblationKind::FewShot => Grid::FewShot(items.iter().map(|s| num(s)).collect::<Result<_, _>>()?),
            AblationKind::MemorySize => Grid::MemorySize(items.iter().map(|s| s.parse()).collect::<Result<_, _>>()?),
            AblationKind::ReflectionRounds => match items[..] {
                [n] => Grid::ReflectionRounds(num(n)?),
                _ => return Err(HarnessError::Config("reflection_rounds takes a single round count".into())),
            },
            AblationKind::MemoryTransfer => Grid::MemoryTransfer(items.iter().map(|s| s.to_string()).collect()),
        };
        if grid.is_empty() {
            return Err(HarnessError::EmptyGrid);
        }
        Ok(grid)
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Grid::FewShot(v) => v.is_empty(),
            Grid::MemorySize(v) => v.is_empty(),
            Grid::ReflectionRounds(n) => *n == 0,
            Grid::MemoryTransfer(v) => v.is_empty(),
        }
    }
}

/// Runs one ablation sweep; each grid point becomes a cell.
pub fn run_ablation(
    grid: &Grid,
    suite: &[Scenario],
    cfg: &AgentConfig,
    ctx: &AgentContext,
    seeds: &[u64],
) -> Result<Experiment, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let mut cells = Vec::new();
    match grid {
        Grid::FewShot(ks) => {
            for &k in ks {
                let cfg = AgentConfig { k, ..cfg.clone() };
                cells.push(Cell::new(format!("k={k}"), run_benchmark(suite, &cfg, ctx, seeds)));
            }
        }
        Grid::MemorySize(sizes) => {
            for &size in sizes {
                let runs = size.resolve(ctx.bank.len()).and_then(|n| {
                    let ctx = ctx.clone().with_bank(ctx.bank.subsample(n));
                    run_benchmark(suite, cfg, &ctx, seeds)
                });
                cells.push(Cell::new(format!("size={size}"), runs));
            }
        }
        Grid::MemoryTransfer(towns) => {
            for town in towns {
                let bank = match town.as_str() {
                    "all" => ctx.bank.clone(),
                    "none" => ctx.bank.filter(|_| false),
                    t => ctx.bank.filter(|e| e.sample.town == t),
                };
                let ctx = ctx.clone().with_bank(bank);
                cells.push(Cell::new(format!("bank={town}"), run_benchmark(suite, cfg, &ctx, seeds)));
            }
        }
        Grid::ReflectionRounds(rounds) => {
            let rounds = reflection_rounds(suite, cfg, ctx, seeds, *rounds)?;
            cells.extend(rounds.into_iter().enumerate().map(|(i, r)| Cell { name: format!("round={i}"), runs: Ok(r.runs) }));
        }
    }
    Ok(Experiment { name: grid.kind().as_str().to_string(), cells })
}

#[derive(Debug, Clone)]
pub struct Round {
    pub runs: Vec<RouteRun>,
    /// Bank the round ran with.
    pub bank_size: usize,
    pub inserted: usize,
}

/// Round 0 runs the whole suite; each later round first integrates the reflections of the
/// previous round's low-scoring runs into the bank, then reruns the routes that scored
/// low in round 0.
pub fn reflection_rounds(
    suite: &[Scenario],
    cfg: &AgentConfig,
    ctx: &AgentContext,
    seeds: &[u64],
    rounds: usize,
) -> Result<Vec<Round>, HarnessError> {
    let cfg = AgentConfig { reflection: true, ..cfg.clone() };
    let mut bank = ctx.bank.clone();
    let first = run_benchmark(suite, &cfg, ctx, seeds)?;
    let jobs: Vec<(&Scenario, u64)> = first
        .iter()
        .filter(|r| r.result.ds < LOW_SCORE)
        .map(|r| {
            let s = suite.iter().find(|s| s.id() == r.result.route_id).expect("run comes from the suite");
            (s, r.result.seed)
        })
        .collect();
    let mut out = vec![Round { runs: first, bank_size: bank.len(), inserted: 0 }];
    for _ in 0..rounds {
        let previous = &out.last().expect("round 0 exists").runs;
        let inserted = integrate_reflections(&mut bank, previous.iter().filter(|r| r.result.ds < LOW_SCORE))?;
        let ctx = ctx.clone().with_bank(bank.clone());
        let runs = run_jobs(&jobs, &cfg, &ctx)?;
        out.push(Round { runs, bank_size: bank.len(), inserted });
    }
    Ok(out)
}

/// Writes every parsed reflection of `runs` into `bank`, in order. Returns the number inserted.
pub fn integrate_reflections<'a>(
    bank: &mut MemoryBank,
    runs: impl IntoIterator<Item = &'a RouteRun>,
) -> Result<usize, HarnessError> {
    let mut inserted = 0;
    for run in runs {
        for log in &run.reflections {
            if let Some(result) = &log.result {
                inserted += integrate(bank, result, &run.result.route_id, &run.result.town)?.inserted;
            }
        }
    }
    Ok(inserted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulationRow {
    pub route_id: String,
    pub seed: u64,
    pub ds: f64,
    pub samples: usize,
    pub inserted: usize,
    pub withheld: bool,
}

/// Runs the suite with the analytic process and stores its 1 Hz samples, skipping routes
/// that scored below [`LOW_SCORE`]. Duplicate suppression is off while accumulating.
pub fn accumulate_experience(
    suite: &[Scenario],
    cfg: &AgentConfig,
    ctx: &AgentContext,
    seeds: &[u64],
    mut bank: MemoryBank,
) -> Result<(MemoryBank, Vec<AccumulationRow>), HarnessError> {
    let cfg = AgentConfig { mode: DecisionMode::Analytic, reflection: false, ..cfg.clone() };
    let runs = run_benchmark(suite, &cfg, ctx, seeds)?;
    let dedup = bank.dedup();
    bank.set_dedup(None);
    let mut rows = Vec::new();
    for run in &runs {
        let withheld = run.result.ds < LOW_SCORE;
        let mut inserted = 0;
        if !withheld {
            for s in &run.samples {
                if let InsertOutcome::Inserted { .. } = bank.insert(s.clone())? {
                    inserted += 1;
                }
            }
        }
        rows.push(AccumulationRow {
            route_id: run.result.route_id.clone(),
            seed: run.result.seed,
            ds: run.result.ds,
            samples: run.samples.len(),
            inserted,
            withheld,
        });
    }
    bank.set_dedup(dedup);
    Ok((bank, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(Grid::parse(AblationKind::FewShot, "0, 1,2,3").unwrap(), Grid::FewShot(vec![0, 1, 2, 3]));
        assert_eq!(
            Grid::parse(AblationKind::MemorySize, "0,10%,100%").unwrap(),
            Grid::MemorySize(vec![SizeSpec::Count(0), SizeSpec::Percent(10.0), SizeSpec::Percent(100.0)])
        );
        assert_eq!(Grid::parse(AblationKind::ReflectionRounds, "2").unwrap(), Grid::ReflectionRounds(2));
        assert!(matches!(Grid::parse(AblationKind::FewShot, ""), Err(HarnessError::EmptyGrid)));
        assert!(Grid::parse(AblationKind::FewShot, "x").is_err());
        assert_eq!("memory_transfer".parse::<AblationKind>().unwrap(), AblationKind::MemoryTransfer);
    }

    #[test]
    fn size_resolution() {
        assert_eq!(SizeSpec::Percent(10.0).resolve(120).unwrap(), 12);
        assert_eq!(SizeSpec::Percent(100.0).resolve(120).unwrap(), 120);
        assert_eq!(SizeSpec::Count(10).resolve(20).unwrap(), 10);
        assert!(SizeSpec::Count(30).resolve(20).is_err());
        assert!(SizeSpec::Percent(150.0).resolve(20).is_err());
        assert_eq!(SizeSpec::Percent(10.0).to_string(), "10%");
    }
}
