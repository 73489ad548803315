use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::experiments::{AccumulationRow, Experiment};
use super::metrics::RouteResult;
use super::runner::RouteRun;
use super::HarnessError;
use crate::sim::InfractionKind;

/// One route × seed row of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub cell: String,
    pub route_id: String,
    pub town: String,
    pub seed: u64,
    pub rc: f64,
    pub is: f64,
    pub ds: f64,
    pub collision_pedestrian: usize,
    pub collision_vehicle: usize,
    pub collision_static: usize,
    pub red_light: usize,
    pub stop_sign: usize,
    pub route_deviation: usize,
    pub status: String,
    pub decisions: usize,
    pub sim_time: f64,
}

impl ReportRow {
    pub fn new(experiment: &str, cell: &str, r: &RouteResult) -> Self {
        Self {
            experiment: experiment.to_string(),
            cell: cell.to_string(),
            route_id: r.route_id.clone(),
            town: r.town.clone(),
            seed: r.seed,
            rc: r.rc,
            is: r.is,
            ds: r.ds,
            collision_pedestrian: r.count(InfractionKind::CollisionPedestrian),
            collision_vehicle: r.count(InfractionKind::CollisionVehicle),
            collision_static: r.count(InfractionKind::CollisionStatic),
            red_light: r.count(InfractionKind::RedLight),
            stop_sign: r.count(InfractionKind::StopSign),
            route_deviation: r.count(InfractionKind::RouteDeviation),
            status: r.status.as_str().to_string(),
            decisions: r.decisions,
            sim_time: r.sim_time,
        }
    }
}

/// One cell row of `summary.csv`: mean and sample standard deviation across its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub cell: String,
    pub routes: usize,
    pub ds_mean: f64,
    pub ds_std: f64,
    pub rc_mean: f64,
    pub rc_std: f64,
    pub is_mean: f64,
    pub is_std: f64,
    /// Empty when the cell ran; the error otherwise.
    pub error: String,
}

pub fn report_rows(e: &Experiment) -> Vec<ReportRow> {
    e.cells.iter().flat_map(|c| c.results().into_iter().map(|r| ReportRow::new(&e.name, &c.name, r))).collect()
}

pub fn summary_rows(e: &Experiment) -> Vec<SummaryRow> {
    e.cells
        .iter()
        .map(|c| match (c.aggregate(), &c.runs) {
            (Some(a), _) => SummaryRow {
                experiment: e.name.clone(),
                cell: c.name.clone(),
                routes: a.routes,
                ds_mean: a.ds.mean,
                ds_std: a.ds.std,
                rc_mean: a.rc.mean,
                rc_std: a.rc.std,
                is_mean: a.is.mean,
                is_std: a.is.std,
                error: String::new(),
            },
            (None, runs) => SummaryRow {
                experiment: e.name.clone(),
                cell: c.name.clone(),
                routes: 0,
                ds_mean: f64::NAN,
                ds_std: f64::NAN,
                rc_mean: f64::NAN,
                rc_std: f64::NAN,
                is_mean: f64::NAN,
                is_std: f64::NAN,
                error: runs.as_ref().err().cloned().unwrap_or_default(),
            },
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Output directory of one experiment: `<base>/<experiment>-<fingerprint>/` holding
/// `config.toml`, `report.csv`, `summary.csv` and per-route `decisions/`, `traces/` and
/// `reflections/` under a subdirectory per cell.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(base: &Path, experiment: &str, fingerprint: &str) -> Result<Self, HarnessError> {
        let root = base.join(format!("{experiment}-{fingerprint}"));
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn write_config(&self, cfg: &RunConfig) -> Result<(), HarnessError> {
        fs::write(self.root.join("config.toml"), cfg.to_toml())?;
        Ok(())
    }

    pub fn write_experiment(&self, e: &Experiment) -> Result<(), HarnessError> {
        write_csv(&self.root.join("report.csv"), &report_rows(e))?;
        write_csv(&self.root.join("summary.csv"), &summary_rows(e))?;
        for cell in &e.cells {
            if let Ok(runs) = &cell.runs {
                self.write_runs(&sanitize(&cell.name), runs)?;
            }
        }
        Ok(())
    }

    pub fn write_accumulation(&self, rows: &[AccumulationRow]) -> Result<(), HarnessError> {
        write_csv(&self.root.join("accumulation.csv"), rows)
    }

    /// Reflection log of one route under one cell, if the route reflected.
    pub fn reflection_path(&self, cell: &str, route_id: &str, seed: u64) -> PathBuf {
        self.root.join("reflections").join(sanitize(cell)).join(format!("{}.json", route_stem(route_id, seed)))
    }

    pub fn decision_path(&self, cell: &str, route_id: &str, seed: u64) -> PathBuf {
        self.root.join("decisions").join(sanitize(cell)).join(format!("{}.jsonl", route_stem(route_id, seed)))
    }

    fn write_runs(&self, cell: &str, runs: &[RouteRun]) -> Result<(), HarnessError> {
        let dirs = ["decisions", "traces", "reflections"].map(|d| self.root.join(d).join(cell));
        for d in &dirs {
            fs::create_dir_all(d)?;
        }
        for run in runs {
            let stem = route_stem(&run.result.route_id, run.result.seed);

            let mut f = std::io::BufWriter::new(fs::File::create(dirs[0].join(format!("{stem}.jsonl")))?);
            for d in &run.decisions {
                serde_json::to_writer(&mut f, d)?;
                f.write_all(b"\n")?;
            }
            f.flush()?;

            let rows: Vec<TraceRow> = run.trace.iter().map(TraceRow::from).collect();
            write_csv(&dirs[1].join(format!("{stem}.csv")), &rows)?;

            if !run.reflections.is_empty() {
                let text = serde_json::to_string_pretty(&run.reflections)?;
                fs::write(dirs[2].join(format!("{stem}.json")), text)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    target_speed: f64,
    speed: f64,
    speed_error: f64,
    heading_error: f64,
    cross_track: f64,
    target_index: usize,
    steer: f64,
    throttle: f64,
    brake: f64,
}

impl From<&crate::control::ControlTrace> for TraceRow {
    fn from(t: &crate::control::ControlTrace) -> Self {
        Self {
            t: t.t,
            target_speed: t.target_speed,
            speed: t.speed,
            speed_error: t.speed_error,
            heading_error: t.heading_error,
            cross_track: t.cross_track,
            target_index: t.target_index,
            steer: t.signal.steer,
            throttle: t.signal.throttle,
            brake: t.signal.brake,
        }
    }
}

fn route_stem(route_id: &str, seed: u64) -> String {
    format!("{}-seed{seed}", sanitize(route_id))
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::PenaltyTable;
    use crate::sim::InfractionEvent;

    #[test]
    fn csv_floats_roundtrip_exactly() {
        let ev = InfractionEvent { kind: InfractionKind::RedLight, time: 3.0, actor: None };
        let r = RouteResult::new("r".into(), "t".into(), 3, 0.123456789012345, vec![ev], &PenaltyTable::default());
        let e = Experiment::single("benchmark", "all", Vec::new());
        let row = ReportRow::new(&e.name, "all", &r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&path, std::slice::from_ref(&row)).unwrap();
        let back: Vec<ReportRow> = read_csv(&path).unwrap();
        assert_eq!(back, vec![row]);
        assert_eq!(back[0].ds, back[0].rc * back[0].is);
    }

    #[test]
    fn sanitized_names() {
        assert_eq!(sanitize("size=10%"), "size_10_");
        assert_eq!(sanitize("lead_brake"), "lead_brake");
    }
}
