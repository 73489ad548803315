//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
#![allow(clippy::approx_constant)] // hand-computed reference values

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use dualdrive_core::control::{pure_pursuit_steer, PidState};
use dualdrive_core::decision::MetaAction;
use dualdrive_core::geometry::Vec2;
use dualdrive_core::harness::{
    accumulate_experience, builtin_suite, compute_is, integrate_reflections, read_csv, report_rows, run_ablation,
    run_benchmark, run_route, AgentConfig, AgentContext, DecisionMode, Experiment, Grid, PenaltyTable, RouteResult, RouteStatus,
    RunDir, SizeSpec, SummaryRow,
};
use dualdrive_core::memory::{cosine_similarity, ExperienceSample, HashEncoder, MemoryBank, Provenance};
use dualdrive_core::perception::{
    describe_scene, BoundingBox, CameraView, CriticalObject, LaneRelation, Motion, ObjectCategory, PerceptionConfig,
    SceneDescription, SpatialAttribute,
};
use dualdrive_core::sim::{parse_scenario, InfractionKind, Scenario, SimConfig, World};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn scenario(id: &str) -> Scenario {
    builtin_suite().into_iter().find(|s| s.id() == id).expect("bundled scenario")
}

fn sample(description: SceneDescription, action: MetaAction) -> ExperienceSample {
    ExperienceSample {
        description,
        reasoning: format!("fixture {action}"),
        action,
        provenance: Provenance::Analytic,
        source: "fixture".into(),
        town: "fixture".into(),
        timestamp: 0.0,
    }
}

fn retrieval_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 16;
    let mut checked = 0;
    for bank_no in 0..100 {
        let m = if bank_no == 0 { 10_000 } else { rng.random_range(1..=10_000) };
        let mut bank = MemoryBank::new(Arc::new(HashEncoder::new(dim))).with_dedup(None);
        for _ in 0..m {
            // Coarse components make exact similarity ties common.
            let e: Vec<f64> = (0..dim).map(|_| rng.random_range(-2..=2) as f64).collect();
            let e = if e.iter().all(|x| *x == 0.0) { vec![1.0; dim] } else { e };
            bank.insert_embedded(sample(SceneDescription::empty(0.0, 0.0), MetaAction::Idle), e).map_err(|e| e.to_string())?;
        }
        let query: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut scan: Vec<(f64, u64)> = bank
            .entries()
            .iter()
            .map(|e| (cosine_similarity(&query, &e.embedding).unwrap(), e.id))
            .collect();
        scan.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for k in [1, 3, 10] {
            let got: Vec<(f64, u64)> =
                bank.query_top_k(&query, k).map_err(|e| e.to_string())?.iter().map(|r| (r.similarity, r.entry.id)).collect();
            let want: Vec<(f64, u64)> = scan.iter().take(k).copied().collect();
            ensure(got == want, format!("bank {bank_no} (M = {m}), k = {k}: {got:?} != {want:?}"))?;
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.2} s"))?;
    Ok(format!("{checked} queries over 100 banks matched the exhaustive scan in {secs:.2} s"))
}

fn cosine_numerics() -> Check {
    let cos = |a: &[f64], b: &[f64]| cosine_similarity(a, b).unwrap();
    ensure((cos(&[0.3, -1.2, 2.0], &[0.3, -1.2, 2.0]) - 1.0).abs() < 1e-12, "identity")?;
    ensure(cos(&[1.0, 0.0], &[0.0, 1.0]).abs() < 1e-12, "orthogonality")?;
    let v = cos(&[1.0, 0.0], &[1.0, 1.0]);
    ensure((v - 0.70711).abs() < 1e-5, format!("45 degrees gave {v}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bank = MemoryBank::new(Arc::new(HashEncoder::new(8))).with_dedup(None);
    for _ in 0..500 {
        let e: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        bank.insert_embedded(sample(SceneDescription::empty(0.0, 0.0), MetaAction::Idle), e).map_err(|e| e.to_string())?;
    }
    for _ in 0..20 {
        let q: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ids = |q: &[f64]| bank.query_top_k(q, 10).unwrap().iter().map(|r| r.entry.id).collect::<Vec<_>>();
        let base = ids(&q);
        for c in [0.25, 3.0, 1e3] {
            let scaled: Vec<f64> = q.iter().map(|x| x * c).collect();
            ensure(ids(&scaled) == base, format!("top-k order changed under scaling by {c}"))?;
        }
    }
    Ok(format!("identity, orthogonality, 45° = {v:.5}; top-10 order invariant under positive scaling"))
}

struct GenActor {
    id: String,
    kind: &'static str,
    x: f64,
    y: f64,
}

/// Two-lane straight road, route along the x axis; thresholds applied by brute force.
fn perception_oracle() -> Check {
    let cfg = PerceptionConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut objects = 0;
    for scene in 0..1000 {
        let ego_x: f64 = rng.random_range(0.0..120.0);
        let n = rng.random_range(0..12);
        let actors: Vec<GenActor> = (0..n)
            .map(|i| GenActor {
                id: format!("a{i}"),
                kind: ["vehicle", "cyclist", "pedestrian"][rng.random_range(0..3)],
                x: ego_x + rng.random_range(-45.0..75.0),
                y: rng.random_range(-9.0..9.0),
            })
            .collect();
        let light_x = ego_x + rng.random_range(-20.0..70.0);
        let color = ["red", "yellow", "green"][rng.random_range(0..3)];

        let mut text = format!(
            "format_version = 1\nid = \"s{scene}\"\n[ego]\nposition = [{ego_x}, 0.0]\n[route]\nwaypoints = [[0.0, 0.0], [200.0, 0.0]]\n\
             [[lanes]]\nid = \"main\"\ncenterline = [[-60.0, 0.0], [300.0, 0.0]]\nleft = \"left\"\n\
             [[lanes]]\nid = \"left\"\ncenterline = [[-60.0, 3.5], [300.0, 3.5]]\nright = \"main\"\n\
             [[lights]]\nid = \"tl\"\nposition = [{light_x}, 0.0]\nlanes = [\"main\"]\nphases = [{{ color = \"{color}\", duration = 100.0 }}]\n"
        );
        for a in &actors {
            text += &format!(
                "[[actors]]\nid = \"{}\"\nkind = \"{}\"\npath = [[{}, {}], [{}, {}]]\nspeed_profile = [[0.0, 0.0]]\n",
                a.id,
                a.kind,
                a.x,
                a.y,
                a.x + 1.0,
                a.y
            );
        }
        let s = parse_scenario(&text).map_err(|e| format!("scene {scene}: {e}"))?;
        let world = World::new(&s, 0, SimConfig::default());

        let mut want: Vec<(String, ObjectCategory)> = Vec::new();
        for a in &actors {
            let (dx, dy) = (a.x - ego_x, a.y);
            let d = dx.hypot(dy);
            if dy.atan2(dx).abs() > cfg.fov_half_angle {
                continue;
            }
            let ego_lane = dy.abs() <= 1.75 && a.x > 0.0 && a.x < 200.0;
            let (selected, category) = match a.kind {
                "pedestrian" => (d <= 40.0, ObjectCategory::Pedestrian),
                k => (d <= 20.0 || (ego_lane && d <= 60.0), if k == "vehicle" { ObjectCategory::Vehicle } else { ObjectCategory::Cyclist }),
            };
            if selected {
                want.push((a.id.clone(), category));
            }
        }
        if light_x > ego_x && light_x - ego_x <= 50.0 {
            let category = match color {
                "red" => ObjectCategory::RedLight,
                "yellow" => ObjectCategory::YellowLight,
                _ => ObjectCategory::GreenLight,
            };
            want.push(("tl".into(), category));
        }
        want.sort();

        let d = describe_scene(&world, &cfg);
        let mut got: Vec<(String, ObjectCategory)> =
            d.objects.iter().map(|o| (o.source_id.clone().unwrap_or_default(), o.category)).collect();
        got.sort();
        ensure(got == want, format!("scene {scene} (ego x = {ego_x:.2}): got {got:?}, oracle {want:?}"))?;
        objects += want.len();
    }
    Ok(format!("1000 randomized scenes, {objects} critical objects, zero mismatches"))
}

fn controller_numerics() -> Check {
    let mut lon = PidState::longitudinal(0.05);
    let first = lon.step(1.0);
    ensure((first - 25.025).abs() < 1e-9, format!("first longitudinal step gave {first}"))?;
    let mut terms = lon.step_terms(1.0);
    for _ in 0..100 {
        terms = lon.step_terms(1.0);
    }
    ensure((terms.i - 1.0).abs() < 1e-9, format!("saturated integral term {}", terms.i))?;
    let steer = pure_pursuit_steer(Vec2::new(0.0, 0.0), 0.0, 2.5, Vec2::new(5.0, 5.0)).map_err(|e| e.to_string())?;
    ensure((steer - 0.46365).abs() < 1e-5, format!("pure pursuit gave {steer}"))?;
    Ok(format!("pid first step {first:.3}, saturated integral {:.9}, pure pursuit {steer:.5} rad", terms.i))
}

fn closed_loop_tracking() -> Check {
    let start = Instant::now();
    let cfg = AgentConfig { mode: DecisionMode::Hold, ..AgentConfig::default() };
    let run = run_route(&scenario("straight_clear"), &cfg, &AgentContext::offline(), 0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(run.result.rc == 1.0 && run.result.status == RouteStatus::Completed, format!("rc {} status {:?}", run.result.rc, run.result.status))?;
    let steady: Vec<_> = run.trace.iter().filter(|t| t.t >= 10.0).collect();
    ensure(!steady.is_empty(), "route finished before reaching steady state")?;
    let lat = steady.iter().map(|t| t.cross_track.abs()).fold(0.0, f64::max);
    let spd = steady.iter().map(|t| t.speed_error.abs()).fold(0.0, f64::max);
    ensure(lat < 0.3, format!("lateral error {lat}"))?;
    ensure(spd < 0.2, format!("speed error {spd}"))?;
    ensure(secs < 5.0, format!("wall time {secs:.2} s"))?;
    Ok(format!("RC 1.0, steady-state max |lateral| {lat:.4} m, max |speed error| {spd:.4} m/s, {secs:.3} s"))
}

fn metric_identity() -> Check {
    ensure(compute_is(&[], &PenaltyTable::default()) == 1.0, "empty event list")?;
    let runs = run_benchmark(&builtin_suite(), &AgentConfig { k: 0, ..AgentConfig::default() }, &AgentContext::offline(), &[0, 1, 2])
        .map_err(|e| e.to_string())?;
    let rows = report_rows(&Experiment::single("identity", "k=0", runs));
    let mut infractions = 0;
    for r in &rows {
        ensure((r.ds - r.rc * r.is).abs() <= 1e-9, format!("{} seed {}: ds {} rc {} is {}", r.route_id, r.seed, r.ds, r.rc, r.is))?;
        infractions += r.collision_pedestrian + r.collision_vehicle + r.collision_static + r.red_light + r.stop_sign + r.route_deviation;
    }
    Ok(format!("{} rows ({infractions} infractions) satisfy DS = RC·IS; empty events give IS = 1", rows.len()))
}

fn object(lane: LaneRelation, distance: f64, motion: Motion) -> CriticalObject {
    CriticalObject {
        category: ObjectCategory::Vehicle,
        spatial: SpatialAttribute { view: CameraView::Front, bbox: BoundingBox { x1: 450, y1: 500, x2: 550, y2: 600 }, lane, distance },
        motion,
        reason: "the road user ahead in the ego lane limits the safe following speed".into(),
        source_id: None,
        position: None,
    }
}

/// Past experience that says IDLE is fine behind a vehicle 5–15 m ahead, at every speed.
fn noisy_idle_bank() -> MemoryBank {
    let mut bank = MemoryBank::new(Arc::new(HashEncoder::default())).with_dedup(None);
    for distance in [7.5, 12.5] {
        for motion in [Motion::Toward, Motion::Static, Motion::Away] {
            for v in 0..=8 {
                let d = SceneDescription { objects: vec![object(LaneRelation::EgoLane, distance, motion)], time: 0.0, ego_speed: v as f64 };
                bank.insert(sample(d, MetaAction::Idle)).expect("fixture sample");
            }
        }
    }
    bank
}

/// Everything but wall time.
fn same_outcome(a: &RouteResult, b: &RouteResult) -> bool {
    RouteResult { wall_time_s: 0.0, ..a.clone() } == RouteResult { wall_time_s: 0.0, ..b.clone() }
}

fn reflection_fixture() -> Check {
    let s = scenario("lead_brake");
    let bank = noisy_idle_bank();
    let cfg = AgentConfig { k: bank.len() + 8, reflection: true, ..AgentConfig::default() };
    let ctx = AgentContext::offline().with_bank(bank.clone());
    let mut lines = Vec::new();
    for seed in 0..3 {
        let before = run_route(&s, &cfg, &ctx, seed).map_err(|e| e.to_string())?;
        ensure(before.result.count(InfractionKind::CollisionVehicle) > 0, format!("seed {seed}: no collision before reflection"))?;
        let log = before.reflections.first().ok_or(format!("seed {seed}: no reflection"))?;
        let result = log.result.as_ref().ok_or(format!("seed {seed}: reflection failed: {:?}", log.error))?;
        let key = result.corrections.iter().find(|c| c.frame == result.keyframe).ok_or(format!("seed {seed}: keyframe not corrected"))?;
        let recorded = before
            .decisions
            .iter()
            .find(|d| (d.t - key.description.time).abs() < 1e-9)
            .ok_or(format!("seed {seed}: no decision at the keyframe"))?;
        ensure(recorded.action == MetaAction::Idle, format!("seed {seed}: keyframe decision was {}", recorded.action))?;

        let mut bank = bank.clone();
        let inserted = integrate_reflections(&mut bank, [&before]).map_err(|e| e.to_string())?;
        let ctx_after = ctx.clone().with_bank(bank);
        let after = run_route(&s, &cfg, &ctx_after, seed).map_err(|e| e.to_string())?;
        let again = run_route(&s, &cfg, &ctx_after, seed).map_err(|e| e.to_string())?;
        ensure(after.result.count(InfractionKind::CollisionVehicle) == 0, format!("seed {seed}: collision remains after reflection"))?;
        ensure(after.result.ds > before.result.ds, format!("seed {seed}: DS {} -> {}", before.result.ds, after.result.ds))?;
        ensure(same_outcome(&again.result, &after.result), format!("seed {seed}: rerun is not deterministic"))?;
        lines.push(format!("seed {seed}: IDLE at keyframe {}, +{inserted} corrections, DS {:.3} -> {:.3}", result.keyframe, before.result.ds, after.result.ds));
    }
    Ok(lines.join("; "))
}

fn ds_of(e: &Experiment, cell: &str) -> Result<f64, String> {
    e.cell(cell).and_then(|c| c.aggregate()).map(|a| a.ds.mean).ok_or(format!("cell {cell} failed"))
}

fn ablation_trends(tmp: &Path) -> Check {
    let suite = builtin_suite();
    let seeds = [0, 1, 2];
    let cfg = AgentConfig { reflection: false, ..AgentConfig::default() };
    let ctx = AgentContext::offline();
    let (bank, _) = accumulate_experience(&suite, &cfg, &ctx, &seeds, ctx.bank.clone()).map_err(|e| e.to_string())?;
    let ctx = ctx.with_bank(bank.clone());

    let few = run_ablation(&Grid::FewShot(vec![0, 1, 2, 3]), &suite, &cfg, &ctx, &seeds).map_err(|e| e.to_string())?;
    let dir = RunDir::create(tmp, "few_shot", "acceptance").map_err(|e| e.to_string())?;
    dir.write_experiment(&few).map_err(|e| e.to_string())?;
    let summary: Vec<SummaryRow> = read_csv(&dir.root.join("summary.csv")).map_err(|e| e.to_string())?;
    ensure(summary.len() == 4, format!("few-shot summary has {} rows", summary.len()))?;
    let (k0, k3) = (ds_of(&few, "k=0")?, ds_of(&few, "k=3")?);
    ensure(k3 >= k0, format!("DS(k=3) {k3} < DS(k=0) {k0}"))?;

    let sizes = vec![SizeSpec::Count(0), SizeSpec::Percent(10.0), SizeSpec::Percent(100.0)];
    let size = run_ablation(&Grid::MemorySize(sizes), &suite, &cfg, &ctx, &seeds).map_err(|e| e.to_string())?;
    let ds: Vec<f64> = ["size=0", "size=10%", "size=100%"].iter().map(|c| ds_of(&size, c)).collect::<Result<_, _>>()?;
    ensure(ds.windows(2).all(|w| w[1] >= w[0]), format!("memory-size DS not non-decreasing: {ds:?}"))?;
    Ok(format!(
        "bank of {} samples; few-shot 4-row summary, DS k=0 {k0:.4} -> k=3 {k3:.4}; memory size 0/10%/100% DS {:.4}/{:.4}/{:.4}",
        bank.len(),
        ds[0],
        ds[1],
        ds[2]
    ))
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable run dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("inside root").display().to_string();
                out.push((rel, fs::read(&path).expect("readable file")));
            }
        }
    }
    out.sort();
    out
}

fn determinism(tmp: &Path) -> Check {
    let suite = builtin_suite();
    let cfg = AgentConfig { reflection: true, ..AgentConfig::default() };
    let mut trees = Vec::new();
    for i in 0..2 {
        let grid = Grid::ReflectionRounds(1);
        let e = run_ablation(&grid, &suite, &cfg, &AgentContext::offline(), &[7]).map_err(|e| e.to_string())?;
        let dir = RunDir::create(&tmp.join(format!("run{i}")), "determinism", "fixed").map_err(|e| e.to_string())?;
        dir.write_experiment(&e).map_err(|e| e.to_string())?;
        trees.push(tree_bytes(&dir.root));
    }
    let names: Vec<&String> = trees[0].iter().map(|(n, _)| n).collect();
    ensure(trees[0].iter().any(|(n, _)| n.starts_with("decisions")), "no decision logs written")?;
    ensure(trees[0].iter().any(|(n, _)| n.starts_with("reflections")), "no reflection logs written")?;
    for ((n0, b0), (n1, b1)) in trees[0].iter().zip(&trees[1]) {
        ensure(n0 == n1 && b0 == b1, format!("{n0} differs between executions"))?;
    }
    ensure(trees[0].len() == trees[1].len(), "file sets differ")?;
    let bytes: usize = trees[0].iter().map(|(_, b)| b.len()).sum();
    Ok(format!("{} files ({bytes} bytes) byte-identical across two executions", names.len()))
}

fn offline_end_to_end() -> Check {
    let start = Instant::now();
    let suite = builtin_suite();
    ensure(suite.len() >= 5, "suite has fewer than 5 scenarios")?;
    let cfg = AgentConfig::default();
    let runs = run_benchmark(&suite, &cfg, &AgentContext::offline(), &[0, 1, 2]).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(runs.len() == suite.len() * 3, "missing runs")?;
    let decisions: usize = runs.iter().map(|r| r.decisions.len()).sum();
    ensure(decisions > 0 && runs.iter().all(|r| r.decisions.iter().all(|d| d.error.is_none())), "decision errors")?;
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    let mean = runs.iter().map(|r| r.result.ds).sum::<f64>() / runs.len() as f64;
    Ok(format!("{} scenarios x 3 seeds, {decisions} decisions, mean DS {mean:.4}, {secs:.2} s", suite.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("retrieval oracle equivalence", Box::new(retrieval_oracle)),
        ("cosine similarity numerics", Box::new(cosine_numerics)),
        ("critical-object rule equivalence", Box::new(perception_oracle)),
        ("controller numerics", Box::new(controller_numerics)),
        ("closed-loop tracking", Box::new(closed_loop_tracking)),
        ("metric identity", Box::new(metric_identity)),
        ("reflection improvement fixture", Box::new(reflection_fixture)),
        ("ablation trend fixtures", Box::new(|| ablation_trends(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
        ("end-to-end offline", Box::new(offline_end_to_end)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
