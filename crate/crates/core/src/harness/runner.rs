use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, AgentContext, DecisionMode, HeuristicKind};
use super::metrics::{RouteResult, RouteStatus};
use super::HarnessError;
use crate::control::{meta_to_target_speed, ControlTrace, Controller};
use crate::decision::{AnalyticProcess, Decision, HeuristicBackend, HeuristicProcess, MetaAction, ProcessKind, Timing};
use crate::memory::{compress_caption, ExperienceSample, Provenance};
use crate::perception::{describe_scene, render_description_text, SceneDescription};
use crate::reflection::{reflect, MemoryQueue, QueueFrame, ReflectionLog};
use crate::sim::{EgoState, InfractionKind, Scenario, World, PHYSICS_DT, TICKS_PER_DECISION, TICKS_PER_QUEUE_SAMPLE};

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: f64,
    pub tick: u64,
    pub scene: String,
    pub caption: String,
    pub k: usize,
    pub shots: usize,
    pub exemplar_ids: Vec<u64>,
    pub reasoning: String,
    pub action: MetaAction,
    pub process: ProcessKind,
    pub latency_ms: f64,
    pub target_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Everything a route produces.
#[derive(Debug, Clone)]
pub struct RouteRun {
    pub result: RouteResult,
    pub decisions: Vec<DecisionRecord>,
    pub trace: Vec<ControlTrace>,
    pub reflections: Vec<ReflectionLog>,
    /// Analytic (D, R, S) samples taken at the queue cadence.
    pub samples: Vec<ExperienceSample>,
}

/// Sim-time limit: the scenario's own, else three times the traversal time at `v_max`.
pub fn route_timeout(scenario: &Scenario, v_max: f64) -> f64 {
    scenario.file.timeout.unwrap_or(3.0 * scenario.route.length / v_max)
}

#[derive(Clone)]
enum Decider {
    Analytic(AnalyticProcess),
    Heuristic(HeuristicProcess),
}

impl Decider {
    fn build(cfg: &AgentConfig, ctx: &AgentContext) -> Option<Self> {
        match cfg.mode {
            DecisionMode::Hold => None,
            DecisionMode::Analytic => {
                let mut p = AnalyticProcess::new(ctx.analytic.clone(), ctx.prompts.clone());
                p.timing = cfg.timing;
                Some(Decider::Analytic(p))
            }
            DecisionMode::Heuristic => {
                let backend = match cfg.heuristic {
                    HeuristicKind::Builtin => HeuristicBackend::Builtin(cfg.policy.clone()),
                    HeuristicKind::Chat => HeuristicBackend::Chat(ctx.heuristic.clone()),
                };
                let mut p = HeuristicProcess::new(ctx.bank.clone(), cfg.k, backend, ctx.prompts.clone());
                p.timing = cfg.timing;
                p.max_prompt_chars = cfg.max_prompt_chars;
                Some(Decider::Heuristic(p))
            }
        }
    }

    fn decide(&self, d: &SceneDescription, ego: &EgoState) -> Decision {
        match self {
            Decider::Analytic(p) => p.decide(d, ego),
            Decider::Heuristic(p) => p.decide(d, ego),
        }
    }
}

struct Pending {
    tick: u64,
    scene: SceneDescription,
}

/// Runs one route closed-loop: perception and a decision every 0.5 s, control and physics
/// every 50 ms, the history queue every second. Stops on completion, collision, route
/// deviation or timeout. In deterministic mode the simulator waits for each decision;
/// in wall-clock mode decisions run on a worker thread while the simulator keeps real time
/// with the last target speed latched.
pub fn run_route(scenario: &Scenario, cfg: &AgentConfig, ctx: &AgentContext, seed: u64) -> Result<RouteRun, HarnessError> {
    cfg.validate()?;
    let decider = Decider::build(cfg, ctx);
    match (cfg.timing, decider) {
        (Timing::WallClock, Some(decider)) => thread::scope(|s| {
            let (req_tx, req_rx) = mpsc::channel::<(SceneDescription, EgoState)>();
            let (resp_tx, resp_rx) = mpsc::channel::<Decision>();
            s.spawn(move || {
                for (d, ego) in req_rx {
                    if resp_tx.send(decider.decide(&d, &ego)).is_err() {
                        break;
                    }
                }
            });
            let mut source = DecisionSource::Async { tx: req_tx, rx: resp_rx };
            simulate(scenario, cfg, ctx, seed, &mut source)
        }),
        (_, decider) => {
            let mut source = match decider {
                Some(d) => DecisionSource::Sync(d),
                None => DecisionSource::Hold,
            };
            simulate(scenario, cfg, ctx, seed, &mut source)
        }
    }
}

enum DecisionSource {
    Hold,
    Sync(Decider),
    Async { tx: mpsc::Sender<(SceneDescription, EgoState)>, rx: mpsc::Receiver<Decision> },
}

struct Loop<'a> {
    cfg: &'a AgentConfig,
    world: World,
    queue: MemoryQueue,
    decisions: Vec<DecisionRecord>,
    samples: Vec<ExperienceSample>,
    latest: Option<(SceneDescription, Decision)>,
}

impl Loop<'_> {
    fn apply(&mut self, tick: u64, scene: SceneDescription, decision: Decision) {
        let target = meta_to_target_speed(decision.action, self.world.ego.target_speed, self.cfg.control.v_max);
        self.world.ego.target_speed = target;
        self.decisions.push(DecisionRecord {
            t: scene.time,
            tick,
            scene: render_description_text(&scene),
            caption: compress_caption(&scene),
            k: if self.cfg.mode == DecisionMode::Heuristic { self.cfg.k } else { 0 },
            shots: decision.shots,
            exemplar_ids: decision.exemplar_ids.clone(),
            reasoning: decision.reasoning.clone(),
            action: decision.action,
            process: decision.process,
            latency_ms: decision.latency_ms,
            target_speed: target,
            error: decision.error.clone(),
        });
        self.latest = Some((scene, decision));
    }

    fn record_frame(&mut self) {
        let Some((scene, decision)) = &self.latest else { return };
        let frame = QueueFrame {
            time: self.world.time,
            description: scene.clone(),
            reasoning: decision.reasoning.clone(),
            action: decision.action,
            target_speed: self.world.ego.target_speed,
            steer: self.world.ego.steer,
        };
        if let Err(e) = self.queue.record(frame) {
            log::warn!("{}: {e}", self.world.scenario_id);
            return;
        }
        if decision.process == ProcessKind::Analytic {
            self.samples.push(ExperienceSample {
                description: scene.clone(),
                reasoning: decision.reasoning.clone(),
                action: decision.action,
                provenance: Provenance::Analytic,
                source: self.world.scenario_id.clone(),
                town: self.world.town.clone(),
                timestamp: scene.time,
            });
        }
    }
}

fn simulate(
    scenario: &Scenario,
    cfg: &AgentConfig,
    ctx: &AgentContext,
    seed: u64,
    source: &mut DecisionSource,
) -> Result<RouteRun, HarnessError> {
    let started = Instant::now();
    let timeout = route_timeout(scenario, cfg.control.v_max);
    let mut controller = Controller::new(cfg.control.clone());
    let mut lp = Loop {
        cfg,
        world: World::new(scenario, seed, cfg.sim.clone()),
        queue: MemoryQueue::new(),
        decisions: Vec::new(),
        samples: Vec::new(),
        latest: None,
    };
    let mut trace = Vec::new();
    let mut events = Vec::new();
    let mut reflections = Vec::new();
    let mut pending: Option<Pending> = None;

    let status = loop {
        if lp.world.route_complete() {
            break RouteStatus::Completed;
        }
        if lp.world.time >= timeout - 1e-9 {
            break RouteStatus::Timeout;
        }
        let tick = lp.world.ticks;

        if let DecisionSource::Async { rx, .. } = source {
            if let Ok(decision) = rx.try_recv() {
                let p = pending.take().expect("a reply implies a request in flight");
                lp.apply(p.tick, p.scene, decision);
            }
        }
        if tick.is_multiple_of(TICKS_PER_DECISION) {
            match source {
                DecisionSource::Hold => {}
                DecisionSource::Sync(decider) => {
                    let scene = describe_scene(&lp.world, &cfg.perception);
                    let decision = decider.decide(&scene, &lp.world.ego);
                    lp.apply(tick, scene, decision);
                }
                DecisionSource::Async { tx, .. } => {
                    if pending.is_none() {
                        let scene = describe_scene(&lp.world, &cfg.perception);
                        tx.send((scene.clone(), lp.world.ego.clone()))
                            .map_err(|_| HarnessError::Config("decision worker stopped".into()))?;
                        pending = Some(Pending { tick, scene });
                    }
                }
            }
        }
        if tick.is_multiple_of(TICKS_PER_QUEUE_SAMPLE) {
            lp.record_frame();
        }

        let target_speed = lp.world.ego.target_speed;
        let step = controller.step(&lp.world.ego, &lp.world.route, target_speed, lp.world.time)?;
        let new_events = lp.world.step(&step.signal, PHYSICS_DT);
        trace.push(step);

        if let DecisionSource::Async { .. } = source {
            let due = started + Duration::from_secs_f64(lp.world.time);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }

        let mut terminal = None;
        for event in new_events {
            log::debug!("{} seed {seed}: {} at t = {:.2}", scenario.id(), event.kind, event.time);
            if cfg.reflection {
                match reflect(&lp.queue, &event, ctx.analytic.as_ref(), &ctx.prompts) {
                    Ok(log) => reflections.push(log),
                    Err(e) => log::warn!("{}: reflection skipped: {e}", scenario.id()),
                }
            }
            if event.kind.is_collision() {
                terminal.get_or_insert(RouteStatus::Collision);
            } else if event.kind == InfractionKind::RouteDeviation {
                terminal.get_or_insert(RouteStatus::Deviation);
            }
            events.push(event);
        }
        if let Some(status) = terminal {
            break status;
        }
    };

    let mut result = RouteResult::new(
        scenario.id().to_string(),
        scenario.town().to_string(),
        seed,
        lp.world.route_progress(),
        events,
        &cfg.penalties,
    );
    result.decisions = lp.decisions.len();
    result.status = status;
    result.sim_time = lp.world.time;
    result.wall_time_s = started.elapsed().as_secs_f64();
    Ok(RouteRun { result, decisions: lp.decisions, trace, reflections, samples: lp.samples })
}
