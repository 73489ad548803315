//! Deterministic 2D lane-graph traffic simulator.
//!
//! The ego follows a kinematic bicycle model; NPCs replay scripted speed profiles along
//! fixed paths. Each [`World::step`] reports the infractions that began during the step.

pub mod map;
pub mod route;
pub mod scenario;
pub mod world;

pub use map::{Lane, LaneGraph, LightColor, Phase, StopSign, TrafficLight};
pub use route::{densify_route, RouteError, RouteSpec, PATH_SPACING};
pub use scenario::{load_scenario, parse_scenario, Scenario, ScenarioError, ScenarioFile, SCENARIO_FORMAT_VERSION};
pub use world::{
    Actor, ActorKind, EgoState, InfractionEvent, InfractionKind, RouteLight, RouteStop, SimConfig, StaticProp, World,
    MAX_DT,
};

/// Physics step: 20 Hz.
pub const PHYSICS_DT: f64 = 0.05;
/// Physics ticks per decision (2 Hz decisions).
pub const TICKS_PER_DECISION: u64 = 10;
/// Physics ticks per reflection-queue sample (1 Hz).
pub const TICKS_PER_QUEUE_SAMPLE: u64 = 20;
