use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sim::{InfractionEvent, InfractionKind};

/// Multiplicative penalty per infraction kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyTable {
    pub collision_pedestrian: f64,
    pub collision_vehicle: f64,
    pub collision_static: f64,
    pub red_light: f64,
    pub stop_sign: f64,
    /// Leaving the route ends it; progress already caps the score, so no extra factor.
    pub route_deviation: f64,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        Self {
            collision_pedestrian: 0.50,
            collision_vehicle: 0.60,
            collision_static: 0.65,
            red_light: 0.70,
            stop_sign: 0.80,
            route_deviation: 1.0,
        }
    }
}

impl PenaltyTable {
    pub fn factor(&self, kind: InfractionKind) -> f64 {
        match kind {
            InfractionKind::CollisionPedestrian => self.collision_pedestrian,
            InfractionKind::CollisionVehicle => self.collision_vehicle,
            InfractionKind::CollisionStatic => self.collision_static,
            InfractionKind::RedLight => self.red_light,
            InfractionKind::StopSign => self.stop_sign,
            InfractionKind::RouteDeviation => self.route_deviation,
        }
    }

    pub fn factor_by_name(&self, name: &str) -> Result<f64, HarnessError> {
        InfractionKind::parse(name)
            .map(|k| self.factor(k))
            .ok_or_else(|| HarnessError::UnknownInfraction(name.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        for k in InfractionKind::ALL {
            let f = self.factor(k);
            if !(f > 0.0 && f <= 1.0) {
                return Err(HarnessError::Config(format!("penalty for {k} must be in (0, 1], got {f}")));
            }
        }
        Ok(())
    }
}

/// Infraction score: product of the penalty factors of all events; 1.0 when there are none.
pub fn compute_is(events: &[InfractionEvent], table: &PenaltyTable) -> f64 {
    events.iter().map(|e| table.factor(e.kind)).product()
}

/// As [`compute_is`], for event kinds given by name.
pub fn compute_is_named<S: AsRef<str>>(kinds: &[S], table: &PenaltyTable) -> Result<f64, HarnessError> {
    kinds.iter().map(|k| table.factor_by_name(k.as_ref())).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteStatus {
    Completed,
    Collision,
    Deviation,
    Timeout,
}

impl RouteStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteStatus::Completed => "completed",
            RouteStatus::Collision => "collision",
            RouteStatus::Deviation => "deviation",
            RouteStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResult {
    pub route_id: String,
    pub town: String,
    pub seed: u64,
    pub rc: f64,
    pub is: f64,
    /// Always exactly `rc * is`.
    pub ds: f64,
    pub events: Vec<InfractionEvent>,
    pub decisions: usize,
    pub status: RouteStatus,
    pub sim_time: f64,
    pub wall_time_s: f64,
}

impl RouteResult {
    pub fn new(
        route_id: String,
        town: String,
        seed: u64,
        rc: f64,
        events: Vec<InfractionEvent>,
        table: &PenaltyTable,
    ) -> Self {
        let is = compute_is(&events, table);
        Self {
            route_id,
            town,
            seed,
            rc,
            is,
            ds: rc * is,
            events,
            decisions: 0,
            status: RouteStatus::Completed,
            sim_time: 0.0,
            wall_time_s: 0.0,
        }
    }

    pub fn count(&self, kind: InfractionKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn counts(&self) -> BTreeMap<InfractionKind, usize> {
        InfractionKind::ALL.into_iter().map(|k| (k, self.count(k))).collect()
    }
}

/// Mean and sample standard deviation of a series.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

/// Per-route scores averaged across routes and seeds. DS is the mean of per-route DS,
/// not the product of mean RC and mean IS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub routes: usize,
    pub ds: Stat,
    pub rc: Stat,
    pub is: Stat,
}

impl Aggregate {
    pub fn of(results: &[RouteResult]) -> Self {
        let col = |f: fn(&RouteResult) -> f64| results.iter().map(f).collect::<Vec<_>>();
        Self {
            routes: results.len(),
            ds: Stat::of(&col(|r| r.ds)),
            rc: Stat::of(&col(|r| r.rc)),
            is: Stat::of(&col(|r| r.is)),
        }
    }
}
