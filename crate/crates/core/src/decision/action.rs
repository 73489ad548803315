use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// High-level driving command issued at the decision rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetaAction {
    /// Accelerate.
    #[serde(rename = "AC")]
    Ac,
    /// Decelerate.
    #[serde(rename = "DC")]
    Dc,
    /// Keep the current target speed.
    #[serde(rename = "IDLE")]
    Idle,
    #[serde(rename = "STOP")]
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown meta-action '{0}' (expected AC, DC, IDLE or STOP)")]
pub struct UnknownAction(pub String);

impl MetaAction {
    pub const ALL: [MetaAction; 4] = [MetaAction::Ac, MetaAction::Dc, MetaAction::Idle, MetaAction::Stop];

    pub fn token(self) -> &'static str {
        match self {
            MetaAction::Ac => "AC",
            MetaAction::Dc => "DC",
            MetaAction::Idle => "IDLE",
            MetaAction::Stop => "STOP",
        }
    }

    /// Caution rank: AC < IDLE < DC < STOP.
    pub fn caution(self) -> u8 {
        match self {
            MetaAction::Ac => 0,
            MetaAction::Idle => 1,
            MetaAction::Dc => 2,
            MetaAction::Stop => 3,
        }
    }

    /// One step more cautious; STOP stays STOP.
    pub fn escalate(self) -> Self {
        match self {
            MetaAction::Ac => MetaAction::Idle,
            MetaAction::Idle => MetaAction::Dc,
            MetaAction::Dc | MetaAction::Stop => MetaAction::Stop,
        }
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for MetaAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().trim_matches(|c: char| c == '.' || c == '*' || c == '`' || c == '"');
        match t.to_ascii_uppercase().as_str() {
            "AC" | "ACCELERATE" => Ok(MetaAction::Ac),
            "DC" | "DECELERATE" => Ok(MetaAction::Dc),
            "IDLE" => Ok(MetaAction::Idle),
            "STOP" => Ok(MetaAction::Stop),
            _ => Err(UnknownAction(s.trim().to_string())),
        }
    }
}
