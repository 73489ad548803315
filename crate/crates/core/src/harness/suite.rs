use std::path::Path;

use super::HarnessError;
use crate::sim::{load_scenario, parse_scenario, Scenario};

/// Scenario files bundled with the crate, in suite order.
pub const BUILTIN_SCENARIOS: [(&str, &str); 7] = [
    ("straight_clear", include_str!("../../scenarios/straight_clear.toml")),
    ("red_light", include_str!("../../scenarios/red_light.toml")),
    ("lead_brake", include_str!("../../scenarios/lead_brake.toml")),
    ("follow_slow", include_str!("../../scenarios/follow_slow.toml")),
    ("ped_crossing", include_str!("../../scenarios/ped_crossing.toml")),
    ("stop_sign", include_str!("../../scenarios/stop_sign.toml")),
    ("left_turn", include_str!("../../scenarios/left_turn.toml")),
];

pub fn builtin_suite() -> Vec<Scenario> {
    BUILTIN_SCENARIOS
        .iter()
        .map(|(name, text)| parse_scenario(text).unwrap_or_else(|e| panic!("bundled scenario {name} is invalid: {e}")))
        .collect()
}

/// Loads every `*.toml` in `dir`, ordered by file name.
pub fn load_suite(dir: &Path) -> Result<Vec<Scenario>, HarnessError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        out.push(load_scenario(&p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?);
    }
    let mut ids: Vec<_> = out.iter().map(|s| s.id()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(HarnessError::Config(format!("duplicate scenario id '{}'", w[0])));
    }
    Ok(out)
}
