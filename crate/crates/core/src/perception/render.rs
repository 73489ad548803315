//! Text form of a scene description, one `<ref>…</ref><box>…</box>` line per object:
//!
//! ```text
//! <ref>In the front view, vehicle in ego_lane at 12.30 m, motion toward, id lead: the road user …</ref><box>(480,470),(520,630)</box>
//! ```

use super::{
    BoundingBox, CameraView, CriticalObject, LaneRelation, Motion, ObjectCategory, PerceptionError, SceneDescription,
    SpatialAttribute,
};

pub const NO_OBJECTS_TEXT: &str = "No critical objects are present in the current scene.";

pub fn render_description_text(d: &SceneDescription) -> String {
    let objects = d.sorted_objects();
    if objects.is_empty() {
        return NO_OBJECTS_TEXT.to_string();
    }
    objects.iter().map(|o| render_object(o)).collect::<Vec<_>>().join("\n")
}

fn render_object(o: &CriticalObject) -> String {
    let id = o.source_id.as_ref().map(|id| format!(", id {id}")).unwrap_or_default();
    let b = o.spatial.bbox;
    format!(
        "<ref>In the {} view, {} in {} at {:.2} m, motion {}{}: {}</ref><box>({},{}),({},{})</box>",
        o.spatial.view, o.category, o.spatial.lane, o.spatial.distance, o.motion, id, o.reason, b.x1, b.y1, b.x2, b.y2
    )
}

/// Parses text in the rendered format. Blank lines and the empty-scene sentence are
/// skipped; any other line must be a well-formed object line.
pub fn parse_description_text(text: &str, time: f64, ego_speed: f64) -> Result<SceneDescription, PerceptionError> {
    let mut objects = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == NO_OBJECTS_TEXT {
            continue;
        }
        objects.push(parse_object(line).map_err(|reason| PerceptionError::Parse { line: i + 1, reason })?);
    }
    Ok(SceneDescription { objects, time, ego_speed })
}

fn parse_object(line: &str) -> Result<CriticalObject, String> {
    let body = line.strip_prefix("<ref>").ok_or("missing <ref>")?;
    let (ref_part, box_part) = body.split_once("</ref>").ok_or("missing </ref>")?;
    let bbox = parse_box(box_part)?;
    let (head, reason) = ref_part.split_once(": ").ok_or("missing ': ' before the reason")?;
    let reason = reason.trim();
    if reason.is_empty() {
        return Err("empty reason".into());
    }
    let mut fields = head.split(", ");
    let view_field = fields.next().ok_or("missing view")?;
    let view = view_field
        .strip_prefix("In the ")
        .and_then(|v| v.strip_suffix(" view"))
        .and_then(CameraView::parse)
        .ok_or_else(|| format!("bad view '{view_field}'"))?;

    let what = fields.next().ok_or("missing object clause")?;
    let (category, rest) = what.split_once(" in ").ok_or_else(|| format!("bad object clause '{what}'"))?;
    let category = ObjectCategory::parse(category).ok_or_else(|| format!("unknown category '{category}'"))?;
    let (lane, dist) = rest.split_once(" at ").ok_or_else(|| format!("bad object clause '{what}'"))?;
    let lane = LaneRelation::parse(lane).ok_or_else(|| format!("unknown lane relation '{lane}'"))?;
    let distance: f64 = dist
        .strip_suffix(" m")
        .and_then(|d| d.parse().ok())
        .filter(|d: &f64| d.is_finite() && *d >= 0.0)
        .ok_or_else(|| format!("bad distance '{dist}'"))?;

    let motion_field = fields.next().ok_or("missing motion")?;
    let motion = motion_field
        .strip_prefix("motion ")
        .and_then(Motion::parse)
        .ok_or_else(|| format!("bad motion '{motion_field}'"))?;

    let source_id = match fields.next() {
        Some(f) => Some(f.strip_prefix("id ").ok_or_else(|| format!("unexpected field '{f}'"))?.to_string()),
        None => None,
    };
    if let Some(extra) = fields.next() {
        return Err(format!("unexpected field '{extra}'"));
    }
    Ok(CriticalObject {
        category,
        spatial: SpatialAttribute { view, bbox, lane, distance },
        motion,
        reason: reason.to_string(),
        source_id,
        position: None,
    })
}

fn parse_box(s: &str) -> Result<BoundingBox, String> {
    let inner = s
        .trim()
        .strip_prefix("<box>")
        .and_then(|r| r.strip_suffix("</box>"))
        .ok_or("missing <box>…</box>")?;
    let nums: Vec<u16> = inner
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u16>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match nums[..] {
        [x1, y1, x2, y2] if x1.max(y1).max(x2).max(y2) <= 1000 => Ok(BoundingBox { x1, y1, x2, y2 }),
        _ => Err(format!("bad box '{inner}'")),
    }
}
