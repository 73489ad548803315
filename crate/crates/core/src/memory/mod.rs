//! Experience memory: compressed scene captions, text encoders, and a bank of
//! (description, reasoning, decision) samples queried by cosine similarity.

mod bank;
mod encoder;
mod persist;

use thiserror::Error;

pub use bank::{ExperienceSample, InsertOutcome, MemoryBank, Provenance, Retrieved, StoredSample, DEFAULT_DEDUP_THRESHOLD};
pub use encoder::{cosine_similarity, l2_normalize, EncoderError, HashEncoder, TextEncoder};
pub use persist::{load_bank, save_bank, LoadMode, BANK_FORMAT_VERSION};

use crate::perception::SceneDescription;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("embedding dimension mismatch: bank uses {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("bank file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("bank file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("bank file format_version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("bank was built with encoder '{file}' but '{configured}' is configured")]
    EncoderMismatch { file: String, configured: String },
}

/// Width of the distance buckets used in captions, meters.
pub const DISTANCE_BUCKET: f64 = 5.0;

pub fn distance_bucket(d: f64) -> String {
    let lo = (d.max(0.0) / DISTANCE_BUCKET).floor() * DISTANCE_BUCKET;
    format!("{}-{}m", lo as i64, (lo + DISTANCE_BUCKET) as i64)
}

/// `category|lane|bucket|motion` per object, nearest first, joined with `;`; "none" when empty.
pub fn compress_caption(d: &SceneDescription) -> String {
    let objects = d.sorted_objects();
    if objects.is_empty() {
        return "none".to_string();
    }
    objects
        .iter()
        .map(|o| format!("{}|{}|{}|{}", o.category, o.spatial.lane, distance_bucket(o.spatial.distance), o.motion))
        .collect::<Vec<_>>()
        .join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{BoundingBox, CameraView, CriticalObject, LaneRelation, Motion, ObjectCategory, SpatialAttribute};

    pub(crate) fn object(category: ObjectCategory, lane: LaneRelation, distance: f64, motion: Motion) -> CriticalObject {
        CriticalObject {
            category,
            spatial: SpatialAttribute {
                view: CameraView::Front,
                bbox: BoundingBox { x1: 0, y1: 0, x2: 1, y2: 1 },
                lane,
                distance,
            },
            motion,
            reason: "r".into(),
            source_id: None,
            position: None,
        }
    }

    #[test]
    fn caption_cases() {
        assert_eq!(compress_caption(&SceneDescription::empty(0.0, 0.0)), "none");
        let one = SceneDescription {
            objects: vec![object(ObjectCategory::Vehicle, LaneRelation::EgoLane, 12.3, Motion::Toward)],
            ..Default::default()
        };
        assert_eq!(compress_caption(&one), "vehicle|ego_lane|10-15m|toward");
        let two = SceneDescription {
            objects: vec![
                object(ObjectCategory::Vehicle, LaneRelation::LeftLane, 30.0, Motion::Away),
                object(ObjectCategory::Pedestrian, LaneRelation::Roadside, 8.0, Motion::CrossingLeft),
            ],
            ..Default::default()
        };
        assert_eq!(compress_caption(&two), "pedestrian|roadside|5-10m|crossing_left;vehicle|left_lane|30-35m|away");
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(distance_bucket(0.0), "0-5m");
        assert_eq!(distance_bucket(4.999), "0-5m");
        assert_eq!(distance_bucket(5.0), "5-10m");
    }
}
