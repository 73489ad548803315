use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{compress_caption, cosine_similarity, MemoryError, TextEncoder};
use crate::decision::MetaAction;
use crate::perception::SceneDescription;

pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Reflection,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Reflection => "reflection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceSample {
    pub description: SceneDescription,
    pub reasoning: String,
    pub action: MetaAction,
    pub provenance: Provenance,
    /// Scenario the sample was recorded on.
    pub source: String,
    pub town: String,
    /// Sim time of the frame, seconds.
    pub timestamp: f64,
}

impl ExperienceSample {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if self.reasoning.trim().is_empty() {
            return Err(MemoryError::InvalidSample("reasoning is empty".into()));
        }
        Ok(())
    }

    pub fn caption(&self) -> String {
        compress_caption(&self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredSample {
    /// Sequential within a bank; insertion order.
    pub id: u64,
    pub sample: ExperienceSample,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InsertOutcome {
    Inserted { id: u64 },
    Skipped { duplicate_of: u64, similarity: f64 },
}

impl InsertOutcome {
    pub fn inserted(&self) -> bool {
        matches!(self, InsertOutcome::Inserted { .. })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Retrieved<'a> {
    pub entry: &'a StoredSample,
    pub similarity: f64,
}

/// Samples plus embeddings behind a shared pointer: cloning a bank is a cheap snapshot and
/// inserting into a shared bank copies on write.
#[derive(Clone)]
pub struct MemoryBank {
    encoder: Arc<dyn TextEncoder>,
    entries: Arc<Vec<StoredSample>>,
    next_id: u64,
    dedup: Option<f64>,
}

impl fmt::Debug for MemoryBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryBank")
            .field("encoder", &self.encoder.id())
            .field("len", &self.entries.len())
            .field("dedup", &self.dedup)
            .finish()
    }
}

impl PartialEq for MemoryBank {
    fn eq(&self, other: &Self) -> bool {
        self.encoder.id() == other.encoder.id() && self.entries == other.entries && self.next_id == other.next_id
    }
}

fn rank(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl MemoryBank {
    /// Empty bank with the default near-duplicate rule.
    pub fn new(encoder: Arc<dyn TextEncoder>) -> Self {
        Self { encoder, entries: Arc::new(Vec::new()), next_id: 0, dedup: Some(DEFAULT_DEDUP_THRESHOLD) }
    }

    /// `None` disables near-duplicate skipping.
    pub fn with_dedup(mut self, threshold: Option<f64>) -> Self {
        self.dedup = threshold;
        self
    }

    pub fn set_dedup(&mut self, threshold: Option<f64>) {
        self.dedup = threshold;
    }

    pub fn dedup(&self) -> Option<f64> {
        self.dedup
    }

    pub fn encoder(&self) -> &Arc<dyn TextEncoder> {
        &self.encoder
    }

    pub fn encoder_id(&self) -> &str {
        self.encoder.id()
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StoredSample] {
        &self.entries
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn get(&self, id: u64) -> Option<&StoredSample> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn embed_scene(&self, d: &SceneDescription) -> Result<Vec<f64>, MemoryError> {
        Ok(self.encoder.embed(&compress_caption(d))?)
    }

    pub fn insert(&mut self, sample: ExperienceSample) -> Result<InsertOutcome, MemoryError> {
        sample.validate()?;
        let embedding = self.embed_scene(&sample.description)?;
        self.insert_embedded(sample, embedding)
    }

    /// Inserts with a precomputed embedding (must match the bank's encoder dimension).
    pub fn insert_embedded(&mut self, sample: ExperienceSample, embedding: Vec<f64>) -> Result<InsertOutcome, MemoryError> {
        sample.validate()?;
        if embedding.len() != self.dim() {
            return Err(MemoryError::Dimension { expected: self.dim(), found: embedding.len() });
        }
        if embedding.iter().any(|x| !x.is_finite()) {
            return Err(MemoryError::InvalidSample("embedding has non-finite components".into()));
        }
        if let Some(threshold) = self.dedup {
            for e in self.entries.iter().filter(|e| e.sample.action == sample.action) {
                let sim = cosine_similarity(&e.embedding, &embedding)?;
                if sim > threshold {
                    return Ok(InsertOutcome::Skipped { duplicate_of: e.id, similarity: sim });
                }
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        Arc::make_mut(&mut self.entries).push(StoredSample { id, sample, embedding });
        Ok(InsertOutcome::Inserted { id })
    }

    /// The `min(k, M)` most similar entries, descending; ties go to the earlier insertion.
    pub fn query_top_k(&self, query: &[f64], k: usize) -> Result<Vec<Retrieved<'_>>, MemoryError> {
        if query.len() != self.dim() {
            return Err(MemoryError::Dimension { expected: self.dim(), found: query.len() });
        }
        if k == 0 || self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| Ok((cosine_similarity(query, &e.embedding)?, i)))
            .collect::<Result<_, MemoryError>>()?;
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank);
        Ok(scored.into_iter().map(|(similarity, i)| Retrieved { entry: &self.entries[i], similarity }).collect())
    }

    pub fn query_scene(&self, d: &SceneDescription, k: usize) -> Result<Vec<Retrieved<'_>>, MemoryError> {
        if k == 0 || self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embed_scene(d)?;
        self.query_top_k(&q, k)
    }

    /// Even subsample of `n` entries at indices `floor(i·M/n)`, keeping ids and order.
    pub fn subsample(&self, n: usize) -> MemoryBank {
        let m = self.entries.len();
        if n >= m {
            return self.clone();
        }
        let picked: Vec<StoredSample> = (0..n).map(|i| self.entries[i * m / n].clone()).collect();
        MemoryBank { entries: Arc::new(picked), ..self.clone() }
    }

    /// Entries satisfying `keep`, ids and order preserved.
    pub fn filter(&self, keep: impl Fn(&StoredSample) -> bool) -> MemoryBank {
        let picked: Vec<StoredSample> = self.entries.iter().filter(|e| keep(e)).cloned().collect();
        MemoryBank { entries: Arc::new(picked), ..self.clone() }
    }

    pub(crate) fn from_parts(encoder: Arc<dyn TextEncoder>, entries: Vec<StoredSample>, dedup: Option<f64>) -> Self {
        let next_id = entries.iter().map(|e| e.id + 1).max().unwrap_or(0);
        Self { encoder, entries: Arc::new(entries), next_id, dedup }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::memory::tests::object;
    use crate::memory::HashEncoder;
    use crate::perception::{LaneRelation, Motion, ObjectCategory};

    pub(crate) fn sample(distance: f64, action: MetaAction) -> ExperienceSample {
        ExperienceSample {
            description: SceneDescription {
                objects: vec![object(ObjectCategory::Vehicle, LaneRelation::EgoLane, distance, Motion::Toward)],
                time: 0.0,
                ego_speed: 4.0,
            },
            reasoning: "lead vehicle ahead".into(),
            action,
            provenance: Provenance::Analytic,
            source: "s".into(),
            town: "t".into(),
            timestamp: 0.0,
        }
    }

    fn bank() -> MemoryBank {
        MemoryBank::new(Arc::new(HashEncoder::default()))
    }

    #[test]
    fn insert_and_dedup() {
        let mut b = bank();
        assert!(b.insert(sample(12.0, MetaAction::Dc)).unwrap().inserted());
        assert_eq!(b.len(), 1);
        assert_eq!(b.insert(sample(12.0, MetaAction::Dc)).unwrap(), InsertOutcome::Skipped { duplicate_of: 0, similarity: 1.0 });
        assert_eq!(b.len(), 1);
        assert!(b.insert(sample(12.0, MetaAction::Stop)).unwrap().inserted());
        assert_eq!(b.len(), 2);
        let mut off = bank().with_dedup(None);
        off.insert(sample(12.0, MetaAction::Dc)).unwrap();
        off.insert(sample(12.0, MetaAction::Dc)).unwrap();
        assert_eq!(off.len(), 2);
    }

    #[test]
    fn empty_reasoning_rejected() {
        let mut s = sample(1.0, MetaAction::Ac);
        s.reasoning = "  ".into();
        assert!(matches!(bank().insert(s), Err(MemoryError::InvalidSample(_))));
    }

    #[test]
    fn query_edge_cases() {
        let mut b = bank().with_dedup(None);
        let q = b.embed_scene(&sample(12.0, MetaAction::Dc).description).unwrap();
        assert!(b.query_top_k(&q, 3).unwrap().is_empty());
        b.insert(sample(30.0, MetaAction::Ac)).unwrap();
        b.insert(sample(12.0, MetaAction::Dc)).unwrap();
        assert!(b.query_top_k(&q, 0).unwrap().is_empty());
        let r = b.query_top_k(&q, 5).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].entry.id, 1);
        assert!((r[0].similarity - 1.0).abs() < 1e-12);
        assert!(b.query_top_k(&[1.0], 1).is_err());
    }

    #[test]
    fn ties_prefer_earlier_insertion() {
        let mut b = bank().with_dedup(None);
        for a in [MetaAction::Ac, MetaAction::Dc, MetaAction::Idle] {
            b.insert(sample(12.0, a)).unwrap();
        }
        let q = b.embed_scene(&sample(12.0, MetaAction::Ac).description).unwrap();
        let ids: Vec<u64> = b.query_top_k(&q, 2).unwrap().iter().map(|r| r.entry.id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn even_subsample_every_second() {
        let mut b = bank().with_dedup(None);
        for i in 0..20 {
            b.insert(sample(i as f64, MetaAction::Idle)).unwrap();
        }
        let ids: Vec<u64> = b.subsample(10).entries().iter().map(|e| e.id).collect();
        assert_eq!(ids, (0..10).map(|i| 2 * i).collect::<Vec<_>>());
        assert_eq!(b.subsample(0).len(), 0);
        assert_eq!(b.subsample(20).len(), 20);
    }

    #[test]
    fn snapshot_isolated_from_inserts() {
        let mut b = bank().with_dedup(None);
        b.insert(sample(1.0, MetaAction::Idle)).unwrap();
        let snap = b.clone();
        b.insert(sample(2.0, MetaAction::Idle)).unwrap();
        assert_eq!((snap.len(), b.len()), (1, 2));
    }
}
