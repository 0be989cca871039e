//! Scene-graph data model: vocabulary, mask tubes, relation triplets and the
//! video-level container, plus validation and relation canonicalization.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rle::BinaryMask;
use crate::span::{Frame, TimeSpan};

pub type EntityId = u32;
pub type ClassId = u32;
pub type PredicateId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassKind {
    Thing,
    Stuff,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectClass {
    pub name: String,
    pub kind: ClassKind,
}

/// Object and predicate class lists. A class id is its position in the list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr")]
pub struct Vocabulary {
    object_classes: Vec<ObjectClass>,
    predicate_classes: Vec<String>,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    object_classes: Vec<ObjectClass>,
    predicate_classes: Vec<String>,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        Vocabulary::new(r.object_classes, r.predicate_classes)
    }
}

/// Object class count of the released dataset vocabulary.
pub const DEFAULT_OBJECT_CLASSES: usize = 126;
/// Predicate class count of the released dataset vocabulary.
pub const DEFAULT_PREDICATE_CLASSES: usize = 57;

impl Vocabulary {
    pub fn new(object_classes: Vec<ObjectClass>, predicate_classes: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &object_classes {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Config(format!("duplicate object class name {:?}", c.name)));
            }
        }
        let mut seen = HashSet::new();
        for p in &predicate_classes {
            if !seen.insert(p.as_str()) {
                return Err(Error::Config(format!("duplicate predicate class name {p:?}")));
            }
        }
        Ok(Vocabulary { object_classes, predicate_classes })
    }

    /// Placeholder vocabulary with generated names: `object_###` classes (the
    /// last `stuff` of them marked as stuff) and `predicate_##` predicates.
    pub fn placeholder(objects: usize, stuff: usize, predicates: usize) -> Self {
        let stuff_from = objects.saturating_sub(stuff);
        let object_classes = (0..objects)
            .map(|i| ObjectClass {
                name: format!("object_{i:03}"),
                kind: if i >= stuff_from { ClassKind::Stuff } else { ClassKind::Thing },
            })
            .collect();
        let predicate_classes = (0..predicates).map(|i| format!("predicate_{i:02}")).collect();
        Vocabulary { object_classes, predicate_classes }
    }

    /// Placeholder vocabulary sized like the released dataset (126 object
    /// classes, 57 predicates). Class names are not published with the sizes,
    /// so every object class is a generated thing class.
    pub fn default_sized() -> Self {
        Self::placeholder(DEFAULT_OBJECT_CLASSES, 0, DEFAULT_PREDICATE_CLASSES)
    }

    pub fn object_classes(&self) -> &[ObjectClass] {
        &self.object_classes
    }

    pub fn predicate_classes(&self) -> &[String] {
        &self.predicate_classes
    }

    pub fn num_objects(&self) -> usize {
        self.object_classes.len()
    }

    pub fn num_predicates(&self) -> usize {
        self.predicate_classes.len()
    }

    pub fn kind(&self, class: ClassId) -> Option<ClassKind> {
        self.object_classes.get(class as usize).map(|c| c.kind)
    }

    pub fn is_stuff(&self, class: ClassId) -> bool {
        self.kind(class) == Some(ClassKind::Stuff)
    }
}

/// Video geometry. Pixel values are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub num_frames: u32,
    pub height: u32,
    pub width: u32,
    pub fps: f64,
}

impl VideoMeta {
    pub fn new(video_id: impl Into<String>, num_frames: u32, height: u32, width: u32) -> Result<Self> {
        if num_frames == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "video geometry must be positive, got T={num_frames} H={height} W={width}"
            )));
        }
        Ok(VideoMeta { video_id: video_id.into(), num_frames, height, width, fps: 0.0 })
    }
}

/// One entity tracked through the video: a class label and its per-frame masks.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTube {
    pub entity_id: EntityId,
    pub class_id: ClassId,
    pub is_thing: bool,
    pub frames: BTreeMap<Frame, BinaryMask>,
    /// Class confidence; 1.0 for ground truth.
    pub score: f64,
}

impl MaskTube {
    pub fn new(entity_id: EntityId, class_id: ClassId) -> Self {
        MaskTube { entity_id, class_id, is_thing: true, frames: BTreeMap::new(), score: 1.0 }
    }

    pub fn mask(&self, frame: Frame) -> Option<&BinaryMask> {
        self.frames.get(&frame)
    }

    /// Frames on which the tube has a non-empty mask.
    pub fn visible_frames(&self) -> impl Iterator<Item = Frame> + '_ {
        self.frames.iter().filter(|(_, m)| !m.is_empty()).map(|(&f, _)| f)
    }
}

/// A subject–predicate–object relation holding over a scattered span.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationTriplet {
    pub subject_id: EntityId,
    pub object_id: EntityId,
    pub predicate_id: PredicateId,
    pub span: TimeSpan,
    pub score: f64,
}

impl RelationTriplet {
    pub fn new(
        subject_id: EntityId,
        object_id: EntityId,
        predicate_id: PredicateId,
        span: TimeSpan,
        score: f64,
    ) -> Result<Self> {
        if subject_id == object_id {
            return Err(Error::invalid(format!("relation links entity {subject_id} to itself")));
        }
        if span.is_empty() {
            return Err(Error::invalid("relation span is empty"));
        }
        Ok(RelationTriplet { subject_id, object_id, predicate_id, span, score })
    }

    pub fn key(&self) -> (EntityId, EntityId, PredicateId) {
        (self.subject_id, self.object_id, self.predicate_id)
    }
}

/// Video-level panoptic scene graph: tubes plus relations between them.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub meta: VideoMeta,
    pub tubes: Vec<MaskTube>,
    pub relations: Vec<RelationTriplet>,
}

impl SceneGraph {
    pub fn new(meta: VideoMeta) -> Self {
        SceneGraph { meta, tubes: Vec::new(), relations: Vec::new() }
    }

    pub fn tube(&self, id: EntityId) -> Option<&MaskTube> {
        self.tubes.iter().find(|t| t.entity_id == id)
    }

    pub fn tube_index(&self) -> HashMap<EntityId, &MaskTube> {
        self.tubes.iter().map(|t| (t.entity_id, t)).collect()
    }
}

/// A broken scene-graph invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateEntity { entity: EntityId },
    Overlap { frame: Frame, first: EntityId, second: EntityId },
    DanglingEndpoint { relation: usize, entity: EntityId },
    SelfRelation { relation: usize, entity: EntityId },
    EmptySpan { relation: usize },
    SpanOutOfRange { relation: usize, end: Frame },
    FrameOutOfRange { entity: EntityId, frame: Frame },
    GeometryMismatch { entity: EntityId, frame: Frame, height: u32, width: u32 },
    ClassOutOfRange { entity: EntityId, class: ClassId },
    KindMismatch { entity: EntityId, class: ClassId },
    PredicateOutOfRange { relation: usize, predicate: PredicateId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateEntity { entity } => write!(f, "duplicate entity id {entity}"),
            Overlap { frame, first, second } => {
                write!(f, "frame {frame}: masks of entities {first} and {second} overlap")
            }
            DanglingEndpoint { relation, entity } => {
                write!(f, "relation {relation}: endpoint {entity} is not a known entity")
            }
            SelfRelation { relation, entity } => {
                write!(f, "relation {relation}: entity {entity} related to itself")
            }
            EmptySpan { relation } => write!(f, "relation {relation}: empty span"),
            SpanOutOfRange { relation, end } => {
                write!(f, "relation {relation}: span ends at {end}, past the last frame")
            }
            FrameOutOfRange { entity, frame } => {
                write!(f, "frame {frame}: entity {entity} has a mask outside the video")
            }
            GeometryMismatch { entity, frame, height, width } => write!(
                f,
                "frame {frame}: entity {entity} mask is {height}x{width}, not the video geometry"
            ),
            ClassOutOfRange { entity, class } => {
                write!(f, "entity {entity}: class id {class} outside the vocabulary")
            }
            KindMismatch { entity, class } => {
                write!(f, "entity {entity}: thing/stuff flag disagrees with class {class}")
            }
            PredicateOutOfRange { relation, predicate } => {
                write!(f, "relation {relation}: predicate id {predicate} outside the vocabulary")
            }
        }
    }
}

/// Lists every violated invariant of `g`. An empty result means `g` is valid.
pub fn validate_scene_graph(g: &SceneGraph, vocab: &Vocabulary) -> Vec<Violation> {
    let mut out = Vec::new();
    let meta = &g.meta;

    let mut ids = HashSet::new();
    for tube in &g.tubes {
        if !ids.insert(tube.entity_id) {
            out.push(Violation::DuplicateEntity { entity: tube.entity_id });
        }
        match vocab.kind(tube.class_id) {
            None => out.push(Violation::ClassOutOfRange { entity: tube.entity_id, class: tube.class_id }),
            Some(kind) if (kind == ClassKind::Thing) != tube.is_thing => {
                out.push(Violation::KindMismatch { entity: tube.entity_id, class: tube.class_id })
            }
            Some(_) => {}
        }
        for (&frame, mask) in &tube.frames {
            if frame >= meta.num_frames {
                out.push(Violation::FrameOutOfRange { entity: tube.entity_id, frame });
            }
            if mask.height() != meta.height || mask.width() != meta.width {
                out.push(Violation::GeometryMismatch {
                    entity: tube.entity_id,
                    frame,
                    height: mask.height(),
                    width: mask.width(),
                });
            }
        }
    }

    // per-frame pairwise disjointness
    let mut by_frame: BTreeMap<Frame, Vec<(EntityId, &BinaryMask)>> = BTreeMap::new();
    for tube in &g.tubes {
        for (&frame, mask) in &tube.frames {
            if !mask.is_empty() && mask.height() == meta.height && mask.width() == meta.width {
                by_frame.entry(frame).or_default().push((tube.entity_id, mask));
            }
        }
    }
    for (&frame, masks) in &by_frame {
        for (i, &(a, ma)) in masks.iter().enumerate() {
            for &(b, mb) in &masks[i + 1..] {
                if ma.intersection_area(mb).map(|n| n > 0).unwrap_or(false) {
                    out.push(Violation::Overlap { frame, first: a.min(b), second: a.max(b) });
                }
            }
        }
    }

    for (idx, rel) in g.relations.iter().enumerate() {
        for endpoint in [rel.subject_id, rel.object_id] {
            if !ids.contains(&endpoint) {
                out.push(Violation::DanglingEndpoint { relation: idx, entity: endpoint });
            }
        }
        if rel.subject_id == rel.object_id {
            out.push(Violation::SelfRelation { relation: idx, entity: rel.subject_id });
        }
        if rel.predicate_id as usize >= vocab.num_predicates() {
            out.push(Violation::PredicateOutOfRange { relation: idx, predicate: rel.predicate_id });
        }
        match rel.span.end() {
            None => out.push(Violation::EmptySpan { relation: idx }),
            Some(end) if end > meta.num_frames => {
                out.push(Violation::SpanOutOfRange { relation: idx, end })
            }
            Some(_) => {}
        }
    }
    out
}

/// Merges triplets sharing (subject, object, predicate) into one triplet whose
/// span is the union of theirs and whose score is the maximum. Output is
/// sorted by that key.
pub fn canonicalize_relations(relations: &[RelationTriplet]) -> Vec<RelationTriplet> {
    let mut merged: BTreeMap<(EntityId, EntityId, PredicateId), RelationTriplet> = BTreeMap::new();
    for rel in relations {
        merged
            .entry(rel.key())
            .and_modify(|m| {
                m.span = m.span.union(&rel.span);
                m.score = m.score.max(rel.score);
            })
            .or_insert_with(|| rel.clone());
    }
    merged.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rle::encode;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn vocab() -> Vocabulary {
        Vocabulary::placeholder(4, 1, 3)
    }

    fn pixel_mask(idx: usize) -> BinaryMask {
        let mut g = vec![false; 16];
        g[idx] = true;
        encode(&g, 4, 4).unwrap()
    }

    fn graph() -> SceneGraph {
        let mut g = SceneGraph::new(VideoMeta::new("v", 3, 4, 4).unwrap());
        let mut t = MaskTube::new(1, 0);
        t.frames.insert(0, pixel_mask(0));
        g.tubes.push(t);
        g
    }

    fn rel(s: EntityId, o: EntityId, p: PredicateId, spans: &[(u32, u32)], score: f64) -> RelationTriplet {
        RelationTriplet::new(s, o, p, TimeSpan::from_intervals(spans.iter().copied()).unwrap(), score)
            .unwrap()
    }

    #[test]
    fn valid_single_tube() {
        assert!(validate_scene_graph(&graph(), &vocab()).is_empty());
    }

    #[test]
    fn overlap_reported_with_frame_and_ids() {
        let mut g = graph();
        let mut t = MaskTube::new(2, 1);
        t.frames.insert(0, pixel_mask(0));
        g.tubes.push(t);
        assert_eq!(
            validate_scene_graph(&g, &vocab()),
            vec![Violation::Overlap { frame: 0, first: 1, second: 2 }]
        );
    }

    #[test]
    fn dangling_endpoint_reported() {
        let mut g = graph();
        let mut t = MaskTube::new(2, 1);
        t.frames.insert(0, pixel_mask(5));
        g.tubes.push(t);
        g.relations.push(rel(1, 99, 0, &[(0, 2)], 1.0));
        assert_eq!(
            validate_scene_graph(&g, &vocab()),
            vec![Violation::DanglingEndpoint { relation: 0, entity: 99 }]
        );
    }

    #[test]
    fn range_and_kind_violations() {
        let mut g = graph();
        let mut t = MaskTube::new(2, 9);
        t.frames.insert(7, pixel_mask(3));
        g.tubes.push(t);
        let mut stuff = MaskTube::new(3, 3);
        stuff.frames.insert(1, BinaryMask::empty(2, 2));
        g.tubes.push(stuff);
        g.relations.push(rel(1, 2, 5, &[(0, 9)], 1.0));
        let v = validate_scene_graph(&g, &vocab());
        assert!(v.contains(&Violation::ClassOutOfRange { entity: 2, class: 9 }));
        assert!(v.contains(&Violation::FrameOutOfRange { entity: 2, frame: 7 }));
        assert!(v.contains(&Violation::KindMismatch { entity: 3, class: 3 }));
        assert!(v.contains(&Violation::GeometryMismatch { entity: 3, frame: 1, height: 2, width: 2 }));
        assert!(v.contains(&Violation::PredicateOutOfRange { relation: 0, predicate: 5 }));
        assert!(v.contains(&Violation::SpanOutOfRange { relation: 0, end: 9 }));
    }

    #[test]
    fn stop_and_go_merges_into_scattered_span() {
        let out = canonicalize_relations(&[rel(1, 2, 0, &[(0, 10)], 0.4), rel(1, 2, 0, &[(20, 30)], 0.9)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].span.intervals(), &[(0, 10), (20, 30)]);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn single_and_adjacent() {
        let one = [rel(1, 2, 0, &[(3, 5)], 1.0)];
        assert_eq!(canonicalize_relations(&one), one.to_vec());
        let out = canonicalize_relations(&[rel(1, 2, 0, &[(0, 10)], 1.0), rel(1, 2, 0, &[(10, 15)], 1.0)]);
        assert_eq!(out[0].span.intervals(), &[(0, 15)]);
    }

    #[test]
    fn duplicate_vocabulary_names_rejected() {
        let classes = vec![
            ObjectClass { name: "a".into(), kind: ClassKind::Thing },
            ObjectClass { name: "a".into(), kind: ClassKind::Stuff },
        ];
        assert!(Vocabulary::new(classes, vec![]).is_err());
        assert_eq!(Vocabulary::default_sized().num_objects(), 126);
        assert_eq!(Vocabulary::default_sized().num_predicates(), 57);
    }

    fn relation_list() -> impl Strategy<Value = Vec<RelationTriplet>> {
        let one = (0u32..3, 3u32..5, 0u32..2, prop::collection::vec((0u32..1000, 1u32..50), 1..4), 0.0f64..1.0)
            .prop_map(|(s, o, p, iv, score)| {
                let spans: Vec<(u32, u32)> = iv.into_iter().map(|(a, l)| (a, (a + l).min(1000))).collect();
                rel(s, o, p, &spans, score)
            });
        prop::collection::vec(one, 0..12)
    }

    proptest! {
        #[test]
        fn canonicalize_idempotent_and_exact(rels in relation_list()) {
            let once = canonicalize_relations(&rels);
            prop_assert_eq!(canonicalize_relations(&once), once.clone());
            for m in &once {
                let frames: BTreeSet<u32> = rels
                    .iter()
                    .filter(|r| r.key() == m.key())
                    .flat_map(|r| r.span.frames().collect::<Vec<_>>())
                    .collect();
                prop_assert_eq!(m.span.frame_count() as usize, frames.len());
            }
            let keys: Vec<_> = once.iter().map(|r| r.key()).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(keys, sorted);
        }
    }
}
