//! Procedural scene generator and seeded corruption.
//!
//! A [`SceneScript`] places rectangles and discs on a canvas, moves them along
//! piecewise-linear paths and stacks them by layer. [`generate`] rasterizes a
//! script into a ground-truth [`SceneGraph`] plus the per-frame panoptic
//! decomposition; [`perturb`] corrupts a graph and records what a correct
//! evaluator must report.

pub mod dense;
mod noise;

pub use noise::{perturb, CorruptionLedger, IdSwitch, LedgerEntry, NoiseConfig};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    canonicalize_relations, ClassId, EntityId, MaskTube, PredicateId, RelationTriplet, SceneGraph, VideoMeta, Vocabulary,
    DEFAULT_OBJECT_CLASSES, DEFAULT_PREDICATE_CLASSES,
};
use crate::rle::{encode, PanopticFrame, PanopticSegment};
use crate::span::{Frame, TimeSpan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect { w: u32, h: u32 },
    Disc { r: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: Frame,
    pub x: i64,
    pub y: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptObject {
    pub class: ClassId,
    pub shape: Shape,
    pub path: Vec<Waypoint>,
    /// Higher layers occlude lower ones.
    pub layer: i32,
    /// Frames on which the object is drawn; every frame when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<TimeSpan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptRelation {
    pub subject: usize,
    pub object: usize,
    pub predicate: PredicateId,
    pub spans: TimeSpan,
}

fn default_objects() -> usize {
    DEFAULT_OBJECT_CLASSES
}

fn default_predicates() -> usize {
    DEFAULT_PREDICATE_CLASSES
}

/// JSON scene description. Object `i` becomes entity `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub video_id: String,
    pub height: u32,
    pub width: u32,
    pub num_frames: u32,
    #[serde(default = "default_objects")]
    pub num_object_classes: usize,
    #[serde(default = "default_predicates")]
    pub num_predicate_classes: usize,
    pub objects: Vec<ScriptObject>,
    #[serde(default)]
    pub relations: Vec<ScriptRelation>,
}

impl SceneScript {
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::placeholder(self.num_object_classes, 0, self.num_predicate_classes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("script {}: {m}", self.video_id)));
        if self.height == 0 || self.width == 0 || self.num_frames == 0 {
            return bad("canvas and frame count must be positive".into());
        }
        let mut layers = std::collections::BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.class as usize >= self.num_object_classes {
                return bad(format!("object {i}: class {} out of range", o.class));
            }
            match o.shape {
                Shape::Rect { w, h } if w == 0 || h == 0 => return bad(format!("object {i}: empty rectangle")),
                _ => {}
            }
            if !layers.insert(o.layer) {
                return bad(format!("object {i}: layer {} already used", o.layer));
            }
            if o.path.is_empty() {
                return bad(format!("object {i}: path has no waypoints"));
            }
            for (k, wp) in o.path.iter().enumerate() {
                if k > 0 && wp.frame <= o.path[k - 1].frame {
                    return bad(format!("object {i}: waypoint frames must increase"));
                }
                if wp.frame >= self.num_frames {
                    return bad(format!("object {i}: waypoint frame {} past the last frame", wp.frame));
                }
                if !(0..i64::from(self.width)).contains(&wp.x) || !(0..i64::from(self.height)).contains(&wp.y) {
                    return bad(format!("object {i}: waypoint ({}, {}) outside the canvas", wp.x, wp.y));
                }
            }
            if let Some(end) = o.visible.as_ref().and_then(TimeSpan::end) {
                if end > self.num_frames {
                    return bad(format!("object {i}: visibility runs past the last frame"));
                }
            }
        }
        for (k, r) in self.relations.iter().enumerate() {
            if r.subject >= self.objects.len() || r.object >= self.objects.len() {
                return bad(format!("relation {k}: endpoint out of range"));
            }
            if r.subject == r.object {
                return bad(format!("relation {k}: subject equals object"));
            }
            if r.predicate as usize >= self.num_predicate_classes {
                return bad(format!("relation {k}: predicate {} out of range", r.predicate));
            }
            match r.spans.end() {
                None => return bad(format!("relation {k}: empty span")),
                Some(end) if end > self.num_frames => return bad(format!("relation {k}: span past the last frame")),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// `floor(a + (b - a) * num / den + 1/2)` in integers.
fn lerp(a: i64, b: i64, num: i64, den: i64) -> i64 {
    a + (2 * (b - a) * num + den).div_euclid(2 * den)
}

/// Center of the object at frame `t`; held constant outside the path.
fn position(path: &[Waypoint], t: Frame) -> (i64, i64) {
    let first = path[0];
    if t <= first.frame {
        return (first.x, first.y);
    }
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if t <= b.frame {
            let (num, den) = (i64::from(t - a.frame), i64::from(b.frame - a.frame));
            return (lerp(a.x, b.x, num, den), lerp(a.y, b.y, num, den));
        }
    }
    let last = path[path.len() - 1];
    (last.x, last.y)
}

fn rasterize(shape: Shape, (cx, cy): (i64, i64), height: u32, width: u32, grid: &mut [bool]) {
    let (h, w) = (i64::from(height), i64::from(width));
    let mut set = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            grid[(y * w + x) as usize] = true;
        }
    };
    match shape {
        Shape::Rect { w: rw, h: rh } => {
            let (x0, y0) = (cx - i64::from(rw) / 2, cy - i64::from(rh) / 2);
            for y in y0..y0 + i64::from(rh) {
                for x in x0..x0 + i64::from(rw) {
                    set(x, y);
                }
            }
        }
        Shape::Disc { r } => {
            let r = i64::from(r);
            for y in cy - r..=cy + r {
                for x in cx - r..=cx + r {
                    if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                        set(x, y);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub graph: SceneGraph,
    pub frames: Vec<PanopticFrame>,
    pub warnings: Vec<String>,
}

/// Rasterizes `script`. The output depends on the script alone; `seed` is
/// accepted so generation can be keyed alongside the noise seed.
pub fn generate(script: &SceneScript, _seed: u64) -> Result<GeneratedScene> {
    script.validate()?;
    let (h, w, t_max) = (script.height, script.width, script.num_frames);
    let meta = VideoMeta::new(script.video_id.clone(), t_max, h, w)?;
    let mut tubes: Vec<MaskTube> =
        script.objects.iter().enumerate().map(|(i, o)| MaskTube::new(i as EntityId, o.class)).collect();
    let mut order: Vec<usize> = (0..script.objects.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(script.objects[i].layer));

    let npx = (h * w) as usize;
    let mut frames = Vec::with_capacity(t_max as usize);
    for t in 0..t_max {
        let mut taken = vec![false; npx];
        let mut segments = Vec::new();
        for &i in &order {
            let o = &script.objects[i];
            if o.visible.as_ref().is_some_and(|v| !v.contains(t)) {
                continue;
            }
            let mut grid = vec![false; npx];
            rasterize(o.shape, position(&o.path, t), h, w, &mut grid);
            for (g, tk) in grid.iter_mut().zip(taken.iter_mut()) {
                if *tk {
                    *g = false;
                } else if *g {
                    *tk = true;
                }
            }
            if grid.iter().any(|&b| b) {
                let mask = encode(&grid, h, w)?;
                tubes[i].frames.insert(t, mask.clone());
                segments.push(PanopticSegment { entity_id: i as EntityId, class_id: o.class, confidence: 1.0, mask });
            }
        }
        segments.sort_by_key(|s| s.entity_id);
        frames.push(PanopticFrame { frame_index: t, segments });
    }

    let warnings = tubes
        .iter()
        .filter(|tb| tb.frames.is_empty())
        .map(|tb| format!("{}: object {} is occluded in every frame", script.video_id, tb.entity_id))
        .collect();
    let relations: Vec<RelationTriplet> = script
        .relations
        .iter()
        .map(|r| RelationTriplet::new(r.subject as EntityId, r.object as EntityId, r.predicate, r.spans.clone(), 1.0))
        .collect::<Result<_>>()?;
    let mut graph = SceneGraph::new(meta);
    graph.tubes = tubes;
    graph.relations = canonicalize_relations(&relations);
    Ok(GeneratedScene { graph, frames, warnings })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    /// Horizontal motion in separate lanes, no contact.
    Lanes,
    /// Neighbouring lanes overlap and alternate direction, so objects pass
    /// partly in front of each other without ever disappearing.
    Crossing,
    /// Random waypoints anywhere on the canvas.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationStyle {
    /// Random pairs, predicates and scattered spans.
    Random,
    /// Each ordered pair related with probability 1/2 over the whole video,
    /// with a predicate fixed by the two object classes.
    ClassDetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptParams {
    pub height: u32,
    pub width: u32,
    pub num_frames: u32,
    pub num_objects: usize,
    pub motion: Motion,
    pub relations: RelationStyle,
    pub num_object_classes: usize,
    pub num_predicate_classes: usize,
}

impl Default for ScriptParams {
    fn default() -> Self {
        ScriptParams {
            height: 96,
            width: 128,
            num_frames: 60,
            num_objects: 5,
            motion: Motion::Lanes,
            relations: RelationStyle::Random,
            num_object_classes: DEFAULT_OBJECT_CLASSES,
            num_predicate_classes: DEFAULT_PREDICATE_CLASSES,
        }
    }
}

/// Predicate used by [`RelationStyle::ClassDetermined`].
pub fn class_predicate(subject: ClassId, object: ClassId, num_predicates: usize) -> PredicateId {
    ((u64::from(subject) * 31 + u64::from(object) * 17) % num_predicates as u64) as PredicateId
}

/// Random script; object classes within one scene are distinct.
pub fn random_script(seed: u64, params: &ScriptParams) -> Result<SceneScript> {
    let p = params;
    if p.num_objects == 0 || p.num_objects > p.num_object_classes {
        return Err(Error::Config(format!(
            "need 1..={} objects, got {}",
            p.num_object_classes, p.num_objects
        )));
    }
    if p.num_frames < 2 || p.height < 8 || p.width < 8 {
        return Err(Error::Config("canvas or video too small for a random script".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.num_objects;
    let (hh, ww, last) = (i64::from(p.height), i64::from(p.width), p.num_frames - 1);
    let classes: Vec<ClassId> = sample(&mut rng, p.num_object_classes, n).into_iter().map(|c| c as ClassId).collect();
    let mut layers: Vec<i32> = (0..n as i32).collect();
    for i in (1..n).rev() {
        layers.swap(i, rng.gen_range(0..=i));
    }
    let lane = (hh / n as i64).max(1);
    // at most two pixels per frame
    let reach = (2 * i64::from(last)).min(ww - 1);

    let mut objects = Vec::with_capacity(n);
    for i in 0..n {
        let lane_y = (lane * i as i64 + lane / 2).min(hh - 1);
        let (shape, path) = match p.motion {
            Motion::Lanes | Motion::Crossing => {
                let tall = if p.motion == Motion::Lanes { (lane - 2).max(1) } else { lane + lane / 2 };
                let shape = if rng.gen_bool(0.5) {
                    Shape::Rect { w: rng.gen_range(12..=20), h: tall as u32 }
                } else {
                    Shape::Disc { r: ((tall - 1) / 2).max(1) as u32 }
                };
                let dist = rng.gen_range(reach / 2..=reach);
                let rightward = p.motion == Motion::Lanes && rng.gen_bool(0.5) || p.motion == Motion::Crossing && i % 2 == 0;
                let x0 = rng.gen_range(0..=ww - 1 - dist);
                let (xa, xb) = if rightward { (x0, x0 + dist) } else { (x0 + dist, x0) };
                let path = vec![Waypoint { frame: 0, x: xa, y: lane_y }, Waypoint { frame: last, x: xb, y: lane_y }];
                (shape, path)
            }
            Motion::Free => {
                let shape = if rng.gen_bool(0.5) {
                    Shape::Rect { w: rng.gen_range(6..=24), h: rng.gen_range(6..=24) }
                } else {
                    Shape::Disc { r: rng.gen_range(3..=12) }
                };
                let inner = rng.gen_range(0..=2usize).min(last as usize - 1);
                let mut frames: Vec<Frame> = sample(&mut rng, last as usize - 1, inner)
                    .into_iter()
                    .map(|f| f as Frame + 1)
                    .collect();
                frames.push(0);
                frames.push(last);
                frames.sort();
                frames.dedup();
                let path = frames
                    .into_iter()
                    .map(|frame| Waypoint { frame, x: rng.gen_range(0..ww), y: rng.gen_range(0..hh) })
                    .collect();
                (shape, path)
            }
        };
        objects.push(ScriptObject { class: classes[i], shape, path, layer: layers[i], visible: None });
    }

    let mut relations = Vec::new();
    if n >= 2 {
        match p.relations {
            RelationStyle::Random => {
                let count = rng.gen_range(1..=2 * n);
                for _ in 0..count {
                    let subject = rng.gen_range(0..n);
                    let object = (subject + rng.gen_range(1..n)) % n;
                    let predicate = rng.gen_range(0..p.num_predicate_classes) as PredicateId;
                    let mut intervals = Vec::new();
                    for _ in 0..rng.gen_range(1..=2) {
                        let a = rng.gen_range(0..p.num_frames);
                        let b = rng.gen_range(a + 1..=p.num_frames);
                        intervals.push((a, b));
                    }
                    relations.push(ScriptRelation { subject, object, predicate, spans: TimeSpan::from_intervals(intervals)? });
                }
            }
            RelationStyle::ClassDetermined => {
                for subject in 0..n {
                    for object in 0..n {
                        if subject != object && rng.gen_bool(0.5) {
                            let predicate = class_predicate(classes[subject], classes[object], p.num_predicate_classes);
                            relations.push(ScriptRelation { subject, object, predicate, spans: TimeSpan::range(0, p.num_frames)? });
                        }
                    }
                }
            }
        }
    }

    Ok(SceneScript {
        video_id: format!("synth_{seed:06}"),
        height: p.height,
        width: p.width,
        num_frames: p.num_frames,
        num_object_classes: p.num_object_classes,
        num_predicate_classes: p.num_predicate_classes,
        objects,
        relations,
    })
}
