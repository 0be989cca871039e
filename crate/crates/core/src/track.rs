//! Frame-to-frame association of panoptic segments into mask tubes.
//!
//! Each step solves a class-gated assignment between the live tracks and the
//! incoming segments with cost `1 - IOU(last mask, segment mask)`. Pairs below
//! the IOU gate or across classes are forbidden. Stuff segments can bypass the
//! assignment and accumulate into one tube per class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hungarian::hungarian;
use crate::model::{ClassId, EntityId, MaskTube, Vocabulary};
use crate::rle::{mask_iou, BinaryMask, PanopticFrame};
use crate::span::Frame;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Minimum IOU for a track/segment pair to be associated.
    pub iou_gate: f64,
    /// Frames a track may go unmatched before it is retired.
    pub max_age: u32,
    /// Merge all segments of a stuff class into a single tube.
    pub stuff_by_class: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { iou_gate: 0.3, max_age: 10, stuff_by_class: true }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_gate > 0.0 && self.iou_gate <= 1.0) {
            return Err(Error::Config(format!("iou_gate must lie in (0, 1], got {}", self.iou_gate)));
        }
        Ok(())
    }
}

/// A track under construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackState {
    pub track_id: EntityId,
    pub class_id: ClassId,
    pub is_thing: bool,
    pub last_mask: BinaryMask,
    pub last_seen: Frame,
    pub frames: BTreeMap<Frame, BinaryMask>,
    confidence_sum: f64,
    confidence_count: u32,
}

impl TrackState {
    fn start(track_id: EntityId, class_id: ClassId, is_thing: bool, frame: Frame, mask: BinaryMask, conf: f64) -> Self {
        let mut frames = BTreeMap::new();
        frames.insert(frame, mask.clone());
        TrackState {
            track_id,
            class_id,
            is_thing,
            last_mask: mask,
            last_seen: frame,
            frames,
            confidence_sum: conf,
            confidence_count: 1,
        }
    }

    fn absorb(&mut self, frame: Frame, mask: BinaryMask, conf: f64) {
        self.frames.insert(frame, mask.clone());
        self.last_mask = mask;
        self.last_seen = frame;
        self.confidence_sum += conf;
        self.confidence_count += 1;
    }

    /// Mean confidence of the absorbed segments.
    pub fn confidence(&self) -> f64 {
        self.confidence_sum / f64::from(self.confidence_count)
    }

    fn into_tube(self) -> MaskTube {
        let score = self.confidence();
        MaskTube {
            entity_id: self.track_id,
            class_id: self.class_id,
            is_thing: self.is_thing,
            frames: self.frames,
            score,
        }
    }
}

/// Stateful association over one video. Feed frames in increasing order.
#[derive(Debug)]
pub struct Tracker<'v> {
    cfg: TrackerConfig,
    vocab: &'v Vocabulary,
    geometry: Option<(u32, u32)>,
    last_frame: Option<Frame>,
    live: Vec<TrackState>,
    retired: Vec<TrackState>,
    next_id: EntityId,
}

impl<'v> Tracker<'v> {
    pub fn new(cfg: TrackerConfig, vocab: &'v Vocabulary) -> Result<Self> {
        cfg.validate()?;
        Ok(Tracker { cfg, vocab, geometry: None, last_frame: None, live: Vec::new(), retired: Vec::new(), next_id: 0 })
    }

    /// Fixes the expected frame geometry up front.
    pub fn with_geometry(mut self, height: u32, width: u32) -> Self {
        self.geometry = Some((height, width));
        self
    }

    pub fn live(&self) -> &[TrackState] {
        &self.live
    }

    pub fn retired(&self) -> &[TrackState] {
        &self.retired
    }

    fn bypasses_assignment(&self, class: ClassId) -> bool {
        self.cfg.stuff_by_class && self.vocab.is_stuff(class)
    }

    /// Associates one frame's segments with the live tracks.
    pub fn step(&mut self, frame: &PanopticFrame) -> Result<()> {
        let t = frame.frame_index;
        if let Some(prev) = self.last_frame {
            if t <= prev {
                return Err(Error::invalid(format!("frame {t} arrives after frame {prev}")));
            }
        }
        for seg in &frame.segments {
            let g = (seg.mask.height(), seg.mask.width());
            match self.geometry {
                None => self.geometry = Some(g),
                Some(expected) if expected != g => {
                    return Err(Error::invalid(format!(
                        "frame {t}: segment {} is {}x{}, tracker expects {}x{}",
                        seg.entity_id, g.0, g.1, expected.0, expected.1
                    )))
                }
                Some(_) => {}
            }
        }
        self.last_frame = Some(t);

        // retire things that stayed unmatched for more than max_age frames
        let max_age = self.cfg.max_age;
        let (keep, gone): (Vec<_>, Vec<_>) = std::mem::take(&mut self.live)
            .into_iter()
            .partition(|tr| !tr.is_thing && self.cfg.stuff_by_class || t - tr.last_seen - 1 <= max_age);
        self.live = keep;
        self.retired.extend(gone);

        let (stuff_segs, thing_segs): (Vec<usize>, Vec<usize>) =
            (0..frame.segments.len()).partition(|&i| self.bypasses_assignment(frame.segments[i].class_id));

        // assignment over live non-bypassing tracks
        let rows: Vec<usize> = (0..self.live.len())
            .filter(|&r| !self.bypasses_assignment(self.live[r].class_id))
            .collect();
        let mut seg_taken = vec![false; frame.segments.len()];
        if !rows.is_empty() && !thing_segs.is_empty() {
            let forbidden = (rows.len().min(thing_segs.len()) + 1) as f64;
            let mut allowed = vec![vec![false; thing_segs.len()]; rows.len()];
            let mut cost = vec![vec![forbidden; thing_segs.len()]; rows.len()];
            for (ri, &r) in rows.iter().enumerate() {
                let track = &self.live[r];
                for (ci, &s) in thing_segs.iter().enumerate() {
                    let seg = &frame.segments[s];
                    if seg.class_id != track.class_id {
                        continue;
                    }
                    let iou = mask_iou(&track.last_mask, &seg.mask)?;
                    if iou >= self.cfg.iou_gate {
                        allowed[ri][ci] = true;
                        cost[ri][ci] = 1.0 - iou;
                    }
                }
            }
            for (ri, ci) in hungarian(&cost)? {
                if allowed[ri][ci] {
                    let s = thing_segs[ci];
                    let seg = &frame.segments[s];
                    self.live[rows[ri]].absorb(t, seg.mask.clone(), seg.confidence);
                    seg_taken[s] = true;
                }
            }
        }

        // merge bypassing segments per class, in reading order of first appearance
        let mut stuff_groups: BTreeMap<ClassId, (usize, BinaryMask, Vec<f64>)> = BTreeMap::new();
        for &s in &stuff_segs {
            let seg = &frame.segments[s];
            match stuff_groups.get_mut(&seg.class_id) {
                Some(group) => {
                    group.1 = group.1.union(&seg.mask)?;
                    group.2.push(seg.confidence);
                }
                None => {
                    stuff_groups.insert(seg.class_id, (s, seg.mask.clone(), vec![seg.confidence]));
                }
            }
        }

        // new identities are issued in reading order of the segments that open them
        let mut openings: Vec<(usize, Opening)> = Vec::new();
        for (class, (first, mask, confs)) in stuff_groups {
            match self.live.iter_mut().find(|tr| !tr.is_thing && tr.class_id == class) {
                Some(track) => {
                    track.frames.insert(t, mask.clone());
                    track.last_mask = mask;
                    track.last_seen = t;
                    for c in confs {
                        track.confidence_sum += c;
                        track.confidence_count += 1;
                    }
                }
                None => openings.push((first, Opening::Stuff(class, mask, confs))),
            }
        }
        for &s in &thing_segs {
            if !seg_taken[s] {
                openings.push((s, Opening::Segment(s)));
            }
        }
        openings.sort_by_key(|o| o.0);
        for (_, opening) in openings {
            let id = self.next_id;
            self.next_id += 1;
            let track = match opening {
                Opening::Segment(s) => {
                    let seg = &frame.segments[s];
                    let is_thing = !self.vocab.is_stuff(seg.class_id);
                    TrackState::start(id, seg.class_id, is_thing, t, seg.mask.clone(), seg.confidence)
                }
                Opening::Stuff(class, mask, confs) => {
                    let mut tr = TrackState::start(id, class, false, t, mask, confs[0]);
                    for &c in &confs[1..] {
                        tr.confidence_sum += c;
                        tr.confidence_count += 1;
                    }
                    tr
                }
            };
            self.live.push(track);
        }
        Ok(())
    }

    /// All tracks, live and retired, as tubes ordered by track id.
    pub fn finish(self) -> Vec<MaskTube> {
        let mut all: Vec<TrackState> = self.retired;
        all.extend(self.live);
        all.sort_by_key(|tr| tr.track_id);
        all.into_iter().map(TrackState::into_tube).collect()
    }
}

enum Opening {
    Segment(usize),
    Stuff(ClassId, BinaryMask, Vec<f64>),
}

/// Runs the tracker over a frame sequence and returns every track as a tube.
pub fn build_tubes(frames: &[PanopticFrame], cfg: &TrackerConfig, vocab: &Vocabulary) -> Result<Vec<MaskTube>> {
    let mut tracker = Tracker::new(cfg.clone(), vocab)?;
    for frame in frames {
        tracker.step(frame)?;
    }
    Ok(tracker.finish())
}
