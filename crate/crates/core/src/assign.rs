//! Ground-truth to prediction mapping: tube correspondence, per-frame pairing
//! matrices, and relation labels transferred onto predicted tube pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hungarian::hungarian;
use crate::model::{EntityId, MaskTube, PredicateId, SceneGraph};
use crate::rle::mask_iou;
use crate::span::Frame;

/// Default per-frame mask IOU gate; a frame passes when IOU is strictly greater.
pub const MASK_GATE: f64 = 0.5;

/// Fraction of frames on which two tubes agree: frames where their masks have
/// IOU above `gate`, over frames where either tube has a non-empty mask.
pub fn tube_agreement(a: &MaskTube, b: &MaskTube, gate: f64) -> Result<f64> {
    let support: BTreeSet<Frame> = a.visible_frames().chain(b.visible_frames()).collect();
    if support.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for &t in &support {
        if let (Some(ma), Some(mb)) = (a.mask(t), b.mask(t)) {
            if mask_iou(ma, mb)? > gate {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / support.len() as f64)
}

/// One matched predicted/ground-truth tube pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TubeMatch {
    pub pred_id: EntityId,
    pub gt_id: EntityId,
    pub agreement: f64,
}

/// Injective, class-gated correspondence between predicted and GT tubes that
/// maximizes total agreement. Pairs with zero agreement are dropped.
pub fn match_tubes(pred: &[MaskTube], gt: &[MaskTube], gate: f64) -> Result<Vec<TubeMatch>> {
    if pred.is_empty() || gt.is_empty() {
        return Ok(Vec::new());
    }
    let mut agreement = vec![vec![0.0; gt.len()]; pred.len()];
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if p.class_id == g.class_id {
                agreement[i][j] = tube_agreement(p, g, gate)?;
            }
        }
    }
    let cost: Vec<Vec<f64>> = agreement.iter().map(|row| row.iter().map(|a| 1.0 - a).collect()).collect();
    Ok(hungarian(&cost)?
        .into_iter()
        .filter(|&(i, j)| agreement[i][j] > 0.0)
        .map(|(i, j)| TubeMatch { pred_id: pred[i].entity_id, gt_id: gt[j].entity_id, agreement: agreement[i][j] })
        .collect())
}

/// Which ordered entity pairs are related on one frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairingMatrix {
    pub frame_index: Frame,
    pub entity_ids: Vec<EntityId>,
    /// `cells[i][j]`: entity `i` is the subject of a relation with object `j`.
    pub cells: Vec<Vec<bool>>,
}

impl PairingMatrix {
    pub fn get(&self, subject: EntityId, object: EntityId) -> bool {
        let pos = |id| self.entity_ids.iter().position(|&e| e == id);
        match (pos(subject), pos(object)) {
            (Some(i), Some(j)) => self.cells[i][j],
            _ => false,
        }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().flatten().filter(|&&c| c).count()
    }
}

/// Ground-truth pairing matrix of frame `t`, indexed in tube order.
pub fn gt_pairing_matrix(g: &SceneGraph, t: Frame) -> Result<PairingMatrix> {
    if t >= g.meta.num_frames {
        return Err(Error::invalid(format!("frame {t} outside video of {} frames", g.meta.num_frames)));
    }
    let entity_ids: Vec<EntityId> = g.tubes.iter().map(|tube| tube.entity_id).collect();
    let index: HashMap<EntityId, usize> = entity_ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let n = entity_ids.len();
    let mut cells = vec![vec![false; n]; n];
    for rel in &g.relations {
        if rel.subject_id == rel.object_id || !rel.span.contains(t) {
            continue;
        }
        if let (Some(&i), Some(&j)) = (index.get(&rel.subject_id), index.get(&rel.object_id)) {
            cells[i][j] = true;
        }
    }
    Ok(PairingMatrix { frame_index: t, entity_ids, cells })
}

/// Relation supervision for one predicted pair on one frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FramePairLabel {
    pub frame_index: Frame,
    pub subject_pred_id: EntityId,
    pub object_pred_id: EntityId,
    pub predicate_ids: BTreeSet<PredicateId>,
}

/// Transfers GT relations onto predicted tube pairs frame by frame.
///
/// A label is emitted on frame `t` of a GT relation's span when both of its
/// endpoints have a corresponding predicted tube and both predicted masks at
/// `t` overlap their GT masks with IOU above `gate`. Labels are sorted by
/// (frame, subject, object).
pub fn form_relation_labels(pred: &[MaskTube], gt: &SceneGraph, gate: f64) -> Result<Vec<FramePairLabel>> {
    let correspondence = match_tubes(pred, &gt.tubes, gate)?;
    let pred_of: HashMap<EntityId, EntityId> = correspondence.iter().map(|m| (m.gt_id, m.pred_id)).collect();
    let pred_tubes: HashMap<EntityId, &MaskTube> = pred.iter().map(|t| (t.entity_id, t)).collect();
    let gt_tubes = gt.tube_index();

    let mut labels: BTreeMap<(Frame, EntityId, EntityId), BTreeSet<PredicateId>> = BTreeMap::new();
    for rel in &gt.relations {
        let (Some(&ps), Some(&po)) = (pred_of.get(&rel.subject_id), pred_of.get(&rel.object_id)) else {
            continue;
        };
        let (Some(gs), Some(go)) = (gt_tubes.get(&rel.subject_id), gt_tubes.get(&rel.object_id)) else {
            continue;
        };
        let (pst, pot) = (pred_tubes[&ps], pred_tubes[&po]);
        for t in rel.span.frames() {
            let masks = (pst.mask(t), pot.mask(t), gs.mask(t), go.mask(t));
            let (Some(a), Some(b), Some(c), Some(d)) = masks else {
                continue;
            };
            if mask_iou(a, c)? > gate && mask_iou(b, d)? > gate {
                labels.entry((t, ps, po)).or_default().insert(rel.predicate_id);
            }
        }
    }
    Ok(labels
        .into_iter()
        .map(|((frame_index, subject_pred_id, object_pred_id), predicate_ids)| FramePairLabel {
            frame_index,
            subject_pred_id,
            object_pred_id,
            predicate_ids,
        })
        .collect())
}
