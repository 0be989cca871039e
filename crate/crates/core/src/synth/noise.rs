use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense;
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::model::{EntityId, PredicateId, SceneGraph};
use crate::rle::encode;
use crate::span::{Frame, TimeSpan};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Each tube is eroded by a uniform draw from `0..=mask_erode_px`.
    pub mask_erode_px: u32,
    /// Each span loses a uniform `0..=span_clip_frames` frames at each end.
    pub span_clip_frames: u32,
    pub drop_triplet_rate: f64,
    /// Per tube, probability of trading masks with another tube from a
    /// random frame onwards.
    pub id_switch_rate: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("drop_triplet_rate", self.drop_triplet_rate), ("id_switch_rate", self.id_switch_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdSwitch {
    pub first: EntityId,
    pub second: EntityId,
    pub from_frame: Frame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub subject: EntityId,
    pub object: EntityId,
    pub predicate: PredicateId,
    pub gt_span: TimeSpan,
    pub survived: bool,
    pub pred_span: Option<TimeSpan>,
    /// Frames of the span intersection where both endpoints pass the gate.
    pub gate_passing: TimeSpan,
    pub union_frames: u64,
    pub volume_iou: f64,
    /// One flag per threshold of the ledger, in the same order.
    pub recallable: Vec<bool>,
}

/// Per-triplet outcome of a corruption, measured on dense grids.
///
/// Recall predicted from the ledger is exact for evaluation whenever class
/// triplet keys are unique within each video and K covers every prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLedger {
    pub video_id: String,
    pub mask_gate: f64,
    pub thresholds: Vec<f64>,
    pub erosion: BTreeMap<EntityId, u32>,
    pub id_switches: Vec<IdSwitch>,
    pub entries: Vec<LedgerEntry>,
}

impl CorruptionLedger {
    /// `(recallable, total)` at the threshold with index `ti`.
    pub fn counts(&self, ti: usize) -> (u64, u64) {
        let hit = self.entries.iter().filter(|e| e.recallable[ti]).count();
        (hit as u64, self.entries.len() as u64)
    }

    /// Pooled recall over several videos at threshold index `ti`.
    pub fn pooled_recall(ledgers: &[CorruptionLedger], ti: usize) -> f64 {
        let (hit, total) = ledgers.iter().map(|l| l.counts(ti)).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    /// Mean over predicates with at least one triplet of per-predicate recall.
    pub fn mean_recall(ledgers: &[CorruptionLedger], ti: usize) -> f64 {
        let mut per: BTreeMap<PredicateId, (u64, u64)> = BTreeMap::new();
        for e in ledgers.iter().flat_map(|l| &l.entries) {
            let c = per.entry(e.predicate).or_default();
            c.0 += u64::from(e.recallable[ti]);
            c.1 += 1;
        }
        if per.is_empty() {
            return 0.0;
        }
        per.values().map(|&(h, t)| h as f64 / t as f64).sum::<f64>() / per.len() as f64
    }
}

type DenseTube = BTreeMap<Frame, Vec<bool>>;

fn span_frames(s: &TimeSpan) -> BTreeSet<Frame> {
    s.intervals().iter().flat_map(|&(a, b)| a..b).collect()
}

/// Corrupts `gt` and measures every relation's outcome against it.
pub fn perturb(gt: &SceneGraph, noise: &NoiseConfig, eval: &EvalConfig) -> Result<(SceneGraph, CorruptionLedger)> {
    noise.validate()?;
    let (h, w) = (gt.meta.height, gt.meta.width);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let gt_dense: BTreeMap<EntityId, DenseTube> = gt
        .tubes
        .iter()
        .map(|t| (t.entity_id, t.frames.iter().map(|(&f, m)| (f, dense::expand(m))).collect()))
        .collect();

    let mut erosion = BTreeMap::new();
    let mut pred_dense: Vec<DenseTube> = Vec::with_capacity(gt.tubes.len());
    for tube in &gt.tubes {
        let k = if noise.mask_erode_px > 0 { rng.gen_range(0..=noise.mask_erode_px) } else { 0 };
        erosion.insert(tube.entity_id, k);
        let src = &gt_dense[&tube.entity_id];
        pred_dense.push(src.iter().map(|(&f, g)| (f, dense::erode(g, h, w, k))).collect());
    }

    let mut id_switches = Vec::new();
    let n = gt.tubes.len();
    if noise.id_switch_rate > 0.0 && n >= 2 {
        for i in 0..n {
            if !rng.gen_bool(noise.id_switch_rate) {
                continue;
            }
            let j = (i + rng.gen_range(1..n)) % n;
            let from_frame = rng.gen_range(0..gt.meta.num_frames);
            let (mut a, mut b) = (std::mem::take(&mut pred_dense[i]), std::mem::take(&mut pred_dense[j]));
            let a_tail = a.split_off(&from_frame);
            let b_tail = b.split_off(&from_frame);
            a.extend(b_tail);
            b.extend(a_tail);
            pred_dense[i] = a;
            pred_dense[j] = b;
            id_switches.push(IdSwitch { first: gt.tubes[i].entity_id, second: gt.tubes[j].entity_id, from_frame });
        }
    }

    let mut pred = SceneGraph::new(gt.meta.clone());
    for (tube, frames) in gt.tubes.iter().zip(&pred_dense) {
        let mut out = tube.clone();
        out.frames = frames.iter().map(|(&f, g)| Ok((f, encode(g, h, w)?))).collect::<Result<_>>()?;
        pred.tubes.push(out);
    }
    let pred_by_id: BTreeMap<EntityId, &DenseTube> =
        gt.tubes.iter().map(|t| t.entity_id).zip(pred_dense.iter()).collect();

    let empty = vec![false; (h as usize) * (w as usize)];
    let passes = |gt_tube: Option<&DenseTube>, pred_tube: Option<&DenseTube>, t: Frame| {
        let a = gt_tube.and_then(|m| m.get(&t)).unwrap_or(&empty);
        let b = pred_tube.and_then(|m| m.get(&t)).unwrap_or(&empty);
        dense::iou(a, b) > eval.mask_gate
    };

    let mut entries = Vec::with_capacity(gt.relations.len());
    for rel in &gt.relations {
        let dropped = noise.drop_triplet_rate > 0.0 && rng.gen_bool(noise.drop_triplet_rate);
        let (cut_start, cut_end) = if noise.span_clip_frames > 0 {
            (rng.gen_range(0..=noise.span_clip_frames), rng.gen_range(0..=noise.span_clip_frames))
        } else {
            (0, 0)
        };
        let gt_frames = span_frames(&rel.span);
        let clipped: BTreeSet<Frame> = {
            let (lo, hi) = (gt_frames.first().copied().unwrap_or(0), gt_frames.last().copied().unwrap_or(0));
            let (lo, hi) = (i64::from(lo) + i64::from(cut_start), i64::from(hi) - i64::from(cut_end));
            gt_frames.iter().copied().filter(|&f| (lo..=hi).contains(&i64::from(f))).collect()
        };
        let survived = !dropped && !clipped.is_empty();
        let pred_span = survived.then(|| TimeSpan::from_frames(clipped.iter().copied()));

        let (mut passing, mut union_frames) = (Vec::new(), gt_frames.len() as u64);
        if survived {
            for &t in gt_frames.intersection(&clipped) {
                let s_ok = passes(gt_dense.get(&rel.subject_id), pred_by_id.get(&rel.subject_id).copied(), t);
                let o_ok = passes(gt_dense.get(&rel.object_id), pred_by_id.get(&rel.object_id).copied(), t);
                if s_ok && o_ok {
                    passing.push(t);
                }
            }
            union_frames = gt_frames.union(&clipped).count() as u64;
        }
        let volume_iou = if survived { passing.len() as f64 / union_frames as f64 } else { 0.0 };
        let recallable = eval.vol_thresholds.iter().map(|&th| survived && volume_iou > th).collect();
        if let Some(span) = &pred_span {
            let mut r = rel.clone();
            r.span = span.clone();
            pred.relations.push(r);
        }
        entries.push(LedgerEntry {
            subject: rel.subject_id,
            object: rel.object_id,
            predicate: rel.predicate_id,
            gt_span: rel.span.clone(),
            survived,
            pred_span,
            gate_passing: TimeSpan::from_frames(passing),
            union_frames,
            volume_iou,
            recallable,
        });
    }

    let ledger = CorruptionLedger {
        video_id: gt.meta.video_id.clone(),
        mask_gate: eval.mask_gate,
        thresholds: eval.vol_thresholds.clone(),
        erosion,
        id_switches,
        entries,
    };
    Ok((pred, ledger))
}
