//! Triplet recall metrics for panoptic video scene graphs.
//!
//! A predicted triplet recalls a ground-truth triplet when the subject class,
//! object class and predicate agree and their volume IOU exceeds the recall
//! threshold. Volume IOU counts a frame as intersecting only when both the
//! subject and object masks beat the mask gate; the union is the union of the
//! two scattered spans. R@K is pooled over all GT triplets, mR@K averages
//! per-predicate recall over predicates that have GT instances.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonicalize_relations, ClassId, EntityId, MaskTube, PredicateId, RelationTriplet, SceneGraph, Vocabulary};
use crate::rle::{mask_iou, BinaryMask};

/// Where the top-K cut is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKScope {
    #[default]
    PerVideo,
    Corpus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
    /// Volume IOU thresholds, reported in the given order.
    pub vol_thresholds: Vec<f64>,
    pub mask_gate: f64,
    pub top_k_scope: TopKScope,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { k_values: vec![20, 50, 100], vol_thresholds: vec![0.5, 0.1], mask_gate: 0.5, top_k_scope: TopKScope::PerVideo }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::Config("k values must be a non-empty set of positive counts".into()));
        }
        if self.vol_thresholds.is_empty() {
            return Err(Error::Config("at least one volume threshold is required".into()));
        }
        for &t in self.vol_thresholds.iter().chain([self.mask_gate].iter()) {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("threshold {t} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn sorted_ks(&self) -> Vec<usize> {
        let mut ks = self.k_values.clone();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    fn thresholds(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &t in &self.vol_thresholds {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        out
    }
}

/// True when all four masks are present and both subject and object IOUs
/// exceed `gate`.
pub fn frame_hit(
    pred_subject: Option<&BinaryMask>,
    pred_object: Option<&BinaryMask>,
    gt_subject: Option<&BinaryMask>,
    gt_object: Option<&BinaryMask>,
    gate: f64,
) -> bool {
    let (Some(ps), Some(po), Some(gs), Some(go)) = (pred_subject, pred_object, gt_subject, gt_object) else {
        return false;
    };
    let above = |a, b| mask_iou(a, b).map(|iou| iou > gate).unwrap_or(false);
    above(ps, gs) && above(po, go)
}

/// A relation together with the tubes it grounds on.
#[derive(Clone, Copy, Debug)]
pub struct GroundedTriplet<'a> {
    pub relation: &'a RelationTriplet,
    pub subject: &'a MaskTube,
    pub object: &'a MaskTube,
}

impl GroundedTriplet<'_> {
    pub fn class_key(&self) -> (ClassId, ClassId, PredicateId) {
        (self.subject.class_id, self.object.class_id, self.relation.predicate_id)
    }
}

/// Integer form of a volume IOU: gate-passing common frames over the union of
/// both spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct VolumeOverlap {
    pub hits: u64,
    pub union: u64,
}

impl VolumeOverlap {
    pub fn ratio(&self) -> f64 {
        if self.union == 0 { 0.0 } else { self.hits as f64 / self.union as f64 }
    }
}

pub fn volume_overlap(pred: &GroundedTriplet<'_>, gt: &GroundedTriplet<'_>, gate: f64) -> VolumeOverlap {
    let (ps, gs) = (&pred.relation.span, &gt.relation.span);
    let union = ps.union(gs).frame_count();
    let hits = ps
        .intersection(gs)
        .frames()
        .filter(|&t| frame_hit(pred.subject.mask(t), pred.object.mask(t), gt.subject.mask(t), gt.object.mask(t), gate))
        .count() as u64;
    VolumeOverlap { hits, union }
}

pub fn volume_iou(pred: &GroundedTriplet<'_>, gt: &GroundedTriplet<'_>, gate: f64) -> f64 {
    volume_overlap(pred, gt, gate).ratio()
}

/// A recalled GT triplet and the prediction that recalled it (indices into
/// the slices given to [`match_triplets`]).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripletMatch {
    pub pred: usize,
    pub gt: usize,
    pub volume_iou: f64,
}

/// Ranking order of predictions: score descending, then subject class,
/// object class, predicate, then input position.
pub fn prediction_order(preds: &[GroundedTriplet<'_>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| rank_cmp(&preds[a], &preds[b]).then(a.cmp(&b)));
    order
}

fn rank_cmp(a: &GroundedTriplet<'_>, b: &GroundedTriplet<'_>) -> Ordering {
    b.relation.score.total_cmp(&a.relation.score).then_with(|| a.class_key().cmp(&b.class_key()))
}

fn check_gt_keys(gts: &[GroundedTriplet<'_>]) -> Result<()> {
    let mut seen: HashMap<(EntityId, EntityId, PredicateId), usize> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        if let Some(&j) = seen.get(&g.relation.key()) {
            if !gts[j].relation.span.intersection(&g.relation.span).is_empty() {
                return Err(Error::invalid(format!(
                    "ground-truth triplets {j} and {i} share key {:?} with overlapping spans; canonicalize first",
                    g.relation.key()
                )));
            }
        }
        seen.insert(g.relation.key(), i);
    }
    Ok(())
}

/// Greedy one-to-one matching. Predictions are visited in ranking order and
/// each takes the unmatched GT triplet of the same class key with the highest
/// volume IOU above `threshold`, the earliest GT winning ties.
pub fn match_triplets(
    preds: &[GroundedTriplet<'_>],
    gts: &[GroundedTriplet<'_>],
    threshold: f64,
    gate: f64,
) -> Result<Vec<TripletMatch>> {
    check_gt_keys(gts)?;
    let table = OverlapTable::build(preds, gts, gate);
    Ok(table.greedy(&prediction_order(preds), threshold))
}

/// Volume IOUs of every same-key (prediction, GT) pair.
struct OverlapTable {
    /// per prediction: candidate GT indices in GT order with their IOU
    candidates: Vec<Vec<(usize, f64)>>,
    num_gt: usize,
}

impl OverlapTable {
    fn build(preds: &[GroundedTriplet<'_>], gts: &[GroundedTriplet<'_>], gate: f64) -> Self {
        let mut by_key: HashMap<(ClassId, ClassId, PredicateId), Vec<usize>> = HashMap::new();
        for (j, g) in gts.iter().enumerate() {
            by_key.entry(g.class_key()).or_default().push(j);
        }
        let candidates = preds
            .iter()
            .map(|p| {
                by_key
                    .get(&p.class_key())
                    .map(|js| js.iter().map(|&j| (j, volume_iou(p, &gts[j], gate))).collect())
                    .unwrap_or_default()
            })
            .collect();
        OverlapTable { candidates, num_gt: gts.len() }
    }

    fn greedy(&self, order: &[usize], threshold: f64) -> Vec<TripletMatch> {
        let mut taken = vec![false; self.num_gt];
        let mut out = Vec::new();
        for &p in order {
            let best = self.candidates[p]
                .iter()
                .filter(|&&(g, v)| !taken[g] && v > threshold)
                .fold(None::<(usize, f64)>, |acc, &(g, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((g, v)),
                });
            if let Some((g, v)) = best {
                taken[g] = true;
                out.push(TripletMatch { pred: p, gt: g, volume_iou: v });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredicateRecall {
    pub predicate_id: PredicateId,
    pub name: String,
    pub matched: u64,
    pub total: u64,
    pub recall: f64,
}

/// One (K, threshold) cell of the report grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportCell {
    pub k: usize,
    pub threshold: f64,
    pub recall: f64,
    pub mean_recall: f64,
    pub matched: u64,
    pub total: u64,
    pub per_predicate: Vec<PredicateRecall>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub k: usize,
    pub threshold: f64,
    pub gt_subject: EntityId,
    pub gt_object: EntityId,
    pub predicate: PredicateId,
    pub pred_subject: EntityId,
    pub pred_object: EntityId,
    pub pred_score: f64,
    pub volume_iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoLedger {
    pub video_id: String,
    pub gt_triplets: usize,
    pub pred_triplets: usize,
    pub matches: Vec<LedgerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub k_values: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub mask_gate: f64,
    pub top_k_scope: TopKScope,
    pub num_videos: usize,
    pub total_gt: u64,
    /// Ordered by threshold (configured order), then K ascending.
    pub cells: Vec<ReportCell>,
    pub videos: Vec<VideoLedger>,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn cell(&self, k: usize, threshold: f64) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.k == k && c.threshold == threshold)
    }
}

struct VideoOutcome {
    ledger: VideoLedger,
    /// per (k, threshold) cell: matched counts by predicate
    matched: Vec<BTreeMap<PredicateId, u64>>,
    gt_by_predicate: BTreeMap<PredicateId, u64>,
    warnings: Vec<String>,
}

fn ground<'a>(
    graph: &'a SceneGraph,
    relations: &'a [RelationTriplet],
    warnings: &mut Vec<String>,
    role: &str,
) -> Vec<GroundedTriplet<'a>> {
    let tubes = graph.tube_index();
    relations
        .iter()
        .filter_map(|r| match (tubes.get(&r.subject_id), tubes.get(&r.object_id)) {
            (Some(s), Some(o)) => Some(GroundedTriplet { relation: r, subject: s, object: o }),
            _ => {
                warnings.push(format!(
                    "video {}: {role} relation ({}, {}, {}) has a missing endpoint; ignored",
                    graph.meta.video_id, r.subject_id, r.object_id, r.predicate_id
                ));
                None
            }
        })
        .collect()
}

/// Computes the R@K / mR@K grid over a corpus. Videos are matched by id;
/// a GT video without predictions contributes no matches and a warning.
pub fn evaluate(gt_graphs: &[SceneGraph], pred_graphs: &[SceneGraph], cfg: &EvalConfig, vocab: &Vocabulary) -> Result<EvalReport> {
    cfg.validate()?;
    let ks = cfg.sorted_ks();
    let thresholds = cfg.thresholds();
    let cells: Vec<(usize, f64)> = thresholds.iter().flat_map(|&t| ks.iter().map(move |&k| (k, t))).collect();

    let mut warnings = Vec::new();
    let mut pred_by_id: HashMap<&str, &SceneGraph> = HashMap::new();
    for p in pred_graphs {
        if pred_by_id.insert(p.meta.video_id.as_str(), p).is_some() {
            return Err(Error::invalid(format!("duplicate prediction for video {}", p.meta.video_id)));
        }
    }
    for p in pred_graphs {
        if !gt_graphs.iter().any(|g| g.meta.video_id == p.meta.video_id) {
            warnings.push(format!("video {}: predictions without ground truth; ignored", p.meta.video_id));
        }
    }

    // canonical relations per video
    let gt_rel: Vec<Vec<RelationTriplet>> = gt_graphs.iter().map(|g| canonicalize_relations(&g.relations)).collect();
    let pred_rel: Vec<Option<Vec<RelationTriplet>>> = gt_graphs
        .iter()
        .map(|g| pred_by_id.get(g.meta.video_id.as_str()).map(|p| canonicalize_relations(&p.relations)))
        .collect();

    // corpus scope: global ranking decides which predictions survive the cut
    let corpus_cut: Option<Vec<Vec<usize>>> = match cfg.top_k_scope {
        TopKScope::PerVideo => None,
        TopKScope::Corpus => {
            let mut all: Vec<(usize, usize, f64, (ClassId, ClassId, PredicateId))> = Vec::new();
            let mut scratch = Vec::new();
            for (v, g) in gt_graphs.iter().enumerate() {
                if let (Some(p), Some(rels)) = (pred_by_id.get(g.meta.video_id.as_str()), &pred_rel[v]) {
                    for (i, gp) in ground(p, rels, &mut scratch, "predicted").into_iter().enumerate() {
                        all.push((v, i, gp.relation.score, gp.class_key()));
                    }
                }
            }
            all.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.3.cmp(&b.3)).then((a.0, a.1).cmp(&(b.0, b.1))));
            // rank of each prediction in the corpus ordering
            let mut ranks = vec![Vec::new(); gt_graphs.len()];
            for (rank, &(v, i, _, _)) in all.iter().enumerate() {
                if ranks[v].len() <= i {
                    ranks[v].resize(i + 1, usize::MAX);
                }
                ranks[v][i] = rank;
            }
            Some(ranks)
        }
    };

    let outcomes: Vec<Result<VideoOutcome>> = gt_graphs
        .par_iter()
        .enumerate()
        .map(|(v, g)| {
            let mut warns = Vec::new();
            let gts = ground(g, &gt_rel[v], &mut warns, "ground-truth");
            check_gt_keys(&gts)?;
            let mut gt_by_predicate = BTreeMap::new();
            for gt in &gts {
                *gt_by_predicate.entry(gt.relation.predicate_id).or_insert(0u64) += 1;
            }
            let pred_graph = pred_by_id.get(g.meta.video_id.as_str()).copied();
            let preds = match (pred_graph, &pred_rel[v]) {
                (Some(p), Some(rels)) => {
                    if p.meta.height != g.meta.height || p.meta.width != g.meta.width {
                        return Err(Error::invalid(format!(
                            "video {}: prediction geometry {}x{} differs from ground truth {}x{}",
                            g.meta.video_id, p.meta.height, p.meta.width, g.meta.height, g.meta.width
                        )));
                    }
                    ground(p, rels, &mut warns, "predicted")
                }
                _ => {
                    warns.push(format!("video {}: no predictions; counted as zero matches", g.meta.video_id));
                    Vec::new()
                }
            };

            let order = prediction_order(&preds);
            let max_k = *ks.last().expect("validated non-empty");
            let considered: Vec<usize> = match &corpus_cut {
                None => order.iter().copied().take(max_k).collect(),
                Some(ranks) => order.iter().copied().filter(|&i| ranks[v].get(i).is_some_and(|&r| r < max_k)).collect(),
            };
            let table = OverlapTable::build(&preds, &gts, cfg.mask_gate);

            let mut matched = Vec::with_capacity(cells.len());
            let mut entries = Vec::new();
            for &(k, threshold) in &cells {
                let cut: Vec<usize> = match &corpus_cut {
                    None => considered.iter().copied().take(k).collect(),
                    Some(ranks) => considered.iter().copied().filter(|&i| ranks[v][i] < k).collect(),
                };
                let mut per_pred = BTreeMap::new();
                for m in table.greedy(&cut, threshold) {
                    let (p, gt) = (&preds[m.pred], &gts[m.gt]);
                    *per_pred.entry(gt.relation.predicate_id).or_insert(0u64) += 1;
                    entries.push(LedgerEntry {
                        k,
                        threshold,
                        gt_subject: gt.relation.subject_id,
                        gt_object: gt.relation.object_id,
                        predicate: gt.relation.predicate_id,
                        pred_subject: p.relation.subject_id,
                        pred_object: p.relation.object_id,
                        pred_score: p.relation.score,
                        volume_iou: m.volume_iou,
                    });
                }
                matched.push(per_pred);
            }
            Ok(VideoOutcome {
                ledger: VideoLedger {
                    video_id: g.meta.video_id.clone(),
                    gt_triplets: gts.len(),
                    pred_triplets: preds.len(),
                    matches: entries,
                },
                matched,
                gt_by_predicate,
                warnings: warns,
            })
        })
        .collect();

    let mut gt_by_predicate: BTreeMap<PredicateId, u64> = BTreeMap::new();
    let mut matched_by_cell: Vec<BTreeMap<PredicateId, u64>> = vec![BTreeMap::new(); cells.len()];
    let mut videos = Vec::with_capacity(gt_graphs.len());
    for outcome in outcomes {
        let o = outcome?;
        for (p, n) in o.gt_by_predicate {
            *gt_by_predicate.entry(p).or_default() += n;
        }
        for (acc, m) in matched_by_cell.iter_mut().zip(o.matched) {
            for (p, n) in m {
                *acc.entry(p).or_default() += n;
            }
        }
        warnings.extend(o.warnings);
        videos.push(o.ledger);
    }
    let total_gt: u64 = gt_by_predicate.values().sum();

    let report_cells = cells
        .iter()
        .zip(&matched_by_cell)
        .map(|(&(k, threshold), m)| {
            let per_predicate: Vec<PredicateRecall> = gt_by_predicate
                .iter()
                .map(|(&p, &total)| {
                    let hit = m.get(&p).copied().unwrap_or(0);
                    PredicateRecall {
                        predicate_id: p,
                        name: vocab.predicate_classes().get(p as usize).cloned().unwrap_or_default(),
                        matched: hit,
                        total,
                        recall: hit as f64 / total as f64,
                    }
                })
                .collect();
            let matched: u64 = m.values().sum();
            ReportCell {
                k,
                threshold,
                recall: if total_gt == 0 { 0.0 } else { matched as f64 / total_gt as f64 },
                mean_recall: if per_predicate.is_empty() {
                    0.0
                } else {
                    per_predicate.iter().map(|p| p.recall).sum::<f64>() / per_predicate.len() as f64
                },
                matched,
                total: total_gt,
                per_predicate,
            }
        })
        .collect();

    Ok(EvalReport {
        k_values: ks,
        thresholds,
        mask_gate: cfg.mask_gate,
        top_k_scope: cfg.top_k_scope,
        num_videos: gt_graphs.len(),
        total_gt,
        cells: report_cells,
        videos,
        warnings,
    })
}

/// Plain-text grid: one row per labelled report, `R / mR @K` columns grouped
/// by threshold, values in percent.
pub fn render_grid(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    let Some((_, first)) = rows.first() else {
        return out;
    };
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let col_w = 15;
    let _ = write!(out, "{:label_w$}", "");
    for &t in &first.thresholds {
        let _ = write!(out, " | {:<w$}", format!("thre={t}"), w = col_w * first.k_values.len() + first.k_values.len() - 1);
    }
    out.push('\n');
    let _ = write!(out, "{:label_w$}", "method");
    for _ in &first.thresholds {
        out.push_str(" |");
        for &k in &first.k_values {
            let _ = write!(out, " {:>col_w$}", format!("R/mR@{k}"));
        }
    }
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{label:label_w$}");
        for &t in &report.thresholds {
            out.push_str(" |");
            for &k in &report.k_values {
                let cell = report.cell(k, t);
                let text = cell
                    .map(|c| format!("{:.2} / {:.2}", c.recall * 100.0, c.mean_recall * 100.0))
                    .unwrap_or_else(|| "-".into());
                let _ = write!(out, " {text:>col_w$}");
            }
        }
        out.push('\n');
    }
    out
}
