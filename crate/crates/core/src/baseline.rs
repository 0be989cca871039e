//! Non-learned relation predictor.
//!
//! Pairs of tubes are ranked by co-visibility, each selected pair is scored
//! per frame by a Laplace-smoothed class-conditional predicate prior, the
//! per-predicate series is filtered with a short symmetric temporal kernel,
//! and spans are read off by thresholding.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassId, EntityId, MaskTube, PredicateId, RelationTriplet, SceneGraph, Vocabulary};
use crate::span::{Frame, TimeSpan};

/// Frame-weighted predicate counts per (subject class, object class).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub struct PredicatePrior {
    counts: BTreeMap<(ClassId, ClassId, PredicateId), u64>,
    laplace_alpha: f64,
    num_predicates: usize,
}

#[derive(Serialize, Deserialize)]
struct PriorRepr {
    laplace_alpha: f64,
    num_predicates: usize,
    counts: Vec<PriorCount>,
}

#[derive(Serialize, Deserialize)]
struct PriorCount {
    subject_class: ClassId,
    object_class: ClassId,
    predicate: PredicateId,
    count: u64,
}

impl TryFrom<PriorRepr> for PredicatePrior {
    type Error = Error;

    fn try_from(r: PriorRepr) -> Result<Self> {
        let mut prior = PredicatePrior::empty(r.num_predicates, r.laplace_alpha)?;
        for c in r.counts {
            if c.predicate as usize >= r.num_predicates {
                return Err(Error::invalid(format!("prior count for predicate {} out of range", c.predicate)));
            }
            *prior.counts.entry((c.subject_class, c.object_class, c.predicate)).or_default() += c.count;
        }
        Ok(prior)
    }
}

impl From<PredicatePrior> for PriorRepr {
    fn from(p: PredicatePrior) -> Self {
        PriorRepr {
            laplace_alpha: p.laplace_alpha,
            num_predicates: p.num_predicates,
            counts: p
                .counts
                .into_iter()
                .map(|((subject_class, object_class, predicate), count)| PriorCount {
                    subject_class,
                    object_class,
                    predicate,
                    count,
                })
                .collect(),
        }
    }
}

impl PredicatePrior {
    pub fn empty(num_predicates: usize, laplace_alpha: f64) -> Result<Self> {
        if num_predicates == 0 {
            return Err(Error::Config("prior needs at least one predicate class".into()));
        }
        if !(laplace_alpha > 0.0 && laplace_alpha.is_finite()) {
            return Err(Error::Config(format!("laplace alpha must be positive, got {laplace_alpha}")));
        }
        Ok(PredicatePrior { counts: BTreeMap::new(), laplace_alpha, num_predicates })
    }

    pub fn count(&self, subject: ClassId, object: ClassId, predicate: PredicateId) -> u64 {
        self.counts.get(&(subject, object, predicate)).copied().unwrap_or(0)
    }

    pub fn num_predicates(&self) -> usize {
        self.num_predicates
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `P(r | subject, object) = (count + a) / (total + a * |R|)`.
    pub fn row(&self, subject: ClassId, object: ClassId) -> Vec<f64> {
        let a = self.laplace_alpha;
        let counts: Vec<u64> = (0..self.num_predicates as PredicateId).map(|r| self.count(subject, object, r)).collect();
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + a * self.num_predicates as f64;
        counts.into_iter().map(|c| (c as f64 + a) / denom).collect()
    }
}

/// Counts one unit per (relation, frame in span), keyed by endpoint classes.
pub fn fit_prior(train: &[SceneGraph], vocab: &Vocabulary, laplace_alpha: f64) -> Result<PredicatePrior> {
    let mut prior = PredicatePrior::empty(vocab.num_predicates(), laplace_alpha)?;
    for g in train {
        let tubes = g.tube_index();
        for rel in &g.relations {
            let (Some(s), Some(o)) = (tubes.get(&rel.subject_id), tubes.get(&rel.object_id)) else {
                continue;
            };
            if rel.predicate_id as usize >= vocab.num_predicates() {
                return Err(Error::invalid(format!(
                    "video {}: predicate {} outside the vocabulary",
                    g.meta.video_id, rel.predicate_id
                )));
            }
            *prior.counts.entry((s.class_id, o.class_id, rel.predicate_id)).or_default() += rel.span.frame_count();
        }
    }
    Ok(prior)
}

/// Box dilation (pixels) used by the pair proximity tie-break.
pub const PROXIMITY_DILATION_PX: i64 = 4;

fn co_visible(a: &MaskTube, b: &MaskTube) -> Vec<Frame> {
    a.visible_frames().filter(|&t| b.mask(t).is_some_and(|m| !m.is_empty())).collect()
}

/// Mean IOU of the dilated bounding boxes over the given frames.
fn proximity(a: &MaskTube, b: &MaskTube, frames: &[Frame]) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    let d = PROXIMITY_DILATION_PX;
    let dilate = |m: &crate::rle::BinaryMask| {
        m.bbox().map(|(x0, y0, x1, y1)| (i64::from(x0) - d, i64::from(y0) - d, i64::from(x1) + d, i64::from(y1) + d))
    };
    let total: f64 = frames
        .iter()
        .map(|&t| {
            let (Some(ba), Some(bb)) = (a.mask(t).and_then(dilate), b.mask(t).and_then(dilate)) else {
                return 0.0;
            };
            let area = |b: (i64, i64, i64, i64)| ((b.2 - b.0).max(0) * (b.3 - b.1).max(0)) as f64;
            let inter = (ba.0.max(bb.0), ba.1.max(bb.1), ba.2.min(bb.2), ba.3.min(bb.3));
            let i = area(inter);
            i / (area(ba) + area(bb) - i)
        })
        .sum();
    total / frames.len() as f64
}

/// Ranks ordered pairs by co-visible frame count, then box proximity, then
/// ids, and keeps the first `budget`. Pairs never seen together are dropped.
pub fn select_pairs(tubes: &[MaskTube], budget: usize) -> Result<Vec<(EntityId, EntityId)>> {
    if budget == 0 {
        return Err(Error::Config("pair budget must be at least 1".into()));
    }
    let mut scored: Vec<(usize, f64, EntityId, EntityId)> = Vec::new();
    for (i, a) in tubes.iter().enumerate() {
        for b in &tubes[i + 1..] {
            let frames = co_visible(a, b);
            if frames.is_empty() {
                continue;
            }
            let prox = proximity(a, b, &frames);
            scored.push((frames.len(), prox, a.entity_id, b.entity_id));
            scored.push((frames.len(), prox, b.entity_id, a.entity_id));
        }
    }
    scored.sort_by(|x, y| y.0.cmp(&x.0).then(y.1.total_cmp(&x.1)).then((x.2, x.3).cmp(&(y.2, y.3))));
    Ok(scored.into_iter().take(budget).map(|s| (s.2, s.3)).collect())
}

/// Per-predicate score series, `values[predicate][frame]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSeries {
    pub values: Vec<Vec<f64>>,
}

impl ScoreSeries {
    pub fn num_frames(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Prior row on co-visible frames, zero elsewhere.
pub fn score_frames(subject: &MaskTube, object: &MaskTube, prior: &PredicatePrior, num_frames: u32) -> ScoreSeries {
    let row = prior.row(subject.class_id, object.class_id);
    let mut values = vec![vec![0.0; num_frames as usize]; row.len()];
    for t in co_visible(subject, object) {
        if t < num_frames {
            for (r, &p) in row.iter().enumerate() {
                values[r][t as usize] = p;
            }
        }
    }
    ScoreSeries { values }
}

/// Symmetric temporal filter with an odd number of taps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SmoothingKernel {
    weights: Vec<f64>,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        SmoothingKernel { weights: vec![0.25, 0.5, 1.0, 0.5, 0.25] }
    }
}

impl SmoothingKernel {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if n % 2 == 0 {
            return Err(Error::Config(format!("kernel needs an odd number of taps, got {n}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("kernel weights must be finite and non-negative".into()));
        }
        if (0..n / 2).any(|i| weights[i] != weights[n - 1 - i]) {
            return Err(Error::Config("kernel must be center-symmetric".into()));
        }
        if weights[n / 2] <= 0.0 {
            return Err(Error::Config("kernel center weight must be positive".into()));
        }
        Ok(SmoothingKernel { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl TryFrom<Vec<f64>> for SmoothingKernel {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        SmoothingKernel::new(w)
    }
}

impl From<SmoothingKernel> for Vec<f64> {
    fn from(k: SmoothingKernel) -> Self {
        k.weights
    }
}

/// How the filter treats taps falling outside the series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Drop missing taps and divide by the in-range weight sum.
    #[default]
    Renormalize,
    /// Treat missing taps as zeros and divide by the full weight sum.
    ZeroPad,
}

pub fn smooth(series: &[f64], kernel: &SmoothingKernel, boundary: Boundary) -> Vec<f64> {
    let w = kernel.weights();
    let c = (w.len() / 2) as isize;
    let n = series.len() as isize;
    let full: f64 = w.iter().sum();
    (0..n)
        .map(|t| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, &wk) in w.iter().enumerate() {
                let s = t + k as isize - c;
                if (0..n).contains(&s) {
                    acc += wk * series[s as usize];
                    norm += wk;
                }
            }
            match boundary {
                Boundary::Renormalize => acc / norm,
                Boundary::ZeroPad => acc / full,
            }
        })
        .collect()
}

/// One triplet per predicate whose series reaches `theta` somewhere; the span
/// is every frame at or above `theta` and the score is the mean over it.
pub fn extract_triplets(smoothed: &ScoreSeries, theta: f64, pair: (EntityId, EntityId)) -> Vec<RelationTriplet> {
    let mut out = Vec::new();
    for (r, series) in smoothed.values.iter().enumerate() {
        let frames: Vec<Frame> = (0..series.len()).filter(|&t| series[t] >= theta).map(|t| t as Frame).collect();
        if frames.is_empty() {
            continue;
        }
        let score = frames.iter().map(|&t| series[t as usize]).sum::<f64>() / frames.len() as f64;
        let span = TimeSpan::from_frames(frames);
        if let Ok(t) = RelationTriplet::new(pair.0, pair.1, r as PredicateId, span, score) {
            out.push(t);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub theta: f64,
    pub budget: usize,
    pub kernel: SmoothingKernel,
    pub boundary: Boundary,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { theta: 0.3, budget: 100, kernel: SmoothingKernel::default(), boundary: Boundary::Renormalize }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.budget == 0 {
            return Err(Error::Config("pair budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// Predicts relations for one video's tubes. Spans are restricted to frames
/// where both tubes are visible.
pub fn predict_relations(tubes: &[MaskTube], num_frames: u32, prior: &PredicatePrior, cfg: &BaselineConfig) -> Result<Vec<RelationTriplet>> {
    cfg.validate()?;
    let by_id: BTreeMap<EntityId, &MaskTube> = tubes.iter().map(|t| (t.entity_id, t)).collect();
    let pairs = select_pairs(tubes, cfg.budget)?;
    let per_pair: Vec<Vec<RelationTriplet>> = pairs
        .par_iter()
        .map(|&(s, o)| {
            let (subject, object) = (by_id[&s], by_id[&o]);
            let raw = score_frames(subject, object, prior, num_frames);
            let smoothed = ScoreSeries {
                values: raw.values.iter().map(|v| smooth(v, &cfg.kernel, cfg.boundary)).collect(),
            };
            let support = TimeSpan::from_frames(co_visible(subject, object));
            extract_triplets(&smoothed, cfg.theta, (s, o))
                .into_iter()
                .filter_map(|mut t| {
                    t.span = t.span.intersection(&support);
                    if t.span.is_empty() {
                        return None;
                    }
                    let series = &smoothed.values[t.predicate_id as usize];
                    t.score = t.span.frames().map(|f| series[f as usize]).sum::<f64>() / t.span.frame_count() as f64;
                    Some(t)
                })
                .collect()
        })
        .collect();
    Ok(per_pair.into_iter().flatten().collect())
}

/// Copies `tubes` into a prediction graph with baseline relations attached.
pub fn predict_graph(tubes: &SceneGraph, prior: &PredicatePrior, cfg: &BaselineConfig) -> Result<SceneGraph> {
    let relations = predict_relations(&tubes.tubes, tubes.meta.num_frames, prior, cfg)?;
    Ok(SceneGraph { meta: tubes.meta.clone(), tubes: tubes.tubes.clone(), relations })
}
