//! Run-length encoded binary masks and panoptic frames.
//!
//! Runs alternate background/foreground over row-major pixel order and always
//! start with a background run, which may be zero. Set operations walk the two
//! run lists side by side and never materialize the dense grid.

use crate::error::{Error, Result};
use crate::model::{ClassId, EntityId};

/// Single-frame binary mask in canonical RLE form.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: u32,
    width: u32,
    runs: Vec<u32>,
}

impl BinaryMask {
    /// Wraps an existing run list after checking it is canonical and sums to
    /// `height * width`.
    pub fn from_runs(height: u32, width: u32, runs: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::MalformedMask(format!("degenerate geometry {height}x{width}")));
        }
        let total: u64 = runs.iter().map(|&r| u64::from(r)).sum();
        let expected = u64::from(height) * u64::from(width);
        if total != expected {
            return Err(Error::MalformedMask(format!(
                "runs sum to {total}, expected {expected} for {height}x{width}"
            )));
        }
        if let Some(pos) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(Error::MalformedMask(format!("zero-length run at position {}", pos + 1)));
        }
        Ok(BinaryMask { height, width, runs })
    }

    /// Mask with no foreground pixels.
    pub fn empty(height: u32, width: u32) -> Self {
        BinaryMask { height, width, runs: vec![height * width] }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.height) * u64::from(self.width)
    }

    pub fn same_geometry(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| u64::from(r)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.len() < 2
    }

    /// Foreground pixel ranges `[start, end)` in row-major flat indices.
    pub fn foreground(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += u64::from(r);
            (i % 2 == 1).then_some((start, pos))
        })
    }

    /// Tight bounding box as `(x0, y0, x1, y1)`, exclusive upper corner.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let w = u64::from(self.width);
        let mut bounds: Option<(u64, u64, u64, u64)> = None;
        for (s, e) in self.foreground() {
            let (y0, y1) = (s / w, (e - 1) / w);
            let (x0, x1) = if y0 == y1 { (s % w, (e - 1) % w) } else { (0, w - 1) };
            bounds = Some(match bounds {
                None => (x0, y0, x1, y1),
                Some((a, b, c, d)) => (a.min(x0), b.min(y0), c.max(x1), d.max(y1)),
            });
        }
        bounds.map(|(x0, y0, x1, y1)| (x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1))
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        check_geometry(self, other)?;
        Ok(RunWalk::new(self, other).filter(|s| s.a && s.b).map(|s| s.len).sum())
    }

    pub fn union_area(&self, other: &BinaryMask) -> Result<u64> {
        check_geometry(self, other)?;
        Ok(RunWalk::new(self, other).filter(|s| s.a || s.b).map(|s| s.len).sum())
    }

    /// Pixel-wise union of two masks.
    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a || b)
    }

    /// Pixels of `self` not covered by `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.combine(other, |a, b| a && !b)
    }

    fn combine(&self, other: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        check_geometry(self, other)?;
        let mut builder = RunBuilder::default();
        for seg in RunWalk::new(self, other) {
            builder.push(op(seg.a, seg.b), seg.len);
        }
        Ok(BinaryMask { height: self.height, width: self.width, runs: builder.finish() })
    }
}

fn check_geometry(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.same_geometry(b) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "mask geometry mismatch: {}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )))
    }
}

/// Encodes a row-major grid of `height * width` pixels.
pub fn encode(dense: &[bool], height: u32, width: u32) -> Result<BinaryMask> {
    let expected = u64::from(height) * u64::from(width);
    if height == 0 || width == 0 || dense.len() as u64 != expected {
        return Err(Error::invalid(format!(
            "grid has {} entries, expected {height}x{width}",
            dense.len()
        )));
    }
    let mut builder = RunBuilder::default();
    for &px in dense {
        builder.push(px, 1);
    }
    Ok(BinaryMask { height, width, runs: builder.finish() })
}

/// Expands a mask back into its row-major grid.
pub fn decode(mask: &BinaryMask) -> Result<Vec<bool>> {
    // Masks built through this module are always canonical; re-check in case
    // the value was assembled by hand in a test or deserialized unchecked.
    let checked = BinaryMask::from_runs(mask.height, mask.width, mask.runs.clone())?;
    let mut out = Vec::with_capacity(checked.pixel_count() as usize);
    for (i, &r) in checked.runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    Ok(out)
}

/// Intersection over union computed on runs; two empty masks give 0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_geometry(a, b)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for seg in RunWalk::new(a, b) {
        if seg.a && seg.b {
            inter += seg.len;
        }
        if seg.a || seg.b {
            union += seg.len;
        }
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

#[derive(Default)]
struct RunBuilder {
    runs: Vec<u32>,
    current: bool,
    count: u32,
}

impl RunBuilder {
    fn push(&mut self, value: bool, len: u64) {
        if len == 0 {
            return;
        }
        if value != self.current {
            self.runs.push(self.count);
            self.current = value;
            self.count = 0;
        }
        self.count += len as u32;
    }

    fn finish(mut self) -> Vec<u32> {
        self.runs.push(self.count);
        self.runs
    }
}

struct Segment {
    len: u64,
    a: bool,
    b: bool,
}

/// Walks two run lists in lockstep, yielding maximal segments on which both
/// masks are constant.
struct RunWalk<'a> {
    a: &'a [u32],
    b: &'a [u32],
    ia: usize,
    ib: usize,
    left_a: u64,
    left_b: u64,
}

impl<'a> RunWalk<'a> {
    fn new(a: &'a BinaryMask, b: &'a BinaryMask) -> Self {
        RunWalk {
            a: &a.runs,
            b: &b.runs,
            ia: 0,
            ib: 0,
            left_a: u64::from(a.runs[0]),
            left_b: u64::from(b.runs[0]),
        }
    }

    fn advance(runs: &[u32], idx: &mut usize, left: &mut u64) {
        while *left == 0 && *idx + 1 < runs.len() {
            *idx += 1;
            *left = u64::from(runs[*idx]);
        }
    }
}

impl Iterator for RunWalk<'_> {
    type Item = Segment;

    fn next(&mut self) -> Option<Segment> {
        Self::advance(self.a, &mut self.ia, &mut self.left_a);
        Self::advance(self.b, &mut self.ib, &mut self.left_b);
        let len = self.left_a.min(self.left_b);
        if len == 0 {
            return None;
        }
        self.left_a -= len;
        self.left_b -= len;
        Some(Segment { len, a: self.ia % 2 == 1, b: self.ib % 2 == 1 })
    }
}

/// One panoptic segment in a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PanopticSegment {
    pub entity_id: EntityId,
    pub class_id: ClassId,
    pub confidence: f64,
    pub mask: BinaryMask,
}

/// Per-frame panoptic segmentation: disjoint classed segments.
#[derive(Clone, Debug, PartialEq)]
pub struct PanopticFrame {
    pub frame_index: u32,
    pub segments: Vec<PanopticSegment>,
}

impl PanopticFrame {
    /// Frame geometry, taken from the first segment.
    pub fn geometry(&self) -> Option<(u32, u32)> {
        self.segments.first().map(|s| (s.mask.height(), s.mask.width()))
    }

    /// Checks shared geometry and pairwise disjointness of the segments.
    pub fn check(&self) -> Result<()> {
        for (i, a) in self.segments.iter().enumerate() {
            for b in &self.segments[i + 1..] {
                if a.mask.intersection_area(&b.mask)? > 0 {
                    return Err(Error::invalid(format!(
                        "frame {}: segments {} and {} overlap",
                        self.frame_index, a.entity_id, b.entity_id
                    )));
                }
            }
        }
        Ok(())
    }
}
