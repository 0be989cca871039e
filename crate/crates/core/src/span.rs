//! Scattered frame spans: sorted, disjoint, non-adjacent half-open intervals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame index within a video.
pub type Frame = u32;

/// A set of frames stored as normalized half-open intervals `[start, end)`.
///
/// Normalized form: every interval is non-empty, intervals are sorted, and no
/// two intervals touch or overlap.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<(Frame, Frame)>", into = "Vec<(Frame, Frame)>")]
pub struct TimeSpan {
    intervals: Vec<(Frame, Frame)>,
}

impl TimeSpan {
    /// Builds a span from arbitrary intervals, merging overlapping and
    /// adjacent ones. Empty intervals are dropped; reversed ones rejected.
    pub fn from_intervals<I>(intervals: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Frame, Frame)>,
    {
        let mut raw: Vec<(Frame, Frame)> = Vec::new();
        for (s, e) in intervals {
            if e < s {
                return Err(Error::invalid(format!("interval [{s}, {e}) has end before start")));
            }
            if e > s {
                raw.push((s, e));
            }
        }
        Ok(Self::normalize(raw))
    }

    /// Single interval `[start, end)`.
    pub fn range(start: Frame, end: Frame) -> Result<Self> {
        Self::from_intervals([(start, end)])
    }

    /// Builds a span from an arbitrary collection of frames.
    pub fn from_frames<I: IntoIterator<Item = Frame>>(frames: I) -> Self {
        let mut fs: Vec<Frame> = frames.into_iter().collect();
        fs.sort_unstable();
        fs.dedup();
        let mut intervals: Vec<(Frame, Frame)> = Vec::new();
        for f in fs {
            match intervals.last_mut() {
                Some(last) if last.1 == f => last.1 = f + 1,
                _ => intervals.push((f, f + 1)),
            }
        }
        TimeSpan { intervals }
    }

    fn normalize(mut raw: Vec<(Frame, Frame)>) -> Self {
        raw.sort_unstable();
        let mut out: Vec<(Frame, Frame)> = Vec::with_capacity(raw.len());
        for (s, e) in raw {
            match out.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => out.push((s, e)),
            }
        }
        TimeSpan { intervals: out }
    }

    pub fn intervals(&self) -> &[(Frame, Frame)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn frame_count(&self) -> u64 {
        self.intervals.iter().map(|&(s, e)| u64::from(e - s)).sum()
    }

    pub fn first(&self) -> Option<Frame> {
        self.intervals.first().map(|i| i.0)
    }

    /// One past the last frame.
    pub fn end(&self) -> Option<Frame> {
        self.intervals.last().map(|i| i.1)
    }

    pub fn contains(&self, frame: Frame) -> bool {
        // intervals are sorted by start; find the last one starting at or before `frame`
        let idx = self.intervals.partition_point(|&(s, _)| s <= frame);
        idx > 0 && frame < self.intervals[idx - 1].1
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        self.intervals.iter().flat_map(|&(s, e)| s..e)
    }

    pub fn union(&self, other: &TimeSpan) -> TimeSpan {
        let mut raw = self.intervals.clone();
        raw.extend_from_slice(&other.intervals);
        Self::normalize(raw)
    }

    pub fn intersection(&self, other: &TimeSpan) -> TimeSpan {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let s = a[i].0.max(b[j].0);
            let e = a[i].1.min(b[j].1);
            if s < e {
                out.push((s, e));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        TimeSpan { intervals: out }
    }

    /// Restricts the span to `[start, end)`.
    pub fn clip(&self, start: Frame, end: Frame) -> TimeSpan {
        match TimeSpan::range(start, end.max(start)) {
            Ok(window) => self.intersection(&window),
            Err(_) => TimeSpan::default(),
        }
    }
}

impl TryFrom<Vec<(Frame, Frame)>> for TimeSpan {
    type Error = Error;

    fn try_from(v: Vec<(Frame, Frame)>) -> Result<Self> {
        TimeSpan::from_intervals(v)
    }
}

impl From<TimeSpan> for Vec<(Frame, Frame)> {
    fn from(span: TimeSpan) -> Self {
        span.intervals
    }
}

impl fmt::Debug for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, (s, e)) in self.intervals.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "[{s},{e})")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn adjacent_intervals_merge() {
        let span = TimeSpan::from_intervals([(10, 15), (0, 10)]).unwrap();
        assert_eq!(span.intervals(), &[(0, 15)]);
    }

    #[test]
    fn gaps_are_kept() {
        let span = TimeSpan::from_intervals([(20, 30), (0, 10)]).unwrap();
        assert_eq!(span.intervals(), &[(0, 10), (20, 30)]);
        assert_eq!(span.frame_count(), 20);
        assert!(span.contains(0) && span.contains(29) && !span.contains(10) && !span.contains(30));
    }

    #[test]
    fn reversed_interval_rejected() {
        assert!(TimeSpan::from_intervals([(5, 2)]).is_err());
    }

    #[test]
    fn json_form_is_pair_list() {
        let span = TimeSpan::from_intervals([(0, 3), (5, 6)]).unwrap();
        assert_eq!(serde_json::to_string(&span).unwrap(), "[[0,3],[5,6]]");
        let back: TimeSpan = serde_json::from_str("[[5,6],[0,3],[3,4]]").unwrap();
        assert_eq!(back.intervals(), &[(0, 4), (5, 6)]);
    }

    fn interval_list() -> impl Strategy<Value = Vec<(u32, u32)>> {
        prop::collection::vec((0u32..1000, 0u32..60).prop_map(|(s, l)| (s, (s + l).min(1000))), 0..12)
    }

    proptest! {
        #[test]
        fn count_matches_brute_force_union(a in interval_list(), b in interval_list()) {
            let sa = TimeSpan::from_intervals(a.clone()).unwrap();
            let sb = TimeSpan::from_intervals(b.clone()).unwrap();
            let set_a: BTreeSet<u32> = a.iter().flat_map(|&(s, e)| s..e).collect();
            let set_b: BTreeSet<u32> = b.iter().flat_map(|&(s, e)| s..e).collect();
            let u = sa.union(&sb);
            let i = sa.intersection(&sb);
            prop_assert_eq!(u.frame_count() as usize, set_a.union(&set_b).count());
            prop_assert_eq!(i.frame_count() as usize, set_a.intersection(&set_b).count());
            prop_assert_eq!(u.frames().collect::<Vec<_>>(), set_a.union(&set_b).copied().collect::<Vec<_>>());
            // normalized form
            for w in u.intervals().windows(2) {
                prop_assert!(w[0].1 < w[1].0);
            }
            prop_assert_eq!(TimeSpan::from_frames(set_a.iter().copied()), sa);
        }
    }
}
