use std::collections::BTreeMap;
use std::ops::Range;

/// Set of disjoint, non-adjacent half-open `u64` ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    // start -> end (exclusive)
    map: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Number of disjoint ranges.
    pub fn range_count(&self) -> usize {
        self.map.len()
    }

    /// Insert a range; returns how many values were not already present.
    pub fn insert(&mut self, r: Range<u64>) -> u64 {
        if r.start >= r.end {
            return 0;
        }
        let mut start = r.start;
        let mut end = r.end;
        let mut covered = 0;
        // Merge with a predecessor that overlaps or touches.
        if let Some((&s, &e)) = self.map.range(..=start).next_back() {
            if e >= start {
                if e >= end {
                    return 0;
                }
                covered += e - start;
                start = s;
                self.map.remove(&s);
            }
        }
        // Absorb successors starting within [start, end].
        let succ: Vec<(u64, u64)> = self.map.range(start..=end).map(|(&s, &e)| (s, e)).collect();
        for (s, e) in succ {
            self.map.remove(&s);
            covered += e.min(end) - s;
            end = end.max(e);
        }
        self.map.insert(start, end);
        (r.end - r.start) - covered
    }

    pub fn contains(&self, v: u64) -> bool {
        self.map.range(..=v).next_back().is_some_and(|(_, &e)| v < e)
    }

    /// Whether every value of `r` is present.
    pub fn covers(&self, r: Range<u64>) -> bool {
        if r.start >= r.end {
            return true;
        }
        self.map.range(..=r.start).next_back().is_some_and(|(_, &e)| e >= r.end)
    }

    /// Parts of `r` not present in the set, in ascending order.
    pub fn gaps(&self, r: Range<u64>) -> Vec<Range<u64>> {
        let mut out = Vec::new();
        let mut cursor = r.start;
        if let Some((_, &e)) = self.map.range(..=r.start).next_back() {
            cursor = cursor.max(e);
        }
        for (&s, &e) in self.map.range(r.start..r.end) {
            if s > cursor {
                out.push(cursor..s.min(r.end));
            }
            cursor = cursor.max(e);
        }
        if cursor < r.end {
            out.push(cursor..r.end);
        }
        out
    }

    /// Ranges from highest to lowest.
    pub fn iter_desc(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.map.iter().rev().map(|(&s, &e)| s..e)
    }

    pub fn iter(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.map.iter().map(|(&s, &e)| s..e)
    }

    pub fn max(&self) -> Option<u64> {
        self.map.iter().next_back().map(|(_, &e)| e - 1)
    }

    /// Drop the lowest ranges so that at most `keep` remain.
    pub fn truncate_low(&mut self, keep: usize) {
        while self.map.len() > keep {
            let first = *self.map.keys().next().expect("nonempty");
            self.map.remove(&first);
        }
    }

    /// Total number of values present.
    pub fn len(&self) -> u64 {
        self.map.iter().map(|(s, e)| e - s).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn merge_and_gaps() {
        let mut s = RangeSet::new();
        assert_eq!(s.insert(10..20), 10);
        assert_eq!(s.insert(30..40), 10);
        assert_eq!(s.insert(15..35), 10);
        assert_eq!(s.range_count(), 1);
        assert!(s.covers(10..40));
        assert!(!s.covers(9..40));
        assert_eq!(s.insert(40..41), 1);
        assert_eq!(s.range_count(), 1);
        assert_eq!(s.gaps(0..50), vec![0..10, 41..50]);
        assert_eq!(s.insert(12..13), 0);
    }

    proptest! {
        #[test]
        fn matches_a_naive_set(ops in proptest::collection::vec((0u64..200, 0u64..20), 0..40)) {
            let mut s = RangeSet::new();
            let mut naive = BTreeSet::new();
            for (start, len) in ops {
                let before = naive.len();
                naive.extend(start..start + len);
                let added = s.insert(start..start + len);
                prop_assert_eq!(added as usize, naive.len() - before);
            }
            for v in 0..230 {
                prop_assert_eq!(s.contains(v), naive.contains(&v));
            }
            prop_assert_eq!(s.len() as usize, naive.len());
            let gaps: u64 = s.gaps(0..230).iter().map(|r| r.end - r.start).sum();
            prop_assert_eq!(gaps as usize, 230 - naive.len());
            // Ranges never touch.
            let v: Vec<_> = s.iter().collect();
            for w in v.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
        }
    }
}
