//! Inclusive ranges of Hilbert indices and normalised sets of them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Inclusive `[low, high]` range of curve indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub low: u32,
    pub high: u32,
}

impl Interval {
    /// Returns `None` when `low > high`.
    pub fn new(low: u32, high: u32) -> Option<Self> {
        (low <= high).then_some(Self { low, high })
    }

    pub fn point(index: u32) -> Self {
        Self {
            low: index,
            high: index,
        }
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        overlaps(self, other)
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        Interval::new(self.low.max(other.low), self.high.min(other.high))
    }

    pub fn contains(&self, index: u32) -> bool {
        self.low <= index && index <= self.high
    }

    /// Number of indices covered.
    pub fn len(&self) -> u64 {
        u64::from(self.high - self.low) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn overlaps(a: &Interval, b: &Interval) -> bool {
    a.low <= b.high && a.high >= b.low
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.low == self.high {
            write!(f, "{}", self.low)
        } else {
            write!(f, "{}-{}", self.low, self.high)
        }
    }
}

/// Sorted, disjoint, non-adjacent intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IntervalSet(Vec<Interval>);

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sorts and merges overlapping or touching intervals.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(intervals: I) -> Self {
        let mut all: Vec<Interval> = intervals.into_iter().collect();
        all.sort_unstable();
        let mut merged: Vec<Interval> = Vec::with_capacity(all.len());
        for iv in all {
            match merged.last_mut() {
                Some(last) if u64::from(iv.low) <= u64::from(last.high) + 1 => {
                    last.high = last.high.max(iv.high);
                }
                _ => merged.push(iv),
            }
        }
        Self(merged)
    }

    /// Appends an interval that starts after everything already present,
    /// merging with the last one when they touch.
    pub(crate) fn push_ordered(&mut self, iv: Interval) {
        match self.0.last_mut() {
            Some(last) if u64::from(iv.low) <= u64::from(last.high) + 1 => {
                debug_assert!(iv.low >= last.low);
                last.high = last.high.max(iv.high);
            }
            _ => self.0.push(iv),
        }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Interval> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Interval> {
        self.0.iter()
    }

    /// Total number of indices covered.
    pub fn cardinality(&self) -> u64 {
        self.0.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, index: u32) -> bool {
        let at = self.0.partition_point(|iv| iv.high < index);
        self.0.get(at).is_some_and(|iv| iv.contains(index))
    }

    /// Expands to individual indices.
    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().flat_map(|iv| iv.low..=iv.high)
    }

    pub fn intersection(&self, other: &IntervalSet) -> IntervalSet {
        let (mut i, mut j) = (0, 0);
        let mut out = IntervalSet::new();
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i], other.0[j]);
            if let Some(iv) = a.intersection(&b) {
                out.push_ordered(iv);
            }
            if a.high < b.high {
                i += 1;
            } else {
                j += 1;
            }
        }
        out
    }

    pub fn overlaps(&self, other: &IntervalSet) -> bool {
        !self.intersection(other).is_empty()
    }

    /// Checks sortedness, disjointness and non-adjacency.
    pub fn is_normalized(&self) -> bool {
        self.0.iter().all(|iv| iv.low <= iv.high)
            && self
                .0
                .windows(2)
                .all(|w| u64::from(w[0].high) + 1 < u64::from(w[1].low))
    }
}

impl<'a> IntoIterator for &'a IntervalSet {
    type Item = &'a Interval;
    type IntoIter = std::slice::Iter<'a, Interval>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        Self::from_intervals(iter)
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{iv}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid interval list {0:?}; expected e.g. \"5-12,55\"")]
pub struct ParseIntervalsError(pub String);

impl FromStr for IntervalSet {
    type Err = ParseIntervalsError;

    /// Comma-separated `low-high` ranges or single indices, as printed by
    /// `Display`. Input need not be sorted or disjoint.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseIntervalsError(s.to_owned());
        let mut list = Vec::new();
        for part in s.split(',').map(str::trim) {
            let (low, high) = part.split_once('-').unwrap_or((part, part));
            let low: u32 = low.trim().parse().map_err(|_| err())?;
            let high: u32 = high.trim().parse().map_err(|_| err())?;
            list.push(Interval::new(low, high).ok_or_else(err)?);
        }
        Ok(Self::from_intervals(list))
    }
}
