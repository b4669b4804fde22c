//! Exact half-open intervals `[lo, hi)` and sorted disjoint interval sets.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Half-open interval `[lo, hi)` with exact endpoints. Empty iff `lo >= hi`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Scalar,
    pub hi: Scalar,
}

impl Interval {
    pub fn new(lo: Scalar, hi: Scalar) -> Self {
        Interval { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }

    pub fn length(&self) -> Scalar {
        if self.is_empty() {
            Scalar::zero()
        } else {
            &self.hi - &self.lo
        }
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        *x >= self.lo && *x < self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.is_empty() || (other.lo >= self.lo && other.hi <= self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = if self.lo >= other.lo {
            self.lo.clone()
        } else {
            other.lo.clone()
        };
        let hi = if self.hi <= other.hi {
            self.hi.clone()
        } else {
            other.hi.clone()
        };
        Interval { lo, hi }
    }

    pub fn translate(&self, by: &Scalar) -> Interval {
        Interval {
            lo: &self.lo + by,
            hi: &self.hi + by,
        }
    }

    pub fn midpoint(&self) -> Scalar {
        (&self.lo + &self.hi) / Scalar::from_integer(2)
    }

    pub fn disjoint_from(&self, other: &Interval) -> bool {
        self.is_empty() || other.is_empty() || self.hi <= other.lo || other.hi <= self.lo
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

/// A finite union of disjoint half-open intervals, kept sorted and with
/// touching pieces merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    /// Builds from arbitrary intervals: drops empties, sorts, merges overlaps
    /// and adjacencies.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(intervals: I) -> Self {
        let mut v: Vec<Interval> = intervals.into_iter().filter(|i| !i.is_empty()).collect();
        v.sort_by(|x, y| x.lo.cmp(&y.lo));
        let mut parts: Vec<Interval> = Vec::with_capacity(v.len());
        for iv in v {
            match parts.last_mut() {
                Some(last) if iv.lo <= last.hi => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => parts.push(iv),
            }
        }
        IntervalSet { parts }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn measure(&self) -> Scalar {
        self.parts
            .iter()
            .fold(Scalar::zero(), |acc, iv| acc + iv.length())
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        self.parts.iter().any(|iv| iv.contains(x))
    }

    pub fn translate(&self, by: &Scalar) -> IntervalSet {
        IntervalSet {
            parts: self.parts.iter().map(|iv| iv.translate(by)).collect(),
        }
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.parts.len() && j < other.parts.len() {
            let a = &self.parts[i];
            let b = &other.parts[j];
            let cap = a.intersect(b);
            if !cap.is_empty() {
                out.push(cap);
            }
            if a.hi <= b.hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { parts: out }
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        IntervalSet::from_intervals(self.parts.iter().chain(other.parts.iter()).cloned())
    }

    /// Set difference `self \ other`, by a linear merge of the sorted parts.
    pub fn difference(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let mut j = 0usize;
        for a in &self.parts {
            let mut lo = a.lo.clone();
            // skip blockers entirely to the left of this part
            while j < other.parts.len() && other.parts[j].hi <= lo {
                j += 1;
            }
            let mut jj = j;
            while jj < other.parts.len() && other.parts[jj].lo < a.hi {
                let b = &other.parts[jj];
                if b.lo > lo {
                    out.push(Interval::new(lo.clone(), b.lo.clone()));
                }
                if b.hi > lo {
                    lo = b.hi.clone();
                }
                if lo >= a.hi {
                    break;
                }
                jj += 1;
            }
            if lo < a.hi {
                out.push(Interval::new(lo, a.hi.clone()));
            }
        }
        IntervalSet { parts: out }
    }

    pub fn symmetric_difference(&self, other: &IntervalSet) -> IntervalSet {
        self.difference(other).union(&other.difference(self))
    }

    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.difference(other).is_empty()
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        IntervalSet::from_intervals(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: i64, b: i64) -> Interval {
        Interval::new(Scalar::from_ratio(a, 12), Scalar::from_ratio(b, 12))
    }

    #[test]
    fn merge_and_measure() {
        let s = IntervalSet::from_intervals([iv(0, 3), iv(3, 5), iv(7, 9), iv(8, 10)]);
        assert_eq!(s.parts().len(), 2);
        assert_eq!(s.measure(), Scalar::from_ratio(8, 12));
    }

    #[test]
    fn intersection_difference_symmetry() {
        let a = IntervalSet::from_intervals([iv(0, 6)]);
        let b = IntervalSet::from_intervals([iv(2, 4), iv(5, 8)]);
        let cap = a.intersect(&b);
        assert_eq!(cap.measure(), Scalar::from_ratio(3, 12));
        let sym = a.symmetric_difference(&b);
        // |A|+|B|-2|A∩B| = 6+5-6 = 5 twelfths
        assert_eq!(sym.measure(), Scalar::from_ratio(5, 12));
        assert!(cap.is_subset_of(&a) && cap.is_subset_of(&b));
    }

    #[test]
    fn difference_carves_holes() {
        let a = IntervalSet::from_intervals([iv(0, 10)]);
        let b = IntervalSet::from_intervals([iv(2, 3), iv(5, 7)]);
        let d = a.difference(&b);
        assert_eq!(d.parts().len(), 3);
        assert_eq!(d.measure(), Scalar::from_ratio(7, 12));
        assert!(b.intersect(&d).is_empty());
    }

    #[test]
    fn membership() {
        let s = IntervalSet::from_intervals([iv(0, 2), iv(4, 6)]);
        assert!(s.contains(&Scalar::from_ratio(1, 12)));
        assert!(!s.contains(&Scalar::from_ratio(2, 12)));
        assert!(s.contains(&Scalar::from_ratio(4, 12)));
        assert!(!s.contains(&Scalar::from_ratio(3, 12)));
    }
}
