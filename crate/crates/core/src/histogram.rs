use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Integer-valued histogram, serialized as a `{value: count}` map.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Histogram {
    bins: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: u64) {
        self.add_n(value, 1);
    }

    pub fn add_n(&mut self, value: u64, n: u64) {
        if n > 0 {
            *self.bins.entry(value).or_default() += n;
        }
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (&v, &n) in &other.bins {
            self.add_n(v, n);
        }
    }

    /// Number of observations.
    pub fn total(&self) -> u64 {
        self.bins.values().sum()
    }

    /// Sum of observed values.
    pub fn sum(&self) -> u128 {
        self.bins.iter().map(|(&v, &n)| u128::from(v) * u128::from(n)).sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.sum() as f64 / total as f64)
    }

    pub fn min(&self) -> Option<u64> {
        self.bins.keys().next().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.bins.keys().next_back().copied()
    }

    /// Lower median: the element at index `(n - 1) / 2` of the sorted sample.
    pub fn lower_median(&self) -> Option<u64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let target = (total - 1) / 2;
        let mut seen = 0;
        for (&v, &n) in &self.bins {
            seen += n;
            if seen > target {
                return Some(v);
            }
        }
        unreachable!("histogram total disagrees with bins")
    }

    /// Value with the highest count; ties go to the smaller value.
    pub fn mode(&self) -> Option<u64> {
        self.bins
            .iter()
            .fold(None, |best: Option<(u64, u64)>, (&v, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((v, n)),
            })
            .map(|(v, _)| v)
    }

    pub fn count(&self, value: u64) -> u64 {
        self.bins.get(&value).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.bins.iter().map(|(&v, &n)| (v, n))
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

impl FromIterator<u64> for Histogram {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut h = Histogram::new();
        for v in iter {
            h.add(v);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let h: Histogram = [1, 2, 3].into_iter().collect();
        assert_eq!(h.mean(), Some(2.0));
        assert_eq!(h.lower_median(), Some(2));
        assert_eq!((h.min(), h.max()), (Some(1), Some(3)));
        let h: Histogram = [1, 2, 3, 4].into_iter().collect();
        assert_eq!(h.lower_median(), Some(2));
        assert_eq!(Histogram::new().lower_median(), None);
        let h: Histogram = [3, 3, 6, 6, 1].into_iter().collect();
        assert_eq!(h.mode(), Some(3));
    }

    #[test]
    fn serializes_as_value_count_map() {
        let h: Histogram = [3, 3, 9].into_iter().collect();
        assert_eq!(serde_json::to_string(&h).unwrap(), r#"{"3":2,"9":1}"#);
    }
}
