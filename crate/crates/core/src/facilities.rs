//! Facility-level statistics: admissions, distinct patients, decade buckets
//! and daily census.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::cohort::PatientHistory;
use crate::records::{Dataset, DayStamp, ValidatedRecord, Window};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearStats {
    pub admissions: u64,
    pub distinct_patients: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityStats {
    pub facility_id: String,
    pub admissions: u64,
    pub distinct_patients: u64,
    /// Keyed by admission year.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_year: BTreeMap<i32, YearStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Admissions,
    Patients,
}

impl FacilityStats {
    pub fn metric(&self, m: Metric) -> u64 {
        match m {
            Metric::Admissions => self.admissions,
            Metric::Patients => self.distinct_patients,
        }
    }
}

/// Per-facility admissions and distinct patients, sorted by facility id.
pub fn facility_stats(d: &Dataset, per_year: bool) -> Vec<FacilityStats> {
    #[derive(Default)]
    struct Acc<'a> {
        admissions: u64,
        patients: HashSet<&'a str>,
        years: BTreeMap<i32, (u64, HashSet<&'a str>)>,
    }
    let mut by_facility: HashMap<&str, Acc> = HashMap::new();
    for r in &d.records {
        let acc = by_facility.entry(&r.facility_id).or_default();
        acc.admissions += 1;
        acc.patients.insert(&r.patient_id);
        if per_year {
            let y = acc.years.entry(r.admission.year()).or_default();
            y.0 += 1;
            y.1.insert(&r.patient_id);
        }
    }
    let mut stats: Vec<FacilityStats> = by_facility
        .into_iter()
        .map(|(id, acc)| FacilityStats {
            facility_id: id.to_string(),
            admissions: acc.admissions,
            distinct_patients: acc.patients.len() as u64,
            per_year: acc
                .years
                .into_iter()
                .map(|(y, (n, p))| (y, YearStats { admissions: n, distinct_patients: p.len() as u64 }))
                .collect(),
        })
        .collect();
    stats.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
    stats
}

/// Decade buckets 1-9, 10-99, ..., 10 000-99 999 and 100 000+.
pub const BUCKET_COUNT: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: u64,
    /// Inclusive upper bound; `None` for the open last bucket.
    pub hi: Option<u64>,
    pub facilities: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketHistogram {
    pub buckets: Vec<Bucket>,
}

pub fn bucket_index(value: u64) -> Option<usize> {
    if value == 0 {
        return None;
    }
    Some((value.ilog10() as usize).min(BUCKET_COUNT - 1))
}

impl BucketHistogram {
    pub fn from_values<I: IntoIterator<Item = u64>>(values: I) -> BucketHistogram {
        let mut counts = [0u64; BUCKET_COUNT];
        for v in values {
            if let Some(i) = bucket_index(v) {
                counts[i] += 1;
            }
        }
        BucketHistogram {
            buckets: counts
                .iter()
                .enumerate()
                .map(|(i, &facilities)| Bucket {
                    lo: 10u64.pow(i as u32),
                    hi: (i + 1 < BUCKET_COUNT).then(|| 10u64.pow(i as u32 + 1) - 1),
                    facilities,
                })
                .collect(),
        }
    }

    pub fn total(&self) -> u64 {
        self.buckets.iter().map(|b| b.facilities).sum()
    }
}

pub fn bucketize(stats: &[FacilityStats], metric: Metric) -> BucketHistogram {
    BucketHistogram::from_values(stats.iter().map(|s| s.metric(metric)))
}

/// Facilities sorted by descending metric, ties by facility id.
pub fn top_k_facilities(stats: &[FacilityStats], k: usize, metric: Metric) -> Vec<FacilityStats> {
    let mut sorted: Vec<&FacilityStats> = stats.iter().collect();
    sorted.sort_by(|a, b| b.metric(metric).cmp(&a.metric(metric)).then_with(|| a.facility_id.cmp(&b.facility_id)));
    sorted.into_iter().take(k).cloned().collect()
}

/// Concurrent stays at one facility for each day of a range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusSeries {
    pub facility_id: String,
    pub start: DayStamp,
    pub counts: Vec<u32>,
}

impl CensusSeries {
    pub fn days(&self) -> impl Iterator<Item = (DayStamp, u32)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (self.start.offset(i as i32), c))
    }

    pub fn get(&self, day: DayStamp) -> Option<u32> {
        let i = day.days_since(self.start);
        (i >= 0).then(|| self.counts.get(i as usize).copied()).flatten()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// CSV rows `facility,date,count`, without header.
    pub fn write_csv_rows(&self, out: &mut String) {
        for (day, count) in self.days() {
            out.push_str(&format!("{},{},{}\n", self.facility_id, day, count));
        }
    }
}

/// Adds a stay to a difference array anchored at `range.start`, clipping to
/// the range.
fn add_stay(diff: &mut [i32], range: &Window, admission: DayStamp, discharge: DayStamp) {
    let from = admission.max(range.start);
    let to = discharge.min(range.end);
    if from > to {
        return;
    }
    diff[from.days_since(range.start) as usize] += 1;
    diff[to.days_since(range.start) as usize + 1] -= 1;
}

fn prefix_sum(diff: &[i32]) -> Vec<u32> {
    let mut running = 0i32;
    diff[..diff.len() - 1]
        .iter()
        .map(|d| {
            running += d;
            running as u32
        })
        .collect()
}

/// Census by difference-array sweep. An unknown facility gives all zeros.
pub fn daily_census<'a, I>(records: I, facility_id: &str, range: &Window) -> CensusSeries
where
    I: IntoIterator<Item = &'a ValidatedRecord>,
{
    let mut diff = vec![0i32; range.len_days() + 1];
    for r in records.into_iter().filter(|r| r.facility_id == facility_id) {
        add_stay(&mut diff, range, r.admission, r.discharge);
    }
    CensusSeries { facility_id: facility_id.to_string(), start: range.start, counts: prefix_sum(&diff) }
}

/// Streaming facility statistics over patient histories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FacilityAccumulator {
    stats: BTreeMap<String, FacilityStats>,
}

impl FacilityAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, h: &PatientHistory) {
        let mut facilities: BTreeSet<&str> = BTreeSet::new();
        let mut facility_years: BTreeSet<(&str, i32)> = BTreeSet::new();
        for s in &h.stays {
            let year = s.admission.year();
            let entry = self.stats.entry(s.facility_id.clone()).or_insert_with(|| FacilityStats {
                facility_id: s.facility_id.clone(),
                admissions: 0,
                distinct_patients: 0,
                per_year: BTreeMap::new(),
            });
            entry.admissions += 1;
            entry.per_year.entry(year).or_default().admissions += 1;
            if facilities.insert(&s.facility_id) {
                entry.distinct_patients += 1;
            }
            if facility_years.insert((&s.facility_id, year)) {
                entry.per_year.entry(year).or_default().distinct_patients += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &FacilityAccumulator) {
        for (id, s) in &other.stats {
            match self.stats.get_mut(id) {
                None => {
                    self.stats.insert(id.clone(), s.clone());
                }
                Some(mine) => {
                    mine.admissions += s.admissions;
                    mine.distinct_patients += s.distinct_patients;
                    for (y, ys) in &s.per_year {
                        let m = mine.per_year.entry(*y).or_default();
                        m.admissions += ys.admissions;
                        m.distinct_patients += ys.distinct_patients;
                    }
                }
            }
        }
    }

    /// Stats sorted by facility id.
    pub fn stats(&self) -> Vec<FacilityStats> {
        self.stats.values().cloned().collect()
    }

    pub fn report(&self, census_top: usize) -> FacilityReport {
        let stats = self.stats();
        let years: BTreeSet<i32> = stats.iter().flat_map(|s| s.per_year.keys().copied()).collect();
        let per_year_buckets = |metric: Metric| -> BTreeMap<i32, BucketHistogram> {
            years
                .iter()
                .map(|&y| {
                    let values = stats.iter().filter_map(|s| s.per_year.get(&y)).map(|ys| match metric {
                        Metric::Admissions => ys.admissions,
                        Metric::Patients => ys.distinct_patients,
                    });
                    (y, BucketHistogram::from_values(values))
                })
                .collect()
        };
        FacilityReport {
            schema_version: crate::SCHEMA_VERSION,
            facilities: stats.len() as u64,
            admission_buckets: bucketize(&stats, Metric::Admissions),
            patient_buckets: bucketize(&stats, Metric::Patients),
            admission_buckets_per_year: per_year_buckets(Metric::Admissions),
            patient_buckets_per_year: per_year_buckets(Metric::Patients),
            census_facilities: top_k_facilities(&stats, census_top, Metric::Admissions)
                .into_iter()
                .map(|s| s.facility_id)
                .collect(),
            stats,
        }
    }
}

/// Census difference arrays for every facility over a fixed range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusAccumulator {
    range: Window,
    diffs: BTreeMap<String, Vec<i32>>,
}

impl CensusAccumulator {
    pub fn new(range: Window) -> Self {
        CensusAccumulator { range, diffs: BTreeMap::new() }
    }

    pub fn observe(&mut self, r: &ValidatedRecord) {
        let len = self.range.len_days() + 1;
        if !self.diffs.contains_key(&r.facility_id) {
            self.diffs.insert(r.facility_id.clone(), vec![0; len]);
        }
        let diff = self.diffs.get_mut(&r.facility_id).expect("inserted above");
        add_stay(diff, &self.range, r.admission, r.discharge);
    }

    pub fn series(&self, facility_id: &str) -> CensusSeries {
        let counts = match self.diffs.get(facility_id) {
            Some(diff) => prefix_sum(diff),
            None => vec![0; self.range.len_days()],
        };
        CensusSeries { facility_id: facility_id.to_string(), start: self.range.start, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityReport {
    pub schema_version: u32,
    pub facilities: u64,
    pub admission_buckets: BucketHistogram,
    pub patient_buckets: BucketHistogram,
    pub admission_buckets_per_year: BTreeMap<i32, BucketHistogram>,
    pub patient_buckets_per_year: BTreeMap<i32, BucketHistogram>,
    /// Facilities whose census series are exported, largest first.
    pub census_facilities: Vec<String>,
    pub stats: Vec<FacilityStats>,
}
