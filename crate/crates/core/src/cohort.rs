//! Patient histories and population-level statistics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::histogram::Histogram;
use crate::icd::{chapter_of, Chapter};
use crate::records::{Dataset, Sex, ValidatedRecord, Window};

/// All stays of one patient in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientHistory {
    pub patient_id: String,
    pub stays: Vec<ValidatedRecord>,
    pub sex: Sex,
    pub birth_year: Option<i32>,
    /// Set when stays disagree on sex or birth year.
    pub demographic_conflict: bool,
}

/// Canonical stay order: admission, discharge, facility, then the remaining
/// fields so that the order is total.
pub fn stay_order(a: &ValidatedRecord, b: &ValidatedRecord) -> Ordering {
    (a.admission, a.discharge, &a.facility_id)
        .cmp(&(b.admission, b.discharge, &b.facility_id))
        .then_with(|| a.record.cmp(&b.record))
}

impl PatientHistory {
    /// Builds a history from stays that all belong to `patient_id`.
    pub fn new(patient_id: String, mut stays: Vec<ValidatedRecord>) -> PatientHistory {
        debug_assert!(stays.iter().all(|s| s.patient_id == patient_id));
        stays.sort_by(stay_order);
        let (sex, birth_year) = stays.first().map(|s| (s.sex, s.birth_year)).unwrap_or((Sex::Unknown, None));
        let demographic_conflict = stays.iter().any(|s| s.sex != sex || s.birth_year != birth_year);
        PatientHistory { patient_id, stays, sex, birth_year, demographic_conflict }
    }

    pub fn len(&self) -> usize {
        self.stays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stays.is_empty()
    }
}

/// Groups a dataset by patient; histories come back ordered by patient id.
pub fn group_by_patient(d: &Dataset) -> Vec<PatientHistory> {
    group_records(d.records.iter().cloned())
}

pub fn group_records<I: IntoIterator<Item = ValidatedRecord>>(records: I) -> Vec<PatientHistory> {
    let mut by_patient: HashMap<String, Vec<ValidatedRecord>> = HashMap::new();
    for r in records {
        by_patient.entry(r.patient_id.clone()).or_default().push(r);
    }
    let mut histories: Vec<PatientHistory> =
        by_patient.into_iter().map(|(p, stays)| PatientHistory::new(p, stays)).collect();
    histories.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    histories
}

/// Stay lengths in days, truncated at the window end.
pub fn stay_durations(h: &PatientHistory, window: &Window) -> Vec<u32> {
    h.stays.iter().map(|s| (s.discharge.min(window.end).0 - s.admission.0 + 1) as u32).collect()
}

/// Full days spent outside any facility between consecutive stays.
///
/// The previous discharge is the latest discharge seen so far, so a stay
/// nested inside a longer one does not open a spurious gap.
pub fn home_gaps(h: &PatientHistory) -> Vec<u32> {
    let mut gaps = Vec::new();
    let mut stays = h.stays.iter();
    let Some(first) = stays.next() else { return gaps };
    let mut last_discharge = first.discharge;
    for s in stays {
        let gap = s.admission.days_since(last_discharge) - 1;
        if gap >= 0 {
            gaps.push(gap as u32);
        }
        last_discharge = last_discharge.max(s.discharge);
    }
    gaps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionStats {
    pub patients: u64,
    pub admissions: u64,
    pub mean: f64,
    /// Lower median for even-sized samples.
    pub median: u64,
    pub max: u64,
    pub min: u64,
}

impl AdmissionStats {
    fn from_histogram(h: &Histogram) -> Option<AdmissionStats> {
        Some(AdmissionStats {
            patients: h.total(),
            admissions: h.sum() as u64,
            mean: h.mean()?,
            median: h.lower_median()?,
            max: h.max()?,
            min: h.min()?,
        })
    }
}

/// Per-sex statistics of the number of stays per patient.
pub fn admission_stats<'a, I>(histories: I) -> BTreeMap<Sex, AdmissionStats>
where
    I: IntoIterator<Item = &'a PatientHistory>,
{
    let mut by_sex: BTreeMap<Sex, Histogram> = BTreeMap::new();
    for h in histories {
        by_sex.entry(h.sex).or_default().add(h.len() as u64);
    }
    by_sex.iter().filter_map(|(s, h)| Some((*s, AdmissionStats::from_histogram(h)?))).collect()
}

/// Distinct patients per (birth year, sex).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopulationPyramid {
    pub counts: BTreeMap<(i32, Sex), u64>,
    /// Patients with unknown sex or birth year.
    pub unknown: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidRow {
    pub birth_year: i32,
    pub sex: Sex,
    pub count: u64,
}

impl PopulationPyramid {
    pub fn observe(&mut self, h: &PatientHistory) {
        match (h.birth_year, h.sex) {
            (Some(y), sex @ (Sex::Male | Sex::Female)) => *self.counts.entry((y, sex)).or_default() += 1,
            _ => self.unknown += 1,
        }
    }

    pub fn merge(&mut self, other: &PopulationPyramid) {
        for (k, n) in &other.counts {
            *self.counts.entry(*k).or_default() += n;
        }
        self.unknown += other.unknown;
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.unknown
    }

    pub fn rows(&self) -> Vec<PyramidRow> {
        self.counts.iter().map(|(&(birth_year, sex), &count)| PyramidRow { birth_year, sex, count }).collect()
    }
}

pub fn population_pyramid<'a, I>(histories: I) -> PopulationPyramid
where
    I: IntoIterator<Item = &'a PatientHistory>,
{
    let mut p = PopulationPyramid::default();
    for h in histories {
        p.observe(h);
    }
    p
}

/// Admissions per ICD chapter; unclassifiable codes counted apart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterCounts {
    pub by_chapter: BTreeMap<Chapter, u64>,
    pub unknown: u64,
}

impl ChapterCounts {
    pub fn observe(&mut self, r: &ValidatedRecord) {
        match chapter_of(&r.diagnosis) {
            Ok(c) => *self.by_chapter.entry(c).or_default() += 1,
            Err(_) => self.unknown += 1,
        }
    }

    pub fn merge(&mut self, other: &ChapterCounts) {
        for (c, n) in &other.by_chapter {
            *self.by_chapter.entry(*c).or_default() += n;
        }
        self.unknown += other.unknown;
    }

    pub fn total(&self) -> u64 {
        self.by_chapter.values().sum::<u64>() + self.unknown
    }
}

pub fn chapter_admission_counts(d: &Dataset) -> ChapterCounts {
    let mut counts = ChapterCounts::default();
    for r in &d.records {
        counts.observe(r);
    }
    counts
}

/// Streaming reduction of all cohort statistics over patient histories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortAccumulator {
    pub patients: u64,
    pub records: u64,
    pub censored: u64,
    pub demographic_conflicts: u64,
    pub stay_durations: Histogram,
    pub home_gaps: Histogram,
    pub stays_per_patient: BTreeMap<Sex, Histogram>,
    pub pyramid: PopulationPyramid,
    pub chapters: ChapterCounts,
}

impl CohortAccumulator {
    pub fn observe(&mut self, h: &PatientHistory, window: &Window) {
        self.patients += 1;
        self.records += h.len() as u64;
        self.censored += h.stays.iter().filter(|s| s.discharge > window.end).count() as u64;
        self.demographic_conflicts += u64::from(h.demographic_conflict);
        for d in stay_durations(h, window) {
            self.stay_durations.add(d.into());
        }
        for g in home_gaps(h) {
            self.home_gaps.add(g.into());
        }
        self.stays_per_patient.entry(h.sex).or_default().add(h.len() as u64);
        self.pyramid.observe(h);
        for s in &h.stays {
            self.chapters.observe(s);
        }
    }

    pub fn merge(&mut self, other: &CohortAccumulator) {
        self.patients += other.patients;
        self.records += other.records;
        self.censored += other.censored;
        self.demographic_conflicts += other.demographic_conflicts;
        self.stay_durations.merge(&other.stay_durations);
        self.home_gaps.merge(&other.home_gaps);
        for (s, h) in &other.stays_per_patient {
            self.stays_per_patient.entry(*s).or_default().merge(h);
        }
        self.pyramid.merge(&other.pyramid);
        self.chapters.merge(&other.chapters);
    }

    pub fn report(&self) -> CohortReport {
        let mut all = Histogram::new();
        for h in self.stays_per_patient.values() {
            all.merge(h);
        }
        CohortReport {
            schema_version: crate::SCHEMA_VERSION,
            patients: self.patients,
            records: self.records,
            censored_stays: self.censored,
            demographic_conflicts: self.demographic_conflicts,
            mean_stay_days: self.stay_durations.mean(),
            mean_home_gap_days: self.home_gaps.mean(),
            admissions_by_sex: self
                .stays_per_patient
                .iter()
                .filter_map(|(s, h)| Some((*s, AdmissionStats::from_histogram(h)?)))
                .collect(),
            admissions_all: AdmissionStats::from_histogram(&all),
            stays_per_patient: all,
            stay_durations: self.stay_durations.clone(),
            home_gaps: self.home_gaps.clone(),
            pyramid: self.pyramid.rows(),
            pyramid_unknown: self.pyramid.unknown,
            chapters: self.chapters.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub schema_version: u32,
    pub patients: u64,
    pub records: u64,
    pub censored_stays: u64,
    pub demographic_conflicts: u64,
    pub mean_stay_days: Option<f64>,
    pub mean_home_gap_days: Option<f64>,
    pub admissions_by_sex: BTreeMap<Sex, AdmissionStats>,
    pub admissions_all: Option<AdmissionStats>,
    pub stays_per_patient: Histogram,
    pub stay_durations: Histogram,
    pub home_gaps: Histogram,
    pub pyramid: Vec<PyramidRow>,
    pub pyramid_unknown: u64,
    pub chapters: ChapterCounts,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icd::IcdCode;
    use crate::records::{validate, DayStamp, Record, State};

    pub(crate) fn stay(patient: &str, facility: &str, from: &str, to: &str) -> ValidatedRecord {
        stay_with(patient, facility, from, to, "I21", Sex::Male, Some(1950))
    }

    fn stay_with(
        patient: &str,
        facility: &str,
        from: &str,
        to: &str,
        icd: &str,
        sex: Sex,
        birth_year: Option<i32>,
    ) -> ValidatedRecord {
        let r = Record {
            patient_id: patient.into(),
            facility_id: facility.into(),
            state: State::Saxony,
            admission: DayStamp::parse_iso(from).unwrap(),
            discharge: DayStamp::parse_iso(to).unwrap(),
            diagnosis: IcdCode::parse(icd).unwrap(),
            sex,
            birth_year,
        };
        validate(r, &Window::default()).unwrap()
    }

    fn dataset(records: Vec<ValidatedRecord>) -> Dataset {
        Dataset { records, window: Window::default() }
    }

    #[test]
    fn grouping_sizes_and_order() {
        let d = dataset(vec![
            stay("p1", "h1", "2012-03-01", "2012-03-02"),
            stay("p2", "h1", "2012-01-01", "2012-01-02"),
            stay("p1", "h2", "2012-01-01", "2012-01-05"),
            stay("p2", "h3", "2012-02-01", "2012-02-02"),
            stay("p1", "h1", "2012-01-01", "2012-01-03"),
        ]);
        let hs = group_by_patient(&d);
        assert_eq!(hs.iter().map(|h| (h.patient_id.as_str(), h.len())).collect::<Vec<_>>(), [("p1", 3), ("p2", 2)]);
        let p1: Vec<&str> = hs[0].stays.iter().map(|s| s.facility_id.as_str()).collect();
        assert_eq!(p1, ["h1", "h2", "h1"]);

        let single = group_by_patient(&dataset(vec![stay("p", "h", "2012-01-01", "2012-01-01")]));
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 1);
    }

    #[test]
    fn conflicting_demographics_keep_first_in_canonical_order() {
        let h = PatientHistory::new(
            "p".into(),
            vec![
                stay_with("p", "h", "2012-02-01", "2012-02-02", "I21", Sex::Female, Some(1960)),
                stay_with("p", "h", "2012-01-01", "2012-01-02", "I21", Sex::Male, Some(1950)),
            ],
        );
        assert!(h.demographic_conflict);
        assert_eq!((h.sex, h.birth_year), (Sex::Male, Some(1950)));
    }

    #[test]
    fn durations_including_censoring() {
        let h = PatientHistory::new(
            "p".into(),
            vec![
                stay("p", "h47", "2012-08-13", "2012-08-21"),
                stay("p", "h1", "2013-01-01", "2013-01-01"),
                stay("p", "h1", "2016-12-25", "2017-01-10"),
            ],
        );
        // 2016-12-25..2016-12-31 inclusive is seven days
        assert_eq!(stay_durations(&h, &Window::default()), [9, 1, 7]);
    }

    #[test]
    fn home_gap_conventions() {
        let gap = |a: (&str, &str), b: (&str, &str)| {
            home_gaps(&PatientHistory::new("p".into(), vec![stay("p", "h", a.0, a.1), stay("p", "g", b.0, b.1)]))
        };
        // 11th..16th of January: six days at home
        assert_eq!(gap(("2012-01-01", "2012-01-10"), ("2012-01-17", "2012-01-20")), [6]);
        assert_eq!(gap(("2012-01-01", "2012-01-10"), ("2012-01-11", "2012-01-20")), [0]);
        assert!(gap(("2012-01-01", "2012-01-10"), ("2012-01-10", "2012-01-20")).is_empty());
        assert!(gap(("2012-01-01", "2012-01-10"), ("2012-01-05", "2012-01-06")).is_empty());
    }

    #[test]
    fn nested_stay_does_not_open_a_gap() {
        let h = PatientHistory::new(
            "p".into(),
            vec![
                stay("p", "a", "2012-01-01", "2012-01-20"),
                stay("p", "b", "2012-01-05", "2012-01-08"),
                stay("p", "c", "2012-01-22", "2012-01-25"),
            ],
        );
        assert_eq!(home_gaps(&h), [1]);
    }

    #[test]
    fn admission_stats_arithmetic() {
        let hs: Vec<PatientHistory> = (1..=3)
            .map(|n| {
                let p = format!("p{n}");
                let stays = (0..n)
                    .map(|i| stay(&p, "h", &format!("2012-0{}-01", i + 1), &format!("2012-0{}-02", i + 1)))
                    .collect();
                PatientHistory::new(p, stays)
            })
            .collect();
        let stats = admission_stats(&hs);
        let m = &stats[&Sex::Male];
        assert_eq!((m.mean, m.median, m.max, m.min), (2.0, 2, 3, 1));
        let single = admission_stats(&hs[2..]);
        let m = &single[&Sex::Male];
        assert_eq!((m.mean, m.median, m.max), (3.0, 3, 3));
    }

    #[test]
    fn pyramid_counts() {
        let mk = |p: &str, sex, year| {
            PatientHistory::new(p.into(), vec![stay_with(p, "h", "2012-01-01", "2012-01-02", "I21", sex, Some(year))])
        };
        let hs = [mk("a", Sex::Male, 1950), mk("b", Sex::Male, 1950), mk("c", Sex::Female, 1960)];
        let p = population_pyramid(&hs);
        assert_eq!(p.counts.len(), 2);
        assert_eq!(p.counts[&(1950, Sex::Male)], 2);
        assert_eq!(p.counts[&(1960, Sex::Female)], 1);
        assert_eq!(population_pyramid(&[]), PopulationPyramid::default());
    }

    #[test]
    fn chapter_counts() {
        let d = dataset(vec![
            stay_with("p", "h", "2012-01-01", "2012-01-02", "I21", Sex::Male, None),
            stay_with("p", "h", "2012-01-01", "2012-01-02", "I50", Sex::Male, None),
            stay_with("p", "h", "2012-01-01", "2012-01-02", "F10", Sex::Male, None),
            stay_with("p", "h", "2012-01-01", "2012-01-02", "D49", Sex::Male, None),
        ]);
        let c = chapter_admission_counts(&d);
        assert_eq!(c.by_chapter[&Chapter::new(9).unwrap()], 2);
        assert_eq!(c.by_chapter[&Chapter::new(5).unwrap()], 1);
        assert_eq!(c.unknown, 1);
        assert_eq!(c.total(), 4);
        assert_eq!(chapter_admission_counts(&dataset(vec![])), ChapterCounts::default());
    }
}
