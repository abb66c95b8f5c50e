//! Overlapping stays within one patient's history.
//!
//! An overlap group is a connected component of the graph whose vertices are
//! a patient's stays and whose edges join stays with intersecting closed day
//! intervals. Only components with two or more stays are groups.
//!
//! Two-record groups are classified by a fixed rule precedence:
//!
//! 1. identical periods, same facility: simultaneous admissions in a single institution
//! 2. identical periods, different facilities: simultaneous admissions in two institutions
//! 3. same facility: two admissions in a single institution
//! 4. one stay lasts one day and falls on the other's admission (first day
//!    transfer) or discharge day (last day transfer)
//! 5. exactly one shared day, both stays longer than a day: standard transfer
//! 6. one stay inside the other with different admission and discharge days:
//!    temporary transfer
//! 7. anything else: unknown two admissions in two institutions
//!
//! Larger groups are "unknown multiple admissions (n)" where n is the highest
//! number of stays covering a single day.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cohort::PatientHistory;
use crate::histogram::Histogram;
use crate::icd::{chapter_of, pair_key, ChapterPair};
use crate::records::{DayStamp, Record, StayPeriod, ValidatedRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OverlapType {
    StandardTransfer,
    FirstDayTransfer,
    LastDayTransfer,
    TemporaryTransfer,
    UnknownTwoInstitutions,
    SimultaneousTwoInstitutions,
    SimultaneousSingleInstitution,
    TwoAdmissionsSingleInstitution,
    /// More than two stays; carries the maximal number of stays on one day.
    UnknownMultiple(u32),
}

impl OverlapType {
    /// The eight two-record types.
    pub const PAIR_TYPES: [OverlapType; 8] = [
        OverlapType::StandardTransfer,
        OverlapType::FirstDayTransfer,
        OverlapType::LastDayTransfer,
        OverlapType::TemporaryTransfer,
        OverlapType::UnknownTwoInstitutions,
        OverlapType::SimultaneousTwoInstitutions,
        OverlapType::SimultaneousSingleInstitution,
        OverlapType::TwoAdmissionsSingleInstitution,
    ];

    /// Stable machine key, e.g. `standard_transfer`, `unknown_multiple_3`.
    pub fn key(self) -> String {
        let k = match self {
            OverlapType::StandardTransfer => "standard_transfer",
            OverlapType::FirstDayTransfer => "first_day_transfer",
            OverlapType::LastDayTransfer => "last_day_transfer",
            OverlapType::TemporaryTransfer => "temporary_transfer",
            OverlapType::UnknownTwoInstitutions => "unknown_two_institutions",
            OverlapType::SimultaneousTwoInstitutions => "simultaneous_two_institutions",
            OverlapType::SimultaneousSingleInstitution => "simultaneous_single_institution",
            OverlapType::TwoAdmissionsSingleInstitution => "two_admissions_single_institution",
            OverlapType::UnknownMultiple(n) => return format!("unknown_multiple_{n}"),
        };
        k.to_string()
    }

    /// Human-readable name.
    pub fn label(self) -> String {
        let l = match self {
            OverlapType::StandardTransfer => "standard transfer",
            OverlapType::FirstDayTransfer => "first day transfer",
            OverlapType::LastDayTransfer => "last day transfer",
            OverlapType::TemporaryTransfer => "temporary transfer",
            OverlapType::UnknownTwoInstitutions => "unknown two admissions in two institutions",
            OverlapType::SimultaneousTwoInstitutions => "simultaneous two admissions in two institutions",
            OverlapType::SimultaneousSingleInstitution => "simultaneous two admissions in a single institution",
            OverlapType::TwoAdmissionsSingleInstitution => "two admissions in a single institution",
            OverlapType::UnknownMultiple(n) => return format!("unknown multiple admissions ({n})"),
        };
        l.to_string()
    }

    /// Whether both stays of this two-record type are at the same facility.
    pub fn is_single_institution(self) -> bool {
        matches!(self, OverlapType::SimultaneousSingleInstitution | OverlapType::TwoAdmissionsSingleInstitution)
    }
}

impl fmt::Display for OverlapType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for OverlapType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("unknown_multiple_") {
            return n.parse().map(OverlapType::UnknownMultiple).map_err(|_| format!("bad overlap type `{s}`"));
        }
        OverlapType::PAIR_TYPES.into_iter().find(|t| t.key() == s).ok_or_else(|| format!("unknown overlap type `{s}`"))
    }
}

impl Serialize for OverlapType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for OverlapType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Stays of one patient forming a connected overlap component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapGroup {
    pub patient_id: String,
    pub members: Vec<ValidatedRecord>,
}

impl OverlapGroup {
    pub fn periods(&self) -> impl Iterator<Item = StayPeriod> + '_ {
        self.members.iter().map(|m| m.period())
    }
}

/// Index ranges of the overlap components of `periods`, which must be sorted
/// by admission. Singletons are omitted.
pub fn component_spans(periods: &[StayPeriod]) -> Vec<Range<usize>> {
    debug_assert!(periods.windows(2).all(|w| w[0].admission <= w[1].admission));
    let mut spans = Vec::new();
    let mut start = 0;
    let mut reach = DayStamp(i32::MIN);
    for (i, p) in periods.iter().enumerate() {
        if i > 0 && p.admission > reach {
            if i - start >= 2 {
                spans.push(start..i);
            }
            start = i;
            reach = p.discharge;
        } else {
            reach = reach.max(p.discharge);
        }
    }
    if periods.len() - start >= 2 {
        spans.push(start..periods.len());
    }
    spans
}

/// Overlap groups of a history, by a single sweep over its sorted stays.
pub fn find_overlap_groups(h: &PatientHistory) -> Vec<OverlapGroup> {
    let periods: Vec<StayPeriod> = h.stays.iter().map(|s| s.period()).collect();
    component_spans(&periods)
        .into_iter()
        .map(|span| OverlapGroup { patient_id: h.patient_id.clone(), members: h.stays[span].to_vec() })
        .collect()
}

/// Sorted `(day, delta)` coverage events: +1 on admission, -1 on the day
/// after discharge. Removals sort before additions on the same day.
fn coverage_events<I: IntoIterator<Item = StayPeriod>>(periods: I) -> Vec<(i32, i32)> {
    let mut events: Vec<(i32, i32)> =
        periods.into_iter().flat_map(|p| [(p.admission.0, 1), (p.discharge.0 + 1, -1)]).collect();
    events.sort_unstable();
    events
}

/// Highest number of periods covering a single day.
pub fn daily_multiplicity<I: IntoIterator<Item = StayPeriod>>(periods: I) -> u32 {
    let mut active = 0i32;
    let mut best = 0i32;
    for (_, delta) in coverage_events(periods) {
        active += delta;
        best = best.max(active);
    }
    best as u32
}

/// Number of days covered by at least two periods.
pub fn shared_days<I: IntoIterator<Item = StayPeriod>>(periods: I) -> u32 {
    let events = coverage_events(periods);
    let mut active = 0i32;
    let mut total = 0i32;
    for (i, &(day, delta)) in events.iter().enumerate() {
        active += delta;
        if active >= 2 {
            total += events[i + 1].0 - day;
        }
    }
    total as u32
}

pub fn overlap_length(a: &Record, b: &Record) -> u32 {
    a.period().intersection(&b.period()).map_or(0, |p| p.duration_days())
}

fn strictly_inside(inner: StayPeriod, outer: StayPeriod) -> bool {
    outer.admission < inner.admission && inner.discharge < outer.discharge
}

/// Classifies two intersecting stays.
///
/// # Panics
/// If the stays do not intersect.
pub fn classify_pair(a: &Record, b: &Record) -> OverlapType {
    let (pa, pb) = (a.period(), b.period());
    let shared = pa.intersection(&pb).unwrap_or_else(|| panic!("classify_pair on disjoint stays {pa:?} and {pb:?}"));
    let same_facility = a.facility_id == b.facility_id;

    if pa == pb {
        return if same_facility {
            OverlapType::SimultaneousSingleInstitution
        } else {
            OverlapType::SimultaneousTwoInstitutions
        };
    }
    if same_facility {
        return OverlapType::TwoAdmissionsSingleInstitution;
    }
    for (short, long) in [(pa, pb), (pb, pa)] {
        if short.duration_days() == 1 {
            if short.admission == long.admission {
                return OverlapType::FirstDayTransfer;
            }
            if short.admission == long.discharge {
                return OverlapType::LastDayTransfer;
            }
        }
    }
    if shared.duration_days() == 1 && pa.duration_days() > 1 && pb.duration_days() > 1 {
        return OverlapType::StandardTransfer;
    }
    if strictly_inside(pa, pb) || strictly_inside(pb, pa) {
        return OverlapType::TemporaryTransfer;
    }
    OverlapType::UnknownTwoInstitutions
}

pub fn classify_group(g: &OverlapGroup) -> OverlapType {
    match g.members.as_slice() {
        [a, b] => classify_pair(a, b),
        _ => OverlapType::UnknownMultiple(daily_multiplicity(g.periods())),
    }
}

/// How diagnoses are compared for the second digit of a [`PairCode`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisMatch {
    /// Full normalized code equality.
    #[default]
    FullCode,
    /// Same ICD chapter; unknown chapters compare by full code.
    Chapter,
}

impl FromStr for DiagnosisMatch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full_code" => Ok(DiagnosisMatch::FullCode),
            "chapter" => Ok(DiagnosisMatch::Chapter),
            _ => Err(format!("unknown diagnosis match mode `{s}` (expected full or chapter)")),
        }
    }
}

/// Four equality bits for a two-record overlap: facility, diagnosis,
/// admission day, discharge day. Renders as e.g. `1100`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PairCode(u8);

impl PairCode {
    const FACILITY: u8 = 0b1000;
    const DIAGNOSIS: u8 = 0b0100;
    const ADMISSION: u8 = 0b0010;
    const DISCHARGE: u8 = 0b0001;

    pub fn from_flags(facility: bool, diagnosis: bool, admission: bool, discharge: bool) -> PairCode {
        PairCode(
            (u8::from(facility) * Self::FACILITY)
                | (u8::from(diagnosis) * Self::DIAGNOSIS)
                | (u8::from(admission) * Self::ADMISSION)
                | (u8::from(discharge) * Self::DISCHARGE),
        )
    }

    pub fn same_facility(self) -> bool {
        self.0 & Self::FACILITY != 0
    }

    pub fn same_diagnosis(self) -> bool {
        self.0 & Self::DIAGNOSIS != 0
    }

    pub fn same_admission(self) -> bool {
        self.0 & Self::ADMISSION != 0
    }

    pub fn same_discharge(self) -> bool {
        self.0 & Self::DISCHARGE != 0
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = PairCode> {
        (0..16).map(PairCode)
    }
}

impl fmt::Display for PairCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04b}", self.0)
    }
}

impl FromStr for PairCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 4 && s.bytes().all(|b| b == b'0' || b == b'1') {
            Ok(PairCode(u8::from_str_radix(s, 2).expect("binary digits")))
        } else {
            Err(format!("bad pair code `{s}`"))
        }
    }
}

impl Serialize for PairCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairCode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub fn pair_code(a: &Record, b: &Record) -> PairCode {
    pair_code_with(a, b, DiagnosisMatch::FullCode)
}

pub fn pair_code_with(a: &Record, b: &Record, mode: DiagnosisMatch) -> PairCode {
    let same_diagnosis = match mode {
        DiagnosisMatch::FullCode => a.diagnosis == b.diagnosis,
        DiagnosisMatch::Chapter => match (chapter_of(&a.diagnosis), chapter_of(&b.diagnosis)) {
            (Ok(x), Ok(y)) => x == y,
            _ => a.diagnosis == b.diagnosis,
        },
    };
    PairCode::from_flags(
        a.facility_id == b.facility_id,
        same_diagnosis,
        a.admission == b.admission,
        a.discharge == b.discharge,
    )
}

/// An overlap group together with everything derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifiedGroup {
    pub patient_id: String,
    pub members: Vec<ValidatedRecord>,
    pub kind: OverlapType,
    pub multiplicity: u32,
    /// Present for two-record groups only.
    pub pair_code: Option<PairCode>,
    /// Intersection length for pairs; days covered twice or more otherwise.
    pub overlap_days: u32,
}

impl ClassifiedGroup {
    pub fn new(group: OverlapGroup, mode: DiagnosisMatch) -> ClassifiedGroup {
        let kind = classify_group(&group);
        let multiplicity = daily_multiplicity(group.periods());
        let (pair_code, overlap_days) = match group.members.as_slice() {
            [a, b] => (Some(pair_code_with(a, b, mode)), overlap_length(a, b)),
            _ => (None, shared_days(group.periods())),
        };
        ClassifiedGroup {
            patient_id: group.patient_id,
            members: group.members,
            kind,
            multiplicity,
            pair_code,
            overlap_days,
        }
    }

    /// One audit CSV line: patient, type, code, multiplicity, members.
    pub fn audit_line(&self) -> String {
        let members: Vec<String> =
            self.members.iter().map(|m| format!("{}@{}..{}", m.facility_id, m.admission, m.discharge)).collect();
        format!(
            "{},{},{},{},{}",
            self.patient_id,
            self.kind,
            self.pair_code.map(|c| c.to_string()).unwrap_or_default(),
            self.multiplicity,
            members.join("|")
        )
    }
}

pub const AUDIT_HEADER: &str = "patient_id,type,pair_code,multiplicity,members";

pub fn classify_history(h: &PatientHistory, mode: DiagnosisMatch) -> Vec<ClassifiedGroup> {
    find_overlap_groups(h).into_iter().map(|g| ClassifiedGroup::new(g, mode)).collect()
}

/// One row of the type tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    #[serde(rename = "type")]
    pub kind: OverlapType,
    pub label: String,
    pub count: u64,
    pub percentage: f64,
    /// One-decimal percentage; the column sums to exactly 100.0.
    pub percentage_rounded: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeTally {
    pub counts: BTreeMap<OverlapType, u64>,
}

impl TypeTally {
    pub fn add(&mut self, kind: OverlapType) {
        *self.counts.entry(kind).or_default() += 1;
    }

    pub fn merge(&mut self, other: &TypeTally) {
        for (k, n) in &other.counts {
            *self.counts.entry(*k).or_default() += n;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Rows ordered by descending count, with largest-remainder rounding of
    /// percentages to tenths.
    pub fn rows(&self) -> Vec<TypeRow> {
        let total = self.total();
        if total == 0 {
            return Vec::new();
        }
        let entries: Vec<(OverlapType, u64)> = self.counts.iter().map(|(k, n)| (*k, *n)).collect();
        let mut tenths: Vec<u64> = entries.iter().map(|(_, n)| n * 1000 / total).collect();
        let missing = 1000 - tenths.iter().sum::<u64>();
        let mut by_remainder: Vec<usize> = (0..entries.len()).collect();
        by_remainder.sort_by_key(|&i| (std::cmp::Reverse(entries[i].1 * 1000 % total), i));
        for &i in by_remainder.iter().take(missing as usize) {
            tenths[i] += 1;
        }
        let mut rows: Vec<TypeRow> = entries
            .iter()
            .zip(tenths)
            .map(|(&(kind, count), t)| TypeRow {
                kind,
                label: kind.label(),
                count,
                percentage: 100.0 * count as f64 / total as f64,
                percentage_rounded: t as f64 / 10.0,
            })
            .collect();
        rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.kind.cmp(&b.kind)));
        rows
    }
}

pub fn tally_types<'a, I: IntoIterator<Item = &'a ClassifiedGroup>>(groups: I) -> TypeTally {
    let mut t = TypeTally::default();
    for g in groups {
        t.add(g.kind);
    }
    t
}

/// Chapter pairs of two-record overlaps, per pair code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChapterPairTally {
    pub by_code: BTreeMap<PairCode, BTreeMap<ChapterPair, u64>>,
    /// Pairs skipped because a diagnosis has no chapter.
    pub excluded_unknown: u64,
}

impl ChapterPairTally {
    pub fn observe(&mut self, g: &ClassifiedGroup) {
        let ([a, b], Some(code)) = (g.members.as_slice(), g.pair_code) else { return };
        match (chapter_of(&a.diagnosis), chapter_of(&b.diagnosis)) {
            (Ok(x), Ok(y)) => {
                *self.by_code.entry(code).or_default().entry(pair_key(x, y)).or_default() += 1;
            }
            _ => self.excluded_unknown += 1,
        }
    }

    pub fn merge(&mut self, other: &ChapterPairTally) {
        for (code, pairs) in &other.by_code {
            let mine = self.by_code.entry(*code).or_default();
            for (p, n) in pairs {
                *mine.entry(*p).or_default() += n;
            }
        }
        self.excluded_unknown += other.excluded_unknown;
    }

    /// The `k` most frequent chapter pairs for `code`, ties by pair order.
    pub fn top_k(&self, code: PairCode, k: usize) -> Vec<(ChapterPair, u64)> {
        let mut pairs: Vec<(ChapterPair, u64)> =
            self.by_code.get(&code).map(|m| m.iter().map(|(p, n)| (*p, *n)).collect()).unwrap_or_default();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        pairs.truncate(k);
        pairs
    }
}

pub fn chapter_pair_tally<'a, I: IntoIterator<Item = &'a ClassifiedGroup>>(groups: I) -> ChapterPairTally {
    let mut t = ChapterPairTally::default();
    for g in groups {
        t.observe(g);
    }
    t
}

/// Streaming reduction of overlap statistics.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapAccumulator {
    pub groups: u64,
    pub records_in_groups: u64,
    pub types: TypeTally,
    pub pair_codes: BTreeMap<PairCode, u64>,
    pub chapter_pairs: ChapterPairTally,
    pub overlap_lengths: Histogram,
    /// Groups of three or more stays never stacked more than two deep.
    pub chains_of_multiplicity_two: u64,
}

impl OverlapAccumulator {
    pub fn observe(&mut self, g: &ClassifiedGroup) {
        self.groups += 1;
        self.records_in_groups += g.members.len() as u64;
        self.types.add(g.kind);
        if let Some(code) = g.pair_code {
            *self.pair_codes.entry(code).or_default() += 1;
        }
        self.chapter_pairs.observe(g);
        self.overlap_lengths.add(g.overlap_days.into());
        if g.kind == OverlapType::UnknownMultiple(2) {
            self.chains_of_multiplicity_two += 1;
        }
    }

    pub fn merge(&mut self, other: &OverlapAccumulator) {
        self.groups += other.groups;
        self.records_in_groups += other.records_in_groups;
        self.types.merge(&other.types);
        for (c, n) in &other.pair_codes {
            *self.pair_codes.entry(*c).or_default() += n;
        }
        self.chapter_pairs.merge(&other.chapter_pairs);
        self.overlap_lengths.merge(&other.overlap_lengths);
        self.chains_of_multiplicity_two += other.chains_of_multiplicity_two;
    }

    pub fn report(&self, diagnosis_match: DiagnosisMatch, top_k: usize) -> OverlapReport {
        OverlapReport {
            schema_version: crate::SCHEMA_VERSION,
            diagnosis_match,
            groups: self.groups,
            records_in_groups: self.records_in_groups,
            types: self.types.rows(),
            chains_of_multiplicity_two: self.chains_of_multiplicity_two,
            pair_codes: PairCode::all().map(|c| (c, self.pair_codes.get(&c).copied().unwrap_or(0))).collect(),
            chapter_pairs: self
                .chapter_pairs
                .by_code
                .iter()
                .map(|(code, pairs)| {
                    let top = self
                        .chapter_pairs
                        .top_k(*code, top_k)
                        .into_iter()
                        .map(|(p, count)| ChapterPairCount { pair: [p.low.index(), p.high.index()], count })
                        .collect();
                    (*code, ChapterPairSummary { total: pairs.values().sum(), top })
                })
                .collect(),
            chapter_pairs_excluded_unknown: self.chapter_pairs.excluded_unknown,
            overlap_lengths: self.overlap_lengths.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterPairCount {
    pub pair: [u8; 2],
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterPairSummary {
    pub total: u64,
    pub top: Vec<ChapterPairCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub schema_version: u32,
    pub diagnosis_match: DiagnosisMatch,
    pub groups: u64,
    pub records_in_groups: u64,
    pub types: Vec<TypeRow>,
    pub chains_of_multiplicity_two: u64,
    pub pair_codes: BTreeMap<PairCode, u64>,
    pub chapter_pairs: BTreeMap<PairCode, ChapterPairSummary>,
    pub chapter_pairs_excluded_unknown: u64,
    pub overlap_lengths: Histogram,
}

/// Draws stays as `#` bars, one row per stay, one character per day,
/// aligned on the earliest admission:
///
/// ```text
/// 47: | 2012-08-13: #########        |
/// 79: | 2012-08-13:         ######## |
/// ```
pub fn render_group<'a, I>(stays: I) -> String
where
    I: IntoIterator<Item = &'a Record>,
{
    let stays: Vec<&Record> = stays.into_iter().collect();
    let Some(start) = stays.iter().map(|s| s.admission).min() else { return String::new() };
    let end = stays.iter().map(|s| s.discharge).max().expect("non-empty");
    let span = end.days_since(start) as usize + 1;
    let width = stays.iter().map(|s| s.facility_id.len() + 1).max().unwrap_or(0);
    let mut out = String::new();
    for s in stays {
        let lead = s.admission.days_since(start) as usize;
        let days = s.duration_days() as usize;
        let bar = format!("{}{}{}", " ".repeat(lead), "#".repeat(days), " ".repeat(span - lead - days));
        let label = format!("{}:", s.facility_id);
        out.push_str(&format!("{label:<width$} | {start}: {bar} |\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icd::IcdCode;
    use crate::records::{Sex, State};

    fn rec(facility: &str, start: &str, from: i32, to: i32, icd: &str) -> Record {
        let d = DayStamp::parse_iso(start).unwrap();
        Record {
            patient_id: "p".into(),
            facility_id: facility.into(),
            state: State::Saxony,
            admission: d.offset(from),
            discharge: d.offset(to),
            diagnosis: IcdCode::parse(icd).unwrap(),
            sex: Sex::Female,
            birth_year: Some(1940),
        }
    }

    fn r(facility: &str, from: i32, to: i32) -> Record {
        rec(facility, "2012-01-01", from, to, "I21")
    }

    fn period(a: i32, b: i32) -> StayPeriod {
        StayPeriod::new(DayStamp(a), DayStamp(b))
    }

    #[test]
    fn sweep_components() {
        assert_eq!(component_spans(&[period(1, 9), period(9, 16)]), vec![0..2]);
        assert!(component_spans(&[period(1, 5), period(7, 9)]).is_empty());
        assert!(component_spans(&[period(1, 5), period(6, 9)]).is_empty());
        // a long stay bridges two later ones that do not touch each other
        assert_eq!(component_spans(&[period(0, 20), period(2, 3), period(10, 12), period(30, 31)]), vec![0..3]);
        assert_eq!(
            component_spans(&[period(0, 1), period(1, 2), period(5, 6), period(7, 8), period(8, 9)]),
            vec![0..2, 3..5]
        );
        assert!(component_spans(&[]).is_empty());
    }

    #[test]
    fn multiplicity_of_the_triple_example() {
        assert_eq!(daily_multiplicity([period(0, 18), period(9, 10), period(2, 9)]), 3);
        assert_eq!(daily_multiplicity([period(0, 8), period(8, 15)]), 2);
        assert_eq!(daily_multiplicity([period(0, 3), period(3, 6), period(6, 9)]), 2);
    }

    #[test]
    fn shared_day_counts() {
        assert_eq!(shared_days([period(0, 8), period(8, 15)]), 1);
        assert_eq!(shared_days([period(0, 18), period(9, 10), period(2, 9)]), 9);
        assert_eq!(shared_days([period(0, 3), period(3, 6), period(6, 9)]), 2);
    }

    #[test]
    fn pair_rules() {
        use OverlapType::*;
        assert_eq!(classify_pair(&r("47", 0, 8), &r("79", 8, 15)), StandardTransfer);
        assert_eq!(classify_pair(&r("12", 0, 7), &r("24", 0, 0)), FirstDayTransfer);
        assert_eq!(classify_pair(&r("5", 0, 3), &r("28", 3, 3)), LastDayTransfer);
        assert_eq!(classify_pair(&r("171", 0, 19), &r("193", 4, 11)), TemporaryTransfer);
        assert_eq!(classify_pair(&r("19", 0, 32), &r("72", 21, 39)), UnknownTwoInstitutions);
        assert_eq!(classify_pair(&r("49", 0, 11), &r("182", 0, 18)), UnknownTwoInstitutions);
        assert_eq!(classify_pair(&r("3", 0, 20), &r("12", 0, 20)), SimultaneousTwoInstitutions);
        assert_eq!(classify_pair(&r("162", 0, 10), &r("162", 0, 10)), SimultaneousSingleInstitution);
        assert_eq!(classify_pair(&r("7", 0, 1), &r("7", 1, 9)), TwoAdmissionsSingleInstitution);
    }

    #[test]
    fn pair_rule_edge_cases() {
        use OverlapType::*;
        // one-day stay strictly inside a longer one
        assert_eq!(classify_pair(&r("a", 0, 9), &r("b", 4, 4)), TemporaryTransfer);
        // same discharge containment is not a temporary transfer
        assert_eq!(classify_pair(&r("a", 0, 9), &r("b", 4, 9)), UnknownTwoInstitutions);
        // two one-day stays on the same day at two places
        assert_eq!(classify_pair(&r("a", 3, 3), &r("b", 3, 3)), SimultaneousTwoInstitutions);
        // a one-day stay at the same facility is rule 3, not a transfer
        assert_eq!(classify_pair(&r("a", 0, 9), &r("a", 0, 0)), TwoAdmissionsSingleInstitution);
        // two-day overlap of partially overlapping stays
        assert_eq!(classify_pair(&r("a", 0, 9), &r("b", 8, 12)), UnknownTwoInstitutions);
    }

    #[test]
    #[should_panic(expected = "disjoint")]
    fn classify_pair_rejects_disjoint_stays() {
        classify_pair(&r("a", 0, 3), &r("b", 5, 6));
    }

    #[test]
    fn pair_codes() {
        let a = rec("7", "2016-06-04", 0, 1, "F10");
        let b = rec("7", "2016-06-04", 1, 9, "F10");
        assert_eq!(pair_code(&a, &b).to_string(), "1100");
        assert_eq!(pair_code(&a, &a).to_string(), "1111");
        let c = rec("47", "2012-08-13", 0, 8, "I21");
        let d = rec("79", "2012-08-13", 8, 15, "I50");
        assert_eq!(pair_code(&c, &d).to_string(), "0000");
        assert_eq!(pair_code_with(&c, &d, DiagnosisMatch::Chapter).to_string(), "0100");
        assert_eq!("1010".parse::<PairCode>().unwrap(), PairCode::from_flags(true, false, true, false));
        assert!("10a0".parse::<PairCode>().is_err());
    }

    #[test]
    fn overlap_lengths() {
        assert_eq!(overlap_length(&r("a", 0, 8), &r("b", 8, 15)), 1);
        assert_eq!(overlap_length(&r("a", 0, 20), &r("b", 0, 20)), 21);
        assert_eq!(overlap_length(&r("a", 0, 2), &r("b", 5, 6)), 0);
    }

    #[test]
    fn type_keys_round_trip() {
        for t in OverlapType::PAIR_TYPES.into_iter().chain([OverlapType::UnknownMultiple(3)]) {
            assert_eq!(t.key().parse::<OverlapType>().unwrap(), t);
        }
        assert_eq!(OverlapType::UnknownMultiple(4).label(), "unknown multiple admissions (4)");
    }

    #[test]
    fn percentages_sum_to_one_hundred() {
        let mut t = TypeTally::default();
        for (k, n) in
            [(OverlapType::StandardTransfer, 1), (OverlapType::FirstDayTransfer, 1), (OverlapType::LastDayTransfer, 1)]
        {
            t.counts.insert(k, n);
        }
        let rows = t.rows();
        let tenths: u64 = rows.iter().map(|r| (r.percentage_rounded * 10.0).round() as u64).sum();
        assert_eq!(tenths, 1000);
        assert_eq!(rows[0].percentage_rounded, 33.4);
        assert!(TypeTally::default().rows().is_empty());
    }

    #[test]
    fn chapter_pairs_under_their_code() {
        let mk = |a: Record, b: Record| {
            ClassifiedGroup::new(
                OverlapGroup {
                    patient_id: "p".into(),
                    members: vec![
                        crate::records::validate(a, &Default::default()).unwrap(),
                        crate::records::validate(b, &Default::default()).unwrap(),
                    ],
                },
                DiagnosisMatch::FullCode,
            )
        };
        let g1 = mk(rec("1", "2012-01-01", 0, 5, "F10"), rec("1", "2012-01-01", 3, 9, "S72"));
        let g2 = mk(rec("1", "2012-01-01", 0, 5, "I21"), rec("2", "2012-01-01", 5, 9, "I50"));
        let g3 = mk(rec("1", "2012-01-01", 0, 5, "D49"), rec("2", "2012-01-01", 5, 9, "I50"));
        let t = chapter_pair_tally([&g1, &g2, &g3]);
        assert_eq!(g1.pair_code.unwrap().to_string(), "1000");
        let c = |i| crate::icd::Chapter::new(i).unwrap();
        assert_eq!(t.top_k("1000".parse().unwrap(), 5), vec![(pair_key(c(5), c(19)), 1)]);
        assert_eq!(t.top_k("0000".parse().unwrap(), 5), vec![(pair_key(c(9), c(9)), 1)]);
        assert_eq!(t.excluded_unknown, 1);
    }

    #[test]
    fn renders_bars() {
        let stays = [rec("47", "2012-08-13", 0, 8, "I21"), rec("79", "2012-08-13", 8, 15, "I50")];
        assert_eq!(
            render_group(&stays),
            "47: | 2012-08-13: #########        |\n79: | 2012-08-13:         ######## |\n"
        );
        let stays = [rec("5", "2016-07-08", 0, 3, "I21"), rec("28", "2016-07-08", 3, 3, "I50")];
        assert_eq!(render_group(&stays), "5:  | 2016-07-08: #### |\n28: | 2016-07-08:    # |\n");
    }
}
