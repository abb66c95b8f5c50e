//! Hospitalization record table: parsing, validation and ingestion.
//!
//! The on-disk format is semicolon-delimited UTF-8 with a header row and
//! ISO-8601 calendar dates:
//!
//! ```text
//! patient_id;facility_id;state;admission;discharge;icd_code;sex;birth_year
//! p1;h47;SN;2012-08-13;2012-08-21;I21;M;1950
//! ```
//!
//! Columns may appear in any order as long as the header names them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icd::IcdCode;

/// Days from 0001-01-01 (chrono's CE day 1) to 1970-01-01.
const UNIX_EPOCH_CE_DAYS: i32 = 719_163;

pub const MIN_BIRTH_YEAR: i32 = 1890;

/// A calendar day, counted from 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct DayStamp(pub i32);

impl DayStamp {
    pub fn from_date(date: NaiveDate) -> Self {
        DayStamp(date.num_days_from_ce() - UNIX_EPOCH_CE_DAYS)
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(Self::from_date)
    }

    pub fn to_date(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0 + UNIX_EPOCH_CE_DAYS)
            .expect("day stamp outside the supported calendar range")
    }

    pub fn year(self) -> i32 {
        self.to_date().year()
    }

    /// Parses a strict `YYYY-MM-DD` calendar date.
    pub fn parse_iso(text: &str) -> Option<Self> {
        let b = text.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return None;
        }
        let digits = |s: &[u8]| -> Option<u32> {
            s.iter().try_fold(0u32, |acc, &c| c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0')))
        };
        let year = digits(&b[0..4])?;
        let month = digits(&b[5..7])?;
        let day = digits(&b[8..10])?;
        Self::from_ymd(year as i32, month, day)
    }

    pub fn offset(self, days: i32) -> Self {
        DayStamp(self.0 + days)
    }

    /// Signed number of days from `earlier` to `self`.
    pub fn days_since(self, earlier: DayStamp) -> i32 {
        self.0 - earlier.0
    }
}

impl fmt::Display for DayStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_date().format("%Y-%m-%d"))
    }
}

impl From<DayStamp> for String {
    fn from(d: DayStamp) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DayStamp {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        DayStamp::parse_iso(&s).ok_or_else(|| format!("invalid calendar date `{s}`"))
    }
}

/// Closed day interval; both admission and discharge day count as days of stay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StayPeriod {
    pub admission: DayStamp,
    pub discharge: DayStamp,
}

impl StayPeriod {
    pub fn new(admission: DayStamp, discharge: DayStamp) -> Self {
        debug_assert!(admission <= discharge);
        StayPeriod { admission, discharge }
    }

    pub fn duration_days(&self) -> u32 {
        (self.discharge.0 - self.admission.0 + 1) as u32
    }

    pub fn intersects(&self, other: &StayPeriod) -> bool {
        self.admission <= other.discharge && other.admission <= self.discharge
    }

    /// Intersection of the two closed intervals, if non-empty.
    pub fn intersection(&self, other: &StayPeriod) -> Option<StayPeriod> {
        let admission = self.admission.max(other.admission);
        let discharge = self.discharge.min(other.discharge);
        (admission <= discharge).then_some(StayPeriod { admission, discharge })
    }

    pub fn contains_day(&self, day: DayStamp) -> bool {
        self.admission <= day && day <= self.discharge
    }
}

/// German federal state of the reporting facility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    BadenWuerttemberg,
    Bavaria,
    Berlin,
    Brandenburg,
    Bremen,
    Hamburg,
    Hesse,
    MecklenburgVorpommern,
    LowerSaxony,
    NorthRhineWestphalia,
    RhinelandPalatinate,
    Saarland,
    Saxony,
    SaxonyAnhalt,
    SchleswigHolstein,
    Thuringia,
    Unknown,
}

impl State {
    pub const ALL: [State; 17] = [
        State::BadenWuerttemberg,
        State::Bavaria,
        State::Berlin,
        State::Brandenburg,
        State::Bremen,
        State::Hamburg,
        State::Hesse,
        State::MecklenburgVorpommern,
        State::LowerSaxony,
        State::NorthRhineWestphalia,
        State::RhinelandPalatinate,
        State::Saarland,
        State::Saxony,
        State::SaxonyAnhalt,
        State::SchleswigHolstein,
        State::Thuringia,
        State::Unknown,
    ];

    /// ISO 3166-2:DE subdivision code; empty for `Unknown`.
    pub fn code(self) -> &'static str {
        match self {
            State::BadenWuerttemberg => "BW",
            State::Bavaria => "BY",
            State::Berlin => "BE",
            State::Brandenburg => "BB",
            State::Bremen => "HB",
            State::Hamburg => "HH",
            State::Hesse => "HE",
            State::MecklenburgVorpommern => "MV",
            State::LowerSaxony => "NI",
            State::NorthRhineWestphalia => "NW",
            State::RhinelandPalatinate => "RP",
            State::Saarland => "SL",
            State::Saxony => "SN",
            State::SaxonyAnhalt => "ST",
            State::SchleswigHolstein => "SH",
            State::Thuringia => "TH",
            State::Unknown => "",
        }
    }

    /// Accepts ISO codes and English or German names, case-insensitively.
    /// Returns `None` for anything unrecognised.
    pub fn parse(text: &str) -> Option<State> {
        let t = text.trim();
        if let Some(s) = State::ALL[..16].iter().find(|s| s.code().eq_ignore_ascii_case(t)) {
            return Some(*s);
        }
        let lower = t.to_lowercase();
        let state = match lower.as_str() {
            "baden-württemberg" | "baden-wuerttemberg" | "baden-wurttemberg" => State::BadenWuerttemberg,
            "bavaria" | "bayern" => State::Bavaria,
            "berlin" => State::Berlin,
            "brandenburg" => State::Brandenburg,
            "bremen" => State::Bremen,
            "hamburg" => State::Hamburg,
            "hesse" | "hessen" => State::Hesse,
            "mecklenburg-vorpommern" | "mecklenburg-western pomerania" => State::MecklenburgVorpommern,
            "lower saxony" | "niedersachsen" => State::LowerSaxony,
            "north rhine-westphalia" | "nordrhein-westfalen" => State::NorthRhineWestphalia,
            "rhineland-palatinate" | "rheinland-pfalz" => State::RhinelandPalatinate,
            "saarland" => State::Saarland,
            "saxony" | "sachsen" => State::Saxony,
            "saxony-anhalt" | "sachsen-anhalt" => State::SaxonyAnhalt,
            "schleswig-holstein" => State::SchleswigHolstein,
            "thuringia" | "thüringen" | "thueringen" => State::Thuringia,
            _ => return None,
        };
        Some(state)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            State::Unknown => f.write_str("unknown"),
            s => f.write_str(s.code()),
        }
    }
}

/// Parses a comma-separated state list such as `SN,TH`; `unknown` selects
/// records without a location.
pub fn parse_state_list(text: &str) -> Result<Vec<State>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s.eq_ignore_ascii_case("unknown") {
                Ok(State::Unknown)
            } else {
                State::parse(s).ok_or_else(|| format!("unknown state `{s}`"))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl Sex {
    pub fn code(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
            Sex::Unknown => "U",
        }
    }

    fn parse(text: &str) -> Option<Sex> {
        match text.trim() {
            "M" | "m" | "male" | "Male" => Some(Sex::Male),
            "F" | "f" | "W" | "w" | "female" | "Female" => Some(Sex::Female),
            "U" | "u" | "" => Some(Sex::Unknown),
            _ => None,
        }
    }
}

/// One hospitalization row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Record {
    pub patient_id: String,
    pub facility_id: String,
    pub state: State,
    pub admission: DayStamp,
    pub discharge: DayStamp,
    pub diagnosis: IcdCode,
    pub sex: Sex,
    pub birth_year: Option<i32>,
}

impl Record {
    pub fn period(&self) -> StayPeriod {
        StayPeriod { admission: self.admission, discharge: self.discharge }
    }

    pub fn duration_days(&self) -> u32 {
        self.period().duration_days()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    PatientId,
    FacilityId,
    State,
    Admission,
    Discharge,
    IcdCode,
    Sex,
    BirthYear,
}

impl Column {
    pub const ALL: [Column; 8] = [
        Column::PatientId,
        Column::FacilityId,
        Column::State,
        Column::Admission,
        Column::Discharge,
        Column::IcdCode,
        Column::Sex,
        Column::BirthYear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::PatientId => "patient_id",
            Column::FacilityId => "facility_id",
            Column::State => "state",
            Column::Admission => "admission",
            Column::Discharge => "discharge",
            Column::IcdCode => "icd_code",
            Column::Sex => "sex",
            Column::BirthYear => "birth_year",
        }
    }
}

pub const HEADER: &str = "patient_id;facility_id;state;admission;discharge;icd_code;sex;birth_year";

/// Column positions within a row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    positions: [usize; 8],
    width: usize,
}

impl Default for Schema {
    fn default() -> Self {
        Schema { positions: [0, 1, 2, 3, 4, 5, 6, 7], width: 8 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("header is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("header names column `{0}` more than once")]
    DuplicateColumn(String),
}

impl Schema {
    pub fn from_header(line: &str) -> Result<Schema, SchemaError> {
        let names: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(';').map(str::trim).collect();
        let mut positions = [0usize; 8];
        for (slot, column) in positions.iter_mut().zip(Column::ALL) {
            let mut found = names.iter().enumerate().filter(|(_, n)| n.eq_ignore_ascii_case(column.name()));
            *slot = found.next().ok_or(SchemaError::MissingColumn(column.name()))?.0;
            if found.next().is_some() {
                return Err(SchemaError::DuplicateColumn(column.name().to_string()));
            }
        }
        Ok(Schema { positions, width: names.len() })
    }

    pub fn position(&self, column: Column) -> usize {
        self.positions[column as usize]
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParseErrorKind {
    WrongFieldCount,
    EmptyIdentifier,
    InvalidDate,
    InvalidIcdCode,
    InvalidSex,
    InvalidBirthYear,
}

impl ParseErrorKind {
    pub fn key(self) -> &'static str {
        match self {
            ParseErrorKind::WrongFieldCount => "wrong_field_count",
            ParseErrorKind::EmptyIdentifier => "empty_identifier",
            ParseErrorKind::InvalidDate => "invalid_date",
            ParseErrorKind::InvalidIcdCode => "invalid_icd_code",
            ParseErrorKind::InvalidSex => "invalid_sex",
            ParseErrorKind::InvalidBirthYear => "invalid_birth_year",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("row {row}: {kind:?} ({detail})")]
pub struct ParseError {
    pub row: u64,
    pub kind: ParseErrorKind,
    pub detail: String,
}

/// Side-channel counters raised while parsing otherwise valid rows.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ParseWarnings {
    pub unknown_state: u64,
}

/// Parses one data row. `row` is the 1-based line number used in errors.
pub fn parse_record(line: &str, schema: &Schema, row: u64, warnings: &mut ParseWarnings) -> Result<Record, ParseError> {
    let err = |kind, detail: String| ParseError { row, kind, detail };
    let line = line.trim_end_matches(['\r', '\n']);
    let mut fields = [""; 16];
    let mut count = 0;
    for f in line.split(';') {
        if count < fields.len() {
            fields[count] = f;
        }
        count += 1;
    }
    if count != schema.width() {
        return Err(err(ParseErrorKind::WrongFieldCount, format!("expected {} fields, found {count}", schema.width())));
    }
    let field = |c: Column| fields[schema.position(c)].trim();

    let patient_id = field(Column::PatientId);
    let facility_id = field(Column::FacilityId);
    if patient_id.is_empty() || facility_id.is_empty() {
        return Err(err(ParseErrorKind::EmptyIdentifier, "patient or facility id is empty".into()));
    }
    let date = |c: Column| {
        let text = field(c);
        DayStamp::parse_iso(text).ok_or_else(|| err(ParseErrorKind::InvalidDate, format!("{} `{text}`", c.name())))
    };
    let admission = date(Column::Admission)?;
    let discharge = date(Column::Discharge)?;
    let icd_text = field(Column::IcdCode);
    let diagnosis =
        IcdCode::parse(icd_text).map_err(|_| err(ParseErrorKind::InvalidIcdCode, format!("`{icd_text}`")))?;
    let sex_text = field(Column::Sex);
    let sex = Sex::parse(sex_text).ok_or_else(|| err(ParseErrorKind::InvalidSex, format!("`{sex_text}`")))?;
    let year_text = field(Column::BirthYear);
    let birth_year = if year_text.is_empty() {
        None
    } else {
        Some(year_text.parse::<i32>().map_err(|_| err(ParseErrorKind::InvalidBirthYear, format!("`{year_text}`")))?)
    };
    let state = State::parse(field(Column::State)).unwrap_or_else(|| {
        warnings.unknown_state += 1;
        State::Unknown
    });

    Ok(Record {
        patient_id: patient_id.to_string(),
        facility_id: facility_id.to_string(),
        state,
        admission,
        discharge,
        diagnosis,
        sex,
        birth_year,
    })
}

/// Formats a record in the canonical column order (no trailing newline).
pub fn format_record(r: &Record) -> String {
    let birth_year = r.birth_year.map(|y| y.to_string()).unwrap_or_default();
    format!(
        "{};{};{};{};{};{};{};{}",
        r.patient_id,
        r.facility_id,
        r.state.code(),
        r.admission,
        r.discharge,
        r.diagnosis,
        r.sex.code(),
        birth_year
    )
}

/// Observation window; admissions must fall inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: DayStamp,
    pub end: DayStamp,
}

impl Default for Window {
    fn default() -> Self {
        Window { start: DayStamp::from_ymd(2010, 1, 1).unwrap(), end: DayStamp::from_ymd(2016, 12, 31).unwrap() }
    }
}

impl Window {
    pub fn new(start: DayStamp, end: DayStamp) -> Option<Window> {
        (start <= end).then_some(Window { start, end })
    }

    pub fn contains(&self, day: DayStamp) -> bool {
        self.start <= day && day <= self.end
    }

    pub fn len_days(&self) -> usize {
        (self.end.0 - self.start.0 + 1) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ValidationErrorKind {
    InvertedInterval,
    OutOfWindow,
    BirthYearOutOfRange,
}

impl ValidationErrorKind {
    pub fn key(self) -> &'static str {
        match self {
            ValidationErrorKind::InvertedInterval => "inverted_interval",
            ValidationErrorKind::OutOfWindow => "out_of_window",
            ValidationErrorKind::BirthYearOutOfRange => "birth_year_out_of_range",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind:?}")]
pub struct ValidationError {
    pub kind: ValidationErrorKind,
}

/// A record that passed validation. `effective_discharge` is the discharge
/// truncated at the window end; it differs from the raw discharge only for
/// censored stays.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValidatedRecord {
    pub record: Record,
    pub effective_discharge: DayStamp,
}

impl ValidatedRecord {
    pub fn censored(&self) -> bool {
        self.effective_discharge < self.record.discharge
    }

    /// Stay length in days after window truncation.
    pub fn effective_duration(&self) -> u32 {
        (self.effective_discharge.0 - self.record.admission.0 + 1) as u32
    }
}

impl std::ops::Deref for ValidatedRecord {
    type Target = Record;

    fn deref(&self) -> &Record {
        &self.record
    }
}

pub fn validate(r: Record, window: &Window) -> Result<ValidatedRecord, ValidationError> {
    let fail = |kind| Err(ValidationError { kind });
    if r.admission > r.discharge {
        return fail(ValidationErrorKind::InvertedInterval);
    }
    if !window.contains(r.admission) {
        return fail(ValidationErrorKind::OutOfWindow);
    }
    if let Some(y) = r.birth_year {
        if y < MIN_BIRTH_YEAR || y > window.end.year() {
            return fail(ValidationErrorKind::BirthYearOutOfRange);
        }
    }
    let effective_discharge = r.discharge.min(window.end);
    Ok(ValidatedRecord { record: r, effective_discharge })
}

/// Why a row was not accepted.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Rejection {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("row {row}: {error}")]
    Validation { row: u64, error: ValidationError },
}

impl Rejection {
    pub fn key(&self) -> &'static str {
        match self {
            Rejection::Parse(e) => e.kind.key(),
            Rejection::Validation { error, .. } => error.kind.key(),
        }
    }
}

/// Parses and validates data rows against a fixed schema and window.
#[derive(Debug, Clone)]
pub struct Ingestor {
    pub schema: Schema,
    pub window: Window,
}

/// Result of pushing one line through the ingestor.
#[derive(Debug, Clone)]
pub struct LineOutcome {
    pub result: Result<ValidatedRecord, Rejection>,
    pub warnings: ParseWarnings,
}

impl Ingestor {
    pub fn process_line(&self, line: &str, row: u64) -> LineOutcome {
        let mut warnings = ParseWarnings::default();
        let result = parse_record(line, &self.schema, row, &mut warnings)
            .map_err(Rejection::from)
            .and_then(|r| validate(r, &self.window).map_err(|error| Rejection::Validation { row, error }));
        LineOutcome { result, warnings }
    }
}

/// Row accounting for one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: u64,
    pub accepted: u64,
    pub rejected_total: u64,
    pub rejected: BTreeMap<String, u64>,
    pub censored: u64,
    pub warnings: BTreeMap<String, u64>,
    /// First few rejections, for diagnostics.
    pub rejection_samples: Vec<String>,
}

const MAX_REJECTION_SAMPLES: usize = 20;

impl IngestReport {
    pub fn observe(&mut self, outcome: &LineOutcome) {
        self.rows += 1;
        if outcome.warnings.unknown_state > 0 {
            *self.warnings.entry("unknown_state".into()).or_default() += outcome.warnings.unknown_state;
        }
        match &outcome.result {
            Ok(v) => {
                self.accepted += 1;
                if v.censored() {
                    self.censored += 1;
                }
            }
            Err(rej) => {
                self.rejected_total += 1;
                *self.rejected.entry(rej.key().into()).or_default() += 1;
                if self.rejection_samples.len() < MAX_REJECTION_SAMPLES {
                    self.rejection_samples.push(rej.to_string());
                }
            }
        }
    }

    pub fn add_warning(&mut self, key: &str, n: u64) {
        if n > 0 {
            *self.warnings.entry(key.into()).or_default() += n;
        }
    }
}

/// Records plus the window they were validated against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<ValidatedRecord>,
    pub window: Window,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn filter_by_state(&self, states: &[State]) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| states.contains(&r.state)).cloned().collect(),
            window: self.window,
        }
    }

    pub fn count_by_state(&self) -> BTreeMap<State, u64> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.state).or_default() += 1;
        }
        counts
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad header: {0}")]
    Schema(#[from] SchemaError),
}

/// Reads the header line (if any) and returns the schema. An empty source
/// yields `None`.
pub fn read_header<R: BufRead>(reader: &mut R) -> Result<Option<Schema>, IngestError> {
    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 {
        return Ok(None);
    }
    let header = header.trim_start_matches('\u{feff}');
    Ok(Some(Schema::from_header(header)?))
}

/// Loads a whole record file into memory. Bad rows are counted and skipped.
pub fn load_dataset<R: BufRead>(mut reader: R, window: Window) -> Result<(Dataset, IngestReport), IngestError> {
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let Some(schema) = read_header(&mut reader)? else {
        return Ok((Dataset { records, window }, report));
    };
    let ingestor = Ingestor { schema, window };
    let mut line = String::new();
    let mut row = 1u64;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        row += 1;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = ingestor.process_line(&line, row);
        report.observe(&outcome);
        if let Ok(v) = outcome.result {
            records.push(v);
        }
    }
    Ok((Dataset { records, window }, report))
}

impl FromStr for Window {
    type Err = String;

    /// `YYYY-MM-DD..YYYY-MM-DD`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or("expected START..END")?;
        let start = DayStamp::parse_iso(a.trim()).ok_or_else(|| format!("invalid date `{a}`"))?;
        let end = DayStamp::parse_iso(b.trim()).ok_or_else(|| format!("invalid date `{b}`"))?;
        Window::new(start, end).ok_or_else(|| "window start after end".to_string())
    }
}
