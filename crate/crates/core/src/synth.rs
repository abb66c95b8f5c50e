//! Seeded synthetic record generator with planted overlap patterns.
//!
//! Every patient gets a chronological sequence of non-intersecting
//! background stays. Planted patterns (one per requested overlap type
//! instance) are laid into randomly chosen patients' timelines with at least
//! one free day on each side, so they never touch other stays. Optional
//! noise stays are dropped at random positions and may collide with
//! background stays, but never with planted ones.
//!
//! The record file is written patient by patient, so it is clustered and
//! can be streamed.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::prelude::*;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Gamma, Geometric, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::PyramidRow;
use crate::icd::IcdCode;
use crate::network::{transfer_events, NetworkPolicy};
use crate::overlaps::{ClassifiedGroup, OverlapType, PairCode};
use crate::records::{format_record, DayStamp, Record, Sex, State, Window, HEADER, MIN_BIRTH_YEAR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub count: usize,
    /// Facility `i` (1-based) is chosen with weight `i^-zipf_exponent`.
    pub zipf_exponent: f64,
    /// The largest facilities are located in Saxony and Thuringia.
    pub home_facilities: usize,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig { count: 200, zipf_exponent: 1.0, home_facilities: 40 }
    }
}

/// Gamma-distributed day counts with an optional log-normal tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaysConfig {
    pub shape: f64,
    pub scale: f64,
    pub tail_probability: f64,
    pub tail_median: f64,
    pub min: u32,
    pub max: u32,
}

impl DaysConfig {
    /// Stay lengths with mode three days.
    pub fn stay_length() -> Self {
        DaysConfig { shape: 3.0, scale: 1.5, tail_probability: 0.05, tail_median: 20.0, min: 1, max: 180 }
    }

    /// Home gaps with mode six days and a long tail.
    pub fn home_gap() -> Self {
        DaysConfig { shape: 4.0, scale: 2.0, tail_probability: 0.35, tail_median: 250.0, min: 0, max: 2000 }
    }
}

impl Default for DaysConfig {
    fn default() -> Self {
        Self::stay_length()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicWeight {
    pub birth_year: i32,
    pub sex: Sex,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub patients: usize,
    pub window: Window,
    pub facilities: FleetConfig,
    /// Mean background stays per patient (at least 1).
    pub mean_stays_per_patient: f64,
    pub stay_length: DaysConfig,
    pub home_gap: DaysConfig,
    /// Empty selects a built-in pyramid.
    pub demographics: Vec<DemographicWeight>,
    /// Planted overlap patterns per type.
    pub plants: BTreeMap<OverlapType, usize>,
    /// Exact duplicate record pairs (pair code 1111).
    pub duplicate_pairs: usize,
    /// Unplanned random stays that may overlap background stays.
    pub noise_stays: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            patients: 1000,
            window: Window::default(),
            facilities: FleetConfig::default(),
            mean_stays_per_patient: 3.0,
            stay_length: DaysConfig::stay_length(),
            home_gap: DaysConfig::home_gap(),
            demographics: Vec::new(),
            plants: BTreeMap::new(),
            duplicate_pairs: 0,
            noise_stays: 0,
        }
    }
}

impl SynthConfig {
    /// `per_type` instances of every overlap type: the eight pair types and
    /// unknown multiple admissions with n = 2, 3 and 4.
    pub fn plant_every_type(mut self, per_type: usize) -> Self {
        for t in OverlapType::PAIR_TYPES.into_iter().chain((2..=4).map(OverlapType::UnknownMultiple)) {
            self.plants.insert(t, per_type);
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedStay {
    pub facility_id: String,
    pub admission: DayStamp,
    pub discharge: DayStamp,
    pub diagnosis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedGroup {
    pub patient_id: String,
    pub kind: OverlapType,
    pub pair_code: Option<PairCode>,
    /// Intended `[src, dst]` transfer events; empty for non-transfer types.
    pub transfers: Vec<[String; 2]>,
    pub members: Vec<PlantedStay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub seed: u64,
    pub records: u64,
    pub patients: u64,
    pub noise_stays: u64,
    pub duplicate_pairs: u64,
    pub plant_counts: BTreeMap<OverlapType, u64>,
    pub planted: Vec<PlantedGroup>,
    pub patients_by_sex: BTreeMap<Sex, u64>,
    pub records_by_sex: BTreeMap<Sex, u64>,
    pub pyramid: Vec<PyramidRow>,
    pub facility_admissions: BTreeMap<String, u64>,
    pub facility_states: BTreeMap<String, State>,
}

/// Chapter weights loosely follow a hospital case mix; a few common
/// categories per chapter.
const DIAGNOSES: &[(u32, &[&str])] = &[
    (180, &["A09", "A41", "B99"]),
    (487, &["C18", "C34", "C50", "D12"]),
    (46, &["D50", "D64"]),
    (175, &["E11", "E86"]),
    (353, &["F10", "F20", "F32"]),
    (207, &["G40", "G45"]),
    (90, &["H25", "H40"]),
    (32, &["H66", "H81"]),
    (887, &["I10", "I21", "I48", "I50", "I63"]),
    (319, &["J18", "J44"]),
    (488, &["K35", "K57", "K80"]),
    (75, &["L03", "L89"]),
    (333, &["M16", "M17", "M54"]),
    (254, &["N17", "N39"]),
    (81, &["O70", "O80"]),
    (35, &["P07", "P59"]),
    (18, &["Q21", "Q65"]),
    (245, &["R07", "R55"]),
    (487, &["S06", "S72", "T84"]),
    (1, &["W19"]),
    (35, &["Z38", "Z51"]),
    (1, &["U07"]),
];

const OTHER_STATES: [State; 14] = [
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
    State::SaxonyAnhalt,
    State::SchleswigHolstein,
];

fn default_demographics(window_end_year: i32) -> Vec<DemographicWeight> {
    let mut rows = Vec::new();
    let last = 2015.min(window_end_year);
    for year in 1915..=last {
        // broad hump centred on the late 1940s
        let x = f64::from(year - 1948) / 22.0;
        let w = (-(x * x) / 2.0).exp() + 0.05;
        rows.push(DemographicWeight { birth_year: year, sex: Sex::Male, weight: w * 0.46 });
        rows.push(DemographicWeight { birth_year: year, sex: Sex::Female, weight: w * 0.54 });
    }
    rows
}

struct DaySampler {
    body: Gamma<f64>,
    tail: LogNormal<f64>,
    tail_probability: f64,
    min: u32,
    max: u32,
}

impl DaySampler {
    fn new(cfg: &DaysConfig, what: &str) -> Result<Self, SynthError> {
        let bad = |m: String| SynthError::InvalidConfig(format!("{what}: {m}"));
        if !(0.0..=1.0).contains(&cfg.tail_probability) || cfg.min > cfg.max || cfg.tail_median <= 0.0 {
            return Err(bad("tail_probability must be in [0, 1], min <= max, tail_median > 0".into()));
        }
        Ok(DaySampler {
            body: Gamma::new(cfg.shape, cfg.scale).map_err(|e| bad(e.to_string()))?,
            tail: LogNormal::new(cfg.tail_median.ln(), 0.8).map_err(|e| bad(e.to_string()))?,
            tail_probability: cfg.tail_probability,
            min: cfg.min,
            max: cfg.max,
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> i32 {
        let v = if rng.random_bool(self.tail_probability) { self.tail.sample(rng) } else { self.body.sample(rng) };
        (v.round() as u32).clamp(self.min, self.max) as i32
    }
}

#[derive(Debug, Clone)]
struct Planned {
    /// Offset of admission from the block start.
    from: i32,
    to: i32,
    facility: usize,
    diagnosis: String,
}

#[derive(Debug, Clone)]
struct Block {
    stays: Vec<Planned>,
    kind: Option<OverlapType>,
}

impl Block {
    fn span(&self) -> i32 {
        self.stays.iter().map(|s| s.to).max().unwrap_or(0) + 1
    }
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    facility_ids: Vec<String>,
    facility_states: Vec<State>,
    facility_pick: WeightedIndex<f64>,
    chapter_pick: WeightedIndex<u32>,
    demographic_pick: WeightedIndex<f64>,
    demographics: Vec<DemographicWeight>,
    stay_count: Geometric,
    stay_length: DaySampler,
    home_gap: DaySampler,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a SynthConfig) -> Result<Self, SynthError> {
        let invalid = |m: &str| SynthError::InvalidConfig(m.to_string());
        if cfg.facilities.count == 0 {
            return Err(invalid("at least one facility is required"));
        }
        if cfg.mean_stays_per_patient < 1.0 {
            return Err(invalid("mean_stays_per_patient must be at least 1"));
        }
        let demographics = if cfg.demographics.is_empty() {
            default_demographics(cfg.window.end.year())
        } else {
            cfg.demographics.clone()
        };
        let end_year = cfg.window.end.year();
        if demographics.iter().any(|d| d.birth_year < MIN_BIRTH_YEAR || d.birth_year > end_year) {
            return Err(invalid("demographic birth years must lie in [1890, window end year]"));
        }
        let demographic_pick = WeightedIndex::new(demographics.iter().map(|d| d.weight))
            .map_err(|e| SynthError::InvalidConfig(format!("demographics: {e}")))?;
        let facility_ids: Vec<String> = (1..=cfg.facilities.count).map(|i| format!("H{i:04}")).collect();
        let facility_pick =
            WeightedIndex::new((1..=cfg.facilities.count).map(|i| (i as f64).powf(-cfg.facilities.zipf_exponent)))
                .map_err(|e| SynthError::InvalidConfig(format!("facilities: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let facility_states = (0..cfg.facilities.count)
            .map(|i| {
                if i < cfg.facilities.home_facilities {
                    if rng.random_bool(0.65) {
                        State::Saxony
                    } else {
                        State::Thuringia
                    }
                } else if rng.random_bool(0.01) {
                    State::Unknown
                } else {
                    *OTHER_STATES.choose(&mut rng).expect("non-empty")
                }
            })
            .collect();
        Ok(Generator {
            cfg,
            rng,
            facility_ids,
            facility_states,
            facility_pick,
            chapter_pick: WeightedIndex::new(DIAGNOSES.iter().map(|d| d.0)).expect("static weights"),
            demographic_pick,
            demographics,
            stay_count: Geometric::new(1.0 / cfg.mean_stays_per_patient)
                .map_err(|e| SynthError::InvalidConfig(format!("mean_stays_per_patient: {e}")))?,
            stay_length: DaySampler::new(&cfg.stay_length, "stay_length")?,
            home_gap: DaySampler::new(&cfg.home_gap, "home_gap")?,
        })
    }

    fn diagnosis(&mut self) -> String {
        let codes = DIAGNOSES[self.chapter_pick.sample(&mut self.rng)].1;
        let code = codes.choose(&mut self.rng).expect("non-empty");
        if self.rng.random_bool(0.5) {
            format!("{code}.{}", self.rng.random_range(0..10))
        } else {
            code.to_string()
        }
    }

    fn facility(&mut self) -> usize {
        self.facility_pick.sample(&mut self.rng)
    }

    fn other_facility(&mut self, not: usize) -> usize {
        if self.cfg.facilities.count == 1 {
            return not;
        }
        loop {
            let f = self.facility();
            if f != not {
                return f;
            }
        }
    }

    fn len(&mut self, lo: i32, hi: i32) -> i32 {
        self.rng.random_range(lo..=hi)
    }

    fn stay(&mut self, from: i32, to: i32, facility: usize) -> Planned {
        let diagnosis = self.diagnosis();
        Planned { from, to, facility, diagnosis }
    }

    /// Two stays at different facilities, A then B.
    fn pair(&mut self, a: (i32, i32), b: (i32, i32)) -> Vec<Planned> {
        let fa = self.facility();
        let fb = self.other_facility(fa);
        vec![self.stay(a.0, a.1, fa), self.stay(b.0, b.1, fb)]
    }

    fn template(&mut self, kind: OverlapType) -> Block {
        use OverlapType::*;
        let stays = match kind {
            StandardTransfer => {
                let (l1, l2) = (self.len(2, 12), self.len(2, 12));
                self.pair((0, l1 - 1), (l1 - 1, l1 + l2 - 2))
            }
            FirstDayTransfer => {
                let l = self.len(2, 15);
                self.pair((0, l - 1), (0, 0))
            }
            LastDayTransfer => {
                let l = self.len(2, 15);
                self.pair((0, l - 1), (l - 1, l - 1))
            }
            TemporaryTransfer => {
                let l = self.len(3, 25);
                let i = self.len(1, l - 2);
                let j = self.len(i, l - 2);
                self.pair((0, l - 1), (i, j))
            }
            UnknownTwoInstitutions => match self.rng.random_range(0..3) {
                0 => {
                    let l1 = self.len(3, 30);
                    let shared = self.len(2, l1 - 1);
                    let l2 = self.len(shared + 1, shared + 20);
                    self.pair((0, l1 - 1), (l1 - shared, l1 - shared + l2 - 1))
                }
                1 => {
                    let l1 = self.len(2, 15);
                    let l2 = self.len(l1 + 1, l1 + 15);
                    self.pair((0, l1 - 1), (0, l2 - 1))
                }
                _ => {
                    let l1 = self.len(2, 15);
                    let l2 = self.len(l1 + 1, l1 + 15);
                    self.pair((0, l2 - 1), (l2 - l1, l2 - 1))
                }
            },
            SimultaneousTwoInstitutions => {
                let l = self.len(1, 20);
                self.pair((0, l - 1), (0, l - 1))
            }
            SimultaneousSingleInstitution => {
                let l = self.len(1, 20);
                let f = self.facility();
                let a = self.stay(0, l - 1, f);
                let mut b = self.stay(0, l - 1, f);
                while b.diagnosis == a.diagnosis {
                    b.diagnosis = self.diagnosis();
                }
                vec![a, b]
            }
            TwoAdmissionsSingleInstitution => {
                let f = self.facility();
                let l1 = self.len(1, 15);
                let start = self.len(0, l1 - 1);
                let mut l2 = self.len(1, 15);
                if start == 0 && l2 == l1 {
                    l2 += 1;
                }
                vec![self.stay(0, l1 - 1, f), self.stay(start, start + l2 - 1, f)]
            }
            UnknownMultiple(2) => {
                let n = self.len(3, 4);
                let mut stays = Vec::new();
                let mut from = 0;
                for _ in 0..n {
                    let l = self.len(2, 8);
                    let f = self.facility();
                    stays.push(self.stay(from, from + l - 1, f));
                    from += l - 1;
                }
                stays
            }
            UnknownMultiple(n) => {
                let common = 6;
                let mut stays: Vec<Planned> = (0..n)
                    .map(|_| {
                        let (before, after) = (self.len(0, 6), self.len(0, 6));
                        let f = self.facility();
                        self.stay(common - before, common + after, f)
                    })
                    .collect();
                let shift = stays.iter().map(|s| s.from).min().unwrap_or(0);
                for s in &mut stays {
                    s.from -= shift;
                    s.to -= shift;
                }
                stays
            }
        };
        Block { stays, kind: Some(kind) }
    }

    fn duplicate_block(&mut self) -> Block {
        let l = self.len(1, 10);
        let f = self.facility();
        let a = self.stay(0, l - 1, f);
        Block { stays: vec![a.clone(), a], kind: Some(OverlapType::SimultaneousSingleInstitution) }
    }

    fn background_block(&mut self) -> Block {
        let l = self.stay_length.sample(&mut self.rng).max(1);
        let f = self.facility();
        Block { stays: vec![self.stay(0, l - 1, f)], kind: None }
    }
}

fn validate_plants(cfg: &SynthConfig) -> Result<(), SynthError> {
    for (kind, &count) in &cfg.plants {
        if count == 0 {
            continue;
        }
        if let OverlapType::UnknownMultiple(n) = kind {
            if !(2..=8).contains(n) {
                return Err(SynthError::InvalidConfig(format!("cannot plant {kind}: n must be in 2..=8")));
            }
        } else if !kind.is_single_institution() && cfg.facilities.count < 2 {
            return Err(SynthError::Infeasible(format!("{kind} needs at least two facilities")));
        }
    }
    let planted: usize = cfg.plants.values().sum::<usize>() + cfg.duplicate_pairs;
    if planted > 0 && cfg.patients == 0 {
        return Err(SynthError::Infeasible("patterns requested but no patients".into()));
    }
    Ok(())
}

struct Bookkeeping {
    truth: GroundTruth,
    pyramid: BTreeMap<(i32, Sex), u64>,
}

/// Generates a record file into `out` and returns its ground truth.
/// Identical configurations produce byte-identical output.
pub fn generate<W: Write>(cfg: &SynthConfig, out: W) -> Result<GroundTruth, SynthError> {
    validate_plants(cfg)?;
    let mut g = Generator::new(cfg)?;
    let mut out = io::BufWriter::with_capacity(1 << 20, out);
    writeln!(out, "{HEADER}")?;

    // Pattern and noise assignment to patients, drawn up front.
    let mut plants: BTreeMap<usize, Vec<Option<OverlapType>>> = BTreeMap::new();
    for (kind, &count) in &cfg.plants {
        for _ in 0..count {
            let p = g.rng.random_range(0..cfg.patients);
            plants.entry(p).or_default().push(Some(*kind));
        }
    }
    for _ in 0..cfg.duplicate_pairs {
        let p = g.rng.random_range(0..cfg.patients);
        plants.entry(p).or_default().push(None);
    }
    let mut noise: BTreeMap<usize, u32> = BTreeMap::new();
    if cfg.patients > 0 {
        for _ in 0..cfg.noise_stays {
            *noise.entry(g.rng.random_range(0..cfg.patients)).or_default() += 1;
        }
    }

    let mut book = Bookkeeping {
        truth: GroundTruth {
            schema_version: crate::SCHEMA_VERSION,
            seed: cfg.seed,
            records: 0,
            patients: 0,
            noise_stays: 0,
            duplicate_pairs: cfg.duplicate_pairs as u64,
            plant_counts: cfg.plants.iter().filter(|(_, &n)| n > 0).map(|(k, &n)| (*k, n as u64)).collect(),
            planted: Vec::new(),
            patients_by_sex: BTreeMap::new(),
            records_by_sex: BTreeMap::new(),
            pyramid: Vec::new(),
            facility_admissions: BTreeMap::new(),
            facility_states: BTreeMap::new(),
        },
        pyramid: BTreeMap::new(),
    };
    let window_len = cfg.window.len_days() as i32;

    for p in 0..cfg.patients {
        let patient_id = format!("P{p:07}");
        let demo = &g.demographics[g.demographic_pick.sample(&mut g.rng)];
        let (sex, birth_year) = (demo.sex, demo.birth_year);

        let background = 1 + g.stay_count.sample(&mut g.rng) as usize;
        let mut blocks: Vec<Block> = (0..background).map(|_| g.background_block()).collect();
        for plant in plants.remove(&p).unwrap_or_default() {
            let b = match plant {
                Some(kind) => g.template(kind),
                None => g.duplicate_block(),
            };
            blocks.push(b);
        }
        blocks.shuffle(&mut g.rng);

        // Gap before block i+1: at least one free day around planted blocks.
        let mut gaps: Vec<i32> = blocks
            .windows(2)
            .map(|w| {
                let min = if w[0].kind.is_some() || w[1].kind.is_some() { 1 } else { 0 };
                g.home_gap.sample(&mut g.rng).max(min)
            })
            .collect();
        let needed =
            |blocks: &[Block], gaps: &[i32]| blocks.iter().map(Block::span).sum::<i32>() + gaps.iter().sum::<i32>();
        while needed(&blocks, &gaps) > window_len {
            let Some(i) = blocks.iter().rposition(|b| b.kind.is_none()) else { break };
            if blocks.len() == 1 {
                break;
            }
            blocks.remove(i);
            gaps.remove(i.min(gaps.len() - 1));
        }
        if needed(&blocks, &gaps) > window_len {
            for (gap, w) in gaps.iter_mut().zip(blocks.windows(2)) {
                *gap = if w[0].kind.is_some() || w[1].kind.is_some() { 1 } else { 0 };
            }
        }
        let total = needed(&blocks, &gaps);
        if total > window_len {
            return Err(SynthError::Infeasible(format!(
                "patient {patient_id} needs {total} days but the window has {window_len}"
            )));
        }
        let mut cursor = g.rng.random_range(0..=window_len - total);

        let mut records: Vec<Record> = Vec::new();
        let mut protected: Vec<(i32, i32)> = Vec::new();
        let stamp = |offset: i32| cfg.window.start.offset(offset);
        for (i, b) in blocks.iter().enumerate() {
            let members: Vec<Record> = b
                .stays
                .iter()
                .map(|s| Record {
                    patient_id: patient_id.clone(),
                    facility_id: g.facility_ids[s.facility].clone(),
                    state: g.facility_states[s.facility],
                    admission: stamp(cursor + s.from),
                    discharge: stamp(cursor + s.to),
                    diagnosis: IcdCode::parse(&s.diagnosis).expect("generator codes are well formed"),
                    sex,
                    birth_year: Some(birth_year),
                })
                .collect();
            if let Some(kind) = b.kind {
                protected.push((cursor - 1, cursor + b.span()));
                book.truth.planted.push(planted_group(&patient_id, kind, &members));
            }
            records.extend(members);
            cursor += b.span() + gaps.get(i).copied().unwrap_or(0);
        }

        for _ in 0..noise.remove(&p).unwrap_or(0) {
            for _attempt in 0..20 {
                let len = g.stay_length.sample(&mut g.rng).max(1);
                if len > window_len {
                    break;
                }
                let from = g.rng.random_range(0..=window_len - len);
                let to = from + len - 1;
                if protected.iter().any(|&(a, b)| from <= b && a <= to) {
                    continue;
                }
                let f = g.facility();
                let candidate = Record {
                    patient_id: patient_id.clone(),
                    facility_id: g.facility_ids[f].clone(),
                    state: g.facility_states[f],
                    admission: stamp(from),
                    discharge: stamp(to),
                    diagnosis: IcdCode::parse(&g.diagnosis()).expect("generator codes are well formed"),
                    sex,
                    birth_year: Some(birth_year),
                };
                let duplicate = records.iter().any(|r| {
                    r.facility_id == candidate.facility_id
                        && r.admission == candidate.admission
                        && r.discharge == candidate.discharge
                });
                if !duplicate {
                    records.push(candidate);
                    book.truth.noise_stays += 1;
                    break;
                }
            }
        }

        records.shuffle(&mut g.rng);
        book.truth.patients += 1;
        book.truth.records += records.len() as u64;
        *book.truth.patients_by_sex.entry(sex).or_default() += 1;
        *book.truth.records_by_sex.entry(sex).or_default() += records.len() as u64;
        *book.pyramid.entry((birth_year, sex)).or_default() += 1;
        for r in &records {
            *book.truth.facility_admissions.entry(r.facility_id.clone()).or_default() += 1;
            book.truth.facility_states.entry(r.facility_id.clone()).or_insert(r.state);
            out.write_all(format_record(r).as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    book.truth.pyramid =
        book.pyramid.into_iter().map(|((birth_year, sex), count)| PyramidRow { birth_year, sex, count }).collect();
    Ok(book.truth)
}

fn planted_group(patient_id: &str, kind: OverlapType, members: &[Record]) -> PlantedGroup {
    let pair_code = match members {
        [a, b] => Some(PairCode::from_flags(
            a.facility_id == b.facility_id,
            a.diagnosis == b.diagnosis,
            a.admission == b.admission,
            a.discharge == b.discharge,
        )),
        _ => None,
    };
    let id = |r: &Record| r.facility_id.clone();
    // Template order: the first stay is the longer/earlier one.
    let transfers = match (kind, members) {
        (OverlapType::StandardTransfer | OverlapType::LastDayTransfer, [a, b]) => vec![[id(a), id(b)]],
        (OverlapType::FirstDayTransfer, [a, b]) => vec![[id(b), id(a)]],
        (OverlapType::TemporaryTransfer, [a, b]) => vec![[id(a), id(b)], [id(b), id(a)]],
        _ => Vec::new(),
    };
    PlantedGroup {
        patient_id: patient_id.to_string(),
        kind,
        pair_code,
        transfers,
        members: members
            .iter()
            .map(|r| PlantedStay {
                facility_id: r.facility_id.clone(),
                admission: r.admission,
                discharge: r.discharge,
                diagnosis: r.diagnosis.to_string(),
            })
            .collect(),
    }
}

/// One disagreement between planted and detected overlaps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mismatch", rename_all = "snake_case")]
pub enum Mismatch {
    MissingGroup { patient_id: String, expected: OverlapType },
    WrongType { patient_id: String, expected: OverlapType, detected: OverlapType },
    WrongPairCode { patient_id: String, expected: Option<PairCode>, detected: Option<PairCode> },
    WrongTransfers { patient_id: String, expected: Vec<[String; 2]>, detected: Vec<[String; 2]> },
    UnplannedGroup { patient_id: String, detected: OverlapType },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub planted: u64,
    pub recovered: u64,
    pub detected: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub planted_groups: u64,
    pub detected_groups: u64,
    /// Detected groups that match no planted pattern (allowed with noise).
    pub unplanned_groups: u64,
    pub per_type: BTreeMap<OverlapType, TypeCounts>,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

type GroupKey = (String, Vec<(String, DayStamp, DayStamp)>);

fn group_key<'a, I>(patient_id: &str, stays: I) -> GroupKey
where
    I: IntoIterator<Item = (&'a str, DayStamp, DayStamp)>,
{
    let mut members: Vec<(String, DayStamp, DayStamp)> =
        stays.into_iter().map(|(f, a, d)| (f.to_string(), a, d)).collect();
    members.sort();
    (patient_id.to_string(), members)
}

/// Compares detected groups with the planted ground truth. Unplanned
/// detections are mismatches unless the data set contains noise stays.
pub fn verify(detected: &[ClassifiedGroup], truth: &GroundTruth) -> VerifyReport {
    let transfer_policy: NetworkPolicy = "standard,first_day,last_day,temporary".parse().expect("static policy");
    let mut report = VerifyReport { schema_version: crate::SCHEMA_VERSION, ..Default::default() };
    let mut by_key: BTreeMap<GroupKey, &ClassifiedGroup> = BTreeMap::new();
    for g in detected {
        let key =
            group_key(&g.patient_id, g.members.iter().map(|m| (m.facility_id.as_str(), m.admission, m.discharge)));
        by_key.insert(key, g);
        report.per_type.entry(g.kind).or_default().detected += 1;
    }
    report.detected_groups = detected.len() as u64;
    report.planted_groups = truth.planted.len() as u64;

    for p in &truth.planted {
        report.per_type.entry(p.kind).or_default().planted += 1;
        let key =
            group_key(&p.patient_id, p.members.iter().map(|m| (m.facility_id.as_str(), m.admission, m.discharge)));
        let Some(g) = by_key.remove(&key) else {
            report.mismatches.push(Mismatch::MissingGroup { patient_id: p.patient_id.clone(), expected: p.kind });
            continue;
        };
        let mut ok = true;
        if g.kind != p.kind {
            ok = false;
            report.mismatches.push(Mismatch::WrongType {
                patient_id: p.patient_id.clone(),
                expected: p.kind,
                detected: g.kind,
            });
        }
        if g.pair_code != p.pair_code {
            ok = false;
            report.mismatches.push(Mismatch::WrongPairCode {
                patient_id: p.patient_id.clone(),
                expected: p.pair_code,
                detected: g.pair_code,
            });
        }
        let events: Vec<[String; 2]> =
            transfer_events(g, &transfer_policy).into_iter().map(|e| [e.src, e.dst]).collect();
        if events != p.transfers {
            ok = false;
            report.mismatches.push(Mismatch::WrongTransfers {
                patient_id: p.patient_id.clone(),
                expected: p.transfers.clone(),
                detected: events,
            });
        }
        if ok {
            report.per_type.entry(p.kind).or_default().recovered += 1;
        }
    }
    report.unplanned_groups = by_key.len() as u64;
    if truth.noise_stays == 0 {
        for g in by_key.values() {
            report.mismatches.push(Mismatch::UnplannedGroup { patient_id: g.patient_id.clone(), detected: g.kind });
        }
    }
    report
}
