//! Record file → patient histories → statistics, in bounded-memory batches.
//!
//! Rows are read sequentially in chunks, parsed in parallel, and grouped into
//! histories. Grouping streams when the file is clustered by patient (all
//! rows of a patient adjacent, in any order); a patient id reappearing after
//! its history was closed aborts with [`PipelineError::NotClustered`], and
//! [`run_file`] then retries with whole-file grouping. Histories are analysed
//! in parallel and the partial results merged in input order, so output does
//! not depend on the thread count.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::cohort::{group_records, CohortAccumulator, PatientHistory};
use crate::facilities::{CensusAccumulator, FacilityAccumulator};
use crate::network::{NetworkPolicy, TransferNetwork};
use crate::overlaps::{classify_history, ClassifiedGroup, DiagnosisMatch, OverlapAccumulator};
use crate::records::{read_header, IngestError, IngestReport, Ingestor, State, ValidatedRecord, Window};

const READ_CHUNK_LINES: usize = 65_536;
const ANALYSIS_BATCH: usize = 16_384;

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub window: Window,
    /// `None` keeps every state.
    pub states: Option<Vec<State>>,
    pub diagnosis_match: DiagnosisMatch,
    pub policy: NetworkPolicy,
    pub threads: usize,
    /// Keep every classified group (for audits and verification).
    pub collect_groups: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            window: Window::default(),
            states: None,
            diagnosis_match: DiagnosisMatch::FullCode,
            policy: NetworkPolicy::default(),
            threads: 1,
            collect_groups: false,
        }
    }
}

impl AnalysisOptions {
    fn keeps(&self, r: &ValidatedRecord) -> bool {
        self.states.as_ref().is_none_or(|s| s.contains(&r.state))
    }
}

/// Mergeable analysis state over a set of histories.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub cohort: CohortAccumulator,
    pub facilities: FacilityAccumulator,
    pub overlaps: OverlapAccumulator,
    pub network: TransferNetwork,
    pub groups: Vec<ClassifiedGroup>,
}

impl Analysis {
    pub fn new(opts: &AnalysisOptions) -> Self {
        Analysis {
            cohort: CohortAccumulator::default(),
            facilities: FacilityAccumulator::new(),
            overlaps: OverlapAccumulator::default(),
            network: TransferNetwork::new(opts.policy.clone()),
            groups: Vec::new(),
        }
    }

    pub fn observe(&mut self, h: &PatientHistory, opts: &AnalysisOptions) {
        self.cohort.observe(h, &opts.window);
        self.facilities.observe(h);
        for g in classify_history(h, opts.diagnosis_match) {
            self.overlaps.observe(&g);
            self.network.observe(&g);
            if opts.collect_groups {
                self.groups.push(g);
            }
        }
    }

    pub fn merge(&mut self, other: Analysis) {
        self.cohort.merge(&other.cohort);
        self.facilities.merge(&other.facilities);
        self.overlaps.merge(&other.overlaps);
        self.network.merge(&other.network);
        self.groups.extend(other.groups);
    }
}

/// Analyses a batch of histories, splitting the work across the current
/// rayon pool and merging partials in order.
pub fn analyze_histories(histories: &[PatientHistory], opts: &AnalysisOptions) -> Analysis {
    let threads = rayon::current_num_threads().max(1);
    let chunk = histories.len().div_ceil(threads * 2).max(256);
    let partials: Vec<Analysis> = histories
        .par_chunks(chunk)
        .map(|c| {
            let mut a = Analysis::new(opts);
            for h in c {
                a.observe(h, opts);
            }
            a
        })
        .collect();
    let mut total = Analysis::new(opts);
    for p in partials {
        total.merge(p);
    }
    total
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub ingest: IngestReport,
    pub analysis: Analysis,
    pub census: CensusAccumulator,
    /// Whether the input had to be grouped in memory.
    pub in_memory: bool,
}

impl PipelineOutput {
    fn finish(mut self) -> Self {
        self.ingest.add_warning("demographic_conflict", self.analysis.cohort.demographic_conflicts);
        self.analysis
            .groups
            .sort_by(|a, b| (&a.patient_id, a.members[0].admission).cmp(&(&b.patient_id, b.members[0].admission)));
        self
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("input is not clustered by patient: `{patient}` reappears at row {row}")]
    NotClustered { patient: String, row: u64 },
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

impl From<io::Error> for PipelineError {
    fn from(e: io::Error) -> Self {
        PipelineError::Ingest(IngestError::Io(e))
    }
}

/// Groups patient-clustered records into histories as they arrive.
struct StreamGrouper {
    current: Option<String>,
    stays: Vec<ValidatedRecord>,
    closed: HashSet<u64>,
}

fn id_hash(id: &str) -> u64 {
    let mut h = DefaultHasher::new();
    id.hash(&mut h);
    h.finish()
}

impl StreamGrouper {
    fn new() -> Self {
        StreamGrouper { current: None, stays: Vec::new(), closed: HashSet::new() }
    }

    fn push(&mut self, r: ValidatedRecord, row: u64, out: &mut Vec<PatientHistory>) -> Result<(), PipelineError> {
        if self.current.as_deref() != Some(r.patient_id.as_str()) {
            if self.closed.contains(&id_hash(&r.patient_id)) {
                return Err(PipelineError::NotClustered { patient: r.patient_id.clone(), row });
            }
            self.close(out);
            self.current = Some(r.patient_id.clone());
        }
        self.stays.push(r);
        Ok(())
    }

    fn close(&mut self, out: &mut Vec<PatientHistory>) {
        if let Some(id) = self.current.take() {
            self.closed.insert(id_hash(&id));
            out.push(PatientHistory::new(id, std::mem::take(&mut self.stays)));
        }
    }
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))
}

fn read_chunk<R: BufRead>(reader: &mut R, row: &mut u64, lines: &mut Vec<(u64, String)>) -> io::Result<bool> {
    lines.clear();
    while lines.len() < READ_CHUNK_LINES {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(false);
        }
        *row += 1;
        if !line.trim().is_empty() {
            lines.push((*row, line));
        }
    }
    Ok(true)
}

/// Streams a patient-clustered record file through every analysis.
pub fn run_streaming<R: BufRead>(mut reader: R, opts: &AnalysisOptions) -> Result<PipelineOutput, PipelineError> {
    let pool = build_pool(opts.threads)?;
    let mut out = PipelineOutput {
        ingest: IngestReport::default(),
        analysis: Analysis::new(opts),
        census: CensusAccumulator::new(opts.window),
        in_memory: false,
    };
    let Some(schema) = read_header(&mut reader)? else { return Ok(out.finish()) };
    let ingestor = Ingestor { schema, window: opts.window };
    let mut grouper = StreamGrouper::new();
    let mut ready: Vec<PatientHistory> = Vec::new();
    let mut lines = Vec::new();
    let mut row = 1u64;
    loop {
        let more = read_chunk(&mut reader, &mut row, &mut lines)?;
        let outcomes: Vec<_> =
            pool.install(|| lines.par_iter().map(|(row, line)| ingestor.process_line(line, *row)).collect());
        for ((row, _), outcome) in lines.iter().zip(outcomes) {
            out.ingest.observe(&outcome);
            if let Ok(r) = outcome.result {
                if opts.keeps(&r) {
                    out.census.observe(&r);
                    grouper.push(r, *row, &mut ready)?;
                }
            }
        }
        if !more {
            grouper.close(&mut ready);
        }
        if ready.len() >= ANALYSIS_BATCH || !more {
            let part = pool.install(|| analyze_histories(&ready, opts));
            out.analysis.merge(part);
            ready.clear();
        }
        if !more {
            break;
        }
    }
    Ok(out.finish())
}

/// Loads the whole file, groups in memory, then analyses.
pub fn run_in_memory<R: BufRead>(reader: R, opts: &AnalysisOptions) -> Result<PipelineOutput, PipelineError> {
    let pool = build_pool(opts.threads)?;
    let (dataset, ingest) = crate::records::load_dataset(reader, opts.window)?;
    let mut census = CensusAccumulator::new(opts.window);
    let kept: Vec<ValidatedRecord> = dataset.records.into_iter().filter(|r| opts.keeps(r)).collect();
    kept.iter().for_each(|r| census.observe(r));
    let histories = group_records(kept);
    let analysis = pool.install(|| analyze_histories(&histories, opts));
    Ok(PipelineOutput { ingest, analysis, census, in_memory: true }.finish())
}

/// Streams `path`, falling back to in-memory grouping for unclustered input.
pub fn run_file(path: &Path, opts: &AnalysisOptions) -> Result<PipelineOutput, PipelineError> {
    let open =
        || -> Result<BufReader<File>, PipelineError> { Ok(BufReader::with_capacity(1 << 20, File::open(path)?)) };
    match run_streaming(open()?, opts) {
        Err(PipelineError::NotClustered { .. }) => run_in_memory(open()?, opts),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::HEADER;

    fn file(rows: &[&str]) -> String {
        let mut s = format!("{HEADER}\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    const ROWS: [&str; 6] = [
        "p1;h47;SN;2012-08-13;2012-08-21;I21;M;1950",
        "p1;h79;SN;2012-08-21;2012-08-28;I50;M;1950",
        "p2;h12;TH;2010-05-24;2010-05-31;F10;F;1960",
        "p2;h24;TH;2010-05-24;2010-05-24;S72;F;1960",
        "p3;h1;BY;2011-01-01;2011-01-03;J18;F;1970",
        "p3;h1;BY;2013-01-01;2013-01-03;J18;F;1970",
    ];

    #[test]
    fn streaming_and_in_memory_agree() {
        let text = file(&ROWS);
        let opts = AnalysisOptions { collect_groups: true, ..Default::default() };
        let a = run_streaming(text.as_bytes(), &opts).unwrap();
        let b = run_in_memory(text.as_bytes(), &opts).unwrap();
        assert_eq!(a.ingest, b.ingest);
        assert_eq!(a.analysis.cohort, b.analysis.cohort);
        assert_eq!(a.analysis.overlaps, b.analysis.overlaps);
        assert_eq!(a.analysis.groups, b.analysis.groups);
        assert_eq!(a.analysis.network, b.analysis.network);
        assert_eq!(a.analysis.overlaps.groups, 2);
        assert_eq!(a.analysis.network.total_events(), 2);
    }

    #[test]
    fn unclustered_input_is_detected() {
        let rows = [ROWS[0], ROWS[2], ROWS[1]];
        let err = run_streaming(file(&rows).as_bytes(), &AnalysisOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::NotClustered { ref patient, row: 4 } if patient == "p1"));
    }

    #[test]
    fn state_filter_applies_before_grouping() {
        let opts = AnalysisOptions { states: Some(vec![State::Bavaria]), ..Default::default() };
        let out = run_streaming(file(&ROWS).as_bytes(), &opts).unwrap();
        assert_eq!(out.analysis.cohort.records, 2);
        assert_eq!(out.ingest.accepted, 6);
        assert_eq!(out.analysis.overlaps.groups, 0);
    }

    #[test]
    fn empty_input() {
        let out = run_streaming(&b""[..], &AnalysisOptions::default()).unwrap();
        assert_eq!(out.ingest.rows, 0);
        assert_eq!(out.analysis.cohort.patients, 0);
    }
}
