use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use carepath_core::network::NetworkMetadata;
use carepath_core::overlaps::AUDIT_HEADER;
use carepath_core::pipeline::PipelineOutput;
use carepath_core::records::{IngestReport, State, Window};
use carepath_core::SCHEMA_VERSION;
use serde::Serialize;

use crate::config::Settings;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn state_codes(s: &Settings) -> Vec<String> {
    match &s.options.states {
        Some(states) => states.iter().map(|st| st.code().to_string()).collect(),
        None => State::ALL.iter().map(|st| st.code().to_string()).collect(),
    }
}

#[derive(Serialize)]
struct IngestFile<'a> {
    schema_version: u32,
    window: Window,
    states: Vec<String>,
    /// Input was not clustered by patient and was grouped in memory.
    grouped_in_memory: bool,
    #[serde(flatten)]
    report: &'a IngestReport,
}

pub fn write_ingest(s: &Settings, out: &PipelineOutput) -> Result<()> {
    let file = IngestFile {
        schema_version: SCHEMA_VERSION,
        window: s.options.window,
        states: state_codes(s),
        grouped_in_memory: out.in_memory,
        report: &out.ingest,
    };
    write_json(&s.out.join("ingest_report.json"), &file)
}

pub fn write_stats(s: &Settings, out: &PipelineOutput) -> Result<()> {
    write_json(&s.out.join("cohort.json"), &out.analysis.cohort.report())?;
    let facilities = out.analysis.facilities.report(s.census_top);
    write_json(&s.out.join("facilities.json"), &facilities)?;
    let mut csv = String::from("facility_id,date,count\n");
    for id in &facilities.census_facilities {
        out.census.series(id).write_csv_rows(&mut csv);
    }
    write_text(&s.out.join("census.csv"), &csv)
}

pub fn write_overlaps(s: &Settings, out: &PipelineOutput) -> Result<()> {
    let report = out.analysis.overlaps.report(s.options.diagnosis_match, s.top_k);
    write_json(&s.out.join("overlaps.json"), &report)?;
    if s.audit {
        let mut csv = format!("{AUDIT_HEADER}\n");
        for g in &out.analysis.groups {
            csv.push_str(&g.audit_line());
            csv.push('\n');
        }
        write_text(&s.out.join("overlap_audit.csv"), &csv)?;
    }
    Ok(())
}

pub fn write_network(s: &Settings, out: &PipelineOutput) -> Result<()> {
    let net = &out.analysis.network;
    write_text(&s.out.join("network_edges.csv"), &net.to_csv())?;
    let metadata = NetworkMetadata { window: s.options.window, states: state_codes(s), policy: net.policy.clone() };
    write_json(&s.out.join("network.json"), &net.export(metadata))
}

pub fn summary(s: &Settings, out: &PipelineOutput, overlaps: bool, network: bool) -> String {
    let mut t = String::new();
    let i = &out.ingest;
    let _ = writeln!(
        t,
        "rows: {}  accepted: {}  rejected: {}  censored: {}",
        i.rows, i.accepted, i.rejected_total, i.censored
    );
    for (k, n) in &i.rejected {
        let _ = writeln!(t, "  rejected {k}: {n}");
    }
    for (k, n) in &i.warnings {
        let _ = writeln!(t, "  warning {k}: {n}");
    }
    let c = &out.analysis.cohort;
    let _ = writeln!(t, "patients: {}  stays: {}", c.patients, c.records);
    if overlaps {
        let report = out.analysis.overlaps.report(s.options.diagnosis_match, s.top_k);
        let _ = writeln!(t, "overlap groups: {}", report.groups);
        for row in &report.types {
            let _ = writeln!(t, "  {:<52} {:>9} {:>6.1}%", row.label, row.count, row.percentage_rounded);
        }
    }
    if network {
        let net = &out.analysis.network;
        let _ = writeln!(
            t,
            "network: {} facilities, {} edges, {} transfers ({})",
            net.nodes().len(),
            net.edges.len(),
            net.total_events(),
            net.policy
        );
    }
    let _ = writeln!(t, "output: {}", s.out.display());
    t
}
