use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use carepath_core::cohort::group_by_patient;
use carepath_core::network::{build_network, NetworkPolicy};
use carepath_core::overlaps::{classify_history, render_group, ClassifiedGroup, DiagnosisMatch, OverlapType};
use carepath_core::records::{load_dataset, Dataset, Record, Window};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn dataset() -> Dataset {
    let f = fs::File::open(fixture("overlap_examples.csv")).unwrap();
    let (d, report) = load_dataset(BufReader::new(f), Window::default()).unwrap();
    assert_eq!(report.rejected_total, 0);
    d
}

fn groups() -> Vec<ClassifiedGroup> {
    group_by_patient(&dataset()).iter().flat_map(|h| classify_history(h, DiagnosisMatch::FullCode)).collect()
}

#[test]
fn ten_rows_classify_as_captioned() {
    use OverlapType::*;
    let expected = [
        StandardTransfer,
        FirstDayTransfer,
        LastDayTransfer,
        TemporaryTransfer,
        UnknownTwoInstitutions,
        UnknownMultiple(3),
        UnknownTwoInstitutions,
        SimultaneousTwoInstitutions,
        SimultaneousSingleInstitution,
        TwoAdmissionsSingleInstitution,
    ];
    let groups = groups();
    assert_eq!(groups.len(), 10);
    for (i, (g, want)) in groups.iter().zip(expected).enumerate() {
        assert_eq!(g.patient_id, format!("ex-{:02}", i + 1));
        assert_eq!(g.kind, want, "row {}", i + 1);
    }
}

#[test]
fn pair_codes_of_the_rows() {
    let codes: Vec<String> = groups().iter().map(|g| g.pair_code.map_or("-".into(), |c| c.to_string())).collect();
    assert_eq!(codes, ["0000", "0110", "0101", "0000", "0100", "-", "0110", "0111", "1011", "1100"]);
}

#[test]
fn renders_match_the_figure() {
    let d = dataset();
    let mut patients: Vec<&str> = d.records.iter().map(|r| r.patient_id.as_str()).collect();
    patients.dedup();
    let blocks: Vec<String> = patients
        .iter()
        .map(|p| render_group(d.records.iter().filter(|r| r.patient_id == *p).map(|r| -> &Record { r })))
        .collect();
    let golden = fs::read_to_string(fixture("overlap_examples_render.txt")).unwrap();
    assert_eq!(blocks.join("\n"), golden);
}

#[test]
fn default_policy_gives_three_edges() {
    let groups = groups();
    let net = build_network(&groups, NetworkPolicy::default());
    let edges: Vec<(String, String)> = net.edge_list().into_iter().map(|e| (e.src, e.dst)).collect();
    assert_eq!(edges, [("24".into(), "12".into()), ("47".into(), "79".into()), ("5".into(), "28".into())]);

    let with_temporary: NetworkPolicy = "standard,first_day,last_day,temporary".parse().unwrap();
    let net = build_network(&groups, with_temporary);
    assert_eq!(net.total_events(), 5);
    assert_eq!(net.edges[&("171".to_string(), "193".to_string())].values().sum::<u64>(), 1);
    assert_eq!(net.edges[&("193".to_string(), "171".to_string())].values().sum::<u64>(), 1);
}
