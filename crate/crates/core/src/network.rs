//! Directed inter-facility transfer network derived from classified overlaps.
//!
//! Each qualifying two-record group yields one transfer event from the
//! facility of the earlier-admitted stay to the other one; on equal
//! admissions the stay discharged first is the source, and on fully equal
//! periods the lexicographically smaller facility id. A temporary transfer,
//! when enabled, yields two events: out to the contained stay's facility and
//! back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::overlaps::{ClassifiedGroup, OverlapType};
use crate::records::{ValidatedRecord, Window};

/// Overlap types that produce transfer events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkPolicy {
    include: BTreeSet<OverlapType>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("`{0}` involves a single facility and cannot form an edge")]
    SingleInstitution(OverlapType),
    #[error("multi-record groups have no transfer direction")]
    MultiRecord,
    #[error("{0}")]
    Parse(String),
}

impl Default for NetworkPolicy {
    fn default() -> Self {
        NetworkPolicy {
            include: [OverlapType::StandardTransfer, OverlapType::FirstDayTransfer, OverlapType::LastDayTransfer]
                .into_iter()
                .collect(),
        }
    }
}

impl NetworkPolicy {
    pub fn new<I: IntoIterator<Item = OverlapType>>(types: I) -> Result<NetworkPolicy, PolicyError> {
        let include: BTreeSet<OverlapType> = types.into_iter().collect();
        for t in &include {
            if t.is_single_institution() {
                return Err(PolicyError::SingleInstitution(*t));
            }
            if matches!(t, OverlapType::UnknownMultiple(_)) {
                return Err(PolicyError::MultiRecord);
            }
        }
        Ok(NetworkPolicy { include })
    }

    pub fn includes(&self, t: OverlapType) -> bool {
        self.include.contains(&t)
    }

    pub fn types(&self) -> impl Iterator<Item = OverlapType> + '_ {
        self.include.iter().copied()
    }
}

impl FromStr for NetworkPolicy {
    type Err = PolicyError;

    /// Comma-separated short names: `standard`, `first_day`, `last_day`,
    /// `temporary`, `unknown_two`, `simultaneous_two`, or full type keys.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let types = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "standard" => Ok(OverlapType::StandardTransfer),
                "first_day" => Ok(OverlapType::FirstDayTransfer),
                "last_day" => Ok(OverlapType::LastDayTransfer),
                "temporary" => Ok(OverlapType::TemporaryTransfer),
                "unknown_two" => Ok(OverlapType::UnknownTwoInstitutions),
                "simultaneous_two" => Ok(OverlapType::SimultaneousTwoInstitutions),
                other => other.parse().map_err(PolicyError::Parse),
            })
            .collect::<Result<Vec<_>, _>>()?;
        NetworkPolicy::new(types)
    }
}

impl fmt::Display for NetworkPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let keys: Vec<String> = self.include.iter().map(|t| t.key()).collect();
        f.write_str(&keys.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransferEvent {
    pub src: String,
    pub dst: String,
    pub kind: OverlapType,
}

fn source_first<'a>(a: &'a ValidatedRecord, b: &'a ValidatedRecord) -> (&'a ValidatedRecord, &'a ValidatedRecord) {
    let key = |r: &'a ValidatedRecord| (r.admission, r.discharge, r.facility_id.as_str());
    if key(a) <= key(b) {
        (a, b)
    } else {
        (b, a)
    }
}

/// Transfer events of one classified group under `policy`.
pub fn transfer_events(g: &ClassifiedGroup, policy: &NetworkPolicy) -> Vec<TransferEvent> {
    let [a, b] = g.members.as_slice() else { return Vec::new() };
    if !policy.includes(g.kind) || a.facility_id == b.facility_id {
        return Vec::new();
    }
    let event = |src: &ValidatedRecord, dst: &ValidatedRecord| TransferEvent {
        src: src.facility_id.clone(),
        dst: dst.facility_id.clone(),
        kind: g.kind,
    };
    let (first, second) = source_first(a, b);
    if g.kind == OverlapType::TemporaryTransfer {
        // `first` is the container: it is admitted strictly earlier.
        vec![event(first, second), event(second, first)]
    } else {
        vec![event(first, second)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEdge {
    pub src: String,
    pub dst: String,
    pub weight: u64,
    pub breakdown: BTreeMap<OverlapType, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkMetadata {
    pub window: Window,
    /// State filter codes; empty means no filter.
    pub states: Vec<String>,
    pub policy: NetworkPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferNetwork {
    pub edges: BTreeMap<(String, String), BTreeMap<OverlapType, u64>>,
    pub policy: NetworkPolicy,
}

impl TransferNetwork {
    pub fn new(policy: NetworkPolicy) -> Self {
        TransferNetwork { edges: BTreeMap::new(), policy }
    }

    pub fn add_event(&mut self, e: TransferEvent) {
        debug_assert_ne!(e.src, e.dst);
        *self.edges.entry((e.src, e.dst)).or_default().entry(e.kind).or_default() += 1;
    }

    pub fn observe(&mut self, g: &ClassifiedGroup) {
        for e in transfer_events(g, &self.policy) {
            self.add_event(e);
        }
    }

    pub fn merge(&mut self, other: &TransferNetwork) {
        for (k, breakdown) in &other.edges {
            let mine = self.edges.entry(k.clone()).or_default();
            for (t, n) in breakdown {
                *mine.entry(*t).or_default() += n;
            }
        }
    }

    pub fn edge_list(&self) -> Vec<TransferEdge> {
        self.edges
            .iter()
            .map(|((src, dst), breakdown)| TransferEdge {
                src: src.clone(),
                dst: dst.clone(),
                weight: breakdown.values().sum(),
                breakdown: breakdown.clone(),
            })
            .collect()
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        self.edges.keys().flat_map(|(s, d)| [s.as_str(), d.as_str()]).collect()
    }

    pub fn total_events(&self) -> u64 {
        self.edges.values().flat_map(|b| b.values()).sum()
    }

    /// Edge list CSV: `src,dst,weight` followed by one column per policy type.
    pub fn to_csv(&self) -> String {
        let types: Vec<OverlapType> = self.policy.types().collect();
        let mut out = String::from("src,dst,weight");
        for t in &types {
            out.push(',');
            out.push_str(&t.key());
        }
        out.push('\n');
        for e in self.edge_list() {
            out.push_str(&format!("{},{},{}", e.src, e.dst, e.weight));
            for t in &types {
                out.push_str(&format!(",{}", e.breakdown.get(t).copied().unwrap_or(0)));
            }
            out.push('\n');
        }
        out
    }

    pub fn export(&self, metadata: NetworkMetadata) -> NetworkExport {
        let mut adjacency: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for e in self.edge_list() {
            adjacency.entry(e.src).or_default().insert(e.dst, e.weight);
        }
        NetworkExport {
            schema_version: crate::SCHEMA_VERSION,
            metadata,
            nodes: self.nodes().into_iter().map(String::from).collect(),
            total_events: self.total_events(),
            adjacency,
            degrees: degree_summary(self),
        }
    }
}

pub fn build_network<'a, I>(groups: I, policy: NetworkPolicy) -> TransferNetwork
where
    I: IntoIterator<Item = &'a ClassifiedGroup>,
{
    let mut net = TransferNetwork::new(policy);
    for g in groups {
        net.observe(g);
    }
    net
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDegree {
    pub in_degree: u64,
    pub out_degree: u64,
    pub in_strength: u64,
    pub out_strength: u64,
}

pub fn degree_summary(net: &TransferNetwork) -> BTreeMap<String, NodeDegree> {
    let mut out: BTreeMap<String, NodeDegree> = BTreeMap::new();
    for e in net.edge_list() {
        let s = out.entry(e.src.clone()).or_default();
        s.out_degree += 1;
        s.out_strength += e.weight;
        let d = out.entry(e.dst).or_default();
        d.in_degree += 1;
        d.in_strength += e.weight;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkExport {
    pub schema_version: u32,
    pub metadata: NetworkMetadata,
    pub nodes: Vec<String>,
    pub total_events: u64,
    pub adjacency: BTreeMap<String, BTreeMap<String, u64>>,
    pub degrees: BTreeMap<String, NodeDegree>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icd::IcdCode;
    use crate::overlaps::{DiagnosisMatch, OverlapGroup};
    use crate::records::{validate, DayStamp, Record, Sex, State};

    fn group(stays: &[(&str, i32, i32)]) -> ClassifiedGroup {
        let d = DayStamp::parse_iso("2012-01-01").unwrap();
        let members = stays
            .iter()
            .map(|&(f, a, b)| {
                let r = Record {
                    patient_id: "p".into(),
                    facility_id: f.into(),
                    state: State::Saxony,
                    admission: d.offset(a),
                    discharge: d.offset(b),
                    diagnosis: IcdCode::parse("I21").unwrap(),
                    sex: Sex::Male,
                    birth_year: None,
                };
                validate(r, &Window::default()).unwrap()
            })
            .collect();
        ClassifiedGroup::new(OverlapGroup { patient_id: "p".into(), members }, DiagnosisMatch::FullCode)
    }

    #[test]
    fn standard_transfer_edge() {
        let net = build_network([&group(&[("47", 0, 8), ("79", 8, 15)])], NetworkPolicy::default());
        let edges = net.edge_list();
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].src.as_str(), edges[0].dst.as_str(), edges[0].weight), ("47", "79", 1));
    }

    #[test]
    fn same_admission_tie_goes_to_earlier_discharge() {
        let g = group(&[("12", 0, 7), ("24", 0, 0)]);
        assert_eq!(g.kind, OverlapType::FirstDayTransfer);
        let ev = transfer_events(&g, &NetworkPolicy::default());
        assert_eq!((ev[0].src.as_str(), ev[0].dst.as_str()), ("24", "12"));
    }

    #[test]
    fn temporary_transfer_counts_out_and_back() {
        let g = group(&[("171", 0, 19), ("193", 4, 11)]);
        assert!(transfer_events(&g, &NetworkPolicy::default()).is_empty());
        let policy: NetworkPolicy = "standard,first_day,last_day,temporary".parse().unwrap();
        let ev = transfer_events(&g, &policy);
        let pairs: Vec<(&str, &str)> = ev.iter().map(|e| (e.src.as_str(), e.dst.as_str())).collect();
        assert_eq!(pairs, [("171", "193"), ("193", "171")]);
    }

    #[test]
    fn empty_and_degrees() {
        let net = build_network([], NetworkPolicy::default());
        assert!(net.edge_list().is_empty());
        assert!(degree_summary(&net).is_empty());

        let g = group(&[("a", 0, 3), ("b", 3, 6)]);
        let net = build_network([&g, &g, &g], NetworkPolicy::default());
        let deg = degree_summary(&net);
        assert_eq!(deg["a"].out_strength, 3);
        assert_eq!(deg["b"].in_strength, 3);
        assert_eq!(deg["b"].out_strength, 0);
    }

    #[test]
    fn policy_validation() {
        assert!(matches!(
            "two_admissions_single_institution".parse::<NetworkPolicy>(),
            Err(PolicyError::SingleInstitution(_))
        ));
        assert!(matches!("unknown_multiple_3".parse::<NetworkPolicy>(), Err(PolicyError::MultiRecord)));
        assert!(matches!("teleport".parse::<NetworkPolicy>(), Err(PolicyError::Parse(_))));
        let p: NetworkPolicy = "standard, first_day ,last_day".parse().unwrap();
        assert_eq!(p, NetworkPolicy::default());
    }

    #[test]
    fn csv_export_is_stable() {
        let net = build_network(
            [&group(&[("a", 0, 3), ("b", 3, 6)]), &group(&[("b", 0, 3), ("a", 0, 0)])],
            NetworkPolicy::default(),
        );
        assert_eq!(
            net.to_csv(),
            "src,dst,weight,standard_transfer,first_day_transfer,last_day_transfer\n\
             a,b,2,1,1,0\n"
        );
    }
}
