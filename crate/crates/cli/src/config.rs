use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use carepath_core::network::NetworkPolicy;
use carepath_core::overlaps::DiagnosisMatch;
use carepath_core::pipeline::AnalysisOptions;
use carepath_core::records::{parse_state_list, DayStamp, State, Window};
use carepath_core::synth::SynthConfig;
use clap::Args;
use serde::Deserialize;

/// Shared JSON configuration. Command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub window_start: Option<String>,
    pub window_end: Option<String>,
    pub states: Option<String>,
    pub policy: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub strict: Option<bool>,
    pub diagnosis_match: Option<String>,
    pub top_k: Option<usize>,
    pub census_top: Option<usize>,
    pub audit: Option<bool>,
    pub seed: Option<u64>,
    pub synth: Option<SynthConfig>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Shared JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Record file (semicolon separated, with header).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub window_start: Option<String>,
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub window_end: Option<String>,
    /// Comma separated state codes or names, e.g. `SN,TH`.
    #[arg(long)]
    pub states: Option<String>,
    /// Overlap types counted as transfers, e.g. `standard,first_day,last_day`.
    #[arg(long)]
    pub policy: Option<String>,
    /// Exit with status 1 when any row was rejected.
    #[arg(long)]
    pub strict: bool,
    /// `full` or `chapter`.
    #[arg(long)]
    pub diagnosis_match: Option<String>,
    /// Chapter pairs listed per pair code.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Facilities with exported census series.
    #[arg(long)]
    pub census_top: Option<usize>,
    /// Write one line per overlap group to overlap_audit.csv.
    #[arg(long)]
    pub audit: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub input: PathBuf,
    pub out: PathBuf,
    pub options: AnalysisOptions,
    pub strict: bool,
    pub top_k: usize,
    pub census_top: usize,
    pub audit: bool,
}

fn parse_day(text: &str, what: &str) -> Result<DayStamp> {
    DayStamp::parse_iso(text.trim()).with_context(|| format!("{what} `{text}` is not a YYYY-MM-DD date"))
}

pub fn window(start: Option<&str>, end: Option<&str>) -> Result<Window> {
    let default = Window::default();
    let start = start.map(|s| parse_day(s, "window start")).transpose()?.unwrap_or(default.start);
    let end = end.map(|s| parse_day(s, "window end")).transpose()?.unwrap_or(default.end);
    match Window::new(start, end) {
        Some(w) => Ok(w),
        None => bail!("window start {start} is after window end {end}"),
    }
}

impl AnalysisArgs {
    /// Merges flags over the config file and validates everything before
    /// any record is read.
    pub fn resolve(&self) -> Result<Settings> {
        let cfg = RunConfig::load(self.common.config.as_deref())?;
        let input = self.input.clone().or(cfg.input).context("no input file given (use --input)")?;
        if !input.is_file() {
            bail!("input file {} does not exist", input.display());
        }
        let window = window(
            self.window_start.as_deref().or(cfg.window_start.as_deref()),
            self.window_end.as_deref().or(cfg.window_end.as_deref()),
        )?;
        let states: Option<Vec<State>> = match self.states.as_deref().or(cfg.states.as_deref()) {
            Some(s) => Some(parse_state_list(s).map_err(anyhow::Error::msg)?),
            None => None,
        };
        let policy: NetworkPolicy = match self.policy.as_deref().or(cfg.policy.as_deref()) {
            Some(p) => p.parse().map_err(|e| anyhow::anyhow!("invalid policy: {e}"))?,
            None => NetworkPolicy::default(),
        };
        let diagnosis_match: DiagnosisMatch = match self.diagnosis_match.as_deref().or(cfg.diagnosis_match.as_deref()) {
            Some(m) => m.parse().map_err(anyhow::Error::msg)?,
            None => DiagnosisMatch::FullCode,
        };
        let threads = self.common.threads.or(cfg.threads).unwrap_or(1);
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        let audit = self.audit || cfg.audit.unwrap_or(false);
        Ok(Settings {
            input,
            out: self.common.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from(".")),
            options: AnalysisOptions { window, states, diagnosis_match, policy, threads, collect_groups: audit },
            strict: self.strict || cfg.strict.unwrap_or(false),
            top_k: self.top_k.or(cfg.top_k).unwrap_or(10),
            census_top: self.census_top.or(cfg.census_top).unwrap_or(6),
            audit,
        })
    }
}
