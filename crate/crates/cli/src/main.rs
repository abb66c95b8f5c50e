mod config;
mod output;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use carepath_core::icd;
use carepath_core::pipeline::{run_file, PipelineOutput};
use carepath_core::synth::{generate, verify, GroundTruth, SynthConfig};
use clap::{Parser, Subcommand};

use config::{AnalysisArgs, CommonArgs, RunConfig, Settings};

#[derive(Debug, Parser)]
#[command(name = "carepath", version, about = "Hospital stay record analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate records; writes ingest_report.json.
    Ingest(AnalysisArgs),
    /// Cohort and facility statistics; writes cohort.json, facilities.json, census.csv.
    Stats(AnalysisArgs),
    /// Overlap detection and classification; writes overlaps.json.
    Overlaps(AnalysisArgs),
    /// Transfer network; writes network_edges.csv and network.json.
    Network(AnalysisArgs),
    /// Every report at once.
    All(AnalysisArgs),
    /// Generate a synthetic record file with planted overlaps.
    Synth(SynthArgs),
    /// Compare detected overlaps with a generator's ground truth; writes verify.json.
    Verify(VerifyArgs),
    /// Print the ICD-10-GM chapter range table as CSV.
    IcdTable,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patients: Option<usize>,
    /// Plant this many instances of every overlap type.
    #[arg(long)]
    plant_each: Option<usize>,
    /// Unplanned random stays.
    #[arg(long)]
    noise: Option<usize>,
    /// Exact duplicate record pairs.
    #[arg(long)]
    duplicates: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, clap::Args)]
struct VerifyArgs {
    /// Ground truth written by `synth`.
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Clone, Copy)]
struct Reports {
    ingest: bool,
    stats: bool,
    overlaps: bool,
    network: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    let only = |ingest, stats, overlaps, network| Reports { ingest, stats, overlaps, network };
    match command {
        Command::Ingest(a) => analyze(&a, only(true, false, false, false)),
        Command::Stats(a) => analyze(&a, only(true, true, false, false)),
        Command::Overlaps(a) => analyze(&a, only(true, false, true, false)),
        Command::Network(a) => analyze(&a, only(true, false, false, true)),
        Command::All(a) => analyze(&a, only(true, true, true, true)),
        Command::Synth(a) => synth(&a),
        Command::Verify(a) => verify_cmd(&a),
        Command::IcdTable => {
            print!("{}", icd::chapter_table_csv());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn pipeline(s: &Settings) -> Result<PipelineOutput> {
    run_file(&s.input, &s.options).with_context(|| format!("cannot process {}", s.input.display()))
}

fn exit_status(s: &Settings, out: &PipelineOutput) -> ExitCode {
    if s.strict && out.ingest.rejected_total > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn analyze(args: &AnalysisArgs, which: Reports) -> Result<ExitCode> {
    let s = args.resolve()?;
    let out = pipeline(&s)?;
    fs::create_dir_all(&s.out).with_context(|| format!("cannot create {}", s.out.display()))?;
    if which.ingest {
        output::write_ingest(&s, &out)?;
    }
    if which.stats {
        output::write_stats(&s, &out)?;
    }
    if which.overlaps {
        output::write_overlaps(&s, &out)?;
    }
    if which.network {
        output::write_network(&s, &out)?;
    }
    print!("{}", output::summary(&s, &out, which.overlaps || which.stats, which.network));
    Ok(exit_status(&s, &out))
}

fn synth(a: &SynthArgs) -> Result<ExitCode> {
    let cfg_file = RunConfig::load(a.common.config.as_deref())?;
    let mut cfg: SynthConfig = cfg_file.synth.unwrap_or_default();
    if let Some(seed) = a.seed.or(cfg_file.seed) {
        cfg.seed = seed;
    }
    if let Some(n) = a.patients {
        cfg.patients = n;
    }
    if let Some(n) = a.plant_each {
        cfg = cfg.plant_every_type(n);
    }
    if let Some(n) = a.noise {
        cfg.noise_stays = n;
    }
    if let Some(n) = a.duplicates {
        cfg.duplicate_pairs = n;
    }
    let dir = a.common.out.clone().or(cfg_file.out).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let records = dir.join("records.csv");
    let file = File::create(&records).with_context(|| format!("cannot create {}", records.display()))?;
    let truth = generate(&cfg, BufWriter::new(file))?;
    output::write_json(&dir.join("ground_truth.json"), &truth)?;
    output::write_json(&dir.join("synth_config.json"), &cfg)?;
    println!("records: {}", truth.records);
    println!("patients: {}", truth.patients);
    println!("planted groups: {}", truth.planted.len());
    println!("noise stays: {}", truth.noise_stays);
    println!("wrote {}", records.display());
    Ok(ExitCode::SUCCESS)
}

fn verify_cmd(a: &VerifyArgs) -> Result<ExitCode> {
    let mut s = a.analysis.resolve()?;
    s.options.collect_groups = true;
    let text = fs::read_to_string(&a.truth).with_context(|| format!("cannot read {}", a.truth.display()))?;
    let truth: GroundTruth =
        serde_json::from_str(&text).with_context(|| format!("invalid ground truth {}", a.truth.display()))?;
    let out = pipeline(&s)?;
    let report = verify(&out.analysis.groups, &truth);
    fs::create_dir_all(&s.out).with_context(|| format!("cannot create {}", s.out.display()))?;
    output::write_json(&s.out.join("verify.json"), &report)?;
    for (t, c) in &report.per_type {
        println!(
            "{:<52} planted {:>6}  recovered {:>6}  detected {:>6}",
            t.label(),
            c.planted,
            c.recovered,
            c.detected
        );
    }
    println!("unplanned groups: {}", report.unplanned_groups);
    println!("mismatches: {}", report.mismatches.len());
    Ok(if report.passed() { exit_status(&s, &out) } else { ExitCode::from(1) })
}
