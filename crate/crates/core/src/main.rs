// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use grmfuzz::difftest::{Classification, MismatchFilter};
use grmfuzz::dutsim::{BugConfig, UNIVERSE_SIZE};
use grmfuzz::engine::{
    pretrain_policy, read_mismatch_log, render_trace_diff, replay_bare, replay_traces, write_artifacts, Campaign,
    CampaignConfig, EngineError, IterationReport, LoggedMismatch, Stage,
};
use grmfuzz::experiment::{run_arms, write_iterations_csv, write_spread_csv, write_summary_csv, ExperimentPreset};
use grmfuzz::isa::{parse_program, Vocabulary};

#[derive(Parser)]
#[command(name = "grmfuzz", version, about = "Two-stage generative processor fuzzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CampaignFlags {
    /// Campaign configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation threads; 0 uses all available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Enabled bug analogs: `all`, `none` or a list such as `V1,V3`.
    #[arg(long)]
    bugs: Option<String>,
    /// DUT-stage test-case budget.
    #[arg(long)]
    stage_budget: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one campaign and writes its artifacts under `<out>/<name>/`.
    Run {
        #[command(flatten)]
        flags: CampaignFlags,
        /// Known-mismatch filter to start from.
        #[arg(long)]
        filter: Option<PathBuf>,
        /// Continues from `<out>/<name>/checkpoints/latest`.
        #[arg(long)]
        resume: bool,
    },
    /// Runs an experiment preset and writes comparative CSVs.
    Ablate {
        preset: ExperimentPreset,
        #[command(flatten)]
        flags: CampaignFlags,
    },
    /// Replays a logged mismatch (`.jsonl`) or an assembly file and prints both traces.
    Replay {
        file: PathBuf,
        /// Test-case id inside a mismatch log; defaults to the first record.
        #[arg(long)]
        id: Option<String>,
        /// Environment seed (mismatch log) or reset-state seed (assembly).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "all")]
        bugs: String,
        #[arg(long, default_value_t = 256)]
        fuel: u64,
        /// Refuses to run unless the program hash matches.
        #[arg(long)]
        expect_hash: Option<String>,
    },
    /// Lists, classifies and replays NEW mismatches of a campaign directory.
    Triage {
        #[command(subcommand)]
        action: TriageAction,
    },
    /// Summarizes a campaign directory.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum TriageAction {
    List {
        dir: PathBuf,
    },
    Classify {
        dir: PathBuf,
        #[arg(long)]
        id: String,
        /// `bug` or `fp`.
        #[arg(long)]
        class: Classification,
        /// Replaces an existing, different classification.
        #[arg(long = "override")]
        allow_override: bool,
    },
    Replay {
        dir: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value = "all")]
        bugs: String,
    },
}

/// Exit status 2: the invocation or configuration is unusable.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn engine(e: EngineError) -> anyhow::Error {
    match e {
        EngineError::Config(m) => usage(m),
        other => other.into(),
    }
}

fn parse_bugs(s: &str) -> anyhow::Result<BugConfig> {
    BugConfig::parse_list(s).map_err(usage)
}

fn load_config(flags: &CampaignFlags) -> anyhow::Result<CampaignConfig> {
    let mut cfg = match &flags.config {
        Some(p) => CampaignConfig::load(p).map_err(engine)?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(w) = flags.workers {
        cfg.workers = w;
    }
    if let Some(b) = &flags.bugs {
        cfg.bugs = parse_bugs(b)?;
    }
    if let Some(n) = flags.stage_budget {
        cfg.dut_stage.max_test_cases = n;
    }
    cfg.validate().map_err(engine)?;
    Ok(cfg)
}

fn print_report(r: &IterationReport) {
    eprintln!(
        "iter {:>4} {:?} valid {:.3} tests {:>5} coverage {:>4} new mismatches {}",
        r.iteration, r.stage, r.validity_rate, r.test_cases, r.cum_coverage, r.new_mismatches
    );
}

fn cmd_run(flags: CampaignFlags, filter: Option<PathBuf>, resume: bool) -> anyhow::Result<()> {
    let cfg = load_config(&flags)?;
    let dir = flags.out.join(&cfg.name);
    let mut campaign = if resume {
        Campaign::resume(cfg, &dir.join("checkpoints/latest")).map_err(engine)?
    } else {
        Campaign::from_config(cfg).map_err(engine)?
    };
    if let Some(p) = filter {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        campaign = campaign.with_filter(MismatchFilter::from_json(&text).map_err(|e| usage(e.to_string()))?);
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    while !campaign.is_done() {
        match campaign.run_iteration() {
            Ok(r) => print_report(&r),
            Err(e) => {
                write_artifacts(&campaign, &dir)?;
                return Err(e.into());
            }
        }
    }
    write_artifacts(&campaign, &dir)?;
    let s = campaign.summary();
    println!(
        "{}: {} GRM + {} DUT iterations, {} test cases, coverage {}/{} ({:.1}%), test-case coverage {}, {} new mismatches, bugs [{}]",
        campaign.config.name,
        s.grm_iterations,
        s.dut_iterations,
        s.test_cases,
        s.cum_coverage,
        UNIVERSE_SIZE,
        100.0 * s.cum_coverage as f64 / UNIVERSE_SIZE as f64,
        s.testcase_coverage,
        s.new_mismatches,
        s.bugs_found.iter().map(|b| b.short()).collect::<Vec<_>>().join(",")
    );
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_ablate(preset: ExperimentPreset, flags: CampaignFlags) -> anyhow::Result<()> {
    let cfg = load_config(&flags)?;
    let dir = flags.out.join(format!("{}-{}", cfg.name, preset));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let policy = pretrain_policy(&cfg, &Vocabulary::default()).map_err(engine)?;
    let results = run_arms(preset.arms(&cfg), &policy).map_err(engine)?;
    for r in &results {
        write_artifacts(&r.campaign, &dir.join("arms").join(&r.arm.name))?;
    }
    write_iterations_csv(fs::File::create(dir.join("iterations.csv"))?, &results)?;
    write_summary_csv(fs::File::create(dir.join("summary.csv"))?, &results)?;
    if preset == ExperimentPreset::Robustness5Seeds {
        write_spread_csv(fs::File::create(dir.join("spread.csv"))?, &results)?;
    }
    write_summary_csv(std::io::stdout().lock(), &results)?;
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn load_log(path: &Path) -> anyhow::Result<Vec<LoggedMismatch>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_mismatch_log(BufReader::new(f)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn pick<'a>(log: &'a [LoggedMismatch], id: Option<&str>) -> anyhow::Result<&'a LoggedMismatch> {
    match id {
        Some(id) => log.iter().find(|m| m.record.test_case == id).ok_or_else(|| usage(format!("no record `{id}`"))),
        None => log.first().ok_or_else(|| usage("the mismatch log is empty")),
    }
}

fn cmd_replay(
    file: &Path,
    id: Option<&str>,
    seed: Option<u64>,
    bugs: &str,
    fuel: u64,
    expect_hash: Option<&str>,
) -> anyhow::Result<()> {
    let bugs = parse_bugs(bugs)?;
    let traces = if file.extension().is_some_and(|e| e == "jsonl") {
        let log = load_log(file)?;
        let m = pick(&log, id)?;
        if let Some(h) = expect_hash {
            if h != m.record.program_hash {
                return Err(anyhow!("program hash {} does not match the expected {h}", m.record.program_hash));
            }
        }
        replay_traces(m, seed, fuel, &bugs)?
    } else {
        let src = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let insts = parse_program(&src).map_err(|(line, e)| usage(format!("{}:{}: {e}", file.display(), line + 1)))?;
        replay_bare(id.unwrap_or("replay"), &insts, seed.unwrap_or(1), fuel, &bugs, expect_hash)?
    };
    print!("{}", render_trace_diff(&traces));
    Ok(())
}

fn cmd_triage(action: TriageAction) -> anyhow::Result<()> {
    let log_of = |dir: &Path| load_log(&dir.join("mismatches/new.jsonl"));
    let filter_of = |dir: &Path| -> anyhow::Result<MismatchFilter> {
        let text = fs::read_to_string(dir.join("filter.json")).context("reading filter.json")?;
        MismatchFilter::from_json(&text).map_err(|e| usage(e.to_string()))
    };
    match action {
        TriageAction::List { dir } => {
            let filter = filter_of(&dir)?;
            for m in log_of(&dir)? {
                let class = filter
                    .get(&m.record.signature)
                    .and_then(|e| e.classification)
                    .map_or("untriaged".to_string(), |c| format!("{c:?}"));
                let bugs: Vec<&str> = m.bugs.iter().map(|b| b.short()).collect();
                let s = &m.record.signature;
                println!(
                    "{}\t{:?}\t{:?}\t{}\t{}\tgrm={} dut={}\t[{}]\t{}",
                    m.record.test_case,
                    m.record.kind,
                    s.privilege,
                    s.mnemonic,
                    s.csr.as_deref().unwrap_or("-"),
                    m.record.grm_value,
                    m.record.dut_value,
                    bugs.join(","),
                    class
                );
            }
        }
        TriageAction::Classify { dir, id, class, allow_override } => {
            let log = log_of(&dir)?;
            let m = pick(&log, Some(&id))?;
            let mut filter = filter_of(&dir)?;
            filter.triage(&m.record, class, allow_override).map_err(|e| usage(e.to_string()))?;
            fs::write(dir.join("filter.json"), filter.to_json())?;
            println!("{id}: {class:?}");
        }
        TriageAction::Replay { dir, id, bugs } => {
            cmd_replay(&dir.join("mismatches/new.jsonl"), Some(&id), None, &bugs, 256, None)?;
        }
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> anyhow::Result<()> {
    let path = dir.join("reports/iterations.csv");
    let mut rd = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let rows: Vec<IterationReport> = rd.deserialize().collect::<Result<_, _>>()?;
    let last = rows.last().ok_or_else(|| anyhow!("{} has no rows", path.display()))?;
    let grm: Vec<&IterationReport> = rows.iter().filter(|r| r.stage == Stage::Grm).collect();
    let dut = rows.len() - grm.len();
    println!("iterations: {} GRM, {dut} DUT", grm.len());
    if let (Some(first), true) = (grm.first(), grm.len() >= 10) {
        let tail: f64 = grm[grm.len() - 10..].iter().map(|r| 1.0 - r.validity_rate).sum::<f64>() / 10.0;
        println!("GRM invalid rate: {:.3} at iteration 0, {:.3} over the last 10", 1.0 - first.validity_rate, tail);
    }
    println!("test cases: {}", last.test_cases);
    println!(
        "coverage: {}/{} ({:.1}%)",
        last.cum_coverage,
        UNIVERSE_SIZE,
        100.0 * last.cum_coverage as f64 / UNIVERSE_SIZE as f64
    );
    println!("test-case coverage: {}/{}", last.testcase_coverage, UNIVERSE_SIZE);
    let log = load_log(&dir.join("mismatches/new.jsonl"))?;
    let bugs: std::collections::BTreeSet<&str> = log.iter().flat_map(|m| m.bugs.iter().map(|b| b.short())).collect();
    println!("new mismatches: {} (bugs {})", log.len(), bugs.into_iter().collect::<Vec<_>>().join(","));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { flags, filter, resume } => cmd_run(flags, filter, resume),
        Command::Ablate { preset, flags } => cmd_ablate(preset, flags),
        Command::Replay { file, id, seed, bugs, fuel, expect_hash } => {
            cmd_replay(&file, id.as_deref(), seed, &bugs, fuel, expect_hash.as_deref())
        }
        Command::Triage { action } => cmd_triage(action),
        Command::Report { dir } => cmd_report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
