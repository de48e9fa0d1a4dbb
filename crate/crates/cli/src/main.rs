//! Operator entry point: generate simulated archives, run walk campaigns,
//! replay the worked three-page drift example, and rebuild reports from
//! recorded walks.
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error. Campaigns
//! exit 0 even when individual walks fail — failed walks are data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use driftwalk::client::ClientConfig;
use driftwalk::extract::ExtractOptions;
use driftwalk::live::LiveBackend;
use driftwalk::memento::OriginalUri;
use driftwalk::report::{self, MetaRecord, ReportError, RECORD_VERSION};
use driftwalk::sim::{self, CorpusFile, SimBackend};
use driftwalk::walk::{
    derive_seeds, parse_samples, run_campaign, Mode, ReplayTable, Sample, WalkConfig, WalkEngine,
};

#[derive(Parser)]
#[command(name = "driftwalk", version, about = "Temporal drift measurement for web archive browsing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum ModeArg {
    #[default]
    Strict,
    Relaxed,
}

#[derive(Clone, Copy, ValueEnum, Default)]
enum Preset {
    /// The documented default campaign corpus.
    #[default]
    Default,
    /// The bundled three-page worked example.
    Table1,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a simulated-archive description and its samples file.
    Simgen {
        /// JSON config file (a corpus file or a bare config); overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        preset: Preset,
        /// Corpus seed for the preset.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output corpus file; the samples file lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a walk campaign and write records plus the report bundle.
    Campaign {
        /// `sim:<corpus-file>` or `live:<archive-base-uri>`.
        #[arg(long)]
        backend: String,
        /// Samples file: one URI per line, optional class column.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        mode: ModeArg,
        /// Number of walks to attempt.
        #[arg(long)]
        walks: usize,
        /// Successful-step cap per walk.
        #[arg(long, default_value_t = 50)]
        max_steps: u32,
        /// Master seed; per-walk seeds derive from it.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// File of explicit per-walk seeds (one per line), instead of --seed.
        #[arg(long)]
        seed_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Delay before the single 503 retry, in milliseconds.
        /// Defaults: 1000 against a sim backend, 600000 live.
        #[arg(long)]
        retry_delay: Option<u64>,
        /// Minimum per-host delay between live requests, in milliseconds.
        /// Live mode requires a positive value (default 1000).
        #[arg(long)]
        politeness: Option<u64>,
        /// Strip archive toolbar chrome before link extraction.
        #[arg(long)]
        strip_chrome: bool,
        /// Output directory: walks.jsonl plus the report bundle.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay the worked drift example and print its drift table.
    ReplayTable1,
    /// Rebuild the report bundle from recorded walks, without re-walking.
    Report {
        /// One or more record files; concatenated, first meta wins.
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Config(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Simgen { config, preset, seed, out } => cmd_simgen(config, preset, seed, &out),
        Cmd::Campaign {
            backend,
            samples,
            mode,
            walks,
            max_steps,
            seed,
            seed_file,
            parallelism,
            retry_delay,
            politeness,
            strip_chrome,
            out,
        } => cmd_campaign(CampaignArgs {
            backend,
            samples,
            mode: match mode {
                ModeArg::Strict => Mode::Strict,
                ModeArg::Relaxed => Mode::Relaxed,
            },
            walks,
            max_steps,
            seed,
            seed_file,
            parallelism,
            retry_delay,
            politeness,
            strip_chrome,
            out,
        }),
        Cmd::ReplayTable1 => cmd_replay_table1(),
        Cmd::Report { records, out } => cmd_report(&records, &out),
    }
}

fn samples_path_for(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    out.with_file_name(format!("{stem}.samples.txt"))
}

fn cmd_simgen(
    config: Option<PathBuf>,
    preset: Preset,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(&path)?;
            // Accept either a corpus file or a bare config.
            match CorpusFile::from_json(&text) {
                Ok(file) => file.config,
                Err(_) => serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            }
        }
        None => match preset {
            Preset::Default => sim::default_campaign(seed),
            Preset::Table1 => sim::table1_fixture(),
        },
    };
    let archive = sim::generate(&cfg)?;
    std::fs::write(out, CorpusFile::new(cfg).to_json())?;

    let samples_path = samples_path_for(out);
    let mut samples = String::new();
    for (uri, class) in archive.samples() {
        samples.push_str(&format!("{uri} {class}\n"));
    }
    std::fs::write(&samples_path, samples)?;

    println!("seed: {}", archive.config().seed);
    println!("corpus: {}", out.display());
    println!("samples: {}", samples_path.display());
    println!("pages: {}", archive.page_uris().count());
    println!("corpus hash: {}", archive.corpus_hash());
    Ok(())
}

struct CampaignArgs {
    backend: String,
    samples: PathBuf,
    mode: Mode,
    walks: usize,
    max_steps: u32,
    seed: u64,
    seed_file: Option<PathBuf>,
    parallelism: usize,
    retry_delay: Option<u64>,
    politeness: Option<u64>,
    strip_chrome: bool,
    out: PathBuf,
}

enum AnyBackend {
    Sim(SimBackend),
    Live(LiveBackend),
}

impl AnyBackend {
    fn backend(&self) -> &dyn driftwalk::client::Backend {
        match self {
            AnyBackend::Sim(b) => b,
            AnyBackend::Live(b) => b,
        }
    }
}

fn load_backend(spec: &str, politeness: Option<u64>) -> Result<(AnyBackend, String), CliError> {
    if let Some(path) = spec.strip_prefix("sim:") {
        let text = std::fs::read_to_string(path)?;
        let file = CorpusFile::from_json(&text)?;
        let archive = Arc::new(sim::generate(&file.config)?);
        let hash = archive.corpus_hash();
        Ok((AnyBackend::Sim(SimBackend::new(archive)), hash))
    } else if let Some(base) = spec.strip_prefix("live:") {
        let delay = politeness.unwrap_or(1000);
        if delay == 0 {
            return Err(CliError::Config("live mode requires a positive politeness delay".into()));
        }
        let backend =
            LiveBackend::new(base, Duration::from_millis(delay), None).map_err(CliError::Config)?;
        Ok((AnyBackend::Live(backend), format!("live:{base}")))
    } else {
        Err(CliError::Config(format!(
            "backend must be sim:<corpus-file> or live:<archive-base-uri>, got {spec}"
        )))
    }
}

fn read_seed_file(path: &Path) -> Result<Vec<u64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let seed: u64 = line.parse().map_err(|_| {
            CliError::Config(format!("{}:{}: not a u64 seed", path.display(), i + 1))
        })?;
        seeds.push(seed);
    }
    let mut dedup = seeds.clone();
    dedup.sort_unstable();
    dedup.dedup();
    if dedup.len() != seeds.len() {
        return Err(CliError::Config(format!("{}: duplicate seeds", path.display())));
    }
    Ok(seeds)
}

fn cmd_campaign(args: CampaignArgs) -> Result<(), CliError> {
    if args.max_steps < 1 {
        return Err(CliError::Config("--max-steps must be at least 1".into()));
    }
    let (backend, corpus_hash) = load_backend(&args.backend, args.politeness)?;
    let is_live = matches!(backend, AnyBackend::Live(_));
    let retry_delay = args.retry_delay.unwrap_or(if is_live { 600_000 } else { 1000 });

    let samples_text = std::fs::read_to_string(&args.samples)?;
    let samples: Vec<Sample> =
        parse_samples(&samples_text).map_err(|e| CliError::Config(e.to_string()))?;
    if samples.is_empty() {
        return Err(CliError::Config(format!("{}: no samples", args.samples.display())));
    }

    let seeds = match &args.seed_file {
        Some(path) => read_seed_file(path)?,
        None => derive_seeds(args.seed, args.walks),
    };
    let seeds: Vec<u64> = seeds.into_iter().take(args.walks).collect();

    let wcfg = WalkConfig {
        mode: args.mode,
        max_steps: args.max_steps,
        client: ClientConfig {
            retry_delay: Duration::from_millis(retry_delay),
            ..Default::default()
        },
        extract: ExtractOptions { strip_chrome: args.strip_chrome },
    };

    let config_echo = serde_json::json!({
        "backend": args.backend,
        "samples": args.samples.display().to_string(),
        "mode": match args.mode { Mode::Strict => "strict", Mode::Relaxed => "relaxed" },
        "walks": args.walks,
        "max_steps": args.max_steps,
        "seed": args.seed,
        "seed_file": args.seed_file.as_ref().map(|p| p.display().to_string()),
        "parallelism": args.parallelism,
        "retry_delay_ms": retry_delay,
        "politeness_ms": args.politeness,
        "strip_chrome": args.strip_chrome,
    });
    let meta = MetaRecord { v: RECORD_VERSION, config: config_echo, corpus_hash };

    std::fs::create_dir_all(&args.out)?;
    let records_path = args.out.join("walks.jsonl");

    // Resume: keep walks already recorded, run only missing seeds. The
    // walk count may grow between runs (per-walk seeds are prefix-stable
    // under a master seed); any other config change needs a fresh --out.
    let identity = |m: &MetaRecord| {
        let mut config = m.config.clone();
        if let Some(o) = config.as_object_mut() {
            o.remove("walks");
        }
        (m.v, config, m.corpus_hash.clone())
    };
    let done = report::recorded_seeds(&records_path)?;
    if done.is_empty() {
        report::write_records(&records_path, &meta, &[])?;
    } else {
        let (existing_meta, _) = report::read_records(&records_path)?;
        if identity(&existing_meta) != identity(&meta) {
            return Err(CliError::Config(format!(
                "{} was recorded with a different configuration; use a fresh --out",
                records_path.display()
            )));
        }
        eprintln!("resuming: {} walks already recorded", done.len());
    }
    let todo: Vec<u64> = seeds.iter().copied().filter(|s| !done.contains(s)).collect();

    println!("seed: {}", args.seed);
    println!("walks: {} attempted, {} to run", seeds.len(), todo.len());
    // Append in chunks so an interrupted campaign keeps its progress.
    let chunk = (args.parallelism.max(1) * 16).max(64);
    for part in todo.chunks(chunk) {
        let walks = run_campaign(backend.backend(), &wcfg, &samples, part, args.parallelism);
        report::append_walks(&records_path, &walks)?;
    }

    let (meta, all_walks) = report::read_records(&records_path)?;
    let report = report::build_report(&meta, all_walks);
    report::write_report_bundle(&args.out, &report)?;

    println!("records: {}", records_path.display());
    println!("unique walks: {}", report.summary.total.unique_walks);
    println!("successful walks: {}", report.summary.total.succ_walks);
    println!("successful steps: {}", report.summary.total.succ_steps);
    println!("report bundle: {}", args.out.display());
    Ok(())
}

fn cmd_replay_table1() -> Result<(), CliError> {
    let cfg = sim::table1_fixture();
    let archive = Arc::new(sim::generate(&cfg)?);
    let backend = SimBackend::new(archive);
    let engine = WalkEngine::new(
        &backend,
        WalkConfig {
            client: ClientConfig { retry_delay: Duration::ZERO, ..Default::default() },
            ..Default::default()
        },
    );
    let cs = OriginalUri::parse("http://www.cs.odu.edu/").unwrap();
    let sci = OriginalUri::parse("http://sci.odu.edu/").unwrap();
    let t1 = driftwalk::memento::ArchiveDatetime::decode14("20050514013608").unwrap();
    let table = engine
        .replay_clicks(&cs, t1, &[sci, cs.clone()])
        .map_err(|e| CliError::Config(e.to_string()))?;
    print!("{}", format_replay(&table));
    Ok(())
}

/// Renders the replay as the familiar two-policy drift table.
fn format_replay(table: &ReplayTable) -> String {
    let day = |d: driftwalk::memento::Drift| format!("{} days", d.floor_days());
    let date = |dt: driftwalk::memento::ArchiveDatetime| {
        let s = dt.encode14();
        format!("{}-{}-{}", &s[0..4], &s[4..6], &s[6..8])
    };
    let mut out = format!("Temporal drift example (target {})\n", table.target);
    out.push_str(&format!(
        "{:<28} {:>12} {:>9}   {:>12} {:>9}\n",
        "Page", "Sliding", "drift", "Sticky", "drift"
    ));
    for row in &table.rows {
        out.push_str(&format!(
            "{:<28} {:>12} {:>9}   {:>12} {:>9}\n",
            row.uri.as_str(),
            date(row.ui_dt),
            row.ui_drift.map(day).unwrap_or_else(|| "--".into()),
            date(row.api_dt),
            row.api_drift.map(day).unwrap_or_else(|| "--".into()),
        ));
    }
    out.push_str(&format!(
        "{:<28} {:>12} {:>9}   {:>12} {:>9}\n",
        "Mean",
        "",
        day(table.ui_mean),
        "",
        day(table.api_mean)
    ));
    out
}

fn cmd_report(records: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let paths: Vec<&Path> = records.iter().map(|p| p.as_path()).collect();
    let (meta, walks) = report::read_many(&paths)?;
    let report = report::build_report(&meta, walks);
    report::write_report_bundle(out, &report)?;
    println!("unique walks: {}", report.summary.total.unique_walks);
    println!("report bundle: {}", out.display());
    Ok(())
}
