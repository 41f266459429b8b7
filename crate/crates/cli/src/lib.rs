//! The `texrel` command line: generate, validate, inspect and evaluate TXR1
//! datasets.
//!
//! Exit codes: 0 success, 1 validation or evaluation failure, 2 usage or
//! invalid configuration, 3 I/O error or corrupt file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use texrel::dataset::{
    dataset_stats, export_ppm, generate_to_path, read_dataset, DatasetConfig, DatasetFile,
};
use texrel::metrics::{MetricsReport, TreConfig};
use texrel::oracle::{build_language_sample, run_referential_eval, LanguageSpec};
use texrel::par;
use texrel::sampler::SplitKind;
use texrel::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Meanings sampled for metrics unless `--max-n` says otherwise.
pub const DEFAULT_SAMPLE: usize = 500;

#[derive(Debug, Parser)]
#[command(
    name = "texrel",
    version,
    about = "TexRel referential-game datasets and language metrics"
)]
struct Cli {
    /// Worker threads; 1 runs sequentially. Output is identical either way.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a dataset from a JSON config and write it as TXR1.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify integrity and re-check every stored label.
    Validate { path: PathBuf },
    /// Per-split balance, soundness, tightness, hygiene and neutrality.
    Stats {
        path: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write every scene of one example as a PPM image plus its annotation.
    ExportPpm {
        path: PathBuf,
        #[arg(long)]
        example: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Referential accuracy of an oracle speaker and symbolic receiver.
    OracleEval {
        path: PathBuf,
        #[arg(long, default_value = "compositional")]
        language: String,
        /// Seed for holistic tables and noise draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Topographic similarity, clustering, lexicon size, TRE and pTRE of an
    /// oracle language on one split.
    Metrics {
        path: PathBuf,
        #[arg(long, default_value = "compositional")]
        language: String,
        #[arg(long, default_value = "test_same")]
        split: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SAMPLE)]
        max_n: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum CliCommand {
    Generate {
        config: PathBuf,
        out: PathBuf,
        seed: Option<u64>,
    },
    Validate {
        path: PathBuf,
    },
    Stats {
        path: PathBuf,
        report: Option<PathBuf>,
    },
    ExportPpm {
        path: PathBuf,
        example: usize,
        out: PathBuf,
    },
    OracleEval {
        path: PathBuf,
        language: LanguageSpec,
        seed: u64,
        report: Option<PathBuf>,
    },
    Metrics {
        path: PathBuf,
        language: LanguageSpec,
        split: SplitKind,
        seed: u64,
        max_n: usize,
        report: Option<PathBuf>,
    },
}

/// A parsed invocation: one command plus the worker cap.
#[derive(Clone, Debug, PartialEq)]
pub struct Invocation {
    pub command: CliCommand,
    pub threads: Option<usize>,
}

/// Why parsing stopped: a usage error, or help/version text to print.
#[derive(Debug)]
pub enum ParseOutcome {
    Usage(String),
    Info(String),
}

pub fn parse_command<I, T>(argv: I) -> Result<Invocation, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::error::ErrorKind;
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ParseOutcome::Info(e.to_string()),
        _ => ParseOutcome::Usage(e.to_string()),
    })?;
    let language = |s: &str| {
        s.parse::<LanguageSpec>()
            .map_err(|e| ParseOutcome::Usage(e.to_string()))
    };
    let command = match cli.command {
        Command::Generate { config, out, seed } => CliCommand::Generate { config, out, seed },
        Command::Validate { path } => CliCommand::Validate { path },
        Command::Stats { path, report } => CliCommand::Stats { path, report },
        Command::ExportPpm { path, example, out } => CliCommand::ExportPpm { path, example, out },
        Command::OracleEval {
            path,
            language: l,
            seed,
            report,
        } => CliCommand::OracleEval {
            path,
            language: language(&l)?,
            seed,
            report,
        },
        Command::Metrics {
            path,
            language: l,
            split,
            seed,
            max_n,
            report,
        } => CliCommand::Metrics {
            path,
            language: language(&l)?,
            split: SplitKind::from_name(&split)
                .ok_or_else(|| ParseOutcome::Usage(format!("unknown split '{split}'")))?,
            seed,
            max_n,
            report,
        },
    };
    if cli.threads == Some(0) {
        return Err(ParseOutcome::Usage("--threads must be at least 1".into()));
    }
    Ok(Invocation {
        command,
        threads: cli.threads,
    })
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::Config(_) | Error::Parse(_) => EXIT_USAGE,
        _ => EXIT_FAILED,
    }
}

/// Runs a command, writing the human summary to `out`.
pub fn dispatch(inv: &Invocation, out: &mut dyn std::io::Write) -> i32 {
    let result = par::with_threads(inv.threads, || run(&inv.command)).and_then(|r| r);
    match result {
        Ok((code, text)) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<DatasetConfig, Error> {
    let text = fs::read_to_string(path)?;
    let mut cfg: DatasetConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(path: &Option<PathBuf>, json: &str) -> Result<(), Error> {
    if let Some(p) = path {
        fs::write(p, format!("{json}\n"))?;
    }
    Ok(())
}

fn accuracies(
    ds: &DatasetFile,
    lang: &texrel::oracle::OracleLanguage,
) -> Result<(f64, f64), Error> {
    let rep = run_referential_eval(ds, lang)?;
    Ok((
        rep.accuracy(SplitKind::TestSame).unwrap_or(0.0),
        rep.accuracy(SplitKind::TestNew).unwrap_or(0.0),
    ))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

fn run(cmd: &CliCommand) -> Result<(i32, String), Error> {
    use std::fmt::Write;
    let mut s = String::new();
    match cmd {
        CliCommand::Generate { config, out, seed } => {
            let cfg = load_config(config, *seed)?;
            let start = Instant::now();
            let header = generate_to_path(&cfg, out)?;
            let bytes = fs::metadata(out)?.len();
            writeln!(
                s,
                "wrote {} examples ({} bytes) to {} in {:.1}s",
                header.example_count,
                bytes,
                out.display(),
                start.elapsed().as_secs_f64()
            )
            .ok();
            Ok((EXIT_OK, s))
        }
        CliCommand::Validate { path } => {
            let ds = read_dataset(path)?;
            let stats = dataset_stats(&ds)?;
            writeln!(s, "checksum ok, {} examples", ds.len()).ok();
            writeln!(s, "soundness {:.4}", stats.overall_soundness()).ok();
            for sp in &stats.splits {
                writeln!(
                    s,
                    "{:<9} soundness {:.4} tightness {:.4} hygiene {:.4} balance {:.4} neutrality {:.4}",
                    sp.split.name(),
                    sp.soundness_rate,
                    sp.tightness_rate,
                    sp.hygiene_rate,
                    sp.exact_balance_rate,
                    sp.neutrality_rate
                )
                .ok();
            }
            let code = if stats.is_clean() {
                EXIT_OK
            } else {
                EXIT_FAILED
            };
            if code != EXIT_OK {
                writeln!(s, "validation FAILED").ok();
            }
            Ok((code, s))
        }
        CliCommand::Stats { path, report } => {
            let ds = read_dataset(path)?;
            let stats = dataset_stats(&ds)?;
            writeln!(
                s,
                "split      examples  sender+  receiver+  sound   tight   hygiene"
            )
            .ok();
            for sp in &stats.splits {
                writeln!(
                    s,
                    "{:<9} {:>9}  {:.4}   {:.4}     {:.4}  {:.4}  {:.4}",
                    sp.split.name(),
                    sp.examples,
                    sp.sender_balance,
                    sp.receiver_balance,
                    sp.soundness_rate,
                    sp.tightness_rate,
                    sp.hygiene_rate
                )
                .ok();
            }
            let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
            write_report(report, &json)?;
            Ok((EXIT_OK, s))
        }
        CliCommand::ExportPpm { path, example, out } => {
            let ds = read_dataset(path)?;
            let files = export_ppm(&ds, *example, out)?;
            let ex = ds.example(*example)?;
            let (english, tree) = ex.hypothesis.annotate();
            let tuple = ex.hypothesis.tuple();
            let meta = serde_json::json!({
                "index": example,
                "split": ex.split.name(),
                "english": english,
                "tree": tree.to_string(),
                "tuple": tuple.values,
                "task": tuple.task,
            });
            fs::write(
                out.join("annotation.json"),
                format!("{}\n", serde_json::to_string_pretty(&meta).expect("json")),
            )?;
            writeln!(s, "{english}").ok();
            writeln!(s, "{tree}").ok();
            writeln!(s, "{} images written to {}", files.len(), out.display()).ok();
            Ok((EXIT_OK, s))
        }
        CliCommand::OracleEval {
            path,
            language,
            seed,
            report,
        } => {
            let ds = read_dataset(path)?;
            let lang = language.build(&ds, *seed)?;
            let rep = run_referential_eval(&ds, &lang)?;
            for split in SplitKind::ALL {
                writeln!(
                    s,
                    "{:<9} accuracy {}",
                    split.name(),
                    fmt_opt(rep.accuracy(split))
                )
                .ok();
            }
            write_report(report, &rep.to_json())?;
            Ok((EXIT_OK, s))
        }
        CliCommand::Metrics {
            path,
            language,
            split,
            seed,
            max_n,
            report,
        } => {
            let ds = read_dataset(path)?;
            let lang = language.build(&ds, *seed)?;
            let sample = build_language_sample(&ds, &lang, *split, *max_n)?;
            let acc = accuracies(&ds, &lang)?;
            let rep = MetricsReport::compute(&sample, &TreConfig::default(), Some(acc))?;
            writeln!(
                s,
                "language {} on {} ({} meanings)",
                lang.name(),
                split,
                rep.sample_size
            )
            .ok();
            writeln!(s, "rho        {}", fmt_opt(rep.rho)).ok();
            writeln!(s, "precision  {}", fmt_opt(rep.precision)).ok();
            writeln!(s, "recall     {}", fmt_opt(rep.recall)).ok();
            writeln!(s, "lexicon    {}", rep.lexicon_size).ok();
            writeln!(s, "tre        {:.6}", rep.tre).ok();
            writeln!(s, "ptre       {}", fmt_opt(rep.ptre)).ok();
            writeln!(s, "gen_error  {}", fmt_opt(rep.generalization_error)).ok();
            write_report(report, &rep.to_json())?;
            Ok((EXIT_OK, s))
        }
    }
}
