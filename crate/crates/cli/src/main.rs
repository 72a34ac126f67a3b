use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chargrid_ocr::synth::{NoiseConfig, PageConfig};
use chargrid_ocr_cli::bench::{bench_filtering, BenchOptions};
use chargrid_ocr_cli::runner::{
    decode_dir, encode_pages, evaluate, load_charset, synth_corpus, total_warnings, write_report,
    DecodeFlags,
};
use clap::{Args, Parser, Subcommand};

/// Chargrid OCR post-processing toolkit: synthesize annotation corpora,
/// encode them into network target grids, decode grids back into words,
/// score predictions, and benchmark the box filtering pipeline.
#[derive(Debug, Parser)]
#[command(name = "chargrid-ocr", version, max_term_width = 100)]
struct Cli {
    /// Charset config file (default: bundled 89-symbol English set).
    #[arg(long, global = true, value_name = "FILE")]
    charset: Option<PathBuf>,

    /// Worker threads for page-parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    threads: usize,

    /// Base random seed for `synth` and `bench`; overrides the config file.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus: page annotations plus encoded grids.
    Synth(SynthArgs),
    /// Encode page annotations into grid bundles.
    Encode(EncodeArgs),
    /// Decode grid bundles into words.
    Decode(DecodeArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Compare Graphcore+NMS against brute-force NMS at growing scales.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of pages to generate.
    #[arg(long, value_name = "N")]
    pages: usize,
    /// Output directory for pages.jsonl, grid bundles and meta.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Page layout config JSON; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Noise config JSON; corrupts the encoded grids when given.
    #[arg(long, value_name = "FILE")]
    noise: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Page annotations as JSON lines.
    #[arg(long, value_name = "FILE")]
    pages: PathBuf,
    /// Output directory for grid bundles.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Directory holding `<id>.{S,Bc,Xc,Yc,Wc,Hc,Xw,Yw}.cgrd` bundles.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Output prediction JSON lines.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Box-mask threshold.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open_interval)]
    tau: f32,
    /// NMS IoU threshold.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open_interval)]
    theta: f32,
    /// Skip the Graphcore pre-filter (benchmark comparison).
    #[arg(long)]
    no_graphcore: bool,
    /// Include per-word member character boxes in the output.
    #[arg(long)]
    emit_chars: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Prediction JSON lines keyed by doc_id.
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Ground-truth page JSON lines keyed by doc_id.
    #[arg(long, value_name = "FILE")]
    gt: PathBuf,
    /// Output corpus report JSON.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write per-document rows as CSV.
    #[arg(long, value_name = "FILE")]
    per_doc: Option<PathBuf>,
    /// Compare strings case-insensitively.
    #[arg(long)]
    ignore_case: bool,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Ascending target candidate counts, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    sizes: Vec<usize>,
    /// Output CSV path.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Timing repetitions per row (median reported).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Box-mask threshold.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open_interval)]
    tau: f32,
    /// NMS IoU threshold.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open_interval)]
    theta: f32,
}

fn unit_open_interval(raw: &str) -> Result<f32, String> {
    let value: f32 = raw.parse().map_err(|e| format!("{e}"))?;
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(format!("{value} is outside (0, 1)"))
    }
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let charset = load_charset(cli.charset.as_deref())?;
    match cli.command {
        Command::Synth(args) => {
            let mut config: PageConfig = match &args.config {
                Some(path) => read_json_config(path)?,
                None => PageConfig::default(),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            let noise: Option<NoiseConfig> = match &args.noise {
                Some(path) => Some(read_json_config(path)?),
                None => None,
            };
            synth_corpus(
                &args.out,
                args.pages,
                &config,
                noise.as_ref(),
                &charset,
                cli.threads,
            )
        }
        Command::Encode(args) => encode_pages(&args.pages, &args.out, &charset, cli.threads),
        Command::Decode(args) => {
            let flags = DecodeFlags {
                tau: args.tau,
                theta: args.theta,
                use_graphcore: !args.no_graphcore,
                emit_chars: args.emit_chars,
            };
            let reports = decode_dir(&args.input, &args.out, &flags, &charset, cli.threads)?;
            let warnings = total_warnings(&reports);
            if warnings > 0 {
                eprintln!("{} warnings across {} pages", warnings, reports.len());
            }
            Ok(())
        }
        Command::Eval(args) => {
            let report = evaluate(&args.pred, &args.gt, args.ignore_case)?;
            write_report(&report, &args.out, args.per_doc.as_deref())?;
            println!("corpus_wrr {}", report.corpus_wrr);
            Ok(())
        }
        Command::Bench(args) => {
            let options = BenchOptions {
                reps: args.reps,
                tau: args.tau,
                theta: args.theta,
                page: PageConfig::default(),
            };
            let report = bench_filtering(&args.sizes, cli.seed.unwrap_or(0), &options)?;
            for row in &report.rows {
                println!(
                    "n={} after_graphcore={} t_graphcore_nms={:.6}s t_bruteforce_nms={:.6}s equal={}",
                    row.n_candidates,
                    row.n_after_graphcore,
                    row.t_graphcore_nms,
                    row.t_bruteforce_nms,
                    row.outputs_equal
                );
            }
            let out = std::fs::File::create(&args.out)
                .with_context(|| format!("create {}", args.out.display()))?;
            report.write_csv(out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
