use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use boltzmann_gate::axioms::{run_suite, ToleranceConfig};
use boltzmann_gate::convexity::convexity_verdict;
use boltzmann_gate::io::{
    emit_report, ingest_csv, parse_report, render_markdown, write_counts, write_frequencies, Command, ConfigEcho,
    ConvexityBlock, ConvexityInput, Format, InputEcho, RecoveryBlock, ReportDocument, SAMPLER_RNG,
};
use boltzmann_gate::model::{Menu, Smoothing, TemperatureGrid};
use boltzmann_gate::recovery::recover;
use boltzmann_gate::synth::{default_menus, generate, FamilyKind, FamilySpec, RNG_NAME};

const THREADS_VAR: &str = "BOLTZMANN_GATE_THREADS";

#[derive(Parser)]
#[command(name = "boltzmann-gate", version, about = "Test temperature-indexed choice data for a Boltzmann representation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingArg {
    None,
    Jeffreys,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Markdown => Format::Markdown,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic family as CSV.
    Generate {
        /// Preset name (boltzmann, softmax-square, uniform, probit, crossing,
        /// breaker) or a JSON file describing the family.
        #[arg(long)]
        kind: String,
        /// Comma-separated temperatures, e.g. 0.25,0.5,1,2,4.
        #[arg(long)]
        grid: String,
        /// JSON list of menus `{"id": ..., "members": [...]}`; defaults to
        /// every pair plus the full menu.
        #[arg(long)]
        menus: Option<String>,
        /// Draws per (temperature, menu) cell.
        #[arg(long, default_value_t = 0)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write exact frequencies instead of sampled counts.
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Run the axiom suite on a CSV.
    Check {
        #[arg(long = "in")]
        input: String,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "none")]
        smoothing: SmoothingArg,
        #[arg(long, default_value = "-")]
        report: String,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Recover energies, noise map and concatenation generator.
    Recover {
        #[arg(long = "in")]
        input: String,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "none")]
        smoothing: SmoothingArg,
        #[arg(long, default_value = "-")]
        report: String,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Test convexity of an energy on a box through the mixture inequality.
    Convexity {
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "-")]
        report: String,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Print a saved JSON report.
    Report {
        #[arg(long = "in")]
        input: String,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
    },
}

fn open_input(path: &str) -> Result<Box<dyn Read>> {
    if path == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    let file = File::open(path).with_context(|| format!("cannot open {path}"))?;
    Ok(Box::new(BufReader::new(file)))
}

fn read_text(path: &str) -> Result<String> {
    let mut s = String::new();
    open_input(path)?.read_to_string(&mut s).with_context(|| format!("cannot read {path}"))?;
    Ok(s)
}

fn open_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    let file = File::create(path).with_context(|| format!("cannot create {path}"))?;
    Ok(Box::new(io::BufWriter::new(file)))
}

fn write_text(path: &str, text: &str) -> Result<()> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn smoothing(arg: SmoothingArg) -> Smoothing {
    match arg {
        SmoothingArg::None => Smoothing::None,
        SmoothingArg::Jeffreys => Smoothing::Jeffreys,
    }
}

fn family_kind(kind: &str) -> Result<FamilyKind> {
    if let Some(k) = FamilyKind::preset(kind) {
        return Ok(k);
    }
    if Path::new(kind).exists() {
        let text = read_text(kind)?;
        return serde_json::from_str(&text).with_context(|| format!("invalid family file {kind}"));
    }
    bail!("unknown family {kind:?}; expected one of {} or a JSON file", FamilyKind::PRESETS.join(", "))
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_VAR} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Returns whether the command's overall outcome was a pass.
fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Generate {
            kind,
            grid,
            menus,
            n,
            seed,
            exact,
            out,
        } => {
            let kind = family_kind(&kind)?;
            let grid = TemperatureGrid::parse_list(&grid)?;
            let menus: Vec<Menu> = match menus {
                Some(path) => serde_json::from_str(&read_text(&path)?).with_context(|| format!("invalid menu file {path}"))?,
                None => default_menus(&kind),
            };
            if !exact && n == 0 {
                bail!("--n must be positive unless --exact is given");
            }
            let spec = FamilySpec {
                kind,
                grid,
                menus,
                n: if exact { 0 } else { n },
                seed,
            };
            let rsf = generate(&spec)?;
            let mut w = open_output(&out)?;
            match rsf.count_records() {
                Some(records) => write_counts(&mut w, &records)?,
                None => write_frequencies(&mut w, &rsf.frequency_records())?,
            }
            w.flush()?;
            if spec.n > 0 {
                eprintln!("sampled with {RNG_NAME}, seed {}", spec.seed);
            }
            Ok(true)
        }
        Cmd::Check {
            input,
            alpha,
            smoothing: sm,
            report,
            format,
        } => {
            let cfg = ToleranceConfig::with_alpha(alpha).map_err(anyhow::Error::msg)?;
            let data = ingest_csv(open_input(&input)?, smoothing(sm)).with_context(|| format!("reading {input}"))?;
            let config = ConfigEcho {
                tolerances: Some(cfg),
                smoothing: Some(smoothing(sm)),
                input: Some(InputEcho::of(&data)),
                ..Default::default()
            };
            let doc = ReportDocument::new(Command::Check, config).with_axioms(run_suite(&data.rsf, &cfg));
            write_text(&report, &emit_report(&doc, format.into())?)?;
            Ok(doc.overall)
        }
        Cmd::Recover {
            input,
            alpha,
            smoothing: sm,
            report,
            format,
        } => {
            let cfg = ToleranceConfig::with_alpha(alpha).map_err(anyhow::Error::msg)?;
            let data = ingest_csv(open_input(&input)?, smoothing(sm)).with_context(|| format!("reading {input}"))?;
            let block = match recover(&data.rsf, &cfg) {
                Ok(r) => RecoveryBlock {
                    result: Some(r),
                    error: None,
                },
                Err(e) => RecoveryBlock {
                    result: None,
                    error: Some(e.to_string()),
                },
            };
            let config = ConfigEcho {
                tolerances: Some(cfg),
                smoothing: Some(smoothing(sm)),
                input: Some(InputEcho::of(&data)),
                ..Default::default()
            };
            let doc = ReportDocument::new(Command::Recover, config).with_recovery(block);
            write_text(&report, &emit_report(&doc, format.into())?)?;
            Ok(doc.overall)
        }
        Cmd::Convexity { model, report, format } => {
            let text = read_text(&model)?;
            let input: ConvexityInput = serde_json::from_str(&text).with_context(|| format!("invalid model file {model}"))?;
            let verdict = convexity_verdict(&input.model, &input.sampler)?;
            let config = ConfigEcho {
                seed: Some(input.sampler.seed),
                rng: Some(SAMPLER_RNG.to_string()),
                ..Default::default()
            };
            let doc = ReportDocument::new(Command::Convexity, config).with_convexity(ConvexityBlock {
                model: input.model,
                sampler: input.sampler,
                verdict,
            });
            write_text(&report, &emit_report(&doc, format.into())?)?;
            // a non-convex energy is a finding, not a failure
            Ok(true)
        }
        Cmd::Report { input, format } => {
            let doc = parse_report(&read_text(&input)?).with_context(|| format!("reading {input}"))?;
            let text = match format {
                FormatArg::Markdown => render_markdown(&doc),
                FormatArg::Json => emit_report(&doc, Format::Json)?,
            };
            write_text("-", &text)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
