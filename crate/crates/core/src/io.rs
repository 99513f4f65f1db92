//! File formats: count and frequency CSVs, family and model descriptions,
//! and the versioned report document.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axioms::{AxiomReport, ToleranceConfig, Verdict};
use crate::convexity::{ConvexModel, ConvexityVerdict, SamplerConfig};
use crate::model::{CountRecord, EmpiricalRsf, FrequencyRecord, ModelError, Smoothing};
use crate::recovery::Recovery;

pub const SCHEMA: &str = "boltzmann-gate/1";
pub const COUNT_HEADER: [&str; 4] = ["temperature", "menu_id", "state", "count"];
pub const FREQUENCY_HEADER: [&str; 4] = ["temperature", "menu_id", "state", "frequency"];
pub const SAMPLER_RNG: &str = "chacha20 (rand_chacha), seeded from the sampler seed";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("unrecognized header {found:?}; expected `temperature,menu_id,state,count` or `temperature,menu_id,state,frequency`")]
    Header { found: String },
    #[error("empty input: no header line")]
    Empty,
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("{0}")]
    Model(ModelError),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid report: {0}")]
    Report(String),
}

/// What kind of rows a CSV carried.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Counts,
    Frequencies,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub rsf: EmpiricalRsf,
    pub kind: InputKind,
    pub rows: usize,
}

/// Rewrite a record-indexed model error so it names the CSV line.
fn with_line(e: ModelError) -> IoError {
    let row = match &e {
        ModelError::DuplicateCell { row, .. }
        | ModelError::InvalidTemperature { row, .. }
        | ModelError::InvalidFrequency { row, .. } => Some(*row),
        _ => None,
    };
    match row {
        Some(row) => {
            let text = e.to_string();
            let message = text.split_once(": ").map_or(text.clone(), |(_, m)| m.to_string());
            IoError::Line {
                line: row as u64 + 1,
                message,
            }
        }
        None => IoError::Model(e),
    }
}

/// Parse a count or frequency CSV. The header decides which.
pub fn ingest_csv(input: impl Read, smoothing: Smoothing) -> Result<Ingested, IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(IoError::Empty),
        Some(h) => h.map_err(|e| csv_error(e, 1))?,
    };
    let fields: Vec<&str> = header.iter().collect();
    let kind = if fields == COUNT_HEADER {
        InputKind::Counts
    } else if fields == FREQUENCY_HEADER {
        InputKind::Frequencies
    } else {
        return Err(IoError::Header {
            found: fields.join(","),
        });
    };
    let mut counts = Vec::new();
    let mut freqs = Vec::new();
    for row in records {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            return Err(IoError::Line {
                line,
                message: format!("expected 4 fields, found {}", row.len()),
            });
        }
        let value = row[3].trim();
        match kind {
            InputKind::Counts => {
                let count = value.parse::<u64>().map_err(|_| IoError::Line {
                    line,
                    message: format!("count {value:?} is not a nonnegative integer"),
                })?;
                counts.push(CountRecord::new(&row[0], &row[1], &row[2], count));
            }
            InputKind::Frequencies => {
                let frequency = value.parse::<f64>().map_err(|_| IoError::Line {
                    line,
                    message: format!("frequency {value:?} is not a number"),
                })?;
                freqs.push(FrequencyRecord {
                    temperature: row[0].to_string(),
                    menu_id: row[1].to_string(),
                    state: row[2].to_string(),
                    frequency,
                });
            }
        }
    }
    let (rsf, rows) = match kind {
        InputKind::Counts => (EmpiricalRsf::from_counts(&counts, smoothing).map_err(with_line)?, counts.len()),
        InputKind::Frequencies => (EmpiricalRsf::from_frequencies(&freqs).map_err(with_line)?, freqs.len()),
    };
    Ok(Ingested { rsf, kind, rows })
}

fn csv_error(e: csv::Error, fallback: u64) -> IoError {
    let line = e.position().map_or(fallback, |p| p.line());
    IoError::Line {
        line,
        message: e.to_string(),
    }
}

pub fn write_counts(out: impl Write, records: &[CountRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COUNT_HEADER).map_err(csv_io)?;
    for r in records {
        w.write_record([r.temperature.as_str(), &r.menu_id, &r.state, &r.count.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_frequencies(out: impl Write, records: &[FrequencyRecord]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FREQUENCY_HEADER).map_err(csv_io)?;
    for r in records {
        // `{:?}` keeps the shortest round-tripping representation
        w.write_record([r.temperature.as_str(), &r.menu_id, &r.state, &format!("{:?}", r.frequency)])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> IoError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => IoError::Io(e),
        other => IoError::Report(format!("{other:?}")),
    }
}

/// Model description read by the convexity command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityInput {
    #[serde(flatten)]
    pub model: ConvexModel,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub kind: Option<InputKind>,
    pub rows: usize,
    pub temperatures: Vec<String>,
    pub menus: usize,
    pub states: usize,
}

impl InputEcho {
    pub fn of(ingested: &Ingested) -> Self {
        Self {
            kind: Some(ingested.kind),
            rows: ingested.rows,
            temperatures: ingested.rsf.temperatures().iter().map(|t| t.label.clone()).collect(),
            menus: ingested.rsf.menus().len(),
            states: ingested.rsf.states().len(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub tolerances: Option<ToleranceConfig>,
    pub smoothing: Option<Smoothing>,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    pub input: Option<InputEcho>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBlock {
    pub result: Option<Recovery>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityBlock {
    pub model: ConvexModel,
    pub sampler: SamplerConfig,
    pub verdict: ConvexityVerdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Recover,
    Convexity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub version: String,
    pub command: Command,
    pub config: ConfigEcho,
    /// Check: the family is Boltzmannian. Recover: recovery succeeded.
    /// Convexity: the sampled inequalities all hold.
    pub overall: bool,
    pub axioms: Option<AxiomReport>,
    pub recovery: Option<RecoveryBlock>,
    pub convexity: Option<ConvexityBlock>,
}

impl ReportDocument {
    pub fn new(command: Command, config: ConfigEcho) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config,
            overall: false,
            axioms: None,
            recovery: None,
            convexity: None,
        }
    }

    pub fn with_axioms(mut self, report: AxiomReport) -> Self {
        self.overall = report.boltzmannian;
        self.axioms = Some(report);
        self
    }

    pub fn with_recovery(mut self, block: RecoveryBlock) -> Self {
        self.overall = block.result.is_some();
        self.recovery = Some(block);
        self
    }

    pub fn with_convexity(mut self, block: ConvexityBlock) -> Self {
        self.overall = block.verdict.convex;
        self.convexity = Some(block);
        self
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.schema != SCHEMA {
            return Err(IoError::Report(format!("schema {:?}, expected {SCHEMA:?}", self.schema)));
        }
        if self.version.is_empty() {
            return Err(IoError::Report("missing version".into()));
        }
        if let Some(axioms) = &self.axioms {
            if let Some(o) = axioms
                .outcomes
                .iter()
                .find(|o| o.verdict == Verdict::Fail && o.witness.is_none())
            {
                return Err(IoError::Report(format!("{} fails without a witness", o.axiom.label())));
            }
        }
        if let Some(c) = &self.convexity {
            if !c.verdict.convex && c.verdict.witness.is_none() {
                return Err(IoError::Report("convexity fails without a witness".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Markdown,
}

pub fn emit_report(doc: &ReportDocument, format: Format) -> Result<String, IoError> {
    doc.validate()?;
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(doc)?;
            s.push('\n');
            Ok(s)
        }
        Format::Markdown => Ok(render_markdown(doc)),
    }
}

pub fn parse_report(text: &str) -> Result<ReportDocument, IoError> {
    let doc: ReportDocument = serde_json::from_str(text)?;
    doc.validate()?;
    Ok(doc)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "FAIL",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn yes_no(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "yes",
        Some(false) => "no",
        None => "undecided",
    }
}

pub fn render_markdown(doc: &ReportDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# boltzmann-gate report ({:?})\n", doc.command);
    let _ = writeln!(s, "- schema: `{}`, version {}", doc.schema, doc.version);
    let _ = writeln!(s, "- overall: **{}**", if doc.overall { "pass" } else { "fail" });
    if let Some(t) = &doc.config.tolerances {
        let _ = writeln!(s, "- alpha {}, sum tolerance {:e}, min samples {}", t.alpha, t.sum_tol, t.min_samples);
    }
    if let Some(sm) = doc.config.smoothing {
        let _ = writeln!(s, "- smoothing: {sm:?}");
    }
    if let Some(seed) = doc.config.seed {
        let _ = writeln!(s, "- seed: {seed}");
    }
    if let Some(rng) = &doc.config.rng {
        let _ = writeln!(s, "- rng: {rng}");
    }
    if let Some(i) = &doc.config.input {
        let _ = writeln!(
            s,
            "- input: {} rows, {} menus, {} states, temperatures {}",
            i.rows,
            i.menus,
            i.states,
            i.temperatures.join(", ")
        );
    }

    if let Some(a) = &doc.axioms {
        let _ = writeln!(s, "\n## Axioms\n");
        let _ = writeln!(s, "| axiom | verdict | statistic | threshold | tests | witness |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for o in &a.outcomes {
            let witness = o
                .witness
                .as_ref()
                .and_then(|w| serde_json::to_string(w).ok())
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                o.axiom.label(),
                verdict_word(o.verdict),
                opt(o.statistic),
                opt(o.threshold),
                o.tests,
                witness.replace('|', "\\|")
            );
        }
        let notes: Vec<_> = a.outcomes.iter().filter_map(|o| o.note.as_ref().map(|n| (o.axiom, n))).collect();
        if !notes.is_empty() {
            let _ = writeln!(s);
            for (ax, n) in notes {
                let _ = writeln!(s, "- {}: {n}", ax.label());
            }
        }
        let _ = writeln!(s, "\nBoltzmannian: **{}**", if a.boltzmannian { "yes" } else { "no" });
        let e = &a.equivalence;
        let _ = writeln!(
            s,
            "\nConsistency with weak boundedness: {}; monotonicity with concatenation: {}; agree: {}",
            yes_no(e.consistency_and_weak_boundedness),
            yes_no(e.monotonicity_and_concatenation),
            yes_no(e.agree)
        );
        if !a.freezing.is_empty() {
            let _ = writeln!(s, "\n### Freezing limits\n");
            let _ = writeln!(s, "| a | b | trend | p0 |");
            let _ = writeln!(s, "|---|---|---|---|");
            for f in &a.freezing {
                let class = f.class.map_or_else(|| "-".to_string(), |c| format!("{c:?}"));
                let _ = writeln!(s, "| {} | {} | {} | {} |", f.a, f.b, class, opt(f.p0));
            }
        }
    }

    if let Some(r) = &doc.recovery {
        let _ = writeln!(s, "\n## Recovery\n");
        if let Some(e) = &r.error {
            let _ = writeln!(s, "Recovery failed: {e}");
        }
        if let Some(rec) = &r.result {
            if let Some(p) = &rec.pivot {
                let _ = writeln!(
                    s,
                    "Pivot: temperature {}, states {} and {}, log-odds {:.6} (se {:.2e})\n",
                    p.label, p.c, p.d, p.log_odds, p.stderr
                );
            }
            if rec.uniform {
                let _ = writeln!(s, "Uniform family: energy constant.\n");
            }
            if rec.kappa_undetermined {
                let _ = writeln!(s, "Noise map undetermined.\n");
            }
            let _ = writeln!(s, "| state | energy | se |");
            let _ = writeln!(s, "|---|---|---|");
            for (state, e) in &rec.energies.energies {
                let se = rec.energies.stderr.get(state).copied();
                let _ = writeln!(s, "| {state} | {e:.6} | {} |", opt(se));
            }
            if !rec.energies.unrecoverable.is_empty() {
                let _ = writeln!(s, "\nUnrecoverable: {}", rec.energies.unrecoverable.join(", "));
            }
            if let Some(k) = &rec.kappa {
                let _ = writeln!(s, "\n| temperature | noise | se |");
                let _ = writeln!(s, "|---|---|---|");
                for p in &k.points {
                    let _ = writeln!(s, "| {} | {:.6} | {:.2e} |", p.label, p.kappa, p.stderr);
                }
                if !k.monotone {
                    let _ = writeln!(s, "\nRecovered noise map is not increasing; isotonic fit reported.");
                }
            }
            if let Some(g) = &rec.generator {
                let _ = writeln!(s, "\nConcatenation generator: `{}`", serde_json::to_string(g).unwrap_or_default());
            }
        }
    }

    if let Some(c) = &doc.convexity {
        let v = &c.verdict;
        let _ = writeln!(s, "\n## Convexity\n");
        let _ = writeln!(s, "- triples sampled: {}", v.triples);
        let _ = writeln!(s, "- mixture inequality: {}", if v.convex { "holds" } else { "violated" });
        let _ = writeln!(s, "- direct energy check: {}", if v.oracle_convex { "convex" } else { "not convex" });
        let _ = writeln!(s, "- agree: {}", v.agree);
        let _ = writeln!(s, "- same answer at doubled temperature: {}", v.temperature_invariant);
        let _ = writeln!(s, "- menu shrink inequality: {}", if v.shrink_holds { "holds" } else { "violated" });
        if let Some(w) = &v.witness {
            let _ = writeln!(
                s,
                "- witness: a = {:?}, b = {:?}, alpha = {:.4}: {:.6} < {:.6}",
                w.a, w.b, w.alpha, w.lhs, w.rhs
            );
        }
    }
    s
}
