//! Freezing limits and the axioms that constrain them: continuity,
//! consistency and zero uniformity.
//!
//! The limit `p₀(a, b)` as `t → 0⁺` is never evaluated directly. It is read
//! off the trend of `ln r_{1/β}(a, b)` for growing `β`: diverging means `a`
//! wins outright, vanishing means it loses, and a flat curve freezes at
//! `logistic(level)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{EmpiricalRsf, OddsCurve};
use crate::stats;
use crate::trend::{self, TrendClass};

use super::{binary_curves, Axiom, AxiomOutcome, ToleranceConfig, Tracker, Verdict, Witness};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezingEstimate {
    pub a: String,
    pub b: String,
    /// `None` when the pair has too few usable samples.
    pub class: Option<TrendClass>,
    /// Estimated `p₀(a, b)`; `None` when the trend is unclassified.
    pub p0: Option<f64>,
    /// Level of a flat curve and its z-score against zero.
    pub level: Option<f64>,
    pub level_z: Option<f64>,
    pub samples: usize,
}

fn estimate_from_curve(curve: &OddsCurve, cfg: &ToleranceConfig) -> FreezingEstimate {
    let fit = trend::classify(&curve.observations(), cfg.alpha);
    let level_z = fit.level / fit.level_se;
    let (p0, level) = match fit.class {
        TrendClass::Diverging => (Some(1.0), None),
        TrendClass::Vanishing => (Some(0.0), None),
        TrendClass::Flat if fit.level_is_zero(cfg.alpha) => (Some(0.5), Some(fit.level)),
        TrendClass::Flat => (Some(stats::logistic(fit.level)), Some(fit.level)),
        TrendClass::Unclassified => (None, None),
    };
    FreezingEstimate {
        a: curve.pair.0.clone(),
        b: curve.pair.1.clone(),
        class: Some(fit.class),
        p0,
        level: level.and_then(super::finite),
        level_z: level.and(super::finite(level_z)),
        samples: curve.samples.len(),
    }
}

/// Estimate `p₀(a, b)` from the binary odds curve of `{a, b}`.
pub fn estimate_freezing_limit(rsf: &EmpiricalRsf, a: &str, b: &str, cfg: &ToleranceConfig) -> FreezingEstimate {
    match rsf.odds_curve(a, b, cfg) {
        Ok(curve) => estimate_from_curve(&curve, cfg),
        Err(_) => FreezingEstimate {
            a: a.to_string(),
            b: b.to_string(),
            class: None,
            p0: None,
            level: None,
            level_z: None,
            samples: 0,
        },
    }
}

pub(super) fn estimate_all(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> Vec<FreezingEstimate> {
    rsf.binary_pairs()
        .iter()
        .map(|(a, b)| estimate_freezing_limit(rsf, a, b, cfg))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Succ,
    Sim,
    Prec,
    Unknown,
}

impl Relation {
    fn flip(self) -> Self {
        match self {
            Relation::Succ => Relation::Prec,
            Relation::Prec => Relation::Succ,
            r => r,
        }
    }
}

/// The order revealed by freezing limits: `a ≻ b` iff `p₀(a, b) = 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RevealedOrder {
    pub relations: BTreeMap<String, BTreeMap<String, Relation>>,
}

impl RevealedOrder {
    pub fn get(&self, a: &str, b: &str) -> Option<Relation> {
        self.relations.get(a)?.get(b).copied()
    }
}

pub(super) fn order_from(estimates: &[FreezingEstimate]) -> RevealedOrder {
    let mut order = RevealedOrder::default();
    for e in estimates {
        let rel = match e.p0 {
            Some(1.0) => Relation::Succ,
            Some(0.0) => Relation::Prec,
            Some(0.5) => Relation::Sim,
            _ => Relation::Unknown,
        };
        order.relations.entry(e.a.clone()).or_default().insert(e.b.clone(), rel);
        order.relations.entry(e.b.clone()).or_default().insert(e.a.clone(), rel.flip());
    }
    order
}

pub fn revealed_order(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> RevealedOrder {
    order_from(&estimate_all(rsf, cfg))
}

/// Excess of the middle log-odds beyond the band spanned by its neighbors,
/// standardized by the combined standard error. Negative when it lies within.
fn spike_z(curve: &OddsCurve, i: usize) -> f64 {
    let (l, m, r) = (&curve.samples[i], &curve.samples[i + 1], &curve.samples[i + 2]);
    let (lo, hi) = if l.log_odds <= r.log_odds { (l, r) } else { (r, l) };
    let above = (m.log_odds - hi.log_odds) / m.stderr.hypot(hi.stderr);
    let below = (lo.log_odds - m.log_odds) / m.stderr.hypot(lo.stderr);
    above.max(below)
}

/// Continuity heuristic. A finite grid cannot show continuity; this checks
/// that no log-odds value jumps outside the band of its two neighbors and
/// that every freezing limit could be classified.
pub fn check_continuity(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    continuity_with(rsf, cfg, &estimate_all(rsf, cfg))
}

pub(super) fn continuity_with(rsf: &EmpiricalRsf, cfg: &ToleranceConfig, estimates: &[FreezingEstimate]) -> AxiomOutcome {
    let (curves, _) = binary_curves(rsf, cfg);
    let triples: usize = curves.iter().map(|c| c.samples.len().saturating_sub(2)).sum();
    let crit = stats::z_one_sided(cfg.alpha, triples);
    let mut tracker = Tracker::new();
    for curve in &curves {
        for i in 0..curve.samples.len().saturating_sub(2) {
            let z = spike_z(curve, i);
            tracker.observe(z, || Witness::Spike {
                a: curve.pair.0.clone(),
                b: curve.pair.1.clone(),
                temperatures: [0, 1, 2].map(|k| curve.samples[i + k].label.clone()),
                z,
            });
        }
    }
    let mut out = tracker.finish(Axiom::Continuity, crit);
    if out.verdict == Verdict::Fail {
        return out.note("heuristic: log-odds jump between adjacent temperatures");
    }
    let undetermined: Vec<String> = estimates
        .iter()
        .filter(|e| e.p0.is_none())
        .map(|e| format!("({}, {})", e.a, e.b))
        .collect();
    if estimates.is_empty() || !undetermined.is_empty() {
        out.verdict = Verdict::Inconclusive;
        return out.note(format!(
            "heuristic: freezing limit undetermined for {}",
            if undetermined.is_empty() { "all pairs".to_string() } else { undetermined.join(", ") }
        ));
    }
    out.note("heuristic: grid smoothness and classified freezing limits")
}

/// A significant preference at any temperature must agree with the
/// freezing limit.
pub fn check_consistency(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    consistency_with(rsf, cfg, &estimate_all(rsf, cfg))
}

pub(super) fn consistency_with(rsf: &EmpiricalRsf, cfg: &ToleranceConfig, estimates: &[FreezingEstimate]) -> AxiomOutcome {
    let (curves, _) = binary_curves(rsf, cfg);
    let tests: usize = curves.iter().map(|c| c.samples.len()).sum();
    let crit = stats::z_two_sided(cfg.alpha, tests);
    let mut worst: Option<Witness> = None;
    let mut undetermined = false;
    for curve in &curves {
        let estimate = estimates
            .iter()
            .find(|e| (e.a.as_str(), e.b.as_str()) == (curve.pair.0.as_str(), curve.pair.1.as_str()));
        let p0 = estimate.and_then(|e| e.p0);
        for s in &curve.samples {
            let z = s.log_odds / s.stderr;
            if z.abs() <= crit {
                continue;
            }
            let Some(p0) = p0 else {
                undetermined = true;
                continue;
            };
            // orient so that the significant preference is for the first state
            let (a, b, z, p0) = if z > 0.0 {
                (&curve.pair.0, &curve.pair.1, z, p0)
            } else {
                (&curve.pair.1, &curve.pair.0, -z, 1.0 - p0)
            };
            if p0 <= 0.5 && worst.as_ref().is_none_or(|w| z > w.value()) {
                worst = Some(Witness::Preference {
                    a: a.clone(),
                    b: b.clone(),
                    temperature: s.label.clone(),
                    z,
                    p0: Some(p0),
                });
            }
        }
    }
    let mut out = AxiomOutcome::new(Axiom::Consistency, Verdict::Pass);
    out.tests = tests;
    out.threshold = super::finite(crit);
    if let Some(w) = worst {
        out.verdict = Verdict::Fail;
        out.statistic = Some(w.value());
        out.witness = Some(w);
    } else if curves.is_empty() {
        out.verdict = Verdict::Inconclusive;
    } else if undetermined {
        out.verdict = Verdict::Inconclusive;
        out = out.note("significant preference on a pair with an unclassified freezing limit");
    }
    out
}

/// Flat freezing trends must sit at zero log-odds, i.e. `p₀ = ½`.
pub fn check_zero_uniformity(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    zero_uniformity_with(cfg, &estimate_all(rsf, cfg))
}

pub(super) fn zero_uniformity_with(cfg: &ToleranceConfig, estimates: &[FreezingEstimate]) -> AxiomOutcome {
    if estimates.is_empty() {
        return AxiomOutcome::new(Axiom::ZeroUniformity, Verdict::Inconclusive).note("no binary menus observed");
    }
    let flat: Vec<&FreezingEstimate> = estimates
        .iter()
        .filter(|e| e.class == Some(TrendClass::Flat))
        .collect();
    if flat.is_empty() {
        return AxiomOutcome::new(Axiom::ZeroUniformity, Verdict::Pass).note("no interior freezing limits");
    }
    let crit = stats::z_two_sided(cfg.alpha, flat.len());
    let mut tracker = Tracker::new();
    for e in flat {
        let z = e.level_z.map_or(0.0, f64::abs);
        tracker.observe(z, || Witness::FreezingLevel {
            a: e.a.clone(),
            b: e.b.clone(),
            z,
            p0: e.p0.unwrap_or(0.5),
        });
    }
    tracker.finish(Axiom::ZeroUniformity, crit)
}

pub(super) fn reevaluate(rsf: &EmpiricalRsf, witness: &Witness) -> Option<f64> {
    let cfg = ToleranceConfig::default();
    match witness {
        Witness::Spike {
            a, b, temperatures, ..
        } => {
            let curve = rsf.odds_curve(a, b, &cfg).ok()?;
            let i = curve.samples.iter().position(|s| s.label == temperatures[0])?;
            (curve.samples.get(i + 2)?.label == temperatures[2]).then(|| spike_z(&curve, i))
        }
        Witness::Preference { a, b, temperature, .. } => {
            let ti = rsf.temperatures().iter().position(|t| &t.label == temperature)?;
            let lo = rsf.log_odds(ti, a, b)?;
            Some(lo.value / lo.stderr)
        }
        Witness::FreezingLevel { a, b, .. } => {
            let curve = rsf.odds_curve(a, b, &cfg).ok()?;
            let fit = trend::classify(&curve.observations(), cfg.alpha);
            Some((fit.level / fit.level_se).abs())
        }
        _ => None,
    }
}
