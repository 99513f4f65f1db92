//! Statistical checkers for the nine axioms over an empirical random state
//! function.
//!
//! Each checker returns an [`AxiomOutcome`]: a verdict, the statistic that
//! decided it, the critical value it was compared with, and, for failures, a
//! [`Witness`] from which the statistic can be recomputed by [`reevaluate`].

mod freezing;
mod odds;
mod structural;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concat::ConcatGenerator;
use crate::model::{EmpiricalRsf, OddsCurve};
use crate::recovery::Pivot;

pub use freezing::{
    check_consistency, check_continuity, check_zero_uniformity, estimate_freezing_limit, revealed_order,
    FreezingEstimate, Relation, RevealedOrder,
};
pub use odds::{
    check_boundedness, check_concatenation_axiom, check_monotonicity, check_weak_boundedness,
    check_weak_boundedness_recovered,
};
pub use structural::{check_conditioning, check_positivity};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub alpha: f64,
    pub sum_tol: f64,
    pub min_samples: usize,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            sum_tol: 1e-9,
            min_samples: 3,
        }
    }
}

impl ToleranceConfig {
    pub fn with_alpha(alpha: f64) -> Result<Self, String> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(format!("alpha = {alpha} must lie in (0, 1)"));
        }
        Ok(Self {
            alpha,
            ..Self::default()
        })
    }

    fn split(&self, parts: usize) -> Self {
        Self {
            alpha: self.alpha / parts as f64,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Positivity,
    Conditioning,
    Continuity,
    Consistency,
    ZeroUniformity,
    Boundedness,
    WeakBoundedness,
    Monotonicity,
    Concatenation,
}

impl Axiom {
    pub const ALL: [Axiom; 9] = [
        Axiom::Positivity,
        Axiom::Conditioning,
        Axiom::Continuity,
        Axiom::Consistency,
        Axiom::ZeroUniformity,
        Axiom::Boundedness,
        Axiom::WeakBoundedness,
        Axiom::Monotonicity,
        Axiom::Concatenation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Axiom::Positivity => "positivity",
            Axiom::Conditioning => "conditioning",
            Axiom::Continuity => "continuity",
            Axiom::Consistency => "consistency",
            Axiom::ZeroUniformity => "zero uniformity",
            Axiom::Boundedness => "boundedness",
            Axiom::WeakBoundedness => "weak boundedness",
            Axiom::Monotonicity => "monotonicity",
            Axiom::Concatenation => "concatenation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// The tuple that triggered a failure, with the statistic it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// An in-menu cell with zero frequency.
    Cell {
        temperature: String,
        menu: String,
        state: String,
        frequency: f64,
    },
    /// A menu whose frequencies do not sum to one; the value is `|Σ − 1|`.
    MenuSum {
        temperature: String,
        menu: String,
        deviation: f64,
    },
    /// `p(b|A) ≠ p(b|B)·p(B|A)` for `B ⊂ A`.
    Nesting {
        temperature: String,
        subset: String,
        menu: String,
        state: String,
        z: f64,
    },
    /// The middle of three adjacent log-odds lies outside its neighbors.
    Spike {
        a: String,
        b: String,
        temperatures: [String; 3],
        z: f64,
    },
    /// Significant `r_t(a, b) > 1` while `a` does not win the freezing limit.
    Preference {
        a: String,
        b: String,
        temperature: String,
        z: f64,
        p0: Option<f64>,
    },
    /// A flat curve whose level differs from zero.
    FreezingLevel { a: String, b: String, z: f64, p0: f64 },
    /// Zero-intercept regression of log-odds on a regressor.
    LackOfFit {
        a: String,
        b: String,
        regressor: Vec<(String, f64)>,
        coefficient: f64,
        chi2: f64,
        df: usize,
    },
    /// `r_t > 1` but `r_s ≤ r_t` for some `s < t`; `z` measures `ln r_t − ln r_s`.
    OddsOrder {
        a: String,
        b: String,
        earlier: String,
        later: String,
        z: f64,
    },
    /// Log-odds moving away from zero between the two hottest temperatures.
    OddsLimit {
        a: String,
        b: String,
        previous: String,
        last: String,
        z: f64,
    },
    /// Two log-odds curves that are not proportional.
    Proportionality {
        pair: (String, String),
        reference: (String, String),
        coefficient: f64,
        chi2: f64,
        df: usize,
    },
    /// The recovered noise map changes sign at `temperature`.
    GeneratorSign {
        c: String,
        d: String,
        pivot: String,
        temperature: String,
        z: f64,
    },
    /// The recovered noise map decreases between `lower` and `upper`.
    GeneratorOrder {
        c: String,
        d: String,
        lower: String,
        upper: String,
        z: f64,
    },
}

impl Witness {
    /// The violating statistic carried by the witness.
    pub fn value(&self) -> f64 {
        match self {
            Witness::Cell { frequency, .. } => *frequency,
            Witness::MenuSum { deviation, .. } => *deviation,
            Witness::Nesting { z, .. }
            | Witness::Spike { z, .. }
            | Witness::Preference { z, .. }
            | Witness::FreezingLevel { z, .. }
            | Witness::OddsOrder { z, .. }
            | Witness::OddsLimit { z, .. }
            | Witness::GeneratorSign { z, .. }
            | Witness::GeneratorOrder { z, .. } => *z,
            Witness::LackOfFit { chi2, .. } | Witness::Proportionality { chi2, .. } => *chi2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomOutcome {
    pub axiom: Axiom,
    pub verdict: Verdict,
    /// Largest standardized deviation observed (orientation per axiom).
    pub statistic: Option<f64>,
    /// Critical value the statistic was compared with.
    pub threshold: Option<f64>,
    pub tests: usize,
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl AxiomOutcome {
    fn new(axiom: Axiom, verdict: Verdict) -> Self {
        Self {
            axiom,
            verdict,
            statistic: None,
            threshold: None,
            tests: 0,
            witness: None,
            note: None,
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

pub(crate) fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Running maximum of a statistic with the witness that produced it.
struct Tracker {
    best: f64,
    witness: Option<Witness>,
    tests: usize,
}

impl Tracker {
    fn new() -> Self {
        Self {
            best: f64::NEG_INFINITY,
            witness: None,
            tests: 0,
        }
    }

    fn observe(&mut self, stat: f64, witness: impl FnOnce() -> Witness) {
        self.tests += 1;
        if stat > self.best || self.witness.is_none() {
            self.best = stat;
            self.witness = Some(witness());
        }
    }

    /// Verdict by comparing the maximum with `threshold`.
    fn finish(self, axiom: Axiom, threshold: f64) -> AxiomOutcome {
        if self.tests == 0 {
            return AxiomOutcome::new(axiom, Verdict::Inconclusive);
        }
        let fail = self.best > threshold;
        AxiomOutcome {
            axiom,
            verdict: if fail { Verdict::Fail } else { Verdict::Pass },
            statistic: finite(self.best),
            threshold: finite(threshold),
            tests: self.tests,
            witness: if fail { self.witness } else { None },
            note: None,
        }
    }
}

/// Odds curves for every observed binary menu with enough usable samples,
/// and the pairs that fell short.
pub(crate) fn binary_curves(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> (Vec<OddsCurve>, Vec<(String, String)>) {
    let mut curves = Vec::new();
    let mut short = Vec::new();
    for (a, b) in rsf.binary_pairs() {
        match rsf.odds_curve(&a, &b, cfg) {
            Ok(c) => curves.push(c),
            Err(_) => short.push((a, b)),
        }
    }
    (curves, short)
}

/// Verdicts for the two equivalent axiom pairs, combined by conjunction:
/// `Some(false)` if either fails, `Some(true)` if both pass, else `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub consistency_and_weak_boundedness: Option<bool>,
    pub monotonicity_and_concatenation: Option<bool>,
    pub agree: Option<bool>,
}

pub fn conjunction(a: Verdict, b: Verdict) -> Option<bool> {
    match (a, b) {
        (Verdict::Fail, _) | (_, Verdict::Fail) => Some(false),
        (Verdict::Pass, Verdict::Pass) => Some(true),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub outcomes: Vec<AxiomOutcome>,
    /// True only if the first six axioms all pass.
    pub boltzmannian: bool,
    pub freezing: Vec<FreezingEstimate>,
    pub revealed_order: RevealedOrder,
    pub equivalence: EquivalenceCheck,
    /// Generator used for weak boundedness, when one was recovered.
    pub generator: Option<ConcatGenerator>,
    pub pivot: Option<Pivot>,
}

impl AxiomReport {
    pub fn outcome(&self, axiom: Axiom) -> &AxiomOutcome {
        self.outcomes
            .iter()
            .find(|o| o.axiom == axiom)
            .expect("every axiom is reported")
    }

    pub fn verdicts(&self) -> BTreeMap<Axiom, Verdict> {
        self.outcomes.iter().map(|o| (o.axiom, o.verdict)).collect()
    }
}

/// Run every checker.
///
/// The significance level is split evenly across the five statistical
/// checkers that decide the overall verdict, so the chance that a true
/// Boltzmann family is rejected stays below `cfg.alpha`. The remaining
/// checkers use `cfg.alpha` directly.
pub fn run_suite(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomReport {
    let gate = cfg.split(5);
    let freezing = freezing::estimate_all(rsf, &gate);
    let a1 = check_positivity(rsf, cfg);
    let a2 = check_conditioning(rsf, &gate);
    let a3 = freezing::continuity_with(rsf, &gate, &freezing);
    let a4 = freezing::consistency_with(rsf, &gate, &freezing);
    let a5 = freezing::zero_uniformity_with(&gate, &freezing);
    let a6 = check_boundedness(rsf, &gate);
    let (a7, generator, pivot) = check_weak_boundedness_recovered(rsf, cfg);
    let a8 = check_monotonicity(rsf, cfg);
    let a9 = check_concatenation_axiom(rsf, cfg);
    let outcomes = vec![a1, a2, a3, a4, a5, a6, a7, a8, a9];
    let boltzmannian = outcomes[..6].iter().all(AxiomOutcome::passed);
    let left = conjunction(outcomes[3].verdict, outcomes[6].verdict);
    let right = conjunction(outcomes[7].verdict, outcomes[8].verdict);
    AxiomReport {
        revealed_order: freezing::order_from(&freezing),
        freezing,
        boltzmannian,
        equivalence: EquivalenceCheck {
            consistency_and_weak_boundedness: left,
            monotonicity_and_concatenation: right,
            agree: left.zip(right).map(|(l, r)| l == r),
        },
        generator,
        pivot,
        outcomes,
    }
}

/// Recompute a witness's statistic from the data alone.
pub fn reevaluate(rsf: &EmpiricalRsf, witness: &Witness) -> Option<f64> {
    match witness {
        Witness::Cell { .. } | Witness::MenuSum { .. } | Witness::Nesting { .. } => structural::reevaluate(rsf, witness),
        Witness::Spike { .. } | Witness::Preference { .. } | Witness::FreezingLevel { .. } => {
            freezing::reevaluate(rsf, witness)
        }
        _ => odds::reevaluate(rsf, witness),
    }
}
