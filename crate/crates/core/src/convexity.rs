//! Convexity of the energy on a convex state space, tested through choice
//! probabilities.
//!
//! For a Boltzmann family the energy is convex exactly when mixing a state
//! toward another and cooling by the mixing weight never lowers its odds:
//! `p_{αt}(αa + (1−α)b, b) ≥ p_t(a, b)`. Equivalent forms shrink a whole
//! menu toward one of its states.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::EmpiricalRsf;
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvexityError {
    #[error("inapplicable: {0}")]
    Inapplicable(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum EnergyFunction {
    /// `xᵀ Q x + lᵀ x + c`
    Quadratic {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
    /// `sin(x₀)` on the real line.
    Sine,
}

impl EnergyFunction {
    pub fn dimension(&self) -> usize {
        match self {
            EnergyFunction::Quadratic { matrix, linear, .. } => matrix.len().max(linear.len()).max(1),
            EnergyFunction::Sine => 1,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ConvexityError> {
        let d = self.dimension();
        if x.len() != d {
            return Err(ConvexityError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        Ok(match self {
            EnergyFunction::Quadratic {
                matrix,
                linear,
                constant,
            } => {
                let quad: f64 = matrix
                    .iter()
                    .zip(x)
                    .map(|(row, xi)| xi * row.iter().zip(x).map(|(q, xj)| q * xj).sum::<f64>())
                    .sum();
                let lin: f64 = linear.iter().zip(x).map(|(l, xi)| l * xi).sum();
                quad + lin + constant
            }
            EnergyFunction::Sine => x[0].sin(),
        })
    }

    /// Multiply the energy by `m`.
    pub fn scaled(&self, m: f64) -> Self {
        match self {
            EnergyFunction::Quadratic {
                matrix,
                linear,
                constant,
            } => EnergyFunction::Quadratic {
                matrix: matrix.iter().map(|r| r.iter().map(|q| q * m).collect()).collect(),
                linear: linear.iter().map(|l| l * m).collect(),
                constant: constant * m,
            },
            EnergyFunction::Sine if m == 1.0 => EnergyFunction::Sine,
            EnergyFunction::Sine => panic!("sine energy has no scaled closed form"),
        }
    }
}

/// Axis-aligned box the sampler draws states from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn cube(d: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; d],
            upper: vec![hi; d],
        }
    }

    fn draw(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..u) } else { l })
            .collect()
    }
}

/// Boltzmann model over a continuum of states with coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexModel {
    pub energy: EnergyFunction,
    pub k: f64,
    pub domain: Domain,
}

/// `ln p` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogProbe {
    pub value: f64,
    pub stderr: f64,
}

/// A family whose menus may contain arbitrary mixtures of states.
pub trait MixtureFamily {
    /// `ln p_t(a | menu)`.
    fn log_prob(&self, t: f64, a: &[f64], menu: &[Vec<f64>]) -> Result<LogProbe, ConvexityError>;

    /// Multiplier on the combined standard error allowed in comparisons.
    fn band(&self) -> f64 {
        0.0
    }
}

fn dedup_points(menu: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for x in menu {
        if !out.iter().any(|y| y == x) {
            out.push(x.clone());
        }
    }
    out
}

impl MixtureFamily for ConvexModel {
    fn log_prob(&self, t: f64, a: &[f64], menu: &[Vec<f64>]) -> Result<LogProbe, ConvexityError> {
        if !(t > 0.0) {
            return Err(ConvexityError::InvalidQuery(format!("temperature {t} is not positive")));
        }
        let menu = dedup_points(menu);
        if !menu.iter().any(|x| x == a) {
            return Ok(LogProbe {
                value: f64::NEG_INFINITY,
                stderr: 0.0,
            });
        }
        let kt = self.k * t;
        let logits = menu
            .iter()
            .map(|x| Ok(-self.energy.eval(x)? / kt))
            .collect::<Result<Vec<f64>, ConvexityError>>()?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(LogProbe {
            value: -self.energy.eval(a)? / kt - lse,
            stderr: 0.0,
        })
    }
}

/// Empirical data whose states carry coordinates. Mixture states must be
/// present in the data; nothing is interpolated.
pub struct EmpiricalMixture<'a> {
    pub rsf: &'a EmpiricalRsf,
    pub coords: BTreeMap<String, Vec<f64>>,
    /// Standard errors allowed in comparisons.
    pub band: f64,
}

const RESOLVE_TOL: f64 = 1e-9;

impl EmpiricalMixture<'_> {
    fn resolve(&self, x: &[f64]) -> Result<&str, ConvexityError> {
        self.coords
            .iter()
            .find(|(_, c)| c.len() == x.len() && c.iter().zip(x).all(|(p, q)| (p - q).abs() <= RESOLVE_TOL))
            .map(|(id, _)| id.as_str())
            .ok_or_else(|| ConvexityError::Inapplicable(format!("no observed state at {x:?}")))
    }
}

impl MixtureFamily for EmpiricalMixture<'_> {
    fn log_prob(&self, t: f64, a: &[f64], menu: &[Vec<f64>]) -> Result<LogProbe, ConvexityError> {
        let ids = menu
            .iter()
            .map(|x| self.resolve(x))
            .collect::<Result<std::collections::BTreeSet<&str>, _>>()?;
        let target = self.resolve(a)?;
        let mi = self
            .rsf
            .menus()
            .iter()
            .position(|m| m.members.len() == ids.len() && ids.iter().all(|s| m.contains(s)))
            .ok_or_else(|| ConvexityError::Inapplicable(format!("menu {ids:?} not observed")))?;
        let ti = self
            .rsf
            .temperature_index_near(t, RESOLVE_TOL)
            .ok_or_else(|| ConvexityError::Inapplicable(format!("temperature {t} not observed")))?;
        let group = self
            .rsf
            .group(ti, mi)
            .ok_or_else(|| ConvexityError::Inapplicable(format!("menu {ids:?} not observed at {t}")))?;
        let cell = &group.cells[target];
        if cell.freq <= 0.0 {
            return Err(ConvexityError::Inapplicable(format!("zero frequency for {target}")));
        }
        Ok(LogProbe {
            value: cell.freq.ln(),
            stderr: cell.stderr / cell.freq,
        })
    }

    fn band(&self) -> f64 {
        self.band
    }
}

/// Both sides of an inequality, in log space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityOutcome {
    pub holds: bool,
    /// Left and right sides as probabilities (or odds for the mixture check).
    pub lhs: f64,
    pub rhs: f64,
}

fn at_least(big: LogProbe, small: LogProbe, band: f64) -> bool {
    let tol = 1e-12 * big.value.abs().max(small.value.abs()).max(1.0) + band * big.stderr.hypot(small.stderr);
    big.value >= small.value - tol
}

fn mix(a: &[f64], b: &[f64], alpha: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect()
}

/// Binary log-odds of `x` against `y` at `t`.
fn binary_log_odds<F: MixtureFamily + ?Sized>(family: &F, t: f64, x: &[f64], y: &[f64]) -> Result<LogProbe, ConvexityError> {
    let menu = [x.to_vec(), y.to_vec()];
    let px = family.log_prob(t, x, &menu)?;
    let py = family.log_prob(t, y, &menu)?;
    Ok(LogProbe {
        value: px.value - py.value,
        stderr: px.stderr.hypot(py.stderr),
    })
}

/// `p_{αt}(αa + (1−α)b, b) ≥ p_t(a, b)`, compared as log-odds. The reported
/// sides are the two probabilities.
pub fn check_mixture_pair<F: MixtureFamily + ?Sized>(
    family: &F,
    t: f64,
    a: &[f64],
    b: &[f64],
    alpha: f64,
) -> Result<InequalityOutcome, ConvexityError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConvexityError::InvalidQuery(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if a.len() != b.len() {
        return Err(ConvexityError::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let m = mix(a, b, alpha);
    if a == b {
        // the binary menus collapse to a singleton on both sides
        return Ok(InequalityOutcome {
            holds: true,
            lhs: 1.0,
            rhs: 1.0,
        });
    }
    let left = binary_log_odds(family, alpha * t, &m, b)?;
    let right = binary_log_odds(family, t, a, b)?;
    Ok(InequalityOutcome {
        holds: at_least(left, right, family.band()),
        lhs: stats::logistic(left.value),
        rhs: stats::logistic(right.value),
    })
}

/// `p_s(b | A/η + (1 − 1/η) b) ≤ p_{ηs}(b | A)`.
pub fn check_menu_shrink<F: MixtureFamily + ?Sized>(
    family: &F,
    s: f64,
    menu: &[Vec<f64>],
    b: &[f64],
    eta: f64,
) -> Result<InequalityOutcome, ConvexityError> {
    if !(eta > 1.0) {
        return Err(ConvexityError::InvalidQuery(format!("eta = {eta} must exceed 1")));
    }
    if !menu.iter().any(|x| x == b) {
        return Err(ConvexityError::InvalidQuery("anchor is not in the menu".into()));
    }
    let shrunk: Vec<Vec<f64>> = menu.iter().map(|x| mix(x, b, 1.0 / eta)).collect();
    let left = family.log_prob(s, b, &shrunk)?;
    let right = family.log_prob(eta * s, b, menu)?;
    Ok(InequalityOutcome {
        holds: at_least(right, left, family.band()),
        lhs: left.value.exp(),
        rhs: right.value.exp(),
    })
}

/// The shrink inequality for every state of least probability at `ηs`.
pub fn check_argmin_shrink<F: MixtureFamily + ?Sized>(
    family: &F,
    s: f64,
    menu: &[Vec<f64>],
    eta: f64,
) -> Result<Vec<(Vec<f64>, InequalityOutcome)>, ConvexityError> {
    let menu = dedup_points(menu);
    if menu.len() == 1 {
        return Ok(vec![(
            menu[0].clone(),
            InequalityOutcome {
                holds: true,
                lhs: 1.0,
                rhs: 1.0,
            },
        )]);
    }
    let logs = menu
        .iter()
        .map(|x| family.log_prob(eta * s, x, &menu).map(|p| p.value))
        .collect::<Result<Vec<f64>, _>>()?;
    let min = logs.iter().copied().fold(f64::INFINITY, f64::min);
    menu.iter()
        .zip(&logs)
        .filter(|(_, &l)| l == min)
        .map(|(b, _)| check_menu_shrink(family, s, &menu, b, eta).map(|o| (b.clone(), o)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub triples: usize,
    pub menus: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            triples: 1000,
            menus: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureWitness {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityVerdict {
    /// All sampled mixture inequalities hold.
    pub convex: bool,
    /// The direct check `E(αa + (1−α)b) ≤ αE(a) + (1−α)E(b)` on the same triples.
    pub oracle_convex: bool,
    pub agree: bool,
    /// The mixture inequality gave the same answer at `t = 2` on every triple.
    pub temperature_invariant: bool,
    /// Menu-shrink inequalities hold on every sampled menu and anchor.
    pub shrink_holds: bool,
    pub triples: usize,
    pub witness: Option<MixtureWitness>,
    pub oracle_witness: Option<MixtureWitness>,
}

struct TripleResult {
    a: Vec<f64>,
    b: Vec<f64>,
    alpha: f64,
    at_one: InequalityOutcome,
    at_two: bool,
    oracle: bool,
    lhs_energy: f64,
    rhs_energy: f64,
}

fn midpoint_oracle(energy: &EnergyFunction, a: &[f64], b: &[f64], alpha: f64) -> Result<(bool, f64, f64), ConvexityError> {
    let ea = energy.eval(a)?;
    let eb = energy.eval(b)?;
    let lhs = energy.eval(&mix(a, b, alpha))? - eb;
    let rhs = alpha * (ea - eb);
    let tol = 1e-12 * ea.abs().max(eb.abs()).max(1.0);
    Ok((lhs <= rhs + tol, lhs + eb, rhs + eb))
}

/// Sample triples `(a, b, α)` and menus from the model's domain and decide
/// convexity from the mixture inequality at `t = 1`.
pub fn convexity_verdict(model: &ConvexModel, cfg: &SamplerConfig) -> Result<ConvexityVerdict, ConvexityError> {
    let d = model.energy.dimension();
    if model.domain.lower.len() != d || model.domain.upper.len() != d {
        return Err(ConvexityError::Dimension {
            expected: d,
            got: model.domain.lower.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let draws: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..cfg.triples)
        .map(|_| {
            let a = model.domain.draw(&mut rng);
            let b = model.domain.draw(&mut rng);
            let alpha = rng.random_range(f64::EPSILON..1.0);
            (a, b, alpha)
        })
        .collect();
    let menus: Vec<(Vec<Vec<f64>>, f64)> = (0..cfg.menus)
        .map(|_| {
            let menu = (0..3).map(|_| model.domain.draw(&mut rng)).collect();
            (menu, rng.random_range(1.0..3.0) + 1e-6)
        })
        .collect();

    let results = draws
        .par_iter()
        .map(|(a, b, alpha)| {
            let at_one = check_mixture_pair(model, 1.0, a, b, *alpha)?;
            let at_two = check_mixture_pair(model, 2.0, a, b, *alpha)?.holds;
            let (oracle, lhs_energy, rhs_energy) = midpoint_oracle(&model.energy, a, b, *alpha)?;
            Ok(TripleResult {
                a: a.clone(),
                b: b.clone(),
                alpha: *alpha,
                at_one,
                at_two,
                oracle,
                lhs_energy,
                rhs_energy,
            })
        })
        .collect::<Result<Vec<_>, ConvexityError>>()?;
    let shrink_holds = menus
        .par_iter()
        .map(|(menu, eta)| {
            menu.iter()
                .map(|b| check_menu_shrink(model, 1.0, menu, b, *eta).map(|o| o.holds))
                .collect::<Result<Vec<bool>, _>>()
                .map(|v| v.into_iter().all(|h| h))
        })
        .collect::<Result<Vec<bool>, _>>()?
        .into_iter()
        .all(|h| h);

    let witness = results.iter().find(|r| !r.at_one.holds).map(|r| MixtureWitness {
        a: r.a.clone(),
        b: r.b.clone(),
        alpha: r.alpha,
        lhs: r.at_one.lhs,
        rhs: r.at_one.rhs,
    });
    let oracle_witness = results.iter().find(|r| !r.oracle).map(|r| MixtureWitness {
        a: r.a.clone(),
        b: r.b.clone(),
        alpha: r.alpha,
        lhs: r.lhs_energy,
        rhs: r.rhs_energy,
    });
    let convex = witness.is_none();
    let oracle_convex = oracle_witness.is_none();
    Ok(ConvexityVerdict {
        convex,
        oracle_convex,
        agree: convex == oracle_convex,
        temperature_invariant: results.iter().all(|r| r.at_one.holds == r.at_two),
        shrink_holds,
        triples: results.len(),
        witness,
        oracle_witness,
    })
}
