//! Synthetic families: exact tables and seeded multinomial samples from
//! representable models and from targeted counterexamples.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boltzmann::{EnergyModel, EvalError, NoiseMap};
use crate::concat::ConcatGenerator;
use crate::model::{CountRecord, EmpiricalRsf, FrequencyRecord, Menu, ModelError, TemperatureGrid};
use crate::stats;

/// Name of the sampling generator, echoed in reports.
pub const RNG_NAME: &str = "chacha20 (rand_chacha), per-cell seed = splitmix64(seed + splitmix64(cell index))";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{kind} families support binary menus only; menu {menu} has {size} states")]
    BinaryOnly { kind: &'static str, menu: String, size: usize },
    #[error("exact families carry no counts; use the frequency export")]
    NoCounts,
    #[error("n = 0 requests an exact family")]
    ZeroSamples,
    #[error("state {0} is not part of the family")]
    UnknownState(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Softmax over the model's energies and noise map; Boltzmann when the
    /// noise map is parametric.
    Softmax(EnergyModel),
    Uniform { states: Vec<String> },
    /// Binary menus only: `p_t(a, b) = Φ((E(b) − E(a))/t)`.
    ProbitBinary { energies: BTreeMap<String, f64> },
    /// Binary menus only: `ln r_t(x, y) = c0 − c1/t` for every pair `x < y`.
    CrossingLogOdds { states: Vec<String>, c0: f64, c1: f64 },
    /// Boltzmann with `k t` on larger menus but `factor · k t` on binary ones.
    ScaledConditioningBreaker {
        energies: BTreeMap<String, f64>,
        k: f64,
        factor: f64,
    },
}

impl FamilyKind {
    pub const PRESETS: [&'static str; 6] = ["boltzmann", "softmax-square", "uniform", "probit", "crossing", "breaker"];

    /// Small named families over states `a`, `b`, `c` with energies 0, 1, 2.
    pub fn preset(name: &str) -> Option<Self> {
        let energies: BTreeMap<String, f64> = [("a", 0.0), ("b", 1.0), ("c", 2.0)]
            .into_iter()
            .map(|(s, e)| (s.to_string(), e))
            .collect();
        let states: Vec<String> = energies.keys().cloned().collect();
        Some(match name {
            "boltzmann" => FamilyKind::Softmax(EnergyModel::boltzmann(energies, 1.0)),
            "softmax-square" => FamilyKind::Softmax(EnergyModel {
                energies,
                noise: NoiseMap::Generator {
                    generator: ConcatGenerator::power(2.0).ok()?,
                },
            }),
            "uniform" => FamilyKind::Uniform { states },
            "probit" => FamilyKind::ProbitBinary { energies },
            "crossing" => FamilyKind::CrossingLogOdds { states, c0: 1.0, c1: 1.0 },
            "breaker" => FamilyKind::ScaledConditioningBreaker {
                energies,
                k: 1.0,
                factor: 2.0,
            },
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Softmax(m) if matches!(m.noise, NoiseMap::Parametric { .. }) => "boltzmann",
            FamilyKind::Softmax(_) => "softmax",
            FamilyKind::Uniform { .. } => "uniform",
            FamilyKind::ProbitBinary { .. } => "probit_binary",
            FamilyKind::CrossingLogOdds { .. } => "crossing_log_odds",
            FamilyKind::ScaledConditioningBreaker { .. } => "scaled_conditioning_breaker",
        }
    }

    pub fn states(&self) -> Vec<String> {
        match self {
            FamilyKind::Softmax(m) => m.energies.keys().cloned().collect(),
            FamilyKind::ProbitBinary { energies } | FamilyKind::ScaledConditioningBreaker { energies, .. } => {
                energies.keys().cloned().collect()
            }
            FamilyKind::Uniform { states } | FamilyKind::CrossingLogOdds { states, .. } => {
                let mut s = states.clone();
                s.sort();
                s.dedup();
                s
            }
        }
    }

    fn binary_only(&self) -> bool {
        matches!(self, FamilyKind::ProbitBinary { .. } | FamilyKind::CrossingLogOdds { .. })
    }

    /// Closed-form probabilities on `menu` at temperature `t`, in member order.
    pub fn probabilities(&self, t: f64, menu: &Menu) -> Result<Vec<(String, f64)>, SynthError> {
        let members = menu.member_vec();
        let states = self.states();
        if let Some(s) = members.iter().find(|s| !states.iter().any(|x| x == *s)) {
            return Err(SynthError::UnknownState(s.to_string()));
        }
        if members.len() == 1 {
            return Ok(vec![(members[0].to_string(), 1.0)]);
        }
        if self.binary_only() && members.len() > 2 {
            return Err(SynthError::BinaryOnly {
                kind: self.name(),
                menu: menu.id.clone(),
                size: members.len(),
            });
        }
        let owned = |ps: Vec<(&str, f64)>| ps.into_iter().map(|(s, p)| (s.to_string(), p)).collect();
        Ok(match self {
            FamilyKind::Softmax(model) => owned(model.menu_probs(t, &members)?),
            FamilyKind::Uniform { .. } => {
                let p = 1.0 / members.len() as f64;
                members.iter().map(|s| (s.to_string(), p)).collect()
            }
            FamilyKind::ProbitBinary { energies } => {
                let x = (energies[members[1]] - energies[members[0]]) / t;
                owned(vec![(members[0], stats::normal_cdf(x)), (members[1], stats::normal_cdf(-x))])
            }
            FamilyKind::CrossingLogOdds { c0, c1, .. } => {
                let l = c0 - c1 / t;
                owned(vec![(members[0], stats::logistic(l)), (members[1], stats::logistic(-l))])
            }
            FamilyKind::ScaledConditioningBreaker { energies, k, factor } => {
                let scale = if members.len() == 2 { factor * k } else { *k };
                let model = EnergyModel::boltzmann(energies.clone(), scale);
                owned(model.menu_probs(t, &members)?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub grid: TemperatureGrid,
    pub menus: Vec<Menu>,
    /// Draws per `(t, menu)` cell; `0` requests the exact family.
    pub n: u64,
    pub seed: u64,
}

/// Every pair of states, plus the full menu when the kind allows it.
pub fn default_menus(kind: &FamilyKind) -> Vec<Menu> {
    let states = kind.states();
    let mut menus = Vec::new();
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            menus.push(Menu::new(format!("{a}_{b}"), [a.clone(), b.clone()]));
        }
    }
    if states.len() > 2 && !kind.binary_only() {
        menus.push(Menu::new(states.join("_"), states.clone()));
    }
    menus
}

impl FamilySpec {
    /// Exact family on `temperatures` with the default menus.
    pub fn new(kind: FamilyKind, temperatures: &[f64]) -> Result<Self, SynthError> {
        Ok(Self {
            menus: default_menus(&kind),
            grid: TemperatureGrid::from_values(temperatures)?,
            kind,
            n: 0,
            seed: 0,
        })
    }

    pub fn sampled(mut self, n: u64, seed: u64) -> Self {
        self.n = n;
        self.seed = seed;
        self
    }
}

/// Exact frequencies with the standard-error floor.
pub fn exact_family(spec: &FamilySpec) -> Result<EmpiricalRsf, SynthError> {
    let mut records = Vec::new();
    for t in spec.grid.points() {
        for menu in &spec.menus {
            for (state, p) in spec.kind.probabilities(t.value, menu)? {
                records.push(FrequencyRecord {
                    temperature: t.label.clone(),
                    menu_id: menu.id.clone(),
                    state,
                    frequency: p,
                });
            }
        }
    }
    Ok(EmpiricalRsf::from_frequencies(&records)?)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub(crate) fn cell_seed(seed: u64, cell: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(cell)))
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial(rng: &mut ChaCha20Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            out.push(left);
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if left == 0 || q == 0.0 {
            0
        } else {
            Binomial::new(left, q).expect("probability in [0, 1]").sample(rng)
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

/// Seeded multinomial counts for every `(t, menu)` cell.
///
/// Cells are sampled in parallel, each from its own generator seeded by the
/// cell index, and merged in grid order, so the result depends only on `spec`.
pub fn sample_family(spec: &FamilySpec) -> Result<EmpiricalRsf, SynthError> {
    if spec.n == 0 {
        return Err(SynthError::ZeroSamples);
    }
    let cells: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|ti| (0..spec.menus.len()).map(move |mi| (ti, mi)))
        .collect();
    let sampled = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(ti, mi))| {
            let t = &spec.grid.points()[ti];
            let menu = &spec.menus[mi];
            let probs = spec.kind.probabilities(t.value, menu)?;
            let mut rng = ChaCha20Rng::seed_from_u64(cell_seed(spec.seed, idx as u64));
            let p: Vec<f64> = probs.iter().map(|x| x.1).collect();
            let counts = multinomial(&mut rng, spec.n, &p);
            Ok(probs
                .into_iter()
                .zip(counts)
                .map(|((state, _), count)| CountRecord {
                    temperature: t.label.clone(),
                    menu_id: menu.id.clone(),
                    state,
                    count,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    let records: Vec<CountRecord> = sampled.into_iter().flatten().collect();
    Ok(build(&records)?)
}

fn build(records: &[CountRecord]) -> Result<EmpiricalRsf, ModelError> {
    crate::model::build_empirical_rsf(records)
}

/// Exact family when `n = 0`, sampled otherwise.
pub fn generate(spec: &FamilySpec) -> Result<EmpiricalRsf, SynthError> {
    if spec.n == 0 {
        exact_family(spec)
    } else {
        sample_family(spec)
    }
}

/// Count records of a count-backed family, in `(t, menu, state)` order.
pub fn emit_records(rsf: &EmpiricalRsf) -> Result<Vec<CountRecord>, SynthError> {
    rsf.count_records().ok_or(SynthError::NoCounts)
}
