//! Exact Boltzmann and softmax evaluation.
//!
//! `p_t(a | A) = exp(−E(a)/κ(t)) / Σ_{b∈A} exp(−E(b)/κ(t))`, with `κ(t) = k t`
//! in the Boltzmann case.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concat::{loglog_interp, ConcatError, ConcatGenerator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("temperature {0} is not positive")]
    Domain(f64),
    #[error("state {0} has no energy")]
    MissingEnergy(String),
    #[error("empty menu")]
    EmptyMenu,
    #[error("temperature {t} outside the noise table [{lo}, {hi}]")]
    OutsideTable { t: f64, lo: f64, hi: f64 },
    #[error("invalid noise map: {0}")]
    InvalidNoise(String),
    #[error("the Boltzmann form needs a parametric noise map")]
    NotParametric,
    #[error(transparent)]
    Generator(#[from] ConcatError),
}

/// Noise values `κ(t)` at strictly increasing temperatures, strictly
/// increasing and positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct KappaTable {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for KappaTable {
    type Error = EvalError;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(points)
    }
}

impl From<KappaTable> for Vec<(f64, f64)> {
    fn from(t: KappaTable) -> Self {
        t.points
    }
}

impl KappaTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, EvalError> {
        if points.is_empty() {
            return Err(EvalError::InvalidNoise("empty table".into()));
        }
        if points
            .iter()
            .any(|&(t, k)| !(t > 0.0 && k > 0.0 && t.is_finite() && k.is_finite()))
        {
            return Err(EvalError::InvalidNoise("table entries must be positive and finite".into()));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1)) {
            return Err(EvalError::InvalidNoise(format!(
                "table is not strictly increasing between t = {} and t = {}",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { points })
    }

    /// Tabulate a closed-form noise map on the given temperatures.
    pub fn sample(temperatures: &[f64], kappa: impl Fn(f64) -> f64) -> Result<Self, EvalError> {
        Self::new(temperatures.iter().map(|&t| (t, kappa(t))).collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        let (lo, hi) = (self.points[0].0, self.points[self.points.len() - 1].0);
        if !(lo..=hi).contains(&t) {
            return Err(EvalError::OutsideTable { t, lo, hi });
        }
        Ok(loglog_interp(&self.points, t))
    }
}

/// The noise map `κ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseMap {
    /// `κ(t) = k t`
    Parametric { k: f64 },
    Tabulated { table: KappaTable },
    /// `κ(t) = 1/f(1/t)` for a closed-form generator `f`.
    Generator { generator: ConcatGenerator },
}

impl NoiseMap {
    pub fn kappa(&self, t: f64) -> Result<f64, EvalError> {
        if !(t > 0.0) {
            return Err(EvalError::Domain(t));
        }
        match self {
            NoiseMap::Parametric { k } => Ok(k * t),
            NoiseMap::Tabulated { table } => table.eval(t),
            NoiseMap::Generator { generator } => Ok(1.0 / generator.eval(1.0 / t)?),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            NoiseMap::Parametric { k } if !(*k > 0.0 && k.is_finite()) => {
                Err(EvalError::InvalidNoise(format!("k = {k} must be positive")))
            }
            NoiseMap::Tabulated { table } => KappaTable::new(table.points.clone()).map(|_| ()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub energies: BTreeMap<String, f64>,
    pub noise: NoiseMap,
}

impl EnergyModel {
    pub fn boltzmann(energies: BTreeMap<String, f64>, k: f64) -> Self {
        Self {
            energies,
            noise: NoiseMap::Parametric { k },
        }
    }

    pub fn energy(&self, a: &str) -> Result<f64, EvalError> {
        self.energies
            .get(a)
            .copied()
            .ok_or_else(|| EvalError::MissingEnergy(a.to_string()))
    }

    /// All probabilities on `menu` at `t`, in menu order (duplicates ignored).
    pub fn menu_probs<'m>(&self, t: f64, menu: &[&'m str]) -> Result<Vec<(&'m str, f64)>, EvalError> {
        let kappa = self.noise.kappa(t)?;
        self.probs_at_kappa(kappa, menu)
    }

    fn probs_at_kappa<'m>(&self, kappa: f64, menu: &[&'m str]) -> Result<Vec<(&'m str, f64)>, EvalError> {
        let members: BTreeSet<&str> = menu.iter().copied().collect();
        if members.is_empty() {
            return Err(EvalError::EmptyMenu);
        }
        let logits = members
            .iter()
            .map(|&a| Ok((a, -self.energy(a)? / kappa)))
            .collect::<Result<Vec<_>, EvalError>>()?;
        let max = logits.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l.1 - max).exp()).sum();
        let by_state: BTreeMap<&str, f64> = logits.iter().map(|&(a, l)| (a, (l - max).exp() / z)).collect();
        let mut seen = BTreeSet::new();
        Ok(menu
            .iter()
            .filter(|a| seen.insert(**a))
            .map(|&a| (a, by_state[a]))
            .collect())
    }

    /// `ln p_t(a | A)` without leaving log space.
    pub fn log_prob(&self, t: f64, a: &str, menu: &[&str]) -> Result<f64, EvalError> {
        let kappa = self.noise.kappa(t)?;
        let members: BTreeSet<&str> = menu.iter().copied().collect();
        if members.is_empty() {
            return Err(EvalError::EmptyMenu);
        }
        let logits = members
            .iter()
            .map(|&b| Ok(-self.energy(b)? / kappa))
            .collect::<Result<Vec<f64>, EvalError>>()?;
        if !members.contains(a) {
            return Ok(f64::NEG_INFINITY);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(-self.energy(a)? / kappa - lse)
    }
}

/// Boltzmann probability `p_t(a | A)` with `κ(t) = k t`.
pub fn boltzmann_prob(model: &EnergyModel, t: f64, a: &str, menu: &[&str]) -> Result<f64, EvalError> {
    if !matches!(model.noise, NoiseMap::Parametric { .. }) {
        return Err(EvalError::NotParametric);
    }
    softmax_prob(model, t, a, menu)
}

/// Softmax probability `p_t(a | A)` under the model's noise map; `0` when
/// `a ∉ A`.
pub fn softmax_prob(model: &EnergyModel, t: f64, a: &str, menu: &[&str]) -> Result<f64, EvalError> {
    let probs = model.menu_probs(t, menu)?;
    Ok(probs.iter().find(|p| p.0 == a).map_or(0.0, |p| p.1))
}

/// `ln r_t(a, b) = −(E(a) − E(b))/κ(t)`.
pub fn log_odds(model: &EnergyModel, t: f64, a: &str, b: &str) -> Result<f64, EvalError> {
    let kappa = model.noise.kappa(t)?;
    Ok(-(model.energy(a)? - model.energy(b)?) / kappa)
}

/// Zero-temperature limits on a menu.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FreezingProfile {
    /// `p₀(a, b)` for ordered pairs of distinct states.
    pub pairs: BTreeMap<String, BTreeMap<String, f64>>,
    /// `p₀(a | A)` for the menu itself.
    pub masses: BTreeMap<String, f64>,
}

impl FreezingProfile {
    pub fn pair(&self, a: &str, b: &str) -> Option<f64> {
        self.pairs.get(a)?.get(b).copied()
    }
}

/// Limit of the softmax as `t → 0⁺`: mass split evenly over the minimizers.
pub fn zero_limit(model: &EnergyModel, menu: &[&str]) -> Result<FreezingProfile, EvalError> {
    let members: BTreeSet<&str> = menu.iter().copied().collect();
    if members.is_empty() {
        return Err(EvalError::EmptyMenu);
    }
    let energies = members
        .iter()
        .map(|&a| Ok((a, model.energy(a)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    let min = energies.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let ties = energies.iter().filter(|e| e.1 == min).count() as f64;
    let mut profile = FreezingProfile::default();
    for &(a, ea) in &energies {
        profile
            .masses
            .insert(a.to_string(), if ea == min { 1.0 / ties } else { 0.0 });
        for &(b, eb) in &energies {
            if a == b {
                continue;
            }
            let p0 = match ea.partial_cmp(&eb) {
                Some(std::cmp::Ordering::Less) => 1.0,
                Some(std::cmp::Ordering::Greater) => 0.0,
                _ => 0.5,
            };
            profile.pairs.entry(a.to_string()).or_default().insert(b.to_string(), p0);
        }
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn energies(values: &[(&str, f64)]) -> BTreeMap<String, f64> {
        values.iter().map(|(s, e)| (s.to_string(), *e)).collect()
    }

    fn abc() -> EnergyModel {
        EnergyModel::boltzmann(energies(&[("a", 0.0), ("b", 1.0), ("c", 2.0)]), 1.0)
    }

    #[test]
    fn three_state_boltzmann_oracle() {
        let m = abc();
        let w = [1.0, (-1f64).exp(), (-2f64).exp()];
        let z: f64 = w.iter().sum();
        for (s, wi) in ["a", "b", "c"].iter().zip(w) {
            let p = boltzmann_prob(&m, 1.0, s, &["a", "b", "c"]).unwrap();
            assert!((p - wi / z).abs() < 1e-15);
        }
        assert!((boltzmann_prob(&m, 1.0, "a", &["a", "b", "c"]).unwrap() - 0.665241).abs() < 1e-6);
        assert_eq!(boltzmann_prob(&m, 1.0, "c", &["a", "b"]).unwrap(), 0.0);
    }

    #[test]
    fn constant_energy_is_uniform() {
        let m = EnergyModel::boltzmann(energies(&[("a", 2.0), ("b", 2.0), ("c", 2.0), ("d", 2.0)]), 3.0);
        for s in ["a", "b", "c", "d"] {
            assert!((boltzmann_prob(&m, 0.7, s, &["a", "b", "c", "d"]).unwrap() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn domain_and_missing_energy_errors() {
        let m = abc();
        assert_eq!(boltzmann_prob(&m, 0.0, "a", &["a"]), Err(EvalError::Domain(0.0)));
        assert!(matches!(
            boltzmann_prob(&m, 1.0, "z", &["a", "z"]),
            Err(EvalError::MissingEnergy(_))
        ));
    }

    #[test]
    fn squared_noise_softmax() {
        let m = EnergyModel {
            energies: energies(&[("a", 0.0), ("b", 1.0)]),
            noise: NoiseMap::Generator {
                generator: ConcatGenerator::power(2.0).unwrap(),
            },
        };
        let p = softmax_prob(&m, 2.0, "a", &["a", "b"]).unwrap();
        assert!((p - 1.0 / (1.0 + (-0.25f64).exp())).abs() < 1e-15);
        assert!((p - 0.562177).abs() < 1e-6);
        assert!(matches!(boltzmann_prob(&m, 2.0, "a", &["a", "b"]), Err(EvalError::NotParametric)));
    }

    #[test]
    fn tabulated_noise_is_exact_at_nodes_and_refuses_extrapolation() {
        let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
        let table = KappaTable::sample(&grid, |t| t * t).unwrap();
        let tab = NoiseMap::Tabulated { table };
        let closed = NoiseMap::Generator {
            generator: ConcatGenerator::power(2.0).unwrap(),
        };
        for t in grid {
            assert!((tab.kappa(t).unwrap() - closed.kappa(t).unwrap()).abs() <= 1e-12);
        }
        assert!(matches!(tab.kappa(8.0), Err(EvalError::OutsideTable { .. })));
        assert!(KappaTable::new(vec![(1.0, 2.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn log_odds_examples() {
        let m = EnergyModel::boltzmann(energies(&[("a", 0.0), ("b", 1.0)]), 1.0);
        assert_eq!(log_odds(&m, 1.0, "a", "a").unwrap(), 0.0);
        assert_eq!(log_odds(&m, 1.0, "a", "b").unwrap(), 1.0);
        assert_eq!(log_odds(&m, 2.0, "a", "b").unwrap(), 0.5);
    }

    #[test]
    fn small_temperature_does_not_overflow() {
        let m = abc();
        let p = boltzmann_prob(&m, 1e-4, "a", &["a", "b", "c"]).unwrap();
        assert_eq!(p, 1.0);
        assert!(m.log_prob(1e-4, "c", &["a", "c"]).unwrap() < -1e4);
    }

    #[test]
    fn zero_limit_examples() {
        let m = EnergyModel::boltzmann(energies(&[("a", 0.0), ("b", 1.0), ("c", 0.0)]), 1.0);
        let p = zero_limit(&m, &["a", "b"]).unwrap();
        assert_eq!((p.pair("a", "b"), p.pair("b", "a")), (Some(1.0), Some(0.0)));
        let p = zero_limit(&m, &["a", "c"]).unwrap();
        assert_eq!(p.pair("a", "c"), Some(0.5));
        let p = zero_limit(&m, &["a", "b", "c"]).unwrap();
        assert_eq!(p.masses["a"], 0.5);
        assert_eq!(p.masses["b"], 0.0);
        let near = m.menu_probs(1e-3, &["a", "b", "c"]).unwrap();
        for (s, q) in near {
            assert!((q - p.masses[s]).abs() < 1e-6);
        }
    }

    fn arb_model() -> impl Strategy<Value = (EnergyModel, Vec<&'static str>)> {
        let names = ["a", "b", "c", "d", "e"];
        (proptest::collection::vec(-5.0f64..5.0, 5), 0.1f64..5.0, 2usize..=5).prop_map(move |(e, k, n)| {
            let energies = names.iter().zip(e).map(|(s, v)| (s.to_string(), v)).collect();
            (EnergyModel::boltzmann(energies, k), names[..n].to_vec())
        })
    }

    proptest! {
        #[test]
        fn probabilities_normalize((model, menu) in arb_model(), t in 0.01f64..100.0) {
            let sum: f64 = model.menu_probs(t, &menu).unwrap().iter().map(|p| p.1).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn shifting_energies_changes_nothing((model, menu) in arb_model(), q in -50.0f64..50.0, t in 0.05f64..20.0) {
            let mut shifted = model.clone();
            shifted.energies.values_mut().for_each(|e| *e += q);
            for (a, b) in model.menu_probs(t, &menu).unwrap().iter().zip(shifted.menu_probs(t, &menu).unwrap()) {
                prop_assert!((a.1 - b.1).abs() <= 1e-12);
            }
        }

        #[test]
        fn odds_multiply_in_inverse_temperature((model, _) in arb_model(), t in 0.1f64..10.0, s in 0.1f64..10.0) {
            // r at inverse temperature t+s equals the product at t and at s
            let lhs = log_odds(&model, 1.0 / (t + s), "a", "b").unwrap();
            let rhs = log_odds(&model, 1.0 / t, "a", "b").unwrap() + log_odds(&model, 1.0 / s, "a", "b").unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn zero_limit_matches_tiny_temperature((model, menu) in arb_model()) {
            let profile = zero_limit(&model, &menu).unwrap();
            let values: Vec<f64> = menu.iter().map(|s| model.energies[*s]).collect();
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let gap = values.iter().filter(|&&v| v > min).map(|v| v - min).fold(f64::INFINITY, f64::min);
            prop_assume!(gap > 1e-3);
            let t = gap / 1000.0 / model.noise.kappa(1.0).unwrap();
            let tv: f64 = model.menu_probs(t, &menu).unwrap().iter()
                .map(|(s, p)| (p - profile.masses[*s]).abs()).sum::<f64>() / 2.0;
            prop_assert!(tv <= 1e-6);
        }
    }
}
