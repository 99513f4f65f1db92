//! Closed-form recovery of an energy function and noise map from odds.
//!
//! Fix a pivot temperature `v̄` and a strictly ordered pair `c̄ ≻ d̄`. Then
//!
//! * `Ẽ(a) = ln r_v̄(c̄, a)` equals `(E(a) − E(c̄))/κ(v̄)`,
//! * `κ̃(t) = ln r_v̄(c̄, d̄) / ln r_t(c̄, d̄)` equals `κ(t)/κ(v̄)`,
//!
//! so `(Ẽ, κ̃)` is an affine image `(mE + q, mκ)` of any true representation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axioms::ToleranceConfig;
use crate::boltzmann::{EnergyModel, EvalError, KappaTable, NoiseMap};
use crate::concat::{generator_from_kappa, ConcatError, ConcatGenerator};
use crate::model::{EmpiricalRsf, OddsSource};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("no significant strict preference: the family is uniform, energies are constant and the noise map is undetermined")]
    UniformFamily,
    #[error("pivot pair ({c}, {d}) is not observed at temperature {label}")]
    PivotUnobserved { c: String, d: String, label: String },
    #[error("recovered noise map is not a positive increasing table: {0}")]
    InvalidKappa(String),
    #[error("energies are constant; the affine map is not identified")]
    ConstantEnergy,
    #[error("models share fewer than two states")]
    TooFewStates,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Concat(#[from] ConcatError),
}

/// Anchor of the recovery: temperature `v̄` and a pair with `c̄` preferred.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pivot {
    pub temperature: f64,
    pub label: String,
    pub c: String,
    pub d: String,
    pub log_odds: f64,
    pub stderr: f64,
    /// The pivot odds come from a larger menu, not a binary one.
    pub conditioning_dependent: bool,
}

/// The `(t, c̄, d̄)` with the largest `|ln r| / se`, among significant ones.
///
/// Pairs are scanned in lexicographic order of state ids and temperatures in
/// increasing order; the first maximum wins.
pub fn select_pivot(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> Result<Pivot, RecoveryError> {
    let states = rsf.states();
    let mut candidates = Vec::new();
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            for ti in 0..rsf.temperatures().len() {
                if let Some((lo, src)) = rsf.log_odds_with_source(ti, a, b) {
                    candidates.push((a, b, ti, lo, src));
                }
            }
        }
    }
    let crit = stats::z_two_sided(cfg.alpha, candidates.len());
    let mut best: Option<(f64, Pivot)> = None;
    for (a, b, ti, lo, src) in candidates {
        let z = lo.value.abs() / lo.stderr;
        if z <= crit || best.as_ref().is_some_and(|(bz, _)| z <= *bz) {
            continue;
        }
        let (c, d) = if lo.value > 0.0 { (a, b) } else { (b, a) };
        let t = &rsf.temperatures()[ti];
        best = Some((
            z,
            Pivot {
                temperature: t.value,
                label: t.label.clone(),
                c: c.clone(),
                d: d.clone(),
                log_odds: lo.value.abs(),
                stderr: lo.stderr,
                conditioning_dependent: matches!(src, OddsSource::Derived(_)),
            },
        ));
    }
    best.map(|(_, p)| p).ok_or(RecoveryError::UniformFamily)
}

fn pivot_index(rsf: &EmpiricalRsf, pivot: &Pivot) -> Result<usize, RecoveryError> {
    rsf.temperatures()
        .iter()
        .position(|t| t.label == pivot.label)
        .ok_or_else(|| RecoveryError::PivotUnobserved {
            c: pivot.c.clone(),
            d: pivot.d.clone(),
            label: pivot.label.clone(),
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecovery {
    pub energies: BTreeMap<String, f64>,
    pub stderr: BTreeMap<String, f64>,
    /// States with no usable odds against `c̄` at `v̄`.
    pub unrecoverable: Vec<String>,
    /// States whose odds were read from a larger menu.
    pub conditioning_dependent: Vec<String>,
}

/// `Ẽ(a) = ln r_v̄(c̄, a)`; `Ẽ(c̄) = 0` exactly.
pub fn recover_energy(rsf: &EmpiricalRsf, pivot: &Pivot) -> Result<EnergyRecovery, RecoveryError> {
    let ti = pivot_index(rsf, pivot)?;
    let mut out = EnergyRecovery {
        energies: BTreeMap::new(),
        stderr: BTreeMap::new(),
        unrecoverable: Vec::new(),
        conditioning_dependent: Vec::new(),
    };
    for a in rsf.states() {
        if a == pivot.c {
            out.energies.insert(a.clone(), 0.0);
            out.stderr.insert(a, 0.0);
            continue;
        }
        match rsf.log_odds_with_source(ti, &pivot.c, &a) {
            Some((lo, src)) => {
                if matches!(src, OddsSource::Derived(_)) {
                    out.conditioning_dependent.push(a.clone());
                }
                out.energies.insert(a.clone(), lo.value);
                out.stderr.insert(a, lo.stderr);
            }
            None => out.unrecoverable.push(a),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    pub temperature: f64,
    pub label: String,
    pub kappa: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaRecovery {
    pub points: Vec<KappaPoint>,
    /// Temperatures where the pivot pair is unobserved.
    pub gaps: Vec<String>,
    /// Whether `κ̃` is positive and strictly increasing.
    pub monotone: bool,
    /// Weighted isotonic projection, present only when `monotone` is false.
    pub isotonic: Option<Vec<f64>>,
}

impl KappaRecovery {
    pub fn table(&self) -> Result<KappaTable, RecoveryError> {
        KappaTable::new(self.points.iter().map(|p| (p.temperature, p.kappa)).collect())
            .map_err(|e| RecoveryError::InvalidKappa(e.to_string()))
    }
}

/// `κ̃(t) = ln r_v̄(c̄, d̄) / ln r_t(c̄, d̄)` at every observed temperature,
/// with delta-method standard errors. `κ̃(v̄) = 1` exactly.
pub fn recover_kappa(rsf: &EmpiricalRsf, pivot: &Pivot) -> Result<KappaRecovery, RecoveryError> {
    let vi = pivot_index(rsf, pivot)?;
    let (lv, _) = rsf
        .log_odds_with_source(vi, &pivot.c, &pivot.d)
        .ok_or_else(|| RecoveryError::PivotUnobserved {
            c: pivot.c.clone(),
            d: pivot.d.clone(),
            label: pivot.label.clone(),
        })?;
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (ti, t) in rsf.temperatures().iter().enumerate() {
        let Some((lt, _)) = rsf.log_odds_with_source(ti, &pivot.c, &pivot.d) else {
            gaps.push(t.label.clone());
            continue;
        };
        let (kappa, stderr) = if ti == vi {
            (1.0, 0.0)
        } else {
            let k = lv.value / lt.value;
            (k, k.abs() * (lv.stderr / lv.value).hypot(lt.stderr / lt.value))
        };
        points.push(KappaPoint {
            temperature: t.value,
            label: t.label.clone(),
            kappa,
            stderr,
        });
    }
    let monotone = points.iter().all(|p| p.kappa > 0.0 && p.kappa.is_finite())
        && points.windows(2).all(|w| w[0].kappa < w[1].kappa);
    let isotonic = (!monotone).then(|| {
        let values: Vec<f64> = points.iter().map(|p| p.kappa).collect();
        let weights: Vec<f64> = points
            .iter()
            .map(|p| 1.0 / p.stderr.max(crate::model::STDERR_FLOOR).powi(2))
            .collect();
        stats::isotonic_increasing(&values, &weights)
    });
    Ok(KappaRecovery {
        points,
        gaps,
        monotone,
        isotonic,
    })
}

/// The generator `φ(v) = 1/κ̃(1/v)` as a table, normalized so `φ(1) = 1`
/// when `1` lies in its range.
pub fn identify_concatenation(kappa: &KappaTable) -> Result<ConcatGenerator, RecoveryError> {
    let g = generator_from_kappa(&NoiseMap::Tabulated { table: kappa.clone() })?;
    Ok(g.normalized())
}

/// Result of fitting `E₂ = m E₁ + q` and `κ₂ = m κ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFit {
    pub equivalent: bool,
    pub m: f64,
    pub q: f64,
    /// Largest absolute energy residual.
    pub energy_residual: f64,
    /// Largest relative noise-map residual `|κ₂ − m κ₁| / (m κ₁)`.
    pub kappa_residual: f64,
}

/// Test whether two representations are affine images of each other on the
/// states they share and on `temperatures`.
pub fn affine_equivalent(
    first: &EnergyModel,
    second: &EnergyModel,
    temperatures: &[f64],
    tol: f64,
) -> Result<AffineFit, RecoveryError> {
    let shared: Vec<(f64, f64)> = first
        .energies
        .iter()
        .filter_map(|(s, &e1)| second.energies.get(s).map(|&e2| (e1, e2)))
        .collect();
    if shared.len() < 2 {
        return Err(RecoveryError::TooFewStates);
    }
    let n = shared.len() as f64;
    let mx = shared.iter().map(|p| p.0).sum::<f64>() / n;
    let my = shared.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = shared.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = shared.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(RecoveryError::ConstantEnergy);
    }
    let m = sxy / sxx;
    let q = my - m * mx;
    let energy_residual = shared
        .iter()
        .map(|&(x, y)| (y - (m * x + q)).abs())
        .fold(0.0, f64::max);
    let mut kappa_residual: f64 = 0.0;
    for &t in temperatures {
        let k1 = first.noise.kappa(t)?;
        let k2 = second.noise.kappa(t)?;
        kappa_residual = kappa_residual.max((k2 - m * k1).abs() / (m * k1).abs());
    }
    Ok(AffineFit {
        equivalent: m > 0.0 && energy_residual <= tol && kappa_residual <= tol,
        m,
        q,
        energy_residual,
        kappa_residual,
    })
}

/// Everything the closed-form estimator yields for one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub pivot: Option<Pivot>,
    pub energies: EnergyRecovery,
    pub kappa: Option<KappaRecovery>,
    pub generator: Option<ConcatGenerator>,
    /// No strict preference anywhere: energies constant.
    pub uniform: bool,
    /// The noise map is not identified by the data.
    pub kappa_undetermined: bool,
}

impl Recovery {
    /// The recovered representation, when the noise table is valid.
    pub fn model(&self) -> Option<EnergyModel> {
        let table = self.kappa.as_ref()?.table().ok()?;
        Some(EnergyModel {
            energies: self.energies.energies.clone(),
            noise: NoiseMap::Tabulated { table },
        })
    }
}

pub fn recover(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> Result<Recovery, RecoveryError> {
    let pivot = match select_pivot(rsf, cfg) {
        Ok(p) => p,
        Err(RecoveryError::UniformFamily) => {
            let states = rsf.states();
            return Ok(Recovery {
                pivot: None,
                energies: EnergyRecovery {
                    energies: states.iter().map(|s| (s.clone(), 0.0)).collect(),
                    stderr: states.iter().map(|s| (s.clone(), 0.0)).collect(),
                    unrecoverable: Vec::new(),
                    conditioning_dependent: Vec::new(),
                },
                kappa: None,
                generator: None,
                uniform: true,
                kappa_undetermined: true,
            });
        }
        Err(e) => return Err(e),
    };
    let energies = recover_energy(rsf, &pivot)?;
    let kappa = recover_kappa(rsf, &pivot)?;
    let generator = kappa.table().ok().and_then(|t| identify_concatenation(&t).ok());
    Ok(Recovery {
        kappa_undetermined: !kappa.monotone,
        pivot: Some(pivot),
        energies,
        kappa: Some(kappa),
        generator,
        uniform: false,
    })
}
