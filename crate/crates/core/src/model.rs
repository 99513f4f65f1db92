//! Empirical random state functions.
//!
//! An [`EmpiricalRsf`] tabulates the frequency `p_t(a | A)` of every state
//! `a` of every observed menu `A` at every observed temperature `t`, together
//! with multinomial standard errors. Binary odds `r_t(a, b)` and their
//! logarithms are derived on demand.
//!
//! Temperatures are identified by their textual token: `"1"` and `"1.0"`
//! denote the same value and are rejected as ambiguous instead of being
//! silently merged.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axioms::ToleranceConfig;
use crate::stats::Obs;
use crate::trend::{self, TrendClass};

/// Standard error assigned to cells of exact (count-free) families.
pub const STDERR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("row {row}: duplicate cell (temperature {temperature}, menu {menu}, state {state})")]
    DuplicateCell {
        row: usize,
        temperature: String,
        menu: String,
        state: String,
    },
    #[error("zero total count for temperature {temperature}, menu {menu}")]
    ZeroTotal { temperature: String, menu: String },
    #[error("row {row}: invalid temperature {token:?} (expected a positive decimal)")]
    InvalidTemperature { row: usize, token: String },
    #[error("temperature tokens {first:?} and {second:?} denote the same value")]
    AmbiguousTemperature { first: String, second: String },
    #[error("row {row}: frequency {value} outside [0, 1]")]
    InvalidFrequency { row: usize, value: f64 },
    #[error("menu {menu} has different members at temperature {temperature}")]
    InconsistentMenu { menu: String, temperature: String },
    #[error("no observations at temperature {temperature} for menu {menu}")]
    MissingCell { temperature: f64, menu: String },
    #[error("unknown menu {0}")]
    UnknownMenu(String),
    #[error("states {states:?} are not all members of menu {menu}")]
    NotSubset { states: Vec<String>, menu: String },
    #[error("pair ({a}, {b}) has {found} usable samples, need {needed}")]
    InsufficientData {
        a: String,
        b: String,
        found: usize,
        needed: usize,
    },
    #[error("invalid temperature grid: {0}")]
    InvalidGrid(String),
    #[error("invalid state space: {0}")]
    InvalidStates(String),
}

/// A state of the system; coordinates are only needed for convexity tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    states: Vec<State>,
}

impl StateSpace {
    pub fn new(states: Vec<State>) -> Result<Self, ModelError> {
        let mut ids = BTreeSet::new();
        let mut dim = None;
        for s in &states {
            if !ids.insert(s.id.as_str()) {
                return Err(ModelError::InvalidStates(format!("duplicate id {}", s.id)));
            }
            if let Some(c) = &s.coords {
                if c.is_empty() {
                    return Err(ModelError::InvalidStates(format!("{} has empty coords", s.id)));
                }
                match dim {
                    None => dim = Some(c.len()),
                    Some(d) if d != c.len() => {
                        return Err(ModelError::InvalidStates(format!(
                            "{} has dimension {}, expected {d}",
                            s.id,
                            c.len()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn get(&self, id: &str) -> Option<&State> {
        self.states.iter().find(|s| s.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Menu {
    pub id: String,
    pub members: BTreeSet<String>,
}

impl Menu {
    pub fn new<S: Into<String>>(id: impl Into<String>, members: impl IntoIterator<Item = S>) -> Self {
        Self {
            id: id.into(),
            members: members.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, state: &str) -> bool {
        self.members.contains(state)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_vec(&self) -> Vec<&str> {
        self.members.iter().map(String::as_str).collect()
    }
}

/// A grid temperature: the value plus the exact token it was read from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub label: String,
    pub value: f64,
}

impl Temperature {
    pub fn parse(token: &str) -> Option<Self> {
        let token = token.trim();
        let value: f64 = token.parse().ok()?;
        (value.is_finite() && value > 0.0).then(|| Self {
            label: token.to_string(),
            value,
        })
    }

    pub fn from_value(value: f64) -> Self {
        Self {
            label: format!("{value}"),
            value,
        }
    }
}

/// Strictly increasing positive temperatures, at least three of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureGrid {
    points: Vec<Temperature>,
}

impl TemperatureGrid {
    pub fn new(points: Vec<Temperature>) -> Result<Self, ModelError> {
        if points.len() < 3 {
            return Err(ModelError::InvalidGrid(format!(
                "need at least 3 temperatures, got {}",
                points.len()
            )));
        }
        for p in &points {
            if !(p.value.is_finite() && p.value > 0.0) {
                return Err(ModelError::InvalidGrid(format!("non-positive temperature {}", p.label)));
            }
        }
        if points.windows(2).any(|w| w[0].value >= w[1].value) {
            return Err(ModelError::InvalidGrid("temperatures must strictly increase".into()));
        }
        Ok(Self { points })
    }

    pub fn from_values(values: &[f64]) -> Result<Self, ModelError> {
        Self::new(values.iter().map(|&v| Temperature::from_value(v)).collect())
    }

    /// Parse a comma-separated list such as `0.25,0.5,1,2,4`.
    pub fn parse_list(list: &str) -> Result<Self, ModelError> {
        let points = list
            .split(',')
            .enumerate()
            .map(|(i, tok)| {
                Temperature::parse(tok).ok_or_else(|| ModelError::InvalidTemperature {
                    row: i + 1,
                    token: tok.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[Temperature] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One row of count data: `(temperature, menu_id, state, count)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub temperature: String,
    pub menu_id: String,
    pub state: String,
    pub count: u64,
}

impl CountRecord {
    pub fn new(temperature: impl Into<String>, menu_id: impl Into<String>, state: impl Into<String>, count: u64) -> Self {
        Self {
            temperature: temperature.into(),
            menu_id: menu_id.into(),
            state: state.into(),
            count,
        }
    }
}

/// One row of frequency-only data, used for exact families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRecord {
    pub temperature: String,
    pub menu_id: String,
    pub state: String,
    pub frequency: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one half to every cell of a group before normalizing.
    Jeffreys,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: Option<u64>,
    pub freq: f64,
    pub stderr: f64,
}

/// All cells of one `(temperature, menu)` observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub total: Option<u64>,
    pub cells: BTreeMap<String, Cell>,
}

impl Group {
    /// Effective sample size behind the frequencies, if counts exist.
    pub fn effective_total(&self, smoothing: Smoothing) -> Option<f64> {
        let total = self.total? as f64;
        Some(match smoothing {
            Smoothing::None => total,
            Smoothing::Jeffreys => total + 0.5 * self.cells.len() as f64,
        })
    }
}

/// Log-odds `ln r_t(a, b)` with its delta-method standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogOdds {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OddsSource {
    /// Read from the binary menu `{a, b}`.
    Binary(String),
    /// Ratio `p_t(a|A)/p_t(b|A)` within a larger menu; valid only under conditioning.
    Derived(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalRsf {
    temperatures: Vec<Temperature>,
    menus: Vec<Menu>,
    groups: BTreeMap<(usize, usize), Group>,
    smoothing: Smoothing,
}

/// Build from count records with no smoothing.
pub fn build_empirical_rsf(records: &[CountRecord]) -> Result<EmpiricalRsf, ModelError> {
    EmpiricalRsf::from_counts(records, Smoothing::None)
}

struct Layout {
    temperatures: Vec<Temperature>,
    menus: Vec<Menu>,
    /// per record: (temperature index, menu index)
    keys: Vec<(usize, usize)>,
}

fn layout<'a>(rows: impl Iterator<Item = (usize, &'a str, &'a str, &'a str)> + Clone) -> Result<Layout, ModelError> {
    let mut by_label: BTreeMap<&str, f64> = BTreeMap::new();
    let mut members: BTreeMap<(&str, &str), BTreeSet<String>> = BTreeMap::new();
    let mut seen: BTreeSet<(&str, &str, &str)> = BTreeSet::new();
    for (row, t, m, s) in rows.clone() {
        if !by_label.contains_key(t) {
            let parsed = Temperature::parse(t).ok_or_else(|| ModelError::InvalidTemperature {
                row,
                token: t.to_string(),
            })?;
            by_label.insert(t, parsed.value);
        }
        if !seen.insert((t, m, s)) {
            return Err(ModelError::DuplicateCell {
                row,
                temperature: t.to_string(),
                menu: m.to_string(),
                state: s.to_string(),
            });
        }
        members.entry((t, m)).or_default().insert(s.to_string());
    }
    let mut temperatures: Vec<Temperature> = by_label
        .iter()
        .map(|(l, v)| Temperature {
            label: l.to_string(),
            value: *v,
        })
        .collect();
    temperatures.sort_by(|a, b| a.value.total_cmp(&b.value));
    for w in temperatures.windows(2) {
        if w[0].value == w[1].value {
            return Err(ModelError::AmbiguousTemperature {
                first: w[0].label.clone(),
                second: w[1].label.clone(),
            });
        }
    }
    let mut menu_members: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for ((t, m), set) in &members {
        match menu_members.get(m) {
            Some(existing) if existing != set => {
                return Err(ModelError::InconsistentMenu {
                    menu: m.to_string(),
                    temperature: t.to_string(),
                })
            }
            Some(_) => {}
            None => {
                menu_members.insert(m, set.clone());
            }
        }
    }
    let menus: Vec<Menu> = menu_members
        .into_iter()
        .map(|(id, members)| Menu {
            id: id.to_string(),
            members,
        })
        .collect();
    let t_index: BTreeMap<&str, usize> = temperatures
        .iter()
        .enumerate()
        .map(|(i, t)| (t.label.as_str(), i))
        .collect();
    let m_index: BTreeMap<&str, usize> = menus.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
    let keys = rows.map(|(_, t, m, _)| (t_index[t], m_index[m])).collect();
    Ok(Layout {
        temperatures,
        menus,
        keys,
    })
}

impl EmpiricalRsf {
    /// Build from count records. Frequencies are normalized per
    /// `(temperature, menu)` and standard errors follow the multinomial formula.
    pub fn from_counts(records: &[CountRecord], smoothing: Smoothing) -> Result<Self, ModelError> {
        let rows = records
            .iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r.temperature.as_str(), r.menu_id.as_str(), r.state.as_str()));
        let Layout {
            temperatures,
            menus,
            keys,
        } = layout(rows)?;
        let mut groups: BTreeMap<(usize, usize), Group> = BTreeMap::new();
        for (rec, key) in records.iter().zip(&keys) {
            let group = groups.entry(*key).or_insert_with(|| Group {
                total: Some(0),
                cells: BTreeMap::new(),
            });
            group.total = group.total.map(|t| t + rec.count);
            group.cells.insert(
                rec.state.clone(),
                Cell {
                    count: Some(rec.count),
                    freq: 0.0,
                    stderr: 0.0,
                },
            );
        }
        let mut rsf = Self {
            temperatures,
            menus,
            groups,
            smoothing,
        };
        for (&(ti, mi), group) in &rsf.groups {
            if group.total == Some(0) {
                return Err(ModelError::ZeroTotal {
                    temperature: rsf.temperatures[ti].label.clone(),
                    menu: rsf.menus[mi].id.clone(),
                });
            }
        }
        rsf.normalize();
        Ok(rsf)
    }

    /// Build from frequency-only records (exact families). Every cell gets
    /// the [`STDERR_FLOOR`] standard error.
    pub fn from_frequencies(records: &[FrequencyRecord]) -> Result<Self, ModelError> {
        for (i, r) in records.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.frequency) {
                return Err(ModelError::InvalidFrequency {
                    row: i + 1,
                    value: r.frequency,
                });
            }
        }
        let rows = records
            .iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r.temperature.as_str(), r.menu_id.as_str(), r.state.as_str()));
        let Layout {
            temperatures,
            menus,
            keys,
        } = layout(rows)?;
        let mut groups: BTreeMap<(usize, usize), Group> = BTreeMap::new();
        for (rec, key) in records.iter().zip(&keys) {
            groups
                .entry(*key)
                .or_insert_with(|| Group {
                    total: None,
                    cells: BTreeMap::new(),
                })
                .cells
                .insert(
                    rec.state.clone(),
                    Cell {
                        count: None,
                        freq: rec.frequency,
                        stderr: STDERR_FLOOR,
                    },
                );
        }
        Ok(Self {
            temperatures,
            menus,
            groups,
            smoothing: Smoothing::None,
        })
    }

    /// Same data with a different smoothing rule (count-backed cells only).
    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Self {
        self.smoothing = smoothing;
        self.normalize();
        self
    }

    fn normalize(&mut self) {
        let smoothing = self.smoothing;
        for group in self.groups.values_mut() {
            let Some(n) = group.effective_total(smoothing) else {
                continue;
            };
            for cell in group.cells.values_mut() {
                let Some(c) = cell.count else { continue };
                let c = match smoothing {
                    Smoothing::None => c as f64,
                    Smoothing::Jeffreys => c as f64 + 0.5,
                };
                let f = c / n;
                cell.freq = f;
                cell.stderr = (f * (1.0 - f) / n).sqrt();
            }
        }
    }

    pub fn temperatures(&self) -> &[Temperature] {
        &self.temperatures
    }

    pub fn menus(&self) -> &[Menu] {
        &self.menus
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// True when every group is backed by counts.
    pub fn has_counts(&self) -> bool {
        self.groups.values().all(|g| g.total.is_some())
    }

    pub fn menu_index(&self, id: &str) -> Option<usize> {
        self.menus.iter().position(|m| m.id == id)
    }

    pub fn temperature_index(&self, t: f64) -> Option<usize> {
        self.temperatures.iter().position(|x| x.value == t)
    }

    /// Temperature index matched within a relative tolerance.
    pub fn temperature_index_near(&self, t: f64, rel: f64) -> Option<usize> {
        self.temperatures
            .iter()
            .position(|x| (x.value - t).abs() <= rel * t.abs().max(x.value.abs()))
    }

    pub fn group(&self, ti: usize, mi: usize) -> Option<&Group> {
        self.groups.get(&(ti, mi))
    }

    pub fn groups(&self) -> impl Iterator<Item = (usize, usize, &Group)> {
        self.groups.iter().map(|(&(t, m), g)| (t, m, g))
    }

    /// All state ids appearing in any menu, sorted.
    pub fn states(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.menus.iter().flat_map(|m| m.members.iter()).collect();
        set.into_iter().cloned().collect()
    }

    /// First menu (by id) whose members are exactly `{a, b}`.
    pub fn binary_menu(&self, a: &str, b: &str) -> Option<usize> {
        self.menus
            .iter()
            .position(|m| m.len() == 2 && m.contains(a) && m.contains(b) && a != b)
    }

    fn lookup(&self, t: f64, menu: &str) -> Result<&Group, ModelError> {
        let mi = self.menu_index(menu).ok_or_else(|| ModelError::UnknownMenu(menu.to_string()))?;
        self.temperature_index(t)
            .and_then(|ti| self.group(ti, mi))
            .ok_or_else(|| ModelError::MissingCell {
                temperature: t,
                menu: menu.to_string(),
            })
    }

    /// `p_t(a | A)` and its standard error; `(0, 0)` when `a ∉ A`.
    pub fn frequency(&self, t: f64, a: &str, menu: &str) -> Result<(f64, f64), ModelError> {
        let group = self.lookup(t, menu)?;
        Ok(group.cells.get(a).map_or((0.0, 0.0), |c| (c.freq, c.stderr)))
    }

    /// `p_t(B | A) = Σ_{b ∈ B} p_t(b | A)` for `B ⊆ A`.
    pub fn conditional_frequency(&self, t: f64, subset: &[&str], menu: &str) -> Result<f64, ModelError> {
        let group = self.lookup(t, menu)?;
        let outside: Vec<String> = subset
            .iter()
            .filter(|s| !group.cells.contains_key(**s))
            .map(|s| s.to_string())
            .collect();
        if !outside.is_empty() {
            return Err(ModelError::NotSubset {
                states: outside,
                menu: menu.to_string(),
            });
        }
        let unique: BTreeSet<&str> = subset.iter().copied().collect();
        Ok(unique.iter().map(|s| group.cells[*s].freq).sum())
    }

    /// `ln p_t(a|A) − ln p_t(b|A)` inside menu `mi`, or `None` if either cell
    /// is missing or has zero frequency.
    pub fn log_odds_in(&self, ti: usize, mi: usize, a: &str, b: &str) -> Option<LogOdds> {
        let group = self.group(ti, mi)?;
        let (ca, cb) = (group.cells.get(a)?, group.cells.get(b)?);
        if ca.freq <= 0.0 || cb.freq <= 0.0 {
            return None;
        }
        let value = ca.freq.ln() - cb.freq.ln();
        let stderr = match (ca.count, cb.count) {
            (Some(na), Some(nb)) => {
                let pad = match self.smoothing {
                    Smoothing::None => 0.0,
                    Smoothing::Jeffreys => 0.5,
                };
                (1.0 / (na as f64 + pad) + 1.0 / (nb as f64 + pad)).sqrt()
            }
            _ => STDERR_FLOOR,
        };
        Some(LogOdds {
            value,
            stderr: stderr.max(STDERR_FLOOR),
        })
    }

    /// Binary log-odds `ln r_t(a, b)` read from the menu `{a, b}`.
    pub fn log_odds(&self, ti: usize, a: &str, b: &str) -> Option<LogOdds> {
        if a == b {
            return Some(LogOdds {
                value: 0.0,
                stderr: STDERR_FLOOR,
            });
        }
        let mi = self.binary_menu(a, b)?;
        self.log_odds_in(ti, mi, a, b)
    }

    /// Binary log-odds, falling back to the ratio inside the first larger
    /// menu containing both states when no binary menu was observed.
    pub fn log_odds_with_source(&self, ti: usize, a: &str, b: &str) -> Option<(LogOdds, OddsSource)> {
        if let Some(mi) = self.binary_menu(a, b) {
            return self
                .log_odds_in(ti, mi, a, b)
                .map(|lo| (lo, OddsSource::Binary(self.menus[mi].id.clone())));
        }
        self.menus
            .iter()
            .enumerate()
            .filter(|(_, m)| m.len() > 2 && m.contains(a) && m.contains(b))
            .find_map(|(mi, m)| {
                self.log_odds_in(ti, mi, a, b)
                    .map(|lo| (lo, OddsSource::Derived(m.id.clone())))
            })
    }

    /// Unordered pairs `{a, b}` (a < b) with an observed binary menu.
    pub fn binary_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
        for m in self.menus.iter().filter(|m| m.len() == 2) {
            let v = m.member_vec();
            pairs.insert((v[0].to_string(), v[1].to_string()));
        }
        pairs.into_iter().collect()
    }

    /// Emit the count records this function was built from, in
    /// `(temperature, menu, state)` order. `None` for exact families.
    pub fn count_records(&self) -> Option<Vec<CountRecord>> {
        let mut out = Vec::new();
        for (&(ti, mi), group) in &self.groups {
            for (state, cell) in &group.cells {
                out.push(CountRecord {
                    temperature: self.temperatures[ti].label.clone(),
                    menu_id: self.menus[mi].id.clone(),
                    state: state.clone(),
                    count: cell.count?,
                });
            }
        }
        Some(out)
    }

    pub fn frequency_records(&self) -> Vec<FrequencyRecord> {
        self.groups
            .iter()
            .flat_map(|(&(ti, mi), group)| {
                group.cells.iter().map(move |(state, cell)| FrequencyRecord {
                    temperature: self.temperatures[ti].label.clone(),
                    menu_id: self.menus[mi].id.clone(),
                    state: state.clone(),
                    frequency: cell.freq,
                })
            })
            .collect()
    }

    /// The odds curve `t ↦ r_t(a, b)` with its class.
    pub fn odds_curve(&self, a: &str, b: &str, cfg: &ToleranceConfig) -> Result<OddsCurve, ModelError> {
        let mut samples = Vec::new();
        let mut dropped = Vec::new();
        for (ti, t) in self.temperatures.iter().enumerate() {
            match self.log_odds(ti, a, b) {
                Some(lo) => samples.push(OddsSample {
                    temperature: t.value,
                    label: t.label.clone(),
                    ratio: lo.value.exp(),
                    log_odds: lo.value,
                    stderr: lo.stderr,
                }),
                None => {
                    let observed = self
                        .binary_menu(a, b)
                        .is_some_and(|mi| self.group(ti, mi).is_some());
                    if observed {
                        dropped.push(t.label.clone());
                    }
                }
            }
        }
        if samples.len() < cfg.min_samples {
            return Err(ModelError::InsufficientData {
                a: a.to_string(),
                b: b.to_string(),
                found: samples.len(),
                needed: cfg.min_samples,
            });
        }
        let mut curve = OddsCurve {
            pair: (a.to_string(), b.to_string()),
            samples,
            dropped,
            class: OddsClass::Unclassified,
        };
        curve.class = if a == b {
            OddsClass::ConstantOne
        } else {
            let fit = trend::classify(&curve.observations(), cfg.alpha);
            match fit.class {
                TrendClass::Diverging => OddsClass::IncreasingToInfinity,
                TrendClass::Vanishing => OddsClass::DecreasingToZero,
                TrendClass::Flat if fit.level_is_zero(cfg.alpha) => OddsClass::ConstantOne,
                _ => OddsClass::Unclassified,
            }
        };
        Ok(curve)
    }
}

/// Behavior of `β ↦ r_{1/β}(a, b)` as `β` grows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OddsClass {
    IncreasingToInfinity,
    ConstantOne,
    DecreasingToZero,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OddsSample {
    pub temperature: f64,
    pub label: String,
    pub ratio: f64,
    pub log_odds: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OddsCurve {
    pub pair: (String, String),
    /// Usable samples in increasing temperature.
    pub samples: Vec<OddsSample>,
    /// Temperatures where the binary menu was observed but a zero cell made
    /// the odds unusable.
    pub dropped: Vec<String>,
    pub class: OddsClass,
}

impl OddsCurve {
    /// `logw(β) = ln r_{1/β}(a, b)` in increasing `β`.
    pub fn logw(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .rev()
            .map(|s| (1.0 / s.temperature, s.log_odds))
            .collect()
    }

    /// Samples as `(β, ln r, se)` observations in increasing `β`.
    pub fn observations(&self) -> Vec<Obs> {
        self.samples
            .iter()
            .rev()
            .map(|s| Obs {
                x: 1.0 / s.temperature,
                y: s.log_odds,
                se: s.stderr,
            })
            .collect()
    }
}

/// Odds curve with the default tolerance configuration.
pub fn odds_curve(rsf: &EmpiricalRsf, a: &str, b: &str) -> Result<OddsCurve, ModelError> {
    rsf.odds_curve(a, b, &ToleranceConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary(a: u64, b: u64) -> Vec<CountRecord> {
        vec![CountRecord::new("1.0", "M", "a", a), CountRecord::new("1.0", "M", "b", b)]
    }

    #[test]
    fn normalizes_counts_with_multinomial_stderr() {
        let rsf = build_empirical_rsf(&binary(73, 27)).unwrap();
        let (f, se) = rsf.frequency(1.0, "a", "M").unwrap();
        assert!((f - 0.73).abs() < 1e-15);
        assert!((se - 0.0443959).abs() < 1e-6);
    }

    #[test]
    fn rejects_duplicate_cells_with_row() {
        let recs = vec![CountRecord::new("1.0", "M", "a", 50), CountRecord::new("1.0", "M", "a", 10)];
        match build_empirical_rsf(&recs) {
            Err(ModelError::DuplicateCell { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_total_group() {
        let err = build_empirical_rsf(&binary(0, 0)).unwrap_err();
        assert!(matches!(err, ModelError::ZeroTotal { .. }));
    }

    #[test]
    fn distinct_tokens_with_equal_values_are_ambiguous() {
        let recs = vec![CountRecord::new("1", "M", "a", 1), CountRecord::new("1.0", "N", "a", 1)];
        assert!(matches!(
            build_empirical_rsf(&recs),
            Err(ModelError::AmbiguousTemperature { .. })
        ));
    }

    #[test]
    fn menus_must_keep_their_members() {
        let recs = vec![
            CountRecord::new("1", "M", "a", 1),
            CountRecord::new("1", "M", "b", 1),
            CountRecord::new("2", "M", "a", 1),
        ];
        assert!(matches!(
            build_empirical_rsf(&recs),
            Err(ModelError::InconsistentMenu { .. })
        ));
    }

    #[test]
    fn off_menu_and_singleton_frequencies() {
        let mut recs = binary(73, 27);
        recs.push(CountRecord::new("1.0", "S", "a", 9));
        let rsf = build_empirical_rsf(&recs).unwrap();
        assert_eq!(rsf.frequency(1.0, "c", "M").unwrap(), (0.0, 0.0));
        assert_eq!(rsf.frequency(1.0, "a", "S").unwrap(), (1.0, 0.0));
        assert!(matches!(rsf.frequency(2.0, "a", "M"), Err(ModelError::MissingCell { .. })));
    }

    #[test]
    fn conditional_frequency_edges() {
        let rsf = build_empirical_rsf(&binary(73, 27)).unwrap();
        assert!((rsf.conditional_frequency(1.0, &["a", "b"], "M").unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rsf.conditional_frequency(1.0, &[], "M").unwrap(), 0.0);
        assert!(matches!(
            rsf.conditional_frequency(1.0, &["z"], "M"),
            Err(ModelError::NotSubset { .. })
        ));
    }

    #[test]
    fn jeffreys_smoothing_makes_zero_cells_usable() {
        let rsf = build_empirical_rsf(&binary(10, 0)).unwrap();
        assert!(rsf.log_odds(0, "a", "b").is_none());
        let smoothed = rsf.with_smoothing(Smoothing::Jeffreys);
        let (f, _) = smoothed.frequency(1.0, "b", "M").unwrap();
        assert!((f - 0.5 / 11.0).abs() < 1e-15);
        assert!(smoothed.log_odds(0, "a", "b").is_some());
    }

    #[test]
    fn odds_curve_needs_three_samples() {
        let rsf = build_empirical_rsf(&binary(73, 27)).unwrap();
        assert!(matches!(
            odds_curve(&rsf, "a", "b"),
            Err(ModelError::InsufficientData { found: 1, .. })
        ));
    }

    fn grid_records(counts: &[(u64, u64)]) -> Vec<CountRecord> {
        let labels = ["0.5", "1", "2", "4"];
        counts
            .iter()
            .zip(labels)
            .flat_map(|(&(a, b), t)| [CountRecord::new(t, "ab", "a", a), CountRecord::new(t, "ab", "b", b)])
            .collect()
    }

    #[test]
    fn zero_cells_are_dropped_and_flagged() {
        let rsf = build_empirical_rsf(&grid_records(&[(100, 0), (90, 10), (80, 20), (70, 30)])).unwrap();
        let curve = odds_curve(&rsf, "a", "b").unwrap();
        assert_eq!(curve.samples.len(), 3);
        assert_eq!(curve.dropped, vec!["0.5".to_string()]);
    }

    #[test]
    fn singleton_pair_is_constant_one() {
        let rsf = build_empirical_rsf(&grid_records(&[(60, 40), (55, 45), (52, 48), (51, 49)])).unwrap();
        let curve = odds_curve(&rsf, "a", "a").unwrap();
        assert_eq!(curve.class, OddsClass::ConstantOne);
        assert!(curve.samples.iter().all(|s| s.ratio == 1.0));
    }

    #[test]
    fn logw_is_indexed_by_inverse_temperature() {
        let rsf = build_empirical_rsf(&grid_records(&[(60, 40), (55, 45), (52, 48), (51, 49)])).unwrap();
        let curve = odds_curve(&rsf, "a", "b").unwrap();
        for (beta, lw) in curve.logw() {
            let s = curve.samples.iter().find(|s| s.temperature == 1.0 / beta).unwrap();
            assert_eq!(lw, s.log_odds);
            assert!((s.ratio.ln() - s.log_odds).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TemperatureGrid::parse_list("0.25,0.5,1,2,4").is_ok());
        assert!(TemperatureGrid::parse_list("1,2").is_err());
        assert!(TemperatureGrid::parse_list("1,0.5,2").is_err());
        assert!(TemperatureGrid::parse_list("-1,1,2").is_err());
    }

    #[test]
    fn state_space_checks_ids_and_dimensions() {
        let s = |id: &str, c: Option<Vec<f64>>| State { id: id.into(), coords: c };
        assert!(StateSpace::new(vec![s("a", None), s("a", None)]).is_err());
        assert!(StateSpace::new(vec![s("a", Some(vec![0.0])), s("b", Some(vec![0.0, 1.0]))]).is_err());
        assert!(StateSpace::new(vec![s("a", Some(vec![0.0])), s("b", None)]).is_ok());
    }

    fn arb_records() -> impl Strategy<Value = Vec<CountRecord>> {
        let menus: Vec<(&str, Vec<&str>)> =
            vec![("ab", vec!["a", "b"]), ("bc", vec!["b", "c"]), ("abc", vec!["a", "b", "c"])];
        proptest::collection::vec(1u64..500, 3 * 7).prop_map(move |counts| {
            let mut it = counts.into_iter();
            let mut out = Vec::new();
            for t in ["0.5", "1", "2"] {
                for (m, members) in &menus {
                    for s in members {
                        out.push(CountRecord::new(t, *m, *s, it.next().unwrap()));
                    }
                }
            }
            out
        })
    }

    proptest! {
        #[test]
        fn frequencies_sum_to_one(records in arb_records()) {
            let rsf = build_empirical_rsf(&records).unwrap();
            for (_, _, g) in rsf.groups() {
                let sum: f64 = g.cells.values().map(|c| c.freq).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(g.cells.values().all(|c| c.freq >= 0.0));
            }
        }

        #[test]
        fn odds_are_antisymmetric(records in arb_records()) {
            let rsf = build_empirical_rsf(&records).unwrap();
            for ti in 0..rsf.temperatures().len() {
                let ab = rsf.log_odds(ti, "a", "b").unwrap();
                let ba = rsf.log_odds(ti, "b", "a").unwrap();
                prop_assert_eq!(ab.value, -ba.value);
                let product = ab.value.exp() * ba.value.exp();
                prop_assert!((product - 1.0).abs() <= 4.0 * f64::EPSILON);
            }
            let cfg = ToleranceConfig::default();
            let fwd = rsf.odds_curve("b", "c", &cfg).unwrap();
            let rev = rsf.odds_curve("c", "b", &cfg).unwrap();
            for ((b1, w1), (b2, w2)) in fwd.logw().into_iter().zip(rev.logw()) {
                prop_assert_eq!(b1, b2);
                prop_assert_eq!(w1, -w2);
            }
        }

        #[test]
        fn rebuild_from_records_is_exact(records in arb_records()) {
            let rsf = build_empirical_rsf(&records).unwrap();
            let again = build_empirical_rsf(&rsf.count_records().unwrap()).unwrap();
            prop_assert_eq!(rsf, again);
        }
    }
}
