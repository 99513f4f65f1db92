//! Concatenation operations on temperatures.
//!
//! Every continuous, associative, commutative and strictly monotone operation
//! on `[0, ∞)` with identity `0` has the form `t ⊕ s = f⁻¹(f(t) + f(s))` for a
//! strictly increasing bijection `f` with `f(0) = 0`. A [`ConcatGenerator`]
//! stores such an `f`, either in closed form or as a table of knots.
//!
//! A generator and a noise map describe the same object: `φ(v) = 1/κ(1/v)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boltzmann::{KappaTable, NoiseMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcatError {
    #[error("argument {value} outside the generator range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("negative argument {0}")]
    Negative(f64),
    #[error("invalid generator: {0}")]
    Invalid(String),
}

/// Tabulated generator: knots `(x, f(x))` with `x` and `f` both strictly
/// increasing and positive, plus the implicit point `f(0) = 0`.
///
/// Between knots the table is interpolated linearly in `(ln x, ln f)`. The
/// open gap `(0, x₀)` is outside the range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct GeneratorTable {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for GeneratorTable {
    type Error = ConcatError;
    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self, Self::Error> {
        Self::new(knots)
    }
}

impl From<GeneratorTable> for Vec<(f64, f64)> {
    fn from(t: GeneratorTable) -> Self {
        t.knots
    }
}

impl GeneratorTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, ConcatError> {
        if knots.len() < 2 {
            return Err(ConcatError::Invalid("a table needs at least two knots".into()));
        }
        if knots.iter().any(|&(x, f)| !(x > 0.0 && f > 0.0 && x.is_finite() && f.is_finite())) {
            return Err(ConcatError::Invalid("knots must be positive and finite".into()));
        }
        if let Some(w) = knots.windows(2).find(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1)) {
            return Err(ConcatError::Invalid(format!(
                "table is not strictly increasing between x = {} and x = {}",
                w[0].0, w[1].0
            )));
        }
        Ok(Self { knots })
    }

    /// Build without the monotonicity check. Only positivity and ordering of
    /// the abscissae are kept, so that broken tables can be fed to
    /// [`validate_concatenation`].
    pub fn new_unchecked(knots: Vec<(f64, f64)>) -> Self {
        Self { knots }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn lo(&self) -> f64 {
        self.knots[0].0
    }

    fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    fn eval(&self, x: f64) -> Result<f64, ConcatError> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let (lo, hi) = (self.lo(), self.hi());
        if !(lo..=hi).contains(&x) {
            return Err(ConcatError::OutOfRange { value: x, lo, hi });
        }
        Ok(loglog_interp(&self.knots, x))
    }

    /// Inverse by bisection on `[x₀, x_max]`.
    fn inverse(&self, y: f64) -> Result<f64, ConcatError> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let (flo, fhi) = (self.knots[0].1, self.knots[self.knots.len() - 1].1);
        if !(flo..=fhi).contains(&y) {
            return Err(ConcatError::OutOfRange {
                value: y,
                lo: flo,
                hi: fhi,
            });
        }
        if let Some(&(x, _)) = self.knots.iter().find(|k| k.1 == y) {
            return Ok(x);
        }
        let (mut a, mut b) = (self.lo(), self.hi());
        while b - a > 1e-12 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if loglog_interp(&self.knots, mid) < y {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }
}

/// Piecewise-linear interpolation in `(ln x, ln y)`; exact at the knots.
/// `x` must lie within the knot range.
pub(crate) fn loglog_interp(knots: &[(f64, f64)], x: f64) -> f64 {
    let i = knots.partition_point(|k| k.0 < x);
    if i < knots.len() && knots[i].0 == x {
        return knots[i].1;
    }
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    let w = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
    (y0.ln() + w * (y1.ln() - y0.ln())).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum GeneratorShape {
    /// `x`
    Identity,
    /// `ln(1 + η x)`, giving `t ⊕ s = t + s + η t s`
    Log1p { eta: f64 },
    /// `x^η`, giving `t ⊕ s = (t^η + s^η)^{1/η}`
    Power { eta: f64 },
    Table { knots: GeneratorTable },
}

/// The generator `f(x) = scale · shape(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatGenerator {
    pub shape: GeneratorShape,
    pub scale: f64,
}

impl ConcatGenerator {
    pub fn identity() -> Self {
        Self {
            shape: GeneratorShape::Identity,
            scale: 1.0,
        }
    }

    /// `f(x) = x / k`, the generator dual to `κ(t) = k t`.
    pub fn identity_over(k: f64) -> Result<Self, ConcatError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(ConcatError::Invalid(format!("scale k = {k} must be positive")));
        }
        Ok(Self {
            shape: GeneratorShape::Identity,
            scale: 1.0 / k,
        })
    }

    pub fn log1p(eta: f64) -> Result<Self, ConcatError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ConcatError::Invalid(format!("eta = {eta} must be positive")));
        }
        Ok(Self {
            shape: GeneratorShape::Log1p { eta },
            scale: 1.0,
        })
    }

    pub fn power(eta: f64) -> Result<Self, ConcatError> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(ConcatError::Invalid(format!("eta = {eta} must be positive")));
        }
        Ok(Self {
            shape: GeneratorShape::Power { eta },
            scale: 1.0,
        })
    }

    pub fn table(table: GeneratorTable) -> Self {
        Self {
            shape: GeneratorShape::Table { knots: table },
            scale: 1.0,
        }
    }

    /// Same generator multiplied by `m > 0`; induces the same operation.
    pub fn scaled(&self, m: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            scale: self.scale * m,
        }
    }

    /// Domain of the generator: `[0, ∞)` for closed forms, `{0} ∪ [x₀, x_max]`
    /// for tables.
    pub fn range(&self) -> (f64, f64) {
        match &self.shape {
            GeneratorShape::Table { knots } => (knots.lo(), knots.hi()),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, ConcatError> {
        if x < 0.0 || x.is_nan() {
            return Err(ConcatError::Negative(x));
        }
        let base = match &self.shape {
            GeneratorShape::Identity => x,
            GeneratorShape::Log1p { eta } => (eta * x).ln_1p(),
            GeneratorShape::Power { eta } => x.powf(*eta),
            GeneratorShape::Table { knots } => knots.eval(x)?,
        };
        Ok(self.scale * base)
    }

    pub fn inverse(&self, y: f64) -> Result<f64, ConcatError> {
        if y < 0.0 || y.is_nan() {
            return Err(ConcatError::Negative(y));
        }
        let y = y / self.scale;
        Ok(match &self.shape {
            GeneratorShape::Identity => y,
            GeneratorShape::Log1p { eta } => y.exp_m1() / eta,
            GeneratorShape::Power { eta } => y.powf(1.0 / eta),
            GeneratorShape::Table { knots } => knots.inverse(y)?,
        })
    }

    /// Canonical representative with `f(1) = 1`. Tables that do not cover 1
    /// are normalized at their last knot instead.
    pub fn normalized(&self) -> Self {
        let anchor = match &self.shape {
            GeneratorShape::Table { knots } if !(knots.lo()..=knots.hi()).contains(&1.0) => knots.hi(),
            _ => 1.0,
        };
        match self.eval(anchor) {
            Ok(v) if v > 0.0 => self.scaled(1.0 / v),
            _ => self.clone(),
        }
    }

    /// `t ⊕ s = f⁻¹(f(t) + f(s))`.
    pub fn apply(&self, t: f64, s: f64) -> Result<f64, ConcatError> {
        self.inverse(self.eval(t)? + self.eval(s)?)
    }

    /// The closed form of `t ⊕ s` for analytic shapes, independent of the
    /// generator evaluation path.
    pub fn closed_form(&self, t: f64, s: f64) -> Option<f64> {
        match &self.shape {
            GeneratorShape::Identity => Some(t + s),
            GeneratorShape::Log1p { eta } => Some(t + s + eta * t * s),
            GeneratorShape::Power { eta } => Some((t.powf(*eta) + s.powf(*eta)).powf(1.0 / eta)),
            GeneratorShape::Table { .. } => None,
        }
    }
}

pub fn concat_apply(g: &ConcatGenerator, t: f64, s: f64) -> Result<f64, ConcatError> {
    g.apply(t, s)
}

/// Generator dual to a noise map: `φ(v) = 1/κ(1/v)`.
pub fn generator_from_kappa(noise: &NoiseMap) -> Result<ConcatGenerator, ConcatError> {
    match noise {
        NoiseMap::Parametric { k } => ConcatGenerator::identity_over(*k),
        NoiseMap::Generator { generator } => Ok(generator.clone()),
        NoiseMap::Tabulated { table } => {
            let knots = table
                .points()
                .iter()
                .rev()
                .map(|&(t, kappa)| (1.0 / t, 1.0 / kappa))
                .collect();
            Ok(ConcatGenerator::table(GeneratorTable::new(knots)?))
        }
    }
}

/// Noise map dual to a generator: `κ(t) = 1/f(1/t)`.
pub fn kappa_from_generator(g: &ConcatGenerator) -> Result<NoiseMap, ConcatError> {
    match &g.shape {
        GeneratorShape::Identity => Ok(NoiseMap::Parametric { k: 1.0 / g.scale }),
        GeneratorShape::Table { knots } => {
            let points = knots
                .knots()
                .iter()
                .rev()
                .map(|&(x, f)| (1.0 / x, 1.0 / (g.scale * f)))
                .collect();
            let table = KappaTable::new(points).map_err(|e| ConcatError::Invalid(e.to_string()))?;
            Ok(NoiseMap::Tabulated { table })
        }
        _ => Ok(NoiseMap::Generator { generator: g.clone() }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcatProperty {
    Associativity,
    Commutativity,
    Identity,
    Monotonicity,
    Inversion,
}

/// A triple `(t, s, v)` on which a contract failed, with both sides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatWitness {
    pub property: ConcatProperty,
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatVerdict {
    pub pass: bool,
    pub trials: usize,
    pub witness: Option<ConcatWitness>,
}

const REL_TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

/// Check the operation contract on random nonnegative triples.
///
/// Table generators are additionally probed at every knot, which is where a
/// corrupted table breaks the inverse.
pub fn validate_concatenation(g: &ConcatGenerator, trials: usize, seed: u64) -> ConcatVerdict {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (lo, hi) = g.range();
    // keep sums of three arguments inside the table
    let upper = if hi.is_finite() {
        g.eval(hi)
            .and_then(|fh| g.inverse(fh / 3.0))
            .unwrap_or(lo)
            .max(lo)
    } else {
        10.0
    };
    let lower = if hi.is_finite() { lo } else { 0.0 };
    let draw = |rng: &mut ChaCha20Rng| {
        if upper > lower {
            rng.random_range(lower..upper)
        } else {
            lower
        }
    };
    let mut triples: Vec<(f64, f64, f64)> = (0..trials)
        .map(|_| (draw(&mut rng), draw(&mut rng), draw(&mut rng)))
        .collect();
    if let GeneratorShape::Table { knots } = &g.shape {
        let xs: Vec<f64> = knots.knots().iter().map(|k| k.0).collect();
        for w in xs.windows(2) {
            triples.push((w[1], w[0], 0.0));
        }
        if let Some(&last) = xs.last() {
            triples.push((last, last, 0.0));
        }
    }
    let mut checked = 0;
    for &(t, s, v) in &triples {
        checked += 1;
        if let Some(w) = check_triple(g, t, s, v) {
            return ConcatVerdict {
                pass: false,
                trials: checked,
                witness: Some(w),
            };
        }
    }
    ConcatVerdict {
        pass: true,
        trials: checked,
        witness: None,
    }
}

fn check_triple(g: &ConcatGenerator, t: f64, s: f64, v: f64) -> Option<ConcatWitness> {
    let w = |property, lhs, rhs| ConcatWitness {
        property,
        t,
        s,
        v,
        lhs,
        rhs,
    };
    for x in [t, s] {
        if let Ok(back) = g.eval(x).and_then(|fx| g.inverse(fx)) {
            if !close(back, x) {
                return Some(w(ConcatProperty::Inversion, back, x));
            }
        }
    }
    let op = |a: f64, b: f64| g.apply(a, b).ok();
    if let (Some(ts), Some(st)) = (op(t, s), op(s, t)) {
        if !close(ts, st) {
            return Some(w(ConcatProperty::Commutativity, ts, st));
        }
    }
    if let Some(t0) = op(t, 0.0) {
        if !close(t0, t) {
            return Some(w(ConcatProperty::Identity, t0, t));
        }
    }
    if let (Some(left), Some(right)) = (
        op(t, s).and_then(|ts| op(ts, v)),
        op(s, v).and_then(|sv| op(t, sv)),
    ) {
        if !close(left, right) {
            return Some(w(ConcatProperty::Associativity, left, right));
        }
    }
    let (big, small) = if t >= s { (t, s) } else { (s, t) };
    if v > 0.0 && big - small > 1e-6 * big {
        if let (Some(bv), Some(sv)) = (op(big, v), op(small, v)) {
            if bv <= sv {
                return Some(ConcatWitness {
                    property: ConcatProperty::Monotonicity,
                    t: big,
                    s: small,
                    v,
                    lhs: bv,
                    rhs: sv,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_examples() {
        assert_eq!(concat_apply(&ConcatGenerator::identity(), 2.0, 3.0).unwrap(), 5.0);
        let l = ConcatGenerator::log1p(1.0).unwrap();
        assert!((concat_apply(&l, 2.0, 3.0).unwrap() - 11.0).abs() < 1e-12);
        let p = ConcatGenerator::power(2.0).unwrap();
        assert!((concat_apply(&p, 3.0, 4.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn supported_forms_validate() {
        for g in [
            ConcatGenerator::identity(),
            ConcatGenerator::log1p(1.0).unwrap(),
            ConcatGenerator::power(3.0).unwrap(),
        ] {
            let v = validate_concatenation(&g, 1000, 11);
            assert!(v.pass, "{g:?}: {v:?}");
        }
    }

    #[test]
    fn corrupted_table_fails_with_witness() {
        let bad = GeneratorTable::new_unchecked(vec![(1.0, 1.0), (2.0, 4.0), (3.0, 3.0), (4.0, 16.0)]);
        assert!(GeneratorTable::new(bad.knots().to_vec()).is_err());
        let v = validate_concatenation(&ConcatGenerator::table(bad), 200, 3);
        assert!(!v.pass);
        assert!(v.witness.is_some());
    }

    #[test]
    fn table_refuses_out_of_range_arguments() {
        let g = ConcatGenerator::table(GeneratorTable::new(vec![(1.0, 1.0), (2.0, 4.0)]).unwrap());
        assert!(matches!(g.apply(2.0, 2.0), Err(ConcatError::OutOfRange { .. })));
        assert!(matches!(g.eval(0.5), Err(ConcatError::OutOfRange { .. })));
        assert!((g.apply(1.5, 0.0).unwrap() - 1.5).abs() < 1e-11);
    }

    #[test]
    fn kappa_duality_examples() {
        let g = generator_from_kappa(&NoiseMap::Parametric { k: 2.0 }).unwrap();
        assert!((g.eval(3.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((g.apply(2.0, 3.0).unwrap() - 5.0).abs() < 1e-12);
        let k = kappa_from_generator(&ConcatGenerator::power(2.0).unwrap()).unwrap();
        assert!((k.kappa(3.0).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_square_kappa_reproduces_euclidean_sum() {
        let points: Vec<(f64, f64)> = (0..=80).map(|i| 0.1 * 1.05f64.powi(i)).map(|t| (t, t * t)).collect();
        let table = KappaTable::new(points).unwrap();
        let g = generator_from_kappa(&NoiseMap::Tabulated { table }).unwrap();
        for (t, s) in [(0.5, 0.7), (1.0, 1.0), (0.3, 2.0)] {
            let got = g.apply(t, s).unwrap();
            let want = (t * t + s * s).sqrt();
            assert!((got - want).abs() <= 1e-6 * want, "{t} {s}: {got} vs {want}");
        }
    }

    #[test]
    fn normalization_fixes_value_at_one() {
        let g = ConcatGenerator::log1p(2.0).unwrap().scaled(7.0).normalized();
        assert!((g.eval(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    fn arb_generator() -> impl Strategy<Value = ConcatGenerator> {
        prop_oneof![
            (0.1f64..10.0).prop_map(|k| ConcatGenerator::identity_over(k).unwrap()),
            (0.1f64..3.0).prop_map(|e| ConcatGenerator::log1p(e).unwrap()),
            (0.3f64..4.0).prop_map(|e| ConcatGenerator::power(e).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn scale_does_not_change_the_operation(g in arb_generator(), m in 0.01f64..100.0,
                                               t in 0.0f64..10.0, s in 0.0f64..10.0) {
            let a = g.apply(t, s).unwrap();
            let b = g.scaled(m).apply(t, s).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300));
        }

        #[test]
        fn generator_and_kappa_are_inverse(g in arb_generator(), x in 0.01f64..20.0) {
            let back = generator_from_kappa(&kappa_from_generator(&g).unwrap()).unwrap();
            let (a, b) = (g.eval(x).unwrap(), back.eval(x).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a.abs());
        }

        #[test]
        fn contract_holds_on_random_triples(g in arb_generator(), seed in any::<u64>()) {
            prop_assert!(validate_concatenation(&g, 50, seed).pass);
        }
    }
}
