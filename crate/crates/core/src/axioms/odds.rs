//! Checks on the shape of binary log-odds curves across temperatures:
//! boundedness, weak boundedness, monotonicity and concatenation.
//!
//! Under a softmax representation `ln r_{1/β}(a, b) = −ΔE · φ(β)`, so every
//! curve is proportional to the common generator `φ`. The checks here test
//! that proportionality against a known regressor (`β`, or a supplied `φ`)
//! or across pairs of curves.

use crate::concat::ConcatGenerator;
use crate::model::{EmpiricalRsf, OddsCurve};
use crate::recovery::{self, Pivot, RecoveryError};
use crate::stats::{self, Obs, Paired};

use super::{binary_curves, Axiom, AxiomOutcome, ToleranceConfig, Verdict, Witness};

struct LackOfFit {
    regressor: Vec<(String, f64)>,
    coefficient: f64,
    chi2: f64,
    df: usize,
}

/// Zero-intercept weighted fit of log-odds on `regressor(β)`.
fn lack_of_fit(curve: &OddsCurve, regressor: impl Fn(f64) -> Option<f64>) -> Option<LackOfFit> {
    let mut xs = Vec::new();
    let mut obs = Vec::new();
    for s in &curve.samples {
        if let Some(x) = regressor(1.0 / s.temperature) {
            xs.push((s.label.clone(), x));
            obs.push(Obs {
                x,
                y: s.log_odds,
                se: s.stderr,
            });
        }
    }
    fit_through_origin(&obs).map(|(coefficient, chi2)| LackOfFit {
        regressor: xs,
        coefficient,
        chi2,
        df: obs.len() - 1,
    })
}

fn fit_through_origin(obs: &[Obs]) -> Option<(f64, f64)> {
    if obs.len() < 2 {
        return None;
    }
    let pairs: Vec<Paired> = obs
        .iter()
        .map(|o| Paired {
            x: o.x,
            x_se: 0.0,
            y: o.y,
            y_se: o.se,
        })
        .collect();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for o in obs {
        let w = 1.0 / (o.se * o.se);
        sxy += w * o.x * o.y;
        sxx += w * o.x * o.x;
    }
    let c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Some((c, stats::proportional_chi2(&pairs, c)))
}

/// Pick the test whose statistic exceeds its own critical value by the
/// largest factor, then decide.
fn decide_chi2(axiom: Axiom, cases: Vec<(f64, f64, Witness)>) -> AxiomOutcome {
    let tests = cases.len();
    let worst = cases.into_iter().max_by(|a, b| (a.0 / a.1).total_cmp(&(b.0 / b.1)));
    let Some((chi2, crit, witness)) = worst else {
        return AxiomOutcome::new(axiom, Verdict::Inconclusive).note("no pair with enough samples");
    };
    let fail = chi2 > crit;
    AxiomOutcome {
        axiom,
        verdict: if fail { Verdict::Fail } else { Verdict::Pass },
        statistic: super::finite(chi2),
        threshold: super::finite(crit),
        tests,
        witness: fail.then_some(witness),
        note: None,
    }
}

fn regression_check(
    axiom: Axiom,
    rsf: &EmpiricalRsf,
    cfg: &ToleranceConfig,
    regressor: impl Fn(f64) -> Option<f64>,
) -> AxiomOutcome {
    let (curves, _) = binary_curves(rsf, cfg);
    let fits: Vec<(&OddsCurve, LackOfFit)> = curves
        .iter()
        .filter_map(|c| lack_of_fit(c, &regressor).map(|f| (c, f)))
        .collect();
    let n = fits.len();
    let cases = fits
        .into_iter()
        .map(|(c, f)| {
            let crit = stats::chi2_upper(cfg.alpha / n as f64, f.df);
            let w = Witness::LackOfFit {
                a: c.pair.0.clone(),
                b: c.pair.1.clone(),
                regressor: f.regressor,
                coefficient: f.coefficient,
                chi2: f.chi2,
                df: f.df,
            };
            (f.chi2, crit, w)
        })
        .collect();
    decide_chi2(axiom, cases)
}

/// Boundedness: every log-odds curve is a line through the origin in
/// inverse temperature. The fitted slope estimates `−ΔE/k`.
pub fn check_boundedness(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    regression_check(Axiom::Boundedness, rsf, cfg, Some)
}

/// Weak boundedness for a given generator: log-odds proportional to `f(β)`.
/// Temperatures outside the generator's range are skipped.
pub fn check_weak_boundedness(rsf: &EmpiricalRsf, g: &ConcatGenerator, cfg: &ToleranceConfig) -> AxiomOutcome {
    regression_check(Axiom::WeakBoundedness, rsf, cfg, |beta| g.eval(beta).ok())
}

/// Log-odds of the pivot pair at every temperature, oriented so the pivot's
/// own value is positive.
fn pivot_series(rsf: &EmpiricalRsf, pivot: &Pivot) -> Vec<(usize, f64, f64)> {
    (0..rsf.temperatures().len())
        .filter_map(|ti| {
            rsf.log_odds_with_source(ti, &pivot.c, &pivot.d)
                .map(|(lo, _)| (ti, lo.value, lo.stderr))
        })
        .collect()
}

/// Weak boundedness against the generator recovered from the data.
///
/// The recovered generator is `φ(β) ∝ ln r_{1/β}(c̄, d̄)` for the pivot pair,
/// so the check first requires that this curve is a valid generator
/// (positive and decreasing in temperature), then tests every other binary
/// curve for proportionality to it, allowing for noise on both sides.
/// Families without any strict preference use the identity generator.
pub fn check_weak_boundedness_recovered(
    rsf: &EmpiricalRsf,
    cfg: &ToleranceConfig,
) -> (AxiomOutcome, Option<ConcatGenerator>, Option<Pivot>) {
    let pivot = match recovery::select_pivot(rsf, cfg) {
        Ok(p) => p,
        Err(RecoveryError::UniformFamily) => {
            let g = ConcatGenerator::identity();
            let out = check_weak_boundedness(rsf, &g, cfg).note("no strict preference: identity generator");
            return (out, Some(g), None);
        }
        Err(e) => {
            let out = AxiomOutcome::new(Axiom::WeakBoundedness, Verdict::Inconclusive).note(e.to_string());
            return (out, None, None);
        }
    };
    let series = pivot_series(rsf, &pivot);
    let label = |ti: usize| rsf.temperatures()[ti].label.clone();

    let checks = series.len() + series.len().saturating_sub(1);
    let crit = stats::z_one_sided(cfg.alpha, checks);
    let mut invalid = None::<Witness>;
    let mut doubtful = false;
    let mut flag = |z: f64, w: &dyn Fn() -> Witness| {
        if z > crit {
            if invalid.as_ref().is_none_or(|old| z > old.value()) {
                invalid = Some(w());
            }
        } else if z >= 0.0 {
            doubtful = true;
        }
    };
    for &(ti, l, se) in &series {
        let z = -l / se;
        flag(z, &|| Witness::GeneratorSign {
            c: pivot.c.clone(),
            d: pivot.d.clone(),
            pivot: pivot.label.clone(),
            temperature: label(ti),
            z,
        });
    }
    for w in series.windows(2) {
        let (ti, li, si) = w[0];
        let (tj, lj, sj) = w[1];
        let z = (lj - li) / si.hypot(sj);
        flag(z, &|| Witness::GeneratorOrder {
            c: pivot.c.clone(),
            d: pivot.d.clone(),
            lower: label(ti),
            upper: label(tj),
            z,
        });
    }
    if let Some(w) = invalid {
        let out = AxiomOutcome {
            axiom: Axiom::WeakBoundedness,
            verdict: Verdict::Fail,
            statistic: Some(w.value()),
            threshold: super::finite(crit),
            tests: checks,
            witness: Some(w),
            note: Some("recovered noise map is not an increasing positive function".into()),
        };
        return (out, None, Some(pivot));
    }
    if doubtful {
        let out = AxiomOutcome::new(Axiom::WeakBoundedness, Verdict::Inconclusive)
            .note("recovered noise map is not increasing within noise");
        return (out, None, Some(pivot));
    }

    let generator = recovery::recover_kappa(rsf, &pivot)
        .ok()
        .and_then(|k| recovery::identify_concatenation(&k.table().ok()?).ok());

    let (curves, _) = binary_curves(rsf, cfg);
    let reference = (pivot.c.clone(), pivot.d.clone());
    let others: Vec<&OddsCurve> = curves
        .iter()
        .filter(|c| !same_pair(&c.pair, &reference))
        .collect();
    let fits: Vec<_> = others
        .iter()
        .filter_map(|c| proportionality(rsf, &c.pair, &reference).map(|f| (c, f)))
        .collect();
    let n = fits.len();
    let cases: Vec<_> = fits
        .into_iter()
        .map(|(c, (coefficient, chi2, df))| {
            let crit = stats::chi2_upper(cfg.alpha / n as f64, df);
            let w = Witness::Proportionality {
                pair: c.pair.clone(),
                reference: reference.clone(),
                coefficient,
                chi2,
                df,
            };
            (chi2, crit, w)
        })
        .collect();
    let out = if cases.is_empty() {
        AxiomOutcome::new(Axiom::WeakBoundedness, Verdict::Pass).note("single strict pair: recovered generator fits exactly")
    } else {
        decide_chi2(Axiom::WeakBoundedness, cases).note("generator recovered from the pivot pair")
    };
    (out, generator, Some(pivot))
}

fn same_pair(p: &(String, String), q: &(String, String)) -> bool {
    (p.0 == q.0 && p.1 == q.1) || (p.0 == q.1 && p.1 == q.0)
}

/// Errors-in-variables fit `ln r(pair) ≈ c · ln r(reference)` over shared
/// temperatures: `(c, χ², df)`.
fn proportionality(rsf: &EmpiricalRsf, pair: &(String, String), reference: &(String, String)) -> Option<(f64, f64, usize)> {
    let points: Vec<Paired> = (0..rsf.temperatures().len())
        .filter_map(|ti| {
            let y = rsf.log_odds(ti, &pair.0, &pair.1)?;
            let (x, _) = rsf.log_odds_with_source(ti, &reference.0, &reference.1)?;
            Some(Paired {
                x: x.value,
                x_se: x.stderr,
                y: y.value,
                y_se: y.stderr,
            })
        })
        .collect();
    if points.len() < 2 {
        return None;
    }
    let fit = stats::fit_proportional(&points);
    Some((fit.coefficient, fit.chi2, fit.df))
}

/// Monotonicity: odds approach one as temperature grows, and a significant
/// preference at `t` is stronger at every colder `s < t`.
pub fn check_monotonicity(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    let (curves, _) = binary_curves(rsf, cfg);
    if curves.is_empty() {
        return AxiomOutcome::new(Axiom::Monotonicity, Verdict::Inconclusive).note("no binary menus observed");
    }
    let tests: usize = curves.iter().map(|c| c.samples.len() * c.samples.len().saturating_sub(1) / 2).sum();
    let crit = stats::z_one_sided(cfg.alpha, tests.max(1));
    let mut order_witness: Option<Witness> = None;
    let mut limit_witness: Option<Witness> = None;
    for curve in &curves {
        let s = &curve.samples;
        for j in 1..s.len() {
            let zj = s[j].log_odds / s[j].stderr;
            if zj.abs() <= crit {
                continue;
            }
            let o = zj.signum();
            for i in 0..j {
                let z = o * (s[j].log_odds - s[i].log_odds) / s[i].stderr.hypot(s[j].stderr);
                if z > crit && order_witness.as_ref().is_none_or(|w| z > w.value()) {
                    order_witness = Some(oriented_order(curve, i, j, o, z));
                }
            }
        }
        let n = s.len();
        if n >= 2 {
            let (prev, last) = (&s[n - 2], &s[n - 1]);
            let zl = last.log_odds / last.stderr;
            let o = zl.signum();
            let z = o * (last.log_odds - prev.log_odds) / prev.stderr.hypot(last.stderr);
            if zl.abs() > crit && z >= 0.0 && limit_witness.is_none() {
                let (a, b) = orient(curve, o);
                limit_witness = Some(Witness::OddsLimit {
                    a,
                    b,
                    previous: prev.label.clone(),
                    last: last.label.clone(),
                    z,
                });
            }
        }
    }
    let witness = order_witness.or(limit_witness);
    AxiomOutcome {
        axiom: Axiom::Monotonicity,
        verdict: if witness.is_some() { Verdict::Fail } else { Verdict::Pass },
        statistic: witness.as_ref().map(Witness::value),
        threshold: super::finite(crit),
        tests,
        witness,
        note: None,
    }
}

fn orient(curve: &OddsCurve, o: f64) -> (String, String) {
    if o >= 0.0 {
        (curve.pair.0.clone(), curve.pair.1.clone())
    } else {
        (curve.pair.1.clone(), curve.pair.0.clone())
    }
}

fn oriented_order(curve: &OddsCurve, i: usize, j: usize, o: f64, z: f64) -> Witness {
    let (a, b) = orient(curve, o);
    Witness::OddsOrder {
        a,
        b,
        earlier: curve.samples[i].label.clone(),
        later: curve.samples[j].label.clone(),
        z,
    }
}

/// Concatenation: all strict log-odds curves are proportional to each other.
pub fn check_concatenation_axiom(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    let (curves, _) = binary_curves(rsf, cfg);
    let samples: usize = curves.iter().map(|c| c.samples.len()).sum();
    let crit = stats::z_two_sided(cfg.alpha, samples.max(1));
    let strict: Vec<&OddsCurve> = curves
        .iter()
        .filter(|c| c.samples.iter().any(|s| (s.log_odds / s.stderr).abs() > crit))
        .collect();
    if strict.len() < 2 {
        return AxiomOutcome::new(Axiom::Concatenation, Verdict::Inconclusive)
            .note("fewer than two pairs with a strict preference");
    }
    let mut fits = Vec::new();
    for (i, p) in strict.iter().enumerate() {
        for q in &strict[i + 1..] {
            if let Some(f) = proportionality(rsf, &p.pair, &q.pair) {
                fits.push((p.pair.clone(), q.pair.clone(), f));
            }
        }
    }
    let n = fits.len();
    let cases = fits
        .into_iter()
        .map(|(pair, reference, (coefficient, chi2, df))| {
            let crit = stats::chi2_upper(cfg.alpha / n as f64, df);
            (
                chi2,
                crit,
                Witness::Proportionality {
                    pair,
                    reference,
                    coefficient,
                    chi2,
                    df,
                },
            )
        })
        .collect();
    decide_chi2(Axiom::Concatenation, cases)
}

pub(super) fn reevaluate(rsf: &EmpiricalRsf, witness: &Witness) -> Option<f64> {
    let ti_of = |label: &str| rsf.temperatures().iter().position(|t| t.label == label);
    let lo = |label: &str, a: &str, b: &str| rsf.log_odds(ti_of(label)?, a, b);
    match witness {
        Witness::LackOfFit { a, b, regressor, .. } => {
            let obs = regressor
                .iter()
                .map(|(label, x)| {
                    let l = lo(label, a, b)?;
                    Some(Obs {
                        x: *x,
                        y: l.value,
                        se: l.stderr,
                    })
                })
                .collect::<Option<Vec<_>>>()?;
            fit_through_origin(&obs).map(|f| f.1)
        }
        Witness::Proportionality { pair, reference, .. } => proportionality(rsf, pair, reference).map(|f| f.1),
        Witness::OddsOrder {
            a, b, earlier, later, ..
        } => {
            let (s, t) = (lo(earlier, a, b)?, lo(later, a, b)?);
            Some((t.value - s.value) / s.stderr.hypot(t.stderr))
        }
        Witness::OddsLimit {
            a, b, previous, last, ..
        } => {
            let (p, l) = (lo(previous, a, b)?, lo(last, a, b)?);
            Some((l.value - p.value) / p.stderr.hypot(l.stderr))
        }
        Witness::GeneratorSign { c, d, temperature, .. } => {
            let (l, _) = rsf.log_odds_with_source(ti_of(temperature)?, c, d)?;
            Some(-l.value / l.stderr)
        }
        Witness::GeneratorOrder { c, d, lower, upper, .. } => {
            let (i, _) = rsf.log_odds_with_source(ti_of(lower)?, c, d)?;
            let (j, _) = rsf.log_odds_with_source(ti_of(upper)?, c, d)?;
            Some((j.value - i.value) / i.stderr.hypot(j.stderr))
        }
        _ => None,
    }
}
