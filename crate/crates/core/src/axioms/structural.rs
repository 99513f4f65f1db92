//! Positivity and conditioning: checks on individual menus and on nested
//! menu pairs at a common temperature.

use crate::model::{EmpiricalRsf, Group, STDERR_FLOOR};
use crate::stats;

use super::{Axiom, AxiomOutcome, ToleranceConfig, Tracker, Verdict, Witness};

/// Every in-menu frequency is strictly positive and every menu sums to one.
pub fn check_positivity(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    let mut min_freq = f64::INFINITY;
    let mut cells = 0;
    for (ti, mi, group) in rsf.groups() {
        let label = || rsf.temperatures()[ti].label.clone();
        let menu = || rsf.menus()[mi].id.clone();
        let sum: f64 = group.cells.values().map(|c| c.freq).sum();
        if (sum - 1.0).abs() > cfg.sum_tol {
            return fail_with(
                cells,
                Witness::MenuSum {
                    temperature: label(),
                    menu: menu(),
                    deviation: (sum - 1.0).abs(),
                },
            );
        }
        for (state, cell) in &group.cells {
            cells += 1;
            min_freq = min_freq.min(cell.freq);
            if cell.freq <= 0.0 {
                return fail_with(
                    cells,
                    Witness::Cell {
                        temperature: label(),
                        menu: menu(),
                        state: state.clone(),
                        frequency: cell.freq,
                    },
                );
            }
        }
    }
    AxiomOutcome {
        axiom: Axiom::Positivity,
        verdict: if cells == 0 { Verdict::Inconclusive } else { Verdict::Pass },
        statistic: super::finite(min_freq),
        threshold: Some(0.0),
        tests: cells,
        witness: None,
        note: None,
    }
}

fn fail_with(tests: usize, witness: Witness) -> AxiomOutcome {
    AxiomOutcome {
        axiom: Axiom::Positivity,
        verdict: Verdict::Fail,
        statistic: Some(witness.value()),
        threshold: Some(0.0),
        tests,
        witness: Some(witness),
        note: None,
    }
}

/// Standardized deviation of `p(b|A) − p(b|B)·p(B|A)`.
///
/// Both groups are independent multinomial samples; the variance is the
/// delta-method combination of the two. Exact groups contribute nothing and
/// the result is floored.
fn nesting_z(sub: &Group, sup: &Group, state: &str, rsf: &EmpiricalRsf) -> f64 {
    let p_b_sub = sub.cells[state].freq;
    let p_sub_sup: f64 = sub.cells.keys().map(|s| sup.cells[s].freq).sum();
    let diff = sup.cells[state].freq - p_b_sub * p_sub_sup;

    let mut var = 0.0;
    if let Some(n) = sub.effective_total(rsf.smoothing()) {
        var += p_sub_sup * p_sub_sup * p_b_sub * (1.0 - p_b_sub) / n;
    }
    if let Some(n) = sup.effective_total(rsf.smoothing()) {
        // gradient of the difference with respect to the superset frequencies
        let grad = |s: &str| {
            if s == state {
                1.0 - p_b_sub
            } else if sub.cells.contains_key(s) {
                -p_b_sub
            } else {
                0.0
            }
        };
        let (mut m1, mut m2) = (0.0, 0.0);
        for (s, c) in &sup.cells {
            let g = grad(s);
            m1 += g * c.freq;
            m2 += g * g * c.freq;
        }
        var += (m2 - m1 * m1).max(0.0) / n;
    }
    diff / var.sqrt().max(STDERR_FLOOR)
}

/// Nested menus `B ⊊ A` with `|B| ≥ 2`, as index pairs.
fn nestings(rsf: &EmpiricalRsf) -> Vec<(usize, usize)> {
    let menus = rsf.menus();
    let mut out = Vec::new();
    for (bi, b) in menus.iter().enumerate() {
        for (ai, a) in menus.iter().enumerate() {
            if b.len() >= 2 && b.len() < a.len() && b.members.is_subset(&a.members) {
                out.push((bi, ai));
            }
        }
    }
    out
}

/// `p_t(b|A) = p_t(b|B)·p_t(B|A)` for every observed nesting, two-sided
/// z-tests with a Bonferroni correction.
pub fn check_conditioning(rsf: &EmpiricalRsf, cfg: &ToleranceConfig) -> AxiomOutcome {
    let mut cases = Vec::new();
    for (bi, ai) in nestings(rsf) {
        for ti in 0..rsf.temperatures().len() {
            if let (Some(sub), Some(sup)) = (rsf.group(ti, bi), rsf.group(ti, ai)) {
                for state in sub.cells.keys() {
                    cases.push((ti, bi, ai, state.clone(), nesting_z(sub, sup, state, rsf)));
                }
            }
        }
    }
    if cases.is_empty() {
        return AxiomOutcome::new(Axiom::Conditioning, Verdict::Inconclusive).note("no nested menus observed");
    }
    let crit = stats::z_two_sided(cfg.alpha, cases.len());
    let mut tracker = Tracker::new();
    for (ti, bi, ai, state, z) in cases {
        tracker.observe(z.abs(), || Witness::Nesting {
            temperature: rsf.temperatures()[ti].label.clone(),
            subset: rsf.menus()[bi].id.clone(),
            menu: rsf.menus()[ai].id.clone(),
            state,
            z: z.abs(),
        });
    }
    tracker.finish(Axiom::Conditioning, crit)
}

pub(super) fn reevaluate(rsf: &EmpiricalRsf, witness: &Witness) -> Option<f64> {
    let ti_of = |label: &str| rsf.temperatures().iter().position(|t| t.label == label);
    match witness {
        Witness::Cell {
            temperature,
            menu,
            state,
            ..
        } => {
            let g = rsf.group(ti_of(temperature)?, rsf.menu_index(menu)?)?;
            Some(g.cells.get(state)?.freq)
        }
        Witness::MenuSum { temperature, menu, .. } => {
            let g = rsf.group(ti_of(temperature)?, rsf.menu_index(menu)?)?;
            Some((g.cells.values().map(|c| c.freq).sum::<f64>() - 1.0).abs())
        }
        Witness::Nesting {
            temperature,
            subset,
            menu,
            state,
            ..
        } => {
            let ti = ti_of(temperature)?;
            let sub = rsf.group(ti, rsf.menu_index(subset)?)?;
            let sup = rsf.group(ti, rsf.menu_index(menu)?)?;
            Some(nesting_z(sub, sup, state, rsf).abs())
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_empirical_rsf, CountRecord, EmpiricalRsf, FrequencyRecord};

    fn exact(rows: &[(&str, &str, &str, f64)]) -> EmpiricalRsf {
        let recs: Vec<FrequencyRecord> = rows
            .iter()
            .map(|(t, m, s, f)| FrequencyRecord {
                temperature: t.to_string(),
                menu_id: m.to_string(),
                state: s.to_string(),
                frequency: *f,
            })
            .collect();
        EmpiricalRsf::from_frequencies(&recs).unwrap()
    }

    fn boltzmann_abc(binary_scale: f64) -> EmpiricalRsf {
        let w = |e: f64, k: f64| (-e / k).exp();
        let z3 = w(0.0, 1.0) + w(1.0, 1.0) + w(2.0, 1.0);
        let z2 = w(0.0, binary_scale) + w(1.0, binary_scale);
        exact(&[
            ("1", "abc", "a", w(0.0, 1.0) / z3),
            ("1", "abc", "b", w(1.0, 1.0) / z3),
            ("1", "abc", "c", w(2.0, 1.0) / z3),
            ("1", "ab", "a", w(0.0, binary_scale) / z2),
            ("1", "ab", "b", w(1.0, binary_scale) / z2),
        ])
    }

    #[test]
    fn exact_boltzmann_satisfies_conditioning() {
        let rsf = boltzmann_abc(1.0);
        let lhs = rsf.frequency(1.0, "b", "abc").unwrap().0;
        let rhs = rsf.frequency(1.0, "b", "ab").unwrap().0 * rsf.conditional_frequency(1.0, &["a", "b"], "abc").unwrap();
        assert!((lhs - 0.244728).abs() < 1e-6);
        assert!((lhs - rhs).abs() < 1e-15);
        let out = check_conditioning(&rsf, &ToleranceConfig::default());
        assert_eq!(out.verdict, Verdict::Pass);
        assert_eq!(out.tests, 2);
    }

    #[test]
    fn rescaled_binary_menus_break_conditioning() {
        let rsf = boltzmann_abc(2.0);
        let out = check_conditioning(&rsf, &ToleranceConfig::default());
        assert_eq!(out.verdict, Verdict::Fail);
        let w = out.witness.unwrap();
        assert_eq!(reevaluate(&rsf, &w), Some(w.value()));
    }

    #[test]
    fn no_nesting_is_inconclusive() {
        let rsf = exact(&[("1", "ab", "a", 0.5), ("1", "ab", "b", 0.5)]);
        assert_eq!(check_conditioning(&rsf, &ToleranceConfig::default()).verdict, Verdict::Inconclusive);
    }

    #[test]
    fn zero_cell_fails_positivity() {
        let rsf = build_empirical_rsf(&[
            CountRecord::new("1", "ab", "a", 10),
            CountRecord::new("1", "ab", "b", 0),
        ])
        .unwrap();
        let out = check_positivity(&rsf, &ToleranceConfig::default());
        assert_eq!(out.verdict, Verdict::Fail);
        match out.witness.unwrap() {
            Witness::Cell { state, temperature, .. } => assert_eq!((state.as_str(), temperature.as_str()), ("b", "1")),
            w => panic!("unexpected witness {w:?}"),
        }
        let smoothed = rsf.with_smoothing(crate::model::Smoothing::Jeffreys);
        assert_eq!(check_positivity(&smoothed, &ToleranceConfig::default()).verdict, Verdict::Pass);
    }

    #[test]
    fn hand_built_zero_frequency_and_bad_sum_fail() {
        let zero = exact(&[("1", "ab", "a", 1.0), ("1", "ab", "b", 0.0)]);
        assert_eq!(check_positivity(&zero, &ToleranceConfig::default()).verdict, Verdict::Fail);
        let bad = exact(&[("1", "ab", "a", 0.6), ("1", "ab", "b", 0.6)]);
        let out = check_positivity(&bad, &ToleranceConfig::default());
        assert!(matches!(out.witness, Some(Witness::MenuSum { .. })));
        assert!((reevaluate(&bad, out.witness.as_ref().unwrap()).unwrap() - 0.2).abs() < 1e-12);
    }
}
