//! Small statistical helpers shared by the checkers: critical values,
//! weighted least squares on log-odds series, and isotonic projection.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided standard normal critical value with a Bonferroni split over
/// `tests` comparisons.
pub fn z_two_sided(alpha: f64, tests: usize) -> f64 {
    z_upper(alpha / (2.0 * tests.max(1) as f64))
}

/// One-sided standard normal critical value with a Bonferroni split.
pub fn z_one_sided(alpha: f64, tests: usize) -> f64 {
    z_upper(alpha / tests.max(1) as f64)
}

/// Upper-tail normal quantile: returns `z` with `P(Z > z) = tail`.
pub fn z_upper(tail: f64) -> f64 {
    let normal = Normal::standard();
    // inverse_cdf on the complement keeps precision for tiny tails
    -normal.inverse_cdf(tail)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Upper-tail chi-square critical value at level `tail`.
pub fn chi2_upper(tail: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df.max(1) as f64).expect("positive degrees of freedom");
    dist.inverse_cdf(1.0 - tail)
}

/// Survival function of the chi-square distribution.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df.max(1) as f64).expect("positive degrees of freedom");
    dist.sf(x)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One observation of a noisy series: abscissa, value and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obs {
    pub x: f64,
    pub y: f64,
    pub se: f64,
}

/// Weighted constant fit `y = level`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelFit {
    pub level: f64,
    pub level_se: f64,
    pub chi2: f64,
    pub df: usize,
}

pub fn fit_level(obs: &[Obs]) -> LevelFit {
    let (mut sw, mut swy) = (0.0, 0.0);
    for o in obs {
        let w = 1.0 / (o.se * o.se);
        sw += w;
        swy += w * o.y;
    }
    let level = swy / sw;
    let chi2 = obs
        .iter()
        .map(|o| ((o.y - level) / o.se).powi(2))
        .sum();
    LevelFit {
        level,
        level_se: (1.0 / sw).sqrt(),
        chi2,
        df: obs.len().saturating_sub(1),
    }
}

/// Weighted straight-line fit `y = a + b x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

pub fn fit_line(obs: &[Obs]) -> LineFit {
    let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
    for o in obs {
        let w = 1.0 / (o.se * o.se);
        sw += w;
        swx += w * o.x;
        swy += w * o.y;
    }
    let (mx, my) = (swx / sw, swy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for o in obs {
        let w = 1.0 / (o.se * o.se);
        sxx += w * (o.x - mx) * (o.x - mx);
        sxy += w * (o.x - mx) * (o.y - my);
    }
    let slope = sxy / sxx;
    LineFit {
        intercept: my - slope * mx,
        slope,
        slope_se: (1.0 / sxx).sqrt(),
    }
}

/// Proportionality fit `y ≈ c·x` where both coordinates carry noise.
///
/// Minimizes `Σ (y − c x)² / (σ_y² + c² σ_x²)`; with exact `x` (σ_x = 0)
/// this is ordinary zero-intercept weighted least squares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProportionalFit {
    pub coefficient: f64,
    pub chi2: f64,
    pub df: usize,
}

/// Paired observation for [`fit_proportional`]: `(x, σ_x, y, σ_y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Paired {
    pub x: f64,
    pub x_se: f64,
    pub y: f64,
    pub y_se: f64,
}

pub fn proportional_chi2(pairs: &[Paired], c: f64) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let r = p.y - c * p.x;
            r * r / (p.y_se * p.y_se + c * c * p.x_se * p.x_se)
        })
        .sum()
}

pub fn fit_proportional(pairs: &[Paired]) -> ProportionalFit {
    let df = pairs.len().saturating_sub(1);
    let wls = |c: f64| {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for p in pairs {
            let w = 1.0 / (p.y_se * p.y_se + c * c * p.x_se * p.x_se);
            sxy += w * p.x * p.y;
            sxx += w * p.x * p.x;
        }
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    };
    // iteratively reweighted start, then a golden-section polish around it
    let mut c = wls(0.0);
    for _ in 0..50 {
        let next = wls(c);
        if (next - c).abs() <= 1e-15 * c.abs().max(1e-300) {
            c = next;
            break;
        }
        c = next;
    }
    let span = c.abs().max(1e-12) * 0.5;
    let (mut lo, mut hi) = (c - span, c + span);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if proportional_chi2(pairs, m1) <= proportional_chi2(pairs, m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo <= 1e-15 * c.abs().max(1e-300) {
            break;
        }
    }
    let polished = 0.5 * (lo + hi);
    let best = if proportional_chi2(pairs, polished) < proportional_chi2(pairs, c) {
        polished
    } else {
        c
    };
    ProportionalFit {
        coefficient: best,
        chi2: proportional_chi2(pairs, best),
        df,
    }
}

/// Pool-adjacent-violators projection onto non-decreasing sequences.
pub fn isotonic_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values_match_tables() {
        assert!((z_two_sided(0.05, 1) - 1.959964).abs() < 1e-5);
        assert!((z_one_sided(0.01, 1) - 2.326348).abs() < 1e-5);
        assert!((chi2_upper(0.05, 4) - 9.487729).abs() < 1e-4);
        assert!((chi2_sf(9.487729, 4) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn logistic_is_stable_in_both_tails() {
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(logistic(800.0), 1.0);
        assert!((logistic(1.0) - 0.7310585786300049).abs() < 1e-15);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let obs: Vec<Obs> = (0..5)
            .map(|i| Obs { x: i as f64, y: 2.0 + 3.0 * i as f64, se: 0.1 })
            .collect();
        let fit = fit_line(&obs);
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2.0).abs() < 1e-12);
    }

    #[test]
    fn proportional_fit_handles_noisy_regressor() {
        let pairs: Vec<Paired> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&x| Paired { x, x_se: 0.01, y: 0.5 * x, y_se: 0.02 })
            .collect();
        let fit = fit_proportional(&pairs);
        assert!((fit.coefficient - 0.5).abs() < 1e-9);
        assert!(fit.chi2 < 1e-12);
    }

    #[test]
    fn pava_pools_violators() {
        let out = isotonic_increasing(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(out, vec![1.0, 2.5, 2.5, 4.0]);
    }
}
