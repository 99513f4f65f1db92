//! Trend classification of a log-odds curve on the inverse-temperature
//! axis, used both to label odds curves and to estimate freezing limits.

use serde::{Deserialize, Serialize};

use crate::stats::{self, Obs};

/// Asymptotic behavior of `β ↦ ln r_{1/β}(a, b)` as `β → ∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendClass {
    /// Log-odds grow without bound: the first state freezes out the second.
    Diverging,
    /// Log-odds fall without bound.
    Vanishing,
    /// Log-odds are constant in temperature (possibly at a nonzero level).
    Flat,
    Unclassified,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub class: TrendClass,
    /// Weighted mean level of the curve and its standard error.
    pub level: f64,
    pub level_se: f64,
    /// Lack-of-fit statistic of the constant model.
    pub flat_chi2: f64,
    pub flat_df: usize,
    /// Slope over the low-temperature tail and its standard error.
    pub tail_slope: f64,
    pub tail_slope_se: f64,
}

impl TrendFit {
    /// Whether a flat curve sits at zero log-odds (odds identically one).
    pub fn level_is_zero(&self, alpha: f64) -> bool {
        self.class == TrendClass::Flat
            && self.level.abs() <= stats::z_two_sided(alpha, 1) * self.level_se
    }
}

/// Classify the series of `(β, ln r, se)` points.
///
/// A curve is flat when the constant model survives a chi-square
/// lack-of-fit test at `alpha`; otherwise the sign of the slope over the
/// largest-β half of the points decides divergence or vanishing, and an
/// insignificant tail slope leaves the curve unclassified.
pub fn classify(points: &[Obs], alpha: f64) -> TrendFit {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let level = stats::fit_level(&sorted);
    let mut fit = TrendFit {
        class: TrendClass::Unclassified,
        level: level.level,
        level_se: level.level_se,
        flat_chi2: level.chi2,
        flat_df: level.df,
        tail_slope: 0.0,
        tail_slope_se: f64::INFINITY,
    };
    if sorted.len() < 2 {
        return fit;
    }
    if level.chi2 <= stats::chi2_upper(alpha, level.df) {
        fit.class = TrendClass::Flat;
        return fit;
    }
    let tail_len = sorted.len().div_ceil(2).max(2);
    let tail = &sorted[sorted.len() - tail_len..];
    let line = stats::fit_line(tail);
    fit.tail_slope = line.slope;
    fit.tail_slope_se = line.slope_se;
    let crit = stats::z_two_sided(alpha, 1);
    if line.slope > crit * line.slope_se {
        fit.class = TrendClass::Diverging;
    } else if line.slope < -crit * line.slope_se {
        fit.class = TrendClass::Vanishing;
    }
    fit
}
