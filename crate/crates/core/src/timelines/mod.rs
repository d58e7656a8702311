//! HLMI-arrival forecasting: anchors, pathways, outside-view priors and the
//! combination of per-method CDFs.

pub mod anchors;
pub mod outside;
pub mod pathways;

pub use anchors::*;
pub use outside::*;
pub use pathways::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative arrival probability for each horizon year. Whatever mass has
/// not arrived by the last year is "never".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineCdf {
    pub start: i32,
    pub cdf: Vec<f64>,
}

impl TimelineCdf {
    pub fn never(horizon: (i32, i32)) -> Self {
        TimelineCdf {
            start: horizon.0,
            cdf: vec![0.0; (horizon.1 - horizon.0 + 1).max(0) as usize],
        }
    }

    /// All mass on `year`, or all mass on never.
    pub fn point_mass(horizon: (i32, i32), year: Option<i32>) -> Self {
        let mut out = Self::never(horizon);
        if let Some(y) = year {
            let first = (y.max(horizon.0) - horizon.0) as usize;
            for v in out.cdf.iter_mut().skip(first) {
                *v = 1.0;
            }
        }
        out
    }

    pub fn end(&self) -> i32 {
        self.start + self.cdf.len() as i32 - 1
    }

    pub fn never_mass(&self) -> f64 {
        1.0 - self.cdf.last().copied().unwrap_or(0.0)
    }

    pub fn at(&self, year: i32) -> f64 {
        if year < self.start {
            0.0
        } else {
            let i = ((year - self.start) as usize).min(self.cdf.len().saturating_sub(1));
            self.cdf.get(i).copied().unwrap_or(0.0)
        }
    }

    /// Per-year arrival mass.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&c| {
                let d = c - prev;
                prev = c;
                d
            })
            .collect()
    }

    fn from_increments(start: i32, inc: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = inc
            .iter()
            .map(|d| {
                acc += d;
                acc.clamp(0.0, 1.0)
            })
            .collect();
        TimelineCdf { start, cdf }
    }

    /// Inverse-CDF draw: the first year whose cumulative probability exceeds `u`.
    pub fn sample_year(&self, u: f64) -> Option<i32> {
        self.cdf.iter().position(|&c| u < c).map(|i| self.start + i as i32)
    }
}

/// Damping of arrival mass in the first years after the base year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortAdjustment {
    pub enabled: bool,
    pub horizon_years: u32,
    pub damping: f64,
}

impl ShortAdjustment {
    pub const OFF: ShortAdjustment = ShortAdjustment {
        enabled: false,
        horizon_years: 0,
        damping: 1.0,
    };
}

/// Weighted pointwise mixture of CDFs, optionally moving mass out of the
/// first `horizon_years` years onto later years in proportion to their mass.
pub fn combine_timelines(parts: &[(f64, TimelineCdf)], adjust: ShortAdjustment) -> Result<TimelineCdf> {
    let Some((_, first)) = parts.first() else {
        return Err(Error::BadWeights("no timelines to combine".into()));
    };
    if parts.iter().any(|(w, _)| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::BadWeights("weights must be nonnegative".into()));
    }
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadWeights(format!("weights sum to {total}")));
    }
    for (_, c) in parts {
        if c.start != first.start || c.cdf.len() != first.cdf.len() {
            return Err(Error::HorizonMismatch(format!(
                "timeline {}..{} vs {}..{}",
                c.start,
                c.end(),
                first.start,
                first.end()
            )));
        }
    }
    if !(0.0..=1.0).contains(&adjust.damping) {
        return Err(Error::InvalidParams(format!("damping {} outside [0, 1]", adjust.damping)));
    }
    let n = first.cdf.len();
    let mut mixed = vec![0.0; n];
    for (w, c) in parts {
        for (m, v) in mixed.iter_mut().zip(&c.cdf) {
            *m += w * v;
        }
    }
    let combined = TimelineCdf {
        start: first.start,
        cdf: mixed,
    };
    if !adjust.enabled || adjust.damping == 1.0 {
        return Ok(combined);
    }
    let h = (adjust.horizon_years as usize).min(n);
    let mut inc = combined.increments();
    let later: f64 = inc[h..].iter().sum();
    if later <= 0.0 {
        return Ok(combined);
    }
    let mut removed = 0.0;
    for d in &mut inc[..h] {
        removed += *d * (1.0 - adjust.damping);
        *d *= adjust.damping;
    }
    let scale = 1.0 + removed / later;
    for d in &mut inc[h..] {
        *d *= scale;
    }
    Ok(TimelineCdf::from_increments(first.start, &inc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cdf(values: &[f64]) -> TimelineCdf {
        TimelineCdf {
            start: 2022,
            cdf: values.to_vec(),
        }
    }

    #[test]
    fn point_mass_shapes() {
        let p = TimelineCdf::point_mass((2022, 2026), Some(2024));
        assert_eq!(p.cdf, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(p.never_mass(), 0.0);
        let n = TimelineCdf::point_mass((2022, 2026), None);
        assert_eq!(n.never_mass(), 1.0);
        assert_eq!(p.sample_year(0.3), Some(2024));
        assert_eq!(n.sample_year(0.3), None);
    }

    #[test]
    fn combine_identity_and_linearity() {
        let f = cdf(&[0.1, 0.3, 0.6]);
        let g = cdf(&[0.0, 0.5, 0.5]);
        assert_eq!(combine_timelines(&[(1.0, f.clone())], ShortAdjustment::OFF).unwrap(), f);
        let half = combine_timelines(&[(0.5, f.clone()), (0.5, g.clone())], ShortAdjustment::OFF).unwrap();
        for i in 0..3 {
            assert!((half.cdf[i] - 0.5 * (f.cdf[i] + g.cdf[i])).abs() < 1e-15);
        }
        assert_eq!(
            combine_timelines(&[(0.5, f)], ShortAdjustment::OFF).unwrap_err().code(),
            "BAD_WEIGHTS"
        );
    }

    #[test]
    fn full_damping_moves_early_mass_later() {
        // 20% of mass in the first decade, 80% over the next ten years.
        let mut values = Vec::new();
        for i in 0..20 {
            values.push(if i < 10 { 0.02 * (i + 1) as f64 } else { 0.2 + 0.08 * (i - 9) as f64 });
        }
        let c = cdf(&values);
        let adj = ShortAdjustment {
            enabled: true,
            horizon_years: 10,
            damping: 0.0,
        };
        let out = combine_timelines(&[(1.0, c.clone())], adj).unwrap();
        let before = c.increments();
        let after = out.increments();
        for i in 0..10 {
            assert_eq!(after[i], 0.0);
        }
        for i in 10..20 {
            assert!((after[i] - before[i] / 0.8).abs() < 1e-12);
        }
        assert!((out.never_mass() - c.never_mass()).abs() < 1e-12);
    }

    #[test]
    fn adjustment_without_later_mass_is_a_no_op() {
        let c = cdf(&[0.5, 0.5, 0.5]);
        let adj = ShortAdjustment {
            enabled: true,
            horizon_years: 3,
            damping: 0.2,
        };
        assert_eq!(combine_timelines(&[(1.0, c.clone())], adj).unwrap(), c);
    }

    fn arb_cdf(n: usize) -> impl Strategy<Value = TimelineCdf> {
        (prop::collection::vec(0.0f64..1.0, n), 0.0f64..1.0).prop_map(|(raw, never)| {
            let total: f64 = raw.iter().sum::<f64>().max(1e-9);
            let mut acc = 0.0;
            let cdf = raw
                .iter()
                .map(|r| {
                    acc += r / total * (1.0 - never);
                    acc.min(1.0)
                })
                .collect();
            TimelineCdf { start: 2022, cdf }
        })
    }

    proptest! {
        #[test]
        fn adjustment_preserves_arriving_mass(
            parts in prop::collection::vec((0.01f64..1.0, arb_cdf(30)), 1..4),
            horizon_years in 0u32..40,
            damping in 0.0f64..=1.0,
        ) {
            let total: f64 = parts.iter().map(|(w, _)| w).sum();
            let parts: Vec<_> = parts.into_iter().map(|(w, c)| (w / total, c)).collect();
            let plain = combine_timelines(&parts, ShortAdjustment::OFF).unwrap();
            let adj = ShortAdjustment { enabled: true, horizon_years, damping };
            let out = combine_timelines(&parts, adj).unwrap();
            prop_assert!((out.never_mass() - plain.never_mass()).abs() < 1e-12);
            let mut prev = 0.0;
            for &v in &out.cdf {
                prop_assert!(v >= prev - 1e-15 && (0.0..=1.0).contains(&v));
                prev = v;
            }
        }
    }
}
