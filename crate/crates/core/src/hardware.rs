//! Year-indexed compute economics: cost per FLOP, project budget, and the
//! compute an HLMI project can buy.
//!
//! All series cover an inclusive `(start, end)` horizon whose first year is the
//! base year of the parameters.

use crate::error::{Error, Result};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct HardwareParams {
    pub base_cost: f64,
    /// Doublings of compute per dollar per year while Moore's law holds.
    pub moore_growth: f64,
    pub moore_end_year: f64,
    pub post_moore_growth: f64,
    /// Yearly chance that post-Moore growth stops for good.
    pub p_post_moore_end: f64,
    pub reversible_computing: bool,
    pub landauer_floor_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetParams {
    pub base_budget: f64,
    pub compute_trend_years: f64,
    /// Doublings per year during the recent AI compute trend.
    pub compute_trend_growth: f64,
    /// Fractional GDP growth per year.
    pub gdp_growth: f64,
    pub world_gdp_base: f64,
    pub richest_gdp_base: f64,
    pub corporate_race: bool,
    pub government_race: bool,
    pub tech_rd_gdp_fraction: f64,
    pub government_fraction: f64,
}

fn horizon_len(horizon: (i32, i32)) -> Result<usize> {
    if horizon.1 < horizon.0 {
        return Err(Error::InvalidParams(format!("empty horizon {horizon:?}")));
    }
    Ok((horizon.1 - horizon.0 + 1) as usize)
}

/// Cost per FLOP for each horizon year. The post-Moore stop year is drawn from
/// `stream` (one draw).
pub fn cost_per_compute_series(
    p: &HardwareParams,
    horizon: (i32, i32),
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let n = horizon_len(horizon)?;
    if !(p.base_cost > 0.0 && p.base_cost.is_finite()) {
        return Err(Error::InvalidParams(format!("base_cost {} must be positive", p.base_cost)));
    }
    if !(p.landauer_floor_cost > 0.0 && p.landauer_floor_cost.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "landauer_floor_cost {} must be positive",
            p.landauer_floor_cost
        )));
    }
    if !(0.0..=1.0).contains(&p.p_post_moore_end) {
        return Err(Error::InvalidParams(format!(
            "p_post_moore_end {} outside [0, 1]",
            p.p_post_moore_end
        )));
    }
    if ![p.moore_growth, p.moore_end_year, p.post_moore_growth]
        .iter()
        .all(|x| x.is_finite())
    {
        return Err(Error::InvalidParams("growth parameters must be finite".into()));
    }

    let post_years = stream.geometric(p.p_post_moore_end, n as u64) as f64;
    let moore_span = (p.moore_end_year - horizon.0 as f64).max(0.0);
    Ok((0..n)
        .map(|t| {
            let t = t as f64;
            let doublings = p.moore_growth * t.min(moore_span)
                + p.post_moore_growth * (t - moore_span).clamp(0.0, post_years);
            let cost = p.base_cost * (-doublings).exp2();
            if p.reversible_computing {
                cost
            } else {
                cost.max(p.landauer_floor_cost)
            }
        })
        .collect())
}

/// Budget of the most expensive AI project for each horizon year.
pub fn budget_series(p: &BudgetParams, horizon: (i32, i32)) -> Result<Vec<f64>> {
    let n = horizon_len(horizon)?;
    for (what, x) in [
        ("base_budget", p.base_budget),
        ("world_gdp_base", p.world_gdp_base),
        ("richest_gdp_base", p.richest_gdp_base),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidParams(format!("{what} {x} must be positive")));
        }
    }
    for (what, x) in [
        ("tech_rd_gdp_fraction", p.tech_rd_gdp_fraction),
        ("government_fraction", p.government_fraction),
    ] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParams(format!("{what} {x} outside [0, 1]")));
        }
    }
    if !(p.compute_trend_years.is_finite()
        && p.compute_trend_growth.is_finite()
        && p.gdp_growth.is_finite()
        && p.gdp_growth > -1.0)
    {
        return Err(Error::InvalidParams("growth parameters must be finite".into()));
    }

    let trend_span = p.compute_trend_years.max(0.0);
    let gdp_factor = |t: f64| (1.0 + p.gdp_growth).powf(t);
    let mut running = 0.0f64;
    Ok((0..n)
        .map(|t| {
            let t = t as f64;
            let trend = t.min(trend_span);
            let mut budget = p.base_budget
                * (p.compute_trend_growth * trend).exp2()
                * gdp_factor(t - trend);
            if p.government_race {
                budget = budget.max(p.government_fraction * p.richest_gdp_base * gdp_factor(t));
            }
            if p.corporate_race {
                budget = budget.max(p.tech_rd_gdp_fraction * p.world_gdp_base * gdp_factor(t));
            }
            running = running.max(budget);
            running
        })
        .collect())
}

/// FLOP purchasable each year: budget divided by cost per FLOP.
pub fn compute_available_series(budget: &[f64], cost: &[f64], start_year: i32) -> Result<Vec<f64>> {
    if budget.len() != cost.len() {
        return Err(Error::HorizonMismatch(format!(
            "budget covers {} years, cost covers {}",
            budget.len(),
            cost.len()
        )));
    }
    budget
        .iter()
        .zip(cost)
        .enumerate()
        .map(|(i, (b, c))| {
            if *c > 0.0 {
                Ok(b / c)
            } else {
                Err(Error::NonpositiveCost {
                    year: start_year + i as i32,
                })
            }
        })
        .collect()
}
