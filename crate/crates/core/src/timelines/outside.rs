//! Outside-view forecasts: semi-informative priors and trend extrapolation.

use super::TimelineCdf;
use crate::error::{Error, Result};

/// Successes per unit of exposure (years or compute doublings).
pub fn stem_baseline(successes: f64, exposure: f64) -> Result<f64> {
    if !(exposure > 0.0) {
        return Err(Error::ZeroExposure);
    }
    if !(successes >= 0.0) {
        return Err(Error::InvalidParams(format!("successes = {successes}")));
    }
    Ok(successes / exposure)
}

/// Years per doubling of a quantity growing at `growth` per year.
pub fn doubling_time_years(growth: f64) -> f64 {
    std::f64::consts::LN_2 / growth.ln_1p()
}

/// Converts a per-doubling success probability into a per-year one.
pub fn per_doubling_to_per_year(p_per_doubling: f64, growth: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_per_doubling) || !(growth > 0.0) {
        return Err(Error::InvalidParams(format!(
            "per-doubling probability {p_per_doubling}, growth {growth}"
        )));
    }
    Ok(1.0 - (1.0 - p_per_doubling).powf(1.0 / doubling_time_years(growth)))
}

/// m such that the arrival CDF reaches one half after 1/baseline trials.
/// Rounds up; the slack absorbs baselines like 2/88 whose reciprocal is integral.
pub fn calibrate_m(baseline: f64) -> Result<f64> {
    if !(baseline > 0.0 && baseline < 1.0) {
        return Err(Error::InvalidParams(format!("baseline {baseline} outside (0, 1)")));
    }
    Ok((1.0 / baseline - 1e-9).ceil().max(1.0))
}

/// Hazard of first success in trial `k` (counted from the origin).
pub fn hazard(k: f64, m: f64) -> f64 {
    1.0 / (k + m)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialMode {
    /// One trial per calendar year since the origin.
    Years,
    /// One trial per doubling of compute; `doublings_before_base` have already failed.
    ComputeDoublings { doublings_before_base: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemiInformativePriorParams {
    pub baseline: f64,
    pub origin_year: i32,
    pub mode: TrialMode,
    /// Uses this m instead of the calibrated one.
    pub m_override: Option<f64>,
}

impl SemiInformativePriorParams {
    pub fn m(&self) -> Result<f64> {
        match self.m_override {
            Some(m) if m >= 1.0 && m.is_finite() => Ok(m),
            Some(m) => Err(Error::InvalidParams(format!("m = {m} must be at least 1"))),
            None => calibrate_m(self.baseline),
        }
    }
}

/// Arrival CDF over the horizon, conditioned on no success before the base year.
///
/// With hazard 1/(k+m) the survival over trials a..=b telescopes to
/// (a-1+m)/(b+m), which is what is evaluated here.
pub fn semi_informative_timeline(
    p: &SemiInformativePriorParams,
    horizon: (i32, i32),
    compute: Option<&[f64]>,
) -> Result<TimelineCdf> {
    let m = p.m()?;
    if !(p.baseline > 0.0 && p.baseline < 1.0) {
        return Err(Error::InvalidParams(format!("baseline {} outside (0, 1)", p.baseline)));
    }
    let n = (horizon.1 - horizon.0 + 1).max(0) as usize;
    let cdf = match &p.mode {
        TrialMode::Years => {
            let k0 = (horizon.0 - p.origin_year) as f64;
            if k0 < 1.0 {
                return Err(Error::InvalidParams("origin must precede the base year".into()));
            }
            (0..n)
                .map(|i| 1.0 - (k0 - 1.0 + m) / (k0 + i as f64 + m))
                .collect()
        }
        TrialMode::ComputeDoublings { doublings_before_base } => {
            let d0 = *doublings_before_base;
            if !(d0 >= 0.0) {
                return Err(Error::InvalidParams("doublings_before_base must be nonnegative".into()));
            }
            let compute = compute
                .ok_or_else(|| Error::InvalidParams("compute series required in doubling mode".into()))?;
            if compute.len() != n {
                return Err(Error::HorizonMismatch(format!(
                    "compute has {} years, horizon has {n}",
                    compute.len()
                )));
            }
            if let Some(i) = compute.iter().position(|c| !(*c > 0.0)) {
                return Err(Error::NonpositiveCost { year: horizon.0 + i as i32 });
            }
            // Doublings completed by the end of year i are measured against
            // the compute level reached at the start of the next year.
            let base = compute[0];
            let mut peak = base;
            (0..n)
                .map(|i| {
                    peak = peak.max(compute[(i + 1).min(n - 1)]);
                    1.0 - (d0 + m) / (d0 + (peak / base).log2() + m)
                })
                .collect()
        }
    };
    Ok(TimelineCdf { start: horizon.0, cdf })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acceleration {
    Speeding,
    Constant,
    Slowing,
}

impl Acceleration {
    pub const LABELS: [&'static str; 3] = ["speeding", "constant", "slowing"];

    pub fn from_index(i: u32) -> Option<Self> {
        [Acceleration::Speeding, Acceleration::Constant, Acceleration::Slowing]
            .get(i as usize)
            .copied()
    }

    /// Year-on-year ratio of progress increments.
    pub fn ratio(self, accel_factor: f64) -> f64 {
        match self {
            Acceleration::Speeding => 1.0 + accel_factor,
            Acceleration::Constant => 1.0,
            Acceleration::Slowing => 1.0 / (1.0 + accel_factor),
        }
    }
}

/// What progress is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis<'a> {
    /// `rate` is progress per year.
    Time,
    /// `rate` is progress per order of magnitude of compute; the series
    /// gives compute for each horizon year.
    Log10Compute(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtrapolationMode {
    Automation { level: f64, rate: f64 },
    Subfields { fields: Vec<(f64, f64)>, threshold: f64 },
}

/// Years after the start at which `level` reaches 1 when the increment in
/// year t is `rate * g^(t-1)`. `None` if it never does, at any horizon.
pub fn years_to_full(level: f64, rate: f64, g: f64) -> Option<u64> {
    if level >= 1.0 {
        return Some(0);
    }
    if !(rate > 0.0) {
        return None;
    }
    let need = 1.0 - level;
    let t = if (g - 1.0).abs() < 1e-15 {
        need / rate
    } else if g > 1.0 {
        (need * (g - 1.0) / rate).ln_1p() / g.ln()
    } else {
        let x = need * (1.0 - g) / rate;
        if x >= 1.0 {
            return None;
        }
        (-x).ln_1p() / g.ln()
    };
    let t = (t - 1e-9).ceil().max(1.0);
    if t > u64::MAX as f64 / 2.0 {
        return None;
    }
    Some(t as u64)
}

/// Years after the start at which `level` reaches 1 when progress follows
/// compute growth. `None` if not within the series.
fn years_to_full_compute(level: f64, rate: f64, g: f64, compute: &[f64]) -> Option<u64> {
    if level >= 1.0 {
        return Some(0);
    }
    let mut lvl = level;
    let mut factor = 1.0;
    for t in 1..compute.len() {
        lvl += rate * (compute[t].log10() - compute[t - 1].log10()).max(0.0) * factor;
        factor *= g;
        if lvl >= 1.0 - 1e-12 {
            return Some(t as u64);
        }
    }
    None
}

/// Point-mass CDF on the year extrapolated progress reaches human level.
/// Crossings beyond the horizon yield an all-never CDF.
pub fn extrapolation_timeline(
    mode: &ExtrapolationMode,
    acceleration: Acceleration,
    accel_factor: f64,
    basis: Basis<'_>,
    horizon: (i32, i32),
) -> Result<TimelineCdf> {
    if !(accel_factor >= 0.0 && accel_factor.is_finite()) {
        return Err(Error::InvalidParams(format!("accel_factor {accel_factor}")));
    }
    let n = (horizon.1 - horizon.0 + 1).max(0) as usize;
    if let Basis::Log10Compute(c) = basis {
        if c.len() != n {
            return Err(Error::HorizonMismatch(format!("compute has {} years, horizon has {n}", c.len())));
        }
        if let Some(i) = c.iter().position(|x| !(*x > 0.0)) {
            return Err(Error::NonpositiveCost { year: horizon.0 + i as i32 });
        }
    }
    let g = acceleration.ratio(accel_factor);
    let crossing = |level: f64, rate: f64| -> Result<Option<u64>> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::InvalidParams(format!("level {level} outside [0, 1]")));
        }
        if !(rate > 0.0) && level < 1.0 {
            return Err(Error::Unreachable(format!("rate {rate} is not positive")));
        }
        Ok(match basis {
            Basis::Time => years_to_full(level, rate, g),
            Basis::Log10Compute(c) => years_to_full_compute(level, rate, g, c),
        })
    };
    let offset = match mode {
        ExtrapolationMode::Automation { level, rate } => crossing(*level, *rate)?,
        ExtrapolationMode::Subfields { fields, threshold } => {
            if fields.is_empty() {
                return Err(Error::EmptyInput("no subfields".into()));
            }
            if !(0.0..=1.0).contains(threshold) {
                return Err(Error::InvalidParams(format!("threshold {threshold} outside [0, 1]")));
            }
            let mut years = fields
                .iter()
                .map(|&(level, rate)| crossing(level, rate).map(|o| o.unwrap_or(u64::MAX)))
                .collect::<Result<Vec<_>>>()?;
            years.sort_unstable();
            let k = ((threshold * years.len() as f64 - 1e-9).ceil() as usize).clamp(1, years.len());
            Some(years[k - 1]).filter(|&o| o != u64::MAX)
        }
    };
    let year = offset
        .filter(|&o| o < n as u64)
        .map(|o| horizon.0 + o as i32);
    Ok(TimelineCdf::point_mass(horizon, year))
}
