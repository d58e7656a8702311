//! Post-HLMI dynamics, the mesa-optimization failure chain, the safety-research
//! race and terminal outcome logic.

use crate::error::{Error, Result};
use crate::stochastic::RngStream;

/// Number of major breakthroughs between now and HLMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bucket {
    /// 0-2 new paradigms, 0-9 breakthroughs.
    Few,
    /// 3-9 new paradigms, 10-100 breakthroughs.
    Intermediate,
    /// More than 100 breakthroughs.
    Huge,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Few, Bucket::Intermediate, Bucket::Huge];
    pub const LABELS: [&'static str; 3] = ["few", "intermediate", "huge"];

    /// Inclusive breakthrough-count range; `None` upper bound is unbounded.
    pub fn breakthroughs(self) -> (u32, Option<u32>) {
        match self {
            Bucket::Few => (0, Some(9)),
            Bucket::Intermediate => (10, Some(100)),
            Bucket::Huge => (101, None),
        }
    }

    pub fn label(self) -> &'static str {
        Self::LABELS[self as usize]
    }
}

/// Conditioning variables selecting a row of the bucket table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketCondition {
    pub statistical_type: bool,
    pub difficult_at_hlmi: bool,
    pub hard_paths: bool,
    pub early: bool,
}

impl BucketCondition {
    /// Row index with `statistical_type` as the most significant bit.
    pub fn row(self) -> usize {
        (self.statistical_type as usize) << 3
            | (self.difficult_at_hlmi as usize) << 2
            | (self.hard_paths as usize) << 1
            | self.early as usize
    }
}

pub fn check_bucket_table(rows: &[[f64; 3]]) -> Result<()> {
    if rows.len() != 16 {
        return Err(Error::BadTable(format!("expected 16 rows, got {}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::BadTable(format!("row {i} is not a probability vector")));
        }
    }
    Ok(())
}

pub fn breakthroughs_bucket(cond: BucketCondition, rows: &[[f64; 3]], stream: &mut RngStream) -> Result<Bucket> {
    check_bucket_table(rows)?;
    Ok(Bucket::ALL[stream.categorical(&rows[cond.row()])])
}

/// Jump to HLMI, or from HLMI to well beyond it.
pub fn discontinuity(
    hardware_bottlenecked: bool,
    prehlmi_near_capable: bool,
    missing_gears: bool,
    bucket: Bucket,
    overshoot: bool,
    hardware_overhang: bool,
) -> bool {
    let gain_to = if hardware_bottlenecked {
        !prehlmi_near_capable
    } else {
        missing_gears || bucket == Bucket::Few
    };
    let gain_from = overshoot || hardware_overhang;
    gain_to || gain_from
}

/// The four difficulty and intelligence outputs from the analogies module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DifficultyCruxes {
    pub difficult_at_hlmi: bool,
    pub strongly_increasing: bool,
    pub upper_limit_far_above: bool,
    pub previous_intelligence_bottleneck: bool,
}

impl DifficultyCruxes {
    /// Conditions for an easy takeoff that do not hold.
    pub fn failing_ease_conditions(&self) -> u32 {
        self.strongly_increasing as u32 + !self.upper_limit_far_above as u32 + self.difficult_at_hlmi as u32
    }
}

/// Hardware-population path to an explosion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HardwarePathCruxes {
    pub scales_with_researchers: bool,
    pub hw_not_strongly_harder: bool,
    pub room_for_improvement: bool,
}

pub fn intelligence_explosion(c: &DifficultyCruxes, hw: &HardwarePathCruxes) -> bool {
    let software = !c.strongly_increasing && c.upper_limit_far_above && c.previous_intelligence_bottleneck;
    let hardware = hw.scales_with_researchers && hw.hw_not_strongly_harder && hw.room_for_improvement;
    software || hardware
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Doubling {
    Hyperbolic,
    LogNormal { median_days: f64, sigma_log10: f64 },
}

impl Doubling {
    /// Draws a doubling time in days; hyperbolic growth is reported as 0.
    pub fn sample_days(&self, stream: &mut RngStream) -> f64 {
        match *self {
            Doubling::Hyperbolic => 0.0,
            Doubling::LogNormal { median_days, sigma_log10 } => {
                median_days * 10f64.powf(sigma_log10 * stream.standard_normal())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingConfig {
    pub outside_median_days: f64,
    pub sigma_log10: f64,
    pub multiplier: f64,
}

impl Default for DoublingConfig {
    fn default() -> Self {
        DoublingConfig {
            outside_median_days: 14.0,
            sigma_log10: 1.0,
            multiplier: 3.0,
        }
    }
}

pub fn post_hlmi_doubling_time(explosion: bool, c: &DifficultyCruxes, config: &DoublingConfig) -> Result<Doubling> {
    if !(config.outside_median_days > 0.0 && config.sigma_log10 >= 0.0 && config.multiplier > 0.0) {
        return Err(Error::InvalidParams("doubling configuration must be positive".into()));
    }
    if explosion {
        return Ok(Doubling::Hyperbolic);
    }
    Ok(Doubling::LogNormal {
        median_days: config.outside_median_days * config.multiplier.powi(c.failing_ease_conditions() as i32),
        sigma_log10: config.sigma_log10,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DistributionFactors {
    pub high_fixed_costs: bool,
    pub easy_trade: bool,
    pub large_hw_scaling_gains: bool,
    pub catchup_easier: bool,
    pub secrecy: bool,
    pub eliminate_laggards: bool,
}

impl DistributionFactors {
    pub fn score(&self, hyperbolic: bool) -> i32 {
        let catchup = self.catchup_easier && !hyperbolic;
        (self.easy_trade as i32 + catchup as i32)
            - (self.high_fixed_costs as i32
                + self.large_hw_scaling_gains as i32
                + self.secrecy as i32
                + self.eliminate_laggards as i32)
    }
}

pub fn hlmi_distributed(discontinuity: bool, hyperbolic: bool, f: &DistributionFactors) -> bool {
    !discontinuity && f.score(hyperbolic) >= 0
}

/// Category labels of the takeoff-speed node.
pub const TAKEOFF_SPEED_LABELS: [&str; 4] = [
    "hyperbolic_no_intermediate",
    "hyperbolic_intermediate",
    "weeks_to_months",
    "years_or_longer",
];

/// Coarse takeoff speed: hyperbolic growth with or without a discontinuous
/// jump, otherwise by whether the doubling time is under a year.
pub fn takeoff_speed_class(explosion: bool, discontinuity: bool, doubling_days: f64) -> usize {
    if explosion {
        if discontinuity {
            0
        } else {
            1
        }
    } else if doubling_days < 365.0 {
        2
    } else {
        3
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesaChainParams {
    pub p_contains_mesa: f64,
    pub p_pseudo_given_mesa: f64,
    pub p_unsafe_given_pseudo: f64,
    pub p_fail_stop_given_unsafe: f64,
    pub count_ratio: f64,
    pub ease_ratio: f64,
    pub persistence_ratio: f64,
    pub rd_reduction_objective_robustness: f64,
    pub rd_reduction_myopia: f64,
    pub rd_transparency_detection: f64,
    /// Odds that a pseudo-aligned mesa-optimizer models its base objective.
    pub modeling_odds: f64,
}

impl Default for MesaChainParams {
    fn default() -> Self {
        MesaChainParams {
            p_contains_mesa: 0.5,
            p_pseudo_given_mesa: 0.5,
            p_unsafe_given_pseudo: 0.5,
            p_fail_stop_given_unsafe: 0.5,
            count_ratio: 1.0,
            ease_ratio: 1.0,
            persistence_ratio: 1.0,
            rd_reduction_objective_robustness: 1.0,
            rd_reduction_myopia: 1.0,
            rd_transparency_detection: 1.0,
            modeling_odds: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MesaOutcome {
    pub p_inner_failure: f64,
    /// Probability HLMI contains a deceptively aligned mesa-optimizer.
    pub p_deceptive: f64,
    pub p_deceptive_given_modeling: f64,
    pub p_modeling: f64,
}

pub fn mesa_failure_probability(p: &MesaChainParams) -> Result<MesaOutcome> {
    for (what, x) in [
        ("p_contains_mesa", p.p_contains_mesa),
        ("p_pseudo_given_mesa", p.p_pseudo_given_mesa),
        ("p_unsafe_given_pseudo", p.p_unsafe_given_pseudo),
        ("p_fail_stop_given_unsafe", p.p_fail_stop_given_unsafe),
    ] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParams(format!("{what} = {x} outside [0, 1]")));
        }
    }
    for (what, x) in [
        ("count_ratio", p.count_ratio),
        ("ease_ratio", p.ease_ratio),
        ("persistence_ratio", p.persistence_ratio),
        ("rd_reduction_objective_robustness", p.rd_reduction_objective_robustness),
        ("rd_reduction_myopia", p.rd_reduction_myopia),
        ("rd_transparency_detection", p.rd_transparency_detection),
        ("modeling_odds", p.modeling_odds),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::InvalidParams(format!("{what} = {x} must be positive")));
        }
    }
    let odds = p.count_ratio * p.ease_ratio / p.rd_reduction_myopia * p.persistence_ratio;
    let p_deceptive_given_modeling = odds / (1.0 + odds);
    let modeling = p.modeling_odds / p.rd_reduction_objective_robustness;
    let p_modeling = modeling / (1.0 + modeling);
    let deceptive_share = p_deceptive_given_modeling * p_modeling;
    let p_unsafe = p.p_unsafe_given_pseudo.max(deceptive_share);
    let p_fail = (p.p_fail_stop_given_unsafe * p.rd_transparency_detection).clamp(0.0, 1.0);
    let pseudo = p.p_contains_mesa * p.p_pseudo_given_mesa;
    Ok(MesaOutcome {
        p_inner_failure: pseudo * p_unsafe * p_fail,
        p_deceptive: pseudo * deceptive_share,
        p_deceptive_given_modeling,
        p_modeling,
    })
}

/// Years until a project growing faster than the world economy holds half of it.
pub fn economic_takeover_years(initial_share: f64, lead_growth: f64, world_growth: f64) -> Result<Option<f64>> {
    if !(initial_share > 0.0 && initial_share < 1.0) {
        return Err(Error::BadShare(initial_share));
    }
    let delta = lead_growth - world_growth;
    if !(delta > 0.0) {
        return Ok(None);
    }
    Ok(Some(((1.0 - initial_share) / initial_share).ln().max(0.0) / delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsaRoute {
    Economic,
    Capability,
    Coalition,
    None,
}

impl DsaRoute {
    pub const LABELS: [&'static str; 4] = ["economic", "capability", "coalition", "none"];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsaInputs {
    pub governance_prevents: bool,
    pub distributed: bool,
    pub lead_time_years: f64,
    pub takeover_time: Option<f64>,
    pub p_single_dsa: f64,
    pub coalition: bool,
    /// Share of the remaining probability added to the capability route when
    /// HLMI is concentrated in one project.
    pub concentration_boost: f64,
}

pub fn dsa_assessment(i: &DsaInputs, stream: &mut RngStream) -> Result<(bool, DsaRoute)> {
    if !(i.lead_time_years >= 0.0) {
        return Err(Error::InvalidParams(format!("lead time {}", i.lead_time_years)));
    }
    if !(0.0..=1.0).contains(&i.p_single_dsa) || !(0.0..=1.0).contains(&i.concentration_boost) {
        return Err(Error::InvalidParams("probabilities outside [0, 1]".into()));
    }
    let p = if i.distributed {
        i.p_single_dsa
    } else {
        i.p_single_dsa + (1.0 - i.p_single_dsa) * i.concentration_boost
    };
    // Drawn unconditionally so the stream position does not depend on the route.
    let capability = stream.bernoulli(p);
    let route = if i.governance_prevents {
        DsaRoute::None
    } else if i.takeover_time.is_some_and(|t| i.lead_time_years >= t) {
        DsaRoute::Economic
    } else if capability {
        DsaRoute::Capability
    } else if i.coalition {
        DsaRoute::Coalition
    } else {
        DsaRoute::None
    };
    Ok((route != DsaRoute::None, route))
}

pub fn influence_seeking(
    instrumental_convergence_applies: bool,
    utility_maximizer: bool,
    deceptive: bool,
    analogy_posterior: f64,
    stream: &mut RngStream,
) -> Result<bool> {
    if !(0.0..=1.0).contains(&analogy_posterior) {
        return Err(Error::InvalidParams(format!("posterior {analogy_posterior}")));
    }
    let by_analogy = stream.bernoulli(analogy_posterior);
    Ok(deceptive || (instrumental_convergence_applies && utility_maximizer) || by_analogy)
}

/// Whether safety research is ready, with fire-alarm credit, before HLMI.
pub fn safety_race(
    research_ready_year: Option<i32>,
    extra_time_years: f64,
    hlmi_year: Option<i32>,
    competitive_ok: bool,
    outer_aligned_at_optimum: bool,
) -> bool {
    let in_time = match (research_ready_year, hlmi_year) {
        (None, _) => false,
        (Some(_), None) => true,
        (Some(r), Some(h)) => r as f64 - extra_time_years <= h as f64,
    };
    in_time && competitive_ok && outer_aligned_at_optimum
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeInputs {
    pub hlmi: bool,
    pub correct_course: bool,
    pub aligned_ahead: bool,
    pub lead_can_dsa: bool,
    pub pursues_dsa: bool,
    pub humans_misaligned: bool,
    pub influence: bool,
    pub dependency: bool,
    pub proxies_diverge: bool,
    pub moloch_burn: bool,
}

impl OutcomeInputs {
    pub const NAMES: [&'static str; 10] = [
        "hlmi",
        "correct_course",
        "aligned_ahead",
        "lead_can_dsa",
        "pursues_dsa",
        "humans_misaligned",
        "influence",
        "dependency",
        "proxies_diverge",
        "moloch_burn",
    ];

    pub fn from_bits(b: [bool; 10]) -> Self {
        OutcomeInputs {
            hlmi: b[0],
            correct_course: b[1],
            aligned_ahead: b[2],
            lead_can_dsa: b[3],
            pursues_dsa: b[4],
            humans_misaligned: b[5],
            influence: b[6],
            dependency: b[7],
            proxies_diverge: b[8],
            moloch_burn: b[9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FinalOutcomes {
    pub misaligned_hlmi: bool,
    pub catastrophically_misaligned: bool,
    pub loss_slow_rolling: bool,
    pub loss_correlated: bool,
    pub loss_moloch: bool,
}

impl FinalOutcomes {
    pub const NAMES: [&'static str; 5] = [
        "misaligned_hlmi",
        "catastrophically_misaligned",
        "loss_slow_rolling",
        "loss_correlated",
        "loss_moloch",
    ];

    pub fn get(&self, name: &str) -> Option<bool> {
        Some(match name {
            "misaligned_hlmi" => self.misaligned_hlmi,
            "catastrophically_misaligned" => self.catastrophically_misaligned,
            "loss_slow_rolling" => self.loss_slow_rolling,
            "loss_correlated" => self.loss_correlated,
            "loss_moloch" => self.loss_moloch,
            _ => return None,
        })
    }
}

pub fn final_outcomes(i: &OutcomeInputs) -> FinalOutcomes {
    let misaligned_hlmi = i.hlmi && !i.correct_course && !i.aligned_ahead;
    let lead_misaligned = misaligned_hlmi || i.humans_misaligned;
    // A DSA here is one achieved through HLMI.
    let achieves = i.hlmi && i.lead_can_dsa && i.pursues_dsa;
    let no_dsa = !achieves;
    FinalOutcomes {
        misaligned_hlmi,
        catastrophically_misaligned: achieves && lead_misaligned,
        loss_slow_rolling: no_dsa && misaligned_hlmi && i.dependency && i.proxies_diverge,
        loss_correlated: no_dsa && misaligned_hlmi && i.dependency && i.influence,
        loss_moloch: no_dsa && i.hlmi && i.moloch_burn,
    }
}
