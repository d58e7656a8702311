//! Compute-requirement anchors and the mixture over them.

use crate::error::{Error, Result};
use crate::stochastic::DistributionSpec;

pub const HUMAN_NEURONS: f64 = 8.6e10;
pub const HUMAN_TRAINING_YEARS: f64 = 18.0;
/// 750 MB of DNA, read as a parameter count.
pub const GENOME_PARAMETERS: f64 = 7.5e8;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionaryAnchorParams {
    pub evo_years: f64,
    pub avg_neuron_population: f64,
    pub flop_per_neuron_year: f64,
    pub avg_animal_population: f64,
    pub env_flop_per_animal_year: f64,
    pub luck_factor: f64,
    pub speedup_population: f64,
    pub speedup_generations: f64,
    pub speedup_per_capita: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeAnchorParams {
    pub neurons: f64,
    pub flop_per_neuron_year: f64,
    pub training_years: f64,
    pub pretraining_factor: f64,
}

impl Default for LifetimeAnchorParams {
    fn default() -> Self {
        LifetimeAnchorParams {
            neurons: HUMAN_NEURONS,
            flop_per_neuron_year: 1.0,
            training_years: HUMAN_TRAINING_YEARS,
            pretraining_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    Genome,
    NeuralNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingAnchorParams {
    pub kind: ScalingKind,
    pub param_count: f64,
    /// Data points needed: D = scaling_coeff * param_count ^ scaling_exponent.
    pub scaling_coeff: f64,
    pub scaling_exponent: f64,
    /// FLOP per subjective second.
    pub brain_flop_rate: f64,
    pub efficiency_factor: f64,
    pub horizon_seconds: f64,
    pub horizon_linear: bool,
}

fn positive(what: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidParams(format!("{what} = {x} must be positive")))
    }
}

fn at_least_one(what: &str, x: f64) -> Result<f64> {
    if x >= 1.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::InvalidParams(format!("{what} = {x} must be at least 1")))
    }
}

/// FLOP-equivalent to re-run evolution: (brain compute + environment compute)
/// times the luck factor, divided by the engineering speedups.
pub fn evolutionary_anchor(p: &EvolutionaryAnchorParams) -> Result<f64> {
    let years = positive("evo_years", p.evo_years)?;
    let neurons = positive("avg_neuron_population", p.avg_neuron_population)?;
    let rate = positive("flop_per_neuron_year", p.flop_per_neuron_year)?;
    // Environment terms may be zero (brain-only estimate).
    if !(p.avg_animal_population >= 0.0 && p.env_flop_per_animal_year >= 0.0) {
        return Err(Error::InvalidParams("environment terms must be nonnegative".into()));
    }
    let luck = at_least_one("luck_factor", p.luck_factor)?;
    let speedup = at_least_one("speedup_population", p.speedup_population)?
        * at_least_one("speedup_generations", p.speedup_generations)?
        * at_least_one("speedup_per_capita", p.speedup_per_capita)?;
    let brain = years * neurons * rate;
    let environment = years * p.avg_animal_population * p.env_flop_per_animal_year;
    Ok((brain + environment) * luck / speedup)
}

pub fn lifetime_anchor(p: &LifetimeAnchorParams) -> Result<f64> {
    Ok(positive("neurons", p.neurons)?
        * positive("flop_per_neuron_year", p.flop_per_neuron_year)?
        * positive("training_years", p.training_years)?
        * at_least_one("pretraining_factor", p.pretraining_factor)?)
}

/// Training compute = data points needed x compute per data point.
pub fn scaling_law_anchor(p: &ScalingAnchorParams) -> Result<f64> {
    if !p.horizon_linear {
        return Err(Error::UnsupportedSublinear);
    }
    let data = positive("scaling_coeff", p.scaling_coeff)?
        * positive("param_count", p.param_count)?.powf(positive("scaling_exponent", p.scaling_exponent)?);
    let per_point = positive("brain_flop_rate", p.brain_flop_rate)?
        * at_least_one("efficiency_factor", p.efficiency_factor)?
        * positive("horizon_seconds", p.horizon_seconds)?;
    Ok(data * per_point)
}

/// Least-squares line through (log10 compute, score); returns the compute at
/// which the line reaches `human_level`.
pub fn dl_extrapolation_anchor(points: &[(f64, f64)], human_level: f64) -> Result<f64> {
    check_benchmark_points(points)?;
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope > 0.0) {
        return Err(Error::Unreachable(format!("fitted slope {slope} is not positive")));
    }
    Ok(10f64.powf(mean_x + (human_level - mean_y) / slope))
}

/// Benchmark points need at least two entries, strictly increasing in compute;
/// scores may not decrease with compute.
pub fn check_benchmark_points(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidParams("need at least two benchmark points".into()));
    }
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidParams("benchmark points must be finite".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[1].0 == w[0].0 || w[1].1 < w[0].1 {
            return Err(Error::NonmonotoneInput);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorComponent {
    pub weight: f64,
    pub median: f64,
    pub sigma_log10: f64,
    /// Whether the evolutionary modifier applies to this component.
    pub evolutionary: bool,
}

/// Mixture of lognormals centred on the anchors, with the evolutionary
/// component's median scaled by `evo_modifier`.
pub fn required_compute_distribution(anchors: &[AnchorComponent], evo_modifier: f64) -> Result<DistributionSpec> {
    if anchors.is_empty() {
        return Err(Error::BadWeights("no anchors".into()));
    }
    if anchors.iter().any(|a| !(a.weight >= 0.0 && a.weight.is_finite())) {
        return Err(Error::BadWeights("anchor weights must be nonnegative".into()));
    }
    let total: f64 = anchors.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadWeights(format!("anchor weights sum to {total}")));
    }
    positive("evo_modifier", evo_modifier)?;
    let mut parts = Vec::with_capacity(anchors.len());
    for a in anchors {
        let median = if a.evolutionary { a.median * evo_modifier } else { a.median };
        positive("anchor median", median)?;
        positive("anchor sigma_log10", a.sigma_log10)?;
        parts.push((
            a.weight,
            DistributionSpec::LogNormal {
                median,
                sigma_log10: a.sigma_log10,
            },
        ));
    }
    if parts.len() == 1 {
        return Ok(parts.pop().unwrap().1);
    }
    Ok(DistributionSpec::Mixture(parts))
}
