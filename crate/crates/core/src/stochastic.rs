//! Distributions for chance nodes and the counter-based random stream.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::{Value, ValueKind};

const WEIGHT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Point(f64),
    Bernoulli(f64),
    Categorical {
        labels: Vec<String>,
        probs: Vec<f64>,
    },
    Uniform(f64, f64),
    /// Parameterized in orders of magnitude: log10(X) ~ N(log10(median), sigma_log10).
    LogNormal {
        median: f64,
        sigma_log10: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    Mixture(Vec<(f64, DistributionSpec)>),
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        match self {
            DistributionSpec::Point(v) if !v.is_finite() => bad(format!("point {v} not finite")),
            DistributionSpec::Bernoulli(p) if !(0.0..=1.0).contains(p) => {
                bad(format!("bernoulli p = {p} outside [0, 1]"))
            }
            DistributionSpec::Categorical { labels, probs } => {
                if labels.is_empty() || labels.len() != probs.len() {
                    return bad("categorical needs one probability per label".into());
                }
                check_simplex(probs)
            }
            DistributionSpec::Uniform(lo, hi) if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                bad(format!("uniform bounds ({lo}, {hi}) need lo < hi"))
            }
            DistributionSpec::LogNormal {
                median,
                sigma_log10,
            } if !(median.is_finite() && *median > 0.0 && sigma_log10.is_finite() && *sigma_log10 > 0.0) => {
                bad(format!(
                    "lognormal needs median > 0 and sigma_log10 > 0, got ({median}, {sigma_log10})"
                ))
            }
            DistributionSpec::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) => {
                bad(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})"))
            }
            DistributionSpec::Mixture(parts) => {
                if parts.is_empty() {
                    return bad("mixture has no components".into());
                }
                let weights: Vec<f64> = parts.iter().map(|(w, _)| *w).collect();
                check_simplex(&weights)?;
                let kinds: Vec<Option<&[String]>> = parts.iter().map(|(_, c)| c.labels()).collect();
                if kinds.iter().any(|k| k != &kinds[0]) {
                    return bad("mixture components produce different value kinds".into());
                }
                parts.iter().try_for_each(|(_, c)| c.validate())
            }
            _ => Ok(()),
        }
    }

    fn labels(&self) -> Option<&[String]> {
        match self {
            DistributionSpec::Categorical { labels, .. } => Some(labels),
            DistributionSpec::Mixture(parts) => parts.first().and_then(|(_, c)| c.labels()),
            _ => None,
        }
    }

    fn is_bool(&self) -> bool {
        match self {
            DistributionSpec::Bernoulli(_) => true,
            DistributionSpec::Mixture(parts) => parts.iter().all(|(_, c)| c.is_bool()),
            _ => false,
        }
    }

    fn is_numeric(&self) -> bool {
        match self {
            DistributionSpec::Point(_)
            | DistributionSpec::Uniform(..)
            | DistributionSpec::LogNormal { .. }
            | DistributionSpec::Normal { .. } => true,
            DistributionSpec::Mixture(parts) => parts.iter().all(|(_, c)| c.is_numeric()),
            _ => false,
        }
    }

    /// Whether draws from this spec can populate a node of `kind`. Numeric
    /// specs also feed Year nodes (draws are floored to a calendar year).
    pub fn fits_kind(&self, kind: &ValueKind) -> bool {
        match kind {
            ValueKind::Bool => self.is_bool(),
            ValueKind::Real { .. } | ValueKind::Year => self.is_numeric(),
            ValueKind::Category { labels } => self.labels() == Some(labels.as_slice()),
            ValueKind::Series { .. } => false,
        }
    }
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::InvalidSpec(format!("weights {weights:?} outside [0, 1]")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidSpec(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Random stream addressed by (seed, sample, node). Each draw advances a
/// private counter, so the k-th draw is a pure function of the four keys.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    sample: u64,
    node: u64,
    counter: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, sample: u64, node: u64) -> Self {
        RngStream {
            seed,
            sample,
            node,
            counter: 0,
        }
    }

    pub fn draws(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut h = mix64(self.seed);
        h = mix64(h ^ self.sample.wrapping_mul(0xD1B5_4A32_D192_ED03));
        h = mix64(h ^ self.node.wrapping_mul(0xAEF1_7502_108E_F2D9));
        h = mix64(h ^ self.counter.wrapping_mul(0xDB4F_0B91_75AE_2165));
        self.counter += 1;
        h
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        std_normal().inverse_cdf(u)
    }

    /// Number of failures before the first success of a Bernoulli(p)
    /// process, capped at `cap` (returned when success never comes in time).
    pub fn geometric(&mut self, p: f64, cap: u64) -> u64 {
        if p >= 1.0 {
            return 0;
        }
        if p <= 0.0 {
            return cap;
        }
        let u = self.uniform();
        let k = (u.ln() / (-p).ln_1p()).floor();
        if k.is_finite() && k < cap as f64 {
            k as u64
        } else {
            cap
        }
    }

    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left u above the running total: take the last positive entry.
        probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

/// Draw one value. Numeric specs yield `Value::Real`.
pub fn sample(spec: &DistributionSpec, stream: &mut RngStream) -> Result<Value> {
    spec.validate()?;
    Ok(draw(spec, stream))
}

/// Draw without re-validating; callers must have validated `spec`.
pub(crate) fn draw(spec: &DistributionSpec, stream: &mut RngStream) -> Value {
    match spec {
        DistributionSpec::Point(v) => Value::Real(*v),
        DistributionSpec::Bernoulli(p) => Value::Bool(stream.bernoulli(*p)),
        DistributionSpec::Categorical { probs, .. } => {
            Value::Category(stream.categorical(probs) as u32)
        }
        DistributionSpec::Uniform(lo, hi) => Value::Real(lo + (hi - lo) * stream.uniform()),
        DistributionSpec::LogNormal {
            median,
            sigma_log10,
        } => Value::Real(10f64.powf(median.log10() + sigma_log10 * stream.standard_normal())),
        DistributionSpec::Normal { mean, sd } => Value::Real(mean + sd * stream.standard_normal()),
        DistributionSpec::Mixture(parts) => {
            let weights: Vec<f64> = parts.iter().map(|(w, _)| *w).collect();
            let k = stream.categorical(&weights);
            draw(&parts[k].1, stream)
        }
    }
}

/// Fit a lognormal to two quantiles: P(X <= q_lo) = p_lo, P(X <= q_hi) = p_hi.
pub fn lognormal_from_quantiles(p_lo: f64, q_lo: f64, p_hi: f64, q_hi: f64) -> Result<DistributionSpec> {
    if !(0.0 < p_lo && p_lo < p_hi && p_hi < 1.0) {
        return Err(Error::BadQuantiles(format!(
            "need 0 < p_lo < p_hi < 1, got {p_lo}, {p_hi}"
        )));
    }
    if !(q_lo > 0.0 && q_lo < q_hi && q_hi.is_finite()) {
        return Err(Error::BadQuantiles(format!(
            "need 0 < q_lo < q_hi, got {q_lo}, {q_hi}"
        )));
    }
    let (z_lo, z_hi) = (normal_quantile(p_lo), normal_quantile(p_hi));
    let (l_lo, l_hi) = (q_lo.log10(), q_hi.log10());
    let sigma_log10 = (l_hi - l_lo) / (z_hi - z_lo);
    let mu = l_lo - sigma_log10 * z_lo;
    Ok(DistributionSpec::LogNormal {
        median: 10f64.powf(mu),
        sigma_log10,
    })
}

pub fn eval_cdf(spec: &DistributionSpec, x: f64) -> Result<f64> {
    spec.validate()?;
    cdf(spec, x)
}

fn cdf(spec: &DistributionSpec, x: f64) -> Result<f64> {
    Ok(match spec {
        DistributionSpec::Point(v) => f64::from(u8::from(x >= *v)),
        // Bernoulli read as a 0/1 variable.
        DistributionSpec::Bernoulli(p) => {
            if x < 0.0 {
                0.0
            } else if x < 1.0 {
                1.0 - p
            } else {
                1.0
            }
        }
        DistributionSpec::Categorical { .. } => {
            return Err(Error::Unsupported("categorical labels have no order".into()))
        }
        DistributionSpec::Uniform(lo, hi) => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        DistributionSpec::LogNormal {
            median,
            sigma_log10,
        } => {
            if x <= 0.0 {
                0.0
            } else {
                normal_cdf((x.log10() - median.log10()) / sigma_log10)
            }
        }
        DistributionSpec::Normal { mean, sd } => normal_cdf((x - mean) / sd),
        DistributionSpec::Mixture(parts) => {
            let mut total = 0.0;
            for (w, c) in parts {
                total += w * cdf(c, x)?;
            }
            total.clamp(0.0, 1.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lognormal(median: f64, sigma_log10: f64) -> DistributionSpec {
        DistributionSpec::LogNormal {
            median,
            sigma_log10,
        }
    }

    #[test]
    fn degenerate_draws() {
        let mut s = RngStream::new(1, 2, 3);
        assert_eq!(sample(&DistributionSpec::Point(3.0), &mut s), Ok(Value::Real(3.0)));
        for _ in 0..1000 {
            assert_eq!(
                sample(&DistributionSpec::Bernoulli(1.0), &mut s),
                Ok(Value::Bool(true))
            );
            assert_eq!(
                sample(&DistributionSpec::Bernoulli(0.0), &mut s),
                Ok(Value::Bool(false))
            );
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = [
            DistributionSpec::Bernoulli(1.5),
            DistributionSpec::Uniform(2.0, 2.0),
            lognormal(0.0, 1.0),
            lognormal(1.0, 0.0),
            DistributionSpec::Normal { mean: 0.0, sd: -1.0 },
            DistributionSpec::Categorical {
                labels: vec!["a".into(), "b".into()],
                probs: vec![0.5, 0.4],
            },
            DistributionSpec::Mixture(vec![]),
        ];
        for spec in bad {
            let mut s = RngStream::new(0, 0, 0);
            assert_eq!(sample(&spec, &mut s).unwrap_err().code(), "INVALID_SPEC", "{spec:?}");
        }
    }

    #[test]
    fn stream_is_pure_function_of_keys() {
        let a: Vec<u64> = {
            let mut s = RngStream::new(42, 7, 3);
            (0..5).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = RngStream::new(42, 7, 3);
            (0..5).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut other = RngStream::new(42, 7, 4);
        assert_ne!(a[0], other.next_u64());
        let mut other = RngStream::new(42, 8, 3);
        assert_ne!(a[0], other.next_u64());
        let mut other = RngStream::new(43, 7, 3);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn uniform_is_open_interval() {
        let mut s = RngStream::new(0, 0, 0);
        for _ in 0..100_000 {
            let u = s.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn lognormal_median_of_log10() {
        let spec = lognormal(1e33, 2.0);
        let n = 100_000;
        let mut logs: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = RngStream::new(11, i, 0);
                sample(&spec, &mut s).unwrap().as_real().unwrap().log10()
            })
            .collect();
        logs.sort_by(f64::total_cmp);
        let median = (logs[n as usize / 2 - 1] + logs[n as usize / 2]) / 2.0;
        assert!((median - 33.0).abs() < 2.341 * 3.0 / (n as f64).sqrt(), "{median}");
    }

    #[test]
    fn quantile_fit_examples() {
        let spec = lognormal_from_quantiles(0.1, 1e30, 0.9, 1e36).unwrap();
        let DistributionSpec::LogNormal {
            median,
            sigma_log10,
        } = spec
        else {
            unreachable!()
        };
        assert!((median / 1e33 - 1.0).abs() < 1e-9);
        // Independent z(0.9) by bisection on the normal CDF.
        let (mut lo, mut hi) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.9 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((sigma_log10 - 3.0 / lo).abs() < 1e-9);
        assert!((sigma_log10 - 2.3409).abs() < 1e-4);
        assert!((eval_cdf(&spec, 1e30).unwrap() - 0.1).abs() < 1e-9);
        assert!((eval_cdf(&spec, 1e36).unwrap() - 0.9).abs() < 1e-9);

        assert_eq!(
            lognormal_from_quantiles(0.25, 4.0, 0.75, 4.0).unwrap_err().code(),
            "BAD_QUANTILES"
        );
        assert_eq!(
            lognormal_from_quantiles(0.75, 1.0, 0.25, 4.0).unwrap_err().code(),
            "BAD_QUANTILES"
        );
    }

    #[test]
    fn cdf_examples() {
        let point = DistributionSpec::Point(3.0);
        assert_eq!(eval_cdf(&point, 2.0), Ok(0.0));
        assert_eq!(eval_cdf(&point, 3.0), Ok(1.0));
        assert_eq!(eval_cdf(&DistributionSpec::Uniform(0.0, 10.0), 2.5), Ok(0.25));
        let mix = DistributionSpec::Mixture(vec![
            (0.5, DistributionSpec::Point(0.0)),
            (0.5, DistributionSpec::Point(10.0)),
        ]);
        assert_eq!(eval_cdf(&mix, 5.0), Ok(0.5));
        let cat = DistributionSpec::Categorical {
            labels: vec!["x".into()],
            probs: vec![1.0],
        };
        assert_eq!(eval_cdf(&cat, 0.0).unwrap_err().code(), "UNSUPPORTED");
    }

    #[test]
    fn geometric_counts_failures() {
        let mut s = RngStream::new(5, 0, 0);
        assert_eq!(s.geometric(1.0, 100), 0);
        assert_eq!(s.geometric(0.0, 100), 100);
        let n = 100_000;
        let p = 0.2;
        let mean: f64 = (0..n)
            .map(|i| RngStream::new(5, i, 1).geometric(p, u64::MAX) as f64)
            .sum::<f64>()
            / n as f64;
        let expected = (1.0 - p) / p;
        let sd = ((1.0 - p) / (p * p) / n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * sd, "{mean}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn leaf() -> impl Strategy<Value = DistributionSpec> {
            prop_oneof![
                (-5.0f64..5.0).prop_map(DistributionSpec::Point),
                (0.0f64..=1.0).prop_map(DistributionSpec::Bernoulli),
                (-10.0f64..10.0, 0.1f64..10.0).prop_map(|(lo, w)| DistributionSpec::Uniform(lo, lo + w)),
                (1e-3f64..1e3, 0.05f64..3.0).prop_map(|(m, s)| lognormal(m, s)),
                (-10.0f64..10.0, 0.1f64..5.0).prop_map(|(mean, sd)| DistributionSpec::Normal { mean, sd }),
            ]
        }

        fn numeric_spec() -> impl Strategy<Value = DistributionSpec> {
            let numeric = || leaf().prop_filter("numeric", |s| !matches!(s, DistributionSpec::Bernoulli(_)));
            prop_oneof![
                numeric(),
                (0.05f64..0.95, numeric(), numeric())
                    .prop_map(|(w, a, b)| DistributionSpec::Mixture(vec![(w, a), (1.0 - w, b)])),
            ]
        }

        /// Kolmogorov-Smirnov distance between draws and the analytic CDF,
        /// checked on both sides of every jump.
        fn ks_distance(spec: &DistributionSpec, seed: u64, n: usize) -> f64 {
            let mut xs: Vec<f64> = (0..n as u64)
                .map(|i| {
                    let mut s = RngStream::new(seed, i, 0);
                    match draw(spec, &mut s) {
                        Value::Real(x) => x,
                        Value::Bool(b) => f64::from(u8::from(b)),
                        other => panic!("{other:?}"),
                    }
                })
                .collect();
            xs.sort_by(f64::total_cmp);
            let mut d: f64 = 0.0;
            let mut i = 0;
            while i < n {
                let x = xs[i];
                let mut j = i;
                while j < n && xs[j] == x {
                    j += 1;
                }
                let below = cdf(spec, x.next_down()).unwrap();
                let at = cdf(spec, x).unwrap();
                d = d.max((i as f64 / n as f64 - below).abs());
                d = d.max((j as f64 / n as f64 - at).abs());
                i = j;
            }
            d
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn draws_match_cdf_within_ks_band(spec in prop_oneof![leaf(), numeric_spec()], seed in any::<u64>()) {
                let n = 100_000;
                let d = ks_distance(&spec, seed, n);
                prop_assert!(d < 1.628 / (n as f64).sqrt(), "D = {} for {:?}", d, spec);
            }
        }

        proptest! {
            #[test]
            fn cdf_is_monotone_with_limits(spec in numeric_spec(), a in -1e3f64..1e3, b in -1e3f64..1e3) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(eval_cdf(&spec, lo).unwrap() <= eval_cdf(&spec, hi).unwrap());
                prop_assert!(eval_cdf(&spec, -1e300).unwrap() < 1e-9);
                prop_assert!(eval_cdf(&spec, 1e300).unwrap() > 1.0 - 1e-9);
            }

            #[test]
            fn quantile_fit_round_trips(
                p_lo in 0.01f64..0.49,
                p_hi in 0.51f64..0.99,
                l_lo in -20.0f64..30.0,
                width in 0.01f64..10.0,
            ) {
                let (q_lo, q_hi) = (10f64.powf(l_lo), 10f64.powf(l_lo + width));
                let spec = lognormal_from_quantiles(p_lo, q_lo, p_hi, q_hi).unwrap();
                prop_assert!((eval_cdf(&spec, q_lo).unwrap() - p_lo).abs() < 1e-9);
                prop_assert!((eval_cdf(&spec, q_hi).unwrap() - p_hi).abs() < 1e-9);
            }

            #[test]
            fn symmetric_quantiles_give_geometric_mean(p in 0.01f64..0.49, l_lo in -10.0f64..30.0, width in 0.01f64..10.0) {
                let (q_lo, q_hi) = (10f64.powf(l_lo), 10f64.powf(l_lo + width));
                let DistributionSpec::LogNormal { median, .. } =
                    lognormal_from_quantiles(p, q_lo, 1.0 - p, q_hi).unwrap() else { unreachable!() };
                prop_assert!((median / (q_lo * q_hi).sqrt() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn draws_lie_in_support(spec in leaf(), seed in any::<u64>(), i in any::<u64>()) {
                let mut s = RngStream::new(seed, i, 0);
                match (&spec, draw(&spec, &mut s)) {
                    (DistributionSpec::Point(v), Value::Real(x)) => prop_assert_eq!(*v, x),
                    (DistributionSpec::Uniform(lo, hi), Value::Real(x)) => prop_assert!(*lo <= x && x <= *hi),
                    (DistributionSpec::LogNormal { .. }, Value::Real(x)) => prop_assert!(x > 0.0),
                    (DistributionSpec::Normal { .. }, Value::Real(x)) => prop_assert!(x.is_finite()),
                    (DistributionSpec::Bernoulli(_), Value::Bool(_)) => {}
                    (spec, v) => prop_assert!(false, "{:?} gave {:?}", spec, v),
                }
            }
        }
    }
}
