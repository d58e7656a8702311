//! Naive Bayes classifier for crux hypotheses, in odds form.

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Where an evidence item's observation comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EvidenceSource {
    /// A Bool parent node, read per sample.
    Node(NodeId),
    Fixed(bool),
    Missing,
}

/// Evidence descriptor as stored on a classifier node.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceSpec {
    pub name: String,
    pub p_given_h: f64,
    pub p_given_not_h: f64,
    pub source: EvidenceSource,
}

impl EvidenceSpec {
    pub fn check(&self) -> Result<()> {
        for (what, p) in [("p_given_h", self.p_given_h), ("p_given_not_h", self.p_given_not_h)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParams(format!(
                    "evidence `{}`: {what} = {p} must lie strictly between 0 and 1",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// One likelihood pair with its observation for the current sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceItem {
    pub name: String,
    pub p_given_h: f64,
    pub p_given_not_h: f64,
    pub observed: Option<bool>,
}

impl EvidenceItem {
    pub fn new(name: &str, p_given_h: f64, p_given_not_h: f64, observed: Option<bool>) -> Self {
        EvidenceItem {
            name: name.to_string(),
            p_given_h,
            p_given_not_h,
            observed,
        }
    }

    fn likelihood_ratio(&self) -> Option<f64> {
        self.observed.map(|seen| {
            if seen {
                self.p_given_h / self.p_given_not_h
            } else {
                (1.0 - self.p_given_h) / (1.0 - self.p_given_not_h)
            }
        })
    }
}

/// Posterior P(H | observed evidence). Unobserved items contribute nothing.
///
/// Likelihood ratios are multiplied in sorted order so the result does not
/// depend on the order the items were listed in.
pub fn naive_bayes_posterior(prior: f64, evidence: &[EvidenceItem]) -> Result<f64> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(Error::DegeneratePrior(prior));
    }
    let mut ratios = Vec::with_capacity(evidence.len());
    for item in evidence {
        EvidenceSpec {
            name: item.name.clone(),
            p_given_h: item.p_given_h,
            p_given_not_h: item.p_given_not_h,
            source: EvidenceSource::Missing,
        }
        .check()?;
        ratios.extend(item.likelihood_ratio());
    }
    ratios.sort_by(f64::total_cmp);
    let odds = ratios.iter().fold(prior / (1.0 - prior), |acc, r| acc * r);
    let posterior = odds / (1.0 + odds);
    let posterior = if posterior.is_nan() { 1.0 } else { posterior };
    Ok(posterior.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_posteriors() {
        assert_eq!(naive_bayes_posterior(0.5, &[]), Ok(0.5));
        let yes = EvidenceItem::new("e", 0.9, 0.3, Some(true));
        assert!((naive_bayes_posterior(0.5, &[yes]).unwrap() - 0.75).abs() < 1e-12);
        let no = EvidenceItem::new("e", 0.9, 0.3, Some(false));
        assert!((naive_bayes_posterior(0.5, &[no]).unwrap() - 0.125).abs() < 1e-12);
        let missing = EvidenceItem::new("e", 0.9, 0.3, None);
        assert_eq!(naive_bayes_posterior(0.3, &[missing]), Ok(0.3));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(naive_bayes_posterior(0.0, &[]).unwrap_err().code(), "DEGENERATE_PRIOR");
        assert_eq!(naive_bayes_posterior(1.0, &[]).unwrap_err().code(), "DEGENERATE_PRIOR");
        let certain = EvidenceItem::new("e", 1.0, 0.3, Some(true));
        assert_eq!(
            naive_bayes_posterior(0.5, &[certain]).unwrap_err().code(),
            "INVALID_PARAMS"
        );
    }

    fn item() -> impl Strategy<Value = EvidenceItem> {
        (0.01f64..0.99, 0.01f64..0.99, prop::option::of(any::<bool>()))
            .prop_map(|(a, b, o)| EvidenceItem::new("e", a, b, o))
    }

    proptest! {
        #[test]
        fn order_invariant(prior in 0.01f64..0.99, items in prop::collection::vec(item(), 0..10), seed in any::<u64>()) {
            let base = naive_bayes_posterior(prior, &items).unwrap();
            let mut shuffled = items.clone();
            let mut s = crate::stochastic::RngStream::new(seed, 0, 0);
            for i in (1..shuffled.len()).rev() {
                let j = (s.next_u64() % (i as u64 + 1)) as usize;
                shuffled.swap(i, j);
            }
            prop_assert_eq!(naive_bayes_posterior(prior, &shuffled).unwrap().to_bits(), base.to_bits());
        }

        #[test]
        fn neutral_item_changes_nothing(prior in 0.01f64..0.99, items in prop::collection::vec(item(), 0..10), p in 0.01f64..0.99, seen in any::<bool>()) {
            let base = naive_bayes_posterior(prior, &items).unwrap();
            let mut more = items.clone();
            more.push(EvidenceItem::new("neutral", p, p, Some(seen)));
            prop_assert_eq!(naive_bayes_posterior(prior, &more).unwrap().to_bits(), base.to_bits());
        }

        #[test]
        fn supporting_item_raises_posterior(prior in 0.01f64..0.99, items in prop::collection::vec(item(), 0..6), lo in 0.01f64..0.5, gap in 0.05f64..0.45) {
            let base = naive_bayes_posterior(prior, &items).unwrap();
            let mut more = items.clone();
            more.push(EvidenceItem::new("support", lo + gap, lo, Some(true)));
            prop_assert!(naive_bayes_posterior(prior, &more).unwrap() > base);
        }

        #[test]
        fn posterior_strictly_inside_unit_interval(prior in 0.001f64..0.999, items in prop::collection::vec(item(), 0..40)) {
            let p = naive_bayes_posterior(prior, &items).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}
