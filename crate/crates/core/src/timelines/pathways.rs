//! Inside-view pathways: arrival once hardware and software requirements are both met.

use crate::error::{Error, Result};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pathway {
    Evolutionary,
    CurrentDl,
    Hybrid,
    CogSci,
    Wbe,
    Neuromorphic,
    Other,
}

impl Pathway {
    /// Tie-break order.
    pub const ALL: [Pathway; 7] = [
        Pathway::Evolutionary,
        Pathway::CurrentDl,
        Pathway::Hybrid,
        Pathway::CogSci,
        Pathway::Wbe,
        Pathway::Neuromorphic,
        Pathway::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Pathway::Evolutionary => "evolutionary",
            Pathway::CurrentDl => "current_dl",
            Pathway::Hybrid => "hybrid",
            Pathway::CogSci => "cog_sci",
            Pathway::Wbe => "wbe",
            Pathway::Neuromorphic => "neuromorphic",
            Pathway::Other => "other",
        }
    }
}

/// Labels of the "type of HLMI" category: the pathways plus `none`.
pub fn hlmi_type_labels() -> Vec<String> {
    Pathway::ALL
        .iter()
        .map(|p| p.label().to_string())
        .chain(std::iter::once("none".to_string()))
        .collect()
}

/// First year with effective compute at or above `required` that is also no
/// earlier than `software_ready`.
pub fn pathway_arrival_year(
    required: f64,
    algo_progress: &[f64],
    compute: &[f64],
    software_ready: Option<i32>,
    start: i32,
) -> Result<Option<i32>> {
    if algo_progress.len() != compute.len() {
        return Err(Error::HorizonMismatch(format!(
            "algorithmic progress has {} years, compute has {}",
            algo_progress.len(),
            compute.len()
        )));
    }
    let Some(ready) = software_ready else {
        return Ok(None);
    };
    Ok(compute
        .iter()
        .zip(algo_progress)
        .enumerate()
        .map(|(i, (c, a))| (start + i as i32, c * a))
        .find(|&(year, effective)| year >= ready && effective >= required)
        .map(|(year, _)| year))
}

/// Earliest pathway year and its label; `(None, None)` when none arrives.
pub fn inside_view_timeline(samples: &[(Pathway, Option<i32>)]) -> Result<(Option<i32>, Option<Pathway>)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no pathway samples".into()));
    }
    let best = samples
        .iter()
        .filter_map(|&(p, y)| y.map(|y| (y, p)))
        .min();
    Ok(match best {
        Some((y, p)) => (Some(y), Some(p)),
        None => (None, None),
    })
}

/// Methods appear each year with probability `p_new`; each one starts trying
/// `delay` years later and then succeeds each year with `hazard`.
pub fn other_methods_pathway(
    p_new: f64,
    hazard: f64,
    delay: u32,
    horizon: (i32, i32),
    stream: &mut RngStream,
) -> Result<Option<i32>> {
    for (what, p) in [("p_new", p_new), ("hazard", hazard)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParams(format!("{what} = {p} outside [0, 1]")));
        }
    }
    let n = (horizon.1 - horizon.0 + 1).max(0) as usize;
    let mut arrivals = vec![0u32; n];
    for t in 0..n {
        if stream.bernoulli(p_new) {
            arrivals[t] += 1;
        }
        let active: u32 = match t.checked_sub(delay as usize) {
            Some(last) => arrivals[..=last].iter().sum(),
            None => 0,
        };
        if active > 0 && stream.bernoulli(1.0 - (1.0 - hazard).powi(active as i32)) {
            return Ok(Some(horizon.0 + t as i32));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn compute_crossing(cross: i32) -> Vec<f64> {
        (2022..=2100).map(|y| if y >= cross { 1e30 } else { 1e20 }).collect()
    }

    #[test]
    fn arrival_examples() {
        let ones = vec![1.0; 79];
        let c = compute_crossing(2035);
        assert_eq!(pathway_arrival_year(1e25, &ones, &c, Some(2030), 2022), Ok(Some(2035)));
        let c = compute_crossing(2030);
        assert_eq!(pathway_arrival_year(1e25, &ones, &c, Some(2041), 2022), Ok(Some(2041)));
        assert_eq!(pathway_arrival_year(1e40, &ones, &c, Some(2022), 2022), Ok(None));
        assert_eq!(pathway_arrival_year(1e25, &ones, &c, None, 2022), Ok(None));
        assert_eq!(
            pathway_arrival_year(1e25, &ones[1..], &c, Some(2022), 2022).unwrap_err().code(),
            "HORIZON_MISMATCH"
        );
    }

    #[test]
    fn algorithmic_progress_multiplies_compute() {
        let c = vec![1e20; 5];
        let algo = [1.0, 10.0, 100.0, 1000.0, 1e4];
        assert_eq!(pathway_arrival_year(1e23, &algo, &c, Some(2000), 2022), Ok(Some(2025)));
    }

    #[test]
    fn inside_view_examples() {
        use Pathway::*;
        assert_eq!(
            inside_view_timeline(&[(Evolutionary, Some(2040)), (CurrentDl, Some(2035))]),
            Ok((Some(2035), Some(CurrentDl)))
        );
        assert_eq!(inside_view_timeline(&[(Wbe, None), (Other, None)]), Ok((None, None)));
        assert_eq!(
            inside_view_timeline(&[(Hybrid, Some(2035)), (CurrentDl, Some(2035))]),
            Ok((Some(2035), Some(CurrentDl)))
        );
        assert_eq!(inside_view_timeline(&[]).unwrap_err().code(), "EMPTY_INPUT");
    }

    #[test]
    fn tie_break_table() {
        // Every ordered pair: the earlier pathway in the declared order wins a tie.
        for (i, a) in Pathway::ALL.iter().enumerate() {
            for (j, b) in Pathway::ALL.iter().enumerate() {
                let got = inside_view_timeline(&[(*b, Some(2050)), (*a, Some(2050))]).unwrap().1.unwrap();
                assert_eq!(got, if i <= j { *a } else { *b });
            }
        }
    }

    #[test]
    fn other_methods_examples() {
        let mut s = RngStream::new(1, 0, 0);
        assert_eq!(other_methods_pathway(0.0, 0.5, 20, (2022, 2100), &mut s), Ok(None));
        assert_eq!(other_methods_pathway(1.0, 1.0, 20, (2022, 2100), &mut s), Ok(Some(2042)));
        assert_eq!(
            other_methods_pathway(1.5, 1.0, 20, (2022, 2100), &mut s).unwrap_err().code(),
            "INVALID_PARAMS"
        );
    }

    #[test]
    fn other_methods_single_method_oracle() {
        // With p_new = 1 and no delay, k methods are active in year k (1-based),
        // so P(no success by year T) = prod_k (1-h)^k = (1-h)^(T(T+1)/2).
        let h = 0.01;
        let n = 40_000u64;
        let by_2026 = (0..n)
            .filter(|&i| {
                let mut s = RngStream::new(9, i, 0);
                matches!(other_methods_pathway(1.0, h, 0, (2022, 2100), &mut s).unwrap(), Some(y) if y <= 2026)
            })
            .count() as f64
            / n as f64;
        let exact = 1.0 - (1.0 - h).powi(15);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((by_2026 - exact).abs() < 4.0 * se, "{by_2026} vs {exact}");
    }

    proptest! {
        #[test]
        fn inside_view_is_the_minimum(years in prop::collection::vec(prop::option::of(2022i32..2100), 7)) {
            let samples: Vec<_> = Pathway::ALL.iter().copied().zip(years.iter().copied()).collect();
            let (y, p) = inside_view_timeline(&samples).unwrap();
            for (_, other) in &samples {
                if let Some(o) = other {
                    prop_assert!(y.unwrap() <= *o);
                }
            }
            prop_assert_eq!(y.is_some(), p.is_some());
        }
    }
}
