use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PredictionDistribution, LOG_CLAMP};

/// Distance between a prediction and the one-hot of the true next item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    Wasserstein,
    Kl,
    TotalVariation,
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wasserstein" | "emd" => Ok(DistanceKind::Wasserstein),
            "kl" => Ok(DistanceKind::Kl),
            "total_variation" | "tv" => Ok(DistanceKind::TotalVariation),
            other => Err(Error::config(
                "distance_kind",
                format!("unknown distance `{other}`"),
            )),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Wasserstein => "wasserstein",
            DistanceKind::Kl => "kl",
            DistanceKind::TotalVariation => "total_variation",
        })
    }
}

/// Earth mover's distance between two distributions on the points
/// `0, 1, ..., n-1` of the integer line, as the L1 gap between CDFs.
pub fn wasserstein_1d(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(q).take(p.len().saturating_sub(1)) {
        cp += a;
        cq += b;
        total += (cp - cq).abs();
    }
    total
}

/// One-hot specialisation of [`wasserstein_1d`]: the target's CDF is a step at `target`.
fn wasserstein_to_one_hot(target: usize, probs: &[f64]) -> f64 {
    let mut cdf = 0.0;
    let mut total = 0.0;
    for (k, p) in probs.iter().enumerate().take(probs.len().saturating_sub(1)) {
        cdf += p;
        total += if k < target { cdf } else { (1.0 - cdf).abs() };
    }
    total
}

pub fn distribution_distance(
    kind: DistanceKind,
    target: usize,
    pred: &PredictionDistribution,
) -> Result<f64> {
    let probs = &pred.probs;
    if target >= probs.len() {
        return Err(Error::CatalogViolation {
            kind: "item",
            id: target,
            size: probs.len(),
        });
    }
    let mass: f64 = probs.iter().sum();
    if (mass - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
        return Err(Error::Contract(format!(
            "prediction is not a distribution (mass {mass})"
        )));
    }
    Ok(match kind {
        DistanceKind::Kl => -probs[target].max(LOG_CLAMP).ln(),
        DistanceKind::TotalVariation => {
            let other = probs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != target)
                .map(|(_, &p)| p)
                .fold(0.0, f64::max);
            (1.0 - probs[target]).max(other)
        }
        DistanceKind::Wasserstein => wasserstein_to_one_hot(target, probs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(probs: Vec<f64>) -> PredictionDistribution {
        PredictionDistribution {
            scores: vec![0.0; probs.len()],
            probs,
        }
    }

    fn all(target: usize, p: &PredictionDistribution) -> [f64; 3] {
        [
            distribution_distance(DistanceKind::Wasserstein, target, p).unwrap(),
            distribution_distance(DistanceKind::Kl, target, p).unwrap(),
            distribution_distance(DistanceKind::TotalVariation, target, p).unwrap(),
        ]
    }

    #[test]
    fn one_hot_prediction_has_zero_distance() {
        assert_eq!(all(1, &pred(vec![0.0, 1.0, 0.0])), [0.0, 0.0, 0.0]);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn kl_of_half() {
        let d = distribution_distance(DistanceKind::Kl, 0, &pred(vec![0.5, 0.5])).unwrap();
        assert!((d - 0.6931).abs() < 1e-4);
        assert_eq!(d, 2f64.ln());
    }

    #[test]
    fn tv_example() {
        let d = distribution_distance(DistanceKind::TotalVariation, 0, &pred(vec![0.5, 0.3, 0.2]))
            .unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn wasserstein_examples() {
        let w =
            |t, p: Vec<f64>| distribution_distance(DistanceKind::Wasserstein, t, &pred(p)).unwrap();
        assert_eq!(w(0, vec![0.5, 0.5, 0.0]), 0.5);
        assert_eq!(w(0, vec![0.0, 0.0, 1.0]), 2.0);
        assert_eq!(w(2, vec![1.0, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn one_hot_form_matches_general_cdf_form() {
        let p = vec![0.1, 0.05, 0.3, 0.25, 0.3];
        for t in 0..p.len() {
            let mut y = vec![0.0; p.len()];
            y[t] = 1.0;
            let a = wasserstein_1d(&y, &p);
            let b = distribution_distance(DistanceKind::Wasserstein, t, &pred(p.clone())).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unnormalised_prediction_is_rejected() {
        let err = distribution_distance(DistanceKind::Kl, 0, &pred(vec![0.5, 0.6])).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            "tv".parse::<DistanceKind>().unwrap(),
            DistanceKind::TotalVariation
        );
        assert_eq!(
            DistanceKind::Wasserstein
                .to_string()
                .parse::<DistanceKind>()
                .unwrap(),
            DistanceKind::Wasserstein
        );
        assert!("cosine".parse::<DistanceKind>().is_err());
    }
}
