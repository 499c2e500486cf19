//! Simulated top-1 retrieval with recall X.
//!
//! A system with recall@1 = X returns the golden passage for a fraction X of
//! the examples and a non-evidence passage otherwise, so its expected metrics
//! are the X-weighted mix of the two endpoint experiments. F1 is recomputed
//! from the mixed pair.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::RetrievalError;
use crate::metrics::{harmonic_f1, ExperimentPoint, ScoredResponse};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    /// Recall fraction in [0, 1].
    pub x: f64,
    pub sensibleness: f64,
    pub attribution: f64,
    pub f1: f64,
}

impl RecallPoint {
    fn mix(x: f64, sens_hit: f64, attr_hit: f64, sens_miss: f64, attr_miss: f64) -> Self {
        let sensibleness = x * sens_hit + (1.0 - x) * sens_miss;
        let attribution = x * attr_hit + (1.0 - x) * attr_miss;
        Self { x, sensibleness, attribution, f1: harmonic_f1(sensibleness, attribution) }
    }
}

fn check_grid(grid: &[f64]) -> Result<(), RetrievalError> {
    match grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        Some(&x) => Err(RetrievalError::Domain(x)),
        None => Ok(()),
    }
}

/// Interpolate aggregated metrics between the non-evidence point (X = 0) and
/// the golden point (X = 1).
///
/// The same operation produces the top-k lines when `golden` is the top-k
/// golden-included experiment and `nonevidence` the top-1 golden one.
pub fn interpolate_recall(
    golden: &ExperimentPoint,
    nonevidence: &ExperimentPoint,
    grid: &[f64],
) -> Result<Vec<RecallPoint>, RetrievalError> {
    check_grid(grid)?;
    Ok(grid
        .iter()
        .map(|&x| {
            if x == 1.0 {
                // endpoints reproduce the inputs exactly, f1 included
                RecallPoint {
                    x,
                    sensibleness: golden.mean_sensibleness,
                    attribution: golden.mean_attribution,
                    f1: golden.f1,
                }
            } else if x == 0.0 {
                RecallPoint {
                    x,
                    sensibleness: nonevidence.mean_sensibleness,
                    attribution: nonevidence.mean_attribution,
                    f1: nonevidence.f1,
                }
            } else {
                RecallPoint::mix(
                    x,
                    golden.mean_sensibleness,
                    golden.mean_attribution,
                    nonevidence.mean_sensibleness,
                    nonevidence.mean_attribution,
                )
            }
        })
        .collect())
}

/// Per-example mixture: each example contributes X of its golden-run scores
/// and 1-X of its non-evidence-run scores; the mixture is then averaged.
/// By linearity of the mean this agrees with [`interpolate_recall`].
pub fn interpolate_recall_per_example(
    golden: &[ScoredResponse],
    nonevidence: &[ScoredResponse],
    grid: &[f64],
) -> Result<Vec<RecallPoint>, RetrievalError> {
    check_grid(grid)?;
    if golden.is_empty() || golden.len() != nonevidence.len() {
        return Err(RetrievalError::Misaligned(format!(
            "{} golden vs {} non-evidence responses",
            golden.len(),
            nonevidence.len()
        )));
    }
    let by_id: BTreeMap<&str, &ScoredResponse> = nonevidence.iter().map(|r| (r.example_id.as_str(), r)).collect();
    let mut pairs = Vec::with_capacity(golden.len());
    for g in golden {
        let n = by_id
            .get(g.example_id.as_str())
            .ok_or_else(|| RetrievalError::Misaligned(format!("no non-evidence response for '{}'", g.example_id)))?;
        pairs.push((g, *n));
    }
    let count = pairs.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| {
            let (mut s, mut a) = (0.0, 0.0);
            for (g, n) in &pairs {
                s += x * g.sensibleness + (1.0 - x) * n.sensibleness;
                a += x * g.attribution_score + (1.0 - x) * n.attribution_score;
            }
            let (s, a) = (s / count, a / count);
            RecallPoint { x, sensibleness: s, attribution: a, f1: harmonic_f1(s, a) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(s: f64, a: f64) -> ExperimentPoint {
        ExperimentPoint::from_means("p", s, a, 1)
    }

    #[test]
    fn endpoints_and_midpoint() {
        let pts = interpolate_recall(&point(0.9, 0.8), &point(0.7, 0.1), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!((pts[0].sensibleness, pts[0].attribution), (0.7, 0.1));
        assert_eq!((pts[2].sensibleness, pts[2].attribution), (0.9, 0.8));
        assert!((pts[1].sensibleness - 0.8).abs() < 1e-12);
        assert!((pts[1].attribution - 0.45).abs() < 1e-12);
        // 2 * 0.8 * 0.45 / 1.25
        assert!((pts[1].f1 - 0.576).abs() < 1e-12);
    }

    #[test]
    fn out_of_domain() {
        assert!(matches!(
            interpolate_recall(&point(0.9, 0.8), &point(0.7, 0.1), &[0.5, 1.2]),
            Err(RetrievalError::Domain(x)) if x == 1.2
        ));
        assert!(interpolate_recall(&point(0.9, 0.8), &point(0.7, 0.1), &[f64::NAN]).is_err());
    }

    fn resp(id: &str, s: f64, a: f64) -> ScoredResponse {
        ScoredResponse {
            example_id: id.into(),
            prompt_label: "p".into(),
            response_text: "r".into(),
            sensibleness: s,
            attribution_score: a,
            attributable: a >= 0.5,
        }
    }

    #[test]
    fn per_example_matches_aggregate() {
        let golden = vec![resp("a", 0.9, 0.7), resp("b", 0.5, 1.0), resp("c", 0.2, 0.4)];
        let non = vec![resp("c", 0.6, 0.1), resp("a", 1.0, 0.0), resp("b", 0.3, 0.2)];
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let gp = ExperimentPoint::from_responses("g", &golden).unwrap();
        let np = ExperimentPoint::from_responses("n", &non).unwrap();
        let agg = interpolate_recall(&gp, &np, &grid).unwrap();
        let per = interpolate_recall_per_example(&golden, &non, &grid).unwrap();
        for (a, p) in agg.iter().zip(&per) {
            assert!((a.sensibleness - p.sensibleness).abs() < 1e-12);
            assert!((a.attribution - p.attribution).abs() < 1e-12);
            assert!((a.f1 - p.f1).abs() < 1e-12);
        }
        assert!(interpolate_recall_per_example(&golden, &non[..2], &grid).is_err());
    }
}
