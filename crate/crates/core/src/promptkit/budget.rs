//! Restricted-context sweeps: trade dialog turns for evidence sentences while
//! keeping `dialog_ratio + evidence_ratio` close to 1.
//!
//! Step `s` of `n` targets a dialog ratio of `1 - s/(n-1)`. The kept dialog is
//! the newest suffix of turns whose unit ratio is closest to that target; the
//! kept evidence is the sentence prefix whose ratio is closest to one minus
//! the realized dialog ratio.

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::corpus::Example;
use crate::retrieval::EvidenceDoc;
use crate::text::UnitCounter;

pub const DEFAULT_EPSILON: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetStep {
    pub step: usize,
    /// Newest turns kept (a suffix of history + final query).
    pub kept_dialog_turns: usize,
    /// Leading evidence sentences kept.
    pub kept_evidence_sentences: usize,
    pub dialog_ratio: f64,
    pub evidence_ratio: f64,
}

impl BudgetStep {
    pub fn ratio_sum(&self) -> f64 {
        self.dialog_ratio + self.evidence_ratio
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSweep {
    pub steps: Vec<BudgetStep>,
    pub epsilon: f64,
    /// Steps whose ratio sum misses 1 by more than epsilon.
    pub violations: Vec<usize>,
}

/// Cumulative ratios `r[j]` = share of the total covered by the first `j`
/// items, `r[0] = 0`, `r[n] = 1`. Zero-unit totals fall back to item counts.
fn cumulative_ratios(units: &[usize]) -> Vec<f64> {
    let total: usize = units.iter().sum();
    let n = units.len();
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0usize;
    out.push(0.0);
    for (j, u) in units.iter().enumerate() {
        acc += u;
        out.push(if total == 0 { (j + 1) as f64 / n as f64 } else { acc as f64 / total as f64 });
    }
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Index of the entry closest to `target`; ties go to the lower index.
fn closest(ratios: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (j, r) in ratios.iter().enumerate() {
        if (r - target).abs() < (ratios[best] - target).abs() {
            best = j;
        }
    }
    best
}

pub fn budget_sweep(
    example: &Example,
    evidence: &EvidenceDoc,
    steps: usize,
    counter: &dyn UnitCounter,
    epsilon: f64,
) -> Result<BudgetSweep, PromptError> {
    if steps < 2 {
        return Err(PromptError::Budget(format!("a sweep needs at least 2 steps, got {steps}")));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(PromptError::Budget(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if evidence.sentences.is_empty() {
        return Err(PromptError::Budget("evidence has no sentences".into()));
    }

    // Suffix ratios: dialog_ratios[j] is the share of the newest j turns.
    let mut turn_units: Vec<usize> = example.turns().map(|t| counter.count(&t.text)).collect();
    turn_units.reverse();
    let dialog_ratios = cumulative_ratios(&turn_units);
    let sentence_units: Vec<usize> = evidence.sentences.iter().map(|s| counter.count(s)).collect();
    let evidence_ratios = cumulative_ratios(&sentence_units);
    let n_turns = turn_units.len();
    let n_sentences = sentence_units.len();

    let mut out = Vec::with_capacity(steps);
    let mut violations = Vec::new();
    for step in 0..steps {
        let (kept_turns, kept_sentences) = if step == 0 {
            (n_turns, 0)
        } else if step == steps - 1 {
            (0, n_sentences)
        } else {
            let target = 1.0 - step as f64 / (steps - 1) as f64;
            let kept_turns = closest(&dialog_ratios, target);
            (kept_turns, closest(&evidence_ratios, 1.0 - dialog_ratios[kept_turns]))
        };
        let s = BudgetStep {
            step,
            kept_dialog_turns: kept_turns,
            kept_evidence_sentences: kept_sentences,
            dialog_ratio: dialog_ratios[kept_turns],
            evidence_ratio: evidence_ratios[kept_sentences],
        };
        if (s.ratio_sum() - 1.0).abs() > epsilon {
            violations.push(step);
        }
        out.push(s);
    }
    Ok(BudgetSweep { steps: out, epsilon, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::dialog_example;
    use crate::text::UnitScheme;

    fn equal_fixture() -> Example {
        dialog_example(
            "eq",
            &["aa bb cc", "dd ee ff", "gg hh ii"],
            "jj kk ll",
            "x y",
            "One two three. Four five six. Seven eight nine. Ten eleven twelve.",
        )
    }

    #[test]
    fn two_steps_are_the_endpoints() {
        let ex = equal_fixture();
        let sweep = budget_sweep(&ex, &ex.golden_evidence, 2, &UnitScheme::Whitespace, DEFAULT_EPSILON).unwrap();
        let ends: Vec<(usize, usize)> =
            sweep.steps.iter().map(|s| (s.kept_dialog_turns, s.kept_evidence_sentences)).collect();
        assert_eq!(ends, vec![(4, 0), (0, 4)]);
        assert!(sweep.violations.is_empty());
    }

    #[test]
    fn equal_units_sum_exactly_to_one() {
        let ex = equal_fixture();
        let sweep = budget_sweep(&ex, &ex.golden_evidence, 5, &UnitScheme::Whitespace, 0.0).unwrap();
        let kept: Vec<(usize, usize)> =
            sweep.steps.iter().map(|s| (s.kept_dialog_turns, s.kept_evidence_sentences)).collect();
        assert_eq!(kept, vec![(4, 0), (3, 1), (2, 2), (1, 3), (0, 4)]);
        assert!(sweep.steps.iter().all(|s| s.ratio_sum() == 1.0));
        assert!(sweep.violations.is_empty());
    }

    #[test]
    fn coarse_evidence_reports_violations_instead_of_failing() {
        let ex =
            dialog_example("c", &["a b", "c d", "e f", "g h", "i j", "k l"], "m n", "x y", "Only one sentence here.");
        let sweep = budget_sweep(&ex, &ex.golden_evidence, 5, &UnitScheme::Whitespace, 0.05).unwrap();
        assert!(!sweep.violations.is_empty());
        assert_eq!(sweep.steps.len(), 5);
    }

    #[test]
    fn invalid_inputs() {
        let ex = equal_fixture();
        assert!(budget_sweep(&ex, &ex.golden_evidence, 1, &UnitScheme::Whitespace, 0.05).is_err());
        assert!(budget_sweep(&ex, &ex.golden_evidence, 3, &UnitScheme::Whitespace, -1.0).is_err());
    }

    #[test]
    fn counter_swap_keeps_endpoint_structure() {
        let ex = dialog_example(
            "r",
            &["tiny", "a considerably longer answer turn"],
            "what happened afterwards in the end",
            "x y",
            "Short. A much longer second sentence follows here. Third one.",
        );
        for counter in [UnitScheme::Whitespace, UnitScheme::Chars, UnitScheme::Subword { max_piece_len: 3 }] {
            let sweep = budget_sweep(&ex, &ex.golden_evidence, 4, &counter, 0.5).unwrap();
            let first = &sweep.steps[0];
            let last = sweep.steps.last().unwrap();
            assert_eq!((first.kept_dialog_turns, first.kept_evidence_sentences), (3, 0));
            assert_eq!((last.kept_dialog_turns, last.kept_evidence_sentences), (0, 3));
            assert!(sweep.steps.windows(2).all(|w| w[1].kept_dialog_turns <= w[0].kept_dialog_turns
                && w[1].kept_evidence_sentences >= w[0].kept_evidence_sentences));
        }
    }
}
