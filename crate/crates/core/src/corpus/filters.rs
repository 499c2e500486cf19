//! The dataset filter chain. Every filter is an independent keep-predicate,
//! so the surviving set does not depend on the order they run in; only the
//! per-stage counts do.

use serde::{Deserialize, Serialize};

use super::{CorpusError, Example};
use crate::text::{normalize_whitespace, terms, UnitCounter, UnitScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterId {
    /// Drop dialogs without any history before the final query.
    NoHistory,
    /// Drop dialogs whose history is not made of question/answer pairs.
    EvenTurnCount,
    /// Drop dialogs where a speaker talks twice in a row (missing turns).
    QuestionAfterQuestion,
    /// Drop examples whose golden answer is a single word.
    OneWordGoldenAnswer,
    /// Drop examples whose evidence reaches the unit cap.
    EvidenceTokenCap,
    /// Drop final queries that are too short or made only of function words.
    /// Heuristic approximation.
    UnderspecifiedQuestion,
    /// Drop final queries that mention "article".
    LastTurnMentionsArticle,
    /// Keep only examples whose golden answer occurs verbatim in the evidence.
    ExactMatchInEvidence,
}

impl FilterId {
    /// All filters in their canonical order.
    pub const ALL: [FilterId; 8] = [
        FilterId::NoHistory,
        FilterId::EvenTurnCount,
        FilterId::QuestionAfterQuestion,
        FilterId::OneWordGoldenAnswer,
        FilterId::EvidenceTokenCap,
        FilterId::UnderspecifiedQuestion,
        FilterId::LastTurnMentionsArticle,
        FilterId::ExactMatchInEvidence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FilterId::NoHistory => "no_history",
            FilterId::EvenTurnCount => "even_turn_count",
            FilterId::QuestionAfterQuestion => "question_after_question",
            FilterId::OneWordGoldenAnswer => "one_word_golden_answer",
            FilterId::EvidenceTokenCap => "evidence_token_cap",
            FilterId::UnderspecifiedQuestion => "underspecified_question",
            FilterId::LastTurnMentionsArticle => "last_turn_mentions_article",
            FilterId::ExactMatchInEvidence => "exact_match_in_evidence",
        }
    }

    /// Does `example` survive this filter?
    pub fn keeps(&self, example: &Example, config: &FilterConfig) -> bool {
        match self {
            FilterId::NoHistory => !example.history.is_empty(),
            FilterId::EvenTurnCount => example.history.len().is_multiple_of(2),
            FilterId::QuestionAfterQuestion => {
                let speakers: Vec<u32> = example.turns().map(|t| t.speaker_id).collect();
                speakers.windows(2).all(|w| w[0] != w[1])
            }
            FilterId::OneWordGoldenAnswer => example.golden_answer.split_whitespace().count() > 1,
            FilterId::EvidenceTokenCap => {
                config.token_unit.count(&example.golden_evidence.text) < config.max_evidence_tokens
            }
            FilterId::UnderspecifiedQuestion => !is_underspecified(&example.final_query.text),
            FilterId::LastTurnMentionsArticle => !example.final_query.text.to_lowercase().contains("article"),
            FilterId::ExactMatchInEvidence => {
                let answer = normalize_whitespace(&example.golden_answer).to_lowercase();
                let evidence = normalize_whitespace(&example.golden_evidence.text).to_lowercase();
                !answer.is_empty() && evidence.contains(&answer)
            }
        }
    }
}

impl std::fmt::Display for FilterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FilterId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterId::ALL.into_iter().find(|f| f.as_str() == s).ok_or_else(|| CorpusError::UnknownFilter(s.to_string()))
    }
}

/// Pronouns, wh-words and auxiliaries; a query made only of these carries no
/// content of its own.
pub const QUERY_FUNCTION_WORDS: &[&str] = &[
    "what", "who", "whom", "whose", "which", "when", "where", "why", "how", "it", "its", "he", "she", "they", "them",
    "him", "her", "his", "their", "this", "that", "these", "those", "i", "you", "we", "me", "us", "is", "was", "are",
    "were", "do", "does", "did", "be", "been", "can", "could", "about", "else", "other", "there", "the", "a", "an",
    "of", "so", "then", "and", "more", "any", "anything", "s",
];

const MIN_QUERY_TOKENS: usize = 4;

fn is_underspecified(query: &str) -> bool {
    query.split_whitespace().count() < MIN_QUERY_TOKENS
        || terms(query).iter().all(|t| QUERY_FUNCTION_WORDS.contains(&t.as_str()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub enabled_filters: Vec<FilterId>,
    /// Evidence at or above this many units is dropped.
    pub max_evidence_tokens: usize,
    pub token_unit: UnitScheme,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { enabled_filters: FilterId::ALL.to_vec(), max_evidence_tokens: 300, token_unit: UnitScheme::Whitespace }
    }
}

impl FilterConfig {
    /// Parse filter ids by name, keeping the given order.
    pub fn with_filter_names<S: AsRef<str>>(names: &[S]) -> Result<Self, CorpusError> {
        let enabled_filters = names.iter().map(|n| n.as_ref().parse()).collect::<Result<Vec<FilterId>, _>>()?;
        let config = Self { enabled_filters, ..Self::default() };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_evidence_tokens == 0 {
            return Err(CorpusError::Config("max_evidence_tokens must be positive".into()));
        }
        for (i, f) in self.enabled_filters.iter().enumerate() {
            if self.enabled_filters[..i].contains(f) {
                return Err(CorpusError::DuplicateFilter(f.to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStage {
    pub filter: FilterId,
    pub remaining_count: usize,
    pub remaining_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub initial_count: usize,
    pub stages: Vec<FilterStage>,
}

impl FilterReport {
    pub fn final_count(&self) -> usize {
        self.stages.last().map_or(self.initial_count, |s| s.remaining_count)
    }
}

/// Run the enabled filters in configured order.
pub fn apply_filters(examples: &[Example], config: &FilterConfig) -> Result<(Vec<Example>, FilterReport), CorpusError> {
    config.validate()?;
    let initial_count = examples.len();
    let mut remaining: Vec<&Example> = examples.iter().collect();
    let mut stages = Vec::with_capacity(config.enabled_filters.len());
    for filter in &config.enabled_filters {
        remaining.retain(|ex| filter.keeps(ex, config));
        let remaining_fraction = if initial_count == 0 { 0.0 } else { remaining.len() as f64 / initial_count as f64 };
        stages.push(FilterStage { filter: *filter, remaining_count: remaining.len(), remaining_fraction });
    }
    let kept = remaining.into_iter().cloned().collect();
    Ok((kept, FilterReport { initial_count, stages }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::dialog_example;
    use crate::corpus::Turn;
    use proptest::prelude::*;

    fn keeps(f: FilterId, ex: &Example) -> bool {
        f.keeps(ex, &FilterConfig::default())
    }

    #[test]
    fn single_filter_definitions() {
        let base = dialog_example(
            "a",
            &["Who wrote Hamlet?", "Shakespeare did."],
            "When was Hamlet written by him?",
            "Around 1600 it was written",
            "Hamlet was written around 1600 it was written by Shakespeare.",
        );
        for f in FilterId::ALL {
            assert!(keeps(f, &base), "{f} should keep the base example");
        }

        let no_hist = dialog_example("b", &[], "When was Hamlet written by him?", "Around 1600", "Around 1600.");
        assert!(!keeps(FilterId::NoHistory, &no_hist));

        let odd = dialog_example(
            "c",
            &["Who wrote Hamlet?"],
            "When was Hamlet written by him?",
            "Around 1600",
            "Around 1600.",
        );
        assert!(!keeps(FilterId::EvenTurnCount, &odd));

        let mut qaq = base.clone();
        qaq.history[1].speaker_id = 0;
        assert!(!keeps(FilterId::QuestionAfterQuestion, &qaq));

        let mut one_word = base.clone();
        one_word.golden_answer = "Paris".into();
        assert!(!keeps(FilterId::OneWordGoldenAnswer, &one_word));

        let mut long = base.clone();
        long.golden_evidence = crate::retrieval::EvidenceDoc::new("x", vec!["w"; 300].join(" ")).unwrap();
        assert!(!keeps(FilterId::EvidenceTokenCap, &long));
        long.golden_evidence = crate::retrieval::EvidenceDoc::new("x", vec!["w"; 299].join(" ")).unwrap();
        assert!(keeps(FilterId::EvidenceTokenCap, &long));

        let mut vague = base.clone();
        vague.final_query = Turn::new(2, 1, 0, "What about it?").unwrap();
        assert!(!keeps(FilterId::UnderspecifiedQuestion, &vague));
        vague.final_query = Turn::new(2, 1, 0, "What else was there about it?").unwrap();
        assert!(!keeps(FilterId::UnderspecifiedQuestion, &vague));

        let mut article = base.clone();
        article.final_query = Turn::new(2, 1, 0, "What else does this Article say?").unwrap();
        assert!(!keeps(FilterId::LastTurnMentionsArticle, &article));

        let mut nomatch = base.clone();
        nomatch.golden_answer = "Written   around 1600 IT".into();
        assert!(keeps(FilterId::ExactMatchInEvidence, &nomatch));
        nomatch.golden_answer = "in the year 1600".into();
        assert!(!keeps(FilterId::ExactMatchInEvidence, &nomatch));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            FilterConfig::with_filter_names(&["no_history", "bogus"]),
            Err(CorpusError::UnknownFilter(_))
        ));
        assert!(matches!(
            FilterConfig::with_filter_names(&["no_history", "no_history"]),
            Err(CorpusError::DuplicateFilter(_))
        ));
        let cfg = FilterConfig::with_filter_names(&["exact_match_in_evidence", "no_history"]).unwrap();
        assert_eq!(cfg.enabled_filters, vec![FilterId::ExactMatchInEvidence, FilterId::NoHistory]);
        let bad = FilterConfig { max_evidence_tokens: 0, ..Default::default() };
        assert!(apply_filters(&[], &bad).is_err());
    }

    fn arb_example() -> impl Strategy<Value = Example> {
        (
            0usize..5,
            proptest::bool::ANY,
            prop_oneof![Just("Paris"), Just("the Eiffel tower"), Just("in 1889 it opened")],
            prop_oneof![
                Just("When did the tower open to visitors?"),
                Just("What about it?"),
                Just("Does the article say more?")
            ],
            1usize..8,
        )
            .prop_map(|(hist_len, swap, answer, question, ev_words)| {
                let history: Vec<String> = (0..hist_len).map(|i| format!("turn number {i}")).collect();
                let refs: Vec<&str> = history.iter().map(String::as_str).collect();
                let evidence =
                    format!("The Eiffel tower opened in 1889 it opened. {}", vec!["word"; ev_words * 60].join(" "));
                let mut ex = dialog_example("p", &refs, question, answer, &evidence);
                if swap && !ex.history.is_empty() {
                    ex.history[0].speaker_id = 1;
                }
                ex
            })
    }

    proptest! {
        #[test]
        fn membership_is_order_insensitive(
            examples in proptest::collection::vec(arb_example(), 0..25),
            order in Just(FilterId::ALL.to_vec()).prop_shuffle(),
        ) {
            let canonical = FilterConfig::default();
            let shuffled = FilterConfig { enabled_filters: order, ..FilterConfig::default() };
            let (a, ra) = apply_filters(&examples, &canonical).unwrap();
            let (b, rb) = apply_filters(&examples, &shuffled).unwrap();
            prop_assert_eq!(a, b);
            for report in [ra, rb] {
                prop_assert!(report.stages.windows(2).all(|w| w[1].remaining_count <= w[0].remaining_count));
                prop_assert!(report.stages.first().is_none_or(|s| s.remaining_count <= report.initial_count));
            }
        }
    }
}
