//! Few-shot sensibleness scoring through a generation backend.

use std::sync::{Arc, OnceLock};

use regex::Regex;

use super::{GatewayError, GenerationConfig, Generator, ModelSize};
use crate::corpus::Example;

/// Few-shot prompt with `{context}` and `{input}` slots.
pub const SENSIBLENESS_PROMPT: &str = include_str!("../../assets/sensibleness_prompt.txt");

/// Fills both slots in one pass, so slot-like text inside the dialog is left
/// alone.
pub fn sensibleness_prompt(context: &str, input: &str) -> String {
    let (head, rest) = SENSIBLENESS_PROMPT.split_once("{context}").expect("asset has a context slot");
    let (middle, tail) = rest.split_once("{input}").expect("asset has an input slot");
    format!("{head}{context}{middle}{input}{tail}")
}

/// Renders the dialog as `A:`/`B:` lines, where `B` is the responder.
pub fn dialog_context(example: &Example) -> String {
    let responder = example.responder_speaker();
    example
        .turns()
        .map(|t| format!("{}: {}", if t.speaker_id == responder { "B" } else { "A" }, t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// First decimal in [0,1] after `Answer:`. Completions that omit the label
/// (the prompt already ends with it) are searched from the start.
pub fn parse_sensibleness(raw: &str) -> Result<f64, GatewayError> {
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let number = NUMBER.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?|\.\d+").expect("static regex"));
    let body = raw.split_once("Answer:").map_or(raw, |(_, after)| after);
    number
        .find_iter(body)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find(|v| (0.0..=1.0).contains(v))
        .ok_or_else(|| GatewayError::ScoreParse { raw: raw.to_string() })
}

pub fn sensibleness_score(
    dialog_context: &str,
    final_reply: &str,
    generator: &dyn Generator,
    config: &GenerationConfig,
) -> Result<f64, GatewayError> {
    let prompt = sensibleness_prompt(dialog_context, &format!("B: {final_reply}"));
    parse_sensibleness(&generator.generate(&prompt, config)?)
}

/// A generator bound to a scoring config.
#[derive(Clone)]
pub struct SensiblenessScorer {
    pub generator: Arc<dyn Generator>,
    pub config: GenerationConfig,
}

impl SensiblenessScorer {
    pub fn new(generator: Arc<dyn Generator>) -> Self {
        let mut config = GenerationConfig::new(ModelSize::L, 0.0);
        config.max_tokens = 16;
        config.stop_sequences = vec!["###".into()];
        Self { generator, config }
    }

    pub fn score(&self, dialog_context: &str, final_reply: &str) -> Result<f64, GatewayError> {
        sensibleness_score(dialog_context, final_reply, self.generator.as_ref(), &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::dialog_example;
    use crate::modelgw::{MockGenerator, MockSensibleness};

    #[test]
    fn parser_cases() {
        assert_eq!(parse_sensibleness("Answer: 0.4").unwrap(), 0.4);
        assert_eq!(parse_sensibleness("Answer: 1.0\n###").unwrap(), 1.0);
        assert_eq!(parse_sensibleness(" 0.8\n###").unwrap(), 0.8);
        assert_eq!(parse_sensibleness("Answer: 7 then 0.6").unwrap(), 0.6);
        assert!(matches!(parse_sensibleness("gibberish"), Err(GatewayError::ScoreParse { raw }) if raw == "gibberish"));
    }

    #[test]
    fn prompt_slots() {
        let p = sensibleness_prompt("A: hi {input}", "B: hello");
        assert!(p.ends_with("Dialog:\nA: hi {input}\nFinal reply:\nB: hello\n###\n\nAnswer:\n"));
        assert!(p.starts_with("Instructions: Does B’s final reply"));
        assert_eq!(p.matches("Answer: ").count(), 5);
    }

    #[test]
    fn context_labels_follow_the_responder() {
        let ex = dialog_example("d", &["where is paris", "In France."], "how big is it", "big", "Paris is big.");
        assert_eq!(dialog_context(&ex), "A: where is paris\nB: In France.\nA: how big is it");
    }

    #[test]
    fn scorer_with_mocks() {
        let scorer = SensiblenessScorer::new(Arc::new(MockSensibleness));
        assert_eq!(scorer.score("A: where is paris", "Paris is in France.").unwrap(), 1.0);
        let canned = sensibleness_prompt("A: q", "B: r");
        let gib = SensiblenessScorer::new(Arc::new(MockGenerator::new().with_canned(&canned, "gibberish")));
        assert!(matches!(gib.score("A: q", "r"), Err(GatewayError::ScoreParse { .. })));
    }
}
