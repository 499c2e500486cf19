//! Offline backends with hand-checkable behavior.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use super::{check_pair, check_prompt, Entailment, GatewayError, GenerationConfig, Generator, ModelSize};
use crate::metrics::split_sentences;
use crate::seed::{content_hash, derive_seed};
use crate::text::terms;

/// Cuts `text` before the earliest stop sequence.
fn apply_stops<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops.iter().filter_map(|s| text.find(s.as_str())).min().unwrap_or(text.len());
    &text[..cut]
}

/// Canned replies keyed by the sha256 of the prompt, with a deterministic
/// fallback that answers from the `Fact:` lines of an assembled prompt.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    canned: HashMap<String, String>,
}

impl MockGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_canned(mut self, prompt: &str, text: impl Into<String>) -> Self {
        self.canned.insert(content_hash(prompt.as_bytes()), text.into());
        self
    }

    pub fn insert_hash(&mut self, prompt_hash: impl Into<String>, text: impl Into<String>) {
        self.canned.insert(prompt_hash.into(), text.into());
    }

    fn fallback(&self, prompt: &str, prompt_hash: &str, config: &GenerationConfig) -> String {
        let dialog_line = Regex::new(r"^\d+ -?\d+ \d+ (.*) \[eot\]$").expect("static regex");
        let query = prompt
            .lines()
            .filter_map(|l| dialog_line.captures(l).map(|c| c[1].to_string()))
            .next_back()
            .unwrap_or_default();
        let facts: Vec<String> =
            prompt.lines().filter_map(|l| l.strip_prefix("Fact: ")).flat_map(split_sentences).collect();

        // Sampling noise only enters above temperature zero.
        let seed = if config.temperature > 0.0 { config.seed.unwrap_or(0) } else { 0 };
        let temp = format!("{:.3}", config.temperature);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[config.model_id.as_str(), &temp, prompt_hash]));

        let (skill, drift) = match config.model_id {
            ModelSize::S => (0.55, 0.30),
            ModelSize::M => (0.75, 0.20),
            ModelSize::L => (0.92, 0.10),
        };
        let heat = config.temperature * 0.25;
        let query_terms: BTreeSet<String> = terms(&query).into_iter().collect();

        if facts.is_empty() {
            let topic: Vec<String> = terms(&query).into_iter().skip(1).take(4).collect();
            if rng.gen_bool((1.0 - skill + heat).clamp(0.0, 1.0)) || topic.is_empty() {
                return "Yes.".to_string();
            }
            return format!("I am not sure about {}, sorry.", topic.join(" "));
        }

        let overlap = |s: &str| terms(s).iter().filter(|t| query_terms.contains(*t)).count();
        let mut ranked: Vec<usize> = (0..facts.len()).collect();
        ranked.sort_by_key(|&i| (std::cmp::Reverse(overlap(&facts[i])), i));

        let first =
            if rng.gen_bool((skill - heat).clamp(0.0, 1.0)) { ranked[0] } else { rng.gen_range(0..facts.len()) };
        let mut reply = facts[first].clone();
        let extra = ((facts.len() - 1) as f64 * 0.2).min(0.8);
        if ranked.len() > 1 && rng.gen_bool(extra) {
            let second = ranked.iter().copied().find(|&i| i != first).unwrap_or(first);
            reply.push(' ');
            reply.push_str(&facts[second]);
        }
        if rng.gen_bool((drift + heat).clamp(0.0, 1.0)) {
            let words: Vec<&str> = reply.split_whitespace().collect();
            let keep = (words.len() / 2).max(1);
            reply = format!("{} as far as I remember from somewhere else.", words[..keep].join(" "));
        }
        reply
    }
}

impl Generator for MockGenerator {
    fn generate(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GatewayError> {
        check_prompt(prompt)?;
        config.validate()?;
        let hash = content_hash(prompt.as_bytes());
        if let Some(text) = self.canned.get(&hash) {
            return Ok(text.clone());
        }
        let raw = format!("{} {}\n", self.fallback(prompt, &hash, config), crate::promptkit::EOT);
        Ok(apply_stops(&raw, &config.stop_sequences).to_string())
    }
}

/// Returns the prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn generate(&self, prompt: &str, _config: &GenerationConfig) -> Result<String, GatewayError> {
        check_prompt(prompt)?;
        Ok(prompt.to_string())
    }
}

/// Entailment = share of the distinct hypothesis terms found in the premise.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapNli;

impl Entailment for OverlapNli {
    fn entail(&self, premise: &str, hypothesis: &str) -> Result<f64, GatewayError> {
        check_pair(premise, hypothesis)?;
        let premise_terms: BTreeSet<String> = terms(premise).into_iter().collect();
        let hyp: BTreeSet<String> = terms(hypothesis).into_iter().collect();
        if hyp.is_empty() {
            return Ok(0.0);
        }
        Ok(hyp.iter().filter(|t| premise_terms.contains(*t)).count() as f64 / hyp.len() as f64)
    }
}

/// Answers the sensibleness prompt with a length-bounded heuristic: very
/// short or very long replies lose credit, and replies sharing no term with
/// the last context line lose more.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSensibleness;

impl MockSensibleness {
    pub fn judge(context: &str, reply: &str) -> f64 {
        let words = reply.split_whitespace().count();
        let mut score: f64 = match words {
            0 => return 0.0,
            1..=2 => 0.4,
            3..=40 => 1.0,
            41..=80 => 0.8,
            _ => 0.6,
        };
        let last: BTreeSet<String> = context.lines().last().map(terms).unwrap_or_default().into_iter().collect();
        let off_topic = !last.is_empty() && !terms(reply).iter().any(|t| last.contains(t));
        if off_topic {
            score -= 0.4;
        }
        score.max(0.0)
    }
}

impl Generator for MockSensibleness {
    fn generate(&self, prompt: &str, _config: &GenerationConfig) -> Result<String, GatewayError> {
        check_prompt(prompt)?;
        let tail = prompt.rsplit("Dialog:\n").next().unwrap_or(prompt);
        let (context, rest) = tail.split_once("\nFinal reply:\n").unwrap_or(("", tail));
        let reply = rest.split("\n###").next().unwrap_or(rest);
        let reply = reply.strip_prefix("B: ").unwrap_or(reply);
        Ok(format!("Answer: {:.1}\n###", Self::judge(context, reply)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(model: ModelSize, t: f64) -> GenerationConfig {
        GenerationConfig::new(model, t)
    }

    const PROMPT: &str = "Fact: Alan Kulwicki won the 1992 championship. He drove his own car. \
                          The team was based in Concord.\n\n0 -1 0 who won the 1992 championship [eot]\n1 0 1 ";

    #[test]
    fn canned_map_by_prompt_hash() {
        let g = MockGenerator::new().with_canned("hello", "world [eot]");
        assert_eq!(g.generate("hello", &cfg(ModelSize::S, 0.0)).unwrap(), "world [eot]");
        assert!(g.generate("", &cfg(ModelSize::S, 0.0)).is_err());
    }

    #[test]
    fn greedy_is_deterministic_and_seed_free() {
        let g = MockGenerator::new();
        let a = g.generate(PROMPT, &cfg(ModelSize::M, 0.0)).unwrap();
        let b = g.generate(PROMPT, &cfg(ModelSize::M, 0.0).with_seed(99)).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("[eot]"));
        assert!(!a.trim().is_empty());
    }

    #[test]
    fn sampling_depends_on_seed_only_through_config() {
        let g = MockGenerator::new();
        let c = cfg(ModelSize::S, 0.7).with_seed(5);
        assert_eq!(g.generate(PROMPT, &c).unwrap(), g.generate(PROMPT, &c).unwrap());
        let outs: BTreeSet<String> =
            (0..40).map(|s| g.generate(PROMPT, &cfg(ModelSize::S, 0.7).with_seed(s)).unwrap()).collect();
        assert!(outs.len() > 1);
    }

    #[test]
    fn no_evidence_reply() {
        let g = MockGenerator::new();
        let out = g.generate("0 -1 0 who won the 1992 championship [eot]\n1 0 1 ", &cfg(ModelSize::L, 0.0)).unwrap();
        assert!(!out.trim().is_empty());
    }

    #[test]
    fn overlap_nli() {
        let nli = OverlapNli;
        assert_eq!(nli.entail("The cat sat.", "The cat sat.").unwrap(), 1.0);
        assert_eq!(nli.entail("alpha beta", "gamma delta").unwrap(), 0.0);
        assert_eq!(nli.entail("a b c", "a x").unwrap(), 0.5);
        assert!(nli.entail("", "x").is_err());
    }

    #[test]
    fn batch_equals_singles() {
        let nli = OverlapNli;
        let pairs: Vec<(String, String)> =
            (0..10).map(|i| (format!("w{i} shared common"), format!("shared w{} other", i % 3))).collect();
        let batch = nli.entail_batch(&pairs).unwrap();
        let singles: Vec<f64> = pairs.iter().map(|(p, h)| nli.entail(p, h).unwrap()).collect();
        assert_eq!(batch, singles);
    }

    #[test]
    fn sensibleness_heuristic() {
        assert_eq!(MockSensibleness::judge("A: where is paris", ""), 0.0);
        assert_eq!(MockSensibleness::judge("A: where is paris", "Paris is in France."), 1.0);
        assert_eq!(MockSensibleness::judge("A: where is paris", "Yes."), 0.0);
        assert_eq!(MockSensibleness::judge("A: where is paris", "Bananas are yellow fruit."), 0.6);
    }
}
