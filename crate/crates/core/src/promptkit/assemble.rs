//! Prompt structures (instructions / facts / dialog history) and their
//! assembly into the wire prompt.

use serde::{Deserialize, Serialize};

use super::native::{open_empty_dialog, render_native_dialog};
use super::PromptError;
use crate::corpus::{Example, Turn};
use crate::retrieval::{EvidenceDoc, NonEvidenceMode};
use crate::text::{UnitCounter, UnitScheme};

pub const DEFAULT_INSTRUCTIONS: &str =
    "use the information from the provided \u{201c}fact\u{201d} to answer the question";

/// Exemplar prepended by one-shot prompts.
pub const DEFAULT_ONE_SHOT: &str = "Fact: The Golden Gate Bridge opened to traffic on May 27, 1937. \
It spans the strait that connects San Francisco Bay to the Pacific Ocean.\n\n\
0 -1 0 What is the Golden Gate Bridge? [eot]\n\
1 0 1 It is a suspension bridge in San Francisco. [eot]\n\
2 1 0 When did it open? [eot]\n\
3 2 1 The Golden Gate Bridge opened to traffic on May 27, 1937. [eot]";

/// What evidence a prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvidenceMode {
    Absent,
    Golden,
    /// Top-k BM25 hits, golden always included.
    Retrieved {
        k: usize,
    },
    /// One passage that is not the golden evidence.
    NonEvidence {
        selection: NonEvidenceMode,
    },
    /// Golden evidence behind a one-shot exemplar.
    OneShotGolden,
}

impl EvidenceMode {
    /// Number of passages the prompt carries.
    pub fn arity(&self) -> usize {
        match self {
            EvidenceMode::Absent => 0,
            EvidenceMode::Retrieved { k } => *k,
            EvidenceMode::Golden | EvidenceMode::NonEvidence { .. } | EvidenceMode::OneShotGolden => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub label: String,
    pub include_instructions: bool,
    pub include_history: bool,
    pub evidence_mode: EvidenceMode,
}

impl PromptSpec {
    pub fn new(label: &str, include_instructions: bool, include_history: bool, evidence_mode: EvidenceMode) -> Self {
        Self { label: label.to_string(), include_instructions, include_history, evidence_mode }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.label.trim().is_empty() {
            return Err(PromptError::Spec("prompt spec label is empty".into()));
        }
        if let EvidenceMode::Retrieved { k } = self.evidence_mode {
            if !(1..=3).contains(&k) {
                return Err(PromptError::Spec(format!("'{}': retrieved k must be 1, 2 or 3 (got {k})", self.label)));
            }
        }
        Ok(())
    }

    /// Every prompt type of the experiment grid.
    pub fn catalog() -> Vec<PromptSpec> {
        use EvidenceMode::*;
        vec![
            PromptSpec::new("no-evidence", false, true, Absent),
            PromptSpec::new("golden", false, true, Golden),
            PromptSpec::new("golden-instr", true, true, Golden),
            PromptSpec::new("top2", false, true, Retrieved { k: 2 }),
            PromptSpec::new("top3", false, true, Retrieved { k: 3 }),
            PromptSpec::new("top2-instr", true, true, Retrieved { k: 2 }),
            PromptSpec::new("top3-instr", true, true, Retrieved { k: 3 }),
            PromptSpec::new("one-shot", false, true, OneShotGolden),
            PromptSpec::new("no-history-no-evidence", false, false, Absent),
            PromptSpec::new("random-nonevidence", false, true, NonEvidence { selection: NonEvidenceMode::Random }),
            PromptSpec::new("nextbest-nonevidence", false, true, NonEvidence { selection: NonEvidenceMode::NextBest }),
        ]
    }

    /// The seven prompt types that carry the golden evidence; the candidate
    /// pool for input-level re-ranking.
    pub fn golden_family() -> Vec<PromptSpec> {
        Self::catalog()
            .into_iter()
            .filter(|s| {
                matches!(
                    s.evidence_mode,
                    EvidenceMode::Golden | EvidenceMode::Retrieved { .. } | EvidenceMode::OneShotGolden
                )
            })
            .collect()
    }

    pub fn from_catalog(label: &str) -> Option<PromptSpec> {
        Self::catalog().into_iter().find(|s| s.label == label)
    }
}

/// Check a grid's prompt specs: each valid, labels unique.
pub fn validate_specs(specs: &[PromptSpec]) -> Result<(), PromptError> {
    for (i, s) in specs.iter().enumerate() {
        s.validate()?;
        if specs[..i].iter().any(|o| o.label == s.label) {
            return Err(PromptError::Spec(format!("duplicate prompt label '{}'", s.label)));
        }
    }
    Ok(())
}

/// Shared prompt assets and evidence truncation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptAssembler {
    pub instructions_text: String,
    pub one_shot_block: String,
    /// Facts longer than this many units are cut at a sentence boundary.
    pub fact_budget: Option<usize>,
    pub unit: UnitScheme,
}

impl Default for PromptAssembler {
    fn default() -> Self {
        Self {
            instructions_text: DEFAULT_INSTRUCTIONS.to_string(),
            one_shot_block: DEFAULT_ONE_SHOT.to_string(),
            fact_budget: None,
            unit: UnitScheme::Whitespace,
        }
    }
}

impl PromptAssembler {
    /// Assemble a grid prompt. `retrieved` must match the spec's evidence
    /// arity; golden-carrying modes need the golden passage in it and
    /// non-evidence modes must not contain it.
    pub fn assemble(
        &self,
        example: &Example,
        spec: &PromptSpec,
        retrieved: &[&EvidenceDoc],
    ) -> Result<String, PromptError> {
        spec.validate()?;
        let expected = spec.evidence_mode.arity();
        if retrieved.len() != expected {
            return Err(PromptError::Arity { label: spec.label.clone(), expected, got: retrieved.len() });
        }
        let golden = &example.golden_evidence.id;
        let has_golden = retrieved.iter().any(|d| &d.id == golden);
        match spec.evidence_mode {
            EvidenceMode::Golden | EvidenceMode::Retrieved { .. } | EvidenceMode::OneShotGolden if !has_golden => {
                return Err(PromptError::Spec(format!("'{}' requires the golden evidence", spec.label)));
            }
            EvidenceMode::NonEvidence { .. } if has_golden => {
                return Err(PromptError::Spec(format!("'{}' must not carry the golden evidence", spec.label)));
            }
            _ => {}
        }
        let one_shot = matches!(spec.evidence_mode, EvidenceMode::OneShotGolden);
        self.assemble_with(example, spec.include_instructions, spec.include_history, retrieved, one_shot)
    }

    /// Lower-level assembly with an arbitrary number of facts, in the given
    /// order.
    pub fn assemble_with(
        &self,
        example: &Example,
        include_instructions: bool,
        include_history: bool,
        facts: &[&EvidenceDoc],
        one_shot: bool,
    ) -> Result<String, PromptError> {
        let mut blocks: Vec<String> = Vec::new();
        if one_shot {
            blocks.push(self.one_shot_block.trim_end().to_string());
        }
        if include_instructions {
            blocks.push(format!("Instructions: {}", self.instructions_text));
        }
        for doc in facts {
            blocks.push(format!("Fact: {}", self.fact_text(doc)));
        }
        let responder = example.responder_speaker();
        let dialog = if include_history {
            let turns: Vec<Turn> = example.turns().cloned().collect();
            render_native_dialog(&turns, responder)?
        } else {
            let q = &example.final_query;
            render_native_dialog(
                &[Turn { index: 0, parent_index: -1, speaker_id: q.speaker_id, text: q.text.clone() }],
                responder,
            )?
        };
        blocks.push(dialog);
        Ok(blocks.join("\n\n"))
    }

    /// Prompt for a restricted-context step: the newest `kept_turns` turns
    /// (renumbered from 0) and the first `kept_sentences` evidence sentences.
    pub fn assemble_budget(
        &self,
        example: &Example,
        evidence: &EvidenceDoc,
        kept_turns: usize,
        kept_sentences: usize,
    ) -> Result<String, PromptError> {
        let turns: Vec<&Turn> = example.turns().collect();
        let kept_turns = kept_turns.min(turns.len());
        let kept_sentences = kept_sentences.min(evidence.sentences.len());
        let mut blocks = Vec::new();
        if kept_sentences > 0 {
            blocks.push(format!("Fact: {}", evidence.sentences[..kept_sentences].join(" ")));
        }
        let responder = example.responder_speaker();
        if kept_turns == 0 {
            blocks.push(open_empty_dialog(responder));
        } else {
            let suffix = Turn::chain(turns[turns.len() - kept_turns..].iter().map(|t| (t.speaker_id, t.text.as_str())))
                .map_err(|e| PromptError::InvalidTurn(e.to_string()))?;
            blocks.push(render_native_dialog(&suffix, responder)?);
        }
        Ok(blocks.join("\n\n"))
    }

    fn fact_text(&self, doc: &EvidenceDoc) -> String {
        let Some(budget) = self.fact_budget else {
            return doc.text.clone();
        };
        if self.unit.count(&doc.text) <= budget {
            return doc.text.clone();
        }
        let mut used = 0;
        let mut kept: Vec<&str> = Vec::new();
        for s in &doc.sentences {
            let units = self.unit.count(s);
            if !kept.is_empty() && used + units > budget {
                break;
            }
            used += units;
            kept.push(s);
        }
        kept.join(" ")
    }
}
