//! The native dialog prompt: one line per turn,
//! `<index> <parent_index> <speaker_id> <text> [eot]`, followed by an open line
//! `<next index> <last index> <next speaker> ` for the model to complete.

use super::PromptError;
use crate::corpus::Turn;

pub const EOT: &str = "[eot]";

fn check_text(turn: &Turn) -> Result<(), PromptError> {
    let text = &turn.text;
    if text.trim().is_empty() || text.trim() != text {
        return Err(PromptError::InvalidTurn(format!("turn {} text must be trimmed and non-empty", turn.index)));
    }
    if text.contains('\n') || text.contains('\r') || text.contains(EOT) {
        return Err(PromptError::InvalidTurn(format!(
            "turn {} text may not contain line breaks or the {EOT} marker",
            turn.index
        )));
    }
    Ok(())
}

fn check_tree(turns: &[Turn]) -> Result<(), PromptError> {
    for (i, t) in turns.iter().enumerate() {
        if turns[..i].iter().any(|p| p.index == t.index) {
            return Err(PromptError::InvalidTurn(format!("duplicate turn index {}", t.index)));
        }
        if t.parent_index >= i64::from(t.index) || t.parent_index < -1 {
            return Err(PromptError::InvalidTurn(format!("turn {} has parent {}", t.index, t.parent_index)));
        }
        if (t.parent_index == -1) != (t.index == 0) {
            return Err(PromptError::InvalidTurn(format!("turn {} has parent {}", t.index, t.parent_index)));
        }
        check_text(t)?;
    }
    Ok(())
}

/// Render `turns` and open a new turn for `next_speaker`, replying to the
/// last rendered turn.
pub fn render_native_dialog(turns: &[Turn], next_speaker: u32) -> Result<String, PromptError> {
    let last = turns.last().ok_or(PromptError::EmptyDialog)?;
    check_tree(turns)?;
    let next_index = turns.iter().map(|t| t.index).max().unwrap_or(0) + 1;
    let mut out = String::new();
    for t in turns {
        out.push_str(&format!("{} {} {} {} {EOT}\n", t.index, t.parent_index, t.speaker_id, t.text));
    }
    out.push_str(&format!("{next_index} {} {next_speaker} ", last.index));
    Ok(out)
}

/// The line that opens a dialog with no prior turns at all.
pub fn open_empty_dialog(speaker: u32) -> String {
    format!("0 -1 {speaker} ")
}

/// The open line a rendered dialog ends with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingTurn {
    pub index: u32,
    pub parent_index: i64,
    pub speaker_id: u32,
}

/// Inverse of [`render_native_dialog`].
pub fn parse_native_dialog(block: &str) -> Result<(Vec<Turn>, PendingTurn), PromptError> {
    let bad = |line: &str, why: &str| PromptError::Parse(format!("{why}: {line:?}"));
    let mut lines: Vec<&str> = block.split('\n').collect();
    let open = lines.pop().ok_or_else(|| bad(block, "empty block"))?;

    let header = |line: &str| -> Result<(u32, i64, u32, String), PromptError> {
        let mut parts = line.splitn(4, ' ');
        let index = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line, "bad turn index"))?;
        let parent = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line, "bad parent index"))?;
        let speaker = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line, "bad speaker id"))?;
        Ok((index, parent, speaker, parts.next().unwrap_or("").to_string()))
    };

    let mut turns = Vec::with_capacity(lines.len());
    for line in lines {
        let (index, parent, speaker, rest) = header(line)?;
        let text = rest.strip_suffix(&format!(" {EOT}")).ok_or_else(|| bad(line, "missing end-of-turn marker"))?;
        turns.push(Turn::new(index, parent, speaker, text).map_err(|e| bad(line, &e.to_string()))?);
    }
    let (index, parent_index, speaker_id, rest) = header(open)?;
    if !rest.is_empty() {
        return Err(bad(open, "open turn already has text"));
    }
    Ok((turns, PendingTurn { index, parent_index, speaker_id }))
}

/// Text of a completion up to the first end-of-turn marker, trimmed. `None`
/// signals an empty completion.
pub fn parse_completion(raw: &str) -> Option<String> {
    let head = raw.split(EOT).next().unwrap_or("");
    let trimmed = head.trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knock_knock() -> Vec<Turn> {
        [
            (0, -1, 0, "Knock Knock"),
            (1, 0, 1, "Who's there?"),
            (2, 1, 0, "Interrupting cow"),
            (3, 1, 2, "Nobel"),
            (4, 3, 1, "Nobel who?"),
            (5, 4, 2, "That's why I knocked"),
        ]
        .into_iter()
        .map(|(i, p, s, t)| Turn::new(i, p, s, t).unwrap())
        .collect()
    }

    #[test]
    fn knock_knock_block() {
        let expected = "0 -1 0 Knock Knock [eot]\n\
                        1 0 1 Who's there? [eot]\n\
                        2 1 0 Interrupting cow [eot]\n\
                        3 1 2 Nobel [eot]\n\
                        4 3 1 Nobel who? [eot]\n\
                        5 4 2 That's why I knocked [eot]\n\
                        6 5 1 ";
        assert_eq!(render_native_dialog(&knock_knock(), 1).unwrap(), expected);
    }

    #[test]
    fn single_turn() {
        let t = vec![Turn::new(0, -1, 0, "hi").unwrap()];
        assert_eq!(render_native_dialog(&t, 1).unwrap(), "0 -1 0 hi [eot]\n1 0 1 ");
        assert!(matches!(render_native_dialog(&[], 1), Err(PromptError::EmptyDialog)));
    }

    #[test]
    fn rejects_unrenderable_text() {
        let mut t = Turn::new(0, -1, 0, "fine").unwrap();
        t.text = "two\nlines".into();
        assert!(render_native_dialog(&[t.clone()], 1).is_err());
        t.text = "sneaky [eot] marker".into();
        assert!(render_native_dialog(&[t], 1).is_err());
    }

    #[test]
    fn parse_inverts_render() {
        let turns = knock_knock();
        let block = render_native_dialog(&turns, 1).unwrap();
        let (parsed, pending) = parse_native_dialog(&block).unwrap();
        assert_eq!(parsed, turns);
        assert_eq!(pending, PendingTurn { index: 6, parent_index: 5, speaker_id: 1 });
        assert_eq!(render_native_dialog(&parsed, pending.speaker_id).unwrap(), block);
    }

    #[test]
    fn completion_parsing() {
        assert_eq!(
            parse_completion("Kulwicki began racing. [eot] 4 3 0 junk").as_deref(),
            Some("Kulwicki began racing.")
        );
        assert_eq!(parse_completion("no marker here").as_deref(), Some("no marker here"));
        assert_eq!(parse_completion("  [eot]"), None);
        assert_eq!(parse_completion(""), None);
    }
}
