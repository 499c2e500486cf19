//! Rule-based sentence segmentation for evidence passages.
//!
//! A boundary is placed after `.`, `!` or `?` (plus any closing quotes or
//! brackets) when the terminator is followed by whitespace and the next word
//! starts with an uppercase letter or a digit, optionally behind an opening
//! quote or bracket. A period that ends one of [`ABBREVIATIONS`] never
//! produces a boundary.

/// Lowercased abbreviations (with their final period) that never end a
/// sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "mt.", "ft.", "jr.", "sr.", "vs.", "e.g.", "i.e.", "cf.", "al.",
    "inc.", "ltd.", "corp.", "no.", "nos.", "fig.", "figs.", "vol.", "pp.", "ca.", "approx.", "gen.", "gov.", "sen.",
    "rep.", "rev.", "capt.", "col.", "lt.", "sgt.", "cmdr.", "adm.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.",
    "aug.", "sep.", "sept.", "oct.", "nov.", "dec.", "u.s.", "u.k.", "u.n.", "d.c.", "a.m.", "p.m.",
];

const TERMINATORS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];

pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;

    while i < chars.len() {
        let (_, c) = chars[i];
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        // Absorb runs like "?!" or "..." and any closing punctuation.
        let mut end = i + 1;
        while end < chars.len() && TERMINATORS.contains(&chars[end].1) {
            end += 1;
        }
        while end < chars.len() && CLOSERS.contains(&chars[end].1) {
            end += 1;
        }
        let mut next = end;
        while next < chars.len() && chars[next].1.is_whitespace() {
            next += 1;
        }
        let has_space = next > end;
        let mut probe = next;
        while probe < chars.len() && OPENERS.contains(&chars[probe].1) {
            probe += 1;
        }
        let starts_sentence = probe < chars.len() && (chars[probe].1.is_uppercase() || chars[probe].1.is_ascii_digit());

        let byte_end = chars.get(end).map_or(text.len(), |(b, _)| *b);
        if has_space && starts_sentence && !(c == '.' && ends_with_abbreviation(&text[start..byte_end])) {
            push_trimmed(&mut sentences, &text[start..byte_end]);
            start = chars[next].0;
            i = next;
        } else {
            i = end;
        }
    }
    push_trimmed(&mut sentences, &text[start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, segment: &str) {
    let trimmed = segment.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let last = segment.split_whitespace().last().unwrap_or("");
    let word = last.trim_start_matches(OPENERS).trim_end_matches(CLOSERS).to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_cases() {
        assert_eq!(split_sentences("A. B."), vec!["A.", "B."]);
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   ").is_empty());
        assert_eq!(split_sentences("no terminator"), vec!["no terminator"]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(split_sentences("It cost 3.5 dollars. then more."), vec!["It cost 3.5 dollars. then more."]);
    }

    #[test]
    fn abbreviations_are_kept() {
        let s = "Dr. Smith met Mr. Jones in St. Louis. They talked.";
        assert_eq!(split_sentences(s), vec!["Dr. Smith met Mr. Jones in St. Louis.", "They talked."]);
        assert_eq!(split_sentences("He moved to the U.S. He liked it."), vec!["He moved to the U.S. He liked it."]);
    }

    #[test]
    fn quotes_brackets_and_digits() {
        let s = "He said \"stop.\" Then he left! (Nobody followed.) 1990 was quiet? Yes.";
        assert_eq!(
            split_sentences(s),
            vec!["He said \"stop.\"", "Then he left!", "(Nobody followed.)", "1990 was quiet?", "Yes."]
        );
        assert_eq!(
            split_sentences("He raced karts. [10] His father built engines."),
            vec!["He raced karts.", "[10] His father built engines."]
        );
    }

    #[test]
    fn segments_cover_text_modulo_whitespace() {
        let s = "One  two.\nThree four!   Five? six. Seven";
        let joined: String = split_sentences(s).concat();
        let squashed: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(joined.chars().filter(|c| !c.is_whitespace()).collect::<String>(), squashed);
    }
}
