//! Tokenization and unit counting shared by the corpus filters, the BM25
//! index, the prompt budget sweep and the mock NLI backend.

use serde::{Deserialize, Serialize};

/// Lowercased alphanumeric terms. Anything that is not alphanumeric acts as a
/// separator, so punctuation never ends up inside a term.
pub fn terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

/// Collapse every whitespace run into a single space and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Something that measures text length in "units" (tokens, sentence pieces,
/// characters...). Used for evidence caps and context budgets.
pub trait UnitCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Built-in unit counting schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum UnitScheme {
    /// Whitespace-delimited tokens.
    #[default]
    Whitespace,
    /// Unicode scalar values, whitespace excluded.
    Chars,
    /// Rough subword approximation: every whitespace token is split into
    /// pieces of at most `max_piece_len` characters.
    Subword { max_piece_len: usize },
}

impl UnitCounter for UnitScheme {
    fn count(&self, text: &str) -> usize {
        match *self {
            UnitScheme::Whitespace => text.split_whitespace().count(),
            UnitScheme::Chars => text.chars().filter(|c| !c.is_whitespace()).count(),
            UnitScheme::Subword { max_piece_len } => {
                let piece = max_piece_len.max(1);
                text.split_whitespace().map(|w| w.chars().count().div_ceil(piece)).sum()
            }
        }
    }
}

impl std::str::FromStr for UnitScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(UnitScheme::Whitespace),
            "chars" => Ok(UnitScheme::Chars),
            other => match other.strip_prefix("subword:") {
                Some(n) => n
                    .parse::<usize>()
                    .ok()
                    .filter(|n| *n > 0)
                    .map(|max_piece_len| UnitScheme::Subword { max_piece_len })
                    .ok_or_else(|| format!("invalid subword piece length in '{other}'")),
                None => Err(format!("unknown unit scheme '{other}' (expected whitespace, chars or subword:<n>)")),
            },
        }
    }
}

/// Count units of `text` with the given counter.
pub fn count_units(text: &str, counter: &dyn UnitCounter) -> usize {
    counter.count(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terms_strip_punctuation_and_case() {
        assert_eq!(terms("Alan Kulwicki's car, 1992!"), vec!["alan", "kulwicki", "s", "car", "1992"]);
        assert!(terms("  ...  ").is_empty());
    }

    #[test]
    fn whitespace_units() {
        assert_eq!(count_units("", &UnitScheme::Whitespace), 0);
        assert_eq!(count_units("a b  c", &UnitScheme::Whitespace), 3);
    }

    #[test]
    fn other_schemes() {
        assert_eq!(UnitScheme::Chars.count("ab c"), 3);
        assert_eq!(UnitScheme::Subword { max_piece_len: 4 }.count("abcdefghi ab"), 4);
        assert_eq!("subword:4".parse::<UnitScheme>().unwrap(), UnitScheme::Subword { max_piece_len: 4 });
        assert!("subword:0".parse::<UnitScheme>().is_err());
        assert!("bpe".parse::<UnitScheme>().is_err());
    }
}
