//! Whitespace-token helpers shared by statistics and length budgeting.

/// Number of maximal whitespace-separated tokens. Punctuation stays attached.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keep the prefix of `text` that ends with its `n`-th whitespace token.
///
/// Formatting between the kept tokens is preserved byte-for-byte.
pub fn truncate_words(text: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    let mut seen = 0;
    let mut in_token = false;
    for (idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == n {
                    return &text[..idx];
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
        }
    }
    text
}

/// Collapse whitespace runs to single spaces and trim.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_tokens_with_punctuation_attached() {
        assert_eq!(word_count("1. A b. 2. C."), 5);
        assert_eq!(word_count("  \n\t "), 0);
        assert_eq!(word_count("one"), 1);
    }

    #[test]
    fn truncation_keeps_layout() {
        assert_eq!(truncate_words("a  b\nc d", 3), "a  b\nc");
        assert_eq!(truncate_words("a b", 5), "a b");
        assert_eq!(truncate_words("a b", 0), "");
        assert_eq!(truncate_words("  lead b", 1), "  lead");
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace(" a \n b\t\tc "), "a b c");
    }
}
