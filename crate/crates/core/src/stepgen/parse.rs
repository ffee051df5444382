//! Numbered-step parsing.
//!
//! A step marker is a run of ASCII digits followed by `.` and then whitespace
//! (or end of text). It only counts at a boundary:
//!
//! * the start of the text, or the start of a line (indentation allowed), or
//! * after whitespace that follows `.`, `!`, `?` or `:`, where the punctuation
//!   may be wrapped in closing quotes or brackets (`"angry."  3. ...`).
//!
//! This keeps inline lists like `1. Read sentence 1 and sentence 2. 2. Compare`
//! intact: the `2` in `sentence 2.` follows a letter, not sentence punctuation.
//! Text before the first marker (a preamble such as "Here is the refined
//! instruction:") is dropped.

use super::StepgenError;

const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '*'];

fn at_boundary(before: &str) -> bool {
    let trimmed = before.trim_end();
    if trimmed.is_empty() {
        return true;
    }
    let gap = &before[trimmed.len()..];
    if gap.contains('\n') || gap.contains('\r') {
        return true;
    }
    if gap.is_empty() {
        return false;
    }
    let core = trimmed.trim_end_matches(CLOSERS);
    core.ends_with(['.', '!', '?', ':'])
}

/// Byte ranges `(marker_start, content_start)` of every step marker.
fn markers(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() || (i > 0 && bytes[i - 1].is_ascii_digit()) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        let dot_then_space = j < bytes.len()
            && bytes[j] == b'.'
            && text[j + 1..].chars().next().is_none_or(char::is_whitespace);
        if dot_then_space && at_boundary(&text[..i]) {
            found.push((i, j + 1));
        }
        i = j;
    }
    found
}

/// Split an instruction into its numbered steps.
///
/// Marker numerals are stripped and steps are trimmed; the order of
/// appearance is kept whatever the numerals say. Empty steps are dropped.
pub fn parse_steps(text: &str) -> Result<Vec<String>, StepgenError> {
    let marks = markers(text);
    let steps: Vec<String> = marks
        .iter()
        .enumerate()
        .map(|(k, &(_, content))| {
            let end = marks.get(k + 1).map_or(text.len(), |&(next, _)| next);
            text[content..end].trim().to_string()
        })
        .filter(|s| !s.is_empty())
        .collect();
    if steps.is_empty() {
        Err(StepgenError::NoSteps)
    } else {
        Ok(steps)
    }
}

/// Canonical rendering: `1. first\n2. second\n...`.
pub fn renumber_and_join<S: AsRef<str>>(steps: &[S]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SNLI: &str = "1. Read sentence 1 and sentence 2. 2. Compare the two sentences to determine whether they agree or disagree with each other. 3. If the sentences agree with each other, choose the \"entailment\" option (E). 4. If the sentences disagree with each other, choose the \"contradiction\" option (C). 5. If it is not possible to determine whether the sentences agree or disagree, choose the \"neutral\" option (N).";

    #[test]
    fn inline_entailment_instruction_matches_hand_segmentation() {
        let hand = [
            "Read sentence 1 and sentence 2.",
            "Compare the two sentences to determine whether they agree or disagree with each other.",
            "If the sentences agree with each other, choose the \"entailment\" option (E).",
            "If the sentences disagree with each other, choose the \"contradiction\" option (C).",
            "If it is not possible to determine whether the sentences agree or disagree, choose the \"neutral\" option (N).",
        ];
        assert_eq!(parse_steps(SNLI).unwrap(), hand);
    }

    #[test]
    fn quoted_sentence_end_before_marker() {
        let text = "1. Begin by reading.  2. Look for words such as \"happy,\" \"sad,\" or \"angry.\"  3. Return it.";
        assert_eq!(
            parse_steps(text).unwrap(),
            [
                "Begin by reading.",
                "Look for words such as \"happy,\" \"sad,\" or \"angry.\"",
                "Return it."
            ]
        );
    }

    #[test]
    fn newline_separated() {
        assert_eq!(parse_steps("1. A\n2. B\n3. C").unwrap(), ["A", "B", "C"]);
        assert_eq!(parse_steps("  1. A\n   2. B").unwrap(), ["A", "B"]);
    }

    #[test]
    fn preamble_is_skipped_and_numerals_ignored() {
        let text = "Here is the refined instruction:\n\n3. first\n1. second";
        assert_eq!(parse_steps(text).unwrap(), ["first", "second"]);
        assert_eq!(parse_steps("Refined: 1. only").unwrap(), ["only"]);
    }

    #[test]
    fn decimals_and_inner_numbers_are_not_markers() {
        assert_eq!(
            parse_steps("1. Costs rose. 3.5 percent is the rate.\n2. Next").unwrap(),
            ["Costs rose. 3.5 percent is the rate.", "Next"]
        );
    }

    #[test]
    fn prose_without_numbering_has_no_steps() {
        assert!(matches!(
            parse_steps("Read the text and answer the question."),
            Err(StepgenError::NoSteps)
        ));
        assert!(matches!(parse_steps(""), Err(StepgenError::NoSteps)));
    }

    #[test]
    fn join_format() {
        assert_eq!(renumber_and_join(&["A", "B"]), "1. A\n2. B");
    }

    fn step_text() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            "[a-z]{1,8}",
            "[0-9]{1,3}",
            Just("sentence 1".to_string()),
            Just("e.g.,".to_string()),
            Just("\"quoted.\"".to_string()),
            Just("end.".to_string()),
            Just("why?".to_string()),
            Just("2.".to_string()),
        ];
        prop::collection::vec(word, 1..8).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn parse_join_parse_is_idempotent(steps in prop::collection::vec(step_text(), 1..8)) {
            let inline = steps
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {}", i + 1, s))
                .collect::<Vec<_>>()
                .join(" ");
            if let Ok(first) = parse_steps(&inline) {
                let second = parse_steps(&renumber_and_join(&first)).unwrap();
                prop_assert_eq!(&first, &second);
                let third = parse_steps(&renumber_and_join(&second)).unwrap();
                prop_assert_eq!(second, third);
            }
        }
    }
}
