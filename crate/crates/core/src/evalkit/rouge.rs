//! ROUGE-L as computed by the reference `rouge-score` package with its
//! default tokenizer and no stemming.

/// Lowercase, then split on every run of characters outside `[a-z0-9]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Longest common subsequence length, two-row dynamic programme.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

/// ROUGE-L between token sequences. Either side empty gives all zeros.
pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeL {
    if candidate.is_empty() || reference.is_empty() {
        return RougeL { precision: 0.0, recall: 0.0, fmeasure: 0.0 };
    }
    let lcs = lcs_len(reference, candidate) as f64;
    let precision = lcs / candidate.len() as f64;
    let recall = lcs / reference.len() as f64;
    let fmeasure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    RougeL { precision, recall, fmeasure }
}

/// Best ROUGE-L F-measure of `candidate` against any of `references`.
pub fn rouge_l<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    let cand = tokenize(candidate);
    references
        .iter()
        .map(|r| rouge_l_tokens(&cand, &tokenize(r.as_ref())).fmeasure)
        .fold(0.0, f64::max)
}
