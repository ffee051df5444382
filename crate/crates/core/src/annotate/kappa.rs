//! Fleiss's kappa over an item × category count table.

use super::AnnotateError;

/// `table[i][j]` is the number of raters who put item `i` in category `j`.
/// Every row must have the same length and sum to the same rater count n ≥ 2.
pub fn fleiss_kappa(table: &[Vec<u64>]) -> Result<f64, AnnotateError> {
    let first = table.first().ok_or_else(|| AnnotateError::RaggedTable("no items".into()))?;
    let k = first.len();
    let n: u64 = first.iter().sum();
    if n < 2 {
        return Err(AnnotateError::RaggedTable(format!("{n} raters per item, need at least 2")));
    }
    for (i, row) in table.iter().enumerate() {
        if row.len() != k {
            return Err(AnnotateError::RaggedTable(format!(
                "row {i} has {} categories, expected {k}",
                row.len()
            )));
        }
        let s: u64 = row.iter().sum();
        if s != n {
            return Err(AnnotateError::RaggedTable(format!("row {i} sums to {s}, expected {n}")));
        }
    }
    let items = table.len() as f64;
    let nf = n as f64;
    let p_bar = table
        .iter()
        .map(|row| {
            let sq: u64 = row.iter().map(|c| c * c).sum();
            (sq - n) as f64 / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..k)
        .map(|j| {
            let col: u64 = table.iter().map(|r| r[j]).sum();
            let p = col as f64 / (items * nf);
            p * p
        })
        .sum();
    if p_bar == 1.0 || p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
