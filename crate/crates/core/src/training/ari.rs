use std::collections::BTreeMap;

use super::TrainError;

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index from the contingency table of two labelings.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64, TrainError> {
    if pred.len() != truth.len() {
        return Err(TrainError::Shape(format!(
            "labelings of length {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry((p, t)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(t).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(pred.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        // both labelings trivial in the same way (one cluster, or all singletons)
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
