use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedError {
    pub rank: usize,
    pub sentence_id: String,
    pub sentence: String,
    pub gold: f64,
    pub predicted: f64,
    pub abs_error: f64,
}

/// The `n` items with the largest |gold - predicted|, largest first; ties
/// keep input order. Asking for more rows than exist returns them all.
pub fn top_errors(
    ids: &[String],
    sentences: &[String],
    gold: &[f64],
    predicted: &[f64],
    n: usize,
) -> Result<Vec<RankedError>, ProbeError> {
    let len = ids.len();
    for other in [sentences.len(), gold.len(), predicted.len()] {
        if other != len {
            return Err(ProbeError::Length { expected: len, found: other });
        }
    }
    let mut order: Vec<usize> = (0..len).collect();
    let err = |i: usize| (gold[i] - predicted[i]).abs();
    order.sort_by(|&a, &b| err(b).total_cmp(&err(a)));
    Ok(order
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(r, i)| RankedError {
            rank: r + 1,
            sentence_id: ids[i].clone(),
            sentence: sentences[i].clone(),
            gold: gold[i],
            predicted: predicted[i],
            abs_error: err(i),
        })
        .collect())
}

/// Sentence, true and predicted value in aligned columns, two decimals.
pub fn render_error_table(rows: &[RankedError]) -> String {
    let width = rows.iter().map(|r| r.sentence.len()).max().unwrap_or(0).max("Sentence".len());
    let mut out = format!("{:>width$}  {:>6}  {:>6}\n", "Sentence", "True", "Pred.");
    for r in rows {
        out.push_str(&format!("{:>width$}  {:>6.2}  {:>6.2}\n", r.sentence, r.gold, r.predicted));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn planted_worst_item_ranks_first() {
        let gold = vec![0.0; 30];
        let mut pred: Vec<f64> = (0..30).map(|i| i as f64 * 0.01).collect();
        pred[17] = 10.0;
        let rows = top_errors(&ids(30), &ids(30), &gold, &pred, 20).unwrap();
        assert_eq!(rows.len(), 20);
        assert_eq!(rows[0].sentence_id, "s17");
        assert_eq!(rows[0].abs_error, 10.0);
        assert!(rows.windows(2).all(|w| w[0].abs_error >= w[1].abs_error));
    }

    #[test]
    fn oversized_request_returns_all() {
        let rows = top_errors(&ids(3), &ids(3), &[1.0; 3], &[1.0; 3], 10).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.abs_error == 0.0));
        assert_eq!(rows[0].sentence_id, "s0");
    }

    #[test]
    fn table_layout() {
        let rows = top_errors(
            &["a".into()],
            &["faked that something happened".into()],
            &[-3.15],
            &[0.86],
            1,
        )
        .unwrap();
        let t = render_error_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].ends_with("True   Pred."));
        assert_eq!(lines[1], "faked that something happened   -3.15    0.86");
    }
}
