use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// A partial one-to-one mapping from rows to columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub matches: Vec<Match>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    fn from_matches(mut matches: Vec<Match>, rows: usize, cols: usize) -> Self {
        matches.sort_by_key(|m| m.row);
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for m in &matches {
            row_used[m.row] = true;
            col_used[m.col] = true;
        }
        Self {
            matches,
            unmatched_rows: (0..rows).filter(|&i| !row_used[i]).collect(),
            unmatched_cols: (0..cols).filter(|&j| !col_used[j]).collect(),
        }
    }

    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.row == row).map(|m| m.col)
    }

    pub fn row_of(&self, col: usize) -> Option<usize> {
        self.matches.iter().find(|m| m.col == col).map(|m| m.row)
    }
}

/// Order in which rows claim their best column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignOrder {
    /// The row with the highest remaining score goes first.
    #[default]
    BestScore,
    /// Rows in index order.
    RowIndex,
}

/// Thresholded one-to-one assignment, rows claiming their best free column
/// in descending order of that score.
pub fn greedy_assign(m: &CorrelationMatrix, tau_match: f64) -> Assignment {
    greedy_assign_with(m, tau_match, AssignOrder::BestScore)
}

pub fn greedy_assign_with(m: &CorrelationMatrix, tau_match: f64, order: AssignOrder) -> Assignment {
    greedy_assign_filtered(m, tau_match, order, |_, _| true)
}

/// Greedy assignment restricted to cells accepted by `allowed`.
pub(crate) fn greedy_assign_filtered(
    m: &CorrelationMatrix,
    tau_match: f64,
    order: AssignOrder,
    allowed: impl Fn(usize, usize) -> bool,
) -> Assignment {
    let (rows, cols) = (m.rows(), m.cols());
    let mut col_used = vec![false; cols];
    let best_free = |i: usize, col_used: &[bool]| -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..cols).filter(|&j| !col_used[j] && allowed(i, j)) {
            let s = m.get(i, j);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        best
    };

    let mut matches = Vec::new();
    match order {
        AssignOrder::RowIndex => {
            for i in 0..rows {
                if let Some((j, s)) = best_free(i, &col_used) {
                    if s >= tau_match {
                        col_used[j] = true;
                        matches.push(Match { row: i, col: j, score: s });
                    }
                }
            }
        }
        AssignOrder::BestScore => {
            let mut pending: Vec<usize> = (0..rows).collect();
            loop {
                let mut pick: Option<(usize, usize, f64)> = None;
                for (k, &i) in pending.iter().enumerate() {
                    if let Some((j, s)) = best_free(i, &col_used) {
                        if pick.is_none_or(|(_, _, b)| s > b) {
                            pick = Some((k, j, s));
                        }
                    }
                }
                match pick {
                    Some((k, j, s)) if s >= tau_match => {
                        let i = pending.remove(k);
                        col_used[j] = true;
                        matches.push(Match { row: i, col: j, score: s });
                    }
                    // every remaining row's best is below the threshold
                    _ => break,
                }
            }
        }
    }
    Assignment::from_matches(matches, rows, cols)
}

/// True when `j` is the maximum of row `i` and `i` the maximum of column `j`.
pub fn is_mutual(m: &CorrelationMatrix, i: usize, j: usize) -> bool {
    m.row_argmax(i) == Some(j) && m.col_argmax(j) == Some(i)
}

/// Drops matches whose row and column maxima disagree.
pub fn mutual_check(m: &CorrelationMatrix, a: &Assignment) -> Assignment {
    let kept = a
        .matches
        .iter()
        .copied()
        .filter(|mm| is_mutual(m, mm.row, mm.col))
        .collect();
    Assignment::from_matches(kept, m.rows(), m.cols())
}
