//! Similarity matrices between the instances of two frames.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Pixel,
    Instance,
    Fused,
}

/// An `m x n` score matrix: rows are instances of the earlier frame, columns
/// instances of the later one.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    kind: MatrixKind,
    row_ids: Vec<u16>,
    col_ids: Vec<u16>,
}

impl CorrelationMatrix {
    pub fn new(
        kind: MatrixKind,
        row_ids: Vec<u16>,
        col_ids: Vec<u16>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        let (rows, cols) = (row_ids.len(), col_ids.len());
        if scores.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for a {rows}x{cols} matrix",
                scores.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            scores,
            kind,
            row_ids,
            col_ids,
        })
    }

    /// Builds a matrix with ids `0..m` and `0..n` from nested rows.
    pub fn from_rows(kind: MatrixKind, rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(
            kind,
            (0..m as u16).collect(),
            (0..n as u16).collect(),
            rows.concat(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn row_ids(&self) -> &[u16] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[u16] {
        &self.col_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.scores[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Column of the row maximum; the first one on ties.
    pub fn row_argmax(&self, i: usize) -> Option<usize> {
        argmax((0..self.cols).map(|j| self.get(i, j)))
    }

    /// Row of the column maximum; the first one on ties.
    pub fn col_argmax(&self, j: usize) -> Option<usize> {
        argmax((0..self.rows).map(|i| self.get(i, j)))
    }

    pub fn transpose(&self) -> Self {
        let mut scores = Vec::with_capacity(self.scores.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                scores.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            scores,
            kind: self.kind,
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
        }
    }

    /// Chains `self` (a→b) with `next` (b→c) into a→c by matrix product.
    pub fn compose(&self, next: &CorrelationMatrix) -> Result<Self> {
        if self.cols != next.rows {
            return Err(Error::ShapeMismatch(format!(
                "cannot compose {}x{} with {}x{}",
                self.rows, self.cols, next.rows, next.cols
            )));
        }
        if self.col_ids != next.row_ids {
            return Err(Error::IdMisalignment);
        }
        let mut scores = vec![0.0; self.rows * next.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..next.cols {
                    scores[i * next.cols + j] += a * next.get(k, j);
                }
            }
        }
        Self::new(
            self.kind,
            self.row_ids.clone(),
            next.col_ids.clone(),
            scores,
        )
    }

    /// Tab-separated dump with a header row of column ids.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("row\\col");
        for id in &self.col_ids {
            out.push_str(&format!("\t{id}"));
        }
        out.push('\n');
        for i in 0..self.rows {
            out.push_str(&self.row_ids[i].to_string());
            for v in self.row(i) {
                out.push_str(&format!("\t{v:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
