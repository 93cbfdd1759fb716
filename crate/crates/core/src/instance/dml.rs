//! Differentiable matching layer: embedding correlation, row softmax, the
//! matching loss and its exact gradient with respect to the embedding head.

use serde::{Deserialize, Serialize};

use super::head::{backward, forward, EmbeddingHeadParams, Forward};
use crate::error::{Error, Result};

/// Embedding vectors of one frame's instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Vec<Vec<f64>>,
    pub instance_ids: Vec<u16>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, instance_ids: Vec<u16>) -> Result<Self> {
        if vectors.len() != instance_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} embeddings for {} instances",
                vectors.len(),
                instance_ids.len()
            )));
        }
        if let Some(d) = vectors.first().map(Vec::len) {
            if vectors.iter().any(|v| v.len() != d) {
                return Err(Error::ShapeMismatch("embeddings of differing length".into()));
            }
        }
        Ok(Self {
            vectors,
            instance_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Copy with every vector scaled to unit length (zero vectors stay zero).
    pub fn normalized(&self) -> Self {
        Self {
            vectors: self.vectors.iter().map(|v| l2_normalize(v).0).collect(),
            instance_ids: self.instance_ids.clone(),
        }
    }
}

const NORM_EPS: f64 = 1e-12;

fn l2_normalize(v: &[f64]) -> (Vec<f64>, f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_EPS);
    (v.iter().map(|x| x / norm).collect(), norm)
}

/// Pairwise dot products, `logits[i][j] = <m_i, n_j>`.
pub fn correlate(m: &EmbeddingSet, n: &EmbeddingSet) -> Result<Vec<Vec<f64>>> {
    if let (Some(a), Some(b)) = (m.vectors.first(), n.vectors.first()) {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "embedding widths {} and {}",
                a.len(),
                b.len()
            )));
        }
    }
    Ok(dot_matrix(&m.vectors, &n.vectors))
}

fn dot_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|u| {
            b.iter()
                .map(|v| u.iter().zip(v).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect()
}

/// Row-wise match probabilities `p(j | i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchDistribution {
    pub probs: Vec<Vec<f64>>,
}

impl MatchDistribution {
    pub fn rows(&self) -> usize {
        self.probs.len()
    }

    pub fn cols(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i][j]
    }
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax of each row of `logits`, stabilised by subtracting the row max.
pub fn match_softmax(logits: &[Vec<f64>]) -> MatchDistribution {
    MatchDistribution {
        probs: logits.iter().map(|r| softmax_row(r)).collect(),
    }
}

/// `Σ_j j · p(j | i)` over column indices.
pub fn expected_target(dist: &MatchDistribution, i: usize) -> f64 {
    dist.probs[i]
        .iter()
        .enumerate()
        .map(|(j, p)| j as f64 * p)
        .sum()
}

/// Ground-truth `(row, column)` correspondences of one frame pair. Rows
/// without a true match are simply absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSupervision {
    pub pairs: Vec<(usize, usize)>,
}

impl MatchSupervision {
    /// Validates that rows and columns are distinct and inside `m x n`.
    pub fn new(pairs: Vec<(usize, usize)>, m: usize, n: usize) -> Result<Self> {
        let mut rows = vec![false; m];
        let mut cols = vec![false; n];
        for &(i, j) in &pairs {
            if i >= m || j >= n {
                return Err(Error::InvalidSupervision(format!(
                    "pair ({i}, {j}) outside {m}x{n}"
                )));
            }
            if std::mem::replace(&mut rows[i], true) {
                return Err(Error::InvalidSupervision(format!("row {i} repeated")));
            }
            if std::mem::replace(&mut cols[j], true) {
                return Err(Error::InvalidSupervision(format!("column {j} repeated")));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// How the matching loss scores a supervised row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `-ln p(correct)`.
    #[default]
    Categorical,
    /// `-ln p(correct) - Σ_{x≠correct} ln(1 - p(x))`, the indicator form
    /// summed over every column.
    Binary,
}

/// Mean matching loss over the supervised pairs.
pub fn matching_loss(dist: &MatchDistribution, sup: &MatchSupervision, kind: LossKind) -> Result<f64> {
    if sup.is_empty() {
        return Err(Error::EmptySupervision);
    }
    let mut total = 0.0;
    for &(i, j) in &sup.pairs {
        let row = dist.probs.get(i).ok_or_else(|| {
            Error::InvalidSupervision(format!("row {i} outside {} rows", dist.rows()))
        })?;
        if j >= row.len() {
            return Err(Error::InvalidSupervision(format!("column {j} out of range")));
        }
        total += row_loss(row, j, kind);
    }
    Ok(total / sup.len() as f64)
}

fn row_loss(row: &[f64], target: usize, kind: LossKind) -> f64 {
    let mut loss = -row[target].ln();
    if kind == LossKind::Binary {
        for (x, &p) in row.iter().enumerate() {
            if x != target {
                loss -= (1.0 - p).ln();
            }
        }
    }
    loss
}

/// Gradient of [`row_loss`] with respect to the row's logits.
fn row_logit_grad(row: &[f64], target: usize, kind: LossKind) -> Vec<f64> {
    match kind {
        LossKind::Categorical => row
            .iter()
            .enumerate()
            .map(|(x, &p)| p - if x == target { 1.0 } else { 0.0 })
            .collect(),
        LossKind::Binary => {
            // dL/dp, then through the softmax Jacobian
            let dp: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(x, &p)| if x == target { -1.0 / p } else { 1.0 / (1.0 - p) })
                .collect();
            let mean: f64 = dp.iter().zip(row).map(|(g, p)| g * p).sum();
            row.iter().zip(&dp).map(|(p, g)| p * (g - mean)).collect()
        }
    }
}

/// Options of the matching head shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchOptions {
    pub loss: LossKind,
    /// L2-normalise embeddings before correlating.
    pub cosine: bool,
}

struct Embedded {
    fwd: Forward,
    unit: Vec<f64>,
    norm: f64,
}

fn embed_all(rois: &[Vec<f64>], p: &EmbeddingHeadParams, cosine: bool) -> Result<Vec<Embedded>> {
    rois.iter()
        .map(|x| {
            p.check_input(x.len())?;
            let fwd = forward(x, p);
            let (unit, norm) = if cosine {
                l2_normalize(&fwd.out)
            } else {
                (fwd.out.clone(), 1.0)
            };
            Ok(Embedded { fwd, unit, norm })
        })
        .collect()
}

fn embedding_grad(e: &Embedded, du: Vec<f64>, cosine: bool) -> Vec<f64> {
    if !cosine {
        return du;
    }
    // d(v/|v|) = (du - u (u·du)) / |v|
    let proj: f64 = e.unit.iter().zip(&du).map(|(u, d)| u * d).sum();
    du.iter()
        .zip(&e.unit)
        .map(|(d, u)| (d - u * proj) / e.norm)
        .collect()
}

/// Matching loss of one frame pair, evaluated from flattened RoIs.
pub fn pair_loss(
    prev: &[Vec<f64>],
    cur: &[Vec<f64>],
    params: &EmbeddingHeadParams,
    sup: &MatchSupervision,
    opts: MatchOptions,
) -> Result<f64> {
    let a = embed_all(prev, params, opts.cosine)?;
    let b = embed_all(cur, params, opts.cosine)?;
    let logits = dot_matrix(
        &a.iter().map(|e| e.unit.clone()).collect::<Vec<_>>(),
        &b.iter().map(|e| e.unit.clone()).collect::<Vec<_>>(),
    );
    matching_loss(&match_softmax(&logits), sup, opts.loss)
}

/// Loss of one frame pair and its exact gradient with respect to every
/// head parameter, backpropagated through softmax, correlation and both
/// embedding layers.
pub fn loss_gradients(
    prev: &[Vec<f64>],
    cur: &[Vec<f64>],
    params: &EmbeddingHeadParams,
    sup: &MatchSupervision,
    opts: MatchOptions,
) -> Result<(f64, EmbeddingHeadParams)> {
    if sup.is_empty() {
        return Err(Error::EmptySupervision);
    }
    let sup = MatchSupervision::new(sup.pairs.clone(), prev.len(), cur.len())?;
    let a = embed_all(prev, params, opts.cosine)?;
    let b = embed_all(cur, params, opts.cosine)?;
    let ua: Vec<Vec<f64>> = a.iter().map(|e| e.unit.clone()).collect();
    let ub: Vec<Vec<f64>> = b.iter().map(|e| e.unit.clone()).collect();
    let dist = match_softmax(&dot_matrix(&ua, &ub));
    let loss = matching_loss(&dist, &sup, opts.loss)?;

    let scale = 1.0 / sup.len() as f64;
    let d = params.d_embed;
    let mut da = vec![vec![0.0; d]; a.len()];
    let mut db = vec![vec![0.0; d]; b.len()];
    for &(i, j) in &sup.pairs {
        let dz = row_logit_grad(&dist.probs[i], j, opts.loss);
        for (x, g) in dz.iter().enumerate() {
            let g = g * scale;
            for k in 0..d {
                da[i][k] += g * ub[x][k];
                db[x][k] += g * ua[i][k];
            }
        }
    }

    let mut grads = params.zeros_like();
    for ((e, x), du) in a.iter().zip(prev).zip(da) {
        let dout = embedding_grad(e, du, opts.cosine);
        backward(x, &e.fwd, &dout, params, &mut grads);
    }
    for ((e, x), du) in b.iter().zip(cur).zip(db) {
        let dout = embedding_grad(e, du, opts.cosine);
        backward(x, &e.fwd, &dout, params, &mut grads);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn set(vs: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::new(
            vs.iter().map(|v| v.to_vec()).collect(),
            (1..=vs.len() as u16).collect(),
        )
        .unwrap()
    }

    #[test]
    fn orthonormal_rows_correlate_to_identity() {
        let m = set(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let l = correlate(&m, &m).unwrap();
        for (i, row) in l.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn zero_embeddings_give_zero_logits() {
        let m = set(&[&[1.0, 2.0], &[3.0, -4.0]]);
        let z = set(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
        assert!(correlate(&m, &z).unwrap().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_two_by_three() {
        let m = set(&[&[1.0, 2.0], &[-1.0, 3.0]]);
        let n = set(&[&[2.0, 0.0], &[1.0, 1.0], &[0.0, -2.0]]);
        // [1*2+2*0, 1+2, -4], [-2, -1+3, -6]
        assert_eq!(
            correlate(&m, &n).unwrap(),
            vec![vec![2.0, 3.0, -4.0], vec![-2.0, 2.0, -6.0]]
        );
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = set(&[&[1.0, 2.0]]);
        let n = set(&[&[1.0, 2.0, 3.0]]);
        assert!(matches!(correlate(&m, &n), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn softmax_examples() {
        let d = match_softmax(&[vec![0.7; 4]]);
        assert!(d.probs[0].iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let d = match_softmax(&[vec![0.0, 3f64.ln()]]);
        assert!((d.probs[0][0] - 0.25).abs() < 1e-15);
        assert!((d.probs[0][1] - 0.75).abs() < 1e-15);

        let base = vec![0.3, -1.2, 2.5];
        let shifted: Vec<f64> = base.iter().map(|v| v + 1000.0).collect();
        let a = match_softmax(&[base]);
        let b = match_softmax(&[shifted]);
        for (x, y) in a.probs[0].iter().zip(&b.probs[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_target_examples() {
        let one_hot = MatchDistribution {
            probs: vec![vec![0.0, 0.0, 1.0]],
        };
        assert_eq!(expected_target(&one_hot, 0), 2.0);
        let uniform = MatchDistribution {
            probs: vec![vec![1.0 / 3.0; 3]],
        };
        assert!((expected_target(&uniform, 0) - 1.0).abs() < 1e-15);
        let d = MatchDistribution {
            probs: vec![vec![0.25, 0.75]],
        };
        assert_eq!(expected_target(&d, 0), 0.75);
    }

    #[test]
    fn loss_examples() {
        let perfect = MatchDistribution {
            probs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let sup = MatchSupervision::new(vec![(0, 0), (1, 1)], 2, 2).unwrap();
        assert_eq!(matching_loss(&perfect, &sup, LossKind::Categorical).unwrap(), 0.0);

        let half = MatchDistribution {
            probs: vec![vec![0.5, 0.5]],
        };
        let one = MatchSupervision::new(vec![(0, 1)], 1, 2).unwrap();
        let l = matching_loss(&half, &one, LossKind::Categorical).unwrap();
        assert!((l - LN2).abs() < 1e-15);

        let two = MatchDistribution {
            probs: vec![vec![0.5, 0.5, 0.0], vec![0.25, 0.5, 0.25]],
        };
        let sup = MatchSupervision::new(vec![(0, 0), (1, 2)], 2, 3).unwrap();
        let l = matching_loss(&two, &sup, LossKind::Categorical).unwrap();
        assert!((l - 1.039_720_770_839_917_9).abs() < 1e-12);
        assert!((l - 1.5 * LN2).abs() < 1e-15);

        // binary form adds -ln(1 - 0.5) for the wrong column
        let l = matching_loss(&half, &one, LossKind::Binary).unwrap();
        assert!((l - 2.0 * LN2).abs() < 1e-15);
    }

    #[test]
    fn supervision_validation() {
        assert!(MatchSupervision::new(vec![(0, 0), (1, 0)], 2, 2).is_err());
        assert!(MatchSupervision::new(vec![(0, 0), (0, 1)], 2, 2).is_err());
        assert!(MatchSupervision::new(vec![(2, 0)], 2, 2).is_err());
        let empty = MatchSupervision::new(vec![], 2, 2).unwrap();
        let d = match_softmax(&[vec![0.0, 0.0]]);
        assert!(matches!(
            matching_loss(&d, &empty, LossKind::Categorical),
            Err(Error::EmptySupervision)
        ));
    }
}
