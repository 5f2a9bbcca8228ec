//! Per-example joint loss, the keep-rate schedule and small-loss selection.
//!
//! All losses work on clamped probabilities `q = max(p, PROB_FLOOR)` and use
//! natural logarithms. Nothing here reduces over the batch except
//! [`reduce_selected`], which averages over the kept examples.

use serde::{Deserialize, Serialize};

use crate::error::{config, data, shape, Result};
use crate::matrix::Matrix;
use crate::nn::PROB_FLOOR;

#[inline]
fn clamp(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

/// d clamp(p) / dp
#[inline]
fn clamp_slope(p: f64) -> f64 {
    if p >= PROB_FLOOR {
        1.0
    } else {
        0.0
    }
}

fn check_labels(p: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != p.rows() {
        return Err(shape(format!(
            "{} labels for {} prediction rows",
            labels.len(),
            p.rows()
        )));
    }
    if let Some((i, y)) = labels.iter().enumerate().find(|(_, &y)| y >= p.cols()) {
        return Err(data(format!(
            "label {y} at row {i} outside [0, {})",
            p.cols()
        )));
    }
    Ok(())
}

fn check_pair(p1: &Matrix, p2: &Matrix) -> Result<()> {
    if p1.shape() != p2.shape() {
        return Err(shape(format!(
            "prediction shapes differ: {:?} vs {:?}",
            p1.shape(),
            p2.shape()
        )));
    }
    Ok(())
}

/// `-ln q[i][y_i]` for every row.
pub fn cross_entropy(p: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(p, labels)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -clamp(p.get(i, y)).ln())
        .collect())
}

/// Cross-entropy of both networks, summed per example.
pub fn supervised_loss(p1: &Matrix, p2: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    check_pair(p1, p2)?;
    let c1 = cross_entropy(p1, labels)?;
    let c2 = cross_entropy(p2, labels)?;
    Ok(c1.iter().zip(&c2).map(|(a, b)| a + b).collect())
}

/// Symmetric KL divergence `KL(p1‖p2) + KL(p2‖p1)` per row, written as
/// `Σ_m (q1 - q2)(ln q1 - ln q2)`. Every term is non-negative and the
/// expression is exactly symmetric in its arguments.
pub fn contrastive_loss(p1: &Matrix, p2: &Matrix) -> Result<Vec<f64>> {
    check_pair(p1, p2)?;
    Ok((0..p1.rows())
        .map(|r| {
            p1.row(r)
                .iter()
                .zip(p2.row(r))
                .map(|(&a, &b)| {
                    let (a, b) = (clamp(a), clamp(b));
                    (a - b) * (a.ln() - b.ln())
                })
                .sum()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub per_example_sup: Vec<f64>,
    pub per_example_con: Vec<f64>,
    pub per_example_joint: Vec<f64>,
    pub lambda: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(config(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// `(1 - λ)·sup + λ·con` per example.
pub fn joint_loss(
    p1: &Matrix,
    p2: &Matrix,
    labels: &[usize],
    lambda: f64,
) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    let sup = supervised_loss(p1, p2, labels)?;
    let con = contrastive_loss(p1, p2)?;
    let joint = sup
        .iter()
        .zip(&con)
        .map(|(s, c)| (1.0 - lambda) * s + lambda * c)
        .collect();
    Ok(LossBreakdown {
        per_example_sup: sup,
        per_example_con: con,
        per_example_joint: joint,
        lambda,
    })
}

/// Keep-rate schedule `R(t) = 1 - min(t / t_k · τ, τ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeepSchedule {
    pub tau: f64,
    pub t_k: usize,
}

impl KeepSchedule {
    pub fn new(tau: f64, t_k: usize) -> Result<Self> {
        let s = Self { tau, t_k };
        s.validate()?;
        Ok(s)
    }

    /// R(t) ≡ 1: nothing is ever dropped.
    pub fn keep_all() -> Self {
        Self { tau: 0.0, t_k: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(config(format!("tau {} outside [0, 1)", self.tau)));
        }
        if self.t_k == 0 {
            return Err(config("t_k must be positive"));
        }
        Ok(())
    }
}

pub fn keep_rate(schedule: &KeepSchedule, epoch: usize) -> f64 {
    let ramp = (epoch as f64 / schedule.t_k as f64) * schedule.tau;
    let rate = 1.0 - ramp.min(schedule.tau);
    rate.clamp(1.0 - schedule.tau, 1.0)
}

/// Examples kept from one mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Batch positions, ascending.
    pub kept_indices: Vec<usize>,
    pub keep_rate: f64,
}

impl Selection {
    pub fn all(batch: usize) -> Self {
        Self {
            kept_indices: (0..batch).collect(),
            keep_rate: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_indices.is_empty()
    }
}

/// `⌈rate · batch⌉`, at least one example.
///
/// Products such as `0.55 · 100` come out a hair above the integer in binary
/// floating point, so values within 1e-9 of an integer are snapped to it
/// before taking the ceiling.
pub fn selected_count(rate: f64, batch: usize) -> usize {
    let exact = rate * batch as f64;
    let k = (exact - 1e-9).ceil().max(1.0) as usize;
    k.min(batch)
}

/// Keeps the `⌈rate · batch⌉` smallest losses; ties go to the lower index.
pub fn select_small_loss(losses: &[f64], rate: f64) -> Result<Selection> {
    if losses.is_empty() {
        return Err(data("cannot select from an empty batch"));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(config(format!("keep rate {rate} outside (0, 1]")));
    }
    if let Some(i) = losses.iter().position(|l| l.is_nan()) {
        return Err(crate::Error::Numeric(format!(
            "NaN loss at batch index {i}"
        )));
    }
    let k = selected_count(rate, losses.len());
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    Ok(Selection {
        kept_indices: kept,
        keep_rate: rate,
    })
}

/// Mean of the kept losses.
pub fn reduce_selected(losses: &[f64], sel: &Selection) -> Result<f64> {
    if sel.is_empty() {
        return Err(data("cannot reduce an empty selection"));
    }
    let mut sum = 0.0;
    for &i in &sel.kept_indices {
        sum += losses
            .get(i)
            .ok_or_else(|| data(format!("kept index {i} outside batch of {}", losses.len())))?;
    }
    Ok(sum / sel.len() as f64)
}

fn check_selection(sel: &Selection, rows: usize) -> Result<()> {
    if sel.is_empty() {
        return Err(data("cannot differentiate an empty selection"));
    }
    if let Some(&i) = sel.kept_indices.iter().find(|&&i| i >= rows) {
        return Err(data(format!("kept index {i} outside batch of {rows}")));
    }
    Ok(())
}

/// Gradient of the mean kept cross-entropy with respect to `p`.
pub fn cross_entropy_grad(p: &Matrix, labels: &[usize], sel: &Selection) -> Result<Matrix> {
    check_labels(p, labels)?;
    check_selection(sel, p.rows())?;
    let scale = 1.0 / sel.len() as f64;
    let mut g = Matrix::zeros(p.rows(), p.cols());
    for &i in &sel.kept_indices {
        let y = labels[i];
        let py = p.get(i, y);
        g.set(i, y, -scale * clamp_slope(py) / clamp(py));
    }
    Ok(g)
}

/// Gradients of `mean_{i ∈ sel} joint_i` with respect to both probability
/// matrices. Rows outside the selection get zero gradient.
pub fn joint_loss_grad(
    p1: &Matrix,
    p2: &Matrix,
    labels: &[usize],
    lambda: f64,
    sel: &Selection,
) -> Result<(Matrix, Matrix)> {
    check_lambda(lambda)?;
    check_pair(p1, p2)?;
    check_labels(p1, labels)?;
    check_selection(sel, p1.rows())?;
    let scale = 1.0 / sel.len() as f64;
    let mut g1 = Matrix::zeros(p1.rows(), p1.cols());
    let mut g2 = Matrix::zeros(p2.rows(), p2.cols());
    for &i in &sel.kept_indices {
        // con = Σ (a - b)(ln a - ln b):
        //   ∂/∂a = ln(a/b) + 1 - b/a,  ∂/∂b = ln(b/a) + 1 - a/b
        for m in 0..p1.cols() {
            let (r1, r2) = (p1.get(i, m), p2.get(i, m));
            let (a, b) = (clamp(r1), clamp(r2));
            let log_ratio = a.ln() - b.ln();
            let da = log_ratio + 1.0 - b / a;
            let db = -log_ratio + 1.0 - a / b;
            g1.set(i, m, scale * lambda * da * clamp_slope(r1));
            g2.set(i, m, scale * lambda * db * clamp_slope(r2));
        }
        let y = labels[i];
        let (r1, r2) = (p1.get(i, y), p2.get(i, y));
        let sup1 = -(1.0 - lambda) * clamp_slope(r1) / clamp(r1);
        let sup2 = -(1.0 - lambda) * clamp_slope(r2) / clamp(r2);
        g1.set(i, y, g1.get(i, y) + scale * sup1);
        g2.set(i, y, g2.get(i, y) + scale * sup2);
    }
    Ok((g1, g2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn supervised_closed_forms() {
        let p = probs(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let l = supervised_loss(&p, &p, &[0, 1]).unwrap();
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            supervised_loss(&p, &p, &[0, 2]),
            Err(crate::Error::Data(_))
        ));
    }

    #[test]
    fn contrastive_reference_value() {
        // Reference evaluated independently at 50 significant digits.
        let p1 = probs(&[&[0.5, 0.5]]);
        let p2 = probs(&[&[0.9, 0.1]]);
        let v = contrastive_loss(&p1, &p2).unwrap()[0];
        assert!((v - 0.878_889_830_934_487_8).abs() < 1e-14, "{v}");
        assert_eq!(contrastive_loss(&p2, &p1).unwrap()[0], v);
        assert_eq!(contrastive_loss(&p1, &p1).unwrap()[0], 0.0);
        assert!(contrastive_loss(&p1, &probs(&[&[0.5, 0.5, 0.0]])).is_err());
    }

    #[test]
    fn joint_degenerate_weights() {
        let p1 = probs(&[&[0.2, 0.8], &[0.6, 0.4]]);
        let p2 = probs(&[&[0.3, 0.7], &[0.1, 0.9]]);
        let y = [1, 0];
        let b0 = joint_loss(&p1, &p2, &y, 0.0).unwrap();
        assert_eq!(b0.per_example_joint, b0.per_example_sup);
        let b1 = joint_loss(&p1, &p2, &y, 1.0).unwrap();
        assert_eq!(b1.per_example_joint, b1.per_example_con);
        assert!(matches!(
            joint_loss(&p1, &p2, &y, 1.5),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn keep_rate_examples() {
        let s = KeepSchedule::new(0.5, 10).unwrap();
        assert_eq!(keep_rate(&s, 0), 1.0);
        assert_eq!(keep_rate(&s, 5), 0.75);
        for t in 10..40 {
            assert_eq!(keep_rate(&s, t), 0.5);
        }
        assert!(KeepSchedule::new(1.0, 10).is_err());
        assert!(KeepSchedule::new(0.2, 0).is_err());
        assert_eq!(keep_rate(&KeepSchedule::keep_all(), 100), 1.0);
    }

    #[test]
    fn selection_examples() {
        let sel = select_small_loss(&[0.1, 0.9, 0.2, 0.5], 0.5).unwrap();
        assert_eq!(sel.kept_indices, vec![0, 2]);
        let all = select_small_loss(&[0.3, 0.1, 0.2], 1.0).unwrap();
        assert_eq!(all.kept_indices, vec![0, 1, 2]);
        let tie = select_small_loss(&[0.5, 0.5, 0.5, 0.1], 0.5).unwrap();
        assert_eq!(tie.kept_indices, vec![0, 3]);
        assert!(matches!(
            select_small_loss(&[], 0.5),
            Err(crate::Error::Data(_))
        ));
    }

    #[test]
    fn selected_count_snaps_representation_error() {
        assert_eq!(selected_count(0.7, 10), 7);
        assert_eq!(selected_count(0.55, 100), 55);
        assert_eq!(selected_count(0.7, 64), 45);
        assert_eq!(selected_count(0.2, 1), 1);
        assert_eq!(selected_count(1.0, 128), 128);
    }

    #[test]
    fn reduce_is_a_mean() {
        let sel = Selection {
            kept_indices: vec![2],
            keep_rate: 0.3,
        };
        assert_eq!(reduce_selected(&[9.0, 9.0, 0.3], &sel).unwrap(), 0.3);
        let sel = Selection {
            kept_indices: vec![0, 1],
            keep_rate: 1.0,
        };
        assert!((reduce_selected(&[0.1, 0.2], &sel).unwrap() - 0.15).abs() < 1e-16);
        let empty = Selection {
            kept_indices: vec![],
            keep_rate: 1.0,
        };
        assert!(matches!(
            reduce_selected(&[0.1], &empty),
            Err(crate::Error::Data(_))
        ));
    }

    #[test]
    fn gradients_vanish_outside_selection() {
        let p1 = probs(&[&[0.2, 0.8], &[0.6, 0.4], &[0.5, 0.5]]);
        let p2 = probs(&[&[0.3, 0.7], &[0.1, 0.9], &[0.4, 0.6]]);
        let sel = Selection {
            kept_indices: vec![1],
            keep_rate: 0.34,
        };
        let (g1, g2) = joint_loss_grad(&p1, &p2, &[1, 0, 1], 0.5, &sel).unwrap();
        for r in [0, 2] {
            assert!(g1.row(r).iter().chain(g2.row(r)).all(|&v| v == 0.0));
        }
        assert!(g1.row(1).iter().any(|&v| v != 0.0));
    }

    /// dL/dp against central differences on the probabilities directly.
    #[test]
    fn joint_probability_gradient_matches_differences() {
        let p1 = probs(&[&[0.2, 0.5, 0.3], &[0.6, 0.3, 0.1]]);
        let p2 = probs(&[&[0.25, 0.25, 0.5], &[0.1, 0.7, 0.2]]);
        let y = [2, 1];
        let sel = Selection::all(2);
        for lambda in [0.0, 0.4, 1.0] {
            let (g1, g2) = joint_loss_grad(&p1, &p2, &y, lambda, &sel).unwrap();
            let f = |a: &Matrix, b: &Matrix| {
                reduce_selected(
                    &joint_loss(a, b, &y, lambda).unwrap().per_example_joint,
                    &sel,
                )
                .unwrap()
            };
            let h = 1e-6;
            for r in 0..2 {
                for c in 0..3 {
                    let mut up = p1.clone();
                    up.set(r, c, p1.get(r, c) + h);
                    let mut dn = p1.clone();
                    dn.set(r, c, p1.get(r, c) - h);
                    let num = (f(&up, &p2) - f(&dn, &p2)) / (2.0 * h);
                    assert!((num - g1.get(r, c)).abs() < 1e-6, "p1 {r},{c}");
                    let mut up = p2.clone();
                    up.set(r, c, p2.get(r, c) + h);
                    let mut dn = p2.clone();
                    dn.set(r, c, p2.get(r, c) - h);
                    let num = (f(&p1, &up) - f(&p1, &dn)) / (2.0 * h);
                    assert!((num - g2.get(r, c)).abs() < 1e-6, "p2 {r},{c}");
                }
            }
        }
    }
}
