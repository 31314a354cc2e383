//! Set-prediction matching between predicted animal hypotheses and ground truth.
//!
//! The pairwise cost is
//!
//! ```text
//! C = λ_conf·C_conf + λ_bbox·C_bbox + λ_giou·C_giou + λ_kpts·C_kpts
//! C_conf = α (1 - c)^γ (-ln c)            c clamped to [1e-7, 1]
//! C_bbox = Σ |Δ(cx, cy, w, h)|            normalized coordinates, summed
//! C_giou = -GIoU
//! C_kpts = mean over visible keypoints of the per-keypoint L1 distance
//! ```
//!
//! The training loss uses `1 - GIoU` instead (see [`crate::losses`]); both rank
//! pairs identically. An optimal injection from ground truths to predictions
//! is found with the Hungarian algorithm; ties are broken towards the
//! lexicographically smallest assignment vector.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::InstanceParams;
use crate::error::{Error, Result};
use crate::projection::BBox;

/// Confidence floor applied before taking logarithms.
pub const CONF_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct InstancePrediction {
    pub bbox: BBox,
    pub confidence: f64,
    /// Normalized image coordinates.
    pub keypoints2d: Vec<Vector2<f64>>,
    pub keypoints3d: Vec<Vector3<f64>>,
    pub params: Option<InstanceParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub bbox: BBox,
    /// Normalized image coordinates.
    pub keypoints2d: Vec<Vector2<f64>>,
    pub visibility: Vec<bool>,
    pub keypoints3d: Vec<Vector3<f64>>,
    /// Absent for 2D-only datasets.
    pub params: Option<InstanceParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWeights {
    pub lambda_conf: f64,
    pub lambda_bbox: f64,
    pub lambda_giou: f64,
    pub lambda_kpts: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        Self {
            lambda_conf: 1.0,
            lambda_bbox: 1.0,
            lambda_giou: 1.0,
            lambda_kpts: 10.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

/// Unweighted cost terms for one pair, plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub conf: f64,
    pub bbox: f64,
    pub giou: f64,
    pub kpts: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `assignment[i]` is the prediction matched to ground truth `i`.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    pub per_pair_costs: Vec<CostBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub result: MatchResult,
    /// Predictions in ground-truth order.
    pub reordered: Vec<InstancePrediction>,
    /// `(prediction index, confidence)` for predictions left unmatched.
    pub unmatched: Vec<(usize, f64)>,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Generalized IoU. Degenerate pairs with an empty hull score 0 when distinct
/// and 1 when identical.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    let hull = (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0));
    if hull <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    iou - (hull - union) / hull
}

/// Focal-style confidence penalty `α (1 - c)^γ (-ln c)`.
pub fn focal_conf_cost(confidence: f64, alpha: f64, gamma: f64) -> f64 {
    let c = confidence.clamp(CONF_EPS, 1.0);
    alpha * (1.0 - c).powf(gamma) * (-c.ln())
}

/// Mean per-keypoint L1 distance over visible keypoints; 0 if none are visible.
pub fn keypoint_cost(pred: &[Vector2<f64>], gt: &[Vector2<f64>], vis: &[bool]) -> f64 {
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .zip(vis)
        .filter(|(_, v)| **v)
        .fold((0.0, 0usize), |(s, n), ((p, g), _)| {
            (s + (p.x - g.x).abs() + (p.y - g.y).abs(), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn bbox_l1(a: &BBox, b: &BBox) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y).abs())
        .sum()
}

pub fn match_cost(
    pred: &InstancePrediction,
    gt: &GroundTruthInstance,
    w: &MatchWeights,
) -> CostBreakdown {
    let conf = focal_conf_cost(pred.confidence, w.focal_alpha, w.focal_gamma);
    let bbox = bbox_l1(&pred.bbox, &gt.bbox);
    let giou_cost = -giou(&pred.bbox, &gt.bbox);
    let kpts = keypoint_cost(&pred.keypoints2d, &gt.keypoints2d, &gt.visibility);
    CostBreakdown {
        conf,
        bbox,
        giou: giou_cost,
        kpts,
        total: w.lambda_conf * conf
            + w.lambda_bbox * bbox
            + w.lambda_giou * giou_cost
            + w.lambda_kpts * kpts,
    }
}

/// Dense row-major cost matrix, rows are ground truths and columns predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "cost matrix",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("ragged cost matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// Sum of the assigned entries, accumulated in row order.
    pub fn assignment_cost(&self, assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .fold(0.0, |acc, (r, &c)| acc + self.get(r, c))
    }
}

/// Shortest-augmenting-path Hungarian algorithm with dual potentials.
/// Solves the `rows` × `cols` problem restricted to `row_ids` and `col_ids`.
fn solve_subproblem(cost: &CostMatrix, row_ids: &[usize], col_ids: &[usize]) -> Vec<usize> {
    let n = row_ids.len();
    let m = col_ids.len();
    debug_assert!(n <= m);
    if n == 0 {
        return Vec::new();
    }
    let a = |i: usize, j: usize| cost.get(row_ids[i - 1], col_ids[j - 1]);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = col_ids[j - 1];
        }
    }
    assignment
}

fn tie_tolerance(opt: f64) -> f64 {
    1e-12 * (1.0 + opt.abs())
}

/// Minimum-cost injection of rows into columns.
///
/// Returns `assignment[row] = column`. Among optimal assignments (to within a
/// relative 1e-12) the lexicographically smallest vector is returned.
pub fn hungarian(cost: &CostMatrix) -> Result<Vec<usize>> {
    let (m, p) = (cost.rows(), cost.cols());
    if m > p {
        return Err(Error::InsufficientHypotheses {
            ground_truths: m,
            predictions: p,
        });
    }
    if cost.data.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidConfig(
            "cost matrix has non-finite entries".into(),
        ));
    }
    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..p).collect();
    let mut current = solve_subproblem(cost, &all_rows, &all_cols);
    let opt = cost.assignment_cost(&current);
    let tol = tie_tolerance(opt);

    // Fix rows in order, trying every smaller free column first.
    for i in 0..m {
        let prefix = &current[..i];
        let prefix_cost: f64 = prefix
            .iter()
            .enumerate()
            .map(|(r, &c)| cost.get(r, c))
            .sum();
        for j in 0..current[i] {
            if prefix.contains(&j) {
                continue;
            }
            let rest_rows: Vec<usize> = (i + 1..m).collect();
            let rest_cols: Vec<usize> = (0..p).filter(|c| *c != j && !prefix.contains(c)).collect();
            let rest = solve_subproblem(cost, &rest_rows, &rest_cols);
            let rest_cost: f64 = rest
                .iter()
                .zip(&rest_rows)
                .map(|(&c, &r)| cost.get(r, c))
                .sum();
            if prefix_cost + cost.get(i, j) + rest_cost <= opt + tol {
                current.truncate(i);
                current.push(j);
                current.extend(rest);
                break;
            }
        }
    }
    Ok(current)
}

/// Exhaustive minimum over all injections, enumerated in lexicographic order.
/// Ties keep the first (lexicographically smallest) assignment.
pub fn brute_force_assignment(cost: &CostMatrix) -> Result<(Vec<usize>, f64)> {
    let (m, p) = (cost.rows(), cost.cols());
    if m > p {
        return Err(Error::InsufficientHypotheses {
            ground_truths: m,
            predictions: p,
        });
    }
    fn rec(
        cost: &CostMatrix,
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if row == cost.rows() {
            let total = cost.assignment_cost(cur);
            if best.as_ref().is_none_or(|(_, b)| total < *b) {
                *best = Some((cur.clone(), total));
            }
            return;
        }
        for c in 0..cost.cols() {
            if !used[c] {
                used[c] = true;
                cur.push(c);
                rec(cost, row + 1, used, cur, best);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut best = None;
    rec(
        cost,
        0,
        &mut vec![false; p],
        &mut Vec::with_capacity(m),
        &mut best,
    );
    Ok(best.unwrap_or((Vec::new(), 0.0)))
}

/// Pairwise cost matrix with per-pair breakdowns; rows are ground truths.
pub fn cost_matrix(
    preds: &[InstancePrediction],
    gts: &[GroundTruthInstance],
    w: &MatchWeights,
) -> (CostMatrix, Vec<Vec<CostBreakdown>>) {
    let breakdown: Vec<Vec<CostBreakdown>> = gts
        .par_iter()
        .map(|g| preds.iter().map(|p| match_cost(p, g, w)).collect())
        .collect();
    let data = breakdown.iter().flatten().map(|b| b.total).collect();
    let m = CostMatrix {
        rows: gts.len(),
        cols: preds.len(),
        data,
    };
    (m, breakdown)
}

/// Match, then reorder predictions into ground-truth order.
pub fn match_and_reorder(
    preds: &[InstancePrediction],
    gts: &[GroundTruthInstance],
    w: &MatchWeights,
) -> Result<MatchOutcome> {
    let (matrix, breakdown) = cost_matrix(preds, gts, w);
    let assignment = hungarian(&matrix)?;
    let per_pair_costs: Vec<CostBreakdown> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| breakdown[i][j])
        .collect();
    let reordered = assignment.iter().map(|&j| preds[j].clone()).collect();
    let unmatched = (0..preds.len())
        .filter(|j| !assignment.contains(j))
        .map(|j| (j, preds[j].confidence))
        .collect();
    Ok(MatchOutcome {
        result: MatchResult {
            total_cost: matrix.assignment_cost(&assignment),
            assignment,
            per_pair_costs,
        },
        reordered,
        unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
        BBox::new(cx, cy, w, h)
    }

    #[test]
    fn default_weights() {
        let w = MatchWeights::default();
        assert_eq!(
            (w.lambda_conf, w.lambda_bbox, w.lambda_giou, w.lambda_kpts),
            (1.0, 1.0, 1.0, 10.0)
        );
        assert_eq!((w.focal_alpha, w.focal_gamma), (0.25, 2.0));
    }

    #[test]
    fn iou_cases() {
        let a = bx(0.5, 0.5, 0.2, 0.2);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(0.1, 0.1, 0.1, 0.1)), 0.0);
        // Shift by half a width: intersection 0.5, union 1.5.
        let unit = bx(0.5, 0.5, 1.0, 1.0);
        let shifted = bx(1.0, 0.5, 1.0, 1.0);
        assert!((iou(&unit, &shifted) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&bx(0.5, 0.5, 0.0, 0.0), &bx(0.5, 0.5, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn giou_cases() {
        let a = bx(0.5, 0.5, 0.2, 0.2);
        assert_eq!(giou(&a, &a), 1.0);
        let inner = bx(0.5, 0.5, 0.1, 0.1);
        assert!((giou(&a, &inner) - iou(&a, &inner)).abs() < 1e-15);
        // Disjoint: [0,0.2]x[0,0.2] and [0.6,0.8]x[0.4,0.6]. Union 0.08,
        // hull [0,0.8]x[0,0.6] = 0.48, GIoU = 0 - 0.40/0.48.
        let p = BBox::from_corners(0.0, 0.0, 0.2, 0.2);
        let q = BBox::from_corners(0.6, 0.4, 0.8, 0.6);
        assert!((giou(&p, &q) - (-0.40 / 0.48)).abs() < 1e-12);
    }

    #[test]
    fn focal_cost_values() {
        assert_eq!(focal_conf_cost(1.0, 0.25, 2.0), 0.0);
        let expect = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((focal_conf_cost(0.5, 0.25, 2.0) - expect).abs() < 1e-12);
        assert!((expect - 0.04332).abs() < 1e-5);
        let tiny = focal_conf_cost(0.0, 0.25, 2.0);
        assert!(tiny > focal_conf_cost(1e-6, 0.25, 2.0));
        assert!((tiny - 0.25 * (1.0 - CONF_EPS).powi(2) * -(CONF_EPS.ln())).abs() < 1e-12);
    }

    #[test]
    fn keypoint_cost_cases() {
        let g = vec![
            Vector2::new(0.2, 0.2),
            Vector2::new(0.5, 0.5),
            Vector2::new(0.9, 0.1),
        ];
        assert_eq!(keypoint_cost(&g, &g, &[true; 3]), 0.0);
        let far = vec![Vector2::new(9.0, 9.0); 3];
        assert_eq!(keypoint_cost(&far, &g, &[false; 3]), 0.0);
        let p = vec![
            Vector2::new(0.3, 0.2),
            Vector2::new(0.5, 0.7),
            Vector2::new(5.0, 5.0),
        ];
        assert!((keypoint_cost(&p, &g, &[true, true, false]) - 0.15).abs() < 1e-15);
    }

    fn gt_instance(b: BBox, kp: Vec<Vector2<f64>>) -> GroundTruthInstance {
        let k = kp.len();
        GroundTruthInstance {
            bbox: b,
            keypoints2d: kp,
            visibility: vec![true; k],
            keypoints3d: vec![Vector3::zeros(); k],
            params: None,
        }
    }

    fn pred_instance(b: BBox, conf: f64, kp: Vec<Vector2<f64>>) -> InstancePrediction {
        let k = kp.len();
        InstancePrediction {
            bbox: b,
            confidence: conf,
            keypoints2d: kp,
            keypoints3d: vec![Vector3::zeros(); k],
            params: None,
        }
    }

    #[test]
    fn match_cost_cases() {
        let kp = vec![Vector2::new(0.4, 0.4), Vector2::new(0.6, 0.6)];
        let b = bx(0.5, 0.5, 0.3, 0.3);
        let gt = gt_instance(b, kp.clone());
        let w = MatchWeights::default();
        let c = match_cost(&pred_instance(b, 1.0, kp.clone()), &gt, &w);
        assert_eq!(c.total, -w.lambda_giou);

        // Keypoints off by 0.1 mean-L1 vs box off by 0.01 L1.
        let kp_off: Vec<_> = kp.iter().map(|p| p + Vector2::new(0.1, 0.0)).collect();
        let c_kp = match_cost(&pred_instance(b, 1.0, kp_off), &gt, &w);
        let c_box = match_cost(
            &pred_instance(bx(0.51, 0.5, 0.3, 0.3), 1.0, kp.clone()),
            &gt,
            &w,
        );
        assert!((w.lambda_kpts * c_kp.kpts - 1.0).abs() < 1e-12);
        assert!((c_box.bbox - 0.01).abs() < 1e-12);
        assert!(c_kp.total > c_box.total);

        let only_box = MatchWeights {
            lambda_conf: 0.0,
            lambda_bbox: 1.0,
            lambda_giou: 0.0,
            lambda_kpts: 0.0,
            ..w
        };
        let p = pred_instance(bx(0.4, 0.55, 0.2, 0.35), 0.3, vec![Vector2::zeros(); 2]);
        let c = match_cost(&p, &gt, &only_box);
        assert!((c.total - (0.1 + 0.05 + 0.1 + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn hungarian_small_cases() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a, vec![0, 1]);
        assert_eq!(c.assignment_cost(&a), 1.0);

        let diag = CostMatrix::from_rows(&[
            vec![0.0, 5.0, 5.0, 5.0],
            vec![5.0, 0.0, 5.0, 5.0],
            vec![5.0, 5.0, 0.0, 5.0],
        ])
        .unwrap();
        assert_eq!(hungarian(&diag).unwrap(), vec![0, 1, 2]);

        let wide = CostMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            hungarian(&wide.transposed()),
            Err(Error::InsufficientHypotheses {
                ground_truths: 3,
                predictions: 1
            })
        ));
        assert_eq!(
            hungarian(&CostMatrix::new(0, 3, vec![]).unwrap()).unwrap(),
            Vec::<usize>::new()
        );
        let nan = CostMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(hungarian(&nan).is_err());
    }

    #[test]
    fn hungarian_lexicographic_ties() {
        // Every injection costs the same.
        let flat = CostMatrix::new(3, 5, vec![1.0; 15]).unwrap();
        assert_eq!(hungarian(&flat).unwrap(), vec![0, 1, 2]);
        // Two optimal assignments: [1,0] and [0,1] both cost 2.
        let c = CostMatrix::from_rows(&[vec![1.0, 1.0, 9.0], vec![1.0, 1.0, 9.0]]).unwrap();
        assert_eq!(hungarian(&c).unwrap(), vec![0, 1]);
        let c = CostMatrix::from_rows(&[vec![2.0, 1.0, 1.0], vec![1.0, 3.0, 1.0]]).unwrap();
        let (bf, _) = brute_force_assignment(&c).unwrap();
        assert_eq!(hungarian(&c).unwrap(), bf);
    }

    #[test]
    fn hungarian_matches_brute_force_random_6x8() {
        let mut rng = crate::seeds::rng(42);
        for _ in 0..200 {
            let data: Vec<f64> = (0..48).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c = CostMatrix::new(6, 8, data).unwrap();
            let a = hungarian(&c).unwrap();
            let (b, best) = brute_force_assignment(&c).unwrap();
            assert_eq!(c.assignment_cost(&a).to_bits(), best.to_bits());
            assert_eq!(a, b);
        }
        // Small integer costs force many exact ties.
        for _ in 0..200 {
            let data: Vec<f64> = (0..20).map(|_| rng.gen_range(0..3) as f64).collect();
            let c = CostMatrix::new(4, 5, data).unwrap();
            assert_eq!(
                hungarian(&c).unwrap(),
                brute_force_assignment(&c).unwrap().0
            );
        }
    }

    #[test]
    fn match_and_reorder_cases() {
        let kp = |x: f64| vec![Vector2::new(x, 0.5)];
        let preds: Vec<_> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&x| pred_instance(bx(x, 0.5, 0.1, 0.1), 0.9, kp(x)))
            .collect();
        let out = match_and_reorder(&preds, &[], &MatchWeights::default()).unwrap();
        assert!(out.result.assignment.is_empty());
        assert_eq!(out.unmatched.len(), 3);

        let one = match_and_reorder(
            &preds[..1],
            &[gt_instance(bx(0.8, 0.8, 0.1, 0.1), kp(0.8))],
            &MatchWeights::default(),
        )
        .unwrap();
        assert_eq!(one.result.assignment, vec![0]);

        let gts = vec![
            gt_instance(bx(0.9, 0.5, 0.1, 0.1), kp(0.9)),
            gt_instance(bx(0.1, 0.5, 0.1, 0.1), kp(0.1)),
        ];
        let out = match_and_reorder(&preds, &gts, &MatchWeights::default()).unwrap();
        assert_eq!(out.result.assignment, vec![2, 0]);
        assert_eq!(out.reordered[0], preds[2]);
        assert_eq!(out.unmatched, vec![(1, 0.9)]);
        let sum: f64 = out.result.per_pair_costs.iter().map(|c| c.total).sum();
        assert!((sum - out.result.total_cost).abs() < 1e-12);
    }

    #[test]
    fn optimal_beats_greedy() {
        // Greedy nearest-box for gt0 takes pred 0, forcing gt1 onto a far slot.
        let c = CostMatrix::from_rows(&[
            vec![1.0, 1.1, 50.0, 50.0, 50.0],
            vec![1.2, 40.0, 50.0, 50.0, 50.0],
            vec![50.0, 50.0, 2.0, 50.0, 50.0],
        ])
        .unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a, vec![1, 0, 2]);
        assert_eq!(brute_force_assignment(&c).unwrap().0, a);
    }

    proptest! {
        #[test]
        fn giou_symmetric_and_bounded(
            a in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.5, 0.0f64..0.5),
            b in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..0.5, 0.0f64..0.5),
        ) {
            let a = bx(a.0, a.1, a.2, a.3);
            let b = bx(b.0, b.1, b.2, b.3);
            let g = giou(&a, &b);
            prop_assert!((g - giou(&b, &a)).abs() < 1e-15);
            prop_assert!(g > -1.0 && g <= 1.0);
            prop_assert!(iou(&a, &b) >= g - 1e-15);
        }

        #[test]
        fn focal_cost_strictly_decreasing(c1 in 1e-6f64..1.0, c2 in 1e-6f64..1.0) {
            prop_assume!((c1 - c2).abs() > 1e-9);
            let (lo, hi) = if c1 < c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(focal_conf_cost(lo, 0.25, 2.0) > focal_conf_cost(hi, 0.25, 2.0));
        }

        #[test]
        fn row_shift_leaves_assignment(seed in 0u64..10_000, row in 0usize..3, shift in -10.0f64..10.0) {
            let mut rng = crate::seeds::rng(seed);
            let mut data: Vec<f64> = (0..15).map(|_| rng.gen_range(0.0..10.0)).collect();
            let c = CostMatrix::new(3, 5, data.clone()).unwrap();
            for v in &mut data[row * 5..row * 5 + 5] {
                *v += shift;
            }
            let shifted = CostMatrix::new(3, 5, data).unwrap();
            prop_assert_eq!(hungarian(&c).unwrap(), hungarian(&shifted).unwrap());
        }

        #[test]
        fn invisible_keypoints_do_not_affect_cost(dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
            let kp = vec![Vector2::new(0.2, 0.3), Vector2::new(0.7, 0.1)];
            let mut gt = gt_instance(bx(0.5, 0.5, 0.2, 0.2), kp.clone());
            gt.visibility = vec![true, false];
            let p1 = pred_instance(bx(0.4, 0.5, 0.2, 0.2), 0.7, kp.clone());
            let mut moved = kp.clone();
            moved[1] += Vector2::new(dx, dy);
            let p2 = pred_instance(bx(0.4, 0.5, 0.2, 0.2), 0.7, moved);
            let w = MatchWeights::default();
            prop_assert_eq!(match_cost(&p1, &gt, &w), match_cost(&p2, &gt, &w));
        }
    }
}
