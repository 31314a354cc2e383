//! Cross-attention to image features, per-instance self-attention, and
//! keypoint token feedback.

use nalgebra::{DMatrix, RowDVector, Vector2, Vector3};

use super::encoder::ImageFeatureMap;
use super::tokens::{Group, TokenState};
use crate::error::{Error, Result};

/// Softmax along each row, shifted by the row maximum.
pub fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// `softmax(q kᵀ · scale)` and the weighted sum of `v` rows.
pub fn attention(
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DMatrix<f64>,
    scale: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut w = q * k.transpose() * scale;
    softmax_rows(&mut w);
    let out = &w * v;
    (w, out)
}

/// Queries read `[Q^l | Q^{l-1}]` (N × 2D). Keys and values come from the
/// feature tokens. Head `h` uses query/key columns `h·d_k..(h+1)·d_k` and
/// value columns `h·D/heads..(h+1)·D/heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// 2D × (heads·d_k).
    pub w_q: DMatrix<f64>,
    /// C0 × (heads·d_k).
    pub w_k: DMatrix<f64>,
    /// C0 × D.
    pub w_v: DMatrix<f64>,
    pub heads: usize,
    pub head_dim: usize,
}

/// Per-head attention weights plus the projected values and the N × D update.
#[derive(Debug, Clone)]
pub struct Attended {
    pub weights: Vec<DMatrix<f64>>,
    pub values: DMatrix<f64>,
    pub update: DMatrix<f64>,
}

pub fn attend(
    state: &TokenState,
    features: &ImageFeatureMap,
    w: &AttentionWeights,
) -> Result<Attended> {
    let d = state.width();
    let dims = |context, expected, actual| {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::Dimension {
                context,
                expected,
                actual,
            })
        }
    };
    dims("W_Q rows", 2 * d, w.w_q.nrows())?;
    dims("W_Q columns", w.heads * w.head_dim, w.w_q.ncols())?;
    dims("W_K rows", features.channels(), w.w_k.nrows())?;
    dims("W_K columns", w.heads * w.head_dim, w.w_k.ncols())?;
    dims("W_V rows", features.channels(), w.w_v.nrows())?;
    dims("W_V columns", d, w.w_v.ncols())?;
    if w.heads == 0 || !d.is_multiple_of(w.heads) {
        return Err(Error::InvalidConfig(format!(
            "width {d} not divisible into {} heads",
            w.heads
        )));
    }

    let n = state.n_tokens();
    let mut qc = DMatrix::zeros(n, 2 * d);
    qc.columns_mut(0, d).copy_from(&state.tokens);
    qc.columns_mut(d, d).copy_from(&state.previous);
    let q = qc * &w.w_q;
    let k = &features.features * &w.w_k;
    let values = &features.features * &w.w_v;

    let dv = d / w.heads;
    let scale = 1.0 / (w.head_dim as f64).sqrt();
    let mut update = DMatrix::zeros(n, d);
    let mut weights = Vec::with_capacity(w.heads);
    for h in 0..w.heads {
        let qh = q.columns(h * w.head_dim, w.head_dim).into_owned();
        let kh = k.columns(h * w.head_dim, w.head_dim).into_owned();
        let vh = values.columns(h * dv, dv).into_owned();
        let (a, out) = attention(&qh, &kh, &vh, scale);
        update.columns_mut(h * dv, dv).copy_from(&out);
        weights.push(a);
    }
    Ok(Attended {
        weights,
        values,
        update,
    })
}

/// One cross-attention layer with a residual connection:
/// `Q^{l+1} = Q^l + Attn([Q^l | Q^{l-1}], F)`.
pub fn cross_attention(
    state: &TokenState,
    features: &ImageFeatureMap,
    w: &AttentionWeights,
) -> Result<TokenState> {
    let a = attend(state, features, w)?;
    let mut next = state.clone();
    next.previous = state.tokens.clone();
    next.tokens = &state.tokens + a.update;
    next.layer = state.layer + 1;
    Ok(next)
}

/// D × D projections for attention among one instance's tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttentionWeights {
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
}

/// Residual single-head attention within each slot's tokens. Slots do not
/// exchange information; this is what lets prompt tokens reach the readout.
pub fn instance_self_attention(state: &TokenState, w: &SelfAttentionWeights) -> Result<TokenState> {
    let d = state.width();
    for (name, m) in [
        ("self W_Q", &w.w_q),
        ("self W_K", &w.w_k),
        ("self W_V", &w.w_v),
    ] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Dimension {
                context: name,
                expected: d,
                actual: if m.nrows() != d { m.nrows() } else { m.ncols() },
            });
        }
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut next = state.clone();
    for slot in 0..state.slots() {
        let rows = state.slot_rows(slot);
        let x = state.tokens.select_rows(rows.iter());
        let (_, out) = attention(&(&x * &w.w_q), &(&x * &w.w_k), &(&x * &w.w_v), scale);
        for (i, &r) in rows.iter().enumerate() {
            let updated = x.row(i) + out.row(i);
            next.tokens.set_row(r, &updated);
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackWeights {
    /// 2 × D.
    pub phi_pos: DMatrix<f64>,
    /// C0 × D.
    pub phi_feat: DMatrix<f64>,
    /// 3 × D.
    pub psi_pos: DMatrix<f64>,
}

fn check_slots(state: &TokenState, n: usize) -> Result<()> {
    if n == state.slots() {
        Ok(())
    } else {
        Err(Error::Dimension {
            context: "per-slot keypoints",
            expected: state.slots(),
            actual: n,
        })
    }
}

/// Keypoint `k` feeds token `k % n_tokens` of its group; a token's increment
/// is the mean over its keypoints.
fn add_increments<F>(state: &TokenState, group: Group, per_slot: &[usize], inc: F) -> TokenState
where
    F: Fn(usize, usize) -> RowDVector<f64>,
{
    let n_tok = state.layout().count(group);
    let mut next = state.clone();
    for (slot, &k_count) in per_slot.iter().enumerate() {
        for t in 0..n_tok {
            let ks: Vec<usize> = (0..k_count).filter(|k| k % n_tok == t).collect();
            if ks.is_empty() {
                continue;
            }
            let mut acc = RowDVector::zeros(state.width());
            for &k in &ks {
                acc += inc(slot, k);
            }
            let r = state.index(group, slot, t);
            let updated = state.tokens.row(r) + acc / ks.len() as f64;
            next.tokens.set_row(r, &updated);
        }
    }
    next
}

/// `Q_2D += φ_pos(x) + φ_feat(F(x))` with `x` in normalized image coordinates.
pub fn refresh_kp2d_tokens(
    state: &TokenState,
    kp2d: &[Vec<Vector2<f64>>],
    features: &ImageFeatureMap,
    w: &FeedbackWeights,
) -> Result<TokenState> {
    check_slots(state, kp2d.len())?;
    if w.phi_feat.nrows() != features.channels() {
        return Err(Error::Dimension {
            context: "phi_feat rows",
            expected: features.channels(),
            actual: w.phi_feat.nrows(),
        });
    }
    let counts: Vec<usize> = kp2d.iter().map(Vec::len).collect();
    Ok(add_increments(state, Group::Kp2d, &counts, |slot, k| {
        let p = kp2d[slot][k];
        let (u, v) = (p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0));
        let f = features.sample(u, v);
        w.phi_pos.row(0) * u + w.phi_pos.row(1) * v + f.transpose() * &w.phi_feat
    }))
}

/// `Q_3D += ψ_pos(X)` with `X` already normalized, see [`normalize_kp3d`].
pub fn refresh_kp3d_tokens(
    state: &TokenState,
    kp3d: &[Vec<Vector3<f64>>],
    w: &FeedbackWeights,
) -> Result<TokenState> {
    check_slots(state, kp3d.len())?;
    let counts: Vec<usize> = kp3d.iter().map(Vec::len).collect();
    Ok(add_increments(state, Group::Kp3d, &counts, |slot, k| {
        let p = kp3d[slot][k];
        w.psi_pos.row(0) * p.x + w.psi_pos.row(1) * p.y + w.psi_pos.row(2) * p.z
    }))
}

/// Fixed scale for root-relative 3D keypoints, about one body length.
pub const KP3D_SCALE: f64 = 1.5;

/// Root-relative keypoints divided by [`KP3D_SCALE`].
pub fn normalize_kp3d(kp3d: &[Vector3<f64>], root: &Vector3<f64>) -> Vec<Vector3<f64>> {
    kp3d.iter().map(|k| (k - root) / KP3D_SCALE).collect()
}
