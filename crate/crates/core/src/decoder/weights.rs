//! Decoder weights: seeded initialization and weight files.
//!
//! Weight files use the [`crate::container`] format with `kind
//! decoder-weights`. Matrix `config` (1 × 16, i64) holds slots, the five
//! group counts, width, layers, heads, head dim, grid height, grid width,
//! channels, keypoints, shape coefficients and joints; `query_seed` (1 × 1,
//! i64) seeds the initial queries. The remaining f64 matrices are named
//! `prompt.*`, `layer{l}.self.*`, `layer{l}.cross.*`, `feedback.*` and
//! `readout.*`.

use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use rand::Rng;

use super::attention::{AttentionWeights, FeedbackWeights, SelfAttentionWeights};
use super::prompts::PromptWeights;
use super::tokens::TokenLayout;
use super::DecoderConfig;
use crate::container::MatrixFile;
use crate::error::{Error, Result};
use crate::seeds;

pub const WEIGHTS_KIND: &str = "decoder-weights";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub self_attn: SelfAttentionWeights,
    pub cross: AttentionWeights,
}

/// Linear heads on mean-pooled tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutWeights {
    /// D × (B + 3J + 3).
    pub params: DMatrix<f64>,
    /// D × 5: box centre and size, then confidence.
    pub bbox: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub config: DecoderConfig,
    pub query_seed: u64,
    pub prompt: PromptWeights,
    pub layers: Vec<LayerWeights>,
    pub feedback: FeedbackWeights,
    pub readout: ReadoutWeights,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.gen_range(-scale..scale);
        }
    }
    m
}

fn fan_in<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    uniform(rng, rows, cols, 1.0 / (rows as f64).sqrt())
}

impl DecoderWeights {
    /// Uniform `±1/√fan_in` weights drawn from `seed`.
    pub fn random(config: &DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds::rng(seed);
        let (d, c0) = (config.width, config.channels);
        let hk = config.heads * config.head_dim;
        let cells = config.grid_h * config.grid_w;
        let prompt = PromptWeights {
            kp_pos: uniform(&mut rng, 2, d, 1.0),
            kp_id: uniform(&mut rng, config.n_keypoints, d, 1.0),
            mask: uniform(&mut rng, cells, d, 1.0),
            kp_placeholder: RowDVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
            mask_placeholder: RowDVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let layers = (0..config.layers)
            .map(|_| LayerWeights {
                self_attn: SelfAttentionWeights {
                    w_q: fan_in(&mut rng, d, d),
                    w_k: fan_in(&mut rng, d, d),
                    w_v: fan_in(&mut rng, d, d),
                },
                cross: AttentionWeights {
                    w_q: fan_in(&mut rng, 2 * d, hk),
                    w_k: fan_in(&mut rng, c0, hk),
                    w_v: fan_in(&mut rng, c0, d),
                    heads: config.heads,
                    head_dim: config.head_dim,
                },
            })
            .collect();
        let feedback = FeedbackWeights {
            phi_pos: fan_in(&mut rng, 2, d),
            phi_feat: fan_in(&mut rng, c0, d),
            psi_pos: fan_in(&mut rng, 3, d),
        };
        let readout = ReadoutWeights {
            params: fan_in(&mut rng, d, config.param_dim()),
            bbox: fan_in(&mut rng, d, 5),
        };
        let query_seed = rng.gen();
        Ok(Self {
            config: *config,
            query_seed,
            prompt,
            layers,
            feedback,
            readout,
        })
    }

    pub fn to_container(&self) -> MatrixFile {
        let c = &self.config;
        let mut f = MatrixFile::new(WEIGHTS_KIND);
        let header: Vec<i64> = [
            c.slots,
            c.layout.params,
            c.layout.bbox,
            c.layout.kp2d,
            c.layout.kp3d,
            c.layout.prompt,
            c.width,
            c.layers,
            c.heads,
            c.head_dim,
            c.grid_h,
            c.grid_w,
            c.channels,
            c.n_keypoints,
            c.n_shape,
            c.n_joints,
        ]
        .iter()
        .map(|&v| v as i64)
        .collect();
        f.push_i64("config", 1, header.len(), header);
        f.push_i64("query_seed", 1, 1, vec![self.query_seed as i64]);
        let mut put = |name: &str, m: &DMatrix<f64>| {
            let data = m.transpose().as_slice().to_vec();
            f.push_f64(name, m.nrows(), m.ncols(), data);
        };
        put("prompt.kp_pos", &self.prompt.kp_pos);
        put("prompt.kp_id", &self.prompt.kp_id);
        put("prompt.mask", &self.prompt.mask);
        put(
            "prompt.kp_placeholder",
            &DMatrix::from_row_slice(1, c.width, self.prompt.kp_placeholder.as_slice()),
        );
        put(
            "prompt.mask_placeholder",
            &DMatrix::from_row_slice(1, c.width, self.prompt.mask_placeholder.as_slice()),
        );
        for (l, lw) in self.layers.iter().enumerate() {
            put(&format!("layer{l}.self.w_q"), &lw.self_attn.w_q);
            put(&format!("layer{l}.self.w_k"), &lw.self_attn.w_k);
            put(&format!("layer{l}.self.w_v"), &lw.self_attn.w_v);
            put(&format!("layer{l}.cross.w_q"), &lw.cross.w_q);
            put(&format!("layer{l}.cross.w_k"), &lw.cross.w_k);
            put(&format!("layer{l}.cross.w_v"), &lw.cross.w_v);
        }
        put("feedback.phi_pos", &self.feedback.phi_pos);
        put("feedback.phi_feat", &self.feedback.phi_feat);
        put("feedback.psi_pos", &self.feedback.psi_pos);
        put("readout.params", &self.readout.params);
        put("readout.bbox", &self.readout.bbox);
        f
    }

    pub fn from_container(file: &MatrixFile) -> Result<Self> {
        if file.kind != WEIGHTS_KIND {
            return Err(Error::Schema(format!(
                "expected kind {WEIGHTS_KIND}, got {}",
                file.kind
            )));
        }
        let (_, n, h) = file.i64("config")?;
        if n != 16 || h.iter().any(|&v| v < 0) {
            return Err(Error::Schema(
                "config header must hold 16 nonnegative values".into(),
            ));
        }
        let h: Vec<usize> = h.iter().map(|&v| v as usize).collect();
        let config = DecoderConfig {
            slots: h[0],
            layout: TokenLayout {
                params: h[1],
                bbox: h[2],
                kp2d: h[3],
                kp3d: h[4],
                prompt: h[5],
            },
            width: h[6],
            layers: h[7],
            heads: h[8],
            head_dim: h[9],
            grid_h: h[10],
            grid_w: h[11],
            channels: h[12],
            n_keypoints: h[13],
            n_shape: h[14],
            n_joints: h[15],
        };
        config
            .validate()
            .map_err(|e| Error::Schema(e.to_string()))?;
        let (_, _, qs) = file.i64("query_seed")?;
        let query_seed =
            *qs.first()
                .ok_or_else(|| Error::Schema("query_seed is empty".into()))? as u64;

        let (d, c0) = (config.width, config.channels);
        let hk = config.heads * config.head_dim;
        let get = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let (r, c, data) = file.f64(name)?;
            if r != rows || c != cols {
                return Err(Error::Schema(format!(
                    "{name} is {r}x{c}, expected {rows}x{cols}"
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("{name} has non-finite entries")));
            }
            Ok(DMatrix::from_row_slice(r, c, data))
        };
        let row = |name: &str| -> Result<RowDVector<f64>> {
            Ok(RowDVector::from_row_slice(get(name, 1, d)?.as_slice()))
        };
        let prompt = PromptWeights {
            kp_pos: get("prompt.kp_pos", 2, d)?,
            kp_id: get("prompt.kp_id", config.n_keypoints, d)?,
            mask: get("prompt.mask", config.grid_h * config.grid_w, d)?,
            kp_placeholder: row("prompt.kp_placeholder")?,
            mask_placeholder: row("prompt.mask_placeholder")?,
        };
        let layers = (0..config.layers)
            .map(|l| {
                Ok(LayerWeights {
                    self_attn: SelfAttentionWeights {
                        w_q: get(&format!("layer{l}.self.w_q"), d, d)?,
                        w_k: get(&format!("layer{l}.self.w_k"), d, d)?,
                        w_v: get(&format!("layer{l}.self.w_v"), d, d)?,
                    },
                    cross: AttentionWeights {
                        w_q: get(&format!("layer{l}.cross.w_q"), 2 * d, hk)?,
                        w_k: get(&format!("layer{l}.cross.w_k"), c0, hk)?,
                        w_v: get(&format!("layer{l}.cross.w_v"), c0, d)?,
                        heads: config.heads,
                        head_dim: config.head_dim,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let feedback = FeedbackWeights {
            phi_pos: get("feedback.phi_pos", 2, d)?,
            phi_feat: get("feedback.phi_feat", c0, d)?,
            psi_pos: get("feedback.psi_pos", 3, d)?,
        };
        let readout = ReadoutWeights {
            params: get("readout.params", d, config.param_dim())?,
            bbox: get("readout.bbox", d, 5)?,
        };
        Ok(Self {
            config,
            query_seed,
            prompt,
            layers,
            feedback,
            readout,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&MatrixFile::read(path)?)
    }
}
