//! Fixed stand-in for the image encoder.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::DecoderConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seeds;

const STUB_SEED: u64 = 0x5EED_F00D;
/// Per-patch statistics: RGB mean and RGB standard deviation.
const STATS: usize = 6;

/// `(H0·W0) × C0` feature tokens; row `y * W0 + x` is grid cell `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatureMap {
    pub grid_h: usize,
    pub grid_w: usize,
    pub features: DMatrix<f64>,
}

impl ImageFeatureMap {
    pub fn new(grid_h: usize, grid_w: usize, features: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != grid_h * grid_w {
            return Err(Error::Dimension {
                context: "feature rows",
                expected: grid_h * grid_w,
                actual: features.nrows(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("features must be finite".into()));
        }
        Ok(Self {
            grid_h,
            grid_w,
            features,
        })
    }

    pub fn channels(&self) -> usize {
        self.features.ncols()
    }

    pub fn cell(&self, y: usize, x: usize) -> DVector<f64> {
        self.features.row(y * self.grid_w + x).transpose()
    }

    /// Bilinear sample at normalized `(u, v)`; cell `(y, x)` has its centre at
    /// `((x + 0.5) / W0, (y + 0.5) / H0)`. Coordinates are clamped to the grid.
    pub fn sample(&self, u: f64, v: f64) -> DVector<f64> {
        let axis = |t: f64, n: usize| {
            let g = (t.clamp(0.0, 1.0) * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = g.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, g - i0 as f64)
        };
        let (x0, x1, fx) = axis(u, self.grid_w);
        let (y0, y1, fy) = axis(v, self.grid_h);
        self.cell(y0, x0) * ((1.0 - fx) * (1.0 - fy))
            + self.cell(y0, x1) * (fx * (1.0 - fy))
            + self.cell(y1, x0) * ((1.0 - fx) * fy)
            + self.cell(y1, x1) * (fx * fy)
    }
}

/// Patch statistics passed through a fixed random projection and `tanh`,
/// plus one constant channel. Features depend only on patch content.
pub fn stub_encode(image: &Image, config: &DecoderConfig) -> Result<ImageFeatureMap> {
    let (gh, gw, c0) = (config.grid_h, config.grid_w, config.channels);
    if gh == 0 || gw == 0 || !image.height.is_multiple_of(gh) || !image.width.is_multiple_of(gw) {
        return Err(Error::InvalidConfig(format!(
            "image {}x{} is not divisible into a {gh}x{gw} grid",
            image.height, image.width
        )));
    }
    if c0 < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 feature channels".into(),
        ));
    }
    let (ph, pw) = (image.height / gh, image.width / gw);
    let mut rng = seeds::rng(STUB_SEED);
    let proj = DMatrix::from_fn(STATS, c0 - 1, |_, _| rng.gen_range(-1.0..1.0));
    let bias = DVector::from_fn(c0 - 1, |_, _| rng.gen_range(-0.5..0.5));

    let n = (ph * pw) as f64;
    let mut features = DMatrix::zeros(gh * gw, c0);
    for gy in 0..gh {
        for gx in 0..gw {
            let mut sum = [0.0; 3];
            let mut sq = [0.0; 3];
            for y in gy * ph..(gy + 1) * ph {
                for x in gx * pw..(gx + 1) * pw {
                    let p = image.pixel(y, x);
                    for c in 0..3 {
                        sum[c] += p[c];
                        sq[c] += p[c] * p[c];
                    }
                }
            }
            let mut stats = [0.0; STATS];
            for c in 0..3 {
                let mean = sum[c] / n;
                stats[c] = mean;
                stats[3 + c] = (sq[c] / n - mean * mean).max(0.0).sqrt();
            }
            let s = DVector::from_row_slice(&stats);
            let f = (proj.transpose() * s + &bias).map(f64::tanh);
            let row = gy * gw + gx;
            for c in 0..c0 - 1 {
                features[(row, c)] = f[c];
            }
            features[(row, c0 - 1)] = 1.0;
        }
    }
    ImageFeatureMap::new(gh, gw, features)
}
