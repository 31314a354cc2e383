//! Ground-plane layout sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    pub min_animals: usize,
    pub max_animals: usize,
    pub tx_range: [f64; 2],
    pub ty: f64,
    pub tz_range: [f64; 2],
    pub depth_span_max: f64,
    /// Half-width of the uniform x/z jitter.
    pub jitter_xz: f64,
    /// Added to the vertical mesh placement, not to `ty`.
    pub ground_offset: f64,
    pub pitch_range_deg: [f64; 2],
    pub yaw_range_deg: [f64; 2],
    pub n_horizontal_bins: usize,
    /// Sorted, contiguous intervals covering `tz_range`.
    pub depth_intervals: Vec<[f64; 2]>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        let tz_range = [8.0, 50.0];
        Self {
            min_animals: 2,
            max_animals: 8,
            tx_range: [-1.5, 1.5],
            ty: 0.0,
            tz_range,
            depth_span_max: 30.0,
            jitter_xz: 1.5,
            ground_offset: 0.3,
            pitch_range_deg: [-15.0, 15.0],
            yaw_range_deg: [0.0, 360.0],
            n_horizontal_bins: 15,
            depth_intervals: equal_intervals(tz_range, 6),
        }
    }
}

pub fn equal_intervals(range: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    let step = (range[1] - range[0]) / n as f64;
    (0..n)
        .map(|i| {
            let lo = range[0] + step * i as f64;
            let hi = if i + 1 == n {
                range[1]
            } else {
                range[0] + step * (i + 1) as f64
            };
            [lo, hi]
        })
        .collect()
}

/// Largest number of pairwise non-adjacent bins.
pub fn max_placeable(n_bins: usize) -> usize {
    n_bins.div_ceil(2)
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.tx_range) || !ordered(self.tz_range) {
            return bad("tx_range and tz_range must be finite and ordered".into());
        }
        if !ordered(self.pitch_range_deg) || !ordered(self.yaw_range_deg) {
            return bad("orientation ranges must be finite and ordered".into());
        }
        if self.tz_range[0] <= 0.0 {
            return bad("tz_range must lie in front of the camera".into());
        }
        if !(self.depth_span_max > 0.0) || !(self.jitter_xz >= 0.0) {
            return bad("depth_span_max must be positive and jitter_xz nonnegative".into());
        }
        if !self.ty.is_finite() || !self.ground_offset.is_finite() {
            return bad("ty and ground_offset must be finite".into());
        }
        if self.min_animals == 0 || self.min_animals > self.max_animals {
            return bad(format!(
                "need 1 <= min_animals <= max_animals, got {} and {}",
                self.min_animals, self.max_animals
            ));
        }
        if self.n_horizontal_bins == 0 {
            return bad("n_horizontal_bins must be positive".into());
        }
        if self.max_animals > max_placeable(self.n_horizontal_bins) {
            return bad(format!(
                "{} bins hold at most {} non-adjacent animals, max_animals is {}",
                self.n_horizontal_bins,
                max_placeable(self.n_horizontal_bins),
                self.max_animals
            ));
        }
        if self.depth_intervals.is_empty() {
            return bad("depth_intervals is empty".into());
        }
        let mut edge = self.tz_range[0];
        for iv in &self.depth_intervals {
            if !ordered(*iv) || iv[0] != edge {
                return bad(
                    "depth_intervals must be ordered and contiguous from tz_range[0]".into(),
                );
            }
            edge = iv[1];
        }
        if edge != self.tz_range[1] {
            return bad("depth_intervals must end at tz_range[1]".into());
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        (self.tx_range[1] - self.tx_range[0]) / self.n_horizontal_bins as f64
    }

    pub fn bin_range(&self, bin: usize) -> [f64; 2] {
        let w = self.bin_width();
        let lo = self.tx_range[0] + w * bin as f64;
        let hi = if bin + 1 == self.n_horizontal_bins {
            self.tx_range[1]
        } else {
            lo + w
        };
        [lo, hi]
    }
}

/// One animal's ground placement, before and after jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub bin: usize,
    pub depth_interval: usize,
    pub tx_raw: f64,
    pub tz_raw: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

/// Sample `n` placements in distinct, pairwise non-adjacent horizontal bins.
///
/// Depths are drawn from a window of width `depth_span_max` that starts at
/// the lower edge of a random depth interval. Jitter is applied afterwards;
/// `tx` is clamped to `tx_range` widened by the jitter, `tz` to `tz_range`.
pub fn sample_layout<R: Rng + ?Sized>(
    n: usize,
    config: &LayoutConfig,
    rng: &mut R,
) -> Result<Vec<Placement>> {
    let bins = config.n_horizontal_bins;
    if n == 0 || n > max_placeable(bins) {
        return Err(Error::InfeasibleLayout(format!(
            "{n} animals in {bins} bins without adjacency"
        )));
    }
    if config.depth_intervals.is_empty() {
        return Err(Error::InvalidConfig("depth_intervals is empty".into()));
    }

    // Sorted n-subsets of 0..bins-n+1 map one-to-one onto non-adjacent
    // n-subsets of 0..bins via c_i + i, so this is uniform over valid layouts.
    let mut chosen = rand::seq::index::sample(rng, bins - n + 1, n).into_vec();
    chosen.sort_unstable();
    let mut occupied: Vec<usize> = chosen.iter().enumerate().map(|(i, c)| c + i).collect();
    occupied.shuffle(rng);

    let [tz_lo, tz_hi] = config.tz_range;
    let anchor = config.depth_intervals[rng.gen_range(0..config.depth_intervals.len())][0];
    let w_lo = anchor.min(tz_hi - config.depth_span_max).max(tz_lo);
    let w_hi = (w_lo + config.depth_span_max).min(tz_hi);
    let eligible: Vec<usize> = config
        .depth_intervals
        .iter()
        .enumerate()
        .filter(|(_, iv)| iv[0].max(w_lo) < iv[1].min(w_hi))
        .map(|(i, _)| i)
        .collect();

    let j = config.jitter_xz;
    let mut out = Vec::with_capacity(n);
    for bin in occupied {
        let [bx0, bx1] = config.bin_range(bin);
        let tx_raw = uniform(rng, bx0, bx1);
        let (depth_interval, tz_raw) = if eligible.is_empty() {
            (0, w_lo)
        } else {
            let d = eligible[rng.gen_range(0..eligible.len())];
            let iv = config.depth_intervals[d];
            (d, uniform(rng, iv[0].max(w_lo), iv[1].min(w_hi)))
        };
        let dx = uniform(rng, -j, j);
        let dz = uniform(rng, -j, j);
        out.push(Placement {
            bin,
            depth_interval,
            tx_raw,
            tz_raw,
            tx: (tx_raw + dx).clamp(config.tx_range[0] - j, config.tx_range[1] + j),
            ty: config.ty,
            tz: (tz_raw + dz).clamp(tz_lo, tz_hi),
        });
    }
    Ok(out)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// `(pitch_deg, yaw_deg)`, each uniform in its configured range.
pub fn sample_orientation<R: Rng + ?Sized>(config: &LayoutConfig, rng: &mut R) -> (f64, f64) {
    let [p0, p1] = config.pitch_range_deg;
    let [y0, y1] = config.yaw_range_deg;
    (uniform(rng, p0, p1), uniform(rng, y0, y1))
}

/// Largest minus smallest value.
pub fn spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Checks every constraint that holds before jitter, plus the jitter bound.
pub fn check_placements(placements: &[Placement], config: &LayoutConfig) -> Result<()> {
    let fail = |m: String| Err(Error::InfeasibleLayout(m));
    let mut bins: Vec<usize> = placements.iter().map(|p| p.bin).collect();
    bins.sort_unstable();
    for w in bins.windows(2) {
        if w[1] <= w[0] + 1 {
            return fail(format!("bins {} and {} are not separated", w[0], w[1]));
        }
    }
    let j = config.jitter_xz;
    for p in placements {
        if p.ty != config.ty {
            return fail(format!("ty is {}", p.ty));
        }
        let [b0, b1] = config.bin_range(p.bin);
        if !(p.tx_raw >= b0 && p.tx_raw <= b1) {
            return fail(format!("tx_raw {} outside bin {}", p.tx_raw, p.bin));
        }
        let [z0, z1] = config.tz_range;
        if !(p.tz_raw >= z0 && p.tz_raw <= z1) || !(p.tz >= z0 && p.tz <= z1) {
            return fail(format!("tz {} / {} outside [{z0}, {z1}]", p.tz_raw, p.tz));
        }
        if (p.tx - p.tx_raw).abs() > j + 1e-12 || (p.tz - p.tz_raw).abs() > j + 1e-12 {
            return fail("jitter exceeds bound".into());
        }
        if !(p.tx >= config.tx_range[0] - j && p.tx <= config.tx_range[1] + j) {
            return fail(format!("tx {} outside widened range", p.tx));
        }
    }
    let span = spread(placements.iter().map(|p| p.tz_raw));
    if span > config.depth_span_max {
        return fail(format!(
            "depth span {span} exceeds {}",
            config.depth_span_max
        ));
    }
    Ok(())
}
