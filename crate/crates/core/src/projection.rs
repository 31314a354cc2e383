//! Pinhole camera and normalized bounding boxes.
//!
//! Camera frame: `+x` right, `+y` down, `+z` forward. Pixel `(0, 0)` is the
//! top-left corner of the image.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_IMAGE_SIZE: usize = 1024;
/// Default focal length in pixels for a 1024-pixel square image.
pub const DEFAULT_FOCAL: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

impl ImageSize {
    pub fn square(side: usize) -> Self {
        Self {
            width: side,
            height: side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveCamera {
    pub focal: f64,
    pub principal_point: Vector2<f64>,
    pub image_size: ImageSize,
}

impl PerspectiveCamera {
    pub fn new(focal: f64, principal_point: Vector2<f64>, image_size: ImageSize) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "focal must be positive, got {focal}"
            )));
        }
        if image_size.width == 0 || image_size.height == 0 {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        Ok(Self {
            focal,
            principal_point,
            image_size,
        })
    }

    /// Principal point at the image centre.
    pub fn centered(focal: f64, image_size: ImageSize) -> Result<Self> {
        let pp = Vector2::new(
            image_size.width as f64 / 2.0,
            image_size.height as f64 / 2.0,
        );
        Self::new(focal, pp, image_size)
    }

    pub fn default_camera() -> Self {
        Self::centered(DEFAULT_FOCAL, ImageSize::square(DEFAULT_IMAGE_SIZE))
            .expect("default camera is valid")
    }

    pub fn in_frame(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= self.image_size.width as f64
            && p.y <= self.image_size.height as f64
    }
}

/// One projected point. `valid` is false for points at or behind the camera;
/// their pixel coordinates are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub pixel: Vector2<f64>,
    pub valid: bool,
}

pub fn project_point(p: &Vector3<f64>, camera: &PerspectiveCamera) -> Projected {
    if p.z > 0.0 && p.iter().all(|x| x.is_finite()) {
        Projected {
            pixel: camera.principal_point + Vector2::new(p.x / p.z, p.y / p.z) * camera.focal,
            valid: true,
        }
    } else {
        Projected {
            pixel: Vector2::new(f64::NAN, f64::NAN),
            valid: false,
        }
    }
}

pub fn project(points: &[Vector3<f64>], camera: &PerspectiveCamera) -> Vec<Projected> {
    points.iter().map(|p| project_point(p, camera)).collect()
}

/// Axis-aligned box in normalized image coordinates (centre, width, height).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// `(x0, y0, x1, y1)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        self.w >= 0.0
            && self.h >= 0.0
            && [self.cx, self.cy, self.w, self.h]
                .iter()
                .all(|v| v.is_finite())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Clamp both corners into the unit square.
    pub fn clamped(&self) -> Self {
        let (x0, y0, x1, y1) = self.corners();
        let c = |v: f64| v.clamp(0.0, 1.0);
        let (x0, x1) = (c(x0), c(x1.max(x0)));
        let (y0, y1) = (c(y0), c(y1.max(y0)));
        Self::from_corners(x0, y0, x1, y1)
    }

    /// Pixel-space `(width, height)`.
    pub fn pixel_size(&self, image: ImageSize) -> (f64, f64) {
        (self.w * image.width as f64, self.h * image.height as f64)
    }
}

/// Tight box around the valid points, normalized by image size and clamped to `[0, 1]`.
pub fn bbox_from_points(points: &[Projected], image_size: ImageSize) -> Result<BBox> {
    let mut iter = points.iter().filter(|p| p.valid).map(|p| p.pixel);
    let first = iter.next().ok_or(Error::NoValidPoints)?;
    let (mut lo, mut hi) = (first, first);
    for p in iter {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    let (w, h) = (image_size.width as f64, image_size.height as f64);
    Ok(BBox::from_corners(lo.x / w, lo.y / h, hi.x / w, hi.y / h).clamped())
}

/// Convenience: treat raw pixel coordinates as all valid.
pub fn bbox_from_pixels(points: &[Vector2<f64>], image_size: ImageSize) -> Result<BBox> {
    let p: Vec<Projected> = points
        .iter()
        .map(|&pixel| Projected { pixel, valid: true })
        .collect();
    bbox_from_points(&p, image_size)
}
