//! Minimal RGB image buffer.

use crate::error::{check_len, Result};

/// Row-major `height × width × 3`, channel values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len("image data", height * width * 3, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fill the pixels whose centres fall inside a normalized box.
    pub fn fill_box(&mut self, corners: (f64, f64, f64, f64), rgb: [f64; 3]) {
        let (x0, y0, x1, y1) = corners;
        for y in 0..self.height {
            let v = (y as f64 + 0.5) / self.height as f64;
            if v < y0 || v > y1 {
                continue;
            }
            for x in 0..self.width {
                let u = (x as f64 + 0.5) / self.width as f64;
                if u >= x0 && u <= x1 {
                    self.set_pixel(y, x, rgb);
                }
            }
        }
    }
}
