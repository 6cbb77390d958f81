use serde::{Deserialize, Serialize};

/// Axis-aligned image box in pixels, `left < right`, `top < bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        [self.left, self.top, self.right, self.bottom]
            .iter()
            .all(|v| v.is_finite())
            && self.right > self.left
            && self.bottom > self.top
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    /// Box height, the size measure used for range ratios.
    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.left + self.right),
            0.5 * (self.top + self.bottom),
        ]
    }

    /// Center divided per axis by the image width and height.
    pub fn normalized_center(&self, image_size: (u32, u32)) -> [f64; 2] {
        let [u, v] = self.center();
        [u / f64::from(image_size.0), v / f64::from(image_size.1)]
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.right.min(other.right) - self.left.max(other.left);
        let h = self.bottom.min(other.bottom) - self.top.max(other.top);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// True when any side lies on or beyond the image border.
    pub fn touches_border(&self, image_size: (u32, u32)) -> bool {
        self.left <= 0.0
            || self.top <= 0.0
            || self.right >= f64::from(image_size.0)
            || self.bottom >= f64::from(image_size.1)
    }
}
