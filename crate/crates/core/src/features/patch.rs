//! Single-channel image patches: loading, grayscale conversion, cropping.

use image::DynamicImage;

use super::FeatureError;
use crate::bbox::BBox;

/// Luma weights applied to RGB input.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Row-major luminance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPatch {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f32>,
}

impl GrayPatch {
    pub fn new(width: u32, height: u32, pixels: Vec<f32>) -> Result<Self, FeatureError> {
        if width == 0 || height == 0 {
            return Err(FeatureError::DegeneratePatch(format!("{width}x{height}")));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(FeatureError::DegeneratePatch(format!(
                "{} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FeatureError::DegeneratePatch("luminance outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f32) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y).clamp(0.0, 1.0))
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Binary PGM (`P5`), 8- or 16-bit.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, FeatureError> {
        let bad = |msg: &str| FeatureError::Image(format!("pgm: {msg}"));
        let mut pos = 0usize;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            header.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        if header[0] != "P5" {
            return Err(bad("not a binary graymap"));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(header[1])?, num(header[2])?, num(header[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(bad("maxval out of range"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let count = width as usize * height as usize;
        let data = bytes.get(pos..).unwrap_or(&[]);
        let scale = 1.0 / maxval as f32;
        let pixels: Vec<f32> = if maxval < 256 {
            if data.len() < count {
                return Err(bad("truncated raster"));
            }
            data[..count].iter().map(|&b| (b as f32 * scale).min(1.0)).collect()
        } else {
            if data.len() < 2 * count {
                return Err(bad("truncated raster"));
            }
            data[..2 * count]
                .chunks_exact(2)
                .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f32 * scale).min(1.0))
                .collect()
        };
        Self::new(width, height, pixels)
    }

    /// 8-bit binary PGM.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|p| (p * 255.0).round() as u8));
        out
    }

    /// Any format the `image` crate decodes; color input goes through the luma weights.
    pub fn from_encoded(bytes: &[u8]) -> Result<Self, FeatureError> {
        if bytes.starts_with(b"P5") {
            return Self::from_pgm(bytes);
        }
        let img = image::load_from_memory(bytes).map_err(|e| FeatureError::Image(e.to_string()))?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (width, height) = (img.width(), img.height());
        let pixels = match img {
            DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p.0[0] as f32 / 255.0).collect(),
            DynamicImage::ImageLuma16(g) => g.pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
            other => other
                .to_rgb32f()
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0)
                })
                .collect(),
        };
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Pixels covered by `bbox`, expanded outward to whole pixels and clipped to the image.
    pub fn crop(&self, bbox: &BBox) -> Result<Self, FeatureError> {
        let x0 = bbox.left.floor().max(0.0) as u32;
        let y0 = bbox.top.floor().max(0.0) as u32;
        let x1 = (bbox.right.ceil().max(0.0) as u32).min(self.width);
        let y1 = (bbox.bottom.ceil().max(0.0) as u32).min(self.height);
        if x1 <= x0 || y1 <= y0 {
            return Err(FeatureError::DegeneratePatch(format!("empty crop {bbox:?}")));
        }
        let (w, h) = (x1 - x0, y1 - y0);
        let mut pixels = Vec::with_capacity(w as usize * h as usize);
        for y in y0..y1 {
            let row = y as usize * self.width as usize;
            pixels.extend_from_slice(&self.pixels[row + x0 as usize..row + x1 as usize]);
        }
        Ok(Self {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Bilinear resample with pixel-center alignment and clamped borders.
    pub fn resize_bilinear(&self, new_width: u32, new_height: u32) -> Self {
        let sx = self.width as f64 / new_width as f64;
        let sy = self.height as f64 / new_height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut pixels = Vec::with_capacity(new_width as usize * new_height as usize);
        for y in 0..new_height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = (fy - y0 as f64) as f32;
            for x in 0..new_width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = (fx - x0 as f64) as f32;
                let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
                let bottom = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
                pixels.push(top * (1.0 - wy) + bottom * wy);
            }
        }
        Self {
            width: new_width,
            height: new_height,
            pixels,
        }
    }
}
