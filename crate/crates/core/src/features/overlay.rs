use super::patch::GrayPatch;
use super::FeatureError;

pub const OVERLAY_SIZE: usize = 224;
pub const OVERLAY_CHANNELS: usize = 3;

/// Three 224×224 luminance planes, channel-major, oldest keyframe first.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayTensor {
    pub data: Vec<f32>,
}

impl OverlayTensor {
    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; OVERLAY_CHANNELS * OVERLAY_SIZE * OVERLAY_SIZE],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [OVERLAY_CHANNELS, OVERLAY_SIZE, OVERLAY_SIZE]
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel * OVERLAY_SIZE + y) * OVERLAY_SIZE + x]
    }

    pub fn channel(&self, channel: usize) -> &[f32] {
        let n = OVERLAY_SIZE * OVERLAY_SIZE;
        &self.data[channel * n..(channel + 1) * n]
    }
}

fn round_half_up(v: f64) -> u32 {
    ((v + 0.5).floor() as u32).max(1)
}

/// `(destination offset, source offset, length)` along one axis.
fn placement(len: usize) -> (usize, usize, usize) {
    if len <= OVERLAY_SIZE {
        ((OVERLAY_SIZE - len) / 2, 0, len)
    } else {
        (0, (len - OVERLAY_SIZE) / 2, OVERLAY_SIZE)
    }
}

/// Scale all three patches by `224 / max(heights)`, keeping aspect ratios,
/// then center-pad or center-crop each to 224×224.
pub fn make_overlay(patches: &[GrayPatch; 3], bbox_heights: [f64; 3]) -> Result<OverlayTensor, FeatureError> {
    for (i, p) in patches.iter().enumerate() {
        if p.width == 0 || p.height == 0 || p.pixels.len() != p.width as usize * p.height as usize {
            return Err(FeatureError::DegeneratePatch(format!("patch {i} is empty")));
        }
    }
    if bbox_heights.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(FeatureError::DegeneratePatch(format!(
            "box heights must be positive: {bbox_heights:?}"
        )));
    }
    let scale = OVERLAY_SIZE as f64 / bbox_heights.iter().copied().fold(0.0, f64::max);

    let mut out = OverlayTensor::zeros();
    for (c, patch) in patches.iter().enumerate() {
        let w = round_half_up(patch.width as f64 * scale);
        let h = round_half_up(patch.height as f64 * scale);
        let resized = patch.resize_bilinear(w, h);
        let (dx, sx, lx) = placement(w as usize);
        let (dy, sy, ly) = placement(h as usize);
        let plane = c * OVERLAY_SIZE * OVERLAY_SIZE;
        for row in 0..ly {
            let src = (sy + row) * w as usize + sx;
            let dst = plane + (dy + row) * OVERLAY_SIZE + dx;
            out.data[dst..dst + lx].copy_from_slice(&resized.pixels[src..src + lx]);
        }
    }
    Ok(out)
}
