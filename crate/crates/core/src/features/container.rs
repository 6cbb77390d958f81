//! Binary feature container.
//!
//! Little-endian layout:
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `MDFB` |
//! | 4 | 2 | version (`1`) |
//! | 6 | 2 | flags: bit 0 target present, bit 1 analytic range degenerate |
//! | 8 | 4 | channels (3) |
//! | 12 | 4 | height (224) |
//! | 16 | 4 | width (224) |
//! | 20 | 4 | side vector length (34) |
//! | 24 | 4·3·224·224 | overlay, f32, channel-major, row-major |
//! | … | 4·34 | side vector, f32 |
//! | … | 4·3 | target x y z, f32 (only if flag bit 0) |

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::overlay::{OverlayTensor, OVERLAY_CHANNELS, OVERLAY_SIZE};
use super::side::{SideVector, SIDE_VECTOR_LEN};
use super::FeatureError;

pub const MAGIC: &[u8; 4] = b"MDFB";
pub const VERSION: u16 = 1;
const FLAG_TARGET: u16 = 1;
const FLAG_DEGENERATE: u16 = 2;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub overlay: OverlayTensor,
    pub side: SideVector,
    /// Ground-truth Cartesian object center, present for training exports.
    pub target: Option<[f64; 3]>,
}

impl FeatureBundle {
    pub fn encode(&self) -> Vec<u8> {
        let floats = self.overlay.data.len() + self.side.values.len() + 3;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let mut flags = 0u16;
        if self.target.is_some() {
            flags |= FLAG_TARGET;
        }
        if self.side.analytic_degenerate {
            flags |= FLAG_DEGENERATE;
        }
        out.extend_from_slice(&flags.to_le_bytes());
        for dim in [OVERLAY_CHANNELS, OVERLAY_SIZE, OVERLAY_SIZE, SIDE_VECTOR_LEN] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.overlay.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.side.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(target) = self.target {
            for v in target {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Inverse of [`encode`](Self::encode); side and target values come back at f32 precision.
    pub fn decode(bytes: &[u8]) -> Result<Self, FeatureError> {
        let bad = |msg: &str| FeatureError::Container(msg.to_string());
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing magic"));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if u16_at(4) != VERSION {
            return Err(bad("unsupported version"));
        }
        let flags = u16_at(6);
        if [u32_at(8), u32_at(12), u32_at(16), u32_at(20)]
            != [OVERLAY_CHANNELS, OVERLAY_SIZE, OVERLAY_SIZE, SIDE_VECTOR_LEN]
        {
            return Err(bad("unexpected shape header"));
        }
        let has_target = flags & FLAG_TARGET != 0;
        let n_overlay = OVERLAY_CHANNELS * OVERLAY_SIZE * OVERLAY_SIZE;
        let expected = HEADER_LEN + 4 * (n_overlay + SIDE_VECTOR_LEN + if has_target { 3 } else { 0 });
        if bytes.len() != expected {
            return Err(bad("length does not match header"));
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let data: Vec<f32> = floats.by_ref().take(n_overlay).collect();
        let values: Vec<f64> = floats.by_ref().take(SIDE_VECTOR_LEN).map(f64::from).collect();
        let target = has_target.then(|| {
            let t: Vec<f64> = floats.by_ref().take(3).map(f64::from).collect();
            [t[0], t[1], t[2]]
        });
        Ok(Self {
            overlay: OverlayTensor { data },
            side: SideVector {
                values,
                analytic_degenerate: flags & FLAG_DEGENERATE != 0,
            },
            target,
        })
    }
}

/// One line of the per-sequence JSON index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub track_id: i64,
    pub frame_ids: Vec<i64>,
    pub class_label: String,
    pub analytic_degenerate: bool,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
