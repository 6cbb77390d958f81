use serde::{Deserialize, Serialize};

use crate::ingest::{ImuFeatures, IMU_FEATURE_LEN};
use crate::solver::DistanceEstimate;

pub const SIDE_VECTOR_LEN: usize = 34;
pub const CENTERS_OFFSET: usize = IMU_FEATURE_LEN;
pub const ANALYTIC_OFFSET: usize = IMU_FEATURE_LEN + 6;
/// Written in the analytic slot when the geometry is degenerate.
pub const DEGENERATE_SENTINEL: f64 = -1.0;

/// IMU block (27) ++ normalized box centers u₀ v₀ u₁ v₁ u₂ v₂ (6) ++ analytic range (1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideVector {
    pub values: Vec<f64>,
    pub analytic_degenerate: bool,
}

impl SideVector {
    pub fn imu(&self) -> &[f64] {
        &self.values[..CENTERS_OFFSET]
    }

    pub fn centers(&self) -> &[f64] {
        &self.values[CENTERS_OFFSET..ANALYTIC_OFFSET]
    }

    pub fn analytic_range(&self) -> f64 {
        self.values[ANALYTIC_OFFSET]
    }
}

pub fn make_side_vector(
    imu: &ImuFeatures,
    centers: [[f64; 2]; 3],
    analytic: &DistanceEstimate,
) -> SideVector {
    let mut values = Vec::with_capacity(SIDE_VECTOR_LEN);
    values.extend_from_slice(&imu.values);
    values.extend(centers.iter().flatten());
    let degenerate = !analytic.is_ok();
    values.push(if degenerate {
        DEGENERATE_SENTINEL
    } else {
        analytic.range
    });
    SideVector {
        values,
        analytic_degenerate: degenerate,
    }
}
