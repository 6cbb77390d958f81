//! Differential range estimation from projected-size ratios and camera displacement.
//!
//! Along the camera→object axis the range evolves as
//! `d_n = d_{n-1} + ΔD_n - ΔC_n`, and the projected height is inversely
//! proportional to range, so `p_n = H_n / H_{n-1} = d_{n-1} / d_n`.
//! Eliminating the intermediate ranges in favour of `d_q` gives one linear
//! row per interval:
//!
//! ```text
//! (p_n - 1) d_q + ΔD_n - (p_n - 1) Σ_{k>n} ΔD_k = ΔC_n - (p_n - 1) Σ_{k>n} ΔC_k
//! ```
//!
//! The object displacements `ΔD_k` are then expressed through a polynomial
//! motion model with `m` parameters, which leaves a square `(m+1)×(m+1)`
//! system in `[d_q, f_1..f_m]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default relative singularity threshold.
pub const DEFAULT_EPS_SINGULAR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("height {index} is not positive ({value})")]
    NonPositiveHeight { index: usize, value: f64 },
    #[error("need at least two heights, got {0}")]
    TooFewHeights(usize),
    #[error("motion order {order} needs {expected} size ratios, got {got}")]
    OrderMismatch { order: u8, expected: usize, got: usize },
    #[error("expected {expected} camera displacements, got {got}")]
    DeltaCountMismatch { expected: usize, got: usize },
    #[error("unsupported motion order {0}")]
    UnsupportedOrder(u8),
    #[error("malformed linear system: {0}")]
    Malformed(&'static str),
    #[error("malformed keyframe observation: {0}")]
    MalformedTriple(&'static str),
}

/// Opaque track identity, as assigned by the tracker or the annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub i64);

/// Object motion model along the camera axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionOrder {
    Stationary,
    ConstantVelocity,
    ConstantAcceleration,
}

impl MotionOrder {
    pub fn from_degree(order: u8) -> Result<Self, SolverError> {
        match order {
            0 => Ok(Self::Stationary),
            1 => Ok(Self::ConstantVelocity),
            2 => Ok(Self::ConstantAcceleration),
            other => Err(SolverError::UnsupportedOrder(other)),
        }
    }

    pub fn degree(self) -> u8 {
        match self {
            Self::Stationary => 0,
            Self::ConstantVelocity => 1,
            Self::ConstantAcceleration => 2,
        }
    }

    /// Number of intervals (`q`) the model needs, one more than its parameter count.
    pub fn intervals(self) -> usize {
        self.degree() as usize + 1
    }

    /// Motion order whose system is square for `q` intervals.
    pub fn for_intervals(q: usize) -> Result<Self, SolverError> {
        match q {
            1..=3 => Self::from_degree((q - 1) as u8),
            _ => Err(SolverError::UnsupportedOrder(q.saturating_sub(1) as u8)),
        }
    }

    /// Contribution of parameter `param` to the object displacement of interval `k` (1-based).
    ///
    /// Constant velocity: `ΔD_k = f_1`. Constant acceleration:
    /// `ΔD_k = f_1 + (k - 1) f_2` with `f_2 = a Δt²`.
    fn basis(self, param: usize, k: usize) -> f64 {
        match (self, param) {
            (Self::ConstantVelocity | Self::ConstantAcceleration, 0) => 1.0,
            (Self::ConstantAcceleration, 1) => (k - 1) as f64,
            _ => 0.0,
        }
    }
}

/// The q+1 observations of one track that feed a single estimate.
///
/// Carries no class information: estimation only ever sees size ratios,
/// box centers and ego-motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeTriple {
    pub heights: Vec<f64>,
    pub camera_deltas: Vec<f64>,
    pub dt: f64,
    pub bbox_centers: Vec<[f64; 2]>,
    pub frame_ids: Vec<i64>,
    pub track_id: TrackId,
}

impl KeyframeTriple {
    pub fn intervals(&self) -> usize {
        self.camera_deltas.len()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.heights.len();
        if n < 2 {
            return Err(SolverError::TooFewHeights(n));
        }
        if self.camera_deltas.len() != n - 1 {
            return Err(SolverError::DeltaCountMismatch {
                expected: n - 1,
                got: self.camera_deltas.len(),
            });
        }
        if let Some((index, &value)) = self.heights.iter().enumerate().find(|(_, h)| !(**h > 0.0)) {
            return Err(SolverError::NonPositiveHeight { index, value });
        }
        if self.bbox_centers.len() != n || self.frame_ids.len() != n {
            return Err(SolverError::MalformedTriple("per-frame field lengths differ"));
        }
        if !(self.dt > 0.0) {
            return Err(SolverError::MalformedTriple("dt must be positive"));
        }
        if self.frame_ids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SolverError::MalformedTriple("frame ids not strictly increasing"));
        }
        Ok(())
    }
}

/// Consecutive projected-height ratios `p_n = H_n / H_{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRatios(pub Vec<f64>);

impl SizeRatios {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn size_ratios(heights: &[f64]) -> Result<SizeRatios, SolverError> {
    if heights.len() < 2 {
        return Err(SolverError::TooFewHeights(heights.len()));
    }
    if let Some((index, &value)) = heights.iter().enumerate().find(|(_, h)| !(**h > 0.0)) {
        return Err(SolverError::NonPositiveHeight { index, value });
    }
    Ok(SizeRatios(heights.windows(2).map(|w| w[1] / w[0]).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unknown {
    /// Range at the newest keyframe, `d_q`.
    Range,
    /// Object displacement per interval (first interval for the acceleration model).
    ObjectDisplacement,
    /// Per-interval growth of the object displacement, `a Δt²`.
    DisplacementIncrement,
}

/// Square system `A [d_q, f]ᵀ = b`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub unknowns: Vec<Unknown>,
}

impl LinearSystem {
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.a[row * self.dim + col]
    }

    fn check(&self) -> Result<(), SolverError> {
        if self.dim == 0 {
            return Err(SolverError::Malformed("empty system"));
        }
        if self.a.len() != self.dim * self.dim {
            return Err(SolverError::Malformed("matrix is not square"));
        }
        if self.b.len() != self.dim || self.unknowns.len() != self.dim {
            return Err(SolverError::Malformed("rhs/unknown length mismatch"));
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(SolverError::Malformed("non-finite coefficient"));
        }
        Ok(())
    }
}

pub fn build_system(
    ratios: &SizeRatios,
    camera_deltas: &[f64],
    order: MotionOrder,
) -> Result<LinearSystem, SolverError> {
    let q = ratios.len();
    if q != order.intervals() {
        return Err(SolverError::OrderMismatch {
            order: order.degree(),
            expected: order.intervals(),
            got: q,
        });
    }
    if camera_deltas.len() != q {
        return Err(SolverError::DeltaCountMismatch {
            expected: q,
            got: camera_deltas.len(),
        });
    }
    let params = order.degree() as usize;
    let p = ratios.as_slice();
    let mut a = vec![0.0; q * q];
    let mut b = vec![0.0; q];

    for row in 0..q {
        let n = row + 1;
        let pm1 = p[row] - 1.0;
        a[row * q] = pm1;
        for j in 0..params {
            let later: f64 = ((n + 1)..=q).map(|k| order.basis(j, k)).sum();
            a[row * q + 1 + j] = order.basis(j, n) + later - p[row] * later;
        }
        // Coefficients are expanded as `x + s - p s` rather than `x - (p - 1) s`
        // so the two-interval rows come out as 2 - p_1 and ΔC_1 + ΔC_2 - p_1 ΔC_2
        // with identical rounding.
        let later_c: f64 = camera_deltas[n..].iter().sum();
        b[row] = camera_deltas[row] + later_c - p[row] * later_c;
    }

    let mut unknowns = vec![Unknown::Range];
    if params >= 1 {
        unknowns.push(Unknown::ObjectDisplacement);
    }
    if params >= 2 {
        unknowns.push(Unknown::DisplacementIncrement);
    }
    Ok(LinearSystem {
        dim: q,
        a,
        b,
        unknowns,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateStatus {
    Ok,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    /// Range at the newest keyframe. Only meaningful when `status` is `Ok`.
    pub range: f64,
    /// Motion parameters in interval units (meters per interval, meters per interval²).
    pub motion_params: Vec<f64>,
    pub cartesian: Option<[f64; 3]>,
    /// 1-norm condition number of the system matrix.
    pub condition_number: f64,
    pub status: EstimateStatus,
}

impl DistanceEstimate {
    pub fn is_ok(&self) -> bool {
        self.status == EstimateStatus::Ok
    }

    /// Object velocity along the axis in m/s, from the per-interval displacement.
    pub fn object_velocity(&self, dt: f64) -> Option<f64> {
        self.motion_params.first().map(|d| d / dt)
    }

    /// Attach a Cartesian position (see `kinematics::ray_adapter`).
    pub fn with_cartesian(mut self, cartesian: [f64; 3]) -> Self {
        self.cartesian = Some(cartesian);
        self
    }
}

struct Lu {
    dim: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    min_pivot: f64,
}

impl Lu {
    /// Doolittle factorisation with partial pivoting. Exact zero pivots are kept
    /// so callers can classify the system instead of failing.
    fn factor(dim: usize, a: &[f64]) -> Self {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..dim).collect();
        let mut min_pivot = f64::INFINITY;
        for col in 0..dim {
            let pivot_row = (col..dim)
                .max_by(|&i, &j| lu[i * dim + col].abs().total_cmp(&lu[j * dim + col].abs()))
                .unwrap_or(col);
            if pivot_row != col {
                for k in 0..dim {
                    lu.swap(col * dim + k, pivot_row * dim + k);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * dim + col];
            min_pivot = min_pivot.min(pivot.abs());
            if pivot == 0.0 {
                continue;
            }
            for row in (col + 1)..dim {
                let factor = lu[row * dim + col] / pivot;
                lu[row * dim + col] = factor;
                for k in (col + 1)..dim {
                    lu[row * dim + k] -= factor * lu[col * dim + k];
                }
            }
        }
        Self {
            dim,
            lu,
            perm,
            min_pivot,
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| rhs[i]).collect();
        for row in 0..n {
            for k in 0..row {
                x[row] -= self.lu[row * n + k] * x[k];
            }
        }
        for row in (0..n).rev() {
            for k in (row + 1)..n {
                x[row] -= self.lu[row * n + k] * x[k];
            }
            x[row] /= self.lu[row * n + row];
        }
        x
    }

    fn inverse_norm1(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            let column = self.solve(&e);
            worst = worst.max(column.iter().map(|v| v.abs()).sum());
        }
        worst
    }
}

fn norm1(dim: usize, a: &[f64]) -> f64 {
    (0..dim)
        .map(|col| (0..dim).map(|row| a[row * dim + col].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// A range this close to zero (relative to the displacement scale) is not resolvable.
fn range_resolvable(range: f64, rhs_scale: f64, eps_singular: f64) -> bool {
    range.is_finite() && range > eps_singular * rhs_scale.max(1.0)
}

pub fn solve(system: &LinearSystem, eps_singular: f64) -> Result<DistanceEstimate, SolverError> {
    system.check()?;
    let n = system.dim;
    let lu = Lu::factor(n, &system.a);
    let max_entry = system.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    if lu.min_pivot == 0.0 || max_entry == 0.0 {
        return Ok(DistanceEstimate {
            range: f64::NAN,
            motion_params: vec![f64::NAN; n - 1],
            cartesian: None,
            condition_number: f64::INFINITY,
            status: EstimateStatus::Degenerate,
        });
    }

    let x = lu.solve(&system.b);
    let condition_number = norm1(n, &system.a) * lu.inverse_norm1();
    let pivot_ratio = lu.min_pivot / max_entry;
    let rhs_scale = system.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let well_posed = pivot_ratio >= eps_singular
        && condition_number.is_finite()
        && condition_number.recip() >= eps_singular;
    let status = if well_posed && range_resolvable(x[0], rhs_scale, eps_singular) {
        EstimateStatus::Ok
    } else {
        EstimateStatus::Degenerate
    };

    Ok(DistanceEstimate {
        range: x[0],
        motion_params: x[1..].to_vec(),
        cartesian: None,
        condition_number,
        status,
    })
}

/// Closed form for two intervals and a constant-velocity object:
/// `d_2 = (ΔC_1 - ΔC_2) / (p_1 p_2 - 2 p_2 + 1)`.
///
/// The denominator vanishes when the relative velocity is constant, i.e. a
/// constant-velocity object seen from a constant-velocity camera.
pub fn solve_q2_closed_form(
    p1: f64,
    p2: f64,
    dc1: f64,
    dc2: f64,
    eps_singular: f64,
) -> Result<DistanceEstimate, SolverError> {
    for (index, value) in [(0, p1), (1, p2)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(SolverError::NonPositiveHeight { index, value });
        }
    }
    let numerator = dc1 - dc2;
    let denominator = p1 * p2 - 2.0 * p2 + 1.0;
    let d2 = numerator / denominator;
    let displacement = dc2 - (p2 - 1.0) * d2;

    // Same matrix as the general path; its inverse is adj(A) / det.
    let (a11, a12, a21, a22): (f64, f64, f64, f64) = (p1 - 1.0, 2.0 - p1, p2 - 1.0, 1.0);
    let norm_a = (a11.abs() + a21.abs()).max(a12.abs() + a22.abs());
    let norm_inv = (a22.abs() + a21.abs()).max(a12.abs() + a11.abs()) / denominator.abs();
    let condition_number = norm_a * norm_inv;

    let rhs_scale = (dc1 + dc2 - p1 * dc2).abs().max(dc2.abs());
    let singular = !(denominator.abs() >= eps_singular * numerator.abs().max(1.0));
    let status = if singular || !range_resolvable(d2, rhs_scale, eps_singular) {
        EstimateStatus::Degenerate
    } else {
        EstimateStatus::Ok
    };
    Ok(DistanceEstimate {
        range: d2,
        motion_params: vec![displacement],
        cartesian: None,
        condition_number,
        status,
    })
}

/// Euclidean distance to a Cartesian object center.
pub fn range_to_distance(cartesian: [f64; 3]) -> f64 {
    let [x, y, z] = cartesian;
    (x * x + y * y + z * z).sqrt()
}

/// Ratios, system and solution for one keyframe set. The motion order is
/// implied by the number of intervals.
pub fn estimate(triple: &KeyframeTriple, eps_singular: f64) -> Result<DistanceEstimate, SolverError> {
    triple.validate()?;
    let ratios = size_ratios(&triple.heights)?;
    let order = MotionOrder::for_intervals(ratios.len())?;
    let system = build_system(&ratios, &triple.camera_deltas, order)?;
    solve(&system, eps_singular)
}
