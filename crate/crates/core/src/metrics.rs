//! Distance-estimation error metrics and binned error reports.
//!
//! Relative errors divide by the ground-truth distance. `mre_paper` is the
//! median of absolute errors (meters); `mre_relative` is the median of
//! relative errors. Both are reported.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no evaluation pairs")]
    EmptySet,
    #[error("pair {index} has a non-positive distance (gt {gt}, pred {pred})")]
    NonPositiveDistance { index: usize, gt: f64, pred: f64 },
    #[error("bin width must be positive, got {0}")]
    BadBinWidth(f64),
    #[error("csv: {0}")]
    Csv(String),
}

/// One ground-truth / predicted distance pair plus binning context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub d_gt: f64,
    pub d_pred: f64,
    /// Ground-truth range change over the keyframe window (meters).
    pub distance_change: f64,
    /// Change of ground-truth range rate over the window (m/s).
    pub velocity_change: f64,
}

impl EvalPair {
    pub fn new(d_gt: f64, d_pred: f64) -> Self {
        Self {
            d_gt,
            d_pred,
            distance_change: 0.0,
            velocity_change: 0.0,
        }
    }

    pub fn abs_error(&self) -> f64 {
        (self.d_gt - self.d_pred).abs()
    }

    pub fn rel_error(&self) -> f64 {
        self.abs_error() / self.d_gt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub mare: f64,
    pub mre_paper: f64,
    pub mre_relative: f64,
    pub ci95_halfwidth: f64,
    pub rmse: f64,
    pub delta_125: f64,
    pub srd: f64,
    pub rmse_log: f64,
}

fn check_pairs(pairs: &[EvalPair]) -> Result<(), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    for (index, p) in pairs.iter().enumerate() {
        if !(p.d_gt > 0.0 && p.d_pred > 0.0) || !p.d_gt.is_finite() || !p.d_pred.is_finite() {
            return Err(MetricsError::NonPositiveDistance {
                index,
                gt: p.d_gt,
                pred: p.d_pred,
            });
        }
    }
    Ok(())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

pub fn compute_metrics(pairs: &[EvalPair]) -> Result<MetricsReport, MetricsError> {
    check_pairs(pairs)?;
    let n = pairs.len();
    let rel: Vec<f64> = pairs.iter().map(EvalPair::rel_error).collect();
    let abs: Vec<f64> = pairs.iter().map(EvalPair::abs_error).collect();

    let mare = mean(rel.iter().copied(), n);
    let ci95_halfwidth = if n > 1 {
        let var = rel.iter().map(|r| (r - mare).powi(2)).sum::<f64>() / (n - 1) as f64;
        1.96 * var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    let within = pairs
        .iter()
        .filter(|p| (p.d_pred / p.d_gt).max(p.d_gt / p.d_pred) < 1.25)
        .count();

    Ok(MetricsReport {
        n,
        mare,
        mre_paper: median(&abs),
        mre_relative: median(&rel),
        ci95_halfwidth,
        rmse: mean(abs.iter().map(|e| e * e), n).sqrt(),
        delta_125: within as f64 / n as f64,
        srd: mean(pairs.iter().map(|p| p.abs_error().powi(2) / p.d_gt), n),
        rmse_log: mean(pairs.iter().map(|p| (p.d_gt.ln() - p.d_pred.ln()).powi(2)), n).sqrt(),
    })
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("N", self.n as f64),
            ("MARE", self.mare),
            ("MRE (abs, m)", self.mre_paper),
            ("MRE (rel)", self.mre_relative),
            ("95% CI +/-", self.ci95_halfwidth),
            ("RMSE (m)", self.rmse),
            ("delta < 1.25", self.delta_125),
            ("SRD", self.srd),
            ("RMSE log", self.rmse_log),
        ];
        for (name, value) in rows {
            if name == "N" {
                writeln!(f, "{name:<14} {:>14}", self.n)?;
            } else {
                writeln!(f, "{name:<14} {value:>14.6e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinAxis {
    Distance,
    DistanceChange,
    VelocityChange,
}

impl BinAxis {
    pub fn value(self, pair: &EvalPair) -> f64 {
        match self {
            Self::Distance => pair.d_gt,
            Self::DistanceChange => pair.distance_change,
            Self::VelocityChange => pair.velocity_change,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Distance => "distance",
            Self::DistanceChange => "distance_change",
            Self::VelocityChange => "velocity_change",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    /// `None` for empty bins.
    pub mare: Option<f64>,
    /// Median relative error; `None` for empty bins.
    pub mre: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedErrorReport {
    pub axis: BinAxis,
    pub bin_width: f64,
    pub bins: Vec<Bin>,
}

pub fn binned_report(
    pairs: &[EvalPair],
    axis: BinAxis,
    bin_width: f64,
) -> Result<BinnedErrorReport, MetricsError> {
    check_pairs(pairs)?;
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(MetricsError::BadBinWidth(bin_width));
    }
    let values: Vec<f64> = pairs.iter().map(|p| axis.value(p)).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = (min / bin_width).floor();
    let count = ((max / bin_width).floor() - start) as usize + 1;

    let mut members: Vec<Vec<f64>> = vec![Vec::new(); count];
    for (p, v) in pairs.iter().zip(&values) {
        let idx = (((v / bin_width).floor() - start) as usize).min(count - 1);
        members[idx].push(p.rel_error());
    }
    let bins = members
        .into_iter()
        .enumerate()
        .map(|(i, rel)| {
            let lo = (start + i as f64) * bin_width;
            let n = rel.len();
            Bin {
                lo,
                hi: lo + bin_width,
                mare: (n > 0).then(|| mean(rel.iter().copied(), n)),
                mre: (n > 0).then(|| median(&rel)),
                count: n,
            }
        })
        .collect();
    Ok(BinnedErrorReport {
        axis,
        bin_width,
        bins,
    })
}

impl BinnedErrorReport {
    /// CSV with columns `bin_lo,bin_hi,mare,mre,count`; empty bins leave the metrics blank.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| MetricsError::Csv(e.to_string());
        w.write_record(["bin_lo", "bin_hi", "mare", "mre", "count"])
            .map_err(err)?;
        for b in &self.bins {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                opt(b.mare),
                opt(b.mre),
                b.count.to_string(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| MetricsError::Csv(e.to_string()))
    }

    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

impl fmt::Display for BinnedErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (bin width {})", self.axis.name(), self.bin_width)?;
        writeln!(f, "{:>10} {:>10} {:>12} {:>12} {:>8}", "lo", "hi", "MARE", "MRE", "count")?;
        for b in &self.bins {
            let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
            writeln!(
                f,
                "{:>10} {:>10} {:>12} {:>12} {:>8}",
                b.lo,
                b.hi,
                opt(b.mare),
                opt(b.mre),
                b.count
            )?;
        }
        Ok(())
    }
}
