//! `key = value` config for the dataset commands.

use std::fs;

use anyhow::{Context, Result};

use monodist_core::config::KeyValues;
use monodist_core::pipeline::PipelineConfig;
use monodist_core::trackbuf::KeyframeScheme;

use crate::DatasetArgs;

const KEYS: &[&str] = &[
    "lookback",
    "stride",
    "frame_rate",
    "eps_singular",
    "score_floor",
    "focal_length",
    "principal_point_x",
    "principal_point_y",
    "image_width",
    "image_height",
    "bin_width_distance",
    "bin_width_distance_change",
    "bin_width_velocity_change",
];

fn parse(text: &str) -> Result<PipelineConfig> {
    let kv = KeyValues::parse(text)?;
    kv.reject_unknown(KEYS)?;
    let d = PipelineConfig::default();
    let i = d.intrinsics;
    let mut cfg = d.clone();
    cfg.scheme = KeyframeScheme {
        lookback_frames: kv.get_or("lookback", d.scheme.lookback_frames)?,
        stride: kv.get_or("stride", d.scheme.stride)?,
        frame_rate: kv.get_or("frame_rate", d.scheme.frame_rate)?,
    };
    cfg.eps_singular = kv.get_or("eps_singular", d.eps_singular)?;
    cfg.score_floor = kv.get_or("score_floor", d.score_floor)?;
    cfg.intrinsics.focal_length = kv.get_or("focal_length", i.focal_length)?;
    cfg.intrinsics.principal_point = [
        kv.get_or("principal_point_x", i.principal_point[0])?,
        kv.get_or("principal_point_y", i.principal_point[1])?,
    ];
    cfg.intrinsics.image_size = (
        kv.get_or("image_width", i.image_size.0)?,
        kv.get_or("image_height", i.image_size.1)?,
    );
    cfg.bin_width_distance = kv.get_or("bin_width_distance", d.bin_width_distance)?;
    cfg.bin_width_distance_change =
        kv.get_or("bin_width_distance_change", d.bin_width_distance_change)?;
    cfg.bin_width_velocity_change =
        kv.get_or("bin_width_velocity_change", d.bin_width_velocity_change)?;
    Ok(cfg)
}

pub fn to_config_string(cfg: &PipelineConfig) -> String {
    let i = &cfg.intrinsics;
    let values = [
        cfg.scheme.lookback_frames.to_string(),
        cfg.scheme.stride.to_string(),
        cfg.scheme.frame_rate.to_string(),
        cfg.eps_singular.to_string(),
        cfg.score_floor.to_string(),
        i.focal_length.to_string(),
        i.principal_point[0].to_string(),
        i.principal_point[1].to_string(),
        i.image_size.0.to_string(),
        i.image_size.1.to_string(),
        cfg.bin_width_distance.to_string(),
        cfg.bin_width_distance_change.to_string(),
        cfg.bin_width_velocity_change.to_string(),
    ];
    KEYS.iter()
        .zip(values)
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// Resolved pipeline config (file, then flags) and its canonical text form.
pub fn pipeline_config(args: &DatasetArgs) -> Result<(PipelineConfig, String)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.lookback {
        cfg.scheme.lookback_frames = v;
    }
    if let Some(v) = args.stride {
        cfg.scheme.stride = v;
    }
    if let Some(v) = args.fps {
        cfg.scheme.frame_rate = v;
    }
    if let Some(v) = args.eps {
        cfg.eps_singular = v;
    }
    cfg.validate()?;
    let text = to_config_string(&cfg);
    Ok((cfg, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_unknown_keys() {
        let mut cfg = PipelineConfig::default();
        cfg.scheme.stride = 2;
        cfg.eps_singular = 1e-8;
        assert_eq!(parse(&to_config_string(&cfg)).unwrap(), cfg);
        assert!(parse("lookbak = 10").is_err());
    }
}
