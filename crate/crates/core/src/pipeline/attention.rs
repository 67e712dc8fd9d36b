use serde::{Deserialize, Serialize};

use super::builders::build_cnn;
use super::train::{train, RunReport, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::{streams, RngStream};

/// Mean filter weight in the central block versus the outer ring of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterContrast {
    pub center_mean: f64,
    pub ring_mean: f64,
}

impl CenterContrast {
    pub fn contrast(&self) -> f64 {
        self.center_mean - self.ring_mean
    }
}

/// Compares the central `height/2 × width/2` block (rounded down, centered)
/// with the outermost `ring` pixels on every side of a row-major grid.
pub fn center_contrast(w: &[f64], height: usize, width: usize, ring: usize) -> Result<CenterContrast> {
    if w.len() != height * width {
        return Err(Error::Input(format!(
            "grid {height}x{width} does not match {} weights",
            w.len()
        )));
    }
    if ring == 0 || 2 * ring >= height.min(width) || height < 2 || width < 2 {
        return Err(Error::Input(format!("ring {ring} does not fit a {height}x{width} grid")));
    }
    let (ch, cw) = (height / 2, width / 2);
    let (top, left) = ((height - ch) / 2, (width - cw) / 2);
    let (mut center, mut n_center, mut outer, mut n_outer) = (0.0, 0usize, 0.0, 0usize);
    for y in 0..height {
        for x in 0..width {
            let v = w[y * width + x];
            if (top..top + ch).contains(&y) && (left..left + cw).contains(&x) {
                center += v;
                n_center += 1;
            }
            if y < ring || y >= height - ring || x < ring || x >= width - ring {
                outer += v;
                n_outer += 1;
            }
        }
    }
    Ok(CenterContrast {
        center_mean: center / n_center as f64,
        ring_mean: outer / n_outer as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub height: usize,
    pub width: usize,
    pub weights: Vec<f64>,
    pub contrast: CenterContrast,
    pub run: RunReport,
}

/// Trains the convolutional classifier behind a per-pixel input filter and
/// reports the learned weight map.
pub fn attention_map(data: &Dataset, cfg: &TrainConfig) -> Result<(Network, AttentionReport)> {
    let [c, h, w]: [usize; 3] = data
        .sample_shape()
        .try_into()
        .map_err(|_| Error::Input("attention maps need [c, h, w] image samples".into()))?;
    if c != 1 {
        return Err(Error::Input(format!("attention maps need single-channel images, got {c} channels")));
    }
    let mut init = RngStream::new(cfg.seed, streams::INIT);
    let mut net = build_cnn([c, h, w], data.n_classes, true, false, &mut init)?;
    let run = train(&mut net, data, cfg, None)?;
    let weights = net.bsf_layers().next().expect("input filter present").w().to_vec();
    let contrast = center_contrast(&weights, h, w, 2)?;
    Ok((
        net,
        AttentionReport {
            height: h,
            width: w,
            weights,
            contrast,
            run,
        },
    ))
}
