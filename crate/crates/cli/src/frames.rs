//! Frame images for filter-weight snapshots.
//!
//! Frames are binary PGM (`P5`) so they stay dependency-free and diffable;
//! any image tool can turn a frame directory into an animation.

use bsf_core::bsf::write_snapshot_csv;
use bsf_core::{BsfSnapshot, Error, Layout, Result};

/// Height in pixels of bar-chart frames.
pub const BAR_HEIGHT: usize = 64;
/// Width in pixels of each bar in bar-chart frames.
pub const BAR_WIDTH: usize = 4;

/// Renders filter weights as an 8-bit grayscale PGM image.
///
/// A grid layout maps each weight to one pixel of value `round(255·w)`.
/// A vector layout becomes a bar chart `BAR_HEIGHT` pixels tall with one
/// `BAR_WIDTH`-pixel white bar of height `round(BAR_HEIGHT·w)` per weight,
/// growing up from the bottom edge on a black background.
pub fn render_frame(weights: &[f64], layout: Layout) -> Result<Vec<u8>> {
    if layout.len() != weights.len() {
        return Err(Error::Input(format!(
            "layout {layout:?} holds {} weights, got {}",
            layout.len(),
            weights.len()
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Input(format!("frame weights must lie in [0, 1], got {bad}")));
    }
    let (width, height, pixels) = match layout {
        Layout::Grid { height, width } => {
            let pixels = weights.iter().map(|w| (255.0 * w).round() as u8).collect();
            (width, height, pixels)
        }
        Layout::Vector { len } => {
            let width = len * BAR_WIDTH;
            let mut pixels = vec![0u8; width * BAR_HEIGHT];
            for (i, w) in weights.iter().enumerate() {
                let bar = (BAR_HEIGHT as f64 * w).round() as usize;
                for row in BAR_HEIGHT - bar..BAR_HEIGHT {
                    let start = row * width + i * BAR_WIDTH;
                    pixels[start..start + BAR_WIDTH].fill(255);
                }
            }
            (width, BAR_HEIGHT, pixels)
        }
    };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

/// One frame per snapshot: `(file stem, csv bytes, pgm bytes)`, with the
/// stem `epoch_NNNN` zero-padded to four digits.
pub fn frame_set(snapshots: &[BsfSnapshot]) -> Result<Vec<(String, Vec<u8>, Vec<u8>)>> {
    snapshots
        .iter()
        .map(|s| {
            let mut csv = vec![];
            write_snapshot_csv(&mut csv, std::slice::from_ref(s)).expect("writing to memory");
            let pgm = render_frame(&s.weights, s.layout)?;
            Ok((format!("epoch_{:04}", s.epoch), csv, pgm))
        })
        .collect()
}
