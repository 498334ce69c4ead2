//! Tiled full-raster inference: overlapping tiles, probability averaging,
//! mask coating, thresholding.

use crate::error::{Error, Result};
use crate::nn::ops::sigmoid_forward;
use crate::nn::{unet_forward, ModelParams, Tensor, UNetConfig};
use crate::patches::PatchSpec;
use crate::raster::{Dtype, Raster, Samples};

use super::train::MaskMode;

pub struct PredictOutput {
    /// Coated probabilities, f32, single band.
    pub probability: Raster,
    /// Thresholded classes, u8 binary, single band.
    pub binary: Raster,
}

/// Tile start positions along one axis: the plan_windows starts plus, when
/// they do not reach the end, one flush start at dim - tile.
fn axis_starts(dim: usize, tile: usize, stride: usize) -> Vec<usize> {
    if dim <= tile {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..)
        .map(|k| k * stride)
        .take_while(|&s| s + tile <= dim)
        .collect();
    let last = *starts.last().expect("dim > tile yields at least one start");
    if last + tile < dim {
        starts.push(dim - tile);
    }
    starts
}

/// Run the model over the raster in overlapping tiles.
///
/// Tile regions outside the raster read as zero and are cropped from the
/// output; overlapping pixels average their probabilities; the result is
/// coated with the mask, so mask-0 pixels are exactly 0 in both outputs.
pub fn predict_tiled(
    cfg: &UNetConfig,
    params: &ModelParams<f32>,
    mode: MaskMode,
    image: &Raster,
    mask: &Raster,
    tile: usize,
    tile_stride: usize,
    threshold: f32,
) -> Result<PredictOutput> {
    if image.grid != mask.grid {
        return Err(Error::validation("image and mask grids differ"));
    }
    if image.bands != 3 || image.dtype() != Dtype::U8 {
        return Err(Error::validation("image must be a 3-band u8 raster"));
    }
    if !mask.is_binary_mask() {
        return Err(Error::validation("mask must be a single-band binary raster"));
    }
    if cfg.in_channels != mode.in_channels() {
        return Err(Error::validation(format!(
            "model expects {} input channels but mask mode {:?} provides {}",
            cfg.in_channels,
            mode,
            mode.in_channels()
        )));
    }
    let div = 1usize << cfg.levels;
    if tile % div != 0 || tile_stride == 0 || tile_stride > tile {
        return Err(Error::validation(format!(
            "tile {tile} must be divisible by 2^levels = {div} with 0 < stride <= tile"
        )));
    }
    PatchSpec::new(tile, tile_stride)?;

    let (h, w) = (image.grid.height, image.grid.width);
    let mut sum = vec![0.0f64; h * w];
    let mut count = vec![0u32; h * w];
    let c = cfg.in_channels;
    let plane = tile * tile;

    let row_starts = axis_starts(h, tile, tile_stride);
    let col_starts = axis_starts(w, tile, tile_stride);
    for &row0 in &row_starts {
        for &col0 in &col_starts {
            let mut x = Tensor::zeros(vec![1, c, tile, tile]);
            let rows = tile.min(h.saturating_sub(row0));
            let cols = tile.min(w.saturating_sub(col0));
            for dr in 0..rows {
                for dc in 0..cols {
                    let (r, cc) = (row0 + dr, col0 + dc);
                    let m = mask.get_u8(0, r, cc) as f32;
                    for band in 0..3 {
                        let v = image.get_u8(band, r, cc) as f32 / 255.0;
                        x.data[(band * tile + dr) * tile + dc] = match mode {
                            MaskMode::Channel => v,
                            MaskMode::Premultiply => v * m,
                            MaskMode::FixedFill(fill) => {
                                if m != 0.0 {
                                    v
                                } else {
                                    fill
                                }
                            }
                        };
                    }
                    if mode == MaskMode::Channel {
                        x.data[(3 * tile + dr) * tile + dc] = m;
                    }
                }
            }
            let (logits, _) = unet_forward(cfg, params, &x)?;
            let probs = sigmoid_forward(&logits);
            debug_assert_eq!(probs.len(), plane);
            for dr in 0..rows {
                for dc in 0..cols {
                    let i = (row0 + dr) * w + (col0 + dc);
                    sum[i] += probs.data[dr * tile + dc] as f64;
                    count[i] += 1;
                }
            }
        }
    }

    let mask_data = match &mask.data {
        Samples::U8(v) => v,
        Samples::F32(_) => unreachable!("is_binary_mask checked u8"),
    };
    let mut prob_data = vec![0.0f32; h * w];
    let mut bin_data = vec![0u8; h * w];
    for i in 0..h * w {
        if mask_data[i] == 0 {
            continue; // coated: exactly zero
        }
        let p = (sum[i] / count[i] as f64) as f32;
        prob_data[i] = p;
        bin_data[i] = (p >= threshold) as u8;
    }
    Ok(PredictOutput {
        probability: Raster::new(image.grid, 1, Samples::F32(prob_data))?,
        binary: Raster::new(image.grid, 1, Samples::U8(bin_data))?,
    })
}

/// An all-ones mask on the image grid ("ones-mask inference").
pub fn ones_mask(image: &Raster) -> Raster {
    Raster::new(image.grid, 1, Samples::U8(vec![1; image.grid.pixel_count()]))
        .expect("dimensions agree")
}
