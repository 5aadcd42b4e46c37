//! Architecture tables for each case study.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::layers::{Activation, LayerSpec};
use super::model::RatioModel;
use crate::space::Case;
use crate::{Error, Result};

/// SIS widths: `(embedder, conv1d channels, dense hidden)`.
pub fn sis_table(label: &str) -> Result<(&'static [usize], &'static [usize], &'static [usize])> {
    Ok(match normalize(label).as_str() {
        "3K" => (&[16, 8], &[8, 12, 16], &[30, 12]),
        "10K" => (&[32, 16], &[16, 24, 24], &[52, 32]),
        "30K" => (&[64, 32], &[32, 32, 48], &[64, 64, 32]),
        "100K" => (&[64, 64], &[64, 64, 96], &[128, 64, 32]),
        _ => return Err(unknown(Case::Sis, label)),
    })
}

/// GP/STP widths: `(conv2d channels, dense hidden)`.
pub fn spatial_table(label: &str) -> Result<(&'static [usize], &'static [usize])> {
    Ok(match normalize(label).as_str() {
        "30K" => (&[40, 40, 32], &[48, 32]),
        "100K" => (&[80, 80, 44], &[64, 64, 32]),
        "300K" => (&[128, 128, 108], &[128, 80, 64]),
        "1M" => (&[256, 256, 136], &[256, 176, 96]),
        _ => return Err(unknown(Case::Gp, label)),
    })
}

/// Dense widths of the toy harness network.
pub fn toy_table(label: &str) -> Result<&'static [usize]> {
    match normalize(label).as_str() {
        "SMALL" | "TOY" => Ok(&[32, 32]),
        _ => Err(unknown(Case::Toy, label)),
    }
}

/// Nominal parameter count encoded in a size label (`"30K"` → 30 000).
pub fn nominal_size(label: &str) -> Option<usize> {
    let l = normalize(label);
    let (digits, scale) = if let Some(d) = l.strip_suffix('K') {
        (d, 1_000)
    } else if let Some(d) = l.strip_suffix('M') {
        (d, 1_000_000)
    } else {
        return None;
    };
    digits.parse::<usize>().ok().map(|v| v * scale)
}

fn normalize(label: &str) -> String {
    let l = label.trim().to_ascii_uppercase();
    l.strip_prefix("SIZE").map(|s| s.trim().to_string()).unwrap_or(l)
}

fn unknown(case: Case, label: &str) -> Error {
    Error::UnknownSizeLabel { case: case.name(), label: label.to_string() }
}

/// Conv+pool blocks a `side × side` field supports, at most three. A pool
/// that would leave a zero extent is dropped.
pub fn max_conv_blocks(side: usize) -> usize {
    let mut extent = side;
    for b in 0..3 {
        if extent < 3 {
            return b;
        }
        extent -= 2;
        if extent >= 2 {
            extent /= 2;
        }
    }
    3
}

fn dense_head(stack: &mut Vec<LayerSpec>, hidden: &[usize]) {
    stack.push(LayerSpec::ConcatTheta);
    for &w in hidden {
        stack.push(LayerSpec::Dense { outputs: w });
        stack.push(LayerSpec::Activation(Activation::Silu));
    }
    stack.push(LayerSpec::Dense { outputs: 1 });
}

/// Layer stack for `(case, label)` on the given input shape.
///
/// `conv_blocks` only applies to the spatial cases and defaults to
/// [`max_conv_blocks`] of the grid side.
pub fn layer_stack(
    case: Case,
    label: &str,
    input_shape: &[usize],
    conv_blocks: Option<usize>,
) -> Result<Vec<LayerSpec>> {
    let mut stack = Vec::new();
    match case {
        Case::Sis => {
            let (embed, conv, dense) = sis_table(label)?;
            for &w in embed {
                stack.push(LayerSpec::Dense { outputs: w });
                stack.push(LayerSpec::Activation(Activation::Silu));
            }
            stack.push(LayerSpec::TransposeTimeChannel);
            for &c in conv {
                stack.push(LayerSpec::Conv1d { out_channels: c, kernel: 5 });
                stack.push(LayerSpec::Activation(Activation::Silu));
            }
            stack.push(LayerSpec::Flatten);
            dense_head(&mut stack, dense);
        }
        Case::Gp | Case::Stp => {
            let (conv, dense) = spatial_table(label)?;
            let side = match input_shape {
                [1, h, w] if h == w => *h,
                _ => return Err(Error::ShapeMismatch("spatial networks take a [1, side, side] field".into())),
            };
            let blocks = conv_blocks.unwrap_or_else(|| max_conv_blocks(side));
            if blocks == 0 || blocks > 3 {
                return Err(Error::InvalidArgument("spatial networks use 1 to 3 conv blocks".into()));
            }
            let mut extent = side;
            for &c in &conv[..blocks] {
                stack.push(LayerSpec::Conv2d { out_channels: c, kernel: 3 });
                stack.push(LayerSpec::Activation(Activation::Relu));
                extent = extent.saturating_sub(2);
                if extent >= 2 {
                    stack.push(LayerSpec::AvgPool2d);
                    extent /= 2;
                }
            }
            stack.push(LayerSpec::Flatten);
            dense_head(&mut stack, dense);
        }
        Case::Toy => {
            let dense = toy_table(label)?;
            stack.push(LayerSpec::Flatten);
            dense_head(&mut stack, dense);
        }
    }
    Ok(stack)
}

/// Builds and initializes the network for `(case, label)`.
pub fn build_architecture(
    case: Case,
    label: &str,
    input_shape: &[usize],
    conv_blocks: Option<usize>,
    seed: u64,
) -> Result<RatioModel> {
    let stack = layer_stack(case, label, input_shape, conv_blocks)?;
    RatioModel::new(input_shape, case.space().dim(), &stack, seed)
}
