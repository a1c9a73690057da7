//! Small reference architectures with comparable parameter budgets.

use crate::layer::LayerSpec;
use crate::model::ModelSpec;

const PLANAR_WIDTHS: [usize; 4] = [8, 16, 32, 64];
const VOLUMETRIC_WIDTHS: [usize; 4] = [4, 8, 16, 48];

fn planar_backbone(in_channels: usize, classes: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut c = in_channels;
    for (i, &w) in PLANAR_WIDTHS.iter().enumerate() {
        layers.push(LayerSpec::Conv2d {
            in_channels: c,
            out_channels: w,
            kernel: 3,
        });
        layers.push(LayerSpec::Relu);
        if i + 1 < PLANAR_WIDTHS.len() {
            layers.push(LayerSpec::MaxPool);
        }
        c = w;
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(LayerSpec::Dense {
        inputs: c,
        outputs: classes,
    });
    layers.push(LayerSpec::SigmoidHead);
    layers
}

/// Four 3×3 convolution blocks on a `3×size×size` image.
pub fn tiny2d(size: usize, classes: usize) -> ModelSpec {
    ModelSpec {
        name: "tiny2d".into(),
        input_shape: vec![3, size, size],
        layers: planar_backbone(3, classes),
    }
}

/// Shrinking module on a `1×size³` volume followed by the planar backbone.
pub fn tiny2p5d(size: usize, classes: usize) -> ModelSpec {
    let mut layers = vec![LayerSpec::Shrink2p5d { size }];
    layers.extend(planar_backbone(3, classes));
    ModelSpec {
        name: "tiny2p5d".into(),
        input_shape: vec![1, size, size, size],
        layers,
    }
}

/// Four 3×3×3 convolution blocks on a `1×size³` volume.
pub fn tiny3d(size: usize, classes: usize) -> ModelSpec {
    let mut layers = Vec::new();
    let mut c = 1;
    for (i, &w) in VOLUMETRIC_WIDTHS.iter().enumerate() {
        layers.push(LayerSpec::Conv3d {
            in_channels: c,
            out_channels: w,
            kernel: 3,
        });
        layers.push(LayerSpec::Relu);
        if i + 1 < VOLUMETRIC_WIDTHS.len() {
            layers.push(LayerSpec::MaxPool);
        }
        c = w;
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(LayerSpec::Dense {
        inputs: c,
        outputs: classes,
    });
    layers.push(LayerSpec::SigmoidHead);
    ModelSpec {
        name: "tiny3d".into(),
        input_shape: vec![1, size, size, size],
        layers,
    }
}

pub fn by_name(name: &str, size: usize, classes: usize) -> Option<ModelSpec> {
    match name {
        "tiny2d" => Some(tiny2d(size, classes)),
        "tiny2p5d" => Some(tiny2p5d(size, classes)),
        "tiny3d" => Some(tiny3d(size, classes)),
        _ => None,
    }
}
