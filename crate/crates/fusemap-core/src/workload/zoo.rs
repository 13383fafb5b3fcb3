//! Built-in workload transcriptions.
//!
//! Transcription conventions, applied uniformly:
//!
//! * Strides and pooling are folded into each layer's recorded output `y`/`x`.
//!   ResNet stems fold their following max-pool, so residual edges that
//!   reference the stem see the post-pool shape.
//! * Classifier heads are written in the six-loop notation. VGG16's first FC
//!   layer consumes a 7x7 spatial map and is recorded as a 7x7 kernel over a
//!   1x1 output; later FC layers are pure 1x1.
//! * Residual adds are recorded via `skip_from` wherever the producer output
//!   shape legally matches a consumer input shape: on the block's last
//!   convolution for basic blocks, or on the layer consuming the add result
//!   for bottleneck and inverted-residual blocks. Projection shortcuts (and
//!   their 1x1 downsample convolutions) are not representable in a linear
//!   chain and are omitted.
//! * Depthwise convolutions keep their shapes but are costed as full
//!   convolutions; grouping is out of scope.

use super::{InputDims, LayerShape, Workload, WorkloadError};

pub(crate) const NAMES: [&str; 5] = ["vgg16", "resnet18", "resnet50", "mobilenet_v2", "mnasnet"];

/// Names of the built-in workloads.
pub fn builtin_names() -> &'static [&'static str] {
    &NAMES
}

/// Returns a built-in workload by name.
pub fn builtin(name: &str) -> Result<Workload, WorkloadError> {
    match name {
        "vgg16" => Ok(vgg16()),
        "resnet18" => Ok(resnet18()),
        "resnet50" => Ok(resnet50()),
        "mobilenet_v2" => Ok(mobilenet_v2()),
        "mnasnet" => Ok(mnasnet()),
        other => Err(WorkloadError::UnknownBuiltin(other.to_string())),
    }
}

fn conv(name: impl Into<String>, k: u64, c: u64, y: u64, x: u64, r: u64, s: u64) -> LayerShape {
    LayerShape { name: name.into(), k, c, y, x, r, s, skip_from: None }
}

fn imagenet_input() -> InputDims {
    InputDims { c: 3, y: 224, x: 224 }
}

fn vgg16() -> Workload {
    let mut layers = Vec::new();
    let stages: [(u64, usize, u64); 5] =
        [(64, 2, 224), (128, 2, 112), (256, 3, 56), (512, 3, 28), (512, 3, 14)];
    let mut in_ch = 3;
    for (si, &(k, n, d)) in stages.iter().enumerate() {
        for b in 0..n {
            layers.push(conv(format!("conv{}_{}", si + 1, b + 1), k, in_ch, d, d, 3, 3));
            in_ch = k;
        }
    }
    layers.push(conv("fc6", 4096, 512, 1, 1, 7, 7));
    layers.push(conv("fc7", 4096, 4096, 1, 1, 1, 1));
    layers.push(conv("fc8", 1000, 4096, 1, 1, 1, 1));
    Workload { name: "vgg16".into(), input: imagenet_input(), bytes_per_element: 2, layers }
}

fn resnet18() -> Workload {
    let mut layers = vec![conv("conv1", 64, 3, 56, 56, 7, 7)];
    let stages: [(u64, u64); 4] = [(64, 56), (128, 28), (256, 14), (512, 7)];
    let mut in_ch = 64;
    // Index of the layer carrying the previous block's output.
    let mut prev_out = 0usize;
    for (si, &(w, d)) in stages.iter().enumerate() {
        for b in 0..2 {
            let identity = w == in_ch;
            layers.push(conv(format!("layer{}.{}.conv1", si + 1, b), w, in_ch, d, d, 3, 3));
            let mut c2 = conv(format!("layer{}.{}.conv2", si + 1, b), w, w, d, d, 3, 3);
            if identity {
                // Basic-block add folded into the closing convolution.
                c2.skip_from = Some(prev_out);
            }
            layers.push(c2);
            prev_out = layers.len() - 1;
            in_ch = w;
        }
    }
    layers.push(conv("fc", 1000, 512, 1, 1, 1, 1));
    Workload { name: "resnet18".into(), input: imagenet_input(), bytes_per_element: 2, layers }
}

fn resnet50() -> Workload {
    let mut layers = vec![conv("conv1", 64, 3, 56, 56, 7, 7)];
    let stages: [(u64, usize, u64, u64); 4] =
        [(64, 3, 56, 56), (128, 4, 56, 28), (256, 6, 28, 14), (512, 3, 14, 7)];
    let mut in_ch = 64;
    let mut prev_out = 0usize; // layer carrying the previous block's output
    let mut prev_prev_out = 0usize;
    let mut prev_was_identity = false;
    for (si, &(w, n, d_in, d_out)) in stages.iter().enumerate() {
        for b in 0..n {
            let d1 = if b == 0 { d_in } else { d_out };
            let mut c1 = conv(format!("layer{}.{}.conv1", si + 1, b), w, in_ch, d1, d1, 1, 1);
            if prev_was_identity {
                // This layer consumes the previous block's residual sum.
                c1.skip_from = Some(prev_prev_out);
            }
            layers.push(c1);
            layers.push(conv(format!("layer{}.{}.conv2", si + 1, b), w, w, d_out, d_out, 3, 3));
            layers.push(conv(format!("layer{}.{}.conv3", si + 1, b), 4 * w, w, d_out, d_out, 1, 1));
            prev_prev_out = prev_out;
            prev_out = layers.len() - 1;
            prev_was_identity = b > 0;
            in_ch = 4 * w;
        }
    }
    layers.push(conv("fc", 1000, 2048, 1, 1, 1, 1));
    Workload { name: "resnet50".into(), input: imagenet_input(), bytes_per_element: 2, layers }
}

/// Stage of inverted-residual blocks: (expansion factor, output channels,
/// repeats, first-block stride, depthwise kernel).
type IrStage = (u64, u64, usize, u64, u64);

fn inverted_residual_net(name: &str, stages: &[IrStage]) -> Workload {
    let mut layers = vec![conv("conv_stem", 32, 3, 112, 112, 3, 3)];
    let mut in_ch = 32;
    let mut spatial = 112;
    let mut prev_out = 0usize;
    let mut prev_prev_out = 0usize;
    let mut prev_was_identity = false;
    for (si, &(t, out, n, stride, kernel)) in stages.iter().enumerate() {
        for b in 0..n {
            let d_in = spatial;
            let d_out = if b == 0 { spatial / stride } else { spatial };
            let tag = format!("block{}.{}", si, b);
            let expanded = in_ch * t;
            let mut first = if t == 1 {
                conv(format!("{tag}.dw"), in_ch, in_ch, d_out, d_out, kernel, kernel)
            } else {
                conv(format!("{tag}.expand"), expanded, in_ch, d_in, d_in, 1, 1)
            };
            if prev_was_identity {
                first.skip_from = Some(prev_prev_out);
            }
            layers.push(first);
            if t != 1 {
                layers.push(conv(format!("{tag}.dw"), expanded, expanded, d_out, d_out, kernel, kernel));
            }
            layers.push(conv(format!("{tag}.project"), out, expanded, d_out, d_out, 1, 1));
            prev_prev_out = prev_out;
            prev_out = layers.len() - 1;
            prev_was_identity = b > 0;
            in_ch = out;
            spatial = d_out;
        }
    }
    let mut head = conv("conv_head", 1280, in_ch, spatial, spatial, 1, 1);
    if prev_was_identity {
        head.skip_from = Some(prev_prev_out);
    }
    layers.push(head);
    layers.push(conv("fc", 1000, 1280, 1, 1, 1, 1));
    Workload { name: name.into(), input: imagenet_input(), bytes_per_element: 2, layers }
}

fn mobilenet_v2() -> Workload {
    inverted_residual_net(
        "mobilenet_v2",
        &[
            (1, 16, 1, 1, 3),
            (6, 24, 2, 2, 3),
            (6, 32, 3, 2, 3),
            (6, 64, 4, 2, 3),
            (6, 96, 3, 1, 3),
            (6, 160, 3, 2, 3),
            (6, 320, 1, 1, 3),
        ],
    )
}

fn mnasnet() -> Workload {
    inverted_residual_net(
        "mnasnet",
        &[
            (1, 16, 1, 1, 3),
            (3, 24, 3, 2, 3),
            (3, 40, 3, 2, 5),
            (6, 80, 3, 2, 5),
            (6, 96, 2, 1, 3),
            (6, 192, 4, 2, 5),
            (6, 320, 1, 1, 3),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skip_edges(w: &Workload) -> Vec<(usize, usize)> {
        w.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.skip_from.map(|p| (i, p)))
            .collect()
    }

    #[test]
    fn every_builtin_validates() {
        for name in builtin_names() {
            let w = builtin(name).unwrap();
            w.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&w.name, name);
        }
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!(builtin("vgg19"), Err(WorkloadError::UnknownBuiltin(_))));
    }

    #[test]
    fn vgg16_structure() {
        let w = builtin("vgg16").unwrap();
        assert_eq!(w.num_layers(), 16);
        let first = &w.layers[0];
        assert_eq!((first.k, first.c, first.y, first.x, first.r, first.s), (64, 3, 224, 224, 3, 3));
        assert!(skip_edges(&w).is_empty());
        let total_macs: u64 = w.layers.iter().map(|l| l.macs(1)).sum();
        assert_eq!(total_macs, 15_470_264_320);
    }

    #[test]
    fn resnet18_structure() {
        let w = builtin("resnet18").unwrap();
        assert_eq!(w.num_layers(), 18);
        // One residual edge per identity block, closing on the block's second conv.
        assert_eq!(skip_edges(&w), vec![(2, 0), (4, 2), (8, 6), (12, 10), (16, 14)]);
        let total_macs: u64 = w.layers.iter().map(|l| l.macs(1)).sum();
        assert_eq!(total_macs, 1_706_295_296);
    }

    #[test]
    fn resnet50_structure() {
        let w = builtin("resnet50").unwrap();
        assert_eq!(w.num_layers(), 50);
        let edges = skip_edges(&w);
        assert_eq!(edges.len(), 11);
        // Identity adds inside stage 1 and the hand-off into stage 2.
        assert_eq!(&edges[..2], &[(7, 3), (10, 6)]);
        // conv2 of the first stride-2 bottleneck.
        let l = &w.layers[11];
        assert_eq!((l.k, l.c, l.y, l.x, l.r, l.s), (128, 128, 28, 28, 3, 3));
    }

    #[test]
    fn mobilenet_v2_structure() {
        let w = builtin("mobilenet_v2").unwrap();
        assert_eq!(w.num_layers(), 53);
        assert_eq!(skip_edges(&w).len(), 10);
        let head = &w.layers[51];
        assert_eq!((head.k, head.c, head.y, head.x), (1280, 320, 7, 7));
    }

    #[test]
    fn mnasnet_structure() {
        let w = builtin("mnasnet").unwrap();
        assert_eq!(w.num_layers(), 53);
        assert_eq!(skip_edges(&w).len(), 10);
        // 5x5 depthwise stages survive transcription.
        assert!(w.layers.iter().any(|l| l.r == 5 && l.s == 5));
    }
}
