//! Named builders for the architecture family: VGG16/VGG8 baselines, the
//! advanced A-VGG variants, LeNet5, and the A-LeNet5 variants a-e.
//!
//! ```
//! use poolnet::arch::{build_spec, ArchName};
//!
//! assert_eq!(build_spec(ArchName::AVgg16).flatten_width().unwrap(), 8192);
//! assert_eq!(build_spec(ArchName::LeNet5).flatten_width().unwrap(), 400);
//! ```

use crate::error::{Error, Result};
use crate::network::{Activation, ArchItem, ArchSpec, Network};
use crate::pooling::PoolingOp;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchName {
    Vgg16,
    Vgg8,
    AVgg6,
    AVgg8,
    AVgg13,
    AVgg14,
    AVgg16,
    AVgg13Linear,
    AVgg16Linear,
    LeNet5,
    ALeNet5A,
    ALeNet5B,
    ALeNet5C,
    ALeNet5D,
    ALeNet5E,
}

impl ArchName {
    pub const ALL: [ArchName; 15] = [
        ArchName::Vgg16,
        ArchName::Vgg8,
        ArchName::AVgg6,
        ArchName::AVgg8,
        ArchName::AVgg13,
        ArchName::AVgg14,
        ArchName::AVgg16,
        ArchName::AVgg13Linear,
        ArchName::AVgg16Linear,
        ArchName::LeNet5,
        ArchName::ALeNet5A,
        ArchName::ALeNet5B,
        ArchName::ALeNet5C,
        ArchName::ALeNet5D,
        ArchName::ALeNet5E,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchName::Vgg16 => "vgg16",
            ArchName::Vgg8 => "vgg8",
            ArchName::AVgg6 => "a-vgg6",
            ArchName::AVgg8 => "a-vgg8",
            ArchName::AVgg13 => "a-vgg13",
            ArchName::AVgg14 => "a-vgg14",
            ArchName::AVgg16 => "a-vgg16",
            ArchName::AVgg13Linear => "a-vgg13-linear",
            ArchName::AVgg16Linear => "a-vgg16-linear",
            ArchName::LeNet5 => "lenet5",
            ArchName::ALeNet5A => "a-lenet5-a",
            ArchName::ALeNet5B => "a-lenet5-b",
            ArchName::ALeNet5C => "a-lenet5-c",
            ArchName::ALeNet5D => "a-lenet5-d",
            ArchName::ALeNet5E => "a-lenet5-e",
        }
    }
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lowered = s.to_ascii_lowercase();
        ArchName::ALL
            .iter()
            .find(|n| n.as_str() == lowered)
            .copied()
            .ok_or_else(|| Error::UnknownArch(s.to_string()))
    }
}

fn conv(count: usize, depth: usize) -> ArchItem {
    // VGG-family conv: 3x3, single zero padding, batch norm.
    ArchItem::ConvBlock {
        count,
        depth,
        kernel: 3,
        padding: 1,
        batchnorm: true,
    }
}

fn lenet_conv(depth: usize) -> ArchItem {
    // LeNet-family conv: 5x5, no padding, no batch norm.
    ArchItem::ConvBlock {
        count: 1,
        depth,
        kernel: 5,
        padding: 0,
        batchnorm: false,
    }
}

fn fc_stack(hidden: &[usize], activation: Activation) -> Vec<ArchItem> {
    let mut items = vec![ArchItem::Flatten];
    for &units in hidden {
        items.push(ArchItem::Fc { out: units });
        items.push(ArchItem::Activation(activation));
    }
    items.push(ArchItem::SoftmaxOutput { classes: 10 });
    items
}

/// The declarative spec for a named architecture.
pub fn build_spec(name: ArchName) -> ArchSpec {
    use ArchName::*;
    let mut items: Vec<ArchItem> = Vec::new();
    match name {
        Vgg16 => {
            items.extend([conv(2, 64), ArchItem::Pool(PoolingOp::max(2))]);
            items.extend([conv(2, 128), ArchItem::Pool(PoolingOp::max(2))]);
            items.extend([conv(3, 256), ArchItem::Pool(PoolingOp::max(2))]);
            items.extend([conv(3, 512), ArchItem::Pool(PoolingOp::max(2))]);
            items.extend([conv(3, 512), ArchItem::Pool(PoolingOp::max(2))]);
            items.extend(fc_stack(&[4096, 4096], Activation::Relu));
        }
        Vgg8 => {
            for depth in [64, 128, 256, 512, 512] {
                items.extend([conv(1, depth), ArchItem::Pool(PoolingOp::max(2))]);
            }
            items.extend(fc_stack(&[8192, 8192], Activation::Relu));
        }
        AVgg6 => {
            items.extend([
                conv(1, 64),
                conv(1, 128),
                conv(1, 256),
                ArchItem::Pool(PoolingOp::avg(2)),
                conv(2, 512),
                ArchItem::Pool(PoolingOp::max(8)),
            ]);
            items.extend(fc_stack(&[], Activation::Relu));
        }
        AVgg8 => {
            items.extend([
                conv(1, 64),
                conv(1, 128),
                conv(1, 256),
                ArchItem::Pool(PoolingOp::avg(2)),
                conv(2, 512),
                ArchItem::Pool(PoolingOp::max(4)),
            ]);
            items.extend(fc_stack(&[8192, 8192], Activation::Relu));
        }
        AVgg13 | AVgg13Linear => {
            let act = if name == AVgg13Linear {
                Activation::Linear
            } else {
                Activation::Relu
            };
            items.extend([
                conv(2, 64),
                conv(2, 128),
                conv(3, 256),
                ArchItem::Pool(PoolingOp::avg(4)),
                conv(3, 512),
                ArchItem::Pool(PoolingOp::max(4)),
            ]);
            items.extend(fc_stack(&[2048, 2048], act));
        }
        AVgg14 => {
            items.extend([
                conv(2, 64),
                conv(2, 128),
                conv(3, 256),
                ArchItem::Pool(PoolingOp::avg(4)),
                conv(6, 512),
                ArchItem::Pool(PoolingOp::max(2)),
            ]);
            items.extend(fc_stack(&[], Activation::Relu));
        }
        AVgg16 | AVgg16Linear => {
            let act = if name == AVgg16Linear {
                Activation::Linear
            } else {
                Activation::Relu
            };
            items.extend([
                conv(2, 64),
                conv(2, 128),
                conv(3, 256),
                ArchItem::Pool(PoolingOp::avg(4)),
                conv(6, 512),
                ArchItem::Pool(PoolingOp::max(2)),
            ]);
            items.extend(fc_stack(&[4096, 4096], act));
        }
        LeNet5 => {
            items.extend([
                lenet_conv(6),
                ArchItem::Pool(PoolingOp::max(2)),
                lenet_conv(16),
                ArchItem::Pool(PoolingOp::max(2)),
            ]);
            items.extend(fc_stack(&[120, 84], Activation::Relu));
        }
        ALeNet5A | ALeNet5B | ALeNet5C | ALeNet5D | ALeNet5E => {
            items.extend([lenet_conv(6), lenet_conv(16)]);
            for op in lenet_pooling_pair(name) {
                items.push(ArchItem::Pool(op));
            }
            items.extend(fc_stack(&[120, 84], Activation::Relu));
        }
    }
    ArchSpec::new(items)
}

/// Pooling pair of an A-LeNet5 variant, leftmost applied first.
pub fn lenet_pooling_pair(name: ArchName) -> [PoolingOp; 2] {
    match name {
        ArchName::ALeNet5A => [PoolingOp::avg(2), PoolingOp::max(2)],
        ArchName::ALeNet5B => [PoolingOp::max(2), PoolingOp::avg(2)],
        ArchName::ALeNet5C => [PoolingOp::avg(3), PoolingOp::max(2)],
        ArchName::ALeNet5D => [PoolingOp::max(3), PoolingOp::avg(2)],
        ArchName::ALeNet5E => [PoolingOp::avg(2), PoolingOp::max(3)],
        other => panic!("{other} is not an A-LeNet5 variant"),
    }
}

/// Exact trainable-parameter total of a spec.
pub fn param_count(spec: &ArchSpec) -> Result<usize> {
    // Counting by compiling keeps a single source of truth for expansion.
    Ok(Network::build(spec, 0)?.param_count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_widths_match_the_tables() {
        let expect = [
            (ArchName::AVgg6, 2048),
            (ArchName::AVgg8, 8192),
            (ArchName::AVgg13, 2048),
            (ArchName::AVgg14, 8192),
            (ArchName::AVgg16, 8192),
            (ArchName::AVgg13Linear, 2048),
            (ArchName::AVgg16Linear, 8192),
            (ArchName::LeNet5, 400),
            (ArchName::ALeNet5A, 576),
            (ArchName::ALeNet5B, 576),
            (ArchName::ALeNet5C, 256),
            (ArchName::ALeNet5D, 256),
            (ArchName::ALeNet5E, 256),
        ];
        for (name, width) in expect {
            assert_eq!(
                build_spec(name).flatten_width().unwrap(),
                width,
                "flatten width of {name}"
            );
        }
    }

    #[test]
    fn every_builder_shape_traces() {
        for name in ArchName::ALL {
            build_spec(name).shape_trace().unwrap_or_else(|e| {
                panic!("{name} failed to trace: {e}");
            });
        }
    }

    #[test]
    fn avgg_specs_have_ap_strictly_before_mp() {
        use crate::pooling::PoolKind;
        for name in [
            ArchName::AVgg6,
            ArchName::AVgg8,
            ArchName::AVgg13,
            ArchName::AVgg14,
            ArchName::AVgg16,
        ] {
            let spec = build_spec(name);
            let pools: Vec<PoolKind> = spec
                .items
                .iter()
                .filter_map(|item| match item {
                    ArchItem::Pool(op) => Some(op.kind),
                    _ => None,
                })
                .collect();
            assert_eq!(pools, vec![PoolKind::Avg, PoolKind::Max], "{name}");
        }
    }

    #[test]
    fn lenet_fc1_parameter_count() {
        // 400 inputs x 120 units + 120 biases
        let spec = build_spec(ArchName::LeNet5);
        let trace = spec.shape_trace().unwrap();
        let flat = spec.flatten_width().unwrap();
        assert_eq!(flat, 400);
        assert_eq!(flat * 120 + 120, 48120);
        assert_eq!(trace.last().unwrap().0, 10);
    }

    #[test]
    fn single_fc_variant_has_fewer_parameters() {
        let p14 = param_count(&build_spec(ArchName::AVgg14)).unwrap();
        let p16 = param_count(&build_spec(ArchName::AVgg16)).unwrap();
        assert!(p14 < p16, "A-VGG14 ({p14}) should be smaller than A-VGG16 ({p16})");
    }

    #[test]
    fn single_fc_2048_to_10_param_count() {
        let spec = ArchSpec::new(vec![
            ArchItem::ConvBlock {
                count: 1,
                depth: 512,
                kernel: 3,
                padding: 1,
                batchnorm: false,
            },
            ArchItem::Pool(PoolingOp::max(16)),
            ArchItem::Flatten,
            ArchItem::SoftmaxOutput { classes: 10 },
        ]);
        assert_eq!(spec.flatten_width().unwrap(), 2048);
        let total = param_count(&spec).unwrap();
        let conv_params = 512 * 3 * 3 * 3 + 512;
        assert_eq!(total - conv_params, 2048 * 10 + 10);
    }

    #[test]
    fn names_round_trip() {
        for name in ArchName::ALL {
            assert_eq!(name.as_str().parse::<ArchName>().unwrap(), name);
        }
        assert!("a-vgg99".parse::<ArchName>().is_err());
    }
}
