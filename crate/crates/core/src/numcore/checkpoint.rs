//! `SGLB` checkpoint files.
//!
//! ```text
//! "SGLB" | version: u16 | blocks: u32
//! block := layers: u32
//!          { in: u32 | out: u32 | activation: u8 | weights: f64[out*in] | biases: f64[out] }*
//!          has_adam: u8
//!          [ step: u64 | lr, beta1, beta2, epsilon: f64 | len: u64 | m: f64[len] | v: f64[len] ]
//! ```
//!
//! All integers and reals are little-endian. A block is one network followed
//! by its optimizer state, if any.

use std::fs;
use std::path::Path;

use super::{Activation, AdamConfig, AdamState, LayerSpec, Network};
use crate::codec::{usize_to_u32, Reader, Writer};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGLB";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointBlock {
    pub network: Network,
    pub adam: Option<AdamState>,
}

pub fn encode_checkpoint(blocks: &[CheckpointBlock]) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u16(CHECKPOINT_VERSION);
    w.u32(usize_to_u32(blocks.len(), "block count")?);
    for block in blocks {
        let net = &block.network;
        w.u32(usize_to_u32(net.layer_count(), "layer count")?);
        for (i, spec) in net.specs().enumerate() {
            w.u32(usize_to_u32(spec.in_width, "layer width")?);
            w.u32(usize_to_u32(spec.out_width, "layer width")?);
            w.u8(spec.activation.tag());
            w.f64s(net.layer_weights(i));
            w.f64s(net.layer_biases(i));
        }
        match &block.adam {
            None => w.u8(0),
            Some(adam) => {
                w.u8(1);
                w.u64(adam.step);
                w.f64(adam.config.learning_rate);
                w.f64(adam.config.beta1);
                w.f64(adam.config.beta2);
                w.f64(adam.config.epsilon);
                w.u64(adam.first_moment.len() as u64);
                w.f64s(&adam.first_moment);
                w.f64s(&adam.second_moment);
            }
        }
    }
    Ok(w.into_inner())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<CheckpointBlock>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let count = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let layers = r.u32()? as usize;
        let mut specs = Vec::with_capacity(layers.min(64));
        let mut values = Vec::with_capacity(layers.min(64));
        for _ in 0..layers {
            let in_width = r.u32()? as usize;
            let out_width = r.u32()? as usize;
            let tag = r.u8()?;
            let activation = Activation::from_tag(tag)
                .ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
            let weights = r.f64s(in_width * out_width)?;
            let biases = r.f64s(out_width)?;
            specs.push(LayerSpec::new(in_width, out_width, activation));
            values.push((weights, biases));
        }
        let mut network = Network::zeroed(&specs)?;
        for (i, (wts, bs)) in values.into_iter().enumerate() {
            network.layer_weights_mut(i).copy_from_slice(&wts);
            network.layer_biases_mut(i).copy_from_slice(&bs);
        }
        let adam = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let config = AdamConfig {
                    learning_rate: r.f64()?,
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    epsilon: r.f64()?,
                };
                let len = r.u64()? as usize;
                if len != network.param_count() {
                    return Err(Error::Format(format!(
                        "optimizer state has {len} moments for {} parameters",
                        network.param_count()
                    )));
                }
                Some(AdamState {
                    config,
                    step,
                    first_moment: r.f64s(len)?,
                    second_moment: r.f64s(len)?,
                })
            }
            other => return Err(Error::Format(format!("bad optimizer flag {other}"))),
        };
        blocks.push(CheckpointBlock { network, adam });
    }
    r.finish()?;
    Ok(blocks)
}

pub fn save_checkpoint(path: &Path, blocks: &[CheckpointBlock]) -> Result<()> {
    crate::io_util::write_atomic(path, &encode_checkpoint(blocks)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<CheckpointBlock>> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_blocks(seed: u64) -> Vec<CheckpointBlock> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::random(
            &[
                LayerSpec::new(3, 4, Activation::LeakyRelu),
                LayerSpec::new(4, 2, Activation::Sigmoid),
            ],
            &mut rng,
        )
        .unwrap();
        let mut adam = AdamState::for_network(&net, AdamConfig::default());
        adam.step = 17;
        adam.first_moment[2] = -0.125;
        adam.second_moment[5] = 3.5e-9;
        let other =
            Network::random(&[LayerSpec::new(2, 2, Activation::Tanh)], &mut rng).unwrap();
        vec![
            CheckpointBlock {
                network: net,
                adam: Some(adam),
            },
            CheckpointBlock {
                network: other,
                adam: None,
            },
        ]
    }

    #[test]
    fn header_layout() {
        let bytes = encode_checkpoint(&sample_blocks(1)).unwrap();
        assert_eq!(&bytes[..4], b"SGLB");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        // first block: layer count, then in=3, out=4, tag=1
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[18..22].try_into().unwrap()), 4);
        assert_eq!(bytes[22], 1);
    }

    #[test]
    fn truncated_and_versioned_inputs_fail_cleanly() {
        let bytes = encode_checkpoint(&sample_blocks(2)).unwrap();
        for cut in [0, 3, 9, 30, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err());
        }
        let mut bumped = bytes.clone();
        bumped[4] = 9;
        assert!(matches!(
            decode_checkpoint(&bumped),
            Err(Error::Version { found: 9, .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>()) {
            let blocks = sample_blocks(seed);
            let bytes = encode_checkpoint(&blocks).unwrap();
            let back = decode_checkpoint(&bytes).unwrap();
            prop_assert_eq!(&back, &blocks);
            prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        }
    }
}
