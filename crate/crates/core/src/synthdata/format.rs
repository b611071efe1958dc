//! `SGDS` dataset files.
//!
//! ```text
//! "SGDS" | version: u16
//! spec: classes u32 | per_class u32 | embed_dim u32 | overlap f64 | caption_noise f64
//!       | render_noise f64 | seed u64
//! count: u32
//! { len: u32 | label u32 | image f64[768] | captions f64[10 * embed_dim] }*
//! crc32: u32   (over every preceding byte)
//! ```

use std::fs;
use std::path::Path;

use super::{
    Dataset, DatasetSpec, LabeledExample, TextEmbedding, CAPTIONS_PER_EXAMPLE, IMAGE_CHANNELS,
    IMAGE_LEN, IMAGE_SIDE,
};
use crate::codec::{usize_to_u32, Reader, Writer};
use crate::numcore::Tensor;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SGDS";
pub const DATASET_VERSION: u16 = 1;

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let s = &ds.spec;
    let mut w = Writer::new();
    w.bytes(DATASET_MAGIC);
    w.u16(DATASET_VERSION);
    w.u32(usize_to_u32(s.classes, "class count")?);
    w.u32(usize_to_u32(s.per_class, "per-class count")?);
    w.u32(usize_to_u32(s.embed_dim, "embedding dimension")?);
    w.f64(s.overlap);
    w.f64(s.caption_noise);
    w.f64(s.render_noise);
    w.u64(s.seed);
    w.u32(usize_to_u32(ds.examples.len(), "example count")?);
    for ex in &ds.examples {
        if ex.image.len() != IMAGE_LEN {
            return Err(Error::Dimension(format!(
                "image with {} entries, expected {IMAGE_LEN}",
                ex.image.len()
            )));
        }
        let mut body = Writer::new();
        body.u32(usize_to_u32(ex.label, "label")?);
        body.f64s(ex.image.data());
        for c in &ex.captions {
            if c.dim() != s.embed_dim {
                return Err(Error::Dimension(format!(
                    "caption of dimension {}, dataset declares {}",
                    c.dim(),
                    s.embed_dim
                )));
            }
            body.f64s(c.values());
        }
        let body = body.into_inner();
        w.u32(usize_to_u32(body.len(), "record length")?);
        w.bytes(&body);
    }
    let mut bytes = w.into_inner();
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    Ok(bytes)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader::new(payload);
    r.expect_magic(DATASET_MAGIC)?;
    r.expect_version(DATASET_VERSION)?;
    let spec = DatasetSpec {
        classes: r.u32()? as usize,
        per_class: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        overlap: r.f64()?,
        caption_noise: r.f64()?,
        render_noise: r.f64()?,
        seed: r.u64()?,
    };
    let count = r.u32()? as usize;
    let record_len = 4 + 8 * (IMAGE_LEN + CAPTIONS_PER_EXAMPLE * spec.embed_dim);
    let mut examples = Vec::with_capacity(count.min(r.remaining() / record_len.max(1) + 1));
    for i in 0..count {
        let len = r.u32()? as usize;
        if len != record_len {
            return Err(Error::Format(format!(
                "record {i} has length {len}, expected {record_len}"
            )));
        }
        let mut rec = Reader::new(r.take(len)?);
        let label = rec.u32()? as usize;
        let image = Tensor::new(
            vec![IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS],
            rec.f64s(IMAGE_LEN)?,
        )?;
        let captions = (0..CAPTIONS_PER_EXAMPLE)
            .map(|_| TextEmbedding::new(rec.f64s(spec.embed_dim)?))
            .collect::<Result<Vec<_>>>()?;
        examples.push(LabeledExample {
            image,
            label,
            captions,
        });
    }
    r.finish()?;
    Ok(Dataset { spec, examples })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    crate::io_util::write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::generate_dataset;

    fn tiny() -> Dataset {
        generate_dataset(&DatasetSpec {
            classes: 3,
            per_class: 4,
            ..DatasetSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sgds");
        let ds = tiny();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(fs::read(&path).unwrap(), encode_dataset(&back).unwrap());
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = encode_dataset(&tiny()).unwrap();
        for cut in [0, 2, 100, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_dataset(&bytes[..cut]), Err(Error::Checksum { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn flipped_byte_is_a_checksum_error() {
        let mut bytes = encode_dataset(&tiny()).unwrap();
        bytes[200] ^= 0x40;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn empty_dataset_is_valid() {
        let ds = Dataset {
            spec: DatasetSpec::default(),
            examples: vec![],
        };
        let back = decode_dataset(&encode_dataset(&ds).unwrap()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.spec, ds.spec);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let mut bytes = encode_dataset(&tiny()).unwrap();
        bytes[4] = 2;
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode_dataset(&bytes),
            Err(Error::Version { found: 2, .. })
        ));
    }
}
