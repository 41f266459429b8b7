//! TXR1 container.
//!
//! ```text
//! "TXR1"                      4 ASCII bytes
//! header_len                  u32 LE
//! header                      UTF-8 JSON, `header_len` bytes
//! example_count               u32 LE
//! offsets                     example_count × u64 LE, relative to payload start
//! payload                     example records
//! crc                         u32 LE, CRC-32 (IEEE) over payload
//! ```
//!
//! Example record: `u8 task code, u8 arity, attribute bytes`, then for the
//! sender and receiver sides: `u8 item count`, and per item
//! `u8 object count, (u8 row, u8 col, u8 color, u8 texture) per object, u8 label`.

use std::fs::{self, File};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    for_each_record, holdout_for, render_assets, DatasetConfig, DatasetFile, Example, LabeledScene,
};
use crate::error::{Error, FormatError, Result};
use crate::render::{Rgb, TextureMask};
use crate::sampler::{HoldoutPartition, SplitKind};
use crate::scene::{AttributeTuple, GridScene, ObjectSpec, PlacedObject, TaskType};

pub const MAGIC: &[u8; 4] = b"TXR1";
pub const FORMAT_VERSION: u32 = 1;
pub const ANNOTATION_GRAMMAR: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// JSON header. Everything needed to render any stored scene lives here.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub annotation_grammar: u32,
    /// Config with the texture seed resolved.
    pub config: DatasetConfig,
    pub image: ImageGeometry,
    /// One RGB triple per color id.
    pub palette: Vec<Rgb>,
    pub mask_dim: u8,
    /// One mask per texture id: row-major bits packed MSB-first, hex encoded.
    pub texture_masks: Vec<String>,
    pub holdout: HoldoutPartition,
    pub example_count: u64,
    pub payload_bytes: u64,
}

impl Header {
    pub fn new(cfg: &DatasetConfig, part: &HoldoutPartition) -> Result<Self> {
        let mut config = cfg.clone();
        config.render.texture_seed = Some(cfg.texture_seed());
        let (palette, masks) = render_assets(&config)?;
        let side = config.image_side();
        let count = config.examples_per_split.total() as u64;
        Ok(Header {
            format_version: FORMAT_VERSION,
            annotation_grammar: ANNOTATION_GRAMMAR,
            image: ImageGeometry {
                height: side,
                width: side,
                channels: 3,
            },
            palette: palette.colors().to_vec(),
            mask_dim: config.render.mask_dim,
            texture_masks: masks.iter().map(TextureMask::to_hex).collect(),
            holdout: part.clone(),
            example_count: count,
            payload_bytes: count * config.record_len() as u64,
            config,
        })
    }

    pub fn decode_masks(&self) -> Result<Vec<TextureMask>> {
        self.texture_masks
            .iter()
            .map(|h| TextureMask::from_hex(self.mask_dim, h))
            .collect()
    }

    fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("header serializes")
    }
}

pub(crate) fn encode_record(ex: &Example) -> Vec<u8> {
    let tuple = ex.hypothesis.tuple();
    let mut out = Vec::new();
    out.push(tuple.task.code());
    out.push(ex.hypothesis.arity() as u8);
    out.extend_from_slice(&tuple.values);
    for (_, items) in ex.sides() {
        out.push(items.len() as u8);
        for item in items {
            let objs = item.scene.objects();
            out.push(objs.len() as u8);
            for o in objs {
                out.extend_from_slice(&[o.row, o.col, o.spec.color.0, o.spec.texture.0]);
            }
            out.push(item.label as u8);
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| malformed(format!("record ends at byte {}", self.buf.len())))?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

fn malformed(msg: String) -> Error {
    FormatError::Malformed(msg).into()
}

fn truncated(msg: &str) -> Error {
    FormatError::Truncated(msg.into()).into()
}

fn decode_side(c: &mut Cursor<'_>, grid: u8) -> Result<Vec<LabeledScene>> {
    let n = c.u8()? as usize;
    (0..n)
        .map(|_| {
            let k = c.u8()? as usize;
            let mut objects = Vec::with_capacity(k);
            for _ in 0..k {
                let b = c.take(4)?;
                objects.push(PlacedObject {
                    spec: ObjectSpec::new(b[2], b[3]),
                    row: b[0],
                    col: b[1],
                });
            }
            let scene = GridScene::new(grid, objects).map_err(|e| malformed(e.to_string()))?;
            let label = match c.u8()? {
                0 => false,
                1 => true,
                other => return Err(malformed(format!("label byte {other}"))),
            };
            Ok(LabeledScene { scene, label })
        })
        .collect()
}

pub(crate) fn decode_record(rec: &[u8], grid: u8, split: SplitKind) -> Result<Example> {
    let mut c = Cursor { buf: rec, pos: 0 };
    let code = c.u8()?;
    let task = TaskType::from_code(code).ok_or_else(|| malformed(format!("task code {code}")))?;
    let arity = c.u8()? as usize;
    let values = c.take(task.num_attrs(arity))?.to_vec();
    let hypothesis = AttributeTuple { task, values }
        .to_hypothesis()
        .map_err(|e| malformed(e.to_string()))?;
    let sender = decode_side(&mut c, grid)?;
    let receiver = decode_side(&mut c, grid)?;
    if c.pos != rec.len() {
        return Err(malformed(format!(
            "{} trailing record bytes",
            rec.len() - c.pos
        )));
    }
    Ok(Example {
        hypothesis,
        sender,
        receiver,
        split,
    })
}

/// Byte offset of an item's label within a record.
pub(crate) fn label_position(rec: &[u8], receiver: bool, item: usize) -> Result<usize> {
    let mut c = Cursor { buf: rec, pos: 0 };
    let task = TaskType::from_code(c.u8()?).ok_or_else(|| malformed("task code".into()))?;
    let arity = c.u8()? as usize;
    c.take(task.num_attrs(arity))?;
    for side in 0..2 {
        let n = c.u8()? as usize;
        for i in 0..n {
            let k = c.u8()? as usize;
            c.take(4 * k)?;
            if (side == 1) == receiver && i == item {
                return Ok(c.pos);
            }
            c.u8()?;
        }
    }
    Err(Error::IndexOutOfRange {
        index: item,
        len: 0,
    })
}

fn prefix(header: &Header, count: usize) -> Vec<u8> {
    let hb = header.to_bytes();
    let mut out = Vec::with_capacity(12 + hb.len() + 8 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(hb.len() as u32).to_le_bytes());
    out.extend_from_slice(&hb);
    out.extend_from_slice(&(count as u32).to_le_bytes());
    out
}

pub fn serialize_dataset(ds: &DatasetFile) -> Vec<u8> {
    let mut out = prefix(&ds.header, ds.offsets.len());
    for o in &ds.offsets {
        out.extend_from_slice(&o.to_le_bytes());
    }
    out.extend_from_slice(&ds.payload);
    out.extend_from_slice(&crc32fast::hash(&ds.payload).to_le_bytes());
    out
}

pub fn write_dataset(ds: &DatasetFile, path: &Path) -> Result<()> {
    fs::write(path, serialize_dataset(ds))?;
    Ok(())
}

/// Builds and writes a dataset without holding the payload in memory.
///
/// Produces the same bytes as `write_dataset(build_dataset(cfg))`.
pub fn generate_to_path(cfg: &DatasetConfig, path: &Path) -> Result<Header> {
    cfg.validate()?;
    let part = holdout_for(cfg)?;
    let header = Header::new(cfg, &part)?;
    let count = header.example_count as usize;
    let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
    let head = prefix(&header, count);
    out.write_all(&head)?;
    let offsets_at = head.len() as u64;
    out.write_all(&vec![0u8; 8 * count])?;

    let mut offsets = Vec::with_capacity(count);
    let mut written = 0u64;
    let mut crc = crc32fast::Hasher::new();
    for_each_record(cfg, &part, |rec| {
        offsets.push(written);
        written += rec.len() as u64;
        crc.update(rec);
        out.write_all(rec)?;
        Ok(())
    })?;
    if written != header.payload_bytes {
        return Err(Error::Config(format!(
            "payload is {written} bytes, header promised {}",
            header.payload_bytes
        )));
    }
    out.write_all(&crc.finalize().to_le_bytes())?;
    out.seek(SeekFrom::Start(offsets_at))?;
    let table: Vec<u8> = offsets.iter().flat_map(|o| o.to_le_bytes()).collect();
    out.write_all(&table)?;
    out.flush()?;
    Ok(header)
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or_else(|| truncated(what))?;
    Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
}

/// Validates and parses a TXR1 byte buffer.
///
/// Checks run in order: magic, header, version, layout length, checksum,
/// offset table.
pub fn parse_dataset(bytes: &[u8]) -> Result<DatasetFile> {
    let magic = bytes.get(..4).ok_or_else(|| truncated("missing magic"))?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic.try_into().expect("4 bytes")).into());
    }
    let header_len = read_u32(bytes, 4, "missing header length")? as usize;
    let header_bytes = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| truncated("header cut short"))?;
    let raw: serde_json::Value =
        serde_json::from_slice(header_bytes).map_err(|e| malformed(format!("header: {e}")))?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| malformed("header lacks format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(FormatError::UnsupportedVersion(version as u32).into());
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| malformed(format!("header: {e}")))?;

    let count_at = 8 + header_len;
    let count = read_u32(bytes, count_at, "missing example count")? as usize;
    if count as u64 != header.example_count {
        return Err(malformed(format!(
            "example count {count} disagrees with header ({})",
            header.example_count
        )));
    }
    let rec_len = header.config.record_len() as u64;
    if header.payload_bytes != count as u64 * rec_len {
        return Err(malformed(format!(
            "payload of {} bytes does not hold {count} records of {rec_len} bytes",
            header.payload_bytes
        )));
    }
    let offsets_at = count_at + 4;
    let payload_at = offsets_at + 8 * count;
    let expected = payload_at as u64 + header.payload_bytes + 4;
    if (bytes.len() as u64) < expected {
        return Err(truncated(&format!(
            "file has {} bytes, layout needs {expected}",
            bytes.len()
        )));
    }
    if bytes.len() as u64 > expected {
        return Err(malformed(format!(
            "{} trailing bytes after checksum",
            bytes.len() as u64 - expected
        )));
    }
    let payload_end = payload_at + header.payload_bytes as usize;
    let payload = &bytes[payload_at..payload_end];
    let stored = read_u32(bytes, payload_end, "missing checksum")?;
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::ChecksumMismatch { stored, computed }.into());
    }

    let offsets: Vec<u64> = bytes[offsets_at..payload_at]
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    // Records have a fixed length, so the table is fully determined.
    if let Some(i) = (0..count).find(|&i| offsets[i] != i as u64 * rec_len) {
        return Err(malformed(format!(
            "offset {i} is {}, expected {}",
            offsets[i],
            i as u64 * rec_len
        )));
    }
    DatasetFile::from_parts(header, offsets, payload.to_vec())
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    parse_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, SplitCounts};
    use crate::sampler::TaskSpec;

    fn small() -> DatasetConfig {
        let mut cfg = DatasetConfig::desk(TaskSpec::new(TaskType::Rel, 2), 99);
        cfg.examples_per_split = SplitCounts::uniform_eval(5, 2);
        cfg.images_per_side = 4;
        cfg.positives_per_side = 2;
        cfg
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let ds = build_dataset(&small()).unwrap();
        let back = parse_dataset(&serialize_dataset(&ds)).unwrap();
        assert_eq!(back, ds);
        for i in 0..ds.len() {
            assert_eq!(back.example(i).unwrap(), ds.example(i).unwrap());
        }
    }

    #[test]
    fn streaming_writer_matches_in_memory() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txr");
        generate_to_path(&cfg, &path).unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            serialize_dataset(&build_dataset(&cfg).unwrap())
        );
    }

    #[test]
    fn layout_is_bit_exact() {
        let ds = build_dataset(&small()).unwrap();
        let bytes = serialize_dataset(&ds);
        assert_eq!(&bytes[..4], b"TXR1");
        let hl = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + hl]).unwrap();
        assert_eq!(header["format_version"], 1);
        let count = u32::from_le_bytes(bytes[8 + hl..12 + hl].try_into().unwrap()) as usize;
        assert_eq!(count, 13);
        let first = u64::from_le_bytes(bytes[12 + hl..20 + hl].try_into().unwrap());
        assert_eq!(first, 0);
        let payload_at = 12 + hl + 8 * count;
        // Rel record: task code 3, arity 2, five attribute bytes, then 4 sender items.
        assert_eq!(bytes[payload_at], 3);
        assert_eq!(bytes[payload_at + 1], 2);
        assert_eq!(bytes[payload_at + 7], 4);
        let crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[payload_at..bytes.len() - 4]));
    }

    #[test]
    fn integrity_errors_are_distinct() {
        let bytes = serialize_dataset(&build_dataset(&small()).unwrap());

        let mut corrupt = bytes.clone();
        let mid = bytes.len() - 40;
        corrupt[mid] ^= 0x55;
        assert!(matches!(
            parse_dataset(&corrupt),
            Err(Error::Format(FormatError::ChecksumMismatch { .. }))
        ));

        let mut magic = bytes.clone();
        magic[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            parse_dataset(&magic),
            Err(Error::Format(FormatError::BadMagic(m))) if &m == b"XXXX"
        ));

        for cut in [2, 10, 300, bytes.len() - 100, bytes.len() - 1] {
            assert!(
                matches!(
                    parse_dataset(&bytes[..cut]),
                    Err(Error::Format(FormatError::Truncated(_)))
                ),
                "cut at {cut}"
            );
        }

        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            parse_dataset(&extra),
            Err(Error::Format(FormatError::Malformed(_)))
        ));
    }

    #[test]
    fn unsupported_version_detected() {
        let ds = build_dataset(&small()).unwrap();
        let mut header = ds.header().clone();
        header.format_version = 2;
        let mut bytes = prefix(&header, ds.len());
        for o in ds.offsets() {
            bytes.extend_from_slice(&o.to_le_bytes());
        }
        bytes.extend_from_slice(ds.payload());
        bytes.extend_from_slice(&crc32fast::hash(ds.payload()).to_le_bytes());
        assert!(matches!(
            parse_dataset(&bytes),
            Err(Error::Format(FormatError::UnsupportedVersion(2)))
        ));
    }
}
