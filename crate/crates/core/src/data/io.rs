//! On-disk clip and dataset layout.
//!
//! Clip directory:
//! - `meta.json`  — verb_id, noun_id, seed, dims, format_version
//! - `tracks.json` — per-frame arrays `[x1, y1, x2, y2, object_id, present]`
//! - `frames.bin` — magic `SFCR`, format_version u32 LE, then T,H,W,C as
//!   u32 LE, then row-major f32 LE values
//!
//! Dataset root: `index.json` listing clip dirs, `splits/<name>.json`
//! holding serialized split specs. All round-trips are bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{quantized_bytes, StoredClip};
use super::{BoxPx, ClipDims, ClipRecord, Dataset, DatasetConfig, SplitSpec, TrackEntry};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FRAMES_MAGIC: [u8; 4] = *b"SFCR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ClipMeta {
    verb_id: u32,
    noun_id: u32,
    seed: u64,
    dims: ClipDims,
    format_version: u32,
}

type TrackRow = (f32, f32, f32, f32, u32, bool);

fn fmt_err(msg: impl Into<String>, offset: u64) -> Error {
    Error::Format {
        msg: msg.into(),
        offset,
    }
}

pub fn write_clip(record: &ClipRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = ClipMeta {
        verb_id: record.verb_id,
        noun_id: record.noun_id,
        seed: record.seed,
        dims: record.dims,
        format_version: FORMAT_VERSION,
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;

    let rows: Vec<Vec<TrackRow>> = record
        .tracks
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|e| {
                    (
                        e.bbox.x1,
                        e.bbox.y1,
                        e.bbox.x2,
                        e.bbox.y2,
                        e.object_id,
                        e.present,
                    )
                })
                .collect()
        })
        .collect();
    fs::write(dir.join("tracks.json"), serde_json::to_vec(&rows)?)?;

    let d = record.dims;
    let mut buf = Vec::with_capacity(24 + record.frames.numel() * 4);
    buf.extend_from_slice(&FRAMES_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for extent in [d.t as u32, d.h as u32, d.w as u32, 3u32] {
        buf.extend_from_slice(&extent.to_le_bytes());
    }
    for &v in record.frames.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join("frames.bin"), buf)?;
    Ok(())
}

pub fn read_clip(dir: &Path) -> Result<ClipRecord> {
    let meta: ClipMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(fmt_err(
            format!("unsupported meta format_version {}", meta.format_version),
            0,
        ));
    }

    let rows: Vec<Vec<TrackRow>> = serde_json::from_slice(&fs::read(dir.join("tracks.json"))?)?;
    let tracks: Vec<Vec<TrackEntry>> = rows
        .into_iter()
        .map(|frame| {
            frame
                .into_iter()
                .map(|(x1, y1, x2, y2, object_id, present)| TrackEntry {
                    object_id,
                    present,
                    bbox: BoxPx { x1, y1, x2, y2 },
                })
                .collect()
        })
        .collect();

    let mut f = fs::File::open(dir.join("frames.bin"))?;
    let mut header = [0u8; 24];
    f.read_exact(&mut header)
        .map_err(|_| fmt_err("frames.bin shorter than its header", 0))?;
    if header[0..4] != FRAMES_MAGIC {
        return Err(fmt_err(
            format!("bad magic {:?}, expected {:?}", &header[0..4], FRAMES_MAGIC),
            0,
        ));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(fmt_err(format!("unsupported frames version {version}"), 4));
    }
    let (t, h, w, c) = (word(8), word(12), word(16), word(20));
    let d = meta.dims;
    if (t as usize, h as usize, w as usize, c) != (d.t, d.h, d.w, 3) {
        return Err(fmt_err(
            format!(
                "frames.bin dims {t}x{h}x{w}x{c} disagree with meta.json dims {}x{}x{}x3",
                d.t, d.h, d.w
            ),
            8,
        ));
    }

    let expected = (t * h * w * c) as usize;
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    if payload.len() != expected * 4 {
        return Err(fmt_err(
            format!(
                "payload holds {} bytes, header promises {}",
                payload.len(),
                expected * 4
            ),
            24,
        ));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let record = ClipRecord {
        frames: Tensor::from_vec(&[d.t, d.h, d.w, 3], data)?,
        tracks,
        verb_id: meta.verb_id,
        noun_id: meta.noun_id,
        seed: meta.seed,
        dims: d,
    };
    record.validate()?;
    Ok(record)
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    dir: String,
    verb_id: u32,
    noun_id: u32,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct DatasetIndex {
    format_version: u32,
    config: DatasetConfig,
    verbs: Vec<String>,
    nouns: Vec<String>,
    clips: Vec<IndexEntry>,
}

/// Write an in-memory dataset as a clip-directory tree plus index.json.
/// Splits are serialized separately under `splits/`.
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root.join("splits"))?;
    let mut entries = Vec::with_capacity(ds.len());
    for id in 0..ds.len() {
        let rec = ds.record(id);
        let dir_name = format!(
            "clip_{:04}_v{}_n{}",
            id, rec.verb_id, rec.noun_id
        );
        write_clip(&rec, &root.join(&dir_name))?;
        entries.push(IndexEntry {
            dir: dir_name,
            verb_id: rec.verb_id,
            noun_id: rec.noun_id,
            seed: rec.seed,
        });
    }
    let index = DatasetIndex {
        format_version: FORMAT_VERSION,
        config: ds.config,
        verbs: super::verbs::verb_registry()
            .iter()
            .take(ds.config.num_verbs)
            .map(|s| s.to_string())
            .collect(),
        nouns: super::shapes::noun_registry()
            .iter()
            .take(ds.config.num_nouns)
            .map(|n| n.name.to_string())
            .collect(),
        clips: entries,
    };
    fs::write(root.join("index.json"), serde_json::to_vec_pretty(&index)?)?;
    Ok(())
}

/// Load a dataset tree written by [`write_dataset`].
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let index: DatasetIndex = serde_json::from_slice(&fs::read(root.join("index.json"))?)?;
    if index.format_version != FORMAT_VERSION {
        return Err(fmt_err(
            format!("unsupported index format_version {}", index.format_version),
            0,
        ));
    }
    let mut clips = Vec::with_capacity(index.clips.len());
    for e in &index.clips {
        let rec = read_clip(&root.join(&e.dir))?;
        if rec.verb_id != e.verb_id || rec.noun_id != e.noun_id || rec.seed != e.seed {
            return Err(Error::Data(format!(
                "clip {} labels disagree with index.json",
                e.dir
            )));
        }
        clips.push(StoredClip {
            verb_id: rec.verb_id,
            noun_id: rec.noun_id,
            seed: rec.seed,
            frames: quantized_bytes(rec.frames.data()),
            tracks: rec.tracks,
        });
    }
    Ok(Dataset::from_clips(index.config, clips))
}

pub fn write_split(split: &SplitSpec, root: &Path, name: &str) -> Result<()> {
    let dir = root.join("splits");
    fs::create_dir_all(&dir)?;
    let mut f = fs::File::create(dir.join(format!("{name}.json")))?;
    f.write_all(&serde_json::to_vec_pretty(split)?)?;
    Ok(())
}

pub fn read_split(root: &Path, name: &str) -> Result<SplitSpec> {
    let bytes = fs::read(root.join("splits").join(format!("{name}.json")))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_clip;

    fn small_dims() -> ClipDims {
        ClipDims {
            t: 3,
            h: 24,
            w: 24,
            n_slots: 3,
        }
    }

    #[test]
    fn clip_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rec = generate_clip(6, 4, 99, small_dims()).unwrap();
        write_clip(&rec, dir.path()).unwrap();
        let back = read_clip(dir.path()).unwrap();
        assert_eq!(rec, back);
    }

    #[test]
    fn corrupt_magic_is_a_format_error_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let rec = generate_clip(0, 0, 1, small_dims()).unwrap();
        write_clip(&rec, dir.path()).unwrap();
        let path = dir.path().join("frames.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        match read_clip(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_frames_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let rec = generate_clip(0, 0, 1, small_dims()).unwrap();
        write_clip(&rec, dir.path()).unwrap();
        let path = dir.path().join("frames.bin");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match read_clip(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 24),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn header_dims_inconsistent_with_meta_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let rec = generate_clip(0, 0, 1, small_dims()).unwrap();
        write_clip(&rec, dir.path()).unwrap();
        let path = dir.path().join("frames.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&5u32.to_le_bytes()); // T: 3 -> 5
        fs::write(&path, bytes).unwrap();
        match read_clip(dir.path()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
