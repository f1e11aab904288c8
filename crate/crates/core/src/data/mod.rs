//! Synthetic compositional-action benchmark: seeded moving-shape clips
//! with exact ground-truth boxes, plus the split builders over them.
//!
//! Every clip is a pure function of `(verb_id, noun_id, seed, dims)`.
//! Frames are rendered on a 1/255 quantization grid so the in-memory
//! dataset can hold them as bytes and reconstruct the f32 tensor
//! bit-exactly.

mod generate;
mod io;
mod shapes;
mod split;
mod verbs;

pub use generate::{generate_clip, Dataset, DatasetConfig};
pub use io::{load_dataset, read_clip, write_clip, write_dataset, FRAMES_MAGIC};
pub use split::{make_compositional_split, make_fewshot_split, InstanceMeta, SplitSpec};
pub use verbs::{kinematic_predicate_holds, verb_name, verb_registry, VERB_COUNT};

pub use shapes::{noun_name, noun_registry, NOUN_COUNT};

use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Frame geometry and slot count for a generated clip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipDims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub n_slots: usize,
}

impl Default for ClipDims {
    fn default() -> Self {
        // Small enough for minutes-scale training, large enough that
        // pixel cues can disambiguate the track-ambiguous verb pair.
        ClipDims {
            t: 16,
            h: 64,
            w: 64,
            n_slots: 3,
        }
    }
}

/// Axis-aligned box in pixel coordinates, `0 <= x1 <= x2 <= W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPx {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
}

impl BoxPx {
    pub const ZERO: BoxPx = BoxPx {
        x1: 0.0,
        y1: 0.0,
        x2: 0.0,
        y2: 0.0,
    };

    pub fn center(&self) -> (f32, f32) {
        ((self.x1 + self.x2) * 0.5, (self.y1 + self.y2) * 0.5)
    }

    pub fn area(&self) -> f32 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn intersection_area(&self, o: &BoxPx) -> f32 {
        let w = (self.x2.min(o.x2) - self.x1.max(o.x1)).max(0.0);
        let h = (self.y2.min(o.y2) - self.y1.max(o.y1)).max(0.0);
        w * h
    }
}

/// One object slot in one frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub object_id: u32,
    pub present: bool,
    pub bbox: BoxPx,
}

impl TrackEntry {
    pub fn absent(object_id: u32) -> Self {
        TrackEntry {
            object_id,
            present: false,
            bbox: BoxPx::ZERO,
        }
    }
}

/// One synthetic video instance: frames, per-frame tracks, labels, seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipRecord {
    /// `[T, H, W, 3]`, values in `[0, 1]` on the 1/255 grid.
    pub frames: Tensor<f32>,
    /// `tracks[t]` holds exactly `n_slots` entries, slot index == object id.
    pub tracks: Vec<Vec<TrackEntry>>,
    pub verb_id: u32,
    pub noun_id: u32,
    pub seed: u64,
    pub dims: ClipDims,
}

impl ClipRecord {
    /// Check the geometric invariants every generated clip must satisfy.
    pub fn validate(&self) -> crate::Result<()> {
        let d = self.dims;
        if self.frames.shape() != [d.t, d.h, d.w, 3] {
            return Err(crate::Error::Contract(format!(
                "frames shape {:?} does not match dims {:?}",
                self.frames.shape(),
                d
            )));
        }
        if self.tracks.len() != d.t {
            return Err(crate::Error::Contract("track frame count mismatch".into()));
        }
        for (t, frame) in self.tracks.iter().enumerate() {
            if frame.len() != d.n_slots {
                return Err(crate::Error::Contract(format!(
                    "frame {t}: expected {} slots, got {}",
                    d.n_slots,
                    frame.len()
                )));
            }
            for e in frame {
                if e.present {
                    let b = e.bbox;
                    let ok = 0.0 <= b.x1
                        && b.x1 <= b.x2
                        && b.x2 <= d.w as f32
                        && 0.0 <= b.y1
                        && b.y1 <= b.y2
                        && b.y2 <= d.h as f32;
                    if !ok {
                        return Err(crate::Error::Contract(format!(
                            "frame {t}: box out of bounds: {b:?}"
                        )));
                    }
                } else if e.bbox != BoxPx::ZERO {
                    return Err(crate::Error::Contract(format!(
                        "frame {t}: absent object {} carries a non-zero box",
                        e.object_id
                    )));
                }
            }
        }
        Ok(())
    }
}
