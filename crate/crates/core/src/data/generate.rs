//! Clip rendering and in-memory dataset assembly.

use super::shapes::{noun_registry, Glyph};
use super::verbs::{glyph_box, plan_clip, verb_registry, Storyboard};
use super::{ClipDims, ClipRecord, InstanceMeta, TrackEntry};
use crate::par::maybe_par_map;
use crate::rng::{mix_seed, rng_from_seed, uniform};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Deterministic per-pixel hash noise in [-1, 1].
fn pixel_noise(x: u32, y: u32, seed: u64) -> f32 {
    let h = mix_seed(&[seed, x as u64, y as u64]);
    ((h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) as f32
}

struct Background {
    base: [f32; 3],
    waves: [(f32, f32, f32, f32); 2], // (fx, fy, phase, amp)
    noise_seed: u64,
}

impl Background {
    fn sample(&self, x: usize, y: usize) -> [f32; 3] {
        let mut v = 0.0f32;
        for &(fx, fy, phase, amp) in &self.waves {
            v += amp * (fx * x as f32 + fy * y as f32 + phase).sin();
        }
        v += 0.015 * pixel_noise(x as u32, y as u32, self.noise_seed);
        [
            (self.base[0] + v).clamp(0.0, 1.0),
            (self.base[1] + v).clamp(0.0, 1.0),
            (self.base[2] + v).clamp(0.0, 1.0),
        ]
    }
}

/// Render one labeled clip. Pure in `(verb_id, noun_id, seed, dims)`.
///
/// Frames are anti-aliased shape fills over a textured background, with
/// seeded jitter in start pose, speed, scale and color. Tracks are the
/// exact support boxes of each rendered glyph.
pub fn generate_clip(verb_id: u32, noun_id: u32, seed: u64, dims: ClipDims) -> Result<ClipRecord> {
    if verb_id as usize >= verb_registry().len() {
        return Err(Error::Registry(format!("verb id {verb_id}")));
    }
    let Some(noun_def) = noun_registry().get(noun_id as usize) else {
        return Err(Error::Registry(format!("noun id {noun_id}")));
    };

    let mut rng = rng_from_seed(mix_seed(&[0xC11F, verb_id as u64, noun_id as u64, seed]));

    let noun = Glyph {
        kind: noun_def.kind,
        size: (noun_def.base_size as f64 * uniform(&mut rng, 0.85, 1.15)) as f32,
        color: [
            (noun_def.base_color[0] as f64 + uniform(&mut rng, -0.08, 0.08)).clamp(0.05, 1.0)
                as f32,
            (noun_def.base_color[1] as f64 + uniform(&mut rng, -0.08, 0.08)).clamp(0.05, 1.0)
                as f32,
            (noun_def.base_color[2] as f64 + uniform(&mut rng, -0.08, 0.08)).clamp(0.05, 1.0)
                as f32,
        ],
    };

    let board = plan_clip(verb_id, noun, &mut rng, dims)
        .ok_or_else(|| Error::Registry(format!("verb id {verb_id}")))?;

    let bg = Background {
        base: {
            let g = uniform(&mut rng, 0.42, 0.50);
            [
                (g + uniform(&mut rng, -0.02, 0.02)) as f32,
                (g + uniform(&mut rng, -0.02, 0.02)) as f32,
                (g + uniform(&mut rng, -0.02, 0.02)) as f32,
            ]
        },
        waves: [
            (
                uniform(&mut rng, 0.12, 0.35) as f32,
                uniform(&mut rng, 0.12, 0.35) as f32,
                uniform(&mut rng, 0.0, std::f64::consts::TAU) as f32,
                uniform(&mut rng, 0.03, 0.05) as f32,
            ),
            (
                uniform(&mut rng, 0.35, 0.8) as f32,
                uniform(&mut rng, 0.35, 0.8) as f32,
                uniform(&mut rng, 0.0, std::f64::consts::TAU) as f32,
                uniform(&mut rng, 0.015, 0.03) as f32,
            ),
        ],
        noise_seed: mix_seed(&[seed, verb_id as u64, noun_id as u64, 0xBA5E]),
    };

    let (t_len, h, w) = (dims.t, dims.h, dims.w);
    let mut frames = vec![0.0f32; t_len * h * w * 3];
    let mut tracks: Vec<Vec<TrackEntry>> = Vec::with_capacity(t_len);

    // static background, rendered once and copied per frame
    let mut bg_frame = vec![0.0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let px = bg.sample(x, y);
            let off = (y * w + x) * 3;
            bg_frame[off..off + 3].copy_from_slice(&px);
        }
    }

    for t in 0..t_len {
        let frame = &mut frames[t * h * w * 3..(t + 1) * h * w * 3];
        frame.copy_from_slice(&bg_frame);

        for &oi in &board.draw_order {
            let obj = &board.objects[oi];
            let c = board.centers[t][oi];
            let bb = glyph_box(&obj.glyph, c, dims);
            let (x0, x1) = (bb.x1.floor() as usize, (bb.x2.ceil() as usize).min(w));
            let (y0, y1) = (bb.y1.floor() as usize, (bb.y2.ceil() as usize).min(h));
            for y in y0..y1 {
                for x in x0..x1 {
                    let d = obj
                        .glyph
                        .sdf(x as f32 + 0.5 - c.0, y as f32 + 0.5 - c.1);
                    let cov = (0.5 - d).clamp(0.0, 1.0);
                    if cov > 0.0 {
                        let off = (y * w + x) * 3;
                        for ch in 0..3 {
                            frame[off + ch] =
                                frame[off + ch] * (1.0 - cov) + obj.glyph.color[ch] * cov;
                        }
                    }
                }
            }
        }

        // quantize to the 1/255 grid so byte caches are lossless
        for v in frame.iter_mut() {
            *v = (*v * 255.0).round() / 255.0;
        }

        let mut entries: Vec<TrackEntry> = (0..dims.n_slots)
            .map(|slot| TrackEntry::absent(slot as u32))
            .collect();
        for (oi, obj) in board.objects.iter().enumerate() {
            let slot = obj.slot as usize;
            if slot >= dims.n_slots {
                return Err(Error::Contract(format!(
                    "script uses slot {slot} beyond {} slots",
                    dims.n_slots
                )));
            }
            entries[slot] = TrackEntry {
                object_id: obj.slot,
                present: true,
                bbox: glyph_box(&obj.glyph, board.centers[t][oi], dims),
            };
        }
        tracks.push(entries);
    }

    let record = ClipRecord {
        frames: Tensor::from_vec(&[t_len, h, w, 3], frames)?,
        tracks,
        verb_id,
        noun_id,
        seed,
        dims,
    };
    record.validate()?;
    Ok(record)
}

/// Sizing of a generated benchmark.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct DatasetConfig {
    pub num_verbs: usize,
    pub num_nouns: usize,
    pub seeds_per_pair: usize,
    pub dims: ClipDims,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_verbs: super::verbs::VERB_COUNT,
            num_nouns: super::shapes::NOUN_COUNT,
            seeds_per_pair: 10,
            dims: ClipDims::default(),
            seed: 7,
        }
    }
}

pub(crate) struct StoredClip {
    pub verb_id: u32,
    pub noun_id: u32,
    pub seed: u64,
    pub tracks: Vec<Vec<TrackEntry>>,
    /// frames quantized to bytes; `v = byte / 255.0` reconstructs the
    /// rendered f32 exactly
    pub frames: Vec<u8>,
}

/// In-memory benchmark: all clips of a `verbs x nouns x seeds` grid.
pub struct Dataset {
    pub config: DatasetConfig,
    pub(crate) clips: Vec<StoredClip>,
}

impl Dataset {
    /// Render the full grid. Clip order is (verb, noun, rep) row-major,
    /// so instance ids are stable for a given config.
    pub fn generate(config: DatasetConfig, parallel: bool) -> Result<Dataset> {
        if config.num_verbs > super::verbs::VERB_COUNT {
            return Err(Error::Registry(format!(
                "verb registry holds {} verbs, requested {}",
                super::verbs::VERB_COUNT,
                config.num_verbs
            )));
        }
        if config.num_nouns > super::shapes::NOUN_COUNT {
            return Err(Error::Registry(format!(
                "noun registry holds {} nouns, requested {}",
                super::shapes::NOUN_COUNT,
                config.num_nouns
            )));
        }
        let mut specs = Vec::new();
        for v in 0..config.num_verbs {
            for n in 0..config.num_nouns {
                for rep in 0..config.seeds_per_pair {
                    specs.push((v as u32, n as u32, mix_seed(&[config.seed, rep as u64])));
                }
            }
        }
        let clips: Vec<Result<StoredClip>> = maybe_par_map(parallel, specs.len(), |i| {
            let (verb_id, noun_id, seed) = specs[i];
            let rec = generate_clip(verb_id, noun_id, seed, config.dims)?;
            Ok(StoredClip {
                verb_id,
                noun_id,
                seed,
                tracks: rec.tracks,
                frames: quantized_bytes(rec.frames.data()),
            })
        });
        let clips = clips.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Dataset { config, clips })
    }

    pub(crate) fn from_clips(config: DatasetConfig, clips: Vec<StoredClip>) -> Dataset {
        Dataset { config, clips }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn dims(&self) -> ClipDims {
        self.config.dims
    }

    pub fn verb_of(&self, id: usize) -> u32 {
        self.clips[id].verb_id
    }

    pub fn instances(&self) -> Vec<InstanceMeta> {
        self.clips
            .iter()
            .enumerate()
            .map(|(id, c)| InstanceMeta {
                id,
                verb_id: c.verb_id,
                noun_id: c.noun_id,
            })
            .collect()
    }

    pub fn tracks(&self, id: usize) -> &[Vec<TrackEntry>] {
        &self.clips[id].tracks
    }

    /// Frames as `[T, H, W, 3]` in `[0, 1]`, bit-identical to the
    /// original render.
    pub fn frames_thwc(&self, id: usize) -> Tensor<f32> {
        let d = self.config.dims;
        let data: Vec<f32> = self.clips[id]
            .frames
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        Tensor::from_vec(&[d.t, d.h, d.w, 3], data).expect("stored frame size")
    }

    /// Frames permuted to `[T, 3, H, W]` for the visual pathway.
    pub fn frames_tchw(&self, id: usize) -> Tensor<f32> {
        let d = self.config.dims;
        let src = &self.clips[id].frames;
        let (h, w) = (d.h, d.w);
        let mut out = vec![0.0f32; d.t * 3 * h * w];
        for t in 0..d.t {
            let f = &src[t * h * w * 3..(t + 1) * h * w * 3];
            for y in 0..h {
                for x in 0..w {
                    let off = (y * w + x) * 3;
                    for ch in 0..3 {
                        out[((t * 3 + ch) * h + y) * w + x] = f[off + ch] as f32 / 255.0;
                    }
                }
            }
        }
        Tensor::from_vec(&[d.t, 3, h, w], out).expect("frame permute size")
    }

    /// Reconstruct the full record (used by the on-disk writer).
    pub fn record(&self, id: usize) -> ClipRecord {
        let c = &self.clips[id];
        ClipRecord {
            frames: self.frames_thwc(id),
            tracks: c.tracks.clone(),
            verb_id: c.verb_id,
            noun_id: c.noun_id,
            seed: c.seed,
            dims: self.config.dims,
        }
    }

    pub fn clip_seed(&self, id: usize) -> u64 {
        self.clips[id].seed
    }
}

pub(crate) fn quantized_bytes(frames: &[f32]) -> Vec<u8> {
    frames.iter().map(|&v| (v * 255.0).round() as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::super::verbs::kinematic_predicate_holds;
    use super::*;

    #[test]
    fn clip_contract_shapes_and_bounds() {
        let dims = ClipDims::default();
        let rec = generate_clip(0, 0, 42, dims).unwrap();
        assert_eq!(rec.frames.shape(), &[16, 64, 64, 3]);
        rec.validate().unwrap();
        assert!(rec.frames.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn approach_distance_shrinks_by_a_quarter() {
        let dims = ClipDims::default();
        for seed in 0..20 {
            let rec = generate_clip(0, seed as u32 % 12, seed, dims).unwrap();
            let d: Vec<f32> = rec
                .tracks
                .iter()
                .map(|f| {
                    let (hx, hy) = f[0].bbox.center();
                    let (nx, ny) = f[1].bbox.center();
                    ((hx - nx).powi(2) + (hy - ny).powi(2)).sqrt()
                })
                .collect();
            assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-3), "seed {seed}: {d:?}");
            assert!(
                d[dims.t - 1] <= 0.75 * d[0],
                "seed {seed}: {} vs {}",
                d[dims.t - 1],
                d[0]
            );
        }
    }

    #[test]
    fn regeneration_is_bit_exact() {
        let dims = ClipDims::default();
        let a = generate_clip(4, 3, 123, dims).unwrap();
        let b = generate_clip(4, 3, 123, dims).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_ids_are_registry_errors() {
        let dims = ClipDims::default();
        assert!(matches!(
            generate_clip(99, 0, 1, dims),
            Err(crate::Error::Registry(_))
        ));
        assert!(matches!(
            generate_clip(0, 99, 1, dims),
            Err(crate::Error::Registry(_))
        ));
    }

    #[test]
    fn every_verb_satisfies_its_kinematic_predicate() {
        let dims = ClipDims::default();
        for verb in 0..VERB_COUNT_U32 {
            for seed in 0..12u64 {
                let noun = (seed % 12) as u32;
                let rec = generate_clip(verb, noun, 1000 + seed, dims).unwrap();
                assert!(
                    kinematic_predicate_holds(verb, &rec.tracks, dims),
                    "verb {verb} seed {seed}"
                );
            }
        }
    }

    const VERB_COUNT_U32: u32 = super::super::verbs::VERB_COUNT as u32;

    #[test]
    fn cover_and_uncover_share_box_tracks() {
        let dims = ClipDims::default();
        let c = generate_clip(4, 2, 555, dims).unwrap();
        let u = generate_clip(5, 2, 555, dims).unwrap();
        assert_eq!(c.tracks, u.tracks);
        assert_ne!(c.frames.data(), u.frames.data());
    }

    #[test]
    fn cover_hides_the_noun_uncover_keeps_it_visible() {
        // measured as mean distance between the noun color and the pixels
        // in the noun box, last frame
        let dims = ClipDims::default();
        for seed in [9u64, 77, 300] {
            let cov = generate_clip(4, 0, seed, dims).unwrap();
            let unc = generate_clip(5, 0, seed, dims).unwrap();
            let last = dims.t - 1;
            let score = |rec: &ClipRecord| -> f32 {
                let nb = rec.tracks[last][1].bbox;
                let f = rec.frames.data();
                let mut best = f32::MAX;
                for y in nb.y1 as usize..(nb.y2 as usize).min(dims.h) {
                    for x in nb.x1 as usize..(nb.x2 as usize).min(dims.w) {
                        let off = ((last * dims.h + y) * dims.w + x) * 3;
                        // red channel distance to a saturated red noun
                        let d = (f[off] - 0.86).abs() + (f[off + 1] - 0.2).abs();
                        best = best.min(d);
                    }
                }
                best
            };
            let covered = score(&cov);
            let visible = score(&unc);
            assert!(
                visible < 0.3 && covered > visible + 0.1,
                "seed {seed}: covered {covered} visible {visible}"
            );
        }
    }

    #[test]
    fn dataset_generation_parallel_equals_sequential() {
        let cfg = DatasetConfig {
            num_verbs: 3,
            num_nouns: 2,
            seeds_per_pair: 2,
            dims: ClipDims {
                t: 4,
                h: 32,
                w: 32,
                n_slots: 3,
            },
            seed: 5,
        };
        let seq = Dataset::generate(cfg, false).unwrap();
        let par = Dataset::generate(cfg, true).unwrap();
        assert_eq!(seq.len(), par.len());
        for i in 0..seq.len() {
            assert_eq!(seq.clips[i].frames, par.clips[i].frames);
            assert_eq!(seq.clips[i].tracks, par.clips[i].tracks);
        }
    }

    #[test]
    fn byte_cache_roundtrips_exactly() {
        let dims = ClipDims {
            t: 2,
            h: 16,
            w: 16,
            n_slots: 3,
        };
        let rec = generate_clip(2, 5, 31, dims).unwrap();
        let bytes = quantized_bytes(rec.frames.data());
        let back: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        assert_eq!(rec.frames.data(), &back[..]);
    }
}
