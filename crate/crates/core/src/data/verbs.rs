//! Verb registry: parametric motion scripts and the kinematic predicate
//! each verb guarantees on its emitted tracks.
//!
//! Object slots are fixed: 0 = hand (small gray disc agent), 1 = the
//! noun, 2 = lid (large gray cover plate). A verb activates a subset of
//! slots; absent slots carry presence=false and a zero box.
//!
//! `cover` and `uncover` share one motion script drawn from the same
//! jitter distribution, so their box tracks are statistically identical
//! and only the render z-order (which object occludes which) separates
//! them. Coordinates alone cannot decide the pair; pixels can.

use super::shapes::{Glyph, ShapeKind};
use super::{BoxPx, ClipDims, TrackEntry};
use crate::rng::{uniform, SeededRng};

pub const VERB_COUNT: usize = 8;

pub const SLOT_HAND: u32 = 0;
pub const SLOT_NOUN: u32 = 1;
pub const SLOT_LID: u32 = 2;

const VERB_NAMES: [&str; VERB_COUNT] = [
    "approach",
    "retreat",
    "pick-up",
    "put-down",
    "cover",
    "uncover",
    "push-left",
    "push-right",
];

pub fn verb_registry() -> &'static [&'static str] {
    &VERB_NAMES
}

pub fn verb_name(verb_id: u32) -> Option<&'static str> {
    VERB_NAMES.get(verb_id as usize).copied()
}

/// Fully planned clip: static appearances plus per-frame poses.
pub struct Storyboard {
    pub objects: Vec<SceneObject>,
    /// frames[t][i] = center of objects[i] at frame t
    pub centers: Vec<Vec<(f32, f32)>>,
    /// indices into `objects`, painted back to front
    pub draw_order: Vec<usize>,
}

pub struct SceneObject {
    pub slot: u32,
    pub glyph: Glyph,
}

fn hand_glyph(rng: &mut SeededRng) -> Glyph {
    Glyph {
        kind: ShapeKind::Circle,
        size: uniform(rng, 4.6, 5.4) as f32,
        color: [
            (0.46 + uniform(rng, -0.03, 0.03)) as f32,
            (0.43 + uniform(rng, -0.03, 0.03)) as f32,
            (0.41 + uniform(rng, -0.03, 0.03)) as f32,
        ],
    }
}

fn lid_glyph(rng: &mut SeededRng) -> Glyph {
    Glyph {
        kind: ShapeKind::RoundSquare,
        size: uniform(rng, 11.0, 13.0) as f32,
        color: [
            (0.36 + uniform(rng, -0.03, 0.03)) as f32,
            (0.38 + uniform(rng, -0.03, 0.03)) as f32,
            (0.41 + uniform(rng, -0.03, 0.03)) as f32,
        ],
    }
}

/// Monotone time warp: keeps direction, jitters speed profile.
fn warp(tau: f32, gamma: f32) -> f32 {
    tau.powf(gamma)
}

/// Sample a point such that a glyph with `max_radius` stays in frame.
fn sample_center(
    rng: &mut SeededRng,
    dims: ClipDims,
    margin: f32,
    x_range: (f32, f32),
    y_range: (f32, f32),
) -> (f32, f32) {
    let xl = x_range.0.max(margin);
    let xr = x_range.1.min(dims.w as f32 - margin);
    let yl = y_range.0.max(margin);
    let yr = y_range.1.min(dims.h as f32 - margin);
    (
        uniform(rng, xl as f64, xr as f64) as f32,
        uniform(rng, yl as f64, yr as f64) as f32,
    )
}

fn in_bounds(p: (f32, f32), margin: f32, dims: ClipDims) -> bool {
    p.0 >= margin
        && p.0 <= dims.w as f32 - margin
        && p.1 >= margin
        && p.1 <= dims.h as f32 - margin
}

/// Build the full motion plan for one clip.
///
/// Scripts read the noun's geometry (extents) but never its identity.
pub fn plan_clip(
    verb_id: u32,
    noun: Glyph,
    rng: &mut SeededRng,
    dims: ClipDims,
) -> Option<Storyboard> {
    let t_len = dims.t;
    let gamma = uniform(rng, 0.8, 1.25) as f32;
    let noun_r = noun.extents().max_radius() + 1.0;
    let taus: Vec<f32> = (0..t_len)
        .map(|t| {
            if t_len == 1 {
                0.0
            } else {
                t as f32 / (t_len - 1) as f32
            }
        })
        .collect();

    match verb_id {
        // hand moves radially toward the noun; distance shrinks to 20-35%
        0 | 1 => {
            let hand = hand_glyph(rng);
            let hand_r = hand.extents().max_radius() + 1.0;
            let noun_c = sample_center(rng, dims, noun_r, (18.0, 46.0), (18.0, 46.0));
            let (d0, rho) = if verb_id == 0 {
                (uniform(rng, 22.0, 30.0) as f32, uniform(rng, 0.20, 0.35) as f32)
            } else {
                (uniform(rng, 7.5, 10.5) as f32, uniform(rng, 2.0, 2.6) as f32)
            };
            let dir = loop {
                let th = uniform(rng, 0.0, std::f64::consts::TAU) as f32;
                let dir = (th.cos(), th.sin());
                let near = (noun_c.0 + dir.0 * d0, noun_c.1 + dir.1 * d0);
                let far = (
                    noun_c.0 + dir.0 * d0 * rho.max(1.0),
                    noun_c.1 + dir.1 * d0 * rho.max(1.0),
                );
                if in_bounds(near, hand_r, dims) && in_bounds(far, hand_r, dims) {
                    break dir;
                }
            };
            let centers = taus
                .iter()
                .map(|&tau| {
                    let w = warp(tau, gamma);
                    let d = d0 * (1.0 + (rho - 1.0) * w);
                    vec![
                        (noun_c.0 + dir.0 * d, noun_c.1 + dir.1 * d),
                        noun_c,
                    ]
                })
                .collect();
            Some(Storyboard {
                objects: vec![
                    SceneObject { slot: SLOT_HAND, glyph: hand },
                    SceneObject { slot: SLOT_NOUN, glyph: noun },
                ],
                centers,
                draw_order: vec![1, 0],
            })
        }

        // noun rises / descends with the hand resting on its top edge
        2 | 3 => {
            let hand = hand_glyph(rng);
            let hand_r = hand.extents().max_radius() + 1.0;
            let dy = uniform(rng, 13.0, 16.0) as f32;
            let lift = verb_id == 2;
            let y_range = if lift {
                (40.0, 50.0)
            } else {
                (14.0, 22.0)
            };
            let hand_off = noun.extents().up + hand_r + 0.5;
            let noun_c = loop {
                let c = sample_center(rng, dims, noun_r, (16.0, 48.0), y_range);
                let end_y = if lift { c.1 - dy } else { c.1 + dy };
                let hand_top = (end_y.min(c.1)) - hand_off;
                let bottom = (end_y.max(c.1)) + noun_r;
                if hand_top >= hand_r && bottom <= dims.h as f32 - 1.0 {
                    break c;
                }
            };
            let sgn = if lift { -1.0 } else { 1.0 };
            let centers = taus
                .iter()
                .map(|&tau| {
                    let y = noun_c.1 + sgn * dy * warp(tau, gamma);
                    vec![(noun_c.0, y - hand_off), (noun_c.0, y)]
                })
                .collect();
            Some(Storyboard {
                objects: vec![
                    SceneObject { slot: SLOT_HAND, glyph: hand },
                    SceneObject { slot: SLOT_NOUN, glyph: noun },
                ],
                centers,
                draw_order: vec![1, 0],
            })
        }

        // lid slides onto the static noun and rests there; identical
        // script for both verbs, z-order decides who ends on top
        4 | 5 => {
            let lid = lid_glyph(rng);
            let lid_r = lid.extents().max_radius() + 1.0;
            let noun_c = sample_center(rng, dims, noun_r.max(lid_r), (22.0, 42.0), (22.0, 42.0));
            let d0 = uniform(rng, 17.0, 23.0) as f32;
            let dir = loop {
                let th = uniform(rng, 0.0, std::f64::consts::TAU) as f32;
                let dir = (th.cos(), th.sin());
                let start = (noun_c.0 + dir.0 * d0, noun_c.1 + dir.1 * d0);
                if in_bounds(start, lid_r, dims) {
                    break dir;
                }
            };
            let arrive = 0.6f32;
            let centers = taus
                .iter()
                .map(|&tau| {
                    let w = warp(tau, gamma);
                    let d = d0 * (1.0 - w / arrive).max(0.0);
                    vec![
                        noun_c,
                        (noun_c.0 + dir.0 * d, noun_c.1 + dir.1 * d),
                    ]
                })
                .collect();
            let draw_order = if verb_id == 4 {
                vec![0, 1] // lid painted last: noun hidden once overlapped
            } else {
                vec![1, 0] // noun painted last: stays visible on the lid
            };
            Some(Storyboard {
                objects: vec![
                    SceneObject { slot: SLOT_NOUN, glyph: noun },
                    SceneObject { slot: SLOT_LID, glyph: lid },
                ],
                centers,
                draw_order,
            })
        }

        // noun slides horizontally, hand trailing on the pushed side
        6 | 7 => {
            let hand = hand_glyph(rng);
            let hand_r = hand.extents().max_radius() + 1.0;
            let dx = uniform(rng, 14.0, 18.0) as f32;
            let left = verb_id == 6;
            let x_range = if left { (34.0, 44.0) } else { (20.0, 30.0) };
            let side = noun.extents().max_radius() + hand_r + 0.5;
            let noun_c = loop {
                let c = sample_center(rng, dims, noun_r, x_range, (18.0, 46.0));
                let end_x = if left { c.0 - dx } else { c.0 + dx };
                let hand_x0 = if left { c.0 + side } else { c.0 - side };
                let hand_x1 = if left { end_x + side } else { end_x - side };
                if in_bounds((end_x, c.1), noun_r, dims)
                    && in_bounds((hand_x0, c.1), hand_r, dims)
                    && in_bounds((hand_x1, c.1), hand_r, dims)
                {
                    break c;
                }
            };
            let sgn = if left { -1.0 } else { 1.0 };
            let centers = taus
                .iter()
                .map(|&tau| {
                    let x = noun_c.0 + sgn * dx * warp(tau, gamma);
                    vec![(x - sgn * side, noun_c.1), (x, noun_c.1)]
                })
                .collect();
            Some(Storyboard {
                objects: vec![
                    SceneObject { slot: SLOT_HAND, glyph: hand },
                    SceneObject { slot: SLOT_NOUN, glyph: noun },
                ],
                centers,
                draw_order: vec![1, 0],
            })
        }

        _ => None,
    }
}

fn slot_track<'a>(tracks: &'a [Vec<TrackEntry>], slot: u32) -> Vec<&'a TrackEntry> {
    tracks
        .iter()
        .map(|frame| &frame[slot as usize])
        .collect()
}

fn center_distances(a: &[&TrackEntry], b: &[&TrackEntry]) -> Vec<f32> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let (ax, ay) = x.bbox.center();
            let (bx, by) = y.bbox.center();
            ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
        })
        .collect()
}

fn monotone(vals: &[f32], increasing: bool, tol: f32) -> bool {
    vals.windows(2).all(|w| {
        if increasing {
            w[1] >= w[0] - tol
        } else {
            w[1] <= w[0] + tol
        }
    })
}

/// Verify the verb's defining kinematic property from emitted tracks.
///
/// For the shared-script pair (cover/uncover) the property is the same
/// for both verbs; their difference is pixel-only by construction.
pub fn kinematic_predicate_holds(verb_id: u32, tracks: &[Vec<TrackEntry>], dims: ClipDims) -> bool {
    if tracks.is_empty() {
        return false;
    }
    let tol = 1e-3f32;
    match verb_id {
        0 | 1 => {
            let hand = slot_track(tracks, SLOT_HAND);
            let noun = slot_track(tracks, SLOT_NOUN);
            if !hand.iter().all(|e| e.present) || !noun.iter().all(|e| e.present) {
                return false;
            }
            let d = center_distances(&hand, &noun);
            let (first, last) = (d[0], d[d.len() - 1]);
            if verb_id == 0 {
                monotone(&d, false, tol) && last <= 0.75 * first
            } else {
                monotone(&d, true, tol) && last >= 1.5 * first
            }
        }
        2 | 3 => {
            let noun = slot_track(tracks, SLOT_NOUN);
            if !noun.iter().all(|e| e.present) {
                return false;
            }
            let ys: Vec<f32> = noun.iter().map(|e| e.bbox.center().1).collect();
            let span = dims.h as f32;
            let (first, last) = (ys[0], ys[ys.len() - 1]);
            if verb_id == 2 {
                monotone(&ys, false, tol) && first - last >= 0.15 * span
            } else {
                monotone(&ys, true, tol) && last - first >= 0.15 * span
            }
        }
        4 | 5 => {
            let lid = slot_track(tracks, SLOT_LID);
            let noun = slot_track(tracks, SLOT_NOUN);
            if !lid.iter().all(|e| e.present) || !noun.iter().all(|e| e.present) {
                return false;
            }
            let d = center_distances(&lid, &noun);
            if !monotone(&d, false, tol) {
                return false;
            }
            // overlap created: the noun box ends essentially inside the lid box
            let tail = tracks.len() - tracks.len().div_ceil(4);
            (tail..tracks.len()).all(|t| {
                let nb = tracks[t][SLOT_NOUN as usize].bbox;
                let lb = tracks[t][SLOT_LID as usize].bbox;
                nb.intersection_area(&lb) >= 0.8 * nb.area()
            })
        }
        6 | 7 => {
            let noun = slot_track(tracks, SLOT_NOUN);
            if !noun.iter().all(|e| e.present) {
                return false;
            }
            let xs: Vec<f32> = noun.iter().map(|e| e.bbox.center().0).collect();
            let span = dims.w as f32;
            let (first, last) = (xs[0], xs[xs.len() - 1]);
            if verb_id == 6 {
                monotone(&xs, false, tol) && first - last >= 0.15 * span
            } else {
                monotone(&xs, true, tol) && last - first >= 0.15 * span
            }
        }
        _ => false,
    }
}

/// Exact pixel bounding box of a glyph at `center`, including the
/// anti-alias skirt, clamped to the frame.
pub fn glyph_box(glyph: &Glyph, center: (f32, f32), dims: ClipDims) -> BoxPx {
    let e = glyph.extents();
    let aa = 0.5;
    BoxPx {
        x1: (center.0 - e.left - aa).clamp(0.0, dims.w as f32),
        y1: (center.1 - e.up - aa).clamp(0.0, dims.h as f32),
        x2: (center.0 + e.right + aa).clamp(0.0, dims.w as f32),
        y2: (center.1 + e.down + aa).clamp(0.0, dims.h as f32),
    }
}
