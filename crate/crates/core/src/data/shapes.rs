//! Noun registry and signed-distance rendering primitives.
//!
//! Nouns vary in shape, color and size; verbs never read the noun id,
//! only its geometry, so verb-noun compositions factorize.

/// Half-extents of a shape's support relative to its center, in pixels.
/// Asymmetric shapes (triangle, pentagon, half-disc) have distinct
/// up/down extents.
#[derive(Clone, Copy, Debug)]
pub struct Extents {
    pub left: f32,
    pub right: f32,
    pub up: f32,
    pub down: f32,
}

impl Extents {
    fn symmetric(x: f32, y: f32) -> Self {
        Extents {
            left: x,
            right: x,
            up: y,
            down: y,
        }
    }

    pub fn max_radius(&self) -> f32 {
        self.left.max(self.right).max(self.up).max(self.down)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Diamond,
    Ring,
    Cross,
    Hexagon,
    Star4,
    Ellipse,
    Pentagon,
    HalfDisc,
    RoundSquare,
}

/// A concrete drawable: shape scaled to `size` (circumradius-like).
#[derive(Clone, Copy, Debug)]
pub struct Glyph {
    pub kind: ShapeKind,
    pub size: f32,
    pub color: [f32; 3],
}

impl Glyph {
    /// Support half-extents of the filled region (excluding the 0.5 px
    /// anti-alias skirt).
    pub fn extents(&self) -> Extents {
        let r = self.size;
        match self.kind {
            ShapeKind::Circle => Extents::symmetric(r, r),
            ShapeKind::Square | ShapeKind::RoundSquare | ShapeKind::Cross => {
                Extents::symmetric(r, r)
            }
            ShapeKind::Triangle => Extents::symmetric(r, r),
            ShapeKind::Diamond | ShapeKind::Star4 => Extents::symmetric(r, r),
            ShapeKind::Ring => Extents::symmetric(r, r),
            // pointy-top hexagon: x extent is r*cos(30 deg)
            ShapeKind::Hexagon => Extents::symmetric(r * 0.866_025_4, r),
            ShapeKind::Ellipse => Extents::symmetric(r, r * 0.62),
            ShapeKind::Pentagon => Extents {
                left: r * 0.951_056_5,
                right: r * 0.951_056_5,
                up: r,
                down: r * 0.809_017,
            },
            ShapeKind::HalfDisc => Extents {
                left: r,
                right: r,
                up: r,
                down: 0.0,
            },
        }
    }

    /// Signed distance from point `(px, py)` (relative to the glyph
    /// center, y down) to the shape boundary. Negative inside.
    pub fn sdf(&self, px: f32, py: f32) -> f32 {
        let r = self.size;
        match self.kind {
            ShapeKind::Circle => (px * px + py * py).sqrt() - r,
            ShapeKind::Square => sd_box(px, py, r, r),
            ShapeKind::RoundSquare => sd_box(px, py, r - 2.0, r - 2.0) - 2.0,
            ShapeKind::Triangle => {
                // isoceles, apex up (negative y); vertices (0,-r), (+-r, r)
                let half_planes = [
                    (0.0, 1.0, r),
                    (0.894_427_2, -0.447_213_6, 0.447_213_6 * r),
                    (-0.894_427_2, -0.447_213_6, 0.447_213_6 * r),
                ];
                sd_convex(px, py, &half_planes)
            }
            ShapeKind::Diamond => (px.abs() + py.abs() - r) * 0.707_106_77,
            ShapeKind::Ring => {
                let d = (px * px + py * py).sqrt();
                (d - r * 0.7).abs() - r * 0.3
            }
            ShapeKind::Cross => {
                let bar_h = sd_box(px, py, r, r * 0.38);
                let bar_v = sd_box(px, py, r * 0.38, r);
                bar_h.min(bar_v)
            }
            ShapeKind::Hexagon => {
                // pointy-top: flat left/right sides at x = +-r*cos30
                let k = 0.866_025_4;
                let planes = [
                    (1.0, 0.0, r * k),
                    (-1.0, 0.0, r * k),
                    (0.5, 0.866_025_4, r * k),
                    (-0.5, 0.866_025_4, r * k),
                    (0.5, -0.866_025_4, r * k),
                    (-0.5, -0.866_025_4, r * k),
                ];
                sd_convex(px, py, &planes)
            }
            ShapeKind::Star4 => {
                let tall = (px.abs() / (r * 0.42) + py.abs() / r - 1.0) * (r * 0.42) * 0.707;
                let wide = (px.abs() / r + py.abs() / (r * 0.42) - 1.0) * (r * 0.42) * 0.707;
                tall.min(wide)
            }
            ShapeKind::Ellipse => {
                let (a, b) = (r, r * 0.62);
                let q = ((px / a) * (px / a) + (py / b) * (py / b)).sqrt();
                (q - 1.0) * b
            }
            ShapeKind::Pentagon => {
                // circumradius r, apex up
                let mut planes = [(0.0f32, 0.0f32, 0.0f32); 5];
                for (i, p) in planes.iter_mut().enumerate() {
                    // outward normals of a regular pentagon with apex at -y
                    let ang = std::f32::consts::PI * (-0.5 + (2.0 * i as f32 + 1.0) / 5.0);
                    let apo = r * (std::f32::consts::PI / 5.0).cos();
                    *p = (ang.cos(), ang.sin(), apo);
                }
                sd_convex(px, py, &planes)
            }
            ShapeKind::HalfDisc => {
                let circ = (px * px + py * py).sqrt() - r;
                circ.max(py) // keep upper half (y <= 0)
            }
        }
    }
}

fn sd_box(px: f32, py: f32, hx: f32, hy: f32) -> f32 {
    let dx = px.abs() - hx;
    let dy = py.abs() - hy;
    let ox = dx.max(0.0);
    let oy = dy.max(0.0);
    (ox * ox + oy * oy).sqrt() + dx.max(dy).min(0.0)
}

fn sd_convex(px: f32, py: f32, planes: &[(f32, f32, f32)]) -> f32 {
    let mut d = f32::NEG_INFINITY;
    for &(nx, ny, off) in planes {
        d = d.max(nx * px + ny * py - off);
    }
    d
}

pub struct NounDef {
    pub name: &'static str,
    pub kind: ShapeKind,
    pub base_size: f32,
    pub base_color: [f32; 3],
}

pub const NOUN_COUNT: usize = 12;

const NOUNS: [NounDef; NOUN_COUNT] = [
    NounDef { name: "disc", kind: ShapeKind::Circle, base_size: 7.0, base_color: [0.86, 0.20, 0.20] },
    NounDef { name: "block", kind: ShapeKind::Square, base_size: 6.5, base_color: [0.20, 0.36, 0.86] },
    NounDef { name: "wedge", kind: ShapeKind::Triangle, base_size: 8.0, base_color: [0.18, 0.74, 0.30] },
    NounDef { name: "gem", kind: ShapeKind::Diamond, base_size: 7.5, base_color: [0.90, 0.80, 0.18] },
    NounDef { name: "hoop", kind: ShapeKind::Ring, base_size: 7.0, base_color: [0.85, 0.25, 0.80] },
    NounDef { name: "plus", kind: ShapeKind::Cross, base_size: 7.0, base_color: [0.18, 0.80, 0.80] },
    NounDef { name: "tile", kind: ShapeKind::Hexagon, base_size: 7.5, base_color: [0.94, 0.55, 0.14] },
    NounDef { name: "spark", kind: ShapeKind::Star4, base_size: 8.0, base_color: [0.55, 0.25, 0.82] },
    NounDef { name: "pebble", kind: ShapeKind::Ellipse, base_size: 8.0, base_color: [0.60, 0.88, 0.25] },
    NounDef { name: "shield", kind: ShapeKind::Pentagon, base_size: 7.5, base_color: [0.14, 0.60, 0.56] },
    NounDef { name: "dome", kind: ShapeKind::HalfDisc, base_size: 7.5, base_color: [0.94, 0.55, 0.70] },
    NounDef { name: "brick", kind: ShapeKind::RoundSquare, base_size: 7.0, base_color: [0.62, 0.40, 0.22] },
];

pub fn noun_registry() -> &'static [NounDef] {
    &NOUNS
}

pub fn noun_name(noun_id: u32) -> Option<&'static str> {
    NOUNS.get(noun_id as usize).map(|n| n.name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sdf_sign_convention() {
        for def in noun_registry() {
            let g = Glyph {
                kind: def.kind,
                size: def.base_size,
                color: def.base_color,
            };
            assert!(
                g.sdf(0.0, -0.01) < 0.0 || g.kind == ShapeKind::Ring,
                "{}: center not inside",
                def.name
            );
            let e = g.extents();
            assert!(g.sdf(e.right + 2.0, 0.0) > 0.0, "{}: right outside", def.name);
            assert!(g.sdf(0.0, -(e.up + 2.0)) > 0.0, "{}: top outside", def.name);
        }
    }

    #[test]
    fn extents_bound_support() {
        // no point with negative sdf may lie outside the extents box
        for def in noun_registry() {
            let g = Glyph {
                kind: def.kind,
                size: def.base_size,
                color: def.base_color,
            };
            let e = g.extents();
            let mut step = -12.0;
            while step <= 12.0 {
                let mut y = -12.0;
                while y <= 12.0 {
                    if g.sdf(step, y) < 0.0 {
                        assert!(
                            step >= -e.left - 1e-3
                                && step <= e.right + 1e-3
                                && y >= -e.up - 1e-3
                                && y <= e.down + 1e-3,
                            "{}: point ({step},{y}) inside but outside extents",
                            def.name
                        );
                    }
                    y += 0.25;
                }
                step += 0.25;
            }
        }
    }
}
