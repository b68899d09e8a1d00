//! Procedural stylization world.
//!
//! Scenes are a handful of flat shapes over a vertical gradient; styles are
//! parametric recipes (palette remap, texture, outline, tone curve). Because
//! both are generated from seeds, the stylized target of any
//! (scene, style) pair is known exactly.

mod corpus;

pub use corpus::{
    build_corpus, destylize_noisify, Corpus, Provenance, StyleSplit, Triplet, WorldConfig, MANIFEST_FILES,
};

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::Rng;

pub const DEFAULT_SIZE: usize = 64;

const BASE_COLORS_U8: [[u8; 3]; 8] = [
    [217, 51, 51],
    [51, 179, 77],
    [51, 89, 217],
    [230, 204, 51],
    [153, 77, 179],
    [51, 191, 204],
    [242, 140, 38],
    [128, 128, 128],
];

pub fn base_color(i: usize) -> [f32; 3] {
    BASE_COLORS_U8[i % 8].map(|c| c as f32 / 255.0)
}

pub fn base_colors() -> [[f32; 3]; 8] {
    std::array::from_fn(base_color)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Rect,
    Triangle,
    Line,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Circle, ShapeKind::Rect, ShapeKind::Triangle, ShapeKind::Line];
}

/// One shape; centre in canvas fractions, size as a fraction of the shorter
/// canvas side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
    pub color: u8,
}

const LINE_DIR: (f64, f64) = (0.8, -0.6);
const LINE_HALF_WIDTH: f64 = 1.5;

impl Shape {
    fn geometry(&self, w: usize, h: usize) -> (f64, f64, f64) {
        let m = w.min(h) as f64;
        (self.cx * w as f64, self.cy * h as f64, self.size * m)
    }

    /// Whether the point `(px, py)` in pixel units lies inside the shape.
    pub fn contains(&self, px: f64, py: f64, w: usize, h: usize) -> bool {
        let (cx, cy, s) = self.geometry(w, h);
        let (dx, dy) = (px - cx, py - cy);
        match self.kind {
            ShapeKind::Circle => dx * dx + dy * dy <= s * s,
            ShapeKind::Rect => dx.abs() <= s && dy.abs() <= 0.6 * s,
            ShapeKind::Triangle => {
                if dy > 0.8 * s || dy < -s {
                    return false;
                }
                let half = s * (dy + s) / (1.8 * s);
                dx.abs() <= half
            }
            ShapeKind::Line => {
                let along = (dx * LINE_DIR.0 + dy * LINE_DIR.1).clamp(-s, s);
                let (qx, qy) = (dx - along * LINE_DIR.0, dy - along * LINE_DIR.1);
                qx * qx + qy * qy <= LINE_HALF_WIDTH * LINE_HALF_WIDTH
            }
        }
    }

    /// Inclusive-exclusive pixel box `(x0, y0, x1, y1)` clipped to the canvas.
    pub fn bbox(&self, w: usize, h: usize) -> (usize, usize, usize, usize) {
        let (cx, cy, s) = self.geometry(w, h);
        let (ex, ey0, ey1) = match self.kind {
            ShapeKind::Circle => (s, s, s),
            ShapeKind::Rect => (s, 0.6 * s, 0.6 * s),
            ShapeKind::Triangle => (s, s, 0.8 * s),
            ShapeKind::Line => {
                let ex = s * LINE_DIR.0.abs() + LINE_HALF_WIDTH;
                let ey = s * LINE_DIR.1.abs() + LINE_HALF_WIDTH;
                (ex, ey, ey)
            }
        };
        let clip = |v: f64, n: usize| v.floor().clamp(0.0, n as f64) as usize;
        (
            clip(cx - ex, w),
            clip(cy - ey0, h),
            clip(cx + ex + 1.0, w),
            clip(cy + ey1 + 1.0, h),
        )
    }
}

/// Parametric scene layout; plays the role of the caption when scoring
/// content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub shapes: Vec<Shape>,
    /// Palette indices of the top and bottom background colours.
    pub background: [u8; 2],
}

impl SceneDescriptor {
    pub const MAX_SHAPES: usize = 4;

    pub fn random(rng: &mut Rng) -> Self {
        let top = rng.below(8) as u8;
        let bottom = loop {
            let c = rng.below(8) as u8;
            if c != top {
                break c;
            }
        };
        let n = 1 + rng.below(Self::MAX_SHAPES);
        let shapes = (0..n)
            .map(|_| {
                let kind = ShapeKind::ALL[rng.below(4)];
                let cx = rng.uniform_range(0.15, 0.85);
                let cy = rng.uniform_range(0.15, 0.85);
                let size = rng.uniform_range(0.05, 0.4);
                let color = loop {
                    let c = rng.below(8) as u8;
                    if c != top && c != bottom {
                        break c;
                    }
                };
                Shape {
                    kind,
                    cx,
                    cy,
                    size,
                    color,
                }
            })
            .collect();
        SceneDescriptor {
            shapes,
            background: [top, bottom],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.shapes.len() <= Self::MAX_SHAPES
            && self.background.iter().all(|&c| c < 8)
            && self.shapes.iter().all(|s| {
                s.color < 8 && (0.0..=1.0).contains(&s.cx) && (0.0..=1.0).contains(&s.cy) && s.size > 0.0
            })
    }
}

/// Rasterizes a scene without anti-aliasing. Shapes paint in order; pixel
/// centres decide coverage.
pub fn render(desc: &SceneDescriptor, w: usize, h: usize) -> Image {
    let top = base_color(desc.background[0] as usize);
    let bottom = base_color(desc.background[1] as usize);
    let mut img = Image::new(w, h);
    for y in 0..h {
        let t = (y as f32 + 0.5) / h as f32;
        let bg: [f32; 3] = std::array::from_fn(|c| top[c] + (bottom[c] - top[c]) * t);
        for x in 0..w {
            img.set(x, y, bg);
        }
    }
    for shape in &desc.shapes {
        let color = base_color(shape.color as usize);
        let (x0, y0, x1, y1) = shape.bbox(w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5, w, h) {
                    img.set(x, y, color);
                }
            }
        }
    }
    img.quantized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextureKind {
    None,
    Stripes,
    Dots,
    Checker,
    ValueNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub kind: TextureKind,
    /// Cycles per 64 pixels.
    pub frequency: f64,
    pub strength: f64,
    /// Stripe direction in radians.
    pub angle: f64,
    pub seed: u64,
}

/// A style recipe. Every component has a no-op setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub style_id: u32,
    /// Base colour `k` is recoloured toward `base[perm[k]] + tint`.
    pub perm: [u8; 8],
    pub tint: [f32; 3],
    pub texture: Texture,
    /// Outline width in pixels, 0 to 2.
    pub outline: u8,
    pub ink: [f32; 3],
    pub gamma: f64,
}

const PALETTE_SIGMA2: f32 = 0.02;
const EDGE_THRESHOLD: f32 = 0.12;

impl StyleParams {
    pub fn identity(style_id: u32) -> Self {
        StyleParams {
            style_id,
            perm: std::array::from_fn(|i| i as u8),
            tint: [0.0; 3],
            texture: Texture {
                kind: TextureKind::None,
                frequency: 1.0,
                strength: 0.0,
                angle: 0.0,
                seed: 0,
            },
            outline: 0,
            ink: [0.0; 3],
            gamma: 1.0,
        }
    }

    /// The style a world seed assigns to `style_id`.
    pub fn generate(world_seed: u64, style_id: u32) -> Self {
        let mut rng = Rng::new(world_seed).split_index("style", u64::from(style_id));
        let mut perm: [u8; 8] = std::array::from_fn(|i| i as u8);
        rng.shuffle(&mut perm);
        let tint = std::array::from_fn(|_| rng.uniform_range(-0.15, 0.15) as f32);
        let kind = match rng.below(8) {
            0 | 1 => TextureKind::Stripes,
            2 | 3 => TextureKind::Dots,
            4 | 5 => TextureKind::Checker,
            _ => TextureKind::ValueNoise,
        };
        let texture = Texture {
            kind,
            frequency: rng.uniform_range(3.0, 10.0),
            strength: rng.uniform_range(0.1, 0.22),
            angle: rng.uniform_range(0.0, std::f64::consts::PI),
            seed: rng.next_u64(),
        };
        let outline = rng.below(3) as u8;
        let dark = base_color(rng.below(8));
        let ink = dark.map(|c| c * 0.25);
        // Log-uniform over [0.5, 0.8] and [1.25, 2]: tone always shifts.
        let g = rng.uniform_range(0.25f64.ln(), 0.8f64.ln()).exp();
        let gamma = if rng.bernoulli(0.5) { g.max(0.5) } else { (1.0 / g).min(2.0) };
        StyleParams {
            style_id,
            perm,
            tint,
            texture,
            outline,
            ink,
            gamma,
        }
    }

    fn palette_targets(&self) -> [[f32; 3]; 8] {
        std::array::from_fn(|k| {
            let src = base_color(self.perm[k] as usize);
            std::array::from_fn(|c| (src[c] + self.tint[c]).clamp(0.0, 1.0))
        })
    }
}

/// Soft palette remap: each colour moves by the responsibility-weighted
/// displacement of the base colours near it, so an identity mapping leaves
/// every value untouched.
fn remap(style: &StyleParams, rgb: [f32; 3]) -> [f32; 3] {
    let base = base_colors();
    let dst = style.palette_targets();
    let mut w = [0f32; 8];
    let mut best = f32::INFINITY;
    let d2: [f32; 8] = std::array::from_fn(|k| (0..3).map(|c| (rgb[c] - base[k][c]).powi(2)).sum());
    for &d in &d2 {
        best = best.min(d);
    }
    let mut total = 0.0;
    for k in 0..8 {
        w[k] = (-(d2[k] - best) / PALETTE_SIGMA2).exp();
        total += w[k];
    }
    std::array::from_fn(|c| {
        let shift: f32 = (0..8).map(|k| w[k] * (dst[k][c] - base[k][c])).sum();
        rgb[c] + shift / total
    })
}

fn hash2(seed: u64, x: i64, y: i64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Texture value in `[-1, 1]` at pixel `(x, y)`.
pub fn texture_value(tex: &Texture, x: usize, y: usize) -> f64 {
    let period = 64.0 / tex.frequency;
    let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
    match tex.kind {
        TextureKind::None => 0.0,
        TextureKind::Stripes => {
            let u = fx * tex.angle.cos() + fy * tex.angle.sin();
            (std::f64::consts::TAU * u / period).sin()
        }
        TextureKind::Dots => {
            let (u, v) = ((fx / period).fract() - 0.5, (fy / period).fract() - 0.5);
            if u * u + v * v <= 0.09 {
                1.0
            } else {
                -0.25
            }
        }
        TextureKind::Checker => {
            let cell = period / 2.0;
            if ((fx / cell).floor() as i64 + (fy / cell).floor() as i64) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        }
        TextureKind::ValueNoise => {
            let (u, v) = (fx / period, fy / period);
            let (ix, iy) = (u.floor() as i64, v.floor() as i64);
            let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
            let (sx, sy) = (smooth(u - ix as f64), smooth(v - iy as f64));
            let n = |dx, dy| hash2(tex.seed, ix + dx, iy + dy);
            let top = n(0, 0) + (n(1, 0) - n(0, 0)) * sx;
            let bottom = n(0, 1) + (n(1, 1) - n(0, 1)) * sx;
            top + (bottom - top) * sy
        }
    }
}

/// Pixels within `width` (4-neighbour steps) of a colour discontinuity.
fn outline_mask(img: &Image, width: u8) -> Vec<bool> {
    let (w, h) = (img.width, img.height);
    let mut mask = vec![false; w * h];
    if width == 0 {
        return mask;
    }
    let differs = |a: [f32; 3], b: [f32; 3]| (0..3).any(|c| (a[c] - b[c]).abs() > EDGE_THRESHOLD);
    for y in 0..h {
        for x in 0..w {
            let p = img.get(x, y);
            let right = x + 1 < w && differs(p, img.get(x + 1, y));
            let down = y + 1 < h && differs(p, img.get(x, y + 1));
            if right || down {
                mask[y * w + x] = true;
            }
        }
    }
    for _ in 1..width {
        let prev = mask.clone();
        for y in 0..h {
            for x in 0..w {
                let near = (x > 0 && prev[y * w + x - 1])
                    || (x + 1 < w && prev[y * w + x + 1])
                    || (y > 0 && prev[(y - 1) * w + x])
                    || (y + 1 < h && prev[(y + 1) * w + x]);
                if near {
                    mask[y * w + x] = true;
                }
            }
        }
    }
    mask
}

/// Palette remap, then texture, then outline, then tone curve.
pub fn apply_style(style: &StyleParams, img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    let mask = outline_mask(img, style.outline);
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut c = remap(style, img.get(x, y));
            if style.texture.kind != TextureKind::None {
                let t = (style.texture.strength * texture_value(&style.texture, x, y)) as f32;
                c = c.map(|v| v + t);
            }
            if mask[y * w + x] {
                c = style.ink;
            }
            if style.gamma != 1.0 {
                c = c.map(|v| (v.clamp(0.0, 1.0) as f64).powf(style.gamma) as f32);
            }
            out.set(x, y, c);
        }
    }
    out
}

/// Renders `frames` frames with every shape translated by its velocity
/// (pixels per frame), returning `(source, stylized)`.
pub fn gen_video_clip(
    desc: &SceneDescriptor,
    style: &StyleParams,
    frames: usize,
    motion: &[(f64, f64)],
    w: usize,
    h: usize,
) -> (Vec<Image>, Vec<Image>) {
    let mut source = Vec::with_capacity(frames);
    for k in 0..frames {
        let mut d = desc.clone();
        for (s, &(vx, vy)) in d.shapes.iter_mut().zip(motion) {
            s.cx += vx * k as f64 / w as f64;
            s.cy += vy * k as f64 / h as f64;
        }
        source.push(render(&d, w, h));
    }
    let stylized = source.iter().map(|f| apply_style(style, f).quantized()).collect();
    (source, stylized)
}
