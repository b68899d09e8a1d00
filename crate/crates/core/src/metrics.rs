//! Style similarity, content score and the cutoff-gated content
//! preservation score (CPC).

use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::image::Image;
use crate::rng::Rng;
use crate::tensor::write_atomic;
use crate::world::{apply_style, base_colors, render, SceneDescriptor, StyleParams};

pub const PALETTE_BINS: usize = 8;
pub const SPECTRUM_BINS: usize = 16;
pub const STYLE_DIM: usize = PALETTE_BINS + SPECTRUM_BINS + 3;

const BLOCK_WEIGHTS: [f64; 4] = [0.1, 0.7, 0.7, 0.3];
const EDGE_LEVEL: f64 = 0.08;
const REFERENCE_SEED: u64 = 0x5eed_5717;
const REFERENCE_STYLES: usize = 256;

/// Raw, unscaled style statistics of an image.
pub fn raw_style_stats(img: &Image) -> [f64; STYLE_DIM] {
    let mut f = [0.0; STYLE_DIM];
    let n = (img.width * img.height).max(1) as f64;
    let base = base_colors();
    for p in img.pixels() {
        let k = (0..8)
            .min_by(|&a, &b| dist2(p, base[a]).total_cmp(&dist2(p, base[b])))
            .unwrap_or(0);
        f[k] += 1.0 / n;
    }
    let spec = radial_spectrum(img);
    f[PALETTE_BINS..PALETTE_BINS + SPECTRUM_BINS].copy_from_slice(&spec);
    let (mag, _) = gradients(img, false);
    f[STYLE_DIM - 3] = mag.iter().filter(|&&m| m > EDGE_LEVEL).count() as f64 / n;
    let lum: Vec<f64> = img.luminance().into_iter().map(f64::from).collect();
    let mean = lum.iter().sum::<f64>() / n;
    f[STYLE_DIM - 2] = mean;
    f[STYLE_DIM - 1] = lum.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    f
}

fn dist2(a: [f32; 3], b: [f32; 3]) -> f32 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

/// Power added to every band before the log; it keeps faint sampling noise
/// from dominating empty bands.
const SPECTRUM_FLOOR: f64 = 1e-6;

/// Log mean power of the luminance spectrum in 16 radial bands between DC
/// (excluded) and Nyquist.
fn radial_spectrum(img: &Image) -> [f64; SPECTRUM_BINS] {
    let (w, h) = (img.width, img.height);
    let lum = img.luminance();
    let mean = lum.iter().map(|&v| f64::from(v)).sum::<f64>() / lum.len().max(1) as f64;
    let mut buf: Vec<Complex<f64>> = lum.iter().map(|&v| Complex::new(f64::from(v) - mean, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let row = planner.plan_fft_forward(w);
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(h);
    let mut tmp = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
    let mut power = [0.0; SPECTRUM_BINS];
    let mut count = [0usize; SPECTRUM_BINS];
    let freq = |i: usize, n: usize| {
        let k = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        k / (n as f64 / 2.0)
    };
    for y in 0..h {
        for x in 0..w {
            let r = freq(x, w).hypot(freq(y, h));
            if r == 0.0 || r > 1.0 {
                continue;
            }
            let b = ((r * SPECTRUM_BINS as f64).ceil() as usize).clamp(1, SPECTRUM_BINS) - 1;
            power[b] += buf[y * w + x].norm_sqr() / (w * h) as f64;
            count[b] += 1;
        }
    }
    let logs: [f64; SPECTRUM_BINS] = std::array::from_fn(|b| (power[b] / count[b].max(1) as f64 + SPECTRUM_FLOOR).ln());
    let mean = logs.iter().sum::<f64>() / SPECTRUM_BINS as f64;
    logs.map(|v| v - mean)
}

/// Per-pixel gradient magnitude and orientation (radians in `[0, pi)`) from
/// the RGB structure tensor, optionally after a binomial blur.
fn gradients(img: &Image, blur: bool) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width, img.height);
    let mut chans: Vec<Vec<f64>> = (0..3)
        .map(|c| img.data.iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect())
        .collect();
    if blur {
        for ch in &mut chans {
            *ch = binomial_blur(ch, w, h);
        }
    }
    let mut mag = vec![0.0; w * h];
    let mut ori = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let (mut jxx, mut jyy, mut jxy) = (0.0, 0.0, 0.0);
            for ch in &chans {
                let gx = (ch[y * w + xr] - ch[y * w + xl]) / (xr - xl).max(1) as f64;
                let gy = (ch[yd * w + x] - ch[yu * w + x]) / (yd - yu).max(1) as f64;
                jxx += gx * gx;
                jyy += gy * gy;
                jxy += gx * gy;
            }
            mag[y * w + x] = (jxx + jyy).sqrt();
            ori[y * w + x] = (0.5 * (2.0 * jxy).atan2(jxx - jyy)).rem_euclid(std::f64::consts::PI);
        }
    }
    (mag, ori)
}

fn binomial_blur(ch: &[f64], w: usize, h: usize) -> Vec<f64> {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let at = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (0..5).map(|k| K[k] * ch[y * w + at(x as isize + k as isize - 2, w)]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (0..5).map(|k| K[k] * tmp[at(y as isize + k as isize - 2, h) * w + x]).sum();
        }
    }
    out
}

pub struct Standardizer {
    pub mean: [f64; STYLE_DIM],
    pub scale: [f64; STYLE_DIM],
}

/// Per-dimension centring and scaling fitted once on a fixed population of
/// stylized world images: each style is rendered on two scenes, and every
/// dimension is scaled by its total spread and by the share of that spread
/// that comes from style rather than content.
pub fn standardizer() -> &'static Standardizer {
    static S: OnceLock<Standardizer> = OnceLock::new();
    S.get_or_init(|| {
        let root = Rng::new(REFERENCE_SEED);
        let pairs: Vec<[[f64; STYLE_DIM]; 2]> = (0..REFERENCE_STYLES)
            .map(|i| {
                let style = StyleParams::generate(REFERENCE_SEED, i as u32);
                std::array::from_fn(|k| {
                    let mut rng = root.split_index("image", (2 * i + k) as u64);
                    let desc = SceneDescriptor::random(&mut rng);
                    raw_style_stats(&apply_style(&style, &render(&desc, 64, 64)).quantized())
                })
            })
            .collect();
        let n = 2.0 * pairs.len() as f64;
        let mean: [f64; STYLE_DIM] =
            std::array::from_fn(|d| pairs.iter().map(|p| p[0][d] + p[1][d]).sum::<f64>() / n);
        let block = |d: usize| match d {
            d if d < PALETTE_BINS => (0, PALETTE_BINS),
            d if d < PALETTE_BINS + SPECTRUM_BINS => (1, SPECTRUM_BINS),
            d if d == STYLE_DIM - 3 => (2, 1),
            _ => (3, 2),
        };
        let scale = std::array::from_fn(|d| {
            let total = pairs.iter().map(|p| (p[0][d] - mean[d]).powi(2) + (p[1][d] - mean[d]).powi(2)).sum::<f64>() / n;
            let within = pairs.iter().map(|p| (p[0][d] - p[1][d]).powi(2)).sum::<f64>() / n;
            let style_share = (1.0 - within / total.max(1e-18)).max(0.0);
            let (b, len) = block(d);
            BLOCK_WEIGHTS[b] / (len as f64).sqrt() * style_share / total.sqrt().max(1e-9)
        });
        Standardizer { mean, scale }
    })
}

/// Unit-norm style descriptor: palette histogram, radial spectrum, edge
/// density and luminance moments, each standardized and block-weighted.
pub fn style_feature(img: &Image) -> Vec<f64> {
    let raw = raw_style_stats(img);
    let s = standardizer();
    let mut f: Vec<f64> = (0..STYLE_DIM).map(|d| (raw[d] - s.mean[d]) * s.scale[d]).collect();
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        f.iter_mut().for_each(|v| *v /= norm);
    }
    f
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Feature extractor slot; [`style_feature`] is the default.
pub type FeatureFn = fn(&Image) -> Vec<f64>;

pub fn style_similarity_with(feature: FeatureFn, a: &Image, b: &Image) -> f64 {
    if a == b {
        return 1.0;
    }
    cosine(&feature(a), &feature(b))
}

/// Cosine of style features, in `[-1, 1]`; symmetric, 1 on identical images.
pub fn style_similarity(a: &Image, b: &Image) -> f64 {
    style_similarity_with(style_feature, a, b)
}

const CELLS: usize = 3;
const ORIENT_BINS: usize = 8;
const BOX_MARGIN: usize = 2;
const ENERGY_FLOOR: f64 = 0.25;

fn orientation_histogram(
    mag: &[f64],
    ori: &[f64],
    w: usize,
    (x0, y0, x1, y1): (usize, usize, usize, usize),
) -> Vec<f64> {
    let mut hist = vec![0.0; CELLS * CELLS * ORIENT_BINS];
    let (bw, bh) = ((x1 - x0).max(1), (y1 - y0).max(1));
    for y in y0..y1 {
        for x in x0..x1 {
            let i = y * w + x;
            let cx = ((x - x0) * CELLS / bw).min(CELLS - 1);
            let cy = ((y - y0) * CELLS / bh).min(CELLS - 1);
            let b = ((ori[i] / std::f64::consts::PI * ORIENT_BINS as f64) as usize).min(ORIENT_BINS - 1);
            hist[(cy * CELLS + cx) * ORIENT_BINS + b] += mag[i];
        }
    }
    hist
}

/// Structural agreement between `img` and the clean render of `desc`:
/// per shape, the cosine of localized edge-orientation histograms inside the
/// shape's box, damped when the image has much less edge energy there than
/// the render. Colour-blind by construction. Mean over shapes, in `[0, 1]`.
pub fn content_score(img: &Image, desc: &SceneDescriptor) -> f64 {
    let (w, h) = (img.width, img.height);
    let reference = render(desc, w, h);
    let (m_img, o_img) = gradients(img, true);
    let (m_ref, o_ref) = gradients(&reference, true);
    let boxes: Vec<_> = if desc.shapes.is_empty() {
        vec![(0, 0, w, h)]
    } else {
        desc.shapes
            .iter()
            .map(|s| {
                let (x0, y0, x1, y1) = s.bbox(w, h);
                (
                    x0.saturating_sub(BOX_MARGIN),
                    y0.saturating_sub(BOX_MARGIN),
                    (x1 + BOX_MARGIN).min(w),
                    (y1 + BOX_MARGIN).min(h),
                )
            })
            .collect()
    };
    let scores: Vec<f64> = boxes
        .into_iter()
        .map(|b| {
            let hi = orientation_histogram(&m_img, &o_img, w, b);
            let hr = orientation_histogram(&m_ref, &o_ref, w, b);
            let (ei, er): (f64, f64) = (hi.iter().sum(), hr.iter().sum());
            if er <= 1e-12 {
                return if ei <= 1e-12 { 1.0 } else { 0.0 };
            }
            let damp = (ei / (ENERGY_FLOOR * er)).min(1.0);
            cosine(&hi, &hr).max(0.0) * damp
        })
        .collect();
    (scores.iter().sum::<f64>() / scores.len() as f64).clamp(0.0, 1.0)
}

/// Content score if the result's style similarity to the reference reaches
/// `thresh`, else zero.
pub fn cpc_at(result: &Image, style_ref: &Image, desc: &SceneDescriptor, thresh: f64) -> f64 {
    cpc_from_scores(style_similarity(result, style_ref), content_score(result, desc), thresh)
}

pub fn cpc_from_scores(style_sim: f64, content: f64, thresh: f64) -> f64 {
    if style_sim >= thresh {
        content
    } else {
        0.0
    }
}

/// Thresholds `lo, lo + step, ..., hi` (inclusive, to a tolerance).
pub fn thresholds(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || lo > hi {
        return Err(config_err!("empty threshold sweep {lo}:{hi} step {step}"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Mean of the gated content score over the threshold sweep.
pub fn cpc_range_from_scores(style_sim: f64, content: f64, lo: f64, hi: f64, step: f64) -> Result<f64> {
    let ts = thresholds(lo, hi, step)?;
    let total: f64 = ts.iter().map(|&t| cpc_from_scores(style_sim, content, t)).sum();
    Ok(total / ts.len() as f64)
}

/// Mean of [`cpc_at`] over the threshold sweep.
pub fn cpc_range(result: &Image, style_ref: &Image, desc: &SceneDescriptor, lo: f64, hi: f64, step: f64) -> Result<f64> {
    cpc_range_from_scores(style_similarity(result, style_ref), content_score(result, desc), lo, hi, step)
}

pub const CPC_LO: f64 = 0.3;
pub const CPC_HI: f64 = 0.9;
pub const CPC_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub style_index: usize,
    pub content_index: usize,
    pub style_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub style_sim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_score: Option<f64>,
    /// `(threshold, cpc)` over the 0.3..0.9 sweep.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub cpc: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpc_at_05: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpc_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PairRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pairs: usize,
    pub scored: usize,
    pub failed: usize,
    pub style_sim: f64,
    pub content_score: f64,
    pub cpc_at_05: f64,
    pub cpc_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub records: Vec<PairRecord>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn from_records(records: Vec<PairRecord>) -> Self {
        let ok: Vec<&PairRecord> = records.iter().filter(|r| r.ok()).collect();
        let n = ok.len();
        let mean = |f: &dyn Fn(&PairRecord) -> f64| {
            if n == 0 {
                0.0
            } else {
                ok.iter().map(|r| f(r)).sum::<f64>() / n as f64
            }
        };
        let aggregate = Aggregate {
            pairs: records.len(),
            scored: n,
            failed: records.len() - n,
            style_sim: mean(&|r| r.style_sim.unwrap_or(0.0)),
            content_score: mean(&|r| r.content_score.unwrap_or(0.0)),
            cpc_at_05: mean(&|r| r.cpc_at_05.unwrap_or(0.0)),
            cpc_range: mean(&|r| r.cpc_range.unwrap_or(0.0)),
        };
        EvalReport { records, aggregate }
    }

    /// One JSON record per pair followed by an `{"aggregate": ...}` footer.
    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).expect("record serializes");
            out.push(b'\n');
        }
        let footer = serde_json::json!({ "aggregate": self.aggregate });
        writeln!(out, "{footer}").expect("write to vec");
        String::from_utf8(out).expect("json is utf-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if line.starts_with("{\"aggregate\"") {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| Error::Format(format!("report line: {e}")))?);
        }
        Ok(EvalReport::from_records(records))
    }
}

/// Scores one generated result against its style reference and descriptor.
pub fn score_pair(result: &Image, style_ref: &Image, desc: &SceneDescriptor) -> (f64, f64, Vec<(f64, f64)>, f64) {
    let s = style_similarity(result, style_ref);
    let c = content_score(result, desc);
    let ts = thresholds(CPC_LO, CPC_HI, CPC_STEP).expect("default sweep");
    let cpc: Vec<(f64, f64)> = ts.iter().map(|&t| (t, cpc_from_scores(s, c, t))).collect();
    let range = cpc_range_from_scores(s, c, CPC_LO, CPC_HI, CPC_STEP).expect("default sweep");
    (s, c, cpc, range)
}

/// A style reference for evaluation.
#[derive(Debug, Clone)]
pub struct StyleRef {
    pub style_id: u32,
    pub image: Image,
}

/// A content to stylize: its descriptor and canvas size.
#[derive(Debug, Clone)]
pub struct ContentSpec {
    pub descriptor: SceneDescriptor,
    pub width: usize,
    pub height: usize,
}

/// Cartesian evaluation: every style against every content. A failing
/// sampler call is recorded on its pair and left out of the aggregates.
pub fn evaluate_pairs<F>(mut sampler: F, styles: &[StyleRef], contents: &[ContentSpec]) -> Result<EvalReport>
where
    F: FnMut(usize, &StyleRef, usize, &ContentSpec) -> Result<Image>,
{
    if styles.is_empty() || contents.is_empty() {
        return Err(config_err!("evaluation needs at least one style and one content"));
    }
    let mut records = Vec::with_capacity(styles.len() * contents.len());
    for (si, style) in styles.iter().enumerate() {
        for (ci, content) in contents.iter().enumerate() {
            let mut rec = PairRecord {
                style_index: si,
                content_index: ci,
                style_id: style.style_id,
                style_sim: None,
                content_score: None,
                cpc: Vec::new(),
                cpc_at_05: None,
                cpc_range: None,
                error: None,
            };
            match sampler(si, style, ci, content) {
                Ok(img) => {
                    let (s, c, cpc, range) = score_pair(&img, &style.image, &content.descriptor);
                    rec.style_sim = Some(s);
                    rec.content_score = Some(c);
                    rec.cpc_at_05 = Some(cpc_from_scores(s, c, 0.5));
                    rec.cpc = cpc;
                    rec.cpc_range = Some(range);
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            records.push(rec);
        }
    }
    Ok(EvalReport::from_records(records))
}

/// Position-sensitive frame descriptor for motion filtering: a centred
/// 8x8 thumbnail of each colour channel.
pub fn frame_feature(img: &Image) -> Vec<f64> {
    const G: usize = 8;
    let mut f = vec![0.0; G * G * 3];
    let mut n = vec![0.0f64; G * G];
    for y in 0..img.height {
        for x in 0..img.width {
            let cell = (y * G / img.height) * G + x * G / img.width;
            let p = img.get(x, y);
            for c in 0..3 {
                f[cell * 3 + c] += f64::from(p[c]);
            }
            n[cell] += 1.0;
        }
    }
    for (i, v) in f.iter_mut().enumerate() {
        *v /= n[i / 3].max(1.0);
    }
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    f.iter_mut().for_each(|v| *v -= mean);
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world_image(seed: u64, style: u32) -> (Image, SceneDescriptor) {
        let desc = SceneDescriptor::random(&mut Rng::new(seed));
        let img = apply_style(&StyleParams::generate(9, style), &render(&desc, 64, 64)).quantized();
        (img, desc)
    }

    #[test]
    fn feature_has_unit_norm_and_fixed_dim() {
        let (img, _) = world_image(1, 2);
        let f = style_feature(&img);
        assert_eq!(f.len(), STYLE_DIM);
        assert!((f.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_identity_and_symmetry() {
        let (a, _) = world_image(1, 2);
        let (b, _) = world_image(2, 3);
        assert_eq!(style_similarity(&a, &a.clone()), 1.0);
        assert_eq!(style_similarity(&a, &b), style_similarity(&b, &a));
    }

    #[test]
    fn clean_render_scores_high_and_background_low() {
        let desc = SceneDescriptor::random(&mut Rng::new(4));
        let img = render(&desc, 64, 64);
        assert!(content_score(&img, &desc) >= 0.95);
        let bg = render(
            &SceneDescriptor {
                shapes: vec![],
                background: desc.background,
            },
            64,
            64,
        );
        assert!(content_score(&bg, &desc) <= 0.3);
    }

    #[test]
    fn cpc_cutoff_branches() {
        assert_eq!(cpc_from_scores(0.4, 0.8, 0.5), 0.0);
        assert_eq!(cpc_from_scores(0.5, 0.8, 0.5), 0.8);
        assert_eq!(cpc_from_scores(-1.0, 0.8, -1.0), 0.8);
    }

    #[test]
    fn cpc_range_hand_enumeration() {
        let c = 0.7;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-15;
        assert!(close(cpc_range_from_scores(1.0, c, 0.3, 0.9, 0.1).unwrap(), c));
        let r = cpc_range_from_scores(0.55, c, 0.3, 0.9, 0.1).unwrap();
        assert!(close(r, c * (3.0 / 7.0)), "{r}");
        assert_eq!(
            cpc_range_from_scores(0.55, c, 0.5, 0.5, 0.1).unwrap(),
            cpc_from_scores(0.55, c, 0.5)
        );
        assert!(cpc_range_from_scores(0.5, c, 0.9, 0.3, 0.1).is_err());
        assert!(cpc_range_from_scores(0.5, c, 0.3, 0.9, 0.0).is_err());
    }

    #[test]
    fn default_sweep_has_seven_points() {
        let ts = thresholds(CPC_LO, CPC_HI, CPC_STEP).unwrap();
        assert_eq!(ts.len(), 7);
        assert!((ts[6] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn cartesian_evaluation_counts_and_failures() {
        let styles: Vec<StyleRef> = (0..5)
            .map(|i| StyleRef {
                style_id: i,
                image: world_image(i as u64, i).0,
            })
            .collect();
        let contents: Vec<ContentSpec> = (0..4)
            .map(|i| ContentSpec {
                descriptor: SceneDescriptor::random(&mut Rng::new(100 + i)),
                width: 64,
                height: 64,
            })
            .collect();
        let report = evaluate_pairs(
            |si, _, ci, c| {
                if si == 1 && ci == 2 {
                    Err(Error::Numeric("boom".into()))
                } else {
                    Ok(render(&c.descriptor, c.width, c.height))
                }
            },
            &styles,
            &contents,
        )
        .unwrap();
        assert_eq!(report.records.len(), 20);
        assert_eq!(report.aggregate.failed, 1);
        assert_eq!(report.aggregate.scored, 19);
        let mean = report.records.iter().filter_map(|r| r.content_score).sum::<f64>() / 19.0;
        assert!((report.aggregate.content_score - mean).abs() < 1e-9);
        assert!(evaluate_pairs(|_, _, _, _| unreachable!(), &[], &contents).is_err());
    }

    #[test]
    fn report_round_trips_through_jsonl() {
        let rec = PairRecord {
            style_index: 0,
            content_index: 1,
            style_id: 7,
            style_sim: Some(0.625),
            content_score: Some(0.5),
            cpc: vec![(0.3, 0.5)],
            cpc_at_05: Some(0.5),
            cpc_range: Some(0.5),
            error: None,
        };
        let report = EvalReport::from_records(vec![rec]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        report.write(&p).unwrap();
        assert_eq!(EvalReport::read(&p).unwrap(), report);
    }
}
