//! Triplet corpora: clean triplets with exact targets, synthetic triplets
//! with imperfect content references, and held-out styles for evaluation.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{apply_style, render, SceneDescriptor, StyleParams};
use crate::error::{config_err, Error, Result};
use crate::image::Image;
use crate::metrics::content_score;
use crate::rng::Rng;
use crate::tensor::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub size: usize,
    pub n_clean_styles: u32,
    pub n_synth_styles: u32,
    pub n_heldout_styles: u32,
    pub per_style_clean: usize,
    pub per_style_synth: usize,
    pub per_style_heldout: usize,
    /// Extra clean triplets per held-in style kept out of training.
    pub val_per_style: usize,
    /// Fraction of triplets rendered at half height.
    pub wide_fraction: f64,
    pub jitter_px: f64,
    pub drop_prob: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            size: 64,
            n_clean_styles: 12,
            n_synth_styles: 40,
            n_heldout_styles: 8,
            per_style_clean: 60,
            per_style_synth: 50,
            per_style_heldout: 10,
            val_per_style: 2,
            wide_fraction: 0.25,
            jitter_px: 3.0,
            drop_prob: 0.3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 || !self.size.is_multiple_of(2) {
            return Err(config_err!("world size {} must be even and at least 8", self.size));
        }
        if self.n_clean_styles == 0 || self.n_synth_styles == 0 || self.n_heldout_styles == 0 {
            return Err(config_err!("every style split needs at least one style"));
        }
        if self.per_style_clean == 0 {
            return Err(config_err!("per_style_clean must be positive"));
        }
        if !(0.0..=1.0).contains(&self.wide_fraction) {
            return Err(config_err!("wide_fraction {} outside [0, 1]", self.wide_fraction));
        }
        if self.jitter_px < 0.0 || !(0.0..1.0).contains(&self.drop_prob) {
            return Err(config_err!("need jitter_px >= 0 and drop_prob in [0, 1)"));
        }
        Ok(())
    }

    /// Contiguous id ranges: clean, then synthetic, then held-out.
    pub fn split(&self) -> StyleSplit {
        let a = self.n_clean_styles;
        let b = a + self.n_synth_styles;
        StyleSplit {
            clean: 0..a,
            synthetic: a..b,
            heldout: b..b + self.n_heldout_styles,
        }
    }
}

/// Style-id ranges of the three corpus parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyleSplit {
    pub clean: Range<u32>,
    pub synthetic: Range<u32>,
    pub heldout: Range<u32>,
}

impl StyleSplit {
    pub fn validate(&self) -> Result<()> {
        let parts = [("clean", &self.clean), ("synthetic", &self.synthetic), ("held-out", &self.heldout)];
        for (i, (na, a)) in parts.iter().enumerate() {
            if a.is_empty() {
                return Err(config_err!("{na} style range is empty"));
            }
            for (nb, b) in &parts[i + 1..] {
                if a.start < b.end && b.start < a.end {
                    return Err(config_err!("{na} styles {a:?} overlap {nb} styles {b:?}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Clean,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub id: String,
    pub style_id: u32,
    pub provenance: Provenance,
    pub style_ref: Image,
    pub content_ref: Image,
    pub target: Image,
    pub descriptor: SceneDescriptor,
    pub style_descriptor: SceneDescriptor,
    pub consistency_weight: f64,
}

/// Re-renders the scene with every shape centre jittered by up to
/// `jitter_px` and small shapes (size < 0.1) dropped with `drop_prob`: a
/// plausible but imperfect de-stylization of `target`.
pub fn destylize_noisify(target: &Image, desc: &SceneDescriptor, jitter_px: f64, drop_prob: f64, seed: u64) -> Image {
    let (w, h) = (target.width, target.height);
    let mut rng = Rng::new(seed).split("noisify");
    let mut noisy = desc.clone();
    noisy.shapes.clear();
    for s in &desc.shapes {
        if s.size < 0.1 && drop_prob > 0.0 && rng.bernoulli(drop_prob) {
            continue;
        }
        let mut s = *s;
        if jitter_px > 0.0 {
            s.cx = (s.cx + rng.uniform_range(-jitter_px, jitter_px) / w as f64).clamp(0.0, 1.0);
            s.cy = (s.cy + rng.uniform_range(-jitter_px, jitter_px) / h as f64).clamp(0.0, 1.0);
        }
        noisy.shapes.push(s);
    }
    render(&noisy, w, h)
}

fn make_triplet(cfg: &WorldConfig, part: &str, provenance: Provenance, style_id: u32, index: usize) -> Triplet {
    let mut rng = Rng::new(cfg.seed).split(part).split_index("style", u64::from(style_id)).split_index("triplet", index as u64);
    let style = StyleParams::generate(cfg.seed, style_id);
    let w = cfg.size;
    let h = if rng.bernoulli(cfg.wide_fraction) { cfg.size / 2 } else { cfg.size };
    let descriptor = SceneDescriptor::random(&mut rng);
    let style_descriptor = loop {
        let d = SceneDescriptor::random(&mut rng);
        if d != descriptor {
            break d;
        }
    };
    let clean = render(&descriptor, w, h);
    let target = apply_style(&style, &clean).quantized();
    let style_ref = apply_style(&style, &render(&style_descriptor, cfg.size, cfg.size)).quantized();
    let content_ref = match provenance {
        Provenance::Clean => clean,
        Provenance::Synthetic => destylize_noisify(&target, &descriptor, cfg.jitter_px, cfg.drop_prob, rng.next_u64()),
    };
    let consistency_weight = content_score(&content_ref, &descriptor).min(content_score(&target, &descriptor));
    Triplet {
        id: format!("{part}-s{style_id:03}-{index:03}"),
        style_id,
        provenance,
        style_ref,
        content_ref,
        target,
        descriptor,
        style_descriptor,
        consistency_weight,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: WorldConfig,
    pub clean: Vec<Triplet>,
    pub validation: Vec<Triplet>,
    pub synthetic: Vec<Triplet>,
    pub heldout: Vec<Triplet>,
}

/// Builds every part of the corpus from `(config, split)`.
pub fn build_corpus(cfg: &WorldConfig, split: &StyleSplit) -> Result<Corpus> {
    cfg.validate()?;
    split.validate()?;
    let part = |name: &str, prov, ids: &Range<u32>, n: usize, offset: usize| -> Vec<Triplet> {
        ids.clone()
            .flat_map(|s| (offset..offset + n).map(move |i| (s, i)))
            .map(|(s, i)| make_triplet(cfg, name, prov, s, i))
            .collect()
    };
    Ok(Corpus {
        config: cfg.clone(),
        clean: part("clean", Provenance::Clean, &split.clean, cfg.per_style_clean, 0),
        validation: part("clean", Provenance::Clean, &split.clean, cfg.val_per_style, cfg.per_style_clean),
        synthetic: part("synth", Provenance::Synthetic, &split.synthetic, cfg.per_style_synth, 0),
        heldout: part("heldout", Provenance::Clean, &split.heldout, cfg.per_style_heldout, 0),
    })
}

/// Manifest file names, one per corpus part.
pub const MANIFEST_FILES: [&str; 4] = ["clean.jsonl", "validation.jsonl", "synthetic.jsonl", "heldout.jsonl"];

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    style_id: u32,
    provenance: Provenance,
    consistency_weight: f64,
    style_ref: String,
    content_ref: String,
    target: String,
    descriptor: SceneDescriptor,
    style_descriptor: SceneDescriptor,
}

impl Corpus {
    pub fn parts(&self) -> [(&'static str, &[Triplet]); 4] {
        [
            (MANIFEST_FILES[0], &self.clean),
            (MANIFEST_FILES[1], &self.validation),
            (MANIFEST_FILES[2], &self.synthetic),
            (MANIFEST_FILES[3], &self.heldout),
        ]
    }

    /// Writes PPM images under `images/` and one manifest per part.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        for (file, triplets) in self.parts() {
            let mut manifest = String::new();
            for t in triplets {
                let names = ["style", "content", "target"].map(|k| format!("images/{}_{k}.ppm", t.id));
                t.style_ref.write_ppm(&dir.join(&names[0]))?;
                t.content_ref.write_ppm(&dir.join(&names[1]))?;
                t.target.write_ppm(&dir.join(&names[2]))?;
                let [style_ref, content_ref, target] = names;
                let rec = Record {
                    id: t.id.clone(),
                    style_id: t.style_id,
                    provenance: t.provenance,
                    consistency_weight: t.consistency_weight,
                    style_ref,
                    content_ref,
                    target,
                    descriptor: t.descriptor.clone(),
                    style_descriptor: t.style_descriptor.clone(),
                };
                manifest.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                manifest.push('\n');
            }
            write_atomic(&dir.join(file), manifest.as_bytes())?;
        }
        let cfg = serde_json::to_string_pretty(&self.config).expect("config serializes");
        write_atomic(&dir.join("world.json"), cfg.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Corpus> {
        let cfg_path = dir.join("world.json");
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config: WorldConfig =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", cfg_path.display())))?;
        let read = |file: &str| -> Result<Vec<Triplet>> {
            let path = dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|line| {
                    let r: Record = serde_json::from_str(line)
                        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                    let img = |p: &str| Image::read_ppm(&dir.join(p));
                    Ok(Triplet {
                        style_ref: img(&r.style_ref)?,
                        content_ref: img(&r.content_ref)?,
                        target: img(&r.target)?,
                        id: r.id,
                        style_id: r.style_id,
                        provenance: r.provenance,
                        descriptor: r.descriptor,
                        style_descriptor: r.style_descriptor,
                        consistency_weight: r.consistency_weight,
                    })
                })
                .collect()
        };
        Ok(Corpus {
            config,
            clean: read(MANIFEST_FILES[0])?,
            validation: read(MANIFEST_FILES[1])?,
            synthetic: read(MANIFEST_FILES[2])?,
            heldout: read(MANIFEST_FILES[3])?,
        })
    }

    pub fn manifest_paths(dir: &Path) -> Vec<PathBuf> {
        MANIFEST_FILES.iter().map(|f| dir.join(f)).collect()
    }
}
