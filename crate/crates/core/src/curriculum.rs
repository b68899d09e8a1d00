//! Three-stage curriculum over one continually trained LoRA adapter.
//!
//! Stage 1 fits clean triplets uniformly (D1). Stage 2 reweights the clean
//! set toward triplets with high content consistency (D2). Stage 3 mixes a
//! low ratio of synthetic triplets into D2 (D3). Each stage warm-starts from
//! the previous adapter and writes its own checkpoint.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::lora::LoraAdapter;
use crate::metrics::{evaluate_pairs, score_pair, ContentSpec, EvalReport, PairRecord, StyleRef};
use crate::pipeline::{
    accumulate, flow_step, load_adapter, save_adapter, scale_grads, stylize, windowed_means, BaseModel, Example,
    SampleOptions, Trainable,
};
use crate::rng::{Rng, RngState};
use crate::tensor::{read_checkpoint, write_atomic, write_checkpoint, Adam, AdamConfig, AdamState};
use crate::world::{render, Corpus, Provenance, Triplet};

pub const STAGES: [&str; 3] = ["stage1", "stage2", "stage3"];
pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub steps: [usize; 3],
    pub lr: f64,
    /// Examples averaged per optimizer step.
    pub batch: usize,
    /// Probability of drawing a synthetic triplet in stage 3.
    pub rho: f64,
    /// Consistency reweighting exponent of stage 2.
    pub gamma: f64,
    pub seed: u64,
    pub rank: usize,
    pub alpha: f64,
    /// Steps between resumable snapshots; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            steps: [1500, 1000, 1500],
            lr: 1e-4,
            batch: 1,
            rho: 0.25,
            gamma: 4.0,
            seed: 0,
            rank: 32,
            alpha: 32.0,
            checkpoint_every: 250,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps.contains(&0) {
            return Err(config_err!("every stage needs a positive step count, got {:?}", self.steps));
        }
        if !(self.rho > 0.0 && self.rho <= 0.5) {
            return Err(config_err!("synthetic mix ratio {} outside (0, 0.5]", self.rho));
        }
        if self.gamma < 0.0 {
            return Err(config_err!("gamma must be non-negative"));
        }
        if self.batch == 0 || self.rank == 0 {
            return Err(config_err!("batch and rank must be positive"));
        }
        AdamConfig::with_lr(self.lr).validate()
    }
}

/// Which corpus part a dataset entry points into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    Clean,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRef {
    pub part: Part,
    pub index: usize,
}

/// Synthetic slice drawn uniformly with probability `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMix {
    pub entries: Vec<TripletRef>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageDataset {
    pub name: String,
    pub entries: Vec<TripletRef>,
    /// Sampling weights of `entries`, summing to 1.
    pub weights: Vec<f64>,
    pub mix: Option<SynthMix>,
}

impl StageDataset {
    pub fn sample(&self, rng: &mut Rng) -> TripletRef {
        if let Some(mix) = &self.mix {
            if rng.bernoulli(mix.rho) {
                return mix.entries[rng.below(mix.entries.len())];
            }
        }
        self.entries[rng.weighted_index(&self.weights)]
    }

    /// Marginal probability of every entry, primary and synthetic.
    pub fn marginals(&self) -> Vec<(TripletRef, f64)> {
        let rho = self.mix.as_ref().map_or(0.0, |m| m.rho);
        let mut out: Vec<_> = self.entries.iter().zip(&self.weights).map(|(&e, &w)| (e, (1.0 - rho) * w)).collect();
        if let Some(m) = &self.mix {
            out.extend(m.entries.iter().map(|&e| (e, rho / m.entries.len() as f64)));
        }
        out
    }
}

fn sorted_refs(set: &[Triplet], part: Part) -> Vec<TripletRef> {
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.sort_by(|&a, &b| set[a].id.cmp(&set[b].id));
    idx.into_iter().map(|index| TripletRef { part, index }).collect()
}

/// Uniform weights over the clean set, ordered by triplet id.
pub fn build_d1(clean: &[Triplet]) -> Result<StageDataset> {
    if clean.is_empty() {
        return Err(config_err!("stage 1 needs a non-empty clean set"));
    }
    let entries = sorted_refs(clean, Part::Clean);
    let n = entries.len();
    Ok(StageDataset {
        name: STAGES[0].into(),
        entries,
        weights: vec![1.0 / n as f64; n],
        mix: None,
    })
}

/// Weights proportional to `consistency_weight ^ gamma`.
pub fn build_d2(clean: &[Triplet], gamma: f64) -> Result<StageDataset> {
    let mut d = build_d1(clean)?;
    let raw: Vec<f64> = d
        .entries
        .iter()
        .map(|e| clean[e.index].consistency_weight.max(0.0).powf(gamma))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || clean.iter().all(|t| t.consistency_weight <= 0.0) {
        return Err(config_err!("every clean triplet has zero content consistency"));
    }
    d.weights = raw.iter().map(|w| w / total).collect();
    d.name = STAGES[1].into();
    Ok(d)
}

/// D2 with a synthetic slice drawn with probability `rho`.
pub fn build_d3(d2: &StageDataset, synthetic: &[Triplet], rho: f64) -> Result<StageDataset> {
    if synthetic.is_empty() {
        return Err(config_err!("stage 3 needs a non-empty synthetic set"));
    }
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(config_err!("synthetic mix ratio {rho} outside (0, 0.5]"));
    }
    Ok(StageDataset {
        name: STAGES[2].into(),
        entries: d2.entries.clone(),
        weights: d2.weights.clone(),
        mix: Some(SynthMix {
            entries: sorted_refs(synthetic, Part::Synthetic),
            rho,
        }),
    })
}

/// Uniform over clean and synthetic together, for the single-stage ablation.
pub fn build_naive(clean: &[Triplet], synthetic: &[Triplet]) -> Result<StageDataset> {
    let mut entries = sorted_refs(clean, Part::Clean);
    entries.extend(sorted_refs(synthetic, Part::Synthetic));
    if entries.is_empty() {
        return Err(config_err!("baseline needs triplets"));
    }
    let n = entries.len();
    Ok(StageDataset {
        name: BASELINE.into(),
        entries,
        weights: vec![1.0 / n as f64; n],
        mix: None,
    })
}

pub fn resolve(corpus: &Corpus, r: TripletRef) -> &Triplet {
    match r.part {
        Part::Clean => &corpus.clean[r.index],
        Part::Synthetic => &corpus.synthetic[r.index],
    }
}

/// Where and how often a stage writes resumable snapshots.
#[derive(Debug, Clone)]
pub struct Snapshots<'a> {
    pub dir: &'a Path,
    pub every: usize,
    pub resume: bool,
    /// Stop after this many total steps (simulates an interruption).
    pub halt_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub adapter: LoraAdapter<f32>,
    pub losses: Vec<f64>,
    /// False when stopped early by `halt_after`.
    pub complete: bool,
}

#[derive(Serialize, Deserialize)]
struct ResumeState {
    stage: String,
    step: usize,
    adam_step: u64,
    rng: RngState,
    losses: Vec<f64>,
}

fn partial_stem(stage: &str) -> String {
    format!("{stage}.partial")
}

fn write_snapshot(
    dir: &Path,
    stage: &str,
    step: usize,
    adapter: &LoraAdapter<f32>,
    adam: &Adam<f32>,
    rng: &Rng,
    losses: &[f64],
    cfg: &crate::dit::ModelConfig,
) -> Result<()> {
    let stem = partial_stem(stage);
    let mut c = adapter.to_checkpoint();
    c.push_params("adam.m.", &adam.state.m);
    c.push_params("adam.v.", &adam.state.v);
    write_checkpoint(&dir.join(format!("{stem}.opt.tsty")), &c)?;
    save_adapter(adapter, cfg, dir, &stem)?;
    let state = ResumeState {
        stage: stage.to_string(),
        step,
        adam_step: adam.state.step,
        rng: rng.state(),
        losses: losses.to_vec(),
    };
    let json = serde_json::to_string(&state).expect("resume state serializes");
    write_atomic(&dir.join(format!("{stem}.json")), json.as_bytes())
}

fn read_snapshot(dir: &Path, stage: &str, lr: f64) -> Result<Option<(usize, LoraAdapter<f32>, Adam<f32>, Rng, Vec<f64>)>> {
    let stem = partial_stem(stage);
    let json_path = dir.join(format!("{stem}.json"));
    if !json_path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let state: ResumeState = serde_json::from_str(&text).map_err(|e| Error::Resume(format!("{}: {e}", json_path.display())))?;
    if state.stage != stage {
        return Err(Error::Resume(format!("snapshot belongs to `{}`, not `{stage}`", state.stage)));
    }
    let adapter = load_adapter(dir, &stem)?;
    let opt = read_checkpoint(&dir.join(format!("{stem}.opt.tsty")))?;
    let adam = Adam::with_state(
        AdamConfig::with_lr(lr),
        AdamState {
            step: state.adam_step,
            m: opt.params("adam.m."),
            v: opt.params("adam.v."),
        },
    )?;
    Ok(Some((state.step, adapter, adam, Rng::from_state(state.rng), state.losses)))
}

fn remove_snapshot(dir: &Path, stage: &str) {
    let stem = partial_stem(stage);
    for ext in ["json", "tsty", "cfg", "opt.tsty"] {
        let _ = fs::remove_file(dir.join(format!("{stem}.{ext}")));
    }
}

/// Trains `adapter` on `dataset` for `steps` optimizer steps with the base
/// frozen. Each step samples triplets by weight, draws `t` and noise, and
/// applies Adam to the adapter factors only. Optimizer moments start fresh.
#[allow(clippy::too_many_arguments)]
pub fn train_stage(
    model: &BaseModel,
    corpus: &Corpus,
    mut adapter: LoraAdapter<f32>,
    dataset: &StageDataset,
    steps: usize,
    lr: f64,
    batch: usize,
    seed: u64,
    snapshots: Option<&Snapshots<'_>>,
) -> Result<StageOutcome> {
    if steps == 0 || batch == 0 {
        return Err(config_err!("stage `{}` needs positive steps and batch", dataset.name));
    }
    let stage = dataset.name.as_str();
    let mut adam = Adam::new(AdamConfig::with_lr(lr))?;
    let mut rng = Rng::new(seed).split(stage);
    let mut losses = Vec::with_capacity(steps);
    let mut start = 0;
    if let Some(s) = snapshots.filter(|s| s.resume) {
        if let Some((step, a, opt, r, l)) = read_snapshot(s.dir, stage, lr)? {
            (start, adapter, adam, rng, losses) = (step, a, opt, r, l);
        }
    }
    for step in start..steps {
        if let Some(halt) = snapshots.and_then(|s| s.halt_after) {
            if step >= halt {
                return Ok(StageOutcome {
                    adapter,
                    losses,
                    complete: false,
                });
            }
        }
        let mut grads = std::collections::BTreeMap::new();
        let mut loss_sum = 0.0;
        for _ in 0..batch {
            let r = dataset.sample(&mut rng);
            let t = resolve(corpus, r);
            let ex = Example::new(&t.target, &t.content_ref, &t.style_ref)?;
            let (loss, g) = flow_step(model, Some(&adapter), Trainable::Adapter, &ex, &mut rng)
                .map_err(|e| e.locate(|| format!("{stage} step {step} on triplet {}", t.id)))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "{stage}: non-finite loss at step {step} on triplet {}",
                    t.id
                )));
            }
            loss_sum += loss;
            accumulate(&mut grads, g)?;
        }
        if batch > 1 {
            scale_grads(&mut grads, 1.0 / batch as f32);
        }
        adam.step(&mut adapter.params, &grads)?;
        losses.push(loss_sum / batch as f64);
        if let Some(s) = snapshots {
            if s.every > 0 && (step + 1) % s.every == 0 && step + 1 < steps {
                write_snapshot(s.dir, stage, step + 1, &adapter, &adam, &rng, &losses, &model.dit.cfg)?;
            }
        }
    }
    Ok(StageOutcome {
        adapter,
        losses,
        complete: true,
    })
}

/// Evaluation settings shared by stage reports and the eval command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub sample_steps: usize,
    pub seed: u64,
    /// Evaluate at most this many triplets per split (0 = all).
    pub limit: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            sample_steps: crate::flow::DEFAULT_SAMPLE_STEPS,
            seed: 0,
            limit: 0,
        }
    }
}

/// Up to `limit` triplets spread evenly over `set`.
pub fn spread<T>(set: &[T], limit: usize) -> Vec<&T> {
    if limit == 0 || limit >= set.len() {
        return set.iter().collect();
    }
    (0..limit).map(|i| &set[i * set.len() / limit]).collect()
}

/// Stylizes each triplet's content with its own style reference and scores
/// the result against that reference and the triplet's descriptor.
pub fn evaluate_triplets(
    model: &BaseModel,
    adapter: Option<&LoraAdapter<f32>>,
    triplets: &[&Triplet],
    opts: &EvalOptions,
) -> EvalReport {
    let records = triplets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let seed = Rng::new(opts.seed).split(&t.id).next_u64();
            let sample = SampleOptions {
                steps: opts.sample_steps,
                seed,
                ..SampleOptions::default()
            };
            let mut rec = PairRecord {
                style_index: i,
                content_index: i,
                style_id: t.style_id,
                style_sim: None,
                content_score: None,
                cpc: Vec::new(),
                cpc_at_05: None,
                cpc_range: None,
                error: None,
            };
            match stylize(model, adapter, &t.content_ref, &t.style_ref, sample) {
                Ok(img) => {
                    let (s, c, cpc, range) = score_pair(&img, &t.style_ref, &t.descriptor);
                    rec.style_sim = Some(s);
                    rec.content_score = Some(c);
                    rec.cpc_at_05 = Some(crate::metrics::cpc_from_scores(s, c, 0.5));
                    rec.cpc = cpc;
                    rec.cpc_range = Some(range);
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect();
    EvalReport::from_records(records)
}

/// Held-out benchmark: one reference per held-out style, paired with the
/// first `n_contents` held-out content layouts in every combination.
pub fn heldout_benchmark(corpus: &Corpus, n_contents: usize) -> Result<(Vec<StyleRef>, Vec<ContentSpec>)> {
    let mut styles: Vec<StyleRef> = Vec::new();
    for t in &corpus.heldout {
        if !styles.iter().any(|s| s.style_id == t.style_id) {
            styles.push(StyleRef {
                style_id: t.style_id,
                image: t.style_ref.clone(),
            });
        }
    }
    let contents: Vec<ContentSpec> = corpus
        .heldout
        .iter()
        .take(n_contents)
        .map(|t| ContentSpec {
            descriptor: t.descriptor.clone(),
            width: t.content_ref.width,
            height: t.content_ref.height,
        })
        .collect();
    if styles.is_empty() || contents.is_empty() {
        return Err(config_err!("held-out benchmark is empty"));
    }
    Ok((styles, contents))
}

/// Stylizes every (style, content) pair of the held-out benchmark and
/// scores it.
pub fn run_benchmark(
    model: &BaseModel,
    adapter: Option<&LoraAdapter<f32>>,
    styles: &[StyleRef],
    contents: &[ContentSpec],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let size = model.dit.cfg.image_size;
    evaluate_pairs(
        |si, s, ci, c| {
            let content = render(&c.descriptor, c.width, c.height);
            let sample = SampleOptions {
                steps: opts.sample_steps,
                seed: Rng::new(opts.seed).split_index("pair", (si * contents.len() + ci) as u64).next_u64(),
                ..SampleOptions::default()
            };
            let style = if s.image.width == size { s.image.clone() } else { s.image.resize(size, size) };
            stylize(model, adapter, &content, &style, sample)
        },
        styles,
        contents,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub pairs: usize,
    pub median_style_sim: f64,
    pub median_content_score: f64,
    pub mean_style_sim: f64,
    pub mean_content_score: f64,
    pub cpc_at_05: f64,
    pub cpc_range: f64,
}

impl SplitSummary {
    pub fn from_report(r: &EvalReport) -> Self {
        let median = |f: fn(&PairRecord) -> Option<f64>| {
            let mut v: Vec<f64> = r.records.iter().filter_map(f).collect();
            v.sort_by(f64::total_cmp);
            if v.is_empty() {
                0.0
            } else if v.len() % 2 == 1 {
                v[v.len() / 2]
            } else {
                0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
            }
        };
        SplitSummary {
            pairs: r.aggregate.scored,
            median_style_sim: median(|p| p.style_sim),
            median_content_score: median(|p| p.content_score),
            mean_style_sim: r.aggregate.style_sim,
            mean_content_score: r.aggregate.content_score,
            cpc_at_05: r.aggregate.cpc_at_05,
            cpc_range: r.aggregate.cpc_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub lineage: Vec<String>,
    pub steps: usize,
    pub first_window_loss: f64,
    pub last_window_loss: f64,
    pub held_in: SplitSummary,
    pub held_out: SplitSummary,
}

pub fn stage_report(
    model: &BaseModel,
    corpus: &Corpus,
    adapter: &LoraAdapter<f32>,
    stage: &str,
    losses: &[f64],
    opts: &EvalOptions,
) -> StageReport {
    let windows = windowed_means(losses, 50);
    let held_in = evaluate_triplets(model, Some(adapter), &spread(&corpus.validation, opts.limit), opts);
    let held_out = evaluate_triplets(model, Some(adapter), &spread(&corpus.heldout, opts.limit), opts);
    StageReport {
        stage: stage.to_string(),
        lineage: adapter.lineage.clone(),
        steps: losses.len(),
        first_window_loss: windows.first().copied().unwrap_or(f64::NAN),
        last_window_loss: windows.last().copied().unwrap_or(f64::NAN),
        held_in: SplitSummary::from_report(&held_in),
        held_out: SplitSummary::from_report(&held_out),
    }
}

fn write_stage_outputs(
    dir: &Path,
    model: &BaseModel,
    adapter: &LoraAdapter<f32>,
    stage: &str,
    losses: &[f64],
    report: &StageReport,
) -> Result<()> {
    save_adapter(adapter, &model.dit.cfg, dir, stage)?;
    let curve: String = losses.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(&dir.join(format!("{stage}.loss")), curve.as_bytes())?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_atomic(&dir.join(format!("{stage}.report.json")), json.as_bytes())
}

/// Which stages to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    One(usize),
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumOutcome {
    pub adapters: Vec<(String, LoraAdapter<f32>)>,
    pub reports: Vec<StageReport>,
    pub losses: Vec<Vec<f64>>,
}

fn stage_done(dir: &Path, stage: &str) -> bool {
    dir.join(format!("{stage}.tsty")).exists() && dir.join(format!("{stage}.cfg")).exists()
}

/// Runs the selected stages in order, chaining the adapter through them and
/// writing `<stage>.tsty`, `.cfg`, `.loss` and `.report.json` per stage.
/// With `resume`, finished stages are loaded instead of retrained and an
/// interrupted stage continues from its last snapshot; without it, existing
/// stage outputs are an error so that they are never overwritten.
pub fn run_curriculum(
    cfg: &CurriculumConfig,
    corpus: &Corpus,
    model: &BaseModel,
    dir: &Path,
    selection: StageSelection,
    resume: bool,
    eval: &EvalOptions,
) -> Result<CurriculumOutcome> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let range = match selection {
        StageSelection::All => 0..3,
        StageSelection::One(k) if (1..=3).contains(&k) => k - 1..k,
        StageSelection::One(k) => return Err(config_err!("no stage {k}; stages are 1, 2, 3")),
    };
    let d1 = build_d1(&corpus.clean)?;
    let d2 = build_d2(&corpus.clean, cfg.gamma)?;
    let d3 = build_d3(&d2, &corpus.synthetic, cfg.rho)?;
    let datasets = [d1, d2, d3];

    let mut prev = if range.start == 0 {
        let mut rng = Rng::new(cfg.seed).split("lora-init");
        LoraAdapter::attach(&model.params, &model.dit.cfg.adapter_targets(), cfg.rank, cfg.alpha, &mut rng)?
    } else {
        let before = STAGES[range.start - 1];
        if !stage_done(dir, before) {
            return Err(Error::Resume(format!(
                "stage {} needs the `{before}` checkpoint in {}",
                range.start + 1,
                dir.display()
            )));
        }
        load_adapter(dir, before)?
    };

    let mut out = CurriculumOutcome {
        adapters: Vec::new(),
        reports: Vec::new(),
        losses: Vec::new(),
    };
    for k in range {
        let stage = STAGES[k];
        if stage_done(dir, stage) {
            if !resume {
                return Err(config_err!(
                    "`{stage}` already exists in {}; pass --resume or use a fresh directory",
                    dir.display()
                ));
            }
            prev = load_adapter(dir, stage)?;
            continue;
        }
        let adapter = prev.chain(stage)?;
        let snaps = Snapshots {
            dir,
            every: cfg.checkpoint_every,
            resume,
            halt_after: None,
        };
        let res = train_stage(model, corpus, adapter, &datasets[k], cfg.steps[k], cfg.lr, cfg.batch, cfg.seed, Some(&snaps))?;
        let report = stage_report(model, corpus, &res.adapter, stage, &res.losses, eval);
        write_stage_outputs(dir, model, &res.adapter, stage, &res.losses, &report)?;
        remove_snapshot(dir, stage);
        out.adapters.push((stage.to_string(), res.adapter.clone()));
        out.reports.push(report);
        out.losses.push(res.losses);
        prev = res.adapter;
    }
    Ok(out)
}

/// Single-stage ablation: one fresh adapter on clean and synthetic mixed
/// uniformly, for the same total step budget as the curriculum.
pub fn run_baseline(
    cfg: &CurriculumConfig,
    corpus: &Corpus,
    model: &BaseModel,
    dir: Option<&Path>,
    eval: &EvalOptions,
) -> Result<(LoraAdapter<f32>, StageReport, Vec<f64>)> {
    cfg.validate()?;
    let data = build_naive(&corpus.clean, &corpus.synthetic)?;
    let mut rng = Rng::new(cfg.seed).split("lora-init");
    let adapter = LoraAdapter::attach(&model.params, &model.dit.cfg.adapter_targets(), cfg.rank, cfg.alpha, &mut rng)?
        .chain(BASELINE)?;
    let total = cfg.steps.iter().sum();
    let res = train_stage(model, corpus, adapter, &data, total, cfg.lr, cfg.batch, cfg.seed, None)?;
    let report = stage_report(model, corpus, &res.adapter, BASELINE, &res.losses, eval);
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_stage_outputs(dir, model, &res.adapter, BASELINE, &res.losses, &report)?;
    }
    Ok((res.adapter, report, res.losses))
}

/// Fraction of synthetic draws in `n` samples from `d`.
pub fn synthetic_fraction(d: &StageDataset, n: usize, rng: &mut Rng) -> f64 {
    (0..n).filter(|_| d.sample(rng).part == Part::Synthetic).count() as f64 / n as f64
}

/// Provenance check used by tests and reports.
pub fn provenance_of(corpus: &Corpus, r: TripletRef) -> Provenance {
    resolve(corpus, r).provenance
}
