use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stylegraft::config::RunConfig;
use stylegraft::curriculum::{self, heldout_benchmark, run_baseline, run_benchmark, run_curriculum, StageSelection};
use stylegraft::dit::Init;
use stylegraft::image::Image;
use stylegraft::metrics::score_pair;
use stylegraft::pipeline::{load_adapter, pretrain_base, stylize, windowed_means, BaseModel};
use stylegraft::video::{self, VideoModel};
use stylegraft::world::{build_corpus, render, Corpus, SceneDescriptor};
use stylegraft::{Error, Result};

#[derive(Parser)]
#[command(name = "stylegraft", version, about = "Style transfer with a staged LoRA curriculum on a toy world")]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress output.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the procedural corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Pretrain the frozen base model.
    Pretrain {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the curriculum stages (or the naive-mix baseline).
    Train(TrainArgs),
    /// Stylize one content image with one style reference.
    Sample(SampleArgs),
    /// Score a checkpoint on the held-out style benchmark.
    Eval(EvalArgs),
    /// Train the video propagation model.
    VideoTrain {
        #[arg(long)]
        out: PathBuf,
        /// Clip directory written by an earlier run; generated when omitted.
        #[arg(long)]
        clips: Option<PathBuf>,
    },
    /// Propagate a stylized first frame through a source clip.
    VideoPropagate {
        /// Checkpoint stem, e.g. `runs/video/video`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        first_frame: PathBuf,
        /// Directory of `source_NN.ppm` frames.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory; must hold `base.tsty` from `pretrain` unless --base is given.
    #[arg(long)]
    out: PathBuf,
    /// Base model stem.
    #[arg(long)]
    base: Option<PathBuf>,
    /// 1, 2, 3 or all.
    #[arg(long, default_value = "all")]
    stage: String,
    #[arg(long)]
    resume: bool,
    /// Train the single-stage naive-mix ablation instead.
    #[arg(long)]
    baseline: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// Adapter stem, e.g. `runs/a/stage3`; omit to sample the base alone.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Base model stem; defaults to `base` next to the checkpoint.
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    style: PathBuf,
    /// Content PPM, or a JSON scene descriptor rendered at the world size.
    #[arg(long)]
    content: PathBuf,
    #[arg(long, default_value_t = 0)]
    prompt_id: usize,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Report path (JSON lines).
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        Error::Io { .. } | Error::Format(_) | Error::Resume(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stylegraft: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn stem_parts(stem: &Path) -> (PathBuf, String) {
    let dir = stem.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    (dir, name)
}

fn load_model(base: Option<&Path>, checkpoint: Option<&Path>) -> Result<BaseModel> {
    let stem = match (base, checkpoint) {
        (Some(b), _) => b.to_path_buf(),
        (None, Some(c)) => c.with_file_name("base"),
        (None, None) => return Err(Error::Config("either --base or --checkpoint is required".into())),
    };
    let (dir, name) = stem_parts(&stem);
    BaseModel::load(&dir, &name)
}

fn load_checkpoint(checkpoint: Option<&Path>) -> Result<Option<stylegraft::lora::LoraAdapter<f32>>> {
    checkpoint
        .map(|c| {
            let (dir, name) = stem_parts(c);
            load_adapter(&dir, &name)
        })
        .transpose()
}

fn require_corpus(dir: &Path) -> Result<Corpus> {
    if !dir.join("world.json").exists() {
        return Err(Error::io(
            dir.join("world.json"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no corpus here; run `gen-data` first"),
        ));
    }
    Corpus::load(dir)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    match &cli.command {
        Command::GenData { out, force } => {
            let non_empty = fs::read_dir(out).map(|mut d| d.next().is_some()).unwrap_or(false);
            if non_empty && !force {
                return Err(Error::Config(format!(
                    "{} is not empty; pass --force to overwrite",
                    out.display()
                )));
            }
            if non_empty {
                fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
            }
            let corpus = build_corpus(&cfg.world, &cfg.world.split())?;
            corpus.write(out)?;
            cfg.write_snapshot(out)?;
            println!(
                "clean {} validation {} synthetic {} heldout {}",
                corpus.clean.len(),
                corpus.validation.len(),
                corpus.synthetic.len(),
                corpus.heldout.len()
            );
        }
        Command::Pretrain { out } => {
            let model = BaseModel::fresh(cfg.model.clone(), Init::AdaLnZero, cfg.pretrain.seed)?;
            let (model, losses) = pretrain_base(model, &cfg.pretrain_config())?;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            model.save(out, "base")?;
            cfg.write_snapshot(out)?;
            let w = windowed_means(&losses, 50);
            say(format!(
                "pretrained {} steps: loss {:.4} -> {:.4}",
                losses.len(),
                w.first().copied().unwrap_or(f64::NAN),
                w.last().copied().unwrap_or(f64::NAN)
            ));
        }
        Command::Train(a) => {
            let corpus = require_corpus(&a.data)?;
            let base = a.base.clone().unwrap_or_else(|| a.out.join("base"));
            let model = load_model(Some(&base), None)?;
            let eval = cfg.eval_options();
            cfg.write_snapshot(&a.out)?;
            if a.baseline {
                let (_, report, _) = run_baseline(&cfg.curriculum, &corpus, &model, Some(&a.out), &eval)?;
                say(summary_line(&report));
                return Ok(());
            }
            let selection = match a.stage.as_str() {
                "all" => StageSelection::All,
                s => StageSelection::One(
                    s.parse()
                        .map_err(|_| Error::Config(format!("--stage must be 1, 2, 3 or all, got `{s}`")))?,
                ),
            };
            let out = run_curriculum(&cfg.curriculum, &corpus, &model, &a.out, selection, a.resume, &eval)?;
            for r in &out.reports {
                say(summary_line(r));
            }
        }
        Command::Sample(a) => {
            let model = load_model(a.base.as_deref(), a.checkpoint.as_deref())?;
            let adapter = load_checkpoint(a.checkpoint.as_deref())?;
            let style = Image::read_ppm(&a.style)?;
            let (content, descriptor) = if a.content.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&a.content).map_err(|e| Error::io(&a.content, e))?;
                let d: SceneDescriptor = serde_json::from_str(&text)
                    .map_err(|e| Error::Format(format!("{}: {e}", a.content.display())))?;
                (render(&d, cfg.world.size, cfg.world.size), Some(d))
            } else {
                (Image::read_ppm(&a.content)?, None)
            };
            let side = content.height.min(content.width);
            say(format!(
                "content {}x{}; style reference resized to {side}x{side}",
                content.width, content.height
            ));
            let mut opts = cfg.sample_options(a.sample_seed);
            opts.prompt_id = a.prompt_id;
            if let Some(s) = a.steps {
                opts.steps = s;
            }
            let img = stylize(&model, adapter.as_ref(), &content, &style, opts)?;
            img.write_ppm(&a.out)?;
            if let Some(d) = descriptor {
                let (s, c, _, range) = score_pair(&img, &style, &d);
                println!(
                    "style_sim {s:.4} content_score {c:.4} cpc@0.5 {:.4} cpc@0.3:0.9 {range:.4}",
                    stylegraft::metrics::cpc_from_scores(s, c, 0.5)
                );
            }
        }
        Command::Eval(a) => {
            let corpus = require_corpus(&a.data)?;
            let model = load_model(a.base.as_deref(), a.checkpoint.as_deref())?;
            let adapter = load_checkpoint(a.checkpoint.as_deref())?;
            let (styles, contents) = heldout_benchmark(&corpus, cfg.eval.contents)?;
            let report = run_benchmark(&model, adapter.as_ref(), &styles, &contents, &cfg.eval_options())?;
            report.write(&a.out)?;
            if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                cfg.write_snapshot(dir)?;
            }
            let g = &report.aggregate;
            println!(
                "pairs {} scored {} style_sim {:.4} content_score {:.4} cpc@0.5 {:.4} cpc@0.3:0.9 {:.4}",
                g.pairs, g.scored, g.style_sim, g.content_score, g.cpc_at_05, g.cpc_range
            );
        }
        Command::VideoTrain { out, clips } => {
            let vc = &cfg.video;
            let all = match clips {
                Some(dir) => video::read_clips(dir)?,
                None => video::gen_clips(cfg.world.seed, vc.clips, vc, vc.speed),
            };
            let (kept, report) = video::motion_filter(all, vc.tau)?;
            say(format!("motion filter kept {} discarded {}", report.kept.len(), report.discarded.len()));
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            video::write_clips(&out.join("clips"), &kept)?;
            let model = VideoModel::fresh(vc.clone(), cfg.world.seed)?;
            let (model, losses) = video::train_video(model, &kept, vc.steps, cfg.world.seed)?;
            model.save(out, "video")?;
            let curve: String = losses.iter().map(|l| format!("{l}\n")).collect();
            fs::write(out.join("video.loss"), curve).map_err(|e| Error::io(out.join("video.loss"), e))?;
            let filter = serde_json::to_string_pretty(&report).expect("report serializes");
            fs::write(out.join("motion_filter.json"), filter).map_err(|e| Error::io(out, e))?;
            cfg.write_snapshot(out)?;
            let w = windowed_means(&losses, 50);
            say(format!(
                "video loss {:.4} -> {:.4}",
                w.first().copied().unwrap_or(f64::NAN),
                w.last().copied().unwrap_or(f64::NAN)
            ));
        }
        Command::VideoPropagate {
            checkpoint,
            first_frame,
            source,
            out,
            steps,
        } => {
            let (dir, name) = stem_parts(checkpoint);
            let model = VideoModel::load(&dir, &name)?;
            let frames = video::read_frames(source, "source")?;
            let first = Image::read_ppm(first_frame)?;
            let steps = steps.unwrap_or(cfg.flow.sample_steps);
            let result = video::propagate(&model, &frames, &first, steps, cfg.eval.seed)?;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            for (k, f) in result.iter().enumerate() {
                f.write_ppm(&out.join(format!("stylized_{k:02}.ppm")))?;
            }
            cfg.write_snapshot(out)?;
            say(format!(
                "frame 0 psnr vs first frame {:.2} dB",
                stylegraft::image::psnr(&result[0], &first)
            ));
        }
    }
    Ok(())
}

fn summary_line(r: &curriculum::StageReport) -> String {
    format!(
        "{}: loss {:.4} -> {:.4}; held-in style {:.3} content {:.3}; held-out style {:.3} cpc@0.5 {:.3}",
        r.stage,
        r.first_window_loss,
        r.last_window_loss,
        r.held_in.median_style_sim,
        r.held_in.median_content_score,
        r.held_out.median_style_sim,
        r.held_out.cpc_at_05
    )
}
