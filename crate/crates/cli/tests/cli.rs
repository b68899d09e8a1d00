//! End-to-end runs of the `stylegraft` binary on a tiny configuration.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
# tiny world and model so every command runs in seconds
[world]
seed = 3
size = 16
n_clean_styles = 2
n_synth_styles = 2
n_heldout_styles = 2
per_style_clean = 2
per_style_synth = 2
per_style_heldout = 2
val_per_style = 1

[model]
image_size = 16
patch_size = 4
dim = 16
depth = 1
heads = 2
mlp_ratio = 2
prompt_vocab = 2
rope_axes = [2, 2, 4]

[pretrain]
steps = 6

[flow]
sample_steps = 2

[curriculum]
steps = [3, 2, 3]
rank = 2
alpha = 2.0
checkpoint_every = 2

[video]
frames = 3
size = 16
dim = 16
depth = 1
heads = 2
rope_axes = [2, 2, 4]
steps = 3
clips = 2
batch = 2

[eval]
limit = 2
contents = 2
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stylegraft"))
        .current_dir(dir)
        .arg("--config")
        .arg(dir.join("tiny.toml"))
        .args(args)
        .output()
        .unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stdout: {}\nstderr: {}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    o
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(tree(&p));
        } else {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_reports_counts_refuses_overwrite_and_is_deterministic() {
    let w = workspace();
    let o = ok(run(w.path(), &["gen-data", "--out", "a"]));
    assert!(stdout(&o).contains("clean 4 validation 2 synthetic 4 heldout 4"), "{}", stdout(&o));
    assert!(w.path().join("a/resolved_config.toml").exists());

    assert_eq!(run(w.path(), &["gen-data", "--out", "a"]).status.code(), Some(2));
    ok(run(w.path(), &["gen-data", "--out", "a", "--force"]));
    ok(run(w.path(), &["gen-data", "--out", "b"]));
    assert_eq!(tree(&w.path().join("a")), tree(&w.path().join("b")));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let w = workspace();
    ok(run(w.path(), &["--seed", "11", "gen-data", "--out", "a"]));
    fs::copy(w.path().join("a/resolved_config.toml"), w.path().join("tiny.toml")).unwrap();
    ok(run(w.path(), &["gen-data", "--out", "b"]));
    assert_eq!(tree(&w.path().join("a")), tree(&w.path().join("b")));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let w = workspace();
    fs::write(w.path().join("typo.toml"), "[world]\nsede = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_stylegraft"))
        .args(["--config", "typo.toml", "gen-data", "--out", "x"])
        .current_dir(w.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));

    let o = run(w.path(), &["train", "--data", "missing", "--out", "run"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));

    ok(run(w.path(), &["gen-data", "--out", "data"]));
    ok(run(w.path(), &["pretrain", "--out", "run"]));
    fs::write(w.path().join("tiny.toml"), TINY.replace("rank = 2", "rank = 2\nlr = 1e30")).unwrap();
    let o = run(w.path(), &["train", "--data", "data", "--out", "run"]);
    assert_eq!(o.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_sample_and_eval_end_to_end() {
    let w = workspace();
    let p = w.path();
    ok(run(p, &["gen-data", "--out", "data"]));
    ok(run(p, &["pretrain", "--out", "run"]));
    ok(run(p, &["train", "--data", "data", "--out", "run", "--stage", "all"]));
    for stage in ["stage1", "stage2", "stage3"] {
        assert!(p.join(format!("run/{stage}.tsty")).exists());
    }
    ok(run(p, &["train", "--data", "data", "--out", "run", "--baseline"]));

    let style = fs::read_dir(p.join("data/images"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| {
            let name = f.file_name().unwrap().to_string_lossy().into_owned();
            name.starts_with("heldout") && name.ends_with("_style.ppm")
        })
        .unwrap();
    let wide = stylegraft::image::Image::filled(16, 8, [0.5, 0.2, 0.9]);
    wide.write_ppm(&p.join("wide.ppm")).unwrap();
    let args = |out: &'static str| {
        vec![
            "sample".to_string(),
            "--checkpoint".into(),
            "run/stage3".into(),
            "--style".into(),
            style.display().to_string(),
            "--content".into(),
            "wide.ppm".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let a: Vec<String> = args("a.ppm");
    let o = ok(run(p, &a.iter().map(String::as_str).collect::<Vec<_>>()));
    assert!(stdout(&o).contains("content 16x8; style reference resized to 8x8"), "{}", stdout(&o));
    let mut b = args("b.ppm");
    b.extend(["--prompt-id".into(), "0".into()]);
    ok(run(p, &b.iter().map(String::as_str).collect::<Vec<_>>()));
    assert_eq!(fs::read(p.join("a.ppm")).unwrap(), fs::read(p.join("b.ppm")).unwrap());

    ok(run(p, &["eval", "--checkpoint", "run/stage3", "--data", "data", "--out", "eval/a.jsonl"]));
    ok(run(p, &["eval", "--checkpoint", "run/stage3", "--data", "data", "--out", "eval/b.jsonl"]));
    let report = fs::read_to_string(p.join("eval/a.jsonl")).unwrap();
    assert_eq!(report, fs::read_to_string(p.join("eval/b.jsonl")).unwrap());
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 2 * 2 + 1);
    assert!(lines[0].contains("cpc_at_05") && lines[0].contains("cpc_range"));
    assert!(lines[4].contains("aggregate"));
}

#[test]
fn video_train_and_propagate() {
    let w = workspace();
    let p = w.path();
    let o = ok(run(p, &["video-train", "--out", "video"]));
    assert!(stdout(&o).contains("motion filter kept"));
    let clip = fs::read_dir(p.join("video/clips")).unwrap().map(|e| e.unwrap().path()).find(|d| d.is_dir()).unwrap();
    let first = clip.join("stylized_00.ppm");
    let clip_s = clip.display().to_string();
    let first_s = first.display().to_string();
    ok(run(p, &["video-propagate", "--checkpoint", "video/video", "--first-frame", &first_s, "--source", &clip_s, "--out", "prop"]));
    assert_eq!(fs::read_dir(p.join("prop")).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ppm")).count(), 3);
    assert!(p.join("prop/resolved_config.toml").exists());
}
