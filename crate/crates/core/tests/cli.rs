use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use earcough::dsp::{self, DualChannelRecording};
use earcough::nn::{self, ModelParams};

fn earcough(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earcough")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_SPLIT: &str = r#"
[split]
train_users = [0]
val_users = [1]
test_users = [2]

[synth]
activity_scale = 0.05
"#;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    config: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        let config = root.join("small.toml");
        std::fs::write(&config, SMALL_SPLIT).unwrap();
        let data = root.join("data");
        let o = earcough(&["synth", "--users", "3", "--out", s(&data), "--config", s(&config)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let manifest = data.join("manifest.json");
        assert_eq!(stdout(&o).trim(), manifest.display().to_string());
        Fixture { _dir: dir, root, manifest, config }
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn profile_prints_one_row_per_rate() {
    let o = earcough(&["profile"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "sample_rate_khz,mflops,space_kb,flops,params,space_bytes");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("8,"));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["synth", "--users", "0", "--out", "x"],
        vec!["train", "--manifest", "m.json", "--rate", "11025", "--out", "m.ecn"],
        vec!["frobnicate"],
        vec!["profile", "--jobs", "0"],
        vec!["train", "--manifest", "m.json", "--out", "m.ecn", "--batch-size", "0"],
    ] {
        let o = earcough(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = earcough(&["eval", "--manifest", "missing.json", "--model", "missing.ecn", "--out", s(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(1));
    let junk = dir.path().join("junk.ecn");
    std::fs::write(&junk, b"not a model").unwrap();
    let o = earcough(&["detect", "--wav", "x.wav", "--model", s(&junk)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    let o = earcough(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["synth", "train", "eval", "ablate", "profile", "detect"] {
        assert!(stdout(&o).contains(sub));
    }
}

#[test]
fn detect_on_silence_emits_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let spec = nn::default_spec(8000).unwrap();
    let mut params = ModelParams::init(&spec, 0);
    // silent input reaches the head as zeros, so the head bias decides
    let head = params.layers.last_mut().unwrap();
    head.bias[nn::SUBJECT] = -4.0;
    head.bias[nn::OTHER] = 4.0;
    let model = dir.path().join("m.ecn");
    nn::save_model(&spec, &params, &model).unwrap();
    let wav = dir.path().join("silence.wav");
    let rec = DualChannelRecording::new(vec![0.0; 48000 * 5], vec![0.0; 48000 * 5], 48000, "silence").unwrap();
    dsp::write_recording(&rec, &wav, dsp::WavEncoding::Float32).unwrap();
    let o = earcough(&["detect", "--wav", s(&wav), "--model", s(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "");

    let out = dir.path().join("ev.ndjson");
    let o = earcough(&["detect", "--wav", s(&wav), "--model", s(&model), "--out", s(&out), "--threshold", "0.0"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(dir.path().join("ev.ndjson.run.toml").exists());

    let o = earcough(&["detect", "--wav", s(&wav), "--model", s(&model), "--per-window"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[3]["start_s"], 1.5);
    assert!(lines.iter().all(|v| v["p_subject"].as_f64().unwrap() < 0.01));
}

#[test]
fn train_then_eval_round_trip() {
    let f = fixture();
    let model = f.root.join("out/model.ecn");
    let o = earcough(&[
        "train", "--manifest", s(&f.manifest), "--rate", "8000", "--out", s(&model), "--config", s(&f.config),
        "--epochs", "2", "--epoch-size", "200", "--copies", "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = std::fs::read_to_string(f.root.join("out/model.ecn.history.csv")).unwrap();
    let rows = hist.lines().count() - 1;
    assert!((1..=2).contains(&rows));
    let run = f.root.join("out/model.ecn.run.toml");
    assert!(std::fs::read_to_string(&run).unwrap().contains("subcommand = \"train\""));

    let report = f.root.join("out/report.json");
    let o = earcough(&["eval", "--manifest", s(&f.manifest), "--model", s(&model), "--out", s(&report), "--config", s(&run)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["acc1", "f1_1", "acc2", "f1_2", "confusion", "resource"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(f.root.join("out/report.txt").exists());
    assert!(stdout(&o).contains("acc1"));
}

#[test]
fn synth_records_its_configuration() {
    let f = fixture();
    let run = std::fs::read_to_string(f.manifest.parent().unwrap().join("run_config.toml")).unwrap();
    assert!(run.contains("subcommand = \"synth\""));
    assert!(run.contains("n_users = 3"));
}
