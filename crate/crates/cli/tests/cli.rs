use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use appmatch::baselines::{majority_rank, NnOptions};
use appmatch::corpus::{generate_synthetic, load_corpus, split_corpus, SynthConfig};
use appmatch::embedding::RandomEncoder;
use appmatch::eval::{build_one_shot_split, evaluate_model, one_shot_evaluate, NnRanker};
use tempfile::TempDir;

fn appmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_appmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_ok(cmd: &str, config: &Path, out: &Path) {
    let o = appmatch(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn csv_row(text: &str, name: &str) -> Vec<f64> {
    let line = text
        .lines()
        .find(|l| l.split(',').next() == Some(name))
        .unwrap();
    line.split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect()
}

const ONESHOT: &str = "seed = 1
embeddings = \"random:50:1\"
n_max = 5
train.n_restarts = 1
train.batch_size = 16
train.max_epochs = 30
train.monitor = \"top1_purity\"
[synth]
n_apps = 30
n_samples = 300
";

#[test]
fn gen_data_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "seed = 5\nsynth.n_samples = 120\n");
    let out = tmp.path().join("out");
    run_ok("gen-data", &cfg, &out);

    let loaded = load_corpus(&out.join("corpus.jsonl")).unwrap();
    let cfg = SynthConfig {
        n_samples: 120,
        ..SynthConfig::default()
    };
    assert_eq!(
        loaded.records(),
        generate_synthetic(&cfg, 5).unwrap().records()
    );
    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    assert!(stats.starts_with("histogram,key,count\n"));
}

#[test]
fn every_command_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let configs = [
        ("gen-data", "seed = 2\nsynth.n_samples = 100\n"),
        ("stats", "seed = 2\nsynth.n_samples = 100\n"),
        (
            "run",
            "seed = 2\nmodel.kind = \"memnet\"\nmodel.hops = 2\ntrain.n_restarts = 2\ntrain.max_epochs = 5\nsynth.n_samples = 100\n",
        ),
        ("run", "seed = 2\nmodel.kind = \"nn\"\nsynth.n_samples = 100\n"),
        ("oneshot", ONESHOT),
    ];
    for (i, (cmd, body)) in configs.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("c{i}.toml"), body);
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        run_ok(cmd, &cfg, &a);
        run_ok(cmd, &cfg, &b);
        let (fa, fb) = (files(&a), files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{cmd} output differs between runs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "seed = 2\nsynth.n_samples = 100\n");
    let out = tmp.path().join("o");
    let o = appmatch(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert!(o.status.success());
    let cfg = SynthConfig {
        n_samples: 100,
        ..SynthConfig::default()
    };
    let expected = generate_synthetic(&cfg, 9).unwrap().to_jsonl();
    assert_eq!(
        fs::read_to_string(out.join("corpus.jsonl")).unwrap(),
        expected
    );
}

#[test]
fn invalid_configs_exit_2_and_write_nothing() {
    let tmp = TempDir::new().unwrap();
    for (i, (cmd, body)) in [
        ("gen-data", "synth.n_samples = 0\n"),
        ("run", "synth.n_samples = 100\n"),
        (
            "run",
            "model.kind = \"nn\"\nmodel.hops = 2\nsynth.n_samples = 100\n",
        ),
        ("gen-data", "corpus.path = \"x.jsonl\"\n"),
        (
            "oneshot",
            "oneshot.validation_fraction = 1.5\nsynth.n_samples = 100\n",
        ),
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(tmp.path(), &format!("c{i}.toml"), body);
        let out = tmp.path().join(format!("o{i}"));
        let o = appmatch(&[
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        assert!(!o.stderr.is_empty());
        assert!(!out.exists(), "{body}: output directory was created");
    }
}

#[test]
fn runtime_failure_exits_1() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "corpus.path = \"missing.jsonl\"\n");
    let out = tmp.path().join("o");
    let o = appmatch(&[
        "stats",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn majority_report_matches_library() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 4\nmodel.kind = \"majority\"\nsynth.n_samples = 150\n",
    );
    let out = tmp.path().join("o");
    run_ok("run", &cfg, &out);

    let synth = SynthConfig {
        n_samples: 150,
        ..SynthConfig::default()
    };
    let corpus = generate_synthetic(&synth, 4).unwrap();
    let split = split_corpus(&corpus, (0.6, 0.15, 0.25), 4).unwrap();
    let seen = split.train_and_validation();
    let majority = majority_rank(seen.iter().map(|&i| corpus.labels(i)), corpus.vocab()).unwrap();
    let actuals: Vec<&[usize]> = split.test.iter().map(|&i| corpus.labels(i)).collect();
    let report = evaluate_model(|_| Ok(majority.top(10)), &actuals, None, 10).unwrap();

    assert_eq!(
        fs::read_to_string(out.join("report.csv")).unwrap(),
        report.to_csv()
    );
    assert_eq!(
        fs::read_to_string(out.join("history.csv")).unwrap(),
        "restart,epoch,train_loss,val_metric\n"
    );
    assert!(!out.join("checkpoint.bin").exists());
}

#[test]
fn matchnet_run_reaches_90_top1_on_separable_corpus() {
    let tmp = TempDir::new().unwrap();
    let body = "seed = 7\nmodel.kind = \"matchnet\"\nmodel.shared = true\ntrain.n_restarts = 1\ntrain.monitor = \"top1_purity\"\n[synth]\n";
    let cfg = write_config(tmp.path(), "c.toml", body);
    let out = tmp.path().join("o");
    run_ok("run", &cfg, &out);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let purity = csv_row(&csv, "purity");
    assert_eq!(purity.len(), 10);
    assert!(purity[0] >= 90.0, "{csv}");
    assert!(out.join("checkpoint.bin").exists());
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.lines().count() > 1);
}

#[test]
fn oneshot_report_format_and_nn_matches_library() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", ONESHOT);
    let out = tmp.path().join("o");
    run_ok("oneshot", &cfg, &out);

    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "model,top1,top2,top3,top4,top5");
    assert!(lines[1].starts_with("nn,") && lines[2].starts_with("matchnet,"));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("split.json")).unwrap()).unwrap();
    assert_eq!(manifest["violations"], serde_json::json!([]));

    let synth = SynthConfig {
        n_apps: 30,
        n_samples: 300,
        ..SynthConfig::default()
    };
    let corpus = generate_synthetic(&synth, 1).unwrap();
    let split = build_one_shot_split(&corpus, 1, 3).unwrap();
    assert_eq!(manifest["split"], serde_json::to_value(&split).unwrap());
    let enc = RandomEncoder::new(50, 1);
    let acc = one_shot_evaluate(
        &NnRanker::new(&enc, &split.s2_support, NnOptions::default()),
        &split,
        5,
    )
    .unwrap();
    let expected: Vec<f64> = acc
        .iter()
        .map(|a| format!("{:.2}", 100.0 * a).parse().unwrap())
        .collect();
    assert_eq!(csv_row(&csv, "nn"), expected);
}
