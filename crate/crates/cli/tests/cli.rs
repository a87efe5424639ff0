use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_timelowfer"))
}

fn synthetic() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn timelowfer")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn small_train(out: &Path, extra: &[&str]) -> Output {
    let data = synthetic();
    let mut args = vec![
        "train",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dim",
        "8",
        "--k",
        "2",
        "--batch-size",
        "32",
        "--epochs",
        "2",
    ];
    args.extend_from_slice(extra);
    run(&args)
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn train_smoke_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = small_train(&out, &["--variant", "cfb", "--encoder", "cte"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let history = std::fs::read_to_string(out.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    for line in history.lines() {
        assert!(json(line)["val"]["mrr"].is_number());
    }
    let config = json(&std::fs::read_to_string(out.join("config.json")).unwrap());
    assert_eq!(config["variant"], "cfb");
    assert_eq!(config["encoder"], "cte");
    assert_eq!(config["d_t"], 8);
    let metrics = json(&std::fs::read_to_string(out.join("metrics.json")).unwrap());
    assert_eq!(metrics["epochs_trained"], 2);
    assert!(metrics["test"]["filtered"]["mrr"].as_f64().unwrap() > 0.0);
    assert!(out.join("checkpoints/best/manifest.json").exists());
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train",
        "--dataset",
        dir.path().join("nope").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn divergence_is_a_numeric_failure_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_train(
        &dir.path().join("run"),
        &["--variant", "ftp", "--k", "1", "--lr", "1e100", "--epochs", "20"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("epoch") && err.contains("batch"), "{err}");
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // FTP needs k = 1.
    assert_eq!(code(&small_train(&out, &["--variant", "ftp", "--k", "4"])), 1);
    assert_eq!(code(&small_train(&out, &["--eval-interval", "0"])), 1);
    assert_eq!(code(&run(&["train", "--no-such-flag"])), 1);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"learning_rate": 0.1}"#).unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("learning_rate"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("run.json");
    let body = serde_json::json!({
        "dataset": synthetic(),
        "output": out,
        "variant": "t",
        "d_e": 8, "d_r": 8, "d_t": 8, "k": 2,
        "epochs": 5,
        "batch_size": 64,
        "eval_interval": 2,
        "checkpoint": "last"
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "3", "--seed", "11"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let history = std::fs::read_to_string(out.join("history.jsonl")).unwrap();
    let vals: Vec<bool> = history.lines().map(|l| !json(l)["val"].is_null()).collect();
    assert_eq!(vals, [false, true, false]);
    let echoed = json(&std::fs::read_to_string(out.join("config.json")).unwrap());
    assert_eq!(echoed["epochs"], 3);
    assert_eq!(echoed["seed"], 11);
    assert_eq!(echoed["variant"], "t");
    assert_eq!(echoed["checkpoint"], "last");
    assert!(out.join("checkpoints/last/manifest.json").exists());
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&small_train(out, &["--variant", "tnt", "--seed", "5"])), 0);
    }
    for file in ["config.json", "metrics.json", "checkpoints/best/entity.f64", "checkpoints/best/u.f64"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        if file == "config.json" {
            // The output directory differs by construction.
            let (mut x, mut y) = (json(std::str::from_utf8(&x).unwrap()), json(std::str::from_utf8(&y).unwrap()));
            x["output"] = serde_json::Value::Null;
            y["output"] = serde_json::Value::Null;
            assert_eq!(x, y);
        } else {
            assert_eq!(x, y, "{file}");
        }
    }
    let strip = |p: &Path| -> Vec<serde_json::Value> {
        std::fs::read_to_string(p.join("history.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v = json(l);
                v["seconds"] = serde_json::Value::Null;
                v
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn evaluate_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&small_train(&out, &["--variant", "lowfer", "--checkpoint", "every-1"])), 0);
    let ckpt = out.join("checkpoints/epoch-0002");
    let data = synthetic();
    let eval = |mode: &str, dataset: &Path, ckpt: &Path| {
        run(&[
            "evaluate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--dataset",
            dataset.to_str().unwrap(),
            "--split",
            "valid",
            "--mode",
            mode,
        ])
    };
    let f = eval("filtered", &data, &ckpt);
    let r = eval("raw", &data, &ckpt);
    assert_eq!(code(&f), 0, "{}", stderr(&f));
    let (f, r) = (json(&stdout(&f)), json(&stdout(&r)));
    assert_eq!(f["num_queries"], 40);
    assert!(r["mrr"].as_f64().unwrap() <= f["mrr"].as_f64().unwrap());

    // A dataset with a different vocabulary.
    let other = dir.path().join("other");
    std::fs::create_dir(&other).unwrap();
    std::fs::write(other.join("train"), "x\tr\ty\t2014-01-01\n").unwrap();
    assert_eq!(code(&eval("filtered", &other, &ckpt)), 2);
    assert_eq!(code(&eval("filtered", &dir.path().join("absent"), &ckpt)), 2);

    std::fs::write(ckpt.join("manifest.json"), "{").unwrap();
    assert_eq!(code(&eval("filtered", &data, &ckpt)), 1);
}

#[test]
fn stats_reports_counts() {
    let o = run(&["stats", "--dataset", synthetic().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = json(&stdout(&o));
    assert_eq!((s["num_train"].as_u64(), s["num_valid"].as_u64(), s["num_test"].as_u64()), (Some(160), Some(20), Some(20)));
    assert_eq!(s["num_relations"], 5);
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["stats", "--dataset", empty.path().to_str().unwrap()])), 2);
}

#[test]
fn encode_time_rows() {
    let one = run(&["encode-time", "--from", "2014-01-01", "--to", "2014-01-01"]);
    let text = stdout(&one);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let doy = header.iter().position(|h| *h == "doy").unwrap();
    assert_eq!(row[doy], "0");

    let year = |y: &str| stdout(&run(&["encode-time", "--from", &format!("{y}-01-01"), "--to", &format!("{y}-12-31")])).lines().count() - 1;
    assert_eq!(year("2014"), 365);
    assert_eq!(year("2012"), 366);

    let ds = run(&["encode-time", "--dataset", synthetic().to_str().unwrap()]);
    assert_eq!(stdout(&ds).lines().count(), 13);
    assert_eq!(code(&run(&["encode-time", "--from", "2014-02-30", "--to", "2014-03-01"])), 1);
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<u64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn heatmap_counts_and_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic();
    let fine = dir.path().join("fine.csv");
    let coarse = dir.path().join("coarse.csv");
    let conc = dir.path().join("conc.csv");
    let o = run(&["heatmap", "--dataset", data.to_str().unwrap(), "--out", fine.to_str().unwrap(), "--concentration", conc.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["heatmap", "--dataset", data.to_str().unwrap(), "--out", coarse.to_str().unwrap(), "--time-rate", "5"]);
    assert_eq!(code(&o), 0);
    let (fh, f) = read_csv(&fine);
    let (ch, c) = read_csv(&coarse);
    assert_eq!(fh.len(), 13);
    assert_eq!(ch.len(), 4);
    assert_eq!(f.iter().flatten().sum::<u64>(), 200);
    for (fr, cr) in f.iter().zip(&c) {
        let summed: Vec<u64> = fr.chunks(5).map(|w| w.iter().sum()).collect();
        assert_eq!(&summed, cr);
    }
    let conc_text = std::fs::read_to_string(&conc).unwrap();
    let totals: u64 = conc_text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(totals, 200);

    let unwritable = dir.path().join("missing-dir/h.csv");
    let o = run(&["heatmap", "--dataset", data.to_str().unwrap(), "--out", unwritable.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
