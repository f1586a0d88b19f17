mod common;

use std::fs;
use std::path::Path;

use common::{randpad, snapshot, write_config, write_idx_fixture};
use serde_json::Value;

fn base_config(data: &Path) -> String {
    format!(
        "# fixture run\ndataset = fashion-mnist\ndata_dir = {}\narch = cnn-lite\nepochs = 2\nbatch_size = 32\nlr = 0.02\nseed = 5\n",
        data.display()
    )
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn error_line(o: &std::process::Output) -> String {
    stderr(o)
        .lines()
        .find(|l| l.starts_with("error: "))
        .unwrap_or_default()
        .to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn train_writes_artifacts_and_loss_decreases() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 512, 128);
    let cfg = write_config(tmp.path(), "run.cfg", &base_config(&data));
    let out = tmp.path().join("out");
    let o = randpad(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.csv", "summary.json", "model.rplb", "model.txt", "timing.txt"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,test_error");
    assert_eq!(lines.len(), 3);
    let loss = |l: &str| l.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(loss(lines[2]) < loss(lines[1]), "{csv}");

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["command"], "train");
    assert_eq!(summary["config"]["epochs"], "2");
    assert_eq!(summary["model"], "cnn-lite-rp0");
    assert!(summary["final_test_error"].as_f64().unwrap() < 0.5);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 128, 64);
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        &format!("{}rp_layers = 2\naugment = rc,rr,rf,re\n", base_config(&data)),
    );
    let mut snaps = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = randpad(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        snaps.push(snapshot(&out).into_iter().filter(|(n, _)| n != "timing.txt").collect::<Vec<_>>());
    }
    assert_eq!(snaps[0], snaps[1]);
    assert_eq!(snaps[0].len(), 4);
}

#[test]
fn padding_variants_differ_only_at_padding_sites() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 64, 32);
    let cfg = write_config(tmp.path(), "run.cfg", &format!("{}epochs = 1\n", base_config(&data)));
    let mut summaries = Vec::new();
    for k in ["0", "1"] {
        let out = tmp.path().join(format!("rp{k}"));
        let o = randpad(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--override",
            &format!("rp_layers={k}"),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        summaries.push(fs::read_to_string(out.join("model.txt")).unwrap());
    }
    let diff: Vec<(&str, &str)> = summaries[0]
        .lines()
        .zip(summaries[1].lines())
        .filter(|(a, b)| a != b)
        .collect();
    assert_eq!(diff.len(), 2, "{diff:?}");
    assert!(diff[0].0.starts_with("model "));
    assert!(diff[1].0.contains("pad site=0") && diff[1].1.contains("random"));
}

#[test]
fn eval_reproduces_training_error_and_rejects_wrong_architecture() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 128, 64);
    let cfg = write_config(tmp.path(), "run.cfg", &base_config(&data));
    let train_out = tmp.path().join("train");
    let o = randpad(&["train", "--config", cfg.to_str().unwrap(), "--out", train_out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = train_out.join("model.rplb");
    let expected = read_json(&train_out.join("summary.json"))["final_test_error"].as_f64().unwrap();

    let mut errors = Vec::new();
    for name in ["e1", "e2"] {
        let out = tmp.path().join(name);
        let o = randpad(&[
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--override",
            &format!("checkpoint={}", ckpt.display()),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        errors.push(read_json(&out.join("summary.json"))["test_error"].as_f64().unwrap());
    }
    assert_eq!(errors, vec![expected, expected]);

    let out = tmp.path().join("bad");
    let o = randpad(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--override",
        &format!("checkpoint={}", ckpt.display()),
        "arch=resnet-lite",
    ]);
    assert!(!o.status.success());
    let line = error_line(&o);
    assert!(line.starts_with("error: kind=format"), "{line}");
}

#[test]
fn failures_are_one_line_and_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 32, 16);

    let cfg = write_config(tmp.path(), "bad.cfg", "epochs = 1\nlearning_rate = 0.1\n");
    let o = randpad(&["train", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o1").to_str().unwrap()]);
    assert!(!o.status.success());
    let line = error_line(&o);
    assert!(line.starts_with("error: kind=config") && line.contains("learning_rate"), "{line}");
    assert_eq!(stderr(&o).lines().filter(|l| l.starts_with("error")).count(), 1);

    let cfg = write_config(tmp.path(), "missing.cfg", "data_dir = /nonexistent/data\n");
    let o = randpad(&["train", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o2").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(error_line(&o).starts_with("error: kind=io"), "{}", stderr(&o));

    let busy = tmp.path().join("busy");
    fs::create_dir_all(&busy).unwrap();
    fs::write(busy.join("keep.txt"), "x").unwrap();
    let cfg = write_config(tmp.path(), "ok.cfg", &base_config(&data));
    let o = randpad(&["experiment", "--config", cfg.to_str().unwrap(), "--out", busy.to_str().unwrap(), "--override", "preset=table2-desk"]);
    assert!(!o.status.success());
    assert!(error_line(&o).starts_with("error: kind=output-exists"), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(busy.join("keep.txt")).unwrap(), "x");

    let o = randpad(&["train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_line(&o).starts_with("error: kind=usage"), "{}", stderr(&o));

    let o = randpad(&["probe", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o3").to_str().unwrap(), "--override", "encoders=/nonexistent.rplb"]);
    assert!(!o.status.success());
    assert!(error_line(&o).starts_with("error: kind=io"), "{}", stderr(&o));
}

#[test]
fn probe_grid_rows_and_map_dumps() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 64, 48);
    let cfg_text = format!(
        "{}epochs = 1\nprobe_epochs = 2\nprobe_resize = 8\nprobe_train_images = 16\nprobe_test_images = 8\n",
        base_config(&data)
    );
    let cfg = write_config(tmp.path(), "run.cfg", &cfg_text);
    let mut ckpts = Vec::new();
    for k in ["0", "2"] {
        let out = tmp.path().join(format!("enc{k}"));
        let o = randpad(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--override", &format!("rp_layers={k}")]);
        assert!(o.status.success(), "{}", stderr(&o));
        let dst = tmp.path().join(format!("enc-rp{k}.rplb"));
        fs::copy(out.join("model.rplb"), &dst).unwrap();
        ckpts.push(dst);
    }
    let enc = format!("encoders={},{}", ckpts[0].display(), ckpts[1].display());
    let mut snaps = Vec::new();
    for name in ["p1", "p2"] {
        let out = tmp.path().join(name);
        let o = randpad(&["probe", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--override", &enc, "encoder_rp_layers=0,2"]);
        assert!(o.status.success(), "{}", stderr(&o));
        snaps.push(snapshot(&out));
    }
    assert_eq!(snaps[0], snaps[1]);
    let out = tmp.path().join("p1");
    let csv = fs::read_to_string(out.join("probe.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "encoder_id,padding,pattern,input_kind,spc,mae,seed");
    assert_eq!(lines.len() - 1, 40);
    assert!(lines.iter().any(|l| l.starts_with("enc-rp2,random,VS,noise,")));
    let pgm = fs::read(out.join("maps/enc-rp0_HG_natural.pgm")).unwrap();
    let header = b"P5\n6 6\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(pgm.len(), header.len() + 36);
}

#[test]
fn table3_preset_has_eighteen_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_idx_fixture(&data, 32, 16);
    let cfg = write_config(
        tmp.path(),
        "t3.cfg",
        &format!("{}preset = table3-desk\nseeds = 1\nepochs = 1\n", base_config(&data)),
    );
    let out = tmp.path().join("t3");
    let o = randpad(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count() - 1, 18);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count() - 1, 18);
    assert!(summary.contains("vgg-lite,2,rc+rf+re,"));
    assert_eq!(fs::read_dir(out.join("checkpoints")).unwrap().count(), 18);
    assert_eq!(read_json(&out.join("summary.json"))["scale"], "desk");
}
