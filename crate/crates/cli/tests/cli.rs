use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use texrel::oracle::LanguageSpec;
use texrel::sampler::SplitKind;
use texrel_cli::{parse_command, CliCommand, ParseOutcome};

fn texrel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_texrel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path, task: &str, train: usize) -> PathBuf {
    let path = dir.join(format!("{task}.json"));
    let cfg = format!(
        r#"{{
  "task": {{"task": "{task}", "arity": 2, "num_colors": 9, "num_textures": 9}},
  "examples_per_split": {{"train": {train}, "val_same": 10, "test_same": 10, "val_new": 10, "test_new": 10}},
  "images_per_side": 8,
  "positives_per_side": 4,
  "master_seed": 5
}}"#
    );
    std::fs::write(&path, cfg).unwrap();
    path
}

fn generate(dir: &Path, task: &str, extra: &[&str]) -> PathBuf {
    generate_sized(dir, task, 40, extra)
}

fn generate_sized(dir: &Path, task: &str, train: usize, extra: &[&str]) -> PathBuf {
    let cfg = small_config(dir, task, train);
    let out = dir.join(format!("{task}-{}.txr", extra.join("")));
    let mut args = vec![
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = texrel(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn parses_documented_commands() {
    let inv =
        parse_command(["texrel", "generate", "--config", "c.json", "--out", "d.txr"]).unwrap();
    assert_eq!(
        inv.command,
        CliCommand::Generate {
            config: "c.json".into(),
            out: "d.txr".into(),
            seed: None
        }
    );
    let inv = parse_command(["texrel", "validate", "d.txr"]).unwrap();
    assert_eq!(
        inv.command,
        CliCommand::Validate {
            path: "d.txr".into()
        }
    );
    let inv = parse_command([
        "texrel",
        "metrics",
        "d.txr",
        "--language",
        "noisy:0.25",
        "--split",
        "val_new",
        "--threads",
        "3",
    ])
    .unwrap();
    assert_eq!(inv.threads, Some(3));
    match inv.command {
        CliCommand::Metrics {
            language, split, ..
        } => {
            assert_eq!(language, LanguageSpec::Noisy(0.25));
            assert_eq!(split, SplitKind::ValNew);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn rejects_bad_usage() {
    for argv in [
        vec!["texrel", "frobnicate"],
        vec!["texrel", "validate"],
        vec!["texrel", "validate", "d.txr", "--bogus"],
        vec!["texrel", "oracle-eval", "d.txr", "--language", "klingon"],
        vec!["texrel", "metrics", "d.txr", "--split", "dev"],
        vec!["texrel", "validate", "d.txr", "--threads", "0"],
    ] {
        assert!(
            matches!(parse_command(argv.clone()), Err(ParseOutcome::Usage(_))),
            "{argv:?}"
        );
    }
    assert_eq!(code(&texrel(&["frobnicate"])), 2);
    assert_eq!(code(&texrel(&["--help"])), 0);
}

#[test]
fn generate_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "texcol", &[]);
    let o = texrel(&["validate", ds.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("soundness 1.0000"), "{}", stdout(&o));

    let report = dir.path().join("stats.json");
    let o = texrel(&[
        "stats",
        ds.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["splits"].as_array().unwrap().len(), 5);
}

#[test]
fn seed_and_threads_flags() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(generate(dir.path(), "rel", &["--threads", "1"])).unwrap();
    let b = std::fs::read(generate(dir.path(), "rel", &["--threads", "8"])).unwrap();
    assert_eq!(a, b);
    let c = std::fs::read(generate(dir.path(), "rel", &["--seed", "6"])).unwrap();
    assert_ne!(a, c);
}

#[test]
fn damaged_files_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "col", &[]);
    let bytes = std::fs::read(&ds).unwrap();
    let bad = dir.path().join("bad.txr");

    let mut flipped = bytes.clone();
    let n = flipped.len();
    flipped[n - 10] ^= 0xff;
    std::fs::write(&bad, &flipped).unwrap();
    let o = texrel(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));

    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    let o = texrel(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));

    let mut magic = bytes.clone();
    magic[0] = b'X';
    std::fs::write(&bad, &magic).unwrap();
    let o = texrel(&["validate", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("magic"));

    assert_eq!(
        code(&texrel(&[
            "stats",
            dir.path().join("missing.txr").to_str().unwrap()
        ])),
        3
    );
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"task": {"task": "col", "arity": 0, "num_colors": 9, "num_textures": 9}, "images_per_side": 8, "positives_per_side": 4, "master_seed": 1}"#).unwrap();
    let out = dir.path().join("x.txr");
    let o = texrel(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    std::fs::write(&cfg, "not json").unwrap();
    let o = texrel(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn export_writes_images_and_annotation() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(dir.path(), "rel", &[]);
    let out = dir.path().join("ppm");
    let o = texrel(&[
        "export-ppm",
        ds.to_str().unwrap(),
        "--example",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let ppms = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "ppm")
        })
        .count();
    assert_eq!(ppms, 16);
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("annotation.json")).unwrap()).unwrap();
    let english = meta["english"].as_str().unwrap();
    assert!(stdout(&o).starts_with(english));
    assert!(
        english.contains(" above ") || english.contains(" right-of "),
        "{english}"
    );
    let o = texrel(&[
        "export-ppm",
        ds.to_str().unwrap(),
        "--example",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn oracle_and_metrics_reports() {
    let dir = tempfile::tempdir().unwrap();
    // Enough training examples that some meanings repeat, so precision is defined.
    let ds = generate_sized(dir.path(), "texcol", 300, &[]);
    let p = ds.to_str().unwrap();

    let rep = dir.path().join("eval.json");
    let o = texrel(&["oracle-eval", p, "--report", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&rep).unwrap()).unwrap();
    for split in SplitKind::ALL {
        assert_eq!(v["splits"][split.name()]["accuracy"], 1.0);
    }

    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    for (m, threads) in [(&m1, "1"), (&m2, "4")] {
        let o = texrel(&[
            "metrics",
            p,
            "--language",
            "compositional",
            "--split",
            "train",
            "--report",
            m.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(&m1).unwrap();
    assert_eq!(a, std::fs::read(&m2).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["rho"], 1.0);
    assert_eq!(v["rho_defined"], true);
    assert_eq!(v["precision"], 1.0);
    assert_eq!(v["generalization_error"], 0.0);

    let o = texrel(&["metrics", p, "--language", "constant", "--split", "train"]);
    assert_eq!(code(&o), 0);
    assert!(
        stdout(&o).contains("rho        undefined"),
        "{}",
        stdout(&o)
    );
}
