use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn crloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crloc"))
        .args(args)
        .env_remove("CRLOC_CONFIG")
        .env_remove("CRLOC_MODEL")
        .env_remove("CRLOC_FRAMES")
        .output()
        .expect("spawn crloc")
}

fn ok(args: &[&str]) -> Output {
    let out = crloc(args);
    assert!(
        out.status.success(),
        "crloc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file under `dir`, relative path -> bytes.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

const SMALL: &str = r#"
[eval.grid]
radii = [4.0, 10.0]
amplitudes = [50.0, 1000.0]
noise_levels = [0.0, 6.0]
edges = ["none", 0.5]
light_levels = [89.0]

[eval]
stride = [1, 1, 1, 1, 1]
methods = ["threshold", "intensity_com"]
chunk = 3

[train]
epochs_max = 2
samples_per_epoch = 16
validation_size = 8

[finetune]
epochs_max = 2
samples_per_epoch = 16
validation_size = 8

[eye]
fixation_frames = 12
frame_rate_hz = 60.0

[metrics]
window_s = 0.1
"#;

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn synth_is_bitwise_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--stage",
            "2",
            "--n",
            "300",
            "--seed",
            "7",
            "--jobs",
            "1",
            "--out",
            s(d),
        ]);
    }
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.len(), 301);
    assert!(sa == sb, "datasets differ");

    let c = dir.path().join("c");
    ok(&[
        "synth",
        "--stage",
        "2",
        "--n",
        "300",
        "--seed",
        "8",
        "--jobs",
        "1",
        "--out",
        s(&c),
    ]);
    assert!(snapshot(&c) != sa);
}

#[test]
fn outputs_start_with_audit_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("oracle.csv");
    ok(&[
        "eval-oracle",
        "--config",
        s(&cfg),
        "--seed",
        "5",
        "--out",
        s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# crloc "), "{first}");
    assert!(
        first.contains("config_sha256=") && first.ends_with("seed=5"),
        "{first}"
    );
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "r,A,sigma_n,E,I,method,mean_abs_err,max_abs_err,bias,fail_count"
    );
    assert_eq!(text.lines().count(), 2 + 4);
}

#[test]
fn unknown_flag_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let r = crloc(&["eval-oracle", "--out", s(&out), "--frobnicate"]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(stderr(&r).trim().lines().count(), 1, "{}", stderr(&r));
    assert!(stderr(&r).starts_with("crloc: error[2]: usage:"));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_config_key_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train.adam]\nbeta3 = 0.5\n").unwrap();
    let out = dir.path().join("o.csv");
    let r = crloc(&["eval-oracle", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    let msg = stderr(&r);
    assert_eq!(msg.trim().lines().count(), 1, "{msg}");
    assert!(msg.contains("train.adam") && msg.contains("beta3"), "{msg}");
    assert!(!out.exists());

    std::fs::write(&cfg, "[train]\nbatch_size = 0\n").unwrap();
    let r = crloc(&["eval-oracle", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(stderr(&r).contains("batch_size"), "{}", stderr(&r));
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("nope");
    let out = dir.path().join("o.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec!["eval-oracle", "--config", s(&nowhere), "--out", s(&out)],
        vec!["model-info", "--model", s(&nowhere)],
        vec!["pipeline", "--frames", s(&nowhere), "--out", s(&out)],
        vec!["finetune", "--model", s(&nowhere), "--out", s(&out)],
        vec!["metrics", "--input", s(&nowhere), "--out", s(&out)],
    ];
    for args in cases {
        let r = crloc(&args);
        assert_eq!(r.status.code(), Some(3), "{args:?}: {}", stderr(&r));
        assert!(stderr(&r).contains("nope"));
    }
    assert!(!out.exists());
}

#[test]
fn cnn_without_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let r = crloc(&["eval-sweep", "--methods", "threshold,cnn", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2), "{}", stderr(&r));
    assert!(!out.exists());
    let r = crloc(&["eval-sweep", "--methods", "magic", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn eval_sweep_resume_completes_to_the_same_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let full = dir.path().join("full.csv");
    ok(&[
        "eval-sweep",
        "--config",
        s(&cfg),
        "--jobs",
        "1",
        "--out",
        s(&full),
    ]);
    let text = std::fs::read_to_string(&full).unwrap();
    // 16 tuples x 2 methods + header + column names.
    assert_eq!(text.lines().count(), 34);

    // Interrupted mid-tuple with a torn last line.
    let part = dir.path().join("part.csv");
    let cut: String = text
        .lines()
        .take(13)
        .map(|l| format!("{l}\n"))
        .collect::<String>()
        + "10,50,0";
    std::fs::write(&part, cut).unwrap();
    ok(&[
        "eval-sweep",
        "--config",
        s(&cfg),
        "--jobs",
        "1",
        "--resume",
        "--out",
        s(&part),
    ]);
    assert_eq!(std::fs::read_to_string(&part).unwrap(), text);

    // A different seed cannot resume the table.
    let r = crloc(&[
        "eval-sweep",
        "--config",
        s(&cfg),
        "--seed",
        "1",
        "--resume",
        "--out",
        s(&part),
    ]);
    assert_eq!(r.status.code(), Some(2), "{}", stderr(&r));
}

/// synth -> train -> finetune -> pipeline -> calibrate -> metrics, twice,
/// with byte-identical outputs.
#[test]
fn full_workflow_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = s(&cfg);
    let run = |root: &Path| {
        std::fs::create_dir_all(root).unwrap();
        let p = |name: &str| root.join(name);
        let common = ["--config", c, "--seed", "11", "--jobs", "1"];
        let with = |args: &[&str]| {
            let mut v: Vec<&str> = args.to_vec();
            v.extend_from_slice(&common);
            ok(&v)
        };
        with(&[
            "train",
            "--out",
            s(&p("s1.crcnn")),
            "--report",
            s(&p("s1.csv")),
        ]);
        with(&[
            "finetune",
            "--model",
            s(&p("s1.crcnn")),
            "--out",
            s(&p("s2.crcnn")),
            "--report",
            s(&p("s2.csv")),
        ]);
        with(&["synth", "--kind", "eye", "--out", s(&p("eye"))]);
        with(&[
            "pipeline",
            "--frames",
            s(&p("eye")),
            "--refiner",
            "cnn",
            "--model",
            s(&p("s2.crcnn")),
            "--out",
            s(&p("frames.csv")),
        ]);
        with(&[
            "pipeline",
            "--frames",
            s(&p("eye")),
            "--refiner",
            "radial_symmetry",
            "--downsample",
            "2",
            "--out",
            s(&p("frames_half.csv")),
        ]);
        with(&[
            "calibrate",
            "--input",
            s(&p("frames.csv")),
            "--targets",
            s(&p("eye/targets.csv")),
            "--out",
            s(&p("cal.toml")),
        ]);
        with(&[
            "metrics",
            "--input",
            s(&p("frames.csv")),
            s(&p("eye/truth.csv")),
            "--calibration",
            s(&p("cal.toml")),
            "--targets",
            s(&p("eye/targets.csv")),
            "--out",
            s(&p("metrics.csv")),
        ]);
        let info = with(&["model-info", "--model", s(&p("s2.crcnn"))]);
        std::fs::write(p("info.txt"), info.stdout).unwrap();
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.len(), sb.len());
    for ((pa, da), (pb, db)) in sa.iter().zip(&sb) {
        assert_eq!(pa, pb);
        assert!(da == db, "{} differs between runs", pa.display());
    }

    let info = std::fs::read_to_string(a.join("info.txt")).unwrap();
    assert!(info.contains("frozen_layers = [0, 3]"), "{info}");
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(2).collect();
    assert_eq!(rows.len(), 3, "{metrics}");
    assert!(rows[0].starts_with("frames,threshold,") && rows[1].starts_with("frames,cnn,"));
    assert!(rows[2].starts_with("truth,truth,"));
    let frames = std::fs::read_to_string(a.join("frames_half.csv")).unwrap();
    assert!(frames
        .lines()
        .nth(1)
        .unwrap()
        .contains("cr_radial_symmetry_x"));
}
