use std::path::Path;
use std::process::{Command, Output};

fn forkfuse(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forkfuse"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FORKFUSE_DATA_DIR")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let top = text(&forkfuse(&["--help"], dir.path()).stdout);
    for word in ["synth", "rasterize", "train", "eval", "ablate", "gradcheck", "--seed", "--threads", "--out"] {
        assert!(top.contains(word), "{word} missing from help:\n{top}");
    }
    let cases: [(&str, &[&str]); 6] = [
        ("synth", &["--config", "--scenes", "--occlusion", "--occlusion-fraction"]),
        ("rasterize", &["--cells", "--upsample"]),
        ("train", &["--config", "--data", "--fusion", "--radar-only", "--iterations"]),
        ("eval", &["--checkpoint", "--data", "--split"]),
        ("ablate", &["--kind", "--config", "--data", "--runs", "--kernels", "--no-baseline"]),
        ("gradcheck", &["--tol", "--instances"]),
    ];
    for (cmd, flags) in cases {
        let help = text(&forkfuse(&[cmd, "--help"], dir.path()).stdout);
        for f in flags {
            assert!(help.contains(f), "{cmd} help lacks {f}");
        }
    }
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = forkfuse(&["train", "--config", "missing.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("missing.cfg"));

    let o = forkfuse(&["train", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).to_lowercase().contains("usage"));

    let o = forkfuse(&["eval", "--checkpoint", "x.ffck"], dir.path());
    assert_eq!(o.status.code(), Some(1), "no data directory given");
}

#[test]
fn gradcheck_reports_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = forkfuse(&["gradcheck", "--tol", "1e-4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o.stdout).contains("all families pass"));
    assert!(dir.path().join("run_manifest.txt").is_file());
}

#[test]
fn synth_is_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(forkfuse(&["synth", "--scenes", "3", "--seed", "9"], &a).status.success());
    let manifest = a.join("run_manifest.txt");
    let o = forkfuse(&["synth", "--config", manifest.to_str().unwrap()], &b);
    assert!(o.status.success(), "{}", text(&o.stderr));
    for f in ["manifest.txt", "annotations.txt", "scene_0000.ffck", "scene_0002.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let hash = |p: &Path| {
        std::fs::read_to_string(p.join("run_manifest.txt"))
            .unwrap()
            .lines()
            .find(|l| l.starts_with("run.input_hash"))
            .unwrap()
            .to_string()
    };
    assert_eq!(hash(&a), hash(&b));
}

#[test]
fn synth_train_eval_rasterize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(forkfuse(&["synth", "--scenes", "4", "--occlusion", "radar_blind"], &data).status.success());

    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, "model.width_mult = 1/32\nmodel.block1_repeats = 1\nmodel.block2_repeats = 1\ntrain.batch_size = 2\n").unwrap();
    let run = dir.path().join("run");
    let o = Command::new(env!("CARGO_BIN_EXE_forkfuse"))
        .args(["train", "--config", cfg.to_str().unwrap(), "--iterations", "2", "--fusion", "late", "--out"])
        .arg(&run)
        .env("FORKFUSE_DATA_DIR", &data)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let loss = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(loss.starts_with("iter,total,cls,reg,lr\n"));
    assert_eq!(loss.lines().count(), 3);

    let ckpt = run.join("checkpoint.ffck");
    let o = forkfuse(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", data.to_str().unwrap()], &dir.path().join("ev"));
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("AP@0.5 = "));
    assert!(dir.path().join("ev/pr_curve.csv").is_file());

    let png = dir.path().join("bev.png");
    let o = forkfuse(
        &["rasterize", data.join("scene_0001.bin").to_str().unwrap(), png.to_str().unwrap(), "--cells", "96", "--upsample"],
        &dir.path().join("rs"),
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(png.is_file());
}
